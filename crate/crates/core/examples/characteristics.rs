//! Characteristics of `u_t + H(x, u_x) = 0` for the quadratic Hamiltonian:
//! focusing data develops a caustic at `t = 1`, expanding data does not.

use charflow::characteristics::{caustic_time, integrate_characteristic, FlowMap, SeedGrid};
use charflow::expr::{Dims, Expr};
use charflow::problem::ControlProblem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prob = ControlProblem::quadratic(1, -4.0, 4.0);
    let dims = Dims::new(1, 1);
    let focusing = Expr::parse("-x0^2/2", dims)?;
    let expanding = Expr::parse("x0^2/2", dims)?;
    let seeds = SeedGrid::new(vec![-1.0], vec![1.0], vec![41])?;

    let tr = integrate_characteristic(&prob, &focusing, &[0.8], 0.5, 1e-3)?;
    let end = tr.last();
    println!("from z = 0.8: X(0.5) = {:.10} (exact 0.4), P = {:.3}, U = {:.10}", end.x[0], end.p[0], end.value);

    let t_star = caustic_time(&prob, &focusing, seeds.clone(), 1.5, 1e-3)?;
    println!("focusing data: T* = {t_star}");
    let t_star = caustic_time(&prob, &expanding, seeds.clone(), 2.0, 1e-3)?;
    println!("expanding data: no crossing up to {t_star}");

    // u(t, x) from the flow; the viscosity solution here is x^2 / (2 (1 + t))
    let flow = FlowMap::build(&prob, &expanding, seeds, 1.0, 1e-2)?;
    for x in [-0.9, 0.0, 0.5, 1.5] {
        let v = flow.reconstruct(1.0, &[x])?;
        println!("u(1, {x:>4}) = {v:.6}   exact {:.6}", x * x / 4.0);
    }
    Ok(())
}
