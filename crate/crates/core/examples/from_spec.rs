//! Drives the library from a spec file, as the command-line tool does.
//!
//! `cargo run --example from_spec -- crates/core/examples/specs/periodic_drift.toml`

use std::path::PathBuf;

use charflow::characteristics::FlowMap;
use charflow::hjb::{solve_hjb, viscosity_residual};
use charflow::spec::ProblemSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/specs/quadratic_1d.toml"));
    let spec = ProblemSpec::load(&path)?;
    let prob = spec.control_problem()?;
    println!("{}: n = {}, m = {}, horizon {}", path.display(), prob.n(), prob.m(), prob.horizon());

    if let Some(h) = &spec.hamiltonian {
        let e = prob.hamiltonian(&h.x, &h.p, h.t)?;
        println!("H({:?}, {:?}) = {}", h.x, h.p, e.value);
    }
    if let Some(c) = &spec.characteristics {
        if let (_, Some(grid)) = spec.seed_points(c)? {
            let flow = FlowMap::build(&prob, &spec.state_expr(&c.u0)?, grid, c.horizon, c.dt)?;
            println!("characteristics: T* = {}", flow.t_star);
        }
    }
    if let Some(h) = &spec.hjb {
        let grid = spec.hjb_grid(h, &prob)?;
        let horizon = h.horizon.unwrap_or(prob.horizon());
        let vg = solve_hjb(&prob, &spec.state_expr(&h.phi0)?, &grid, horizon, h.dt, &ProblemSpec::hjb_settings(h))?;
        let r = viscosity_residual(&vg, &prob)?;
        println!("hjb: {} slices on {} nodes, residual median {:.2e}", vg.values.len(), grid.len(), r.median);
    }
    if let Some(t) = &spec.transport {
        let (mu0, mu1) = (spec.measure(&t.mu0)?, spec.measure(&t.mu1)?);
        println!("transport: {} -> {} atoms", mu0.len(), mu1.len());
    }
    Ok(())
}
