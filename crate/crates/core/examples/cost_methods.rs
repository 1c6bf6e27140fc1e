//! Minimum-cost computations `c(x, y)` by shooting, direct transcription and
//! the grid dynamic program, on problems with known answers.

use charflow::cost::{
    cost, cost_dp_oracle, cost_shooting, cost_transcription, CostPolicy, CostQuery, OracleSettings, ShootingSettings,
    TranscriptionSettings,
};
use charflow::problem::{Boundary, ControlProblem, ControlSet, StateBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let quad = ControlProblem::quadratic(1, -2.0, 2.0);
    let q = CostQuery::new(vec![-0.6], vec![0.9]);
    let exact = 1.5f64.powi(2) / 2.0;
    let shoot = cost_shooting(&quad, &q, &ShootingSettings::default())?;
    let trans = cost_transcription(&quad, &q, &TranscriptionSettings::default())?;
    let dp = cost_dp_oracle(&quad, &q, &OracleSettings::default())?;
    println!("quadratic family, -0.6 -> 0.9 (exact {exact})");
    println!("  shooting      {}  p0 = {:?}", shoot.value, shoot.p0.unwrap());
    println!("  transcription {}  terminal gap {:.1e}", trans.value, trans.terminal_gap);
    println!("  grid oracle   {dp}");

    // minimum energy to bring a double integrator to rest at the origin
    let di = ControlProblem::parse(
        &["x1", "u0"],
        "u0^2/2",
        ControlSet::unbounded(1),
        StateBox::new(vec![-3.0, -3.0], vec![3.0, 3.0])?,
        1.0,
        Boundary::Clamp,
    )?;
    let r = cost(&di, &CostQuery::new(vec![1.0, 0.0], vec![0.0, 0.0]), &CostPolicy::default())?;
    println!("double integrator (1, 0) -> (0, 0): {} by {}", r.value, r.method);

    // with |u| <= 0.5 the far target is out of reach in unit time
    let slow = quad.clone().with_controls(ControlSet::symmetric(1, 0.5))?;
    for y in [0.3, 1.5] {
        let r = cost(&slow, &CostQuery::new(vec![0.0], vec![y]), &CostPolicy::default())?;
        println!("|u| <= 0.5, 0 -> {y}: {}", r.value);
    }
    Ok(())
}
