//! Evaluates `H(x, p)` for a few control problems: the closed form on the
//! quadratic family, a box-clamped maximizer, and the numeric search.

use charflow::problem::{check_assumptions, Boundary, ControlProblem, ControlSet, StateBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let domain = || StateBox::new(vec![-2.0], vec![2.0]);

    let free = ControlProblem::quadratic(1, -2.0, 2.0);
    let boxed = free.clone().with_controls(ControlSet::symmetric(1, 1.0))?;
    let exponential =
        ControlProblem::parse(&["u0"], "exp(u0)", ControlSet::unbounded(1), domain()?, 1.0, Boundary::Clamp)?;
    let state_dependent = ControlProblem::parse(
        &["x0*u0"],
        "u0^2/2 + x0^2/2",
        ControlSet::unbounded(1),
        domain()?,
        1.0,
        Boundary::Clamp,
    )?;

    let cases = [
        ("f = u, L = u^2/2", &free),
        ("same, |u| <= 1", &boxed),
        ("f = u, L = exp(u)", &exponential),
        ("f = x u, L = (u^2 + x^2)/2", &state_dependent),
    ];
    let (x, p) = ([0.5], [2.0]);
    println!("x = {x:?}, p = {p:?}");
    for (name, prob) in cases {
        let h = prob.hamiltonian(&x, &p, 0.0)?;
        println!(
            "{name:<28} closed form: {:<5} H = {:.10}  u* = {:.8}  Hx = {:.6}  Hp = {:.6}",
            prob.has_closed_form_hamiltonian(),
            h.value,
            h.argmax[0],
            h.hx[0],
            h.hp[0],
        );
    }

    // sampled advisories for the standing assumptions
    let report = check_assumptions(&state_dependent, 500, 1);
    println!("\nadvisories for f = x u: passed = {}", report.passed());
    for w in &report.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
