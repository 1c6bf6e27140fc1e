use charflow::expr::{Dims, Expr};
use charflow::grid::Grid;
use charflow::hjb::{hopf_lax_oracle, sample_on_grid, solve_hjb, HjbSettings, SemigroupOp};
use charflow::problem::{Boundary, ControlProblem};
use proptest::prelude::*;

fn quad() -> ControlProblem {
    ControlProblem::quadratic(1, -2.0, 2.0)
}

fn phi(s: &str) -> Expr {
    Expr::parse(s, Dims::new(1, 1)).unwrap()
}

fn sup_error_vs_hopf_lax(h: f64, dt: f64) -> f64 {
    let prob = quad();
    let p = phi("x0^2/2");
    let grid = Grid::with_spacing(prob.domain(), h, Boundary::Clamp).unwrap();
    let vg = solve_hjb(&prob, &p, &grid, 1.0, dt, &HjbSettings::default()).unwrap();
    grid.nodes()
        .iter()
        .zip(vg.last())
        .map(|(x, v)| (v - hopf_lax_oracle(&prob, &p, 1.0, x).unwrap()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn semigroup_composition() {
    let prob = quad();
    let grid = Grid::with_spacing(prob.domain(), 0.02, Boundary::Clamp).unwrap();
    let op = SemigroupOp::new(&prob, grid.clone(), 0.01);
    for data in ["x0^2/2", "abs(x0)", "sin(2*x0)"] {
        let v0 = sample_on_grid(&phi(data), &grid).unwrap();
        let whole = op.apply(&v0, 1.0).unwrap();
        let halves = op.apply(&op.apply(&v0, 0.5).unwrap(), 0.5).unwrap();
        let gap = whole.iter().zip(&halves).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-2, "{data}: {gap}");
    }
}

#[test]
fn refinement_reduces_the_error() {
    let coarse = sup_error_vs_hopf_lax(0.02, 0.01);
    let fine = sup_error_vs_hopf_lax(0.01, 0.005);
    assert!(coarse <= 1e-2, "{coarse}");
    assert!(coarse / fine >= 1.5, "{coarse} -> {fine}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn comparison_principle(
        base in prop::collection::vec(-1.0f64..1.0, 81),
        bump in prop::collection::vec(0.0f64..0.5, 81),
    ) {
        let prob = quad();
        let grid = Grid::with_spacing(prob.domain(), 0.05, Boundary::Clamp).unwrap();
        let settings = HjbSettings { argmax_injection: false, ..HjbSettings::default() };
        let op = SemigroupOp::new(&prob, grid, 0.025).with_settings(settings);
        let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let ta = op.apply(&base, 0.5).unwrap();
        let tb = op.apply(&upper, 0.5).unwrap();
        prop_assert!(ta.iter().zip(&tb).all(|(x, y)| *x <= y + 1e-9));
    }

    #[test]
    fn constants_commute_with_the_flow(c in -3.0f64..3.0) {
        let prob = quad();
        let grid = Grid::with_spacing(prob.domain(), 0.05, Boundary::Clamp).unwrap();
        let op = SemigroupOp::new(&prob, grid.clone(), 0.025);
        let v = sample_on_grid(&phi("sin(3*x0)"), &grid).unwrap();
        let shifted: Vec<f64> = v.iter().map(|a| a + c).collect();
        let ta = op.apply(&v, 0.5).unwrap();
        let tb = op.apply(&shifted, 0.5).unwrap();
        prop_assert!(ta.iter().zip(&tb).all(|(x, y)| (x + c - y).abs() <= 1e-9));
    }
}
