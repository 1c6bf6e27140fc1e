use charflow::characteristics::{integrate_characteristic, integrate_from, FlowMap, SeedGrid};
use charflow::expr::{Dims, Expr};
use charflow::grid::Grid;
use charflow::hjb::{hopf_lax_oracle, solve_hjb, HjbSettings};
use charflow::problem::{Boundary, ControlProblem, ControlSet, StateBox};
use proptest::prelude::*;

fn build(f: &[&str], l: &str, controls: ControlSet, r: f64) -> ControlProblem {
    let n = f.len();
    ControlProblem::parse(
        f,
        l,
        controls,
        StateBox::new(vec![-r; n], vec![r; n]).unwrap(),
        1.0,
        Boundary::Clamp,
    )
    .unwrap()
}

/// Autonomous problems with state-dependent Hamiltonians.
fn autonomous() -> Vec<ControlProblem> {
    vec![
        ControlProblem::quadratic(2, -10.0, 10.0),
        build(&["(2 + sin(x0))*u0"], "u0^2/2 - cos(x0)", ControlSet::unbounded(1), 10.0),
        build(&["u0", "x0 - x1 + u1"], "u0^2/2 + u1^2/2 + x0^2*x1^2/4", ControlSet::unbounded(2), 10.0),
    ]
}

fn data(n: usize, s: &str) -> Expr {
    Expr::parse(s, Dims::new(n, n)).unwrap()
}

/// Composite Simpson over equally spaced samples (odd count).
fn simpson(values: &[f64], h: f64) -> f64 {
    let last = values.len() - 1;
    let inner: f64 = values[1..last]
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    h / 3.0 * (values[0] + inner + values[last])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_conserved(which in 0usize..3, z in prop::collection::vec(-1.0f64..1.0, 2)) {
        let prob = &autonomous()[which];
        let n = prob.n();
        let u0 = data(n, if n == 1 { "0.4*sin(x0)" } else { "0.3*sin(x0)*cos(x1) + x1^2/4" });
        let tr = integrate_characteristic(prob, &u0, &z[..n], 1.0, 1e-3).unwrap();
        let h0 = prob.hamiltonian(&tr.states[0].x, &tr.states[0].p, 0.0).unwrap().value;
        for s in &tr.states {
            let h = prob.hamiltonian(&s.x, &s.p, s.t).unwrap().value;
            prop_assert!((h - h0).abs() <= 1e-6, "t = {}: {} vs {}", s.t, h, h0);
        }
    }

    #[test]
    fn value_carries_the_action_integral(which in 0usize..3, z in prop::collection::vec(-1.0f64..1.0, 2)) {
        let prob = &autonomous()[which];
        let n = prob.n();
        let u0 = data(n, if n == 1 { "cos(x0)" } else { "x0*x1/2" });
        let tr = integrate_characteristic(prob, &u0, &z[..n], 1.0, 1e-3).unwrap();
        let integrand: Vec<f64> = tr
            .states
            .iter()
            .map(|s| {
                let h = prob.hamiltonian(&s.x, &s.p, s.t).unwrap();
                s.p.iter().zip(&h.hp).map(|(a, b)| a * b).sum::<f64>() - h.value
            })
            .collect();
        let expected = simpson(&integrand, tr.dt);
        let got = tr.last().value - tr.states[0].value;
        prop_assert!((got - expected).abs() <= 1e-6, "{} vs {}", got, expected);
    }
}

#[test]
fn rk4_is_fourth_order() {
    // pendulum-like dynamics so the step error is not identically zero
    let prob = build(&["u0"], "u0^2/2 - cos(x0)", ControlSet::unbounded(1), 10.0);
    let end = |dt: f64| {
        let s = integrate_from(&prob, &[0.3], &[1.1], 0.0, 0.0, 1.0, dt).unwrap();
        let last = s.last().clone();
        (last.x[0], last.p[0])
    };
    let base = 0.1;
    let reference = end(base / 8.0);
    let err = |dt: f64| {
        let (x, p) = end(dt);
        (x - reference.0).hypot(p - reference.1)
    };
    let ratio = err(base) / err(base / 2.0);
    assert!(ratio >= 12.0, "ratio {ratio}");
}

#[test]
fn reconstruction_agrees_with_the_grid_solver() {
    let prob = ControlProblem::quadratic(1, -3.0, 3.0);
    let u0 = data(1, "0.3*cos(x0)");
    let seeds = SeedGrid::new(vec![-3.0], vec![3.0], vec![301]).unwrap();
    let flow = FlowMap::build(&prob, &u0, seeds, 1.0, 1e-2).unwrap();
    // first crossing of z -> z - 0.3 t sin z is at t = 1/0.3
    assert_eq!(flow.t_star, 1.0);
    let grid = Grid::with_spacing(prob.domain(), 0.02, Boundary::Clamp).unwrap();
    let vg = solve_hjb(&prob, &u0, &grid, 1.0, 0.01, &HjbSettings::default()).unwrap();
    for k in [25usize, 50, 100] {
        let t = vg.times[k];
        let (mut against_chars, mut scheme) = (0.0f64, 0.0f64);
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            let v = vg.at(k, &[x]);
            against_chars = against_chars.max((v - flow.reconstruct(t, &[x]).unwrap()).abs());
            scheme = scheme.max((v - hopf_lax_oracle(&prob, &u0, t, &[x]).unwrap()).abs());
        }
        assert!(against_chars <= scheme.max(5e-3), "t = {t}: {against_chars} vs scheme {scheme}");
        assert!(against_chars <= 1e-2);
    }
}
