use charflow::problem::{Boundary, ControlProblem, ControlSet, StateBox};
use proptest::prelude::*;

fn build(f: &[&str], l: &str, controls: ControlSet) -> ControlProblem {
    let n = f.len();
    ControlProblem::parse(
        f,
        l,
        controls,
        StateBox::new(vec![-2.0; n], vec![2.0; n]).unwrap(),
        1.0,
        Boundary::Clamp,
    )
    .unwrap()
}

/// A mix of closed-form and numeric problems in two state dimensions.
fn problems() -> Vec<ControlProblem> {
    vec![
        ControlProblem::quadratic(2, -2.0, 2.0),
        build(&["u0", "u1"], "u0^2/2 + u1^2/2", ControlSet::symmetric(2, 1.0)),
        build(
            &["sin(x1) + (2 + cos(x0))*u0", "x0*u1"],
            "(1 + x0^2)*u0^2/2 + u1^2 + x1^2*t",
            ControlSet::new(vec![-1.5, -0.5], vec![1.0, 2.0]).unwrap(),
        ),
        build(&["u0", "x0 + u1"], "exp(u0) + exp(-u0) + u1^4/4", ControlSet::unbounded(2)),
        build(&["tanh(u0)", "u1 - x1"], "u0^2/2 + abs(u1)", ControlSet::symmetric(2, 1.0)),
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vec2(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn value_dominates_every_admissible_control(
        which in 0usize..5,
        x in vec2(2.0),
        p in vec2(2.0),
        t in 0.0f64..1.0,
        w in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        let prob = &problems()[which];
        let ctrl = prob.controls();
        let u: Vec<f64> = (0..2)
            .map(|k| {
                let lo = ctrl.lo()[k].max(-5.0);
                let hi = ctrl.hi()[k].min(5.0);
                lo + w[k] * (hi - lo)
            })
            .collect();
        let h = prob.hamiltonian(&x, &p, t).unwrap();
        prop_assert!(ctrl.contains(&h.argmax));
        let at_u = dot(&p, &prob.dynamics(&x, &u).unwrap()) - prob.running_cost(&x, &u, t).unwrap();
        prop_assert!(h.value + 1e-7 >= at_u, "H = {} < {} at u = {:?}", h.value, at_u, u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn convex_in_p(which in 0usize..5, x in vec2(2.0), p1 in vec2(3.0), p2 in vec2(3.0), t in 0.0f64..1.0) {
        let prob = &problems()[which];
        let mid: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| 0.5 * (a + b)).collect();
        let h = |p: &[f64]| prob.hamiltonian(&x, p, t).unwrap().value;
        prop_assert!(h(&mid) <= 0.5 * (h(&p1) + h(&p2)) + 1e-7);
    }

    #[test]
    fn closed_form_matches_numeric_search(x in vec2(2.0), p in vec2(2.0), t in 0.0f64..1.0) {
        let controls = || ControlSet::new(vec![-1.5, -3.0], vec![1.0, 3.0]).unwrap();
        let f = ["sin(x1) + (2 + cos(x0))*u0", "x0*u1"];
        let closed = build(&f, "(1 + x0^2)*u0^2/2 + u1^2 + x1^2", controls());
        // the same cost written so the structural detection fails
        let numeric = build(&f, "log(exp((1 + x0^2)*u0^2/2)) + u1^2 + x1^2", controls());
        prop_assert!(closed.has_closed_form_hamiltonian());
        prop_assert!(!numeric.has_closed_form_hamiltonian());
        let a = closed.hamiltonian(&x, &p, t).unwrap();
        let b = numeric.hamiltonian(&x, &p, t).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-6, "{:?} vs {:?}", a, b);
        for k in 0..2 {
            prop_assert!((a.argmax[k] - b.argmax[k]).abs() <= 1e-4);
        }
    }

    #[test]
    fn hp_matches_finite_difference_at_interior_argmax(which in 0usize..5, x in vec2(2.0), p in vec2(2.0), t in 0.0f64..1.0) {
        let prob = &problems()[which];
        let h = prob.hamiltonian(&x, &p, t).unwrap();
        let ctrl = prob.controls();
        let interior = (0..2).all(|k| h.argmax[k] > ctrl.lo()[k] + 1e-3 && h.argmax[k] < ctrl.hi()[k] - 1e-3);
        // abs(u1) has its kink at 0; skip argmaxes sitting on it
        let kinked = which == 4 && h.argmax[1].abs() < 1e-3;
        prop_assume!(interior && !kinked);
        let step = 1e-5;
        for k in 0..2 {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[k] += step;
            lo[k] -= step;
            let fd = (prob.hamiltonian(&x, &hi, t).unwrap().value - prob.hamiltonian(&x, &lo, t).unwrap().value) / (2.0 * step);
            prop_assert!((fd - h.hp[k]).abs() <= 1e-4, "axis {}: fd {} vs {}", k, fd, h.hp[k]);
        }
    }
}

#[test]
fn quadratic_family_closed_values() {
    let free = ControlProblem::quadratic(3, -1.0, 1.0);
    let h = free.hamiltonian(&[0.1, 0.2, 0.3], &[1.0, -2.0, 0.5], 0.0).unwrap();
    assert!((h.value - 2.625).abs() < 1e-12);
    assert_eq!(h.hp, vec![1.0, -2.0, 0.5]);
}
