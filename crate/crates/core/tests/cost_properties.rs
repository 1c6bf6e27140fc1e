use charflow::characteristics::integrate_from;
use charflow::cost::{
    cost, cost_dp_oracle, cost_shooting, cost_transcription, Cost, CostPolicy, CostQuery, OracleSettings, ShootingSettings,
    TranscriptionSettings,
};
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

fn value(prob: &ControlProblem, q: &CostQuery) -> f64 {
    cost(prob, q, &CostPolicy::default()).unwrap().value.finite().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn methods_agree_on_the_quadratic_family(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let prob = ControlProblem::quadratic(1, -2.0, 2.0);
        let q = CostQuery::new(vec![x], vec![y]);
        let s = cost_shooting(&prob, &q, &ShootingSettings::default()).unwrap().value.finite().unwrap();
        let t = cost_transcription(&prob, &q, &TranscriptionSettings::default()).unwrap().value.finite().unwrap();
        let o = cost_dp_oracle(&prob, &q, &OracleSettings::default()).unwrap().finite().unwrap();
        prop_assert!((s - t).abs() <= 1e-3, "{} vs {}", s, t);
        prop_assert!(s >= o - 5e-3, "{} vs oracle {}", s, o);
    }

    #[test]
    fn optimality_principle(x in -1.0f64..1.0, z in -1.0f64..1.0, s in 0.2f64..0.8) {
        let prob = build(&["(2 + sin(x0))*u0"], "u0^2/2 + x0^2/2", ControlSet::unbounded(1), 3.0);
        let whole = value(&prob, &CostQuery::new(vec![x], vec![z]));
        for k in 0..=8 {
            let y = -1.5 + 0.375 * k as f64;
            let first = value(&prob, &CostQuery::new(vec![x], vec![y]).over(0.0, s));
            let second = value(&prob, &CostQuery::new(vec![y], vec![z]).over(s, 1.0));
            prop_assert!(whole <= first + second + 5e-3, "via {}: {} > {} + {}", y, whole, first, second);
        }
    }

    #[test]
    fn radial_costs_are_symmetric(a in prop::collection::vec(-1.0f64..1.0, 2), b in prop::collection::vec(-1.0f64..1.0, 2)) {
        let prob = build(&["u0", "u1"], "u0^2 + u1^2", ControlSet::unbounded(2), 3.0);
        let ab = value(&prob, &CostQuery::new(a.clone(), b.clone()));
        let ba = value(&prob, &CostQuery::new(b, a));
        prop_assert!((ab - ba).abs() <= 1e-6, "{} vs {}", ab, ba);
    }
}

proptest! {
    // the numeric Hamiltonian makes each query take about a second
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn quartic_radial_cost_is_symmetric(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let prob = build(&["u0"], "u0^2/2 + u0^4/8", ControlSet::unbounded(1), 3.0);
        let xy = value(&prob, &CostQuery::new(vec![x], vec![y]));
        let yx = value(&prob, &CostQuery::new(vec![y], vec![x]));
        let d = (x - y).abs();
        prop_assert!((xy - yx).abs() <= 1e-6, "{} vs {}", xy, yx);
        prop_assert!((xy - (d * d / 2.0 + d.powi(4) / 8.0)).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shooting_costate_reproduces_the_cost(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let prob = build(&["x0 + u0"], "u0^2/2 + cos(x0)", ControlSet::unbounded(1), 3.0);
        let settings = ShootingSettings::default();
        let q = CostQuery::new(vec![x], vec![y]);
        let r = cost_shooting(&prob, &q, &settings).unwrap();
        let p0 = r.p0.clone().unwrap();
        let tr = integrate_from(&prob, &[x], &p0, 0.0, 0.0, 1.0, settings.dt).unwrap();
        let last = tr.last();
        prop_assert!((last.value - r.value.finite().unwrap()).abs() <= 1e-8);
        prop_assert!((last.x[0] - y).abs() <= 1e-6);
        let path_end = &r.trajectory.last().unwrap().1;
        prop_assert!((path_end[0] - y).abs() <= 1e-6);
    }
}

#[test]
fn unreachable_targets_are_infeasible() {
    let prob = build(&["u0"], "u0^2/2", ControlSet::symmetric(1, 0.5), 2.0);
    let far = cost(&prob, &CostQuery::new(vec![-1.0], vec![1.0]), &CostPolicy::default()).unwrap();
    assert_eq!(far.value, Cost::Infeasible);
    let near = cost(&prob, &CostQuery::new(vec![-0.2], vec![0.2]), &CostPolicy::default()).unwrap();
    assert!((near.value.finite().unwrap() - 0.08).abs() < 1e-3);
}
