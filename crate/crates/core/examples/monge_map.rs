//! Monge map between quantile discretizations of N(0, 1) and N(1, 4): the
//! optimal plan, its potentials, and the map recovered by flowing each atom
//! along the characteristic started at the potential's gradient.

use charflow::cost::{cost_matrix, CostPolicy};
use charflow::problem::ControlProblem;
use charflow::transport::{
    centered_potentials, initial_measure_action, monge_map, solve_mk, wasserstein1, DiscreteMeasure, MongeSettings,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 60;
    let prob = ControlProblem::quadratic(1, -8.0, 8.0);
    let mu0 = DiscreteMeasure::gaussian_quantiles(0.0, 1.0, n)?;
    let mu1 = DiscreteMeasure::gaussian_quantiles(1.0, 2.0, n)?;

    let c = cost_matrix(&prob, mu0.atoms(), mu1.atoms(), &CostPolicy::default())
        .arc_costs()
        .map_err(|(i, j, e)| format!("cost ({i}, {j}): {e}"))?;
    let plan = solve_mk(&c, &mu0, &mu1)?;
    let pair = centered_potentials(&plan, &c);
    let map = monge_map(&prob, &mu0, &mu1, &c, &pair, &MongeSettings::default())?;

    for e in map.entries.iter().step_by(n / 6) {
        println!("T({:>7.4}) = {:>8.5}   1 + 2x = {:>8.5}   p0 = {:.5}", e.x[0], e.image[0], 1.0 + 2.0 * e.x[0], e.p0[0]);
    }
    let w1 = wasserstein1(&map.pushforward()?, &mu1)?;
    let action = initial_measure_action(&map, |x, y| Ok::<_, ()>((x[0] - y[0]).powi(2) / 2.0)).unwrap();
    println!("W1(T#mu0, mu1) = {w1:.2e}, skipped mass {}", map.skipped_mass);
    println!("action {action:.8}, LP objective {:.8}", plan.objective);
    Ok(())
}
