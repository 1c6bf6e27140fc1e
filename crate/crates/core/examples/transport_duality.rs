//! Exact discrete transport with its Kantorovich certificates: marginals,
//! strong duality, the support condition and pointwise duality.

use charflow::transport::{
    c_transform_backward, c_transform_forward, centered_potentials, check_support_condition, dual_potentials,
    duality_gap, pointwise_duality, solve_mk, DiscreteMeasure,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xs = [-1.0, -0.2, 0.4, 1.3, 2.0];
    let ys = [-0.5, 0.1, 0.8, 2.5];
    let mu0 = DiscreteMeasure::new(xs.iter().map(|x| vec![*x]).collect(), vec![0.1, 0.3, 0.2, 0.25, 0.15])?;
    let mu1 = DiscreteMeasure::new(ys.iter().map(|y| vec![*y]).collect(), vec![0.4, 0.1, 0.3, 0.2])?;
    // quadratic costs, with one arc forbidden
    let mut c: Vec<Vec<Option<f64>>> =
        xs.iter().map(|x| ys.iter().map(|y| Some((x - y) * (x - y) / 2.0)).collect()).collect();
    c[0][3] = None;

    let plan = solve_mk(&c, &mu0, &mu1)?;
    println!("objective {:.12} after {} pivots", plan.objective, plan.pivots);
    for (i, j, m) in plan.support(1e-12) {
        println!("  {:>5} -> {:>4}: {m:.3}", xs[i], ys[j]);
    }
    println!("marginal error {:.1e}", plan.marginal_error(&mu0, &mu1));

    let tree = dual_potentials(&plan, &c);
    let centered = centered_potentials(&plan, &c);
    for (name, pair) in [("tree", &tree), ("centered", &centered)] {
        let gap = duality_gap(&plan, pair, &mu0, &mu1, &c)?;
        let support = check_support_condition(&plan, pair, &c)?;
        println!(
            "{name:>8} duals: gap {gap:.1e}, admissible {}, support violation {:.1e}",
            pair.is_admissible(&c, 1e-9),
            support.max_violation
        );
    }
    // the pair is c-concave: both transforms reproduce it
    let phi1 = c_transform_forward(&tree.phi0, &c);
    let phi0 = c_transform_backward(&phi1, &c);
    let drift = phi0.iter().zip(&tree.phi0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("c-transform round trip drift {drift:.1e}");

    let on = pointwise_duality(1, 0, std::slice::from_ref(&tree), &c, &plan)?;
    let off = pointwise_duality(4, 0, &[tree], &c, &plan)?;
    println!("arc (1, 0): slack {:.1e}, on support {}", on.slack, on.on_support);
    println!("arc (4, 0): slack {:.3}, on support {}", off.slack, off.on_support);
    Ok(())
}
