//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stdout so it shows up without `--nocapture`.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use charflow::characteristics::{caustic_time, FlowMap, SeedGrid};
use charflow::cost::{
    cost_dp_oracle, cost_matrix, cost_shooting, cost_transcription, CostPolicy, CostQuery, OracleSettings,
    ShootingSettings, TranscriptionSettings,
};
use charflow::expr::{Dims, Expr};
use charflow::grid::Grid;
use charflow::hjb::{hopf_lax_oracle, sample_on_grid, solve_hjb, HjbSettings, SemigroupOp};
use charflow::problem::{Boundary, ControlProblem, ControlSet, StateBox};
use charflow::transport::{
    centered_potentials, check_support_condition, dual_potentials, duality_gap, initial_measure_action, monge_map,
    solve_mk, wasserstein1, DiscreteMeasure, MongeSettings,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, checks: &[(&str, bool)], detail: &str, elapsed: Duration, limit: Option<Duration>) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let ok = in_time && checks.iter().all(|c| c.1);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let line = format!(
        "criterion {id} {}: {name}: {detail}; {:.2}s{}{}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs())),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) },
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{line}");
}

fn expr(n: usize, s: &str) -> Expr {
    Expr::parse(s, Dims::new(n, n)).unwrap()
}

#[test]
fn criterion_1_hamiltonian() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 2;
    let free = ControlProblem::quadratic(n, -2.0, 2.0);
    let boxed = free.clone().with_controls(ControlSet::symmetric(n, 1.0)).unwrap();
    let (mut free_err, mut box_err) = (0.0f64, 0.0f64);
    // the box objective separates by axis, so the grid search runs per axis
    let axis_search = |p: f64| {
        (0..=20_000)
            .map(|k| {
                let u = -1.0 + k as f64 * 1e-4;
                p * u - u * u / 2.0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    for _ in 0..1000 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let exact: f64 = p.iter().map(|v| v * v / 2.0).sum();
        free_err = free_err.max((free.hamiltonian(&x, &p, 0.0).unwrap().value - exact).abs());
        let oracle: f64 = p.iter().map(|&v| axis_search(v)).sum();
        box_err = box_err.max((boxed.hamiltonian(&x, &p, 0.0).unwrap().value - oracle).abs());
    }
    report(
        1,
        "Hamiltonian of the quadratic family",
        &[("free error <= 1e-9", free_err <= 1e-9), ("box error <= 1e-6", box_err <= 1e-6)],
        &format!("free control max error {free_err:.2e}, box vs grid search {box_err:.2e}"),
        start.elapsed(),
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn criterion_2_characteristics() {
    let start = Instant::now();
    let prob = ControlProblem::quadratic(1, -4.0, 4.0);
    let seeds = SeedGrid::new(vec![-1.0], vec![1.0], vec![41]).unwrap();
    let flow = FlowMap::build(&prob, &expr(1, "-x0^2/2"), seeds.clone(), 1.0, 1e-3).unwrap();
    let mut x_err = 0.0f64;
    for tr in &flow.trajectories {
        for s in &tr.states {
            x_err = x_err.max((s.x[0] - tr.seed[0] * (1.0 - s.t)).abs());
        }
    }
    let t_star = caustic_time(&prob, &expr(1, "-x0^2/2"), seeds.clone(), 1.5, 1e-3).unwrap();
    let expanding = caustic_time(&prob, &expr(1, "x0^2/2"), seeds, 2.0, 1e-3).unwrap();
    report(
        2,
        "characteristics of focusing and expanding data",
        &[
            ("X error <= 1e-8", x_err <= 1e-8),
            ("T* in [0.95, 1]", (0.95..=1.0).contains(&t_star)),
            ("no caustic before 2", expanding >= 2.0),
        ],
        &format!("max |X - z(1-t)| {x_err:.2e}, caustic time {t_star}, expanding data horizon {expanding}"),
        start.elapsed(),
        Some(Duration::from_secs(5)),
    );
}

fn hopf_lax_error(h: f64, dt: f64) -> f64 {
    let prob = ControlProblem::quadratic(1, -2.0, 2.0);
    let phi = expr(1, "x0^2/2");
    let grid = Grid::with_spacing(prob.domain(), h, Boundary::Clamp).unwrap();
    let vg = solve_hjb(&prob, &phi, &grid, 1.0, dt, &HjbSettings::default()).unwrap();
    grid.nodes()
        .iter()
        .zip(vg.last())
        .map(|(x, v)| (v - hopf_lax_oracle(&prob, &phi, 1.0, x).unwrap()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_3_hjb_against_hopf_lax() {
    let start = Instant::now();
    let coarse = hopf_lax_error(0.02, 0.01);
    let fine = hopf_lax_error(0.01, 0.005);
    let ratio = coarse / fine;
    report(
        3,
        "grid solver against the Hopf-Lax formula",
        &[("error <= 1e-2", coarse <= 1e-2), ("refinement ratio >= 1.5", ratio >= 1.5)],
        &format!("sup error {coarse:.3e} at h=0.02, {fine:.3e} at h=0.01, ratio {ratio:.2}"),
        start.elapsed(),
        Some(Duration::from_secs(30)),
    );
}

#[test]
fn criterion_4_semigroup() {
    let start = Instant::now();
    let prob = ControlProblem::quadratic(1, -2.0, 2.0);
    let grid = Grid::with_spacing(prob.domain(), 0.02, Boundary::Clamp).unwrap();
    let op = SemigroupOp::new(&prob, grid.clone(), 0.01);
    let v0 = sample_on_grid(&expr(1, "x0^2/2"), &grid).unwrap();
    let whole = op.apply(&v0, 1.0).unwrap();
    let halves = op.apply(&op.apply(&v0, 0.5).unwrap(), 0.5).unwrap();
    let gap = whole.iter().zip(&halves).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    report(
        4,
        "semigroup composition",
        &[("gap <= 1e-2", gap <= 1e-2)],
        &format!("sup |T_1 phi - T_0.5 T_0.5 phi| = {gap:.3e}"),
        start.elapsed(),
        Some(Duration::from_secs(60)),
    );
}

#[test]
fn criterion_5_cost_agreement() {
    let start = Instant::now();
    let prob = ControlProblem::quadratic(1, -2.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut shoot, mut trans, mut dp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let x = rng.gen_range(-1.0..1.0);
        let y = rng.gen_range(-1.0..1.0);
        let exact = (x - y) * (x - y) / 2.0;
        let q = CostQuery::new(vec![x], vec![y]);
        let s = cost_shooting(&prob, &q, &ShootingSettings::default()).unwrap();
        let t = cost_transcription(&prob, &q, &TranscriptionSettings::default()).unwrap();
        let o = cost_dp_oracle(&prob, &q, &OracleSettings::default()).unwrap();
        shoot = shoot.max((s.value.finite().unwrap() - exact).abs());
        trans = trans.max((t.value.finite().unwrap() - exact).abs());
        dp = dp.max((o.finite().unwrap() - exact).abs());
    }
    let di = ControlProblem::parse(
        &["x1", "u0"],
        "u0^2/2",
        ControlSet::unbounded(1),
        StateBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap(),
        1.0,
        Boundary::Clamp,
    )
    .unwrap();
    let energy = cost_shooting(&di, &CostQuery::new(vec![1.0, 0.0], vec![0.0, 0.0]), &ShootingSettings::default())
        .unwrap()
        .value
        .finite()
        .unwrap();
    report(
        5,
        "minimum cost by three methods",
        &[
            ("shooting <= 1e-6", shoot <= 1e-6),
            ("transcription <= 1e-3", trans <= 1e-3),
            ("oracle <= 5e-3", dp <= 5e-3),
            ("double integrator 6 +- 0.1", (energy - 6.0).abs() <= 0.1),
        ],
        &format!(
            "max errors: shooting {shoot:.2e}, transcription {trans:.2e}, oracle {dp:.2e}; double integrator {energy:.6}"
        ),
        start.elapsed(),
        Some(Duration::from_secs(60)),
    );
}

fn brute_force(c: &[Vec<Option<f64>>]) -> f64 {
    fn rec(c: &[Vec<Option<f64>>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == c.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                rec(c, row + 1, used, acc + c[row][j].unwrap(), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(c, 0, &mut vec![false; c.len()], 0.0, &mut best);
    best / c.len() as f64
}

#[test]
fn criterion_6_mk_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_obj, mut worst_gap, mut worst_support) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(1..=7);
        let d = rng.gen_range(1..=2);
        let pts = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
        };
        let xs = pts(&mut rng);
        let ys = pts(&mut rng);
        let c: Vec<Vec<Option<f64>>> = xs
            .iter()
            .map(|x| {
                ys.iter()
                    .map(|y| Some(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0))
                    .collect()
            })
            .collect();
        let mu0 = DiscreteMeasure::uniform(xs).unwrap();
        let mu1 = DiscreteMeasure::uniform(ys).unwrap();
        let plan = solve_mk(&c, &mu0, &mu1).unwrap();
        let pair = dual_potentials(&plan, &c);
        worst_obj = worst_obj.max((plan.objective - brute_force(&c)).abs());
        worst_gap = worst_gap.max(duality_gap(&plan, &pair, &mu0, &mu1, &c).unwrap());
        worst_support = worst_support.max(check_support_condition(&plan, &pair, &c).unwrap().max_violation);
    }
    report(
        6,
        "exact discrete transport",
        &[
            ("objective = brute force", worst_obj <= 1e-12),
            ("gap <= 1e-8", worst_gap <= 1e-8),
            ("support <= 1e-7", worst_support <= 1e-7),
        ],
        &format!(
            "50 draws: max |LP - brute force| {worst_obj:.2e}, max gap {worst_gap:.2e}, max support violation {worst_support:.2e}"
        ),
        start.elapsed(),
        Some(Duration::from_secs(10)),
    );
}

#[test]
fn criterion_7_monge_map() {
    let start = Instant::now();
    let prob = ControlProblem::quadratic(1, -8.0, 8.0);
    let mu0 = DiscreteMeasure::gaussian_quantiles(0.0, 1.0, 400).unwrap();
    let mu1 = DiscreteMeasure::gaussian_quantiles(1.0, 2.0, 400).unwrap();
    let policy = CostPolicy::default();
    let c = cost_matrix(&prob, mu0.atoms(), mu1.atoms(), &policy).arc_costs().unwrap();
    let plan = solve_mk(&c, &mu0, &mu1).unwrap();
    let pair = centered_potentials(&plan, &c);
    let settings = MongeSettings::default();
    let map = monge_map(&prob, &mu0, &mu1, &c, &pair, &settings).unwrap();
    let deviation = map
        .entries
        .iter()
        .map(|e| (e.image[0] - (1.0 + 2.0 * e.x[0])).abs())
        .fold(0.0, f64::max);
    let spacing = mu1.atoms().windows(2).map(|w| w[1][0] - w[0][0]).fold(f64::INFINITY, f64::min);
    let w1 = wasserstein1(&map.pushforward().unwrap(), &mu1).unwrap();
    let action = initial_measure_action(&map, |x, y| {
        charflow::cost::cost(&prob, &CostQuery::new(x.to_vec(), y.to_vec()), &settings.policy)
            .map(|r| r.value.finite().unwrap_or(f64::INFINITY))
    })
    .unwrap();
    let relative = (action - plan.objective).abs() / plan.objective;
    report(
        7,
        "Monge map of Gaussian quantiles",
        &[
            ("deviation <= 0.05", deviation <= 0.05),
            ("W1 <= 2 spacing", w1 <= 2.0 * spacing),
            ("action within 2%", relative <= 0.02),
            ("skipped mass <= 1%", map.skipped_mass <= 0.01),
        ],
        &format!(
            "sup |T - (1+2x)| {deviation:.2e}, W1 {w1:.2e} (2 x min spacing {:.2e}), action {action:.6} vs LP {:.6} ({:.2e} relative), skipped mass {}",
            2.0 * spacing,
            plan.objective,
            relative,
            map.skipped_mass
        ),
        start.elapsed(),
        Some(Duration::from_secs(300)),
    );
}

#[test]
fn criterion_8_one_dimensional_monotonicity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut crossings = 0;
    let mut arcs = 0;
    for _ in 0..100 {
        let r = rng.gen_range(2..=12);
        let k = rng.gen_range(2..=12);
        let power = rng.gen_range(1.2..3.0);
        let xs: Vec<f64> = (0..r).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let weights = |rng: &mut ChaCha8Rng, n: usize| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let head: f64 = w[..n - 1].iter().sum();
            w[n - 1] = 1.0 - head;
            w
        };
        let w0 = weights(&mut rng, r);
        let w1 = weights(&mut rng, k);
        let mu0 = DiscreteMeasure::new(xs.iter().map(|v| vec![*v]).collect(), w0).unwrap();
        let mu1 = DiscreteMeasure::new(ys.iter().map(|v| vec![*v]).collect(), w1).unwrap();
        let c: Vec<Vec<Option<f64>>> =
            xs.iter().map(|x| ys.iter().map(|y| Some((x - y).abs().powf(power))).collect()).collect();
        let plan = solve_mk(&c, &mu0, &mu1).unwrap();
        let support = plan.support(1e-12);
        arcs += support.len();
        for &(i, j, _) in &support {
            for &(a, b, _) in &support {
                if xs[i] < xs[a] && ys[j] > ys[b] {
                    crossings += 1;
                }
            }
        }
    }
    report(
        8,
        "no crossing in one dimension",
        &[("no crossing pairs", crossings == 0)],
        &format!("100 instances, {arcs} support arcs, {crossings} crossing pairs"),
        start.elapsed(),
        Some(Duration::from_secs(30)),
    );
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/specs");
    let runs: &[(&str, &[&str])] = &[
        ("quadratic_1d.toml", &["hamiltonian", "characteristics", "hjb", "transport", "validate"]),
        ("bounded_control.toml", &["hamiltonian", "transport", "validate"]),
        ("double_integrator.toml", &["hamiltonian", "transport", "validate"]),
        ("periodic_drift.toml", &["characteristics", "hjb", "validate"]),
        ("superlinear_growth.toml", &["validate"]),
        ("gaussian_monge.toml", &["transport"]),
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (spec, commands) in runs {
        let spec = specs.join(spec);
        for command in *commands {
            let outputs: Vec<_> = ["1", "1", "4"]
                .iter()
                .map(|threads| {
                    let dir = tempfile::tempdir().unwrap();
                    let out = Command::new(env!("CARGO_BIN_EXE_charflow"))
                        .args([command, "--spec", spec.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
                        .args(["--threads", threads])
                        .output()
                        .unwrap();
                    assert!(out.status.success(), "{command} {}", String::from_utf8_lossy(&out.stderr));
                    (out.stdout, files(dir.path()))
                })
                .collect();
            compared += outputs[0].1.len();
            if outputs.iter().any(|o| *o != outputs[0]) {
                mismatches.push(format!("{} {command}", spec.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    report(
        9,
        "byte-identical CLI reruns",
        &[("all reruns identical", mismatches.is_empty())],
        &format!(
            "{compared} output files over three runs each (1, 1 and 4 threads); mismatches: {}",
            if mismatches.is_empty() { "none".into() } else { mismatches.join(", ") }
        ),
        start.elapsed(),
        None,
    );
}
