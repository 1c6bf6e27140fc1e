//! Batch front-end behind the `charflow` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::characteristics::{integrate_from, initial_state, CharError, FlowMap};
use crate::cost::{cost, cost_matrix, CostError, CostQuery};
use crate::hjb::{hopf_lax_oracle, solve_hjb, viscosity_residual, HjbError};
use crate::problem::{check_assumptions, ProblemError};
use crate::spec::{ProblemSpec, SpecError};
use crate::transport::{
    centered_potentials, check_support_condition, dual_objective, dual_potentials, initial_measure_action,
    monge_map, solve_mk, wasserstein1, TransportError,
};

#[derive(Debug, Parser)]
#[command(name = "charflow", version, about = "Control-generated transport costs, HJB and characteristics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem-spec file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel maps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the spec's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Evaluate H(x, p, t) at the point given in [hamiltonian].
    Hamiltonian,
    /// Integrate characteristics from the seeds in [characteristics].
    Characteristics,
    /// Solve the HJB equation on the grid in [hjb].
    Hjb,
    /// Transport [transport].mu0 to mu1 and build the Monge map.
    Transport,
    /// Report on the standing assumptions.
    Validate,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 1.
    User(String),
    /// Numerical failure: exit code 2.
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::User(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::Expr(crate::expr::ExprError::Domain { .. }) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<CharError> for CliError {
    fn from(e: CharError) -> Self {
        match e {
            CharError::Problem(p) => p.into(),
            CharError::Escape { .. } => CliError::Internal(e.to_string()),
            CharError::Step(ref m) if m.contains("non-finite") => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<HjbError> for CliError {
    fn from(e: HjbError) -> Self {
        match e {
            HjbError::Problem(p) => p.into(),
            HjbError::NonFinite { .. } => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        match e {
            CostError::Problem(p) => p.into(),
            CostError::Characteristic(c) => c.into(),
            CostError::Query(_) | CostError::OracleDimension(_) => CliError::User(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Cost(c) => c.into(),
            TransportError::Characteristic(c) => c.into(),
            TransportError::CostEntry(..) | TransportError::SkippedMass { .. } => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::User(format!("cannot write {}: {e}", path.display()))
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(CliError::Internal(format!("thread pool: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            0
        }
        Err(e) => {
            eprintln!("charflow: error: {}", e.message());
            e.code()
        }
    }
}

/// Runs one command; returns the JSON summary printed on success.
pub fn run(cli: &Cli) -> Result<Value, CliError> {
    let path = cli
        .spec
        .as_ref()
        .ok_or_else(|| CliError::User("--spec FILE is required".into()))?;
    let spec = ProblemSpec::load(path)?;
    let seed = cli.seed.unwrap_or(spec.seed);
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    }
    let out = cli.out.as_deref();
    let summary = match cli.command {
        Command::Hamiltonian => cmd_hamiltonian(&spec)?,
        Command::Characteristics => cmd_characteristics(&spec, out)?,
        Command::Hjb => cmd_hjb(&spec, out)?,
        Command::Transport => cmd_transport(&spec, out, seed)?,
        Command::Validate => cmd_validate(&spec, seed)?,
    };
    if let Some(dir) = out {
        let name = format!("{}.json", command_name(cli.command));
        write_file(&dir.join(name), |w| {
            writeln!(w, "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"))
        })?;
    }
    Ok(summary)
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Hamiltonian => "hamiltonian",
        Command::Characteristics => "characteristics",
        Command::Hjb => "hjb",
        Command::Transport => "transport",
        Command::Validate => "validate",
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn cmd_hamiltonian(spec: &ProblemSpec) -> Result<Value, CliError> {
    let h = spec.hamiltonian.as_ref().ok_or(SpecError::Missing("hamiltonian"))?;
    let prob = spec.control_problem()?;
    let eval = prob.hamiltonian(&h.x, &h.p, h.t)?;
    Ok(json!({
        "schema": 1,
        "command": "hamiltonian",
        "x": h.x,
        "p": h.p,
        "t": h.t,
        "value": eval.value,
        "argmax": eval.argmax,
        "hx": eval.hx,
        "hp": eval.hp,
    }))
}

pub fn cmd_characteristics(spec: &ProblemSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let c = spec.characteristics.as_ref().ok_or(SpecError::Missing("characteristics"))?;
    let prob = spec.control_problem()?;
    let u0 = spec.state_expr(&c.u0)?;
    let (points, grid) = spec.seed_points(c)?;
    let (trajectories, t_star) = match grid {
        Some(g) => {
            let flow = FlowMap::build(&prob, &u0, g, c.horizon, c.dt)?;
            (flow.trajectories.clone(), Some(flow.t_star))
        }
        None => {
            let tr = points
                .iter()
                .map(|z| {
                    let (p0, v0) = initial_state(&u0, z)?;
                    integrate_from(&prob, z, &p0, v0, 0.0, c.horizon, c.dt)
                })
                .collect::<Result<Vec<_>, CharError>>()?;
            (tr, None)
        }
    };
    if let Some(dir) = out {
        let n = prob.n();
        write_file(&dir.join("characteristics.csv"), |w| {
            let xs: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
            let ps: Vec<String> = (0..n).map(|k| format!("p{k}")).collect();
            writeln!(w, "seed,k,t,{},{},U", xs.join(","), ps.join(","))?;
            for (s, tr) in trajectories.iter().enumerate() {
                for (k, st) in tr.states.iter().enumerate() {
                    let cells: Vec<String> = st.x.iter().chain(&st.p).map(|v| crate::io::fmt_f64(*v)).collect();
                    writeln!(
                        w,
                        "{s},{k},{},{},{}",
                        crate::io::fmt_f64(st.t),
                        cells.join(","),
                        crate::io::fmt_f64(st.value)
                    )?;
                }
            }
            Ok(())
        })?;
    }
    Ok(json!({
        "schema": 1,
        "command": "characteristics",
        "seeds": trajectories.len(),
        "steps": trajectories.first().map_or(0, |t| t.states.len() - 1),
        "dt": trajectories.first().map_or(c.dt, |t| t.dt),
        "horizon": c.horizon,
        "t_star": t_star,
        "caustic_before_horizon": t_star.map(|t| t < c.horizon),
    }))
}

pub fn cmd_hjb(spec: &ProblemSpec, out: Option<&Path>) -> Result<Value, CliError> {
    let h = spec.hjb.as_ref().ok_or(SpecError::Missing("hjb"))?;
    let prob = spec.control_problem()?;
    let phi0 = spec.state_expr(&h.phi0)?;
    let grid = spec.hjb_grid(h, &prob)?;
    let horizon = h.horizon.unwrap_or(prob.horizon());
    let vg = solve_hjb(&prob, &phi0, &grid, horizon, h.dt, &ProblemSpec::hjb_settings(h))?;
    let residual = viscosity_residual(&vg, &prob)?;
    let use_oracle = h.oracle.unwrap_or(true) && prob.is_quadratic_family();
    let oracle_error = if use_oracle {
        let t = *vg.times.last().expect("at least one slice");
        let mut worst = 0.0_f64;
        for (x, v) in grid.nodes().iter().zip(vg.last()) {
            worst = worst.max((v - hopf_lax_oracle(&prob, &phi0, t, x)?).abs());
        }
        Some(worst)
    } else {
        None
    };
    if let Some(dir) = out {
        write_file(&dir.join("values.csv"), |w| vg.write_csv(w))?;
    }
    let last = vg.last();
    Ok(json!({
        "schema": 1,
        "command": "hjb",
        "nodes": grid.len(),
        "slices": vg.values.len(),
        "dt": vg.dt,
        "horizon": horizon,
        "min_value": last.iter().copied().fold(f64::INFINITY, f64::min),
        "max_value": last.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "residual": residual,
        "oracle_sup_error": oracle_error,
    }))
}

pub fn cmd_transport(spec: &ProblemSpec, out: Option<&Path>, seed: u64) -> Result<Value, CliError> {
    let t = spec.transport.as_ref().ok_or(SpecError::Missing("transport"))?;
    let prob = spec.control_problem()?;
    let mu0 = spec.measure(&t.mu0)?;
    let mu1 = spec.measure(&t.mu1)?;
    if mu0.dim() != prob.n() || mu1.dim() != prob.n() {
        return Err(CliError::User(format!("measures must live in {} dimensions", prob.n())));
    }
    let policy = spec.cost_policy(t, seed);
    let cm = cost_matrix(&prob, mu0.atoms(), mu1.atoms(), &policy);
    let c = cm
        .arc_costs()
        .map_err(|(i, j, e)| CliError::from(TransportError::CostEntry(i, j, e)))?;
    let plan = solve_mk(&c, &mu0, &mu1)?;
    let pair = dual_potentials(&plan, &c);
    let dual = dual_objective(&pair, &mu0, &mu1);
    let support = check_support_condition(&plan, &pair, &c)?;
    let centred = centered_potentials(&plan, &c);
    let settings = spec.monge_settings(t, seed);
    let map = monge_map(&prob, &mu0, &mu1, &c, &centred, &settings)?;
    let image = map.pushforward()?;
    let w1 = wasserstein1(&image, &mu1)?;
    let action = initial_measure_action(&map, |x, y| -> Result<f64, CliError> {
        let r = cost(&prob, &CostQuery::new(x.to_vec(), y.to_vec()), &settings.policy)?;
        r.value
            .finite()
            .ok_or_else(|| CliError::Internal("Monge image is unreachable from its source".into()))
    })?;
    if let Some(dir) = out {
        write_file(&dir.join("mu0.csv"), |w| mu0.write_csv(w))?;
        write_file(&dir.join("mu1.csv"), |w| mu1.write_csv(w))?;
        write_file(&dir.join("costs.csv"), |w| cm.write_csv(w))?;
        write_file(&dir.join("plan.csv"), |w| plan.write_csv(w))?;
        write_file(&dir.join("phi0.csv"), |w| pair.write_phi0_csv(w))?;
        write_file(&dir.join("phi1.csv"), |w| pair.write_phi1_csv(w))?;
        write_file(&dir.join("map.csv"), |w| map.write_csv(w))?;
        write_file(&dir.join("pushforward.csv"), |w| image.write_csv(w))?;
    }
    Ok(json!({
        "schema": 1,
        "command": "transport",
        "atoms0": mu0.len(),
        "atoms1": mu1.len(),
        "primal": plan.objective,
        "dual": dual,
        "gap": (plan.objective - dual).abs(),
        "support_violation": support.max_violation,
        "pushforward_W1": w1,
        "action": action,
        "skipped_mass": map.skipped_mass,
        "pivots": plan.pivots,
    }))
}

pub fn cmd_validate(spec: &ProblemSpec, seed: u64) -> Result<Value, CliError> {
    let prob = spec.control_problem()?;
    let samples = spec.validate.as_ref().map_or(2000, |v| v.samples);
    let report = check_assumptions(&prob, samples, seed);
    Ok(json!({
        "schema": 1,
        "command": "validate",
        "passed": report.passed(),
        "report": report,
    }))
}
