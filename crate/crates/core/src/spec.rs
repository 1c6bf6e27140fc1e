//! Problem-spec files: one TOML (or JSON) document describing the control
//! problem and the parameters of each pipeline.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::characteristics::SeedGrid;
use crate::cost::{CostPolicy, ShootingSettings, TranscriptionSettings};
use crate::expr::{Dims, Expr};
use crate::grid::Grid;
use crate::hjb::HjbSettings;
use crate::problem::{Boundary, ControlProblem, ControlSet, StateBox};
use crate::transport::{DiscreteMeasure, MongeSettings};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("spec has no [{0}] section")]
    Missing(&'static str),
}

fn invalid(e: impl std::fmt::Display) -> SpecError {
    SpecError::Invalid(e.to_string())
}

/// A bound given as a number or as one of the strings `"inf"`, `"-inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Num(f64),
    Text(Infinity),
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub enum Infinity {
    #[serde(rename = "inf", alias = "+inf")]
    Pos,
    #[serde(rename = "-inf")]
    Neg,
}

impl Bound {
    pub fn value(self) -> f64 {
        match self {
            Bound::Num(v) => v,
            Bound::Text(Infinity::Pos) => f64::INFINITY,
            Bound::Text(Infinity::Neg) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<Bound>,
    pub hi: Vec<Bound>,
}

impl BoxSpec {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.iter().map(|b| b.value()).collect(), self.hi.iter().map(|b| b.value()).collect())
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySpec {
    #[default]
    Clamp,
    Periodic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Optional `[n, m]`, checked against the other fields.
    pub dims: Option<[usize; 2]>,
    pub dynamics: Vec<String>,
    pub lagrangian: String,
    pub controls: BoxSpec,
    pub domain: BoxSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(default)]
    pub t: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Grid { lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize> },
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsSection {
    /// Initial data `u0(x)`.
    pub u0: String,
    pub seeds: SeedSpec,
    pub horizon: f64,
    #[serde(default = "default_char_dt")]
    pub dt: f64,
}

fn default_char_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbSection {
    /// Initial data `phi0(x)`.
    pub phi0: String,
    /// Nodes per axis.
    pub counts: Vec<usize>,
    pub dt: f64,
    /// Defaults to the problem horizon.
    pub horizon: Option<f64>,
    pub control_samples: Option<usize>,
    pub control_radius: Option<f64>,
    pub argmax_injection: Option<bool>,
    /// Compare with the Hopf-Lax formula (quadratic family only); on by
    /// default when applicable.
    pub oracle: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    File {
        file: PathBuf,
    },
    Gaussian {
        gaussian: GaussianSpec,
    },
    Inline {
        atoms: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ShootingSpec {
    pub dt: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub starts: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TranscriptionSpec {
    pub intervals: Option<usize>,
    pub gap_tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MongeSpec {
    pub gradient_step: Option<f64>,
    pub candidates: Option<usize>,
    pub dt: Option<f64>,
    pub max_skipped: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    pub mu0: MeasureSpec,
    pub mu1: MeasureSpec,
    #[serde(default)]
    pub transcription_only: bool,
    #[serde(default)]
    pub shooting: ShootingSpec,
    #[serde(default)]
    pub transcription: TranscriptionSpec,
    #[serde(default)]
    pub monge: MongeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub problem: ProblemSection,
    #[serde(default)]
    pub seed: u64,
    pub hamiltonian: Option<HamiltonianSection>,
    pub characteristics: Option<CharacteristicsSection>,
    pub hjb: Option<HjbSection>,
    pub transport: Option<TransportSection>,
    pub validate: Option<ValidateSection>,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ProblemSpec {
    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<ProblemSpec, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut spec = if json {
            ProblemSpec::from_json(&text)
        } else {
            ProblemSpec::from_toml(&text)
        }
        .map_err(|e| match e {
            SpecError::Parse { message, .. } => SpecError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.check()?;
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<ProblemSpec, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<ProblemSpec, SpecError> {
        serde_json::from_str(text).map_err(|e| SpecError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })
    }

    /// Validates everything that does not need a numerical run.
    pub fn check(&self) -> Result<(), SpecError> {
        let prob = self.control_problem()?;
        if let Some(h) = &self.hjb {
            if h.counts.len() != prob.n() || h.counts.iter().any(|&c| c < 3) {
                return Err(invalid(format!(
                    "hjb.counts must give at least 3 nodes on each of {} axes",
                    prob.n()
                )));
            }
        }
        if let Some(c) = &self.characteristics {
            if let SeedSpec::Grid { counts, .. } = &c.seeds {
                if counts.iter().any(|&k| k < 3) {
                    return Err(invalid("characteristics.seeds.counts must be at least 3"));
                }
            }
        }
        if let Some(t) = &self.transport {
            for m in [&t.mu0, &t.mu1] {
                if let MeasureSpec::File { file } = m {
                    let p = self.resolve(file);
                    if !p.is_file() {
                        return Err(SpecError::Io {
                            path: p,
                            source: std::io::Error::new(std::io::ErrorKind::NotFound, "measure file not found"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn control_problem(&self) -> Result<ControlProblem, SpecError> {
        let s = &self.problem;
        let (clo, chi) = s.controls.bounds();
        let (dlo, dhi) = s.domain.bounds();
        if let Some([n, m]) = s.dims {
            if n != s.dynamics.len() || m != clo.len() {
                return Err(invalid(format!(
                    "dims = [{n}, {m}] but {} dynamics components and {} control bounds",
                    s.dynamics.len(),
                    clo.len()
                )));
            }
        }
        let controls = ControlSet::new(clo, chi).map_err(invalid)?;
        let domain = StateBox::new(dlo, dhi).map_err(invalid)?;
        let boundary = match s.boundary {
            BoundarySpec::Clamp => Boundary::Clamp,
            BoundarySpec::Periodic => Boundary::Periodic,
        };
        let f: Vec<&str> = s.dynamics.iter().map(String::as_str).collect();
        ControlProblem::parse(&f, &s.lagrangian, controls, domain, s.horizon, boundary).map_err(invalid)
    }

    /// Parses a function of the state variables only.
    pub fn state_expr(&self, text: &str) -> Result<Expr, SpecError> {
        Expr::parse(text, Dims::new(self.problem.dynamics.len(), 0)).map_err(invalid)
    }

    pub fn seed_points(&self, c: &CharacteristicsSection) -> Result<(Vec<Vec<f64>>, Option<SeedGrid>), SpecError> {
        match &c.seeds {
            SeedSpec::Grid { lo, hi, counts } => {
                let g = SeedGrid::new(lo.clone(), hi.clone(), counts.clone()).map_err(invalid)?;
                Ok((g.points(), Some(g)))
            }
            SeedSpec::Points(p) if p.is_empty() => Err(invalid("empty seed list")),
            SeedSpec::Points(p) => Ok((p.clone(), None)),
        }
    }

    pub fn hjb_grid(&self, h: &HjbSection, prob: &ControlProblem) -> Result<Grid, SpecError> {
        Grid::new(prob.domain(), h.counts.clone(), prob.boundary()).map_err(invalid)
    }

    pub fn hjb_settings(h: &HjbSection) -> HjbSettings {
        let d = HjbSettings::default();
        HjbSettings {
            control_samples: h.control_samples.unwrap_or(d.control_samples),
            control_radius: h.control_radius.or(d.control_radius),
            argmax_injection: h.argmax_injection.unwrap_or(d.argmax_injection),
        }
    }

    pub fn measure(&self, m: &MeasureSpec) -> Result<DiscreteMeasure, SpecError> {
        match m {
            MeasureSpec::Gaussian { gaussian: g } => {
                DiscreteMeasure::gaussian_quantiles(g.mean, g.std, g.n).map_err(invalid)
            }
            MeasureSpec::Inline { atoms, weights } => match weights {
                Some(w) => DiscreteMeasure::new(atoms.clone(), w.clone()).map_err(invalid),
                None => DiscreteMeasure::uniform(atoms.clone()).map_err(invalid),
            },
            MeasureSpec::File { file } => read_measure(&self.resolve(file)),
        }
    }

    pub fn cost_policy(&self, t: &TransportSection, seed: u64) -> CostPolicy {
        let sd = ShootingSettings::default();
        let td = TranscriptionSettings::default();
        CostPolicy {
            shooting: ShootingSettings {
                dt: t.shooting.dt.unwrap_or(sd.dt),
                tolerance: t.shooting.tolerance.unwrap_or(sd.tolerance),
                max_iterations: t.shooting.max_iterations.unwrap_or(sd.max_iterations),
                starts: t.shooting.starts.unwrap_or(sd.starts),
                seed,
            },
            transcription: TranscriptionSettings {
                intervals: t.transcription.intervals.unwrap_or(td.intervals),
                gap_tolerance: t.transcription.gap_tolerance.unwrap_or(td.gap_tolerance),
                max_iterations: t.transcription.max_iterations.unwrap_or(td.max_iterations),
                ..td
            },
            transcription_only: t.transcription_only,
        }
    }

    pub fn monge_settings(&self, t: &TransportSection, seed: u64) -> MongeSettings {
        let d = MongeSettings::default();
        let mut policy = self.cost_policy(t, seed);
        policy.shooting.tolerance = policy.shooting.tolerance.min(d.policy.shooting.tolerance);
        MongeSettings {
            gradient_step: t.monge.gradient_step.unwrap_or(d.gradient_step),
            candidates: t.monge.candidates.unwrap_or(d.candidates),
            dt: t.monge.dt.unwrap_or(d.dt),
            max_skipped: t.monge.max_skipped.unwrap_or(d.max_skipped),
            policy,
        }
    }
}

/// Reads a measure CSV with a header `x0,..,weight`.
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure, SpecError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| SpecError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let parse_err = |message: String| SpecError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if headers.len() < 2 || &headers[headers.len() - 1] != "weight" {
        return Err(parse_err("expected columns x0,..,weight".into()));
    }
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(format!("row {}: {e}", line + 1)))?;
        let (w, x) = vals.split_last().expect("at least two columns");
        atoms.push(x.to_vec());
        weights.push(*w);
    }
    DiscreteMeasure::new(atoms, weights).map_err(invalid)
}
