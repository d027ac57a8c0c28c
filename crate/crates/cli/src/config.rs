//! Run configuration files.
//!
//! Configs are TOML. Every optional key has a default defined here; the fully resolved config
//! (defaults filled in, relative paths made absolute, seed fixed) is what gets hashed and written
//! to the run manifest, so a manifest alone reproduces a run.

use std::path::{Path, PathBuf};

use cpsconf_core::conformance::build_pwc_formula;
use cpsconf_core::degree::Axis;
use cpsconf_core::falsify::{Objective, OptimizerConfig, SearchSpace};
use cpsconf_core::monitor::{parse, RobustnessKind};
use cpsconf_core::systems::{
    make_mutant, nav4, BoxSet, ExternalProcess, HybridAutomaton, Integrator, Interpolation, Mutation, SystemUnderTest,
    TraceReplay,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLING_PERIOD: f64 = 0.05;
pub const DEFAULT_MAX_JUMPS: u32 = 100;
pub const DEFAULT_CONTROL_POINTS: usize = 4;
pub const DEFAULT_K: usize = 10;
/// Power of two, so that doubling and halving stay exact.
pub const DEFAULT_START: f64 = 0.0625;
pub const DEFAULT_MAX_DOUBLINGS: usize = 30;
pub const DEFAULT_RUNS: usize = 20;

fn default_sampling_period() -> f64 {
    DEFAULT_SAMPLING_PERIOD
}
fn default_max_jumps() -> u32 {
    DEFAULT_MAX_JUMPS
}
fn default_control_points() -> usize {
    DEFAULT_CONTROL_POINTS
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_start() -> f64 {
    DEFAULT_START
}
fn default_max_doublings() -> usize {
    DEFAULT_MAX_DOUBLINGS
}
fn default_runs() -> usize {
    DEFAULT_RUNS
}
fn default_timeout() -> f64 {
    cpsconf_core::systems::DEFAULT_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    /// An automaton definition file.
    Automaton {
        path: PathBuf,
        #[serde(default = "default_sampling_period")]
        sampling_period: f64,
        #[serde(default)]
        integrator: Integrator,
        #[serde(default)]
        mutation: Option<Mutation>,
        #[serde(default)]
        projection: Option<Vec<usize>>,
    },
    /// A bundled automaton (`nav4`).
    Builtin {
        name: String,
        #[serde(default = "default_sampling_period")]
        sampling_period: f64,
        #[serde(default)]
        integrator: Integrator,
        #[serde(default)]
        mutation: Option<Mutation>,
        #[serde(default)]
        projection: Option<Vec<usize>>,
    },
    /// Recorded traces, replayed in turn.
    Replay { files: Vec<PathBuf> },
    /// An external simulator command.
    External {
        command: Vec<String>,
        #[serde(default = "default_sampling_period")]
        sampling_period: f64,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default)]
        workdir: Option<PathBuf>,
        #[serde(default)]
        projection: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Conformance {
        tau: f64,
        eps: f64,
        #[serde(default)]
        kind: RobustnessKind,
    },
    Formula {
        formula: String,
        #[serde(default)]
        kind: RobustnessKind,
    },
    /// Mode-switching formula with deadline `d`, on temporal robustness.
    Pwc { d: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    /// Defaults to the model automaton's H0 box.
    #[serde(default)]
    pub h0: Option<BoxSet>,
    #[serde(default)]
    pub input_boxes: Vec<BoxSet>,
    #[serde(default = "default_control_points")]
    pub n_control_points: usize,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        Self { h0: None, input_boxes: Vec::new(), n_control_points: DEFAULT_CONTROL_POINTS, interpolation: Interpolation::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeSpec {
    pub axis: Axis,
    /// `tau` for an epsilon search, `eps` for a tau search.
    #[serde(default)]
    pub fixed: Option<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub lower: f64,
    /// Found by doubling `start` when absent.
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default = "default_start")]
    pub start: f64,
    #[serde(default = "default_max_doublings")]
    pub max_doublings: usize,
    /// When present, an epsilon search at each of these `tau` values (Pareto front).
    #[serde(default)]
    pub taus: Option<Vec<f64>>,
}

/// Config of `falsify` and `degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub horizon: f64,
    #[serde(default = "default_max_jumps")]
    pub max_jumps: u32,
    pub budget: usize,
    pub model: SystemSpec,
    pub implementation: SystemSpec,
    #[serde(default)]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub degree: Option<DegreeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutantSpec {
    pub name: String,
    /// Absent for the unmodified base system.
    #[serde(default)]
    pub mutation: Option<Mutation>,
}

/// Config of `bench`: every mutant of `base` against `base`, `runs` seeded campaigns each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub horizon: f64,
    #[serde(default = "default_max_jumps")]
    pub max_jumps: u32,
    pub budget: usize,
    pub base: SystemSpec,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub space: SpaceSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub mutants: Vec<MutantSpec>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Reads a TOML config, or the `config` entry of a JSON run manifest.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let cfg = v.get_mut("config").map(serde_json::Value::take).ok_or_else(|| {
            ConfigError(format!("{}: not a run manifest (no `config` key)", path.display()))
        })?;
        serde_json::from_value(cfg).map_err(|e| ConfigError(format!("{}: config: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }
}

fn absolute(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl SystemSpec {
    fn resolve_paths(&mut self, base: &Path) {
        match self {
            SystemSpec::Automaton { path, .. } => absolute(base, path),
            SystemSpec::Replay { files } => files.iter_mut().for_each(|f| absolute(base, f)),
            SystemSpec::External { workdir, .. } => {
                if let Some(w) = workdir {
                    absolute(base, w);
                }
            }
            SystemSpec::Builtin { .. } => {}
        }
    }

    fn automaton(&self) -> Result<Option<HybridAutomaton>, ConfigError> {
        let (base, mutation) = match self {
            SystemSpec::Automaton { path, mutation, .. } => {
                (HybridAutomaton::from_path(path).map_err(|e| ConfigError(e.to_string()))?, mutation)
            }
            SystemSpec::Builtin { name, mutation, .. } => match name.as_str() {
                "nav4" => (nav4(), mutation),
                other => return err(format!("unknown builtin system `{other}` (available: nav4)")),
            },
            _ => return Ok(None),
        };
        match mutation {
            Some(m) => Ok(Some(make_mutant(&base, m).map_err(|e| ConfigError(e.to_string()))?)),
            None => Ok(Some(base)),
        }
    }

    pub fn build(&self) -> Result<SystemUnderTest, ConfigError> {
        let sut = match self {
            SystemSpec::Automaton { sampling_period, integrator, projection, .. }
            | SystemSpec::Builtin { sampling_period, integrator, projection, .. } => {
                if !(*sampling_period > 0.0) {
                    return err("sampling_period: must be positive");
                }
                let mut s = SystemUnderTest::automaton(self.automaton()?.expect("automaton-backed"), *sampling_period);
                if let cpsconf_core::systems::Backend::Automaton { integrator: i, .. } = &mut s.backend {
                    *i = *integrator;
                }
                s.projection = projection.clone();
                s
            }
            SystemSpec::Replay { files } => {
                let traces = files
                    .iter()
                    .map(|f| {
                        cpsconf_core::TimedStateSequence::from_csv_path(f)
                            .map_err(|e| ConfigError(format!("{}: {e}", f.display())))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SystemUnderTest::replay(TraceReplay::new(traces).map_err(|e| ConfigError(e.to_string()))?)
            }
            SystemSpec::External { command, sampling_period, timeout_secs, workdir, projection } => {
                let mut p = ExternalProcess::new(command.clone());
                p.timeout_secs = *timeout_secs;
                p.workdir = workdir.clone();
                let mut s = SystemUnderTest::external(p, *sampling_period);
                s.projection = projection.clone();
                s
            }
        };
        Ok(sut)
    }

    /// H0 box of an automaton-backed system.
    pub fn h0_box(&self) -> Result<Option<BoxSet>, ConfigError> {
        Ok(self.automaton()?.map(|a| a.h0_box))
    }

    /// Input dimension of an automaton-backed system.
    pub fn input_dim(&self) -> Result<Option<usize>, ConfigError> {
        Ok(self.automaton()?.map(|a| a.input_dim))
    }

    pub fn with_mutation(&self, m: Option<Mutation>) -> Result<Self, ConfigError> {
        let mut s = self.clone();
        match &mut s {
            SystemSpec::Automaton { mutation, .. } | SystemSpec::Builtin { mutation, .. } => *mutation = m,
            _ if m.is_some() => return err("mutations need an automaton-backed base system"),
            _ => {}
        }
        Ok(s)
    }
}

impl ObjectiveSpec {
    pub fn build(&self, horizon: f64) -> Result<Objective, ConfigError> {
        match self {
            ObjectiveSpec::Conformance { tau, eps, kind } => {
                if !(*tau > 0.0 && *eps > 0.0) {
                    return err("objective: tau and eps must be positive");
                }
                Ok(Objective::Conformance { tau: *tau, eps: *eps, kind: *kind })
            }
            ObjectiveSpec::Formula { formula, kind } => Ok(Objective::Formula {
                formula: parse(formula).map_err(|e| ConfigError(format!("objective.formula: {e}")))?,
                kind: *kind,
            }),
            ObjectiveSpec::Pwc { d } => Ok(Objective::Formula {
                formula: build_pwc_formula(*d, horizon).map_err(|e| ConfigError(format!("objective.d: {e}")))?,
                kind: RobustnessKind::Temporal,
            }),
        }
    }
}

impl SpaceSpec {
    /// Fills the H0 box and a zero-dimensional input box from the model when absent.
    fn resolve(&mut self, model: &SystemSpec) -> Result<(), ConfigError> {
        if self.h0.is_none() {
            self.h0 = model.h0_box()?;
            if self.h0.is_none() {
                self.h0 = Some(BoxSet::new(vec![], vec![]));
            }
        }
        if self.input_boxes.is_empty() {
            match model.input_dim()? {
                Some(0) | None => self.input_boxes = vec![BoxSet::new(vec![], vec![])],
                Some(n) => return err(format!("space.input_boxes: required for a model with {n} inputs")),
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SearchSpace, ConfigError> {
        let space = SearchSpace {
            h0: self.h0.clone().unwrap_or_else(|| BoxSet::new(vec![], vec![])),
            input_boxes: self.input_boxes.clone(),
            n_control_points: self.n_control_points,
            interpolation: self.interpolation,
        };
        space.validate().map_err(|e| ConfigError(format!("space: {e}")))?;
        Ok(space)
    }
}

/// A seed from the clock, for configs that do not fix one.
fn fresh_seed() -> u64 {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos());
    (nanos as u64) ^ ((nanos >> 64) as u64)
}

fn check_common(horizon: f64, budget: usize) -> Result<(), ConfigError> {
    if !(horizon > 0.0) {
        return err("horizon: must be positive");
    }
    if budget == 0 {
        return err("budget: must be at least 1");
    }
    Ok(())
}

impl RunConfig {
    /// Validates and fills every default. `base` is the directory relative paths refer to.
    pub fn resolve(mut self, base: &Path) -> Result<Self, ConfigError> {
        check_common(self.horizon, self.budget)?;
        self.model.resolve_paths(base);
        self.implementation.resolve_paths(base);
        self.space.resolve(&self.model)?;
        self.space.build()?;
        if let Some(o) = &self.objective {
            o.build(self.horizon)?;
        }
        if let Some(d) = &self.degree {
            if d.k == 0 {
                return err("degree.k: must be at least 1");
            }
        }
        self.seed.get_or_insert_with(fresh_seed);
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }
}

impl BenchConfig {
    pub fn resolve(mut self, base: &Path) -> Result<Self, ConfigError> {
        check_common(self.horizon, self.budget)?;
        if self.runs == 0 {
            return err("runs: must be at least 1");
        }
        if self.mutants.is_empty() {
            return err("mutants: need at least one");
        }
        self.base.resolve_paths(base);
        self.space.resolve(&self.base)?;
        self.space.build()?;
        self.objective.build(self.horizon)?;
        for m in &self.mutants {
            self.base.with_mutation(m.mutation.clone())?.build().map_err(|e| ConfigError(format!("mutants.{}: {e}", m.name)))?;
        }
        self.seed.get_or_insert_with(fresh_seed);
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }
}
