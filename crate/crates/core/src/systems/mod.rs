//! Systems under test: the black-box map from an initial condition and an input signal to an
//! output trace.
//!
//! A [`SystemUnderTest`] is backed by a built-in [`HybridAutomaton`], a table of recorded traces,
//! or an external command. The bundled benchmark automaton is available through [`nav4`].

mod automaton;
mod external;
mod input;

use std::path::Path;

use thiserror::Error;

pub use automaton::{
    make_mutant, AffineMap, BoxSet, Edge, HalfSpace, HybridAutomaton, Integrator, Mode, Mutation,
    MAX_JUMPS_PER_INSTANT,
};
pub use external::{ExternalProcess, Request, DEFAULT_TIMEOUT};
pub use input::{materialize_input, InputSignal, Interpolation};

use crate::tss::{TimedStateSequence, TssError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid automaton: {0}")]
    Automaton(String),
    #[error("invalid input signal: {0}")]
    Input(String),
    #[error("invalid initial condition: {0}")]
    InitialCondition(String),
    #[error("Zeno guard cycle at t = {t}: more than {MAX_JUMPS_PER_INSTANT} jumps at one instant")]
    Zeno { t: f64 },
    #[error("state became non-finite at t = {t}")]
    Diverged { t: f64 },
    #[error("invalid mutation: {0}")]
    Mutation(String),
    #[error("test {test_id}: external simulation timed out after {secs} s")]
    Timeout { test_id: u64, secs: f64 },
    #[error("test {test_id}: {msg}")]
    External { test_id: u64, msg: String },
    #[error("replay table is empty")]
    EmptyReplay,
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Trace(#[from] TssError),
}

/// Recorded traces returned in turn: test `i` gets trace `i mod len`. Initial condition and input
/// are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReplay {
    pub traces: Vec<TimedStateSequence>,
}

impl TraceReplay {
    pub fn new(traces: Vec<TimedStateSequence>) -> Result<Self, SystemError> {
        if traces.is_empty() {
            return Err(SystemError::EmptyReplay);
        }
        Ok(Self { traces })
    }

    /// Every `*.csv` file in `dir`, in file-name order.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, SystemError> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| SystemError::Io(format!("{}: {e}", dir.display()));
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let traces = paths.iter().map(TimedStateSequence::from_csv_path).collect::<Result<_, _>>()?;
        Self::new(traces)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Automaton { automaton: HybridAutomaton, integrator: Integrator },
    Replay(TraceReplay),
    External(ExternalProcess),
}

/// One simulation request.
#[derive(Debug, Clone, Copy)]
pub struct SimRequest<'a> {
    pub test_id: u64,
    pub h0: &'a [f64],
    pub input: &'a InputSignal,
    pub horizon: f64,
    pub max_jumps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemUnderTest {
    pub backend: Backend,
    pub sampling_period: f64,
    /// Indices of the shared initial-condition vector this system reads, when its state space
    /// differs from the other system's.
    pub projection: Option<Vec<usize>>,
}

impl SystemUnderTest {
    pub fn automaton(automaton: HybridAutomaton, sampling_period: f64) -> Self {
        Self {
            backend: Backend::Automaton { automaton, integrator: Integrator::Rk4 },
            sampling_period,
            projection: None,
        }
    }

    pub fn replay(replay: TraceReplay) -> Self {
        Self { backend: Backend::Replay(replay), sampling_period: 0.0, projection: None }
    }

    pub fn external(process: ExternalProcess, sampling_period: f64) -> Self {
        Self { backend: Backend::External(process), sampling_period, projection: None }
    }

    pub fn with_projection(mut self, projection: Vec<usize>) -> Self {
        self.projection = Some(projection);
        self
    }

    /// Output dimension, when it is known without simulating.
    pub fn dim_out(&self) -> Option<usize> {
        match &self.backend {
            Backend::Automaton { automaton, .. } => Some(automaton.output_dim()),
            Backend::Replay(r) => Some(r.traces[0].dim()),
            Backend::External(_) => None,
        }
    }

    pub fn simulate(&self, req: &SimRequest<'_>) -> Result<TimedStateSequence, SystemError> {
        let h0: Vec<f64> = match &self.projection {
            None => req.h0.to_vec(),
            Some(idx) => idx
                .iter()
                .map(|&i| {
                    req.h0.get(i).copied().ok_or_else(|| {
                        SystemError::InitialCondition(format!("projection index {i} out of range"))
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        match &self.backend {
            Backend::Automaton { automaton, integrator } => {
                automaton.simulate(&h0, req.input, req.horizon, req.max_jumps, self.sampling_period, *integrator)
            }
            Backend::Replay(r) => Ok(r.traces[(req.test_id % r.traces.len() as u64) as usize].clone()),
            Backend::External(p) => {
                p.simulate(req.test_id, &h0, req.input, req.horizon, req.max_jumps, self.sampling_period)
            }
        }
    }
}

/// Definition of the bundled benchmark automaton.
pub const NAV4_TOML: &str = include_str!("../../assets/nav4.toml");

/// Four-mode planar navigation benchmark.
///
/// State `(px, py, vx, vy)` on the unit-split square `[0, 2]^2`; the four cells (split at
/// `px = 1` and `py = 1`) each steer the velocity towards a desired heading so that the vehicle
/// circles counter-clockwise through SW, SE, NE and NW. The two-dimensional input is an additive
/// acceleration disturbance; the output is the position. Guards are tagged `vertical` (the
/// `px = 1` line) and `horizontal` (the `py = 1` line).
pub fn nav4() -> HybridAutomaton {
    HybridAutomaton::from_toml_str(NAV4_TOML).expect("bundled nav4 automaton is valid")
}
