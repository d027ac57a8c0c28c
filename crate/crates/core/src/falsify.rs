//! Search for non-conformant trajectory pairs.
//!
//! A test is a point `theta = (h0, control values)` of the [`SearchSpace`]. Both systems are
//! simulated on it, the outputs are paired into a [`ParallelTrace`], and the [`Objective`]'s
//! robustness is computed. The search minimizes robustness and stops at the first negative value.
//!
//! Runs are deterministic given the seed. Uniform random search evaluates tests in parallel
//! batches but consumes the results in submission order, so parallelism only changes wall time.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::conformance_robustness;
use crate::monitor::{Evaluator, Formula, Robustness, RobustnessKind};
use crate::systems::{BoxSet, InputSignal, Interpolation, SimRequest, SystemUnderTest};
use crate::tss::{parallel_concat, ParallelTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FalsifyError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("every test failed; first error: {0}")]
    AllTestsFailed(String),
}

/// Initial-condition box and per-control-point input boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub h0: BoxSet,
    /// One box shared by every control point, or one box per control point.
    pub input_boxes: Vec<BoxSet>,
    pub n_control_points: usize,
    #[serde(default)]
    pub interpolation: Interpolation,
}

/// A test: initial condition and input control values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub h0: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), FalsifyError> {
        let bad = |m: &str| Err(FalsifyError::Space(m.to_string()));
        if !self.h0.is_valid() {
            return bad("h0 box is empty or malformed");
        }
        if self.n_control_points == 0 {
            return bad("need at least one control point");
        }
        if self.input_boxes.is_empty() {
            return bad("no input box");
        }
        if self.input_boxes.len() != 1 && self.input_boxes.len() != self.n_control_points {
            return bad("input_boxes must have one entry or one per control point");
        }
        let dim = self.input_boxes[0].dim();
        if self.input_boxes.iter().any(|b| !b.is_valid() || b.dim() != dim) {
            return bad("input boxes are empty, malformed or of different dimensions");
        }
        Ok(())
    }

    fn input_box(&self, i: usize) -> &BoxSet {
        &self.input_boxes[if self.input_boxes.len() == 1 { 0 } else { i }]
    }

    /// All boxes in `theta` order: `h0` coordinates, then control point 0, 1, ...
    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.h0.lower.iter().copied().zip(self.h0.upper.iter().copied()).collect();
        for i in 0..self.n_control_points {
            let b = self.input_box(i);
            out.extend(b.lower.iter().copied().zip(b.upper.iter().copied()));
        }
        out
    }

    fn split(&self, flat: &[f64]) -> Theta {
        let n = self.h0.dim();
        let m = self.input_boxes[0].dim();
        Theta { h0: flat[..n].to_vec(), controls: flat[n..].chunks(m.max(1)).map(<[f64]>::to_vec).collect() }
    }

    fn flatten(&self, theta: &Theta) -> Vec<f64> {
        theta.h0.iter().chain(theta.controls.iter().flatten()).copied().collect()
    }

    pub fn contains(&self, theta: &Theta) -> bool {
        let flat = self.flatten(theta);
        let b = self.bounds();
        flat.len() == b.len() && flat.iter().zip(&b).all(|(x, (l, u))| l <= x && x <= u)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Theta {
        let flat: Vec<f64> = self.bounds().iter().map(|&(l, u)| if u > l { rng.random_range(l..=u) } else { l }).collect();
        self.split(&flat)
    }

    /// The input signal a test drives both systems with.
    pub fn input_signal(&self, theta: &Theta, horizon: f64) -> InputSignal {
        if self.input_boxes[0].dim() == 0 {
            return InputSignal::none(horizon);
        }
        InputSignal::uniform(theta.controls.clone(), self.interpolation, horizon)
            .expect("uniform control points are valid")
    }
}

/// Reflects `x` into `[l, u]`.
fn reflect(mut x: f64, l: f64, u: f64) -> f64 {
    if u <= l {
        return l;
    }
    for _ in 0..8 {
        if x < l {
            x = 2.0 * l - x;
        } else if x > u {
            x = 2.0 * u - x;
        } else {
            return x;
        }
    }
    x.clamp(l, u)
}

/// Gaussian step of `sigma` box widths per coordinate, reflected back into the box.
pub fn propose(space: &SearchSpace, current: &Theta, sigma: f64, rng: &mut impl Rng) -> Theta {
    let flat: Vec<f64> = space
        .flatten(current)
        .iter()
        .zip(space.bounds())
        .map(|(&x, (l, u))| {
            let z: f64 = StandardNormal.sample(rng);
            reflect(x + sigma * (u - l) * z, l, u)
        })
        .collect();
    space.split(&flat)
}

/// Metropolis acceptance of a move that changes robustness by `delta` (negative is better).
pub fn accept(delta: f64, temperature: f64, rng: &mut impl Rng) -> bool {
    if delta.is_nan() || delta <= 0.0 {
        return true;
    }
    if temperature <= 0.0 {
        return false;
    }
    rng.random::<f64>() < (-delta / temperature).exp()
}

/// What a test measures.
#[derive(Debug, Clone)]
pub enum Objective {
    /// Robustness of the `(tau, eps)` closeness formula.
    Conformance { tau: f64, eps: f64, kind: RobustnessKind },
    /// Robustness of an arbitrary formula over the pair, at the first sample.
    Formula { formula: Formula, kind: RobustnessKind },
}

impl Objective {
    pub fn evaluate(&self, trace: &ParallelTrace) -> Result<Robustness, String> {
        match self {
            Objective::Conformance { tau, eps, kind } => {
                conformance_robustness(trace, *tau, *eps, *kind).map_err(|e| e.to_string())
            }
            Objective::Formula { formula, kind } => {
                Evaluator::new(trace, *kind).at_index(formula, 0).map_err(|e| e.to_string())
            }
        }
    }
}

fn default_cooling() -> f64 {
    0.97
}

fn default_sigma() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OptimizerConfig {
    SimulatedAnnealing {
        /// Defaults to the magnitude of the first test's robustness (1 when that is infinite or 0).
        #[serde(default)]
        initial_temperature: Option<f64>,
        #[serde(default = "default_cooling")]
        cooling: f64,
        /// Proposal standard deviation as a fraction of each box width.
        #[serde(default = "default_sigma")]
        sigma: f64,
        /// Fresh uniform starting points; the budget is split evenly between chains.
        #[serde(default)]
        restarts: usize,
    },
    UniformRandom,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::SimulatedAnnealing {
            initial_temperature: None,
            cooling: default_cooling(),
            sigma: default_sigma(),
            restarts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test_id: u64,
    pub theta: Theta,
    /// `None` when simulation or evaluation failed.
    pub robustness: Option<Robustness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsificationResult {
    pub best_theta: Theta,
    pub best_robustness: Robustness,
    pub tests_run: usize,
    pub falsified: bool,
    pub rng_seed: u64,
    /// Seconds; not serialized so that reports of repeated runs are identical.
    #[serde(skip)]
    pub wall_time: f64,
    pub log: Vec<TestRecord>,
}

/// The two systems and the fixed parts of every test.
#[derive(Debug, Clone)]
pub struct Campaign<'a> {
    pub model: &'a SystemUnderTest,
    pub implementation: &'a SystemUnderTest,
    pub horizon: f64,
    pub max_jumps: u32,
    pub space: &'a SearchSpace,
    pub objective: &'a Objective,
}

impl Campaign<'_> {
    /// Simulates both systems on `theta` and pairs their outputs.
    pub fn parallel_trace(&self, theta: &Theta, test_id: u64) -> Result<ParallelTrace, String> {
        let input = self.space.input_signal(theta, self.horizon);
        let req = SimRequest { test_id, h0: &theta.h0, input: &input, horizon: self.horizon, max_jumps: self.max_jumps };
        let m = self.model.simulate(&req).map_err(|e| format!("model: {e}"))?;
        let i = self.implementation.simulate(&req).map_err(|e| format!("implementation: {e}"))?;
        parallel_concat(&m, &i, self.horizon, self.max_jumps).map_err(|e| e.to_string())
    }

    /// One test; also used to re-check a reported witness.
    pub fn run_test(&self, theta: &Theta, test_id: u64) -> TestRecord {
        let r = self.parallel_trace(theta, test_id).and_then(|pt| self.objective.evaluate(&pt));
        match r {
            Ok(r) => TestRecord { test_id, theta: theta.clone(), robustness: Some(r), error: None },
            Err(e) => TestRecord { test_id, theta: theta.clone(), robustness: None, error: Some(e) },
        }
    }
}

struct Tracker {
    log: Vec<TestRecord>,
    best: Option<(Theta, Robustness)>,
}

impl Tracker {
    fn push(&mut self, rec: TestRecord) -> Option<f64> {
        let r = rec.robustness;
        if let Some(r) = r {
            if self.best.as_ref().is_none_or(|(_, b)| r < *b) {
                self.best = Some((rec.theta.clone(), r));
            }
        }
        self.log.push(rec);
        r.map(Robustness::value)
    }

    fn done(&self) -> bool {
        self.best.as_ref().is_some_and(|(_, b)| b.is_negative())
    }
}

/// Batch size for parallel uniform sampling; fixed so the outcome is independent of thread count.
const BATCH: usize = 16;

/// Minimizes the objective's robustness over the search space with at most `budget` tests.
pub fn falsify(
    campaign: &Campaign<'_>,
    optimizer: &OptimizerConfig,
    budget: usize,
    seed: u64,
    warm_start: Option<&Theta>,
) -> Result<FalsificationResult, FalsifyError> {
    campaign.space.validate()?;
    if budget == 0 {
        return Err(FalsifyError::ZeroBudget);
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr = Tracker { log: Vec::new(), best: None };
    let warm = warm_start.filter(|t| campaign.space.contains(t));
    match optimizer {
        OptimizerConfig::UniformRandom => {
            let mut next_id = 0u64;
            if let Some(w) = warm {
                tr.push(campaign.run_test(w, 0));
                next_id = 1;
            }
            while !tr.done() && (next_id as usize) < budget {
                let n = BATCH.min(budget - next_id as usize);
                let thetas: Vec<Theta> = (0..n).map(|_| campaign.space.sample(&mut rng)).collect();
                let recs: Vec<TestRecord> = thetas
                    .par_iter()
                    .enumerate()
                    .map(|(k, th)| campaign.run_test(th, next_id + k as u64))
                    .collect();
                for rec in recs {
                    tr.push(rec);
                    next_id += 1;
                    if tr.done() {
                        break;
                    }
                }
            }
        }
        OptimizerConfig::SimulatedAnnealing { initial_temperature, cooling, sigma, restarts } => {
            let chains = restarts + 1;
            let mut test_id = 0u64;
            'chains: for c in 0..chains {
                let chain_budget = budget / chains + usize::from(c < budget % chains);
                if chain_budget == 0 {
                    continue;
                }
                let mut current = match (c, warm) {
                    (0, Some(w)) => w.clone(),
                    _ => campaign.space.sample(&mut rng),
                };
                let mut current_r = tr.push(campaign.run_test(&current, test_id)).unwrap_or(f64::INFINITY);
                test_id += 1;
                if tr.done() {
                    break;
                }
                let mut temp = initial_temperature.unwrap_or(if current_r.is_finite() && current_r != 0.0 {
                    current_r.abs()
                } else {
                    1.0
                });
                for _ in 1..chain_budget {
                    let cand = propose(campaign.space, &current, *sigma, &mut rng);
                    let r = tr.push(campaign.run_test(&cand, test_id)).unwrap_or(f64::INFINITY);
                    test_id += 1;
                    if tr.done() {
                        break 'chains;
                    }
                    if accept(r - current_r, temp, &mut rng) && !(r == f64::INFINITY && current_r < f64::INFINITY) {
                        current = cand;
                        current_r = r;
                    }
                    temp *= cooling;
                }
            }
        }
    }
    let (best_theta, best_robustness) = match tr.best {
        Some(b) => b,
        None => {
            let first = tr.log.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(FalsifyError::AllTestsFailed(first));
        }
    };
    Ok(FalsificationResult {
        falsified: best_robustness.is_negative(),
        best_theta,
        best_robustness,
        tests_run: tr.log.len(),
        rng_seed: seed,
        wall_time: started.elapsed().as_secs_f64(),
        log: tr.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{HybridAutomaton, SystemUnderTest};

    fn drift(offset: f64) -> SystemUnderTest {
        let text = format!(
            "name = \"d\"\nstate_dim = 1\ninput_dim = 1\ninitial_mode = \"a\"\n\
             h0_box = {{ lower = [0.0], upper = [1.0] }}\noutput = {{ matrix = [[1.0]], offset = [{offset}] }}\n\
             [[modes]]\nname = \"a\"\na = [[-1.0]]\nb = [[1.0]]\n"
        );
        SystemUnderTest::automaton(HybridAutomaton::from_toml_str(&text).unwrap(), 0.1)
    }

    fn space() -> SearchSpace {
        SearchSpace {
            h0: BoxSet::new(vec![0.0], vec![1.0]),
            input_boxes: vec![BoxSet::new(vec![-1.0], vec![1.0])],
            n_control_points: 3,
            interpolation: Interpolation::Constant,
        }
    }

    #[test]
    fn identical_systems_never_falsify() {
        let s = drift(0.0);
        let sp = space();
        let obj = Objective::Conformance { tau: 0.1, eps: 0.2, kind: RobustnessKind::Spatial };
        let c = Campaign { model: &s, implementation: &s, horizon: 2.0, max_jumps: 1, space: &sp, objective: &obj };
        for opt in [OptimizerConfig::default(), OptimizerConfig::UniformRandom] {
            let r = falsify(&c, &opt, 20, 7, None).unwrap();
            assert!(!r.falsified);
            assert_eq!(r.tests_run, 20);
            assert!(r.log.iter().all(|t| t.robustness.unwrap().value() == 0.2));
        }
    }

    #[test]
    fn offset_falsifies_first_test() {
        let (m, i) = (drift(0.0), drift(1.0));
        let sp = space();
        let obj = Objective::Conformance { tau: 0.1, eps: 0.5, kind: RobustnessKind::Spatial };
        let c = Campaign { model: &m, implementation: &i, horizon: 2.0, max_jumps: 1, space: &sp, objective: &obj };
        let r = falsify(&c, &OptimizerConfig::default(), 100, 1, None).unwrap();
        assert!(r.falsified);
        assert_eq!(r.tests_run, 1);
        assert!((r.best_robustness.value() + 0.5).abs() < 1e-12);
        // the witness reproduces
        let again = c.run_test(&r.best_theta, 0);
        assert_eq!(again.robustness, Some(r.best_robustness));
    }

    #[test]
    fn reproducible() {
        let (m, i) = (drift(0.0), drift(0.05));
        let sp = space();
        let obj = Objective::Conformance { tau: 0.1, eps: 0.2, kind: RobustnessKind::Spatial };
        let c = Campaign { model: &m, implementation: &i, horizon: 2.0, max_jumps: 1, space: &sp, objective: &obj };
        for opt in [OptimizerConfig::default(), OptimizerConfig::UniformRandom] {
            let a = falsify(&c, &opt, 40, 3, None).unwrap();
            let b = falsify(&c, &opt, 40, 3, None).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.best_theta, b.best_theta);
        }
    }

    #[test]
    fn proposal_stays_in_box() {
        let sp = space();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut th = Theta { h0: vec![1.0], controls: vec![vec![-1.0]; 3] };
        for _ in 0..1000 {
            th = propose(&sp, &th, 0.8, &mut rng);
            assert!(sp.contains(&th));
        }
    }

    #[test]
    fn metropolis_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| accept(-1.0, 1e-9, &mut rng)));
        assert!((0..100).all(|_| !accept(1.0, 1e-12, &mut rng)));
        assert!(!accept(1.0, 0.0, &mut rng));
    }
}
