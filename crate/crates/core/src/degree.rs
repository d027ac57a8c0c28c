//! Bisection for the smallest conformance degree.
//!
//! For a fixed `tau`, [`binary_search_epsilon`] keeps a bracket `[eps_l, eps_h]` where a
//! falsification campaign at `eps_l` found a non-conformant pair and one at `eps_h` did not, and
//! halves it exactly `K` times. [`binary_search_tau`] does the same over `tau` for a fixed `eps`,
//! minimizing temporal robustness. [`initial_bracket`] finds a starting `eps_h` (or `tau_h`) by
//! doubling. "Not falsified" means the campaign's budget ran out without a negative robustness,
//! so every upper bound is only as strong as the search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::falsify::{falsify, Campaign, FalsificationResult, FalsifyError, Objective, OptimizerConfig, SearchSpace, Theta};
use crate::monitor::{Robustness, RobustnessKind};
use crate::systems::SystemUnderTest;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DegreeError {
    #[error(transparent)]
    Falsify(#[from] FalsifyError),
    #[error("systems differ unboundedly at this {fixed_name} = {fixed}: still falsified at {value} after {doublings} doublings")]
    Unbounded { fixed_name: &'static str, fixed: f64, value: f64, doublings: usize },
    #[error("upper end {value} of the bracket is falsified (robustness {robustness})")]
    UpperFalsified { value: f64, robustness: Robustness },
    #[error("invalid bracket: {0}")]
    Bracket(String),
}

/// The parameter being searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Epsilon,
    Tau,
}

impl Axis {
    fn fixed_name(self) -> &'static str {
        match self {
            Axis::Epsilon => "tau",
            Axis::Tau => "eps",
        }
    }
}

/// Everything a campaign needs except the objective.
#[derive(Debug, Clone)]
pub struct SearchContext<'a> {
    pub model: &'a SystemUnderTest,
    pub implementation: &'a SystemUnderTest,
    pub horizon: f64,
    pub max_jumps: u32,
    pub space: &'a SearchSpace,
    pub optimizer: OptimizerConfig,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub best_robustness: Robustness,
    pub falsified: bool,
    pub tests_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeResult {
    pub axis: Axis,
    /// `tau` when searching over `eps`, and vice versa.
    pub fixed: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    /// Falsifying test at the final `lower`, if any midpoint was falsified.
    pub witness: Option<Theta>,
}

impl DegreeResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Seed for the `k`-th campaign of a search (splitmix64 of the base seed).
fn campaign_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SearchContext<'_> {
    fn objective(&self, axis: Axis, fixed: f64, value: f64) -> Objective {
        match axis {
            Axis::Epsilon => Objective::Conformance { tau: fixed, eps: value, kind: RobustnessKind::Spatial },
            Axis::Tau => Objective::Conformance { tau: value, eps: fixed, kind: RobustnessKind::Temporal },
        }
    }

    fn campaign(
        &self,
        axis: Axis,
        fixed: f64,
        value: f64,
        k: u64,
        warm: Option<&Theta>,
    ) -> Result<FalsificationResult, FalsifyError> {
        let objective = self.objective(axis, fixed, value);
        let c = Campaign {
            model: self.model,
            implementation: self.implementation,
            horizon: self.horizon,
            max_jumps: self.max_jumps,
            space: self.space,
            objective: &objective,
        };
        falsify(&c, &self.optimizer, self.budget, campaign_seed(self.seed, k), warm)
    }
}

fn record(iteration: usize, value: f64, r: &FalsificationResult) -> IterationRecord {
    IterationRecord {
        iteration,
        value,
        best_robustness: r.best_robustness,
        falsified: r.falsified,
        tests_run: r.tests_run,
    }
}

/// Doubles `start` until a campaign fails to falsify. At most `max_doublings` doublings.
pub fn initial_bracket(
    ctx: &SearchContext<'_>,
    axis: Axis,
    fixed: f64,
    start: f64,
    max_doublings: usize,
) -> Result<(f64, Vec<IterationRecord>), DegreeError> {
    if !(start > 0.0 && start.is_finite()) {
        return Err(DegreeError::Bracket(format!("starting value must be positive, got {start}")));
    }
    let mut value = start;
    let mut log = Vec::new();
    for d in 0..=max_doublings {
        let r = ctx.campaign(axis, fixed, value, 1000 + d as u64, None)?;
        log.push(record(d, value, &r));
        if !r.falsified {
            return Ok((value, log));
        }
        if d < max_doublings {
            value *= 2.0;
        }
    }
    Err(DegreeError::Unbounded { fixed_name: axis.fixed_name(), fixed, value, doublings: max_doublings })
}

fn bisect(
    ctx: &SearchContext<'_>,
    axis: Axis,
    fixed: f64,
    k: usize,
    lower: f64,
    upper: f64,
) -> Result<DegreeResult, DegreeError> {
    if k == 0 {
        return Err(DegreeError::Bracket("K must be at least 1".into()));
    }
    if !(lower >= 0.0 && lower < upper && upper.is_finite()) {
        return Err(DegreeError::Bracket(format!("need 0 <= lower < upper, got [{lower}, {upper}]")));
    }
    let top = ctx.campaign(axis, fixed, upper, 0, None)?;
    if top.falsified {
        return Err(DegreeError::UpperFalsified { value: upper, robustness: top.best_robustness });
    }
    let (mut lo, mut hi) = (lower, upper);
    let mut log = Vec::with_capacity(k);
    let mut witness: Option<Theta> = None;
    for it in 1..=k {
        let mid = 0.5 * (lo + hi);
        let r = ctx.campaign(axis, fixed, mid, it as u64, witness.as_ref())?;
        log.push(record(it, mid, &r));
        if r.falsified {
            lo = mid;
            witness = Some(r.best_theta);
        } else {
            hi = mid;
        }
    }
    Ok(DegreeResult { axis, fixed, lower: lo, upper: hi, iterations: k, log, witness })
}

/// `K` halvings of `[eps_l, eps_h]` at fixed `tau`. Fails before iterating if `eps_h` itself is
/// falsified.
pub fn binary_search_epsilon(
    ctx: &SearchContext<'_>,
    tau: f64,
    k: usize,
    eps_l: f64,
    eps_h: f64,
) -> Result<DegreeResult, DegreeError> {
    bisect(ctx, Axis::Epsilon, tau, k, eps_l, eps_h)
}

/// `K` halvings of `[tau_l, tau_h]` at fixed `eps`, on temporal robustness.
pub fn binary_search_tau(
    ctx: &SearchContext<'_>,
    eps: f64,
    k: usize,
    tau_l: f64,
    tau_h: f64,
) -> Result<DegreeResult, DegreeError> {
    bisect(ctx, Axis::Tau, eps, k, tau_l, tau_h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub tau: f64,
    pub result: Result<DegreeResult, String>,
}

/// `binary_search_epsilon` at every `tau` of the grid, starting from `[0, eps_h]`. Where `eps_h`
/// is falsified at some `tau`, the bracket is first widened by doubling. Grid points run in
/// parallel; each carries its own status.
pub fn pareto_front(
    ctx: &SearchContext<'_>,
    taus: &[f64],
    k: usize,
    eps_h: f64,
    max_doublings: usize,
) -> Result<Vec<ParetoPoint>, DegreeError> {
    if taus.windows(2).any(|w| !(w[0] < w[1])) || taus.iter().any(|&t| !(t > 0.0)) {
        return Err(DegreeError::Bracket("tau grid must be positive and strictly increasing".into()));
    }
    Ok(taus
        .par_iter()
        .map(|&tau| {
            let result = match binary_search_epsilon(ctx, tau, k, 0.0, eps_h) {
                Err(DegreeError::UpperFalsified { .. }) => initial_bracket(ctx, Axis::Epsilon, tau, eps_h, max_doublings)
                    .and_then(|(h, _)| binary_search_epsilon(ctx, tau, k, 0.0, h)),
                r => r,
            };
            ParetoPoint { tau, result: result.map_err(|e| e.to_string()) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{BoxSet, HybridAutomaton, Interpolation, TraceReplay};
    use crate::tss::TimedStateSequence;

    fn constant(c: f64) -> SystemUnderTest {
        let t: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        SystemUnderTest::replay(TraceReplay::new(vec![TimedStateSequence::scalar(&vec![c; 21], &t).unwrap()]).unwrap())
    }

    fn space() -> SearchSpace {
        SearchSpace {
            h0: BoxSet::new(vec![0.0], vec![1.0]),
            input_boxes: vec![BoxSet::new(vec![], vec![])],
            n_control_points: 1,
            interpolation: Interpolation::Constant,
        }
    }

    fn ctx<'a>(m: &'a SystemUnderTest, i: &'a SystemUnderTest, sp: &'a SearchSpace) -> SearchContext<'a> {
        SearchContext {
            model: m,
            implementation: i,
            horizon: 2.0,
            max_jumps: 3,
            space: sp,
            optimizer: OptimizerConfig::UniformRandom,
            budget: 3,
            seed: 11,
        }
    }

    #[test]
    fn offset_bracket() {
        let (m, i, sp) = (constant(0.0), constant(0.3), space());
        let c = ctx(&m, &i, &sp);
        let (h, log) = initial_bracket(&c, Axis::Epsilon, 0.1, 0.1, 30).unwrap();
        assert_eq!(h, 0.4);
        assert_eq!(log.len(), 3);
        let r = binary_search_epsilon(&c, 0.1, 10, 0.0, 1.0).unwrap();
        assert_eq!(r.width(), 1.0 / 1024.0);
        assert!(r.lower <= 0.3 && 0.3 <= r.upper, "{r:?}");
        assert!(r.witness.is_some());
        assert_eq!(r.log.len(), 10);
    }

    #[test]
    fn identical_bracket() {
        let (m, sp) = (constant(0.0), space());
        let c = ctx(&m, &m, &sp);
        assert_eq!(initial_bracket(&c, Axis::Epsilon, 0.1, 1.0, 30).unwrap().0, 1.0);
        let r = binary_search_epsilon(&c, 0.1, 5, 0.0, 1.0).unwrap();
        assert_eq!((r.lower, r.upper), (0.0, 0.03125));
        assert!(r.log.iter().all(|l| !l.falsified));
        let r = binary_search_tau(&c, 0.1, 4, 0.0, 1.0).unwrap();
        assert_eq!((r.lower, r.upper), (0.0, 1.0 / 16.0));
    }

    #[test]
    fn upper_must_pass() {
        let (m, i, sp) = (constant(0.0), constant(0.3), space());
        let c = ctx(&m, &i, &sp);
        assert!(matches!(binary_search_epsilon(&c, 0.1, 3, 0.0, 0.2), Err(DegreeError::UpperFalsified { .. })));
    }

    #[test]
    fn unbounded_jump_mismatch() {
        let text = "name = \"z\"\nstate_dim = 1\ninitial_mode = \"a\"\nh0_box = { lower = [0.0], upper = [1.0] }\n\
                    [[modes]]\nname = \"a\"\na = [[0.0]]\nc = [1.0]\n\
                    [[edges]]\nfrom = \"a\"\nto = \"a\"\nguard = [{ normal = [1.0], bound = 1.5 }]\n\
                    reset = { matrix = [[0.0]] }\n";
        let jumpy = SystemUnderTest::automaton(HybridAutomaton::from_toml_str(text).unwrap(), 0.1);
        let flat = text.replace("bound = 1.5", "bound = 100.0");
        let flat = SystemUnderTest::automaton(HybridAutomaton::from_toml_str(&flat).unwrap(), 0.1);
        let sp = space();
        let c = ctx(&jumpy, &flat, &sp);
        let err = initial_bracket(&c, Axis::Epsilon, 0.1, 1.0, 30).unwrap_err();
        assert!(err.to_string().contains("systems differ unboundedly"));
        assert!(initial_bracket(&c, Axis::Tau, 0.1, 1.0, 5).is_err());
    }

    #[test]
    fn pareto_offset_is_flat() {
        let (m, i, sp) = (constant(0.0), constant(0.3), space());
        let c = ctx(&m, &i, &sp);
        let front = pareto_front(&c, &[0.05, 0.2, 0.5], 8, 1.0, 30).unwrap();
        for p in front {
            let r = p.result.unwrap();
            assert!(r.lower <= 0.3 && 0.3 <= r.upper);
        }
    }
}
