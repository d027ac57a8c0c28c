//! `(T, J, (tau, eps))`-closeness of two traces.
//!
//! [`is_close`], [`epsilon_star`] and [`tau_star`] work directly on the sample pairs. They are
//! the reference against which [`conformance_robustness`], the MTL formulation used during
//! falsification, is checked. Both traces are truncated to `t <= T`, `j <= J` first. Distances
//! are Euclidean.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::monitor::{
    EvalOptions, Evaluator, Formula, Interval, MonitorError, Norm, Predicate, Robustness, RobustnessKind,
    Signal,
};
use crate::tss::{
    parallel_concat, segment_by_jumps, window_count, window_count_times, FillPolicy, ParallelTrace,
    TimedStateSequence, TssError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformanceError {
    #[error(transparent)]
    Tss(#[from] TssError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("invalid closeness parameter: {0}")]
    InvalidParams(String),
    #[error("PWC deadline D = {d} must satisfy 0 < D < T = {horizon}")]
    PwcDeadline { d: f64, horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosenessParams {
    pub horizon: f64,
    pub max_jumps: u32,
    pub tau: f64,
    pub eps: f64,
}

impl ClosenessParams {
    pub fn new(horizon: f64, max_jumps: u32, tau: f64, eps: f64) -> Result<Self, ConformanceError> {
        let p = Self { horizon, max_jumps, tau, eps };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), ConformanceError> {
        for (name, v) in [("T", self.horizon), ("tau", self.tau), ("eps", self.eps)] {
            if !(v > 0.0) {
                return Err(ConformanceError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which trace the unmatched sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// A Model sample with no close Implementation sample.
    A,
    /// An Implementation sample with no close Model sample.
    B,
}

/// A sample with no close partner. `index` is 0-based; `Display` prints it 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Witness {
    pub index: usize,
    pub side: Side,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::A => "model",
            Side::B => "implementation",
        };
        write!(f, "i={} ({side})", self.index + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceVerdict {
    pub close: bool,
    pub witness: Option<Witness>,
    pub robustness: Option<Robustness>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    Norm::Euclidean.distance(a, b)
}

/// Samples of `other` with the same jump counter as `from[i]` and `|t - s| < tau`, visited in
/// time order.
fn partners<'a>(
    from: &'a TimedStateSequence,
    i: usize,
    other: &'a TimedStateSequence,
    tau: f64,
) -> impl Iterator<Item = usize> + 'a {
    let ts = from.timestamps()[i];
    let ot = other.timestamps();
    let start = ot.partition_point(|s| ts.t - s.t >= tau);
    (start..other.len()).take_while(move |&k| ot[k].t - ts.t < tau).filter(move |&k| ot[k].j == ts.j)
}

/// Smallest distance from `from[i]` to a partner within `tau`; `+inf` when there is none.
fn nearest_value(from: &TimedStateSequence, i: usize, other: &TimedStateSequence, tau: f64) -> f64 {
    let Some(y) = from.sample(i) else {
        return f64::INFINITY;
    };
    partners(from, i, other, tau)
        .filter_map(|k| other.sample(k))
        .map(|z| distance(y, z))
        .fold(f64::INFINITY, f64::min)
}

fn first_unmatched(from: &TimedStateSequence, other: &TimedStateSequence, tau: f64, eps: f64) -> Option<usize> {
    (0..from.len()).find(|&i| nearest_value(from, i, other, tau) >= eps)
}

/// Direct check of closeness on an already truncated pair.
pub fn is_close_parallel(trace: &ParallelTrace, tau: f64, eps: f64) -> ConformanceVerdict {
    let (m, im) = (&trace.model, &trace.implementation);
    let witness = first_unmatched(m, im, tau, eps)
        .map(|index| Witness { index, side: Side::A })
        .or_else(|| first_unmatched(im, m, tau, eps).map(|index| Witness { index, side: Side::B }));
    ConformanceVerdict { close: witness.is_none(), witness, robustness: None }
}

/// Whether every sample of either trace has a sample of the other with the same jump counter,
/// strictly within `tau` in time and strictly within `eps` in value.
pub fn is_close(
    model: &TimedStateSequence,
    implementation: &TimedStateSequence,
    params: &ClosenessParams,
) -> Result<ConformanceVerdict, ConformanceError> {
    params.validate()?;
    let trace = parallel_concat(model, implementation, params.horizon, params.max_jumps)?;
    Ok(is_close_parallel(&trace, params.tau, params.eps))
}

fn positive(name: &str, v: f64) -> Result<(), ConformanceError> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(ConformanceError::InvalidParams(format!("{name} must be positive, got {v}")))
    }
}

/// `eps*(tau)` on a truncated pair: the largest, over samples of both traces, of the distance to
/// the nearest partner within `tau`. `+inf` when some sample has no partner at all.
pub fn epsilon_star_parallel(trace: &ParallelTrace, tau: f64) -> f64 {
    let one_way = |a: &TimedStateSequence, b: &TimedStateSequence| {
        (0..a.len()).map(|i| nearest_value(a, i, b, tau)).fold(0.0, f64::max)
    };
    one_way(&trace.model, &trace.implementation).max(one_way(&trace.implementation, &trace.model))
}

/// The infimum of the `eps` for which the traces are close at `tau`. At exactly this value they are
/// not close, since the value bound is strict.
pub fn epsilon_star(
    model: &TimedStateSequence,
    implementation: &TimedStateSequence,
    tau: f64,
    horizon: f64,
    max_jumps: u32,
) -> Result<f64, ConformanceError> {
    positive("tau", tau)?;
    let trace = parallel_concat(model, implementation, horizon, max_jumps)?;
    Ok(epsilon_star_parallel(&trace, tau))
}

/// Time offset to the nearest same-`j` sample of `other` closer than `eps` in value.
fn nearest_time(from: &TimedStateSequence, i: usize, other: &TimedStateSequence, eps: f64) -> f64 {
    let Some(y) = from.sample(i) else {
        return f64::INFINITY;
    };
    let ts = from.timestamps()[i];
    let ot = other.timestamps();
    let ok = |k: usize| ot[k].j == ts.j && other.sample(k).is_some_and(|z| distance(y, z) < eps);
    // Walk outwards from the insertion point so the first hit on each side is the nearest.
    let mid = ot.partition_point(|s| s.t < ts.t);
    let after = (mid..other.len()).find(|&k| ok(k)).map(|k| ot[k].t - ts.t);
    let before = (0..mid).rev().find(|&k| ok(k)).map(|k| ts.t - ot[k].t);
    match (before, after) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => a.or(b).unwrap_or(f64::INFINITY),
    }
}

/// `tau*(eps)` on a truncated pair.
pub fn tau_star_parallel(trace: &ParallelTrace, eps: f64) -> f64 {
    let one_way = |a: &TimedStateSequence, b: &TimedStateSequence| {
        (0..a.len()).map(|i| nearest_time(a, i, b, eps)).fold(0.0, f64::max)
    };
    one_way(&trace.model, &trace.implementation).max(one_way(&trace.implementation, &trace.model))
}

/// The infimum of the `tau` for which the traces are close at `eps`; `+inf` when no time shift
/// brings some sample within `eps`.
pub fn tau_star(
    model: &TimedStateSequence,
    implementation: &TimedStateSequence,
    eps: f64,
    horizon: f64,
    max_jumps: u32,
) -> Result<f64, ConformanceError> {
    positive("eps", eps)?;
    let trace = parallel_concat(model, implementation, horizon, max_jumps)?;
    Ok(tau_star_parallel(&trace, eps))
}

/// The two halves of the closeness formula for one pair of jump-free pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFormulas {
    pub jump: u32,
    /// Shifts applied to the Implementation: `k` in `-n..=n`.
    pub n: usize,
    /// Shifts applied to the Model: `k` in `-m..=m`.
    pub m: usize,
    /// `[]_[0,T] p1`, evaluated with the Model as the reference trace.
    pub p1: Formula,
    /// `[]_[0,T] p2`, evaluated on the swapped pair.
    pub p2: Formula,
}

/// `\/_{k=-n..n} ||y_ref - S_k y_other|| < eps` under `[]_[0,T]`.
pub fn shifted_closeness_formula(shifts: usize, eps: f64, horizon: f64) -> Formula {
    let s = shifts as i64;
    let p = Formula::or((-s..=s).map(|k| Formula::atom(Predicate::norm_less_than(Signal::Difference, k, eps))).collect());
    Formula::always(Interval::closed(0.0, horizon), p)
}

fn segment_window(times: &[f64], tau: f64) -> usize {
    if times.len() <= 1 || times[0] == times[times.len() - 1] {
        0
    } else {
        window_count_times(times, tau)
    }
}

fn evaluate_pair(
    trace: &ParallelTrace,
    f: &SegmentFormulas,
    kind: RobustnessKind,
    fill: FillPolicy,
) -> Result<f64, ConformanceError> {
    let opts = EvalOptions { norm: Norm::Euclidean, fill };
    let r1 = Evaluator::with_options(trace, kind, opts).at_index(&f.p1, 0)?;
    let swapped = trace.swapped();
    let r2 = Evaluator::with_options(&swapped, kind, opts).at_index(&f.p2, 0)?;
    Ok(r1.value().min(r2.value()))
}

/// Robustness of the closeness formula. Positive robustness means the pair is close.
///
/// A real-timed pair (both traces on `j = 1`) is handled as one piece with constant-interpolation
/// fill. Otherwise both traces are split at their jumps, pieces are paired by jump counter and
/// shifted with the `+inf` fill; a jump counter present in only one trace gives `-inf`. The
/// result is the minimum over pieces.
pub fn conformance_robustness(
    trace: &ParallelTrace,
    tau: f64,
    eps: f64,
    kind: RobustnessKind,
) -> Result<Robustness, ConformanceError> {
    positive("tau", tau)?;
    positive("eps", eps)?;
    let single_j = |t: &TimedStateSequence| {
        let ts = t.timestamps();
        ts.iter().all(|s| s.j == ts[0].j).then_some(ts[0].j)
    };
    let real = matches!(
        (single_j(&trace.model), single_j(&trace.implementation)),
        (Some(a), Some(b)) if a == b
    );
    if real {
        let n = window_count(&trace.implementation, tau)?;
        let m = window_count(&trace.model, tau)?;
        let f = SegmentFormulas {
            jump: trace.model.timestamps()[0].j,
            n,
            m,
            p1: shifted_closeness_formula(n, eps, trace.horizon),
            p2: shifted_closeness_formula(m, eps, trace.horizon),
        };
        return Ok(Robustness::new(evaluate_pair(trace, &f, kind, FillPolicy::ConstantInterpolation)?));
    }
    let ms = segment_by_jumps(&trace.model);
    let is = segment_by_jumps(&trace.implementation);
    let jumps: BTreeSet<u32> = ms.iter().chain(&is).map(|s| s.jump).collect();
    let mut worst = f64::INFINITY;
    for j in jumps {
        let (Some(a), Some(b)) = (ms.iter().find(|s| s.jump == j), is.iter().find(|s| s.jump == j)) else {
            return Ok(Robustness::BOTTOM);
        };
        let at: Vec<f64> = a.trace.times().collect();
        let bt: Vec<f64> = b.trace.times().collect();
        let n = segment_window(&bt, tau);
        let m = segment_window(&at, tau);
        let f = SegmentFormulas {
            jump: j,
            n,
            m,
            p1: shifted_closeness_formula(n, eps, trace.horizon),
            p2: shifted_closeness_formula(m, eps, trace.horizon),
        };
        let pair = ParallelTrace {
            model: a.trace.clone(),
            implementation: b.trace.clone(),
            horizon: trace.horizon,
            max_jumps: trace.max_jumps,
        };
        worst = worst.min(evaluate_pair(&pair, &f, kind, FillPolicy::PositiveInfinity)?);
    }
    Ok(Robustness::new(worst))
}

/// Mode-switching formula: whenever the two traces are in different modes they are back in the
/// same mode within `d` seconds, `[]_[0,T-D]((lM != lI) -> <>_[0,D](lM == lI))`.
pub fn build_pwc_formula(d: f64, horizon: f64) -> Result<Formula, ConformanceError> {
    if !(d > 0.0 && d < horizon) {
        return Err(ConformanceError::PwcDeadline { d, horizon });
    }
    Ok(Formula::always(
        Interval::closed(0.0, horizon - d),
        Formula::implies(
            Formula::atom(Predicate::ModeDiffers),
            Formula::eventually(Interval::closed(0.0, d), Formula::atom(Predicate::ModeEquals)),
        ),
    ))
}
