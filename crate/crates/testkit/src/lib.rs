//! Reference implementations and random generators shared by the test suites.
//!
//! The oracles here are deliberately naive: they follow the textbook definitions sample by
//! sample, materialize shifted copies with [`cpsconf_core::tss::shift`], and never share code with
//! the evaluators they check.

use cpsconf_core::conformance::is_close_parallel;
use cpsconf_core::monitor::{CmpOp, Formula, Interval, Predicate, Signal};
use cpsconf_core::tss::{shift, FillPolicy, HybridTimestamp, ParallelTrace, TimedStateSequence};
use rand::Rng;

fn euclid(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-sample values an atom reads, computed from materialized shifted copies. Both traces must
/// have the same length. Sentinel samples read as `None`.
struct Atoms<'a> {
    trace: &'a ParallelTrace,
}

impl Atoms<'_> {
    fn shifted(&self, tss: &TimedStateSequence, k: i64) -> TimedStateSequence {
        shift(tss, k, FillPolicy::ConstantInterpolation, self.trace.horizon).expect("shift within length")
    }

    fn scalar(&self, signal: Signal, component: Option<usize>, k: i64) -> Vec<f64> {
        let pick = |v: &[f64]| match component {
            Some(c) => v[c - 1],
            None => euclid(v.iter().copied()),
        };
        let m = &self.trace.model;
        let im = &self.trace.implementation;
        match signal {
            Signal::Model => {
                let s = self.shifted(m, k);
                (0..s.len()).map(|i| pick(s.raw_sample(i))).collect()
            }
            Signal::Implementation => {
                let s = self.shifted(im, k);
                (0..s.len()).map(|i| pick(s.raw_sample(i))).collect()
            }
            Signal::Difference => {
                let s = self.shifted(im, k);
                (0..m.len())
                    .map(|i| {
                        let (a, b) = (m.raw_sample(i), s.raw_sample(i));
                        match component {
                            Some(c) => a[c - 1] - b[c - 1],
                            None => euclid(a.iter().zip(b).map(|(x, y)| x - y)),
                        }
                    })
                    .collect()
            }
        }
    }

    fn modes(&self) -> Vec<(i64, i64)> {
        let ml = self.trace.model.modes().expect("model modes");
        let il = self.trace.implementation.modes().expect("implementation modes");
        let its = self.trace.implementation.timestamps();
        self.trace
            .model
            .timestamps()
            .iter()
            .enumerate()
            .map(|(i, ts)| {
                let mut k = 0;
                for (q, s) in its.iter().enumerate() {
                    if s.t <= ts.t {
                        k = q;
                    }
                }
                (ml[i], il[k])
            })
            .collect()
    }

    fn truth(&self, p: &Predicate) -> Vec<bool> {
        match p {
            Predicate::NormLessThan { signal, shift, threshold } => {
                self.scalar(*signal, None, *shift).into_iter().map(|x| x < *threshold).collect()
            }
            Predicate::Compare { signal, component, shift, op, threshold } => self
                .scalar(*signal, *component, *shift)
                .into_iter()
                .map(|x| match op {
                    CmpOp::Lt => x < *threshold,
                    CmpOp::Le => x <= *threshold,
                    CmpOp::Gt => x > *threshold,
                    CmpOp::Ge => x >= *threshold,
                })
                .collect(),
            Predicate::ModeEquals => self.modes().into_iter().map(|(a, b)| a == b).collect(),
            Predicate::ModeDiffers => self.modes().into_iter().map(|(a, b)| a != b).collect(),
            Predicate::Custom(_) => panic!("oracle does not evaluate custom predicates"),
        }
    }

    fn distance(&self, p: &Predicate) -> Vec<f64> {
        match p {
            Predicate::NormLessThan { signal, shift, threshold } => {
                self.scalar(*signal, None, *shift).into_iter().map(|x| threshold - x).collect()
            }
            Predicate::Compare { signal, component, shift, op, threshold } => self
                .scalar(*signal, *component, *shift)
                .into_iter()
                .map(|x| match op {
                    CmpOp::Lt | CmpOp::Le => threshold - x,
                    CmpOp::Gt | CmpOp::Ge => x - threshold,
                })
                .collect(),
            Predicate::ModeEquals | Predicate::ModeDiffers => {
                self.truth(p).into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
            }
            Predicate::Custom(_) => panic!("oracle does not evaluate custom predicates"),
        }
    }
}

fn in_window(trace: &ParallelTrace, interval: &Interval, i: usize, k: usize) -> bool {
    let ts: Vec<f64> = trace.model.times().collect();
    k >= i && interval.contains(ts[k] - ts[i]) && ts[k] <= trace.horizon
}

/// Boolean satisfaction of `phi` at every sample of the Model grid.
pub fn boolean_signal(phi: &Formula, trace: &ParallelTrace) -> Vec<bool> {
    let n = trace.model.len();
    let atoms = Atoms { trace };
    match phi {
        Formula::True => vec![true; n],
        Formula::Atom(p) => atoms.truth(p),
        Formula::Not(f) => boolean_signal(f, trace).into_iter().map(|b| !b).collect(),
        Formula::Or(fs) => {
            let subs: Vec<_> = fs.iter().map(|f| boolean_signal(f, trace)).collect();
            (0..n).map(|i| subs.iter().any(|s| s[i])).collect()
        }
        Formula::And(fs) => {
            let subs: Vec<_> = fs.iter().map(|f| boolean_signal(f, trace)).collect();
            (0..n).map(|i| subs.iter().all(|s| s[i])).collect()
        }
        Formula::Implies(a, b) => {
            let (a, b) = (boolean_signal(a, trace), boolean_signal(b, trace));
            (0..n).map(|i| !a[i] || b[i]).collect()
        }
        Formula::Eventually(iv, f) => {
            let s = boolean_signal(f, trace);
            (0..n).map(|i| (0..n).any(|k| in_window(trace, iv, i, k) && s[k])).collect()
        }
        Formula::Always(iv, f) => {
            let s = boolean_signal(f, trace);
            (0..n).map(|i| (0..n).all(|k| !in_window(trace, iv, i, k) || s[k])).collect()
        }
        Formula::Until(iv, a, b) => {
            let (a, b) = (boolean_signal(a, trace), boolean_signal(b, trace));
            (0..n)
                .map(|i| (0..n).any(|k| in_window(trace, iv, i, k) && b[k] && (i..k).all(|l| a[l])))
                .collect()
        }
    }
}

/// Time robustness straight from the definition: walk back and ahead while the truth value is
/// unchanged, then take the smaller of the two signed durations.
pub fn naive_time_robustness(truth: &[bool], times: &[f64]) -> Vec<f64> {
    let n = truth.len();
    if truth.iter().all(|&b| b == truth[0]) {
        return vec![if truth[0] { f64::INFINITY } else { f64::NEG_INFINITY }; n];
    }
    (0..n)
        .map(|i| {
            let sign = if truth[i] { 1.0 } else { -1.0 };
            let mut a = i;
            while a > 0 && truth[a - 1] == truth[i] {
                a -= 1;
            }
            let mut b = i;
            while b + 1 < n && truth[b + 1] == truth[i] {
                b += 1;
            }
            let r = f64::min(sign * (times[i] - times[a]), sign * (times[b] - times[i]));
            if r == 0.0 {
                0.0
            } else {
                r
            }
        })
        .collect()
}

/// Robustness signal by direct enumeration of the sup/inf sets (O(N^2) per operator).
pub fn naive_robustness(phi: &Formula, trace: &ParallelTrace, temporal: bool) -> Vec<f64> {
    let n = trace.model.len();
    let atoms = Atoms { trace };
    let rec = |f: &Formula| naive_robustness(f, trace, temporal);
    match phi {
        Formula::True => vec![f64::INFINITY; n],
        Formula::Atom(p) => {
            if temporal {
                let times: Vec<f64> = trace.model.times().collect();
                naive_time_robustness(&atoms.truth(p), &times)
            } else {
                atoms.distance(p)
            }
        }
        Formula::Not(f) => rec(f).into_iter().map(|x| -x).collect(),
        Formula::Or(fs) => {
            let subs: Vec<_> = fs.iter().map(rec).collect();
            (0..n).map(|i| subs.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max)).collect()
        }
        Formula::And(fs) => {
            let subs: Vec<_> = fs.iter().map(rec).collect();
            (0..n).map(|i| subs.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min)).collect()
        }
        Formula::Implies(a, b) => {
            let (a, b) = (rec(a), rec(b));
            (0..n).map(|i| f64::max(-a[i], b[i])).collect()
        }
        Formula::Eventually(iv, f) => {
            let s = rec(f);
            (0..n)
                .map(|i| (0..n).filter(|&k| in_window(trace, iv, i, k)).map(|k| s[k]).fold(f64::NEG_INFINITY, f64::max))
                .collect()
        }
        Formula::Always(iv, f) => {
            let s = rec(f);
            (0..n)
                .map(|i| (0..n).filter(|&k| in_window(trace, iv, i, k)).map(|k| s[k]).fold(f64::INFINITY, f64::min))
                .collect()
        }
        Formula::Until(iv, a, b) => {
            let (a, b) = (rec(a), rec(b));
            (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&k| in_window(trace, iv, i, k))
                        .map(|k| f64::min(b[k], a[i..k].iter().copied().fold(f64::INFINITY, f64::min)))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        }
    }
}

/// Smallest `eps` (to within `tol`) at which [`is_close_parallel`] holds, found by bisection on
/// `[0, hi]`; `+inf` when even `hi` fails.
pub fn bisect_epsilon_star(trace: &ParallelTrace, tau: f64, hi: f64, tol: f64) -> f64 {
    if !is_close_parallel(trace, tau, hi).close {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_close_parallel(trace, tau, mid).close {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Shape of a generated trace pair.
#[derive(Debug, Clone, Copy)]
pub struct PairShape {
    pub len: usize,
    pub dim: usize,
    pub dt: f64,
    /// Number of zero-time jumps placed in the shared timeline.
    pub jumps: usize,
}

/// A random timeline on a uniform grid of step `dt`, with `jumps` repeated instants where `j`
/// increments. The grid has `len` samples in total.
pub fn timeline(rng: &mut impl Rng, len: usize, dt: f64, jumps: usize) -> Vec<HybridTimestamp> {
    let jumps = jumps.min(len.saturating_sub(1));
    let mut at: Vec<usize> = (1..len).collect();
    // pick jump positions among sample indices 1..len
    for i in 0..jumps {
        let k = rng.random_range(i..at.len());
        at.swap(i, k);
    }
    let mut jump_at: Vec<usize> = at[..jumps].to_vec();
    jump_at.sort_unstable();
    let mut out = Vec::with_capacity(len);
    let (mut step, mut j) = (0usize, 1u32);
    for i in 0..len {
        if jump_at.binary_search(&i).is_ok() {
            j += 1;
        } else if i > 0 {
            step += 1;
        }
        out.push(HybridTimestamp::new(step as f64 * dt, j));
    }
    out
}

/// Random-walk values on a given timeline, optionally with mode labels.
pub fn random_trace(rng: &mut impl Rng, ts: &[HybridTimestamp], dim: usize, modes: bool) -> TimedStateSequence {
    let mut v = vec![0.0; dim];
    for x in &mut v {
        *x = rng.random_range(-1.0..1.0);
    }
    let mut values = Vec::with_capacity(ts.len());
    for _ in ts {
        for x in &mut v {
            *x += rng.random_range(-0.5..0.5);
        }
        values.push(v.clone());
    }
    let labels = modes.then(|| {
        let mut l = rng.random_range(0..3i64);
        ts.iter()
            .map(|_| {
                if rng.random_bool(0.25) {
                    l = rng.random_range(0..3);
                }
                l
            })
            .collect()
    });
    TimedStateSequence::new(values, ts.to_vec(), labels).expect("generated trace is valid")
}

/// A pair of random traces sharing one timeline.
pub fn random_pair(rng: &mut impl Rng, shape: PairShape, modes: bool) -> ParallelTrace {
    let ts = timeline(rng, shape.len, shape.dt, shape.jumps);
    let model = random_trace(rng, &ts, shape.dim, modes);
    let implementation = if rng.random_bool(0.3) {
        // a perturbed copy, so that some pairs are close
        let scale = rng.random_range(0.0..0.3);
        model
            .map_values(|_, v| v.iter().map(|x| x + scale * rng.random_range(-1.0..1.0)).collect())
            .expect("perturbation keeps the trace valid")
    } else {
        random_trace(rng, &ts, shape.dim, modes)
    };
    let implementation = implementation.with_modes(model.modes().is_some().then(|| {
        random_trace(rng, &ts, 1, true).modes().unwrap().to_vec()
    }))
    .unwrap();
    let horizon = ts.last().unwrap().t;
    ParallelTrace { model, implementation, horizon: if horizon > 0.0 { horizon } else { 1.0 }, max_jumps: u32::MAX }
}

/// A random real-timed trace on an irregular grid of `len` samples.
pub fn irregular_trace(rng: &mut impl Rng, len: usize, dim: usize) -> TimedStateSequence {
    let mut t = 0.0;
    let ts: Vec<HybridTimestamp> = (0..len)
        .map(|i| {
            if i > 0 {
                t += rng.random_range(0.01..0.2);
            }
            HybridTimestamp::new(t, 1)
        })
        .collect();
    random_trace(rng, &ts, dim, false)
}

fn random_interval(rng: &mut impl Rng, span: f64) -> Interval {
    let a = (rng.random_range(0.0..0.5 * span) * 8.0).round() / 8.0;
    match rng.random_range(0..4) {
        0 => Interval::unbounded(),
        1 => Interval { lower: a, upper: f64::INFINITY, lower_closed: false, upper_closed: false },
        2 => Interval { lower: a, upper: a + 1.0, lower_closed: rng.random_bool(0.5), upper_closed: rng.random_bool(0.5) },
        _ => Interval::closed(a, a + (rng.random_range(0.0..span) * 8.0).round() / 8.0),
    }
}

fn random_atom(rng: &mut impl Rng, dim: usize, modes: bool, max_shift: i64) -> Predicate {
    let signal = [Signal::Model, Signal::Implementation, Signal::Difference][rng.random_range(0..3)];
    let shift = rng.random_range(-max_shift..=max_shift);
    let threshold = (rng.random_range(-2.0..2.0) * 16.0_f64).round() / 16.0;
    match rng.random_range(0..if modes { 4 } else { 3 }) {
        0 => Predicate::NormLessThan { signal, shift, threshold: threshold.abs() },
        1 | 2 => Predicate::Compare {
            signal,
            component: Some(rng.random_range(1..=dim)),
            shift,
            op: [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][rng.random_range(0..4)],
            threshold,
        },
        _ => {
            if rng.random_bool(0.5) {
                Predicate::ModeEquals
            } else {
                Predicate::ModeDiffers
            }
        }
    }
}

/// Options for [`random_formula`].
#[derive(Debug, Clone, Copy)]
pub struct FormulaShape {
    pub depth: usize,
    pub dim: usize,
    pub modes: bool,
    /// Largest `|k|` used by atom shifts; keep below the trace length.
    pub max_shift: i64,
    /// Time span of generated intervals.
    pub span: f64,
}

pub fn random_formula(rng: &mut impl Rng, s: FormulaShape) -> Formula {
    if s.depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.05) {
            Formula::True
        } else {
            Formula::atom(random_atom(rng, s.dim, s.modes, s.max_shift))
        };
    }
    let sub = FormulaShape { depth: s.depth - 1, ..s };
    match rng.random_range(0..8) {
        0 => Formula::not(random_formula(rng, sub)),
        1 => Formula::or(vec![random_formula(rng, sub), random_formula(rng, sub)]),
        2 => Formula::and(vec![random_formula(rng, sub), random_formula(rng, sub)]),
        3 => Formula::implies(random_formula(rng, sub), random_formula(rng, sub)),
        4 => Formula::eventually(random_interval(rng, s.span), random_formula(rng, sub)),
        5 => Formula::always(random_interval(rng, s.span), random_formula(rng, sub)),
        _ => Formula::until(random_interval(rng, s.span), random_formula(rng, sub), random_formula(rng, sub)),
    }
}
