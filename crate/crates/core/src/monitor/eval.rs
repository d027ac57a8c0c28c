//! Robust evaluation of MTL formulas over a [`ParallelTrace`].
//!
//! The evaluation grid is the Model trace's sample sequence. Numeric atoms read the Model sample
//! and the index-aligned Implementation sample, each optionally passed through the shift
//! operator; mode atoms compare the Model mode with the Implementation mode in force at the same
//! time. Temporal operators quantify over later samples of the grid whose time offset lies in the
//! operator's interval, with `sup {} = -inf` and `inf {} = +inf`.
//!
//! Each subformula is evaluated once over the whole grid. `Always`/`Eventually` use a monotone
//! deque (O(N)); bounded or unbounded `Until` is O(N^2) in the worst case.

use std::collections::VecDeque;

use thiserror::Error;

use super::formula::{Formula, Interval, Predicate, Robustness, SampleView, Signal};
use crate::tss::{shifted_index, FillPolicy, ParallelTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustnessKind {
    /// Signed distance in output space.
    #[default]
    Spatial,
    /// Signed time shift preserving each atom's truth value.
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Euclidean,
    Max,
    Manhattan,
}

impl Norm {
    pub fn of(self, v: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::Euclidean => v.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Max => v.map(f64::abs).fold(0.0, f64::max),
            Norm::Manhattan => v.map(f64::abs).sum(),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.of(a.iter().zip(b).map(|(x, y)| x - y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub norm: Norm,
    /// Fill used when a shifted operand runs off either end of its trace.
    pub fill: FillPolicy,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("t = {0} is not a sample time of the trace")]
    NotOnGrid(f64),
    #[error("predicate needs mode labels but the {0} trace has none")]
    MissingModes(&'static str),
    #[error("component {component} out of range for {dim}-dimensional outputs")]
    Component { component: usize, dim: usize },
}

/// Spatial robustness of `phi` over `trace` at sample time `t`, with default options.
pub fn spatial_robustness(phi: &Formula, trace: &ParallelTrace, t: f64) -> Result<Robustness, MonitorError> {
    Evaluator::new(trace, RobustnessKind::Spatial).at_time(phi, t)
}

/// Temporal robustness of `phi` over `trace` at sample time `t`, with default options.
pub fn temporal_robustness(phi: &Formula, trace: &ParallelTrace, t: f64) -> Result<Robustness, MonitorError> {
    Evaluator::new(trace, RobustnessKind::Temporal).at_time(phi, t)
}

pub struct Evaluator<'a> {
    trace: &'a ParallelTrace,
    kind: RobustnessKind,
    opts: EvalOptions,
    times: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(trace: &'a ParallelTrace, kind: RobustnessKind) -> Self {
        Self::with_options(trace, kind, EvalOptions::default())
    }

    pub fn with_options(trace: &'a ParallelTrace, kind: RobustnessKind, opts: EvalOptions) -> Self {
        let times = trace.model.times().collect();
        Self { trace, kind, opts, times }
    }

    /// Robustness at the first sample whose time equals `t`.
    pub fn at_time(&self, phi: &Formula, t: f64) -> Result<Robustness, MonitorError> {
        let i = self.times.iter().position(|&s| s == t).ok_or(MonitorError::NotOnGrid(t))?;
        self.at_index(phi, i)
    }

    pub fn at_index(&self, phi: &Formula, i: usize) -> Result<Robustness, MonitorError> {
        Ok(Robustness::new(self.eval(phi)?[i]))
    }

    /// Robustness at every sample of the grid.
    pub fn signal(&self, phi: &Formula) -> Result<Vec<Robustness>, MonitorError> {
        Ok(self.eval(phi)?.into_iter().map(Robustness::new).collect())
    }

    fn len(&self) -> usize {
        self.times.len()
    }

    fn eval(&self, phi: &Formula) -> Result<Vec<f64>, MonitorError> {
        let n = self.len();
        Ok(match phi {
            Formula::True => vec![f64::INFINITY; n],
            Formula::Atom(p) => match self.kind {
                RobustnessKind::Spatial => self.atom_distance(p)?,
                RobustnessKind::Temporal => time_robustness(&self.atom_truth(p)?, &self.times),
            },
            Formula::Not(f) => self.eval(f)?.into_iter().map(|x| -x).collect(),
            Formula::Or(fs) => self.fold(fs, f64::NEG_INFINITY, max)?,
            Formula::And(fs) => self.fold(fs, f64::INFINITY, min)?,
            Formula::Implies(a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                a.iter().zip(&b).map(|(&x, &y)| max(-x, y)).collect()
            }
            Formula::Eventually(i, f) => {
                let r = self.eval(f)?;
                sliding(&r, &self.windows(i), f64::NEG_INFINITY, |a, b| a > b)
            }
            Formula::Always(i, f) => {
                let r = self.eval(f)?;
                sliding(&r, &self.windows(i), f64::INFINITY, |a, b| a < b)
            }
            Formula::Until(i, a, b) => {
                let lhs = self.eval(a)?;
                let rhs = self.eval(b)?;
                until(&lhs, &rhs, &self.windows(i))
            }
        })
    }

    fn fold(&self, fs: &[Formula], init: f64, op: fn(f64, f64) -> f64) -> Result<Vec<f64>, MonitorError> {
        let mut acc = vec![init; self.len()];
        for f in fs {
            for (a, x) in acc.iter_mut().zip(self.eval(f)?) {
                *a = op(*a, x);
            }
        }
        Ok(acc)
    }

    /// `[lo, hi)` sample ranges with `t_k - t_i` inside `interval` and `t_k <= horizon`.
    fn windows(&self, interval: &Interval) -> Vec<(usize, usize)> {
        let t = &self.times;
        let n = t.len();
        let horizon = self.trace.horizon;
        let mut out = Vec::with_capacity(n);
        let (mut lo, mut hi) = (0, 0);
        for i in 0..n {
            lo = lo.max(i);
            while lo < n && !interval.contains(t[lo] - t[i]) && !interval.is_beyond(t[lo] - t[i]) {
                lo += 1;
            }
            hi = hi.max(lo);
            while hi < n && interval.contains(t[hi] - t[i]) && t[hi] <= horizon {
                hi += 1;
            }
            out.push((lo, hi));
        }
        out
    }

    fn model_sample(&self, shift: i64, i: usize) -> Option<&[f64]> {
        let m = &self.trace.model;
        shifted_index(m.len(), i, shift, self.opts.fill).and_then(|k| m.sample(k))
    }

    fn impl_sample(&self, shift: i64, i: usize) -> Option<&[f64]> {
        let m = &self.trace.implementation;
        shifted_index(m.len(), i, shift, self.opts.fill).and_then(|k| m.sample(k))
    }

    /// Per-sample scalar read by a numeric predicate: a component or the norm. Sentinels read as
    /// `+inf`.
    fn scalar(&self, signal: Signal, component: Option<usize>, shift: i64, i: usize) -> f64 {
        let norm = self.opts.norm;
        let pick = |v: &[f64]| match component {
            Some(c) => v[c - 1],
            None => norm.of(v.iter().copied()),
        };
        match signal {
            Signal::Model => self.model_sample(shift, i).map_or(f64::INFINITY, pick),
            Signal::Implementation => self.impl_sample(shift, i).map_or(f64::INFINITY, pick),
            Signal::Difference => match (self.model_sample(0, i), self.impl_sample(shift, i)) {
                (Some(a), Some(b)) => match component {
                    Some(c) => a[c - 1] - b[c - 1],
                    None => norm.distance(a, b),
                },
                _ => f64::INFINITY,
            },
        }
    }

    fn check_component(&self, component: Option<usize>) -> Result<(), MonitorError> {
        let dim = self.trace.dim();
        match component {
            Some(c) if c == 0 || c > dim => Err(MonitorError::Component { component: c, dim }),
            _ => Ok(()),
        }
    }

    fn mode_pairs(&self) -> Result<Vec<(i64, i64)>, MonitorError> {
        let ml = self.trace.model.modes().ok_or(MonitorError::MissingModes("model"))?;
        let il = self.trace.implementation.modes().ok_or(MonitorError::MissingModes("implementation"))?;
        let it: Vec<f64> = self.trace.implementation.times().collect();
        Ok(self
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                // latest implementation sample at or before t
                let k = it.partition_point(|&s| s <= t).saturating_sub(1);
                (ml[i], il[k])
            })
            .collect())
    }

    fn view(&self, i: usize) -> SampleView<'_> {
        SampleView { t: self.times[i], model: self.model_sample(0, i), implementation: self.impl_sample(0, i) }
    }

    fn atom_distance(&self, p: &Predicate) -> Result<Vec<f64>, MonitorError> {
        let n = self.len();
        Ok(match p {
            Predicate::NormLessThan { signal, shift, threshold } => {
                (0..n).map(|i| threshold - self.scalar(*signal, None, *shift, i)).collect()
            }
            Predicate::Compare { signal, component, shift, op, threshold } => {
                self.check_component(*component)?;
                (0..n)
                    .map(|i| op.signed_distance(self.scalar(*signal, *component, *shift, i), *threshold))
                    .collect()
            }
            Predicate::ModeEquals => {
                self.mode_pairs()?.into_iter().map(|(a, b)| if a == b { 1.0 } else { -1.0 }).collect()
            }
            Predicate::ModeDiffers => {
                self.mode_pairs()?.into_iter().map(|(a, b)| if a != b { 1.0 } else { -1.0 }).collect()
            }
            Predicate::Custom(c) => (0..n).map(|i| c.set.signed_distance(&self.view(i))).collect(),
        })
    }

    fn atom_truth(&self, p: &Predicate) -> Result<Vec<bool>, MonitorError> {
        let n = self.len();
        Ok(match p {
            Predicate::NormLessThan { signal, shift, threshold } => {
                (0..n).map(|i| self.scalar(*signal, None, *shift, i) < *threshold).collect()
            }
            Predicate::Compare { signal, component, shift, op, threshold } => {
                self.check_component(*component)?;
                (0..n).map(|i| op.holds(self.scalar(*signal, *component, *shift, i), *threshold)).collect()
            }
            Predicate::ModeEquals => self.mode_pairs()?.into_iter().map(|(a, b)| a == b).collect(),
            Predicate::ModeDiffers => self.mode_pairs()?.into_iter().map(|(a, b)| a != b).collect(),
            Predicate::Custom(c) => (0..n).map(|i| c.set.contains(&self.view(i))).collect(),
        })
    }
}

fn max(a: f64, b: f64) -> f64 {
    if b > a {
        b
    } else {
        a
    }
}

fn min(a: f64, b: f64) -> f64 {
    if b < a {
        b
    } else {
        a
    }
}

/// Time robustness of a Boolean signal: at each sample, `min(theta-, theta+)` where `theta-`
/// (`theta+`) is the look-back (look-ahead) duration over which the truth value stays constant,
/// signed by the truth value. The minimum is taken over the signed values, so a true sample gets
/// the shorter of the two durations and a false sample the negated longer one. A truth value that
/// never changes over the trace gives `+inf` or `-inf` everywhere.
pub fn time_robustness(truth: &[bool], times: &[f64]) -> Vec<f64> {
    let n = truth.len();
    if n == 0 {
        return Vec::new();
    }
    if truth.iter().all(|&b| b == truth[0]) {
        let v = if truth[0] { f64::INFINITY } else { f64::NEG_INFINITY };
        return vec![v; n];
    }
    let mut run_start = vec![0; n];
    for i in 1..n {
        run_start[i] = if truth[i] == truth[i - 1] { run_start[i - 1] } else { i };
    }
    let mut run_end = vec![n - 1; n];
    for i in (0..n - 1).rev() {
        run_end[i] = if truth[i] == truth[i + 1] { run_end[i + 1] } else { i };
    }
    (0..n)
        .map(|i| {
            let back = times[i] - times[run_start[i]];
            let ahead = times[run_end[i]] - times[i];
            if truth[i] {
                back.min(ahead)
            } else if back == 0.0 && ahead == 0.0 {
                0.0
            } else {
                -back.max(ahead)
            }
        })
        .collect()
}

/// Sliding extremum over monotone windows; `better(a, b)` is true when `a` should replace `b`.
fn sliding(r: &[f64], windows: &[(usize, usize)], empty: f64, better: fn(f64, f64) -> bool) -> Vec<f64> {
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    windows
        .iter()
        .map(|&(lo, hi)| {
            while next < hi {
                while dq.back().is_some_and(|&b| !better(r[b], r[next])) {
                    dq.pop_back();
                }
                dq.push_back(next);
                next += 1;
            }
            while dq.front().is_some_and(|&f| f < lo) {
                dq.pop_front();
            }
            if lo >= hi {
                empty
            } else {
                dq.front().map_or(empty, |&f| r[f])
            }
        })
        .collect()
}

fn until(lhs: &[f64], rhs: &[f64], windows: &[(usize, usize)]) -> Vec<f64> {
    windows
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let mut best = f64::NEG_INFINITY;
            let mut prefix = f64::INFINITY;
            for k in i..hi {
                if k >= lo {
                    best = max(best, min(rhs[k], prefix));
                }
                prefix = min(prefix, lhs[k]);
                if prefix <= best {
                    break;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_examples() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0];
        let truth = [true, true, false, false, true];
        let r = time_robustness(&truth, &times);
        assert_eq!(r[1], 0.0);
        assert_eq!(r[2], -1.0);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[3], -1.0);
        assert_eq!(time_robustness(&[true, true], &[0.0, 1.0]), vec![f64::INFINITY; 2]);
        assert_eq!(time_robustness(&[false], &[0.0]), vec![f64::NEG_INFINITY]);
    }

    #[test]
    fn sliding_matches_naive() {
        let r = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let windows: Vec<_> = (0..8).map(|i| (i, (i + 3).min(8))).collect();
        let mx = sliding(&r, &windows, f64::NEG_INFINITY, |a, b| a > b);
        let mn = sliding(&r, &windows, f64::INFINITY, |a, b| a < b);
        for (i, &(lo, hi)) in windows.iter().enumerate() {
            let s = &r[lo..hi];
            assert_eq!(mx[i], s.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            assert_eq!(mn[i], s.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
}
