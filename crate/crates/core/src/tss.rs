//! Timed state sequences.
//!
//! A [`TimedStateSequence`] is a finite list of output samples, each stamped with a hybrid
//! timestamp `(t, j)` where `t` is time and `j` counts the jumps taken so far. A real-timed
//! sequence is the special case `j = 1` everywhere. Everything else in the crate (monitoring,
//! closeness checking, falsification) works on these sequences.

use std::fmt;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TssError {
    #[error("timed state sequence must contain at least one sample")]
    Empty,
    #[error("sample {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("{0} sequences have different lengths")]
    LengthMismatch(&'static str),
    #[error("invalid timestamp at sample {index}: {reason}")]
    InvalidTimestamp { index: usize, reason: String },
    #[error("non-finite output value at sample {index}")]
    NonFinite { index: usize },
    #[error("timestamps not lexicographically increasing at sample {index}")]
    NotMonotone { index: usize },
    #[error("shift exceeds trace length (|k| = {shift}, |N| = {len})")]
    ShiftTooLarge { shift: usize, len: usize },
    #[error("Zeno or degenerate trace: need at least two distinct timestamps")]
    Degenerate,
    #[error("window size must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("model and implementation dimensions differ ({model} vs {implementation})")]
    ParallelDimMismatch { model: usize, implementation: usize },
    #[error("{0} trace is empty after truncation to the horizon")]
    EmptyAfterTruncation(&'static str),
    #[error("CSV error: {0}")]
    Csv(String),
}

/// A hybrid time instant: continuous time `t` and jump counter `j`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HybridTimestamp {
    pub t: f64,
    pub j: u32,
}

impl HybridTimestamp {
    pub fn new(t: f64, j: u32) -> Self {
        Self { t, j }
    }

    /// A real-time stamp (`j = 1`).
    pub fn real(t: f64) -> Self {
        Self { t, j: 1 }
    }
}

impl fmt::Display for HybridTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.t, self.j)
    }
}

/// How the vacated end of a shifted sequence is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillPolicy {
    /// Repeat the boundary sample.
    #[default]
    ConstantInterpolation,
    /// Mark the vacated samples with the `+inf` sentinel; any norm involving them is `+inf`.
    PositiveInfinity,
}

/// A sampled output trajectory `(y, tau)` with optional mode labels.
///
/// Values are stored row-major in a flat buffer of `len * dim` floats. Samples produced by a
/// [`FillPolicy::PositiveInfinity`] shift carry a sentinel flag instead of a value.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedStateSequence {
    values: Vec<f64>,
    dim: usize,
    timestamps: Vec<HybridTimestamp>,
    modes: Option<Vec<i64>>,
    sentinel: Vec<bool>,
}

impl TimedStateSequence {
    /// Builds a sequence, checking every structural invariant.
    pub fn new(
        values: Vec<Vec<f64>>,
        timestamps: Vec<HybridTimestamp>,
        modes: Option<Vec<i64>>,
    ) -> Result<Self, TssError> {
        let dim = values.first().map(Vec::len).ok_or(TssError::Empty)?;
        let mut flat = Vec::with_capacity(values.len() * dim);
        for (index, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(TssError::DimensionMismatch { index, expected: dim, found: v.len() });
            }
            flat.extend_from_slice(v);
        }
        Self::from_flat(flat, dim, timestamps, modes)
    }

    pub fn from_flat(
        values: Vec<f64>,
        dim: usize,
        timestamps: Vec<HybridTimestamp>,
        modes: Option<Vec<i64>>,
    ) -> Result<Self, TssError> {
        if timestamps.is_empty() {
            return Err(TssError::Empty);
        }
        if dim == 0 || values.len() != timestamps.len() * dim {
            return Err(TssError::LengthMismatch("value and timestamp"));
        }
        if let Some(m) = &modes {
            if m.len() != timestamps.len() {
                return Err(TssError::LengthMismatch("mode and timestamp"));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(TssError::NonFinite { index: pos / dim });
        }
        validate_timestamps(&timestamps)?;
        let n = timestamps.len();
        Ok(Self { values, dim, timestamps, modes, sentinel: vec![false; n] })
    }

    /// A real-timed sequence of scalar samples.
    pub fn scalar(values: &[f64], times: &[f64]) -> Result<Self, TssError> {
        if values.len() != times.len() {
            return Err(TssError::LengthMismatch("value and timestamp"));
        }
        Self::from_flat(
            values.to_vec(),
            1,
            times.iter().map(|&t| HybridTimestamp::real(t)).collect(),
            None,
        )
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn timestamps(&self) -> &[HybridTimestamp] {
        &self.timestamps
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.timestamps.iter().map(|ts| ts.t)
    }

    pub fn modes(&self) -> Option<&[i64]> {
        self.modes.as_deref()
    }

    /// The output vector of sample `i`, or `None` for a sentinel sample.
    pub fn sample(&self, i: usize) -> Option<&[f64]> {
        if self.sentinel[i] {
            None
        } else {
            Some(&self.values[i * self.dim..(i + 1) * self.dim])
        }
    }

    /// The stored vector of sample `i`, ignoring the sentinel flag.
    pub fn raw_sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_sentinel(&self, i: usize) -> bool {
        self.sentinel[i]
    }

    pub fn has_sentinels(&self) -> bool {
        self.sentinel.iter().any(|&s| s)
    }

    /// True when every timestamp carries the same jump counter.
    pub fn is_real(&self) -> bool {
        let j0 = self.timestamps[0].j;
        self.timestamps.iter().all(|ts| ts.j == j0)
    }

    pub fn first_time(&self) -> f64 {
        self.timestamps[0].t
    }

    pub fn last_time(&self) -> f64 {
        self.timestamps[self.len() - 1].t
    }

    /// Keeps the longest prefix with `t <= horizon` and `j <= max_jumps`.
    pub fn truncated(&self, horizon: f64, max_jumps: u32) -> Option<Self> {
        let keep = self
            .timestamps
            .iter()
            .position(|ts| ts.t > horizon || ts.j > max_jumps)
            .unwrap_or(self.len());
        if keep == 0 {
            return None;
        }
        Some(self.prefix(keep))
    }

    fn prefix(&self, n: usize) -> Self {
        Self {
            values: self.values[..n * self.dim].to_vec(),
            dim: self.dim,
            timestamps: self.timestamps[..n].to_vec(),
            modes: self.modes.as_ref().map(|m| m[..n].to_vec()),
            sentinel: self.sentinel[..n].to_vec(),
        }
    }

    fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            timestamps: self.timestamps[start..end].to_vec(),
            modes: self.modes.as_ref().map(|m| m[start..end].to_vec()),
            sentinel: self.sentinel[start..end].to_vec(),
        }
    }

    /// Same samples with every jump counter replaced by `j`.
    pub fn with_jump_counter(&self, j: u32) -> Self {
        let mut out = self.clone();
        for ts in &mut out.timestamps {
            ts.j = j;
        }
        out
    }

    /// Returns a copy whose values are transformed sample by sample.
    pub fn map_values(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self, TssError> {
        let values = (0..self.len()).map(|i| f(i, self.raw_sample(i))).collect();
        Self::new(values, self.timestamps.clone(), self.modes.clone())
    }

    pub fn with_modes(mut self, modes: Option<Vec<i64>>) -> Result<Self, TssError> {
        if let Some(m) = &modes {
            if m.len() != self.len() {
                return Err(TssError::LengthMismatch("mode and timestamp"));
            }
        }
        self.modes = modes;
        Ok(self)
    }

    /// Parses the trace CSV format: header `t,j,mode,y1,...,yn` with `j` and `mode` optional; a
    /// one-dimensional trace may name its output column `y`.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self, TssError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| TssError::Csv(e.to_string()))?.clone();
        let mut t_col = None;
        let mut j_col = None;
        let mut mode_col = None;
        let mut y_cols = Vec::new();
        for (c, name) in headers.iter().enumerate() {
            match name {
                "t" => t_col = Some(c),
                "j" => j_col = Some(c),
                "mode" => mode_col = Some(c),
                "y" => y_cols.push((1, c)),
                other => match other.strip_prefix('y').and_then(|s| s.parse::<usize>().ok()) {
                    Some(k) if k >= 1 => y_cols.push((k, c)),
                    _ => return Err(TssError::Csv(format!("unknown column `{other}`"))),
                },
            }
        }
        let t_col = t_col.ok_or_else(|| TssError::Csv("missing `t` column".into()))?;
        y_cols.sort();
        if y_cols.is_empty() || y_cols.iter().enumerate().any(|(i, &(k, _))| k != i + 1) {
            return Err(TssError::Csv("output columns must be y1..yn".into()));
        }
        let dim = y_cols.len();
        let mut values = Vec::new();
        let mut timestamps = Vec::new();
        let mut modes = mode_col.map(|_| Vec::new());
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| TssError::Csv(e.to_string()))?;
            let field = |c: usize| {
                record
                    .get(c)
                    .ok_or_else(|| TssError::Csv(format!("row {}: missing field", row + 1)))
            };
            let num = |c: usize| -> Result<f64, TssError> {
                let s = field(c)?;
                s.parse::<f64>()
                    .map_err(|_| TssError::Csv(format!("row {}: bad number `{s}`", row + 1)))
            };
            let t = num(t_col)?;
            let j = match j_col {
                Some(c) => {
                    let s = field(c)?;
                    s.parse::<u32>()
                        .map_err(|_| TssError::Csv(format!("row {}: bad jump counter `{s}`", row + 1)))?
                }
                None => 1,
            };
            timestamps.push(HybridTimestamp::new(t, j));
            if let (Some(c), Some(m)) = (mode_col, modes.as_mut()) {
                let s = field(c)?;
                m.push(
                    s.parse::<i64>()
                        .map_err(|_| TssError::Csv(format!("row {}: bad mode `{s}`", row + 1)))?,
                );
            }
            for &(_, c) in &y_cols {
                values.push(num(c)?);
            }
        }
        Self::from_flat(values, dim, timestamps, modes)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, TssError> {
        Self::from_csv_reader(text.as_bytes())
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, TssError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| TssError::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    /// Renders the trace CSV format, always including the `j` column.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,j");
        if self.modes.is_some() {
            out.push_str(",mode");
        }
        for k in 1..=self.dim {
            out.push_str(&format!(",y{k}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            let ts = self.timestamps[i];
            out.push_str(&format!("{},{}", ts.t, ts.j));
            if let Some(m) = &self.modes {
                out.push_str(&format!(",{}", m[i]));
            }
            for v in self.raw_sample(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn validate_timestamps(ts: &[HybridTimestamp]) -> Result<(), TssError> {
    for (index, s) in ts.iter().enumerate() {
        if !s.t.is_finite() || s.t < 0.0 {
            return Err(TssError::InvalidTimestamp { index, reason: format!("t = {}", s.t) });
        }
    }
    for (index, w) in ts.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let ok = b.j >= a.j && (a.t < b.t || (a.t == b.t && a.j < b.j));
        if !ok {
            return Err(TssError::NotMonotone { index: index + 1 });
        }
    }
    Ok(())
}

/// Discrete shift operator `S_k`.
///
/// For `k > 0` the sequence moves left by `k` samples; the tail is filled and the timestamps are
/// extended in steps of `horizon / |N|` past the last one. For `k < 0` the sequence moves right by
/// `|k|`, the head is filled and the timestamps are left unchanged.
pub fn shift(
    tss: &TimedStateSequence,
    k: i64,
    fill: FillPolicy,
    horizon: f64,
) -> Result<TimedStateSequence, TssError> {
    let n = tss.len();
    let mag = k.unsigned_abs() as usize;
    if mag >= n {
        return Err(TssError::ShiftTooLarge { shift: mag, len: n });
    }
    if k == 0 {
        return Ok(tss.clone());
    }
    let dim = tss.dim;
    let is_fill = |src: Option<usize>| src.is_none() && fill == FillPolicy::PositiveInfinity;
    // Source index for each output position; `None` marks a filler slot.
    let source: Vec<Option<usize>> = (0..n)
        .map(|i| {
            let s = i as i64 + k;
            (s >= 0 && (s as usize) < n).then_some(s as usize)
        })
        .collect();
    let boundary = if k > 0 { n - 1 } else { 0 };
    let mut values = Vec::with_capacity(n * dim);
    let mut sentinel = Vec::with_capacity(n);
    for src in &source {
        let from = src.unwrap_or(boundary);
        values.extend_from_slice(tss.raw_sample(from));
        sentinel.push(is_fill(*src) || tss.sentinel[from]);
    }
    let modes = tss
        .modes
        .as_ref()
        .map(|m| source.iter().map(|src| m[src.unwrap_or(boundary)]).collect());
    let timestamps = if k > 0 {
        let last = tss.timestamps[n - 1];
        let step = horizon / n as f64;
        let mut ts: Vec<_> = tss.timestamps[mag..].to_vec();
        ts.extend((1..=mag).map(|q| HybridTimestamp::new(last.t + q as f64 * step, last.j)));
        ts
    } else {
        tss.timestamps.clone()
    };
    Ok(TimedStateSequence { values, dim, timestamps, modes, sentinel })
}

/// Index of the sample read at position `i` of `S_k` applied to a trace of length `len`, or `None`
/// for a sentinel filler. Positions past the end of the trace (`i >= len`) also read filler.
pub fn shifted_index(len: usize, i: usize, k: i64, fill: FillPolicy) -> Option<usize> {
    let src = i as i64 + k;
    if src >= 0 && (src as usize) < len && i < len {
        return Some(src as usize);
    }
    match fill {
        FillPolicy::ConstantInterpolation => Some(src.clamp(0, len as i64 - 1) as usize),
        FillPolicy::PositiveInfinity => None,
    }
}

/// The number of extra samples `m(tau, i)` that fit strictly inside a window of length `tau`
/// starting at sample `i`.
pub fn window_count_at(times: &[f64], i: usize, tau: f64) -> usize {
    let ti = times[i];
    // times are sorted, so the partition point is the first index with t - ti >= tau.
    let end = times[i..].partition_point(|&t| t - ti < tau);
    end - 1
}

/// `m(tau)`: the smallest window population over indices whose whole window fits inside the
/// trace (`t_i + tau <= t_N`); falls back to `m(tau, 1)` when no window fits.
pub fn window_count(tss: &TimedStateSequence, tau: f64) -> Result<usize, TssError> {
    if !(tau > 0.0) {
        return Err(TssError::InvalidWindow(tau));
    }
    if tss.len() <= 1 || tss.first_time() == tss.last_time() {
        return Err(TssError::Degenerate);
    }
    let times: Vec<f64> = tss.times().collect();
    Ok(window_count_times(&times, tau))
}

pub(crate) fn window_count_times(times: &[f64], tau: f64) -> usize {
    let last = times[times.len() - 1];
    let mut best: Option<usize> = None;
    for i in 0..times.len() {
        if times[i] + tau > last {
            break;
        }
        let m = window_count_at(times, i, tau);
        best = Some(best.map_or(m, |b| b.min(m)));
    }
    best.unwrap_or_else(|| window_count_at(times, 0, tau))
}

/// A jump-free piece of a hybrid trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// The jump counter shared by every sample of the segment in the original trace.
    pub jump: u32,
    /// The samples as a real-timed sequence (`j = 1`).
    pub trace: TimedStateSequence,
}

/// Splits a hybrid trace into maximal runs of constant `j`.
pub fn segment_by_jumps(tss: &TimedStateSequence) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..=tss.len() {
        if i == tss.len() || tss.timestamps[i].j != tss.timestamps[start].j {
            segments.push(Segment {
                jump: tss.timestamps[start].j,
                trace: tss.slice(start, i).with_jump_counter(1),
            });
            start = i;
        }
    }
    segments
}

/// A Model trace and an Implementation trace observed under the same stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelTrace {
    pub model: TimedStateSequence,
    pub implementation: TimedStateSequence,
    pub horizon: f64,
    pub max_jumps: u32,
}

impl ParallelTrace {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// The same pair with the roles of Model and Implementation exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            model: self.implementation.clone(),
            implementation: self.model.clone(),
            horizon: self.horizon,
            max_jumps: self.max_jumps,
        }
    }
}

/// Concatenates two traces into a [`ParallelTrace`], truncating both to `t <= horizon` and
/// `j <= max_jumps`.
pub fn parallel_concat(
    model: &TimedStateSequence,
    implementation: &TimedStateSequence,
    horizon: f64,
    max_jumps: u32,
) -> Result<ParallelTrace, TssError> {
    if model.dim() != implementation.dim() {
        return Err(TssError::ParallelDimMismatch {
            model: model.dim(),
            implementation: implementation.dim(),
        });
    }
    let model = model.truncated(horizon, max_jumps).ok_or(TssError::EmptyAfterTruncation("model"))?;
    let implementation = implementation
        .truncated(horizon, max_jumps)
        .ok_or(TssError::EmptyAfterTruncation("implementation"))?;
    Ok(ParallelTrace { model, implementation, horizon, max_jumps })
}
