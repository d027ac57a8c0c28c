//! Finitely parametrized input signals.

use serde::{Deserialize, Serialize};

use super::SystemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Hold the latest control value.
    #[default]
    Constant,
    /// Linear between control points, clamped outside their span.
    Linear,
}

/// An input signal on `[0, T]` given by control points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub interpolation: Interpolation,
    pub horizon: f64,
}

impl InputSignal {
    pub fn new(
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        interpolation: Interpolation,
        horizon: f64,
    ) -> Result<Self, SystemError> {
        let bad = |msg: String| Err(SystemError::Input(msg));
        if times.is_empty() {
            return bad("no control points".into());
        }
        if times.len() != values.len() {
            return bad(format!("{} control times but {} values", times.len(), values.len()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return bad("control values have different dimensions".into());
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return bad("non-finite control value".into());
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("control times must be strictly increasing".into());
        }
        if times[0] < 0.0 || times[times.len() - 1] > horizon {
            return bad(format!("control times must lie in [0, {horizon}]"));
        }
        Ok(Self { times, values, interpolation, horizon })
    }

    /// `values.len()` control points spread evenly, the `i`-th at `i * T / n`.
    pub fn uniform(values: Vec<Vec<f64>>, interpolation: Interpolation, horizon: f64) -> Result<Self, SystemError> {
        let n = values.len().max(1);
        let times = (0..values.len()).map(|i| i as f64 * horizon / n as f64).collect();
        Self::new(times, values, interpolation, horizon)
    }

    /// A zero-dimensional input, for systems without inputs.
    pub fn none(horizon: f64) -> Self {
        Self { times: vec![0.0], values: vec![Vec::new()], interpolation: Interpolation::Constant, horizon }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0].clone();
        }
        let i = k - 1;
        match self.interpolation {
            Interpolation::Constant => self.values[i].clone(),
            Interpolation::Linear => {
                if i + 1 == self.times.len() {
                    return self.values[i].clone();
                }
                let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
                self.values[i].iter().zip(&self.values[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
            }
        }
    }

    /// Whether every control value lies in the box `[lower, upper]`.
    pub fn within(&self, lower: &[f64], upper: &[f64]) -> bool {
        self.values
            .iter()
            .all(|v| v.len() == lower.len() && v.iter().zip(lower.iter().zip(upper)).all(|(x, (l, u))| l <= x && x <= u))
    }
}

/// The input value at each grid time.
pub fn materialize_input(u: &InputSignal, grid: &[f64]) -> Result<Vec<Vec<f64>>, SystemError> {
    if u.times.is_empty() {
        return Err(SystemError::Input("no control points".into()));
    }
    Ok(grid.iter().map(|&t| u.value_at(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(interp: Interpolation) -> InputSignal {
        InputSignal::new(vec![0.0, 1.0], vec![vec![10.0], vec![20.0]], interp, 2.0).unwrap()
    }

    #[test]
    fn interpolation_examples() {
        assert_eq!(materialize_input(&two(Interpolation::Constant), &[0.5]).unwrap(), vec![vec![10.0]]);
        assert_eq!(materialize_input(&two(Interpolation::Linear), &[0.5]).unwrap(), vec![vec![15.0]]);
        assert_eq!(two(Interpolation::Linear).value_at(1.7), vec![20.0]);
        for interp in [Interpolation::Constant, Interpolation::Linear] {
            let u = InputSignal::new(vec![0.0], vec![vec![7.0]], interp, 5.0).unwrap();
            assert_eq!(materialize_input(&u, &[0.0, 2.5, 5.0]).unwrap(), vec![vec![7.0]; 3]);
        }
    }

    #[test]
    fn validation() {
        assert!(InputSignal::new(vec![], vec![], Interpolation::Constant, 1.0).is_err());
        assert!(InputSignal::new(vec![0.5, 0.5], vec![vec![1.0]; 2], Interpolation::Constant, 1.0).is_err());
        assert!(InputSignal::new(vec![0.0, 2.0], vec![vec![1.0]; 2], Interpolation::Constant, 1.0).is_err());
        let u = InputSignal::uniform(vec![vec![0.0]; 4], Interpolation::Linear, 2.0).unwrap();
        assert_eq!(u.times, vec![0.0, 0.5, 1.0, 1.5]);
        assert!(u.within(&[-1.0], &[1.0]));
        assert!(!u.within(&[0.5], &[1.0]));
    }
}
