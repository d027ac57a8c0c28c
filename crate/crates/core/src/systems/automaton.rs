//! Hybrid automata with affine flows, half-space guards and affine resets.
//!
//! The automaton is integrated with a fixed step equal to the sampling period. Guards are checked
//! at every sample: the first enabled edge (in declaration order) fires at that sample time, the
//! trace records the pre-jump sample at `(t, j)` and the post-jump sample at `(t, j + 1)`, and
//! guards are checked again at the same instant. There is no event localization between samples.
//!
//! Definition files are TOML:
//!
//! ```toml
//! name = "bounce"
//! state_dim = 1
//! input_dim = 0
//! initial_mode = "up"
//! h0_box = { lower = [0.0], upper = [0.5] }
//! guard_axes = { level = [1.0] }        # optional: directions for GuardOffset mutations
//! output = { matrix = [[1.0]], offset = [0.0] }   # optional, identity by default
//!
//! [[modes]]
//! name = "up"
//! a = [[0.0]]      # dx/dt = a x + b u + c
//! c = [1.0]
//!
//! [[edges]]
//! from = "up"
//! to = "up"
//! axis = "level"
//! guard = [{ normal = [1.0], bound = 1.0 }]        # normal . x >= bound (> when strict = true)
//! reset = { matrix = [[0.0]], offset = [0.0] }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::input::InputSignal;
use super::SystemError;
use crate::tss::{HybridTimestamp, TimedStateSequence};

/// Zero-time jumps allowed at a single instant before the run is rejected as Zeno.
pub const MAX_JUMPS_PER_INSTANT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn is_valid(&self) -> bool {
        self.lower.len() == self.upper.len()
            && self.lower.iter().zip(&self.upper).all(|(l, u)| l.is_finite() && u.is_finite() && l <= u)
    }
}

/// `x -> matrix x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub offset: Vec<f64>,
}

impl AffineMap {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, o)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + o)
            .collect()
    }

    fn normalize(&mut self, rows: usize, cols: usize, what: &str) -> Result<(), SystemError> {
        if self.offset.is_empty() {
            self.offset = vec![0.0; rows];
        }
        if self.matrix.len() != rows || self.offset.len() != rows || self.matrix.iter().any(|r| r.len() != cols) {
            return Err(SystemError::Automaton(format!("{what} must be {rows}x{cols} with a length-{rows} offset")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub name: String,
    /// Label recorded in traces; defaults to the mode's position in the list.
    #[serde(default)]
    pub label: Option<i64>,
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub c: Vec<f64>,
}

/// `normal . x >= bound`, or `>` when strict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub bound: f64,
    #[serde(default)]
    pub strict: bool,
}

impl HalfSpace {
    fn holds(&self, x: &[f64]) -> bool {
        let s: f64 = self.normal.iter().zip(x).map(|(a, b)| a * b).sum();
        if self.strict {
            s > self.bound
        } else {
            s >= self.bound
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Guard family this edge belongs to, used by guard-offset mutations.
    #[serde(default)]
    pub axis: Option<String>,
    /// Conjunction of half-spaces.
    pub guard: Vec<HalfSpace>,
    #[serde(default)]
    pub reset: Option<AffineMap>,
}

/// A structural change applied to an automaton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    /// Multiply each mode's vector field by a factor: one factor for all modes, or one per mode.
    DynamicsScale { factors: Vec<f64> },
    /// Translate every guard hyperplane of the named family by `delta` along its axis direction.
    GuardOffset { axis: String, delta: f64 },
}

impl Mutation {
    /// Size of the change, for ordering mutants: `max |f - 1|` or `|delta|`.
    pub fn magnitude(&self) -> f64 {
        match self {
            Mutation::DynamicsScale { factors } => factors.iter().map(|f| (f - 1.0).abs()).fold(0.0, f64::max),
            Mutation::GuardOffset { delta, .. } => delta.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridAutomaton {
    pub name: String,
    pub state_dim: usize,
    #[serde(default)]
    pub input_dim: usize,
    pub initial_mode: String,
    pub h0_box: BoxSet,
    #[serde(default)]
    pub output: Option<AffineMap>,
    #[serde(default)]
    pub guard_axes: BTreeMap<String, Vec<f64>>,
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    /// Mutations applied so far, for reporting.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutations: Vec<Mutation>,
}

/// Flow and edges resolved to indices.
#[derive(Debug, Clone)]
struct Compiled {
    initial: usize,
    edges_from: Vec<Vec<usize>>,
    edge_to: Vec<usize>,
}

impl HybridAutomaton {
    pub fn from_toml_str(text: &str) -> Result<Self, SystemError> {
        let mut a: Self = toml::from_str(text).map_err(|e| SystemError::Automaton(e.to_string()))?;
        a.normalize()?;
        Ok(a)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, SystemError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SystemError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("automaton serializes to TOML")
    }

    pub fn output_dim(&self) -> usize {
        self.output.as_ref().map_or(self.state_dim, |o| o.matrix.len())
    }

    /// Fills defaulted coefficients and checks every dimension.
    pub fn normalize(&mut self) -> Result<(), SystemError> {
        let (n, m) = (self.state_dim, self.input_dim);
        let err = |msg: String| Err(SystemError::Automaton(msg));
        if n == 0 {
            return err("state_dim must be positive".into());
        }
        if self.modes.is_empty() {
            return err("automaton has no modes".into());
        }
        if !self.h0_box.is_valid() || self.h0_box.dim() != n {
            return err(format!("h0_box must be a valid {n}-dimensional box"));
        }
        for mode in &mut self.modes {
            if mode.c.is_empty() {
                mode.c = vec![0.0; n];
            }
            if mode.b.is_empty() {
                mode.b = vec![vec![0.0; m]; n];
            }
            let shape = |mat: &Vec<Vec<f64>>, cols: usize| mat.len() == n && mat.iter().all(|r| r.len() == cols);
            if !shape(&mode.a, n) || !shape(&mode.b, m) || mode.c.len() != n {
                return err(format!("mode `{}`: a must be {n}x{n}, b {n}x{m}, c length {n}", mode.name));
            }
        }
        if let Some(out) = &mut self.output {
            let rows = out.matrix.len();
            out.normalize(rows, n, "output map")?;
        }
        for (k, e) in self.edges.iter_mut().enumerate() {
            if e.guard.iter().any(|h| h.normal.len() != n) {
                return err(format!("edge {k}: guard normals must have length {n}"));
            }
            if let Some(r) = &mut e.reset {
                r.normalize(n, n, &format!("edge {k} reset"))?;
            }
            if let Some(axis) = &e.axis {
                if !self.guard_axes.is_empty() && !self.guard_axes.contains_key(axis) {
                    return err(format!("edge {k}: axis `{axis}` not declared in guard_axes"));
                }
            }
        }
        if self.guard_axes.values().any(|d| d.len() != n) {
            return err(format!("guard_axes directions must have length {n}"));
        }
        self.compile()?;
        Ok(())
    }

    fn mode_index(&self, name: &str) -> Result<usize, SystemError> {
        self.modes
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| SystemError::Automaton(format!("unknown mode `{name}`")))
    }

    fn compile(&self) -> Result<Compiled, SystemError> {
        let initial = self.mode_index(&self.initial_mode)?;
        let mut edges_from = vec![Vec::new(); self.modes.len()];
        let mut edge_to = Vec::with_capacity(self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            edges_from[self.mode_index(&e.from)?].push(k);
            edge_to.push(self.mode_index(&e.to)?);
        }
        Ok(Compiled { initial, edges_from, edge_to })
    }

    fn label(&self, mode: usize) -> i64 {
        self.modes[mode].label.unwrap_or(mode as i64)
    }

    fn flow(&self, mode: usize, x: &[f64], u: &[f64]) -> Vec<f64> {
        let m = &self.modes[mode];
        (0..self.state_dim)
            .map(|r| {
                let ax: f64 = m.a[r].iter().zip(x).map(|(a, b)| a * b).sum();
                let bu: f64 = m.b[r].iter().zip(u).map(|(a, b)| a * b).sum();
                ax + bu + m.c[r]
            })
            .collect()
    }

    fn step(&self, mode: usize, x: &[f64], t: f64, dt: f64, input: &InputSignal, method: Integrator) -> Vec<f64> {
        let u = |s: f64| if self.input_dim == 0 { Vec::new() } else { input.value_at(s) };
        let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
        match method {
            Integrator::Euler => axpy(x, &self.flow(mode, x, &u(t)), dt),
            Integrator::Rk4 => {
                let k1 = self.flow(mode, x, &u(t));
                let k2 = self.flow(mode, &axpy(x, &k1, dt / 2.0), &u(t + dt / 2.0));
                let k3 = self.flow(mode, &axpy(x, &k2, dt / 2.0), &u(t + dt / 2.0));
                let k4 = self.flow(mode, &axpy(x, &k3, dt), &u(t + dt));
                (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
            }
        }
    }

    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.output.as_ref().map_or_else(|| x.to_vec(), |o| o.apply(x))
    }

    /// Simulates from `h0` over `[0, T]`, sampling every `dt`. The run also ends when the next
    /// jump would take the jump counter past `max_jumps`.
    pub fn simulate(
        &self,
        h0: &[f64],
        input: &InputSignal,
        horizon: f64,
        max_jumps: u32,
        dt: f64,
        method: Integrator,
    ) -> Result<TimedStateSequence, SystemError> {
        if !self.h0_box.contains(h0) {
            return Err(SystemError::InitialCondition(format!("{h0:?} is outside the H0 box of `{}`", self.name)));
        }
        if !(dt > 0.0 && horizon > 0.0) {
            return Err(SystemError::Input(format!("need dt > 0 and T > 0, got dt = {dt}, T = {horizon}")));
        }
        if self.input_dim > 0 && input.dim() != self.input_dim {
            return Err(SystemError::Input(format!("expected {}-dimensional input, got {}", self.input_dim, input.dim())));
        }
        let c = self.compile()?;
        let steps = (horizon / dt + 1e-9).floor() as usize;
        let mut values = Vec::new();
        let mut stamps = Vec::new();
        let mut labels = Vec::new();
        let mut mode = c.initial;
        let mut x = h0.to_vec();
        let mut j = 1u32;
        'run: for k in 0..=steps {
            let t = if k == steps && (steps as f64 * dt - horizon).abs() < 1e-9 * horizon { horizon } else { k as f64 * dt };
            if k > 0 {
                x = self.step(mode, &x, (k - 1) as f64 * dt, t - (k - 1) as f64 * dt, input, method);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(SystemError::Diverged { t });
                }
            }
            values.extend(self.output(&x));
            stamps.push(HybridTimestamp::new(t, j));
            labels.push(self.label(mode));
            let mut chain = 0;
            while let Some(&e) = c.edges_from[mode].iter().find(|&&e| self.edges[e].guard.iter().all(|h| h.holds(&x))) {
                if j >= max_jumps {
                    break 'run;
                }
                chain += 1;
                if chain > MAX_JUMPS_PER_INSTANT {
                    return Err(SystemError::Zeno { t });
                }
                if let Some(r) = &self.edges[e].reset {
                    x = r.apply(&x);
                }
                mode = c.edge_to[e];
                j += 1;
                values.extend(self.output(&x));
                stamps.push(HybridTimestamp::new(t, j));
                labels.push(self.label(mode));
            }
        }
        Ok(TimedStateSequence::from_flat(values, self.output_dim(), stamps, Some(labels))?)
    }
}

/// A copy of `base` with `mutation` applied.
pub fn make_mutant(base: &HybridAutomaton, mutation: &Mutation) -> Result<HybridAutomaton, SystemError> {
    let mut out = base.clone();
    match mutation {
        Mutation::DynamicsScale { factors } => {
            let per_mode = match factors.len() {
                1 => vec![factors[0]; out.modes.len()],
                n if n == out.modes.len() => factors.clone(),
                n => {
                    return Err(SystemError::Mutation(format!(
                        "{n} scale factors for {} modes",
                        out.modes.len()
                    )))
                }
            };
            if per_mode.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(SystemError::Mutation("scale factors must be positive".into()));
            }
            for (m, f) in out.modes.iter_mut().zip(per_mode) {
                m.a.iter_mut().chain(m.b.iter_mut()).flatten().for_each(|v| *v *= f);
                m.c.iter_mut().for_each(|v| *v *= f);
            }
        }
        Mutation::GuardOffset { axis, delta } => {
            if !delta.is_finite() {
                return Err(SystemError::Mutation("guard offset must be finite".into()));
            }
            let dir = out
                .guard_axes
                .get(axis)
                .cloned()
                .ok_or_else(|| SystemError::Mutation(format!("unknown axis label `{axis}`")))?;
            for e in out.edges.iter_mut().filter(|e| e.axis.as_deref() == Some(axis.as_str())) {
                for h in &mut e.guard {
                    let along: f64 = h.normal.iter().zip(&dir).map(|(a, b)| a * b).sum();
                    h.bound += delta * along;
                }
            }
        }
    }
    out.mutations.push(mutation.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator_1d(rate: f64, guard: Option<f64>) -> HybridAutomaton {
        let mut text = format!(
            "name = \"x\"\nstate_dim = 1\ninitial_mode = \"a\"\nh0_box = {{ lower = [-10.0], upper = [10.0] }}\n\
             guard_axes = {{ level = [1.0] }}\n\
             [[modes]]\nname = \"a\"\na = [[0.0]]\nc = [{rate}]\n[[modes]]\nname = \"b\"\na = [[0.0]]\nc = [{rate}]\n"
        );
        if let Some(g) = guard {
            text += &format!(
                "[[edges]]\nfrom = \"a\"\nto = \"b\"\naxis = \"level\"\nguard = [{{ normal = [1.0], bound = {g} }}]\n\
                 reset = {{ matrix = [[0.0]] }}\n\
                 [[edges]]\nfrom = \"b\"\nto = \"a\"\naxis = \"level\"\nguard = [{{ normal = [1.0], bound = {g} }}]\n\
                 reset = {{ matrix = [[0.0]] }}\n"
            );
        }
        HybridAutomaton::from_toml_str(&text).unwrap()
    }

    fn ys(t: &TimedStateSequence) -> Vec<f64> {
        (0..t.len()).map(|i| t.raw_sample(i)[0]).collect()
    }

    #[test]
    fn zero_dynamics() {
        let a = integrator_1d(0.0, None);
        let tr = a.simulate(&[2.0], &InputSignal::none(1.0), 1.0, 5, 0.25, Integrator::Rk4).unwrap();
        assert_eq!(ys(&tr), vec![2.0; 5]);
        assert!(tr.timestamps().iter().all(|s| s.j == 1));
    }

    #[test]
    fn euler_ramp() {
        let a = integrator_1d(1.0, None);
        let tr = a.simulate(&[0.0], &InputSignal::none(1.0), 1.0, 5, 0.5, Integrator::Euler).unwrap();
        assert_eq!(ys(&tr), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn sawtooth_jumps() {
        let a = integrator_1d(1.0, Some(1.0));
        let tr = a.simulate(&[0.0], &InputSignal::none(2.5), 2.5, 10, 0.5, Integrator::Rk4).unwrap();
        let jumps: Vec<(f64, u32)> = tr
            .timestamps()
            .windows(2)
            .filter(|w| w[1].j > w[0].j)
            .map(|w| (w[1].t, w[1].j))
            .collect();
        assert_eq!(jumps, vec![(1.0, 2), (2.0, 3)]);
        assert_eq!(tr.modes().unwrap(), &[0, 0, 0, 1, 1, 1, 0, 0]);
        // j stops at J
        let tr = a.simulate(&[0.0], &InputSignal::none(2.5), 2.5, 2, 0.5, Integrator::Rk4).unwrap();
        assert_eq!(tr.timestamps().last().unwrap().j, 2);
    }

    #[test]
    fn zeno_cycle_rejected() {
        let a = integrator_1d(0.0, Some(0.0));
        let err = a.simulate(&[0.0], &InputSignal::none(1.0), 1.0, 100, 0.5, Integrator::Rk4).unwrap_err();
        assert!(matches!(err, SystemError::Zeno { .. }));
    }

    #[test]
    fn h0_outside_box() {
        let a = integrator_1d(0.0, None);
        assert!(a.simulate(&[11.0], &InputSignal::none(1.0), 1.0, 1, 0.5, Integrator::Rk4).is_err());
    }

    #[test]
    fn identity_mutations() {
        let a = integrator_1d(1.0, Some(1.0));
        let u = InputSignal::none(3.0);
        let base = a.simulate(&[0.1], &u, 3.0, 10, 0.1, Integrator::Rk4).unwrap();
        for m in [
            Mutation::DynamicsScale { factors: vec![1.0] },
            Mutation::GuardOffset { axis: "level".into(), delta: 0.0 },
        ] {
            let b = make_mutant(&a, &m).unwrap();
            assert_eq!(b.simulate(&[0.1], &u, 3.0, 10, 0.1, Integrator::Rk4).unwrap(), base);
            assert_eq!(m.magnitude(), 0.0);
        }
        assert!(make_mutant(&a, &Mutation::GuardOffset { axis: "diagonal".into(), delta: 1.0 }).is_err());
    }

    #[test]
    fn faster_dynamics_jump_earlier() {
        let a = integrator_1d(1.0, Some(1.0));
        let fast = make_mutant(&a, &Mutation::DynamicsScale { factors: vec![1.2] }).unwrap();
        let u = InputSignal::none(2.0);
        let first_jump = |h: &HybridAutomaton| {
            let tr = h.simulate(&[0.0], &u, 2.0, 10, 0.001, Integrator::Rk4).unwrap();
            tr.timestamps().iter().find(|s| s.j == 2).unwrap().t
        };
        assert!((first_jump(&a) - 1.0).abs() <= 0.001 + 1e-9);
        assert!((first_jump(&fast) - 1.0 / 1.2).abs() <= 0.001 + 1e-9);
    }

    #[test]
    fn guard_offset_moves_jump() {
        let a = integrator_1d(1.0, Some(1.0));
        let late = make_mutant(&a, &Mutation::GuardOffset { axis: "level".into(), delta: 0.5 }).unwrap();
        let u = InputSignal::none(2.0);
        let tr = late.simulate(&[0.0], &u, 2.0, 10, 0.25, Integrator::Rk4).unwrap();
        let t = tr.timestamps().iter().find(|s| s.j == 2).unwrap().t;
        assert!((t - 1.5).abs() < 1e-9);
        assert_eq!(late.mutations.len(), 1);
    }

    #[test]
    fn toml_round_trip() {
        let a = integrator_1d(1.0, Some(1.0));
        let b = HybridAutomaton::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
    }
}
