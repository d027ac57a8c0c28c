use std::fmt;
use std::ops::Neg;
use std::sync::Arc;

/// A robustness value in the extended reals.
///
/// `NaN` is never a valid robustness; constructors reject it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Robustness(f64);

impl Robustness {
    pub const TOP: Robustness = Robustness(f64::INFINITY);
    pub const BOTTOM: Robustness = Robustness(f64::NEG_INFINITY);

    pub fn new(value: f64) -> Self {
        assert!(!value.is_nan(), "robustness must not be NaN");
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0.0
    }

    /// Infimum of two values.
    pub fn meet(self, other: Self) -> Self {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    /// Supremum of two values.
    pub fn join(self, other: Self) -> Self {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl Neg for Robustness {
    type Output = Robustness;

    fn neg(self) -> Self::Output {
        Robustness(-self.0)
    }
}

impl From<Robustness> for f64 {
    fn from(r: Robustness) -> f64 {
        r.0
    }
}

impl fmt::Display for Robustness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Finite values serialize as numbers and infinities as the strings `"inf"` and `"-inf"`, since
/// JSON has no infinite numbers.
impl serde::Serialize for Robustness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        }
    }
}

impl<'de> serde::Deserialize<'de> for Robustness {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) if !x.is_nan() => Ok(Robustness(x)),
            Repr::Text(t) if t == "inf" => Ok(Robustness::TOP),
            Repr::Text(t) if t == "-inf" => Ok(Robustness::BOTTOM),
            _ => Err(serde::de::Error::custom("expected a number, \"inf\" or \"-inf\"")),
        }
    }
}

/// A non-empty interval of non-negative reals, possibly unbounded above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl Interval {
    /// `[lower, upper]`, or `[lower, inf)` when `upper` is infinite.
    pub fn closed(lower: f64, upper: f64) -> Self {
        Self { lower, upper, lower_closed: true, upper_closed: upper.is_finite() }
    }

    /// `[0, inf)`.
    pub fn unbounded() -> Self {
        Self::closed(0.0, f64::INFINITY)
    }

    pub fn is_valid(&self) -> bool {
        self.lower.is_finite()
            && self.lower >= 0.0
            && !self.upper.is_nan()
            && (self.lower < self.upper
                || (self.lower == self.upper && self.lower_closed && self.upper_closed))
            && !(self.upper.is_infinite() && self.upper_closed)
    }

    pub fn contains(&self, d: f64) -> bool {
        let above = if self.lower_closed { d >= self.lower } else { d > self.lower };
        let below = if self.upper_closed { d <= self.upper } else { d < self.upper };
        above && below
    }

    /// Whether `d` lies strictly past the upper end.
    pub fn is_beyond(&self, d: f64) -> bool {
        if self.upper_closed {
            d > self.upper
        } else {
            d >= self.upper
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { '[' } else { '(' };
        let close = if self.upper_closed { ']' } else { ')' };
        if self.upper.is_infinite() {
            write!(f, "{open}{},inf{close}", self.lower)
        } else {
            write!(f, "{open}{},{}{close}", self.lower, self.upper)
        }
    }
}

/// Which output channel an atomic predicate reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    /// `S_k y_M`, written `yM` (or `y`).
    Model,
    /// `S_k y_I`, written `yI`.
    Implementation,
    /// `y_M - S_k y_I`, written `err`.
    Difference,
}

impl Signal {
    pub fn name(self) -> &'static str {
        match self {
            Signal::Model => "yM",
            Signal::Implementation => "yI",
            Signal::Difference => "err",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, x: f64, c: f64) -> bool {
        match self {
            CmpOp::Lt => x < c,
            CmpOp::Le => x <= c,
            CmpOp::Gt => x > c,
            CmpOp::Ge => x >= c,
        }
    }

    /// Signed distance of `x` from the set `{x op c}`.
    pub fn signed_distance(self, x: f64, c: f64) -> f64 {
        match self {
            CmpOp::Lt | CmpOp::Le => c - x,
            CmpOp::Gt | CmpOp::Ge => x - c,
        }
    }
}

/// The samples visible to a [`OutputSet`] at one point of the evaluation grid.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    pub t: f64,
    /// `None` for a sentinel sample.
    pub model: Option<&'a [f64]>,
    /// The index-aligned Implementation sample, `None` for a sentinel.
    pub implementation: Option<&'a [f64]>,
}

/// A user-defined set of outputs with a signed distance function.
pub trait OutputSet: fmt::Debug + Send + Sync {
    /// Positive inside the set, negative outside.
    fn signed_distance(&self, sample: &SampleView<'_>) -> f64;

    fn contains(&self, sample: &SampleView<'_>) -> bool {
        self.signed_distance(sample) > 0.0
    }
}

/// A named [`OutputSet`] used as an atomic proposition.
#[derive(Debug, Clone)]
pub struct CustomPredicate {
    pub name: String,
    pub set: Arc<dyn OutputSet>,
}

impl PartialEq for CustomPredicate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.set, &other.set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// `||signal@shift|| < threshold`, robustness `threshold - ||.||`.
    NormLessThan { signal: Signal, shift: i64, threshold: f64 },
    /// A comparison on one component (1-based) or, with `component = None`, on the norm.
    Compare { signal: Signal, component: Option<usize>, shift: i64, op: CmpOp, threshold: f64 },
    /// `lM == lI`.
    ModeEquals,
    /// `lM != lI`.
    ModeDiffers,
    Custom(CustomPredicate),
}

impl Predicate {
    pub fn norm_less_than(signal: Signal, shift: i64, threshold: f64) -> Self {
        Predicate::NormLessThan { signal, shift, threshold }
    }
}

fn write_signal(f: &mut fmt::Formatter<'_>, signal: Signal, component: Option<usize>, shift: i64) -> fmt::Result {
    f.write_str(signal.name())?;
    if let Some(c) = component {
        write!(f, "{c}")?;
    }
    if shift != 0 {
        write!(f, "@{shift}")?;
    }
    Ok(())
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::NormLessThan { signal, shift, threshold } => {
                write_signal(f, *signal, None, *shift)?;
                write!(f, " < {threshold}")
            }
            Predicate::Compare { signal, component, shift, op, threshold } => {
                write_signal(f, *signal, *component, *shift)?;
                write!(f, " {} {threshold}", op.symbol())
            }
            Predicate::ModeEquals => f.write_str("lM == lI"),
            Predicate::ModeDiffers => f.write_str("lM != lI"),
            Predicate::Custom(c) => f.write_str(&c.name),
        }
    }
}

/// An MTL formula. `And`, `Implies`, `Eventually` and `Always` are first-class nodes whose
/// robustness equals that of their desugared forms over `True`, `Not`, `Or` and `Until`.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Atom(Predicate),
    Not(Box<Formula>),
    Or(Vec<Formula>),
    And(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn atom(p: Predicate) -> Self {
        Formula::Atom(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    /// Disjunction; a single operand is returned unchanged.
    pub fn or(mut fs: Vec<Formula>) -> Self {
        if fs.len() == 1 {
            fs.pop().unwrap()
        } else {
            Formula::Or(fs)
        }
    }

    /// Conjunction; a single operand is returned unchanged.
    pub fn and(mut fs: Vec<Formula>) -> Self {
        if fs.len() == 1 {
            fs.pop().unwrap()
        } else {
            Formula::And(fs)
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    pub fn eventually(i: Interval, f: Formula) -> Self {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn always(i: Interval, f: Formula) -> Self {
        Formula::Always(i, Box::new(f))
    }

    /// Rewrites into the base grammar `T | p | !f | f \/ f | f U_I f`.
    pub fn desugar(&self) -> Formula {
        match self {
            Formula::True | Formula::Atom(_) => self.clone(),
            Formula::Not(f) => Formula::not(f.desugar()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(Formula::desugar).collect()),
            Formula::And(fs) => Formula::not(Formula::Or(
                fs.iter().map(|f| Formula::not(f.desugar())).collect(),
            )),
            Formula::Implies(a, b) => Formula::Or(vec![Formula::not(a.desugar()), b.desugar()]),
            Formula::Until(i, a, b) => Formula::until(*i, a.desugar(), b.desugar()),
            Formula::Eventually(i, f) => Formula::until(*i, Formula::True, f.desugar()),
            Formula::Always(i, f) => Formula::not(Formula::until(
                *i,
                Formula::True,
                Formula::not(f.desugar()),
            )),
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => 1 + f.size(),
            Formula::Or(fs) | Formula::And(fs) => 1 + fs.iter().map(Formula::size).sum::<usize>(),
            Formula::Implies(a, b) | Formula::Until(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Applies `f` to every predicate in the formula.
    pub fn map_predicates(&self, f: &mut impl FnMut(&Predicate) -> Predicate) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(p) => Formula::Atom(f(p)),
            Formula::Not(a) => Formula::not(a.map_predicates(f)),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|x| x.map_predicates(f)).collect()),
            Formula::And(fs) => Formula::And(fs.iter().map(|x| x.map_predicates(f)).collect()),
            Formula::Implies(a, b) => Formula::implies(a.map_predicates(f), b.map_predicates(f)),
            Formula::Until(i, a, b) => Formula::until(*i, a.map_predicates(f), b.map_predicates(f)),
            Formula::Eventually(i, a) => Formula::eventually(*i, a.map_predicates(f)),
            Formula::Always(i, a) => Formula::always(*i, a.map_predicates(f)),
        }
    }
}

fn write_joined(f: &mut fmt::Formatter<'_>, fs: &[Formula], sep: &str, empty: &str) -> fmt::Result {
    if fs.is_empty() {
        return f.write_str(empty);
    }
    f.write_str("(")?;
    for (k, x) in fs.iter().enumerate() {
        if k > 0 {
            write!(f, " {sep} ")?;
        }
        write!(f, "{x}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::Atom(p) => write!(f, "({p})"),
            Formula::Not(a) => write!(f, "!{a}"),
            Formula::Or(fs) => write_joined(f, fs, "\\/", "!true"),
            Formula::And(fs) => write_joined(f, fs, "/\\", "true"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::Until(i, a, b) => write!(f, "({a} U_{i} {b})"),
            Formula::Eventually(i, a) => write!(f, "<>_{i} {a}"),
            Formula::Always(i, a) => write!(f, "[]_{i} {a}"),
        }
    }
}
