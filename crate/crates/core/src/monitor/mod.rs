//! MTL formulas, their text syntax, and robust evaluation (spatial and temporal).

mod eval;
mod formula;
mod parse;

pub use eval::{
    spatial_robustness, temporal_robustness, time_robustness, EvalOptions, Evaluator, MonitorError, Norm,
    RobustnessKind,
};
pub use formula::{
    CmpOp, CustomPredicate, Formula, Interval, OutputSet, Predicate, Robustness, SampleView, Signal,
};
pub use parse::{parse, ParseError, Parser};
