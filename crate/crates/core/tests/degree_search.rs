use cpsconf_core::conformance::{epsilon_star_parallel, tau_star_parallel};
use cpsconf_core::degree::{binary_search_epsilon, binary_search_tau, initial_bracket, pareto_front, Axis, SearchContext};
use cpsconf_core::falsify::{OptimizerConfig, SearchSpace};
use cpsconf_core::systems::{BoxSet, Interpolation, SystemUnderTest, TraceReplay};
use cpsconf_core::tss::{parallel_concat, TimedStateSequence};

const DT: f64 = 0.1;

fn step(at: f64) -> TimedStateSequence {
    let t: Vec<f64> = (0..31).map(|i| i as f64 * DT).collect();
    let v: Vec<f64> = t.iter().map(|&s| if s >= at - 1e-9 { 1.0 } else { 0.0 }).collect();
    TimedStateSequence::scalar(&v, &t).unwrap()
}

fn replay(t: TimedStateSequence) -> SystemUnderTest {
    SystemUnderTest::replay(TraceReplay::new(vec![t]).unwrap())
}

fn space() -> SearchSpace {
    SearchSpace {
        h0: BoxSet::new(vec![0.0], vec![0.0]),
        input_boxes: vec![BoxSet::new(vec![], vec![])],
        n_control_points: 1,
        interpolation: Interpolation::Constant,
    }
}

fn ctx<'a>(m: &'a SystemUnderTest, i: &'a SystemUnderTest, sp: &'a SearchSpace) -> SearchContext<'a> {
    SearchContext {
        model: m,
        implementation: i,
        horizon: 3.0,
        max_jumps: 1,
        space: sp,
        optimizer: OptimizerConfig::default(),
        budget: 2,
        seed: 5,
    }
}

#[test]
fn tau_search_brackets_the_delay() {
    let (m, i, sp) = (replay(step(1.0)), replay(step(1.2)), space());
    let c = ctx(&m, &i, &sp);
    let pt = parallel_concat(&step(1.0), &step(1.2), 3.0, 1).unwrap();
    let exact = tau_star_parallel(&pt, 0.1);
    let (h, _) = initial_bracket(&c, Axis::Tau, 0.1, 0.0625, 30).unwrap();
    let r = binary_search_tau(&c, 0.1, 12, 0.0, h).unwrap();
    assert_eq!(r.width(), h / 4096.0);
    // temporal robustness resolves the delay to one sampling period
    assert!(r.lower <= exact && exact <= r.upper + DT, "{exact} vs [{}, {}]", r.lower, r.upper);
}

#[test]
fn pure_delay_front_drops_after_delay() {
    let (m, i, sp) = (replay(step(1.0)), replay(step(1.2)), space());
    let c = ctx(&m, &i, &sp);
    let taus = [0.05, 0.15, 0.25, 0.4];
    let front = pareto_front(&c, &taus, 10, 2.0, 30).unwrap();
    let pt = parallel_concat(&step(1.0), &step(1.2), 3.0, 1).unwrap();
    let mut prev = f64::INFINITY;
    for p in &front {
        let r = p.result.as_ref().unwrap();
        let exact = epsilon_star_parallel(&pt, p.tau);
        assert!(r.lower <= exact && exact <= r.upper, "tau {}: {exact} vs [{}, {}]", p.tau, r.lower, r.upper);
        assert!(r.upper <= prev + r.width());
        prev = r.upper;
    }
    assert!(front[3].result.as_ref().unwrap().upper <= 2.0 / 1024.0);
}

#[test]
fn identical_front_is_flat_zero() {
    let (m, sp) = (replay(step(1.0)), space());
    let c = ctx(&m, &m, &sp);
    for p in pareto_front(&c, &[0.1, 0.2], 6, 1.0, 30).unwrap() {
        let r = p.result.unwrap();
        assert_eq!((r.lower, r.upper), (0.0, 1.0 / 64.0));
    }
    let r = binary_search_epsilon(&c, 0.1, 6, 0.0, 1.0).unwrap();
    assert!(r.witness.is_none());
}
