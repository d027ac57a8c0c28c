use cpsconf_core::monitor::{Evaluator, Formula, Predicate, RobustnessKind};
use cpsconf_core::tss::ParallelTrace;
use cpsconf_testkit::{boolean_signal, naive_robustness, random_formula, random_pair, FormulaShape, PairShape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case(seed: u64) -> (ParallelTrace, Formula) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(2..40);
    let dim = rng.random_range(1..4);
    let jumps = if rng.random_bool(0.3) { rng.random_range(0..3) } else { 0 };
    let trace = random_pair(&mut rng, PairShape { len, dim, dt: 0.125, jumps }, true);
    let shape = FormulaShape { depth: 4, dim, modes: true, max_shift: (len as i64 - 1).min(3), span: len as f64 * 0.125 };
    (trace, random_formula(&mut rng, shape))
}

fn signal(phi: &Formula, trace: &ParallelTrace, kind: RobustnessKind) -> Vec<f64> {
    Evaluator::new(trace, kind).signal(phi).unwrap().into_iter().map(f64::from).collect()
}

/// Whether every norm atom sits under an even number of negations.
fn norm_atoms_positive(phi: &Formula, positive: bool) -> bool {
    match phi {
        Formula::True => true,
        Formula::Atom(Predicate::NormLessThan { .. }) => positive,
        Formula::Atom(_) => true,
        Formula::Not(f) => norm_atoms_positive(f, !positive),
        Formula::Or(fs) | Formula::And(fs) => fs.iter().all(|f| norm_atoms_positive(f, positive)),
        Formula::Implies(a, b) => norm_atoms_positive(a, !positive) && norm_atoms_positive(b, positive),
        Formula::Eventually(_, f) | Formula::Always(_, f) => norm_atoms_positive(f, positive),
        Formula::Until(_, a, b) => norm_atoms_positive(a, positive) && norm_atoms_positive(b, positive),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn spatial_matches_naive(seed in any::<u64>()) {
        let (trace, phi) = case(seed);
        prop_assert_eq!(signal(&phi, &trace, RobustnessKind::Spatial), naive_robustness(&phi, &trace, false), "{}", phi);
    }

    #[test]
    fn temporal_matches_naive(seed in any::<u64>()) {
        let (trace, phi) = case(seed);
        prop_assert_eq!(signal(&phi, &trace, RobustnessKind::Temporal), naive_robustness(&phi, &trace, true), "{}", phi);
    }

    #[test]
    fn sign_soundness(seed in any::<u64>()) {
        let (trace, phi) = case(seed);
        let sat = boolean_signal(&phi, &trace);
        for kind in [RobustnessKind::Spatial, RobustnessKind::Temporal] {
            for (i, r) in signal(&phi, &trace, kind).into_iter().enumerate() {
                if r != 0.0 {
                    prop_assert_eq!(r > 0.0, sat[i], "{:?} {} at {}", kind, phi, i);
                }
            }
        }
    }

    #[test]
    fn negation_flips_sign(seed in any::<u64>()) {
        let (trace, phi) = case(seed);
        for kind in [RobustnessKind::Spatial, RobustnessKind::Temporal] {
            let pos = signal(&phi, &trace, kind);
            let neg = signal(&Formula::not(phi.clone()), &trace, kind);
            prop_assert!(pos.iter().zip(&neg).all(|(a, b)| *a == -*b));
        }
    }

    #[test]
    fn desugaring_is_exact(seed in any::<u64>()) {
        let (trace, phi) = case(seed);
        for kind in [RobustnessKind::Spatial, RobustnessKind::Temporal] {
            prop_assert_eq!(signal(&phi, &trace, kind), signal(&phi.desugar(), &trace, kind));
        }
    }

    #[test]
    fn larger_norm_bounds_never_hurt(seed in any::<u64>(), bump in 0.0f64..2.0) {
        let (trace, phi) = case(seed);
        prop_assume!(norm_atoms_positive(&phi, true));
        let looser = phi.map_predicates(&mut |p| match p {
            Predicate::NormLessThan { signal, shift, threshold } => {
                Predicate::NormLessThan { signal: *signal, shift: *shift, threshold: threshold + bump }
            }
            other => other.clone(),
        });
        let a = signal(&phi, &trace, RobustnessKind::Spatial);
        let b = signal(&looser, &trace, RobustnessKind::Spatial);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y), "{}", phi);
    }

    #[test]
    fn rendering_round_trips(seed in any::<u64>()) {
        let (trace, phi) = case(seed);
        let text = phi.to_string();
        let back = cpsconf_core::monitor::parse(&text).unwrap();
        prop_assert_eq!(signal(&back, &trace, RobustnessKind::Spatial), signal(&phi, &trace, RobustnessKind::Spatial), "{}", text);
    }
}
