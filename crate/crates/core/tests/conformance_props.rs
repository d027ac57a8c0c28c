use cpsconf_core::conformance::{epsilon_star_parallel, is_close_parallel, tau_star_parallel};
use cpsconf_core::tss::{parallel_concat, ParallelTrace};
use cpsconf_testkit::{irregular_trace, random_pair, PairShape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair(seed: u64) -> ParallelTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.random_bool(0.5) {
        let dim = rng.random_range(1..3);
        let (na, nb) = (rng.random_range(1..30), rng.random_range(1..30));
        let a = irregular_trace(&mut rng, na, dim);
        let b = irregular_trace(&mut rng, nb, dim);
        parallel_concat(&a, &b, 100.0, 10).unwrap()
    } else {
        let len = rng.random_range(1..30);
        let jumps = rng.random_range(0..3);
        random_pair(&mut rng, PairShape { len, dim: 2, dt: 0.1, jumps }, false)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn closeness_is_symmetric(seed in any::<u64>(), tau in 0.01f64..1.0, eps in 0.01f64..3.0) {
        let p = pair(seed);
        prop_assert_eq!(is_close_parallel(&p, tau, eps).close, is_close_parallel(&p.swapped(), tau, eps).close);
    }

    #[test]
    fn closeness_is_upward_closed(seed in any::<u64>(), tau in 0.01f64..1.0, eps in 0.01f64..3.0, dt in 0.0f64..1.0, de in 0.0f64..1.0) {
        let p = pair(seed);
        if is_close_parallel(&p, tau, eps).close {
            prop_assert!(is_close_parallel(&p, tau + dt, eps + de).close);
        }
    }

    #[test]
    fn epsilon_star_non_increasing_in_tau(seed in any::<u64>(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let p = pair(seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(epsilon_star_parallel(&p, hi) <= epsilon_star_parallel(&p, lo));
    }

    #[test]
    fn tau_star_non_increasing_in_eps(seed in any::<u64>(), a in 0.01f64..3.0, b in 0.01f64..3.0) {
        let p = pair(seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tau_star_parallel(&p, hi) <= tau_star_parallel(&p, lo));
    }

    #[test]
    fn epsilon_star_separates(seed in any::<u64>(), tau in 0.01f64..1.0, frac in 0.01f64..0.99) {
        let p = pair(seed);
        let e = epsilon_star_parallel(&p, tau);
        prop_assume!(e.is_finite() && e > 0.0);
        prop_assert!(!is_close_parallel(&p, tau, e).close);
        prop_assert!(!is_close_parallel(&p, tau, e * frac).close);
        prop_assert!(is_close_parallel(&p, tau, e * (1.0 + frac) + 1e-12).close);
    }

    #[test]
    fn tau_star_separates(seed in any::<u64>(), eps in 0.01f64..3.0, frac in 0.01f64..0.99) {
        let p = pair(seed);
        let t = tau_star_parallel(&p, eps);
        prop_assume!(t.is_finite() && t > 0.0);
        prop_assert!(!is_close_parallel(&p, t, eps).close);
        prop_assert!(!is_close_parallel(&p, t * frac, eps).close);
        prop_assert!(is_close_parallel(&p, t * (1.0 + frac) + 1e-12, eps).close);
    }
}
