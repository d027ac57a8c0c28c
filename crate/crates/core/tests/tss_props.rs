use cpsconf_core::tss::{segment_by_jumps, shift, window_count, FillPolicy, TimedStateSequence};
use cpsconf_testkit::{irregular_trace, random_trace, timeline};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn values(t: &TimedStateSequence) -> Vec<Vec<f64>> {
    (0..t.len()).map(|i| t.raw_sample(i).to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shift_round_trip_keeps_interior_values(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..60);
        let dim = rng.random_range(1..4);
        let x = irregular_trace(&mut rng, n, dim);
        let k = rng.random_range(-(n as i64 - 1)..n as i64);
        let back = shift(&shift(&x, k, FillPolicy::ConstantInterpolation, 10.0).unwrap(), -k, FillPolicy::ConstantInterpolation, 10.0).unwrap();
        let m = k.unsigned_abs() as usize;
        let (xv, bv) = (values(&x), values(&back));
        // positions whose value survived both shifts
        let range = if k >= 0 { m..n } else { 0..n - m };
        for i in range {
            prop_assert_eq!(&xv[i], &bv[i]);
        }
        prop_assert_eq!(back.len(), n);
    }

    #[test]
    fn shift_preserves_length_and_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..40);
        let x = irregular_trace(&mut rng, n, 2);
        let k = rng.random_range(-(n as i64 - 1)..n as i64);
        for fill in [FillPolicy::ConstantInterpolation, FillPolicy::PositiveInfinity] {
            let s = shift(&x, k, fill, 5.0).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert!(s.timestamps().windows(2).all(|w| w[0].t < w[1].t));
            let sentinels = (0..n).filter(|&i| s.is_sentinel(i)).count();
            let expected = if fill == FillPolicy::PositiveInfinity { k.unsigned_abs() as usize } else { 0 };
            prop_assert_eq!(sentinels, expected);
        }
    }

    #[test]
    fn window_count_grows_with_tau(seed in any::<u64>(), a in 0.001f64..3.0, b in 0.001f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..50);
        let x = irregular_trace(&mut rng, n, 1);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(window_count(&x, lo).unwrap() <= window_count(&x, hi).unwrap());
        prop_assert!(window_count(&x, hi).unwrap() < x.len());
    }

    #[test]
    fn segments_partition_the_trace(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..50);
        let jumps = rng.random_range(0..5);
        let ts = timeline(&mut rng, n, 0.25, jumps);
        let x = random_trace(&mut rng, &ts, 2, true);
        let segs = segment_by_jumps(&x);
        prop_assert_eq!(segs.iter().map(|s| s.trace.len()).sum::<usize>(), n);
        prop_assert!(segs.windows(2).all(|w| w[0].jump < w[1].jump));
        prop_assert!(segs.iter().all(|s| s.trace.is_real()));
        let glued: Vec<Vec<f64>> = segs.iter().flat_map(|s| values(&s.trace)).collect();
        prop_assert_eq!(glued, values(&x));
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..30);
        let jumps = rng.random_range(0..3);
        let ts = timeline(&mut rng, n, 0.1, jumps);
        let (dim, modes) = (rng.random_range(1..4), rng.random_bool(0.5));
        let x = random_trace(&mut rng, &ts, dim, modes);
        let back = TimedStateSequence::from_csv_str(&x.to_csv_string()).unwrap();
        prop_assert_eq!(back, x);
    }
}
