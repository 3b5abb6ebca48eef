use bfppc::{Quantizer, QuantizerKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn bound_holds_on_a_million_draws() {
    let q = Quantizer::uniform(0.1).unwrap();
    let d0 = q.bound();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for _ in 0..1_000_000 {
        let x: f64 = rng.gen_range(-100.0..=100.0);
        if (q.quantize(x).unwrap() - x).abs() > d0 {
            failures += 1;
        }
    }
    assert_eq!(failures, 0);
}

#[test]
fn jump_of_one_interval_across_a_band_edge() {
    let q = Quantizer::uniform(0.1).unwrap();
    // 0.05 is the first band edge; straddle it by well under 1e-9
    let (a, b) = (0.05 - 2e-10, 0.05 + 2e-10);
    assert!(b - a < 1e-9);
    let jump = (q.quantize(b).unwrap() - q.quantize(a).unwrap()).abs();
    assert!((jump - 0.1).abs() < 1e-12, "jump {jump}");
}

#[test]
fn non_finite_input_is_a_domain_error() {
    let q = Quantizer::uniform(0.1).unwrap();
    assert!(q.quantize(f64::NAN).is_err());
    assert!(q.quantize(f64::INFINITY).is_err());
}

#[test]
fn other_kinds_honour_the_bound_only() {
    for kind in [QuantizerKind::HysteresisUniform, QuantizerKind::LogarithmicUniform] {
        let mut q = Quantizer::new(kind, 0.1, Some(0.08)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x: f64 = rng.gen_range(-10.0..10.0);
            let v = q.quantize_channel(0, x).unwrap();
            assert!((v - x).abs() <= 0.08, "{kind}: {x} -> {v}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn monotone(l0 in 1e-3f64..1.0, a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let q = Quantizer::uniform(l0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(q.quantize(lo).unwrap() <= q.quantize(hi).unwrap());
    }

    #[test]
    fn idempotent(l0 in 1e-3f64..1.0, x in -100.0f64..100.0) {
        let q = Quantizer::uniform(l0).unwrap();
        let v = q.quantize(x).unwrap();
        prop_assert_eq!(q.quantize(v).unwrap(), v);
    }

    #[test]
    fn odd_symmetric(l0 in 1e-3f64..1.0, x in -100.0f64..100.0) {
        let q = Quantizer::uniform(l0).unwrap();
        prop_assert_eq!(q.quantize(-x).unwrap(), -q.quantize(x).unwrap());
    }

    #[test]
    fn emits_multiples_of_the_interval(l0 in 1e-3f64..1.0, x in -100.0f64..100.0) {
        let q = Quantizer::uniform(l0).unwrap();
        let k = q.quantize(x).unwrap() / l0;
        prop_assert!((k - k.round()).abs() < 1e-9);
        prop_assert!((q.quantize(x).unwrap() - x).abs() <= q.bound());
    }
}
