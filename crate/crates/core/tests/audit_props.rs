use bfppc::audit::{ppc_reference_control, ppc_taylor, singularity_demo, tanh_bound_check, PpcValue};
use bfppc::engine::Rk4;
use bfppc::plant::builtin::example1;
use bfppc::regulator::assemble_regulation;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn barrier_law_matches_its_odd_expansion(k in 0.1f64..10.0, rho in 0.01f64..10.0, r in -0.1f64..=0.1) {
        let e = r * rho;
        let r = e / rho;
        let PpcValue::Finite(v) = ppc_reference_control(k, rho, e) else {
            return Err(TestCaseError::fail("finite expected"));
        };
        let gap = (v - ppc_taylor(k, r)).abs();
        // truncation after the fifth power, plus rounding slack
        prop_assert!(gap <= 2.0 * k * r.abs().powi(7) + 1e-15 * k, "gap {} r {}", gap, r);
    }

    #[test]
    fn barrier_law_is_singular_outside(k in 0.1f64..10.0, rho in 0.01f64..10.0, s in 1.0f64..100.0) {
        prop_assert!(ppc_reference_control(k, rho, s * rho).is_singular());
        prop_assert!(ppc_reference_control(k, rho, -s * rho).is_singular());
    }
}

#[test]
fn quantized_error_crosses_the_barrier() {
    let s = example1().unwrap();
    let q0 = s.quantizer.clone().quantize_state(s.plant.x0()).unwrap();
    let cfg = assemble_regulation(&s.design, s.nominal_gains.clone(), s.quantizer.bound(), s.performance, &q0).unwrap();
    let d0 = s.quantizer.bound();
    for rho in [d0, 0.5 * d0, 0.01] {
        let demo = singularity_demo(&cfg, &s.quantizer, s.plant.x0(), rho, 1.0, 10_000).unwrap();
        assert!(demo.pass, "rho {rho}: {demo:?}");
        assert!(demo.e_true.unwrap().abs() < rho);
        assert!(demo.e_quantized.unwrap().abs() >= rho);
    }
}

#[test]
fn tanh_bound_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let m = rng.gen_range(0.01..100.0);
        let eps = rng.gen_range(0.01..10.0);
        let r = tanh_bound_check(m, eps, 100_000, 0.3).unwrap();
        assert!(r.report.pass);
        assert!((r.observed_max / eps - 0.2785).abs() <= 1e-3, "{}", r.observed_max / eps);
    }
}

/// Return error of the unit oscillator after one period.
fn oscillator_error(h: f64) -> f64 {
    let steps = (2.0 * std::f64::consts::PI / h).round() as usize;
    let h = 2.0 * std::f64::consts::PI / steps as f64;
    let mut x = [1.0, 0.0];
    let mut rk = Rk4::new(2);
    for k in 0..steps {
        rk.step(
            |_, x, d| {
                d[0] = x[1];
                d[1] = -x[0];
                Ok(())
            },
            k as f64 * h,
            h,
            &mut x,
        )
        .unwrap();
    }
    ((x[0] - 1.0).powi(2) + x[1].powi(2)).sqrt()
}

#[test]
fn integrator_is_fourth_order() {
    let hs = [1e-2, 5e-3, 2.5e-3];
    let errs: Vec<f64> = hs.iter().map(|&h| oscillator_error(h)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }
}
