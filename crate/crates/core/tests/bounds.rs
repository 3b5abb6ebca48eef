use std::sync::Arc;

use bfppc::audit::{
    audit_majorization, audit_plant_majorants, audit_plant_majorants_in, audit_regulation_bounds, audit_tracking_bounds, check_w_function,
    Grid,
};
use bfppc::plant::builtin::{example1, example2, Example1StageOne};
use bfppc::random::RandomRegulation;
use bfppc::regulator::{synthesize_regulation, ControlOutput, RegulationBound, RegulationBoundArgs};
use bfppc::tracker::synthesize_tracking;
use bfppc::RegulationControllerConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example1_synthesized() -> (RegulationControllerConfig, bfppc::Quantizer) {
    let s = example1().unwrap();
    let q0 = s.quantizer.clone().quantize_state(s.plant.x0()).unwrap();
    let cfg = synthesize_regulation(&s.design, s.quantizer.bound(), s.performance, &q0).unwrap();
    (cfg, s.quantizer)
}

#[test]
fn example1_majorants_hold_on_the_wide_box() {
    let r = audit_plant_majorants(&example1().unwrap().plant, 5.0, 10_000, 1).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn example2_gain_floor_needs_the_reachable_box() {
    let plant = example2().unwrap().plant;
    // 1 + sin(x1^2) dips below g_m = 1 once |x1| > sqrt(pi)
    let wide = audit_plant_majorants(&plant, 5.0, 10_000, 2).unwrap();
    assert!(!wide.pass);
    assert!(wide.worst_location[0].abs() > std::f64::consts::PI.sqrt());
    // |x1| <= |y_d| + p_1 + rho |x1(0) - y_d(0)| = 1 + 0.05 + 0.5
    let reach = audit_plant_majorants_in(&plant, &[(-1.55, 1.55), (-20.0, 20.0)], 10_000, 2).unwrap();
    assert!(reach.pass, "{reach:?}");
    // the reachable bound sits inside the region where the floor holds:
    // 1.55^2 = 2.4025 < pi
}

#[test]
fn illustrative_w_examples_are_w_functions() {
    let grid = Grid::uniform(&[(0.0, 3.0), (0.0, 3.0)], 21);
    let first = check_w_function(|z| Ok(z[0] * z[0] + z[0] + z[0] * z[1]), &grid).unwrap();
    assert!(first.pass, "{first:?}");
    let second = check_w_function(|z| Ok(z[1] * z[0] * z[0] + z[1].exp()), &grid).unwrap();
    assert!(second.pass, "{second:?}");
    // and they dominate the functions they were built for
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let (a, b): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let f1 = a * a + a * a.sin() + a * b;
        assert!(f1.abs() <= a * a + a.abs() + (a * b).abs());
        let f2 = b * a * a + b.exp() * b.cos();
        assert!(f2.abs() <= b.abs() * a * a + b.abs().exp());
    }
}

#[test]
fn bundled_regulation_bounds_are_w_functions() {
    let s = example1().unwrap();
    let (cfg, q) = example1_synthesized();
    for r in audit_regulation_bounds(&s.design.bounds, &cfg, q.bound()).unwrap() {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn bundled_tracking_bounds_are_w_functions() {
    let s = example2().unwrap();
    let cfg = synthesize_tracking(&s.design, &s.plant, s.reference.clone(), s.performance.clone(), 15.0, true)
        .unwrap();
    let worst = s.design.worst_case(&s.plant, &s.reference, &s.performance, 15.0).unwrap();
    for r in audit_tracking_bounds(&s.design.bounds, &cfg, &worst, s.plant.gain_floor()).unwrap() {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn stage_one_majorization_threshold() {
    let grid = Grid::uniform(&[(0.0, 1.0)], 1001);
    let rhs = |z: &[f64]| {
        let a = RegulationBoundArgs {
            rho: z[0],
            rho_dot: 0.5,
            errors: vec![0.15],
            q_x0: vec![1.0, 0.0],
            delta0: 0.05,
        };
        Example1StageOne.eval(&a, &[])
    };
    let pass = audit_majorization(|_| Ok(5.0), rhs, &grid).unwrap();
    assert!(pass.report.pass);
    // (0.15 + 1.1)^2 + 1 + 0.55 + 0.1
    assert!((pass.max_target - 3.2125).abs() < 1e-12);
    let fail = audit_majorization(|_| Ok(3.0), rhs, &grid).unwrap();
    assert!(!fail.report.pass);
    assert_eq!(fail.report.worst_location, vec![1.0]);
}

/// Draws true states whose errors fill the invariant box and checks the
/// quantized and true virtual controls against the mismatch radii.
fn mismatch_sampling(cfg: &RegulationControllerConfig, q: &bfppc::Quantizer, x0: &[f64], seed: u64) {
    let n = cfg.order();
    let p = cfg.radii().to_vec();
    let d = cfg.mismatch().to_vec();
    let q_x0 = cfg.params().q_x0.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = ControlOutput::with_order(n);
    let mut quant = ControlOutput::with_order(n);
    let mut x = vec![0.0; n];
    let mut qx = vec![0.0; n];
    let mut worst = vec![0.0f64; n];
    for _ in 0..10_000 {
        let rho: f64 = rng.gen_range(0.0..=1.0);
        let mut alpha_prev = 0.0;
        for i in 0..n {
            let e: f64 = rng.gen_range(-p[i]..=p[i]);
            x[i] = e + alpha_prev + rho * x0[i];
            alpha_prev = cfg.stages()[i].law(e);
        }
        cfg.evaluate_into(&x, x0, rho, &mut truth).unwrap();
        for i in 0..n {
            qx[i] = q.quantize(x[i]).unwrap();
        }
        cfg.evaluate_into(&qx, &q_x0, rho, &mut quant).unwrap();
        for i in 0..n {
            let a_true = if i + 1 < n { truth.alpha[i] } else { truth.u };
            let a_q = if i + 1 < n { quant.alpha[i] } else { quant.u };
            worst[i] = worst[i].max((a_q - a_true).abs() / d[i]);
            assert!((a_q - a_true).abs() <= d[i], "stage {} rho {rho} x {x:?}", i + 1);
        }
    }
    assert!(worst.iter().all(|&w| w <= 1.0));
}

#[test]
fn mismatch_bound_example1() {
    let (cfg, q) = example1_synthesized();
    assert!(cfg.feasibility().pass);
    mismatch_sampling(&cfg, &q, &[1.0, 0.0], 9);
}

#[test]
fn mismatch_bound_random_plants() {
    for seed in 0..10 {
        let s = RandomRegulation::generate(seed).unwrap();
        let cfg = s.synthesize().unwrap();
        mismatch_sampling(&cfg, &s.quantizer, s.plant.x0(), 100 + seed);
    }
}

#[test]
fn regulation_control_defined_everywhere() {
    let (cfg, _) = example1_synthesized();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let scale = 10f64.powi(rng.gen_range(-3..=6));
        let x = [rng.gen_range(-scale..=scale), rng.gen_range(-scale..=scale)];
        let t = rng.gen_range(0.0..20.0);
        let out = cfg.regulation_control(&x, t).unwrap();
        assert!(out.u.is_finite() && out.alpha.iter().all(|a| a.is_finite()), "{x:?}");
    }
}

#[test]
fn odd_in_the_state_when_initial_values_vanish() {
    let (cfg, _) = example1_synthesized();
    let zero = [0.0, 0.0];
    let mut a = ControlOutput::with_order(2);
    let mut b = ControlOutput::with_order(2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        cfg.evaluate_into(&x, &zero, 0.7, &mut a).unwrap();
        cfg.evaluate_into(&[-x[0], -x[1]], &zero, 0.7, &mut b).unwrap();
        assert_eq!(a.alpha[0], -b.alpha[0]);
        assert_eq!(a.u, -b.u);
    }
}

#[test]
fn tracking_laws_grow_without_a_pole() {
    let s = example2().unwrap();
    let cfg = synthesize_tracking(&s.design, &s.plant, s.reference.clone(), s.performance.clone(), 15.0, true)
        .unwrap();
    for sigma in 1..=cfg.stage_count() {
        for (g, &eps) in cfg.gains(sigma).iter().zip(cfg.eps()) {
            let mut prev = 0.0;
            for k in 0..=100_000 {
                let e = 1e6 * k as f64 / 100_000.0;
                let v = g.law(e, eps).abs();
                assert!(v.is_finite() && v >= prev, "sigma {sigma} e {e}");
                prev = v;
            }
            assert_eq!(prev, g.law(1e6, eps).abs());
            assert_eq!(g.law(-1e6, eps), -g.law(1e6, eps));
        }
    }
}

#[test]
fn bound_args_round_trip() {
    let a = RegulationBoundArgs::worst_case(1.0, 0.5, &[0.15, 3.0], &[1.0, -0.2], 0.05);
    let flat = a.flatten();
    assert_eq!(flat.len(), RegulationBoundArgs::arity(2, 2));
    assert_eq!(RegulationBoundArgs::from_flat(&flat, 2, 2), a);
    let _unused: Vec<Arc<dyn RegulationBound>> = vec![Arc::new(Example1StageOne)];
}
