use bfppc::audit::verify_envelope;
use bfppc::engine::{simulate, trace_stats, ControlHold, Controller, SimOptions, SimTrace};
use bfppc::plant::builtin::{example1, example2, RegulationSetup};
use bfppc::plant::{ChannelFn, Monomial, PlantChannel, PlantModel, Polynomial};
use bfppc::random::RandomRegulation;
use bfppc::regulator::{assemble_regulation, standard_bounds, RegulationDesign};
use bfppc::regulator::{ControlOutput, InequalityKind};
use bfppc::tracker::synthesize_tracking;
use bfppc::{PerformanceFunction, Quantizer, StageGains, TrackingControllerConfig};

fn nominal(s: &RegulationSetup) -> Controller {
    let q0 = s.quantizer.clone().quantize_state(s.plant.x0()).unwrap();
    let config =
        assemble_regulation(&s.design, s.nominal_gains.clone(), s.quantizer.bound(), s.performance, &q0).unwrap();
    Controller::Regulation {
        config,
        quantizer: s.quantizer.clone(),
    }
}

fn run1(s: &RegulationSetup, step: f64) -> SimTrace {
    let opts = SimOptions {
        step,
        t_end: 10.0,
        force: true,
        ..Default::default()
    };
    simulate(&s.plant, &nominal(s), &opts).unwrap()
}

fn tracking() -> (bfppc::plant::builtin::TrackingSetup, TrackingControllerConfig) {
    let s = example2().unwrap();
    let cfg = synthesize_tracking(&s.design, &s.plant, s.reference.clone(), s.performance.clone(), 15.0, true)
        .unwrap();
    (s, cfg)
}

#[test]
fn example1_stock_gains_stay_inside() {
    let s = example1().unwrap();
    let tr = run1(&s, 1e-4);
    assert!(tr.is_complete());
    assert_eq!(tr.rows.len(), 100_001);
    for (m, p) in tr.every_step_max_error.iter().zip(&tr.radii) {
        assert!(m <= p, "{m} > {p}");
    }
    let env = verify_envelope(&tr.rows, &tr.radii, |r| r.x[0]);
    assert!(env.pass, "{env:?}");
    let st = trace_stats(&tr.rows, &tr.radii, |r| r.x[0]);
    assert_eq!(st.sigma_switches, 0);
    assert_eq!(st.envelope_violations, 0);
    assert!(st.channels[0].level_switches > 0);
}

#[test]
fn example1_halving_moves_max_error_by_at_most_one_bound() {
    let s = example1().unwrap();
    let d0 = s.quantizer.bound();
    for h in [1e-3, 2e-4] {
        let coarse = run1(&s, h).every_step_max_error[0];
        let fine = run1(&s, h / 2.0).every_step_max_error[0];
        assert!(fine <= coarse + d0, "h {h}: {fine} vs {coarse}");
    }
}

#[test]
fn example2_tracks_inside_the_final_radius() {
    let (s, cfg) = tracking();
    assert!(cfg.feasibility().pass);
    let ctl = Controller::Tracking { config: cfg.clone() };
    let opts = SimOptions {
        t_end: 15.0,
        ..Default::default()
    };
    let tr = simulate(&s.plant, &ctl, &opts).unwrap();
    assert!(tr.is_complete());
    assert!(tr.every_step_max_error[0] <= 0.05);
    assert!(tr.every_step_max_error[1] <= 2.0);
    let st = trace_stats(&tr.rows, &tr.radii, |r| r.x[0] - r.t.sin());
    assert!(st.sigma_monotone && st.sigma_max <= 2);
    // |e_1| <= p_1 and x_1 - y_d inside [env_lo, env_hi] are the same inequality
    let p1 = tr.radii[0];
    for r in &tr.rows {
        let y = r.x[0] - r.t.sin();
        let inside = r.env_lo <= y && y <= r.env_hi;
        let slack = (p1 - r.e[0].abs()).abs();
        if slack > 1e-12 {
            assert_eq!(inside, r.e[0].abs() <= p1, "t = {}", r.t);
        }
    }
}

fn sup_state_gap(a: &SimTrace, b: &SimTrace) -> f64 {
    let mut m: f64 = 0.0;
    for (i, r) in a.rows.iter().enumerate() {
        let rb = &b.rows[2 * i];
        assert!((r.t - rb.t).abs() < 1e-9);
        for j in 0..r.x.len() {
            m = m.max((r.x[j] - rb.x[j]).abs());
        }
    }
    m
}

fn halving_orders(hold: ControlHold) -> Vec<f64> {
    let (s, cfg) = tracking();
    let ctl = Controller::Tracking { config: cfg };
    let traces: Vec<_> = [4e-3, 2e-3, 1e-3, 5e-4]
        .iter()
        .map(|&h| {
            let opts = SimOptions {
                step: h,
                t_end: 2.0,
                hold,
                ..Default::default()
            };
            let tr = simulate(&s.plant, &ctl, &opts).unwrap();
            assert!(tr.events.is_empty(), "window must be free of switches");
            tr
        })
        .collect();
    let gaps: Vec<f64> = traces.windows(2).map(|w| sup_state_gap(&w[0], &w[1])).collect();
    gaps.windows(2).map(|g| (g[0] / g[1]).log2()).collect()
}

#[test]
fn smooth_loop_converges_at_fourth_order() {
    for order in halving_orders(ControlHold::Continuous) {
        assert!(order >= 3.5, "{order}");
    }
}

#[test]
fn held_control_converges_at_first_order() {
    for order in halving_orders(ControlHold::SampleAndHold) {
        assert!((0.8..2.0).contains(&order), "{order}");
    }
}

#[test]
fn continuous_mode_rejects_quantized_loop() {
    let s = example1().unwrap();
    let opts = SimOptions {
        hold: ControlHold::Continuous,
        force: true,
        ..Default::default()
    };
    assert!(simulate(&s.plant, &nominal(&s), &opts).is_err());
}

#[test]
fn held_inputs_recompute_bit_for_bit() {
    let s = example1().unwrap();
    let ctl = nominal(&s);
    let tr = simulate(
        &s.plant,
        &ctl,
        &SimOptions {
            t_end: 2.0,
            force: true,
            ..Default::default()
        },
    )
    .unwrap();
    let Controller::Regulation { config, .. } = &ctl else { unreachable!() };
    for r in &tr.rows {
        let out = config.regulation_control(&r.qx, r.t).unwrap();
        assert_eq!(out.u.to_bits(), r.u.to_bits(), "t = {}", r.t);
    }

    let (s2, cfg) = tracking();
    let tr = simulate(
        &s2.plant,
        &Controller::Tracking { config: cfg.clone() },
        &SimOptions {
            t_end: 3.0,
            ..Default::default()
        },
    )
    .unwrap();
    let mut out = ControlOutput::with_order(2);
    for r in &tr.rows {
        cfg.control_into(r.sigma, &r.x, r.t, &mut out).unwrap();
        assert_eq!(out.u.to_bits(), r.u.to_bits(), "t = {}", r.t);
    }
}

#[test]
fn unstable_plant_with_negligible_gains_diverges() {
    // x1' = x1^2 + x2, x2' = x2 + u from x(0) = (1, 0)
    let f1 = Polynomial::new(vec![Monomial {
        coef: 1.0,
        powers: vec![2, 0],
    }]);
    let f2 = Polynomial::new(vec![Monomial {
        coef: 1.0,
        powers: vec![0, 1],
    }]);
    let plant = PlantModel::new(
        vec![
            PlantChannel::unit_gain(ChannelFn::Poly(f1.clone()), Some(ChannelFn::Poly(f1))),
            PlantChannel::unit_gain(ChannelFn::Poly(f2.clone()), Some(ChannelFn::Poly(f2))),
        ],
        1.0,
        vec![1.0, 0.0],
    )
    .unwrap();
    let design = RegulationDesign {
        eps: vec![0.1, 0.5],
        c0: 0.5,
        powers: vec![3, 3],
        bounds: standard_bounds(&plant, 0.1).unwrap(),
    };
    let q = Quantizer::uniform(0.1).unwrap();
    let zero = StageGains {
        gamma: 0.0,
        c: 0.0,
        power: 3,
        h: 1.0,
    };
    let cfg = assemble_regulation(
        &design,
        vec![zero, zero],
        0.05,
        PerformanceFunction::cosine(1.0).unwrap(),
        &[1.0, 0.0],
    )
    .unwrap();
    let ctl = Controller::Regulation { config: cfg, quantizer: q };
    let strict = SimOptions::default();
    assert!(matches!(simulate(&plant, &ctl, &strict), Err(bfppc::Error::Infeasible(_))));
    let tr = simulate(
        &plant,
        &ctl,
        &SimOptions {
            force: true,
            ..Default::default()
        },
    )
    .unwrap();
    let d = tr.divergence.expect("finite escape near t = 1");
    assert!(d.time > 0.5 && d.time < 1.5, "{d:?}");
    assert!(!tr.rows.is_empty());
}

#[test]
fn synthesized_random_designs_are_feasible() {
    for seed in 0..25 {
        let s = RandomRegulation::generate(1000 + seed).unwrap();
        let cfg = s.synthesize().unwrap();
        let rep = cfg.feasibility();
        assert!(rep.pass, "seed {seed}: {:?}", rep.failures().collect::<Vec<_>>());
        for c in &rep.checks {
            match c.kind {
                InequalityKind::FeedbackGainLower => assert!(c.residual > 0.0),
                _ => assert!(c.residual >= 0.0),
            }
        }
    }
}

#[test]
fn random_scenarios_stay_inside() {
    for seed in 0..5 {
        let s = RandomRegulation::generate(seed).unwrap();
        let cfg = s.synthesize().unwrap();
        let opts = RandomRegulation::options(&cfg, 10.0);
        let tr = simulate(&s.plant, &s.controller(cfg.clone()), &opts).unwrap();
        assert!(tr.is_complete());
        for (m, p) in tr.every_step_max_error.iter().zip(cfg.radii()) {
            assert!(m <= p, "seed {seed}: {m} > {p}");
        }
    }
}
