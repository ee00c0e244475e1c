use nalgebra::DVector;
use proptest::prelude::*;
use ttslab::flow::{integrate_sde, SdeSpec};
use ttslab::model::SlowMinimum;
use ttslab::model::{build_model, LossModel, ModelSpec, StateVector};
use ttslab::regime::{
    detect_events, detect_in_series, detect_phenomena, exit_time_stats, jitter_stats, nearest_valley, segment,
    segment_norms, DetectorConfig, PhenomenonKind, Regime, RegimeError, SegmentThresholds, ValleyTrack,
};
use ttslab::sgd::{run, run_with, NoiseSpec, RunOptions, TimescaleConfig};

fn steps(m: usize) -> Vec<u64> {
    (0..m as u64).collect()
}

#[test]
fn zero_noise_quadratic_has_no_material_middle() {
    let m = build_model(&ModelSpec::new("quadratic")).unwrap();
    let init = StateVector::from_slices(&[5.0], &[10.0]).unwrap();
    let cfg = TimescaleConfig::new(0.1, 0.01, 20_000);
    let traj = run(m.as_ref(), &init, &cfg).unwrap();
    let seg = segment(&traj, &SegmentThresholds::default()).unwrap();
    assert_eq!(seg.segments.first().unwrap().label, Regime::Initial);
    assert_eq!(seg.segments.last().unwrap().label, Regime::Terminal);
    let middle = seg.get(Regime::Middle).map_or(0, |s| s.len());
    assert!(middle * 20 < 20_000, "middle spans {middle} iterations");
}

#[test]
fn constant_high_ratio_is_one_initial_segment() {
    let m = 500;
    let th = SegmentThresholds {
        g_min: Some(1.0),
        ..Default::default()
    };
    // ρ = ‖gx‖ / (ε‖gu‖) = 100 / (0.1 · 10) = 100.
    let seg = segment_norms(&steps(m), &vec![100.0; m], &vec![10.0; m], 0.1, 0.1, &th).unwrap();
    assert_eq!(seg.segments.len(), 1);
    assert_eq!(seg.segments[0].label, Regime::Initial);
    assert_eq!((seg.segments[0].n_start, seg.segments[0].n_end), (0, 499));
    assert!(seg.ratio.iter().all(|r| (r - 100.0).abs() < 1e-12));
}

#[test]
fn curvature_above_two_over_a_diverges() {
    // a·κ = 10 makes the fast block expand by a factor 9 per step.
    let m = build_model(
        &ModelSpec::new("pinched-valley")
            .scalar("kappa", 200.0)
            .scalar("dim_x", 2.0),
    )
    .unwrap();
    let init = StateVector::from_slices(&[0.0, 0.0], &[10.0]).unwrap();
    let cfg = TimescaleConfig::new(0.05, 0.01, 5_000).with_noise(NoiseSpec::gaussian(0.3));
    let traj = run(m.as_ref(), &init, &cfg).unwrap();
    assert!(traj.diverged_at.is_some());
}

fn grokking_valley() -> (Box<dyn LossModel>, StateVector) {
    let m = build_model(
        &ModelSpec::new("pinched-valley")
            .scalar("dim_x", 2.0)
            .scalar("kappa", 0.25)
            .scalar("bend_height", 4.5)
            .scalar("bend_width", 0.05)
            .scalar("bend_center", 0.5),
    )
    .unwrap();
    let u0 = 0.65;
    let mut x0 = m.oracle_lambda(&DVector::from_element(1, u0)).unwrap();
    x0[1] += 10.0;
    let init = StateVector::new(x0, DVector::from_element(1, u0 / 0.1)).unwrap();
    (m, init)
}

#[test]
fn bend_crossing_gives_jitter_dominated_middle() {
    let (m, init) = grokking_valley();
    let cfg = TimescaleConfig::new(0.05, 0.1, 30_000)
        .with_noise(NoiseSpec::gaussian(0.01))
        .with_seed(3);
    let traj = run(m.as_ref(), &init, &cfg).unwrap();
    let seg = segment(&traj, &SegmentThresholds::default()).unwrap();
    assert_eq!(seg.labels(), vec![Regime::Initial, Regime::Middle, Regime::Terminal]);
    let middle = *seg.get(Regime::Middle).unwrap();
    assert!(middle.len() as f64 >= 10.0 / cfg.b());
    let ratio = seg.segment_rms(Regime::Middle).unwrap() / seg.segment_rms(Regime::Terminal).unwrap();
    assert!(ratio >= 2.0, "{ratio}");
    let events = detect_phenomena(&traj, None, &DetectorConfig::default()).unwrap();
    let plateaus: Vec<_> = events.iter().filter(|e| e.kind == PhenomenonKind::Plateau).collect();
    assert_eq!(plateaus.len(), 1);
    assert!(middle.contains(plateaus[0].n_start) && middle.contains(plateaus[0].n_end));
}

#[test]
fn converged_noiseless_fast_block_has_no_jitter() {
    let m = build_model(&ModelSpec::new("quadratic").scalar("b", 0.0)).unwrap();
    let init = StateVector::from_slices(&[0.0], &[3.0]).unwrap();
    let traj = run(m.as_ref(), &init, &TimescaleConfig::new(0.1, 0.1, 200)).unwrap();
    let j = jitter_stats(&traj, 50, 200).unwrap();
    assert!(j.rms <= 1e-8);
    assert_eq!(j.samples, 150);
    assert!(matches!(
        jitter_stats(&traj, 0, 9),
        Err(RegimeError::WindowTooShort { samples: 9 })
    ));
}

#[test]
fn jitter_matches_ar1_variance() {
    let m = build_model(&ModelSpec::new("quadratic").scalar("b", 0.0)).unwrap();
    let (a, sigma) = (0.1, 0.1);
    let init = StateVector::from_slices(&[0.0], &[1.0]).unwrap();
    let cfg = TimescaleConfig::new(a, 0.1, 300).with_noise(NoiseSpec::gaussian(sigma));
    let mut sq = 0.0;
    for replica in 0..500 {
        let opts = RunOptions {
            replica,
            ..Default::default()
        };
        let traj = run_with(m.as_ref(), &init, &cfg, &opts).unwrap();
        sq += jitter_stats(&traj, 100, 300).unwrap().rms.powi(2);
    }
    let oracle = a * a * sigma * sigma / (1.0 - (1.0 - a) * (1.0 - a));
    let rel = (sq / 500.0 / oracle - 1.0).abs();
    assert!(rel < 0.15, "{rel}");
}

#[test]
fn missing_tracking_is_reported() {
    let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
    let init = StateVector::from_slices(&[0.0], &[1.0]).unwrap();
    let opts = RunOptions {
        lambda: ttslab::sgd::LambdaSource::None,
        ..Default::default()
    };
    let traj = run_with(m.as_ref(), &init, &TimescaleConfig::new(0.1, 0.1, 100), &opts).unwrap();
    assert_eq!(jitter_stats(&traj, 0, 100), Err(RegimeError::MissingTracking));
}

#[test]
fn strictly_decreasing_loss_has_no_events() {
    let m = 10_000;
    let loss: Vec<f64> = (0..m).map(|i| (-(i as f64) / 2_000.0).exp()).collect();
    let events = detect_events(&steps(m), &loss, m as u64, None, &DetectorConfig::default()).unwrap();
    assert!(events.is_empty(), "{events:?}");
}

#[test]
fn synthetic_plateau_is_located() {
    let h = 10_000usize;
    let (flat_start, flat_end) = (4_000usize, 6_000usize);
    let loss: Vec<f64> = (0..h)
        .map(|i| {
            if i < flat_start {
                1.0 - 0.5 * i as f64 / flat_start as f64
            } else if i < flat_end {
                0.5 + 1e-6 * ((i * 7919) % 13) as f64 / 6.0 - 1e-6
            } else {
                0.5 - 0.4 * (i - flat_end) as f64 / (h - flat_end) as f64
            }
        })
        .collect();
    let events = detect_events(&steps(h), &loss, h as u64, None, &DetectorConfig::default()).unwrap();
    assert_eq!(events.len(), 1, "{events:?}");
    let p = &events[0];
    assert_eq!(p.kind, PhenomenonKind::Plateau);
    let tol = 0.02 * (flat_end - flat_start) as f64;
    assert!((p.n_start as f64 - flat_start as f64).abs() <= tol, "{p:?}");
    assert!((p.n_end as f64 - (flat_end - 1) as f64).abs() <= tol, "{p:?}");
}

#[test]
fn double_descent_shape_gives_an_ascent() {
    let h = 6_000usize;
    let loss: Vec<f64> = (0..h)
        .map(|i| {
            let t = i as f64 / h as f64;
            1.0 - 0.8 * t + 0.5 * (-((t - 0.5) / 0.08).powi(2)).exp()
        })
        .collect();
    let events = detect_events(&steps(h), &loss, h as u64, None, &DetectorConfig::default()).unwrap();
    let ascents: Vec<_> = events.iter().filter(|e| e.kind == PhenomenonKind::Ascent).collect();
    assert_eq!(ascents.len(), 1, "{events:?}");
    let a = ascents[0];
    assert!(
        a.magnitude >= 0.05 && a.n_start < 2_700 && a.n_end > 2_700 && a.n_end < 3_000,
        "{a:?}"
    );
}

#[test]
fn catapult_on_sharp_ridge_spikes() {
    let m = build_model(
        &ModelSpec::new("pinched-valley")
            .scalar("dim_x", 2.0)
            .scalar("kappa", 10.0)
            .scalar("kappa_quad", 1.0),
    )
    .unwrap();
    // a·κ(1.2) = 2.44 > 2: the fast block is thrown out, then u drops.
    let init = StateVector::from_slices(&[0.0, 0.01], &[12.0]).unwrap();
    let cfg = TimescaleConfig::new(0.1, 0.1, 2_000)
        .with_noise(NoiseSpec::gaussian(0.01))
        .with_seed(1);
    let traj = run(m.as_ref(), &init, &cfg).unwrap();
    assert!(traj.diverged_at.is_none());
    let events = detect_phenomena(&traj, None, &DetectorConfig::default()).unwrap();
    assert!(events.iter().any(|e| e.kind == PhenomenonKind::Spike), "{events:?}");
    assert!(traj.records.last().unwrap().y[0] * 0.1 < 1.0);
}

#[test]
fn double_well_sde_leaves_the_shallow_valley() {
    let m = build_model(
        &ModelSpec::new("double-well-slow")
            .scalar("barrier", 0.06)
            .scalar("tilt", 0.02),
    )
    .unwrap();
    let eps = 0.05;
    let minima = m.slow_minima().unwrap();
    let shallow = minima.iter().find(|v| !v.global).unwrap().u[0];
    let init = StateVector::from_slices(&[shallow], &[shallow / eps]).unwrap();
    let mut spec = SdeSpec::new(eps, 0.5, 0.1, 200_000.0);
    spec.s_eps = Some(6.0);
    spec.seed = 5;
    spec.record_every = 10;
    let ts = integrate_sde(m.as_ref(), &spec, &init, 0).unwrap();
    let events = detect_in_series(&ts, eps, Some(m.as_ref()), &DetectorConfig::default()).unwrap();
    let first = events
        .iter()
        .find(|e| e.kind == PhenomenonKind::ValleyTransition)
        .expect("no valley transition");
    let reduced = |k: usize| {
        let u = &ts.y[k] * eps;
        m.eval(&m.oracle_lambda(&u).unwrap(), &u)
    };
    let cut = first.n_start as usize;
    let before = (0..cut).map(reduced).sum::<f64>() / cut as f64;
    let after = (cut..ts.len()).map(reduced).sum::<f64>() / (ts.len() - cut) as f64;
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn exit_times_without_noise_are_censored() {
    let m = build_model(&ModelSpec::new("double-well-slow").scalar("barrier", 0.06)).unwrap();
    let init = StateVector::from_slices(&[1.0], &[2.0]).unwrap();
    let mut spec = SdeSpec::new(0.5, 0.5, 0.1, 500.0);
    spec.s_eps = Some(0.0);
    spec.slow_diffusion = Some(0.0);
    let stats = exit_time_stats(m.as_ref(), &[spec], &init, 20, None).unwrap();
    assert_eq!((stats[0].exits, stats[0].censored), (0, 20));
    assert_eq!(stats[0].mean_exit, None);
    assert!(stats[0].ci.is_none());
}

#[test]
fn exit_times_with_strong_noise_escape() {
    let m = build_model(&ModelSpec::new("double-well-slow").scalar("barrier", 0.06)).unwrap();
    let init = StateVector::from_slices(&[1.0], &[2.0]).unwrap();
    let mut spec = SdeSpec::new(0.5, 0.5, 0.1, 2_000.0);
    spec.s_eps = Some(3.0);
    spec.slow_diffusion = Some(0.0);
    let stats = exit_time_stats(m.as_ref(), &[spec], &init, 200, None).unwrap();
    assert!(stats[0].exit_fraction() >= 0.99, "{}", stats[0].exit_fraction());
    let (lo, hi) = stats[0].ci.unwrap();
    assert!(lo <= stats[0].mean_exit.unwrap() && stats[0].mean_exit.unwrap() <= hi);
}

#[test]
fn exit_times_need_two_valleys() {
    let m = build_model(&ModelSpec::new("quadratic")).unwrap();
    let init = StateVector::from_slices(&[0.0], &[0.0]).unwrap();
    let spec = SdeSpec::new(0.5, 0.5, 0.1, 1.0);
    assert_eq!(
        exit_time_stats(m.as_ref(), &[spec], &init, 1, None),
        Err(RegimeError::NoValleys)
    );
}

fn positive_series(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e3, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segmentation_is_invariant_to_loss_scale(
        gx in positive_series(300),
        gu in positive_series(300),
        c in 1e-3f64..1e3,
    ) {
        let th = SegmentThresholds::default();
        let n = steps(300);
        let base = segment_norms(&n, &gx, &gu, 0.05, 0.1, &th).unwrap();
        let gx_c: Vec<f64> = gx.iter().map(|g| g * c).collect();
        let gu_c: Vec<f64> = gu.iter().map(|g| g * c).collect();
        let scaled = segment_norms(&n, &gx_c, &gu_c, 0.05, 0.1, &th).unwrap();
        prop_assert_eq!(base.segments, scaled.segments);
    }

    #[test]
    fn segments_partition_and_are_ordered(
        gx in positive_series(200),
        gu in positive_series(200),
        stride in 1u64..5,
    ) {
        let n: Vec<u64> = (0..200).map(|i| i * stride).collect();
        let seg = segment_norms(&n, &gx, &gu, 0.1, 0.1, &SegmentThresholds::default()).unwrap();
        prop_assert_eq!(seg.segments[0].n_start, 0);
        prop_assert_eq!(seg.segments.last().unwrap().n_end, 199 * stride);
        for w in seg.segments.windows(2) {
            prop_assert_eq!(w[0].n_end + 1, w[1].n_start);
            prop_assert!(w[0].label < w[1].label);
        }
    }

    #[test]
    fn non_increasing_loss_has_no_ascent_or_spike(
        drops in prop::collection::vec(0.0f64..1.0, 400),
        rise_rel in 1e-4f64..0.5,
        factor in 1.01f64..10.0,
    ) {
        let mut loss = Vec::with_capacity(drops.len());
        let mut level = 500.0;
        for d in drops {
            level -= d;
            loss.push(level);
        }
        let cfg = DetectorConfig {
            ascent_rel: rise_rel,
            spike_factor: factor,
            median_width: 21,
            ..Default::default()
        };
        let events = detect_events(&steps(400), &loss, 400, None, &cfg).unwrap();
        prop_assert!(events.iter().all(|e| e.kind == PhenomenonKind::Plateau));
    }

    #[test]
    fn valley_events_respect_dwell(
        path in prop::collection::vec(-2.0f64..2.0, 300),
        dwell in 1u64..40,
    ) {
        let minima = vec![
            SlowMinimum { u: DVector::from_element(1, -1.0), value: -0.1, global: true },
            SlowMinimum { u: DVector::from_element(1, 1.0), value: 0.1, global: false },
        ];
        let u: Vec<DVector<f64>> = path.iter().map(|p| DVector::from_element(1, *p)).collect();
        let loss = vec![1.0; 300];
        let track = ValleyTrack { u: &u, minima: &minima, dwell_steps: dwell };
        let events = detect_events(&steps(300), &loss, 300, Some(track), &DetectorConfig::default()).unwrap();
        let mut prev_end = 0;
        for e in events.iter().filter(|e| e.kind == PhenomenonKind::ValleyTransition) {
            prop_assert!(e.n_end - e.n_start >= dwell);
            prop_assert!(e.n_start >= prev_end);
            let ids: Vec<usize> = (e.n_start..=e.n_end)
                .map(|k| nearest_valley(&minima, &u[k as usize]))
                .collect();
            prop_assert!(ids.windows(2).all(|w| w[0] == w[1]));
            prev_end = e.n_end;
        }
    }
}
