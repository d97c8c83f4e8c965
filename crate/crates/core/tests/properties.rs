use carbonprof::intensity::CarbonIntensity;
use carbonprof::powersource::{PowerSample, SourceDescriptor};
use carbonprof::protocol::{compute_carbon, energy_wh, Figures};
use carbonprof::traceio::{
    detect_strain_window, integrate_joules, mean_power_full, parse_trace, serialize_trace, PowerTrace, TraceError,
};
use carbonprof::workloads::{expected_checksum, oracle_rotate, run_workload, Variant, WorkloadSpec};
use proptest::prelude::*;

fn build(points: &[(f64, f64)]) -> PowerTrace {
    let samples = points
        .iter()
        .map(|&(t, w)| PowerSample::from_watts(t, w).unwrap())
        .collect();
    PowerTrace::new(samples, SourceDescriptor::synthetic("constant:0")).unwrap()
}

/// Strictly increasing timestamps with non-negative powers.
fn arb_trace(max_len: usize) -> impl Strategy<Value = PowerTrace> {
    prop::collection::vec((0.001f64..5.0, 0.0f64..50.0), 2..max_len).prop_map(|steps| {
        let mut t = 0.0;
        let pts: Vec<(f64, f64)> = steps
            .into_iter()
            .map(|(dt, w)| {
                let p = (t, w);
                t += dt;
                p
            })
            .collect();
        build(&pts)
    })
}

fn arb_volts_amps_trace() -> impl Strategy<Value = PowerTrace> {
    prop::collection::vec((0.001f64..2.0, 0.1f64..24.0, 0.0f64..6.0, any::<bool>()), 1..60).prop_map(|rows| {
        let mut t = 0.0;
        let samples = rows
            .into_iter()
            .map(|(dt, v, a, with_va)| {
                t += dt;
                if with_va {
                    PowerSample::from_volts_amps(t, v, a).unwrap()
                } else {
                    PowerSample::from_watts(t, v * a).unwrap()
                }
            })
            .collect();
        PowerTrace::new(samples, SourceDescriptor::synthetic("constant:0")).unwrap()
    })
}

/// Trace and three ordered cut points inside its span.
fn arb_cuts() -> impl Strategy<Value = (PowerTrace, [f64; 3])> {
    arb_trace(80).prop_flat_map(|tr| {
        let (a, b) = (tr.first_t().unwrap(), tr.last_t().unwrap());
        (Just(tr), prop::array::uniform3(a..=b))
    })
    .prop_filter_map("distinct cuts", |(tr, mut cuts)| {
        cuts.sort_by(f64::total_cmp);
        (cuts[0] < cuts[1] && cuts[1] < cuts[2]).then_some((tr, cuts))
    })
}

proptest! {
    #[test]
    fn csv_round_trip_preserves_samples(tr in arb_volts_amps_trace()) {
        let back = parse_trace(serialize_trace(&tr).as_bytes()).unwrap();
        prop_assert_eq!(back.samples(), tr.samples());
    }

    #[test]
    fn integration_is_additive((tr, [a, b, c]) in arb_cuts()) {
        let whole = integrate_joules(&tr, a, c).unwrap();
        let parts = integrate_joules(&tr, a, b).unwrap() + integrate_joules(&tr, b, c).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0), "{} vs {}", whole, parts);
    }

    #[test]
    fn integration_is_non_negative_and_bounded((tr, [a, _, c]) in arb_cuts()) {
        let j = integrate_joules(&tr, a, c).unwrap();
        let peak = tr.samples().iter().map(|s| s.watts).fold(0.0, f64::max);
        prop_assert!(j >= 0.0);
        prop_assert!(j <= peak * (c - a) * (1.0 + 1e-12));
    }

    #[test]
    fn integration_is_linear_in_power(tr in arb_trace(60), c in 0.0f64..20.0) {
        let (a, b) = (tr.first_t().unwrap(), tr.last_t().unwrap());
        let scaled = tr.map_watts(|w| c * w).unwrap();
        let j = integrate_joules(&tr, a, b).unwrap();
        let js = integrate_joules(&scaled, a, b).unwrap();
        prop_assert!((js - c * j).abs() <= 1e-12 * (c * j).abs().max(1.0));
    }

    #[test]
    fn mean_power_lies_between_extremes(tr in arb_trace(60)) {
        let m = mean_power_full(&tr).unwrap();
        let lo = tr.samples().iter().map(|s| s.watts).fold(f64::INFINITY, f64::min);
        let hi = tr.samples().iter().map(|s| s.watts).fold(0.0, f64::max);
        prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
    }

    #[test]
    fn detected_window_is_sound(
        base in 1.0f64..10.0,
        noise in prop::collection::vec(-0.05f64..0.05, 200),
        start in 40usize..120,
        len in 1usize..60,
        step in 0.0f64..5.0,
    ) {
        let pts: Vec<(f64, f64)> = noise
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let lift = if (start..start + len).contains(&i) { step } else { 0.0 };
                (i as f64, base + n + lift)
            })
            .collect();
        let tr = build(&pts);
        match detect_strain_window(&tr, 0.0, 30.0, 3.0) {
            Ok(w) => {
                prop_assert!(w.t_end > w.t_start);
                prop_assert!(w.t_start >= 0.0 && w.t_end <= 199.0);
                prop_assert!(w.threshold > w.baseline_power);
                // Trimmed endpoints are raw samples above threshold.
                let at = |t: f64| tr.samples()[t as usize].watts;
                prop_assert!(at(w.t_start) > w.threshold && at(w.t_end) > w.threshold);
            }
            Err(TraceError::NoStrainDetected { threshold, baseline_mean, .. }) => {
                prop_assert!(threshold > baseline_mean);
            }
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }

    #[test]
    fn constant_traces_never_trigger(level in 0.0f64..100.0, n in 40usize..300) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * 0.5, level)).collect();
        let found = detect_strain_window(&build(&pts), 0.0, 10.0, 3.0);
        prop_assert!(matches!(found, Err(TraceError::NoStrainDetected { .. })), "{:?}", found);
    }

    #[test]
    fn variants_agree_with_oracle(m in 0u64..3000, window in 1usize..150) {
        let want = oracle_rotate(m, window).unwrap();
        prop_assert_eq!(expected_checksum(m, window).unwrap(), want);
        for v in Variant::ALL {
            let got = run_workload(&WorkloadSpec::new(v, m).with_window(window)).unwrap().checksum;
            prop_assert_eq!(got, want, "{} m={} window={}", v, m, window);
        }
    }

    #[test]
    fn carbon_is_linear_in_energy(e in 0.0f64..1e6, c in 0.0f64..100.0, factor in 0.01f64..2.0) {
        let i = CarbonIntensity::new("custom", factor).unwrap();
        let scaled = compute_carbon(c * e, &i);
        prop_assert!((scaled - c * compute_carbon(e, &i)).abs() <= 1e-9 * scaled.abs().max(1.0));
        prop_assert!(compute_carbon(e, &i) >= 0.0);
    }

    #[test]
    fn figures_scale_and_ignore_offsets(
        init in 0.0f64..20.0,
        extra in 0.0f64..20.0,
        time in 0.0f64..1e4,
        c in 0.01f64..10.0,
        d in 0.0f64..50.0,
    ) {
        let us = CarbonIntensity::default();
        let (f, _) = Figures::derive(init, init + extra, time, &us).unwrap();
        let (fs, _) = Figures::derive(c * init, c * (init + extra), time, &us).unwrap();
        let (fd, _) = Figures::derive(init + d, init + extra + d, time, &us).unwrap();
        prop_assert!((fs.carbon_g - c * f.carbon_g).abs() <= 1e-9 * (c * f.carbon_g).max(1e-300));
        prop_assert!((fd.alg_dr_w - f.alg_dr_w).abs() <= 1e-9);
        prop_assert!((f.energy_wh - energy_wh(f.alg_dr_w, time)).abs() <= 1e-12 * f.energy_wh.max(1.0));
        prop_assert!((f.energy_paper_wmin - 60.0 * f.energy_wh).abs() <= 1e-9 * f.energy_paper_wmin.max(1.0));
    }
}
