use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;

use super::{quiet, sample_var};
use crate::metrics::PhaseSeries;
use crate::oscillator::{gen_pll_white_jitter, jitter_to_phase, NoiseModel, OscillatorParams};
use crate::sigchain::*;
use crate::wrap_phase;

fn chains(thetas: &[f64], osc: OscillatorParams) -> Vec<ChainConfig> {
    thetas
        .iter()
        .map(|&theta_rf| ChainConfig { delta_f: 0.0, theta_rf, osc, model: NoiseModel::PllExact, drift: 0.0 })
        .collect()
}

fn zeros(m: usize, n: usize, f_c: f64) -> Vec<PhaseSeries> {
    (0..m).map(|_| PhaseSeries { values: vec![0.0; n], interval: 1.0, f_c }).collect()
}

#[test]
fn estimator_unbiased_with_expected_spread() {
    let osc = quiet(5e-8);
    let n = 16;
    let timing = FrameTiming { n_preamble: n, m_chains: 1, t_obs: 1e-4, t_dm: 0.0, l_obs: 1, t_s: osc.t_s };
    let x = gen_preamble(n, PreambleKind::ZadoffChu, 1, osc.t_s).unwrap();
    let theta = 0.7;
    let ch = chains(&[theta], osc);
    let snr_db = 20.0;
    let trials = 10_000;
    let errs: Vec<f64> = (0..trials as u64)
        .map(|seed| {
            let frame =
                synthesize_received_frame(&timing, &ch, &x, &zeros(1, n, osc.f_c), 0, Some(snr_db), seed).unwrap();
            wrap_phase(estimate_all_phases(&frame, &x, &timing).unwrap()[0] - theta)
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / trials as f64;
    let sd = sample_var(&errs).sqrt();
    assert!(mean.abs() < 3.0 * sd / (trials as f64).sqrt(), "bias {mean}");
    // only the quadrature half of the complex noise power moves the phase
    let predicted = 1.0 / (2.0 * n as f64 * 10f64.powf(snr_db / 10.0)).sqrt();
    assert!((sd / predicted - 1.0).abs() < 0.1, "sd {sd} vs {predicted}");
}

#[test]
fn white_pll_estimates_track_true_mean_phase() {
    // six chains at the measurement timing, noiseless receiver
    let osc = OscillatorParams::new(1e-20, 1e-26, 1e6, 3.75e9, 2.5e-7).unwrap();
    let (m, n) = (6, 2500);
    let timing = FrameTiming { n_preamble: n, m_chains: m, t_obs: 0.1, t_dm: 0.05, l_obs: 1, t_s: osc.t_s };
    let thetas = [0.0, 1.1, -2.3, 0.4, 2.9, -0.7];
    let ch = chains(&thetas, osc);
    let x = gen_preamble(n, PreambleKind::ZadoffChu, 1, osc.t_s).unwrap();
    let traces: Vec<PhaseSeries> =
        (0..m as u64).map(|s| jitter_to_phase(&gen_pll_white_jitter(&osc, n, s).unwrap(), osc.f_c).unwrap()).collect();
    let frame = synthesize_received_frame(&timing, &ch, &x, &traces, 0, None, 0).unwrap();
    let est = estimate_all_phases(&frame, &x, &timing).unwrap();
    let tol = 3.0 * (osc.c_vco * osc.t_s / n as f64).sqrt() * TAU * osc.f_c;
    for k in 0..m {
        let truth = thetas[k] + traces[k].values.iter().sum::<f64>() / n as f64;
        assert!(wrap_phase(est[k] - truth).abs() < tol, "chain {k}");
    }
}

#[test]
fn preamble_kinds_have_unit_modulus() {
    for n in [1usize, 2, 7, 64, 101, 2500] {
        for (kind, root) in [(PreambleKind::ConstantOne, 1), (PreambleKind::ZadoffChu, 1), (PreambleKind::ZadoffChu, 3)]
        {
            let Ok(x) = gen_preamble(n, kind, root, 1.0) else {
                assert!(n % 3 == 0 && root == 3);
                continue;
            };
            assert!(x.samples.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }
    assert!(gen_preamble(4, PreambleKind::ZadoffChu, 2, 1.0).is_err());
}

#[test]
fn empty_frame_rejected() {
    let timing = FrameTiming { n_preamble: 1, m_chains: 1, t_obs: 1.0, t_dm: 0.0, l_obs: 1, t_s: 0.1 };
    let x = gen_preamble(1, PreambleKind::ConstantOne, 1, 0.1).unwrap();
    let frame = ReceivedFrame { samples: vec![], snr_db: None };
    assert!(estimate_all_phases(&frame, &x, &timing).is_err());
}

fn arb_chains(m: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-3.0f64..3.0, -2e3f64..2e3, -1.0f64..1.0), m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slot_isolation(params in arb_chains(3), other in (-3.0f64..3.0, -2e3f64..2e3), k in 0usize..3) {
        let osc = quiet(2.5e-7);
        let n = 32;
        let timing = FrameTiming { n_preamble: n, m_chains: 3, t_obs: 1e-3, t_dm: 0.0, l_obs: 2, t_s: osc.t_s };
        let x = gen_preamble(n, PreambleKind::ZadoffChu, 1, osc.t_s).unwrap();
        let mk = |p: &[(f64, f64, f64)]| -> Vec<ChainConfig> {
            p.iter().map(|&(theta_rf, delta_f, drift)| ChainConfig { delta_f, theta_rf, osc, model: NoiseModel::PllExact, drift }).collect()
        };
        let base = mk(&params);
        let mut changed = params.clone();
        changed[k] = (other.0, other.1, 0.3);
        let alt = mk(&changed);
        let tr = zeros(3, n, osc.f_c);
        let a = estimate_all_phases(&synthesize_received_frame(&timing, &base, &x, &tr, 1, None, 0).unwrap(), &x, &timing).unwrap();
        let b = estimate_all_phases(&synthesize_received_frame(&timing, &alt, &x, &tr, 1, None, 0).unwrap(), &x, &timing).unwrap();
        for m in 0..3 {
            if m != k {
                prop_assert_eq!(a[m].to_bits(), b[m].to_bits());
            }
        }
    }

    #[test]
    fn global_phase_shifts_every_estimate(thetas in prop::collection::vec(-1.5f64..1.5, 1..4), phi in -1.5f64..1.5) {
        let osc = quiet(2.5e-7);
        let m = thetas.len();
        let n = 25;
        let timing = FrameTiming { n_preamble: n, m_chains: m, t_obs: 1e-3, t_dm: 0.0, l_obs: 1, t_s: osc.t_s };
        let x = gen_preamble(n, PreambleKind::ZadoffChu, 1, osc.t_s).unwrap();
        let shifted: Vec<f64> = thetas.iter().map(|t| t + phi).collect();
        let tr = zeros(m, n, osc.f_c);
        let a = estimate_all_phases(&synthesize_received_frame(&timing, &chains(&thetas, osc), &x, &tr, 0, None, 0).unwrap(), &x, &timing).unwrap();
        let b = estimate_all_phases(&synthesize_received_frame(&timing, &chains(&shifted, osc), &x, &tr, 0, None, 0).unwrap(), &x, &timing).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!(wrap_phase(v - u - phi).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_phasor_estimate_is_wrapped_phase(theta in -20.0f64..20.0, n in 1usize..50) {
        let h = vec![Complex64::from_polar(1.0, theta); n];
        let est = estimate_phase(&h).unwrap();
        prop_assert!(est > -PI && est <= PI);
        prop_assert!(wrap_phase(est - theta).abs() < 1e-12);
    }
}
