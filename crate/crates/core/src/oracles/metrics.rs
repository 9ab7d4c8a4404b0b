use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{scenario, table3};
use crate::calib::{run_calibration, CalibrationMode, CalibrationRun};
use crate::metrics::*;
use crate::oscillator::NoiseModel;
use crate::rng;

fn run_of(residuals: Vec<Vec<f64>>) -> CalibrationRun {
    CalibrationRun {
        estimates: residuals.clone(),
        corrections: residuals.clone(),
        residuals,
        scenario_hash: String::new(),
        trial: 0,
    }
}

#[test]
fn random_phases_average_to_incoherent_power() {
    for m in [4usize, 8] {
        let mut r = rng::stream(99, &[m as u64]);
        let draws = 10_000;
        let powers: Vec<f64> = (0..draws)
            .map(|_| {
                let eps: Vec<f64> = (0..m).map(|_| r.random_range(-PI..PI)).collect();
                10f64.powf(array_gain(&eps, &ArraySpec::ula(m, 0.0).unwrap(), 0.0).unwrap() / 10.0)
            })
            .collect();
        let mean = powers.iter().sum::<f64>() / draws as f64;
        let sd = super::sample_var(&powers).sqrt();
        assert!((mean - m as f64).abs() < 4.0 * sd / (draws as f64).sqrt(), "M = {m}: {mean}");
    }
}

#[test]
fn coherent_residuals_have_no_loss() {
    let run = run_of(vec![vec![0.0; 6]; 20]);
    assert_eq!(avg_beamforming_loss(&run, &ArraySpec::ula(6, 0.0).unwrap(), 5, 3).unwrap(), 0.0);
    let spec = ArraySpec::ula(6, 20.0).unwrap();
    assert!((array_gain(&[0.0; 6], &spec, 20.0).unwrap() - spec.ideal_gain_db()).abs() < 1e-12);
}

#[test]
fn incoherent_residuals_lose_array_gain() {
    let m = 8;
    let mut r = rng::stream(5, &[]);
    let residuals: Vec<Vec<f64>> = (0..20_000).map(|_| (0..m).map(|_| r.random_range(-PI..PI)).collect()).collect();
    let loss = avg_beamforming_loss(&run_of(residuals), &ArraySpec::ula(m, 0.0).unwrap(), 1, 1).unwrap();
    assert!((loss - 10.0 * (m as f64).log10()).abs() < 0.1, "loss {loss}");
}

#[test]
fn kde_recovers_normal_density() {
    let mut r = rng::stream(11, &[]);
    let xs: Vec<f64> = (0..100_000).map(|_| r.sample(StandardNormal)).collect();
    let curve = kde_density(&xs, None, 801).unwrap();
    let at_zero = curve.iter().min_by(|a, b| a.0.abs().total_cmp(&b.0.abs())).unwrap();
    assert!(at_zero.0.abs() < 0.02);
    assert!((at_zero.1 - 1.0 / TAU.sqrt()).abs() < 0.01, "{at_zero:?}");
}

#[test]
fn qq_of_normal_samples_is_diagonal() {
    let mut r = rng::stream(12, &[]);
    let xs: Vec<f64> = (0..10_000).map(|_| 3.0 + 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
    let pairs = qq_pairs(&xs).unwrap();
    assert!(qq_max_deviation(&pairs, 0.95) < 0.1);
    assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
}

#[test]
fn inverse_normal_reference_values() {
    // mpmath reference values
    assert!((inverse_normal_cdf(5.0 / 6.0) - 0.9674215661017014).abs() < 1e-12);
    assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-12);
    assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
}

#[test]
fn silverman_reference_value() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let sd = 2.5f64.sqrt();
    assert!((silverman_bandwidth(&xs).unwrap() - 1.06 * sd * 5f64.powf(-0.2)).abs() < 1e-12);
    assert!(silverman_bandwidth(&[1.0, 1.0, 1.0]).is_err());
}

#[test]
fn vco_jitter_grows_with_interval() {
    let grid = [1e-5, 1e-4, 1e-3, 1e-2];
    for seed in 1..=3 {
        let taus: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let n = ((t / 2.0) / 5e-8f64).min(100.0) as usize;
                let mut s = scenario(table3(), NoiseModel::Vco, CalibrationMode::Instantaneous, 1, n, 300, t);
                s.master_seed = seed;
                let run = run_calibration(&s).unwrap();
                rms_cycle_jitter(&run.residual_series(0, t, s.f_c).unwrap()).unwrap()
            })
            .collect();
        assert!(taus.windows(2).all(|w| w[0] < w[1]), "seed {seed}: {taus:?}");
    }
}

#[test]
fn rms_jitter_of_known_sequence() {
    // alternating ±a gives |Δ| = 2a every cycle
    let a = 0.01;
    let vals: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { a } else { -a }).collect();
    let f_c = 1e9;
    let tau = rms_cycle_jitter(&PhaseSeries::new(vals, 1e-3, f_c).unwrap()).unwrap();
    assert!((tau - 2.0 * a / (TAU * f_c)).abs() < 1e-24);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kde_is_a_density(xs in prop::collection::vec(-5.0f64..5.0, 3..200)) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-6));
        let curve = kde_density(&xs, None, 4001).unwrap();
        prop_assert!(curve.iter().all(|&(_, d)| d >= 0.0));
        let step = curve[1].0 - curve[0].0;
        let integral: f64 = curve.iter().map(|&(_, d)| d).sum::<f64>() * step;
        prop_assert!((integral - 1.0).abs() < 1e-3, "integral {}", integral);
    }

    #[test]
    fn rms_jitter_ignores_constant_offset(vals in prop::collection::vec(-3.0f64..3.0, 2..50), c in -3.0f64..3.0) {
        let f_c = 3.75e9;
        let a = rms_cycle_jitter(&PhaseSeries::new(vals.clone(), 1e-3, f_c).unwrap()).unwrap();
        let b = rms_cycle_jitter(&PhaseSeries::new(vals.iter().map(|v| v + c).collect(), 1e-3, f_c).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (a + 1e-20));
    }

    #[test]
    fn gain_ignores_common_offset(eps in prop::collection::vec(-PI..PI, 1..10), c in -PI..PI, look in -90.0f64..90.0) {
        let spec = ArraySpec::ula(eps.len(), 10.0).unwrap();
        let a = array_gain(&eps, &spec, look).unwrap();
        let shifted: Vec<f64> = eps.iter().map(|e| e + c).collect();
        let b = array_gain(&shifted, &spec, look).unwrap();
        prop_assert!((a - b).abs() < 1e-6 || (a < -100.0 && b < -100.0));
    }

    #[test]
    fn loss_is_bounded(rows in prop::collection::vec(prop::collection::vec(-PI..PI, 4), 1..20), seed in any::<u64>()) {
        let loss = avg_beamforming_loss(&run_of(rows), &ArraySpec::ula(4, 0.0).unwrap(), 3, seed).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(loss.is_finite());
    }
}
