//! Statistical and reference-implementation checks of the public API.

mod metrics;
mod runner;
mod sigchain;

use crate::calib::{CalibrationMode, CalibrationPolicy, ResidualMode};
use crate::oscillator::{NoiseModel, OscillatorParams};
use crate::scenario::{PreambleSpec, Scenario};
use crate::sigchain::{ChainConfig, FrameTiming, PreambleKind};

pub(crate) fn table3() -> OscillatorParams {
    OscillatorParams::new(1e-20, 1e-26, 1e6, 3.75e9, 5e-8).unwrap()
}

pub(crate) fn quiet(t_s: f64) -> OscillatorParams {
    OscillatorParams::new(0.0, 0.0, 1e6, 3.75e9, t_s).unwrap()
}

/// Scenario with identical chains and the data block filling the interval.
pub(crate) fn scenario(
    osc: OscillatorParams,
    model: NoiseModel,
    mode: CalibrationMode,
    m: usize,
    n: usize,
    l: usize,
    t_obs: f64,
) -> Scenario {
    let t_s = osc.t_s;
    let t_syn = (m * n) as f64 * t_s;
    Scenario {
        name: "oracle".into(),
        f_c: osc.f_c,
        f_s: 1.0 / t_s,
        timing: FrameTiming { n_preamble: n, m_chains: m, t_obs, t_dm: t_obs - t_syn, l_obs: l, t_s },
        t_dm_explicit: false,
        chains: (0..m).map(|_| ChainConfig { delta_f: 0.0, theta_rf: 0.0, osc, model, drift: 0.0 }).collect(),
        policy: CalibrationPolicy::new(mode),
        preamble: PreambleSpec { kind: PreambleKind::ZadoffChu, root: 1 },
        snr_db: None,
        residual: ResidualMode::Midpoint,
        trials: 1,
        master_seed: 1,
        steering_draws: 1,
        validity_ratio: 100.0,
        sweep: None,
        bandwidth: None,
    }
}

pub(crate) fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub(crate) fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}
