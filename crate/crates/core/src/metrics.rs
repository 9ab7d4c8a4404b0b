//! Jitter, beamforming and distribution statistics.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::calib::CalibrationRun;
use crate::oscillator::OscillatorParams;
use crate::rng;
use crate::{wrap_phase, Error, Result};

/// Phase samples [rad] taken every `interval` seconds on a carrier `f_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub values: Vec<f64>,
    pub interval: f64,
    pub f_c: f64,
}

impl PhaseSeries {
    pub fn new(values: Vec<f64>, interval: f64, f_c: f64) -> Result<Self> {
        if !(interval > 0.0) {
            return Err(Error::Input(format!("phase series interval must be > 0, got {interval}")));
        }
        if !(f_c > 0.0) {
            return Err(Error::Input(format!("carrier frequency must be > 0, got {f_c}")));
        }
        Ok(Self { values, interval, f_c })
    }

    /// Phase expressed as jitter, θ / (2π·f_c).
    pub fn to_jitter(&self) -> Vec<f64> {
        let scale = 1.0 / (TAU * self.f_c);
        self.values.iter().map(|t| t * scale).collect()
    }
}

/// RMS cycle-to-cycle jitter in seconds.
///
/// Consecutive differences are wrapped to (−π, π] before squaring; a series
/// of L values contributes L − 1 differences.
pub fn rms_cycle_jitter(series: &PhaseSeries) -> Result<f64> {
    let n = series.values.len();
    if n < 2 {
        return Err(Error::Input(format!("RMS cycle-to-cycle jitter needs >= 2 samples, got {n}")));
    }
    let sum_sq: f64 = series
        .values
        .windows(2)
        .map(|w| {
            let d = wrap_phase(w[1] - w[0]);
            d * d
        })
        .sum();
    Ok((sum_sq / (n - 1) as f64).sqrt() / (TAU * series.f_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    /// √(c_vco·t_obs) [s].
    pub vco_bound: f64,
    /// √(c_ref·t_obs) [s].
    pub ref_bound: f64,
    /// (c_vco − 3c_ref) / (4π·f_pll) [s²].
    pub pll_floor_var: f64,
}

impl Bounds {
    pub fn pll_floor_rms(&self) -> f64 {
        self.pll_floor_var.max(0.0).sqrt()
    }
}

pub fn theoretical_bounds(params: &OscillatorParams, t_obs: f64) -> Bounds {
    Bounds {
        vco_bound: (params.c_vco * t_obs).sqrt(),
        ref_bound: (params.c_ref * t_obs).sqrt(),
        pll_floor_var: (params.c_vco - 3.0 * params.c_ref) / (4.0 * PI * params.f_pll),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayGeometry {
    /// Uniform linear array with half-wavelength spacing.
    UlaHalfLambda,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArraySpec {
    pub m_elements: usize,
    pub geometry: ArrayGeometry,
    /// Steering angle [deg].
    pub steering_deg: f64,
}

impl ArraySpec {
    pub fn ula(m_elements: usize, steering_deg: f64) -> Result<Self> {
        let spec = Self { m_elements, geometry: ArrayGeometry::UlaHalfLambda, steering_deg };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_elements == 0 {
            return Err(Error::Input("array needs at least one element".into()));
        }
        if !(self.steering_deg.abs() <= 90.0) {
            return Err(Error::Input(format!("steering angle {} deg outside [-90, 90]", self.steering_deg)));
        }
        Ok(())
    }

    /// Ideal coherent gain 20·log10(M) [dB].
    pub fn ideal_gain_db(&self) -> f64 {
        20.0 * (self.m_elements as f64).log10()
    }
}

/// |Σ_m exp(j(π·m·(sin look − sin steer) + ε_m))|², linear.
fn array_power(residual_phases: &[f64], spec: &ArraySpec, look_deg: f64) -> f64 {
    let ArrayGeometry::UlaHalfLambda = spec.geometry;
    let delta = PI * (look_deg.to_radians().sin() - spec.steering_deg.to_radians().sin());
    residual_phases
        .iter()
        .enumerate()
        .map(|(m, eps)| Complex64::from_polar(1.0, delta * m as f64 + eps))
        .sum::<Complex64>()
        .norm_sqr()
}

/// Array gain toward `look_deg` in dB, single element at 0 dB.
pub fn array_gain(residual_phases: &[f64], spec: &ArraySpec, look_deg: f64) -> Result<f64> {
    spec.validate()?;
    if residual_phases.len() != spec.m_elements {
        return Err(Error::Input(format!(
            "{} residual phases for a {}-element array",
            residual_phases.len(),
            spec.m_elements
        )));
    }
    Ok(10.0 * array_power(residual_phases, spec, look_deg).log10())
}

/// Average beamforming loss in the steering direction [dB].
///
/// For every interval of `run` and `n_angles` steering angles drawn from
/// U(−60°, 60°), the gain toward the steering angle is evaluated with that
/// interval's residual phases. Gains are averaged as linear power and the
/// loss is the ideal gain minus the averaged gain, so perfect coherence
/// gives 0 dB and independent uniform phases give 10·log10(M).
pub fn avg_beamforming_loss(run: &CalibrationRun, template: &ArraySpec, n_angles: usize, seed: u64) -> Result<f64> {
    if run.residuals.is_empty() {
        return Err(Error::Input("calibration run has no intervals".into()));
    }
    if n_angles == 0 {
        return Err(Error::Input("need at least one steering angle".into()));
    }
    let m = run.residuals[0].len();
    let mut rng = rng::stream(seed, &[rng::purpose::STEERING]);
    let mut total = 0.0;
    let mut count = 0usize;
    for residuals in &run.residuals {
        for _ in 0..n_angles {
            let phi = rng.random_range(-60.0..60.0);
            let spec = ArraySpec { m_elements: m, steering_deg: phi, ..*template };
            spec.validate()?;
            if residuals.len() != m {
                return Err(Error::Input("ragged residual matrix".into()));
            }
            total += array_power(residuals, &spec, phi);
            count += 1;
        }
    }
    let ideal = 20.0 * (m as f64).log10();
    let loss = ideal - 10.0 * (total / count as f64).log10();
    // Rounding can leave −1e-15 for perfectly coherent residuals.
    Ok(loss.max(0.0))
}

/// Silverman's rule of thumb, 1.06·σ̂·n^(−1/5).
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let (_, sd) = mean_sd(samples)?;
    Ok(1.06 * sd * (samples.len() as f64).powf(-0.2))
}

fn mean_sd(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Estimation(format!("need >= 2 samples, got {n}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Estimation("samples have zero variance".into()));
    }
    Ok((mean, sd))
}

/// Gaussian kernel density on `grid` uniform points spanning
/// [min − 4h, max + 4h]; `bandwidth` defaults to Silverman's rule.
pub fn kde_density(samples: &[f64], bandwidth: Option<f64>, grid: usize) -> Result<Vec<(f64, f64)>> {
    if grid < 2 {
        return Err(Error::Input("KDE grid needs at least two points".into()));
    }
    let silverman = silverman_bandwidth(samples)?;
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::Input(format!("bandwidth must be > 0, got {h}"))),
        None => silverman,
    };
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let start = lo - 4.0 * h;
    let step = (hi + 4.0 * h - start) / (grid - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (TAU).sqrt());
    Ok((0..grid)
        .map(|i| {
            let x = start + step * i as f64;
            let d: f64 = samples
                .iter()
                .map(|s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            (x, d * norm)
        })
        .collect())
}

/// Standard normal quantile function.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Q-Q pairs (normal quantile, standardized sample quantile) at plotting
/// positions (i − 0.5)/n.
pub fn qq_pairs(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Input(format!("Q-Q analysis needs >= 3 samples, got {n}")));
    }
    let (mean, sd) = mean_sd(samples)?;
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    Ok(z.into_iter().enumerate().map(|(i, s)| (inverse_normal_cdf((i as f64 + 0.5) / n as f64), s)).collect())
}

/// Largest |sample_q − normal_q| among pairs whose plotting position lies
/// within the central `mass` of the distribution.
pub fn qq_max_deviation(pairs: &[(f64, f64)], mass: f64) -> f64 {
    let n = pairs.len() as f64;
    let tail = (1.0 - mass) / 2.0;
    pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let p = (*i as f64 + 0.5) / n;
            p >= tail && p <= 1.0 - tail
        })
        .map(|(_, (q, s))| (s - q).abs())
        .fold(0.0, f64::max)
}
