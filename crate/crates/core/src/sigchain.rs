//! TDMA synchronization frame and per-chain phase estimation.
//!
//! Chain m (0-based) sends an N-sample unit-modulus preamble in slot m of
//! the frame, i.e. at sample offsets [m·N, (m+1)·N). The reference chain's
//! oscillator is ideal, so after down-conversion the only phase left on a
//! slot sample at absolute time t is
//! 2π·Δf_m·t + θ_OS,m(t) + θ_RF,m + drift_m·t.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::metrics::PhaseSeries;
use crate::oscillator::{NoiseModel, OscillatorParams};
use crate::rng::{self, purpose};
use crate::{wrap_phase, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub t_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreambleKind {
    ConstantOne,
    ZadoffChu,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Unit-modulus preamble of length `n`.
///
/// Zadoff-Chu uses x[k] = exp(−jπ·u·k(k+1)/n) for odd n and
/// exp(−jπ·u·k²/n) for even n; the root `u` must be coprime with `n`.
pub fn gen_preamble(n: usize, kind: PreambleKind, root: u64, t_s: f64) -> Result<BasebandSignal> {
    if n == 0 {
        return Err(Error::Parameter("preamble length must be >= 1".into()));
    }
    let samples = match kind {
        PreambleKind::ConstantOne => vec![Complex64::new(1.0, 0.0); n],
        PreambleKind::ZadoffChu => {
            let nn = n as u64;
            if root == 0 || gcd(root, nn) != 1 {
                return Err(Error::Parameter(format!("Zadoff-Chu root {root} is not coprime with length {n}")));
            }
            let odd = nn % 2;
            // exponent index reduced mod 2n keeps the argument small
            let modulus = 2 * nn as u128;
            (0..nn)
                .map(|k| {
                    let k = k as u128;
                    let q = (root as u128 * ((k * (k + odd as u128)) % modulus)) % modulus;
                    Complex64::from_polar(1.0, -PI * q as f64 / n as f64)
                })
                .collect()
        }
    };
    Ok(BasebandSignal { samples, t_s })
}

/// One transmit chain's impairments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Residual carrier frequency offset Δf_m [Hz].
    pub delta_f: f64,
    /// Constant front-end phase θ_RF,m [rad], in (−π, π].
    pub theta_rf: f64,
    pub osc: OscillatorParams,
    pub model: NoiseModel,
    /// Slow deterministic drift [rad/s].
    pub drift: f64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_rf > -PI && self.theta_rf <= PI) {
            return Err(Error::Parameter(format!("theta_rf {} outside (-pi, pi]", self.theta_rf)));
        }
        if !self.delta_f.is_finite() || !self.drift.is_finite() {
            return Err(Error::Parameter("delta_f and drift must be finite".into()));
        }
        self.osc.validate()?;
        if self.model == NoiseModel::Vco && self.osc.c_vco <= 0.0 {
            return Err(Error::Parameter("free-running VCO requires c_vco > 0".into()));
        }
        Ok(())
    }

    /// Deterministic part of the chain phase at absolute time `t`.
    pub fn deterministic_phase(&self, t: f64) -> f64 {
        TAU * self.delta_f * t + self.theta_rf + self.drift * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    /// Samples per chain preamble N.
    pub n_preamble: usize,
    /// Number of transmit chains M.
    pub m_chains: usize,
    /// Observation interval [s].
    pub t_obs: f64,
    /// Data-block duration [s].
    pub t_dm: f64,
    /// Number of observation intervals L.
    pub l_obs: usize,
    /// Sample period [s].
    pub t_s: f64,
}

impl FrameTiming {
    /// Synchronization frame duration M·N·t_s.
    pub fn t_syn(&self) -> f64 {
        (self.m_chains * self.n_preamble) as f64 * self.t_s
    }

    pub fn frame_len(&self) -> usize {
        self.m_chains * self.n_preamble
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_preamble == 0 || self.m_chains == 0 || self.l_obs == 0 {
            return Err(Error::Parameter("N, M and L must all be >= 1".into()));
        }
        if !(self.t_s > 0.0) || !(self.t_obs > 0.0) || !(self.t_dm >= 0.0) {
            return Err(Error::Parameter("t_s and t_obs must be > 0 and t_dm >= 0".into()));
        }
        let used = self.t_syn() + self.t_dm;
        if used > self.t_obs * (1.0 + 1e-9) || self.t_syn() >= self.t_obs {
            return Err(Error::Parameter(format!("t_syn + t_dm = {used:e} s exceeds t_obs = {:e} s", self.t_obs)));
        }
        Ok(())
    }

    /// Start of observation interval `l`.
    pub fn interval_start(&self, l: usize) -> f64 {
        l as f64 * self.t_obs
    }

    /// Absolute time of preamble sample `n` of chain `m` in interval `l`.
    pub fn slot_time(&self, l: usize, m: usize, n: usize) -> f64 {
        self.interval_start(l) + (m * self.n_preamble + n) as f64 * self.t_s
    }

    /// Data-block midpoint τ_l = l·t_obs + t_syn + t_dm/2.
    pub fn data_midpoint(&self, l: usize) -> f64 {
        self.interval_start(l) + self.t_syn() + 0.5 * self.t_dm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub samples: Vec<Complex64>,
    pub snr_db: Option<f64>,
}

/// Build the baseband frame seen by the reference chain in interval `l`.
///
/// `phase_traces[m]` holds θ_OS,m at t_s spacing either over chain m's own
/// slot (N values) or over the whole frame (M·N values, slot part used).
pub fn synthesize_received_frame(
    timing: &FrameTiming,
    chains: &[ChainConfig],
    preamble: &BasebandSignal,
    phase_traces: &[PhaseSeries],
    l: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<ReceivedFrame> {
    let (m_chains, n) = (timing.m_chains, timing.n_preamble);
    if chains.len() != m_chains || phase_traces.len() != m_chains {
        return Err(Error::Input(format!(
            "expected {m_chains} chains and phase traces, got {} and {}",
            chains.len(),
            phase_traces.len()
        )));
    }
    if preamble.samples.len() != n {
        return Err(Error::Input(format!("preamble has {} samples, timing expects {n}", preamble.samples.len())));
    }
    let mut samples = Vec::with_capacity(timing.frame_len());
    for (m, (chain, trace)) in chains.iter().zip(phase_traces).enumerate() {
        let offset = match trace.values.len() {
            len if len == n => 0,
            len if len == n * m_chains => m * n,
            len => {
                return Err(Error::Input(format!(
                    "phase trace for chain {m} has {len} samples, expected {n} or {}",
                    n * m_chains
                )))
            }
        };
        let slot = &trace.values[offset..offset + n];
        for (k, (x, theta_os)) in preamble.samples.iter().zip(slot).enumerate() {
            let t = timing.slot_time(l, m, k);
            let phase = chain.deterministic_phase(t) + theta_os;
            samples.push(x * Complex64::from_polar(1.0, phase));
        }
    }
    if let Some(snr) = snr_db {
        let sd = (0.5 * 10f64.powf(-snr / 10.0)).sqrt();
        let mut noise = rng::stream(seed, &[purpose::RECEIVER_NOISE, l as u64]);
        for s in samples.iter_mut() {
            let re: f64 = noise.sample(StandardNormal);
            let im: f64 = noise.sample(StandardNormal);
            *s += Complex64::new(sd * re, sd * im);
        }
    }
    Ok(ReceivedFrame { samples, snr_db })
}

/// ĥ[n] = y[m·N + n]·conj(x[n]) for chain `m` (0-based).
pub fn estimate_system_function(
    frame: &ReceivedFrame,
    preamble: &BasebandSignal,
    m: usize,
    timing: &FrameTiming,
) -> Result<Vec<Complex64>> {
    let n = timing.n_preamble;
    if m >= timing.m_chains {
        return Err(Error::Input(format!("chain index {m} out of range for {} chains", timing.m_chains)));
    }
    if frame.samples.len() != timing.frame_len() {
        return Err(Error::Input(format!(
            "frame has {} samples, expected {}",
            frame.samples.len(),
            timing.frame_len()
        )));
    }
    if preamble.samples.len() != n {
        return Err(Error::Input("preamble length does not match timing".into()));
    }
    Ok(frame.samples[m * n..(m + 1) * n].iter().zip(&preamble.samples).map(|(y, x)| y * x.conj()).collect())
}

/// Mean of the unwrapped per-sample phases of `h`, wrapped to (−π, π].
pub fn estimate_phase(h: &[Complex64]) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::Input("cannot estimate the phase of an empty sequence".into()));
    }
    let mut prev: Option<f64> = None;
    let mut sum = 0.0;
    for (i, z) in h.iter().enumerate() {
        if z.norm_sqr() == 0.0 || !z.norm_sqr().is_finite() {
            return Err(Error::Estimation(format!("sample {i} has undefined phase")));
        }
        let arg = z.arg();
        let unwrapped = match prev {
            None => arg,
            Some(p) => p + wrap_phase(arg - p),
        };
        sum += unwrapped;
        prev = Some(unwrapped);
    }
    Ok(wrap_phase(sum / h.len() as f64))
}

pub fn estimate_all_phases(frame: &ReceivedFrame, preamble: &BasebandSignal, timing: &FrameTiming) -> Result<Vec<f64>> {
    if frame.samples.is_empty() {
        return Err(Error::Input("empty frame".into()));
    }
    (0..timing.m_chains).map(|m| estimate_phase(&estimate_system_function(frame, preamble, m, timing)?)).collect()
}
