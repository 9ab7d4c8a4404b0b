//! Closed-loop calibration over L observation intervals.
//!
//! Each interval starts with the TDMA synchronization frame. The phase
//! estimates taken from it feed a precoding correction that is applied to
//! the data block following the frame; the residual phase error of every
//! chain is recorded at the data-block midpoint (or averaged over the
//! block).

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::metrics::PhaseSeries;
use crate::oscillator::JitterSampler;
use crate::rng::{self, purpose};
use crate::scenario::Scenario;
use crate::sigchain::{estimate_all_phases, gen_preamble, synthesize_received_frame, BasebandSignal};
use crate::{wrap_phase, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// No precoding.
    None,
    /// Correct with the first interval's estimate only.
    InitialOnly,
    /// Correct with the current interval's estimate.
    Instantaneous,
    /// Correct with the circular mean of the last `window` estimates.
    Smoothed,
}

impl CalibrationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CalibrationMode::None => "none",
            CalibrationMode::InitialOnly => "initial_only",
            CalibrationMode::Instantaneous => "instantaneous",
            CalibrationMode::Smoothed => "smoothed",
        }
    }
}

impl std::fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalibrationPolicy {
    pub mode: CalibrationMode,
    /// Averaging depth K for the smoothed mode.
    pub window: usize,
}

impl CalibrationPolicy {
    pub const DEFAULT_WINDOW: usize = 10;

    pub fn new(mode: CalibrationMode) -> Self {
        Self { mode, window: Self::DEFAULT_WINDOW }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Parameter("smoothing window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Where the residual phase of a data block is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// At τ_l = l·t_obs + t_syn + t_dm/2.
    #[default]
    Midpoint,
    /// Circular mean over [`BLOCK_POINTS`] evenly spaced instants of the block.
    BlockMean,
}

pub const BLOCK_POINTS: usize = 32;

/// Estimates, corrections and residuals, each indexed `[interval][chain]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub estimates: Vec<Vec<f64>>,
    pub corrections: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub scenario_hash: String,
    pub trial: u64,
}

impl CalibrationRun {
    pub fn n_chains(&self) -> usize {
        self.residuals.first().map_or(0, Vec::len)
    }

    /// Residual phase of chain `m` over all intervals.
    pub fn residual_series(&self, m: usize, t_obs: f64, f_c: f64) -> Result<PhaseSeries> {
        PhaseSeries::new(self.residuals.iter().map(|r| r[m]).collect(), t_obs, f_c)
    }

    pub fn estimate_series(&self, m: usize, t_obs: f64, f_c: f64) -> Result<PhaseSeries> {
        PhaseSeries::new(self.estimates.iter().map(|r| r[m]).collect(), t_obs, f_c)
    }
}

/// Circular mean of the last min(k, len) entries of `history`.
pub fn smoothed_correction(history: &[f64], k: usize) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Input("smoothed correction needs at least one estimate".into()));
    }
    if k == 0 {
        return Err(Error::Input("smoothing window must be >= 1".into()));
    }
    let start = history.len().saturating_sub(k);
    let sum: Complex64 = history[start..].iter().map(|&p| Complex64::from_polar(1.0, p)).sum();
    if sum.norm_sqr() == 0.0 {
        return Err(Error::Estimation("phasors cancel, circular mean undefined".into()));
    }
    Ok(wrap_phase(sum.arg()))
}

/// Multiply every sample by e^{−j·correction}.
pub fn apply_precoding(data: &BasebandSignal, correction: f64) -> BasebandSignal {
    let rot = Complex64::from_polar(1.0, -correction);
    BasebandSignal { samples: data.samples.iter().map(|z| z * rot).collect(), t_s: data.t_s }
}

pub fn run_calibration(scenario: &Scenario) -> Result<CalibrationRun> {
    run_calibration_trial(scenario, 0)
}

/// Run the calibration loop for one Monte-Carlo trial.
///
/// All randomness derives from (master seed, trial), so a trial is
/// reproducible on its own.
pub fn run_calibration_trial(scenario: &Scenario, trial: u64) -> Result<CalibrationRun> {
    let mut runs = run_calibration_modes(scenario, trial, &[scenario.policy.mode])?;
    Ok(runs.remove(0))
}

/// Same as [`run_calibration_trial`] but scores several correction modes on
/// one realization. The modes share the oscillator paths, frames and
/// estimates; only corrections and residuals differ.
pub fn run_calibration_modes(
    scenario: &Scenario,
    trial: u64,
    modes: &[CalibrationMode],
) -> Result<Vec<CalibrationRun>> {
    scenario.validate()?;
    let timing = scenario.timing;
    let (m_chains, n) = (timing.m_chains, timing.n_preamble);
    let preamble = gen_preamble(n, scenario.preamble.kind, scenario.preamble.root, timing.t_s)?;
    let trial_seed = rng::derive(scenario.master_seed, &[trial]);
    let window = scenario.policy.window;

    let mut samplers = scenario
        .chains
        .iter()
        .enumerate()
        .map(|(m, c)| JitterSampler::new(&c.osc, c.model, rng::derive(trial_seed, &[purpose::OSCILLATOR, m as u64])))
        .collect::<Result<Vec<_>>>()?;

    let l_obs = timing.l_obs;
    let mut estimates: Vec<Vec<f64>> = Vec::with_capacity(l_obs);
    let mut corrections = vec![Vec::with_capacity(l_obs); modes.len()];
    let mut residuals = vec![Vec::with_capacity(l_obs); modes.len()];
    let mut history: Vec<Vec<f64>> = vec![Vec::with_capacity(l_obs); m_chains];
    let n_points = match scenario.residual {
        ResidualMode::Midpoint => 1,
        ResidualMode::BlockMean => BLOCK_POINTS,
    };
    let mut block_phase = vec![0.0; n_points];

    for l in 0..l_obs {
        let mut traces = Vec::with_capacity(m_chains);
        for (m, (chain, sampler)) in scenario.chains.iter().zip(samplers.iter_mut()).enumerate() {
            let scale = TAU * chain.osc.f_c;
            let values = (0..n)
                .map(|k| sampler.sample_at(timing.slot_time(l, m, k)).map(|a| scale * a))
                .collect::<Result<Vec<_>>>()?;
            traces.push(PhaseSeries { values, interval: timing.t_s, f_c: chain.osc.f_c });
        }
        let frame =
            synthesize_received_frame(&timing, &scenario.chains, &preamble, &traces, l, scenario.snr_db, trial_seed)?;
        let est = estimate_all_phases(&frame, &preamble, &timing)?;
        for (h, e) in history.iter_mut().zip(&est) {
            h.push(*e);
        }

        let mut corr = vec![vec![0.0; m_chains]; modes.len()];
        let mut res = vec![vec![0.0; m_chains]; modes.len()];
        for (m, (chain, sampler)) in scenario.chains.iter().zip(samplers.iter_mut()).enumerate() {
            let scale = TAU * chain.osc.f_c;
            match scenario.residual {
                ResidualMode::Midpoint => {
                    let t = timing.data_midpoint(l);
                    block_phase[0] = chain.deterministic_phase(t) + scale * sampler.sample_at(t)?;
                }
                ResidualMode::BlockMean => {
                    let start = timing.interval_start(l) + timing.t_syn();
                    for (i, p) in block_phase.iter_mut().enumerate() {
                        let t = start + timing.t_dm * (i as f64 + 0.5) / BLOCK_POINTS as f64;
                        *p = chain.deterministic_phase(t) + scale * sampler.sample_at(t)?;
                    }
                }
            }
            for (j, mode) in modes.iter().enumerate() {
                let c = match mode {
                    CalibrationMode::None => 0.0,
                    CalibrationMode::InitialOnly => history[m][0],
                    CalibrationMode::Instantaneous => est[m],
                    CalibrationMode::Smoothed => smoothed_correction(&history[m], window)?,
                };
                corr[j][m] = c;
                res[j][m] = if n_points == 1 {
                    wrap_phase(block_phase[0] - c)
                } else {
                    let sum: Complex64 = block_phase.iter().map(|p| Complex64::from_polar(1.0, p - c)).sum();
                    sum.arg()
                };
            }
        }

        estimates.push(est);
        for (j, (c, r)) in corr.into_iter().zip(res).enumerate() {
            corrections[j].push(c);
            residuals[j].push(r);
        }
    }

    let hash = scenario.hash();
    Ok(corrections
        .into_iter()
        .zip(residuals)
        .map(|(corrections, residuals)| CalibrationRun {
            estimates: estimates.clone(),
            corrections,
            residuals,
            scenario_hash: hash.clone(),
            trial,
        })
        .collect())
}
