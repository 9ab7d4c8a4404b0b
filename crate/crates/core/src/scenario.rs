//! Experiment description and its TOML file format.
//!
//! Keys carry their unit in the name (`t_obs_s`, `f_c_hz`, ...). A minimal
//! file:
//!
//! ```toml
//! name = "example"
//! f_c_hz = 3.75e9
//! f_s_hz = 20e6
//! trials = 25
//! master_seed = 1
//!
//! [timing]
//! m_chains = 8
//! n_preamble = 100
//! l_obs = 1000
//! t_obs_s = 1e-3
//!
//! [oscillator]
//! model = "pll_exact"
//! c_vco_s = 1e-20
//! c_ref_s = 1e-26
//! f_pll_hz = 1e6
//!
//! [policy]
//! mode = "smoothed"
//! ```
//!
//! `t_dm_s` defaults to t_obs − t_syn. Without a `[[chains]]` list every
//! chain uses the `[oscillator]` section and no other impairment; with one,
//! it must have exactly `m_chains` entries, each of which may override the
//! oscillator fields.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::{CalibrationMode, CalibrationPolicy, ResidualMode};
use crate::oscillator::{NoiseModel, OscillatorParams};
use crate::sigchain::{gen_preamble, ChainConfig, FrameTiming, PreambleKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreambleSpec {
    pub kind: PreambleKind,
    pub root: u64,
}

impl Default for PreambleSpec {
    fn default() -> Self {
        Self { kind: PreambleKind::ZadoffChu, root: 1 }
    }
}

/// Grid explored by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub t_obs: Vec<f64>,
    pub models: Vec<NoiseModel>,
    pub policies: Vec<CalibrationMode>,
}

impl SweepSpec {
    pub fn default_models() -> Vec<NoiseModel> {
        vec![NoiseModel::Vco, NoiseModel::PllExact]
    }

    pub fn default_policies() -> Vec<CalibrationMode> {
        vec![
            CalibrationMode::None,
            CalibrationMode::InitialOnly,
            CalibrationMode::Instantaneous,
            CalibrationMode::Smoothed,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Carrier frequency [Hz].
    pub f_c: f64,
    /// Sample rate [Hz]; t_s = 1/f_s.
    pub f_s: f64,
    pub timing: FrameTiming,
    /// Whether t_dm was given explicitly or fills the interval after the frame.
    pub t_dm_explicit: bool,
    pub chains: Vec<ChainConfig>,
    pub policy: CalibrationPolicy,
    pub preamble: PreambleSpec,
    pub snr_db: Option<f64>,
    pub residual: ResidualMode,
    pub trials: usize,
    pub master_seed: u64,
    /// Steering angles drawn per interval for the beamforming-loss average.
    pub steering_draws: usize,
    /// Ratio that quantifies "≫" in the white-approximation checks.
    pub validity_ratio: f64,
    pub sweep: Option<SweepSpec>,
    /// Informational analog bandwidth [Hz].
    pub bandwidth: Option<f64>,
}

impl Scenario {
    pub fn t_s(&self) -> f64 {
        1.0 / self.f_s
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Error::Config(format!("scenario '{}': {msg}", self.name));
        if !(self.f_c > 0.0 && self.f_c.is_finite()) || !(self.f_s > 0.0 && self.f_s.is_finite()) {
            return Err(cfg("f_c_hz and f_s_hz must be positive".into()));
        }
        self.timing.validate().map_err(|e| cfg(e.to_string()))?;
        if self.chains.len() != self.timing.m_chains {
            return Err(cfg(format!("{} chain entries for m_chains = {}", self.chains.len(), self.timing.m_chains)));
        }
        for (m, c) in self.chains.iter().enumerate() {
            c.validate().map_err(|e| cfg(format!("chain {m}: {e}")))?;
        }
        self.policy.validate().map_err(|e| cfg(e.to_string()))?;
        gen_preamble(self.timing.n_preamble, self.preamble.kind, self.preamble.root, self.timing.t_s)
            .map_err(|e| cfg(e.to_string()))?;
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(cfg("snr_db must be finite".into()));
            }
        }
        if self.trials == 0 {
            return Err(cfg("trials must be >= 1".into()));
        }
        if self.steering_draws == 0 {
            return Err(cfg("steering_draws must be >= 1".into()));
        }
        if !(self.validity_ratio > 0.0) {
            return Err(cfg("white_validity_ratio must be > 0".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.t_obs.is_empty() || sweep.t_obs.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(cfg("sweep t_obs_s values must be positive".into()));
            }
            if sweep.t_obs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(cfg("sweep t_obs_s values must be strictly increasing".into()));
            }
            if sweep.models.is_empty() || sweep.policies.is_empty() {
                return Err(cfg("sweep models and policies must not be empty".into()));
            }
            if sweep.models.contains(&NoiseModel::Vco) && self.chains.iter().any(|c| c.osc.c_vco <= 0.0) {
                return Err(cfg("sweep includes the vco model but a chain has c_vco_s = 0".into()));
            }
        }
        Ok(())
    }

    /// Short content hash of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let scenario = file.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ScenarioFile::from_scenario(self)).expect("scenario serializes to TOML")
    }

    /// Oscillator parameters of the first chain, used for bounds reporting.
    pub fn reference_params(&self) -> OscillatorParams {
        self.chains[0].osc
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    Scenario::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    f_c_hz: f64,
    f_s_hz: f64,
    trials: usize,
    master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snr_db: Option<f64>,
    #[serde(default)]
    residual: ResidualMode,
    #[serde(default = "default_steering_draws")]
    steering_draws: usize,
    #[serde(default = "default_validity_ratio")]
    white_validity_ratio: f64,
    timing: TimingFile,
    oscillator: OscillatorFile,
    policy: PolicyFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preamble: Option<PreambleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    chains: Vec<ChainFile>,
}

fn default_steering_draws() -> usize {
    1
}

fn default_validity_ratio() -> f64 {
    100.0
}

fn default_window() -> usize {
    CalibrationPolicy::DEFAULT_WINDOW
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingFile {
    m_chains: usize,
    n_preamble: usize,
    l_obs: usize,
    t_obs_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_dm_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillatorFile {
    model: NoiseModel,
    c_vco_s: f64,
    c_ref_s: f64,
    f_pll_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    mode: CalibrationMode,
    #[serde(default = "default_window")]
    window: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreambleFile {
    kind: PreambleKind,
    #[serde(default = "default_root")]
    root: u64,
}

fn default_root() -> u64 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    t_obs_s: Vec<f64>,
    #[serde(default = "SweepSpec::default_models")]
    models: Vec<NoiseModel>,
    #[serde(default = "SweepSpec::default_policies")]
    policies: Vec<CalibrationMode>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    #[serde(default)]
    delta_f_hz: f64,
    #[serde(default)]
    theta_rf_rad: f64,
    #[serde(default)]
    drift_rad_per_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_vco_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_ref_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f_pll_hz: Option<f64>,
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let cfg = |msg: String| Error::Config(format!("scenario '{}': {msg}", self.name));
        if !(self.f_s_hz > 0.0) {
            return Err(cfg("f_s_hz must be > 0".into()));
        }
        let t_s = 1.0 / self.f_s_hz;
        let m = self.timing.m_chains;
        let t_syn = (m * self.timing.n_preamble) as f64 * t_s;
        let t_dm = self.timing.t_dm_s.unwrap_or(self.timing.t_obs_s - t_syn).max(0.0);
        let timing = FrameTiming {
            n_preamble: self.timing.n_preamble,
            m_chains: m,
            t_obs: self.timing.t_obs_s,
            t_dm,
            l_obs: self.timing.l_obs,
            t_s,
        };

        let base = &self.oscillator;
        let chain_files: Vec<ChainFile> = if self.chains.is_empty() {
            (0..m).map(|_| ChainFile::default()).collect()
        } else if self.chains.len() != m {
            return Err(cfg(format!("{} [[chains]] entries for m_chains = {m}", self.chains.len())));
        } else {
            self.chains
        };
        let chains = chain_files
            .iter()
            .map(|c| ChainConfig {
                delta_f: c.delta_f_hz,
                theta_rf: c.theta_rf_rad,
                drift: c.drift_rad_per_s,
                model: c.model.unwrap_or(base.model),
                osc: OscillatorParams {
                    c_vco: c.c_vco_s.unwrap_or(base.c_vco_s),
                    c_ref: c.c_ref_s.unwrap_or(base.c_ref_s),
                    f_pll: c.f_pll_hz.unwrap_or(base.f_pll_hz),
                    f_c: self.f_c_hz,
                    t_s,
                },
            })
            .collect();

        Ok(Scenario {
            name: self.name,
            f_c: self.f_c_hz,
            f_s: self.f_s_hz,
            timing,
            t_dm_explicit: self.timing.t_dm_s.is_some(),
            chains,
            policy: CalibrationPolicy { mode: self.policy.mode, window: self.policy.window },
            preamble: self.preamble.map_or_else(PreambleSpec::default, |p| PreambleSpec { kind: p.kind, root: p.root }),
            snr_db: self.snr_db,
            residual: self.residual,
            trials: self.trials,
            master_seed: self.master_seed,
            steering_draws: self.steering_draws,
            validity_ratio: self.white_validity_ratio,
            sweep: self.sweep.map(|s| SweepSpec { t_obs: s.t_obs_s, models: s.models, policies: s.policies }),
            bandwidth: self.bandwidth_hz,
        })
    }

    fn from_scenario(s: &Scenario) -> Self {
        let first = s.chains[0];
        ScenarioFile {
            name: s.name.clone(),
            f_c_hz: s.f_c,
            f_s_hz: s.f_s,
            trials: s.trials,
            master_seed: s.master_seed,
            bandwidth_hz: s.bandwidth,
            snr_db: s.snr_db,
            residual: s.residual,
            steering_draws: s.steering_draws,
            white_validity_ratio: s.validity_ratio,
            timing: TimingFile {
                m_chains: s.timing.m_chains,
                n_preamble: s.timing.n_preamble,
                l_obs: s.timing.l_obs,
                t_obs_s: s.timing.t_obs,
                t_dm_s: s.t_dm_explicit.then_some(s.timing.t_dm),
            },
            oscillator: OscillatorFile {
                model: first.model,
                c_vco_s: first.osc.c_vco,
                c_ref_s: first.osc.c_ref,
                f_pll_hz: first.osc.f_pll,
            },
            policy: PolicyFile { mode: s.policy.mode, window: s.policy.window },
            preamble: Some(PreambleFile { kind: s.preamble.kind, root: s.preamble.root }),
            sweep: s.sweep.as_ref().map(|w| SweepFile {
                t_obs_s: w.t_obs.clone(),
                models: w.models.clone(),
                policies: w.policies.clone(),
            }),
            chains: s
                .chains
                .iter()
                .map(|c| ChainFile {
                    delta_f_hz: c.delta_f,
                    theta_rf_rad: c.theta_rf,
                    drift_rad_per_s: c.drift,
                    model: Some(c.model),
                    c_vco_s: Some(c.osc.c_vco),
                    c_ref_s: Some(c.osc.c_ref),
                    f_pll_hz: Some(c.osc.f_pll),
                })
                .collect(),
        }
    }
}
