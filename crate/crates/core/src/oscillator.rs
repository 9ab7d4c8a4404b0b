//! Oscillator jitter processes.
//!
//! Jitter α is a timing error in seconds; the carrier phase error it causes
//! is 2π·f_c·α. Three models are provided:
//!
//! - a free-running VCO whose jitter is a Wiener process with diffusion
//!   constant `c_vco`, so that Var α(t) = c_vco·t;
//! - a PLL locking such a VCO to a reference (itself a Wiener process with
//!   constant `c_ref`) through the discrete loop
//!   α[n] = −2π·f_pll·t_s · Σ_{i<n} (α[i] − α_ref[i]) + α_vco[n−1], α[0] = 0;
//! - the white approximation of a locked PLL, α[n] = α₀ + w[n] with
//!   α₀ ~ U(0, 1/f_c) and w[n] ~ N(0, c_vco·t_s).
//!
//! Dense traces sample the process every `t_s`. [`JitterSampler`] evaluates
//! the same processes at arbitrary increasing instants without materialising
//! the samples in between.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::metrics::PhaseSeries;
use crate::rng::{self, purpose};
use crate::{Error, Result};

/// Physical constants of one oscillator chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// VCO oscillator constant [s].
    pub c_vco: f64,
    /// Reference oscillator constant [s].
    pub c_ref: f64,
    /// PLL loop bandwidth [Hz].
    pub f_pll: f64,
    /// Carrier frequency [Hz].
    pub f_c: f64,
    /// Sample period [s].
    pub t_s: f64,
}

impl OscillatorParams {
    pub fn new(c_vco: f64, c_ref: f64, f_pll: f64, f_c: f64, t_s: f64) -> Result<Self> {
        let p = Self { c_vco, c_ref, f_pll, f_c, t_s };
        p.validate()?;
        Ok(p)
    }

    /// Oscillator constants must be non-negative (zero disables a noise
    /// source); rates and periods must be positive and the discrete loop
    /// stable.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.c_vco, self.c_ref, self.f_pll, self.f_c, self.t_s].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parameter("oscillator parameters must be finite".into()));
        }
        if self.c_vco < 0.0 {
            return Err(Error::Parameter(format!("c_vco must be >= 0, got {}", self.c_vco)));
        }
        if self.c_ref < 0.0 {
            return Err(Error::Parameter(format!("c_ref must be >= 0, got {}", self.c_ref)));
        }
        if self.f_pll <= 0.0 {
            return Err(Error::Parameter(format!("f_pll must be > 0, got {}", self.f_pll)));
        }
        if self.f_c <= 0.0 {
            return Err(Error::Parameter(format!("f_c must be > 0, got {}", self.f_c)));
        }
        if self.t_s <= 0.0 {
            return Err(Error::Parameter(format!("t_s must be > 0, got {}", self.t_s)));
        }
        let k = self.loop_gain();
        if !(k > 0.0 && k < 2.0) {
            return Err(Error::Parameter(format!("PLL recursion unstable: 2*pi*f_pll*t_s = {k} is outside (0, 2)")));
        }
        Ok(())
    }

    /// Per-sample loop gain 2π·f_pll·t_s.
    pub fn loop_gain(&self) -> f64 {
        TAU * self.f_pll * self.t_s
    }

    /// 3 dB bandwidth of the free-running VCO's 1/f² spectrum, π·f_c²·c_vco.
    pub fn f_3db(&self) -> f64 {
        PI * self.f_c * self.f_c * self.c_vco
    }
}

/// Which jitter process a chain's oscillator follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Vco,
    PllExact,
    PllWhite,
}

impl NoiseModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseModel::Vco => "vco",
            NoiseModel::PllExact => "pll_exact",
            NoiseModel::PllWhite => "pll_white",
        }
    }
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vco" => Ok(NoiseModel::Vco),
            "pll_exact" => Ok(NoiseModel::PllExact),
            "pll_white" => Ok(NoiseModel::PllWhite),
            other => Err(Error::Parameter(format!("unknown oscillator model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOrigin {
    Vco,
    PllExact,
    PllWhite,
    Ingested,
}

impl From<NoiseModel> for TraceOrigin {
    fn from(m: NoiseModel) -> Self {
        match m {
            NoiseModel::Vco => TraceOrigin::Vco,
            NoiseModel::PllExact => TraceOrigin::PllExact,
            NoiseModel::PllWhite => TraceOrigin::PllWhite,
        }
    }
}

/// Jitter samples α[n] in seconds, spaced `t_s` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterTrace {
    pub samples: Vec<f64>,
    pub t_s: f64,
    pub origin: TraceOrigin,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Sample-by-sample Wiener path starting at zero.
struct WienerPath {
    rng: ChaCha8Rng,
    step_sd: f64,
    value: f64,
}

impl WienerPath {
    fn new(seed: u64, c: f64, t_s: f64) -> Self {
        Self { rng: rng::stream(seed, &[]), step_sd: (c * t_s).sqrt(), value: 0.0 }
    }

    /// Current value, then advance by one sample.
    fn next(&mut self) -> f64 {
        let v = self.value;
        self.value += self.step_sd * normal(&mut self.rng);
        v
    }
}

/// Running-sum form of the discrete PLL loop.
///
/// State at index n: `sum` = Σ_{i<n}(α[i] − r[i]), `alpha` = α[n],
/// `r` = α_ref[n], `v` = α_vco[n], `v_prev` = α_vco[n−1] (0 at n = 0).
struct PllLoop {
    gain: f64,
    vco_sd: f64,
    ref_sd: f64,
    c_vco: f64,
    c_ref: f64,
    t_s: f64,
    vco_rng: ChaCha8Rng,
    ref_rng: ChaCha8Rng,
    jump_rng: ChaCha8Rng,
    index: u64,
    sum: f64,
    alpha: f64,
    r: f64,
    v: f64,
    v_prev: f64,
}

impl PllLoop {
    fn new(params: &OscillatorParams, seed: u64) -> Self {
        Self {
            gain: params.loop_gain(),
            vco_sd: (params.c_vco * params.t_s).sqrt(),
            ref_sd: (params.c_ref * params.t_s).sqrt(),
            c_vco: params.c_vco,
            c_ref: params.c_ref,
            t_s: params.t_s,
            vco_rng: rng::stream(seed, &[purpose::VCO_PATH]),
            ref_rng: rng::stream(seed, &[purpose::REF_PATH]),
            jump_rng: rng::stream(seed, &[purpose::VCO_PATH, purpose::REF_PATH]),
            index: 0,
            sum: 0.0,
            alpha: 0.0,
            r: 0.0,
            v: 0.0,
            v_prev: 0.0,
        }
    }

    fn step(&mut self) {
        self.sum += self.alpha - self.r;
        self.alpha = -self.gain * self.sum + self.v;
        self.r += self.ref_sd * normal(&mut self.ref_rng);
        self.v_prev = self.v;
        self.v += self.vco_sd * normal(&mut self.vco_rng);
        self.index += 1;
    }

    /// Advance `steps` samples in one draw from the exact joint distribution.
    ///
    /// With e = α − r and pending VCO increment u = v[n] − v[n−1], the loop
    /// obeys e[n+1] = a·e[n] + u − Δr, a = 1 − gain, so after K steps
    /// e' = a^K·e + a^(K−1)·u + X and r' = r + Y with (X, Y) zero-mean
    /// Gaussian of known covariance.
    fn jump(&mut self, steps: u64) {
        debug_assert!(steps >= 1);
        let a = 1.0 - self.gain;
        let k = steps as f64;
        let a_k = a.powf(k);
        let a_k1 = a.powf(k - 1.0);
        let one_minus_a2 = 1.0 - a * a;
        let geo2 = |m: f64| (1.0 - a.powf(2.0 * m)) / one_minus_a2;
        let var_x = self.c_ref * self.t_s * geo2(k) + self.c_vco * self.t_s * geo2(k - 1.0);
        let var_y = self.c_ref * self.t_s * k;
        let cov = -self.c_ref * self.t_s * (1.0 - a_k) / (1.0 - a);

        let z1 = normal(&mut self.jump_rng);
        let z2 = normal(&mut self.jump_rng);
        let (x, y) = correlated_pair(var_x, var_y, cov, z1, z2);

        let e = self.alpha - self.r;
        let u = self.v - self.v_prev;
        let e_new = a_k * e + a_k1 * u + x;
        self.r += y;
        self.alpha = e_new + self.r;
        self.v_prev = 0.0;
        self.v = self.vco_sd * normal(&mut self.vco_rng);
        self.sum = (self.v_prev - self.alpha) / self.gain;
        self.index += steps;
    }
}

/// Cholesky draw of a bivariate Gaussian from two standard normals.
fn correlated_pair(var_x: f64, var_y: f64, cov: f64, z1: f64, z2: f64) -> (f64, f64) {
    if var_y <= 0.0 {
        return (var_x.max(0.0).sqrt() * z1, 0.0);
    }
    let sy = var_y.sqrt();
    let y = sy * z2;
    let beta = cov / sy;
    let resid = (var_x - beta * beta).max(0.0);
    (beta * z2 + resid.sqrt() * z1, y)
}

/// Gaps longer than this many samples are crossed with [`PllLoop::jump`].
pub const MAX_DENSE_GAP: u64 = 256;

fn require_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    Ok(())
}

pub fn gen_vco_jitter(params: &OscillatorParams, n: usize, seed: u64) -> Result<JitterTrace> {
    params.validate()?;
    require_count(n)?;
    if params.c_vco <= 0.0 {
        return Err(Error::Parameter("free-running VCO requires c_vco > 0".into()));
    }
    let mut path = WienerPath::new(rng::derive(seed, &[purpose::VCO_PATH]), params.c_vco, params.t_s);
    let samples = (0..n).map(|_| path.next()).collect();
    Ok(JitterTrace { samples, t_s: params.t_s, origin: TraceOrigin::Vco })
}

pub fn gen_pll_jitter(params: &OscillatorParams, n: usize, seed: u64) -> Result<JitterTrace> {
    params.validate()?;
    require_count(n)?;
    let mut pll = PllLoop::new(params, seed);
    let mut samples = Vec::with_capacity(n);
    samples.push(pll.alpha);
    for _ in 1..n {
        pll.step();
        samples.push(pll.alpha);
    }
    Ok(JitterTrace { samples, t_s: params.t_s, origin: TraceOrigin::PllExact })
}

pub fn gen_pll_white_jitter(params: &OscillatorParams, n: usize, seed: u64) -> Result<JitterTrace> {
    params.validate()?;
    require_count(n)?;
    let mut white = WhitePll::new(params, seed);
    let samples = (0..n).map(|_| white.draw()).collect();
    Ok(JitterTrace { samples, t_s: params.t_s, origin: TraceOrigin::PllWhite })
}

pub fn gen_jitter(model: NoiseModel, params: &OscillatorParams, n: usize, seed: u64) -> Result<JitterTrace> {
    match model {
        NoiseModel::Vco => gen_vco_jitter(params, n, seed),
        NoiseModel::PllExact => gen_pll_jitter(params, n, seed),
        NoiseModel::PllWhite => gen_pll_white_jitter(params, n, seed),
    }
}

struct WhitePll {
    offset: f64,
    sd: f64,
    rng: ChaCha8Rng,
}

impl WhitePll {
    fn new(params: &OscillatorParams, seed: u64) -> Self {
        let mut offset_rng = rng::stream(seed, &[purpose::WHITE_OFFSET]);
        let offset = offset_rng.random::<f64>() / params.f_c;
        Self { offset, sd: (params.c_vco * params.t_s).sqrt(), rng: rng::stream(seed, &[purpose::WHITE_NOISE]) }
    }

    fn draw(&mut self) -> f64 {
        self.offset + self.sd * normal(&mut self.rng)
    }
}

/// Outcome of the four conditions under which a PLL may be treated as white.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityReport {
    /// c_vco ≫ c_ref.
    pub cond_osc_constants: bool,
    /// f_pll ≫ f_3dB.
    pub cond_bandwidth: bool,
    /// 1/t_s > f_pll.
    pub cond_sampling: bool,
    /// t_obs < (c_vco − 3c_ref) / (c_ref·2π·f_pll).
    pub cond_obs_time: bool,
    pub margins: ValidityMargins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityMargins {
    /// c_vco / c_ref (infinite for c_ref = 0).
    pub osc_constant_ratio: f64,
    /// f_pll / f_3dB.
    pub bandwidth_ratio: f64,
    /// (1/t_s) / f_pll.
    pub sampling_ratio: f64,
    /// Observation-time bound divided by t_obs.
    pub obs_time_ratio: f64,
}

impl ValidityReport {
    pub fn all_hold(&self) -> bool {
        self.cond_osc_constants && self.cond_bandwidth && self.cond_sampling && self.cond_obs_time
    }
}

/// Upper bound on t_obs for the white approximation; +∞ when c_ref = 0.
pub fn white_obs_time_bound(params: &OscillatorParams) -> f64 {
    if params.c_ref == 0.0 {
        f64::INFINITY
    } else {
        (params.c_vco - 3.0 * params.c_ref) / (params.c_ref * TAU * params.f_pll)
    }
}

pub fn check_white_validity(params: &OscillatorParams, t_obs: f64, ratio_threshold: f64) -> ValidityReport {
    let osc_constant_ratio = if params.c_ref == 0.0 { f64::INFINITY } else { params.c_vco / params.c_ref };
    let f_3db = params.f_3db();
    let bandwidth_ratio = if f_3db == 0.0 { f64::INFINITY } else { params.f_pll / f_3db };
    let sampling_ratio = 1.0 / (params.t_s * params.f_pll);
    let bound = white_obs_time_bound(params);
    ValidityReport {
        cond_osc_constants: osc_constant_ratio >= ratio_threshold,
        cond_bandwidth: bandwidth_ratio >= ratio_threshold,
        cond_sampling: sampling_ratio > 1.0,
        cond_obs_time: t_obs < bound,
        margins: ValidityMargins { osc_constant_ratio, bandwidth_ratio, sampling_ratio, obs_time_ratio: bound / t_obs },
    }
}

/// θ[n] = 2π·f_c·α[n], left unwrapped.
pub fn jitter_to_phase(trace: &JitterTrace, f_c: f64) -> Result<PhaseSeries> {
    if !(f_c > 0.0 && f_c.is_finite()) {
        return Err(Error::Parameter(format!("f_c must be > 0, got {f_c}")));
    }
    let scale = TAU * f_c;
    Ok(PhaseSeries { values: trace.samples.iter().map(|a| scale * a).collect(), interval: trace.t_s, f_c })
}

enum SamplerState {
    Vco { rng: ChaCha8Rng, c: f64, value: f64 },
    Pll(Box<PllLoop>),
    White(WhitePll),
}

/// Incremental evaluation of a jitter process at increasing instants.
///
/// The process starts at t = 0. For the VCO the increments between instants
/// are exact; the PLL loop is stepped sample by sample across short gaps
/// (instants are rounded to the nearest sample index) and crossed with an
/// exact multi-step draw across gaps longer than [`MAX_DENSE_GAP`]; the
/// white model draws independently about its fixed offset.
pub struct JitterSampler {
    state: SamplerState,
    t_s: f64,
    last_t: Option<f64>,
    model: NoiseModel,
}

impl JitterSampler {
    pub fn new(params: &OscillatorParams, model: NoiseModel, seed: u64) -> Result<Self> {
        params.validate()?;
        let state = match model {
            NoiseModel::Vco => {
                if params.c_vco <= 0.0 {
                    return Err(Error::Parameter("free-running VCO requires c_vco > 0".into()));
                }
                SamplerState::Vco {
                    rng: rng::stream(rng::derive(seed, &[purpose::VCO_PATH]), &[]),
                    c: params.c_vco,
                    value: 0.0,
                }
            }
            NoiseModel::PllExact => SamplerState::Pll(Box::new(PllLoop::new(params, seed))),
            NoiseModel::PllWhite => SamplerState::White(WhitePll::new(params, seed)),
        };
        Ok(Self { state, t_s: params.t_s, last_t: None, model })
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    /// Jitter at time `t` [s]; `t` must exceed every previously requested
    /// instant and be non-negative.
    pub fn sample_at(&mut self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Input(format!("instant must be finite and >= 0, got {t}")));
        }
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(Error::Input(format!("instants must be strictly increasing ({prev} then {t})")));
            }
        }
        let elapsed = t - self.last_t.unwrap_or(0.0);
        self.last_t = Some(t);
        let t_s = self.t_s;
        Ok(match &mut self.state {
            SamplerState::Vco { rng, c, value } => {
                *value += (*c * elapsed).sqrt() * normal(rng);
                *value
            }
            SamplerState::Pll(pll) => {
                let target = (t / t_s).round() as u64;
                let gap = target.saturating_sub(pll.index);
                if gap > MAX_DENSE_GAP {
                    pll.jump(gap);
                } else {
                    for _ in 0..gap {
                        pll.step();
                    }
                }
                pll.alpha
            }
            SamplerState::White(w) => w.draw(),
        })
    }
}

/// Evaluate a jitter process at strictly increasing instants.
///
/// The returned trace's `t_s` is the model sample period; samples are at
/// the requested instants, not on a uniform grid.
pub fn gen_jitter_at_instants(
    params: &OscillatorParams,
    model: NoiseModel,
    instants: &[f64],
    seed: u64,
) -> Result<JitterTrace> {
    if instants.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("instants must be strictly increasing".into()));
    }
    let mut sampler = JitterSampler::new(params, model, seed)?;
    let samples = instants.iter().map(|&t| sampler.sample_at(t)).collect::<Result<Vec<_>>>()?;
    Ok(JitterTrace { samples, t_s: params.t_s, origin: model.into() })
}
