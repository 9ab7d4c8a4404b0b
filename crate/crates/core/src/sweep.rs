//! Monte-Carlo sweeps over observation interval, oscillator model and
//! correction mode.
//!
//! Trial `i` of every cell uses the same seed, so differences between cells
//! are not masked by independent sampling noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::calib::{run_calibration_modes, CalibrationMode, CalibrationRun};
use crate::metrics::{
    array_gain, avg_beamforming_loss, kde_density, qq_pairs, rms_cycle_jitter, theoretical_bounds, ArraySpec,
};
use crate::oscillator::{check_white_validity, NoiseModel};
use crate::rng;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Grid points of the KDE curves.
pub const KDE_GRID: usize = 256;
/// Look-angle step of the array response [deg].
pub const RESPONSE_STEP_DEG: f64 = 0.5;

/// Mean and standard error over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

/// Statistics of one (t_obs, model, mode) cell.
#[derive(Debug, Clone)]
pub struct CellStats {
    pub t_obs: f64,
    pub model: NoiseModel,
    pub mode: CalibrationMode,
    /// Preamble length actually used in this cell.
    pub n_preamble: usize,
    /// τ_RMS of each chain.
    pub tau_chain: Vec<Summary>,
    /// τ_RMS averaged over chains within each trial.
    pub tau_mean: Summary,
    pub bf_loss: Summary,
    /// The complete run of trial 0, for figure data.
    pub first_run: CalibrationRun,
}

/// Copy of `base` configured for one sweep cell.
///
/// The data block fills the interval after the synchronization frame. When
/// the frame would occupy more than half the interval the preamble is
/// shortened to the largest N with M·N·t_s ≤ t_obs/2 (at least one sample).
pub fn cell_scenario(base: &Scenario, t_obs: f64, model: NoiseModel, mode: CalibrationMode) -> Result<Scenario> {
    let mut s = base.clone();
    let t = &mut s.timing;
    t.t_obs = t_obs;
    if t.t_syn() > 0.5 * t_obs {
        let n = (t_obs / (2.0 * t.m_chains as f64 * t.t_s)).floor() as usize;
        t.n_preamble = n.max(1);
    }
    t.t_dm = if s.t_dm_explicit && t.t_syn() + base.timing.t_dm <= t_obs {
        base.timing.t_dm
    } else {
        (t_obs - t.t_syn()).max(0.0)
    };
    for c in &mut s.chains {
        c.model = model;
    }
    s.policy.mode = mode;
    s.sweep = None;
    s.validate().map_err(|e| Error::Config(format!("sweep cell t_obs = {t_obs:e} s, model {model}: {e}")))?;
    Ok(s)
}

fn warn_validity(s: &Scenario) {
    for (m, c) in s.chains.iter().enumerate() {
        if c.model != NoiseModel::PllWhite {
            continue;
        }
        let report = check_white_validity(&c.osc, s.timing.t_obs, s.validity_ratio);
        if !report.all_hold() {
            log::warn!(
                "chain {m}: white PLL approximation outside its validity region at t_obs = {:e} s ({:?})",
                s.timing.t_obs,
                report.margins
            );
        }
    }
}

/// Run all trials of a cell and score every mode in `modes`.
pub fn evaluate_cell(
    base: &Scenario,
    t_obs: f64,
    model: NoiseModel,
    modes: &[CalibrationMode],
) -> Result<Vec<CellStats>> {
    if modes.is_empty() {
        return Err(Error::Config("no correction modes requested".into()));
    }
    let s = cell_scenario(base, t_obs, model, modes[0])?;
    score(&s, modes)
}

/// Run all trials of `s` as configured and score every mode in `modes`.
fn score(s: &Scenario, modes: &[CalibrationMode]) -> Result<Vec<CellStats>> {
    warn_validity(s);
    let spec = ArraySpec::ula(s.timing.m_chains, 0.0)?;
    let m_chains = s.timing.m_chains;
    let t_obs = s.timing.t_obs;

    // per trial, per mode: (run, per-chain tau, bf loss)
    let per_trial = (0..s.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<Vec<(CalibrationRun, Vec<f64>, f64)>> {
            let runs = run_calibration_modes(s, trial, modes)?;
            let steer_seed = rng::derive(s.master_seed, &[trial, rng::purpose::STEERING]);
            runs.into_iter()
                .map(|run| {
                    let taus = (0..m_chains)
                        .map(|m| rms_cycle_jitter(&run.residual_series(m, t_obs, s.f_c)?))
                        .collect::<Result<Vec<_>>>()?;
                    let loss = avg_beamforming_loss(&run, &spec, s.steering_draws, steer_seed)?;
                    Ok((run, taus, loss))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(modes.len());
    for (j, &mode) in modes.iter().enumerate() {
        let tau_chain =
            (0..m_chains).map(|m| Summary::of(&per_trial.iter().map(|t| t[j].1[m]).collect::<Vec<_>>())).collect();
        let chain_means: Vec<f64> = per_trial.iter().map(|t| t[j].1.iter().sum::<f64>() / m_chains as f64).collect();
        let losses: Vec<f64> = per_trial.iter().map(|t| t[j].2).collect();
        out.push(CellStats {
            t_obs,
            model: s.chains[0].model,
            mode,
            n_preamble: s.timing.n_preamble,
            tau_chain,
            tau_mean: Summary::of(&chain_means),
            bf_loss: Summary::of(&losses),
            first_run: per_trial[0][j].0.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub name: String,
    pub model: String,
    pub policy: String,
    pub chain: usize,
    pub t_obs_s: f64,
    pub tau_rms_s: f64,
    pub tau_rms_se: f64,
    pub vco_bound_s: f64,
    pub ref_bound_s: f64,
    pub pll_floor_rms_s: f64,
    pub bf_loss_db: f64,
}

/// Chain-averaged τ_RMS against observation interval.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct JitterRow {
    pub model: String,
    pub policy: String,
    pub t_obs_s: f64,
    pub tau_rms_s: f64,
    pub tau_rms_se: f64,
    pub vco_bound_s: f64,
    pub ref_bound_s: f64,
    pub pll_floor_rms_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ResponseRow {
    pub model: String,
    pub policy: String,
    pub t_obs_s: f64,
    pub angle_deg: f64,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct LossRow {
    pub model: String,
    pub policy: String,
    pub t_obs_s: f64,
    pub bf_loss_db: f64,
    pub bf_loss_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct KdeRow {
    pub series: String,
    pub jitter_s: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct QqRow {
    pub series: String,
    pub normal_q: f64,
    pub sample_q: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutput {
    pub results: Vec<ResultRow>,
    pub fig8: Vec<JitterRow>,
    pub fig9: Vec<ResponseRow>,
    pub fig10: Vec<LossRow>,
    pub kde: Vec<KdeRow>,
    pub qq: Vec<QqRow>,
}

impl SweepOutput {
    fn sort(&mut self) {
        let key = |model: &str, policy: &str, t: f64| (model.to_owned(), policy.to_owned(), t.to_bits());
        self.results.sort_by(|a, b| {
            key(&a.model, &a.policy, a.t_obs_s).cmp(&key(&b.model, &b.policy, b.t_obs_s)).then(a.chain.cmp(&b.chain))
        });
        self.fig8.sort_by_key(|r| key(&r.model, &r.policy, r.t_obs_s));
        self.fig10.sort_by_key(|r| key(&r.model, &r.policy, r.t_obs_s));
    }
}

/// Series label used by the distribution tables.
pub fn series_label(model: NoiseModel, mode: CalibrationMode) -> String {
    format!("{model}/{mode}")
}

fn push_cell(out: &mut SweepOutput, base: &Scenario, cell: &CellStats) {
    let hash = base.hash();
    for (m, tau) in cell.tau_chain.iter().enumerate() {
        let b = theoretical_bounds(&base.chains[m].osc, cell.t_obs);
        out.results.push(ResultRow {
            scenario: hash.clone(),
            name: base.name.clone(),
            model: cell.model.to_string(),
            policy: cell.mode.to_string(),
            chain: m,
            t_obs_s: cell.t_obs,
            tau_rms_s: tau.mean,
            tau_rms_se: tau.se,
            vco_bound_s: b.vco_bound,
            ref_bound_s: b.ref_bound,
            pll_floor_rms_s: b.pll_floor_rms(),
            bf_loss_db: cell.bf_loss.mean,
        });
    }
    let b = theoretical_bounds(&base.reference_params(), cell.t_obs);
    out.fig8.push(JitterRow {
        model: cell.model.to_string(),
        policy: cell.mode.to_string(),
        t_obs_s: cell.t_obs,
        tau_rms_s: cell.tau_mean.mean,
        tau_rms_se: cell.tau_mean.se,
        vco_bound_s: b.vco_bound,
        ref_bound_s: b.ref_bound,
        pll_floor_rms_s: b.pll_floor_rms(),
    });
    out.fig10.push(LossRow {
        model: cell.model.to_string(),
        policy: cell.mode.to_string(),
        t_obs_s: cell.t_obs,
        bf_loss_db: cell.bf_loss.mean,
        bf_loss_se: cell.bf_loss.se,
    });
}

/// Array response at boresight with the residuals of `run`, power-averaged
/// over intervals, on a −90°..90° look grid.
pub fn array_response(run: &CalibrationRun) -> Result<Vec<(f64, f64)>> {
    let m = run.n_chains();
    let spec = ArraySpec::ula(m, 0.0)?;
    let steps = (180.0 / RESPONSE_STEP_DEG).round() as usize;
    (0..=steps)
        .map(|i| {
            let look = -90.0 + i as f64 * RESPONSE_STEP_DEG;
            let mut power = 0.0;
            for r in &run.residuals {
                power += 10f64.powf(array_gain(r, &spec, look)? / 10.0);
            }
            Ok((look, 10.0 * (power / run.residuals.len() as f64).log10()))
        })
        .collect()
}

/// Residual jitter [s] of all chains of `run`, chain by chain.
pub fn residual_jitter(run: &CalibrationRun, f_c: f64) -> Vec<f64> {
    let scale = 1.0 / (std::f64::consts::TAU * f_c);
    (0..run.n_chains()).flat_map(|m| run.residuals.iter().map(move |r| r[m] * scale)).collect()
}

/// KDE and Q-Q rows for one sample set; degenerate samples are skipped with
/// a warning.
pub fn distribution_rows(series: &str, samples: &[f64], kde: &mut Vec<KdeRow>, qq: &mut Vec<QqRow>) {
    match kde_density(samples, None, KDE_GRID) {
        Ok(curve) => {
            kde.extend(curve.into_iter().map(|(x, d)| KdeRow { series: series.to_owned(), jitter_s: x, density: d }))
        }
        Err(e) => log::warn!("{series}: no density estimate: {e}"),
    }
    match qq_pairs(samples) {
        Ok(pairs) => {
            qq.extend(pairs.into_iter().map(|(q, s)| QqRow { series: series.to_owned(), normal_q: q, sample_q: s }))
        }
        Err(e) => log::warn!("{series}: no Q-Q pairs: {e}"),
    }
}

fn figure_rows(out: &mut SweepOutput, base: &Scenario, cell: &CellStats) -> Result<()> {
    let label = series_label(cell.model, cell.mode);
    for (angle, gain) in array_response(&cell.first_run)? {
        out.fig9.push(ResponseRow {
            model: cell.model.to_string(),
            policy: cell.mode.to_string(),
            t_obs_s: cell.t_obs,
            angle_deg: angle,
            gain_db: gain,
        });
    }
    distribution_rows(&label, &residual_jitter(&cell.first_run, base.f_c), &mut out.kde, &mut out.qq);
    Ok(())
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

/// Run the scenario's own configuration (its models, mode and t_obs).
pub fn run_single(scenario: &Scenario, jobs: Option<usize>) -> Result<SweepOutput> {
    scenario.validate()?;
    if scenario.chains.iter().any(|c| c.model != scenario.chains[0].model) {
        log::info!("chains use mixed oscillator models; rows carry chain 0's model");
    }
    with_pool(jobs, || {
        let cell = score(scenario, &[scenario.policy.mode])?.remove(0);
        let mut out = SweepOutput::default();
        push_cell(&mut out, scenario, &cell);
        figure_rows(&mut out, scenario, &cell)?;
        Ok(out)
    })
}

/// Run the full sweep grid of `scenario`.
///
/// Figure data (array response, densities, Q-Q) comes from trial 0 at the
/// scenario's own t_obs, which must be one of the grid values.
pub fn run_sweep(scenario: &Scenario, jobs: Option<usize>) -> Result<SweepOutput> {
    scenario.validate()?;
    let sweep = scenario
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config(format!("scenario '{}' has no [sweep] section", scenario.name)))?;
    let figure_t = scenario.timing.t_obs;
    let cells: Vec<(f64, NoiseModel)> =
        sweep.t_obs.iter().flat_map(|&t| sweep.models.iter().map(move |&m| (t, m))).collect();
    let modes = sweep.policies.clone();

    with_pool(jobs, || {
        let stats = cells
            .par_iter()
            .map(|&(t, model)| evaluate_cell(scenario, t, model, &modes))
            .collect::<Result<Vec<_>>>()?;
        let mut out = SweepOutput::default();
        for cell in stats.iter().flatten() {
            push_cell(&mut out, scenario, cell);
            if cell.t_obs == figure_t {
                figure_rows(&mut out, scenario, cell)?;
            }
        }
        if out.fig9.is_empty() {
            log::warn!("t_obs = {figure_t:e} s is not on the sweep grid; no figure data emitted");
        }
        out.sort();
        Ok(out)
    })
}
