use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::PathBuf;

use crate::calib::CalibrationMode;
use crate::emit::{emit_all, read_table, write_table, Format};
use crate::ingest::{ingest_phase_log, read_phase_log};
use crate::oscillator::NoiseModel;
use crate::scenario::{load_scenario, Scenario};
use crate::sweep::*;
use crate::Error;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// Table III setup cut down to a two-point grid and short runs.
fn reduced() -> Scenario {
    let mut s = load_scenario(shipped("table3_simulation.toml")).unwrap();
    s.trials = 2;
    s.timing.l_obs = 20;
    s.timing.t_obs = 1e-3;
    s.timing.t_dm = 1e-3 - s.timing.t_syn();
    s.sweep.as_mut().unwrap().t_obs = vec![1e-4, 1e-3];
    s.validate().unwrap();
    s
}

#[test]
fn shipped_scenarios_load() {
    let t3 = load_scenario(shipped("table3_simulation.toml")).unwrap();
    assert_eq!(t3.chains.len(), 8);
    assert_eq!(t3.f_c, 3.75e9);
    assert_eq!(t3.t_s(), 5e-8);
    let p = t3.reference_params();
    assert_eq!((p.c_vco, p.c_ref, p.f_pll), (1e-20, 1e-26, 1e6));
    assert_eq!(t3.sweep.as_ref().unwrap().t_obs.len(), 6);

    let m4 = load_scenario(shipped("table3_simulation_m4.toml")).unwrap();
    assert_eq!(m4.chains.len(), 4);
    assert_ne!(m4.hash(), t3.hash());

    let t1 = load_scenario(shipped("table1_measurement.toml")).unwrap();
    assert_eq!(t1.chains.len(), 6);
    assert_eq!(t1.t_s(), 2.5e-7);
    assert_eq!(t1.timing.n_preamble, 2500);
    assert_eq!(t1.policy.mode, CalibrationMode::Instantaneous);
    assert_eq!(t1.chains[4].drift, 1e-3);
    assert_eq!(t1.snr_db, Some(30.0));
}

#[test]
fn ingest_constant_and_ramp() {
    let f_c = 3.75e9;
    let mut text = String::from("time_s,chain,phase_rad\n");
    for i in 0..50 {
        let t = i as f64 * 0.1;
        text.push_str(&format!("{t},a,0.25\n{t},b,{}\n", 0.001 * i as f64));
    }
    let logs = read_phase_log(text.as_bytes(), f_c).unwrap();
    let a = logs[0].summary().unwrap();
    let b = logs[1].summary().unwrap();
    assert_eq!((a.chain.as_str(), a.samples), ("a", 50));
    assert_eq!(a.tau_rms_s, 0.0);
    assert!((a.interval_s - 0.1).abs() < 1e-12);
    let expected = 0.001 / (TAU * f_c);
    assert!((b.tau_rms_s / expected - 1.0).abs() < 1e-6, "{:e}", b.tau_rms_s);
}

#[test]
fn ingest_reports_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    std::fs::write(&path, "time_s,chain,phase_deg\n0,a,1\n1,a,x\n").unwrap();
    match ingest_phase_log(&path, 1e9) {
        Err(Error::Ingest { row, .. }) => assert_eq!(row, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(ingest_phase_log(dir.path().join("missing.csv"), 1e9), Err(Error::Io(_))));
}

#[test]
fn tables_round_trip_exactly() {
    let rows: Vec<LossRow> = [1e-300, 0.1 + 0.2, 1.0 / 3.0, -7.25e12, 6.02]
        .iter()
        .enumerate()
        .map(|(i, &v)| LossRow {
            model: "vco".into(),
            policy: format!("p{i}"),
            t_obs_s: v * 1e-9,
            bf_loss_db: v,
            bf_loss_se: v.abs().sqrt(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    for format in [Format::Csv, Format::Json] {
        let path = dir.path().join(format!("t.{}", format.extension()));
        write_table(&rows, format, &path).unwrap();
        let back: Vec<LossRow> = read_table(format, &path).unwrap();
        assert_eq!(back, rows);

        write_table::<LossRow>(&[], format, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        match format {
            Format::Csv => assert_eq!(text, "model,policy,t_obs_s,bf_loss_db,bf_loss_se\n"),
            Format::Json => assert_eq!(text.trim(), "[]"),
        }
    }
}

#[test]
fn sweep_emits_every_cell() {
    let s = reduced();
    let out = run_sweep(&s, Some(2)).unwrap();
    let cells: BTreeSet<(String, String, u64)> =
        out.fig10.iter().map(|r| (r.model.clone(), r.policy.clone(), r.t_obs_s.to_bits())).collect();
    assert_eq!(cells.len(), out.fig10.len());
    for model in ["vco", "pll_exact"] {
        for policy in ["none", "initial_only", "instantaneous", "smoothed"] {
            for t in [1e-4f64, 1e-3] {
                assert!(cells.contains(&(model.into(), policy.into(), t.to_bits())), "{model} {policy} {t}");
            }
        }
    }
    assert_eq!(out.results.len(), 2 * 4 * 2 * 8);
    assert_eq!(out.fig8.len(), 16);
    // figure data only at the scenario's own interval
    assert!(out.fig9.iter().all(|r| r.t_obs_s == 1e-3));
    assert_eq!(out.fig9.len(), 8 * 361);
    assert_eq!(out.qq.len(), 8 * 8 * 20);
    assert!(out.results.iter().all(|r| r.scenario == s.hash()));
}

#[test]
fn output_is_deterministic() {
    let s = reduced();
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str| -> Vec<(PathBuf, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir.path().join(sub))
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    for (sub, jobs, format) in
        [("a", 1, Format::Csv), ("b", 3, Format::Csv), ("c", 2, Format::Json), ("d", 1, Format::Json)]
    {
        let out = run_sweep(&s, Some(jobs)).unwrap();
        emit_all(&out, format, &dir.path().join(sub)).unwrap();
    }
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("c"), read("d"));
    assert_eq!(read("a").len(), 6);
}

#[test]
fn sweep_tracks_wiener_bound() {
    let mut s = reduced();
    s.trials = 4;
    s.timing.l_obs = 250;
    for t in [1e-4, 1e-3] {
        let cell = evaluate_cell(&s, t, NoiseModel::Vco, &[CalibrationMode::Instantaneous]).unwrap().remove(0);
        let bound = (1e-20f64 * t).sqrt();
        assert!((cell.tau_mean.mean / bound - 1.0).abs() < 0.1, "t = {t}: {:e}", cell.tau_mean.mean);
    }
}

#[test]
fn short_intervals_shrink_the_preamble() {
    let s = reduced();
    let cell = cell_scenario(&s, 1e-5, NoiseModel::Vco, CalibrationMode::None).unwrap();
    assert_eq!(cell.timing.n_preamble, 12);
    assert!(cell.timing.t_syn() <= 0.5e-5);
    assert!((cell.timing.t_dm - (1e-5 - cell.timing.t_syn())).abs() < 1e-18);
    let same = cell_scenario(&s, 1e-3, NoiseModel::Vco, CalibrationMode::None).unwrap();
    assert_eq!(same.timing.n_preamble, 100);
}

#[test]
fn single_run_uses_scenario_mode() {
    let mut s = reduced();
    s.sweep = None;
    let out = run_single(&s, Some(1)).unwrap();
    assert_eq!(out.fig10.len(), 1);
    assert_eq!(out.fig10[0].policy, "smoothed");
    assert_eq!(out.fig10[0].model, "pll_exact");
    assert_eq!(out.results.len(), 8);
    assert!(matches!(run_sweep(&s, None), Err(Error::Config(_))));
}
