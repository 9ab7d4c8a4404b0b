//! Recorded phase logs.
//!
//! A log is a CSV file with the header `time_s,chain,phase_rad` (or
//! `time_s,chain,phase_deg`). Rows of different chains may interleave; the
//! time column must not decrease within a chain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{rms_cycle_jitter, PhaseSeries};
use crate::{Error, Result};

/// Relative spread of sample spacing above which a warning is logged.
pub const SPACING_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainLog {
    pub chain: String,
    pub times: Vec<f64>,
    /// Phases in radians, spaced by the mean sample interval.
    pub series: PhaseSeries,
}

/// Per-chain statistics of an ingested log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRow {
    pub chain: String,
    pub samples: usize,
    pub interval_s: f64,
    pub tau_rms_s: f64,
}

impl ChainLog {
    pub fn summary(&self) -> Result<IngestRow> {
        Ok(IngestRow {
            chain: self.chain.clone(),
            samples: self.series.values.len(),
            interval_s: self.series.interval,
            tau_rms_s: rms_cycle_jitter(&self.series)?,
        })
    }
}

/// Read a phase log; chains are returned in order of first appearance.
pub fn ingest_phase_log(path: impl AsRef<Path>, f_c: f64) -> Result<Vec<ChainLog>> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io_at(path.as_ref(), e))?;
    read_phase_log(file, f_c)
}

pub fn read_phase_log(reader: impl std::io::Read, f_c: f64) -> Result<Vec<ChainLog>> {
    if !(f_c > 0.0 && f_c.is_finite()) {
        return Err(Error::Input(format!("carrier frequency must be > 0, got {f_c}")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Ingest { row: 1, msg: e.to_string() })?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let degrees = match cols.as_slice() {
        ["time_s", "chain", "phase_rad"] => false,
        ["time_s", "chain", "phase_deg"] => true,
        _ => {
            return Err(Error::Ingest {
                row: 1,
                msg: format!(
                    "expected header time_s,chain,phase_rad or time_s,chain,phase_deg, got '{}'",
                    cols.join(",")
                ),
            })
        }
    };

    let mut ids: Vec<String> = Vec::new();
    let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingest { row, msg: e.to_string() })?;
        if rec.len() != 3 {
            return Err(Error::Ingest { row, msg: format!("expected 3 fields, got {}", rec.len()) });
        }
        let num = |idx: usize, what: &str| -> Result<f64> {
            let v: f64 = rec[idx]
                .parse()
                .map_err(|_| Error::Ingest { row, msg: format!("{what} '{}' is not a number", &rec[idx]) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Ingest { row, msg: format!("{what} is not finite") })
            }
        };
        let t = num(0, "time")?;
        let mut phase = num(2, "phase")?;
        if degrees {
            phase = phase.to_radians();
        }
        let id = &rec[1];
        if id.is_empty() {
            return Err(Error::Ingest { row, msg: "empty chain id".into() });
        }
        let k = match ids.iter().position(|c| c == id) {
            Some(k) => k,
            None => {
                ids.push(id.to_owned());
                rows.push((Vec::new(), Vec::new()));
                ids.len() - 1
            }
        };
        let (times, phases) = &mut rows[k];
        if let Some(&last) = times.last() {
            if t < last {
                return Err(Error::Ingest {
                    row,
                    msg: format!("time {t} decreases for chain '{id}' (previous {last})"),
                });
            }
        }
        times.push(t);
        phases.push(phase);
    }
    if ids.is_empty() {
        return Err(Error::Input("phase log has no data rows".into()));
    }

    ids.into_iter()
        .zip(rows)
        .map(|(chain, (times, phases))| {
            if times.len() < 2 {
                return Err(Error::Input(format!("chain '{chain}' has fewer than 2 samples")));
            }
            let span = times[times.len() - 1] - times[0];
            let interval = span / (times.len() - 1) as f64;
            if !(interval > 0.0) {
                return Err(Error::Input(format!("chain '{chain}' has zero time span")));
            }
            let worst = times.windows(2).map(|w| ((w[1] - w[0]) - interval).abs() / interval).fold(0.0, f64::max);
            if worst > SPACING_TOLERANCE {
                log::warn!(
                    "chain '{chain}': sample spacing deviates up to {:.1}% from the mean interval {interval:e} s",
                    worst * 100.0
                );
            }
            let series = PhaseSeries::new(phases, interval, f_c)?;
            Ok(ChainLog { chain, times, series })
        })
        .collect()
}
