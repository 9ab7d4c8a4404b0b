//! Result files.
//!
//! Every table is written with a fixed column order. Floats use the
//! shortest representation that parses back to the same value.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ingest::IngestRow;
use crate::sweep::{JitterRow, KdeRow, LossRow, QqRow, ResponseRow, ResultRow, SweepOutput};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A row type with a fixed column list.
pub trait Table: Serialize + DeserializeOwned {
    const COLUMNS: &'static [&'static str];
}

impl Table for ResultRow {
    const COLUMNS: &'static [&'static str] = &[
        "scenario",
        "name",
        "model",
        "policy",
        "chain",
        "t_obs_s",
        "tau_rms_s",
        "tau_rms_se",
        "vco_bound_s",
        "ref_bound_s",
        "pll_floor_rms_s",
        "bf_loss_db",
    ];
}

impl Table for JitterRow {
    const COLUMNS: &'static [&'static str] =
        &["model", "policy", "t_obs_s", "tau_rms_s", "tau_rms_se", "vco_bound_s", "ref_bound_s", "pll_floor_rms_s"];
}

impl Table for ResponseRow {
    const COLUMNS: &'static [&'static str] = &["model", "policy", "t_obs_s", "angle_deg", "gain_db"];
}

impl Table for LossRow {
    const COLUMNS: &'static [&'static str] = &["model", "policy", "t_obs_s", "bf_loss_db", "bf_loss_se"];
}

impl Table for KdeRow {
    const COLUMNS: &'static [&'static str] = &["series", "jitter_s", "density"];
}

impl Table for QqRow {
    const COLUMNS: &'static [&'static str] = &["series", "normal_q", "sample_q"];
}

impl Table for IngestRow {
    const COLUMNS: &'static [&'static str] = &["chain", "samples", "interval_s", "tau_rms_s"];
}

/// Write `rows` to `path`; an empty table still gets its header (CSV) or
/// an empty array (JSON).
pub fn write_table<T: Table>(rows: &[T], format: Format, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => {
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(&mut w);
            wtr.write_record(T::COLUMNS)?;
            for row in rows {
                wtr.serialize(row)?;
            }
            wtr.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<T: Table>(format: Format, path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    match format {
        Format::Csv => {
            let mut rdr = csv::Reader::from_reader(file);
            rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
        }
        Format::Json => Ok(serde_json::from_reader(std::io::BufReader::new(file))?),
    }
}

/// Write the result table to `out_dir/results.<ext>`.
pub fn emit_results(rows: &[ResultRow], format: Format, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("results.{}", format.extension()));
    write_table(rows, format, &path)?;
    Ok(path)
}

/// Write the result table and every figure table; returns the paths written.
pub fn emit_all(out: &SweepOutput, format: Format, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let ext = format.extension();
    let mut paths = vec![emit_results(&out.results, format, out_dir)?];
    let mut put = |stem: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = out_dir.join(format!("{stem}.{ext}"));
        f(&p)?;
        paths.push(p);
        Ok(())
    };
    put("fig8_jitter", &|p| write_table(&out.fig8, format, p))?;
    put("fig9_response", &|p| write_table(&out.fig9, format, p))?;
    put("fig10_loss", &|p| write_table(&out.fig10, format, p))?;
    put("pdf_kde", &|p| write_table(&out.kde, format, p))?;
    put("qq", &|p| write_table(&out.qq, format, p))?;
    Ok(paths)
}
