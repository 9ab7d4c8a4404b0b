use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phasecal::emit::{emit_all, write_table, Format};
use phasecal::ingest::ingest_phase_log;
use phasecal::metrics::theoretical_bounds;
use phasecal::oscillator::check_white_validity;
use phasecal::scenario::{load_scenario, Scenario};
use phasecal::sweep::{distribution_rows, run_single, run_sweep};
use phasecal::{Error, Result};

/// Phase-calibration simulator for multi-chain transmit arrays.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of Monte-Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario as configured.
    Run { scenario: PathBuf },
    /// Run the scenario's t_obs × model × policy grid.
    Sweep { scenario: PathBuf },
    /// Analyse a recorded phase log (time_s,chain,phase_rad|phase_deg).
    Ingest {
        log: PathBuf,
        /// Carrier frequency [Hz].
        #[arg(long)]
        fc: f64,
    },
    /// Check a scenario file and print its hash.
    Validate { scenario: PathBuf },
    /// Print theoretical jitter bounds for the scenario's intervals.
    Bounds { scenario: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario> {
    let mut s = load_scenario(path)?;
    if let Some(seed) = cli.seed {
        s.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        s.trials = trials;
    }
    s.validate()?;
    Ok(s)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if cli.jobs == Some(0) {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    match &cli.command {
        Command::Run { scenario } => {
            let s = load(cli, scenario)?;
            let out = run_single(&s, cli.jobs)?;
            report(&emit_all(&out, cli.format, &cli.out)?);
        }
        Command::Sweep { scenario } => {
            let s = load(cli, scenario)?;
            let out = run_sweep(&s, cli.jobs)?;
            report(&emit_all(&out, cli.format, &cli.out)?);
        }
        Command::Ingest { log, fc } => {
            let chains = ingest_phase_log(log, *fc)?;
            let summary = chains.iter().map(|c| c.summary()).collect::<Result<Vec<_>>>()?;
            let (mut kde, mut qq) = (Vec::new(), Vec::new());
            for c in &chains {
                distribution_rows(&c.chain, &c.series.to_jitter(), &mut kde, &mut qq);
            }
            std::fs::create_dir_all(&cli.out)?;
            let ext = cli.format.extension();
            let paths = [
                cli.out.join(format!("ingest_summary.{ext}")),
                cli.out.join(format!("pdf_kde.{ext}")),
                cli.out.join(format!("qq.{ext}")),
            ];
            write_table(&summary, cli.format, &paths[0])?;
            write_table(&kde, cli.format, &paths[1])?;
            write_table(&qq, cli.format, &paths[2])?;
            report(&paths);
        }
        Command::Validate { scenario } => {
            let s = load(cli, scenario)?;
            println!("{}: ok ({} chains, hash {})", s.name, s.chains.len(), s.hash());
        }
        Command::Bounds { scenario } => {
            let s = load(cli, scenario)?;
            let p = s.reference_params();
            let mut grid = vec![s.timing.t_obs];
            if let Some(sw) = &s.sweep {
                grid.extend(&sw.t_obs);
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            println!("t_obs_s,vco_bound_s,ref_bound_s,pll_floor_var_s2,pll_floor_rms_s,white_valid");
            for t in grid {
                let b = theoretical_bounds(&p, t);
                let v = check_white_validity(&p, t, s.validity_ratio);
                println!(
                    "{t:e},{:e},{:e},{:e},{:e},{}",
                    b.vco_bound,
                    b.ref_bound,
                    b.pll_floor_var,
                    b.pll_floor_rms(),
                    v.all_hold()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
