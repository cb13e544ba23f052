use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anchorslam::harness::{
    convergence_experiment, emit_run, emit_sweep_header, emit_sweep_row, fit_models, load_config, load_convergence,
    load_experiment, run_sweep, write_json, ConvergenceConfig, HarnessError, MetricsSummary, DEFAULT_WARMUP,
};
use anchorslam::sim::{run_simulation, SimConfig};

#[derive(Parser)]
#[command(
    name = "anchorslam",
    version,
    about = "Multi-user indoor SLAM simulator and experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and report error percentiles.
    Run(Common),
    /// Run a parameter sweep over paired seeds.
    Sweep(Common),
    /// Single-update contraction trials plus a long single-particle loop run.
    Converge(Common),
    /// Calibrate the Bluetooth and WiFi distance models.
    FitModels(Common),
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

fn sim_config(args: &Common) -> Result<SimConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_metrics(m: &MetricsSummary) {
    println!(
        "p25 {:.3}  p50 {:.3}  p75 {:.3}  p90 {:.3}  max {:.3}  ms/step {:.4}  encounters {}  anchor hits {}",
        m.p25, m.p50, m.p75, m.p90, m.max, m.ms_per_step, m.encounters, m.anchor_hits
    );
}

fn run(args: &Common) -> Result<(), Failure> {
    let cfg = sim_config(args)?;
    let result = run_simulation(&cfg).map_err(HarnessError::from)?;
    let metrics = MetricsSummary::from_result(&result, DEFAULT_WARMUP)?;
    print_metrics(&metrics);
    if let Some(dir) = &args.out {
        emit_run(dir, &cfg, &result, &metrics)?;
    }
    Ok(())
}

fn sweep(args: &Common) -> Result<(), Failure> {
    let path = args
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("sweep needs --config <experiment.toml>".into()))?;
    let mut spec = load_experiment(path)?;
    if let Some(seed) = args.seed {
        spec.base.seed = seed;
    }
    let out = args.out.clone().or_else(|| spec.out_dir.clone());
    let mut table = match &out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
                path: dir.clone(),
                source: e,
            })?;
            let file = dir.join("sweep.csv");
            let mut w = csv::Writer::from_path(&file).map_err(|e| io_failure(&file, e))?;
            emit_sweep_header(&mut w).map_err(|e| io_failure(&file, e))?;
            Some((w, file))
        }
        None => None,
    };
    let mut write_error = None;
    println!(
        "{}: {} values x {} seeds",
        spec.sweep.param,
        spec.sweep.values.len(),
        spec.n_seeds
    );
    let report = run_sweep(&spec, |row| {
        print!("{} = {}, seed {}: ", spec.sweep.param, row.value, row.seed);
        print_metrics(&row.metrics);
        if let Some((w, file)) = table.as_mut() {
            if let Err(e) = emit_sweep_row(w, row) {
                write_error.get_or_insert_with(|| io_failure(file, e));
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    for f in &report.failures {
        eprintln!(
            "run failed ({} = {}, seed {}): {}",
            spec.sweep.param, f.value, f.seed, f.message
        );
    }
    if let Some(dir) = &out {
        write_json(&dir.join("sweep.json"), &report)?;
    }
    if report.succeeded() {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "{} of {} runs failed",
            report.failures.len(),
            report.failures.len() + report.rows.len()
        )))
    }
}

fn io_failure(path: &Path, e: csv::Error) -> Failure {
    Failure::Run(format!("{}: {e}", path.display()))
}

fn converge(args: &Common) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => load_convergence(path)?,
        None => ConvergenceConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = convergence_experiment(&cfg)?;
    let t = &report.trials;
    println!(
        "single update ({} trials): mean error {:.4}, predicted {:.4}, deviation {:.2}%",
        t.trials,
        t.empirical_norm,
        t.predicted_norm,
        100.0 * t.relative_deviation
    );
    let l = &report.long_run;
    println!(
        "loop run ({} steps, {} sightings): final-quarter error {:.3} m, dead reckoning {:.3} m, ratio {:.1}, bounded {}",
        l.steps, l.anchor_sightings, l.filtered_final_quartile, l.dead_reckoning_final_quartile, l.improvement, l.bounded
    );
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.clone(),
            source: e,
        })?;
        write_json(&dir.join("convergence.json"), &report)?;
    }
    if t.relative_deviation > 0.05 || !l.bounded || l.improvement < 5.0 {
        return Err(Failure::Run("convergence checks failed".into()));
    }
    Ok(())
}

fn fit(args: &Common) -> Result<(), Failure> {
    let cfg = sim_config(args)?;
    for m in fit_models(&cfg, args.out.as_deref())? {
        println!(
            "{:?}: {} samples, {}",
            m.source,
            m.samples,
            m.model.to_text().replace('\n', " ")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Converge(a) => converge(a),
        Command::FitModels(a) => fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
