mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sltc_core::calibration::{loocv_lambda, metrics, CalibrationConfig};
use sltc_core::io;
use sltc_core::{adjust::gap_vector, run_calibration, simulate, synth, ScenarioConfig};

#[derive(Parser)]
#[command(name = "sltc", version, about = "Screenline-based calibration of tour-based freight demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario with ground-truth and perturbed parameters.
    Synth {
        /// Scenario config (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Write the effective config next to the scenario.
        #[arg(long)]
        write_config: bool,
    },
    /// Run the demand chain once and write simulated counts.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sweep the ridge penalty by leave-one-screenline-out cross-validation.
    Loocv {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full calibration loop.
    Calibrate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tuning: Tuning,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render SVG charts from the CSV artifacts of a calibration run.
    Report {
        /// Directory holding convergence.csv and friends.
        #[arg(long)]
        run_dir: PathBuf,
        /// Where to write the charts; defaults to the run directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Input {
    /// Scenario directory written by `synth`.
    #[arg(long)]
    scenario: PathBuf,
    /// Parameter directory; defaults to the scenario's initial parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Calibration config (TOML) with loop and estimation settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Tuning {
    /// Fixed ridge penalty; skips cross-validation.
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated penalty grid for cross-validation.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Convergence threshold on the RMSE change.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Re-run cross-validation at every iteration.
    #[arg(long)]
    reselect_lambda: bool,
}

struct Loaded {
    scenario: sltc_core::Scenario,
    params: sltc_core::DemandParams,
    config: CalibrationConfig,
}

fn load(input: &Input, tuning: Option<&Tuning>) -> Result<Loaded> {
    let (scenario, manifest) =
        io::load_scenario(&input.scenario).with_context(|| format!("loading scenario {}", input.scenario.display()))?;
    let params_dir = input.params.clone().unwrap_or_else(|| input.scenario.join(io::INITIAL_PARAMS));
    let params =
        io::read_params(&params_dir).with_context(|| format!("loading parameters {}", params_dir.display()))?;
    let mut config = match &input.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => CalibrationConfig { seed: manifest.seed, ..Default::default() },
    };
    if let Some(seed) = input.seed {
        config.seed = seed;
    }
    if let Some(t) = tuning {
        if let Some(l) = t.lambda {
            config.lambda = Some(l);
        }
        if let Some(g) = &t.lambda_grid {
            config.lambda_grid = g.clone();
        }
        if let Some(e) = t.epsilon {
            config.epsilon = Some(e);
        }
        if let Some(m) = t.max_iter {
            config.max_iter = m;
        }
        config.reselect_lambda |= t.reselect_lambda;
    }
    config.validate()?;
    Ok(Loaded { scenario, params, config })
}

fn run_synth(config: Option<&Path>, seed: Option<u64>, out_dir: &Path, write_config: bool) -> Result<()> {
    let mut cfg = match config {
        Some(p) => {
            ScenarioConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let s = synth(&cfg)?;
    sltc_core::synth::write_scenario(out_dir, &s)?;
    if write_config {
        fs::write(out_dir.join("synth_config.toml"), cfg.to_toml()?)?;
    }
    let sim = &s.truth_run;
    println!(
        "scenario written to {}: {} zones, {} screenlines, {} establishments, {} tours, {} classes",
        out_dir.display(),
        s.scenario.ctx.network.zones().len(),
        s.scenario.screenlines.len(),
        s.scenario.ctx.establishments().len(),
        sim.plan.tours.len(),
        sim.extraction.classes.len()
    );
    Ok(())
}

fn run_simulate(input: &Input, out_dir: &Path) -> Result<()> {
    let l = load(input, None)?;
    let sim = simulate(&l.scenario, &l.params, l.config.seed)?;
    fs::create_dir_all(out_dir)?;
    io::write_contracts(&out_dir.join("contracts.csv"), &sim.contracts)?;
    io::write_shipments(&out_dir.join("shipments.csv"), &sim.shipments)?;
    io::write_tours(&out_dir.join("tours.csv"), &sim.plan.tours)?;
    io::write_slb_classes(&out_dir.join("slb_classes.csv"), &sim.extraction.classes)?;
    io::write_matrix_market(&out_dir.join("mapping_matrix.mtx"), &sim.matrix)?;
    io::write_scatter(&out_dir.join("counts.csv"), &l.scenario.screenlines, &sim.counts)?;
    io::write_simulated_counts(&out_dir.join("slb_report.csv"), &l.scenario.screenlines, &sim.counts, &sim.physical)?;
    let m = metrics(&l.scenario.observed(), &sim.counts)?;
    println!(
        "{} tours, {} classes; RMSE {:.3}, MAE {:.3}, MAE ratio {:.4}",
        sim.plan.tours.len(),
        sim.extraction.classes.len(),
        m.rmse,
        m.mae,
        m.mae_ratio
    );
    Ok(())
}

fn run_loocv(input: &Input, tuning: &Tuning, out_dir: &Path) -> Result<()> {
    let l = load(input, Some(tuning))?;
    let sim = simulate(&l.scenario, &l.params, l.config.seed)?;
    let gap = gap_vector(&l.scenario.observed(), &sim.counts)?;
    let cv = loocv_lambda(&sim.matrix, &gap, &l.config.lambda_grid)?;
    fs::create_dir_all(out_dir)?;
    let mut text = String::from("lambda,cv_rmse\n");
    for (lambda, v) in &cv.curve {
        text.push_str(&format!("{lambda},{v}\n"));
    }
    fs::write(out_dir.join("loocv_curve.csv"), text)?;
    println!("chosen λ = {}", cv.lambda);
    Ok(())
}

fn run_calibrate(input: &Input, tuning: &Tuning, out_dir: &Path) -> Result<()> {
    let l = load(input, Some(tuning))?;
    let state = run_calibration(&l.scenario, &l.params, &l.config, Some(out_dir))?;
    for r in &state.history {
        println!(
            "k = {:>2}  RMSE {:>10.3}  MAE {:>10.3}  MAE ratio {:.4}",
            r.k, r.metrics.rmse, r.metrics.mae, r.metrics.mae_ratio
        );
    }
    println!(
        "{} after {} iteration(s); artifacts in {}",
        if state.converged { "converged" } else { "stopped" },
        state.k,
        out_dir.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct ConvergenceRow {
    k: usize,
    rmse: f64,
    #[allow(dead_code)]
    mae: f64,
    mae_ratio: f64,
}

#[derive(Deserialize)]
struct LoocvRow {
    lambda: f64,
    cv_rmse: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    Ok(io::read_csv(path)?)
}

fn run_report(run_dir: &Path, out_dir: &Path) -> Result<()> {
    let conv: Vec<ConvergenceRow> = read_rows(&run_dir.join("convergence.csv"))?;
    if conv.is_empty() {
        bail!("{} has no iterations", run_dir.join("convergence.csv").display());
    }
    let last = conv.last().unwrap().k;
    let scatter: Vec<io::CountRow> = read_rows(&run_dir.join(format!("scatter_{last}.csv")))?;
    let loocv_path = run_dir.join("loocv_curve.csv");
    let loocv: Option<Vec<LoocvRow>> = if loocv_path.is_file() { Some(read_rows(&loocv_path)?) } else { None };

    // render everything before writing anything
    let mut charts = vec![
        (
            "convergence.svg",
            svg::line_chart(
                "RMSE by iteration",
                "iteration",
                "RMSE (vehicles/day)",
                &conv.iter().map(|r| (r.k as f64, r.rmse)).collect::<Vec<_>>(),
                svg::Scale::Linear,
            ),
        ),
        (
            "mae_ratio.svg",
            svg::line_chart(
                "MAE ratio by iteration",
                "iteration",
                "MAE / mean observed",
                &conv.iter().map(|r| (r.k as f64, r.mae_ratio)).collect::<Vec<_>>(),
                svg::Scale::Linear,
            ),
        ),
        (
            "scatter.svg",
            svg::scatter_identity(
                &format!("Screenline counts, iteration {last}"),
                &scatter.iter().map(|r| (r.observed, r.simulated)).collect::<Vec<_>>(),
            ),
        ),
    ];
    if let Some(rows) = loocv.filter(|r| !r.is_empty()) {
        charts.push((
            "loocv.svg",
            svg::line_chart(
                "Cross-validated RMSE by penalty",
                "λ",
                "CV-RMSE",
                &rows.iter().map(|r| (r.lambda, r.cv_rmse)).collect::<Vec<_>>(),
                svg::Scale::Log,
            ),
        ));
    }
    fs::create_dir_all(out_dir)?;
    for (name, body) in charts {
        fs::write(out_dir.join(name), body)?;
    }
    println!("charts written to {}", out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, out_dir, write_config } => {
            run_synth(config.as_deref(), seed, &out_dir, write_config)
        }
        Command::Simulate { input, out_dir } => run_simulate(&input, &out_dir),
        Command::Loocv { input, tuning, out_dir } => run_loocv(&input, &tuning, &out_dir),
        Command::Calibrate { input, tuning, out_dir } => run_calibrate(&input, &tuning, &out_dir),
        Command::Report { run_dir, out_dir } => {
            let out = out_dir.unwrap_or_else(|| run_dir.clone());
            run_report(&run_dir, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
