//! `survchan`: simulate surveillance channels, fit decoders, and score them.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survchan_core::harness::config::ScenarioConfig;
use survchan_core::harness::real::{fit_real, real_outputs};
use survchan_core::harness::report::{manifest, metrics_outputs, plot_csv, run_outputs, OutputSet};
use survchan_core::harness::scenario::{evaluate_decoder, run_replicate, run_scenario, simulate_replicate};
use survchan_core::harness::Execution;
use survchan_core::Error;

#[derive(Parser, Debug)]
#[command(name = "survchan", version, about = "Disease surveillance as a noisy channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one replicate and write the curve, clinic reports, traces and
    /// their signal/noise decompositions.
    Simulate(Common),
    /// Fit the trace decoder. Uses the [data] section when present, otherwise
    /// one simulated replicate.
    Fit(Common),
    /// Run every replicate and write the run bundle and summary.
    Evaluate(Common),
    /// Write error and deceptiveness tables for one replicate.
    Metrics(Common),
    /// Write the run bundle plus plot data and metrics for one replicate.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario config file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Master seed, overriding run.seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for replicates. Outputs do not depend on this.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
    /// Override a config key, e.g. --set run.replicates=20. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replicate used by simulate, fit, metrics and report.
    #[arg(long, value_name = "N", default_value_t = 0)]
    replicate: usize,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("run.seed={seed}"));
        }
        ScenarioConfig::load(&self.config, &overrides)
    }
}

fn stamp(out: &mut OutputSet, command: &str, config: &ScenarioConfig, replicate: Option<usize>) {
    let extra: Vec<(&str, String)> = replicate.map(|r| ("replicate", r.to_string())).into_iter().collect();
    out.add("manifest.csv", manifest(command, &config.hash(), config.run.seed, &extra));
}

fn check_replicate(config: &ScenarioConfig, replicate: usize) -> Result<(), Error> {
    if replicate >= config.run.replicates {
        return Err(Error::Config(format!(
            "--replicate {replicate} is outside 0..{}",
            config.run.replicates
        )));
    }
    Ok(())
}

fn simulate(args: &Common) -> Result<(), Error> {
    let config = args.load()?;
    check_replicate(&config, args.replicate)?;
    let data = simulate_replicate(&config, args.replicate)?;
    let mut out = OutputSet::new();
    out.render("curve.csv", |b| data.truth.write_csv(b))?;
    out.render("provider_reports.csv", |b| data.reports.write_csv(b))?;
    out.render("traditional_decomposition.csv", |b| data.trad.write_csv(b))?;
    out.render("features.csv", |b| data.internet.features.write_csv(b))?;
    out.render("decomposition.csv", |b| data.internet.write_csv(b))?;
    out.render("plot.csv", |b| {
        let clinic: Vec<Option<f64>> = data.clinic_estimate.clone();
        plot_csv(Some(data.truth.incidence()), &data.reference, &clinic, b)
    })?;
    stamp(&mut out, "simulate", &config, Some(args.replicate));
    out.write_to(&args.out)?;
    Ok(())
}

fn fit(args: &Common) -> Result<(), Error> {
    let config = args.load()?;
    let mut out = if config.data.is_some() {
        let fit = fit_real(&config)?;
        println!("train RMSE {:.12} G unavailable", fit.train_rmse);
        real_outputs(&fit, config.run.aggregator)?
    } else {
        check_replicate(&config, args.replicate)?;
        let data = simulate_replicate(&config, args.replicate)?;
        let outcome = evaluate_decoder(&config, &data, &config.filter)?;
        println!("train RMSE {:.12} selected {}", outcome.train_rmse, outcome.selected.len());
        let mut out = OutputSet::new();
        out.render("model.csv", |b| outcome.model.write_to(b))?;
        out.render("plot.csv", |b| {
            let estimate: Vec<Option<f64>> = outcome.estimate.iter().map(|&e| Some(e)).collect();
            plot_csv(Some(data.truth.incidence()), &data.reference, &estimate, b)
        })?;
        out
    };
    stamp(&mut out, "fit", &config, config.data.is_none().then_some(args.replicate));
    out.write_to(&args.out)?;
    Ok(())
}

fn evaluate(args: &Common) -> Result<(), Error> {
    let config = args.load()?;
    let report = run_scenario(&config, Execution::with_workers(args.workers))?;
    let mut out = run_outputs(&report)?;
    stamp(&mut out, "evaluate", &config, None);
    out.write_to(&args.out)?;
    println!("{}", report.summary_line());
    Ok(())
}

fn metrics(args: &Common) -> Result<(), Error> {
    let config = args.load()?;
    check_replicate(&config, args.replicate)?;
    let run = run_replicate(&config, args.replicate)?;
    let mut out = metrics_outputs(&run.report.metrics, run.primary.test_rmse)?;
    stamp(&mut out, "metrics", &config, Some(args.replicate));
    out.write_to(&args.out)?;
    println!("RMSE {:.12} G {:.12}", run.primary.test_rmse, run.primary.estimate_g);
    Ok(())
}

fn report(args: &Common) -> Result<(), Error> {
    let config = args.load()?;
    check_replicate(&config, args.replicate)?;
    let report = run_scenario(&config, Execution::with_workers(args.workers))?;
    let run = run_replicate(&config, args.replicate)?;
    let mut out = run_outputs(&report)?;
    let truth = run.data.truth.incidence();
    let as_opt = |e: &[f64]| -> Vec<Option<f64>> { e.iter().map(|&x| Some(x)).collect() };
    out.render("plot.csv", |b| plot_csv(Some(truth), &run.data.reference, &as_opt(&run.primary.estimate), b))?;
    if let Some(baseline) = &run.baseline {
        out.render("plot_baseline.csv", |b| {
            plot_csv(Some(truth), &run.data.reference, &as_opt(&baseline.estimate), b)
        })?;
    }
    out.render("plot_clinic.csv", |b| plot_csv(Some(truth), &run.data.reference, &run.data.clinic_estimate, b))?;
    let metrics = metrics_outputs(&run.report.metrics, run.primary.test_rmse)?;
    for name in metrics.names() {
        if name == "season_rmse.csv" {
            continue;
        }
        out.add(format!("replicate_{name}"), metrics.get(name).unwrap_or_default().to_vec());
    }
    stamp(&mut out, "report", &config, Some(args.replicate));
    out.write_to(&args.out)?;
    println!("{}", report.summary_line());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Metrics(a) => metrics(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("survchan: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
