//! Rendering run artefacts to CSV and text.
//!
//! Everything is rendered into memory first and written afterwards, so a
//! failure part-way through never leaves a half-populated output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::scenario::{DecoderSummary, RunReport};
use crate::error::Result;
use crate::metrics::MetricsReport;

/// Named files waiting to be written.
#[derive(Debug, Default, Clone)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Render a file with a writer callback.
    pub fn render<F>(&mut self, name: impl Into<String>, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Write every file into `dir`, creating it if needed. On failure the
    /// files written so far are removed again.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(e.into());
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// `key,value` provenance rows.
pub fn manifest(command: &str, config_hash: &str, seed: u64, extra: &[(&str, String)]) -> Vec<u8> {
    let mut s = String::from("key,value\n");
    let _ = writeln!(s, "command,{command}");
    let _ = writeln!(s, "config_hash,{config_hash}");
    let _ = writeln!(s, "seed,{seed}");
    for (k, v) in extra {
        let _ = writeln!(s, "{k},{v}");
    }
    s.into_bytes()
}

/// One row per replicate.
pub fn replicates_csv(report: &RunReport, out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replicate",
        "reference_rmse",
        "train_rmse",
        "test_rmse",
        "test_rmse_vs_ot",
        "G",
        "selected",
        "baseline_train_rmse",
        "baseline_test_rmse",
        "baseline_test_rmse_vs_ot",
        "baseline_G",
        "baseline_selected",
    ])?;
    let cols = |d: Option<&DecoderSummary>| -> [String; 5] {
        match d {
            Some(d) => [
                d.train_rmse.to_string(),
                d.test_rmse.to_string(),
                opt(d.test_rmse_vs_reference),
                d.estimate_g.to_string(),
                d.selected.len().to_string(),
            ],
            None => Default::default(),
        }
    };
    for r in &report.replicates {
        let mut row = vec![r.replicate.to_string(), r.reference_rmse.to_string()];
        row.extend(cols(Some(&r.primary)));
        row.extend(cols(r.baseline.as_ref()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `replicate,decoder,season,rmse`.
pub fn season_rmse_csv(report: &RunReport, out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "decoder", "season", "rmse"])?;
    for r in &report.replicates {
        let decoders = [("primary", Some(&r.primary)), ("baseline", r.baseline.as_ref())];
        for (name, d) in decoders {
            let Some(d) = d else { continue };
            for (season, rmse) in &d.season_rmse {
                w.write_record([r.replicate.to_string(), name.to_string(), season.to_string(), rmse.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Single-row cross-replicate summary.
pub fn aggregates_csv(report: &RunReport, out: &mut Vec<u8>) -> Result<()> {
    let a = &report.aggregates;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replicates",
        "mean_test_rmse",
        "sd_test_rmse",
        "mean_G",
        "mean_reference_rmse",
        "baseline_mean_test_rmse",
        "baseline_sd_test_rmse",
        "baseline_mean_G",
        "primary_lower_rmse",
        "primary_lower_G",
    ])?;
    let mut row = vec![
        a.replicates.to_string(),
        a.mean_test_rmse.to_string(),
        a.sd_test_rmse.to_string(),
        a.mean_g.to_string(),
        a.mean_reference_rmse.to_string(),
    ];
    match &a.baseline {
        Some(b) => row.extend([
            b.mean_test_rmse.to_string(),
            b.sd_test_rmse.to_string(),
            b.mean_g.to_string(),
            b.primary_lower_rmse.to_string(),
            b.primary_lower_g.to_string(),
        ]),
        None => row.extend(std::iter::repeat_n(String::new(), 5)),
    }
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

pub fn summary_text(report: &RunReport) -> String {
    let a = &report.aggregates;
    let mut s = String::new();
    let _ = writeln!(s, "{}", report.summary_line());
    let _ = writeln!(s, "config_hash {}", report.config_hash);
    let _ = writeln!(s, "seed {}", report.seed);
    let _ = writeln!(s, "aggregator {}", report.aggregator);
    let _ = writeln!(s, "replicates {}", a.replicates);
    let _ = writeln!(s, "test_rmse_sd {:.12}", a.sd_test_rmse);
    let _ = writeln!(s, "reference_rmse {:.12}", a.mean_reference_rmse);
    if let Some(b) = &a.baseline {
        let _ = writeln!(s, "baseline RMSE {:.12} G {:.12}", b.mean_test_rmse, b.mean_g);
        let _ = writeln!(
            s,
            "primary lower RMSE in {}/{} replicates, lower G in {}/{}",
            b.primary_lower_rmse, a.replicates, b.primary_lower_g, a.replicates
        );
    }
    s
}

/// The evaluate bundle.
pub fn run_outputs(report: &RunReport) -> Result<OutputSet> {
    let mut out = OutputSet::new();
    out.render("replicates.csv", |b| replicates_csv(report, b))?;
    out.render("season_rmse.csv", |b| season_rmse_csv(report, b))?;
    out.render("aggregates.csv", |b| aggregates_csv(report, b))?;
    out.add("summary.txt", summary_text(report).into_bytes());
    Ok(out)
}

/// `interval,E`, `feature,g_i,g_sys,g_rand`, `interval,G_v` and the
/// one-row `rmse,G,aggregator` summary.
pub fn metrics_outputs(metrics: &MetricsReport, rmse: f64) -> Result<OutputSet> {
    let mut out = OutputSet::new();
    out.render("error.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["interval", "E"])?;
        for (v, e) in &metrics.error {
            w.write_record([v.to_string(), opt(*e)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.render("feature_deceptiveness.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["feature", "g_i", "g_sys", "g_rand"])?;
        for f in &metrics.features {
            w.write_record([f.id.to_string(), f.g.to_string(), f.g_sys.to_string(), f.g_rand.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.render("estimate_deceptiveness.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["interval", "G_v"])?;
        for (v, g) in &metrics.estimate_g_series {
            w.write_record([v.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.render("metrics_summary.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["rmse", "G", "aggregator"])?;
        w.write_record([rmse.to_string(), metrics.estimate_g.to_string(), metrics.aggregator.to_string()])?;
        w.flush()?;
        Ok(())
    })?;
    out.render("season_rmse.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["season", "rmse"])?;
        for (k, r) in &metrics.rmse_by_season {
            w.write_record([k.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(out)
}

/// `interval,truth,ot,estimate`; absent values are empty fields.
pub fn plot_csv(
    truth: Option<&[f64]>,
    reference: &[Option<f64>],
    estimate: &[Option<f64>],
    out: &mut Vec<u8>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["interval", "truth", "ot", "estimate"])?;
    for v in 0..estimate.len() {
        w.write_record([
            v.to_string(),
            opt(truth.map(|t| t[v])),
            opt(reference.get(v).copied().flatten()),
            opt(estimate[v]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
