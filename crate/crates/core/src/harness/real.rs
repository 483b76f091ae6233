//! Fitting the trace decoder to user-supplied weekly series.
//!
//! Real traces cannot be decomposed into signal and noise, so no
//! deceptiveness is reported; the relevance table serves only as a ranking
//! aid and as the filter's relevance gate.

use std::collections::HashMap;
use std::path::Path;

use chrono::IsoWeek;

use super::config::{DataSection, ScenarioConfig};
use super::ingest::{ingest_series_csv, parse_week, Gap, IngestedSeries, SeriesSchema};
use crate::decoders::{filter_features, fit_linear, pearson, predict, LinearModel};
use crate::error::{Error, Result};
use crate::internet::{FeatureId, FeatureTable};
use super::report::{plot_csv, OutputSet};
use crate::metrics::{rmse_between, Aggregator};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeature {
    pub id: FeatureId,
    pub name: String,
    pub relevance: f64,
    /// Training correlation with the reference.
    pub correlation: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct RealFit {
    pub weeks: Vec<IsoWeek>,
    /// Indexed by feature id.
    pub feature_names: Vec<String>,
    /// Reference aligned to the feature weeks.
    pub reference: Vec<Option<f64>>,
    pub train_rows: Vec<usize>,
    pub model: LinearModel,
    pub estimate: Vec<f64>,
    pub train_rmse: f64,
    pub ranking: Vec<RankedFeature>,
    pub feature_gaps: Vec<Gap>,
    pub reference_gaps: Vec<Gap>,
}

fn header(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    })?;
    let header = reader.headers().map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        row: 1,
        message: e.to_string(),
    })?;
    Ok(header.iter().map(|h| h.trim().to_string()).collect())
}

fn load_relevance(path: &Path) -> Result<HashMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })?;
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |m: String| Error::Ingest {
            path: path.to_path_buf(),
            row: line,
            message: m,
        };
        let name = record.get(0).ok_or_else(|| bad("missing feature name".into()))?;
        let value: f64 = record
            .get(1)
            .and_then(|r| r.parse().ok())
            .filter(|r: &f64| (0.0..=1.0).contains(r))
            .ok_or_else(|| bad(format!("relevance for `{name}` must be a number in [0, 1]")))?;
        if out.insert(name.to_string(), value).is_some() {
            return Err(bad(format!("feature `{name}` listed twice")));
        }
    }
    Ok(out)
}

fn load_series(data: &DataSection) -> Result<(IngestedSeries, IngestedSeries)> {
    let names: Vec<String> = header(&data.features_csv)?
        .into_iter()
        .filter(|h| *h != data.date_column)
        .collect();
    if names.is_empty() {
        return Err(Error::Ingest {
            path: data.features_csv.clone(),
            row: 1,
            message: "no feature columns besides the date".into(),
        });
    }
    let features = ingest_series_csv(
        &data.features_csv,
        &SeriesSchema {
            date_column: data.date_column.clone(),
            value_columns: names,
        },
    )?;
    let reference = ingest_series_csv(
        &data.reference_csv,
        &SeriesSchema {
            date_column: data.date_column.clone(),
            value_columns: vec![data.reference_column.clone()],
        },
    )?;
    Ok((features, reference))
}

pub fn fit_real(config: &ScenarioConfig) -> Result<RealFit> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("real-data fitting needs a [data] section".into()))?;
    let (features, reference_series) = load_series(data)?;
    let cutoff = match &data.train_until {
        Some(t) => Some(parse_week(t).ok_or_else(|| Error::Config(format!("data.train_until `{t}` is not a date")))?),
        None => None,
    };

    let by_week: HashMap<(i32, u32), f64> = reference_series
        .weeks
        .iter()
        .zip(reference_series.columns[0].1.iter())
        .map(|(w, &x)| ((w.year(), w.week()), x))
        .collect();
    let reference: Vec<Option<f64>> = features
        .weeks
        .iter()
        .map(|w| by_week.get(&(w.year(), w.week())).copied())
        .collect();
    let train_rows: Vec<usize> = (0..features.len())
        .filter(|&v| reference[v].is_some() && cutoff.is_none_or(|c| features.weeks[v] <= c))
        .collect();
    if train_rows.len() < 3 {
        return Err(Error::Config(format!(
            "only {} weeks have both reference and feature values for training",
            train_rows.len()
        )));
    }

    let feature_names: Vec<String> = features.columns.iter().map(|(n, _)| n.clone()).collect();
    let ids: Vec<FeatureId> = (0..feature_names.len() as FeatureId).collect();
    let table = FeatureTable::new(ids.clone(), features.columns.iter().map(|(_, c)| c.clone()).collect())?;
    let relevance_table = match &data.relevance_csv {
        Some(p) => load_relevance(p)?,
        None => HashMap::new(),
    };
    let relevance: Vec<f64> = feature_names
        .iter()
        .map(|n| relevance_table.get(n).copied().unwrap_or(1.0))
        .collect();

    let train_table = table.select_intervals(&train_rows);
    let target: Vec<f64> = train_rows.iter().map(|&v| reference[v].expect("training rows have a reference")).collect();
    let selected = filter_features(&train_table, &target, &relevance, &config.filter)?;
    let model = fit_linear(&train_table, &target, &selected, config.filter.ridge_lambda)?;
    let estimate = predict(&model, &table)?;
    let fitted: Vec<f64> = train_rows.iter().map(|&v| estimate[v]).collect();
    let train_rmse = rmse_between(&fitted, &target);

    let mut ranking: Vec<RankedFeature> = ids
        .iter()
        .map(|&id| RankedFeature {
            id,
            name: feature_names[id as usize].clone(),
            relevance: relevance[id as usize],
            correlation: pearson(&train_table.columns()[id as usize], &target),
            selected: selected.contains(&id),
        })
        .collect();
    ranking.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then(a.id.cmp(&b.id)));

    Ok(RealFit {
        weeks: features.weeks.clone(),
        feature_names,
        reference,
        train_rows,
        model,
        estimate,
        train_rmse,
        ranking,
        feature_gaps: features.gaps.clone(),
        reference_gaps: reference_series.gaps,
    })
}

/// Model, ranking and plot data for a real-data fit. Deceptiveness is
/// reported as unavailable.
pub fn real_outputs(fit: &RealFit, aggregator: Aggregator) -> Result<OutputSet> {
    let mut out = OutputSet::new();
    out.render("model.csv", |b| fit.model.write_to(b))?;
    out.render("feature_names.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["feature_id", "name"])?;
        for (id, name) in fit.feature_names.iter().enumerate() {
            w.write_record([id.to_string(), name.clone()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.render("weeks.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["interval", "week", "train"])?;
        for (v, week) in fit.weeks.iter().enumerate() {
            let train = if fit.train_rows.binary_search(&v).is_ok() { "1" } else { "0" };
            w.write_record([v.to_string(), format!("{}-W{:02}", week.year(), week.week()), train.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.render("plot.csv", |b| {
        let estimate: Vec<Option<f64>> = fit.estimate.iter().map(|&e| Some(e)).collect();
        plot_csv(None, &fit.reference, &estimate, b)
    })?;
    out.render("relevance_ranking.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["feature_id", "name", "relevance", "correlation", "selected"])?;
        for r in &fit.ranking {
            w.write_record([
                r.id.to_string(),
                r.name.clone(),
                r.relevance.to_string(),
                r.correlation.to_string(),
                u8::from(r.selected).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.add(
        "metrics_summary.csv",
        format!("rmse,G,aggregator\n{},unavailable,{aggregator}\n", fit.train_rmse).into_bytes(),
    );
    Ok(out)
}
