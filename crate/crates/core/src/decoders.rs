//! Decoders: from received features to incidence estimates.
//!
//! Clinic reports decode by a population-weighted average. Trace features
//! decode by a two-step procedure: a filter keeps a few features that
//! correlate with the reference series and look relevant, then a ridge
//! regression maps them to the reference.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::internet::{FeatureDecomposition, FeatureId, FeatureTable};
use crate::traditional::{PopulationPartition, ProviderReports};

/// `sum_i w_i f_vi` with weights renormalised over providers that reported
/// visits in interval `v`. `None` where every provider is missing.
pub fn decode_weighted(reports: &ProviderReports, partition: &PopulationPartition) -> Result<Vec<Option<f64>>> {
    if reports.providers() != partition.providers() {
        return Err(invalid(format!(
            "reports cover {} providers, partition has {}",
            reports.providers(),
            partition.providers()
        )));
    }
    let weights = partition.weights();
    Ok((0..reports.intervals())
        .map(|v| {
            let (mut acc, mut mass) = (0.0, 0.0);
            let mut all_present = true;
            for (i, w) in weights.iter().enumerate() {
                match reports.feature(v, i) {
                    Some(f) => {
                        acc += w * f;
                        mass += w;
                    }
                    None => all_present = false,
                }
            }
            if mass == 0.0 {
                None
            } else if all_present {
                Some(acc)
            } else {
                Some(acc / mass)
            }
        })
        .collect())
}

/// Pearson correlation; 0 if either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "correlated series must be aligned");
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Minimum Pearson correlation with the reference.
    pub corr_threshold: f64,
    /// Minimum relevance score.
    pub relevance_threshold: f64,
    /// Keep at most this many features.
    pub max_features: usize,
    /// Ridge penalty on the slopes.
    pub ridge_lambda: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            corr_threshold: 0.5,
            relevance_threshold: 0.5,
            max_features: 10,
            ridge_lambda: 0.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.corr_threshold) {
            return Err(invalid("corr_threshold must lie in [-1, 1]"));
        }
        if !(0.0..=1.0).contains(&self.relevance_threshold) {
            return Err(invalid("relevance_threshold must lie in [0, 1]"));
        }
        if self.max_features == 0 {
            return Err(invalid("max_features must be at least 1"));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(invalid("ridge_lambda must be nonnegative"));
        }
        Ok(())
    }
}

/// Feature ids passing both gates, strongest correlation first (ties by
/// ascending id), truncated to `max_features`. `relevance[k]` belongs to
/// `table.ids()[k]`.
pub fn filter_features(
    table: &FeatureTable,
    reference: &[f64],
    relevance: &[f64],
    config: &FilterConfig,
) -> Result<Vec<FeatureId>> {
    config.validate()?;
    if table.intervals() != reference.len() && !table.ids().is_empty() {
        return Err(invalid(format!(
            "features span {} intervals, reference spans {}",
            table.intervals(),
            reference.len()
        )));
    }
    if relevance.len() != table.ids().len() {
        return Err(invalid("one relevance score per feature is required"));
    }
    let mut kept: Vec<(f64, FeatureId)> = table
        .ids()
        .iter()
        .zip(table.columns())
        .zip(relevance)
        .filter(|(_, &r)| r >= config.relevance_threshold)
        .map(|((&id, col), _)| (pearson(col, reference), id))
        .filter(|(rho, _)| *rho >= config.corr_threshold)
        .collect();
    kept.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    kept.truncate(config.max_features);
    Ok(kept.into_iter().map(|(_, id)| id).collect())
}

/// `estimate = intercept + sum beta_i f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    /// Coefficients in selection order.
    pub coefficients: Vec<(FeatureId, f64)>,
}

const INTERCEPT_KEY: &str = "__intercept__";

impl LinearModel {
    pub fn zero() -> Self {
        LinearModel {
            intercept: 0.0,
            coefficients: Vec::new(),
        }
    }

    pub fn selected(&self) -> Vec<FeatureId> {
        self.coefficients.iter().map(|(id, _)| *id).collect()
    }

    pub fn coefficient(&self, id: FeatureId) -> Option<f64> {
        self.coefficients.iter().find(|(i, _)| *i == id).map(|(_, b)| *b)
    }

    pub fn slope_norm_sq(&self) -> f64 {
        self.coefficients.iter().map(|(_, b)| b * b).sum()
    }

    /// `feature_id,beta` header, the intercept row, then one row per feature.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "feature_id,beta")?;
        writeln!(out, "{INTERCEPT_KEY},{:?}", self.intercept)?;
        for (id, b) in &self.coefficients {
            writeln!(out, "{id},{b:?}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut intercept = None;
        let mut coefficients = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line == "feature_id,beta") {
                continue;
            }
            let (key, value) = line
                .split_once(',')
                .ok_or_else(|| Error::ModelFormat(format!("line {}: expected key,value", n + 1)))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::ModelFormat(format!("line {}: bad number {value:?}", n + 1)))?;
            if !value.is_finite() {
                return Err(Error::ModelFormat(format!("line {}: non-finite value", n + 1)));
            }
            if key == INTERCEPT_KEY {
                if intercept.replace(value).is_some() {
                    return Err(Error::ModelFormat("intercept given twice".into()));
                }
            } else {
                let id: FeatureId = key
                    .trim()
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("line {}: bad feature id {key:?}", n + 1)))?;
                if coefficients.iter().any(|(i, _)| *i == id) {
                    return Err(Error::ModelFormat(format!("feature {id} given twice")));
                }
                coefficients.push((id, value));
            }
        }
        Ok(LinearModel {
            intercept: intercept.ok_or_else(|| Error::ModelFormat("missing intercept".into()))?,
            coefficients,
        })
    }
}

/// Ridge regression of `reference` on the `selected` columns of `table`.
///
/// Minimises `sum_v (ot_v - b0 - sum_i b_i f_vi)^2 + lambda * sum_i b_i^2`
/// with the intercept unpenalised. Solved on centred, unit-norm columns by
/// Cholesky factorisation; a zero-variance column gets a zero slope when
/// `lambda > 0`.
pub fn fit_linear(table: &FeatureTable, reference: &[f64], selected: &[FeatureId], lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("ridge lambda must be nonnegative"));
    }
    let n = reference.len();
    let p = selected.len();
    if n < p + 1 {
        return Err(invalid(format!(
            "{n} training intervals cannot fit {p} slopes and an intercept"
        )));
    }
    if let Some(v) = reference.iter().position(|y| !y.is_finite()) {
        return Err(Error::MissingTrainingValue(v));
    }
    let columns: Vec<&[f64]> = selected
        .iter()
        .map(|&id| table.column(id).ok_or(Error::MissingFeature(id)))
        .collect::<Result<_>>()?;
    for col in &columns {
        if col.len() != n {
            return Err(invalid("feature and reference lengths differ"));
        }
        if let Some(v) = col.iter().position(|x| !x.is_finite()) {
            return Err(Error::MissingTrainingValue(v));
        }
    }

    let nf = n as f64;
    let y_mean = reference.iter().sum::<f64>() / nf;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let scales: Vec<f64> = columns
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt())
        .collect();

    // Columns with zero variance carry no information about the slope.
    let active: Vec<usize> = (0..p).filter(|&j| scales[j] > 0.0).collect();
    if active.len() < p && lambda == 0.0 {
        return Err(Error::SingularMatrix);
    }

    let z = |j: usize, v: usize| (columns[j][v] - means[j]) / scales[j];
    let q = active.len();
    let mut gram = vec![0.0; q * q];
    let mut rhs = vec![0.0; q];
    for (a, &ja) in active.iter().enumerate() {
        for (b, &jb) in active.iter().enumerate().skip(a) {
            let dot: f64 = (0..n).map(|v| z(ja, v) * z(jb, v)).sum();
            gram[a * q + b] = dot;
            gram[b * q + a] = dot;
        }
        gram[a * q + a] += lambda / (scales[ja] * scales[ja]);
        rhs[a] = (0..n).map(|v| z(ja, v) * (reference[v] - y_mean)).sum();
    }
    let solution = cholesky_solve(&mut gram, &mut rhs, q)?;

    let mut slopes = vec![0.0; p];
    for (a, &j) in active.iter().enumerate() {
        slopes[j] = solution[a] / scales[j];
    }
    let intercept = y_mean - slopes.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let model = LinearModel {
        intercept,
        coefficients: selected.iter().copied().zip(slopes).collect(),
    };
    if !model.intercept.is_finite() || model.coefficients.iter().any(|(_, b)| !b.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    Ok(model)
}

/// In-place Cholesky solve of the symmetric positive definite system.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    const PIVOT_TOLERANCE: f64 = 1e-12;
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > PIVOT_TOLERANCE * scale) {
            return Err(Error::SingularMatrix);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b.to_vec())
}

/// Apply `model` to every interval of `table`. Estimates are not clamped.
pub fn predict(model: &LinearModel, table: &FeatureTable) -> Result<Vec<f64>> {
    let columns: Vec<(&[f64], f64)> = model
        .coefficients
        .iter()
        .map(|&(id, b)| table.column(id).map(|c| (c, b)).ok_or(Error::MissingFeature(id)))
        .collect::<Result<_>>()?;
    Ok((0..table.intervals())
        .map(|v| model.intercept + columns.iter().map(|(c, b)| b * c[v]).sum::<f64>())
        .collect())
}

/// Where the fitted intercept is booked when decomposing an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptPolicy {
    /// Counted as systematic noise.
    #[default]
    Systematic,
    /// Kept in a separate offset series that deceptiveness ignores.
    Offset,
}

/// Estimate split by the origin of its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateDecomposition {
    pub des: Vec<f64>,
    pub dens: Vec<f64>,
    pub denr: Vec<f64>,
    /// Intercept under [`InterceptPolicy::Offset`], zeros otherwise.
    pub offset: Vec<f64>,
}

impl EstimateDecomposition {
    pub fn total(&self, v: usize) -> f64 {
        self.des[v] + self.dens[v] + self.denr[v] + self.offset[v]
    }
}

pub fn decompose_estimate(
    model: &LinearModel,
    decomp: &FeatureDecomposition,
    policy: InterceptPolicy,
) -> Result<EstimateDecomposition> {
    let intervals = decomp.intervals();
    let mut out = EstimateDecomposition {
        des: vec![0.0; intervals],
        dens: vec![0.0; intervals],
        denr: vec![0.0; intervals],
        offset: vec![0.0; intervals],
    };
    match policy {
        InterceptPolicy::Systematic => out.dens.iter_mut().for_each(|x| *x = model.intercept),
        InterceptPolicy::Offset => out.offset.iter_mut().for_each(|x| *x = model.intercept),
    }
    for &(id, b) in &model.coefficients {
        let k = decomp.features.position(id).ok_or(Error::MissingFeature(id))?;
        for v in 0..intervals {
            out.des[v] += b * decomp.sig[k][v];
            out.dens[v] += b * decomp.ns[k][v];
            out.denr[v] += b * decomp.nr[k][v];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::EpidemicCurve;
    use crate::internet::{encode_internet, FeatureSpec, NoiseMode};
    use crate::rng::Substream;
    use crate::traditional::make_partition;
    use proptest::prelude::*;
    use rand::Rng;

    fn table(cols: Vec<Vec<f64>>) -> FeatureTable {
        FeatureTable::new((0..cols.len() as u32).collect(), cols).unwrap()
    }

    #[test]
    fn weighted_average_arithmetic() {
        let part = make_partition(2, 2, 0.0).unwrap();
        let reports = ProviderReports::new(2, vec![50, 25], vec![1, 1]).unwrap();
        let est = decode_weighted(&reports, &part).unwrap();
        assert!((est[0].unwrap() - 0.03).abs() < 1e-15);

        let one = make_partition(10, 1, 0.0).unwrap();
        let r = ProviderReports::new(1, vec![8, 4], vec![2, 1]).unwrap();
        assert_eq!(decode_weighted(&r, &one).unwrap(), vec![Some(0.25), Some(0.25)]);
    }

    #[test]
    fn weighted_average_renormalises_over_reporters() {
        let part = make_partition(100, 4, 0.0).unwrap();
        let reports = ProviderReports::new(4, vec![10, 0, 20, 0, 0, 0, 0, 0], vec![1, 0, 4, 0, 0, 0, 0, 0]).unwrap();
        let est = decode_weighted(&reports, &part).unwrap();
        assert!((est[0].unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(est[1], None);
    }

    #[test]
    fn pearson_zero_variance_is_zero() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 0.5).abs() < 1e-15);
    }

    fn cfg(corr: f64, rel: f64, k: usize) -> FilterConfig {
        FilterConfig {
            corr_threshold: corr,
            relevance_threshold: rel,
            max_features: k,
            ridge_lambda: 0.0,
        }
    }

    #[test]
    fn gates() {
        let ot: Vec<f64> = (0..20).map(|v| (v as f64 / 3.0).sin() + 2.0).collect();
        let feature: Vec<f64> = ot.iter().enumerate().map(|(v, x)| 10.0 * x + if v % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let rho = pearson(&feature, &ot);
        assert!(rho > 0.95);
        let t = table(vec![feature]);
        assert_eq!(filter_features(&t, &ot, &[1.0], &cfg(0.5, 0.5, 5)).unwrap(), vec![0]);
        assert!(filter_features(&t, &ot, &[0.0], &cfg(0.5, 0.5, 5)).unwrap().is_empty());
        assert_eq!(filter_features(&t, &ot, &[0.0], &cfg(0.5, 0.0, 5)).unwrap(), vec![0]);
    }

    #[test]
    fn filter_tie_break_and_truncation() {
        let ot = vec![1.0, 2.0, 3.0, 4.0];
        let t = FeatureTable::new(
            vec![9, 3, 5],
            vec![vec![2.0, 4.0, 6.0, 8.0], vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 2.0, 1.0]],
        )
        .unwrap();
        let ids = filter_features(&t, &ot, &[1.0; 3], &cfg(-1.0, 0.0, 2)).unwrap();
        assert_eq!(ids, vec![3, 9]);
    }

    /// Exhaustive re-scan: test every feature against both gates independently.
    fn brute_force_filter(cols: &[Vec<f64>], ids: &[u32], ot: &[f64], rel: &[f64], c: &FilterConfig) -> Vec<u32> {
        let mut passing = Vec::new();
        for k in 0..cols.len() {
            let n = ot.len() as f64;
            let mx: f64 = cols[k].iter().sum::<f64>() / n;
            let my: f64 = ot.iter().sum::<f64>() / n;
            let cov: f64 = cols[k].iter().zip(ot).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = cols[k].iter().map(|a| (a - mx).powi(2)).sum();
            let vy: f64 = ot.iter().map(|b| (b - my).powi(2)).sum();
            let rho = if vx == 0.0 || vy == 0.0 { 0.0 } else { cov / (vx * vy).sqrt() };
            if rho >= c.corr_threshold && rel[k] >= c.relevance_threshold {
                passing.push((rho, ids[k]));
            }
        }
        let mut out = Vec::new();
        while out.len() < c.max_features && !passing.is_empty() {
            let mut best = 0;
            for j in 1..passing.len() {
                let (r, id) = passing[j];
                let (rb, idb) = passing[best];
                if r > rb || (r == rb && id < idb) {
                    best = j;
                }
            }
            out.push(passing.remove(best).1);
        }
        out
    }

    #[test]
    fn filter_matches_brute_force_on_200_features() {
        let mut rng = Substream::new(21).rng();
        let ot: Vec<f64> = (0..60).map(|v| (v as f64 / 5.0).sin().max(0.0) + 0.1).collect();
        let cols: Vec<Vec<f64>> = (0..200)
            .map(|k| {
                let w: f64 = rng.random_range(-1.0..1.0);
                ot.iter().map(|x| w * x * 100.0 + rng.random_range(0.0..40.0) + k as f64).collect()
            })
            .collect();
        let ids: Vec<u32> = (0..200).map(|k| (k * 7 % 200) as u32).collect();
        let rel: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = FeatureTable::new(ids.clone(), cols.clone()).unwrap();
        let c = cfg(0.3, 0.4, 15);
        let got = filter_features(&t, &ot, &rel, &c).unwrap();
        assert_eq!(got, brute_force_filter(&cols, &ids, &ot, &rel, &c));
        assert_eq!(got.len(), 15);
    }

    #[test]
    fn exact_single_feature_fit() {
        let f: Vec<f64> = (0..10).map(|v| v as f64 * 1.5 + 1.0).collect();
        let ot: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let m = fit_linear(&table(vec![f.clone()]), &ot, &[0], 0.0).unwrap();
        assert!((m.coefficient(0).unwrap() - 2.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
        let pred = predict(&m, &table(vec![f])).unwrap();
        for (p, y) in pred.iter().zip(&ot) {
            assert!((p - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_features_give_mean() {
        let ot = vec![0.01, 0.03, 0.02, 0.06];
        let t = table(vec![vec![5.0; 4], vec![2.0; 4]]);
        let m = fit_linear(&t, &ot, &[0, 1], 0.1).unwrap();
        assert!((m.intercept - 0.03).abs() < 1e-15);
        assert_eq!(m.slope_norm_sq(), 0.0);
        assert!(matches!(fit_linear(&t, &ot, &[0, 1], 0.0), Err(Error::SingularMatrix)));
    }

    #[test]
    fn collinear_columns_are_singular() {
        let a: Vec<f64> = (0..8).map(|v| v as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x + 1.0).collect();
        let ot: Vec<f64> = a.iter().map(|x| x * 0.1).collect();
        assert!(matches!(
            fit_linear(&table(vec![a, b]), &ot, &[0, 1], 0.0),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn fit_preconditions() {
        let t = table(vec![vec![1.0, 2.0]]);
        assert!(fit_linear(&t, &[1.0, 2.0], &[0], 0.0).is_ok());
        assert!(fit_linear(&t, &[1.0], &[0], 0.0).is_err());
        assert!(matches!(fit_linear(&t, &[1.0, 2.0], &[4], 0.0), Err(Error::MissingFeature(4))));
        assert!(matches!(
            fit_linear(&t, &[1.0, f64::NAN], &[0], 0.0),
            Err(Error::MissingTrainingValue(1))
        ));
    }

    #[test]
    fn intercept_only_model() {
        let t = table(vec![]);
        let m = fit_linear(&t, &[1.0, 2.0, 6.0], &[], 0.0).unwrap();
        assert_eq!(m.intercept, 3.0);
        assert!(m.coefficients.is_empty());
    }

    #[test]
    fn predict_requires_selected_features() {
        let m = LinearModel {
            intercept: 0.0,
            coefficients: vec![(5, 1.0)],
        };
        assert!(matches!(predict(&m, &table(vec![vec![1.0]])), Err(Error::MissingFeature(5))));
        assert_eq!(predict(&LinearModel::zero(), &table(vec![vec![1.0, 2.0]])).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn decomposition_arithmetic() {
        let curve = EpidemicCurve::new(100, vec![0.02]).unwrap();
        // gain 1 -> sig = 2, baseline 1 -> ns = 1
        let spec = FeatureSpec::new(0, "x", 1.0, 1.0, 1.0);
        let d = encode_internet(&curve, &[spec], &[], Substream::new(0), NoiseMode::Deterministic).unwrap();
        let m = LinearModel {
            intercept: 0.0,
            coefficients: vec![(0, 1.0)],
        };
        let e = decompose_estimate(&m, &d, InterceptPolicy::Systematic).unwrap();
        assert_eq!((e.des[0], e.dens[0], e.denr[0]), (2.0, 1.0, 0.0));

        let off = LinearModel {
            intercept: 0.5,
            coefficients: vec![(0, 1.0)],
        };
        let e = decompose_estimate(&off, &d, InterceptPolicy::Offset).unwrap();
        assert_eq!((e.dens[0], e.offset[0]), (1.0, 0.5));
        assert_eq!(e.total(0), predict(&off, &d.features).unwrap()[0]);
    }

    #[test]
    fn model_file_round_trip_and_errors() {
        let m = LinearModel {
            intercept: -1.25e-3,
            coefficients: vec![(7, 3.3e-7), (2, -0.1)],
        };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("feature_id,beta\n__intercept__,-0.00125\n7,"));
        assert_eq!(LinearModel::read_from(buf.as_slice()).unwrap(), m);
        assert!(LinearModel::read_from("feature_id,beta\n1,2\n".as_bytes()).is_err());
        assert!(LinearModel::read_from("__intercept__,x\n".as_bytes()).is_err());
        assert!(LinearModel::read_from("__intercept__,1\n3,1\n3,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn model_file_round_trips(
            intercept in -1e3f64..1e3,
            coefs in proptest::collection::btree_map(0u32..1000, -1e6f64..1e6, 0..20),
        ) {
            let m = LinearModel { intercept, coefficients: coefs.into_iter().collect() };
            let mut buf = Vec::new();
            m.write_to(&mut buf).unwrap();
            prop_assert_eq!(LinearModel::read_from(buf.as_slice()).unwrap(), m);
        }

        #[test]
        fn filter_is_order_invariant(seed in 0u64..500) {
            let mut rng = Substream::new(seed).rng();
            let ot: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
            // Duplicate columns force exact correlation ties.
            let base: Vec<Vec<f64>> = (0..10)
                .map(|_| ot.iter().map(|x| x * rng.random_range(0.5..2.0) + rng.random_range(0.0..0.5)).collect())
                .collect();
            let mut cols = base.clone();
            cols.extend(base.iter().take(4).cloned());
            let ids: Vec<u32> = (0..cols.len() as u32).collect();
            let rel = vec![1.0; cols.len()];
            let c = cfg(0.0, 0.0, 6);
            let forward = filter_features(&FeatureTable::new(ids.clone(), cols.clone()).unwrap(), &ot, &rel, &c).unwrap();
            let mut rev_ids = ids.clone();
            rev_ids.reverse();
            let mut rev_cols = cols.clone();
            rev_cols.reverse();
            let backward = filter_features(&FeatureTable::new(rev_ids, rev_cols).unwrap(), &ot, &rel, &c).unwrap();
            prop_assert_eq!(forward, backward);
        }

        #[test]
        fn column_scaling_leaves_predictions_unchanged(seed in 0u64..200, scale in 1e-3f64..1e3) {
            let mut rng = Substream::new(seed).rng();
            let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..30).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let ot: Vec<f64> = (0..30).map(|v| 0.3 * cols[0][v] - 0.2 * cols[1][v] + rng.random_range(0.0..1.0)).collect();
            let t = table(cols.clone());
            let m = fit_linear(&t, &ot, &[0, 1, 2], 0.0).unwrap();
            let mut scaled = cols;
            scaled[1].iter_mut().for_each(|x| *x *= scale);
            let ts = table(scaled);
            let ms = fit_linear(&ts, &ot, &[0, 1, 2], 0.0).unwrap();
            let (a, b) = (predict(&m, &t).unwrap(), predict(&ms, &ts).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-8);
            }
            prop_assert!((ms.coefficient(1).unwrap() * scale - m.coefficient(1).unwrap()).abs() <= 1e-8 * (1.0 + m.coefficient(1).unwrap().abs()));
        }
    }
}
