//! Error and deceptiveness.
//!
//! Deceptiveness of a value with signal, systematic-noise and random-noise
//! parts is the share of its magnitude that comes from noise:
//! `(|ns| + |nr|) / (|sig| + |ns| + |nr|)`, with 0 for an all-zero cell.
//! Per-feature and per-estimate figures aggregate the per-interval values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::internet::{FeatureDecomposition, FeatureId};
use crate::traditional::TradDecomposition;

/// Reduction of per-interval deceptiveness to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Max,
    Mean,
    /// 95th percentile, nearest rank.
    P95,
}

impl Aggregator {
    /// Aggregate `values`; 0 for an empty slice.
    pub fn apply(self, values: &[f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        match self {
            Aggregator::Max => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::P95 => {
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                let rank = (0.95 * sorted.len() as f64).ceil() as usize;
                sorted[rank.clamp(1, sorted.len()) - 1]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Max => "max",
            Aggregator::Mean => "mean",
            Aggregator::P95 => "p95",
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregator::Max),
            "mean" => Ok(Aggregator::Mean),
            "p95" => Ok(Aggregator::P95),
            other => Err(invalid(format!("unknown aggregator {other:?}"))),
        }
    }
}

/// How the two noise terms enter the numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumeratorPolicy {
    /// `|ns| + |nr|`: offsetting noise still counts.
    #[default]
    SumOfAbs,
    /// `|ns + nr|`: what is computable when only the total noise is known.
    AbsOfSum,
}

pub fn cell_deceptiveness(sig: f64, ns: f64, nr: f64, policy: NumeratorPolicy) -> f64 {
    let noise = match policy {
        NumeratorPolicy::SumOfAbs => ns.abs() + nr.abs(),
        NumeratorPolicy::AbsOfSum => (ns + nr).abs(),
    };
    ratio(noise, sig.abs() + noise)
}

/// Systematic and random parts of a cell's deceptiveness; they share the
/// denominator so `g_sys + g_rand == g` under [`NumeratorPolicy::SumOfAbs`].
pub fn cell_split(sig: f64, ns: f64, nr: f64) -> (f64, f64) {
    let denom = sig.abs() + ns.abs() + nr.abs();
    (ratio(ns.abs(), denom), ratio(nr.abs(), denom))
}

fn ratio(num: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        0.0
    } else {
        (num / denom).clamp(0.0, 1.0)
    }
}

/// `E_v = estimate - truth`; missing where the estimate is missing.
pub fn error_series(estimate: &[Option<f64>], truth: &[f64]) -> Result<Vec<Option<f64>>> {
    if estimate.len() != truth.len() {
        return Err(invalid(format!(
            "estimate has {} intervals, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, s)| e.map(|e| e - s))
        .collect())
}

/// Root mean square over the present values; `None` if none are present.
pub fn rmse(errors: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = errors.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    Some((present.iter().map(|e| e * e).sum::<f64>() / present.len() as f64).sqrt())
}

/// RMSE between two complete series.
pub fn rmse_between(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDeceptiveness {
    /// `g[k][v]` for feature column `k`.
    pub cells: Vec<Vec<f64>>,
    /// Aggregated per feature.
    pub per_feature: Vec<f64>,
}

/// Deceptiveness of every internet feature cell, aggregated per feature over
/// the listed intervals (all intervals when `intervals` is `None`).
pub fn feature_deceptiveness(
    decomp: &FeatureDecomposition,
    aggregator: Aggregator,
    policy: NumeratorPolicy,
    intervals: Option<&[usize]>,
) -> FeatureDeceptiveness {
    let cells: Vec<Vec<f64>> = (0..decomp.ids().len())
        .map(|k| {
            (0..decomp.intervals())
                .map(|v| cell_deceptiveness(decomp.sig[k][v], decomp.ns[k][v], decomp.nr[k][v], policy))
                .collect()
        })
        .collect();
    let per_feature = cells
        .iter()
        .map(|g| aggregator.apply(&pick(g, intervals)))
        .collect();
    FeatureDeceptiveness { cells, per_feature }
}

/// Aggregated systematic and random deceptiveness per feature.
pub fn deceptiveness_split(
    decomp: &FeatureDecomposition,
    aggregator: Aggregator,
    intervals: Option<&[usize]>,
) -> (Vec<f64>, Vec<f64>) {
    (0..decomp.ids().len())
        .map(|k| {
            let (sys, rand): (Vec<f64>, Vec<f64>) = (0..decomp.intervals())
                .map(|v| cell_split(decomp.sig[k][v], decomp.ns[k][v], decomp.nr[k][v]))
                .unzip();
            (
                aggregator.apply(&pick(&sys, intervals)),
                aggregator.apply(&pick(&rand, intervals)),
            )
        })
        .unzip()
}

fn pick(values: &[f64], intervals: Option<&[usize]>) -> Vec<f64> {
    match intervals {
        Some(idx) => idx.iter().map(|&v| values[v]).collect(),
        None => values.to_vec(),
    }
}

/// `G_v` per interval and its aggregate.
pub fn estimate_deceptiveness(
    des: &[f64],
    dens: &[f64],
    denr: &[f64],
    aggregator: Aggregator,
) -> Result<(Vec<f64>, f64)> {
    if des.len() != dens.len() || des.len() != denr.len() {
        return Err(invalid("estimate components differ in length"));
    }
    let series: Vec<f64> = des
        .iter()
        .zip(dens)
        .zip(denr)
        .map(|((s, n), r)| cell_deceptiveness(*s, *n, *r, NumeratorPolicy::SumOfAbs))
        .collect();
    let total = aggregator.apply(&series);
    Ok((series, total))
}

/// Clinic-feature deceptiveness from the observed fraction alone:
/// `|f - sig| / (sig + |f - sig|)`. Missing cells stay missing.
pub fn trad_feature_deceptiveness(decomp: &TradDecomposition) -> Vec<Option<f64>> {
    decomp
        .cells()
        .iter()
        .map(|c| c.observed.map(|o| trad_cell_deceptiveness(c.sig, o.f)))
        .collect()
}

pub fn trad_cell_deceptiveness(sig: f64, f: f64) -> f64 {
    let noise = (f - sig).abs();
    ratio(noise, sig + noise)
}

/// Per-replicate metrics for one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Error per evaluated interval.
    pub error: Vec<(usize, Option<f64>)>,
    /// RMSE against the truth per evaluated season.
    pub rmse_by_season: Vec<(usize, f64)>,
    pub features: Vec<FeatureMetrics>,
    /// `G_v` per evaluated interval.
    pub estimate_g_series: Vec<(usize, f64)>,
    pub estimate_g: f64,
    pub aggregator: Aggregator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMetrics {
    pub id: FeatureId,
    pub g: f64,
    pub g_sys: f64,
    pub g_rand: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn error_sign_convention() {
        let e = error_series(&[Some(0.025), Some(0.02), Some(0.01), None], &[0.02, 0.02, 0.02, 0.02]).unwrap();
        assert!((e[0].unwrap() - 0.005).abs() < 1e-15);
        assert_eq!(e[1], Some(0.0));
        assert!((e[2].unwrap() + 0.01).abs() < 1e-15);
        assert_eq!(e[3], None);
        assert!(error_series(&[Some(1.0)], &[]).is_err());
    }

    #[test]
    fn feature_anchor_values() {
        let p = NumeratorPolicy::SumOfAbs;
        assert_eq!(cell_deceptiveness(3.0, 0.0, 0.0, p), 0.0);
        assert_eq!(cell_deceptiveness(0.0, 5.0, 0.0, p), 1.0);
        assert_eq!(cell_deceptiveness(2.0, 1.0, 1.0, p), 0.5);
        assert_eq!(cell_deceptiveness(0.0, 0.0, 0.0, p), 0.0);
        assert_eq!(cell_split(2.0, 1.0, 1.0), (0.25, 0.25));
        assert_eq!(cell_split(0.0, 5.0, 0.0), (1.0, 0.0));
    }

    #[test]
    fn estimate_anchor_values() {
        let agg = Aggregator::Max;
        let (_, g) = estimate_deceptiveness(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], agg).unwrap();
        assert_eq!(g, 0.0);
        let (_, g) = estimate_deceptiveness(&[0.0, 0.0], &[0.0, 0.3], &[0.0, 0.0], agg).unwrap();
        assert_eq!(g, 1.0);
        let (series, g) =
            estimate_deceptiveness(&[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], agg).unwrap();
        assert_eq!(series, vec![1.0 / 3.0, 0.0, 0.0]);
        assert_eq!(g, 1.0 / 3.0);
    }

    #[test]
    fn trad_anchor_values() {
        assert_eq!(trad_cell_deceptiveness(0.02, 0.02), 0.0);
        assert_eq!(trad_cell_deceptiveness(0.0, 0.04), 1.0);
        assert!((trad_cell_deceptiveness(0.02, 0.03) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(trad_cell_deceptiveness(0.0, 0.0), 0.0);
    }

    #[test]
    fn aggregators() {
        let v: Vec<f64> = (1..=20).map(|x| x as f64 / 20.0).collect();
        assert_eq!(Aggregator::Max.apply(&v), 1.0);
        assert!((Aggregator::Mean.apply(&v) - 0.525).abs() < 1e-12);
        assert_eq!(Aggregator::P95.apply(&v), 0.95);
        assert_eq!(Aggregator::Max.apply(&[]), 0.0);
        assert_eq!("p95".parse::<Aggregator>().unwrap(), Aggregator::P95);
        assert!("median".parse::<Aggregator>().is_err());
    }

    #[test]
    fn rmse_skips_missing() {
        assert_eq!(rmse(&[Some(3.0), None, Some(-4.0)]), Some((12.5f64).sqrt()));
        assert_eq!(rmse(&[None]), None);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), -1e6f64..1e6]
    }

    proptest! {
        #[test]
        fn deceptiveness_in_unit_interval(sig in finite(), ns in finite(), nr in finite()) {
            for p in [NumeratorPolicy::SumOfAbs, NumeratorPolicy::AbsOfSum] {
                let g = cell_deceptiveness(sig, ns, nr, p);
                prop_assert!((0.0..=1.0).contains(&g));
            }
            let (s, r) = cell_split(sig, ns, nr);
            prop_assert!((s + r - cell_deceptiveness(sig, ns, nr, NumeratorPolicy::SumOfAbs)).abs() <= 1e-12);
        }

        #[test]
        fn scale_invariant(sig in finite(), ns in finite(), nr in finite(), c in 1e-3f64..1e3) {
            let p = NumeratorPolicy::SumOfAbs;
            let a = cell_deceptiveness(sig, ns, nr, p);
            let b = cell_deceptiveness(c * sig, c * ns, c * nr, p);
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_systematic_noise(sig in finite(), ns in finite(), nr in finite(), extra in 0.0f64..1e6) {
            let p = NumeratorPolicy::SumOfAbs;
            let bigger = ns.abs() + extra;
            prop_assert!(cell_deceptiveness(sig, bigger, nr, p) >= cell_deceptiveness(sig, ns, nr, p) - 1e-15);
        }

        #[test]
        fn three_term_dominates_two_term_on_offsetting_noise(
            sig in 0.0f64..1.0, ns in 0.0f64..1.0, nr in -1.0f64..0.0,
        ) {
            let three = cell_deceptiveness(sig, ns, nr, NumeratorPolicy::SumOfAbs);
            let two = trad_cell_deceptiveness(sig, sig + ns + nr);
            prop_assert!(three >= two - 1e-15);
        }

        #[test]
        fn estimate_g_bounded(
            parts in proptest::collection::vec((finite(), finite(), finite()), 1..40)
        ) {
            let des: Vec<f64> = parts.iter().map(|p| p.0).collect();
            let dens: Vec<f64> = parts.iter().map(|p| p.1).collect();
            let denr: Vec<f64> = parts.iter().map(|p| p.2).collect();
            for agg in [Aggregator::Max, Aggregator::Mean, Aggregator::P95] {
                let (series, g) = estimate_deceptiveness(&des, &dens, &denr, agg).unwrap();
                prop_assert!(series.iter().all(|x| (0.0..=1.0).contains(x)));
                prop_assert!((0.0..=1.0).contains(&g));
            }
        }
    }
}
