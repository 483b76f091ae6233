//! Internet activity-trace channel.
//!
//! Each feature counts one class of activity traces (searches for a query,
//! requests for an article). Traces come from infections through a per-feature
//! gain, from a constant baseline, and from confounding processes such as
//! media coverage or an unrelated seasonal activity. Counts are in traces;
//! converting to incidence is the decoder's job.

use std::io::Write;

use rand_distr::{Distribution, Poisson};

use crate::epidemic::EpidemicCurve;
use crate::error::{invalid, Error, Result};
use crate::rng::{domain, Substream};

pub type FeatureId = u32;
pub type ConfoundId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub id: FeatureId,
    pub name: String,
    /// Traces per new infection.
    pub gain: f64,
    /// Traces per interval unrelated to infection.
    pub baseline: f64,
    /// Traces per unit of each confound.
    pub confound_coupling: Vec<(ConfoundId, f64)>,
    /// Semantic relatedness to the disease, in [0, 1].
    pub relevance: f64,
    /// Per-interval multiplier on `gain`.
    pub encoding_drift: Option<Vec<f64>>,
    /// Strength of suggestion feedback from last interval's count.
    pub feedback_strength: f64,
    /// Whether feedback also amplifies the systematic (non-infection) traces.
    pub feedback_on_noise: bool,
}

impl FeatureSpec {
    pub fn new(id: FeatureId, name: impl Into<String>, gain: f64, baseline: f64, relevance: f64) -> Self {
        FeatureSpec {
            id,
            name: name.into(),
            gain,
            baseline,
            confound_coupling: Vec::new(),
            relevance,
            encoding_drift: None,
            feedback_strength: 0.0,
            feedback_on_noise: false,
        }
    }

    pub fn with_coupling(mut self, confound: ConfoundId, traces_per_unit: f64) -> Self {
        self.confound_coupling.push((confound, traces_per_unit));
        self
    }

    fn validate(&self, intervals: usize) -> Result<()> {
        let bad = |what: &str| invalid(format!("feature {}: {what}", self.id));
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(bad("gain must be nonnegative"));
        }
        if !(self.baseline >= 0.0 && self.baseline.is_finite()) {
            return Err(bad("baseline must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.relevance) {
            return Err(bad("relevance must lie in [0, 1]"));
        }
        if !(self.feedback_strength >= 0.0 && self.feedback_strength.is_finite()) {
            return Err(bad("feedback strength must be nonnegative"));
        }
        if self.confound_coupling.iter().any(|(_, c)| !(*c >= 0.0 && c.is_finite())) {
            return Err(bad("confound coupling must be nonnegative"));
        }
        if let Some(d) = &self.encoding_drift {
            if d.len() != intervals {
                return Err(bad("encoding drift length differs from curve length"));
            }
            if d.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return Err(bad("encoding drift multipliers must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfoundKind {
    Seasonal,
    MediaBurst,
    LinearTrend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundProcess {
    pub id: ConfoundId,
    pub kind: ConfoundKind,
    pub series: Vec<f64>,
}

/// Constant `magnitude` on `[start, start + duration)`, zero elsewhere.
pub fn make_media_burst(
    id: ConfoundId,
    start: usize,
    duration: usize,
    magnitude: f64,
    intervals: usize,
) -> Result<ConfoundProcess> {
    if duration == 0 {
        return Err(invalid("media burst window is empty"));
    }
    if start + duration > intervals {
        return Err(invalid(format!(
            "media burst [{start}, {}) extends past {intervals} intervals",
            start + duration
        )));
    }
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(invalid("media burst magnitude must be nonnegative"));
    }
    let series = (0..intervals)
        .map(|v| if (start..start + duration).contains(&v) { magnitude } else { 0.0 })
        .collect();
    Ok(ConfoundProcess {
        id,
        kind: ConfoundKind::MediaBurst,
        series,
    })
}

/// One Gaussian bump per season, peaking at the given (fractional) week of
/// each season with height `magnitude`. Models activity with its own season,
/// such as a sport.
pub fn make_seasonal_confound(
    id: ConfoundId,
    weeks_per_season: usize,
    peaks: &[f64],
    width: f64,
    magnitude: f64,
) -> Result<ConfoundProcess> {
    if !(width > 0.0) || !(magnitude >= 0.0) {
        return Err(invalid("seasonal confound needs positive width and nonnegative magnitude"));
    }
    let series = peaks
        .iter()
        .flat_map(|&peak| {
            (0..weeks_per_season).map(move |t| {
                let z = (t as f64 - peak) / width;
                magnitude * (-0.5 * z * z).exp()
            })
        })
        .collect();
    Ok(ConfoundProcess {
        id,
        kind: ConfoundKind::Seasonal,
        series,
    })
}

/// `intercept + slope * v`, clamped at zero.
pub fn make_linear_trend(id: ConfoundId, intervals: usize, intercept: f64, slope: f64) -> ConfoundProcess {
    ConfoundProcess {
        id,
        kind: ConfoundKind::LinearTrend,
        series: (0..intervals)
            .map(|v| (intercept + slope * v as f64).max(0.0))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftKind {
    /// Gain multiplier `1 + rate * v`.
    LinearGrowth { rate: f64 },
    /// Gain multiplied by `factor` from interval `at` onward.
    Step { at: usize, factor: f64 },
    /// Gain multiplier `1 + strength * f[v-1] / max(f[..v])`, resolved during encoding.
    Feedback { strength: f64 },
}

/// Return `spec` with the drift of `kind` composed onto any existing drift.
pub fn apply_encoding_drift(spec: &FeatureSpec, kind: DriftKind, intervals: usize) -> Result<FeatureSpec> {
    let mut out = spec.clone();
    let multipliers: Vec<f64> = match kind {
        DriftKind::LinearGrowth { rate } => (0..intervals).map(|v| 1.0 + rate * v as f64).collect(),
        DriftKind::Step { at, factor } => (0..intervals)
            .map(|v| if v >= at { factor } else { 1.0 })
            .collect(),
        DriftKind::Feedback { strength } => {
            if !(strength >= 0.0 && strength.is_finite()) {
                return Err(invalid(format!("feedback strength {strength} must be nonnegative")));
            }
            out.feedback_strength = strength;
            return Ok(out);
        }
    };
    if let Some((v, m)) = multipliers.iter().enumerate().find(|(_, m)| !(**m >= 0.0 && m.is_finite())) {
        return Err(invalid(format!(
            "drift {kind:?} gives multiplier {m} at interval {v}"
        )));
    }
    out.encoding_drift = Some(match out.encoding_drift.take() {
        Some(existing) if existing.len() == intervals => {
            existing.iter().zip(&multipliers).map(|(a, b)| a * b).collect()
        }
        Some(_) => return Err(invalid("existing drift length differs from intervals")),
        None => multipliers,
    });
    Ok(out)
}

/// Observable features keyed by id, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<FeatureId>,
    columns: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(ids: Vec<FeatureId>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != columns.len() {
            return Err(invalid("feature ids and columns differ in number"));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(invalid("feature columns differ in length"));
            }
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate feature id"));
        }
        Ok(FeatureTable { ids, columns })
    }

    pub fn ids(&self) -> &[FeatureId] {
        &self.ids
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn intervals(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn position(&self, id: FeatureId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn column(&self, id: FeatureId) -> Option<&[f64]> {
        self.position(id).map(|k| self.columns[k].as_slice())
    }

    /// Keep only the listed intervals, in the given order.
    pub fn select_intervals(&self, intervals: &[usize]) -> FeatureTable {
        FeatureTable {
            ids: self.ids.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| intervals.iter().map(|&v| c[v]).collect())
                .collect(),
        }
    }

    /// Wide CSV: `interval,feat_<id>,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["interval".to_string()];
        header.extend(self.ids.iter().map(|id| format!("feat_{id}")));
        w.write_record(&header)?;
        for v in 0..self.intervals() {
            let mut row = vec![v.to_string()];
            row.extend(self.columns.iter().map(|c| c[v].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How the random component of each trace count is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Count drawn as Poisson around signal + systematic traces.
    #[default]
    Poisson,
    /// Count equals its expectation; random noise is identically zero.
    Deterministic,
}

/// Per-feature columns of the exact trace decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDecomposition {
    pub features: FeatureTable,
    pub sig: Vec<Vec<f64>>,
    pub ns: Vec<Vec<f64>>,
    pub nr: Vec<Vec<f64>>,
    /// Realised gain multiplier (static drift times feedback).
    pub drift: Vec<Vec<f64>>,
}

impl FeatureDecomposition {
    pub fn ids(&self) -> &[FeatureId] {
        self.features.ids()
    }

    pub fn intervals(&self) -> usize {
        self.features.intervals()
    }

    pub fn f(&self) -> &[Vec<f64>] {
        self.features.columns()
    }

    /// Long CSV: `interval,feature,sig,ns,nr,f`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interval", "feature", "sig", "ns", "nr", "f"])?;
        for v in 0..self.intervals() {
            for (k, id) in self.ids().iter().enumerate() {
                w.write_record([
                    v.to_string(),
                    id.to_string(),
                    self.sig[k][v].to_string(),
                    self.ns[k][v].to_string(),
                    self.nr[k][v].to_string(),
                    self.f()[k][v].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

const MAX_POISSON_MEAN: f64 = 4_503_599_627_370_496.0; // 2^52

/// Pass `curve` through the trace channel. Feature `k` at interval `v` draws
/// from substream `[INTERNET, v, id]` of `stream`.
pub fn encode_internet(
    curve: &EpidemicCurve,
    specs: &[FeatureSpec],
    confounds: &[ConfoundProcess],
    stream: Substream,
    mode: NoiseMode,
) -> Result<FeatureDecomposition> {
    let intervals = curve.len();
    for c in confounds {
        if c.series.len() != intervals {
            return Err(invalid(format!(
                "confound {} has {} values for {intervals} intervals",
                c.id,
                c.series.len()
            )));
        }
        if c.series.iter().any(|m| !(*m >= 0.0)) {
            return Err(invalid(format!("confound {} has a negative value", c.id)));
        }
    }
    let confound = |id: ConfoundId| confounds.iter().find(|c| c.id == id);
    for spec in specs {
        spec.validate(intervals)?;
        if let Some((missing, _)) = spec.confound_coupling.iter().find(|(c, _)| confound(*c).is_none()) {
            return Err(invalid(format!(
                "feature {} references unknown confound {missing}",
                spec.id
            )));
        }
    }
    let new_infections: Vec<f64> = (0..intervals).map(|v| curve.new_infections(v)).collect();

    let n = specs.len();
    let mut out = FeatureDecomposition {
        features: FeatureTable::new(Vec::new(), Vec::new())?,
        sig: Vec::with_capacity(n),
        ns: Vec::with_capacity(n),
        nr: Vec::with_capacity(n),
        drift: Vec::with_capacity(n),
    };
    let mut f_cols = Vec::with_capacity(n);

    for spec in specs {
        let couplings: Vec<(&[f64], f64)> = spec
            .confound_coupling
            .iter()
            .map(|(c, w)| (confound(*c).expect("checked").series.as_slice(), *w))
            .collect();
        let mut sig = Vec::with_capacity(intervals);
        let mut ns = Vec::with_capacity(intervals);
        let mut nr = Vec::with_capacity(intervals);
        let mut f = Vec::with_capacity(intervals);
        let mut drift = Vec::with_capacity(intervals);
        let mut running_max = 0.0f64;

        for v in 0..intervals {
            let feedback = if v > 0 && running_max > 0.0 {
                1.0 + spec.feedback_strength * f[v - 1] / running_max
            } else {
                1.0
            };
            let static_drift = spec.encoding_drift.as_ref().map_or(1.0, |d| d[v]);
            let multiplier = static_drift * feedback;
            let s = spec.gain * multiplier * new_infections[v];
            let mut systematic = spec.baseline + couplings.iter().map(|(m, w)| w * m[v]).sum::<f64>();
            if spec.feedback_on_noise {
                systematic *= feedback;
            }
            let mean = s + systematic;
            let count = match mode {
                NoiseMode::Deterministic => mean,
                NoiseMode::Poisson => {
                    if mean > MAX_POISSON_MEAN {
                        return Err(Error::PoissonOverflow {
                            feature: spec.id,
                            interval: v,
                            mean,
                        });
                    }
                    if mean == 0.0 {
                        0.0
                    } else {
                        let mut rng = stream.path(&[domain::INTERNET, v as u64, spec.id as u64]).rng();
                        Poisson::new(mean).expect("finite positive mean").sample(&mut rng)
                    }
                }
            };
            sig.push(s);
            ns.push(systematic);
            nr.push(count - mean);
            f.push(count);
            drift.push(multiplier);
            running_max = running_max.max(count);
        }
        out.sig.push(sig);
        out.ns.push(ns);
        out.nr.push(nr);
        out.drift.push(drift);
        f_cols.push(f);
    }
    out.features = FeatureTable::new(specs.iter().map(|s| s.id).collect(), f_cols)?;
    Ok(out)
}
