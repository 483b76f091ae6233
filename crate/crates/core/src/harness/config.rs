//! Scenario configuration: TOML with one table per section.
//!
//! Every key has a default, unknown sections and keys are rejected, and
//! `section.key=value` overrides are applied to the parsed document before
//! validation. The canonical re-serialisation is hashed for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoders::{FilterConfig, InterceptPolicy};
use crate::error::{Error, Result};
use crate::metrics::{Aggregator, NumeratorPolicy};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub run: RunSection,
    pub curve: CurveSection,
    pub population: PopulationSection,
    pub care: CareSection,
    pub internet: InternetSection,
    pub confounds: ConfoundSection,
    pub filter: FilterConfig,
    pub baseline: BaselineSection,
    pub split: SplitSection,
    pub data: Option<DataSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub replicates: usize,
    pub seed: u64,
    /// Train the internet decoder on the true curve instead of the clinic estimate.
    pub train_on_truth: bool,
    pub aggregator: Aggregator,
    pub numerator: NumeratorPolicy,
    pub intercept: InterceptPolicy,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            replicates: 10,
            seed: 1,
            train_on_truth: false,
            aggregator: Aggregator::Max,
            numerator: NumeratorPolicy::SumOfAbs,
            intercept: InterceptPolicy::Systematic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Seasonal,
    Sir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub kind: CurveKind,
    pub population: u64,
    pub weeks_per_season: usize,
    pub seasons: usize,
    pub peak_week: usize,
    /// Per-season peak shift drawn uniformly from `-jitter..=jitter` weeks.
    pub peak_jitter: usize,
    pub attack_rate: f64,
    /// Per-season relative attack-rate perturbation, uniform in `[-x, x]`.
    pub attack_jitter: f64,
    pub width: f64,
    pub sir_beta: f64,
    pub sir_gamma: f64,
    pub sir_initial_infected: f64,
    pub sir_substeps: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            kind: CurveKind::Seasonal,
            population: 1_000_000,
            weeks_per_season: 52,
            seasons: 4,
            peak_week: 20,
            peak_jitter: 0,
            attack_rate: 0.1,
            attack_jitter: 0.0,
            width: 4.0,
            sir_beta: 0.5,
            sir_gamma: 0.25,
            sir_initial_infected: 1e-3,
            sir_substeps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSection {
    pub providers: usize,
    pub skew: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        PopulationSection {
            providers: 50,
            skew: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CareSection {
    pub p_visit_infected: f64,
    pub p_visit_uninfected: f64,
    pub sensitivity: f64,
    pub false_pos_rate: f64,
    /// First interval at which `bias_drift_factor` multiplies `p_visit_infected`.
    pub bias_drift_start: Option<usize>,
    pub bias_drift_factor: f64,
}

impl Default for CareSection {
    fn default() -> Self {
        CareSection {
            p_visit_infected: 0.5,
            p_visit_uninfected: 0.05,
            sensitivity: 0.9,
            false_pos_rate: 0.02,
            bias_drift_start: None,
            bias_drift_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSetting {
    Poisson,
    Deterministic,
}

/// Generator for the internet feature population. Ranges are `[low, high]`
/// and are sampled uniformly per feature and replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InternetSection {
    pub noise: NoiseSetting,
    /// Total number of features; the remainder after the typed groups are
    /// pure background features.
    pub features: usize,

    pub informative: usize,
    pub informative_gain: [f64; 2],
    pub informative_baseline: [f64; 2],
    pub informative_relevance: [f64; 2],

    /// Features driven by the seasonal confound.
    pub confounded: usize,
    pub confounded_coupling: [f64; 2],
    pub confounded_baseline: [f64; 2],
    pub confounded_relevance: [f64; 2],

    /// Rabies-like features: heavy traffic, almost no infection-driven traces.
    pub deceptive: usize,
    pub deceptive_gain: f64,
    pub deceptive_baseline: f64,
    pub deceptive_relevance: f64,
    /// Coupling of the deceptive features to the seasonal confound.
    pub deceptive_coupling: f64,

    pub background_baseline: [f64; 2],
    pub background_relevance: [f64; 2],

    /// Number of informative features that also respond to the media burst.
    pub burst_coupled: usize,
    pub burst_coupling: f64,

    /// Encoding drift applied to informative features.
    pub linear_growth: f64,
    pub step_at: Option<usize>,
    pub step_factor: f64,
    pub feedback_strength: f64,
    pub feedback_on_noise: bool,
}

impl Default for InternetSection {
    fn default() -> Self {
        InternetSection {
            noise: NoiseSetting::Poisson,
            features: 200,
            informative: 10,
            informative_gain: [0.002, 0.01],
            informative_baseline: [50.0, 500.0],
            informative_relevance: [0.7, 1.0],
            confounded: 0,
            confounded_coupling: [100.0, 400.0],
            confounded_baseline: [50.0, 500.0],
            confounded_relevance: [0.0, 0.2],
            deceptive: 0,
            deceptive_gain: 0.0,
            deceptive_baseline: 30_000.0,
            deceptive_relevance: 0.9,
            deceptive_coupling: 0.0,
            background_baseline: [10.0, 1000.0],
            background_relevance: [0.0, 0.5],
            burst_coupled: 0,
            burst_coupling: 1.0,
            linear_growth: 0.0,
            step_at: None,
            step_factor: 1.0,
            feedback_strength: 0.0,
            feedback_on_noise: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfoundSection {
    /// Peak of the seasonal confound; 0 disables it.
    pub seasonal_magnitude: f64,
    pub seasonal_width: f64,
    /// Confound peak offset from the disease peak, in weeks, in training seasons.
    pub seasonal_offset_train: f64,
    /// Offset in test seasons.
    pub seasonal_offset_test: f64,
    pub burst_start: usize,
    pub burst_duration: usize,
    /// Height of the media burst; 0 disables it.
    pub burst_magnitude: f64,
}

impl Default for ConfoundSection {
    fn default() -> Self {
        ConfoundSection {
            seasonal_magnitude: 0.0,
            seasonal_width: 6.0,
            seasonal_offset_train: 0.0,
            seasonal_offset_test: 0.0,
            burst_start: 0,
            burst_duration: 1,
            burst_magnitude: 0.0,
        }
    }
}

/// Comparison decoder: the primary filter with the relevance gate replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub enabled: bool,
    pub relevance_threshold: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            enabled: true,
            relevance_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_seasons: Vec<usize>,
    pub test_seasons: Vec<usize>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_seasons: vec![0, 1],
            test_seasons: vec![2, 3],
        }
    }
}

/// User-supplied weekly series for fitting on real data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub reference_csv: PathBuf,
    pub reference_column: String,
    pub features_csv: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    /// Last training week (`YYYY-Www` or `YYYY-MM-DD`); later rows are held out.
    pub train_until: Option<String>,
    /// Optional `feature,relevance` table; unlisted features count as relevant.
    pub relevance_csv: Option<PathBuf>,
}

fn default_date_column() -> String {
    "date".to_string()
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parse `text`, then apply `section.key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: ScenarioConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_with_overrides(&text, overrides)?;
        // Relative data paths are relative to the config file.
        if let (Some(data), Some(dir)) = (config.data.as_mut(), path.parent()) {
            let optional = data.relevance_csv.iter_mut();
            for p in [&mut data.reference_csv, &mut data.features_csv].into_iter().chain(optional) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn intervals(&self) -> usize {
        self.curve.seasons * self.curve.weeks_per_season
    }

    pub fn season_intervals(&self, season: usize) -> std::ops::Range<usize> {
        let w = self.curve.weeks_per_season;
        season * w..(season + 1) * w
    }

    pub fn train_intervals(&self) -> Vec<usize> {
        self.split
            .train_seasons
            .iter()
            .flat_map(|&s| self.season_intervals(s))
            .collect()
    }

    pub fn test_intervals(&self) -> Vec<usize> {
        self.split
            .test_seasons
            .iter()
            .flat_map(|&s| self.season_intervals(s))
            .collect()
    }

    /// Canonical TOML rendering; stable for identical configurations.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// First 16 hex digits of the SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.run.replicates == 0 {
            return err("run.replicates must be at least 1".into());
        }
        let c = &self.curve;
        if c.seasons == 0 || c.weeks_per_season == 0 {
            return err("curve.seasons and curve.weeks_per_season must be positive".into());
        }
        if c.peak_week >= c.weeks_per_season {
            return err(format!("curve.peak_week {} outside a {}-week season", c.peak_week, c.weeks_per_season));
        }
        if !(0.0..1.0).contains(&c.attack_jitter) {
            return err("curve.attack_jitter must lie in [0, 1)".into());
        }
        let s = &self.split;
        if s.train_seasons.is_empty() || s.test_seasons.is_empty() {
            return err("split.train_seasons and split.test_seasons must be nonempty".into());
        }
        if let Some(k) = s.train_seasons.iter().chain(&s.test_seasons).find(|&&k| k >= c.seasons) {
            return err(format!("split season {k} does not exist ({} seasons)", c.seasons));
        }
        if let Some(k) = s.train_seasons.iter().find(|k| s.test_seasons.contains(k)) {
            return err(format!("season {k} is in both train and test sets"));
        }
        let i = &self.internet;
        if i.informative + i.confounded + i.deceptive > i.features {
            return err(format!(
                "internet.features = {} is smaller than informative + confounded + deceptive",
                i.features
            ));
        }
        if i.burst_coupled > i.informative {
            return err("internet.burst_coupled exceeds internet.informative".into());
        }
        for (name, r) in [
            ("informative_gain", i.informative_gain),
            ("informative_baseline", i.informative_baseline),
            ("informative_relevance", i.informative_relevance),
            ("confounded_coupling", i.confounded_coupling),
            ("confounded_baseline", i.confounded_baseline),
            ("confounded_relevance", i.confounded_relevance),
            ("background_baseline", i.background_baseline),
            ("background_relevance", i.background_relevance),
        ] {
            if !(r[0] >= 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return err(format!("internet.{name} must be a nonnegative [low, high] range"));
            }
        }
        let b = &self.confounds;
        if b.burst_magnitude > 0.0 && (b.burst_duration == 0 || b.burst_start + b.burst_duration > self.intervals()) {
            return err("media burst window must be nonempty and inside the analysis period".into());
        }
        if !(0.0..=1.0).contains(&self.baseline.relevance_threshold) {
            return err("baseline.relevance_threshold must lie in [0, 1]".into());
        }
        self.filter
            .validate()
            .map_err(|e| Error::Config(format!("filter: {e}")))?;
        Ok(())
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key {key:?} must be section.key")))?;
    if !KNOWN_SECTIONS.contains(&section) {
        return Err(Error::Config(format!("unknown config section {section:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let table = doc
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("{section} is not a table")))?;
    table.insert(field.to_string(), value);
    Ok(())
}

const KNOWN_SECTIONS: &[&str] = &[
    "run",
    "curve",
    "population",
    "care",
    "internet",
    "confounds",
    "filter",
    "baseline",
    "split",
    "data",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.intervals(), 208);
        assert_eq!(c.train_intervals().len(), 104);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let c = ScenarioConfig::from_toml_with_overrides(
            "[run]\nreplicates = 3\n",
            &["run.seed=99".into(), "filter.max_features=4".into(), "run.aggregator=mean".into()],
        )
        .unwrap();
        assert_eq!((c.run.replicates, c.run.seed, c.filter.max_features), (3, 99, 4));
        assert_eq!(c.run.aggregator, Aggregator::Mean);
        for bad in ["run.nope=1", "nosection.seed=1", "seed=1", "run.seed"] {
            assert!(
                ScenarioConfig::from_toml_with_overrides("", &[bad.into()]).is_err(),
                "{bad} accepted"
            );
        }
        assert!(ScenarioConfig::from_toml_str("[run]\ntypo = 1\n").is_err());
    }

    #[test]
    fn split_validation() {
        assert!(ScenarioConfig::from_toml_str("[split]\ntrain_seasons=[0]\ntest_seasons=[0]\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[split]\ntrain_seasons=[]\ntest_seasons=[1]\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[split]\ntrain_seasons=[0]\ntest_seasons=[9]\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[run]\nreplicates=0\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        let reparsed = ScenarioConfig::from_toml_str(&a.canonical()).unwrap();
        assert_eq!(reparsed, a);
    }
}
