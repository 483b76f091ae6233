//! One simulated replicate end to end, and the Monte Carlo driver.
//!
//! Per replicate: draw the curve, encode it through both channels, decode the
//! clinic reports into the reference series, filter and fit the trace decoder
//! on the training seasons, predict the test seasons, and score the result
//! against the truth.

use rand::Rng;

use super::config::{CurveKind, NoiseSetting, ScenarioConfig};
use super::exec::{map_replicates, Execution};
use crate::decoders::{
    decode_weighted, decompose_estimate, filter_features, fit_linear, predict, EstimateDecomposition, FilterConfig,
    LinearModel,
};
use crate::epidemic::{generate_seasonal_curve, generate_sir_curve, EpidemicCurve, SeasonShape, SeasonalParams, SirParams};
use crate::error::{Error, Result};
use crate::internet::{
    apply_encoding_drift, encode_internet, make_media_burst, make_seasonal_confound, ConfoundProcess, DriftKind,
    FeatureDecomposition, FeatureId, FeatureSpec, NoiseMode,
};
use crate::metrics::{
    deceptiveness_split, estimate_deceptiveness, feature_deceptiveness, rmse_between, Aggregator, FeatureMetrics,
    MetricsReport,
};
use crate::rng::{domain, Substream};
use crate::traditional::{encode_traditional, make_partition, CareModel, PopulationPartition, ProviderReports, TradDecomposition};

pub const SEASONAL_CONFOUND: u32 = 0;
pub const MEDIA_BURST: u32 = 1;

/// Everything simulated for one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateData {
    pub replicate: usize,
    /// Ground truth, realised in whole persons.
    pub truth: EpidemicCurve,
    /// Peak week of the disease within each season.
    pub season_peaks: Vec<f64>,
    pub partition: PopulationPartition,
    pub care: CareModel,
    pub reports: ProviderReports,
    pub trad: TradDecomposition,
    /// Weighted clinic estimate.
    pub clinic_estimate: Vec<Option<f64>>,
    /// Series the trace decoder is trained against.
    pub reference: Vec<Option<f64>>,
    pub specs: Vec<FeatureSpec>,
    pub confounds: Vec<ConfoundProcess>,
    pub internet: FeatureDecomposition,
}

pub fn simulate_replicate(config: &ScenarioConfig, replicate: usize) -> Result<ReplicateData> {
    let stream = Substream::new(config.run.seed).child(replicate as u64);
    let (truth, season_peaks) = build_curve(config, stream.child(domain::CURVE))?;
    let intervals = truth.len();

    let partition = make_partition(config.curve.population, config.population.providers, config.population.skew)?;
    let care = build_care(config, intervals);
    let (reports, trad) = encode_traditional(&truth, &partition, &care, stream)?;
    let clinic_estimate = decode_weighted(&reports, &partition)?;
    let reference = if config.run.train_on_truth {
        truth.incidence().iter().map(|&s| Some(s)).collect()
    } else {
        clinic_estimate.clone()
    };

    let (specs, confounds) = build_features(config, &season_peaks, stream.child(domain::FEATURES))?;
    let mode = match config.internet.noise {
        NoiseSetting::Poisson => NoiseMode::Poisson,
        NoiseSetting::Deterministic => NoiseMode::Deterministic,
    };
    let internet = encode_internet(&truth, &specs, &confounds, stream, mode)?;

    Ok(ReplicateData {
        replicate,
        truth,
        season_peaks,
        partition,
        care,
        reports,
        trad,
        clinic_estimate,
        reference,
        specs,
        confounds,
        internet,
    })
}

fn build_curve(config: &ScenarioConfig, stream: Substream) -> Result<(EpidemicCurve, Vec<f64>)> {
    let c = &config.curve;
    let curve = match c.kind {
        CurveKind::Seasonal => {
            let mut rng = stream.rng();
            let seasons = (0..c.seasons)
                .map(|_| {
                    let shift = if c.peak_jitter > 0 {
                        rng.random_range(-(c.peak_jitter as i64)..=c.peak_jitter as i64)
                    } else {
                        0
                    };
                    let scale = if c.attack_jitter > 0.0 {
                        1.0 + rng.random_range(-c.attack_jitter..=c.attack_jitter)
                    } else {
                        1.0
                    };
                    let peak = (c.peak_week as i64 + shift).clamp(0, c.weeks_per_season as i64 - 1) as usize;
                    SeasonShape {
                        peak_week: peak,
                        attack_rate: c.attack_rate * scale,
                        width: c.width,
                    }
                })
                .collect();
            generate_seasonal_curve(&SeasonalParams {
                population: c.population,
                weeks_per_season: c.weeks_per_season,
                seasons,
            })?
        }
        CurveKind::Sir => generate_sir_curve(&SirParams {
            beta: c.sir_beta,
            gamma: c.sir_gamma,
            population: c.population,
            initial_infected: c.sir_initial_infected,
            intervals: config.intervals(),
            substeps: c.sir_substeps,
        })?,
    };
    let curve = curve.quantized();
    let peaks = (0..c.seasons)
        .map(|k| {
            let season = &curve.incidence()[config.season_intervals(k)];
            season
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (t, &s)| if s > best.1 { (t, s) } else { best })
                .0 as f64
        })
        .collect();
    Ok((curve, peaks))
}

fn build_care(config: &ScenarioConfig, intervals: usize) -> CareModel {
    let c = &config.care;
    CareModel {
        p_visit_infected: c.p_visit_infected,
        p_visit_uninfected: c.p_visit_uninfected,
        sensitivity: c.sensitivity,
        false_pos_rate: c.false_pos_rate,
        bias_drift: c.bias_drift_start.map(|start| {
            (0..intervals)
                .map(|v| if v >= start { c.bias_drift_factor } else { 1.0 })
                .collect()
        }),
    }
}

fn uniform<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Draw the replicate's feature population. Ids are assigned in group order:
/// informative, confounded, deceptive, background.
pub fn build_features(
    config: &ScenarioConfig,
    season_peaks: &[f64],
    stream: Substream,
) -> Result<(Vec<FeatureSpec>, Vec<ConfoundProcess>)> {
    let i = &config.internet;
    let b = &config.confounds;
    let intervals = config.intervals();
    let mut rng = stream.rng();

    let mut confounds = Vec::new();
    if b.seasonal_magnitude > 0.0 {
        let peaks: Vec<f64> = season_peaks
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let offset = if config.split.test_seasons.contains(&k) {
                    b.seasonal_offset_test
                } else {
                    b.seasonal_offset_train
                };
                p + offset
            })
            .collect();
        confounds.push(make_seasonal_confound(
            SEASONAL_CONFOUND,
            config.curve.weeks_per_season,
            &peaks,
            b.seasonal_width,
            b.seasonal_magnitude,
        )?);
    }
    if b.burst_magnitude > 0.0 {
        confounds.push(make_media_burst(
            MEDIA_BURST,
            b.burst_start,
            b.burst_duration,
            b.burst_magnitude,
            intervals,
        )?);
    }
    let has_seasonal = b.seasonal_magnitude > 0.0;
    let has_burst = b.burst_magnitude > 0.0;

    let mut specs = Vec::with_capacity(i.features);
    let mut next_id: FeatureId = 0;

    for k in 0..i.informative {
        let mut spec = FeatureSpec::new(
            next_id,
            format!("informative_{k}"),
            uniform(&mut rng, i.informative_gain),
            uniform(&mut rng, i.informative_baseline),
            uniform(&mut rng, i.informative_relevance),
        );
        if has_burst && k < i.burst_coupled {
            spec = spec.with_coupling(MEDIA_BURST, i.burst_coupling);
        }
        if i.linear_growth != 0.0 {
            spec = apply_encoding_drift(&spec, DriftKind::LinearGrowth { rate: i.linear_growth }, intervals)?;
        }
        if let Some(at) = i.step_at {
            spec = apply_encoding_drift(&spec, DriftKind::Step { at, factor: i.step_factor }, intervals)?;
        }
        if i.feedback_strength > 0.0 {
            spec = apply_encoding_drift(&spec, DriftKind::Feedback { strength: i.feedback_strength }, intervals)?;
            spec.feedback_on_noise = i.feedback_on_noise;
        }
        specs.push(spec);
        next_id += 1;
    }
    for k in 0..i.confounded {
        let mut spec = FeatureSpec::new(
            next_id,
            format!("confounded_{k}"),
            0.0,
            uniform(&mut rng, i.confounded_baseline),
            uniform(&mut rng, i.confounded_relevance),
        );
        let coupling = uniform(&mut rng, i.confounded_coupling);
        if has_seasonal {
            spec = spec.with_coupling(SEASONAL_CONFOUND, coupling);
        }
        specs.push(spec);
        next_id += 1;
    }
    for k in 0..i.deceptive {
        let mut spec = FeatureSpec::new(
            next_id,
            format!("deceptive_{k}"),
            i.deceptive_gain,
            i.deceptive_baseline,
            i.deceptive_relevance,
        );
        if has_seasonal && i.deceptive_coupling > 0.0 {
            spec = spec.with_coupling(SEASONAL_CONFOUND, i.deceptive_coupling);
        }
        specs.push(spec);
        next_id += 1;
    }
    let background = i.features - i.informative - i.confounded - i.deceptive;
    for k in 0..background {
        let baseline = uniform(&mut rng, i.background_baseline);
        let relevance = uniform(&mut rng, i.background_relevance);
        specs.push(FeatureSpec::new(next_id, format!("background_{k}"), 0.0, baseline, relevance));
        next_id += 1;
    }
    Ok((specs, confounds))
}

/// A fitted trace decoder and its scores on one replicate.
#[derive(Debug, Clone)]
pub struct DecoderOutcome {
    pub selected: Vec<FeatureId>,
    pub model: LinearModel,
    /// Estimate at every interval.
    pub estimate: Vec<f64>,
    pub decomposition: EstimateDecomposition,
    /// Against the reference on training intervals.
    pub train_rmse: f64,
    /// Against the truth on test intervals.
    pub test_rmse: f64,
    /// Against the reference on test intervals where it exists.
    pub test_rmse_vs_reference: Option<f64>,
    pub season_rmse: Vec<(usize, f64)>,
    pub g_series: Vec<(usize, f64)>,
    pub estimate_g: f64,
}

pub fn evaluate_decoder(config: &ScenarioConfig, data: &ReplicateData, filter: &FilterConfig) -> Result<DecoderOutcome> {
    let train = config.train_intervals();
    let test = config.test_intervals();
    let reference_train: Vec<f64> = train
        .iter()
        .map(|&v| data.reference[v].ok_or(Error::MissingTrainingValue(v)))
        .collect::<Result<_>>()?;
    let train_table = data.internet.features.select_intervals(&train);
    let relevance: Vec<f64> = data.specs.iter().map(|s| s.relevance).collect();

    let selected = filter_features(&train_table, &reference_train, &relevance, filter)?;
    let model = fit_linear(&train_table, &reference_train, &selected, filter.ridge_lambda)?;
    let estimate = predict(&model, &data.internet.features)?;
    let decomposition = decompose_estimate(&model, &data.internet, config.run.intercept)?;

    let truth = data.truth.incidence();
    let pick = |series: &[f64], idx: &[usize]| -> Vec<f64> { idx.iter().map(|&v| series[v]).collect() };
    let train_rmse = rmse_between(&pick(&estimate, &train), &reference_train);
    let test_rmse = rmse_between(&pick(&estimate, &test), &pick(truth, &test));
    let (est_ref, ref_test): (Vec<f64>, Vec<f64>) = test
        .iter()
        .filter_map(|&v| data.reference[v].map(|r| (estimate[v], r)))
        .unzip();
    let test_rmse_vs_reference = (!ref_test.is_empty()).then(|| rmse_between(&est_ref, &ref_test));
    let season_rmse = config
        .split
        .test_seasons
        .iter()
        .map(|&k| {
            let idx: Vec<usize> = config.season_intervals(k).collect();
            (k, rmse_between(&pick(&estimate, &idx), &pick(truth, &idx)))
        })
        .collect();

    let (g_values, estimate_g) = estimate_deceptiveness(
        &pick(&decomposition.des, &test),
        &pick(&decomposition.dens, &test),
        &pick(&decomposition.denr, &test),
        config.run.aggregator,
    )?;
    let g_series = test.iter().copied().zip(g_values).collect();

    Ok(DecoderOutcome {
        selected,
        model,
        estimate,
        decomposition,
        train_rmse,
        test_rmse,
        test_rmse_vs_reference,
        season_rmse,
        g_series,
        estimate_g,
    })
}

/// Scores kept in a [`RunReport`] for one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSummary {
    pub selected: Vec<FeatureId>,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub test_rmse_vs_reference: Option<f64>,
    pub season_rmse: Vec<(usize, f64)>,
    pub estimate_g: f64,
}

impl From<&DecoderOutcome> for DecoderSummary {
    fn from(o: &DecoderOutcome) -> Self {
        DecoderSummary {
            selected: o.selected.clone(),
            train_rmse: o.train_rmse,
            test_rmse: o.test_rmse,
            test_rmse_vs_reference: o.test_rmse_vs_reference,
            season_rmse: o.season_rmse.clone(),
            estimate_g: o.estimate_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateReport {
    pub replicate: usize,
    /// Clinic estimate against the truth on test intervals.
    pub reference_rmse: f64,
    pub primary: DecoderSummary,
    /// Comparison decoder with the relevance gate relaxed.
    pub baseline: Option<DecoderSummary>,
    pub metrics: MetricsReport,
}

/// A replicate's simulated data, fitted decoders and report.
#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub data: ReplicateData,
    pub primary: DecoderOutcome,
    pub baseline: Option<DecoderOutcome>,
    pub report: ReplicateReport,
}

pub fn baseline_filter(config: &ScenarioConfig) -> FilterConfig {
    FilterConfig {
        relevance_threshold: config.baseline.relevance_threshold,
        ..config.filter
    }
}

pub fn run_replicate(config: &ScenarioConfig, replicate: usize) -> Result<ReplicateRun> {
    let data = simulate_replicate(config, replicate)?;
    let primary = evaluate_decoder(config, &data, &config.filter)?;
    let baseline = if config.baseline.enabled {
        Some(evaluate_decoder(config, &data, &baseline_filter(config))?)
    } else {
        None
    };

    let test = config.test_intervals();
    let truth = data.truth.incidence();
    let (clinic, truth_present): (Vec<f64>, Vec<f64>) = test
        .iter()
        .filter_map(|&v| data.clinic_estimate[v].map(|e| (e, truth[v])))
        .unzip();
    let reference_rmse = rmse_between(&clinic, &truth_present);

    let aggregator = config.run.aggregator;
    let g = feature_deceptiveness(&data.internet, aggregator, config.run.numerator, None);
    let (g_sys, g_rand) = deceptiveness_split(&data.internet, aggregator, None);
    let features = data
        .internet
        .ids()
        .iter()
        .enumerate()
        .map(|(k, &id)| FeatureMetrics {
            id,
            g: g.per_feature[k],
            g_sys: g_sys[k],
            g_rand: g_rand[k],
        })
        .collect();
    let metrics = MetricsReport {
        error: test.iter().map(|&v| (v, Some(primary.estimate[v] - truth[v]))).collect(),
        rmse_by_season: primary.season_rmse.clone(),
        features,
        estimate_g_series: primary.g_series.clone(),
        estimate_g: primary.estimate_g,
        aggregator,
    };
    let report = ReplicateReport {
        replicate,
        reference_rmse,
        primary: DecoderSummary::from(&primary),
        baseline: baseline.as_ref().map(DecoderSummary::from),
        metrics,
    };
    Ok(ReplicateRun {
        data,
        primary,
        baseline,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineAggregates {
    pub mean_test_rmse: f64,
    pub sd_test_rmse: f64,
    pub mean_g: f64,
    /// Replicates where the primary decoder has strictly lower test RMSE.
    pub primary_lower_rmse: usize,
    /// Replicates where the primary decoder has strictly lower G.
    pub primary_lower_g: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub replicates: usize,
    pub mean_test_rmse: f64,
    pub sd_test_rmse: f64,
    pub mean_g: f64,
    pub mean_reference_rmse: f64,
    pub baseline: Option<BaselineAggregates>,
}

impl Aggregates {
    /// Reduce replicate rows in index order.
    pub fn from_replicates(rows: &[ReplicateReport]) -> Self {
        let primary_rmse: Vec<f64> = rows.iter().map(|r| r.primary.test_rmse).collect();
        let baseline = if rows.iter().all(|r| r.baseline.is_some()) && !rows.is_empty() {
            let b: Vec<&DecoderSummary> = rows.iter().filter_map(|r| r.baseline.as_ref()).collect();
            let rmse: Vec<f64> = b.iter().map(|s| s.test_rmse).collect();
            Some(BaselineAggregates {
                mean_test_rmse: mean(&rmse),
                sd_test_rmse: sample_sd(&rmse),
                mean_g: mean(&b.iter().map(|s| s.estimate_g).collect::<Vec<_>>()),
                primary_lower_rmse: rows
                    .iter()
                    .zip(&b)
                    .filter(|(r, s)| r.primary.test_rmse < s.test_rmse)
                    .count(),
                primary_lower_g: rows
                    .iter()
                    .zip(&b)
                    .filter(|(r, s)| r.primary.estimate_g < s.estimate_g)
                    .count(),
            })
        } else {
            None
        };
        Aggregates {
            replicates: rows.len(),
            mean_test_rmse: mean(&primary_rmse),
            sd_test_rmse: sample_sd(&primary_rmse),
            mean_g: mean(&rows.iter().map(|r| r.primary.estimate_g).collect::<Vec<_>>()),
            mean_reference_rmse: mean(&rows.iter().map(|r| r.reference_rmse).collect::<Vec<_>>()),
            baseline,
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub aggregator: Aggregator,
    pub replicates: Vec<ReplicateReport>,
    pub aggregates: Aggregates,
}

impl RunReport {
    pub fn summary_line(&self) -> String {
        format!(
            "RMSE {:.12} G {:.12}",
            self.aggregates.mean_test_rmse, self.aggregates.mean_g
        )
    }
}

/// Run every replicate of `config` and reduce the results.
pub fn run_scenario(config: &ScenarioConfig, execution: Execution) -> Result<RunReport> {
    config.validate()?;
    let replicates = map_replicates(config.run.replicates, execution, |r| {
        run_replicate(config, r).map(|run| run.report)
    })?;
    let aggregates = Aggregates::from_replicates(&replicates);
    Ok(RunReport {
        config_hash: config.hash(),
        seed: config.run.seed,
        aggregator: config.run.aggregator,
        replicates,
        aggregates,
    })
}
