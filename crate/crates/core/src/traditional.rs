//! Clinic-based (traditional) surveillance channel.
//!
//! The population at risk is split into one sub-population per sentinel
//! provider. Each interval, the new infections are allocated across
//! sub-populations, members decide whether to visit their provider, and
//! visitors are diagnosed. Providers report visits and diagnoses; the
//! feature is the diagnosed fraction of visitors.

use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

use crate::epidemic::EpidemicCurve;
use crate::error::{invalid, Result};
use crate::rng::{domain, Substream};

/// Sizes of the provider catchments.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationPartition {
    sizes: Vec<u64>,
    population: u64,
}

impl PopulationPartition {
    pub fn from_sizes(sizes: Vec<u64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(invalid("partition needs at least one provider"));
        }
        if sizes.contains(&0) {
            return Err(invalid("every sub-population must be nonempty"));
        }
        let population = sizes.iter().sum();
        Ok(PopulationPartition { sizes, population })
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn providers(&self) -> usize {
        self.sizes.len()
    }

    /// Population share of each provider; sums to 1.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.population as f64;
        self.sizes.iter().map(|&s| s as f64 / n).collect()
    }
}

/// Split `population` people over `providers` catchments.
///
/// `skew = 0` gives equal sizes; `skew > 0` makes each catchment
/// `1 / (1 + skew)` times the size of the previous one. Every catchment has
/// at least one member and remainders go to the largest fractional parts.
pub fn make_partition(population: u64, providers: usize, skew: f64) -> Result<PopulationPartition> {
    if providers == 0 {
        return Err(invalid("provider count must be at least 1"));
    }
    if providers as u64 > population {
        return Err(invalid(format!(
            "{providers} providers cannot partition a population of {population}"
        )));
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(invalid(format!("skew {skew} must be a nonnegative number")));
    }
    let ratio = 1.0 / (1.0 + skew);
    let raw: Vec<f64> = (0..providers).map(|i| ratio.powi(i as i32)).collect();
    let total_raw: f64 = raw.iter().sum();
    let spare = population - providers as u64;
    let shares: Vec<f64> = raw.iter().map(|r| spare as f64 * r / total_raw).collect();
    let mut sizes: Vec<u64> = shares.iter().map(|s| 1 + s.floor() as u64).collect();
    let assigned: u64 = sizes.iter().sum();
    let mut leftover = population.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..providers).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    // Float rounding may overshoot by a person or two on huge populations.
    let mut excess = sizes.iter().sum::<u64>().saturating_sub(population);
    for s in sizes.iter_mut() {
        while excess > 0 && *s > 1 {
            *s -= 1;
            excess -= 1;
        }
    }
    PopulationPartition::from_sizes(sizes)
}

/// Care-seeking and diagnosis probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CareModel {
    /// Probability a newly infected person visits their provider in the interval.
    pub p_visit_infected: f64,
    /// Probability anyone else visits.
    pub p_visit_uninfected: f64,
    /// P(diagnosed | newly infected and visiting).
    pub sensitivity: f64,
    /// P(diagnosed | not newly infected and visiting).
    pub false_pos_rate: f64,
    /// Optional per-interval multiplier on `p_visit_infected` (sample bias drift).
    pub bias_drift: Option<Vec<f64>>,
}

/// The care model's probabilities as they apply in one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CareRates {
    pub p_visit_infected: f64,
    pub p_visit_uninfected: f64,
    pub sensitivity: f64,
    pub false_pos_rate: f64,
}

impl CareModel {
    /// Every person visits and every diagnosis is correct.
    pub fn perfect() -> Self {
        CareModel {
            p_visit_infected: 1.0,
            p_visit_uninfected: 1.0,
            sensitivity: 1.0,
            false_pos_rate: 0.0,
            bias_drift: None,
        }
    }

    pub fn validate(&self, intervals: usize) -> Result<()> {
        for (name, p) in [
            ("p_visit_infected", self.p_visit_infected),
            ("p_visit_uninfected", self.p_visit_uninfected),
            ("sensitivity", self.sensitivity),
            ("false_pos_rate", self.false_pos_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if let Some(drift) = &self.bias_drift {
            if drift.len() != intervals {
                return Err(invalid(format!(
                    "bias drift has {} multipliers for {intervals} intervals",
                    drift.len()
                )));
            }
            if let Some((v, m)) = drift
                .iter()
                .enumerate()
                .find(|(_, m)| !(0.0..=1.0).contains(&(**m * self.p_visit_infected)))
            {
                return Err(invalid(format!(
                    "bias drift multiplier {m} at interval {v} pushes p_visit_infected outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn at_interval(&self, v: usize) -> CareRates {
        let drift = self.bias_drift.as_ref().map_or(1.0, |d| d[v]);
        CareRates {
            p_visit_infected: self.p_visit_infected * drift,
            p_visit_uninfected: self.p_visit_uninfected,
            sensitivity: self.sensitivity,
            false_pos_rate: self.false_pos_rate,
        }
    }
}

/// Closed-form expected feature for a sub-population whose newly infected
/// share is `sig`: expected diagnoses over expected visits. `None` when no
/// visits are expected at all.
pub fn expected_feature(care: &CareRates, sig: f64) -> Option<f64> {
    let (pi, pu) = (care.p_visit_infected, care.p_visit_uninfected);
    if pi == pu {
        // Visit propensity cancels.
        return (pi > 0.0).then_some(sig * care.sensitivity + (1.0 - sig) * care.false_pos_rate);
    }
    let denom = sig * pi + (1.0 - sig) * pu;
    if denom <= 0.0 {
        return None;
    }
    Some((sig * pi * care.sensitivity + (1.0 - sig) * pu * care.false_pos_rate) / denom)
}

/// Observable provider reports, indexed `[interval][provider]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReports {
    providers: usize,
    visits: Vec<u64>,
    diagnosed: Vec<u64>,
}

impl ProviderReports {
    pub fn new(providers: usize, visits: Vec<u64>, diagnosed: Vec<u64>) -> Result<Self> {
        if providers == 0 || visits.len() != diagnosed.len() || !visits.len().is_multiple_of(providers) {
            return Err(invalid("report arrays do not form an interval x provider grid"));
        }
        if let Some(k) = (0..visits.len()).find(|&k| diagnosed[k] > visits[k]) {
            return Err(invalid(format!(
                "interval {} provider {}: more diagnoses than visits",
                k / providers,
                k % providers
            )));
        }
        Ok(ProviderReports {
            providers,
            visits,
            diagnosed,
        })
    }

    pub fn providers(&self) -> usize {
        self.providers
    }

    pub fn intervals(&self) -> usize {
        self.visits.len() / self.providers
    }

    pub fn visits(&self, v: usize, i: usize) -> u64 {
        self.visits[v * self.providers + i]
    }

    pub fn diagnosed(&self, v: usize, i: usize) -> u64 {
        self.diagnosed[v * self.providers + i]
    }

    /// Diagnosed fraction of visitors; `None` when the provider saw nobody.
    pub fn feature(&self, v: usize, i: usize) -> Option<f64> {
        let visits = self.visits(v, i);
        (visits > 0).then(|| self.diagnosed(v, i) as f64 / visits as f64)
    }

    /// `interval,provider,visits,diagnosed`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interval", "provider", "visits", "diagnosed"])?;
        for v in 0..self.intervals() {
            for i in 0..self.providers {
                w.write_record([
                    v.to_string(),
                    i.to_string(),
                    self.visits(v, i).to_string(),
                    self.diagnosed(v, i).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Observed part of a decomposition cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedNoise {
    pub f: f64,
    pub ns: f64,
    pub nr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradCell {
    /// Newly infected share of the sub-population.
    pub sig: f64,
    /// `None` when the provider had no visits in the interval.
    pub observed: Option<ObservedNoise>,
}

impl TradCell {
    pub fn is_missing(&self) -> bool {
        self.observed.is_none()
    }
}

/// Exact signal / systematic / random split of every provider feature.
#[derive(Debug, Clone, PartialEq)]
pub struct TradDecomposition {
    providers: usize,
    cells: Vec<TradCell>,
}

impl TradDecomposition {
    pub fn providers(&self) -> usize {
        self.providers
    }

    pub fn intervals(&self) -> usize {
        self.cells.len() / self.providers
    }

    pub fn cell(&self, v: usize, i: usize) -> &TradCell {
        &self.cells[v * self.providers + i]
    }

    pub fn cells(&self) -> &[TradCell] {
        &self.cells
    }

    /// `interval,provider,sig,ns,nr,f,missing`; missing cells leave ns/nr/f empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interval", "provider", "sig", "ns", "nr", "f", "missing"])?;
        for v in 0..self.intervals() {
            for i in 0..self.providers {
                let c = self.cell(v, i);
                let (ns, nr, f, missing) = match c.observed {
                    Some(o) => (o.ns.to_string(), o.nr.to_string(), o.f.to_string(), "0"),
                    None => (String::new(), String::new(), String::new(), "1"),
                };
                w.write_record([
                    v.to_string(),
                    i.to_string(),
                    c.sig.to_string(),
                    ns,
                    nr,
                    f,
                    missing.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Pass `curve` through the clinic channel.
///
/// New infections each interval are drawn without replacement from the
/// people not yet infected (multivariate hypergeometric over catchments).
/// Visits and diagnoses are binomial per catchment. Each interval and each
/// (interval, provider) cell draws from its own substream of `stream`.
pub fn encode_traditional(
    curve: &EpidemicCurve,
    partition: &PopulationPartition,
    care: &CareModel,
    stream: Substream,
) -> Result<(ProviderReports, TradDecomposition)> {
    if curve.population() != partition.population() {
        return Err(invalid(format!(
            "curve population {} differs from partition population {}",
            curve.population(),
            partition.population()
        )));
    }
    let intervals = curve.len();
    care.validate(intervals)?;
    let providers = partition.providers();
    let counts = curve.infection_counts();

    let mut susceptible: Vec<u64> = partition.sizes().to_vec();
    let mut visits = Vec::with_capacity(intervals * providers);
    let mut diagnosed = Vec::with_capacity(intervals * providers);
    let mut cells = Vec::with_capacity(intervals * providers);

    for (v, &k) in counts.iter().enumerate() {
        let mut alloc_rng = stream.path(&[domain::ALLOCATION, v as u64]).rng();
        let allocation = allocate_infections(k, &mut susceptible, &mut alloc_rng)
            .map_err(|remaining| {
                invalid(format!(
                    "interval {v}: {k} new infections exceed the {remaining} people never infected"
                ))
            })?;
        let rates = care.at_interval(v);
        for (i, (&size, &infected)) in partition.sizes().iter().zip(&allocation).enumerate() {
            let mut rng = stream.path(&[domain::CARE, v as u64, i as u64]).rng();
            let others = size - infected;
            let visit_pos = binomial(infected, rates.p_visit_infected, &mut rng);
            let visit_neg = binomial(others, rates.p_visit_uninfected, &mut rng);
            let diag_pos = binomial(visit_pos, rates.sensitivity, &mut rng);
            let diag_neg = binomial(visit_neg, rates.false_pos_rate, &mut rng);
            let pv = visit_pos + visit_neg;
            let pd = diag_pos + diag_neg;
            visits.push(pv);
            diagnosed.push(pd);

            let sig = infected as f64 / size as f64;
            let observed = if pv == 0 {
                None
            } else {
                let f = pd as f64 / pv as f64;
                // Visits happened, so some visit probability is positive.
                let expected = expected_feature(&rates, sig).unwrap_or(f);
                Some(ObservedNoise {
                    f,
                    ns: expected - sig,
                    nr: f - expected,
                })
            };
            cells.push(TradCell { sig, observed });
        }
    }

    Ok((
        ProviderReports {
            providers,
            visits,
            diagnosed,
        },
        TradDecomposition { providers, cells },
    ))
}

/// Sequential conditional hypergeometric draws. On failure returns the
/// number of people still available.
fn allocate_infections<R: Rng>(
    count: u64,
    susceptible: &mut [u64],
    rng: &mut R,
) -> std::result::Result<Vec<u64>, u64> {
    let mut pool: u64 = susceptible.iter().sum();
    if count > pool {
        return Err(pool);
    }
    let mut left = count;
    let mut out = Vec::with_capacity(susceptible.len());
    let last = susceptible.len() - 1;
    for (i, s) in susceptible.iter_mut().enumerate() {
        let take = if left == 0 {
            0
        } else if i == last || *s == pool {
            left
        } else if *s == 0 {
            0
        } else {
            hypergeometric(pool, *s, left, rng)
        };
        pool -= *s;
        *s -= take;
        left -= take;
        out.push(take);
    }
    Ok(out)
}

/// Successes when drawing `n` from `pool` items of which `k` are successes.
/// With a small expected count the library sampler walks the whole pool to
/// set up (and can underflow), so that regime is inverted directly with the
/// zero-count probability computed in log space.
fn hypergeometric<R: Rng>(pool: u64, k: u64, n: u64, rng: &mut R) -> u64 {
    let mean = k as f64 * n as f64 / pool as f64;
    if mean < 30.0 {
        if let Some(x) = invert_hypergeometric(pool, k, n, rng) {
            return x;
        }
    }
    match Hypergeometric::new(pool, k, n) {
        Ok(d) => d.sample(rng),
        Err(_) => urn_draws(pool, k, n, rng),
    }
}

fn invert_hypergeometric<R: Rng>(pool: u64, k: u64, n: u64, rng: &mut R) -> Option<u64> {
    let (a, b) = (k.min(n), k.max(n));
    if pool - b < a {
        return None;
    }
    let ln_p0: f64 = (0..a).map(|j| ((pool - b - j) as f64 / (pool - j) as f64).ln()).sum();
    let mut p = ln_p0.exp();
    if p < 1e-200 {
        return None;
    }
    let mut u: f64 = rng.random();
    let mut x = 0u64;
    while u > p && x < a {
        u -= p;
        p *= ((a - x) as f64 * (b - x) as f64) / ((x + 1) as f64 * (pool - a - b + x + 1) as f64);
        x += 1;
    }
    Some(x)
}

fn urn_draws<R: Rng>(pool: u64, k: u64, n: u64, rng: &mut R) -> u64 {
    let (draws, mut left) = (k.min(n), k.max(n));
    let (mut pool, mut hits) = (pool, 0);
    for _ in 0..draws {
        if rng.random_range(0..pool) < left {
            hits += 1;
            left -= 1;
        }
        pool -= 1;
    }
    hits
}

fn binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p == 0.0 {
        0
    } else if p == 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability validated").sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::{generate_seasonal_curve, SeasonShape, SeasonalParams};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn flu_curve(population: u64) -> EpidemicCurve {
        generate_seasonal_curve(&SeasonalParams::repeated(
            population,
            52,
            1,
            SeasonShape {
                peak_week: 20,
                attack_rate: 0.1,
                width: 4.0,
            },
        ))
        .unwrap()
        .quantized()
    }

    fn flu_care() -> CareModel {
        CareModel {
            p_visit_infected: 0.5,
            p_visit_uninfected: 0.05,
            sensitivity: 0.9,
            false_pos_rate: 0.02,
            bias_drift: None,
        }
    }

    #[test]
    fn inversion_matches_pmf() {
        // parameters the library sampler rejects
        let (pool, k, n) = (1_000_000u64, 20_000u64, 100u64);
        let mut rng = Substream::new(5).rng();
        let reps = 20_000;
        let mut hist = [0usize; 8];
        for _ in 0..reps {
            let x = invert_hypergeometric(pool, k, n, &mut rng).unwrap() as usize;
            if x < hist.len() {
                hist[x] += 1;
            }
        }
        // exact pmf by the product formula, independent of the recurrence
        let pmf = |x: u64| -> f64 {
            let ln_choose = |m: u64, r: u64| -> f64 { (0..r).map(|j| ((m - j) as f64 / (j + 1) as f64).ln()).sum() };
            (ln_choose(k, x) + ln_choose(pool - k, n - x) - ln_choose(pool, n)).exp()
        };
        for (x, &count) in hist.iter().enumerate() {
            let p = pmf(x as u64);
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((count as f64 / reps as f64 - p).abs() < 4.0 * se + 1e-4, "x={x}");
        }
    }

    #[test]
    fn urn_draws_match_moments() {
        let (pool, k, n) = (1_000_000u64, 999_000u64, 900u64);
        let mut rng = Substream::new(3).rng();
        let reps = 4000;
        let draws: Vec<f64> = (0..reps).map(|_| urn_draws(pool, k, n, &mut rng) as f64).collect();
        assert!(draws.iter().all(|&d| d <= n as f64));
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let p = k as f64 / pool as f64;
        let var = n as f64 * p * (1.0 - p) * (pool - n) as f64 / (pool - 1) as f64;
        assert!((mean - n as f64 * p).abs() < 4.0 * (var / reps as f64).sqrt());
    }

    #[test]
    fn equal_partition() {
        let p = make_partition(100, 4, 0.0).unwrap();
        assert_eq!(p.sizes(), &[25, 25, 25, 25]);
        assert_eq!(make_partition(100, 1, 0.7).unwrap().weights(), vec![1.0]);
    }

    #[test]
    fn skewed_partition_sums_to_population() {
        let p = make_partition(1_000_003, 7, 0.3).unwrap();
        assert_eq!(p.sizes().iter().sum::<u64>(), 1_000_003);
        assert!(p.sizes().windows(2).all(|w| w[0] >= w[1]));
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sentinel_network_scale() {
        let p = make_partition(300_000_000, 2800, 0.0).unwrap();
        assert_eq!(p.providers(), 2800);
        assert_eq!(p.population(), 300_000_000);
    }

    #[test]
    fn partition_rejects_more_providers_than_people() {
        assert!(make_partition(3, 4, 0.0).is_err());
        assert!(make_partition(3, 0, 0.0).is_err());
    }

    #[test]
    fn expected_feature_anchors() {
        let unbiased = CareRates {
            p_visit_infected: 0.3,
            p_visit_uninfected: 0.3,
            sensitivity: 1.0,
            false_pos_rate: 0.0,
        };
        assert_eq!(expected_feature(&unbiased, 0.037), Some(0.037));
        let rates = flu_care().at_interval(0);
        assert_abs_diff_eq!(expected_feature(&rates, 0.0).unwrap(), 0.02, epsilon = 1e-15);
        let nobody = CareRates {
            p_visit_infected: 0.0,
            p_visit_uninfected: 0.0,
            sensitivity: 1.0,
            false_pos_rate: 0.0,
        };
        assert_eq!(expected_feature(&nobody, 0.5), None);
    }

    #[test]
    fn expected_feature_matches_individual_simulation() {
        let rates = CareRates {
            p_visit_infected: 0.5,
            p_visit_uninfected: 0.05,
            sensitivity: 0.9,
            false_pos_rate: 0.02,
        };
        let sig = 0.02;
        let mut rng = Substream::new(11).rng();
        let (mut visits, mut diagnosed) = (0u64, 0u64);
        for _ in 0..1_000_000 {
            let infected = rng.random_bool(sig);
            let p_visit = if infected { 0.5 } else { 0.05 };
            if rng.random_bool(p_visit) {
                visits += 1;
                let p_diag = if infected { 0.9 } else { 0.02 };
                if rng.random_bool(p_diag) {
                    diagnosed += 1;
                }
            }
        }
        let estimate = diagnosed as f64 / visits as f64;
        let sd = (estimate * (1.0 - estimate) / visits as f64).sqrt();
        let analytic = expected_feature(&rates, sig).unwrap();
        assert!(
            (estimate - analytic).abs() <= 3.0 * sd,
            "simulated {estimate} vs analytic {analytic} (sd {sd})"
        );
    }

    #[test]
    fn perfect_channel_observes_signal() {
        let curve = flu_curve(200_000);
        let part = make_partition(200_000, 8, 0.5).unwrap();
        let (reports, decomp) =
            encode_traditional(&curve, &part, &CareModel::perfect(), Substream::new(3)).unwrap();
        for v in 0..curve.len() {
            let mut recovered = 0.0;
            for i in 0..part.providers() {
                let c = decomp.cell(v, i);
                let o = c.observed.unwrap();
                assert_eq!(o.f, c.sig);
                assert_eq!(o.ns, 0.0);
                assert_eq!(o.nr, 0.0);
                assert_eq!(reports.visits(v, i), part.sizes()[i]);
                recovered += part.weights()[i] * c.sig;
            }
            assert_abs_diff_eq!(recovered, curve.incidence()[v], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sensitivity_sees_only_false_positives() {
        let care = CareModel {
            sensitivity: 0.0,
            ..flu_care()
        };
        let rates = care.at_interval(0);
        let sig = 0.05;
        let share_uninfected = (1.0 - sig) * 0.05 / (sig * 0.5 + (1.0 - sig) * 0.05);
        assert_abs_diff_eq!(
            expected_feature(&rates, sig).unwrap(),
            0.02 * share_uninfected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn halving_symptomatic_visits_halves_true_positives() {
        let half = CareRates {
            p_visit_infected: 0.5,
            p_visit_uninfected: 0.0,
            sensitivity: 1.0,
            false_pos_rate: 0.0,
        };
        let full = CareRates {
            p_visit_infected: 1.0,
            ..half
        };
        // Expected diagnosed count per infected person is p_visit * sensitivity.
        let diag = |r: &CareRates| r.p_visit_infected * r.sensitivity;
        assert_eq!(diag(&half), 0.5 * diag(&full));

        let curve = flu_curve(400_000);
        let part = make_partition(400_000, 1, 0.0).unwrap();
        let total = |p: f64| -> u64 {
            let care = CareModel {
                p_visit_infected: p,
                p_visit_uninfected: 0.0,
                sensitivity: 1.0,
                false_pos_rate: 0.0,
                bias_drift: None,
            };
            let (r, _) = encode_traditional(&curve, &part, &care, Substream::new(5)).unwrap();
            (0..r.intervals()).map(|v| r.diagnosed(v, 0)).sum()
        };
        let ratio = total(0.5) as f64 / total(1.0) as f64;
        assert!((ratio - 0.5).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn replicate_mean_matches_expected_feature() {
        // One provider keeps the allocated infections fixed across replicates.
        let population = 100_000;
        let part = make_partition(population, 1, 0.0).unwrap();
        let curve = EpidemicCurve::new(population, vec![0.03]).unwrap();
        let care = flu_care();
        let replicates = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..replicates {
            let (_, d) = encode_traditional(&curve, &part, &care, Substream::new(99).child(r)).unwrap();
            let f = d.cell(0, 0).observed.unwrap().f;
            sum += f;
            sum_sq += f * f;
        }
        let n = replicates as f64;
        let mean = sum / n;
        let se = ((sum_sq / n - mean * mean) / n).sqrt();
        let expected = expected_feature(&care.at_interval(0), 0.03).unwrap();
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean} expected {expected} se {se}");
    }

    #[test]
    fn decomposition_identity_and_report_bounds() {
        let curve = flu_curve(50_000);
        let part = make_partition(50_000, 10, 0.2).unwrap();
        let (reports, decomp) = encode_traditional(&curve, &part, &flu_care(), Substream::new(1)).unwrap();
        for v in 0..curve.len() {
            let mut infected = 0.0;
            for i in 0..part.providers() {
                assert!(reports.diagnosed(v, i) <= reports.visits(v, i));
                assert!(reports.visits(v, i) <= part.sizes()[i]);
                let c = decomp.cell(v, i);
                assert!((0.0..=1.0).contains(&c.sig));
                infected += c.sig * part.sizes()[i] as f64;
                if let Some(o) = c.observed {
                    assert!((c.sig + o.ns + o.nr - o.f).abs() <= 1e-12);
                    assert_eq!(Some(o.f), reports.feature(v, i));
                }
            }
            assert_abs_diff_eq!(infected / 50_000.0, curve.incidence()[v], epsilon = 1e-12);
        }
    }

    #[test]
    fn no_visits_marks_cell_missing() {
        let care = CareModel {
            p_visit_infected: 0.0,
            p_visit_uninfected: 0.0,
            sensitivity: 1.0,
            false_pos_rate: 0.0,
            bias_drift: None,
        };
        let curve = flu_curve(1000);
        let part = make_partition(1000, 2, 0.0).unwrap();
        let (reports, decomp) = encode_traditional(&curve, &part, &care, Substream::new(0)).unwrap();
        assert!(decomp.cells().iter().all(|c| c.is_missing()));
        assert_eq!(reports.feature(3, 1), None);
        let mut buf = Vec::new();
        decomp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,,,1"));
    }

    #[test]
    fn bias_drift_validation() {
        let mut care = flu_care();
        care.bias_drift = Some(vec![1.0; 3]);
        assert!(care.validate(4).is_err());
        care.bias_drift = Some(vec![1.0, 3.0]);
        assert!(care.validate(2).is_err());
        care.bias_drift = Some(vec![1.0, 1.5]);
        care.validate(2).unwrap();
        assert_eq!(care.at_interval(1).p_visit_infected, 0.75);
    }

    #[test]
    fn population_mismatch_rejected() {
        let curve = flu_curve(1000);
        let part = make_partition(999, 2, 0.0).unwrap();
        assert!(encode_traditional(&curve, &part, &flu_care(), Substream::new(0)).is_err());
    }
}
