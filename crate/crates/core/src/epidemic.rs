//! Ground-truth epidemic curves.
//!
//! The curve holds per-interval incidence: people newly infected during the
//! interval divided by the population at risk. It is never observed directly
//! by any decoder; the channels only see it through their encoders.

use std::io::Write;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicCurve {
    population: u64,
    incidence: Vec<f64>,
}

impl EpidemicCurve {
    pub fn new(population: u64, incidence: Vec<f64>) -> Result<Self> {
        if population == 0 {
            return Err(invalid("population must be positive"));
        }
        if let Some((v, s)) = incidence
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || **s < 0.0 || **s > 1.0)
        {
            return Err(invalid(format!("incidence {s} at interval {v} outside [0, 1]")));
        }
        let total: f64 = incidence.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(invalid(format!(
                "cumulative incidence {total} exceeds 1 (a person is newly infected at most once)"
            )));
        }
        Ok(EpidemicCurve {
            population,
            incidence,
        })
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn incidence(&self) -> &[f64] {
        &self.incidence
    }

    pub fn len(&self) -> usize {
        self.incidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidence.is_empty()
    }

    /// Expected number of new infections in interval `v`.
    pub fn new_infections(&self, v: usize) -> f64 {
        self.incidence[v] * self.population as f64
    }

    /// Whole-person new infection counts. Rounds the cumulative curve so that
    /// per-interval rounding errors never accumulate.
    pub fn infection_counts(&self) -> Vec<u64> {
        let n = self.population as f64;
        let mut cumulative = 0.0;
        let mut prev = 0u64;
        self.incidence
            .iter()
            .map(|s| {
                cumulative += s;
                let rounded = ((cumulative * n).round() as u64).min(self.population);
                let count = rounded.saturating_sub(prev);
                prev = prev.max(rounded);
                count
            })
            .collect()
    }

    /// The curve realised in a finite population: every incidence becomes an
    /// integer count of people divided by `N`.
    pub fn quantized(&self) -> EpidemicCurve {
        let n = self.population as f64;
        EpidemicCurve {
            population: self.population,
            incidence: self
                .infection_counts()
                .into_iter()
                .map(|k| k as f64 / n)
                .collect(),
        }
    }

    pub fn peak_interval(&self) -> Option<usize> {
        self.incidence
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (v, &s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((v, s)),
            })
            .map(|(v, _)| v)
    }

    /// `interval,incidence`, interval 0-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interval", "incidence"])?;
        for (v, s) in self.incidence.iter().enumerate() {
            w.write_record([v.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shape of one season's Gaussian bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonShape {
    /// Week of the peak, 0-based within the season.
    pub peak_week: usize,
    /// Fraction of the population infected over the season.
    pub attack_rate: f64,
    /// Standard deviation of the bump in weeks.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalParams {
    pub population: u64,
    pub weeks_per_season: usize,
    pub seasons: Vec<SeasonShape>,
}

impl SeasonalParams {
    /// `count` identical seasons.
    pub fn repeated(population: u64, weeks_per_season: usize, count: usize, shape: SeasonShape) -> Self {
        SeasonalParams {
            population,
            weeks_per_season,
            seasons: vec![shape; count],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weeks_per_season == 0 {
            return Err(invalid("weeks_per_season must be positive"));
        }
        if self.seasons.is_empty() {
            return Err(invalid("at least one season is required"));
        }
        for (k, s) in self.seasons.iter().enumerate() {
            if !(0.0..1.0).contains(&s.attack_rate) {
                return Err(invalid(format!(
                    "season {k}: attack_rate {} must lie in [0, 1)",
                    s.attack_rate
                )));
            }
            if !(s.width > 0.0 && s.width.is_finite()) {
                return Err(invalid(format!("season {k}: width {} must be positive", s.width)));
            }
            if s.peak_week >= self.weeks_per_season {
                return Err(invalid(format!(
                    "season {k}: peak_week {} outside season of {} weeks",
                    s.peak_week, self.weeks_per_season
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian bump per season, truncated at the season boundaries and
/// renormalised so each season sums to its attack rate. Deterministic.
pub fn generate_seasonal_curve(params: &SeasonalParams) -> Result<EpidemicCurve> {
    params.validate()?;
    let weeks = params.weeks_per_season;
    let mut incidence = Vec::with_capacity(weeks * params.seasons.len());
    for season in &params.seasons {
        let bump: Vec<f64> = (0..weeks)
            .map(|t| {
                let z = (t as f64 - season.peak_week as f64) / season.width;
                (-0.5 * z * z).exp()
            })
            .collect();
        let mass: f64 = bump.iter().sum();
        incidence.extend(bump.iter().map(|b| season.attack_rate * b / mass));
    }
    EpidemicCurve::new(params.population, incidence)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirParams {
    /// Transmission rate per interval.
    pub beta: f64,
    /// Recovery rate per interval.
    pub gamma: f64,
    pub population: u64,
    /// Initially infectious fraction.
    pub initial_infected: f64,
    pub intervals: usize,
    /// Euler sub-steps per interval.
    pub substeps: usize,
}

impl SirParams {
    pub const DEFAULT_SUBSTEPS: usize = 10;

    pub fn new(beta: f64, gamma: f64, population: u64, initial_infected: f64, intervals: usize) -> Self {
        SirParams {
            beta,
            gamma,
            population,
            initial_infected,
            intervals,
            substeps: Self::DEFAULT_SUBSTEPS,
        }
    }
}

/// Compartment sizes in persons at an interval boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirState {
    pub susceptible: f64,
    pub infectious: f64,
    pub recovered: f64,
}

/// Deterministic discrete-time SIR. Returns the state at each interval
/// boundary (`intervals + 1` entries) and the new infections per interval.
pub fn simulate_sir(params: &SirParams) -> Result<(Vec<SirState>, Vec<f64>)> {
    if !(params.beta >= 0.0 && params.gamma >= 0.0) {
        return Err(invalid("beta and gamma must be nonnegative"));
    }
    if !(params.initial_infected > 0.0 && params.initial_infected < 1.0) {
        return Err(invalid(format!(
            "initial infected fraction {} must lie in (0, 1)",
            params.initial_infected
        )));
    }
    if params.population == 0 || params.substeps == 0 {
        return Err(invalid("population and substeps must be positive"));
    }
    let n = params.population as f64;
    let dt = 1.0 / params.substeps as f64;
    let mut state = SirState {
        susceptible: n * (1.0 - params.initial_infected),
        infectious: n * params.initial_infected,
        recovered: 0.0,
    };
    let mut states = Vec::with_capacity(params.intervals + 1);
    let mut new_infections = Vec::with_capacity(params.intervals);
    states.push(state);
    for v in 0..params.intervals {
        let mut infected_here = 0.0;
        for _ in 0..params.substeps {
            let infections = params.beta * state.susceptible * state.infectious / n * dt;
            let recoveries = params.gamma * state.infectious * dt;
            if infections > state.susceptible || recoveries > state.infectious + infections {
                return Err(Error::NegativeCompartment { interval: v });
            }
            state.susceptible -= infections;
            state.infectious += infections - recoveries;
            state.recovered += recoveries;
            infected_here += infections;
        }
        new_infections.push(infected_here);
        states.push(state);
    }
    Ok((states, new_infections))
}

pub fn generate_sir_curve(params: &SirParams) -> Result<EpidemicCurve> {
    let (_, new_infections) = simulate_sir(params)?;
    let n = params.population as f64;
    EpidemicCurve::new(
        params.population,
        new_infections.into_iter().map(|x| (x / n).clamp(0.0, 1.0)).collect(),
    )
}
