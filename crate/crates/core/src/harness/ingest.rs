//! Weekly CSV ingestion for real reference and trace data.
//!
//! Dates may be ISO week dates (`2019-W07`, `2019-W07-1`) or calendar dates
//! (`2019-02-11`); calendar dates are mapped to their ISO week. Nothing is
//! repaired: a duplicate, out-of-order or unparseable row is an error naming
//! the file line.

use std::path::Path;

use chrono::{Datelike, IsoWeek, NaiveDate, Weekday};

use crate::error::{Error, Result};

/// First ISO week of a surveillance season.
pub const SEASON_START_WEEK: u32 = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesSchema {
    pub date_column: String,
    pub value_columns: Vec<String>,
}

/// A run of weeks absent from the file between two consecutive rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    /// Row index (0-based, data rows only) after which the gap occurs.
    pub after: usize,
    pub missing_weeks: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedSeries {
    pub weeks: Vec<IsoWeek>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub gaps: Vec<Gap>,
}

impl IngestedSeries {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    /// Season label of each row: the year in which the season began.
    pub fn seasons(&self) -> Vec<i32> {
        self.weeks.iter().map(|w| season_of(*w)).collect()
    }

    pub fn season_count(&self) -> usize {
        let mut labels = self.seasons();
        labels.dedup();
        labels.len()
    }
}

pub fn season_of(week: IsoWeek) -> i32 {
    if week.week() >= SEASON_START_WEEK {
        week.year()
    } else {
        week.year() - 1
    }
}

/// Parse `YYYY-Www`, `YYYY-Www-D` or `YYYY-MM-DD`.
pub fn parse_week(text: &str) -> Option<IsoWeek> {
    let text = text.trim();
    if let Some((year, rest)) = text.split_once("-W") {
        let year: i32 = year.parse().ok()?;
        let (week, day) = match rest.split_once('-') {
            Some((w, d)) => (w, d.parse::<u32>().ok()?),
            None => (rest, 1),
        };
        if week.len() != 2 {
            return None;
        }
        let weekday = match day {
            1 => Weekday::Mon,
            2 => Weekday::Tue,
            3 => Weekday::Wed,
            4 => Weekday::Thu,
            5 => Weekday::Fri,
            6 => Weekday::Sat,
            7 => Weekday::Sun,
            _ => return None,
        };
        let date = NaiveDate::from_isoywd_opt(year, week.parse().ok()?, weekday)?;
        return Some(date.iso_week());
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d").ok().map(|d| d.iso_week())
}

fn monday(week: IsoWeek) -> NaiveDate {
    NaiveDate::from_isoywd_opt(week.year(), week.week(), Weekday::Mon).expect("valid iso week")
}

pub fn weeks_between(a: IsoWeek, b: IsoWeek) -> i64 {
    (monday(b) - monday(a)).num_days() / 7
}

pub fn ingest_series_csv(path: &Path, schema: &SeriesSchema) -> Result<IngestedSeries> {
    let fail = |row: usize, message: String| Error::Ingest {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(1, format!("missing column `{name}`")))
    };
    let date_at = find(&schema.date_column)?;
    let value_at: Vec<usize> = schema.value_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut weeks: Vec<IsoWeek> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); value_at.len()];
    let mut gaps = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            fail(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let raw = record.get(date_at).unwrap_or("");
        let week = parse_week(raw).ok_or_else(|| fail(line, format!("unparseable date `{raw}`")))?;
        if let Some(&last) = weeks.last() {
            let step = weeks_between(last, week);
            if step == 0 {
                return Err(fail(line, format!("duplicate week `{raw}`")));
            }
            if step < 0 {
                return Err(fail(line, format!("`{raw}` is earlier than the previous row")));
            }
            if step > 1 {
                gaps.push(Gap {
                    after: weeks.len() - 1,
                    missing_weeks: (step - 1) as u32,
                });
            }
        }
        for (k, &at) in value_at.iter().enumerate() {
            let cell = record.get(at).unwrap_or("");
            let x: f64 = cell
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| fail(line, format!("unparseable value `{cell}` in `{}`", schema.value_columns[k])))?;
            values[k].push(x);
        }
        weeks.push(week);
    }
    Ok(IngestedSeries {
        weeks,
        columns: schema.value_columns.iter().cloned().zip(values).collect(),
        gaps,
    })
}
