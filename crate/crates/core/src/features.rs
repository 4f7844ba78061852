//! Model input assembly: spatial embedding row, weather attributes and
//! one-hot temporal embedding per record, followed by min-max scaling.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{WeatherField, WeatherRecord};
use crate::embedding::Embedding;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid timestamp `{0}`")]
    InvalidTimestamp(String),
    #[error("column schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("record references location {location} but the embedding has {rows} rows")]
    UnknownLocation { location: usize, rows: usize },
    #[error("embedding has no rows")]
    MissingEmbedding,
    #[error("record at location {location} lacks `{field}`")]
    MissingValue { location: usize, field: &'static str },
    #[error("cannot fit a scaler on zero rows")]
    EmptyFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    /// One-hot block order.
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
        }
    }

    /// Astronomical season from the calendar date: spring starts Mar 20,
    /// summer Jun 21, fall Sep 22, winter Dec 21.
    pub fn of_date(date: NaiveDate) -> Season {
        match (date.month(), date.day()) {
            (m, d) if (m, d) >= (12, 21) || (m, d) < (3, 20) => Season::Winter,
            (m, d) if (m, d) < (6, 21) => Season::Spring,
            (m, d) if (m, d) < (9, 22) => Season::Summer,
            _ => Season::Fall,
        }
    }
}

impl std::str::FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Season::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown season `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalEmbedding {
    pub hour: u8,
    pub season: Season,
}

pub const HOUR_SLOTS: usize = 24;
pub const ONE_HOT_WIDTH: usize = HOUR_SLOTS + Season::ALL.len();

/// Hour of the stored (local) clock time and the season of its date.
pub fn temporal_embed(ts: NaiveDateTime) -> TemporalEmbedding {
    TemporalEmbedding { hour: ts.hour() as u8, season: Season::of_date(ts.date()) }
}

/// Parses `YYYY-MM-DDTHH:MM` and embeds it.
pub fn temporal_embed_str(s: &str) -> Result<TemporalEmbedding, FeatureError> {
    NaiveDateTime::parse_from_str(s, crate::dataset::TIMESTAMP_FORMAT)
        .map(temporal_embed)
        .map_err(|_| FeatureError::InvalidTimestamp(s.to_string()))
}

/// 24 hour slots followed by 4 season slots (winter, spring, summer, fall).
pub fn one_hot(t: TemporalEmbedding) -> [f64; ONE_HOT_WIDTH] {
    let mut out = [0.0; ONE_HOT_WIDTH];
    out[t.hour as usize] = 1.0;
    out[HOUR_SLOTS + t.season.index()] = 1.0;
    out
}

pub fn one_hot_column_names() -> Vec<String> {
    (0..HOUR_SLOTS)
        .map(|h| format!("hour_{h}"))
        .chain(Season::ALL.iter().map(|s| format!("season_{}", s.name())))
        .collect()
}

/// Row-major feature matrix. Location id and timestamp ride along as
/// metadata and never enter a model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub values: Vec<f64>,
    pub location_ids: Vec<usize>,
    pub timestamps: Vec<NaiveDateTime>,
}

impl FeatureMatrix {
    pub fn empty(columns: Vec<String>) -> Self {
        Self { columns, values: Vec::new(), location_ids: Vec::new(), timestamps: Vec::new() }
    }

    /// Matrix without metadata, mostly for tests and FFI callers.
    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { columns, values, location_ids: Vec::new(), timestamps: Vec::new() }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.columns.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols().max(1))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted_on: usize,
}

impl ScalerParams {
    pub fn fit(train: &FeatureMatrix) -> Result<Self, FeatureError> {
        if train.n_rows() == 0 {
            return Err(FeatureError::EmptyFit);
        }
        let p = train.n_cols();
        let mut min = vec![f64::INFINITY; p];
        let mut max = vec![f64::NEG_INFINITY; p];
        for row in train.rows() {
            for j in 0..p {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(Self { columns: train.columns.clone(), min, max, fitted_on: train.n_rows() })
    }

    /// `(x - min) / (max - min)`; constant columns map to 0. Values outside
    /// the fitted range are left unclipped.
    pub fn scale_row(&self, row: &mut [f64]) {
        for ((x, lo), hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
        }
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        if m.columns != self.columns {
            return Err(FeatureError::SchemaMismatch(format!(
                "scaler fitted on {} columns, matrix has {}",
                self.columns.len(),
                m.columns.len()
            )));
        }
        let mut out = m.clone();
        let p = out.n_cols();
        if p > 0 {
            for row in out.values.chunks_exact_mut(p) {
                self.scale_row(row);
            }
        }
        Ok(out)
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for ((x, lo), hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
            *x = lo + *x * (hi - lo);
        }
    }
}

/// Whether [`assemble`] fits a fresh scaler or reuses one.
#[derive(Debug, Clone, Copy)]
pub enum Scaling<'a> {
    Fit,
    Use(&'a ScalerParams),
    /// Leave values unscaled.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub features: FeatureMatrix,
    pub targets: Vec<f64>,
    pub scaler: Option<ScalerParams>,
}

pub fn column_layout(dims: usize, weather: &[WeatherField]) -> Vec<String> {
    (0..dims)
        .map(|k| format!("e{k}"))
        .chain(weather.iter().map(|f| f.name().to_string()))
        .chain(one_hot_column_names())
        .collect()
}

/// One row per record: `[embedding row, weather values, one-hot(hour, season)]`,
/// target GHI. Records are never dropped here.
pub fn assemble(
    embedding: &Embedding,
    records: &[WeatherRecord],
    weather: &[WeatherField],
    scaling: Scaling<'_>,
) -> Result<Assembled, FeatureError> {
    let columns = column_layout(embedding.dims, weather);
    if embedding.n == 0 && !records.is_empty() {
        return Err(FeatureError::MissingEmbedding);
    }
    let mut m = FeatureMatrix::empty(columns);
    m.values.reserve(records.len() * m.n_cols());
    let mut targets = Vec::with_capacity(records.len());
    for r in records {
        if r.location_id >= embedding.n {
            return Err(FeatureError::UnknownLocation { location: r.location_id, rows: embedding.n });
        }
        m.values.extend_from_slice(embedding.row(r.location_id));
        for &f in weather {
            let v = r.get(f).ok_or(FeatureError::MissingValue { location: r.location_id, field: f.name() })?;
            m.values.push(v);
        }
        m.values.extend_from_slice(&one_hot(temporal_embed(r.timestamp)));
        targets.push(r.ghi.ok_or(FeatureError::MissingValue { location: r.location_id, field: "ghi" })?);
        m.location_ids.push(r.location_id);
        m.timestamps.push(r.timestamp);
    }

    let (features, scaler) = match scaling {
        Scaling::None => (m, None),
        Scaling::Use(params) => (params.apply(&m)?, Some(params.clone())),
        Scaling::Fit => {
            let params = ScalerParams::fit(&m)?;
            (params.apply(&m)?, Some(params))
        }
    };
    Ok(Assembled { features, targets, scaler })
}
