//! Weather/GHI records: file ingestion, forecast alignment, temporal splits
//! and training-set ablations.

mod ablate;
mod align;
mod io;
mod split;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablate::{ablate, Ablation, AblationSpec};
pub use align::{horizon_align, AlignedRows, SUPPORTED_HORIZONS};
pub use io::{ingest, ingest_path, write_csv, write_path, Ingested};
pub use split::{split, Split, SplitName, SplitSpec};

use crate::stats::pearson;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {reason}")]
    UnparseableRow { line: u64, reason: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("no forecast rows with a {0} h lead")]
    NoForecastData(u32),
    #[error("horizon {0} h is not one of 3, 6, 9, 12")]
    InvalidHorizon(u32),
    #[error("split `{split}`: month {month} has no records")]
    EmptySplit { split: String, month: u32 },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("ablation parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("input must be non-negative: {0}")]
    NegativeInput(&'static str),
    #[error("efficiency {0} exceeds 1")]
    EfficiencyAboveOne(f64),
    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// The weather attributes a record carries, in file column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherField {
    DewPoint,
    SolarZenithAngle,
    WindSpeed,
    PrecipitableWater,
    WindDirection,
    RelativeHumidity,
    Temperature,
    Pressure,
}

/// The seven measured attributes used for training by default.
pub const DEFAULT_WEATHER_FIELDS: [WeatherField; 7] = [
    WeatherField::DewPoint,
    WeatherField::SolarZenithAngle,
    WeatherField::WindSpeed,
    WeatherField::PrecipitableWater,
    WeatherField::WindDirection,
    WeatherField::RelativeHumidity,
    WeatherField::Temperature,
];

impl WeatherField {
    pub const ALL: [WeatherField; 8] = [
        WeatherField::DewPoint,
        WeatherField::SolarZenithAngle,
        WeatherField::WindSpeed,
        WeatherField::PrecipitableWater,
        WeatherField::WindDirection,
        WeatherField::RelativeHumidity,
        WeatherField::Temperature,
        WeatherField::Pressure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeatherField::DewPoint => "dew_point",
            WeatherField::SolarZenithAngle => "solar_zenith_angle",
            WeatherField::WindSpeed => "wind_speed",
            WeatherField::PrecipitableWater => "precipitable_water",
            WeatherField::WindDirection => "wind_direction",
            WeatherField::RelativeHumidity => "relative_humidity",
            WeatherField::Temperature => "temperature",
            WeatherField::Pressure => "pressure",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub location_id: usize,
    /// Local clock time as stored in the file; valid time for forecasts.
    pub timestamp: NaiveDateTime,
    pub dew_point: f64,
    pub solar_zenith_angle: f64,
    pub wind_speed: f64,
    pub precipitable_water: f64,
    pub wind_direction: f64,
    pub relative_humidity: f64,
    pub temperature: f64,
    pub pressure: Option<f64>,
    /// Absent in forecast files.
    pub ghi: Option<f64>,
    /// Forecast lead in hours; `None` for measurements.
    pub issued_lead: Option<u32>,
}

impl WeatherRecord {
    pub fn is_forecast(&self) -> bool {
        self.issued_lead.is_some()
    }

    pub fn get(&self, field: WeatherField) -> Option<f64> {
        Some(match field {
            WeatherField::DewPoint => self.dew_point,
            WeatherField::SolarZenithAngle => self.solar_zenith_angle,
            WeatherField::WindSpeed => self.wind_speed,
            WeatherField::PrecipitableWater => self.precipitable_water,
            WeatherField::WindDirection => self.wind_direction,
            WeatherField::RelativeHumidity => self.relative_humidity,
            WeatherField::Temperature => self.temperature,
            WeatherField::Pressure => return self.pressure,
        })
    }

    pub fn set(&mut self, field: WeatherField, value: f64) {
        match field {
            WeatherField::DewPoint => self.dew_point = value,
            WeatherField::SolarZenithAngle => self.solar_zenith_angle = value,
            WeatherField::WindSpeed => self.wind_speed = value,
            WeatherField::PrecipitableWater => self.precipitable_water = value,
            WeatherField::WindDirection => self.wind_direction = value,
            WeatherField::RelativeHumidity => self.relative_humidity = value,
            WeatherField::Temperature => self.temperature = value,
            WeatherField::Pressure => self.pressure = Some(value),
        }
    }
}

/// Solar power from irradiance: `ghi * area * efficiency`.
pub fn irradiance_to_power(ghi: f64, area_m2: f64, efficiency: f64) -> Result<f64, DatasetError> {
    if ghi.is_nan() || ghi < 0.0 {
        return Err(DatasetError::NegativeInput("ghi"));
    }
    if area_m2.is_nan() || area_m2 < 0.0 {
        return Err(DatasetError::NegativeInput("area"));
    }
    if efficiency.is_nan() || efficiency < 0.0 {
        return Err(DatasetError::NegativeInput("efficiency"));
    }
    if efficiency > 1.0 {
        return Err(DatasetError::EfficiencyAboveOne(efficiency));
    }
    Ok(ghi * area_m2 * efficiency)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub field: WeatherField,
    /// `None` when the feature (or GHI) is constant over the records.
    pub r: Option<f64>,
}

/// Pearson correlation of each field with GHI over records that carry it.
pub fn correlation_table(records: &[WeatherRecord], fields: &[WeatherField]) -> Result<Vec<Correlation>, DatasetError> {
    if records.len() < 2 {
        return Err(DatasetError::TooFewRecords(records.len()));
    }
    Ok(fields
        .iter()
        .map(|&field| {
            let (x, y): (Vec<f64>, Vec<f64>) = records.iter().filter_map(|r| Some((r.get(field)?, r.ghi?))).unzip();
            Correlation { field, r: pearson(&x, &y) }
        })
        .collect())
}

pub fn format_correlation_table(rows: &[Correlation]) -> String {
    let mut out = String::from("feature,correlation_with_ghi\n");
    for c in rows {
        match c.r {
            Some(r) => out.push_str(&format!("{},{:.3}\n", c.field.name(), r)),
            None => out.push_str(&format!("{},undefined\n", c.field.name())),
        }
    }
    out
}
