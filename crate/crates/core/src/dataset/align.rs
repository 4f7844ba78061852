use std::collections::HashMap;

use chrono::NaiveDateTime;

use super::{DatasetError, WeatherRecord};

pub const SUPPORTED_HORIZONS: [u32; 4] = [3, 6, 9, 12];

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRows {
    /// Forecast features with the measured GHI at the same valid time.
    pub rows: Vec<WeatherRecord>,
    /// Targets without a matching forecast.
    pub excluded: usize,
}

/// Pairs each target with the forecast issued `horizon` hours earlier for
/// the same location and valid time.
pub fn horizon_align(
    measurements: &[WeatherRecord],
    forecasts: &[WeatherRecord],
    horizon: u32,
) -> Result<AlignedRows, DatasetError> {
    if !SUPPORTED_HORIZONS.contains(&horizon) {
        return Err(DatasetError::InvalidHorizon(horizon));
    }
    let index: HashMap<(usize, NaiveDateTime), &WeatherRecord> = forecasts
        .iter()
        .filter(|f| f.issued_lead == Some(horizon))
        .map(|f| ((f.location_id, f.timestamp), f))
        .collect();
    if index.is_empty() {
        return Err(DatasetError::NoForecastData(horizon));
    }
    let mut rows = Vec::with_capacity(measurements.len());
    let mut excluded = 0;
    for m in measurements {
        match (index.get(&(m.location_id, m.timestamp)), m.ghi) {
            (Some(f), Some(ghi)) => {
                let mut row = (*f).clone();
                row.ghi = Some(ghi);
                rows.push(row);
            }
            _ => excluded += 1,
        }
    }
    Ok(AlignedRows { rows, excluded })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::rec;
    use super::*;

    fn forecast_of(m: &WeatherRecord, lead: u32) -> WeatherRecord {
        let mut f = m.clone();
        f.ghi = None;
        f.issued_lead = Some(lead);
        f.relative_humidity += 1.0;
        f
    }

    fn targets() -> Vec<WeatherRecord> {
        (0..10).map(|i| rec(i % 2, &format!("2017-08-01T{:02}:00", 8 + i), 100.0 + i as f64)).collect()
    }

    #[test]
    fn full_coverage_keeps_every_target() {
        let t = targets();
        let f: Vec<_> = t.iter().map(|m| forecast_of(m, 3)).collect();
        let a = horizon_align(&t, &f, 3).unwrap();
        assert_eq!(a.rows.len(), t.len());
        assert_eq!(a.excluded, 0);
        for (row, m) in a.rows.iter().zip(&t) {
            assert_eq!((row.location_id, row.timestamp, row.ghi), (m.location_id, m.timestamp, m.ghi));
            assert_eq!(row.relative_humidity, m.relative_humidity + 1.0);
        }
    }

    #[test]
    fn half_coverage_excludes_the_rest() {
        let t = targets();
        let f: Vec<_> = t.iter().step_by(2).map(|m| forecast_of(m, 3)).collect();
        let a = horizon_align(&t, &f, 3).unwrap();
        assert_eq!((a.rows.len(), a.excluded), (5, 5));
    }

    #[test]
    fn other_leads_are_ignored() {
        let t = targets();
        let f: Vec<_> = t.iter().map(|m| forecast_of(m, 6)).collect();
        assert!(matches!(horizon_align(&t, &f, 3), Err(DatasetError::NoForecastData(3))));
        assert!(matches!(horizon_align(&t, &f, 4), Err(DatasetError::InvalidHorizon(4))));
        let a = horizon_align(&t, &f, 6).unwrap();
        assert!(a.rows.iter().all(|r| r.issued_lead == Some(6)));
    }
}
