//! Weather CSV reader/writer.
//!
//! Header: `location_id,timestamp,dew_point,solar_zenith_angle,wind_speed,
//! precipitable_water,wind_direction,relative_humidity,temperature[,pressure],
//! ghi[,issued_lead]`. Missing values are empty fields. A file with an
//! `issued_lead` column is a forecast file and may leave `ghi` empty.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use super::{DatasetError, WeatherField, WeatherRecord, TIMESTAMP_FORMAT};

const LEADING: [&str; 2] = ["location_id", "timestamp"];

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<WeatherRecord>,
    /// Rows dropped for a missing feature or target.
    pub dropped: usize,
}

impl Ingested {
    pub fn total_rows(&self) -> usize {
        self.records.len() + self.dropped
    }

    pub fn drop_fraction(&self) -> f64 {
        if self.total_rows() == 0 {
            0.0
        } else {
            self.dropped as f64 / self.total_rows() as f64
        }
    }
}

struct Layout {
    has_pressure: bool,
    has_lead: bool,
}

fn expected_header(layout: &Layout) -> Vec<&'static str> {
    let mut cols: Vec<&str> = LEADING.to_vec();
    cols.extend(WeatherField::ALL[..7].iter().map(|f| f.name()));
    if layout.has_pressure {
        cols.push("pressure");
    }
    cols.push("ghi");
    if layout.has_lead {
        cols.push("issued_lead");
    }
    cols
}

fn parse_header(header: &csv::StringRecord) -> Result<Layout, DatasetError> {
    let cols: Vec<&str> = header.iter().collect();
    for has_pressure in [false, true] {
        for has_lead in [false, true] {
            let layout = Layout { has_pressure, has_lead };
            if cols == expected_header(&layout) {
                return Ok(layout);
            }
        }
    }
    Err(DatasetError::MalformedHeader(cols.join(",")))
}

fn on_lattice(ts: &NaiveDateTime) -> bool {
    ts.second() == 0 && ts.minute().is_multiple_of(30)
}

pub fn ingest<R: Read>(reader: R) -> Result<Ingested, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DatasetError::EmptyFile);
    }
    let layout = parse_header(&header)?;
    let mut records = Vec::new();
    let mut dropped = 0;
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        match parse_row(&rec, &layout, line)? {
            Some(r) => records.push(r),
            None => dropped += 1,
        }
    }
    if records.is_empty() && dropped == 0 {
        return Err(DatasetError::EmptyFile);
    }
    Ok(Ingested { records, dropped })
}

pub fn ingest_path(path: &Path) -> Result<Ingested, DatasetError> {
    ingest(BufReader::new(File::open(path)?))
}

/// Parses one row; `Ok(None)` means the row has a missing value and is dropped.
fn parse_row(rec: &csv::StringRecord, layout: &Layout, line: u64) -> Result<Option<WeatherRecord>, DatasetError> {
    let bad = |reason: String| DatasetError::UnparseableRow { line, reason };
    let expected = expected_header(layout).len();
    if rec.len() != expected {
        return Err(bad(format!("expected {expected} fields, found {}", rec.len())));
    }
    let location_id: usize = rec[0].trim().parse().map_err(|_| bad(format!("bad location_id `{}`", &rec[0])))?;
    let timestamp = NaiveDateTime::parse_from_str(rec[1].trim(), TIMESTAMP_FORMAT)
        .map_err(|_| bad(format!("bad timestamp `{}`", &rec[1])))?;
    if !on_lattice(&timestamp) {
        return Err(bad(format!("timestamp {} is not on the 30-minute lattice", &rec[1])));
    }

    let number = |idx: usize, name: &str| -> Result<Option<f64>, DatasetError> {
        let s = rec[idx].trim();
        if s.is_empty() {
            return Ok(None);
        }
        let x: f64 = s.parse().map_err(|_| bad(format!("`{name}` is not a number: `{s}`")))?;
        if !x.is_finite() {
            return Err(bad(format!("`{name}` is not finite")));
        }
        Ok(Some(x))
    };

    let mut values = [0.0; 7];
    let mut missing = false;
    for (k, f) in WeatherField::ALL[..7].iter().enumerate() {
        match number(2 + k, f.name())? {
            Some(v) => values[k] = v,
            None => missing = true,
        }
    }
    let mut idx = 9;
    let pressure = if layout.has_pressure {
        let p = number(idx, "pressure")?;
        missing |= p.is_none();
        idx += 1;
        p
    } else {
        None
    };
    let ghi = number(idx, "ghi")?;
    idx += 1;
    let issued_lead = if layout.has_lead {
        let s = rec[idx].trim();
        let lead: u32 = s.parse().map_err(|_| bad(format!("bad issued_lead `{s}`")))?;
        Some(lead)
    } else {
        missing |= ghi.is_none();
        None
    };

    let [dew_point, solar_zenith_angle, wind_speed, precipitable_water, wind_direction, relative_humidity, temperature] =
        values;
    // bounds apply to whatever is present, so a violating row errors even if
    // another field is missing
    if !(0.0..=180.0).contains(&solar_zenith_angle) {
        return Err(bad(format!("solar_zenith_angle {solar_zenith_angle} outside [0, 180]")));
    }
    if !(0.0..=100.0).contains(&relative_humidity) {
        return Err(bad(format!("relative_humidity {relative_humidity} outside [0, 100]")));
    }
    if let Some(g) = ghi {
        if g < 0.0 {
            return Err(bad(format!("ghi {g} is negative")));
        }
    }
    if missing {
        return Ok(None);
    }
    Ok(Some(WeatherRecord {
        location_id,
        timestamp,
        dew_point,
        solar_zenith_angle,
        wind_speed,
        precipitable_water,
        wind_direction,
        relative_humidity,
        temperature,
        pressure,
        ghi,
        issued_lead,
    }))
}

/// Canonical serialisation. The `pressure` column is written when every
/// record carries pressure; `issued_lead` when every record is a forecast.
pub fn write_csv<W: Write>(records: &[WeatherRecord], writer: W) -> Result<(), DatasetError> {
    let layout = Layout {
        has_pressure: !records.is_empty() && records.iter().all(|r| r.pressure.is_some()),
        has_lead: !records.is_empty() && records.iter().all(|r| r.issued_lead.is_some()),
    };
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(expected_header(&layout))?;
    let mut row: Vec<String> = Vec::with_capacity(13);
    for r in records {
        row.clear();
        row.push(r.location_id.to_string());
        row.push(r.timestamp.format(TIMESTAMP_FORMAT).to_string());
        for f in &WeatherField::ALL[..7] {
            row.push(r.get(*f).unwrap_or_default().to_string());
        }
        if layout.has_pressure {
            row.push(r.pressure.unwrap_or_default().to_string());
        }
        row.push(r.ghi.map(|g| g.to_string()).unwrap_or_default());
        if layout.has_lead {
            row.push(r.issued_lead.unwrap_or_default().to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_path(records: &[WeatherRecord], path: &Path) -> Result<(), DatasetError> {
    write_csv(records, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::rec;
    use super::*;

    const HEADER: &str = "location_id,timestamp,dew_point,solar_zenith_angle,wind_speed,precipitable_water,wind_direction,relative_humidity,temperature,ghi\n";

    fn file_with_rows(n: usize, blank_dew_at: Option<usize>) -> String {
        let mut s = HEADER.to_string();
        for i in 0..n {
            let dew = if Some(i) == blank_dew_at { String::new() } else { "11.5".into() };
            s.push_str(&format!(
                "{},2017-06-01T{:02}:{:02},{dew},45.2,3.1,2.2,180,60,28.5,512.25\n",
                i % 5,
                (i / 2) % 24,
                30 * (i % 2)
            ));
        }
        s
    }

    #[test]
    fn drops_rows_with_missing_values() {
        let ing = ingest(file_with_rows(100, Some(17)).as_bytes()).unwrap();
        assert_eq!(ing.records.len(), 99);
        assert_eq!(ing.dropped, 1);
        assert!((ing.drop_fraction() - 0.01).abs() < 1e-12);

        let full = ingest(file_with_rows(100, None).as_bytes()).unwrap();
        assert_eq!(full.dropped, 0);
        assert_eq!(full.drop_fraction(), 0.0);
    }

    #[test]
    fn out_of_range_humidity_is_an_error_with_line() {
        let mut s = file_with_rows(3, None);
        s.push_str("0,2017-06-02T00:00,11.5,45.2,3.1,2.2,180,150,28.5,512.25\n");
        match ingest(s.as_bytes()) {
            Err(DatasetError::UnparseableRow { line, reason }) => {
                assert_eq!(line, 5);
                assert!(reason.contains("relative_humidity"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_row_errors() {
        assert!(matches!(ingest("".as_bytes()), Err(DatasetError::EmptyFile)));
        assert!(matches!(ingest(HEADER.as_bytes()), Err(DatasetError::EmptyFile)));
        assert!(matches!(ingest("a,b\n1,2\n".as_bytes()), Err(DatasetError::MalformedHeader(_))));
        let off_lattice = format!("{HEADER}0,2017-06-01T10:15,11.5,45.2,3.1,2.2,180,60,28.5,512\n");
        assert!(matches!(ingest(off_lattice.as_bytes()), Err(DatasetError::UnparseableRow { line: 2, .. })));
        let neg_ghi = format!("{HEADER}0,2017-06-01T10:00,11.5,45.2,3.1,2.2,180,60,28.5,-3\n");
        assert!(ingest(neg_ghi.as_bytes()).is_err());
        let text = format!("{HEADER}0,2017-06-01T10:00,abc,45.2,3.1,2.2,180,60,28.5,5\n");
        assert!(ingest(text.as_bytes()).is_err());
    }

    #[test]
    fn forecast_files_allow_empty_ghi() {
        let text = "location_id,timestamp,dew_point,solar_zenith_angle,wind_speed,precipitable_water,wind_direction,relative_humidity,temperature,pressure,ghi,issued_lead\n\
                    3,2017-08-01T12:00,11.5,45.2,3.1,2.2,180,60,28.5,1010.5,,3\n";
        let ing = ingest(text.as_bytes()).unwrap();
        assert_eq!(ing.records.len(), 1);
        let r = &ing.records[0];
        assert_eq!((r.ghi, r.issued_lead, r.pressure), (None, Some(3), Some(1010.5)));
        assert!(r.is_forecast());
    }

    #[test]
    fn canonical_round_trip_is_a_fixed_point() {
        let mut recs = vec![rec(0, "2017-06-01T10:00", 512.25), rec(4, "2017-06-01T10:30", 0.0)];
        recs[1].temperature = 0.1 + 0.2;
        let mut first = Vec::new();
        write_csv(&recs, &mut first).unwrap();
        let back = ingest(first.as_slice()).unwrap();
        assert_eq!(back.records, recs);
        let mut second = Vec::new();
        write_csv(&back.records, &mut second).unwrap();
        assert_eq!(first, second);

        for r in &mut recs {
            r.pressure = Some(1001.0);
            r.ghi = None;
            r.issued_lead = Some(6);
        }
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        assert_eq!(ingest(buf.as_slice()).unwrap().records, recs);
    }
}
