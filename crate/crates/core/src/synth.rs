//! Seeded synthetic weather: solar geometry, a clear-sky GHI model, a
//! spatially smoothed AR(1) cloud field and horizon-scaled forecast noise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, WeatherRecord, SUPPORTED_HORIZONS};
use crate::features::Season;
use crate::geo::{GeoError, Location, LocationSet, EARTH_RADIUS_KM};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// Share of clear-sky irradiance a full cloud cover blocks.
pub const CLOUD_ATTENUATION: f64 = 0.75;

/// Cloud persistence per 30-minute step.
pub const AR_COEFFICIENT_30MIN: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// South-west corner.
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub spacing_km: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 12, cols: 24, origin_lat: 29.2, origin_lon: -98.7, spacing_km: 3.0 }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major ids: `id = row * cols + col`, rows going north.
    pub fn locations(&self) -> Result<LocationSet, GeoError> {
        let dlat = self.spacing_km / KM_PER_DEGREE;
        let dlon = self.spacing_km / (KM_PER_DEGREE * self.origin_lat.to_radians().cos());
        let locs = (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| {
                Location::new(r * self.cols + c, self.origin_lat + r as f64 * dlat, self.origin_lon + c as f64 * dlon)
            })
            .collect();
        LocationSet::new(locs)
    }

    pub fn center_lon(&self) -> f64 {
        let dlon = self.spacing_km / (KM_PER_DEGREE * self.origin_lat.to_radians().cos());
        self.origin_lon + (self.cols.saturating_sub(1)) as f64 * dlon / 2.0
    }

    /// Grid neighbours (8-neighbourhood) of a location id.
    pub fn neighbours(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = ((id / self.cols) as isize, (id % self.cols) as isize);
        (-1..=1).flat_map(move |dr| (-1..=1).map(move |dc| (r + dr, c + dc))).filter_map(move |(rr, cc)| {
            let inside = rr >= 0 && cc >= 0 && (rr as usize) < self.rows && (cc as usize) < self.cols;
            (inside && (rr, cc) != (r, c)).then(|| rr as usize * self.cols + cc as usize)
        })
    }
}

/// Stationary standard deviation of the cloud process per season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudVolatility {
    pub winter: f64,
    pub spring: f64,
    pub summer: f64,
    pub fall: f64,
}

impl Default for CloudVolatility {
    fn default() -> Self {
        Self { winter: 0.5, spring: 0.35, summer: 0.2, fall: 0.35 }
    }
}

impl CloudVolatility {
    pub fn uniform(v: f64) -> Self {
        Self { winter: v, spring: v, summer: v, fall: v }
    }

    pub fn get(&self, season: Season) -> f64 {
        match season {
            Season::Winter => self.winter,
            Season::Spring => self.spring,
            Season::Summer => self.summer,
            Season::Fall => self.fall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub grid: GridSpec,
    /// First day, inclusive.
    pub start: NaiveDate,
    /// Last day, inclusive.
    pub end: NaiveDate,
    /// 30 or 60 minutes.
    pub step_minutes: u32,
    /// Emit every `day_stride`-th day only.
    pub day_stride: u32,
    pub cloud_volatility: CloudVolatility,
    /// Forecast noise std per hour of lead, as a fraction of each field's scale.
    pub forecast_noise_per_hour: f64,
    /// Measurement noise multiplier; 0 makes every field a deterministic
    /// function of geometry and cloud.
    pub weather_noise: f64,
    pub horizons: Vec<u32>,
    /// Longitude whose clock noon is solar noon; grid centre when absent.
    pub reference_meridian: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            start: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2017, 12, 31).expect("valid date"),
            step_minutes: 30,
            day_stride: 1,
            cloud_volatility: CloudVolatility::default(),
            forecast_noise_per_hour: 0.02,
            weather_noise: 1.0,
            horizons: vec![3, 6, 9],
            reference_meridian: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ConfigInvalid(m));
        let g = &self.grid;
        if g.len() < 2 {
            return bad(format!("grid {}x{} needs at least 2 locations", g.rows, g.cols));
        }
        if !(g.spacing_km > 0.0 && g.spacing_km.is_finite()) {
            return bad(format!("spacing {} km must be positive", g.spacing_km));
        }
        if !(-80.0..=80.0).contains(&g.origin_lat) || !(-180.0..=180.0).contains(&g.origin_lon) {
            return bad("grid origin outside supported coordinates".into());
        }
        if !matches!(self.step_minutes, 30 | 60) {
            return bad(format!("step {} min must be 30 or 60", self.step_minutes));
        }
        if self.day_stride == 0 {
            return bad("day_stride must be at least 1".into());
        }
        if self.end < self.start {
            return bad(format!("end {} precedes start {}", self.end, self.start));
        }
        let v = self.cloud_volatility;
        if [v.winter, v.spring, v.summer, v.fall].iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("cloud volatilities must be finite and >= 0".into());
        }
        for (name, x) in
            [("forecast_noise_per_hour", self.forecast_noise_per_hour), ("weather_noise", self.weather_noise)]
        {
            if !(x >= 0.0 && x.is_finite()) {
                return bad(format!("{name} must be finite and >= 0"));
            }
        }
        if let Some(h) = self.horizons.iter().find(|h| !SUPPORTED_HORIZONS.contains(h)) {
            return bad(format!("horizon {h} is not one of 3, 6, 9, 12"));
        }
        Ok(())
    }

    pub fn timestamps(&self) -> Vec<NaiveDateTime> {
        let per_day = 24 * 60 / self.step_minutes as i64;
        let mut out = Vec::new();
        let mut day = self.start;
        while day <= self.end {
            let midnight = day.and_hms_opt(0, 0, 0).expect("valid time");
            out.extend((0..per_day).map(|k| midnight + Duration::minutes(k * self.step_minutes as i64)));
            day += Duration::days(self.day_stride as i64);
        }
        out
    }

    pub fn row_count(&self) -> usize {
        self.grid.len() * self.timestamps().len()
    }
}

/// Solar zenith angle in degrees from the declination and hour angle.
/// `t` is clock time at `reference_meridian`; no equation-of-time term.
pub fn solar_zenith(lat: f64, lon: f64, t: NaiveDateTime, reference_meridian: f64) -> f64 {
    let declination = declination_deg(t.ordinal());
    let clock_hours = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let solar_time = clock_hours + (lon - reference_meridian) / 15.0;
    let hour_angle = 15.0 * (solar_time - 12.0);
    let (phi, delta, h) = (lat.to_radians(), declination.to_radians(), hour_angle.to_radians());
    let cos_z = phi.sin() * delta.sin() + phi.cos() * delta.cos() * h.cos();
    cos_z.clamp(-1.0, 1.0).acos().to_degrees().clamp(0.0, 180.0)
}

/// Solar declination in degrees for a 1-based day of the year.
pub fn declination_deg(day_of_year: u32) -> f64 {
    -23.44 * (360.0 / 365.0 * (day_of_year as f64 + 10.0)).to_radians().cos()
}

/// Haurwitz-form clear-sky GHI in W/m²; zero at or below the horizon.
pub fn clear_sky_ghi(sza_deg: f64) -> f64 {
    if sza_deg >= 90.0 {
        return 0.0;
    }
    let c = sza_deg.to_radians().cos();
    if c <= 0.0 {
        return 0.0;
    }
    1098.0 * c * (-0.057 / c).exp()
}

/// Scales of the weather fields, used for forecast noise.
const FIELD_SCALES: [(dataset::WeatherField, f64); 7] = [
    (dataset::WeatherField::DewPoint, 5.0),
    (dataset::WeatherField::WindSpeed, 2.0),
    (dataset::WeatherField::PrecipitableWater, 1.0),
    (dataset::WeatherField::WindDirection, 60.0),
    (dataset::WeatherField::RelativeHumidity, 15.0),
    (dataset::WeatherField::Temperature, 5.0),
    (dataset::WeatherField::Pressure, 5.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub locations: LocationSet,
    /// Ordered by location id, then time.
    pub measurements: Vec<WeatherRecord>,
    /// Cloud factor per measurement row, same order.
    pub cloud: Vec<f64>,
    pub forecasts: BTreeMap<u32, Vec<WeatherRecord>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let grid = &cfg.grid;
    let locations = grid.locations()?;
    let n = grid.len();
    let times = cfg.timestamps();
    let meridian = cfg.reference_meridian.unwrap_or_else(|| grid.center_lon());
    let phi = AR_COEFFICIENT_30MIN.powf(cfg.step_minutes as f64 / 30.0);
    let innovation_scale = (1.0 - phi * phi).sqrt();
    let neighbourhoods: Vec<Vec<usize>> =
        (0..n).map(|i| std::iter::once(i).chain(grid.neighbours(i)).collect()).collect();

    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(cfg.seed, i as u64)).collect();
    let mut state = vec![0.0; n];
    let mut raw = vec![0.0; n];
    let mut cloud = vec![0.0; n * times.len()];
    for (t, ts) in times.iter().enumerate() {
        let vol = cfg.cloud_volatility.get(Season::of_date(ts.date()));
        for (r, rng) in raw.iter_mut().zip(&mut rngs) {
            *r = normal(rng);
        }
        for i in 0..n {
            let hood = &neighbourhoods[i];
            // averaging k unit normals shrinks the variance by k
            let smoothed = hood.iter().map(|&j| raw[j]).sum::<f64>() / (hood.len() as f64).sqrt();
            state[i] = if t == 0 { vol * smoothed } else { phi * state[i] + vol * innovation_scale * smoothed };
            cloud[i * times.len() + t] = state[i].clamp(0.0, 1.0);
        }
    }

    let mut measurements = Vec::with_capacity(n * times.len());
    for loc in locations.iter() {
        let rng = &mut rngs[loc.id];
        let offset = 0.6 * ((loc.id % grid.cols) as f64 / grid.cols as f64 - 0.5);
        for (t, ts) in times.iter().enumerate() {
            let c = cloud[loc.id * times.len() + t];
            measurements.push(weather_at(loc, *ts, c, meridian, offset, cfg.weather_noise, rng));
        }
    }

    let mut forecasts = BTreeMap::new();
    for (k, &h) in cfg.horizons.iter().enumerate() {
        let mut rows = Vec::with_capacity(measurements.len());
        let sd = cfg.forecast_noise_per_hour * h as f64;
        for (i, m) in measurements.iter().enumerate() {
            if i % times.len() == 0 {
                rngs[m.location_id] = stream(cfg.seed, ((k as u64 + 1) << 32) | m.location_id as u64);
            }
            let rng = &mut rngs[m.location_id];
            let mut f = m.clone();
            f.ghi = None;
            f.issued_lead = Some(h);
            for (field, scale) in FIELD_SCALES {
                let v = f.get(field).unwrap_or_default() + sd * scale * normal(rng);
                f.set(field, v);
            }
            f.relative_humidity = f.relative_humidity.clamp(0.0, 100.0);
            f.wind_speed = f.wind_speed.max(0.0);
            f.precipitable_water = f.precipitable_water.max(0.0);
            f.wind_direction = f.wind_direction.rem_euclid(360.0);
            rows.push(f);
        }
        forecasts.insert(h, rows);
    }
    Ok(SynthOutput { locations, measurements, cloud, forecasts })
}

/// One measurement. Signs of association with GHI: negative for relative
/// humidity, pressure and zenith angle; positive for wind speed; near zero
/// for dew point, precipitable water and wind direction.
fn weather_at(
    loc: &Location,
    ts: NaiveDateTime,
    cloud: f64,
    meridian: f64,
    offset: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> WeatherRecord {
    let sza = solar_zenith(loc.latitude, loc.longitude, ts, meridian);
    let ghi = clear_sky_ghi(sza) * (1.0 - CLOUD_ATTENUATION * cloud);
    let sun = sza.to_radians().cos().max(0.0);
    let annual = (2.0 * std::f64::consts::PI * (ts.ordinal() as f64 - 15.0) / 365.25).cos();
    let base_temp = 20.0 - 8.0 * annual + offset;
    let mut e = || noise * normal(rng);

    let temperature = base_temp + 8.0 * sun * (1.0 - 0.2 * cloud) + 1.5 * e();
    let dew_point = base_temp - 8.0 + 1.0 * cloud + 2.0 * e();
    let relative_humidity = (55.0 + 20.0 * cloud - 20.0 * sun + 6.0 * e()).clamp(0.0, 100.0);
    let wind_speed = (2.5 + 3.0 * sun + 1.0 * cloud + 0.8 * e()).max(0.0);
    let precipitable_water = (2.0 - 0.8 * annual + 0.5 * cloud + 0.4 * e()).max(0.0);
    let wind_direction = (170.0 + 40.0 * annual + 30.0 * e()).rem_euclid(360.0);
    let pressure = 1013.0 + 3.0 * annual - 4.0 * cloud + 2.0 * e();
    WeatherRecord {
        location_id: loc.id,
        timestamp: ts,
        dew_point,
        solar_zenith_angle: sza,
        wind_speed,
        precipitable_water,
        wind_direction,
        relative_humidity,
        temperature,
        pressure: Some(pressure),
        ghi: Some(ghi),
        issued_lead: None,
    }
}

pub fn forecast_file_name(horizon: u32) -> String {
    format!("forecast_h{horizon}.csv")
}

impl SynthOutput {
    /// Writes `locations.csv`, `measurements.csv` and one forecast file per
    /// horizon into `dir`; returns the written paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("locations.csv");
        self.locations.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        written.push(path);
        let path = dir.join("measurements.csv");
        dataset::write_path(&self.measurements, &path)?;
        written.push(path);
        for (h, rows) in &self.forecasts {
            let path = dir.join(forecast_file_name(*h));
            dataset::write_path(rows, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}
