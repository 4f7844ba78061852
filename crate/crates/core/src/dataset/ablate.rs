use std::collections::BTreeSet;

use chrono::Timelike;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, WeatherRecord};
use crate::features::{temporal_embed, Season};

/// Simulated missing-data mechanism applied to training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Ablation {
    /// Drop each row independently with probability `fraction`.
    RandomRows {
        fraction: f64,
    },
    /// Drop every row of `count` uniformly chosen locations.
    DropLocations {
        count: usize,
    },
    DropSeason {
        season: Season,
    },
    /// Keep only on-the-hour rows whose hour is a multiple of `hours`.
    Downsample {
        hours: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    #[serde(flatten)]
    pub ablation: Ablation,
    #[serde(default)]
    pub seed: u64,
}

impl AblationSpec {
    pub fn new(ablation: Ablation, seed: u64) -> Self {
        Self { ablation, seed }
    }

    /// Short label used in report tables, e.g. `random_rows:0.5`.
    pub fn label(&self) -> String {
        match &self.ablation {
            Ablation::RandomRows { fraction } => format!("random_rows:{fraction}"),
            Ablation::DropLocations { count } => format!("drop_locations:{count}"),
            Ablation::DropSeason { season } => format!("drop_season:{}", season.name()),
            Ablation::Downsample { hours } => format!("downsample:{hours}h"),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        match self.ablation {
            Ablation::RandomRows { fraction } if !(0.0..1.0).contains(&fraction) => {
                Err(DatasetError::ParameterOutOfRange(format!("random_rows fraction {fraction} not in [0, 1)")))
            }
            Ablation::Downsample { hours } if !(1..=24).contains(&hours) => {
                Err(DatasetError::ParameterOutOfRange(format!("downsample resolution {hours} h not in 1..=24")))
            }
            _ => Ok(()),
        }
    }
}

/// Applies an ablation to training records. The generator is seeded only by
/// `spec.seed`, independent of any model seed.
pub fn ablate(train: &[WeatherRecord], spec: &AblationSpec) -> Result<Vec<WeatherRecord>, DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kept = match &spec.ablation {
        Ablation::RandomRows { fraction } => train.iter().filter(|_| rng.gen::<f64>() >= *fraction).cloned().collect(),
        Ablation::DropLocations { count } => {
            let ids: Vec<usize> = train.iter().map(|r| r.location_id).collect::<BTreeSet<_>>().into_iter().collect();
            if *count >= ids.len() {
                return Err(DatasetError::ParameterOutOfRange(format!(
                    "cannot drop {count} of {} locations",
                    ids.len()
                )));
            }
            let dropped: BTreeSet<usize> = ids.choose_multiple(&mut rng, *count).copied().collect();
            train.iter().filter(|r| !dropped.contains(&r.location_id)).cloned().collect()
        }
        Ablation::DropSeason { season } => {
            train.iter().filter(|r| temporal_embed(r.timestamp).season != *season).cloned().collect()
        }
        Ablation::Downsample { hours } => {
            train.iter().filter(|r| r.timestamp.minute() == 0 && r.timestamp.hour() % hours == 0).cloned().collect()
        }
    };
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::rec;
    use super::*;

    fn data(locations: usize) -> Vec<WeatherRecord> {
        let mut out = Vec::new();
        for loc in 0..locations {
            for slot in 0..48 {
                out.push(rec(loc, &format!("2017-06-01T{:02}:{:02}", slot / 2, 30 * (slot % 2)), 1.0));
            }
        }
        out
    }

    #[test]
    fn zero_fraction_is_identity() {
        let d = data(4);
        let spec = AblationSpec::new(Ablation::RandomRows { fraction: 0.0 }, 1);
        assert_eq!(ablate(&d, &spec).unwrap(), d);
    }

    #[test]
    fn random_rows_keeps_about_the_complement() {
        let d = data(50);
        let out = ablate(&d, &AblationSpec::new(Ablation::RandomRows { fraction: 0.7 }, 3)).unwrap();
        let kept = out.len() as f64 / d.len() as f64;
        assert!((kept - 0.3).abs() < 0.03, "{kept}");
    }

    #[test]
    fn drop_locations_leaves_the_rest() {
        let d = data(288);
        let out = ablate(&d, &AblationSpec::new(Ablation::DropLocations { count: 10 }, 7)).unwrap();
        let ids: BTreeSet<usize> = out.iter().map(|r| r.location_id).collect();
        assert_eq!(ids.len(), 278);
        assert!(ablate(&d, &AblationSpec::new(Ablation::DropLocations { count: 288 }, 7)).is_err());
    }

    #[test]
    fn downsample_halves_half_hourly_data() {
        let d = data(3);
        let out = ablate(&d, &AblationSpec::new(Ablation::Downsample { hours: 1 }, 0)).unwrap();
        assert_eq!(out.len(), d.len() / 2);
        let out8 = ablate(&d, &AblationSpec::new(Ablation::Downsample { hours: 8 }, 0)).unwrap();
        assert_eq!(out8.len(), 3 * 3);
    }

    #[test]
    fn drop_season_removes_matching_rows() {
        let mut d = data(2);
        d.push(rec(0, "2017-01-10T12:00", 1.0));
        let out = ablate(&d, &AblationSpec::new(Ablation::DropSeason { season: Season::Spring }, 0)).unwrap();
        // 2017-06-01 is spring
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn parameters_are_checked_and_serde_is_flat() {
        assert!(ablate(&[], &AblationSpec::new(Ablation::RandomRows { fraction: 1.0 }, 0)).is_err());
        assert!(ablate(&[], &AblationSpec::new(Ablation::Downsample { hours: 0 }, 0)).is_err());
        let spec: AblationSpec = serde_json::from_str(r#"{"kind":"drop_season","season":"spring","seed":4}"#).unwrap();
        assert_eq!(spec.label(), "drop_season:spring");
        assert_eq!(spec.seed, 4);
    }
}
