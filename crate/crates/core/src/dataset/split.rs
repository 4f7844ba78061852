use std::collections::BTreeSet;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{DatasetError, WeatherRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Winter,
    Summer,
    Global,
    Custom,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Winter => "winter",
            SplitName::Summer => "summer",
            SplitName::Global => "global",
            SplitName::Custom => "custom",
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Calendar-month temporal hold-out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub name: SplitName,
    pub train_months: Vec<u32>,
    pub test_months: Vec<u32>,
}

impl SplitSpec {
    /// Train October-November, test December.
    pub fn winter() -> Self {
        Self { name: SplitName::Winter, train_months: vec![10, 11], test_months: vec![12] }
    }

    /// Train June-July, test August.
    pub fn summer() -> Self {
        Self { name: SplitName::Summer, train_months: vec![6, 7], test_months: vec![8] }
    }

    /// Test August and December, train on every other month.
    pub fn global() -> Self {
        Self {
            name: SplitName::Global,
            train_months: (1..=12).filter(|m| *m != 8 && *m != 12).collect(),
            test_months: vec![8, 12],
        }
    }

    pub fn named(name: SplitName) -> Option<Self> {
        match name {
            SplitName::Winter => Some(Self::winter()),
            SplitName::Summer => Some(Self::summer()),
            SplitName::Global => Some(Self::global()),
            SplitName::Custom => None,
        }
    }

    pub fn custom(train_months: Vec<u32>, test_months: Vec<u32>) -> Result<Self, DatasetError> {
        let s = Self { name: SplitName::Custom, train_months, test_months };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let all = self.train_months.iter().chain(&self.test_months);
        if let Some(m) = all.clone().find(|m| !(1..=12).contains(*m)) {
            return Err(DatasetError::InvalidSplit(format!("month {m} is not in 1..=12")));
        }
        if self.train_months.is_empty() || self.test_months.is_empty() {
            return Err(DatasetError::InvalidSplit("train and test months must be non-empty".into()));
        }
        if let Some(m) = self.train_months.iter().find(|m| self.test_months.contains(m)) {
            return Err(DatasetError::InvalidSplit(format!("month {m} is in both train and test")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<WeatherRecord>,
    pub test: Vec<WeatherRecord>,
    /// Records in months used by neither side.
    pub excluded: usize,
}

/// Partitions records by calendar month. Every requested month must occur.
pub fn split(records: &[WeatherRecord], spec: &SplitSpec) -> Result<Split, DatasetError> {
    spec.validate()?;
    let present: BTreeSet<u32> = records.iter().map(|r| r.timestamp.month()).collect();
    if let Some(&month) = spec.train_months.iter().chain(&spec.test_months).find(|m| !present.contains(m)) {
        return Err(DatasetError::EmptySplit { split: spec.name.to_string(), month });
    }
    let mut out = Split { train: Vec::new(), test: Vec::new(), excluded: 0 };
    for r in records {
        let m = r.timestamp.month();
        if spec.train_months.contains(&m) {
            out.train.push(r.clone());
        } else if spec.test_months.contains(&m) {
            out.test.push(r.clone());
        } else {
            out.excluded += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::rec;
    use super::*;

    fn year() -> Vec<WeatherRecord> {
        (1..=12).flat_map(|m| (0..3).map(move |d| rec(d, &format!("2017-{m:02}-1{d}T12:00"), 1.0))).collect()
    }

    #[test]
    fn named_splits() {
        let data = year();
        let s = split(&data, &SplitSpec::summer()).unwrap();
        assert!(s.train.iter().all(|r| r.timestamp.month() != 8));
        assert!(s.test.iter().all(|r| r.timestamp.month() == 8));
        assert_eq!((s.train.len(), s.test.len(), s.excluded), (6, 3, 27));

        let g = split(&data, &SplitSpec::global()).unwrap();
        let train_months: BTreeSet<u32> = g.train.iter().map(|r| r.timestamp.month()).collect();
        assert_eq!(train_months, (1..=11).filter(|m| *m != 8).collect());
        assert_eq!(g.excluded, 0);

        let w = split(&data, &SplitSpec::winter()).unwrap();
        assert_eq!(w.train.len() + w.test.len() + w.excluded, data.len());
    }

    #[test]
    fn missing_month_and_bad_specs() {
        let data: Vec<_> = year().into_iter().filter(|r| r.timestamp.month() != 12).collect();
        assert!(matches!(split(&data, &SplitSpec::winter()), Err(DatasetError::EmptySplit { month: 12, .. })));
        assert!(SplitSpec::custom(vec![1, 2], vec![2]).is_err());
        assert!(SplitSpec::custom(vec![13], vec![2]).is_err());
        assert!(SplitSpec::custom(vec![1], vec![]).is_err());
    }

    #[test]
    fn train_and_test_are_disjoint() {
        let data = year();
        for spec in [
            SplitSpec::winter(),
            SplitSpec::summer(),
            SplitSpec::global(),
            SplitSpec::custom(vec![1, 3], vec![2, 4]).unwrap(),
        ] {
            let s = split(&data, &spec).unwrap();
            let tr: BTreeSet<u32> = s.train.iter().map(|r| r.timestamp.month()).collect();
            let te: BTreeSet<u32> = s.test.iter().map(|r| r.timestamp.month()).collect();
            assert!(tr.is_disjoint(&te));
        }
    }
}
