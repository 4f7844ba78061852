//! Metrics, seasonal experiments, horizon and ablation sweeps, importance
//! tables and report files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    self, ablate, horizon_align, split, AblationSpec, DatasetError, SplitSpec, WeatherField, WeatherRecord,
};
use crate::embedding::Embedding;
use crate::features::{assemble, FeatureError, Scaling};
use crate::forest::{
    fit_forest, fit_linear, fit_linear_on, identifiable_columns, ForestError, ForestParams, Model, ModelKind,
    TrainedModel,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth is constant; R² is undefined")]
    ConstantTruth,
    #[error("{truth} targets but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("model has no importances (not a forest)")]
    UnfittedModel,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn check_lengths(y: &[f64], p: &[f64], needed: usize) -> Result<(), EvalError> {
    if y.len() != p.len() {
        return Err(EvalError::LengthMismatch { truth: y.len(), pred: p.len() });
    }
    if y.len() < needed {
        return Err(EvalError::TooFewRows { needed, got: y.len() });
    }
    Ok(())
}

/// `1 - SSE / SST` with the mean of `y_true` in SST.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y_true, y_pred, 2)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sst: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(EvalError::ConstantTruth);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y_true, y_pred, 1)?;
    Ok(y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / y_true.len() as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y_true, y_pred, 1)?;
    Ok((y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / y_true.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub forest: ForestParams,
    /// Penalty for the `ridge` kind.
    pub ridge_lambda: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::Forest, forest: ForestParams::default(), ridge_lambda: 1.0 }
    }
}

/// Inputs shared by every experiment.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentData<'a> {
    pub embedding: &'a Embedding,
    pub measurements: &'a [WeatherRecord],
    /// Forecast rows keyed by lead in hours.
    pub forecasts: &'a BTreeMap<u32, Vec<WeatherRecord>>,
    pub weather_fields: &'a [WeatherField],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub model: String,
    pub split: String,
    /// Forecast lead in hours; 0 means measured features.
    pub horizon: u32,
    /// `None` when the test targets are constant.
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub ablation: Option<String>,
    /// R² of predicting the training mean on the same test rows.
    pub baseline_r2: Option<f64>,
    /// Change in R² against the unablated run of the same sweep.
    pub delta_r2: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// File stem such as `forest_summer_h3` or `forest_summer_h3_random_rows-0.5`.
    pub fn file_stem(&self) -> String {
        let mut s = format!("{}_{}_h{}", self.model, self.split, self.horizon);
        if let Some(a) = &self.ablation {
            s.push('_');
            s.extend(a.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '-' }));
        }
        s
    }
}

/// Fits a model on training records; the scaler is fitted on them too.
pub fn fit_model(
    embedding: &Embedding,
    train: &[WeatherRecord],
    weather_fields: &[WeatherField],
    spec: &ModelSpec,
) -> Result<TrainedModel, EvalError> {
    if train.is_empty() {
        return Err(ForestError::EmptyTrainingSet.into());
    }
    let a = assemble(embedding, train, weather_fields, Scaling::Fit)?;
    let model = match spec.kind {
        ModelKind::Forest => Model::Forest(fit_forest(&a.features, &a.targets, &spec.forest)?),
        ModelKind::Linear => {
            let active = identifiable_columns(&a.features);
            Model::Linear(fit_linear_on(&a.features, &a.targets, 0.0, &active)?)
        }
        ModelKind::Ridge => Model::Linear(fit_linear(&a.features, &a.targets, spec.ridge_lambda)?),
    };
    Ok(TrainedModel::new(a.features.columns, a.scaler, Some(embedding.checksum()), model))
}

/// Test rows at a horizon: forecast features aligned to measured targets,
/// or the measurements themselves for horizon 0.
pub fn test_rows(
    test: &[WeatherRecord],
    forecasts: &BTreeMap<u32, Vec<WeatherRecord>>,
    horizon: u32,
) -> Result<Vec<WeatherRecord>, EvalError> {
    if horizon == 0 {
        return Ok(test.to_vec());
    }
    let fc = forecasts.get(&horizon).map_or(&[][..], Vec::as_slice);
    if fc.is_empty() && dataset::SUPPORTED_HORIZONS.contains(&horizon) {
        return Err(DatasetError::NoForecastData(horizon).into());
    }
    Ok(horizon_align(test, fc, horizon)?.rows)
}

/// Scores a fitted model on records; returns (predictions, targets).
pub fn predict_records(
    model: &TrainedModel,
    embedding: &Embedding,
    records: &[WeatherRecord],
    weather_fields: &[WeatherField],
) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let scaling = model.scaler.as_ref().map_or(Scaling::None, Scaling::Use);
    let a = assemble(embedding, records, weather_fields, scaling)?;
    Ok((model.predict(&a.features)?, a.targets))
}

struct Fitted {
    model: TrainedModel,
    train_mean: f64,
    n_train: usize,
    test: Vec<WeatherRecord>,
}

fn fit_split(
    data: &ExperimentData<'_>,
    spec: &SplitSpec,
    model_spec: &ModelSpec,
    ablation: Option<&AblationSpec>,
) -> Result<Fitted, EvalError> {
    let parts = split(data.measurements, spec)?;
    let train = match ablation {
        Some(a) => ablate(&parts.train, a)?,
        None => parts.train,
    };
    let model = fit_model(data.embedding, &train, data.weather_fields, model_spec)?;
    let train_mean = train.iter().filter_map(|r| r.ghi).sum::<f64>() / train.len() as f64;
    Ok(Fitted { model, train_mean, n_train: train.len(), test: parts.test })
}

fn score(
    data: &ExperimentData<'_>,
    fitted: &Fitted,
    split_name: &str,
    horizon: u32,
    ablation: Option<&AblationSpec>,
) -> Result<EvalReport, EvalError> {
    let rows = test_rows(&fitted.test, data.forecasts, horizon)?;
    if rows.is_empty() {
        return Err(EvalError::TooFewRows { needed: 1, got: 0 });
    }
    let (pred, truth) = predict_records(&fitted.model, data.embedding, &rows, data.weather_fields)?;
    let baseline = vec![fitted.train_mean; truth.len()];
    Ok(EvalReport {
        model: fitted.model.kind_name().to_string(),
        split: split_name.to_string(),
        horizon,
        r2: r2(&truth, &pred).ok(),
        mae: mae(&truth, &pred)?,
        rmse: rmse(&truth, &pred)?,
        n_train: fitted.n_train,
        n_test: truth.len(),
        ablation: ablation.map(AblationSpec::label),
        baseline_r2: r2(&truth, &baseline).ok(),
        delta_r2: None,
    })
}

/// Fits on the split's training months (optionally ablated) and evaluates on
/// its test months at `horizon`.
pub fn run_experiment(
    data: &ExperimentData<'_>,
    spec: &SplitSpec,
    horizon: u32,
    model_spec: &ModelSpec,
    ablation: Option<&AblationSpec>,
) -> Result<EvalReport, EvalError> {
    let fitted = fit_split(data, spec, model_spec, ablation)?;
    score(data, &fitted, spec.name.as_str(), horizon, ablation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMean {
    pub split: String,
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSweep {
    pub reports: Vec<EvalReport>,
    pub means: Vec<SplitMean>,
}

/// One fit per split, evaluated at every horizon, plus per-split means.
pub fn horizon_sweep(
    data: &ExperimentData<'_>,
    splits: &[SplitSpec],
    horizons: &[u32],
    model_spec: &ModelSpec,
) -> Result<HorizonSweep, EvalError> {
    let mut reports = Vec::new();
    let mut means = Vec::new();
    for spec in splits {
        let fitted = fit_split(data, spec, model_spec, None)?;
        let start = reports.len();
        for &h in horizons {
            reports.push(score(data, &fitted, spec.name.as_str(), h, None)?);
        }
        let group = &reports[start..];
        let k = group.len() as f64;
        let r2s: Option<Vec<f64>> = group.iter().map(|r| r.r2).collect();
        means.push(SplitMean {
            split: spec.name.to_string(),
            r2: r2s.map(|v| v.iter().sum::<f64>() / k),
            mae: group.iter().map(|r| r.mae).sum::<f64>() / k,
            rmse: group.iter().map(|r| r.rmse).sum::<f64>() / k,
        });
    }
    Ok(HorizonSweep { reports, means })
}

/// Baseline run followed by one run per ablation, each with `delta_r2`
/// against the baseline. Test rows are never ablated.
pub fn ablation_sweep(
    data: &ExperimentData<'_>,
    spec: &SplitSpec,
    horizon: u32,
    specs: &[AblationSpec],
    model_spec: &ModelSpec,
) -> Result<Vec<EvalReport>, EvalError> {
    let mut base = run_experiment(data, spec, horizon, model_spec, None)?;
    base.delta_r2 = base.r2.map(|_| 0.0);
    let mut out = vec![base];
    for a in specs {
        let mut rep = run_experiment(data, spec, horizon, model_spec, Some(a))?;
        rep.delta_r2 = match (rep.r2, out[0].r2) {
            (Some(x), Some(b)) => Some(x - b),
            _ => None,
        };
        out.push(rep);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub feature: String,
    pub importance: f64,
}

/// Features by decreasing importance, ties by name.
pub fn importance_report(model: &TrainedModel) -> Result<Vec<RankedFeature>, EvalError> {
    let forest = model.forest().ok_or(EvalError::UnfittedModel)?;
    let mut pairs: Vec<(&String, f64)> = model.feature_names.iter().zip(forest.importances.iter().copied()).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(i, (f, v))| RankedFeature { rank: i + 1, feature: f.clone(), importance: v })
        .collect())
}

pub const IMPORTANCE_TABLE_ROWS: usize = 15;

pub fn format_importance_table(ranked: &[RankedFeature]) -> String {
    let mut out = String::from("rank,feature,importance\n");
    for r in ranked.iter().take(IMPORTANCE_TABLE_ROWS) {
        out.push_str(&format!("{},{},{:.6}\n", r.rank, r.feature, r.importance));
    }
    out
}

pub const AGGREGATE_HEADER: &str = "model,split,horizon,r2,mae,rmse,n_train,n_test,ablation";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Aggregate CSV; `means` rows carry `mean` in the horizon column.
pub fn write_aggregate_csv<W: Write>(
    mut w: W,
    reports: &[EvalReport],
    means: &[(String, SplitMean)],
) -> std::io::Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.split,
            r.horizon,
            opt(r.r2),
            r.mae,
            r.rmse,
            r.n_train,
            r.n_test,
            r.ablation.as_deref().unwrap_or("")
        )?;
    }
    for (model, m) in means {
        writeln!(w, "{},{},mean,{},{},{},,,", model, m.split, opt(m.r2), m.mae, m.rmse)?;
    }
    Ok(())
}

/// Writes one JSON file per report under `dir` plus `reports.csv`.
pub fn write_reports(dir: &Path, reports: &[EvalReport], means: &[(String, SplitMean)]) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    for r in reports {
        std::fs::write(dir.join(format!("{}.json", r.file_stem())), r.to_json() + "\n")?;
    }
    let mut buf = Vec::new();
    write_aggregate_csv(&mut buf, reports, means)?;
    std::fs::write(dir.join("reports.csv"), buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Ablation, DEFAULT_WEATHER_FIELDS};
    use crate::synth::{generate, CloudVolatility, GridSpec, SynthConfig};
    use chrono::NaiveDate;

    #[test]
    fn metric_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&y, &[2.0; 3]).unwrap(), 0.0);
        assert!((r2(&y, &[1.0, 2.0, 4.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(r2(&[5.0; 4], &[5.0; 4]), Err(EvalError::ConstantTruth)));
        assert!(matches!(r2(&[1.0], &[1.0]), Err(EvalError::TooFewRows { .. })));

        assert_eq!((mae(&y, &y).unwrap(), rmse(&y, &y).unwrap()), (0.0, 0.0));
        assert_eq!((mae(&[3.0, -3.0], &[0.0, 0.0]).unwrap(), rmse(&[3.0, -3.0], &[0.0, 0.0]).unwrap()), (3.0, 3.0));
        assert_eq!(mae(&[0.0, 4.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!((rmse(&[0.0, 4.0], &[0.0, 0.0]).unwrap() - 8f64.sqrt()).abs() < 1e-15);
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
        assert!(mae(&[], &[]).is_err());
    }

    fn tiny_world(noise: f64) -> (Embedding, crate::synth::SynthOutput) {
        let cfg = SynthConfig {
            grid: GridSpec { rows: 2, cols: 3, ..Default::default() },
            start: NaiveDate::from_ymd_opt(2017, 6, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2017, 8, 31).unwrap(),
            step_minutes: 60,
            day_stride: 3,
            cloud_volatility: CloudVolatility::uniform(0.3),
            forecast_noise_per_hour: noise,
            seed: 4,
            ..Default::default()
        };
        (Embedding::initialize(6, 4, 1), generate(&cfg).unwrap())
    }

    fn small_forest() -> ModelSpec {
        ModelSpec { forest: ForestParams { n_trees: 5, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn zero_noise_forecasts_match_measurement_features() {
        let (emb, out) = tiny_world(0.0);
        let data = ExperimentData {
            embedding: &emb,
            measurements: &out.measurements,
            forecasts: &out.forecasts,
            weather_fields: &DEFAULT_WEATHER_FIELDS,
        };
        let sweep = horizon_sweep(&data, &[SplitSpec::summer()], &[0, 3, 9], &small_forest()).unwrap();
        let r = &sweep.reports;
        assert_eq!((r[0].r2, r[0].mae, r[0].rmse), (r[1].r2, r[1].mae, r[1].rmse));
        assert_eq!((r[0].r2, r[0].mae), (r[2].r2, r[2].mae));
        assert_eq!(r[1].split, "summer");
        assert_eq!(r[1].horizon, 3);
    }

    #[test]
    fn reports_hold_their_invariants_and_round_trip() {
        let (emb, out) = tiny_world(0.02);
        let data = ExperimentData {
            embedding: &emb,
            measurements: &out.measurements,
            forecasts: &out.forecasts,
            weather_fields: &DEFAULT_WEATHER_FIELDS,
        };
        let specs = [
            AblationSpec::new(Ablation::RandomRows { fraction: 0.5 }, 1),
            AblationSpec::new(Ablation::Downsample { hours: 8 }, 0),
        ];
        let reps = ablation_sweep(&data, &SplitSpec::summer(), 3, &specs, &small_forest()).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps[1].n_train < reps[0].n_train && reps[2].n_train < reps[1].n_train);
        assert!(reps.iter().all(|r| r.n_test == reps[0].n_test));
        for r in &reps {
            assert!(r.rmse >= r.mae && r.mae >= 0.0);
            assert!(r.r2.unwrap() <= 1.0);
            assert!(r.baseline_r2.unwrap() <= r.r2.unwrap());
            assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), *r);
        }
        assert_eq!(reps[1].ablation.as_deref(), Some("random_rows:0.5"));
        assert_eq!(reps[1].file_stem(), "forest_summer_h3_random_rows-0.5");
    }

    #[test]
    fn linear_and_ridge_baselines_fit() {
        let (emb, out) = tiny_world(0.02);
        let data = ExperimentData {
            embedding: &emb,
            measurements: &out.measurements,
            forecasts: &out.forecasts,
            weather_fields: &DEFAULT_WEATHER_FIELDS,
        };
        for kind in [ModelKind::Linear, ModelKind::Ridge] {
            let rep = run_experiment(&data, &SplitSpec::summer(), 3, &ModelSpec { kind, ..Default::default() }, None)
                .unwrap();
            assert_eq!(rep.model, kind.as_str());
            assert!(rep.r2.unwrap() > 0.5, "{kind:?}: {:?}", rep.r2);
        }
    }

    #[test]
    fn importance_ranking() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, i as f64]).collect();
        let y: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let x = crate::features::FeatureMatrix::from_rows(vec!["b".into(), "a".into()], &rows);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 3, mtry: Some(2), ..Default::default() }).unwrap();
        let m = TrainedModel::new(x.columns.clone(), None, None, Model::Forest(f));
        let ranked = importance_report(&m).unwrap();
        assert_eq!(ranked[0].feature, "a");

        let x1 = crate::features::FeatureMatrix::from_rows(
            vec!["only".into()],
            &rows.iter().map(|r| vec![r[1]]).collect::<Vec<_>>(),
        );
        let f1 = fit_forest(&x1, &y, &ForestParams { n_trees: 2, ..Default::default() }).unwrap();
        let m1 = TrainedModel::new(x1.columns.clone(), None, None, Model::Forest(f1));
        assert_eq!(importance_report(&m1).unwrap()[0].importance, 1.0);

        let lin = TrainedModel::new(vec!["a".into()], None, None, Model::Linear(fit_linear(&x1, &y, 0.0).unwrap()));
        assert!(matches!(importance_report(&lin), Err(EvalError::UnfittedModel)));
        assert!(format_importance_table(&ranked).starts_with("rank,feature,importance\n1,a,"));
    }

    #[test]
    fn aggregate_csv_layout() {
        let rep = EvalReport {
            model: "forest".into(),
            split: "summer".into(),
            horizon: 3,
            r2: Some(0.5),
            mae: 1.0,
            rmse: 2.0,
            n_train: 10,
            n_test: 4,
            ablation: None,
            baseline_r2: None,
            delta_r2: None,
        };
        let mean = SplitMean { split: "summer".into(), r2: Some(0.5), mae: 1.0, rmse: 2.0 };
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &[rep], &[("forest".into(), mean)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{AGGREGATE_HEADER}\nforest,summer,3,0.5,1,2,10,4,\nforest,summer,mean,0.5,1,2,,,\n"));
    }
}
