//! Command-line front end: config resolution and the pipeline subcommands.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    self, Ablation, AblationSpec, SplitName, SplitSpec, WeatherField, WeatherRecord, DEFAULT_WEATHER_FIELDS,
};
use crate::embedding::{embed_graph, Embedding, TrainConfig, WalkConfig};
use crate::error::{Error, EXIT_CODES};
use crate::eval::{self, EvalReport, ExperimentData, ModelSpec, SplitMean};
use crate::features::Season;
use crate::forest::TrainedModel;
use crate::geo::{build_graph, KernelWidth, LocationSet, SpatialGraph};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Output directory; every unset path below resolves inside it.
    pub out: PathBuf,
    pub locations: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    /// Directory holding `forecast_h{H}.csv` files.
    pub forecasts: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            locations: None,
            measurements: None,
            forecasts: None,
            graph: None,
            embedding: None,
            model: None,
            reports: None,
        }
    }
}

impl Paths {
    fn resolve(&mut self) {
        let out = self.out.clone();
        let fill = |p: &mut Option<PathBuf>, name: &str| {
            p.get_or_insert_with(|| out.join(name));
        };
        fill(&mut self.locations, "locations.csv");
        fill(&mut self.measurements, "measurements.csv");
        fill(&mut self.forecasts, "");
        fill(&mut self.graph, "graph.csv");
        fill(&mut self.embedding, "embedding.csv");
        fill(&mut self.model, "model.json");
        fill(&mut self.reports, "reports");
    }

    fn get(p: &Option<PathBuf>) -> &Path {
        p.as_deref().expect("paths are resolved before use")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub kernel_width: KernelWidth,
    pub prune_frac: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { kernel_width: KernelWidth::Median, prune_frac: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub walk: WalkConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Split used by `train`, `eval` and `ablate`.
    pub split: SplitSpec,
    /// Splits crossed with horizons by `sweep`.
    pub splits: Vec<SplitSpec>,
    /// Forecast leads in hours; 0 evaluates on measured features.
    pub horizons: Vec<u32>,
    pub ablations: Vec<AblationSpec>,
    pub weather_fields: Vec<WeatherField>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut ablations = Vec::new();
        for fraction in [0.3, 0.5, 0.7, 0.9, 0.95, 0.99] {
            ablations.push(Ablation::RandomRows { fraction });
        }
        for count in [10, 20, 30, 50, 75, 100, 150] {
            ablations.push(Ablation::DropLocations { count });
        }
        for season in Season::ALL {
            ablations.push(Ablation::DropSeason { season });
        }
        for hours in [1, 2, 4, 8] {
            ablations.push(Ablation::Downsample { hours });
        }
        Self {
            split: SplitSpec::summer(),
            splits: vec![SplitSpec::winter(), SplitSpec::summer(), SplitSpec::global()],
            horizons: vec![3, 6, 9],
            ablations: ablations.into_iter().map(|a| AblationSpec::new(a, 0)).collect(),
            weather_fields: DEFAULT_WEATHER_FIELDS.to_vec(),
        }
    }
}

/// Every knob of a run. Unknown keys are rejected; absent keys take defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthConfig,
    pub graph: GraphConfig,
    pub embedding: EmbeddingConfig,
    pub model: ModelSpec,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact { path: path.to_path_buf(), what: "config file" },
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }

    /// Sets every named seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.embedding.walk.seed = seed;
        self.embedding.train.seed = seed;
        self.model.forest.seed = seed;
        for a in &mut self.experiment.ablations {
            a.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let cfg = |e: String| Error::Config(e);
        self.synth.validate().map_err(|e| cfg(e.to_string()))?;
        self.embedding.walk.validate().map_err(|e| cfg(e.to_string()))?;
        self.embedding.train.validate().map_err(|e| cfg(e.to_string()))?;
        if !(0.0..1.0).contains(&self.graph.prune_frac) {
            return Err(cfg(format!("graph.prune_frac {} not in [0, 1)", self.graph.prune_frac)));
        }
        if !(self.model.ridge_lambda >= 0.0 && self.model.ridge_lambda.is_finite()) {
            return Err(cfg("model.ridge_lambda must be finite and >= 0".into()));
        }
        for s in std::iter::once(&self.experiment.split).chain(&self.experiment.splits) {
            s.validate().map_err(|e| cfg(e.to_string()))?;
        }
        for a in &self.experiment.ablations {
            a.validate().map_err(|e| cfg(e.to_string()))?;
        }
        if let Some(h) = self.experiment.horizons.iter().find(|h| **h != 0 && !dataset::SUPPORTED_HORIZONS.contains(h))
        {
            return Err(cfg(format!("horizon {h} is not 0, 3, 6, 9 or 12")));
        }
        if self.experiment.weather_fields.is_empty() {
            return Err(cfg("experiment.weather_fields is empty".into()));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serialisation cannot fail")
    }
}

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n  0  success\n");
    for (kind, code) in EXIT_CODES {
        s.push_str(&format!("  {code:<2} {kind}\n"));
    }
    s.push_str("\nErrors are printed to stderr as one JSON line: {\"error\":KIND,\"code\":N,\"message\":TEXT}.\n");
    s.push_str("The resolved config is printed to stdout as the first line of every run.");
    s
}

#[derive(Debug, Parser)]
#[command(name = "solarcast", version, about = "Spatio-temporal GHI forecasting with graph-embedded locations")]
#[command(after_help = exit_code_help())]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run config; flags override it, it overrides defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Overrides every named seed.
    #[arg(long, global = true, value_name = "K")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// Split: winter, summer or global.
    #[arg(long)]
    pub split: Option<SplitName>,
    /// Forecast horizon in hours (repeatable); 0 uses measured features.
    #[arg(long = "horizon")]
    pub horizons: Vec<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic locations, measurements and forecasts.
    Synth,
    /// Build the spatial graph from the locations file.
    Graph,
    /// Embed graph nodes with biased walks and SkipGram.
    Embed,
    /// Fit a model on the training months of the configured split.
    Train(ExperimentArgs),
    /// Evaluate the trained model at each configured horizon.
    Eval(ExperimentArgs),
    /// Run the configured training-data ablations.
    Ablate(ExperimentArgs),
    /// Fit each split once and evaluate it at every horizon.
    Sweep(ExperimentArgs),
    /// Rank model features by importance.
    Importance {
        /// Model file; defaults to the configured model path.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

impl clap::ValueEnum for SplitName {
    fn value_variants<'a>() -> &'a [Self] {
        &[SplitName::Winter, SplitName::Summer, SplitName::Global]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.as_str()))
    }
}

/// Merges defaults, the config file and flags, in increasing precedence.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.global.out {
        cfg.paths.out = out.clone();
    }
    if let Some(seed) = cli.global.seed {
        cfg.set_seed(seed);
    }
    let exp = match &cli.command {
        Command::Train(a) | Command::Eval(a) | Command::Ablate(a) | Command::Sweep(a) => Some(a),
        _ => None,
    };
    if let Some(a) = exp {
        if let Some(name) = a.split {
            let spec = SplitSpec::named(name).expect("value parser only offers named splits");
            if matches!(cli.command, Command::Sweep(_)) {
                cfg.experiment.splits = vec![spec];
            } else {
                cfg.experiment.split = spec;
            }
        }
        if !a.horizons.is_empty() {
            cfg.experiment.horizons = a.horizons.clone();
        }
    }
    cfg.paths.resolve();
    cfg.validate()?;
    Ok(cfg)
}

fn open(path: &Path, what: &'static str) -> Result<BufReader<File>, Error> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::MissingArtifact { path: path.to_path_buf(), what })
        }
        Err(e) => Err(e.into()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn load_measurements(cfg: &RunConfig) -> Result<Vec<WeatherRecord>, Error> {
    let ing = dataset::ingest(open(Paths::get(&cfg.paths.measurements), "measurements")?)?;
    if ing.dropped > 0 {
        eprintln!("measurements: dropped {} of {} rows with missing values", ing.dropped, ing.total_rows());
    }
    Ok(ing.records)
}

fn load_forecasts(cfg: &RunConfig, horizons: &[u32]) -> Result<BTreeMap<u32, Vec<WeatherRecord>>, Error> {
    let mut out = BTreeMap::new();
    for &h in horizons.iter().filter(|h| **h != 0) {
        let path = Paths::get(&cfg.paths.forecasts).join(synth::forecast_file_name(h));
        out.insert(h, dataset::ingest(open(&path, "forecast file")?)?.records);
    }
    Ok(out)
}

fn load_embedding(cfg: &RunConfig) -> Result<Embedding, Error> {
    Ok(Embedding::read_csv(open(Paths::get(&cfg.paths.embedding), "embedding")?)?)
}

fn load_model(path: &Path) -> Result<TrainedModel, Error> {
    Ok(TrainedModel::read(open(path, "model")?)?)
}

fn write_reports(cfg: &RunConfig, reports: &[EvalReport], means: &[(String, SplitMean)]) -> Result<(), Error> {
    let dir = Paths::get(&cfg.paths.reports);
    eval::write_reports(dir, reports, means)?;
    for r in reports {
        eprintln!(
            "{} {} h={} r2={} mae={:.3} rmse={:.3} n_test={}{}",
            r.model,
            r.split,
            r.horizon,
            r.r2.map_or("undefined".to_string(), |v| format!("{v:.4}")),
            r.mae,
            r.rmse,
            r.n_test,
            r.ablation.as_ref().map_or(String::new(), |a| format!(" ablation={a}"))
        );
    }
    Ok(())
}

/// Runs one parsed command with an already resolved config.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<(), Error> {
    let started = Instant::now();
    let exp = &cfg.experiment;
    match command {
        Command::Synth => {
            let out = synth::generate(&cfg.synth)?;
            std::fs::create_dir_all(&cfg.paths.out)?;
            out.locations.write_csv(create(Paths::get(&cfg.paths.locations))?)?;
            dataset::write_csv(&out.measurements, create(Paths::get(&cfg.paths.measurements))?)?;
            for (h, rows) in &out.forecasts {
                dataset::write_csv(
                    rows,
                    create(&Paths::get(&cfg.paths.forecasts).join(synth::forecast_file_name(*h)))?,
                )?;
            }
            eprintln!("synth: {} locations, {} measurement rows", out.locations.len(), out.measurements.len());
        }
        Command::Graph => {
            let locs = LocationSet::read_csv(open(Paths::get(&cfg.paths.locations), "locations")?)?;
            let g = build_graph(&locs, cfg.graph.kernel_width, cfg.graph.prune_frac)?;
            g.write_csv(create(Paths::get(&cfg.paths.graph))?)?;
            eprintln!("graph: {} nodes, {} edges", g.node_count(), g.edges().len());
        }
        Command::Embed => {
            let g = SpatialGraph::read_csv(open(Paths::get(&cfg.paths.graph), "graph")?)?;
            let emb = embed_graph(&g, &cfg.embedding.walk, &cfg.embedding.train)?;
            emb.write_csv(create(Paths::get(&cfg.paths.embedding))?)?;
            eprintln!("embed: {} x {} checksum {}", emb.n, emb.dims, emb.checksum());
        }
        Command::Train(_) => {
            let emb = load_embedding(cfg)?;
            let records = load_measurements(cfg)?;
            let parts = dataset::split(&records, &exp.split)?;
            let model = eval::fit_model(&emb, &parts.train, &exp.weather_fields, &cfg.model)?;
            model.write(create(Paths::get(&cfg.paths.model))?)?;
            eprintln!("train: {} on {} rows of split {}", model.kind_name(), parts.train.len(), exp.split.name);
        }
        Command::Eval(_) => {
            let emb = load_embedding(cfg)?;
            let model = load_model(Paths::get(&cfg.paths.model))?;
            if model.embedding_ref.as_deref().is_some_and(|r| r != emb.checksum()) {
                return Err(Error::Config("model was trained on a different embedding".into()));
            }
            let records = load_measurements(cfg)?;
            let forecasts = load_forecasts(cfg, &exp.horizons)?;
            let parts = dataset::split(&records, &exp.split)?;
            let train_mean = parts.train.iter().filter_map(|r| r.ghi).sum::<f64>() / parts.train.len().max(1) as f64;
            let mut reports = Vec::new();
            for &h in &exp.horizons {
                let rows = eval::test_rows(&parts.test, &forecasts, h)?;
                let (pred, truth) = eval::predict_records(&model, &emb, &rows, &exp.weather_fields)?;
                reports.push(EvalReport {
                    model: model.kind_name().to_string(),
                    split: exp.split.name.to_string(),
                    horizon: h,
                    r2: eval::r2(&truth, &pred).ok(),
                    mae: eval::mae(&truth, &pred).map_err(Error::from)?,
                    rmse: eval::rmse(&truth, &pred).map_err(Error::from)?,
                    n_train: parts.train.len(),
                    n_test: truth.len(),
                    ablation: None,
                    baseline_r2: eval::r2(&truth, &vec![train_mean; truth.len()]).ok(),
                    delta_r2: None,
                });
            }
            write_reports(cfg, &reports, &[])?;
        }
        Command::Ablate(_) => {
            let emb = load_embedding(cfg)?;
            let records = load_measurements(cfg)?;
            let horizon = exp.horizons.first().copied().unwrap_or(0);
            let forecasts = load_forecasts(cfg, &[horizon])?;
            let data = ExperimentData {
                embedding: &emb,
                measurements: &records,
                forecasts: &forecasts,
                weather_fields: &exp.weather_fields,
            };
            let reports = eval::ablation_sweep(&data, &exp.split, horizon, &exp.ablations, &cfg.model)?;
            write_reports(cfg, &reports, &[])?;
        }
        Command::Sweep(_) => {
            let emb = load_embedding(cfg)?;
            let records = load_measurements(cfg)?;
            let forecasts = load_forecasts(cfg, &exp.horizons)?;
            let data = ExperimentData {
                embedding: &emb,
                measurements: &records,
                forecasts: &forecasts,
                weather_fields: &exp.weather_fields,
            };
            let sweep = eval::horizon_sweep(&data, &exp.splits, &exp.horizons, &cfg.model)?;
            let model = cfg.model.kind.as_str().to_string();
            let means: Vec<(String, SplitMean)> = sweep.means.into_iter().map(|m| (model.clone(), m)).collect();
            write_reports(cfg, &sweep.reports, &means)?;
        }
        Command::Importance { model } => {
            let path = model.as_deref().unwrap_or(Paths::get(&cfg.paths.model));
            let ranked = eval::importance_report(&load_model(path)?)?;
            let table = eval::format_importance_table(&ranked);
            let dir = Paths::get(&cfg.paths.reports);
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("importance.csv"), &table)?;
            print!("{table}");
        }
    }
    eprintln!("done in {:.2}s", started.elapsed().as_secs_f64());
    Ok(())
}

/// Parses arguments, prints the resolved config and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = Error::Config(
                e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string(),
            );
            eprintln!("{}", err.to_json_line());
            return err.exit_code();
        }
    };
    let result = (|| {
        if let Some(n) = cli.global.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        }
        let cfg = resolve_config(&cli)?;
        println!("{}", cfg.to_json_line());
        execute(&cli.command, &cfg)
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}
