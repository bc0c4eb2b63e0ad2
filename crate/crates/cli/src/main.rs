mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentrec::{
    build_matrix, cluster_top_n_from_assignments, content_digest, evaluate_model, fit_model, kmeans_fit, load_model,
    load_ratings, read_cluster_csv, run_sweep, save_model, split_ratings, top_n, user_latent_features,
    write_cluster_csv, write_recommendations_csv, Algorithm, FitParams, InputFormat, ModelFile, RatingModel,
    RatingScale, SparseRatingMatrix, SplitParams, SweepSpec,
};
use serde::Serialize;

use config::{parse_components, parse_fill, parse_list, parse_scale, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] latentrec::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "latentrec", version, about = "Matrix-factorization recommender experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every algorithm/fill/rank combination and write the RMSE table.
    Sweep(SweepArgs),
    /// Fit one model on the training split and save it as JSON.
    Train(TrainArgs),
    /// Segment users with K-Means over a model's user factors.
    Cluster(ClusterArgs),
    /// Write top-N recommendations for one user.
    Recommend(RecommendArgs),
    /// Score a saved model on its held-out split; prints JSON.
    Eval(EvalArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Flat JSON file with default values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ratings file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// tsv or csv.
    #[arg(long)]
    format: Option<InputFormat>,
    /// Rating scale as MIN:MAX.
    #[arg(long)]
    scale: Option<String>,
    /// What to do with repeated (user, item) pairs: error, mean or last.
    #[arg(long)]
    duplicates: Option<String>,
    /// What to do with ratings outside the scale: error or clamp.
    #[arg(long)]
    out_of_range: Option<String>,
}

#[derive(Args, Clone)]
struct Hyper {
    #[arg(long)]
    nmf_max_iterations: Option<usize>,
    #[arg(long)]
    nmf_tolerance: Option<f64>,
    #[arg(long)]
    nmf_inner_updates: Option<usize>,
    #[arg(long)]
    svdi_threshold: Option<f64>,
    #[arg(long)]
    svdi_max_iterations: Option<usize>,
    #[arg(long)]
    sgd_alpha: Option<f64>,
    #[arg(long)]
    sgd_lambda: Option<f64>,
    #[arg(long)]
    sgd_epochs: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
    /// Comma-separated: nmf, svd_t, svd_i, sgd_mf.
    #[arg(long)]
    algorithms: Option<String>,
    /// Comma-separated fill strategies.
    #[arg(long)]
    fills: Option<String>,
    /// Component counts, e.g. `5,10,15` or `2..30`.
    #[arg(long)]
    components: Option<String>,
    /// Share of ratings held out for testing.
    #[arg(long)]
    fraction: Option<f64>,
    /// Run combinations one at a time.
    #[arg(long)]
    sequential: bool,
    /// Record wall-clock seconds in the table.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    fill: Option<String>,
    /// Number of latent components.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    fraction: Option<f64>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct RecommendArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cluster CSV; switches to peer-based ranking.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Keep items the user already rated.
    #[arg(long)]
    include_seen: bool,
    #[arg(long)]
    min_support: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
}

/// Ratings matrix plus the digest of the file it came from.
struct Dataset {
    matrix: SparseRatingMatrix,
    digest: String,
}

struct Ctx {
    cfg: RunConfig,
    common: Common,
}

impl Ctx {
    fn new(common: Common) -> Result<Self> {
        let cfg = RunConfig::load(common.config.as_deref())?;
        Ok(Self { cfg, common })
    }

    fn seed(&self) -> u64 {
        self.common.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn out_dir(&self) -> PathBuf {
        self.common.out.clone().or_else(|| self.cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."))
    }

    fn scale(&self) -> Result<RatingScale> {
        match self.common.scale.as_deref().or(self.cfg.scale.as_deref()) {
            Some(s) => parse_scale(s),
            None => Ok(RatingScale::default()),
        }
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let path = self
            .common
            .dataset
            .clone()
            .or_else(|| self.cfg.dataset.clone())
            .ok_or_else(|| CliError::Usage("no dataset given (--dataset or \"dataset\" in the config)".into()))?;
        if !path.is_file() {
            return Err(CliError::Usage(format!("dataset {} does not exist", path.display())));
        }
        let format = self.common.format.or(self.cfg.format).unwrap_or(InputFormat::Tsv);
        let scale = self.scale()?;
        let duplicates = match &self.common.duplicates {
            Some(s) => s.parse().map_err(|e| CliError::Usage(format!("--duplicates: {e}")))?,
            None => self.cfg.duplicates.unwrap_or_default(),
        };
        let out_of_range = match &self.common.out_of_range {
            Some(s) => s.parse().map_err(|e| CliError::Usage(format!("--out-of-range: {e}")))?,
            None => self.cfg.out_of_range.unwrap_or_default(),
        };
        let bytes = fs::read(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let triples = load_ratings(bytes.as_slice(), format, scale, out_of_range)?;
        Ok(Dataset { matrix: build_matrix(&triples, scale, duplicates)?, digest: content_digest(&bytes) })
    }

    fn fraction(&self, flag: Option<f64>) -> Result<f64> {
        let f = flag.or(self.cfg.fraction).unwrap_or(0.2);
        if !(0.0..1.0).contains(&f) {
            return Err(CliError::Usage(format!("fraction {f} outside [0, 1)")));
        }
        Ok(f)
    }

    fn fit_params(&self, h: &Hyper) -> FitParams {
        let c = &self.cfg;
        let mut p = FitParams::default();
        macro_rules! set {
            ($target:expr, $flag:ident) => {
                if let Some(v) = h.$flag.or(c.$flag) {
                    $target = v;
                }
            };
        }
        set!(p.nmf.max_iterations, nmf_max_iterations);
        set!(p.nmf.rel_tolerance, nmf_tolerance);
        set!(p.nmf.inner_updates, nmf_inner_updates);
        set!(p.svd_iter.threshold, svdi_threshold);
        set!(p.svd_iter.max_iterations, svdi_max_iterations);
        set!(p.sgd.alpha, sgd_alpha);
        set!(p.sgd.lambda, sgd_lambda);
        set!(p.sgd.epochs, sgd_epochs);
        p
    }

    fn model_path(&self, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone().or_else(|| self.cfg.model.clone())
    }
}

fn read_model(path: &Path) -> Result<ModelFile> {
    let file = fs::File::open(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(load_model(std::io::BufReader::new(file))?)
}

fn check_shape(model: &ModelFile, m: &SparseRatingMatrix, data_digest: &str) -> Result<()> {
    if let Some(d) = &model.dataset_digest {
        if d != data_digest {
            return Err(latentrec::Error::InvalidArgument("model was trained on a different dataset".into()).into());
        }
    }
    if model.model.n_users() != m.n_users() || model.model.n_items() != m.n_items() {
        return Err(latentrec::Error::DimensionMismatch(format!(
            "model covers {}x{}, dataset is {}x{}",
            model.model.n_users(),
            model.model.n_items(),
            m.n_users(),
            m.n_items()
        ))
        .into());
    }
    Ok(())
}

/// Writes every file only after all of them have been produced.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let ctx = Ctx::new(args.common.clone())?;
    let algorithms = match args.algorithms.map(|s| parse_list(&s)).or(ctx.cfg.algorithms.clone()) {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<Algorithm>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<_>>>()?,
        None => SweepSpec::default().algorithms,
    };
    let fills = match args.fills.map(|s| parse_list(&s)).or(ctx.cfg.fills.clone()) {
        Some(names) => names.iter().map(|n| parse_fill(n)).collect::<Result<Vec<_>>>()?,
        None => SweepSpec::default().fills,
    };
    let components = match args.components {
        Some(s) => parse_components(&s).map_err(CliError::Usage)?,
        None => ctx.cfg.components.clone().unwrap_or_else(|| SweepSpec::default().components),
    };
    if algorithms.is_empty() || fills.is_empty() || components.is_empty() || components.contains(&0) {
        return Err(CliError::Usage("algorithms, fills and components must be non-empty and ranks positive".into()));
    }
    let spec = SweepSpec {
        algorithms,
        fills,
        components,
        fraction: ctx.fraction(args.fraction)?,
        seed: ctx.seed(),
        params: ctx.fit_params(&args.hyper),
        parallel: !args.sequential && ctx.cfg.parallel.unwrap_or(true),
        record_timings: args.timings || ctx.cfg.timings.unwrap_or(false),
        dataset_digest: None,
    };
    let data = ctx.load_dataset()?;
    let report = run_sweep(&data.matrix, &SweepSpec { dataset_digest: Some(data.digest), ..spec })?;
    for f in &report.provenance.failures {
        eprintln!("warning: {},{},{} failed: {}", f.algorithm, f.fill, f.components, f.error);
    }
    write_outputs(
        &ctx.out_dir(),
        &[
            ("sweep.csv", report.to_csv().into_bytes()),
            ("sweep_provenance.json", report.provenance_json().into_bytes()),
        ],
    )
}

fn train(args: TrainArgs) -> Result<()> {
    let ctx = Ctx::new(args.common.clone())?;
    let algorithm = match args.algorithm {
        Some(a) => a,
        None => match &ctx.cfg.algorithm {
            Some(s) => s.parse().map_err(|e: latentrec::Error| CliError::Usage(e.to_string()))?,
            None => Algorithm::Nmf,
        },
    };
    let fill = parse_fill(args.fill.as_deref().or(ctx.cfg.fill.as_deref()).unwrap_or("user_mean"))?;
    let rank = args.rank.or(ctx.cfg.rank).unwrap_or(15);
    let fraction = ctx.fraction(args.fraction)?;
    let seed = ctx.seed();
    let params = ctx.fit_params(&args.hyper);

    let data = ctx.load_dataset()?;
    let split = split_ratings(&data.matrix, fraction, seed)?;
    let model = fit_model(
        algorithm,
        &split.train,
        fill,
        rank,
        &params,
        latentrec::evaluation::combination_seed(seed, algorithm, fill, rank),
    )?;
    let mut file = ModelFile::new(model);
    file.dataset_digest = Some(data.digest);
    file.split = Some(SplitParams { fraction, seed });
    let mut buf = Vec::new();
    save_model(&file, &mut buf)?;
    buf.push(b'\n');
    write_outputs(&ctx.out_dir(), &[("model.json", buf)])
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let ctx = Ctx::new(args.common.clone())?;
    let path = ctx.model_path(&args.model).ok_or_else(|| CliError::Usage("cluster needs --model".into()))?;
    let k = args.k.or(ctx.cfg.k).unwrap_or(10);
    let max_iterations = args.max_iterations.or(ctx.cfg.kmeans_max_iterations).unwrap_or(300);
    let restarts = args.restarts.or(ctx.cfg.kmeans_restarts).unwrap_or(10);
    if k == 0 || max_iterations == 0 || restarts == 0 {
        return Err(CliError::Usage("k, max iterations and restarts must be positive".into()));
    }
    let model = read_model(&path)?;
    let data = ctx.load_dataset()?;
    check_shape(&model, &data.matrix, &data.digest)?;
    let features = user_latent_features(&model.model);
    let clusters = kmeans_fit(&features, k, ctx.seed(), max_iterations, restarts)?;
    let mut buf = Vec::new();
    write_cluster_csv(&clusters, &data.matrix, &mut buf)?;
    write_outputs(&ctx.out_dir(), &[("clusters.csv", buf)])
}

fn recommend(args: RecommendArgs) -> Result<()> {
    let ctx = Ctx::new(args.common.clone())?;
    let user = args.user.or(ctx.cfg.user.clone()).ok_or_else(|| CliError::Usage("recommend needs --user".into()))?;
    let n = args.n.or(ctx.cfg.n).unwrap_or(10);
    let exclude_seen = !args.include_seen && ctx.cfg.exclude_seen.unwrap_or(true);
    let min_support = args.min_support.or(ctx.cfg.min_support).unwrap_or(3);
    let clusters = args.clusters.or(ctx.cfg.clusters.clone());
    let model_path = ctx.model_path(&args.model);
    if clusters.is_none() && model_path.is_none() {
        return Err(CliError::Usage("recommend needs --model or --clusters".into()));
    }
    let data = ctx.load_dataset()?;
    let recs = match clusters {
        Some(path) => {
            let file = fs::File::open(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            let assignments = read_cluster_csv(file, &data.matrix)?;
            cluster_top_n_from_assignments(&assignments, &data.matrix, &user, n, min_support)?
        }
        None => {
            let model = read_model(&model_path.expect("checked above"))?;
            check_shape(&model, &data.matrix, &data.digest)?;
            top_n(&model.model, &data.matrix, &user, n, exclude_seen, ctx.scale()?)?
        }
    };
    let mut buf = Vec::new();
    write_recommendations_csv(&recs, &mut buf)?;
    write_outputs(&ctx.out_dir(), &[("recommendations.csv", buf)])
}

#[derive(Serialize)]
struct EvalOutput {
    rmse: f64,
    mae: f64,
    n_test: usize,
    fraction: f64,
    seed: u64,
}

fn eval(args: EvalArgs) -> Result<()> {
    let ctx = Ctx::new(args.common.clone())?;
    let path = ctx.model_path(&args.model).ok_or_else(|| CliError::Usage("eval needs --model".into()))?;
    let model = read_model(&path)?;
    let split_params = model.split;
    let fraction = match (args.fraction, split_params) {
        (Some(f), _) => ctx.fraction(Some(f))?,
        (None, Some(s)) => s.fraction,
        (None, None) => ctx.fraction(None)?,
    };
    let seed = match (args.common.seed, split_params) {
        (Some(s), _) => s,
        (None, Some(s)) => s.seed,
        (None, None) => ctx.seed(),
    };
    let data = ctx.load_dataset()?;
    check_shape(&model, &data.matrix, &data.digest)?;
    let split = split_ratings(&data.matrix, fraction, seed)?;
    let metrics = evaluate_model(&model.model, &split, ctx.scale()?)?;
    let out = EvalOutput { rmse: metrics.rmse, mae: metrics.mae, n_test: split.test.len(), fraction, seed };
    println!("{}", serde_json::to_string(&out).expect("plain struct serializes"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let outcome = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Train(a) => train(a),
        Command::Cluster(a) => cluster(a),
        Command::Recommend(a) => recommend(a),
        Command::Eval(a) => eval(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
