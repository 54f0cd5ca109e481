mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use simcurate::curation::{
    rank_and_select, read_scores, score_against_ref, write_scores, Aggregation, FeatureCache, ScoreConfig, ScoreKind,
    ScoringMethod, SeedSelection, SubsetPlan,
};
use simcurate::dataset::{ingest_render_dir, load_dataset, split_dataset, write_dataset, Role, SplitSpec, WriteMode};
use simcurate::eval::{evaluate_with, read_predictions, Interpolation};
use simcurate::features::{canny, load_gray, CannyParams, HashAlgorithm, HashBits};
use simcurate::genai::{
    augment_dataset, AugmentParams, Captioner, GenerationBackend, HttpBackend, HttpCaptioner, MockBackend,
    MockCaptioner, PromptProvider, SKIP_LOG,
};
use simcurate::report::{emit_report, ingest_training_results, read_ledger, replay, Ledger, Method, Stage};
use simcurate::{Error, ErrorKind, Result};

use crate::config::{dump_path_for_file, Settings, RESOLVED_CONFIG};

const EXIT_CONTRACT: u8 = 1;
const EXIT_ENVIRONMENT: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Curate, augment and evaluate synthetic object-detection datasets.
///
/// Every option can also be set in a TOML file passed with --config; flags
/// win over the file. Each run writes the fully resolved settings next to
/// its outputs.
#[derive(Debug, Parser)]
#[command(name = "simcurate", version)]
struct Cli {
    /// Master seed for all randomness (splits, prompt draws, random seed subsets) [default: 0]
    #[arg(long, global = true, help_heading = "Global options")]
    seed: Option<u64>,
    /// Worker threads for parallel stages; 0 uses every core [default: 0]
    #[arg(long, global = true, help_heading = "Global options")]
    jobs: Option<usize>,
    /// TOML settings file
    #[arg(long, global = true, help_heading = "Global options", value_name = "FILE")]
    config: Option<PathBuf>,
    /// NDJSON ledger that stage timings and results are appended to
    #[arg(
        long,
        global = true,
        help_heading = "Global options",
        value_name = "FILE",
        env = "SIMCURATE_LEDGER"
    )]
    ledger: Option<PathBuf>,
    /// Hardware description stored with recorded timings
    #[arg(long, global = true, help_heading = "Global options")]
    hardware: Option<String>,
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, help_heading = "Global options", action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a render export directory into a dataset manifest
    Ingest(IngestArgs),
    /// Score every pool image by its distance to a reference set
    Score(ScoreArgs),
    /// Build nested training subsets from a score table
    Select(SelectArgs),
    /// Split a dataset into train and validation parts
    Split(SplitArgs),
    /// Regenerate image backgrounds while keeping the targets
    Augment(AugmentArgs),
    /// Write the Canny edge map of one image
    Canny(CannyArgs),
    /// Compute per-class AP and mAP of predictions against ground truth
    Eval(EvalArgs),
    /// Append training results (method,n_images,map50,training_seconds) to the ledger
    IngestResults(IngestResultsArgs),
    /// Record an externally measured stage time in the ledger
    RecordTime(RecordTimeArgs),
    /// Write report.csv and report.svg from the ledger
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Export directory holding images/ and optionally labels/, masks/, depth/
    #[arg(long, value_name = "DIR")]
    render_dir: PathBuf,
    /// Dataset name [default: the directory name]
    #[arg(long)]
    name: Option<String>,
    /// Dataset role: train, val, ref or test
    #[arg(long, default_value = "train")]
    role: Role,
    /// Copy images, masks and depth maps into the output directory instead of referencing them
    #[arg(long)]
    copy: bool,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Pool manifest
    #[arg(long, value_name = "MANIFEST")]
    pool: PathBuf,
    /// Reference manifest
    #[arg(long = "ref", value_name = "MANIFEST")]
    reference: PathBuf,
    /// Feature: brightness or phash [default: phash]
    #[arg(long)]
    method: Option<String>,
    /// Hash algorithm for phash: dct_phash, average_hash or difference_hash [default: dct_phash]
    #[arg(long)]
    algorithm: Option<String>,
    /// Hash length in bits: 16, 64 or 256 [default: 64]
    #[arg(long)]
    bits: Option<u32>,
    /// How distances to the reference images combine: min, mean or median [default: min]
    #[arg(long)]
    aggregation: Option<String>,
    /// Feature cache file, read if present and updated afterwards
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    /// Output CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Score CSV written by `score`
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Pool manifest the scores refer to
    #[arg(long, value_name = "MANIFEST")]
    pool: PathBuf,
    /// Subset plan SEED:STEP:MAX [default: 400:200:2000]
    #[arg(long)]
    plan: Option<String>,
    /// Seed images: first_by_id, or random (drawn with --seed) [default: first_by_id]
    #[arg(long)]
    seed_selection: Option<String>,
    /// Output directory; one sub-directory per subset
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Dataset manifest
    #[arg(long, value_name = "MANIFEST")]
    dataset: PathBuf,
    /// Fraction of records in the train part [default: 0.8]
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Output directory; receives <name>_train and <name>_val
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CannyFlags {
    /// Lower hysteresis threshold on the 8-bit gradient scale [default: 100]
    #[arg(long)]
    t_low: Option<f64>,
    /// Upper hysteresis threshold [default: 200]
    #[arg(long)]
    t_high: Option<f64>,
    /// Gaussian pre-blur; 0 disables it [default: 1.4]
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Dataset manifest; records need masks and depth maps
    #[arg(long, value_name = "MANIFEST")]
    dataset: PathBuf,
    /// Prompt source: context_aware, random_pool or file [default: random_pool]
    #[arg(long)]
    mode: Option<String>,
    /// Reference manifest captioned for context_aware prompts
    #[arg(long = "refs", value_name = "MANIFEST")]
    refs: Option<PathBuf>,
    /// Prompt file for the file mode, one prompt per line
    #[arg(long, value_name = "FILE")]
    prompts: Option<PathBuf>,
    /// Generation service base URL
    #[arg(long, env = "SIMCURATE_BACKEND_URL")]
    backend_url: Option<String>,
    /// Use the in-process mock backend and captioner
    #[arg(long)]
    mock: bool,
    /// Mock only: fail this many requests per thousand [default: 0]
    #[arg(long)]
    mock_fail_per_mille: Option<u32>,
    /// ControlNet conditioning scale in (0, 1] [default: 0.5]
    #[arg(long)]
    control_scale: Option<f64>,
    /// Classifier-free guidance scale [default: 5.0]
    #[arg(long)]
    guidance_scale: Option<f64>,
    /// Denoising steps [default: 50]
    #[arg(long)]
    steps: Option<u32>,
    /// Retries after a retryable backend failure [default: 2]
    #[arg(long)]
    max_retries: Option<u32>,
    /// Base delay between retries in milliseconds, multiplied by the attempt number [default: 500]
    #[arg(long)]
    retry_delay_ms: Option<u64>,
    /// Per-request timeout in seconds [default: 300]
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Also keep the raw backend output under generated/
    #[arg(long)]
    keep_generated: bool,
    #[command(flatten)]
    canny: CannyFlags,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CannyArgs {
    /// Input image
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    #[command(flatten)]
    canny: CannyFlags,
    /// Output PNG (edges 255, background 0)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth manifest
    #[arg(long, value_name = "MANIFEST")]
    truth: PathBuf,
    /// Predictions CSV: image_id,class_id,cx,cy,w,h,confidence
    #[arg(long, value_name = "FILE")]
    predictions: PathBuf,
    /// IoU needed for a match [default: 0.5]
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// all_points or eleven_point [default: all_points]
    #[arg(long)]
    interpolation: Option<String>,
    /// Also write the result as JSON here
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Record the result in the ledger under this method (needs --n-images)
    #[arg(long, requires = "n_images")]
    method: Option<Method>,
    /// Training-set size the predictions come from
    #[arg(long, requires = "method")]
    n_images: Option<usize>,
}

#[derive(Debug, Args)]
struct IngestResultsArgs {
    /// CSV with columns method,n_images,map50,training_seconds
    #[arg(long, value_name = "FILE")]
    results: PathBuf,
}

#[derive(Debug, Args)]
struct RecordTimeArgs {
    /// render, generation, filtering or training
    #[arg(long)]
    stage: Stage,
    /// Wall-clock seconds
    #[arg(long)]
    seconds: f64,
    /// Method the time belongs to; omit to share it across methods
    #[arg(long)]
    method: Option<Method>,
    /// Dataset size the time belongs to; omit to share it across sizes
    #[arg(long)]
    n_images: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Contract => EXIT_CONTRACT,
                ErrorKind::Environment => EXIT_ENVIRONMENT,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        s.jobs = jobs;
    }
    if cli.ledger.is_some() {
        s.ledger = cli.ledger;
    }
    if cli.hardware.is_some() {
        s.hardware = cli.hardware;
    }
    if s.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(s.jobs).build_global() {
            log::debug!("global thread pool already set: {e}");
        }
    }
    let ledger = s.ledger.as_deref().map(Ledger::open).transpose()?;
    let ctx = Ctx {
        ledger,
        started: Instant::now(),
    };

    match cli.command {
        Command::Ingest(a) => ingest(s, a),
        Command::Score(a) => score(s, a, &ctx),
        Command::Select(a) => select(s, a, &ctx),
        Command::Split(a) => split(s, a),
        Command::Augment(a) => augment(s, a, &ctx),
        Command::Canny(a) => canny_cmd(s, a),
        Command::Eval(a) => eval(s, a, &ctx),
        Command::IngestResults(a) => ingest_results(a, &ctx),
        Command::RecordTime(a) => record_time(s, a, &ctx),
        Command::Report(a) => report(s, a, &ctx),
    }
}

struct Ctx {
    ledger: Option<Ledger>,
    started: Instant,
}

impl Ctx {
    fn require_ledger(&self) -> Result<&Ledger> {
        self.ledger
            .as_ref()
            .ok_or_else(|| Error::contract("this command needs a ledger (--ledger or SIMCURATE_LEDGER)"))
    }

    fn record(&self, s: &Settings, method: Option<Method>, n: Option<usize>, stage: Stage) -> Result<()> {
        match &self.ledger {
            Some(l) => l.record_timing(
                method,
                n,
                stage,
                self.started.elapsed().as_secs_f64(),
                s.hardware.as_deref(),
            ),
            None => Ok(()),
        }
    }
}

fn canny_params(s: &mut Settings, f: &CannyFlags) -> Result<CannyParams> {
    if let Some(v) = f.t_low {
        s.canny.t_low = v;
    }
    if let Some(v) = f.t_high {
        s.canny.t_high = v;
    }
    if let Some(v) = f.sigma {
        s.canny.sigma = v;
    }
    let p = CannyParams {
        t_low: s.canny.t_low,
        t_high: s.canny.t_high,
        sigma: s.canny.sigma,
    };
    p.validate()?;
    Ok(p)
}

fn ingest(mut s: Settings, a: IngestArgs) -> Result<()> {
    s.run.command = "ingest".into();
    s.path("render_dir", &a.render_dir);
    s.path("out", &a.out);
    let name = match a.name {
        Some(n) => n,
        None => a
            .render_dir
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_string)
            .ok_or_else(|| Error::contract("cannot derive a dataset name; pass --name"))?,
    };
    let d = ingest_render_dir(&a.render_dir, &name, a.role)?;
    let mode = if a.copy { WriteMode::Copy } else { WriteMode::Reference };
    let manifest = write_dataset(&d, &a.out, mode)?;
    s.dump(&a.out.join(RESOLVED_CONFIG))?;
    println!("{}\t{}", manifest.display(), d.len());
    Ok(())
}

fn scoring_method(s: &Settings) -> Result<ScoringMethod> {
    match s.score.method.as_str() {
        "brightness" => Ok(ScoringMethod::Brightness),
        "phash" => Ok(ScoringMethod::Phash {
            algorithm: s.score.algorithm.parse::<HashAlgorithm>()?,
            bits: HashBits::new(s.score.bits)?,
        }),
        other => Err(Error::contract(format!(
            "unknown scoring method '{other}' (brightness or phash)"
        ))),
    }
}

fn filter_method(kind: ScoreKind) -> Method {
    match kind {
        ScoreKind::Brightness => Method::FilBrightness,
        ScoreKind::Phash => Method::FilPhash,
    }
}

fn score(mut s: Settings, a: ScoreArgs, ctx: &Ctx) -> Result<()> {
    s.run.command = "score".into();
    s.path("pool", &a.pool);
    s.path("ref", &a.reference);
    s.path("out", &a.out);
    if let Some(v) = a.method {
        s.score.method = v;
    }
    if let Some(v) = a.algorithm {
        s.score.algorithm = v;
    }
    if let Some(v) = a.bits {
        s.score.bits = v;
    }
    if let Some(v) = a.aggregation {
        s.score.aggregation = v;
    }
    if a.cache.is_some() {
        s.score.cache = a.cache;
    }
    let method = scoring_method(&s)?;
    let aggregation: Aggregation = s.score.aggregation.parse()?;

    let pool = load_dataset(&a.pool)?;
    let reference = load_dataset(&a.reference)?;
    let cache = s.score.cache.as_deref().map(FeatureCache::load).transpose()?;
    let config = ScoreConfig {
        method,
        aggregation,
        jobs: s.jobs,
    };
    let scores = score_against_ref(&pool, &reference, &config, cache.as_ref())?;
    if let Some(out_dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
    }
    write_scores(&a.out, &scores)?;
    if let (Some(c), Some(p)) = (&cache, &s.score.cache) {
        c.save(p)?;
        log::info!("feature cache: {} entries, {} hits", c.len(), c.hits());
    }
    s.dump(&dump_path_for_file(&a.out))?;
    ctx.record(&s, Some(filter_method(method.kind())), None, Stage::Filtering)?;
    println!("{}\t{}", a.out.display(), scores.len());
    Ok(())
}

fn select(mut s: Settings, a: SelectArgs, ctx: &Ctx) -> Result<()> {
    s.run.command = "select".into();
    s.path("scores", &a.scores);
    s.path("pool", &a.pool);
    s.path("out", &a.out);
    if let Some(v) = a.plan {
        s.select.plan = v;
    }
    if let Some(v) = a.seed_selection {
        s.select.seed_selection = v;
    }
    let plan: SubsetPlan = s.select.plan.parse()?;
    let seed = match s.select.seed_selection.as_str() {
        "first_by_id" => SeedSelection::FirstById,
        "random" => SeedSelection::Random(s.seed),
        other => {
            return Err(Error::contract(format!(
                "unknown seed selection '{other}' (first_by_id or random)"
            )))
        }
    };
    let scores = read_scores(&a.scores)?;
    let pool = load_dataset(&a.pool)?;
    let subsets = rank_and_select(&scores, &pool, &plan, seed)?;
    for d in &subsets {
        let manifest = write_dataset(d, &a.out.join(&d.name), WriteMode::Reference)?;
        println!("{}\t{}", manifest.display(), d.len());
    }
    s.dump(&a.out.join(RESOLVED_CONFIG))?;
    let method = scores.first().map(|sc| filter_method(sc.method));
    ctx.record(&s, method, None, Stage::Filtering)
}

fn split(mut s: Settings, a: SplitArgs) -> Result<()> {
    s.run.command = "split".into();
    s.path("dataset", &a.dataset);
    s.path("out", &a.out);
    if let Some(v) = a.train_fraction {
        s.split.train_fraction = v;
    }
    let d = load_dataset(&a.dataset)?;
    let spec = SplitSpec {
        train_fraction: s.split.train_fraction,
        seed: s.seed,
    };
    let (train, val) = split_dataset(&d, &spec)?;
    for part in [&train, &val] {
        let manifest = write_dataset(part, &a.out.join(&part.name), WriteMode::Reference)?;
        println!("{}\t{}", manifest.display(), part.len());
    }
    s.dump(&a.out.join(RESOLVED_CONFIG))
}

fn augment(mut s: Settings, a: AugmentArgs, ctx: &Ctx) -> Result<()> {
    s.run.command = "augment".into();
    s.path("dataset", &a.dataset);
    s.path("out", &a.out);
    let canny = canny_params(&mut s, &a.canny)?;
    let aug = &mut s.augment;
    if let Some(v) = a.mode {
        aug.mode = v;
    }
    if a.prompts.is_some() {
        aug.prompts = a.prompts;
    }
    if a.backend_url.is_some() {
        aug.backend_url = a.backend_url;
    }
    aug.mock |= a.mock;
    aug.keep_generated |= a.keep_generated;
    if let Some(v) = a.mock_fail_per_mille {
        aug.mock_fail_per_mille = v;
    }
    if let Some(v) = a.control_scale {
        aug.control_scale = v;
    }
    if let Some(v) = a.guidance_scale {
        aug.guidance_scale = v;
    }
    if let Some(v) = a.steps {
        aug.steps = v;
    }
    if let Some(v) = a.max_retries {
        aug.max_retries = v;
    }
    if let Some(v) = a.retry_delay_ms {
        aug.retry_delay_ms = v;
    }
    if let Some(v) = a.timeout_secs {
        aug.timeout_secs = v;
    }
    if let Some(r) = &a.refs {
        s.path("refs", r);
    }
    let aug = &s.augment;
    let timeout = Duration::from_secs(aug.timeout_secs);

    let backend_url = || {
        aug.backend_url.clone().ok_or_else(|| {
            Error::contract("no generation backend: pass --backend-url, set SIMCURATE_BACKEND_URL, or use --mock")
        })
    };
    let provider = match aug.mode.as_str() {
        "random_pool" => PromptProvider::random_pool(),
        "file" => {
            let path = aug
                .prompts
                .as_deref()
                .ok_or_else(|| Error::contract("file mode needs --prompts"))?;
            PromptProvider::from_file(path)?
        }
        "context_aware" => {
            let refs = a
                .refs
                .as_deref()
                .ok_or_else(|| Error::contract("context_aware mode needs --refs"))?;
            let captioner: Arc<dyn Captioner> = if aug.mock {
                Arc::new(MockCaptioner::new(aug.mock_caption.clone()))
            } else {
                Arc::new(HttpCaptioner::new(&backend_url()?, timeout))
            };
            PromptProvider::context_aware(captioner, load_dataset(refs)?)?
        }
        other => {
            return Err(Error::contract(format!(
                "unknown prompt mode '{other}' (context_aware, random_pool or file)"
            )))
        }
    };
    let backend: Box<dyn GenerationBackend> = if aug.mock {
        Box::new(MockBackend::failing(aug.mock_fail_per_mille))
    } else {
        Box::new(HttpBackend::new(&backend_url()?, timeout))
    };
    let params = AugmentParams {
        master_seed: s.seed,
        control_scale: aug.control_scale,
        guidance_scale: aug.guidance_scale,
        denoise_steps: aug.steps,
        canny,
        max_retries: aug.max_retries,
        retry_delay: Duration::from_millis(aug.retry_delay_ms),
        jobs: s.jobs,
        keep_generated: aug.keep_generated,
    };

    let d = load_dataset(&a.dataset)?;
    let outcome = augment_dataset(&d, &provider, backend.as_ref(), &params, &a.out)?;
    s.dump(&a.out.join(RESOLVED_CONFIG))?;
    let method = match provider.provenance() {
        simcurate::dataset::Provenance::GenaiRandom => Method::AugRandom,
        _ => Method::AugContext,
    };
    ctx.record(&s, Some(method), Some(d.len()), Stage::Generation)?;
    println!(
        "{}\t{} generated, {} skipped, {} rejected (see {SKIP_LOG})",
        a.out.join(simcurate::dataset::MANIFEST_FILE).display(),
        outcome.dataset.len(),
        outcome.skipped.len(),
        outcome.rejected.len()
    );
    Ok(())
}

fn canny_cmd(mut s: Settings, a: CannyArgs) -> Result<()> {
    s.run.command = "canny".into();
    s.path("image", &a.image);
    s.path("out", &a.out);
    let params = canny_params(&mut s, &a.canny)?;
    let edges = canny(&load_gray(&a.image)?, &params)?;
    edges.to_luma().save(&a.out).map_err(|source| Error::Image {
        path: a.out.clone(),
        source,
    })?;
    s.dump(&dump_path_for_file(&a.out))?;
    println!("{}\t{} edge pixels", a.out.display(), edges.count());
    Ok(())
}

fn eval(mut s: Settings, a: EvalArgs, ctx: &Ctx) -> Result<()> {
    s.run.command = "eval".into();
    s.path("truth", &a.truth);
    s.path("predictions", &a.predictions);
    if let Some(v) = a.iou_threshold {
        s.eval.iou_threshold = v;
    }
    if let Some(v) = a.interpolation {
        s.eval.interpolation = v;
    }
    let interpolation = match s.eval.interpolation.as_str() {
        "all_points" => Interpolation::AllPoints,
        "eleven_point" => Interpolation::ElevenPoint,
        other => {
            return Err(Error::contract(format!(
                "unknown interpolation '{other}' (all_points or eleven_point)"
            )))
        }
    };
    let truth = load_dataset(&a.truth)?;
    let preds = read_predictions(&a.predictions)?;
    let result = evaluate_with(&preds, &truth, s.eval.iou_threshold, interpolation)?;
    let json = serde_json::to_string_pretty(&result).expect("evaluation result serializes");
    if let Some(out) = &a.out {
        s.path("out", out);
        std::fs::write(out, format!("{json}\n")).map_err(|source| Error::Io {
            path: out.clone(),
            source,
        })?;
        s.dump(&dump_path_for_file(out))?;
    }
    if let (Some(method), Some(n_images)) = (a.method, a.n_images) {
        ctx.require_ledger()?.append(&simcurate::report::LedgerEntry::Map50 {
            method,
            n_images,
            map50: result.map50,
            training_seconds: None,
        })?;
    }
    println!("{json}");
    Ok(())
}

fn ingest_results(a: IngestResultsArgs, ctx: &Ctx) -> Result<()> {
    let summary = ingest_training_results(&a.results, ctx.require_ledger()?)?;
    for (line, method) in &summary.unknown_methods {
        eprintln!("{}:{line}: unknown method '{method}', row ignored", a.results.display());
    }
    for (method, n) in &summary.new_records {
        eprintln!("note: created new record {method} n={n}");
    }
    println!(
        "ingested {} result(s), {} unknown method row(s)",
        summary.ingested,
        summary.unknown_methods.len()
    );
    Ok(())
}

fn record_time(s: Settings, a: RecordTimeArgs, ctx: &Ctx) -> Result<()> {
    ctx.require_ledger()?
        .record_timing(a.method, a.n_images, a.stage, a.seconds, s.hardware.as_deref())
}

fn report(mut s: Settings, a: ReportArgs, ctx: &Ctx) -> Result<()> {
    s.run.command = "report".into();
    s.path("out", &a.out);
    let ledger = ctx.require_ledger()?;
    let records = replay(&read_ledger(ledger.path())?);
    let paths = emit_report(&records, &a.out)?;
    s.dump(&a.out.join(RESOLVED_CONFIG))?;
    let pending = records.iter().filter(|r| !r.is_complete()).count();
    println!("{}\n{}", paths.csv.display(), paths.svg.display());
    if pending > 0 {
        eprintln!("note: {pending} record(s) still lack an mAP50 result");
    }
    Ok(())
}
