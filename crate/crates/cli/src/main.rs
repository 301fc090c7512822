mod overrides;
mod provenance;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use debias_core::bias::select_biased_pairs;
use debias_core::data::{generate_dataset, ingest_annotations, Dataset, GenConfig, SplitTag};
use debias_core::eval::EvalReport;
use debias_core::experiment::{datasets, planted_pairs, run_method, score, TrendRow, TEST_BACKGROUND, TEST_PER_SPLIT};
use debias_core::train::{train, Method, TrainArtifacts, TrainConfig};

use provenance::Provenance;

pub const SEED_ENV: &str = "DEBIAS_SEED";
const EVAL_FILE: &str = "eval.json";
const PAIRS_FILE: &str = "bias_pairs.json";
const TREND_FILE: &str = "trend.csv";
const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<debias_core::Error> for CliError {
    fn from(e: debias_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Contextual-bias auditing and mitigation for multi-label classifiers.
#[derive(Parser, Debug)]
#[command(name = "debias", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Rank biased category pairs from labels and predicted probabilities.
    Audit(AuditArgs),
    /// Train a model with one of the methods.
    Train(TrainArgs),
    /// Evaluate a trained model on a test dataset.
    Eval(EvalArgs),
    /// Train and evaluate methods across exclusive fractions and seeds.
    Sweep(SweepArgs),
    /// Merge evaluation reports into one comparison CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Overrides {
    /// Override a config field, e.g. `--set stage2_sgd.initial_lr=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed; takes precedence over DEBIAS_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Generator config JSON; the desk default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    /// Re-plant every pair at this exclusive fraction.
    #[arg(long)]
    exclusive_fraction: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Dataset manifest (or its directory) or annotation CSV.
    #[arg(long)]
    labels: PathBuf,
    /// Prediction CSV with header `id,<categories>`.
    #[arg(long)]
    preds: PathBuf,
    #[arg(long = "k", default_value_t = debias_core::bias::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = debias_core::bias::DEFAULT_FREQ_THRESHOLD)]
    freq_threshold: f64,
    /// Directory for the ranked pairs; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training config JSON; defaults for every field it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset directory or manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    /// Use the dataset's planted pairs instead of selecting pairs.
    #[arg(long)]
    planted: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Test dataset directory or manifest.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pairs as `b:c` indices; the test set's planted pairs, then the
    /// model's selected pairs, when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Vec<(usize, usize)>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Generator config JSON; the desk default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training config JSON applied to every run.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25")]
    fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "standard,ours_feature_split")]
    methods: Vec<Method>,
    /// Seeds; one seed from DEBIAS_SEED or the training config when omitted.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Override a training config field for every run.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directories holding an `eval.json` and a provenance manifest.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for the CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (b, c) = s.split_once(':').ok_or_else(|| format!("expected b:c, got {s:?}"))?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((num(b)?, num(c)?))
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Validation(format!("{SEED_ENV}={v:?} is not a seed"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, config: u64) -> CliResult<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(config),
    })
}

fn require(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Validation(format!("{} does not exist", path.display())))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(require(path)?).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_or_default<T: DeserializeOwned>(path: Option<&Path>, default: T) -> CliResult<T> {
    path.map_or(Ok(default), read_json)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn gen_config(args: &GenArgs) -> CliResult<GenConfig> {
    let mut cfg = read_or_default(args.config.as_deref(), GenConfig::desk_default(0))?;
    cfg = overrides::apply(&cfg, &args.overrides.sets)?;
    cfg.seed = resolve_seed(args.overrides.seed, cfg.seed)?;
    if let Some(f) = args.exclusive_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Validation(format!("exclusive fraction must lie in (0, 1), got {f}")));
        }
        cfg = cfg.with_exclusive_fraction(f);
    }
    Ok(match args.split {
        SplitArg::Train => cfg,
        SplitArg::Test => cfg.test_variant(TEST_PER_SPLIT, TEST_BACKGROUND),
    })
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let cfg = gen_config(args)?;
    let tag = match args.split {
        SplitArg::Train => SplitTag::Train,
        SplitArg::Test => SplitTag::Test,
    };
    let ds = generate_dataset(&cfg, tag)?;
    ds.save(&args.out)?;
    let inputs: Vec<&Path> = args.config.as_deref().into_iter().collect();
    Provenance::new("gen", Some(cfg.seed), &cfg, &inputs)?.write(&args.out)
}

fn cmd_audit(args: &AuditArgs) -> CliResult<()> {
    let ingested = ingest_annotations(require(&args.labels)?, Some(require(&args.preds)?))?;
    let preds = ingested.predictions.expect("predictions requested");
    let ds = &ingested.dataset;
    let set = select_biased_pairs(&preds, &ds.label_matrix(), args.k, args.freq_threshold)?;
    let ranked: Vec<_> = set
        .pairs
        .iter()
        .enumerate()
        .map(|(rank, p)| {
            json!({
                "rank": rank + 1,
                "b": p.b,
                "c": p.c,
                "biased": ds.categories[p.b],
                "context": ds.categories[p.c],
                "bias": p.score,
            })
        })
        .collect();
    let settings = json!({ "K": args.k, "freq_threshold": args.freq_threshold });
    let doc = json!({ "settings": settings, "shortfall": set.shortfall, "pairs": ranked });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    match &args.out {
        None => print!("{text}"),
        Some(dir) => {
            write_text(&dir.join(PAIRS_FILE), &text)?;
            Provenance::new("audit", None, &settings, &[&args.labels, &args.preds])?.write(dir)?;
        }
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let ds = Dataset::load(require(&args.data)?)?;
    let mut cfg = read_or_default(args.config.as_deref(), TrainConfig::default())?;
    cfg = overrides::apply(&cfg, &args.overrides.sets)?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    cfg.seed = resolve_seed(args.overrides.seed, cfg.seed)?;
    if args.planted {
        let gen = ds
            .generator_config
            .as_ref()
            .ok_or_else(|| CliError::Validation("--planted needs a generated dataset".into()))?;
        let pairs = planted_pairs(gen);
        cfg.k = pairs.len();
        cfg.pairs = Some(pairs);
    }
    let art = train(&ds, &cfg)?;
    art.save(&args.out, &cfg)?;
    let mut inputs: Vec<&Path> = vec![&args.data];
    inputs.extend(args.config.as_deref());
    Provenance::new("train", Some(cfg.seed), &cfg, &inputs)?.write(&args.out)
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let (art, cfg) = TrainArtifacts::load(require(&args.model)?, None)?;
    let test = Dataset::load(require(&args.test)?)?;
    let pairs = if !args.pairs.is_empty() {
        args.pairs.clone()
    } else if let Some(gen) = &test.generator_config {
        planted_pairs(gen)
    } else {
        art.pair_indices()
    };
    if pairs.is_empty() {
        return Err(CliError::Validation("no pairs to evaluate; pass --pairs".into()));
    }
    let report = score(&art, &cfg, &test, &pairs)?;
    report.save(&args.out.join(EVAL_FILE))?;
    let settings = json!({ "pairs": pairs, "train_config": cfg });
    Provenance::new("eval", Some(cfg.seed), &settings, &[&args.model, &args.test])?.write(&args.out)
}

fn fraction_dir(f: f64) -> String {
    format!("fraction_{f}")
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    if args.fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
        return Err(CliError::Validation(format!("fractions must lie in (0, 1), got {:?}", args.fractions)));
    }
    let gen_base = read_or_default(args.config.as_deref(), GenConfig::desk_default(0))?;
    let base = overrides::apply(&read_or_default(args.train_config.as_deref(), TrainConfig::default())?, &args.sets)?;
    base.validate()?;
    let seeds = if args.seeds.is_empty() { vec![resolve_seed(None, base.seed)?] } else { args.seeds.clone() };
    let jobs: Vec<(f64, u64)> = args.fractions.iter().flat_map(|&f| seeds.iter().map(move |&s| (f, s))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<CliResult<Vec<EvalReport>>>> = (0..jobs.len()).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&(fraction, seed)) = jobs.get(i) else { break };
                let out = sweep_job(args, &gen_base, &base, fraction, seed);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    for (&(fraction, _), result) in jobs.iter().zip(results) {
        for report in result.expect("every job ran")? {
            w.serialize(TrendRow::new(fraction, &report)).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&args.out.join(TREND_FILE), &String::from_utf8(bytes).expect("csv is utf-8"))?;
    let settings = json!({
        "fractions": args.fractions,
        "methods": args.methods,
        "seeds": seeds,
        "generator": gen_base,
        "train_config": base,
    });
    let inputs: Vec<&Path> = args.config.iter().chain(&args.train_config).map(PathBuf::as_path).collect();
    Provenance::new("sweep", None, &settings, &inputs)?.write(&args.out)
}

fn sweep_job(args: &SweepArgs, gen_base: &GenConfig, base: &TrainConfig, fraction: f64, seed: u64) -> CliResult<Vec<EvalReport>> {
    let gen = GenConfig { seed, ..gen_base.clone() }.with_exclusive_fraction(fraction);
    let data = datasets(&gen)?;
    let mut reports = Vec::new();
    for &method in &args.methods {
        let run = run_method(&data, base, method, seed)?;
        let dir = args.out.join(fraction_dir(fraction)).join(format!("seed_{seed}")).join(method.name());
        run.report.save(&dir.join(EVAL_FILE))?;
        let settings = json!({ "generator": gen, "train_config": run.config });
        Provenance::new("sweep", Some(seed), &settings, &[])?.write(&dir)?;
        reports.push(run.report);
    }
    Ok(reports)
}

fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let mut reports = Vec::new();
    for dir in &args.inputs {
        Provenance::read(require(dir)?)?;
        reports.push(EvalReport::load(require(&dir.join(EVAL_FILE))?)?);
    }
    let table = debias_core::eval::comparison_table(&reports)?;
    match &args.out {
        None => print!("{table}"),
        Some(dir) => {
            write_text(&dir.join(COMPARISON_FILE), &table)?;
            let inputs: Vec<&Path> = args.inputs.iter().map(PathBuf::as_path).collect();
            let methods: Vec<&str> = reports.iter().map(|r| r.meta.method.as_str()).collect();
            Provenance::new("report", None, &json!({ "methods": methods }), &inputs)?.write(dir)?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("debias: {}", e.message().replace('\n', " "));
            ExitCode::from(e.code())
        }
    }
}
