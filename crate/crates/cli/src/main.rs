//! `triage` command line: train, evaluate, classify, serve and bench.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use triage_core::bilstm::{bilstm_train, BilstmConfig};
use triage_core::corpus::{build_dataset, load_csv, ColumnMap, CorpusError, Dataset, Label};
use triage_core::envelope::{self, EnvelopeError};
use triage_core::eval::{self, CvSettings, EvalError, ModelSpec, Weighting};
use triage_core::logreg::{class_weights_from_counts, lr_train, LrHyperParams};
use triage_core::model::{ClassifyError, ModelParams, TrainedModel};
use triage_core::nb::nb_train;
use triage_core::vectorize::{bow_counts, build_vocab, encode_sequence, tfidf_transform};
use triage_router::config::{parse_kv_lines, ConfigError};
use triage_router::{RouterConfig, RouterService};

fn version_line() -> &'static str {
    Box::leak(
        format!(
            "{} (model format v{})",
            env!("CARGO_PKG_VERSION"),
            envelope::FORMAT_VERSION
        )
        .into_boxed_str(),
    )
}

#[derive(Parser)]
#[command(
    name = "triage",
    version = version_line(),
    about = "Support ticket triage: train, evaluate, classify, serve and bench classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save it as a fingerprinted envelope.
    Train(TrainArgs),
    /// Repeated stratified k-fold cross-validation on a ticket CSV.
    Evaluate(EvaluateArgs),
    /// Classify a single text or a CSV of tickets.
    Classify(ClassifyArgs),
    /// Serve the ticket intake and routing HTTP API.
    Serve(ServeArgs),
    /// Measure throughput and latency of saved models.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Model family: nb, logreg or bilstm.
    #[arg(long)]
    model: String,
    /// Training CSV with subject, body and type columns.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the model envelope.
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value hyperparameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for all randomness in training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model family: nb, logreg, bilstm or majority.
    #[arg(long = "model-type")]
    model_type: String,
    /// Ticket CSV with subject, body and type columns.
    #[arg(long)]
    data: PathBuf,
    /// Number of stratified folds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    k: u64,
    /// Times the whole k-fold protocol is repeated with fresh splits.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    /// Root seed; folds and per-repeat model seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flat key=value hyperparameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the canonical JSON report here (timings go to a sidecar).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Vocabulary document-frequency floor, fitted per training fold.
    #[arg(long = "min-df", default_value_t = 2)]
    min_df: usize,
    /// Vocabulary size cap.
    #[arg(long = "max-vocab", default_value_t = 50_000)]
    max_vocab: usize,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["text", "input"]))]
struct ClassifyArgs {
    /// Saved model envelope.
    #[arg(long)]
    model: PathBuf,
    /// Classify this one text.
    #[arg(long)]
    text: Option<String>,
    /// Classify every row of this CSV (subject/body columns).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Saved model envelope; overrides the config file's model key.
    #[arg(long)]
    model: PathBuf,
    /// Router config: flat key=value (queue_capacity, worker_count, ...).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Saved model envelopes to compare.
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    /// CSV whose subject/body rows become the benchmark texts.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated batch sizes.
    #[arg(long = "batch-sizes", value_delimiter = ',', default_value = "1,32,64")]
    batch_sizes: Vec<usize>,
}

// Exit codes: 0 success, 1 usage, 2 data error, 3 training/serving failure.
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn run(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match &e {
            EvalError::Corpus(_) => CliError::data(e.to_string()),
            _ => CliError::run(e.to_string()),
        }
    }
}

// A missing model file is a data problem; a failed integrity or format
// check means the artifact cannot be served.
fn envelope_error(e: EnvelopeError) -> CliError {
    match &e {
        EnvelopeError::Io { .. } => CliError::data(e.to_string()),
        _ => CliError::run(e.to_string()),
    }
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let reader = load_csv(path, &ColumnMap::default())?;
    let mut tickets = Vec::new();
    for row in reader {
        tickets.push(row?);
    }
    let dataset = build_dataset(tickets);
    if dataset.is_empty() {
        return Err(CliError::data(format!(
            "{}: no usable documents after cleaning",
            path.display()
        )));
    }
    Ok(dataset)
}

/// Hyperparameters for one training or evaluation run, assembled from
/// defaults, then the config file, then flags. Keys are shared across
/// families; each run reads only the ones its family uses.
struct TrainOptions {
    min_df: usize,
    max_vocab: usize,
    weighting: Weighting,
    alpha: f64,
    lr: LrHyperParams,
    bilstm: BilstmConfig,
    val_fraction: f64,
}

impl TrainOptions {
    fn new(seed: u64) -> Self {
        TrainOptions {
            min_df: 2,
            max_vocab: 50_000,
            weighting: Weighting::Unweighted,
            alpha: 1.0,
            lr: LrHyperParams {
                seed,
                ..LrHyperParams::default()
            },
            bilstm: BilstmConfig {
                seed,
                ..BilstmConfig::default()
            },
            val_fraction: 0.1,
        }
    }

    fn load(path: Option<&Path>, seed: u64) -> Result<Self, CliError> {
        let mut opts = TrainOptions::new(seed);
        let Some(path) = path else { return Ok(opts) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        for ((key, value), line) in parse_kv_lines(&text)? {
            opts.apply(&key, &value)
                .map_err(|message| CliError::data(format!("{}:{line}: {message}", path.display())))?;
        }
        Ok(opts)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| format!("bad value for {key}: {e}"))
        }
        match key {
            "min_df" => self.min_df = parse(key, value)?,
            "max_vocab" => self.max_vocab = parse(key, value)?,
            "weighting" => {
                self.weighting = match value {
                    "unweighted" => Weighting::Unweighted,
                    "inverse_frequency" => Weighting::InverseFrequency,
                    _ => {
                        return Err(format!(
                            "bad value for weighting: {value} (use unweighted or inverse_frequency)"
                        ))
                    }
                }
            }
            "alpha" => self.alpha = parse(key, value)?,
            "learning_rate" => {
                let v = parse(key, value)?;
                self.lr.learning_rate = v;
                self.bilstm.learning_rate = v;
            }
            "batch_size" => {
                let v = parse(key, value)?;
                self.lr.batch_size = v;
                self.bilstm.batch_size = v;
            }
            "epochs" => self.lr.epochs = parse(key, value)?,
            "l2" => self.lr.l2 = parse(key, value)?,
            "hidden_sizes" => {
                self.bilstm.hidden_sizes = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<usize>, _>>()
                    .map_err(|e| format!("bad value for hidden_sizes: {e}"))?;
            }
            "embedding_dim" => self.bilstm.embedding_dim = parse(key, value)?,
            "max_epochs" => self.bilstm.max_epochs = parse(key, value)?,
            "patience" => self.bilstm.patience = parse(key, value)?,
            "max_len" => self.bilstm.max_len = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            _ => return Err(format!("unknown config key: {key}")),
        }
        Ok(())
    }

    fn model_spec(&self, family: &str) -> Result<ModelSpec, CliError> {
        match family {
            "nb" => Ok(ModelSpec::NaiveBayes { alpha: self.alpha }),
            "logreg" => Ok(ModelSpec::LogReg {
                hyperparams: self.lr.clone(),
                weighting: self.weighting,
            }),
            "bilstm" => Ok(ModelSpec::Bilstm {
                config: self.bilstm.clone(),
                weighting: self.weighting,
                val_fraction: self.val_fraction,
            }),
            "majority" => Ok(ModelSpec::Majority),
            other => Err(CliError::data(format!(
                "unknown model type: {other} (use nb, logreg, bilstm or majority)"
            ))),
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let family = args.model.as_str();
    if !matches!(family, "nb" | "logreg" | "bilstm") {
        return Err(CliError::data(format!(
            "unknown model family: {family} (use nb, logreg or bilstm)"
        )));
    }
    let opts = TrainOptions::load(args.config.as_deref(), args.seed)?;
    let dataset = load_dataset(&args.data)?;
    dataset.require_trainable()?;
    println!(
        "loaded {} documents (change={}, problem={}, request={}), dropped {}",
        dataset.len(),
        dataset.class_counts[0],
        dataset.class_counts[1],
        dataset.class_counts[2],
        dataset.dropped_count
    );
    let vocab = build_vocab(dataset.documents.iter(), opts.min_df, opts.max_vocab)
        .map_err(|e| CliError::run(e.to_string()))?;
    println!("vocabulary: {} tokens", vocab.size());
    let weights = match opts.weighting {
        Weighting::Unweighted => [1.0; 3],
        Weighting::InverseFrequency => class_weights_from_counts(dataset.class_counts)
            .map_err(|e| CliError::run(e.to_string()))?,
    };

    let params = match family {
        "nb" => {
            let vectors: Vec<_> = dataset
                .documents
                .iter()
                .map(|d| (bow_counts(d, &vocab), d.label))
                .collect();
            ModelParams::Nb(
                nb_train(&vectors, opts.alpha, &vocab).map_err(|e| CliError::run(e.to_string()))?,
            )
        }
        "logreg" => {
            let hp = LrHyperParams {
                class_weights: weights,
                ..opts.lr.clone()
            };
            let data: Vec<_> = dataset
                .documents
                .iter()
                .map(|d| (tfidf_transform(&bow_counts(d, &vocab), &vocab), d.label))
                .collect();
            let (model, losses) =
                lr_train(&data, vocab.size(), &hp).map_err(|e| CliError::run(e.to_string()))?;
            println!(
                "trained {} epochs, final loss {:.6}",
                losses.len(),
                losses.last().copied().unwrap_or(f64::NAN)
            );
            ModelParams::LogReg(model)
        }
        "bilstm" => {
            let config = BilstmConfig {
                class_weights: weights,
                ..opts.bilstm.clone()
            };
            let data: Vec<_> = dataset
                .documents
                .iter()
                .map(|d| (encode_sequence(d, &vocab, config.max_len), d.label))
                .collect();
            let (model, history) = bilstm_train(&data, vocab.size(), &config, opts.val_fraction)
                .map_err(|e| CliError::run(e.to_string()))?;
            for (i, epoch) in history.epochs.iter().enumerate() {
                println!(
                    "epoch {}: train_loss={:.4} val_loss={:.4} val_acc={:.4} ({:.1}s)",
                    i + 1,
                    epoch.train_loss,
                    epoch.val_loss,
                    epoch.val_accuracy,
                    epoch.seconds
                );
            }
            println!("best epoch: {}", history.best_epoch + 1);
            ModelParams::Bilstm(model)
        }
        _ => unreachable!(),
    };

    let model = TrainedModel {
        vocab,
        params,
        dataset_hash: dataset.content_hash(),
    };
    let fingerprint = envelope::save(&model, "", &args.out).map_err(envelope_error)?;
    println!(
        "saved {family} model to {} (fingerprint {fingerprint})",
        args.out.display()
    );
    Ok(())
}

// report.json -> report.timings.json
fn sidecar_path(report: &Path) -> PathBuf {
    match report.extension() {
        Some(ext) => report.with_extension(format!("timings.{}", ext.to_string_lossy())),
        None => report.with_extension("timings"),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let opts = TrainOptions::load(args.config.as_deref(), args.seed)?;
    let spec = opts.model_spec(&args.model_type)?;
    let dataset = load_dataset(&args.data)?;
    let settings = CvSettings {
        k: args.k as usize,
        repeats: args.repeats as usize,
        seed: args.seed,
        min_df: args.min_df,
        max_size: args.max_vocab,
    };
    let report = eval::run_cv(&dataset, &spec, &settings)?;
    print!("{}", report.render_text());
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_json())
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        let timings = sidecar_path(path);
        let rows = serde_json::to_string_pretty(&report.timings()).expect("timings serialize");
        std::fs::write(&timings, rows)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", timings.display())))?;
        println!("report: {} (timings: {})", path.display(), timings.display());
    }
    Ok(())
}

fn format_prediction(label: Label, p: [f64; 3]) -> String {
    format!("{}\t{:.6}\t{:.6}\t{:.6}", label.name(), p[0], p[1], p[2])
}

/// Lenient reader for classification and bench input: any CSV with a
/// subject or body column works, labels are not required.
fn read_texts(path: &Path) -> Result<Vec<String>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let subject = find("subject");
    let body = find("body");
    if subject.is_none() && body.is_none() {
        return Err(CliError::data(format!(
            "{}: need a subject or body column",
            path.display()
        )));
    }
    let mut texts = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| CliError::data(format!("{} row {}: {e}", path.display(), i + 1)))?;
        let get = |idx: Option<usize>| idx.and_then(|j| row.get(j)).unwrap_or("");
        texts.push(format!("{} {}", get(subject), get(body)).trim().to_string());
    }
    Ok(texts)
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let model = envelope::load(&args.model).map_err(envelope_error)?.model;
    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let write_failed = |e: std::io::Error| CliError::data(format!("write failed: {e}"));

    if let Some(text) = &args.text {
        match model.classify_text(text) {
            Ok((label, p)) => writeln!(out, "{}", format_prediction(label, p)).map_err(write_failed),
            Err(ClassifyError::EmptyAfterClean) => {
                Err(CliError::data("text is empty after cleaning"))
            }
            Err(ClassifyError::Model(m)) => Err(CliError::run(m)),
        }?;
        return Ok(());
    }

    let input = args.input.as_ref().expect("clap guarantees a source");
    for text in read_texts(input)? {
        match model.classify_text(&text) {
            Ok((label, p)) => {
                writeln!(out, "{}", format_prediction(label, p)).map_err(write_failed)?;
            }
            // Keep one aligned line per input row.
            Err(ClassifyError::EmptyAfterClean) => {
                writeln!(out, "empty-after-clean\t0.000000\t0.000000\t0.000000")
                    .map_err(write_failed)?;
            }
            Err(ClassifyError::Model(m)) => return Err(CliError::run(m)),
        }
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let mut config = RouterConfig::new(args.model.clone(), PathBuf::from("triage-data"));
    if let Some(path) = &args.config {
        config.load_overrides(path)?;
    }
    // Flags override the config file.
    config.model_path = args.model.clone();

    let loaded = envelope::load(&config.model_path).map_err(envelope_error)?;
    println!(
        "model: {} (fingerprint {})",
        loaded.model.model_type(),
        loaded.fingerprint
    );
    let (service, report) =
        RouterService::start_with_model(loaded.model, loaded.fingerprint, config.clone())
            .map_err(|e| CliError::run(e.to_string()))?;
    if report.replayed_events > 0 {
        println!(
            "recovered {} events: {} tickets requeued, {} rerouted",
            report.replayed_events, report.requeued, report.rerouted
        );
    }
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let service = Arc::new(service);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::run(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.listen_addr)
            .await
            .map_err(|e| CliError::run(format!("cannot bind {}: {e}", config.listen_addr)))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::run(e.to_string()))?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();
        tokio::select! {
            result = triage_router::http::serve(Arc::clone(&service), listener) => {
                result.map_err(|e| CliError::run(format!("server failed: {e}")))
            }
            _ = tokio::signal::ctrl_c() => {
                println!("shutting down");
                Ok(())
            }
        }
    })?;
    drop(runtime);
    if let Ok(service) = Arc::try_unwrap(service) {
        service.shutdown();
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    if args.batch_sizes.iter().any(|&b| b == 0) {
        return Err(CliError::data("batch sizes must be positive"));
    }
    let mut models = Vec::new();
    for path in &args.models {
        models.push(envelope::load(path).map_err(envelope_error)?.model);
    }
    let texts = read_texts(&args.data)?;
    if texts.is_empty() {
        return Err(CliError::data("no documents to bench"));
    }
    let refs: Vec<&TrainedModel> = models.iter().collect();
    let report = eval::bench(&refs, &texts, &args.batch_sizes);
    print!("{}", report.render_text());
    Ok(())
}
