//! `wfrdoc` command-line tool.
//!
//! Exit codes: 0 success, 1 internal or numerical failure, 2 input or usage
//! error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wfrdoc::corpus::{load_corpus, load_embeddings, load_stopwords, to_nbow, CorpusFormat, EmbeddingTable, PreprocessOptions, ProcessedDocument};
use wfrdoc::eval::{best_f1, knn_error_rate_index, length_varying_demo, load_pairs, pr_curve, prune_table, score_pairs, write_pr_csv, DemoReport, KnnReport, PRPoint};
use wfrdoc::retrieval::{cross_validate, default_eta_grid, default_k_grid, topk_by_metric, CrossValidation, DocumentIndex, Metric, QueryResult};
use wfrdoc::solver::{solve_wfr, SolverSchedule, StageRecord};
use wfrdoc::synthetic::{demo_embeddings, demo_options, DEMO_ETA, DEMO_SENTENCES};

#[derive(Parser, Debug)]
#[command(name = "wfrdoc", version, about = "Wasserstein-Fisher-Rao document distance tools")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// WFR length scale [default: 1.0; 0.5 for `demo --synthetic`]
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Override the solver schedule, e.g. "0.1353:32,0.0498:64"
    #[arg(long, global = true)]
    schedule: Option<String>,

    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, env = "WFRDOC_THREADS")]
    threads: Option<usize>,

    /// Stop-word file, one word per line
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,

    /// Keep token case instead of lowercasing
    #[arg(long, global = true)]
    keep_case: bool,

    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json, env = "WFRDOC_FORMAT")]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricName {
    Wfr,
    Wmd,
    BalancedWfrCost,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// WFR distance between two documents (text or file path)
    Dist {
        #[arg(long)]
        embeddings: PathBuf,
        doc_a: String,
        doc_b: String,
    },
    /// k nearest corpus documents to a query
    Topk {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_corpus_format)]
        corpus_format: Option<CorpusFormat>,
        /// Query text or file path
        #[arg(long)]
        query: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        /// Solve every distance instead of pruning
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, value_enum, default_value_t = MetricName::Wfr)]
        metric: MetricName,
        /// Binary index cache; built and written when absent
        #[arg(long)]
        index_cache: Option<PathBuf>,
    },
    /// KNN classification error on a labeled test corpus
    Knn {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_parser = parse_corpus_format)]
        corpus_format: Option<CorpusFormat>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..), required_unless_present = "cv")]
        k: Option<u64>,
        /// Choose k and eta by cross-validation on the training corpus
        #[arg(long, conflicts_with = "k")]
        cv: bool,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        index_cache: Option<PathBuf>,
    },
    /// Precision-recall curve over scored concept/project pairs
    Prcurve {
        #[arg(long)]
        embeddings: PathBuf,
        /// JSONL with concept_text, project_text, label
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricName::Wfr)]
        metric: MetricName,
        /// Write the curve here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Length-varying comparison of WMD and WFR on three sentences
    Demo {
        #[arg(long, required_unless_present = "synthetic")]
        embeddings: Option<PathBuf>,
        /// Use the built-in geometry and require the ordering flip
        #[arg(long, conflicts_with = "embeddings")]
        synthetic: bool,
        /// Sentences A, B, C
        #[arg(long, num_args = 3, value_names = ["A", "B", "C"])]
        sentences: Option<Vec<String>>,
        /// Print the report as JSON instead of a table
        #[arg(long)]
        json: bool,
    },
}

fn parse_corpus_format(s: &str) -> Result<CorpusFormat, String> {
    s.parse().map_err(|e: wfrdoc::Error| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<wfrdoc::Error> for Failure {
    fn from(e: wfrdoc::Error) -> Self {
        if e.is_input_error() {
            Failure::input(e.to_string())
        } else {
            Failure::internal(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::internal(format!("output failed: {e}"))
    }
}

type CliResult<T = ()> = Result<T, Failure>;

struct RunConfig {
    eta: Option<f64>,
    schedule: SolverSchedule,
    options: PreprocessOptions,
    seed: u64,
    format: Format,
}

impl RunConfig {
    fn from_args(args: &ConfigArgs) -> CliResult<Self> {
        if let Some(eta) = args.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Failure::input(format!("--eta must be positive, got {eta}")));
            }
        }
        let schedule = match &args.schedule {
            Some(s) => s.parse()?,
            None => SolverSchedule::default(),
        };
        if args.threads == Some(0) {
            return Err(Failure::input("--threads must be at least 1"));
        }
        let mut options = PreprocessOptions::new(!args.keep_case);
        if let Some(path) = &args.stopwords {
            options = options.with_stopwords(load_stopwords(path)?);
        }
        Ok(RunConfig {
            eta: args.eta,
            schedule,
            options,
            seed: args.seed,
            format: args.format,
        })
    }

    fn eta(&self) -> f64 {
        self.eta.unwrap_or(1.0)
    }

    fn metric(&self, name: MetricName) -> Metric {
        match name {
            MetricName::Wfr => Metric::Wfr { eta: self.eta() },
            MetricName::Wmd => Metric::Wmd,
            MetricName::BalancedWfrCost => Metric::BalancedWfrCost { eta: self.eta() },
        }
    }
}

/// An existing path is read as a file; anything else is the text itself.
fn text_or_file(arg: &str) -> CliResult<(String, String)> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {arg}: {e}")))?;
        Ok((arg.to_owned(), text))
    } else {
        Ok(("<text>".to_owned(), arg.to_owned()))
    }
}

fn corpus_format(path: &Path, explicit: Option<CorpusFormat>) -> CorpusFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => CorpusFormat::Tsv,
        _ => CorpusFormat::Jsonl,
    })
}

fn emit_json<T: Serialize>(value: &T) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::internal(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn csv_writer() -> csv::Writer<io::StdoutLock<'static>> {
    csv::Writer::from_writer(io::stdout().lock())
}

fn csv_fail(e: csv::Error) -> Failure {
    Failure::internal(format!("csv output failed: {e}"))
}

fn nbow_of(label: &str, text: &str, table: &EmbeddingTable, cfg: &RunConfig) -> CliResult<wfrdoc::corpus::Nbow> {
    let doc = ProcessedDocument::from_text(label, None, text, &cfg.options);
    to_nbow(&doc, table).map_err(|e| match e {
        wfrdoc::Error::DegenerateDocument { .. } => {
            Failure::input(format!("{label}: no in-vocabulary tokens after preprocessing"))
        }
        other => other.into(),
    })
}

#[derive(Serialize)]
struct DistRecord {
    distance: f64,
    primal: f64,
    dual: f64,
    gap: f64,
    stage_trace: Vec<StageRecord>,
}

#[derive(Serialize)]
struct DistRow {
    distance: f64,
    primal: f64,
    dual: f64,
    gap: f64,
}

fn cmd_dist(cfg: &RunConfig, embeddings: &Path, a: &str, b: &str) -> CliResult {
    let table = load_embeddings(embeddings, None)?;
    let (name_a, text_a) = text_or_file(a)?;
    let (name_b, text_b) = text_or_file(b)?;
    let na = nbow_of(&name_a, &text_a, &table, cfg)?;
    let nb = nbow_of(&name_b, &text_b, &table, cfg)?;
    let res = solve_wfr(&na.measure, &nb.measure, cfg.eta(), &cfg.schedule)?;
    match cfg.format {
        Format::Json => emit_json(&DistRecord {
            distance: res.distance,
            primal: res.primal,
            dual: res.dual,
            gap: res.gap,
            stage_trace: res.stage_trace,
        }),
        Format::Csv => {
            let mut w = csv_writer();
            w.serialize(DistRow {
                distance: res.distance,
                primal: res.primal,
                dual: res.dual,
                gap: res.gap,
            })
            .map_err(csv_fail)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn build_index(
    cfg: &RunConfig,
    table: &EmbeddingTable,
    corpus_path: &Path,
    format: Option<CorpusFormat>,
    cache: Option<&Path>,
) -> CliResult<DocumentIndex> {
    if let Some(cache) = cache.filter(|c| c.exists()) {
        log::info!("loading index cache {}", cache.display());
        let index = DocumentIndex::load(cache)?;
        if index.dimension() != table.dimension() {
            return Err(Failure::input(format!(
                "index cache {} has dimension {}, embeddings have {}",
                cache.display(),
                index.dimension(),
                table.dimension()
            )));
        }
        return Ok(index);
    }
    let corpus = load_corpus(corpus_path, corpus_format(corpus_path, format), &cfg.options)?;
    let (index, skipped) = DocumentIndex::from_corpus(&corpus, table)?;
    if !skipped.is_empty() {
        log::warn!("{} corpus documents had no in-vocabulary tokens and were skipped", skipped.len());
    }
    if index.is_empty() {
        return Err(Failure::input(format!("{}: no usable documents", corpus_path.display())));
    }
    if let Some(cache) = cache {
        index.save(cache)?;
        log::info!("wrote index cache {}", cache.display());
    }
    Ok(index)
}

#[derive(Serialize)]
struct TopkRecord<'a> {
    metric: &'static str,
    #[serde(flatten)]
    result: &'a QueryResult,
}

#[derive(Serialize)]
struct HitRow<'a> {
    rank: usize,
    id: &'a str,
    distance: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_topk(
    cfg: &RunConfig,
    embeddings: &Path,
    corpus: &Path,
    format: Option<CorpusFormat>,
    query: &str,
    k: usize,
    exhaustive: bool,
    metric: MetricName,
    cache: Option<&Path>,
) -> CliResult {
    let table = load_embeddings(embeddings, None)?;
    let index = build_index(cfg, &table, corpus, format, cache)?;
    if k > index.len() {
        log::warn!("k = {k} exceeds the {} indexed documents; returning all of them", index.len());
    }
    let (name, text) = text_or_file(query)?;
    let q = nbow_of(&name, &text, &table, cfg)?;
    let metric = cfg.metric(metric);
    let res = topk_by_metric(&q.measure, &index, k, metric, &cfg.schedule, exhaustive)?;
    eprint!("{}", prune_table(&res.prune_stats));
    match cfg.format {
        Format::Json => emit_json(&TopkRecord {
            metric: metric.name(),
            result: &res,
        }),
        Format::Csv => {
            let mut w = csv_writer();
            for (r, h) in res.hits.iter().enumerate() {
                w.serialize(HitRow {
                    rank: r + 1,
                    id: &h.id,
                    distance: h.distance,
                })
                .map_err(csv_fail)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct KnnRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_validation: Option<CrossValidation>,
    #[serde(flatten)]
    report: KnnReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_knn(
    cfg: &RunConfig,
    embeddings: &Path,
    train_path: &Path,
    test_path: &Path,
    format: Option<CorpusFormat>,
    k: Option<usize>,
    cv: bool,
    folds: usize,
    cache: Option<&Path>,
) -> CliResult {
    let table = load_embeddings(embeddings, None)?;
    let train = load_corpus(train_path, corpus_format(train_path, format), &cfg.options)?;
    let test = load_corpus(test_path, corpus_format(test_path, format), &cfg.options)?;
    if !train.is_labeled() {
        return Err(Failure::input(format!("{}: every training document needs a label", train_path.display())));
    }
    if train.label_set().is_disjoint(test.label_set()) {
        log::warn!("training and test corpora share no labels");
    }
    let (k, eta, cross_validation) = if cv {
        let etas = match cfg.eta {
            Some(e) => vec![e],
            None => default_eta_grid(),
        };
        let res = cross_validate(&train, &table, &default_k_grid(), &etas, folds, cfg.seed, &cfg.schedule)?;
        (res.best_k, res.best_eta, Some(res))
    } else {
        (k.expect("clap requires --k without --cv"), cfg.eta(), None)
    };
    let (index, skipped) = match cache.filter(|c| c.exists()) {
        Some(c) => (build_index(cfg, &table, train_path, format, Some(c))?, Vec::new()),
        None => {
            let built = DocumentIndex::from_corpus(&train, &table)?;
            if let Some(c) = cache {
                built.0.save(c)?;
            }
            built
        }
    };
    if !skipped.is_empty() {
        log::warn!("{} training documents had no in-vocabulary tokens and were skipped", skipped.len());
    }
    if index.is_empty() {
        return Err(Failure::input(format!("{}: no usable training documents", train_path.display())));
    }
    let report = knn_error_rate_index(&index, &test, &table, k, eta, &cfg.schedule)?;
    eprint!("{}", prune_table(&report.prune_stats));
    match cfg.format {
        Format::Json => emit_json(&KnnRecord {
            cross_validation,
            report,
        }),
        Format::Csv => {
            let mut w = csv_writer();
            let mut header: Vec<String> = ["k", "eta", "error_rate", "misclassified", "total", "full_solves"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let stages = report.prune_stats.survivors_after_stage.len();
            header.extend((1..=stages).map(|m| format!("survivors_stage{m}")));
            w.write_record(&header).map_err(csv_fail)?;
            let mut row = vec![
                report.k.to_string(),
                report.eta.to_string(),
                report.error_rate.to_string(),
                report.misclassified.to_string(),
                report.total.to_string(),
                report.prune_stats.full_solves.to_string(),
            ];
            row.extend(report.prune_stats.survivors_after_stage.iter().map(|f| f.to_string()));
            w.write_record(&row).map_err(csv_fail)?;
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CurveRecord<'a> {
    metric: &'static str,
    best_f1: Option<PRPoint>,
    points: &'a [PRPoint],
}

fn cmd_prcurve(cfg: &RunConfig, embeddings: &Path, pairs: &Path, metric: MetricName, output: Option<&Path>) -> CliResult {
    let table = load_embeddings(embeddings, None)?;
    let pairs = load_pairs(pairs)?;
    let metric = cfg.metric(metric);
    let scored = score_pairs(&pairs, &table, &cfg.options, metric, &cfg.schedule)?;
    let curve = pr_curve(&scored)?;
    let best = best_f1(&curve);
    let mut sink: Box<dyn Write> = match output {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::input(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    match cfg.format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut sink,
                &CurveRecord {
                    metric: metric.name(),
                    best_f1: best,
                    points: &curve,
                },
            )
            .map_err(|e| Failure::internal(e.to_string()))?;
            writeln!(sink)?;
        }
        Format::Csv => write_pr_csv(&mut sink, &curve)?,
    }
    sink.flush()?;
    if let Some(b) = best {
        eprintln!(
            "best F1 {:.4} at threshold {:.6} (precision {:.4}, recall {:.4})",
            b.f1(),
            b.threshold,
            b.precision,
            b.recall
        );
    }
    Ok(())
}

fn cmd_demo(cfg: &RunConfig, embeddings: Option<&Path>, synthetic: bool, sentences: Option<&[String]>, json: bool) -> CliResult {
    let sentences: [&str; 3] = match sentences {
        Some(s) => [&s[0], &s[1], &s[2]],
        None => DEMO_SENTENCES,
    };
    let (table, options, eta) = if synthetic {
        (demo_embeddings(), demo_options(), cfg.eta.unwrap_or(DEMO_ETA))
    } else {
        let path = embeddings.ok_or_else(|| Failure::input("demo needs --embeddings or --synthetic"))?;
        let mut options = cfg.options.clone();
        if cfg.options.stopwords.is_empty() {
            options = demo_options();
        }
        (load_embeddings(path, None)?, options, cfg.eta())
    };
    let report: DemoReport = length_varying_demo(&table, sentences, &options, eta, &cfg.schedule)?;
    if !synthetic && !report.oov.is_empty() {
        return Err(Failure::input(format!(
            "demo words missing from the embeddings: {}",
            report.oov.join(", ")
        )));
    }
    if json {
        emit_json(&report)?;
    } else {
        println!("{}", report.render());
    }
    if synthetic && !(report.wfr_flip() && report.wmd_order()) {
        return Err(Failure::internal("synthetic geometry did not reproduce the ordering flip"));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let cfg = RunConfig::from_args(&cli.config)?;
    if let Some(n) = cli.config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::internal(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Dist { embeddings, doc_a, doc_b } => cmd_dist(&cfg, embeddings, doc_a, doc_b),
        Command::Topk {
            embeddings,
            corpus,
            corpus_format,
            query,
            k,
            exhaustive,
            metric,
            index_cache,
        } => cmd_topk(
            &cfg,
            embeddings,
            corpus,
            *corpus_format,
            query,
            *k as usize,
            *exhaustive,
            *metric,
            index_cache.as_deref(),
        ),
        Command::Knn {
            embeddings,
            train,
            test,
            corpus_format,
            k,
            cv,
            folds,
            index_cache,
        } => cmd_knn(
            &cfg,
            embeddings,
            train,
            test,
            *corpus_format,
            k.map(|k| k as usize),
            *cv,
            *folds,
            index_cache.as_deref(),
        ),
        Command::Prcurve {
            embeddings,
            pairs,
            metric,
            output,
        } => cmd_prcurve(&cfg, embeddings, pairs, *metric, output.as_deref()),
        Command::Demo {
            embeddings,
            synthetic,
            sentences,
            json,
        } => cmd_demo(&cfg, embeddings.as_deref(), *synthetic, sentences.as_deref(), *json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
