use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use ontolink::candgen::SpanCandidates;
use ontolink::eval::{GoldMention, Prediction};
use ontolink::io;
use ontolink::linker::{LinkedSpan, Role, ScoringModel};
use ontolink::pipeline::{self, AbbreviationSource, EvalOptions};
use ontolink::preprocess::{read_pubtator, Document};
use ontolink::selector::InferenceMode;
use ontolink::synth::{synth_corpus, write_corpus, SynthConfig, SynthOntology};
use ontolink::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "ontolink",
    version,
    about = "Ontology-driven biomedical entity linking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the alias table, index and vectorizers from ontology files.
    BuildKb {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        /// Selected semantic types, one id per line.
        #[arg(long)]
        types: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Expand abbreviations, tokenize and write IOB2 plus documents.jsonl.
    Preprocess {
        #[arg(long)]
        corpus: PathBuf,
        /// Abbreviation definitions (doc_id, short, long); skips detection.
        #[arg(long)]
        abbrevs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one stage, or all of them, over a preprocessed corpus.
    Run {
        #[arg(long, value_enum, default_value_t = RunStage::All)]
        stage: RunStage,
        #[arg(long)]
        kb: PathBuf,
        /// Directory with documents.jsonl and, for later stages, the
        /// previous stage's output.
        #[arg(long = "in")]
        input: PathBuf,
        /// Linker and/or selector checkpoint; repeat for both.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the linker or the selector.
    Train {
        #[arg(long, value_enum)]
        stage: TrainStage,
        #[arg(long)]
        kb: PathBuf,
        /// Preprocessed training corpus directory.
        #[arg(long)]
        corpus: PathBuf,
        /// Preprocessed validation corpus directory.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Trained linker checkpoint, needed for the selector.
        #[arg(long)]
        linker: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Try every positive weight of the grid and keep the best.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a preprocessed gold corpus.
    Evaluate {
        /// Preprocessed gold corpus directory.
        #[arg(long)]
        gold: PathBuf,
        /// predictions.jsonl; stage recall is added when candidates.jsonl
        /// and linked.jsonl sit next to it.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        report: ReportFormat,
        #[arg(long, value_enum)]
        breakdowns: Option<Breakdowns>,
        /// Preprocessed training corpus, for the seen/unseen split.
        #[arg(long)]
        train_gold: Option<PathBuf>,
    },
    /// Write a default configuration file.
    Config {
        /// Small model and short schedules for CPU runs on toy data.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic ontology and corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        concepts: usize,
        #[arg(long, default_value_t = 50)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunStage {
    Candgen,
    Link,
    Select,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainStage {
    Link,
    Select,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Threshold,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Breakdowns {
    All,
}

/// Bad invocation: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn require_file(flag: &str, path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{flag}: no such file: {}", path.display())));
    }
    Ok(())
}

fn require_dir(flag: &str, path: &Path) -> anyhow::Result<()> {
    if !path.is_dir() {
        return Err(usage(format!(
            "{flag}: no such directory: {}",
            path.display()
        )));
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    match path {
        Some(p) => {
            require_file("--config", p)?;
            Ok(PipelineConfig::load(p)?)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn load_corpus(flag: &str, dir: &Path) -> anyhow::Result<Vec<Document>> {
    require_dir(flag, dir)?;
    require_file(flag, &dir.join(pipeline::DOCUMENTS_FILE))?;
    Ok(pipeline::load_documents(dir)?)
}

fn load_kb(
    dir: &Path,
    config: &PipelineConfig,
) -> anyhow::Result<ontolink::candgen::CandidateGenerator> {
    require_dir("--kb", dir)?;
    for f in [pipeline::ALIAS_FILE, pipeline::INDEX_FILE] {
        require_file("--kb", &dir.join(f))?;
    }
    Ok(pipeline::load_kb(dir, &config.candgen)?)
}

/// Pick linker and selector checkpoints out of `--model` by their stored role.
fn load_models(paths: &[PathBuf]) -> anyhow::Result<(Option<ScoringModel>, Option<ScoringModel>)> {
    let (mut linker, mut selector) = (None, None);
    for p in paths {
        require_file("--model", p)?;
        let m = ScoringModel::load(p).with_context(|| format!("loading {}", p.display()))?;
        let slot = match m.role() {
            Role::Linker => &mut linker,
            Role::Selector => &mut selector,
        };
        if slot.is_some() {
            return Err(usage(format!(
                "--model: more than one {} checkpoint given",
                m.role()
            )));
        }
        *slot = Some(m);
    }
    Ok((linker, selector))
}

fn build_kb(
    ontology: &Path,
    hierarchy: &Path,
    types: &Path,
    out: &Path,
    config: Option<&Path>,
) -> anyhow::Result<()> {
    require_file("--ontology", ontology)?;
    require_file("--hierarchy", hierarchy)?;
    require_file("--types", types)?;
    let config = load_config(config)?;
    let (table, report) = pipeline::build_kb(ontology, hierarchy, types, &config.candgen, out)?;
    log::info!(
        "{} aliases for {} entities ({} records read, {} discarded)",
        table.len(),
        table.entity_count(),
        report.input_records,
        report.discarded()
    );
    Ok(())
}

fn preprocess(corpus: &Path, abbrevs: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    require_file("--corpus", corpus)?;
    let source = match abbrevs {
        Some(p) => {
            require_file("--abbrevs", p)?;
            AbbreviationSource::load(p)?
        }
        None => AbbreviationSource::Detect,
    };
    let raw = read_pubtator(io::open(corpus)?)?;
    let (docs, summary) = pipeline::preprocess_corpus(&raw, &source);
    pipeline::write_preprocessed(out, &docs, &summary)?;
    log::info!(
        "{} documents, {} of {} mentions kept, {} abbreviation definitions in {} documents",
        summary.documents,
        summary.mentions,
        summary.raw_mentions,
        summary.definitions,
        summary.documents_with_definitions
    );
    Ok(())
}

/// Copy the corpus files a later stage or evaluation needs into `out`.
fn carry_corpus(input: &Path, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for f in [pipeline::DOCUMENTS_FILE, pipeline::PREPROCESS_REPORT_FILE] {
        let (from, to) = (input.join(f), out.join(f));
        if from.is_file() && from.canonicalize().ok() != to.canonicalize().ok() {
            std::fs::copy(&from, &to).with_context(|| format!("copying {}", from.display()))?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    stage: RunStage,
    kb: &Path,
    input: &Path,
    models: &[PathBuf],
    mode: Option<Mode>,
    threshold: Option<f64>,
    out: &Path,
    config: Option<&Path>,
) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let docs = load_corpus("--in", input)?;
    let (linker, selector) = load_models(models)?;
    let need_linker = matches!(stage, RunStage::Link | RunStage::All);
    let need_selector = matches!(stage, RunStage::Select | RunStage::All);
    if need_linker && linker.is_none() {
        return Err(usage("--model: this stage needs a linker checkpoint"));
    }
    if need_selector && selector.is_none() {
        return Err(usage("--model: this stage needs a selector checkpoint"));
    }
    let mode = match mode {
        Some(Mode::Threshold) => InferenceMode::Threshold,
        Some(Mode::Greedy) => InferenceMode::Greedy,
        None => config.selector.mode,
    };
    let threshold = threshold.unwrap_or(config.selector.threshold);
    let gen = load_kb(kb, &config)?;
    carry_corpus(input, out)?;

    let t = std::time::Instant::now();
    match stage {
        RunStage::Candgen => {
            let candidates = pipeline::generate_candidates(&gen, &docs);
            io::save_jsonl(&out.join(pipeline::CANDIDATES_FILE), &candidates)?;
        }
        RunStage::Link => {
            let path = input.join(pipeline::CANDIDATES_FILE);
            require_file("--in", &path)?;
            let candidates: Vec<SpanCandidates> = io::load_jsonl(&path)?;
            let linked = pipeline::link_candidates(
                linker.as_ref().unwrap(),
                gen.table(),
                &docs,
                candidates,
                config.linker.top_k,
            )?;
            io::save_jsonl(&out.join(pipeline::LINKED_FILE), &linked)?;
        }
        RunStage::Select => {
            let path = input.join(pipeline::LINKED_FILE);
            require_file("--in", &path)?;
            let linked: Vec<LinkedSpan> = io::load_jsonl(&path)?;
            let preds = pipeline::select_linked(
                selector.as_ref().unwrap(),
                gen.table(),
                &docs,
                &linked,
                mode,
                threshold,
            )?;
            pipeline::write_predictions(out, &docs, &preds)?;
        }
        RunStage::All => {
            let run = pipeline::run_all(
                &gen,
                linker.as_ref().unwrap(),
                selector.as_ref().unwrap(),
                &docs,
                config.linker.top_k,
                mode,
                threshold,
            )?;
            io::save_jsonl(&out.join(pipeline::CANDIDATES_FILE), &run.candidates)?;
            io::save_jsonl(&out.join(pipeline::LINKED_FILE), &run.linked)?;
            pipeline::write_predictions(out, &docs, &run.predictions)?;
        }
    }
    log::info!("done in {:.3}s", t.elapsed().as_secs_f64());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    stage: TrainStage,
    kb: &Path,
    corpus: &Path,
    validation: Option<&Path>,
    linker: Option<&Path>,
    config: Option<&Path>,
    sweep: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let docs = load_corpus("--corpus", corpus)?;
    let val = validation
        .map(|v| load_corpus("--validation", v))
        .transpose()?;
    let linker_model = match (stage, linker) {
        (TrainStage::Select, None) => {
            return Err(usage("--linker: required to train the selector"))
        }
        (TrainStage::Select, Some(p)) => {
            require_file("--linker", p)?;
            let m = ScoringModel::load(p)?;
            if m.role() != Role::Linker {
                return Err(usage(format!(
                    "--linker: {} holds a {} checkpoint",
                    p.display(),
                    m.role()
                )));
            }
            Some(m)
        }
        (TrainStage::Link, _) => None,
    };
    let gen = load_kb(kb, &config)?;
    let (model, summary) = match stage {
        TrainStage::Link => {
            let (m, s) = pipeline::train_linker_stage(&gen, &docs, val.as_deref(), &config)?;
            (m, serde_json::to_value(s)?)
        }
        TrainStage::Select => {
            let (m, s) = pipeline::train_selector_stage(
                linker_model.as_ref().unwrap(),
                &gen,
                &docs,
                val.as_deref(),
                &config,
                sweep,
            )?;
            (m, serde_json::to_value(s)?)
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    model.save(out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn evaluate(
    gold: &Path,
    pred: &Path,
    format: ReportFormat,
    breakdowns: Option<Breakdowns>,
    train_gold: Option<&Path>,
) -> anyhow::Result<()> {
    let docs = load_corpus("--gold", gold)?;
    require_file("--pred", pred)?;
    let predictions: Vec<Prediction> = io::load_jsonl(pred)?;
    let seen = train_gold
        .map(|d| load_corpus("--train-gold", d))
        .transpose()?
        .map(|d| pipeline::seen_entities(&d));
    let options = EvalOptions {
        dropped: pipeline::load_dropped(gold)?,
        seen,
        breakdowns: breakdowns.is_some(),
    };
    let mut report = pipeline::evaluate_predictions(&docs, &predictions, &options);
    let dir = pred.parent().unwrap_or(Path::new("."));
    let (cands, linked) = (
        dir.join(pipeline::CANDIDATES_FILE),
        dir.join(pipeline::LINKED_FILE),
    );
    if cands.is_file() && linked.is_file() {
        let candidates: Vec<SpanCandidates> = io::load_jsonl(&cands)?;
        let linked: Vec<LinkedSpan> = io::load_jsonl(&linked)?;
        report.stages = pipeline::stage_recall_rows(
            &GoldMention::from_documents(&docs),
            &candidates,
            &linked,
            &predictions,
        );
    }
    match format {
        ReportFormat::Json => println!("{}", report.to_json()),
        ReportFormat::Table => print!("{}", report.to_table()),
    }
    Ok(())
}

fn write_config(desk: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let config = if desk {
        PipelineConfig::desk()
    } else {
        PipelineConfig::default()
    };
    match out {
        Some(p) => config.save(p)?,
        None => print!("{}", config.to_toml()),
    }
    Ok(())
}

fn synth(out: &Path, concepts: usize, docs: usize, seed: u64) -> anyhow::Result<()> {
    if concepts == 0 || docs == 0 {
        return Err(usage("--concepts and --docs must be positive"));
    }
    let config = SynthConfig {
        concepts,
        docs,
        seed,
        ..SynthConfig::default()
    };
    let ontology = SynthOntology::generate(&config);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    ontology.write_files(out)?;
    write_corpus(
        &out.join("corpus.pubtator"),
        &synth_corpus(&ontology, &config),
    )?;
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildKb {
            ontology,
            hierarchy,
            types,
            out,
            config,
        } => build_kb(&ontology, &hierarchy, &types, &out, config.as_deref()),
        Command::Preprocess {
            corpus,
            abbrevs,
            out,
        } => preprocess(&corpus, abbrevs.as_deref(), &out),
        Command::Run {
            stage,
            kb,
            input,
            models,
            mode,
            threshold,
            out,
            config,
        } => run(
            stage,
            &kb,
            &input,
            &models,
            mode,
            threshold,
            &out,
            config.as_deref(),
        ),
        Command::Train {
            stage,
            kb,
            corpus,
            validation,
            linker,
            config,
            sweep,
            out,
        } => train(
            stage,
            &kb,
            &corpus,
            validation.as_deref(),
            linker.as_deref(),
            config.as_deref(),
            sweep,
            &out,
        ),
        Command::Evaluate {
            gold,
            pred,
            report,
            breakdowns,
            train_gold,
        } => evaluate(&gold, &pred, report, breakdowns, train_gold.as_deref()),
        Command::Config { desk, out } => write_config(desk, out.as_deref()),
        Command::Synth {
            out,
            concepts,
            docs,
            seed,
        } => synth(&out, concepts, docs, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ONTOLINK_LOG", "info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
