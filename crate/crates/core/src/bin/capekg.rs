use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use capekg_core::config::{Config, Overrides};
use capekg_core::edit::{load_edits, EditInput};
use capekg_core::eval::{
    build_eval_base, case_decompositions, default_detector, ingest_file, run_eval, AblationFlags, BatchSetting,
    EvalOptions,
};
use capekg_core::graph::{BaseGraph, KnowledgeStore, RawTriple};
use capekg_core::oracle::{DemoRecord, HashEmbedder, HttpLlm, LexiconDetector, LlmOracle, MockFixtures, Oracles};
use capekg_core::reasoner::{run_chain_with, Decomposer, HopMode};
use capekg_core::session::{detector_with, lexicon_for, mock_session, Session};
use capekg_core::symbol::Interner;
use capekg_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "capekg", version, about = "Case-aware editable knowledge graph")]
struct Cli {
    /// Emit machine-readable JSON on stdout (and errors as JSON on stderr).
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Seal a facts JSONL file into a canonical base artifact.
    Build {
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an edits file and report each case's impact surface.
    Edit {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        edits: PathBuf,
        /// Write the resulting overlays as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Answer one question under one case.
    Query {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        edits: Option<PathBuf>,
        #[arg(long)]
        case: String,
        #[arg(long)]
        question: String,
        /// Answer hops with the language model only.
        #[arg(long)]
        no_retrieval: bool,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Run a batch evaluation over an MQuAKE-format dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "1")]
        batch: BatchSetting,
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
        /// Extra base facts (JSONL) merged into the evaluation base.
        #[arg(long)]
        facts: Option<PathBuf>,
        /// Directory for per-case traces and the oracle transcript.
        #[arg(long)]
        traces_dir: Option<PathBuf>,
        /// Worker threads; defaults to available cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Shuffle case order with this seed before batching.
        #[arg(long)]
        shuffle_seed: Option<u64>,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Summarize a base artifact and, optionally, a case overlay.
    Inspect {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        edits: Option<PathBuf>,
        #[arg(long)]
        case: Option<String>,
    },
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Mixed JSONL fixtures for the mock LLM, decomposer and detector.
    #[arg(long)]
    mock_fixtures: Option<PathBuf>,
    /// Use the HTTP chat-completion endpoint from CAPEKG_LLM_* variables.
    #[arg(long)]
    live: bool,
    /// Decomposition demos (JSONL of {question, steps}) for few-shot prompting.
    #[arg(long)]
    demos: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuningArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    demos_k: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    Construction,
    Retrieval,
    Update,
}

impl TuningArgs {
    fn resolve(&self) -> Result<Config> {
        let file = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        file.with_overrides(Overrides {
            tau: self.tau,
            lambda: self.lambda,
            suppression_alpha: self.alpha,
            demos_k: self.demos_k,
        })
    }
}

const BUILTIN_DEMOS: &[(&str, &[&str])] = &[
    (
        "What is the origin country of the genre of Black Pink?",
        &["What genre is Black Pink?", "What is the origin country of {prev}?"],
    ),
    (
        "Who is the head of state of the country where the Eiffel Tower is located?",
        &["In which country is the Eiffel Tower located?", "Who is the head of state of {prev}?"],
    ),
    (
        "What is the capital of the country whose official language is Dutch?",
        &["Which country has Dutch as its official language?", "What is the capital of {prev}?"],
    ),
    (
        "Which continent is the birthplace of the founder of Microsoft in?",
        &[
            "Who founded Microsoft?",
            "Where was {prev} born?",
            "Which continent is {prev} located in?",
        ],
    ),
];

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! outln {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout().lock(), $($arg)*);
    }};
}

fn load_fixtures(args: &OracleArgs) -> Result<MockFixtures> {
    match &args.mock_fixtures {
        Some(p) => MockFixtures::load(p),
        None => Ok(MockFixtures::default()),
    }
}

fn load_demos(path: &Path) -> Result<Vec<DemoRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Mock or live oracles plus the matching decomposer. Scripted
/// decompositions are only used with mocks.
fn session(
    args: &OracleArgs,
    cfg: &Config,
    lexicon: LexiconDetector,
    scripted: Vec<DemoRecord>,
) -> Result<Session> {
    let fixtures = load_fixtures(args)?;
    if args.live {
        let llm = HttpLlm::from_env().ok_or_else(|| {
            Error::Config("--live needs CAPEKG_LLM_BASE_URL and CAPEKG_LLM_MODEL".to_string())
        })?;
        let demos = match &args.demos {
            Some(p) => load_demos(p)?,
            None if !fixtures.decompositions.is_empty() => fixtures.decompositions.clone(),
            None => BUILTIN_DEMOS
                .iter()
                .map(|(q, steps)| DemoRecord {
                    question: q.to_string(),
                    steps: steps.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
        };
        let llm: Arc<dyn LlmOracle> = Arc::new(llm);
        return Ok(Session {
            oracles: Oracles::new(detector_with(&fixtures, lexicon), Arc::new(HashEmbedder::default()), llm),
            decomposer: Decomposer::FewShot {
                demos,
                k: cfg.reasoner.demos_k,
            },
        });
    }
    let mut scripts = scripted;
    if let Some(p) = &args.demos {
        scripts.extend(load_demos(p)?);
    }
    Ok(mock_session(&fixtures, lexicon, scripts))
}

fn load_base(path: &Path) -> Result<BaseGraph> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    BaseGraph::from_jsonl(Arc::new(Interner::new()), BufReader::new(file))
}

fn apply_all(store: &mut KnowledgeStore, edits: &[EditInput], oracles: &Oracles, floor: f64) -> Result<()> {
    for e in edits {
        store.submit(e, Some(oracles), floor)?;
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    outln!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn cmd_build(json_out: bool, facts: &Path, out: &Path) -> Result<()> {
    let file = fs::File::open(facts).map_err(|e| io_err(facts, e))?;
    let base = BaseGraph::from_jsonl(Arc::new(Interner::new()), BufReader::new(file))?;
    fs::write(out, base.to_jsonl()).map_err(|e| io_err(out, e))?;
    let summary = base.summary();
    if json_out {
        print_json(&summary);
    } else {
        outln!(
            "triples: {} entities: {} relations: {} duplicates_removed: {}",
            summary.triples, summary.entities, summary.relations, summary.duplicates_removed
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct CaseSummary {
    case_id: String,
    edits: usize,
    subjects: Vec<String>,
    relations: Vec<String>,
    delta: Vec<RawTriple>,
}

fn case_summary(store: &KnowledgeStore, case_id: &str) -> Result<CaseSummary> {
    let overlay = store.overlay(case_id)?;
    let sym = store.symbols();
    let surface = overlay.surface();
    Ok(CaseSummary {
        case_id: case_id.to_string(),
        edits: overlay.edits().len(),
        subjects: surface.subjects.iter().map(|&s| sym.text(s).to_string()).collect(),
        relations: surface.relations.iter().map(|&r| sym.text(r).to_string()).collect(),
        delta: overlay
            .delta()
            .map(|((s, r), o)| RawTriple::new(&*sym.text(s), &*sym.text(r), &*sym.text(o)))
            .collect(),
    })
}

fn cmd_edit(
    json_out: bool,
    base: &Path,
    edits: &Path,
    out: Option<&Path>,
    oracle: &OracleArgs,
    tuning: &TuningArgs,
) -> Result<()> {
    let cfg = tuning.resolve()?;
    let base = load_base(base)?;
    let inputs = load_edits(edits)?;
    let sess = session(oracle, &cfg, lexicon_for(&base, &inputs), Vec::new())?;
    let mut store = KnowledgeStore::new(Arc::new(base));
    apply_all(&mut store, &inputs, &sess.oracles, cfg.retrieval.tau)?;
    if let Some(out) = out {
        fs::write(out, store.overlays_to_jsonl()).map_err(|e| io_err(out, e))?;
    }
    let ids: Vec<String> = store.case_ids().map(str::to_string).collect();
    let summaries = ids.iter().map(|c| case_summary(&store, c)).collect::<Result<Vec<_>>>()?;
    if json_out {
        print_json(&summaries);
    } else {
        for s in &summaries {
            outln!(
                "case {}: {} edit(s), subjects [{}], relations [{}]",
                s.case_id,
                s.edits,
                s.subjects.join(", "),
                s.relations.join(", ")
            );
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_query(
    json_out: bool,
    base: &Path,
    edits: Option<&Path>,
    case: &str,
    question: &str,
    no_retrieval: bool,
    oracle: &OracleArgs,
    tuning: &TuningArgs,
) -> Result<()> {
    let cfg = tuning.resolve()?;
    let base = load_base(base)?;
    let inputs = match edits {
        Some(p) => load_edits(p)?,
        None => Vec::new(),
    };
    let sess = session(oracle, &cfg, lexicon_for(&base, &inputs), Vec::new())?;
    let mut store = KnowledgeStore::new(Arc::new(base));
    apply_all(&mut store, &inputs, &sess.oracles, cfg.retrieval.tau)?;
    if edits.is_none() {
        store.create_overlay(case)?;
    }
    let view = store.view(case)?;
    let surface = store.impact_surface(case)?;
    let decomp = sess.decomposer.decompose(question, &sess.oracles)?;
    let mode = if no_retrieval { HopMode::Direct } else { HopMode::Retrieval };
    let answer = run_chain_with(&decomp, &view, &surface, &sess.oracles, &cfg.retrieval, mode)?;
    let record = answer.to_record(view.symbols());
    let out = json!({
        "case_id": case,
        "question": question,
        "final_answer": record.final_answer,
        "hops": record.hops,
    });
    if json_out {
        print_json(&out);
    } else {
        outln!("answer: {}", record.final_answer.as_deref().unwrap_or("<none>"));
        print_json(&out["hops"]);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    dataset: &Path,
    batch: BatchSetting,
    ablate: &[Ablation],
    facts: Option<&Path>,
    traces_dir: Option<&Path>,
    jobs: usize,
    shuffle_seed: Option<u64>,
    oracle: &OracleArgs,
    tuning: &TuningArgs,
) -> Result<bool> {
    let cfg = tuning.resolve()?;
    let cases = ingest_file(dataset)?;
    let symbols = Arc::new(Interner::new());
    let extra = match facts {
        Some(p) => load_base(p)?.raw_triples(),
        None => Vec::new(),
    };
    let base = Arc::new(build_eval_base(&cases, &extra, symbols)?);
    let scripted = if oracle.live { Vec::new() } else { case_decompositions(&cases) };
    let sess = session(oracle, &cfg, default_detector(&cases, &base), scripted)?;
    let flags = AblationFlags {
        disable_construction: ablate.contains(&Ablation::Construction),
        disable_retrieval: ablate.contains(&Ablation::Retrieval),
        disable_update: ablate.contains(&Ablation::Update),
    };
    let opts = EvalOptions {
        setting: batch,
        flags,
        retrieval: cfg.retrieval,
        jobs,
        shuffle_seed,
    };
    let run = run_eval(&cases, base, &sess.oracles, &sess.decomposer, &opts)?;
    if let Some(dir) = traces_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let traces = dir.join("traces.jsonl");
        fs::write(&traces, run.traces_jsonl()).map_err(|e| io_err(&traces, e))?;
        let transcript = dir.join("transcript.jsonl");
        fs::write(&transcript, sess.oracles.transcript().to_jsonl()).map_err(|e| io_err(&transcript, e))?;
    }
    print_json(&run.report);
    Ok(run.report.complete)
}

fn cmd_inspect(json_out: bool, base: &Path, edits: Option<&Path>, case: Option<&str>) -> Result<()> {
    let base = load_base(base)?;
    let summary = base.summary();
    let fingerprint = base.fingerprint();
    let inputs = match edits {
        Some(p) => load_edits(p)?,
        None => Vec::new(),
    };
    let mut store = KnowledgeStore::new(Arc::new(base));
    for e in &inputs {
        // text statements need a detector; inspect only replays structured edits
        if matches!(e, EditInput::Structured { .. }) {
            store.submit(e, None, 0.0)?;
        }
    }
    let overlay = match case {
        Some(c) => Some(case_summary(&store, c)?),
        None => None,
    };
    let cases: Vec<&str> = store.case_ids().collect();
    let out = json!({
        "base": summary,
        "fingerprint": fingerprint,
        "cases": cases,
        "overlay": overlay,
    });
    if json_out {
        print_json(&out);
    } else {
        outln!(
            "base: {} triples, {} entities, {} relations ({})",
            summary.triples, summary.entities, summary.relations, fingerprint
        );
        outln!("cases: {}", cases.join(", "));
        if let Some(o) = &out["overlay"].as_object() {
            outln!("overlay: {}", serde_json::to_string(o).expect("serializes"));
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let j = cli.json;
    match &cli.command {
        Command::Build { facts, out } => cmd_build(j, facts, out).map(|_| true),
        Command::Edit {
            base,
            edits,
            out,
            oracle,
            tuning,
        } => cmd_edit(j, base, edits, out.as_deref(), oracle, tuning).map(|_| true),
        Command::Query {
            base,
            edits,
            case,
            question,
            no_retrieval,
            oracle,
            tuning,
        } => cmd_query(j, base, edits.as_deref(), case, question, *no_retrieval, oracle, tuning).map(|_| true),
        Command::Eval {
            dataset,
            batch,
            ablate,
            facts,
            traces_dir,
            jobs,
            shuffle_seed,
            oracle,
            tuning,
        } => cmd_eval(
            dataset,
            *batch,
            ablate,
            facts.as_deref(),
            traces_dir.as_deref(),
            *jobs,
            *shuffle_seed,
            oracle,
            tuning,
        ),
        Command::Inspect { base, edits, case } => cmd_inspect(j, base, edits.as_deref(), case.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        // report printed but some cases hit transport failures
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let code = if e.is_user_error() { 1 } else { 2 };
            if cli.json {
                let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
                eprintln!("{body}");
            } else {
                eprintln!("error [{}]: {e}", e.kind());
            }
            let _ = io::stderr().flush();
            ExitCode::from(code)
        }
    }
}
