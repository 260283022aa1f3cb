//! Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage
//! error.

mod config;
mod run_dir;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::agents::{MemorizingAgent, OracleAgent, PassiveAgent, QAgent, QConfig, RandomAgent};
use crate::analytics::{
    export_curves, first_attempt_curves, render_svg, weighted_aggregate, HintPolicy, LearningCurve,
};
use crate::datashop::{parse_jsonl, parse_log, transaction_to_json, write_log, TransactionLog};
use crate::generators::{generate, FractionKind, ProblemSpec, FRACTION_DOMAIN, MULTICOLUMN_DOMAIN, SCAFFOLD_DOMAIN};
use crate::graph::{load_graph, BehaviorGraph, GraphCursor, TutorRegistry};
use crate::llm::{
    ContextBuffer, Endpoint, HttpEndpoint, LlmAgent, LlmClient, LlmDemoer, LlmGrader, MockEndpoint, OracleEndpoint,
    RecordingEndpoint, ReplayEndpoint,
};
use crate::model::{Outcome, Transaction};
use crate::profile::{
    build_profile_from_log, build_profile_parallel, demo_eval, grade_profile, inject_incorrect, parse_profile,
    sub_seed, write_profile, CheckGrader, OracleDemoer, Perturbation, RandomGrader, TutorEvalMetrics, Verdict,
};
use crate::rl::build_encoding;
use crate::student::{select_next, MasteryState, SelectionPolicy};
use crate::trainer::{Agent, Trainer, TrainerConfig};

const PROFILE_FILE: &str = "profile.jsonl";

pub use config::CliConfig;
pub use run_dir::{write_atomic, Artifact, Manifest, RunDir, MANIFEST};

#[derive(Debug, Parser)]
#[command(
    name = "tutorsim",
    version,
    about = "Behavior-graph tutors as environments for AI agents"
)]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded problem set as behavior-graph files.
    GenProblems(GenProblemsArgs),
    /// Run an agent through a problem set and log transactions.
    RunTraining(RunTrainingArgs),
    /// Build a completeness profile from a problem set or a transaction log.
    GenProfile(GenProfileArgs),
    /// Score a grader and demoer against a completeness profile.
    EvalProfile(EvalProfileArgs),
    /// Compute first-attempt learning curves from a transaction log.
    Curves(CurvesArgs),
    /// Train until a pool of problems is mastered and report the cost.
    RlTrain(RlTrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum DomainAlias {
    FractionSameDen,
    FractionDiffDen,
    FractionMultiply,
    Multicolumn,
    LinearEquation,
    /// Cycles through every alias above.
    Mixed,
}

impl DomainAlias {
    const CONCRETE: [DomainAlias; 5] = [
        DomainAlias::FractionSameDen,
        DomainAlias::FractionDiffDen,
        DomainAlias::FractionMultiply,
        DomainAlias::Multicolumn,
        DomainAlias::LinearEquation,
    ];
}

#[derive(Debug, Args, Serialize)]
pub struct GenProblemsArgs {
    #[arg(long, value_enum)]
    pub domain: DomainAlias,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Column count for multicolumn addition.
    #[arg(long, default_value_t = 3)]
    pub digits: u64,
    /// Scaffold level for linear equations; the template maximum if absent.
    #[arg(long)]
    pub level: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Oracle,
    Memorizing,
    Passive,
    Random,
    Q,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum MockKind {
    /// Answers as the tutor would.
    Oracle,
    /// Answers with unparseable text.
    Gibberish,
}

#[derive(Debug, Args, Serialize)]
pub struct LlmArgs {
    /// Offline stand-in for the remote endpoint.
    #[arg(long, value_enum)]
    pub llm_mock: Option<MockKind>,
    /// Append every prompt/response pair to this JSONL file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Serve responses from a recorded transcript instead of the endpoint.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunTrainingArgs {
    /// Problem directory (or a gen-problems run directory, or one graph file).
    #[arg(long)]
    pub problems: PathBuf,
    #[arg(long, value_enum, default_value = "memorizing")]
    pub agent: AgentKind,
    /// Passes over the problem set.
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Pick this many problems with the student model instead of running
    /// the set in order.
    #[arg(long)]
    pub adaptive: Option<usize>,
    #[arg(long)]
    pub max_incorrect: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum PerturbationArg {
    Numeric,
    Swap,
    OffByOne,
}

impl From<PerturbationArg> for Perturbation {
    fn from(p: PerturbationArg) -> Self {
        match p {
            PerturbationArg::Numeric => Perturbation::PerturbNumeric,
            PerturbationArg::Swap => Perturbation::SwapField,
            PerturbationArg::OffByOne => Perturbation::OffByOne,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenProfileArgs {
    #[arg(long)]
    pub problems: PathBuf,
    /// Build entries from the states visited in this log instead of
    /// sampling paths.
    #[arg(long)]
    pub from_log: Option<PathBuf>,
    /// Sampled solution paths per problem.
    #[arg(long, default_value_t = 5)]
    pub paths: usize,
    /// Incorrect actions per entry.
    #[arg(long, default_value_t = 2)]
    pub incorrect: usize,
    #[arg(long, value_enum, default_value = "numeric")]
    pub perturbation: PerturbationArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum GraderKind {
    /// The tutor's own check and demo.
    Check,
    /// A trained agent: grades by comparing with its own action.
    Agent,
    Llm,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalProfileArgs {
    /// Profile JSONL, or a gen-profile run directory.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long)]
    pub problems: PathBuf,
    #[arg(long, value_enum)]
    pub grader: GraderKind,
    /// Agent used by `--grader agent`, trained on the problem set first.
    #[arg(long, value_enum, default_value = "memorizing")]
    pub agent: AgentKind,
    #[arg(long, default_value_t = 1)]
    pub train_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    A,
    B,
}

#[derive(Debug, Args, Serialize)]
pub struct CurvesArgs {
    /// DataShop TSV, or JSONL when the extension is .jsonl.
    #[arg(long)]
    pub log: PathBuf,
    /// CSV output path; a manifest is written next to it.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "a")]
    pub policy: PolicyArg,
    /// Include one curve per skill after the aggregate.
    #[arg(long)]
    pub per_skill: bool,
    /// Also export the transaction-weighted aggregate.
    #[arg(long)]
    pub weighted: bool,
    /// JSON object mapping selections to skills.
    #[arg(long)]
    pub skill_map: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RlTrainArgs {
    #[arg(long)]
    pub problems: PathBuf,
    #[arg(long, value_enum, default_value = "q")]
    pub agent: AgentKind,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 200)]
    pub max_passes: usize,
    #[arg(long, default_value_t = 3)]
    pub max_incorrect: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{}", e.render());
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(2)
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenProblems(a) => gen_problems(&a),
        Command::RunTraining(a) => run_training(&a),
        Command::GenProfile(a) => gen_profile(&a),
        Command::EvalProfile(a) => eval_profile(&a),
        Command::Curves(a) => curves(&a),
        Command::RlTrain(a) => rl_train(&a),
    }
}

fn spec_for(alias: DomainAlias, seed: u64, a: &GenProblemsArgs) -> ProblemSpec {
    match alias {
        DomainAlias::FractionSameDen => {
            ProblemSpec::new(FRACTION_DOMAIN, seed).with_param("kind", FractionKind::SameDenominator.as_str())
        }
        DomainAlias::FractionDiffDen => {
            ProblemSpec::new(FRACTION_DOMAIN, seed).with_param("kind", FractionKind::DifferentDenominator.as_str())
        }
        DomainAlias::FractionMultiply => {
            ProblemSpec::new(FRACTION_DOMAIN, seed).with_param("kind", FractionKind::Multiply.as_str())
        }
        DomainAlias::Multicolumn => ProblemSpec::new(MULTICOLUMN_DOMAIN, seed).with_param("digits", a.digits),
        DomainAlias::LinearEquation => {
            let s = ProblemSpec::new(SCAFFOLD_DOMAIN, seed).with_param("template", "linear_equation");
            match a.level {
                Some(l) => s.with_param("level", l),
                None => s,
            }
        }
        DomainAlias::Mixed => unreachable!("expanded by caller"),
    }
}

/// Problem specs for a generation request: per-problem seeds come from one
/// ChaCha stream seeded by `--seed`, skipping repeats.
pub fn problem_specs(a: &GenProblemsArgs) -> Vec<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(a.n);
    while out.len() < a.n {
        let seed: u32 = rng.random();
        if !seen.insert(seed) {
            continue;
        }
        let alias = match a.domain {
            DomainAlias::Mixed => DomainAlias::CONCRETE[out.len() % DomainAlias::CONCRETE.len()],
            d => d,
        };
        out.push(spec_for(alias, u64::from(seed), a));
    }
    out
}

fn gen_problems(a: &GenProblemsArgs) -> Result<()> {
    if a.n == 0 {
        bail!("--n must be positive");
    }
    let mut run = RunDir::create(&a.out)?;
    for (i, spec) in problem_specs(a).iter().enumerate() {
        let graph = generate(spec).with_context(|| format!("generating {}", spec.problem_id()))?;
        let name = format!("problems/{:04}-{}.json", i + 1, graph.problem_id());
        run.write(&name, graph.to_json().as_bytes())?;
    }
    run.finish("gen-problems", Some(a.seed), serde_json::to_value(a)?)?;
    println!("wrote {} problems to {}", a.n, a.out.join("problems").display());
    Ok(())
}

/// Loads graphs from a file, a directory of `.json` graphs (sorted by file
/// name), or a run directory with a `problems/` subdirectory.
pub fn load_problems(path: &Path) -> Result<Vec<Arc<BehaviorGraph>>> {
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return Ok(vec![Arc::new(
            load_graph(&text).with_context(|| format!("loading {}", path.display()))?,
        )]);
    }
    let dir = if path.join("problems").is_dir() {
        path.join("problems")
    } else {
        path.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no graph files in {}", dir.display());
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f)?;
            Ok(Arc::new(
                load_graph(&text).with_context(|| format!("loading {}", f.display()))?,
            ))
        })
        .collect()
}

pub fn load_transactions(path: &Path) -> Result<Vec<Transaction>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|x| x == "jsonl") {
        Ok(parse_jsonl(&text)?)
    } else {
        Ok(parse_log(&text)?.transactions)
    }
}

fn endpoint_for(cfg: &CliConfig, args: &LlmArgs, tutors: &Arc<TutorRegistry>) -> Result<Arc<dyn Endpoint>> {
    let base: Arc<dyn Endpoint> = if let Some(path) = &args.replay {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Arc::new(ReplayEndpoint::from_jsonl(&text)?)
    } else {
        match args.llm_mock {
            Some(MockKind::Oracle) => Arc::new(OracleEndpoint::new(tutors.clone())),
            Some(MockKind::Gibberish) => Arc::new(MockEndpoint::canned("I am not sure.")),
            None => Arc::new(HttpEndpoint::new(&cfg.llm)),
        }
    };
    Ok(match &args.transcript {
        Some(path) => Arc::new(RecordingEndpoint::to_file(base, path)?),
        None => base,
    })
}

fn llm_client(cfg: &CliConfig, args: &LlmArgs, tutors: &Arc<TutorRegistry>) -> Result<Arc<LlmClient>> {
    Ok(Arc::new(LlmClient::from_config(
        endpoint_for(cfg, args, tutors)?,
        &cfg.llm,
    )))
}

fn make_agent(
    kind: AgentKind,
    graphs: &[Arc<BehaviorGraph>],
    tutors: &Arc<TutorRegistry>,
    cfg: &CliConfig,
    seed: u64,
    llm: Option<&LlmArgs>,
) -> Result<Box<dyn Agent + Send>> {
    Ok(match kind {
        AgentKind::Oracle => Box::new(OracleAgent::new(tutors.clone())),
        AgentKind::Memorizing => Box::new(MemorizingAgent::new()),
        AgentKind::Passive => Box::new(PassiveAgent),
        AgentKind::Random => {
            let table = build_encoding(graphs)?;
            Box::new(RandomAgent::new(table.actions().to_vec(), seed))
        }
        AgentKind::Q => {
            let table = Arc::new(build_encoding(graphs)?);
            Box::new(QAgent::new(table, QConfig { seed, ..cfg.q }))
        }
        AgentKind::Llm => {
            let Some(args) = llm else {
                bail!("the llm agent is not available here");
            };
            let client = llm_client(cfg, args, tutors)?;
            Box::new(LlmAgent::new(client, ContextBuffer::new(cfg.context.char_budget)))
        }
    })
}

fn trainer_config(cfg: &CliConfig, max_incorrect: Option<u32>) -> TrainerConfig {
    TrainerConfig {
        max_incorrect_before_demo: max_incorrect.or(cfg.trainer.max_incorrect),
        max_actions_per_problem: cfg.trainer.max_actions,
        student_id: cfg.trainer.student_id.clone(),
        session_id: cfg.trainer.session_id.clone(),
        ..TrainerConfig::default()
    }
}

fn run_training(a: &RunTrainingArgs) -> Result<()> {
    let cfg = CliConfig::load(a.config.as_deref())?;
    let graphs = load_problems(&a.problems)?;
    let tutors = Arc::new(TutorRegistry::from_graphs(graphs.iter().cloned()));
    let mut agent = make_agent(a.agent, &graphs, &tutors, &cfg, a.seed, Some(&a.llm))?;
    let mut trainer = Trainer::new(trainer_config(&cfg, a.max_incorrect))?;
    let mut log = Vec::new();
    match a.adaptive {
        None => {
            for _ in 0..a.epochs {
                log.extend(trainer.run_curriculum(&mut agent, &graphs)?);
            }
        }
        Some(n) => {
            let mut specs = Vec::new();
            let mut by_id = HashMap::new();
            for g in &graphs {
                let Some(spec) = g.generator() else {
                    bail!(
                        "adaptive selection needs generated problems; {} has no generator",
                        g.problem_id()
                    );
                };
                by_id.insert(spec.problem_id(), g.clone());
                specs.push(spec.clone());
            }
            let mut mastery = MasteryState::new(cfg.student.clone());
            for _ in 0..n {
                let next = select_next(&mastery, &specs, SelectionPolicy::LowestMasteryFirst)?;
                let g = by_id
                    .get(&next.problem_id())
                    .cloned()
                    .or_else(|| graphs.iter().find(|g| g.generator() == Some(&next)).cloned())
                    .context("selected problem is not in the set")?;
                let txs = trainer.run_problem(&mut agent, GraphCursor::new(g))?;
                let mut seen = std::collections::HashSet::new();
                for t in &txs {
                    if !t.skill.is_empty() && seen.insert(t.skill.clone()) {
                        mastery.observe(&t.skill, t.outcome == Outcome::Correct)?;
                    }
                }
                log.extend(txs);
            }
            let mut out = serde_json::to_string_pretty(&mastery.p_known)?;
            out.push('\n');
            fs::create_dir_all(&a.out)?;
            write_atomic(&a.out.join("mastery.json"), out.as_bytes())?;
        }
    }
    let mut run = RunDir::create(&a.out)?;
    if a.adaptive.is_some() {
        run.adopt("mastery.json")?;
    }
    run.write(
        "transactions.tsv",
        write_log(&TransactionLog::from_transactions(log.clone())).as_bytes(),
    )?;
    let jsonl: String = log.iter().map(|t| format!("{}\n", transaction_to_json(t))).collect();
    run.write("transactions.jsonl", jsonl.as_bytes())?;
    run.finish("run-training", Some(a.seed), json!({"args": a, "config": cfg}))?;
    let hints = log.iter().filter(|t| t.outcome == Outcome::Hint).count();
    println!(
        "{} transactions ({} demos) written to {}",
        log.len(),
        hints,
        a.out.display()
    );
    Ok(())
}

fn gen_profile(a: &GenProfileArgs) -> Result<()> {
    let graphs = load_problems(&a.problems)?;
    let tutors = TutorRegistry::from_graphs(graphs.iter().cloned());
    let entries = match &a.from_log {
        Some(log) => build_profile_from_log(&load_transactions(log)?, &tutors)?,
        None => build_profile_parallel(&graphs, a.paths, a.seed, a.jobs),
    };
    let entries = if a.incorrect > 0 {
        inject_incorrect(&entries, &tutors, a.perturbation.into(), a.incorrect, a.seed)?
    } else {
        entries
    };
    let mut run = RunDir::create(&a.out)?;
    run.write(PROFILE_FILE, write_profile(&entries).as_bytes())?;
    run.finish("gen-profile", Some(a.seed), serde_json::to_value(a)?)?;
    println!(
        "{} profile entries written to {}",
        entries.len(),
        a.out.join(PROFILE_FILE).display()
    );
    Ok(())
}

fn eval_profile(a: &EvalProfileArgs) -> Result<()> {
    let cfg = CliConfig::load(a.config.as_deref())?;
    let graphs = load_problems(&a.problems)?;
    let tutors = Arc::new(TutorRegistry::from_graphs(graphs.iter().cloned()));
    let profile_path = if a.profile.is_dir() {
        a.profile.join(PROFILE_FILE)
    } else {
        a.profile.clone()
    };
    let profile = parse_profile(
        &fs::read_to_string(&profile_path).with_context(|| format!("reading {}", profile_path.display()))?,
    )?;
    let (label, graded, demoed): (String, TutorEvalMetrics, TutorEvalMetrics) = match a.grader {
        GraderKind::Check => (
            "check".into(),
            grade_profile(&CheckGrader { tutors: tutors.clone() }, &profile, a.jobs),
            demo_eval(&OracleDemoer { tutors: tutors.clone() }, &profile, &tutors, a.jobs)?,
        ),
        GraderKind::Random => {
            let seed = a.seed;
            let actions = build_encoding(&graphs)?.actions().to_vec();
            let demoer = move |s: &crate::model::ProblemState| {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &s.to_canonical_json()));
                (!actions.is_empty()).then(|| actions[rng.random_range(0..actions.len())].clone())
            };
            (
                "random".into(),
                grade_profile(&RandomGrader { seed }, &profile, a.jobs),
                demo_eval(&demoer, &profile, &tutors, a.jobs)?,
            )
        }
        GraderKind::Llm => {
            let client = llm_client(&cfg, &a.llm, &tutors)?;
            let grader = LlmGrader::new(client.clone());
            let demoer = LlmDemoer::new(client);
            let g = grade_profile(&grader, &profile, a.jobs);
            let d = demo_eval(&demoer, &profile, &tutors, a.jobs)?;
            eprintln!(
                "unparseable responses: {} graded, {} demos",
                grader.failures().unparseable(),
                demoer.failures().unparseable()
            );
            ("llm".into(), g, d)
        }
        GraderKind::Agent => {
            let mut agent = make_agent(a.agent, &graphs, &tutors, &cfg, a.seed, Some(&a.llm))?;
            let mut trainer = Trainer::new(trainer_config(&cfg, None))?;
            for _ in 0..a.train_epochs {
                trainer.run_curriculum(&mut agent, &graphs)?;
            }
            let agent = Mutex::new(agent);
            let act = |s: &crate::model::ProblemState| agent.lock().ok()?.act(s);
            let grader = |s: &crate::model::ProblemState, sai: &crate::model::Sai| {
                Some(if act(s).as_ref() == Some(sai) {
                    Verdict::Yes
                } else {
                    Verdict::No
                })
            };
            (
                format!("agent:{}", serde_json::to_value(a.agent)?.as_str().unwrap_or("?")),
                grade_profile(&grader, &profile, 1),
                demo_eval(&act, &profile, &tutors, 1)?,
            )
        }
    };
    let mut metrics = graded;
    metrics.merge(&demoed);
    let table = metrics.table(&label);
    print!("{table}");
    let mut run = RunDir::create(&a.out)?;
    let summary = json!({
        "grader": label,
        "entries": profile.len(),
        "correct_accuracy": metrics.correct_accuracy(),
        "incorrect_accuracy": metrics.incorrect_accuracy(),
        "demo_accuracy": metrics.demo_accuracy(),
        "counts": metrics,
    });
    run.write(
        "metrics.json",
        format!("{}\n", serde_json::to_string_pretty(&summary)?).as_bytes(),
    )?;
    run.write("metrics.txt", table.as_bytes())?;
    run.finish("eval-profile", Some(a.seed), json!({"args": a, "config": cfg}))?;
    Ok(())
}

fn curves(a: &CurvesArgs) -> Result<()> {
    let log = load_transactions(&a.log)?;
    if log.is_empty() {
        bail!("log {} has no transactions", a.log.display());
    }
    let skill_map: Option<HashMap<String, String>> = match &a.skill_map {
        Some(p) => {
            Some(serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let policy = match a.policy {
        PolicyArg::A => HintPolicy::A,
        PolicyArg::B => HintPolicy::B,
    };
    let set = first_attempt_curves(&log, skill_map.as_ref(), policy);
    let weighted = weighted_aggregate(&set);
    let mut selected: Vec<&LearningCurve> = vec![&set.aggregate];
    if a.weighted {
        selected.push(&weighted);
    }
    if a.per_skill {
        selected.extend(set.per_skill.values());
    }
    let parent = a
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file_name = a
        .out
        .file_name()
        .and_then(|n| n.to_str())
        .context("--out needs a file name")?
        .to_string();
    let mut run = RunDir::with_manifest(parent, &format!("{file_name}.manifest.json"))?;
    run.write(&file_name, export_curves(&selected)?.as_bytes())?;
    if let Some(svg) = &a.svg {
        let title = format!("First-attempt error rate (policy {:?})", policy);
        let bytes = render_svg(&selected, &title);
        match svg.strip_prefix(parent).ok().and_then(|p| p.to_str()) {
            Some(rel) if svg.parent() == Some(parent) || !rel.contains("..") => {
                run.write(rel, bytes.as_bytes())?;
            }
            _ => write_atomic(svg, bytes.as_bytes())?,
        }
    }
    run.finish("curves", None, serde_json::to_value(a)?)?;
    for c in &selected {
        let rates: Vec<String> = c.points.iter().map(|p| format!("{:.3}", p.error_rate)).collect();
        println!("{}: {}", c.grouping, rates.join(" "));
    }
    Ok(())
}

fn rl_train(a: &RlTrainArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        bail!("--threshold must be within [0, 1]");
    }
    let cfg = CliConfig::load(a.config.as_deref())?;
    let graphs = load_problems(&a.problems)?;
    let tutors = Arc::new(TutorRegistry::from_graphs(graphs.iter().cloned()));
    let mut agent = make_agent(a.agent, &graphs, &tutors, &cfg, a.seed, None)?;
    let mut trainer = Trainer::new(trainer_config(&cfg, Some(a.max_incorrect)))?;
    let progress = trainer.train_until(&mut agent, &graphs, a.threshold, a.max_passes)?;
    let mut csv = String::from("pass,problems_seen,first_attempt_correctness\n");
    for p in &progress.passes {
        csv.push_str(&format!(
            "{},{},{}\n",
            p.pass, p.problems_seen, p.first_attempt_correctness
        ));
    }
    let mut run = RunDir::create(&a.out)?;
    run.write("progress.csv", csv.as_bytes())?;
    run.write(
        "summary.json",
        format!("{}\n", serde_json::to_string_pretty(&json!({"problems_needed": progress.problems_needed, "passes": progress.passes.len(), "pool": graphs.len()}))?).as_bytes(),
    )?;
    run.finish("rl-train", Some(a.seed), json!({"args": a, "config": cfg}))?;
    match progress.problems_needed {
        Some(n) => println!(
            "reached {:.2} first-attempt correctness after {n} problems",
            a.threshold
        ),
        None => println!("did not reach {:.2} within {} passes", a.threshold, a.max_passes),
    }
    Ok(())
}
