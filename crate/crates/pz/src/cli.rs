use std::collections::HashSet;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pz_core::dialogue::{ConversationStyle, DoctorAgent, Session, SessionConfig};
use pz_core::kb::{build_outline, ingest_entry, DepartmentCatalog};
use pz_core::memory::{AgentMemory, MemoryFormat};
use pz_core::metrics::{
    corpus_diversity, format_percent, format_table, judge_dialogue, judge_record_accuracy,
    AccuracySummary, FallbackPolicy, TableRow,
};
use pz_core::pipeline::{GenerationRequest, PatientRecord, PipelineConfig, RecordPipeline};
use pz_core::store::jsonl;
use serde::Serialize;

use crate::context::{build_gateway, CommandError, CommandResult, Context, GatewayMode};
use crate::server::{self, ServeConfig};

#[derive(Debug, Parser)]
#[command(
    name = "pz",
    version,
    about = "Synthetic patient records and entailment-checked patient agents"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(id = "mode", multiple = false)]
pub struct ModeArgs {
    /// Call the configured provider (PZ_API_KEY, PZ_BASE_URL, PZ_MODEL).
    #[arg(long, global = true, group = "mode")]
    pub live: bool,
    /// Serve model calls from fixture files in this directory (or one file).
    #[arg(long, global = true, value_name = "DIR", group = "mode")]
    pub replay: Option<PathBuf>,
    /// Call the provider and append every exchange to DIR/recorded.jsonl.
    #[arg(long = "record-to", global = true, value_name = "DIR", group = "mode")]
    pub record_to: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, global = true, default_value = "kb")]
    pub kb_dir: PathBuf,
    /// Question banks, one `<department>.txt` per department.
    #[arg(long, global = true, default_value = "banks")]
    pub banks_dir: PathBuf,
    /// Directory of `*.tmpl` files overriding the built-in prompts.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

impl GlobalArgs {
    pub fn gateway_mode(&self) -> GatewayMode {
        if self.mode.live {
            GatewayMode::Live
        } else if let Some(dir) = &self.mode.replay {
            GatewayMode::Replay(dir.clone())
        } else if let Some(dir) = &self.mode.record_to {
            GatewayMode::Record(dir.clone())
        } else {
            GatewayMode::Offline
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manage the disease outline catalog.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Generate patient records and append them to the record store.
    Generate(GenerateArgs),
    /// Run scripted or model-doctor interviews against a stored record.
    Simulate(SimulateArgs),
    /// Interview a patient from the terminal.
    Chat(ChatArgs),
    /// Score records or dialogues.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum KbCommand {
    /// Build an outline from a knowledge document; it starts pending.
    Ingest {
        #[arg(long)]
        dept: String,
        #[arg(long)]
        disease: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Approve `<department>/<disease>`.
    Approve {
        target: String,
    },
    /// Reject `<department>/<disease>`.
    Reject {
        target: String,
    },
    List,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub dept: Option<String>,
    #[arg(long)]
    pub disease: Option<String>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DoctorKind {
    Scripted,
    Llm,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Stored record id.
    #[arg(long)]
    pub record: String,
    #[arg(long, default_value = "plain")]
    pub style: ConversationStyle,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub rounds: u32,
    #[arg(long)]
    pub no_memory_update: bool,
    #[arg(long, value_enum, default_value_t = DoctorKind::Scripted)]
    pub doctor: DoctorKind,
    #[arg(long, default_value = "atomic")]
    pub memory_format: MemoryFormat,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_attempts: u32,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub record: String,
    #[arg(long, default_value = "plain")]
    pub style: ConversationStyle,
    #[arg(long)]
    pub no_memory_update: bool,
    /// Print facts inserted by each reply.
    #[arg(long)]
    pub inspector: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FallbackArg {
    Include,
    Exclude,
    Penalize,
}

impl From<FallbackArg> for FallbackPolicy {
    fn from(value: FallbackArg) -> Self {
        match value {
            FallbackArg::Include => FallbackPolicy::Include,
            FallbackArg::Exclude => FallbackPolicy::Exclude,
            FallbackArg::Penalize => FallbackPolicy::Penalize,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// Mean pairwise BLEU, ROUGE-L and cosine over a record file.
    Diversity {
        #[arg(long)]
        records: PathBuf,
        /// Keep per-pair scores in the report.
        #[arg(long)]
        detail: bool,
    },
    /// Model-judged accuracy of each record against its outline.
    Accuracy {
        #[arg(long)]
        records: PathBuf,
    },
    /// Consistency, emotion and fluency scores for a stored session.
    Dialogue {
        #[arg(long)]
        session: String,
        #[arg(long, value_enum, default_value_t = FallbackArg::Include)]
        fallback: FallbackArg,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 1 when the command fails, 2 on bad usage.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("PZ_LOG"))
        .with_writer(std::io::stderr)
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CommandResult {
    let g = &cli.global;
    let gateway = build_gateway(&g.gateway_mode())?;
    let ctx = Context::new(
        &g.data_dir,
        &g.kb_dir,
        &g.banks_dir,
        g.seed,
        g.prompts.as_deref(),
        gateway,
    )?;
    dispatch(&ctx, cli.command)
}

/// Runs one command against an already built context.
pub fn dispatch(ctx: &Context, command: Command) -> CommandResult {
    match command {
        Command::Kb(cmd) => kb(ctx, cmd),
        Command::Generate(args) => generate(ctx, args),
        Command::Simulate(args) => simulate(ctx, args),
        Command::Chat(args) => chat(
            ctx,
            args,
            &mut std::io::stdin().lock(),
            &mut std::io::stdout(),
        ),
        Command::Evaluate(cmd) => evaluate(ctx, cmd),
        Command::Serve(args) => serve(ctx.clone(), args),
    }
}

fn split_target(target: &str) -> CommandResult<(&str, &str)> {
    target
        .split_once('/')
        .filter(|(d, n)| !d.is_empty() && !n.is_empty())
        .ok_or_else(|| {
            CommandError::Usage(format!("expected <department>/<disease>, got {target:?}"))
        })
}

fn kb(ctx: &Context, cmd: KbCommand) -> CommandResult {
    let mut catalog = ctx.catalog()?;
    match cmd {
        KbCommand::Ingest {
            dept,
            disease,
            file,
        } => {
            let raw = read_file(&file)?;
            let entry = ingest_entry(
                &raw,
                &dept,
                &disease,
                &DepartmentCatalog::default(),
                &file.display().to_string(),
            )
            .map_err(CommandError::domain)?;
            let outline =
                build_outline(&entry, &ctx.gateway, &ctx.prompts).map_err(CommandError::domain)?;
            catalog.add_pending(outline).map_err(CommandError::domain)?;
            println!("pending\t{dept}/{disease}");
        }
        KbCommand::Approve { target } => {
            let (d, n) = split_target(&target)?;
            catalog.approve(d, n).map_err(CommandError::domain)?;
            println!("approved\t{d}/{n}");
        }
        KbCommand::Reject { target } => {
            let (d, n) = split_target(&target)?;
            catalog.reject(d, n).map_err(CommandError::domain)?;
            println!("rejected\t{d}/{n}");
        }
        KbCommand::List => {
            for listing in catalog.list() {
                let status = serde_json::to_value(listing.status)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from));
                println!(
                    "{}\t{}/{}",
                    status.unwrap_or_default(),
                    listing.department,
                    listing.disease
                );
            }
        }
    }
    Ok(())
}

fn read_file(path: &Path) -> CommandResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CommandError::Domain(format!("{}: {e}", path.display())))
}

fn generate(ctx: &Context, args: GenerateArgs) -> CommandResult {
    let catalog = ctx.catalog()?;
    let mut store = ctx.records()?;
    let pipeline = RecordPipeline::new(
        ctx.gateway.clone(),
        ctx.prompts.clone(),
        PipelineConfig::default(),
    );
    for i in 0..args.count {
        let started = Instant::now();
        let request = GenerationRequest {
            department: args.dept.clone(),
            disease: args.disease.clone(),
            seed: ctx.seed.wrapping_add(u64::from(i)),
        };
        let generated = pipeline
            .generate_and_store(&request, &catalog, &mut store)
            .map_err(CommandError::domain)?;
        let r = &generated.record;
        println!(
            "{}\t{}\t{}\t{} {} {}\t{:.2}s",
            r.record_id,
            r.department,
            r.disease_info.disease,
            r.basic.name,
            r.basic.gender,
            r.basic.age,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn load_record(ctx: &Context, id: &str) -> CommandResult<PatientRecord> {
    ctx.records()?
        .get(id)
        .map_err(CommandError::domain)?
        .ok_or_else(|| {
            CommandError::Domain(format!(
                "no record {id:?} under {}",
                ctx.data.records().display()
            ))
        })
}

#[derive(Serialize)]
struct SimulationReport {
    record_id: String,
    style: ConversationStyle,
    rounds: usize,
    memory_update: bool,
    session_ids: Vec<String>,
    round_initial_hashes: Vec<String>,
    patient_turns: usize,
    regenerated_turns: usize,
    fallback_turns: usize,
    final_memory_size: usize,
}

fn simulate(ctx: &Context, args: SimulateArgs) -> CommandResult {
    let record = load_record(ctx, &args.record)?;
    let bank = ctx.question_bank(&record.department)?;
    let doctor = match args.doctor {
        DoctorKind::Scripted => DoctorAgent::Scripted(bank),
        DoctorKind::Llm => DoctorAgent::Llm {
            questions: bank.len(),
        },
    };
    let config = SessionConfig {
        max_attempts: args.max_attempts,
        memory_update_enabled: !args.no_memory_update,
        memory_format: args.memory_format,
        inspector: false,
    };
    let runtime = ctx.runtime();
    let result = runtime
        .run_cross_dialogue(&record, args.style, args.rounds as usize, &doctor, config)
        .map_err(CommandError::domain)?;
    let patient = || result.sessions.iter().flat_map(|s| s.patient_turns());
    let report = SimulationReport {
        record_id: record.record_id.clone(),
        style: args.style,
        rounds: result.sessions.len(),
        memory_update: config.memory_update_enabled,
        session_ids: result
            .sessions
            .iter()
            .map(|s| s.session_id.clone())
            .collect(),
        round_initial_hashes: result.round_initial_hashes.clone(),
        patient_turns: result.patient_turns(),
        regenerated_turns: patient()
            .filter(|t| t.attempts_used > 1 && !t.fallback)
            .count(),
        fallback_turns: patient().filter(|t| t.fallback).count(),
        final_memory_size: result.final_memory().map_or(0, |m| m.len()),
    };
    for s in &result.sessions {
        runtime
            .close_session(&mut s.clone())
            .map_err(CommandError::domain)?;
    }
    let name = format!(
        "simulation-{}",
        report.session_ids.first().cloned().unwrap_or_default()
    );
    let path = ctx
        .data
        .write_report(&name, &report)
        .map_err(CommandError::domain)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    println!("report: {}", path.display());
    Ok(())
}

/// Terminal interview. Each input line is one doctor message; `/quit` or end
/// of input closes the session.
pub fn chat(
    ctx: &Context,
    args: ChatArgs,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CommandResult {
    let record = load_record(ctx, &args.record)?;
    let runtime = ctx.runtime();
    let config = SessionConfig {
        memory_update_enabled: !args.no_memory_update,
        inspector: args.inspector,
        ..Default::default()
    };
    let mut session = runtime
        .open_session(&record, args.style, config)
        .map_err(CommandError::domain)?;
    let io = |e: std::io::Error| CommandError::domain(e);
    writeln!(
        out,
        "session {} ({}, {} facts). Type /quit to end.",
        session.session_id,
        args.style,
        session.memory.len()
    )
    .map_err(io)?;
    let mut line = String::new();
    loop {
        write!(out, "doctor> ").map_err(io)?;
        out.flush().map_err(io)?;
        line.clear();
        if input.read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        let message = line.trim();
        if message == "/quit" {
            break;
        }
        if message.is_empty() {
            continue;
        }
        let turn = runtime
            .patient_reply(&mut session, message)
            .map_err(CommandError::domain)?;
        writeln!(out, "patient> {}", turn.text).map_err(io)?;
        if args.inspector {
            if turn.attempts_used > 1 {
                writeln!(
                    out,
                    "  [attempts {}{}]",
                    turn.attempts_used,
                    if turn.fallback { ", fallback" } else { "" }
                )
                .map_err(io)?;
            }
            for id in &turn.inserted_fact_ids {
                if let Some(f) = session.memory.get(id) {
                    writeln!(out, "  [+ {}]", f.statement).map_err(io)?;
                }
            }
        }
    }
    runtime
        .close_session(&mut session)
        .map_err(CommandError::domain)?;
    writeln!(out, "session {} closed", session.session_id).map_err(io)?;
    Ok(())
}

fn load_record_file(path: &Path) -> CommandResult<Vec<PatientRecord>> {
    if !path.is_file() {
        return Err(CommandError::Domain(format!(
            "{}: no such file",
            path.display()
        )));
    }
    jsonl::read_lines(path).map_err(CommandError::domain)
}

fn file_label(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

#[derive(Serialize)]
struct AccuracyReport {
    records: String,
    summary: AccuracySummary,
    accuracy: String,
    verdicts: Vec<(String, pz_core::metrics::AccuracyVerdict)>,
}

#[derive(Serialize)]
struct DialogueReport {
    session_id: String,
    style: ConversationStyle,
    scores: pz_core::metrics::DialogueScores,
    consistency: String,
}

/// Memory as it stood when the session opened: everything except facts the
/// session itself inserted.
pub fn initial_memory(session: &Session) -> AgentMemory {
    let inserted: HashSet<&str> = session
        .transcript
        .iter()
        .flat_map(|t| t.inserted_fact_ids.iter().map(String::as_str))
        .collect();
    AgentMemory::from_facts(
        session
            .memory
            .facts()
            .iter()
            .filter(|f| !inserted.contains(f.fact_id.as_str()))
            .cloned(),
    )
}

fn evaluate(ctx: &Context, cmd: EvaluateCommand) -> CommandResult {
    match cmd {
        EvaluateCommand::Diversity { records, detail } => {
            let loaded = load_record_file(&records)?;
            let texts: Vec<String> = loaded.iter().map(PatientRecord::to_text).collect();
            let report = corpus_diversity(&texts, detail).map_err(CommandError::domain)?;
            let path = ctx
                .data
                .write_report(&format!("diversity-{}", file_label(&records)), &report)
                .map_err(CommandError::domain)?;
            println!(
                "{}",
                format_table(&[TableRow {
                    label: file_label(&records),
                    accuracy: None,
                    bleu: Some(report.mean_pairwise_bleu),
                    rouge_l: Some(report.mean_pairwise_rouge_l),
                    cosine: Some(report.mean_pairwise_cosine),
                }])
            );
            println!("report: {}", path.display());
        }
        EvaluateCommand::Accuracy { records } => {
            let loaded = load_record_file(&records)?;
            let catalog = ctx.catalog()?;
            let mut verdicts = Vec::new();
            for record in &loaded {
                let outline = catalog
                    .get(&record.department, &record.disease_info.disease)
                    .ok_or_else(|| {
                        CommandError::Domain(format!(
                            "record {}: no outline for {}/{}",
                            record.record_id, record.department, record.disease_info.disease
                        ))
                    })?;
                let verdict = judge_record_accuracy(record, outline, &ctx.gateway, &ctx.prompts)
                    .map_err(CommandError::domain)?;
                verdicts.push((record.record_id.clone(), verdict));
            }
            let summary = AccuracySummary::from_verdicts(verdicts.iter().map(|(_, v)| v));
            let report = AccuracyReport {
                records: records.display().to_string(),
                accuracy: format_percent(summary.ratio()),
                summary,
                verdicts,
            };
            let path = ctx
                .data
                .write_report(&format!("accuracy-{}", file_label(&records)), &report)
                .map_err(CommandError::domain)?;
            println!(
                "{}",
                format_table(&[TableRow {
                    label: file_label(&records),
                    accuracy: Some(report.summary.ratio()),
                    ..Default::default()
                }])
            );
            println!("report: {}", path.display());
        }
        EvaluateCommand::Dialogue { session, fallback } => {
            let store = ctx.sessions();
            if !store.exists(&session) {
                return Err(CommandError::Domain(format!("no session {session:?}")));
            }
            let loaded = Session::load(&store, &session).map_err(CommandError::domain)?;
            let judge = ctx.judge();
            let scores = judge_dialogue(
                &loaded.transcript,
                &initial_memory(&loaded),
                loaded.style,
                judge.as_ref(),
                &ctx.gateway,
                &ctx.prompts,
                fallback.into(),
            )
            .map_err(CommandError::domain)?;
            let report = DialogueReport {
                session_id: loaded.session_id.clone(),
                style: loaded.style,
                consistency: format_percent(scores.dialogue_consistency),
                scores,
            };
            let path = ctx
                .data
                .write_report(&format!("dialogue-{session}"), &report)
                .map_err(CommandError::domain)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            println!("report: {}", path.display());
        }
    }
    Ok(())
}

fn serve(ctx: Context, args: ServeArgs) -> CommandResult {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CommandError::domain)?;
    rt.block_on(async move {
        let config = ServeConfig { addr: args.addr };
        server::serve(config, server::AppState::from_context(&ctx)).await
    })
    .map_err(CommandError::domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_flags_are_exclusive() {
        let err = Cli::try_parse_from(["pz", "--live", "--replay", "x", "kb", "list"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn mode_resolution() {
        let cli = Cli::try_parse_from(["pz", "kb", "list", "--replay", "fx"]).unwrap();
        assert_eq!(cli.global.gateway_mode(), GatewayMode::Replay("fx".into()));
        let cli = Cli::try_parse_from(["pz", "kb", "list"]).unwrap();
        assert_eq!(cli.global.gateway_mode(), GatewayMode::Offline);
    }

    #[test]
    fn target_split() {
        assert_eq!(
            split_target("General Surgery/Pancreatitis").unwrap(),
            ("General Surgery", "Pancreatitis")
        );
        assert!(matches!(
            split_target("Pancreatitis"),
            Err(CommandError::Usage(_))
        ));
    }

    #[test]
    fn style_and_format_parse() {
        let cli = Cli::try_parse_from([
            "pz",
            "simulate",
            "--record",
            "00001",
            "--style",
            "reserved",
            "--memory-format",
            "plain",
            "--rounds",
            "2",
        ])
        .unwrap();
        match cli.command {
            Command::Simulate(a) => {
                assert_eq!(a.style, ConversationStyle::Reserved);
                assert_eq!(a.memory_format, MemoryFormat::Plain);
                assert_eq!(a.rounds, 2);
            }
            other => panic!("{other:?}"),
        }
    }
}
