use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pz_core::dialogue::{default_question_bank, parse_question_bank, DialogueRuntime};
use pz_core::gateway::{Fixture, Gateway, LiveBackend, RecordingBackend};
use pz_core::judge::{LlmJudge, TripletJudge};
use pz_core::kb::OutlineCatalog;
use pz_core::prompts::Prompts;
use pz_core::store::{DataDir, RecordStore, SessionStore};

/// Where model calls go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewayMode {
    /// No model; every call fails as an offline miss.
    Offline,
    Live,
    Replay(PathBuf),
    /// Live calls, each appended to a fixture file in this directory.
    Record(PathBuf),
}

/// Failure of a command, mapped to an exit code by the caller.
#[derive(Debug)]
pub enum CommandError {
    /// Bad arguments: exit 2.
    Usage(String),
    /// The command ran and failed: exit 1.
    Domain(String),
}

impl CommandError {
    pub fn domain(e: impl fmt::Display) -> Self {
        CommandError::Domain(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => 2,
            CommandError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Usage(m) => write!(f, "usage error: {m}"),
            CommandError::Domain(m) => write!(f, "error: {m}"),
        }
    }
}

pub type CommandResult<T = ()> = Result<T, CommandError>;

pub const RECORDED_FIXTURE: &str = "recorded.jsonl";

pub fn build_gateway(mode: &GatewayMode) -> CommandResult<Gateway> {
    Ok(match mode {
        GatewayMode::Offline => Gateway::offline(),
        GatewayMode::Live => Gateway::new(Arc::new(
            LiveBackend::from_env().map_err(CommandError::domain)?,
        )),
        GatewayMode::Replay(dir) => {
            let fixture = if dir.is_file() {
                Fixture::load_file(dir)
            } else {
                Fixture::load_dir(dir)
            }
            .map_err(CommandError::domain)?;
            Gateway::replay(fixture)
        }
        GatewayMode::Record(dir) => {
            let live = Arc::new(LiveBackend::from_env().map_err(CommandError::domain)?);
            let backend = RecordingBackend::new(live, dir.join(RECORDED_FIXTURE))
                .map_err(CommandError::domain)?;
            Gateway::new(Arc::new(backend))
        }
    })
}

/// Everything a command needs, resolved from the global flags.
#[derive(Clone)]
pub struct Context {
    pub data: DataDir,
    pub kb_dir: PathBuf,
    pub banks_dir: PathBuf,
    pub seed: u64,
    pub prompts: Arc<Prompts>,
    pub gateway: Gateway,
}

impl Context {
    pub fn new(
        data_dir: &Path,
        kb_dir: &Path,
        banks_dir: &Path,
        seed: u64,
        prompts_dir: Option<&Path>,
        gateway: Gateway,
    ) -> CommandResult<Self> {
        let prompts = match prompts_dir {
            Some(dir) => Prompts::with_overrides(dir)
                .map_err(|e| CommandError::Domain(format!("{}: {e}", dir.display())))?,
            None => Prompts::builtin(),
        };
        Ok(Self {
            data: DataDir::new(data_dir),
            kb_dir: kb_dir.to_path_buf(),
            banks_dir: banks_dir.to_path_buf(),
            seed,
            prompts: Arc::new(prompts),
            gateway,
        })
    }

    pub fn catalog(&self) -> CommandResult<OutlineCatalog> {
        OutlineCatalog::open(&self.kb_dir).map_err(CommandError::domain)
    }

    pub fn records(&self) -> CommandResult<RecordStore> {
        RecordStore::open(self.data.records()).map_err(CommandError::domain)
    }

    pub fn sessions(&self) -> SessionStore {
        SessionStore::new(self.data.sessions())
    }

    pub fn judge(&self) -> Arc<dyn TripletJudge> {
        Arc::new(
            LlmJudge::new(self.gateway.clone(), self.prompts.clone())
                .with_audit_file(self.data.verdict_cache()),
        )
    }

    pub fn runtime(&self) -> DialogueRuntime {
        DialogueRuntime::new(self.gateway.clone(), self.judge(), self.prompts.clone())
            .with_store(self.sessions())
    }

    /// `banks/<department>.txt` when present, else the shipped bank.
    pub fn question_bank(&self, department: &str) -> CommandResult<Vec<String>> {
        let path = self.banks_dir.join(format!("{department}.txt"));
        if !path.is_file() {
            return Ok(default_question_bank());
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CommandError::Domain(format!("{}: {e}", path.display())))?;
        let bank = parse_question_bank(&text);
        if bank.is_empty() {
            return Err(CommandError::Domain(format!(
                "{} has no questions",
                path.display()
            )));
        }
        Ok(bank)
    }
}
