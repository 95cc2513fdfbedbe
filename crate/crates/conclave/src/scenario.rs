//! Scenario files: the single definition a run is built from — task text,
//! agent roster with role texts and memory templates, backend bindings,
//! scheduling and budget knobs.
//!
//! Paths inside a scenario (task file, role files, template files) are
//! resolved relative to the scenario file's directory. A resolved scenario
//! can be re-serialized with everything inlined, which is what gets persisted
//! into run directories so a run is reproducible from its own artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{
    BackendHandle, HttpBackend, HttpBackendConfig, RetryPolicy, ScriptedBackend,
};
use crate::context::TokenCounter;
use crate::memory::MemoryTemplate;
use crate::orchestrator::{
    roles, ConversationEngine, EngineAgent, EngineConfig, EngineError, Mode, RunArtifacts,
};

pub const DEFAULT_MAX_TURNS: u64 = 64;
pub const DEFAULT_MAX_CONTEXT_TOKENS: u64 = 8192;
pub const DEFAULT_UPDATE_RETRIES: u32 = 2;
pub const DEFAULT_AUTH_ENV: &str = "LLM_API_KEY";
pub const DEFAULT_HTTP_TIMEOUT_SECS: u64 = 120;

/// One backend definition. Agents reference backends by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Fixed response queue; each referencing agent run pops in order.
    Scripted { responses: Vec<String> },
    /// Chat-completions-style HTTP endpoint.
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_auth_env")]
        auth_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_auth_env() -> String {
    DEFAULT_AUTH_ENV.to_string()
}

fn default_timeout_secs() -> u64 {
    DEFAULT_HTTP_TIMEOUT_SECS
}

/// A memory template given either as a path to a JSON file or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSource {
    Path(String),
    Inline(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_file: Option<String>,
    /// Omitted: a minimal one-slot template is supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateSource>,
    pub backend: String,
    /// Backend for memory updates; defaults to `backend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_backend: Option<String>,
}

/// The scenario file as serialized on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_file: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_turns")]
    pub max_turns: u64,
    #[serde(default = "default_max_context_tokens")]
    pub max_context_tokens: u64,
    #[serde(default)]
    pub token_counter: TokenCounter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_order: Option<Vec<String>>,
    #[serde(default = "default_update_retries")]
    pub memory_update_retries: u32,
    pub backends: BTreeMap<String, BackendConfig>,
    pub agents: Vec<AgentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_mode() -> Mode {
    Mode::Intrinsic
}

fn default_max_turns() -> u64 {
    DEFAULT_MAX_TURNS
}

fn default_max_context_tokens() -> u64 {
    DEFAULT_MAX_CONTEXT_TOKENS
}

fn default_update_retries() -> u32 {
    DEFAULT_UPDATE_RETRIES
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scenario:\n  {}", issues.join("\n  "))]
    Invalid { issues: Vec<String> },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// An agent with its role text and template resolved.
#[derive(Debug, Clone)]
pub struct ResolvedAgent {
    pub id: String,
    pub role_name: String,
    pub role_text: String,
    pub template: MemoryTemplate,
    pub backend: String,
    pub update_backend: Option<String>,
}

/// A fully loaded and validated scenario, ready to build engines.
#[derive(Debug, Clone)]
pub struct Scenario {
    file: ScenarioFile,
    task: String,
    agents: Vec<ResolvedAgent>,
    worker_order: Vec<String>,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Intrinsic => "intrinsic",
            Mode::Baseline => "baseline",
        }
    }
}

/// Reads a scenario file and returns it with its base directory (for
/// resolving relative paths). No validation beyond JSON shape.
pub fn read_scenario_file(path: &Path) -> Result<(ScenarioFile, PathBuf), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((file, base))
}

/// Serializes a scenario file as pretty JSON.
pub fn write_scenario_file(file: &ScenarioFile, path: &Path) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(file).expect("scenario serialization");
    std::fs::write(path, text + "\n").map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads, validates, and resolves a scenario from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let (file, base) = read_scenario_file(path)?;
    Scenario::from_file(file, &base)
}

impl Scenario {
    /// Validates `file` and resolves every referenced path against `base_dir`.
    /// All problems are gathered into one error with one line per issue.
    pub fn from_file(mut file: ScenarioFile, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut issues = Vec::new();

        // Canonicalize legacy aliases before any cross-referencing.
        for agent in &mut file.agents {
            agent.id = roles::canonical(&agent.id).to_string();
        }
        if let Some(order) = &mut file.worker_order {
            for id in order.iter_mut() {
                *id = roles::canonical(id).to_string();
            }
        }

        let task = match (&file.task_text, &file.task_file) {
            (Some(text), None) => text.clone(),
            (None, Some(rel)) => read_text(base_dir.join(rel), "task_file", &mut issues),
            (Some(_), Some(_)) => {
                issues.push("task_text and task_file are mutually exclusive".into());
                String::new()
            }
            (None, None) => {
                issues.push("one of task_text or task_file is required".into());
                String::new()
            }
        };
        if task.is_empty() && issues.is_empty() {
            issues.push("task text is empty".into());
        }

        let worker_order: Vec<String> = file
            .worker_order
            .clone()
            .unwrap_or_else(|| roles::DEFAULT_WORKER_ORDER.iter().map(|s| s.to_string()).collect());

        let mut agents = Vec::with_capacity(file.agents.len());
        let mut seen = std::collections::HashSet::new();
        for (i, agent) in file.agents.iter().enumerate() {
            let at = format!("agents[{i}]");
            if agent.id.is_empty() {
                issues.push(format!("{at}.id: empty agent id"));
            }
            if !seen.insert(agent.id.clone()) {
                issues.push(format!("{at}.id: duplicate agent id '{}'", agent.id));
            }

            let role_text = match (&agent.role_text, &agent.role_file) {
                (Some(text), None) => text.clone(),
                (None, Some(rel)) => {
                    read_text(base_dir.join(rel), &format!("{at}.role_file"), &mut issues)
                }
                (Some(_), Some(_)) => {
                    issues.push(format!("{at}: role_text and role_file are mutually exclusive"));
                    String::new()
                }
                (None, None) => {
                    issues.push(format!("{at}: one of role_text or role_file is required"));
                    String::new()
                }
            };
            if role_text.is_empty() && !issues.iter().any(|m| m.starts_with(&at)) {
                issues.push(format!("{at}: role text is empty"));
            }

            let template = resolve_template(&agent.id, agent.template.as_ref(), base_dir, &at, &mut issues);

            if !file.backends.contains_key(&agent.backend) {
                issues.push(format!("{at}.backend: unknown backend '{}'", agent.backend));
            }
            if let Some(update) = &agent.update_backend {
                if !file.backends.contains_key(update) {
                    issues.push(format!("{at}.update_backend: unknown backend '{update}'"));
                }
            }

            agents.push(ResolvedAgent {
                id: agent.id.clone(),
                role_name: agent
                    .role_name
                    .clone()
                    .unwrap_or_else(|| default_role_name(&agent.id)),
                role_text,
                template,
                backend: agent.backend.clone(),
                update_backend: agent.update_backend.clone(),
            });
        }

        let ids: std::collections::HashSet<&str> =
            agents.iter().map(|a| a.id.as_str()).collect();
        for (i, id) in worker_order.iter().enumerate() {
            if !ids.contains(id.as_str()) {
                issues.push(format!("worker_order[{i}]: unknown agent '{id}'"));
            }
        }
        for required in [roles::CDA, roles::KIA, roles::EA, roles::DJE] {
            if !ids.contains(required) {
                issues.push(format!("agents: scheduler requires '{required}' but it is not defined"));
            }
        }
        if let Some(judge) = &file.judge_backend {
            if !file.backends.contains_key(judge) {
                issues.push(format!("judge_backend: unknown backend '{judge}'"));
            }
        }
        if file.max_turns == 0 {
            issues.push("max_turns must be positive".into());
        }
        if file.max_context_tokens == 0 {
            issues.push("max_context_tokens must be positive".into());
        }

        if !issues.is_empty() {
            return Err(ScenarioError::Invalid { issues });
        }
        Ok(Self {
            file,
            task,
            agents,
            worker_order,
        })
    }

    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn mode(&self) -> Mode {
        self.file.mode
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn agents(&self) -> &[ResolvedAgent] {
        &self.agents
    }

    pub fn worker_order(&self) -> &[String] {
        &self.worker_order
    }

    pub fn judge_backend_name(&self) -> Option<&str> {
        self.file.judge_backend.as_deref()
    }

    /// Deterministic run identifier: scenario name, mode, seed.
    pub fn run_id(&self) -> String {
        format!("{}-{}-seed{}", self.file.name, self.file.mode.as_str(), self.file.seed)
    }

    /// The scenario with task, role texts, and templates inlined, suitable
    /// for persisting alongside a run's artifacts.
    pub fn resolved_file(&self) -> ScenarioFile {
        let mut file = self.file.clone();
        file.task_text = Some(self.task.clone());
        file.task_file = None;
        file.worker_order = Some(self.worker_order.clone());
        for (config, resolved) in file.agents.iter_mut().zip(&self.agents) {
            config.role_name = Some(resolved.role_name.clone());
            config.role_text = Some(resolved.role_text.clone());
            config.role_file = None;
            config.template = Some(TemplateSource::Inline(resolved.template.to_json()));
        }
        file
    }

    /// Builds a fresh backend instance by config name. Scripted backends get
    /// a new queue each call, so every run replays its script from the top.
    pub fn instantiate_backend(&self, name: &str) -> Result<BackendHandle, ScenarioError> {
        let config = self.file.backends.get(name).ok_or_else(|| ScenarioError::Invalid {
            issues: vec![format!("unknown backend '{name}'")],
        })?;
        match config {
            BackendConfig::Scripted { responses } => Ok(Arc::new(ScriptedBackend::with_key(
                name,
                responses.clone(),
            ))),
            BackendConfig::Http {
                endpoint,
                model,
                auth_env,
                timeout_secs,
                retry,
            } => {
                let backend = HttpBackend::new(HttpBackendConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    auth_env: Some(auth_env.clone()),
                    timeout: Duration::from_secs(*timeout_secs),
                    retry: retry.clone(),
                })
                .map_err(EngineError::Backend)?;
                Ok(Arc::new(backend))
            }
        }
    }

    /// Wires a new engine: fresh backends, initial memories, empty transcript.
    pub fn build_engine(&self) -> Result<ConversationEngine, ScenarioError> {
        let mut engine_agents = Vec::with_capacity(self.agents.len());
        for agent in &self.agents {
            let backend = self.instantiate_backend(&agent.backend)?;
            let update_backend = match &agent.update_backend {
                Some(name) => self.instantiate_backend(name)?,
                None => Arc::clone(&backend),
            };
            engine_agents.push(EngineAgent {
                id: agent.id.clone(),
                role_name: agent.role_name.clone(),
                role_text: agent.role_text.clone(),
                template: agent.template.clone(),
                backend,
                update_backend,
            });
        }
        let config = EngineConfig {
            run_id: self.run_id(),
            scenario_name: self.file.name.clone(),
            mode: self.file.mode,
            seed: self.file.seed,
            max_turns: self.file.max_turns,
            max_context_tokens: self.file.max_context_tokens,
            counter: self.file.token_counter.clone(),
            update_retry_limit: self.file.memory_update_retries,
            task: self.task.clone(),
            worker_order: self.worker_order.clone(),
        };
        Ok(ConversationEngine::new(config, engine_agents)?)
    }
}

/// Runs `repeat` independent conversations of the same scenario, seeds
/// `base seed + 0..repeat`. With the `parallel` feature the runs execute on a
/// rayon pool (`jobs` threads when given); otherwise sequentially.
pub fn run_repeated(
    base: &ScenarioFile,
    base_dir: &Path,
    repeat: u32,
    jobs: Option<usize>,
) -> Result<Vec<RunArtifacts>, ScenarioError> {
    let files: Vec<ScenarioFile> = (0..repeat)
        .map(|i| {
            let mut file = base.clone();
            file.seed = base.seed + u64::from(i);
            file
        })
        .collect();

    let run_one = |file: ScenarioFile| -> Result<RunArtifacts, ScenarioError> {
        Ok(Scenario::from_file(file, base_dir)?.build_engine()?.run())
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let work = || files.into_par_iter().map(run_one).collect();
        match jobs {
            Some(threads) => rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool")
                .install(work),
            None => work(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        files.into_iter().map(run_one).collect()
    }
}

fn read_text(path: PathBuf, at: &str, issues: &mut Vec<String>) -> String {
    match std::fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) => {
            issues.push(format!("{at}: cannot read {}: {e}", path.display()));
            String::new()
        }
    }
}

fn resolve_template(
    agent_id: &str,
    source: Option<&TemplateSource>,
    base_dir: &Path,
    at: &str,
    issues: &mut Vec<String>,
) -> MemoryTemplate {
    let fallback = || default_template(agent_id);
    let (template_id, value) = match source {
        None => return fallback(),
        Some(TemplateSource::Inline(value)) => (format!("{agent_id}-template"), value.clone()),
        Some(TemplateSource::Path(rel)) => {
            let path = base_dir.join(rel);
            let text = match std::fs::read_to_string(&path) {
                Ok(text) => text,
                Err(e) => {
                    issues.push(format!("{at}.template: cannot read {}: {e}", path.display()));
                    return fallback();
                }
            };
            match serde_json::from_str::<Value>(&text) {
                Ok(value) => {
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| agent_id.to_string());
                    (stem, value)
                }
                Err(e) => {
                    issues.push(format!("{at}.template: cannot parse {}: {e}", path.display()));
                    return fallback();
                }
            }
        }
    };
    match MemoryTemplate::from_json(&template_id, &value) {
        Ok(template) => template,
        Err(e) => {
            issues.push(format!("{at}.template: {e}"));
            fallback()
        }
    }
}

/// The minimal template agents get when the scenario does not assign one.
fn default_template(agent_id: &str) -> MemoryTemplate {
    MemoryTemplate::from_json(
        format!("{agent_id}-default"),
        &serde_json::json!({
            "current_position": "The agent's working summary of the discussion so far."
        }),
    )
    .expect("default template is valid")
}

fn default_role_name(id: &str) -> String {
    match id {
        roles::EA => "Evaluation Agent",
        roles::KIA => "Knowledge Integration Agent",
        roles::DEA => "Data Engineer Agent",
        roles::IA => "Infrastructure Engineer",
        roles::BOA => "Business Objective Engineer",
        roles::MLE => "Machine Learning Engineer",
        roles::CDA => "Conversation Delegation Agent",
        roles::DJE => "Documentation Joining Agent",
        other => other,
    }
    .to_string()
}
