//! Run artifact persistence. Every run directory holds the transcript, the
//! per-turn context packages, per-turn memory snapshots, the run report, a
//! self-contained scenario copy, and a manifest of all files with SHA-256
//! content hashes so reruns and comparisons can be checked byte for byte.
//!
//! Artifacts contain no timestamps: a rerun with the same scenario and seed
//! writes identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{JudgeScorecard, RunReport};
use crate::orchestrator::RunArtifacts;
use crate::scenario::ScenarioFile;

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const CONTEXTS_FILE: &str = "contexts.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORECARD_FILE: &str = "scorecard.json";
pub const MEMORY_DIR: &str = "memory";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Transcript,
    Contexts,
    Report,
    Scenario,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: ArtifactKind,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    /// False when persistence stopped partway through.
    pub complete: bool,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn count_of(&self, kind: ArtifactKind) -> usize {
        self.files.iter().filter(|f| f.kind == kind).count()
    }
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot write {path}: {source}")]
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
    #[error("no run manifest found under {0}")]
    NotARunDir(String),
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer<'a> {
    root: &'a Path,
    entries: Vec<ManifestEntry>,
}

impl<'a> Writer<'a> {
    fn write(&mut self, rel: &str, kind: ArtifactKind, bytes: &[u8]) -> Result<(), PersistError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| PersistError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        fs::write(&path, bytes).map_err(|source| PersistError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            kind,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifact serialization"));
        out.push('\n');
    }
    out.into_bytes()
}

fn pretty<T: Serialize>(item: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(item).expect("artifact serialization");
    text.push('\n');
    text.into_bytes()
}

/// Writes all run artifacts plus the manifest under `output_dir`.
///
/// On an I/O failure the manifest is still written if possible, marked
/// incomplete and listing only the files that made it, and the error is
/// returned.
pub fn persist_run(
    artifacts: &RunArtifacts,
    scenario_copy: Option<&ScenarioFile>,
    output_dir: &Path,
) -> Result<Manifest, PersistError> {
    fs::create_dir_all(output_dir).map_err(|source| PersistError::Io {
        path: output_dir.display().to_string(),
        source,
    })?;

    let mut writer = Writer {
        root: output_dir,
        entries: Vec::new(),
    };

    let result = (|| -> Result<(), PersistError> {
        writer.write(
            TRANSCRIPT_FILE,
            ArtifactKind::Transcript,
            &jsonl(artifacts.transcript.turns()),
        )?;
        writer.write(CONTEXTS_FILE, ArtifactKind::Contexts, &jsonl(&artifacts.contexts))?;
        writer.write(REPORT_FILE, ArtifactKind::Report, &pretty(&artifacts.report))?;
        if let Some(scenario) = scenario_copy {
            writer.write(SCENARIO_FILE, ArtifactKind::Scenario, &pretty(scenario))?;
        }
        for snapshot in &artifacts.snapshots {
            let rel = format!(
                "{MEMORY_DIR}/{}/memory_{:04}.json",
                snapshot.agent_id, snapshot.global_turn
            );
            writer.write(&rel, ArtifactKind::Snapshot, &pretty(snapshot))?;
        }
        Ok(())
    })();

    let manifest = Manifest {
        run_id: artifacts.report.run_id.clone(),
        complete: result.is_ok(),
        files: writer.entries,
    };
    let manifest_bytes = pretty(&manifest);
    let manifest_path = output_dir.join(MANIFEST_FILE);
    let manifest_write = fs::write(&manifest_path, &manifest_bytes);

    result?;
    manifest_write.map_err(|source| PersistError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    Ok(manifest)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PersistError> {
    let text = fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| PersistError::Parse {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_manifest(run_dir: &Path) -> Result<Manifest, PersistError> {
    let path = run_dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(PersistError::NotARunDir(run_dir.display().to_string()));
    }
    read_json(&path)
}

pub fn load_report(run_dir: &Path) -> Result<RunReport, PersistError> {
    read_json(&run_dir.join(REPORT_FILE))
}

/// The report with any separately written scorecard merged in.
pub fn load_report_with_scorecard(run_dir: &Path) -> Result<RunReport, PersistError> {
    let mut report = load_report(run_dir)?;
    if report.scorecard.is_none() {
        let path = run_dir.join(SCORECARD_FILE);
        if path.exists() {
            report.scorecard = Some(read_json(&path)?);
        }
    }
    Ok(report)
}

pub fn load_scenario_copy(run_dir: &Path) -> Result<ScenarioFile, PersistError> {
    read_json(&run_dir.join(SCENARIO_FILE))
}

/// Judge scorecards are evaluation output, written next to the run's
/// artifacts without touching the manifest.
pub fn write_scorecard(run_dir: &Path, card: &JudgeScorecard) -> Result<(), PersistError> {
    let path = run_dir.join(SCORECARD_FILE);
    fs::write(&path, pretty(card)).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Recomputes every manifest hash. Returns one message per mismatching or
/// missing file; empty means the directory matches its manifest.
pub fn verify_manifest(run_dir: &Path) -> Result<Vec<String>, PersistError> {
    let manifest = load_manifest(run_dir)?;
    let mut problems = Vec::new();
    for entry in &manifest.files {
        let path = run_dir.join(&entry.path);
        match fs::read(&path) {
            Ok(bytes) => {
                let actual = sha256_hex(&bytes);
                if actual != entry.sha256 {
                    problems.push(format!("{}: hash mismatch", entry.path));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", entry.path)),
        }
    }
    Ok(problems)
}

/// Interprets `path` as either one run directory (it has a manifest) or a
/// directory of run directories. Returned paths are sorted.
pub fn discover_run_dirs(path: &Path) -> Result<Vec<PathBuf>, PersistError> {
    if path.join(MANIFEST_FILE).exists() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(MANIFEST_FILE).exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PersistError::NotARunDir(path.display().to_string()));
    }
    Ok(dirs)
}

/// Loads all reports (scorecards merged) under a run dir or group dir,
/// keyed by their directories.
pub fn load_group_reports(path: &Path) -> Result<BTreeMap<PathBuf, RunReport>, PersistError> {
    let mut out = BTreeMap::new();
    for dir in discover_run_dirs(path)? {
        let report = load_report_with_scorecard(&dir)?;
        out.insert(dir, report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::context::TokenCounter;
    use crate::memory::MemoryTemplate;
    use crate::orchestrator::{ConversationEngine, EngineAgent, EngineConfig, Mode};
    use serde_json::json;
    use std::sync::Arc;

    fn three_turn_artifacts() -> RunArtifacts {
        // CDA speaks, BOA speaks, CDA speaks, then the turn limit trips.
        let template = |id: &str| {
            MemoryTemplate::from_json(id, &json!({"current_position": "d"})).unwrap()
        };
        let agent = |id: &str, outputs: Vec<&str>| EngineAgent {
            id: id.into(),
            role_name: id.into(),
            role_text: format!("You are {id}."),
            template: template(id),
            backend: Arc::new(ScriptedBackend::with_key(
                id,
                outputs.iter().map(|s| s.to_string()).collect(),
            )),
            update_backend: Arc::new(ScriptedBackend::with_key(
                format!("{id}-mem"),
                outputs
                    .iter()
                    .map(|_| r#"{"current_position": "updated"}"#.to_string())
                    .collect(),
            )),
        };
        let agents = vec![
            agent("CDA", vec!["first", "third"]),
            agent("BOA", vec!["second"]),
            agent("DEA", vec![]),
            agent("MLE", vec![]),
            agent("IA", vec![]),
            agent("KIA", vec![]),
            agent("EA", vec![]),
            agent("DJE", vec![]),
        ];
        let config = EngineConfig {
            run_id: "persist-test".into(),
            scenario_name: "persist".into(),
            mode: Mode::Intrinsic,
            seed: 1,
            max_turns: 3,
            max_context_tokens: 4096,
            counter: TokenCounter::DefaultHeuristic,
            update_retry_limit: 0,
            task: "task".into(),
            worker_order: ["BOA", "DEA", "MLE", "IA"].iter().map(|s| s.to_string()).collect(),
        };
        ConversationEngine::new(config, agents).unwrap().run()
    }

    #[test]
    fn three_turn_run_manifest_counts() {
        let artifacts = three_turn_artifacts();
        assert_eq!(artifacts.transcript.turns().len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let manifest = persist_run(&artifacts, None, dir.path()).unwrap();
        assert!(manifest.complete);
        assert_eq!(manifest.count_of(ArtifactKind::Transcript), 1);
        assert_eq!(manifest.count_of(ArtifactKind::Snapshot), 3);
        assert_eq!(manifest.count_of(ArtifactKind::Report), 1);
        // Snapshot layout: memory/<agent>/memory_<turn>.json
        assert!(dir.path().join("memory/CDA/memory_0001.json").exists());
        assert!(dir.path().join("memory/BOA/memory_0002.json").exists());
        assert!(dir.path().join("memory/CDA/memory_0003.json").exists());
    }

    #[test]
    fn reruns_produce_identical_hashes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let manifest_a = persist_run(&three_turn_artifacts(), None, dir_a.path()).unwrap();
        let manifest_b = persist_run(&three_turn_artifacts(), None, dir_b.path()).unwrap();
        assert_eq!(manifest_a.files, manifest_b.files);
    }

    #[test]
    fn unwritable_directory_is_a_persist_error() {
        let artifacts = three_turn_artifacts();
        let err = persist_run(&artifacts, None, Path::new("/proc/conclave-cannot-write"));
        assert!(err.is_err());
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        persist_run(&three_turn_artifacts(), None, dir.path()).unwrap();
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join(REPORT_FILE), "{}").unwrap();
        let problems = verify_manifest(dir.path()).unwrap();
        assert_eq!(problems, vec![format!("{REPORT_FILE}: hash mismatch")]);
    }

    #[test]
    fn report_round_trips_with_scorecard_merge() {
        let dir = tempfile::tempdir().unwrap();
        let artifacts = three_turn_artifacts();
        persist_run(&artifacts, None, dir.path()).unwrap();
        let loaded = load_report(dir.path()).unwrap();
        assert_eq!(loaded, artifacts.report);

        let card = crate::eval::JudgeScorecard {
            scalability: crate::eval::MetricScore { score: 8, justification: "ok".into() },
            reliability: crate::eval::MetricScore { score: 5, justification: String::new() },
            usability: crate::eval::MetricScore { score: 4, justification: String::new() },
            cost_effectiveness: crate::eval::MetricScore { score: 6, justification: String::new() },
            documentation: crate::eval::MetricScore { score: 4, justification: String::new() },
        };
        write_scorecard(dir.path(), &card).unwrap();
        let merged = load_report_with_scorecard(dir.path()).unwrap();
        assert_eq!(merged.scorecard, Some(card));
    }

    #[test]
    fn discover_handles_single_run_and_groups() {
        let root = tempfile::tempdir().unwrap();
        let run_a = root.path().join("a");
        let run_b = root.path().join("b");
        persist_run(&three_turn_artifacts(), None, &run_a).unwrap();
        persist_run(&three_turn_artifacts(), None, &run_b).unwrap();

        assert_eq!(discover_run_dirs(&run_a).unwrap(), vec![run_a.clone()]);
        let group = discover_run_dirs(root.path()).unwrap();
        assert_eq!(group, vec![run_a, run_b]);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            discover_run_dirs(empty.path()).unwrap_err(),
            PersistError::NotARunDir(_)
        ));
    }
}
