use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asreader::analysis::AnalysisError;
use asreader::data::{parse_anonymized, parse_cbt, read_canonical, DataError, Example};
use asreader::ensemble::EnsembleError;
use asreader::model::{CheckpointError, ModelError, FORMAT_VERSION};
use asreader::ndmath::NdError;
use asreader::training::TrainError;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::args::Format;

pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const NUMERIC: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError {
            code: USAGE,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        CliError {
            code: DATA,
            message: m.into(),
        }
    }

    pub fn numeric(m: impl Into<String>) -> Self {
        CliError {
            code: NUMERIC,
            message: m.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Nd(NdError::NonFinite { .. }) => CliError::numeric(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Config(_) => CliError::usage(e.to_string()),
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } => {
                CliError::numeric(e.to_string())
            }
            TrainError::Data(_) => CliError::data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::data(e.to_string())
    }
}

pub fn sha256(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// Inputs and outputs of one command. Outputs are staged in memory and only
/// land on disk, each with its manifest, once the command has succeeded.
pub struct Run {
    command: &'static str,
    argv: Vec<String>,
    seed: Option<u64>,
    config: Value,
    inputs: Vec<(String, String)>,
    artifacts: Vec<(PathBuf, Vec<u8>)>,
    data_dir: Option<PathBuf>,
}

impl Run {
    pub fn new(command: &'static str, argv: Vec<String>, data_dir: Option<PathBuf>) -> Self {
        Run {
            command,
            argv,
            seed: None,
            config: Value::Null,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            data_dir,
        }
    }

    pub fn set_config(&mut self, config: Value, seed: Option<u64>) {
        self.config = config;
        self.seed = seed;
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Reads an input file (dataset paths go through the data directory) and records its hash.
    pub fn read(&mut self, path: &Path, dataset: bool) -> Result<Vec<u8>, CliError> {
        let path = if dataset {
            self.resolve(path)
        } else {
            path.to_path_buf()
        };
        let bytes =
            fs::read(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.inputs
            .push((path.display().to_string(), sha256(&bytes)));
        Ok(bytes)
    }

    pub fn dataset(&mut self, path: &Path, format: Format) -> Result<Vec<Example>, CliError> {
        let bytes = self.read(path, true)?;
        let format = match format {
            Format::Auto => match path.extension().and_then(|e| e.to_str()) {
                Some("txt") => Format::Cbt,
                Some("question") | Some("questions") => Format::News,
                _ => Format::Jsonl,
            },
            f => f,
        };
        let source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
        let parsed = match format {
            Format::Cbt => parse_cbt(bytes.as_slice(), source),
            Format::News => parse_anonymized(bytes.as_slice()),
            _ => read_canonical(bytes.as_slice()),
        };
        parsed.map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.artifacts.push((path.into(), bytes));
    }

    fn manifest(&self, artifact: &Path) -> Value {
        let config_text = self.config.to_string();
        json!({
            "tool": "asreader",
            "version": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": FORMAT_VERSION,
            "command": self.command,
            "argv": self.argv,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": sha256(config_text.as_bytes()),
            "inputs": self.inputs.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect::<Vec<_>>(),
            "artifact": artifact.file_name().map(|n| n.to_string_lossy().into_owned()),
            "artifacts": self
                .artifacts
                .iter()
                .map(|(p, b)| json!({"path": p.display().to_string(), "sha256": sha256(b)}))
                .collect::<Vec<_>>(),
        })
    }

    /// Writes every artifact and its manifest through temporary files, renaming only after all are staged.
    pub fn commit(self) -> Result<(), CliError> {
        let mut staged = Vec::new();
        for (path, bytes) in &self.artifacts {
            let mut manifest =
                serde_json::to_vec_pretty(&self.manifest(path)).expect("manifest serializes");
            manifest.push(b'\n');
            staged.push(stage(path, bytes)?);
            staged.push(stage(&manifest_path(path), &manifest)?);
        }
        for (tmp, target) in staged {
            tmp.persist(&target)
                .map_err(|e| CliError::data(format!("{}: {}", target.display(), e.error)))?;
        }
        Ok(())
    }
}

fn stage(path: &Path, bytes: &[u8]) -> Result<(tempfile::NamedTempFile, PathBuf), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    Ok((tmp, path.to_path_buf()))
}
