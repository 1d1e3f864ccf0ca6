use std::fmt;
use std::path::{Path, PathBuf};

use drape_core::dataset::run_with_jobs;
use drape_core::image::GrayImage;
use drape_core::material::MaterialParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 3).
    Config(String),
    /// Failure while running (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

pub fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn runtime_err(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_json_or_default<T: DeserializeOwned + Default>(
    path: Option<&PathBuf>,
) -> Result<T, CliError> {
    path.map(|p| read_json(p))
        .transpose()
        .map(Option::unwrap_or_default)
}

/// A material with an optional display name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialEntry {
    Named {
        name: String,
        params: MaterialParams,
    },
    Bare(MaterialParams),
}

/// Reads a JSON list of materials, either bare parameter objects or
/// `{"name", "params"}` entries.
pub fn read_materials(path: &Path) -> Result<(Vec<String>, Vec<MaterialParams>), CliError> {
    let entries: Vec<MaterialEntry> = read_json(path)?;
    if entries.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no materials",
            path.display()
        )));
    }
    let mut names = Vec::new();
    let mut params = Vec::new();
    for (i, e) in entries.into_iter().enumerate() {
        let (n, p) = match e {
            MaterialEntry::Named { name, params } => (name, params),
            MaterialEntry::Bare(p) => (format!("m{i}"), p),
        };
        p.validate()
            .map_err(|e| CliError::Config(format!("{}: material {i}: {e}", path.display())))?;
        names.push(n);
        params.push(p);
    }
    Ok((names, params))
}

pub fn read_params(path: &Path) -> Result<MaterialParams, CliError> {
    let p: MaterialParams = read_json(path)?;
    p.validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(p)
}

pub fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    run_with_jobs(jobs, f).map_err(config_err)?
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    argv: Vec<String>,
    seed: Option<u64>,
    jobs: Option<usize>,
    config_hash: String,
    config: &'a serde_json::Value,
    outputs: &'a [String],
    wall_time_s: f64,
}

/// Output directory, global options, the effective configuration and the
/// list of written artifacts.
pub struct RunContext {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    config: serde_json::Value,
    outputs: Vec<String>,
}

impl RunContext {
    pub fn new(out: PathBuf, seed: Option<u64>, jobs: Option<usize>) -> Self {
        Self {
            out,
            seed,
            jobs,
            config: serde_json::Value::Null,
            outputs: Vec::new(),
        }
    }

    pub fn create_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Config(format!("{}: {e}", self.out.display())))
    }

    pub fn set_config<T: Serialize>(&mut self, cfg: &T) -> Result<(), CliError> {
        self.config = serde_json::to_value(cfg).map_err(runtime_err)?;
        Ok(())
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_png(&mut self, name: &str, img: &GrayImage) -> Result<(), CliError> {
        let p = self.path(name);
        img.write_png(&p).map_err(runtime_err)
    }

    pub fn write_manifest(&mut self, subcommand: &str, wall_time_s: f64) -> Result<(), CliError> {
        let canonical = serde_json::to_vec(&self.config).map_err(runtime_err)?;
        let config_hash = hex::encode(Sha256::digest(&canonical));
        let m = RunManifest {
            tool: "drape",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            argv: std::env::args().collect(),
            seed: self.seed,
            jobs: self.jobs,
            config_hash,
            config: &self.config,
            outputs: &self.outputs,
            wall_time_s,
        };
        let text = serde_json::to_string_pretty(&m).map_err(runtime_err)?;
        std::fs::write(self.out.join("run.json"), text + "\n").map_err(runtime_err)
    }
}
