use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_ENV: &str = "FLEXBAL_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of each input file, keyed by the path as given.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Collects the files of one run and writes them with a manifest.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(dir: PathBuf, command: &str, config: serde_json::Value) -> CliResult<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            manifest: RunManifest {
                schema_version: SCHEMA_VERSION,
                artifact_version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                config,
                seeds: Vec::new(),
                input_digests: BTreeMap::new(),
                outputs: Vec::new(),
                timings: None,
            },
        })
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seeds.push(seed);
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = sha256_file(path)?;
        self.manifest.input_digests.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        write_json_file(&path, value)
    }

    pub fn csv_writer(&mut self, name: &str) -> CliResult<csv::Writer<fs::File>> {
        let path = self.path(name);
        Ok(csv::Writer::from_path(path)?)
    }

    /// Writes the manifest and returns the paths produced.
    pub fn finish(mut self, timings: Option<Timings>) -> CliResult<Vec<PathBuf>> {
        self.manifest.timings = timings;
        let mut outputs: Vec<PathBuf> = self.manifest.outputs.iter().map(|o| self.dir.join(o)).collect();
        let path = self.dir.join(MANIFEST_FILE);
        write_json_file(&path, &self.manifest)?;
        outputs.push(path);
        Ok(outputs)
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::file(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf).map_err(|e| CliError::file(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// `--out`, then `$FLEXBAL_OUT`, then the current directory.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
