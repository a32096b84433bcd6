//! Run records: enough to re-run a subcommand and check its inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use densratio::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct SeedRecord {
    pub value: u64,
    pub source: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub threads: Option<usize>,
    pub seed: Option<SeedRecord>,
    pub inputs: Vec<InputRecord>,
    pub params: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, argv: Vec<String>, threads: Option<usize>) -> Self {
        Self {
            tool: "densratio",
            version: densratio::VERSION,
            command: command.to_string(),
            argv,
            threads,
            seed: None,
            inputs: Vec::new(),
            params: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let mut file = fs::File::open(path)?;
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = file.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputRecord { path: path.display().to_string(), bytes, sha256 });
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.params.insert(key.to_string(), v);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Log to stderr and, once `primary` exists, write `<primary>.prov.json` beside it.
    pub fn emit(&self, primary: &Path) -> Result<()> {
        let line = serde_json::to_string(self)?;
        eprintln!("{line}");
        if primary.exists() {
            let mut path = primary.as_os_str().to_owned();
            path.push(".prov.json");
            fs::write(PathBuf::from(path), serde_json::to_string_pretty(self)? + "\n")?;
        }
        Ok(())
    }
}
