//! Artifact metadata and writers. Every artifact carries the tool version,
//! the seed and a SHA-256 digest of each input file so that identical
//! invocations produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qmc_core::sim::RNG_ALGORITHM;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub rng: &'static str,
    pub inputs: Vec<InputDigest>,
}

impl Meta {
    pub fn new(command: &'static str, seed: u64, inputs: &[PathBuf]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| digest(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Meta {
            tool: "qmc",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            rng: RNG_ALGORITHM,
            inputs,
        })
    }

    /// `# key=value` comment lines that open every CSV artifact.
    pub fn csv_header(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool={} version={}", self.tool, self.version);
        let _ = writeln!(out, "# command={}", self.command);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# rng={}", self.rng);
        for input in &self.inputs {
            let _ = writeln!(out, "# input={} sha256={}", input.path, input.sha256);
        }
        out
    }
}

fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

pub fn to_json<T: Serialize>(meta: &Meta, body: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&Wrapped { meta, body })?;
    text.push('\n');
    Ok(text)
}

/// Writes `contents` to `out` when given.
pub fn write_artifact(out: Option<&Path>, contents: &str) -> Result<()> {
    if let Some(path) = out {
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Joins CSV fields with `,` and terminates with LF.
pub fn csv_row<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: ToString,
{
    let mut line = fields
        .into_iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}
