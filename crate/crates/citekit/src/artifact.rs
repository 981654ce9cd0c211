//! Headered line-delimited artifacts.
//!
//! Every JSONL artifact starts with a header line carrying the artifact kind,
//! the seed, the config hash, and the full config, so any output file is
//! self-describing and `report` can verify provenance. Record lines follow.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub artifact: String,
    pub format_version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub config: PipelineConfig,
}

impl ArtifactHeader {
    pub fn new(artifact: &str, config: &PipelineConfig) -> Self {
        ArtifactHeader {
            artifact: artifact.to_owned(),
            format_version: FORMAT_VERSION,
            seed: config.seed,
            config_sha256: config.config_hash_hex(),
            config: config.clone(),
        }
    }

    /// Recomputes the hash of the embedded config and compares it with the
    /// recorded one.
    pub fn verify(&self) -> Result<()> {
        let hash = self.config.config_hash_hex();
        if hash != self.config_sha256 {
            return Err(Error::Contract(format!(
                "artifact `{}`: header hash {} does not match embedded config ({})",
                self.artifact, self.config_sha256, hash
            )));
        }
        if self.seed != self.config.seed {
            return Err(Error::Contract(format!(
                "artifact `{}`: header seed {} does not match config seed {}",
                self.artifact, self.seed, self.config.seed
            )));
        }
        Ok(())
    }
}

pub struct ArtifactWriter {
    writer: BufWriter<File>,
    pub records: usize,
}

impl ArtifactWriter {
    pub fn create(path: &Path, header: &ArtifactHeader) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut writer, header)?;
        writer.write_all(b"\n")?;
        Ok(ArtifactWriter { writer, records: 0 })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        self.records += 1;
        Ok(())
    }

    pub fn write_raw_line(&mut self, line: &str) -> Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.records += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.writer.flush()?;
        Ok(self.records)
    }
}

/// Reads the header line of an artifact and hands back the remaining lines.
pub fn open_artifact(path: &Path) -> Result<(ArtifactHeader, impl Iterator<Item = Result<String>>)> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Contract(format!("{}: empty artifact", path.display())))??;
    let header: ArtifactHeader = serde_json::from_str(&first).map_err(|e| {
        Error::Contract(format!("{}: missing or bad artifact header: {e}", path.display()))
    })?;
    let iter = lines.map(|l| l.map_err(Error::from));
    Ok((header, iter))
}

/// Reads all records of an artifact, checking the header.
pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<(ArtifactHeader, Vec<T>)> {
    let (header, lines) = open_artifact(path)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok((header, records))
}

/// Reads records from a line-delimited file that has no artifact header
/// (plain user input). Lines that are blank are skipped.
pub fn read_plain_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Reads records from a file that may or may not begin with an artifact
/// header line.
pub fn read_jsonl_flexible<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && serde_json::from_str::<ArtifactHeader>(&line).is_ok() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
