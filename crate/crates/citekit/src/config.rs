//! Pipeline configuration: one TOML file drives every stage, and the full
//! config is embedded in each artifact's header for provenance.

use crate::bm25::Bm25Params;
use crate::error::{Error, Result};
use crate::text::MarkerFormat;
use crate::token::TokenizerKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Global seed; all sampling derives from it deterministically.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tokenizer: TokenizerKind,
    pub marker_open: String,
    pub marker_close: String,
    /// Words per retrieval chunk (W).
    pub chunk_words: usize,
    /// Tokens per passive-indexing window.
    pub passive_window: usize,
    /// Max salient entities per document (N_max).
    pub entities_per_doc: usize,
    /// Seed chunks sampled per document for backward augmentation.
    pub seed_chunks_per_doc: usize,
    /// Ranked-list depth requested from the retrieval provider.
    pub retrieval_depth: usize,
    /// Per-document-deduplicated candidate pool size for clusters.
    pub cluster_pool: usize,
    pub max_rename_attempts: u32,
    /// Keep backward citations that resolve anywhere in the registry, not
    /// just inside the cluster.
    pub lenient_citations: bool,
    pub bm25: Bm25Params,
    pub client: ClientConfig,
    pub inputs: Vec<CorpusInput>,
    pub prompts_dir: Option<PathBuf>,
    pub entail_threshold: f64,
    /// Tokens per entailment evidence chunk.
    pub entail_chunk_tokens: usize,
    /// Max evidence chunks checked per (claim, citation).
    pub entail_max_chunks: usize,
    /// Distinctiveness bin upper bounds: Easy ≤ .0, Medium ≤ .1, Hard ≤ .2,
    /// Very Hard above.
    pub distinct_bins: (usize, usize, usize),
    /// Worker pool size; 0 means one per logical core. Scheduling-only:
    /// artifacts are identical for any value, so it is not part of the
    /// config hash or headers.
    #[serde(skip_serializing)]
    pub jobs: usize,
    /// Bounded in-flight model calls. Scheduling-only, like `jobs`.
    #[serde(skip_serializing)]
    pub max_in_flight: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            tokenizer: TokenizerKind::Whitespace,
            marker_open: "<|".to_owned(),
            marker_close: "|>".to_owned(),
            chunk_words: 100,
            passive_window: 768,
            entities_per_doc: 10,
            seed_chunks_per_doc: 3,
            retrieval_depth: 200,
            cluster_pool: 10,
            max_rename_attempts: 5,
            lenient_citations: false,
            bm25: Bm25Params::default(),
            client: ClientConfig::default(),
            inputs: Vec::new(),
            prompts_dir: None,
            entail_threshold: 0.5,
            entail_chunk_tokens: 512,
            entail_max_chunks: 5,
            distinct_bins: (3, 30, 300),
            jobs: 0,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorpusInput {
    pub path: PathBuf,
    pub source: crate::corpus::Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClientConfig {
    pub kind: ClientKind,
    /// Synthetic noisy-citation rate for the mock backward generator.
    pub mock_noise_rate: f64,
    /// Abstention rate for the mock router.
    pub mock_abstain_rate: f64,
    pub retry_attempts: u32,
    pub retry_base_delay_ms: u64,
    pub temperature: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            kind: ClientKind::Mock,
            mock_noise_rate: 0.05,
            mock_abstain_rate: 0.3,
            retry_attempts: 5,
            retry_base_delay_ms: 250,
            temperature: 0.7,
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML config; unknown keys are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_words == 0 {
            return Err(Error::Config("chunk_words must be ≥ 1".to_owned()));
        }
        if self.passive_window == 0 {
            return Err(Error::Config("passive_window must be ≥ 1".to_owned()));
        }
        if self.marker_open.is_empty() || self.marker_close.is_empty() {
            return Err(Error::Config("marker delimiters must be non-empty".to_owned()));
        }
        if !(0.0..=1.0).contains(&self.entail_threshold) {
            return Err(Error::Config("entail_threshold must be in [0,1]".to_owned()));
        }
        let (a, b, c) = self.distinct_bins;
        if !(a < b && b < c) {
            return Err(Error::Config("distinct_bins must be strictly increasing".to_owned()));
        }
        Ok(())
    }

    pub fn marker(&self) -> MarkerFormat {
        MarkerFormat::new(&self.marker_open, &self.marker_close)
    }

    /// Canonical serialization used for hashing; field order is fixed by the
    /// struct definition.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.canonical_toml().as_bytes());
        digest.into()
    }

    pub fn config_hash_hex(&self) -> String {
        self.config_hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let round: PipelineConfig = toml::from_str(&c.canonical_toml()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::parse("bogus_key = 1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 99;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), PipelineConfig::default().config_hash());
    }
}
