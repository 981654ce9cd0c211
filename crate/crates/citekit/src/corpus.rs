//! Corpus ingestion, the unique-title registry, and word-level chunking.

use crate::error::{Error, Result};
use crate::model::GeneratorClient;
use crate::prompt::{render, PromptSet};
use crate::text::{normalize_title, word_spans};
use crate::token::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Wikipedia,
    Commoncrawl,
    Arxiv,
    Repliqa,
    Other,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Source::Wikipedia => "wikipedia",
            Source::Commoncrawl => "commoncrawl",
            Source::Arxiv => "arxiv",
            Source::Repliqa => "repliqa",
            Source::Other => "other",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "wikipedia" => Ok(Source::Wikipedia),
            "commoncrawl" => Ok(Source::Commoncrawl),
            "arxiv" => Ok(Source::Arxiv),
            "repliqa" => Ok(Source::Repliqa),
            "other" => Ok(Source::Other),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// One corpus entry: content plus its human-readable identifier title.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document {
    pub doc_key: String,
    pub source: Source,
    pub title: String,
    pub content: String,
    pub word_count: usize,
    pub token_count: usize,
}

/// Input record shape for ingestion; extra fields are tolerated.
#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    doc_key: Option<String>,
    #[serde(default)]
    title: Option<String>,
    content: String,
    #[serde(default)]
    source: Option<Source>,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct IngestStats {
    pub ingested: usize,
    pub skipped_empty: usize,
    pub malformed: usize,
}

/// Documents ordered by (source, doc_key), with a key → position index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    index: HashMap<String, usize>,
    pub stats: IngestStats,
}

impl Corpus {
    pub fn from_documents(mut documents: Vec<Document>) -> Result<Self> {
        documents.sort_by(|a, b| (a.source, &a.doc_key).cmp(&(b.source, &b.doc_key)));
        let mut index = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if index.insert(d.doc_key.clone(), i).is_some() {
                return Err(Error::Contract(format!(
                    "duplicate doc_key `{}` in corpus",
                    d.doc_key
                )));
            }
        }
        Ok(Corpus {
            documents,
            index,
            stats: IngestStats::default(),
        })
    }

    pub fn get(&self, doc_key: &str) -> Option<&Document> {
        self.index.get(doc_key).map(|&i| &self.documents[i])
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.token_count).sum()
    }
}

/// Reads line-delimited records, appending Documents to `documents` and
/// updating `stats`. Records with empty content are skipped and counted;
/// malformed lines are skipped with a diagnostic and counted. The
/// `default_source` applies to records without a source field; records
/// without a doc_key get `{key_scope}{line:07}`.
#[allow(clippy::too_many_arguments)]
pub fn ingest_into<R: BufRead>(
    reader: R,
    default_source: Source,
    tokenizer: &dyn Tokenizer,
    key_scope: &str,
    documents: &mut Vec<Document>,
    stats: &mut IngestStats,
    seen_keys: &mut HashSet<String>,
    mut diag: impl FnMut(&str),
) -> Result<()> {
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?; // unreadable stream is fatal
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                stats.malformed += 1;
                diag(&format!("line {}: malformed record: {e}", lineno + 1));
                continue;
            }
        };
        if raw.content.trim().is_empty() {
            stats.skipped_empty += 1;
            continue;
        }
        let source = raw.source.unwrap_or(default_source);
        let doc_key = raw
            .doc_key
            .filter(|k| !k.trim().is_empty())
            .unwrap_or_else(|| format!("{key_scope}{:07}", lineno + 1));
        if !seen_keys.insert(doc_key.clone()) {
            stats.malformed += 1;
            diag(&format!("line {}: duplicate doc_key `{doc_key}`", lineno + 1));
            continue;
        }
        let word_count = raw.content.split_whitespace().count();
        let token_count = tokenizer.count(&raw.content);
        documents.push(Document {
            doc_key,
            source,
            title: raw.title.unwrap_or_default(),
            content: raw.content,
            word_count,
            token_count,
        });
        stats.ingested += 1;
    }
    Ok(())
}

/// Single-stream convenience wrapper around [`ingest_into`].
pub fn ingest<R: BufRead>(
    reader: R,
    default_source: Source,
    tokenizer: &dyn Tokenizer,
    diag: impl FnMut(&str),
) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut stats = IngestStats::default();
    let mut seen = HashSet::new();
    let scope = format!("{default_source}:");
    ingest_into(
        reader,
        default_source,
        tokenizer,
        &scope,
        &mut documents,
        &mut stats,
        &mut seen,
        diag,
    )?;
    let mut corpus = Corpus::from_documents(documents)?;
    corpus.stats = stats;
    Ok(corpus)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> Result<()> {
    for doc in &corpus.documents {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut documents = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        documents.push(serde_json::from_str(&line)?);
    }
    Corpus::from_documents(documents)
}

/// One applied title change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenameEntry {
    pub doc_key: String,
    pub old_title: String,
    pub new_title: String,
    pub attempt_index: u32,
}

/// The global identifier space: canonical title → doc_key, plus the full
/// history of applied renames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TitleRegistry {
    pub entries: BTreeMap<String, String>,
    pub rename_log: Vec<RenameEntry>,
    by_key: BTreeMap<String, String>,
}

impl TitleRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_title(&self, title: &str) -> bool {
        self.entries.contains_key(title)
    }

    pub fn doc_key_of(&self, title: &str) -> Option<&str> {
        self.entries.get(title).map(String::as_str)
    }

    pub fn title_of(&self, doc_key: &str) -> Option<&str> {
        self.by_key.get(doc_key).map(String::as_str)
    }

    pub fn titles(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn insert(&mut self, title: String, doc_key: String) {
        self.by_key.insert(doc_key.clone(), title.clone());
        self.entries.insert(title, doc_key);
    }
}

#[derive(Debug, Clone)]
pub struct TitleAssignOptions {
    pub max_rename_attempts: u32,
}

impl Default for TitleAssignOptions {
    fn default() -> Self {
        TitleAssignOptions {
            max_rename_attempts: 5,
        }
    }
}

const EXCERPT_WORDS: usize = 60;

fn excerpt(content: &str) -> String {
    content
        .split_whitespace()
        .take(EXCERPT_WORDS)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Assigns globally unique canonical titles. Untitled documents get generated
/// titles; collisions are renamed via the namer for up to
/// `max_rename_attempts` tries, then fall back to the smallest free integer
/// suffix `title (k)`. Document titles are rewritten in place to the
/// canonical form. Idempotent on its own output: a second run applies no
/// renames and reproduces the same registry.
pub fn assign_unique_titles(
    corpus: &mut Corpus,
    namer: &dyn GeneratorClient,
    prompts: &PromptSet,
    opts: &TitleAssignOptions,
) -> Result<TitleRegistry> {
    if corpus.is_empty() {
        return Err(Error::Contract("corpus is empty".to_owned()));
    }
    let mut registry = TitleRegistry::default();

    for doc in &mut corpus.documents {
        let raw = normalize_title(&doc.title);
        let mut current = raw.clone();
        let mut attempt: u32 = 0;
        let mut namer_failed = false;

        while current.is_empty() || registry.contains_title(&current) {
            attempt += 1;
            if namer_failed || attempt > opts.max_rename_attempts {
                let base = if current.is_empty() {
                    "Untitled".to_owned()
                } else {
                    current.clone()
                };
                let mut k = 1u64;
                loop {
                    let candidate = format!("{base} ({k})");
                    if !registry.contains_title(&candidate) {
                        current = candidate;
                        break;
                    }
                    k += 1;
                }
                // the integer suffix walked to a free slot
                debug_assert!(!registry.contains_title(&current));
                break;
            }
            let doc_excerpt = excerpt(&doc.content);
            let template = if current.is_empty() {
                &prompts.title_generate
            } else {
                &prompts.title_rename
            };
            let mut vars = BTreeMap::new();
            vars.insert("excerpt", doc_excerpt.as_str());
            vars.insert("current_title", current.as_str());
            let mut prompt = render(template, &vars);
            // attempt counter nudges non-deterministic namers toward variety
            // and gives seeded mocks a fresh hash per try
            prompt.push_str(&format!("\nAttempt: {attempt}"));
            match namer.generate(&prompt) {
                Ok(candidate) => {
                    let candidate = normalize_title(&candidate);
                    if !candidate.is_empty()
                        && candidate != current
                        && !registry.contains_title(&candidate)
                    {
                        current = candidate;
                        break;
                    }
                    // colliding or unusable candidate: try again
                }
                Err(_) => {
                    namer_failed = true;
                }
            }
        }

        if current != raw {
            registry.rename_log.push(RenameEntry {
                doc_key: doc.doc_key.clone(),
                old_title: raw,
                new_title: current.clone(),
                attempt_index: attempt,
            });
        }
        doc.title = current.clone();
        registry.insert(current, doc.doc_key.clone());
    }
    Ok(registry)
}

/// Rebuilds registry entries from the corpus's raw titles and a rename log.
/// Used to verify that the log fully explains the registry.
pub fn replay_rename_log(
    raw_titles: &[(String, String)], // (doc_key, raw title) in corpus order
    log: &[RenameEntry],
) -> Result<BTreeMap<String, String>> {
    let mut titles: BTreeMap<String, String> = raw_titles
        .iter()
        .map(|(k, t)| (k.clone(), normalize_title(t)))
        .collect();
    for entry in log {
        let slot = titles.get_mut(&entry.doc_key).ok_or_else(|| {
            Error::Contract(format!("rename log names unknown doc_key `{}`", entry.doc_key))
        })?;
        if *slot != entry.old_title {
            return Err(Error::Contract(format!(
                "rename log mismatch for `{}`: expected old title {:?}, had {:?}",
                entry.doc_key, entry.old_title, slot
            )));
        }
        *slot = entry.new_title.clone();
    }
    let mut entries = BTreeMap::new();
    for (key, title) in titles {
        if entries.insert(title.clone(), key).is_some() {
            return Err(Error::Contract(format!(
                "replay produced duplicate title {title:?}"
            )));
        }
    }
    Ok(entries)
}

#[derive(Serialize, Deserialize)]
struct RegistryLine {
    title: String,
    doc_key: String,
}

#[derive(Serialize, Deserialize)]
struct SectionLine {
    section: String,
}

/// Line-delimited registry: entry lines, a `{"section":"rename_log"}`
/// divider, then rename entries.
pub fn write_registry<W: Write>(registry: &TitleRegistry, mut w: W) -> Result<()> {
    for (title, doc_key) in &registry.entries {
        serde_json::to_writer(
            &mut w,
            &RegistryLine {
                title: title.clone(),
                doc_key: doc_key.clone(),
            },
        )?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut w, &SectionLine { section: "rename_log".to_owned() })?;
    w.write_all(b"\n")?;
    for entry in &registry.rename_log {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_registry<R: BufRead>(reader: R) -> Result<TitleRegistry> {
    let mut registry = TitleRegistry::default();
    let mut in_log = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !in_log {
            if let Ok(section) = serde_json::from_str::<SectionLine>(&line) {
                if section.section == "rename_log" {
                    in_log = true;
                    continue;
                }
            }
            let entry: RegistryLine = serde_json::from_str(&line)?;
            registry.insert(entry.title, entry.doc_key);
        } else {
            registry.rename_log.push(serde_json::from_str(&line)?);
        }
    }
    Ok(registry)
}

/// A W-word slice of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_key: String,
    pub chunk_index: usize,
    pub words: Vec<String>,
    /// Byte offsets into the document content, from the start of the first
    /// word to the end of the last.
    pub char_span: (usize, usize),
}

impl Chunk {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

/// Splits a document into ⌈word_count / w⌉ chunks; all but the last have
/// exactly `w` words. Zero-word documents produce no chunks.
pub fn chunk_document(doc: &Document, w: usize) -> Result<Vec<Chunk>> {
    if w == 0 {
        return Err(Error::Contract("chunk width W must be ≥ 1".to_owned()));
    }
    let spans = word_spans(&doc.content);
    let mut chunks = Vec::with_capacity(spans.len().div_ceil(w));
    for (chunk_index, group) in spans.chunks(w).enumerate() {
        let words = group
            .iter()
            .map(|&(s, e)| doc.content[s..e].to_owned())
            .collect();
        chunks.push(Chunk {
            doc_key: doc.doc_key.clone(),
            chunk_index,
            words,
            char_span: (group[0].0, group[group.len() - 1].1),
        });
    }
    Ok(chunks)
}

/// Chunks every document; output ordered by (source, doc_key, chunk_index).
pub fn chunk_corpus(corpus: &Corpus, w: usize) -> Result<Vec<Chunk>> {
    use rayon::prelude::*;
    if w == 0 {
        return Err(Error::Contract("chunk width W must be ≥ 1".to_owned()));
    }
    let per_doc: Vec<Vec<Chunk>> = corpus
        .documents
        .par_iter()
        .map(|d| chunk_document(d, w))
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}
