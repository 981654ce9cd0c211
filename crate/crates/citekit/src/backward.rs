//! Backward augmentation: fact → identifier data from cross-document chunk
//! clusters, with citation filtering and marker finalization.

use crate::corpus::{Chunk, Corpus, TitleRegistry};
use crate::error::{Error, Result};
use crate::model::{fnv1a64, GeneratorClient};
use crate::prompt::render;
use crate::records::{PretrainRecord, Variant};
use crate::text::{fuzzy_ratio, MarkerFormat, FUZZY_THRESHOLD};
use crate::token::Tokenizer;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Any source of ranked chunk candidates for a query. BM25 is the built-in
/// provider; dense or cached ranked lists plug in through the same trait.
pub trait RankedChunkProvider: Send + Sync {
    /// Top-k chunk indices (into the chunk slice the provider was built
    /// over) with scores, descending.
    fn retrieve(&self, query: &str, k: usize) -> Vec<(usize, f64)>;
}

/// BM25-backed provider over a chunk slice.
pub struct Bm25Provider<'a> {
    index: &'a crate::bm25::InvertedIndex,
    /// maps index chunk refs back to positions in the caller's chunk slice
    ref_to_pos: Vec<usize>,
}

impl<'a> Bm25Provider<'a> {
    pub fn new(index: &'a crate::bm25::InvertedIndex, chunks: &[Chunk]) -> Self {
        let mut pos_of: BTreeMap<(&str, u32), usize> = BTreeMap::new();
        for (i, c) in chunks.iter().enumerate() {
            pos_of.insert((c.doc_key.as_str(), c.chunk_index as u32), i);
        }
        let ref_to_pos = (0..index.n_chunks())
            .map(|r| {
                let (key, idx) = index.key(r as u32);
                pos_of[&(key, idx)]
            })
            .collect();
        Bm25Provider { index, ref_to_pos }
    }
}

impl RankedChunkProvider for Bm25Provider<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Vec<(usize, f64)> {
        self.index
            .retrieve(query, k)
            .unwrap_or_default()
            .into_iter()
            .map(|(r, s)| (self.ref_to_pos[r as usize], s))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub doc_key: String,
    pub chunk_index: usize,
    pub title: String,
    pub text: String,
}

/// 2–4 chunks from distinct documents; the seed chunk is first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkCluster {
    pub members: Vec<ClusterMember>,
}

impl ChunkCluster {
    pub fn titles(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.title.as_str()).collect()
    }

    pub fn doc_keys(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.doc_key.as_str()).collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !(2..=4).contains(&self.members.len()) {
            return Err(Error::Contract(format!(
                "cluster size {} outside 2–4",
                self.members.len()
            )));
        }
        let mut keys: Vec<&str> = self.doc_keys();
        keys.sort();
        keys.dedup();
        if keys.len() != self.members.len() {
            return Err(Error::Contract("cluster has two chunks of one document".to_owned()));
        }
        Ok(())
    }
}

/// Uniformly samples min(per_doc, #chunks) chunks per document without
/// replacement. The draw depends only on (seed, doc_key). Returns positions
/// into `chunks`, ordered by (doc_key, chunk_index).
pub fn sample_seed_chunks(chunks: &[Chunk], per_doc: usize, seed: u64) -> Vec<usize> {
    let mut by_doc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in chunks.iter().enumerate() {
        by_doc.entry(c.doc_key.as_str()).or_default().push(i);
    }
    let mut out = Vec::new();
    for (doc_key, positions) in by_doc {
        let mut positions = positions;
        positions.sort_by_key(|&i| chunks[i].chunk_index);
        let take = per_doc.min(positions.len());
        if take == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(seed, &["seed-chunks", doc_key]));
        let mut picked: Vec<usize> = sample(&mut rng, positions.len(), take)
            .into_iter()
            .map(|j| positions[j])
            .collect();
        picked.sort_by_key(|&i| chunks[i].chunk_index);
        out.extend(picked);
    }
    out
}

/// Forms one cluster around a seed chunk: retrieve `depth` candidates for the
/// seed text, keep the first hit per foreign document, truncate to `pool`,
/// then join m ~ Uniform{1,2,3} of them with the seed (all available when
/// fewer than m exist). Returns None when no foreign candidate exists.
#[allow(clippy::too_many_arguments)]
pub fn form_cluster(
    provider: &dyn RankedChunkProvider,
    chunks: &[Chunk],
    corpus: &Corpus,
    registry: &TitleRegistry,
    seed_pos: usize,
    rng: &mut impl Rng,
    depth: usize,
    pool: usize,
) -> Option<ChunkCluster> {
    let seed_chunk = &chunks[seed_pos];
    let ranked = provider.retrieve(&seed_chunk.text(), depth);
    let mut candidates: Vec<usize> = Vec::new();
    let mut seen_docs: Vec<&str> = vec![&seed_chunk.doc_key];
    for (pos, _) in ranked {
        let c = &chunks[pos];
        if seen_docs.contains(&c.doc_key.as_str()) {
            continue;
        }
        seen_docs.push(&c.doc_key);
        candidates.push(pos);
        if candidates.len() == pool {
            break;
        }
    }
    // the draw happens before the availability check so the size
    // distribution is not skewed by skipped seeds
    let m = rng.gen_range(1..=3usize);
    if candidates.is_empty() {
        return None;
    }
    let take = m.min(candidates.len());

    let member = |pos: usize| -> ClusterMember {
        let c = &chunks[pos];
        let title = registry
            .title_of(&c.doc_key)
            .or_else(|| corpus.get(&c.doc_key).map(|d| d.title.as_str()))
            .unwrap_or("")
            .to_owned();
        ClusterMember {
            doc_key: c.doc_key.clone(),
            chunk_index: c.chunk_index,
            title,
            text: c.text(),
        }
    };

    let mut members = vec![member(seed_pos)];
    members.extend(candidates[..take].iter().map(|&p| member(p)));
    Some(ChunkCluster { members })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatus {
    Kept,
    Filtered,
}

/// One generated instruction-answer pair with per-claim source markers.
/// Filtered pairs are kept in the output stream for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardPair {
    pub instruction: String,
    pub answer: String,
    pub cited_titles: Vec<String>,
    pub cluster_doc_keys: Vec<String>,
    pub cluster_titles: Vec<String>,
    pub status: PairStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_reason: Option<String>,
}

impl BackwardPair {
    fn filtered(instruction: &str, answer: &str, cluster: &ChunkCluster, reason: &str) -> Self {
        BackwardPair {
            instruction: instruction.to_owned(),
            answer: answer.to_owned(),
            cited_titles: Vec::new(),
            cluster_doc_keys: cluster.doc_keys().iter().map(|s| (*s).to_owned()).collect(),
            cluster_titles: cluster.titles().iter().map(|s| (*s).to_owned()).collect(),
            status: PairStatus::Filtered,
            filter_reason: Some(reason.to_owned()),
        }
    }
}

const SOURCE_OPEN: &str = "<source>";
const SOURCE_CLOSE: &str = "</source>";

fn source_spans(text: &str) -> Vec<(usize, usize, &str)> {
    MarkerFormat::new(SOURCE_OPEN, SOURCE_CLOSE).spans(text)
}

/// True when the source tags are balanced and non-nested.
fn source_tags_well_formed(text: &str) -> bool {
    let mut pos = 0;
    loop {
        let open = text[pos..].find(SOURCE_OPEN).map(|i| pos + i);
        let close = text[pos..].find(SOURCE_CLOSE).map(|i| pos + i);
        match (open, close) {
            (None, None) => return true,
            (None, Some(_)) => return false,
            (Some(o), Some(c)) if c < o => return false,
            (Some(o), _) => {
                let inner_start = o + SOURCE_OPEN.len();
                match text[inner_start..].find(SOURCE_CLOSE) {
                    None => return false,
                    Some(rel) => {
                        let inner = &text[inner_start..inner_start + rel];
                        if inner.contains(SOURCE_OPEN) {
                            return false;
                        }
                        pos = inner_start + rel + SOURCE_CLOSE.len();
                    }
                }
            }
        }
    }
}

/// Renders the cluster's documents into the prompt and parses the response:
/// first paragraph is the instruction, the rest is the answer. Responses
/// without that structure or without any source marker come back filtered.
pub fn generate_backward_pair(
    cluster: &ChunkCluster,
    gen: &dyn GeneratorClient,
    template: &str,
) -> Result<StageResult> {
    let mut docs = String::new();
    for m in &cluster.members {
        docs.push_str(&format!("Title: {}\nText: {}\n\n", m.title, m.text));
    }
    let mut vars = BTreeMap::new();
    vars.insert("documents", docs.trim_end());
    let prompt = render(template, &vars);
    let response = match gen.generate(&prompt) {
        Ok(r) => r,
        Err(e) => return Ok(StageResult::Skipped(format!("generation failed: {e}"))),
    };

    let trimmed = response.trim();
    let (instruction, answer) = match trimmed.split_once("\n\n") {
        Some((i, a)) if !i.trim().is_empty() && !a.trim().is_empty() => {
            (i.trim().to_owned(), a.trim().to_owned())
        }
        _ => {
            return Ok(StageResult::Pair(BackwardPair::filtered(
                trimmed,
                "",
                cluster,
                "unparseable",
            )))
        }
    };

    if source_spans(&answer).is_empty() {
        return Ok(StageResult::Pair(BackwardPair::filtered(
            &instruction,
            &answer,
            cluster,
            "no citations",
        )));
    }

    Ok(StageResult::Pair(BackwardPair {
        instruction,
        answer,
        cited_titles: Vec::new(),
        cluster_doc_keys: cluster.doc_keys().iter().map(|s| (*s).to_owned()).collect(),
        cluster_titles: cluster.titles().iter().map(|s| (*s).to_owned()).collect(),
        status: PairStatus::Kept,
        filter_reason: None,
    }))
}

#[derive(Debug)]
pub enum StageResult {
    Pair(BackwardPair),
    Skipped(String),
}

/// Generic-placeholder citation patterns: a `document`/`title`/`doc`/`source`
/// prefix followed by a separator or number, or a bare ordinal.
pub fn is_noisy_citation(span: &str) -> bool {
    let s = span.trim().to_lowercase();
    if s.is_empty() {
        return true;
    }
    // bare ordinals: "1", "2nd", "third"
    if s.chars().next().unwrap().is_ascii_digit()
        && s.chars().all(|c| c.is_ascii_digit() || c.is_ascii_alphabetic())
        && s.chars().filter(|c| c.is_ascii_alphabetic()).count() <= 2
    {
        return true;
    }
    const ORDINAL_WORDS: [&str; 6] = ["first", "second", "third", "fourth", "fifth", "sixth"];
    if ORDINAL_WORDS.contains(&s.as_str()) {
        return true;
    }
    for prefix in ["document", "title", "doc", "source"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            let rest = rest.trim_start();
            if rest.is_empty() {
                return true;
            }
            // separator ("document: xx", "doc #2") or a number ("document 1")
            if rest.starts_with([':', '#', '-', '.', '=']) {
                return true;
            }
            if rest.chars().next().unwrap().is_ascii_digit() {
                return true;
            }
        }
    }
    false
}

fn resolve_citation<'t>(span: &str, titles: &[&'t str]) -> Option<&'t str> {
    let mut best: Option<(&str, f64)> = None;
    for &title in titles {
        let r = fuzzy_ratio(span, title);
        if r >= FUZZY_THRESHOLD && best.is_none_or(|(_, br)| r > br) {
            best = Some((title, r));
        }
    }
    best.map(|(t, _)| t)
}

/// Filters noisy-pattern and unresolvable citations and canonicalizes the
/// rest to registry titles. Strict mode resolves against the cluster's
/// titles; lenient mode accepts any registry title.
pub fn filter_invalid_citations(
    mut pair: BackwardPair,
    registry: &TitleRegistry,
    lenient: bool,
) -> BackwardPair {
    if pair.status == PairStatus::Filtered {
        return pair;
    }
    if !source_tags_well_formed(&pair.answer) {
        pair.status = PairStatus::Filtered;
        pair.filter_reason = Some("malformed markers".to_owned());
        pair.cited_titles.clear();
        return pair;
    }

    let cluster_titles: Vec<&str> = pair.cluster_titles.iter().map(String::as_str).collect();
    let registry_titles: Vec<&str> = registry.titles().collect();
    let pool: &[&str] = if lenient { &registry_titles } else { &cluster_titles };

    let spans = source_spans(&pair.answer);
    let mut rewrites: Vec<(usize, usize, String)> = Vec::new();
    let mut cited: Vec<String> = Vec::new();
    for (s, e, inner) in spans {
        if is_noisy_citation(inner) {
            pair.status = PairStatus::Filtered;
            pair.filter_reason = Some(format!("noisy citation {inner:?}"));
            pair.cited_titles.clear();
            return pair;
        }
        match resolve_citation(inner, pool) {
            Some(title) => {
                if !cited.iter().any(|c| c == title) {
                    cited.push(title.to_owned());
                }
                rewrites.push((s, e, title.to_owned()));
            }
            None => {
                pair.status = PairStatus::Filtered;
                pair.filter_reason = Some(format!("unresolvable citation {inner:?}"));
                pair.cited_titles.clear();
                return pair;
            }
        }
    }

    let mut answer = String::with_capacity(pair.answer.len());
    let mut cursor = 0;
    for (s, e, title) in rewrites {
        answer.push_str(&pair.answer[cursor..s]);
        answer.push_str(SOURCE_OPEN);
        answer.push_str(&title);
        answer.push_str(SOURCE_CLOSE);
        cursor = e;
    }
    answer.push_str(&pair.answer[cursor..]);
    pair.answer = answer;
    pair.cited_titles = cited;
    pair
}

/// Rewrites `<source>T</source>` spans to the canonical marker format and
/// emits the training record. Pairs whose tags turn out malformed are
/// filtered here.
pub fn finalize_markers(
    pair: BackwardPair,
    marker: &MarkerFormat,
    tokenizer: &dyn Tokenizer,
) -> (BackwardPair, Option<PretrainRecord>) {
    if pair.status == PairStatus::Filtered {
        return (pair, None);
    }
    if !source_tags_well_formed(&pair.answer) {
        let mut pair = pair;
        pair.status = PairStatus::Filtered;
        pair.filter_reason = Some("malformed markers".to_owned());
        return (pair, None);
    }
    let mut answer = String::with_capacity(pair.answer.len());
    let mut cursor = 0;
    for (s, e, inner) in source_spans(&pair.answer) {
        answer.push_str(&pair.answer[cursor..s]);
        answer.push_str(&marker.wrap(inner));
        cursor = e;
    }
    answer.push_str(&pair.answer[cursor..]);

    let text = format!("{}\n\n{}", pair.instruction, answer);
    let token_count = tokenizer.count(&text);
    let record = PretrainRecord {
        text,
        doc_keys: pair.cluster_doc_keys.clone(),
        variant: Variant::Backward,
        token_count,
    };
    (pair, Some(record))
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct BackwardStats {
    pub seeds: usize,
    pub clusters_formed: usize,
    pub clusters_skipped: usize,
    pub generation_failures: usize,
    pub pairs_kept: usize,
    pub pairs_filtered: usize,
    pub filter_reasons: BTreeMap<String, usize>,
    pub tokens_kept: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    pub per_doc_seeds: usize,
    pub seed: u64,
    pub retrieval_depth: usize,
    pub cluster_pool: usize,
    pub lenient: bool,
}

/// Runs the whole backward direction: sample seed chunks, form clusters,
/// generate pairs in parallel, filter, and finalize. Commit order is
/// deterministic by (doc_key, chunk_index) of the seed chunk regardless of
/// scheduling; each cluster's sampling stream is keyed by
/// (seed, doc_key, chunk_index).
#[allow(clippy::too_many_arguments)]
pub fn run_backward(
    corpus: &Corpus,
    registry: &TitleRegistry,
    chunks: &[Chunk],
    provider: &dyn RankedChunkProvider,
    gen: &dyn GeneratorClient,
    prompts: &crate::prompt::PromptSet,
    opts: &BackwardOptions,
    marker: &MarkerFormat,
    tokenizer: &dyn Tokenizer,
    mut diag: impl FnMut(&str),
) -> Result<(Vec<BackwardPair>, Vec<PretrainRecord>, BackwardStats)> {
    use rayon::prelude::*;

    let seeds = sample_seed_chunks(chunks, opts.per_doc_seeds, opts.seed);
    let mut stats = BackwardStats {
        seeds: seeds.len(),
        ..Default::default()
    };

    let clusters: Vec<Option<ChunkCluster>> = seeds
        .par_iter()
        .map(|&pos| {
            let c = &chunks[pos];
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(
                opts.seed,
                &["cluster", &c.doc_key, &c.chunk_index.to_string()],
            ));
            form_cluster(
                provider,
                chunks,
                corpus,
                registry,
                pos,
                &mut rng,
                opts.retrieval_depth,
                opts.cluster_pool,
            )
        })
        .collect();

    let mut formed: Vec<ChunkCluster> = Vec::new();
    for (cluster, &pos) in clusters.into_iter().zip(&seeds) {
        match cluster {
            Some(c) => {
                c.check_invariants()?;
                formed.push(c);
            }
            None => {
                stats.clusters_skipped += 1;
                let c = &chunks[pos];
                diag(&format!(
                    "seed {}#{} skipped: no foreign candidates",
                    c.doc_key, c.chunk_index
                ));
            }
        }
    }
    stats.clusters_formed = formed.len();

    let generated: Vec<Result<StageResult>> = formed
        .par_iter()
        .map(|cluster| generate_backward_pair(cluster, gen, &prompts.backward_pair))
        .collect();

    let mut pairs = Vec::new();
    let mut records = Vec::new();
    for outcome in generated {
        let pair = match outcome? {
            StageResult::Pair(p) => p,
            StageResult::Skipped(reason) => {
                stats.generation_failures += 1;
                diag(&format!("cluster skipped: {reason}"));
                continue;
            }
        };
        let pair = filter_invalid_citations(pair, registry, opts.lenient);
        let (pair, record) = finalize_markers(pair, marker, tokenizer);
        match pair.status {
            PairStatus::Kept => {
                stats.pairs_kept += 1;
                if let Some(record) = record {
                    stats.tokens_kept += record.token_count;
                    records.push(record);
                }
            }
            PairStatus::Filtered => {
                stats.pairs_filtered += 1;
                let reason = pair
                    .filter_reason
                    .clone()
                    .unwrap_or_else(|| "unspecified".to_owned());
                let coarse = reason.split('"').next().unwrap_or(&reason).trim().to_owned();
                *stats.filter_reasons.entry(coarse).or_insert(0) += 1;
            }
        }
        pairs.push(pair);
    }
    Ok((pairs, records, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::{build_index, Bm25Params};
    use crate::corpus::{chunk_corpus, Document, Source};
    use crate::model::FnGenerator;
    use crate::prompt::PromptSet;
    use crate::token::WhitespaceTokenizer;
    use std::collections::HashMap;

    fn toy_corpus(n_docs: usize, words_per_doc: usize) -> (Corpus, TitleRegistry, Vec<Chunk>) {
        let vocabulary = [
            "river", "mountain", "valley", "forest", "meadow", "stone", "cloud", "storm",
        ];
        let documents: Vec<Document> = (0..n_docs)
            .map(|i| {
                let content: Vec<String> = (0..words_per_doc)
                    .map(|j| vocabulary[(i + j) % vocabulary.len()].to_owned())
                    .collect();
                let content = content.join(" ");
                Document {
                    doc_key: format!("d{i:03}"),
                    source: Source::Other,
                    title: format!("Topic Survey {i}"),
                    content: content.clone(),
                    word_count: words_per_doc,
                    token_count: words_per_doc,
                }
            })
            .collect();
        let mut corpus = Corpus::from_documents(documents).unwrap();
        let namer = FnGenerator(|_: &str| unreachable!());
        let registry = crate::corpus::assign_unique_titles(
            &mut corpus,
            &namer,
            &PromptSet::default(),
            &Default::default(),
        )
        .unwrap();
        let chunks = chunk_corpus(&corpus, 8).unwrap();
        (corpus, registry, chunks)
    }

    fn cluster(titles: &[&str]) -> ChunkCluster {
        ChunkCluster {
            members: titles
                .iter()
                .enumerate()
                .map(|(i, t)| ClusterMember {
                    doc_key: format!("k{i}"),
                    chunk_index: 0,
                    title: (*t).to_owned(),
                    text: format!("text {i}"),
                })
                .collect(),
        }
    }

    fn registry_of(titles: &[&str]) -> TitleRegistry {
        let documents: Vec<Document> = titles
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                doc_key: format!("k{i}"),
                source: Source::Other,
                title: (*t).to_owned(),
                content: format!("content {i}"),
                word_count: 2,
                token_count: 2,
            })
            .collect();
        let mut corpus = Corpus::from_documents(documents).unwrap();
        let namer = FnGenerator(|_: &str| unreachable!());
        crate::corpus::assign_unique_titles(
            &mut corpus,
            &namer,
            &PromptSet::default(),
            &Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn seed_sampling_clamps_to_available() {
        let (_, _, chunks) = toy_corpus(1, 16); // 2 chunks
        let picked = sample_seed_chunks(&chunks, 5, 0);
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn seed_sampling_is_deterministic() {
        let (_, _, chunks) = toy_corpus(4, 40);
        assert_eq!(sample_seed_chunks(&chunks, 2, 9), sample_seed_chunks(&chunks, 2, 9));
        assert_ne!(sample_seed_chunks(&chunks, 2, 9), sample_seed_chunks(&chunks, 2, 10));
    }

    #[test]
    fn single_foreign_candidate_forces_size_two() {
        let (corpus, registry, chunks) = toy_corpus(2, 8); // 1 chunk each
        let index = build_index(&chunks, Bm25Params::default()).unwrap();
        let provider = Bm25Provider::new(&index, &chunks);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = form_cluster(&provider, &chunks, &corpus, &registry, 0, &mut rng, 200, 10)
                .expect("cluster");
            assert_eq!(c.members.len(), 2);
            c.check_invariants().unwrap();
        }
    }

    #[test]
    fn isolated_seed_is_skipped() {
        let documents = vec![
            Document {
                doc_key: "a".into(),
                source: Source::Other,
                title: "A".into(),
                content: "qqq www eee".into(),
                word_count: 3,
                token_count: 3,
            },
            Document {
                doc_key: "b".into(),
                source: Source::Other,
                title: "B".into(),
                content: "rrr ttt yyy".into(),
                word_count: 3,
                token_count: 3,
            },
        ];
        let mut corpus = Corpus::from_documents(documents).unwrap();
        let namer = FnGenerator(|_: &str| unreachable!());
        let registry = crate::corpus::assign_unique_titles(
            &mut corpus,
            &namer,
            &PromptSet::default(),
            &Default::default(),
        )
        .unwrap();
        let chunks = chunk_corpus(&corpus, 8).unwrap();
        let index = build_index(&chunks, Bm25Params::default()).unwrap();
        let provider = Bm25Provider::new(&index, &chunks);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(form_cluster(&provider, &chunks, &corpus, &registry, 0, &mut rng, 200, 10).is_none());
    }

    #[test]
    fn backward_pair_parses_instruction_and_answer() {
        let c = cluster(&["Alpha Report", "Beta Report"]);
        let gen = FnGenerator(|_: &str| {
            Ok("Compare the reports.\n\nOne fact <source>Alpha Report</source>. Another <source>Beta Report</source>.".to_owned())
        });
        let out = generate_backward_pair(&c, &gen, &PromptSet::default().backward_pair).unwrap();
        let pair = match out {
            StageResult::Pair(p) => p,
            other => panic!("expected pair, got {other:?}"),
        };
        assert_eq!(pair.status, PairStatus::Kept);
        assert_eq!(pair.instruction, "Compare the reports.");
        let reg = registry_of(&["Alpha Report", "Beta Report"]);
        let pair = filter_invalid_citations(pair, &reg, false);
        assert_eq!(pair.status, PairStatus::Kept);
        assert_eq!(pair.cited_titles, vec!["Alpha Report", "Beta Report"]);
    }

    #[test]
    fn response_without_source_markers_filtered() {
        let c = cluster(&["Alpha Report", "Beta Report"]);
        let gen = FnGenerator(|_: &str| Ok("Do a thing.\n\nAnswer with no tags.".to_owned()));
        match generate_backward_pair(&c, &gen, "[documents]").unwrap() {
            StageResult::Pair(p) => {
                assert_eq!(p.status, PairStatus::Filtered);
                assert_eq!(p.filter_reason.as_deref(), Some("no citations"));
            }
            other => panic!("expected pair, got {other:?}"),
        }
    }

    #[test]
    fn single_paragraph_response_unparseable() {
        let c = cluster(&["Alpha Report", "Beta Report"]);
        let gen = FnGenerator(|_: &str| Ok("only one paragraph".to_owned()));
        match generate_backward_pair(&c, &gen, "[documents]").unwrap() {
            StageResult::Pair(p) => {
                assert_eq!(p.filter_reason.as_deref(), Some("unparseable"));
            }
            other => panic!("expected pair, got {other:?}"),
        }
    }

    #[test]
    fn noisy_patterns_detected() {
        for noisy in [
            "document 1",
            "Document: xx",
            "title: xx",
            "doc 2",
            "source 3",
            "doc #4",
            "2",
            "2nd",
            "first",
        ] {
            assert!(is_noisy_citation(noisy), "{noisy} should be noisy");
        }
        for fine in [
            "Document Analysis in History",
            "Title Deeds of the Manor",
            "The Source of the Nile",
            "2001 A Space Story",
        ] {
            assert!(!is_noisy_citation(fine), "{fine} should be fine");
        }
    }

    #[test]
    fn exact_cluster_title_kept_and_canonicalized() {
        let reg = registry_of(&["Richard III of England", "Another Doc"]);
        let c = cluster(&["Richard III of England", "Another Doc"]);
        let pair = BackwardPair {
            instruction: "i".into(),
            answer: "Fact <source>Richard III of Engl</source>.".into(),
            cited_titles: vec![],
            cluster_doc_keys: c.doc_keys().iter().map(|s| (*s).to_owned()).collect(),
            cluster_titles: c.titles().iter().map(|s| (*s).to_owned()).collect(),
            status: PairStatus::Kept,
            filter_reason: None,
        };
        let pair = filter_invalid_citations(pair, &reg, false);
        assert_eq!(pair.status, PairStatus::Kept);
        assert_eq!(pair.cited_titles, vec!["Richard III of England"]);
        assert!(pair.answer.contains("<source>Richard III of England</source>"));
    }

    #[test]
    fn cluster_external_citation_filtered_unless_lenient() {
        let reg = registry_of(&["In Cluster", "Outside Title"]);
        let make = || BackwardPair {
            instruction: "i".into(),
            answer: "Fact <source>Outside Title</source>.".into(),
            cited_titles: vec![],
            cluster_doc_keys: vec!["k0".into()],
            cluster_titles: vec!["In Cluster".into()],
            status: PairStatus::Kept,
            filter_reason: None,
        };
        let strict = filter_invalid_citations(make(), &reg, false);
        assert_eq!(strict.status, PairStatus::Filtered);
        let lenient = filter_invalid_citations(make(), &reg, true);
        assert_eq!(lenient.status, PairStatus::Kept);
    }

    #[test]
    fn finalize_rewrites_markers_in_order() {
        let pair = BackwardPair {
            instruction: "Summarize.".into(),
            answer: "Facts <source>A</source>, <source>B</source>.".into(),
            cited_titles: vec!["A".into(), "B".into()],
            cluster_doc_keys: vec!["k0".into(), "k1".into()],
            cluster_titles: vec!["A".into(), "B".into()],
            status: PairStatus::Kept,
            filter_reason: None,
        };
        let (_, record) = finalize_markers(pair, &MarkerFormat::default(), &WhitespaceTokenizer);
        let record = record.unwrap();
        assert_eq!(record.text, "Summarize.\n\nFacts <|A|>, <|B|>.");
        assert!(!record.text.contains("<source>"));
        assert_eq!(record.variant, Variant::Backward);
    }

    #[test]
    fn unbalanced_source_tags_filtered_at_finalize() {
        let pair = BackwardPair {
            instruction: "i".into(),
            answer: "Broken <source>A claim.".into(),
            cited_titles: vec![],
            cluster_doc_keys: vec![],
            cluster_titles: vec![],
            status: PairStatus::Kept,
            filter_reason: None,
        };
        let (pair, record) = finalize_markers(pair, &MarkerFormat::default(), &WhitespaceTokenizer);
        assert!(record.is_none());
        assert_eq!(pair.filter_reason.as_deref(), Some("malformed markers"));
    }

    #[test]
    fn filter_exactness_on_crafted_set() {
        // hand-labeled set: every pair cites its own cluster except the
        // marked noisy/external ones
        let reg = registry_of(&["Harbor Town Records", "Alpine Weather Atlas", "Quantum Circuit Basics"]);
        let mut pairs = Vec::new();
        let mut expect_filtered = Vec::new();
        for i in 0..10 {
            let (answer, bad) = match i {
                2 => ("x <source>document 1</source>.".to_owned(), true),
                // cluster-external: valid registry title outside the cluster
                5 => ("x <source>Quantum Circuit Basics</source>.".to_owned(), true),
                _ => (
                    "x <source>Harbor Town Records</source> y <source>Alpine Weather Atlas</source>."
                        .to_owned(),
                    false,
                ),
            };
            expect_filtered.push(bad);
            pairs.push(BackwardPair {
                instruction: format!("instruction {i}"),
                answer,
                cited_titles: vec![],
                cluster_doc_keys: vec!["k0".into(), "k1".into()],
                cluster_titles: vec!["Harbor Town Records".into(), "Alpine Weather Atlas".into()],
                status: PairStatus::Kept,
                filter_reason: None,
            });
        }
        let filtered: Vec<bool> = pairs
            .into_iter()
            .map(|p| filter_invalid_citations(p, &reg, false).status == PairStatus::Filtered)
            .collect();
        assert_eq!(filtered, expect_filtered);
    }

    #[test]
    fn mock_backward_generator_pipeline() {
        let (corpus, registry, chunks) = toy_corpus(6, 24);
        let index = build_index(&chunks, Bm25Params::default()).unwrap();
        let provider = Bm25Provider::new(&index, &chunks);
        let gen = crate::model::mock::MockBackwardGenerator::new(3);
        let seeds = sample_seed_chunks(&chunks, 1, 3);
        let mut kept = 0;
        let mut results = HashMap::new();
        for &pos in &seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(3, &["cluster", &chunks[pos].doc_key]));
            let Some(c) =
                form_cluster(&provider, &chunks, &corpus, &registry, pos, &mut rng, 200, 10)
            else {
                continue;
            };
            c.check_invariants().unwrap();
            let out = generate_backward_pair(&c, &gen, &PromptSet::default().backward_pair).unwrap();
            if let StageResult::Pair(p) = out {
                let p = filter_invalid_citations(p, &registry, false);
                if p.status == PairStatus::Kept {
                    kept += 1;
                    // kept-pair soundness
                    for t in &p.cited_titles {
                        assert!(p.cluster_titles.contains(t));
                    }
                    let (_, rec) =
                        finalize_markers(p, &MarkerFormat::default(), &WhitespaceTokenizer);
                    results.insert(pos, rec.unwrap());
                }
            }
        }
        assert!(kept > 0, "mock pipeline should keep some pairs");
    }
}
