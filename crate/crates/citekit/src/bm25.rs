//! BM25 inverted index over chunks.
//!
//! The analyzer lowercases and splits on non-alphanumeric characters. IDF is
//! `ln((N − df + 0.5)/(df + 0.5) + 1)` floored at 0, so scores are
//! non-negative and zero-score chunks can be dropped from results.
//! Duplicate query terms contribute once.

use crate::container::{self, read_str, write_str, SectionKind};
use crate::corpus::Chunk;
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

pub type ChunkRef = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub chunk: ChunkRef,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    /// chunk ref → (doc_key, chunk_index); refs ascend in this order.
    keys: Vec<(String, u32)>,
    avg_doc_length: f64,
    params: Bm25Params,
}

/// Lowercase + split on non-alphanumeric runs.
pub fn analyze(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Builds the index. Chunk refs are assigned in ascending (doc_key,
/// chunk_index) order regardless of input order, so the retrieve tie-break by
/// ref is also a tie-break by (doc_key, chunk_index). Per-chunk term counting
/// runs in parallel; the merge is a deterministic sequential pass.
pub fn build_index(chunks: &[Chunk], params: Bm25Params) -> Result<InvertedIndex> {
    use rayon::prelude::*;

    if chunks.is_empty() {
        return Err(Error::Contract("cannot index an empty chunk set".to_owned()));
    }
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.sort_by(|&a, &b| {
        (&chunks[a].doc_key, chunks[a].chunk_index).cmp(&(&chunks[b].doc_key, chunks[b].chunk_index))
    });

    let counted: Vec<(Vec<(String, u32)>, u32)> = order
        .par_iter()
        .map(|&i| {
            let mut tf: HashMap<String, u32> = HashMap::new();
            let terms = analyze(&chunks[i].text());
            let len = terms.len() as u32;
            for t in terms {
                *tf.entry(t).or_insert(0) += 1;
            }
            let mut tf: Vec<(String, u32)> = tf.into_iter().collect();
            tf.sort();
            (tf, len)
        })
        .collect();

    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(chunks.len());
    let mut keys = Vec::with_capacity(chunks.len());
    let mut total_len: u64 = 0;
    for (r, (&orig, (tf, len))) in order.iter().zip(&counted).enumerate() {
        let chunk = &chunks[orig];
        keys.push((chunk.doc_key.clone(), chunk.chunk_index as u32));
        doc_lengths.push(*len);
        total_len += *len as u64;
        for (term, count) in tf {
            postings.entry(term.clone()).or_default().push(Posting {
                chunk: r as ChunkRef,
                tf: *count,
            });
        }
    }
    if total_len == 0 {
        return Err(Error::Degenerate("corpus has zero indexable terms".to_owned()));
    }
    let avg_doc_length = total_len as f64 / chunks.len() as f64;
    Ok(InvertedIndex {
        postings,
        doc_lengths,
        keys,
        avg_doc_length,
        params,
    })
}

impl InvertedIndex {
    pub fn n_chunks(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_length(&self, chunk: ChunkRef) -> u32 {
        self.doc_lengths[chunk as usize]
    }

    pub fn key(&self, chunk: ChunkRef) -> (&str, u32) {
        let (k, i) = &self.keys[chunk as usize];
        (k, *i)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.n_chunks() as f64;
        (((n - df as f64 + 0.5) / (df as f64 + 0.5)) + 1.0).ln().max(0.0)
    }

    fn term_weight(&self, tf: u32, doc_len: u32, df: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = tf + k1 * (1.0 - b + b * doc_len as f64 / self.avg_doc_length);
        self.idf(df) * (tf * (k1 + 1.0)) / norm
    }

    /// BM25 score of one (query, chunk) pair.
    pub fn score_pair(&self, query: &str, chunk: ChunkRef) -> f64 {
        let mut terms = analyze(query);
        terms.sort();
        terms.dedup();
        let mut score = 0.0;
        for term in &terms {
            if let Some(list) = self.postings.get(term) {
                if let Ok(pos) = list.binary_search_by_key(&chunk, |p| p.chunk) {
                    score += self.term_weight(list[pos].tf, self.doc_lengths[chunk as usize], list.len());
                }
            }
        }
        score
    }

    /// Top-k chunks by descending score; ties break by ascending
    /// (doc_key, chunk_index). Zero-score chunks are excluded, so an
    /// out-of-vocabulary query returns an empty list.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(ChunkRef, f64)>> {
        if k == 0 {
            return Err(Error::Contract("k must be ≥ 1".to_owned()));
        }
        let mut terms = analyze(query);
        terms.sort();
        terms.dedup();
        let mut scores: HashMap<ChunkRef, f64> = HashMap::new();
        for term in &terms {
            if let Some(list) = self.postings.get(term) {
                let df = list.len();
                for p in list {
                    *scores.entry(p.chunk).or_insert(0.0) +=
                        self.term_weight(p.tf, self.doc_lengths[p.chunk as usize], df);
                }
            }
        }
        let mut ranked: Vec<(ChunkRef, f64)> =
            scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Human-readable postings dump for debugging.
    pub fn dump_postings<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# chunks={} avg_len={:.4} k1={} b={}",
            self.n_chunks(),
            self.avg_doc_length,
            self.params.k1,
            self.params.b
        )?;
        for (term, list) in &self.postings {
            write!(w, "{term}\tdf={}", list.len())?;
            for p in list {
                let (key, idx) = self.key(p.chunk);
                write!(w, "\t{key}#{idx}:{}", p.tf)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.write_f64::<LittleEndian>(self.params.k1)?;
        buf.write_f64::<LittleEndian>(self.params.b)?;
        buf.write_u32::<LittleEndian>(self.keys.len() as u32)?;
        for ((key, idx), len) in self.keys.iter().zip(&self.doc_lengths) {
            write_str(&mut buf, key)?;
            buf.write_u32::<LittleEndian>(*idx)?;
            buf.write_u32::<LittleEndian>(*len)?;
        }
        buf.write_u32::<LittleEndian>(self.postings.len() as u32)?;
        for (term, list) in &self.postings {
            write_str(&mut buf, term)?;
            buf.write_u32::<LittleEndian>(list.len() as u32)?;
            for p in list {
                buf.write_u32::<LittleEndian>(p.chunk)?;
                buf.write_u32::<LittleEndian>(p.tf)?;
            }
        }
        Ok(buf)
    }

    pub fn from_payload(payload: &[u8]) -> Result<Self> {
        let mut r = payload;
        let k1 = r.read_f64::<LittleEndian>()?;
        let b = r.read_f64::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut keys = Vec::with_capacity(n);
        let mut doc_lengths = Vec::with_capacity(n);
        let mut total: u64 = 0;
        for _ in 0..n {
            let key = read_str(&mut r)?;
            let idx = r.read_u32::<LittleEndian>()?;
            let len = r.read_u32::<LittleEndian>()?;
            keys.push((key, idx));
            doc_lengths.push(len);
            total += len as u64;
        }
        if n == 0 {
            return Err(Error::Container("index payload has no chunks".to_owned()));
        }
        let n_terms = r.read_u32::<LittleEndian>()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_str(&mut r)?;
            let m = r.read_u32::<LittleEndian>()? as usize;
            let mut list = Vec::with_capacity(m);
            for _ in 0..m {
                let chunk = r.read_u32::<LittleEndian>()?;
                let tf = r.read_u32::<LittleEndian>()?;
                list.push(Posting { chunk, tf });
            }
            postings.insert(term, list);
        }
        Ok(InvertedIndex {
            postings,
            doc_lengths,
            keys,
            avg_doc_length: total as f64 / n as f64,
            params: Bm25Params { k1, b },
        })
    }

    pub fn save(&self, path: &Path, seed: u64, config_hash: [u8; 32]) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        container::write_container(&mut w, SectionKind::Bm25Index, seed, config_hash, &self.to_payload()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let (header, payload) = container::read_container(std::io::BufReader::new(file))?;
        if header.kind != SectionKind::Bm25Index {
            return Err(Error::Container("file is not a bm25 index".to_owned()));
        }
        Self::from_payload(&payload)
    }
}

/// Ranks a small ad-hoc text collection against a query with the same BM25
/// formula, returning indices in descending score order (ties ascending by
/// index). Zero-score texts are excluded.
pub fn rank_texts(texts: &[&str], query: &str, k: usize, params: Bm25Params) -> Vec<usize> {
    if texts.is_empty() || k == 0 {
        return Vec::new();
    }
    let analyzed: Vec<Vec<String>> = texts.iter().map(|t| analyze(t)).collect();
    let lens: Vec<usize> = analyzed.iter().map(Vec::len).collect();
    let total: usize = lens.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let avg = total as f64 / texts.len() as f64;
    let n = texts.len() as f64;
    let mut terms = analyze(query);
    terms.sort();
    terms.dedup();
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (i, tokens) in analyzed.iter().enumerate() {
        let mut score = 0.0;
        for term in &terms {
            let tf = tokens.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = analyzed
                .iter()
                .filter(|doc| doc.iter().any(|t| t == term))
                .count() as f64;
            let idf = (((n - df + 0.5) / (df + 0.5)) + 1.0).ln().max(0.0);
            let norm = tf + params.k1 * (1.0 - params.b + params.b * lens[i] as f64 / avg);
            score += idf * (tf * (params.k1 + 1.0)) / norm;
        }
        if score > 0.0 {
            scored.push((i, score));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored.into_iter().map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(key: &str, idx: usize, text: &str) -> Chunk {
        Chunk {
            doc_key: key.to_owned(),
            chunk_index: idx,
            words: text.split_whitespace().map(str::to_owned).collect(),
            char_span: (0, text.len()),
        }
    }

    #[test]
    fn single_chunk_postings_by_hand() {
        let idx = build_index(&[chunk("d", 0, "a b a")], Bm25Params::default()).unwrap();
        assert_eq!(idx.n_chunks(), 1);
        assert_eq!(idx.doc_length(0), 3);
        assert_eq!(idx.postings["a"], vec![Posting { chunk: 0, tf: 2 }]);
        assert_eq!(idx.postings["b"], vec![Posting { chunk: 0, tf: 1 }]);
    }

    #[test]
    fn identical_chunks_share_length_and_average() {
        let idx = build_index(
            &[chunk("a", 0, "x y z"), chunk("b", 0, "x y z")],
            Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(idx.doc_length(0), idx.doc_length(1));
        assert!((idx.avg_doc_length() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unique_term_ranks_its_chunk_first() {
        let idx = build_index(
            &[
                chunk("a", 0, "common words here"),
                chunk("b", 0, "common words zebra"),
            ],
            Bm25Params::default(),
        )
        .unwrap();
        let hits = idx.retrieve("zebra", 2).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(idx.key(hits[0].0).0, "b");
    }

    #[test]
    fn out_of_vocabulary_query_is_empty() {
        let idx = build_index(&[chunk("a", 0, "alpha beta")], Bm25Params::default()).unwrap();
        assert!(idx.retrieve("nonexistent", 3).unwrap().is_empty());
    }

    #[test]
    fn zero_terms_is_degenerate() {
        let err = build_index(&[chunk("a", 0, "!!! ...")], Bm25Params::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn refs_follow_doc_key_order_regardless_of_input_order() {
        let idx = build_index(
            &[chunk("zz", 0, "one"), chunk("aa", 0, "two")],
            Bm25Params::default(),
        )
        .unwrap();
        assert_eq!(idx.key(0).0, "aa");
        assert_eq!(idx.key(1).0, "zz");
    }

    #[test]
    fn payload_roundtrip_preserves_scores() {
        let chunks = vec![
            chunk("a", 0, "the quick brown fox"),
            chunk("a", 1, "jumps over the lazy dog"),
            chunk("b", 0, "quick quick dog"),
        ];
        let idx = build_index(&chunks, Bm25Params::default()).unwrap();
        let back = InvertedIndex::from_payload(&idx.to_payload().unwrap()).unwrap();
        for q in ["quick dog", "fox", "the lazy"] {
            assert_eq!(idx.retrieve(q, 5).unwrap(), back.retrieve(q, 5).unwrap());
        }
    }

    #[test]
    fn adding_query_term_occurrence_never_decreases_score() {
        // swap one non-query word for the query term, holding length fixed
        let base = vec![
            chunk("a", 0, "apple pear plum grape"),
            chunk("b", 0, "apple apple plum grape"),
            chunk("c", 0, "kiwi melon fig date"),
        ];
        let idx = build_index(&base, Bm25Params::default()).unwrap();
        let low = idx.score_pair("apple", 0);
        let high = idx.score_pair("apple", 1);
        assert!(high >= low);
    }
}
