//! Internal/external citation spectrum: retrieval-quality interpolation,
//! routing strategies, the oracle upper bound, and conflict-slice analysis.

use crate::cite::parse_citations;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::eval::em_recall;
use crate::model::GeneratorClient;
use crate::prompt::{render, PromptSet, ABSTAIN_MARKER};
use crate::text::MarkerFormat;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderLabel {
    Sparse,
    Dense,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_key: String,
    pub score: f64,
    /// Which source the entry came from; meaningful in mixed lists.
    pub provenance: ProviderLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub label: ProviderLabel,
    pub entries: Vec<RankedEntry>,
    /// Set when fewer than the requested number of distinct documents were
    /// available.
    #[serde(default)]
    pub short: bool,
}

impl RankedList {
    pub fn new(label: ProviderLabel, entries: Vec<(String, f64)>) -> Self {
        RankedList {
            label,
            entries: entries
                .into_iter()
                .map(|(doc_key, score)| RankedEntry {
                    doc_key,
                    score,
                    provenance: label,
                })
                .collect(),
            short: false,
        }
    }
}

/// Documents retrieved per item in the harness.
pub const MIX_SLOTS: usize = 5;

/// Samples a 5-entry list: each slot independently draws from the dense list
/// with probability `q`, else the sparse list, preserving each source's
/// internal order, skipping documents already taken, and backfilling from
/// the other source when one runs out. `q`=0 reproduces the sparse top-5
/// verbatim and `q`=1 the dense top-5. A list shorter than 5 (fewer than 5
/// distinct documents in total) is flagged `short`.
pub fn mix_retrieval(
    sparse: &RankedList,
    dense: &RankedList,
    q: f64,
    rng: &mut impl Rng,
) -> Result<RankedList> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Contract(format!("quality q={q} outside [0,1]")));
    }
    if sparse.entries.len() < MIX_SLOTS || dense.entries.len() < MIX_SLOTS {
        return Err(Error::Contract(format!(
            "both inputs need ≥ {MIX_SLOTS} entries"
        )));
    }
    let mut taken: Vec<String> = Vec::with_capacity(MIX_SLOTS);
    let mut out = Vec::with_capacity(MIX_SLOTS);
    let mut si = 0usize;
    let mut di = 0usize;

    let next_unused = |list: &RankedList, from: &mut usize, taken: &[String]| -> Option<usize> {
        while *from < list.entries.len() {
            let at = *from;
            *from += 1;
            if !taken.iter().any(|t| t == &list.entries[at].doc_key) {
                return Some(at);
            }
        }
        None
    };

    for _ in 0..MIX_SLOTS {
        let want_dense = rng.gen_bool(q);
        let pick = if want_dense {
            next_unused(dense, &mut di, &taken)
                .map(|i| (&dense.entries[i], ProviderLabel::Dense))
                .or_else(|| {
                    next_unused(sparse, &mut si, &taken)
                        .map(|i| (&sparse.entries[i], ProviderLabel::Sparse))
                })
        } else {
            next_unused(sparse, &mut si, &taken)
                .map(|i| (&sparse.entries[i], ProviderLabel::Sparse))
                .or_else(|| {
                    next_unused(dense, &mut di, &taken)
                        .map(|i| (&dense.entries[i], ProviderLabel::Dense))
                })
        };
        match pick {
            Some((entry, provenance)) => {
                taken.push(entry.doc_key.clone());
                out.push(RankedEntry {
                    doc_key: entry.doc_key.clone(),
                    score: entry.score,
                    provenance,
                });
            }
            None => break,
        }
    }
    let short = out.len() < MIX_SLOTS;
    Ok(RankedList {
        label: ProviderLabel::Mixed,
        entries: out,
        short,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Internal,
    External,
    Joint,
    Fallback,
    Oracle,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::Internal => "internal",
            Strategy::External => "external",
            Strategy::Joint => "joint",
            Strategy::Fallback => "fallback",
            Strategy::Oracle => "oracle",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "internal" => Ok(Strategy::Internal),
            "external" => Ok(Strategy::External),
            "joint" => Ok(Strategy::Joint),
            "fallback" => Ok(Strategy::Fallback),
            "oracle" => Ok(Strategy::Oracle),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub gold_title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedResult {
    pub item_id: String,
    pub strategy: Strategy,
    pub answer: String,
    pub citations: Vec<String>,
    pub abstained: bool,
    pub correctness: f64,
}

fn docs_block(corpus: &Corpus, retrieved: &RankedList, max_words: usize) -> String {
    let mut out = String::new();
    for entry in &retrieved.entries {
        if let Some(doc) = corpus.get(&entry.doc_key) {
            let snippet: Vec<&str> = doc.content.split_whitespace().take(max_words).collect();
            out.push_str(&format!("Title: {}\nText: {}\n\n", doc.title, snippet.join(" ")));
        }
    }
    out.trim_end().to_owned()
}

fn answer_of(completion: &str, marker: &MarkerFormat) -> (String, Vec<String>, bool) {
    let trimmed = completion.trim();
    if trimmed.contains(ABSTAIN_MARKER) {
        return (String::new(), Vec::new(), true);
    }
    let citations = match parse_citations(trimmed, marker) {
        Ok(parsed) => {
            let mut seen = Vec::new();
            for c in parsed.all_citations() {
                if !seen.iter().any(|s: &String| s == c) {
                    seen.push(c.to_owned());
                }
            }
            seen
        }
        Err(_) => Vec::new(),
    };
    (trimmed.to_owned(), citations, false)
}

/// Drives one item through one strategy. External, joint, and fallback
/// require a retrieved list; internal must not get one. The answer's
/// correctness field is left at 0 — score it against golds afterwards with
/// [`score_correctness`].
pub fn route(
    strategy: Strategy,
    item: &EvalItem,
    gen: &dyn GeneratorClient,
    corpus: &Corpus,
    retrieved: Option<&RankedList>,
    prompts: &PromptSet,
    marker: &MarkerFormat,
) -> Result<RoutedResult> {
    let mut vars = BTreeMap::new();
    vars.insert("question", item.question.as_str());
    vars.insert("open", marker.open.as_str());
    vars.insert("close", marker.close.as_str());

    let result = |answer: String, citations: Vec<String>, abstained: bool| RoutedResult {
        item_id: item.id.clone(),
        strategy,
        answer,
        citations,
        abstained,
        correctness: 0.0,
    };

    match strategy {
        Strategy::Internal => {
            if retrieved.is_some() {
                return Err(Error::Contract(
                    "internal strategy takes no retrieved list".to_owned(),
                ));
            }
            let prompt = render(&prompts.route_internal, &vars);
            let completion = gen.generate(&prompt)?;
            let (answer, citations, _) = answer_of(&completion, marker);
            Ok(result(answer, citations, false))
        }
        Strategy::External => {
            let list = retrieved.ok_or_else(|| {
                Error::Contract("external strategy requires a retrieved list".to_owned())
            })?;
            let docs = docs_block(corpus, list, 120);
            vars.insert("documents", &docs);
            let prompt = render(&prompts.route_external, &vars);
            let completion = gen.generate(&prompt)?;
            let (answer, citations, abstained) = answer_of(&completion, marker);
            Ok(result(answer, citations, abstained))
        }
        Strategy::Joint => {
            let list = retrieved.ok_or_else(|| {
                Error::Contract("joint strategy requires a retrieved list".to_owned())
            })?;
            let docs = docs_block(corpus, list, 120);
            vars.insert("documents", &docs);
            let prompt = render(&prompts.route_joint, &vars);
            let completion = gen.generate(&prompt)?;
            // strip the sufficiency-reflection line when present
            let body = completion
                .split_once('\n')
                .map(|(first, rest)| {
                    if first.to_lowercase().contains("sufficien") {
                        rest
                    } else {
                        completion.as_str()
                    }
                })
                .unwrap_or(completion.as_str());
            let (answer, citations, _) = answer_of(body, marker);
            Ok(result(answer, citations, false))
        }
        Strategy::Fallback => {
            let external = route(Strategy::External, item, gen, corpus, retrieved, prompts, marker)?;
            if !external.abstained {
                return Ok(RoutedResult {
                    strategy: Strategy::Fallback,
                    ..external
                });
            }
            let joint = route(Strategy::Joint, item, gen, corpus, retrieved, prompts, marker)?;
            Ok(RoutedResult {
                strategy: Strategy::Fallback,
                abstained: true,
                ..joint
            })
        }
        Strategy::Oracle => Err(Error::Contract(
            "oracle is derived from internal and external results, not routed".to_owned(),
        )),
    }
}

/// Correctness = exact-match recall of the gold answers in the answer text.
pub fn score_correctness(result: &mut RoutedResult, item: &EvalItem) {
    result.correctness = em_recall(&result.answer, &item.gold_answers);
}

/// Picks the result with higher correctness; ties go to internal.
pub fn oracle_select(internal: &RoutedResult, external: &RoutedResult) -> RoutedResult {
    let winner = if external.correctness > internal.correctness {
        external
    } else {
        internal
    };
    RoutedResult {
        strategy: Strategy::Oracle,
        ..winner.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictSlice {
    IntWrongExtRight,
    IntRightExtWrong,
    NoConflict,
}

impl ConflictSlice {
    fn label(self) -> &'static str {
        match self {
            ConflictSlice::IntWrongExtRight => "Int wrong / Ext correct",
            ConflictSlice::IntRightExtWrong => "Int correct / Ext wrong",
            ConflictSlice::NoConflict => "No conflict",
        }
    }
}

/// Correctness binarization threshold for slicing.
pub const SLICE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct SliceReport {
    /// slice → item count.
    pub sizes: BTreeMap<ConflictSlice, usize>,
    /// slice → proportion of items.
    pub proportions: BTreeMap<ConflictSlice, f64>,
    /// strategy → (slice → mean correctness, overall mean correctness).
    pub accuracy: BTreeMap<Strategy, (BTreeMap<ConflictSlice, f64>, f64)>,
    pub items: usize,
}

/// Partitions items into {internal wrong ∧ external right, internal right ∧
/// external wrong, no conflict} at the binarization threshold and reports
/// per-slice accuracy for every strategy present.
pub fn conflict_slices(
    per_item: &[BTreeMap<Strategy, f64>],
) -> Result<SliceReport> {
    let mut sizes: BTreeMap<ConflictSlice, usize> = BTreeMap::new();
    for s in [
        ConflictSlice::IntWrongExtRight,
        ConflictSlice::IntRightExtWrong,
        ConflictSlice::NoConflict,
    ] {
        sizes.insert(s, 0);
    }
    let mut sums: BTreeMap<Strategy, (BTreeMap<ConflictSlice, f64>, f64)> = BTreeMap::new();

    let mut slices = Vec::with_capacity(per_item.len());
    for scores in per_item {
        let internal = *scores.get(&Strategy::Internal).ok_or_else(|| {
            Error::Contract("conflict slicing needs internal results per item".to_owned())
        })?;
        let external = *scores.get(&Strategy::External).ok_or_else(|| {
            Error::Contract("conflict slicing needs external results per item".to_owned())
        })?;
        let int_right = internal >= SLICE_THRESHOLD;
        let ext_right = external >= SLICE_THRESHOLD;
        let slice = match (int_right, ext_right) {
            (false, true) => ConflictSlice::IntWrongExtRight,
            (true, false) => ConflictSlice::IntRightExtWrong,
            _ => ConflictSlice::NoConflict,
        };
        *sizes.get_mut(&slice).unwrap() += 1;
        slices.push(slice);
        for (&strategy, &value) in scores {
            let entry = sums.entry(strategy).or_default();
            *entry.0.entry(slice).or_insert(0.0) += value;
            entry.1 += value;
        }
    }

    let n = per_item.len();
    let proportions = sizes
        .iter()
        .map(|(&s, &c)| (s, if n > 0 { c as f64 / n as f64 } else { 0.0 }))
        .collect();
    let accuracy = sums
        .into_iter()
        .map(|(strategy, (by_slice, total))| {
            let means = by_slice
                .into_iter()
                .map(|(slice, sum)| (slice, sum / sizes[&slice].max(1) as f64))
                .collect();
            (strategy, (means, if n > 0 { total / n as f64 } else { 0.0 }))
        })
        .collect();

    Ok(SliceReport {
        sizes,
        proportions,
        accuracy,
        items: n,
    })
}

impl SliceReport {
    /// Plain-text table: one row per strategy, one column per slice plus the
    /// total, with the slice proportions in the header.
    pub fn render_table(&self) -> String {
        let slices = [
            ConflictSlice::IntWrongExtRight,
            ConflictSlice::IntRightExtWrong,
            ConflictSlice::NoConflict,
        ];
        let mut out = String::new();
        out.push_str(&format!("items: {}\n", self.items));
        out.push_str("slice proportions: ");
        let props: Vec<String> = slices
            .iter()
            .map(|s| format!("{} {:.1}%", s.label(), 100.0 * self.proportions[s]))
            .collect();
        out.push_str(&props.join(", "));
        out.push('\n');
        out.push_str(&format!(
            "{:<12} {:>24} {:>24} {:>12} {:>8}\n",
            "Method",
            "Int wrong / Ext correct",
            "Int correct / Ext wrong",
            "No conflict",
            "Total"
        ));
        for (strategy, (by_slice, total)) in &self.accuracy {
            out.push_str(&format!(
                "{:<12} {:>24.1} {:>24.1} {:>12.1} {:>8.1}\n",
                strategy.to_string(),
                100.0 * by_slice.get(&slices[0]).copied().unwrap_or(0.0),
                100.0 * by_slice.get(&slices[1]).copied().unwrap_or(0.0),
                100.0 * by_slice.get(&slices[2]).copied().unwrap_or(0.0),
                100.0 * total,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Source};
    use crate::model::FnGenerator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn list(label: ProviderLabel, keys: &[&str]) -> RankedList {
        RankedList::new(
            label,
            keys.iter()
                .enumerate()
                .map(|(i, k)| ((*k).to_owned(), 10.0 - i as f64))
                .collect(),
        )
    }

    #[test]
    fn q_zero_is_sparse_verbatim() {
        let sparse = list(ProviderLabel::Sparse, &["s1", "s2", "s3", "s4", "s5", "s6"]);
        let dense = list(ProviderLabel::Dense, &["d1", "d2", "d3", "d4", "d5"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mixed = mix_retrieval(&sparse, &dense, 0.0, &mut rng).unwrap();
        let keys: Vec<&str> = mixed.entries.iter().map(|e| e.doc_key.as_str()).collect();
        assert_eq!(keys, vec!["s1", "s2", "s3", "s4", "s5"]);
        assert!(mixed.entries.iter().all(|e| e.provenance == ProviderLabel::Sparse));
        assert!(!mixed.short);
    }

    #[test]
    fn q_one_is_dense_verbatim() {
        let sparse = list(ProviderLabel::Sparse, &["s1", "s2", "s3", "s4", "s5"]);
        let dense = list(ProviderLabel::Dense, &["d1", "d2", "d3", "d4", "d5"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mixed = mix_retrieval(&sparse, &dense, 1.0, &mut rng).unwrap();
        let keys: Vec<&str> = mixed.entries.iter().map(|e| e.doc_key.as_str()).collect();
        assert_eq!(keys, vec!["d1", "d2", "d3", "d4", "d5"]);
    }

    #[test]
    fn overlapping_sources_skip_duplicates() {
        // dense and sparse share documents; the mixed list must not repeat
        let sparse = list(ProviderLabel::Sparse, &["a", "b", "c", "d", "e"]);
        let dense = list(ProviderLabel::Dense, &["a", "b", "c", "d", "e"]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mixed = mix_retrieval(&sparse, &dense, 0.5, &mut rng).unwrap();
        let mut keys: Vec<&str> = mixed.entries.iter().map(|e| e.doc_key.as_str()).collect();
        assert_eq!(keys.len(), 5);
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 5);
        assert!(!mixed.short);
    }

    #[test]
    fn provenance_counts_sum_to_slots() {
        let sparse = list(ProviderLabel::Sparse, &["s1", "s2", "s3", "s4", "s5"]);
        let dense = list(ProviderLabel::Dense, &["d1", "d2", "d3", "d4", "d5"]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for q in [0.2, 0.5, 0.8] {
            let mixed = mix_retrieval(&sparse, &dense, q, &mut rng).unwrap();
            assert_eq!(mixed.entries.len(), MIX_SLOTS);
        }
    }

    fn tiny_corpus() -> Corpus {
        let docs = (0..6)
            .map(|i| Document {
                doc_key: format!("d{i}"),
                source: Source::Other,
                title: format!("Doc Title {i}"),
                content: format!("content words for document {i} answer{i}"),
                word_count: 6,
                token_count: 6,
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    fn item() -> EvalItem {
        EvalItem {
            id: "q1".to_owned(),
            question: "which document answers this?".to_owned(),
            gold_answers: vec!["answer3".to_owned()],
            gold_title: Some("Doc Title 3".to_owned()),
        }
    }

    #[test]
    fn fallback_equals_external_when_never_abstaining() {
        let corpus = tiny_corpus();
        let prompts = PromptSet::default();
        let marker = MarkerFormat::default();
        let retrieved = list(ProviderLabel::Mixed, &["d3", "d1", "d0", "d2", "d4"]);
        let gen = FnGenerator(|_: &str| Ok("answer3 it is <|Doc Title 3|>".to_owned()));
        let external = route(
            Strategy::External,
            &item(),
            &gen,
            &corpus,
            Some(&retrieved),
            &prompts,
            &marker,
        )
        .unwrap();
        let fallback = route(
            Strategy::Fallback,
            &item(),
            &gen,
            &corpus,
            Some(&retrieved),
            &prompts,
            &marker,
        )
        .unwrap();
        assert_eq!(fallback.answer, external.answer);
        assert_eq!(fallback.citations, external.citations);
        assert!(!fallback.abstained);
    }

    #[test]
    fn fallback_reroutes_to_joint_on_abstention() {
        let corpus = tiny_corpus();
        let prompts = PromptSet::default();
        let marker = MarkerFormat::default();
        let retrieved = list(ProviderLabel::Mixed, &["d3", "d1", "d0", "d2", "d4"]);
        // abstain on the external prompt (it carries the abstain sentinel in
        // its instructions), answer on the joint prompt
        let gen = FnGenerator(|prompt: &str| {
            if prompt.contains("reply with exactly") || prompt.contains(ABSTAIN_MARKER) {
                Ok(ABSTAIN_MARKER.to_owned())
            } else {
                Ok("Sufficiency: partial\njoint answer <|Doc Title 3|>".to_owned())
            }
        });
        let joint = route(
            Strategy::Joint,
            &item(),
            &gen,
            &corpus,
            Some(&retrieved),
            &prompts,
            &marker,
        )
        .unwrap();
        let fallback = route(
            Strategy::Fallback,
            &item(),
            &gen,
            &corpus,
            Some(&retrieved),
            &prompts,
            &marker,
        )
        .unwrap();
        assert!(fallback.abstained);
        assert_eq!(fallback.answer, joint.answer);
        assert_eq!(fallback.citations, joint.citations);
    }

    #[test]
    fn oracle_picks_higher_and_ties_internal() {
        let mk = |strategy, correctness| RoutedResult {
            item_id: "x".to_owned(),
            strategy,
            answer: format!("{strategy} answer"),
            citations: vec![],
            abstained: false,
            correctness,
        };
        let better_internal = oracle_select(&mk(Strategy::Internal, 1.0), &mk(Strategy::External, 0.0));
        assert_eq!(better_internal.answer, "internal answer");
        let better_external = oracle_select(&mk(Strategy::Internal, 0.0), &mk(Strategy::External, 1.0));
        assert_eq!(better_external.answer, "external answer");
        let tie = oracle_select(&mk(Strategy::Internal, 0.5), &mk(Strategy::External, 0.5));
        assert_eq!(tie.answer, "internal answer");
        assert_eq!(tie.strategy, Strategy::Oracle);
    }

    #[test]
    fn conflict_slices_partition_four_items() {
        let rows: Vec<BTreeMap<Strategy, f64>> = [(0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0)]
            .iter()
            .map(|&(i, e)| {
                let mut m = BTreeMap::new();
                m.insert(Strategy::Internal, i);
                m.insert(Strategy::External, e);
                m
            })
            .collect();
        let report = conflict_slices(&rows).unwrap();
        assert_eq!(report.sizes[&ConflictSlice::IntWrongExtRight], 1);
        assert_eq!(report.sizes[&ConflictSlice::IntRightExtWrong], 1);
        assert_eq!(report.sizes[&ConflictSlice::NoConflict], 2);
        let total: usize = report.sizes.values().sum();
        assert_eq!(total, 4);
        // per-slice accuracy: internal is 0 in IntWrongExtRight, 1 in IntRightExtWrong
        let internal = &report.accuracy[&Strategy::Internal];
        assert_eq!(internal.0[&ConflictSlice::IntWrongExtRight], 0.0);
        assert_eq!(internal.0[&ConflictSlice::IntRightExtWrong], 1.0);
    }

    #[test]
    fn all_agreeing_items_are_no_conflict() {
        let rows: Vec<BTreeMap<Strategy, f64>> = (0..4)
            .map(|i| {
                let v = if i % 2 == 0 { 1.0 } else { 0.0 };
                let mut m = BTreeMap::new();
                m.insert(Strategy::Internal, v);
                m.insert(Strategy::External, v);
                m
            })
            .collect();
        let report = conflict_slices(&rows).unwrap();
        assert_eq!(report.proportions[&ConflictSlice::NoConflict], 1.0);
        let table = report.render_table();
        assert!(table.contains("No conflict"));
    }
}
