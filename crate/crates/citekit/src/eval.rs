//! Evaluation procedures: correctness, short- and long-form citation
//! precision/recall, doc-ID memorization probes, and title-distinctiveness
//! analysis.

use crate::bm25::{rank_texts, Bm25Params};
use crate::cite::CitedResponse;
use crate::corpus::{Corpus, TitleRegistry};
use crate::error::{Error, Result};
use crate::model::{cosine, EmbedderClient, EntailmentClient, GeneratorClient, ScorerClient};
use crate::text::word_spans;
use crate::token::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Short-form item: one fact, one gold document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShortFormItem {
    pub id: String,
    pub question: String,
    pub model_answer: String,
    pub gold_title: String,
    pub gold_answer: String,
}

/// Precision is the fraction of citations equal to the gold title (0 when
/// there are none — reported separately as the no-citation rate); recall is
/// 1 when the gold title appears, else 0.
pub fn shortform_citation_metrics(parsed: &CitedResponse, gold_title: &str) -> (f64, f64) {
    let citations = parsed.all_citations();
    if citations.is_empty() {
        return (0.0, 0.0);
    }
    let matching = citations.iter().filter(|c| **c == gold_title).count();
    let precision = matching as f64 / citations.len() as f64;
    let recall = if matching > 0 { 1.0 } else { 0.0 };
    (precision, recall)
}

/// Fraction of gold strings appearing as case-sensitive substrings of the
/// answer. An empty gold list scores 0.
pub fn em_recall(answer: &str, golds: &[String]) -> f64 {
    if golds.is_empty() {
        return 0.0;
    }
    let hits = golds.iter().filter(|g| answer.contains(g.as_str())).count();
    hits as f64 / golds.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub citations: Vec<String>,
}

/// Long-form item: multiple claims, each citing zero or more titles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongFormItem {
    pub id: String,
    pub question: String,
    pub model_answer: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    /// Pre-decomposed claims; when absent the answer is decomposed via the
    /// claim-decomposition client (or directly from its citation structure).
    #[serde(default)]
    pub claims: Option<Vec<Claim>>,
}

/// Claims recovered from the model's own citation structure: each statement
/// with its citation set, skipping whitespace-only statements.
pub fn claims_from_parse(parsed: &CitedResponse) -> Vec<Claim> {
    parsed
        .statements
        .iter()
        .filter(|s| !s.text.trim().is_empty())
        .map(|s| Claim {
            text: s.text.trim().to_owned(),
            citations: s.citations.clone(),
        })
        .collect()
}

/// Decomposes an answer into claims through a generator, expecting
/// `CLAIM: … ||| CITATIONS: a; b` lines back.
pub fn decompose_claims(
    answer: &str,
    gen: &dyn GeneratorClient,
    template: &str,
) -> Result<Vec<Claim>> {
    let prompt = template.replace("[answer]", answer);
    let response = gen.generate(&prompt)?;
    let mut claims = Vec::new();
    for line in response.lines() {
        let Some(rest) = line.trim().strip_prefix("CLAIM:") else {
            continue;
        };
        let (text, cites) = match rest.split_once("|||") {
            Some((t, c)) => (t.trim(), c.trim().strip_prefix("CITATIONS:").unwrap_or(c).trim()),
            None => (rest.trim(), ""),
        };
        if text.is_empty() {
            continue;
        }
        let citations: Vec<String> = cites
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_owned)
            .collect();
        claims.push(Claim {
            text: text.to_owned(),
            citations,
        });
    }
    Ok(claims)
}

#[derive(Debug, Clone, Copy)]
pub struct EntailOptions {
    pub tau: f64,
    pub chunk_tokens: usize,
    pub max_chunks: usize,
    pub bm25: Bm25Params,
}

impl Default for EntailOptions {
    fn default() -> Self {
        EntailOptions {
            tau: 0.5,
            chunk_tokens: 512,
            max_chunks: 5,
            bm25: Bm25Params::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LongFormScore {
    pub precision: f64,
    pub recall: f64,
    pub total_citations: usize,
    pub supported_citations: usize,
    pub total_claims: usize,
    pub supported_claims: usize,
    pub invalid_citations: usize,
}

/// A citation supports its claim when any evidence chunk of the cited
/// document entails the claim. Documents longer than `max_chunks` evidence
/// chunks have their chunks ranked by BM25 against the claim and only the
/// top `max_chunks` checked. Precision is supported citations over all
/// citations; recall is the fraction of claims any of whose citations
/// supports it. Uncited claims count as unsupported. Citations that resolve
/// to no document are unsupported and flagged invalid.
pub fn longform_citation_metrics(
    claims: &[Claim],
    corpus: &Corpus,
    registry: &TitleRegistry,
    entailment: &dyn EntailmentClient,
    tokenizer: &dyn Tokenizer,
    opts: &EntailOptions,
) -> Result<LongFormScore> {
    let mut score = LongFormScore {
        total_claims: claims.len(),
        ..Default::default()
    };
    for claim in claims {
        let mut claim_supported = false;
        for citation in &claim.citations {
            score.total_citations += 1;
            let doc = registry
                .doc_key_of(citation)
                .and_then(|key| corpus.get(key));
            let Some(doc) = doc else {
                score.invalid_citations += 1;
                continue;
            };
            let tokens = tokenizer.tokenize(&doc.content);
            let chunks: Vec<String> = tokens
                .chunks(opts.chunk_tokens.max(1))
                .map(|w| w.join(" "))
                .collect();
            let selected: Vec<&str> = if chunks.len() > opts.max_chunks {
                let refs: Vec<&str> = chunks.iter().map(String::as_str).collect();
                rank_texts(&refs, &claim.text, opts.max_chunks, opts.bm25)
                    .into_iter()
                    .map(|i| refs[i])
                    .collect()
            } else {
                chunks.iter().map(String::as_str).collect()
            };
            let mut supported = false;
            for chunk in selected {
                let (_, entailed) = entailment.entails(chunk, &claim.text, opts.tau)?;
                if entailed {
                    supported = true;
                    break;
                }
            }
            if supported {
                score.supported_citations += 1;
                claim_supported = true;
            }
        }
        if claim_supported {
            score.supported_claims += 1;
        }
    }
    score.precision = if score.total_citations > 0 {
        score.supported_citations as f64 / score.total_citations as f64
    } else {
        0.0
    };
    score.recall = if score.total_claims > 0 {
        score.supported_claims as f64 / score.total_claims as f64
    } else {
        0.0
    };
    Ok(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeMode {
    FullDoc,
    PartialDoc,
    GoldQa,
    ModelQa,
}

impl std::str::FromStr for ProbeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "fulldoc" | "full-doc" | "full_doc" => Ok(ProbeMode::FullDoc),
            "partialdoc" | "partial-doc" | "partial_doc" => Ok(ProbeMode::PartialDoc),
            "goldqa" | "gold-qa" | "gold_qa" => Ok(ProbeMode::GoldQa),
            "modelqa" | "model-qa" | "model_qa" => Ok(ProbeMode::ModelQa),
            other => Err(format!("unknown probe mode `{other}`")),
        }
    }
}

/// One probe item; which fields matter depends on the mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeItem {
    pub id: String,
    pub doc_key: String,
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub gold_answer: Option<String>,
    #[serde(default)]
    pub model_answer: Option<String>,
}

/// Connective inserted between the probe context and a candidate title.
pub const PROBE_CUE: &str = "\nTitle: ";

/// Middle third of the content by words; the whole content when it has
/// fewer than three words.
pub fn middle_third(content: &str) -> String {
    let words = word_spans(content);
    if words.len() < 3 {
        return content.trim().to_owned();
    }
    let lo = words.len() / 3;
    let hi = words.len() * 2 / 3;
    content[words[lo].0..words[hi - 1].1].to_owned()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    pub evaluated: usize,
    pub dropped: usize,
    /// k → hit@k over evaluated items.
    pub hit_at: BTreeMap<usize, f64>,
}

/// Ranks `candidates` by `score_sequence(context + cue, candidate)`
/// descending, deterministic ties by ascending title.
pub fn rank_candidates(
    scorer: &dyn ScorerClient,
    context: &str,
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    let cued = format!("{context}{PROBE_CUE}");
    let mut scored = Vec::with_capacity(candidates.len());
    for title in candidates {
        let s = scorer.score_sequence(&cued, title)?;
        scored.push((title.clone(), s));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored)
}

/// Ranks candidate titles by summed log-probability for each item and
/// reports hit@k. The candidate pool must include each item's true title;
/// items whose scorer calls fail are dropped and counted.
pub fn memorization_probe(
    items: &[ProbeItem],
    corpus: &Corpus,
    registry: &TitleRegistry,
    scorer: &dyn ScorerClient,
    mode: ProbeMode,
    candidates: &[String],
    ks: &[usize],
) -> Result<ProbeReport> {
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut evaluated = 0usize;
    let mut dropped = 0usize;

    for item in items {
        let Some(true_title) = registry.title_of(&item.doc_key) else {
            dropped += 1;
            continue;
        };
        if !candidates.iter().any(|c| c == true_title) {
            return Err(Error::Contract(format!(
                "candidate pool missing true title {true_title:?}"
            )));
        }
        let context = match mode {
            ProbeMode::FullDoc => match corpus.get(&item.doc_key) {
                Some(d) => d.content.clone(),
                None => {
                    dropped += 1;
                    continue;
                }
            },
            ProbeMode::PartialDoc => match corpus.get(&item.doc_key) {
                Some(d) => middle_third(&d.content),
                None => {
                    dropped += 1;
                    continue;
                }
            },
            ProbeMode::GoldQa => match (&item.question, &item.gold_answer) {
                (Some(q), Some(a)) => format!("{q}\n{a}"),
                _ => {
                    dropped += 1;
                    continue;
                }
            },
            ProbeMode::ModelQa => match (&item.question, &item.model_answer) {
                (Some(q), Some(a)) => format!("{q}\n{a}"),
                _ => {
                    dropped += 1;
                    continue;
                }
            },
        };
        let ranked = match rank_candidates(scorer, &context, candidates) {
            Ok(r) => r,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        let position = ranked
            .iter()
            .position(|(t, _)| t == true_title)
            .expect("true title is in the pool");
        evaluated += 1;
        for (&k, count) in hits.iter_mut() {
            if position < k {
                *count += 1;
            }
        }
    }

    let hit_at = hits
        .into_iter()
        .map(|(k, c)| (k, if evaluated > 0 { c as f64 / evaluated as f64 } else { 0.0 }))
        .collect();
    Ok(ProbeReport {
        mode,
        evaluated,
        dropped,
        hit_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistinctBin {
    Easy,
    Medium,
    Hard,
    VeryHard,
}

impl DistinctBin {
    pub fn from_rank(rank: usize, bins: (usize, usize, usize)) -> Self {
        if rank <= bins.0 {
            DistinctBin::Easy
        } else if rank <= bins.1 {
            DistinctBin::Medium
        } else if rank <= bins.2 {
            DistinctBin::Hard
        } else {
            DistinctBin::VeryHard
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistinctItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub gold_title: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistinctRow {
    pub id: String,
    pub rank: usize,
    pub bin: DistinctBin,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BinStat {
    pub count: usize,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistinctReport {
    pub rows: Vec<DistinctRow>,
    pub bins: BTreeMap<DistinctBin, BinStat>,
    pub overall_mean_rank: f64,
}

/// Embeds each item's question+answer statement, ranks the true title among
/// all registry titles by cosine similarity (rank = 1 + number of strictly
/// more similar titles), and bins the ranks.
pub fn title_distinctiveness(
    items: &[DistinctItem],
    registry: &TitleRegistry,
    embedder: &dyn EmbedderClient,
    bins: (usize, usize, usize),
) -> Result<DistinctReport> {
    let titles: Vec<&str> = registry.titles().collect();
    let title_vectors: Vec<Vec<f32>> = titles
        .iter()
        .map(|t| embedder.embed(t))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(items.len());
    let mut per_bin: BTreeMap<DistinctBin, (usize, usize)> = BTreeMap::new();
    let mut rank_sum = 0usize;
    for item in items {
        let true_pos = titles
            .iter()
            .position(|t| *t == item.gold_title)
            .ok_or_else(|| {
                Error::Contract(format!("gold title {:?} not in registry", item.gold_title))
            })?;
        let statement = format!("{} {}", item.question, item.answer);
        let vector = embedder.embed(&statement)?;
        let sims: Vec<f64> = title_vectors
            .iter()
            .map(|tv| cosine(&vector, tv))
            .collect::<Result<_>>()?;
        let true_sim = sims[true_pos];
        let rank = 1 + sims.iter().filter(|&&s| s > true_sim).count();
        let bin = DistinctBin::from_rank(rank, bins);
        let slot = per_bin.entry(bin).or_insert((0, 0));
        slot.0 += 1;
        slot.1 += rank;
        rank_sum += rank;
        rows.push(DistinctRow {
            id: item.id.clone(),
            rank,
            bin,
        });
    }
    let bins_stats = per_bin
        .into_iter()
        .map(|(bin, (count, sum))| {
            (
                bin,
                BinStat {
                    count,
                    mean_rank: sum as f64 / count as f64,
                },
            )
        })
        .collect();
    let overall_mean_rank = if rows.is_empty() {
        0.0
    } else {
        rank_sum as f64 / rows.len() as f64
    };
    Ok(DistinctReport {
        rows,
        bins: bins_stats,
        overall_mean_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cite::parse_citations;
    use crate::corpus::{Document, Source};
    use crate::model::mock::{MockEmbedder, MockScorer, ScriptedEntailment};
    use crate::model::FnGenerator;
    use crate::text::MarkerFormat;
    use crate::token::WhitespaceTokenizer;
    use std::collections::HashMap;
    use std::sync::Arc;

    fn corpus_and_registry(docs: &[(&str, &str, &str)]) -> (Corpus, TitleRegistry) {
        let documents: Vec<Document> = docs
            .iter()
            .map(|(k, t, c)| Document {
                doc_key: (*k).to_owned(),
                source: Source::Other,
                title: (*t).to_owned(),
                content: (*c).to_owned(),
                word_count: c.split_whitespace().count(),
                token_count: c.split_whitespace().count(),
            })
            .collect();
        let mut corpus = Corpus::from_documents(documents).unwrap();
        let namer = FnGenerator(|_: &str| unreachable!());
        let registry = crate::corpus::assign_unique_titles(
            &mut corpus,
            &namer,
            &crate::prompt::PromptSet::default(),
            &Default::default(),
        )
        .unwrap();
        (corpus, registry)
    }

    #[test]
    fn shortform_definitions() {
        let m = MarkerFormat::default();
        let only_gold = parse_citations("fact <|G|>", &m).unwrap();
        assert_eq!(shortform_citation_metrics(&only_gold, "G"), (1.0, 1.0));

        let mixed = parse_citations("fact <|G|><|Other|>", &m).unwrap();
        assert_eq!(shortform_citation_metrics(&mixed, "G"), (0.5, 1.0));

        let none = parse_citations("fact with no citations", &m).unwrap();
        assert_eq!(shortform_citation_metrics(&none, "G"), (0.0, 0.0));
    }

    #[test]
    fn em_recall_cases() {
        let golds = vec!["Paris".to_owned(), "Lyon".to_owned(), "Nice".to_owned()];
        assert!((em_recall("Paris and Lyon are cities", &golds) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(em_recall("", &golds), 0.0);
        assert_eq!(em_recall("paris", &["Paris".to_owned()]), 0.0); // case-sensitive
    }

    #[test]
    fn longform_simple_cases() {
        let (corpus, registry) =
            corpus_and_registry(&[("a", "Doc A", "alpha beta gamma"), ("b", "Doc B", "delta")]);
        let yes = ScriptedEntailment {
            table: HashMap::new(),
            default: 1.0,
        };
        let claims = vec![Claim {
            text: "claim one".to_owned(),
            citations: vec!["Doc A".to_owned()],
        }];
        let s = longform_citation_metrics(
            &claims,
            &corpus,
            &registry,
            &yes,
            &WhitespaceTokenizer,
            &EntailOptions::default(),
        )
        .unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));

        let claims = vec![
            Claim {
                text: "cited claim".to_owned(),
                citations: vec!["Doc A".to_owned()],
            },
            Claim {
                text: "uncited claim".to_owned(),
                citations: vec![],
            },
        ];
        let s = longform_citation_metrics(
            &claims,
            &corpus,
            &registry,
            &yes,
            &WhitespaceTokenizer,
            &EntailOptions::default(),
        )
        .unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
    }

    #[test]
    fn longform_invalid_citation_flagged_unsupported() {
        let (corpus, registry) = corpus_and_registry(&[("a", "Doc A", "alpha beta")]);
        let yes = ScriptedEntailment {
            table: HashMap::new(),
            default: 1.0,
        };
        let claims = vec![Claim {
            text: "claim".to_owned(),
            citations: vec!["Ghost Title".to_owned()],
        }];
        let s = longform_citation_metrics(
            &claims,
            &corpus,
            &registry,
            &yes,
            &WhitespaceTokenizer,
            &EntailOptions::default(),
        )
        .unwrap();
        assert_eq!(s.invalid_citations, 1);
        assert_eq!((s.precision, s.recall), (0.0, 0.0));
    }

    #[test]
    fn longform_entailment_checks_evidence_chunks() {
        // 1103-word doc → three 512-token chunks; only the last contains the
        // claim words, and the scripted table entails just that chunk
        let mut words: Vec<String> = (0..1100).map(|i| format!("filler{i}")).collect();
        words.extend(["zebra", "stripe", "pattern"].map(String::from));
        let content = words.join(" ");
        let (corpus, registry) = corpus_and_registry(&[("a", "Doc A", &content)]);
        let claim_text = "zebra stripe pattern";
        let chunk_with_claim = words[1024..].join(" ");
        let mut table = HashMap::new();
        table.insert((chunk_with_claim, claim_text.to_owned()), 1.0);
        let scripted = ScriptedEntailment { table, default: 0.0 };
        let claims = vec![Claim {
            text: claim_text.to_owned(),
            citations: vec!["Doc A".to_owned()],
        }];
        let s = longform_citation_metrics(
            &claims,
            &corpus,
            &registry,
            &scripted,
            &WhitespaceTokenizer,
            &EntailOptions::default(),
        )
        .unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn decompose_claim_lines() {
        let gen = FnGenerator(|_: &str| {
            Ok("CLAIM: the sky is blue ||| CITATIONS: Sky Doc; Weather Doc\nCLAIM: water is wet ||| CITATIONS:\nnot a claim line".to_owned())
        });
        let claims = decompose_claims("whatever", &gen, "[answer]").unwrap();
        assert_eq!(claims.len(), 2);
        assert_eq!(claims[0].citations, vec!["Sky Doc", "Weather Doc"]);
        assert!(claims[1].citations.is_empty());
    }

    #[test]
    fn biased_scorer_hits_at_one() {
        struct Biased;
        impl ScorerClient for Biased {
            fn score_sequence(&self, context: &str, continuation: &str) -> Result<f64> {
                // contexts are "content {i} words"; titles are "Title {i}"
                let idx = context
                    .split_whitespace()
                    .nth(1)
                    .and_then(|s| s.parse::<usize>().ok());
                let cand = continuation
                    .split_whitespace()
                    .nth(1)
                    .and_then(|s| s.parse::<usize>().ok());
                Ok(if idx.is_some() && idx == cand { -0.001 } else { -50.0 })
            }
        }
        let docs: Vec<(String, String, String)> = (0..5)
            .map(|i| (format!("k{i}"), format!("Title {i}"), format!("content {i} words")))
            .collect();
        let doc_refs: Vec<(&str, &str, &str)> = docs
            .iter()
            .map(|(k, t, c)| (k.as_str(), t.as_str(), c.as_str()))
            .collect();
        let (corpus, registry) = corpus_and_registry(&doc_refs);
        let items: Vec<ProbeItem> = (0..5)
            .map(|i| ProbeItem {
                id: format!("i{i}"),
                doc_key: format!("k{i}"),
                question: None,
                gold_answer: None,
                model_answer: None,
            })
            .collect();
        let candidates: Vec<String> = registry.titles().map(str::to_owned).collect();
        let report = memorization_probe(
            &items,
            &corpus,
            &registry,
            &Biased,
            ProbeMode::FullDoc,
            &candidates,
            &[1, 10],
        )
        .unwrap();
        assert_eq!(report.hit_at[&1], 1.0);
        assert_eq!(report.hit_at[&10], 1.0);
    }

    #[test]
    fn probe_matches_brute_force_ranking() {
        let docs: Vec<(String, String, String)> = (0..8)
            .map(|i| {
                (
                    format!("k{i}"),
                    format!("Unique Title {i}"),
                    format!("document body {i} with several more words"),
                )
            })
            .collect();
        let doc_refs: Vec<(&str, &str, &str)> = docs
            .iter()
            .map(|(k, t, c)| (k.as_str(), t.as_str(), c.as_str()))
            .collect();
        let (corpus, registry) = corpus_and_registry(&doc_refs);
        let scorer = MockScorer {
            seed: 5,
            tokenizer: Arc::new(WhitespaceTokenizer),
        };
        let candidates: Vec<String> = registry.titles().map(str::to_owned).collect();
        let items: Vec<ProbeItem> = (0..8)
            .map(|i| ProbeItem {
                id: format!("i{i}"),
                doc_key: format!("k{i}"),
                question: None,
                gold_answer: None,
                model_answer: None,
            })
            .collect();
        let report = memorization_probe(
            &items,
            &corpus,
            &registry,
            &scorer,
            ProbeMode::PartialDoc,
            &candidates,
            &[1, 3, 10],
        )
        .unwrap();
        // brute force: recompute ranks by hand
        let mut hit1 = 0;
        let mut hit3 = 0;
        for item in &items {
            let context = format!(
                "{}{}",
                middle_third(&corpus.get(&item.doc_key).unwrap().content),
                PROBE_CUE
            );
            let mut scored: Vec<(f64, &String)> = candidates
                .iter()
                .map(|t| (scorer.score_sequence(&context, t).unwrap(), t))
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
            let truth = registry.title_of(&item.doc_key).unwrap();
            let pos = scored.iter().position(|(_, t)| *t == truth).unwrap();
            if pos < 1 {
                hit1 += 1;
            }
            if pos < 3 {
                hit3 += 1;
            }
        }
        assert!((report.hit_at[&1] - hit1 as f64 / 8.0).abs() < 1e-12);
        assert!((report.hit_at[&3] - hit3 as f64 / 8.0).abs() < 1e-12);
        assert!(report.hit_at[&1] <= report.hit_at[&10]);
    }

    #[test]
    fn distinctiveness_identity_statement_ranks_first() {
        let (_, registry) = corpus_and_registry(&[
            ("a", "Migration Patterns of Arctic Terns", "doc a"),
            ("b", "Deep Sea Vent Ecosystems", "doc b"),
            ("c", "Bronze Age Trade Routes", "doc c"),
        ]);
        let embedder = MockEmbedder::new(4);
        let items = vec![DistinctItem {
            id: "x".to_owned(),
            question: "Migration Patterns of".to_owned(),
            answer: "Arctic Terns".to_owned(),
            gold_title: "Migration Patterns of Arctic Terns".to_owned(),
        }];
        let report = title_distinctiveness(&items, &registry, &embedder, (3, 30, 300)).unwrap();
        assert_eq!(report.rows[0].rank, 1);
        assert_eq!(report.rows[0].bin, DistinctBin::Easy);
    }

    #[test]
    fn distinctiveness_matches_brute_force_argsort() {
        let titles = [
            "Alpha Particles in Cloud Chambers",
            "Beta Decay Measurement Methods",
            "Gamma Ray Burst Catalogs",
            "Delta Wing Aerodynamics",
            "Epsilon Eridani Observations",
        ];
        let docs: Vec<(String, String, String)> = titles
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("k{i}"), (*t).to_owned(), format!("content {i}")))
            .collect();
        let doc_refs: Vec<(&str, &str, &str)> = docs
            .iter()
            .map(|(k, t, c)| (k.as_str(), t.as_str(), c.as_str()))
            .collect();
        let (_, registry) = corpus_and_registry(&doc_refs);
        let embedder = MockEmbedder::new(9);
        let items: Vec<DistinctItem> = (0..5)
            .map(|i| DistinctItem {
                id: format!("i{i}"),
                question: format!("what about measurement {i}"),
                answer: format!("observations of decay {i}"),
                gold_title: titles[i].to_owned(),
            })
            .collect();
        let report = title_distinctiveness(&items, &registry, &embedder, (3, 30, 300)).unwrap();
        for (row, item) in report.rows.iter().zip(&items) {
            let statement = format!("{} {}", item.question, item.answer);
            let sv = embedder.embed(&statement).unwrap();
            let true_sim = cosine(&sv, &embedder.embed(&item.gold_title).unwrap()).unwrap();
            let brute = 1 + registry
                .titles()
                .filter(|t| cosine(&sv, &embedder.embed(t).unwrap()).unwrap() > true_sim)
                .count();
            assert_eq!(row.rank, brute);
            assert!(row.rank >= 1 && row.rank <= registry.len());
        }
    }
}
