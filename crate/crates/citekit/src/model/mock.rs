//! Deterministic seeded mocks for every client capability.
//!
//! Mocks derive all randomness from [`fnv1a64`](super::fnv1a64) over the
//! (seed, input) pair, so identical inputs give identical outputs across
//! runs, processes, and platforms. The stage mocks (`MockNamer`,
//! `MockEntityGenerator`, …) understand the default prompt templates well
//! enough to produce well-formed, parseable stage output; when a prompt is
//! not recognized they fall back to hash-derived text, still deterministic.

use super::{fnv1a64, unit_f64, EmbedderClient, EntailmentClient, GeneratorClient, ScorerClient};
use crate::error::{Error, Result};
use crate::text::MarkerFormat;
use crate::token::Tokenizer;
use std::collections::HashMap;
use std::sync::Arc;

const RENAME_WORDS: &[&str] = &[
    "Revisited", "Overview", "Notes", "Report", "Survey", "Digest", "Primer", "Companion",
    "Abridged", "Expanded", "Chronicle", "Handbook", "Review", "Summary", "Field Guide",
    "Casebook", "Reader", "Compendium", "Briefing", "Retrospective", "Analysis", "Profile",
    "Dossier", "Almanac",
];

/// Text of the first line that starts with `label`, trimmed.
fn after_label<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

/// Everything after the first `start` label, cut at the last occurrence of
/// `end` when present.
fn between<'a>(prompt: &'a str, start: &str, end: Option<&str>) -> Option<&'a str> {
    let s = prompt.find(start)? + start.len();
    let rest = &prompt[s..];
    let e = end.and_then(|e| rest.rfind(e)).unwrap_or(rest.len());
    Some(rest[..e].trim())
}

/// Titles of all `Title: …` lines in a prompt, in order.
fn title_lines(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|l| l.strip_prefix("Title: "))
        .map(|t| t.trim().to_owned())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Mock title namer. Generates descriptive titles for untitled documents and
/// suffixed variants for rename requests against the default templates.
pub struct MockNamer {
    pub seed: u64,
}

impl GeneratorClient for MockNamer {
    fn generate(&self, prompt: &str) -> Result<String> {
        let h = fnv1a64(self.seed, &["namer", prompt]);
        if let Some(current) = after_label(prompt, "Current title:") {
            let word = RENAME_WORDS[(h % RENAME_WORDS.len() as u64) as usize];
            return Ok(format!("{current} ({word})"));
        }
        if let Some(excerpt) = after_label(prompt, "Excerpt:") {
            let head: Vec<&str> = excerpt.split_whitespace().take(5).collect();
            if !head.is_empty() {
                return Ok(format!("{} — Notes", head.join(" ")));
            }
        }
        Ok(format!("Untitled Document {:08x}", h as u32))
    }
}

/// Mock entity extractor: returns capitalized words from the document
/// section, one per line, deduplicated case-insensitively.
pub struct MockEntityGenerator {
    pub seed: u64,
}

impl GeneratorClient for MockEntityGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        let doc = between(prompt, "Document: ", Some("Only return the 20"))
            .unwrap_or(prompt)
            .to_owned();
        let mut seen = Vec::new();
        let mut out = Vec::new();
        for word in doc.split_whitespace() {
            let clean: String = word
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_owned();
            if clean.chars().count() < 3 {
                continue;
            }
            if !clean.chars().next().unwrap().is_uppercase() {
                continue;
            }
            let key = clean.to_lowercase();
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            out.push(clean);
            if out.len() == 20 {
                break;
            }
        }
        if out.is_empty() {
            out = doc
                .split_whitespace()
                .take(5)
                .map(str::to_owned)
                .collect();
        }
        Ok(out.join("\n"))
    }
}

/// Mock forward QA generator. Produces two question/answer blocks per call.
/// To exercise the downstream doc-ID repair paths, the question sometimes
/// carries the full tagged title, sometimes a truncated untagged one, and
/// sometimes no title at all — chosen by hash, never by ambient randomness.
pub struct MockForwardQa {
    pub seed: u64,
}

impl GeneratorClient for MockForwardQa {
    fn generate(&self, prompt: &str) -> Result<String> {
        let title = after_label(prompt, "Title:").unwrap_or("Unknown Title").to_owned();
        let entity = after_label(prompt, "Entity:").unwrap_or("the subject").to_owned();
        let doc = between(prompt, "Document: ", Some("Entity:")).unwrap_or("");
        let gist: Vec<&str> = doc.split_whitespace().take(12).collect();
        let gist = gist.join(" ");

        let h = fnv1a64(self.seed, &["forward", prompt]);
        let mode = h % 10;
        let title_words: Vec<&str> = title.split_whitespace().collect();
        let mention = if mode < 6 || title_words.len() <= 2 {
            format!("<source>{title}</source>")
        } else if mode < 9 {
            // truncated, untagged: repair must recover the canonical title
            title_words[..2].join(" ")
        } else {
            String::new()
        };

        let q1 = if mention.is_empty() {
            format!("How is {entity} characterized in this account?")
        } else {
            format!("How is {entity} related to the content of the document {mention}?")
        };
        let q2 = if mention.is_empty() {
            format!("Why does {entity} matter here?")
        } else {
            format!("What role does {entity} play according to {mention}?")
        };
        let a1 = format!(
            "According to <source>{title}</source>, {entity} appears in the passage beginning \"{gist}\". The document ties {entity} directly to its main topic."
        );
        let a2 = format!(
            "The document discusses {entity} alongside its core material: {gist}. This situates {entity} within the document's overall argument."
        );
        Ok(format!(
            "**Question 1:**\n{q1}\n\n**Answer:**\n{a1}\n\n**Question 2:**\n{q2}\n\n**Answer:**\n{a2}"
        ))
    }
}

/// Mock backward generator: instruction paragraph plus an answer paragraph
/// whose claims cite the prompt's document titles with `<source>` tags.
/// A hash-chosen fraction of responses carries a noisy or truncated
/// citation, so the invalid-citation filter has real work to do offline.
pub struct MockBackwardGenerator {
    pub seed: u64,
    /// Fraction of responses given a noisy-pattern citation (default 0.05).
    pub noise_rate: f64,
}

impl MockBackwardGenerator {
    pub fn new(seed: u64) -> Self {
        MockBackwardGenerator {
            seed,
            noise_rate: 0.05,
        }
    }
}

impl GeneratorClient for MockBackwardGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        let titles = title_lines(prompt);
        if titles.is_empty() {
            return Ok("Summarize the material.\n\nNo sources were given.".to_owned());
        }
        let h = fnv1a64(self.seed, &["backward", prompt]);
        let u = unit_f64(h);

        let topic: Vec<&str> = titles[0].split_whitespace().take(4).collect();
        let instruction = format!(
            "Explain how {} relates to the surrounding material, reconciling the different accounts.",
            topic.join(" ")
        );

        let mut cites: Vec<String> = Vec::new();
        for (i, t) in titles.iter().enumerate() {
            let hw = fnv1a64(h, &["cite", t]);
            let words: Vec<&str> = t.split_whitespace().collect();
            if u < self.noise_rate && i == titles.len() - 1 {
                // noisy generic placeholder
                let noisy = ["document 1", "title: overview", "doc 2", "source 3"];
                cites.push(noisy[(hw % 4) as usize].to_owned());
            } else if hw % 100 < 15 && words.len() > 3 {
                // truncated but recoverable citation
                cites.push(words[..words.len() - 1].join(" "));
            } else {
                cites.push(t.clone());
            }
        }

        let mut answer = String::new();
        for (i, c) in cites.iter().enumerate() {
            answer.push_str(&format!(
                "Account {} establishes one part of the picture <source>{}</source>. ",
                i + 1,
                c
            ));
        }
        answer.push_str(&format!(
            "Taken together, the sources agree on the core facts <source>{}</source>.",
            cites[0]
        ));

        if unit_f64(fnv1a64(h, &["shape"])) < 0.02 {
            // single-paragraph response: exercises the unparseable path
            return Ok(instruction);
        }
        Ok(format!("{instruction}\n\n{answer}"))
    }
}

/// Mock router for the retrieval-quality harness. Abstains on external
/// prompts at a fixed hash rate and cites retrieved or remembered titles.
pub struct MockRouter {
    pub seed: u64,
    pub titles: Vec<String>,
    pub marker: MarkerFormat,
    pub abstain_rate: f64,
}

impl GeneratorClient for MockRouter {
    fn generate(&self, prompt: &str) -> Result<String> {
        let h = fnv1a64(self.seed, &["router", prompt]);
        let retrieved = title_lines(prompt);
        let can_abstain = prompt.contains(super::super::prompt::ABSTAIN_MARKER);
        if can_abstain && unit_f64(h) < self.abstain_rate {
            return Ok(super::super::prompt::ABSTAIN_MARKER.to_owned());
        }
        let question = after_label(prompt, "Question:").unwrap_or("");
        let pool = if retrieved.is_empty() {
            &self.titles
        } else {
            &retrieved
        };
        let cite = if pool.is_empty() {
            String::new()
        } else {
            self.marker
                .wrap(&pool[(h % pool.len() as u64) as usize])
        };
        let body = format!(
            "Considering \"{}\", the evidence points to a single consistent account. {}",
            question.chars().take(60).collect::<String>(),
            cite
        );
        if prompt.contains("Sufficiency:") {
            Ok(format!("the documents are partially sufficient.\n{body}"))
        } else {
            Ok(body)
        }
    }
}

/// Mock claim decomposer: splits the embedded answer at marker boundaries
/// and emits `CLAIM: … ||| CITATIONS: …` lines.
pub struct MockDecomposer {
    pub marker: MarkerFormat,
}

impl GeneratorClient for MockDecomposer {
    fn generate(&self, prompt: &str) -> Result<String> {
        let answer = between(prompt, "Answer: ", Some("Return one claim per line"))
            .unwrap_or(prompt);
        let parsed = crate::cite::parse_citations(answer, &self.marker)
            .map_err(|e| Error::Client { attempts: 1, message: e.to_string() })?;
        let mut lines = Vec::new();
        for st in parsed.statements {
            let text = st.text.trim();
            if text.is_empty() {
                continue;
            }
            lines.push(format!("CLAIM: {} ||| CITATIONS: {}", text, st.citations.join("; ")));
        }
        Ok(lines.join("\n"))
    }
}

/// Generator with an exact response table and an optional fallback.
/// Lookups are by full prompt; missing entries use the fallback or fail.
pub type FallbackFn = Box<dyn Fn(&str) -> Result<String> + Send + Sync>;

pub struct ScriptedGenerator {
    pub table: HashMap<String, String>,
    pub fallback: Option<FallbackFn>,
}

impl ScriptedGenerator {
    pub fn from_table(table: HashMap<String, String>) -> Self {
        ScriptedGenerator { table, fallback: None }
    }
}

impl GeneratorClient for ScriptedGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        if let Some(hit) = self.table.get(prompt) {
            return Ok(hit.clone());
        }
        match &self.fallback {
            Some(f) => f(prompt),
            None => Err(Error::Client {
                attempts: 1,
                message: "no scripted response for prompt".to_owned(),
            }),
        }
    }
}

/// Mock scorer: each token's conditional log-probability is a hash of the
/// full preceding token sequence and the token, so scores are additive over
/// any token-boundary split of the continuation.
pub struct MockScorer {
    pub seed: u64,
    pub tokenizer: Arc<dyn Tokenizer>,
}

impl MockScorer {
    fn token_logprob(&self, prefix: &[String], token: &str) -> f64 {
        let mut parts: Vec<&str> = prefix.iter().map(String::as_str).collect();
        parts.push(token);
        let u = unit_f64(fnv1a64(self.seed, &parts));
        -0.5 - 7.5 * u
    }
}

impl ScorerClient for MockScorer {
    fn score_sequence(&self, context: &str, continuation: &str) -> Result<f64> {
        let cont = self.tokenizer.tokenize(continuation);
        if cont.is_empty() {
            return Err(Error::Contract("continuation must be non-empty".to_owned()));
        }
        let mut prefix = self.tokenizer.tokenize(context);
        let mut total = 0.0;
        for tok in cont {
            total += self.token_logprob(&prefix, &tok);
            prefix.push(tok);
        }
        Ok(total)
    }
}

/// Mock embedder: character trigrams hashed into a fixed-dimension vector
/// with ±1 signed counts, L2-normalized.
pub struct MockEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        MockEmbedder { seed, dim: 256 }
    }
}

impl EmbedderClient for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        if text.is_empty() {
            return Err(Error::Contract("cannot embed empty text".to_owned()));
        }
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0f32; self.dim];
        let grams: Vec<String> = if chars.len() < 3 {
            vec![chars.iter().collect()]
        } else {
            chars.windows(3).map(|w| w.iter().collect()).collect()
        };
        for g in &grams {
            let h = fnv1a64(self.seed, &["tri", g]);
            let idx = (h % self.dim as u64) as usize;
            let sign = if (h >> 62) & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        } else {
            v[0] = 1.0;
        }
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Mock entailment: lexical overlap. Score is the fraction of the claim's
/// analyzed terms present in the premise.
pub struct MockEntailment;

impl EntailmentClient for MockEntailment {
    fn entail(&self, premise: &str, claim: &str) -> Result<f64> {
        let premise_terms: std::collections::HashSet<String> =
            crate::bm25::analyze(premise).into_iter().collect();
        let claim_terms = crate::bm25::analyze(claim);
        if claim_terms.is_empty() {
            return Ok(0.0);
        }
        let hits = claim_terms
            .iter()
            .filter(|t| premise_terms.contains(*t))
            .count();
        Ok(hits as f64 / claim_terms.len() as f64)
    }
}

/// Entailment with an exact (premise, claim) → score table; pairs not in
/// the table score `default`.
pub struct ScriptedEntailment {
    pub table: HashMap<(String, String), f64>,
    pub default: f64,
}

impl EntailmentClient for ScriptedEntailment {
    fn entail(&self, premise: &str, claim: &str) -> Result<f64> {
        Ok(*self
            .table
            .get(&(premise.to_owned(), claim.to_owned()))
            .unwrap_or(&self.default))
    }
}
