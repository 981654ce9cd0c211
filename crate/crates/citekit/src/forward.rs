//! Forward augmentation: identifier → fact training data from single
//! documents. Extracts salient entities, generates entity-anchored QA pairs,
//! and repairs the doc-IDs the generator put in questions.

use crate::corpus::{Document, TitleRegistry};
use crate::error::Result;
use crate::model::GeneratorClient;
use crate::prompt::render;
use crate::records::{PretrainRecord, Variant};
use crate::text::{find_fuzzy_span, split_sentences, MarkerFormat, FUZZY_THRESHOLD};
use crate::token::Tokenizer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Salient entities of one document, in generator order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub doc_key: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairAction {
    /// A tagged span was rewritten to the canonical marked title.
    Marker,
    /// An exact occurrence of the title was wrapped in markers.
    Exact,
    /// A fuzzy partial-title span was replaced by the canonical title.
    Fuzzy,
    /// No candidate span found; the marked title was appended to the first
    /// sentence.
    Injected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairEntry {
    pub raw: String,
    pub canonical: String,
    pub action: RepairAction,
}

/// One generated question/answer pair. After repair, the question contains
/// exactly one marked identifier equal to the registry title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardQa {
    pub doc_key: String,
    pub entity: String,
    pub question: String,
    pub answer: String,
    pub repair_log: Vec<RepairEntry>,
}

/// Outcome of a skippable generation step.
#[derive(Debug)]
pub enum StageOutcome<T> {
    Produced(T),
    Skipped(String),
}

/// Extracts up to `n_max` entities from the generator's newline-separated
/// response. Blank lines and case-insensitive duplicates are dropped.
/// Generator failure or an empty parse skips the document.
pub fn extract_entities(
    doc: &Document,
    n_max: usize,
    gen: &dyn GeneratorClient,
    template: &str,
) -> Result<StageOutcome<EntitySet>> {
    let mut vars = BTreeMap::new();
    vars.insert("document", doc.content.as_str());
    let prompt = render(template, &vars);
    let response = match gen.generate(&prompt) {
        Ok(r) => r,
        Err(e) => return Ok(StageOutcome::Skipped(format!("entity generation failed: {e}"))),
    };
    let mut seen: Vec<String> = Vec::new();
    let mut entities = Vec::new();
    for line in response.lines() {
        let entity = line.trim().trim_matches(|c| c == '-' || c == '*').trim();
        if entity.is_empty() {
            continue;
        }
        let key = entity.to_lowercase();
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        entities.push(entity.to_owned());
        if entities.len() == n_max {
            break;
        }
    }
    if entities.is_empty() {
        return Ok(StageOutcome::Skipped("zero entities parsed".to_owned()));
    }
    Ok(StageOutcome::Produced(EntitySet {
        doc_key: doc.doc_key.clone(),
        entities,
    }))
}

/// Parses `**Question N:** … **Answer:** …` blocks. Pairs missing either side
/// are dropped.
pub fn parse_qa_blocks(response: &str) -> Vec<(String, String)> {
    #[derive(PartialEq)]
    enum Field {
        None,
        Question,
        Answer,
    }
    let mut pairs = Vec::new();
    let mut question = String::new();
    let mut answer = String::new();
    let mut field = Field::None;

    let is_label = |line: &str, word: &str| -> bool {
        let l = line.trim().trim_start_matches("**").to_lowercase();
        l.starts_with(word)
            && l[word.len()..]
                .trim_start_matches(|c: char| c.is_ascii_digit() || c.is_whitespace())
                .starts_with([':', '*'])
    };

    let mut flush = |question: &mut String, answer: &mut String| {
        let q = question.trim().to_owned();
        let a = answer.trim().to_owned();
        if !q.is_empty() && !a.is_empty() {
            pairs.push((q, a));
        }
        question.clear();
        answer.clear();
    };

    for line in response.lines() {
        if is_label(line, "question") {
            flush(&mut question, &mut answer);
            field = Field::Question;
            // inline text after the label, if any
            if let Some(idx) = line.find(':') {
                let rest = line[idx + 1..].trim_start_matches('*').trim();
                if !rest.is_empty() {
                    question.push_str(rest);
                }
            }
            continue;
        }
        if is_label(line, "answer") {
            field = Field::Answer;
            if let Some(idx) = line.find(':') {
                let rest = line[idx + 1..].trim_start_matches('*').trim();
                if !rest.is_empty() {
                    answer.push_str(rest);
                }
            }
            continue;
        }
        match field {
            Field::Question => {
                if !question.is_empty() {
                    question.push('\n');
                }
                question.push_str(line);
            }
            Field::Answer => {
                if !answer.is_empty() {
                    answer.push('\n');
                }
                answer.push_str(line);
            }
            Field::None => {}
        }
    }
    flush(&mut question, &mut answer);
    pairs
}

const SOURCE_OPEN: &str = "<source>";
const SOURCE_CLOSE: &str = "</source>";

fn source_tag_format() -> MarkerFormat {
    MarkerFormat::new(SOURCE_OPEN, SOURCE_CLOSE)
}

/// Rewrites whatever identifier the generator left in `text` into exactly one
/// canonical marked `true_title`:
/// tagged spans (either `<source>…</source>` or the canonical marker form)
/// are rewritten in place; otherwise an exact or fuzzy occurrence of the
/// title is wrapped; otherwise the marked title is appended to the first
/// sentence. Total and idempotent.
pub fn repair_doc_ids(
    text: &str,
    marker: &MarkerFormat,
    true_title: &str,
) -> (String, Vec<RepairEntry>) {
    let wrapped = marker.wrap(true_title);
    let mut log = Vec::new();

    // 1. existing tagged spans, of either form: first becomes the canonical
    //    marker, any others are unwrapped to plain title text
    let mut spans: Vec<(usize, usize, String)> = Vec::new();
    for (s, e, inner) in source_tag_format().spans(text) {
        spans.push((s, e, inner.to_owned()));
    }
    for (s, e, inner) in marker.spans(text) {
        spans.push((s, e, inner.to_owned()));
    }
    spans.sort_by_key(|&(s, _, _)| s);
    if !spans.is_empty() {
        let mut out = String::with_capacity(text.len());
        let mut cursor = 0;
        for (i, (s, e, inner)) in spans.iter().enumerate() {
            if *s < cursor {
                continue; // overlapping span; keep the earlier rewrite
            }
            out.push_str(&text[cursor..*s]);
            if i == 0 {
                out.push_str(&wrapped);
            } else {
                out.push_str(true_title);
            }
            log.push(RepairEntry {
                raw: inner.clone(),
                canonical: true_title.to_owned(),
                action: RepairAction::Marker,
            });
            cursor = *e;
        }
        out.push_str(&text[cursor..]);
        return (out, log);
    }

    // 2. exact or fuzzy occurrence of the title in plain text
    if let Some((s, e, ratio)) = find_fuzzy_span(text, true_title, FUZZY_THRESHOLD) {
        let raw = text[s..e].to_owned();
        let action = if ratio >= 1.0 - 1e-12 {
            RepairAction::Exact
        } else {
            RepairAction::Fuzzy
        };
        let mut out = String::with_capacity(text.len() + wrapped.len());
        out.push_str(&text[..s]);
        out.push_str(&wrapped);
        out.push_str(&text[e..]);
        log.push(RepairEntry {
            raw,
            canonical: true_title.to_owned(),
            action,
        });
        return (out, log);
    }

    // 3. inject after the first sentence (or at the end when there is none)
    let split = split_sentences(text);
    let insert_at = split
        .sentences
        .first()
        .map(|&(_, e)| e)
        .unwrap_or(text.trim_end().len());
    let mut out = String::with_capacity(text.len() + wrapped.len() + 1);
    out.push_str(&text[..insert_at]);
    out.push(' ');
    out.push_str(&wrapped);
    out.push_str(&text[insert_at..]);
    log.push(RepairEntry {
        raw: String::new(),
        canonical: true_title.to_owned(),
        action: RepairAction::Injected,
    });
    (out, log)
}

/// Unwraps `<source>…</source>` tags in answers to plain text, using the
/// canonical title when the tagged span resolves to it.
fn clean_answer(answer: &str, true_title: &str) -> String {
    let tags = source_tag_format();
    let mut out = String::with_capacity(answer.len());
    let mut cursor = 0;
    for (s, e, inner) in tags.spans(answer) {
        out.push_str(&answer[cursor..s]);
        if crate::text::fuzzy_ratio(inner, true_title) >= FUZZY_THRESHOLD {
            out.push_str(true_title);
        } else {
            out.push_str(inner);
        }
        cursor = e;
    }
    out.push_str(&answer[cursor..]);
    out
}

/// Generates QA pairs for one (document, entity) pair and repairs the
/// questions. Unparseable responses yield zero pairs.
pub fn generate_forward_qa(
    doc: &Document,
    entity: &str,
    gen: &dyn GeneratorClient,
    template: &str,
    marker: &MarkerFormat,
    registry: &TitleRegistry,
) -> Result<StageOutcome<Vec<ForwardQa>>> {
    let title = registry
        .title_of(&doc.doc_key)
        .ok_or_else(|| crate::error::Error::Contract(format!(
            "registry does not cover doc_key `{}`",
            doc.doc_key
        )))?;
    let mut vars = BTreeMap::new();
    vars.insert("title", title);
    vars.insert("document", doc.content.as_str());
    vars.insert("entity", entity);
    let prompt = render(template, &vars);
    let response = match gen.generate(&prompt) {
        Ok(r) => r,
        Err(e) => return Ok(StageOutcome::Skipped(format!("qa generation failed: {e}"))),
    };
    let mut out = Vec::new();
    for (question_raw, answer_raw) in parse_qa_blocks(&response) {
        let (question, repair_log) = repair_doc_ids(&question_raw, marker, title);
        let answer = clean_answer(&answer_raw, title);
        if answer.trim().is_empty() {
            continue;
        }
        out.push(ForwardQa {
            doc_key: doc.doc_key.clone(),
            entity: entity.to_owned(),
            question,
            answer,
            repair_log,
        });
    }
    Ok(StageOutcome::Produced(out))
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct ForwardStats {
    pub docs_total: usize,
    pub docs_skipped: usize,
    pub entities_extracted: usize,
    pub qa_responses_skipped: usize,
    pub pairs: usize,
    pub repairs_marker: usize,
    pub repairs_exact: usize,
    pub repairs_fuzzy: usize,
    pub repairs_injected: usize,
    pub tokens: usize,
}

/// Runs the whole forward direction over a corpus: entity extraction then QA
/// generation per (document, entity), in parallel with results committed in
/// (doc order, entity order). Generation calls are bounded by the ambient
/// rayon pool size.
#[allow(clippy::too_many_arguments)]
pub fn run_forward(
    corpus: &crate::corpus::Corpus,
    registry: &TitleRegistry,
    entity_gen: &dyn GeneratorClient,
    qa_gen: &dyn GeneratorClient,
    prompts: &crate::prompt::PromptSet,
    n_max: usize,
    marker: &MarkerFormat,
    tokenizer: &dyn Tokenizer,
    mut diag: impl FnMut(&str),
) -> Result<(Vec<ForwardQa>, ForwardStats)> {
    use rayon::prelude::*;

    let mut stats = ForwardStats {
        docs_total: corpus.len(),
        ..Default::default()
    };

    let extractions: Vec<Result<StageOutcome<EntitySet>>> = corpus
        .documents
        .par_iter()
        .map(|doc| extract_entities(doc, n_max, entity_gen, &prompts.entity_extraction))
        .collect();

    let mut tasks: Vec<(&Document, String)> = Vec::new();
    for (doc, extraction) in corpus.documents.iter().zip(extractions) {
        match extraction? {
            StageOutcome::Produced(set) => {
                stats.entities_extracted += set.entities.len();
                for entity in set.entities {
                    tasks.push((doc, entity));
                }
            }
            StageOutcome::Skipped(reason) => {
                stats.docs_skipped += 1;
                diag(&format!("doc `{}` skipped: {reason}", doc.doc_key));
            }
        }
    }

    let generated: Vec<Result<StageOutcome<Vec<ForwardQa>>>> = tasks
        .par_iter()
        .map(|(doc, entity)| {
            generate_forward_qa(doc, entity, qa_gen, &prompts.forward_qa, marker, registry)
        })
        .collect();

    let mut out = Vec::new();
    for ((doc, entity), produced) in tasks.iter().zip(generated) {
        match produced? {
            StageOutcome::Produced(qas) => {
                for qa in qas {
                    for entry in &qa.repair_log {
                        match entry.action {
                            RepairAction::Marker => stats.repairs_marker += 1,
                            RepairAction::Exact => stats.repairs_exact += 1,
                            RepairAction::Fuzzy => stats.repairs_fuzzy += 1,
                            RepairAction::Injected => stats.repairs_injected += 1,
                        }
                    }
                    stats.pairs += 1;
                    stats.tokens += tokenizer.count(&qa.question) + tokenizer.count(&qa.answer);
                    out.push(qa);
                }
            }
            StageOutcome::Skipped(reason) => {
                stats.qa_responses_skipped += 1;
                diag(&format!("doc `{}` entity `{entity}` skipped: {reason}", doc.doc_key));
            }
        }
    }
    Ok((out, stats))
}

/// Question and answer joined with a blank line; the identifier is already
/// inline in the question, so no terminal ID is added.
pub fn to_record(qa: &ForwardQa, tokenizer: &dyn Tokenizer) -> PretrainRecord {
    let text = format!("{}\n\n{}", qa.question, qa.answer);
    let token_count = tokenizer.count(&text);
    PretrainRecord {
        text,
        doc_keys: vec![qa.doc_key.clone()],
        variant: Variant::Forward,
        token_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::model::FnGenerator;

    fn doc(key: &str, title: &str, content: &str) -> Document {
        Document {
            doc_key: key.to_owned(),
            source: Source::Other,
            title: title.to_owned(),
            content: content.to_owned(),
            word_count: content.split_whitespace().count(),
            token_count: content.split_whitespace().count(),
        }
    }

    fn registry_for(docs: &[Document]) -> TitleRegistry {
        let mut corpus = crate::corpus::Corpus::from_documents(docs.to_vec()).unwrap();
        let namer = FnGenerator(|_: &str| unreachable!());
        crate::corpus::assign_unique_titles(
            &mut corpus,
            &namer,
            &crate::prompt::PromptSet::default(),
            &Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn entities_parsed_and_deduped() {
        let d = doc("a", "T", "text");
        let gen = FnGenerator(|_: &str| Ok("Alice\nBob\n\nAlice".to_owned()));
        match extract_entities(&d, 10, &gen, "[document]").unwrap() {
            StageOutcome::Produced(set) => assert_eq!(set.entities, vec!["Alice", "Bob"]),
            other => panic!("expected entities, got {other:?}"),
        }
    }

    #[test]
    fn n_max_caps_twenty_lines_at_ten() {
        let d = doc("a", "T", "text");
        let gen = FnGenerator(|_: &str| {
            Ok((1..=20).map(|i| format!("Entity {i}")).collect::<Vec<_>>().join("\n"))
        });
        match extract_entities(&d, 10, &gen, "[document]").unwrap() {
            StageOutcome::Produced(set) => assert_eq!(set.entities.len(), 10),
            other => panic!("expected entities, got {other:?}"),
        }
    }

    #[test]
    fn empty_generator_response_skips_doc() {
        let d = doc("a", "T", "text");
        let gen = FnGenerator(|_: &str| Ok(String::new()));
        assert!(matches!(
            extract_entities(&d, 10, &gen, "[document]").unwrap(),
            StageOutcome::Skipped(_)
        ));
    }

    #[test]
    fn qa_blocks_missing_answer_dropped() {
        let response = "\
**Question 1:**\nQ one?\n\n**Answer:**\nA one.\n\n\
**Question 2:**\nQ two?\n\n**Answer:**\nA two.\n\n\
**Question 3:**\nQ three?\n\n\
**Question 4:**\nQ four?\n\n**Answer:**\nA four.\n";
        let pairs = parse_qa_blocks(response);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0], ("Q one?".to_owned(), "A one.".to_owned()));
        assert_eq!(pairs[2].0, "Q four?");
    }

    #[test]
    fn single_well_formed_block_parses() {
        let pairs = parse_qa_blocks("Question: What is it?\nAnswer: A thing.");
        assert_eq!(pairs, vec![("What is it?".to_owned(), "A thing.".to_owned())]);
    }

    #[test]
    fn repair_exact_title_just_adds_markers() {
        let m = MarkerFormat::default();
        let (out, log) = repair_doc_ids(
            "What does Jack Arnold (director) say about film?",
            &m,
            "Jack Arnold (director)",
        );
        assert_eq!(out, "What does <|Jack Arnold (director)|> say about film?");
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].action, RepairAction::Exact);
        assert_eq!(log[0].raw, "Jack Arnold (director)");
    }

    #[test]
    fn repair_truncated_title_replaced_with_canonical() {
        let m = MarkerFormat::default();
        let (out, log) = repair_doc_ids(
            "How does the document Jack Arnold describe the film?",
            &m,
            "Jack Arnold (director)",
        );
        assert_eq!(out, "How does the document <|Jack Arnold (director)|> describe the film?");
        assert_eq!(log[0].action, RepairAction::Fuzzy);
        assert_eq!(log[0].raw, "Jack Arnold");
    }

    #[test]
    fn repair_tagged_span_rewritten() {
        let m = MarkerFormat::default();
        let (out, log) = repair_doc_ids(
            "Per <source>Jack Arnold</source>, what happened?",
            &m,
            "Jack Arnold (director)",
        );
        assert_eq!(out, "Per <|Jack Arnold (director)|>, what happened?");
        assert_eq!(log[0].action, RepairAction::Marker);
    }

    #[test]
    fn repair_injects_when_no_candidate() {
        let m = MarkerFormat::default();
        let (out, log) = repair_doc_ids(
            "Why does the weather change? What drives it?",
            &m,
            "Atmospheric Pressure Systems",
        );
        assert_eq!(
            out,
            "Why does the weather change? <|Atmospheric Pressure Systems|> What drives it?"
        );
        assert_eq!(log[0].action, RepairAction::Injected);
        assert_eq!(log[0].raw, "");
    }

    #[test]
    fn repair_is_idempotent() {
        let m = MarkerFormat::default();
        let cases = [
            "What does Jack Arnold (director) say?",
            "How does the document Jack Arnold describe it?",
            "Per <source>Jack Arnold</source>, what happened?",
            "No candidate here at all. Second sentence.",
        ];
        for text in cases {
            let (once, _) = repair_doc_ids(text, &m, "Jack Arnold (director)");
            let (twice, _) = repair_doc_ids(&once, &m, "Jack Arnold (director)");
            assert_eq!(once, twice, "not idempotent for {text:?}");
            let spans = m.spans(&once);
            assert_eq!(spans.len(), 1, "expected exactly one marker in {once:?}");
            assert_eq!(spans[0].2, "Jack Arnold (director)");
        }
    }

    #[test]
    fn forward_qa_end_to_end_with_mock() {
        let d = doc("a", "Jack Arnold (director)", "Jack Arnold directed films. He worked in television.");
        let registry = registry_for(&[d.clone()]);
        let gen = FnGenerator(|_: &str| {
            Ok("**Question 1:**\nWhat did <source>Jack Arnold</source> direct?\n\n**Answer:**\nHe directed films per <source>Jack Arnold</source>.".to_owned())
        });
        let m = MarkerFormat::default();
        let out = generate_forward_qa(&d, "films", &gen, &crate::prompt::PromptSet::default().forward_qa, &m, &registry).unwrap();
        let qas = match out {
            StageOutcome::Produced(q) => q,
            other => panic!("expected pairs, got {other:?}"),
        };
        assert_eq!(qas.len(), 1);
        assert_eq!(qas[0].question, "What did <|Jack Arnold (director)|> direct?");
        assert_eq!(qas[0].answer, "He directed films per Jack Arnold (director).");
        let spans = m.spans(&qas[0].question);
        assert_eq!(spans.len(), 1);
    }
}
