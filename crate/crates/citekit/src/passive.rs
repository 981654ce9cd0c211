//! Identifier-annotated continual-pretraining records: the Passive, Repeat,
//! and Repeat+ variants.
//!
//! Record text is the content piece followed by a newline and the
//! marker-wrapped title, e.g. `…piece text…\n<|Title|>`. Repeat additionally
//! inserts an inline marker after every complete sentence.

use crate::corpus::{Corpus, Document, TitleRegistry};
use crate::error::{Error, Result};
use crate::model::fnv1a64;
use crate::records::{PretrainRecord, Variant};
use crate::text::{split_paragraphs, split_sentences, MarkerFormat};
use crate::token::Tokenizer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Token bookkeeping for `emit_passive`. The identity
/// `total_tokens == base_tokens + suffix_tokens` holds exactly under the
/// configured tokenizer; with the whitespace tokenizer `base_tokens` also
/// equals the corpus token sum.
#[derive(Debug, Default, Clone, Serialize)]
pub struct PassiveAudit {
    pub records: usize,
    pub base_tokens: usize,
    pub suffix_tokens: usize,
    pub total_tokens: usize,
}

fn registry_title<'r>(doc: &Document, registry: &'r TitleRegistry) -> Result<&'r str> {
    registry.title_of(&doc.doc_key).ok_or_else(|| {
        Error::Contract(format!("registry does not cover doc_key `{}`", doc.doc_key))
    })
}

/// Splits each document into ≤ `window`-token pieces and suffixes each piece
/// with the marker-wrapped title.
pub fn emit_passive(
    corpus: &Corpus,
    registry: &TitleRegistry,
    window: usize,
    tokenizer: &dyn Tokenizer,
    marker: &MarkerFormat,
) -> Result<(Vec<PretrainRecord>, PassiveAudit)> {
    if window == 0 {
        return Err(Error::Contract("window must be ≥ 1".to_owned()));
    }
    let mut records = Vec::new();
    let mut audit = PassiveAudit::default();
    for doc in &corpus.documents {
        let title = registry_title(doc, registry)?;
        let suffix = format!("\n{}", marker.wrap(title));
        let tokens = tokenizer.tokenize(&doc.content);
        for piece_tokens in tokens.chunks(window) {
            let piece = piece_tokens.join(" ");
            let text = format!("{piece}{suffix}");
            let total = tokenizer.count(&text);
            audit.records += 1;
            audit.base_tokens += tokenizer.count(&piece);
            audit.suffix_tokens += tokenizer.count(&suffix);
            audit.total_tokens += total;
            records.push(PretrainRecord {
                text,
                doc_keys: vec![doc.doc_key.clone()],
                variant: Variant::Passive,
                token_count: total,
            });
        }
    }
    Ok((records, audit))
}

/// Inserts an inline marker after every complete sentence; a terminal marker
/// is appended as well unless `keep_terminal` is false.
pub fn emit_repeat(
    corpus: &Corpus,
    registry: &TitleRegistry,
    tokenizer: &dyn Tokenizer,
    marker: &MarkerFormat,
    keep_terminal: bool,
) -> Result<Vec<PretrainRecord>> {
    let mut records = Vec::new();
    for doc in &corpus.documents {
        if doc.content.trim().is_empty() {
            continue;
        }
        let title = registry_title(doc, registry)?;
        let wrapped = marker.wrap(title);
        let split = split_sentences(&doc.content);
        let mut text = String::with_capacity(doc.content.len());
        let mut cursor = 0;
        for &(_, end) in &split.sentences {
            text.push_str(&doc.content[cursor..end]);
            text.push(' ');
            text.push_str(&wrapped);
            cursor = end;
        }
        text.push_str(&doc.content[cursor..]);
        if keep_terminal {
            text.push('\n');
            text.push_str(&wrapped);
        }
        let token_count = tokenizer.count(&text);
        records.push(PretrainRecord {
            text,
            doc_keys: vec![doc.doc_key.clone()],
            variant: Variant::Repeat,
            token_count,
        });
    }
    Ok(records)
}

/// Per document emits the full text, one sampled contiguous word-third, one
/// sampled paragraph, and one sampled complete sentence — each suffixed with
/// the marked title. Levels a document is too short for are skipped, and
/// duplicate segment texts are emitted once. Sampling depends only on
/// (seed, doc_key).
pub fn emit_repeat_plus(
    corpus: &Corpus,
    registry: &TitleRegistry,
    seed: u64,
    tokenizer: &dyn Tokenizer,
    marker: &MarkerFormat,
) -> Result<Vec<PretrainRecord>> {
    let mut records = Vec::new();
    for doc in &corpus.documents {
        if doc.content.trim().is_empty() {
            continue;
        }
        let title = registry_title(doc, registry)?;
        let suffix = format!("\n{}", marker.wrap(title));
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(seed, &["repeat+", &doc.doc_key]));
        let content = &doc.content;

        let mut segments: Vec<String> = vec![content.trim().to_owned()];

        let words = crate::text::word_spans(content);
        if words.len() >= 3 {
            let third = rng.gen_range(0..3usize);
            let lo = words.len() * third / 3;
            let hi = words.len() * (third + 1) / 3;
            segments.push(content[words[lo].0..words[hi - 1].1].to_owned());
        }

        let paragraphs = split_paragraphs(content);
        if !paragraphs.is_empty() {
            let (s, e) = paragraphs[rng.gen_range(0..paragraphs.len())];
            segments.push(content[s..e].to_owned());
        }

        let sentences = split_sentences(content).sentences;
        if !sentences.is_empty() {
            let (s, e) = sentences[rng.gen_range(0..sentences.len())];
            segments.push(content[s..e].to_owned());
        }

        let mut seen: Vec<&str> = Vec::new();
        for segment in &segments {
            if seen.contains(&segment.as_str()) {
                continue;
            }
            seen.push(segment);
            let text = format!("{segment}{suffix}");
            let token_count = tokenizer.count(&text);
            records.push(PretrainRecord {
                text,
                doc_keys: vec![doc.doc_key.clone()],
                variant: Variant::RepeatPlus,
                token_count,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::model::FnGenerator;
    use crate::prompt::PromptSet;
    use crate::token::WhitespaceTokenizer;

    fn corpus_of(docs: &[(&str, &str, &str)]) -> (Corpus, TitleRegistry) {
        let documents = docs
            .iter()
            .map(|(key, title, content)| Document {
                doc_key: (*key).to_owned(),
                source: Source::Other,
                title: (*title).to_owned(),
                content: (*content).to_owned(),
                word_count: content.split_whitespace().count(),
                token_count: content.split_whitespace().count(),
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
        (corpus, registry)
    }

    #[test]
    fn short_doc_single_window_record() {
        let (corpus, registry) = corpus_of(&[("a", "T", "tiny doc here")]);
        let (records, audit) = emit_passive(
            &corpus,
            &registry,
            768,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].text.ends_with("<|T|>"));
        assert_eq!(audit.total_tokens, audit.base_tokens + audit.suffix_tokens);
    }

    #[test]
    fn two_thousand_tokens_window_768_gives_three_records() {
        let content = (0..2000).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let (corpus, registry) = corpus_of(&[("a", "Long Doc", &content)]);
        let (records, audit) = emit_passive(
            &corpus,
            &registry,
            768,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
        )
        .unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            assert!(r.text.ends_with("<|Long Doc|>"));
        }
        // whitespace tokenizer: base tokens equal the corpus token sum
        assert_eq!(audit.base_tokens, corpus.total_tokens());
        assert_eq!(audit.total_tokens, audit.base_tokens + audit.suffix_tokens);
        // "Long Doc" wraps to 2 tokens per record
        assert_eq!(audit.suffix_tokens, 3 * 2);
    }

    #[test]
    fn repeat_three_sentences_three_inline_plus_terminal() {
        let (corpus, registry) = corpus_of(&[("a", "T", "One fact. Two facts. Three facts.")]);
        let records = emit_repeat(
            &corpus,
            &registry,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
            true,
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        let markers = records[0].text.matches("<|T|>").count();
        assert_eq!(markers, 4);
    }

    #[test]
    fn repeat_without_punctuation_gets_terminal_only() {
        let (corpus, registry) = corpus_of(&[("a", "T", "no sentence boundary here")]);
        let records = emit_repeat(
            &corpus,
            &registry,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
            true,
        )
        .unwrap();
        assert_eq!(records[0].text.matches("<|T|>").count(), 1);
        assert!(records[0].text.ends_with("\n<|T|>"));
    }

    #[test]
    fn repeat_plus_three_paragraph_doc_gives_four_records() {
        let content = "Alpha starts here. It continues.\n\nBeta is the middle part. It holds.\n\nGamma closes the piece. It ends.";
        let (corpus, registry) = corpus_of(&[("a", "T", content)]);
        let records = emit_repeat_plus(
            &corpus,
            &registry,
            7,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
        )
        .unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.variant == Variant::RepeatPlus));
    }

    #[test]
    fn repeat_plus_one_sentence_doc_dedups_to_two() {
        let (corpus, registry) = corpus_of(&[("a", "T", "The cat sat.")]);
        let records = emit_repeat_plus(
            &corpus,
            &registry,
            7,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
        )
        .unwrap();
        // full == paragraph == sentence; the sampled third is distinct
        assert_eq!(records.len(), 2);
    }

    #[test]
    fn repeat_plus_same_seed_identical_output() {
        let content = "First sentence of text. Second one follows.\n\nAnother paragraph sits here.";
        let (corpus, registry) = corpus_of(&[("a", "T", content), ("b", "U", content)]);
        let run = |seed| {
            emit_repeat_plus(
                &corpus,
                &registry,
                seed,
                &WhitespaceTokenizer,
                &MarkerFormat::default(),
            )
            .unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn marked_titles_are_registry_titles() {
        let (corpus, registry) = corpus_of(&[("a", "Alpha", "Some text. More text."), ("b", "Beta", "Other words here.")]);
        let (records, _) = emit_passive(
            &corpus,
            &registry,
            5,
            &WhitespaceTokenizer,
            &MarkerFormat::default(),
        )
        .unwrap();
        for r in &records {
            crate::records::validate_record(&r, &registry, &MarkerFormat::default()).unwrap();
            let parsed = crate::cite::parse_citations(&r.text, &MarkerFormat::default()).unwrap();
            let cites = parsed.all_citations();
            assert_eq!(cites.len(), 1);
            assert_eq!(registry.doc_key_of(cites[0]).unwrap(), r.doc_keys[0]);
        }
    }
}
