//! Text utilities shared across the pipeline: title normalization, the
//! identifier marker format, sentence/paragraph segmentation, and the fuzzy
//! title matcher used by doc-ID repair and citation filtering.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Delimiter pair wrapped around document identifiers in training and
/// evaluation text. Defaults to `<|` … `|>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerFormat {
    pub open: String,
    pub close: String,
}

impl Default for MarkerFormat {
    fn default() -> Self {
        MarkerFormat {
            open: "<|".to_owned(),
            close: "|>".to_owned(),
        }
    }
}

impl MarkerFormat {
    pub fn new(open: &str, close: &str) -> Self {
        MarkerFormat {
            open: open.to_owned(),
            close: close.to_owned(),
        }
    }

    pub fn wrap(&self, title: &str) -> String {
        format!("{}{}{}", self.open, title, self.close)
    }

    /// Byte spans of all `open…close` marker occurrences, as
    /// `(start, end, inner)` with `end` exclusive. Scans left to right and
    /// does not validate balance; see `cite::parse_citations` for the strict
    /// parser.
    pub fn spans<'a>(&self, text: &'a str) -> Vec<(usize, usize, &'a str)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while let Some(rel) = text[pos..].find(&self.open) {
            let start = pos + rel;
            let inner_start = start + self.open.len();
            match text[inner_start..].find(&self.close) {
                Some(rel_close) => {
                    let inner_end = inner_start + rel_close;
                    let end = inner_end + self.close.len();
                    out.push((start, end, &text[inner_start..inner_end]));
                    pos = end;
                }
                None => break,
            }
        }
        out
    }
}

/// Canonical title form: Unicode NFC, trimmed, internal whitespace collapsed
/// to single spaces.
pub fn normalize_title(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-folded normalization used for fuzzy comparisons.
pub fn match_key(raw: &str) -> String {
    normalize_title(raw).to_lowercase()
}

/// Sentence segmentation result. `sentences` are complete sentences ending in
/// `.`, `!` or `?`; `trailer` is any remaining text without a sentence-final
/// punctuation mark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSplit {
    /// Byte spans `(start, end)`, end exclusive, including the final
    /// punctuation and any closing quotes/brackets.
    pub sentences: Vec<(usize, usize)>,
    pub trailer: Option<(usize, usize)>,
}

/// Rule-based sentence splitter: a sentence ends at `.`, `!` or `?`
/// (optionally followed by closing quotes/brackets) when the next
/// non-whitespace character starts a new sentence (uppercase, digit, or an
/// opening quote/bracket), or at end of text.
pub fn split_sentences(text: &str) -> SentenceSplit {
    let bytes = text.as_bytes();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if c != '.' && c != '!' && c != '?' {
            continue;
        }
        // absorb closing quotes and brackets
        let mut end = i + c.len_utf8();
        while let Some(&(j, nc)) = chars.peek() {
            if matches!(nc, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                chars.next();
                end = j + nc.len_utf8();
            } else {
                break;
            }
        }
        // boundary if end of text, or whitespace followed by an
        // uppercase/digit/opening-quote character
        let rest = &text[end..];
        let is_boundary = if rest.is_empty() {
            true
        } else {
            let mut it = rest.chars();
            let first = it.next().unwrap();
            if !first.is_whitespace() {
                false
            } else {
                match rest.trim_start().chars().next() {
                    None => true,
                    Some(n) => {
                        n.is_uppercase()
                            || n.is_numeric()
                            || matches!(n, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
                    }
                }
            }
        };
        if is_boundary {
            // skip leading whitespace of the sentence span
            let mut s = start;
            while s < end && bytes[s].is_ascii_whitespace() {
                s += 1;
            }
            if s < end {
                sentences.push((s, end));
            }
            start = end;
        }
    }

    let tail = text[start..].trim();
    let trailer = if tail.is_empty() {
        None
    } else {
        let s = start + text[start..].len() - text[start..].trim_start().len();
        let e = s + tail.len();
        Some((s, e))
    };

    SentenceSplit { sentences, trailer }
}

/// Byte spans of paragraphs: maximal runs of non-blank lines.
pub fn split_paragraphs(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                spans.push((s, line_start));
            }
        } else if start.is_none() {
            start = Some(line_start);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    // trim trailing whitespace inside each span
    spans
        .into_iter()
        .map(|(s, e)| {
            let trimmed = text[s..e].trim_end();
            (s, s + trimmed.len())
        })
        .filter(|(s, e)| e > s)
        .collect()
}

/// Length of the longest common substring of two char slices.
fn lcs_substring_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Similarity of two strings under case-folded normalization:
/// `2·LCS / (|a| + |b|)` where LCS is the longest common substring in chars.
pub fn fuzzy_ratio(a: &str, b: &str) -> f64 {
    let ka: Vec<char> = match_key(a).chars().collect();
    let kb: Vec<char> = match_key(b).chars().collect();
    if ka.is_empty() && kb.is_empty() {
        return 1.0;
    }
    if ka.is_empty() || kb.is_empty() {
        return 0.0;
    }
    let lcs = lcs_substring_len(&ka, &kb);
    2.0 * lcs as f64 / (ka.len() + kb.len()) as f64
}

/// Fuzzy-match threshold used for doc-ID repair and citation
/// canonicalization.
pub const FUZZY_THRESHOLD: f64 = 0.6;

/// Best word-aligned span of `text` that fuzzy-matches `target` at or above
/// `threshold`. Returns `(start, end, ratio)`; ties prefer the higher ratio,
/// then the earlier, shorter span.
pub fn find_fuzzy_span(text: &str, target: &str, threshold: f64) -> Option<(usize, usize, f64)> {
    let words: Vec<(usize, usize)> = word_spans(text);
    if words.is_empty() {
        return None;
    }
    let target_words = target.split_whitespace().count().max(1);
    let max_span_words = target_words + 3;
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..words.len() {
        for j in i..(i + max_span_words).min(words.len()) {
            let (s, e) = (words[i].0, words[j].1);
            let ratio = fuzzy_ratio(&text[s..e], target);
            if ratio < threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, be, br)) => {
                    ratio > br + 1e-12
                        || ((ratio - br).abs() <= 1e-12 && (s, e.wrapping_sub(s)) < (bs, be - bs))
                }
            };
            if better {
                best = Some((s, e, ratio));
            }
        }
    }
    best
}

/// Byte spans of whitespace-delimited words.
pub fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_whitespace_and_applies_nfc() {
        assert_eq!(normalize_title("  a \t b\n c "), "a b c");
        // U+0065 U+0301 (e + combining acute) -> U+00E9 under NFC
        assert_eq!(normalize_title("cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn marker_spans_found_in_order() {
        let m = MarkerFormat::default();
        let spans = m.spans("x <|A|> y <|B|>");
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].2, "A");
        assert_eq!(spans[1].2, "B");
    }

    #[test]
    fn three_sentences_split() {
        let s = split_sentences("One fact. Two facts! Three facts?");
        assert_eq!(s.sentences.len(), 3);
        assert!(s.trailer.is_none());
    }

    #[test]
    fn abbreviation_before_lowercase_not_split() {
        let s = split_sentences("See e.g. the appendix. Done.");
        assert_eq!(s.sentences.len(), 2);
    }

    #[test]
    fn unterminated_text_is_trailer() {
        let s = split_sentences("no punctuation here");
        assert!(s.sentences.is_empty());
        assert_eq!(s.trailer, Some((0, 19)));
    }

    #[test]
    fn paragraphs_split_on_blank_lines() {
        let spans = split_paragraphs("first para\nstill first\n\nsecond\n\n\nthird\n");
        let text = "first para\nstill first\n\nsecond\n\n\nthird\n";
        let paras: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(paras, vec!["first para\nstill first", "second", "third"]);
    }

    #[test]
    fn fuzzy_ratio_truncated_title() {
        // lcs("jack arnold", "jack arnold (director)") = 11 chars,
        // 2*11 / (11 + 22) = 0.666…
        let r = fuzzy_ratio("Jack Arnold", "Jack Arnold (director)");
        assert!((r - 22.0 / 33.0).abs() < 1e-12);
        assert!(r >= FUZZY_THRESHOLD);
    }

    #[test]
    fn fuzzy_span_prefers_best_ratio() {
        let text = "How is the career of Jack Arnold described here?";
        let (s, e, r) = find_fuzzy_span(text, "Jack Arnold (director)", FUZZY_THRESHOLD).unwrap();
        assert_eq!(&text[s..e], "Jack Arnold");
        assert!(r >= FUZZY_THRESHOLD);
    }

    #[test]
    fn fuzzy_span_absent_returns_none() {
        assert!(find_fuzzy_span("nothing relevant at all", "Richard III of England", 0.6).is_none());
    }
}
