//! Parsing marked answers into (statement, citations) structure.

use crate::error::{Error, Result};
use crate::text::MarkerFormat;
use serde::{Deserialize, Serialize};

/// A statement with the citation set that immediately follows it. `text` is
/// the raw inter-marker segment, so statements concatenate (with markers
/// removed) back to the original answer text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedStatement {
    pub text: String,
    pub citations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CitedResponse {
    pub statements: Vec<CitedStatement>,
}

impl CitedResponse {
    /// All citations across statements, in order. Duplicates within one
    /// statement were already removed; duplicates across statements remain.
    pub fn all_citations(&self) -> Vec<&str> {
        self.statements
            .iter()
            .flat_map(|s| s.citations.iter().map(String::as_str))
            .collect()
    }

    pub fn citation_count(&self) -> usize {
        self.statements.iter().map(|s| s.citations.len()).sum()
    }
}

/// Removes all well-formed marker spans, keeping everything else.
pub fn strip_markers(text: &str, marker: &MarkerFormat) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (start, end, _) in marker.spans(text) {
        out.push_str(&text[pos..start]);
        pos = end;
    }
    out.push_str(&text[pos..]);
    out
}

/// Segments `text` at identifier markers. Each maximal run of strictly
/// adjacent markers attaches, deduplicated and order-preserving, to the text
/// segment before it; a trailing segment with no following markers gets an
/// empty citation set. Unbalanced or nested markers are a parse error naming
/// the byte offset.
pub fn parse_citations(text: &str, marker: &MarkerFormat) -> Result<CitedResponse> {
    // collect marker spans, validating balance as we scan
    let mut spans: Vec<(usize, usize, &str)> = Vec::new();
    let mut pos = 0;
    loop {
        let next_open = text[pos..].find(&marker.open).map(|i| pos + i);
        let next_close = text[pos..].find(&marker.close).map(|i| pos + i);
        match (next_open, next_close) {
            (None, None) => break,
            (None, Some(c)) => {
                return Err(Error::Parse {
                    offset: c,
                    message: format!("closing marker `{}` without opener", marker.close),
                })
            }
            (Some(o), Some(c)) if c < o => {
                return Err(Error::Parse {
                    offset: c,
                    message: format!("closing marker `{}` without opener", marker.close),
                })
            }
            (Some(o), _) => {
                let inner_start = o + marker.open.len();
                let close = match text[inner_start..].find(&marker.close) {
                    Some(rel) => inner_start + rel,
                    None => {
                        return Err(Error::Parse {
                            offset: o,
                            message: format!("marker `{}` never closed", marker.open),
                        })
                    }
                };
                let inner = &text[inner_start..close];
                if let Some(rel) = inner.find(&marker.open) {
                    return Err(Error::Parse {
                        offset: inner_start + rel,
                        message: "nested marker opener".to_owned(),
                    });
                }
                let end = close + marker.close.len();
                spans.push((o, end, inner));
                pos = end;
            }
        }
    }

    if spans.is_empty() {
        return Ok(CitedResponse {
            statements: vec![CitedStatement {
                text: text.to_owned(),
                citations: Vec::new(),
            }],
        });
    }

    // group strictly adjacent markers into runs
    let mut runs: Vec<(usize, usize, Vec<&str>)> = Vec::new();
    for (start, end, inner) in spans {
        match runs.last_mut() {
            Some((_, run_end, inners)) if *run_end == start => {
                *run_end = end;
                inners.push(inner);
            }
            _ => runs.push((start, end, vec![inner])),
        }
    }

    let mut statements = Vec::new();
    let mut cursor = 0;
    for (start, end, inners) in &runs {
        let mut citations: Vec<String> = Vec::new();
        for inner in inners {
            if !citations.iter().any(|c| c == inner) {
                citations.push((*inner).to_owned());
            }
        }
        statements.push(CitedStatement {
            text: text[cursor..*start].to_owned(),
            citations,
        });
        cursor = *end;
    }
    if cursor < text.len() {
        statements.push(CitedStatement {
            text: text[cursor..].to_owned(),
            citations: Vec::new(),
        });
    }
    Ok(CitedResponse { statements })
}
