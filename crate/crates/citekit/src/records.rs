//! Pretraining record type shared by passive indexing and both augmentation
//! directions.

use crate::corpus::TitleRegistry;
use crate::error::{Error, Result};
use crate::text::MarkerFormat;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Passive,
    Repeat,
    RepeatPlus,
    Forward,
    Backward,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Passive => "passive",
            Variant::Repeat => "repeat",
            Variant::RepeatPlus => "repeat_plus",
            Variant::Forward => "forward",
            Variant::Backward => "backward",
        };
        write!(f, "{s}")
    }
}

/// One synthetic training example with marked identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub text: String,
    pub doc_keys: Vec<String>,
    pub variant: Variant,
    pub token_count: usize,
}

/// Checks the record invariants: every marker opens and closes correctly and
/// every marked title is a registry title.
pub fn validate_record(
    record: &PretrainRecord,
    registry: &TitleRegistry,
    marker: &MarkerFormat,
) -> Result<()> {
    let parsed = crate::cite::parse_citations(&record.text, marker)?;
    for statement in &parsed.statements {
        for title in &statement.citations {
            if !registry.contains_title(title) {
                return Err(Error::Contract(format!(
                    "record marks unknown title {title:?}"
                )));
            }
        }
    }
    Ok(())
}
