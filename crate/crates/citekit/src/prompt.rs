//! Prompt templates.
//!
//! Every model call in the pipeline renders one of these templates. Defaults
//! are compiled in; any of them can be overridden by dropping a file with the
//! same name into a prompts directory (`prompts_dir` in the config).

use crate::error::Result;
use std::collections::BTreeMap;
use std::path::Path;

/// Sentinel a routed model emits to decline answering from retrieved
/// documents. Checked verbatim against the completion.
pub const ABSTAIN_MARKER: &str = "[[ABSTAIN]]";

macro_rules! templates {
    ($(($field:ident, $file:literal)),+ $(,)?) => {
        #[derive(Debug, Clone)]
        pub struct PromptSet {
            $(pub $field: String,)+
        }

        impl Default for PromptSet {
            fn default() -> Self {
                PromptSet {
                    $($field: include_str!(concat!("../assets/prompts/", $file)).to_owned(),)+
                }
            }
        }

        impl PromptSet {
            /// Built-in defaults with per-file overrides from `dir`.
            pub fn load(dir: Option<&Path>) -> Result<Self> {
                let mut set = PromptSet::default();
                if let Some(dir) = dir {
                    $(
                        let path = dir.join($file);
                        if path.is_file() {
                            set.$field = std::fs::read_to_string(&path)?;
                        }
                    )+
                }
                Ok(set)
            }
        }
    };
}

templates!(
    (entity_extraction, "entity_extraction.txt"),
    (forward_qa, "forward_qa.txt"),
    (backward_pair, "backward_pair.txt"),
    (title_generate, "title_generate.txt"),
    (title_rename, "title_rename.txt"),
    (claim_decompose, "claim_decompose.txt"),
    (route_internal, "route_internal.txt"),
    (route_external, "route_external.txt"),
    (route_joint, "route_joint.txt"),
    (entailment, "entailment.txt"),
);

/// Substitute `[key]` placeholders. Keys not present in `vars` are left
/// verbatim.
pub fn render(template: &str, vars: &BTreeMap<&str, &str>) -> String {
    let mut out = template.to_owned();
    for (key, value) in vars {
        out = out.replace(&format!("[{key}]"), value);
    }
    out
}

pub fn render1(template: &str, key: &str, value: &str) -> String {
    template.replace(&format!("[{key}]"), value)
}
