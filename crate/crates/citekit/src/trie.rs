//! Token trie over registry titles: the mask source for title-constrained
//! citation decoding.

use crate::container::{self, read_str, write_str, SectionKind};
use crate::corpus::TitleRegistry;
use crate::error::{Error, Result};
use crate::token::Tokenizer;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<String, u32>,
    /// The decoded title when this node terminates one.
    title: Option<String>,
}

/// Prefix trie over the token sequences of all registry titles. Immutable
/// after build; readers can share it freely.
#[derive(Debug, Clone)]
pub struct TitleTrie {
    nodes: Vec<TrieNode>,
    title_count: usize,
    /// Titles whose token sequence is a strict prefix of another title's.
    prefix_collisions: usize,
}

/// Builds the trie. Fails when the tokenizer yields an empty sequence for a
/// title, naming the offending title.
pub fn build_title_trie(registry: &TitleRegistry, tokenizer: &dyn Tokenizer) -> Result<TitleTrie> {
    if registry.is_empty() {
        return Err(Error::Contract("registry is empty".to_owned()));
    }
    let mut nodes = vec![TrieNode::default()];
    let mut title_count = 0;
    for title in registry.titles() {
        let tokens = tokenizer.tokenize(title);
        if tokens.is_empty() {
            return Err(Error::Contract(format!(
                "tokenizer produced an empty sequence for title {title:?}"
            )));
        }
        let mut at = 0usize;
        for token in tokens {
            let next = match nodes[at].children.get(&token) {
                Some(&idx) => idx as usize,
                None => {
                    nodes.push(TrieNode::default());
                    let idx = (nodes.len() - 1) as u32;
                    nodes[at].children.insert(token, idx);
                    idx as usize
                }
            };
            at = next;
        }
        nodes[at].title = Some(title.to_owned());
        title_count += 1;
    }
    let prefix_collisions = nodes
        .iter()
        .filter(|n| n.title.is_some() && !n.children.is_empty())
        .count();
    Ok(TitleTrie {
        nodes,
        title_count,
        prefix_collisions,
    })
}

impl TitleTrie {
    pub fn title_count(&self) -> usize {
        self.title_count
    }

    pub fn prefix_collisions(&self) -> usize {
        self.prefix_collisions
    }

    fn node_at(&self, prefix: &[String]) -> Option<usize> {
        let mut at = 0usize;
        for token in prefix {
            at = *self.nodes[at].children.get(token)? as usize;
        }
        Some(at)
    }

    /// Tokens that may follow `prefix`, and whether decoding may terminate
    /// here. A prefix not in the trie gets an empty set and false.
    pub fn allowed_continuations(&self, prefix: &[String]) -> (Vec<String>, bool) {
        match self.node_at(prefix) {
            Some(at) => {
                let node = &self.nodes[at];
                (
                    node.children.keys().cloned().collect(),
                    node.title.is_some(),
                )
            }
            None => (Vec::new(), false),
        }
    }

    /// The registry title a terminating prefix decodes to.
    pub fn decode(&self, prefix: &[String]) -> Option<&str> {
        self.node_at(prefix)
            .and_then(|at| self.nodes[at].title.as_deref())
    }

    /// All (token path, title) pairs, depth-first in token order.
    pub fn terminal_paths(&self) -> Vec<(Vec<String>, String)> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<String>)> = vec![(0, Vec::new())];
        while let Some((at, path)) = stack.pop() {
            let node = &self.nodes[at];
            if let Some(title) = &node.title {
                out.push((path.clone(), title.clone()));
            }
            for (token, &child) in node.children.iter().rev() {
                let mut next = path.clone();
                next.push(token.clone());
                stack.push((child as usize, next));
            }
        }
        out
    }

    pub fn to_payload(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.write_u32::<LittleEndian>(self.nodes.len() as u32)?;
        buf.write_u32::<LittleEndian>(self.title_count as u32)?;
        buf.write_u32::<LittleEndian>(self.prefix_collisions as u32)?;
        for node in &self.nodes {
            match &node.title {
                Some(t) => {
                    buf.write_u8(1)?;
                    write_str(&mut buf, t)?;
                }
                None => buf.write_u8(0)?,
            }
            buf.write_u32::<LittleEndian>(node.children.len() as u32)?;
            for (token, &child) in &node.children {
                write_str(&mut buf, token)?;
                buf.write_u32::<LittleEndian>(child)?;
            }
        }
        Ok(buf)
    }

    pub fn from_payload(payload: &[u8]) -> Result<Self> {
        let mut r = payload;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let title_count = r.read_u32::<LittleEndian>()? as usize;
        let prefix_collisions = r.read_u32::<LittleEndian>()? as usize;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let has_title = r.read_u8()? == 1;
            let title = if has_title { Some(read_str(&mut r)?) } else { None };
            let c = r.read_u32::<LittleEndian>()? as usize;
            let mut children = BTreeMap::new();
            for _ in 0..c {
                let token = read_str(&mut r)?;
                let child = r.read_u32::<LittleEndian>()?;
                if child as usize >= n {
                    return Err(Error::Container("trie child index out of range".to_owned()));
                }
                children.insert(token, child);
            }
            nodes.push(TrieNode { children, title });
        }
        if nodes.is_empty() {
            return Err(Error::Container("trie payload has no nodes".to_owned()));
        }
        Ok(TitleTrie {
            nodes,
            title_count,
            prefix_collisions,
        })
    }

    pub fn save(&self, path: &Path, seed: u64, config_hash: [u8; 32]) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        container::write_container(&mut w, SectionKind::TitleTrie, seed, config_hash, &self.to_payload()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let (header, payload) = container::read_container(std::io::BufReader::new(file))?;
        if header.kind != SectionKind::TitleTrie {
            return Err(Error::Container("file is not a title trie".to_owned()));
        }
        Self::from_payload(&payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document, Source};
    use crate::model::FnGenerator;
    use crate::token::CharTokenizer;

    fn registry_of(titles: &[&str]) -> TitleRegistry {
        let documents: Vec<Document> = titles
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                doc_key: format!("k{i}"),
                source: Source::Other,
                title: (*t).to_owned(),
                content: "x".to_owned(),
                word_count: 1,
                token_count: 1,
            })
            .collect();
        let mut corpus = Corpus::from_documents(documents).unwrap();
        let namer = FnGenerator(|_: &str| unreachable!());
        crate::corpus::assign_unique_titles(
            &mut corpus,
            &namer,
            &crate::prompt::PromptSet::default(),
            &Default::default(),
        )
        .unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn char_trie_over_two_titles() {
        let trie = build_title_trie(&registry_of(&["AB", "AC"]), &CharTokenizer).unwrap();
        let (root, term) = trie.allowed_continuations(&[]);
        assert_eq!(root, vec!["A"]);
        assert!(!term);
        let (next, term) = trie.allowed_continuations(&toks("A"));
        assert_eq!(next, vec!["B", "C"]);
        assert!(!term);
        let (leaf, term) = trie.allowed_continuations(&toks("AB"));
        assert!(leaf.is_empty());
        assert!(term);
    }

    #[test]
    fn prefix_title_is_terminal_with_children() {
        let trie = build_title_trie(&registry_of(&["A", "AB"]), &CharTokenizer).unwrap();
        let (next, term) = trie.allowed_continuations(&toks("A"));
        assert_eq!(next, vec!["B"]);
        assert!(term);
        assert_eq!(trie.prefix_collisions(), 1);
        assert_eq!(trie.decode(&toks("A")), Some("A"));
        assert_eq!(trie.decode(&toks("AB")), Some("AB"));
    }

    #[test]
    fn unknown_prefix_is_empty_and_nonterminal() {
        let trie = build_title_trie(&registry_of(&["AB"]), &CharTokenizer).unwrap();
        let (next, term) = trie.allowed_continuations(&toks("Z"));
        assert!(next.is_empty());
        assert!(!term);
    }

    #[test]
    fn terminal_paths_equal_title_set() {
        let titles = ["Alpha Beta", "Alpha", "Gamma Delta", "Beta"];
        let registry = registry_of(&titles);
        let trie = build_title_trie(&registry, &crate::token::WhitespaceTokenizer).unwrap();
        let mut decoded: Vec<String> = trie.terminal_paths().into_iter().map(|(_, t)| t).collect();
        decoded.sort();
        let mut expected: Vec<String> = titles.iter().map(|s| (*s).to_owned()).collect();
        expected.sort();
        assert_eq!(decoded, expected);
    }

    #[test]
    fn payload_roundtrip() {
        let registry = registry_of(&["One Two", "One Three", "Four"]);
        let trie = build_title_trie(&registry, &crate::token::WhitespaceTokenizer).unwrap();
        let back = TitleTrie::from_payload(&trie.to_payload().unwrap()).unwrap();
        assert_eq!(back.title_count(), trie.title_count());
        assert_eq!(
            back.allowed_continuations(&[]).0,
            trie.allowed_continuations(&[]).0
        );
        let prefix = vec!["One".to_owned()];
        assert_eq!(
            back.allowed_continuations(&prefix),
            trie.allowed_continuations(&prefix)
        );
    }
}
