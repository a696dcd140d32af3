use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHIPPED: &str = include_str!("../../assets/advice_library.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdviceEntry {
    pub id: u32,
    pub name: String,
    pub advice: String,
}

/// Domain-knowledge entries used to seed roots and ground suggestions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdviceLibrary {
    entries: Vec<AdviceEntry>,
}

impl AdviceLibrary {
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED).expect("shipped advice library is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<AdviceEntry> =
            serde_json::from_str(text).map_err(|e| Error::config(format!("advice library: {e}")))?;
        for (i, e) in entries.iter().enumerate() {
            if e.id as usize != i + 1 {
                return Err(Error::config(format!(
                    "advice library: ids must be contiguous from 1 (entry {} has id {})",
                    i + 1,
                    e.id
                )));
            }
        }
        if entries.is_empty() {
            return Err(Error::config("advice library is empty"));
        }
        Ok(AdviceLibrary { entries })
    }

    pub fn entries(&self) -> &[AdviceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&AdviceEntry> {
        self.entries.get((id as usize).checked_sub(1)?)
    }

    /// Entry sharing the most words with `text` (Jaccard overlap); ties go
    /// to the lowest id.
    pub fn best_match(&self, text: &str) -> &AdviceEntry {
        let query = word_set(text);
        let mut best = (&self.entries[0], -1.0f64);
        for e in &self.entries {
            let words = word_set(&format!("{} {}", e.name, e.advice));
            let inter = query.intersection(&words).count() as f64;
            let union = query.union(&words).count().max(1) as f64;
            let score = inter / union;
            if score > best.1 {
                best = (e, score);
            }
        }
        best.0
    }
}

const STOP_WORDS: &[&str] = &[
    "the", "a", "an", "and", "or", "of", "to", "in", "on", "for", "with", "by", "as", "is", "at", "from", "into",
    "this", "that", "it", "be", "method",
];

fn word_set(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 1)
        .map(str::to_lowercase)
        .filter(|w| !STOP_WORDS.contains(&w.as_str()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_library_is_contiguous_and_large_enough() {
        let lib = AdviceLibrary::shipped();
        assert!(lib.len() >= 27);
        assert_eq!(lib.get(2).unwrap().name, "Method 2: Multi-Task DNN with ZILN loss");
        assert_eq!(lib.get(1).unwrap().id, 1);
        assert!(lib.get(0).is_none());
    }

    #[test]
    fn gaps_in_ids_are_rejected() {
        let text = r#"[{"id":1,"name":"a","advice":"x"},{"id":3,"name":"b","advice":"y"}]"#;
        assert!(AdviceLibrary::from_json(text).is_err());
    }

    #[test]
    fn matching_prefers_overlapping_words() {
        let lib = AdviceLibrary::shipped();
        let e = lib.best_match("Try a hurdle model: logistic regression for payer probability");
        assert!(e.name.contains("Logistic Regression + Hurdle"), "{}", e.name);
    }
}
