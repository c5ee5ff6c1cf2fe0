//! Token vocabulary for the forecaster's learned text-embedding table.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::textualize::tokenize;

/// Sorted, deduplicated token set built from the training corpus plus any
/// generator-reachable tokens. Unknown tokens map to a dedicated
/// out-of-vocabulary bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, extra: &[String]) -> Vocab {
        let mut tokens: Vec<String> = corpus
            .into_iter()
            .flat_map(tokenize)
            .chain(extra.iter().flat_map(|t| tokenize(t)))
            .collect();
        tokens.sort();
        tokens.dedup();
        Vocab::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Number of known tokens, excluding the OOV bucket.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of the out-of-vocabulary bucket.
    pub fn oov_id(&self) -> usize {
        self.tokens.len()
    }

    /// Rows needed in the embedding table: known tokens plus the OOV bucket.
    pub fn embedding_rows(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn id_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.oov_id())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
