//! Template-based mock backend. Output is a pure function of
//! (prompt, k, seed), with a dial for how many keywords each candidate
//! embeds so tests can steer the relevance reward precisely.

use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CandidateText, GenerationRequest, GeneratorBackend};
use crate::error::Result;
use crate::numerics::{derive_seed, fnv1a64};
use crate::reward::DEFAULT_KEYWORDS;

const TREND_PHRASES: &[&str] = &[
    "the readings hold near a steady level through the window",
    "values climb gradually toward the end of the window",
    "values ease lower over the recent interval",
    "the window alternates between short rises and pullbacks",
    "the latest observations sit close to the window average",
];

#[derive(Debug, Clone)]
pub struct MockBackend {
    keywords: Vec<String>,
    /// When set, candidate `i` embeds `keyword_counts[i % len]` keywords;
    /// otherwise the count is drawn uniformly from 0..=3.
    keyword_counts: Option<Vec<usize>>,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            keyword_counts: None,
        }
    }
}

impl MockBackend {
    pub fn new(keywords: Vec<String>) -> Self {
        MockBackend {
            keywords,
            keyword_counts: None,
        }
    }

    /// Fix the number of embedded keywords per generation index.
    pub fn with_keyword_counts(mut self, counts: Vec<usize>) -> Self {
        assert!(!counts.is_empty());
        self.keyword_counts = Some(counts);
        self
    }

    fn candidate_body(&self, request: &GenerationRequest, index: usize) -> String {
        let prompt_hash = fnv1a64(request.prompt.as_bytes());
        let seed = derive_seed(request.seed, &[prompt_hash, index as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let phrase = TREND_PHRASES.choose(&mut rng).unwrap();
        let n_keywords = match &self.keyword_counts {
            Some(counts) => counts[index % counts.len()],
            None => rng.random_range(0..=3usize),
        };
        let mut body = phrase.to_string();
        if n_keywords > 0 {
            let picks: Vec<&str> = (0..n_keywords)
                .map(|_| self.keywords.choose(&mut rng).unwrap().as_str())
                .collect();
            body.push_str(&format!("; analysts point to {}", picks.join(" and ")));
        }
        // Respect max_tokens as a soft cap on whitespace tokens.
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.len() > request.max_tokens {
            tokens[..request.max_tokens].join(" ")
        } else {
            body
        }
    }
}

impl GeneratorBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<CandidateText>> {
        request.validate()?;
        Ok((0..request.k)
            .map(|i| CandidateText {
                body: self.candidate_body(request, i),
                backend_id: self.id().to_string(),
                generation_index: i,
            })
            .collect())
    }

    fn vocabulary_hint(&self) -> Vec<String> {
        let mut tokens: Vec<String> = TREND_PHRASES
            .iter()
            .flat_map(|p| crate::textualize::tokenize(p))
            .collect();
        tokens.extend(crate::textualize::tokenize("analysts point to and"));
        tokens.extend(self.keywords.iter().flat_map(|k| crate::textualize::tokenize(k)));
        tokens.sort();
        tokens.dedup();
        tokens
    }
}
