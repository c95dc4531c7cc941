use std::collections::HashMap;
use std::ops::Range;

use super::{DataError, Example, PLACEHOLDER};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PLACEHOLDER_ID: u32 = 2;
pub const RESERVED: usize = 3;

const RESERVED_TOKENS: [&str; RESERVED] = ["<pad>", "<unk>", PLACEHOLDER];

/// Anonymized entity tokens look like `@entity17`.
pub fn is_entity_token(token: &str) -> bool {
    token
        .strip_prefix("@entity")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

fn entity_number(token: &str) -> u64 {
    token["@entity".len()..].parse().unwrap_or(u64::MAX)
}

/// Token/id map. Ids 0..3 are reserved, entity tokens follow as one
/// contiguous block, then ordinary words by descending frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    entities: Range<u32>,
}

/// An [`Example`] mapped to vocabulary ids. Candidates are sorted by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: String,
    pub doc: Vec<u32>,
    pub query: Vec<u32>,
    pub candidates: Vec<u32>,
    pub answer: Option<u32>,
}

impl Vocabulary {
    /// Keeps at most `max_size` non-reserved tokens (all entities are kept
    /// regardless); everything else maps to UNK.
    pub fn build(examples: &[Example], max_size: Option<usize>) -> Result<Self, DataError> {
        if let Some(m) = max_size {
            if m < RESERVED {
                return Err(DataError::Vocab(format!(
                    "max size {m} is smaller than the {RESERVED} reserved ids"
                )));
            }
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut entities: Vec<&str> = Vec::new();
        // candidates and answers are registered with whatever count the text gives them
        for ex in examples {
            for tok in ex.document.iter().chain(&ex.query) {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
            for tok in ex.candidates.iter().chain(ex.answer.iter()) {
                counts.entry(tok.as_str()).or_insert(0);
            }
        }
        counts.retain(|t, _| !RESERVED_TOKENS.contains(t));
        for tok in counts.keys() {
            if is_entity_token(tok) {
                entities.push(*tok);
            }
        }
        entities.sort_by(|a, b| {
            entity_number(a)
                .cmp(&entity_number(b))
                .then_with(|| a.cmp(b))
        });
        let mut words: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !is_entity_token(t))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(m) = max_size {
            words.truncate(m.saturating_sub(entities.len()));
        }

        let tokens: Vec<String> = RESERVED_TOKENS
            .iter()
            .copied()
            .chain(entities.iter().copied())
            .chain(words.iter().map(|(t, _)| *t))
            .map(String::from)
            .collect();
        let start = RESERVED as u32;
        Self::from_tokens(tokens, start..start + entities.len() as u32)
    }

    /// Rebuilds a vocabulary from its id-ordered token listing.
    pub fn from_tokens(tokens: Vec<String>, entities: Range<u32>) -> Result<Self, DataError> {
        if tokens.len() < RESERVED || tokens[..RESERVED] != RESERVED_TOKENS {
            return Err(DataError::Vocab(
                "reserved tokens missing or out of order".into(),
            ));
        }
        if entities.start < RESERVED as u32
            || entities.end as usize > tokens.len()
            || entities.start > entities.end
        {
            return Err(DataError::Vocab(format!(
                "entity block {entities:?} out of range"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(DataError::Vocab(format!("duplicate token {t:?}")));
            }
            let in_block = entities.contains(&(i as u32));
            if i >= RESERVED && in_block != is_entity_token(t) {
                return Err(DataError::Vocab(format!(
                    "token {t:?} is on the wrong side of the entity block"
                )));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            entities,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn entity_range(&self) -> Range<u32> {
        self.entities.clone()
    }

    pub fn is_entity(&self, id: u32) -> bool {
        self.entities.contains(&id)
    }

    /// Id of `token`, or UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Maps an example to ids. Examples whose candidates or answer fall out
    /// of vocabulary are rejected, since their probabilities could not be told apart.
    pub fn encode(&self, ex: &Example) -> Result<EncodedExample, DataError> {
        let mut candidates = Vec::with_capacity(ex.candidates.len());
        for c in &ex.candidates {
            match self.lookup(c) {
                Some(id) if id != UNK => candidates.push(id),
                _ => {
                    return Err(DataError::Invalid {
                        id: ex.id.clone(),
                        reason: format!("candidate {c:?} is out of vocabulary"),
                    })
                }
            }
        }
        candidates.sort_unstable();
        let answer = ex.answer.as_ref().map(|a| self.id(a));
        Ok(EncodedExample {
            id: ex.id.clone(),
            doc: ex.document.iter().map(|t| self.id(t)).collect(),
            query: ex.query.iter().map(|t| self.id(t)).collect(),
            candidates,
            answer,
        })
    }
}
