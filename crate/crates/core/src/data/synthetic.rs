use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Example, PLACEHOLDER};

pub const MARKER: &str = "@marker";

/// Parameters of the marker task: the answer is the entity that directly
/// follows the single `@marker` token. Distractor entities appear one to
/// three times each, so counting occurrences alone does not solve it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub examples: usize,
    pub doc_len: usize,
    pub candidates: usize,
    pub entity_pool: usize,
    pub filler_words: usize,
    pub id_prefix: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            examples: 100,
            doc_len: 20,
            candidates: 5,
            entity_pool: 20,
            filler_words: 30,
            id_prefix: "syn".into(),
        }
    }
}

impl SyntheticSpec {
    fn check(&self) -> Result<(), DataError> {
        if self.candidates == 0 || self.candidates > self.entity_pool {
            return Err(DataError::InvalidSpec(format!(
                "need 1 <= candidates ({}) <= entity pool ({})",
                self.candidates, self.entity_pool
            )));
        }
        // marker + answer + one slot per distractor
        if self.doc_len < self.candidates + 1 {
            return Err(DataError::InvalidSpec(format!(
                "document length {} cannot hold the marker and {} candidates",
                self.doc_len, self.candidates
            )));
        }
        if self.filler_words == 0 {
            return Err(DataError::InvalidSpec(
                "filler vocabulary must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

pub fn gen_synthetic<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<Vec<Example>, DataError> {
    spec.check()?;
    let entities: Vec<String> = (0..spec.entity_pool)
        .map(|i| format!("@entity{i}"))
        .collect();
    let fillers: Vec<String> = (0..spec.filler_words).map(|i| format!("w{i}")).collect();
    let query: Vec<String> = ["the", "entity", "after", MARKER, "is", PLACEHOLDER]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut out = Vec::with_capacity(spec.examples);
    for n in 0..spec.examples {
        let chosen: Vec<&String> = entities.choose_multiple(rng, spec.candidates).collect();
        let answer = chosen[0].clone();

        let mut slots: Vec<Option<String>> = vec![None; spec.doc_len];
        let marker_at = rng.random_range(0..spec.doc_len - 1);
        slots[marker_at] = Some(MARKER.to_string());
        slots[marker_at + 1] = Some(answer.clone());

        let mut free: Vec<usize> = (0..spec.doc_len).filter(|&i| slots[i].is_none()).collect();
        free.shuffle(rng);
        let mut free = free.into_iter();
        for d in &chosen[1..] {
            let copies = rng.random_range(1..=3usize);
            for _ in 0..copies {
                match free.next() {
                    Some(pos) => slots[pos] = Some((*d).clone()),
                    None => break,
                }
            }
        }
        let document: Vec<String> = slots
            .into_iter()
            .map(|s| s.unwrap_or_else(|| fillers.choose(rng).cloned().unwrap_or_default()))
            .collect();

        let mut candidates: Vec<String> = chosen.iter().map(|s| (*s).clone()).collect();
        candidates.shuffle(rng);
        let ex = Example {
            id: format!("{}-{n}", spec.id_prefix),
            document,
            query: query.clone(),
            candidates,
            answer: Some(answer),
        };
        ex.validate()?;
        out.push(ex);
    }
    Ok(out)
}
