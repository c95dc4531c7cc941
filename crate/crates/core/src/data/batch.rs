use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use super::vocab::{EncodedExample, PAD};
use super::DataError;

/// Padded mini-batch. Matrices are row-major `size × max_len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Example ids in row order.
    pub ids: Vec<String>,
    pub doc_ids: Vec<u32>,
    pub doc_mask: Vec<bool>,
    pub doc_len: usize,
    pub query_ids: Vec<u32>,
    pub query_mask: Vec<bool>,
    pub query_len: usize,
    pub candidates: Vec<Vec<u32>>,
    /// `occurrences[b][c]` lists the document positions holding `candidates[b][c]`.
    pub occurrences: Vec<Vec<Vec<usize>>>,
    pub answers: Vec<Option<u32>>,
    /// Entity permutation applied to this batch, as `new = start + perm[old - start]`.
    pub entity_permutation: Option<Vec<u32>>,
}

fn pad_rows(rows: &[&[u32]]) -> (Vec<u32>, Vec<bool>, usize) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(rows.len() * width);
    let mut mask = Vec::with_capacity(rows.len() * width);
    for r in rows {
        ids.extend_from_slice(r);
        ids.extend(std::iter::repeat_n(PAD, width - r.len()));
        mask.extend(std::iter::repeat_n(true, r.len()));
        mask.extend(std::iter::repeat_n(false, width - r.len()));
    }
    (ids, mask, width)
}

impl Batch {
    pub fn collate(examples: &[&EncodedExample]) -> Batch {
        let docs: Vec<&[u32]> = examples.iter().map(|e| e.doc.as_slice()).collect();
        let queries: Vec<&[u32]> = examples.iter().map(|e| e.query.as_slice()).collect();
        let (doc_ids, doc_mask, doc_len) = pad_rows(&docs);
        let (query_ids, query_mask, query_len) = pad_rows(&queries);
        let occurrences = examples
            .iter()
            .map(|e| {
                e.candidates
                    .iter()
                    .map(|&c| {
                        e.doc
                            .iter()
                            .enumerate()
                            .filter(|(_, &t)| t == c)
                            .map(|(i, _)| i)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Batch {
            ids: examples.iter().map(|e| e.id.clone()).collect(),
            doc_ids,
            doc_mask,
            doc_len,
            query_ids,
            query_mask,
            query_len,
            candidates: examples.iter().map(|e| e.candidates.clone()).collect(),
            occurrences,
            answers: examples.iter().map(|e| e.answer).collect(),
            entity_permutation: None,
        }
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn doc_row(&self, b: usize) -> &[u32] {
        &self.doc_ids[b * self.doc_len..(b + 1) * self.doc_len]
    }

    pub fn query_row(&self, b: usize) -> &[u32] {
        &self.query_ids[b * self.query_len..(b + 1) * self.query_len]
    }

    /// Number of real (unpadded) document tokens of row `b`.
    pub fn doc_length(&self, b: usize) -> usize {
        self.doc_mask[b * self.doc_len..(b + 1) * self.doc_len]
            .iter()
            .filter(|&&m| m)
            .count()
    }

    pub fn query_length(&self, b: usize) -> usize {
        self.query_mask[b * self.query_len..(b + 1) * self.query_len]
            .iter()
            .filter(|&&m| m)
            .count()
    }

    /// Checks that masks cover exactly a non-empty prefix of real tokens and
    /// that every occurrence index points at its candidate.
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |b: usize, reason: String| DataError::Invalid {
            id: self.ids[b].clone(),
            reason,
        };
        let n = self.size();
        if self.doc_ids.len() != n * self.doc_len
            || self.doc_mask.len() != n * self.doc_len
            || self.query_ids.len() != n * self.query_len
            || self.query_mask.len() != n * self.query_len
            || self.candidates.len() != n
            || self.occurrences.len() != n
            || self.answers.len() != n
        {
            return Err(DataError::Vocab(
                "batch fields disagree on batch size".into(),
            ));
        }
        for b in 0..n {
            for (ids, mask, width) in [
                (
                    self.doc_row(b),
                    &self.doc_mask[b * self.doc_len..(b + 1) * self.doc_len],
                    self.doc_len,
                ),
                (
                    self.query_row(b),
                    &self.query_mask[b * self.query_len..(b + 1) * self.query_len],
                    self.query_len,
                ),
            ] {
                let real = mask.iter().take_while(|&&m| m).count();
                if real == 0 || mask[real..].iter().any(|&m| m) {
                    return Err(bad(b, "mask is not a non-empty prefix".into()));
                }
                if ids[..real].contains(&PAD) || ids[real..width].iter().any(|&t| t != PAD) {
                    return Err(bad(b, "mask disagrees with padding".into()));
                }
            }
            let len = self.doc_length(b);
            let row = self.doc_row(b);
            if self.occurrences[b].len() != self.candidates[b].len() {
                return Err(bad(b, "occurrence lists do not match candidates".into()));
            }
            for (&c, occ) in self.candidates[b].iter().zip(&self.occurrences[b]) {
                if occ.iter().any(|&i| i >= len || row[i] != c) {
                    return Err(bad(
                        b,
                        format!("occurrence index for candidate {c} is wrong"),
                    ));
                }
                if occ.len() != row[..len].iter().filter(|&&t| t == c).count() {
                    return Err(bad(b, format!("occurrences of candidate {c} incomplete")));
                }
            }
        }
        Ok(())
    }
}

/// Groups example indices into batches: take `batch_size·prefetch` examples
/// at a time, stable-sort that buffer by length, and cut it into batches.
/// The last buffer and last batch may be short.
pub fn plan_batches(lengths: &[usize], batch_size: usize, prefetch: usize) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let buffer = batch_size * prefetch.max(1);
    let mut out = Vec::new();
    let order: Vec<usize> = (0..lengths.len()).collect();
    for chunk in order.chunks(buffer) {
        let mut sorted = chunk.to_vec();
        sorted.sort_by_key(|&i| lengths[i]);
        out.extend(sorted.chunks(batch_size).map(<[usize]>::to_vec));
    }
    out
}

/// Length-bucketed batches in the order given; the caller shuffles per epoch.
pub fn make_batches(examples: &[EncodedExample], batch_size: usize, prefetch: usize) -> Vec<Batch> {
    let lengths: Vec<usize> = examples.iter().map(|e| e.doc.len()).collect();
    plan_batches(&lengths, batch_size, prefetch)
        .into_iter()
        .map(|idx| {
            let refs: Vec<&EncodedExample> = idx.iter().map(|&i| &examples[i]).collect();
            Batch::collate(&refs)
        })
        .collect()
}

/// Applies a fresh uniform permutation of the entity id block to every id in
/// the batch: documents, queries, candidates and answers.
pub fn reshuffle_entities<R: Rng + ?Sized>(
    batch: &Batch,
    entities: Range<u32>,
    rng: &mut R,
) -> Batch {
    let mut perm: Vec<u32> = (0..entities.len() as u32).collect();
    perm.shuffle(rng);
    apply_entity_permutation(batch, entities, &perm)
}

pub fn apply_entity_permutation(batch: &Batch, entities: Range<u32>, perm: &[u32]) -> Batch {
    let map = |id: u32| {
        if entities.contains(&id) {
            entities.start + perm[(id - entities.start) as usize]
        } else {
            id
        }
    };
    let mut out = batch.clone();
    out.doc_ids.iter_mut().for_each(|t| *t = map(*t));
    out.query_ids.iter_mut().for_each(|t| *t = map(*t));
    for cands in &mut out.candidates {
        cands.iter_mut().for_each(|t| *t = map(*t));
    }
    for a in out.answers.iter_mut().flatten() {
        *a = map(*a);
    }
    out.entity_permutation = Some(perm.to_vec());
    out
}
