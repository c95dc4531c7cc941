//! Accuracy broken down by document length, candidate count and the answer's
//! frequency rank, as plot-ready CSV tables.
//!
//! CSV schemas (one header row each):
//!
//! * length buckets: `bucket,count,correct,accuracy,min_length,max_length,mean_length`
//! * length histogram: `lower,upper,count`
//! * candidate counts: `candidates,count,correct,accuracy,fraction`
//! * answer rank: `rank,count,correct,accuracy,cumulative_count,cumulative_correct,cumulative_accuracy`
//!
//! `accuracy` columns are empty for groups without examples.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::data::Example;
use crate::ensemble::{Prediction, PredictionSet};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("example {0} has no prediction")]
    MissingPrediction(String),
    #[error("prediction for {0} has no matching example")]
    UnknownPrediction(String),
    #[error("example {0} has no answer")]
    Unlabeled(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Per-example facts every table is built from.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub id: String,
    pub doc_length: usize,
    pub candidates: usize,
    pub answer_rank: usize,
    pub correct: bool,
}

/// 1-based rank of `answer` among `candidates` by occurrence count in `doc`.
/// Equal counts rank the earlier candidate first; pass candidates in vocabulary-id order.
pub fn frequency_rank(doc: &[String], candidates: &[&str], answer: &str) -> Option<usize> {
    let mut counts: HashMap<&str, usize> = candidates.iter().map(|c| (*c, 0)).collect();
    for t in doc {
        if let Some(n) = counts.get_mut(t.as_str()) {
            *n += 1;
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        counts[candidates[b]]
            .cmp(&counts[candidates[a]])
            .then(a.cmp(&b))
    });
    order
        .iter()
        .position(|&i| candidates[i] == answer)
        .map(|r| r + 1)
}

/// Joins predictions to the dataset in dataset order.
pub fn outcomes(
    predictions: &PredictionSet,
    dataset: &[Example],
) -> Result<Vec<Outcome>, AnalysisError> {
    let index: HashMap<&str, &Prediction> = predictions.index();
    let known: HashMap<&str, ()> = dataset.iter().map(|e| (e.id.as_str(), ())).collect();
    if let Some(p) = predictions
        .entries
        .iter()
        .find(|p| !known.contains_key(p.id.as_str()))
    {
        return Err(AnalysisError::UnknownPrediction(p.id.clone()));
    }
    dataset
        .iter()
        .map(|ex| {
            let answer = ex
                .answer
                .as_deref()
                .ok_or_else(|| AnalysisError::Unlabeled(ex.id.clone()))?;
            let p = index
                .get(ex.id.as_str())
                .ok_or_else(|| AnalysisError::MissingPrediction(ex.id.clone()))?;
            let cands: Vec<&str> = p.candidates.iter().map(|(c, _)| c.as_str()).collect();
            let answer_rank =
                frequency_rank(&ex.document, &cands, answer).unwrap_or(cands.len() + 1);
            Ok(Outcome {
                id: ex.id.clone(),
                doc_length: ex.document.len(),
                candidates: ex.candidates.len(),
                answer_rank,
                correct: p.best() == Some(answer),
            })
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn overall_accuracy(outcomes: &[Outcome]) -> Option<f64> {
    ratio(
        outcomes.iter().filter(|o| o.correct).count(),
        outcomes.len(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthBucket {
    pub bucket: usize,
    pub count: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub min_length: usize,
    pub max_length: usize,
    pub mean_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: usize,
    pub upper: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthTable {
    pub buckets: Vec<LengthBucket>,
    pub histogram: Vec<HistogramBin>,
    pub warning: Option<String>,
}

/// Sizes of `k` near-equal groups over `n` items; the remainder goes to the first groups.
pub fn bucket_sizes(n: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Equal-width histogram of `values` with at most `bins` bins, inclusive bounds.
pub fn histogram(values: &[usize], bins: usize) -> Vec<HistogramBin> {
    let (Some(&lo), Some(&hi)) = (values.iter().min(), values.iter().max()) else {
        return Vec::new();
    };
    let bins = bins.max(1);
    let width = (hi - lo + 1).div_ceil(bins);
    let n = (hi - lo + 1).div_ceil(width);
    let mut out: Vec<HistogramBin> = (0..n)
        .map(|i| HistogramBin {
            lower: lo + i * width,
            upper: lo + (i + 1) * width - 1,
            count: 0,
        })
        .collect();
    for &v in values {
        out[(v - lo) / width].count += 1;
    }
    out
}

pub const HISTOGRAM_BINS: usize = 20;

/// Examples sorted by document length and cut into `buckets` equal-size groups.
pub fn accuracy_by_length(outcomes: &[Outcome], buckets: usize) -> LengthTable {
    let mut warning = None;
    let mut k = buckets.max(1);
    if outcomes.len() < k {
        warning = Some(format!(
            "{} examples cannot fill {} buckets; using {}",
            outcomes.len(),
            k,
            outcomes.len()
        ));
        k = outcomes.len();
    }
    let mut sorted: Vec<&Outcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.doc_length);
    let mut rows = Vec::with_capacity(k);
    let mut start = 0;
    for (i, size) in bucket_sizes(sorted.len(), k).into_iter().enumerate() {
        let group = &sorted[start..start + size];
        start += size;
        let correct = group.iter().filter(|o| o.correct).count();
        let total_len: usize = group.iter().map(|o| o.doc_length).sum();
        rows.push(LengthBucket {
            bucket: i + 1,
            count: size,
            correct,
            accuracy: ratio(correct, size),
            min_length: group.first().map_or(0, |o| o.doc_length),
            max_length: group.last().map_or(0, |o| o.doc_length),
            mean_length: total_len as f64 / size.max(1) as f64,
        });
    }
    let lengths: Vec<usize> = outcomes.iter().map(|o| o.doc_length).collect();
    LengthTable {
        buckets: rows,
        histogram: histogram(&lengths, HISTOGRAM_BINS),
        warning,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateGroup {
    pub candidates: usize,
    pub count: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    /// Share of all examples; doubles as the candidate-count histogram.
    pub fraction: f64,
}

pub fn accuracy_by_candidate_count(outcomes: &[Outcome]) -> Vec<CandidateGroup> {
    let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let g = groups.entry(o.candidates).or_default();
        g.0 += 1;
        g.1 += usize::from(o.correct);
    }
    groups
        .into_iter()
        .map(|(candidates, (count, correct))| CandidateGroup {
            candidates,
            count,
            correct,
            accuracy: ratio(correct, count),
            fraction: count as f64 / outcomes.len() as f64,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankGroup {
    /// `1..=max_rank`, then `>max_rank` for the overflow row.
    pub rank: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub cumulative_count: usize,
    pub cumulative_correct: usize,
    /// Accuracy over examples whose answer is among the `rank` most frequent candidates.
    pub cumulative_accuracy: Option<f64>,
}

/// Groups by the answer's frequency rank: one row per rank `1..=max_rank`
/// plus an overflow row, each with strict and cumulative figures.
pub fn accuracy_by_answer_rank(outcomes: &[Outcome], max_rank: usize) -> Vec<RankGroup> {
    let mut counts = vec![(0usize, 0usize); max_rank + 1];
    for o in outcomes {
        let slot = o.answer_rank.min(max_rank + 1) - 1;
        counts[slot].0 += 1;
        counts[slot].1 += usize::from(o.correct);
    }
    let (mut cum_n, mut cum_c) = (0, 0);
    counts
        .into_iter()
        .enumerate()
        .map(|(i, (count, correct))| {
            cum_n += count;
            cum_c += correct;
            RankGroup {
                rank: if i < max_rank {
                    (i + 1).to_string()
                } else {
                    format!(">{max_rank}")
                },
                count,
                correct,
                accuracy: ratio(correct, count),
                cumulative_count: cum_n,
                cumulative_correct: cum_c,
                cumulative_accuracy: ratio(cum_c, cum_n),
            }
        })
        .collect()
}

/// `Σ count·accuracy / Σ count` over a table's groups.
pub fn recombine(groups: impl IntoIterator<Item = (usize, Option<f64>)>) -> Option<f64> {
    let (mut n, mut acc) = (0usize, 0.0f64);
    for (count, a) in groups {
        n += count;
        acc += count as f64 * a.unwrap_or(0.0);
    }
    (n > 0).then(|| acc / n as f64)
}

pub fn write_csv<W: Write, S: Serialize>(w: W, rows: &[S]) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
