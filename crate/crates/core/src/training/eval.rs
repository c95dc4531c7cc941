use crate::data::{Batch, EncodedExample, Example, Vocabulary};
use crate::ensemble::{Prediction, PredictionSet};
use crate::model::{candidate_probabilities, forward_batch, ModelParams, ParamVars};
use crate::ndmath::{Real, Tape};

use super::TrainError;

pub const EVAL_BATCH_SIZE: usize = 32;

/// An example left out of evaluation and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: PredictionSet,
    pub correct: usize,
    pub labeled: usize,
    pub skipped: Vec<Skipped>,
}

impl Evaluation {
    /// `None` when no evaluated example carries an answer.
    pub fn accuracy(&self) -> Option<f64> {
        (self.labeled > 0).then(|| self.correct as f64 / self.labeled as f64)
    }
}

/// Splits examples into encodable ones and skipped ones, preserving order.
pub fn encode_all(vocab: &Vocabulary, examples: &[Example]) -> (Vec<EncodedExample>, Vec<Skipped>) {
    let mut ok = Vec::with_capacity(examples.len());
    let mut skipped = Vec::new();
    for ex in examples {
        match ex.validate().and_then(|_| vocab.encode(ex)) {
            Ok(e) => ok.push(e),
            Err(err) => skipped.push(Skipped {
                id: ex.id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    (ok, skipped)
}

/// Candidate probabilities for already-encoded examples, batched in input order.
pub fn predict_encoded<T: Real>(
    params: &ModelParams<T>,
    examples: &[EncodedExample],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = Batch::collate(&refs);
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params, false);
        let fwd = forward_batch(&mut tape, &vars, &batch)?;
        out.extend(candidate_probabilities(&mut tape, fwd.attention, &batch)?);
    }
    Ok(out)
}

/// Index of the most probable candidate; ties go to the earlier (smaller id) candidate.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Runs the reader over `examples`, recording each candidate distribution.
pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    vocab: &Vocabulary,
    examples: &[Example],
    model_id: &str,
    batch_size: usize,
) -> Result<Evaluation, TrainError> {
    let (encoded, skipped) = encode_all(vocab, examples);
    let probs = predict_encoded(params, &encoded, batch_size)?;
    let mut predictions = PredictionSet::new(model_id);
    let (mut correct, mut labeled) = (0, 0);
    for (ex, p) in encoded.iter().zip(probs) {
        if let Some(a) = ex.answer {
            labeled += 1;
            if ex.candidates[argmax(&p)] == a {
                correct += 1;
            }
        }
        predictions.entries.push(Prediction {
            id: ex.id.clone(),
            candidates: ex
                .candidates
                .iter()
                .map(|&c| vocab.token(c).to_string())
                .zip(p)
                .collect(),
        });
    }
    let mut eval = Evaluation {
        predictions,
        correct,
        labeled,
        skipped,
    };
    eval.predictions.accuracy = eval.accuracy();
    Ok(eval)
}
