//! Attention-sum reader graph.
//!
//! Each document position is scored by the dot product of its contextual
//! embedding (bidirectional GRU state, `2H` wide) with the query embedding
//! (last forward state ‖ first backward state of the query GRU). A masked
//! softmax turns scores into attention, and the probability of a word is the
//! attention summed over all positions where the word occurs.

use crate::data::{Batch, EncodedExample};
use crate::ndmath::{check_gradients, GradCheckReport, NdError, Real, Tape, Tensor, Var};

use super::encoder::bidirectional;
use super::params::{ModelParams, ParamVars};
use super::ModelError;

/// Probability floor applied before taking the log in the loss.
pub const LOG_FLOOR: f64 = 1e-30;

/// Vars produced by a batched forward pass.
#[derive(Debug)]
pub struct BatchForward {
    /// `B×n` contextual embeddings per time step, each `B×2H`.
    pub contextual: Vec<Var>,
    /// `B×2H`
    pub query: Var,
    /// `B×n_max`, exactly zero at padded positions.
    pub attention: Var,
    /// Mean negative log-likelihood over the batch; present when every row has an answer.
    pub loss: Option<Var>,
}

fn time_major(ids: &[u32], mask: &[bool], batch: usize, len: usize) -> (Vec<usize>, Vec<bool>) {
    let mut tm_ids = Vec::with_capacity(batch * len);
    let mut tm_mask = Vec::with_capacity(batch * len);
    for t in 0..len {
        for b in 0..batch {
            tm_ids.push(ids[b * len + t] as usize);
            tm_mask.push(mask[b * len + t]);
        }
    }
    (tm_ids, tm_mask)
}

/// Query embedding `B×2H`: forward state after the last real token ‖ backward state at token 1.
pub fn encode_queries<T: Real>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    batch: &Batch,
) -> Result<Var, ModelError> {
    let (b, m) = (batch.size(), batch.query_len);
    if m == 0 {
        return Err(ModelError::EmptyQuery);
    }
    let (ids, mask) = time_major(&batch.query_ids, &batch.query_mask, b, m);
    let emb = tape.lookup_rows(vars.embedding, &ids)?;
    let states = bidirectional(tape, emb, m, b, &mask, &vars.query_encoder)?;
    Ok(tape.concat(states.forward[m - 1], states.backward[0], 1)?)
}

/// Contextual embeddings, one `B×2H` var per document time step.
pub fn encode_documents<T: Real>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    batch: &Batch,
) -> Result<Vec<Var>, ModelError> {
    let (b, n) = (batch.size(), batch.doc_len);
    if n == 0 {
        return Err(ModelError::EmptyDocument);
    }
    let (ids, mask) = time_major(&batch.doc_ids, &batch.doc_mask, b, n);
    let emb = tape.lookup_rows(vars.embedding, &ids)?;
    let states = bidirectional(tape, emb, n, b, &mask, &vars.doc_encoder)?;
    states
        .forward
        .iter()
        .zip(&states.backward)
        .map(|(&f, &bw)| tape.concat(f, bw, 1).map_err(ModelError::from))
        .collect()
}

/// Masked softmax over `contextual_t · query` for every position.
pub fn attention<T: Real>(
    tape: &mut Tape<T>,
    contextual: &[Var],
    query: Var,
    doc_mask: &[bool],
) -> Result<Var, NdError> {
    let scores = contextual
        .iter()
        .map(|&c| tape.row_dot(c, query))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = tape.concat_many(&scores, 1)?;
    tape.masked_softmax(scores, doc_mask)
}

/// Mean over the batch of `−ln P(a|q,d)`, where `P(a|q,d)` sums attention
/// over every position holding the answer. No candidate restriction applies here.
pub fn batch_loss<T: Real>(
    tape: &mut Tape<T>,
    attention: Var,
    batch: &Batch,
) -> Result<Var, ModelError> {
    let (b, n) = (batch.size(), batch.doc_len);
    let mut groups = Vec::with_capacity(b * n);
    for row in 0..b {
        let answer =
            batch.answers[row].ok_or_else(|| ModelError::MissingAnswer(batch.ids[row].clone()))?;
        let ids = batch.doc_row(row);
        let mask = &batch.doc_mask[row * n..(row + 1) * n];
        if !ids.iter().zip(mask).any(|(&t, &m)| m && t == answer) {
            return Err(ModelError::AnswerNotInDocument(batch.ids[row].clone()));
        }
        groups.extend(ids.iter().zip(mask).map(|(&t, &m)| {
            if m && t == answer {
                2 * row
            } else {
                2 * row + 1
            }
        }));
    }
    let flat = tape.reshape(attention, vec![b * n])?;
    let sums = tape.scatter_add(flat, &groups, 2 * b)?;
    let answer_mass = tape.gather(sums, &(0..b).map(|r| 2 * r).collect::<Vec<_>>())?;
    let log_p = tape.log_floor(answer_mass, LOG_FLOOR)?;
    let total = tape.sum(log_p)?;
    Ok(tape.scale(total, -1.0 / b as f64)?)
}

pub fn forward_batch<T: Real>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    batch: &Batch,
) -> Result<BatchForward, ModelError> {
    let contextual = encode_documents(tape, vars, batch)?;
    let query = encode_queries(tape, vars, batch)?;
    let attention = attention(tape, &contextual, query, &batch.doc_mask)?;
    let loss = if batch.answers.iter().all(Option::is_some) {
        Some(batch_loss(tape, attention, batch)?)
    } else {
        None
    };
    Ok(BatchForward {
        contextual,
        query,
        attention,
        loss,
    })
}

/// Per-row candidate probabilities (aligned with `batch.candidates`), summed
/// over occurrence groups with `scatter_add`.
pub fn candidate_probabilities<T: Real>(
    tape: &mut Tape<T>,
    attention: Var,
    batch: &Batch,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let (b, n) = (batch.size(), batch.doc_len);
    let mut groups = Vec::with_capacity(b * n);
    let mut offsets = Vec::with_capacity(b);
    let mut next = 0usize;
    for row in 0..b {
        let cands = &batch.candidates[row];
        let rest = next + cands.len();
        offsets.push(next);
        groups.extend(
            batch
                .doc_row(row)
                .iter()
                .map(|t| cands.iter().position(|c| c == t).map_or(rest, |k| next + k)),
        );
        next = rest + 1;
    }
    let flat = tape.reshape(attention, vec![b * n])?;
    let sums = tape.scatter_add(flat, &groups, next)?;
    let sums = tape.value(sums).data();
    Ok((0..b)
        .map(|row| {
            let o = offsets[row];
            sums[o..o + batch.candidates[row].len()]
                .iter()
                .map(|x| x.as_f64())
                .collect()
        })
        .collect())
}

/// Attention-sum aggregation for a single document: the probability of each
/// candidate is the attention mass on its occurrences (0 when absent).
pub fn answer_distribution<T: Real>(
    attention: &[T],
    doc: &[u32],
    candidates: &[u32],
) -> Result<Vec<T>, ModelError> {
    if attention.len() != doc.len() {
        return Err(ModelError::Shape(format!(
            "attention has {} entries for a {}-token document",
            attention.len(),
            doc.len()
        )));
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let rest = candidates.len();
    let groups: Vec<usize> = doc
        .iter()
        .map(|t| candidates.iter().position(|c| c == t).unwrap_or(rest))
        .collect();
    let mut tape = Tape::new();
    let w = tape.constant(Tensor::vector(attention.to_vec())?);
    let sums = tape.scatter_add(w, &groups, rest + 1)?;
    Ok(tape.value(sums).data()[..rest].to_vec())
}

/// Candidates sorted by descending probability, ties by ascending id.
pub fn rank_candidates(candidates: &[u32], probs: &[f64]) -> Vec<(u32, f64)> {
    let mut ranked: Vec<(u32, f64)> = candidates
        .iter()
        .copied()
        .zip(probs.iter().copied())
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Full single-example forward quantities.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `n×2H`
    pub contextual: Tensor<f64>,
    /// `2H`
    pub query: Tensor<f64>,
    pub attention: Vec<f64>,
    /// `(candidate id, probability)` in the example's candidate order.
    pub candidate_probs: Vec<(u32, f64)>,
    pub loss: Option<f64>,
}

impl ForwardTrace {
    /// Negative log-likelihood of `answer` summed over all its positions.
    pub fn loss_for(&self, doc: &[u32], answer: u32) -> Result<f64, ModelError> {
        if !doc.contains(&answer) {
            return Err(ModelError::AnswerNotInDocument(format!(
                "token id {answer}"
            )));
        }
        let p: f64 = doc
            .iter()
            .zip(&self.attention)
            .filter(|(&t, _)| t == answer)
            .map(|(_, &s)| s)
            .sum();
        Ok(-p.max(LOG_FLOOR).ln())
    }

    pub fn predict(&self) -> Vec<(u32, f64)> {
        let (ids, probs): (Vec<u32>, Vec<f64>) = self.candidate_probs.iter().copied().unzip();
        rank_candidates(&ids, &probs)
    }
}

/// Runs the reader on one example without recording gradients.
pub fn trace_example<T: Real>(
    params: &ModelParams<T>,
    ex: &EncodedExample,
) -> Result<ForwardTrace, ModelError> {
    if ex.doc.is_empty() {
        return Err(ModelError::EmptyDocument);
    }
    if ex.query.is_empty() {
        return Err(ModelError::EmptyQuery);
    }
    let batch = Batch::collate(&[ex]);
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false);
    let fwd = forward_batch(&mut tape, &vars, &batch)?;
    let n = ex.doc.len();
    let width = tape.value(fwd.query).cols();
    let mut ctx = Vec::with_capacity(n * width);
    for &c in &fwd.contextual {
        ctx.extend(tape.value(c).data().iter().map(|x| x.as_f64()));
    }
    let probs = candidate_probabilities(&mut tape, fwd.attention, &batch)?;
    Ok(ForwardTrace {
        contextual: Tensor::matrix(n, width, ctx)?,
        query: tape.value(fwd.query).cast::<f64>().reshape(vec![width])?,
        attention: tape
            .value(fwd.attention)
            .data()
            .iter()
            .map(|x| x.as_f64())
            .collect(),
        candidate_probs: ex
            .candidates
            .iter()
            .copied()
            .zip(probs[0].iter().copied())
            .collect(),
        loss: fwd.loss.map(|l| tape.value(l).data()[0].as_f64()),
    })
}

/// Finite-difference check of the batch loss against every parameter tensor.
pub fn gradient_check(
    params: &ModelParams<f64>,
    batch: &Batch,
    eps: f64,
) -> Result<GradCheckReport, ModelError> {
    let inputs: Vec<(String, Tensor<f64>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    // surface model-level errors (missing answers etc.) before the numeric sweep
    let mut probe = Tape::new();
    let probe_vars = ParamVars::register(&mut probe, params, false);
    if forward_batch(&mut probe, &probe_vars, batch)?
        .loss
        .is_none()
    {
        return Err(ModelError::MissingAnswer(batch.ids.join(",")));
    }
    let report = check_gradients(&inputs, eps, |tape, vars| {
        let pv = ParamVars::from_vars(vars);
        match forward_batch(tape, &pv, batch) {
            Ok(BatchForward { loss: Some(l), .. }) => Ok(l),
            Err(ModelError::Nd(e)) => Err(e),
            _ => Err(NdError::InvalidShape(vec![])),
        }
    })?;
    Ok(report)
}

/// Contextual embeddings `n×2H` of one document.
pub fn encode_document<T: Real>(
    params: &ModelParams<T>,
    doc: &[u32],
) -> Result<Tensor<T>, ModelError> {
    let (batch, mut tape, vars) = single(params, doc, &[crate::data::PLACEHOLDER_ID])?;
    let ctx = encode_documents(&mut tape, &vars, &batch)?;
    let width = 2 * params.dims.hidden;
    let data = ctx
        .iter()
        .flat_map(|&c| tape.value(c).data().to_vec())
        .collect();
    Ok(Tensor::matrix(doc.len(), width, data)?)
}

/// Query embedding `2H` of one query.
pub fn encode_query<T: Real>(
    params: &ModelParams<T>,
    query: &[u32],
) -> Result<Tensor<T>, ModelError> {
    if query.is_empty() {
        return Err(ModelError::EmptyQuery);
    }
    let (batch, mut tape, vars) = single(params, &[crate::data::PAD], query)?;
    let q = encode_queries(&mut tape, &vars, &batch)?;
    Ok(tape
        .value(q)
        .clone()
        .reshape(vec![2 * params.dims.hidden])?)
}

fn single<T: Real>(
    params: &ModelParams<T>,
    doc: &[u32],
    query: &[u32],
) -> Result<(Batch, Tape<T>, ParamVars), ModelError> {
    if doc.is_empty() {
        return Err(ModelError::EmptyDocument);
    }
    if let Some(&bad) = doc
        .iter()
        .chain(query)
        .find(|&&t| t as usize >= params.dims.vocab)
    {
        return Err(ModelError::Shape(format!(
            "token id {bad} outside vocabulary of {}",
            params.dims.vocab
        )));
    }
    let ex = EncodedExample {
        id: String::new(),
        doc: doc.to_vec(),
        query: query.to_vec(),
        candidates: Vec::new(),
        answer: None,
    };
    let batch = Batch::collate(&[&ex]);
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false);
    Ok((batch, tape, vars))
}
