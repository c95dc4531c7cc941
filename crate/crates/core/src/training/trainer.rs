use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{make_batches, reshuffle_entities, Batch, EncodedExample, Example, Vocabulary};
use crate::model::{forward_batch, Dims, ModelError, ModelParams, ParamVars};
use crate::ndmath::{NdError, Real, Tape, Tensor};

use super::eval::{argmax, encode_all, predict_encoded, Skipped, EVAL_BATCH_SIZE};
use super::init::init_params;
use super::optim::{clip_gradients, AdamConfig, AdamState};
use super::{TrainConfig, TrainError};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const RESHUFFLE_STREAM: u64 = 2;

/// Independent ChaCha stream `stream` under `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Example-weighted mean batch loss over the epoch.
    pub train_loss: f64,
    pub valid_accuracy: Option<f64>,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub const HEADER: &'static str = "epoch,train_loss,valid_accuracy,wall_time";

    /// CSV rendering. The wall-time column stays empty unless requested, so
    /// logs of equal-seed runs compare byte for byte.
    pub fn to_csv(&self, with_wall_time: bool) -> String {
        let mut s = String::new();
        writeln!(s, "{}", Self::HEADER).unwrap();
        for r in &self.records {
            let acc = r.valid_accuracy.map(|a| a.to_string()).unwrap_or_default();
            let wall = if with_wall_time {
                format!("{:.3}", r.wall_time)
            } else {
                String::new()
            };
            writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, acc, wall).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters of the best validation epoch (or the last epoch without validation data).
    pub params: ModelParams<T>,
    pub vocab: Vocabulary,
    pub log: TrainingLog,
    /// 0 means the initial parameters were kept.
    pub best_epoch: usize,
    pub best_accuracy: Option<f64>,
    pub stopped_early: bool,
    pub skipped_train: Vec<Skipped>,
    pub skipped_valid: Vec<Skipped>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// Loss and parameter gradients (in `named_tensors` order) for one batch.
pub fn loss_and_gradients<T: Real>(
    params: &ModelParams<T>,
    batch: &Batch,
) -> Result<(f64, Vec<Tensor<T>>), ModelError> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, true);
    let fwd = forward_batch(&mut tape, &vars, batch)?;
    let loss = fwd
        .loss
        .ok_or_else(|| ModelError::MissingAnswer(batch.ids.join(",")))?;
    let value = tape.value(loss).data()[0].as_f64();
    let mut grads = tape.backward(loss)?;
    let out = vars
        .in_order()
        .iter()
        .zip(params.named_tensors())
        .map(|(&v, (_, t))| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect();
    Ok((value, out))
}

/// Forward, backward, clip, Adam update.
pub fn train_step<T: Real>(
    params: &mut ModelParams<T>,
    adam: &mut AdamState<T>,
    batch: &Batch,
    clip_threshold: f64,
) -> Result<StepStats, TrainError> {
    let (loss, mut grads) = loss_and_gradients(params, batch)?;
    if !loss.is_finite() {
        return Err(TrainError::Model(ModelError::Nd(NdError::NonFinite {
            op: "loss",
        })));
    }
    let grad_norm = clip_gradients(&mut grads, clip_threshold)?;
    adam.update(&mut params.tensors_mut(), &grads)?;
    Ok(StepStats { loss, grad_norm })
}

pub fn new_adam<T: Real>(params: &ModelParams<T>, learning_rate: f64) -> AdamState<T> {
    let shapes: Vec<&[usize]> = params
        .named_tensors()
        .iter()
        .map(|(_, t)| t.shape())
        .collect();
    AdamState::new(
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        },
        &shapes,
    )
}

fn accuracy<T: Real>(
    params: &ModelParams<T>,
    examples: &[EncodedExample],
) -> Result<Option<f64>, TrainError> {
    let labeled: Vec<EncodedExample> = examples
        .iter()
        .filter(|e| e.answer.is_some())
        .cloned()
        .collect();
    if labeled.is_empty() {
        return Ok(None);
    }
    let probs = predict_encoded(params, &labeled, EVAL_BATCH_SIZE)?;
    let correct = labeled
        .iter()
        .zip(&probs)
        .filter(|(e, p)| Some(e.candidates[argmax(p)]) == e.answer)
        .count();
    Ok(Some(correct as f64 / labeled.len() as f64))
}

pub fn train<T: Real>(
    config: &TrainConfig,
    train: &[Example],
    valid: &[Example],
) -> Result<TrainOutcome<T>, TrainError> {
    train_with(config, train, valid, |_| {})
}

/// Training loop; `on_epoch` sees each log record as it is produced.
pub fn train_with<T: Real>(
    config: &TrainConfig,
    train: &[Example],
    valid: &[Example],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let corpus: Vec<Example> = train.iter().chain(valid).cloned().collect();
    let vocab = Vocabulary::build(&corpus, config.vocab_size)?;
    let (train_enc, skipped_train) = encode_all(&vocab, train);
    let (valid_enc, skipped_valid) = encode_all(&vocab, valid);
    if let Some(e) = train_enc.iter().find(|e| e.answer.is_none()) {
        return Err(TrainError::Model(ModelError::MissingAnswer(e.id.clone())));
    }

    let dims = Dims::new(vocab.len(), config.embed_dim, config.hidden_dim)?;
    let mut params: ModelParams<T> =
        init_params(dims, &mut seeded_stream(config.seed, INIT_STREAM));
    let mut shuffle_rng = seeded_stream(config.seed, SHUFFLE_STREAM);
    let mut reshuffle_rng = seeded_stream(config.seed, RESHUFFLE_STREAM);
    let mut adam = new_adam(&params, config.learning_rate);

    let mut log = TrainingLog::default();
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_accuracy: Option<f64> = None;
    let mut epochs_below_best = 0;
    let mut stopped_early = false;
    let entities = vocab.entity_range();

    for epoch in 1..=config.max_epochs {
        let mut order = train_enc.clone();
        order.shuffle(&mut shuffle_rng);
        let batches = make_batches(&order, config.batch_size, config.prefetch);
        let mut loss_sum = 0.0;
        for (index, batch) in batches.iter().enumerate() {
            let shuffled;
            let batch = if config.reshuffle_entities && !entities.is_empty() {
                shuffled = reshuffle_entities(batch, entities.clone(), &mut reshuffle_rng);
                &shuffled
            } else {
                batch
            };
            let stats =
                train_step(&mut params, &mut adam, batch, config.clip_threshold).map_err(|e| {
                    match e {
                        TrainError::Model(ModelError::Nd(NdError::NonFinite { op })) => {
                            TrainError::NonFiniteLoss {
                                epoch,
                                batch: index,
                                first_id: batch.ids.first().cloned().unwrap_or_default(),
                                op,
                            }
                        }
                        other => other,
                    }
                })?;
            loss_sum += stats.loss * batch.size() as f64;
        }
        let train_loss = if order.is_empty() {
            0.0
        } else {
            loss_sum / order.len() as f64
        };
        let valid_accuracy = accuracy(&params, &valid_enc)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_accuracy,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.records.push(record);

        match (valid_accuracy, best_accuracy) {
            (None, _) => {
                best_params = params.clone();
                best_epoch = epoch;
            }
            (Some(acc), best) if best.is_none_or(|b| acc > b) => {
                best_accuracy = Some(acc);
                best_params = params.clone();
                best_epoch = epoch;
                epochs_below_best = 0;
            }
            (Some(acc), Some(b)) if acc < b => {
                epochs_below_best += 1;
                if epochs_below_best >= config.patience {
                    stopped_early = true;
                    break;
                }
            }
            _ => {}
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        vocab,
        log,
        best_epoch,
        best_accuracy,
        stopped_early,
        skipped_train,
        skipped_valid,
    })
}
