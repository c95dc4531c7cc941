//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use asreader::analysis::{
    accuracy_by_answer_rank, accuracy_by_candidate_count, accuracy_by_length, outcomes,
    overall_accuracy, recombine,
};
use asreader::data::{
    gen_synthetic, make_batches, reshuffle_entities, Batch, EncodedExample, Example, SyntheticSpec,
    Vocabulary, PLACEHOLDER, PLACEHOLDER_ID,
};
use asreader::ensemble::{greedy_ensemble, Prediction, PredictionSet};
use asreader::model::{
    answer_distribution, candidate_probabilities, forward_batch, gradient_check, load_checkpoint,
    save_checkpoint, Dims, GruWeights, ModelParams, ParamVars,
};
use asreader::ndmath::{Tape, Tensor};
use asreader::training::{clip_gradients, evaluate, init_params, train, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    println!(
        "{} criterion {n:>2} {name}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn synthetic(n: usize, prefix: &str, seed: u64) -> Vec<Example> {
    let spec = SyntheticSpec {
        examples: n,
        id_prefix: prefix.into(),
        ..SyntheticSpec::default()
    };
    gen_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn norm_error(m: &Tensor<f32>) -> f64 {
    let (r, c) = (m.rows(), m.cols());
    let d = m.data();
    let mut worst = 0.0f64;
    for i in 0..c {
        for j in 0..c {
            let dot: f64 = (0..r)
                .map(|k| d[k * c + i] as f64 * d[k * c + j] as f64)
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

#[test]
fn c01_gradient_fidelity() {
    let start = Instant::now();
    let dims = Dims::new(7, 3, 2).unwrap();
    let mut worst = 0.0f64;
    let mut tensors = 0;
    for seed in 0..3 {
        let params: ModelParams<f64> = init_params(dims, &mut ChaCha8Rng::seed_from_u64(seed));
        let ex = EncodedExample {
            id: format!("toy{seed}"),
            doc: vec![3, 4, 5, 3, 6],
            query: vec![5, PLACEHOLDER_ID, 4],
            candidates: vec![3, 4, 6],
            answer: Some(3),
        };
        let report = gradient_check(&params, &Batch::collate(&[&ex]), 1e-5).unwrap();
        tensors = report.checks.len();
        worst = worst.max(report.max_rel_error());
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "gradient fidelity",
        worst < 1e-4 && tensors == params_count(dims) && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.2e} over {tensors} tensors in {elapsed:.2?}"),
    );
}

fn params_count(dims: Dims) -> usize {
    ModelParams::<f64>::zeros(dims).named_tensors().len()
}

#[test]
fn c02_answer_distribution_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let vocab = rng.random_range(3..15u32);
        let doc: Vec<u32> = (0..n).map(|_| rng.random_range(0..vocab)).collect();
        let raw: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-4.0f64..4.0).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        let attention: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let mut pool: Vec<u32> = (0..vocab + 3).collect();
        pool.shuffle(&mut rng);
        let candidates = &pool[..rng.random_range(1..pool.len())];
        let fast = answer_distribution(&attention, &doc, candidates).unwrap();
        for (k, &c) in candidates.iter().enumerate() {
            let mut slow = 0.0;
            for i in 0..n {
                if doc[i] == c {
                    slow += attention[i];
                }
            }
            worst = worst.max((slow - fast[k]).abs());
        }
    }
    verdict(
        2,
        "aggregation oracle",
        worst < 1e-12,
        format!("max abs diff {worst:.2e} on 1000 instances"),
    );
}

#[test]
fn c03_normalization_with_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sum = 0.0f64;
    let mut worst_pad = 0.0f64;
    let mut max_mass = 0.0f64;
    for trial in 0..20 {
        let dims = Dims::new(30, 6, 5).unwrap();
        let params: ModelParams<f32> =
            init_params(dims, &mut ChaCha8Rng::seed_from_u64(100 + trial));
        let examples: Vec<EncodedExample> = (0..rng.random_range(2..9))
            .map(|i| {
                let doc: Vec<u32> = (0..rng.random_range(1..40))
                    .map(|_| rng.random_range(3..30))
                    .collect();
                let mut candidates: Vec<u32> = doc.clone();
                candidates.sort_unstable();
                candidates.dedup();
                candidates.truncate(rng.random_range(1..=candidates.len()));
                candidates.push(29);
                candidates.dedup();
                let query: Vec<u32> = (0..rng.random_range(1..8))
                    .map(|_| rng.random_range(3..30))
                    .chain([PLACEHOLDER_ID])
                    .collect();
                EncodedExample {
                    id: format!("n{i}"),
                    doc,
                    query,
                    candidates,
                    answer: None,
                }
            })
            .collect();
        let refs: Vec<&EncodedExample> = examples.iter().collect();
        let batch = Batch::collate(&refs);
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, &params, false);
        let fwd = forward_batch(&mut tape, &vars, &batch).unwrap();
        let att = tape.value(fwd.attention).clone();
        for row in 0..batch.size() {
            let len = batch.doc_length(row);
            let r = att.row(row);
            let s: f64 = r[..len].iter().map(|&x| x as f64).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
            worst_pad = worst_pad.max(r[len..].iter().map(|x| x.abs() as f64).fold(0.0, f64::max));
        }
        for probs in candidate_probabilities(&mut tape, fwd.attention, &batch).unwrap() {
            max_mass = max_mass.max(probs.iter().sum());
        }
    }
    verdict(
        3,
        "normalization",
        worst_sum <= 1e-6 && worst_pad == 0.0 && max_mass <= 1.0 + 1e-6,
        format!("|sum-1| {worst_sum:.2e}, padding mass {worst_pad:.1e}, max candidate mass {max_mass:.7}"),
    );
}

#[test]
fn c04_learnability_and_reproducible_log() {
    let tr = synthetic(2000, "t", 40);
    let va = synthetic(500, "v", 41);
    let cfg = TrainConfig {
        embed_dim: 32,
        hidden_dim: 32,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let first = train::<f32>(&cfg, &tr, &va).unwrap();
    let elapsed = start.elapsed();
    let second = train::<f32>(&cfg, &tr, &va).unwrap();
    let best = first.best_accuracy.unwrap_or(0.0);
    let epochs = first.log.records.len();
    let identical = first.log.to_csv(false) == second.log.to_csv(false);
    verdict(
        4,
        "learnability",
        best >= 0.95 && epochs <= 10 && elapsed < Duration::from_secs(300) && identical,
        format!(
            "best valid accuracy {best:.4} at epoch {} of {epochs}, {elapsed:.1?}, identical logs {identical}",
            first.best_epoch
        ),
    );
}

/// Random entity documents; the answer is any candidate that occurs.
fn random_counts(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..8).map(|i| format!("@entity{i}")).collect();
    (0..n)
        .map(|i| {
            let len = rng.random_range(2..40);
            let mut doc: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        names[rng.random_range(0..names.len())].clone()
                    } else {
                        format!("w{}", rng.random_range(0..10))
                    }
                })
                .collect();
            doc[0] = names[rng.random_range(0..names.len())].clone();
            let candidates: Vec<String> =
                names.iter().filter(|c| doc.contains(c)).cloned().collect();
            let answer = candidates[rng.random_range(0..candidates.len())].clone();
            Example {
                id: format!("f{i}"),
                document: doc,
                query: vec!["who".into(), PLACEHOLDER.into()],
                candidates,
                answer: Some(answer),
            }
        })
        .collect()
}

#[test]
fn c05_uniform_attention_picks_the_most_frequent_candidate() {
    let data = random_counts(500, 5);
    let vocab = Vocabulary::build(&data, None).unwrap();
    let dims = Dims::new(vocab.len(), 8, 6).unwrap();
    let mut params: ModelParams<f32> = init_params(dims, &mut ChaCha8Rng::seed_from_u64(5));
    params.query_encoder.forward = GruWeights::zeros(8, 6);
    params.query_encoder.backward = GruWeights::zeros(8, 6);
    let eval = evaluate(&params, &vocab, &data, "uniform", 32).unwrap();
    let predicted: HashMap<&str, &str> = eval
        .predictions
        .entries
        .iter()
        .map(|p| (p.id.as_str(), p.best().unwrap()))
        .collect();

    // counting script: highest occurrence count, ties to the lower token id
    let mut agree = 0;
    for ex in &data {
        let mut best: Option<(usize, u32, &str)> = None;
        for c in &ex.candidates {
            let count = ex.document.iter().filter(|t| *t == c).count();
            let id = vocab.id(c);
            if best.is_none_or(|(bc, bid, _)| count > bc || (count == bc && id < bid)) {
                best = Some((count, id, c));
            }
        }
        if predicted.get(ex.id.as_str()) == Some(&best.unwrap().2) {
            agree += 1;
        }
    }
    verdict(
        5,
        "frequency bias",
        agree == data.len() && eval.skipped.is_empty(),
        format!("{agree}/{} predictions equal the count argmax", data.len()),
    );
}

fn two_way(id: &str, p_a: &[f64]) -> PredictionSet {
    PredictionSet {
        model_id: id.into(),
        accuracy: None,
        entries: p_a
            .iter()
            .enumerate()
            .map(|(i, &p)| Prediction {
                id: format!("e{i}"),
                candidates: vec![("a".into(), p), ("b".into(), 1.0 - p)],
            })
            .collect(),
    }
}

fn subset_accuracy(sets: &[PredictionSet], members: &[usize]) -> f64 {
    let n = sets[0].entries.len();
    let correct = (0..n)
        .filter(|&i| {
            let a: f64 = members
                .iter()
                .map(|&m| sets[m].entries[i].candidates[0].1)
                .sum();
            let b: f64 = members
                .iter()
                .map(|&m| sets[m].entries[i].candidates[1].1)
                .sum();
            a >= b
        })
        .count();
    correct as f64 / n as f64
}

#[test]
fn c06_greedy_ensemble_hand_trace() {
    let sets = vec![
        two_way("m1", &[0.9, 0.9, 0.9, 0.9, 0.15, 0.15]),
        two_way("m2", &[0.6, 0.6, 0.6, 0.35, 0.35, 0.35]),
        two_way("m3", &[0.3, 0.3, 0.9, 0.9, 0.9, 0.95]),
        two_way("m4", &[0.8, 0.8, 0.8, 0.8, 0.8, 0.1]),
        two_way("m5", &[0.1, 0.1, 0.1, 0.1, 0.1, 0.95]),
    ];
    let answers: HashMap<String, String> =
        (0..6).map(|i| (format!("e{i}"), "a".to_string())).collect();
    let g = greedy_ensemble(&sets, &answers).unwrap();

    // by hand: m4 5/6 starts; m1 4/6 no; m3 6/6 yes; m2 5/6 no; m5 4/6 no
    let trace: Vec<(usize, bool)> = g.steps.iter().map(|s| (s.model, s.accepted)).collect();
    let hand = vec![(3, true), (0, false), (2, true), (1, false), (4, false)];
    let mut oracle_ok = true;
    let mut members = Vec::new();
    let mut current = f64::NEG_INFINITY;
    for step in &g.steps {
        let mut trial = members.clone();
        trial.push(step.model);
        let acc = subset_accuracy(&sets, &trial);
        oracle_ok &= acc == step.accuracy_with && step.accepted == (acc > current);
        if step.accepted {
            members = trial;
            current = acc;
        }
    }
    let best_single = (0..5)
        .map(|i| subset_accuracy(&sets, &[i]))
        .fold(0.0, f64::max);
    verdict(
        6,
        "greedy ensemble",
        trace == hand && g.members == vec![3, 2] && oracle_ok && g.accuracy >= best_single,
        format!(
            "members {:?}, accuracy {} vs best single {best_single:.4}, oracle agrees {oracle_ok}",
            g.members, g.accuracy
        ),
    );
}

#[test]
fn c07_initialization() {
    let dims = Dims::new(500, 128, 128).unwrap();
    let params: ModelParams<f32> = init_params(dims, &mut ChaCha8Rng::seed_from_u64(7));
    let mut worst = 0.0f64;
    let mut bias_ok = true;
    for gru in [
        &params.doc_encoder.forward,
        &params.doc_encoder.backward,
        &params.query_encoder.forward,
        &params.query_encoder.backward,
    ] {
        for u in gru.recurrent() {
            worst = worst.max(norm_error(u));
        }
        bias_ok &= gru
            .biases()
            .iter()
            .all(|b| b.data().iter().all(|&x| x == 0.0));
    }
    let emb_ok = params
        .embedding
        .data()
        .iter()
        .all(|x| (-0.1..=0.1).contains(x));
    verdict(
        7,
        "initialization",
        worst < 1e-5 && emb_ok && bias_ok,
        format!("max |UtU - I| {worst:.2e}, embeddings in range {emb_ok}, zero biases {bias_ok}"),
    );
}

#[test]
fn c08_clipping() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut grads: Vec<Tensor<f64>> = (0..rng.random_range(1..6))
            .map(|_| {
                let n = rng.random_range(1..50);
                Tensor::vector(
                    (0..n)
                        .map(|_| rng.random_range(-1.0..1.0) * scale)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let pre = grads
            .iter()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        clip_gradients(&mut grads, 10.0).unwrap();
        let post = grads
            .iter()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        worst = worst.max((post - pre.min(10.0)).abs());
    }
    verdict(
        8,
        "clipping",
        worst < 1e-9,
        format!("max deviation {worst:.2e} over 100 sets"),
    );
}

#[test]
fn c09_pipeline_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ramp: Vec<EncodedExample> = (1..=320)
        .map(|n| EncodedExample {
            id: format!("l{n}"),
            doc: vec![3; n],
            query: vec![PLACEHOLDER_ID],
            candidates: vec![3],
            answer: Some(3),
        })
        .collect();
    ramp.shuffle(&mut rng);
    let batches = make_batches(&ramp, 32, 10);
    let bucketed = batches.len() == 10
        && batches.iter().enumerate().all(|(k, b)| {
            let mut lens: Vec<usize> = (0..b.size()).map(|r| b.doc_length(r)).collect();
            lens.sort_unstable();
            lens == (32 * k + 1..=32 * k + 32).collect::<Vec<_>>()
        });

    let data = synthetic(96, "p", 9);
    let vocab = Vocabulary::build(&data, None).unwrap();
    let enc: Vec<EncodedExample> = data.iter().map(|e| vocab.encode(e).unwrap()).collect();
    let pool = make_batches(&enc, 12, 4);
    let mut preserved = 0;
    for trial in 0..1000 {
        let b = &pool[trial % pool.len()];
        let s = reshuffle_entities(b, vocab.entity_range(), &mut rng);
        let ok = (0..b.size()).all(|row| {
            let (x, y) = (b.doc_row(row), s.doc_row(row));
            let (a, a2) = (b.answers[row].unwrap(), s.answers[row].unwrap());
            x.iter().zip(y).all(|(&u, &v)| (u == a) == (v == a2))
        });
        if ok {
            preserved += 1;
        }
    }
    verdict(
        9,
        "pipeline fidelity",
        bucketed && preserved == 1000,
        format!(
            "bucketed ramp {bucketed}, answer positions preserved in {preserved}/1000 reshuffles"
        ),
    );
}

#[test]
fn c10_analysis_totals() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut data = Vec::new();
    let mut set = PredictionSet::new("a");
    for len in 1..=100usize {
        let mut doc = vec!["w".to_string(); len];
        doc[0] = "x".into();
        let mut candidates = vec!["x".to_string()];
        for extra in 0..rng.random_range(0..3) {
            let c = format!("y{extra}");
            doc.push(c.clone());
            candidates.push(c);
        }
        let raw: Vec<f64> = candidates
            .iter()
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let z: f64 = raw.iter().sum::<f64>() + 0.1;
        set.entries.push(Prediction {
            id: format!("x{len}"),
            candidates: candidates
                .iter()
                .cloned()
                .zip(raw.iter().map(|r| r / z))
                .collect(),
        });
        data.push(Example {
            id: format!("x{len}"),
            document: doc,
            query: vec!["q".into(), PLACEHOLDER.into()],
            candidates,
            answer: Some("x".into()),
        });
    }
    let o = outcomes(&set, &data).unwrap();
    let overall = overall_accuracy(&o).unwrap();
    let len = accuracy_by_length(&o, 10);
    let sums = [
        recombine(len.buckets.iter().map(|b| (b.count, b.accuracy))).unwrap(),
        recombine(
            accuracy_by_candidate_count(&o)
                .iter()
                .map(|g| (g.count, g.accuracy)),
        )
        .unwrap(),
        recombine(
            accuracy_by_answer_rank(&o, 10)
                .iter()
                .map(|g| (g.count, g.accuracy)),
        )
        .unwrap(),
    ];
    let worst = sums.iter().map(|s| (s - overall).abs()).fold(0.0, f64::max);
    let equal = len.buckets.len() == 10 && len.buckets.iter().all(|b| b.count == 10);
    // lengths are 1..=100 plus up to two extra tokens, so each bucket holds ten consecutive examples
    let ordered = len
        .buckets
        .windows(2)
        .all(|w| w[0].max_length <= w[1].min_length);
    verdict(
        10,
        "analysis totals",
        worst < 1e-12 && equal && ordered,
        format!("max recombination error {worst:.2e}, ten equal buckets {equal}"),
    );
}

#[test]
fn c11_checkpoint_roundtrip() {
    let tr = synthetic(200, "t", 11);
    let va = synthetic(60, "v", 12);
    let cfg = TrainConfig {
        embed_dim: 12,
        hidden_dim: 10,
        max_epochs: 2,
        seed: 11,
        ..TrainConfig::default()
    };
    let out = train::<f32>(&cfg, &tr, &va).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(
        std::fs::File::create(&ckpt).unwrap(),
        &out.params,
        &out.vocab,
    )
    .unwrap();
    let (params, vocab) = load_checkpoint::<f32, _>(std::fs::File::open(&ckpt).unwrap()).unwrap();

    let write = |p: &ModelParams<f32>, v: &Vocabulary, name: &str| {
        let path = dir.path().join(name);
        let eval = evaluate(p, v, &va, "m", 32).unwrap();
        eval.predictions
            .write(std::fs::File::create(&path).unwrap())
            .unwrap();
        std::fs::read(path).unwrap()
    };
    let before = write(&out.params, &out.vocab, "before.tsv");
    let after = write(&params, &vocab, "after.tsv");
    verdict(
        11,
        "checkpoint round-trip",
        before == after && params == out.params,
        format!(
            "prediction files identical {} ({} bytes)",
            before == after,
            before.len()
        ),
    );
}
