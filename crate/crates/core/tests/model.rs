use asreader::data::{Batch, EncodedExample};
use asreader::model::{
    answer_distribution, candidate_probabilities, encode_document, encode_query, forward_batch,
    trace_example, Dims, GruWeights, ModelParams, ParamVars,
};
use asreader::ndmath::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(dims: Dims, seed: u64) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(dims);
    for t in p.tensors_mut() {
        for x in t.data_mut() {
            *x = rng.random_range(-0.8..0.8);
        }
    }
    p
}

fn random_ids(rng: &mut ChaCha8Rng, len: usize, vocab: u32) -> Vec<u32> {
    (0..len).map(|_| rng.random_range(3..vocab)).collect()
}

fn example(id: &str, doc: Vec<u32>, query: Vec<u32>) -> EncodedExample {
    let mut candidates: Vec<u32> = doc.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let answer = Some(doc[0]);
    EncodedExample {
        id: id.into(),
        doc,
        query,
        candidates,
        answer,
    }
}

#[test]
fn reversing_the_document_swaps_directions() {
    let dims = Dims::new(12, 3, 2).unwrap();
    let p = random_params(dims, 1);
    let mut swapped = p.clone();
    std::mem::swap(
        &mut swapped.doc_encoder.forward,
        &mut swapped.doc_encoder.backward,
    );

    let doc = vec![4, 7, 3, 11, 5, 5, 9];
    let rev: Vec<u32> = doc.iter().rev().copied().collect();
    let a = encode_document(&p, &doc).unwrap();
    let b = encode_document(&swapped, &rev).unwrap();
    let (n, h) = (doc.len(), dims.hidden);
    for t in 0..n {
        for k in 0..h {
            assert!((a.get2(t, k) - b.get2(n - 1 - t, h + k)).abs() < 1e-12);
            assert!((a.get2(t, h + k) - b.get2(n - 1 - t, k)).abs() < 1e-12);
        }
    }
}

#[test]
fn query_embedding_is_last_forward_and_first_backward_state() {
    let dims = Dims::new(10, 4, 3).unwrap();
    let mut p = random_params(dims, 2);
    p.query_encoder = p.doc_encoder.clone();
    let q = vec![3, 8, 2, 6];
    let emb = encode_query(&p, &q).unwrap();
    let ctx = encode_document(&p, &q).unwrap();
    let h = dims.hidden;
    for k in 0..h {
        assert!((emb.data()[k] - ctx.get2(q.len() - 1, k)).abs() < 1e-12);
        assert!((emb.data()[h + k] - ctx.get2(0, h + k)).abs() < 1e-12);
    }
}

#[test]
fn attention_matches_direct_softmax_of_dot_products() {
    // n = 6 positions, 2H = 4
    let dims = Dims::new(9, 3, 2).unwrap();
    let p = random_params(dims, 3);
    let ex = example("a", vec![3, 4, 5, 3, 6, 7], vec![8, 2]);
    let tr = trace_example(&p, &ex).unwrap();
    let scores: Vec<f64> = (0..6)
        .map(|t| {
            (0..4)
                .map(|k| tr.contextual.get2(t, k) * tr.query.data()[k])
                .sum()
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    for (a, e) in tr.attention.iter().zip(&exps) {
        assert!((a - e / z).abs() < 1e-9);
    }
}

#[test]
fn zero_query_encoder_gives_uniform_attention() {
    let dims = Dims::new(9, 3, 2).unwrap();
    let mut p = random_params(dims, 4);
    p.query_encoder.forward = GruWeights::zeros(3, 2);
    p.query_encoder.backward = GruWeights::zeros(3, 2);
    let ex = example("u", vec![3, 4, 5, 3, 6], vec![8, 2]);
    let tr = trace_example(&p, &ex).unwrap();
    assert!(tr.query.data().iter().all(|&x| x == 0.0));
    for a in &tr.attention {
        assert!((a - 0.2).abs() < 1e-12);
    }
}

#[test]
fn identical_positions_get_identical_attention() {
    let ctx = Tensor::from_rows(&vec![vec![0.3, -0.2, 0.5, 0.1]; 4]).unwrap();
    let mut tape = Tape::<f64>::new();
    let q = tape.constant(Tensor::matrix(1, 4, vec![1.0, 2.0, -1.0, 0.5]).unwrap());
    let rows: Vec<_> = (0..4)
        .map(|t| tape.constant(Tensor::matrix(1, 4, ctx.row(t).to_vec()).unwrap()))
        .collect();
    let att = asreader::model::attention(&mut tape, &rows, q, &[true; 4]).unwrap();
    for a in tape.value(att).data() {
        assert!((a - 0.25).abs() < 1e-12);
    }
}

#[test]
fn distribution_over_all_distinct_tokens_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let doc = random_ids(&mut rng, n, 15);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let att: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let mut distinct = doc.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let p = answer_distribution(&att, &doc, &distinct).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn batched_rows_match_single_example_traces() {
    let dims = Dims::new(20, 4, 3).unwrap();
    let p = random_params(dims, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let exs: Vec<EncodedExample> = (0..5)
        .map(|i| {
            let n = rng.random_range(2..12);
            let m = rng.random_range(1..5);
            example(
                &format!("b{i}"),
                random_ids(&mut rng, n, 20),
                random_ids(&mut rng, m, 20),
            )
        })
        .collect();
    let refs: Vec<&EncodedExample> = exs.iter().collect();
    let batch = Batch::collate(&refs);
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &p, false);
    let fwd = forward_batch(&mut tape, &vars, &batch).unwrap();
    let att = tape.value(fwd.attention).clone();
    let probs = candidate_probabilities(&mut tape, fwd.attention, &batch).unwrap();
    for (row, ex) in exs.iter().enumerate() {
        let tr = trace_example(&p, ex).unwrap();
        let got = &att.row(row)[..ex.doc.len()];
        for (a, b) in got.iter().zip(&tr.attention) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(att.row(row)[ex.doc.len()..].iter().all(|&x| x == 0.0));
        let real: f64 = got.iter().sum();
        assert!((real - 1.0).abs() < 1e-9);
        assert!(probs[row].iter().sum::<f64>() <= 1.0 + 1e-6);
    }
}

#[test]
fn loss_is_positive_unless_attention_is_all_on_the_answer() {
    let dims = Dims::new(12, 3, 2).unwrap();
    let p = random_params(dims, 9);
    let ex = example("l", vec![3, 4, 5, 6, 3], vec![7, 2]);
    let tr = trace_example(&p, &ex).unwrap();
    let loss = tr.loss.unwrap();
    assert!(loss > 0.0);
    assert!((tr.loss_for(&ex.doc, 3).unwrap() - loss).abs() < 1e-12);
}
