use asreader::analysis::{
    accuracy_by_answer_rank, accuracy_by_candidate_count, accuracy_by_length, outcomes,
    overall_accuracy, recombine, write_csv, AnalysisError, Outcome,
};
use asreader::data::{gen_synthetic, parse_cbt, Example, SyntheticSpec, Vocabulary, PLACEHOLDER};
use asreader::ensemble::{Prediction, PredictionSet};
use asreader::model::{Dims, GruWeights, ModelParams};
use asreader::training::{evaluate, init_params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example(id: &str, doc: &[&str], cands: &[&str], answer: &str) -> Example {
    Example {
        id: id.into(),
        document: doc.iter().map(|s| s.to_string()).collect(),
        query: vec!["q".into(), PLACEHOLDER.into()],
        candidates: cands.iter().map(|s| s.to_string()).collect(),
        answer: Some(answer.into()),
    }
}

/// Prediction putting most mass on `pick`.
fn predict(ex: &Example, pick: &str) -> Prediction {
    let k = ex.candidates.len() as f64;
    Prediction {
        id: ex.id.clone(),
        candidates: ex
            .candidates
            .iter()
            .map(|c| (c.clone(), if c == pick { 0.5 } else { 0.5 / k }))
            .collect(),
    }
}

fn wrong_pick(ex: &Example) -> String {
    ex.candidates
        .iter()
        .find(|c| Some(*c) != ex.answer.as_ref())
        .unwrap()
        .clone()
}

/// 100 examples with lengths 1..=100; bucket `b` (lengths 10b+1..=10b+10) has `10 - b` correct.
fn length_fixture() -> (Vec<Example>, PredictionSet) {
    let mut data = Vec::new();
    let mut set = PredictionSet::new("len");
    for len in 1..=100usize {
        let mut doc = vec!["w"; len];
        doc[0] = "a";
        if len > 1 {
            doc[1] = "b";
        }
        let ex = example(&format!("x{len}"), &doc, &["a", "b"], "a");
        let bucket = (len - 1) / 10;
        let pos = (len - 1) % 10;
        let pick = if pos < 10 - bucket {
            "a".to_string()
        } else {
            wrong_pick(&ex)
        };
        set.entries.push(predict(&ex, &pick));
        data.push(ex);
    }
    (data, set)
}

fn assert_recombines(o: &[Outcome]) {
    let overall = overall_accuracy(o).unwrap();
    let len = accuracy_by_length(o, 10);
    let by_len = recombine(len.buckets.iter().map(|b| (b.count, b.accuracy))).unwrap();
    let by_cand = recombine(
        accuracy_by_candidate_count(o)
            .iter()
            .map(|g| (g.count, g.accuracy)),
    )
    .unwrap();
    let by_rank = recombine(
        accuracy_by_answer_rank(o, 10)
            .iter()
            .map(|g| (g.count, g.accuracy)),
    )
    .unwrap();
    for v in [by_len, by_cand, by_rank] {
        assert!((v - overall).abs() < 1e-12, "{v} vs {overall}");
    }
    assert_eq!(len.buckets.iter().map(|b| b.count).sum::<usize>(), o.len());
    assert_eq!(
        len.histogram.iter().map(|b| b.count).sum::<usize>(),
        o.len()
    );
    assert_eq!(
        accuracy_by_candidate_count(o)
            .iter()
            .map(|g| g.count)
            .sum::<usize>(),
        o.len()
    );
    assert_eq!(
        accuracy_by_answer_rank(o, 10)
            .iter()
            .map(|g| g.count)
            .sum::<usize>(),
        o.len()
    );
}

#[test]
fn hundred_examples_make_ten_buckets_of_ten() {
    let (data, set) = length_fixture();
    let o = outcomes(&set, &data).unwrap();
    let t = accuracy_by_length(&o, 10);
    assert!(t.warning.is_none());
    assert_eq!(t.buckets.len(), 10);
    for (b, row) in t.buckets.iter().enumerate() {
        assert_eq!(row.count, 10);
        assert_eq!(row.min_length, 10 * b + 1);
        assert_eq!(row.max_length, 10 * b + 10);
        assert_eq!(row.mean_length, 10.0 * b as f64 + 5.5);
    }
}

#[test]
fn longer_documents_score_strictly_worse_when_constructed_so() {
    let (data, set) = length_fixture();
    let o = outcomes(&set, &data).unwrap();
    let acc: Vec<f64> = accuracy_by_length(&o, 10)
        .buckets
        .iter()
        .map(|b| b.accuracy.unwrap())
        .collect();
    for w in acc.windows(2) {
        assert!(w[0] > w[1]);
    }
    assert_recombines(&o);
}

#[test]
fn all_correct_predictions_give_unit_accuracy_everywhere() {
    let (data, _) = length_fixture();
    let mut set = PredictionSet::new("perfect");
    set.entries = data.iter().map(|e| predict(e, "a")).collect();
    let o = outcomes(&set, &data).unwrap();
    assert!(accuracy_by_length(&o, 10)
        .buckets
        .iter()
        .all(|b| b.accuracy == Some(1.0)));
    assert!(accuracy_by_candidate_count(&o)
        .iter()
        .all(|g| g.accuracy == Some(1.0)));
}

#[test]
fn cbt_style_data_has_a_single_candidate_group() {
    let mut text = String::new();
    for i in 1..=20 {
        text.push_str(&format!(
            "{i} sentence number {i} mentions alice and bob .\n"
        ));
    }
    text.push_str(
        "21 then XXXXX left .\talice\t\talice|bob|carol|dave|eve|frank|gina|hugo|ivan|jane\n\n",
    );
    let data = parse_cbt(text.as_bytes(), "cbt").unwrap();
    let mut set = PredictionSet::new("c");
    set.entries = data.iter().map(|e| predict(e, "alice")).collect();
    let o = outcomes(&set, &data).unwrap();
    let groups = accuracy_by_candidate_count(&o);
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].candidates, 10);
}

#[test]
fn candidate_count_groups_by_hand() {
    let data = vec![
        example("c1", &["a", "b"], &["a", "b"], "a"),
        example("c2", &["a", "b"], &["a", "b"], "b"),
        example("c3", &["a", "b"], &["a", "b"], "a"),
        example("c4", &["a", "b", "c"], &["a", "b", "c"], "c"),
        example("c5", &["a", "b", "c"], &["a", "b", "c"], "a"),
        example("c6", &["a", "b", "c"], &["a", "b", "c"], "b"),
    ];
    let picks = ["a", "a", "a", "c", "b", "c"];
    let mut set = PredictionSet::new("h");
    set.entries = data.iter().zip(picks).map(|(e, p)| predict(e, p)).collect();
    let o = outcomes(&set, &data).unwrap();
    let g = accuracy_by_candidate_count(&o);
    assert_eq!((g[0].candidates, g[0].count, g[0].correct), (2, 3, 2));
    assert_eq!((g[1].candidates, g[1].count, g[1].correct), (3, 3, 1));
    assert_eq!(g[0].accuracy, Some(2.0 / 3.0));
    assert_eq!(g[1].accuracy, Some(1.0 / 3.0));
    assert_recombines(&o);
}

#[test]
fn answer_ranks_follow_counts_and_id_ties() {
    let data = vec![
        example("r1", &["a", "a", "b"], &["a", "b"], "a"),
        example("r2", &["a", "b"], &["a", "b"], "b"),
    ];
    let mut set = PredictionSet::new("r");
    set.entries = data.iter().map(|e| predict(e, "a")).collect();
    let o = outcomes(&set, &data).unwrap();
    assert_eq!(o[0].answer_rank, 1);
    assert_eq!(o[1].answer_rank, 2);
}

/// Documents of random candidate and filler tokens; the answer is any candidate present.
fn random_counts(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["@entity0", "@entity1", "@entity2", "@entity3", "@entity4"];
    (0..n)
        .map(|i| {
            let len = rng.random_range(3..25);
            let mut doc: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.6) {
                        names[rng.random_range(0..5)]
                    } else {
                        "w"
                    }
                })
                .collect();
            doc[0] = names[rng.random_range(0..5)];
            let cands: Vec<&str> = names.iter().copied().filter(|c| doc.contains(c)).collect();
            let answer = cands[rng.random_range(0..cands.len())];
            example(&format!("u{i}"), &doc, &cands, answer)
        })
        .collect()
}

#[test]
fn uniform_attention_is_always_right_at_strict_rank_one() {
    let data = random_counts(300, 21);
    let vocab = Vocabulary::build(&data, None).unwrap();
    let mut params: ModelParams<f32> = init_params(
        Dims::new(vocab.len(), 4, 3).unwrap(),
        &mut ChaCha8Rng::seed_from_u64(5),
    );
    params.query_encoder.forward = GruWeights::zeros(4, 3);
    params.query_encoder.backward = GruWeights::zeros(4, 3);
    let eval = evaluate(&params, &vocab, &data, "uniform", 32).unwrap();
    let o = outcomes(&eval.predictions, &data).unwrap();

    let mut strict_top = 0;
    for (ex, out) in data.iter().zip(&o) {
        let answer = ex.answer.as_deref().unwrap();
        let count = |c: &str| ex.document.iter().filter(|t| *t == c).count();
        let strict = ex
            .candidates
            .iter()
            .all(|c| c == answer || count(c) < count(answer));
        if strict {
            strict_top += 1;
            assert_eq!(out.answer_rank, 1);
            assert!(out.correct, "{}", ex.id);
        }
    }
    assert!(strict_top > 0);
    assert!((overall_accuracy(&o).unwrap() - eval.accuracy().unwrap()).abs() < 1e-12);
    assert_recombines(&o);
}

#[test]
fn random_predictions_recombine_and_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = SyntheticSpec {
        examples: 137,
        doc_len: 30,
        ..SyntheticSpec::default()
    };
    let data = gen_synthetic(&spec, &mut rng).unwrap();
    let mut set = PredictionSet::new("rnd");
    for ex in &data {
        let raw: Vec<f64> = ex
            .candidates
            .iter()
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let z: f64 = raw.iter().sum();
        set.entries.push(Prediction {
            id: ex.id.clone(),
            candidates: ex
                .candidates
                .iter()
                .cloned()
                .zip(raw.iter().map(|r| r / z))
                .collect(),
        });
    }
    let o = outcomes(&set, &data).unwrap();
    assert_recombines(&o);
    let csv = |o: &[Outcome]| {
        let mut buf = Vec::new();
        write_csv(&mut buf, &accuracy_by_answer_rank(o, 10)).unwrap();
        write_csv(&mut buf, &accuracy_by_length(o, 10).buckets).unwrap();
        buf
    };
    assert_eq!(csv(&o), csv(&outcomes(&set, &data).unwrap()));
}

#[test]
fn misaligned_predictions_are_rejected() {
    let data = vec![example("a1", &["a", "b"], &["a", "b"], "a")];
    let set = PredictionSet::new("empty");
    assert!(matches!(
        outcomes(&set, &data),
        Err(AnalysisError::MissingPrediction(_))
    ));
    let mut extra = PredictionSet::new("extra");
    extra.entries.push(predict(&data[0], "a"));
    extra.entries.push(Prediction {
        id: "ghost".into(),
        candidates: vec![("a".into(), 1.0)],
    });
    assert!(matches!(
        outcomes(&extra, &data),
        Err(AnalysisError::UnknownPrediction(_))
    ));
}
