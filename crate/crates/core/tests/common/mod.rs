#![allow(dead_code)]

use std::collections::HashMap;

use asreader::ensemble::{Prediction, PredictionSet};

/// Two-candidate prediction set; `p_a[i]` is the probability of `a` on example `e{i}`.
pub fn two_way(id: &str, p_a: &[f64]) -> PredictionSet {
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

pub fn answers_all_a(n: usize) -> HashMap<String, String> {
    (0..n).map(|i| (format!("e{i}"), "a".to_string())).collect()
}

/// Five models over six examples whose answer is always `a`.
///
/// Hand trace of greedy selection (order m4, m1, m3, m2, m5):
/// start m4 (5/6); m1 → 4/6 reject; m3 → 6/6 accept; m2 → 5/6 reject; m5 → 4/6 reject.
pub fn five_model_fixture() -> Vec<PredictionSet> {
    vec![
        two_way("m1", &[0.9, 0.9, 0.9, 0.9, 0.15, 0.15]),
        two_way("m2", &[0.6, 0.6, 0.6, 0.35, 0.35, 0.35]),
        two_way("m3", &[0.3, 0.3, 0.9, 0.9, 0.9, 0.95]),
        two_way("m4", &[0.8, 0.8, 0.8, 0.8, 0.8, 0.1]),
        two_way("m5", &[0.1, 0.1, 0.1, 0.1, 0.1, 0.95]),
    ]
}

/// Independent averaging + argmax accuracy for a member subset.
pub fn naive_subset_accuracy(
    sets: &[PredictionSet],
    members: &[usize],
    answers: &HashMap<String, String>,
) -> f64 {
    let n = sets[0].entries.len();
    let mut correct = 0;
    for i in 0..n {
        let id = &sets[0].entries[i].id;
        let mut names: Vec<String> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for &m in members {
            let e = sets[m].entries.iter().find(|e| &e.id == id).unwrap();
            for (c, p) in &e.candidates {
                match names.iter().position(|x| x == c) {
                    Some(k) => mass[k] += p,
                    None => {
                        names.push(c.clone());
                        mass.push(*p);
                    }
                }
            }
        }
        let mut best = 0;
        for k in 1..mass.len() {
            if mass[k] > mass[best] {
                best = k;
            }
        }
        if names[best] == answers[id] {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

/// Every non-empty subset of `0..n` with its accuracy.
pub fn all_subsets(
    sets: &[PredictionSet],
    answers: &HashMap<String, String>,
) -> Vec<(Vec<usize>, f64)> {
    let n = sets.len();
    (1u32..(1 << n))
        .map(|mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let acc = naive_subset_accuracy(sets, &members, answers);
            (members, acc)
        })
        .collect()
}
