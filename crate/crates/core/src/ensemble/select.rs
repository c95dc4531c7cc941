use std::collections::{HashMap, HashSet};

use super::predictions::{Prediction, PredictionSet};
use super::EnsembleError;

/// Member-wise mean of candidate probabilities. Candidates missing from a
/// member count as probability 0 for that member; the candidate list is the
/// union in order of first appearance. Entries follow the first member's order.
pub fn average(members: &[&PredictionSet]) -> Result<PredictionSet, EnsembleError> {
    let first = members.first().ok_or(EnsembleError::Empty)?;
    let ids: Vec<&str> = first.entries.iter().map(|p| p.id.as_str()).collect();
    let unique: HashSet<&str> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        return Err(EnsembleError::Mismatch(format!(
            "{} has duplicate example ids",
            first.model_id
        )));
    }
    let indexes: Vec<HashMap<&str, &Prediction>> = members.iter().map(|m| m.index()).collect();
    for (m, idx) in members.iter().zip(&indexes) {
        if m.entries.len() != ids.len()
            || idx.len() != ids.len()
            || !ids.iter().all(|id| idx.contains_key(id))
        {
            return Err(EnsembleError::Mismatch(format!(
                "{} and {} cover different examples",
                first.model_id, m.model_id
            )));
        }
    }
    let n = members.len() as f64;
    let mut entries = Vec::with_capacity(ids.len());
    for id in &ids {
        let preds: Vec<&Prediction> = indexes.iter().map(|idx| idx[id]).collect();
        let mut order: Vec<&str> = Vec::new();
        for p in &preds {
            for (c, _) in &p.candidates {
                if !order.contains(&c.as_str()) {
                    order.push(c);
                }
            }
        }
        let candidates = order
            .into_iter()
            .map(|c| {
                let total: f64 = preds.iter().map(|p| p.probability(c).unwrap_or(0.0)).sum();
                (c.to_string(), total / n)
            })
            .collect();
        entries.push(Prediction {
            id: id.to_string(),
            candidates,
        });
    }
    Ok(PredictionSet {
        model_id: members
            .iter()
            .map(|m| m.model_id.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        accuracy: if members.len() == 1 {
            first.accuracy
        } else {
            None
        },
        entries,
    })
}

/// Model id with its validation accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelScore {
    pub id: String,
    pub accuracy: f64,
}

/// Indices sorted by descending accuracy, ties by ascending id.
pub fn rank_models(models: &[ModelScore]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..models.len()).collect();
    idx.sort_by(|&a, &b| {
        models[b]
            .accuracy
            .total_cmp(&models[a].accuracy)
            .then_with(|| models[a].id.cmp(&models[b].id))
    });
    idx
}

/// `ceil(0.7 N)`
pub fn avg_ensemble_size(n: usize) -> usize {
    (7 * n).div_ceil(10)
}

/// `ceil(0.2 N)`
pub fn top_fraction_size(n: usize) -> usize {
    n.div_ceil(5)
}

/// Members of the averaging ensemble: the best `ceil(0.7 N)` models by validation accuracy.
pub fn avg_ensemble(models: &[ModelScore]) -> Vec<usize> {
    let mut ranked = rank_models(models);
    ranked.truncate(avg_ensemble_size(models.len()));
    ranked
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyStep {
    pub model: usize,
    pub accuracy_with: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyResult {
    /// Accepted members in acceptance order.
    pub members: Vec<usize>,
    pub accuracy: f64,
    pub steps: Vec<GreedyStep>,
}

/// Greedy forward selection on validation predictions: start from the best
/// single model and add each remaining model (in descending accuracy order)
/// only when it strictly improves the averaged ensemble's accuracy.
pub fn greedy_ensemble(
    valid: &[PredictionSet],
    answers: &HashMap<String, String>,
) -> Result<GreedyResult, EnsembleError> {
    if valid.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let accuracy = |members: &[usize]| -> Result<f64, EnsembleError> {
        let refs: Vec<&PredictionSet> = members.iter().map(|&i| &valid[i]).collect();
        average(&refs)?
            .accuracy_against(answers)
            .ok_or_else(|| EnsembleError::Unlabeled(refs[0].model_id.clone()))
    };
    let scores = (0..valid.len())
        .map(|i| {
            Ok(ModelScore {
                id: valid[i].model_id.clone(),
                accuracy: accuracy(&[i])?,
            })
        })
        .collect::<Result<Vec<_>, EnsembleError>>()?;
    let order = rank_models(&scores);
    let mut members = vec![order[0]];
    let mut best = scores[order[0]].accuracy;
    let mut steps = vec![GreedyStep {
        model: order[0],
        accuracy_with: best,
        accepted: true,
    }];
    for &m in &order[1..] {
        let mut trial = members.clone();
        trial.push(m);
        let acc = accuracy(&trial)?;
        let accepted = acc > best;
        if accepted {
            members = trial;
            best = acc;
        }
        steps.push(GreedyStep {
            model: m,
            accuracy_with: acc,
            accepted,
        });
    }
    Ok(GreedyResult {
        members,
        accuracy: best,
        steps,
    })
}

/// Model id with validation and test accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelResult {
    pub id: String,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
}

/// Mean test accuracy of the top `ceil(0.2 N)` models by validation accuracy.
pub fn top20_statistic(models: &[ModelResult]) -> Result<f64, EnsembleError> {
    if models.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let scores: Vec<ModelScore> = models
        .iter()
        .map(|m| ModelScore {
            id: m.id.clone(),
            accuracy: m.valid_accuracy,
        })
        .collect();
    let k = top_fraction_size(models.len());
    let top = &rank_models(&scores)[..k];
    Ok(top.iter().map(|&i| models[i].test_accuracy).sum::<f64>() / k as f64)
}
