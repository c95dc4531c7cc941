use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::EnsembleError;

pub const HEADER: &str = "#asreader-predictions 1";

/// Candidate distribution for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    /// `(candidate, probability)` in a fixed candidate order.
    pub candidates: Vec<(String, f64)>,
}

impl Prediction {
    /// Candidate indices by descending probability; ties keep list order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.candidates.len()).collect();
        idx.sort_by(|&a, &b| {
            self.candidates[b]
                .1
                .total_cmp(&self.candidates[a].1)
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn best(&self) -> Option<&str> {
        self.ranking()
            .first()
            .map(|&i| self.candidates[i].0.as_str())
    }

    /// 1-based rank of `answer`, if it is a candidate.
    pub fn rank_of(&self, answer: &str) -> Option<usize> {
        self.ranking()
            .iter()
            .position(|&i| self.candidates[i].0 == answer)
            .map(|r| r + 1)
    }

    pub fn probability(&self, candidate: &str) -> Option<f64> {
        self.candidates
            .iter()
            .find(|(c, _)| c == candidate)
            .map(|(_, p)| *p)
    }
}

/// One model's predictions over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub model_id: String,
    /// Accuracy on the predicted dataset when it was labeled.
    pub accuracy: Option<f64>,
    pub entries: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>) -> Self {
        PredictionSet {
            model_id: model_id.into(),
            accuracy: None,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, &Prediction> {
        self.entries.iter().map(|p| (p.id.as_str(), p)).collect()
    }

    /// Fraction of labeled examples whose top candidate is the answer.
    /// `None` when no entry has an answer in `answers`.
    pub fn accuracy_against(&self, answers: &HashMap<String, String>) -> Option<f64> {
        self.topk_accuracy(answers, 1)
    }

    /// Fraction of labeled examples whose answer ranks within the top `k`.
    pub fn topk_accuracy(&self, answers: &HashMap<String, String>, k: usize) -> Option<f64> {
        let mut total = 0usize;
        let mut hits = 0usize;
        for p in &self.entries {
            if let Some(a) = answers.get(&p.id) {
                total += 1;
                if p.rank_of(a).is_some_and(|r| r <= k) {
                    hits += 1;
                }
            }
        }
        (total > 0).then(|| hits as f64 / total as f64)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), EnsembleError> {
        writeln!(w, "{HEADER}")?;
        writeln!(w, "model_id\t{}", self.model_id)?;
        match self.accuracy {
            Some(a) => writeln!(w, "accuracy\t{a}")?,
            None => writeln!(w, "accuracy\t-")?,
        }
        for p in &self.entries {
            write!(w, "{}", p.id)?;
            for (c, prob) in &p.candidates {
                write!(w, "\t{c}:{prob}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_string_lossless(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, EnsembleError> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), EnsembleError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(EnsembleError::Format {
                    line: 0,
                    message: format!("missing {what}"),
                }),
            }
        };
        let (n, header) = next("header")?;
        if header.trim_end() != HEADER {
            return Err(EnsembleError::Format {
                line: n,
                message: "not a predictions file".into(),
            });
        }
        let (n, id_line) = next("model_id line")?;
        let model_id = id_line
            .strip_prefix("model_id\t")
            .ok_or_else(|| EnsembleError::Format {
                line: n,
                message: "expected model_id".into(),
            })?
            .to_string();
        let (n, acc_line) = next("accuracy line")?;
        let acc = acc_line
            .strip_prefix("accuracy\t")
            .ok_or_else(|| EnsembleError::Format {
                line: n,
                message: "expected accuracy".into(),
            })?;
        let accuracy = match acc {
            "-" => None,
            s => Some(s.parse::<f64>().map_err(|e| EnsembleError::Format {
                line: n,
                message: format!("accuracy: {e}"),
            })?),
        };
        let mut set = PredictionSet {
            model_id,
            accuracy,
            entries: Vec::new(),
        };
        for (i, line) in lines {
            let line = line?;
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let mut candidates = Vec::new();
            for f in fields {
                let (c, p) = f.rsplit_once(':').ok_or_else(|| EnsembleError::Format {
                    line: n,
                    message: format!("bad candidate field {f:?}"),
                })?;
                let p: f64 = p.parse().map_err(|e| EnsembleError::Format {
                    line: n,
                    message: format!("probability {p:?}: {e}"),
                })?;
                candidates.push((c.to_string(), p));
            }
            if candidates.is_empty() {
                return Err(EnsembleError::Format {
                    line: n,
                    message: format!("example {id} has no candidates"),
                });
            }
            set.entries.push(Prediction { id, candidates });
        }
        Ok(set)
    }
}
