use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::DataError;

/// Surface form of the cloze placeholder in queries.
pub const PLACEHOLDER: &str = "@placeholder";

/// One cloze record: answer the placeholder in `query` with a word from `document`,
/// chosen among `candidates`. `answer` is absent for unlabeled data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub document: Vec<String>,
    pub query: Vec<String>,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl Example {
    pub fn validate(&self) -> Result<(), DataError> {
        let invalid = |reason: String| DataError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.document.is_empty() {
            return Err(invalid("empty document".into()));
        }
        let placeholders = self.query.iter().filter(|t| *t == PLACEHOLDER).count();
        if placeholders != 1 {
            return Err(invalid(format!(
                "query has {placeholders} placeholders, expected 1"
            )));
        }
        if self.candidates.is_empty() {
            return Err(invalid("empty candidate set".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.candidates.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(invalid(format!("duplicate candidate {dup:?}")));
        }
        if let Some(answer) = &self.answer {
            if !self.candidates.contains(answer) {
                return Err(invalid(format!("answer {answer:?} is not a candidate")));
            }
            if !self.document.contains(answer) {
                return Err(invalid(format!(
                    "answer {answer:?} does not occur in the document"
                )));
            }
        }
        Ok(())
    }

    /// Number of times `token` occurs in the document.
    pub fn occurrences(&self, token: &str) -> usize {
        self.document.iter().filter(|t| *t == token).count()
    }
}

/// Reads the canonical line-delimited JSON format, validating every record.
pub fn read_canonical<R: BufRead>(reader: R) -> Result<Vec<Example>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|source| DataError::Json {
            line: i + 1,
            source,
        })?;
        ex.validate()?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_canonical<W: Write>(mut writer: W, examples: &[Example]) -> Result<(), DataError> {
    for ex in examples {
        serde_json::to_writer(&mut writer, ex)
            .map_err(|source| DataError::Json { line: 0, source })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
