//! Importer for anonymized news question records (CNN / Daily Mail style).
//!
//! A record is five blocks separated by single blank lines:
//!
//! ```text
//! <url>
//!
//! <document tokens, whitespace separated; may wrap over several lines>
//!
//! <query tokens containing @placeholder>
//!
//! <answer entity, e.g. @entity4>
//!
//! @entity0:Original Name
//! @entity1:Other Name
//! ```
//!
//! Records are concatenated, each separated from the next by a blank line.
//! This is the layout of the per-question files in the public rc-data
//! release; concatenating those files with a blank line between them yields
//! a valid stream. The candidate set is every distinct entity token in the
//! document, ordered by entity number.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use super::vocab::is_entity_token;
use super::{DataError, Example};

const BLOCKS_PER_RECORD: usize = 5;

pub fn parse_anonymized<R: BufRead>(reader: R) -> Result<Vec<Example>, DataError> {
    let mut blocks: Vec<(usize, Vec<String>)> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut start = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push((start, std::mem::take(&mut current)));
            }
            continue;
        }
        if current.is_empty() {
            start = i + 1;
        }
        current.push(line);
    }
    if !current.is_empty() {
        blocks.push((start, current));
    }
    if !blocks.len().is_multiple_of(BLOCKS_PER_RECORD) {
        let line = blocks.last().map_or(0, |b| b.0);
        return Err(DataError::Format {
            line,
            message: format!(
                "{} blocks do not form whole {BLOCKS_PER_RECORD}-block records",
                blocks.len()
            ),
        });
    }
    blocks.chunks(BLOCKS_PER_RECORD).map(parse_record).collect()
}

fn tokens(lines: &[String]) -> Vec<String> {
    lines
        .iter()
        .flat_map(|l| l.split_whitespace())
        .map(String::from)
        .collect()
}

fn parse_record(blocks: &[(usize, Vec<String>)]) -> Result<Example, DataError> {
    let [(url_line, url), (_, doc), (_, query), (answer_line, answer), (map_line, mapping)] =
        blocks
    else {
        unreachable!("chunks are exactly BLOCKS_PER_RECORD long");
    };
    if url.len() != 1 {
        return Err(DataError::Format {
            line: *url_line,
            message: "url block must be a single line".into(),
        });
    }
    let id = url[0].trim().to_string();
    let invalid = |reason: String| DataError::Invalid {
        id: id.clone(),
        reason,
    };

    let answer = tokens(answer);
    if answer.len() != 1 {
        return Err(DataError::Format {
            line: *answer_line,
            message: "answer block must hold one token".into(),
        });
    }
    let answer = answer.into_iter().next().unwrap_or_default();
    if !is_entity_token(&answer) {
        return Err(invalid(format!("answer {answer:?} is not an entity token")));
    }

    let mut seen = HashSet::new();
    for (k, line) in mapping.iter().enumerate() {
        let (entity, _) = line.split_once(':').ok_or_else(|| DataError::Format {
            line: map_line + k,
            message: format!("entity mapping line {line:?} lacks ':'"),
        })?;
        if !is_entity_token(entity) {
            return Err(DataError::Format {
                line: map_line + k,
                message: format!("{entity:?} is not an entity token"),
            });
        }
        if !seen.insert(entity) {
            return Err(invalid(format!("duplicate entity id {entity}")));
        }
    }

    let document = tokens(doc);
    let mut entities: BTreeMap<u64, String> = BTreeMap::new();
    for t in document.iter().filter(|t| is_entity_token(t)) {
        let n = t["@entity".len()..].parse().unwrap_or(u64::MAX);
        entities.entry(n).or_insert_with(|| t.clone());
    }
    if entities.is_empty() {
        return Err(invalid("document contains no entities".into()));
    }
    let ex = Example {
        id: id.clone(),
        document,
        query: tokens(query),
        candidates: entities.into_values().collect(),
        answer: Some(answer),
    };
    ex.validate()?;
    Ok(ex)
}

/// Serializes examples in the importer layout with placeholder names in the mapping.
pub fn write_anonymized(examples: &[Example]) -> String {
    let mut s = String::new();
    for ex in examples {
        s.push_str(&ex.id);
        s.push_str("\n\n");
        s.push_str(&ex.document.join(" "));
        s.push_str("\n\n");
        s.push_str(&ex.query.join(" "));
        s.push_str("\n\n");
        s.push_str(ex.answer.as_deref().unwrap_or(""));
        s.push_str("\n\n");
        for c in &ex.candidates {
            s.push_str(&format!("{c}:{}\n", c.trim_start_matches('@')));
        }
        s.push('\n');
    }
    s
}
