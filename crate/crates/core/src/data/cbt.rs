//! Children's Book Test plain-text importer.
//!
//! Each example is 21 numbered lines followed by a blank line. Lines 1..=20
//! are the context; line 21 is `21 <query>\t<answer>\t\t<c1>|<c2>|...|<c10>`
//! with the missing word written as `XXXXX`.

use std::io::BufRead;

use super::{DataError, Example, PLACEHOLDER};

pub const CBT_BLANK: &str = "XXXXX";
pub const CBT_CONTEXT_LINES: usize = 20;
pub const CBT_CANDIDATES: usize = 10;

/// Parses a CBT stream; example ids are `<source>:<ordinal>` starting at 0.
pub fn parse_cbt<R: BufRead>(reader: R, source: &str) -> Result<Vec<Example>, DataError> {
    let mut out = Vec::new();
    let mut context: Vec<String> = Vec::new();
    let mut expected = 1usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let fmt = |message: String| DataError::Format {
            line: lineno,
            message,
        };
        if line.trim().is_empty() {
            if expected != 1 {
                return Err(fmt(format!("example ended after line {}", expected - 1)));
            }
            continue;
        }
        let (num, rest) = line
            .split_once(' ')
            .ok_or_else(|| fmt("missing line number".into()))?;
        let num: usize = num
            .parse()
            .map_err(|_| fmt(format!("bad line number {num:?}")))?;
        if num != expected {
            return Err(fmt(format!("expected line number {expected}, found {num}")));
        }

        if num <= CBT_CONTEXT_LINES {
            context.extend(rest.split_whitespace().map(String::from));
            expected += 1;
            continue;
        }

        let fields: Vec<&str> = rest.split('\t').filter(|f| !f.trim().is_empty()).collect();
        if fields.len() < 3 {
            return Err(fmt(
                "query line needs query, answer and candidate fields".into()
            ));
        }
        let query: Vec<String> = fields[0]
            .split_whitespace()
            .map(|t| {
                if t == CBT_BLANK {
                    PLACEHOLDER.to_string()
                } else {
                    t.to_string()
                }
            })
            .collect();
        let candidates: Vec<String> = fields[2]
            .split('|')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        let id = format!("{source}:{}", out.len());
        if candidates.len() != CBT_CANDIDATES {
            return Err(DataError::Invalid {
                id,
                reason: format!("{} candidates, expected {CBT_CANDIDATES}", candidates.len()),
            });
        }
        let ex = Example {
            id,
            document: std::mem::take(&mut context),
            query,
            candidates,
            answer: Some(fields[1].trim().to_string()),
        };
        ex.validate()?;
        out.push(ex);
        expected = 1;
    }
    if expected != 1 {
        return Err(DataError::Format {
            line: 0,
            message: "stream ended inside an example".into(),
        });
    }
    Ok(out)
}

/// Writes examples back in CBT layout, one context token line per sentence slot.
/// Documents are split evenly over the 20 context lines.
pub fn write_cbt(examples: &[Example]) -> String {
    let mut s = String::new();
    for ex in examples {
        let per_line = ex.document.len().div_ceil(CBT_CONTEXT_LINES).max(1);
        let mut chunks = ex.document.chunks(per_line);
        for n in 1..=CBT_CONTEXT_LINES {
            let text = chunks.next().map(|c| c.join(" ")).unwrap_or_default();
            s.push_str(&format!("{n} {text}\n"));
        }
        let query: Vec<&str> = ex
            .query
            .iter()
            .map(|t| {
                if t == PLACEHOLDER {
                    CBT_BLANK
                } else {
                    t.as_str()
                }
            })
            .collect();
        s.push_str(&format!(
            "21 {}\t{}\t\t{}\n\n",
            query.join(" "),
            ex.answer.as_deref().unwrap_or(""),
            ex.candidates.join("|")
        ));
    }
    s
}
