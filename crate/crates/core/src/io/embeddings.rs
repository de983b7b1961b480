//! Embeddings as text: one `id v_1 ... v_D` line per utterance.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Lines are sorted by id so output is deterministic.
pub fn format_embeddings(embeddings: &HashMap<String, Vec<f64>>) -> String {
    let sorted: BTreeMap<_, _> = embeddings.iter().collect();
    let mut out = String::new();
    for (id, v) in sorted {
        out.push_str(id);
        for x in v {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings(text: &str) -> Result<HashMap<String, Vec<f64>>> {
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().expect("nonempty line");
        let v = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("bad value `{p}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if v.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("`{id}` has no values"),
            });
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("dimension {} differs from earlier {d}", v.len()),
                })
            }
            _ => {}
        }
        if out.insert(id.to_string(), v).is_some() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("duplicate id `{id}`"),
            });
        }
    }
    Ok(out)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    parse_embeddings(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_embeddings(embeddings: &HashMap<String, Vec<f64>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_embeddings(embeddings)).map_err(|e| Error::io(path, e))
}
