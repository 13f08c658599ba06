//! Line-delimited JSON dataset files: one record per line, UTF-8.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateSet, QueryType, Ranking};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Decode {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("encode: {0}")]
    Encode(#[from] serde_json::Error),
}

/// A candidate set with its ground-truth ordering and query type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    #[serde(flatten)]
    pub set: CandidateSet,
    pub label: Ranking,
    pub query_type: QueryType,
}

pub fn parse_jsonl<T: DeserializeOwned>(reader: impl Read) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: "<input>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| DatasetError::Decode { line: i + 1, source })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(file)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String, DatasetError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(to_jsonl(items)?.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::set_of;

    #[test]
    fn labeled_sets_flatten_the_candidate_set() {
        let rec = LabeledSet {
            set: set_of(&["a", "b"]),
            label: Ranking::from_strs(&["b", "a"]),
            query_type: QueryType::BroadNeeds,
        };
        let line = to_jsonl(std::slice::from_ref(&rec)).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(v["query"]["text"], "q");
        assert_eq!(v["label"][0], "b");
        assert_eq!(v["query_type"], "BroadNeeds");
        let back: Vec<LabeledSet> = parse_jsonl(line.as_bytes()).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn decode_errors_carry_line_numbers() {
        let input = "{\"text\":\"a\"}\n\nnot json\n";
        let err = parse_jsonl::<crate::model::Query>(input.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Decode { line: 3, .. }), "{err}");
    }
}
