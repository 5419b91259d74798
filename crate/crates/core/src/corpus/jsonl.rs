use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Document};
use crate::error::{Error, Result};

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonlRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub label: Option<String>,
    pub domain: String,
}

/// Fixes the label set (and its order) instead of deriving it from the file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    pub labels: Vec<String>,
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
    load_jsonl_with_schema(path, None)
}

pub fn load_jsonl_with_schema(path: impl AsRef<Path>, schema: Option<&LabelSchema>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file), path, schema)
}

/// Parses newline-delimited records. Labels and domains are indexed in order of
/// first appearance unless `schema` fixes the labels. Documents without an
/// `id` are named by their 1-based line number.
pub fn read_jsonl(reader: impl BufRead, path: &Path, schema: Option<&LabelSchema>) -> Result<Corpus> {
    let mut labels: Vec<String> = schema.map(|s| s.labels.clone()).unwrap_or_default();
    let mut domains: Vec<String> = Vec::new();
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record.domain.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: "empty domain".into(),
            });
        }
        let label = match record.label {
            None => None,
            Some(l) => Some(match labels.iter().position(|x| *x == l) {
                Some(p) => p,
                None if schema.is_some() => return Err(Error::UnknownLabel { label: l, line: line_no }),
                None => {
                    labels.push(l);
                    labels.len() - 1
                }
            }),
        };
        if !domains.contains(&record.domain) {
            domains.push(record.domain.clone());
        }
        let id = record.id.unwrap_or_else(|| line_no.to_string());
        documents.push(Document::new(id, record.text, label, record.domain));
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::new(documents, labels, domains)
}

pub fn write_jsonl(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    for d in corpus.documents() {
        let record = JsonlRecord {
            id: Some(d.id.clone()),
            text: d.raw_text.clone(),
            label: d.label.map(|l| corpus.labels()[l].clone()),
            domain: d.domain.clone(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
