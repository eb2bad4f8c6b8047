//! JSON-lines population manifest. Record order defines row alignment with
//! the embedding file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::CovariateTable;
use crate::io::canonical::to_canonical_string;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TextRole {
    #[serde(rename = "human")]
    Human,
    #[serde(rename = "AI")]
    Ai,
}

impl TextRole {
    pub fn as_str(self) -> &'static str {
        match self {
            TextRole::Human => "human",
            TextRole::Ai => "AI",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub text_id: String,
    pub population: String,
    pub role: TextRole,
    /// `None` marks an absent value (written as `null`).
    #[serde(default)]
    pub covariates: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationManifest {
    pub records: Vec<ManifestRecord>,
}

impl PopulationManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Populations in first-appearance order.
    pub fn populations(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.population.clone()))
            .map(|r| r.population.clone())
            .collect()
    }

    pub fn rows_of(&self, population: &str) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].population == population)
            .collect()
    }

    /// `true` for AI texts.
    pub fn labels(&self) -> Vec<bool> {
        self.records
            .iter()
            .map(|r| r.role == TextRole::Ai)
            .collect()
    }

    /// Every covariate name seen on any record; absent cells stay `None`.
    pub fn covariate_table<T: Scalar>(&self) -> CovariateTable<T> {
        let names: BTreeSet<&String> = self
            .records
            .iter()
            .flat_map(|r| r.covariates.keys())
            .collect();
        let mut table = CovariateTable {
            text_ids: self.records.iter().map(|r| r.text_id.clone()).collect(),
            columns: BTreeMap::new(),
        };
        for name in names {
            let col = self
                .records
                .iter()
                .map(|r| {
                    r.covariates
                        .get(name)
                        .copied()
                        .flatten()
                        .and_then(T::from_f64)
                })
                .collect();
            table.columns.insert(name.clone(), col);
        }
        table
    }
}

/// Parses manifest lines; blank lines are skipped, line numbers are 1-based.
pub fn parse_manifest<R: BufRead>(reader: R, path: &Path) -> Result<PopulationManifest> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
        if let Some(role) = v.get("role").and_then(Value::as_str) {
            if role != "human" && role != "AI" {
                return Err(Error::UnknownRole {
                    role: role.into(),
                    line: line_no,
                });
            }
        }
        let rec: ManifestRecord = serde_json::from_value(v)
            .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
        if seen.insert(rec.text_id.clone(), line_no).is_some() {
            return Err(Error::DuplicateTextId {
                text_id: rec.text_id,
                line: line_no,
            });
        }
        records.push(rec);
    }
    Ok(PopulationManifest { records })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<(PopulationManifest, CovariateTable<f64>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let m = parse_manifest(BufReader::new(f), path)?;
    let table = m.covariate_table();
    Ok((m, table))
}

pub fn save_manifest(manifest: &PopulationManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in &manifest.records {
        writeln!(w, "{}", to_canonical_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<PopulationManifest> {
        parse_manifest(s.as_bytes(), Path::new("m.jsonl"))
    }

    #[test]
    fn empty_file_is_empty_manifest() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_reports_line() {
        let s = "{\"text_id\":\"a\",\"population\":\"p\",\"role\":\"AI\"}\n\
                 {\"text_id\":\"b\",\"population\":\"p\",\"role\":\"human\"}\n\
                 {\"text_id\":\"a\",\"population\":\"q\",\"role\":\"human\"}\n";
        match parse(s) {
            Err(Error::DuplicateTextId { text_id, line }) => {
                assert_eq!(text_id, "a");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_role_rejected() {
        let s = "{\"text_id\":\"a\",\"population\":\"p\",\"role\":\"robot\"}\n";
        assert!(matches!(parse(s), Err(Error::UnknownRole { line: 1, .. })));
    }

    #[test]
    fn partial_covariate_fails_fast_with_ids() {
        let s = "{\"text_id\":\"a\",\"population\":\"p\",\"role\":\"AI\",\"covariates\":{\"len\":3.0}}\n\
                 {\"text_id\":\"b\",\"population\":\"p\",\"role\":\"human\"}\n\
                 {\"text_id\":\"c\",\"population\":\"p\",\"role\":\"human\",\"covariates\":{\"len\":null}}\n";
        let m = parse(s).unwrap();
        let t = m.covariate_table::<f64>();
        assert_eq!(t.columns["len"], vec![Some(3.0), None, None]);
        match t.column("len") {
            Err(Error::MissingCovariate { ids, .. }) => assert_eq!(ids, vec!["b", "c"]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(m.labels(), vec![true, false, false]);
    }
}
