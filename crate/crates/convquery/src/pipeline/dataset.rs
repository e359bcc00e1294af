//! Dataset ingestion: one dialogue per line as a JSON record.
//!
//! Upstream preprocessing contracts (such as removing a corpus-specific
//! first turn) are the converter's responsibility; this parser is strict
//! and reports the offending line on any malformed input.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{Dialogue, Turn};
use crate::error::ConvQueryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTurn {
    pub speaker: String,
    pub text: String,
}

/// One dialogue as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub turns: Vec<DatasetTurn>,
    pub gold_response: String,
    #[serde(default)]
    pub gold_titles: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coref_mentions: Option<Vec<String>>,
}

impl DatasetRecord {
    pub fn to_dialogue(&self) -> Dialogue {
        let turns = self
            .turns
            .iter()
            .map(|t| Turn::new(t.speaker.clone(), t.text.clone()))
            .collect();
        let mut dialogue = Dialogue::new(turns, self.gold_response.clone())
            .with_gold_titles(self.gold_titles.clone());
        if let Some(mentions) = &self.coref_mentions {
            dialogue = dialogue.with_coref_mentions(mentions.clone());
        }
        dialogue
    }

    fn validate(&self, line: usize) -> Result<(), ConvQueryError> {
        if self.turns.is_empty() {
            return Err(ConvQueryError::Parse {
                line,
                message: "dialogue has no turns".to_string(),
            });
        }
        if self.gold_response.trim().is_empty() {
            return Err(ConvQueryError::Parse {
                line,
                message: "gold_response is empty".to_string(),
            });
        }
        Ok(())
    }
}

/// Strict JSONL parse; the error names the 1-based offending line.
pub fn parse_dataset(contents: &str) -> Result<Vec<DatasetRecord>, ConvQueryError> {
    let mut records = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| ConvQueryError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        record.validate(line_no)?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, ConvQueryError> {
    let contents = std::fs::read_to_string(path).map_err(|source| ConvQueryError::Io {
        context: format!("reading dataset {}", path.display()),
        source,
    })?;
    parse_dataset(&contents)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), ConvQueryError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| ConvQueryError::Io {
        context: format!("writing dataset {}", path.display()),
        source,
    })
}
