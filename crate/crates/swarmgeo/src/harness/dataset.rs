//! Dataset records and JSONL ingestion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::ImageRef;
use crate::geo::{box_as_swne, GeoBox};

/// One labeled sample: an opaque image (content seed at desk scale),
/// the ground-truth location text and box, and its region key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub image_seed: u64,
    pub truth_text: String,
    #[serde(with = "box_as_swne")]
    pub truth_box: GeoBox,
    pub region_key: String,
}

impl DatasetRecord {
    pub fn image_ref(&self) -> ImageRef {
        ImageRef {
            id: self.id.clone(),
            content_seed: self.image_seed,
            region_key: self.region_key.clone(),
            truth_text: self.truth_text.clone(),
        }
    }
}

/// Read a dataset from JSONL (one record per line, truth box as
/// `[south, west, north, east]`). Duplicate ids are rejected; malformed
/// lines report their line number.
pub fn ingest(path: &Path) -> Result<Vec<DatasetRecord>, HarnessError> {
    let raw = std::fs::read_to_string(path).map_err(|e| HarnessError::Ingest {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut records: Vec<DatasetRecord> = Vec::new();
    let mut seen: std::collections::HashSet<String> = Default::default();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::Ingest {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(HarnessError::Ingest {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("duplicate id {:?}", record.id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), HarnessError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Deterministic shuffled train/test split; `fraction` is the train
/// share.
pub fn split_dataset(
    records: &[DatasetRecord],
    fraction: f64,
    seed: u64,
) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = crate::seeding::rng_stream(seed, "split", &[]);
    order.shuffle(&mut rng);
    let cut = ((records.len() as f64) * fraction).floor() as usize;
    let train = order[..cut].iter().map(|&i| records[i].clone()).collect();
    let test = order[cut..].iter().map(|&i| records[i].clone()).collect();
    (train, test)
}
