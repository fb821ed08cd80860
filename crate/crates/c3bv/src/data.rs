//! Rating-table ingestion: MovieLens and Amazon 5-core file parsing, dense
//! re-indexing, deduplication, and persistence of ingested tables.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{C3bvError, Result};
use crate::game::RowMatrix;
use crate::welfare::KahanSum;

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> C3bvError {
    C3bvError::io(path.display().to_string(), source)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> C3bvError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => io_err(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// One observation after dense re-indexing.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingTriple {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// A deduplicated rating table with users and items densely re-indexed in
/// order of first appearance. Duplicate (user, item) pairs keep the latest
/// record by timestamp; on ties or missing timestamps the later record wins.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingTable {
    triples: Vec<RatingTriple>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl RatingTable {
    /// Builds a table from raw records of (user id, item id, rating,
    /// timestamp), assigning dense indices and deduplicating.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, f64, Option<i64>)>,
    {
        let mut user_index: HashMap<String, u32> = HashMap::new();
        let mut item_index: HashMap<String, u32> = HashMap::new();
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut triples: Vec<RatingTriple> = Vec::new();
        let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
        for (user_id, item_id, rating, timestamp) in records {
            if !rating.is_finite() {
                return Err(C3bvError::NonFinite {
                    context: format!("rating for user {user_id:?}, item {item_id:?}"),
                });
            }
            let user = *user_index.entry(user_id.clone()).or_insert_with(|| {
                user_ids.push(user_id.clone());
                (user_ids.len() - 1) as u32
            });
            let item = *item_index.entry(item_id.clone()).or_insert_with(|| {
                item_ids.push(item_id.clone());
                (item_ids.len() - 1) as u32
            });
            let triple = RatingTriple {
                user,
                item,
                rating,
                timestamp,
            };
            match seen.get(&(user, item)) {
                Some(&pos) => {
                    let kept = triples[pos].timestamp.unwrap_or(i64::MIN);
                    if triple.timestamp.unwrap_or(i64::MIN) >= kept {
                        triples[pos] = triple;
                    }
                }
                None => {
                    seen.insert((user, item), triples.len());
                    triples.push(triple);
                }
            }
        }
        if triples.is_empty() {
            return Err(C3bvError::InvalidParameter(
                "rating table has no observations".into(),
            ));
        }
        Ok(Self {
            triples,
            user_ids,
            item_ids,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    /// Original user ids in dense-index order.
    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    /// Original item ids in dense-index order.
    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Mean of the observed ratings.
    pub fn mean_rating(&self) -> f64 {
        let mut sum = KahanSum::default();
        for t in &self.triples {
            sum.add(t.rating);
        }
        sum.value() / self.triples.len() as f64
    }

    /// Dense users-by-items matrix with unobserved entries as zero.
    pub fn dense_matrix(&self) -> RowMatrix {
        let mut m = RowMatrix::zeros(self.num_users(), self.num_items());
        for t in &self.triples {
            m.set(t.user as usize, t.item as usize, t.rating);
        }
        m
    }

    /// Writes the table as CSV with columns
    /// `user_id,item_id,rating,timestamp` (timestamp blank when absent).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        writer
            .write_record(["user_id", "item_id", "rating", "timestamp"])
            .map_err(|e| csv_err(path, e))?;
        for t in &self.triples {
            let ts = t.timestamp.map(|v| v.to_string()).unwrap_or_default();
            writer
                .write_record([
                    self.user_ids[t.user as usize].as_str(),
                    self.item_ids[t.item as usize].as_str(),
                    &t.rating.to_string(),
                    &ts,
                ])
                .map_err(|e| csv_err(path, e))?;
        }
        writer.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }

    /// Reads a table previously written by [`RatingTable::save_csv`].
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut records = Vec::new();
        for (idx, row) in reader.records().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| C3bvError::Parse {
                path: path.display().to_string(),
                line,
                message: e.to_string(),
            })?;
            let field = |i: usize| -> Result<&str> {
                row.get(i).ok_or_else(|| C3bvError::Parse {
                    path: path.display().to_string(),
                    line,
                    message: format!("expected 4 fields, got {}", row.len()),
                })
            };
            let rating: f64 = field(2)?.parse().map_err(|e| C3bvError::Parse {
                path: path.display().to_string(),
                line,
                message: format!("bad rating: {e}"),
            })?;
            let ts_field = field(3)?;
            let timestamp = if ts_field.is_empty() {
                None
            } else {
                Some(ts_field.parse().map_err(|e| C3bvError::Parse {
                    path: path.display().to_string(),
                    line,
                    message: format!("bad timestamp: {e}"),
                })?)
            };
            records.push((
                field(0)?.to_string(),
                field(1)?.to_string(),
                rating,
                timestamp,
            ));
        }
        Self::from_records(records)
    }
}

/// Parses a MovieLens `u.data`-style file: one tab-separated
/// `user item rating timestamp` record per line.
pub fn parse_movielens(path: &Path) -> Result<RatingTable> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(C3bvError::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let rating: f64 = fields[2].parse().map_err(|e| C3bvError::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: format!("bad rating {:?}: {e}", fields[2]),
        })?;
        let timestamp: i64 = fields[3].parse().map_err(|e| C3bvError::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: format!("bad timestamp {:?}: {e}", fields[3]),
        })?;
        records.push((
            fields[0].to_string(),
            fields[1].to_string(),
            rating,
            Some(timestamp),
        ));
    }
    RatingTable::from_records(records)
}

#[derive(Deserialize)]
struct AmazonRecord {
    #[serde(rename = "reviewerID")]
    reviewer_id: String,
    asin: String,
    overall: f64,
    #[serde(rename = "unixReviewTime")]
    unix_review_time: Option<i64>,
}

/// Parses an Amazon 5-core review dump: one JSON record per line with
/// `reviewerID`, `asin`, `overall`, and (optionally) `unixReviewTime`.
pub fn parse_amazon_5core(path: &Path) -> Result<RatingTable> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AmazonRecord = serde_json::from_str(&line).map_err(|e| C3bvError::Parse {
            path: path.display().to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        records.push((rec.reviewer_id, rec.asin, rec.overall, rec.unix_review_time));
    }
    RatingTable::from_records(records)
}
