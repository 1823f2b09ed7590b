use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const MIN_RATING: i8 = -5;
pub const MAX_RATING: i8 = 5;

/// Which reference set an annotator rated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingSource {
    Origin,
    Sade,
}

impl FromStr for RatingSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "origin" => Ok(RatingSource::Origin),
            "sade" => Ok(RatingSource::Sade),
            other => Err(format!("unknown rating source `{other}`")),
        }
    }
}

impl fmt::Display for RatingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingSource::Origin => "origin",
            RatingSource::Sade => "sade",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRating {
    pub annotator: String,
    pub item_id: String,
    /// Free-form group label, e.g. a dataset and branch name.
    pub branch: String,
    pub source: RatingSource,
    pub rating: i8,
}

#[derive(Deserialize)]
struct RatingRecord {
    annotator: String,
    item_id: String,
    branch: String,
    source: String,
    rating: String,
}

/// Reads `annotator,item_id,branch,source,rating` CSV with a header row.
pub fn parse_ratings<R: Read>(reader: R) -> Result<Vec<HumanRating>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.deserialize::<RatingRecord>().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| EvalError::Rating {
            line,
            reason: e.to_string(),
        })?;
        let source = rec
            .source
            .parse()
            .map_err(|reason| EvalError::Rating { line, reason })?;
        let rating: i8 = rec.rating.parse().map_err(|_| EvalError::Rating {
            line,
            reason: format!("rating `{}` is not an integer", rec.rating),
        })?;
        if !(MIN_RATING..=MAX_RATING).contains(&rating) {
            return Err(EvalError::Rating {
                line,
                reason: format!("rating {rating} outside [{MIN_RATING}, {MAX_RATING}]"),
            });
        }
        out.push(HumanRating {
            annotator: rec.annotator,
            item_id: rec.item_id,
            branch: rec.branch,
            source,
            rating,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanGroup {
    pub branch: String,
    pub source: RatingSource,
    pub mean: f64,
    pub count: usize,
}

/// Mean rating per (branch, source) over every annotator's ratings.
pub fn human_eval_aggregate(ratings: &[HumanRating]) -> Result<Vec<HumanGroup>, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::EmptyGroup("any group".into()));
    }
    let mut sums: BTreeMap<(&str, RatingSource), (i64, usize)> = BTreeMap::new();
    for r in ratings {
        let e = sums.entry((r.branch.as_str(), r.source)).or_default();
        e.0 += i64::from(r.rating);
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|((branch, source), (sum, count))| HumanGroup {
            branch: branch.to_string(),
            source,
            mean: sum as f64 / count as f64,
            count,
        })
        .collect())
}

/// One row per branch with its origin and de-biased means side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRow {
    pub branch: String,
    pub origin: Option<f64>,
    pub sade: Option<f64>,
}

pub fn human_eval_rows(groups: &[HumanGroup]) -> Vec<HumanRow> {
    let mut rows: BTreeMap<&str, HumanRow> = BTreeMap::new();
    for g in groups {
        let row = rows.entry(g.branch.as_str()).or_insert_with(|| HumanRow {
            branch: g.branch.clone(),
            origin: None,
            sade: None,
        });
        match g.source {
            RatingSource::Origin => row.origin = Some(g.mean),
            RatingSource::Sade => row.sade = Some(g.mean),
        }
    }
    rows.into_values().collect()
}
