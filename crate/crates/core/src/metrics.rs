//! Open-set identification metrics: probe ranks, CMC, ROC, and rank tables.
//!
//! Only mated probes enter the CMC. For the ROC every mated probe supplies
//! one genuine score (against its mate) and `G - 1` impostor scores; an
//! unmated probe supplies `G` impostor scores.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::{format_score, ScoreMatrix};

/// Rank of the mate in one score row: one plus the number of other entries
/// scoring at least as high. Ties count against the mate.
pub fn probe_rank(row: &[f64], mate: usize) -> Result<usize> {
    let target = *row.get(mate).ok_or(Error::Index {
        index: mate,
        len: row.len(),
    })?;
    Ok(1 + row
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != mate && s >= target)
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmcCurve {
    /// `hit_rates[r - 1]` is the fraction of mated probes with rank <= r.
    pub hit_rates: Vec<f64>,
    pub mated_probes: usize,
}

impl CmcCurve {
    /// Hit rate at `rank`; ranks beyond the gallery saturate at the last value.
    pub fn at(&self, rank: usize) -> f64 {
        if rank == 0 {
            return 0.0;
        }
        let i = rank.min(self.hit_rates.len()) - 1;
        self.hit_rates[i]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,hit_rate\n");
        for (i, h) in self.hit_rates.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, format_score(*h)));
        }
        out
    }
}

/// Per-probe ranks of every mated probe, in probe order.
pub fn mated_ranks(matrix: &ScoreMatrix) -> Result<Vec<usize>> {
    if matrix.mated().is_none() {
        return Err(Error::UndefinedMetric(
            "score matrix has no mated ground truth".into(),
        ));
    }
    (0..matrix.probes())
        .filter_map(|i| matrix.mate_index(i).map(|j| probe_rank(matrix.row(i), j)))
        .collect()
}

pub fn cmc(matrix: &ScoreMatrix) -> Result<CmcCurve> {
    let ranks = mated_ranks(matrix)?;
    if ranks.is_empty() {
        return Err(Error::UndefinedMetric("no mated probes".into()));
    }
    let g = matrix.gallery_len();
    let mut histogram = vec![0usize; g + 1];
    for r in &ranks {
        histogram[*r] += 1;
    }
    let n = ranks.len() as f64;
    let mut hits = 0usize;
    let hit_rates = (1..=g)
        .map(|r| {
            hits += histogram[r];
            hits as f64 / n
        })
        .collect();
    Ok(CmcCurve {
        hit_rates,
        mated_probes: ranks.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Points in increasing threshold order.
    pub points: Vec<RocPoint>,
    pub genuine: usize,
    pub impostor: usize,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,far,tar\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                format_score(p.threshold),
                format_score(p.far),
                format_score(p.tar)
            ));
        }
        out
    }

    /// Highest TAR among points whose FAR does not exceed `far`.
    pub fn tar_at_far(&self, far: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.far <= far)
            .map(|p| p.tar)
            .fold(0.0, f64::max)
    }
}

/// Which thresholds the ROC is evaluated at.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ThresholdSweep {
    /// Every distinct observed score plus `-inf` and `+inf` sentinels.
    #[default]
    Observed,
    Explicit(Vec<f64>),
}

/// Genuine and impostor scores of a matrix.
pub fn split_scores(matrix: &ScoreMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if matrix.mated().is_none() {
        return Err(Error::UndefinedMetric(
            "score matrix has no mated ground truth".into(),
        ));
    }
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..matrix.probes() {
        let mate = matrix.mate_index(i);
        for (j, &s) in matrix.row(i).iter().enumerate() {
            if Some(j) == mate {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    Ok((genuine, impostor))
}

pub fn roc(matrix: &ScoreMatrix, sweep: &ThresholdSweep) -> Result<RocCurve> {
    let (mut genuine, mut impostor) = split_scores(matrix)?;
    if genuine.is_empty() {
        return Err(Error::UndefinedMetric("no genuine scores".into()));
    }
    if impostor.is_empty() {
        return Err(Error::UndefinedMetric("no impostor scores".into()));
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let thresholds = match sweep {
        ThresholdSweep::Observed => {
            let mut t: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            let mut all = Vec::with_capacity(t.len() + 2);
            all.push(f64::NEG_INFINITY);
            all.extend(t);
            all.push(f64::INFINITY);
            all
        }
        ThresholdSweep::Explicit(t) => {
            if t.iter().any(|v| v.is_nan()) {
                return Err(Error::UndefinedMetric("NaN threshold".into()));
            }
            let mut t = t.clone();
            t.sort_by(f64::total_cmp);
            t
        }
    };
    let rate = |sorted: &[f64], theta: f64| {
        let below = sorted.partition_point(|&s| s < theta);
        (sorted.len() - below) as f64 / sorted.len() as f64
    };
    let points = thresholds
        .into_iter()
        .map(|threshold| RocPoint {
            threshold,
            far: rate(&impostor, threshold),
            tar: rate(&genuine, threshold),
        })
        .collect();
    Ok(RocCurve {
        points,
        genuine: genuine.len(),
        impostor: impostor.len(),
    })
}

/// Label of the pooled row of a rank table.
pub const ALL_CONDITIONS: &str = "All Distances";

/// Ranks reported in a rank table.
pub const TABLE_RANKS: [usize; 3] = [1, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub condition: String,
    /// Hit rates at ranks 1, 10 and 20.
    pub rates: [f64; 3],
}

/// Rank-1/10/20 hit rates per condition plus the pooled row, pooled first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
}

impl RankTable {
    pub fn get(&self, condition: &str) -> Option<&RankRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }
}

fn rank_row(condition: &str, matrix: &ScoreMatrix) -> Result<RankRow> {
    let curve = cmc(matrix)
        .map_err(|e| Error::UndefinedMetric(format!("condition {condition}: {e}")))?;
    Ok(RankRow {
        condition: condition.to_owned(),
        rates: TABLE_RANKS.map(|r| curve.at(r)),
    })
}

/// One matrix per condition; the pooled row concatenates every probe row.
pub fn rank_table(per_condition: &BTreeMap<String, ScoreMatrix>) -> Result<RankTable> {
    let parts: Vec<&ScoreMatrix> = per_condition.values().collect();
    let pooled = ScoreMatrix::concat(&parts)?;
    let mut rows = vec![rank_row(ALL_CONDITIONS, &pooled)?];
    let mut conditions: Vec<&String> = per_condition.keys().collect();
    conditions.sort_by_key(|c| condition_order(c));
    for c in conditions {
        rows.push(rank_row(c, &per_condition[c])?);
    }
    Ok(RankTable { rows })
}

const KNOWN_CONDITIONS: [(&str, &str); 4] = [
    ("close", "Close Range"),
    ("uav", "UAV"),
    ("100-300m", "100m-300m"),
    ("370-600m", "370m-600m"),
];

/// Sort key placing the four capture conditions in report order, then any
/// other tags alphabetically.
pub fn condition_order(condition: &str) -> (usize, String) {
    let i = KNOWN_CONDITIONS
        .iter()
        .position(|(c, _)| *c == condition)
        .unwrap_or(KNOWN_CONDITIONS.len());
    (i, condition.to_owned())
}

pub fn condition_label(condition: &str) -> &str {
    KNOWN_CONDITIONS
        .iter()
        .find(|(c, _)| *c == condition)
        .map_or(condition, |(_, label)| label)
}

/// Wide CSV, one line per model: `model` then rank-1/10/20 columns for the
/// pooled row and each condition. Rates print with two decimals; a
/// condition missing for a model leaves its cells empty.
pub fn rank_tables_csv(models: &[(String, RankTable)]) -> String {
    let mut conditions: Vec<String> = Vec::new();
    for (_, t) in models {
        for r in &t.rows {
            if !conditions.contains(&r.condition) {
                conditions.push(r.condition.clone());
            }
        }
    }
    conditions.sort_by_key(|c| {
        if c == ALL_CONDITIONS {
            (0, String::new())
        } else {
            let (i, s) = condition_order(c);
            (i + 1, s)
        }
    });
    let mut out = String::from("model");
    for c in &conditions {
        for r in TABLE_RANKS {
            out.push_str(&format!(",{} rank-{r}", condition_label(c)));
        }
    }
    out.push('\n');
    for (model, table) in models {
        out.push_str(model);
        for c in &conditions {
            match table.get(c) {
                Some(row) => {
                    for v in row.rates {
                        out.push_str(&format!(",{v:.2}"));
                    }
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}
