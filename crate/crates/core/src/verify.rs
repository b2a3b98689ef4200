//! Invariant checks on a single score matrix, as run by `bidb verify`.

use crate::metrics::{cmc, roc, CmcCurve, ThresholdSweep, TABLE_RANKS};
use crate::scoring::{fuse, ScoreMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail(String),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Outcome,
}

impl Check {
    fn new(name: &'static str, failure: Option<String>) -> Self {
        Self {
            name,
            outcome: failure.map_or(Outcome::Pass, Outcome::Fail),
        }
    }

    fn skipped(name: &'static str, why: &str) -> Self {
        Self {
            name,
            outcome: Outcome::Skipped(why.into()),
        }
    }

    pub fn line(&self) -> String {
        match &self.outcome {
            Outcome::Pass => format!("PASS {}", self.name),
            Outcome::Fail(why) => format!("FAIL {}: {why}", self.name),
            Outcome::Skipped(why) => format!("SKIP {}: {why}", self.name),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| !matches!(c.outcome, Outcome::Fail(_)))
}

/// Runs every applicable check. Metric checks are skipped when the matrix
/// has no ground truth or no mated probes.
pub fn verify_matrix(m: &ScoreMatrix) -> Vec<Check> {
    let mut checks = vec![
        Check::new("scores finite and within [-1, 1]", {
            m.scores()
                .iter()
                .find(|s| !(-1.0..=1.0).contains(*s))
                .map(|s| format!("score {s}"))
        }),
        Check::new("ids sorted and unique", {
            let sorted = |ids: &[String]| ids.windows(2).all(|w| w[0] < w[1]);
            (!sorted(m.probe_ids()) || !sorted(m.gallery_ids())).then(|| "id order".to_owned())
        }),
        Check::new("self-fusion is the identity", match fuse(m, m) {
            Ok(f) if f == *m => None,
            Ok(_) => Some("fuse(m, m) differs from m".into()),
            Err(e) => Some(e.to_string()),
        }),
        Check::new("CSV round trip is lossless", match ScoreMatrix::from_csv(&m.to_csv()) {
            Ok(r) if r == *m => None,
            Ok(_) => Some("reloaded matrix differs".into()),
            Err(e) => Some(e.to_string()),
        }),
        Check::new(
            "BIDS round trip is lossless",
            match m.to_bids().and_then(|b| ScoreMatrix::from_bids(&b)) {
                Ok(r) if r == *m => None,
                Ok(_) => Some("reloaded matrix differs".into()),
                Err(e) => Some(e.to_string()),
            },
        ),
    ];

    const METRIC_CHECKS: [&str; 5] = [
        "CMC non-decreasing and reaches 1 at rank G",
        "CMC equals full-sort recomputation",
        "rank-1 <= rank-10 <= rank-20",
        "ROC monotone in threshold",
        "ROC endpoints (1, 1) and (0, 0)",
    ];
    let curve = match (m.mated(), m.mated_count()) {
        (None, _) => Err("no ground truth"),
        (Some(_), 0) => Err("no mated probes"),
        _ => cmc(m).map_err(|_| "CMC undefined"),
    };
    let curve = match curve {
        Ok(c) => c,
        Err(why) => {
            checks.extend(METRIC_CHECKS.iter().map(|n| Check::skipped(n, why)));
            return checks;
        }
    };
    checks.push(Check::new(METRIC_CHECKS[0], {
        let monotone = curve.hit_rates.windows(2).all(|w| w[0] <= w[1]);
        let last = curve.hit_rates.last().copied().unwrap_or(0.0);
        (!monotone || last != 1.0).then(|| format!("last value {last}"))
    }));
    checks.push(Check::new(METRIC_CHECKS[1], {
        (curve != sorted_cmc(m)).then(|| "curves differ".to_owned())
    }));
    checks.push(Check::new(METRIC_CHECKS[2], {
        let r = TABLE_RANKS.map(|k| curve.at(k));
        (!(r[0] <= r[1] && r[1] <= r[2])).then(|| format!("{r:?}"))
    }));
    match roc(m, &ThresholdSweep::Observed) {
        Ok(curve) => {
            let pts = &curve.points;
            checks.push(Check::new(METRIC_CHECKS[3], {
                pts.windows(2)
                    .find(|w| w[1].far > w[0].far || w[1].tar > w[0].tar)
                    .map(|w| format!("at threshold {}", w[1].threshold))
            }));
            checks.push(Check::new(METRIC_CHECKS[4], {
                let first = pts.first().map(|p| (p.far, p.tar));
                let last = pts.last().map(|p| (p.far, p.tar));
                (first != Some((1.0, 1.0)) || last != Some((0.0, 0.0)))
                    .then(|| format!("{first:?} .. {last:?}"))
            }));
        }
        Err(e) => {
            let why = e.to_string();
            checks.push(Check::skipped(METRIC_CHECKS[3], &why));
            checks.push(Check::skipped(METRIC_CHECKS[4], &why));
        }
    }
    checks
}

/// CMC by sorting each mated row in descending order and locating the last
/// position holding the mate's score (ties count against the mate).
fn sorted_cmc(m: &ScoreMatrix) -> CmcCurve {
    let g = m.gallery_len();
    let mut hits = vec![0usize; g];
    let mut n = 0;
    for i in 0..m.probes() {
        let Some(mate) = m.mate_index(i) else { continue };
        n += 1;
        let target = m.row(i)[mate];
        let mut row = m.row(i).to_vec();
        row.sort_by(|a, b| b.total_cmp(a));
        let rank = row.iter().rposition(|&s| s >= target).map_or(g, |p| p + 1);
        for h in hits.iter_mut().skip(rank - 1) {
            *h += 1;
        }
    }
    CmcCurve {
        hit_rates: hits.iter().map(|&h| h as f64 / n as f64).collect(),
        mated_probes: n,
    }
}
