//! Probe x gallery cosine score matrices and score-level fusion.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::container::{ByteReader, ByteWriter};
use crate::domain::cosine;
use crate::error::{Error, Result};
use crate::templates::{Gallery, Template};

/// Dense cosine scores with optional mated ground truth.
///
/// Probe and gallery ids are kept sorted; construction permutes the score
/// rows and columns into that canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probe_ids: Vec<String>,
    gallery_ids: Vec<String>,
    /// Row-major `probes x gallery`.
    scores: Vec<f64>,
    /// Probe id -> gallery id of its mate. Unmated probes are absent.
    mated: Option<BTreeMap<String, String>>,
}

impl ScoreMatrix {
    pub fn new(
        probe_ids: Vec<String>,
        gallery_ids: Vec<String>,
        scores: Vec<f64>,
        mated: Option<BTreeMap<String, String>>,
    ) -> Result<Self> {
        let (p, g) = (probe_ids.len(), gallery_ids.len());
        if scores.len() != p * g {
            return Err(Error::Dimension {
                expected: p * g,
                got: scores.len(),
            });
        }
        if let Some(bad) = scores.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::Ingestion(format!("score {bad} outside [-1, 1]")));
        }
        let probe_order = sorted_order(&probe_ids, "probe")?;
        let gallery_order = sorted_order(&gallery_ids, "gallery")?;
        let mut sorted_scores = Vec::with_capacity(scores.len());
        for &i in &probe_order {
            for &j in &gallery_order {
                sorted_scores.push(scores[i * g + j]);
            }
        }
        let probe_ids: Vec<String> = probe_order.iter().map(|&i| probe_ids[i].clone()).collect();
        let gallery_ids: Vec<String> = gallery_order
            .iter()
            .map(|&j| gallery_ids[j].clone())
            .collect();
        if let Some(m) = &mated {
            for (probe, mate) in m {
                if probe_ids.binary_search(probe).is_err() {
                    return Err(Error::Ingestion(format!("mated probe {probe} not in matrix")));
                }
                if gallery_ids.binary_search(mate).is_err() {
                    return Err(Error::Ingestion(format!(
                        "mate {mate} of probe {probe} not in gallery"
                    )));
                }
            }
        }
        Ok(Self {
            probe_ids,
            gallery_ids,
            scores: sorted_scores,
            mated,
        })
    }

    /// Marks each probe whose identity is enrolled as mated to that identity.
    pub fn with_ground_truth(mut self, probe_identity: &BTreeMap<String, String>) -> Result<Self> {
        let mut mated = BTreeMap::new();
        for p in &self.probe_ids {
            let identity = probe_identity
                .get(p)
                .ok_or_else(|| Error::Ingestion(format!("no identity for probe {p}")))?;
            if self.gallery_ids.binary_search(identity).is_ok() {
                mated.insert(p.clone(), identity.clone());
            }
        }
        self.mated = Some(mated);
        Ok(self)
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn gallery_ids(&self) -> &[String] {
        &self.gallery_ids
    }

    pub fn probes(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn gallery_len(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, probe: usize) -> &[f64] {
        let g = self.gallery_ids.len();
        &self.scores[probe * g..(probe + 1) * g]
    }

    pub fn score(&self, probe: usize, gallery: usize) -> f64 {
        self.scores[probe * self.gallery_ids.len() + gallery]
    }

    pub fn mated(&self) -> Option<&BTreeMap<String, String>> {
        self.mated.as_ref()
    }

    /// Gallery column of the probe's mate, if it has one.
    pub fn mate_index(&self, probe: usize) -> Option<usize> {
        let mate = self.mated.as_ref()?.get(&self.probe_ids[probe])?;
        self.gallery_ids.binary_search(mate).ok()
    }

    pub fn mated_count(&self) -> usize {
        self.mated.as_ref().map_or(0, BTreeMap::len)
    }

    /// Sub-matrix over the given probes (which must all be present).
    pub fn select_probes(&self, ids: &BTreeSet<String>) -> Result<Self> {
        let mut probe_ids = Vec::new();
        let mut scores = Vec::new();
        for (i, p) in self.probe_ids.iter().enumerate() {
            if ids.contains(p) {
                probe_ids.push(p.clone());
                scores.extend_from_slice(self.row(i));
            }
        }
        if probe_ids.len() != ids.len() {
            return Err(Error::Alignment("selection names unknown probes".into()));
        }
        let mated = self.mated.as_ref().map(|m| {
            m.iter()
                .filter(|(p, _)| ids.contains(*p))
                .map(|(p, g)| (p.clone(), g.clone()))
                .collect()
        });
        Self::new(probe_ids, self.gallery_ids.clone(), scores, mated)
    }

    /// Stacks the probe rows of matrices that share one gallery.
    pub fn concat(parts: &[&ScoreMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Alignment("nothing to concatenate".into()))?;
        let mut probe_ids = Vec::new();
        let mut scores = Vec::new();
        let mut mated = first.mated.as_ref().map(|_| BTreeMap::new());
        for m in parts {
            if m.gallery_ids != first.gallery_ids {
                return Err(Error::Alignment("gallery ids differ".into()));
            }
            if m.mated.is_some() != first.mated.is_some() {
                return Err(Error::Alignment("ground truth present in only some parts".into()));
            }
            probe_ids.extend(m.probe_ids.iter().cloned());
            scores.extend_from_slice(&m.scores);
            if let (Some(acc), Some(mm)) = (&mut mated, &m.mated) {
                acc.extend(mm.iter().map(|(a, b)| (a.clone(), b.clone())));
            }
        }
        Self::new(probe_ids, first.gallery_ids.clone(), scores, mated)
    }

    // CSV -----------------------------------------------------------------

    /// Long CSV `probe_id,gallery_id,score,is_mated`, one line per cell.
    /// `is_mated` is empty when the matrix carries no ground truth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe_id,gallery_id,score,is_mated\n");
        for (i, p) in self.probe_ids.iter().enumerate() {
            let mate = self.mate_index(i);
            for (j, g) in self.gallery_ids.iter().enumerate() {
                let flag = match &self.mated {
                    None => "",
                    Some(_) if mate == Some(j) => "true",
                    Some(_) => "false",
                };
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    csv_field(p),
                    csv_field(g),
                    format_score(self.score(i, j)),
                    flag
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Ingestion(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["probe_id", "gallery_id", "score", "is_mated"] {
            return Err(Error::Ingestion(
                "score CSV header must be `probe_id,gallery_id,score,is_mated`".into(),
            ));
        }
        let mut probe_ids: Vec<String> = Vec::new();
        let mut probe_index = BTreeMap::new();
        let mut gallery_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut gallery_ids: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut mated: BTreeMap<String, String> = BTreeMap::new();
        let mut has_truth: Option<bool> = None;
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Ingestion(e.to_string()))?;
            let (p, g, s, flag) = (&rec[0], &rec[1], &rec[2], &rec[3]);
            let pi = *probe_index.entry(p.to_owned()).or_insert_with(|| {
                probe_ids.push(p.to_owned());
                probe_ids.len() - 1
            });
            let gi = *gallery_index.entry(g.to_owned()).or_insert_with(|| {
                gallery_ids.push(g.to_owned());
                gallery_ids.len() - 1
            });
            let score: f64 = s
                .parse()
                .map_err(|_| Error::Ingestion(format!("bad score `{s}`")))?;
            if cells.insert((pi, gi), score).is_some() {
                return Err(Error::Ingestion(format!("duplicate cell ({p}, {g})")));
            }
            let truth = match flag {
                "" => false,
                "true" => {
                    if mated.insert(p.to_owned(), g.to_owned()).is_some() {
                        return Err(Error::Ingestion(format!("probe {p} has two mates")));
                    }
                    true
                }
                "false" => true,
                other => return Err(Error::Ingestion(format!("bad is_mated `{other}`"))),
            };
            match has_truth {
                None => has_truth = Some(truth),
                Some(h) if h != truth => {
                    return Err(Error::Ingestion("is_mated set on only some rows".into()))
                }
                _ => {}
            }
        }
        let (p, g) = (probe_ids.len(), gallery_ids.len());
        if cells.len() != p * g {
            return Err(Error::Ingestion(format!(
                "score CSV is not a complete matrix: {} of {} cells",
                cells.len(),
                p * g
            )));
        }
        let scores = cells.into_values().collect();
        Self::new(
            probe_ids,
            gallery_ids,
            scores,
            has_truth.unwrap_or(false).then_some(mated),
        )
    }

    // BIDS ----------------------------------------------------------------

    /// `BIDS` layout (little-endian): magic, version u32, probe count u32,
    /// gallery count u32, ground-truth flag u8, probe ids, gallery ids
    /// (each u32 byte length + UTF-8), row-major f64 scores, then when the
    /// flag is set one u32 mate column per probe (`u32::MAX` = unmated).
    pub fn to_bids(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new(BIDS_MAGIC, BIDS_VERSION);
        w.len_u32(self.probes())?;
        w.len_u32(self.gallery_len())?;
        w.u8(self.mated.is_some() as u8);
        for id in self.probe_ids.iter().chain(&self.gallery_ids) {
            w.str(id)?;
        }
        w.f64s(&self.scores);
        if self.mated.is_some() {
            for i in 0..self.probes() {
                match self.mate_index(i) {
                    Some(j) => w.len_u32(j)?,
                    None => w.u32(u32::MAX),
                }
            }
        }
        Ok(w.finish())
    }

    pub fn from_bids(bytes: &[u8]) -> Result<Self> {
        let (mut r, _) = ByteReader::open(bytes, BIDS_MAGIC, BIDS_VERSION)?;
        let p = r.usize()?;
        let g = r.usize()?;
        let has_truth = match r.u8()? {
            0 => false,
            1 => true,
            f => return Err(Error::Format(format!("bad ground-truth flag {f}"))),
        };
        let probe_ids = (0..p).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let gallery_ids = (0..g).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let scores = r.f64s(
            p.checked_mul(g)
                .ok_or_else(|| Error::Format("BIDS size overflow".into()))?,
        )?;
        let mated = if has_truth {
            let mut m = BTreeMap::new();
            for pid in &probe_ids {
                let j = r.u32()?;
                if j != u32::MAX {
                    let gid = gallery_ids
                        .get(j as usize)
                        .ok_or_else(|| Error::Format(format!("mate index {j} out of range")))?;
                    m.insert(pid.clone(), gid.clone());
                }
            }
            Some(m)
        } else {
            None
        };
        r.finish()?;
        Self::new(probe_ids, gallery_ids, scores, mated)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn save_bids(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bids()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_bids(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bids(&bytes)
    }

    /// Loads by extension: `.bids` binary, anything else CSV.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "bids") {
            Self::load_bids(path)
        } else {
            Self::load_csv(path)
        }
    }
}

const BIDS_MAGIC: &[u8; 4] = b"BIDS";
const BIDS_VERSION: u32 = 1;

/// 17 significant digits: enough to round-trip any f64.
pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn sorted_order(ids: &[String], what: &str) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    for pair in order.windows(2) {
        if ids[pair[0]] == ids[pair[1]] {
            return Err(Error::Ingestion(format!(
                "duplicate {what} id {}",
                ids[pair[0]]
            )));
        }
    }
    Ok(order)
}

fn score_row(probe: &Template, gallery: &Gallery) -> Result<Vec<f64>> {
    gallery
        .templates()
        .map(|g| {
            cosine(&probe.vector, &g.vector).map_err(|e| match e {
                Error::DegenerateVector(side) => Error::DegenerateVector(format!(
                    "{} ({side} of probe {} vs gallery {})",
                    if side.starts_with("left") {
                        &probe.owner_id
                    } else {
                        &g.owner_id
                    },
                    probe.owner_id,
                    g.owner_id
                )),
                other => other,
            })
        })
        .collect()
}

/// Cosine of every probe template against every gallery template.
pub fn score_all(probes: &[Template], gallery: &Gallery) -> Result<ScoreMatrix> {
    score_all_with(probes, gallery, None)
}

/// [`score_all`] filling rows on an optional worker pool; every cell is a
/// pure function of its two templates, so the result is pool-independent.
pub fn score_all_with(
    probes: &[Template],
    gallery: &Gallery,
    pool: Option<&rayon::ThreadPool>,
) -> Result<ScoreMatrix> {
    let rows: Vec<Vec<f64>> = match pool {
        Some(pool) => pool.install(|| probes.par_iter().map(|p| score_row(p, gallery)).collect::<Result<_>>())?,
        None => probes
            .iter()
            .map(|p| score_row(p, gallery))
            .collect::<Result<_>>()?,
    };
    ScoreMatrix::new(
        probes.iter().map(|p| p.owner_id.clone()).collect(),
        gallery.ids().map(str::to_owned).collect(),
        rows.concat(),
        None,
    )
}

/// Averages two aligned score matrices cell by cell.
pub fn fuse(a: &ScoreMatrix, b: &ScoreMatrix) -> Result<ScoreMatrix> {
    if a.probe_ids != b.probe_ids {
        return Err(Error::Alignment("probe ids differ".into()));
    }
    if a.gallery_ids != b.gallery_ids {
        return Err(Error::Alignment("gallery ids differ".into()));
    }
    if a.mated != b.mated {
        return Err(Error::Alignment("mated ground truth differs".into()));
    }
    let scores = a
        .scores
        .iter()
        .zip(&b.scores)
        .map(|(x, y)| ((x + y) / 2.0).clamp(-1.0, 1.0))
        .collect();
    Ok(ScoreMatrix {
        probe_ids: a.probe_ids.clone(),
        gallery_ids: a.gallery_ids.clone(),
        scores,
        mated: a.mated.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: &str, v: &[f64]) -> Template {
        Template {
            owner_id: id.into(),
            vector: v.to_vec(),
            source_count: 1,
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_probe_scores_one() {
        let gallery =
            Gallery::from_templates(vec![t("A", &[1.0, 2.0, 0.5]), t("B", &[0.0, 1.0, -1.0])])
                .unwrap();
        let m = score_all(&[t("p", &[1.0, 2.0, 0.5])], &gallery).unwrap();
        assert_eq!(m.score(0, 0), 1.0);
        let single = score_all(
            &[t("p", &[1.0, 0.0])],
            &Gallery::from_templates(vec![t("A", &[1.0, 1.0])]).unwrap(),
        )
        .unwrap();
        assert_eq!(single.scores(), &[cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap()]);
    }

    #[test]
    fn degenerate_probe_named() {
        let gallery = Gallery::from_templates(vec![t("A", &[1.0, 0.0])]).unwrap();
        match score_all(&[t("bad-probe", &[0.0, 0.0])], &gallery) {
            Err(Error::DegenerateVector(msg)) => assert!(msg.contains("bad-probe"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn construction_sorts_ids() {
        let m = ScoreMatrix::new(
            ids(&["p2", "p1"]),
            ids(&["B", "A"]),
            vec![0.1, 0.2, 0.3, 0.4],
            None,
        )
        .unwrap();
        assert_eq!(m.probe_ids(), ids(&["p1", "p2"]));
        assert_eq!(m.gallery_ids(), ids(&["A", "B"]));
        // p1 row was [B=0.3, A=0.4].
        assert_eq!(m.row(0), &[0.4, 0.3]);
        assert_eq!(m.row(1), &[0.2, 0.1]);
    }

    #[test]
    fn duplicate_ids_and_bad_mates_rejected() {
        assert!(ScoreMatrix::new(ids(&["p", "p"]), ids(&["A"]), vec![0.0, 0.0], None).is_err());
        let mated = BTreeMap::from([("p".to_string(), "Z".to_string())]);
        assert!(ScoreMatrix::new(ids(&["p"]), ids(&["A"]), vec![0.0], Some(mated)).is_err());
        assert!(ScoreMatrix::new(ids(&["p"]), ids(&["A"]), vec![1.5], None).is_err());
    }

    #[test]
    fn fuse_examples() {
        let a = ScoreMatrix::new(ids(&["p"]), ids(&["A", "B"]), vec![0.2, -0.5], None).unwrap();
        let b = ScoreMatrix::new(ids(&["p"]), ids(&["A", "B"]), vec![0.6, 0.1], None).unwrap();
        let f = fuse(&a, &b).unwrap();
        assert!((f.score(0, 0) - 0.4).abs() < 1e-15);
        assert_eq!(fuse(&a, &a).unwrap(), a);
        assert_eq!(fuse(&a, &b).unwrap(), fuse(&b, &a).unwrap());
    }

    #[test]
    fn fuse_requires_alignment() {
        let a = ScoreMatrix::new(ids(&["p"]), ids(&["A", "B"]), vec![0.2, 0.5], None).unwrap();
        let b = ScoreMatrix::new(ids(&["q"]), ids(&["A", "B"]), vec![0.6, 0.1], None).unwrap();
        assert!(matches!(fuse(&a, &b), Err(Error::Alignment(_))));
        let c = ScoreMatrix::new(ids(&["p"]), ids(&["A", "C"]), vec![0.6, 0.1], None).unwrap();
        assert!(matches!(fuse(&a, &c), Err(Error::Alignment(_))));
        let truth = BTreeMap::from([("p".to_string(), "A".to_string())]);
        let d = a.clone().with_ground_truth(&truth).unwrap();
        assert!(matches!(fuse(&a, &d), Err(Error::Alignment(_))));
    }

    #[test]
    fn ground_truth_marks_enrolled_identities() {
        let m = ScoreMatrix::new(ids(&["p1", "p2"]), ids(&["A", "B"]), vec![0.0; 4], None)
            .unwrap()
            .with_ground_truth(&BTreeMap::from([
                ("p1".to_string(), "B".to_string()),
                ("p2".to_string(), "Z".to_string()),
            ]))
            .unwrap();
        assert_eq!(m.mate_index(0), Some(1));
        assert_eq!(m.mate_index(1), None);
        assert_eq!(m.mated_count(), 1);
    }

    #[test]
    fn csv_and_bids_round_trip() {
        let mated = BTreeMap::from([("p1".to_string(), "B".to_string())]);
        let m = ScoreMatrix::new(
            ids(&["p1", "p,2"]),
            ids(&["A", "B"]),
            vec![0.1 + 0.2, -1.0 / 3.0, 1.0, f64::MIN_POSITIVE],
            Some(mated),
        )
        .unwrap();
        let csv = m.to_csv();
        assert!(csv.starts_with("probe_id,gallery_id,score,is_mated\n"));
        assert_eq!(ScoreMatrix::from_csv(&csv).unwrap(), m);
        assert_eq!(ScoreMatrix::from_bids(&m.to_bids().unwrap()).unwrap(), m);

        let plain = ScoreMatrix::new(ids(&["p"]), ids(&["A"]), vec![0.25], None).unwrap();
        assert_eq!(ScoreMatrix::from_csv(&plain.to_csv()).unwrap(), plain);
        assert_eq!(ScoreMatrix::from_bids(&plain.to_bids().unwrap()).unwrap(), plain);
    }

    #[test]
    fn incomplete_csv_rejected() {
        let text = "probe_id,gallery_id,score,is_mated\np,A,0.5,\nq,B,0.1,\n";
        assert!(ScoreMatrix::from_csv(text).is_err());
    }

    #[test]
    fn select_and_concat() {
        let truth = BTreeMap::from([
            ("p1".to_string(), "A".to_string()),
            ("p3".to_string(), "B".to_string()),
        ]);
        let m = ScoreMatrix::new(
            ids(&["p1", "p2", "p3"]),
            ids(&["A", "B"]),
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            Some(truth),
        )
        .unwrap();
        let a = m.select_probes(&BTreeSet::from(["p1".to_string()])).unwrap();
        let b = m
            .select_probes(&BTreeSet::from(["p2".to_string(), "p3".to_string()]))
            .unwrap();
        assert_eq!(a.mated_count(), 1);
        assert_eq!(ScoreMatrix::concat(&[&b, &a]).unwrap(), m);
    }
}
