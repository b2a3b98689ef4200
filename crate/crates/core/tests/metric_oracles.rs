mod common;

use bidb::metrics::{cmc, roc, ThresholdSweep};
use common::{oracle_cmc, oracle_roc, random_matrix, rng};

#[test]
fn cmc_matches_brute_force() {
    let mut r = rng(11);
    for _ in 0..300 {
        let m = random_matrix(&mut r, 50, 20);
        let got = cmc(&m).unwrap();
        let want = oracle_cmc(&m);
        assert_eq!(got.hit_rates, want);
        assert_eq!(got.mated_probes, m.mated_count());
    }
}

#[test]
fn roc_matches_brute_force() {
    let mut r = rng(12);
    let mut checked = 0;
    for _ in 0..300 {
        let m = random_matrix(&mut r, 50, 20);
        let want = oracle_roc(&m);
        // A 1x1 mated matrix has no impostor scores.
        let Ok(got) = roc(&m, &ThresholdSweep::Observed) else {
            assert_eq!(m.probes() * m.gallery_len(), m.mated_count());
            continue;
        };
        let got: Vec<(f64, f64, f64)> = got.points.iter().map(|p| (p.threshold, p.far, p.tar)).collect();
        assert_eq!(got, want);
        checked += 1;
    }
    assert!(checked > 250);
}

#[test]
fn explicit_thresholds_match_brute_force() {
    let mut r = rng(13);
    for _ in 0..100 {
        let m = random_matrix(&mut r, 20, 10);
        if m.probes() * m.gallery_len() == m.mated_count() {
            continue;
        }
        let thresholds = vec![0.25, -1.0, 0.0, 1.0, 0.5];
        let got = roc(&m, &ThresholdSweep::Explicit(thresholds)).unwrap();
        let full = oracle_roc(&m);
        for p in &got.points {
            // FAR/TAR at t equal the brute-force values at the smallest
            // observed threshold >= t.
            let at = full.iter().find(|o| o.0 >= p.threshold).unwrap();
            assert_eq!((p.far, p.tar), (at.1, at.2), "threshold {}", p.threshold);
        }
    }
}
