mod common;

use common::*;

use boundkit::bench::{default_thresholds, match_boundaries, pr_curve, summarize, DEFAULT_TOL_FRAC};
use boundkit::imagecore::{AnnotationSet, ImageGrid, Mask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matching_equals_augmenting_path_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..200 {
        let (w, h) = (rng.random_range(1..=15), rng.random_range(1..=15));
        let (dp, dg) = (rng.random_range(0.05..0.6), rng.random_range(0.05..0.6));
        let pred = Mask::from_fn(w, h, |_, _| rng.random_bool(dp)).unwrap();
        let gt = Mask::from_fn(w, h, |_, _| rng.random_bool(dg)).unwrap();
        let tol = rng.random_range(0.01..0.25);
        let m = match_boundaries(&pred, &gt, tol);
        assert_eq!(m.count, kuhn_oracle(&pred, &gt, tol), "case {case}");
        assert_eq!(m.matched_pred.count(), m.count);
        assert_eq!(m.matched_gt.count(), m.count);
        let back = match_boundaries(&gt, &pred, tol);
        assert_eq!(back.count, m.count);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn raising_threshold_never_adds_predictions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pb = ImageGrid::from_fn(12, 10, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let gt = Mask::from_fn(12, 10, |_, _| rng.random_bool(0.2)).unwrap();
        let ann = AnnotationSet::new(12, 10, vec![gt], None).unwrap();
        let c = pr_curve(&pb, &ann, &default_thresholds(), 0.1).unwrap();
        for pair in c.points.windows(2) {
            prop_assert!(pair[1].counts.n_pred <= pair[0].counts.n_pred);
        }
    }

    #[test]
    fn ods_never_exceeds_ois(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut curves = Vec::new();
        for _ in 0..4 {
            let gt = Mask::from_fn(14, 14, |x, y| (x + 2 * y) % 7 == 0).unwrap();
            let noise = rng.random_range(0.1..0.6);
            let pb = ImageGrid::from_fn(14, 14, |x, y| {
                let base: f64 = if gt.get(x, y) { 0.7 } else { 0.1 };
                (base + rng.random_range(-noise..noise)).clamp(0.0, 1.0)
            })
            .unwrap();
            let ann = AnnotationSet::new(14, 14, vec![gt], None).unwrap();
            curves.push(pr_curve(&pb, &ann, &default_thresholds(), DEFAULT_TOL_FRAC * 8.0).unwrap());
        }
        let s = summarize(&curves).unwrap();
        prop_assert!(s.ods_f <= s.ois_f + 1e-12);
        prop_assert!((0.0..=1.0).contains(&s.ap));
    }
}
