use serde::{Deserialize, Serialize};

use super::matching::match_boundaries;
use super::nms::nms_thin;
use crate::error::{Error, Result};
use crate::imagecore::{AnnotationSet, ImageGrid, Mask};
use crate::scalar::Scalar;

/// Matching slack as a fraction of the image diagonal.
pub const DEFAULT_TOL_FRAC: f64 = 0.0075;

/// 0.01, 0.02, ..., 0.99.
pub fn default_thresholds() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PrCounts {
    pub tp_pred: usize,
    pub n_pred: usize,
    pub tp_gt: usize,
    pub n_gt: usize,
}

impl PrCounts {
    /// 1 when nothing is predicted.
    pub fn precision(&self) -> f64 {
        if self.n_pred == 0 {
            1.0
        } else {
            self.tp_pred as f64 / self.n_pred as f64
        }
    }

    /// 1 when there is nothing to recall.
    pub fn recall(&self) -> f64 {
        if self.n_gt == 0 {
            1.0
        } else {
            self.tp_gt as f64 / self.n_gt as f64
        }
    }

    pub fn f_measure(&self) -> f64 {
        f_measure(self.precision(), self.recall())
    }
}

impl std::ops::AddAssign for PrCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp_pred += o.tp_pred;
        self.n_pred += o.n_pred;
        self.tp_gt += o.tp_gt;
        self.n_gt += o.n_gt;
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub counts: PrCounts,
}

/// Counts per threshold, thresholds strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.threshold)
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty()
        || thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0))
        || thresholds.windows(2).any(|p| p[0] >= p[1])
    {
        return Err(Error::InvalidArgument("thresholds must be increasing values in (0, 1)".into()));
    }
    Ok(())
}

/// Counts of a binary prediction against every annotator. A predicted pixel
/// is correct if any annotator's boundary takes it; recall sums over
/// annotators. Pixels in the don't-care mask are dropped from both sides.
pub fn evaluate_binary(pred: &Mask, ann: &AnnotationSet, tol_frac: f64) -> PrCounts {
    let pred = match ann.dontcare() {
        Some(dc) => pred.minus(dc),
        None => pred.clone(),
    };
    let (w, h) = pred.dims();
    let mut any = Mask::empty(w, h).expect("valid dims");
    let mut c = PrCounts {
        n_pred: pred.count(),
        ..Default::default()
    };
    for gt in ann.annotators() {
        let gt = match ann.dontcare() {
            Some(dc) => gt.minus(dc),
            None => gt.clone(),
        };
        let m = match_boundaries(&pred, &gt, tol_frac);
        for i in m.matched_pred.ones() {
            any.set(i % w, i / w, true);
        }
        c.tp_gt += m.count;
        c.n_gt += gt.count();
    }
    c.tp_pred = any.count();
    c
}

/// Precision/recall counts of the thinned map at each threshold.
pub fn pr_curve<T: Scalar>(pb: &ImageGrid<T>, ann: &AnnotationSet, thresholds: &[f64], tol_frac: f64) -> Result<PrCurve> {
    check_thresholds(thresholds)?;
    if !(tol_frac > 0.0) {
        return Err(Error::InvalidArgument("matching tolerance must be positive".into()));
    }
    if pb.channels() != 1 || pb.dims() != ann.dims() {
        return Err(Error::DimensionMismatch("boundary map and annotations differ in size".into()));
    }
    let thin = nms_thin(pb);
    let points = thresholds
        .iter()
        .map(|&t| PrPoint {
            threshold: t,
            counts: evaluate_binary(&Mask::threshold(&thin, T::lit(t)), ann, tol_frac),
        })
        .collect();
    Ok(PrCurve { points })
}

/// Dataset-level scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub ods_f: f64,
    pub ods_threshold: f64,
    pub ois_f: f64,
    pub ap: f64,
    /// Summed counts per threshold.
    pub dataset: PrCurve,
}

/// Mean over recall levels 0, 0.01, ..., 1 of the best precision reached at
/// or above each level (0 where the level is never reached).
pub fn average_precision(curve: &PrCurve) -> f64 {
    let pr: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.counts.precision(), p.counts.recall())).collect();
    let total: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            pr.iter()
                .filter(|&&(_, rr)| rr >= r - 1e-12)
                .map(|&(p, _)| p)
                .fold(0.0, f64::max)
        })
        .sum();
    total / 101.0
}

/// ODS, OIS and AP over per-image curves sharing one threshold grid.
pub fn summarize(curves: &[PrCurve]) -> Result<BenchSummary> {
    let first = curves.first().ok_or_else(|| Error::InvalidArgument("no curves to summarize".into()))?;
    let grid: Vec<f64> = first.thresholds().collect();
    if curves.iter().any(|c| !c.thresholds().eq(grid.iter().copied())) {
        return Err(Error::InvalidArgument("curves use different thresholds".into()));
    }
    let mut sums = vec![PrCounts::default(); grid.len()];
    for c in curves {
        for (s, p) in sums.iter_mut().zip(&c.points) {
            *s += p.counts;
        }
    }
    let dataset = PrCurve {
        points: grid
            .iter()
            .zip(&sums)
            .map(|(&threshold, &counts)| PrPoint { threshold, counts })
            .collect(),
    };
    let best = |pts: &[PrPoint]| {
        pts.iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bf), (i, p)| {
                let f = p.counts.f_measure();
                if f > bf {
                    (i, f)
                } else {
                    (bi, bf)
                }
            })
    };
    let (ods_i, ods_f) = best(&dataset.points);
    let mut ois = PrCounts::default();
    for c in curves {
        ois += c.points[best(&c.points).0].counts;
    }
    Ok(BenchSummary {
        ods_f,
        ods_threshold: grid[ods_i],
        ois_f: ois.f_measure(),
        ap: average_precision(&dataset),
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(w: usize, h: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| (x == 2 || x == w - 3) && (2..h - 2).contains(&y) || (y == 2 || y == h - 3) && (2..w - 2).contains(&x)).unwrap()
    }

    #[test]
    fn perfect_detector() {
        let gt = ring(16, 12);
        let ann = AnnotationSet::new(16, 12, vec![gt.clone()], None).unwrap();
        let pb: ImageGrid<f64> = gt.to_grid();
        let c = pr_curve(&pb, &ann, &default_thresholds(), DEFAULT_TOL_FRAC).unwrap();
        assert!(c.points.iter().all(|p| p.counts.tp_pred == p.counts.n_pred && p.counts.tp_gt == p.counts.n_gt));
        let s = summarize(&[c]).unwrap();
        assert_eq!((s.ods_f, s.ois_f, s.ap), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_convention() {
        let ann = AnnotationSet::new(8, 8, vec![ring(8, 8)], None).unwrap();
        let c = evaluate_binary(&Mask::empty(8, 8).unwrap(), &ann, 0.01);
        assert_eq!((c.precision(), c.recall()), (1.0, 0.0));
        assert_eq!(c.f_measure(), 0.0);
    }

    #[test]
    fn two_annotators_one_pixel_apart() {
        // tolerance 0.1 * diag(10, 10) = 1.41 px
        let a = Mask::from_fn(10, 10, |x, y| x == 4 && y < 5).unwrap();
        let b = Mask::from_fn(10, 10, |x, y| x == 5 && y < 5).unwrap();
        let ann = AnnotationSet::new(10, 10, vec![a.clone(), b], None).unwrap();
        let pred = Mask::from_fn(10, 10, |x, y| x == 4 && y < 3 || x == 9 && y == 9).unwrap();
        let c = evaluate_binary(&pred, &ann, 0.1);
        assert_eq!(
            c,
            PrCounts {
                tp_pred: 3,
                n_pred: 4,
                tp_gt: 6,
                n_gt: 10
            }
        );
    }

    #[test]
    fn dontcare_pixels_dropped() {
        let gt = Mask::from_fn(6, 6, |x, _| x == 2).unwrap();
        let dc = Mask::from_fn(6, 6, |_, y| y < 2).unwrap();
        let ann = AnnotationSet::new(6, 6, vec![gt.clone()], Some(dc)).unwrap();
        let pred = Mask::from_fn(6, 6, |x, _| x == 4).unwrap();
        let c = evaluate_binary(&pred, &ann, 0.01);
        assert_eq!((c.n_pred, c.n_gt, c.tp_pred), (4, 4, 0));
    }

    #[test]
    fn thresholds_validated() {
        let ann = AnnotationSet::new(4, 4, vec![Mask::empty(4, 4).unwrap()], None).unwrap();
        let pb = ImageGrid::<f64>::zeros(4, 4, 1).unwrap();
        assert!(pr_curve(&pb, &ann, &[0.5, 0.4], 0.01).is_err());
        assert!(pr_curve(&pb, &ann, &[0.0], 0.01).is_err());
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn ap_of_single_point() {
        let c = PrCurve {
            points: vec![PrPoint {
                threshold: 0.5,
                counts: PrCounts {
                    tp_pred: 1,
                    n_pred: 2,
                    tp_gt: 1,
                    n_gt: 2,
                },
            }],
        };
        // levels 0..=0.5 reach precision 0.5, the rest 0
        assert!((average_precision(&c) - 0.5 * 51.0 / 101.0).abs() < 1e-15);
    }
}
