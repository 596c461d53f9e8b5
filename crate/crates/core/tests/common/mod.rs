//! Independent reference implementations shared by the oracle tests and the
//! acceptance run.
#![allow(dead_code)]

use boundkit::crf::{pairwise_kernel, FeatureImage, PairwiseParams, UnaryField};
use boundkit::imagecore::{ImageGrid, Mask};
use boundkit::ncuts::SparseAffinity;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Maximum bipartite matching by simple augmenting paths over all pairs
/// within the radius.
pub fn kuhn_oracle(pred: &Mask, gt: &Mask, tol_frac: f64) -> usize {
    let (w, h) = pred.dims();
    let r = tol_frac * ((w * w + h * h) as f64).sqrt();
    let p: Vec<(f64, f64)> = pred.ones().map(|i| ((i % w) as f64, (i / w) as f64)).collect();
    let g: Vec<(f64, f64)> = gt.ones().map(|i| ((i % w) as f64, (i / w) as f64)).collect();
    let ok = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) <= r * r;
    let mut owner: Vec<Option<usize>> = vec![None; g.len()];
    fn augment(
        u: usize,
        p: &[(f64, f64)],
        g: &[(f64, f64)],
        ok: &dyn Fn((f64, f64), (f64, f64)) -> bool,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for v in 0..g.len() {
            if ok(p[u], g[v]) && !seen[v] {
                seen[v] = true;
                if owner[v].is_none() || augment(owner[v].unwrap(), p, g, ok, seen, owner) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let mut count = 0;
    for u in 0..p.len() {
        let mut seen = vec![false; g.len()];
        if augment(u, &p, &g, &ok, &mut seen, &mut owner) {
            count += 1;
        }
    }
    count
}

pub fn random_tree_graph(rng: &mut ChaCha8Rng, n: usize, offset: usize, edges: &mut Vec<(usize, usize, f64)>) {
    let mut seen = std::collections::BTreeSet::new();
    for i in 1..n {
        let p = rng.random_range(0..i);
        seen.insert((p, i));
        edges.push((offset + p, offset + i, rng.random_range(0.01..=1.0)));
    }
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (a.min(b), a.max(b));
        if a != b && seen.insert((a, b)) {
            edges.push((offset + a, offset + b, rng.random_range(0.01..=1.0)));
        }
    }
}

pub fn dense_oracle(a: &SparseAffinity) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.n();
    let w = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let d: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let dij = if i == j { d[i] } else { 0.0 };
        (dij - w[(i, j)]) / (d[i] * d[j]).sqrt()
    });
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])] / d[r].sqrt());
    (vals, vecs)
}

/// Max of `pb` along the segment, sampled with floating-point rounding.
pub fn line_max_oracle(pb: &ImageGrid<f64>, a: (usize, usize), b: (usize, usize)) -> f64 {
    let (p, q) = if a.1 * pb.width() + a.0 <= b.1 * pb.width() + b.0 { (a, b) } else { (b, a) };
    let dx = q.0 as f64 - p.0 as f64;
    let dy = q.1 as f64 - p.1 as f64;
    let n = dx.abs().max(dy.abs()) as usize;
    let mut m = pb.get(p.0, p.1);
    for t in 1..=n {
        let x = p.0 as f64 + (t as f64 * dx / n as f64).round();
        let y = p.1 as f64 + (t as f64 * dy / n as f64).round();
        m = m.max(pb.get(x as usize, y as usize));
    }
    m
}

pub fn random_case(rng: &mut ChaCha8Rng, w: usize, h: usize, labels: usize) -> (UnaryField, FeatureImage, PairwiseParams) {
    let raw: Vec<f64> = (0..w * h * labels).map(|_| rng.random_range(0.05..1.0)).collect();
    let u = UnaryField::normalized(ImageGrid::new(w, h, labels, raw).unwrap()).unwrap();
    let feat = FeatureImage::new(w, h, 3, (0..w * h * 3).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap();
    let pp = PairwiseParams {
        w1: rng.random_range(0.5..5.0),
        w2: rng.random_range(0.5..3.0),
        sigma_alpha: rng.random_range(1.0..10.0),
        sigma_beta: rng.random_range(5.0..80.0),
        sigma_gamma: rng.random_range(0.5..3.0),
        appearance_scale: 255.0,
    };
    (u, feat, pp)
}

/// Straight transcription of one parallel update with explicit label sums.
pub fn naive_step(u: &UnaryField, q: &[f64], feat: &FeatureImage, pp: &PairwiseParams) -> Vec<f64> {
    let (n, l) = (u.len(), u.labels());
    let mut out = vec![0.0; n * l];
    for i in 0..n {
        let mut unnorm = vec![0.0; l];
        for lab in 0..l {
            let mut pair = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let mut other = 0.0;
                for lp in 0..l {
                    if lp != lab {
                        other += q[j * l + lp];
                    }
                }
                pair += pairwise_kernel(i, j, feat, pp) * other;
            }
            unnorm[lab] = (-(-u.row(i)[lab].ln()) - pair).exp();
        }
        let z: f64 = unnorm.iter().sum();
        for lab in 0..l {
            out[i * l + lab] = unnorm[lab] / z;
        }
    }
    out
}

pub fn brute_energy(lab: &[usize], u: &UnaryField, feat: &FeatureImage, pp: &PairwiseParams) -> f64 {
    let mut e = 0.0;
    for i in 0..lab.len() {
        e -= u.row(i)[lab[i]].ln();
        for j in 0..lab.len() {
            if i != j && lab[i] != lab[j] {
                // ordered pairs counted twice
                e += 0.5 * pairwise_kernel(i, j, feat, pp);
            }
        }
    }
    e
}
