use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::affinity::SparseAffinity;
use crate::error::{Error, Result};

/// Eigenvalues below this are reported as trivial (component indicators).
pub const TRIVIAL_EIGENVALUE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOptions {
    pub k: usize,
    /// Residual bound `||L u - lambda u||` for accepting a normalized-Laplacian pair.
    pub tol: f64,
    /// Budget of Lanczos steps over all restarts.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            k: 8,
            tol: 1e-10,
            max_iter: 20_000,
            seed: 0,
        }
    }
}

/// Smallest generalized eigenpairs of `(D - W) v = lambda D v`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEmbedding {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `v_k` with `v_k^T D v_k = 1`, one entry per node.
    pub vectors: Vec<Vec<f64>>,
    pub trivial: Vec<bool>,
    /// `||(D - W) v - lambda D v|| / ||D v||` per pair.
    pub residuals: Vec<f64>,
    /// Pixel grid of the nodes, if any.
    pub dims: Option<(usize, usize)>,
}

impl EigenEmbedding {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Indices of the pairs that are not flagged trivial.
    pub fn nontrivial(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k()).filter(|&i| !self.trivial[i])
    }
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
///
/// `diag` has length `m`, `off` length `m - 1`. Returns ascending eigenvalues and
/// the matrix of eigenvectors stored column-major (`z[col * m + row]`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::DimensionMismatch("tridiagonal sizes".into()));
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residuals: vec![e[l].abs()],
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        let t = zi1[k];
                        zi1[k] = s * zi[k] + c * t;
                        zi[k] = c * zi[k] - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&i| d[i]).collect();
    let mut vecs = Vec::with_capacity(n * n);
    for &i in &order {
        vecs.extend_from_slice(&z[i * n..(i + 1) * n]);
    }
    Ok((vals, vecs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `L = I - D^{-1/2} W D^{-1/2}` applied matrix-free.
struct NormalizedLaplacian<'a> {
    w: &'a SparseAffinity,
    inv_sqrt_d: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> NormalizedLaplacian<'a> {
    fn new(w: &'a SparseAffinity) -> Result<Self> {
        let d = w.degrees();
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateGraph("node with zero degree".into()));
        }
        Ok(Self {
            w,
            inv_sqrt_d: d.iter().map(|v| 1.0 / v.sqrt()).collect(),
            scratch: vec![0.0; w.n()],
        })
    }

    fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        for ((s, xi), di) in self.scratch.iter_mut().zip(x).zip(&self.inv_sqrt_d) {
            *s = xi * di;
        }
        self.w.matvec(&self.scratch, y);
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.inv_sqrt_d) {
            *yi = xi - di * *yi;
        }
    }
}

/// Remove components along `basis` (orthonormal), two passes.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
}

struct LanczosRun {
    /// Ritz values ascending, with vectors and residual norms, for the
    /// leading converged prefix.
    converged: Vec<(f64, Vec<f64>)>,
    /// Residual of the first Ritz pair that failed, if any.
    first_failure: Option<f64>,
    steps: usize,
}

fn lanczos_run(
    op: &mut NormalizedLaplacian<'_>,
    locked: &[Vec<f64>],
    steps: usize,
    want: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LanczosRun> {
    let n = op.w.n();
    let free = n - locked.len();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    orthogonalize(&mut q, locked);
    let nq = norm(&q);
    if nq == 0.0 {
        return Err(Error::DegenerateGraph("start vector lies in the locked space".into()));
    }
    q.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut exhausted = false;
    let mut residual_beta = 0.0;
    let m = steps.min(free);
    for j in 0..m {
        op.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        if b <= 1e-12 || j + 1 == free {
            // invariant subspace
            exhausted = true;
            residual_beta = 0.0;
            break;
        }
        if j + 1 == m {
            residual_beta = b;
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let size = alpha.len();
    let (theta, z) = tridiagonal_eigen(&alpha, &beta[..size - 1])?;

    let mut converged = Vec::new();
    let mut first_failure = None;
    let mut lu = vec![0.0; n];
    for (i, &th) in theta.iter().enumerate().take(want) {
        let zi = &z[i * size..(i + 1) * size];
        if residual_beta * zi[size - 1].abs() > tol * 10.0 && !exhausted {
            first_failure = Some(residual_beta * zi[size - 1].abs());
            break;
        }
        let mut u = vec![0.0; n];
        for (c, b) in zi.iter().zip(&basis) {
            axpy(*c, b, &mut u);
        }
        orthogonalize(&mut u, locked);
        let nu = norm(&u);
        u.iter_mut().for_each(|v| *v /= nu);
        op.apply(&u, &mut lu);
        let rq = dot(&u, &lu);
        axpy(-rq, &u, &mut lu);
        let res = norm(&lu);
        if res > tol {
            first_failure = Some(res);
            break;
        }
        debug_assert!((th - rq).abs() <= 1e-6 + tol);
        converged.push((rq, u));
    }
    Ok(LanczosRun {
        converged,
        first_failure,
        steps: size,
    })
}

fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() >= 1e-8 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `k` smallest generalized eigenpairs of the affinity's Normalized-Cuts problem.
///
/// Works on `L = D^{-1/2}(D - W)D^{-1/2}` with full-reorthogonalization Lanczos.
/// Converged Ritz pairs are locked and the iteration restarts orthogonal to
/// them; indicators of connected components are locked up front as exact
/// null vectors. A final run deflated against all locked vectors checks that
/// no smaller eigenvalue was skipped.
pub fn generalized_eigs(w: &SparseAffinity, opts: &EigenOptions) -> Result<EigenEmbedding> {
    let n = w.n();
    if opts.k == 0 || opts.k >= n {
        return Err(Error::InvalidArgument(format!("need 0 < k < n, got k={} n={n}", opts.k)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let k = opts.k;
    let mut op = NormalizedLaplacian::new(w)?;
    let sqrt_d: Vec<f64> = op.inv_sqrt_d.iter().map(|v| 1.0 / v).collect();

    let mut locked: Vec<(f64, Vec<f64>)> = Vec::new();
    let comp = w.components();
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    for c in 0..n_comp.min(k) {
        let mut u: Vec<f64> = (0..n).map(|i| if comp[i] == c { sqrt_d[i] } else { 0.0 }).collect();
        let nu = norm(&u);
        u.iter_mut().for_each(|v| *v /= nu);
        locked.push((0.0, u));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut used = 0;
    let mut steps = (3 * k).max(40);
    while locked.len() < n && !(locked.len() >= k && n_comp >= k) {
        let vecs: Vec<Vec<f64>> = locked.iter().map(|p| p.1.clone()).collect();
        let free = n - vecs.len();
        let filling = locked.len() < k;
        let want = if filling { k - locked.len() } else { 1 };
        let run = lanczos_run(&mut op, &vecs, steps, want, opts.tol, &mut rng)?;
        used += run.steps;
        let mut progressed = false;
        if filling {
            progressed = !run.converged.is_empty();
            locked.extend(run.converged);
        } else if let Some((th, u)) = run.converged.into_iter().next() {
            let (imax, &(cutoff, _)) = locked
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                .expect("locked is non-empty");
            if th < cutoff - opts.tol {
                // a smaller eigenvalue was skipped earlier
                locked[imax] = (th, u);
                progressed = true;
            } else {
                break;
            }
        }
        if !progressed {
            if steps >= free {
                return Err(Error::NoConvergence {
                    iterations: used,
                    residuals: run.first_failure.into_iter().collect(),
                });
            }
            steps = (steps * 2).min(free);
        }
        if used > opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: used,
                residuals: run.first_failure.into_iter().collect(),
            });
        }
    }
    locked.sort_by(|a, b| a.0.total_cmp(&b.0));
    locked.truncate(k);

    let mut eigenvalues = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut trivial = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let degrees = w.degrees();
    let mut wv = vec![0.0; n];
    for (lam, u) in locked {
        let lam = if lam.abs() < 1e-14 { 0.0 } else { lam };
        let mut v: Vec<f64> = u.iter().zip(&op.inv_sqrt_d).map(|(a, b)| a * b).collect();
        fix_sign(&mut v);
        w.matvec(&v, &mut wv);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let dv = degrees[i] * v[i];
            let r = dv - wv[i] - lam * dv;
            num += r * r;
            den += dv * dv;
        }
        residuals.push((num / den).sqrt());
        trivial.push(lam.abs() < TRIVIAL_EIGENVALUE);
        eigenvalues.push(lam);
        vectors.push(v);
    }
    Ok(EigenEmbedding {
        eigenvalues,
        vectors,
        trivial,
        residuals,
        dims: w.dims(),
    })
}
