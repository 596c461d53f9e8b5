use crate::error::{Error, Result};
use crate::imagecore::ImageGrid;
use crate::scalar::Scalar;

/// Floor applied to 4-neighbour weights so every pixel keeps a path to its grid neighbours.
pub const NEIGHBOUR_FLOOR: f64 = 1e-6;

/// Symmetric sparse affinity in compressed-row form. The diagonal is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Grid size when nodes are pixels.
    dims: Option<(usize, usize)>,
    radius: usize,
}

impl SparseAffinity {
    /// Build from off-diagonal entries `(i, j, w)`; each undirected edge may be
    /// given once in either orientation. `w_ii = 1` is added.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("affinity needs at least one node".into()));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidArgument(format!("edge weight {w} outside (0, 1]")));
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            if r.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::InvalidArgument("duplicate edge".into()));
            }
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
            dims: None,
            radius: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, weight)` pairs of row `i`, in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    /// All weights multiplied by `c`, diagonal included.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            vals: self.vals.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// `y = W x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, w)| w * x[j]).sum();
        }
    }

    /// Connected components over positive off-diagonal weights; labels are
    /// numbered in order of their smallest node.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for (j, w) in self.row(i) {
                    if w > 0.0 && label[j] == usize::MAX {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// `round(num / den)` with halves away from zero, `den > 0`.
fn div_round_half_away(num: i64, den: i64) -> i64 {
    let q = (2 * num.abs() + den) / (2 * den);
    if num < 0 {
        -q
    } else {
        q
    }
}

/// Pixels of the integer segment from `a` to `b`, endpoints included:
/// `a + round(t * (b - a) / n)` for `t = 0..=n`, `n = max(|dx|, |dy|)`.
pub fn line_pixels(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (ax, ay) = (a.0 as i64, a.1 as i64);
    let (dx, dy) = (b.0 as i64 - ax, b.1 as i64 - ay);
    let n = dx.abs().max(dy.abs());
    if n == 0 {
        return vec![a];
    }
    (0..=n)
        .map(|t| {
            (
                (ax + div_round_half_away(t * dx, n)) as usize,
                (ay + div_round_half_away(t * dy, n)) as usize,
            )
        })
        .collect()
}

/// Intervening-contour affinity: `w_ij = exp(-max_{p on segment(i, j)} pb(p) / sigma)`
/// for pixel pairs within Chebyshev distance `r`. Segments run from the lower
/// to the higher pixel index so `w_ij = w_ji` by construction.
pub fn intervening_contour<T: Scalar>(pb: &ImageGrid<T>, r: usize, sigma: f64) -> Result<SparseAffinity> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("intervening-contour scale must be > 0, got {sigma}")));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("connection radius must be at least 1".into()));
    }
    if pb.channels() != 1 {
        return Err(Error::InvalidArgument("boundary map must have one channel".into()));
    }
    let (w, h) = pb.dims();
    let vals: Vec<f64> = pb.data().iter().map(|v| v.as_f64()).collect();
    if vals.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("boundary map values must lie in [0, 1]".into()));
    }
    let ri = r as i64;
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut wts = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for ny in (y as i64 - ri).max(0)..=(y as i64 + ri).min(h as i64 - 1) {
                for nx in (x as i64 - ri).max(0)..=(x as i64 + ri).min(w as i64 - 1) {
                    let (nx, ny) = (nx as usize, ny as usize);
                    let j = ny * w + nx;
                    if i == j {
                        cols.push(j);
                        wts.push(1.0);
                        continue;
                    }
                    let (p, q) = if i < j { ((x, y), (nx, ny)) } else { ((nx, ny), (x, y)) };
                    let m = line_pixels(p, q)
                        .into_iter()
                        .map(|(lx, ly)| vals[ly * w + lx])
                        .fold(0.0, f64::max);
                    let mut wij = (-m / sigma).exp();
                    if nx.abs_diff(x) + ny.abs_diff(y) == 1 {
                        wij = wij.max(NEIGHBOUR_FLOOR);
                    }
                    cols.push(j);
                    wts.push(wij);
                }
            }
            row_ptr.push(cols.len());
        }
    }
    Ok(SparseAffinity {
        n: w * h,
        row_ptr,
        cols,
        vals: wts,
        dims: Some((w, h)),
        radius: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_gives_unit_weights() {
        let pb = ImageGrid::<f64>::zeros(5, 4, 1).unwrap();
        let a = intervening_contour(&pb, 2, 0.1).unwrap();
        assert!(a.vals.iter().all(|&v| v == 1.0));
        // corner pixel sees a 3x3 block
        assert_eq!(a.row(0).count(), 9);
    }

    #[test]
    fn vertical_wall() {
        let pb = ImageGrid::from_fn(4, 3, |x, _| if x == 2 { 1.0f64 } else { 0.0 }).unwrap();
        let a = intervening_contour(&pb, 3, 0.1).unwrap();
        assert_eq!(a.get(0, 3), (-10.0f64).exp());
        assert_eq!(a.get(0, 1), 1.0);
    }

    #[test]
    fn line_rounding() {
        assert_eq!(line_pixels((0, 0), (2, 1)), vec![(0, 0), (1, 1), (2, 1)]);
        assert_eq!(line_pixels((2, 1), (0, 0)), vec![(2, 1), (1, 0), (0, 0)]);
        assert_eq!(line_pixels((3, 3), (3, 3)), vec![(3, 3)]);
        assert_eq!(div_round_half_away(-3, 2), -2);
        assert_eq!(div_round_half_away(3, 2), 2);
        assert_eq!(div_round_half_away(1, 3), 0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let pb = ImageGrid::<f64>::zeros(3, 3, 1).unwrap();
        assert!(intervening_contour(&pb, 1, 0.0).is_err());
        assert!(intervening_contour(&pb, 0, 0.1).is_err());
        let bad = ImageGrid::filled(3, 3, 1, 1.5f64).unwrap();
        assert!(intervening_contour(&bad, 1, 0.1).is_err());
    }

    #[test]
    fn components_and_degrees() {
        let a = SparseAffinity::from_edges(5, &[(0, 1, 0.5), (3, 4, 1.0)]).unwrap();
        assert_eq!(a.components(), vec![0, 0, 1, 2, 2]);
        assert_eq!(a.degrees(), vec![1.5, 1.5, 1.0, 2.0, 2.0]);
        assert!(SparseAffinity::from_edges(2, &[(0, 1, 0.5), (1, 0, 0.5)]).is_err());
        assert!(SparseAffinity::from_edges(2, &[(0, 1, 0.0)]).is_err());
    }
}
