use std::collections::VecDeque;

use crate::imagecore::Mask;

/// Instances with at most this many boundary pixels (both sides) are matched exactly.
pub const EXACT_MATCH_LIMIT: usize = 5000;

/// One-to-one correspondence between predicted and ground-truth pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub matched_pred: Mask,
    pub matched_gt: Mask,
    /// Matched pairs; equal to the count of either mask.
    pub count: usize,
}

/// Match radius in pixels for a fraction of the image diagonal.
pub fn match_radius(width: usize, height: usize, tol_frac: f64) -> f64 {
    tol_frac * ((width * width + height * height) as f64).sqrt()
}

/// Bipartite graph: for each pred pixel, the gt pixels within `radius`,
/// nearest first (ties by index).
fn candidates(pred: &Mask, gt: &Mask, radius: f64) -> (Vec<usize>, Vec<usize>, Vec<Vec<(i64, usize)>>) {
    let w = pred.width();
    let h = pred.height();
    let p: Vec<usize> = pred.ones().collect();
    let g: Vec<usize> = gt.ones().collect();
    let mut gt_slot = vec![usize::MAX; w * h];
    for (k, &j) in g.iter().enumerate() {
        gt_slot[j] = k;
    }
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let adj = p
        .iter()
        .map(|&i| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let mut v = Vec::new();
            for ny in (y - r).max(0)..=(y + r).min(h as i64 - 1) {
                for nx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                    let d2 = (nx - x).pow(2) + (ny - y).pow(2);
                    if d2 as f64 <= r2 {
                        let s = gt_slot[ny as usize * w + nx as usize];
                        if s != usize::MAX {
                            v.push((d2, s));
                        }
                    }
                }
            }
            v.sort();
            v
        })
        .collect();
    (p, g, adj)
}

/// Maximum-cardinality matching by Hopcroft-Karp. Returns `pair_left`.
pub fn hopcroft_karp(n_right: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let n_left = adj.len();
    let mut pair_l: Vec<Option<usize>> = vec![None; n_left];
    let mut pair_r: Vec<Option<usize>> = vec![None; n_right];
    let mut dist = vec![u32::MAX; n_left];
    loop {
        // layered BFS from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if pair_l[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match pair_r[v] {
                    None => found = true,
                    Some(u2) if dist[u2] == u32::MAX => {
                        dist[u2] = dist[u] + 1;
                        queue.push_back(u2);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }
        // iterative DFS along the layers
        let mut next = vec![0usize; n_left];
        for root in 0..n_left {
            if pair_l[root].is_some() {
                continue;
            }
            let mut stack = vec![root];
            while let Some(&u) = stack.last() {
                if next[u] == adj[u].len() {
                    dist[u] = u32::MAX;
                    stack.pop();
                    continue;
                }
                let v = adj[u][next[u]];
                next[u] += 1;
                match pair_r[v] {
                    None => {
                        // augment along the stack
                        let mut v = v;
                        for &uu in stack.iter().rev() {
                            let prev = pair_l[uu];
                            pair_l[uu] = Some(v);
                            pair_r[v] = Some(uu);
                            match prev {
                                Some(p) => v = p,
                                None => break,
                            }
                        }
                        break;
                    }
                    Some(u2) if dist[u2] == dist[u] + 1 => stack.push(u2),
                    _ => {}
                }
            }
        }
    }
    pair_l
}

/// Greedy matching over all feasible pairs by increasing distance.
fn greedy(n_right: usize, adj: &[Vec<(i64, usize)>]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(i64, usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, v)| v.iter().map(move |&(d, r)| (d, u, r)))
        .collect();
    pairs.sort();
    let mut pair_l = vec![None; adj.len()];
    let mut used = vec![false; n_right];
    for (_, u, r) in pairs {
        if pair_l[u].is_none() && !used[r] {
            pair_l[u] = Some(r);
            used[r] = true;
        }
    }
    pair_l
}

/// Correspond predicted and ground-truth boundary pixels within
/// `tol_frac * diagonal`. Exact maximum matching up to [`EXACT_MATCH_LIMIT`]
/// pixels, greedy nearest-first beyond.
pub fn match_boundaries(pred: &Mask, gt: &Mask, tol_frac: f64) -> Matching {
    assert_eq!(pred.dims(), gt.dims(), "prediction and ground truth sizes differ");
    let (w, h) = pred.dims();
    let radius = match_radius(w, h, tol_frac);
    let (p, g, adj) = candidates(pred, gt, radius);
    let pair_l = if p.len() + g.len() <= EXACT_MATCH_LIMIT {
        let plain: Vec<Vec<usize>> = adj.iter().map(|v| v.iter().map(|e| e.1).collect()).collect();
        hopcroft_karp(g.len(), &plain)
    } else {
        greedy(g.len(), &adj)
    };
    let mut matched_pred = Mask::empty(w, h).expect("valid dims");
    let mut matched_gt = Mask::empty(w, h).expect("valid dims");
    let mut count = 0;
    for (u, r) in pair_l.iter().enumerate() {
        if let Some(r) = *r {
            matched_pred.set(p[u] % w, p[u] / w, true);
            matched_gt.set(g[r] % w, g[r] / w, true);
            count += 1;
        }
    }
    Matching {
        matched_pred,
        matched_gt,
        count,
    }
}
