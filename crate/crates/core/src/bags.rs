//! Positive bags and negative pixels for multiple-instance training.
//!
//! Every ground-truth boundary pixel anchors a bag made of the pixels that lie
//! within distance `d` of it and have no strictly closer ground-truth pixel.
//! A pixel is negative when it belongs to no bag and is not don't-care.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imagecore::{AnnotationSet, Mask};

/// Default bag radius in pixels.
pub const DEFAULT_BAG_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag {
    /// Pixel index of the ground-truth boundary pixel.
    pub anchor: usize,
    /// Member pixel indices in ascending order; always contains `anchor`.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagSet {
    width: usize,
    height: usize,
    bags: Vec<Bag>,
    negatives: Vec<usize>,
}

impl BagSet {
    /// Assemble a bag set, validating bag and partition invariants.
    pub fn new(width: usize, height: usize, bags: Vec<Bag>, mut negatives: Vec<usize>) -> Result<Self> {
        let n = width * height;
        let mut in_bag = vec![false; n];
        for bag in &bags {
            if bag.members.is_empty() {
                return Err(Error::EmptyBag { anchor: bag.anchor });
            }
            if bag.anchor >= n || bag.members.iter().any(|&m| m >= n) {
                return Err(Error::InvalidArgument(format!("bag {} indexes outside the image", bag.anchor)));
            }
            if !bag.members.contains(&bag.anchor) {
                return Err(Error::InvalidArgument(format!("bag {} does not contain its anchor", bag.anchor)));
            }
            for &m in &bag.members {
                in_bag[m] = true;
            }
        }
        negatives.sort_unstable();
        negatives.dedup();
        if let Some(&bad) = negatives.iter().find(|&&j| j >= n || in_bag[j]) {
            return Err(Error::InvalidArgument(format!("negative pixel {bad} is out of range or inside a bag")));
        }
        Ok(Self {
            width,
            height,
            bags,
            negatives,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }
    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }

    /// Pixels that are neither negative nor a bag member.
    pub fn ignored(&self) -> Vec<usize> {
        let mut covered = vec![false; self.width * self.height];
        for &j in &self.negatives {
            covered[j] = true;
        }
        for b in &self.bags {
            for &m in &b.members {
                covered[m] = true;
            }
        }
        covered.iter().enumerate().filter(|(_, &c)| !c).map(|(i, _)| i).collect()
    }

    /// Mask of bag anchors.
    pub fn anchors(&self) -> Mask {
        let mut m = Mask::empty(self.width, self.height).expect("bag set dims are valid");
        for b in &self.bags {
            m.set(b.anchor % self.width, b.anchor / self.width, true);
        }
        m
    }

    /// Serialize as `DIMS w h`, then `BAG ax ay : x1 y1 ...` and `NEG x y` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let xy = |i: usize| (i % self.width, i / self.width);
        writeln!(s, "DIMS {} {}", self.width, self.height).unwrap();
        for b in &self.bags {
            let (ax, ay) = xy(b.anchor);
            write!(s, "BAG {ax} {ay} :").unwrap();
            for &m in &b.members {
                let (x, y) = xy(m);
                write!(s, " {x} {y}").unwrap();
            }
            s.push('\n');
        }
        for &j in &self.negatives {
            let (x, y) = xy(j);
            writeln!(s, "NEG {x} {y}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Format(format!("bag file line {}: {msg}", line + 1));
        let mut dims = None;
        let mut bags = Vec::new();
        let mut negatives = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tok = line.split_whitespace();
            let kind = tok.next().unwrap_or_default();
            if kind == "DIMS" {
                let nums = parse_nums(tok).map_err(|m| bad(ln, &m))?;
                match nums.as_slice() {
                    [w, h] if *w > 0 && *h > 0 => dims = Some((*w, *h)),
                    _ => return Err(bad(ln, "DIMS needs two positive integers")),
                }
                continue;
            }
            let (w, h) = dims.ok_or_else(|| bad(ln, "DIMS must come first"))?;
            let index = |x: usize, y: usize| -> Result<usize> {
                if x >= w || y >= h {
                    return Err(bad(ln, "coordinate outside the image"));
                }
                Ok(y * w + x)
            };
            match kind {
                "BAG" => {
                    let rest: Vec<&str> = tok.collect();
                    let colon = rest
                        .iter()
                        .position(|&t| t == ":")
                        .ok_or_else(|| bad(ln, "missing ':'"))?;
                    let head = parse_nums(rest[..colon].iter().copied()).map_err(|m| bad(ln, &m))?;
                    let tail = parse_nums(rest[colon + 1..].iter().copied()).map_err(|m| bad(ln, &m))?;
                    if head.len() != 2 || tail.len() % 2 != 0 {
                        return Err(bad(ln, "malformed coordinates"));
                    }
                    let anchor = index(head[0], head[1])?;
                    let members = tail
                        .chunks_exact(2)
                        .map(|c| index(c[0], c[1]))
                        .collect::<Result<Vec<_>>>()?;
                    bags.push(Bag { anchor, members });
                }
                "NEG" => {
                    let nums = parse_nums(tok).map_err(|m| bad(ln, &m))?;
                    if nums.len() != 2 {
                        return Err(bad(ln, "NEG needs two coordinates"));
                    }
                    negatives.push(index(nums[0], nums[1])?);
                }
                other => return Err(bad(ln, &format!("unknown record {other:?}"))),
            }
        }
        let (w, h) = dims.ok_or_else(|| Error::Format("bag file has no DIMS line".into()))?;
        BagSet::new(w, h, bags, negatives)
    }
}

fn parse_nums<'a>(it: impl Iterator<Item = &'a str>) -> std::result::Result<Vec<usize>, String> {
    it.map(|t| t.parse::<usize>().map_err(|_| format!("not an integer: {t:?}")))
        .collect()
}

/// Pixels marked by at least `k_min` annotators and not don't-care.
pub fn consensus_positives(ann: &AnnotationSet, k_min: usize) -> Result<Mask> {
    if ann.annotators().is_empty() {
        return Err(Error::InvalidArgument("annotation set has no annotators".into()));
    }
    if k_min == 0 {
        return Err(Error::InvalidArgument("k_min must be at least 1".into()));
    }
    let (w, h) = ann.dims();
    let bits = (0..w * h)
        .map(|i| {
            let votes = ann.annotators().iter().filter(|a| a.at(i)).count();
            votes >= k_min && !ann.is_dontcare(i)
        })
        .collect();
    Mask::new(w, h, bits)
}

/// Build bags of radius `d` around every positive pixel.
///
/// A pixel joins the bag of each positive pixel at minimal Euclidean distance
/// from it, provided that distance is at most `d`; exact ties join every tied
/// bag. Don't-care pixels never join a bag and are never negative; a positive
/// pixel inside the don't-care mask anchors no bag.
pub fn build_bags(positives: &Mask, d: f64, dontcare: Option<&Mask>) -> Result<BagSet> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::InvalidArgument(format!("bag radius must be finite and >= 0, got {d}")));
    }
    let (w, h) = positives.dims();
    if let Some(dc) = dontcare {
        if dc.dims() != (w, h) {
            return Err(Error::DimensionMismatch("don't-care mask vs positives".into()));
        }
    }
    let is_dc = |i: usize| dontcare.is_some_and(|m| m.at(i));
    let anchor_ok = |x: usize, y: usize| positives.get(x, y) && !is_dc(y * w + x);

    let mut bag_of = vec![usize::MAX; w * h];
    let mut bags: Vec<Bag> = Vec::new();
    for i in positives.ones().filter(|&i| !is_dc(i)) {
        bag_of[i] = bags.len();
        bags.push(Bag {
            anchor: i,
            members: Vec::new(),
        });
    }

    let r = d.floor() as isize;
    let d2 = d * d;
    let mut negatives = Vec::new();
    let mut tied = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if is_dc(p) {
                continue;
            }
            // any positive outside the window is farther than d
            let mut best = i64::MAX;
            tied.clear();
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize || !anchor_ok(xx as usize, yy as usize) {
                        continue;
                    }
                    let dist2 = (dx * dx + dy * dy) as i64;
                    if dist2 as f64 > d2 {
                        continue;
                    }
                    if dist2 < best {
                        best = dist2;
                        tied.clear();
                    }
                    if dist2 == best {
                        tied.push(yy as usize * w + xx as usize);
                    }
                }
            }
            if tied.is_empty() {
                negatives.push(p);
            } else {
                for &a in &tied {
                    bags[bag_of[a]].members.push(p);
                }
            }
        }
    }
    BagSet::new(w, h, bags, negatives)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, pts: &[(usize, usize)]) -> Mask {
        let mut m = Mask::empty(w, h).unwrap();
        for &(x, y) in pts {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn unanimity_and_threshold() {
        let a = mask_from(3, 3, &[(1, 1)]);
        let b = mask_from(3, 3, &[(1, 1), (0, 0)]);
        let ann = AnnotationSet::new(3, 3, vec![a.clone(), a.clone(), b.clone()], None).unwrap();
        let p = consensus_positives(&ann, 3).unwrap();
        assert!(p.get(1, 1));
        assert!(!p.get(0, 0));
        let p2 = consensus_positives(&ann, 2).unwrap();
        assert!(!p2.get(0, 0), "one of three votes is below k_min = 2");
        assert!(consensus_positives(&ann, 1).unwrap().get(0, 0));
    }

    #[test]
    fn k_min_one_is_union_of_five_annotators() {
        let maps: Vec<Mask> = (0..5).map(|i| mask_from(6, 2, &[(i, 0), (5, 1)])).collect();
        let ann = AnnotationSet::new(6, 2, maps, None).unwrap();
        let p = consensus_positives(&ann, 1).unwrap();
        let expected = mask_from(6, 2, &[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (5, 1)]);
        assert_eq!(p, expected);
    }

    #[test]
    fn consensus_excludes_dontcare_and_rejects_empty() {
        let a = mask_from(2, 2, &[(0, 0), (1, 1)]);
        let dc = mask_from(2, 2, &[(1, 1)]);
        let ann = AnnotationSet::new(2, 2, vec![a], Some(dc)).unwrap();
        assert_eq!(consensus_positives(&ann, 1).unwrap(), mask_from(2, 2, &[(0, 0)]));
        let empty = AnnotationSet::new(2, 2, vec![], None).unwrap();
        assert!(consensus_positives(&empty, 1).is_err());
    }

    #[test]
    fn zero_radius_gives_singletons() {
        let pos = mask_from(5, 5, &[(2, 2)]);
        let bs = build_bags(&pos, 0.0, None).unwrap();
        assert_eq!(bs.bags().len(), 1);
        assert_eq!(bs.bags()[0].members, vec![12]);
        assert_eq!(bs.negatives().len(), 24);
    }

    #[test]
    fn no_positives_means_all_negative() {
        let pos = Mask::empty(4, 3).unwrap();
        let dc = mask_from(4, 3, &[(0, 0)]);
        let bs = build_bags(&pos, 1.0, Some(&dc)).unwrap();
        assert!(bs.bags().is_empty());
        assert_eq!(bs.negatives().len(), 11);
        assert_eq!(bs.ignored(), vec![0]);
    }

    #[test]
    fn ties_join_every_tied_bag() {
        // positives at (1,1) and (3,1): (2,1) is equidistant
        let pos = mask_from(5, 3, &[(1, 1), (3, 1)]);
        let bs = build_bags(&pos, 1.0, None).unwrap();
        let p = 1 * 5 + 2;
        assert!(bs.bags().iter().all(|b| b.members.contains(&p)));
        assert!(!bs.negatives().contains(&p));
    }

    #[test]
    fn dontcare_pixels_are_excluded_everywhere() {
        let pos = mask_from(4, 4, &[(1, 1), (2, 2)]);
        let dc = mask_from(4, 4, &[(2, 2), (1, 2)]);
        let bs = build_bags(&pos, 1.5, Some(&dc)).unwrap();
        assert_eq!(bs.bags().len(), 1);
        for b in bs.bags() {
            assert!(!b.members.contains(&(2 * 4 + 2)));
            assert!(!b.members.contains(&(2 * 4 + 1)));
        }
        assert_eq!(bs.ignored(), vec![9, 10]);
    }

    #[test]
    fn invalid_radius_and_empty_bag_rejected() {
        let pos = Mask::empty(2, 2).unwrap();
        assert!(build_bags(&pos, -1.0, None).is_err());
        assert!(build_bags(&pos, f64::NAN, None).is_err());
        let bad = BagSet::new(2, 2, vec![Bag { anchor: 0, members: vec![] }], vec![]);
        assert!(matches!(bad, Err(Error::EmptyBag { anchor: 0 })));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let pos = mask_from(4, 3, &[(1, 1), (3, 2)]);
        let bs = build_bags(&pos, 1.0, None).unwrap();
        let text = bs.to_text();
        assert!(text.starts_with("DIMS 4 3\nBAG 1 1 :"));
        assert!(text.contains("NEG 0 0\n"));
        assert_eq!(BagSet::from_text(&text).unwrap(), bs);
        assert!(BagSet::from_text("BAG 0 0 : 0 0").is_err());
        assert!(BagSet::from_text("DIMS 2 2\nBAG 0 0 0 0").is_err());
        assert!(BagSet::from_text("DIMS 2 2\nNEG 5 0").is_err());
        assert!(BagSet::from_text("DIMS 2 2\nBAG 0 0 : 0 0\nNEG 0 0").is_err());
    }
}
