//! Dyadic squares, rectangles and cap partitions of the unit square.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Closed axis-aligned rectangle `[t0, t1] x [s0, s1]` in parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub t0: f64,
    pub t1: f64,
    pub s0: f64,
    pub s1: f64,
}

impl Rect {
    pub fn new(t0: f64, t1: f64, s0: f64, s1: f64) -> Self {
        Self { t0, t1, s0, s1 }
    }

    /// Square with lower-left corner `(a, b)` and side `side`.
    pub fn square(a: f64, b: f64, side: f64) -> Self {
        Self::new(a, a + side, b, b + side)
    }

    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn height(&self) -> f64 {
        self.s1 - self.s0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.t0 >= self.t0 && other.t1 <= self.t1 && other.s0 >= self.s0 && other.s1 <= self.s1
    }

    /// True when the interiors overlap.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.t0 < other.t1 && other.t0 < self.t1 && self.s0 < other.s1 && other.s0 < self.s1
    }
}

/// A dyadic square of `[0,1]^2`: level `m`, column `i` (the `t` index) and
/// row `j` (the `s` index), side `2^-m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicSquare {
    pub level: u32,
    pub i: u32,
    pub j: u32,
}

pub const MAX_LEVEL: u32 = 30;

impl DyadicSquare {
    pub fn new(level: u32, i: u32, j: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!("dyadic level {level} exceeds {MAX_LEVEL}")));
        }
        let n = 1u32 << level;
        if i >= n || j >= n {
            return Err(Error::InvalidParameter(format!("dyadic indices ({i}, {j}) out of range at level {level}")));
        }
        Ok(Self { level, i, j })
    }

    /// The whole unit square.
    pub fn unit() -> Self {
        Self { level: 0, i: 0, j: 0 }
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn rect(&self) -> Rect {
        let h = self.side();
        Rect::square(self.i as f64 * h, self.j as f64 * h, h)
    }

    /// Number of squares per axis at this level.
    pub fn per_axis(level: u32) -> u32 {
        1u32 << level
    }

    /// Half-open membership `[a, b) x [c, d)`, closed at the top/right edge of
    /// the unit square.
    pub fn contains(&self, t: f64, s: f64) -> bool {
        match Self::containing(self.level, t, s) {
            Some(sq) => sq == *self,
            None => false,
        }
    }

    /// The level-`level` square containing `(t, s)` under the half-open
    /// convention; `None` outside `[0,1]^2`.
    pub fn containing(level: u32, t: f64, s: f64) -> Option<Self> {
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&s) {
            return None;
        }
        let n = Self::per_axis(level);
        let idx = |x: f64| -> u32 {
            let k = (x * n as f64).floor() as i64;
            k.clamp(0, n as i64 - 1) as u32
        };
        Some(Self { level, i: idx(t), j: idx(s) })
    }

    /// Ancestor at a coarser (or equal) level.
    pub fn ancestor(&self, level: u32) -> Option<Self> {
        if level > self.level {
            return None;
        }
        let shift = self.level - level;
        Some(Self { level, i: self.i >> shift, j: self.j >> shift })
    }

    /// True when `other` is contained in `self` (including equality).
    pub fn contains_square(&self, other: &DyadicSquare) -> bool {
        other.ancestor(self.level) == Some(*self)
    }

    /// Intersection of two dyadic squares: the finer one if nested.
    pub fn intersect(&self, other: &DyadicSquare) -> Option<DyadicSquare> {
        if self.contains_square(other) {
            Some(*other)
        } else if other.contains_square(self) {
            Some(*self)
        } else {
            None
        }
    }

    /// All descendants at a finer (or equal) level, row-major in `(i, j)`.
    pub fn descendants(&self, level: u32) -> Vec<DyadicSquare> {
        if level < self.level {
            return Vec::new();
        }
        let k = 1u32 << (level - self.level);
        let mut out = Vec::with_capacity((k * k) as usize);
        for di in 0..k {
            for dj in 0..k {
                out.push(DyadicSquare { level, i: self.i * k + di, j: self.j * k + dj });
            }
        }
        out
    }
}

/// A set of same-level dyadic caps with pairwise disjoint interiors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapPartition {
    pub level: u32,
    pub caps: Vec<DyadicSquare>,
}

impl CapPartition {
    /// All `4^level` caps of the unit square.
    pub fn full(level: u32) -> Self {
        Self { level, caps: DyadicSquare::unit().descendants(level) }
    }

    /// The level-`level` caps that meet the given support squares.
    pub fn covering(support: &[DyadicSquare], level: u32) -> Self {
        let mut caps: Vec<DyadicSquare> = support
            .iter()
            .flat_map(|sq| {
                if sq.level >= level {
                    sq.ancestor(level).into_iter().collect::<Vec<_>>()
                } else {
                    sq.descendants(level)
                }
            })
            .collect();
        caps.sort();
        caps.dedup();
        Self { level, caps }
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    /// Index of the cap containing the square `sq` (which must be at least as
    /// fine as the partition).
    pub fn index_of(&self, sq: &DyadicSquare) -> Option<usize> {
        let a = sq.ancestor(self.level)?;
        self.caps.binary_search(&a).ok()
    }

    /// Index of the cap containing a point, half-open convention.
    pub fn index_of_point(&self, t: f64, s: f64) -> Option<usize> {
        let sq = DyadicSquare::containing(self.level, t, s)?;
        self.caps.binary_search(&sq).ok()
    }
}

/// Smallest `m` with `2^m >= sqrt(n)`, i.e. caps of side about `n^{-1/2}`.
pub fn cap_level_for(n: f64) -> u32 {
    let mut m = 0u32;
    while ((4u64 << (2 * m)) as f64 / 4.0) < n && m < MAX_LEVEL {
        m += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_level_matches_ceil_log2_sqrt() {
        assert_eq!(cap_level_for(1.0), 0);
        assert_eq!(cap_level_for(16.0), 2);
        assert_eq!(cap_level_for(17.0), 3);
        assert_eq!(cap_level_for(64.0), 3);
        assert_eq!(cap_level_for(256.0), 4);
        assert_eq!(cap_level_for(1024.0), 5);
    }

    #[test]
    fn level_caps_tile_the_unit_square() {
        for m in 0..5 {
            let p = CapPartition::full(m);
            assert_eq!(p.len(), 1 << (2 * m));
            let area: f64 = p.caps.iter().map(|c| c.rect().area()).sum();
            assert!((area - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn half_open_convention_closes_at_one() {
        let sq = DyadicSquare::containing(3, 1.0, 1.0).unwrap();
        assert_eq!((sq.i, sq.j), (7, 7));
        let sq = DyadicSquare::containing(3, 0.125, 0.0).unwrap();
        assert_eq!((sq.i, sq.j), (1, 0));
        assert!(DyadicSquare::containing(3, 1.0 + 1e-12, 0.0).is_none());
    }

    #[test]
    fn ancestors_and_descendants_are_consistent() {
        let sq = DyadicSquare::new(4, 11, 6).unwrap();
        let parent = sq.ancestor(2).unwrap();
        assert_eq!((parent.i, parent.j), (2, 1));
        assert!(parent.contains_square(&sq));
        assert!(parent.descendants(4).contains(&sq));
        assert_eq!(sq.intersect(&parent), Some(sq));
        assert_eq!(sq.intersect(&DyadicSquare::new(2, 0, 0).unwrap()), None);
    }

    #[test]
    fn covering_handles_coarse_and_fine_support() {
        let strip: Vec<_> = (0..4).map(|j| DyadicSquare::new(2, 0, j).unwrap()).collect();
        let p = CapPartition::covering(&strip, 3);
        assert_eq!(p.len(), 16);
        let p = CapPartition::covering(&strip, 1);
        assert_eq!(p.len(), 2);
    }
}
