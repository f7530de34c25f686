use serde::{Deserialize, Serialize};

use super::dyadic::{interval_gap, norm_sq, sqrt_len, Dyadic};

/// Identifier of the grid a cube was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridId(pub u64);

/// Half-open dyadic box `prod [corner_i, corner_i + 2^side_log2)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub grid: GridId,
    pub generation: u32,
    pub index: Vec<i64>,
    pub corner: Vec<Dyadic>,
    pub side_log2: i32,
}

impl Cube {
    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn side(&self) -> Dyadic {
        Dyadic::pow2(self.side_log2)
    }

    pub fn side_f64(&self) -> f64 {
        (self.side_log2 as f64).exp2()
    }

    pub fn lo(&self, i: usize) -> Dyadic {
        self.corner[i]
    }

    pub fn hi(&self, i: usize) -> Dyadic {
        self.corner[i] + self.side()
    }

    pub fn center(&self) -> Vec<f64> {
        let h = self.side_f64() / 2.0;
        self.corner.iter().map(|c| c.to_f64() + h).collect()
    }

    pub fn contains_point(&self, x: &[Dyadic]) -> bool {
        let s = self.side();
        self.corner
            .iter()
            .zip(x)
            .all(|(&c, &xi)| c <= xi && xi < c + s)
    }

    /// Point-set containment of half-open boxes.
    pub fn contains_cube(&self, other: &Cube) -> bool {
        if other.side_log2 > self.side_log2 {
            return false;
        }
        (0..self.dim()).all(|i| self.lo(i) <= other.lo(i) && other.hi(i) <= self.hi(i))
    }

    pub fn intersects(&self, other: &Cube) -> bool {
        (0..self.dim()).all(|i| self.lo(i) < other.hi(i) && other.lo(i) < self.hi(i))
    }

    /// Child number `c` in `0..2^n`; bit `i` selects the upper half along axis `i`.
    pub fn child(&self, c: usize) -> Cube {
        let half = Dyadic::pow2(self.side_log2 - 1);
        let mut corner = self.corner.clone();
        let mut index = self.index.clone();
        for i in 0..self.dim() {
            let bit = ((c >> i) & 1) as i64;
            index[i] = 2 * index[i] + bit;
            if bit == 1 {
                corner[i] = corner[i] + half;
            }
        }
        Cube {
            grid: self.grid,
            generation: self.generation + 1,
            index,
            corner,
            side_log2: self.side_log2 - 1,
        }
    }

    pub fn children(&self) -> Vec<Cube> {
        (0..1usize << self.dim()).map(|c| self.child(c)).collect()
    }

    /// Which child of `self` contains the point.
    pub fn child_number(&self, x: &[Dyadic]) -> usize {
        let half = Dyadic::pow2(self.side_log2 - 1);
        let mut c = 0;
        for i in 0..self.dim() {
            if x[i] >= self.corner[i] + half {
                c |= 1 << i;
            }
        }
        c
    }

    pub fn parent(&self) -> Option<Cube> {
        if self.generation == 0 {
            return None;
        }
        let mut corner = self.corner.clone();
        let mut index = self.index.clone();
        for i in 0..self.dim() {
            let bit = self.index[i].rem_euclid(2);
            index[i] = self.index[i].div_euclid(2);
            if bit == 1 {
                corner[i] = corner[i] - Dyadic::pow2(self.side_log2);
            }
        }
        Some(Cube {
            grid: self.grid,
            generation: self.generation - 1,
            index,
            corner,
            side_log2: self.side_log2 + 1,
        })
    }

    /// Squared set distance between closures, in mantissa units squared.
    pub fn distance_sq(&self, other: &Cube) -> i128 {
        norm_sq((0..self.dim()).map(|i| {
            interval_gap(self.lo(i).0, self.hi(i).0, other.lo(i).0, other.hi(i).0)
        }))
    }

    /// Euclidean set distance `d(Q, R)`.
    pub fn distance(&self, other: &Cube) -> f64 {
        sqrt_len(self.distance_sq(other))
    }

    /// Distance from a point to the boundary of the cube (point inside or outside).
    pub fn boundary_distance_sq(&self, x: &[Dyadic]) -> i128 {
        if self.contains_point(x) {
            let m = (0..self.dim())
                .map(|i| (x[i].0 - self.lo(i).0).min(self.hi(i).0 - x[i].0))
                .min()
                .unwrap_or(0);
            (m as i128) * (m as i128)
        } else {
            norm_sq((0..self.dim()).map(|i| interval_gap(x[i].0, x[i].0, self.lo(i).0, self.hi(i).0)))
        }
    }
}

impl Cube {
    /// Squared distance from the closure of `self` to the boundary of `outer`.
    pub fn boundary_gap_sq(&self, outer: &Cube) -> i128 {
        let n = self.dim();
        let inside = (0..n).all(|i| outer.lo(i) < self.lo(i) && self.hi(i) < outer.hi(i));
        if inside {
            let m = (0..n)
                .map(|i| (self.lo(i).0 - outer.lo(i).0).min(outer.hi(i).0 - self.hi(i).0))
                .min()
                .unwrap_or(0);
            return (m as i128) * (m as i128);
        }
        self.distance_sq(outer)
    }

    /// Centre as exact dyadics; needs a side of at least two resolution units.
    pub fn center_dyadic(&self) -> Vec<Dyadic> {
        let h = Dyadic::pow2(self.side_log2 - 1);
        self.corner.iter().map(|&c| c + h).collect()
    }
}

/// `d(Q, sk S)` where `sk S` is the union of the boundaries of the children of `S`.
pub fn skeleton_distance_sq(q: &Cube, s: &Cube) -> i128 {
    let n = q.dim();
    let half = Dyadic::pow2(s.side_log2 - 1);
    let mut best = i128::MAX;
    for axis in 0..n {
        for c in [s.lo(axis), s.lo(axis) + half, s.hi(axis)] {
            let d = norm_sq((0..n).map(|j| {
                if j == axis {
                    interval_gap(q.lo(j).0, q.hi(j).0, c.0, c.0)
                } else {
                    interval_gap(q.lo(j).0, q.hi(j).0, s.lo(j).0, s.hi(j).0)
                }
            }));
            best = best.min(d);
        }
    }
    best
}

pub fn skeleton_distance(q: &Cube, s: &Cube) -> f64 {
    sqrt_len(skeleton_distance_sq(q, s))
}

/// `D(Q, R) = l(Q) + l(R) + d(Q, R)`.
pub fn long_distance(q: &Cube, r: &Cube) -> f64 {
    q.side_f64() + r.side_f64() + q.distance(r)
}
