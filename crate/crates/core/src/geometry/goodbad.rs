use serde::{Deserialize, Serialize};

use super::cube::{skeleton_distance_sq, Cube};
use super::dyadic::{sqrt_len, Dyadic, FRAC_BITS};
use super::grid::ShiftedDyadicGrid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodBadParams {
    pub gamma: f64,
    pub r: u32,
}

impl GoodBadParams {
    pub fn new(gamma: f64, r: u32) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} not in (0, 1/2)")));
        }
        Ok(Self { gamma, r })
    }

    /// `gamma = alpha / (2m + 2 alpha)`.
    pub fn from_kernel(alpha: f64, m: f64, r: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0 && m > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha}, m {m}")));
        }
        Self::new(alpha / (2.0 * m + 2.0 * alpha), r)
    }

    /// Check a supplied gamma against the kernel-derived value.
    pub fn check_kernel(&self, alpha: f64, m: f64) -> Result<()> {
        let want = alpha / (2.0 * m + 2.0 * alpha);
        if (self.gamma - want).abs() > 1e-12 * want {
            return Err(Error::InvalidParameter(format!(
                "gamma {} differs from alpha/(2m+2alpha) = {want}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// `l(Q)^gamma l(S)^(1-gamma)`.
    pub fn threshold(&self, lq: f64, ls: f64) -> f64 {
        lq.powf(self.gamma) * ls.powf(1.0 - self.gamma)
    }
}

/// A cube of `other` witnessing that `q` is bad at scales `>= a_scale`, if any.
pub fn bad_witness(q: &Cube, other: &ShiftedDyadicGrid, a_scale: f64, p: &GoodBadParams) -> Option<Cube> {
    let lq = q.side_f64();
    let hi: Vec<Dyadic> = (0..q.dim()).map(|i| q.hi(i)).collect();
    for g in 0..=other.depth {
        let ls = (other.side_log2(g) as f64).exp2();
        if ls < a_scale {
            break;
        }
        let thr = p.threshold(lq, ls);
        for s in other.cubes_near(&q.corner, &hi, thr, g) {
            if sqrt_len(skeleton_distance_sq(q, &s)) <= thr {
                return Some(s);
            }
        }
    }
    None
}

/// `q` is good iff `d(q, sk S) > l(q)^gamma l(S)^(1-gamma)` for every `S` in `other` with `l(S) >= a_scale`.
pub fn is_good(q: &Cube, other: &ShiftedDyadicGrid, a_scale: f64, p: &GoodBadParams) -> bool {
    bad_witness(q, other, a_scale, p).is_none()
}

/// Smallest `k` in `[r, k_max]` such that `q` is good at all scales `>= 2^k l(q)`.
pub fn alpha_generation(q: &Cube, other: &ShiftedDyadicGrid, p: &GoodBadParams, k_max: i32) -> Option<i32> {
    let lq = q.side_f64();
    (p.r as i32..=k_max).find(|&k| is_good(q, other, (k as f64).exp2() * lq, p))
}

/// Membership predicate for `{x : d(x, boundary of G_k(x)) < sigma l(G_k)}` over the lattice of a grid.
#[derive(Clone, Debug)]
pub struct Collar {
    pub grid: ShiftedDyadicGrid,
    pub generation: u32,
    pub sigma: f64,
}

pub fn boundary_collar(grid: &ShiftedDyadicGrid, k: u32, sigma: f64) -> Result<Collar> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} not in (0, 1/2)")));
    }
    if grid.side_log2(k) < 1 - FRAC_BITS {
        return Err(Error::InvalidGrid(format!("generation {k} below the dyadic resolution")));
    }
    Ok(Collar {
        grid: grid.clone(),
        generation: k,
        sigma,
    })
}

impl Collar {
    pub fn side(&self) -> f64 {
        (self.grid.side_log2(self.generation) as f64).exp2()
    }

    pub fn contains(&self, x: &[Dyadic]) -> bool {
        let g = self.grid.lattice_cube_containing(x, self.generation);
        sqrt_len(g.boundary_distance_sq(x)) < self.sigma * self.side()
    }
}
