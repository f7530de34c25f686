use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cube::{Cube, GridId};
use super::dyadic::{Dyadic, FRAC_BITS, MAX_LOG2};
use crate::error::{Error, Result};
use crate::rng::mix;

/// Translated dyadic lattice with root `w + [-2^N, 2^N)^n` and `depth` generations below it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftedDyadicGrid {
    pub shift: Vec<Dyadic>,
    pub n_scale: i32,
    pub depth: u32,
    pub dim: usize,
    pub id: GridId,
}

pub fn build_grid(shift: &[f64], n_scale: i32, depth: u32, dim: usize) -> Result<ShiftedDyadicGrid> {
    let w = shift.iter().map(|&x| Dyadic::exact(x)).collect::<Result<Vec<_>>>()?;
    ShiftedDyadicGrid::new(w, n_scale, depth, dim)
}

impl ShiftedDyadicGrid {
    pub fn new(shift: Vec<Dyadic>, n_scale: i32, depth: u32, dim: usize) -> Result<Self> {
        if dim == 0 || shift.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "shift has {} coordinates for dimension {dim}",
                shift.len()
            )));
        }
        if depth < 1 {
            return Err(Error::InvalidGrid("depth must be at least 1".into()));
        }
        if n_scale + 2 > MAX_LOG2 || n_scale < 1 - FRAC_BITS {
            return Err(Error::InvalidGrid(format!("root scale {n_scale} out of range")));
        }
        if n_scale + 1 - (depth as i32) < -FRAC_BITS {
            return Err(Error::InvalidGrid(format!(
                "depth {depth} below the dyadic resolution"
            )));
        }
        if dim * depth as usize > 126 {
            return Err(Error::InvalidGrid("dimension times depth exceeds 126".into()));
        }
        let bound = Dyadic::pow2(n_scale - 1);
        for &w in &shift {
            if w.abs() > bound {
                return Err(Error::ShiftOutOfRange {
                    value: w.to_f64(),
                    bound: bound.to_f64(),
                });
            }
        }
        let mut words = vec![n_scale as u64, depth as u64, dim as u64];
        words.extend(shift.iter().map(|w| w.0 as u64));
        let id = GridId(mix(&words));
        Ok(Self {
            shift,
            n_scale,
            depth,
            dim,
            id,
        })
    }

    /// Uniform shift in `[-2^{N-1}, 2^{N-1}]^n` on the dyadic resolution lattice.
    pub fn random_shift<R: Rng>(n_scale: i32, dim: usize, rng: &mut R) -> Vec<Dyadic> {
        let b = Dyadic::pow2(n_scale - 1).0;
        (0..dim).map(|_| Dyadic(rng.gen_range(-b..=b))).collect()
    }

    pub fn random<R: Rng>(n_scale: i32, depth: u32, dim: usize, rng: &mut R) -> Result<Self> {
        Self::new(Self::random_shift(n_scale, dim, rng), n_scale, depth, dim)
    }

    pub fn root_corner(&self) -> Vec<Dyadic> {
        let h = Dyadic::pow2(self.n_scale);
        self.shift.iter().map(|&w| w - h).collect()
    }

    pub fn side_log2(&self, generation: u32) -> i32 {
        self.n_scale + 1 - generation as i32
    }

    pub fn root_side(&self) -> f64 {
        (self.side_log2(0) as f64).exp2()
    }

    /// Generation whose side is `2^k`, if it exists in the grid.
    pub fn generation_of_side(&self, k: i32) -> Option<u32> {
        let g = self.n_scale + 1 - k;
        (0..=self.depth as i32).contains(&g).then_some(g as u32)
    }

    pub fn root(&self) -> Cube {
        Cube {
            grid: self.id,
            generation: 0,
            index: vec![0; self.dim],
            corner: self.root_corner(),
            side_log2: self.side_log2(0),
        }
    }

    /// Cube of the lattice at `generation` with the given index; indices may leave the root.
    pub fn lattice_cube(&self, generation: u32, index: Vec<i64>) -> Cube {
        let k = self.side_log2(generation);
        let side = Dyadic::pow2(k);
        let corner = self
            .root_corner()
            .iter()
            .zip(&index)
            .map(|(&c, &i)| c + side.mul_int(i))
            .collect();
        Cube {
            grid: self.id,
            generation,
            index,
            corner,
            side_log2: k,
        }
    }

    pub fn cube(&self, generation: u32, index: Vec<i64>) -> Result<Cube> {
        let count = 1i64 << generation.min(62);
        if generation > self.depth || index.len() != self.dim || index.iter().any(|&i| i < 0 || i >= count) {
            return Err(Error::OutsideRoot);
        }
        Ok(self.lattice_cube(generation, index))
    }

    /// Lattice cube of the given generation containing `x`, ignoring the root.
    pub fn lattice_cube_containing(&self, x: &[Dyadic], generation: u32) -> Cube {
        let k = self.side_log2(generation);
        let index = x
            .iter()
            .zip(self.root_corner())
            .map(|(&xi, c)| (xi - c).floor_div_pow2(k))
            .collect();
        self.lattice_cube(generation, index)
    }

    pub fn cube_containing(&self, x: &[Dyadic], generation: u32) -> Option<Cube> {
        if generation > self.depth || !self.root().contains_point(x) {
            return None;
        }
        Some(self.lattice_cube_containing(x, generation))
    }

    pub fn contains_cube(&self, q: &Cube) -> bool {
        self.root().contains_cube(q)
    }

    /// Cubes of `generation` inside the root whose closure meets the closed box
    /// `[lo - pad, hi + pad]`.
    pub fn cubes_near(&self, lo: &[Dyadic], hi: &[Dyadic], pad: f64, generation: u32) -> Vec<Cube> {
        let k = self.side_log2(generation);
        let side = (k as f64).exp2();
        let count = 1i64 << generation;
        let root = self.root_corner();
        let mut ranges = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let a = ((lo[i].to_f64() - pad - root[i].to_f64()) / side).floor() as i64 - 1;
            let b = ((hi[i].to_f64() + pad - root[i].to_f64()) / side).floor() as i64 + 1;
            let a = a.max(0);
            let b = b.min(count - 1);
            if a > b {
                return Vec::new();
            }
            ranges.push((a, b));
        }
        let mut out = Vec::new();
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.lattice_cube(generation, idx.clone()));
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    return out;
                }
                idx[axis] += 1;
                if idx[axis] <= ranges[axis].1 {
                    break;
                }
                idx[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }
}
