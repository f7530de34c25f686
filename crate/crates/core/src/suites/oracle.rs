//! Independent oracles for the operator norm and the maximal functions.

use serde::{Deserialize, Serialize};

use crate::czo::{discretize, power_norm, KernelSpec};
use crate::error::Result;
use crate::geometry::ShiftedDyadicGrid;
use crate::measure::{dyadic_maximal, random_uniform, uniform_on_cube, AtomFn, DiscreteMeasure, MaximalEngine};
use crate::rng::{mix, SeedTree};

pub const NORM_TOL: f64 = 1e-6;
/// Atom counts are powers of two and inputs are multiples of `1/16`, so every average below
/// is computed without rounding until the final division.
pub const ORACLE_ATOMS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub label: String,
    pub atoms: usize,
    pub svd_norm: f64,
    pub power_norm: f64,
    pub norm_relative: f64,
    /// Atoms where the centred maximal function differs from the ball scan.
    pub centred_mismatches: usize,
    /// Atoms where the dyadic maximal function differs from the cube scan.
    pub dyadic_mismatches: usize,
}

impl OracleCase {
    pub fn pass(&self) -> bool {
        self.norm_relative <= NORM_TOL && self.centred_mismatches == 0 && self.dyadic_mismatches == 0
    }
}

/// Closed balls at every atom distance, scanned directly.
pub fn ball_scan(mu: &DiscreteMeasure<f64>, h: &AtomFn<f64>) -> Vec<f64> {
    let n = mu.len();
    (0..n)
        .map(|i| {
            let mut best: f64 = 0.0;
            for j in 0..n {
                let r2 = mu.dist_sq_exact(i, j);
                let (mut num, mut den) = (0.0, 0.0);
                for k in 0..n {
                    if mu.dist_sq_exact(i, k) <= r2 {
                        num += h[k].abs() * mu.weight(k);
                        den += mu.weight(k);
                    }
                }
                best = best.max(num / den);
            }
            best
        })
        .collect()
}

/// Every grid cube containing each atom, averaged over a full scan of the atoms.
pub fn cube_scan(mu: &DiscreteMeasure<f64>, h: &AtomFn<f64>, grid: &ShiftedDyadicGrid) -> Vec<f64> {
    (0..mu.len())
        .map(|i| {
            let mut best: f64 = 0.0;
            for g in 0..=grid.depth {
                let Some(q) = grid.cube_containing(mu.point(i), g) else { continue };
                let (mut num, mut den) = (0.0, 0.0);
                for k in 0..mu.len() {
                    if q.contains_point(mu.point(k)) {
                        num += h[k].abs() * mu.weight(k);
                        den += mu.weight(k);
                    }
                }
                best = best.max(num / den);
            }
            best
        })
        .collect()
}

fn sixteenths(n: usize, seed: u64) -> AtomFn<f64> {
    AtomFn::new((0..n).map(|a| ((mix(&[seed, a as u64]) % 33) as f64 - 16.0) / 16.0).collect())
}

pub fn oracle_case(label: &str, mu: DiscreteMeasure<f64>, kernel: &KernelSpec, depth: u32, seed: u64) -> Result<OracleCase> {
    let op = discretize(kernel, &mu)?;
    let svd = op.op_norm(mu.len())?;
    let pow = power_norm(&op, 200_000, 1e-15, seed);
    let h = sixteenths(mu.len(), seed);
    let fast = MaximalEngine::new(&mu).apply(&h);
    let slow = ball_scan(&mu, &h);
    let centred_mismatches = fast.values.iter().zip(&slow).filter(|(a, b)| a != b).count();
    let dim = mu.dim();
    let mut rng = SeedTree::new(seed).rng("oracle-grid", 0);
    let shift = ShiftedDyadicGrid::random_shift(0, dim, &mut rng);
    let grid = ShiftedDyadicGrid::new(shift, 1, depth, dim)?;
    let fast = dyadic_maximal(&mu, &h, &grid)?;
    let slow = cube_scan(&mu, &h, &grid);
    let dyadic_mismatches = fast.values.iter().zip(&slow).filter(|(a, b)| a != b).count();
    Ok(OracleCase {
        label: label.into(),
        atoms: mu.len(),
        svd_norm: svd,
        power_norm: pow,
        norm_relative: (svd - pow).abs() / svd,
        centred_mismatches,
        dyadic_mismatches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oracles {
    pub cases: Vec<OracleCase>,
    pub pass: bool,
}

/// Lattice and random measures in one and two dimensions with the Cauchy and Riesz kernels.
pub fn oracles(seed: u64) -> Result<Oracles> {
    let n = ORACLE_ATOMS;
    let mut rng = SeedTree::new(seed).rng("oracle-measure", 0);
    let cases = vec![
        oracle_case("lattice-1d-cauchy", uniform_on_cube(1, &[0.0], 2.0, n, 1.0)?, &KernelSpec::cauchy(), 7, seed)?,
        oracle_case("random-1d-riesz", random_uniform(1, &[0.0], 2.0, n, 1.0, &mut rng)?, &KernelSpec::riesz(1, 1.0, 0)?, 6, seed)?,
        oracle_case("lattice-2d-riesz", uniform_on_cube(2, &[0.0, 0.0], 2.0, 16, 1.0)?, &KernelSpec::riesz(2, 2.0, 0)?, 5, seed)?,
        oracle_case("random-2d-riesz", random_uniform(2, &[0.0, 0.0], 2.0, n, 1.0, &mut rng)?, &KernelSpec::riesz(2, 2.0, 1)?, 5, seed)?,
    ];
    let pass = cases.iter().all(OracleCase::pass);
    Ok(Oracles { cases, pass })
}
