use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Ambient;
use crate::error::{Error, Result};
use crate::geometry::{bad_witness, boundary_collar, cmp_gap, Cube, Dyadic, GoodBadParams, ShiftedDyadicGrid};
use crate::rng::SeedTree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadProbability {
    pub k: i32,
    pub estimate: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub trials: usize,
}

fn half_width(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// `P_w'(q is bad with respect to some cube of side >= 2^k l(q))` for each `k`, from one
/// common set of random grids (so the estimates are monotone in `k`).
///
/// The grids have roots of side `2^(n_scale+1)` and are refined down to side `2^k_min l(q)`.
pub fn bad_probability_mc(
    q: &Cube,
    ks: &[i32],
    n_scale: i32,
    p: &GoodBadParams,
    trials: usize,
    seeds: &SeedTree,
) -> Result<Vec<BadProbability>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let Some(&k_min) = ks.iter().min() else { return Ok(Vec::new()) };
    let root_log2 = n_scale + 1;
    let finest = q.side_log2 + k_min;
    // every requested scale is beyond the root: no such cubes
    if finest > root_log2 {
        return Ok(ks
            .iter()
            .map(|&k| BadProbability {
                k,
                estimate: 0.0,
                half_width: 0.0,
                trials,
            })
            .collect());
    }
    let depth = (root_log2 - finest).max(1) as u32;
    let dim = q.dim();
    let a_scale = (finest as f64).exp2();
    let witnesses: Vec<Result<Option<i32>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds.rng("bad-probability", t as u64);
            let grid = ShiftedDyadicGrid::random(n_scale, depth, dim, &mut rng)?;
            Ok(bad_witness(q, &grid, a_scale, p).map(|s| s.side_log2))
        })
        .collect();
    let witnesses: Vec<Option<i32>> = witnesses.into_iter().collect::<Result<_>>()?;
    Ok(ks
        .iter()
        .map(|&k| {
            let scale = q.side_log2 + k;
            let hits = witnesses.iter().filter(|w| matches!(w, Some(s) if *s >= scale)).count();
            let estimate = hits as f64 / trials as f64;
            BadProbability {
                k,
                estimate,
                half_width: half_width(estimate, trials),
                trials,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `log2 p` against `k`.
    pub slope: f64,
    pub intercept: f64,
    /// `-slope`.
    pub exponent: f64,
    pub points: usize,
}

/// Fit `p ~ c 2^(-e k)` over the estimates with positive probability.
pub fn fit_decay(points: &[BadProbability]) -> Option<DecayFit> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|b| b.estimate > 0.0)
        .map(|b| (b.k as f64, b.estimate.log2()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Some(DecayFit {
        slope,
        intercept: my - slope * mx,
        exponent: -slope,
        points: xy.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub parameter: f64,
    pub mean: f64,
    pub half_width: f64,
}

fn ladder(params: &[f64], samples: &[Vec<f64>]) -> Vec<LadderPoint> {
    let n = samples.len().max(1) as f64;
    params
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let mean = samples.iter().fold(0.0, |acc, s| acc + s[i]) / n;
            let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            LadderPoint {
                parameter: u,
                mean,
                half_width: 1.96 * (var / n).sqrt(),
            }
        })
        .collect()
}

/// `l^infinity` distance from the cube's centre, in mantissa units.
pub(crate) fn rho(center: &[Dyadic], x: &[Dyadic]) -> i64 {
    center.iter().zip(x).map(|(c, y)| (y.0 - c.0).abs()).max().unwrap_or(0)
}

/// `E_w mu((1+u) Q*(w) \ Q*(w)) / mu(lambda Q0)` along a ladder of collar widths, with the
/// dilate taken open so that `u = 0` gives an empty collar.
pub fn collar_mass_mc(amb: &Ambient, us: &[f64], trials: usize, seeds: &SeedTree) -> Result<Vec<LadderPoint>> {
    let p = &amb.params;
    let dim = amb.mu.dim();
    let samples: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds.rng("collar", t as u64);
            let grid = ShiftedDyadicGrid::random(p.n_scale, 1, dim, &mut rng)?;
            let root = grid.root();
            let c = root.center_dyadic();
            let half = 0.5 * root.side_f64();
            Ok(us
                .iter()
                .map(|&u| {
                    let m: f64 = (0..amb.n())
                        .filter(|&a| {
                            let x = amb.mu.point(a);
                            !root.contains_point(x) && cmp_gap(rho(&c, x), (1.0 + u) * half) == Ordering::Less
                        })
                        .map(|a| amb.weight(a))
                        .sum();
                    m / amb.lambda_mass
                })
                .collect())
        })
        .collect();
    let samples: Vec<Vec<f64>> = samples.into_iter().collect::<Result<_>>()?;
    Ok(ladder(us, &samples))
}

/// `E mu(boundary collar of width sigma at lattice generation k) / mu(lambda Q0)` over random
/// third grids, for a ladder of `sigma`.
pub fn boundary_mass_mc(
    amb: &Ambient,
    generation: u32,
    sigmas: &[f64],
    trials: usize,
    seeds: &SeedTree,
) -> Result<Vec<LadderPoint>> {
    let p = &amb.params;
    let dim = amb.mu.dim();
    let inside: Vec<usize> = (0..amb.n()).filter(|&a| p.in_lambda_q0(amb.mu.point(a))).collect();
    let samples: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds.rng("boundary", t as u64);
            let grid = ShiftedDyadicGrid::random(p.n_scale, generation.max(1), dim, &mut rng)?;
            sigmas
                .iter()
                .map(|&s| {
                    let collar = boundary_collar(&grid, generation, s)?;
                    let m: f64 = inside
                        .iter()
                        .filter(|&&a| collar.contains(amb.mu.point(a)))
                        .map(|&a| amb.weight(a))
                        .sum();
                    Ok(m / amb.lambda_mass)
                })
                .collect()
        })
        .collect();
    let samples: Vec<Vec<f64>> = samples.into_iter().collect::<Result<_>>()?;
    Ok(ladder(sigmas, &samples))
}
