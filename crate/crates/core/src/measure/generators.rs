use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::error::Result;
use crate::scalar::Scalar;

fn lattice(dim: usize, per_axis: usize) -> Vec<Vec<usize>> {
    let count = per_axis.pow(dim as u32);
    (0..count)
        .map(|mut c| {
            (0..dim)
                .map(|_| {
                    let k = c % per_axis;
                    c /= per_axis;
                    k
                })
                .collect()
        })
        .collect()
}

/// `per_axis^dim` equal atoms at the cell centres of the cube with the given centre and side.
pub fn uniform_on_cube<S: Scalar>(
    dim: usize,
    center: &[f64],
    side: f64,
    per_axis: usize,
    total_mass: f64,
) -> Result<DiscreteMeasure<S>> {
    let h = side / per_axis as f64;
    let pts: Vec<Vec<f64>> = lattice(dim, per_axis)
        .into_iter()
        .map(|k| (0..dim).map(|i| center[i] - side / 2.0 + (k[i] as f64 + 0.5) * h).collect())
        .collect();
    let w = S::of(total_mass / pts.len() as f64);
    let n = pts.len();
    DiscreteMeasure::new(dim, pts, vec![w; n], dim as f64, h)
}

/// `count` equal atoms at uniform random positions in the cube.
pub fn random_uniform<S: Scalar, R: Rng>(
    dim: usize,
    center: &[f64],
    side: f64,
    count: usize,
    total_mass: f64,
    rng: &mut R,
) -> Result<DiscreteMeasure<S>> {
    let mut seen = std::collections::HashSet::new();
    let mut pts = Vec::with_capacity(count);
    while pts.len() < count {
        let p: Vec<f64> = (0..dim)
            .map(|i| center[i] - side / 2.0 + rng.gen::<f64>() * side)
            .collect();
        let key: Vec<i64> = p
            .iter()
            .map(|&x| crate::geometry::Dyadic::snap(x).map(|d| d.0))
            .collect::<Result<_>>()?;
        if seen.insert(key) {
            pts.push(p);
        }
    }
    let h = side / (count as f64).powf(1.0 / dim as f64);
    DiscreteMeasure::new(dim, pts, vec![S::of(total_mass / count as f64); count], dim as f64, h)
}

/// Cantor-type set: each cube keeps its `2^dim` corner subcubes scaled by `ratio < 1/2`;
/// equal atoms at the centres of the level-`levels` cubes. Growth exponent `dim ln 2 / ln(1/ratio)`.
pub fn cantor<S: Scalar>(
    dim: usize,
    center: &[f64],
    side: f64,
    levels: u32,
    ratio: f64,
    total_mass: f64,
) -> Result<DiscreteMeasure<S>> {
    let mut corners: Vec<Vec<f64>> = vec![center.iter().map(|c| c - side / 2.0).collect()];
    let mut s = side;
    for _ in 0..levels {
        let t = s * ratio;
        let mut next = Vec::with_capacity(corners.len() << dim);
        for c in &corners {
            for bits in 0..1usize << dim {
                next.push(
                    (0..dim)
                        .map(|i| if (bits >> i) & 1 == 1 { c[i] + s - t } else { c[i] })
                        .collect(),
                );
            }
        }
        corners = next;
        s = t;
    }
    let pts: Vec<Vec<f64>> = corners
        .into_iter()
        .map(|c| c.into_iter().map(|x| x + s / 2.0).collect())
        .collect();
    let n = pts.len();
    let m = dim as f64 * std::f64::consts::LN_2 / (1.0 / ratio).ln();
    DiscreteMeasure::new(dim, pts, vec![S::of(total_mass / n as f64); n], m, s)
}

/// Explicit point masses.
pub fn point_masses<S: Scalar>(
    dim: usize,
    atoms: &[(Vec<f64>, f64)],
    m: f64,
    r_min: f64,
) -> Result<DiscreteMeasure<S>> {
    DiscreteMeasure::new(
        dim,
        atoms.iter().map(|a| a.0.clone()).collect(),
        atoms.iter().map(|a| S::of(a.1)).collect(),
        m,
        r_min,
    )
}

/// On-disk measure description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub dimension: usize,
    pub m: f64,
    #[serde(default)]
    pub r_min: Option<f64>,
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl MeasureFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `r_min` defaults to the smallest interatom distance.
    pub fn to_measure<S: Scalar>(&self) -> Result<DiscreteMeasure<S>> {
        let r_min = match self.r_min {
            Some(r) => r,
            None => {
                let mut best = f64::INFINITY;
                for (i, a) in self.atoms.iter().enumerate() {
                    for b in &self.atoms[i + 1..] {
                        let d = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                        best = best.min(d);
                    }
                }
                if best.is_finite() && best > 0.0 {
                    best
                } else {
                    1.0
                }
            }
        };
        point_masses(self.dimension, &self.atoms, self.m, r_min)
    }

    pub fn from_measure<S: Scalar>(mu: &DiscreteMeasure<S>) -> Self {
        Self {
            dimension: mu.dim(),
            m: mu.m,
            r_min: Some(mu.r_min),
            atoms: (0..mu.len())
                .map(|i| (mu.coords(i).to_vec(), mu.weight(i).as_f64()))
                .collect(),
        }
    }
}
