//! Finite atomic measures, averages, norms, growth and maximal functions.

mod generators;
mod maximal;

pub use generators::{cantor, point_masses, random_uniform, uniform_on_cube, MeasureFile};
pub use maximal::{centred_maximal, dyadic_maximal, dyadic_maximal_on, maximal_op_norm, MaximalEngine, MaximalNorm};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::{Cube, Dyadic};
use crate::scalar::Scalar;

/// Weighted atoms in `R^n` with growth exponent `m` asserted above scale `r_min`.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure<S> {
    dim: usize,
    points: Vec<Dyadic>,
    coords: Vec<f64>,
    weights: Vec<S>,
    pub m: f64,
    pub r_min: f64,
}

impl<S: Scalar> DiscreteMeasure<S> {
    /// Coordinates are snapped to the dyadic resolution lattice.
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<S>, m: f64, r_min: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if !(m > 0.0) || !(r_min > 0.0) {
            return Err(Error::InvalidMeasure(format!("m = {m}, r_min = {r_min}")));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::InvalidMeasure(format!("point of dimension {} in R^{dim}", p.len())));
            }
            for &x in p {
                flat.push(Dyadic::snap(x)?);
            }
        }
        if weights.iter().any(|w| !(*w > S::zero()) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be positive and finite".into()));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for chunk in flat.chunks(dim) {
            if !seen.insert(chunk.to_vec()) {
                return Err(Error::InvalidMeasure(format!("repeated atom at {chunk:?}")));
            }
        }
        let coords = flat.iter().map(|d| d.to_f64()).collect();
        Ok(Self {
            dim,
            points: flat,
            coords,
            weights,
            m,
            r_min,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[Dyadic] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> S {
        self.weights[i]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn total_mass(&self) -> S {
        self.weights.iter().copied().sum()
    }

    /// Euclidean distance between atoms.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        crate::geometry::sqrt_len(self.dist_sq_exact(i, j))
    }

    /// Squared distance in mantissa units; exact.
    pub fn dist_sq_exact(&self, i: usize, j: usize) -> i128 {
        crate::geometry::norm_sq(self.point(i).iter().zip(self.point(j)).map(|(a, b)| a.0 - b.0))
    }

    pub fn diameter(&self) -> f64 {
        let mut best = 0i128;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max(self.dist_sq_exact(i, j));
            }
        }
        crate::geometry::sqrt_len(best)
    }

    pub fn atoms_in(&self, q: &Cube) -> Vec<usize> {
        (0..self.len()).filter(|&i| q.contains_point(self.point(i))).collect()
    }

    pub fn mass_in(&self, q: &Cube) -> S {
        self.atoms_in(q).into_iter().map(|i| self.weights[i]).sum()
    }

    /// Same atoms, weights multiplied by `c > 0`.
    pub fn scaled(&self, c: S) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            *w *= c;
        }
        out
    }

    /// Atoms of both measures; fails on a repeated point.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidMeasure("dimension mismatch".into()));
        }
        let mut pts: Vec<Vec<f64>> = (0..self.len()).map(|i| self.coords(i).to_vec()).collect();
        pts.extend((0..other.len()).map(|i| other.coords(i).to_vec()));
        let mut w = self.weights.clone();
        w.extend_from_slice(&other.weights);
        Self::new(self.dim, pts, w, self.m, self.r_min.min(other.r_min))
    }

    /// Same atoms and weights in another scalar type.
    pub fn cast<T: Scalar>(&self) -> DiscreteMeasure<T> {
        DiscreteMeasure {
            dim: self.dim,
            points: self.points.clone(),
            coords: self.coords.clone(),
            weights: self.weights.iter().map(|w| T::of(w.as_f64())).collect(),
            m: self.m,
            r_min: self.r_min,
        }
    }
}

/// A real function on the atoms of a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomFn<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> AtomFn<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![S::zero(); n])
    }

    pub fn constant(n: usize, c: S) -> Self {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_len(&self, mu: &DiscreteMeasure<S>) -> Result<()> {
        if self.len() != mu.len() {
            return Err(Error::LengthMismatch {
                expected: mu.len(),
                got: self.len(),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |a, v| a.max(v.abs()))
    }

    pub fn abs(&self) -> Self {
        Self::new(self.values.iter().map(|v| v.abs()).collect())
    }

    /// Multiply by the indicator of a set of atoms.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self::new(
            self.values
                .iter()
                .enumerate()
                .map(|(i, &v)| if keep(i) { v } else { S::zero() })
                .collect(),
        )
    }

    pub fn axpy(&mut self, a: S, other: &Self) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * *y;
        }
    }
}

impl<S> std::ops::Index<usize> for AtomFn<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

/// `<f>_Q`.
pub fn average<S: Scalar>(mu: &DiscreteMeasure<S>, f: &AtomFn<S>, q: &Cube) -> Result<S> {
    f.check_len(mu)?;
    let mut num = S::zero();
    let mut den = S::zero();
    for i in mu.atoms_in(q) {
        num += f[i] * mu.weight(i);
        den += mu.weight(i);
    }
    if den == S::zero() {
        return Err(Error::EmptyCube);
    }
    Ok(num / den)
}

/// Weighted inner product `sum f g w`.
pub fn inner<S: Scalar>(mu: &DiscreteMeasure<S>, f: &AtomFn<S>, g: &AtomFn<S>) -> S {
    f.values
        .iter()
        .zip(&g.values)
        .zip(mu.weights())
        .map(|((&a, &b), &w)| a * b * w)
        .sum()
}

pub fn lp_norm<S: Scalar>(mu: &DiscreteMeasure<S>, h: &AtomFn<S>, p: f64) -> S {
    let p_s = S::of(p);
    let s: S = h
        .values
        .iter()
        .zip(mu.weights())
        .map(|(&v, &w)| v.abs().powf(p_s) * w)
        .sum();
    s.powf(S::one() / p_s)
}

/// `sup_t t mu(|h| > t)^(1/p)`, attained as `t` increases to one of the values `|h(x)|`.
pub fn weak_lp_quasinorm<S: Scalar>(mu: &DiscreteMeasure<S>, h: &AtomFn<S>, p: f64) -> S {
    let mut pairs: Vec<(S, S)> = h
        .values
        .iter()
        .zip(mu.weights())
        .map(|(&v, &w)| (v.abs(), w))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite values"));
    let inv = S::one() / S::of(p);
    let mut best = S::zero();
    let mut mass = S::zero();
    let mut i = 0;
    while i < pairs.len() {
        let level = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == level {
            mass += pairs[i].1;
            i += 1;
        }
        best = best.max(level * mass.powf(inv));
    }
    best
}

/// `sup mu(B(x, r)) / r^m` over atoms `x` and the ladder `r_min 2^k` up to the diameter,
/// with open balls.
pub fn verify_growth<S: Scalar>(mu: &DiscreteMeasure<S>) -> S {
    let diam = mu.diameter();
    let mut radii = Vec::new();
    let mut r = mu.r_min;
    while r < diam {
        radii.push(r);
        r *= 2.0;
    }
    radii.push(if diam > mu.r_min { diam } else { mu.r_min });
    let n = mu.len();
    let mut best = S::zero();
    for i in 0..n {
        let mut by_dist: Vec<(f64, S)> = (0..n).map(|j| (mu.dist(i, j), mu.weight(j))).collect();
        by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(S::zero());
        for &(_, w) in &by_dist {
            let last = *prefix.last().expect("nonempty");
            prefix.push(last + w);
        }
        for &r in &radii {
            let inside = by_dist.partition_point(|e| e.0 < r);
            let ratio = prefix[inside] / S::of(r.powf(mu.m));
            best = best.max(ratio);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::free_cube;
    use proptest::prelude::*;

    pub(crate) fn line(n: usize) -> DiscreteMeasure<f64> {
        uniform_on_cube(1, &[0.5], 1.0, n, 1.0).unwrap()
    }

    #[test]
    fn average_examples() {
        let mu = line(8);
        let q = free_cube(&[0.0], -1);
        let f = AtomFn::new((0..8).map(|i| if i < 2 { 1.0 } else { 0.0 }).collect());
        assert_eq!(average(&mu, &f, &q).unwrap(), 0.5);
        assert_eq!(average(&mu, &AtomFn::constant(8, 1.0), &q).unwrap(), 1.0);
        assert_eq!(average(&mu, &f, &free_cube(&[5.0], 0)), Err(Error::EmptyCube));
    }

    #[test]
    fn growth_examples() {
        let mu = line(256);
        let c = verify_growth(&mu);
        // oracle: exhaustive open-ball count over atoms and ladder radii
        let mut oracle: f64 = 0.0;
        let diam = mu.diameter();
        let mut radii = vec![];
        let mut r = mu.r_min;
        while r < diam {
            radii.push(r);
            r *= 2.0;
        }
        radii.push(diam);
        for i in 0..mu.len() {
            for &r in &radii {
                let m: f64 = (0..mu.len()).filter(|&j| mu.dist(i, j) < r).map(|j| mu.weight(j)).sum();
                oracle = oracle.max(m / r);
            }
        }
        assert_eq!(c, oracle);
        assert!((1.0..=2.0).contains(&c), "C = {c}");

        let single = DiscreteMeasure::new(1, vec![vec![0.0]], vec![1.0], 1.0, 1.0).unwrap();
        assert_eq!(verify_growth(&single), 1.0);
        let doubled = mu.scaled(2.0);
        assert!((verify_growth(&doubled) - 2.0 * c).abs() < 1e-12 * c);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(DiscreteMeasure::new(1, vec![vec![0.0], vec![0.0]], vec![1.0, 1.0], 1.0, 1.0).is_err());
        assert!(DiscreteMeasure::new(1, vec![vec![0.0]], vec![0.0], 1.0, 1.0).is_err());
        assert!(DiscreteMeasure::<f64>::new(1, vec![], vec![], 1.0, 1.0).is_err());
    }

    #[test]
    fn norms_of_indicators() {
        let mu = line(16);
        let e = AtomFn::new((0..16).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect());
        let mass: f64 = (0..16).filter(|i| i % 3 == 0).map(|i| mu.weight(i)).sum();
        for p in [1.0, 1.5, 2.0, 3.0] {
            assert!((lp_norm(&mu, &e, p) - mass.powf(1.0 / p)).abs() < 1e-14);
            assert!((weak_lp_quasinorm(&mu, &e, p) - mass.powf(1.0 / p)).abs() < 1e-14);
        }
    }

    #[test]
    fn generic_over_f32() {
        let mu: DiscreteMeasure<f32> = line(8).cast();
        let h = AtomFn::new((0..8).map(|i| i as f32).collect());
        let l2 = lp_norm(&mu, &h, 2.0);
        let oracle = ((0..8).map(|i| (i * i) as f32 / 8.0).sum::<f32>()).sqrt();
        assert!((l2 - oracle).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn average_is_linear(vals in prop::collection::vec(-1.0f64..1.0, 32), other in prop::collection::vec(-1.0f64..1.0, 32), a in -2.0f64..2.0, b in -2.0f64..2.0, k in 0usize..4) {
            let mu = line(32);
            let f = AtomFn::new(vals);
            let g = AtomFn::new(other);
            let q = free_cube(&[k as f64 * 0.25], -2);
            let mut h = AtomFn::zeros(32);
            h.axpy(a, &f);
            h.axpy(b, &g);
            let lhs = average(&mu, &h, &q).unwrap();
            let rhs = a * average(&mu, &f, &q).unwrap() + b * average(&mu, &g, &q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!(average(&mu, &f, &q).unwrap().abs() <= f.max_abs() + 1e-15);
            // direct sum oracle for the p = 2 norm
            let direct: f64 = f.values.iter().zip(mu.weights()).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
            prop_assert!((lp_norm(&mu, &f, 2.0) - direct).abs() < 1e-12);
        }

        #[test]
        fn weak_below_strong(vals in prop::collection::vec(-3.0f64..3.0, 1..40), p in 1.0f64..4.0) {
            let mu = line(vals.len());
            let h = AtomFn::new(vals);
            prop_assert!(weak_lp_quasinorm(&mu, &h, p) <= lp_norm(&mu, &h, p) * (1.0 + 1e-12));
        }
    }
}
