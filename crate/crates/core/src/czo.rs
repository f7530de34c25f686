//! Kernels, their standardness check, and the discretized operator as a weighted matrix.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AtomFn, DiscreteMeasure};
use crate::rng::SeedTree;
use crate::scalar::Scalar;

pub const DEFAULT_DENSE_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    Zero,
    /// `1/(x - y)` on the line.
    Cauchy,
    /// `(x - y)_axis / |x - y|^(m + 1)`.
    Riesz { axis: usize },
    /// `1/|x - y|^power`; symmetric, standard only when `power` matches the homogeneity.
    InversePower { power: f64 },
    /// Pairwise values indexed by atom.
    Tabulated(Arc<TabulatedKernel>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedKernel {
    pub n_atoms: usize,
    pub values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(n_atoms: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_atoms * n_atoms {
            return Err(Error::LengthMismatch {
                expected: n_atoms * n_atoms,
                got: values.len(),
            });
        }
        Ok(Self { n_atoms, values })
    }

    /// Little-endian `u64` atom count followed by the row-major `f64` matrix.
    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        let n = u64::from_le_bytes(head) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * n * 8 {
            return Err(Error::Parse(format!(
                "kernel table for {n} atoms needs {} bytes, found {}",
                n * n * 8,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(n, values)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.n_atoms as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// A kernel together with the constants of its size and smoothness bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub dim: usize,
    pub m: f64,
    pub alpha: f64,
    pub c: f64,
    /// Exponent in the size bound `|K| <= C |x - y|^-s`.
    pub size_exponent: f64,
    pub scale: f64,
}

impl KernelSpec {
    pub fn zero(dim: usize) -> Self {
        Self {
            kind: KernelKind::Zero,
            dim,
            m: dim as f64,
            alpha: 1.0,
            c: 1.0,
            size_exponent: dim as f64,
            scale: 1.0,
        }
    }

    pub fn cauchy() -> Self {
        Self {
            kind: KernelKind::Cauchy,
            dim: 1,
            m: 1.0,
            alpha: 1.0,
            c: 2.0,
            size_exponent: 1.0,
            scale: 1.0,
        }
    }

    /// The gradient of `z_1 |z|^(-m-1)` is at most `(m + 2) |z|^(-m-1)`, and `|z|` halves at worst
    /// on admissible segments, hence `C = (m + 2) 2^(m + 1)`.
    pub fn riesz(dim: usize, m: f64, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::InvalidParameter(format!("axis {axis} in dimension {dim}")));
        }
        if m <= 0.0 {
            return Err(Error::InvalidParameter("homogeneity must be positive".into()));
        }
        Ok(Self {
            kind: KernelKind::Riesz { axis },
            dim,
            m,
            alpha: 1.0,
            c: (m + 2.0) * 2f64.powf(m + 1.0),
            size_exponent: m,
            scale: 1.0,
        })
    }

    pub fn inverse_power(dim: usize, power: f64, m: f64, alpha: f64, c: f64) -> Self {
        Self {
            kind: KernelKind::InversePower { power },
            dim,
            m,
            alpha,
            c,
            size_exponent: m,
            scale: 1.0,
        }
    }

    pub fn tabulated(table: TabulatedKernel, dim: usize, m: f64, alpha: f64, c: f64) -> Self {
        Self {
            kind: KernelKind::Tabulated(Arc::new(table)),
            dim,
            m,
            alpha,
            c,
            size_exponent: m,
            scale: 1.0,
        }
    }

    /// Multiply the kernel by `lambda`; the standardness constant scales with it.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.scale *= lambda;
        out.c *= lambda.abs().max(f64::MIN_POSITIVE);
        out
    }

    pub fn antisymmetric(&self) -> bool {
        match &self.kind {
            KernelKind::Zero | KernelKind::Cauchy | KernelKind::Riesz { .. } => true,
            KernelKind::InversePower { .. } => false,
            KernelKind::Tabulated(t) => (0..t.n_atoms)
                .all(|i| (0..t.n_atoms).all(|j| t.values[i * t.n_atoms + j] == -t.values[j * t.n_atoms + i])),
        }
    }

    /// `K(x_i, x_j)`.
    pub fn eval<S: Scalar>(&self, mu: &DiscreteMeasure<S>, i: usize, j: usize) -> Result<f64> {
        if let KernelKind::Tabulated(t) = &self.kind {
            if t.n_atoms != mu.len() {
                return Err(Error::LengthMismatch {
                    expected: mu.len(),
                    got: t.n_atoms,
                });
            }
            if i == j {
                return Err(Error::CoincidentPoints);
            }
            return Ok(self.scale * t.values[i * t.n_atoms + j]);
        }
        self.eval_points(mu.coords(i), mu.coords(j))
    }

    pub fn eval_points(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 == 0.0 {
            return Err(Error::CoincidentPoints);
        }
        let v = match &self.kind {
            KernelKind::Zero => 0.0,
            KernelKind::Cauchy => 1.0 / (x[0] - y[0]),
            KernelKind::Riesz { axis } => (x[*axis] - y[*axis]) / d2.sqrt().powf(self.m + 1.0),
            KernelKind::InversePower { power } => d2.sqrt().powf(-power),
            KernelKind::Tabulated(_) => {
                return Err(Error::InvalidParameter("tabulated kernels are indexed by atom".into()))
            }
        };
        Ok(self.scale * v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardReport {
    pub samples: usize,
    pub holder_samples: usize,
    pub size_ratio: f64,
    pub holder_x_ratio: f64,
    pub holder_y_ratio: f64,
    pub pass: bool,
}

/// Largest observed ratios in the size and both smoothness bounds over seeded triples.
pub fn verify_standard<S: Scalar>(
    k: &KernelSpec,
    mu: &DiscreteMeasure<S>,
    samples: usize,
    seed: u64,
) -> Result<StandardReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let n = mu.len();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two atoms".into()));
    }
    let results: Vec<Result<(f64, f64, f64, bool)>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = SeedTree::new(seed).rng("kernel-triples", s as u64);
            let x = rng.gen_range(0..n);
            let mut y = rng.gen_range(0..n - 1);
            if y >= x {
                y += 1;
            }
            let dxy = mu.dist(x, y);
            let kxy = k.eval(mu, x, y)?;
            let size = kxy.abs() * dxy.powf(k.size_exponent) / k.c;
            // perturb one endpoint within half the separation
            let near = |p: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Option<usize> {
                let cand: Vec<usize> = (0..n)
                    .filter(|&q| q != p && 2.0 * mu.dist(p, q) <= dxy && q != x && q != y)
                    .collect();
                (!cand.is_empty()).then(|| cand[rng.gen_range(0..cand.len())])
            };
            let scale = dxy.powf(k.m + k.alpha) / k.c;
            let (mut hx, mut hy, mut hit) = (0.0, 0.0, false);
            if let Some(xp) = near(x, &mut rng) {
                let dd = mu.dist(x, xp);
                hx = (kxy - k.eval(mu, xp, y)?).abs() * scale / dd.powf(k.alpha);
                hit = true;
            }
            if let Some(yp) = near(y, &mut rng) {
                let dd = mu.dist(y, yp);
                hy = (kxy - k.eval(mu, x, yp)?).abs() * scale / dd.powf(k.alpha);
                hit = true;
            }
            Ok((size, hx, hy, hit))
        })
        .collect();
    let mut rep = StandardReport {
        samples,
        holder_samples: 0,
        size_ratio: 0.0,
        holder_x_ratio: 0.0,
        holder_y_ratio: 0.0,
        pass: false,
    };
    for r in results {
        let (s, hx, hy, hit) = r?;
        rep.size_ratio = rep.size_ratio.max(s);
        rep.holder_x_ratio = rep.holder_x_ratio.max(hx);
        rep.holder_y_ratio = rep.holder_y_ratio.max(hy);
        rep.holder_samples += hit as usize;
    }
    rep.pass = rep.size_ratio <= 1.0 && rep.holder_x_ratio <= 1.0 && rep.holder_y_ratio <= 1.0;
    Ok(rep)
}

/// `T[i][j] = K(x_i, x_j) w_j` off the diagonal, zero on it; row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedOperator<S> {
    n: usize,
    matrix: Vec<S>,
    weights: Vec<S>,
}

pub fn discretize<S: Scalar>(k: &KernelSpec, mu: &DiscreteMeasure<S>) -> Result<DiscretizedOperator<S>> {
    if k.dim != mu.dim() {
        return Err(Error::InvalidParameter(format!(
            "kernel dimension {} vs measure dimension {}",
            k.dim,
            mu.dim()
        )));
    }
    let n = mu.len();
    let rows: Vec<Result<Vec<S>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Ok(S::zero())
                    } else {
                        Ok(S::of(k.eval(mu, i, j)?) * mu.weight(j))
                    }
                })
                .collect()
        })
        .collect();
    let mut matrix = Vec::with_capacity(n * n);
    for r in rows {
        matrix.extend(r?);
    }
    Ok(DiscretizedOperator {
        n,
        matrix,
        weights: mu.weights().to_vec(),
    })
}

impl<S: Scalar> DiscretizedOperator<S> {
    /// From kernel values `K[i][j]` (row-major); the diagonal is discarded.
    pub fn from_kernel_values(kernel: &[S], weights: &[S]) -> Result<Self> {
        let n = weights.len();
        if kernel.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: kernel.len(),
            });
        }
        let matrix = (0..n * n)
            .map(|e| {
                let (i, j) = (e / n, e % n);
                if i == j {
                    S::zero()
                } else {
                    kernel[e] * weights[j]
                }
            })
            .collect();
        Ok(Self {
            n,
            matrix,
            weights: weights.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, i: usize, j: usize) -> S {
        self.matrix[i * self.n + j]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn scaled(&self, lambda: S) -> Self {
        let mut out = self.clone();
        out.matrix.iter_mut().for_each(|v| *v *= lambda);
        out
    }

    pub fn apply(&self, f: &AtomFn<S>) -> AtomFn<S> {
        assert_eq!(f.len(), self.n, "length mismatch");
        AtomFn::new(
            self.matrix
                .par_chunks(self.n.max(1))
                .map(|row| row.iter().zip(&f.values).map(|(&t, &v)| t * v).sum())
                .collect(),
        )
    }

    /// `(T f)(x_i)` for the listed rows, with `f` read only on `cols`.
    pub fn apply_block(&self, f: &AtomFn<S>, cols: &[usize], rows: &[usize]) -> Vec<S> {
        rows.par_iter()
            .map(|&i| {
                let row = &self.matrix[i * self.n..(i + 1) * self.n];
                cols.iter().map(|&j| row[j] * f[j]).sum()
            })
            .collect()
    }

    /// `(T* g)_j = w_j^-1 sum_i w_i T_ij g_i`, the adjoint in `L^2(mu)`.
    pub fn adjoint_apply(&self, g: &AtomFn<S>) -> AtomFn<S> {
        assert_eq!(g.len(), self.n, "length mismatch");
        let n = self.n;
        AtomFn::new(
            (0..n)
                .into_par_iter()
                .map(|j| {
                    let s: S = (0..n).map(|i| self.weights[i] * self.matrix[i * n + j] * g[i]).sum();
                    s / self.weights[j]
                })
                .collect(),
        )
    }

    pub fn adjoint_apply_block(&self, g: &AtomFn<S>, cols: &[usize], rows: &[usize]) -> Vec<S> {
        let n = self.n;
        rows.par_iter()
            .map(|&j| {
                let s: S = cols.iter().map(|&i| self.weights[i] * self.matrix[i * n + j] * g[i]).sum();
                s / self.weights[j]
            })
            .collect()
    }

    /// `T*` as an operator of its own, so that `apply` on it matches [`Self::adjoint_apply`].
    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut matrix = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                matrix[j * n + i] = self.matrix[i * n + j] * self.weights[i] / self.weights[j];
            }
        }
        Self {
            n,
            matrix,
            weights: self.weights.clone(),
        }
    }

    /// `<T f, g>` in `L^2(mu)`.
    pub fn pair(&self, f: &AtomFn<S>, g: &AtomFn<S>) -> S {
        let tf = self.apply(f);
        tf.values
            .iter()
            .zip(&g.values)
            .zip(&self.weights)
            .map(|((&a, &b), &w)| a * b * w)
            .sum()
    }

    /// The matrix of the operator in the orthonormal basis `w^-1/2 e_i`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.n;
        let sq: Vec<f64> = self.weights.iter().map(|w| w.as_f64().sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| sq[i] * self.matrix[i * n + j].as_f64() / sq[j])
    }

    /// `||T||_{L^2(mu) -> L^2(mu)}` as the top singular value of `W^1/2 T W^-1/2`.
    pub fn op_norm(&self, dense_limit: usize) -> Result<f64> {
        if self.n > dense_limit {
            return Err(Error::DenseLimit {
                atoms: self.n,
                limit: dense_limit,
            });
        }
        if self.n == 0 {
            return Ok(0.0);
        }
        Ok(self.symmetrized().singular_values().max())
    }
}

/// Power iteration on `A^T A` for the same norm; an independent check of [`DiscretizedOperator::op_norm`].
pub fn power_norm<S: Scalar>(op: &DiscretizedOperator<S>, max_iter: usize, tol: f64, seed: u64) -> f64 {
    let a = op.symmetrized();
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut rng = SeedTree::new(seed).rng("power-iteration", 0);
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    v /= v.norm();
    let ata = a.transpose() * &a;
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = &ata * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{inner, lp_norm, random_uniform, uniform_on_cube};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn line(n: usize) -> DiscreteMeasure<f64> {
        uniform_on_cube(1, &[0.5], 1.0, n, 1.0).unwrap()
    }

    fn random_fn(n: usize, seed: u64) -> AtomFn<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AtomFn::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn plane(n: usize, seed: u64) -> DiscreteMeasure<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mu: DiscreteMeasure<f64> = random_uniform(2, &[0.0, 0.0], 1.0, n, 1.0, &mut rng).unwrap();
        let w = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
        DiscreteMeasure::new(2, (0..n).map(|i| mu.coords(i).to_vec()).collect(), w, 2.0, mu.r_min).unwrap()
    }

    /// Every admissible triple, exhaustively.
    fn exhaustive_ratios(k: &KernelSpec, mu: &DiscreteMeasure<f64>) -> (f64, f64) {
        let n = mu.len();
        let (mut size, mut holder): (f64, f64) = (0.0, 0.0);
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let d = mu.dist(x, y);
                let kxy = k.eval(mu, x, y).unwrap();
                size = size.max(kxy.abs() * d.powf(k.m) / k.c);
                for xp in 0..n {
                    let e = mu.dist(x, xp);
                    if xp == x || xp == y || 2.0 * e > d {
                        continue;
                    }
                    let a = (kxy - k.eval(mu, xp, y).unwrap()).abs() * d.powf(k.m + k.alpha) / (k.c * e.powf(k.alpha));
                    let b = (kxy - k.eval(mu, x, xp).unwrap()).abs();
                    // y-variant with the roles of x and y swapped
                    let b = if 2.0 * mu.dist(y, xp) <= d && xp != y {
                        b * d.powf(k.m + k.alpha) / (k.c * mu.dist(y, xp).powf(k.alpha))
                    } else {
                        0.0
                    };
                    holder = holder.max(a).max(b);
                }
            }
        }
        (size, holder)
    }

    #[test]
    fn cauchy_is_standard_with_c2() {
        let mu = line(64);
        let k = KernelSpec::cauchy();
        let (size, holder) = exhaustive_ratios(&k, &mu);
        assert!(size <= 1.0 && holder <= 1.0, "{size} {holder}");
        let rep = verify_standard(&k, &mu, 2000, 3).unwrap();
        assert!(rep.pass);
        assert!(rep.holder_samples > 0);
        assert!(rep.size_ratio <= size && rep.holder_x_ratio.max(rep.holder_y_ratio) <= holder);
    }

    #[test]
    fn riesz_is_standard() {
        let mu = plane(48, 4);
        for axis in 0..2 {
            let k = KernelSpec::riesz(2, 2.0, axis).unwrap();
            let (size, holder) = exhaustive_ratios(&k, &mu);
            assert!(size <= 1.0 && holder <= 1.0);
            assert!(verify_standard(&k, &mu, 1000, 5).unwrap().pass);
        }
    }

    #[test]
    fn zero_passes_and_inverse_square_fails() {
        let mu = line(64);
        let z = verify_standard(&KernelSpec::zero(1), &mu, 100, 1).unwrap();
        assert!(z.pass && z.size_ratio == 0.0);
        let k = KernelSpec::inverse_power(1, 2.0, 1.0, 1.0, 2.0);
        let rep = verify_standard(&k, &mu, 2000, 1).unwrap();
        assert!(!rep.pass);
        // ratio 1/(C d) at the closest pair
        let (size, _) = exhaustive_ratios(&k, &mu);
        assert!((size - 64.0 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_points_rejected() {
        let k = KernelSpec::cauchy();
        assert_eq!(k.eval_points(&[0.5], &[0.5]), Err(Error::CoincidentPoints));
        assert!(verify_standard(&k, &line(4), 0, 1).is_err());
    }

    #[test]
    fn two_atom_cauchy_matrix() {
        let mu = DiscreteMeasure::new(1, vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], 1.0, 1.0).unwrap();
        let t = discretize(&KernelSpec::cauchy(), &mu).unwrap();
        assert_eq!(t.matrix, vec![0.0, -1.0, 1.0, 0.0]);
        assert!((t.op_norm(DEFAULT_DENSE_LIMIT).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_is_isometry() {
        let mu = DiscreteMeasure::new(1, vec![vec![0.0], vec![1.0]], vec![0.5, 0.5], 1.0, 1.0).unwrap();
        // K == 1 with equal weights w: T swaps the two atoms up to the factor w
        let t = discretize(&KernelSpec::inverse_power(1, 0.0, 1.0, 1.0, 1.0), &mu).unwrap();
        assert!((t.scaled(2.0).op_norm(DEFAULT_DENSE_LIMIT).unwrap() - 1.0).abs() < 1e-15);
        let z = discretize(&KernelSpec::zero(1), &mu).unwrap();
        assert_eq!(z.op_norm(DEFAULT_DENSE_LIMIT).unwrap(), 0.0);
    }

    #[test]
    fn explicit_adjoint_matches_adjoint_apply() {
        let mu = plane(40, 5);
        let t = discretize(&KernelSpec::riesz(2, 2.0, 1).unwrap(), &mu).unwrap();
        let ta = t.adjoint();
        let g = random_fn(40, 6);
        let a = ta.apply(&g);
        let b = t.adjoint_apply(&g);
        for i in 0..40 {
            assert!((a[i] - b[i]).abs() <= 1e-12 * (1.0 + b[i].abs()));
        }
        let back = ta.adjoint();
        for (x, y) in back.matrix.iter().zip(&t.matrix) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn dense_limit_enforced() {
        let t = discretize(&KernelSpec::cauchy(), &line(10)).unwrap();
        assert_eq!(t.op_norm(8), Err(Error::DenseLimit { atoms: 10, limit: 8 }));
    }

    #[test]
    fn op_norm_matches_power_iteration() {
        for (seed, n) in [(1u64, 80usize), (2, 150)] {
            let mu = plane(n, seed);
            let t = discretize(&KernelSpec::riesz(2, 2.0, 0).unwrap(), &mu).unwrap();
            let svd = t.op_norm(DEFAULT_DENSE_LIMIT).unwrap();
            let pw = power_norm(&t, 200_000, 1e-15, seed);
            assert!((svd - pw).abs() <= 1e-6 * svd, "{svd} {pw}");
        }
        let sym = discretize(&KernelSpec::inverse_power(2, 1.0, 2.0, 1.0, 4.0), &plane(60, 9)).unwrap();
        let svd = sym.op_norm(DEFAULT_DENSE_LIMIT).unwrap();
        assert!((svd - power_norm(&sym, 200_000, 1e-15, 1)).abs() <= 1e-6 * svd);
    }

    #[test]
    fn tabulated_round_trip() {
        let mu = line(6);
        let t = discretize(&KernelSpec::cauchy(), &mu).unwrap();
        let values: Vec<f64> = (0..36)
            .map(|e| if e / 6 == e % 6 { 0.0 } else { KernelSpec::cauchy().eval(&mu, e / 6, e % 6).unwrap() })
            .collect();
        let table = TabulatedKernel::new(6, values).unwrap();
        let mut bytes = Vec::new();
        table.write(&mut bytes).unwrap();
        let back = TabulatedKernel::read(&bytes[..]).unwrap();
        assert_eq!(back, table);
        let spec = KernelSpec::tabulated(back, 1, 1.0, 1.0, 2.0);
        assert!(spec.antisymmetric());
        assert_eq!(discretize(&spec, &mu).unwrap(), t);
        assert!(TabulatedKernel::read(&bytes[..20]).is_err());
    }

    #[test]
    fn f32_operator() {
        let mu: DiscreteMeasure<f32> = line(32).cast();
        let t = discretize(&KernelSpec::cauchy(), &mu).unwrap();
        let f = AtomFn::new((0..32).map(|i| (i as f32 * 0.37).sin()).collect());
        assert!(t.pair(&f, &f).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn pairing_matches_double_sum_and_duality(seed in 0u64..1000) {
            let mu = plane(40, seed);
            let t = discretize(&KernelSpec::riesz(2, 2.0, 1).unwrap(), &mu).unwrap();
            let f = random_fn(40, seed ^ 1);
            let g = random_fn(40, seed ^ 2);
            let k = KernelSpec::riesz(2, 2.0, 1).unwrap();
            let mut oracle = 0.0;
            for i in 0..40 {
                for j in 0..40 {
                    if i != j {
                        oracle += k.eval(&mu, i, j).unwrap() * f[j] * mu.weight(j) * g[i] * mu.weight(i);
                    }
                }
            }
            let p = t.pair(&f, &g);
            prop_assert!((p - oracle).abs() <= 1e-12 * oracle.abs().max(1e-3));
            let dual = inner(&mu, &f, &t.adjoint_apply(&g));
            prop_assert!((p - dual).abs() <= 1e-12 * p.abs().max(1e-3));
            let norm = t.op_norm(DEFAULT_DENSE_LIMIT).unwrap();
            prop_assert!(t.pair(&f, &f).abs() <= 1e-12 * norm * lp_norm(&mu, &f, 2.0).powi(2));
            let bound = norm * lp_norm(&mu, &f, 2.0) * lp_norm(&mu, &g, 2.0);
            prop_assert!(p.abs() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn op_norm_permutation_invariant(seed in 0u64..200) {
            let mu = plane(24, seed);
            let mut idx: Vec<usize> = (0..24).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
            let perm = DiscreteMeasure::new(
                2,
                idx.iter().map(|&i| mu.coords(i).to_vec()).collect(),
                idx.iter().map(|&i| mu.weight(i)).collect(),
                2.0,
                mu.r_min,
            ).unwrap();
            let k = KernelSpec::riesz(2, 2.0, 0).unwrap();
            let a = discretize(&k, &mu).unwrap().op_norm(DEFAULT_DENSE_LIMIT).unwrap();
            let b = discretize(&k, &perm).unwrap().op_norm(DEFAULT_DENSE_LIMIT).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
