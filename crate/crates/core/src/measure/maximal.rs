use rand::Rng;
use rayon::prelude::*;

use super::{AtomFn, DiscreteMeasure};
use crate::error::Result;
use crate::geometry::ShiftedDyadicGrid;
use crate::rng::SeedTree;
use crate::scalar::Scalar;
use crate::tree::CubeTree;

const GROUP_END: u32 = 1 << 31;

/// Per-atom neighbour orderings by exact distance, for closed-ball maximal functions.
#[derive(Clone, Debug)]
pub struct MaximalEngine<S> {
    n: usize,
    rows: Vec<u32>,
    weights: Vec<S>,
}

impl<S: Scalar> MaximalEngine<S> {
    pub fn new(mu: &DiscreteMeasure<S>) -> Self {
        let n = mu.len();
        assert!(n < GROUP_END as usize, "too many atoms");
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<(i128, u32)> = (0..n).map(|j| (mu.dist_sq_exact(i, j), j as u32)).collect();
                row.sort_unstable();
                let mut out = Vec::with_capacity(n);
                for k in 0..n {
                    let end = k + 1 == n || row[k + 1].0 != row[k].0;
                    out.push(row[k].1 | if end { GROUP_END } else { 0 });
                }
                out
            })
            .collect();
        Self {
            n,
            rows: rows.concat(),
            weights: mu.weights().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    /// Neighbours of atom `i` by increasing distance (including `i`).
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().map(|&e| (e & !GROUP_END) as usize)
    }

    /// `M h(x_i)` for a nonnegative `h`.
    fn at_abs(&self, i: usize, h_abs: &[S]) -> S {
        let mut num = S::zero();
        let mut den = S::zero();
        let mut best = S::zero();
        for &e in self.row(i) {
            let j = (e & !GROUP_END) as usize;
            num += h_abs[j] * self.weights[j];
            den += self.weights[j];
            if e & GROUP_END != 0 {
                best = best.max(num / den);
            }
        }
        best
    }

    pub fn at(&self, i: usize, h: &AtomFn<S>) -> S {
        let abs: Vec<S> = h.values.iter().map(|v| v.abs()).collect();
        self.at_abs(i, &abs)
    }

    pub fn apply(&self, h: &AtomFn<S>) -> AtomFn<S> {
        let abs: Vec<S> = h.values.iter().map(|v| v.abs()).collect();
        AtomFn::new((0..self.n).into_par_iter().map(|i| self.at_abs(i, &abs)).collect())
    }

    /// `M h` evaluated only at the listed atoms.
    pub fn apply_on(&self, h: &AtomFn<S>, atoms: &[usize]) -> Vec<S> {
        let abs: Vec<S> = h.values.iter().map(|v| v.abs()).collect();
        atoms.par_iter().map(|&i| self.at_abs(i, &abs)).collect()
    }

    fn ratio(&self, h: &[S]) -> S {
        let num: S = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let m = self.at_abs(i, h);
                m * m * self.weights[i]
            })
            .collect::<Vec<S>>()
            .into_iter()
            .sum();
        let den: S = h.iter().zip(&self.weights).map(|(&v, &w)| v * v * w).sum();
        if den == S::zero() {
            S::zero()
        } else {
            (num / den).sqrt()
        }
    }

    /// `||M e_j|| / ||e_j||` for every coordinate indicator, in one pass.
    pub fn indicator_ratios(&self) -> Vec<S> {
        let partial: Vec<Vec<S>> = (0..self.n)
            .into_par_iter()
            .map(|x| {
                let mut acc = vec![S::zero(); self.n];
                let mut cum = S::zero();
                let mut group: Vec<usize> = Vec::new();
                for &e in self.row(x) {
                    let j = (e & !GROUP_END) as usize;
                    cum += self.weights[j];
                    group.push(j);
                    if e & GROUP_END != 0 {
                        for &k in &group {
                            let v = self.weights[k] / cum;
                            acc[k] = v * v * self.weights[x];
                        }
                        group.clear();
                    }
                }
                acc
            })
            .collect();
        (0..self.n)
            .map(|j| {
                let s: S = partial.iter().map(|row| row[j]).sum();
                (s / self.weights[j]).sqrt()
            })
            .collect()
    }

    /// Probe-set estimate of the L^2 operator norm; see [`maximal_op_norm`].
    pub fn op_norm(&self, seed: u64) -> MaximalNorm<S> {
        let n = self.n;
        let mut probes = 0usize;
        let mut best = S::one();
        let mut best_vec = vec![S::one(); n];
        let consider = |h: Vec<S>, probes: &mut usize, best: &mut S, best_vec: &mut Vec<S>| {
            *probes += 1;
            let r = self.ratio(&h);
            if r > *best {
                *best = r;
                *best_vec = h;
            }
        };
        probes += 1; // constants

        let ind = self.indicator_ratios();
        probes += n;
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| ind[b].partial_cmp(&ind[a]).expect("finite").then(a.cmp(&b)));
        if ind[ranked[0]] > best {
            best = ind[ranked[0]];
            best_vec = vec![S::zero(); n];
            best_vec[ranked[0]] = S::one();
        }

        for &j in ranked.iter().take(8) {
            let near: Vec<usize> = self.neighbours(j).collect();
            let mut size = 2;
            while size < n {
                let mut h = vec![S::zero(); n];
                for &k in &near[..size] {
                    h[k] = S::one();
                }
                consider(h, &mut probes, &mut best, &mut best_vec);
                size *= 2;
            }
            if n > 1 {
                let mut h = vec![S::zero(); n];
                h[j] = S::one();
                h[near[1]] = S::half();
                consider(h, &mut probes, &mut best, &mut best_vec);
            }
        }

        let seeds = SeedTree::new(seed);
        let mut rng = seeds.rng("maximal-probes", 0);
        for k in 0..32 {
            let sparse = k >= 16;
            let h: Vec<S> = (0..n)
                .map(|_| {
                    if sparse && rng.gen::<f64>() > 0.1 {
                        S::zero()
                    } else {
                        S::of(rng.gen::<f64>())
                    }
                })
                .collect();
            if h.iter().any(|&v| v > S::zero()) {
                consider(h, &mut probes, &mut best, &mut best_vec);
            }
        }

        // local ascent from the best probe
        let mut h = best_vec.clone();
        for _ in 0..64 {
            let k = rng.gen_range(0..n);
            let factor = match rng.gen_range(0..3) {
                0 => S::of(2.0),
                1 => S::half(),
                _ => S::zero(),
            };
            let mut trial = h.clone();
            trial[k] = if trial[k] == S::zero() { S::of(rng.gen::<f64>()) } else { trial[k] * factor };
            if trial.iter().all(|&v| v == S::zero()) {
                continue;
            }
            probes += 1;
            let r = self.ratio(&trial);
            if r > best {
                best = r;
                h = trial;
            }
        }
        MaximalNorm { norm: best, probes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaximalNorm<S> {
    pub norm: S,
    pub probes: usize,
}

/// Centred maximal function over closed balls centred at atoms.
pub fn centred_maximal<S: Scalar>(mu: &DiscreteMeasure<S>, h: &AtomFn<S>) -> AtomFn<S> {
    MaximalEngine::new(mu).apply(h)
}

/// Largest `||M h|| / ||h||` over indicators, ball indicators, positive combinations,
/// seeded random nonnegative functions and a short local ascent.
pub fn maximal_op_norm<S: Scalar>(mu: &DiscreteMeasure<S>, seed: u64) -> MaximalNorm<S> {
    MaximalEngine::new(mu).op_norm(seed)
}

/// `sup` of `<|h|>_Q` over grid cubes `Q` containing each atom; zero outside the root.
pub fn dyadic_maximal<S: Scalar>(
    mu: &DiscreteMeasure<S>,
    h: &AtomFn<S>,
    grid: &ShiftedDyadicGrid,
) -> Result<AtomFn<S>> {
    let tree = CubeTree::build(grid, mu)?;
    Ok(dyadic_maximal_on(&tree, mu, h))
}

pub fn dyadic_maximal_on<S: Scalar>(tree: &CubeTree<S>, mu: &DiscreteMeasure<S>, h: &AtomFn<S>) -> AtomFn<S> {
    let avg = tree.averages(mu, &h.abs());
    let mut best = vec![S::zero(); tree.len()];
    for id in 0..tree.len() {
        let up = tree.node(id).parent.map(|p| best[p]).unwrap_or(S::zero());
        best[id] = up.max(avg[id]);
    }
    let mut out = AtomFn::zeros(mu.len());
    for a in 0..mu.len() {
        if let Some(l) = tree.leaf_of[a] {
            out.values[a] = best[l];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::measure::{random_uniform, uniform_on_cube};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Closed-ball averages over every atom distance and `r_min`, by direct scan.
    fn brute_maximal(mu: &DiscreteMeasure<f64>, h: &AtomFn<f64>) -> Vec<f64> {
        (0..mu.len())
            .map(|i| {
                let mut radii: Vec<f64> = (0..mu.len()).map(|j| mu.dist(i, j)).collect();
                radii.push(mu.r_min);
                radii
                    .iter()
                    .map(|&r| {
                        let inside: Vec<usize> = (0..mu.len()).filter(|&j| mu.dist(i, j) <= r).collect();
                        let num: f64 = inside.iter().map(|&j| h[j].abs() * mu.weight(j)).sum();
                        let den: f64 = inside.iter().map(|&j| mu.weight(j)).sum();
                        num / den
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    fn random_measure(seed: u64, n: usize, dim: usize) -> DiscreteMeasure<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mu: DiscreteMeasure<f64> = random_uniform(dim, &vec![0.0; dim], 1.0, n, 1.0, &mut rng).unwrap();
        // uneven weights
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let pts = (0..n).map(|i| mu.coords(i).to_vec()).collect();
        mu = DiscreteMeasure::new(dim, pts, w, dim as f64, mu.r_min).unwrap();
        mu
    }

    #[test]
    fn centred_matches_brute_force() {
        for (seed, dim) in [(1u64, 1usize), (2, 2), (3, 2)] {
            let mu = random_measure(seed, 60, dim);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let h = AtomFn::new((0..60).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let fast = centred_maximal(&mu, &h);
            let slow = brute_maximal(&mu, &h);
            for i in 0..60 {
                assert!((fast[i] - slow[i]).abs() <= 1e-15 * slow[i].max(1.0));
                assert!(fast[i] >= h[i].abs() * (1.0 - 1e-15));
            }
        }
    }

    #[test]
    fn ties_are_grouped() {
        // lattice atoms are equidistant in pairs
        let mu: DiscreteMeasure<f64> = uniform_on_cube(1, &[0.5], 1.0, 9, 1.0).unwrap();
        let h = AtomFn::new((0..9).map(|i| if i == 3 { 1.0 } else { 0.0 }).collect());
        let fast = centred_maximal(&mu, &h);
        let slow = brute_maximal(&mu, &h);
        assert_eq!(fast.values, slow);
    }

    #[test]
    fn constants_and_single_atom() {
        let mu = random_measure(5, 20, 1);
        let m = centred_maximal(&mu, &AtomFn::constant(20, -3.0));
        assert!(m.values.iter().all(|&v| (v - 3.0).abs() < 1e-14));
        let single = DiscreteMeasure::new(1, vec![vec![0.0]], vec![2.0], 1.0, 1.0).unwrap();
        assert_eq!(maximal_op_norm(&single, 1).norm, 1.0);
        assert!(maximal_op_norm(&mu, 1).norm >= 1.0);
    }

    #[test]
    fn indicator_ratios_match_direct() {
        let mu = random_measure(9, 30, 2);
        let eng = MaximalEngine::new(&mu);
        let fast = eng.indicator_ratios();
        for j in 0..30 {
            let mut h = AtomFn::zeros(30);
            h.values[j] = 1.0;
            let m = eng.apply(&h);
            let direct = (crate::measure::inner(&mu, &m, &m) / mu.weight(j)).sqrt();
            assert!((fast[j] - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn op_norm_against_dense_sphere_sampling() {
        for seed in [21u64, 22, 23] {
            let mu = random_measure(seed, 4, 1);
            let eng = MaximalEngine::new(&mu);
            let est = eng.op_norm(seed).norm;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut oracle: f64 = 0.0;
            for _ in 0..10_000 {
                let h = AtomFn::new((0..4).map(|_| rng.gen::<f64>().powi(3)).collect());
                let m = eng.apply(&h);
                oracle = oracle.max((crate::measure::inner(&mu, &m, &m) / crate::measure::inner(&mu, &h, &h)).sqrt());
            }
            assert!((est - oracle).abs() <= 0.02 * oracle, "est {est} oracle {oracle}");
        }
    }

    #[test]
    fn dyadic_maximal_examples() {
        let mu: DiscreteMeasure<f64> = uniform_on_cube(1, &[0.0], 2.0, 16, 1.0).unwrap();
        let grid = build_grid(&[0.0], 0, 3, 1).unwrap(); // root [-1, 1)
        let one = dyadic_maximal(&mu, &AtomFn::constant(16, 1.0), &grid).unwrap();
        assert!(one.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // supported on the right child: the left child sees the root average
        let h = AtomFn::new((0..16).map(|i| if i >= 8 { (i as f64) / 4.0 } else { 0.0 }).collect());
        let m = dyadic_maximal(&mu, &h, &grid).unwrap();
        let root_avg: f64 = h.values.iter().sum::<f64>() / 16.0;
        for i in 0..8 {
            assert!((m[i] - root_avg).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn dyadic_below_multiple_of_centred(seed in 0u64..500) {
            let mu = random_measure(seed, 40, 1);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = AtomFn::new((0..40).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let grid = build_grid(&[0.0], 0, 6, 1).unwrap();
            let d = dyadic_maximal(&mu, &h, &grid).unwrap();
            let c = centred_maximal(&mu, &h);
            // constant of the instance: a cube of side l sits in a ball of radius l around any of its atoms,
            // whose mass is at most C mu(cube); bounded by the instance's mass ratio
            let tree = CubeTree::build(&grid, &mu).unwrap();
            let mut ratio: f64 = 1.0;
            for id in 0..tree.len() {
                let l = tree.side(id);
                for &a in tree.atoms(id) {
                    let ball: f64 = (0..40).filter(|&j| mu.dist(a, j) <= l).map(|j| mu.weight(j)).sum();
                    ratio = ratio.max(ball / tree.mass(id));
                }
            }
            for i in 0..40 {
                prop_assert!(d[i] <= ratio * c[i] * (1.0 + 1e-12));
            }
        }

        #[test]
        fn maximal_is_sublinear_and_monotone(seed in 0u64..500) {
            let mu = random_measure(seed, 30, 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = AtomFn::new((0..30).map(|_| rng.gen::<f64>()).collect());
            let b = AtomFn::new((0..30).map(|_| rng.gen::<f64>()).collect());
            let mut s = a.clone();
            s.axpy(1.0, &b);
            let eng = MaximalEngine::new(&mu);
            let (ma, mb, ms) = (eng.apply(&a), eng.apply(&b), eng.apply(&s));
            for i in 0..30 {
                prop_assert!(ms[i] <= ma[i] + mb[i] + 1e-12);
                prop_assert!(ma[i] <= ms[i] + 1e-12);
            }
        }
    }
}
