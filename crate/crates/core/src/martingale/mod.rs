//! Twisted martingale differences adapted to a stopping tree, and transforms built from them.

mod jn;
mod truncation;

pub use jn::{jn_decompose, JnLevel, JnReport, TAIL_LEVELS};
pub use truncation::{
    classical_field, classical_truncation_norm, dq1_testing, dq_maximal_norm, half_twisted_field,
    sawyer_testing_check, CoefField, SawyerReport, Scope,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::{AtomFn, DiscreteMeasure};
use crate::scalar::Scalar;
use crate::stopping::StoppingTree;
use crate::testfns::TestFunctionFamily;
use crate::tree::{CubeTree, NodeId};

/// Value at tree position `p` of the test function of the stopping ancestor of `q`.
fn anchor_value<S: Scalar>(tree: &CubeTree<S>, st: &StoppingTree<S>, fam: &TestFunctionFamily<S>, q: NodeId, p: usize) -> S {
    let f = st.ancestor_node(q);
    fam.local(f)[p - tree.node(f).start]
}

/// `<f>_Q / <b_{Q^a}>_Q` for every node.
fn twisted_coefficients<S: Scalar>(tree: &CubeTree<S>, st: &StoppingTree<S>, mu: &DiscreteMeasure<S>, f: &AtomFn<S>) -> Vec<S> {
    let half = S::half();
    tree.averages(mu, f)
        .into_iter()
        .zip(&st.ancestor_average)
        .map(|(a, &b)| {
            assert!(b.abs() >= half, "ancestor average below 1/2 off the stopping cubes");
            a / b
        })
        .collect()
}

fn delta_local<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    fam: &TestFunctionFamily<S>,
    coef: &[S],
    q: NodeId,
) -> Vec<S> {
    let node = tree.node(q);
    let mut out = vec![S::zero(); node.len()];
    for &c in &node.children {
        let cn = tree.node(c);
        for p in cn.start..cn.end {
            out[p - node.start] =
                coef[c] * anchor_value(tree, st, fam, c, p) - coef[q] * anchor_value(tree, st, fam, q, p);
        }
    }
    out
}

/// `Delta_Q f`, extended by zero.
pub fn twisted_delta<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    fam: &TestFunctionFamily<S>,
    mu: &DiscreteMeasure<S>,
    f: &AtomFn<S>,
    q: NodeId,
) -> AtomFn<S> {
    let coef = twisted_coefficients(tree, st, mu, f);
    let local = delta_local(tree, st, fam, &coef, q);
    let mut out = AtomFn::zeros(mu.len());
    for (&a, &v) in tree.atoms(q).iter().zip(&local) {
        out.values[a] = v;
    }
    out
}

/// All differences of one function, stored on each cube's atom slice.
#[derive(Clone, Debug)]
pub struct Decomposition<S> {
    pieces: Vec<Vec<S>>,
    /// `<f>_{Q*} b_{Q*}`.
    pub residual: AtomFn<S>,
    /// `max |f - sum Delta_Q f - residual|`.
    pub reconstruction_residual: f64,
}

pub fn expand<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    fam: &TestFunctionFamily<S>,
    mu: &DiscreteMeasure<S>,
    f: &AtomFn<S>,
) -> Result<Decomposition<S>> {
    f.check_len(mu)?;
    if (0..mu.len()).any(|a| tree.pos[a].is_none() && f[a] != S::zero()) {
        return Err(Error::InvalidParameter("function not supported in the root".into()));
    }
    let coef = twisted_coefficients(tree, st, mu, f);
    let pieces: Vec<Vec<S>> = (0..tree.len())
        .map(|q| {
            if tree.node(q).children.is_empty() {
                Vec::new()
            } else {
                delta_local(tree, st, fam, &coef, q)
            }
        })
        .collect();
    let mut residual = fam.function(tree, 0, mu.len());
    residual.values.iter_mut().for_each(|v| *v *= coef[0]);
    let mut total = residual.clone();
    for (q, piece) in pieces.iter().enumerate() {
        for (&a, &v) in tree.atoms(q).iter().zip(piece) {
            total.values[a] += v;
        }
    }
    let recon = total
        .values
        .iter()
        .zip(&f.values)
        .fold(0.0f64, |m, (&t, &x)| m.max((t - x).abs().as_f64()));
    Ok(Decomposition {
        pieces,
        residual,
        reconstruction_residual: recon,
    })
}

impl<S: Scalar> Decomposition<S> {
    /// `Delta_Q f` on `tree.atoms(q)`; empty for leaves.
    pub fn local(&self, q: NodeId) -> &[S] {
        &self.pieces[q]
    }

    pub fn piece(&self, tree: &CubeTree<S>, q: NodeId, n_atoms: usize) -> AtomFn<S> {
        let mut out = AtomFn::zeros(n_atoms);
        for (&a, &v) in tree.atoms(q).iter().zip(&self.pieces[q]) {
            out.values[a] = v;
        }
        out
    }

    /// `||Delta_Q f||_2^2` for every node.
    pub fn norms_sq(&self, tree: &CubeTree<S>, mu: &DiscreteMeasure<S>) -> Vec<S> {
        (0..tree.len())
            .map(|q| {
                tree.atoms(q)
                    .iter()
                    .zip(&self.pieces[q])
                    .map(|(&a, &v)| v * v * mu.weight(a))
                    .sum()
            })
            .collect()
    }

    /// `sum_Q ||Delta_Q f||^2 / mu(Q*)`.
    pub fn square_function_ratio(&self, tree: &CubeTree<S>, mu: &DiscreteMeasure<S>) -> f64 {
        let s: S = self.norms_sq(tree, mu).into_iter().sum();
        (s / tree.mass(0)).as_f64()
    }

    /// `sum eps_Q Delta_Q f` over `Q^a = F`, optionally only over `Q` inside node `within`.
    pub fn transform(
        &self,
        tree: &CubeTree<S>,
        st: &StoppingTree<S>,
        f: usize,
        eps: &[S],
        within: Option<NodeId>,
        n_atoms: usize,
    ) -> AtomFn<S> {
        let mut out = AtomFn::zeros(n_atoms);
        for q in 0..tree.len() {
            if st.ancestor_of(q) != f || eps[q] == S::zero() {
                continue;
            }
            if let Some(s) = within {
                if !tree.contains(s, q) {
                    continue;
                }
            }
            for (&a, &v) in tree.atoms(q).iter().zip(&self.pieces[q]) {
                out.values[a] += eps[q] * v;
            }
        }
        out
    }

    /// Signs chosen coarse to fine, each maximizing the squared norm of the running sum.
    pub fn greedy_signs(&self, tree: &CubeTree<S>, st: &StoppingTree<S>, mu: &DiscreteMeasure<S>, f: usize) -> Vec<S> {
        let mut eps = vec![S::zero(); tree.len()];
        let mut acc = vec![S::zero(); mu.len()];
        for q in 0..tree.len() {
            if st.ancestor_of(q) != f || self.pieces[q].is_empty() {
                continue;
            }
            let atoms = tree.atoms(q);
            let dot: S = atoms
                .iter()
                .zip(&self.pieces[q])
                .map(|(&a, &v)| acc[a] * v * mu.weight(a))
                .sum();
            let s = if dot >= S::zero() { S::one() } else { -S::one() };
            eps[q] = s;
            for (&a, &v) in atoms.iter().zip(&self.pieces[q]) {
                acc[a] += s * v;
            }
        }
        eps
    }
}

/// Independent uniform signs for every node.
pub fn random_signs<S: Scalar, R: Rng>(n_nodes: usize, rng: &mut R) -> Vec<S> {
    (0..n_nodes)
        .map(|_| if rng.gen::<bool>() { S::one() } else { -S::one() })
        .collect()
}

/// `||sum_{Q^a = F} eps_Q Delta_Q h||^2 / ||h||^2`; zero when `h = 0`.
pub fn transform_norm<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    mu: &DiscreteMeasure<S>,
    dec: &Decomposition<S>,
    h: &AtomFn<S>,
    f: usize,
    eps: &[S],
) -> f64 {
    let hh = crate::measure::inner(mu, h, h);
    if hh == S::zero() {
        return 0.0;
    }
    let t = dec.transform(tree, st, f, eps, None, mu.len());
    (crate::measure::inner(mu, &t, &t) / hh).as_f64()
}

/// `||sum_{Q in S, Q^a = F} eps_Q Delta_Q h||^2 / mu(S cap F)` for a cube `S`; zero when they are disjoint.
pub fn transform_norm_within<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    mu: &DiscreteMeasure<S>,
    dec: &Decomposition<S>,
    f: usize,
    eps: &[S],
    s: NodeId,
) -> f64 {
    let fnode = st.stops[f].node;
    let meet = if tree.contains(fnode, s) {
        tree.mass(s)
    } else if tree.contains(s, fnode) {
        tree.mass(fnode)
    } else {
        return 0.0;
    };
    let t = dec.transform(tree, st, f, eps, Some(s), mu.len());
    (crate::measure::inner(mu, &t, &t) / meet).as_f64()
}

/// `D_Q h` as `(child, coefficient)` over the non-stopping children of `Q`, where `Q^a = F`.
pub fn half_twisted<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    mu: &DiscreteMeasure<S>,
    h: &AtomFn<S>,
    q: NodeId,
) -> Vec<(NodeId, S)> {
    let mut eps = vec![S::zero(); tree.len()];
    eps[q] = S::one();
    let field = half_twisted_field(tree, st, mu, st.ancestor_of(q), &eps, h);
    tree.node(q)
        .children
        .iter()
        .zip(&field.coef[q])
        .filter(|(&c, _)| !st.is_stopping(c))
        .map(|(&c, &v)| (c, v))
        .collect()
}

/// `sup_R sum_{Q in R} alpha_Q / mu(R)`.
pub fn carleson_sequence_ratio<S: Scalar>(tree: &CubeTree<S>, alphas: &[S]) -> f64 {
    let mut below = vec![S::zero(); tree.len()];
    let mut worst: f64 = 0.0;
    for q in (0..tree.len()).rev() {
        below[q] = alphas[q] + tree.node(q).children.iter().map(|&c| below[c]).sum::<S>();
        worst = worst.max((below[q] / tree.mass(q)).as_f64());
    }
    worst
}

/// `alpha_Q = sum_{stopping children Q'} int_{Q'} |b_F|^2` when `Q^a = F`, else zero.
pub fn stopping_alphas<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    fam: &TestFunctionFamily<S>,
    mu: &DiscreteMeasure<S>,
    f: usize,
) -> Vec<S> {
    let fnode = st.stops[f].node;
    let base = tree.node(fnode).start;
    let b = fam.local(fnode);
    (0..tree.len())
        .map(|q| {
            if st.ancestor_of(q) != f {
                return S::zero();
            }
            tree.node(q)
                .children
                .iter()
                .filter(|&&c| st.is_stopping(c))
                .map(|&c| {
                    let n = tree.node(c);
                    (n.start..n.end)
                        .map(|p| b[p - base] * b[p - base] * mu.weight(tree.order[p]))
                        .sum::<S>()
                })
                .sum()
        })
        .collect()
}
