//! Operators that are constant on the children of each cube, and their maximal truncations.

use serde::{Deserialize, Serialize};

use crate::measure::{lp_norm, weak_lp_quasinorm, AtomFn, DiscreteMeasure};
use crate::scalar::Scalar;
use crate::stopping::StoppingTree;
use crate::tree::{CubeTree, NodeId};

/// Per node, one value for each child (aligned with `tree.node(q).children`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoefField<S> {
    pub coef: Vec<Vec<S>>,
}

impl<S: Scalar> CoefField<S> {
    pub fn zeros(tree: &CubeTree<S>) -> Self {
        Self {
            coef: tree.nodes.iter().map(|n| vec![S::zero(); n.children.len()]).collect(),
        }
    }

    pub fn sup_norm(&self) -> S {
        self.coef.iter().flatten().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: S) -> Self {
        Self {
            coef: self.coef.iter().map(|v| v.iter().map(|&x| x * c).collect()).collect(),
        }
    }

    /// `A_Q h` as a function on the atoms.
    pub fn piece(&self, tree: &CubeTree<S>, q: NodeId, n_atoms: usize) -> AtomFn<S> {
        let mut out = AtomFn::zeros(n_atoms);
        for (&c, &v) in tree.node(q).children.iter().zip(&self.coef[q]) {
            for &a in tree.atoms(c) {
                out.values[a] = v;
            }
        }
        out
    }

    /// `sup_eps |sum_{Q in P, l(Q) > eps} A_Q|` on each leaf under `p`; the partial sums run down
    /// each root-to-leaf chain, and the empty sum counts.
    pub fn truncation_on_leaves(&self, tree: &CubeTree<S>, p: NodeId) -> Vec<(NodeId, S)> {
        let mut out = Vec::new();
        let mut stack = vec![(p, S::zero(), S::zero())];
        while let Some((q, sum, best)) = stack.pop() {
            let node = tree.node(q);
            if node.children.is_empty() {
                out.push((q, best));
                continue;
            }
            for (&c, &v) in node.children.iter().zip(&self.coef[q]) {
                let s = sum + v;
                stack.push((c, s, best.max(s.abs())));
            }
        }
        out
    }

    /// `A_#^P` as a function on atoms; zero outside `p`. `p = 0` gives the untruncated `A_#`.
    pub fn maximal_truncation(&self, tree: &CubeTree<S>, p: NodeId, n_atoms: usize) -> AtomFn<S> {
        let mut out = AtomFn::zeros(n_atoms);
        for (leaf, v) in self.truncation_on_leaves(tree, p) {
            for &a in tree.atoms(leaf) {
                out.values[a] = v;
            }
        }
        out
    }

    /// `max |A_Q h(x)| / M^D h(x)` over all cubes and atoms.
    pub fn domination_ratio(&self, tree: &CubeTree<S>, mu: &DiscreteMeasure<S>, h: &AtomFn<S>) -> f64 {
        let dm = crate::measure::dyadic_maximal_on(tree, mu, h);
        let mut worst: f64 = 0.0;
        for q in 0..tree.len() {
            for (&c, &v) in tree.node(q).children.iter().zip(&self.coef[q]) {
                if v == S::zero() {
                    continue;
                }
                for &a in tree.atoms(c) {
                    worst = worst.max((v.abs() / dm[a]).as_f64());
                }
            }
        }
        worst
    }
}

/// Which cubes a transform touches: all of them, or those below one stopping cube.
#[derive(Clone, Copy, Debug)]
pub enum Scope<'a, S> {
    All,
    /// `Q^a = F` with the stopping children of `F` removed.
    Stopping(&'a StoppingTree<S>, usize),
}

impl<S: Scalar> Scope<'_, S> {
    fn keeps(&self, q: NodeId) -> bool {
        match self {
            Scope::All => true,
            Scope::Stopping(st, f) => st.ancestor_of(q) == *f,
        }
    }

    fn keeps_child(&self, c: NodeId) -> bool {
        match self {
            Scope::All => true,
            Scope::Stopping(st, _) => !st.is_stopping(c),
        }
    }
}

/// `eps_Q sum_{Q'} (<h>_{Q'} - <h>_Q) 1_{Q'}`, restricted by the scope.
pub fn classical_field<S: Scalar>(
    tree: &CubeTree<S>,
    mu: &DiscreteMeasure<S>,
    eps: &[S],
    h: &AtomFn<S>,
    scope: Scope<'_, S>,
) -> CoefField<S> {
    let avg = tree.averages(mu, h);
    let mut field = CoefField::zeros(tree);
    for q in 0..tree.len() {
        if !scope.keeps(q) || eps[q] == S::zero() {
            continue;
        }
        for (k, &c) in tree.node(q).children.iter().enumerate() {
            if scope.keeps_child(c) {
                field.coef[q][k] = eps[q] * (avg[c] - avg[q]);
            }
        }
    }
    field
}

/// `eps_Q D_Q h` for every `Q` with `Q^a = F`.
pub fn half_twisted_field<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    mu: &DiscreteMeasure<S>,
    f: usize,
    eps: &[S],
    h: &AtomFn<S>,
) -> CoefField<S> {
    let avg = tree.averages(mu, h);
    let mut field = CoefField::zeros(tree);
    let half = S::half();
    for q in 0..tree.len() {
        if st.ancestor_of(q) != f || eps[q] == S::zero() {
            continue;
        }
        let bq = st.ancestor_average[q];
        assert!(bq.abs() >= half, "ancestor average below 1/2 off the stopping cubes");
        for (k, &c) in tree.node(q).children.iter().enumerate() {
            if st.is_stopping(c) {
                continue;
            }
            let bc = st.ancestor_average[c];
            field.coef[q][k] = eps[q] * (avg[c] / bc - avg[q] / bq);
        }
    }
    field
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SawyerReport {
    /// `max int_Q A_#^Q h / (||h 1_Q||_p mu(Q)^(1/p'))`.
    pub testing: f64,
    /// `max ||A_# h||_{p,inf} / ||h||_p`.
    pub weak: f64,
    /// `max ||A_# h||_p / ||h||_p`.
    pub strong: f64,
    pub weak_below_strong: bool,
    pub probes: usize,
}

/// Both sides of the testing reduction for a family `h -> (A_Q h)_Q` over a set of probes.
pub fn sawyer_testing_check<S: Scalar>(
    tree: &CubeTree<S>,
    mu: &DiscreteMeasure<S>,
    family: impl Fn(&AtomFn<S>) -> CoefField<S>,
    p: f64,
    probes: &[AtomFn<S>],
) -> SawyerReport {
    let q_exp = 1.0 - 1.0 / p;
    let mut rep = SawyerReport {
        testing: 0.0,
        weak: 0.0,
        strong: 0.0,
        weak_below_strong: true,
        probes: probes.len(),
    };
    for h in probes {
        let field = family(h);
        let hp: Vec<f64> = h
            .values
            .iter()
            .zip(mu.weights())
            .map(|(&v, &w)| v.abs().as_f64().powf(p) * w.as_f64())
            .collect();
        for q in 0..tree.len() {
            let local: f64 = tree.atoms(q).iter().map(|&a| hp[a]).sum::<f64>().powf(1.0 / p);
            if local == 0.0 {
                continue;
            }
            let integral: f64 = field
                .truncation_on_leaves(tree, q)
                .iter()
                .map(|&(l, v)| (v * tree.mass(l)).as_f64())
                .sum();
            rep.testing = rep.testing.max(integral / (local * tree.mass(q).as_f64().powf(q_exp)));
        }
        let hn = lp_norm(mu, h, p).as_f64();
        if hn == 0.0 {
            continue;
        }
        let sharp = field.maximal_truncation(tree, 0, mu.len());
        let weak = weak_lp_quasinorm(mu, &sharp, p).as_f64();
        let strong = lp_norm(mu, &sharp, p).as_f64();
        rep.weak = rep.weak.max(weak / hn);
        rep.strong = rep.strong.max(strong / hn);
        rep.weak_below_strong &= weak <= strong * (1.0 + 1e-12);
    }
    rep
}

/// `||sup_eps |sum eps_Q sum_{Q'} (<h>_{Q'} - <h>_Q) 1_{Q'}| ||_p / ||h||_p`, with and without
/// the stopping-children removal when a scope is given.
pub fn classical_truncation_norm<S: Scalar>(
    tree: &CubeTree<S>,
    mu: &DiscreteMeasure<S>,
    eps: &[S],
    h: &AtomFn<S>,
    p: f64,
    scope: Scope<'_, S>,
) -> f64 {
    let hn = lp_norm(mu, h, p).as_f64();
    if hn == 0.0 {
        return 0.0;
    }
    let field = classical_field(tree, mu, eps, h, scope);
    lp_norm(mu, &field.maximal_truncation(tree, 0, mu.len()), p).as_f64() / hn
}

/// `||sup_eps |sum_{Q^a = F, Q in P} eps_Q D_Q 1| ||_p^p / mu(P)`.
pub fn dq1_testing<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    mu: &DiscreteMeasure<S>,
    f: usize,
    eps: &[S],
    p_node: NodeId,
    p: f64,
) -> f64 {
    let one = AtomFn::constant(mu.len(), S::one());
    let field = half_twisted_field(tree, st, mu, f, eps, &one);
    let sum: f64 = field
        .truncation_on_leaves(tree, p_node)
        .iter()
        .map(|&(l, v)| v.as_f64().powf(p) * tree.mass(l).as_f64())
        .sum();
    sum / tree.mass(p_node).as_f64()
}

/// `||sup_eps |sum_{Q^a = F} eps_Q D_Q h| ||_p / ||h||_p`.
pub fn dq_maximal_norm<S: Scalar>(
    tree: &CubeTree<S>,
    st: &StoppingTree<S>,
    mu: &DiscreteMeasure<S>,
    f: usize,
    eps: &[S],
    h: &AtomFn<S>,
    p: f64,
) -> f64 {
    let hn = lp_norm(mu, h, p).as_f64();
    if hn == 0.0 {
        return 0.0;
    }
    let field = half_twisted_field(tree, st, mu, f, eps, h);
    lp_norm(mu, &field.maximal_truncation(tree, 0, mu.len()), p).as_f64() / hn
}
