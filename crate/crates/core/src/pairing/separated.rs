use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::Pair;
use super::{Ambient, Params, Trial};
use crate::geometry::{long_distance, Cube};
use crate::tree::{CubeTree, NodeId};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparatedReport {
    pub pairs: usize,
    pub value: f64,
    pub abs_sum: f64,
    /// `sum A_QR ||Delta_Q f|| ||Delta_R g||`.
    pub schur_sum: f64,
    /// Largest `|<T Delta_Q f, Delta_R g>| / (A_QR ||Delta_Q f|| ||Delta_R g||)`.
    pub pairwise_c: f64,
    /// `pairwise_c * schur_sum`, which dominates `abs_sum`.
    pub bound: f64,
}

impl SeparatedReport {
    pub fn merge(&mut self, o: &SeparatedReport) {
        self.pairs += o.pairs;
        self.value += o.value;
        self.abs_sum += o.abs_sum;
        self.schur_sum += o.schur_sum;
        self.pairwise_c = self.pairwise_c.max(o.pairwise_c);
        self.bound = self.pairwise_c * self.schur_sum;
    }
}

/// `A_QR = l(Q)^(a/2) l(R)^(a/2) mu(Q)^(1/2) mu(R)^(1/2) / D(Q,R)^(m+a)`.
pub fn a_entry(q: &Cube, mq: f64, r: &Cube, mr: f64, alpha: f64, m: f64) -> f64 {
    let d = long_distance(q, r);
    (q.side_f64() * r.side_f64()).powf(alpha / 2.0) * (mq * mr).sqrt() / d.powf(m + alpha)
}

/// `(l(Q)/l(R))^(a/2) (mu(Q)/mu(R_Q))^(1/2)`.
pub fn b_entry(lq: f64, mq: f64, lr: f64, m_rq: f64, alpha: f64) -> f64 {
    (lq / lr).powf(alpha / 2.0) * (mq / m_rq).sqrt()
}

pub fn separated_sum(pairs: &[Pair], trial: &Trial, amb: &Ambient) -> SeparatedReport {
    let p = &amb.params;
    let terms: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|pair| {
            let (q, r) = pair.qr();
            let v = trial.pair_value(q, r, amb);
            let a = a_entry(
                trial.t.tree.cube(q),
                trial.t.mass(q),
                trial.s.tree.cube(r),
                trial.s.mass(r),
                p.alpha,
                p.m,
            );
            (v, a * trial.t.norms[q] * trial.s.norms[r])
        })
        .collect();
    let mut rep = SeparatedReport {
        pairs: pairs.len(),
        ..Default::default()
    };
    for (v, s) in terms {
        rep.value += v;
        rep.abs_sum += v.abs();
        rep.schur_sum += s;
        if s > 0.0 {
            rep.pairwise_c = rep.pairwise_c.max(v.abs() / s);
        }
    }
    rep.bound = rep.pairwise_c * rep.schur_sum;
    rep
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchurReport {
    /// `||{A_QR}||_{l2 -> l2}` over separated pairs.
    pub a_norm: f64,
    pub a_pairs: usize,
    /// `||{B_QR}||` over `Q` inside a child `R_Q` of `R` with `l(Q) <= 2^-r l(R)`.
    pub b_norm: f64,
    pub b_pairs: usize,
    /// Set when an index set exceeded the dense limit and only its coarsest part was kept.
    pub subsampled: Option<String>,
}

/// Top singular value of a sparse matrix given by `(row, col, value)`, keeping at most
/// `limit` rows and columns (the smallest keys, which are the coarsest nodes).
fn sparse_norm(entries: &[(NodeId, NodeId, f64)], limit: usize, note: &mut Vec<String>, label: &str) -> f64 {
    let mut rows: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut cols: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &(i, j, _) in entries {
        rows.insert(i, 0);
        cols.insert(j, 0);
    }
    if rows.len() > limit || cols.len() > limit {
        note.push(format!(
            "{label}: {}x{} reduced to the coarsest {limit} indices",
            rows.len(),
            cols.len()
        ));
    }
    let rows: BTreeMap<NodeId, usize> = rows.keys().take(limit).enumerate().map(|(k, &i)| (i, k)).collect();
    let cols: BTreeMap<NodeId, usize> = cols.keys().take(limit).enumerate().map(|(k, &j)| (j, k)).collect();
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let mut m = DMatrix::<f64>::zeros(rows.len(), cols.len());
    for &(i, j, v) in entries {
        if let (Some(&a), Some(&b)) = (rows.get(&i), cols.get(&j)) {
            m[(a, b)] += v;
        }
    }
    m.singular_values().max()
}

/// Dense SVD norms of the separated and nested Schur matrices.
pub fn schur_norm(
    separated: &[Pair],
    tq: &CubeTree<f64>,
    tr: &CubeTree<f64>,
    p: &Params,
    dense_limit: usize,
) -> SchurReport {
    let a: Vec<(NodeId, NodeId, f64)> = separated
        .iter()
        .map(|pair| {
            let (q, r) = pair.qr();
            (q, r, a_entry(tq.cube(q), tq.mass(q), tr.cube(r), tr.mass(r), p.alpha, p.m))
        })
        .collect();
    let mut b = Vec::new();
    for r in (0..tr.len()).filter(|&r| !tr.node(r).children.is_empty()) {
        let cr = tr.cube(r);
        for q in (0..tq.len()).filter(|&q| !tq.node(q).children.is_empty()) {
            let cq = tq.cube(q);
            if cq.side_log2 > cr.side_log2 - p.r as i32 {
                continue;
            }
            let first = tq.atoms(q)[0];
            let Some(rq) = tr.child_containing(r, first) else { continue };
            if tr.cube(rq).contains_cube(cq) {
                b.push((q, r, b_entry(cq.side_f64(), tq.mass(q), cr.side_f64(), tr.mass(rq), p.alpha)));
            }
        }
    }
    let mut notes = Vec::new();
    let a_norm = sparse_norm(&a, dense_limit, &mut notes, "A");
    let b_norm = sparse_norm(&b, dense_limit, &mut notes, "B");
    SchurReport {
        a_norm,
        a_pairs: a.len(),
        b_norm,
        b_pairs: b.len(),
        subsampled: (!notes.is_empty()).then(|| notes.join("; ")),
    }
}
