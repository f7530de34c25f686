//! The iterated maximal-cube decomposition behind the exponential level-set bound.

use serde::{Deserialize, Serialize};

use super::truncation::CoefField;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{CubeTree, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnLevel {
    /// Cubes of this level, by node id.
    pub cubes: Vec<NodeId>,
    /// `mu(S_j) / mu(P_0)`.
    pub mass_fraction: f64,
    /// `max Phi_{P_0}` off `S_j`, which should not exceed `2j - 1`.
    pub phi_off_set: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnReport {
    /// First cube `P` (by node id) with `mu(Phi_P > 1) > mu(P)/2`, if any.
    pub hypothesis_violation: Option<NodeId>,
    pub levels: Vec<JnLevel>,
    /// `(t, mu(Phi_{P_0} > t) / mu(P_0), 2^(-(t-1)/2))`.
    pub tail: Vec<(f64, f64, f64)>,
}

impl JnReport {
    pub fn hypothesis_holds(&self) -> bool {
        self.hypothesis_violation.is_none()
    }

    /// Level-set bound at every recorded `t`.
    pub fn tail_holds(&self) -> bool {
        self.tail.iter().all(|&(_, m, b)| m <= b)
    }

    /// `mu(S_j) <= 2^-j mu(P_0)` and `Phi <= 2j - 1` off `S_j`.
    pub fn levels_hold(&self) -> bool {
        self.levels.iter().enumerate().all(|(i, l)| {
            let j = (i + 1) as i32;
            l.mass_fraction <= 0.5f64.powi(j) && l.phi_off_set <= (2 * j - 1) as f64
        })
    }
}

pub const TAIL_LEVELS: [f64; 4] = [1.0, 3.0, 5.0, 7.0];

/// Decompose below `p0` for per-cube functions `phi` constant on children with `|phi| <= 1`.
pub fn jn_decompose<S: Scalar>(tree: &CubeTree<S>, phis: &CoefField<S>, p0: NodeId) -> Result<JnReport> {
    if phis.sup_norm() > S::one() {
        return Err(Error::InvalidParameter("per-cube functions must be bounded by 1".into()));
    }
    let sub = tree.subtree(p0);
    let mut violation = None;
    for &p in &sub {
        let over: S = phis
            .truncation_on_leaves(tree, p)
            .iter()
            .filter(|(_, v)| *v > S::one())
            .map(|&(l, _)| tree.mass(l))
            .sum();
        if over > tree.mass(p) * S::half() {
            violation = Some(p);
            break;
        }
    }

    let phi0 = phis.truncation_on_leaves(tree, p0);
    let m0 = tree.mass(p0);
    let tail = TAIL_LEVELS
        .iter()
        .map(|&t| {
            let m: S = phi0.iter().filter(|(_, v)| v.as_f64() > t).map(|&(l, _)| tree.mass(l)).sum();
            (t, (m / m0).as_f64(), 2f64.powf(-(t - 1.0) / 2.0))
        })
        .collect();

    let mut levels = Vec::new();
    let mut roots = vec![p0];
    let mut in_set: Vec<bool> = vec![false; tree.len()];
    while !roots.is_empty() {
        let mut next = Vec::new();
        for &r0 in &roots {
            let mut stack = vec![(r0, S::zero())];
            while let Some((q, sum)) = stack.pop() {
                for (&c, &v) in tree.node(q).children.iter().zip(&phis.coef[q]) {
                    let s = sum + v;
                    if s.abs() > S::one() {
                        next.push(c);
                    } else {
                        stack.push((c, s));
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        in_set.iter_mut().for_each(|x| *x = false);
        for &r in &next {
            for q in tree.subtree(r) {
                in_set[q] = true;
            }
        }
        let mass: S = next.iter().map(|&r| tree.mass(r)).sum();
        let off = phi0
            .iter()
            .filter(|(l, _)| !in_set[*l])
            .fold(0.0f64, |m, &(_, v)| m.max(v.as_f64()));
        next.sort_unstable();
        levels.push(JnLevel {
            cubes: next.clone(),
            mass_fraction: (mass / m0).as_f64(),
            phi_off_set: off,
        });
        roots = next;
    }
    Ok(JnReport {
        hypothesis_violation: violation,
        levels,
        tail,
    })
}
