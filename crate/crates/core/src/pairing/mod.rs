//! Exact decomposition of `<T f, g>` over two independent random grids: separated, nested,
//! diagonal, tail and residual pieces, each with the value it contributes and an observed bound.
//!
//! Everything here works in `f64`; the generic layers below feed it through the `f64` aliases.

mod diagonal;
mod mc;
mod nested;
mod report;
mod separated;
mod split;
mod surgery;
mod tail;

#[cfg(test)]
mod tests;

pub use diagonal::{diagonal_sum, ChoiceBranch, DiagonalChoice, DiagonalReport, Prerequisites, SurgeryChecks};
pub use mc::{bad_probability_mc, boundary_mass_mc, collar_mass_mc, fit_decay, BadProbability, DecayFit, LadderPoint};
pub use nested::{nested_sum, paraproduct, NestedReport, ParaproductReport};
pub use report::{
    full_report, local_pairing_sup, relative_residual, run_trial, Aggregates, FunctionSpec, KernelConfig, MeasureSpec, NamedPiece,
    PairingReport, Residual, Scenario, Setup, TrialReport, BOOKKEEPING_TOL,
};
pub use separated::{schur_norm, separated_sum, SchurReport, SeparatedReport};
pub use split::{classify, split_pairs, Bucket, Orientation, Pair, PairSets};
pub use surgery::{
    sigma_surgery, surgery_terms, theta_surgery, HCube, SigmaSurgery, SurgeryGrids, SurgeryPart, SurgerySide, SurgeryTerms,
    ThetaSurgery,
};
pub use tail::{beta_tail, TailReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::czo::DiscretizedOperator;
use crate::error::{Error, Result};
use crate::geometry::{cmp_gap, Dyadic, GoodBadParams, ShiftedDyadicGrid, FRAC_BITS};
use crate::martingale::{expand, Decomposition};
use crate::measure::{AtomFn, DiscreteMeasure, MaximalEngine};
use crate::stopping::StoppingTree;
use crate::testfns::{Side, TestFunctionFamily};
use crate::tree::{CubeTree, NodeId};

/// User-facing parameter choices; anything left out is derived or defaulted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSettings {
    /// Enlargement of `Q0`; the smallest admissible value when omitted.
    pub lambda: Option<f64>,
    pub beta: u32,
    /// Goodness exponent; `alpha / (2m + 2 alpha)` when omitted.
    pub gamma: Option<f64>,
    pub r: u32,
    pub theta: f64,
    pub sigma: f64,
    pub u: f64,
}

impl Default for ParamSettings {
    fn default() -> Self {
        Self {
            lambda: None,
            beta: 4,
            gamma: None,
            r: 3,
            theta: (-8f64).exp2(),
            sigma: (-12f64).exp2(),
            u: 0.125,
        }
    }
}

/// Resolved parameters of one scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda: f64,
    pub beta: u32,
    pub gamma: f64,
    pub r: u32,
    pub theta: f64,
    pub sigma: f64,
    pub u: f64,
    /// `l(Q0) = 2^q0_log2`.
    pub q0_log2: i32,
    /// Grid roots have side `2^(N+1)`.
    pub n_scale: i32,
    pub j_theta: i32,
    pub alpha: f64,
    pub m: f64,
}

/// `N` with `2^(N-3) <= l(Q0) < 2^(N-2)`.
pub fn root_scale(q0_log2: i32) -> i32 {
    q0_log2 + 3
}

/// The unique `j` with `2^-21 theta <= 2^j < 2^-20 theta`.
pub fn j_theta(theta: f64) -> Result<i32> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter(format!("theta {theta} must be positive")));
    }
    let target = theta * (-21f64).exp2();
    let mut j = target.log2().ceil() as i32;
    while (j as f64).exp2() < target {
        j += 1;
    }
    while ((j - 1) as f64).exp2() >= target {
        j -= 1;
    }
    Ok(j)
}

impl Params {
    pub fn resolve(s: &ParamSettings, q0_log2: i32, alpha: f64, m: f64) -> Result<Self> {
        let gb = match s.gamma {
            Some(g) => {
                let p = GoodBadParams::new(g, s.r)?;
                p.check_kernel(alpha, m)?;
                p
            }
            None => GoodBadParams::from_kernel(alpha, m, s.r)?,
        };
        if !(s.theta > 0.0 && s.theta < 0.0625) {
            return Err(Error::InvalidParameter(format!("theta {} not in (0, 1/16)", s.theta)));
        }
        if !(s.sigma > 0.0 && s.sigma < 0.5) {
            return Err(Error::InvalidParameter(format!("sigma {} not in (0, 1/2)", s.sigma)));
        }
        if !(s.u >= 0.0 && s.u.is_finite()) {
            return Err(Error::InvalidParameter(format!("collar width {} must be non-negative", s.u)));
        }
        if s.beta == 0 || s.r == 0 {
            return Err(Error::InvalidParameter("beta and r must be at least 1".into()));
        }
        let n_scale = root_scale(q0_log2);
        let side = (q0_log2 as f64).exp2();
        let min_lambda = 3.0 * (n_scale as f64).exp2() / side;
        let lambda = s.lambda.unwrap_or(min_lambda);
        if lambda < min_lambda {
            return Err(Error::InvalidParameter(format!(
                "lambda {lambda} below {min_lambda}: the grid roots would leave lambda Q0"
            )));
        }
        Ok(Self {
            lambda,
            beta: s.beta,
            gamma: gb.gamma,
            r: s.r,
            theta: s.theta,
            sigma: s.sigma,
            u: s.u,
            q0_log2,
            n_scale,
            j_theta: j_theta(s.theta)?,
            alpha,
            m,
        })
    }

    pub fn goodbad(&self) -> GoodBadParams {
        GoodBadParams {
            gamma: self.gamma,
            r: self.r,
        }
    }

    pub fn q0_side(&self) -> f64 {
        (self.q0_log2 as f64).exp2()
    }

    /// Half-open centred box `[-L/2, L/2)^n` of side `L = scale * l(Q0)`.
    pub fn in_centred_box(&self, x: &[Dyadic], scale: f64) -> bool {
        let half = 0.5 * scale * self.q0_side();
        x.iter().all(|&c| {
            if c.0 < 0 {
                cmp_gap(c.0, half) != std::cmp::Ordering::Greater
            } else {
                cmp_gap(c.0, half) == std::cmp::Ordering::Less
            }
        })
    }

    pub fn in_q0(&self, x: &[Dyadic]) -> bool {
        self.in_centred_box(x, 1.0)
    }

    pub fn in_lambda_q0(&self, x: &[Dyadic]) -> bool {
        self.in_centred_box(x, self.lambda)
    }

    /// Fails when a side of `2^k` cannot be resolved by the dyadic coordinates.
    pub fn check_resolution(k: i32) -> Result<()> {
        if k < 1 - FRAC_BITS {
            return Err(Error::InvalidParameter(format!(
                "side 2^{k} is below the dyadic resolution"
            )));
        }
        Ok(())
    }
}

/// A contribution to `<T f, g>` with its observed bound, split into a part free of `||T||`
/// and a part carrying the factor `||T||`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub value: f64,
    pub constant_part: f64,
    pub operator_part: f64,
}

impl Piece {
    pub fn bound(&self) -> f64 {
        self.constant_part + self.operator_part
    }

    pub fn holds(&self) -> bool {
        self.value.abs() <= self.bound() * (1.0 + 1e-9) + 1e-300
    }

    pub fn add(&mut self, o: &Piece) {
        self.value += o.value;
        self.constant_part += o.constant_part;
        self.operator_part += o.operator_part;
    }
}

/// Objects shared by every trial of one scenario.
#[derive(Clone, Debug)]
pub struct Ambient {
    pub mu: DiscreteMeasure<f64>,
    pub op: DiscretizedOperator<f64>,
    pub adj: DiscretizedOperator<f64>,
    pub op_norm: f64,
    pub engine: MaximalEngine<f64>,
    pub maximal_norm: f64,
    pub params: Params,
    pub depth: u32,
    pub q0_mass: f64,
    pub lambda_mass: f64,
}

impl Ambient {
    pub fn new(
        mu: DiscreteMeasure<f64>,
        op: DiscretizedOperator<f64>,
        params: Params,
        depth: u32,
        dense_limit: usize,
        seed: u64,
    ) -> Result<Self> {
        let adj = op.adjoint();
        let op_norm = op.op_norm(dense_limit)?;
        let engine = MaximalEngine::new(&mu);
        let maximal_norm = engine.op_norm(seed).norm;
        let q0_mass = (0..mu.len()).filter(|&a| params.in_q0(mu.point(a))).map(|a| mu.weight(a)).sum();
        let lambda_mass = (0..mu.len())
            .filter(|&a| params.in_lambda_q0(mu.point(a)))
            .map(|a| mu.weight(a))
            .sum();
        Ok(Self {
            mu,
            op,
            adj,
            op_norm,
            engine,
            maximal_norm,
            params,
            depth,
            q0_mass,
            lambda_mass,
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// The operator applied on a side: `T` for the `f` side, `T*` for the `g` side.
    pub fn op_for(&self, side: Side) -> &DiscretizedOperator<f64> {
        match side {
            Side::T => &self.op,
            Side::Adjoint => &self.adj,
        }
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.mu.weight(a)
    }

    /// `||h||_2` over the listed atoms.
    pub fn norm_on(&self, atoms: &[usize], h: impl Fn(usize) -> f64) -> f64 {
        atoms.iter().map(|&a| h(a) * h(a) * self.weight(a)).sum::<f64>().sqrt()
    }
}

/// Everything attached to one side of the pairing: the `f` side lives on the `T` grid, the `g`
/// side on the `T*` grid.
#[derive(Clone, Debug)]
pub struct SideData {
    pub side: Side,
    pub tree: CubeTree<f64>,
    pub fam: TestFunctionFamily<f64>,
    pub st: StoppingTree<f64>,
    pub h: AtomFn<f64>,
    pub dec: Decomposition<f64>,
    /// `<h>_X / <b_{X^a}>_X`.
    pub coef: Vec<f64>,
    /// `||Delta_X h||_2`.
    pub norms: Vec<f64>,
    /// Nodes with children, coarse to fine.
    pub internal: Vec<NodeId>,
    pub slot: Vec<Option<usize>>,
    /// `Op(Delta_X h)` on all atoms, per internal slot, with `Op` the side's operator.
    pub op_delta: Vec<Vec<f64>>,
}

impl SideData {
    pub fn build(
        tree: CubeTree<f64>,
        fam: TestFunctionFamily<f64>,
        st: StoppingTree<f64>,
        h: AtomFn<f64>,
        amb: &Ambient,
    ) -> Result<Self> {
        let mu = &amb.mu;
        let dec = expand(&tree, &st, &fam, mu, &h)?;
        let coef: Vec<f64> = tree
            .averages(mu, &h)
            .into_iter()
            .zip(&st.ancestor_average)
            .map(|(a, b)| a / b)
            .collect();
        let norms = dec.norms_sq(&tree, mu).into_iter().map(f64::sqrt).collect();
        let internal: Vec<NodeId> = (0..tree.len()).filter(|&x| !tree.node(x).children.is_empty()).collect();
        let mut slot = vec![None; tree.len()];
        for (k, &x) in internal.iter().enumerate() {
            slot[x] = Some(k);
        }
        let op = amb.op_for(fam.side);
        let all: Vec<usize> = (0..mu.len()).collect();
        let op_delta = internal
            .par_iter()
            .map(|&x| {
                let piece = dec.piece(&tree, x, mu.len());
                let atoms = tree.atoms(x);
                all.iter()
                    .map(|&i| atoms.iter().map(|&j| op.entry(i, j) * piece[j]).sum())
                    .collect()
            })
            .collect();
        Ok(Self {
            side: fam.side,
            tree,
            fam,
            st,
            h,
            dec,
            coef,
            norms,
            internal,
            slot,
            op_delta,
        })
    }

    pub fn side_len(&self, x: NodeId) -> f64 {
        self.tree.side(x)
    }

    pub fn mass(&self, x: NodeId) -> f64 {
        self.tree.mass(x)
    }

    /// `Delta_X h` at atom `a` (zero off `X`).
    pub fn delta_at(&self, x: NodeId, a: usize) -> f64 {
        match self.tree.local(x, a) {
            Some(l) if !self.dec.local(x).is_empty() => self.dec.local(x)[l],
            _ => 0.0,
        }
    }

    /// `b_F` at atom `a` (zero off `F`).
    pub fn b_at(&self, f: NodeId, a: usize) -> f64 {
        self.fam.at(&self.tree, f, a)
    }

    pub fn anchor(&self, x: NodeId) -> NodeId {
        self.st.ancestor_node(x)
    }

    /// `<Op(Delta_X h), phi>` over the listed atoms.
    pub fn op_delta_dot(&self, x: NodeId, atoms: &[usize], phi: impl Fn(usize) -> f64, amb: &Ambient) -> f64 {
        let v = &self.op_delta[self.slot[x].expect("internal node")];
        atoms.iter().map(|&a| v[a] * phi(a) * amb.weight(a)).sum()
    }

    /// The reconstruction `sum_X Delta_X h + <h>_{root} b_root`.
    pub fn reconstruction(&self) -> Vec<f64> {
        let mut out = self.dec.residual.values.clone();
        for &x in &self.internal {
            for (&a, &v) in self.tree.atoms(x).iter().zip(self.dec.local(x)) {
                out[a] += v;
            }
        }
        out
    }
}

/// One trial: the two sides plus the third grid used by the surgery.
#[derive(Clone, Debug)]
pub struct Trial {
    pub t: SideData,
    pub s: SideData,
    pub dstar: ShiftedDyadicGrid,
    pub a_const: f64,
    pub b_const: f64,
}

/// The two orientations of a pair: the smaller cube and its side, and the larger one.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub small: &'a SideData,
    pub big: &'a SideData,
    pub orientation: Orientation,
}

impl Trial {
    pub fn view(&self, o: Orientation) -> View<'_> {
        match o {
            Orientation::Forward => View {
                small: &self.t,
                big: &self.s,
                orientation: o,
            },
            Orientation::Mirrored => View {
                small: &self.s,
                big: &self.t,
                orientation: o,
            },
        }
    }

    /// `<T Delta_Q f, Delta_R g>`, read off the precomputed `T Delta_Q f`.
    pub fn pair_value(&self, q: NodeId, r: NodeId, amb: &Ambient) -> f64 {
        self.t.op_delta_dot(q, self.s.tree.atoms(r), |a| self.s.delta_at(r, a), amb)
    }
}

impl View<'_> {
    /// `<Op Delta_X, Delta_Y>` for a small node `x` and a big node `y`.
    pub fn pair_value(&self, x: NodeId, y: NodeId, amb: &Ambient) -> f64 {
        self.small
            .op_delta_dot(x, self.big.tree.atoms(y), |a| self.big.delta_at(y, a), amb)
    }
}
