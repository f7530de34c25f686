use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{Orientation, Pair};
use super::surgery::{sigma_surgery, surgery_terms, theta_surgery, HCube, SurgeryGrids, SurgeryPart};
use super::{Ambient, Piece, SideData, Trial};
use crate::error::Result;
use crate::measure::AtomFn;
use crate::testfns::Side;
use crate::tree::NodeId;

/// How a child `X_i` of `X` enters `Delta_X h = sum_i sum_choices a u` on `X_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceBranch {
    /// `X_i` is not stopping: `(coef(X_i) - coef(X)) b_F`.
    Continuing,
    /// `X_i` is stopping, own part: `coef(X_i) b_{X_i}`.
    StoppingOwn,
    /// `X_i` is stopping, parent part: `-coef(X) b_F`.
    StoppingParent,
}

impl ChoiceBranch {
    pub const ALL: [ChoiceBranch; 3] = [Self::Continuing, Self::StoppingOwn, Self::StoppingParent];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalChoice {
    pub branch: ChoiceBranch,
    pub coef: f64,
    /// Node whose test function is used.
    pub node: NodeId,
}

fn choices(side: &SideData, x: NodeId, child: NodeId) -> Vec<DiagonalChoice> {
    let f = side.anchor(x);
    if side.st.is_stopping(child) {
        vec![
            DiagonalChoice {
                branch: ChoiceBranch::StoppingOwn,
                coef: side.coef[child],
                node: child,
            },
            DiagonalChoice {
                branch: ChoiceBranch::StoppingParent,
                coef: -side.coef[x],
                node: f,
            },
        ]
    } else {
        vec![DiagonalChoice {
            branch: ChoiceBranch::Continuing,
            coef: side.coef[child] - side.coef[x],
            node: f,
        }]
    }
}

/// Surgery bookkeeping accumulated over the diagonal bucket.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgeryChecks {
    pub child_pairs: usize,
    pub partition_violations: usize,
    pub five_h_violations: usize,
    /// Atoms marked boundary by the surgery but outside the bad set.
    pub boundary_outside_bad: usize,
    pub boundary_atoms: usize,
    pub matched_cells: usize,
    /// Matched cells whose `H` holds other atoms than the cell's interior ones.
    pub h_mismatch: usize,
    /// Matched cells where `H` carries no mass.
    pub sigma_skipped: usize,
    /// Largest `|six terms - total|`, relative.
    pub terms_residual: f64,
    pub sigma_residual: f64,
    pub pivot_residual: f64,
    /// Largest `max_H |Phi - mean| / M u`.
    pub smoothing_ratio: f64,
    /// Largest `|separated parts| / (||1_X u|| ||1_Y v||)`.
    pub c_theta: f64,
}

impl SurgeryChecks {
    fn merge(&mut self, o: &SurgeryChecks) {
        self.child_pairs += o.child_pairs;
        self.partition_violations += o.partition_violations;
        self.five_h_violations += o.five_h_violations;
        self.boundary_outside_bad += o.boundary_outside_bad;
        self.boundary_atoms += o.boundary_atoms;
        self.matched_cells += o.matched_cells;
        self.h_mismatch += o.h_mismatch;
        self.sigma_skipped += o.sigma_skipped;
        self.terms_residual = self.terms_residual.max(o.terms_residual);
        self.sigma_residual = self.sigma_residual.max(o.sigma_residual);
        self.pivot_residual = self.pivot_residual.max(o.pivot_residual);
        self.smoothing_ratio = self.smoothing_ratio.max(o.smoothing_ratio);
        self.c_theta = self.c_theta.max(o.c_theta);
    }
}

/// `sum A^2 ||1_{X_i} M u||^2` and `sum A^2 ||1_{X_i} Op u||^2` per branch, over the distinct
/// children met on one side, normalised by `mu(lambda Q0)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prerequisites {
    pub maximal: [f64; 3],
    pub operator: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagonalReport {
    pub pairs: usize,
    pub value: f64,
    /// `sum a a' V` over children and choices; equals `value`.
    pub resummed: f64,
    /// `sum |a a'|` times the absolute summands of each `V`, the scale of the resummation.
    pub abs_scale: f64,
    /// `sum |a| |V| |a'|` by `(f branch, g branch)`.
    pub branch_sums: [[f64; 3]; 3],
    pub prerequisites_f: Prerequisites,
    pub prerequisites_g: Prerequisites,
    /// Largest number of diagonal partners of one `f`-side cube, and of one `g`-side cube.
    pub neighbours_f: usize,
    pub neighbours_g: usize,
    /// Sum of the surgery pieces with their bounds.
    pub piece: Piece,
    pub piece_violations: usize,
    pub checks: SurgeryChecks,
}

impl DiagonalReport {
    pub fn merge(&mut self, o: &DiagonalReport) {
        self.pairs += o.pairs;
        self.value += o.value;
        self.resummed += o.resummed;
        self.abs_scale += o.abs_scale;
        for i in 0..3 {
            for j in 0..3 {
                self.branch_sums[i][j] += o.branch_sums[i][j];
            }
            self.prerequisites_f.maximal[i] += o.prerequisites_f.maximal[i];
            self.prerequisites_f.operator[i] += o.prerequisites_f.operator[i];
            self.prerequisites_g.maximal[i] += o.prerequisites_g.maximal[i];
            self.prerequisites_g.operator[i] += o.prerequisites_g.operator[i];
        }
        self.neighbours_f = self.neighbours_f.max(o.neighbours_f);
        self.neighbours_g = self.neighbours_g.max(o.neighbours_g);
        self.piece.add(&o.piece);
        self.piece_violations += o.piece_violations;
        self.checks.merge(&o.checks);
    }
}

#[derive(Default)]
struct PairOut {
    value: f64,
    resummed: f64,
    abs_scale: f64,
    branch_sums: [[f64; 3]; 3],
    piece: Piece,
    piece_violations: usize,
    checks: SurgeryChecks,
}

fn one_pair(view: &super::View, trial: &Trial, amb: &Ambient, x: NodeId, y: NodeId) -> Result<PairOut> {
    let (small, big) = (view.small, view.big);
    let n = amb.n();
    let p = &amb.params;
    let op = amb.op_for(small.side);
    let grids = SurgeryGrids {
        dstar: &trial.dstar,
        small_grid: &small.tree.grid,
        big_grid: &big.tree.grid,
    };
    let mut out = PairOut {
        value: view.pair_value(x, y, amb),
        ..Default::default()
    };
    let forward = view.orientation == Orientation::Forward;
    let mut fns: BTreeMap<(bool, NodeId), AtomFn<f64>> = BTreeMap::new();
    let mut function = |is_small: bool, node: NodeId| -> AtomFn<f64> {
        fns.entry((is_small, node))
            .or_insert_with(|| {
                let side = if is_small { small } else { big };
                side.fam.function(&side.tree, node, n)
            })
            .clone()
    };
    for &xi in &small.tree.node(x).children {
        let cx = small.tree.cube(xi);
        let xa = small.tree.atoms(xi);
        for &yj in &big.tree.node(y).children {
            let cy = big.tree.cube(yj);
            let ya = big.tree.atoms(yj);
            let ts = theta_surgery(cx, xa, cy, ya, amb, &grids)?;
            let ck = &mut out.checks;
            ck.child_pairs += 1;
            ck.partition_violations += usize::from(!ts.partition_exact);
            ck.five_h_violations += usize::from(!ts.five_h_inside);
            for side in [&ts.small, &ts.big] {
                for (k, part) in side.parts.iter().enumerate() {
                    if *part == SurgeryPart::Boundary {
                        ck.boundary_atoms += 1;
                        ck.boundary_outside_bad += usize::from(!side.bad[k]);
                    }
                }
            }
            ck.matched_cells += ts.matched.len();
            let hs: Vec<HCube> = ts.matched.iter().map(|&k| HCube::from_cell(&ts.cells[k], p.theta)).collect();
            let h_atoms: Vec<Vec<usize>> = hs
                .iter()
                .map(|h| (0..n).filter(|&a| h.contains(amb.mu.point(a), 1.0)).collect())
                .collect();
            for (k, &cell) in ts.matched.iter().enumerate() {
                let mut interior: Vec<usize> = ts
                    .small
                    .atoms
                    .iter()
                    .zip(&ts.small.parts)
                    .filter(|(_, &pt)| pt == SurgeryPart::Cell(cell))
                    .map(|(&a, _)| a)
                    .collect();
                interior.sort_unstable();
                if interior != h_atoms[k] {
                    out.checks.h_mismatch += 1;
                }
            }

            for c in choices(small, x, xi) {
                let u_full = function(true, c.node);
                let mut u = vec![0.0; n];
                for &a in xa {
                    u[a] = u_full[a];
                }
                for d in choices(big, y, yj) {
                    let v_full = function(false, d.node);
                    let mut v = vec![0.0; n];
                    for &a in ya {
                        v[a] = v_full[a];
                    }
                    let st = surgery_terms(&ts, &u, &v, op, amb);
                    let aa = c.coef * d.coef;
                    out.resummed += aa * st.total;
                    out.abs_scale += aa.abs() * st.abs_total;
                    let (fb, gb) = if forward { (c.branch, d.branch) } else { (d.branch, c.branch) };
                    out.branch_sums[fb.index()][gb.index()] += aa.abs() * st.total.abs();
                    let scale = st.abs_total.max(f64::MIN_POSITIVE);
                    let ck = &mut out.checks;
                    ck.terms_residual = ck.terms_residual.max((st.resummed() - st.total).abs() / scale);
                    if st.u_norm * st.v_norm > 0.0 {
                        ck.c_theta = ck.c_theta.max(st.separated_part().abs() / (st.u_norm * st.v_norm));
                    }

                    let mut constant = st.separated_small.abs() + st.separated_big.abs() + st.off_diagonal.abs();
                    let mut operator = st.boundary_bound(amb.op_norm);
                    if st.matched != 0.0 {
                        let v_fn = AtomFn::new(v.clone());
                        for (k, h) in hs.iter().enumerate() {
                            let mut b_h = vec![0.0; n];
                            for &a in &h_atoms[k] {
                                b_h[a] = 1.0;
                            }
                            let cell_value: f64 = {
                                let cell = ts.matched[k];
                                let xs: Vec<usize> = ts
                                    .small
                                    .atoms
                                    .iter()
                                    .zip(&ts.small.parts)
                                    .filter(|(_, &pt)| pt == SurgeryPart::Cell(cell))
                                    .map(|(&a, _)| a)
                                    .collect();
                                let ys: Vec<usize> = ts
                                    .big
                                    .atoms
                                    .iter()
                                    .zip(&ts.big.parts)
                                    .filter(|(_, &pt)| pt == SurgeryPart::Cell(cell))
                                    .map(|(&a, _)| a)
                                    .collect();
                                ys.iter()
                                    .map(|&b| xs.iter().map(|&a| op.entry(b, a) * u[a]).sum::<f64>() * v[b] * amb.weight(b))
                                    .sum()
                            };
                            match sigma_surgery(h, &u_full, &v_fn, &AtomFn::new(b_h), op, amb, p.sigma) {
                                Some(sg) => {
                                    let ck = &mut out.checks;
                                    let s = sg.abs_scale.max(f64::MIN_POSITIVE);
                                    ck.sigma_residual = ck.sigma_residual.max(sg.residual / s);
                                    ck.pivot_residual = ck.pivot_residual.max(sg.pivot_residual);
                                    ck.smoothing_ratio = ck.smoothing_ratio.max(sg.smoothing_ratio);
                                    constant += sg.constant_bound;
                                    operator += sg.operator_bound;
                                }
                                None => {
                                    out.checks.sigma_skipped += 1;
                                    constant += cell_value.abs();
                                }
                            }
                        }
                    }
                    let piece = Piece {
                        value: aa * st.total,
                        constant_part: aa.abs() * constant,
                        operator_part: aa.abs() * operator,
                    };
                    out.piece_violations += usize::from(!piece.holds());
                    out.piece.add(&piece);
                }
            }
        }
    }
    Ok(out)
}

fn prerequisites(side: &SideData, nodes: &BTreeSet<NodeId>, amb: &Ambient) -> Prerequisites {
    let mut out = Prerequisites::default();
    for &x in nodes {
        for &xi in &side.tree.node(x).children {
            for c in choices(side, x, xi) {
                let stop = side.st.stop_of[c.node].expect("choices use stopping cubes");
                let sc = &side.st.stops[stop];
                let (mut m2, mut t2) = (0.0, 0.0);
                for &a in side.tree.atoms(xi) {
                    let l = side.tree.local(c.node, a).expect("child inside the test cube");
                    let w = amb.weight(a);
                    m2 += sc.maximal[l] * sc.maximal[l] * w;
                    t2 += sc.testing[l] * sc.testing[l] * w;
                }
                let a2 = c.coef * c.coef;
                out.maximal[c.branch.index()] += a2 * m2 / amb.lambda_mass;
                out.operator[c.branch.index()] += a2 * t2 / amb.lambda_mass;
            }
        }
    }
    out
}

/// The diagonal bucket of one orientation, resummed through the theta- and sigma-surgeries.
pub fn diagonal_sum(pairs: &[Pair], trial: &Trial, orientation: Orientation, amb: &Ambient) -> Result<DiagonalReport> {
    let view = trial.view(orientation);
    let mine: Vec<&Pair> = pairs.iter().filter(|p| p.orientation == orientation).collect();
    let parts: Vec<Result<PairOut>> = mine
        .par_iter()
        .map(|p| one_pair(&view, trial, amb, p.small, p.big))
        .collect();
    let mut rep = DiagonalReport {
        pairs: mine.len(),
        ..Default::default()
    };
    for part in parts {
        let o = part?;
        rep.value += o.value;
        rep.resummed += o.resummed;
        rep.abs_scale += o.abs_scale;
        for i in 0..3 {
            for j in 0..3 {
                rep.branch_sums[i][j] += o.branch_sums[i][j];
            }
        }
        rep.piece.add(&o.piece);
        rep.piece_violations += o.piece_violations;
        rep.checks.merge(&o.checks);
    }
    let mut small_n: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut big_n: BTreeMap<NodeId, usize> = BTreeMap::new();
    for p in &mine {
        *small_n.entry(p.small).or_insert(0) += 1;
        *big_n.entry(p.big).or_insert(0) += 1;
    }
    let small_nodes: BTreeSet<NodeId> = small_n.keys().copied().collect();
    let big_nodes: BTreeSet<NodeId> = big_n.keys().copied().collect();
    let ps = prerequisites(view.small, &small_nodes, amb);
    let pb = prerequisites(view.big, &big_nodes, amb);
    let ns = small_n.values().copied().max().unwrap_or(0);
    let nb = big_n.values().copied().max().unwrap_or(0);
    if view.small.side == Side::T {
        (rep.prerequisites_f, rep.prerequisites_g, rep.neighbours_f, rep.neighbours_g) = (ps, pb, ns, nb);
    } else {
        (rep.prerequisites_f, rep.prerequisites_g, rep.neighbours_f, rep.neighbours_g) = (pb, ps, nb, ns);
    }
    Ok(rep)
}
