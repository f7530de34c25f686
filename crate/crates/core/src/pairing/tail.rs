use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mc::rho;
use super::{Ambient, Piece, SideData, Trial};
use crate::geometry::cmp_gap;
use crate::measure::AtomFn;

/// The three-way split of `<T b_{Q*}, b_{R*}>`: inside `Q*`, in the collar `(1+u)Q* \ Q*`,
/// and beyond it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollarSplit {
    pub inside: f64,
    pub collar: f64,
    pub far: f64,
    /// `sum_{x far, y in Q*} |K(x,y)| |b_{Q*}(y)| |b_{R*}(x)|`.
    pub far_abs: f64,
    /// `far_abs / (||b_{Q*}|| ||b_{R*}||)`.
    pub c_u: f64,
    pub collar_mass: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub beta: u32,
    pub exact: f64,
    /// `<T S f, S g>` with `S` summing the differences below generation `beta`.
    pub core: f64,
    /// `sum_{beta(Q) >= beta} <T Delta_Q f, g~>`.
    pub deep_f: Piece,
    /// `<T S f, sum_{beta(R) >= beta} Delta_R g>`.
    pub mixed: Piece,
    /// `-<g>_{R*} <T sum_{beta(Q) >= beta} Delta_Q f, b_{R*}>`.
    pub deep_residual: Piece,
    /// `<f>_{Q*} <T b_{Q*}, g~>`.
    pub residual_f: Piece,
    /// `<g>_{R*} <f~, T* b_{R*}>`.
    pub residual_g: Piece,
    /// `-<f>_{Q*} <g>_{R*} <T b_{Q*}, b_{R*}>`.
    pub collar: Piece,
    pub collar_split: CollarSplit,
    /// `<T f, g> - <T f~, g~>`; zero up to rounding when no leaf holds several atoms.
    pub leaf_remainder: f64,
    /// `||T|| mu(Q0)^(1/2) sum_{j >= beta} (sum_{F in generation j} mu(F))^(1/2)`, per side.
    pub mass_form_f: f64,
    pub mass_form_g: f64,
    pub generation_masses_f: Vec<f64>,
    pub generation_masses_g: Vec<f64>,
}

impl TailReport {
    pub fn pieces(&self) -> [(&'static str, &Piece); 6] {
        [
            ("deep_f", &self.deep_f),
            ("mixed", &self.mixed),
            ("deep_residual", &self.deep_residual),
            ("residual_f", &self.residual_f),
            ("residual_g", &self.residual_g),
            ("collar", &self.collar),
        ]
    }
}

struct Split {
    low: Vec<f64>,
    high: Vec<f64>,
    /// `sum_{j >= beta} (sum_{F in generation j} ||sum_{X^a = F} Delta_X||^2)^(1/2)`.
    high_gen_norm: f64,
}

fn split(side: &SideData, beta: u32, amb: &Ambient) -> Split {
    let n = amb.n();
    let mut low = vec![0.0; n];
    let mut high = vec![0.0; n];
    let mut per_f: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &x in &side.internal {
        let deep = side.st.beta(x) >= beta;
        let target = if deep { &mut high } else { &mut low };
        for (&a, &v) in side.tree.atoms(x).iter().zip(side.dec.local(x)) {
            target[a] += v;
        }
        if deep {
            let acc = per_f.entry(side.st.ancestor_of(x)).or_insert_with(|| vec![0.0; n]);
            for (&a, &v) in side.tree.atoms(x).iter().zip(side.dec.local(x)) {
                acc[a] += v;
            }
        }
    }
    let mut by_gen: BTreeMap<u32, f64> = BTreeMap::new();
    for (&f, acc) in &per_f {
        let s: f64 = acc.iter().enumerate().map(|(a, v)| v * v * amb.weight(a)).sum();
        *by_gen.entry(side.st.stops[f].generation).or_insert(0.0) += s;
    }
    Split {
        low,
        high,
        high_gen_norm: by_gen.values().map(|s| s.sqrt()).sum(),
    }
}

fn dot(a: &[f64], b: &[f64], amb: &Ambient) -> f64 {
    a.iter().zip(b).enumerate().map(|(i, (x, y))| x * y * amb.weight(i)).sum()
}

fn norm(a: &[f64], amb: &Ambient) -> f64 {
    dot(a, a, amb).sqrt()
}

fn norm_where(a: &[f64], amb: &Ambient, keep: impl Fn(usize) -> bool) -> f64 {
    a.iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(i, v)| v * v * amb.weight(i))
        .sum::<f64>()
        .sqrt()
}

fn apply(op: &crate::czo::DiscretizedOperator<f64>, v: &[f64]) -> Vec<f64> {
    op.apply(&AtomFn::new(v.to_vec())).values
}

fn mass_form(side: &SideData, beta: u32, amb: &Ambient) -> (f64, Vec<f64>) {
    let masses = side.st.generation_masses(&side.tree);
    let s: f64 = masses.iter().skip(beta as usize).map(|m| m.sqrt()).sum();
    (amb.op_norm * amb.q0_mass.sqrt() * s, masses)
}

/// Exact values and bounds of every term outside the truncated double sum.
pub fn beta_tail(trial: &Trial, amb: &Ambient) -> TailReport {
    let p = &amb.params;
    let beta = p.beta;
    let (t, s) = (&trial.t, &trial.s);
    let tn = amb.op_norm;
    let sf = split(t, beta, amb);
    let sg = split(s, beta, amb);
    let ft = t.reconstruction();
    let gt = s.reconstruction();
    let bq = t.fam.function(&t.tree, 0, amb.n()).values;
    let br = s.fam.function(&s.tree, 0, amb.n()).values;
    let (cf, cg) = (t.coef[0], s.coef[0]);

    let t_low = apply(&amb.op, &sf.low);
    let t_high = apply(&amb.op, &sf.high);
    let t_bq = apply(&amb.op, &bq);
    let t_ft = apply(&amb.op, &ft);
    let ts_br = apply(&amb.adj, &br);
    let exact = amb.op.pair(&t.h, &s.h);

    let g_norm = norm(&gt, amb);
    let f_norm = norm(&ft, amb);
    let br_norm = norm(&br, amb);
    let bq_norm = norm(&bq, amb);

    let deep_f = Piece {
        value: dot(&t_high, &gt, amb),
        constant_part: 0.0,
        operator_part: tn * sf.high_gen_norm * g_norm,
    };
    let mixed = Piece {
        value: dot(&t_low, &sg.high, amb),
        constant_part: 0.0,
        operator_part: tn * norm(&sf.low, amb) * sg.high_gen_norm,
    };
    let deep_residual = Piece {
        value: -cg * dot(&t_high, &br, amb),
        constant_part: 0.0,
        operator_part: cg.abs() * tn * sf.high_gen_norm * br_norm,
    };
    let in_q = |a: usize| t.tree.pos[a].is_some();
    let in_r = |a: usize| s.tree.pos[a].is_some();
    let residual_f = Piece {
        value: cf * dot(&t_bq, &gt, amb),
        constant_part: cf.abs() * norm_where(&t_bq, amb, |a| in_q(a) || gt[a] != 0.0) * g_norm,
        operator_part: 0.0,
    };
    let residual_g = Piece {
        value: cg * dot(&t_ft, &br, amb),
        constant_part: cg.abs() * norm_where(&ts_br, amb, |a| in_r(a) || ft[a] != 0.0) * f_norm,
        operator_part: 0.0,
    };

    // collar split of <T b_Q*, b_R*>
    let root = t.tree.cube(0);
    let c = root.center_dyadic();
    let dilate = (1.0 + p.u) * 0.5 * root.side_f64();
    let in_collar =
        |a: usize| !in_q(a) && cmp_gap(rho(&c, amb.mu.point(a)), dilate) == Ordering::Less;
    let mut cs = CollarSplit::default();
    let q_atoms = t.tree.atoms(0);
    for a in 0..amb.n() {
        let v = t_bq[a] * br[a] * amb.weight(a);
        if in_q(a) {
            cs.inside += v;
        } else if in_collar(a) {
            cs.collar += v;
            cs.collar_mass += amb.weight(a);
        } else {
            cs.far += v;
            if br[a] != 0.0 {
                let k: f64 = q_atoms.iter().map(|&y| amb.op.entry(a, y).abs() * bq[y].abs()).sum();
                cs.far_abs += k * br[a].abs() * amb.weight(a);
            }
        }
    }
    if bq_norm * br_norm > 0.0 {
        cs.c_u = cs.far_abs / (bq_norm * br_norm);
    }
    let cc = (cf * cg).abs();
    let collar = Piece {
        value: -cf * cg * (cs.inside + cs.collar + cs.far),
        constant_part: cc * (norm_where(&t_bq, amb, in_q) * br_norm + cs.far_abs),
        operator_part: cc * tn * bq_norm * norm_where(&br, amb, in_collar),
    };

    let core = dot(&t_low, &sg.low, amb);
    let leaf_remainder = exact - dot(&t_ft, &gt, amb);
    let (mass_form_f, generation_masses_f) = mass_form(t, beta, amb);
    let (mass_form_g, generation_masses_g) = mass_form(s, beta, amb);
    TailReport {
        beta,
        exact,
        core,
        deep_f,
        mixed,
        deep_residual,
        residual_f,
        residual_g,
        collar,
        collar_split: cs,
        leaf_remainder,
        mass_form_f,
        mass_form_g,
        generation_masses_f,
        generation_masses_g,
    }
}
