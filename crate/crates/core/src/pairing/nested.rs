use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::separated::b_entry;
use super::split::{Orientation, Pair};
use super::{Ambient, SideData, Trial, View};
use crate::geometry::{bad_witness, len_le};
use crate::tree::NodeId;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NestedReport {
    pub pairs: usize,
    pub good_pairs: usize,
    pub bad_pairs: usize,
    /// Exact sum over the bucket.
    pub value: f64,
    pub good: f64,
    pub bad: f64,
    /// `||T|| sum_Y sum_k (sum_X ||Delta_X||^2)^(1/2) ||Delta_Y||` over bad pairs with
    /// `l(Y) = 2^k l(X)`.
    pub bad_bound: f64,
    /// `<Op Delta_X, 1_{Y \ Y_X} Delta_Y>` summed over good pairs.
    pub lemma43: f64,
    pub lemma43_abs: f64,
    /// Largest ratio against `B_XY ||Delta_X|| ||Delta_Y||`.
    pub lemma43_ratio: f64,
    /// The `1_{F \ Y_X} b_F` terms with their coefficients, `F = Y^a`.
    pub lemma42: f64,
    pub lemma42_abs: f64,
    /// Largest `|<Op Delta_X, 1_{F \ Y_X} b_F>| / ((l(X)/l(Y))^(a/2) mu(X)^(1/2) ||Delta_X||)`.
    pub lemma42_ratio: f64,
    /// What the good pairs leave for the paraproduct, summed pair by pair.
    pub paraproduct_pairs: f64,
    /// Good pairs whose child `Y_X` is missing, does not contain `X`, or is too close to `X`.
    pub child_violations: usize,
    pub paraproduct: ParaproductReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParaproductReport {
    /// Telescoped form `sum_X <Op Delta_X, eps(J) b_{J^a} - eps(root) b_root>`.
    pub value: f64,
    pub first: f64,
    pub second: f64,
    /// `sum_F ||sum eps Delta_X|| ||1_F Op* b_F||` for both halves.
    pub bound: f64,
    /// The same with each `||sum eps Delta_X||` split over stopping generations of the small side.
    pub generation_bound: f64,
    pub generation_split_holds: bool,
    /// Largest `||sum_{X^a = K, F(X) = F} eps Delta_X||^2 / mu(F cap K)`.
    pub group_ratio: f64,
    pub eps_max: f64,
    /// `|eps| <= 2 max |h|` on the big side.
    pub eps_holds: bool,
    /// Small nodes with no admissible top cube `H`.
    pub no_h: usize,
    pub terms: usize,
    /// Small nodes not contained in their `J` (goodness violated).
    pub containment_violations: usize,
}

/// Side of the coarsest cube of the big grid witnessing that each small node is bad at scales
/// `>= 2^r l(X)`; `None` if it is good at all of them.
fn witnesses(view: &View, amb: &Ambient) -> Vec<Option<i32>> {
    let gb = amb.params.goodbad();
    let r = amb.params.r as i32;
    view.small
        .internal
        .par_iter()
        .map(|&x| {
            let c = view.small.tree.cube(x);
            let a_scale = ((c.side_log2 + r) as f64).exp2();
            bad_witness(c, &view.big.tree.grid, a_scale, &gb).map(|w| w.side_log2)
        })
        .collect()
}

fn is_good(w: Option<i32>, big_side_log2: i32) -> bool {
    w.map_or(true, |s| s < big_side_log2)
}

#[derive(Default)]
struct Partial {
    rep: NestedReport,
    bad_groups: BTreeMap<(NodeId, i32), f64>,
}

fn dot_skip(side: &SideData, owner: NodeId, skip: Option<NodeId>, v: &[f64], f: impl Fn(usize) -> f64, amb: &Ambient) -> f64 {
    side.tree
        .atoms(owner)
        .iter()
        .filter(|&&a| skip.map_or(true, |s| side.tree.local(s, a).is_none()))
        .map(|&a| v[a] * f(a) * amb.weight(a))
        .sum()
}

fn one_small(view: &View, amb: &Ambient, x: NodeId, ys: &[NodeId], w: Option<i32>) -> Partial {
    let (small, big) = (view.small, view.big);
    let p = &amb.params;
    let gb = p.goodbad();
    let v = &small.op_delta[small.slot[x].expect("internal")];
    let cx = small.tree.cube(x);
    let lx = cx.side_f64();
    let first = small.tree.atoms(x)[0];
    let nx = small.norms[x];
    let mut out = Partial::default();
    let rep = &mut out.rep;
    for &y in ys {
        let val = view.pair_value(x, y, amb);
        rep.pairs += 1;
        rep.value += val;
        let cy = big.tree.cube(y);
        if !is_good(w, cy.side_log2) {
            rep.bad_pairs += 1;
            rep.bad += val;
            *out.bad_groups.entry((y, cy.side_log2 - cx.side_log2)).or_insert(0.0) += nx * nx;
            continue;
        }
        rep.good_pairs += 1;
        rep.good += val;
        let thr = gb.threshold(lx, cy.side_f64());
        let Some(yx) = big.tree.child_containing(y, first) else {
            rep.child_violations += 1;
            rep.lemma43 += val;
            rep.lemma43_abs += val.abs();
            continue;
        };
        let cyx = big.tree.cube(yx);
        if !cyx.contains_cube(cx) || len_le(cx.boundary_gap_sq(cyx), thr) {
            rep.child_violations += 1;
        }
        let f = big.anchor(y);
        let l43 = dot_skip(big, y, Some(yx), v, |a| big.delta_at(y, a), amb);
        let raw = dot_skip(big, f, Some(yx), v, |a| big.b_at(f, a), amb);
        let full_f = dot_skip(big, f, None, v, |a| big.b_at(f, a), amb);
        let (l42, par) = if big.st.is_stopping(yx) {
            let own = dot_skip(big, yx, None, v, |a| big.b_at(yx, a), amb);
            (big.coef[y] * raw, big.coef[yx] * own - big.coef[y] * full_f)
        } else {
            let c = big.coef[yx] - big.coef[y];
            (-c * raw, c * full_f)
        };
        rep.lemma43 += l43;
        rep.lemma43_abs += l43.abs();
        rep.lemma42 += l42;
        rep.lemma42_abs += l42.abs();
        rep.paraproduct_pairs += par;
        let ly = cy.side_f64();
        let ny = big.norms[y];
        let b = b_entry(lx, small.mass(x), ly, big.mass(yx), p.alpha) * nx * ny;
        if b > 0.0 {
            rep.lemma43_ratio = rep.lemma43_ratio.max(l43.abs() / b);
        }
        let d42 = (lx / ly).powf(p.alpha / 2.0) * small.mass(x).sqrt() * nx;
        if d42 > 0.0 {
            rep.lemma42_ratio = rep.lemma42_ratio.max(raw.abs() / d42);
        }
    }
    out
}

/// The nested bucket of one orientation: good/bad split, the two lemma estimates, and the
/// paraproduct left over by the good pairs.
pub fn nested_sum(pairs: &[Pair], trial: &Trial, orientation: Orientation, amb: &Ambient) -> NestedReport {
    let view = trial.view(orientation);
    let wit = witnesses(&view, amb);
    let mut by_small: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| p.orientation == orientation) {
        by_small.entry(p.small).or_default().push(p.big);
    }
    let groups: Vec<(NodeId, Vec<NodeId>)> = by_small.into_iter().collect();
    let parts: Vec<Partial> = groups
        .par_iter()
        .map(|(x, ys)| one_small(&view, amb, *x, ys, wit[view.small.slot[*x].expect("internal")]))
        .collect();
    let mut rep = NestedReport::default();
    let mut bad_groups: BTreeMap<(NodeId, i32), f64> = BTreeMap::new();
    for part in parts {
        let r = part.rep;
        rep.pairs += r.pairs;
        rep.good_pairs += r.good_pairs;
        rep.bad_pairs += r.bad_pairs;
        rep.value += r.value;
        rep.good += r.good;
        rep.bad += r.bad;
        rep.lemma43 += r.lemma43;
        rep.lemma43_abs += r.lemma43_abs;
        rep.lemma43_ratio = rep.lemma43_ratio.max(r.lemma43_ratio);
        rep.lemma42 += r.lemma42;
        rep.lemma42_abs += r.lemma42_abs;
        rep.lemma42_ratio = rep.lemma42_ratio.max(r.lemma42_ratio);
        rep.paraproduct_pairs += r.paraproduct_pairs;
        rep.child_violations += r.child_violations;
        for (k, v) in part.bad_groups {
            *bad_groups.entry(k).or_insert(0.0) += v;
        }
    }
    rep.bad_bound = amb.op_norm
        * bad_groups
            .iter()
            .map(|(&(y, _), &s)| s.sqrt() * view.big.norms[y])
            .sum::<f64>();
    rep.paraproduct = paraproduct_with(&view, amb, &wit);
    rep
}

/// The paraproduct of one orientation in telescoped form, with its testing bound.
pub fn paraproduct(trial: &Trial, orientation: Orientation, amb: &Ambient) -> ParaproductReport {
    let view = trial.view(orientation);
    let wit = witnesses(&view, amb);
    paraproduct_with(&view, amb, &wit)
}

struct Accum {
    whole: Vec<f64>,
    by_group: BTreeMap<usize, Vec<f64>>,
}

fn paraproduct_with(view: &View, amb: &Ambient, wit: &[Option<i32>]) -> ParaproductReport {
    let (small, big) = (view.small, view.big);
    let p = &amb.params;
    let r = p.r as i32;
    let mut rep = ParaproductReport {
        generation_split_holds: true,
        eps_holds: true,
        ..Default::default()
    };
    let h_max = big.h.max_abs();
    // stop index of F -> accumulated eps Delta_X on F's atom slice, whole and per small ancestor
    let mut first: BTreeMap<usize, Accum> = BTreeMap::new();
    let mut second = Accum {
        whole: vec![0.0; big.tree.atoms(0).len()],
        by_group: BTreeMap::new(),
    };
    let eps_root = big.coef[0];
    let add = |acc: &mut Accum, big_f: NodeId, x: NodeId, k: usize, eps: f64, len: usize| -> bool {
        let group = acc.by_group.entry(k).or_insert_with(|| vec![0.0; len]);
        for (&a, &d) in small.tree.atoms(x).iter().zip(small.dec.local(x)) {
            let Some(l) = big.tree.local(big_f, a) else { return false };
            acc.whole[l] += eps * d;
            group[l] += eps * d;
        }
        true
    };
    for (slot, &x) in small.internal.iter().enumerate() {
        if small.st.beta(x) >= p.beta {
            continue;
        }
        let cx = small.tree.cube(x);
        let alpha = wit[slot].map_or(r, |w| r.max(w + 1 - cx.side_log2));
        let first_atom = small.tree.atoms(x)[0];
        let Some(leaf) = big.tree.leaf_of[first_atom] else {
            rep.no_h += 1;
            continue;
        };
        let h = big
            .tree
            .chain(leaf)
            .into_iter()
            .filter(|&y| big.tree.cube(y).side_log2 >= cx.side_log2 + alpha && big.st.beta(y) < p.beta)
            .last();
        let Some(h) = h else {
            rep.no_h += 1;
            continue;
        };
        let j = big.tree.child_containing(h, first_atom).expect("first atom lies in H");
        if !big.tree.cube(j).contains_cube(cx) {
            rep.containment_violations += 1;
        }
        rep.terms += 1;
        let f = big.anchor(j);
        let eps = big.coef[j];
        rep.eps_max = rep.eps_max.max(eps.abs()).max(eps_root.abs());
        let v = &small.op_delta[slot];
        let t1 = eps * dot_skip(big, f, None, v, |a| big.b_at(f, a), amb);
        let t2 = eps_root * dot_skip(big, 0, None, v, |a| big.b_at(0, a), amb);
        rep.first += t1;
        rep.second += t2;
        let k = small.st.ancestor_of(x);
        let fs = big.st.ancestor_of(j);
        let len = big.tree.atoms(f).len();
        let acc = first.entry(fs).or_insert_with(|| Accum {
            whole: vec![0.0; len],
            by_group: BTreeMap::new(),
        });
        let ok1 = add(acc, f, x, k, eps, len);
        let ok2 = add(&mut second, 0, x, k, eps_root, big.tree.atoms(0).len());
        if !(ok1 && ok2) {
            rep.containment_violations += 1;
        }
    }
    rep.value = rep.first - rep.second;
    rep.eps_holds = rep.eps_max <= 2.0 * h_max * (1.0 + 1e-12);

    let norm_local = |node: NodeId, vals: &[f64]| -> f64 {
        big.tree
            .atoms(node)
            .iter()
            .zip(vals)
            .map(|(&a, &v)| v * v * amb.weight(a))
            .sum::<f64>()
            .sqrt()
    };
    let settle = |fs: usize, acc: &Accum, rep: &mut ParaproductReport| {
        let node = big.st.stops[fs].node;
        let testing = norm_local(node, &big.st.stops[fs].testing);
        let whole = norm_local(node, &acc.whole);
        rep.bound += whole * testing;
        let mut by_gen: BTreeMap<u32, f64> = BTreeMap::new();
        for (&k, vals) in &acc.by_group {
            let n = norm_local(node, vals);
            *by_gen.entry(small.st.stops[k].generation).or_insert(0.0) += n * n;
            let knode = small.st.stops[k].node;
            let overlap: f64 = small
                .tree
                .atoms(knode)
                .iter()
                .filter(|&&a| big.tree.local(node, a).is_some())
                .map(|&a| amb.weight(a))
                .sum();
            if overlap > 0.0 {
                rep.group_ratio = rep.group_ratio.max(n * n / overlap);
            }
        }
        let split: f64 = by_gen.values().map(|s| s.sqrt()).sum();
        rep.generation_bound += split * testing;
        if whole > split * (1.0 + 1e-12) + 1e-300 {
            rep.generation_split_holds = false;
        }
    };
    for (&fs, acc) in &first {
        settle(fs, acc, &mut rep);
    }
    settle(0, &second, &mut rep);
    rep
}
