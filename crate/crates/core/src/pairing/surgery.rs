use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mc::rho;
use super::{Ambient, Params};
use crate::czo::DiscretizedOperator;
use crate::error::Result;
use crate::geometry::{cmp_gap, len_lt, Cube, Dyadic, ShiftedDyadicGrid};
use crate::measure::AtomFn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeryPart {
    /// Outside the other cube and away from its boundary.
    Separated,
    /// Near the other cube's boundary or near the boundary of its own third-grid cell.
    Boundary,
    /// Inside both cubes, grouped by the third-grid cell (index into `ThetaSurgery::cells`).
    Cell(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgerySide {
    pub atoms: Vec<usize>,
    pub parts: Vec<SurgeryPart>,
    /// Membership in the bad set, which depends only on the cube and the other grid.
    pub bad: Vec<bool>,
    pub boundary_in_bad: bool,
}

impl SurgerySide {
    pub fn count(&self, pred: impl Fn(SurgeryPart) -> bool) -> usize {
        self.parts.iter().filter(|&&p| pred(p)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSurgery {
    /// Cells of the third grid have side `2^cell_log2`.
    pub cell_log2: i32,
    pub cells: Vec<Cube>,
    pub small: SurgerySide,
    pub big: SurgerySide,
    /// Cells met by both sides.
    pub matched: Vec<usize>,
    /// `5H` inside both cubes for every matched cell, `H` the concentric cube of half-side
    /// `(1/2 - theta) l(g)`.
    pub five_h_inside: bool,
    /// Every atom of each cube received exactly one part.
    pub partition_exact: bool,
}

/// Concentric closed cube `{x : |x - c|_inf <= half}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HCube {
    pub center: Vec<Dyadic>,
    pub half: f64,
}

impl HCube {
    /// The cube kept by the surgery inside a cell of side `l`: half-side `(1/2 - theta) l`.
    pub fn from_cell(g: &Cube, theta: f64) -> Self {
        Self {
            center: g.center_dyadic(),
            half: (0.5 - theta) * g.side_f64(),
        }
    }

    /// `x` in the closed dilate by `factor`.
    pub fn contains(&self, x: &[Dyadic], factor: f64) -> bool {
        cmp_gap(rho(&self.center, x), factor * self.half) != Ordering::Greater
    }

    /// The closed dilate by `factor` inside the half-open cube `q`.
    pub fn dilate_inside(&self, q: &Cube, factor: f64) -> bool {
        let t = factor * self.half;
        (0..q.dim()).all(|i| {
            let below = self.center[i].0 - q.lo(i).0;
            let above = q.hi(i).0 - self.center[i].0;
            below >= 0 && above > 0 && cmp_gap(below, t) != Ordering::Less && cmp_gap(above, t) == Ordering::Greater
        })
    }
}

/// Fixed inputs of the surgery for one pair of cubes.
pub struct SurgeryGrids<'a> {
    pub dstar: &'a ShiftedDyadicGrid,
    /// Grid of the small cube and grid of the big cube.
    pub small_grid: &'a ShiftedDyadicGrid,
    pub big_grid: &'a ShiftedDyadicGrid,
}

fn lattice_generation(grid: &ShiftedDyadicGrid, side_log2: i32) -> Option<u32> {
    let g = grid.n_scale + 1 - side_log2;
    (g >= 0).then_some(g as u32)
}

/// Within `theta * side` of the boundary of the lattice cube of `grid` at side `2^k`.
fn near_lattice_boundary(grid: &ShiftedDyadicGrid, x: &[Dyadic], k: i32, theta: f64) -> bool {
    match lattice_generation(grid, k) {
        Some(g) => {
            let s = grid.lattice_cube_containing(x, g);
            len_lt(s.boundary_distance_sq(x), theta * (k as f64).exp2())
        }
        None => false,
    }
}

/// The theta-surgery of a small cube against a big one (`l(small) <= l(big)`), with third-grid
/// cells of side `2^j(theta) l(small)`.
pub fn theta_surgery(
    small: &Cube,
    small_atoms: &[usize],
    big: &Cube,
    big_atoms: &[usize],
    amb: &Ambient,
    grids: &SurgeryGrids,
) -> Result<ThetaSurgery> {
    let p: &Params = &amb.params;
    let theta = p.theta;
    let cell_log2 = p.j_theta + small.side_log2;
    Params::check_resolution(cell_log2 - 1)?;
    let cell_gen = lattice_generation(grids.dstar, cell_log2).expect("cells are finer than the root");
    let cell_side = (cell_log2 as f64).exp2();
    let r = p.r as i32;

    let mut cells: Vec<Cube> = Vec::new();
    let mut cell_ids: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    let mut side_of = |atoms: &[usize], other: &Cube, own: &Cube, is_small: bool, cells: &mut Vec<Cube>| {
        let mut out = SurgerySide {
            atoms: atoms.to_vec(),
            boundary_in_bad: true,
            ..Default::default()
        };
        for &a in atoms {
            let x = amb.mu.point(a);
            let g = grids.dstar.lattice_cube_containing(x, cell_gen);
            let in_other = other.contains_point(x);
            let near_other = len_lt(g.boundary_gap_sq(other), theta * other.side_f64() / 2.0);
            let near_cell = len_lt(g.boundary_distance_sq(x), theta * cell_side);
            let part = if near_other || (in_other && near_cell) {
                SurgeryPart::Boundary
            } else if !in_other {
                SurgeryPart::Separated
            } else {
                let k = *cell_ids.entry(g.index.clone()).or_insert_with(|| {
                    cells.push(g.clone());
                    cells.len() - 1
                });
                SurgeryPart::Cell(k)
            };
            // bad set: lattice collars of the other grid at scales within 2^r of the cube, and
            // the collars of the third-grid cells the surgery may use
            let own_k = own.side_log2;
            let (other_grid, cell_band) = if is_small {
                (grids.big_grid, 0..=0)
            } else {
                (grids.small_grid, 0..=r)
            };
            let lattice_bad = (own_k - r..=own_k + r).any(|k| near_lattice_boundary(other_grid, x, k, theta));
            let cell_bad = cell_band.into_iter().any(|t| {
                let k = p.j_theta + own_k - t;
                near_lattice_boundary(grids.dstar, x, k, theta)
            });
            let bad = lattice_bad || cell_bad;
            if part == SurgeryPart::Boundary && !bad {
                out.boundary_in_bad = false;
            }
            out.parts.push(part);
            out.bad.push(bad);
        }
        out
    };
    let small_side = side_of(small_atoms, big, small, true, &mut cells);
    let big_side = side_of(big_atoms, small, big, false, &mut cells);

    let cells_of = |s: &SurgerySide| -> Vec<bool> {
        let mut v = vec![false; cells.len()];
        for p in &s.parts {
            if let SurgeryPart::Cell(k) = p {
                v[*k] = true;
            }
        }
        v
    };
    let (cs, cb) = (cells_of(&small_side), cells_of(&big_side));
    let matched: Vec<usize> = (0..cells.len()).filter(|&k| cs[k] && cb[k]).collect();
    let five_h_inside = matched.iter().all(|&k| {
        let h = HCube::from_cell(&cells[k], theta);
        h.dilate_inside(small, 5.0) && h.dilate_inside(big, 5.0)
    });
    let partition_exact = small_side.parts.len() == small_atoms.len() && big_side.parts.len() == big_atoms.len();
    Ok(ThetaSurgery {
        cell_log2,
        cells,
        small: small_side,
        big: big_side,
        matched,
        five_h_inside,
        partition_exact,
    })
}

/// The six terms of `<Op(1_small u), 1_big v>` under a theta-surgery.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgeryTerms {
    pub total: f64,
    /// Sum of the absolute values of the summands of `total`.
    pub abs_total: f64,
    /// Small-side boundary atoms against all of the big cube.
    pub boundary_small: f64,
    /// Small-side separated atoms against all of the big cube.
    pub separated_small: f64,
    /// Small-side cell atoms against big-side boundary atoms.
    pub boundary_big: f64,
    /// Small-side cell atoms against big-side separated atoms.
    pub separated_big: f64,
    /// Different cells.
    pub off_diagonal: f64,
    /// Same cell.
    pub matched: f64,
    pub u_norm: f64,
    pub v_norm: f64,
    pub u_boundary_norm: f64,
    pub u_cells_norm: f64,
    pub v_boundary_norm: f64,
    pub u_bad_norm: f64,
    pub v_bad_norm: f64,
}

impl SurgeryTerms {
    pub fn resummed(&self) -> f64 {
        self.boundary_small + self.separated_small + self.boundary_big + self.separated_big + self.off_diagonal + self.matched
    }

    /// Terms whose kernel is evaluated at separated points.
    pub fn separated_part(&self) -> f64 {
        self.separated_small + self.separated_big + self.off_diagonal
    }

    /// `||T||`-bound of the two boundary terms.
    pub fn boundary_bound(&self, op_norm: f64) -> f64 {
        op_norm * (self.u_boundary_norm * self.v_norm + self.u_cells_norm * self.v_boundary_norm)
    }
}

/// Evaluate the surgery terms; `op` maps the small side's functions.
pub fn surgery_terms(ts: &ThetaSurgery, u: &[f64], v: &[f64], op: &DiscretizedOperator<f64>, amb: &Ambient) -> SurgeryTerms {
    let w = |a: usize| amb.weight(a);
    let mut out = SurgeryTerms::default();
    for (yi, &y) in ts.big.atoms.iter().enumerate() {
        if v[y] == 0.0 {
            continue;
        }
        let py = ts.big.parts[yi];
        let vy = v[y] * w(y);
        for (xi, &x) in ts.small.atoms.iter().enumerate() {
            let val = op.entry(y, x) * u[x] * vy;
            match (ts.small.parts[xi], py) {
                (SurgeryPart::Boundary, _) => out.boundary_small += val,
                (SurgeryPart::Separated, _) => out.separated_small += val,
                (SurgeryPart::Cell(_), SurgeryPart::Boundary) => out.boundary_big += val,
                (SurgeryPart::Cell(_), SurgeryPart::Separated) => out.separated_big += val,
                (SurgeryPart::Cell(k), SurgeryPart::Cell(l)) if k == l => out.matched += val,
                (SurgeryPart::Cell(_), SurgeryPart::Cell(_)) => out.off_diagonal += val,
            }
            out.total += val;
            out.abs_total += val.abs();
        }
    }
    let norm = |side: &super::surgery::SurgerySide, f: &[f64], keep: &dyn Fn(usize) -> bool| -> f64 {
        side.atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, &a)| f[a] * f[a] * w(a))
            .sum::<f64>()
            .sqrt()
    };
    let (s, b) = (&ts.small, &ts.big);
    out.u_norm = norm(s, u, &|_| true);
    out.v_norm = norm(b, v, &|_| true);
    out.u_boundary_norm = norm(s, u, &|i| s.parts[i] == SurgeryPart::Boundary);
    out.u_cells_norm = norm(s, u, &|i| matches!(s.parts[i], SurgeryPart::Cell(_)));
    out.v_boundary_norm = norm(b, v, &|i| b.parts[i] == SurgeryPart::Boundary);
    out.u_bad_norm = norm(s, u, &|i| s.bad[i]);
    out.v_bad_norm = norm(b, v, &|i| b.bad[i]);
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SigmaSurgery {
    /// `<Op(1_H u), 1_H v>`.
    pub total: f64,
    /// `<Op u, 1_H v>`.
    pub whole: f64,
    /// `<Op(1_{outside 5H} u), 1_H v>`.
    pub far: f64,
    /// `<Op(1_{5H \ (1+sigma)H} u), 1_H v>`.
    pub middle: f64,
    /// `<Op(1_{(1+sigma)H \ H} u), 1_H v>`.
    pub shell: f64,
    /// `|total - (whole - far - middle - shell)|`.
    pub residual: f64,
    /// Sum of the absolute values of the summands of `whole`.
    pub abs_scale: f64,
    /// `<Phi - mean, 1_H v>` with `Phi = Op(1_{outside 5H} u)` on `H`.
    pub mean_zero: f64,
    /// `mean * int_H v`.
    pub pivot: f64,
    /// `<b_H, Op(...)>` for `u`, the middle ring, the shell and `H` itself.
    pub pivot_terms: [f64; 4],
    /// Relative to the sum of the absolute values of the summands.
    pub pivot_residual: f64,
    /// `max_H |Phi - mean| / M u`.
    pub smoothing_ratio: f64,
    pub mass: f64,
    pub h_atoms: usize,
    pub constant_bound: f64,
    pub operator_bound: f64,
}

/// The sigma-surgery of a matched term on `H`. `u` is the full function on the small side (its
/// support may leave the cube), `v` the big-side function, `b_h` the pivot function.
///
/// Returns `None` when `H` carries no mass.
pub fn sigma_surgery(
    h: &HCube,
    u: &AtomFn<f64>,
    v: &AtomFn<f64>,
    b_h: &AtomFn<f64>,
    op: &DiscretizedOperator<f64>,
    amb: &Ambient,
    sigma: f64,
) -> Option<SigmaSurgery> {
    let n = amb.n();
    let w = |a: usize| amb.weight(a);
    let h_atoms: Vec<usize> = (0..n).filter(|&a| h.contains(amb.mu.point(a), 1.0)).collect();
    let mass: f64 = h_atoms.iter().map(|&a| w(a)).sum();
    if mass == 0.0 {
        return None;
    }
    // 0: H, 1: shell, 2: middle ring, 3: far
    let ring = |a: usize| -> usize {
        let x = amb.mu.point(a);
        if h.contains(x, 1.0) {
            0
        } else if h.contains(x, 1.0 + sigma) {
            1
        } else if h.contains(x, 5.0) {
            2
        } else {
            3
        }
    };
    let support: Vec<(usize, usize)> = (0..n).filter(|&a| u[a] != 0.0).map(|a| (a, ring(a))).collect();
    let mut out = SigmaSurgery {
        mass,
        h_atoms: h_atoms.len(),
        ..Default::default()
    };
    let mut phi = Vec::with_capacity(h_atoms.len());
    let mut by_ring_b = [0.0; 4];
    let mut whole_b = 0.0;
    let mut pivot_abs = 0.0f64;
    for &x in &h_atoms {
        let mut parts = [0.0; 4];
        let mut abs = 0.0;
        for &(y, k) in &support {
            let e = op.entry(x, y) * u[y];
            parts[k] += e;
            abs += e.abs();
        }
        let all: f64 = parts.iter().sum();
        let vx = v[x] * w(x);
        out.abs_scale += abs * vx.abs();
        pivot_abs += abs * (b_h[x] * w(x)).abs();
        out.total += parts[0] * vx;
        out.whole += all * vx;
        out.shell += parts[1] * vx;
        out.middle += parts[2] * vx;
        out.far += parts[3] * vx;
        let bx = b_h[x] * w(x);
        whole_b += all * bx;
        for k in 0..4 {
            by_ring_b[k] += parts[k] * bx;
        }
        phi.push(parts[3]);
    }
    out.residual = (out.total - (out.whole - out.far - out.middle - out.shell)).abs();
    let b_mass: f64 = h_atoms.iter().map(|&x| b_h[x] * w(x)).sum();
    let mean = if b_mass != 0.0 { by_ring_b[3] / b_mass } else { 0.0 };
    let v_int: f64 = h_atoms.iter().map(|&x| v[x] * w(x)).sum();
    for (k, &x) in h_atoms.iter().enumerate() {
        out.mean_zero += (phi[k] - mean) * v[x] * w(x);
        let dev = (phi[k] - mean).abs();
        if dev > 0.0 {
            let m = amb.engine.at(x, u);
            out.smoothing_ratio = out.smoothing_ratio.max(if m > 0.0 { dev / m } else { f64::INFINITY });
        }
    }
    out.pivot = mean * v_int;
    out.pivot_terms = [whole_b, by_ring_b[2], by_ring_b[1], by_ring_b[0]];
    out.pivot_residual =
        (by_ring_b[3] - (whole_b - by_ring_b[2] - by_ring_b[1] - by_ring_b[0])).abs() / pivot_abs.max(f64::MIN_POSITIVE);

    // bounds: the shell terms carry ||T||, everything else is measured
    let norm = |f: &AtomFn<f64>, keep: &dyn Fn(usize) -> bool| -> f64 {
        (0..n).filter(|&a| keep(a)).map(|a| f[a] * f[a] * w(a)).sum::<f64>().sqrt()
    };
    let shell_u = norm(u, &|a| support.iter().any(|&(y, k)| y == a && k == 1));
    let h_v = norm(v, &|a| h.contains(amb.mu.point(a), 1.0));
    let h_b = norm(b_h, &|a| h.contains(amb.mu.point(a), 1.0));
    let scale = if b_mass != 0.0 { (v_int / b_mass).abs() } else { 0.0 };
    out.constant_bound = out.whole.abs()
        + out.middle.abs()
        + out.mean_zero.abs()
        + (whole_b.abs() + by_ring_b[2].abs() + by_ring_b[0].abs()) * scale;
    out.operator_bound = amb.op_norm * shell_u * (h_v + h_b * scale);
    Some(out)
}
