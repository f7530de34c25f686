use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagonal::{diagonal_sum, DiagonalReport};
use super::nested::{nested_sum, NestedReport};
use super::separated::{separated_sum, SeparatedReport};
use super::split::{split_pairs, Orientation};
use super::tail::{beta_tail, TailReport};
use super::{Ambient, ParamSettings, Params, Piece, SideData, Trial};
use crate::czo::{discretize, KernelSpec, TabulatedKernel};
use crate::error::{Error, Result};
use crate::geometry::ShiftedDyadicGrid;
use crate::measure::{point_masses, random_uniform, uniform_on_cube, AtomFn, DiscreteMeasure, MeasureFile};
use crate::rng::SeedTree;
use crate::stopping::{build_stopping, StoppingConstants};
use crate::testfns::{constants, make_family, FamilyStrategy, Side};
use crate::tree::CubeTree;

/// Largest relative bookkeeping residual accepted by [`run_trial`].
pub const BOOKKEEPING_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// `per_axis^dim` equal atoms on the lattice of cell centres of `lambda Q0`, density one.
    Lattice { per_axis: usize },
    /// `count` atoms uniform on `lambda Q0`, density one, drawn from the scenario seed.
    Random { count: usize },
    /// A lattice of cluster centres on `lambda Q0`, each cluster a tiny lattice of
    /// `points_per_axis^dim` atoms at spacing `2^spacing_log2`, every cluster of unit mass.
    Clustered {
        clusters_per_axis: usize,
        points_per_axis: usize,
        spacing_log2: i32,
    },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Zero,
    Cauchy,
    /// Homogeneity `m` equals the dimension.
    Riesz { axis: usize },
    InversePower { power: f64, alpha: f64, c: f64 },
    Tabulated { path: PathBuf, alpha: f64, c: f64 },
}

impl KernelConfig {
    pub fn spec(&self, dim: usize) -> Result<KernelSpec> {
        let m = dim as f64;
        Ok(match self {
            KernelConfig::Zero => KernelSpec::zero(dim),
            KernelConfig::Cauchy => {
                if dim != 1 {
                    return Err(Error::InvalidParameter("the Cauchy kernel is one-dimensional".into()));
                }
                KernelSpec::cauchy()
            }
            KernelConfig::Riesz { axis } => KernelSpec::riesz(dim, m, *axis)?,
            KernelConfig::InversePower { power, alpha, c } => KernelSpec::inverse_power(dim, *power, m, *alpha, *c),
            KernelConfig::Tabulated { path, alpha, c } => KernelSpec::tabulated(TabulatedKernel::load(path)?, dim, m, *alpha, *c),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionSpec {
    /// Uniform in `[-1, 1]` on the atoms of `Q0`, fixed by the scenario seed.
    Random,
    Indicator,
    Zero,
    /// The `f` function again (only meaningful for `g`).
    SameAsF,
}

/// One pairing experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub dim: usize,
    pub measure: MeasureSpec,
    pub kernel: KernelConfig,
    pub kernel_scale: f64,
    pub family_f: FamilyStrategy,
    pub family_g: FamilyStrategy,
    pub f: FunctionSpec,
    pub g: FunctionSpec,
    pub depth: u32,
    pub q0_log2: i32,
    pub params: ParamSettings,
    pub trials: usize,
    pub seed: u64,
    pub dense_limit: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            dim: 1,
            measure: MeasureSpec::Lattice { per_axis: 192 },
            kernel: KernelConfig::Cauchy,
            kernel_scale: 1.0,
            family_f: FamilyStrategy::Indicator,
            family_g: FamilyStrategy::Indicator,
            f: FunctionSpec::Random,
            g: FunctionSpec::Random,
            depth: 7,
            q0_log2: 0,
            params: ParamSettings::default(),
            trials: 32,
            seed: 7,
            dense_limit: crate::czo::DEFAULT_DENSE_LIMIT,
        }
    }
}

/// Side of `lambda Q0` for the scenario's settings.
fn lambda_side(sc: &Scenario, p: &Params) -> f64 {
    p.lambda * (sc.q0_log2 as f64).exp2()
}

fn build_measure(sc: &Scenario, p: &Params) -> Result<DiscreteMeasure<f64>> {
    let dim = sc.dim;
    let side = lambda_side(sc, p);
    let center = vec![0.0; dim];
    let volume = side.powi(dim as i32);
    match &sc.measure {
        MeasureSpec::Lattice { per_axis } => uniform_on_cube(dim, &center, side, *per_axis, volume),
        MeasureSpec::Random { count } => {
            let mut rng = SeedTree::new(sc.seed).rng("measure", 0);
            random_uniform(dim, &center, side, *count, volume, &mut rng)
        }
        MeasureSpec::Clustered {
            clusters_per_axis,
            points_per_axis,
            spacing_log2,
        } => {
            let centres = uniform_on_cube::<f64>(dim, &center, side, *clusters_per_axis, 1.0)?;
            let h = (*spacing_log2 as f64).exp2();
            let k = *points_per_axis;
            let per = k.pow(dim as u32);
            let cell = side / *clusters_per_axis as f64;
            let w = cell.powi(dim as i32) / per as f64;
            let mut atoms = Vec::with_capacity(centres.len() * per);
            for c in 0..centres.len() {
                let base = centres.coords(c);
                for mut idx in 0..per {
                    let pt: Vec<f64> = (0..dim)
                        .map(|i| {
                            let j = idx % k;
                            idx /= k;
                            base[i] + (j as f64 - (k as f64 - 1.0) / 2.0) * h
                        })
                        .collect();
                    atoms.push((pt, w));
                }
            }
            point_masses(dim, &atoms, dim as f64, h)
        }
        MeasureSpec::File { path } => {
            let mu = MeasureFile::load(path)?.to_measure::<f64>()?;
            if mu.dim() != dim {
                return Err(Error::InvalidMeasure(format!("file of dimension {} in R^{dim}", mu.dim())));
            }
            Ok(mu)
        }
    }
}

/// Everything shared by the trials of a scenario.
#[derive(Clone, Debug)]
pub struct Setup {
    pub scenario: Scenario,
    pub amb: Ambient,
    pub f: AtomFn<f64>,
    pub g: AtomFn<f64>,
    /// `<|T| |f|, |g|>`, the roundoff scale of every pairing of pieces of `f` and `g`.
    pub abs_pairing: f64,
}

impl Setup {
    pub fn new(sc: &Scenario) -> Result<Self> {
        if sc.trials == 0 {
            return Err(Error::InvalidParameter("at least one trial is required".into()));
        }
        let spec = sc.kernel.spec(sc.dim)?.scaled(sc.kernel_scale);
        let params = Params::resolve(&sc.params, sc.q0_log2, spec.alpha, spec.m)?;
        let mu = build_measure(sc, &params)?;
        let op = discretize(&spec, &mu)?;
        let amb = Ambient::new(mu, op, params, sc.depth, sc.dense_limit, sc.seed)?;
        let make = |spec: FunctionSpec, label: &str, f: Option<&AtomFn<f64>>| -> AtomFn<f64> {
            let n = amb.n();
            let mut rng = SeedTree::new(sc.seed).rng(label, 0);
            let q0 = |a: usize| params.in_q0(amb.mu.point(a));
            match spec {
                FunctionSpec::Random => AtomFn::new(
                    (0..n)
                        .map(|a| {
                            let v = rng.gen_range(-1.0..=1.0);
                            if q0(a) {
                                v
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                ),
                FunctionSpec::Indicator => AtomFn::new((0..n).map(|a| if q0(a) { 1.0 } else { 0.0 }).collect()),
                FunctionSpec::Zero => AtomFn::zeros(n),
                FunctionSpec::SameAsF => f.cloned().unwrap_or_else(|| AtomFn::zeros(n)),
            }
        };
        if sc.f == FunctionSpec::SameAsF {
            return Err(Error::InvalidParameter("f cannot refer to itself".into()));
        }
        let f = make(sc.f, "f", None);
        let g = make(sc.g, "g", Some(&f));
        let n = amb.n();
        let abs_pairing = (0..n)
            .filter(|&y| g[y] != 0.0)
            .map(|y| {
                let s: f64 = (0..n).map(|x| amb.op.entry(y, x).abs() * f[x].abs()).sum();
                s * g[y].abs() * amb.weight(y)
            })
            .sum();
        Ok(Self {
            scenario: sc.clone(),
            amb,
            f,
            g,
            abs_pairing,
        })
    }

    /// Grids, trees, families and stopping trees of one trial.
    pub fn trial(&self, index: usize) -> Result<Trial> {
        let amb = &self.amb;
        let sc = &self.scenario;
        let p = &amb.params;
        let seeds = SeedTree::new(sc.seed).child("trial", index as u64);
        let dim = amb.mu.dim();
        let gt = ShiftedDyadicGrid::random(p.n_scale, sc.depth, dim, &mut seeds.rng("grid-t", 0))?;
        let gs = ShiftedDyadicGrid::random(p.n_scale, sc.depth, dim, &mut seeds.rng("grid-adjoint", 0))?;
        let dstar = ShiftedDyadicGrid::random(p.n_scale, 1, dim, &mut seeds.rng("grid-third", 0))?;
        let tt = CubeTree::build(&gt, &amb.mu)?;
        let ts = CubeTree::build(&gs, &amb.mu)?;
        let ft = make_family(&sc.family_f, Side::T, &tt, &amb.mu)?;
        let fs = make_family(&sc.family_g, Side::Adjoint, &ts, &amb.mu)?;
        let fc = constants(&[(&ft, &tt), (&fs, &ts)], &amb.mu, &amb.op);
        let c = StoppingConstants {
            a: fc.a,
            b: fc.b,
            maximal_norm: amb.maximal_norm,
        };
        let st_t = build_stopping(&tt, &ft, &amb.op, &amb.mu, &amb.engine, c);
        let st_s = build_stopping(&ts, &fs, &amb.op, &amb.mu, &amb.engine, c);
        let t = SideData::build(tt, ft, st_t, self.f.clone(), amb)?;
        let s = SideData::build(ts, fs, st_s, self.g.clone(), amb)?;
        Ok(Trial {
            t,
            s,
            dstar,
            a_const: fc.a,
            b_const: fc.b,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub bucket: String,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedPiece {
    pub name: String,
    #[serde(flatten)]
    pub piece: Piece,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub exact: f64,
    pub a_const: f64,
    pub b_const: f64,
    pub depth_capped: bool,
    pub pairs: [usize; 3],
    pub separated: SeparatedReport,
    pub nested: [NestedReport; 2],
    pub diagonal: [DiagonalReport; 2],
    pub tail: TailReport,
    /// Pieces whose values sum to `exact`.
    pub pieces: Vec<NamedPiece>,
    pub residuals: Vec<Residual>,
    pub max_residual: f64,
    /// Sum of the parts of the bounds free of `||T||`, and of those carrying it.
    pub c_part: f64,
    pub t_part: f64,
    /// `t_part / (||T|| mu(lambda Q0))`.
    pub t_coefficient: f64,
    /// `c_part / mu(lambda Q0)`.
    pub c_normalized: f64,
}

/// `|sum - exact| / max(sum |terms|, |exact|, floor)`.
pub fn relative_residual(terms: &[f64], exact: f64, floor: f64) -> f64 {
    let s: f64 = terms.iter().sum();
    let scale = terms
        .iter()
        .map(|t| t.abs())
        .sum::<f64>()
        .max(exact.abs())
        .max(floor)
        .max(f64::MIN_POSITIVE);
    (s - exact).abs() / scale
}

/// One full trial: all buckets, surgeries and tails, with every bookkeeping identity checked.
pub fn run_trial(setup: &Setup, index: usize) -> Result<TrialReport> {
    let amb = &setup.amb;
    let p = &amb.params;
    let trial = setup.trial(index)?;
    let (t, s) = (&trial.t, &trial.s);
    let beta = p.beta;
    let pairs = split_pairs(&t.tree, &s.tree, &p.goodbad(), |q, r| t.st.beta(q) < beta && s.st.beta(r) < beta);
    let separated = separated_sum(&pairs.separated, &trial, amb);
    let nested = Orientation::BOTH.map(|o| nested_sum(&pairs.nested, &trial, o, amb));
    let diagonal = [
        diagonal_sum(&pairs.diagonal, &trial, Orientation::Forward, amb)?,
        diagonal_sum(&pairs.diagonal, &trial, Orientation::Mirrored, amb)?,
    ];
    let tail = beta_tail(&trial, amb);
    let exact = tail.exact;

    let mut residuals = Vec::new();
    let floor = setup.abs_pairing;
    let check = |residuals: &mut Vec<Residual>, bucket: &str, terms: &[f64], target: f64| {
        residuals.push(Residual {
            bucket: bucket.to_string(),
            residual: relative_residual(terms, target, floor),
        });
    };
    let mut core_terms = vec![separated.value];
    for (k, o) in ["forward", "mirrored"].iter().enumerate() {
        let n = &nested[k];
        let d = &diagonal[k];
        core_terms.push(n.value);
        core_terms.push(d.value);
        check(&mut residuals, &format!("nested.{o}"), &[n.good, n.bad], n.value);
        check(&mut residuals, &format!("nested_good.{o}"), &[n.lemma43, n.lemma42, n.paraproduct_pairs], n.good);
        check(&mut residuals, &format!("paraproduct.{o}"), &[n.paraproduct.first, -n.paraproduct.second], n.paraproduct_pairs);
        let abs = d.abs_scale;
        residuals.push(Residual {
            bucket: format!("diagonal.{o}"),
            residual: (d.resummed - d.value).abs() / abs.max(d.value.abs()).max(f64::MIN_POSITIVE),
        });
        for (name, r) in [
            ("surgery_terms", d.checks.terms_residual),
            ("sigma_terms", d.checks.sigma_residual),
            ("sigma_pivot", d.checks.pivot_residual),
        ] {
            residuals.push(Residual {
                bucket: format!("{name}.{o}"),
                residual: r,
            });
        }
    }
    check(&mut residuals, "core", &core_terms, tail.core);

    let mut pieces = vec![NamedPiece {
        name: "separated".into(),
        piece: Piece {
            value: separated.value,
            constant_part: separated.bound,
            operator_part: 0.0,
        },
    }];
    for (k, o) in ["forward", "mirrored"].iter().enumerate() {
        let n = &nested[k];
        let d = &diagonal[k];
        pieces.push(NamedPiece {
            name: format!("nested_bad.{o}"),
            piece: Piece {
                value: n.bad,
                constant_part: 0.0,
                operator_part: n.bad_bound,
            },
        });
        pieces.push(NamedPiece {
            name: format!("child_remainder.{o}"),
            piece: Piece {
                value: n.lemma43,
                constant_part: n.lemma43_abs,
                operator_part: 0.0,
            },
        });
        pieces.push(NamedPiece {
            name: format!("outside_child.{o}"),
            piece: Piece {
                value: n.lemma42,
                constant_part: n.lemma42_abs,
                operator_part: 0.0,
            },
        });
        pieces.push(NamedPiece {
            name: format!("paraproduct.{o}"),
            piece: Piece {
                value: n.paraproduct_pairs,
                constant_part: n.paraproduct.bound,
                operator_part: 0.0,
            },
        });
        pieces.push(NamedPiece {
            name: format!("diagonal.{o}"),
            piece: d.piece,
        });
    }
    for (name, piece) in tail.pieces() {
        pieces.push(NamedPiece {
            name: name.into(),
            piece: *piece,
        });
    }
    pieces.push(NamedPiece {
        name: "leaf_remainder".into(),
        piece: Piece {
            value: tail.leaf_remainder,
            constant_part: tail.leaf_remainder.abs(),
            operator_part: 0.0,
        },
    });
    let values: Vec<f64> = pieces.iter().map(|p| p.piece.value).collect();
    check(&mut residuals, "total", &values, exact);

    let max_residual = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    if let Some(r) = residuals.iter().find(|r| !(r.residual <= BOOKKEEPING_TOL)) {
        return Err(Error::Bookkeeping {
            bucket: r.bucket.clone(),
            residual: r.residual,
        });
    }
    let c_part: f64 = pieces.iter().map(|p| p.piece.constant_part).sum();
    let t_part: f64 = pieces.iter().map(|p| p.piece.operator_part).sum();
    let denom = amb.op_norm * amb.lambda_mass;
    Ok(TrialReport {
        trial: index,
        exact,
        a_const: trial.a_const,
        b_const: trial.b_const,
        depth_capped: t.st.depth_capped || s.st.depth_capped,
        pairs: [pairs.separated.len(), pairs.nested.len(), pairs.diagonal.len()],
        separated,
        nested,
        diagonal,
        tail,
        pieces,
        residuals,
        max_residual,
        c_part,
        t_part,
        t_coefficient: if denom > 0.0 { t_part / denom } else { 0.0 },
        c_normalized: c_part / amb.lambda_mass,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: usize,
    pub depth_capped_trials: usize,
    pub mean_exact: f64,
    pub max_residual: f64,
    pub mean_t_coefficient: f64,
    pub max_t_coefficient: f64,
    pub mean_c_normalized: f64,
    pub max_c_normalized: f64,
    pub separated_pairwise_c: f64,
    pub child_remainder_ratio: f64,
    pub outside_child_ratio: f64,
    pub paraproduct_group_ratio: f64,
    pub c_theta: f64,
    pub smoothing_ratio: f64,
    pub neighbours_f: usize,
    pub neighbours_g: usize,
    pub child_violations: usize,
    pub containment_violations: usize,
    pub no_h: usize,
    pub eps_violations: usize,
    pub generation_split_violations: usize,
    pub diagonal_piece_violations: usize,
    pub partition_violations: usize,
    pub five_h_violations: usize,
    pub boundary_outside_bad: usize,
    pub h_mismatch: usize,
    pub sigma_skipped: usize,
    pub matched_cells: usize,
}

impl Aggregates {
    pub fn from_trials(trials: &[TrialReport]) -> Self {
        let n = trials.len().max(1) as f64;
        let mut a = Aggregates {
            trials: trials.len(),
            ..Default::default()
        };
        for t in trials {
            a.depth_capped_trials += usize::from(t.depth_capped);
            a.mean_exact += t.exact / n;
            a.max_residual = a.max_residual.max(t.max_residual);
            a.mean_t_coefficient += t.t_coefficient / n;
            a.max_t_coefficient = a.max_t_coefficient.max(t.t_coefficient);
            a.mean_c_normalized += t.c_normalized / n;
            a.max_c_normalized = a.max_c_normalized.max(t.c_normalized);
            a.separated_pairwise_c = a.separated_pairwise_c.max(t.separated.pairwise_c);
            for nr in &t.nested {
                a.child_remainder_ratio = a.child_remainder_ratio.max(nr.lemma43_ratio);
                a.outside_child_ratio = a.outside_child_ratio.max(nr.lemma42_ratio);
                a.paraproduct_group_ratio = a.paraproduct_group_ratio.max(nr.paraproduct.group_ratio);
                a.child_violations += nr.child_violations;
                a.containment_violations += nr.paraproduct.containment_violations;
                a.no_h += nr.paraproduct.no_h;
                a.eps_violations += usize::from(!nr.paraproduct.eps_holds);
                a.generation_split_violations += usize::from(!nr.paraproduct.generation_split_holds);
            }
            for d in &t.diagonal {
                a.c_theta = a.c_theta.max(d.checks.c_theta);
                a.smoothing_ratio = a.smoothing_ratio.max(d.checks.smoothing_ratio);
                a.neighbours_f = a.neighbours_f.max(d.neighbours_f);
                a.neighbours_g = a.neighbours_g.max(d.neighbours_g);
                a.diagonal_piece_violations += d.piece_violations;
                a.partition_violations += d.checks.partition_violations;
                a.five_h_violations += d.checks.five_h_violations;
                a.boundary_outside_bad += d.checks.boundary_outside_bad;
                a.h_mismatch += d.checks.h_mismatch;
                a.sigma_skipped += d.checks.sigma_skipped;
                a.matched_cells += d.checks.matched_cells;
            }
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub scenario: Scenario,
    pub params: Params,
    pub atoms: usize,
    pub op_norm: f64,
    pub maximal_norm: f64,
    pub q0_mass: f64,
    pub lambda_mass: f64,
    /// `||T|| mu(lambda Q0) / max |<T f, g>|` over `|f|, |g| <= 1_{Q0}`, the maximum found by
    /// alternating sign ascent (so the proxy is an upper estimate).
    pub c2_proxy: Option<f64>,
    pub trials: Vec<TrialReport>,
    pub aggregates: Aggregates,
}

/// Local lower estimate of `sup |<T f, g>|` over `|f|, |g| <= 1_{Q0}`.
pub fn local_pairing_sup(amb: &Ambient, starts: usize, seed: u64) -> f64 {
    let n = amb.n();
    let q0: Vec<usize> = (0..n).filter(|&a| amb.params.in_q0(amb.mu.point(a))).collect();
    if q0.is_empty() {
        return 0.0;
    }
    let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let mut best: f64 = 0.0;
    for k in 0..starts.max(1) {
        let mut rng = SeedTree::new(seed).rng("sign-ascent", k as u64);
        let mut f = AtomFn::zeros(n);
        for &a in &q0 {
            f.values[a] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let mut last = f64::NEG_INFINITY;
        for _ in 0..100 {
            let tf = amb.op.apply(&f);
            let mut g = AtomFn::zeros(n);
            for &a in &q0 {
                g.values[a] = sign(tf[a]);
            }
            let tg = amb.op.adjoint_apply(&g);
            for &a in &q0 {
                f.values[a] = sign(tg[a]);
            }
            let v = amb.op.pair(&f, &g);
            if v <= last * (1.0 + 1e-15) {
                last = last.max(v);
                break;
            }
            last = v;
        }
        best = best.max(last);
    }
    best
}

/// The full pipeline over the scenario's trials, run in parallel and reduced in trial order.
pub fn full_report(sc: &Scenario) -> Result<PairingReport> {
    let setup = Setup::new(sc)?;
    let trials: Vec<Result<TrialReport>> = (0..sc.trials).into_par_iter().map(|i| run_trial(&setup, i)).collect();
    let trials: Vec<TrialReport> = trials.into_iter().collect::<Result<_>>()?;
    let amb = &setup.amb;
    let sup = local_pairing_sup(amb, 4, sc.seed);
    Ok(PairingReport {
        scenario: sc.clone(),
        params: amb.params,
        atoms: amb.n(),
        op_norm: amb.op_norm,
        maximal_norm: amb.maximal_norm,
        q0_mass: amb.q0_mass,
        lambda_mass: amb.lambda_mass,
        c2_proxy: (sup > 0.0).then(|| amb.op_norm * amb.lambda_mass / sup),
        aggregates: Aggregates::from_trials(&trials),
        trials,
    })
}
