//! Seeded instances on `[-1, 1)^n` and the checks run on each of them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::czo::{discretize, DiscretizedOperator, KernelSpec};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, FRAC_BITS};
use crate::martingale::{
    classical_truncation_norm, dq_maximal_norm, expand, half_twisted_field, jn_decompose, random_signs, transform_norm,
    Scope,
};
use crate::measure::{inner, random_uniform, uniform_on_cube, AtomFn, DiscreteMeasure, MaximalEngine};
use crate::rng::{mix, SeedTree};
use crate::scalar::Scalar;
use crate::stopping::{build_stopping, BoundCheck, StoppingConstants, StoppingTree};
use crate::testfns::{constants, make_family, CustomCube, CustomFamily, FamilyStrategy, Side, TestFunctionFamily};
use crate::tree::CubeTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Equal atoms at the cell centres of a uniform lattice.
    Lattice,
    /// Equal atoms at uniform random positions.
    Random,
    /// Uniform random positions with weights spread over `2^-WEIGHT_SPREAD_LOG2 .. 1`, so that
    /// light cubes sit next to heavy atoms.
    Weighted,
}

pub const WEIGHT_SPREAD_LOG2: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatteryKernel {
    Cauchy,
    Riesz { axis: usize },
}

impl BatteryKernel {
    pub fn spec(&self, dim: usize) -> Result<KernelSpec> {
        match *self {
            BatteryKernel::Cauchy if dim == 1 => Ok(KernelSpec::cauchy()),
            BatteryKernel::Cauchy => Err(Error::InvalidParameter("the Cauchy kernel is one-dimensional".into())),
            BatteryKernel::Riesz { axis } => KernelSpec::riesz(dim, dim as f64, axis),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryFamily {
    Indicator,
    /// Signs constant on leaf cells, so refining the atoms leaves the family unchanged.
    Perturbed,
    /// Indicator of a seeded subset of the children, so averages vanish on the others.
    Sparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub dim: usize,
    pub depth: u32,
    pub layout: Layout,
    pub atoms: usize,
    pub kernel: BatteryKernel,
    pub family: BatteryFamily,
    pub eta: f64,
    pub seed: u64,
}

impl InstanceSpec {
    /// Side exponent of the leaves of the grid on `[-1, 1)^n`.
    pub fn leaf_log2(&self) -> i32 {
        1 - self.depth as i32
    }

    pub fn strategy<S: Scalar>(&self, tree: &CubeTree<S>) -> FamilyStrategy {
        match self.family {
            BatteryFamily::Sparse => FamilyStrategy::Custom(sparse_family(tree, self.seed)),
            BatteryFamily::Indicator => FamilyStrategy::Indicator,
            BatteryFamily::Perturbed => FamilyStrategy::Perturbed {
                eta: self.eta,
                seed: self.seed,
                resolution_log2: Some(self.leaf_log2()),
            },
        }
    }

    /// The same instance with `factor` times as many atoms.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            atoms: self.atoms * factor,
            ..*self
        }
    }
}

/// Each child is kept on a fair coin keyed by the seed and the child's position; a cube whose
/// coins drop every massive child keeps its heaviest one.
pub fn sparse_family<S: Scalar>(tree: &CubeTree<S>, seed: u64) -> CustomFamily {
    let mut cubes = Vec::new();
    for id in 0..tree.len() {
        let kids = &tree.node(id).children;
        if kids.is_empty() {
            continue;
        }
        let coin = |c: usize| {
            let q = tree.cube(c);
            let mut key = vec![seed, q.generation as u64];
            key.extend(q.index.iter().map(|&i| i as u64));
            mix(&key) & 1 == 0
        };
        let mut kept: Vec<usize> = kids.iter().copied().filter(|&c| coin(c) && tree.mass(c) > S::zero()).collect();
        if kept.is_empty() {
            let heaviest = kids
                .iter()
                .copied()
                .max_by(|&a, &b| tree.mass(a).partial_cmp(&tree.mass(b)).expect("finite masses"))
                .expect("internal node");
            kept.push(heaviest);
        }
        let q = tree.cube(id);
        cubes.push(CustomCube {
            generation: q.generation,
            index: q.index.clone(),
            values: kept.iter().flat_map(|&c| tree.atoms(c).iter().map(|&a| (a, 1.0))).collect(),
        });
    }
    CustomFamily { cubes }
}

/// Everything built from one spec.
pub struct Instance<S> {
    pub spec: InstanceSpec,
    pub mu: DiscreteMeasure<S>,
    pub tree: CubeTree<S>,
    pub op: DiscretizedOperator<S>,
    pub engine: MaximalEngine<S>,
    pub fam: TestFunctionFamily<S>,
    pub st: StoppingTree<S>,
}

fn lattice_side(atoms: usize, dim: usize) -> Result<usize> {
    let k = (atoms as f64).powf(1.0 / dim as f64).round() as usize;
    if k.pow(dim as u32) != atoms {
        return Err(Error::InvalidParameter(format!("{atoms} atoms do not form a lattice in dimension {dim}")));
    }
    Ok(k)
}

impl<S: Scalar> Instance<S> {
    pub fn build(spec: &InstanceSpec) -> Result<Self> {
        let dim = spec.dim;
        let centre = vec![0.0; dim];
        let mu: DiscreteMeasure<S> = match spec.layout {
            Layout::Lattice => uniform_on_cube(dim, &centre, 2.0, lattice_side(spec.atoms, dim)?, 1.0)?,
            Layout::Random => {
                let mut rng = SeedTree::new(spec.seed).rng("battery-measure", spec.atoms as u64);
                random_uniform(dim, &centre, 2.0, spec.atoms, 1.0, &mut rng)?
            }
            Layout::Weighted => {
                let mut rng = SeedTree::new(spec.seed).rng("battery-measure", spec.atoms as u64);
                let base: DiscreteMeasure<S> = random_uniform(dim, &centre, 2.0, spec.atoms, 1.0, &mut rng)?;
                let raw: Vec<f64> = (0..spec.atoms).map(|_| (-WEIGHT_SPREAD_LOG2 * rng.gen::<f64>()).exp2()).collect();
                let total: f64 = raw.iter().sum();
                let pts = (0..spec.atoms).map(|a| base.coords(a).to_vec()).collect();
                DiscreteMeasure::new(dim, pts, raw.iter().map(|w| S::of(w / total)).collect(), dim as f64, base.r_min)?
            }
        };
        let grid = build_grid(&centre, 0, spec.depth, dim)?;
        let tree = CubeTree::build(&grid, &mu)?;
        let op = discretize(&spec.kernel.spec(dim)?, &mu)?;
        let engine = MaximalEngine::new(&mu);
        let fam = make_family(&spec.strategy(&tree), Side::T, &tree, &mu)?;
        let c = constants(&[(&fam, &tree)], &mu, &op);
        let st = build_stopping(
            &tree,
            &fam,
            &op,
            &mu,
            &engine,
            StoppingConstants {
                a: c.a,
                b: c.b,
                maximal_norm: engine.op_norm(spec.seed).norm.as_f64(),
            },
        );
        Ok(Self {
            spec: *spec,
            mu,
            tree,
            op,
            engine,
            fam,
            st,
        })
    }

    /// Values in `[-1, 1)` that are constant on cells of side `2^res_log2`.
    pub fn cell_probe(&self, probe: u64, res_log2: i32) -> AtomFn<S> {
        let shift = res_log2.max(-FRAC_BITS);
        AtomFn::new(
            (0..self.mu.len())
                .map(|a| {
                    let mut key = vec![self.spec.seed, probe];
                    key.extend(self.mu.point(a).iter().map(|x| x.floor_div_pow2(shift) as u64));
                    let u = (mix(&key) >> 11) as f64 / (1u64 << 53) as f64;
                    S::of(2.0 * u - 1.0)
                })
                .collect(),
        )
    }
}

/// Level-set tail of the half-twisted field of one probe, sup-normalised and then scaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetRecord {
    pub scale: f64,
    pub hypothesis: bool,
    /// `(t, mu(Phi > t) / mu(P0), 2^(-(t-1)/2))`.
    pub tail: Vec<(f64, f64, f64)>,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub spec: InstanceSpec,
    pub stops: usize,
    pub generations: u32,
    pub depth_capped: bool,
    pub a: f64,
    pub decay: BoundCheck,
    pub carleson: BoundCheck,
    /// `max |f - expansion| / max |f|`, when no leaf holds several atoms.
    pub reconstruction: Option<f64>,
    /// `|sum ||Delta_Q f||^2 + ||residual||^2 - ||f||^2| / ||f||^2` for indicator families.
    pub pythagoras: Option<f64>,
    pub level_sets: Vec<LevelSetRecord>,
}

/// Scales applied to the sup-normalised fields in the level-set check.
pub const LEVEL_SET_SCALES: [f64; 3] = [1.0, 0.5, 0.25];

pub fn check_instance<S: Scalar>(spec: &InstanceSpec) -> Result<InstanceRecord> {
    let i = Instance::<S>::build(spec)?;
    let (tree, st, mu) = (&i.tree, &i.st, &i.mu);
    let n = mu.len();
    // atoms outside the root carry no expansion
    let f = i.cell_probe(0, -FRAC_BITS).restrict(|a| tree.pos[a].is_some());
    let dec = expand(tree, st, &i.fam, mu, &f)?;
    let exact = !st.depth_capped;
    let reconstruction = exact.then(|| dec.reconstruction_residual / f.max_abs().as_f64().max(f64::MIN_POSITIVE));
    let pythagoras = (exact && spec.family == BatteryFamily::Indicator).then(|| {
        let pieces: f64 = dec.norms_sq(tree, mu).into_iter().map(|v| v.as_f64()).sum();
        let lhs = pieces + inner(mu, &dec.residual, &dec.residual).as_f64();
        let rhs = inner(mu, &f, &f).as_f64();
        (lhs - rhs).abs() / rhs
    });

    let h = i.cell_probe(1, spec.leaf_log2());
    let ones = vec![S::one(); tree.len()];
    let field = half_twisted_field(tree, st, mu, 0, &ones, &h);
    let sup = field.sup_norm();
    let mut level_sets = Vec::new();
    if sup > S::zero() {
        for &scale in &LEVEL_SET_SCALES {
            let phis = field.scaled(S::of(scale) / sup);
            let rep = jn_decompose(tree, &phis, 0)?;
            level_sets.push(LevelSetRecord {
                scale,
                hypothesis: rep.hypothesis_holds(),
                holds: rep.tail_holds(),
                tail: rep.tail,
            });
        }
    }
    debug_assert_eq!(n, f.len());
    Ok(InstanceRecord {
        spec: *spec,
        stops: st.stops.len(),
        generations: st.n_generations(),
        depth_capped: st.depth_capped,
        a: st.constants.a,
        decay: st.check_decay(tree),
        carleson: st.check_carleson(tree),
        reconstruction,
        pythagoras,
        level_sets,
    })
}

pub const ALL_FAMILIES: [BatteryFamily; 3] = [BatteryFamily::Indicator, BatteryFamily::Perturbed, BatteryFamily::Sparse];

fn kernels_for(dim: usize) -> [BatteryKernel; 2] {
    if dim == 1 {
        [BatteryKernel::Cauchy, BatteryKernel::Riesz { axis: 0 }]
    } else {
        [BatteryKernel::Riesz { axis: 0 }, BatteryKernel::Riesz { axis: 1 }]
    }
}

/// Cartesian product of dimensions (paired with atom counts), depths, kernels, families and layouts, `replicas` times
/// with fresh seeds and alternating perturbation sizes.
pub fn instance_specs(
    seed: u64,
    dims: &[usize],
    depths: &[u32],
    atoms: &[usize],
    families: &[BatteryFamily],
    layouts: &[Layout],
    replicas: u64,
) -> Vec<InstanceSpec> {
    let tree = SeedTree::new(seed);
    let mut out = Vec::new();
    for rep in 0..replicas {
        for (&dim, &count) in dims.iter().zip(atoms) {
            for &depth in depths {
                for kernel in kernels_for(dim) {
                    for &family in families {
                        for &layout in layouts {
                            let idx = out.len() as u64;
                            out.push(InstanceSpec {
                                dim,
                                depth,
                                layout,
                                atoms: count,
                                kernel,
                                family,
                                eta: if rep % 2 == 0 { 0.45 } else { 0.3 },
                                seed: tree.child("instance", idx).seed,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// 1-D and 2-D instances with 256 atoms at depths 5 to 8, on all three layouts.
pub fn stopping_specs(seed: u64, replicas: u64) -> Vec<InstanceSpec> {
    let layouts = [Layout::Lattice, Layout::Random, Layout::Weighted];
    instance_specs(seed, &[1, 2], &[5, 6, 7, 8], &[256, 256], &ALL_FAMILIES, &layouts, replicas)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceBattery {
    pub records: Vec<InstanceRecord>,
    pub decay_pass: bool,
    pub carleson_pass: bool,
    pub worst_decay_margin: f64,
    pub worst_carleson_margin: f64,
    pub reconstruction_checked: usize,
    pub worst_reconstruction: f64,
    pub pythagoras_checked: usize,
    pub worst_pythagoras: f64,
    pub level_sets_checked: usize,
    pub level_sets_pass: bool,
}

pub const RECONSTRUCTION_TOL: f64 = 1e-9;
pub const PYTHAGORAS_TOL: f64 = 1e-9;

impl InstanceBattery {
    pub fn reconstruction_pass(&self) -> bool {
        self.reconstruction_checked > 0
            && self.worst_reconstruction <= RECONSTRUCTION_TOL
            && self.pythagoras_checked > 0
            && self.worst_pythagoras <= PYTHAGORAS_TOL
    }

    /// Vacuous batteries do not pass.
    pub fn level_set_pass(&self) -> bool {
        self.level_sets_checked > 0 && self.level_sets_pass
    }
}

pub fn run_instances<S: Scalar>(specs: &[InstanceSpec]) -> Result<InstanceBattery> {
    let records: Vec<InstanceRecord> = specs
        .par_iter()
        .map(check_instance::<S>)
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut b = InstanceBattery {
        decay_pass: true,
        carleson_pass: true,
        level_sets_pass: true,
        worst_decay_margin: f64::INFINITY,
        worst_carleson_margin: f64::INFINITY,
        reconstruction_checked: 0,
        worst_reconstruction: 0.0,
        pythagoras_checked: 0,
        worst_pythagoras: 0.0,
        level_sets_checked: 0,
        records: Vec::new(),
    };
    for r in &records {
        b.decay_pass &= r.decay.pass;
        b.carleson_pass &= r.carleson.pass;
        b.worst_decay_margin = b.worst_decay_margin.min(r.decay.bound - r.decay.value);
        b.worst_carleson_margin = b.worst_carleson_margin.min(r.carleson.bound - r.carleson.value);
        if let Some(x) = r.reconstruction {
            b.reconstruction_checked += 1;
            b.worst_reconstruction = b.worst_reconstruction.max(x);
        }
        if let Some(x) = r.pythagoras {
            b.pythagoras_checked += 1;
            b.worst_pythagoras = b.worst_pythagoras.max(x);
        }
        for l in r.level_sets.iter().filter(|l| l.hypothesis) {
            b.level_sets_checked += 1;
            b.level_sets_pass &= l.holds;
        }
    }
    b.records = records;
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSuite {
    /// `||sum eps_Q Delta_Q h||^2 / ||h||^2` under greedy and random signs.
    Transform,
    /// Maximal truncations of the half-twisted transform.
    HalfTwistedMaximal,
    /// Maximal truncations of the classical martingale transform, with and without stopping.
    ClassicalTruncation,
    /// `sum ||Delta_Q h||^2 / mu(Q*)`.
    SquareFunction,
}

impl SweepSuite {
    pub const ALL: [SweepSuite; 4] = [
        SweepSuite::Transform,
        SweepSuite::HalfTwistedMaximal,
        SweepSuite::ClassicalTruncation,
        SweepSuite::SquareFunction,
    ];
}

/// Probes and random sign vectors per instance.
pub const SWEEP_PROBES: u64 = 3;
pub const SWEEP_SIGNS: u64 = 4;

/// Largest ratio of each suite over the probes and stopping cubes of one instance.
pub fn sweep_instance<S: Scalar>(spec: &InstanceSpec) -> Result<[f64; 4]> {
    let i = Instance::<S>::build(spec)?;
    let (tree, st, mu) = (&i.tree, &i.st, &i.mu);
    let seeds = SeedTree::new(spec.seed);
    let mut out = [0.0f64; 4];
    for probe in 0..SWEEP_PROBES {
        let h = i.cell_probe(100 + probe, spec.leaf_log2()).restrict(|a| tree.pos[a].is_some());
        let dec = expand(tree, st, &i.fam, mu, &h)?;
        out[3] = out[3].max(dec.square_function_ratio(tree, mu));
        let mut rng = seeds.rng("sweep-signs", probe);
        let mut signs: Vec<Vec<S>> = (0..SWEEP_SIGNS).map(|_| random_signs(tree.len(), &mut rng)).collect();
        signs.push(vec![S::one(); tree.len()]);
        for eps in &signs {
            out[2] = out[2].max(classical_truncation_norm(tree, mu, eps, &h, 2.0, Scope::All));
        }
        for f in 0..st.stops.len() {
            let greedy = dec.greedy_signs(tree, st, mu, f);
            for eps in signs.iter().chain(std::iter::once(&greedy)) {
                out[0] = out[0].max(transform_norm(tree, st, mu, &dec, &h, f, eps));
                out[1] = out[1].max(dq_maximal_norm(tree, st, mu, f, eps, &h, 2.0));
                out[2] = out[2].max(classical_truncation_norm(tree, mu, eps, &h, 2.0, Scope::Stopping(st, f)));
            }
        }
    }
    Ok(out)
}

/// 1-D at depth 6 and 2-D at depth 4, 256 atoms before refinement. Only layouts whose
/// refinement resolves the same cell masses take part.
pub fn sweep_specs(seed: u64, replicas: u64) -> Vec<InstanceSpec> {
    let layouts = [Layout::Lattice, Layout::Random];
    let mut out = instance_specs(seed, &[1], &[6], &[256], &ALL_FAMILIES, &layouts, replicas);
    out.extend(instance_specs(seed ^ 1, &[2], &[4], &[256], &ALL_FAMILIES, &layouts, replicas));
    out
}

pub const SWEEP_REFINEMENT: usize = 4;
/// Largest admissible relative move of a ceiling under refinement.
pub const SWEEP_STABILITY: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub suite: SweepSuite,
    pub spec: InstanceSpec,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCeiling {
    pub suite: SweepSuite,
    pub base: f64,
    pub refined: f64,
    /// `refined / base - 1`.
    pub relative_move: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepBattery {
    pub rows: Vec<SweepRow>,
    pub ceilings: Vec<SweepCeiling>,
}

impl SweepBattery {
    pub fn pass(&self) -> bool {
        self.ceilings.iter().all(|c| c.pass)
    }
}

pub fn run_sweeps<S: Scalar>(specs: &[InstanceSpec]) -> Result<SweepBattery> {
    let all: Vec<InstanceSpec> = specs
        .iter()
        .flat_map(|s| [*s, s.refined(SWEEP_REFINEMENT)])
        .collect();
    let ratios: Vec<[f64; 4]> = all
        .par_iter()
        .map(sweep_instance::<S>)
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut base = [0.0f64; 4];
    let mut refined = [0.0f64; 4];
    for (k, (spec, r)) in all.iter().zip(&ratios).enumerate() {
        let target = if k % 2 == 0 { &mut base } else { &mut refined };
        for (s, suite) in SweepSuite::ALL.iter().enumerate() {
            target[s] = target[s].max(r[s]);
            rows.push(SweepRow {
                suite: *suite,
                spec: *spec,
                ratio: r[s],
            });
        }
    }
    let ceilings = SweepSuite::ALL
        .iter()
        .enumerate()
        .map(|(s, &suite)| {
            let relative_move = refined[s] / base[s] - 1.0;
            SweepCeiling {
                suite,
                base: base[s],
                refined: refined[s],
                relative_move,
                pass: base[s].is_finite() && refined[s].is_finite() && base[s] > 0.0 && relative_move.abs() < SWEEP_STABILITY,
            }
        })
        .collect();
    Ok(SweepBattery { rows, ceilings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, family: BatteryFamily, layout: Layout) -> InstanceSpec {
        InstanceSpec {
            dim,
            depth: 5,
            layout,
            atoms: 64,
            kernel: BatteryKernel::Riesz { axis: 0 },
            family,
            eta: 0.45,
            seed: 11,
        }
    }

    #[test]
    fn stopping_grid_has_the_advertised_size_and_distinct_seeds() {
        let specs = stopping_specs(7, 1);
        assert_eq!(specs.len(), 2 * 4 * 2 * 3 * 3);
        let seeds: std::collections::BTreeSet<u64> = specs.iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), specs.len());
        assert_eq!(stopping_specs(7, 2)[..specs.len()], specs[..]);
    }

    #[test]
    fn refinement_only_scales_the_atoms() {
        let s = spec(1, BatteryFamily::Indicator, Layout::Random);
        let r = s.refined(4);
        assert_eq!(r.atoms, 256);
        assert_eq!(InstanceSpec { atoms: 64, ..r }, s);
    }

    #[test]
    fn sparse_family_keeps_some_children_of_every_internal_cube() {
        let inst = Instance::<f64>::build(&spec(2, BatteryFamily::Indicator, Layout::Random)).unwrap();
        let fam = sparse_family(&inst.tree, 3);
        let internal = (0..inst.tree.len()).filter(|&id| !inst.tree.node(id).children.is_empty()).count();
        assert_eq!(fam.cubes.len(), internal);
        for c in &fam.cubes {
            assert!(!c.values.is_empty());
            assert!(c.values.iter().all(|&(_, v)| v == 1.0));
        }
    }

    #[test]
    fn weighted_layout_has_unit_mass() {
        let inst = Instance::<f64>::build(&spec(1, BatteryFamily::Indicator, Layout::Weighted)).unwrap();
        let total: f64 = (0..inst.mu.len()).map(|a| inst.mu.weight(a)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cell_probe_is_constant_on_cells() {
        let inst = Instance::<f64>::build(&spec(1, BatteryFamily::Indicator, Layout::Lattice)).unwrap();
        let h = inst.cell_probe(0, -2);
        for a in 0..inst.mu.len() {
            assert!((-1.0..1.0).contains(&h[a]));
            for b in 0..inst.mu.len() {
                let (x, y) = (inst.mu.coords(a)[0], inst.mu.coords(b)[0]);
                if (4.0 * x).floor() == (4.0 * y).floor() {
                    assert_eq!(h[a], h[b]);
                }
            }
        }
    }

    #[test]
    fn single_precision_instances_satisfy_decay_and_carleson() {
        for family in ALL_FAMILIES {
            let r = check_instance::<f32>(&spec(1, family, Layout::Weighted)).unwrap();
            assert!(r.decay.pass && r.carleson.pass, "{family:?}");
        }
    }
}
