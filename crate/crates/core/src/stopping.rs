//! Stopping cubes driven by the average, maximal-function and testing conditions.

use serde::{Deserialize, Serialize};

use crate::czo::DiscretizedOperator;
use crate::error::{Error, Result};
use crate::geometry::Cube;
use crate::measure::{DiscreteMeasure, MaximalEngine};
use crate::scalar::Scalar;
use crate::testfns::{Side, TestFunctionFamily};
use crate::tree::{CubeTree, NodeId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triggers {
    pub average: bool,
    pub maximal: bool,
    pub testing: bool,
}

impl Triggers {
    pub fn any(&self) -> bool {
        self.average || self.maximal || self.testing
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub average: f64,
    pub maximal: f64,
    pub testing: f64,
}

impl Thresholds {
    /// `1/2`, `16 A^2 ||M||^2`, `16 A B`.
    pub fn new(a: f64, b: f64, maximal_norm: f64) -> Self {
        Self {
            average: 0.5,
            maximal: 16.0 * a * a * maximal_norm * maximal_norm,
            testing: 16.0 * a * b,
        }
    }
}

/// Inputs that fix the thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingConstants {
    pub a: f64,
    pub b: f64,
    pub maximal_norm: f64,
}

#[derive(Clone, Debug)]
pub struct StopCube<S> {
    pub node: NodeId,
    pub generation: u32,
    pub parent: Option<usize>,
    pub triggers: Triggers,
    /// `M b` on the cube's atoms.
    pub maximal: Vec<S>,
    /// `1_F T b` (or `T* b` on the adjoint side) on the cube's atoms.
    pub testing: Vec<S>,
}

#[derive(Clone, Debug)]
pub struct StoppingTree<S> {
    pub side: Side,
    pub constants: StoppingConstants,
    pub thresholds: Thresholds,
    /// Stopping cubes in breadth-first order; entry 0 is the root.
    pub stops: Vec<StopCube<S>>,
    /// Per node: index into `stops` if the node is a stopping cube.
    pub stop_of: Vec<Option<usize>>,
    /// Per node: index into `stops` of its minimal stopping ancestor.
    pub ancestor: Vec<usize>,
    /// Per node: average of the ancestor's test function over the node.
    pub ancestor_average: Vec<S>,
    /// Some leaf holds several atoms, so the finite grid may have cut the recursion short.
    pub depth_capped: bool,
    /// Largest `||M b_F|| / ||b_F||` seen on `F`; the maximal norm is raised to cover it.
    pub observed_maximal_ratio: f64,
}

/// Builds the stopping tree, raising the maximal-operator norm estimate until it dominates
/// `||1_F M b_F|| / ||b_F||` for every stopping cube `F`.
pub fn build_stopping<S: Scalar>(
    tree: &CubeTree<S>,
    fam: &TestFunctionFamily<S>,
    op: &DiscretizedOperator<S>,
    mu: &DiscreteMeasure<S>,
    engine: &MaximalEngine<S>,
    constants: StoppingConstants,
) -> StoppingTree<S> {
    let mut c = constants;
    loop {
        let out = build_once(tree, fam, op, mu, engine, c);
        if out.observed_maximal_ratio <= c.maximal_norm {
            return out;
        }
        c.maximal_norm = out.observed_maximal_ratio;
    }
}

fn build_once<S: Scalar>(
    tree: &CubeTree<S>,
    fam: &TestFunctionFamily<S>,
    op: &DiscretizedOperator<S>,
    mu: &DiscreteMeasure<S>,
    engine: &MaximalEngine<S>,
    constants: StoppingConstants,
) -> StoppingTree<S> {
    let th = Thresholds::new(constants.a, constants.b, constants.maximal_norm);
    let n_nodes = tree.len();
    let mut stops: Vec<StopCube<S>> = Vec::new();
    let mut stop_of = vec![None; n_nodes];
    let mut ancestor = vec![usize::MAX; n_nodes];
    let mut ancestor_average = vec![S::zero(); n_nodes];
    let mut observed: f64 = 0.0;

    stops.push(StopCube {
        node: 0,
        generation: 0,
        parent: None,
        triggers: Triggers::default(),
        maximal: Vec::new(),
        testing: Vec::new(),
    });
    stop_of[0] = Some(0);
    let mut head = 0;
    while head < stops.len() {
        let si = head;
        head += 1;
        let f = stops[si].node;
        let atoms = tree.atoms(f);
        let b = fam.function(tree, f, mu.len());
        let mb = engine.apply_on(&b, atoms);
        let tb = match fam.side {
            Side::T => op.apply_block(&b, atoms, atoms),
            Side::Adjoint => op.adjoint_apply_block(&b, atoms, atoms),
        };
        let base = tree.node(f).start;
        // prefix sums over the contiguous atom range of F
        let mut pb = vec![S::zero(); atoms.len() + 1];
        let mut pm = pb.clone();
        let mut pt = pb.clone();
        let mut bb = S::zero();
        for (k, &a) in atoms.iter().enumerate() {
            let w = mu.weight(a);
            let bv = fam.local(f)[k];
            pb[k + 1] = pb[k] + bv * w;
            pm[k + 1] = pm[k] + mb[k] * mb[k] * w;
            pt[k + 1] = pt[k] + tb[k] * tb[k] * w;
            bb += bv * bv * w;
        }
        let ratio = (pm[atoms.len()] / bb).sqrt().as_f64();
        observed = observed.max(ratio);

        ancestor[f] = si;
        ancestor_average[f] = pb[atoms.len()] / tree.mass(f);
        let mut stack: Vec<NodeId> = tree.node(f).children.iter().rev().copied().collect();
        while let Some(q) = stack.pop() {
            let node = tree.node(q);
            let (s, e) = (node.start - base, node.end - base);
            let mass = node.mass;
            let avg_b = (pb[e] - pb[s]) / mass;
            let trig = Triggers {
                average: avg_b.abs().as_f64() < th.average,
                maximal: ((pm[e] - pm[s]) / mass).as_f64() > th.maximal,
                testing: ((pt[e] - pt[s]) / mass).as_f64() > th.testing,
            };
            if trig.any() {
                stop_of[q] = Some(stops.len());
                stops.push(StopCube {
                    node: q,
                    generation: stops[si].generation + 1,
                    parent: Some(si),
                    triggers: trig,
                    maximal: Vec::new(),
                    testing: Vec::new(),
                });
                continue;
            }
            ancestor[q] = si;
            ancestor_average[q] = avg_b;
            for &c in node.children.iter().rev() {
                stack.push(c);
            }
        }
        stops[si].maximal = mb;
        stops[si].testing = tb;
    }
    StoppingTree {
        side: fam.side,
        constants,
        thresholds: th,
        stops,
        stop_of,
        ancestor,
        ancestor_average,
        depth_capped: tree.leaves_unresolved(),
        observed_maximal_ratio: observed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl<S: Scalar> StoppingTree<S> {
    /// `tau = 1 - 1/(8A)`.
    pub fn tau(&self) -> f64 {
        1.0 - 1.0 / (8.0 * self.constants.a)
    }

    pub fn n_generations(&self) -> u32 {
        self.stops.last().map(|s| s.generation + 1).unwrap_or(0)
    }

    /// Stopping-cube indices of generation `j`.
    pub fn generation(&self, j: u32) -> Vec<usize> {
        (0..self.stops.len()).filter(|&s| self.stops[s].generation == j).collect()
    }

    /// Stopping index of `Q^a`.
    pub fn ancestor_of(&self, q: NodeId) -> usize {
        self.ancestor[q]
    }

    pub fn ancestor_node(&self, q: NodeId) -> NodeId {
        self.stops[self.ancestor[q]].node
    }

    /// Generation index of the ancestor.
    pub fn beta(&self, q: NodeId) -> u32 {
        self.stops[self.ancestor[q]].generation
    }

    pub fn is_stopping(&self, q: NodeId) -> bool {
        self.stop_of[q].is_some()
    }

    /// Children stopping cubes of each stopping cube.
    pub fn stop_children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.stops.len()];
        for (i, s) in self.stops.iter().enumerate() {
            if let Some(p) = s.parent {
                out[p].push(i);
            }
        }
        out
    }

    /// Largest next-generation mass fraction inside a stopping cube, against `1 - 1/(8A)`.
    pub fn check_decay(&self, tree: &CubeTree<S>) -> BoundCheck {
        let mut worst: f64 = 0.0;
        for (f, kids) in self.stop_children().iter().enumerate() {
            let m: S = kids.iter().map(|&k| tree.mass(self.stops[k].node)).sum();
            worst = worst.max((m / tree.mass(self.stops[f].node)).as_f64());
        }
        let bound = self.tau();
        BoundCheck {
            value: worst,
            bound,
            pass: worst <= bound,
        }
    }

    /// `sup_Q sum_{F in tree, F inside Q} mu(F) / mu(Q)`, against `8A`.
    pub fn check_carleson(&self, tree: &CubeTree<S>) -> BoundCheck {
        let mut below = vec![S::zero(); tree.len()];
        let mut worst: f64 = 0.0;
        for id in (0..tree.len()).rev() {
            let own = if self.is_stopping(id) { tree.mass(id) } else { S::zero() };
            below[id] = own + tree.node(id).children.iter().map(|&c| below[c]).sum::<S>();
            worst = worst.max((below[id] / tree.mass(id)).as_f64());
        }
        let bound = 8.0 * self.constants.a;
        BoundCheck {
            value: worst,
            bound,
            pass: worst <= bound,
        }
    }

    /// `(Q^a, beta(Q))` for a cube of the tree's grid.
    pub fn ancestor(&self, tree: &CubeTree<S>, q: &Cube) -> Result<(Cube, u32)> {
        if !tree.grid.contains_cube(q) {
            return Err(Error::OutsideRoot);
        }
        let id = tree.find(q).ok_or(Error::EmptyCube)?;
        Ok((tree.cube(self.ancestor_node(id)).clone(), self.beta(id)))
    }

    /// `sum_{F in generation j} mu(F)` for each `j`.
    pub fn generation_masses(&self, tree: &CubeTree<S>) -> Vec<f64> {
        let mut out = vec![0.0; self.n_generations() as usize];
        for s in &self.stops {
            out[s.generation as usize] += tree.mass(s.node).as_f64();
        }
        out
    }

    pub fn dump(&self, tree: &CubeTree<S>) -> TreeDump {
        let mut generations = vec![Vec::new(); self.n_generations() as usize];
        for s in &self.stops {
            let c = tree.cube(s.node);
            generations[s.generation as usize].push(DumpEntry {
                generation: c.generation,
                index: c.index.clone(),
                parent: s.parent.map(|p| {
                    let pc = tree.cube(self.stops[p].node);
                    (pc.generation, pc.index.clone())
                }),
                triggers: s.triggers,
            });
        }
        TreeDump {
            side: self.side,
            depth_capped: self.depth_capped,
            generations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub generation: u32,
    pub index: Vec<i64>,
    pub parent: Option<(u32, Vec<i64>)>,
    pub triggers: Triggers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub side: Side,
    pub depth_capped: bool,
    pub generations: Vec<Vec<DumpEntry>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::czo::{discretize, KernelSpec};
    use crate::geometry::build_grid;
    use crate::measure::{average, uniform_on_cube, AtomFn};
    use crate::testfns::{constants, make_family, CustomCube, CustomFamily, FamilyStrategy};
    use proptest::prelude::*;

    struct Instance {
        mu: DiscreteMeasure<f64>,
        tree: CubeTree<f64>,
        fam: TestFunctionFamily<f64>,
        op: DiscretizedOperator<f64>,
        engine: MaximalEngine<f64>,
        consts: StoppingConstants,
    }

    fn instance(n: usize, depth: u32, strategy: FamilyStrategy, kernel: KernelSpec, side: Side) -> Instance {
        let mu = uniform_on_cube(1, &[0.0], 2.0, n, 1.0).unwrap();
        let grid = build_grid(&[0.0], 0, depth, 1).unwrap();
        let tree = CubeTree::build(&grid, &mu).unwrap();
        let fam = make_family(&strategy, side, &tree, &mu).unwrap();
        let op = discretize(&kernel, &mu).unwrap();
        let engine = MaximalEngine::new(&mu);
        let c = constants(&[(&fam, &tree)], &mu, &op);
        let consts = StoppingConstants {
            a: c.a,
            b: c.b,
            maximal_norm: engine.op_norm(1).norm,
        };
        Instance {
            mu,
            tree,
            fam,
            op,
            engine,
            consts,
        }
    }

    fn build(i: &Instance) -> StoppingTree<f64> {
        build_stopping(&i.tree, &i.fam, &i.op, &i.mu, &i.engine, i.consts)
    }

    #[test]
    fn trivial_tree() {
        let i = instance(32, 5, FamilyStrategy::Indicator, KernelSpec::zero(1), Side::T);
        let st = build(&i);
        assert_eq!(st.stops.len(), 1);
        assert_eq!(st.check_decay(&i.tree).value, 0.0);
        assert_eq!(st.check_carleson(&i.tree).value, 1.0);
        let root = i.tree.cube(0).clone();
        assert_eq!(st.ancestor(&i.tree, &root).unwrap(), (root, 0));
        assert!(st.tau() == 7.0 / 8.0);
    }

    #[test]
    fn zero_child_stops_on_average() {
        // root [-1, 1); the root function vanishes on the left child
        let values: Vec<(usize, f64)> = (16..32).map(|a| (a, 1.0)).collect();
        let strat = FamilyStrategy::Custom(CustomFamily {
            cubes: vec![CustomCube {
                generation: 0,
                index: vec![0],
                values,
            }],
        });
        let i = instance(32, 5, strat, KernelSpec::zero(1), Side::T);
        let st = build(&i);
        let left = i.tree.find(&i.tree.grid.cube(1, vec![0]).unwrap()).unwrap();
        let s = st.stop_of[left].expect("left child stops");
        assert!(st.stops[s].triggers.average);
        assert_eq!(st.stops[s].generation, 1);
        // a cube strictly inside it
        let inner = i.tree.node(left).children[0];
        assert_eq!(st.ancestor_node(inner), left);
        assert_eq!(st.beta(inner), 1);
        // two-generation Carleson value 1 + 1/2 at the root
        assert!((st.check_carleson(&i.tree).value - 1.5).abs() < 1e-15);
        assert!(st.check_decay(&i.tree).pass);
    }

    #[test]
    fn outside_root_rejected() {
        let i = instance(16, 4, FamilyStrategy::Indicator, KernelSpec::zero(1), Side::T);
        let st = build(&i);
        let far = i.tree.grid.lattice_cube(1, vec![5]);
        assert_eq!(st.ancestor(&i.tree, &far), Err(Error::OutsideRoot));
    }

    /// Marks maximal violating cubes top-down from direct averages over the full atom set.
    fn brute_first_generation(i: &Instance, st: &StoppingTree<f64>) -> Vec<NodeId> {
        let b = i.fam.function(&i.tree, 0, i.mu.len());
        let mb = i.engine.apply(&b);
        let tb = i.op.apply(&b).restrict(|a| i.tree.pos[a].is_some());
        let sq = |h: &AtomFn<f64>| AtomFn::new(h.values.iter().map(|v| v * v).collect());
        let (mb2, tb2) = (sq(&mb), sq(&tb));
        let mut out = Vec::new();
        let mut stack = i.tree.node(0).children.clone();
        while let Some(q) = stack.pop() {
            let cube = i.tree.cube(q);
            let viol = average(&i.mu, &b, cube).unwrap().abs() < 0.5
                || average(&i.mu, &mb2, cube).unwrap() > st.thresholds.maximal
                || average(&i.mu, &tb2, cube).unwrap() > st.thresholds.testing;
            if viol {
                out.push(q);
            } else {
                stack.extend(i.tree.node(q).children.iter().copied());
            }
        }
        out.sort();
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_instances(seed in 0u64..10_000, eta in 0.0f64..0.5, side in prop::bool::ANY) {
            let side = if side { Side::T } else { Side::Adjoint };
            let strat = FamilyStrategy::Perturbed { eta, seed, resolution_log2: None };
            let i = instance(64, 6, strat, KernelSpec::cauchy(), side);
            let st = build(&i);
            prop_assert!(st.check_decay(&i.tree).pass);
            prop_assert!(st.check_carleson(&i.tree).pass);
            prop_assert!(st.observed_maximal_ratio <= st.constants.maximal_norm);

            let mut first: Vec<NodeId> = st.generation(1).iter().map(|&s| st.stops[s].node).collect();
            first.sort();
            prop_assert_eq!(first, brute_first_generation(&i, &st));

            for q in 0..i.tree.len() {
                // walk-up oracle for the ancestor
                let mut cur = q;
                while !st.is_stopping(cur) {
                    cur = i.tree.node(cur).parent.unwrap();
                }
                prop_assert_eq!(st.ancestor_node(q), cur);
                if let Some(p) = i.tree.node(q).parent {
                    prop_assert!(st.beta(q) >= st.beta(p));
                }
                // all conditions fail below the ancestor, relative to its function
                let f = st.ancestor_node(q);
                if f != q {
                    let avg = i.fam.average_on(&i.tree, &i.mu, f, q);
                    prop_assert!(avg.abs() >= 0.5);
                    prop_assert!((avg - st.ancestor_average[q]).abs() < 1e-12);
                }
            }
            // every stopping cube violates a condition relative to its parent's function
            for s in &st.stops[1..] {
                prop_assert!(s.triggers.any());
            }
            let masses = st.generation_masses(&i.tree);
            for (j, m) in masses.iter().enumerate() {
                prop_assert!(*m <= st.tau().powi(j as i32) * i.tree.mass(0) * (1.0 + 1e-12));
            }
        }
    }
}
