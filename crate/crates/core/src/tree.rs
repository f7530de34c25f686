//! Positive-mass cubes of one grid over one measure, with atoms stored contiguously per cube.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Cube, ShiftedDyadicGrid};
use crate::measure::{AtomFn, DiscreteMeasure};
use crate::scalar::Scalar;

pub type NodeId = usize;

#[derive(Clone, Debug)]
pub struct Node<S> {
    pub cube: Cube,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Atoms of the cube are `order[start..end]`.
    pub start: usize,
    pub end: usize,
    pub mass: S,
}

impl<S> Node<S> {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Nodes are stored coarse to fine; node 0 is the root.
#[derive(Clone, Debug)]
pub struct CubeTree<S> {
    pub grid: ShiftedDyadicGrid,
    pub nodes: Vec<Node<S>>,
    pub order: Vec<usize>,
    /// Position of each atom in `order`, if inside the root.
    pub pos: Vec<Option<usize>>,
    pub leaf_of: Vec<Option<NodeId>>,
    pub by_generation: Vec<Vec<NodeId>>,
    lookup: HashMap<(u32, Vec<i64>), NodeId>,
}

impl<S: Scalar> CubeTree<S> {
    pub fn build(grid: &ShiftedDyadicGrid, mu: &DiscreteMeasure<S>) -> Result<Self> {
        if mu.dim() != grid.dim {
            return Err(Error::InvalidGrid("measure and grid dimensions differ".into()));
        }
        let dim = grid.dim;
        let depth = grid.depth;
        let root = grid.root();
        let leaf_k = grid.side_log2(depth);
        let corner = grid.root_corner();
        let mut keyed: Vec<(u128, usize)> = Vec::new();
        for a in 0..mu.len() {
            let x = mu.point(a);
            if !root.contains_point(x) {
                continue;
            }
            let idx: Vec<i64> = (0..dim).map(|i| (x[i] - corner[i]).floor_div_pow2(leaf_k)).collect();
            let mut key: u128 = 0;
            for g in 0..depth {
                let shift = depth - 1 - g;
                let mut chunk = 0u128;
                for (i, &ix) in idx.iter().enumerate() {
                    chunk |= (((ix >> shift) & 1) as u128) << i;
                }
                key = (key << dim) | chunk;
            }
            keyed.push((key, a));
        }
        if keyed.is_empty() {
            return Err(Error::EmptyRoot);
        }
        keyed.sort_unstable();
        let order: Vec<usize> = keyed.iter().map(|k| k.1).collect();
        let keys: Vec<u128> = keyed.iter().map(|k| k.0).collect();
        let mut pos = vec![None; mu.len()];
        for (p, &a) in order.iter().enumerate() {
            pos[a] = Some(p);
        }

        let mut nodes: Vec<Node<S>> = vec![Node {
            cube: root,
            parent: None,
            children: Vec::new(),
            start: 0,
            end: order.len(),
            mass: S::zero(),
        }];
        let mut head = 0;
        while head < nodes.len() {
            let id = head;
            head += 1;
            let g = nodes[id].cube.generation;
            if g == depth {
                continue;
            }
            let shift = dim as u32 * (depth - 1 - g);
            let mask = (1u128 << dim) - 1;
            let (start, end) = (nodes[id].start, nodes[id].end);
            let mut s = start;
            while s < end {
                let c = ((keys[s] >> shift) & mask) as usize;
                let mut e = s + 1;
                while e < end && ((keys[e] >> shift) & mask) as usize == c {
                    e += 1;
                }
                let cube = nodes[id].cube.child(c);
                let child = nodes.len();
                nodes.push(Node {
                    cube,
                    parent: Some(id),
                    children: Vec::new(),
                    start: s,
                    end: e,
                    mass: S::zero(),
                });
                nodes[id].children.push(child);
                s = e;
            }
        }
        for id in (0..nodes.len()).rev() {
            let m = if nodes[id].children.is_empty() {
                order[nodes[id].start..nodes[id].end].iter().map(|&a| mu.weight(a)).sum()
            } else {
                nodes[id].children.iter().map(|&c| nodes[c].mass).sum()
            };
            nodes[id].mass = m;
        }
        let mut leaf_of = vec![None; mu.len()];
        let mut by_generation = vec![Vec::new(); depth as usize + 1];
        let mut lookup = HashMap::with_capacity(nodes.len());
        for (id, node) in nodes.iter().enumerate() {
            by_generation[node.cube.generation as usize].push(id);
            lookup.insert((node.cube.generation, node.cube.index.clone()), id);
            if node.children.is_empty() {
                for &a in &order[node.start..node.end] {
                    leaf_of[a] = Some(id);
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            nodes,
            order,
            pos,
            leaf_of,
            by_generation,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id]
    }

    pub fn cube(&self, id: NodeId) -> &Cube {
        &self.nodes[id].cube
    }

    pub fn mass(&self, id: NodeId) -> S {
        self.nodes[id].mass
    }

    pub fn side(&self, id: NodeId) -> f64 {
        self.nodes[id].cube.side_f64()
    }

    pub fn generation(&self, id: NodeId) -> u32 {
        self.nodes[id].cube.generation
    }

    pub fn atoms(&self, id: NodeId) -> &[usize] {
        let n = &self.nodes[id];
        &self.order[n.start..n.end]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].cube.generation == self.grid.depth
    }

    pub fn find(&self, q: &Cube) -> Option<NodeId> {
        if q.grid != self.grid.id {
            return None;
        }
        self.lookup.get(&(q.generation, q.index.clone())).copied()
    }

    /// Index of atom `a` inside the atom slice of node `id`.
    pub fn local(&self, id: NodeId, a: usize) -> Option<usize> {
        let p = self.pos[a]?;
        let n = &self.nodes[id];
        (n.start <= p && p < n.end).then(|| p - n.start)
    }

    /// Node-containment; nodes on one chain share ranges, so generations break ties.
    pub fn contains(&self, outer: NodeId, inner: NodeId) -> bool {
        let (a, b) = (&self.nodes[outer], &self.nodes[inner]);
        a.start <= b.start && b.end <= a.end && a.cube.generation <= b.cube.generation
    }

    /// Path from the root to `id`, inclusive.
    pub fn chain(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Preorder traversal of the subtree rooted at `id`.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(q) = stack.pop() {
            out.push(q);
            for &c in self.nodes[q].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Node of the given generation containing atom `a`.
    pub fn node_at(&self, a: usize, generation: u32) -> Option<NodeId> {
        let mut cur = self.leaf_of[a]?;
        while self.nodes[cur].cube.generation > generation {
            cur = self.nodes[cur].parent?;
        }
        Some(cur)
    }

    /// Child of `id` containing atom `a`.
    pub fn child_containing(&self, id: NodeId, a: usize) -> Option<NodeId> {
        let p = self.pos[a]?;
        self.nodes[id]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].start <= p && p < self.nodes[c].end)
    }

    /// `sum_{x in Q} f(x) w(x)` for every node.
    pub fn integrals(&self, mu: &DiscreteMeasure<S>, f: &AtomFn<S>) -> Vec<S> {
        let mut out = vec![S::zero(); self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            out[id] = if self.nodes[id].children.is_empty() {
                self.atoms(id).iter().map(|&a| f[a] * mu.weight(a)).sum()
            } else {
                self.nodes[id].children.iter().map(|&c| out[c]).sum()
            };
        }
        out
    }

    /// `<f>_Q` for every node.
    pub fn averages(&self, mu: &DiscreteMeasure<S>, f: &AtomFn<S>) -> Vec<S> {
        self.integrals(mu, f)
            .into_iter()
            .zip(&self.nodes)
            .map(|(s, n)| s / n.mass)
            .collect()
    }

    pub fn average(&self, mu: &DiscreteMeasure<S>, f: &AtomFn<S>, id: NodeId) -> S {
        let s: S = self.atoms(id).iter().map(|&a| f[a] * mu.weight(a)).sum();
        s / self.nodes[id].mass
    }

    /// True if some positive-mass leaf holds more than one atom.
    pub fn leaves_unresolved(&self) -> bool {
        self.by_generation[self.grid.depth as usize]
            .iter()
            .any(|&id| self.nodes[id].len() > 1)
    }

    pub fn max_generation(&self) -> u32 {
        self.nodes.last().map(|n| n.cube.generation).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::measure::{random_uniform, uniform_on_cube};
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn tree_matches_brute_force_membership() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mu: DiscreteMeasure<f64> = random_uniform(2, &[0.0, 0.0], 2.0, 200, 1.0, &mut rng).unwrap();
        let grid = build_grid(&[0.375, -0.25], 1, 5, 2).unwrap();
        let tree = CubeTree::build(&grid, &mu).unwrap();
        for id in 0..tree.len() {
            let mut direct = mu.atoms_in(tree.cube(id));
            direct.sort();
            let mut got = tree.atoms(id).to_vec();
            got.sort();
            assert_eq!(got, direct);
            assert!((tree.mass(id) - mu.mass_in(tree.cube(id))).abs() < 1e-14);
            assert!(tree.mass(id) > 0.0);
            let kids: usize = tree.node(id).children.iter().map(|&c| tree.node(c).len()).sum();
            if !tree.is_leaf(id) {
                assert_eq!(kids, tree.node(id).len());
            }
            assert_eq!(tree.find(tree.cube(id)), Some(id));
        }
        for g in 1..tree.by_generation.len() {
            for &id in &tree.by_generation[g] {
                let p = tree.node(id).parent.unwrap();
                assert!(tree.cube(p).contains_cube(tree.cube(id)));
                assert!(tree.contains(p, id));
            }
        }
    }

    #[test]
    fn atoms_outside_root_are_skipped() {
        let mu: DiscreteMeasure<f64> = uniform_on_cube(1, &[0.0], 64.0, 64, 1.0).unwrap();
        let grid = build_grid(&[0.0], 3, 4, 1).unwrap();
        let tree = CubeTree::build(&grid, &mu).unwrap();
        assert_eq!(tree.order.len(), 16);
        assert!(tree.pos.iter().filter(|p| p.is_none()).count() == 48);
        assert!(!tree.leaves_unresolved());
    }

    proptest! {
        #[test]
        fn averages_match_direct(seed in 0u64..1000, depth in 1u32..7) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mu: DiscreteMeasure<f64> = random_uniform(1, &[0.0], 3.0, 40, 2.0, &mut rng).unwrap();
            let grid = build_grid(&[0.5], 1, depth, 1).unwrap();
            let tree = CubeTree::build(&grid, &mu).unwrap();
            let f = AtomFn::new((0..40).map(|i| (i as f64).sin()).collect());
            let avg = tree.averages(&mu, &f);
            for id in 0..tree.len() {
                let direct = crate::measure::average(&mu, &f, tree.cube(id)).unwrap();
                prop_assert!((avg[id] - direct).abs() < 1e-12);
            }
        }
    }
}
