//! Accretive test-function families, normalized to mean one on every positive-mass cube.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::czo::DiscretizedOperator;
use crate::error::{Error, Result};
use crate::geometry::FRAC_BITS;
use crate::measure::{AtomFn, DiscreteMeasure};
use crate::rng::mix;
use crate::scalar::Scalar;
use crate::tree::{CubeTree, NodeId};

/// Which operator the family is tested against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    T,
    Adjoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyStrategy {
    Indicator,
    /// `1_Q (1 + eta s)` with pseudo-random signs `s` that are constant on cells of side
    /// `2^resolution_log2` and independent across cubes; atomwise when the resolution is omitted.
    Perturbed {
        eta: f64,
        seed: u64,
        #[serde(default)]
        resolution_log2: Option<i32>,
    },
    Custom(CustomFamily),
}

/// Per-cube records; cubes without a record get the indicator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFamily {
    pub cubes: Vec<CustomCube>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomCube {
    pub generation: u32,
    pub index: Vec<i64>,
    /// `(atom id, value)`; unlisted atoms are zero.
    pub values: Vec<(usize, f64)>,
}

impl CustomFamily {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One function per tree node, stored on the node's atom slice.
#[derive(Clone, Debug)]
pub struct TestFunctionFamily<S> {
    pub side: Side,
    values: Vec<Vec<S>>,
}

pub fn make_family<S: Scalar>(
    strategy: &FamilyStrategy,
    side: Side,
    tree: &CubeTree<S>,
    mu: &DiscreteMeasure<S>,
) -> Result<TestFunctionFamily<S>> {
    let mut values: Vec<Vec<S>> = Vec::with_capacity(tree.len());
    let custom: HashMap<(u32, Vec<i64>), &CustomCube> = match strategy {
        FamilyStrategy::Custom(c) => c.cubes.iter().map(|q| ((q.generation, q.index.clone()), q)).collect(),
        _ => HashMap::new(),
    };
    if let FamilyStrategy::Perturbed { eta, .. } = strategy {
        if !(0.0..=0.5).contains(eta) {
            return Err(Error::InvalidParameter(format!("perturbation {eta} outside [0, 1/2]")));
        }
    }
    for id in 0..tree.len() {
        let atoms = tree.atoms(id);
        let cube = tree.cube(id);
        let raw: Vec<S> = match strategy {
            FamilyStrategy::Indicator => vec![S::one(); atoms.len()],
            FamilyStrategy::Perturbed {
                eta,
                seed,
                resolution_log2,
            } => {
                let res = resolution_log2.unwrap_or(-FRAC_BITS);
                let mut key = vec![*seed, side as u64, cube.generation as u64];
                key.extend(cube.index.iter().map(|&i| i as u64));
                let base = mix(&key);
                atoms
                    .iter()
                    .map(|&a| {
                        let mut k = vec![base];
                        k.extend(mu.point(a).iter().map(|x| x.floor_div_pow2(res) as u64));
                        let s = if mix(&k) & 1 == 0 { 1.0 } else { -1.0 };
                        S::of(1.0 + eta * s)
                    })
                    .collect()
            }
            FamilyStrategy::Custom(_) => match custom.get(&(cube.generation, cube.index.clone())) {
                None => vec![S::one(); atoms.len()],
                Some(rec) => {
                    let mut v = vec![S::zero(); atoms.len()];
                    for &(a, x) in &rec.values {
                        if a >= mu.len() {
                            return Err(Error::InvalidParameter(format!("atom id {a} out of range")));
                        }
                        match tree.local(id, a) {
                            Some(l) => v[l] = S::of(x),
                            None if x == 0.0 => {}
                            None => {
                                return Err(Error::InvalidParameter(format!(
                                    "custom function on cube {:?} is nonzero at atom {a} outside it",
                                    cube.index
                                )))
                            }
                        }
                    }
                    v
                }
            },
        };
        let integral: S = raw.iter().zip(atoms).map(|(&v, &a)| v * mu.weight(a)).sum();
        let avg = integral / tree.mass(id);
        if avg == S::zero() || !avg.is_finite() {
            return Err(Error::NonAccretive {
                generation: cube.generation,
                index: cube.index.clone(),
            });
        }
        values.push(raw.into_iter().map(|v| v / avg).collect());
    }
    Ok(TestFunctionFamily { side, values })
}

impl<S: Scalar> TestFunctionFamily<S> {
    /// Values of the cube's function on `tree.atoms(id)`.
    pub fn local(&self, id: NodeId) -> &[S] {
        &self.values[id]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The cube's function extended by zero to all atoms.
    pub fn function(&self, tree: &CubeTree<S>, id: NodeId, n_atoms: usize) -> AtomFn<S> {
        let mut out = AtomFn::zeros(n_atoms);
        for (&a, &v) in tree.atoms(id).iter().zip(&self.values[id]) {
            out.values[a] = v;
        }
        out
    }

    /// Value of the cube's function at atom `a` (zero outside the cube).
    pub fn at(&self, tree: &CubeTree<S>, id: NodeId, a: usize) -> S {
        tree.local(id, a).map(|l| self.values[id][l]).unwrap_or(S::zero())
    }

    /// `<b>_R` for a node `r` inside node `id`.
    pub fn average_on(&self, tree: &CubeTree<S>, mu: &DiscreteMeasure<S>, id: NodeId, r: NodeId) -> S {
        let base = tree.node(id).start;
        let nr = tree.node(r);
        let s: S = (nr.start..nr.end)
            .map(|p| self.values[id][p - base] * mu.weight(tree.order[p]))
            .sum();
        s / nr.mass
    }

    /// `||b||^2 / mu(Q)` for every node.
    pub fn l2_ratios(&self, tree: &CubeTree<S>, mu: &DiscreteMeasure<S>) -> Vec<S> {
        (0..tree.len())
            .map(|id| {
                let s: S = tree
                    .atoms(id)
                    .iter()
                    .zip(&self.values[id])
                    .map(|(&a, &v)| v * v * mu.weight(a))
                    .sum();
                s / tree.mass(id)
            })
            .collect()
    }

    /// `||1_Q T b||^2 / mu(Q)` for every node, with `T*` on the adjoint side.
    pub fn testing_ratios(&self, tree: &CubeTree<S>, mu: &DiscreteMeasure<S>, op: &DiscretizedOperator<S>) -> Vec<S> {
        (0..tree.len())
            .map(|id| {
                let atoms = tree.atoms(id);
                let b = self.function(tree, id, mu.len());
                let tb = match self.side {
                    Side::T => op.apply_block(&b, atoms, atoms),
                    Side::Adjoint => op.adjoint_apply_block(&b, atoms, atoms),
                };
                let s: S = tb.iter().zip(atoms).map(|(&v, &a)| v * v * mu.weight(a)).sum();
                s / tree.mass(id)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConstants {
    pub a: f64,
    pub b: f64,
}

/// The constants `A` and `B` of a set of families.
///
/// Families over one tree are summed per cube. Families over different trees (the two sides
/// live on independently shifted grids) contribute their own maxima, which are then summed.
pub fn constants<S: Scalar>(
    parts: &[(&TestFunctionFamily<S>, &CubeTree<S>)],
    mu: &DiscreteMeasure<S>,
    op: &DiscretizedOperator<S>,
) -> FamilyConstants {
    let mut groups: Vec<(u64, Vec<S>, Vec<S>)> = Vec::new();
    for (fam, tree) in parts {
        let l2 = fam.l2_ratios(tree, mu);
        let tb = fam.testing_ratios(tree, mu, op);
        match groups.iter_mut().find(|g| g.0 == tree.grid.id.0 && g.1.len() == l2.len()) {
            Some(g) => {
                g.1.iter_mut().zip(&l2).for_each(|(x, y)| *x += *y);
                g.2.iter_mut().zip(&tb).for_each(|(x, y)| *x += *y);
            }
            None => groups.push((tree.grid.id.0, l2, tb)),
        }
    }
    let max = |v: &[S]| v.iter().fold(0.0f64, |m, x| m.max(x.as_f64()));
    FamilyConstants {
        a: groups.iter().map(|g| max(&g.1)).sum(),
        b: groups.iter().map(|g| max(&g.2)).sum(),
    }
}
