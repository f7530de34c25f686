use serde::{Deserialize, Serialize};

use crate::geometry::{len_le, Cube, GoodBadParams};
use crate::tree::{CubeTree, NodeId};

/// `Forward` pairs have `l(Q) < l(R)`; `Mirrored` pairs have `l(R) <= l(Q)` and swap the roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Forward,
    Mirrored,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::Forward, Orientation::Mirrored];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Separated,
    Nested,
    Diagonal,
}

/// `small` lives on the smaller-cube side of the orientation, `big` on the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub small: NodeId,
    pub big: NodeId,
    pub orientation: Orientation,
}

impl Pair {
    /// `(Q, R)`: the `T`-side node and the `T*`-side node.
    pub fn qr(&self) -> (NodeId, NodeId) {
        match self.orientation {
            Orientation::Forward => (self.small, self.big),
            Orientation::Mirrored => (self.big, self.small),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PairSets {
    pub separated: Vec<Pair>,
    pub nested: Vec<Pair>,
    pub diagonal: Vec<Pair>,
}

impl PairSets {
    pub fn get(&self, b: Bucket) -> &[Pair] {
        match b {
            Bucket::Separated => &self.separated,
            Bucket::Nested => &self.nested,
            Bucket::Diagonal => &self.diagonal,
        }
    }

    pub fn len(&self) -> usize {
        self.separated.len() + self.nested.len() + self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bucket of a pair with `l(small) <= l(big)`.
pub fn classify(small: &Cube, big: &Cube, p: &GoodBadParams) -> Bucket {
    let thr = p.threshold(small.side_f64(), big.side_f64());
    if !len_le(small.distance_sq(big), thr) {
        Bucket::Separated
    } else if small.side_log2 <= big.side_log2 - p.r as i32 {
        Bucket::Nested
    } else {
        Bucket::Diagonal
    }
}

/// Every `(Q, R)` over nodes with children (the only ones carrying a difference), kept when
/// `keep(Q, R)` holds, split by size order and then by bucket.
pub fn split_pairs(
    tq: &CubeTree<f64>,
    tr: &CubeTree<f64>,
    p: &GoodBadParams,
    keep: impl Fn(NodeId, NodeId) -> bool,
) -> PairSets {
    let internal = |t: &CubeTree<f64>| -> Vec<NodeId> {
        (0..t.len()).filter(|&x| !t.node(x).children.is_empty()).collect()
    };
    let (qs, rs) = (internal(tq), internal(tr));
    let mut out = PairSets::default();
    for &q in &qs {
        for &r in &rs {
            if !keep(q, r) {
                continue;
            }
            let (cq, cr) = (tq.cube(q), tr.cube(r));
            let pair = if cq.side_log2 < cr.side_log2 {
                Pair {
                    small: q,
                    big: r,
                    orientation: Orientation::Forward,
                }
            } else {
                Pair {
                    small: r,
                    big: q,
                    orientation: Orientation::Mirrored,
                }
            };
            let bucket = match pair.orientation {
                Orientation::Forward => classify(cq, cr, p),
                Orientation::Mirrored => classify(cr, cq, p),
            };
            match bucket {
                Bucket::Separated => out.separated.push(pair),
                Bucket::Nested => out.nested.push(pair),
                Bucket::Diagonal => out.diagonal.push(pair),
            }
        }
    }
    out
}
