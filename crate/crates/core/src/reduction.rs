//! Perfect ternary trees and the rewrite of a coloured voting-DAG into one.
//!
//! A tree of height `h` is stored as its `3^h` leaf colours in heap order:
//! the leaves under child `j` of the root are the `j`-th third of the vector,
//! recursively. Internal colours are never stored.
//!
//! [`reduce_to_ternary`] unshares a DAG top-down. When two or three of a
//! node's samples point at the same child, the node's colour is that child's
//! colour; the rewrite places two independent copies of the child's
//! reduction under the node and pads the third slot with an all-red tree.
//! Otherwise the three children are reduced independently.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual_dag::{collision_stats, colour_dag, NodeId, VotingDag};
use crate::rng::rng_from_seed;
use crate::{Colour, Error, Result};

/// Largest leaf count a tree may have by default (`3^14 < 10^7 < 3^15`).
pub const DEFAULT_LEAF_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryTree {
    height: usize,
    leaves: Vec<Colour>,
}

impl TernaryTree {
    pub fn new(height: usize, leaves: Vec<Colour>) -> Result<TernaryTree> {
        let expected = leaf_count(height, DEFAULT_LEAF_BUDGET)?;
        if leaves.len() as u64 != expected {
            return Err(Error::input(format!(
                "height-{height} tree needs {expected} leaves, got {}",
                leaves.len()
            )));
        }
        Ok(TernaryTree { height, leaves })
    }

    pub fn all_red(height: usize) -> Result<TernaryTree> {
        let n = leaf_count(height, DEFAULT_LEAF_BUDGET)?;
        Ok(TernaryTree {
            height,
            leaves: vec![Colour::Red; n as usize],
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn leaves(&self) -> &[Colour] {
        &self.leaves
    }

    pub fn blue_leaves(&self) -> usize {
        self.leaves.iter().filter(|c| c.is_blue()).count()
    }
}

fn leaf_count(height: usize, budget: u64) -> Result<u64> {
    u32::try_from(height)
        .ok()
        .and_then(|h| 3u64.checked_pow(h))
        .filter(|&n| n <= budget)
        .ok_or_else(|| {
            Error::Resource(format!(
                "a height-{height} ternary tree exceeds {budget} leaves"
            ))
        })
}

/// Bottom-up majority colour of the root.
pub fn tree_root_colour(tree: &TernaryTree) -> Colour {
    let mut level = tree.leaves.clone();
    while level.len() > 1 {
        level = level
            .chunks_exact(3)
            .map(|c| Colour::majority3(c[0], c[1], c[2]))
            .collect();
    }
    level[0]
}

/// Whether "fewer than `2^h` blue leaves implies a red root" holds for this
/// tree.
pub fn check_lemma2(tree: &TernaryTree) -> bool {
    let threshold = 1usize.checked_shl(tree.height as u32).unwrap_or(usize::MAX);
    tree.blue_leaves() >= threshold || tree_root_colour(tree) == Colour::Red
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub height: usize,
    pub exhaustive: bool,
    pub checked: u64,
    /// Colourings with fewer than `2^h` blue leaves and a blue root.
    pub violations: u64,
}

/// Checks every colouring of a height-`h` tree with fewer than `2^h` blue
/// leaves. Only practical for `h <= 2` (512 colourings at `h = 2`).
pub fn verify_lemma2_exhaustive(height: usize) -> Result<Lemma2Report> {
    if height > 2 {
        return Err(Error::param(format!(
            "exhaustive check supports height <= 2, got {height}"
        )));
    }
    let leaves = 3usize.pow(height as u32);
    let threshold = 1u32 << height;
    let mut checked = 0;
    let mut violations = 0;
    for mask in 0u32..(1 << leaves) {
        if mask.count_ones() >= threshold {
            continue;
        }
        let colours = (0..leaves)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    Colour::Blue
                } else {
                    Colour::Red
                }
            })
            .collect();
        let tree = TernaryTree::new(height, colours)?;
        checked += 1;
        if !check_lemma2(&tree) {
            violations += 1;
        }
    }
    Ok(Lemma2Report {
        height,
        exhaustive: true,
        checked,
        violations,
    })
}

/// Samples `samples` colourings: a blue count uniform on `0..=3^h`, then a
/// uniform set of that many blue leaves. Every sample is checked, so the
/// report counts blue roots with too few blue leaves among all samples.
pub fn verify_lemma2_sampled(height: usize, samples: u64, seed: u64) -> Result<Lemma2Report> {
    let leaves = leaf_count(height, DEFAULT_LEAF_BUDGET)? as usize;
    let mut rng = rng_from_seed(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let tree = random_tree(height, leaves, &mut rng);
        if !check_lemma2(&tree) {
            violations += 1;
        }
    }
    Ok(Lemma2Report {
        height,
        exhaustive: false,
        checked: samples,
        violations,
    })
}

fn random_tree<R: Rng + ?Sized>(height: usize, leaves: usize, rng: &mut R) -> TernaryTree {
    let blue = rng.gen_range(0..=leaves);
    let mut colours = vec![Colour::Red; leaves];
    for i in sample(rng, leaves, blue) {
        colours[i] = Colour::Blue;
    }
    TernaryTree {
        height,
        leaves: colours,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub blue_leaves_in: u64,
    pub blue_leaves_out: u64,
    pub collision_levels: usize,
    pub bound: u64,
    pub root_colour_in: Colour,
    pub root_colour_out: Colour,
}

impl ReductionReport {
    pub fn root_preserved(&self) -> bool {
        self.root_colour_in == self.root_colour_out
    }

    pub fn within_budget(&self) -> bool {
        self.blue_leaves_out <= self.bound
    }
}

/// Rewrites a coloured DAG into a perfect ternary tree of the same height.
/// `leaf_colours` follows the [`colour_dag`] convention. Synthetic leaves
/// above level 0 have no tree counterpart and are rejected.
pub fn reduce_to_ternary(
    dag: &VotingDag,
    leaf_colours: &[Colour],
) -> Result<(TernaryTree, ReductionReport)> {
    reduce_to_ternary_with_budget(dag, leaf_colours, DEFAULT_LEAF_BUDGET)
}

pub fn reduce_to_ternary_with_budget(
    dag: &VotingDag,
    leaf_colours: &[Colour],
    leaf_budget: u64,
) -> Result<(TernaryTree, ReductionReport)> {
    leaf_count(dag.height(), leaf_budget)?;
    let colours = colour_dag(dag, leaf_colours)?;
    if let Some(node) = dag
        .nodes()
        .iter()
        .find(|n| n.children.is_none() && n.level > 0)
    {
        return Err(Error::input(format!(
            "cannot reduce a DAG with an out-degree-0 node at level {}",
            node.level
        )));
    }
    let mut memo = HashMap::new();
    let leaves = unshare(dag, dag.root(), &colours, &mut memo);
    let tree = TernaryTree {
        height: dag.height(),
        leaves,
    };
    let blue_leaves_in = dag
        .level(0)
        .iter()
        .filter(|&&id| colours[id.index()].is_blue())
        .count() as u64;
    let collision_levels = collision_stats(dag).total_levels_with_collision;
    let bound = blue_leaves_in.saturating_mul(
        1u64.checked_shl(collision_levels as u32)
            .unwrap_or(u64::MAX),
    );
    let report = ReductionReport {
        blue_leaves_in,
        blue_leaves_out: tree.blue_leaves() as u64,
        collision_levels,
        bound,
        root_colour_in: colours[dag.root().index()],
        root_colour_out: tree_root_colour(&tree),
    };
    Ok((tree, report))
}

fn unshare(
    dag: &VotingDag,
    id: NodeId,
    colours: &[Colour],
    memo: &mut HashMap<NodeId, Vec<Colour>>,
) -> Vec<Colour> {
    if let Some(done) = memo.get(&id) {
        return done.clone();
    }
    let node = dag.node(id);
    let out = match node.children {
        None => vec![colours[id.index()]],
        Some([a, b, c]) => {
            let shared = if a == b || a == c {
                Some(a)
            } else if b == c {
                Some(b)
            } else {
                None
            };
            match shared {
                Some(s) => {
                    let copy = unshare(dag, s, colours, memo);
                    let mut out = Vec::with_capacity(copy.len() * 3);
                    out.extend_from_slice(&copy);
                    out.extend_from_slice(&copy);
                    out.resize(copy.len() * 3, Colour::Red);
                    out
                }
                None => [a, b, c]
                    .iter()
                    .flat_map(|&ch| unshare(dag, ch, colours, memo))
                    .collect(),
            }
        }
    };
    memo.insert(id, out.clone());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    /// `2e * 9^h / d`.
    pub ratio: f64,
    /// `ratio^(h/2)`, bounding both `P(C > h/2)` and `P(B >= 2^(h/2))`.
    pub value: f64,
    /// Set when `ratio > 1/2`, where the geometric-sum step does not apply.
    pub vacuous: bool,
}

pub fn collision_tail_bound(height: usize, d: u64) -> Result<TailBound> {
    if d == 0 {
        return Err(Error::param("minimum degree must be positive"));
    }
    let ratio = 2.0 * std::f64::consts::E * 9f64.powi(height as i32) / d as f64;
    let value = if height == 0 {
        1.0
    } else {
        ratio.powf(height as f64 / 2.0)
    };
    Ok(TailBound {
        ratio,
        value,
        vacuous: ratio > 0.5,
    })
}
