//! Sprinkling: make the bottom of a voting-DAG collision-free by redirecting
//! every colliding sample to a fresh leaf that is forced blue.
//!
//! Starting at the cut level and moving down to level 1, the samples of
//! each level are revealed in construction order. A sample whose target was
//! already revealed at that level is cut loose and pointed at a new
//! out-degree-0 node, one level down, coloured blue. Original node ids are
//! preserved, so `V(H)` embeds in `V(H')` by identity and the two colourings
//! can be compared node by node.

use std::collections::{HashMap, HashSet};

use crate::dual_dag::{colour_dag, NodeId, VotingDag};
use crate::{Colour, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RedirectedEdge {
    pub parent: NodeId,
    pub slot: usize,
    pub original: NodeId,
    pub synthetic: NodeId,
}

#[derive(Debug, Clone)]
pub struct SprinkledDag<'a> {
    base: &'a VotingDag,
    cut_level: usize,
    sprinkled: VotingDag,
    redirected: Vec<RedirectedEdge>,
}

impl<'a> SprinkledDag<'a> {
    pub fn base(&self) -> &'a VotingDag {
        self.base
    }

    /// `H'`, the transformed DAG.
    pub fn dag(&self) -> &VotingDag {
        &self.sprinkled
    }

    pub fn cut_level(&self) -> usize {
        self.cut_level
    }

    pub fn redirected_edges(&self) -> &[RedirectedEdge] {
        &self.redirected
    }

    pub fn synthetic_leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.redirected.iter().map(|e| e.synthetic)
    }
}

pub fn sprinkle(dag: &VotingDag, cut_level: usize) -> Result<SprinkledDag<'_>> {
    if cut_level > dag.height() {
        return Err(Error::param(format!(
            "cut level {cut_level} exceeds DAG height {}",
            dag.height()
        )));
    }
    let mut sprinkled = dag.clone();
    let mut redirected = Vec::new();
    let mut revealed = vec![false; dag.node_count()];
    for t in (1..=cut_level).rev() {
        let parents = sprinkled.level(t).to_vec();
        for parent in parents {
            let Some(children) = sprinkled.node(parent).children else {
                continue;
            };
            for (slot, child) in children.into_iter().enumerate() {
                if child.index() >= revealed.len() {
                    // Synthetic leaves are fresh by construction.
                    continue;
                }
                if std::mem::replace(&mut revealed[child.index()], true) {
                    let synthetic = sprinkled.push_synthetic(t - 1, Colour::Blue);
                    sprinkled.set_child(parent, slot, synthetic);
                    redirected.push(RedirectedEdge {
                        parent,
                        slot,
                        original: child,
                        synthetic,
                    });
                }
            }
        }
    }
    debug_assert_eq!(sprinkled.validate(), Ok(()));
    Ok(SprinkledDag {
        base: dag,
        cut_level,
        sprinkled,
        redirected,
    })
}

/// Colours `H` and `H'` from the same leaf colouring. Both results are
/// indexed by node id; ids below `base().node_count()` denote the same node
/// in both.
pub fn coupled_colouring(
    s: &SprinkledDag<'_>,
    leaf_colours: &[Colour],
) -> Result<(Vec<Colour>, Vec<Colour>)> {
    let h = colour_dag(s.base, leaf_colours)?;
    let h_prime = colour_dag(&s.sprinkled, leaf_colours)?;
    Ok((h, h_prime))
}

/// `X_H(v,t) <= X_H'(v,t)` for every node of `H`.
pub fn majorises(colours_h: &[Colour], colours_h_prime: &[Colour]) -> bool {
    colours_h.iter().zip(colours_h_prime).all(|(a, b)| a <= b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafSupports {
    pub level: usize,
    /// Each level node with the sorted set of out-degree-0 nodes it reaches.
    pub supports: Vec<(NodeId, Vec<NodeId>)>,
    pub pairwise_disjoint: bool,
}

/// Leaf supports of every node at level `t` of `H'`; for `t <= cut_level`
/// they are always pairwise disjoint.
pub fn independence_certificate(s: &SprinkledDag<'_>, t: usize) -> Result<LeafSupports> {
    if t > s.cut_level {
        return Err(Error::param(format!(
            "level {t} is above the cut level {}",
            s.cut_level
        )));
    }
    Ok(leaf_supports(&s.sprinkled, t))
}

/// Leaf supports at level `t` of an arbitrary DAG. On an un-sprinkled DAG
/// this shows where shared leaves break independence.
pub fn leaf_supports(dag: &VotingDag, t: usize) -> LeafSupports {
    let mut memo: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    fn reach(dag: &VotingDag, id: NodeId, memo: &mut HashMap<NodeId, Vec<NodeId>>) -> Vec<NodeId> {
        if let Some(v) = memo.get(&id) {
            return v.clone();
        }
        let out = match dag.node(id).children {
            None => vec![id],
            Some(ch) => {
                let mut all: Vec<NodeId> = ch.iter().flat_map(|&c| reach(dag, c, memo)).collect();
                all.sort_unstable();
                all.dedup();
                all
            }
        };
        memo.insert(id, out.clone());
        out
    }
    let supports: Vec<(NodeId, Vec<NodeId>)> = dag
        .level(t)
        .iter()
        .map(|&id| (id, reach(dag, id, &mut memo)))
        .collect();
    let mut owner = HashSet::new();
    let pairwise_disjoint = supports
        .iter()
        .flat_map(|(_, s)| s.iter())
        .all(|leaf| owner.insert(*leaf));
    LeafSupports {
        level: t,
        supports,
        pairwise_disjoint,
    }
}
