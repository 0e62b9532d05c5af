//! Random voting-DAGs: the time-reversed query structure of Best-of-3.
//!
//! The DAG for root `v0` and height `T` has one node per (vertex, level)
//! pair that is queried: level `T` holds `v0`, and every node at level
//! `t + 1` points at the three neighbours it sampled at level `t`. Repeated
//! vertices within a level share one node, while a parent that samples the
//! same vertex twice keeps both references, so majorities count
//! multiplicity. Read bottom-up, the level sets are a COBRA-walk trajectory.
//!
//! Nodes at each level are stored in creation order, which is also the order
//! in which their samples were revealed during construction. Collision
//! accounting and sprinkling replay that order.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::graph::Graph;
use crate::rng::stream_rng;
use crate::stats::{Estimate, Z_95};
use crate::{Colour, Error, Result};

/// Largest number of DAG nodes construction will allocate by default.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Index of a node in its DAG's arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagNode {
    /// Graph vertex, `None` for synthetic leaves added by sprinkling.
    pub vertex: Option<usize>,
    pub level: usize,
    /// The three sampled children in reveal order. `None` for leaves.
    pub children: Option<[NodeId; 3]>,
    pub forced: Option<Colour>,
}

impl DagNode {
    pub fn is_synthetic(&self) -> bool {
        self.vertex.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VotingDag {
    nodes: Vec<DagNode>,
    levels: Vec<Vec<NodeId>>,
    root: NodeId,
}

impl VotingDag {
    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &DagNode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes at level `t` in reveal order, synthetic leaves last.
    pub fn level(&self, t: usize) -> &[NodeId] {
        &self.levels[t]
    }

    /// `m_t`: the number of graph vertices queried at level `t`.
    pub fn level_size(&self, t: usize) -> usize {
        self.levels[t]
            .iter()
            .filter(|&&id| !self.node(id).is_synthetic())
            .count()
    }

    /// Level-0 nodes that take their colour from the leaf colouring, in the
    /// order [`colour_dag`] expects colours for them.
    pub fn free_leaves(&self) -> Vec<NodeId> {
        self.levels[0]
            .iter()
            .copied()
            .filter(|&id| self.node(id).forced.is_none())
            .collect()
    }

    pub(crate) fn push_synthetic(&mut self, level: usize, colour: Colour) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(DagNode {
            vertex: None,
            level,
            children: None,
            forced: Some(colour),
        });
        self.levels[level].push(id);
        id
    }

    pub(crate) fn set_child(&mut self, parent: NodeId, slot: usize, child: NodeId) {
        let children = self.nodes[parent.index()]
            .children
            .as_mut()
            .expect("set_child on a leaf");
        children[slot] = child;
    }

    /// Debug dump: one line per node, `level vertex c1 c2 c3`, root first
    /// and levels descending. Synthetic nodes print vertex `-1` and carry a
    /// `forced=` flag.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let label = |id: NodeId| match self.node(id).vertex {
            Some(v) => v.to_string(),
            None => "-1".to_string(),
        };
        for t in (0..=self.height()).rev() {
            for &id in &self.levels[t] {
                let node = self.node(id);
                write!(out, "{} {}", node.level, label(id))?;
                if let Some(ch) = node.children {
                    write!(out, " {} {} {}", label(ch[0]), label(ch[1]), label(ch[2]))?;
                }
                if let Some(c) = node.forced {
                    write!(out, " forced={c}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.levels[self.height()] != [self.root] {
            return Err("top level must hold exactly the root".into());
        }
        let mut in_degree = vec![0usize; self.nodes.len()];
        for (t, level) in self.levels.iter().enumerate() {
            let mut vertices = std::collections::HashSet::new();
            for &id in level {
                let node = self.node(id);
                if node.level != t {
                    return Err(format!(
                        "node {id:?} filed under level {t} but has level {}",
                        node.level
                    ));
                }
                if let Some(v) = node.vertex {
                    if !vertices.insert(v) {
                        return Err(format!("vertex {v} appears twice at level {t}"));
                    }
                }
                match (node.children, t, node.is_synthetic()) {
                    (Some(ch), t, false) if t > 0 => {
                        for c in ch {
                            if self.node(c).level + 1 != t {
                                return Err(format!("edge from level {t} skips a level"));
                            }
                            in_degree[c.index()] += 1;
                        }
                    }
                    (None, 0, _) | (None, _, true) => {}
                    _ => return Err(format!("node {id:?} at level {t} has wrong out-degree")),
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if NodeId(i as u32) != self.root && in_degree[i] == 0 {
                return Err(format!("node {i} at level {} is unreachable", node.level));
            }
        }
        if in_degree[self.root.index()] != 0 {
            return Err("root has an in-edge".into());
        }
        Ok(())
    }
}

/// Upper bound on the node count of a height-`t` DAG on `n` vertices:
/// `sum_t min(3^(T-t), n)`.
pub fn node_bound(n: usize, height: usize) -> u64 {
    let mut total: u64 = 0;
    let mut width: u64 = 1;
    for _ in 0..=height {
        total = total.saturating_add(width.min(n as u64));
        width = width.saturating_mul(3);
    }
    total
}

pub fn build_voting_dag<R: Rng + ?Sized>(
    g: &Graph,
    v0: usize,
    height: usize,
    rng: &mut R,
) -> Result<VotingDag> {
    build_voting_dag_with_budget(g, v0, height, DEFAULT_NODE_BUDGET, rng)
}

pub fn build_voting_dag_with_budget<R: Rng + ?Sized>(
    g: &Graph,
    v0: usize,
    height: usize,
    node_budget: u64,
    rng: &mut R,
) -> Result<VotingDag> {
    if v0 >= g.n() {
        return Err(Error::param(format!(
            "root {v0} is not a vertex of a graph with {} vertices",
            g.n()
        )));
    }
    let bound = node_bound(g.n(), height);
    if bound > node_budget {
        return Err(Error::Resource(format!(
            "height {height} may need {bound} nodes, budget is {node_budget}"
        )));
    }
    let mut levels: Vec<Vec<NodeId>> = vec![Vec::new(); height + 1];
    let mut nodes = vec![DagNode {
        vertex: Some(v0),
        level: height,
        children: if height > 0 {
            Some([NodeId(0); 3])
        } else {
            None
        },
        forced: None,
    }];
    levels[height].push(NodeId(0));
    let mut index: HashMap<usize, NodeId> = HashMap::new();
    for t in (1..=height).rev() {
        index.clear();
        for i in 0..levels[t].len() {
            let parent = levels[t][i];
            let v = nodes[parent.index()]
                .vertex
                .expect("fresh DAG has no synthetic nodes");
            let mut children = [NodeId(0); 3];
            for slot in &mut children {
                let w = g.sample_neighbor(v, rng);
                *slot = *index.entry(w).or_insert_with(|| {
                    let id = NodeId(nodes.len() as u32);
                    nodes.push(DagNode {
                        vertex: Some(w),
                        level: t - 1,
                        children: if t > 1 { Some([NodeId(0); 3]) } else { None },
                        forced: None,
                    });
                    levels[t - 1].push(id);
                    id
                });
            }
            nodes[parent.index()].children = Some(children);
        }
    }
    let dag = VotingDag {
        nodes,
        levels,
        root: NodeId(0),
    };
    debug_assert_eq!(dag.validate(), Ok(()));
    Ok(dag)
}

/// Colours every node bottom-up. `leaf_colours[i]` colours
/// `dag.free_leaves()[i]`; forced nodes keep their forced colour. The result
/// is indexed by [`NodeId::index`].
pub fn colour_dag(dag: &VotingDag, leaf_colours: &[Colour]) -> Result<Vec<Colour>> {
    let free = dag.free_leaves();
    if leaf_colours.len() != free.len() {
        return Err(Error::input(format!(
            "DAG has {} free leaves but {} leaf colours were given",
            free.len(),
            leaf_colours.len()
        )));
    }
    let mut colours = vec![Colour::Red; dag.node_count()];
    for (&id, &c) in free.iter().zip(leaf_colours) {
        colours[id.index()] = c;
    }
    for t in 0..=dag.height() {
        for &id in dag.level(t) {
            let node = dag.node(id);
            if let Some(c) = node.forced {
                colours[id.index()] = c;
            } else if let Some([a, b, c]) = node.children {
                colours[id.index()] =
                    Colour::majority3(colours[a.index()], colours[b.index()], colours[c.index()]);
            }
        }
    }
    Ok(colours)
}

/// I.i.d. leaf colouring, blue with probability `p_blue`.
pub fn random_leaf_colours<R: Rng + ?Sized>(
    dag: &VotingDag,
    p_blue: f64,
    rng: &mut R,
) -> Vec<Colour> {
    (0..dag.free_leaves().len())
        .map(|_| {
            if rng.gen_bool(p_blue) {
                Colour::Blue
            } else {
                Colour::Red
            }
        })
        .collect()
}

/// Monte Carlo estimate of `P(root is blue)` with a 95% Wilson interval.
/// Each trial builds a fresh DAG on stream `trial` of `seed` and colours its
/// leaves i.i.d. blue with probability `leaf_blue_prob`.
pub fn root_colour_probability(
    g: &Graph,
    v0: usize,
    height: usize,
    leaf_blue_prob: f64,
    trials: u64,
    seed: u64,
) -> Result<Estimate> {
    if !(0.0..=1.0).contains(&leaf_blue_prob) {
        return Err(Error::param(format!(
            "leaf_blue_prob must lie in [0, 1], got {leaf_blue_prob}"
        )));
    }
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    if v0 >= g.n() {
        return Err(Error::param(format!("root {v0} out of range")));
    }
    let blue = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<u64> {
            let mut rng = stream_rng(seed, trial);
            let dag = build_voting_dag(g, v0, height, &mut rng)?;
            let leaves = random_leaf_colours(&dag, leaf_blue_prob, &mut rng);
            let colours = colour_dag(&dag, &leaves)?;
            Ok(colours[dag.root().index()].is_blue() as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(Estimate::wilson(blue, trials, Z_95))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollisionStats {
    /// Collisions revealed while expanding level `i`, indexed by level.
    /// Entry 0 is always 0.
    pub per_level_count: Vec<usize>,
    /// `m_i`, indexed by level.
    pub level_sizes: Vec<usize>,
    /// `C`: the number of levels `1..=T` with at least one collision.
    pub total_levels_with_collision: usize,
}

impl CollisionStats {
    /// `C_i` for `1 <= i <= T`.
    pub fn indicator(&self, level: usize) -> bool {
        self.per_level_count[level] > 0
    }

    pub fn height(&self) -> usize {
        self.level_sizes.len() - 1
    }
}

/// Replays the reveal order of every level: a sample collides when its
/// target was already revealed at the level below, whether by an earlier
/// node or by an earlier slot of the same node.
pub fn collision_stats(dag: &VotingDag) -> CollisionStats {
    let height = dag.height();
    let mut per_level_count = vec![0; height + 1];
    let mut revealed = vec![false; dag.node_count()];
    for (t, count) in per_level_count.iter_mut().enumerate().skip(1) {
        for &id in dag.level(t) {
            if let Some(children) = dag.node(id).children {
                for c in children {
                    if std::mem::replace(&mut revealed[c.index()], true) {
                        *count += 1;
                    }
                }
            }
        }
    }
    CollisionStats {
        total_levels_with_collision: per_level_count.iter().filter(|&&c| c > 0).count(),
        level_sizes: (0..=height).map(|t| dag.level_size(t)).collect(),
        per_level_count,
    }
}
