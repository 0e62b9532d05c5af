//! Static undirected simple graphs: generators, edge-list loading and the
//! uniform neighbour draw every process in this crate is built on.
//!
//! Complete graphs are stored implicitly so that `K_n` for `n = 10^5` costs
//! nothing; everything else uses sorted CSR adjacency.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::rng::stream_rng;
use crate::{Error, Result};

/// Pairing-model attempts before giving up on a simple regular graph.
pub const REGULAR_RETRY_BUDGET: usize = 1000;
/// Resampling attempts for `G(n, p)` with a minimum-degree requirement.
pub const GNP_RETRY_BUDGET: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Adjacency {
    Complete,
    Csr {
        offsets: Vec<usize>,
        targets: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edge_count: u64,
    adjacency: Adjacency,
}

/// Iterator over the neighbours of a vertex in ascending order.
pub enum Neighbors<'a> {
    Complete { next: usize, n: usize, skip: usize },
    Slice(std::slice::Iter<'a, u32>),
}

impl Iterator for Neighbors<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            Neighbors::Complete { next, n, skip } => {
                if *next == *skip {
                    *next += 1;
                }
                if *next >= *n {
                    return None;
                }
                let v = *next;
                *next += 1;
                Some(v)
            }
            Neighbors::Slice(it) => it.next().map(|&v| v as usize),
        }
    }
}

impl Graph {
    /// Builds a graph from per-vertex neighbour lists, validating simplicity,
    /// symmetry and the minimum-degree-one requirement.
    pub fn from_adjacency(mut lists: Vec<Vec<usize>>) -> Result<Graph> {
        let n = lists.len();
        if n > u32::MAX as usize {
            return Err(Error::Resource(format!("{n} vertices exceed u32 indexing")));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for (v, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            for w in list.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::input(format!("parallel edge {v}-{}", w[0])));
                }
            }
            if list.is_empty() {
                return Err(Error::input(format!("vertex {v} has no neighbours")));
            }
            for &u in list.iter() {
                if u >= n {
                    return Err(Error::input(format!("neighbour {u} of {v} out of range")));
                }
                if u == v {
                    return Err(Error::input(format!("self-loop at {v}")));
                }
                targets.push(u as u32);
            }
            offsets.push(targets.len());
        }
        let g = Graph {
            n,
            edge_count: (targets.len() / 2) as u64,
            adjacency: Adjacency::Csr { offsets, targets },
        };
        for v in 0..n {
            for u in g.neighbors(v) {
                if !g.has_edge(u, v) {
                    return Err(Error::input(format!("edge {v}->{u} has no reverse")));
                }
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.adjacency, Adjacency::Complete)
    }

    pub fn degree(&self, v: usize) -> usize {
        match &self.adjacency {
            Adjacency::Complete => self.n - 1,
            Adjacency::Csr { offsets, .. } => offsets[v + 1] - offsets[v],
        }
    }

    pub fn min_degree(&self) -> usize {
        match &self.adjacency {
            Adjacency::Complete => self.n - 1,
            Adjacency::Csr { .. } => (0..self.n).map(|v| self.degree(v)).min().unwrap_or(0),
        }
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn neighbors(&self, v: usize) -> Neighbors<'_> {
        match &self.adjacency {
            Adjacency::Complete => Neighbors::Complete {
                next: 0,
                n: self.n,
                skip: v,
            },
            Adjacency::Csr { offsets, targets } => {
                Neighbors::Slice(targets[offsets[v]..offsets[v + 1]].iter())
            }
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        match &self.adjacency {
            Adjacency::Complete => u != v && u < self.n && v < self.n,
            Adjacency::Csr { offsets, targets } => targets[offsets[u]..offsets[u + 1]]
                .binary_search(&(v as u32))
                .is_ok(),
        }
    }

    /// Draws one neighbour of `v` uniformly at random.
    pub fn sample_neighbor<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> usize {
        match &self.adjacency {
            Adjacency::Complete => {
                let u = rng.gen_range(0..self.n - 1);
                if u >= v {
                    u + 1
                } else {
                    u
                }
            }
            Adjacency::Csr { offsets, targets } => {
                let (lo, hi) = (offsets[v], offsets[v + 1]);
                targets[lo + rng.gen_range(0..hi - lo)] as usize
            }
        }
    }

    /// Edges `(u, v)` with `u < v` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }
}

pub fn gen_complete(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!(
            "complete graph needs n >= 2, got {n}"
        )));
    }
    let n64 = n as u64;
    Ok(Graph {
        n,
        edge_count: n64 * (n64 - 1) / 2,
        adjacency: Adjacency::Complete,
    })
}

/// Cycle on `n >= 3` vertices.
pub fn gen_cycle(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::param(format!("cycle needs n >= 3, got {n}")));
    }
    let lists = (0..n).map(|v| vec![(v + n - 1) % n, (v + 1) % n]).collect();
    Graph::from_adjacency(lists)
}

/// Random simple `d`-regular graph via the pairing model. Offending pairs are
/// redrawn; an attempt that gets stuck is discarded and restarted on a fresh
/// stream.
pub fn gen_random_regular(n: usize, d: usize, seed: u64) -> Result<Graph> {
    if d == 0 || d >= n {
        return Err(Error::param(format!(
            "regular graph needs 1 <= d < n, got n={n} d={d}"
        )));
    }
    if (n * d) % 2 == 1 {
        return Err(Error::param(format!("n*d must be even, got n={n} d={d}")));
    }
    let points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    for attempt in 0..REGULAR_RETRY_BUDGET {
        let mut rng = stream_rng(seed, attempt as u64);
        if let Some(lists) = try_pairing(n, d, points.clone(), &mut rng) {
            return Graph::from_adjacency(lists);
        }
    }
    Err(Error::GenerationFailure {
        attempts: REGULAR_RETRY_BUDGET,
        reason: format!("no simple pairing found for n={n} d={d}"),
    })
}

/// Pairs up unmatched points two at a time, rejecting a pair that would form
/// a loop or a repeated edge. Gives up when no valid pair is left.
fn try_pairing<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    mut free: Vec<usize>,
    rng: &mut R,
) -> Option<Vec<Vec<usize>>> {
    let mut lists = vec![Vec::with_capacity(d); n];
    let mut edges = HashSet::with_capacity(free.len() / 2);
    let mut misses = 0usize;
    while !free.is_empty() {
        let i = rng.gen_range(0..free.len());
        let j = rng.gen_range(0..free.len());
        let (u, v) = (free[i].min(free[j]), free[i].max(free[j]));
        if u == v || edges.contains(&(u, v)) {
            misses += 1;
            if misses > 32 * free.len() && !has_valid_pair(&free, &edges) {
                return None;
            }
            continue;
        }
        misses = 0;
        edges.insert((u, v));
        lists[u].push(v);
        lists[v].push(u);
        let (hi, lo) = (i.max(j), i.min(j));
        free.swap_remove(hi);
        free.swap_remove(lo);
    }
    Some(lists)
}

fn has_valid_pair(free: &[usize], edges: &HashSet<(usize, usize)>) -> bool {
    let mut vs: Vec<usize> = free.to_vec();
    vs.sort_unstable();
    vs.dedup();
    vs.iter()
        .enumerate()
        .any(|(a, &u)| vs[a + 1..].iter().any(|&v| !edges.contains(&(u, v))))
}

/// Erdős–Rényi `G(n, p)` resampled until the minimum degree is at least
/// `d_min`. Returns the graph and the number of attempts used.
pub fn gen_gnp_min_degree(n: usize, p: f64, d_min: usize, seed: u64) -> Result<(Graph, usize)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("p must lie in (0, 1], got {p}")));
    }
    if d_min == 0 {
        return Err(Error::param("d_min must be at least 1"));
    }
    if n < 2 {
        return Err(Error::param(format!("G(n,p) needs n >= 2, got {n}")));
    }
    for attempt in 0..GNP_RETRY_BUDGET {
        let mut rng = stream_rng(seed, attempt as u64);
        let mut lists = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                if p >= 1.0 || rng.gen_bool(p) {
                    lists[u].push(v);
                    lists[v].push(u);
                }
            }
        }
        if lists.iter().all(|l| l.len() >= d_min) {
            return Ok((Graph::from_adjacency(lists)?, attempt + 1));
        }
    }
    Err(Error::GenerationFailure {
        attempts: GNP_RETRY_BUDGET,
        reason: format!("no G({n},{p}) sample reached minimum degree {d_min}"),
    })
}

/// Loads a whitespace-separated edge list. `#` lines and blank lines are
/// skipped; the vertex count is the largest index plus one.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, path)
}

fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let fmt_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut max_index = None::<usize>;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next_index = || -> Result<usize> {
            let tok = fields
                .next()
                .ok_or_else(|| fmt_err(line_no, "expected two vertex indices".into()))?;
            tok.parse::<usize>()
                .map_err(|e| fmt_err(line_no, format!("bad vertex index {tok:?}: {e}")))
        };
        let u = next_index()?;
        let v = next_index()?;
        if fields.next().is_some() {
            return Err(fmt_err(line_no, "trailing fields after edge".into()));
        }
        if u == v {
            return Err(fmt_err(line_no, format!("self-loop at vertex {u}")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(fmt_err(line_no, format!("duplicate edge {u}-{v}")));
        }
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_index
        .map(|m| m + 1)
        .ok_or_else(|| fmt_err(0, "no edges".into()))?;
    let mut lists = vec![Vec::new(); n];
    for (u, v) in edges {
        lists[u].push(v);
        lists[v].push(u);
    }
    if let Some(v) = lists.iter().position(|l| l.is_empty()) {
        return Err(fmt_err(0, format!("vertex {v} is isolated")));
    }
    Graph::from_adjacency(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn assert_simple_symmetric(g: &Graph) {
        for v in 0..g.n() {
            let adj: Vec<usize> = g.neighbors(v).collect();
            assert_eq!(adj.len(), g.degree(v));
            assert!(
                adj.windows(2).all(|w| w[0] < w[1]),
                "sorted, no parallel edges"
            );
            for &u in &adj {
                assert_ne!(u, v);
                assert!(u < g.n());
                assert!(g.neighbors(u).any(|x| x == v));
            }
        }
    }

    #[test]
    fn complete_graphs() {
        let k2 = gen_complete(2).unwrap();
        assert_eq!(k2.edge_count(), 1);
        assert_eq!((k2.degree(0), k2.degree(1)), (1, 1));
        let k4 = gen_complete(4).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert!((0..4).all(|v| k4.degree(v) == 3));
        assert_simple_symmetric(&k4);
        let k100 = gen_complete(100).unwrap();
        assert_eq!(k100.edge_count(), 100 * 99 / 2);
        assert_eq!(k100.min_degree(), 99);
        assert_eq!(k100.edges().count(), 4950);
        assert!(matches!(gen_complete(1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn regular_graph_small_cases() {
        let g = gen_random_regular(4, 3, 9).unwrap();
        assert_eq!(g.edge_count(), 6);
        for u in 0..4 {
            for v in 0..4 {
                assert_eq!(g.has_edge(u, v), u != v);
            }
        }
        let c = gen_random_regular(6, 2, 1).unwrap();
        assert!((0..6).all(|v| c.degree(v) == 2));
        assert_simple_symmetric(&c);
        assert!(matches!(
            gen_random_regular(3, 1, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            gen_random_regular(4, 4, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn regular_graph_is_deterministic() {
        let a = gen_random_regular(50, 4, 123).unwrap();
        let b = gen_random_regular(50, 4, 123).unwrap();
        assert_eq!(a, b);
        assert!((0..50).all(|v| a.degree(v) == 4));
        assert_simple_symmetric(&a);
    }

    #[test]
    fn gnp_cases() {
        let (g, attempts) = gen_gnp_min_degree(10, 1.0, 9, 3).unwrap();
        assert_eq!(attempts, 1);
        assert_eq!(g.edge_count(), 45);
        let (g, _) = gen_gnp_min_degree(100, 0.5, 20, 3).unwrap();
        assert!(g.min_degree() >= 20);
        assert_simple_symmetric(&g);
        // Expected degree ~1; P(deg >= 50) is astronomically small.
        assert!(matches!(
            gen_gnp_min_degree(100, 0.01, 50, 3),
            Err(Error::GenerationFailure { attempts: 100, .. })
        ));
        assert!(gen_gnp_min_degree(10, 0.0, 1, 0).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let p = Path::new("mem");
        let g = parse_edge_list("# path\n0 1\n1 2\n", p).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degree(1), 2);
        let e = parse_edge_list("0 0\n", p).unwrap_err();
        assert!(matches!(e, Error::Format { line: 1, .. }), "{e}");
        assert!(e.to_string().contains("self-loop"));
        let e = parse_edge_list("0 1\n0 1\n", p).unwrap_err();
        assert!(matches!(e, Error::Format { line: 2, .. }));
        assert!(e.to_string().contains("duplicate"));
        let e = parse_edge_list("0 1\n1 0\n", p).unwrap_err();
        assert!(e.to_string().contains("duplicate"));
        let e = parse_edge_list("0 1\n\n1 x\n", p).unwrap_err();
        assert!(matches!(e, Error::Format { line: 3, .. }));
        let e = parse_edge_list("0 2\n", p).unwrap_err();
        assert!(e.to_string().contains("isolated"));
    }

    #[test]
    fn load_edge_list_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        fs::write(&path, "0 1\n1 2\n2 0\n").unwrap();
        let g = load_edge_list(&path).unwrap();
        assert_eq!(g, gen_cycle(3).unwrap());
    }

    #[test]
    fn sample_neighbor_degree_one_and_determinism() {
        let g = Graph::from_adjacency(vec![vec![1], vec![0, 2], vec![1]]).unwrap();
        let mut rng = rng_from_seed(5);
        assert!((0..100).all(|_| g.sample_neighbor(0, &mut rng) == 1));
        let k = gen_complete(30).unwrap();
        let draw = |seed| {
            let mut r = rng_from_seed(seed);
            (0..50)
                .map(|_| k.sample_neighbor(7, &mut r))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert!(draw(11).iter().all(|&u| u != 7 && u < 30));
    }

    #[test]
    fn sample_neighbor_k3_frequency() {
        let g = gen_complete(3).unwrap();
        let mut rng = rng_from_seed(17);
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| g.sample_neighbor(0, &mut rng) == 1)
            .count();
        let sigma = (0.25f64 / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn sample_neighbor_uniform_up_to_degree_ten() {
        let draws = 100_000usize;
        let tol = 5.0 * (0.25f64 / draws as f64).sqrt();
        for d in 1..=10usize {
            let g = gen_complete(d + 1).unwrap();
            let mut rng = rng_from_seed(d as u64);
            let mut counts = vec![0usize; d + 1];
            for _ in 0..draws {
                counts[g.sample_neighbor(0, &mut rng)] += 1;
            }
            assert_eq!(counts[0], 0);
            for &c in &counts[1..] {
                assert!(
                    (c as f64 / draws as f64 - 1.0 / d as f64).abs() <= tol,
                    "d={d} {counts:?}"
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn generated_regular_graphs_are_simple(n in 4usize..40, d in 1usize..6, seed: u64) {
            prop_assume!(d < n && (n * d) % 2 == 0);
            let g = gen_random_regular(n, d, seed).unwrap();
            prop_assert!((0..n).all(|v| g.degree(v) == d));
            assert_simple_symmetric(&g);
            prop_assert_eq!(g, gen_random_regular(n, d, seed).unwrap());
        }
    }
}
