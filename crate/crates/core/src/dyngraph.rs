//! Dynamic undirected graphs with reference-counted edges.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{check_len, MatVecOracle};
use crate::rng::{stream_rng, tags};

pub const MAX_TRIANGLE_NODES: usize = 50_000;
pub const CLIQUE_SIZE_RANGE: (usize, usize) = (10, 150);
const REJECTION_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeListFormat {
    Snap,
    MatrixMarket,
}

impl FromStr for EdgeListFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snap" => Ok(Self::Snap),
            "matrix-market" | "matrix_market" | "mtx" => Ok(Self::MatrixMarket),
            _ => Err(Error::invalid(format!("unknown graph format '{s}'"))),
        }
    }
}

/// Undirected graph whose edges carry insertion counts. The adjacency
/// matrix is the 0/1 indicator of a positive count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DynamicGraph {
    n: usize,
    multiplicity: BTreeMap<(usize, usize), u32>,
    neighbors: Vec<Vec<usize>>,
    cliques: BTreeMap<u64, Vec<usize>>,
    next_clique: u64,
}

fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl DynamicGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            neighbors: vec![Vec::new(); n],
            ..Self::default()
        }
    }

    /// Simple graph from an edge iterator; duplicates collapse, self-loops
    /// are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (u, v) in edges {
            g.check_pair(u, v)?;
            if !g.has_edge(u, v) {
                g.increment(u, v);
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of adjacent pairs.
    pub fn edge_count(&self) -> usize {
        self.multiplicity.len()
    }

    pub fn multiplicity(&self, u: usize, v: usize) -> u32 {
        self.multiplicity.get(&key(u, v)).copied().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.multiplicity.contains_key(&key(u, v))
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), u32)> + '_ {
        self.multiplicity.iter().map(|(&k, &m)| (k, m))
    }

    pub fn is_complete(&self) -> bool {
        self.edge_count() == self.n * self.n.saturating_sub(1) / 2
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.n {
            return Err(Error::NodeOutOfRange { node, n: self.n });
        }
        Ok(())
    }

    fn check_pair(&self, u: usize, v: usize) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::invalid(format!("self-loop at node {u}")));
        }
        Ok(())
    }

    fn increment(&mut self, u: usize, v: usize) {
        let count = self.multiplicity.entry(key(u, v)).or_insert(0);
        *count += 1;
        if *count == 1 {
            for (a, b) in [(u, v), (v, u)] {
                let list = &mut self.neighbors[a];
                let pos = list.binary_search(&b).unwrap_err();
                list.insert(pos, b);
            }
        }
    }

    fn decrement(&mut self, u: usize, v: usize) {
        let k = key(u, v);
        let count = self
            .multiplicity
            .get_mut(&k)
            .expect("decrement of an absent edge");
        *count -= 1;
        if *count == 0 {
            self.multiplicity.remove(&k);
            for (a, b) in [(u, v), (v, u)] {
                let list = &mut self.neighbors[a];
                let pos = list.binary_search(&b).expect("neighbor lists in sync");
                list.remove(pos);
            }
        }
    }

    /// Adds every pair of `nodes` once more and logs the clique.
    pub fn add_clique(&mut self, nodes: &[usize]) -> Result<u64> {
        if nodes.len() < 2 {
            return Err(Error::invalid("a clique needs at least two nodes"));
        }
        let mut sorted = nodes.to_vec();
        sorted.sort_unstable();
        for &u in &sorted {
            self.check_node(u)?;
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("clique nodes must be distinct"));
        }
        for (i, &u) in sorted.iter().enumerate() {
            for &v in &sorted[i + 1..] {
                self.increment(u, v);
            }
        }
        let id = self.next_clique;
        self.next_clique += 1;
        self.cliques.insert(id, sorted);
        Ok(id)
    }

    /// Undoes [`DynamicGraph::add_clique`]; pairs still held by other
    /// insertions stay adjacent.
    pub fn remove_clique(&mut self, id: u64) -> Result<()> {
        let nodes = self.cliques.remove(&id).ok_or(Error::UnknownClique(id))?;
        for (i, &u) in nodes.iter().enumerate() {
            for &v in &nodes[i + 1..] {
                self.decrement(u, v);
            }
        }
        Ok(())
    }

    pub fn live_cliques(&self) -> impl Iterator<Item = (u64, &[usize])> + '_ {
        self.cliques.iter().map(|(&id, n)| (id, n.as_slice()))
    }

    pub fn live_clique_count(&self) -> usize {
        self.cliques.len()
    }

    /// Adds a uniformly random non-adjacent pair, determined by `(seed, step)`.
    pub fn add_random_edge(&mut self, seed: u64, step: u64) -> Result<(usize, usize)> {
        if self.is_complete() {
            return Err(Error::CompleteGraph);
        }
        let mut rng = stream_rng(seed, step, tags::EDGE);
        let n = self.n;
        for _ in 0..REJECTION_ATTEMPTS {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v && !self.has_edge(u, v) {
                let (a, b) = key(u, v);
                self.increment(a, b);
                return Ok((a, b));
            }
        }
        // dense graph: pick uniformly among the remaining pairs
        let missing = n * (n - 1) / 2 - self.edge_count();
        let mut target = rng.random_range(0..missing);
        for u in 0..n {
            let nbrs = &self.neighbors[u];
            let above = nbrs.len() - nbrs.partition_point(|&w| w <= u);
            let free = (n - 1 - u) - above;
            if target >= free {
                target -= free;
                continue;
            }
            let mut v = u + 1;
            loop {
                if !self.has_edge(u, v) {
                    if target == 0 {
                        self.increment(u, v);
                        return Ok((u, v));
                    }
                    target -= 1;
                }
                v += 1;
            }
        }
        unreachable!("missing-pair count out of sync")
    }

    pub fn adjacency_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        Ok(self
            .neighbors
            .iter()
            .map(|nb| nb.iter().map(|&v| x[v]).sum())
            .collect())
    }

    pub fn dense_adjacency(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.n);
        for &(u, v) in self.multiplicity.keys() {
            b[(u, v)] = 1.0;
            b[(v, u)] = 1.0;
        }
        b
    }

    /// Immutable CSR snapshot usable as a matrix-vector oracle.
    pub fn adjacency_oracle(&self) -> AdjacencyOracle {
        let mut offsets = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::with_capacity(2 * self.edge_count());
        offsets.push(0);
        for nb in &self.neighbors {
            cols.extend(nb.iter().map(|&v| v as u32));
            offsets.push(cols.len());
        }
        AdjacencyOracle {
            n: self.n,
            offsets,
            cols,
        }
    }

    /// Exact triangle count by degree-ordered neighbor intersection.
    pub fn exact_triangles(&self) -> Result<u64> {
        if self.n > MAX_TRIANGLE_NODES {
            return Err(Error::GraphTooLarge(self.n));
        }
        let rank = |u: usize| (self.neighbors[u].len(), u);
        let forward: Vec<Vec<usize>> = (0..self.n)
            .map(|u| {
                self.neighbors[u]
                    .iter()
                    .copied()
                    .filter(|&v| rank(v) > rank(u))
                    .collect()
            })
            .collect();
        let mut mark = vec![false; self.n];
        let mut count = 0u64;
        for u in 0..self.n {
            for &v in &forward[u] {
                mark[v] = true;
            }
            for &v in &forward[u] {
                count += forward[v].iter().filter(|&&w| mark[w]).count() as u64;
            }
            for &v in &forward[u] {
                mark[v] = false;
            }
        }
        Ok(count)
    }
}

/// CSR adjacency snapshot; products use 0/1 weights.
#[derive(Clone, Debug)]
pub struct AdjacencyOracle {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
}

impl AdjacencyOracle {
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

impl MatVecOracle for AdjacencyOracle {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (u, yu) in y.iter_mut().enumerate() {
            *yu = self.cols[self.offsets[u]..self.offsets[u + 1]]
                .iter()
                .map(|&v| x[v as usize])
                .sum();
        }
    }
}

/// `G(n, p)` with a seeded coin per pair.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<DynamicGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut rng = stream_rng(seed, 0, tags::GRAPH);
    let mut g = DynamicGraph::new(n);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(p) {
                g.increment(u, v);
            }
        }
    }
    Ok(g)
}

/// Node set of the random clique inserted at `step`: size uniform in
/// `[10, 150]` capped at `n`, nodes drawn without replacement.
pub fn random_clique_nodes(n: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, step, tags::CLIQUE);
    let (lo, hi) = CLIQUE_SIZE_RANGE;
    let k = rng.random_range(lo..=hi).min(n);
    let mut nodes = index::sample(&mut rng, n, k).into_vec();
    nodes.sort_unstable();
    nodes
}

/// Update rule for the clique experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CliqueSchedule {
    /// Updates `1..=insert_updates` add a clique; later updates delete one.
    pub insert_updates: usize,
}

impl Default for CliqueSchedule {
    fn default() -> Self {
        Self { insert_updates: 75 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CliqueEvent {
    Added(u64),
    Removed(u64),
    Idle,
}

impl CliqueSchedule {
    /// Applies update number `update` (1-based); deletions pick a live
    /// clique uniformly at random.
    pub fn apply(&self, graph: &mut DynamicGraph, seed: u64, update: u64) -> Result<CliqueEvent> {
        if update as usize <= self.insert_updates {
            let nodes = random_clique_nodes(graph.n(), seed, update);
            if nodes.len() < 2 {
                return Ok(CliqueEvent::Idle);
            }
            return graph.add_clique(&nodes).map(CliqueEvent::Added);
        }
        let live = graph.live_clique_count();
        if live == 0 {
            return Ok(CliqueEvent::Idle);
        }
        let pick = stream_rng(seed, update, tags::CLIQUE).random_range(0..live);
        let id = graph
            .live_cliques()
            .nth(pick)
            .map(|(id, _)| id)
            .expect("pick < live");
        graph.remove_clique(id)?;
        Ok(CliqueEvent::Removed(id))
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads an undirected simple graph. SNAP ids are relabeled densely in
/// increasing order; self-loops are dropped.
pub fn load_edge_list(reader: impl BufRead, format: EdgeListFormat) -> Result<DynamicGraph> {
    match format {
        EdgeListFormat::Snap => load_snap(reader),
        EdgeListFormat::MatrixMarket => load_matrix_market(reader),
    }
}

fn read_err(e: std::io::Error) -> Error {
    Error::io("<edge list>", e)
}

fn load_snap(reader: impl BufRead) -> Result<DynamicGraph> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(read_err)?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut field = |name: &str| -> Result<u64> {
            let tok = it
                .next()
                .ok_or_else(|| parse_error(lineno, format!("missing {name} node")))?;
            tok.parse()
                .map_err(|_| parse_error(lineno, format!("bad node id '{tok}'")))
        };
        let (u, v) = (field("source")?, field("target")?);
        pairs.push((u, v));
    }
    let mut ids: Vec<u64> = pairs.iter().flat_map(|&(u, v)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    let label = |x: u64| ids.binary_search(&x).expect("collected above");
    let edges: Vec<(usize, usize)> = pairs
        .iter()
        .filter(|(u, v)| u != v)
        .map(|&(u, v)| (label(u), label(v)))
        .collect();
    DynamicGraph::from_edges(ids.len(), edges)
}

fn load_matrix_market(reader: impl BufRead) -> Result<DynamicGraph> {
    let mut size: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(read_err)?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.starts_with("%%MatrixMarket") {
            let lower = t.to_ascii_lowercase();
            if !lower.contains("coordinate") {
                return Err(parse_error(lineno, "only coordinate format is supported"));
            }
            continue;
        }
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols)) = size else {
            if fields.len() != 3 {
                return Err(parse_error(lineno, "expected 'rows cols entries'"));
            }
            let dims: Vec<usize> = fields
                .iter()
                .map(|f| f.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_error(lineno, "bad size line"))?;
            if dims[0] != dims[1] {
                return Err(parse_error(lineno, "adjacency matrix must be square"));
            }
            size = Some((dims[0], dims[1]));
            continue;
        };
        if fields.len() < 2 {
            return Err(parse_error(lineno, "expected 'row col [value]'"));
        }
        let idx = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| parse_error(lineno, format!("bad index '{s}'")))
        };
        let (i, j) = (idx(fields[0])?, idx(fields[1])?);
        for (x, bound) in [(i, rows), (j, cols)] {
            if x == 0 || x > bound {
                return Err(Error::NodeOutOfRange { node: x, n: bound });
            }
        }
        if let Some(v) = fields.get(2) {
            let v: f64 = v
                .parse()
                .map_err(|_| parse_error(lineno, format!("bad value '{v}'")))?;
            if v == 0.0 {
                continue;
            }
        }
        if i != j {
            edges.push((i - 1, j - 1));
        }
    }
    let (n, _) = size.ok_or_else(|| parse_error(0, "missing size line"))?;
    DynamicGraph::from_edges(n, edges)
}
