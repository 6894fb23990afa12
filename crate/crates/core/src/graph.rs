//! Connected graphs with a bank partition of their vertices.
//!
//! Vertices are contiguous 0-based indices internally. Generated graphs label
//! vertex `v` as `v + 1`; edge-list files keep whatever labels they use, in
//! order of first appearance.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::error::{GraphError, PartitionError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSpec {
    Complete(usize),
    Cycle(usize),
    Grid { rows: usize, cols: usize },
    EdgeList(PathBuf),
}

impl FromStr for GraphSpec {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::BadSpec(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let count = |a: &str| a.trim().parse::<usize>().map_err(|_| bad());
        match kind.trim() {
            "complete" => Ok(GraphSpec::Complete(count(arg)?)),
            "cycle" => Ok(GraphSpec::Cycle(count(arg)?)),
            "path" => Ok(GraphSpec::Grid { rows: 1, cols: count(arg)? }),
            "grid" => {
                let (r, c) = arg.split_once(['x', 'X']).ok_or_else(bad)?;
                Ok(GraphSpec::Grid { rows: count(r)?, cols: count(c)? })
            }
            "file" => Ok(GraphSpec::EdgeList(PathBuf::from(arg))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Complete(n) => write!(f, "complete:{n}"),
            GraphSpec::Cycle(n) => write!(f, "cycle:{n}"),
            GraphSpec::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            GraphSpec::EdgeList(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Undirected, simple, connected graph.
#[derive(Debug, Clone)]
pub struct Graph {
    labels: Vec<String>,
    adjacency: Adjacency,
}

// complete graphs are never materialised: N = 10^4 would need 10^8 entries
#[derive(Debug, Clone)]
enum Adjacency {
    Complete,
    Listed { edges: Vec<(u32, u32)>, offsets: Vec<usize>, neighbors: Vec<u32> },
}

/// Neighbours of one vertex.
pub enum Neighbors<'a> {
    All { skip: usize, next: usize, n: usize },
    Listed(std::slice::Iter<'a, u32>),
}

impl Iterator for Neighbors<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        match self {
            Neighbors::All { skip, next, n } => {
                if *next == *skip {
                    *next += 1;
                }
                (*next < *n).then(|| {
                    *next += 1;
                    *next - 1
                })
            }
            Neighbors::Listed(it) => it.next().map(|&w| w as usize),
        }
    }
}

impl Graph {
    /// Validates an edge list over `n` vertices. Vertex labels default to `1..=n`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let labels = (1..=n).map(|v| v.to_string()).collect();
        let numbered: Vec<_> = edges.iter().enumerate().map(|(i, &(u, v))| (i + 1, u, v)).collect();
        Self::build(labels, &numbered)
    }

    /// Parses the plain-text edge-list format: one `u v` pair per line,
    /// `#` starts a comment line.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut labels: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(GraphError::Malformed { line: line_no, text: trimmed.to_string() });
            }
            let mut id = |label: &str| {
                *index.entry(label.to_string()).or_insert_with(|| {
                    labels.push(label.to_string());
                    labels.len() - 1
                })
            };
            let u = id(fields[0]);
            let v = id(fields[1]);
            edges.push((line_no, u, v));
        }
        Self::build(labels, &edges)
    }

    fn build(labels: Vec<String>, edges: &[(usize, usize, usize)]) -> Result<Self, GraphError> {
        let n = labels.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut list = Vec::with_capacity(edges.len());
        let mut degree = vec![0usize; n];
        for &(line, u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) references a vertex outside 0..{n}");
            if u == v {
                return Err(GraphError::SelfLoop { line, vertex: labels[u].clone() });
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge {
                    line,
                    u: labels[u].clone(),
                    v: labels[v].clone(),
                });
            }
            degree[u] += 1;
            degree[v] += 1;
            list.push((u as u32, v as u32));
        }

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(u, v) in &list {
            neighbors[fill[u as usize]] = v;
            fill[u as usize] += 1;
            neighbors[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }

        if n >= 2 && list.len() == n * (n - 1) / 2 {
            return Ok(Graph { labels, adjacency: Adjacency::Complete });
        }
        let graph = Graph { labels, adjacency: Adjacency::Listed { edges: list, offsets, neighbors } };
        graph.check_connected()?;
        Ok(graph)
    }

    fn complete(n: usize) -> Self {
        Graph { labels: (1..=n).map(|v| v.to_string()).collect(), adjacency: Adjacency::Complete }
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let n = self.vertex_count();
        let mut reached = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match reached.iter().position(|r| !r) {
            None => Ok(()),
            Some(v) => Err(GraphError::Disconnected(self.labels[0].clone(), self.labels[v].clone())),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        match &self.adjacency {
            Adjacency::Complete => {
                let n = self.labels.len();
                n * (n - 1) / 2
            }
            Adjacency::Listed { edges, .. } => edges.len(),
        }
    }

    /// Undirected edges; `(u, v)` with `u < v` in lexicographic order for
    /// complete graphs, input order otherwise.
    pub fn edges(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match &self.adjacency {
            Adjacency::Complete => {
                let n = self.labels.len();
                Box::new((0..n).flat_map(move |u| (u + 1..n).map(move |v| (u, v))))
            }
            Adjacency::Listed { edges, .. } => Box::new(edges.iter().map(|&(u, v)| (u as usize, v as usize))),
        }
    }

    /// All `2 card(E)` directed edges, each undirected edge in both orientations.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges().flat_map(|(u, v)| [(u, v), (v, u)])
    }

    pub fn neighbors(&self, v: usize) -> Neighbors<'_> {
        match &self.adjacency {
            Adjacency::Complete => Neighbors::All { skip: v, next: 0, n: self.labels.len() },
            Adjacency::Listed { offsets, neighbors, .. } => Neighbors::Listed(neighbors[offsets[v]..offsets[v + 1]].iter()),
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        match &self.adjacency {
            Adjacency::Complete => self.labels.len() - 1,
            Adjacency::Listed { offsets, .. } => offsets[v + 1] - offsets[v],
        }
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        match &self.adjacency {
            Adjacency::Complete => u != v && u < self.labels.len() && v < self.labels.len(),
            Adjacency::Listed { .. } => self.neighbors(u).any(|w| w == v),
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.adjacency, Adjacency::Complete) && self.labels.len() >= 2
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Draws a directed edge `(x, y)` uniformly among the `2 card(E)` orientations.
    ///
    /// The graph must have at least one edge.
    #[inline]
    pub fn sample_directed_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        if let Adjacency::Listed { edges, .. } = &self.adjacency {
            let k = rng.gen_range(0..2 * edges.len());
            let (u, v) = edges[k >> 1];
            if k & 1 == 0 {
                (u as usize, v as usize)
            } else {
                (v as usize, u as usize)
            }
        } else {
            // x uniform, y uniform among the other n - 1 vertices
            let n = self.labels.len() as u64;
            let k = rng.gen_range(0..n * (n - 1));
            let x = k / (n - 1);
            let mut y = k % (n - 1);
            if y >= x {
                y += 1;
            }
            (x as usize, y as usize)
        }
    }
}

pub fn build_graph(spec: &GraphSpec) -> Result<Graph, GraphError> {
    match spec {
        GraphSpec::Complete(n) => {
            if *n == 0 {
                return Err(GraphError::Empty);
            }
            Ok(Graph::complete(*n))
        }
        GraphSpec::Cycle(n) => {
            if *n < 3 {
                return Err(GraphError::CycleTooSmall(*n));
            }
            let edges: Vec<_> = (0..*n).map(|u| (u, (u + 1) % n)).collect();
            Graph::from_edges(*n, &edges)
        }
        GraphSpec::Grid { rows, cols } => {
            let n = rows * cols;
            if n == 0 {
                return Err(GraphError::Empty);
            }
            let mut edges = Vec::new();
            for r in 0..*rows {
                for c in 0..*cols {
                    let v = r * cols + c;
                    if c + 1 < *cols {
                        edges.push((v, v + 1));
                    }
                    if r + 1 < *rows {
                        edges.push((v, v + cols));
                    }
                }
            }
            Graph::from_edges(n, &edges)
        }
        GraphSpec::EdgeList(path) => Graph::parse_edge_list(&read(path).map_err(|message| {
            GraphError::Io { path: path.clone(), message }
        })?),
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionSpec {
    EqualSplit(usize),
    File(PathBuf),
}

impl FromStr for PartitionSpec {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PartitionError::BadSpec(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "equal" => Ok(PartitionSpec::EqualSplit(arg.trim().parse().map_err(|_| bad())?)),
            "file" => Ok(PartitionSpec::File(PathBuf::from(arg))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionSpec::EqualSplit(k) => write!(f, "equal:{k}"),
            PartitionSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Assignment of every vertex to exactly one bank, plus the banks' initial
/// reserves. Banks are indexed `0..K` in the API and `1..=K` in files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankPartition {
    bank_of: Vec<u32>,
    bank_sizes: Vec<u64>,
    reserves: Vec<u64>,
}

impl BankPartition {
    pub fn from_assignment(bank_of: Vec<usize>, reserves: Vec<u64>) -> Result<Self, PartitionError> {
        let k = reserves.len();
        if k == 0 {
            return Err(PartitionError::NoBanks);
        }
        let mut sizes = vec![0u64; k];
        for &b in &bank_of {
            if b >= k {
                return Err(PartitionError::ReserveCount { expected: b + 1, got: k });
            }
            sizes[b] += 1;
        }
        if k > bank_of.len() {
            return Err(PartitionError::TooManyBanks { banks: k, vertices: bank_of.len() });
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(PartitionError::EmptyBank(empty + 1));
        }
        Ok(BankPartition {
            bank_of: bank_of.into_iter().map(|b| b as u32).collect(),
            bank_sizes: sizes,
            reserves,
        })
    }

    /// Parses `vertex bank` lines against the labels of `graph`.
    pub fn parse(graph: &Graph, text: &str, reserves: Vec<u64>) -> Result<Self, PartitionError> {
        let index: HashMap<&str, usize> =
            graph.labels().iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut bank_of: Vec<Option<usize>> = vec![None; graph.vertex_count()];
        let mut max_bank = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(PartitionError::Malformed { line: line_no, text: trimmed.to_string() });
            }
            let v = *index.get(fields[0]).ok_or_else(|| PartitionError::UnknownVertex {
                line: line_no,
                vertex: fields[0].to_string(),
            })?;
            let bank: usize = match fields[1].parse() {
                Ok(b) if b >= 1 => b,
                _ => return Err(PartitionError::BadBank { line: line_no, text: fields[1].to_string() }),
            };
            if bank_of[v].replace(bank - 1).is_some() {
                return Err(PartitionError::DuplicateVertex { line: line_no, vertex: fields[0].to_string() });
            }
            max_bank = max_bank.max(bank);
        }
        let assignment = bank_of
            .iter()
            .enumerate()
            .map(|(v, b)| b.ok_or_else(|| PartitionError::MissingVertex(graph.label(v).to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if reserves.len() != max_bank {
            return Err(PartitionError::ReserveCount { expected: max_bank, got: reserves.len() });
        }
        Self::from_assignment(assignment, reserves)
    }

    pub fn bank_count(&self) -> usize {
        self.bank_sizes.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.bank_of.len()
    }

    #[inline]
    pub fn bank_of(&self, v: usize) -> usize {
        self.bank_of[v] as usize
    }

    pub fn assignment(&self) -> &[u32] {
        &self.bank_of
    }

    pub fn bank_sizes(&self) -> &[u64] {
        &self.bank_sizes
    }

    pub fn reserves(&self) -> &[u64] {
        &self.reserves
    }

    pub fn total_reserve(&self) -> u64 {
        self.reserves.iter().sum()
    }

    pub fn members(&self, bank: usize) -> impl Iterator<Item = usize> + '_ {
        self.bank_of.iter().enumerate().filter(move |(_, &b)| b as usize == bank).map(|(v, _)| v)
    }
}

pub fn assign_banks(
    graph: &Graph,
    spec: &PartitionSpec,
    reserves: Vec<u64>,
) -> Result<BankPartition, PartitionError> {
    let n = graph.vertex_count();
    match spec {
        PartitionSpec::EqualSplit(k) => {
            let k = *k;
            if k == 0 {
                return Err(PartitionError::NoBanks);
            }
            if k > n {
                return Err(PartitionError::TooManyBanks { banks: k, vertices: n });
            }
            if n % k != 0 {
                return Err(PartitionError::Indivisible { banks: k, vertices: n });
            }
            if reserves.len() != k {
                return Err(PartitionError::ReserveCount { expected: k, got: reserves.len() });
            }
            BankPartition::from_assignment((0..n).map(|v| v % k).collect(), reserves)
        }
        PartitionSpec::File(path) => {
            let text = read(path).map_err(|message| PartitionError::Io { path: path.clone(), message })?;
            BankPartition::parse(graph, &text, reserves)
        }
    }
}
