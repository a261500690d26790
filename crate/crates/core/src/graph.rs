//! Junction graphs and their adjoint (line) graphs.
//!
//! A water network is given as an undirected junction graph whose edges are
//! channels. The protocol runs on the adjoint graph, where every channel is a
//! node and two channels are adjacent iff they share a junction. Node `l` of
//! the adjoint graph is always channel `l` of the input, in input order.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("a junction graph needs at least 3 junctions, got {0}")]
    TooFewJunctions(usize),
    #[error("a junction graph needs at least 2 channels, got {0}")]
    TooFewChannels(usize),
    #[error("channel {channel} is a self-loop on junction {junction}")]
    SelfLoop { channel: usize, junction: usize },
    #[error("channel {channel} duplicates channel {first} (junctions {a}-{b})")]
    DuplicateChannel {
        channel: usize,
        first: usize,
        a: usize,
        b: usize,
    },
    #[error("channel {channel} references junction {junction}, but the graph has {m} junctions")]
    JunctionOutOfRange {
        channel: usize,
        junction: usize,
        m: usize,
    },
    #[error("graph is disconnected: vertex {unreachable} cannot be reached from vertex 1")]
    Disconnected { unreachable: usize },
    #[error("adjacency is not symmetric between vertices {0} and {1}")]
    Asymmetric(usize, usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
}

/// Undirected, simple, connected junction graph. Indices are 0-based; all
/// user-facing diagnostics are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionTopology {
    m: usize,
    channels: Vec<(usize, usize)>,
    labels: Option<Vec<String>>,
}

impl JunctionTopology {
    /// Validates and normalizes a channel list. Each pair is stored with the
    /// smaller junction first; channel order is preserved.
    pub fn new(m: usize, channels: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if m < 3 {
            return Err(GraphError::TooFewJunctions(m));
        }
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        let mut normalized = Vec::new();
        for (idx, (a, b)) in channels.into_iter().enumerate() {
            for j in [a, b] {
                if j >= m {
                    return Err(GraphError::JunctionOutOfRange {
                        channel: idx + 1,
                        junction: j + 1,
                        m,
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop {
                    channel: idx + 1,
                    junction: a + 1,
                });
            }
            let key = (a.min(b), a.max(b));
            if let Some(first) = seen.insert(key, idx) {
                return Err(GraphError::DuplicateChannel {
                    channel: idx + 1,
                    first: first + 1,
                    a: key.0 + 1,
                    b: key.1 + 1,
                });
            }
            normalized.push(key);
        }
        if normalized.len() < 2 {
            return Err(GraphError::TooFewChannels(normalized.len()));
        }
        let topo = Self {
            m,
            channels: normalized,
            labels: None,
        };
        eccentricity_from(&topo.junction_neighbors(), 0)?;
        Ok(topo)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GraphError> {
        if labels.len() != self.m {
            return Err(GraphError::LabelCount {
                expected: self.m,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Complete graph K_m, channels in lexicographic order.
    pub fn complete(m: usize) -> Result<Self, GraphError> {
        let edges = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)));
        Self::new(m, edges)
    }

    /// Path on `m` junctions.
    pub fn path(m: usize) -> Result<Self, GraphError> {
        Self::new(m, (1..m).map(|j| (j - 1, j)))
    }

    /// Star K_{1,m-1} centered at junction 0.
    pub fn star(m: usize) -> Result<Self, GraphError> {
        Self::new(m, (1..m).map(|j| (0, j)))
    }

    /// Synthetic 22-junction, 25-channel network used for demos. Its adjoint
    /// graph has d_m = 2, d_M = 5, radius 5 and diameter 7. It is NOT a
    /// survey of any real canal system.
    pub fn synthetic_22_25() -> Self {
        const EDGES: [(usize, usize); 25] = [
            (0, 3), (0, 9), (0, 20), (1, 9), (1, 10), (1, 16), (2, 10), (3, 5),
            (4, 8), (4, 12), (5, 13), (5, 17), (6, 11), (6, 13), (7, 15), (7, 18),
            (8, 20), (10, 15), (10, 19), (11, 14), (11, 21), (12, 14), (12, 18),
            (15, 18), (16, 17),
        ];
        Self::new(22, EDGES).expect("built-in topology is valid")
    }

    /// Parses an edge list: one `i j` pair per line, 1-based junction ids.
    /// Blank lines and `#` comments are ignored. The junction count is the
    /// largest id seen.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut m = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| GraphError::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(format!("expected two junction ids, found {:?}", line)));
            }
            let mut ids = [0usize; 2];
            for (slot, field) in ids.iter_mut().zip(&fields) {
                let value: usize = field
                    .parse()
                    .map_err(|_| parse_err(format!("invalid junction id {:?}", field)))?;
                if value == 0 {
                    return Err(parse_err("junction ids are 1-based".into()));
                }
                *slot = value - 1;
            }
            m = m.max(ids[0] + 1).max(ids[1] + 1);
            edges.push((ids[0], ids[1], lineno + 1));
        }
        // re-run validation so errors carry the offending line
        let pairs: Vec<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
        Self::new(m, pairs.iter().copied()).map_err(|e| match e {
            GraphError::SelfLoop { channel, .. } | GraphError::DuplicateChannel { channel, .. } => {
                GraphError::Parse {
                    line: edges[channel - 1].2,
                    message: e.to_string(),
                }
            }
            other => other,
        })
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b) in &self.channels {
            let _ = writeln!(out, "{} {}", a + 1, b + 1);
        }
        out
    }

    pub fn junction_count(&self) -> usize {
        self.m
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[(usize, usize)] {
        &self.channels
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn channel_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.channels.iter().position(|&c| c == key)
    }

    pub fn junction_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.m];
        for &(a, b) in &self.channels {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    pub fn junction_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(a, b) in &self.channels {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Oriented incidence matrix (m x n): -1 at the lower junction of each
    /// channel, +1 at the upper one.
    pub fn incidence_matrix(&self) -> Vec<Vec<i64>> {
        let mut e = vec![vec![0i64; self.channels.len()]; self.m];
        for (l, &(a, b)) in self.channels.iter().enumerate() {
            e[a][l] = -1;
            e[b][l] = 1;
        }
        e
    }
}

/// Number of adjoint edges from junction degrees: -n + (1/2) sum (d_i)^2.
pub fn adjoint_edge_count(jt: &JunctionTopology) -> usize {
    let sum_sq: usize = jt.junction_degrees().iter().map(|d| d * d).sum();
    sum_sq / 2 - jt.channel_count()
}

/// Adjacency of the adjoint graph as |E^T E - 2 I| computed from the
/// incidence matrix.
pub fn adjacency_from_incidence(jt: &JunctionTopology) -> Vec<Vec<u8>> {
    let e = jt.incidence_matrix();
    let n = jt.channel_count();
    let mut a = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot: i64 = (0..jt.m).map(|v| e[v][i] * e[v][j]).sum();
            if i == j {
                dot -= 2;
            }
            a[i][j] = dot.unsigned_abs() as u8;
        }
    }
    a
}

/// The adjoint graph with its topological constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTopology {
    neighbors: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    eccentricities: Vec<usize>,
    d_min: usize,
    d_max: usize,
    radius: usize,
    diameter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphMetrics {
    pub d_min: usize,
    pub d_max: usize,
    pub radius: usize,
    pub diameter: usize,
}

/// Builds L(jt) by the shared-junction rule.
pub fn build_line_graph(jt: &JunctionTopology) -> Result<ChannelTopology, GraphError> {
    let n = jt.channel_count();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); jt.m];
    for (l, &(a, b)) in jt.channels.iter().enumerate() {
        incident[a].push(l);
        incident[b].push(l);
    }
    let mut neighbors = vec![Vec::new(); n];
    for chans in &incident {
        for (p, &u) in chans.iter().enumerate() {
            for &v in &chans[p + 1..] {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
    }
    ChannelTopology::from_neighbors(neighbors)
}

impl ChannelTopology {
    /// Builds a topology from arbitrary neighbor lists. Lists are sorted and
    /// deduplicated; the graph must be symmetric, loop-free, connected and
    /// have at least two nodes.
    pub fn from_neighbors(mut neighbors: Vec<Vec<usize>>) -> Result<Self, GraphError> {
        let n = neighbors.len();
        if n < 2 {
            return Err(GraphError::TooFewChannels(n));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            if let Some(&j) = list.iter().find(|&&j| j >= n) {
                return Err(GraphError::JunctionOutOfRange {
                    channel: i + 1,
                    junction: j + 1,
                    m: n,
                });
            }
            if list.binary_search(&i).is_ok() {
                return Err(GraphError::SelfLoop {
                    channel: i + 1,
                    junction: i + 1,
                });
            }
        }
        for i in 0..n {
            for &j in &neighbors[i] {
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(GraphError::Asymmetric(i + 1, j + 1));
                }
            }
        }
        let eccentricities = eccentricities(&neighbors)?;
        let degrees: Vec<usize> = neighbors.iter().map(Vec::len).collect();
        Ok(Self {
            d_min: *degrees.iter().min().unwrap(),
            d_max: *degrees.iter().max().unwrap(),
            radius: *eccentricities.iter().min().unwrap(),
            diameter: *eccentricities.iter().max().unwrap(),
            neighbors,
            degrees,
            eccentricities,
        })
    }

    pub fn from_adjacency(adj: &[Vec<u8>]) -> Result<Self, GraphError> {
        let neighbors = adj
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &a)| a != 0).map(|(j, _)| j).collect())
            .collect();
        Self::from_neighbors(neighbors)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.degrees.iter().sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn eccentricities(&self) -> &[usize] {
        &self.eccentricities
    }

    pub fn d_min(&self) -> usize {
        self.d_min
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    pub fn is_regular(&self) -> bool {
        self.d_min == self.d_max
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.node_count();
        let mut a = vec![vec![0u8; n]; n];
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[i][j] = 1;
            }
        }
        a
    }
}

pub fn graph_metrics(ct: &ChannelTopology) -> GraphMetrics {
    GraphMetrics {
        d_min: ct.d_min,
        d_max: ct.d_max,
        radius: ct.radius,
        diameter: ct.diameter,
    }
}

/// Unit-weight eccentricity of every vertex, by one BFS per vertex.
pub fn eccentricities(neighbors: &[Vec<usize>]) -> Result<Vec<usize>, GraphError> {
    (0..neighbors.len()).map(|s| eccentricity_from(neighbors, s)).collect()
}

fn eccentricity_from(neighbors: &[Vec<usize>], source: usize) -> Result<usize, GraphError> {
    let n = neighbors.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    dist[source] = 0;
    queue.push_back(source);
    let mut far = 0;
    while let Some(u) = queue.pop_front() {
        far = far.max(dist[u]);
        for &v in &neighbors[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    match dist.iter().position(|&d| d == usize::MAX) {
        Some(v) => Err(GraphError::Disconnected { unreachable: v + 1 }),
        None => Ok(far),
    }
}
