//! Undirected graphs without self-loops, piecewise-constant schedules of
//! graphs, standard generators and the plain-text graph file format.
//!
//! Vertices are labelled `1..=n` at every external boundary (edge lists,
//! files, the CLI) and indexed `0..n` in memory.

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Resamples allowed before Erdős–Rényi generation gives up.
pub const ER_RETRY_BUDGET: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("graph is disconnected: vertex {0} is unreachable from vertex 1")]
    DisconnectedGraph(usize),
    #[error("self-loop rejected at vertex {0}")]
    SelfLoopRejected(usize),
    #[error("vertex {node} out of range 1..={n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("graph generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("schedule has no frames")]
    EmptySchedule,
    #[error("schedule frame {frame} has {found} vertices, expected {expected}")]
    FrameSizeMismatch {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

/// A connected, simple, undirected graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    /// Edges as `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from 1-indexed edge pairs. Duplicate pairs (in either
    /// orientation) collapse to a single edge.
    pub fn from_edges(n: usize, edge_list: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(u, v) in edge_list {
            for node in [u, v] {
                if node == 0 || node > n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoopRejected(u));
            }
            let (a, b) = (u.min(v) - 1, u.max(v) - 1);
            edges.push((a, b));
        }
        Self::from_indexed_edges(n, edges)
    }

    /// Same as [`Graph::from_edges`] but with 0-based endpoints.
    pub(crate) fn from_indexed_edges(
        n: usize,
        mut edges: Vec<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        edges.sort_unstable();
        edges.dedup();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let g = Graph { n, edges, adj };
        if let Some(v) = g.first_unreachable() {
            return Err(GraphError::DisconnectedGraph(v + 1));
        }
        Ok(g)
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as 0-based `(i, j)` with `i < j`, sorted ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbors of `x` (0-based).
    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adj[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adj[x].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        x != y && self.adj[x].binary_search(&y).is_ok()
    }

    /// Parses the text format: a header line `n <count>` followed by one
    /// whitespace-separated 1-indexed edge `u v` per line. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing header `n <count>`".into(),
        })?;
        let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["n", count] => count.parse::<usize>().map_err(|e| GraphError::Parse {
                line,
                msg: format!("bad vertex count: {e}"),
            })?,
            _ => {
                return Err(GraphError::Parse {
                    line,
                    msg: format!("expected `n <count>`, found `{header}`"),
                })
            }
        };
        let mut edges = Vec::new();
        for (line, body) in lines {
            let fields: Vec<_> = body.split_whitespace().collect();
            let [u, v] = fields.as_slice() else {
                return Err(GraphError::Parse {
                    line,
                    msg: format!("expected `u v`, found `{body}`"),
                });
            };
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| GraphError::Parse {
                    line,
                    msg: format!("bad vertex `{s}`: {e}"),
                })
            };
            edges.push((parse(u)?, parse(v)?));
        }
        Graph::from_edges(n, &edges)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Graph::parse(&text)
    }

    /// Renders the graph in the text file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for &(a, b) in &self.edges {
            out.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        out
    }
}

/// Standard graph families for scaling studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Path,
    Cycle,
    Complete,
    /// Star centred on vertex 1.
    Star,
    ErdosRenyi(f64),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Path => f.write_str("path"),
            Family::Cycle => f.write_str("cycle"),
            Family::Complete => f.write_str("complete"),
            Family::Star => f.write_str("star"),
            Family::ErdosRenyi(p) => write!(f, "er:{p}"),
        }
    }
}

impl FromStr for Family {
    type Err = String;

    /// Accepts `path`, `cycle`, `complete`, `star` and `er:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(Family::Path),
            "cycle" => Ok(Family::Cycle),
            "complete" => Ok(Family::Complete),
            "star" => Ok(Family::Star),
            _ => {
                let p = s
                    .strip_prefix("er:")
                    .ok_or_else(|| format!("unknown graph family `{s}`"))?;
                let p: f64 = p.parse().map_err(|e| format!("bad edge probability: {e}"))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(format!("edge probability {p} outside (0, 1]"));
                }
                Ok(Family::ErdosRenyi(p))
            }
        }
    }
}

/// Generates a member of `family` on `n ≥ 2` vertices. Deterministic in
/// `(family, n, seed)`; the seed only matters for random families.
pub fn generate(family: Family, n: usize, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::GenerationFailed(0));
    }
    let edges: Vec<(usize, usize)> = match family {
        Family::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        Family::Cycle => (0..n).map(|i| (i, (i + 1) % n)).map(order).collect(),
        Family::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        Family::Star => (1..n).map(|i| (0, i)).collect(),
        Family::ErdosRenyi(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..ER_RETRY_BUDGET {
                let edges: Vec<_> = (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .filter(|_| rng.random_bool(p))
                    .collect();
                if let Ok(g) = Graph::from_indexed_edges(n, edges) {
                    return Ok(g);
                }
            }
            return Err(GraphError::GenerationFailed(ER_RETRY_BUDGET));
        }
    };
    Graph::from_indexed_edges(n, edges)
}

fn order((a, b): (usize, usize)) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// A piecewise-constant sequence of connected graphs on a common vertex
/// set. Frame `k` is active on `[k, k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    frames: Vec<Graph>,
    cycle: bool,
}

#[derive(Debug, Deserialize)]
struct ScheduleFile {
    cycle: bool,
    frames: Vec<PathBuf>,
}

impl Schedule {
    pub fn new(frames: Vec<Graph>, cycle: bool) -> Result<Self, GraphError> {
        let first = frames.first().ok_or(GraphError::EmptySchedule)?;
        let expected = first.n();
        if let Some((frame, g)) = frames.iter().enumerate().find(|(_, g)| g.n() != expected) {
            return Err(GraphError::FrameSizeMismatch {
                frame,
                expected,
                found: g.n(),
            });
        }
        Ok(Schedule { frames, cycle })
    }

    pub fn fixed(g: Graph) -> Self {
        Schedule {
            frames: vec![g],
            cycle: false,
        }
    }

    pub fn n(&self) -> usize {
        self.frames[0].n()
    }

    pub fn frames(&self) -> &[Graph] {
        &self.frames
    }

    pub fn cycles(&self) -> bool {
        self.cycle
    }

    /// Index into [`Schedule::frames`] of the graph active at time `t ≥ 0`.
    pub fn frame_index_at(&self, t: f64) -> usize {
        let k = t.max(0.0).floor();
        let len = self.frames.len();
        if self.cycle {
            (k % len as f64) as usize
        } else if k >= (len - 1) as f64 {
            len - 1
        } else {
            k as usize
        }
    }

    pub fn graph_at(&self, t: f64) -> &Graph {
        &self.frames[self.frame_index_at(t)]
    }

    /// Whether the active graph can still change at some integer time after
    /// `t`.
    pub fn switches_after(&self, t: f64) -> bool {
        match self.frames.len() {
            1 => false,
            len => self.cycle || t.floor() < (len - 1) as f64,
        }
    }

    /// Loads the JSON schedule format `{"cycle": bool, "frames": [paths]}`.
    /// Relative frame paths resolve against the schedule file's directory.
    /// Returns the schedule and the resolved frame paths.
    pub fn load(path: &Path) -> Result<(Self, Vec<PathBuf>), GraphError> {
        let io = |msg: String| GraphError::Io {
            path: path.to_path_buf(),
            msg,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let file: ScheduleFile = serde_json::from_str(&text).map_err(|e| GraphError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let paths: Vec<PathBuf> = file.frames.iter().map(|p| base.join(p)).collect();
        let frames = paths
            .iter()
            .map(|p| Graph::load(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((Schedule::new(frames, file.cycle)?, paths))
    }
}
