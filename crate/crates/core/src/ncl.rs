//! Nondeterministic Constraint Logic: weighted graphs, orientations and
//! brute-force reachability over the orientation space.
//!
//! Orientations are stored one bit per edge, so the searches here are limited
//! to [`MAX_SEARCH_EDGES`] edges.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

pub const MAX_SEARCH_EDGES: usize = 24;
pub const DEFAULT_NCL_CAP: usize = 1 << MAX_SEARCH_EDGES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NclError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex `{0}` declared twice")]
    DuplicateVertex(String),
    #[error("edge {0}-{1} declared twice or is a loop")]
    BadEdge(String, String),
    #[error("vertex `{vertex}` has degree {degree}")]
    BadDegree { vertex: String, degree: usize },
    #[error("vertex `{vertex}` has incident weights {weights:?}, which is neither AND nor OR")]
    BadProfile { vertex: String, weights: Vec<u8> },
    #[error("rotation at `{vertex}`: {msg}")]
    BadRotation { vertex: String, msg: String },
    #[error("orientation: {0}")]
    BadOrientation(String),
    #[error("starting orientation is not a valid configuration")]
    InvalidStart,
    #[error("target orientation is not a valid configuration")]
    InvalidTarget,
    #[error("edge {edge} is already reversed relative to the start")]
    AlreadyReversed { edge: usize },
    #[error("no edge {0}")]
    NoSuchEdge(usize),
    #[error("search too large: {edges} edges, cap {cap} states")]
    TooLarge { edges: usize, cap: usize },
}

/// Which incident weights an OR vertex carries. The standard NCL OR has three
/// weight-2 edges; the literal reading has three weight-1 edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrProfile {
    #[default]
    Standard,
    Literal,
}

impl OrProfile {
    pub fn weight(self) -> u8 {
        match self {
            OrProfile::Standard => 2,
            OrProfile::Literal => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    pub or_profile: OrProfile,
    /// Accept degree-1 vertices as unconstrained free edge ends.
    pub free_ends: bool,
}

impl LoadOptions {
    pub fn with_free_ends() -> Self {
        LoadOptions { free_ends: true, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    And,
    Or,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: u8,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintGraph {
    names: Vec<String>,
    kinds: Vec<VertexKind>,
    edges: Vec<Edge>,
    incident: Vec<Vec<usize>>,
    /// Cyclic order of incident edges per vertex.
    rotation: Option<Vec<Vec<usize>>>,
    options: LoadOptions,
}

/// One bit per edge: set when the edge points toward its `v` endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orientation {
    bits: u64,
    len: usize,
}

impl Orientation {
    pub fn new(toward_v: &[bool]) -> Self {
        assert!(toward_v.len() <= 64, "orientations hold at most 64 edges");
        let bits = toward_v.iter().enumerate().fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
        Orientation { bits, len: toward_v.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn toward_v(&self, e: usize) -> bool {
        self.bits >> e & 1 == 1
    }

    pub fn reversed(&self, e: usize) -> Orientation {
        assert!(e < self.len);
        Orientation { bits: self.bits ^ (1 << e), len: self.len }
    }

    pub fn head(&self, g: &ConstraintGraph, e: usize) -> usize {
        let edge = g.edges[e];
        if self.toward_v(e) {
            edge.v
        } else {
            edge.u
        }
    }

    pub fn tail(&self, g: &ConstraintGraph, e: usize) -> usize {
        g.edges[e].other(self.head(g, e))
    }

    pub fn points_into(&self, g: &ConstraintGraph, e: usize, x: usize) -> bool {
        self.head(g, e) == x
    }

    pub fn to_text(&self, g: &ConstraintGraph) -> String {
        let mut out = String::new();
        for (e, edge) in g.edges.iter().enumerate() {
            let head = self.head(g, e);
            out.push_str(&format!("orient {} {} -> {}\n", g.names[edge.u], g.names[edge.v], g.names[head]));
        }
        out
    }

    /// Parses `orient` lines. Every edge of `g` must appear exactly once.
    pub fn parse(g: &ConstraintGraph, text: &str) -> Result<Orientation, NclError> {
        let mut dirs = vec![None; g.edges.len()];
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let Some(c) = ORIENT_RE.captures(line) else {
                return Err(NclError::Parse { line: i + 1, msg: format!("expected `orient u v -> w`, got `{line}`") });
            };
            g.apply_orient_line(&mut dirs, &c[1], &c[2], &c[3], i + 1)?;
        }
        g.finish_orientation(dirs)
    }
}

static VERTEX_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^vertex\s+(\w+)$").unwrap());
static EDGE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^edge\s+(\w+)\s+(\w+)\s+weight=(\d+)$").unwrap());
static ORIENT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^orient\s+(\w+)\s+(\w+)\s*->\s*(\w+)$").unwrap());
static ROTATION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^rotation\s+(\w+)\s*:\s*((?:\w+\s*)*)$").unwrap());

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

impl ConstraintGraph {
    /// Builds and validates a graph. `rotation` lists neighbour indices in
    /// cyclic order for each vertex.
    pub fn new(
        names: Vec<String>,
        edges: Vec<Edge>,
        rotation: Option<Vec<Vec<usize>>>,
        options: LoadOptions,
    ) -> Result<Self, NclError> {
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(NclError::DuplicateVertex(n.clone()));
            }
        }
        let mut incident = vec![Vec::new(); names.len()];
        let mut seen = std::collections::HashSet::new();
        for (e, edge) in edges.iter().enumerate() {
            for x in [edge.u, edge.v] {
                if x >= names.len() {
                    return Err(NclError::UnknownVertex(format!("#{x}")));
                }
            }
            if edge.u == edge.v || !seen.insert((edge.u.min(edge.v), edge.u.max(edge.v))) {
                return Err(NclError::BadEdge(names[edge.u].clone(), names[edge.v].clone()));
            }
            if !(1..=2).contains(&edge.weight) {
                return Err(NclError::BadProfile { vertex: names[edge.u].clone(), weights: vec![edge.weight] });
            }
            incident[edge.u].push(e);
            incident[edge.v].push(e);
        }
        let mut kinds = Vec::with_capacity(names.len());
        for (x, inc) in incident.iter().enumerate() {
            let mut weights: Vec<u8> = inc.iter().map(|&e| edges[e].weight).collect();
            weights.sort_unstable();
            let or_w = options.or_profile.weight();
            let kind = match weights.as_slice() {
                [_] if options.free_ends => VertexKind::Free,
                [1, 1, 2] => VertexKind::And,
                [a, b, c] if *a == or_w && *b == or_w && *c == or_w => VertexKind::Or,
                [_, _, _] => return Err(NclError::BadProfile { vertex: names[x].clone(), weights }),
                _ => return Err(NclError::BadDegree { vertex: names[x].clone(), degree: weights.len() }),
            };
            kinds.push(kind);
        }
        let rotation = match rotation {
            None => None,
            Some(rot) => Some(Self::check_rotation(&names, &edges, &incident, rot)?),
        };
        Ok(ConstraintGraph { names, kinds, edges, incident, rotation, options })
    }

    fn check_rotation(
        names: &[String],
        edges: &[Edge],
        incident: &[Vec<usize>],
        rot: Vec<Vec<usize>>,
    ) -> Result<Vec<Vec<usize>>, NclError> {
        if rot.len() != names.len() {
            return Err(NclError::BadRotation { vertex: String::new(), msg: "one entry per vertex required".into() });
        }
        let mut out = Vec::with_capacity(rot.len());
        for (x, order) in rot.into_iter().enumerate() {
            let bad = |msg: String| NclError::BadRotation { vertex: names[x].clone(), msg };
            let mut cyc = Vec::with_capacity(order.len());
            for y in order {
                let e = incident[x]
                    .iter()
                    .copied()
                    .find(|&e| edges[e].other(x) == y)
                    .ok_or_else(|| bad(format!("`{}` is not a neighbour", names.get(y).map_or("?", |s| s))))?;
                if cyc.contains(&e) {
                    return Err(bad(format!("`{}` listed twice", names[y])));
                }
                cyc.push(e);
            }
            if cyc.len() != incident[x].len() {
                return Err(bad(format!("lists {} of {} incident edges", cyc.len(), incident[x].len())));
            }
            out.push(cyc);
        }
        Ok(out)
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn name(&self, x: usize) -> &str {
        &self.names[x]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vertex(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn kind(&self, x: usize) -> VertexKind {
        self.kinds[x]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Edge {
        self.edges[e]
    }

    pub fn edge_between(&self, x: usize, y: usize) -> Option<usize> {
        self.incident[x].iter().copied().find(|&e| self.edges[e].other(x) == y)
    }

    pub fn incident(&self, x: usize) -> &[usize] {
        &self.incident[x]
    }

    pub fn options(&self) -> LoadOptions {
        self.options
    }

    /// Incident edges of `x` in cyclic order; declaration order without an
    /// embedding.
    pub fn rotation(&self, x: usize) -> &[usize] {
        match &self.rotation {
            Some(r) => &r[x],
            None => &self.incident[x],
        }
    }

    pub fn has_embedding(&self) -> bool {
        self.rotation.is_some()
    }

    /// Number of faces traced by the rotation system. The embedding is planar
    /// iff Euler's formula holds on every connected component.
    pub fn face_count(&self) -> Option<usize> {
        let rot = self.rotation.as_ref()?;
        // Darts are (edge, from-vertex). The next dart around a face leaves
        // the head along the edge following the reverse dart in its rotation.
        let mut visited = std::collections::HashSet::new();
        let mut faces = 0;
        for (e, edge) in self.edges.iter().enumerate() {
            for from in [edge.u, edge.v] {
                if visited.contains(&(e, from)) {
                    continue;
                }
                faces += 1;
                let (mut ce, mut cf) = (e, from);
                while visited.insert((ce, cf)) {
                    let to = self.edges[ce].other(cf);
                    let order = &rot[to];
                    let pos = order.iter().position(|&x| x == ce).unwrap();
                    ce = order[(pos + 1) % order.len()];
                    cf = to;
                }
            }
        }
        Some(faces)
    }

    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.names.len()];
        let mut count = 0;
        for s in 0..self.names.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(x) = stack.pop() {
                for &e in &self.incident[x] {
                    let y = self.edges[e].other(x);
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        count
    }

    /// True when the supplied rotation system is a plane embedding.
    pub fn embedding_is_planar(&self) -> Option<bool> {
        let f = self.face_count()?;
        let (v, e, c) = (self.names.len() as i64, self.edges.len() as i64, self.components() as i64);
        // Isolated vertices contribute no darts but one face each in Euler's count.
        let isolated = self.incident.iter().filter(|i| i.is_empty()).count() as i64;
        Some(v - e + f as i64 + isolated == 1 + c)
    }

    pub fn in_flow(&self, o: &Orientation, x: usize) -> u32 {
        self.incident[x].iter().filter(|&&e| o.points_into(self, e, x)).map(|&e| self.edges[e].weight as u32).sum()
    }

    fn vertex_ok(&self, o: &Orientation, x: usize) -> bool {
        self.kinds[x] == VertexKind::Free || self.in_flow(o, x) >= 2
    }

    pub fn covers(&self, o: &Orientation) -> bool {
        o.len == self.edges.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.names {
            out.push_str(&format!("vertex {n}\n"));
        }
        for e in &self.edges {
            out.push_str(&format!("edge {} {} weight={}\n", self.names[e.u], self.names[e.v], e.weight));
        }
        if let Some(rot) = &self.rotation {
            for (x, order) in rot.iter().enumerate() {
                let ns: Vec<&str> = order.iter().map(|&e| self.names[self.edges[e].other(x)].as_str()).collect();
                out.push_str(&format!("rotation {}: {}\n", self.names[x], ns.join(" ")));
            }
        }
        out
    }

    pub fn parse(text: &str, options: LoadOptions) -> Result<ConstraintGraph, NclError> {
        Ok(Self::parse_with_orientation(text, options)?.0)
    }

    /// Parses a graph file. `orient` lines, if any, form an orientation that
    /// must cover every edge.
    pub fn parse_with_orientation(
        text: &str,
        options: LoadOptions,
    ) -> Result<(ConstraintGraph, Option<Orientation>), NclError> {
        let mut names = Vec::new();
        let mut index = HashMap::new();
        let mut edges = Vec::new();
        let mut rotations: Vec<(usize, String, Vec<String>)> = Vec::new();
        let mut orients: Vec<(usize, [String; 3])> = Vec::new();
        let lookup = |index: &HashMap<String, usize>, n: &str, line: usize| {
            index.get(n).copied().ok_or_else(|| NclError::Parse { line, msg: format!("unknown vertex `{n}`") })
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(c) = VERTEX_RE.captures(line) {
                if index.insert(c[1].to_string(), names.len()).is_some() {
                    return Err(NclError::Parse { line: line_no, msg: format!("vertex `{}` declared twice", &c[1]) });
                }
                names.push(c[1].to_string());
            } else if let Some(c) = EDGE_RE.captures(line) {
                let weight: u8 =
                    c[3].parse().map_err(|_| NclError::Parse { line: line_no, msg: "bad weight".into() })?;
                if !(1..=2).contains(&weight) {
                    return Err(NclError::Parse { line: line_no, msg: format!("weight {weight} is not 1 or 2") });
                }
                let u = lookup(&index, &c[1], line_no)?;
                let v = lookup(&index, &c[2], line_no)?;
                edges.push(Edge { u, v, weight });
            } else if let Some(c) = ROTATION_RE.captures(line) {
                let ns = c[2].split_whitespace().map(str::to_string).collect();
                rotations.push((line_no, c[1].to_string(), ns));
            } else if let Some(c) = ORIENT_RE.captures(line) {
                orients.push((line_no, [c[1].to_string(), c[2].to_string(), c[3].to_string()]));
            } else {
                return Err(NclError::Parse { line: line_no, msg: format!("unrecognised line `{line}`") });
            }
        }
        let rotation = if rotations.is_empty() {
            None
        } else {
            let mut rot: Vec<Option<Vec<usize>>> = vec![None; names.len()];
            for (line_no, v, ns) in rotations {
                let x = lookup(&index, &v, line_no)?;
                if rot[x].is_some() {
                    return Err(NclError::Parse { line: line_no, msg: format!("second rotation for `{v}`") });
                }
                let order = ns.iter().map(|n| lookup(&index, n, line_no)).collect::<Result<Vec<_>, _>>()?;
                rot[x] = Some(order);
            }
            // Vertices of degree at most 2 have only one cyclic order.
            let mut full = Vec::with_capacity(names.len());
            for (x, r) in rot.into_iter().enumerate() {
                match r {
                    Some(r) => full.push(r),
                    None => {
                        let nbrs: Vec<usize> = edges
                            .iter()
                            .filter(|e| e.u == x || e.v == x)
                            .map(|e| if e.u == x { e.v } else { e.u })
                            .collect();
                        if nbrs.len() > 2 {
                            return Err(NclError::BadRotation {
                                vertex: names[x].clone(),
                                msg: "missing rotation line".into(),
                            });
                        }
                        full.push(nbrs);
                    }
                }
            }
            Some(full)
        };
        let g = ConstraintGraph::new(names, edges, rotation, options)?;
        if orients.is_empty() {
            return Ok((g, None));
        }
        let mut dirs = vec![None; g.edges.len()];
        for (line_no, [a, b, h]) in &orients {
            g.apply_orient_line(&mut dirs, a, b, h, *line_no)?;
        }
        let o = g.finish_orientation(dirs)?;
        Ok((g, Some(o)))
    }

    fn apply_orient_line(
        &self,
        dirs: &mut [Option<bool>],
        a: &str,
        b: &str,
        head: &str,
        line: usize,
    ) -> Result<(), NclError> {
        let err = |msg: String| NclError::Parse { line, msg };
        let x = self.vertex(a).ok_or_else(|| err(format!("unknown vertex `{a}`")))?;
        let y = self.vertex(b).ok_or_else(|| err(format!("unknown vertex `{b}`")))?;
        let h = self.vertex(head).ok_or_else(|| err(format!("unknown vertex `{head}`")))?;
        let e = self.edge_between(x, y).ok_or_else(|| err(format!("no edge {a}-{b}")))?;
        if h != x && h != y {
            return Err(err(format!("`{head}` is not an endpoint of {a}-{b}")));
        }
        if dirs[e].is_some() {
            return Err(err(format!("edge {a}-{b} oriented twice")));
        }
        dirs[e] = Some(h == self.edges[e].v);
        Ok(())
    }

    fn finish_orientation(&self, dirs: Vec<Option<bool>>) -> Result<Orientation, NclError> {
        let mut bits = Vec::with_capacity(dirs.len());
        for (e, d) in dirs.into_iter().enumerate() {
            let edge = self.edges[e];
            bits.push(d.ok_or_else(|| {
                NclError::BadOrientation(format!("edge {}-{} has no direction", self.names[edge.u], self.names[edge.v]))
            })?);
        }
        Ok(Orientation::new(&bits))
    }
}

impl fmt::Display for ConstraintGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn validate_configuration(g: &ConstraintGraph, o: &Orientation) -> bool {
    assert!(g.covers(o), "orientation does not cover the graph");
    (0..g.vertex_count()).all(|x| g.vertex_ok(o, x))
}

/// Edges whose reversal alone keeps every vertex satisfied.
pub fn legal_moves(g: &ConstraintGraph, o: &Orientation) -> Result<Vec<usize>, NclError> {
    if !g.covers(o) || !validate_configuration(g, o) {
        return Err(NclError::InvalidStart);
    }
    Ok(moves_unchecked(g, o))
}

// Reversing e only lowers the in-flow of its current head.
fn moves_unchecked(g: &ConstraintGraph, o: &Orientation) -> Vec<usize> {
    (0..g.edge_count())
        .filter(|&e| {
            let head = o.head(g, e);
            g.kinds[head] == VertexKind::Free || g.in_flow(o, head) - g.edges[e].weight as u32 >= 2
        })
        .collect()
}

/// Breadth-first search over orientations. `cap` bounds the visited set.
fn bfs(
    g: &ConstraintGraph,
    start: &Orientation,
    cap: usize,
    is_goal: impl Fn(&Orientation) -> bool,
) -> Result<Option<Vec<usize>>, NclError> {
    if g.edge_count() > MAX_SEARCH_EDGES {
        return Err(NclError::TooLarge { edges: g.edge_count(), cap });
    }
    if !g.covers(start) || !validate_configuration(g, start) {
        return Err(NclError::InvalidStart);
    }
    if is_goal(start) {
        return Ok(Some(Vec::new()));
    }
    let mut parent: HashMap<Orientation, (Orientation, usize)> = HashMap::new();
    let mut queue = VecDeque::from([*start]);
    let mut visited = 1usize;
    while let Some(o) = queue.pop_front() {
        for e in moves_unchecked(g, &o) {
            let next = o.reversed(e);
            if next == *start || parent.contains_key(&next) {
                continue;
            }
            parent.insert(next, (o, e));
            if is_goal(&next) {
                let mut path = Vec::new();
                let mut cur = next;
                while cur != *start {
                    let (p, e) = parent[&cur];
                    path.push(e);
                    cur = p;
                }
                path.reverse();
                return Ok(Some(path));
            }
            visited += 1;
            if visited > cap {
                return Err(NclError::TooLarge { edges: g.edge_count(), cap });
            }
            queue.push_back(next);
        }
    }
    Ok(None)
}

/// Shortest sequence of edge reversals from `start` to `target`.
pub fn ncl_config_to_config(
    g: &ConstraintGraph,
    start: &Orientation,
    target: &Orientation,
    cap: usize,
) -> Result<Option<Vec<usize>>, NclError> {
    if !g.covers(target) || !validate_configuration(g, target) {
        return Err(NclError::InvalidTarget);
    }
    bfs(g, start, cap, |o| o == target)
}

/// Shortest sequence ending in an orientation where `edge` points the other
/// way from `start`.
pub fn ncl_config_to_edge(
    g: &ConstraintGraph,
    start: &Orientation,
    edge: usize,
    cap: usize,
) -> Result<Option<Vec<usize>>, NclError> {
    if edge >= g.edge_count() {
        return Err(NclError::NoSuchEdge(edge));
    }
    let want = !start.toward_v(edge);
    bfs(g, start, cap, |o| o.toward_v(edge) == want)
}

/// Config-to-edge with the target given as a desired head vertex. Rejects a
/// target the start orientation already satisfies.
pub fn ncl_config_to_head(
    g: &ConstraintGraph,
    start: &Orientation,
    edge: usize,
    head: usize,
    cap: usize,
) -> Result<Option<Vec<usize>>, NclError> {
    if edge >= g.edge_count() {
        return Err(NclError::NoSuchEdge(edge));
    }
    if start.head(g, edge) == head {
        return Err(NclError::AlreadyReversed { edge });
    }
    ncl_config_to_edge(g, start, edge, cap)
}

/// Replays reversals, checking validity after every step. Returns the final
/// orientation or the index of the first illegal step.
pub fn replay(g: &ConstraintGraph, start: &Orientation, moves: &[usize]) -> Result<Orientation, usize> {
    let mut o = *start;
    for (i, &e) in moves.iter().enumerate() {
        if e >= g.edge_count() {
            return Err(i);
        }
        o = o.reversed(e);
        if !validate_configuration(g, &o) {
            return Err(i);
        }
    }
    Ok(o)
}

/// Every valid orientation of a small graph, by enumeration.
pub fn valid_orientations(g: &ConstraintGraph) -> Result<Vec<Orientation>, NclError> {
    if g.edge_count() > MAX_SEARCH_EDGES {
        return Err(NclError::TooLarge { edges: g.edge_count(), cap: DEFAULT_NCL_CAP });
    }
    let n = g.edge_count();
    Ok((0..1u64 << n).map(|bits| Orientation { bits, len: n }).filter(|o| validate_configuration(g, o)).collect())
}

/// Formats a reversal sequence by endpoint names, e.g. `a-b c-d`.
pub fn format_reversals(g: &ConstraintGraph, moves: &[usize]) -> String {
    moves.iter().map(|&e| format!("{}-{}", g.names[g.edges[e].u], g.names[g.edges[e].v])).collect::<Vec<_>>().join(" ")
}

/// Vertex counts by kind.
pub fn census(g: &ConstraintGraph) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for &k in &g.kinds {
        let key = match k {
            VertexKind::And => "and",
            VertexKind::Or => "or",
            VertexKind::Free => "free",
        };
        *m.entry(key).or_default() += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts() -> LoadOptions {
        LoadOptions::with_free_ends()
    }

    // One AND vertex `x` with free ends a, b (weight 1) and c (weight 2).
    const SINGLE_AND: &str = "\
vertex x
vertex a
vertex b
vertex c
edge a x weight=1
edge b x weight=1
edge x c weight=2
";

    fn single_and(into_x: [bool; 3]) -> (ConstraintGraph, Orientation) {
        let g = ConstraintGraph::parse(SINGLE_AND, opts()).unwrap();
        // Edges 0 and 1 point into x when toward v; edge 2 when toward u.
        let o = Orientation::new(&[into_x[0], into_x[1], !into_x[2]]);
        (g, o)
    }

    #[test]
    fn and_vertex_validity() {
        let (g, o) = single_and([true, true, false]);
        assert!(validate_configuration(&g, &o));
        let (g, o) = single_and([false, false, true]);
        assert!(validate_configuration(&g, &o));
        let (g, o) = single_and([true, false, false]);
        assert!(!validate_configuration(&g, &o));
        assert_eq!(g.kind(0), VertexKind::And);
        assert_eq!(g.kind(1), VertexKind::Free);
    }

    #[test]
    fn reversing_a_needed_weight_one_edge_is_illegal() {
        let (g, o) = single_and([true, true, false]);
        assert_eq!(legal_moves(&g, &o).unwrap(), vec![2]);
        let (g, o) = single_and([true, false, false]);
        assert_eq!(legal_moves(&g, &o), Err(NclError::InvalidStart));
    }

    #[test]
    fn all_edges_reversible_with_surplus_inflow() {
        let (g, o) = single_and([true, true, true]);
        assert_eq!(legal_moves(&g, &o).unwrap(), vec![0, 1, 2]);
    }

    // Cube graph of AND vertices: the weight-2 edges are the verticals, the
    // two squares carry weight 1.
    fn cube() -> ConstraintGraph {
        let mut text = String::new();
        for i in 0..4 {
            text.push_str(&format!("vertex a{i}\nvertex b{i}\n"));
        }
        for i in 0..4 {
            let j = (i + 1) % 4;
            text.push_str(&format!("edge a{i} a{j} weight=1\nedge b{i} b{j} weight=1\nedge a{i} b{i} weight=2\n"));
        }
        ConstraintGraph::parse(&text, LoadOptions::default()).unwrap()
    }

    #[test]
    fn frozen_cube() {
        let g = cube();
        let v = |n: &str| g.vertex(n).unwrap();
        // a0, a2, b1, b3 take both weight-1 edges in and send the vertical out.
        let sinks = ["a0", "a2", "b1", "b3"];
        let bits: Vec<bool> = g
            .edges()
            .iter()
            .map(|e| {
                let (u, w) = (g.name(e.u), g.name(e.v));
                if e.weight == 2 {
                    sinks.contains(&u)
                } else {
                    sinks.contains(&w)
                }
            })
            .collect();
        let o = Orientation::new(&bits);
        assert!(validate_configuration(&g, &o));
        assert!(legal_moves(&g, &o).unwrap().is_empty());
        let e = g.edge_between(v("a0"), v("b0")).unwrap();
        assert_eq!(ncl_config_to_edge(&g, &o, e, DEFAULT_NCL_CAP).unwrap(), None);
        // Exhaustive check: every reversal breaks some vertex.
        for e in 0..g.edge_count() {
            assert!(!validate_configuration(&g, &o.reversed(e)));
        }
    }

    #[test]
    fn config_to_config_basics() {
        let (g, o) = single_and([true, true, false]);
        assert_eq!(ncl_config_to_config(&g, &o, &o, DEFAULT_NCL_CAP).unwrap(), Some(vec![]));
        let t = o.reversed(2);
        assert_eq!(ncl_config_to_config(&g, &o, &t, DEFAULT_NCL_CAP).unwrap(), Some(vec![2]));
        assert_eq!(ncl_config_to_edge(&g, &o, 2, DEFAULT_NCL_CAP).unwrap(), Some(vec![2]));
        let bad = Orientation::new(&[true, false, true]);
        assert_eq!(ncl_config_to_config(&g, &o, &bad, DEFAULT_NCL_CAP), Err(NclError::InvalidTarget));
    }

    #[test]
    fn head_target_already_met_is_rejected() {
        let (g, o) = single_and([true, true, false]);
        let x = g.vertex("x").unwrap();
        assert_eq!(ncl_config_to_head(&g, &o, 0, x, DEFAULT_NCL_CAP), Err(NclError::AlreadyReversed { edge: 0 }));
        assert_eq!(ncl_config_to_head(&g, &o, 2, x, DEFAULT_NCL_CAP).unwrap(), Some(vec![2]));
    }

    // A triangle of OR vertices, each with one free end.
    const OR_TRIANGLE: &str = "\
vertex p
vertex q
vertex r
vertex fp
vertex fq
vertex fr
edge p q weight=2
edge q r weight=2
edge r p weight=2
edge p fp weight=2
edge q fq weight=2
edge r fr weight=2
rotation p: q r fp
rotation q: r p fq
rotation r: p q fr
";

    #[test]
    fn cycle_reversal_needs_intermediate_steps() {
        let g = ConstraintGraph::parse(OR_TRIANGLE, opts()).unwrap();
        // Cycle p->q->r->p, free ends pointing out.
        let o = Orientation::new(&[true, true, true, true, true, true]);
        assert!(validate_configuration(&g, &o));
        // Reversing the whole cycle: no single reversal is valid directly.
        let t = Orientation::new(&[false, false, false, true, true, true]);
        assert!(validate_configuration(&g, &t));
        let w = ncl_config_to_config(&g, &o, &t, DEFAULT_NCL_CAP).unwrap().unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(replay(&g, &o, &w), Ok(t));
    }

    #[test]
    fn text_round_trip() {
        let (g, o) = ConstraintGraph::parse_with_orientation(
            &format!("{OR_TRIANGLE}orient p q -> q\norient q r -> r\norient r p -> p\norient p fp -> fp\norient q fq -> fq\norient r fr -> fr\n"),
            opts(),
        )
        .unwrap();
        let o = o.unwrap();
        let g2 = ConstraintGraph::parse(&g.to_text(), opts()).unwrap();
        assert_eq!(g, g2);
        assert_eq!(Orientation::parse(&g, &o.to_text(&g)).unwrap(), o);
        assert_eq!(g.embedding_is_planar(), Some(true));
    }

    #[test]
    fn load_time_checks() {
        let e = ConstraintGraph::parse(SINGLE_AND, LoadOptions::default()).unwrap_err();
        assert!(matches!(e, NclError::BadDegree { .. }));
        let e = ConstraintGraph::parse("vertex a\nedge a b weight=1\n", opts()).unwrap_err();
        assert_eq!(e, NclError::Parse { line: 2, msg: "unknown vertex `b`".into() });
        let e = ConstraintGraph::parse("vertex a\nvertex b\nedge a b weight=3\n", opts()).unwrap_err();
        assert!(matches!(e, NclError::Parse { line: 3, .. }));
        let e = ConstraintGraph::parse(&SINGLE_AND.replace("x c weight=2", "x c weight=1"), opts()).unwrap_err();
        assert!(matches!(e, NclError::BadProfile { .. }));
        let lit = LoadOptions { or_profile: OrProfile::Literal, free_ends: true };
        let g = ConstraintGraph::parse(&SINGLE_AND.replace("x c weight=2", "x c weight=1"), lit).unwrap();
        assert_eq!(g.kind(0), VertexKind::Or);
        let e = ConstraintGraph::parse(&OR_TRIANGLE.replace("rotation p: q r fp", "rotation p: q q fp"), opts())
            .unwrap_err();
        assert!(matches!(e, NclError::BadRotation { .. }));
    }

    #[test]
    fn k4_embedding_planarity() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        // K4 with standard OR vertices.
        let mut edges = Vec::new();
        for u in 0..4 {
            for v in u + 1..4 {
                edges.push(Edge { u, v, weight: 2 });
            }
        }
        let planar = vec![vec![1, 2, 3], vec![0, 3, 2], vec![0, 1, 3], vec![0, 2, 1]];
        let g = ConstraintGraph::new(names.clone(), edges.clone(), Some(planar), LoadOptions::default()).unwrap();
        assert_eq!(g.embedding_is_planar(), Some(true));
        let twisted = vec![vec![1, 2, 3], vec![0, 2, 3], vec![0, 1, 3], vec![0, 1, 2]];
        let g = ConstraintGraph::new(names, edges, Some(twisted), LoadOptions::default()).unwrap();
        assert_eq!(g.embedding_is_planar(), Some(false));
    }

    // Random graphs: core vertices with AND or OR weight profiles. Half-edges
    // of equal weight are paired; leftovers get a free end.
    pub(crate) fn random_graph(seed_profiles: &[bool], pairing: &[usize]) -> ConstraintGraph {
        let mut names = Vec::new();
        let mut half = Vec::new();
        for (i, &is_and) in seed_profiles.iter().enumerate() {
            names.push(format!("v{i}"));
            let ws: [u8; 3] = if is_and { [1, 1, 2] } else { [2, 2, 2] };
            for w in ws {
                half.push((i, w));
            }
        }
        let mut edges: Vec<Edge> = Vec::new();
        let mut used = vec![false; half.len()];
        for (k, &p) in pairing.iter().enumerate() {
            let a = k % half.len();
            let b = p % half.len();
            if used[a] || used[b] || half[a].0 == half[b].0 || half[a].1 != half[b].1 {
                continue;
            }
            let (u, v) = (half[a].0, half[b].0);
            if edges.iter().any(|e| (e.u == u && e.v == v) || (e.u == v && e.v == u)) {
                continue;
            }
            used[a] = true;
            used[b] = true;
            edges.push(Edge { u, v, weight: half[a].1 });
        }
        for (h, &(x, w)) in half.iter().enumerate() {
            if !used[h] {
                names.push(format!("f{h}"));
                edges.push(Edge { u: x, v: names.len() - 1, weight: w });
            }
        }
        ConstraintGraph::new(names, edges, None, opts()).unwrap()
    }

    fn small_graph() -> impl Strategy<Value = ConstraintGraph> {
        (prop::collection::vec(any::<bool>(), 1..=3), prop::collection::vec(0usize..64, 0..12))
            .prop_map(|(p, q)| random_graph(&p, &q))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn legal_moves_match_definition(g in small_graph(), bits in any::<u64>()) {
            let n = g.edge_count();
            let o = Orientation { bits: bits & ((1u64 << n) - 1), len: n };
            if validate_configuration(&g, &o) {
                let moves = legal_moves(&g, &o).unwrap();
                for e in 0..n {
                    let r = o.reversed(e);
                    prop_assert_eq!(moves.contains(&e), validate_configuration(&g, &r));
                    if moves.contains(&e) {
                        prop_assert!(legal_moves(&g, &r).unwrap().contains(&e));
                    }
                }
            }
        }

        #[test]
        fn reachability_is_symmetric_and_paths_valid(g in small_graph(), a in any::<u64>(), b in any::<u64>()) {
            let all = valid_orientations(&g).unwrap();
            prop_assume!(!all.is_empty());
            let x = all[(a % all.len() as u64) as usize];
            let y = all[(b % all.len() as u64) as usize];
            let fwd = ncl_config_to_config(&g, &x, &y, DEFAULT_NCL_CAP).unwrap();
            let back = ncl_config_to_config(&g, &y, &x, DEFAULT_NCL_CAP).unwrap();
            prop_assert_eq!(fwd.is_some(), back.is_some());
            if let Some(w) = fwd {
                prop_assert_eq!(replay(&g, &x, &w), Ok(y));
                if let Some(v) = back {
                    prop_assert_eq!(w.len(), v.len());
                }
            }
        }
    }
}
