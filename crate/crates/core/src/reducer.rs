//! Compiles a planar constraint graph with start and goal orientations into a
//! board, an oracle program and a goal configuration.
//!
//! The board is a square grid of 4×4 sub-instances. Each constrained vertex
//! gets a vertex gadget at level `j = 4 + colour`; each edge between two
//! gadgets becomes a route of connector pieces from an output port to an
//! input port, carrying one level change. Everything else is lattice.
//!
//! Rotation systems are read clockwise. Edges to free ends get no route: an
//! input port facing a free end keeps a feeder tile beside it until the
//! port is activated.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use itertools::Itertools;
use thiserror::Error;

use crate::engine::Board;
use crate::gadgets::{
    fitted_piece, instantiate_gadget, lattice_fill, GadgetError, GadgetKind, GadgetTemplate, Port, Role, Side,
    Symmetry, LATTICE_ANCHOR, WINDOW,
};
use crate::ncl::{self, ConstraintGraph, Orientation, VertexKind};
use crate::oracle::{LatticeRegion, OracleError, OracleProgram, OracleRule};
use crate::solver::{bounded_config_to_config, replay, SolveResult, SolverError};

pub const MAX_VERTICES: usize = 64;
/// (margin, pitch) pairs tried, in sub-instances, before routing gives up.
/// The margin is the lattice border around the outermost gadgets; the pitch
/// is the distance between neighbouring gadgets.
/// Route counts up to which every routing order is tried.
const MAX_PERMUTED_ROUTES: usize = 6;
const SPACINGS: [(usize, usize); 6] = [(1, 4), (2, 4), (2, 6), (3, 8), (4, 8), (4, 12)];

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("{0} vertices exceed the limit of {MAX_VERTICES}")]
    TooLarge(usize),
    #[error("graph is not four-colourable, so it is not planar")]
    NotFourColorable,
    #[error("cannot route edge {edge}: {reason}")]
    RoutingFailure { edge: String, reason: String },
    #[error("conflicting oracle rules: {0}")]
    ConflictingOracleRules(OracleError),
    #[error("{0}")]
    InvalidOrientation(String),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Colour in `0..4` per vertex.
pub type Coloring = Vec<u8>;

/// Proper 4-colouring by exact backtracking, highest degree first.
pub fn four_color(g: &ConstraintGraph) -> Result<Coloring, ReduceError> {
    let pairs: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.u, e.v)).collect();
    color_graph(g.vertex_count(), &pairs)
}

/// [`four_color`] on a bare edge list.
pub fn color_graph(n: usize, edges: &[(usize, usize)]) -> Result<Coloring, ReduceError> {
    if n > MAX_VERTICES {
        return Err(ReduceError::TooLarge(n));
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&x| (std::cmp::Reverse(adj[x].len()), x));
    let mut colors = vec![u8::MAX; n];
    if backtrack(&order, &adj, &mut colors) {
        Ok(colors)
    } else {
        Err(ReduceError::NotFourColorable)
    }
}

fn backtrack(order: &[usize], adj: &[Vec<usize>], colors: &mut [u8]) -> bool {
    let Some((&x, rest)) = order.split_first() else { return true };
    for c in 0..4 {
        if adj[x].iter().all(|&y| colors[y] != c) {
            colors[x] = c;
            if backtrack(rest, adj, colors) {
                return true;
            }
        }
    }
    colors[x] = u8::MAX;
    false
}

pub fn assign_levels(coloring: &Coloring) -> Vec<u8> {
    coloring.iter().map(|&c| 4 + c).collect()
}

/// The edge carried by port C. For an AND vertex it is the weight-2 edge.
/// For an OR vertex it is the first edge in rotation order that points out
/// in `o`, or the first edge if none does.
fn c_edge(g: &ConstraintGraph, x: usize, o: &Orientation) -> usize {
    let rot = g.rotation(x);
    match g.kind(x) {
        VertexKind::And => *rot.iter().find(|&&e| g.edge(e).weight == 2).unwrap(),
        _ => *rot.iter().find(|&&e| !o.points_into(g, e, x)).unwrap_or(&rot[0]),
    }
}

/// Edge per port: C as in [`c_edge`], then A and B following it clockwise.
pub fn vertex_ports(g: &ConstraintGraph, x: usize, o: &Orientation) -> BTreeMap<Port, usize> {
    let rot = g.rotation(x);
    let c = c_edge(g, x, o);
    let i = rot.iter().position(|&e| e == c).unwrap();
    BTreeMap::from([(Port::C, c), (Port::A, rot[(i + 1) % 3]), (Port::B, rot[(i + 2) % 3])])
}

/// REV_ANDOR for an activated AND vertex (weight-2 edge out) or an OR vertex
/// whose A and B edges both enter; otherwise J_AND or J_OR. Free ends get no
/// gadget.
pub fn select_vertex_gadget(g: &ConstraintGraph, x: usize, o: &Orientation) -> Option<GadgetKind> {
    if g.kind(x) == VertexKind::Free {
        return None;
    }
    let ports = vertex_ports(g, x, o);
    let into = |p: Port| o.points_into(g, ports[&p], x);
    match g.kind(x) {
        VertexKind::Free => None,
        VertexKind::And if !into(Port::C) => Some(GadgetKind::RevAndOr),
        VertexKind::And => Some(GadgetKind::JAnd),
        VertexKind::Or if into(Port::A) && into(Port::B) => Some(GadgetKind::RevAndOr),
        VertexKind::Or => Some(GadgetKind::JOr),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexPlan {
    pub vertex: usize,
    /// Grid cell, 1-indexed.
    pub cell: (usize, usize),
    pub kind: GadgetKind,
    pub j: u8,
    pub symmetry: Symmetry,
    pub template: GadgetTemplate,
    pub ports: BTreeMap<Port, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutePiece {
    pub cell: (usize, usize),
    pub kind: GadgetKind,
    pub entry: Side,
    pub exit: Side,
    /// Built along a path rather than taken from the catalogue.
    pub adapted: bool,
    pub template: GadgetTemplate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub edge: usize,
    /// Vertex and output port the activation leaves from.
    pub src: (usize, Port),
    pub dst: (usize, Port),
    pub pieces: Vec<RoutePiece>,
}

/// A gadget port whose edge ends at a free vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Terminal {
    pub edge: usize,
    pub vertex: usize,
    pub port: Port,
    pub cell: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    /// Grid side in sub-instances.
    pub side: usize,
    pub vertices: Vec<VertexPlan>,
    pub routes: Vec<Route>,
    pub terminals: Vec<Terminal>,
}

impl LayoutPlan {
    pub fn board_size(&self) -> usize {
        self.side * WINDOW
    }

    /// Counts of vertex gadgets and connector pieces by kind name.
    pub fn census(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for v in &self.vertices {
            *m.entry(v.kind.to_string()).or_default() += 1;
        }
        for p in self.routes.iter().flat_map(|r| &r.pieces) {
            let name = match p.kind {
                GadgetKind::Connection(..) => "connection",
                GadgetKind::Line(_) => "line",
                GadgetKind::Corner(_) => "corner",
                _ => "other",
            };
            *m.entry(name.to_string()).or_default() += 1;
        }
        m
    }

    pub fn to_text(&self, g: &ConstraintGraph) -> String {
        let mut s = String::new();
        let edge_name = |e: usize| format!("{}-{}", g.name(g.edge(e).u), g.name(g.edge(e).v));
        let _ = writeln!(s, "grid {0}x{0} board {1}x{1}", self.side, self.board_size());
        for v in &self.vertices {
            let ports: Vec<String> = v.ports.iter().map(|(p, &e)| format!("{p}:{}", edge_name(e))).collect();
            let _ = writeln!(
                s,
                "vertex {} at ({},{}) {} j={} symmetry={:?} ports {}",
                g.name(v.vertex),
                v.cell.0,
                v.cell.1,
                v.kind,
                v.j,
                v.symmetry,
                ports.join(" ")
            );
        }
        for r in &self.routes {
            let _ = writeln!(
                s,
                "route {} from {}.{} to {}.{}",
                edge_name(r.edge),
                g.name(r.src.0),
                r.src.1,
                g.name(r.dst.0),
                r.dst.1
            );
            for p in &r.pieces {
                let _ = writeln!(
                    s,
                    "  ({},{}) {} {}->{}{}",
                    p.cell.0,
                    p.cell.1,
                    p.kind,
                    p.entry.name(),
                    p.exit.name(),
                    if p.adapted { " adapter" } else { "" }
                );
            }
        }
        for t in &self.terminals {
            let _ = writeln!(
                s,
                "terminal {} at {}.{} cell ({},{})",
                edge_name(t.edge),
                g.name(t.vertex),
                t.port,
                t.cell.0,
                t.cell.1
            );
        }
        s
    }
}

/// Symmetry placing a vertex gadget's ports clockwise in the order C, A, B,
/// matching the edge assignment of [`vertex_ports`].
fn vertex_symmetry(t: &GadgetTemplate) -> Symmetry {
    let pos = |s: Side| match s {
        Side::Top => 0,
        Side::Right => 1,
        Side::Bottom => 2,
        Side::Left => 3,
    };
    Symmetry::EVERY
        .into_iter()
        .find(|&s| {
            let u = t.transformed(s);
            let c = pos(u.port(Port::C).side);
            (pos(u.port(Port::A).side) + 4 - c) % 4 < (pos(u.port(Port::B).side) + 4 - c) % 4
        })
        .expect("some symmetry orders the ports clockwise")
}

fn step(cell: (usize, usize), side: Side, n: usize) -> Option<(usize, usize)> {
    let (dr, dc) = side.offset();
    let (r, c) = (cell.0 as isize + dr, cell.1 as isize + dc);
    ((1..=n as isize).contains(&r) && (1..=n as isize).contains(&c)).then_some((r as usize, c as usize))
}

fn direction(from: (usize, usize), to: (usize, usize)) -> Side {
    Side::ALL.into_iter().find(|&s| step(from, s, usize::MAX >> 1) == Some(to)).expect("cells are adjacent")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Vertex(usize),
    Route(usize),
    Attach(usize),
}

/// Places every gadget vertex on a coarse grid and routes every edge between
/// two gadgets. `gadgets` maps each non-free vertex to its kind and level.
pub fn layout(
    g: &ConstraintGraph,
    gadgets: &BTreeMap<usize, (GadgetKind, u8)>,
    ports: &BTreeMap<usize, BTreeMap<Port, usize>>,
) -> Result<LayoutPlan, ReduceError> {
    if g.vertex_count() > MAX_VERTICES {
        return Err(ReduceError::TooLarge(g.vertex_count()));
    }
    let mut last = None;
    for (margin, pitch) in SPACINGS {
        match layout_with_spacing(g, gadgets, ports, margin, pitch) {
            Ok(plan) => return Ok(plan),
            Err(e @ ReduceError::RoutingFailure { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| ReduceError::RoutingFailure { edge: String::new(), reason: "no layout".into() }))
}

fn layout_with_spacing(
    g: &ConstraintGraph,
    gadgets: &BTreeMap<usize, (GadgetKind, u8)>,
    ports: &BTreeMap<usize, BTreeMap<Port, usize>>,
    margin: usize,
    pitch: usize,
) -> Result<LayoutPlan, ReduceError> {
    let count = gadgets.len().max(1);
    let width = (1..).find(|w| w * w >= count).unwrap();
    let side = 2 * margin + 1 + pitch * (width - 1);
    let edge_name = |e: usize| format!("{}-{}", g.name(g.edge(e).u), g.name(g.edge(e).v));
    let fail = |e: usize, reason: String| ReduceError::RoutingFailure { edge: edge_name(e), reason };

    let mut vertices = Vec::new();
    for (i, (&x, &(kind, j))) in gadgets.iter().enumerate() {
        let base = instantiate_gadget(kind, j)?;
        let symmetry = vertex_symmetry(&base);
        let cell = (margin + 1 + pitch * (i / width), margin + 1 + pitch * (i % width));
        vertices.push(VertexPlan {
            vertex: x,
            cell,
            kind,
            j,
            symmetry,
            template: base.transformed(symmetry),
            ports: ports[&x].clone(),
        });
    }
    let plan_of: HashMap<usize, usize> = vertices.iter().enumerate().map(|(i, v)| (v.vertex, i)).collect();

    let mut owner: HashMap<(usize, usize), Owner> = HashMap::new();
    for v in &vertices {
        owner.insert(v.cell, Owner::Vertex(v.vertex));
    }
    // Attachment cell of every gadget port, reserved before any routing.
    let mut attach: HashMap<(usize, Port), (usize, usize)> = HashMap::new();
    for v in &vertices {
        for (&p, &e) in &v.ports {
            let cell = step(v.cell, v.template.port(p).side, side)
                .ok_or_else(|| fail(e, "port faces the board edge".into()))?;
            if owner.insert(cell, Owner::Attach(e)).is_some() {
                return Err(fail(e, format!("attachment cell ({},{}) is taken", cell.0, cell.1)));
            }
            attach.insert((v.vertex, p), cell);
        }
    }
    // One more cell straight out keeps each port's exit open.
    for v in &vertices {
        for (&p, &e) in &v.ports {
            let side_out = v.template.port(p).side;
            if let Some(lead) = step(attach[&(v.vertex, p)], side_out, side) {
                owner.entry(lead).or_insert(Owner::Attach(e));
            }
        }
    }

    let mut wanted = Vec::new();
    let mut terminals = Vec::new();
    for (e, edge) in g.edges().iter().enumerate() {
        let ends: Vec<(usize, Port)> = [edge.u, edge.v]
            .into_iter()
            .filter_map(|x| {
                let i = *plan_of.get(&x)?;
                Some((x, *vertices[i].ports.iter().find(|(_, &pe)| pe == e)?.0))
            })
            .collect();
        match ends.as_slice() {
            [] => return Err(fail(e, "both endpoints are free".into())),
            [(x, p)] => terminals.push(Terminal { edge: e, vertex: *x, port: *p, cell: attach[&(*x, *p)] }),
            [a, b] => {
                let role = |(x, p): (usize, Port)| vertices[plan_of[&x]].kind.role(p);
                match (role(*a), role(*b)) {
                    (Role::Output, Role::Input) => wanted.push((e, *a, *b)),
                    (Role::Input, Role::Output) => wanted.push((e, *b, *a)),
                    _ => return Err(fail(e, "joins two ports of the same role".into())),
                }
            }
            _ => unreachable!("an edge has two endpoints"),
        }
    }

    // Routes are laid greedily, so a different order can free a path that
    // an earlier route blocked. Small instances try every order.
    let orders: Vec<Vec<usize>> = if wanted.len() <= MAX_PERMUTED_ROUTES {
        (0..wanted.len()).permutations(wanted.len()).collect()
    } else {
        vec![(0..wanted.len()).collect(), (0..wanted.len()).rev().collect()]
    };
    let mut first_failure = None;
    'orders: for order in orders {
        let mut owner = owner.clone();
        let mut routes = Vec::new();
        for &i in &order {
            let (e, src, dst) = wanted[i];
            let (from, to) = (attach[&src], attach[&dst]);
            let Some(cells) = route_cells(&owner, side, e, (from, src.0), (to, dst.0)) else {
                first_failure.get_or_insert_with(|| fail(e, format!("no free path at margin {margin}, pitch {pitch}")));
                continue 'orders;
            };
            for &c in &cells {
                owner.insert(c, Owner::Route(e));
            }
            let pieces = route_pieces(&vertices[plan_of[&src.0]], src.1, &vertices[plan_of[&dst.0]], dst.1, &cells)
                .map_err(|err| fail(e, err.to_string()))?;
            routes.push(Route { edge: e, src, dst, pieces });
        }
        routes.sort_by_key(|r| r.edge);
        return Ok(LayoutPlan { side, vertices, routes, terminals });
    }
    Err(first_failure.expect("a failed order records its edge"))
}

/// Shortest path of grid cells from `from` to `to`. Every cell must be free
/// or reserved for this edge, and every neighbour must be lattice, part of
/// this route, or the gadget the route attaches to at that end.
fn route_cells(
    owner: &HashMap<(usize, usize), Owner>,
    side: usize,
    e: usize,
    (from, xs): ((usize, usize), usize),
    (to, xd): ((usize, usize), usize),
) -> Option<Vec<(usize, usize)>> {
    let allowed = |c: (usize, usize)| {
        match owner.get(&c) {
            None => {}
            Some(Owner::Attach(a)) if *a == e => {}
            _ => return false,
        }
        let beside = Side::ALL.into_iter().filter_map(|s| step(c, s, side)).all(|n| match owner.get(&n) {
            None => true,
            Some(Owner::Attach(a)) => *a == e,
            Some(Owner::Vertex(x)) => (c == from && *x == xs) || (c == to && *x == xd),
            Some(Owner::Route(_)) => false,
        });
        // Keep a moat around other gadgets and their ports so later routes
        // can still leave them.
        let diagonal = c == from
            || c == to
            || [(-1, -1), (-1, 1), (1, -1), (1, 1)].into_iter().all(|(dr, dc)| {
                let (r, k) = (c.0 as isize + dr, c.1 as isize + dc);
                match owner.get(&(r as usize, k as usize)) {
                    Some(Owner::Attach(a)) => *a == e,
                    Some(Owner::Vertex(x)) => *x == xs || *x == xd,
                    _ => true,
                }
            });
        beside && diagonal
    };
    if !allowed(from) || !allowed(to) {
        return None;
    }
    let mut prev: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, from);
    while let Some(c) = queue.pop_front() {
        if c == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[&cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for s in Side::ALL {
            if let Some(n) = step(c, s, side) {
                if !prev.contains_key(&n) && allowed(n) {
                    prev.insert(n, c);
                    queue.push_back(n);
                }
            }
        }
    }
    None
}

/// Chooses a piece per route cell. Levels run at the source's activated
/// exponent until the single CONNECTION, placed on the last straight cell
/// (or the last cell if the route never runs straight), and at the
/// destination's input base after it.
fn route_pieces(
    src: &VertexPlan,
    sp: Port,
    dst: &VertexPlan,
    dp: Port,
    cells: &[(usize, usize)],
) -> Result<Vec<RoutePiece>, GadgetError> {
    let s_spec = src.template.port(sp);
    let d_spec = dst.template.port(dp);
    let k = s_spec.activation.required.unwrap_or(s_spec.activation.base + 1);
    let k2 = d_spec.activation.base;
    let m = cells.len();
    let entries: Vec<Side> =
        (0..m).map(|i| if i == 0 { s_spec.side.opposite() } else { direction(cells[i], cells[i - 1]) }).collect();
    let exits: Vec<Side> =
        (0..m).map(|i| if i + 1 == m { d_spec.side.opposite() } else { direction(cells[i], cells[i + 1]) }).collect();
    let straight = |i: usize| entries[i] == exits[i].opposite();
    let conn = (k != k2).then(|| (0..m).rev().find(|&i| straight(i)).unwrap_or(m - 1));
    let mut pieces = Vec::with_capacity(m);
    let mut offset = s_spec.offset();
    for i in 0..m {
        let level = match conn {
            Some(c) if i > c => k2,
            _ => k,
        };
        let kind = match conn {
            Some(c) if i == c => GadgetKind::Connection(k, k2),
            _ if straight(i) => GadgetKind::Line(level),
            _ => GadgetKind::Corner(level),
        };
        let want = (i + 1 == m).then(|| d_spec.offset());
        let (template, adapted) = fitted_piece(kind, (entries[i], offset), (exits[i], want))?;
        offset = template.port(Port::C).offset();
        pieces.push(RoutePiece { cell: cells[i], kind, entry: entries[i], exit: exits[i], adapted, template });
    }
    Ok(pieces)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionOutput {
    pub board: Board,
    pub oracle: OracleProgram,
    pub goal: Board,
    pub placement: LayoutPlan,
    /// Gadget kind and level per vertex name.
    pub vertex_gadgets: BTreeMap<String, (GadgetKind, u8)>,
    pub coloring: Coloring,
}

impl ReductionOutput {
    /// Writes `board.txt`, `goal.txt`, `oracle.txt` and `placement.txt`.
    pub fn write_bundle(&self, g: &ConstraintGraph, dir: &Path) -> Result<(), ReduceError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("board.txt"), self.board.to_text())?;
        std::fs::write(dir.join("goal.txt"), self.goal.to_text())?;
        std::fs::write(dir.join("oracle.txt"), self.oracle.to_text())?;
        std::fs::write(dir.join("placement.txt"), self.placement.to_text(g))?;
        Ok(())
    }
}

fn origin(cell: (usize, usize)) -> (usize, usize) {
    ((cell.0 - 1) * WINDOW + 1, (cell.1 - 1) * WINDOW + 1)
}

fn check_orientation(g: &ConstraintGraph, o: &Orientation, what: &str) -> Result<(), ReduceError> {
    if !g.covers(o) || !ncl::validate_configuration(g, o) {
        return Err(ReduceError::InvalidOrientation(format!("{what} orientation is not a valid configuration")));
    }
    Ok(())
}

/// Whether a routed edge has carried its activation to the destination.
fn route_active(g: &ConstraintGraph, o: &Orientation, r: &Route) -> bool {
    o.points_into(g, r.edge, r.dst.0)
}

/// The board encoding orientation `o` on a laid-out instance.
pub fn encode(g: &ConstraintGraph, plan: &LayoutPlan, o: &Orientation) -> Board {
    let n = plan.board_size();
    let mut b = lattice_fill(n, LATTICE_ANCHOR);
    let put = |b: &mut Board, at: (usize, usize), t: &GadgetTemplate| {
        for r in 1..=WINDOW {
            for c in 1..=WINDOW {
                *b = b.with(at.0 + r - 1, at.1 + c - 1, t.layout.get(r, c));
            }
        }
    };
    let set_port = |b: &mut Board, at: (usize, usize), t: &GadgetTemplate, p: Port, on: bool| {
        let spec = t.port(p);
        let e = if on { spec.activation.required.unwrap_or(spec.activation.base + 1) } else { spec.activation.base };
        *b = b.with(at.0 + spec.cell.0 - 1, at.1 + spec.cell.1 - 1, e);
    };
    for v in &plan.vertices {
        put(&mut b, origin(v.cell), &v.template);
    }
    for r in &plan.routes {
        let on = route_active(g, o, r);
        let vs = plan.vertices.iter().find(|v| v.vertex == r.src.0).unwrap();
        let vd = plan.vertices.iter().find(|v| v.vertex == r.dst.0).unwrap();
        set_port(&mut b, origin(vs.cell), &vs.template, r.src.1, on);
        set_port(&mut b, origin(vd.cell), &vd.template, r.dst.1, on);
        for p in &r.pieces {
            let at = origin(p.cell);
            put(&mut b, at, &p.template);
            set_port(&mut b, at, &p.template, Port::A, on);
            set_port(&mut b, at, &p.template, Port::C, on);
        }
    }
    for t in &plan.terminals {
        let v = plan.vertices.iter().find(|v| v.vertex == t.vertex).unwrap();
        let facing_in = o.points_into(g, t.edge, t.vertex);
        let on = v.kind.facing(t.port, true)
            == if facing_in { crate::gadgets::Facing::In } else { crate::gadgets::Facing::Out };
        let at = origin(v.cell);
        set_port(&mut b, at, &v.template, t.port, on);
        let spec = v.template.port(t.port);
        if v.kind.role(t.port) == Role::Input && !on {
            let (dr, dc) = spec.side.offset();
            let r = (at.0 + spec.cell.0 - 1) as isize + dr;
            let c = (at.1 + spec.cell.1 - 1) as isize + dc;
            b = b.with(r as usize, c as usize, spec.activation.base);
        }
    }
    b
}

/// The full pipeline: colouring, levels, gadget selection, layout and
/// emission of start board, goal board and oracle.
pub fn emit_instance(g: &ConstraintGraph, o0: &Orientation, of: &Orientation) -> Result<ReductionOutput, ReduceError> {
    check_orientation(g, o0, "start")?;
    check_orientation(g, of, "goal")?;
    let coloring = four_color(g)?;
    let levels = assign_levels(&coloring);
    let mut gadgets = BTreeMap::new();
    let mut ports = BTreeMap::new();
    for (x, &j) in levels.iter().enumerate() {
        if let Some(kind) = select_vertex_gadget(g, x, o0) {
            gadgets.insert(x, (kind, j));
            ports.insert(x, vertex_ports(g, x, o0));
        }
    }
    let plan = layout(g, &gadgets, &ports)?;
    let n = plan.board_size();
    let mut rules: Vec<OracleRule> = Vec::new();
    for v in &plan.vertices {
        rules.extend(v.template.rules_at(origin(v.cell)));
    }
    for p in plan.routes.iter().flat_map(|r| &r.pieces) {
        rules.extend(p.template.rules_at(origin(p.cell)));
    }
    let oracle = OracleProgram::new(rules, vec![LatticeRegion::new((1, 1), (n, n), LATTICE_ANCHOR)])
        .map_err(ReduceError::ConflictingOracleRules)?;
    let vertex_gadgets = gadgets.iter().map(|(&x, &kj)| (g.name(x).to_string(), kj)).collect();
    Ok(ReductionOutput {
        board: encode(g, &plan, o0),
        goal: encode(g, &plan, of),
        oracle,
        placement: plan,
        vertex_gadgets,
        coloring,
    })
}

/// NCL reachability next to board-level reachability on the emitted
/// instance.
#[derive(Debug)]
pub struct CrossCheck {
    pub ncl: Option<Vec<usize>>,
    pub board: Result<SolveResult, SolverError>,
    /// Whether a board witness, if any, replays exactly to the goal.
    pub witness_replays: bool,
}

impl CrossCheck {
    pub fn board_reachable(&self) -> Option<bool> {
        self.board.as_ref().ok().map(|r| r.outcome.is_found())
    }

    /// Both searches finished and agree, and any board witness replays.
    pub fn agrees(&self) -> bool {
        self.witness_replays && self.board_reachable() == Some(self.ncl.is_some())
    }
}

pub fn cross_check(
    g: &ConstraintGraph,
    o0: &Orientation,
    of: &Orientation,
    bound: usize,
    cap: usize,
    lemma1_cut: bool,
) -> Result<(ReductionOutput, CrossCheck), ReduceError> {
    let out = emit_instance(g, o0, of)?;
    let ncl = ncl::ncl_config_to_config(g, o0, of, ncl::DEFAULT_NCL_CAP)
        .map_err(|e| ReduceError::InvalidOrientation(e.to_string()))?;
    let board = bounded_config_to_config(&out.board, &out.oracle, &out.goal, bound, cap, lemma1_cut);
    let witness_replays = match &board {
        Ok(r) => r.outcome.witness().is_none_or(|w| replay(&out.board, &out.oracle, w).is_ok_and(|b| b == out.goal)),
        Err(_) => true,
    };
    Ok((out, CrossCheck { ncl, board, witness_replays }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncl::{Edge, LoadOptions};
    use crate::oracle::lattice_exponent;
    use proptest::prelude::*;

    fn free() -> LoadOptions {
        LoadOptions::with_free_ends()
    }

    fn proper(edges: &[(usize, usize)], c: &Coloring) -> bool {
        edges.iter().all(|&(u, v)| c[u] != c[v])
    }

    #[test]
    fn small_colourings() {
        assert_eq!(color_graph(1, &[]).unwrap(), vec![0]);
        let tri = [(0, 1), (1, 2), (2, 0)];
        let c = color_graph(3, &tri).unwrap();
        assert!(proper(&tri, &c));
        let mut k5 = Vec::new();
        for u in 0..5 {
            for v in u + 1..5 {
                k5.push((u, v));
            }
        }
        assert!(matches!(color_graph(5, &k5), Err(ReduceError::NotFourColorable)));
        assert!(matches!(color_graph(65, &[]), Err(ReduceError::TooLarge(65))));
    }

    #[test]
    fn levels_follow_colours() {
        assert_eq!(assign_levels(&vec![0, 3, 1]), vec![4, 7, 5]);
    }

    // Planar triangulations grown by inserting a vertex into a face.
    fn triangulation(n: usize, picks: &[usize]) -> Vec<(usize, usize)> {
        let mut faces = vec![[0, 1, 2]];
        let mut edges = vec![(0, 1), (1, 2), (0, 2)];
        for (x, &p) in (3..n).zip(picks.iter().cycle()) {
            let f = faces.swap_remove(p % faces.len());
            for &y in &f {
                edges.push((y, x));
            }
            faces.extend([[f[0], f[1], x], [f[1], f[2], x], [f[0], f[2], x]]);
        }
        edges
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn planar_graphs_get_proper_colourings(n in 3usize..=64, picks in prop::collection::vec(0usize..1000, 1..8)) {
            let edges = triangulation(n, &picks);
            let c = color_graph(n, &edges).unwrap();
            prop_assert!(proper(&edges, &c));
            prop_assert!(c.iter().all(|&x| x < 4));
        }
    }

    pub(crate) const SINGLE_AND: &str = "\
vertex x
vertex a
vertex b
vertex c
edge a x weight=1
edge b x weight=1
edge x c weight=2
rotation x: c a b
";

    fn orient(g: &ConstraintGraph, heads: &[&str]) -> Orientation {
        let bits: Vec<bool> = g.edges().iter().zip(heads).map(|(e, h)| g.name(e.v) == *h).collect();
        Orientation::new(&bits)
    }

    #[test]
    fn gadget_selection() {
        let g = ConstraintGraph::parse(SINGLE_AND, free()).unwrap();
        let x = g.vertex("x").unwrap();
        let active = orient(&g, &["x", "x", "c"]);
        assert_eq!(select_vertex_gadget(&g, x, &active), Some(GadgetKind::RevAndOr));
        let idle = orient(&g, &["x", "a", "x"]);
        assert_eq!(select_vertex_gadget(&g, x, &idle), Some(GadgetKind::JAnd));
        assert_eq!(select_vertex_gadget(&g, g.vertex("a").unwrap(), &idle), None);
        let ports = vertex_ports(&g, x, &idle);
        assert_eq!(ports[&Port::C], 2);
        assert_eq!((ports[&Port::A], ports[&Port::B]), (0, 1));

        let or = SINGLE_AND.replace("weight=1", "weight=2");
        let g = ConstraintGraph::parse(&or, free()).unwrap();
        let both_in = orient(&g, &["x", "x", "c"]);
        assert_eq!(select_vertex_gadget(&g, x, &both_in), Some(GadgetKind::RevAndOr));
        let one_in = orient(&g, &["x", "a", "c"]);
        assert_eq!(select_vertex_gadget(&g, x, &one_in), Some(GadgetKind::JOr));
    }

    #[test]
    fn single_vertex_instance() {
        let g = ConstraintGraph::parse(SINGLE_AND, free()).unwrap();
        let o = orient(&g, &["x", "x", "c"]);
        let out = emit_instance(&g, &o, &o).unwrap();
        assert_eq!(out.placement.side, 3);
        assert_eq!(out.placement.vertices[0].cell, (2, 2));
        assert_eq!(out.vertex_gadgets["x"], (GadgetKind::RevAndOr, 4));
        assert!(out.placement.routes.is_empty());
        assert_eq!(out.placement.terminals.len(), 3);
        assert_eq!(out.board, out.goal);
        lattice_outside_windows(&out);
    }

    fn lattice_outside_windows(out: &ReductionOutput) {
        let plan = &out.placement;
        let mut taken: Vec<(usize, usize)> = plan.vertices.iter().map(|v| v.cell).collect();
        taken.extend(plan.routes.iter().flat_map(|r| r.pieces.iter().map(|p| p.cell)));
        taken.extend(plan.terminals.iter().map(|t| t.cell));
        let n = plan.board_size();
        for r in 1..=n {
            for c in 1..=n {
                let cell = ((r - 1) / WINDOW + 1, (c - 1) / WINDOW + 1);
                if !taken.contains(&cell) {
                    assert_eq!(out.board.get(r, c), lattice_exponent(LATTICE_ANCHOR, (1, 1), r, c), "({r},{c})");
                }
            }
        }
    }

    pub(crate) const TWO_VERTICES: &str = "\
vertex x
vertex y
vertex a
vertex b
vertex c
vertex d
edge a x weight=1
edge b x weight=1
edge x y weight=2
edge y c weight=2
edge y d weight=2
rotation x: y a b
rotation y: c d x
";

    #[test]
    fn two_vertices_share_one_connection() {
        let g = ConstraintGraph::parse(TWO_VERTICES, free()).unwrap();
        // x idle (its weight-2 edge points in), y an OR whose C edge y-c
        // points out; x-y is then A at y.
        let o = orient(&g, &["x", "x", "x", "c", "y"]);
        assert!(ncl::validate_configuration(&g, &o));
        let out = emit_instance(&g, &o, &o).unwrap();
        assert_eq!(out.placement.routes.len(), 1);
        let route = &out.placement.routes[0];
        let conns: Vec<_> =
            route.pieces.iter().filter(|p| matches!(p.kind, GadgetKind::Connection(..))).map(|p| p.kind).collect();
        assert_eq!(conns.len(), 1);
        let (jx, jy) = (out.vertex_gadgets["x"].1, out.vertex_gadgets["y"].1);
        assert_ne!(jx, jy);
        assert_eq!(conns[0], GadgetKind::Connection(jx + 5, jy));
        assert_eq!(out.placement.to_text(&g).matches("connection").count(), 1);
        lattice_outside_windows(&out);
    }

    #[test]
    fn goal_differs_where_the_edge_turns() {
        let g = ConstraintGraph::parse(TWO_VERTICES, free()).unwrap();
        let o0 = orient(&g, &["x", "x", "x", "c", "y"]);
        // Reversing x-y toward y activates the route.
        let of = o0.reversed(2);
        assert!(ncl::validate_configuration(&g, &of));
        let out = emit_instance(&g, &o0, &of).unwrap();
        assert_ne!(out.board, out.goal);
        // Gadget choice depends on the start orientation only.
        let again = emit_instance(&g, &o0, &of).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn k4_routes_are_disjoint() {
        let names: Vec<String> = ["p", "q", "r", "s"].iter().map(|s| s.to_string()).collect();
        let mut edges = Vec::new();
        for u in 0..4 {
            for v in u + 1..4 {
                edges.push(Edge { u, v, weight: 2 });
            }
        }
        // Clockwise rotations of the plane drawing with s inside p, q, r.
        let rot = vec![vec![1, 3, 2], vec![2, 3, 0], vec![0, 3, 1], vec![0, 1, 2]];
        let g = ConstraintGraph::new(names, edges, Some(rot), LoadOptions::default()).unwrap();
        assert_eq!(g.embedding_is_planar(), Some(true));
        // Six routes need six outputs: two reversible gadgets and two OR gadgets.
        let kinds = [GadgetKind::RevAndOr, GadgetKind::RevAndOr, GadgetKind::JOr, GadgetKind::JOr];
        let colors = four_color(&g).unwrap();
        let mut found = None;
        // Try C-edge choices until every edge joins an output to an input.
        'search: for c0 in 0..3 {
            for c1 in 0..3 {
                for c2 in 0..3 {
                    for c3 in 0..3 {
                        let cs = [c0, c1, c2, c3];
                        let mut gadgets = BTreeMap::new();
                        let mut ports = BTreeMap::new();
                        for x in 0..4 {
                            let rot = g.rotation(x);
                            let i = cs[x];
                            ports.insert(
                                x,
                                BTreeMap::from([
                                    (Port::C, rot[i]),
                                    (Port::A, rot[(i + 1) % 3]),
                                    (Port::B, rot[(i + 2) % 3]),
                                ]),
                            );
                            gadgets.insert(x, (kinds[x], 4 + colors[x]));
                        }
                        if let Ok(plan) = layout(&g, &gadgets, &ports) {
                            found = Some(plan);
                            break 'search;
                        }
                    }
                }
            }
        }
        let plan = found.expect("some port assignment routes K4");
        assert_eq!(plan.routes.len(), 6);
        let mut seen = std::collections::HashSet::new();
        for r in &plan.routes {
            for p in &r.pieces {
                assert!(seen.insert(p.cell), "cell {:?} shared", p.cell);
                assert!(plan.vertices.iter().all(|v| v.cell != p.cell));
            }
        }
    }

    #[test]
    fn invalid_orientation_is_rejected() {
        let g = ConstraintGraph::parse(SINGLE_AND, free()).unwrap();
        let bad = orient(&g, &["x", "a", "c"]);
        let ok = orient(&g, &["x", "x", "c"]);
        assert!(matches!(emit_instance(&g, &bad, &ok), Err(ReduceError::InvalidOrientation(_))));
    }
}
