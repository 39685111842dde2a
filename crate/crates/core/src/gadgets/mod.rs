//! Gadget catalogue and contract verifier.
//!
//! Every gadget is a 4×4 window whose unused cells follow the lattice pattern.
//! Input ports are activated by a feeder tile sitting in the neighbouring
//! window on the port's side: the first move toward the port merges the two,
//! raising the port by one. Output ports hand their activated tile to the next
//! window the same way, so an output's activated exponent equals the base of
//! the input it feeds.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::engine::{content_lines, parse_board_lines, run_turn, Board, EngineError, Move, TurnError};
use crate::oracle::{self, lattice_exponent, Item, LatticeRegion, OracleError, OracleProgram, OracleRule};
use crate::solver::{bounded_search, BfsLimits, SearchStats, SolverError, DEFAULT_STATE_CAP};

pub mod synth;

pub const WINDOW: usize = 4;
/// Lattice exponent at the top-left cell of every window.
pub const LATTICE_ANCHOR: u8 = 1;
pub const LEVELS: std::ops::RangeInclusive<u8> = 4..=7;
/// Largest connector level; keeps `k + 4` well inside the exponent cap.
pub const MAX_PIECE_LEVEL: u8 = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GadgetError {
    #[error("{kind} is not available at level {level}")]
    UnsupportedLevel { kind: GadgetKind, level: u8 },
    #[error("window at ({0},{1}) does not fit on the board")]
    WindowOutOfBounds(usize, usize),
    #[error("move {index} is illegal or conflicts: {error}")]
    IllegalMove { index: usize, error: TurnError },
    #[error(transparent)]
    StateExplosion(#[from] SolverError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid template: {0}")]
    Invalid(String),
}

impl From<EngineError> for GadgetError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Parse { line, msg } => GadgetError::Parse { line, msg },
            other => GadgetError::Invalid(other.to_string()),
        }
    }
}

impl From<OracleError> for GadgetError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Parse { line, msg } => GadgetError::Parse { line, msg },
            other => GadgetError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GadgetKind {
    JAnd,
    JOr,
    RevAndOr,
    Connection(u8, u8),
    Line(u8),
    Corner(u8),
    Lattice,
}

impl GadgetKind {
    /// Vertex gadgets are parameterised by a level `j`; pieces by their own `k`.
    pub fn is_vertex(self) -> bool {
        matches!(self, GadgetKind::JAnd | GadgetKind::JOr | GadgetKind::RevAndOr)
    }

    pub fn ports(self) -> &'static [Port] {
        match self {
            GadgetKind::JAnd | GadgetKind::JOr | GadgetKind::RevAndOr => &[Port::A, Port::B, Port::C],
            GadgetKind::Connection(..) | GadgetKind::Line(_) | GadgetKind::Corner(_) => &[Port::A, Port::C],
            GadgetKind::Lattice => &[],
        }
    }

    pub fn role(self, port: Port) -> Role {
        match (self, port) {
            (GadgetKind::RevAndOr, Port::C) => Role::Input,
            (GadgetKind::RevAndOr, _) => Role::Output,
            (_, Port::C) => Role::Output,
            _ => Role::Input,
        }
    }

    /// Facing of a port given whether it is activated. Ports of connection
    /// pieces carry no orientation and report [`Facing::Activated`] or
    /// [`Facing::In`].
    pub fn facing(self, port: Port, activated: bool) -> Facing {
        let flip = |on: Facing, off: Facing| if activated { on } else { off };
        match (self, port) {
            (GadgetKind::JAnd | GadgetKind::JOr, Port::C) => flip(Facing::Out, Facing::In),
            (GadgetKind::JAnd | GadgetKind::JOr, _) => flip(Facing::In, Facing::Out),
            (GadgetKind::RevAndOr, Port::C) => flip(Facing::In, Facing::Out),
            (GadgetKind::RevAndOr, _) => flip(Facing::Out, Facing::In),
            _ => flip(Facing::Activated, Facing::In),
        }
    }
}

impl fmt::Display for GadgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GadgetKind::JAnd => write!(f, "j_and"),
            GadgetKind::JOr => write!(f, "j_or"),
            GadgetKind::RevAndOr => write!(f, "rev_andor"),
            GadgetKind::Connection(k, k2) => write!(f, "connection k={k} k'={k2}"),
            GadgetKind::Line(k) => write!(f, "line k={k}"),
            GadgetKind::Corner(k) => write!(f, "corner k={k}"),
            GadgetKind::Lattice => write!(f, "lattice"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    A,
    B,
    C,
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Port::A => "A",
            Port::B => "B",
            Port::C => "C",
        })
    }
}

impl std::str::FromStr for Port {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "A" => Ok(Port::A),
            "B" => Ok(Port::B),
            "C" => Ok(Port::C),
            _ => Err(format!("unknown port `{s}`")),
        }
    }
}

/// The window edge a port sits on, which is also where its partner lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Top, Side::Bottom];

    pub fn offset(self) -> (isize, isize) {
        match self {
            Side::Left => (0, -1),
            Side::Right => (0, 1),
            Side::Top => (-1, 0),
            Side::Bottom => (1, 0),
        }
    }

    /// The move that pushes a tile from beyond this side into the window.
    pub fn inward(self) -> Move {
        match self {
            Side::Left => Move::Right,
            Side::Right => Move::Left,
            Side::Top => Move::Down,
            Side::Bottom => Move::Up,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Top => Side::Bottom,
            Side::Bottom => Side::Top,
        }
    }

    /// Whether window cell `(r, c)` lies on this edge.
    pub fn borders(self, (r, c): (usize, usize)) -> bool {
        match self {
            Side::Left => c == 1,
            Side::Right => c == WINDOW,
            Side::Top => r == 1,
            Side::Bottom => r == WINDOW,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Top => "top",
            Side::Bottom => "bottom",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        Side::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Facing {
    In,
    Out,
    Activated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActivationPredicate {
    pub base: u8,
    /// The exponent a completed activation produces; used by the verifier.
    pub required: Option<u8>,
}

impl ActivationPredicate {
    pub fn is_activated(&self, e: u8) -> bool {
        e != self.base
    }

    pub fn is_complete(&self, e: u8) -> bool {
        match self.required {
            Some(r) => e == r,
            None => self.is_activated(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortSpec {
    pub cell: (usize, usize),
    pub side: Side,
    pub activation: ActivationPredicate,
}

impl PortSpec {
    /// Position along the port's side: the row for left and right ports,
    /// the column for top and bottom ones.
    pub fn offset(&self) -> usize {
        match self.side {
            Side::Left | Side::Right => self.cell.0,
            Side::Top | Side::Bottom => self.cell.1,
        }
    }

    /// Window-local cell just outside the port, where a feeder sits.
    /// Coordinates are offset by one so the ring around the window stays
    /// non-negative.
    fn outside(&self) -> (usize, usize) {
        let (dr, dc) = self.side.offset();
        ((self.cell.0 as isize + 1 + dr) as usize, (self.cell.1 as isize + 1 + dc) as usize)
    }
}

/// A named move sequence exercising the template, with the ports fed beforehand.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReferenceSequence {
    pub name: String,
    pub fed: Vec<Port>,
    pub moves: Vec<Move>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GadgetTemplate {
    pub kind: GadgetKind,
    /// Level for vertex gadgets.
    pub j: Option<u8>,
    pub layout: Board,
    pub ports: BTreeMap<Port, PortSpec>,
    /// Oracle rules in window-local coordinates.
    pub rules: Vec<OracleRule>,
    pub sequences: Vec<ReferenceSequence>,
}

impl GadgetTemplate {
    pub fn port(&self, p: Port) -> &PortSpec {
        &self.ports[&p]
    }

    pub fn role(&self, p: Port) -> Role {
        self.kind.role(p)
    }

    pub fn inputs(&self) -> Vec<Port> {
        self.ports.keys().copied().filter(|&p| self.role(p) == Role::Input).collect()
    }

    pub fn outputs(&self) -> Vec<Port> {
        self.ports.keys().copied().filter(|&p| self.role(p) == Role::Output).collect()
    }

    /// No two orthogonally adjacent tiles share an exponent.
    pub fn is_rigid(&self) -> bool {
        is_rigid(&self.layout)
    }

    pub fn validate(&self) -> Result<(), GadgetError> {
        let bad = |m: String| Err(GadgetError::Invalid(m));
        if self.layout.size() != WINDOW {
            return bad(format!("layout must be {WINDOW}x{WINDOW}"));
        }
        let want: Vec<Port> = self.kind.ports().to_vec();
        let have: Vec<Port> = self.ports.keys().copied().collect();
        if want != have {
            return bad(format!("{} needs ports {want:?}, found {have:?}", self.kind));
        }
        let mut cells: Vec<(usize, usize)> = Vec::new();
        for (p, spec) in &self.ports {
            if !self.layout.in_bounds(spec.cell.0, spec.cell.1) {
                return bad(format!("port {p} lies outside the window"));
            }
            if !spec.side.borders(spec.cell) {
                return bad(format!("port {p} is not on the {} edge", spec.side.name()));
            }
            if spec.activation.base == 0 {
                return bad(format!("port {p} has base exponent 0"));
            }
            if self.layout.get(spec.cell.0, spec.cell.1) != spec.activation.base {
                return bad(format!("port {p} cell does not hold its base exponent"));
            }
            if cells.contains(&spec.cell) {
                return bad(format!("port {p} shares a cell with another port"));
            }
            cells.push(spec.cell);
        }
        for r in &self.rules {
            let in_window = |(a, b): (usize, usize)| (1..=WINDOW).contains(&a) && (1..=WINDOW).contains(&b);
            if !in_window(r.cell) || r.response.iter().any(|p| !in_window((p.row, p.col))) {
                return bad(format!("rule `{r}` leaves the window"));
            }
        }
        OracleProgram::new(self.rules.clone(), Vec::new())?;
        Ok(())
    }

    /// Template rules moved to a window whose top-left cell is `origin`.
    pub fn rules_at(&self, origin: (usize, usize)) -> Vec<OracleRule> {
        self.rules.iter().map(|r| r.translated(origin.0 - 1, origin.1 - 1)).collect()
    }

    /// The window inside one ring of lattice, with feeders next to `fed`
    /// input ports. The whole board is a single lattice region, so any
    /// vacancy not claimed by a template rule is refilled with the pattern.
    pub fn harness(&self, fed: &[Port]) -> (Board, OracleProgram) {
        let n = WINDOW + 2;
        let mut board = lattice_fill(n, LATTICE_ANCHOR);
        for r in 1..=WINDOW {
            for c in 1..=WINDOW {
                board = board.with(r + 1, c + 1, self.layout.get(r, c));
            }
        }
        for p in fed {
            let spec = self.port(*p);
            let (r, c) = spec.outside();
            board = board.with(r, c, spec.activation.base);
        }
        let program =
            OracleProgram::new(self.rules_at((2, 2)), vec![LatticeRegion::new((1, 1), (n, n), LATTICE_ANCHOR)])
                .expect("template rules were validated");
        (board, program)
    }

    /// Port exponents read from a harness board.
    pub fn harness_port(&self, board: &Board, p: Port) -> u8 {
        let (r, c) = self.port(p).cell;
        board.get(r + 1, c + 1)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self.j {
            Some(j) => s.push_str(&format!("kind {} j={j}\n", self.kind)),
            None => s.push_str(&format!("kind {}\n", self.kind)),
        }
        s.push_str(&self.layout.to_text());
        for (p, spec) in &self.ports {
            s.push_str(&format!(
                "port {p} ({},{}) side={} base={}",
                spec.cell.0,
                spec.cell.1,
                spec.side.name(),
                spec.activation.base
            ));
            if let Some(e) = spec.activation.required {
                s.push_str(&format!(" activated={e}"));
            }
            s.push('\n');
        }
        for r in &self.rules {
            s.push_str(&format!("{r}\n"));
        }
        for q in &self.sequences {
            let fed: Vec<String> = q.fed.iter().map(|p| p.to_string()).collect();
            let fed = if fed.is_empty() { "-".to_string() } else { fed.join(",") };
            s.push_str(&format!("sequence {} fed={fed} moves={}\n", q.name, crate::engine::format_moves(&q.moves)));
        }
        s
    }

    pub fn parse(text: &str) -> Result<GadgetTemplate, GadgetError> {
        let mut lines = content_lines(text);
        let (line, head) = lines.next().ok_or(GadgetError::Parse { line: 1, msg: "empty template".into() })?;
        let (kind, j) =
            parse_kind(head).ok_or_else(|| GadgetError::Parse { line, msg: format!("bad kind line `{head}`") })?;
        let layout = parse_board_lines(&mut lines)?;
        let mut ports = BTreeMap::new();
        let mut rules = Vec::new();
        let mut sequences = Vec::new();
        for (line, l) in lines {
            let err = |msg: String| GadgetError::Parse { line, msg };
            if let Some(c) = port_re().captures(l) {
                let p: Port = c[1].parse().map_err(err)?;
                let num = |s: &str| s.parse::<u8>().map_err(|_| err(format!("bad number `{s}`")));
                let side = Side::parse(&c[4]).ok_or_else(|| err(format!("bad side `{}`", &c[4])))?;
                let required = c.get(6).map(|m| num(m.as_str())).transpose()?;
                let spec = PortSpec {
                    cell: (num(&c[2])? as usize, num(&c[3])? as usize),
                    side,
                    activation: ActivationPredicate { base: num(&c[5])?, required },
                };
                if ports.insert(p, spec).is_some() {
                    return Err(err(format!("port {p} declared twice")));
                }
            } else if let Some(c) = seq_re().captures(l) {
                let fed = if &c[2] == "-" {
                    Vec::new()
                } else {
                    c[2].split(',').map(|s| s.trim().parse::<Port>()).collect::<Result<Vec<_>, _>>().map_err(err)?
                };
                let moves = crate::engine::parse_moves(&c[3]).map_err(err)?;
                sequences.push(ReferenceSequence { name: c[1].to_string(), fed, moves });
            } else if oracle::is_oracle_line(l) {
                match oracle::parse_line(line, l)? {
                    Item::Rule(r) => rules.push(r),
                    Item::Lattice(_) => return Err(err("templates may not declare lattice regions".into())),
                }
            } else {
                return Err(err(format!("unrecognised line `{l}`")));
            }
        }
        let t = GadgetTemplate { kind, j, layout, ports, rules, sequences };
        t.validate()?;
        Ok(t)
    }
}

fn port_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^port\s+(\w)\s+\(\s*(\d+)\s*,\s*(\d+)\s*\)\s+side=(\w+)\s+base=(\d+)(?:\s+activated=(\d+))?$")
            .unwrap()
    })
}

fn seq_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^sequence\s+(\S+)\s+fed=(\S+)\s+moves=(\S+)$").unwrap())
}

fn kind_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^kind\s+(j_and|j_or|rev_andor|connection|line|corner|lattice)(?:\s+j=(\d+))?(?:\s+k=(\d+))?(?:\s+k'=(\d+))?$")
            .unwrap()
    })
}

fn parse_kind(l: &str) -> Option<(GadgetKind, Option<u8>)> {
    let c = kind_re().captures(l)?;
    let get = |i: usize| c.get(i).map(|m| m.as_str().parse::<u8>().ok());
    let (j, k, k2) = (get(2), get(3), get(4));
    let (j, k, k2) = (j.unwrap_or(Some(0))?, k.unwrap_or(Some(0))?, k2.unwrap_or(Some(0))?);
    let kind = match &c[1] {
        "j_and" => GadgetKind::JAnd,
        "j_or" => GadgetKind::JOr,
        "rev_andor" => GadgetKind::RevAndOr,
        "connection" => GadgetKind::Connection(k, k2),
        "line" => GadgetKind::Line(k),
        "corner" => GadgetKind::Corner(k),
        _ => GadgetKind::Lattice,
    };
    let j = kind.is_vertex().then_some(j);
    if kind.is_vertex() && j == Some(0) {
        return None;
    }
    Some((kind, j))
}

/// Lattice fill of an `n`×`n` board anchored at (1,1).
pub fn lattice_fill(n: usize, anchor: u8) -> Board {
    let rows: Vec<Vec<u8>> =
        (1..=n).map(|r| (1..=n).map(|c| lattice_exponent(anchor, (1, 1), r, c)).collect()).collect();
    Board::from_rows(&rows).expect("lattice rows are well formed")
}

/// No two orthogonally adjacent nonzero cells share an exponent.
pub fn is_rigid(b: &Board) -> bool {
    let n = b.size();
    (1..=n).all(|r| {
        (1..=n).all(|c| {
            let e = b.get(r, c);
            e == 0 || ((c == n || b.get(r, c + 1) != e) && (r == n || b.get(r + 1, c) != e))
        })
    })
}

/// True iff all four moves leave the `n`×`n` lattice fill unchanged.
pub fn verify_lattice_rigidity(n: usize) -> bool {
    board_is_frozen(&lattice_fill(n, LATTICE_ANCHOR))
}

pub fn board_is_frozen(b: &Board) -> bool {
    Move::ALL.into_iter().all(|m| b.apply_move(m) == *b)
}

/// Per-port facing of the template's window placed at `origin`.
pub fn activation_state(
    template: &GadgetTemplate,
    board: &Board,
    origin: (usize, usize),
) -> Result<BTreeMap<Port, Facing>, GadgetError> {
    let fits = origin.0 >= 1 && origin.1 >= 1 && board.in_bounds(origin.0 + WINDOW - 1, origin.1 + WINDOW - 1);
    if !fits {
        return Err(GadgetError::WindowOutOfBounds(origin.0, origin.1));
    }
    Ok(template
        .ports
        .iter()
        .map(|(&p, spec)| {
            let e = board.get(origin.0 + spec.cell.0 - 1, origin.1 + spec.cell.1 - 1);
            (p, template.kind.facing(p, spec.activation.is_activated(e)))
        })
        .collect())
}

/// Runs `moves` through the turn cycle.
pub fn replay_sequence(board: &Board, program: &OracleProgram, moves: &[Move]) -> Result<Board, GadgetError> {
    let mut state = program.initial_state();
    let mut b = board.clone();
    for (index, &mv) in moves.iter().enumerate() {
        b = run_turn(&b, mv, program, &mut state).map_err(|error| GadgetError::IllegalMove { index, error })?;
    }
    Ok(b)
}

/// One verification hypothesis: which inputs are fed, and whether an output
/// activation should be reachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypothesis {
    pub fed: Vec<Port>,
    pub expect_reachable: bool,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.fed.is_empty() {
            return f.write_str("neither");
        }
        let names: Vec<String> = self.fed.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", names.join("+"))
    }
}

pub fn hypotheses(kind: GadgetKind) -> Vec<Hypothesis> {
    let h = |fed: &[Port], e: bool| Hypothesis { fed: fed.to_vec(), expect_reachable: e };
    match kind {
        GadgetKind::JAnd => {
            vec![h(&[Port::A, Port::B], true), h(&[Port::A], false), h(&[Port::B], false), h(&[], false)]
        }
        GadgetKind::JOr => vec![h(&[Port::A, Port::B], true), h(&[Port::A], true), h(&[Port::B], true), h(&[], false)],
        GadgetKind::RevAndOr => vec![h(&[Port::C], true), h(&[], false)],
        GadgetKind::Connection(..) | GadgetKind::Line(_) | GadgetKind::Corner(_) => {
            vec![h(&[Port::A], true), h(&[], false)]
        }
        GadgetKind::Lattice => vec![h(&[], false)],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reach {
    Reachable(Vec<Move>),
    Unreachable,
    /// The visited-set cap was hit before the bound was exhausted.
    Exploded {
        cap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisOutcome {
    pub hypothesis: Hypothesis,
    pub reach: Reach,
    pub stats: SearchStats,
}

impl HypothesisOutcome {
    pub fn agrees(&self) -> bool {
        match &self.reach {
            Reach::Reachable(_) => self.hypothesis.expect_reachable,
            Reach::Unreachable => !self.hypothesis.expect_reachable,
            Reach::Exploded { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractReport {
    pub kind: GadgetKind,
    pub j: Option<u8>,
    pub bound: usize,
    pub outcomes: Vec<HypothesisOutcome>,
}

impl ContractReport {
    pub fn holds(&self) -> bool {
        self.outcomes.iter().all(HypothesisOutcome::agrees)
    }

    pub fn outcome(&self, fed: &[Port]) -> Option<&HypothesisOutcome> {
        self.outcomes.iter().find(|o| o.hypothesis.fed == fed)
    }
}

/// Whether some output port of the harness board holds its activated exponent.
pub fn output_activated(t: &GadgetTemplate, board: &Board) -> bool {
    t.outputs().into_iter().any(|p| t.port(p).activation.is_complete(t.harness_port(board, p)))
}

/// Bounded breadth-first search for an output activation under one hypothesis.
pub fn search_hypothesis(t: &GadgetTemplate, h: &Hypothesis, bound: usize, cap: usize) -> HypothesisOutcome {
    let (board, program) = t.harness(&h.fed);
    let limits = BfsLimits { bound, cap, max_tile_cut: None };
    match bounded_search(&board, &program, limits, |b| output_activated(t, b)) {
        Ok(res) => HypothesisOutcome {
            hypothesis: h.clone(),
            reach: match res.outcome.witness() {
                Some(w) => Reach::Reachable(w.to_vec()),
                None => Reach::Unreachable,
            },
            stats: res.stats,
        },
        Err(SolverError::StateExplosion { cap }) => {
            HypothesisOutcome { hypothesis: h.clone(), reach: Reach::Exploded { cap }, stats: SearchStats::default() }
        }
    }
}

/// Runs every hypothesis for the template's kind with the default state cap.
pub fn verify_gadget_contract(t: &GadgetTemplate, bound: usize) -> Result<ContractReport, GadgetError> {
    let report = contract_report(t, bound, DEFAULT_STATE_CAP);
    match report.outcomes.iter().find_map(|o| match o.reach {
        Reach::Exploded { cap } => Some(cap),
        _ => None,
    }) {
        Some(cap) => Err(SolverError::StateExplosion { cap }.into()),
        None => Ok(report),
    }
}

/// Like [`verify_gadget_contract`] but keeps exploded hypotheses in the report.
pub fn contract_report(t: &GadgetTemplate, bound: usize, cap: usize) -> ContractReport {
    let outcomes = hypotheses(t.kind).iter().map(|h| search_hypothesis(t, h, bound, cap)).collect();
    ContractReport { kind: t.kind, j: t.j, bound, outcomes }
}

/// [`contract_report`] with hypotheses searched on up to `workers` threads.
/// Outcomes keep the order of [`hypotheses`].
pub fn contract_report_parallel(t: &GadgetTemplate, bound: usize, cap: usize, workers: usize) -> ContractReport {
    if workers <= 1 {
        return contract_report(t, bound, cap);
    }
    let hs = hypotheses(t.kind);
    let mut slots: Vec<Option<HypothesisOutcome>> = vec![None; hs.len()];
    for (chunk_h, chunk_s) in hs.chunks(workers).zip(slots.chunks_mut(workers)) {
        std::thread::scope(|scope| {
            for (h, slot) in chunk_h.iter().zip(chunk_s.iter_mut()) {
                scope.spawn(move || *slot = Some(search_hypothesis(t, h, bound, cap)));
            }
        });
    }
    ContractReport { kind: t.kind, j: t.j, bound, outcomes: slots.into_iter().map(Option::unwrap).collect() }
}

/// Replays a reference sequence in the harness and returns every configuration.
pub fn replay_reference(t: &GadgetTemplate, seq: &ReferenceSequence) -> Result<Vec<Board>, GadgetError> {
    let (board, program) = t.harness(&seq.fed);
    crate::solver::replay_trace(&board, &program, &seq.moves)
        .map_err(|(index, error)| GadgetError::IllegalMove { index, error })
}

/// Port facings on a harness board.
pub fn harness_facing(t: &GadgetTemplate, board: &Board) -> BTreeMap<Port, Facing> {
    activation_state(t, board, (2, 2)).expect("harness window fits")
}

/// The eight symmetries of a square window. The four listed first keep the
/// lattice parity of a 4×4 window. The mirrors and quarter turns flip it, so
/// [`Symmetry::board`] swaps the filler exponents 1 and 2 for them and the
/// transformed window still meets its neighbours in phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Identity,
    Transpose,
    AntiTranspose,
    HalfTurn,
    RowMirror,
    ColMirror,
    QuarterCw,
    QuarterCcw,
}

impl Symmetry {
    pub const ALL: [Symmetry; 4] =
        [Symmetry::Identity, Symmetry::Transpose, Symmetry::AntiTranspose, Symmetry::HalfTurn];
    pub const EVERY: [Symmetry; 8] = [
        Symmetry::Identity,
        Symmetry::Transpose,
        Symmetry::AntiTranspose,
        Symmetry::HalfTurn,
        Symmetry::RowMirror,
        Symmetry::ColMirror,
        Symmetry::QuarterCw,
        Symmetry::QuarterCcw,
    ];

    pub fn keeps_parity(self) -> bool {
        Self::ALL.contains(&self)
    }

    /// Maps a cell of an `n`×`n` board.
    pub fn cell(self, (r, c): (usize, usize), n: usize) -> (usize, usize) {
        match self {
            Symmetry::Identity => (r, c),
            Symmetry::Transpose => (c, r),
            Symmetry::AntiTranspose => (n + 1 - c, n + 1 - r),
            Symmetry::HalfTurn => (n + 1 - r, n + 1 - c),
            Symmetry::RowMirror => (n + 1 - r, c),
            Symmetry::ColMirror => (r, n + 1 - c),
            Symmetry::QuarterCw => (c, n + 1 - r),
            Symmetry::QuarterCcw => (n + 1 - c, r),
        }
    }

    pub fn side(self, s: Side) -> Side {
        use Side::*;
        match (self, s) {
            (Symmetry::Identity, s) => s,
            (Symmetry::Transpose, Left) => Top,
            (Symmetry::Transpose, Top) => Left,
            (Symmetry::Transpose, Right) => Bottom,
            (Symmetry::Transpose, Bottom) => Right,
            (Symmetry::AntiTranspose, Left) => Bottom,
            (Symmetry::AntiTranspose, Bottom) => Left,
            (Symmetry::AntiTranspose, Right) => Top,
            (Symmetry::AntiTranspose, Top) => Right,
            (Symmetry::HalfTurn, s) => s.opposite(),
            (Symmetry::RowMirror, Top | Bottom) => s.opposite(),
            (Symmetry::RowMirror, s) => s,
            (Symmetry::ColMirror, Left | Right) => s.opposite(),
            (Symmetry::ColMirror, s) => s,
            (Symmetry::QuarterCw, Top) => Right,
            (Symmetry::QuarterCw, Right) => Bottom,
            (Symmetry::QuarterCw, Bottom) => Left,
            (Symmetry::QuarterCw, Left) => Top,
            (Symmetry::QuarterCcw, Top) => Left,
            (Symmetry::QuarterCcw, Left) => Bottom,
            (Symmetry::QuarterCcw, Bottom) => Right,
            (Symmetry::QuarterCcw, Right) => Top,
        }
    }

    pub fn mv(self, m: Move) -> Move {
        let s = match m {
            Move::Up => Side::Top,
            Move::Down => Side::Bottom,
            Move::Left => Side::Left,
            Move::Right => Side::Right,
        };
        match self.side(s) {
            Side::Top => Move::Up,
            Side::Bottom => Move::Down,
            Side::Left => Move::Left,
            Side::Right => Move::Right,
        }
    }

    pub fn board(self, b: &Board) -> Board {
        let n = b.size();
        let swap = !self.keeps_parity();
        let mut out = Board::empty(n);
        for r in 1..=n {
            for c in 1..=n {
                let (r2, c2) = self.cell((r, c), n);
                let e = b.get(r, c);
                out = out.with(r2, c2, if swap && (1..=2).contains(&e) { 3 - e } else { e });
            }
        }
        out
    }
}

impl GadgetTemplate {
    /// The same vertex gadget `dj` levels higher: every non-filler exponent,
    /// port exponent and rule exponent moves up by `dj`.
    pub fn raised(&self, dj: u8) -> GadgetTemplate {
        let up = |e: u8| if e > 2 { e + dj } else { e };
        let mut t = self.clone();
        t.j = self.j.map(|j| j + dj);
        let mut layout = self.layout.clone();
        for r in 1..=WINDOW {
            for c in 1..=WINDOW {
                layout = layout.with(r, c, up(self.layout.get(r, c)));
            }
        }
        t.layout = layout;
        for spec in t.ports.values_mut() {
            spec.activation.base = up(spec.activation.base);
            spec.activation.required = spec.activation.required.map(up);
        }
        for r in &mut t.rules {
            if let oracle::Trigger::Exponent(e) = r.vacated {
                r.vacated = oracle::Trigger::Exponent(up(e));
            }
            for p in &mut r.response {
                p.exponent = up(p.exponent);
            }
        }
        t
    }

    pub fn transformed(&self, s: Symmetry) -> GadgetTemplate {
        let cell = |x: (usize, usize)| s.cell(x, WINDOW);
        GadgetTemplate {
            kind: self.kind,
            j: self.j,
            layout: s.board(&self.layout),
            ports: self
                .ports
                .iter()
                .map(|(&p, spec)| {
                    (p, PortSpec { cell: cell(spec.cell), side: s.side(spec.side), activation: spec.activation })
                })
                .collect(),
            rules: self
                .rules
                .iter()
                .map(|r| OracleRule {
                    cell: cell(r.cell),
                    vacated: r.vacated,
                    response: r
                        .response
                        .iter()
                        .map(|p| {
                            let (a, b) = cell((p.row, p.col));
                            crate::engine::Placement::new(a, b, p.exponent)
                        })
                        .collect(),
                    limit: r.limit,
                })
                .collect(),
            sequences: self
                .sequences
                .iter()
                .map(|q| ReferenceSequence {
                    name: q.name.clone(),
                    fed: q.fed.clone(),
                    moves: q.moves.iter().map(|&m| s.mv(m)).collect(),
                })
                .collect(),
        }
    }
}

const SHIPPED: [(GadgetKind, u8, &str); 12] = [
    (GadgetKind::JAnd, 4, include_str!("../../templates/j_and_4.txt")),
    (GadgetKind::JAnd, 5, include_str!("../../templates/j_and_5.txt")),
    (GadgetKind::JAnd, 6, include_str!("../../templates/j_and_6.txt")),
    (GadgetKind::JAnd, 7, include_str!("../../templates/j_and_7.txt")),
    (GadgetKind::JOr, 4, include_str!("../../templates/j_or_4.txt")),
    (GadgetKind::JOr, 5, include_str!("../../templates/j_or_5.txt")),
    (GadgetKind::JOr, 6, include_str!("../../templates/j_or_6.txt")),
    (GadgetKind::JOr, 7, include_str!("../../templates/j_or_7.txt")),
    (GadgetKind::RevAndOr, 4, include_str!("../../templates/rev_andor_4.txt")),
    (GadgetKind::RevAndOr, 5, include_str!("../../templates/rev_andor_5.txt")),
    (GadgetKind::RevAndOr, 6, include_str!("../../templates/rev_andor_6.txt")),
    (GadgetKind::RevAndOr, 7, include_str!("../../templates/rev_andor_7.txt")),
];

/// The catalogue entry for `kind`. Vertex gadgets take their level from `j`;
/// pieces carry their own levels and ignore it.
pub fn instantiate_gadget(kind: GadgetKind, j: u8) -> Result<GadgetTemplate, GadgetError> {
    let piece_level = |k: u8| {
        if (4..=MAX_PIECE_LEVEL).contains(&k) {
            Ok(())
        } else {
            Err(GadgetError::UnsupportedLevel { kind, level: k })
        }
    };
    match kind {
        GadgetKind::JAnd | GadgetKind::JOr | GadgetKind::RevAndOr => {
            let (_, _, text) = SHIPPED
                .iter()
                .find(|(k, level, _)| *k == kind && *level == j)
                .ok_or(GadgetError::UnsupportedLevel { kind, level: j })?;
            GadgetTemplate::parse(text)
        }
        GadgetKind::Connection(k, k2) => {
            piece_level(k)?;
            piece_level(k2)?;
            Ok(straight_piece(kind, k, k2))
        }
        GadgetKind::Line(k) => {
            piece_level(k)?;
            Ok(straight_piece(kind, k, k))
        }
        GadgetKind::Corner(k) => {
            piece_level(k)?;
            Ok(corner_piece(k, false))
        }
        GadgetKind::Lattice => Ok(GadgetTemplate {
            kind,
            j: None,
            layout: lattice_fill(WINDOW, LATTICE_ANCHOR),
            ports: BTreeMap::new(),
            rules: Vec::new(),
            sequences: Vec::new(),
        }),
    }
}

/// Enters on the left at (3,1), leaves on the right at (3,4). A chain of
/// `k+1..k+3` helpers feeds the `k+4` tile at (3,3); once that tile leaves,
/// the adversary drops `k′−1` there to pair with the output tile.
fn straight_piece(kind: GadgetKind, k: u8, k2: u8) -> GadgetTemplate {
    let rows = [[1, 2, 1, 2], [2, k + 2, k + 3, 1], [k, k + 1, k + 4, k2 - 1], [2, 1, 2, 1]];
    let ports = BTreeMap::from([
        (Port::A, piece_port((3, 1), Side::Left, k)),
        (Port::C, piece_port((3, 4), Side::Right, k2 - 1)),
    ]);
    GadgetTemplate {
        kind,
        j: None,
        layout: Board::from_rows(&rows).expect("piece rows are well formed"),
        ports,
        rules: vec![OracleRule::once((3, 3), k + 4, vec![crate::engine::Placement::new(3, 3, k2 - 1)])],
        sequences: synth::reference_sequences(kind),
    }
}

/// Enters on the left at (3,1) and turns down to (4,3), or with `up` the
/// mirror image turning up to (1,3). The mirror swaps the filler parity so
/// the window still meets its neighbours in phase.
fn corner_piece(k: u8, up: bool) -> GadgetTemplate {
    let mut rows = [[1, 2, 1, 2], [2, k + 2, k + 3, 1], [k, k + 1, k + 4, 2], [2, 1, k - 1, 1]];
    let (a, out, hub) = if up {
        rows.reverse();
        for row in rows.iter_mut() {
            for e in row.iter_mut() {
                if *e <= 2 {
                    *e = 3 - *e;
                }
            }
        }
        ((2, 1), (1, 3), (2, 3))
    } else {
        ((3, 1), (4, 3), (3, 3))
    };
    let side = if up { Side::Top } else { Side::Bottom };
    let ports = BTreeMap::from([(Port::A, piece_port(a, Side::Left, k)), (Port::C, piece_port(out, side, k - 1))]);
    GadgetTemplate {
        kind: GadgetKind::Corner(k),
        j: None,
        layout: Board::from_rows(&rows).expect("piece rows are well formed"),
        ports,
        rules: vec![OracleRule::once(hub, k + 4, vec![crate::engine::Placement::new(hub.0, hub.1, k - 1)])],
        sequences: Vec::new(),
    }
}

fn piece_port(cell: (usize, usize), side: Side, base: u8) -> PortSpec {
    PortSpec { cell, side, activation: ActivationPredicate { base, required: Some(base + 1) } }
}

/// A connector piece entering through `from` and leaving through `to`.
/// Straight pieces need opposite sides; corners need adjacent ones.
pub fn oriented_piece(kind: GadgetKind, from: Side, to: Side) -> Result<GadgetTemplate, GadgetError> {
    let base = instantiate_gadget(kind, 0)?;
    let candidates: Vec<GadgetTemplate> = match kind {
        GadgetKind::Corner(k) => vec![base, corner_piece(k, true)],
        GadgetKind::Connection(..) | GadgetKind::Line(_) => vec![base],
        _ => return Err(GadgetError::Invalid(format!("{kind} is not a connector piece"))),
    };
    for t in candidates {
        for s in Symmetry::ALL {
            let o = t.transformed(s);
            if o.port(Port::A).side == from && o.port(Port::C).side == to {
                return Ok(o);
            }
        }
    }
    Err(GadgetError::Invalid(format!("{kind} cannot enter {} and leave {}", from.name(), to.name())))
}

/// The window cell at `offset` along `side`.
pub fn side_cell(side: Side, offset: usize) -> (usize, usize) {
    match side {
        Side::Left => (offset, 1),
        Side::Right => (offset, WINDOW),
        Side::Top => (1, offset),
        Side::Bottom => (WINDOW, offset),
    }
}

fn piece_levels(kind: GadgetKind) -> Result<(u8, u8), GadgetError> {
    instantiate_gadget(kind, 0)?;
    match kind {
        GadgetKind::Connection(k, k2) => Ok((k, k2 - 1)),
        GadgetKind::Line(k) | GadgetKind::Corner(k) => Ok((k, k - 1)),
        _ => Err(GadgetError::Invalid(format!("{kind} is not a connector piece"))),
    }
}

/// A connector piece whose input sits at `entry` (side and offset) and whose
/// output leaves through `exit`, at a fixed offset if one is given. Catalogue
/// layouts are tried first under all eight symmetries. Failing that, an
/// adapter lays the same tile chain along a path between the two cells; the
/// second value is `true` in that case.
pub fn fitted_piece(
    kind: GadgetKind,
    entry: (Side, usize),
    exit: (Side, Option<usize>),
) -> Result<(GadgetTemplate, bool), GadgetError> {
    piece_levels(kind)?;
    let catalogue: Vec<GadgetTemplate> = match kind {
        GadgetKind::Corner(k) => vec![corner_piece(k, false), corner_piece(k, true)],
        _ => vec![instantiate_gadget(kind, 0)?],
    };
    for t in &catalogue {
        for s in Symmetry::EVERY {
            let o = t.transformed(s);
            let (a, c) = (o.port(Port::A), o.port(Port::C));
            if a.side == entry.0 && a.offset() == entry.1 && c.side == exit.0 && exit.1.is_none_or(|x| x == c.offset())
            {
                return Ok((o, false));
            }
        }
    }
    let offsets = match exit.1 {
        Some(x) => vec![x],
        None => vec![3, 2, 1, 4],
    };
    for off in offsets {
        if let Some(t) = path_piece(kind, entry, (exit.0, off))? {
            return Ok((t, true));
        }
    }
    Err(GadgetError::Invalid(format!(
        "no {kind} enters {} at {} and leaves {}",
        entry.0.name(),
        entry.1,
        exit.0.name()
    )))
}

/// Lays `k, k+1, …, hub, out` along a simple path from the entry cell to the
/// exit cell, with the rule that drops the output base on the vacated hub.
/// Paths of 6 to 9 cells are tried in a fixed order; the first rigid layout
/// wins.
pub fn path_piece(
    kind: GadgetKind,
    entry: (Side, usize),
    exit: (Side, usize),
) -> Result<Option<GadgetTemplate>, GadgetError> {
    let (k, out) = piece_levels(kind)?;
    let (from, to) = (side_cell(entry.0, entry.1), side_cell(exit.0, exit.1));
    if from == to {
        return Ok(None);
    }
    for len in 6..=9 {
        let mut path = vec![from];
        if let Some(t) = extend_path(kind, k, out, entry.0, exit.0, to, len, &mut path) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn extend_path(
    kind: GadgetKind,
    k: u8,
    out: u8,
    in_side: Side,
    out_side: Side,
    to: (usize, usize),
    len: usize,
    path: &mut Vec<(usize, usize)>,
) -> Option<GadgetTemplate> {
    let last = *path.last().unwrap();
    if path.len() == len {
        if last != to {
            return None;
        }
        let mut layout = lattice_fill(WINDOW, LATTICE_ANCHOR);
        for (i, &(r, c)) in path[..len - 1].iter().enumerate() {
            layout = layout.with(r, c, k + i as u8);
        }
        layout = layout.with(to.0, to.1, out);
        if !is_rigid(&layout) {
            return None;
        }
        let hub = path[len - 2];
        let hub_e = k + (len - 2) as u8;
        let ports =
            BTreeMap::from([(Port::A, piece_port(path[0], in_side, k)), (Port::C, piece_port(to, out_side, out))]);
        return Some(GadgetTemplate {
            kind,
            j: None,
            layout,
            ports,
            rules: vec![OracleRule::once(hub, hub_e, vec![crate::engine::Placement::new(hub.0, hub.1, out)])],
            sequences: Vec::new(),
        });
    }
    if last == to {
        return None;
    }
    for side in Side::ALL {
        let (dr, dc) = side.offset();
        let (r, c) = (last.0 as isize + dr, last.1 as isize + dc);
        if !(1..=WINDOW as isize).contains(&r) || !(1..=WINDOW as isize).contains(&c) {
            continue;
        }
        let next = (r as usize, c as usize);
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        if let Some(t) = extend_path(kind, k, out, in_side, out_side, to, len, path) {
            return Some(t);
        }
        path.pop();
    }
    None
}
