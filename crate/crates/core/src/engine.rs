//! Board configurations and the deterministic slide/merge rules.
//!
//! Cells hold tile exponents: `0` is an empty cell and `l > 0` is a tile of
//! value `2^l`. Coordinates in the public API are 1-indexed `(row, col)` in
//! row-major order.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::oracle::{OracleError, OracleProgram, OracleState};

/// Largest exponent accepted on load; keeps `2^l` inside a `u64`.
pub const MAX_EXPONENT: u8 = 62;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("exponent {0} exceeds the maximum of {MAX_EXPONENT}")]
    ExponentTooLarge(u64),
    #[error("board side must be at least 1")]
    EmptyBoard,
    #[error("cell ({row},{col}) is outside a {n}x{n} board")]
    OutOfBounds { row: usize, col: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TurnError {
    #[error("move {0} does not change the board")]
    IllegalMove(Move),
    #[error("oracle placement targets occupied cell ({row},{col})")]
    PlacementConflict { row: usize, col: usize },
    #[error("oracle placement ({row},{col}) is off the board")]
    PlacementOutOfBounds { row: usize, col: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    /// Canonical search order.
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn letter(self) -> char {
        match self {
            Move::Up => 'U',
            Move::Down => 'D',
            Move::Left => 'L',
            Move::Right => 'R',
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Move::Up => '⇑',
            Move::Down => '⇓',
            Move::Left => '⇐',
            Move::Right => '⇒',
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Move {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "u" | "up" | "⇑" => Ok(Move::Up),
            "d" | "down" | "⇓" => Ok(Move::Down),
            "l" | "left" | "⇐" => Ok(Move::Left),
            "r" | "right" | "⇒" => Ok(Move::Right),
            other => Err(format!("unknown move `{other}`")),
        }
    }
}

/// Parses a move list such as `D,R,D` or `⇓ ⇒ ⇓`.
pub fn parse_moves(s: &str) -> Result<Vec<Move>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(str::parse).collect()
}

pub fn format_moves(moves: &[Move]) -> String {
    moves.iter().map(|m| m.letter().to_string()).collect::<Vec<_>>().join(",")
}

/// A tile dropped by the adversary: 1-indexed cell and a nonzero exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub exponent: u8,
}

impl Placement {
    pub fn new(row: usize, col: usize, exponent: u8) -> Self {
        Placement { row, col, exponent }
    }
}

/// An n×n configuration. Value type: every operation returns a new board.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Board {
    n: usize,
    cells: Vec<u8>,
}

impl Board {
    pub fn empty(n: usize) -> Self {
        assert!(n >= 1, "board side must be at least 1");
        Board { n, cells: vec![0; n * n] }
    }

    /// Builds a board from rows of exponents.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self, EngineError> {
        let n = rows.len();
        if n == 0 {
            return Err(EngineError::EmptyBoard);
        }
        let mut cells = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(EngineError::Parse {
                    line: i + 2,
                    msg: format!("expected {n} cells, found {}", row.len()),
                });
            }
            for &e in row {
                if e > MAX_EXPONENT {
                    return Err(EngineError::ExponentTooLarge(e as u64));
                }
                cells.push(e);
            }
        }
        Ok(Board { n, cells })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn in_bounds(&self, row: usize, col: usize) -> bool {
        row >= 1 && col >= 1 && row <= self.n && col <= self.n
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(self.in_bounds(row, col), "({row},{col}) out of bounds");
        (row - 1) * self.n + (col - 1)
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[self.idx(row, col)]
    }

    /// Returns a copy with one cell replaced.
    pub fn with(&self, row: usize, col: usize, exponent: u8) -> Board {
        let mut b = self.clone();
        b.set(row, col, exponent);
        b
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, exponent: u8) {
        let i = self.idx(row, col);
        self.cells[i] = exponent;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.n)
    }

    pub fn max_tile(&self) -> u8 {
        self.cells.iter().copied().max().unwrap_or(0)
    }

    /// Σ 2^l over occupied cells.
    pub fn tile_sum(&self) -> u128 {
        self.cells.iter().filter(|&&e| e > 0).map(|&e| 1u128 << e).sum()
    }

    pub fn contains_exponent(&self, exponent: u8) -> bool {
        self.cells.contains(&exponent)
    }

    /// Slides every tile as far as possible toward `mv`, merging equal
    /// neighbours pairwise. Merges resolve from the side the tiles move
    /// toward, and a tile produced by a merge does not merge again this move.
    pub fn apply_move(&self, mv: Move) -> Board {
        let n = self.n;
        let mut out = vec![0u8; n * n];
        let mut line = Vec::with_capacity(n);
        for k in 0..n {
            // Index of the i-th cell of line k, counted from the leading edge.
            let at = |i: usize| -> usize {
                match mv {
                    Move::Left => k * n + i,
                    Move::Right => k * n + (n - 1 - i),
                    Move::Up => i * n + k,
                    Move::Down => (n - 1 - i) * n + k,
                }
            };
            line.clear();
            line.extend((0..n).map(|i| self.cells[at(i)]));
            let slid = slide_line(&line);
            for (i, e) in slid.into_iter().enumerate() {
                out[at(i)] = e;
            }
        }
        Board { n, cells: out }
    }

    pub fn is_move_legal(&self, mv: Move) -> bool {
        self.apply_move(mv) != *self
    }

    pub fn legal_moves(&self) -> Vec<Move> {
        Move::ALL.into_iter().filter(|&m| self.is_move_legal(m)).collect()
    }

    pub fn is_game_over(&self) -> bool {
        self.legal_moves().is_empty()
    }

    /// Cells that were occupied here and are empty in `after`, row-major.
    pub fn vacated_by(&self, after: &Board) -> Vec<(usize, usize, u8)> {
        let mut v = Vec::new();
        for (i, (&b, &a)) in self.cells.iter().zip(&after.cells).enumerate() {
            if b != 0 && a == 0 {
                v.push((i / self.n + 1, i % self.n + 1, b));
            }
        }
        v
    }

    /// Copies the `h`×`w` window starting at 1-indexed `origin`.
    pub fn window(&self, origin: (usize, usize), h: usize, w: usize) -> Vec<Vec<u8>> {
        (0..h).map(|dr| (0..w).map(|dc| self.get(origin.0 + dr, origin.1 + dc)).collect()).collect()
    }

    pub fn render(&self, show_values: bool) -> String {
        let width = if show_values {
            self.cells.iter().map(|&e| if e == 0 { 1 } else { (1u64 << e).to_string().len() }).max().unwrap_or(1)
        } else {
            self.cells.iter().map(|e| e.to_string().len()).max().unwrap_or(1)
        };
        let mut s = String::new();
        for row in self.rows() {
            let parts: Vec<String> = row
                .iter()
                .map(|&e| {
                    let t = match (e, show_values) {
                        (0, _) => ".".to_string(),
                        (e, true) => (1u64 << e).to_string(),
                        (e, false) => e.to_string(),
                    };
                    format!("{t:>width$}")
                })
                .collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        s
    }

    /// Board text format: side length, then `n` rows of exponents.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for row in self.rows() {
            let parts: Vec<String> = row.iter().map(|e| e.to_string()).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Board, EngineError> {
        let mut lines = content_lines(text);
        let board = parse_board_lines(&mut lines)?;
        if let Some((line, extra)) = lines.next() {
            return Err(EngineError::Parse { line, msg: format!("unexpected trailing content `{extra}`") });
        }
        Ok(board)
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

/// Slides one line toward index 0.
pub fn slide_line(line: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(line.len());
    let mut pending: Option<u8> = None;
    for &e in line.iter().filter(|&&e| e != 0) {
        match pending {
            Some(p) if p == e => {
                out.push(e + 1);
                pending = None;
            }
            Some(p) => {
                out.push(p);
                pending = Some(e);
            }
            None => pending = Some(e),
        }
    }
    out.extend(pending);
    out.resize(line.len(), 0);
    out
}

/// Non-blank lines with `#` comments stripped, tagged with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub(crate) fn parse_board_lines<'a, I>(lines: &mut I) -> Result<Board, EngineError>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (line, first) = lines.next().ok_or(EngineError::Parse { line: 1, msg: "missing board size".into() })?;
    let n: usize = first.parse().map_err(|_| EngineError::Parse { line, msg: format!("bad board size `{first}`") })?;
    if n == 0 {
        return Err(EngineError::EmptyBoard);
    }
    let mut cells = Vec::with_capacity(n * n);
    for r in 0..n {
        let (line, text) = lines
            .next()
            .ok_or(EngineError::Parse { line: line + r + 1, msg: format!("expected {n} board rows, found {r}") })?;
        let row: Vec<&str> = text.split_whitespace().collect();
        if row.len() != n {
            return Err(EngineError::Parse { line, msg: format!("expected {n} cells, found {}", row.len()) });
        }
        for tok in row {
            let e: u64 = tok.parse().map_err(|_| EngineError::Parse { line, msg: format!("bad exponent `{tok}`") })?;
            if e > MAX_EXPONENT as u64 {
                return Err(EngineError::ExponentTooLarge(e));
            }
            cells.push(e as u8);
        }
    }
    Ok(Board { n, cells })
}

/// One player/adversary turn: apply `mv`, ask the oracle, drop its tiles.
pub fn run_turn(board: &Board, mv: Move, program: &OracleProgram, state: &mut OracleState) -> Result<Board, TurnError> {
    let moved = board.apply_move(mv);
    if moved == *board {
        return Err(TurnError::IllegalMove(mv));
    }
    let placements = program.respond(state, board, &moved)?;
    apply_placements(moved, &placements)
}

pub fn apply_placements(mut board: Board, placements: &[Placement]) -> Result<Board, TurnError> {
    for p in placements {
        if !board.in_bounds(p.row, p.col) {
            return Err(TurnError::PlacementOutOfBounds { row: p.row, col: p.col });
        }
        if board.get(p.row, p.col) != 0 {
            return Err(TurnError::PlacementConflict { row: p.row, col: p.col });
        }
        board.set(p.row, p.col, p.exponent);
    }
    Ok(board)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_board(row: &[u8]) -> Board {
        let n = row.len();
        let mut rows = vec![vec![0u8; n]; n];
        rows[0] = row.to_vec();
        Board::from_rows(&rows).unwrap()
    }

    #[test]
    fn merge_pair_left() {
        let b = row_board(&[1, 1, 0, 0]).apply_move(Move::Left);
        assert_eq!(&b.cells()[..4], &[2, 0, 0, 0]);
    }

    #[test]
    fn merge_precedence_toward_motion() {
        let b = row_board(&[1, 1, 1, 0]).apply_move(Move::Left);
        assert_eq!(&b.cells()[..4], &[2, 1, 0, 0]);
        let b = row_board(&[1, 1, 1, 0]).apply_move(Move::Right);
        assert_eq!(&b.cells()[..4], &[0, 0, 1, 2]);
    }

    #[test]
    fn no_double_merge() {
        let b = row_board(&[1, 1, 1, 1]).apply_move(Move::Left);
        assert_eq!(&b.cells()[..4], &[2, 2, 0, 0]);
        let b = row_board(&[2, 1, 1, 0]).apply_move(Move::Left);
        assert_eq!(&b.cells()[..4], &[2, 2, 0, 0]);
    }

    #[test]
    fn single_tile_slides_to_bottom() {
        let b = Board::empty(4).with(1, 1, 3).apply_move(Move::Down);
        assert_eq!(b.get(4, 1), 3);
        assert_eq!(b.get(1, 1), 0);
    }

    #[test]
    fn empty_board_is_fixed() {
        let b = Board::empty(5);
        for m in Move::ALL {
            assert_eq!(b.apply_move(m), b);
        }
    }

    #[test]
    fn input_not_mutated() {
        let b = row_board(&[1, 1, 0, 0]);
        let copy = b.clone();
        let _ = b.apply_move(Move::Left);
        assert_eq!(b, copy);
    }

    #[test]
    fn stuck_board_is_game_over() {
        let b = Board::from_rows(&[[1, 2, 1, 2], [2, 1, 2, 1], [1, 2, 1, 2], [2, 1, 2, 1]]).unwrap();
        assert!(b.is_game_over());
        for m in Move::ALL {
            assert!(!b.is_move_legal(m));
        }
    }

    #[test]
    fn full_board_with_pair_can_merge() {
        let b = Board::from_rows(&[[3, 3, 1, 2], [2, 1, 2, 1], [1, 2, 1, 2], [2, 1, 2, 1]]).unwrap();
        assert!(b.is_move_legal(Move::Left));
        assert!(!b.is_game_over());
    }

    #[test]
    fn one_by_one_is_game_over() {
        assert!(Board::from_rows(&[[5]]).unwrap().is_game_over());
    }

    #[test]
    fn board_with_gap_is_not_over() {
        let b = Board::from_rows(&[[1, 0], [2, 3]]).unwrap();
        assert!(!b.is_game_over());
        assert!(b.is_move_legal(Move::Right));
    }

    #[test]
    fn max_tile_values() {
        assert_eq!(Board::empty(3).max_tile(), 0);
        let b = Board::from_rows(&[[1, 3, 2], [0, 0, 0], [0, 0, 0]]).unwrap();
        assert_eq!(b.max_tile(), 3);
        let b = Board::from_rows(&[[3, 3, 2], [0, 0, 0], [0, 0, 0]]).unwrap();
        assert_eq!(b.apply_move(Move::Left).max_tile(), 4);
    }

    #[test]
    fn worked_example_addressing() {
        // Tile of value 4 at (1,4), twos at (3,2) and (4,3), eight at (4,4).
        let b = Board::from_rows(&[[0, 0, 0, 2], [0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 3]]).unwrap();
        assert_eq!(b.get(1, 4), 2);
        assert_eq!(b.get(3, 2), 1);
        assert_eq!(b.get(4, 3), 1);
        assert_eq!(b.get(4, 4), 3);
    }

    #[test]
    fn text_roundtrip_and_comments() {
        let text = "# a board\n3\n0 1 2  # first row\n\n3 0 0\n0 0 62\n";
        let b = Board::parse(text).unwrap();
        assert_eq!(b.get(3, 3), 62);
        assert_eq!(Board::parse(&b.to_text()).unwrap(), b);
        assert_eq!(b.to_text(), "3\n0 1 2\n3 0 0\n0 0 62\n");
    }

    #[test]
    fn rejects_large_exponent_and_bad_rows() {
        assert_eq!(Board::parse("1\n63\n"), Err(EngineError::ExponentTooLarge(63)));
        assert!(matches!(Board::parse("2\n1 2\n3\n"), Err(EngineError::Parse { line: 3, .. })));
        assert!(matches!(Board::parse("2\n1 x\n0 0\n"), Err(EngineError::Parse { line: 2, .. })));
        assert_eq!(Board::parse("0\n"), Err(EngineError::EmptyBoard));
    }

    #[test]
    fn placement_conflict_detected() {
        let b = Board::empty(2).with(1, 1, 1);
        assert_eq!(
            apply_placements(b.clone(), &[Placement::new(1, 1, 2)]),
            Err(TurnError::PlacementConflict { row: 1, col: 1 })
        );
        assert!(apply_placements(b, &[Placement::new(2, 2, 2)]).is_ok());
    }

    #[test]
    fn moves_parse() {
        assert_eq!(parse_moves("⇓, ⇒ u L").unwrap(), vec![Move::Down, Move::Right, Move::Up, Move::Left]);
        assert!(parse_moves("x").is_err());
    }
}
