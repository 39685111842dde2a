//! The scripted adversary: per-cell placement rules plus lattice repair.
//!
//! An [`OracleProgram`] is an immutable template. Remaining fire counts live in
//! an [`OracleState`] owned by a single playout, so a playout's full state is
//! the pair `(Board, OracleState)`.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::engine::{content_lines, Board, Placement, MAX_EXPONENT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("rules {first} and {second} both match cell ({row},{col})")]
    AmbiguousRule { first: usize, second: usize, row: usize, col: usize },
    #[error("coordinate ({row},{col}) is out of bounds")]
    OutOfBounds { row: usize, col: usize },
    #[error("lattice regions {0} and {1} overlap")]
    OverlappingLattice(usize, usize),
}

/// Which vacated tile a rule reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trigger {
    Any,
    Exponent(u8),
}

impl Trigger {
    fn matches(self, e: u8) -> bool {
        match self {
            Trigger::Any => true,
            Trigger::Exponent(x) => x == e,
        }
    }

    fn overlaps(self, other: Trigger) -> bool {
        match (self, other) {
            (Trigger::Exponent(a), Trigger::Exponent(b)) => a == b,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OracleRule {
    pub cell: (usize, usize),
    pub vacated: Trigger,
    pub response: Vec<Placement>,
    /// `None` means the rule may fire any number of times.
    pub limit: Option<u32>,
}

impl OracleRule {
    pub fn once(cell: (usize, usize), vacated: u8, response: Vec<Placement>) -> Self {
        OracleRule { cell, vacated: Trigger::Exponent(vacated), response, limit: Some(1) }
    }

    pub fn translated(&self, dr: usize, dc: usize) -> OracleRule {
        OracleRule {
            cell: (self.cell.0 + dr, self.cell.1 + dc),
            vacated: self.vacated,
            response: self.response.iter().map(|p| Placement::new(p.row + dr, p.col + dc, p.exponent)).collect(),
            limit: self.limit,
        }
    }
}

impl fmt::Display for OracleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vac = match self.vacated {
            Trigger::Any => "*".to_string(),
            Trigger::Exponent(e) => e.to_string(),
        };
        let places: Vec<String> =
            self.response.iter().map(|p| format!("({},{},{})", p.row, p.col, p.exponent)).collect();
        write!(f, "rule ({},{}) vacated={} -> place {}", self.cell.0, self.cell.1, vac, places.join(", "))?;
        if let Some(n) = self.limit {
            write!(f, " limit={n}")?;
        }
        Ok(())
    }
}

/// A rectangle kept in the alternating exponent-1/exponent-2 pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeRegion {
    pub top_left: (usize, usize),
    pub bottom_right: (usize, usize),
    /// Exponent (1 or 2) at `top_left`.
    pub anchor: u8,
}

impl LatticeRegion {
    pub fn new(top_left: (usize, usize), bottom_right: (usize, usize), anchor: u8) -> Self {
        assert!(anchor == 1 || anchor == 2, "lattice anchor must be exponent 1 or 2");
        LatticeRegion { top_left, bottom_right, anchor }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top_left.0..=self.bottom_right.0).contains(&row) && (self.top_left.1..=self.bottom_right.1).contains(&col)
    }

    /// The exponent that continues the pattern at `(row, col)`.
    pub fn pattern_at(&self, row: usize, col: usize) -> u8 {
        lattice_exponent(self.anchor, self.top_left, row, col)
    }

    fn intersects(&self, o: &LatticeRegion) -> bool {
        self.top_left.0 <= o.bottom_right.0
            && o.top_left.0 <= self.bottom_right.0
            && self.top_left.1 <= o.bottom_right.1
            && o.top_left.1 <= self.bottom_right.1
    }
}

impl fmt::Display for LatticeRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lattice ({},{})-({},{}) anchor={}",
            self.top_left.0,
            self.top_left.1,
            self.bottom_right.0,
            self.bottom_right.1,
            1u32 << self.anchor
        )
    }
}

/// Exponent of the (2,4) checkerboard anchored with `anchor` at `origin`.
pub fn lattice_exponent(anchor: u8, origin: (usize, usize), row: usize, col: usize) -> u8 {
    let parity = (row + col + origin.0 + origin.1) % 2;
    if parity == 0 {
        anchor
    } else {
        3 - anchor
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct OracleProgram {
    pub rules: Vec<OracleRule>,
    pub lattices: Vec<LatticeRegion>,
}

/// Remaining fire counts, one slot per rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OracleState {
    remaining: Vec<Option<u32>>,
}

impl OracleState {
    pub fn remaining(&self, rule: usize) -> Option<u32> {
        self.remaining[rule]
    }
}

impl OracleProgram {
    pub fn new(rules: Vec<OracleRule>, lattices: Vec<LatticeRegion>) -> Result<Self, OracleError> {
        let p = OracleProgram { rules, lattices };
        p.check()?;
        Ok(p)
    }

    pub fn initial_state(&self) -> OracleState {
        OracleState { remaining: self.rules.iter().map(|r| r.limit).collect() }
    }

    fn check(&self) -> Result<(), OracleError> {
        let zero = |row: usize, col: usize| row == 0 || col == 0;
        for r in &self.rules {
            if zero(r.cell.0, r.cell.1) {
                return Err(OracleError::OutOfBounds { row: r.cell.0, col: r.cell.1 });
            }
            for p in &r.response {
                if zero(p.row, p.col) {
                    return Err(OracleError::OutOfBounds { row: p.row, col: p.col });
                }
            }
        }
        for (i, a) in self.rules.iter().enumerate() {
            for (k, b) in self.rules.iter().enumerate().skip(i + 1) {
                if a.cell == b.cell && a.vacated.overlaps(b.vacated) {
                    return Err(OracleError::AmbiguousRule { first: i, second: k, row: a.cell.0, col: a.cell.1 });
                }
            }
        }
        for (i, a) in self.lattices.iter().enumerate() {
            if zero(a.top_left.0, a.top_left.1) || a.top_left.0 > a.bottom_right.0 || a.top_left.1 > a.bottom_right.1 {
                return Err(OracleError::OutOfBounds { row: a.top_left.0, col: a.top_left.1 });
            }
            for (k, b) in self.lattices.iter().enumerate().skip(i + 1) {
                if a.intersects(b) {
                    return Err(OracleError::OverlappingLattice(i, k));
                }
            }
        }
        Ok(())
    }

    /// Checks every coordinate against an `n`×`n` board.
    pub fn check_bounds(&self, n: usize) -> Result<(), OracleError> {
        let ok = |r: usize, c: usize| (1..=n).contains(&r) && (1..=n).contains(&c);
        for r in &self.rules {
            if !ok(r.cell.0, r.cell.1) {
                return Err(OracleError::OutOfBounds { row: r.cell.0, col: r.cell.1 });
            }
            if let Some(p) = r.response.iter().find(|p| !ok(p.row, p.col)) {
                return Err(OracleError::OutOfBounds { row: p.row, col: p.col });
            }
        }
        for l in &self.lattices {
            if !ok(l.bottom_right.0, l.bottom_right.1) {
                return Err(OracleError::OutOfBounds { row: l.bottom_right.0, col: l.bottom_right.1 });
            }
        }
        Ok(())
    }

    /// Combines two programs, rejecting ambiguous triggers and overlapping lattices.
    pub fn merged(&self, other: &OracleProgram) -> Result<OracleProgram, OracleError> {
        let mut rules = self.rules.clone();
        rules.extend(other.rules.iter().cloned());
        let mut lattices = self.lattices.clone();
        lattices.extend(other.lattices.iter().copied());
        OracleProgram::new(rules, lattices)
    }

    pub fn translated(&self, dr: usize, dc: usize) -> OracleProgram {
        OracleProgram {
            rules: self.rules.iter().map(|r| r.translated(dr, dc)).collect(),
            lattices: self
                .lattices
                .iter()
                .map(|l| LatticeRegion {
                    top_left: (l.top_left.0 + dr, l.top_left.1 + dc),
                    bottom_right: (l.bottom_right.0 + dr, l.bottom_right.1 + dc),
                    anchor: l.anchor,
                })
                .collect(),
        }
    }

    /// The adversary's reply to a move that took `before` to `after`.
    ///
    /// Vacated cells are visited in row-major order. A live matching rule fires
    /// (and loses one charge); otherwise a lattice cell is refilled with the
    /// pattern exponent; otherwise nothing is placed.
    pub fn respond(
        &self,
        state: &mut OracleState,
        before: &Board,
        after: &Board,
    ) -> Result<Vec<Placement>, OracleError> {
        let mut out = Vec::new();
        for (row, col, vacated) in before.vacated_by(after) {
            let mut hit: Option<usize> = None;
            for (i, rule) in self.rules.iter().enumerate() {
                if rule.cell == (row, col) && rule.vacated.matches(vacated) && state.remaining[i] != Some(0) {
                    if let Some(first) = hit {
                        return Err(OracleError::AmbiguousRule { first, second: i, row, col });
                    }
                    hit = Some(i);
                }
            }
            if let Some(i) = hit {
                if let Some(n) = state.remaining[i].as_mut() {
                    *n -= 1;
                }
                out.extend(self.rules[i].response.iter().copied());
            } else if let Some(l) = self.lattices.iter().find(|l| l.contains(row, col)) {
                out.push(Placement::new(row, col, l.pattern_at(row, col)));
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rules {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        for l in &self.lattices {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<OracleProgram, OracleError> {
        let mut rules = Vec::new();
        let mut lattices = Vec::new();
        for (line, l) in content_lines(text) {
            match parse_line(line, l)? {
                Item::Rule(r) => rules.push(r),
                Item::Lattice(x) => lattices.push(x),
            }
        }
        OracleProgram::new(rules, lattices)
    }
}

pub(crate) enum Item {
    Rule(OracleRule),
    Lattice(LatticeRegion),
}

fn rule_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^rule\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s+vacated=(\*|\d+)\s*->\s*place\s+(.*?)(?:\s+limit=(\d+))?$")
            .unwrap()
    })
}

fn lattice_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^lattice\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*-\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s+anchor=(\d+)$").unwrap()
    })
}

fn triple_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)$").unwrap())
}

pub(crate) fn is_oracle_line(l: &str) -> bool {
    l.starts_with("rule") || l.starts_with("lattice")
}

pub(crate) fn parse_line(line: usize, l: &str) -> Result<Item, OracleError> {
    let err = |msg: String| OracleError::Parse { line, msg };
    let num = |s: &str| s.parse::<usize>().map_err(|_| OracleError::Parse { line, msg: format!("bad number `{s}`") });
    let exp = |s: &str| -> Result<u8, OracleError> {
        let v = num(s)?;
        if v == 0 || v > MAX_EXPONENT as usize {
            return Err(OracleError::Parse { line, msg: format!("exponent {v} out of range") });
        }
        Ok(v as u8)
    };
    if let Some(c) = rule_re().captures(l) {
        let vacated = match &c[3] {
            "*" => Trigger::Any,
            e => Trigger::Exponent(exp(e)?),
        };
        let mut response = Vec::new();
        for part in c[4].split("),") {
            let part = part.trim();
            let part = if part.ends_with(')') { part.to_string() } else { format!("{part})") };
            let t = triple_re().captures(&part).ok_or_else(|| err(format!("bad placement `{part}`")))?;
            response.push(Placement::new(num(&t[1])?, num(&t[2])?, exp(&t[3])?));
        }
        let limit = c.get(5).map(|m| num(m.as_str())).transpose()?.map(|v| v as u32);
        return Ok(Item::Rule(OracleRule { cell: (num(&c[1])?, num(&c[2])?), vacated, response, limit }));
    }
    if let Some(c) = lattice_re().captures(l) {
        let anchor = match &c[5] {
            "2" => 1,
            "4" => 2,
            a => return Err(err(format!("lattice anchor must be 2 or 4, got {a}"))),
        };
        return Ok(Item::Lattice(LatticeRegion {
            top_left: (num(&c[1])?, num(&c[2])?),
            bottom_right: (num(&c[3])?, num(&c[4])?),
            anchor,
        }));
    }
    Err(err(format!("unrecognised line `{l}`")))
}
