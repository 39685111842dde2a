//! Template synthesis by enumeration.
//!
//! A [`Space`] fixes the port tiles, any prescribed cells and oracle rules,
//! and a multiset of helper exponents. Every placement of the helpers on the
//! remaining cells (the rest keep the lattice pattern) is a candidate; a
//! candidate survives if it is rigid and its reference sequences replay with
//! the kind's intermediate-state constraints. Bounded contract verification
//! is left to the caller because it dominates the cost.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::Board;
use crate::oracle::OracleRule;

use super::{
    is_rigid, lattice_fill, replay_reference, Facing, GadgetKind, GadgetTemplate, Port, PortSpec, ReferenceSequence,
    LATTICE_ANCHOR, WINDOW,
};

#[derive(Debug, Clone)]
pub struct Space {
    pub kind: GadgetKind,
    pub j: Option<u8>,
    pub ports: BTreeMap<Port, PortSpec>,
    /// Non-port cells with prescribed exponents.
    pub fixed: Vec<((usize, usize), u8)>,
    pub rules: Vec<OracleRule>,
    /// Helper exponents, placed on cells not otherwise claimed; 0 leaves a
    /// cell empty.
    pub helpers: Vec<u8>,
    pub sequences: Vec<ReferenceSequence>,
}

impl Space {
    fn base_layout(&self) -> Board {
        let mut b = lattice_fill(WINDOW, LATTICE_ANCHOR);
        for spec in self.ports.values() {
            b = b.with(spec.cell.0, spec.cell.1, spec.activation.base);
        }
        for &((r, c), e) in &self.fixed {
            b = b.with(r, c, e);
        }
        b
    }

    fn free_cells(&self) -> Vec<(usize, usize)> {
        let taken: BTreeSet<(usize, usize)> =
            self.ports.values().map(|s| s.cell).chain(self.fixed.iter().map(|f| f.0)).collect();
        (1..=WINDOW).flat_map(|r| (1..=WINDOW).map(move |c| (r, c))).filter(|x| !taken.contains(x)).collect()
    }

    /// Visits every rigid placement of the helpers, in a deterministic order.
    pub fn for_each_candidate(&self, mut f: impl FnMut(GadgetTemplate)) {
        let mut helpers = self.helpers.clone();
        helpers.sort_unstable();
        let free = self.free_cells();
        let base = self.base_layout();
        let mut chosen: Vec<usize> = Vec::new();
        self.place(&helpers, &free, &base, &mut chosen, &mut f);
    }

    fn place(
        &self,
        helpers: &[u8],
        free: &[Cell],
        base: &Board,
        chosen: &mut Vec<usize>,
        out: &mut dyn FnMut(GadgetTemplate),
    ) {
        let t = chosen.len();
        if t == helpers.len() {
            let mut layout = base.clone();
            for (i, &slot) in chosen.iter().enumerate() {
                layout = layout.with(free[slot].0, free[slot].1, helpers[i]);
            }
            if is_rigid(&layout) {
                out(GadgetTemplate {
                    kind: self.kind,
                    j: self.j,
                    layout,
                    ports: self.ports.clone(),
                    rules: self.rules.clone(),
                    sequences: self.sequences.clone(),
                });
            }
            return;
        }
        // Equal helpers are interchangeable, so keep their slots increasing.
        let start = if t > 0 && helpers[t] == helpers[t - 1] { chosen[t - 1] + 1 } else { 0 };
        for slot in start..free.len() {
            if chosen.contains(&slot) {
                continue;
            }
            chosen.push(slot);
            self.place(helpers, free, base, chosen, out);
            chosen.pop();
        }
    }
}

type Cell = (usize, usize);

/// Replays every reference sequence and applies the kind's constraints.
pub fn accepts(t: &GadgetTemplate) -> bool {
    match t.kind {
        GadgetKind::RevAndOr => accepts_reversible(t),
        GadgetKind::Lattice => true,
        _ => t.sequences.iter().all(|q| accepts_activation(t, q)),
    }
}

/// The output completes on the last move and not before; for J_OR one input
/// holds `j+1` four turns earlier.
fn accepts_activation(t: &GadgetTemplate, q: &ReferenceSequence) -> bool {
    let Ok(trace) = replay_reference(t, q) else { return false };
    let n = q.moves.len();
    let complete = |b: &Board| t.outputs().into_iter().any(|p| t.port(p).activation.is_complete(t.harness_port(b, p)));
    if !complete(&trace[n]) || trace[..n].iter().any(complete) {
        return false;
    }
    match (t.kind, t.j) {
        (GadgetKind::JOr, Some(j)) => {
            n >= 4 && [Port::A, Port::B].iter().any(|&p| t.harness_port(&trace[n - 4], p) == j + 1)
        }
        _ => true,
    }
}

/// Facings of A and B after each sequence, provided every sequence replays
/// and leaves C fed.
pub fn reversible_combos(t: &GadgetTemplate) -> Option<Vec<(Facing, Facing)>> {
    let mut combos = Vec::new();
    for q in &t.sequences {
        let trace = replay_reference(t, q).ok()?;
        let f = super::harness_facing(t, trace.last().unwrap());
        if f[&Port::C] != Facing::In {
            return None;
        }
        combos.push((f[&Port::A], f[&Port::B]));
    }
    Some(combos)
}

/// How many outputs end a reference sequence holding exactly their activated
/// exponent, as opposed to having lost their tile.
pub fn clean_outputs(t: &GadgetTemplate) -> usize {
    t.sequences
        .iter()
        .filter_map(|q| replay_reference(t, q).ok())
        .map(|trace| {
            let last = trace.last().unwrap();
            t.outputs().into_iter().filter(|&p| t.port(p).activation.required == Some(t.harness_port(last, p))).count()
        })
        .sum()
}

fn accepts_reversible(t: &GadgetTemplate) -> bool {
    match reversible_combos(t) {
        Some(c) => c.iter().collect::<BTreeSet<_>>().len() == c.len(),
        None => false,
    }
}

/// Candidates of `space` that pass [`accepts`].
pub fn synthesize(space: &Space) -> Vec<GadgetTemplate> {
    let mut hits = Vec::new();
    space.for_each_candidate(|t| {
        if accepts(&t) {
            hits.push(t);
        }
    });
    hits
}

pub const AND_SEQUENCE: &str = "D,R,D,D,R,D,R,R";
pub const OR_SEQUENCE_VIA_B: &str = "D,D,D,D,R";
pub const OR_SEQUENCE_VIA_A: &str = "R,R,R,D,R";
pub const REVERSIBLE_SEQUENCES: [&str; 4] = ["R,L,L", "R,R,R,U,R,U,U", "R,R,R,D,D", "R,R,R,U,R,D,D"];
pub const CONNECTION_SEQUENCE: &str = "R,R,R,D,R";

fn seq(name: &str, fed: &[Port], moves: &str) -> ReferenceSequence {
    ReferenceSequence {
        name: name.to_string(),
        fed: fed.to_vec(),
        moves: crate::engine::parse_moves(moves).expect("constant sequences parse"),
    }
}

pub fn reference_sequences(kind: GadgetKind) -> Vec<ReferenceSequence> {
    match kind {
        GadgetKind::JAnd => vec![seq("both", &[Port::A, Port::B], AND_SEQUENCE)],
        GadgetKind::JOr => {
            vec![seq("via_b", &[Port::B], OR_SEQUENCE_VIA_B), seq("via_a", &[Port::A], OR_SEQUENCE_VIA_A)]
        }
        GadgetKind::RevAndOr => {
            ["a", "b", "c", "d"].iter().zip(REVERSIBLE_SEQUENCES).map(|(n, m)| seq(n, &[Port::C], m)).collect()
        }
        GadgetKind::Connection(..) => vec![seq("activation", &[Port::A], CONNECTION_SEQUENCE)],
        GadgetKind::Line(_) | GadgetKind::Corner(_) | GadgetKind::Lattice => Vec::new(),
    }
}

fn port(cell: Cell, side: super::Side, base: u8) -> PortSpec {
    PortSpec { cell, side, activation: super::ActivationPredicate { base, required: Some(base + 1) } }
}

/// J_AND / J_OR with A fed from the left, B from above and C leaving to the
/// right. `helpers` are offsets above `j`.
pub fn vertex_space(kind: GadgetKind, j: u8, a: Cell, b: Cell, c: Cell, helpers: &[u8]) -> Space {
    use super::Side;
    let ports = BTreeMap::from([
        (Port::A, port(a, Side::Left, j)),
        (Port::B, port(b, Side::Top, j)),
        (Port::C, port(c, Side::Right, j + 4)),
    ]);
    Space {
        kind,
        j: Some(j),
        ports,
        fixed: Vec::new(),
        rules: Vec::new(),
        helpers: helpers.iter().map(|h| j + h).collect(),
        sequences: reference_sequences(kind),
    }
}

/// Reversible gadget with C fed from the left on row `c_row`, `(2,3)`
/// holding `j+2` and refilled once with `j+3`.
pub fn reversible_space(j: u8, c_row: usize, a: (Cell, super::Side), b: (Cell, super::Side), helpers: &[u8]) -> Space {
    let ports = BTreeMap::from([
        (Port::A, port(a.0, a.1, j + 4)),
        (Port::B, port(b.0, b.1, j + 4)),
        (Port::C, port((c_row, 1), super::Side::Left, j)),
    ]);
    Space {
        kind: GadgetKind::RevAndOr,
        j: Some(j),
        ports,
        fixed: vec![((2, 3), j + 2)],
        rules: vec![OracleRule::once((2, 3), j + 2, vec![crate::engine::Placement::new(2, 3, j + 3)])],
        helpers: helpers.iter().map(|h| j + h).collect(),
        sequences: reference_sequences(GadgetKind::RevAndOr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadgets::instantiate_gadget;

    #[test]
    fn rediscovers_the_or_template() {
        let shipped = instantiate_gadget(GadgetKind::JOr, 4).unwrap();
        let space = vertex_space(GadgetKind::JOr, 4, (3, 1), (1, 3), (4, 4), &[1, 1, 2, 3]);
        let hits = synthesize(&space);
        assert!(hits.iter().any(|t| t.layout == shipped.layout));
    }

    #[test]
    fn rediscovers_the_and_template() {
        let shipped = instantiate_gadget(GadgetKind::JAnd, 4).unwrap();
        let space = vertex_space(GadgetKind::JAnd, 4, (2, 1), (1, 2), (2, 4), &[2, 2, 1, 1]);
        assert!(synthesize(&space).iter().any(|t| t.layout == shipped.layout));
    }

    #[test]
    fn equal_helpers_are_not_double_counted() {
        let space = vertex_space(GadgetKind::JAnd, 4, (2, 1), (1, 2), (2, 4), &[1, 1]);
        let mut layouts = Vec::new();
        space.for_each_candidate(|t| layouts.push(t.layout));
        let n = layouts.len();
        layouts.sort_by(|a, b| a.cells().cmp(b.cells()));
        layouts.dedup();
        assert_eq!(layouts.len(), n);
    }
}
