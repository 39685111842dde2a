//! Deterministic n×n 2048 with a scripted adversary, and the machinery built on
//! top of it: a constraint-logic gadget catalogue with a bounded contract
//! verifier, a compiler from planar constraint graphs to board instances, and
//! exhaustive move-sequence solvers.

pub mod engine;
pub mod gadgets;
pub mod ncl;
pub mod oracle;
pub mod reducer;
pub mod solver;

pub use engine::{Board, EngineError, Move, Placement, TurnError};
pub use oracle::{OracleError, OracleProgram, OracleState};
