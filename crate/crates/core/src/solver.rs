//! Exhaustive move-sequence search.
//!
//! [`solve_k_moves`] walks the 4-ary game tree depth-first to a fixed depth.
//! [`bounded_search`] is a breadth-first reachability search over
//! `(board, oracle state)` pairs and backs both goal-configuration solving and
//! the gadget contract verifier.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use indexmap::IndexSet;
use thiserror::Error;

use crate::engine::{run_turn, Board, Move, TurnError};
use crate::oracle::{OracleProgram, OracleState};

pub const DEFAULT_STATE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("visited-set cap of {cap} states exceeded")]
    StateExplosion { cap: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub leaves_visited: u64,
    pub states_visited: u64,
    pub max_depth: usize,
    /// Children dropped because the oracle tried to fill an occupied cell.
    pub conflicts: u64,
    pub pruned: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Found(Vec<Move>),
    Exhausted,
}

impl Outcome {
    pub fn is_found(&self) -> bool {
        matches!(self, Outcome::Found(_))
    }

    pub fn witness(&self) -> Option<&[Move]> {
        match self {
            Outcome::Found(w) => Some(w),
            Outcome::Exhausted => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub outcome: Outcome,
    pub stats: SearchStats,
}

/// When the `2^m` tile counts as a win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WinCheck {
    /// Any node on the path, including the root.
    #[default]
    AnyNode,
    /// Only configurations reached after exactly `k` moves.
    LeafOnly,
}

/// Depth-first search for a sequence of at most `k` moves producing a tile of
/// exponent `m`. Game-over nodes end their branch. Children follow the
/// canonical order ⇑, ⇓, ⇐, ⇒ and only legal moves are expanded.
pub fn solve_k_moves(board: &Board, program: &OracleProgram, k: usize, m: u8, check: WinCheck) -> SolveResult {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut path = Vec::with_capacity(k);
    let found = dfs(board, &program.initial_state(), program, k, m, check, 0, &mut path, &mut stats, &|| false);
    stats.elapsed = start.elapsed();
    SolveResult { outcome: if found { Outcome::Found(path) } else { Outcome::Exhausted }, stats }
}

/// [`solve_k_moves`] with the subtrees below the root's children shared out
/// over `workers` threads. The reported witness is the one the sequential
/// search finds: a child's win only stops the children after it in canonical
/// order. Stats of abandoned subtrees are partial.
pub fn solve_k_moves_parallel(
    board: &Board,
    program: &OracleProgram,
    k: usize,
    m: u8,
    check: WinCheck,
    workers: usize,
) -> SolveResult {
    let root_wins = board.contains_exponent(m) && (check == WinCheck::AnyNode || k == 0);
    if workers <= 1 || k == 0 || root_wins {
        return solve_k_moves(board, program, k, m, check);
    }
    let start = Instant::now();
    let mut stats = SearchStats { nodes_expanded: 1, ..Default::default() };
    let mut children = Vec::new();
    for mv in Move::ALL {
        let mut state = program.initial_state();
        match run_turn(board, mv, program, &mut state) {
            Ok(child) => children.push((mv, child, state)),
            Err(TurnError::IllegalMove(_)) => {}
            Err(_) => stats.conflicts += 1,
        }
    }
    let next = AtomicUsize::new(0);
    let best = AtomicUsize::new(usize::MAX);
    let results: Mutex<Vec<(usize, Vec<Move>, SearchStats)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(children.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= children.len() {
                    break;
                }
                if best.load(Ordering::SeqCst) < i {
                    continue;
                }
                let (mv, child, state) = &children[i];
                let mut sub = SearchStats::default();
                let mut path = vec![*mv];
                let stop = || best.load(Ordering::Relaxed) < i;
                if dfs(child, state, program, k, m, check, 1, &mut path, &mut sub, &stop) {
                    best.fetch_min(i, Ordering::SeqCst);
                } else {
                    path.clear();
                }
                results.lock().unwrap().push((i, path, sub));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);
    let mut witness = None;
    for (i, path, sub) in results {
        stats.nodes_expanded += sub.nodes_expanded;
        stats.leaves_visited += sub.leaves_visited;
        stats.conflicts += sub.conflicts;
        stats.max_depth = stats.max_depth.max(sub.max_depth);
        if witness.is_none() && !path.is_empty() && best.load(Ordering::SeqCst) == i {
            witness = Some(path);
        }
    }
    stats.elapsed = start.elapsed();
    SolveResult { outcome: witness.map_or(Outcome::Exhausted, Outcome::Found), stats }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    board: &Board,
    state: &OracleState,
    program: &OracleProgram,
    k: usize,
    m: u8,
    check: WinCheck,
    depth: usize,
    path: &mut Vec<Move>,
    stats: &mut SearchStats,
    stop: &dyn Fn() -> bool,
) -> bool {
    if stop() {
        return false;
    }
    stats.nodes_expanded += 1;
    stats.max_depth = stats.max_depth.max(depth);
    let wins = board.contains_exponent(m);
    if wins && (check == WinCheck::AnyNode || depth == k) {
        return true;
    }
    if depth == k {
        stats.leaves_visited += 1;
        return false;
    }
    for mv in Move::ALL {
        let mut child_state = state.clone();
        match run_turn(board, mv, program, &mut child_state) {
            Ok(child) => {
                path.push(mv);
                if dfs(&child, &child_state, program, k, m, check, depth + 1, path, stats, stop) {
                    return true;
                }
                path.pop();
            }
            Err(TurnError::IllegalMove(_)) => {}
            Err(_) => stats.conflicts += 1,
        }
    }
    false
}

/// Options for [`bounded_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BfsLimits {
    pub bound: usize,
    pub cap: usize,
    /// Cut any state whose largest tile exceeds this exponent.
    pub max_tile_cut: Option<u8>,
}

impl BfsLimits {
    pub fn new(bound: usize) -> Self {
        BfsLimits { bound, cap: DEFAULT_STATE_CAP, max_tile_cut: None }
    }
}

/// Breadth-first search from `board` for the first configuration satisfying
/// `goal`, exploring at most `limits.bound` moves. Returns a shortest witness.
pub fn bounded_search<G>(
    board: &Board,
    program: &OracleProgram,
    limits: BfsLimits,
    mut goal: G,
) -> Result<SolveResult, SolverError>
where
    G: FnMut(&Board) -> bool,
{
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let root = (board.clone(), program.initial_state());
    if goal(board) {
        stats.states_visited = 1;
        stats.elapsed = start.elapsed();
        return Ok(SolveResult { outcome: Outcome::Found(Vec::new()), stats });
    }
    // Each state is stored once; its index doubles as the arena slot holding
    // the parent link for witness reconstruction.
    let mut seen: IndexSet<(Board, OracleState)> = IndexSet::new();
    let mut links: Vec<(usize, Option<Move>)> = vec![(usize::MAX, None)];
    seen.insert(root);
    let mut frontier = vec![0usize];
    for depth in 0..limits.bound {
        let mut next = Vec::new();
        for &idx in &frontier {
            stats.nodes_expanded += 1;
            for mv in Move::ALL {
                let (b, st) = seen.get_index(idx).unwrap();
                let mut child_state = st.clone();
                let child = match run_turn(b, mv, program, &mut child_state) {
                    Ok(c) => c,
                    Err(TurnError::IllegalMove(_)) => continue,
                    Err(_) => {
                        stats.conflicts += 1;
                        continue;
                    }
                };
                if let Some(cut) = limits.max_tile_cut {
                    if child.max_tile() > cut {
                        stats.pruned += 1;
                        continue;
                    }
                }
                let hit = goal(&child);
                let (child_idx, fresh) = seen.insert_full((child, child_state));
                if !fresh {
                    continue;
                }
                if seen.len() > limits.cap {
                    return Err(SolverError::StateExplosion { cap: limits.cap });
                }
                links.push((idx, Some(mv)));
                stats.max_depth = depth + 1;
                if hit {
                    stats.states_visited = seen.len() as u64;
                    stats.elapsed = start.elapsed();
                    return Ok(SolveResult { outcome: Outcome::Found(trace(&links, child_idx)), stats });
                }
                next.push(child_idx);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    stats.states_visited = seen.len() as u64;
    stats.elapsed = start.elapsed();
    Ok(SolveResult { outcome: Outcome::Exhausted, stats })
}

fn trace(links: &[(usize, Option<Move>)], mut idx: usize) -> Vec<Move> {
    let mut moves = Vec::new();
    while let Some(mv) = links[idx].1 {
        moves.push(mv);
        idx = links[idx].0;
    }
    moves.reverse();
    moves
}

/// Bounded goal-configuration reachability. With `lemma1_cut`, branches whose
/// largest tile already exceeds the goal's are abandoned, since the maximum
/// tile never decreases.
pub fn bounded_config_to_config(
    board: &Board,
    program: &OracleProgram,
    goal: &Board,
    bound: usize,
    cap: usize,
    lemma1_cut: bool,
) -> Result<SolveResult, SolverError> {
    let limits = BfsLimits { bound, cap, max_tile_cut: lemma1_cut.then(|| goal.max_tile()) };
    if lemma1_cut && board.max_tile() > goal.max_tile() {
        return Ok(SolveResult { outcome: Outcome::Exhausted, stats: SearchStats { pruned: 1, ..Default::default() } });
    }
    bounded_search(board, program, limits, |b| b == goal)
}

/// Replays `moves` through the turn cycle, reporting the index of the first
/// failing turn.
pub fn replay(board: &Board, program: &OracleProgram, moves: &[Move]) -> Result<Board, (usize, TurnError)> {
    replay_trace(board, program, moves).map(|mut t| t.pop().unwrap())
}

/// Like [`replay`] but returns every intermediate configuration, starting with
/// `board` itself.
pub fn replay_trace(board: &Board, program: &OracleProgram, moves: &[Move]) -> Result<Vec<Board>, (usize, TurnError)> {
    let mut state = program.initial_state();
    let mut boards = vec![board.clone()];
    for (i, &mv) in moves.iter().enumerate() {
        let next = run_turn(boards.last().unwrap(), mv, program, &mut state).map_err(|e| (i, e))?;
        boards.push(next);
    }
    Ok(boards)
}
