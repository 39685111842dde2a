//! `t48`: play boards by hand, verify gadgets, compile constraint graphs into
//! board instances and run the solvers.
//!
//! Exit status: 0 success, 1 negative answer (NONE, EXHAUSTED, contract
//! violated, game over), 2 usage or input error.

mod manifest;

use std::fmt::{self, Display, Write as _};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::RunManifest;
use t48_core::engine::{format_moves, run_turn, Board, Move, TurnError};
use t48_core::gadgets::{
    contract_report_parallel, instantiate_gadget, lattice_fill, output_activated, replay_reference,
    verify_lattice_rigidity, GadgetKind, GadgetTemplate, Reach, LATTICE_ANCHOR,
};
use t48_core::ncl::{self, ConstraintGraph, LoadOptions, OrProfile, Orientation, DEFAULT_NCL_CAP};
use t48_core::oracle::OracleProgram;
use t48_core::reducer::{emit_instance, ReduceError};
use t48_core::solver::{
    bounded_config_to_config, replay, solve_k_moves_parallel, SolveResult, SolverError, WinCheck, DEFAULT_STATE_CAP,
};

#[derive(Parser)]
#[command(name = "t48", version, about = "Deterministic 2048 with a scripted adversary")]
struct Cli {
    /// Where to write the JSON run manifest.
    #[arg(long, global = true, default_value = "t48-manifest.json")]
    manifest: PathBuf,
    /// Threads for the k-move solver and the gadget verifier. 1 is deterministic
    /// in every statistic; more threads still return the same witness.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step through a board by hand: u, d, l, r to move, q to quit.
    Play(PlayArgs),
    /// Check a gadget's activation contract by bounded search.
    VerifyGadget(VerifyArgs),
    /// Compile a constraint graph and two orientations into a board bundle.
    Reduce(ReduceArgs),
    /// Search for a k-move win, or for a path to a goal board.
    Solve(SolveArgs),
    /// Constraint-logic reachability on the graph itself.
    Ncl(NclArgs),
    /// Run again with the arguments recorded in a manifest.
    Rerun {
        /// Manifest written by an earlier run.
        recorded: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Play(_) => "play",
            Command::VerifyGadget(_) => "verify-gadget",
            Command::Reduce(_) => "reduce",
            Command::Solve(_) => "solve",
            Command::Ncl(_) => "ncl",
            Command::Rerun { .. } => "rerun",
        }
    }
}

#[derive(Args)]
struct PlayArgs {
    board: PathBuf,
    /// Adversary program. Without one the adversary never places a tile.
    oracle: Option<PathBuf>,
    /// Announce when this configuration is reached and stop.
    #[arg(long)]
    goal: Option<PathBuf>,
    /// Show tile values 2^e instead of exponents.
    #[arg(long)]
    values: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindName {
    And,
    Or,
    Rev,
    Connection,
    Line,
    Corner,
    Lattice,
}

#[derive(Args)]
struct VerifyArgs {
    kind: KindName,
    /// j for and/or/rev, k for line/corner, k and k' for connection.
    levels: Vec<u8>,
    #[arg(long, default_value_t = 20)]
    bound: usize,
    /// Visited-state cap per hypothesis.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
    /// Side length for `lattice`.
    #[arg(long, default_value_t = 4)]
    size: usize,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the harness of the first reference sequence (board, oracle, and
    /// the configuration the sequence ends in as goal) to this directory.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[derive(Args)]
struct GraphOptions {
    /// OR vertices with weights 1,1,1 and inflow at least 1.
    #[arg(long)]
    literal_or: bool,
    /// Reject degree-1 vertices instead of treating them as free edge ends.
    #[arg(long)]
    no_free_ends: bool,
}

impl GraphOptions {
    fn load(&self) -> LoadOptions {
        LoadOptions {
            or_profile: if self.literal_or { OrProfile::Literal } else { OrProfile::Standard },
            free_ends: !self.no_free_ends,
        }
    }
}

#[derive(Args)]
struct ReduceArgs {
    graph: PathBuf,
    start: PathBuf,
    target: PathBuf,
    out_dir: PathBuf,
    #[command(flatten)]
    graph_options: GraphOptions,
}

#[derive(Args)]
struct SolveArgs {
    board: PathBuf,
    oracle: Option<PathBuf>,
    /// Moves allowed in k-move mode.
    #[arg(long, requires = "m", conflicts_with = "goal")]
    k: Option<usize>,
    /// Winning exponent in k-move mode.
    #[arg(long, requires = "k")]
    m: Option<u8>,
    /// Only count a win after exactly k moves.
    #[arg(long)]
    leaf_only: bool,
    /// Goal board for reachability mode.
    #[arg(long)]
    goal: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    bound: usize,
    /// Abandon branches whose largest tile exceeds the goal's.
    #[arg(long)]
    cut: bool,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
    /// Write the result here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NclArgs {
    graph: PathBuf,
    start: PathBuf,
    /// Target orientation file.
    #[arg(long, conflicts_with = "edge")]
    target: Option<PathBuf>,
    /// Reverse the edge between these two vertices.
    #[arg(long, num_args = 2, value_names = ["U", "V"])]
    edge: Option<Vec<String>>,
    /// Require the reversed edge to point at this vertex.
    #[arg(long, requires = "edge")]
    head: Option<String>,
    #[arg(long, default_value_t = DEFAULT_NCL_CAP)]
    cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    graph_options: GraphOptions,
}

struct Failure {
    code: u8,
    msg: String,
}

fn input_error(e: impl Display) -> Failure {
    Failure { code: 2, msg: e.to_string() }
}

fn negative(e: impl Display) -> Failure {
    Failure { code: 1, msg: e.to_string() }
}

type Status = Result<u8, Failure>;

fn main() -> ExitCode {
    let mut argv: Vec<String> = std::env::args().collect();
    let mut cli = Cli::parse();
    if let Command::Rerun { recorded } = &cli.command {
        argv = match RunManifest::read(recorded) {
            Ok(r) => r.argv,
            Err(e) => {
                eprintln!("error: {}: {e}", recorded.display());
                return ExitCode::from(2);
            }
        };
        cli = match Cli::try_parse_from(&argv) {
            Ok(c) if !matches!(c.command, Command::Rerun { .. }) => c,
            Ok(_) => {
                eprintln!("error: {} records another rerun", recorded.display());
                return ExitCode::from(2);
            }
            Err(e) => {
                eprintln!("error: {}: recorded arguments do not parse: {e}", recorded.display());
                return ExitCode::from(2);
            }
        };
    }
    // A rerun records the replayed arguments, so its manifest can be rerun too.
    let mut m = RunManifest { command: cli.command.name().into(), argv, ..Default::default() };
    m.param("workers", cli.workers);
    let workers = cli.workers.max(1);
    let result = match &cli.command {
        Command::Play(a) => play(a, &mut m),
        Command::VerifyGadget(a) => verify_gadget(a, workers, &mut m),
        Command::Reduce(a) => reduce(a, &mut m),
        Command::Solve(a) => solve(a, workers, &mut m),
        Command::Ncl(a) => ncl_search(a, &mut m),
        Command::Rerun { .. } => unreachable!("reruns are resolved above"),
    };
    let status = result.unwrap_or_else(|f| {
        eprintln!("error: {}", f.msg);
        m.stat("error", f.msg);
        f.code
    });
    m.exit_status = status.into();
    if let Err(e) = m.write(&cli.manifest) {
        eprintln!("error: cannot write manifest {}: {e}", cli.manifest.display());
        return ExitCode::from(2);
    }
    ExitCode::from(status)
}

fn read_input(path: &Path, m: &mut RunManifest) -> Result<String, Failure> {
    m.inputs.push(path.display().to_string());
    std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn in_file(path: &Path, e: impl Display) -> Failure {
    input_error(format!("{}: {e}", path.display()))
}

fn load_board(path: &Path, m: &mut RunManifest) -> Result<Board, Failure> {
    Board::parse(&read_input(path, m)?).map_err(|e| in_file(path, e))
}

fn load_oracle(path: Option<&Path>, board: &Board, m: &mut RunManifest) -> Result<OracleProgram, Failure> {
    let Some(path) = path else { return Ok(OracleProgram::default()) };
    let program = OracleProgram::parse(&read_input(path, m)?).map_err(|e| in_file(path, e))?;
    program.check_bounds(board.size()).map_err(|e| in_file(path, e))?;
    Ok(program)
}

fn load_graph(path: &Path, opts: &GraphOptions, m: &mut RunManifest) -> Result<ConstraintGraph, Failure> {
    ConstraintGraph::parse(&read_input(path, m)?, opts.load()).map_err(|e| in_file(path, e))
}

fn load_orientation(g: &ConstraintGraph, path: &Path, m: &mut RunManifest) -> Result<Orientation, Failure> {
    Orientation::parse(g, &read_input(path, m)?).map_err(|e| in_file(path, e))
}

fn write_output(path: &Path, text: &str, m: &mut RunManifest) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))?;
    m.outputs.push(path.display().to_string());
    Ok(())
}

/// Prints `text` and copies it to `out` if given.
fn emit(text: &str, out: Option<&Path>, m: &mut RunManifest) -> Result<(), Failure> {
    print!("{text}");
    match out {
        Some(p) => write_output(p, text, m),
        None => Ok(()),
    }
}

fn play(a: &PlayArgs, m: &mut RunManifest) -> Status {
    let mut board = load_board(&a.board, m)?;
    let program = load_oracle(a.oracle.as_deref(), &board, m)?;
    let goal = a.goal.as_deref().map(|p| load_board(p, m)).transpose()?;
    m.param("values", a.values);
    let mut state = program.initial_state();
    let mut turns = 0u64;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let say = |out: &mut std::io::StdoutLock, s: &str| {
        let _ = writeln!(out, "{s}");
        let _ = out.flush();
    };
    say(&mut out, board.render(a.values).trim_end());
    let mut lines = std::io::stdin().lock().lines();
    let status = 'session: loop {
        let Some(Ok(line)) = lines.next() else { break 0 };
        for key in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            if key.eq_ignore_ascii_case("q") {
                break 'session 0;
            }
            let Ok(mv) = key.parse::<Move>() else {
                say(&mut out, &format!("unknown key `{key}`: use u, d, l, r or q"));
                continue;
            };
            if board.is_game_over() {
                say(&mut out, "no legal moves: game over");
                break 'session 1;
            }
            match run_turn(&board, mv, &program, &mut state) {
                Ok(next) => {
                    board = next;
                    turns += 1;
                    say(&mut out, &format!("turn {turns}: {}", mv.arrow()));
                    say(&mut out, board.render(a.values).trim_end());
                }
                Err(TurnError::IllegalMove(_)) => {
                    say(&mut out, &format!("illegal move {}: nothing would slide", mv.arrow()));
                    continue;
                }
                Err(e) => {
                    say(&mut out, &format!("move {} rejected: {e}", mv.arrow()));
                    continue;
                }
            }
            if goal.as_ref() == Some(&board) {
                say(&mut out, "goal reached");
                break 'session 0;
            }
            if board.is_game_over() {
                say(&mut out, "no legal moves: game over");
                break 'session 1;
            }
        }
    };
    m.stat("turns", turns);
    m.stat("max_tile", board.max_tile());
    m.stat("game_over", board.is_game_over());
    Ok(status)
}

fn gadget_kind(a: &VerifyArgs) -> Result<(GadgetKind, u8), Failure> {
    let want = |n: usize, what: &str| {
        if a.levels.len() == n {
            Ok(())
        } else {
            Err(input_error(format!("expected {what}, got {} level argument(s)", a.levels.len())))
        }
    };
    Ok(match a.kind {
        KindName::And => want(1, "j").map(|_| (GadgetKind::JAnd, a.levels[0]))?,
        KindName::Or => want(1, "j").map(|_| (GadgetKind::JOr, a.levels[0]))?,
        KindName::Rev => want(1, "j").map(|_| (GadgetKind::RevAndOr, a.levels[0]))?,
        KindName::Connection => want(2, "k and k'").map(|_| (GadgetKind::Connection(a.levels[0], a.levels[1]), 0))?,
        KindName::Line => want(1, "k").map(|_| (GadgetKind::Line(a.levels[0]), 0))?,
        KindName::Corner => want(1, "k").map(|_| (GadgetKind::Corner(a.levels[0]), 0))?,
        KindName::Lattice => want(0, "no levels").map(|_| (GadgetKind::Lattice, 0))?,
    })
}

fn reach_text(r: &Reach) -> String {
    match r {
        Reach::Reachable(w) if w.is_empty() => "reachable without moves".into(),
        Reach::Reachable(w) => format!("reachable in {}: {}", w.len(), format_moves(w)),
        Reach::Unreachable => "unreachable".into(),
        Reach::Exploded { cap } => format!("undecided, state cap {cap} reached"),
    }
}

fn reference_lines(t: &GadgetTemplate) -> String {
    let mut s = String::new();
    for q in &t.sequences {
        let fed: Vec<String> = q.fed.iter().map(|p| p.to_string()).collect();
        let verdict = match replay_reference(t, q) {
            Ok(trace) if output_activated(t, trace.last().unwrap()) => "output activated".to_string(),
            Ok(_) => "replays, output not activated".to_string(),
            Err(e) => e.to_string(),
        };
        let _ = writeln!(s, "reference {} fed {} moves {}: {verdict}", q.name, fed.join("+"), format_moves(&q.moves));
    }
    s
}

fn verify_gadget(a: &VerifyArgs, workers: usize, m: &mut RunManifest) -> Status {
    let (kind, j) = gadget_kind(a)?;
    m.param("kind", kind);
    m.param("bound", a.bound);
    m.param("cap", a.cap);
    if kind == GadgetKind::Lattice {
        m.param("size", a.size);
        if a.size == 0 {
            return Err(input_error("lattice size must be at least 1"));
        }
        let rigid = verify_lattice_rigidity(a.size);
        let text = format!(
            "lattice {0}x{0} anchor {LATTICE_ANCHOR}: {1}\n",
            a.size,
            if rigid { "rigid" } else { "NOT rigid" }
        );
        emit(&text, a.report.as_deref(), m)?;
        if let Some(dir) = &a.bundle {
            let board = lattice_fill(a.size, LATTICE_ANCHOR);
            write_bundle(dir, &board, &OracleProgram::default(), &board, m)?;
        }
        m.stat("rigid", rigid);
        return Ok(if rigid { 0 } else { 1 });
    }
    m.param("j", j);
    let t = instantiate_gadget(kind, j).map_err(input_error)?;
    let rep = contract_report_parallel(&t, a.bound, a.cap, workers);
    let mut text = format!("gadget {kind}{}\nbound {}\n", t.j.map(|j| format!(" j={j}")).unwrap_or_default(), a.bound);
    for o in &rep.outcomes {
        let expect = if o.hypothesis.expect_reachable { "reachable" } else { "unreachable" };
        let mark = if o.agrees() { "ok" } else { "VIOLATED" };
        let _ = writeln!(
            text,
            "fed {}: expect {expect}, found {} ({} states) {mark}",
            o.hypothesis,
            reach_text(&o.reach),
            o.stats.states_visited
        );
    }
    text.push_str(&reference_lines(&t));
    text.push_str(if rep.holds() { "contract holds\n" } else { "contract violated\n" });
    emit(&text, a.report.as_deref(), m)?;
    if let Some(dir) = &a.bundle {
        let seq = t.sequences.first();
        let fed = seq.map_or_else(|| t.inputs(), |q| q.fed.clone());
        let (board, program) = t.harness(&fed);
        let goal = match seq {
            Some(q) => replay_reference(&t, q).map_err(input_error)?.pop().unwrap(),
            None => board.clone(),
        };
        write_bundle(dir, &board, &program, &goal, m)?;
    }
    let states: u64 = rep.outcomes.iter().map(|o| o.stats.states_visited).sum();
    m.stat("states_visited", states);
    m.stat("holds", rep.holds());
    if let Some(cap) = rep.outcomes.iter().find_map(|o| match o.reach {
        Reach::Exploded { cap } => Some(cap),
        _ => None,
    }) {
        return Err(negative(SolverError::StateExplosion { cap }));
    }
    Ok(if rep.holds() { 0 } else { 1 })
}

fn write_bundle(
    dir: &Path,
    board: &Board,
    program: &OracleProgram,
    goal: &Board,
    m: &mut RunManifest,
) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| input_error(format!("cannot create {}: {e}", dir.display())))?;
    write_output(&dir.join("board.txt"), &board.to_text(), m)?;
    write_output(&dir.join("oracle.txt"), &program.to_text(), m)?;
    write_output(&dir.join("goal.txt"), &goal.to_text(), m)
}

fn reduce(a: &ReduceArgs, m: &mut RunManifest) -> Status {
    let g = load_graph(&a.graph, &a.graph_options, m)?;
    let o0 = load_orientation(&g, &a.start, m)?;
    let of = load_orientation(&g, &a.target, m)?;
    m.param("literal_or", a.graph_options.literal_or);
    m.param("free_ends", !a.graph_options.no_free_ends);
    let out = emit_instance(&g, &o0, &of).map_err(|e| match e {
        ReduceError::NotFourColorable | ReduceError::RoutingFailure { .. } => negative(e),
        other => input_error(other),
    })?;
    out.write_bundle(&g, &a.out_dir).map_err(input_error)?;
    for f in ["board.txt", "goal.txt", "oracle.txt", "placement.txt"] {
        m.outputs.push(a.out_dir.join(f).display().to_string());
    }
    let plan = &out.placement;
    println!("grid {0}x{0}, board {1}x{1}", plan.side, plan.board_size());
    for (name, (kind, j)) in &out.vertex_gadgets {
        println!("vertex {name}: {kind} j={j}");
    }
    for (kind, count) in plan.census() {
        println!("{kind}: {count}");
        m.stat(&format!("census_{kind}"), count);
    }
    m.stat("board_size", plan.board_size());
    Ok(0)
}

fn result_text(label_none: &str, res: &SolveResult, extra: &str) -> String {
    let mut s = String::new();
    match res.outcome.witness() {
        Some(w) => {
            let _ = writeln!(s, "result FOUND\nwitness {}\nlength {}", format_moves(w), w.len());
        }
        None => {
            let _ = writeln!(s, "result {label_none}");
        }
    }
    s.push_str(extra);
    let st = &res.stats;
    let _ = writeln!(
        s,
        "nodes_expanded {}\nleaves_visited {}\nstates_visited {}\npruned {}\nelapsed_ms {:.3}",
        st.nodes_expanded,
        st.leaves_visited,
        st.states_visited,
        st.pruned,
        st.elapsed.as_secs_f64() * 1e3
    );
    s
}

fn record_stats(res: &SolveResult, m: &mut RunManifest) {
    m.stat("found", res.outcome.is_found());
    m.stat("nodes_expanded", res.stats.nodes_expanded);
    m.stat("leaves_visited", res.stats.leaves_visited);
    m.stat("states_visited", res.stats.states_visited);
    m.stat("elapsed_ms", res.stats.elapsed.as_secs_f64() * 1e3);
}

fn solve(a: &SolveArgs, workers: usize, m: &mut RunManifest) -> Status {
    let board = load_board(&a.board, m)?;
    let program = load_oracle(a.oracle.as_deref(), &board, m)?;
    if let (Some(k), Some(target)) = (a.k, a.m) {
        m.param("k", k);
        m.param("m", target);
        m.param("leaf_only", a.leaf_only);
        if target == 0 {
            return Err(input_error("m must be at least 1"));
        }
        let check = if a.leaf_only { WinCheck::LeafOnly } else { WinCheck::AnyNode };
        let res = solve_k_moves_parallel(&board, &program, k, target, check, workers);
        emit(&result_text("EXHAUSTED", &res, ""), a.out.as_deref(), m)?;
        record_stats(&res, m);
        return Ok(if res.outcome.is_found() { 0 } else { 1 });
    }
    let Some(goal_path) = &a.goal else {
        return Err(input_error("give either --k and --m, or --goal"));
    };
    let goal = load_board(goal_path, m)?;
    if goal.size() != board.size() {
        return Err(in_file(goal_path, format!("goal is {0}x{0} but the board is {1}x{1}", goal.size(), board.size())));
    }
    m.param("bound", a.bound);
    m.param("cap", a.cap);
    m.param("cut", a.cut);
    let res = bounded_config_to_config(&board, &program, &goal, a.bound, a.cap, a.cut).map_err(negative)?;
    let extra = match res.outcome.witness() {
        Some(w) => format!("replays_to_goal {}\n", replay(&board, &program, w).is_ok_and(|b| b == goal)),
        None => String::new(),
    };
    emit(&result_text("NONE", &res, &extra), a.out.as_deref(), m)?;
    record_stats(&res, m);
    Ok(if res.outcome.is_found() { 0 } else { 1 })
}

struct EdgeName<'a>(&'a ConstraintGraph, usize);

impl fmt::Display for EdgeName<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.0.edge(self.1);
        write!(f, "{}-{}", self.0.name(e.u), self.0.name(e.v))
    }
}

fn ncl_search(a: &NclArgs, m: &mut RunManifest) -> Status {
    let g = load_graph(&a.graph, &a.graph_options, m)?;
    let o0 = load_orientation(&g, &a.start, m)?;
    m.param("cap", a.cap);
    let vertex = |name: &str| g.vertex(name).ok_or_else(|| input_error(format!("unknown vertex `{name}`")));
    let found = match (&a.target, &a.edge) {
        (Some(path), _) => {
            let of = load_orientation(&g, path, m)?;
            ncl::ncl_config_to_config(&g, &o0, &of, a.cap)
        }
        (None, Some(ends)) => {
            let (u, v) = (vertex(&ends[0])?, vertex(&ends[1])?);
            let e = g.edge_between(u, v).ok_or_else(|| input_error(format!("no edge {} {}", ends[0], ends[1])))?;
            m.param("edge", EdgeName(&g, e));
            match &a.head {
                Some(h) => {
                    m.param("head", h);
                    ncl::ncl_config_to_head(&g, &o0, e, vertex(h)?, a.cap)
                }
                None => ncl::ncl_config_to_edge(&g, &o0, e, a.cap),
            }
        }
        (None, None) => return Err(input_error("give --target or --edge")),
    }
    .map_err(input_error)?;
    let text = match &found {
        Some(w) if w.is_empty() => "result FOUND\nwitness (empty)\nlength 0\n".to_string(),
        Some(w) => format!("result FOUND\nwitness {}\nlength {}\n", ncl::format_reversals(&g, w), w.len()),
        None => "result NONE\n".to_string(),
    };
    emit(&text, a.out.as_deref(), m)?;
    m.stat("found", found.is_some());
    if let Some(w) = &found {
        m.stat("length", w.len());
    }
    Ok(if found.is_some() { 0 } else { 1 })
}
