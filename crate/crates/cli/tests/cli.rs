use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn t48(dir: &Path, args: &[&str], stdin: &str) -> Run {
    let mut child = Command::new(env!("CARGO_BIN_EXE_t48"))
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let Output { status, stdout, stderr } = child.wait_with_output().unwrap();
    Run {
        code: status.code().unwrap(),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

const SINGLE_AND: &str = "\
vertex x
vertex a
vertex b
vertex c
edge a x weight=1
edge b x weight=1
edge x c weight=2
rotation x: c a b
";

const TWO_VERTICES: &str = "\
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

/// The AND harness at j=4 with A and B fed, and the configuration the
/// reference sequence ends in as goal.
fn and_bundle(dir: &Path) -> PathBuf {
    let r = t48(dir, &["verify-gadget", "and", "4", "--bound", "0", "--bundle", "and4"], "");
    assert!(r.stdout.contains("reference both fed A+B moves D,R,D,D,R,D,R,R: output activated"), "{}", r.stdout);
    dir.join("and4")
}

#[test]
fn play_quits_cleanly_and_writes_manifest() {
    let d = TempDir::new().unwrap();
    write(d.path(), "empty.txt", "4\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n");
    let r = t48(d.path(), &["play", "empty.txt", "--manifest", "run.json"], "q\n");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = manifest(d.path(), "run.json");
    assert_eq!(m["command"], "play");
    assert_eq!(m["exit_status"], 0);
}

#[test]
fn play_on_stuck_board_reports_game_over() {
    let d = TempDir::new().unwrap();
    write(d.path(), "stuck.txt", "2\n1 2\n2 1\n");
    let r = t48(d.path(), &["play", "stuck.txt"], "l\n");
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("no legal moves"));
    assert_eq!(manifest(d.path(), "t48-manifest.json")["stats"]["game_over"], true);
}

#[test]
fn play_rejects_illegal_move_and_keeps_going() {
    let d = TempDir::new().unwrap();
    write(d.path(), "b.txt", "2\n1 0\n0 0\n");
    let r = t48(d.path(), &["play", "b.txt"], "u\nx\nr\nq\n");
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("illegal move ⇑"));
    assert!(r.stdout.contains("unknown key `x`"));
    assert!(r.stdout.contains("turn 1: ⇒"));
}

#[test]
fn play_and_reference_sequence_activates_output() {
    let d = TempDir::new().unwrap();
    let b = and_bundle(d.path());
    let args = ["play", "and4/board.txt", "and4/oracle.txt", "--goal", "and4/goal.txt"];
    let r = t48(d.path(), &args, "d r d d r d r r\n");
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("turn 8: ⇒") && r.stdout.ends_with("goal reached\n"));
    // C sits at window cell (2,4), board cell (3,5), and holds j+5 = 9.
    let last: Vec<&str> = r.stdout.lines().rev().skip(1).take(6).collect();
    let row3: Vec<&str> = last[3].split_whitespace().collect();
    assert_eq!(row3[4], "9");
    assert!(b.join("goal.txt").exists());
}

#[test]
fn verify_or_gadget_holds() {
    let d = TempDir::new().unwrap();
    let r = t48(d.path(), &["verify-gadget", "or", "4", "--bound", "20", "--report", "or.txt"], "");
    assert_eq!(r.code, 0, "{}", r.stdout);
    let report = std::fs::read_to_string(d.path().join("or.txt")).unwrap();
    assert!(report.ends_with("contract holds\n"));
    assert_eq!(report.matches("output activated").count(), 2);
}

#[test]
fn verify_and_gadget_reports_single_input_activation() {
    let d = TempDir::new().unwrap();
    let r = t48(d.path(), &["verify-gadget", "and", "4", "--bound", "12"], "");
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("fed A: expect unreachable, found reachable in 11"));
    assert!(r.stdout.ends_with("contract violated\n"));
}

#[test]
fn verify_unsupported_level_is_an_input_error() {
    let d = TempDir::new().unwrap();
    let r = t48(d.path(), &["verify-gadget", "or", "9"], "");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("not available at level 9"));
}

#[test]
fn verify_lattice_rigidity() {
    let d = TempDir::new().unwrap();
    let r = t48(d.path(), &["verify-gadget", "lattice", "--size", "12"], "");
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("12x12 anchor 1: rigid"));
}

#[test]
fn verify_state_cap_is_surfaced() {
    let d = TempDir::new().unwrap();
    let r = t48(d.path(), &["verify-gadget", "and", "5", "--bound", "20", "--cap", "2000"], "");
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("cap of 2000"));
}

#[test]
fn reduce_single_and() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.ncl", SINGLE_AND);
    write(d.path(), "o0.txt", "orient a x -> x\norient b x -> x\norient x c -> c\n");
    write(d.path(), "of.txt", "orient a x -> x\norient b x -> b\norient x c -> x\n");
    let r = t48(d.path(), &["reduce", "g.ncl", "o0.txt", "of.txt", "out"], "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.starts_with("grid 3x3, board 12x12\n"));
    let placement = std::fs::read_to_string(d.path().join("out/placement.txt")).unwrap();
    assert_eq!(placement.lines().filter(|l| l.starts_with("vertex")).count(), 1);
    assert!(!placement.contains("connection"));
    for f in ["board.txt", "goal.txt", "oracle.txt"] {
        assert!(d.path().join("out").join(f).exists());
    }
}

#[test]
fn reduce_two_vertices_has_one_connection() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.ncl", TWO_VERTICES);
    // x idle with its weight-2 edge in; y an OR whose C edge y-c points out.
    let o = "orient a x -> x\norient b x -> x\norient x y -> x\norient y c -> c\norient y d -> y\n";
    write(d.path(), "o.txt", o);
    let r = t48(d.path(), &["reduce", "g.ncl", "o.txt", "o.txt", "out"], "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let placement = std::fs::read_to_string(d.path().join("out/placement.txt")).unwrap();
    assert_eq!(placement.matches("connection").count(), 1, "{placement}");
    assert!(r.stdout.contains("connection: 1"));
}

#[test]
fn reduce_k5_fails_validation() {
    let d = TempDir::new().unwrap();
    let names = ["a", "b", "c", "d", "e"];
    let mut text: String = names.iter().map(|n| format!("vertex {n}\n")).collect();
    for i in 0..5 {
        for j in i + 1..5 {
            text.push_str(&format!("edge {} {} weight=1\n", names[i], names[j]));
        }
    }
    write(d.path(), "k5.ncl", &text);
    write(d.path(), "o.txt", "");
    let r = t48(d.path(), &["reduce", "k5.ncl", "o.txt", "o.txt", "out"], "");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("degree 4"));
}

#[test]
fn reduce_same_role_edge_is_a_routing_failure() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.ncl", TWO_VERTICES);
    // x's weight-2 edge points out, so x gets the reversible gadget whose C is
    // an input; x-y is also an input at y.
    let o = "orient a x -> x\norient b x -> x\norient x y -> y\norient y c -> c\norient y d -> d\n";
    write(d.path(), "o.txt", o);
    let r = t48(d.path(), &["reduce", "g.ncl", "o.txt", "o.txt", "out"], "");
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("cannot route edge x-y"));
}

#[test]
fn reduce_rejects_invalid_orientation() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.ncl", SINGLE_AND);
    write(d.path(), "bad.txt", "orient a x -> a\norient b x -> x\norient x c -> c\n");
    let r = t48(d.path(), &["reduce", "g.ncl", "bad.txt", "bad.txt", "out"], "");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("not a valid configuration"));
}

#[test]
fn solve_k_moves_modes() {
    let d = TempDir::new().unwrap();
    write(d.path(), "pair.txt", "4\n0 0 0 0\n0 4 4 0\n0 0 0 0\n0 0 0 0\n");
    let r = t48(d.path(), &["solve", "pair.txt", "--k", "1", "--m", "5", "--out", "res.txt"], "");
    assert_eq!(r.code, 0);
    let res = std::fs::read_to_string(d.path().join("res.txt")).unwrap();
    assert!(res.starts_with("result FOUND\nwitness L\nlength 1\n"), "{res}");
    let r = t48(d.path(), &["solve", "pair.txt", "--k", "0", "--m", "5"], "");
    assert_eq!(r.code, 1);
    assert!(r.stdout.starts_with("result EXHAUSTED"));
    let one = t48(d.path(), &["solve", "pair.txt", "--k", "3", "--m", "5"], "");
    let four = t48(d.path(), &["solve", "pair.txt", "--k", "3", "--m", "5", "--workers", "4"], "");
    assert!(one.stdout.starts_with("result FOUND\nwitness U,D,L\n"), "{}", one.stdout);
    assert_eq!(one.stdout.lines().nth(1), four.stdout.lines().nth(1));
}

#[test]
fn solve_goal_mode_on_and_bundle() {
    let d = TempDir::new().unwrap();
    and_bundle(d.path());
    let args = ["solve", "and4/board.txt", "and4/oracle.txt", "--goal", "and4/goal.txt", "--bound", "20"];
    let r = t48(d.path(), &args, "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("replays_to_goal true"));
}

#[test]
fn solve_without_mode_is_usage_error() {
    let d = TempDir::new().unwrap();
    write(d.path(), "pair.txt", "2\n0 0\n0 0\n");
    assert_eq!(t48(d.path(), &["solve", "pair.txt"], "").code, 2);
    assert_eq!(t48(d.path(), &["solve", "pair.txt", "--k", "2"], "").code, 2);
    write(d.path(), "bad.txt", "2\n0 x\n0 0\n");
    let r = t48(d.path(), &["solve", "bad.txt", "--k", "1", "--m", "3"], "");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 2"), "{}", r.stderr);
}

#[test]
fn ncl_searches() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.ncl", SINGLE_AND);
    write(d.path(), "o0.txt", "orient a x -> x\norient b x -> x\norient x c -> x\n");
    let r = t48(d.path(), &["ncl", "g.ncl", "o0.txt", "--target", "o0.txt"], "");
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("witness (empty)"));
    let r = t48(d.path(), &["ncl", "g.ncl", "o0.txt", "--edge", "a", "x", "--out", "w.txt"], "");
    assert_eq!(r.code, 0);
    assert_eq!(std::fs::read_to_string(d.path().join("w.txt")).unwrap(), "result FOUND\nwitness a-x\nlength 1\n");
}

#[test]
fn ncl_frozen_cube_has_no_witness() {
    let d = TempDir::new().unwrap();
    let mut g = String::new();
    for i in 0..4 {
        g.push_str(&format!("vertex a{i}\nvertex b{i}\n"));
    }
    for i in 0..4 {
        let j = (i + 1) % 4;
        g.push_str(&format!("edge a{i} a{j} weight=1\nedge b{i} b{j} weight=1\nedge a{i} b{i} weight=2\n"));
    }
    write(d.path(), "cube.ncl", &g);
    // a0, a2, b1, b3 take both square edges and send their vertical out.
    let o = "\
orient a0 a1 -> a0
orient a1 a2 -> a2
orient a2 a3 -> a2
orient a3 a0 -> a0
orient b0 b1 -> b1
orient b1 b2 -> b1
orient b2 b3 -> b3
orient b3 b0 -> b3
orient a0 b0 -> b0
orient a1 b1 -> a1
orient a2 b2 -> b2
orient a3 b3 -> a3
";
    write(d.path(), "o.txt", o);
    let r = t48(d.path(), &["ncl", "cube.ncl", "o.txt", "--edge", "a0", "b0"], "");
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert_eq!(r.stdout, "result NONE\n");
}

#[test]
fn rerun_reproduces_a_recorded_run() {
    let d = TempDir::new().unwrap();
    write(d.path(), "pair.txt", "4\n0 0 0 0\n0 4 4 0\n0 0 0 0\n0 0 0 0\n");
    let first = t48(d.path(), &["solve", "pair.txt", "--k", "2", "--m", "6", "--manifest", "a.json"], "");
    let again = t48(d.path(), &["rerun", "a.json"], "");
    assert_eq!(first.code, again.code);
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("elapsed_ms")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&first.stdout), strip(&again.stdout));
    let (a, b) = (manifest(d.path(), "a.json"), manifest(d.path(), "a.json"));
    assert_eq!(a["argv"], b["argv"]);
    assert_eq!(a["parameters"], b["parameters"]);
}
