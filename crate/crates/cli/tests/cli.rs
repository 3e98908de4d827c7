use std::path::PathBuf;
use std::process::{Command, Output};

fn rules(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../rules").join(name)
}

fn camix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camix")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(name: &str) -> String {
    rules(name).to_string_lossy().into_owned()
}

#[test]
fn permutive_porcelain_and_exit_codes() {
    let o = camix(&["--porcelain", "permutive", &path("ex43.rule")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "(0,2) extreme\n");
    let o = camix(&["--porcelain", "permutive", &path("ex51.rule")]);
    assert_eq!(stdout(&o), "(1,1) interior\n");
    let o = camix(&["--porcelain", "permutive", "--brute-force", &path("ex34.rule")]);
    assert_eq!(stdout(&o), "(0,0) extreme\n(0,1) extreme\n(1,1) extreme\n");
}

#[test]
fn ma_traces() {
    let o = camix(&["--porcelain", "ma", "--rule", &path("ex44.rule")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "(-1,1) accepted 2 MA3:j=1>MA1:j=1\n");
    let o = camix(&["ma", "--apex", &path("ex45.apex"), "--vertex", "(2,2,-1)"]);
    let text = stdout(&o);
    assert!(text.ends_with("accepted (depth 3)\n"), "{text}");
    assert_eq!(text.matches("MA3").count(), 2);
    // no permutive corner
    assert_eq!(camix(&["ma", "--rule", &path("ex51.rule")]).status.code(), Some(2));
    let o = camix(&["--porcelain", "ma", "--apex", &path("unit_square.apex"), "--vertex", "(0,0)"]);
    assert_eq!((o.status.code(), stdout(&o)), (Some(2), "(0,0) rejected\n".into()));
}

#[test]
fn mix_rows_and_modes() {
    let r = path("ex34.rule");
    let o = camix(&["--porcelain", "mix", &r, "--cyl", "(0,0)=1", "--cyl", "(0,0)=1", "--gaps", "1;2", "--gaps", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "1 1/4 1/4 equal\n2 1/4 1/4 equal\n3 1/4 1/4 equal\n");
    let o = camix(&[
        "--porcelain", "mix", &r, "--cyl", "(1,1)=1", "--cyl", "(-1,-1)=0", "--gaps", "1", "--gaps", "3",
        "--direction", "(1,1)",
    ]);
    assert_eq!(stdout(&o), format!("1 {} 1/4 info\n3 1/4 1/4 equal\n", stdout(&o).split(' ').nth(1).unwrap()));
    let args = ["--porcelain", "mix", &r, "--cyl", "(0,0)=1", "--cyl", "(0,0)=0", "--gaps", "2", "--mode", "sampled", "--trials", "5000", "--seed", "3"];
    let (a, b) = (camix(&args), camix(&args));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).split_whitespace().count(), 5);
}

#[test]
fn single_cylinder_preimage_report() {
    let o = camix(&["mix", &path("ex43.rule"), "--cyl", "(0,0)=1;(0,1)=2", "--gaps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("preimage of (0,0)=1;(0,1)=2 is nonempty"));
}

#[test]
fn census_balance() {
    let o = camix(&["--porcelain", "census", &path("ex34.rule"), "--window", "(0,0):(0,0)"]);
    assert_eq!((o.status.code(), stdout(&o)), (Some(0), "0 8\n1 8\n".into()));
    let o = camix(&["--porcelain", "census", &path("ex34.rule"), "--window", "(0,0):(1,1)", "--pattern", "1,0,1,1"]);
    assert_eq!(stdout(&o), "1011 32 nonempty\n");
}

#[test]
fn sim_detects_copies_and_writes_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = camix(&[
        "--porcelain", "sim", &path("ex34.rule"), "--sides", "(100,100)", "--seed-pattern", &path("motif.cfg"),
        "--at", "(40,40)", "--steps", "16", "--detect-motif", "--pgm-every", "8", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "16 3 (0,0) (0,84) (84,84)\n");
    let pgm = std::fs::read(dir.path().join("step_000016.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n100 100\n1\n"));
    assert_eq!(pgm.len(), b"P5\n100 100\n1\n".len() + 10_000);
    assert!(dir.path().join("step_000008.pgm").exists());
    let cfg = std::fs::read_to_string(dir.path().join("final.cfg")).unwrap();
    assert!(cfg.starts_with("sides=(100,100)\n"));
}

#[test]
fn operational_errors_exit_one() {
    assert_eq!(camix(&["permutive", "/nonexistent.rule"]).status.code(), Some(1));
    assert_eq!(camix(&["sim", &path("ex34.rule"), "--sides", "(1,1)"]).status.code(), Some(1));
    assert_eq!(camix(&["mix", &path("ex34.rule"), "--cyl", "(0,0)=7", "--gaps", "1"]).status.code(), Some(1));
    assert_eq!(camix(&["--budget", "4", "census", &path("ex51.rule"), "--window", "(0,0):(0,0)"]).status.code(), Some(1));
    assert_eq!(camix(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(camix(&["--help"]).status.code(), Some(0));
}
