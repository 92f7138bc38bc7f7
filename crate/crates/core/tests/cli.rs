use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_reflected-morse");

fn scenario_file(name: &str, text: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-scenarios");
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

fn builtin(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn shoot_reports_events_with_incidence_angles() {
    let p = builtin("mirror-disk-30");
    let o = cli(&["shoot", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let events = v["path"]["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert!((events[0]["incidence_deg"].as_f64().unwrap() - 30.0).abs() < 1e-9);
    assert_eq!(v["scenario"]["run"], "shoot");

    let o = cli(&["shoot", "--scenario", p.to_str().unwrap(), "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("time,kind,incidence_deg"));
    assert!(text.lines().nth(1).unwrap().contains(",reflection,"));
}

#[test]
fn json_reports_are_byte_identical() {
    let p = builtin("harmonic-disk");
    let a = cli(&["index-fixed", "--scenario", p.to_str().unwrap(), "--seed", "7"]);
    let b = cli(&["index-fixed", "--scenario", p.to_str().unwrap(), "--seed", "7", "--jobs", "1"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["scenario"]["seed"], 7);
    // defaults are echoed
    assert_eq!(v["scenario"]["numerics"]["ks"], serde_json::json!([8, 16, 32]));
}

#[test]
fn every_flag_carries_both_sides() {
    let p = builtin("sphere-oracle");
    let v = stdout_json(&cli(&["index-fixed", "--scenario", p.to_str().unwrap()]));
    for c in v["checks"].as_array().unwrap() {
        assert!(!c["left"].is_null() && !c["right"].is_null(), "{c}");
    }
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["name"] == "index = interior conjugate points" && c["left"] == 1));
}

#[test]
fn parse_error_names_the_line() {
    let p = scenario_file("broken", "name = \"broken\"\n[chart]\nkind = \"euclidean\"\ndim = two\n");
    let o = cli(&["shoot", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let v = stdout_json(&o);
    assert_eq!(v["error"]["kind"], "scenario");
    assert!(v["error"]["message"].as_str().unwrap().contains("line 4"), "{v}");
}

#[test]
fn transmit_at_boundary_is_an_input_error() {
    let p = scenario_file(
        "transmit-boundary",
        r#"
name = "transmit-boundary"
[chart]
kind = "euclidean"
dim = 2
[surface]
kind = "hyperplane"
normal = [1.0, 0.0]
offset = 0.0
[policy]
overflow = "always-transmit"
[initial]
x = [1.0, 0.0]
v = [-1.0, 0.0]
t = 2.0
"#,
    );
    let o = cli(&["shoot", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stdout_json(&o)["error"]["message"].as_str().unwrap().contains("transmit"));
}

#[test]
fn kinked_potential_is_an_input_error() {
    let p = scenario_file(
        "kinked",
        r#"
name = "kinked"
[chart]
kind = "euclidean"
dim = 2
[surface]
kind = "hyperplane"
normal = [1.0, 0.0]
offset = 0.0
boundary = false
[potential]
kind = "piecewise"
plus = [{ coeff = 0.5, powers = [2, 0] }]
minus = [{ coeff = 0.5, powers = [2, 0] }, { coeff = 0.1, powers = [1, 0] }]
[initial]
x = [-1.0, 0.0]
v = [1.0, 0.0]
t = 2.0
"#,
    );
    let o = cli(&["shoot", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert_eq!(stdout_json(&o)["error"]["kind"], "not-c1");
}

#[test]
fn missing_scenario_flag_is_an_input_error() {
    assert_eq!(code(&cli(&["shoot"])), 4);
}

#[test]
fn self_conjugate_base_point_is_degenerate() {
    let p = scenario_file(
        "center-base",
        r#"
name = "center-base"
run = "index-periodic"
[chart]
kind = "euclidean"
dim = 2
[surface]
kind = "sphere"
center = [0.0, 0.0]
radius = 1.0
[initial]
orbit = "disk-diameter"
[numerics]
base_time = 0.0
"#,
    );
    let o = cli(&["index-periodic", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["status"], "degenerate");
    assert_eq!(v["periodic"]["status"], "degenerate");
    assert!(v["periodic"]["concavity"].is_null());
}

#[test]
fn conjugate_endpoints_are_degenerate_for_solve() {
    let p = scenario_file(
        "antipodal-solve",
        r#"
name = "antipodal-solve"
[chart]
kind = "sphere"
[endpoints]
x = [1.5707963267948966, 0.0]
y = [1.5707963267948966, 3.141592653589793]
t = 3.141592653589793
v_guess = [0.0, 1.0]
"#,
    );
    let o = cli(&["solve", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(stdout_json(&o)["error"]["kind"], "conjugate-endpoint");
}

#[test]
fn wrong_expectation_is_a_failure() {
    let p = scenario_file(
        "wrong-index",
        r#"
name = "wrong-index"
[chart]
kind = "sphere"
[initial]
x = [1.5707963267948966, 0.0]
v = [0.0, 1.0]
t = 4.71238898038469
[expect]
index = 2
"#,
    );
    let o = cli(&["index-fixed", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let v = stdout_json(&o);
    let c = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "expected index").unwrap().clone();
    assert_eq!((c["pass"].as_bool(), c["left"].as_u64(), c["right"].as_u64()), (Some(false), Some(1), Some(2)));
}

#[test]
fn coarse_nodes_are_inconclusive() {
    let p = scenario_file(
        "coarse",
        r#"
name = "coarse"
[chart]
kind = "sphere"
[initial]
x = [1.5707963267948966, 0.0]
v = [0.0, 1.0]
t = 7.0
[numerics]
k0 = 2
"#,
    );
    let o = cli(&["index-fixed", "--scenario", p.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert_eq!(stdout_json(&o)["error"]["kind"], "refine-nodes");
}

#[test]
fn emit_plot_writes_columns() {
    let p = builtin("sphere-oracle");
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("sphere-oracle.dat");
    let o = cli(&["emit-plot", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .take_while(|l| !l.is_empty())
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2000);
    assert!(rows.iter().all(|r| r.len() == 3));
    // det B changes sign once, near π
    let flips: Vec<f64> = rows.windows(2).filter(|w| (w[0][1] > 0.0) != (w[1][1] > 0.0)).map(|w| w[1][0]).collect();
    assert_eq!(flips.len(), 1);
    assert!((flips[0] - std::f64::consts::PI).abs() < 0.01);
    assert!(text.contains("# eigenvalues bc=fixed k=8"));
}

#[test]
fn verify_all_on_files_reports_worst_status() {
    let good = builtin("flat-wall");
    let bad = scenario_file("bad-dim", "name = \"bad-dim\"\n[chart]\nkind = \"sphere\"\n[initial]\nx = [1.0]\nv = [0.0, 1.0]\nt = 1.0\n");
    let o = cli(&["verify-all", good.to_str().unwrap(), bad.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 4);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("flat-wall,pass,0,"));
    assert!(lines[2].contains(",input-error,4,0,0"));
}
