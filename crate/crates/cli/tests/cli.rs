use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gclosure_cli::report::{validate, OUT_DIR_ENV};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gclosure"));
    c.env_remove(OUT_DIR_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    validate(&text).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn without_meta(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("meta");
    v
}

#[test]
fn pure_phase_bound_is_the_compliance_energy() {
    let (lambda, mu) = (1.3, 0.7);
    let s = [1.0, -2.0, 0.5, 0.4, 0.0, 0.3];
    let v = ok_json(&[
        "bound-stress",
        "--lambda=1.3",
        "--mu=0.7",
        "--f=1",
        "--stress=1,-2,0.5,0.4,0,0.3",
    ]);
    // σ:C⁻¹σ = |σ|²/(2μ) − λ(tr σ)²/(2μ(3λ+2μ)).
    let norm2: f64 = s.iter().map(|x| x * x).sum();
    let tr = s[0] + s[1] + s[2];
    let expect = norm2 / (2.0 * mu) - lambda * tr * tr / (2.0 * mu * (3.0 * lambda + 2.0 * mu));
    let got = v["result"]["value"].as_f64().unwrap();
    assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
    assert!(v["result"]["branch"].is_string());
}

#[test]
fn matrix_input_matches_mandel_input() {
    let r2 = 2f64.sqrt();
    let mandel = format!("--stress=1,2,3,{},{},{}", 0.5 * r2, -0.2 * r2, 0.1 * r2);
    let a = ok_json(&["bound-stress", "--lambda=1", "--mu=1", "--f=0.4", &mandel]);
    let b = ok_json(&[
        "bound-stress",
        "--lambda=1",
        "--mu=1",
        "--f=0.4",
        "--stress=1,0.1,-0.2,0.1,2,0.5,-0.2,0.5,3",
    ]);
    let (x, y) = (a["result"]["value"].as_f64().unwrap(), b["result"]["value"].as_f64().unwrap());
    assert!((x - y).abs() <= 1e-12 * x);
    let asym = run(&["bound-stress", "--lambda=1", "--mu=1", "--f=0.4", "--stress=1,0.2,0,0,1,0,0,0,1"]);
    assert_eq!(asym.status.code(), Some(2));
}

#[test]
fn boundary_pair_is_classified_boundary() {
    let args = ["--lambda=1", "--mu=2", "--f=0.6", "--stress=1,0.2,-0.3,0.1,0,0.4"];
    let b = ok_json(&[&["boundary-strain", "--perp=0.1,-0.2,0.3,0,0.05"][..], &args].concat());
    let strain: Vec<String> = b["result"]["tensor"]["mandel"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| format!("{:?}", x.as_f64().unwrap()))
        .collect();
    let strain_flag = format!("--strain={}", strain.join(","));
    let m = ok_json(&[&["membership", &strain_flag, "--expect=Boundary"][..], &args].concat());
    assert_eq!(class(&m), "Boundary");

    let wrong = run(&[&["membership", &strain_flag, "--expect=Interior"][..], &args].concat());
    assert_eq!(wrong.status.code(), Some(3));
    // The report is still written when the verdict disagrees.
    validate(&String::from_utf8(wrong.stdout).unwrap()).unwrap();

    let zero = ok_json(&[&["membership", "--strain=0,0,0,0,0,0"][..], &args].concat());
    assert_eq!(class(&zero), "Infeasible");
}

fn class(v: &Value) -> &str {
    v["result"]["verdict"]["classification"].as_str().unwrap()
}

#[test]
fn rigid_boundary_pair_is_classified_boundary() {
    let args = ["--setting=rigid", "--lambda=2", "--mu=1", "--f=0.5", "--strain=1,0,-0.5,0,0.2,0"];
    let b = ok_json(&[&["boundary-strain"][..], &args].concat());
    let stress: Vec<String> = b["result"]["tensor"]["mandel"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| format!("{:?}", x.as_f64().unwrap()))
        .collect();
    let flag = format!("--stress={}", stress.join(","));
    let m = ok_json(&[&["membership", &flag, "--expect=Boundary"][..], &args].concat());
    assert_eq!(class(&m), "Boundary");
}

#[test]
fn laminate_optimum_is_within_two_percent_of_the_bound() {
    let common = ["--lambda=1", "--mu=1", "--f=0.5", "--stress=1,1,1,0,0,0"];
    let lam = ok_json(&[&["laminate-opt", "--delta=1e-6"][..], &common].concat());
    let bound = ok_json(&[&["bound-stress"][..], &common].concat());
    let w = bound["result"]["value"].as_f64().unwrap();
    let e = lam["result"]["optimum"]["energy"].as_f64().unwrap();
    assert!(((e - w) / w).abs() <= 0.02, "{e} vs {w}");
    assert!(lam["result"]["gap"].as_f64().unwrap().abs() <= 0.02);
    assert!(lam["result"]["tree"].as_str().unwrap().starts_with("lam("));
}

#[test]
fn config_and_flags_merge_with_flags_winning() {
    let d = scratch("merge");
    let cfg = d.join("job.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "command": "bound-stress", "lambda": 1, "mu": 1, "f": 0.5,
            "stress": [1, 0, 0, 0, 0, 0]}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let a = ok_json(&["bound-stress", "--config", c]);
    let b = ok_json(&["bound-stress", "--config", c, "--f=1"]);
    assert_eq!(a["inputs"]["f"], 0.5);
    assert_eq!(b["inputs"]["f"], 1.0);
    assert!(b["result"]["value"].as_f64().unwrap() < a["result"]["value"].as_f64().unwrap());

    std::fs::write(&cfg, r#"{"lambda": 1, "mu": 1, "f": 0.5, "stress": [1,0,0,0,0,0], "colour": 3}"#).unwrap();
    assert_eq!(run(&["bound-stress", "--config", c]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"command": "shield", "lambda": 1}"#).unwrap();
    assert_eq!(run(&["bound-stress", "--config", c]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"schema_version": 2}"#).unwrap();
    assert_eq!(run(&["bound-stress", "--config", c]).status.code(), Some(2));
}

#[test]
fn reports_replay_from_their_inputs_byte_for_byte() {
    let d = scratch("replay");
    let jobs: [&[&str]; 4] = [
        &["bound-strain", "--lambda=1", "--mu=1", "--f=0.5", "--strain=1,0,0,0,0,0"],
        &["verify-convergence", "--lambda=1", "--mu=1", "--f=0.4", "--stress=1,0.5,0,0,0,0", "--seed=7"],
        &["thermal-bounds", "--k1=4", "--k2=1", "--f=0.5", "--q=2,0.3", "--e=1,0"],
        &["delta-sweep", "--lambda=1", "--mu=1", "--f=0.5", "--stress=0,0,1,0,0,0", "--rank=2", "--deltas=1e-2,1e-3"],
    ];
    for (k, job) in jobs.iter().enumerate() {
        let first = run(job);
        assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
        let first = String::from_utf8(first.stdout).unwrap();
        let report = validate(&first).unwrap();
        let cfg = d.join(format!("{k}.json"));
        std::fs::write(&cfg, serde_json::to_string(&report.inputs).unwrap()).unwrap();
        let again = run(&[job[0], "--config", cfg.to_str().unwrap()]);
        let again = String::from_utf8(again.stdout).unwrap();
        assert_eq!(without_meta(&first), without_meta(&again));
        let strip = |s: &str| s.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&first), strip(&again), "{}", job[0]);
    }
}

#[test]
fn exit_codes() {
    // Invalid input.
    assert_eq!(run(&["bound-stress", "--lambda=-1", "--mu=1", "--f=0.5", "--stress=1,0,0,0,0,0"]).status.code(), Some(2));
    assert_eq!(run(&["bound-stress", "--lambda=1", "--mu=1", "--f=1.5", "--stress=1,0,0,0,0,0"]).status.code(), Some(2));
    assert_eq!(run(&["bound-stress", "--lambda=1", "--mu=1", "--stress=1,0,0,0,0,0"]).status.code(), Some(2));
    assert_eq!(run(&["bound-stress", "--lambda=1", "--mu=1", "--f=0.5", "--stress=1,0,0"]).status.code(), Some(2));
    // Infeasible: no simple laminate attains an interior pair.
    let out = run(&["thermal-laminate", "--k1=4", "--k2=1", "--f=0.5", "--q=2,0", "--e=1,0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    let out = run(&["thermal-bounds", "--k1=4", "--k2=1", "--f=0.5", "--q=0,3", "--e=1,0", "--expect=Boundary"]);
    assert_eq!(out.status.code(), Some(3));
    // Non-convergence: a solver out of iterations, and an optimizer out of budget.
    let out = run(&["shield", "--w=1", "--a=0.5", "--n1=16", "--n2=16", "--p=0.5", "--k1=1", "--max-iter=2"]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&["laminate-opt", "--lambda=1", "--mu=1", "--f=0.5", "--stress=1,0.3,0,0,0,0", "--budget=50"]);
    assert_eq!(out.status.code(), Some(4));
    validate(&String::from_utf8(out.stdout).unwrap()).unwrap();
}

#[test]
fn thermal_laminate_reproduces_the_current() {
    // k⁺ = 2.5, k⁻ = 1.6: centre 2.05, radius 0.45. Pick q on the sphere at 60°.
    let (c, r) = (2.05, 0.45);
    let q = [c + r * 0.5, r * 3f64.sqrt() / 2.0];
    let flag = format!("--q={:?},{:?}", q[0], q[1]);
    let v = ok_json(&["thermal-laminate", "--k1=4", "--k2=1", "--f=0.5", &flag, "--e=1,0"]);
    let k = &v["result"]["laminate"]["tensor"];
    for i in 0..2 {
        let ke = k[i][0].as_f64().unwrap();
        assert!((ke - q[i]).abs() < 1e-10);
    }
}

#[test]
fn shield_then_temperature() {
    let d = scratch("shield");
    let sol = d.join("shield.json");
    let out = bin()
        .args(["shield", "--w=1", "--a=0", "--n1=8", "--n2=8", "--p=0.5", "--k1=2"])
        .args(["--csv", d.join("grid").to_str().unwrap()])
        .env(OUT_DIR_ENV, &d)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(d.join("shield.json")).unwrap();
    validate(&text).unwrap();
    assert!(sol.exists());

    let t = ok_json(&["temperature", "--solution", sol.to_str().unwrap(), "--csv", d.join("grid").to_str().unwrap()]);
    let r = &t["result"];
    assert_eq!(r["stalled_nodes"], 0);
    // No window: T = (w − x₁)/(p k₁) on every node.
    let temps = r["temperature"].as_array().unwrap();
    for j in 0..=8 {
        for i in 0..=8 {
            let x = i as f64 / 8.0;
            let got = temps[j * 9 + i].as_f64().unwrap();
            assert!((got - (1.0 - x) / 1.0).abs() < 1e-9, "{i},{j}: {got}");
        }
    }
    let nodes = std::fs::read_to_string(d.join("grid/nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 1 + 81);
    let cells = std::fs::read_to_string(d.join("grid/cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 1 + 128);

    // A tampered solution is rejected.
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["result"]["resistance"] = Value::from(1.0);
    let bad = d.join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(run(&["temperature", "--solution", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn delta_sweep_writes_rows_in_ladder_order() {
    let d = scratch("sweep");
    let csv = d.join("sweep.csv");
    let v = ok_json(&[
        "delta-sweep",
        "--lambda=1",
        "--mu=1",
        "--f=0.5",
        "--stress=1,1,1,0,0,0",
        "--deltas=1e-1,1e-2,1e-3,1e-4",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    let rows = v["result"]["rows"].as_array().unwrap();
    let deltas: Vec<f64> = rows.iter().map(|r| r["delta"].as_f64().unwrap()).collect();
    assert_eq!(deltas, [1e-1, 1e-2, 1e-3, 1e-4]);
    assert_eq!(v["result"]["monotone"], true);
    let body = std::fs::read_to_string(csv).unwrap();
    assert_eq!(body.lines().count(), 5);
    assert!(body.starts_with("delta,energy,bound,gap,converged,tree"));
}
