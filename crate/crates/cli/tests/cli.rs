use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo.csv");

fn ipsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipsi")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ipsi(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn demo_mean_outcome() -> f64 {
    let rows = read_csv(Path::new(DEMO));
    let y = rows[0].iter().position(|c| c == "y").unwrap();
    // Every unit has the same number of rows, so the row mean is the unit mean.
    let values: Vec<f64> = rows[1..].iter().map(|r| r[y].parse().unwrap()).collect();
    values.iter().sum::<f64>() / values.len() as f64
}

const FAST: [&str; 6] = ["--learner-prop", "logistic", "--learner-out", "linear", "--bootstrap-reps", "2000"];

#[test]
fn estimate_writes_all_outputs_and_recovers_mean_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&["estimate", "--input", DEMO, "--outdir", path(&out)]);
    for f in ["curve.csv", "summary.csv", "influence.csv", "run.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let curve = read_csv(&out.join("curve.csv"));
    assert_eq!(curve[0].join(","), "delta,est,se,pt_lo,pt_hi,unif_lo,unif_hi");
    assert_eq!(curve.len(), 102);
    let one = curve.iter().find(|r| r[0] == "1").expect("grid contains 1");
    let est: f64 = one[1].parse().unwrap();
    assert!((est - demo_mean_outcome()).abs() < 1e-10);

    let summary = read_csv(&out.join("summary.csv"));
    assert_eq!(summary[0].join(","), "alpha,c_alpha,p_value,n,B,seed");
    assert_eq!(&summary[1][3..], ["50", "10000", "0"]);
    let influence = read_csv(&out.join("influence.csv"));
    assert_eq!(influence[0].join(","), "unit_id,delta,phi");
    assert_eq!(influence.len(), 1 + 50 * 101);

    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(echo["command"], "estimate");
    assert_eq!(echo["settings"]["bootstrap_reps"], 10000);
    assert_eq!(echo["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn single_increment_band_matches_pointwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("single");
    ok(&[
        "estimate", "--input", DEMO, "--outdir", path(&out), "--delta-points", "1", "--delta-min", "2", "--delta-max", "2",
        "--learner-prop", "logistic", "--learner-out", "linear",
    ]);
    let curve = read_csv(&out.join("curve.csv"));
    assert_eq!(curve.len(), 2);
    let v: Vec<f64> = curve[1].iter().map(|x| x.parse().unwrap()).collect();
    let c: f64 = read_csv(&out.join("summary.csv"))[1][1].parse().unwrap();
    // With one increment the supremum is |N(0, 1)|; its 95% quantile is 1.96.
    assert!((c - 1.959964).abs() < 0.06, "c_alpha {c}");
    let pt_half = v[4] - v[1];
    let unif_half = v[6] - v[1];
    assert!((unif_half / pt_half - c / 1.959964).abs() < 1e-6);
    assert!((unif_half / pt_half - 1.0).abs() < 0.03);
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let mut base = vec!["estimate", "--input", DEMO, "--seed", "5", "--nsplits", "3"];
    base.extend(FAST);
    ok(&[base.as_slice(), &["--outdir", path(&a)]].concat());
    ok(&[base.as_slice(), &["--outdir", path(&b)]].concat());
    ok(&[base.as_slice(), &["--outdir", path(&c), "--threads", "1"]].concat());
    assert_eq!(files(&a), files(&b));
    let strip = |fs: Vec<(PathBuf, Vec<u8>)>| fs.into_iter().filter(|f| f.0 != Path::new("run.json")).collect::<Vec<_>>();
    assert_eq!(strip(files(&a)), strip(files(&c)));
}

#[test]
fn config_file_fills_options_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "input = \"{DEMO}\"\ndelta-min = 0.5\ndelta-max = 2.0\ndelta-points = 5\nlearner-prop = \"logistic\"\nlearner-out = \"linear\"\nbootstrap-reps = 500\nalpha = 0.1\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["estimate", "--config", path(&cfg), "--outdir", path(&out), "--delta-points", "3"]);
    let curve = read_csv(&out.join("curve.csv"));
    let deltas: Vec<&str> = curve[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(deltas, ["0.5", "1", "2"]);
    let summary = read_csv(&out.join("summary.csv"));
    assert_eq!((summary[1][0].as_str(), summary[1][4].as_str()), ("0.1", "500"));

    fs::write(&cfg, "bogus-key = 1\n").unwrap();
    let bad = ipsi(&["estimate", "--config", path(&cfg), "--input", DEMO, "--outdir", path(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record");
    serde_json::from_str(line).expect("last stderr line is JSON")
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let missing = ipsi(&["estimate", "--input", "/nonexistent.csv", "--outdir", path(&out)]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(error_record(&missing)["error"], "data");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,time,a,y,x\n1,1,2,1.0,0.5\n2,1,0,2.0,0.1\n").unwrap();
    let r = ipsi(&["estimate", "--input", path(&bad), "--outdir", path(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(error_record(&r)["message"].as_str().unwrap().contains("treatment"));

    let r = ipsi(&["estimate", "--input", DEMO, "--outdir", path(&out), "--learner-prop", "svm"]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(error_record(&r)["exit_code"], 2);

    let r = ipsi(&["estimate", "--input", DEMO, "--outdir", path(&out), "--not-a-flag"]);
    assert_eq!(r.status.code(), Some(2));

    let r = ipsi(&["oracle", "--outdir", path(&out), "--dgp", "nope"]);
    assert_eq!(r.status.code(), Some(2));

    // Constant outcome: zero variance leaves the bootstrap undefined.
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("id,time,a,y,x\n");
    for i in 1..=30 {
        text.push_str(&format!("{i},1,{},5.0,{}\n", i % 2, (i % 7) as f64 / 3.0));
    }
    fs::write(&flat, text).unwrap();
    let mut args = vec!["estimate", "--input", path(&flat), "--outdir", path(&out), "--nsplits", "1"];
    args.extend(FAST);
    let r = ipsi(&args);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(error_record(&r)["error"], "numeric");
}

const SIM: [&str; 14] = [
    "simulate", "--n", "150", "--delta-points", "5", "--bootstrap-reps", "300", "--oracle-draws", "20000", "--seed",
    "3", "--mode", "cor-p", "--dgp",
];

#[test]
fn simulate_smoke_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let (full, split) = (dir.path().join("full"), dir.path().join("split"));
    let base = [SIM.as_slice(), &["kang-schafer"]].concat();
    ok(&[base.as_slice(), &["--reps", "1", "--outdir", path(&dir.path().join("smoke"))]].concat());
    ok(&[base.as_slice(), &["--reps", "4", "--outdir", path(&full)]].concat());
    ok(&[base.as_slice(), &["--reps", "2", "--outdir", path(&split)]].concat());
    ok(&[base.as_slice(), &["--reps", "4", "--outdir", path(&split), "--resume"]].concat());
    assert_eq!(files(&full), files(&split));
    for f in ["truth.csv", "replications.csv", "metrics.csv", "summary.txt", "run.json"] {
        assert!(full.join(f).exists(), "missing {f}");
    }
    assert!(fs::read_to_string(full.join("summary.txt")).unwrap().contains("coverage"));

    // Resuming with different settings is refused.
    let r = ipsi(&[base.as_slice(), &["--reps", "4", "--outdir", path(&split), "--resume", "--alpha", "0.1"]].concat());
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn oracle_limits_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let read = |p: &Path| -> Vec<(f64, f64, f64)> {
        read_csv(p)[1..].iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())).collect()
    };
    let hi = dir.path().join("hi");
    ok(&["oracle", "--outdir", path(&hi), "--delta-min", "1e8", "--delta-max", "1e8", "--delta-points", "1"]);
    let (_, psi, se) = read(&hi.join("oracle.csv"))[0];
    assert!((psi - 210.0).abs() <= 4.0 * se + 1e-5, "{psi} {se}");
    let lo = dir.path().join("lo");
    ok(&["oracle", "--outdir", path(&lo), "--delta-min", "1e-8", "--delta-max", "1e-8", "--delta-points", "1"]);
    let (_, psi, se) = read(&lo.join("oracle.csv"))[0];
    assert!((psi - 200.0).abs() <= 4.0 * se + 1e-5, "{psi} {se}");

    // Default grid: the curve dips below 200 for small increments before
    // rising, so only reproducibility is asserted.
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["oracle", "--outdir", path(&a), "--oracle-draws", "200000"]);
    ok(&["oracle", "--outdir", path(&b), "--oracle-draws", "200000"]);
    assert_eq!(fs::read(a.join("oracle.csv")).unwrap(), fs::read(b.join("oracle.csv")).unwrap());
    assert_eq!(read(&a.join("oracle.csv")).len(), 100);
}

#[test]
fn generate_matches_bundled_demo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.csv");
    ok(&["generate", "--output", path(&out), "--n", "50", "--seed", "1"]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(DEMO).unwrap());
}
