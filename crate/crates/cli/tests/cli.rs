use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn model(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn sidecar(p: &Path) -> serde_json::Value {
    let mut name = p.as_os_str().to_owned();
    name.push(".json");
    serde_json::from_slice(&std::fs::read(PathBuf::from(name)).unwrap()).unwrap()
}

#[test]
fn simulate_writes_rows_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = tma(&[
        "simulate",
        "--model",
        &model("eq31"),
        "--method",
        "recursive",
        "--n",
        "200",
        "--out",
        &s(&out),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 201);
    let meta = sidecar(&out);
    for key in [
        "seed",
        "model_hash",
        "method",
        "burn_in",
        "delta_estimate",
        "K",
        "version",
    ] {
        assert!(meta.get(key).is_some(), "missing {key}");
    }
    assert_eq!(meta["method"], "recursive");
    assert_eq!(meta["model_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn methods_agree_after_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let base = [
        "simulate",
        "--model",
        &model("eq31"),
        "--n",
        "3000",
        "--burn-in",
        "0",
        "--seed",
        "9",
    ];
    assert!(tma(&[&base[..], &["--out", &s(&a)]].concat()).status.success());
    assert!(
        tma(&[&base[..], &["--method", "closed-form", "--out", &s(&b)]].concat())
            .status
            .success()
    );
    let ra: Vec<String> = std::fs::read_to_string(&a)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.to_string())
        .collect();
    // drop the alpha column
    let rb: Vec<String> = std::fs::read_to_string(&b)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect();
    let last_diff = ra
        .iter()
        .zip(&rb)
        .rposition(|(x, y)| x != y)
        .expect("the runs start apart");
    assert!(last_diff < 2500, "rows still differ at {last_diff}");
    assert_eq!(sidecar(&b)["method"], "closed-form");
}

#[test]
fn verify_flags_a_corrupted_path() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    assert!(
        tma(&["simulate", "--model", &model("ex32"), "--n", "400", "--out", &s(&good)])
            .status
            .success()
    );
    let text = std::fs::read_to_string(&good).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[150].split(',').map(String::from).collect();
    let y: f64 = fields[2].parse().unwrap();
    fields[2] = format!("{:.16e}", y + 1e-3);
    lines[150] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let small = ["--moment-n", "100000", "--replicates", "100000"];
    let report = dir.path().join("report.json");
    let o = tma(&[
        &[
            "verify",
            "--model",
            &model("ex32"),
            "--path",
            &s(&bad),
            "--out",
            &s(&report),
        ][..],
        &small,
    ]
    .concat());
    assert_eq!(o.status.code(), Some(3));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(rep["passed"], false);
    assert_eq!(rep["checks"][0]["status"], "fail");

    let o = tma(&[&["verify", "--model", &model("ex32"), "--path", &s(&good)][..], &small].concat());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn linear_model_verifies_with_cut_off() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("ma.json");
    std::fs::write(
        &m,
        r#"{"mu1":0,"mu2":0,"phi":[0.6,0.3],"psi":[0.6,0.3],"d":1,"r":0,"innovation":{"kind":"normal"}}"#,
    )
    .unwrap();
    let o = tma(&["verify", "--model", &s(&m), "--replicates", "100000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rep["checks"][3]["detail"].as_str().unwrap().contains("cut-off"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // δ = 1 exactly: regimes never mix
    let stuck = dir.path().join("stuck.json");
    std::fs::write(
        &stuck,
        r#"{"mu1":100,"mu2":-100,"phi":[],"psi":[],"d":1,"r":0,"innovation":{"kind":"normal"}}"#,
    )
    .unwrap();
    let out = s(&dir.path().join("x.csv"));
    let o = tma(&[
        "simulate",
        "--model",
        &s(&stuck),
        "--method",
        "closed-form",
        "--n",
        "10",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(4));

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"mu1":1,"mu2":0,"phi":[0.1],"psi":[],"d":1,"r":0,"innovation":{"kind":"normal"}}"#,
    )
    .unwrap();
    assert_eq!(
        tma(&["simulate", "--model", &s(&bad), "--out", &out]).status.code(),
        Some(2)
    );
    assert_eq!(
        tma(&["simulate", "--model", "/nonexistent.json", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(tma(&["figure", "fig1", "--grid", "3:1:0.5"]).status.code(), Some(2));
    assert_eq!(tma(&["theory", "--model", &model("eq31")]).status.code(), Some(2));
    assert_eq!(
        tma(&["simulate", "--model", &model("eq31"), "--method", "exact"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn theory_outputs() {
    let o = tma(&[
        "theory",
        "--model",
        &model("ex31"),
        "--max-lag",
        "3",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rho_analytic"][0], 1.0);
    assert!(v["beta"].as_f64().unwrap() < 0.0);

    let o = tma(&[
        "theory",
        "--model",
        &model("ex31"),
        "--threshold",
        "-6",
        "--grid",
        "-6:-5:1",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    let first: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    assert!(first[1].abs() < 1e-2 && (first[2] - 3.0).abs() < 1e-2);

    let o = tma(&["theory", "--model", &model("ex32"), "--max-lag", "4"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().nth(3).unwrap().ends_with(",0.0000000000000000e0"));
}

#[test]
fn acf_moments_and_decay_run() {
    let o = tma(&[
        "acf",
        "--model",
        &model("ex31"),
        "--n",
        "20000",
        "--max-lag",
        "10",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["rho_hat"][0], 1.0);
    assert!(v["summary"]["rate"].as_f64().unwrap() > 0.7);
    assert_eq!(v["report"]["rho_analytic"].as_array().unwrap().len(), 11);

    let o = tma(&["moments", "--model", &model("ex31"), "--n", "5000"]);
    assert_eq!(o.status.code(), Some(2), "needs at least 10^4 points");

    let o = tma(&[
        "decay",
        "--model",
        &model("ex31"),
        "--lags",
        "1,2,3,4,5,6",
        "--u",
        "0.5",
        "--v",
        "0.5",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lag,value,se");
    assert_eq!(text.lines().count(), 7);
}
