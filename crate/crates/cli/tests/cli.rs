use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn drape(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drape"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SOFT: &str = r#"{"kStretchWarp":300,"kStretchWeft":300,"kStretchBias":300,"kBendingWarp":1e-5,"kBendingWeft":1e-5,"kBendingBias":1e-5,"density":0.2}"#;
const STIFF: &str = r#"{"kStretchWarp":300,"kStretchWeft":300,"kStretchBias":300,"kBendingWarp":1e-3,"kBendingWeft":1e-3,"kBendingBias":1e-3,"density":0.2}"#;

const SUBCOMMANDS: [&str; 11] = [
    "simulate",
    "render",
    "sweep",
    "augment",
    "gen-dataset",
    "stats",
    "distance",
    "rank",
    "validate-metric",
    "embed",
    "report",
];

#[test]
fn help_works_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = drape(dir.path(), &["--help"]);
    assert!(out.status.success());
    for s in SUBCOMMANDS {
        let out = drape(dir.path(), &[s, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{s}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("--"), "{s}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        drape(dir.path(), &["simulate", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(drape(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        drape(dir.path(), &["simulate", "--scene", "hanging"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn invalid_configuration_exits_3_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write(dir.path(), "bad.json", r#"{"kStretchWarp": -1}"#);
    let r = drape(
        &out,
        &[
            "simulate",
            "--scene",
            "hanging",
            "--params",
            bad.to_str().unwrap(),
        ],
    );
    assert_eq!(r.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(r.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("bad.json"));

    let soft = write(dir.path(), "soft.json", SOFT);
    let r = drape(
        &out,
        &[
            "simulate",
            "--scene",
            "sideways",
            "--params",
            soft.to_str().unwrap(),
        ],
    );
    assert_eq!(r.status.code(), Some(3));
    let r = drape(
        &out,
        &[
            "distance",
            "--a",
            soft.to_str().unwrap(),
            "--b",
            soft.to_str().unwrap(),
            "--replicates",
            "0",
        ],
    );
    assert_eq!(r.status.code(), Some(3));
    let r = drape(
        &out,
        &[
            "stats",
            "--manifest",
            dir.path().join("missing.jsonl").to_str().unwrap(),
        ],
    );
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn simulate_writes_mesh_report_and_run_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let soft = write(dir.path(), "soft.json", SOFT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = drape(
            out,
            &[
                "--seed",
                "7",
                "simulate",
                "--scene",
                "hanging",
                "--params",
                soft.to_str().unwrap(),
                "--mesh-edge",
                "0.05",
                "--jitter",
            ],
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let obj = std::fs::read_to_string(a.join("hanging.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 11 * 11);
    assert_eq!(
        obj.lines().filter(|l| l.starts_with("f ")).count(),
        2 * 10 * 10
    );
    let report = json(&a.join("hanging_convergence.json"));
    assert_eq!(report["converged"], true);

    let run = json(&a.join("run.json"));
    assert_eq!(run["subcommand"], "simulate");
    assert_eq!(run["seed"], 7);
    assert_eq!(run["config"]["config"]["jitter"]["seed"], 7);
    assert_eq!(run["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(run["config_hash"], json(&b.join("run.json"))["config_hash"]);
    assert!(run["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|o| o == "hanging.obj"));
    assert_eq!(
        obj,
        std::fs::read_to_string(b.join("hanging.obj")).unwrap(),
        "reruns are byte-identical"
    );

    let r = drape(
        &a,
        &[
            "render",
            "--mesh",
            a.join("hanging.obj").to_str().unwrap(),
            "--size",
            "32",
            "--sweep",
        ],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for k in 0..11 {
        let p = a.join(format!("sweep_{k:02}.png"));
        assert!(p.exists() && a.join(format!("sweep_{k:02}.png.json")).exists());
    }
    let r = drape(
        &a,
        &[
            "render",
            "--mesh",
            a.join("hanging.obj").to_str().unwrap(),
            "--size",
            "32",
            "--mode",
            "shaded",
        ],
    );
    assert!(r.status.success());
    assert!(a.join("shaded.png").exists());
}

#[test]
fn validate_metric_agrees_with_distance() {
    let dir = tempfile::tempdir().unwrap();
    let soft = write(dir.path(), "soft.json", SOFT);
    let stiff = write(dir.path(), "stiff.json", STIFF);
    let mats = write(
        dir.path(),
        "mats.json",
        &format!(r#"[{{"name":"soft","params":{SOFT}}},{{"name":"stiff","params":{STIFF}}}]"#),
    );
    let metric = [
        "--replicates",
        "2",
        "--mesh-edge",
        "0.1",
        "--image-size",
        "24",
        "--inner",
        "mad",
    ];
    let v = dir.path().join("v");
    let mut args = vec!["validate-metric", "--materials", mats.to_str().unwrap()];
    args.extend(metric);
    let r = drape(&v, &args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = json(&v.join("self_distance.json"));
    assert_eq!(report["names"][1], "stiff");
    let matrix = &report["report"]["distances"];

    let d = dir.path().join("d");
    let mut args = vec![
        "distance",
        "--a",
        soft.to_str().unwrap(),
        "--b",
        stiff.to_str().unwrap(),
    ];
    args.extend(metric);
    assert!(drape(&d, &args).status.success());
    let pair = json(&d.join("distance.json"));
    assert!((pair["d"].as_f64().unwrap() - matrix[0][1].as_f64().unwrap()).abs() < 1e-12);
    assert!(std::fs::read_to_string(v.join("self_distance.md"))
        .unwrap()
        .contains("| soft |"));
}

#[test]
fn embed_recovers_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("ref,chosen,rejected\n");
    for i in 0..6usize {
        for j in 0..6usize {
            for k in 0..6usize {
                if i != j && i != k && j != k && i.abs_diff(j) < i.abs_diff(k) {
                    csv.push_str(&format!("{i},{j},{k}\n"));
                }
            }
        }
    }
    let t = write(dir.path(), "t.csv", &csv);
    let r = drape(
        dir.path(),
        &[
            "--seed",
            "3",
            "embed",
            "--triplets",
            t.to_str().unwrap(),
            "--dims",
            "1",
        ],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let e = json(&dir.path().join("embedding.json"));
    assert!(e["agreement"].as_f64().unwrap() > 0.95);
    assert_eq!(e["embedding"]["points"].as_array().unwrap().len(), 6);
    let svg = std::fs::read_to_string(dir.path().join("embedding.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 6);
    assert!(std::fs::read_to_string(dir.path().join("embedding.csv"))
        .unwrap()
        .starts_with("index,x0\n"));

    let bad = write(dir.path(), "bad.csv", "ref,chosen,rejected\n0,0,1\n");
    assert_eq!(
        drape(dir.path(), &["embed", "--triplets", bad.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn dataset_stats_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gen.json",
        r#"{"count": 3, "val_fraction": 0.34, "mesh_edge": 0.05, "image_size": 24}"#,
    );
    let data = dir.path().join("data");
    let r = drape(
        &data,
        &[
            "--seed",
            "11",
            "gen-dataset",
            "--config",
            cfg.to_str().unwrap(),
        ],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest = std::fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 3 * 2 * 11);

    let again = dir.path().join("again");
    assert!(drape(
        &again,
        &[
            "--seed",
            "11",
            "--jobs",
            "1",
            "gen-dataset",
            "--config",
            cfg.to_str().unwrap()
        ]
    )
    .status
    .success());
    assert_eq!(
        manifest,
        std::fs::read_to_string(again.join("manifest.jsonl")).unwrap()
    );
    assert_eq!(
        json(&data.join("run.json"))["config_hash"],
        json(&again.join("run.json"))["config_hash"]
    );

    let st = dir.path().join("stats");
    let r = drape(
        &st,
        &[
            "stats",
            "--manifest",
            data.join("manifest.jsonl").to_str().unwrap(),
        ],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(st.join("spearman.png").exists());

    let heavy = r#"{"kStretchWarp":900,"kStretchWeft":500,"kStretchBias":200,"kBendingWarp":1e-4,"kBendingWeft":3e-5,"kBendingBias":1e-6,"density":0.5}"#;
    let mats = format!(
        r#"[{{"name":"soft","params":{SOFT}}},{{"name":"stiff","params":{STIFF}}},{{"name":"heavy","params":{heavy}}}]"#
    );
    let mats = write(dir.path(), "mats.json", &mats);
    let triplets = write(
        dir.path(),
        "t.csv",
        "ref,chosen,rejected\n0,2,1\n1,2,0\n2,0,1\n0,2,1\n",
    );
    let report_cfg = serde_json::json!({
        "manifest": data.join("manifest.jsonl"),
        "sweep": {"param": "kStretchBias", "values": [100.0, 1000.0], "config": {"mesh_edge": 0.1, "image_size": 24}},
        "materials": mats,
        "metric": {"replicates": 1, "mesh_edge": 0.1, "image_size": 24, "inner": "mad"},
        "triplets": triplets,
        "tste": {"iterations": 200, "restarts": 1},
    });
    let rc = write(dir.path(), "report.json", &report_cfg.to_string());
    let rep = dir.path().join("report");
    let r = drape(&rep, &["report", "--config", rc.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let md = std::fs::read_to_string(rep.join("report.md")).unwrap();
    for needle in [
        "spearman.png",
        "sweep_grid.png",
        "zscores.svg",
        "ranking.png",
        "| GT |",
    ] {
        assert!(md.contains(needle), "{needle}");
        if !needle.starts_with('|') {
            assert!(rep.join(needle).exists(), "{needle}");
        }
    }
    let bad = write(dir.path(), "bad_report.json", r#"{"unknown": 1}"#);
    assert_eq!(
        drape(&rep, &["report", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}
