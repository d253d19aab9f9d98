use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pathrec_core::{Model, PoiId, Query, TravelMode};
use pathrec_service::api::{recommend, RecommendRequest, RecommendResponse};
use serde_json::Value;

fn pathrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathrec"))
        .args(args)
        .env_remove("PATHREC_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pathrec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(args: &[&str]) -> i32 {
    pathrec(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn synth(pois: usize, trajs: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        ok(&["synth", "--pois", &pois.to_string(), "--trajs", &trajs.to_string(), "--seed", &seed.to_string(), "--out-dir", s(dir.path())]);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Value {
        let (pois, trajs, model) = (self.path("pois.csv"), self.path("trajs.csv"), self.path(out));
        let mut args = vec!["train", "--pois", s(&pois), "--trajs", s(&trajs), "--out", s(&model)];
        args.extend_from_slice(extra);
        let stdout = ok(&args);
        assert_eq!(stdout.lines().count(), 1);
        serde_json::from_str(&stdout).unwrap()
    }
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let (a, b, c) = (Fixture::synth(20, 80, 5), Fixture::synth(20, 80, 5), Fixture::synth(20, 80, 6));
    for name in ["pois.csv", "trajs.csv", "ground_truth.json"] {
        assert_eq!(fs::read(a.path(name)).unwrap(), fs::read(b.path(name)).unwrap(), "{name}");
    }
    assert_ne!(fs::read(a.path("trajs.csv")).unwrap(), fs::read(c.path("trajs.csv")).unwrap());
    let truth: Value = serde_json::from_slice(&fs::read(a.path("ground_truth.json")).unwrap()).unwrap();
    assert!(truth["planted_top"].as_u64().is_some());
}

#[test]
fn synth_rejects_invalid_sizes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&["synth", "--pois", "2", "--trajs", "10", "--out-dir", s(dir.path())]), 1);
    assert_eq!(exit_code(&["synth", "--pois", "5", "--trajs", "0", "--out-dir", s(dir.path())]), 1);
}

#[test]
fn toy_fixture_trains_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("pois.csv"),
        "poiID,name,category,lat,lon\n1,A,park,-37.8136,144.9631\n2,B,museum,-37.8183,144.9671\n3,C,park,-37.8100,144.9700\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("trajs.csv"),
        "userID,trajID,poiID,arrivalTime,departureTime\n\
         u1,t1,1,0,600\nu1,t1,2,1200,3000\nu1,t1,3,3600,4000\n\
         u2,t2,1,0,100\nu2,t2,2,900,1000\n\
         u3,t3,2,0,100\nu3,t3,1,900,1000\n",
    )
    .unwrap();
    let fx = Fixture { dir };
    let summary = fx.train("a.json", &["--seed", "7", "--C", "1"]);
    assert_eq!(summary["pois"], 3);
    assert!(summary["pairs"].as_u64().unwrap() > 0);
    assert!(summary["objective"].as_f64().unwrap().is_finite());
    fx.train("b.json", &["--seed", "7", "--C", "1"]);
    assert_eq!(fs::read(fx.path("a.json")).unwrap(), fs::read(fx.path("b.json")).unwrap());

    let model = Model::load(fx.path("a.json")).unwrap();
    assert_eq!(summary["model_version"], model.version());
    assert_eq!(model.file().ranker.c, 1.0);
    let text = fs::read_to_string(fx.path("a.json")).unwrap();
    let again = Model::from_json(&text).unwrap();
    let bits = |m: &Model| m.weights().0.iter().map(|w| w.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&model), bits(&again));
}

#[test]
fn train_reports_bad_input_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = dir.path().join("m.json");
    assert_eq!(exit_code(&["train", "--pois", s(&missing), "--trajs", s(&missing), "--out", s(&out)]), 1);
    let fx = Fixture::synth(10, 40, 1);
    let (pois, trajs) = (fx.path("pois.csv"), fx.path("trajs.csv"));
    assert_eq!(exit_code(&["train", "--pois", s(&pois), "--trajs", s(&trajs), "--out", s(&out), "--alpha", "2"]), 1);
    assert_eq!(exit_code(&["train", "--trajs", s(&trajs), "--out", s(&out)]), 1);
    assert_eq!(exit_code(&["frobnicate"]), 1);
    assert_eq!(exit_code(&["--help"]), 0);
}

#[test]
fn recommend_matches_service_and_oracle() {
    let fx = Fixture::synth(12, 150, 2);
    fx.train("m.json", &[]);
    let model_path = fx.path("m.json");
    let model = Model::load(&model_path).unwrap();
    let run = |k: &str| ok(&["recommend", "--model", s(&model_path), "--start", "3", "--length", "4", "--mode", "driving", "--k", k, "--json"]);

    let ten = run("10");
    let request = RecommendRequest {
        start_poi: PoiId(3),
        length: 4,
        mode: TravelMode::Driving,
        k: 10,
    };
    let direct = pathrec_service::json::to_string(&recommend(&model, &request).unwrap()).unwrap();
    assert_eq!(ten.trim_end(), direct);

    let ten: RecommendResponse = serde_json::from_str(&ten).unwrap();
    let one: RecommendResponse = serde_json::from_str(&run("1")).unwrap();
    assert_eq!(one.routes[0].pois, ten.routes[0].pois);
    assert_eq!(one.routes[0].total.to_bits(), ten.routes[0].total.to_bits());

    let oracle = model.brute_force_top_k(&Query::new(PoiId(3), 4, TravelMode::Driving), 10).unwrap();
    let ids: Vec<Vec<PoiId>> = ten.routes.iter().map(|r| r.pois.iter().map(|p| p.id).collect()).collect();
    assert_eq!(ids, oracle.routes.iter().map(|r| r.pois.clone()).collect::<Vec<_>>());
}

#[test]
fn recommend_table_and_errors() {
    let fx = Fixture::synth(12, 150, 4);
    fx.train("m.json", &[]);
    let m = fx.path("m.json");
    let table = ok(&["recommend", "--model", s(&m), "--start", "1", "--length", "3", "--k", "5", "--table"]);
    assert_eq!(table.lines().count(), 6);
    assert!(table.lines().nth(1).unwrap().contains("100.00"));

    assert_eq!(exit_code(&["recommend", "--model", s(&m), "--start", "99", "--length", "3"]), 1);
    assert_eq!(exit_code(&["recommend", "--model", s(&m), "--start", "1", "--length", "1"]), 1);
    assert_eq!(exit_code(&["recommend", "--model", s(&m), "--start", "1", "--length", "3", "--k", "0"]), 1);
    assert_eq!(exit_code(&["recommend", "--model", s(&m), "--start", "1", "--length", "3", "--mode", "rowing"]), 1);
    assert_eq!(exit_code(&["recommend", "--model", s(&m), "--start", "1", "--length", "3", "--json", "--table"]), 1);
    assert_eq!(exit_code(&["recommend", "--start", "1", "--length", "3"]), 1);
}

#[test]
fn config_file_supplies_paths() {
    let fx = Fixture::synth(10, 60, 8);
    let cfg = fx.path("pathrec.conf");
    fs::write(
        &cfg,
        format!("pois = {}\ntrajs = {}\nmodel = {}\nalpha = 0.25\nkappa = 2\n", s(&fx.path("pois.csv")), s(&fx.path("trajs.csv")), s(&fx.path("m.json"))),
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg), "--out", s(&fx.path("m.json"))]);
    let model = Model::load(fx.path("m.json")).unwrap();
    assert_eq!(model.alpha(), 0.25);
    assert_eq!(model.transitions().smoothing(), 2.0);

    let out = Command::new(env!("CARGO_BIN_EXE_pathrec"))
        .args(["recommend", "--start", "2", "--length", "3", "--k", "2"])
        .env("PATHREC_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let resp: RecommendResponse = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resp.model_version, model.version());

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(exit_code(&["recommend", "--config", s(&cfg), "--start", "2", "--length", "3"]), 1);
}

#[test]
fn eval_reports_f1_and_skips_unknown_starts() {
    let fx = Fixture::synth(15, 200, 3);
    fx.train("m.json", &[]);
    let heldout = fx.path("heldout.csv");
    fs::write(
        &heldout,
        "userID,trajID,poiID,arrivalTime,departureTime\n\
         u1,h1,1,0,10\nu1,h1,2,20,30\nu1,h1,3,40,50\n\
         u2,h2,77,0,10\nu2,h2,2,20,30\n\
         u3,h3,4,0,10\nu3,h3,5,20,30\n",
    )
    .unwrap();
    let m = fx.path("m.json");
    let report: Value = serde_json::from_str(&ok(&["eval", "--model", s(&m), "--trajs", s(&heldout), "--per-query"])).unwrap();
    assert_eq!(report["evaluated"], 2);
    assert_eq!(report["skipped"], 1);
    let queries = report["queries"].as_array().unwrap();
    assert_eq!(queries.len(), 2);
    for q in queries {
        let f = q["points_f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f));
        assert_eq!(q["predicted"][0], q["truth"][0]);
    }

    let grid: Value = serde_json::from_str(&ok(&["eval", "--model", s(&m), "--trajs", s(&heldout), "--alpha-grid", "0,0.5,1"])).unwrap();
    let points = grid["grid"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    let best = points.iter().map(|p| p["mean_pairs_f1"].as_f64().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let best_alpha = points.iter().find(|p| p["mean_pairs_f1"].as_f64().unwrap() == best).unwrap()["alpha"].as_f64();
    assert_eq!(grid["best_alpha"].as_f64(), best_alpha);
    assert_eq!(exit_code(&["eval", "--model", s(&m), "--trajs", s(&heldout), "--alpha-grid", "1.5"]), 1);
}

#[test]
fn serve_answers_health() {
    let fx = Fixture::synth(10, 60, 9);
    fx.train("m.json", &[]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_pathrec"))
        .args(["serve", "--model", s(&fx.path("m.json")), "--port", "0"])
        .env_remove("PATHREC_CONFIG")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit("http://").next().unwrap().to_owned();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /health HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let health: Value = serde_json::from_str(body).unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["model_version"], Model::load(fx.path("m.json")).unwrap().version());
}
