//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::collections::HashSet;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use pathrec_core::display::{scale_feature_scores, scale_route_scores, scale_transition_scores};
use pathrec_core::inference::{brute_force_top_k, top_k_routes};
use pathrec_core::ranking::{ranksvm_gradient, ranksvm_objective, train, PairGroup, RankingProblem};
use pathrec_core::synth::{generate, GroundTruth, SynthConfig};
use pathrec_core::{
    fit_markov, train_model, Dataset, Model, Poi, PoiId, Query, RankWeights, RouteScorer, TrainConfig, TrainOptions,
    Trajectory, TravelMode, Visit,
};
use pathrec_service::api::{recommend, RecommendRequest, RecommendResponse};
use pathrec_service::{json, router, AppState};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn trajectory(id: &str, pois: &[PoiId]) -> Trajectory {
    Trajectory {
        id: id.into(),
        visits: pois
            .iter()
            .enumerate()
            .map(|(i, &p)| Visit {
                user_id: "u".into(),
                traj_id: id.into(),
                poi_id: p,
                arrival: 1000 * i as i64,
                departure: 1000 * i as i64 + 500,
            })
            .collect(),
    }
}

fn random_pois(rng: &mut ChaCha8Rng, m: usize) -> Vec<Poi> {
    (0..m)
        .map(|i| {
            let lat = -37.81 + rng.random_range(-0.03..0.03);
            let lon = 144.96 + rng.random_range(-0.03..0.03);
            Poi::new(i as u32 + 1, &format!("p{i}"), "c", lat, lon)
        })
        .collect()
}

/// Random repeat-free trajectories over `pois`.
fn random_dataset(rng: &mut ChaCha8Rng, pois: Vec<Poi>, n: usize) -> Dataset {
    let ids: Vec<PoiId> = pois.iter().map(|p| p.id).collect();
    let trajectories = (0..n)
        .map(|t| {
            let mut route = ids.clone();
            route.shuffle(rng);
            route.truncate(rng.random_range(2..=ids.len().min(5)));
            trajectory(&format!("t{t}"), &route)
        })
        .collect();
    Dataset::new(pois, trajectories).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut instances = 0;
    for alpha in [0.0, 0.5, 1.0] {
        for _ in 0..80 {
            let m = rng.random_range(3..=8);
            let l = rng.random_range(2..=m.min(5));
            let pois = random_pois(&mut rng, m);
            let n = rng.random_range(0..12);
            let ds = random_dataset(&mut rng, pois, n);
            let kappa = rng.random_range(0.05..2.0);
            let transitions = fit_markov(&ds, kappa).map_err(err)?;
            let dim = 5;
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let unary = (0..m)
                .map(|_| w.iter().map(|wi| wi * rng.random_range(-2.0..2.0)).sum())
                .collect();
            let start = rng.random_range(0..m);
            let scorer = RouteScorer::new(ds.pois(), &transitions, unary, alpha, 5.0, start, l).map_err(err)?;
            let fast = top_k_routes(&scorer, 10).map_err(err)?;
            let slow = brute_force_top_k(&scorer, 10).map_err(err)?;
            let ids = |r: &pathrec_core::TopKResult| r.routes.iter().map(|x| x.pois.clone()).collect::<Vec<_>>();
            check(ids(&fast) == ids(&slow), || format!("route lists differ at instance {instances} (M={m}, l={l}, α={alpha})"))?;
            for (a, b) in fast.routes.iter().zip(&slow.routes) {
                check((a.total - b.total).abs() <= 1e-9, || format!("totals {} vs {}", a.total, b.total))?;
            }
            instances += 1;
        }
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{instances} instances, M ≤ 8, l ≤ 5, k = 10, {elapsed:.2?}"))
}

fn sum_is_total(resp: &RecommendResponse) -> Result<usize, String> {
    for r in &resp.routes {
        let unary: f64 = r.poi_scores.iter().sum();
        let pairwise: f64 = r.transition_scores.iter().sum();
        check((unary + pairwise).to_bits() == r.total.to_bits(), || {
            format!("route {:?}: {unary} + {pairwise} != {}", r.pois.iter().map(|p| p.id).collect::<Vec<_>>(), r.total)
        })?;
    }
    Ok(resp.routes.len())
}

/// Checks the identity on the serialized response, after a JSON round trip.
fn decomposition_identity() -> Outcome {
    let data = generate(&SynthConfig::new(60, 400, 17)).map_err(err)?;
    let (base, _) = train_model(&data.dataset().map_err(err)?, &TrainOptions::default()).map_err(err)?;
    let mut routes = 0;
    let mut responses = 0;
    for alpha in [0.0, 0.3, 0.5, 1.0] {
        let model = base.with_alpha(alpha).map_err(err)?;
        for mode in [TravelMode::Walking, TravelMode::Bicycling, TravelMode::Driving] {
            for length in 2..=8 {
                for start in [1, 7, 23, 60] {
                    let req = RecommendRequest {
                        start_poi: PoiId(start),
                        length,
                        mode,
                        k: 10,
                    };
                    let body = json::to_string(&recommend(&model, &req).map_err(err)?).map_err(err)?;
                    let resp: RecommendResponse = serde_json::from_str(&body).map_err(err)?;
                    routes += sum_is_total(&resp)?;
                    responses += 1;
                }
            }
        }
    }
    Ok(format!("{routes} routes in {responses} responses, bit-exact"))
}

fn random_problem(rng: &mut ChaCha8Rng, dim: usize) -> RankingProblem {
    let groups = (0..rng.random_range(1..5))
        .map(|_| {
            let n = rng.random_range(3..9);
            let rows = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut pairs: Vec<(u32, u32)> = (0..n as u32)
                .flat_map(|p| (0..n as u32).map(move |q| (p, q)))
                .filter(|&(p, q)| p != q && rng.random_bool(0.4))
                .collect();
            pairs.push((0, 1));
            PairGroup::new(dim, rows, pairs).unwrap()
        })
        .collect();
    RankingProblem::new(dim, groups).unwrap()
}

fn gradient_correctness() -> Outcome {
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let dim = rng.random_range(2..7);
        let problem = random_problem(&mut rng, dim);
        let c = rng.random_range(0.1..10.0);
        for _ in 0..10 {
            let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = ranksvm_gradient(&RankWeights(w.clone()), &problem, c).map_err(err)?;
            let f = |v: Vec<f64>| ranksvm_objective(&RankWeights(v), &problem, c).unwrap();
            let fd: Vec<f64> = (0..dim)
                .map(|j| {
                    let (mut up, mut down) = (w.clone(), w.clone());
                    up[j] += h;
                    down[j] -= h;
                    (f(up) - f(down)) / (2.0 * h)
                })
                .collect();
            let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = fd.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
            worst = worst.max(diff / scale);
        }
    }
    check(worst <= 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("50 points on 5 datasets, max relative error {worst:.2e}"))
}

fn scalar_toy() -> Outcome {
    let problem = RankingProblem::from_differences(1, &[vec![1.0]]).map_err(err)?;
    let report = train(&problem, &TrainConfig { c: 1.0, ..TrainConfig::default() }).map_err(err)?;
    let w = report.weights.0[0];
    check((w - 2.0 / 3.0).abs() <= 1e-4, || format!("w = {w}"))?;
    Ok(format!("w = {w:.12}"))
}

/// x[i] < x[j] implies y[i] < y[j], and equal inputs stay equal.
fn preserves_order(x: &[f64], y: &[f64]) -> bool {
    (0..x.len()).all(|i| (0..x.len()).all(|j| x[i].total_cmp(&x[j]) == y[i].total_cmp(&y[j])))
}

fn normalization_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut totals: Vec<f64> = (0..10).map(|i| rng.random_range(-20.0..5.0) + 1e-3 * i as f64).collect();
        totals.sort_by(|a, b| b.total_cmp(a));
        totals.dedup();
        check(totals.len() == 10, || "duplicate draw".into())?;
        let r = scale_route_scores(&totals).map_err(err)?;
        check(r.scaled[0] == 100.0 && r.scaled[9] == 10.0, || format!("route ends {} {}", r.scaled[0], r.scaled[9]))?;
        check(preserves_order(&totals, &r.scaled), || "route order".into())?;

        let trans: Vec<f64> = (0..rng.random_range(2..40)).map(|_| rng.random_range(-6.0..0.0)).collect();
        let t = scale_transition_scores(&trans).map_err(err)?;
        let (lo, hi) = (t.scaled.iter().copied().fold(f64::INFINITY, f64::min), t.scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        check(lo == 0.1 && hi == 1.0, || format!("transition span [{lo}, {hi}]"))?;
        check(preserves_order(&trans, &t.scaled), || "transition order".into())?;

        let axes: Vec<Vec<f64>> = (0..8).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        for (raw, axis) in axes.iter().zip(scale_feature_scores(&axes).map_err(err)?) {
            let lo = axis.scaled.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = axis.scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            check(lo == 1.0 && hi == 10.0, || format!("radar span [{lo}, {hi}]"))?;
            check(preserves_order(raw, &axis.scaled), || "radar order".into())?;
        }
    }
    Ok("200 draws: routes 100..10, transitions [0.1, 1], radar [1, 10], order kept".into())
}

fn markov_model() -> Outcome {
    let pois: Vec<Poi> = (1..=3).map(|i| Poi::new(i, "p", "c", 0.0, 0.0)).collect();
    let (a, b, c) = (PoiId(1), PoiId(2), PoiId(3));
    let hand = Dataset::new(pois, vec![trajectory("x", &[a, b]), trajectory("y", &[a, b]), trajectory("z", &[a, c])]).map_err(err)?;
    let m = fit_markov(&hand, 1.0).map_err(err)?;
    check(m.prob(0, 1) == 3.0 / 5.0 && m.prob(0, 2) == 2.0 / 5.0, || format!("P(A→B) = {}, P(A→C) = {}", m.prob(0, 1), m.prob(0, 2)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..30);
        let pois = random_pois(&mut rng, n);
        let trajs = rng.random_range(1..60);
        let ds = random_dataset(&mut rng, pois, trajs);
        let m = fit_markov(&ds, rng.random_range(0.01..3.0)).map_err(err)?;
        for i in 0..n {
            worst = worst.max((m.row(i).iter().sum::<f64>() - 1.0).abs());
            rows += 1;
        }
    }
    check(worst <= 1e-9, || format!("row sum off by {worst:e}"))?;
    Ok(format!("hand example 3/5, 2/5 exact; {rows} rows, max |Σ−1| = {worst:.1e}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pathrec"))
        .args(args)
        .env_remove("PATHREC_CONFIG")
        .output()
        .map_err(err)?;
    check(out.status.success(), || format!("pathrec {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

/// Generates, trains and scores entirely through the CLI and the files it
/// writes.
fn synthetic_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut rates = Vec::new();
    for seed in [1, 2, 3] {
        let out = dir.path().join(format!("s{seed}"));
        let p = |name: &str| out.join(name).to_str().unwrap().to_owned();
        run_cli(&["synth", "--pois", "25", "--trajs", "500", "--seed", &seed.to_string(), "--out-dir", &p("")])?;
        run_cli(&["train", "--pois", &p("pois.csv"), "--trajs", &p("trajs.csv"), "--out", &p("model.json")])?;
        let truth: GroundTruth = serde_json::from_slice(&std::fs::read(out.join("ground_truth.json")).map_err(err)?).map_err(err)?;
        let model = Model::load(out.join("model.json")).map_err(err)?;
        let hits = truth
            .recovery_queries
            .iter()
            .filter(|q| {
                let query = Query::new(q.start, q.length, TravelMode::Walking);
                let best = model
                    .pois()
                    .iter()
                    .filter(|p| p.id != q.start)
                    .max_by(|x, y| {
                        let s = |id| model.score_poi(&query, id).unwrap();
                        s(x.id).total_cmp(&s(y.id))
                    })
                    .unwrap();
                best.id == q.expected_top
            })
            .count();
        rates.push(hits as f64 / truth.recovery_queries.len() as f64);
    }
    let worst = rates.iter().copied().fold(1.0, f64::min);
    let shown: Vec<String> = rates.iter().map(|r| format!("{:.1}%", 100.0 * r)).collect();
    check(worst >= 0.9, || format!("recovery {}", shown.join(", ")))?;
    Ok(format!("recovery per seed {}", shown.join(", ")))
}

async fn post(app: axum::Router, body: String) -> Result<(StatusCode, Vec<u8>), String> {
    let req = Request::post("/recommend")
        .header("content-type", "application/json")
        .body(Body::from(body))
        .map_err(err)?;
    let resp = app.oneshot(req).await.map_err(err)?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(err)?.to_bytes();
    Ok((status, bytes.to_vec()))
}

fn service_determinism_and_latency() -> Outcome {
    let data = generate(&SynthConfig::new(500, 1000, 31)).map_err(err)?;
    let (model, _) = train_model(&data.dataset().map_err(err)?, &TrainOptions::default()).map_err(err)?;
    let models = [model.with_alpha(0.0).map_err(err)?, model];
    let runtime = tokio::runtime::Builder::new_current_thread().build().map_err(err)?;
    let mut slowest = Duration::ZERO;
    let mut requests = 0;
    for model in models {
        let alpha = model.alpha();
        let app = router(AppState::new(Some(model)));
        for start in [1, 50, 123, 250, 377, 499] {
            let body = format!(r#"{{"start_poi": {start}, "length": 8, "mode": "walking", "k": 10}}"#);
            let t = Instant::now();
            let (status, first) = runtime.block_on(post(app.clone(), body.clone()))?;
            let elapsed = t.elapsed();
            check(status == StatusCode::OK, || format!("status {status}: {}", String::from_utf8_lossy(&first)))?;
            check(elapsed < Duration::from_millis(500), || format!("start {start}, α={alpha}: {elapsed:?}"))?;
            slowest = slowest.max(elapsed);
            let (_, second) = runtime.block_on(post(app.clone(), body))?;
            check(first == second, || format!("bodies differ for start {start}, α={alpha}"))?;
            let resp: RecommendResponse = serde_json::from_slice(&first).map_err(err)?;
            check(resp.routes.len() == 10, || "fewer than 10 routes".into())?;
            let distinct: HashSet<_> = resp.routes.iter().map(|r| r.pois.iter().map(|p| p.id).collect::<Vec<_>>()).collect();
            check(distinct.len() == 10, || "duplicate routes".into())?;
            sum_is_total(&resp)?;
            requests += 1;
        }
    }
    Ok(format!("M = 500, l = 8, k = 10: {requests} requests byte-identical on repeat, slowest {slowest:.1?}"))
}

fn main() {
    // flags passed through by `cargo test` are ignored
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("decomposition identity", decomposition_identity),
        ("gradient correctness", gradient_correctness),
        ("closed-form scalar toy", scalar_toy),
        ("normalization endpoints", normalization_endpoints),
        ("markov model", markov_model),
        ("synthetic recovery", synthetic_recovery),
        ("service determinism and latency", service_determinism_and_latency),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name:<32} {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<32} {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
