//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the report reads top to bottom. The overfit smoke
//! model is trained once and reused by the trend and end-to-end checks.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use planforge_core::dataset::{
    apply_drift, few_shot_subset, gen_pentagon_set, record_to_json, sample_corner_counts, BubbleGraph, CornerHistogram,
    Edge, FloorplanRecord,
};
use planforge_core::denoiser::{
    build_masks, gradient_check, save_checkpoint, train_with, training_mse, DenoiserModel, LossRecord, ModelConfig,
    TrainConfig, TrainHooks,
};
use planforge_core::diffusion::{
    cfg_blend, cosine_schedule, forward_diffuse, sample, LayoutTensor, NoiseSchedule, SampleRequest, SamplerOptions,
};
use planforge_core::geometry::{
    out_of_boundary_ratio, AdjacencyThresholds, Boundary, Floorplan, Point, Polygon, RoomType,
};
use planforge_core::metrics::{
    boundary_compatibility, boundary_violations, diversity_score, fid, graph_compatibility_with, mean_std,
    FeatureExtractor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn schedule_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for steps in [10, 100, 1000] {
        let s = cosine_schedule(steps, 0.008).map_err(|e| e.to_string())?;
        let first = s.alpha_bar(1);
        let last = s.alpha_bar(steps);
        let monotone = (1..=steps).all(|t| s.alpha_bar(t) < s.alpha_bar(t - 1));
        notes.push(format!("T={steps}: ᾱ₁={first:.4} ᾱ_T={last:.2e}"));
        if first <= 0.99 {
            failures.push(format!("T={steps}: ᾱ₁={first:.6} is not > 0.99"));
        }
        if last >= 0.01 {
            failures.push(format!("T={steps}: ᾱ_T={last:.3e} is not < 0.01"));
        }
        if !monotone {
            failures.push(format!("T={steps}: ᾱ not strictly decreasing"));
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn forward_statistics() -> Outcome {
    const DRAWS: usize = 10_000;
    let steps = 1000;
    let s = cosine_schedule(steps, 0.008).map_err(|e| e.to_string())?;
    let rec = &gen_pentagon_set(7, 1)[0];
    let x0 = LayoutTensor::from_floorplan(&rec.plan, 8, 12).map_err(|e| e.to_string())?;
    let real: Vec<usize> = x0.real_slots().flat_map(|s| [2 * s, 2 * s + 1]).collect();
    let x0v: Vec<f64> = real.iter().map(|&i| x0.values()[i]).collect();
    let norm2: f64 = x0v.iter().map(|v| v * v).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut notes = Vec::new();
    for t in [steps / 4, steps / 2, 3 * steps / 4] {
        let ab = s.alpha_bar(t);
        let mut sum = vec![0.0; real.len()];
        let mut sum_sq = vec![0.0; real.len()];
        for _ in 0..DRAWS {
            let eps = x0.gaussian_like(&mut rng);
            let xt = forward_diffuse(&x0, t, &eps, &s).map_err(|e| e.to_string())?;
            for (k, &i) in real.iter().enumerate() {
                let v = xt.values()[i];
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
        let n = DRAWS as f64;
        let mean: Vec<f64> = sum.iter().map(|v| v / n).collect();
        // scale of the empirical mean along x0, pooled over every coordinate
        let scale = mean.iter().zip(&x0v).map(|(m, x)| m * x).sum::<f64>() / norm2;
        let var = sum_sq.iter().zip(&mean).map(|(sq, m)| (sq - n * m * m) / (n - 1.0)).sum::<f64>() / mean.len() as f64;
        let mean_err = (scale - ab.sqrt()).abs() / ab.sqrt();
        let var_err = (var - (1.0 - ab)).abs() / (1.0 - ab);
        ensure(mean_err < 0.02, format!("t={t}: mean scale {scale:.5} vs √ᾱ {:.5}", ab.sqrt()))?;
        ensure(var_err < 0.02, format!("t={t}: variance {var:.5} vs 1-ᾱ {:.5}", 1.0 - ab))?;
        notes.push(format!("t={t}: mean {:.2}% var {:.2}%", 100.0 * mean_err, 100.0 * var_err));
    }
    Ok(notes.join("; "))
}

fn random_layout(rng: &mut impl Rng, counts: &[usize]) -> LayoutTensor {
    let mut t = LayoutTensor::zeros(8, 12, counts).unwrap();
    for s in t.real_slots().collect::<Vec<_>>() {
        t.set(s, [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
    }
    t
}

fn cfg_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let rooms = rng.random_range(1..=8);
        let counts: Vec<usize> = (0..rooms).map(|_| rng.random_range(3..=12)).collect();
        let c = random_layout(&mut rng, &counts);
        let u = random_layout(&mut rng, &counts);
        let blend = |l: f64| cfg_blend(&c, &u, l).map_err(|e| e.to_string());
        ensure(blend(1.0)? == c, "λ=1 differs from the conditional estimate")?;
        ensure(blend(0.0)? == u, "λ=0 differs from the unconditional estimate")?;
        let (l1, l2, a) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        let mixed = blend(a * l1 + (1.0 - a) * l2)?;
        let (b1, b2) = (blend(l1)?, blend(l2)?);
        for i in 0..mixed.values().len() {
            let want = a * b1.values()[i] + (1.0 - a) * b2.values()[i];
            worst = worst.max((mixed.values()[i] - want).abs());
        }
    }
    ensure(worst < 1e-12, format!("affinity error {worst:.3e}"))?;
    Ok(format!("endpoints bit-exact, affinity error {worst:.1e}"))
}

fn mask_oracle() -> Outcome {
    let cfg = ModelConfig::default();
    let mc = cfg.max_corners_per_room;
    let n = cfg.slots();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for case in 0..500 {
        let rooms = rng.random_range(1..=cfg.max_rooms);
        let counts: Vec<usize> = (0..rooms).map(|_| rng.random_range(3..=mc)).collect();
        let types: Vec<RoomType> = (0..rooms).map(|_| RoomType::ALL[rng.random_range(0..RoomType::ALL.len())]).collect();
        let mut edges = Vec::new();
        let mut linked = vec![vec![false; rooms]; rooms];
        for i in 0..rooms {
            for j in i + 1..rooms {
                if rng.random_bool(0.6) {
                    let connected = rng.random_bool(0.5);
                    linked[i][j] = connected;
                    linked[j][i] = connected;
                    edges.push(if rng.random_bool(0.5) { Edge::new(i, connected, j) } else { Edge::new(j, connected, i) });
                }
            }
        }
        let graph = BubbleGraph::new(types, edges).map_err(|e| e.to_string())?;
        let m = build_masks(&counts, &graph, &cfg).map_err(|e| e.to_string())?;
        let real = |s: usize| s / mc < rooms && s % mc < counts[s / mc];
        for a in 0..n {
            ensure(m.valid[a] == real(a), format!("case {case}: valid[{a}]"))?;
            for b in 0..n {
                let both = real(a) && real(b);
                let (ra, rb) = (a / mc, b / mc);
                let gsa = both;
                let csa = both && ra == rb;
                let rca = both && ra != rb && linked[ra][rb];
                ensure(m.gsa[[a, b]] == gsa, format!("case {case}: gsa[{a},{b}]"))?;
                ensure(m.csa[[a, b]] == csa, format!("case {case}: csa[{a},{b}]"))?;
                ensure(m.rca[[a, b]] == rca, format!("case {case}: rca[{a},{b}]"))?;
                ensure(!(m.csa[[a, b]] && m.rca[[a, b]]), format!("case {case}: csa∧rca at {a},{b}"))?;
                ensure(!(m.csa[[a, b]] || m.rca[[a, b]]) || m.gsa[[a, b]], format!("case {case}: csa∨rca ⊄ gsa"))?;
            }
        }
    }
    Ok("500 instances match the pairwise rules".into())
}

fn gradient_check_criterion() -> Outcome {
    let errors = gradient_check(5).map_err(|e| e.to_string())?;
    let worst = errors
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .ok_or("no tensors checked")?;
    ensure(
        worst.relative_error < 1e-4,
        format!("{} in case {}: relative error {:.3e}", worst.tensor, worst.case, worst.relative_error),
    )?;
    Ok(format!("{} tensor checks, max relative error {:.2e} ({})", errors.len(), worst.relative_error, worst.tensor))
}

struct Smoke {
    records: Vec<FloorplanRecord>,
    sched: NoiseSchedule,
    early: DenoiserModel,
    last: DenoiserModel,
    train_time: Duration,
}

struct Capture {
    early: Option<DenoiserModel>,
}

impl TrainHooks for Capture {
    fn on_step(&mut self, _: &LossRecord) -> planforge_core::Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, model: &DenoiserModel) -> planforge_core::Result<()> {
        if model.step == 200 {
            self.early = Some(model.clone());
        }
        Ok(())
    }
}

fn smoke_config() -> TrainConfig {
    TrainConfig { steps: 2000, batch_size: 64, lr_start: 3e-3, checkpoint_every: 200, seed: 0, ..TrainConfig::default() }
}

fn train_smoke() -> Result<Smoke, String> {
    let records = gen_pentagon_set(7, 8);
    let sched = cosine_schedule(1000, 0.008).map_err(|e| e.to_string())?;
    let mut model = DenoiserModel::new(ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let mut hooks = Capture { early: None };
    let start = Instant::now();
    train_with(&mut model, &records, &sched, &smoke_config(), &mut hooks).map_err(|e| e.to_string())?;
    let early = hooks.early.ok_or("no checkpoint at step 200")?;
    Ok(Smoke { records, sched, early, last: model, train_time: start.elapsed() })
}

fn draw(model: &DenoiserModel, smoke: &Smoke, rec: &FloorplanRecord, n: usize, seed: u64) -> Result<Vec<Floorplan>, String> {
    let req = SampleRequest {
        graph: rec.graph.clone(),
        boundary: rec.plan.boundary.clone(),
        lambda: 1.0,
        num_samples: n,
        seed,
        corner_counts: Some(rec.plan.corner_counts()),
    };
    sample(model, &req, &smoke.sched, None, SamplerOptions::default()).map_err(|e| e.to_string())
}

fn overfit_smoke(smoke: &Smoke) -> Outcome {
    const PER_CONDITION: usize = 4;
    let mse = training_mse(&smoke.last, &smoke.records, &smoke.sched, 99).map_err(|e| e.to_string())?;
    let th = AdjacencyThresholds::default();
    let mut gcs = Vec::new();
    let mut violations = Vec::new();
    for (c, rec) in smoke.records.iter().enumerate() {
        let plans = draw(&smoke.last, smoke, rec, PER_CONDITION, 10_000 + (c * PER_CONDITION) as u64)?;
        for p in &plans {
            gcs.push(graph_compatibility_with(&rec.graph, p, &th).map_err(|e| e.to_string())? as f64);
        }
        violations.extend(boundary_violations(&plans, rec.plan.boundary.as_ref().unwrap(), 0.01));
    }
    let (gc, _) = mean_std(&gcs);
    let bc = violations.iter().filter(|&&v| v).count() as f64 / violations.len() as f64;
    let detail = format!(
        "train {:.0}s, mse {mse:.4}, GC {gc:.3}, BC {bc:.3} over {} samples",
        smoke.train_time.as_secs_f64(),
        gcs.len()
    );
    ensure(mse < 0.02, format!("training MSE {mse:.4} ≥ 0.02; {detail}"))?;
    ensure(gc < 0.5, format!("mean GC {gc:.3} ≥ 0.5; {detail}"))?;
    ensure(bc < 0.25, format!("BC {bc:.3} ≥ 0.25; {detail}"))?;
    Ok(detail)
}

fn trend_scores(model: &DenoiserModel, smoke: &Smoke) -> Result<(f64, f64), String> {
    let extractor = FeatureExtractor::geometric();
    let mut violations = Vec::new();
    let mut ds = Vec::new();
    for (c, rec) in smoke.records.iter().take(2).enumerate() {
        let plans = draw(model, smoke, rec, 32, 20_000 + 32 * c as u64)?;
        violations.extend(boundary_violations(&plans, rec.plan.boundary.as_ref().unwrap(), 0.01));
        ds.push(diversity_score(&extractor.extract_all(&plans).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?);
    }
    let bc = violations.iter().filter(|&&v| v).count() as f64 / violations.len() as f64;
    Ok((bc, mean_std(&ds).0))
}

fn boundary_trend(smoke: &Smoke) -> Outcome {
    let (bc_early, ds_early) = trend_scores(&smoke.early, smoke)?;
    let (bc_late, ds_late) = trend_scores(&smoke.last, smoke)?;
    let detail = format!("step 200: BC {bc_early:.3} DS {ds_early:.3}; step 2000: BC {bc_late:.3} DS {ds_late:.3}");
    ensure(bc_early >= bc_late, format!("BC rose with training; {detail}"))?;
    ensure(ds_early >= ds_late, format!("DS rose with training; {detail}"))?;
    Ok(detail)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::new(vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]).unwrap()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let self_fid = fid(&a, &a).map_err(|e| e.to_string())?;
    ensure(self_fid.abs() < 1e-6, format!("FID(A,A) = {self_fid:e}"))?;

    // equal spread, means 10 apart: FID = 10²
    let one: Vec<Vec<f64>> = [-1.0, 0.0, 1.0, 2.0, -2.0].iter().map(|&v| vec![v]).collect();
    let shifted: Vec<Vec<f64>> = one.iter().map(|v| vec![v[0] + 10.0]).collect();
    let f1 = fid(&one, &shifted).map_err(|e| e.to_string())?;
    ensure((f1 - 100.0).abs() < 1e-6, format!("1-D FID = {f1}"))?;

    let ds = diversity_score(&[vec![0.0, 0.0], vec![2.0, 0.0]]).map_err(|e| e.to_string())?;
    ensure(ds == 2.0, format!("DS = {ds}"))?;

    let b = Boundary::new(rect(-0.5, -0.5, 0.5, 0.5));
    let outside = Floorplan::new(vec![(RoomType::Bedroom, rect(0.6, 0.6, 0.9, 0.9))], None);
    let batch = vec![outside; 6];
    let bc = boundary_compatibility(&batch, &b, 0.01).map_err(|e| e.to_string())?;
    let indicators: Vec<f64> = boundary_violations(&batch, &b, 0.01).iter().map(|&v| f64::from(u8::from(v))).collect();
    let (mean, std) = mean_std(&indicators);
    ensure(bc == 1.0 && mean == 1.0 && std == 0.0, format!("all-outside BC {bc} ± {std}"))?;

    let half = Floorplan::new(vec![(RoomType::Living, rect(0.0, 0.0, 1.0, 1.0))], None);
    let r = out_of_boundary_ratio(&half, &Boundary::new(rect(-1.0, -1.0, 0.5, 2.0))).map_err(|e| e.to_string())?;
    ensure((r - 0.5).abs() <= 0.01, format!("half overlap ratio {r}"))?;
    Ok(format!("FID(A,A) {self_fid:.1e}, 1-D FID {f1:.9}, DS {ds}, BC {bc}±{std}, half overlap {r:.4}"))
}

fn chi_square_p(observed: &[u64], weights: &[u64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let w: u64 = weights.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(weights)
        .map(|(&o, &k)| {
            let e = n as f64 * k as f64 / w as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((observed.len() - 1) as f64).unwrap().cdf(stat)
}

fn dataset_properties() -> Outcome {
    let set = gen_pentagon_set(7, 20);
    ensure(set.len() == 20, "pentagon set size")?;
    for r in &set {
        r.validate().map_err(|e| e.to_string())?;
        ensure(r.plan.rooms[0].polygon.corners().len() == 5, format!("{}: central room not 5-cornered", r.id))?;
        let spokes = r.graph.positive_edges().filter(|e| e.i == 0 || e.j == 0).count();
        ensure(spokes == 5, format!("{}: {spokes} spoke edges", r.id))?;
    }

    let twice = apply_drift(&apply_drift(&set));
    ensure(twice == set, "drift applied twice changed the records")?;
    let bytes = |rs: &[FloorplanRecord]| rs.iter().map(record_to_json).collect::<Vec<_>>();
    ensure(bytes(&twice) == bytes(&set), "drift involution is not byte-exact")?;
    ensure(apply_drift(&set) != set, "drift is the identity on the pentagon set")?;

    let ids = |rs: Vec<FloorplanRecord>| rs.into_iter().map(|r| r.id).collect::<Vec<_>>();
    let a = ids(few_shot_subset(&set, 5, 1).map_err(|e| e.to_string())?);
    ensure(a.len() == 5, "subset size")?;
    ensure(a == ids(few_shot_subset(&set, 5, 1).unwrap()), "few-shot subset is not deterministic")?;

    let mut hist = CornerHistogram::default();
    let bedroom = [(4, 500), (5, 200), (6, 200), (8, 100)];
    let kitchen = [(4, 3), (6, 1)];
    for (k, c) in bedroom {
        hist.insert(RoomType::Bedroom, k, c).unwrap();
    }
    for (k, c) in kitchen {
        hist.insert(RoomType::Kitchen, k, c).unwrap();
    }
    let graph = BubbleGraph::new(vec![RoomType::Bedroom, RoomType::Kitchen], vec![Edge::new(0, true, 1)]).unwrap();
    let mut obs_b = [0u64; 4];
    let mut obs_k = [0u64; 2];
    for seed in 0..10_000 {
        let counts = sample_corner_counts(&graph, &hist, seed).map_err(|e| e.to_string())?;
        obs_b[bedroom.iter().position(|&(k, _)| k == counts[0]).ok_or("unknown bedroom count")?] += 1;
        obs_k[kitchen.iter().position(|&(k, _)| k == counts[1]).ok_or("unknown kitchen count")?] += 1;
    }
    let p_b = chi_square_p(&obs_b, &bedroom.map(|x| x.1));
    let p_k = chi_square_p(&obs_k, &kitchen.map(|x| x.1));
    ensure(p_b > 0.01 && p_k > 0.01, format!("chi-square p values {p_b:.4}, {p_k:.4}"))?;
    Ok(format!("20 pentagon plans valid, drift involutive, subset stable, χ² p = {p_b:.3} / {p_k:.3}"))
}

fn end_to_end(smoke: &Smoke) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("smoke");
    save_checkpoint(&smoke.last, &ckpt).map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("cond.json"), record_to_json(&smoke.records[3])).map_err(|e| e.to_string())?;
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_planforge"))
            .current_dir(dir.path())
            .env("PLANFORGE_HOME", dir.path().join("home"))
            .env("RUST_LOG", "warn")
            .args(["sample", "--checkpoint", "smoke", "--condition", "cond.json", "--lambda", "1", "--n", "4"])
            .args(["--seed", "42", "--out", out])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())?;
        std::fs::read(Path::new(dir.path()).join(out).join("samples.jsonl")).map_err(|e| e.to_string())
    };
    let a = run("first")?;
    let b = run("second")?;
    ensure(a == b, "sample outputs differ between identical runs")?;
    let lines = String::from_utf8_lossy(&a).lines().count();
    ensure(lines == 4, format!("{lines} sample lines"))?;
    Ok(format!("{} identical bytes over {lines} records", a.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f())).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("took {took:.1?}, budget {budget:?}; {d}")),
            other => other,
        };
        match outcome {
            Ok(d) => println!("PASS {name} ({took:.2?}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} ({took:.2?}): {d}");
            }
        }
    };
    let secs = Duration::from_secs;
    report("schedule suite", secs(1), &mut schedule_suite);
    report("forward-process statistics", secs(10), &mut forward_statistics);
    report("guidance blend endpoints", secs(10), &mut cfg_endpoints);
    report("mask oracle", secs(30), &mut mask_oracle);
    report("gradient check", secs(60), &mut gradient_check_criterion);
    report("metric oracles", secs(10), &mut metric_oracles);
    report("dataset properties", secs(30), &mut dataset_properties);

    let start = Instant::now();
    let smoke = catch_unwind(train_smoke).unwrap_or_else(|_| Err("training panicked".into()));
    let sample_budget = secs(15 * 60).saturating_sub(start.elapsed());
    match &smoke {
        Ok(s) => {
            report("overfit smoke train", sample_budget, &mut || overfit_smoke(s));
            report("boundary-adherence trend", secs(10 * 60), &mut || boundary_trend(s));
            report("end-to-end determinism", secs(2 * 60), &mut || end_to_end(s));
        }
        Err(e) => {
            for name in ["overfit smoke train", "boundary-adherence trend", "end-to-end determinism"] {
                report(name, secs(1), &mut || Err(format!("smoke training failed: {e}")));
            }
        }
    }
    println!("{failed} acceptance criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
