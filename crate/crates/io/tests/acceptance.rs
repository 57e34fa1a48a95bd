//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use aaad_core::bundle::Model;
use aaad_core::dataset::FitOptions;
use aaad_core::engine::{
    shadow_mode, EngineConfig, GazeSample, GroundTruth, KeyCode, TrialConfig, TrialEngine, TrialInput, TrialReport,
    TICK_MS,
};
use aaad_core::ppc::{
    build_pc_curve, fit_detectability_ppc, fit_exponential, fit_log_eccentricity, BinnedPc, DetectabilityCurve,
    DetectabilityPpc, ExponentialPpc, FitPoint, PerformanceCurve, SigmaProfile,
};
use aaad_core::satisfaction::{channel_threshold, ChannelThresholds, SatisfactionConfig, TriggerState, BISECTION_TOL};
use aaad_core::sdt::{dprime_lambda, normal_cdf, pc_from_indices, probit, rates_from_counts, ConfusionCounts, PriorWeights};
use aaad_core::surface::{compose, exploration_map, ClutterMap, Fixation, GridGeometry, SurfaceGrid, SurfaceRenderer};
use aaad_core::{Level, Scene, Target};
use aaad_io::log::{split_trials, LogRecord};
use aaad_io::reference::{reference_bundle, REFERENCE_SEED};
use aaad_io::replay::{replay, Speed};
use aaad_io::synth::{simulate, synthesize, trial_schedule, Arm, SaccadePolicy, StopPolicy, SyntheticObserverParams};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(elapsed < budget, || format!("took {elapsed:.2?}, budget {budget:.0?}"))
}

fn reference_model(decimation: u32) -> Arc<Model> {
    let doc = reference_bundle(REFERENCE_SEED, &FitOptions::default()).expect("reference bundle fits");
    Arc::new(Model::from_document(doc, None, decimation).expect("reference bundle loads"))
}

fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

// ---------------------------------------------------------------------------

fn sdt_oracle() -> Outcome {
    let t0 = Instant::now();
    let oracle = Normal::new(0.0, 1.0).unwrap();
    let mut worst_probit = 0.0f64;
    let mut worst_cdf = 0.0f64;
    let n = 20_000;
    for i in 0..=n {
        // Half the grid log-spaced into each tail, half linear.
        let u = i as f64 / n as f64;
        for p in [1e-6f64.powf(1.0 - u) * 0.5f64.powf(u), 1.0 - 1e-6f64.powf(1.0 - u) * 0.5f64.powf(u), 1e-6 + u * (1.0 - 2e-6)] {
            let z = probit(p).map_err(|e| e.to_string())?;
            worst_probit = worst_probit.max((z - oracle.inverse_cdf(p)).abs());
        }
        let z = -6.0 + 12.0 * u;
        worst_cdf = worst_cdf.max((normal_cdf(z) - oracle.cdf(z)).abs());
    }
    check(worst_probit <= 1e-7, || format!("probit off by {worst_probit:e}"))?;
    check(worst_cdf <= 1e-7, || format!("normal_cdf off by {worst_cdf:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_rt = 0.0f64;
    for _ in 0..10_000 {
        let hr: f64 = rng.random_range(1e-4..1.0 - 1e-4);
        let fa: f64 = rng.random_range(1e-4..1.0 - 1e-4);
        let ind = dprime_lambda(hr, fa).map_err(|e| e.to_string())?;
        worst_rt = worst_rt.max((ind.hit_rate() - hr).abs()).max((ind.false_alarm_rate() - fa).abs());
        let w = PriorWeights::new(rng.random_range(0.05..0.95)).unwrap();
        let pc = pc_from_indices(ind, w);
        worst_rt = worst_rt.max((pc - (w.m() * hr + w.n() * (1.0 - fa))).abs());
    }
    check(worst_rt <= 1e-8, || format!("roundtrip off by {worst_rt:e}"))?;
    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(1))?;
    Ok(format!("probit {worst_probit:.1e}, cdf {worst_cdf:.1e}, roundtrip {worst_rt:.1e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------

fn fit_recovery() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    // Noiseless.
    let (alpha, beta) = (2.4, 0.0025);
    let pts: Vec<FitPoint> = (1..=16).map(|i| i as f64 * 200.0).map(|x| FitPoint::new(x, alpha * (1.0 - (-beta * x).exp()), 1.0)).collect();
    let f = fit_exponential(&pts).map_err(|e| e.to_string())?;
    let e1 = rel_err(f.alpha, alpha).max(rel_err(f.beta, beta));
    check(e1 <= 1e-6, || format!("noiseless exponential off by {e1:e}: {f:?}"))?;

    let (ae, be) = (2.1, -0.7);
    let eccs = [1.0, 2.5, 5.0, 10.0, 15.0];
    let pts: Vec<(f64, f64)> = eccs.iter().map(|&e: &f64| (e, ae + be * e.ln())).collect();
    let c = fit_log_eccentricity(&pts, 400.0).map_err(|e| e.to_string())?;
    let e2 = rel_err(c.alpha_e, ae).max(rel_err(c.beta_e, be));
    check(e2 <= 1e-6, || format!("noiseless log-eccentricity off by {e2:e}: {c:?}"))?;

    // Detectability: each bin's proportion correct is exactly k/N and its
    // d' is placed where the generating curve passes through k/N.
    let (pc_inf, gamma) = (0.9, 1.3);
    let per_bin = 1000usize;
    let mut trials = Vec::new();
    for b in 0..10 {
        let k = [560, 620, 680, 730, 770, 800, 830, 850, 870, 880][b];
        let pc = k as f64 / per_bin as f64;
        let d = -(1.0 - (pc - 0.5) / (pc_inf - 0.5)).ln() / gamma;
        trials.extend((0..per_bin).map(|i| (d, i < k)));
    }
    let fit = fit_detectability_ppc(&trials, 10).map_err(|e| e.to_string())?;
    let e3 = rel_err(fit.ppc.pc_inf, pc_inf).max(rel_err(fit.ppc.gamma, gamma));
    check(e3 <= 1e-6, || format!("noiseless detectability off by {e3:e}: {:?}", fit.ppc))?;

    // Seeded noisy data, n = 20000 per fit.
    let conds = [200.0, 400.0, 800.0, 1800.0, 3200.0];
    let lambda = 0.9;
    let mut pts = Vec::new();
    for &x in &conds {
        let d = alpha * (1.0 - (-beta * x).exp());
        let per = 20_000 / conds.len() / 2;
        let hits = (0..per).filter(|_| rng.random::<f64>() < normal_cdf(d - lambda)).count() as u64;
        let fas = (0..per).filter(|_| rng.random::<f64>() < normal_cdf(-lambda)).count() as u64;
        let (hr, far) = rates_from_counts(&ConfusionCounts::new(hits, per as u64 - hits, fas, per as u64 - fas)).map_err(|e| e.to_string())?;
        pts.push(FitPoint::new(x, dprime_lambda(hr, far).map_err(|e| e.to_string())?.d_prime, 2.0 * per as f64));
    }
    let f = fit_exponential(&pts).map_err(|e| e.to_string())?;
    let n1 = rel_err(f.alpha, alpha).max(rel_err(f.beta, beta));
    check(n1 <= 0.15, || format!("noisy exponential off by {:.1}%: {f:?}", 100.0 * n1))?;

    let mut pts = Vec::new();
    for &e in &eccs {
        let d = ae + be * e.ln();
        let per = 20_000 / eccs.len() / 2;
        let hits = (0..per).filter(|_| rng.random::<f64>() < normal_cdf(d - lambda)).count() as u64;
        let fas = (0..per).filter(|_| rng.random::<f64>() < normal_cdf(-lambda)).count() as u64;
        let (hr, far) = rates_from_counts(&ConfusionCounts::new(hits, per as u64 - hits, fas, per as u64 - fas)).map_err(|e| e.to_string())?;
        pts.push((e, dprime_lambda(hr, far).map_err(|e| e.to_string())?.d_prime));
    }
    let c = fit_log_eccentricity(&pts, 400.0).map_err(|e| e.to_string())?;
    let n2 = rel_err(c.alpha_e, ae).max(rel_err(c.beta_e, be));
    check(n2 <= 0.15, || format!("noisy log-eccentricity off by {:.1}%: {c:?}", 100.0 * n2))?;

    let truth = DetectabilityPpc { pc_inf, gamma, clamped: false, d_max: 4.0 };
    let trials: Vec<(f64, bool)> = (0..20_000)
        .map(|_| {
            let d = rng.random_range(0.0..4.0);
            (d, rng.random::<f64>() < truth.eval(d))
        })
        .collect();
    let fit = fit_detectability_ppc(&trials, 10).map_err(|e| e.to_string())?;
    let dp = (fit.ppc.pc_inf - pc_inf).abs();
    let dg = rel_err(fit.ppc.gamma, gamma);
    check(dp <= 0.02 && dg <= 0.15, || format!("noisy detectability pc_inf off {dp:.3}, gamma off {:.1}%", 100.0 * dg))?;

    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "noiseless {:.1e}, noisy exp {:.1}%, ecc {:.1}%, pc_inf {dp:.3}, gamma {:.1}%, {elapsed:.2?}",
        e1.max(e2).max(e3),
        100.0 * n1,
        100.0 * n2,
        100.0 * dg
    ))
}

// ---------------------------------------------------------------------------

fn brute_force_threshold(curve: &dyn PerformanceCurve, cfg: &SatisfactionConfig, steps: usize) -> Option<(f64, f64)> {
    let z = probit(1.0 - cfg.eta).unwrap();
    let step = curve.domain_max() / steps as f64;
    (0..=steps).map(|i| i as f64 * step).find(|&x| {
        let sigma = curve.sigma(x).max(cfg.sigma_floor);
        // Pr[pc_max - pc < eps] > eta  <=>  pc - pc_max + eps > -z sigma.
        curve.pc(x) - curve.pc_max() + cfg.epsilon > -z * sigma
    }).map(|x| (x, step))
}

fn threshold_oracle() -> Outcome {
    let t0 = Instant::now();
    let cfg = SatisfactionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 100 {
        let x_max = rng.random_range(5.0..5000.0);
        // Non-increasing sigma knots so the satisfied set is one interval.
        let mut s = rng.random_range(0.01..0.08);
        let knots: Vec<BinnedPc> = (0..6)
            .map(|i| {
                s *= rng.random_range(0.6..1.0);
                BinnedPc { x: x_max * i as f64 / 5.0, pc_mean: 0.0, pc_stderr: s }
            })
            .collect();
        let curve: Box<dyn PerformanceCurve> = if tested % 2 == 0 {
            let ppc = ExponentialPpc::new(rng.random_range(0.8..3.0), rng.random_range(3.0..40.0) / x_max, x_max).unwrap();
            let w = PriorWeights::new(rng.random_range(0.2..0.8)).unwrap();
            Box::new(build_pc_curve(ppc, rng.random_range(0.2..1.5), w, &knots, cfg.sigma_floor).unwrap())
        } else {
            Box::new(DetectabilityCurve {
                ppc: DetectabilityPpc {
                    pc_inf: rng.random_range(0.7..0.98),
                    gamma: rng.random_range(3.0..40.0) / x_max,
                    clamped: false,
                    d_max: x_max,
                },
                sigma: SigmaProfile::from_bins(&knots, cfg.sigma_floor).unwrap(),
            })
        };
        let Some((brute, step)) = brute_force_threshold(curve.as_ref(), &cfg, 400_000) else {
            continue;
        };
        let got = channel_threshold(curve.as_ref(), &cfg).map_err(|e| format!("curve {tested}: {e}"))?;
        let tol = BISECTION_TOL * got + step;
        let err = (got - brute).abs();
        check(err <= tol, || format!("curve {tested}: threshold {got} vs brute force {brute} (tol {tol})"))?;
        worst = worst.max(err / tol);
        tested += 1;
    }

    // Constant sigma: PC(x*) = pc_max - eps - 1.95996 sigma.
    let mut worst_analytic = 0.0f64;
    for i in 0..100 {
        let sigma = 0.005 + 0.0005 * i as f64;
        let ppc = ExponentialPpc::new(2.0 + 0.01 * i as f64, 0.002, 3200.0).unwrap();
        let curve = build_pc_curve(ppc, 0.8, PriorWeights::EQUAL, &[], sigma).unwrap();
        let x = channel_threshold(&curve, &cfg).map_err(|e| e.to_string())?;
        let want = curve.pc_max() - cfg.epsilon - 1.95996 * sigma;
        worst_analytic = worst_analytic.max((curve.pc(x) - want).abs());
    }
    check(worst_analytic <= 1e-3, || format!("analytic form off by {worst_analytic:e}"))?;
    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(10))?;
    Ok(format!("100 curves within {:.2} of a bisection step, analytic {worst_analytic:.1e}, {elapsed:.2?}", worst))
}

// ---------------------------------------------------------------------------

fn surface_properties() -> Outcome {
    let t0 = Instant::now();
    let model = reference_model(1);
    let geom = model.geometry;
    check(geom == GridGeometry::default(), || format!("reference grid is {}", geom.describe()))?;
    let setting = Scene::new(Level::Medium, Level::Medium).with_target(Target::Weapon);
    let curves = model.family().get(&setting).map_err(|e| e.to_string())?;
    let renderer = SurfaceRenderer::new(geom);
    let (cx, cy) = (512u32, 380u32);
    let s = renderer.render(&Fixation::new(cx as f64, cy as f64, 400.0), curves).map_err(|e| e.to_string())?;

    // Radial symmetry: the profile falls with radius, so any pixel lies
    // between the axis values one pixel inside and outside its radius.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let axis = |r: f64| s.get(cx + r as u32, cy);
    let reach = (geom.width_px - 1 - cx) as f64;
    for _ in 0..20_000 {
        let (x, y) = (rng.random_range(0..geom.width_px), rng.random_range(0..geom.height_px));
        let r = (x as f64 - cx as f64).hypot(y as f64 - cy as f64);
        if r.ceil() + 1.0 > reach {
            continue;
        }
        let (hi, lo) = (axis((r.floor() - 1.0).max(0.0)), axis(r.ceil() + 1.0));
        let v = s.get(x, y);
        check(v >= lo && v <= hi, || format!("pixel ({x},{y}) r={r:.2} value {v} outside [{lo}, {hi}]"))?;
    }

    // 1 deg clamp: everything inside one degree equals the centre value.
    let r1 = 1.0 / geom.deg_per_px;
    let centre = s.get(cx, cy);
    for y in cy - r1 as u32..=cy + r1 as u32 {
        for x in cx - r1 as u32..=cx + r1 as u32 {
            let r = (x as f64 - cx as f64).hypot(y as f64 - cy as f64) * geom.deg_per_px;
            if r <= 1.0 {
                check(s.get(x, y) == centre, || format!("pixel ({x},{y}) at {r:.3} deg differs from the centre"))?;
            }
        }
    }

    // Exact additivity under composition.
    let fixes: Vec<Fixation> = (0..6)
        .map(|_| Fixation::new(rng.random_range(0.0..1024.0), rng.random_range(0.0..760.0), rng.random_range(100.0..1600.0)))
        .collect();
    let parts: Vec<SurfaceGrid> = fixes.iter().map(|f| renderer.render(f, curves).unwrap()).collect();
    let composite = compose(&geom, &parts).map_err(|e| e.to_string())?;
    let summed = parts.iter().map(|p| p.score()).fold(SurfaceGrid::zeros(geom).score(), |a, b| a + b);
    check(composite.score() == summed, || "D' of the composite differs from the summed scores".into())?;
    let mut reversed = parts.clone();
    reversed.reverse();
    check(compose(&geom, &reversed).unwrap() == composite, || "composition depends on order".into())?;
    let fast = fixes.iter().map(|f| renderer.score(f, curves).unwrap()).fold(SurfaceGrid::zeros(geom).score(), |a, b| a + b);
    check(fast == summed, || "score-only path differs from rendering".into())?;

    // Exploration map bounds.
    let fc_values: Vec<f64> = (0..geom.pixels()).map(|_| rng.random::<f64>()).collect();
    let fc = ClutterMap::new(geom, fc_values).map_err(|e| e.to_string())?;
    let map = exploration_map(&fc, &composite).map_err(|e| e.to_string())?;
    check(map.values().iter().zip(fc.values()).all(|(m, c)| m <= c), || "exploration map exceeds clutter".into())?;
    let empty = exploration_map(&fc, &SurfaceGrid::zeros(geom)).map_err(|e| e.to_string())?;
    check(empty == fc, || "zero-fixation map differs from clutter".into())?;

    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(10))?;
    Ok(format!("1024x760, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------

struct Corpus {
    model: Arc<Model>,
    logs: Vec<(TrialConfig, Vec<LogRecord>, TrialReport)>,
}

fn corpus(model: Arc<Model>) -> Corpus {
    let policies = [SaccadePolicy::Uniform, SaccadePolicy::MapGreedy];
    let stops = [StopPolicy::FixedTime { t_ms: 2500.0 }, StopPolicy::TriggerPlusReaction { delay_ms: 300.0, cap_ms: 6000.0 }];
    let schedule = trial_schedule(&model, 24, 77).unwrap();
    let logs = schedule
        .into_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let cfg = TrialConfig { aid_visible: i % 3 != 0, start_ms: 1000.0 * i as f64, ..cfg };
            let params = SyntheticObserverParams::new(100 + i as u64, policies[i % 2], stops[(i / 2) % 2]);
            let s = synthesize(&params, &cfg, &model, None).unwrap();
            (cfg, s.records, s.report)
        })
        .collect();
    Corpus { model, logs }
}

fn determinism(c: &Corpus) -> Outcome {
    let ecfg = EngineConfig::for_model(&c.model);
    for (i, (cfg, records, closed_loop)) in c.logs.iter().enumerate() {
        let speeds = if i == 0 { vec![Speed::AsFastAsPossible, Speed::Factor(1000.0), Speed::Factor(25.0)] } else { vec![Speed::AsFastAsPossible, Speed::Factor(1000.0)] };
        for speed in speeds {
            let r = replay(&c.model, records, speed, ecfg, None).map_err(|e| e.to_string())?;
            check(r.len() == 1, || format!("log {i}: {} reports", r.len()))?;
            let same = serde_json::to_string(&r[0]).unwrap() == serde_json::to_string(closed_loop).unwrap();
            check(r[0] == *closed_loop && same, || format!("log {i} at {speed:?}: replay differs from capture"))?;
        }
        let inputs: Vec<TrialInput> = records.iter().filter_map(|r| r.input()).collect();
        let shadow = shadow_mode(&c.model, cfg, ecfg, inputs.clone()).map_err(|e| e.to_string())?;
        let visible = aaad_core::engine::run_trial(&c.model, &TrialConfig { aid_visible: true, ..cfg.clone() }, ecfg, inputs).map_err(|e| e.to_string())?;
        let key = |r: &TrialReport| (r.trigger_times, r.trigger_offsets, r.final_d_score, r.n_eyemovements, r.n_fixations, r.duration_ms);
        check(key(&shadow) == key(&visible), || format!("log {i}: shadow computation differs from visible"))?;
    }
    Ok(format!("{} seeded logs bit-identical across speeds; shadow = visible", c.logs.len()))
}

fn cadence(c: &Corpus) -> Outcome {
    let mut ecfg = EngineConfig::for_model(&c.model);
    ecfg.trace = true;
    let mut entries = 0;
    let (mut d_changes, mut e_changes) = (0, 0);
    for (i, (_, records, _)) in c.logs.iter().enumerate() {
        for trial in split_trials(records).map_err(|e| e.to_string())? {
            let mut e = TrialEngine::new(c.model.clone(), trial.config, ecfg).map_err(|e| e.to_string())?;
            for input in trial.inputs {
                e.handle(input).map_err(|e| e.to_string())?;
            }
            let trace = e.trace();
            for w in trace.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b.d_score != a.d_score {
                    d_changes += 1;
                    check(b.fixation_ends > 0, || format!("log {i}: D' changed at a {} input without a fixation end (t={})", b.input, b.t_ms))?;
                }
                if b.eye_movements != a.eye_movements {
                    e_changes += 1;
                    check(b.saccade_events > 0, || format!("log {i}: eye movements changed without a saccade event (t={})", b.t_ms))?;
                }
            }
            entries += trace.len();
        }
    }
    check(d_changes > 0 && e_changes > 0, || "instrumented runs never changed a channel".into())?;
    Ok(format!("{entries} traced inputs, {d_changes} D' updates, {e_changes} eye-movement updates"))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Seg {
    Dwell { x: f64, y: f64, ms: u32 },
    Gap { ms: u32 },
    Key(KeyCode),
}

fn seg_strategy() -> impl Strategy<Value = Seg> {
    prop_oneof![
        6 => (0.0..1024.0f64, 0.0..760.0f64, 30u32..600).prop_map(|(x, y, ms)| Seg::Dwell { x, y, ms }),
        1 => (10u32..120).prop_map(|ms| Seg::Gap { ms }),
        1 => Just(Seg::Key(KeyCode::Space)),
    ]
}

fn latching(model: &Arc<Model>) -> Outcome {
    let ecfg = EngineConfig::for_model(model);
    let scene = trial_schedule(model, 1, 0).unwrap()[0].scene;
    let strategy = (
        prop::collection::vec(seg_strategy(), 1..25),
        0.0..3000.0f64,
        0.0..8.0f64,
        0.0..2.0f64,
        any::<bool>(),
    );
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    let result = runner.run(&strategy, |(segs, t_star, e_star, d_star, visible)| {
        let cfg = TrialConfig {
            trial_id: "latch".into(),
            image_id: "latch".into(),
            scene,
            aid_visible: visible,
            ground_truth: GroundTruth::default(),
            start_ms: 0.0,
        };
        let thr = ChannelThresholds { t_star, e_star, d_star };
        let mut e = TrialEngine::with_thresholds(model.clone(), cfg, ecfg, thr).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut prev = TriggerState::new();
        let mut t = 0.0;
        let mut next_tick = 1u64;
        let (mut x, mut y) = (512.0, 380.0);
        let step = |e: &mut TrialEngine, input: TrialInput, prev: &mut TriggerState| -> Result<(), TestCaseError> {
            if !e.is_searching() {
                return Ok(());
            }
            e.handle(input).map_err(|err| TestCaseError::fail(err.to_string()))?;
            let now = *e.trigger();
            for (was, is) in [(prev.time_ok, now.time_ok), (prev.eyemvmt_ok, now.eyemvmt_ok), (prev.detect_ok, now.detect_ok), (prev.general_ok, now.general_ok)] {
                prop_assert!(!was || is, "a satisfaction flag cleared");
            }
            let (p, n) = (prev.trigger_times, now.trigger_times);
            for (a, b) in [(p.time, n.time), (p.eye_movements, n.eye_movements), (p.detectability, n.detectability), (p.general, n.general)] {
                if a.is_some() {
                    prop_assert_eq!(a, b, "a trigger timestamp moved");
                }
            }
            match (n.time, n.eye_movements, n.detectability) {
                (Some(a), Some(b), Some(c)) => prop_assert_eq!(n.general, Some(a.max(b).max(c))),
                _ => prop_assert_eq!(n.general, None),
            }
            *prev = now;
            Ok(())
        };
        for seg in segs {
            let (ms, valid, key) = match seg {
                Seg::Dwell { x: nx, y: ny, ms } => {
                    (x, y) = (nx, ny);
                    (ms, true, None)
                }
                Seg::Gap { ms } => (ms, false, None),
                Seg::Key(k) => (0, true, Some(k)),
            };
            if let Some(code) = key {
                step(&mut e, TrialInput::Key { t_ms: t, code }, &mut prev)?;
            }
            for _ in 0..ms {
                t += 1.0;
                while next_tick as f64 * TICK_MS <= t {
                    step(&mut e, TrialInput::Tick { t_ms: next_tick as f64 * TICK_MS }, &mut prev)?;
                    next_tick += 1;
                }
                let s = GazeSample { t_ms: t, x_px: x, y_px: y, valid };
                step(&mut e, TrialInput::Gaze(s), &mut prev)?;
            }
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("1000 randomized streams; flags never cleared, general = max of channels".into())
}

// ---------------------------------------------------------------------------

fn speed_up(model: &Arc<Model>) -> Outcome {
    let t0 = Instant::now();
    let arms = [
        Arm { name: "fixed_time(3000)".into(), params: SyntheticObserverParams::new(0, SaccadePolicy::Uniform, StopPolicy::FixedTime { t_ms: 3000.0 }) },
        Arm {
            name: "trigger_plus_reaction(300)".into(),
            params: SyntheticObserverParams::new(0, SaccadePolicy::Uniform, StopPolicy::TriggerPlusReaction { delay_ms: 300.0, cap_ms: 10_000.0 }),
        },
    ];
    let r = simulate(model, &arms, 500, 20_240_602).map_err(|e| e.to_string())?;
    let (fixed, trig) = (&r.arms[0], &r.arms[1]);
    let ratio = fixed.mean_trial_time_s / trig.mean_trial_time_s;
    let dacc = (fixed.accuracy - trig.accuracy).abs();
    let summary = format!(
        "{:.3} s vs {:.3} s (ratio {ratio:.2}), accuracy {:.3} vs {:.3} (diff {:.1} pp), 500 trials/arm",
        fixed.mean_trial_time_s,
        trig.mean_trial_time_s,
        fixed.accuracy,
        trig.accuracy,
        100.0 * dacc
    );
    check(ratio > 1.2, || format!("ratio too small: {summary}"))?;
    check(dacc < 0.02, || format!("accuracy gap too large: {summary}"))?;
    let elapsed = t0.elapsed();
    within_budget(elapsed, Duration::from_secs(120))?;
    Ok(format!("{summary}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------

fn performance(c: &Corpus) -> Outcome {
    let model = &c.model;
    let ecfg = EngineConfig::for_model(model);

    // Per-input latency on a captured stream.
    let (_, records, _) = &c.logs[0];
    let trial = split_trials(records).map_err(|e| e.to_string())?.remove(0);
    let mut e = TrialEngine::new(model.clone(), trial.config, ecfg).map_err(|e| e.to_string())?;
    let (mut worst_fix, mut worst_plain) = (Duration::ZERO, Duration::ZERO);
    let mut busy = Duration::ZERO;
    let mut span = (f64::INFINITY, f64::NEG_INFINITY);
    for input in trial.inputs {
        let before = e.fixations().len();
        span = (span.0.min(input.t_ms()), span.1.max(input.t_ms()));
        let t = Instant::now();
        e.handle(input).map_err(|e| e.to_string())?;
        let dt = t.elapsed();
        busy += dt;
        if e.fixations().len() > before {
            worst_fix = worst_fix.max(dt);
        } else {
            worst_plain = worst_plain.max(dt);
        }
    }
    let stream = Duration::from_secs_f64((span.1 - span.0) / 1000.0);
    check(busy < stream, || format!("{busy:.2?} to process {stream:.2?} of gaze"))?;
    check(worst_fix < Duration::from_millis(42), || format!("fixation update took {worst_fix:.2?}"))?;

    // A 20-minute session log.
    let mut session = Vec::new();
    let mut start = 0.0;
    let arm = SyntheticObserverParams::new(5, SaccadePolicy::Uniform, StopPolicy::FixedTime { t_ms: 3000.0 });
    let mut i = 0;
    while start < 20.0 * 60_000.0 {
        let cfg = TrialConfig {
            trial_id: format!("perf-{i}"),
            image_id: "perf".into(),
            scene: Scene::new(Level::ALL[i % 3], Level::ALL[(i / 3) % 3]),
            aid_visible: true,
            ground_truth: GroundTruth { person_present: i % 2 == 0, weapon_present: i % 3 == 0 },
            start_ms: start,
        };
        let s = synthesize(&arm, &cfg, model, None).map_err(|e| e.to_string())?;
        start = s.records.last().unwrap().t_ms + 1000.0;
        session.extend(s.records);
        i += 1;
    }
    let t = Instant::now();
    let reports = replay(model, &session, Speed::AsFastAsPossible, ecfg, None).map_err(|e| e.to_string())?;
    let replay_time = t.elapsed();
    check(reports.len() == i && reports.iter().all(|r| r.complete), || "20-minute replay lost trials".into())?;
    check(replay_time < Duration::from_secs(10), || format!("20-minute replay took {replay_time:.2?}"))?;
    Ok(format!(
        "{stream:.1?} stream in {busy:.1?}; worst fixation update {worst_fix:.2?}, other input {worst_plain:.0?}; \
         20-min log ({} records, {i} trials) replayed in {replay_time:.2?}",
        session.len()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that matches nothing here skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match &out {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => println!("FAIL  {name}: {why}"),
        }
        results.push((name, out));
    };

    run("sdt oracle", &mut sdt_oracle);
    run("fit recovery", &mut fit_recovery);
    run("threshold oracle", &mut threshold_oracle);
    run("surface properties", &mut surface_properties);

    let full = reference_model(1);
    let corpus = corpus(full.clone());
    run("engine determinism", &mut || determinism(&corpus));
    let coarse = reference_model(4);
    run("latching", &mut || latching(&coarse));
    run("cadence", &mut || cadence(&corpus));
    run("closed-loop speed-up", &mut || speed_up(&full));
    run("performance", &mut || performance(&corpus));

    let failed = results.iter().filter(|r| r.1.is_err()).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
