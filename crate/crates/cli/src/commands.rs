use std::path::{Path, PathBuf};
use std::sync::Arc;

use aaad_core::bundle::Model;
use aaad_core::dataset::{fit_bundle, read_forced_fixation, read_psychometric, FitOptions};
use aaad_core::engine::{aggregate_session, EngineConfig, SessionMetrics, TrialEngine, TrialReport};
use aaad_core::export::{encode_pgm16, MapHeader};
use aaad_core::surface::{clutter_proxy, ClutterMap, Luminance, CLUTTER_WINDOW};
use aaad_io::live::LiveOptions;
use aaad_io::service::ServiceConfig;
use aaad_io::synth::{simulate as run_simulation, Arm};
use aaad_io::{parse_log, split_trials, Speed};
use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use crate::output::{read_text, write_atomic, Classify, CmdResult};

fn load_model(path: &Path) -> CmdResult<Arc<Model>> {
    let text = read_text(path)?;
    let model = Model::load(&text).with_context(|| format!("bundle {}", path.display())).user()?;
    for (setting, why) in model.rejected() {
        eprintln!("aaad: warning: setting {setting} unusable: {why}");
    }
    Ok(Arc::new(model))
}

fn to_json<T: Serialize>(value: &T) -> CmdResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).internal()?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn fit(data: &Path, forced: &Path, out: &Path, bins: usize, sigma_floor: f64) -> CmdResult {
    let psy = std::fs::File::open(data).with_context(|| format!("cannot open {}", data.display())).user()?;
    let psy = read_psychometric(psy).with_context(|| format!("{}", data.display())).user()?;
    let ff = std::fs::File::open(forced).with_context(|| format!("cannot open {}", forced.display())).user()?;
    let ff = read_forced_fixation(ff).with_context(|| format!("{}", forced.display())).user()?;
    let opts = FitOptions { bins, sigma_floor, ..FitOptions::default() };
    let doc = fit_bundle(&psy, &ff, &opts).user()?;
    write_atomic(out, doc.to_text().as_bytes())?;
    println!("fitted {} settings from {} trials into {}", doc.settings.len(), psy.len(), out.display());
    Ok(())
}

fn load_clutter(image: &Path, model: &Model) -> CmdResult<ClutterMap> {
    let img = image::open(image).with_context(|| format!("cannot read image {}", image.display())).user()?;
    let luma = img.to_luma16();
    let lum = Luminance {
        width: luma.width(),
        height: luma.height(),
        values: luma.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
    };
    clutter_proxy(&lum, &model.geometry, CLUTTER_WINDOW).with_context(|| format!("image {}", image.display())).user()
}

pub fn surface(bundle: &Path, fixations: &Path, trial: Option<&str>, image: Option<&Path>, out: &Path, exploration: bool) -> CmdResult {
    let model = load_model(bundle)?;
    let clutter = image.map(|p| load_clutter(p, &model)).transpose()?;
    let records = parse_log(&read_text(fixations)?).with_context(|| format!("log {}", fixations.display())).user()?;
    let mut trials = split_trials(&records).user()?;
    let index = match trial {
        Some(id) => trials.iter().position(|t| t.config.trial_id == id).ok_or_else(|| anyhow!("no trial {id:?} in the log")).user()?,
        None if trials.is_empty() => return Err(anyhow!("log contains no trials")).user(),
        None => 0,
    };
    let t = trials.swap_remove(index);
    let mut engine = TrialEngine::new(model.clone(), t.config, EngineConfig::for_model(&model)).user()?;
    if let Some(c) = clutter {
        engine = engine.with_clutter(Arc::new(c)).user()?;
    }
    for input in t.inputs {
        engine.handle(input).user()?;
    }
    let (kind, values) = if exploration {
        ("exploration", engine.exploration_map().user()?.values().to_vec())
    } else {
        ("detectability", engine.composite_surface().user()?.values())
    };
    let (pgm, max) = encode_pgm16(&model.geometry, &values).internal()?;
    write_atomic(out, &pgm)?;
    let header = MapHeader { kind: kind.into(), geometry: model.geometry, value_scale: max };
    print!("{}", header.to_text());
    println!("fixations={}", engine.fixations().len());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplayReport {
    pub log: PathBuf,
    pub trials: Vec<TrialReport>,
    /// Trials cut short by the end of the log.
    pub incomplete: Vec<String>,
    /// Absent when no trial completed.
    pub metrics: Option<SessionMetrics>,
}

pub fn replay(bundle: &Path, log: &Path, speed: &str, out: &Path) -> CmdResult {
    let model = load_model(bundle)?;
    let speed: Speed = speed.parse().user()?;
    let records = parse_log(&read_text(log)?).with_context(|| format!("log {}", log.display())).user()?;
    let trials = aaad_io::replay(&model, &records, speed, EngineConfig::for_model(&model), None).user()?;
    let incomplete: Vec<String> = trials.iter().filter(|r| !r.complete).map(|r| r.trial_id.clone()).collect();
    for id in &incomplete {
        eprintln!("aaad: warning: trial {id} is incomplete");
    }
    let metrics = aggregate_session(&trials).ok();
    let n = trials.len();
    write_atomic(out, &to_json(&ReplayReport { log: log.to_path_buf(), trials, incomplete, metrics })?)?;
    println!("replayed {n} trials into {}", out.display());
    Ok(())
}

pub fn simulate(bundle: &Path, observers: &Path, trials: usize, seed: u64, out: &Path) -> CmdResult {
    let model = load_model(bundle)?;
    let arms: Vec<Arm> =
        serde_json::from_str(&read_text(observers)?).with_context(|| format!("observers {}", observers.display())).user()?;
    for arm in &arms {
        arm.params.validate().with_context(|| format!("arm {}", arm.name)).user()?;
    }
    let report = run_simulation(&model, &arms, trials, seed).user()?;
    write_atomic(out, &to_json(&report)?)?;
    for a in &report.arms {
        println!("{:<32} mean trial time {:.3} s  accuracy {:.3}", a.name, a.mean_trial_time_s, a.accuracy);
    }
    println!("mean-time ratio {} / {} = {:.3}", report.slowest_arm, report.fastest_arm, report.mean_time_ratio);
    Ok(())
}

pub fn serve(bundle: &Path, assets: Option<PathBuf>, listen: &str, log_dir: Option<PathBuf>) -> CmdResult {
    let model = load_model(bundle)?;
    if let Some(dir) = &assets {
        if !dir.is_dir() {
            return Err(anyhow!("assets directory {} does not exist", dir.display())).user();
        }
    }
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let cfg = ServiceConfig { live: LiveOptions::for_model(&model), model, assets, log_dir };
    let rt = tokio::runtime::Runtime::new().internal()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("cannot listen on {listen}")).user()?;
        let addr = listener.local_addr().internal()?;
        println!("serving ws://{addr}/live");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        aaad_io::serve(listener, cfg, shutdown).await.internal()
    })
}

pub fn report(input: &Path, out: Option<&Path>) -> CmdResult {
    let r: ReplayReport =
        serde_json::from_str(&read_text(input)?).with_context(|| format!("replay report {}", input.display())).user()?;
    let m = aggregate_session(&r.trials).user()?;
    if let Some(out) = out {
        return write_atomic(out, &to_json(&m)?);
    }
    let ms = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.0} ms"));
    println!("trials            {} complete, {} incomplete", m.n_trials, r.incomplete.len());
    println!("mean trial time   {:.3} s", m.mean_trial_time_s);
    for (name, t) in [("person", &m.person), ("weapon", &m.weapon)] {
        println!(
            "{name:<17} hit {:.3}  miss {:.3}  false alarm {:.3}  correct rejection {:.3}  accuracy {:.3}",
            t.hit_rate, t.miss_rate, t.false_alarm_rate, t.correct_rejection_rate, t.accuracy
        );
    }
    println!("offset vs general {}", ms(m.mean_general_offset_ms));
    println!("offset vs time    {}", ms(m.mean_time_offset_ms));
    println!("offset vs eye mvt {}", ms(m.mean_eye_movement_offset_ms));
    println!("offset vs detect  {}", ms(m.mean_detectability_offset_ms));
    Ok(())
}
