//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Scenario criteria drive the `cage` binary; property criteria call
//! the library against brute-force oracles.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use cage_core::command::{CommandKind, OperatorCommand};
use cage_core::fallback::{cluster, ClusterMethod, ClusterParams};
use cage_core::geometry::{min_area_rect, Point2};
use cage_core::monitor::anomaly::{train, AmVerdict, Autoencoder, TrainParams};
use cage_core::monitor::function::{compute_safe_zone, FmVerdict, HaraThresholds, SafeZoneParams};
use cage_core::pipeline::react;
use cage_core::raster::SceneRaster;
use cage_core::reactor::{ModeState, ReactorConfig, SystemMode};
use cage_core::scene::{DetectedObject, EgoState, Extent, ObjectClass, ObjectList, SourceId, DEFAULT_MAX_STEERING};
use cage_core::sim::runner::RunLog;
use cage_core::sim::scenario::Scenario;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

/// Runs the `cage` binary; returns stdout on exit code 0.
fn cage(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cage"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .map_err(|e| format!("cannot start cage: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "cage exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn run_json(scenario: &Path, out: &Path, extra: &[&str]) -> Result<Value, String> {
    let mut args: Vec<&dyn AsRef<std::ffi::OsStr>> = vec![&"run", &"--scenario", &scenario, &"--out", &out];
    for e in extra {
        args.push(e);
    }
    let text = cage(&args)?;
    serde_json::from_str(&text).map_err(|e| format!("summary is not JSON: {e}"))
}

fn read_log(dir: &Path) -> Result<RunLog, String> {
    RunLog::read(&dir.join("runlog.jsonl")).map_err(|e| e.to_string())
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

// 1. Poster scenario.
fn poster() -> Outcome {
    let path = fixture("poster.json");
    let s = Scenario::load(&path, None).map_err(|e| e.to_string())?;
    let fm = s.function_monitor.safe_zone;
    let zone = oracles::StraightZone {
        wheelbase: s.ego.wheelbase,
        length: s.ego.length,
        width: s.ego.width,
        a_max: fm.a_max,
        t_react: fm.t_react,
        lateral_margin: fm.lateral_margin,
        standstill_margin: fm.standstill_margin,
        focus_extension: fm.focus_extension,
    };
    let poster = s.objects[0].truth.footprint.vertices().to_vec();
    let v = s.ego.speed;
    let expected = (0..s.n_ticks())
        .find(|&k| {
            let origin = Point2::new(v * s.dt * k as f64, 0.0);
            let local: Vec<Point2> = poster.iter().map(|&p| oracles::to_local(p, origin, 0.0)).collect();
            oracles::convex_intersect(&zone.focus_rect(v), &local)
        })
        .ok_or("poster never reaches the focus zone")?;

    let dir = tempdir();
    let t0 = Instant::now();
    let summary = run_json(&path, dir.path(), &[])?;
    let elapsed = t0.elapsed().as_secs_f64();
    let first = summary["first_fm_flag"].as_u64();
    ensure!(
        first == Some(expected),
        "first fm flag {first:?}, oracle tick {expected}"
    );
    let log = read_log(dir.path())?;
    let state = log.ticks[expected as usize].mode_out().state;
    ensure!(state == ModeState::MinimalRisk, "mode after flag {state:?}");
    let budget = (v / (fm.a_max * s.dt)).ceil() as u64;
    let stopped = log
        .ticks
        .iter()
        .find(|t| t.tick > expected && t.truth.ego.speed == 0.0)
        .map(|t| t.tick)
        .ok_or("ego never stops")?;
    ensure!(
        stopped - expected <= budget,
        "stopped after {} ticks, budget {budget}",
        stopped - expected
    );
    ensure!(elapsed < 5.0, "runtime {elapsed:.2} s");
    Ok(format!(
        "flag at tick {expected} (oracle {expected}), MinimalRisk, stopped after {} ≤ {budget} ticks, {elapsed:.2} s",
        stopped - expected
    ))
}

// 2. Two-phase lying pedestrian.
fn two_phase() -> Outcome {
    let dir = tempdir();
    let d = dir.path();
    let kb = d.join("kb");
    run_json(&fixture("standing_pedestrian.json"), &d.join("standing"), &[])?;
    cage(&[&"train", &"--kb", &kb, &"--ingest", &d.join("standing/runlog.jsonl")])?;

    let lying = fixture("lying_pedestrian.json");
    let kb_arg = kb.to_str().ok_or("non-UTF-8 temp path")?;
    let p1 = run_json(&lying, &d.join("phase1"), &["--kb", kb_arg])?;
    let first = p1["first_am_flag"].as_u64().ok_or("phase 1 did not flag")?;
    ensure!(
        p1["incidents"].as_u64().unwrap_or(0) >= 1,
        "phase 1 recorded no incident"
    );
    ensure!(
        p1["final_mode"] == "fallback_deterministic",
        "phase 1 ended in {}",
        p1["final_mode"]
    );

    cage(&[&"train", &"--kb", &kb, &"--ingest", &d.join("phase1/incidents")])?;
    run_json(&lying, &d.join("phase2"), &["--kb", kb_arg])?;
    let flag = |dir: &str| -> Result<bool, String> {
        let log = read_log(&d.join(dir))?;
        let am = log.ticks[first as usize].am.as_ref().ok_or("no anomaly verdict")?;
        Ok(am.flag)
    };
    let pair = (flag("phase1")?, flag("phase2")?);
    ensure!(pair == (true, false), "flag pair at tick {first}: {pair:?}");
    Ok(format!(
        "flag pair at tick {first}: (true, false); phase 1 reached FallbackDeterministic"
    ))
}

// 3. Three-source reconfiguration.
fn reconfiguration() -> Outcome {
    let dir = tempdir();
    let summary = run_json(&fixture("three_source_fault.json"), dir.path(), &[])?;
    ensure!(
        summary["final_mode"] == "degraded_primary",
        "final mode {}",
        summary["final_mode"]
    );
    ensure!(
        summary["final_excluded"] == serde_json::json!(["cam_wide"]),
        "excluded {}",
        summary["final_excluded"]
    );
    let log = read_log(dir.path())?;
    let wide = SourceId::from("cam_wide");
    let from = log
        .ticks
        .iter()
        .find(|t| t.mode_out().excluded_sources.contains(&wide))
        .map(|t| t.tick)
        .ok_or("cam_wide never excluded")?;
    let mut leaked = 0;
    let mut fused = 0;
    for t in log.ticks.iter().filter(|t| t.tick >= from) {
        let list = t.fused.as_ref().ok_or("tick without fused list")?;
        fused += list.objects.len();
        leaked += list.objects.iter().filter(|o| o.contributors.contains(&wide)).count();
    }
    ensure!(leaked == 0, "{leaked} fused detections from cam_wide after exclusion");
    Ok(format!(
        "DegradedPrimary excluding cam_wide from tick {from}; 0 of {fused} later fused detections from it"
    ))
}

// 4. Autoencoder gradients and training.
fn toy_rasters() -> Vec<SceneRaster> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    (0..12)
        .map(|_| SceneRaster {
            size: 3,
            cells: (0..9).map(|_| rng.random_range(0.0..1.0)).collect(),
        })
        .collect()
}

fn gradients() -> Outcome {
    const EPS: f64 = 1e-5;
    let toy = toy_rasters();
    let data: Vec<&[f64]> = toy.iter().map(|r| r.cells.as_slice()).collect();
    let ae = Autoencoder::init(9, 4, &mut ChaCha8Rng::seed_from_u64(1)).map_err(|e| e.to_string())?;
    let g = ae.gradient(&data);
    type Field = fn(&mut Autoencoder) -> &mut Vec<f64>;
    let fields: [(Field, &Vec<f64>); 4] = [
        (|a| &mut a.w1, &g.w1),
        (|a| &mut a.b1, &g.b1),
        (|a| &mut a.w2, &g.w2),
        (|a| &mut a.b2, &g.b2),
    ];
    let (mut worst, mut count) = (0.0f64, 0);
    for (field, analytic) in fields {
        for (i, &an) in analytic.iter().enumerate() {
            let (mut p, mut m) = (ae.clone(), ae.clone());
            field(&mut p)[i] += EPS;
            field(&mut m)[i] -= EPS;
            let num = (p.mean_loss(&data) - m.mean_loss(&data)) / (2.0 * EPS);
            let scale = an.abs().max(num.abs());
            worst = worst.max(if scale < 1e-8 {
                (an - num).abs()
            } else {
                (an - num).abs() / scale
            });
            count += 1;
        }
    }
    ensure!(worst < 1e-4, "worst relative gradient error {worst:e}");

    let s = Scenario::load(&fixture("standing_pedestrian.json"), None).map_err(|e| e.to_string())?;
    let run = cage_core::pipeline::run_cage(&s, Default::default(), &mut cage_core::sim::runner::NoCommands)
        .map_err(|e| e.to_string())?;
    let rasters: Vec<SceneRaster> = run.log.ticks.iter().map(|t| t.raster.clone()).collect();
    let curve = train(&rasters, &TrainParams::default())
        .map_err(|e| e.to_string())?
        .loss_curve;
    let head = &curve[..=10];
    ensure!(
        head.windows(2).all(|w| w[1] < w[0]),
        "loss not strictly decreasing: {head:?}"
    );
    Ok(format!(
        "{count} parameters, worst relative error {worst:.1e}; loss {:.3e} -> {:.3e} strictly decreasing over 10 epochs",
        head[0], head[10]
    ))
}

// 5. Clustering and rectangle fitting.
fn clustering() -> Outcome {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for _ in 0..rng.random_range(1..6) {
            let c = Point2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let r = rng.random_range(0.2..2.0);
            for _ in 0..rng.random_range(3..30) {
                pts.push(Point2::new(
                    c.x + rng.random_range(-r..r),
                    c.y + rng.random_range(-r..r),
                ));
            }
        }
        for _ in 0..rng.random_range(0..15) {
            pts.push(Point2::new(
                rng.random_range(-25.0..25.0),
                rng.random_range(-25.0..25.0),
            ));
        }
        let eps = rng.random_range(0.2..1.5);
        let expected = oracles::eps_components(&pts, eps);
        for method in [ClusterMethod::Dbscan, ClusterMethod::Euclidean] {
            let got = cluster(
                &pts,
                &ClusterParams {
                    eps,
                    min_pts: 1,
                    method,
                },
            );
            ensure!(
                got == expected,
                "cloud {seed}: {method:?} differs from the components oracle"
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let cuts: Vec<(u32, f64)> = (0..rng.random_range(3..10))
            .map(|_| (rng.random_range(0..3600), rng.random_range(1.0..6.0)))
            .collect();
        let hull = oracles::quantized_hull(&cuts);
        let area = min_area_rect(&hull).ok_or("empty hull")?.area();
        let diff = (area - oracles::min_rect_area_sweep(&hull)).abs();
        ensure!(diff <= 1e-6, "hull {case}: area differs from the sweep by {diff:e}");
        worst = worst.max(diff);
    }
    Ok(format!(
        "200 clouds match exactly (both methods); 50 hulls within {worst:.1e} of the 0.1° sweep"
    ))
}

// 6. Safe-zone properties.
fn safe_zone() -> Outcome {
    const TOL: f64 = 1e-9;
    let mirror = |v: &[Point2]| -> Vec<Point2> { v.iter().map(|p| Point2::new(p.x, -p.y)).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = Vec::new();
    for case in 0..1000 {
        let wheelbase = rng.random_range(2.3..3.3);
        let ego = EgoState {
            position: Point2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)),
            heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            speed: rng.random_range(0.0..30.0),
            steering_angle: rng.random_range(-DEFAULT_MAX_STEERING..DEFAULT_MAX_STEERING),
            wheelbase,
            width: rng.random_range(1.5..2.3),
            length: wheelbase + rng.random_range(0.6..2.4),
        };
        let params = SafeZoneParams::default();
        let z = compute_safe_zone(&ego, &params);
        let faster = compute_safe_zone(
            &EgoState {
                speed: ego.speed + rng.random_range(0.0..5.0),
                ..ego
            },
            &params,
        );
        let straight = compute_safe_zone(
            &EgoState {
                steering_angle: 0.0,
                ..ego
            },
            &params,
        );
        let (c, f) = (&z.clear_zone.vertices, &z.focus_zone.vertices);
        if !oracles::polygon_within(c, &faster.clear_zone.vertices, TOL)
            || !oracles::polygon_within(f, &faster.focus_zone.vertices, TOL)
        {
            violations.push(format!("{case}: not monotonic in speed"));
        }
        if !oracles::polygon_within(c, f, TOL) {
            violations.push(format!("{case}: clear ⊄ focus"));
        }
        for poly in [&straight.clear_zone.vertices, &straight.focus_zone.vertices] {
            if !oracles::same_point_set(poly, &mirror(poly), TOL) {
                violations.push(format!("{case}: straight zone not symmetric"));
            }
        }
    }
    ensure!(
        violations.is_empty(),
        "{} violations, first {}",
        violations.len(),
        violations[0]
    );
    Ok("1000 ego states: monotonic in speed, clear ⊆ focus, straight symmetry; 0 violations".into())
}

// 8. Reactor fuzzing.
fn reactor_fuzz() -> Outcome {
    const SOURCES: [&str; 3] = ["cam_front", "cam_wide", "lidar"];
    const STATES: [ModeState; 5] = [
        ModeState::Nominal,
        ModeState::DegradedPrimary,
        ModeState::FallbackDeterministic,
        ModeState::MinimalRisk,
        ModeState::RemoteOperated,
    ];
    let zone = compute_safe_zone(&EgoState::default(), &SafeZoneParams::default());
    let (thresholds, cfg) = (HaraThresholds::default(), ReactorConfig::default());
    let (mut steps, mut exits) = (0usize, 0usize);
    for seq in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seq);
        let mut mode = SystemMode::nominal(SOURCES.iter().map(|s| SourceId::from(*s)));
        let mut handed_over = false;
        for tick in 0..rng.random_range(1..40u64) {
            steps += 1;
            let flag = rng.random_bool(0.15);
            let fm = FmVerdict {
                tick,
                flag,
                implicated_sources: SOURCES
                    .iter()
                    .filter(|_| flag && rng.random_bool(0.4))
                    .map(|s| SourceId::from(*s))
                    .collect(),
                per_object_evidence: Vec::new(),
                zone_used: zone.clone(),
            };
            let am = rng.random_bool(0.3).then(|| {
                let flag = rng.random_bool(0.1);
                AmVerdict {
                    tick,
                    score: f64::from(u8::from(flag)),
                    flag,
                    model_version: 1,
                }
            });
            let commands: Vec<OperatorCommand> = (0..rng.random_range(0..3))
                .map(|i| {
                    let kind = match rng.random_range(0..6) {
                        0 => CommandKind::EmergencyStop,
                        1 | 2 => CommandKind::AckHandover,
                        3 => CommandKind::Resume,
                        4 => CommandKind::SetMode {
                            mode: *STATES.choose(&mut rng).unwrap(),
                        },
                        _ => CommandKind::RestoreSource {
                            source: SourceId::from(*SOURCES.choose(&mut rng).unwrap()),
                        },
                    };
                    OperatorCommand::new(format!("{seq}-{tick}-{i}"), kind)
                })
                .collect();
            let lists: Vec<ObjectList> = SOURCES
                .iter()
                .map(|s| ObjectList {
                    tick,
                    source: SourceId::from(*s),
                    objects: (0..rng.random_range(0..3))
                        .map(|_| DetectedObject {
                            object_class: *[ObjectClass::Vehicle, ObjectClass::Pedestrian]
                                .choose(&mut rng)
                                .unwrap(),
                            center: Point2::new(rng.random_range(3.0..20.0), rng.random_range(-3.0..3.0)),
                            extent: Extent::new(rng.random_range(0.5..5.0), rng.random_range(0.5..2.5)),
                            heading: 0.0,
                            confidence: rng.random_range(0.1..1.0),
                            source: SourceId::from(*s),
                        })
                        .collect(),
                })
                .collect();
            let r = react(&mode, &fm, am.as_ref(), &commands, &lists, &cfg, &thresholds);
            let out = &r.mode;
            let at = format!("sequence {seq} tick {tick}");

            let mut in_mr = mode.state == ModeState::MinimalRisk;
            let mut legal_exit = false;
            for (cmd, ack) in commands.iter().zip(&r.actions.command_acks) {
                if !ack.is_accepted() {
                    continue;
                }
                match &cmd.kind {
                    CommandKind::EmergencyStop
                    | CommandKind::SetMode {
                        mode: ModeState::MinimalRisk,
                    } => {
                        in_mr = true;
                        handed_over = false;
                    }
                    CommandKind::AckHandover => handed_over = true,
                    CommandKind::Resume => {
                        if in_mr {
                            ensure!(handed_over, "{at}: resume accepted without ack_handover");
                            legal_exit = true;
                            in_mr = false;
                        }
                        handed_over = false;
                    }
                    _ => {}
                }
            }
            if mode.state == ModeState::MinimalRisk && out.state != ModeState::MinimalRisk {
                exits += 1;
                ensure!(
                    legal_exit,
                    "{at}: left MinimalRisk for {:?} without ack_handover+resume",
                    out.state
                );
            }
            if out.state == ModeState::MinimalRisk && !in_mr {
                handed_over = false;
            }
            let overlap: BTreeSet<_> = out.active_sources.intersection(&out.excluded_sources).collect();
            ensure!(overlap.is_empty(), "{at}: active ∩ excluded = {overlap:?}");
            for o in &r.fused.objects {
                for c in &o.contributors {
                    ensure!(
                        !out.excluded_sources.contains(c),
                        "{at}: fused object from excluded {c}"
                    );
                }
            }
            mode = r.mode;
        }
    }
    ensure!(exits > 0, "no sequence ever left MinimalRisk; the fuzzer is vacuous");
    Ok(format!(
        "10000 sequences, {steps} steps, {exits} legal MinimalRisk exits; 0 violations"
    ))
}

// 7. Determinism and replay.
fn determinism() -> Outcome {
    let dir = tempdir();
    let d = dir.path();
    let kb = d.join("kb");
    run_json(&fixture("standing_pedestrian.json"), &d.join("kb-source"), &[])?;
    cage(&[&"train", &"--kb", &kb, &"--ingest", &d.join("kb-source/runlog.jsonl")])?;
    let kb_arg = kb.to_str().ok_or("non-UTF-8 temp path")?.to_string();

    let runs: [(&str, bool); 8] = [
        ("benign.json", false),
        ("poster.json", false),
        ("three_source_fault.json", false),
        ("all_sources_fault.json", false),
        ("standing_pedestrian.json", false),
        ("lying_pedestrian.json", false),
        ("standing_pedestrian.json", true),
        ("lying_pedestrian.json", true),
    ];
    let (mut incidents, mut ticks) = (0, 0);
    for (i, (name, with_model)) in runs.iter().enumerate() {
        let extra: Vec<&str> = if *with_model { vec!["--kb", &kb_arg] } else { vec![] };
        let (a, b) = (d.join(format!("{i}a")), d.join(format!("{i}b")));
        run_json(&fixture(name), &a, &extra)?;
        run_json(&fixture(name), &b, &extra)?;
        let bytes = |p: &Path| std::fs::read(p.join("runlog.jsonl")).map_err(|e| e.to_string());
        ensure!(bytes(&a)? == bytes(&b)?, "{name}: run logs differ");
        let inc_a = a.join("incidents");
        if inc_a.is_dir() {
            let files = |root: &Path| -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
                let mut v = Vec::new();
                for e in walk(root)? {
                    let rel = e.strip_prefix(root).map_err(|e| e.to_string())?.to_path_buf();
                    v.push((rel, std::fs::read(&e).map_err(|e| e.to_string())?));
                }
                Ok(v)
            };
            ensure!(
                files(&inc_a)? == files(&b.join("incidents"))?,
                "{name}: incident files differ"
            );
            let mut args: Vec<&dyn AsRef<std::ffi::OsStr>> = vec![&"replay", &inc_a];
            if *with_model {
                args.extend([&"--kb" as &dyn AsRef<std::ffi::OsStr>, &kb]);
            }
            let report = cage(&args)?;
            for line in report.lines() {
                let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
                ensure!(v["exact"] == true, "{name}: replay mismatch {}", v["mismatches"]);
                incidents += 1;
                ticks += v["ticks"].as_u64().unwrap_or(0);
            }
        }
    }
    ensure!(incidents > 0, "no incidents were recorded");
    Ok(format!(
        "8 runs over 6 fixtures byte-identical; {incidents} incidents ({ticks} ticks) replayed exactly"
    ))
}

fn walk(root: &Path) -> Result<Vec<PathBuf>, String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn main() {
    type Criterion = (u8, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (1, "poster scenario", poster),
        (2, "two-phase lying pedestrian", two_phase),
        (3, "three-source reconfiguration", reconfiguration),
        (4, "autoencoder gradient check", gradients),
        (5, "clustering and rectangle oracles", clustering),
        (6, "safe-zone properties", safe_zone),
        (7, "determinism and replay", determinism),
        (8, "reactor safety fuzzing", reactor_fuzz),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n}: PASS  {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL  {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
