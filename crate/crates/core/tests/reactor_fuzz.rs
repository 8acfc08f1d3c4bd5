use std::collections::BTreeSet;

use cage_core::command::{CommandKind, OperatorCommand};
use cage_core::geometry::Point2;
use cage_core::monitor::anomaly::AmVerdict;
use cage_core::monitor::function::{compute_safe_zone, FmVerdict, HaraThresholds, SafeZone, SafeZoneParams};
use cage_core::pipeline::react;
use cage_core::reactor::{ModeState, ReactorConfig, SystemMode};
use cage_core::scene::{DetectedObject, EgoState, Extent, ObjectClass, ObjectList, SourceId};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOURCES: [&str; 3] = ["cam_front", "cam_wide", "lidar"];
const STATES: [ModeState; 5] = [
    ModeState::Nominal,
    ModeState::DegradedPrimary,
    ModeState::FallbackDeterministic,
    ModeState::MinimalRisk,
    ModeState::RemoteOperated,
];

fn random_lists(rng: &mut impl Rng, tick: u64) -> Vec<ObjectList> {
    SOURCES
        .iter()
        .map(|s| ObjectList {
            tick,
            source: SourceId::from(*s),
            objects: (0..rng.random_range(0..3))
                .map(|_| DetectedObject {
                    object_class: *[ObjectClass::Vehicle, ObjectClass::Pedestrian, ObjectClass::Truck]
                        .choose(rng)
                        .unwrap(),
                    center: Point2::new(rng.random_range(3.0..20.0), rng.random_range(-3.0..3.0)),
                    extent: Extent::new(rng.random_range(0.5..5.0), rng.random_range(0.5..2.5)),
                    heading: 0.0,
                    confidence: rng.random_range(0.1..1.0),
                    source: SourceId::from(*s),
                })
                .collect(),
        })
        .collect()
}

fn random_command(rng: &mut impl Rng, id: String) -> OperatorCommand {
    let kind = match rng.random_range(0..6) {
        0 => CommandKind::EmergencyStop,
        1 | 2 => CommandKind::AckHandover,
        3 => CommandKind::Resume,
        4 => CommandKind::SetMode {
            mode: *STATES.choose(rng).unwrap(),
        },
        _ => CommandKind::RestoreSource {
            source: SourceId::from(*SOURCES.choose(rng).unwrap()),
        },
    };
    OperatorCommand::new(id, kind)
}

fn random_fm(rng: &mut impl Rng, tick: u64, zone: &SafeZone) -> FmVerdict {
    let flag = rng.random_bool(0.15);
    let implicated: BTreeSet<SourceId> = if flag {
        SOURCES
            .iter()
            .filter(|_| rng.random_bool(0.4))
            .map(|s| SourceId::from(*s))
            .collect()
    } else {
        BTreeSet::new()
    };
    FmVerdict {
        tick,
        flag,
        implicated_sources: implicated,
        per_object_evidence: Vec::new(),
        zone_used: zone.clone(),
    }
}

#[derive(Default)]
struct Coverage {
    steps: usize,
    minimal_risk_exits: usize,
    degraded_entries: usize,
    rejected_resumes_in_minimal_risk: usize,
}

#[test]
fn reactor_safety_over_10k_random_sequences() {
    let zone = compute_safe_zone(&EgoState::default(), &SafeZoneParams::default());
    let thresholds = HaraThresholds::default();
    let cfg = ReactorConfig::default();
    let mut violations: Vec<String> = Vec::new();
    let mut cov = Coverage::default();

    for seq in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seq);
        let mut mode = SystemMode::nominal(SOURCES.iter().map(|s| SourceId::from(*s)));
        // Oracle state: an ack_handover has been accepted since the latest
        // entry into MinimalRisk.
        let mut handed_over = false;
        let mut next_id = 0u64;
        for tick in 0..rng.random_range(1..40u64) {
            cov.steps += 1;
            let fm = random_fm(&mut rng, tick, &zone);
            let am = rng.random_bool(0.3).then(|| {
                let flag = rng.random_bool(0.1);
                AmVerdict {
                    tick,
                    score: if flag { 1.0 } else { 0.0 },
                    flag,
                    model_version: 1,
                }
            });
            let commands: Vec<OperatorCommand> = (0..rng.random_range(0..3))
                .map(|_| {
                    next_id += 1;
                    random_command(&mut rng, format!("c{next_id}"))
                })
                .collect();
            let lists = random_lists(&mut rng, tick);
            let r = react(&mode, &fm, am.as_ref(), &commands, &lists, &cfg, &thresholds);
            let out = &r.mode;
            let here = |what: &str| format!("seq {seq} tick {tick}: {what}");

            if r.actions.command_acks.len() != commands.len() {
                violations.push(here("one ack per command"));
            }
            let mut in_mr = mode.state == ModeState::MinimalRisk;
            let mut legal_exit = false;
            for (cmd, ack) in commands.iter().zip(&r.actions.command_acks) {
                if !ack.is_accepted() {
                    if in_mr && cmd.kind == CommandKind::Resume {
                        cov.rejected_resumes_in_minimal_risk += 1;
                    }
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
                            if !handed_over {
                                violations.push(here("resume accepted without ack_handover"));
                            }
                            legal_exit = true;
                            in_mr = false;
                        }
                        handed_over = false;
                    }
                    _ => {}
                }
            }
            if mode.state == ModeState::MinimalRisk && out.state != ModeState::MinimalRisk {
                cov.minimal_risk_exits += 1;
                if !legal_exit {
                    violations.push(here(&format!(
                        "left MinimalRisk for {:?} without ack_handover+resume",
                        out.state
                    )));
                }
            }
            if out.state == ModeState::MinimalRisk && !in_mr {
                handed_over = false;
            }
            if out.state == ModeState::DegradedPrimary && mode.state != ModeState::DegradedPrimary {
                cov.degraded_entries += 1;
            }

            if out.active_sources.intersection(&out.excluded_sources).next().is_some() {
                violations.push(here("active ∩ excluded ≠ ∅"));
            }
            if let Err(e) = out.check() {
                violations.push(here(&e));
            }
            for obj in &r.fused.objects {
                for c in &obj.contributors {
                    if out.excluded_sources.contains(c) || !out.active_sources.contains(c) {
                        violations.push(here(&format!("fused object from inactive or excluded source {c}")));
                    }
                }
            }
            mode = r.mode;
        }
    }
    assert!(
        violations.is_empty(),
        "{} violations, first: {:#?}",
        violations.len(),
        &violations[..violations.len().min(10)]
    );
    // The sequences actually exercise the transitions under test.
    assert!(
        cov.minimal_risk_exits > 100,
        "only {} MinimalRisk exits",
        cov.minimal_risk_exits
    );
    assert!(
        cov.degraded_entries > 100,
        "only {} DegradedPrimary entries",
        cov.degraded_entries
    );
    assert!(cov.rejected_resumes_in_minimal_risk > 100);
    assert!(cov.steps > 100_000);
}
