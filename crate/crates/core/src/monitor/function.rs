//! Function Monitor: the dynamic Safe Zone and the cross-path consistency
//! check of object lists inside it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::geometry::{Point2, Polygon};
use crate::scene::{DetectedObject, EgoState, Extent, ObjectClass, ObjectList, SourceId};

/// Maximum spacing of centerline samples along the zone arc (m).
pub const ARC_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafeZoneParams {
    /// Braking deceleration (m/s²).
    pub a_max: f64,
    /// Reaction time (s).
    pub t_react: f64,
    pub lateral_margin: f64,
    pub standstill_margin: f64,
    /// Relative growth of the focus zone over the clear zone.
    pub focus_extension: f64,
}

impl Default for SafeZoneParams {
    fn default() -> Self {
        SafeZoneParams {
            a_max: 5.0,
            t_react: 0.5,
            lateral_margin: 0.5,
            standstill_margin: 0.3,
            focus_extension: 0.3,
        }
    }
}

impl SafeZoneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.a_max, self.t_react, self.lateral_margin, self.standstill_margin];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.focus_extension >= 0.0) {
            return Err(CageError::invalid(
                "safe zone params",
                "a_max, t_react and margins must be > 0, focus_extension >= 0",
            ));
        }
        Ok(())
    }
}

/// Ego-frame zones; the clear zone always lies inside the focus zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeZone {
    pub clear_zone: Polygon,
    pub focus_zone: Polygon,
}

/// Reaction distance plus braking distance.
pub fn stopping_distance(speed: f64, params: &SafeZoneParams) -> f64 {
    speed * params.t_react + speed * speed / (2.0 * params.a_max)
}

pub fn compute_safe_zone(ego: &EgoState, params: &SafeZoneParams) -> SafeZone {
    let d = stopping_distance(ego.speed, params);
    let half = ego.width / 2.0;
    let clear = swept_zone(ego, d + params.standstill_margin, half + params.lateral_margin);
    let grow = 1.0 + params.focus_extension;
    let focus = swept_zone(
        ego,
        d * grow + params.standstill_margin,
        half + params.lateral_margin * grow,
    );
    SafeZone {
        clear_zone: clear,
        focus_zone: focus,
    }
}

/// Vehicle body plus the corridor swept ahead of the front bumper along the
/// constant-curvature path of the current steering angle, up to half a turn.
///
/// The path is sampled on a fixed arc-length grid (every `ARC_STEP` from the
/// bumper) and the end is interpolated along the last chord, so a shorter zone
/// built with the same curvature and width is exactly nested in a longer one.
fn swept_zone(ego: &EgoState, length: f64, half_width: f64) -> Polygon {
    let curvature = ego.steering_angle.tan() / ego.wheelbase;
    // At most a half turn; a longer corridor folds back onto itself.
    let length = if curvature.abs() < 1e-12 {
        length
    } else {
        length.min(std::f64::consts::PI / curvature.abs())
    };
    let front = ego.front_x();
    let sample = |s: f64| -> (Point2, Point2) {
        if curvature.abs() < 1e-12 {
            (Point2::new(front + s, 0.0), Point2::new(0.0, 1.0))
        } else {
            let a = curvature * s;
            (
                Point2::new(front + a.sin() / curvature, (1.0 - a.cos()) / curvature),
                Point2::new(-a.sin(), a.cos()),
            )
        }
    };
    let full_steps = (length / ARC_STEP).floor() as usize;
    let mut right = Vec::with_capacity(full_steps + 2);
    let mut left = Vec::with_capacity(full_steps + 2);
    for k in 0..=full_steps {
        let (c, n) = sample(k as f64 * ARC_STEP);
        right.push(c - n * half_width);
        left.push(c + n * half_width);
    }
    let rest = length - full_steps as f64 * ARC_STEP;
    if rest > 1e-12 {
        let (c, n) = sample((full_steps + 1) as f64 * ARC_STEP);
        let f = rest / ARC_STEP;
        let (r_last, l_last) = (right[full_steps], left[full_steps]);
        right.push(r_last.lerp(c - n * half_width, f));
        left.push(l_last.lerp(c + n * half_width, f));
    }
    let rear = -ego.rear_overhang();
    let mut vertices = Vec::with_capacity(2 * right.len() + 2);
    vertices.push(Point2::new(rear, -half_width));
    vertices.extend(right);
    vertices.extend(left.into_iter().rev());
    vertices.push(Point2::new(rear, half_width));
    Polygon::new(vertices)
}

/// Consistency tolerances for the validator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HaraThresholds {
    pub max_center_delta: f64,
    pub max_extent_delta: f64,
    /// Pairs of distinct classes treated as agreeing. Symmetric; every class
    /// is compatible with itself.
    pub class_compatibility: Vec<(ObjectClass, ObjectClass)>,
    pub gating_distance: f64,
    /// Fixed confirmation count; when absent a strict majority of the active
    /// sources is required.
    pub min_agreeing_sources: Option<usize>,
}

impl Default for HaraThresholds {
    fn default() -> Self {
        HaraThresholds {
            max_center_delta: 0.75,
            max_extent_delta: 1.0,
            class_compatibility: vec![(ObjectClass::Vehicle, ObjectClass::Truck)],
            gating_distance: 2.0,
            min_agreeing_sources: None,
        }
    }
}

impl HaraThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_center_delta > 0.0 && self.max_extent_delta > 0.0 && self.gating_distance > 0.0) {
            return Err(CageError::invalid("HARA thresholds", "all distances must be > 0"));
        }
        if self.min_agreeing_sources == Some(0) {
            return Err(CageError::invalid(
                "HARA thresholds",
                "min_agreeing_sources must be >= 1",
            ));
        }
        Ok(())
    }

    pub fn compatible(&self, a: ObjectClass, b: ObjectClass) -> bool {
        a == b
            || self
                .class_compatibility
                .iter()
                .any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    /// Confirmations needed when `active` sources report.
    pub fn min_agreeing(&self, active: usize) -> usize {
        required_confirmations(self.min_agreeing_sources, active)
    }
}

/// A configured count, or a strict majority of `active`.
pub fn required_confirmations(configured: Option<usize>, active: usize) -> usize {
    configured.unwrap_or(active / 2 + 1)
}

/// Reference to object `index` of the list from `source`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchMember {
    pub source: SourceId,
    pub index: usize,
}

/// Cross-source association: every object appears in exactly one group,
/// and no group holds two objects from the same source.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    pub groups: Vec<Vec<MatchMember>>,
}

impl MatchSet {
    pub fn total_distance(&self, lists: &[ObjectList]) -> f64 {
        let get = |m: &MatchMember| {
            lists
                .iter()
                .find(|l| l.source == m.source)
                .map(|l| l.objects[m.index].center)
                .expect("member refers to a listed source")
        };
        self.groups
            .iter()
            .map(|g| {
                let mut acc = 0.0;
                for i in 0..g.len() {
                    for j in i + 1..g.len() {
                        acc += get(&g[i]).distance(get(&g[j]));
                    }
                }
                acc
            })
            .sum()
    }
}

struct Entry<'a> {
    source: &'a SourceId,
    index: usize,
    object: &'a DetectedObject,
}

fn canonical_entries(lists: &[ObjectList]) -> Vec<Entry<'_>> {
    let mut order: Vec<&ObjectList> = lists.iter().collect();
    order.sort_by(|a, b| a.source.cmp(&b.source));
    let mut entries = Vec::new();
    for list in order {
        let mut idx: Vec<usize> = (0..list.objects.len()).collect();
        idx.sort_by(|&a, &b| {
            let (pa, pb) = (list.objects[a].center, list.objects[b].center);
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.cmp(&b))
        });
        entries.extend(idx.into_iter().map(|i| Entry {
            source: &list.source,
            index: i,
            object: &list.objects[i],
        }));
    }
    entries
}

/// Greedy nearest-first association within the gating distance.
///
/// Candidate pairs from different sources are taken in ascending centre
/// distance; a pair joins two groups only if the groups share no source and
/// every class across them is compatible.
pub fn match_across_sources(lists: &[ObjectList], thresholds: &HaraThresholds) -> MatchSet {
    let entries = canonical_entries(lists);
    let n = entries.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if entries[i].source == entries[j].source {
                continue;
            }
            let d = entries[i].object.center.distance(entries[j].object.center);
            if d <= thresholds.gating_distance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut group_of: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for (_, i, j) in pairs {
        let (gi, gj) = (group_of[i], group_of[j]);
        if gi == gj {
            continue;
        }
        let shares_source = members[gi]
            .iter()
            .any(|&a| members[gj].iter().any(|&b| entries[a].source == entries[b].source));
        if shares_source {
            continue;
        }
        let all_compatible = members[gi].iter().all(|&a| {
            members[gj]
                .iter()
                .all(|&b| thresholds.compatible(entries[a].object.object_class, entries[b].object.object_class))
        });
        if !all_compatible {
            continue;
        }
        let (keep, absorb) = if gi < gj { (gi, gj) } else { (gj, gi) };
        let moved = std::mem::take(&mut members[absorb]);
        for &m in &moved {
            group_of[m] = keep;
        }
        members[keep].extend(moved);
    }

    let groups = members
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let mut out: Vec<MatchMember> = g
                .into_iter()
                .map(|e| MatchMember {
                    source: entries[e].source.clone(),
                    index: entries[e].index,
                })
                .collect();
            out.sort();
            out
        })
        .collect();
    MatchSet { groups }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMember {
    pub source: SourceId,
    pub object_class: ObjectClass,
    pub center: Point2,
    pub extent: Extent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    CenterDelta { a: SourceId, b: SourceId, delta: f64 },
    ExtentDelta { a: SourceId, b: SourceId, delta: f64 },
    ClassMismatch { a: SourceId, b: SourceId },
    Unconfirmed { confirmations: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEvidence {
    pub members: Vec<EvidenceMember>,
    pub max_center_delta: f64,
    pub max_extent_delta: f64,
    pub violations: Vec<Violation>,
    pub implicated: BTreeSet<SourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmVerdict {
    pub tick: u64,
    pub flag: bool,
    pub implicated_sources: BTreeSet<SourceId>,
    pub per_object_evidence: Vec<GroupEvidence>,
    pub zone_used: SafeZone,
}

/// Keeps the objects whose box touches the focus zone.
pub fn filter_to_zone(lists: &[ObjectList], zone: &SafeZone) -> Vec<ObjectList> {
    lists
        .iter()
        .map(|l| ObjectList {
            tick: l.tick,
            source: l.source.clone(),
            objects: l
                .objects
                .iter()
                .filter(|o| zone.focus_zone.intersects(&o.outline()))
                .cloned()
                .collect(),
        })
        .collect()
}

/// Cross-validates the object lists of the active AI paths inside the focus
/// zone. Flags when a matched group disagrees beyond tolerance or when an
/// in-zone object lacks enough independent confirmations.
pub fn validate(lists: &[ObjectList], zone: &SafeZone, thresholds: &HaraThresholds, tick: u64) -> FmVerdict {
    let in_zone = filter_to_zone(lists, zone);
    let all_sources: BTreeSet<&SourceId> = in_zone.iter().map(|l| &l.source).collect();
    let required = thresholds.min_agreeing(all_sources.len());
    let matches = match_across_sources(&in_zone, thresholds);
    let object = |m: &MatchMember| -> &DetectedObject {
        let list = in_zone.iter().find(|l| l.source == m.source).expect("member source");
        &list.objects[m.index]
    };

    let mut evidence = Vec::new();
    let mut implicated_all = BTreeSet::new();
    for group in &matches.groups {
        let objs: Vec<&DetectedObject> = group.iter().map(object).collect();
        let mut violations = Vec::new();
        let mut violation_count: BTreeMap<&SourceId, usize> = BTreeMap::new();
        let (mut max_c, mut max_e) = (0.0f64, 0.0f64);
        for i in 0..objs.len() {
            for j in i + 1..objs.len() {
                let (a, b) = (objs[i], objs[j]);
                let dc = a.center.distance(b.center);
                let de = (a.extent.length - b.extent.length)
                    .abs()
                    .max((a.extent.width - b.extent.width).abs());
                max_c = max_c.max(dc);
                max_e = max_e.max(de);
                let mut bad = false;
                if dc > thresholds.max_center_delta {
                    violations.push(Violation::CenterDelta {
                        a: a.source.clone(),
                        b: b.source.clone(),
                        delta: dc,
                    });
                    bad = true;
                }
                if de > thresholds.max_extent_delta {
                    violations.push(Violation::ExtentDelta {
                        a: a.source.clone(),
                        b: b.source.clone(),
                        delta: de,
                    });
                    bad = true;
                }
                if !thresholds.compatible(a.object_class, b.object_class) {
                    violations.push(Violation::ClassMismatch {
                        a: a.source.clone(),
                        b: b.source.clone(),
                    });
                    bad = true;
                }
                if bad {
                    *violation_count.entry(&a.source).or_default() += 1;
                    *violation_count.entry(&b.source).or_default() += 1;
                }
            }
        }

        let mut implicated = BTreeSet::new();
        // A member is on the minority side if it disagrees with more than
        // half of the other members.
        let others = objs.len().saturating_sub(1);
        for (src, count) in &violation_count {
            if 2 * count > others {
                implicated.insert((*src).clone());
            }
        }

        let reporters: BTreeSet<&SourceId> = group.iter().map(|m| &m.source).collect();
        if reporters.len() < required {
            violations.push(Violation::Unconfirmed {
                confirmations: reporters.len(),
                required,
            });
            let silent: BTreeSet<&SourceId> = all_sources.difference(&reporters).copied().collect();
            let side: Vec<&SourceId> = match reporters.len().cmp(&silent.len()) {
                std::cmp::Ordering::Less => reporters.iter().copied().collect(),
                std::cmp::Ordering::Equal => reporters.union(&silent).copied().collect(),
                std::cmp::Ordering::Greater => silent.iter().copied().collect(),
            };
            implicated.extend(side.into_iter().cloned());
        }

        if !violations.is_empty() {
            implicated_all.extend(implicated.iter().cloned());
            evidence.push(GroupEvidence {
                members: objs
                    .iter()
                    .map(|o| EvidenceMember {
                        source: o.source.clone(),
                        object_class: o.object_class,
                        center: o.center,
                        extent: o.extent,
                    })
                    .collect(),
                max_center_delta: max_c,
                max_extent_delta: max_e,
                violations,
                implicated,
            });
        }
    }

    FmVerdict {
        tick,
        flag: !evidence.is_empty(),
        implicated_sources: implicated_all,
        per_object_evidence: evidence,
        zone_used: zone.clone(),
    }
}
