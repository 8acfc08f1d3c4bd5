//! Emulated AI perception paths and the fusion of voter-approved object lists.
//!
//! Each path sees the ground truth through its modality: a camera reports what
//! an object looks like (`visual_class`), a LiDAR model reports what its shape
//! says it is (`physical_class`). That split is what lets two healthy paths
//! disagree about a poster. Faults are injected through timed directives.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::geometry::{min_area_rect, Point2};
use crate::monitor::function::MatchSet;
use crate::scene::{DetectedObject, Extent, ObjectClass, ObjectList, SceneState, SourceId};
use crate::seed::derive_seed;

/// Smallest reported box side, so noisy extents stay strictly positive.
pub const MIN_EXTENT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Camera,
    Lidar,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub position_sigma: f64,
    pub extent_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub object_class: ObjectClass,
    /// Ego frame.
    pub center: Point2,
    pub extent: Extent,
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerceptionFault {
    Misclassify {
        from: ObjectClass,
        to: ObjectClass,
    },
    Drop {
        object_id: String,
    },
    Phantom(PhantomSpec),
    /// Repeat the last output for this many ticks.
    Freeze {
        ticks: u64,
    },
}

/// A fault active on `start <= t < end` (open-ended when `end` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedFault {
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
    pub fault: PerceptionFault,
}

impl TimedFault {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start && self.end.is_none_or(|e| t < e)
    }
}

fn default_confidence() -> f64 {
    0.9
}

fn default_fov() -> f64 {
    std::f64::consts::TAU
}

fn default_range() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionModelConfig {
    pub id: SourceId,
    pub modality: Modality,
    #[serde(default = "default_fov")]
    pub fov: f64,
    #[serde(default = "default_range")]
    pub max_range: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "default_confidence")]
    pub base_confidence: f64,
    #[serde(default)]
    pub error_process: Vec<TimedFault>,
}

impl PerceptionModelConfig {
    pub fn new(id: impl Into<SourceId>, modality: Modality) -> Self {
        PerceptionModelConfig {
            id: id.into(),
            modality,
            fov: default_fov(),
            max_range: default_range(),
            noise: NoiseModel::default(),
            base_confidence: default_confidence(),
            error_process: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let what = format!("perception model {}", self.id);
        if self.id.as_str() == SourceId::DETERMINISTIC || self.id.as_str() == SourceId::FUSED {
            return Err(CageError::invalid(what, "id is reserved"));
        }
        if !(self.max_range > 0.0) || !(self.fov > 0.0) {
            return Err(CageError::invalid(what, "max_range and fov must be > 0"));
        }
        if !(self.noise.position_sigma >= 0.0 && self.noise.extent_sigma >= 0.0) {
            return Err(CageError::invalid(what, "noise sigmas must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.base_confidence) {
            return Err(CageError::invalid(what, "base_confidence outside [0, 1]"));
        }
        Ok(())
    }
}

/// Emulates one perception path on one truth snapshot. `seed` is the
/// per-model, per-tick seed; each object draws from its own sub-stream so that
/// dropping one object leaves the others untouched.
///
/// `freeze` directives need history and are handled by [`PerceptionPath`].
pub fn perceive(model: &PerceptionModelConfig, truth: &SceneState, seed: u64) -> ObjectList {
    let t = truth.time;
    let active: Vec<&PerceptionFault> = model
        .error_process
        .iter()
        .filter(|f| f.active_at(t))
        .map(|f| &f.fault)
        .collect();
    let dropped: BTreeSet<&str> = active
        .iter()
        .filter_map(|f| match f {
            PerceptionFault::Drop { object_id } => Some(object_id.as_str()),
            _ => None,
        })
        .collect();

    let mut objects = Vec::new();
    for obj in &truth.objects {
        if dropped.contains(obj.id.as_str()) {
            continue;
        }
        let outline = obj.footprint_in_ego(&truth.ego);
        let center = outline.centroid();
        if !visible(model, center) {
            continue;
        }
        let mut class = match model.modality {
            Modality::Camera => obj.visual_class,
            Modality::Lidar => obj.physical_class.as_object_class(),
        };
        for f in &active {
            if let PerceptionFault::Misclassify { from, to } = f {
                if class == *from {
                    class = *to;
                }
            }
        }
        let rect = min_area_rect(outline.vertices()).expect("footprint has vertices");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &obj.id, 0));
        let offset = truncated_offset(&mut rng, model.noise.position_sigma);
        let dl = truncated_normal(&mut rng, model.noise.extent_sigma);
        let dw = truncated_normal(&mut rng, model.noise.extent_sigma);
        objects.push(DetectedObject {
            object_class: class,
            center: rect.center + offset,
            extent: Extent::new((rect.length + dl).max(MIN_EXTENT), (rect.width + dw).max(MIN_EXTENT)),
            heading: rect.heading,
            confidence: model.base_confidence,
            source: model.id.clone(),
        });
    }

    for f in &active {
        if let PerceptionFault::Phantom(phantom) = f {
            if phantom.center.norm() > model.max_range {
                continue;
            }
            objects.push(DetectedObject {
                object_class: phantom.object_class,
                center: phantom.center,
                extent: Extent::new(
                    phantom.extent.length.max(MIN_EXTENT),
                    phantom.extent.width.max(MIN_EXTENT),
                ),
                heading: phantom.heading,
                confidence: phantom.confidence.clamp(0.0, 1.0),
                source: model.id.clone(),
            });
        }
    }

    ObjectList {
        tick: truth.tick,
        source: model.id.clone(),
        objects,
    }
}

fn visible(model: &PerceptionModelConfig, center: Point2) -> bool {
    if center.norm() > model.max_range {
        return false;
    }
    model.fov >= std::f64::consts::TAU || center.y.atan2(center.x).abs() <= model.fov / 2.0
}

/// Gaussian sample truncated to ±3σ.
fn truncated_normal<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is positive");
    n.sample(rng).clamp(-3.0 * sigma, 3.0 * sigma)
}

/// Isotropic 2D Gaussian offset whose length is capped at 3σ.
fn truncated_offset<R: Rng>(rng: &mut R, sigma: f64) -> Point2 {
    if sigma <= 0.0 {
        return Point2::ORIGIN;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is positive");
    let p = Point2::new(n.sample(rng), n.sample(rng));
    let len = p.norm();
    if len > 3.0 * sigma {
        p * (3.0 * sigma / len)
    } else {
        p
    }
}

/// A perception path with the state needed for `freeze` faults.
#[derive(Debug, Clone)]
pub struct PerceptionPath {
    pub config: PerceptionModelConfig,
    last: Option<ObjectList>,
    frozen: Option<(ObjectList, u64)>,
    consumed: BTreeSet<usize>,
}

impl PerceptionPath {
    pub fn new(config: PerceptionModelConfig) -> Self {
        PerceptionPath {
            config,
            last: None,
            frozen: None,
            consumed: BTreeSet::new(),
        }
    }

    pub fn id(&self) -> &SourceId {
        &self.config.id
    }

    pub fn step(&mut self, truth: &SceneState, seed: u64) -> ObjectList {
        for (i, f) in self.config.error_process.iter().enumerate() {
            if let PerceptionFault::Freeze { ticks } = f.fault {
                if f.active_at(truth.time) && self.consumed.insert(i) {
                    let held = self
                        .last
                        .clone()
                        .unwrap_or_else(|| ObjectList::empty(truth.tick, self.config.id.clone()));
                    self.frozen = Some((held, truth.tick + ticks));
                }
            }
        }
        let out = match &self.frozen {
            Some((held, until)) if truth.tick < *until => ObjectList {
                tick: truth.tick,
                ..held.clone()
            },
            _ => {
                self.frozen = None;
                perceive(&self.config, truth, seed)
            }
        };
        self.last = Some(out.clone());
        out
    }
}

/// A fused detection plus the sources that contributed to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedObject {
    #[serde(flatten)]
    pub object: DetectedObject,
    pub contributors: Vec<SourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedList {
    pub tick: u64,
    pub objects: Vec<FusedObject>,
}

impl FusedList {
    pub fn contributors(&self) -> BTreeSet<&SourceId> {
        self.objects.iter().flat_map(|o| o.contributors.iter()).collect()
    }

    /// Plain object list view (used when fused output drives downstream).
    pub fn to_object_list(&self) -> ObjectList {
        ObjectList {
            tick: self.tick,
            source: SourceId::fused(),
            objects: self
                .objects
                .iter()
                .map(|o| DetectedObject {
                    source: SourceId::fused(),
                    ..o.object.clone()
                })
                .collect(),
        }
    }
}

/// Merges matched groups by confidence-weighted averaging. The class comes
/// from the most confident member; unmatched objects pass through under their
/// own source. Members referring to lists not in `validated_lists` are ignored.
pub fn fuse(validated_lists: &[ObjectList], assignment: &MatchSet) -> FusedList {
    let tick = validated_lists.first().map_or(0, |l| l.tick);
    let lookup = |source: &SourceId, index: usize| -> Option<&DetectedObject> {
        validated_lists
            .iter()
            .find(|l| &l.source == source)
            .and_then(|l| l.objects.get(index))
    };

    let mut covered: BTreeSet<(SourceId, usize)> = BTreeSet::new();
    let mut out = Vec::new();
    for group in &assignment.groups {
        let mut members: Vec<(&SourceId, usize, &DetectedObject)> = group
            .iter()
            .filter_map(|m| lookup(&m.source, m.index).map(|o| (&m.source, m.index, o)))
            .collect();
        members.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));
        for (s, i, _) in &members {
            covered.insert(((*s).clone(), *i));
        }
        match members.len() {
            0 => {}
            1 => out.push(FusedObject {
                object: members[0].2.clone(),
                contributors: vec![members[0].0.clone()],
            }),
            _ => out.push(merge(&members)),
        }
    }
    for list in validated_lists {
        for (i, o) in list.objects.iter().enumerate() {
            if !covered.contains(&(list.source.clone(), i)) {
                out.push(FusedObject {
                    object: o.clone(),
                    contributors: vec![list.source.clone()],
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.object
            .center
            .x
            .total_cmp(&b.object.center.x)
            .then(a.object.center.y.total_cmp(&b.object.center.y))
            .then(a.object.object_class.cmp(&b.object.object_class))
            .then(a.contributors.cmp(&b.contributors))
    });
    FusedList { tick, objects: out }
}

fn merge(members: &[(&SourceId, usize, &DetectedObject)]) -> FusedObject {
    let total: f64 = members.iter().map(|m| m.2.confidence).sum();
    let weight = |o: &DetectedObject| {
        if total > 0.0 {
            o.confidence / total
        } else {
            1.0 / members.len() as f64
        }
    };
    let mut center = Point2::ORIGIN;
    let (mut length, mut width) = (0.0, 0.0);
    let (mut s2, mut c2) = (0.0, 0.0);
    for (_, _, o) in members {
        let w = weight(o);
        center = center + o.center * w;
        length += o.extent.length * w;
        width += o.extent.width * w;
        // Box headings are axes (period π): average on the doubled angle.
        s2 += w * (2.0 * o.heading).sin();
        c2 += w * (2.0 * o.heading).cos();
    }
    let best = members.iter().fold(
        members[0].2,
        |acc, m| if m.2.confidence > acc.confidence { m.2 } else { acc },
    );
    FusedObject {
        object: DetectedObject {
            object_class: best.object_class,
            center,
            extent: Extent::new(length, width),
            heading: s2.atan2(c2) / 2.0,
            confidence: best.confidence,
            source: SourceId::fused(),
        },
        contributors: members.iter().map(|m| m.0.clone()).collect(),
    }
}
