//! Seeded synthetic scene generator.
//!
//! Object classes follow a Zipf law over registry order, boxes are sampled
//! with optional clustering and clamped inside the image, and relations are
//! exactly the triplets entailed by a rule table evaluated on the generated
//! geometry.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{CategoryRegistry, Dataset, ObjectInstance, RelationTriplet, SceneAnnotation, Split};
use crate::geometry::{rotated_iou, to_hbb, BoxParams, OrientedBox};

pub const DEFAULT_IMAGE_SIZE: u32 = 1024;
pub const DEFAULT_MIN_OBJECTS: usize = 3;
pub const DEFAULT_MAX_OBJECTS: usize = 10;
pub const DEFAULT_TAIL_SKEW: f64 = 1.0;
pub const DEFAULT_MIN_SIDE: f64 = 4.0;
pub const DEFAULT_MAX_SIDE: f64 = 96.0;
pub const DEFAULT_MAX_ASPECT: f64 = 3.0;
pub const DEFAULT_CLUSTER_PROB: f64 = 0.5;
/// Number of most frequent classes that the default rule table covers.
pub const DEFAULT_RULE_CLASSES: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("registry has no object or no relation categories")]
    EmptyRegistry,
    #[error("image size must be positive, got {width}x{height}")]
    ImageSize { width: u32, height: u32 },
    #[error("objects per image: min {min} > max {max}")]
    ObjectRange { min: usize, max: usize },
    #[error("box sides must satisfy 0 < min_side <= max_side and fit the image, got [{min}, {max}]")]
    BoxSize { min: f64, max: f64 },
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("rule {index} references category outside the registry")]
    Rule { index: usize },
}

/// Geometric gate on a rule; distances are in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Condition {
    Always,
    IouAbove(f64),
    IouAtMost(f64),
    CenterDistanceBelow(f64),
    CenterDistanceAbove(f64),
}

impl Condition {
    pub fn holds(&self, subject: &OrientedBox, object: &OrientedBox) -> bool {
        let dist = || {
            let (a, b) = (subject.center(), object.center());
            (a.x - b.x).hypot(a.y - b.y)
        };
        match *self {
            Condition::Always => true,
            Condition::IouAbove(t) => rotated_iou(subject, object) > t,
            Condition::IouAtMost(t) => rotated_iou(subject, object) <= t,
            Condition::CenterDistanceBelow(d) => dist() < d,
            Condition::CenterDistanceAbove(d) => dist() > d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub subject: usize,
    pub object: usize,
    pub predicate: usize,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_images: usize,
    pub width: u32,
    pub height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    pub registry: CategoryRegistry,
    pub rules: Vec<Rule>,
    /// Zipf exponent over registry order; 0 samples classes uniformly.
    pub tail_skew: f64,
    pub seed: u64,
    pub split: Split,
    pub min_side: f64,
    pub max_side: f64,
    pub max_aspect: f64,
    /// Probability that an object is placed next to an earlier one.
    pub cluster_prob: f64,
}

impl SynthConfig {
    /// Canonical registry, default sizes and the default rule table.
    pub fn new(n_images: usize, seed: u64) -> Self {
        let registry = CategoryRegistry::canonical();
        let rules = default_rules(&registry, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE);
        Self {
            n_images,
            width: DEFAULT_IMAGE_SIZE,
            height: DEFAULT_IMAGE_SIZE,
            min_objects: DEFAULT_MIN_OBJECTS,
            max_objects: DEFAULT_MAX_OBJECTS,
            registry,
            rules,
            tail_skew: DEFAULT_TAIL_SKEW,
            seed,
            split: Split::Train,
            min_side: DEFAULT_MIN_SIDE,
            max_side: DEFAULT_MAX_SIDE,
            max_aspect: DEFAULT_MAX_ASPECT,
            cluster_prob: DEFAULT_CLUSTER_PROB,
        }
    }

    pub fn check(&self) -> Result<(), SynthError> {
        if self.registry.num_objects() == 0 || self.registry.num_relations() == 0 {
            return Err(SynthError::EmptyRegistry);
        }
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::ImageSize {
                width: self.width,
                height: self.height,
            });
        }
        if self.min_objects > self.max_objects {
            return Err(SynthError::ObjectRange {
                min: self.min_objects,
                max: self.max_objects,
            });
        }
        let fits = self.max_side * std::f64::consts::SQRT_2 <= self.width.min(self.height) as f64;
        if !(self.min_side > 0.0 && self.min_side <= self.max_side && fits) {
            return Err(SynthError::BoxSize {
                min: self.min_side,
                max: self.max_side,
            });
        }
        let params = [
            ("tail_skew", self.tail_skew, self.tail_skew.is_finite() && self.tail_skew >= 0.0),
            ("max_aspect", self.max_aspect, self.max_aspect.is_finite() && self.max_aspect >= 1.0),
            ("cluster_prob", self.cluster_prob, (0.0..=1.0).contains(&self.cluster_prob)),
        ];
        for (name, value, ok) in params {
            if !ok {
                return Err(SynthError::Parameter { name, value });
            }
        }
        let (k, r) = (self.registry.num_objects(), self.registry.num_relations());
        for (index, rule) in self.rules.iter().enumerate() {
            let cond_ok = match rule.condition {
                Condition::Always => true,
                Condition::IouAbove(v) | Condition::IouAtMost(v) | Condition::CenterDistanceBelow(v) | Condition::CenterDistanceAbove(v) => v.is_finite(),
            };
            if rule.subject >= k || rule.object >= k || rule.predicate >= r || !cond_ok {
                return Err(SynthError::Rule { index });
            }
        }
        Ok(())
    }
}

/// One rule per ordered pair among the most frequent classes, with a
/// predicate and condition fixed by the class pair.
pub fn default_rules(registry: &CategoryRegistry, width: u32, height: u32) -> Vec<Rule> {
    let t = DEFAULT_RULE_CLASSES.min(registry.num_objects());
    let r = registry.num_relations();
    if r == 0 {
        return Vec::new();
    }
    let near = 0.25 * width.min(height) as f64;
    let mut rules = Vec::new();
    for a in 0..t {
        for b in 0..t {
            if (a + 2 * b) % 3 == 0 {
                continue;
            }
            let condition = match (a + b) % 4 {
                0 => Condition::Always,
                1 => Condition::CenterDistanceBelow(near),
                2 => Condition::IouAbove(0.0),
                _ => Condition::CenterDistanceAbove(near),
            };
            rules.push(Rule {
                subject: a,
                object: b,
                predicate: (a * 13 + b * 7) % r,
                condition,
            });
        }
    }
    rules
}

/// Triplets entailed by `rules` over every ordered pair, deduplicated, in
/// pair-enumeration then rule order.
pub fn entailed_relations(objects: &[ObjectInstance], rules: &[Rule]) -> Vec<RelationTriplet> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in objects {
        for o in objects {
            if s.id == o.id {
                continue;
            }
            for rule in rules {
                if rule.subject == s.category && rule.object == o.category && rule.condition.holds(&s.obb, &o.obb) {
                    let t = RelationTriplet {
                        subject: s.id,
                        predicate: rule.predicate,
                        object: o.id,
                    };
                    if seen.insert(t) {
                        out.push(t);
                    }
                }
            }
        }
    }
    out
}

fn sample_box(rng: &mut ChaCha8Rng, cfg: &SynthConfig, anchor: Option<&OrientedBox>) -> OrientedBox {
    let (lo, hi) = (cfg.min_side.ln(), cfg.max_side.ln());
    let long = if hi > lo { rng.random_range(lo..=hi).exp() } else { cfg.min_side };
    let aspect = if cfg.max_aspect > 1.0 { rng.random_range(1.0..=cfg.max_aspect) } else { 1.0 };
    let theta = rng.random_range(0.0..PI);
    let (w, h) = if rng.random_bool(0.5) { (long, long / aspect) } else { (long / aspect, long) };
    let (width, height) = (cfg.width as f64, cfg.height as f64);
    let (cx, cy) = match anchor {
        Some(a) => {
            let c = a.center();
            let reach = a.width().max(a.height()) + long;
            (c.x + rng.random_range(-reach..=reach), c.y + rng.random_range(-reach..=reach))
        }
        None => (rng.random_range(0.0..width), rng.random_range(0.0..height)),
    };
    let b = OrientedBox::from_params(BoxParams { cx, cy, w, h, theta }).expect("sampled sides are positive");
    let hbb = to_hbb(&b);
    let (hx, hy) = (hbb.width() / 2.0, hbb.height() / 2.0);
    let c = b.center();
    b.translate(c.x.clamp(hx, width - hx) - c.x, c.y.clamp(hy, height - hy) - c.y)
}

fn generate_scene(cfg: &SynthConfig, classes: &WeightedIndex<f64>, index: usize) -> SceneAnnotation {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let n = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let mut objects: Vec<ObjectInstance> = Vec::with_capacity(n);
    for id in 0..n {
        let category = classes.sample(&mut rng);
        let anchor = if !objects.is_empty() && rng.random_bool(cfg.cluster_prob) {
            Some(objects[rng.random_range(0..objects.len())].obb)
        } else {
            None
        };
        let obb = sample_box(&mut rng, cfg, anchor.as_ref());
        objects.push(ObjectInstance {
            id: id as u32,
            category,
            obb,
            truncated: false,
        });
    }
    let relations = entailed_relations(&objects, &cfg.rules);
    SceneAnnotation {
        image_id: format!("synth_{index:06}"),
        width: cfg.width,
        height: cfg.height,
        objects,
        relations,
    }
}

/// Deterministic for a fixed config; each image draws from its own stream.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.check()?;
    let weights: Vec<f64> = (0..cfg.registry.num_objects())
        .map(|i| ((i + 1) as f64).powf(-cfg.tail_skew))
        .collect();
    let classes = WeightedIndex::new(&weights).map_err(|_| SynthError::Parameter {
        name: "tail_skew",
        value: cfg.tail_skew,
    })?;
    let scenes = (0..cfg.n_images).map(|i| generate_scene(cfg, &classes, i)).collect();
    Ok(Dataset {
        registry: cfg.registry.clone(),
        split: cfg.split,
        scenes,
    })
}
