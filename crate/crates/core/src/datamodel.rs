//! Category registries, scene containers, validation and the JSON manifest format.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{GeometryError, OrientedBox, Point};

pub const MANIFEST_VERSION: &str = "1.0";

/// Object categories in the order of the published per-category instance table.
pub const CANONICAL_OBJECTS: [&str; 60] = [
    "van", "small car", "building", "road", "airplane", "block", "parking lot", "motorboat",
    "dump truck", "cargo truck", "dry cargo ship", "runway", "container", "water", "intersection",
    "fishing boat", "other vehicle", "storage tank", "airport", "other ship", "harbor",
    "engineering ship", "tennis court", "pool", "solar panel", "liquid cargo ship", "crane", "bus",
    "passenger ship", "warship", "storage tank group", "excavator", "bridge", "tugboat",
    "basketball court", "trailer", "train carriage", "football field", "cargo", "baseball field",
    "exhaust fan", "truck tractor", "factory", "roundabout", "construction site", "chimney",
    "stadium", "smoke", "railway", "boarding bridge", "farmland", "helipad", "tractor",
    "greenbelt", "control tower", "dam", "typhoon spiral", "typhoon eye", "locomotive",
    "gas-station",
];

/// Relation categories in the order of the published per-relation instance table.
pub const CANONICAL_RELATIONS: [&str; 64] = [
    "park at", "park next to", "close to", "accessible", "drive on", "moor", "serve", "parallel",
    "adjacent", "sail on", "belong to", "pile up", "inside", "cross", "supplement", "supply",
    "slow", "contain", "taxi on", "cooperate", "power", "link", "preparation", "above", "hoist",
    "under", "ventilate", "on", "transport", "construction", "sail by", "tow", "block", "connect",
    "drive away from", "enter", "away from", "dock alone at", "park alone at",
    "drive at the same lane", "drive at the different lane", "typhoon impact", "load",
    "pass under", "intersect", "around", "emit", "own", "stick to", "separate",
    "transfer passenger", "mirror symmetry", "symmetry", "converge", "border", "dock at",
    "support", "manage", "shuttle", "command", "dig", "cultivate", "forest fire", "pull",
];

/// The twenty relations describing spatial layout; every other relation is semantic.
pub const SPATIAL_RELATIONS: [&str; 20] = [
    "close to", "park next to", "adjacent", "on", "above", "under", "inside", "moor", "park at",
    "cross", "accessible", "parallel", "enter", "around", "stick to", "mirror symmetry",
    "symmetry", "drive at the same lane", "drive at the different lane", "pass under",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed manifest: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unsupported manifest version {0:?}, expected {MANIFEST_VERSION:?}")]
    Version(String),
    #[error("invalid registry: {0}")]
    Registry(String),
    #[error("{image_id}: {path}: unknown object category index {index}")]
    UnknownCategory { image_id: String, path: String, index: usize },
    #[error("{image_id}: {path}: unknown predicate index {index}")]
    UnknownPredicate { image_id: String, path: String, index: usize },
    #[error("{image_id}: {path}: triplet references missing object id {id}")]
    DanglingId { image_id: String, path: String, id: u32 },
    #[error("{image_id}: {path}: {source}")]
    InvalidBox {
        image_id: String,
        path: String,
        source: GeometryError,
    },
    #[error("{image_id}: {path}: score {score} outside [0, 1]")]
    Score { image_id: String, path: String, score: f64 },
    #[error("manifest failed validation with {} violation(s); first: {}", .0.violations.len(), .0.violations[0])]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Spatial,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRegistry {
    object_names: Vec<String>,
    relation_names: Vec<String>,
    relation_kinds: Vec<RelationKind>,
}

impl CategoryRegistry {
    pub fn new(
        object_names: Vec<String>,
        relation_names: Vec<String>,
        relation_kinds: Vec<RelationKind>,
    ) -> Result<Self, DataError> {
        if relation_kinds.len() != relation_names.len() {
            return Err(DataError::Registry(format!(
                "{} relation kinds for {} relations",
                relation_kinds.len(),
                relation_names.len()
            )));
        }
        for (what, names) in [("object", &object_names), ("relation", &relation_names)] {
            if names.is_empty() {
                return Err(DataError::Registry(format!("no {what} categories")));
            }
            let mut seen = HashSet::new();
            for n in names {
                if n.trim().is_empty() {
                    return Err(DataError::Registry(format!("empty {what} category name")));
                }
                if !seen.insert(n.as_str()) {
                    return Err(DataError::Registry(format!("duplicate {what} category {n:?}")));
                }
            }
        }
        Ok(Self {
            object_names,
            relation_names,
            relation_kinds,
        })
    }

    /// Registry with relation kinds taken from the canonical spatial list.
    pub fn from_names(object_names: Vec<String>, relation_names: Vec<String>) -> Result<Self, DataError> {
        let kinds = relation_names
            .iter()
            .map(|n| {
                if SPATIAL_RELATIONS.contains(&n.as_str()) {
                    RelationKind::Spatial
                } else {
                    RelationKind::Semantic
                }
            })
            .collect();
        Self::new(object_names, relation_names, kinds)
    }

    pub fn canonical() -> Self {
        Self::from_names(
            CANONICAL_OBJECTS.iter().map(|s| s.to_string()).collect(),
            CANONICAL_RELATIONS.iter().map(|s| s.to_string()).collect(),
        )
        .expect("canonical registry is well formed")
    }

    pub fn num_objects(&self) -> usize {
        self.object_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn object_names(&self) -> &[String] {
        &self.object_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn object_name(&self, index: usize) -> Option<&str> {
        self.object_names.get(index).map(String::as_str)
    }

    pub fn relation_name(&self, index: usize) -> Option<&str> {
        self.relation_names.get(index).map(String::as_str)
    }

    pub fn relation_kind(&self, index: usize) -> Option<RelationKind> {
        self.relation_kinds.get(index).copied()
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.object_names.iter().position(|n| n == name)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relation_names.iter().position(|n| n == name)
    }

    /// Hex SHA-256 over the ordered names and kinds; used to pin trained
    /// artifacts to the registry they were fitted on.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.object_names {
            h.update(b"o:");
            h.update(n.as_bytes());
            h.update([0]);
        }
        for (n, k) in self.relation_names.iter().zip(&self.relation_kinds) {
            h.update(if *k == RelationKind::Spatial { b"s:" } else { b"m:" });
            h.update(n.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInstance {
    pub id: u32,
    pub category: usize,
    pub obb: OrientedBox,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationTriplet {
    pub subject: u32,
    pub predicate: usize,
    pub object: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneAnnotation {
    #[serde(rename = "id")]
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectInstance>,
    pub relations: Vec<RelationTriplet>,
}

impl SceneAnnotation {
    pub fn object(&self, id: u32) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Maps object ids to their position in `objects`.
    pub fn id_positions(&self) -> HashMap<u32, usize> {
        self.objects.iter().enumerate().map(|(i, o)| (o.id, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub registry: CategoryRegistry,
    pub split: Split,
    pub scenes: Vec<SceneAnnotation>,
}

impl Dataset {
    pub fn num_objects(&self) -> usize {
        self.scenes.iter().map(|s| s.objects.len()).sum()
    }

    pub fn num_relations(&self) -> usize {
        self.scenes.iter().map(|s| s.relations.len()).sum()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader<I> {
    version: String,
    split: Split,
    object_categories: Vec<String>,
    relation_categories: Vec<String>,
    images: I,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: u32,
    category: usize,
    obb: [[f64; 2]; 4],
    truncated: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    id: String,
    width: u32,
    height: u32,
    objects: Vec<RawObject>,
    relations: Vec<RelationTriplet>,
}

fn to_box(raw: [[f64; 2]; 4], image_id: &str, path: String) -> Result<OrientedBox, DataError> {
    OrientedBox::from_vertices(raw.map(|[x, y]| Point::new(x, y))).map_err(|source| DataError::InvalidBox {
        image_id: image_id.to_string(),
        path,
        source,
    })
}

fn header_registry<I>(header: &ManifestHeader<I>) -> Result<CategoryRegistry, DataError> {
    if header.version != MANIFEST_VERSION {
        return Err(DataError::Version(header.version.clone()));
    }
    CategoryRegistry::from_names(header.object_categories.clone(), header.relation_categories.clone())
}

/// Decodes a manifest, enforcing structure (syntax, category ranges, box shape,
/// dangling triplet ids) but not the convention checks of [`validate`].
pub fn read_manifest(bytes: &[u8]) -> Result<Dataset, DataError> {
    let header: ManifestHeader<Vec<RawScene>> = serde_json::from_slice(bytes)?;
    let registry = header_registry(&header)?;
    let mut scenes = Vec::with_capacity(header.images.len());
    for (si, raw) in header.images.into_iter().enumerate() {
        let mut objects = Vec::with_capacity(raw.objects.len());
        for (oi, o) in raw.objects.into_iter().enumerate() {
            if o.category >= registry.num_objects() {
                return Err(DataError::UnknownCategory {
                    image_id: raw.id.clone(),
                    path: format!("images[{si}].objects[{oi}].category"),
                    index: o.category,
                });
            }
            let obb = to_box(o.obb, &raw.id, format!("images[{si}].objects[{oi}].obb"))?;
            objects.push(ObjectInstance {
                id: o.id,
                category: o.category,
                obb,
                truncated: o.truncated,
            });
        }
        let ids: HashSet<u32> = objects.iter().map(|o| o.id).collect();
        for (ri, r) in raw.relations.iter().enumerate() {
            check_triplet_refs(&raw.id, si, ri, r.subject, r.predicate, r.object, &ids, &registry)?;
        }
        scenes.push(SceneAnnotation {
            image_id: raw.id,
            width: raw.width,
            height: raw.height,
            objects,
            relations: raw.relations,
        });
    }
    Ok(Dataset {
        registry,
        split: header.split,
        scenes,
    })
}

#[allow(clippy::too_many_arguments)]
fn check_triplet_refs(
    image_id: &str,
    si: usize,
    ri: usize,
    subject: u32,
    predicate: usize,
    object: u32,
    ids: &HashSet<u32>,
    registry: &CategoryRegistry,
) -> Result<(), DataError> {
    for (field, id) in [("subject", subject), ("object", object)] {
        if !ids.contains(&id) {
            return Err(DataError::DanglingId {
                image_id: image_id.to_string(),
                path: format!("images[{si}].relations[{ri}].{field}"),
                id,
            });
        }
    }
    if predicate >= registry.num_relations() {
        return Err(DataError::UnknownPredicate {
            image_id: image_id.to_string(),
            path: format!("images[{si}].relations[{ri}].predicate"),
            index: predicate,
        });
    }
    Ok(())
}

/// Decodes and validates a manifest; any convention violation is an error, so
/// every returned dataset has an empty [`validate`] report.
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset, DataError> {
    let dataset = read_manifest(bytes)?;
    let report = validate(&dataset);
    if report.is_clean() {
        Ok(dataset)
    } else {
        Err(DataError::Invalid(report))
    }
}

pub fn serialize_dataset(dataset: &Dataset) -> String {
    let header = ManifestHeader {
        version: MANIFEST_VERSION.to_string(),
        split: dataset.split,
        object_categories: dataset.registry.object_names.clone(),
        relation_categories: dataset.registry.relation_names.clone(),
        images: &dataset.scenes,
    };
    serde_json::to_string(&header).expect("manifest serialization is infallible")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    DuplicateImageId,
    BadDimensions,
    DuplicateObjectId,
    CategoryRange,
    VertexOrder,
    OutOfBounds,
    SelfRelation,
    DanglingId,
    PredicateRange,
    DuplicateTriplet,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::DuplicateImageId => "DUPLICATE_IMAGE_ID",
            ViolationCode::BadDimensions => "BAD_DIMENSIONS",
            ViolationCode::DuplicateObjectId => "DUPLICATE_OBJECT_ID",
            ViolationCode::CategoryRange => "CATEGORY_RANGE",
            ViolationCode::VertexOrder => "VERTEX_ORDER",
            ViolationCode::OutOfBounds => "OUT_OF_BOUNDS",
            ViolationCode::SelfRelation => "SELF_RELATION",
            ViolationCode::DanglingId => "DANGLING_ID",
            ViolationCode::PredicateRange => "PREDICATE_RANGE",
            ViolationCode::DuplicateTriplet => "DUPLICATE_TRIPLET",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub image_id: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.code.as_str(), self.image_id, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, code: ViolationCode) -> usize {
        self.violations.iter().filter(|v| v.code == code).count()
    }
}

/// Checks every dataset convention and reports violations as data.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |code, image_id: &str, detail: String| {
        out.push(Violation {
            code,
            image_id: image_id.to_string(),
            detail,
        })
    };
    let registry = &dataset.registry;
    let mut image_ids = HashSet::new();
    for scene in &dataset.scenes {
        let iid = scene.image_id.as_str();
        if !image_ids.insert(iid) {
            push(ViolationCode::DuplicateImageId, iid, "image id appears more than once".into());
        }
        if scene.width == 0 || scene.height == 0 {
            push(
                ViolationCode::BadDimensions,
                iid,
                format!("image size {}x{}", scene.width, scene.height),
            );
        }
        let extent = scene.width.max(scene.height) as f64;
        let (lo, hi) = (-0.5 * extent, 1.5 * extent);
        let mut ids = HashSet::new();
        for o in &scene.objects {
            if !ids.insert(o.id) {
                push(ViolationCode::DuplicateObjectId, iid, format!("object id {} repeated", o.id));
            }
            if o.category >= registry.num_objects() {
                push(
                    ViolationCode::CategoryRange,
                    iid,
                    format!("object {} has category {}", o.id, o.category),
                );
            }
            if !o.obb.is_clockwise() {
                push(
                    ViolationCode::VertexOrder,
                    iid,
                    format!("object {} vertices are counter-clockwise", o.id),
                );
            }
            if o
                .obb
                .vertices()
                .iter()
                .any(|p| p.x < lo || p.x > hi || p.y < lo || p.y > hi)
            {
                push(
                    ViolationCode::OutOfBounds,
                    iid,
                    format!("object {} has a vertex outside [{lo}, {hi}]", o.id),
                );
            }
        }
        let mut triplets = HashSet::new();
        for r in &scene.relations {
            if r.subject == r.object {
                push(
                    ViolationCode::SelfRelation,
                    iid,
                    format!("object {} relates to itself", r.subject),
                );
            }
            for id in [r.subject, r.object] {
                if !ids.contains(&id) {
                    push(ViolationCode::DanglingId, iid, format!("missing object id {id}"));
                }
            }
            if r.predicate >= registry.num_relations() {
                push(
                    ViolationCode::PredicateRange,
                    iid,
                    format!("predicate index {}", r.predicate),
                );
            }
            if !triplets.insert(*r) {
                push(
                    ViolationCode::DuplicateTriplet,
                    iid,
                    format!("triplet ({}, {}, {}) repeated", r.subject, r.predicate, r.object),
                );
            }
        }
    }
    ValidationReport { violations: out }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Large,
    Medium,
    Small,
    Tiny,
}

pub const LARGE_MIN_AREA: f64 = 2048.0;
pub const MEDIUM_MIN_AREA: f64 = 144.0;
pub const SMALL_MIN_AREA: f64 = 11.0;

/// Size class by box area: `[2048, ∞)` large, `[144, 2048)` medium,
/// `[11, 144)` small, below 11 px² tiny.
pub fn size_class(b: &OrientedBox) -> SizeClass {
    size_class_of_area(b.area())
}

pub fn size_class_of_area(area: f64) -> SizeClass {
    if area >= LARGE_MIN_AREA {
        SizeClass::Large
    } else if area >= MEDIUM_MIN_AREA {
        SizeClass::Medium
    } else if area >= SMALL_MIN_AREA {
        SizeClass::Small
    } else {
        SizeClass::Tiny
    }
}

/// Detected object as stored in a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedObject {
    pub id: u32,
    pub category: usize,
    pub obb: OrientedBox,
    #[serde(default)]
    pub truncated: bool,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredRelation {
    pub subject: u32,
    pub predicate: usize,
    pub object: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedScene {
    #[serde(rename = "id")]
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<PredictedObject>,
    pub relations: Vec<ScoredRelation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub registry: CategoryRegistry,
    pub split: Split,
    pub scenes: Vec<PredictedScene>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredictedObject {
    id: u32,
    category: usize,
    obb: [[f64; 2]; 4],
    #[serde(default)]
    truncated: bool,
    score: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredictedScene {
    id: String,
    width: u32,
    height: u32,
    objects: Vec<RawPredictedObject>,
    relations: Vec<ScoredRelation>,
}

fn check_score(score: f64, image_id: &str, path: String) -> Result<(), DataError> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(DataError::Score {
            image_id: image_id.to_string(),
            path,
            score,
        })
    }
}

pub fn parse_predictions(bytes: &[u8]) -> Result<PredictionSet, DataError> {
    let header: ManifestHeader<Vec<RawPredictedScene>> = serde_json::from_slice(bytes)?;
    let registry = header_registry(&header)?;
    let mut scenes = Vec::with_capacity(header.images.len());
    for (si, raw) in header.images.into_iter().enumerate() {
        let mut objects = Vec::with_capacity(raw.objects.len());
        for (oi, o) in raw.objects.into_iter().enumerate() {
            if o.category >= registry.num_objects() {
                return Err(DataError::UnknownCategory {
                    image_id: raw.id.clone(),
                    path: format!("images[{si}].objects[{oi}].category"),
                    index: o.category,
                });
            }
            check_score(o.score, &raw.id, format!("images[{si}].objects[{oi}].score"))?;
            let obb = to_box(o.obb, &raw.id, format!("images[{si}].objects[{oi}].obb"))?;
            objects.push(PredictedObject {
                id: o.id,
                category: o.category,
                obb,
                truncated: o.truncated,
                score: o.score,
            });
        }
        let ids: HashSet<u32> = objects.iter().map(|o| o.id).collect();
        for (ri, r) in raw.relations.iter().enumerate() {
            check_triplet_refs(&raw.id, si, ri, r.subject, r.predicate, r.object, &ids, &registry)?;
            check_score(r.score, &raw.id, format!("images[{si}].relations[{ri}].score"))?;
        }
        scenes.push(PredictedScene {
            image_id: raw.id,
            width: raw.width,
            height: raw.height,
            objects,
            relations: raw.relations,
        });
    }
    Ok(PredictionSet {
        registry,
        split: header.split,
        scenes,
    })
}

pub fn serialize_predictions(set: &PredictionSet) -> String {
    let header = ManifestHeader {
        version: MANIFEST_VERSION.to_string(),
        split: set.split,
        object_categories: set.registry.object_names.clone(),
        relation_categories: set.registry.relation_names.clone(),
        images: &set.scenes,
    };
    serde_json::to_string(&header).expect("prediction serialization is infallible")
}
