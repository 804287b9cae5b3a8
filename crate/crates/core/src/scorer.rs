//! Baseline relation scoring without neural components.
//!
//! [`FrequencyPrior`] is a smoothed class-pair table over predicates plus a
//! "no relation" cell. [`LinearScorer`] has three linear heads trained
//! jointly by full-batch gradient descent:
//!
//! * a pair-relatedness head (binary cross-entropy on sampled pairs),
//! * an object-label refinement head (cross-entropy against object labels),
//! * a predicate head (cross-entropy against ground-truth predicates).
//!
//! The training objective is the weighted sum of the three losses.
//! [`predict_triplets`] fuses the prior with the linear heads by normalised
//! elementwise products.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{CategoryRegistry, Dataset, PredictedObject, SceneAnnotation};
use crate::geometry::{pair_geometry, GeometryError, OrientedBox, PairGeometry};
use crate::ingest::{rank_by_score, Detection};
use crate::metrics::{PredictedTriplet, TripletEnd};
use crate::pairing::{
    bce_with_logits, enumerate_pairs, label_pairs, sample_pairs, select_top_pairs, sigmoid, LossGrad, PairScores,
    DEFAULT_MAX_NEG, DEFAULT_MAX_POS,
};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.5;
pub const DEFAULT_EPOCHS: usize = 300;

/// Geometric features per ordered pair, before the class one-hots and bias.
pub const GEOMETRY_FEATURES: usize = 15;
/// Features per object for the refinement head, bias included.
pub const OBJECT_FEATURES: usize = 9;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("dataset has no object pairs to learn from")]
    EmptyDataset,
    #[error("smoothing alpha must be finite and >= 0, got {0}")]
    Alpha(f64),
    #[error("loss weights must be finite and >= 0, got {0:?}")]
    NegativeWeight([f64; 3]),
    #[error("loss components must be >= 0, got {0:?}")]
    NegativeComponent([f64; 3]),
    #[error("class index {index} out of range for {len} logits")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("artifact was fitted on registry {found}, current registry is {expected}")]
    RegistryMismatch { expected: String, found: String },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("malformed artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-log softmax(logits)[true_index]` via log-sum-exp; gradient `softmax - onehot`.
pub fn ce_loss(logits: &[f64], true_index: usize) -> Result<LossGrad, ScorerError> {
    if true_index >= logits.len() {
        return Err(ScorerError::IndexOutOfRange {
            index: true_index,
            len: logits.len(),
        });
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[true_index] -= 1.0;
    Ok(LossGrad {
        loss: (lse - logits[true_index]).max(0.0),
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub relpn: f64,
    pub refine: f64,
    pub relation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            relpn: 1.0,
            refine: 1.0,
            relation: 1.0,
        }
    }
}

impl LossWeights {
    fn as_array(&self) -> [f64; 3] {
        [self.relpn, self.refine, self.relation]
    }

    pub fn check(&self) -> Result<(), ScorerError> {
        let w = self.as_array();
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(ScorerError::NegativeWeight(w))
        }
    }
}

/// `w_relpn·l_relpn + w_refine·l_refine + w_relation·l_relation`.
pub fn total_loss(l_relpn: f64, l_refine: f64, l_relation: f64, weights: &LossWeights) -> Result<f64, ScorerError> {
    weights.check()?;
    let parts = [l_relpn, l_refine, l_relation];
    if parts.iter().any(|&v| v < 0.0) {
        return Err(ScorerError::NegativeComponent(parts));
    }
    Ok(weights.relpn * l_relpn + weights.refine * l_refine + weights.relation * l_relation)
}

/// Class-pair predicate table; cell `n_predicates` holds "no relation".
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPrior {
    registry_hash: String,
    n_objects: usize,
    n_predicates: usize,
    alpha: f64,
    counts: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PriorRow {
    subject: usize,
    object: usize,
    counts: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    kind: String,
    registry_hash: String,
    alpha: f64,
    n_objects: usize,
    n_predicates: usize,
    rows: Vec<PriorRow>,
}

const PRIOR_KIND: &str = "frequency-prior";
const LINEAR_KIND: &str = "linear-scorer";

impl FrequencyPrior {
    fn cells(&self) -> usize {
        self.n_predicates + 1
    }

    fn row(&self, s: usize, o: usize) -> &[f64] {
        let k = (s * self.n_objects + o) * self.cells();
        &self.counts[k..k + self.cells()]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_predicates(&self) -> usize {
        self.n_predicates
    }

    pub fn count(&self, subject: usize, predicate: usize, object: usize) -> f64 {
        self.row(subject, object)[predicate]
    }

    /// Smoothed distribution over predicates plus the trailing no-relation cell.
    /// A pair never observed with `alpha = 0` gets the uniform distribution.
    pub fn distribution(&self, subject: usize, object: usize) -> Vec<f64> {
        let row = self.row(subject, object);
        let denom = row.iter().sum::<f64>() + self.alpha * self.cells() as f64;
        if denom <= 0.0 {
            return vec![1.0 / self.cells() as f64; self.cells()];
        }
        row.iter().map(|c| (c + self.alpha) / denom).collect()
    }

    pub fn to_json(&self) -> String {
        let mut rows = Vec::new();
        for s in 0..self.n_objects {
            for o in 0..self.n_objects {
                let r = self.row(s, o);
                if r.iter().any(|&c| c != 0.0) {
                    rows.push(PriorRow {
                        subject: s,
                        object: o,
                        counts: r.to_vec(),
                    });
                }
            }
        }
        serde_json::to_string(&PriorFile {
            kind: PRIOR_KIND.into(),
            registry_hash: self.registry_hash.clone(),
            alpha: self.alpha,
            n_objects: self.n_objects,
            n_predicates: self.n_predicates,
            rows,
        })
        .expect("prior serialization is infallible")
    }

    pub fn from_json(bytes: &[u8], registry: &CategoryRegistry) -> Result<Self, ScorerError> {
        let f: PriorFile = serde_json::from_slice(bytes)?;
        if f.kind != PRIOR_KIND {
            return Err(ScorerError::Hyperparams(format!("expected a {PRIOR_KIND} artifact, got {:?}", f.kind)));
        }
        check_hash(registry, &f.registry_hash)?;
        if f.n_objects != registry.num_objects() || f.n_predicates != registry.num_relations() {
            return Err(ScorerError::Hyperparams("prior shape disagrees with registry".into()));
        }
        let mut prior = FrequencyPrior {
            registry_hash: f.registry_hash,
            n_objects: f.n_objects,
            n_predicates: f.n_predicates,
            alpha: f.alpha,
            counts: vec![0.0; f.n_objects * f.n_objects * (f.n_predicates + 1)],
        };
        for r in f.rows {
            if r.subject >= f.n_objects || r.object >= f.n_objects || r.counts.len() != prior.cells() {
                return Err(ScorerError::Hyperparams(format!("bad prior row ({}, {})", r.subject, r.object)));
            }
            let k = (r.subject * f.n_objects + r.object) * prior.cells();
            prior.counts[k..k + r.counts.len()].copy_from_slice(&r.counts);
        }
        Ok(prior)
    }
}

fn check_hash(registry: &CategoryRegistry, found: &str) -> Result<(), ScorerError> {
    let expected = registry.hash();
    if expected != found {
        return Err(ScorerError::RegistryMismatch {
            expected,
            found: found.to_string(),
        });
    }
    Ok(())
}

/// Counts triplets per (subject class, predicate, object class) and every
/// unrelated ordered pair as one "no relation" observation.
pub fn fit_frequency_prior(dataset: &Dataset, alpha: f64) -> Result<FrequencyPrior, ScorerError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(ScorerError::Alpha(alpha));
    }
    let k = dataset.registry.num_objects();
    let r = dataset.registry.num_relations();
    let mut prior = FrequencyPrior {
        registry_hash: dataset.registry.hash(),
        n_objects: k,
        n_predicates: r,
        alpha,
        counts: vec![0.0; k * k * (r + 1)],
    };
    let mut pairs_seen = 0usize;
    for scene in &dataset.scenes {
        let labels = label_pairs(scene);
        let pos = scene.id_positions();
        for t in &scene.relations {
            let (s, o) = (scene.objects[pos[&t.subject]].category, scene.objects[pos[&t.object]].category);
            prior.counts[(s * k + o) * (r + 1) + t.predicate] += 1.0;
        }
        for (i, j) in labels.negatives() {
            let (s, o) = (scene.objects[i].category, scene.objects[j].category);
            prior.counts[(s * k + o) * (r + 1) + r] += 1.0;
        }
        pairs_seen += labels.len();
    }
    if pairs_seen == 0 {
        return Err(ScorerError::EmptyDataset);
    }
    Ok(prior)
}

/// Geometric part of a pair's feature vector.
pub fn geometry_features(g: &PairGeometry, image_w: f64, image_h: f64) -> [f64; GEOMETRY_FEATURES] {
    let diag = image_w.hypot(image_h);
    let mut f = [0.0; GEOMETRY_FEATURES];
    f[0] = g.center_distance / diag;
    f[1] = g.area_ratio.ln() / 4.0;
    f[2] = g.aspect_subject.ln() / 4.0;
    f[3] = g.aspect_object.ln() / 4.0;
    f[4] = g.pair_iou;
    f[5..].copy_from_slice(&g.normalized_coords);
    f
}

/// Full pair features: geometry, subject one-hot, object one-hot, bias.
pub fn pair_features(
    subject: (usize, &OrientedBox),
    object: (usize, &OrientedBox),
    n_objects: usize,
    image_w: f64,
    image_h: f64,
) -> Result<Vec<f64>, ScorerError> {
    let g = pair_geometry(subject.1, object.1, image_w, image_h)?;
    let mut x = vec![0.0; GEOMETRY_FEATURES + 2 * n_objects + 1];
    x[..GEOMETRY_FEATURES].copy_from_slice(&geometry_features(&g, image_w, image_h));
    x[GEOMETRY_FEATURES + subject.0] = 1.0;
    x[GEOMETRY_FEATURES + n_objects + object.0] = 1.0;
    *x.last_mut().expect("non-empty") = 1.0;
    Ok(x)
}

pub fn object_features(b: &OrientedBox, image_w: f64, image_h: f64) -> [f64; OBJECT_FEATURES] {
    let p = b.params();
    [
        p.w / image_w,
        p.h / image_h,
        (p.w / p.h).ln() / 4.0,
        b.area().sqrt() / (image_w * image_h).sqrt(),
        p.cx / image_w,
        p.cy / image_h,
        (2.0 * p.theta).cos(),
        (2.0 * p.theta).sin(),
        1.0,
    ]
}

/// Per-object logits over the object categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores(pub Vec<f64>);

impl ClassScores {
    /// Argmax class (lowest index on ties) and its softmax probability.
    pub fn best(&self) -> (usize, f64) {
        let p = softmax(&self.0);
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        (best, p[best])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub max_pos: usize,
    pub max_neg: usize,
    pub loss_weights: LossWeights,
}

impl LinearHyperparams {
    pub fn new(seed: u64) -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            seed,
            max_pos: DEFAULT_MAX_POS,
            max_neg: DEFAULT_MAX_NEG,
            loss_weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub relpn: f64,
    pub refine: f64,
    pub relation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    registry_hash: String,
    n_objects: usize,
    n_predicates: usize,
    /// `n_predicates x pair_dim`, row-major.
    relation_weights: Vec<f64>,
    /// `pair_dim`.
    pair_weights: Vec<f64>,
    /// `n_objects x OBJECT_FEATURES`, row-major.
    object_weights: Vec<f64>,
    pub hyperparams: LinearHyperparams,
    /// Objective before each update, then after the last one.
    pub loss_history: Vec<LossBreakdown>,
}

#[derive(Serialize, Deserialize)]
struct LinearFile {
    kind: String,
    #[serde(flatten)]
    scorer: LinearScorer,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearScorer {
    pub fn zeros(registry: &CategoryRegistry, hyperparams: LinearHyperparams) -> Self {
        let (k, r) = (registry.num_objects(), registry.num_relations());
        let d = GEOMETRY_FEATURES + 2 * k + 1;
        Self {
            registry_hash: registry.hash(),
            n_objects: k,
            n_predicates: r,
            relation_weights: vec![0.0; r * d],
            pair_weights: vec![0.0; d],
            object_weights: vec![0.0; k * OBJECT_FEATURES],
            hyperparams,
            loss_history: Vec::new(),
        }
    }

    pub fn pair_dim(&self) -> usize {
        GEOMETRY_FEATURES + 2 * self.n_objects + 1
    }

    pub fn n_params(&self) -> usize {
        self.relation_weights.len() + self.pair_weights.len() + self.object_weights.len()
    }

    /// All weights, predicate head first, then relatedness, then refinement.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.relation_weights.clone();
        v.extend_from_slice(&self.pair_weights);
        v.extend_from_slice(&self.object_weights);
        v
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        let (a, rest) = params.split_at(self.relation_weights.len());
        let (b, c) = rest.split_at(self.pair_weights.len());
        self.relation_weights.copy_from_slice(a);
        self.pair_weights.copy_from_slice(b);
        self.object_weights.copy_from_slice(c);
    }

    pub fn predicate_logits(&self, x: &[f64]) -> Vec<f64> {
        self.relation_weights.chunks(self.pair_dim()).map(|row| dot(row, x)).collect()
    }

    pub fn pair_logit(&self, x: &[f64]) -> f64 {
        dot(&self.pair_weights, x)
    }

    pub fn object_logits(&self, f: &[f64; OBJECT_FEATURES]) -> ClassScores {
        ClassScores(self.object_weights.chunks(OBJECT_FEATURES).map(|row| dot(row, f)).collect())
    }

    /// Weighted objective over a batch and its gradient in [`Self::params`] layout.
    pub fn objective(&self, batch: &TrainingBatch, weights: &LossWeights) -> Result<(LossBreakdown, Vec<f64>), ScorerError> {
        weights.check()?;
        let d = self.pair_dim();
        let mut g_rel = vec![0.0; self.relation_weights.len()];
        let mut g_pair = vec![0.0; d];
        let mut g_obj = vec![0.0; self.object_weights.len()];

        let logits: Vec<f64> = batch.pair_features.iter().map(|x| self.pair_logit(x)).collect();
        let targets: Vec<f64> = batch.pair_labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let relpn = bce_with_logits(&logits, &targets);
        for (x, g) in batch.pair_features.iter().zip(&relpn.grad) {
            for (acc, xi) in g_pair.iter_mut().zip(x) {
                *acc += weights.relpn * g * xi;
            }
        }

        let mut relation = 0.0;
        let n_trip = batch.triplets.len().max(1) as f64;
        for &(pi, label) in &batch.triplets {
            let x = &batch.pair_features[pi];
            let lg = ce_loss(&self.predicate_logits(x), label)?;
            relation += lg.loss / n_trip;
            for (c, gc) in lg.grad.iter().enumerate() {
                let scale = weights.relation * gc / n_trip;
                for (acc, xi) in g_rel[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *acc += scale * xi;
                }
            }
        }

        let mut refine = 0.0;
        let n_obj = batch.objects.len().max(1) as f64;
        for (f, label) in &batch.objects {
            let lg = ce_loss(&self.object_logits(f).0, *label)?;
            refine += lg.loss / n_obj;
            for (c, gc) in lg.grad.iter().enumerate() {
                let scale = weights.refine * gc / n_obj;
                for (acc, fi) in g_obj[c * OBJECT_FEATURES..(c + 1) * OBJECT_FEATURES].iter_mut().zip(f) {
                    *acc += scale * fi;
                }
            }
        }

        let total = total_loss(relpn.loss, refine, relation, weights)?;
        g_rel.extend(g_pair);
        g_rel.extend(g_obj);
        Ok((
            LossBreakdown {
                relpn: relpn.loss,
                refine,
                relation,
                total,
            },
            g_rel,
        ))
    }

    /// Fraction of batch triplets whose argmax predicate is the labelled one.
    pub fn relation_accuracy(&self, batch: &TrainingBatch) -> f64 {
        if batch.triplets.is_empty() {
            return 0.0;
        }
        let hits = batch
            .triplets
            .iter()
            .filter(|&&(pi, label)| {
                let l = self.predicate_logits(&batch.pair_features[pi]);
                rank_by_score(l.iter().copied())[0] == label
            })
            .count();
        hits as f64 / batch.triplets.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&LinearFile {
            kind: LINEAR_KIND.into(),
            scorer: self.clone(),
        })
        .expect("scorer serialization is infallible")
    }

    pub fn from_json(bytes: &[u8], registry: &CategoryRegistry) -> Result<Self, ScorerError> {
        let f: LinearFile = serde_json::from_slice(bytes)?;
        if f.kind != LINEAR_KIND {
            return Err(ScorerError::Hyperparams(format!("expected a {LINEAR_KIND} artifact, got {:?}", f.kind)));
        }
        check_hash(registry, &f.scorer.registry_hash)?;
        let s = f.scorer;
        let d = GEOMETRY_FEATURES + 2 * s.n_objects + 1;
        if s.relation_weights.len() != s.n_predicates * d
            || s.pair_weights.len() != d
            || s.object_weights.len() != s.n_objects * OBJECT_FEATURES
            || !s.params().iter().all(|w| w.is_finite())
        {
            return Err(ScorerError::Hyperparams("weight shapes disagree with registry".into()));
        }
        Ok(s)
    }
}

/// Precomputed features of one training pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingBatch {
    pub pair_features: Vec<Vec<f64>>,
    pub pair_labels: Vec<bool>,
    /// `(index into pair_features, predicate)` for every triplet on a sampled positive pair.
    pub triplets: Vec<(usize, usize)>,
    pub objects: Vec<([f64; OBJECT_FEATURES], usize)>,
}

fn image_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn add_scene(batch: &mut TrainingBatch, scene: &SceneAnnotation, n_objects: usize, max_pos: usize, max_neg: usize, seed: u64) -> Result<(), ScorerError> {
    let (w, h) = (scene.width as f64, scene.height as f64);
    let labels = label_pairs(scene);
    let sample = sample_pairs(&labels, max_pos, max_neg, seed);
    let pos = scene.id_positions();
    for (i, j) in sample.pairs() {
        let (a, b) = (&scene.objects[i], &scene.objects[j]);
        let pi = batch.pair_features.len();
        batch
            .pair_features
            .push(pair_features((a.category, &a.obb), (b.category, &b.obb), n_objects, w, h)?);
        let related = labels.get((i, j));
        batch.pair_labels.push(related);
        if related {
            for t in &scene.relations {
                if pos[&t.subject] == i && pos[&t.object] == j {
                    batch.triplets.push((pi, t.predicate));
                }
            }
        }
    }
    for o in &scene.objects {
        batch.objects.push((object_features(&o.obb, w, h), o.category));
    }
    Ok(())
}

/// Samples pairs per image (seeded per image from `seed`) and extracts features.
pub fn build_batch(dataset: &Dataset, max_pos: usize, max_neg: usize, seed: u64) -> Result<TrainingBatch, ScorerError> {
    let mut batch = TrainingBatch::default();
    let k = dataset.registry.num_objects();
    for (i, scene) in dataset.scenes.iter().enumerate() {
        add_scene(&mut batch, scene, k, max_pos, max_neg, image_seed(seed, i))?;
    }
    Ok(batch)
}

/// Full-batch gradient descent from zero weights.
pub fn train_linear(dataset: &Dataset, hp: &LinearHyperparams) -> Result<LinearScorer, ScorerError> {
    if !(hp.learning_rate.is_finite() && hp.learning_rate >= 0.0) {
        return Err(ScorerError::Hyperparams(format!("learning rate {}", hp.learning_rate)));
    }
    hp.loss_weights.check()?;
    let batch = build_batch(dataset, hp.max_pos, hp.max_neg, hp.seed)?;
    if batch.pair_features.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    let mut scorer = LinearScorer::zeros(&dataset.registry, hp.clone());
    let mut params = scorer.params();
    for epoch in 0..=hp.epochs {
        let (loss, grad) = scorer.objective(&batch, &hp.loss_weights)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ScorerError::Divergence { epoch, loss: loss.total });
        }
        scorer.loss_history.push(loss);
        if epoch == hp.epochs {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= hp.learning_rate * g;
        }
        scorer.set_params(&params);
    }
    Ok(scorer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    /// Keep only the `m` most related pairs; `None` keeps every pair.
    pub top_m_pairs: Option<usize>,
    pub graph_constraint: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            top_m_pairs: None,
            graph_constraint: true,
        }
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    (p / (1.0 - p)).ln()
}

/// Scored triplets for one image, sorted by descending composite score.
///
/// Per ordered pair the relatedness probability is the normalised product of
/// the prior's relation mass and the linear relatedness head, and the
/// predicate distribution is the normalised product of the prior's
/// conditional predicate distribution and the predicate head's softmax. A
/// triplet's predicate probability is relatedness times conditional predicate
/// probability; its composite score multiplies in both object scores.
pub fn predict_triplets(
    objects: &[PredictedObject],
    image_w: f64,
    image_h: f64,
    prior: &FrequencyPrior,
    linear: Option<&LinearScorer>,
    cfg: &PredictConfig,
) -> Result<Vec<PredictedTriplet>, ScorerError> {
    let r = prior.n_predicates;
    let n = objects.len();
    let pairs = enumerate_pairs(n);
    let mut pair_logits = Vec::with_capacity(pairs.len());
    let mut conditionals = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let (a, b) = (&objects[i], &objects[j]);
        let d = prior.distribution(a.category, b.category);
        let rel_mass: f64 = d[..r].iter().sum();
        let mut cond: Vec<f64> = d[..r].to_vec();
        let mut z = logit(rel_mass);
        if let Some(lin) = linear {
            let x = pair_features((a.category, &a.obb), (b.category, &b.obb), prior.n_objects, image_w, image_h)?;
            z += lin.pair_logit(&x);
            for (c, q) in cond.iter_mut().zip(softmax(&lin.predicate_logits(&x))) {
                *c *= q;
            }
        }
        let s: f64 = cond.iter().sum();
        if s > 0.0 {
            cond.iter_mut().for_each(|c| *c /= s);
        } else {
            cond = vec![1.0 / r as f64; r];
        }
        pair_logits.push(z);
        conditionals.push(cond);
    }
    let kept: Vec<usize> = match cfg.top_m_pairs {
        None => (0..pairs.len()).collect(),
        Some(m) => {
            let scores = PairScores::new(n, pair_logits.clone()).expect("finite pair logits");
            let top = select_top_pairs(&scores, m);
            let mut idx: Vec<usize> = top.iter().map(|&p| crate::pairing::pair_index(n, p)).collect();
            idx.sort_unstable();
            idx
        }
    };
    let end = |o: &PredictedObject| TripletEnd {
        id: o.id,
        detection: Detection {
            obb: o.obb,
            category: o.category,
            score: o.score,
        },
    };
    let mut out = Vec::new();
    for k in kept {
        let (i, j) = pairs[k];
        let p_rel = sigmoid(pair_logits[k]);
        let cond = &conditionals[k];
        let predicates: Vec<usize> = if cfg.graph_constraint {
            vec![rank_by_score(cond.iter().copied())[0]]
        } else {
            (0..r).collect()
        };
        for c in predicates {
            out.push(PredictedTriplet::new(end(&objects[i]), c, p_rel * cond[c], end(&objects[j])));
        }
    }
    let order = rank_by_score(out.iter().map(|t| t.score));
    Ok(order.into_iter().map(|i| out[i]).collect())
}

/// Argmax labels and confidences from the refinement head.
pub fn refine_labels(objects: &[OrientedBox], image_w: f64, image_h: f64, linear: &LinearScorer) -> Vec<(usize, f64)> {
    objects
        .iter()
        .map(|b| linear.object_logits(&object_features(b, image_w, image_h)).best())
        .collect()
}
