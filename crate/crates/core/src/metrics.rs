//! Detection and scene-graph evaluation.
//!
//! Detection: greedy score-ordered matching per image and class, all-point
//! interpolated AP per class, and mAP over classes that have ground truth.
//! Scene graphs: triplet matching for PredCls, SGCLS and SGDET, Recall@K and
//! Mean Recall@K. Per-image results are reduced with plain count sums, so
//! aggregation order never changes a report.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{CategoryRegistry, Dataset, PredictionSet};
use crate::geometry::{rotated_iou, OrientedBox};
use crate::ingest::{rank_by_score, Detection};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_K_VALUES: [usize; 4] = [20, 50, 100, 500];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} is undefined: zero denominator")]
    ZeroDenominator(&'static str),
    #[error("no ground truth to evaluate against")]
    NoGroundTruth,
    #[error("invalid K list: {0}")]
    KValues(String),
    #[error("IoU threshold {0} outside [0, 1]")]
    IouThreshold(f64),
    #[error("prediction registry does not match the ground-truth registry")]
    RegistryMismatch,
}

/// `tp / (tp + fp)`.
pub fn precision(tp: usize, fp: usize) -> Result<f64, MetricsError> {
    if tp + fp == 0 {
        return Err(MetricsError::ZeroDenominator("precision"));
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

/// `tp / (tp + fn)`.
pub fn recall(tp: usize, fn_: usize) -> Result<f64, MetricsError> {
    if tp + fn_ == 0 {
        return Err(MetricsError::ZeroDenominator("recall"));
    }
    Ok(tp as f64 / (tp + fn_) as f64)
}

/// One prediction in ranking order and the ground truth it consumed, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub pred: usize,
    pub gt: Option<usize>,
}

impl RankedMatch {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

pub fn flags(matches: &[RankedMatch]) -> Vec<bool> {
    matches.iter().map(RankedMatch::is_tp).collect()
}

/// Greedy matching in descending score order: each prediction takes the
/// unmatched ground truth of highest IoU (lowest index on ties) and is a true
/// positive iff that IoU reaches the threshold.
pub fn match_detections(preds: &[Detection], gts: &[OrientedBox], iou_threshold: f64) -> Vec<RankedMatch> {
    let mut taken = vec![false; gts.len()];
    rank_by_score(preds.iter().map(|d| d.score))
        .into_iter()
        .map(|pi| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let iou = rotated_iou(&preds[pi].obb, g);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            let gt = match best {
                Some((gi, iou)) if iou >= iou_threshold => {
                    taken[gi] = true;
                    Some(gi)
                }
                _ => None,
            };
            RankedMatch { pred: pi, gt }
        })
        .collect()
}

/// All-point interpolated area under the precision-recall curve of a ranked
/// TP/FP sequence against `n_gt` ground-truth instances.
pub fn average_precision(flags: &[bool], n_gt: usize) -> Result<f64, MetricsError> {
    if n_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut prec = Vec::with_capacity(flags.len());
    let mut tp_at = Vec::new();
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
            tp_at.push(i);
        }
        prec.push(tp as f64 / (i + 1) as f64);
    }
    // precision envelope, non-increasing from the right
    for i in (0..prec.len().saturating_sub(1)).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    let ap: f64 = tp_at.iter().map(|&i| prec[i]).sum::<f64>() / n_gt as f64;
    Ok(ap.clamp(0.0, 1.0))
}

/// Mean over classes with ground truth (`Some`). With `include_empty`,
/// classes without ground truth count as zero instead of being skipped.
pub fn mean_ap(per_class: &[Option<f64>], include_empty: bool) -> Option<f64> {
    mean_of(per_class, include_empty)
}

fn mean_of(values: &[Option<f64>], include_empty: bool) -> Option<f64> {
    let picked: Vec<f64> = values
        .iter()
        .filter_map(|v| match v {
            Some(x) => Some(*x),
            None if include_empty => Some(0.0),
            None => None,
        })
        .collect();
    if picked.is_empty() {
        None
    } else {
        Some(picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SggTask {
    PredCls,
    SgCls,
    SgDet,
}

impl std::str::FromStr for SggTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "predcls" | "precls" => Ok(SggTask::PredCls),
            "sgcls" => Ok(SggTask::SgCls),
            "sgdet" => Ok(SggTask::SgDet),
            other => Err(format!("unknown task {other:?} (expected predcls, sgcls or sgdet)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub k_values: Vec<usize>,
    pub graph_constraint: bool,
    pub task: SggTask,
    /// Count predicates without ground truth as zero recall in mR@K.
    pub include_empty: bool,
}

impl MatchConfig {
    pub fn new(task: SggTask) -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            k_values: DEFAULT_K_VALUES.to_vec(),
            graph_constraint: true,
            task,
            include_empty: false,
        }
    }

    pub fn check(&self) -> Result<(), MetricsError> {
        check_k_values(&self.k_values)?;
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(MetricsError::IouThreshold(self.iou_threshold));
        }
        Ok(())
    }
}

pub fn check_k_values(ks: &[usize]) -> Result<(), MetricsError> {
    if ks.is_empty() {
        return Err(MetricsError::KValues("empty".into()));
    }
    if ks[0] == 0 {
        return Err(MetricsError::KValues("K must be positive".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::KValues(format!("{ks:?} is not strictly increasing")));
    }
    Ok(())
}

/// Parses `"20,50,100"` into a validated K list.
pub fn parse_k_values(text: &str) -> Result<Vec<usize>, MetricsError> {
    let ks = text
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| MetricsError::KValues(format!("{t:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_k_values(&ks)?;
    Ok(ks)
}

/// End of a predicted triplet: a scored detection plus the id it carries in
/// the prediction file (equal to the ground-truth id in PredCls and SGCLS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletEnd {
    pub id: u32,
    pub detection: Detection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedTriplet {
    pub subject: TripletEnd,
    pub predicate: usize,
    pub object: TripletEnd,
    pub score: f64,
}

impl PredictedTriplet {
    /// Composite score `subject.score * predicate_prob * object.score`.
    pub fn new(subject: TripletEnd, predicate: usize, predicate_prob: f64, object: TripletEnd) -> Self {
        let score = subject.detection.score * predicate_prob * object.detection.score;
        Self {
            subject,
            predicate,
            object,
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtEnd {
    pub id: u32,
    pub category: usize,
    pub obb: OrientedBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtTriplet {
    pub subject: GtEnd,
    pub predicate: usize,
    pub object: GtEnd,
}

/// How well a prediction's boxes fit a ground-truth triplet, or `None` when
/// they do not match under the task's rule.
fn localization(p: &PredictedTriplet, g: &GtTriplet, cfg: &MatchConfig) -> Option<f64> {
    if p.predicate != g.predicate
        || p.subject.detection.category != g.subject.category
        || p.object.detection.category != g.object.category
    {
        return None;
    }
    match cfg.task {
        SggTask::PredCls | SggTask::SgCls => {
            (p.subject.id == g.subject.id && p.object.id == g.object.id).then_some(1.0)
        }
        SggTask::SgDet => {
            let s = rotated_iou(&p.subject.detection.obb, &g.subject.obb);
            let o = rotated_iou(&p.object.detection.obb, &g.object.obb);
            (s >= cfg.iou_threshold && o >= cfg.iou_threshold).then_some(s.min(o))
        }
    }
}

/// Ranks predictions by descending score (stable), applies the graph
/// constraint, then greedily assigns each prediction the unmatched
/// ground-truth triplet it fits best. Dropped predictions do not appear.
pub fn match_triplets(preds: &[PredictedTriplet], gts: &[GtTriplet], cfg: &MatchConfig) -> Vec<RankedMatch> {
    let mut seen_pairs = HashSet::new();
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::new();
    for pi in rank_by_score(preds.iter().map(|p| p.score)) {
        let p = &preds[pi];
        if cfg.graph_constraint && !seen_pairs.insert((p.subject.id, p.object.id)) {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            if let Some(q) = localization(p, g, cfg) {
                if best.is_none_or(|(_, b)| q > b) {
                    best = Some((gi, q));
                }
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
        }
        out.push(RankedMatch {
            pred: pi,
            gt: best.map(|(gi, _)| gi),
        });
    }
    out
}

/// Fraction of the `n_gt` ground truths matched within the first `k` ranks.
pub fn recall_at_k(flags: &[bool], n_gt: usize, k: usize) -> Result<f64, MetricsError> {
    if n_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let hits = flags.iter().take(k).filter(|&&f| f).count();
    Ok(hits as f64 / n_gt as f64)
}

/// Mean of per-predicate Recall@K over predicates that have ground truth.
pub fn mean_recall_at_k(per_predicate: &[Option<f64>], include_empty: bool) -> Option<f64> {
    mean_of(per_predicate, include_empty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub rank: usize,
    pub prediction: usize,
    pub ground_truth: usize,
}

/// Matched predictions of one image: indices into the image's prediction
/// list (objects for detection, relations for scene graphs) and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageProvenance {
    pub image_id: String,
    pub matches: Vec<MatchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub iou_threshold: f64,
    pub include_empty: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            include_empty: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDetectionStats {
    pub category: usize,
    pub name: String,
    pub n_gt: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub iou_threshold: f64,
    pub include_empty: bool,
    pub per_class: Vec<ClassDetectionStats>,
    pub map: Option<f64>,
    pub provenance: Vec<ImageProvenance>,
}

fn check_registry(a: &CategoryRegistry, b: &CategoryRegistry) -> Result<(), MetricsError> {
    if a.object_names() != b.object_names() || a.relation_names() != b.relation_names() {
        return Err(MetricsError::RegistryMismatch);
    }
    Ok(())
}

pub fn evaluate_detections(gt: &Dataset, preds: &PredictionSet, cfg: &DetectionConfig) -> Result<DetectionReport, MetricsError> {
    check_registry(&gt.registry, &preds.registry)?;
    if !(0.0..=1.0).contains(&cfg.iou_threshold) {
        return Err(MetricsError::IouThreshold(cfg.iou_threshold));
    }
    let n_classes = gt.registry.num_objects();
    let by_id: HashMap<&str, usize> = preds.scenes.iter().enumerate().map(|(i, s)| (s.image_id.as_str(), i)).collect();
    // per class: (score, is_tp) over every image, in image order then rank order
    let mut ranked: Vec<Vec<(f64, bool)>> = vec![Vec::new(); n_classes];
    let mut n_gt = vec![0usize; n_classes];
    let mut provenance = Vec::new();
    for scene in &gt.scenes {
        let pred_scene = by_id.get(scene.image_id.as_str()).map(|&i| &preds.scenes[i]);
        let mut records = Vec::new();
        for c in 0..n_classes {
            let gt_idx: Vec<usize> = (0..scene.objects.len()).filter(|&i| scene.objects[i].category == c).collect();
            n_gt[c] += gt_idx.len();
            let Some(ps) = pred_scene else { continue };
            let pred_idx: Vec<usize> = (0..ps.objects.len()).filter(|&i| ps.objects[i].category == c).collect();
            if pred_idx.is_empty() {
                continue;
            }
            let dets: Vec<Detection> = pred_idx
                .iter()
                .map(|&i| Detection {
                    obb: ps.objects[i].obb,
                    category: c,
                    score: ps.objects[i].score,
                })
                .collect();
            let boxes: Vec<OrientedBox> = gt_idx.iter().map(|&i| scene.objects[i].obb).collect();
            for (rank, m) in match_detections(&dets, &boxes, cfg.iou_threshold).into_iter().enumerate() {
                ranked[c].push((dets[m.pred].score, m.is_tp()));
                if let Some(g) = m.gt {
                    records.push(MatchRecord {
                        rank,
                        prediction: pred_idx[m.pred],
                        ground_truth: gt_idx[g],
                    });
                }
            }
        }
        records.sort_by_key(|r| r.prediction);
        provenance.push(ImageProvenance {
            image_id: scene.image_id.clone(),
            matches: records,
        });
    }
    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let order = rank_by_score(ranked[c].iter().map(|r| r.0));
        let f: Vec<bool> = order.iter().map(|&i| ranked[c][i].1).collect();
        let tp = f.iter().filter(|&&x| x).count();
        per_class.push(ClassDetectionStats {
            category: c,
            name: gt.registry.object_name(c).unwrap_or_default().to_string(),
            n_gt: n_gt[c],
            tp,
            fp: f.len() - tp,
            fn_: n_gt[c] - tp,
            ap: if n_gt[c] > 0 { Some(average_precision(&f, n_gt[c])?) } else { None },
        });
    }
    let aps: Vec<Option<f64>> = per_class.iter().map(|c| c.ap).collect();
    Ok(DetectionReport {
        iou_threshold: cfg.iou_threshold,
        include_empty: cfg.include_empty,
        map: mean_ap(&aps, cfg.include_empty),
        per_class,
        provenance,
    })
}

impl DetectionReport {
    /// `category,ap` rows for classes with ground truth, then `mean,<mAP>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,ap\n");
        for c in &self.per_class {
            if let Some(ap) = c.ap {
                let _ = writeln!(out, "{},{}", csv_field(&c.name), ap);
            }
        }
        let _ = writeln!(out, "mean,{}", fmt_opt(self.map));
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRecall {
    pub predicate: usize,
    pub name: String,
    pub n_gt: usize,
    /// Matched ground truths within the top K, aligned with `k_values`.
    pub matched_at_k: Vec<usize>,
    pub recall_at_k: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SggReport {
    pub config: MatchConfig,
    pub n_images: usize,
    pub n_gt: usize,
    pub recall_at_k: Vec<f64>,
    pub mean_recall_at_k: Vec<Option<f64>>,
    pub per_predicate: Vec<PredicateRecall>,
    pub provenance: Vec<ImageProvenance>,
}

/// Per-image counts; merging two tallies is elementwise addition.
#[derive(Debug, Clone, PartialEq)]
pub struct SggTally {
    pub n_gt: Vec<usize>,
    pub matched_at_k: Vec<Vec<usize>>,
}

impl SggTally {
    pub fn zeros(n_predicates: usize, n_k: usize) -> Self {
        Self {
            n_gt: vec![0; n_predicates],
            matched_at_k: vec![vec![0; n_predicates]; n_k],
        }
    }

    pub fn merge(mut self, other: &SggTally) -> Self {
        for (a, b) in self.n_gt.iter_mut().zip(&other.n_gt) {
            *a += b;
        }
        for (row, orow) in self.matched_at_k.iter_mut().zip(&other.matched_at_k) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a += b;
            }
        }
        self
    }
}

/// Tallies one image given ranked matches over `gts`.
pub fn tally_image(matches: &[RankedMatch], gts: &[GtTriplet], n_predicates: usize, k_values: &[usize]) -> SggTally {
    let mut t = SggTally::zeros(n_predicates, k_values.len());
    for g in gts {
        t.n_gt[g.predicate] += 1;
    }
    for (ki, &k) in k_values.iter().enumerate() {
        for m in matches.iter().take(k) {
            if let Some(gi) = m.gt {
                t.matched_at_k[ki][gts[gi].predicate] += 1;
            }
        }
    }
    t
}

fn gt_triplets(scene: &crate::datamodel::SceneAnnotation) -> Vec<GtTriplet> {
    let pos = scene.id_positions();
    let end = |id: u32| {
        let o = &scene.objects[pos[&id]];
        GtEnd {
            id,
            category: o.category,
            obb: o.obb,
        }
    };
    scene
        .relations
        .iter()
        .map(|r| GtTriplet {
            subject: end(r.subject),
            predicate: r.predicate,
            object: end(r.object),
        })
        .collect()
}

fn predicted_triplets(scene: &crate::datamodel::PredictedScene) -> Vec<PredictedTriplet> {
    let pos: HashMap<u32, usize> = scene.objects.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
    let end = |id: u32| {
        let o = &scene.objects[pos[&id]];
        TripletEnd {
            id,
            detection: Detection {
                obb: o.obb,
                category: o.category,
                score: o.score,
            },
        }
    };
    scene
        .relations
        .iter()
        .map(|r| PredictedTriplet {
            subject: end(r.subject),
            predicate: r.predicate,
            object: end(r.object),
            score: r.score,
        })
        .collect()
}

/// Scene-graph evaluation of a prediction file. Relation scores in the file
/// are taken as the composite ranking scores.
pub fn evaluate_sgg(gt: &Dataset, preds: &PredictionSet, cfg: &MatchConfig) -> Result<SggReport, MetricsError> {
    check_registry(&gt.registry, &preds.registry)?;
    cfg.check()?;
    let n_pred = gt.registry.num_relations();
    let by_id: HashMap<&str, usize> = preds.scenes.iter().enumerate().map(|(i, s)| (s.image_id.as_str(), i)).collect();
    let mut total = SggTally::zeros(n_pred, cfg.k_values.len());
    let mut provenance = Vec::new();
    for scene in &gt.scenes {
        let gts = gt_triplets(scene);
        let (matches, _) = match by_id.get(scene.image_id.as_str()) {
            Some(&i) => {
                let p = predicted_triplets(&preds.scenes[i]);
                (match_triplets(&p, &gts, cfg), p.len())
            }
            None => (Vec::new(), 0),
        };
        total = total.merge(&tally_image(&matches, &gts, n_pred, &cfg.k_values));
        provenance.push(ImageProvenance {
            image_id: scene.image_id.clone(),
            matches: matches
                .iter()
                .enumerate()
                .filter_map(|(rank, m)| {
                    m.gt.map(|g| MatchRecord {
                        rank,
                        prediction: m.pred,
                        ground_truth: g,
                    })
                })
                .collect(),
        });
    }
    let n_gt: usize = total.n_gt.iter().sum();
    if n_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let per_predicate: Vec<PredicateRecall> = (0..n_pred)
        .map(|p| PredicateRecall {
            predicate: p,
            name: gt.registry.relation_name(p).unwrap_or_default().to_string(),
            n_gt: total.n_gt[p],
            matched_at_k: total.matched_at_k.iter().map(|row| row[p]).collect(),
            recall_at_k: total
                .matched_at_k
                .iter()
                .map(|row| (total.n_gt[p] > 0).then(|| row[p] as f64 / total.n_gt[p] as f64))
                .collect(),
        })
        .collect();
    let recall_at_k = total
        .matched_at_k
        .iter()
        .map(|row| row.iter().sum::<usize>() as f64 / n_gt as f64)
        .collect();
    let mean_recall_at_k = (0..cfg.k_values.len())
        .map(|ki| {
            let per: Vec<Option<f64>> = per_predicate.iter().map(|p| p.recall_at_k[ki]).collect();
            mean_recall_at_k(&per, cfg.include_empty)
        })
        .collect();
    Ok(SggReport {
        config: cfg.clone(),
        n_images: gt.scenes.len(),
        n_gt,
        recall_at_k,
        mean_recall_at_k,
        per_predicate,
        provenance,
    })
}

impl SggReport {
    /// `predicate,r@K...` rows for predicates with ground truth, then the mean row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("predicate");
        for k in &self.config.k_values {
            let _ = write!(out, ",r@{k}");
        }
        out.push('\n');
        for p in self.per_predicate.iter().filter(|p| p.n_gt > 0) {
            out.push_str(&csv_field(&p.name));
            for r in &p.recall_at_k {
                let _ = write!(out, ",{}", fmt_opt(*r));
            }
            out.push('\n');
        }
        out.push_str("mean");
        for m in &self.mean_recall_at_k {
            let _ = write!(out, ",{}", fmt_opt(*m));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::datamodel::{ObjectInstance, PredictedObject, PredictedScene, RelationTriplet, SceneAnnotation, ScoredRelation, Split};
    use crate::geometry::BoxParams;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> OrientedBox {
        OrientedBox::from_params(BoxParams { cx, cy, w, h, theta: 0.0 }).unwrap()
    }

    fn det(obb: OrientedBox, score: f64) -> Detection {
        Detection { obb, category: 0, score }
    }

    #[test]
    fn precision_recall_direct() {
        assert_eq!(precision(3, 1), Ok(0.75));
        assert_eq!(precision(3, 0), Ok(1.0));
        assert_eq!(precision(0, 4), Ok(0.0));
        assert!(precision(0, 0).is_err());
        assert_eq!(recall(1, 1), Ok(0.5));
        assert_eq!(recall(2, 0), Ok(1.0));
        assert_eq!(recall(0, 2), Ok(0.0));
        assert!(recall(0, 0).is_err());
    }

    #[test]
    fn detection_matching_cases() {
        let g = bx(10.0, 10.0, 4.0, 4.0);
        assert_eq!(flags(&match_detections(&[det(g, 0.9)], &[g], 0.5)), vec![true]);
        let m = match_detections(&[det(g, 0.3), det(g, 0.9)], &[g], 0.5);
        assert_eq!(m[0].pred, 1);
        assert_eq!(flags(&m), vec![true, false]);
        // IoU 0.6 with a 4x4 box shifted by 1: 12 / 20
        let shifted = bx(11.0, 10.0, 4.0, 4.0);
        assert_eq!(flags(&match_detections(&[det(shifted, 1.0)], &[g], 0.5)), vec![true]);
        assert_eq!(flags(&match_detections(&[det(shifted, 1.0)], &[g], 0.7)), vec![false]);
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[true], 1), Ok(1.0));
        assert_eq!(average_precision(&[false, true], 1), Ok(0.5));
        assert_eq!(average_precision(&[true, false, true], 2), Ok((1.0 + 2.0 / 3.0) / 2.0));
        assert_eq!(average_precision(&[], 3), Ok(0.0));
        assert!(average_precision(&[true], 0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let len = rng.random_range(0..20);
            let f: Vec<bool> = (0..len).map(|_| rng.random_bool(0.5)).collect();
            let n_gt = f.iter().filter(|&&x| x).count().max(1) + rng.random_range(0..3);
            let mut g = f.clone();
            g.push(false);
            assert!(average_precision(&g, n_gt).unwrap() <= average_precision(&f, n_gt).unwrap());
        }
    }

    #[test]
    fn mean_cases() {
        assert_eq!(mean_ap(&[Some(0.5), Some(1.0)], false), Some(0.75));
        assert_eq!(mean_ap(&[Some(0.4)], false), Some(0.4));
        assert_eq!(mean_ap(&[Some(0.5), None, Some(1.0)], false), Some(0.75));
        assert_eq!(mean_ap(&[Some(0.5), None, Some(1.0)], true), Some(0.5));
        assert_eq!(mean_ap(&[None], false), None);
        assert_eq!(mean_recall_at_k(&[Some(1.0), Some(0.5)], false), Some(0.75));
    }

    #[test]
    fn k_list_parsing() {
        assert_eq!(parse_k_values("20,50,100,500"), Ok(vec![20, 50, 100, 500]));
        assert!(parse_k_values("50,20").is_err());
        assert!(parse_k_values("20,20").is_err());
        assert!(parse_k_values("0,5").is_err());
        assert!(parse_k_values("a").is_err());
    }

    fn end(id: u32, category: usize, obb: OrientedBox, score: f64) -> TripletEnd {
        TripletEnd { id, detection: Detection { obb, category, score } }
    }

    fn gt_end(id: u32, category: usize, obb: OrientedBox) -> GtEnd {
        GtEnd { id, category, obb }
    }

    #[test]
    fn triplet_matching_cases() {
        let (a, b) = (bx(10.0, 10.0, 4.0, 4.0), bx(30.0, 10.0, 4.0, 4.0));
        let gt = [GtTriplet { subject: gt_end(0, 1, a), predicate: 3, object: gt_end(1, 2, b) }];
        let pred = PredictedTriplet::new(end(0, 1, a, 1.0), 3, 1.0, end(1, 2, b, 1.0));
        let cfg = MatchConfig::new(SggTask::PredCls);
        assert_eq!(flags(&match_triplets(&[pred], &gt, &cfg)), vec![true]);

        let mut wrong = pred;
        wrong.predicate = 4;
        assert_eq!(flags(&match_triplets(&[wrong], &gt, &cfg)), vec![false]);

        // SGDET: subject box shifted to IoU 0.4 (4x4 shifted by 1.714..)
        let shift = 4.0 - 2.0 * 4.0 * 0.4 / 1.4;
        let moved = bx(10.0 + shift, 10.0, 4.0, 4.0);
        assert!((rotated_iou(&moved, &a) - 0.4).abs() < 1e-9);
        let det_pred = PredictedTriplet::new(end(7, 1, moved, 0.9), 3, 0.8, end(8, 2, b, 0.9));
        let sgdet = MatchConfig::new(SggTask::SgDet);
        assert_eq!(flags(&match_triplets(&[det_pred], &gt, &sgdet)), vec![false]);
        let close = PredictedTriplet::new(end(7, 1, bx(10.5, 10.0, 4.0, 4.0), 0.9), 3, 0.8, end(8, 2, b, 0.9));
        assert_eq!(flags(&match_triplets(&[close], &gt, &sgdet)), vec![true]);
    }

    #[test]
    fn graph_constraint_keeps_best_predicate_per_pair() {
        let (a, b) = (bx(10.0, 10.0, 4.0, 4.0), bx(30.0, 10.0, 4.0, 4.0));
        let gt = [GtTriplet { subject: gt_end(0, 0, a), predicate: 2, object: gt_end(1, 0, b) }];
        let preds = [
            PredictedTriplet::new(end(0, 0, a, 1.0), 1, 0.6, end(1, 0, b, 1.0)),
            PredictedTriplet::new(end(0, 0, a, 1.0), 2, 0.4, end(1, 0, b, 1.0)),
        ];
        let mut cfg = MatchConfig::new(SggTask::PredCls);
        let m = match_triplets(&preds, &gt, &cfg);
        assert_eq!(m.len(), 1);
        assert_eq!(flags(&m), vec![false]);
        cfg.graph_constraint = false;
        assert_eq!(flags(&match_triplets(&preds, &gt, &cfg)), vec![false, true]);
    }

    #[test]
    fn recall_at_k_cases() {
        assert_eq!(recall_at_k(&[true, true, false], 2, 20), Ok(1.0));
        assert_eq!(recall_at_k(&[false, true, true], 4, 2), Ok(0.25));
        assert_eq!(recall_at_k(&[false, true], 2, 100), recall(1, 1));
        assert!(recall_at_k(&[], 0, 5).is_err());
    }

    fn tiny_registry() -> CategoryRegistry {
        CategoryRegistry::from_names(vec!["a".into(), "b".into()], vec!["p".into(), "q".into(), "r".into()]).unwrap()
    }

    #[test]
    fn long_tail_depresses_mean_recall_only() {
        // 100 triplets of predicate p, one of predicate q; the q one is missed
        let registry = tiny_registry();
        let mut objects = Vec::new();
        let mut relations = Vec::new();
        for i in 0..102u32 {
            objects.push(ObjectInstance { id: i, category: 0, obb: bx(10.0 * i as f64 + 5.0, 5.0, 4.0, 4.0), truncated: false });
        }
        for i in 0..100u32 {
            relations.push(RelationTriplet { subject: i, predicate: 0, object: i + 1 });
        }
        relations.push(RelationTriplet { subject: 101, predicate: 1, object: 0 });
        let scene = SceneAnnotation { image_id: "x".into(), width: 2000, height: 20, objects: objects.clone(), relations: relations.clone() };
        let gt = Dataset { registry: registry.clone(), split: Split::Test, scenes: vec![scene] };
        let pred_objects: Vec<PredictedObject> = objects
            .iter()
            .map(|o| PredictedObject { id: o.id, category: o.category, obb: o.obb, truncated: false, score: 1.0 })
            .collect();
        let mut pred_rel: Vec<ScoredRelation> = relations[..100]
            .iter()
            .map(|r| ScoredRelation { subject: r.subject, predicate: r.predicate, object: r.object, score: 0.9 })
            .collect();
        pred_rel.push(ScoredRelation { subject: 101, predicate: 2, object: 0, score: 0.9 });
        let preds = PredictionSet {
            registry,
            split: Split::Test,
            scenes: vec![PredictedScene { image_id: "x".into(), width: 2000, height: 20, objects: pred_objects, relations: pred_rel }],
        };
        let mut cfg = MatchConfig::new(SggTask::PredCls);
        cfg.k_values = vec![500];
        let r = evaluate_sgg(&gt, &preds, &cfg).unwrap();
        assert!((r.recall_at_k[0] - 100.0 / 101.0).abs() < 1e-12);
        assert_eq!(r.mean_recall_at_k[0], Some(0.5));
        assert_eq!(r.to_csv(), "predicate,r@500\np,1\nq,0\nmean,0.5\n");
        cfg.include_empty = true;
        let r = evaluate_sgg(&gt, &preds, &cfg).unwrap();
        assert!((r.mean_recall_at_k[0].unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn detection_evaluation_excludes_empty_classes() {
        let registry = tiny_registry();
        let g = bx(10.0, 10.0, 4.0, 4.0);
        let scene = SceneAnnotation {
            image_id: "x".into(),
            width: 100,
            height: 100,
            objects: vec![ObjectInstance { id: 0, category: 0, obb: g, truncated: false }],
            relations: vec![],
        };
        let gt = Dataset { registry: registry.clone(), split: Split::Test, scenes: vec![scene] };
        let preds = PredictionSet {
            registry,
            split: Split::Test,
            scenes: vec![PredictedScene {
                image_id: "x".into(),
                width: 100,
                height: 100,
                objects: vec![
                    PredictedObject { id: 0, category: 0, obb: g, truncated: false, score: 0.4 },
                    PredictedObject { id: 1, category: 0, obb: bx(50.0, 50.0, 4.0, 4.0), truncated: false, score: 0.9 },
                    PredictedObject { id: 2, category: 1, obb: g, truncated: false, score: 0.9 },
                ],
                relations: vec![],
            }],
        };
        let r = evaluate_detections(&gt, &preds, &DetectionConfig::default()).unwrap();
        assert_eq!(r.per_class[0].ap, Some(0.5));
        assert_eq!((r.per_class[0].tp, r.per_class[0].fp, r.per_class[0].fn_), (1, 1, 0));
        assert_eq!(r.per_class[1].ap, None);
        assert_eq!(r.map, Some(0.5));
        assert_eq!(r.to_csv(), "category,ap\na,0.5\nmean,0.5\n");
        assert_eq!(r.provenance[0].matches, vec![MatchRecord { rank: 1, prediction: 0, ground_truth: 0 }]);
        let incl = evaluate_detections(&gt, &preds, &DetectionConfig { include_empty: true, ..Default::default() }).unwrap();
        assert_eq!(incl.map, Some(0.25));
    }

    #[test]
    fn tally_merge_is_order_independent() {
        let a = SggTally { n_gt: vec![1, 2], matched_at_k: vec![vec![1, 0], vec![1, 2]] };
        let b = SggTally { n_gt: vec![3, 0], matched_at_k: vec![vec![2, 0], vec![3, 0]] };
        let z = SggTally::zeros(2, 2);
        assert_eq!(z.clone().merge(&a).merge(&b), z.merge(&b).merge(&a));
    }
}
