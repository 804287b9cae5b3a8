//! Ordered object-pair enumeration, relatedness labels, capped sampling,
//! top-M pair selection and the binary cross-entropy relatedness loss.
//!
//! Pairs are positions `(i, j)` into a scene's object list with `i != j`;
//! relatedness is direction-sensitive (subject `i`, object `j`).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::SceneAnnotation;
use crate::ingest::rank_by_score;

pub const DEFAULT_MAX_POS: usize = 64;
pub const DEFAULT_MAX_NEG: usize = 192;

pub type Pair = (usize, usize);

/// All ordered pairs `(i, j)`, `i != j`, in lexicographic order.
pub fn enumerate_pairs(n: usize) -> Vec<Pair> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

/// Position of `(i, j)` in [`enumerate_pairs`] order.
pub fn pair_index(n: usize, (i, j): Pair) -> usize {
    debug_assert!(i != j && i < n && j < n);
    i * (n - 1) + if j > i { j - 1 } else { j }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabelMatrix {
    n: usize,
    /// One entry per enumerated pair.
    labels: Vec<bool>,
}

impl PairLabelMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            labels: vec![false; n * n.saturating_sub(1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, pair: Pair) -> bool {
        self.labels[pair_index(self.n, pair)]
    }

    pub fn set(&mut self, pair: Pair, value: bool) {
        let k = pair_index(self.n, pair);
        self.labels[k] = value;
    }

    /// Labels in enumeration order.
    pub fn as_slice(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> Vec<Pair> {
        enumerate_pairs(self.n).into_iter().filter(|&p| self.get(p)).collect()
    }

    pub fn negatives(&self) -> Vec<Pair> {
        enumerate_pairs(self.n).into_iter().filter(|&p| !self.get(p)).collect()
    }
}

/// Relatedness of every ordered pair; several predicates on one pair collapse to one.
pub fn label_pairs(scene: &SceneAnnotation) -> PairLabelMatrix {
    let pos = scene.id_positions();
    let mut m = PairLabelMatrix::new(scene.objects.len());
    for r in &scene.relations {
        if let (Some(&i), Some(&j)) = (pos.get(&r.subject), pos.get(&r.object)) {
            if i != j {
                m.set((i, j), true);
            }
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairSample {
    pub positives: Vec<Pair>,
    pub negatives: Vec<Pair>,
}

impl PairSample {
    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.positives.iter().chain(&self.negatives).copied()
    }
}

fn sample_from(pool: Vec<Pair>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    if cap >= pool.len() {
        return pool;
    }
    let mut picked = index::sample(rng, pool.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| pool[k]).collect()
}

/// Uniform sampling without replacement of at most `max_pos` positive and
/// `max_neg` negative pairs. Each group is returned in enumeration order.
pub fn sample_pairs(labels: &PairLabelMatrix, max_pos: usize, max_neg: usize, seed: u64) -> PairSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = sample_from(labels.positives(), max_pos, &mut rng);
    let negatives = sample_from(labels.negatives(), max_neg, &mut rng);
    PairSample { positives, negatives }
}

/// Relatedness logits, one per enumerated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    n: usize,
    logits: Vec<f64>,
}

impl PairScores {
    /// Returns `None` when the length is not `n(n-1)` or a logit is not finite.
    pub fn new(n: usize, logits: Vec<f64>) -> Option<Self> {
        (logits.len() == n * n.saturating_sub(1) && logits.iter().all(|l| l.is_finite())).then_some(Self { n, logits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn get(&self, pair: Pair) -> f64 {
        self.logits[pair_index(self.n, pair)]
    }
}

/// The `m` highest-logit pairs, ties in enumeration order.
pub fn select_top_pairs(scores: &PairScores, m: usize) -> Vec<Pair> {
    let pairs = enumerate_pairs(scores.n);
    rank_by_score(scores.logits.iter().copied())
        .into_iter()
        .take(m)
        .map(|k| pairs[k])
        .collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss value with its gradient with respect to the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean binary cross-entropy with logits in the overflow-free form
/// `max(x, 0) - x·y + ln(1 + e^{-|x|})`; gradient `(σ(x) - y) / n`.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> LossGrad {
    assert_eq!(logits.len(), targets.len(), "logit and target lengths differ");
    if logits.is_empty() {
        return LossGrad { loss: 0.0, grad: Vec::new() };
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(targets) {
        loss += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - y) / n);
    }
    LossGrad { loss: loss / n, grad }
}

/// Relatedness loss over every enumerated pair.
pub fn relpn_loss(scores: &PairScores, labels: &PairLabelMatrix) -> LossGrad {
    assert_eq!(scores.n, labels.n, "score and label matrices disagree on object count");
    let targets: Vec<f64> = labels.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    bce_with_logits(&scores.logits, &targets)
}

/// Relatedness loss restricted to sampled pairs; the gradient is over `pairs`.
pub fn relpn_loss_sampled(scores: &PairScores, labels: &PairLabelMatrix, pairs: &[Pair]) -> LossGrad {
    let logits: Vec<f64> = pairs.iter().map(|&p| scores.get(p)).collect();
    let targets: Vec<f64> = pairs.iter().map(|&p| if labels.get(p) { 1.0 } else { 0.0 }).collect();
    bce_with_logits(&logits, &targets)
}
