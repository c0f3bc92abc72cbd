//! The noise-adaptive training core: per-point prediction histories,
//! confidence-based reliable-sample selection, cluster-level vote correction,
//! and the two-stage training loop (warm-up, then noise cleaning).
//!
//! During noise cleaning each block step runs: record predictions into the
//! history, select reliable points, vote per cluster, overwrite the cluster's
//! labels in the shared store, then take a gradient step on the corrected
//! labels with never-replaced points masked out.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterAssignment, Clusterer};
use crate::data::{partition_into_blocks, sample_block, Block, LabelStore, Scene};
use crate::model::{forward, loss_and_grad, LossKind, ModelParams, SgdMomentum};
use crate::seed::{self, Stream};
use crate::{ClassId, Error, GlobalId, Result};

/// Knobs of the noise-adaptive loop. Defaults follow the recommended
/// schedule: 30 total epochs with a warm-up of 5 (one fifth of the 25
/// cleaning epochs), history length 4, vote divisor 4.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnalConfig {
    /// History length; must not exceed the warm-up epoch count.
    pub q: usize,
    /// Confidence threshold for reliable samples.
    pub sigma: f64,
    /// Vote divisor: candidates are classes with occ >= top / gamma.
    pub gamma: f64,
    pub epochs_total: usize,
    pub e_warmup: usize,
    pub lr: f64,
    pub momentum: f64,
    pub block_size: f64,
    pub stride: f64,
    pub sample_n: usize,
    pub seed: u64,
}

impl Default for PnalConfig {
    fn default() -> Self {
        PnalConfig {
            q: 4,
            sigma: 0.7,
            gamma: 4.0,
            epochs_total: 30,
            e_warmup: 5,
            lr: 0.08,
            momentum: 0.9,
            block_size: 1.0,
            stride: 0.5,
            sample_n: 1024,
            seed: 0,
        }
    }
}

impl PnalConfig {
    pub fn e_clean(&self) -> usize {
        self.epochs_total - self.e_warmup
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidConfig("history length q must be >= 1".into()));
        }
        if self.e_warmup > self.epochs_total {
            return Err(Error::InvalidConfig(
                "e_warmup cannot exceed epochs_total".into(),
            ));
        }
        if self.q > self.e_warmup {
            return Err(Error::InvalidConfig(
                "history length q must not exceed e_warmup".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::InvalidConfig("sigma must lie in [0, 1]".into()));
        }
        if self.gamma < 1.0 {
            return Err(Error::InvalidConfig("gamma must be >= 1".into()));
        }
        if self.block_size <= 0.0 || self.stride <= 0.0 {
            return Err(Error::InvalidConfig(
                "block_size and stride must be positive".into(),
            ));
        }
        if self.sample_n == 0 {
            return Err(Error::InvalidConfig("sample_n must be positive".into()));
        }
        if !(self.lr.is_finite() && self.momentum.is_finite()) {
            return Err(Error::InvalidConfig("lr and momentum must be finite".into()));
        }
        Ok(())
    }
}

/// Per-point ring buffer of the last `q` predicted labels.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    q: usize,
    entries: HashMap<GlobalId, PointHistory>,
}

#[derive(Debug, Clone)]
struct PointHistory {
    ring: Vec<u16>,
    head: usize,
}

impl HistoryBuffer {
    pub fn new(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidConfig("history length q must be >= 1".into()));
        }
        Ok(HistoryBuffer {
            q,
            entries: HashMap::new(),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Appends one predicted label per id; the oldest entry is evicted once
    /// a point's buffer holds `q` labels. Ids absent from `ids` are
    /// untouched.
    pub fn record_predictions(&mut self, ids: &[GlobalId], predicted: &[ClassId]) {
        assert_eq!(ids.len(), predicted.len(), "one label per id");
        for (&id, &label) in ids.iter().zip(predicted) {
            let entry = self.entries.entry(id).or_insert_with(|| PointHistory {
                ring: Vec::with_capacity(self.q),
                head: 0,
            });
            if entry.ring.len() < self.q {
                entry.ring.push(label as u16);
            } else {
                entry.ring[entry.head] = label as u16;
                entry.head = (entry.head + 1) % self.q;
            }
        }
    }

    pub fn fill(&self, id: GlobalId) -> usize {
        self.entries.get(&id).map_or(0, |e| e.ring.len())
    }

    /// Buffer contents in eviction order (oldest first), for inspection.
    pub fn labels(&self, id: GlobalId) -> Option<Vec<ClassId>> {
        self.entries.get(&id).map(|e| {
            let len = e.ring.len();
            (0..len)
                .map(|i| e.ring[(e.head + i) % len] as ClassId)
                .collect()
        })
    }

    fn counts(&self, id: GlobalId, num_classes: usize) -> Result<Vec<usize>> {
        let entry = self.entries.get(&id).ok_or(Error::HistoryNotFull)?;
        if entry.ring.len() < self.q {
            return Err(Error::HistoryNotFull);
        }
        let mut counts = vec![0usize; num_classes];
        for &label in &entry.ring {
            counts[label as usize] += 1;
        }
        Ok(counts)
    }

    /// Label frequency over the full history: P(m) = count(m) / q.
    pub fn distribution(&self, id: GlobalId, num_classes: usize) -> Result<Vec<f64>> {
        Ok(self
            .counts(id, num_classes)?
            .into_iter()
            .map(|c| c as f64 / self.q as f64)
            .collect())
    }

    /// One minus the normalized entropy of the label distribution:
    /// 1 for a unanimous history, 0 for a uniform one.
    pub fn confidence(&self, id: GlobalId, num_classes: usize) -> Result<f64> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        let dist = self.distribution(id, num_classes)?;
        Ok(confidence_of_distribution(&dist, num_classes))
    }
}

/// 1 - entropy(P) / ln(M), with 0 ln 0 := 0.
pub fn confidence_of_distribution(dist: &[f64], num_classes: usize) -> f64 {
    let lambda = (num_classes as f64).ln();
    let entropy: f64 = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    1.0 - entropy / lambda
}

/// Reliable points and their reliable labels (the history mode).
#[derive(Debug, Clone, Default)]
pub struct ReliableSet {
    map: HashMap<GlobalId, ClassId>,
}

impl ReliableSet {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, id: GlobalId) -> bool {
        self.map.contains_key(&id)
    }

    pub fn reliable_label(&self, id: GlobalId) -> Option<ClassId> {
        self.map.get(&id).copied()
    }
}

/// Selects the full-history ids whose confidence reaches `sigma`. Each
/// member carries the most frequent label of its history, ties to the
/// lowest class id. Ids with partial history are skipped.
pub fn select_reliable(
    history: &HistoryBuffer,
    ids: &[GlobalId],
    sigma: f64,
    num_classes: usize,
) -> ReliableSet {
    let mut map = HashMap::new();
    for &id in ids {
        let counts = match history.counts(id, num_classes) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let dist: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / history.q() as f64)
            .collect();
        if confidence_of_distribution(&dist, num_classes) >= sigma {
            let mut best = 0;
            for (m, &c) in counts.iter().enumerate().skip(1) {
                if c > counts[best] {
                    best = m;
                }
            }
            map.insert(id, best);
        }
    }
    ReliableSet { map }
}

/// Per-cluster vote counts over the reliable labels of its members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTally {
    pub occs: Vec<usize>,
    pub top: usize,
}

pub fn tally_votes(member_ids: &[GlobalId], reliable: &ReliableSet, num_classes: usize) -> VoteTally {
    let mut occs = vec![0usize; num_classes];
    for &id in member_ids {
        if let Some(label) = reliable.reliable_label(id) {
            occs[label] += 1;
        }
    }
    let top = occs.iter().copied().max().unwrap_or(0);
    VoteTally { occs, top }
}

/// Cluster ids (ascending) holding at least one reliable member.
pub fn eligible_clusters(
    assignment: &ClusterAssignment,
    block: &Block,
    reliable: &ReliableSet,
) -> Vec<usize> {
    (0..assignment.k)
        .filter(|&c| {
            assignment.clusters[c]
                .iter()
                .any(|&local| reliable.contains(block.member_ids[local]))
        })
        .collect()
}

/// Uniform draw over the candidate classes {m : occs[m] >= top / gamma}.
/// With gamma = 1 the candidates are exactly the top-count labels.
pub fn pick_winner(tally: &VoteTally, gamma: f64, rng: &mut impl Rng) -> Result<ClassId> {
    if tally.top == 0 {
        return Err(Error::NoReliableVotes);
    }
    let threshold = tally.top as f64 / gamma;
    let candidates: Vec<ClassId> = tally
        .occs
        .iter()
        .enumerate()
        .filter(|(_, &occ)| occ as f64 >= threshold)
        .map(|(m, _)| m)
        .collect();
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Overwrites every member's current label with the winner and marks them
/// replaced, including members whose label already equals the winner.
pub fn correct_cluster(
    store: &mut LabelStore,
    member_ids: &[GlobalId],
    winner: ClassId,
) -> Result<()> {
    for &id in member_ids {
        store.overwrite(id, winner)?;
    }
    Ok(())
}

/// One row of the epoch log.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_oa: f64,
    pub train_miou: f64,
    pub test_oa: f64,
    pub test_miou: f64,
    pub correction_frac: f64,
    pub true_correction_frac: f64,
    pub wall_time_s: f64,
}

fn evaluate_split(
    params: &ModelParams,
    scenes: &[Scene],
    blocks: &[Vec<Block>],
    num_classes: usize,
) -> Result<(f64, f64)> {
    struct Counts {
        matches: usize,
        total: usize,
        tp: Vec<usize>,
        fp: Vec<usize>,
        fneg: Vec<usize>,
    }
    let per_block: Vec<Counts> = scenes
        .iter()
        .zip(blocks)
        .flat_map(|(scene, scene_blocks)| {
            scene_blocks.iter().map(move |b| (scene, b))
        })
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(scene, block)| -> Result<Counts> {
            let features = crate::data::normalize_features(scene, block, &block.member_ids)?;
            let preds = crate::model::predict(params, &features)?;
            let mut c = Counts {
                matches: 0,
                total: 0,
                tp: vec![0; num_classes],
                fp: vec![0; num_classes],
                fneg: vec![0; num_classes],
            };
            for (&id, &p) in block.member_ids.iter().zip(&preds) {
                let gt = scene.point(id)?.gt_label;
                c.total += 1;
                if p == gt {
                    c.matches += 1;
                    c.tp[p] += 1;
                } else {
                    c.fp[p] += 1;
                    c.fneg[gt] += 1;
                }
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut matches = 0usize;
    let mut total = 0usize;
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for c in per_block {
        matches += c.matches;
        total += c.total;
        for m in 0..num_classes {
            tp[m] += c.tp[m];
            fp[m] += c.fp[m];
            fneg[m] += c.fneg[m];
        }
    }
    let oa = matches as f64 / total.max(1) as f64;
    let mut iou_sum = 0.0;
    let mut present = 0usize;
    for m in 0..num_classes {
        let denom = tp[m] + fp[m] + fneg[m];
        if denom > 0 {
            iou_sum += tp[m] as f64 / denom as f64;
            present += 1;
        }
    }
    let miou = if present == 0 { 0.0 } else { iou_sum / present as f64 };
    Ok((oa, miou))
}

/// OA and mIoU of a parameter set over whole scenes, predicting each point
/// once through the non-overlapping `block_size` tiling. This is the same
/// path the per-epoch log uses.
pub fn evaluate_scenes(
    params: &ModelParams,
    scenes: &[Scene],
    block_size: f64,
) -> Result<(f64, f64)> {
    if scenes.is_empty() {
        return Err(Error::EmptyScene);
    }
    let num_classes = scenes[0].num_classes();
    let blocks: Vec<Vec<Block>> = scenes
        .iter()
        .map(|s| partition_into_blocks(s, block_size, block_size))
        .collect::<Result<_>>()?;
    evaluate_split(params, scenes, &blocks, num_classes)
}

fn aggregate_correction_stats(scenes: &[Scene], stores: &[LabelStore]) -> Result<(f64, f64)> {
    let mut replaced = 0usize;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (scene, store) in scenes.iter().zip(stores) {
        for p in scene.points() {
            total += 1;
            if store.ever_replaced(p.global_id)? {
                replaced += 1;
                if store.label(p.global_id)? == p.gt_label {
                    correct += 1;
                }
            }
        }
    }
    let frac = replaced as f64 / total.max(1) as f64;
    let true_frac = if replaced == 0 {
        0.0
    } else {
        correct as f64 / replaced as f64
    };
    Ok((frac, true_frac))
}

/// Runs the two-stage loop and returns the trained parameters plus the epoch
/// log. Warm-up epochs (1..=e_warmup) train with `warmup_loss` on the current
/// labels and an all-ones mask; cleaning epochs correct labels per block and
/// train with cross entropy masked to ever-replaced points. Predictions are
/// recorded into the history from epoch 1. With e_warmup == epochs_total the
/// loop degenerates to the plain baseline and never touches a label.
///
/// `on_epoch` runs after each epoch with the current label stores (used for
/// optional label snapshots).
pub fn run_training(
    train_scenes: &[Scene],
    test_scenes: &[Scene],
    stores: &mut [LabelStore],
    params: ModelParams,
    cfg: &PnalConfig,
    clusterer: &dyn Clusterer,
    warmup_loss: &LossKind,
    mut on_epoch: impl FnMut(usize, &[LabelStore]) -> Result<()>,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    warmup_loss.validate()?;
    if train_scenes.is_empty() {
        return Err(Error::EmptyScene);
    }
    if stores.len() != train_scenes.len() {
        return Err(Error::InvalidConfig(
            "one label store per training scene required".into(),
        ));
    }
    let num_classes = train_scenes[0].num_classes();
    for scene in train_scenes.iter().chain(test_scenes) {
        if scene.num_classes() != num_classes {
            return Err(Error::InvalidConfig(
                "all scenes must share num_classes".into(),
            ));
        }
    }
    let mut params = params;
    if params.dims().classes != num_classes {
        return Err(Error::InvalidConfig(
            "model output dimension must equal num_classes".into(),
        ));
    }

    // Geometry is fixed for the whole run: training blocks, their cluster
    // assignments, and the non-overlapping evaluation tiling.
    let train_blocks: Vec<Vec<Block>> = train_scenes
        .iter()
        .map(|s| partition_into_blocks(s, cfg.block_size, cfg.stride))
        .collect::<Result<_>>()?;
    let assignments: Vec<Vec<ClusterAssignment>> = train_scenes
        .par_iter()
        .zip(&train_blocks)
        .map(|(scene, blocks)| {
            blocks
                .iter()
                .map(|b| clusterer.cluster_block(scene, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let eval_train_blocks: Vec<Vec<Block>> = train_scenes
        .iter()
        .map(|s| partition_into_blocks(s, cfg.block_size, cfg.block_size))
        .collect::<Result<_>>()?;
    let eval_test_blocks: Vec<Vec<Block>> = test_scenes
        .iter()
        .map(|s| partition_into_blocks(s, cfg.block_size, cfg.block_size))
        .collect::<Result<_>>()?;

    let mut histories: Vec<HistoryBuffer> = train_scenes
        .iter()
        .map(|_| HistoryBuffer::new(cfg.q))
        .collect::<Result<_>>()?;
    let mut optimizer = SgdMomentum::new(params.dims(), cfg.momentum);

    let mut order: Vec<(usize, usize)> = train_blocks
        .iter()
        .enumerate()
        .flat_map(|(si, blocks)| (0..blocks.len()).map(move |bi| (si, bi)))
        .collect();

    let mut log = Vec::with_capacity(cfg.epochs_total);
    for epoch in 1..=cfg.epochs_total {
        let started = Instant::now();
        let cleaning = epoch > cfg.e_warmup;

        let mut shuffle_rng = seed::rng(cfg.seed, Stream::Shuffle, epoch as u64, 0);
        order.shuffle(&mut shuffle_rng);

        for &(si, bi) in &order {
            let scene = &train_scenes[si];
            let block = &train_blocks[si][bi];
            let pair_key = (si as u64) << 20 | bi as u64;
            let mut sample_rng = seed::rng(cfg.seed, Stream::Sample, epoch as u64, pair_key);
            let batch = sample_block(scene, block, &stores[si], cfg.sample_n, &mut sample_rng)?;

            let probs = forward(&params, &batch.features)?;
            let preds: Vec<ClassId> = probs
                .rows()
                .into_iter()
                .map(|r| {
                    let mut best = 0;
                    for (m, &v) in r.iter().enumerate().skip(1) {
                        if v > r[best] {
                            best = m;
                        }
                    }
                    best
                })
                .collect();

            // First occurrence per id: top-up duplicates record once.
            let mut unique_ids = Vec::with_capacity(batch.global_ids.len());
            let mut unique_preds = Vec::with_capacity(batch.global_ids.len());
            {
                let mut seen = std::collections::HashSet::new();
                for (i, &id) in batch.global_ids.iter().enumerate() {
                    if seen.insert(id) {
                        unique_ids.push(id);
                        unique_preds.push(preds[i]);
                    }
                }
            }
            histories[si].record_predictions(&unique_ids, &unique_preds);

            let (labels, mask, loss_kind) = if cleaning {
                let reliable =
                    select_reliable(&histories[si], &unique_ids, cfg.sigma, num_classes);
                let assignment = &assignments[si][bi];
                let mut winner_rng =
                    seed::rng(cfg.seed, Stream::Winner, epoch as u64, pair_key);
                for c in eligible_clusters(assignment, block, &reliable) {
                    let members: Vec<GlobalId> = assignment.clusters[c]
                        .iter()
                        .map(|&local| block.member_ids[local])
                        .collect();
                    let tally = tally_votes(&members, &reliable, num_classes);
                    let winner = pick_winner(&tally, cfg.gamma, &mut winner_rng)?;
                    correct_cluster(&mut stores[si], &members, winner)?;
                }
                // Re-read labels after correction; only ever-replaced points
                // carry gradient.
                let mut labels = Vec::with_capacity(batch.global_ids.len());
                let mut mask = Vec::with_capacity(batch.global_ids.len());
                for &id in &batch.global_ids {
                    labels.push(stores[si].label(id)?);
                    mask.push(f64::from(stores[si].ever_replaced(id)?));
                }
                (labels, mask, LossKind::Ce)
            } else {
                (batch.labels.clone(), vec![1.0; batch.global_ids.len()], *warmup_loss)
            };

            let out = loss_and_grad(&params, &batch.features, &labels, &mask, &loss_kind)?;
            if !out.all_masked {
                optimizer.step(&mut params, &out.grad, cfg.lr);
            }
        }

        let (train_oa, train_miou) =
            evaluate_split(&params, train_scenes, &eval_train_blocks, num_classes)?;
        let (test_oa, test_miou) = if test_scenes.is_empty() {
            (0.0, 0.0)
        } else {
            evaluate_split(&params, test_scenes, &eval_test_blocks, num_classes)?
        };
        let (correction_frac, true_correction_frac) =
            aggregate_correction_stats(train_scenes, stores)?;

        log.push(EpochRecord {
            epoch,
            train_oa,
            train_miou,
            test_oa,
            test_miou,
            correction_frac,
            true_correction_frac,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        on_epoch(epoch, stores)?;
    }
    Ok((params, log))
}
