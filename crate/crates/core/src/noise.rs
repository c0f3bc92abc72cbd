//! Instance-level label corruption: symmetric and asymmetric noise models
//! plus measurement of the resulting noise rates.
//!
//! Corruption happens once, before training, and always flips whole
//! instances: every point of a flipped instance receives the same wrong
//! label.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabelStore, Scene};
use crate::{ClassId, Error, GlobalId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Symmetric,
    Asymmetric,
}

/// Noise settings. `pairs` lists unordered class-id pairs for the asymmetric
/// model; pairs must be disjoint (each class in at most one pair).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    /// Overall instance-level noise rate.
    pub tau: f64,
    /// Within-pair flip probability (asymmetric only).
    pub tau_pair: f64,
    pub pairs: Vec<(ClassId, ClassId)>,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.tau_pair) {
            return Err(Error::InvalidConfig(
                "tau and tau_pair must lie in [0, 1]".into(),
            ));
        }
        let mut seen = vec![false; num_classes];
        for &(a, b) in &self.pairs {
            if a >= num_classes || b >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: a.max(b),
                    num_classes,
                });
            }
            if a == b {
                return Err(Error::InvalidConfig("pair members must differ".into()));
            }
            if seen[a] || seen[b] {
                return Err(Error::InvalidConfig(
                    "a class may appear in at most one pair".into(),
                ));
            }
            seen[a] = true;
            seen[b] = true;
        }
        Ok(())
    }
}

/// Flips each instance independently with probability `tau`; a flipped
/// instance receives one label drawn uniformly from the other classes.
pub fn inject_symmetric(scene: &Scene, tau: f64, rng: &mut impl Rng) -> Result<LabelStore> {
    let m = scene.num_classes();
    if m < 2 {
        return Err(Error::InvalidConfig("need at least 2 classes".into()));
    }
    let mut labels: HashMap<GlobalId, ClassId> = scene
        .points()
        .iter()
        .map(|p| (p.global_id, p.gt_label))
        .collect();
    for group in scene.instance_groups() {
        if rng.random_range(0.0..1.0) < tau {
            let offset = rng.random_range(1..m);
            let new_label = (group.gt_label + offset) % m;
            for id in &group.member_ids {
                labels.insert(*id, new_label);
            }
        }
    }
    LabelStore::from_labels(scene, &labels)
}

/// Outcome report of an asymmetric injection.
#[derive(Debug, Clone, Serialize)]
pub struct AsymmetricSummary {
    /// Symmetric flip rate applied to instances of unpaired classes, solved
    /// so the expected overall instance rate equals tau.
    pub unpaired_rate: f64,
    /// True when the solved rate fell outside [0, 1] and was clamped.
    pub clamped: bool,
}

/// Instances of paired classes flip to their partner with probability
/// `tau_pair`; unpaired classes follow the symmetric rule at a single rate
/// solved from the instance counts so that the expected overall rate is
/// `tau`. An infeasible rate is clamped and reported.
pub fn inject_asymmetric(
    scene: &Scene,
    tau: f64,
    tau_pair: f64,
    pairs: &[(ClassId, ClassId)],
    rng: &mut impl Rng,
) -> Result<(LabelStore, AsymmetricSummary)> {
    let m = scene.num_classes();
    let cfg = NoiseConfig {
        kind: NoiseKind::Asymmetric,
        tau,
        tau_pair,
        pairs: pairs.to_vec(),
        seed: 0,
    };
    cfg.validate(m)?;

    let mut partner: Vec<Option<ClassId>> = vec![None; m];
    for &(a, b) in pairs {
        partner[a] = Some(b);
        partner[b] = Some(a);
    }

    let groups = scene.instance_groups();
    let paired_count = groups
        .iter()
        .filter(|g| partner[g.gt_label].is_some())
        .count();
    let unpaired_count = groups.len() - paired_count;

    // Expected flips: paired_count * tau_pair + unpaired_count * r = n * tau.
    let (unpaired_rate, clamped) = if unpaired_count == 0 {
        (0.0, false)
    } else {
        let r = (tau * groups.len() as f64 - tau_pair * paired_count as f64)
            / unpaired_count as f64;
        if (0.0..=1.0).contains(&r) {
            (r, false)
        } else {
            (r.clamp(0.0, 1.0), true)
        }
    };

    let mut labels: HashMap<GlobalId, ClassId> = scene
        .points()
        .iter()
        .map(|p| (p.global_id, p.gt_label))
        .collect();
    for group in &groups {
        let new_label = match partner[group.gt_label] {
            Some(other) => {
                if rng.random_range(0.0..1.0) < tau_pair {
                    Some(other)
                } else {
                    None
                }
            }
            None => {
                if rng.random_range(0.0..1.0) < unpaired_rate {
                    let offset = rng.random_range(1..m);
                    Some((group.gt_label + offset) % m)
                } else {
                    None
                }
            }
        };
        if let Some(label) = new_label {
            for id in &group.member_ids {
                labels.insert(*id, label);
            }
        }
    }
    Ok((
        LabelStore::from_labels(scene, &labels)?,
        AsymmetricSummary {
            unpaired_rate,
            clamped,
        },
    ))
}

/// Applies `cfg` to a scene with a caller-supplied rng.
pub fn inject(scene: &Scene, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<LabelStore> {
    match cfg.kind {
        NoiseKind::None => Ok(LabelStore::from_ground_truth(scene)),
        NoiseKind::Symmetric => inject_symmetric(scene, cfg.tau, rng),
        NoiseKind::Asymmetric => {
            inject_asymmetric(scene, cfg.tau, cfg.tau_pair, &cfg.pairs, rng).map(|(s, _)| s)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseMeasurement {
    /// Fraction of instances whose current label differs from ground truth.
    pub instance_rate: f64,
    /// Same, weighted by points.
    pub point_rate: f64,
    /// confusion[gt][current] point counts.
    pub confusion: Vec<Vec<usize>>,
}

pub fn measure_noise(scene: &Scene, store: &LabelStore) -> Result<NoiseMeasurement> {
    let m = scene.num_classes();
    let mut confusion = vec![vec![0usize; m]; m];
    let mut noisy_points = 0usize;
    for p in scene.points() {
        let cur = store.label(p.global_id)?;
        confusion[p.gt_label][cur] += 1;
        if cur != p.gt_label {
            noisy_points += 1;
        }
    }
    let groups = scene.instance_groups();
    let mut noisy_instances = 0usize;
    for g in &groups {
        let cur = store.label(g.member_ids[0])?;
        if cur != g.gt_label {
            noisy_instances += 1;
        }
    }
    Ok(NoiseMeasurement {
        instance_rate: noisy_instances as f64 / groups.len() as f64,
        point_rate: noisy_points as f64 / scene.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PointRecord;
    use crate::seed::{self, Stream};

    /// `instances` point-groups of `size` points each, all class `i % m`.
    fn instance_scene(instances: usize, size: usize, m: usize) -> Scene {
        let mut points = Vec::new();
        let mut id = 0u64;
        for i in 0..instances {
            for j in 0..size {
                points.push(PointRecord {
                    global_id: id,
                    position: [i as f64, j as f64 * 0.01, 0.0],
                    color: [0.5; 3],
                    gt_label: i % m,
                    instance_id: i as u32,
                });
                id += 1;
            }
        }
        Scene::new(points, m, vec![]).unwrap()
    }

    #[test]
    fn tau_zero_is_identity() {
        let scene = instance_scene(50, 5, 6);
        let mut rng = seed::rng(0, Stream::Noise, 0, 0);
        let store = inject_symmetric(&scene, 0.0, &mut rng).unwrap();
        for p in scene.points() {
            assert_eq!(store.label(p.global_id).unwrap(), p.gt_label);
        }
    }

    #[test]
    fn tau_one_flips_every_instance() {
        let scene = instance_scene(50, 5, 6);
        let mut rng = seed::rng(1, Stream::Noise, 0, 0);
        let store = inject_symmetric(&scene, 1.0, &mut rng).unwrap();
        for g in scene.instance_groups() {
            let label = store.label(g.member_ids[0]).unwrap();
            assert_ne!(label, g.gt_label);
        }
    }

    #[test]
    fn flip_count_concentrates_around_tau() {
        let scene = instance_scene(1000, 3, 6);
        let mut rng = seed::rng(7, Stream::Noise, 0, 0);
        let store = inject_symmetric(&scene, 0.6, &mut rng).unwrap();
        let measured = measure_noise(&scene, &store).unwrap();
        let flips = measured.instance_rate * 1000.0;
        let sigma = (1000.0f64 * 0.6 * 0.4).sqrt();
        assert!(
            (flips - 600.0).abs() <= 3.0 * sigma,
            "flips {flips} outside 3 sigma of 600"
        );
    }

    #[test]
    fn corruption_is_instance_homogeneous() {
        let scene = instance_scene(200, 7, 6);
        let mut rng = seed::rng(3, Stream::Noise, 0, 0);
        let store = inject_symmetric(&scene, 0.5, &mut rng).unwrap();
        for g in scene.instance_groups() {
            let first = store.label(g.member_ids[0]).unwrap();
            for id in &g.member_ids {
                assert_eq!(store.label(*id).unwrap(), first);
            }
        }
    }

    #[test]
    fn asymmetric_identity_when_rates_zero() {
        let scene = instance_scene(100, 4, 6);
        let mut rng = seed::rng(5, Stream::Noise, 0, 0);
        let (store, summary) =
            inject_asymmetric(&scene, 0.0, 0.0, &[(1, 2)], &mut rng).unwrap();
        assert!(!summary.clamped);
        for p in scene.points() {
            assert_eq!(store.label(p.global_id).unwrap(), p.gt_label);
        }
    }

    #[test]
    fn pair_flip_probability_one_swaps_pair() {
        let scene = instance_scene(120, 4, 6);
        let mut rng = seed::rng(6, Stream::Noise, 0, 0);
        // tau chosen so the unpaired rate solves to 0: paired classes are
        // 2 of 6 -> a third of instances, all flipped.
        let (store, summary) =
            inject_asymmetric(&scene, 1.0 / 3.0, 1.0, &[(1, 2)], &mut rng).unwrap();
        assert!(!summary.clamped);
        assert!(summary.unpaired_rate.abs() < 1e-12);
        for g in scene.instance_groups() {
            let cur = store.label(g.member_ids[0]).unwrap();
            match g.gt_label {
                1 => assert_eq!(cur, 2),
                2 => assert_eq!(cur, 1),
                other => assert_eq!(cur, other),
            }
        }
    }

    #[test]
    fn asymmetric_hits_overall_rate() {
        // Pairs (1,2) and (3,4) cover 4 of 6 classes; with uniform class
        // counts that is 2/3 of instances... use a 4-class scene where the
        // single pair covers half the instances instead.
        let scene = instance_scene(1200, 3, 4);
        let mut rng = seed::rng(11, Stream::Noise, 0, 0);
        let (store, summary) =
            inject_asymmetric(&scene, 0.6, 0.4, &[(0, 1)], &mut rng).unwrap();
        assert!(!summary.clamped);
        assert!((summary.unpaired_rate - 0.8).abs() < 1e-12);
        let measured = measure_noise(&scene, &store).unwrap();
        let sigma = (1200.0f64 * 0.6 * 0.4).sqrt() / 1200.0;
        assert!(
            (measured.instance_rate - 0.6).abs() <= 3.0 * sigma,
            "rate {} outside 3 sigma of 0.6",
            measured.instance_rate
        );
    }

    #[test]
    fn infeasible_tau_is_clamped_and_reported() {
        // All classes paired except class 2 (one sixth of instances); tau = 0.9
        // with tau_pair = 0 would need an unpaired rate far above 1.
        let scene = instance_scene(60, 2, 3);
        let mut rng = seed::rng(13, Stream::Noise, 0, 0);
        let (_, summary) = inject_asymmetric(&scene, 0.9, 0.0, &[(0, 1)], &mut rng).unwrap();
        assert!(summary.clamped);
        assert_eq!(summary.unpaired_rate, 1.0);
    }

    #[test]
    fn measure_noise_identity() {
        let scene = instance_scene(10, 10, 6);
        let store = LabelStore::from_ground_truth(&scene);
        let m = measure_noise(&scene, &store).unwrap();
        assert_eq!(m.instance_rate, 0.0);
        assert_eq!(m.point_rate, 0.0);
        for (gt, row) in m.confusion.iter().enumerate() {
            for (cur, &count) in row.iter().enumerate() {
                if gt != cur {
                    assert_eq!(count, 0);
                }
            }
        }
    }

    #[test]
    fn measure_noise_single_flipped_instance() {
        let scene = instance_scene(10, 10, 6); // 100 points, 10 instances
        let mut store = LabelStore::from_ground_truth(&scene);
        // Flip instance 0 (gt label 0) to label 3.
        for g in scene.instance_groups() {
            if g.instance_id == 0 {
                for id in &g.member_ids {
                    store.overwrite(*id, 3).unwrap();
                }
            }
        }
        let m = measure_noise(&scene, &store).unwrap();
        assert!((m.instance_rate - 0.1).abs() < 1e-12);
        assert!((m.point_rate - 0.1).abs() < 1e-12);
        assert_eq!(m.confusion[0][3], 10);
        let off_diag: usize = (0..6)
            .flat_map(|a| (0..6).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b)
            .map(|(a, b)| m.confusion[a][b])
            .sum();
        assert_eq!(off_diag, 10);
    }

    #[test]
    fn point_rate_tracks_instance_rate_for_equal_sizes() {
        let scene = instance_scene(800, 5, 6);
        let mut rng = seed::rng(17, Stream::Noise, 0, 0);
        let store = inject_symmetric(&scene, 0.6, &mut rng).unwrap();
        let m = measure_noise(&scene, &store).unwrap();
        assert!((m.point_rate - m.instance_rate).abs() < 1e-12);
    }

    #[test]
    fn pair_config_validation() {
        let bad = NoiseConfig {
            kind: NoiseKind::Asymmetric,
            tau: 0.5,
            tau_pair: 0.5,
            pairs: vec![(0, 1), (1, 2)],
            seed: 0,
        };
        assert!(bad.validate(6).is_err());
        let good = NoiseConfig {
            pairs: vec![(0, 1), (2, 3)],
            ..bad
        };
        assert!(good.validate(6).is_ok());
    }
}
