//! Point-cloud data model: scenes, room blocks, per-block sampling with
//! feature normalization, and the mutable training-label table.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;

use crate::{ClassId, Error, GlobalId, Result};

/// One point: geometry, color, ground truth, and identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub global_id: GlobalId,
    /// Position in meters.
    pub position: [f64; 3],
    /// RGB components in `[0, 1]`.
    pub color: [f64; 3],
    pub gt_label: ClassId,
    pub instance_id: u32,
}

/// Immutable labeled point cloud. Validated on construction: global ids are
/// unique, labels are in range, colors are in `[0, 1]`, and every instance is
/// label-homogeneous in ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    points: Vec<PointRecord>,
    num_classes: usize,
    class_names: Vec<String>,
    index: HashMap<GlobalId, usize>,
    bbox_min: [f64; 3],
    bbox_max: [f64; 3],
}

impl Scene {
    pub fn new(
        points: Vec<PointRecord>,
        num_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyScene);
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        let names = if class_names.is_empty() {
            (0..num_classes).map(|c| format!("class_{c}")).collect()
        } else if class_names.len() == num_classes {
            class_names
        } else {
            return Err(Error::InvalidConfig(format!(
                "expected {} class names, got {}",
                num_classes,
                class_names.len()
            )));
        };

        let mut index = HashMap::with_capacity(points.len());
        let mut instance_label: HashMap<u32, ClassId> = HashMap::new();
        let mut bbox_min = [f64::INFINITY; 3];
        let mut bbox_max = [f64::NEG_INFINITY; 3];
        for (i, p) in points.iter().enumerate() {
            if p.gt_label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: p.gt_label,
                    num_classes,
                });
            }
            if p.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::ColorOutOfRange(p.global_id));
            }
            if !p.position.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            if index.insert(p.global_id, i).is_some() {
                return Err(Error::DuplicateGlobalId(p.global_id));
            }
            match instance_label.get(&p.instance_id) {
                None => {
                    instance_label.insert(p.instance_id, p.gt_label);
                }
                Some(&label) if label != p.gt_label => {
                    return Err(Error::InstanceNotHomogeneous(p.instance_id));
                }
                _ => {}
            }
            for a in 0..3 {
                bbox_min[a] = bbox_min[a].min(p.position[a]);
                bbox_max[a] = bbox_max[a].max(p.position[a]);
            }
        }
        Ok(Scene {
            points,
            num_classes,
            class_names: names,
            index,
            bbox_min,
            bbox_max,
        })
    }

    pub fn points(&self) -> &[PointRecord] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn bbox_min(&self) -> [f64; 3] {
        self.bbox_min
    }

    pub fn bbox_max(&self) -> [f64; 3] {
        self.bbox_max
    }

    /// Index of a point in `points()` order, if present.
    pub fn position_of(&self, id: GlobalId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn point(&self, id: GlobalId) -> Result<&PointRecord> {
        self.position_of(id)
            .map(|i| &self.points[i])
            .ok_or(Error::UnknownGlobalId(id))
    }

    /// Instances in ascending `instance_id` order, each with its ground-truth
    /// label and member ids (in scene point order).
    pub fn instance_groups(&self) -> Vec<InstanceGroup> {
        let mut by_inst: HashMap<u32, InstanceGroup> = HashMap::new();
        for p in &self.points {
            by_inst
                .entry(p.instance_id)
                .or_insert_with(|| InstanceGroup {
                    instance_id: p.instance_id,
                    gt_label: p.gt_label,
                    member_ids: Vec::new(),
                })
                .member_ids
                .push(p.global_id);
        }
        let mut groups: Vec<_> = by_inst.into_values().collect();
        groups.sort_by_key(|g| g.instance_id);
        groups
    }
}

#[derive(Debug, Clone)]
pub struct InstanceGroup {
    pub instance_id: u32,
    pub gt_label: ClassId,
    pub member_ids: Vec<GlobalId>,
}

/// Axis-aligned xy block of a scene. Member ids are kept sorted so that all
/// downstream draws depend only on block contents, never on input order.
#[derive(Debug, Clone)]
pub struct Block {
    pub origin: [f64; 2],
    pub size: f64,
    pub member_ids: Vec<GlobalId>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

/// Cuts the scene's xy extent into `block_size` blocks on a `stride` grid
/// anchored at the scene's minimum corner. Blocks on the far edge of an axis
/// include that axis' upper boundary so every point lands in at least one
/// block; empty cells are dropped.
pub fn partition_into_blocks(scene: &Scene, block_size: f64, stride: f64) -> Result<Vec<Block>> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    if block_size <= 0.0 || stride <= 0.0 {
        return Err(Error::InvalidConfig(
            "block_size and stride must be positive".into(),
        ));
    }
    let min = scene.bbox_min();
    let max = scene.bbox_max();
    let steps = |span: f64| -> usize {
        if span <= block_size {
            0
        } else {
            ((span - block_size) / stride).ceil() as usize
        }
    };
    let kx = steps(max[0] - min[0]);
    let ky = steps(max[1] - min[1]);

    let mut blocks = Vec::new();
    for ix in 0..=kx {
        for iy in 0..=ky {
            let origin = [min[0] + ix as f64 * stride, min[1] + iy as f64 * stride];
            let last = [ix == kx, iy == ky];
            let mut members: Vec<GlobalId> = scene
                .points()
                .iter()
                .filter(|p| {
                    (0..2).all(|a| {
                        let d = p.position[a] - origin[a];
                        d >= 0.0 && (d < block_size || (last[a] && d <= block_size))
                    })
                })
                .map(|p| p.global_id)
                .collect();
            if members.is_empty() {
                continue;
            }
            members.sort_unstable();
            blocks.push(Block {
                origin,
                size: block_size,
                member_ids: members,
            });
        }
    }
    Ok(blocks)
}

/// The mutable training-label table: current label per point plus a flag
/// recording whether the label was ever overwritten by a correction.
#[derive(Debug, Clone)]
pub struct LabelStore {
    slots: HashMap<GlobalId, Slot>,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    label: ClassId,
    ever_replaced: bool,
}

impl LabelStore {
    /// Initializes from the scene's ground-truth labels (the clean setting).
    pub fn from_ground_truth(scene: &Scene) -> Self {
        let slots = scene
            .points()
            .iter()
            .map(|p| {
                (
                    p.global_id,
                    Slot {
                        label: p.gt_label,
                        ever_replaced: false,
                    },
                )
            })
            .collect();
        LabelStore { slots }
    }

    /// Initializes from explicit (possibly noisy) labels. The domain must
    /// match the scene's global ids exactly.
    pub fn from_labels(scene: &Scene, labels: &HashMap<GlobalId, ClassId>) -> Result<Self> {
        let mut slots = HashMap::with_capacity(scene.len());
        for p in scene.points() {
            let &label = labels
                .get(&p.global_id)
                .ok_or(Error::UnknownGlobalId(p.global_id))?;
            if label >= scene.num_classes() {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes: scene.num_classes(),
                });
            }
            slots.insert(
                p.global_id,
                Slot {
                    label,
                    ever_replaced: false,
                },
            );
        }
        if labels.len() != scene.len() {
            return Err(Error::InvalidConfig(
                "label table does not match scene ids".into(),
            ));
        }
        Ok(LabelStore { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn label(&self, id: GlobalId) -> Result<ClassId> {
        self.slots
            .get(&id)
            .map(|s| s.label)
            .ok_or(Error::UnknownGlobalId(id))
    }

    pub fn ever_replaced(&self, id: GlobalId) -> Result<bool> {
        self.slots
            .get(&id)
            .map(|s| s.ever_replaced)
            .ok_or(Error::UnknownGlobalId(id))
    }

    /// Correction write: sets the label and marks the point as replaced even
    /// when the winner equals the previous label.
    pub fn overwrite(&mut self, id: GlobalId, label: ClassId) -> Result<()> {
        let slot = self.slots.get_mut(&id).ok_or(Error::UnknownGlobalId(id))?;
        slot.label = label;
        slot.ever_replaced = true;
        Ok(())
    }

    pub fn replaced_count(&self) -> usize {
        self.slots.values().filter(|s| s.ever_replaced).count()
    }
}

/// Fixed-size training batch drawn from one block.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub global_ids: Vec<GlobalId>,
    /// n x 9 feature matrix, see [`normalize_features`].
    pub features: Array2<f64>,
    /// Labels read from the label store at sampling time.
    pub labels: Vec<ClassId>,
}

/// Draws `n` ids from the block: uniformly without replacement when the block
/// has at least `n` points, otherwise every member once topped up with
/// uniform draws with replacement.
pub fn sample_block(
    scene: &Scene,
    block: &Block,
    store: &LabelStore,
    n: usize,
    rng: &mut impl Rng,
) -> Result<SampledBatch> {
    if block.is_empty() {
        return Err(Error::InvalidConfig("empty block".into()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be positive".into()));
    }
    let len = block.member_ids.len();
    let ids: Vec<GlobalId> = if len >= n {
        // Partial Fisher-Yates: the first n entries are a uniform draw
        // without replacement.
        let mut pool = block.member_ids.clone();
        for i in 0..n {
            let j = rng.random_range(i..len);
            pool.swap(i, j);
        }
        pool.truncate(n);
        pool
    } else {
        let mut ids = block.member_ids.clone();
        for _ in len..n {
            ids.push(block.member_ids[rng.random_range(0..len)]);
        }
        ids
    };
    let features = normalize_features(scene, block, &ids)?;
    let labels = ids
        .iter()
        .map(|&id| store.label(id))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledBatch {
        global_ids: ids,
        features,
        labels,
    })
}

/// Builds the n x 9 feature matrix for the given points of a block:
/// columns 0-2 are block-relative xy over `block.size` and z over the scene
/// height span, columns 3-5 the raw rgb, columns 6-8 the position normalized
/// by the scene bounding box. Degenerate scene axes normalize to 0.
pub fn normalize_features(scene: &Scene, block: &Block, ids: &[GlobalId]) -> Result<Array2<f64>> {
    let min = scene.bbox_min();
    let max = scene.bbox_max();
    let span: Vec<f64> = (0..3).map(|a| max[a] - min[a]).collect();
    let norm = |v: f64, s: f64| if s > 0.0 { v / s } else { 0.0 };

    let mut out = Array2::zeros((ids.len(), 9));
    for (row, &id) in ids.iter().enumerate() {
        let p = scene.point(id)?;
        out[[row, 0]] = (p.position[0] - block.origin[0]) / block.size;
        out[[row, 1]] = (p.position[1] - block.origin[1]) / block.size;
        out[[row, 2]] = norm(p.position[2] - min[2], span[2]);
        for c in 0..3 {
            out[[row, 3 + c]] = p.color[c];
        }
        for a in 0..3 {
            out[[row, 6 + a]] = norm(p.position[a] - min[a], span[a]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn grid_scene(nx: usize, ny: usize, step: f64) -> Scene {
        // Uniform xy grid at z = 0, one instance per point (labels all 0).
        let mut points = Vec::new();
        let mut id = 0;
        for i in 0..nx {
            for j in 0..ny {
                points.push(PointRecord {
                    global_id: id,
                    position: [i as f64 * step, j as f64 * step, 0.0],
                    color: [0.5, 0.5, 0.5],
                    gt_label: 0,
                    instance_id: id as u32,
                });
                id += 1;
            }
        }
        Scene::new(points, 2, vec![]).unwrap()
    }

    #[test]
    fn partition_grid_origins() {
        // xy extent 2.0 x 1.5, block 1.0, stride 0.5 -> 3 x 2 = 6 blocks.
        let scene = grid_scene(21, 16, 0.1);
        let blocks = partition_into_blocks(&scene, 1.0, 0.5).unwrap();
        assert_eq!(blocks.len(), 6);
        let origins: HashSet<(i64, i64)> = blocks
            .iter()
            .map(|b| {
                (
                    (b.origin[0] * 10.0).round() as i64,
                    (b.origin[1] * 10.0).round() as i64,
                )
            })
            .collect();
        for x in [0, 5, 10] {
            for y in [0, 5] {
                assert!(origins.contains(&(x, y)), "missing origin ({x},{y})");
            }
        }
    }

    #[test]
    fn partition_tiling_is_disjoint() {
        let scene = grid_scene(21, 21, 0.1);
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        let mut seen = HashSet::new();
        for b in &blocks {
            for &id in &b.member_ids {
                assert!(seen.insert(id), "point {id} in two blocks");
            }
        }
        assert_eq!(seen.len(), scene.len());
    }

    #[test]
    fn partition_small_scene_single_block() {
        let scene = grid_scene(4, 4, 0.1);
        let blocks = partition_into_blocks(&scene, 1.0, 0.5).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].member_ids.len(), scene.len());
    }

    #[test]
    fn partition_covers_every_point() {
        let scene = grid_scene(23, 17, 0.13);
        let blocks = partition_into_blocks(&scene, 1.0, 0.5).unwrap();
        let covered: HashSet<GlobalId> = blocks
            .iter()
            .flat_map(|b| b.member_ids.iter().copied())
            .collect();
        assert_eq!(covered.len(), scene.len());
    }

    #[test]
    fn partition_rejects_bad_args() {
        let scene = grid_scene(3, 3, 0.1);
        assert!(partition_into_blocks(&scene, 0.0, 0.5).is_err());
        assert!(partition_into_blocks(&scene, 1.0, 0.0).is_err());
    }

    #[test]
    fn sample_without_replacement_when_big() {
        let scene = grid_scene(80, 80, 0.01); // 6400 points, one block
        let store = LabelStore::from_ground_truth(&scene);
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        assert_eq!(blocks.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_block(&scene, &blocks[0], &store, 4096, &mut rng).unwrap();
        assert_eq!(batch.global_ids.len(), 4096);
        let distinct: HashSet<_> = batch.global_ids.iter().collect();
        assert_eq!(distinct.len(), 4096);
    }

    #[test]
    fn sample_exhaustive_draw() {
        let scene = grid_scene(2, 5, 0.1);
        let store = LabelStore::from_ground_truth(&scene);
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = sample_block(&scene, &blocks[0], &store, 10, &mut rng).unwrap();
        let mut ids = batch.global_ids.clone();
        ids.sort_unstable();
        assert_eq!(ids, blocks[0].member_ids);
    }

    #[test]
    fn sample_with_replacement_tops_up() {
        let scene = grid_scene(1, 3, 0.1);
        let store = LabelStore::from_ground_truth(&scene);
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = sample_block(&scene, &blocks[0], &store, 6, &mut rng).unwrap();
        assert_eq!(batch.global_ids.len(), 6);
        // All members once plus top-up: every member appears at least once.
        let distinct: HashSet<_> = batch.global_ids.iter().copied().collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn features_at_block_origin_are_zero() {
        let scene = grid_scene(11, 11, 0.1);
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        let b = &blocks[0];
        // Point 0 sits at the scene minimum corner, which is also the block
        // origin, with scene-min z.
        let f = normalize_features(&scene, b, &[0]).unwrap();
        assert_eq!(f[[0, 0]], 0.0);
        assert_eq!(f[[0, 1]], 0.0);
        assert_eq!(f[[0, 2]], 0.0);
    }

    #[test]
    fn features_pass_color_through() {
        let points = vec![
            PointRecord {
                global_id: 0,
                position: [0.0, 0.0, 0.0],
                color: [1.0, 1.0, 1.0],
                gt_label: 0,
                instance_id: 0,
            },
            PointRecord {
                global_id: 1,
                position: [0.5, 0.5, 0.5],
                color: [0.0, 0.25, 0.75],
                gt_label: 0,
                instance_id: 1,
            },
        ];
        let scene = Scene::new(points, 2, vec![]).unwrap();
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        let f = normalize_features(&scene, &blocks[0], &[0, 1]).unwrap();
        assert_eq!(f[[0, 3]], 1.0);
        assert_eq!(f[[0, 4]], 1.0);
        assert_eq!(f[[0, 5]], 1.0);
        assert_eq!(f[[1, 5]], 0.75);
    }

    #[test]
    fn features_scene_normalized_center() {
        // Scene spanning [0,2]^3; the point at (1,1,1) normalizes to 0.5.
        let mut points = vec![
            PointRecord {
                global_id: 0,
                position: [0.0, 0.0, 0.0],
                color: [0.0, 0.0, 0.0],
                gt_label: 0,
                instance_id: 0,
            },
            PointRecord {
                global_id: 1,
                position: [2.0, 2.0, 2.0],
                color: [0.0, 0.0, 0.0],
                gt_label: 0,
                instance_id: 1,
            },
        ];
        points.push(PointRecord {
            global_id: 2,
            position: [1.0, 1.0, 1.0],
            color: [0.0, 0.0, 0.0],
            gt_label: 0,
            instance_id: 2,
        });
        let scene = Scene::new(points, 2, vec![]).unwrap();
        let blocks = partition_into_blocks(&scene, 2.0, 2.0).unwrap();
        let f = normalize_features(&scene, &blocks[0], &[2]).unwrap();
        assert_eq!(f[[0, 6]], 0.5);
        assert_eq!(f[[0, 7]], 0.5);
        assert_eq!(f[[0, 8]], 0.5);
    }

    #[test]
    fn degenerate_axis_normalizes_to_zero() {
        let points = vec![
            PointRecord {
                global_id: 0,
                position: [0.0, 0.0, 1.0],
                color: [0.0, 0.0, 0.0],
                gt_label: 0,
                instance_id: 0,
            },
            PointRecord {
                global_id: 1,
                position: [1.0, 1.0, 1.0],
                color: [0.0, 0.0, 0.0],
                gt_label: 0,
                instance_id: 1,
            },
        ];
        let scene = Scene::new(points, 2, vec![]).unwrap();
        let blocks = partition_into_blocks(&scene, 1.0, 1.0).unwrap();
        let f = normalize_features(&scene, &blocks[0], &[0, 1]).unwrap();
        assert_eq!(f[[0, 2]], 0.0);
        assert_eq!(f[[1, 2]], 0.0);
        assert_eq!(f[[1, 8]], 0.0);
    }

    #[test]
    fn scene_rejects_mixed_instance_labels() {
        let points = vec![
            PointRecord {
                global_id: 0,
                position: [0.0; 3],
                color: [0.0; 3],
                gt_label: 0,
                instance_id: 7,
            },
            PointRecord {
                global_id: 1,
                position: [0.1; 3],
                color: [0.0; 3],
                gt_label: 1,
                instance_id: 7,
            },
        ];
        assert!(matches!(
            Scene::new(points, 2, vec![]),
            Err(Error::InstanceNotHomogeneous(7))
        ));
    }

    #[test]
    fn label_store_overwrite_marks_replaced() {
        let scene = grid_scene(2, 2, 0.1);
        let mut store = LabelStore::from_ground_truth(&scene);
        assert!(!store.ever_replaced(0).unwrap());
        store.overwrite(0, 0).unwrap(); // winner equals old label
        assert!(store.ever_replaced(0).unwrap());
        assert_eq!(store.label(0).unwrap(), 0);
        store.overwrite(0, 1).unwrap();
        assert_eq!(store.label(0).unwrap(), 1);
        assert_eq!(store.replaced_count(), 1);
    }
}
