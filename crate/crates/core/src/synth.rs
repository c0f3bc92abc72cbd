//! Procedural indoor-style scene generation with per-instance ground truth.
//!
//! Class identity is carried mostly by color (each class has a well-separated
//! mean rgb), while geometry provides the instance structure the clustering
//! stage operates on. Instances are small dense surface patches so that
//! density clustering resolves them inside room blocks.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::data::{PointRecord, Scene};
use crate::seed::{self, Stream};
use crate::{ClassId, Error, Result};

/// Surface primitive with pose. `Plane` is an axis-aligned rectangle whose
/// normal is the given axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Plane {
        center: [f64; 3],
        half: [f64; 2],
        axis: usize,
    },
    Cuboid {
        center: [f64; 3],
        half: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
}

impl Shape {
    pub fn surface_area(&self) -> f64 {
        match self {
            Shape::Plane { half, .. } => 4.0 * half[0] * half[1],
            Shape::Cuboid { half, .. } => {
                8.0 * (half[0] * half[1] + half[0] * half[2] + half[1] * half[2])
            }
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub class_id: ClassId,
    pub shape: Shape,
    pub points: usize,
}

/// Full recipe for one scene; generation is a pure function of this value.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub room_extent: [f64; 3],
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub instances: Vec<InstanceSpec>,
    /// Per-class mean rgb.
    pub color_means: Vec<[f64; 3]>,
    /// Stddev of the per-channel Gaussian color noise.
    pub color_noise: f64,
    /// Stddev of the isotropic Gaussian surface jitter, meters.
    pub jitter: f64,
    pub seed: u64,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        if self.instances.is_empty() {
            return Err(Error::InvalidConfig("spec has zero instances".into()));
        }
        if self.color_means.len() != self.num_classes {
            return Err(Error::InvalidConfig(
                "one color mean per class required".into(),
            ));
        }
        for inst in &self.instances {
            if inst.class_id >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: inst.class_id,
                    num_classes: self.num_classes,
                });
            }
            if inst.points < 10 {
                return Err(Error::InvalidConfig(
                    "instance point counts must be >= 10".into(),
                ));
            }
        }
        Ok(())
    }
}

fn sample_on_shape(shape: &Shape, rng: &mut impl Rng) -> [f64; 3] {
    match shape {
        Shape::Plane { center, half, axis } => {
            let mut p = *center;
            let tangents: [usize; 2] = match axis {
                0 => [1, 2],
                1 => [0, 2],
                _ => [0, 1],
            };
            for (t, h) in tangents.iter().zip(half) {
                p[*t] += rng.random_range(-h..=*h);
            }
            p
        }
        Shape::Cuboid { center, half } => {
            // Face picked proportionally to its area, then a uniform point on it.
            let areas = [
                half[1] * half[2], // +-x
                half[0] * half[2], // +-y
                half[0] * half[1], // +-z
            ];
            let total: f64 = areas.iter().sum::<f64>() * 2.0;
            let mut pick = rng.random_range(0.0..total);
            let mut face = 5;
            for i in 0..6 {
                let a = areas[i / 2];
                if pick < a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let axis = face / 2;
            let side = if face % 2 == 0 { 1.0 } else { -1.0 };
            let mut p = *center;
            p[axis] += side * half[axis];
            for t in 0..3 {
                if t != axis {
                    p[t] += rng.random_range(-half[t]..=half[t]);
                }
            }
            p
        }
        Shape::Sphere { center, radius } => loop {
            let v: [f64; 3] = [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if norm > 1e-12 {
                return [
                    center[0] + radius * v[0] / norm,
                    center[1] + radius * v[1] / norm,
                    center[2] + radius * v[2] / norm,
                ];
            }
        },
    }
}

/// Generates the scene described by `spec`: points sampled on each instance's
/// surface with Gaussian jitter, colored by class mean plus clipped noise.
/// Deterministic given `spec.seed`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, Stream::SceneGen, 0, 0);
    let jitter = Normal::new(0.0, spec.jitter.max(0.0)).expect("finite jitter stddev");
    let color = Normal::new(0.0, spec.color_noise.max(0.0)).expect("finite color stddev");

    let mut points = Vec::with_capacity(spec.instances.iter().map(|i| i.points).sum());
    let mut next_id = 0u64;
    for (inst_idx, inst) in spec.instances.iter().enumerate() {
        let mean = spec.color_means[inst.class_id];
        for _ in 0..inst.points {
            let mut pos = sample_on_shape(&inst.shape, &mut rng);
            for a in 0..3 {
                pos[a] += jitter.sample(&mut rng);
            }
            let mut rgb = [0.0; 3];
            for c in 0..3 {
                rgb[c] = (mean[c] + color.sample(&mut rng)).clamp(0.0, 1.0);
            }
            points.push(PointRecord {
                global_id: next_id,
                position: pos,
                color: rgb,
                gt_label: inst.class_id,
                instance_id: inst_idx as u32,
            });
            next_id += 1;
        }
    }
    Scene::new(points, spec.num_classes, spec.class_names.clone())
}

pub const BENCHMARK_CLASSES: usize = 6;

pub fn benchmark_class_names() -> Vec<String> {
    ["floor", "wall", "ceiling", "table", "chair", "clutter"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Class color means, pairwise separated by at least 0.25 in rgb.
pub fn benchmark_color_means() -> Vec<[f64; 3]> {
    vec![
        [0.20, 0.20, 0.20], // floor
        [0.90, 0.90, 0.90], // wall
        [0.90, 0.20, 0.20], // ceiling
        [0.20, 0.90, 0.20], // table
        [0.20, 0.20, 0.90], // chair
        [0.90, 0.90, 0.20], // clutter
    ]
}

/// Parameters of the benchmark scene family. Defaults give the standard
/// 40-train / 10-test split; tests shrink `train_scenes`/`test_scenes` for
/// fast runs.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    /// Surface sampling density, points per square meter.
    pub density: f64,
    pub color_noise: f64,
    pub jitter: f64,
    pub room_extent: [f64; 3],
}

impl BenchmarkSpec {
    pub fn new(seed: u64) -> Self {
        BenchmarkSpec {
            seed,
            train_scenes: 40,
            test_scenes: 10,
            instances_min: 20,
            instances_max: 40,
            density: 25_000.0,
            color_noise: 0.10,
            jitter: 0.01,
            room_extent: [1.5, 1.5, 0.6],
        }
    }
}

fn benchmark_scene_spec(bench: &BenchmarkSpec, scene_seed: u64) -> SceneSpec {
    let mut rng = seed::rng(scene_seed, Stream::SceneGen, 1, 0);
    let room = bench.room_extent;
    let count = rng.random_range(bench.instances_min..=bench.instances_max);

    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        // The first pass over all classes guarantees every class appears.
        let class = if i < BENCHMARK_CLASSES {
            i
        } else {
            rng.random_range(0..BENCHMARK_CLASSES)
        };
        let shape = match class {
            0 | 2 => {
                // floor / ceiling patch: horizontal plane near bottom / top
                let half = [rng.random_range(0.03..0.06), rng.random_range(0.03..0.06)];
                let z = if class == 0 {
                    rng.random_range(0.02..0.08)
                } else {
                    rng.random_range(room[2] - 0.08..room[2] - 0.02)
                };
                Shape::Plane {
                    center: [
                        rng.random_range(half[0]..room[0] - half[0]),
                        rng.random_range(half[1]..room[1] - half[1]),
                        z,
                    ],
                    half,
                    axis: 2,
                }
            }
            1 => {
                // wall patch: vertical plane, normal x or y
                let axis = if rng.random_range(0..2) == 0 { 0 } else { 1 };
                let half = [rng.random_range(0.03..0.06), rng.random_range(0.03..0.06)];
                let mut center = [0.0; 3];
                center[axis] = rng.random_range(0.05..room[axis] - 0.05);
                let tangent = 1 - axis;
                center[tangent] = rng.random_range(half[0]..room[tangent] - half[0]);
                center[2] = rng.random_range(half[1] + 0.05..room[2] - half[1] - 0.05);
                Shape::Plane {
                    center,
                    half,
                    axis,
                }
            }
            3 | 4 => {
                // table / chair: small cuboid at furniture height
                let half = [
                    rng.random_range(0.018..0.030),
                    rng.random_range(0.018..0.030),
                    rng.random_range(0.018..0.030),
                ];
                Shape::Cuboid {
                    center: [
                        rng.random_range(half[0]..room[0] - half[0]),
                        rng.random_range(half[1]..room[1] - half[1]),
                        rng.random_range(0.1 * room[2]..0.5 * room[2]),
                    ],
                    half,
                }
            }
            _ => {
                // clutter: sphere anywhere in the room volume
                let radius = rng.random_range(0.020..0.032);
                Shape::Sphere {
                    center: [
                        rng.random_range(radius..room[0] - radius),
                        rng.random_range(radius..room[1] - radius),
                        rng.random_range(0.1 * room[2]..0.9 * room[2]),
                    ],
                    radius,
                }
            }
        };
        let points = ((shape.surface_area() * bench.density).ceil() as usize).max(10);
        instances.push(InstanceSpec {
            class_id: class,
            shape,
            points,
        });
    }

    SceneSpec {
        room_extent: room,
        num_classes: BENCHMARK_CLASSES,
        class_names: benchmark_class_names(),
        instances,
        color_means: benchmark_color_means(),
        color_noise: bench.color_noise,
        jitter: bench.jitter,
        seed: scene_seed,
    }
}

/// Builds the train/test scene lists for a benchmark spec. Scene `i` of each
/// split depends only on `(spec.seed, split, i)`.
pub fn build_benchmark(spec: &BenchmarkSpec) -> Result<(Vec<Scene>, Vec<Scene>)> {
    let gen_split = |split: u64, count: usize| -> Result<Vec<Scene>> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let scene_seed = seed::derive(spec.seed, Stream::SceneGen, split, i as u64);
                generate_scene(&benchmark_scene_spec(spec, scene_seed))
            })
            .collect()
    };
    Ok((gen_split(0, spec.train_scenes)?, gen_split(1, spec.test_scenes)?))
}

/// The fixed benchmark family: 40 train scenes, 10 test scenes, 6 classes.
pub fn default_benchmark(seed: u64) -> Result<(Vec<Scene>, Vec<Scene>)> {
    build_benchmark(&BenchmarkSpec::new(seed))
}
