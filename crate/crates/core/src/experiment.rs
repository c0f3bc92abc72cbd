//! File-level experiment commands: data generation, noise injection,
//! training, evaluation, and report assembly. One TOML config file drives
//! the whole pipeline; every command writes its artifacts plus a
//! `manifest.jsonl` under its output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cluster::{DbscanClusterer, DbscanParams};
use crate::data::{LabelStore, Scene};
use crate::io::{read_labels, read_scene, write_labels, write_scene};
use crate::metrics::{write_metrics_csv, EpochReport, read_metrics_csv};
use crate::model::{load_checkpoint, save_checkpoint, Dims, LossKind, ModelParams};
use crate::noise::{inject_asymmetric, inject_symmetric, measure_noise, NoiseKind};
use crate::pnal::{evaluate_scenes, run_training, EpochRecord, PnalConfig};
use crate::seed::{self, Stream};
use crate::synth::{build_benchmark, BenchmarkSpec};
use crate::{ClassId, Error, Result};

/// Training method selector, `--method` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ce,
    Gce,
    Sce,
    Pnal,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(Method::Ce),
            "gce" => Ok(Method::Gce),
            "sce" => Ok(Method::Sce),
            "pnal" => Ok(Method::Pnal),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected ce|gce|sce|pnal)"
            ))),
        }
    }
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ce => "ce",
            Method::Gce => "gce",
            Method::Sce => "sce",
            Method::Pnal => "pnal",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding PNTS files and their manifest.
    pub data_dir: Option<PathBuf>,
    /// Directory holding LBLS sidecars; absent means train on ground truth.
    pub labels_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    pub density: f64,
    pub color_noise: f64,
    pub jitter: f64,
    pub room_extent: [f64; 3],
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let spec = BenchmarkSpec::new(0);
        BenchmarkConfig {
            train_scenes: spec.train_scenes,
            test_scenes: spec.test_scenes,
            instances_min: spec.instances_min,
            instances_max: spec.instances_max,
            density: spec.density,
            color_noise: spec.color_noise,
            jitter: spec.jitter,
            room_extent: spec.room_extent,
        }
    }
}

impl BenchmarkConfig {
    fn to_spec(&self, seed: u64) -> BenchmarkSpec {
        BenchmarkSpec {
            seed,
            train_scenes: self.train_scenes,
            test_scenes: self.test_scenes,
            instances_min: self.instances_min,
            instances_max: self.instances_max,
            density: self.density,
            color_noise: self.color_noise,
            jitter: self.jitter,
            room_extent: self.room_extent,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub tau: f64,
    pub tau_pair: f64,
    pub pairs: Vec<(ClassId, ClassId)>,
    /// Defaults to the master seed when absent.
    pub seed: Option<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            kind: NoiseKind::Symmetric,
            tau: 0.6,
            tau_pair: 0.4,
            pairs: vec![(1, 2), (3, 4)],
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlocksConfig {
    pub block_size: f64,
    pub stride: f64,
    pub sample_n: usize,
}

impl Default for BlocksConfig {
    fn default() -> Self {
        BlocksConfig {
            block_size: 1.0,
            stride: 0.5,
            sample_n: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            eps: 0.018,
            min_pts: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            lr: 0.08,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PnalSection {
    pub q: usize,
    pub sigma: f64,
    pub gamma: f64,
    pub epochs_total: usize,
    pub e_warmup: usize,
}

impl Default for PnalSection {
    fn default() -> Self {
        PnalSection {
            q: 4,
            sigma: 0.7,
            gamma: 4.0,
            epochs_total: 30,
            e_warmup: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub q_gce: f64,
    pub sce_alpha: f64,
    pub sce_beta: f64,
    pub sce_log_zero_floor: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            q_gce: 0.7,
            sce_alpha: 0.1,
            sce_beta: 1.0,
            sce_log_zero_floor: -4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// When false, wall_time_s is written as 0 so output files are
    /// bit-reproducible across runs.
    pub timing: bool,
    /// Dump the corrected-label state as LBLS files after every epoch.
    pub snapshot_labels: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            timing: true,
            snapshot_labels: false,
        }
    }
}

/// The experiment configuration file. Every field has a default; `seed` is
/// mandatory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub blocks: BlocksConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub pnal: PnalSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            paths: PathsConfig::default(),
            benchmark: BenchmarkConfig::default(),
            noise: NoiseSection::default(),
            blocks: BlocksConfig::default(),
            clustering: ClusteringConfig::default(),
            model: ModelConfig::default(),
            pnal: PnalSection::default(),
            loss: LossSection::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.paths
            .data_dir
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("paths.data_dir is not set".into()))
    }

    fn pnal_config(&self, method: Method) -> PnalConfig {
        let e_warmup = match method {
            Method::Pnal => self.pnal.e_warmup,
            // Baselines are the warm-up stage run to the end.
            _ => self.pnal.epochs_total,
        };
        PnalConfig {
            q: self.pnal.q,
            sigma: self.pnal.sigma,
            gamma: self.pnal.gamma,
            epochs_total: self.pnal.epochs_total,
            e_warmup,
            lr: self.model.lr,
            momentum: self.model.momentum,
            block_size: self.blocks.block_size,
            stride: self.blocks.stride,
            sample_n: self.blocks.sample_n,
            seed: self.seed,
        }
    }

    fn warmup_loss(&self, method: Method) -> LossKind {
        match method {
            Method::Ce | Method::Pnal => LossKind::Ce,
            Method::Gce => LossKind::Gce {
                q_gce: self.loss.q_gce,
            },
            Method::Sce => LossKind::Sce {
                alpha: self.loss.sce_alpha,
                beta: self.loss.sce_beta,
                log_zero_floor: self.loss.sce_log_zero_floor,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: String,
    #[serde(default)]
    pub split: Option<String>,
    pub path: String,
}

fn write_manifest(dir: &Path, lines: &[serde_json::Value]) -> Result<()> {
    let file = fs::File::create(dir.join("manifest.jsonl"))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join("manifest.jsonl");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Malformed {
            format: "manifest",
            msg: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Scenes of one split listed by a data-dir manifest, in manifest order.
fn load_split(data_dir: &Path, split: &str) -> Result<Vec<(String, Scene)>> {
    let entries = read_manifest(data_dir)?;
    let mut out = Vec::new();
    for e in entries {
        if e.kind == "scene" && e.split.as_deref() == Some(split) {
            let scene = read_scene(&data_dir.join(&e.path))?;
            let stem = Path::new(&e.path)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or(&e.path)
                .to_string();
            out.push((stem, scene));
        }
    }
    if out.is_empty() {
        return Err(Error::MissingInput(format!(
            "no {split} scenes listed in {}",
            data_dir.display()
        )));
    }
    Ok(out)
}

/// Generates the benchmark scene files plus the split manifest.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let (train, test) = build_benchmark(&cfg.benchmark.to_spec(cfg.seed))?;
    let mut manifest = Vec::new();
    let mut written = Vec::new();
    for (split, scenes) in [("train", &train), ("test", &test)] {
        for (i, scene) in scenes.iter().enumerate() {
            let name = format!("{split}_{i:02}.pnts");
            let path = out_dir.join(&name);
            write_scene(scene, &path)?;
            manifest.push(json!({
                "kind": "scene",
                "split": split,
                "path": name,
                "points": scene.len(),
            }));
            written.push(path);
        }
    }
    write_manifest(out_dir, &manifest)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseOutcome {
    pub scene: String,
    pub instance_rate: f64,
    pub point_rate: f64,
    pub clamped: bool,
}

/// Corrupts the train-split labels per the noise section; writes one LBLS
/// sidecar per scene plus a JSON-lines summary with measured rates and the
/// gt->current confusion.
pub fn cmd_inject_noise(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<NoiseOutcome>> {
    fs::create_dir_all(out_dir)?;
    let data_dir = cfg.data_dir()?;
    let scenes = load_split(data_dir, "train")?;
    let noise_seed = cfg.noise.seed.unwrap_or(cfg.seed);

    let summary_file = fs::File::create(out_dir.join("noise_summary.jsonl"))?;
    let mut summary = BufWriter::new(summary_file);
    let mut manifest = Vec::new();
    let mut outcomes = Vec::new();
    for (i, (stem, scene)) in scenes.iter().enumerate() {
        cfg.noise.validate_for(scene.num_classes())?;
        let mut rng = seed::rng(noise_seed, Stream::Noise, i as u64, 0);
        let (store, clamped) = match cfg.noise.kind {
            NoiseKind::None => (LabelStore::from_ground_truth(scene), false),
            NoiseKind::Symmetric => (inject_symmetric(scene, cfg.noise.tau, &mut rng)?, false),
            NoiseKind::Asymmetric => {
                let (store, s) = inject_asymmetric(
                    scene,
                    cfg.noise.tau,
                    cfg.noise.tau_pair,
                    &cfg.noise.pairs,
                    &mut rng,
                )?;
                (store, s.clamped)
            }
        };
        let name = format!("{stem}.lbls");
        write_labels(scene, &|id| store.label(id).unwrap(), &out_dir.join(&name))?;
        let measured = measure_noise(scene, &store)?;
        writeln!(
            summary,
            "{}",
            json!({
                "scene": stem,
                "instance_rate": measured.instance_rate,
                "point_rate": measured.point_rate,
                "confusion": measured.confusion,
                "clamped": clamped,
            })
        )?;
        manifest.push(json!({"kind": "labels", "split": "train", "path": name}));
        outcomes.push(NoiseOutcome {
            scene: stem.clone(),
            instance_rate: measured.instance_rate,
            point_rate: measured.point_rate,
            clamped,
        });
    }
    summary.flush()?;
    manifest.push(json!({"kind": "noise_summary", "path": "noise_summary.jsonl"}));
    write_manifest(out_dir, &manifest)?;
    Ok(outcomes)
}

impl NoiseSection {
    fn validate_for(&self, num_classes: usize) -> Result<()> {
        crate::noise::NoiseConfig {
            kind: self.kind,
            tau: self.tau,
            tau_pair: self.tau_pair,
            pairs: self.pairs.clone(),
            seed: self.seed.unwrap_or(0),
        }
        .validate(num_classes)
    }
}

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub log: Vec<EpochRecord>,
}

/// Full training command: loads scenes (and noisy labels when configured),
/// trains with the chosen method, writes the checkpoint, metrics CSV, and
/// optional per-epoch label snapshots.
pub fn cmd_train(cfg: &ExperimentConfig, method: Method, out_dir: &Path) -> Result<TrainOutputs> {
    fs::create_dir_all(out_dir)?;
    let data_dir = cfg.data_dir()?;
    let train = load_split(data_dir, "train")?;
    let test = load_split(data_dir, "test")?;
    let stems: Vec<String> = train.iter().map(|(s, _)| s.clone()).collect();
    let train_scenes: Vec<Scene> = train.into_iter().map(|(_, s)| s).collect();
    let test_scenes: Vec<Scene> = test.into_iter().map(|(_, s)| s).collect();

    let mut stores = Vec::with_capacity(train_scenes.len());
    for (stem, scene) in stems.iter().zip(&train_scenes) {
        let store = match &cfg.paths.labels_dir {
            Some(dir) => {
                let labels = read_labels(&dir.join(format!("{stem}.lbls")))?;
                LabelStore::from_labels(scene, &labels)?
            }
            None => LabelStore::from_ground_truth(scene),
        };
        stores.push(store);
    }

    let pnal_cfg = cfg.pnal_config(method);
    let warmup_loss = cfg.warmup_loss(method);
    let num_classes = train_scenes[0].num_classes();
    let params = ModelParams::init(
        Dims {
            input: 9,
            hidden: cfg.model.hidden,
            classes: num_classes,
        },
        cfg.seed,
    );
    let clusterer = DbscanClusterer {
        params: DbscanParams {
            eps: cfg.clustering.eps,
            min_pts: cfg.clustering.min_pts,
        },
    };

    let snapshot = cfg.output.snapshot_labels;
    let snapshot_dir = out_dir.to_path_buf();
    let snapshot_stems = stems.clone();
    let snapshot_scenes = train_scenes.clone();
    let (params, log) = run_training(
        &train_scenes,
        &test_scenes,
        &mut stores,
        params,
        &pnal_cfg,
        &clusterer,
        &warmup_loss,
        move |epoch, stores| {
            if !snapshot {
                return Ok(());
            }
            let dir = snapshot_dir.join(format!("labels_epoch_{epoch:03}"));
            fs::create_dir_all(&dir)?;
            for ((stem, scene), store) in
                snapshot_stems.iter().zip(&snapshot_scenes).zip(stores)
            {
                write_labels(
                    scene,
                    &|id| store.label(id).unwrap(),
                    &dir.join(format!("{stem}.lbls")),
                )?;
            }
            Ok(())
        },
    )?;

    let checkpoint = out_dir.join("checkpoint.txt");
    save_checkpoint(&params, &checkpoint)?;
    let metrics = out_dir.join("metrics.csv");
    write_metrics_csv(&reports_from_log(&log, cfg.output.timing), &metrics)?;
    write_manifest(
        out_dir,
        &[
            json!({"kind": "checkpoint", "path": "checkpoint.txt", "method": method.name()}),
            json!({"kind": "metrics", "path": "metrics.csv", "method": method.name()}),
        ],
    )?;
    Ok(TrainOutputs {
        checkpoint,
        metrics,
        log,
    })
}

/// Two CSV rows per epoch (train then test). Correction stats are a
/// train-split quantity and are written as 0 on test rows; wall time is
/// zeroed when timing is off so outputs are bit-reproducible.
pub fn reports_from_log(log: &[EpochRecord], timing: bool) -> Vec<EpochReport> {
    let mut rows = Vec::with_capacity(log.len() * 2);
    for r in log {
        let wall = if timing { r.wall_time_s } else { 0.0 };
        rows.push(EpochReport {
            epoch: r.epoch,
            split: "train".into(),
            oa: r.train_oa,
            miou: r.train_miou,
            correction_frac: r.correction_frac,
            true_correction_frac: r.true_correction_frac,
            wall_time_s: wall,
        });
        rows.push(EpochReport {
            epoch: r.epoch,
            split: "test".into(),
            oa: r.test_oa,
            miou: r.test_miou,
            correction_frac: 0.0,
            true_correction_frac: 0.0,
            wall_time_s: wall,
        });
    }
    rows
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub split: String,
    pub oa: f64,
    pub miou: f64,
}

/// Evaluates a checkpoint on one split of the configured data directory.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    split: &str,
    out_dir: &Path,
) -> Result<EvalReport> {
    fs::create_dir_all(out_dir)?;
    let params = load_checkpoint(checkpoint)?;
    let scenes: Vec<Scene> = load_split(cfg.data_dir()?, split)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let (oa, miou) = evaluate_scenes(&params, &scenes, cfg.blocks.block_size)?;
    let report = EvalReport {
        split: split.to_string(),
        oa,
        miou,
    };
    let path = out_dir.join("eval.json");
    fs::write(&path, serde_json::to_string_pretty(&report).unwrap())?;
    write_manifest(out_dir, &[json!({"kind": "eval", "path": "eval.json"})])?;
    Ok(report)
}

pub struct ReportOutputs {
    pub table: String,
    pub curve_paths: Vec<PathBuf>,
}

/// Builds a method-comparison table plus one plot-ready curve CSV per input
/// metrics file. The OA delta column is measured against the first input.
pub fn cmd_report(inputs: &[(String, PathBuf)], out_dir: &Path) -> Result<ReportOutputs> {
    if inputs.is_empty() {
        return Err(Error::InvalidConfig("report needs at least one metrics CSV".into()));
    }
    fs::create_dir_all(out_dir)?;

    struct MethodSummary {
        name: String,
        test_oa: f64,
        test_miou: f64,
    }

    let mut summaries = Vec::new();
    let mut curve_paths = Vec::new();
    let mut manifest = Vec::new();
    for (name, path) in inputs {
        let rows = read_metrics_csv(path)?;
        if rows.is_empty() {
            return Err(Error::Malformed {
                format: "metrics CSV",
                msg: format!("{} has no rows", path.display()),
            });
        }
        let last_test = rows
            .iter()
            .rev()
            .find(|r| r.split == "test")
            .ok_or_else(|| Error::Malformed {
                format: "metrics CSV",
                msg: format!("{} has no test rows", path.display()),
            })?;
        summaries.push(MethodSummary {
            name: name.clone(),
            test_oa: last_test.oa,
            test_miou: last_test.miou,
        });

        // Curve CSV: one row per epoch with both splits side by side.
        let curve_name = format!("curve_{name}.csv");
        let curve_path = out_dir.join(&curve_name);
        let file = fs::File::create(&curve_path)?;
        let mut w = BufWriter::new(file);
        writeln!(
            w,
            "epoch,train_oa,train_miou,test_oa,test_miou,correction_frac,true_correction_frac"
        )?;
        let mut epochs: Vec<usize> = rows.iter().map(|r| r.epoch).collect();
        epochs.dedup();
        for epoch in epochs {
            let train = rows.iter().find(|r| r.epoch == epoch && r.split == "train");
            let test = rows.iter().find(|r| r.epoch == epoch && r.split == "test");
            if let (Some(tr), Some(te)) = (train, test) {
                writeln!(
                    w,
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    epoch,
                    tr.oa,
                    tr.miou,
                    te.oa,
                    te.miou,
                    tr.correction_frac,
                    tr.true_correction_frac
                )?;
            }
        }
        w.flush()?;
        manifest.push(json!({"kind": "curve", "path": curve_name, "method": name}));
        curve_paths.push(curve_path);
    }

    let base_oa = summaries[0].test_oa;
    let mut table = String::new();
    table.push_str(&format!(
        "{:<10} {:>10} {:>10} {:>10}\n",
        "method", "test_oa", "test_miou", "delta_oa"
    ));
    for s in &summaries {
        table.push_str(&format!(
            "{:<10} {:>10.4} {:>10.4} {:>+10.4}\n",
            s.name,
            s.test_oa,
            s.test_miou,
            s.test_oa - base_oa
        ));
    }
    let table_path = out_dir.join("report.txt");
    fs::write(&table_path, &table)?;
    manifest.push(json!({"kind": "report", "path": "report.txt"}));
    write_manifest(out_dir, &manifest)?;
    Ok(ReportOutputs { table, curve_paths })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_follow_recommended_schedule() {
        let cfg = ExperimentConfig::from_toml_str("seed = 1").unwrap();
        assert_eq!(cfg.pnal.epochs_total, 30);
        assert_eq!(cfg.pnal.e_warmup, 5);
        assert_eq!(cfg.pnal.q, 4);
        assert_eq!(cfg.pnal.gamma, 4.0);
        assert_eq!(cfg.clustering.eps, 0.018);
        assert_eq!(cfg.clustering.min_pts, 10);
        assert_eq!(cfg.blocks.block_size, 1.0);
        assert_eq!(cfg.blocks.stride, 0.5);
        assert_eq!(cfg.benchmark.train_scenes, 40);
        assert_eq!(cfg.benchmark.test_scenes, 10);
        // e_warmup = e_clean / 5 under the defaults.
        let p = cfg.pnal_config(Method::Pnal);
        assert_eq!(p.e_warmup * 5, p.e_clean());
    }

    #[test]
    fn baselines_collapse_to_warmup_only() {
        let cfg = ExperimentConfig::new(3);
        for method in [Method::Ce, Method::Gce, Method::Sce] {
            let p = cfg.pnal_config(method);
            assert_eq!(p.e_warmup, p.epochs_total);
        }
        let p = cfg.pnal_config(Method::Pnal);
        assert_eq!(p.e_warmup, 5);
        assert!(matches!(cfg.warmup_loss(Method::Gce), LossKind::Gce { .. }));
        assert!(matches!(cfg.warmup_loss(Method::Pnal), LossKind::Ce));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("seed = 1\ntypo_section = 2").is_err());
        assert!(
            ExperimentConfig::from_toml_str("seed = 1\n[pnal]\nnot_a_knob = 3").is_err()
        );
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::from_str("pnal").unwrap(), Method::Pnal);
        assert!(Method::from_str("banana").is_err());
    }

    #[test]
    fn report_rejects_empty_inputs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_report(&[], dir.path()).is_err());
    }
}
