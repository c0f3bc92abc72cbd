//! Segmentation quality and correction-process measurement, CSV emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::data::{LabelStore, Scene};
use crate::{ClassId, Error, Result};

pub fn overall_accuracy(pred: &[ClassId], gt: &[ClassId]) -> f64 {
    assert_eq!(pred.len(), gt.len());
    if pred.is_empty() {
        return 0.0;
    }
    let matches = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    matches as f64 / pred.len() as f64
}

/// Mean over classes present in gt or pred of TP / (TP + FP + FN); classes
/// absent from both are excluded from the mean.
pub fn mean_iou(pred: &[ClassId], gt: &[ClassId], num_classes: usize) -> f64 {
    assert_eq!(pred.len(), gt.len());
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[g] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..num_classes {
        let denom = tp[c] + fp[c] + fneg[c];
        if denom > 0 {
            sum += tp[c] as f64 / denom as f64;
            present += 1;
        }
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

/// (fraction of points ever replaced, fraction of those matching ground
/// truth). Replacements that restored the original label count.
pub fn correction_stats(store: &LabelStore, scene: &Scene) -> Result<(f64, f64)> {
    let mut replaced = 0usize;
    let mut correct = 0usize;
    for p in scene.points() {
        if store.ever_replaced(p.global_id)? {
            replaced += 1;
            if store.label(p.global_id)? == p.gt_label {
                correct += 1;
            }
        }
    }
    let frac = replaced as f64 / scene.len() as f64;
    let true_frac = if replaced == 0 {
        0.0
    } else {
        correct as f64 / replaced as f64
    };
    Ok((frac, true_frac))
}

/// One metrics row; the CSV carries one row per (epoch, split).
#[derive(Debug, Clone, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub split: String,
    pub oa: f64,
    pub miou: f64,
    pub correction_frac: f64,
    pub true_correction_frac: f64,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,split,oa,miou,correction_frac,true_correction_frac,wall_time_s";

pub fn format_report_row(r: &EpochReport) -> String {
    format!(
        "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
        r.epoch, r.split, r.oa, r.miou, r.correction_frac, r.true_correction_frac, r.wall_time_s
    )
}

/// Writes the metrics CSV with deterministic row order (rows as given).
pub fn write_metrics_csv(reports: &[EpochReport], path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{METRICS_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", format_report_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochReport>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::Malformed {
                format: "metrics CSV",
                msg: format!("bad header {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::Malformed {
                format: "metrics CSV",
                msg: format!("bad row {line:?}"),
            });
        }
        let f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Malformed {
                format: "metrics CSV",
                msg: format!("bad float {s:?}"),
            })
        };
        out.push(EpochReport {
            epoch: parts[0].parse().map_err(|_| Error::Malformed {
                format: "metrics CSV",
                msg: format!("bad epoch {:?}", parts[0]),
            })?,
            split: parts[1].to_string(),
            oa: f(parts[2])?,
            miou: f(parts[3])?,
            correction_frac: f(parts[4])?,
            true_correction_frac: f(parts[5])?,
            wall_time_s: f(parts[6])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PointRecord;

    #[test]
    fn oa_examples() {
        assert_eq!(overall_accuracy(&[0, 1, 2], &[0, 1, 2]), 1.0);
        assert_eq!(overall_accuracy(&[1, 2, 0], &[0, 1, 2]), 0.0);
        assert_eq!(overall_accuracy(&[0, 1, 2, 2], &[0, 1, 2, 3]), 0.75);
    }

    #[test]
    fn miou_examples() {
        let v = mean_iou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2);
        assert!((v - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(mean_iou(&[0, 1], &[0, 1], 4), 1.0);
    }

    #[test]
    fn miou_skips_absent_classes() {
        // Class 2 and 3 appear nowhere; no NaN, mean over classes 0 and 1.
        let v = mean_iou(&[0, 0, 1], &[0, 1, 1], 4);
        assert!((v - (0.5 + 0.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn oa_and_miou_are_permutation_invariant() {
        let pred = [0, 1, 2, 0, 1, 2, 1];
        let gt = [0, 1, 1, 0, 2, 2, 1];
        let perm = [6, 0, 3, 2, 5, 1, 4];
        let pred_p: Vec<_> = perm.iter().map(|&i| pred[i]).collect();
        let gt_p: Vec<_> = perm.iter().map(|&i| gt[i]).collect();
        assert_eq!(overall_accuracy(&pred, &gt), overall_accuracy(&pred_p, &gt_p));
        assert_eq!(mean_iou(&pred, &gt, 3), mean_iou(&pred_p, &gt_p, 3));
    }

    fn scene_of(n: usize) -> Scene {
        let points = (0..n)
            .map(|i| PointRecord {
                global_id: i as u64,
                position: [i as f64, 0.0, 0.0],
                color: [0.0; 3],
                gt_label: 0,
                instance_id: i as u32,
            })
            .collect();
        Scene::new(points, 2, vec![]).unwrap()
    }

    #[test]
    fn correction_stats_cases() {
        let scene = scene_of(20);
        let store = LabelStore::from_ground_truth(&scene);
        assert_eq!(correction_stats(&store, &scene).unwrap(), (0.0, 0.0));

        let mut store = LabelStore::from_ground_truth(&scene);
        // Replace 10 points; 8 back to gt (label 0), 2 to label 1.
        for id in 0..10u64 {
            store.overwrite(id, if id < 8 { 0 } else { 1 }).unwrap();
        }
        let (frac, true_frac) = correction_stats(&store, &scene).unwrap();
        assert!((frac - 0.5).abs() < 1e-12);
        assert!((true_frac - 0.8).abs() < 1e-12);

        let mut store = LabelStore::from_ground_truth(&scene);
        for id in 0..20u64 {
            store.overwrite(id, 0).unwrap();
        }
        assert_eq!(correction_stats(&store, &scene).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            EpochReport {
                epoch: 1,
                split: "train".into(),
                oa: 0.5,
                miou: 0.25,
                correction_frac: 0.0,
                true_correction_frac: 0.0,
                wall_time_s: 0.0,
            },
            EpochReport {
                epoch: 1,
                split: "test".into(),
                oa: 0.4,
                miou: 0.2,
                correction_frac: 0.0,
                true_correction_frac: 0.0,
                wall_time_s: 0.0,
            },
        ];
        write_metrics_csv(&rows, &path).unwrap();
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].epoch, 1);
        assert_eq!(back[0].split, "train");
        assert!((back[1].oa - 0.4).abs() < 1e-12);
    }
}
