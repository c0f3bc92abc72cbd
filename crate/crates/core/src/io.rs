//! Text file formats.
//!
//! Scene format "PNTS v1":
//! ```text
//! PNTS 1 <num_points> <num_classes>
//! CLASS <id> <name>          # optional, one per class
//! <global_id> <x> <y> <z> <r> <g> <b> <gt_label> <instance_id>
//! ```
//!
//! Label sidecar "LBLS v1":
//! ```text
//! LBLS 1 <num_points>
//! <global_id> <label>
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so write
//! followed by read reproduces the scene field-for-field.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{PointRecord, Scene};
use crate::{ClassId, Error, GlobalId, Result};

pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "PNTS 1 {} {}", scene.len(), scene.num_classes())?;
    for (id, name) in scene.class_names().iter().enumerate() {
        writeln!(w, "CLASS {id} {name}")?;
    }
    for p in scene.points() {
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            p.global_id,
            p.position[0],
            p.position[1],
            p.position[2],
            p.color[0],
            p.color[1],
            p.color[2],
            p.gt_label,
            p.instance_id
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    parse_scene(&text)
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::pnts("missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "PNTS" || fields[1] != "1" {
        return Err(Error::pnts(format!("bad header line: {header:?}")));
    }
    let num_points: usize = fields[2]
        .parse()
        .map_err(|_| Error::pnts("bad point count"))?;
    let num_classes: usize = fields[3]
        .parse()
        .map_err(|_| Error::pnts("bad class count"))?;
    if num_points == 0 {
        return Err(Error::EmptyScene);
    }

    let mut class_names: Vec<Option<String>> = vec![None; num_classes];
    let mut points = Vec::with_capacity(num_points);
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.first() == Some(&"CLASS") {
            if parts.len() < 3 {
                return Err(Error::pnts(format!("bad CLASS line: {line:?}")));
            }
            let id: usize = parts[1].parse().map_err(|_| Error::pnts("bad class id"))?;
            if id >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: id,
                    num_classes,
                });
            }
            class_names[id] = Some(parts[2..].join(" "));
            continue;
        }
        if parts.len() != 9 {
            return Err(Error::pnts(format!(
                "expected 9 fields on point line, got {}: {line:?}",
                parts.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::pnts(format!("bad float {s:?}")))
        };
        let gt_label: usize = parts[7]
            .parse()
            .map_err(|_| Error::pnts(format!("bad label {:?}", parts[7])))?;
        if gt_label >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: gt_label,
                num_classes,
            });
        }
        points.push(PointRecord {
            global_id: parts[0]
                .parse()
                .map_err(|_| Error::pnts(format!("bad global id {:?}", parts[0])))?,
            position: [parse_f(parts[1])?, parse_f(parts[2])?, parse_f(parts[3])?],
            color: [parse_f(parts[4])?, parse_f(parts[5])?, parse_f(parts[6])?],
            gt_label,
            instance_id: parts[8]
                .parse()
                .map_err(|_| Error::pnts(format!("bad instance id {:?}", parts[8])))?,
        });
    }
    if points.len() != num_points {
        return Err(Error::pnts(format!(
            "header declares {num_points} points, file has {}",
            points.len()
        )));
    }
    let names: Vec<String> = class_names
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.unwrap_or_else(|| format!("class_{i}")))
        .collect();
    Scene::new(points, num_classes, names)
}

/// Writes a label sidecar in scene point order.
pub fn write_labels(scene: &Scene, labels: &dyn Fn(GlobalId) -> ClassId, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "LBLS 1 {}", scene.len())?;
    for p in scene.points() {
        writeln!(w, "{} {}", p.global_id, labels(p.global_id))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<HashMap<GlobalId, ClassId>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<HashMap<GlobalId, ClassId>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::lbls("missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "LBLS" || fields[1] != "1" {
        return Err(Error::lbls(format!("bad header line: {header:?}")));
    }
    let num_points: usize = fields[2]
        .parse()
        .map_err(|_| Error::lbls("bad point count"))?;
    let mut out = HashMap::with_capacity(num_points);
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::lbls(format!("bad label line: {line:?}")));
        }
        let id: GlobalId = parts[0]
            .parse()
            .map_err(|_| Error::lbls(format!("bad global id {:?}", parts[0])))?;
        let label: ClassId = parts[1]
            .parse()
            .map_err(|_| Error::lbls(format!("bad label {:?}", parts[1])))?;
        if out.insert(id, label).is_some() {
            return Err(Error::DuplicateGlobalId(id));
        }
    }
    if out.len() != num_points {
        return Err(Error::lbls(format!(
            "header declares {num_points} labels, file has {}",
            out.len()
        )));
    }
    Ok(out)
}
