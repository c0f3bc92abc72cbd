//! Density-based clustering of block points into label-correction units.
//!
//! The dbscan semantics are pinned exactly: a point is core iff it has at
//! least `min_pts` neighbors within `eps` (distance inclusive, self counted);
//! clusters are the connected components of core points under eps-
//! reachability, discovered in ascending index order; a border point joins
//! the lowest-id cluster among its core neighbors; everything else is noise.

use std::collections::HashMap;

use crate::data::{Block, Scene};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Neighborhood radius in normalized block coordinates.
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 0.018,
            min_pts: 10,
        }
    }
}

/// Partition of a point set into clusters; `None` marks noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub cluster_of: Vec<Option<usize>>,
    /// Member indices per cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    pub k: usize,
}

impl ClusterAssignment {
    fn from_labels(cluster_of: Vec<Option<usize>>, k: usize) -> Self {
        let mut clusters = vec![Vec::new(); k];
        for (i, c) in cluster_of.iter().enumerate() {
            if let Some(c) = c {
                clusters[*c].push(i);
            }
        }
        ClusterAssignment {
            cluster_of,
            clusters,
            k,
        }
    }

    pub fn noise_count(&self) -> usize {
        self.cluster_of.iter().filter(|c| c.is_none()).count()
    }
}

/// Uniform grid of cell size `eps` for neighbor queries.
struct NeighborGrid<'a> {
    points: &'a [[f64; 3]],
    cells: HashMap<[i64; 3], Vec<usize>>,
    eps2: f64,
    inv_eps: f64,
}

impl<'a> NeighborGrid<'a> {
    fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let inv_eps = 1.0 / eps;
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell_of(p, inv_eps)).or_default().push(i);
        }
        NeighborGrid {
            points,
            cells,
            eps2: eps * eps,
            inv_eps,
        }
    }

    fn cell_of(p: &[f64; 3], inv_eps: f64) -> [i64; 3] {
        [
            (p[0] * inv_eps).floor() as i64,
            (p[1] * inv_eps).floor() as i64,
            (p[2] * inv_eps).floor() as i64,
        ]
    }

    /// Indices within eps of point `i`, self included, ascending.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = &self.points[i];
        let home = Self::cell_of(p, self.inv_eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let cell = [home[0] + dx, home[1] + dy, home[2] + dz];
                    if let Some(members) = self.cells.get(&cell) {
                        for &j in members {
                            let q = &self.points[j];
                            let d2 = (p[0] - q[0]).powi(2)
                                + (p[1] - q[1]).powi(2)
                                + (p[2] - q[2]).powi(2);
                            if d2 <= self.eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Dbscan over raw positions. Deterministic for a fixed input ordering.
pub fn dbscan(points: &[[f64; 3]], params: &DbscanParams) -> ClusterAssignment {
    let n = points.len();
    let grid = NeighborGrid::new(points, params.eps);
    let neighborhoods: Vec<Vec<usize>> = (0..n).map(|i| grid.neighbors(i)).collect();
    assign_from_neighborhoods(&neighborhoods, params.min_pts)
}

/// Shared second half of dbscan: given precomputed inclusive eps-neighbor
/// lists, form core components and attach border points.
pub fn assign_from_neighborhoods(
    neighborhoods: &[Vec<usize>],
    min_pts: usize,
) -> ClusterAssignment {
    let n = neighborhoods.len();
    let core: Vec<bool> = neighborhoods.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut cluster_of: Vec<Option<usize>> = vec![None; n];
    let mut k = 0;
    for seed in 0..n {
        if !core[seed] || cluster_of[seed].is_some() {
            continue;
        }
        // Expand the component of core points reachable from this seed.
        cluster_of[seed] = Some(k);
        let mut stack = vec![seed];
        while let Some(i) = stack.pop() {
            for &j in &neighborhoods[i] {
                if core[j] && cluster_of[j].is_none() {
                    cluster_of[j] = Some(k);
                    stack.push(j);
                }
            }
        }
        k += 1;
    }
    // Border points: lowest cluster id among core neighbors.
    for i in 0..n {
        if core[i] || cluster_of[i].is_some() {
            continue;
        }
        cluster_of[i] = neighborhoods[i]
            .iter()
            .filter(|&&j| core[j])
            .filter_map(|&j| cluster_of[j])
            .min();
    }
    ClusterAssignment::from_labels(cluster_of, k)
}

/// Maps the block's member positions into the unit cube with one isotropic
/// scale (largest axis span), preserving shape.
pub fn normalize_block_positions(scene: &Scene, block: &Block) -> Result<Vec<[f64; 3]>> {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut positions = Vec::with_capacity(block.member_ids.len());
    for &id in &block.member_ids {
        let p = scene.point(id)?.position;
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
        positions.push(p);
    }
    let scale = (0..3).map(|a| max[a] - min[a]).fold(0.0f64, f64::max);
    let inv = if scale > 0.0 { 1.0 / scale } else { 0.0 };
    for p in &mut positions {
        for a in 0..3 {
            p[a] = (p[a] - min[a]) * inv;
        }
    }
    Ok(positions)
}

/// Clusters one block: positions are block-normalized, dbscan runs, and every
/// noise point is re-emitted as a singleton cluster so each block point
/// belongs to exactly one correction unit. Indices are local to
/// `block.member_ids`.
pub fn cluster_block(
    scene: &Scene,
    block: &Block,
    params: &DbscanParams,
) -> Result<ClusterAssignment> {
    let positions = normalize_block_positions(scene, block)?;
    let mut assignment = dbscan(&positions, params);
    let mut k = assignment.k;
    for i in 0..assignment.cluster_of.len() {
        if assignment.cluster_of[i].is_none() {
            assignment.cluster_of[i] = Some(k);
            assignment.clusters.push(vec![i]);
            k += 1;
        }
    }
    assignment.k = k;
    Ok(assignment)
}

/// Pluggable clustering contract for the label-correction stage.
pub trait Clusterer: Sync {
    fn cluster_block(&self, scene: &Scene, block: &Block) -> Result<ClusterAssignment>;
}

#[derive(Debug, Clone, Default)]
pub struct DbscanClusterer {
    pub params: DbscanParams,
}

impl Clusterer for DbscanClusterer {
    fn cluster_block(&self, scene: &Scene, block: &Block) -> Result<ClusterAssignment> {
        cluster_block(scene, block, &self.params)
    }
}
