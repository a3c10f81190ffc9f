//! Curve-vs-ground-truth scores: Chamfer distance, precision/recall/F at a
//! match radius, and voxel-occupancy IoU.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RationalBezier, Vec3};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub iou: f64,
    pub n_pred: usize,
    pub n_gt: usize,
    pub threshold: f64,
}

impl MetricReport {
    pub const SUMMARY_HEADER: &'static str = "name,chamfer,precision,recall,fscore,iou,n_pred,n_gt,threshold";

    /// One comma-separated line for tabulating many runs.
    pub fn summary_line(&self, name: &str) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            name, self.chamfer, self.precision, self.recall, self.fscore, self.iou, self.n_pred, self.n_gt, self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub threshold: f64,
    pub sample_spacing: f64,
    pub voxel_resolution: usize,
    /// mean of squared instead of plain distances
    pub squared_chamfer: bool,
    /// map both sets by the transform that normalizes the ground truth
    pub normalize: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.02,
            sample_spacing: 0.005,
            voxel_resolution: 64,
            squared_chamfer: false,
            normalize: false,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.sample_spacing > 0.0 && self.voxel_resolution > 0) {
            return Err(Error::InvalidParameter(
                "threshold, sample_spacing and voxel_resolution must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform scale plus translation: `p ↦ scale · p + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub offset: Vec3,
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.offset
    }
}

/// Maps the bounding box's longest side onto `[0,1]`, centering the others.
pub fn normalizing_transform(points: &[Vec3]) -> Result<Similarity> {
    let first = points.first().ok_or(Error::EmptySet)?;
    let (mut lo, mut hi) = (*first, *first);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::Degenerate("points have zero extent".into()));
    }
    let scale = 1.0 / extent;
    let center = (lo + hi) * 0.5;
    Ok(Similarity {
        scale,
        offset: Vec3::repeat(0.5) - center * scale,
    })
}

pub fn normalize_points(points: &[Vec3]) -> Result<Vec<Vec3>> {
    let t = normalizing_transform(points)?;
    Ok(points.iter().map(|p| t.apply(p)).collect())
}

fn voxels(points: &[Vec3], n: usize) -> HashSet<[usize; 3]> {
    let cell = |v: f64| ((v * n as f64).floor().max(0.0) as usize).min(n - 1);
    points.iter().map(|p| [cell(p.x), cell(p.y), cell(p.z)]).collect()
}

/// Scores two point sets directly.
pub fn point_metrics(pred: &[Vec3], gt: &[Vec3], opts: &EvalOptions) -> Result<MetricReport> {
    opts.validate()?;
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySet);
    }
    let (pred, gt): (Vec<Vec3>, Vec<Vec3>) = if opts.normalize {
        let t = normalizing_transform(gt)?;
        (pred.iter().map(|p| t.apply(p)).collect(), gt.iter().map(|p| t.apply(p)).collect())
    } else {
        (pred.to_vec(), gt.to_vec())
    };
    let gt_tree = KdTree::new(&gt);
    let pred_tree = KdTree::new(&pred);
    let dist = |d2: f64| if opts.squared_chamfer { d2 } else { d2.sqrt() };
    let t2 = opts.threshold * opts.threshold;
    let (mut sum_p, mut hit_p) = (0.0, 0usize);
    for p in &pred {
        let d2 = gt_tree.nearest(p).expect("nonempty").1;
        sum_p += dist(d2);
        hit_p += usize::from(d2 < t2);
    }
    let (mut sum_g, mut hit_g) = (0.0, 0usize);
    for g in &gt {
        let d2 = pred_tree.nearest(g).expect("nonempty").1;
        sum_g += dist(d2);
        hit_g += usize::from(d2 < t2);
    }
    let precision = hit_p as f64 / pred.len() as f64;
    let recall = hit_g as f64 / gt.len() as f64;
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let vp = voxels(&pred, opts.voxel_resolution);
    let vg = voxels(&gt, opts.voxel_resolution);
    let inter = vp.intersection(&vg).count();
    let union = vp.len() + vg.len() - inter;
    Ok(MetricReport {
        chamfer: 0.5 * (sum_p / pred.len() as f64 + sum_g / gt.len() as f64),
        precision,
        recall,
        fscore,
        iou: inter as f64 / union as f64,
        n_pred: pred.len(),
        n_gt: gt.len(),
        threshold: opts.threshold,
    })
}

pub fn sample_curves(curves: &[RationalBezier], spacing: f64) -> Vec<Vec3> {
    curves.iter().flat_map(|c| c.sample_arc_length(spacing)).collect()
}

/// Samples the curves at `sample_spacing` and scores them against `gt`.
pub fn compute_metrics(curves: &[RationalBezier], gt: &[Vec3], opts: &EvalOptions) -> Result<MetricReport> {
    if curves.is_empty() {
        return Err(Error::EmptySet);
    }
    opts.validate()?;
    point_metrics(&sample_curves(curves, opts.sample_spacing), gt, opts)
}
