//! Point-sampled reconstruction metrics (Chamfer distances, F-scores) and
//! segmentation metrics (IoU, mIoU, overall accuracy).

#[cfg(test)]
mod tests;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::vec3::Vec3;
use crate::pointnet::KdTree;
use crate::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.005;

fn check_clouds(pred: &[Vec3], gt: &[Vec3]) -> Result<()> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Validation(format!(
            "metrics need non-empty clouds (pred {}, gt {})",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Distance from every point of `from` to its nearest point in `to`.
pub fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Result<Vec<f64>> {
    let tree = KdTree::new(to.to_vec());
    from.par_iter().map(|&q| Ok(tree.nearest(q)?.1)).collect()
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

fn fscore_from(to_gt: &[f64], to_pred: &[f64], delta: f64) -> f64 {
    let p = to_gt.iter().filter(|&&d| d <= delta).count() as f64 / to_gt.len() as f64;
    let r = to_pred.iter().filter(|&&d| d <= delta).count() as f64 / to_pred.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn chamfer_from(to_gt: &[f64], to_pred: &[f64]) -> (f64, f64) {
    let l1 = (mean(to_gt.iter().copied(), to_gt.len()) + mean(to_pred.iter().copied(), to_pred.len())) / 2.0;
    let l2 = (mean(to_gt.iter().map(|d| d * d), to_gt.len())
        + mean(to_pred.iter().map(|d| d * d), to_pred.len()))
        / 2.0;
    (l1, l2)
}

/// Symmetric mean of the two directed mean nearest distances, plain and squared.
pub fn chamfer(pred: &[Vec3], gt: &[Vec3]) -> Result<(f64, f64)> {
    check_clouds(pred, gt)?;
    Ok(chamfer_from(&nearest_distances(pred, gt)?, &nearest_distances(gt, pred)?))
}

/// Harmonic mean of precision and recall at distance `delta` (inclusive).
pub fn fscore(pred: &[Vec3], gt: &[Vec3], delta: f64) -> Result<f64> {
    check_clouds(pred, gt)?;
    Ok(fscore_from(&nearest_distances(pred, gt)?, &nearest_distances(gt, pred)?, delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub cd_l1: f64,
    pub cd_l2: f64,
    pub fs_delta: f64,
    pub fs_2delta: f64,
    pub fs_4delta: f64,
    pub delta: f64,
    pub pred_count: usize,
    pub gt_count: usize,
}

impl ReconstructionReport {
    pub fn compute(pred: &[Vec3], gt: &[Vec3], delta: f64) -> Result<Self> {
        check_clouds(pred, gt)?;
        if !(delta > 0.0) {
            return Err(Error::Validation(format!("delta must be positive, got {delta}")));
        }
        let to_gt = nearest_distances(pred, gt)?;
        let to_pred = nearest_distances(gt, pred)?;
        let (cd_l1, cd_l2) = chamfer_from(&to_gt, &to_pred);
        Ok(ReconstructionReport {
            cd_l1,
            cd_l2,
            fs_delta: fscore_from(&to_gt, &to_pred, delta),
            fs_2delta: fscore_from(&to_gt, &to_pred, 2.0 * delta),
            fs_4delta: fscore_from(&to_gt, &to_pred, 4.0 * delta),
            delta,
            pred_count: pred.len(),
            gt_count: gt.len(),
        })
    }

    /// CD-L1 in units of 1e-2.
    pub fn cd_l1_display(&self) -> f64 {
        self.cd_l1 * 1e2
    }

    /// CD-L2 in units of 1e-4.
    pub fn cd_l2_display(&self) -> f64 {
        self.cd_l2 * 1e4
    }

    pub fn fscores_monotone(&self) -> bool {
        self.fs_delta <= self.fs_2delta && self.fs_2delta <= self.fs_4delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    /// `None` for classes that appear in neither prediction nor ground truth.
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    pub oa: f64,
    /// `confusion[gt][pred]`.
    pub confusion: Vec<Vec<u64>>,
}

pub fn seg_metrics(pred: &[u32], gt: &[u32], classes: usize) -> Result<SegmentationReport> {
    if pred.len() != gt.len() {
        return Err(Error::Validation(format!(
            "{} predicted labels for {} ground-truth labels",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Validation("no labels to score".into()));
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &t) in pred.iter().zip(gt) {
        if p as usize >= classes || t as usize >= classes {
            return Err(Error::Validation(format!(
                "label {} out of range for {classes} classes",
                p.max(t)
            )));
        }
        confusion[t as usize][p as usize] += 1;
    }
    let mut iou = Vec::with_capacity(classes);
    let mut present = Vec::new();
    for c in 0..classes {
        let tp = confusion[c][c];
        let gt_c: u64 = confusion[c].iter().sum();
        let pred_c: u64 = confusion.iter().map(|row| row[c]).sum();
        let union = gt_c + pred_c - tp;
        let v = (union > 0).then(|| tp as f64 / union as f64);
        if gt_c > 0 {
            present.push(v.unwrap_or(0.0));
        }
        iou.push(v);
    }
    let correct: u64 = (0..classes).map(|c| confusion[c][c]).sum();
    Ok(SegmentationReport {
        iou,
        miou: present.iter().sum::<f64>() / present.len() as f64,
        oa: correct as f64 / gt.len() as f64,
        confusion,
    })
}
