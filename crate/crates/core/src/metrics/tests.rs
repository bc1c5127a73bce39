use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::vec3::dist;

fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.5..0.5)))
        .collect()
}

fn brute_nearest(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    from.iter()
        .map(|&q| to.iter().map(|&p| dist(q, p)).fold(f64::INFINITY, f64::min))
        .collect()
}

fn brute_report(pred: &[Vec3], gt: &[Vec3], delta: f64) -> (f64, f64, [f64; 3]) {
    let a = brute_nearest(pred, gt);
    let b = brute_nearest(gt, pred);
    let m = |v: &[f64], sq: bool| v.iter().map(|d| if sq { d * d } else { *d }).sum::<f64>() / v.len() as f64;
    let f = |t: f64| {
        let p = a.iter().filter(|&&d| d <= t).count() as f64 / a.len() as f64;
        let r = b.iter().filter(|&&d| d <= t).count() as f64 / b.len() as f64;
        if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
    };
    (
        (m(&a, false) + m(&b, false)) / 2.0,
        (m(&a, true) + m(&b, true)) / 2.0,
        [f(delta), f(2.0 * delta), f(4.0 * delta)],
    )
}

#[test]
fn identical_clouds() {
    let c = cloud(300, 1);
    assert_eq!(chamfer(&c, &c).unwrap(), (0.0, 0.0));
    assert_eq!(fscore(&c, &c, 0.005).unwrap(), 1.0);
}

#[test]
fn single_pair() {
    let (l1, l2) = chamfer(&[[0.0; 3]], &[[0.0, 0.0, 1.0]]).unwrap();
    assert_eq!((l1, l2), (1.0, 1.0));
    let (l1, l2) = chamfer(&[[0.0; 3]], &[[0.0, 0.0, 0.5], [0.0, 0.0, -0.5]]).unwrap();
    // pred→gt 0.5; gt→pred 0.5 each.
    assert_eq!((l1, l2), (0.5, 0.25));
}

#[test]
fn threshold_is_inclusive_but_strict_beyond() {
    let delta = 0.005;
    let gt = [[0.0; 3]];
    assert_eq!(fscore(&[[0.25, 0.0, 0.0]], &[[0.25 - 0.0078125, 0.0, 0.0]], 0.0078125).unwrap(), 1.0);
    assert_eq!(fscore(&[[delta + 1e-9, 0.0, 0.0]], &gt, delta).unwrap(), 0.0);
}

#[test]
fn four_versus_four_enumeration() {
    let pred = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.4, 0.0, 0.0]];
    let gt = [[0.003, 0.0, 0.0], [0.1, 0.004, 0.0], [0.3, 0.0, 0.0], [0.4, 0.0, 0.02]];
    // pred→gt: 0.003, 0.004, 0.1, 0.02  -> within 0.005: 2 of 4
    // gt→pred: 0.003, 0.004, 0.1, 0.02  -> within 0.005: 2 of 4
    let f = fscore(&pred, &gt, 0.005).unwrap();
    assert!((f - 0.5).abs() < 1e-12);
    // At 0.02 three of four on each side.
    let f = fscore(&pred, &gt, 0.02).unwrap();
    assert!((f - 0.75).abs() < 1e-12);
    let pred2 = [[0.0, 0.0, 0.0], [0.9, 0.0, 0.0], [0.9, 0.1, 0.0], [0.9, 0.2, 0.0]];
    // precision 1/4, recall 1/4 + gt[1] (0.1 from pred[0]) no -> only gt[0]: 1/4.
    let f = fscore(&pred2, &gt, 0.005).unwrap();
    assert!((f - 0.25).abs() < 1e-12);
}

#[test]
fn kdtree_matches_brute_force() {
    for seed in 0..3 {
        let pred = cloud(2000, seed);
        let gt = cloud(2000, seed + 100);
        let r = ReconstructionReport::compute(&pred, &gt, 0.005).unwrap();
        let (l1, l2, f) = brute_report(&pred, &gt, 0.005);
        assert!((r.cd_l1 - l1).abs() < 1e-9);
        assert!((r.cd_l2 - l2).abs() < 1e-9);
        assert!((r.fs_delta - f[0]).abs() < 1e-9);
        assert!((r.fs_2delta - f[1]).abs() < 1e-9);
        assert!((r.fs_4delta - f[2]).abs() < 1e-9);
        assert!(r.fscores_monotone());
    }
}

#[test]
fn empty_clouds_rejected() {
    assert!(chamfer(&[], &[[0.0; 3]]).is_err());
    assert!(fscore(&[[0.0; 3]], &[], 0.1).is_err());
    assert!(ReconstructionReport::compute(&[[0.0; 3]], &[[0.0; 3]], 0.0).is_err());
}

#[test]
fn display_scales() {
    let r = ReconstructionReport::compute(&[[0.0; 3]], &[[0.0, 0.0, 0.01]], 0.005).unwrap();
    assert!((r.cd_l1_display() - 1.0).abs() < 1e-12);
    assert!((r.cd_l2_display() - 1.0).abs() < 1e-9);
}

#[test]
fn perfect_segmentation() {
    let l = [0, 1, 2, 1, 0];
    let r = seg_metrics(&l, &l, 3).unwrap();
    assert_eq!((r.miou, r.oa), (1.0, 1.0));
}

#[test]
fn hand_confusion_matrix() {
    let r = seg_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
    assert_eq!(r.oa, 0.5);
    assert_eq!(r.iou, vec![Some(0.5), Some(0.0)]);
    assert_eq!(r.miou, 0.25);
    assert_eq!(r.confusion, vec![vec![2, 0], vec![2, 0]]);
}

#[test]
fn absent_classes_excluded() {
    let r = seg_metrics(&[0, 1, 2, 1], &[0, 1, 1, 1], 3).unwrap();
    // class 0: 1/1; class 1: 2/3; class 2 absent from gt.
    assert!((r.miou - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    assert_eq!(r.iou[2], Some(0.0));
    let r = seg_metrics(&[0, 0], &[0, 0], 3).unwrap();
    assert_eq!(r.iou, vec![Some(1.0), None, None]);
    assert_eq!(r.miou, 1.0);
}

#[test]
fn segmentation_errors() {
    assert!(seg_metrics(&[0, 3], &[0, 1], 3).is_err());
    assert!(seg_metrics(&[0], &[0, 1], 3).is_err());
    assert!(seg_metrics(&[], &[], 3).is_err());
}

#[test]
fn report_json_fields() {
    let r = ReconstructionReport::compute(&[[0.0; 3]], &[[0.0; 3]], 0.005).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in ["cd_l1", "cd_l2", "fs_delta", "fs_2delta", "fs_4delta", "delta"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

proptest! {
    #[test]
    fn chamfer_symmetric_and_fscore_monotone(seed in 0u64..1000, m in 1usize..60, n in 1usize..60) {
        let a = cloud(m, seed);
        let b = cloud(n, seed ^ 0xabc);
        let (x1, x2) = chamfer(&a, &b).unwrap();
        let (y1, y2) = chamfer(&b, &a).unwrap();
        prop_assert!((x1 - y1).abs() < 1e-15 && (x2 - y2).abs() < 1e-15);
        let r = ReconstructionReport::compute(&a, &b, 0.05).unwrap();
        prop_assert!(r.fscores_monotone());
        prop_assert!((0.0..=1.0).contains(&r.fs_4delta));
        let (l1, l2, f) = brute_report(&a, &b, 0.05);
        prop_assert!((r.cd_l1 - l1).abs() < 1e-12 && (r.cd_l2 - l2).abs() < 1e-12);
        prop_assert!(f == [r.fs_delta, r.fs_2delta, r.fs_4delta]);
    }
}
