//! Accuracy and size evaluation: labelled samples along sensor rays,
//! ROC and precision-recall curves, and memory accounting.

use std::fmt::Write as _;
use std::path::Path;

use crate::depth::DepthImage;
use crate::error::Result;
use crate::io::mapfile::{HEADER_BYTES, RECORD_BYTES};
use crate::map::GmMap;
use crate::types::{Aabb, CameraIntrinsics, Pose, Vec3};

/// A world point with its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub point: Vec3,
    pub occupied: bool,
}

/// Samples along one ray from `origin` to `end`: the endpoint is occupied,
/// and free points lie every `spacing` metres, stopping one spacing short
/// of the endpoint.
pub fn sample_ray(origin: &Vec3, end: &Vec3, spacing: f64, out: &mut Vec<LabeledPoint>) {
    let d = end - origin;
    let len = d.norm();
    if !(len > 0.0) || !(spacing > 0.0) {
        return;
    }
    out.push(LabeledPoint {
        point: *end,
        occupied: true,
    });
    let n = ((len - spacing) / spacing + 1e-9).floor().max(0.0) as usize;
    let dir = d / len;
    for k in 1..=n {
        out.push(LabeledPoint {
            point: origin + dir * (k as f64 * spacing),
            occupied: false,
        });
    }
}

/// Labelled samples for every `stride`-th valid pixel (in both image
/// directions) of one frame.
pub fn sample_eval_points(
    image: &DepthImage,
    pose: &Pose,
    cam: &CameraIntrinsics,
    spacing: f64,
    stride: usize,
) -> Vec<LabeledPoint> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for v in (0..image.height()).step_by(stride) {
        for u in (0..image.width()).step_by(stride) {
            let z = image.get(u, v) as f64;
            if let Some(p) = cam.unproject_checked(u as f64, v as f64, z) {
                sample_ray(&pose.translation, &pose.apply(&p), spacing, &mut out);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn sorted_desc(scores: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.0.total_cmp(&a.0));
    s
}

/// ROC curve over every distinct score (positive iff `m >= threshold`),
/// with the area by the trapezoid rule.
pub fn roc_curve(scores: &[(f64, bool)]) -> RocCurve {
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    let neg = scores.len() as f64 - pos;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    if pos == 0.0 || neg == 0.0 {
        return RocCurve { points, auc: f64::NAN };
    }
    let s = sorted_desc(scores);
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut i = 0;
    while i < s.len() {
        let threshold = s[i].0;
        while i < s.len() && s[i].0 == threshold {
            if s[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let prev = points.last().expect("curve starts non-empty");
        let p = RocPoint {
            threshold,
            tpr: tp / pos,
            fpr: fp / neg,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    RocCurve { points, auc }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall with positives `m > threshold`, for every distinct
/// score below the maximum (at or above it nothing is predicted).
pub fn pr_curve(scores: &[(f64, bool)]) -> Vec<PrPoint> {
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    if scores.is_empty() || pos == 0.0 {
        return Vec::new();
    }
    let s = sorted_desc(scores);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < s.len() {
        let score = s[i].0;
        if i > 0 {
            // Everything counted so far scores strictly above `score`.
            out.push(PrPoint {
                threshold: score,
                precision: tp / (tp + fp),
                recall: tp / pos,
            });
        }
        while i < s.len() && s[i].0 == score {
            if s[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
    }
    out.reverse();
    out
}

/// Best precision among curve points reaching `recall`.
pub fn precision_at_recall(curve: &[PrPoint], recall: f64) -> Option<f64> {
    curve
        .iter()
        .filter(|p| p.recall >= recall)
        .map(|p| p.precision)
        .fold(None, |acc, p| Some(acc.map_or(p, |a: f64| a.max(p))))
}

/// Map size and construction overhead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryReport {
    /// Serialized record bytes plus spatial-index nodes.
    pub map_bytes: usize,
    /// Size of the map file, header included.
    pub file_bytes: usize,
    /// Peak transient bytes during construction, map excluded.
    pub peak_overhead_bytes: usize,
}

pub fn memory_report(map: &GmMap, peak_overhead_bytes: usize) -> MemoryReport {
    let records = map.len() * RECORD_BYTES;
    MemoryReport {
        map_bytes: records + map.gaussians.tree().node_bytes(),
        file_bytes: HEADER_BYTES + records,
        peak_overhead_bytes,
    }
}

/// Bytes of a dense grid with `resolution`-sized cells covering `bounds`.
pub fn dense_grid_bytes(bounds: &Aabb, resolution: f64, bytes_per_cell: usize) -> usize {
    let e = bounds.extent();
    let cells: usize = (0..3)
        .map(|k| ((e[k] / resolution) - 1e-9).ceil().max(1.0) as usize)
        .product();
    cells * bytes_per_cell
}

/// Centres of a regular grid with spacing `step` covering `bounds`.
pub fn grid_points(bounds: &Aabb, step: f64) -> Vec<Vec3> {
    let n = |k: usize| ((bounds.max[k] - bounds.min[k]) / step + 1e-9).floor() as usize + 1;
    let (nx, ny, nz) = (n(0), n(1), n(2));
    let mut out = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                out.push(bounds.min + Vec3::new(i as f64, j as f64, k as f64) * step);
            }
        }
    }
    out
}

pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut s = String::from("threshold,tpr,fpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.tpr, p.fpr);
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_pr_csv(path: &Path, curve: &[PrPoint]) -> Result<()> {
    let mut s = String::from("threshold,precision,recall\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.precision, p.recall);
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_memory_csv(path: &Path, report: &MemoryReport) -> Result<()> {
    let s = format!(
        "map_bytes,file_bytes,peak_overhead_bytes\n{},{},{}\n",
        report.map_bytes, report.file_bytes, report.peak_overhead_bytes
    );
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Probability that a random positive outscores a random negative,
    /// ties counted half.
    fn mann_whitney(scores: &[(f64, bool)]) -> f64 {
        let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
        let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn one_metre_ray_gives_one_occupied_and_nine_free() {
        let mut out = Vec::new();
        sample_ray(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.0), 0.1, &mut out);
        assert_eq!(out.iter().filter(|p| p.occupied).count(), 1);
        assert_eq!(out.iter().filter(|p| !p.occupied).count(), 9);
        assert!(out.iter().all(|p| p.occupied || p.point.z <= 0.9 + 1e-12));
    }

    #[test]
    fn degenerate_rays_and_pixels_give_nothing() {
        let mut out = Vec::new();
        sample_ray(&Vec3::zeros(), &Vec3::zeros(), 0.1, &mut out);
        assert!(out.is_empty());
        let cam = CameraIntrinsics {
            width: 4,
            height: 4,
            ..CameraIntrinsics::default()
        };
        let img = DepthImage::filled(4, 4, 0.0);
        assert!(sample_eval_points(&img, &Pose::identity(), &cam, 0.1, 1).is_empty());
    }

    #[test]
    fn perfect_separation_has_unit_area() {
        let scores = [(0.9, true), (0.8, true), (0.1, false), (0.2, false)];
        assert_eq!(roc_curve(&scores).auc, 1.0);
        assert_eq!(roc_curve(&[(0.9, true), (0.1, false)]).auc, 1.0);
    }

    #[test]
    fn trapezoid_area_equals_rank_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let scores: Vec<(f64, bool)> = (0..300)
                .map(|_| {
                    let label = rng.random_bool(0.4);
                    // Coarse scores to force ties.
                    let s = (rng.random_range(0.0..1.0) * 20.0f64).round() / 20.0;
                    (if label { (s + 0.2).min(1.0) } else { s }, label)
                })
                .collect();
            let roc = roc_curve(&scores);
            assert!((roc.auc - mann_whitney(&scores)).abs() < 1e-9);
        }
    }

    #[test]
    fn shuffled_labels_give_chance_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut labels: Vec<bool> = (0..4000).map(|k| k % 2 == 0).collect();
        labels.shuffle(&mut rng);
        let scores: Vec<(f64, bool)> = labels
            .iter()
            .enumerate()
            .map(|(k, &l)| (k as f64 / 4000.0, l))
            .collect();
        let auc = roc_curve(&scores).auc;
        assert!((auc - 0.5).abs() < 0.05, "{auc}");
    }

    #[test]
    fn perfect_classifier_precision_is_one() {
        let scores = [(0.95, true), (0.9, true), (0.85, true), (0.2, false), (0.1, false)];
        let pr = pr_curve(&scores);
        assert!(!pr.is_empty());
        assert!(pr.iter().filter(|p| p.threshold >= 0.2).all(|p| p.precision == 1.0));
        assert_eq!(pr[0].precision, 0.75);
        assert_eq!(precision_at_recall(&pr, 0.9), Some(1.0));
    }

    #[test]
    fn pr_matches_confusion_matrix_oracle() {
        let scores = [
            (0.9, true),
            (0.8, false),
            (0.8, true),
            (0.6, true),
            (0.4, false),
            (0.3, true),
            (0.1, false),
        ];
        let pr = pr_curve(&scores);
        let mut thresholds: Vec<f64> = scores.iter().map(|s| s.0).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        thresholds.pop();
        assert_eq!(pr.len(), thresholds.len());
        for (p, t) in pr.iter().zip(&thresholds) {
            let tp = scores.iter().filter(|s| s.0 > *t && s.1).count() as f64;
            let fp = scores.iter().filter(|s| s.0 > *t && !s.1).count() as f64;
            assert_eq!(p.threshold, *t);
            assert!((p.precision - tp / (tp + fp)).abs() < 1e-12);
            assert!((p.recall - tp / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(pr_curve(&[]).is_empty());
        assert!(roc_curve(&[]).auc.is_nan());
    }

    #[test]
    fn grid_sizes() {
        let b = Aabb::new(Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 2.5));
        assert_eq!(dense_grid_bytes(&b, 0.1, 4), 40 * 40 * 25 * 4);
        assert_eq!(grid_points(&b, 1.0).len(), 5 * 5 * 3);
    }
}
