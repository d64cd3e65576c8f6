//! TUM RGB-D sequence layout: `depth.txt` lists `timestamp path` pairs,
//! `groundtruth.txt` lists `timestamp tx ty tz qx qy qz qw`, depth images
//! are 16-bit PNGs.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::depth::DepthImage;
use crate::error::{GmmapError, Result};
use crate::types::{CameraIntrinsics, Pose, Vec3};

/// Largest gap (s) between a depth frame and its associated pose.
pub const MAX_POSE_GAP: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp: f64,
    pub depth_path: PathBuf,
    pub pose: Pose,
}

/// Frames of a sequence in increasing timestamp order. Depth images are
/// decoded on demand.
#[derive(Debug, Clone, Default)]
pub struct FrameStream {
    pub frames: Vec<Frame>,
    /// Lines of the index files that could not be parsed.
    pub skipped_lines: usize,
    /// Depth frames without a pose within [`MAX_POSE_GAP`].
    pub dropped_frames: usize,
    pub depth_scale: f64,
}

impl FrameStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_depth(&self, index: usize) -> Result<DepthImage> {
        super::read_depth_png(&self.frames[index].depth_path, self.depth_scale)
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn parse_pose_line(line: &str) -> Option<(f64, Pose)> {
    let v: Vec<f64> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    if v.len() != 8 {
        return None;
    }
    let pose = Pose::from_quaternion(v[4], v[5], v[6], v[7], Vec3::new(v[1], v[2], v[3])).ok()?;
    Some((v[0], pose))
}

fn parse_depth_line(line: &str) -> Option<(f64, &str)> {
    let mut it = line.split_whitespace();
    let t = it.next()?.parse().ok()?;
    let path = it.next()?;
    it.next().is_none().then_some((t, path))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GmmapError::Dataset {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads the frame index of a TUM-layout directory and associates each
/// depth frame with the nearest ground-truth pose.
pub fn load_tum_sequence(dir: &Path, cam: &CameraIntrinsics) -> Result<FrameStream> {
    let depth_txt = read(&dir.join("depth.txt"))?;
    let gt_txt = read(&dir.join("groundtruth.txt"))?;
    let mut stream = FrameStream {
        depth_scale: cam.depth_scale,
        ..FrameStream::default()
    };

    let mut poses = Vec::new();
    for line in data_lines(&gt_txt) {
        match parse_pose_line(line) {
            Some(p) => poses.push(p),
            None => stream.skipped_lines += 1,
        }
    }
    poses.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut depths = Vec::new();
    for line in data_lines(&depth_txt) {
        match parse_depth_line(line) {
            Some((t, p)) => depths.push((t, dir.join(p))),
            None => stream.skipped_lines += 1,
        }
    }
    depths.sort_by(|a, b| a.0.total_cmp(&b.0));
    depths.dedup_by(|a, b| a.0 == b.0);

    for (t, depth_path) in depths {
        let k = poses.partition_point(|(pt, _)| *pt < t);
        let nearest = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|i| poses.get(i))
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()));
        match nearest {
            Some((pt, pose)) if (pt - t).abs() <= MAX_POSE_GAP => stream.frames.push(Frame {
                timestamp: t,
                depth_path,
                pose: *pose,
            }),
            _ => stream.dropped_frames += 1,
        }
    }
    if stream.skipped_lines > 0 {
        warn!("{}: skipped {} unparseable lines", dir.display(), stream.skipped_lines);
    }
    if stream.dropped_frames > 0 {
        warn!("{}: dropped {} frames without a pose", dir.display(), stream.dropped_frames);
    }
    Ok(stream)
}

fn quaternion_of(r: &nalgebra::Matrix3<f64>) -> [f64; 4] {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    [q.i, q.j, q.k, q.w]
}

/// Writes frames in TUM layout under `dir`: `depth/<index>.png`,
/// `depth.txt` and `groundtruth.txt`.
pub fn write_tum_sequence(
    dir: &Path,
    frames: &[(f64, DepthImage, Pose)],
    depth_scale: f64,
) -> Result<()> {
    fs::create_dir_all(dir.join("depth"))?;
    let mut depth_txt = String::from("# timestamp filename\n");
    let mut gt_txt = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (k, (t, image, pose)) in frames.iter().enumerate() {
        let name = format!("depth/{k:06}.png");
        super::write_depth_png(&dir.join(&name), image, depth_scale)?;
        depth_txt.push_str(&format!("{t:.6} {name}\n"));
        let q = quaternion_of(&pose.rotation);
        let p = pose.translation;
        gt_txt.push_str(&format!(
            "{t:.6} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}\n",
            p.x, p.y, p.z, q[0], q[1], q[2], q[3]
        ));
    }
    fs::write(dir.join("depth.txt"), depth_txt)?;
    fs::write(dir.join("groundtruth.txt"), gt_txt)?;
    Ok(())
}
