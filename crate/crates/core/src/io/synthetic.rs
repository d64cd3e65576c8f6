//! Ray-cast scenes made of half-space planes and solid boxes.
//!
//! Scene files are line based, `#` starts a comment:
//!
//! ```text
//! camera <fx> <fy> <cx> <cy> <width> <height> [<min_range> <max_range>]
//! plane <nx> <ny> <nz> <offset>          # solid where n·x < offset
//! box <minx> <miny> <minz> <maxx> <maxy> <maxz>
//! orbit <cx> <cy> <cz> <radius> <frames> <pitch_deg>
//! pose <tx> <ty> <tz> <qx> <qy> <qz> <qw>
//! ```

use std::path::Path;

use nalgebra::Matrix3;

use crate::depth::DepthImage;
use crate::error::{GmmapError, Result};
use crate::types::{Aabb, CameraIntrinsics, Pose, Vec3};

/// Planar boundary; the side with `normal·x < offset` is solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec3,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub planes: Vec<HalfSpace>,
    pub boxes: Vec<Aabb>,
    pub camera: CameraIntrinsics,
    pub trajectory: Vec<Pose>,
}

/// Camera pose at `eye` looking along `forward`, with world +z up.
pub fn look_along(eye: Vec3, forward: Vec3) -> Result<Pose> {
    let z = forward.normalize();
    let x = z.cross(&Vec3::z());
    if x.norm() < 1e-9 {
        return Err(GmmapError::InvalidPose("view direction is vertical".into()));
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Pose::new(Matrix3::from_columns(&[x, y, z]), eye)
}

/// `frames` poses on a horizontal circle around `center`, looking outward
/// and tilted by `pitch_deg` (negative looks down).
pub fn orbit(center: Vec3, radius: f64, frames: usize, pitch_deg: f64) -> Result<Vec<Pose>> {
    let pitch = pitch_deg.to_radians();
    (0..frames)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / frames as f64;
            let out = Vec3::new(a.cos(), a.sin(), 0.0);
            let forward = out * pitch.cos() + Vec3::z() * pitch.sin();
            look_along(center + out * radius, forward)
        })
        .collect()
}

fn ray_box(origin: &Vec3, dir: &Vec3, b: &Aabb) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        if dir[k].abs() < 1e-15 {
            if origin[k] < b.min[k] || origin[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let t1 = (b.min[k] - origin[k]) / dir[k];
        let t2 = (b.max[k] - origin[k]) / dir[k];
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

impl SyntheticScene {
    pub fn new(camera: CameraIntrinsics) -> Self {
        SyntheticScene {
            planes: Vec::new(),
            boxes: Vec::new(),
            camera,
            trajectory: Vec::new(),
        }
    }

    /// Room `[-2, 2] × [-2, 2] × [0, 2.5]` with one desk-sized box,
    /// observed by a `size`² camera orbiting at 1.2 m height.
    pub fn box_room(size: usize, frames: usize) -> Self {
        let f = 55.0 * size as f64 / 64.0;
        let c = (size as f64 - 1.0) / 2.0;
        let camera = CameraIntrinsics {
            fx: f,
            fy: f,
            cx: c,
            cy: c,
            width: size,
            height: size,
            depth_scale: 1.0 / 5000.0,
            min_range: 0.1,
            max_range: 6.0,
        };
        let mut scene = SyntheticScene::new(camera);
        let walls = [
            (Vec3::new(0.0, 0.0, 1.0), 0.0),
            (Vec3::new(0.0, 0.0, -1.0), -2.5),
            (Vec3::new(1.0, 0.0, 0.0), -2.0),
            (Vec3::new(-1.0, 0.0, 0.0), -2.0),
            (Vec3::new(0.0, 1.0, 0.0), -2.0),
            (Vec3::new(0.0, -1.0, 0.0), -2.0),
        ];
        scene.planes = walls
            .iter()
            .map(|&(normal, offset)| HalfSpace { normal, offset })
            .collect();
        scene.boxes.push(Aabb::new(
            Vec3::new(0.9, -0.6, 0.0),
            Vec3::new(1.5, 0.4, 0.75),
        ));
        scene.trajectory = orbit(Vec3::new(0.0, 0.0, 1.2), 0.5, frames, -15.0)
            .expect("orbit poses are valid");
        scene
    }

    /// Depth of the first surface along the camera-frame ray `(ru, rv, 1)`
    /// from `pose`, or `None` when nothing is hit.
    pub fn cast(&self, pose: &Pose, ru: f64, rv: f64) -> Option<f64> {
        let origin = pose.translation;
        let dir = pose.rotation * Vec3::new(ru, rv, 1.0);
        let mut best = f64::INFINITY;
        for p in &self.planes {
            let denom = p.normal.dot(&dir);
            if denom < -1e-15 {
                let t = (p.offset - p.normal.dot(&origin)) / denom;
                if t > 0.0 {
                    best = best.min(t);
                }
            }
        }
        for b in &self.boxes {
            if let Some(t) = ray_box(&origin, &dir, b) {
                best = best.min(t);
            }
        }
        best.is_finite().then_some(best)
    }

    /// Ray-cast depth image; depths outside the sensor range are invalid.
    pub fn render(&self, pose: &Pose) -> DepthImage {
        let cam = &self.camera;
        let mut img = DepthImage::filled(cam.width, cam.height, 0.0);
        for v in 0..cam.height {
            let rv = (v as f64 - cam.cy) / cam.fy;
            for u in 0..cam.width {
                let ru = (u as f64 - cam.cx) / cam.fx;
                if let Some(z) = self.cast(pose, ru, rv) {
                    if cam.depth_in_range(z) {
                        img.set(u, v, z as f32);
                    }
                }
            }
        }
        img
    }

    /// Ground truth: inside a box or on the solid side of a plane.
    pub fn occupied(&self, x: &Vec3) -> bool {
        self.planes.iter().any(|p| p.normal.dot(x) < p.offset)
            || self.boxes.iter().any(|b| b.contains_point(x))
    }

    /// Distance from `x` to the nearest plane or box face.
    pub fn surface_distance(&self, x: &Vec3) -> f64 {
        let planes = self
            .planes
            .iter()
            .map(|p| (p.normal.dot(x) - p.offset).abs());
        let boxes = self.boxes.iter().map(|b| {
            let outside = (b.min - x).sup(&(x - b.max)).sup(&Vec3::zeros());
            if outside.norm() > 0.0 {
                outside.norm()
            } else {
                (x - b.min).inf(&(b.max - x)).min()
            }
        });
        planes.chain(boxes).fold(f64::INFINITY, f64::min)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut camera = None;
        let mut planes = Vec::new();
        let mut boxes = Vec::new();
        let mut trajectory = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| GmmapError::Scene {
                line: line_no,
                reason,
            };
            let mut words = line.split_whitespace();
            let keyword = words.next().unwrap_or_default();
            let nums: Vec<f64> = words
                .map(|w| w.parse::<f64>().map_err(|_| err(format!("bad number {w:?}"))))
                .collect::<Result<_>>()?;
            let want = |n: &[usize]| {
                if n.contains(&nums.len()) {
                    Ok(())
                } else {
                    Err(err(format!("{keyword} expects {n:?} values, got {}", nums.len())))
                }
            };
            match keyword {
                "camera" => {
                    want(&[6, 8])?;
                    let mut cam = CameraIntrinsics {
                        fx: nums[0],
                        fy: nums[1],
                        cx: nums[2],
                        cy: nums[3],
                        width: nums[4] as usize,
                        height: nums[5] as usize,
                        ..CameraIntrinsics::default()
                    };
                    if nums.len() == 8 {
                        cam.min_range = nums[6];
                        cam.max_range = nums[7];
                    }
                    cam.validate().map_err(|e| err(e.to_string()))?;
                    camera = Some(cam);
                }
                "plane" => {
                    want(&[4])?;
                    let n = Vec3::new(nums[0], nums[1], nums[2]);
                    if !(n.norm() > 0.0) {
                        return Err(err("zero plane normal".into()));
                    }
                    let len = n.norm();
                    planes.push(HalfSpace {
                        normal: n / len,
                        offset: nums[3] / len,
                    });
                }
                "box" => {
                    want(&[6])?;
                    let min = Vec3::new(nums[0], nums[1], nums[2]);
                    let max = Vec3::new(nums[3], nums[4], nums[5]);
                    if (0..3).any(|i| min[i] > max[i]) {
                        return Err(err("box min exceeds max".into()));
                    }
                    boxes.push(Aabb::new(min, max));
                }
                "orbit" => {
                    want(&[6])?;
                    let poses = orbit(
                        Vec3::new(nums[0], nums[1], nums[2]),
                        nums[3],
                        nums[4] as usize,
                        nums[5],
                    )
                    .map_err(|e| err(e.to_string()))?;
                    trajectory.extend(poses);
                }
                "pose" => {
                    want(&[7])?;
                    let t = Vec3::new(nums[0], nums[1], nums[2]);
                    let pose = Pose::from_quaternion(nums[3], nums[4], nums[5], nums[6], t)
                        .map_err(|e| err(e.to_string()))?;
                    trajectory.push(pose);
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }
        Ok(SyntheticScene {
            planes,
            boxes,
            camera: camera.ok_or(GmmapError::Scene {
                line: 0,
                reason: "missing camera line".into(),
            })?,
            trajectory,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GmmapError::Dataset {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Renders every trajectory pose and writes the TUM layout to `dir`,
    /// one frame every 1/30 s.
    pub fn write_sequence(&self, dir: &Path) -> Result<()> {
        let frames: Vec<(f64, DepthImage, Pose)> = self
            .trajectory
            .iter()
            .enumerate()
            .map(|(k, pose)| (k as f64 / 30.0, self.render(pose), *pose))
            .collect();
        super::tum::write_tum_sequence(dir, &frames, self.camera.depth_scale)
    }
}
