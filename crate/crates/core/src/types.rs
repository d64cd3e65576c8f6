//! Shared domain types: geometry primitives, Gaussian representations,
//! camera model and map hyperparameters.
//!
//! The occupancy coordinate of every Gaussian is implied by its
//! [`GaussianKind`]: occupied Gaussians sit at occupancy 1, free ones at 0,
//! and the spatial/occupancy cross covariance is identically zero. Only the
//! three spatial dimensions are stored.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{invalid_param, GmmapError, Result};

pub type Vec3 = Vector3<f64>;

/// Relative tolerance under which negative covariance eigenvalues are
/// treated as floating-point drift and clamped to zero.
pub const PSD_EIGEN_TOLERANCE: f64 = 1e-9;

/// Variance used in place of a zero diagonal entry when sizing boxes.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Number of pixels in the 640x480 images the default hyperparameters
/// were tuned for.
pub const REFERENCE_PIXELS: f64 = 640.0 * 480.0;

/// Symmetric 3x3 matrix stored as its upper triangle
/// `[xx, xy, xz, yy, yz, zz]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat3(pub [f64; 6]);

impl SymMat3 {
    pub const ZERO: SymMat3 = SymMat3([0.0; 6]);

    pub fn identity() -> Self {
        SymMat3([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])
    }

    pub fn diagonal(d: Vec3) -> Self {
        SymMat3([d.x, 0.0, 0.0, d.y, 0.0, d.z])
    }

    /// `v vᵀ`
    pub fn outer(v: &Vec3) -> Self {
        SymMat3([
            v.x * v.x,
            v.x * v.y,
            v.x * v.z,
            v.y * v.y,
            v.y * v.z,
            v.z * v.z,
        ])
    }

    /// Builds from the upper triangle of `m`; the lower triangle is ignored.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        SymMat3([
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 2)],
        ])
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn diag(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[3], self.0[5])
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[3] + self.0[5]
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMat3(self.0.map(|v| v * s))
    }

    pub fn add(&self, other: &SymMat3) -> Self {
        let mut out = self.0;
        for (o, v) in out.iter_mut().zip(other.0.iter()) {
            *o += v;
        }
        SymMat3(out)
    }

    pub fn sub(&self, other: &SymMat3) -> Self {
        let mut out = self.0;
        for (o, v) in out.iter_mut().zip(other.0.iter()) {
            *o -= v;
        }
        SymMat3(out)
    }

    pub fn add_diagonal(&self, s: f64) -> Self {
        let mut out = self.0;
        out[0] += s;
        out[3] += s;
        out[5] += s;
        SymMat3(out)
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        self.to_matrix() * v
    }

    /// `R S Rᵀ`
    pub fn rotate(&self, r: &Matrix3<f64>) -> Self {
        Self::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Eigenvalues in ascending order with matching unit eigenvectors as columns.
    pub fn eigen(&self) -> (Vec3, Matrix3<f64>) {
        let eig = self.to_matrix().symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = Vec3::new(
            eig.eigenvalues[order[0]],
            eig.eigenvalues[order[1]],
            eig.eigenvalues[order[2]],
        );
        let vectors = Matrix3::from_columns(&[
            eig.eigenvectors.column(order[0]).into_owned(),
            eig.eigenvectors.column(order[1]).into_owned(),
            eig.eigenvectors.column(order[2]).into_owned(),
        ]);
        (values, vectors)
    }

    /// Clamps eigenvalues that drifted below zero. Matrices that are already
    /// positive semidefinite are returned untouched.
    pub fn repair_psd(&self) -> Self {
        let (values, vectors) = self.eigen();
        if values.x >= 0.0 {
            return *self;
        }
        let clamped = values.map(|v| v.max(0.0));
        let m = vectors * Matrix3::from_diagonal(&clamped) * vectors.transpose();
        Self::from_matrix(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GaussianKind {
    Occupied,
    Free,
}

impl GaussianKind {
    /// Occupancy mean carried by every Gaussian of this kind.
    pub fn occupancy(self) -> f64 {
        match self {
            GaussianKind::Occupied => 1.0,
            GaussianKind::Free => 0.0,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            GaussianKind::Occupied => 1,
            GaussianKind::Free => 0,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(GaussianKind::Occupied),
            0 => Some(GaussianKind::Free),
            _ => None,
        }
    }
}

/// A Gaussian held as unnormalized spatial moments so that fusion is
/// plain addition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentGaussian {
    /// Unnormalized first moment, `xi * E[X]`.
    pub m1: Vec3,
    /// Unnormalized second moment, `xi * E[X Xᵀ]`.
    pub m2: SymMat3,
    /// Normalization constant: point count for occupied Gaussians, total
    /// ray length (m) for free ones.
    pub xi: f64,
    /// Regression weight, in metres of ray length for both kinds.
    pub pi: f64,
    pub support_count: u32,
    pub kind: GaussianKind,
}

impl MomentGaussian {
    pub fn empty(kind: GaussianKind) -> Self {
        MomentGaussian {
            m1: Vec3::zeros(),
            m2: SymMat3::ZERO,
            xi: 0.0,
            pi: 0.0,
            support_count: 0,
            kind,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.xi <= 0.0
    }

    pub fn mean(&self) -> Option<Vec3> {
        (self.xi > 0.0).then(|| self.m1 / self.xi)
    }
}

/// A Gaussian in distribution form, as stored and queried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistGaussian {
    pub mu: Vec3,
    pub sigma: SymMat3,
    pub pi: f64,
    pub xi: f64,
    pub support_count: u32,
    pub kind: GaussianKind,
}

impl DistGaussian {
    /// Squared Mahalanobis distance of `x`; singular covariances are
    /// regularized the same way as for sigma-point factorization.
    pub fn mahalanobis_sq(&self, x: &Vec3) -> f64 {
        let d = x - self.mu;
        let cov = regularized(&self.sigma).to_matrix();
        match cov.cholesky() {
            Some(chol) => {
                let y = chol.solve(&d);
                d.dot(&y)
            }
            None => f64::INFINITY,
        }
    }
}

/// Adds `1e-9 * trace` (or a tiny absolute amount for all-zero matrices)
/// to the diagonal so Cholesky factorization succeeds.
pub(crate) fn regularized(sigma: &SymMat3) -> SymMat3 {
    let eps = (PSD_EIGEN_TOLERANCE * sigma.trace()).max(DEGENERATE_VARIANCE);
    sigma.add_diagonal(eps)
}

/// Axis-aligned box in world coordinates (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.iter().zip(max.iter()).all(|(a, b)| a <= b));
        Aabb { min, max }
    }

    pub fn from_point(p: Vec3) -> Self {
        Aabb { min: p, max: p }
    }

    pub fn universe() -> Self {
        Aabb {
            min: Vec3::repeat(f64::NEG_INFINITY),
            max: Vec3::repeat(f64::INFINITY),
        }
    }

    /// Closed-box overlap test; touching boxes intersect.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && other.max[k] <= self.max[k])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let min = self.min.sup(&other.min);
        let max = self.max.inf(&other.max);
        (0..3).all(|k| min[k] <= max[k]).then_some(Aabb { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Volume that must be added to contain `other`.
    pub fn enlargement(&self, other: &Aabb) -> f64 {
        self.union(other).volume() - self.volume()
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    /// Intersection over union of the two volumes; 0 when disjoint or when
    /// both boxes are degenerate.
    pub fn iou(&self, other: &Aabb) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.volume());
        let union = self.volume() + other.volume() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

/// Tightest axis-aligned box around the ellipsoid of Mahalanobis radius
/// `alpha_m`. The half-width along axis `k` is `alpha_m * sqrt(Σ_kk)`.
pub fn aabb_of_gaussian(g: &DistGaussian, alpha_m: f64) -> Aabb {
    let half = g
        .sigma
        .diag()
        .map(|v| alpha_m * v.max(DEGENERATE_VARIANCE).sqrt());
    Aabb::new(g.mu - half, g.mu + half)
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-6) {
            return Err(GmmapError::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(GmmapError::InvalidPose(format!(
                "rotation determinant is {det}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GmmapError::InvalidPose("non-finite translation".into()));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// From a (possibly unnormalized) quaternion `x y z w` and translation.
    pub fn from_quaternion(qx: f64, qy: f64, qz: f64, qw: f64, t: Vec3) -> Result<Self> {
        let q = nalgebra::Quaternion::new(qw, qx, qy, qz);
        if !(q.norm() > 0.0) {
            return Err(GmmapError::InvalidPose("zero quaternion".into()));
        }
        let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Pose::new(*r.matrix(), t)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse_apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }
}

/// Pinhole depth camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Metres per raw depth unit.
    pub depth_scale: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for CameraIntrinsics {
    /// Default Kinect calibration used with TUM RGB-D sequences.
    fn default() -> Self {
        CameraIntrinsics {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
            depth_scale: 1.0 / 5000.0,
            min_range: 0.1,
            max_range: 6.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0) {
            return Err(invalid_param("fx", "must be positive"));
        }
        if !(self.fy > 0.0) {
            return Err(invalid_param("fy", "must be positive"));
        }
        if !(self.min_range > 0.0 && self.min_range < self.max_range) {
            return Err(invalid_param(
                "min_range",
                "must satisfy 0 < min_range < max_range",
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid_param("width", "image must have nonzero size"));
        }
        if !(self.depth_scale > 0.0) {
            return Err(invalid_param("depth_scale", "must be positive"));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn depth_in_range(&self, z: f64) -> bool {
        z.is_finite() && z >= self.min_range && z <= self.max_range
    }

    /// Camera-frame point for pixel `(u, v)` at depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Like [`unproject`](Self::unproject) but rejects out-of-range depths.
    pub fn unproject_checked(&self, u: f64, v: f64, z: f64) -> Option<Vec3> {
        self.depth_in_range(z).then(|| self.unproject(u, v, z))
    }

    /// Ray through pixel `(u, v)` scaled to unit depth.
    pub fn unit_depth_ray(&self, u: f64, v: f64) -> Vec3 {
        self.unproject(u, v, 1.0)
    }

    /// Largest slope `|(x/z, y/z)|` of the frustum boundary, taken over the
    /// four corner pixels.
    pub fn frustum_slope(&self) -> f64 {
        let us = [0.0, (self.width - 1) as f64];
        let vs = [0.0, (self.height - 1) as f64];
        us.iter()
            .flat_map(|&u| vs.iter().map(move |&v| (u, v)))
            .map(|(u, v)| {
                let r = self.unit_depth_ray(u, v);
                (r.x * r.x + r.y * r.y).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Constant pseudo-component representing the unknown initial state of
/// the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnexploredPrior {
    pub mu0: f64,
    pub sigma0_sq: f64,
    pub pi0: f64,
}

impl UnexploredPrior {
    pub const MEAN: f64 = 0.5;
    pub const VARIANCE: f64 = 0.25;

    pub fn new(pi0: f64) -> Result<Self> {
        if !(pi0 > 0.0 && pi0.is_finite()) {
            return Err(invalid_param("pi0", "must be positive"));
        }
        Ok(UnexploredPrior {
            mu0: Self::MEAN,
            sigma0_sq: Self::VARIANCE,
            pi0,
        })
    }
}

/// Hyperparameters of map construction and querying.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmapParams {
    /// Mahalanobis bound used for boxes and query pruning.
    pub alpha_m: f64,
    /// Growth rate of the frustum partitioning planes.
    pub alpha_d: f64,
    /// Distance to the first partitioning plane (m).
    pub d0: f64,
    /// Hellinger fusion threshold for free Gaussians.
    pub alpha_h_free: f64,
    /// Hellinger fusion threshold for occupied Gaussians.
    pub alpha_h_occ: f64,
    /// Weight of the unexplored prior.
    pub pi0: f64,
    /// Occupied Gaussians supported by fewer pixels are discarded with
    /// their free bases.
    pub prune_min_support: u32,
    /// Depth residual always tolerated between neighboring pixels (m).
    pub noise_floor: f64,
    /// Multiple of the pixel footprint tolerated as depth residual while
    /// the local surface orientation is unknown.
    pub k_slope: f64,
    /// Multiple of the pixel footprint tolerated as residual against a
    /// fitted scanline.
    pub k_line: f64,
    /// Scanline runs shorter than this are treated as speckle.
    pub min_segment_pixels: usize,
    /// Minimum |cos| between directions/normals of fusable segments.
    pub normal_dot_min: f64,
    /// Point-to-plane tolerance for segment fusion, in units of `noise_floor`.
    pub plane_dist_factor: f64,
    /// Isotropic variance (m²) added to every stored covariance. Models
    /// sensor noise so that perfectly flat surfaces keep finite density.
    pub min_variance: f64,
    pub occ_threshold: f64,
    pub free_threshold: f64,
}

impl Default for GmmapParams {
    fn default() -> Self {
        GmmapParams {
            alpha_m: 2.0,
            alpha_d: 0.5,
            d0: 0.5,
            alpha_h_free: 0.26,
            alpha_h_occ: 0.70,
            pi0: 500_000.0,
            prune_min_support: 200,
            noise_floor: 0.02,
            k_slope: 4.0,
            k_line: 1.0,
            min_segment_pixels: 4,
            normal_dot_min: 0.95,
            plane_dist_factor: 3.0,
            min_variance: 1e-4,
            occ_threshold: 0.9,
            free_threshold: 0.1,
        }
    }
}

impl GmmapParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_m", self.alpha_m),
            ("alpha_d", self.alpha_d),
            ("d0", self.d0),
            ("alpha_h_free", self.alpha_h_free),
            ("alpha_h_occ", self.alpha_h_occ),
            ("pi0", self.pi0),
            ("noise_floor", self.noise_floor),
            ("k_slope", self.k_slope),
            ("k_line", self.k_line),
            ("normal_dot_min", self.normal_dot_min),
            ("plane_dist_factor", self.plane_dist_factor),
            ("min_variance", self.min_variance),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid_param(name, format!("must be positive, got {value}")));
            }
        }
        for (name, value) in [
            ("alpha_h_free", self.alpha_h_free),
            ("alpha_h_occ", self.alpha_h_occ),
        ] {
            if value >= std::f64::consts::SQRT_2 {
                return Err(invalid_param(name, "must be below sqrt(2)"));
            }
        }
        if self.prune_min_support == 0 {
            return Err(invalid_param("prune_min_support", "must be positive"));
        }
        if self.min_segment_pixels == 0 {
            return Err(invalid_param("min_segment_pixels", "must be positive"));
        }
        if self.normal_dot_min > 1.0 {
            return Err(invalid_param("normal_dot_min", "must not exceed 1"));
        }
        if !(self.free_threshold < self.occ_threshold
            && self.free_threshold > 0.0
            && self.occ_threshold < 1.0)
        {
            return Err(invalid_param(
                "occ_threshold",
                "need 0 < free_threshold < occ_threshold < 1",
            ));
        }
        Ok(())
    }

    /// Scales the prior weight and the pruning support by
    /// `pixels / (640*480)`, keeping the per-ray evidence balance of the
    /// default hyperparameters on smaller or larger images.
    pub fn scaled_for_pixels(&self, pixels: usize) -> Self {
        let ratio = pixels as f64 / REFERENCE_PIXELS;
        GmmapParams {
            pi0: self.pi0 * ratio,
            prune_min_support: (self.prune_min_support as u64 * pixels as u64)
                .div_ceil(REFERENCE_PIXELS as u64)
                .clamp(1, u32::MAX as u64) as u32,
            ..self.clone()
        }
    }

    pub fn prior(&self) -> Result<UnexploredPrior> {
        UnexploredPrior::new(self.pi0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(mu: Vec3, sigma: SymMat3) -> DistGaussian {
        DistGaussian {
            mu,
            sigma,
            pi: 1.0,
            xi: 1.0,
            support_count: 1,
            kind: GaussianKind::Occupied,
        }
    }

    #[test]
    fn isotropic_box() {
        let b = aabb_of_gaussian(&dist(Vec3::zeros(), SymMat3::identity()), 2.0);
        assert_eq!(b.min, Vec3::repeat(-2.0));
        assert_eq!(b.max, Vec3::repeat(2.0));
    }

    #[test]
    fn anisotropic_box_matches_ellipsoid_extremes() {
        let g = dist(
            Vec3::new(1.0, 0.0, 0.0),
            SymMat3::diagonal(Vec3::new(4.0, 1.0, 0.25)),
        );
        let b = aabb_of_gaussian(&g, 2.0);
        assert_eq!(b.min, Vec3::new(-3.0, -2.0, -1.0));
        assert_eq!(b.max, Vec3::new(5.0, 2.0, 1.0));

        // Oracle: dense sampling of the ellipsoid surface mu + 2 L u, |u| = 1.
        let l = g.sigma.to_matrix().cholesky().unwrap().l();
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let n = 400;
        for i in 0..=n {
            let theta = std::f64::consts::PI * i as f64 / n as f64;
            for j in 0..2 * n {
                let phi = std::f64::consts::PI * j as f64 / n as f64;
                let u = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                let p = g.mu + 2.0 * (l * u);
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        for k in 0..3 {
            assert!((lo[k] - b.min[k]).abs() < 1e-3, "axis {k}: {lo:?} vs {:?}", b.min);
            assert!((hi[k] - b.max[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn degenerate_axis_gets_clamped_width() {
        let g = dist(Vec3::zeros(), SymMat3::diagonal(Vec3::new(1.0, 1.0, 0.0)));
        let b = aabb_of_gaussian(&g, 2.0);
        assert!((b.max.z - 2e-6).abs() < 1e-12);
        assert!((b.min.z + 2e-6).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_intersect() {
        let a = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        let b = Aabb::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(a.intersects(&b));
        let c = Aabb::new(Vec3::new(1.0 + 1e-9, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(!a.intersects(&c));
    }

    #[test]
    fn iou_of_half_overlapping_boxes() {
        let a = Aabb::new(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0));
        let b = Aabb::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(3.0, 1.0, 1.0));
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pose_validation() {
        assert!(Pose::new(Matrix3::identity() * 2.0, Vec3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vec3::zeros()).is_err());
        let p = Pose::from_quaternion(0.0, 0.0, 0.0, 2.0, Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(p.apply(&Vec3::zeros()), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn unproject_examples() {
        let cam = CameraIntrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            ..CameraIntrinsics::default()
        };
        assert_eq!(cam.unproject(320.0, 240.0, 2.0), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(cam.unproject(820.0, 240.0, 1.0), Vec3::new(1.0, 0.0, 1.0));
        assert!(cam.unproject_checked(10.0, 10.0, 0.0).is_none());
        assert!(cam.unproject_checked(10.0, 10.0, f64::NAN).is_none());
    }

    #[test]
    fn params_validation() {
        assert!(GmmapParams::default().validate().is_ok());
        let bad = GmmapParams {
            alpha_h_occ: 1.5,
            ..GmmapParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = GmmapParams {
            d0: 0.0,
            ..GmmapParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn psd_repair_clamps_drift() {
        let s = SymMat3::diagonal(Vec3::new(1.0, 1.0, -1e-12));
        let r = s.repair_psd();
        let (vals, _) = r.eigen();
        assert!(vals.x >= -1e-15);
        let ok = SymMat3::diagonal(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(ok.repair_psd(), ok);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ellipsoid_points_lie_in_box(
                a in proptest::array::uniform9(-1.0f64..1.0),
                dir in proptest::array::uniform3(-1.0f64..1.0),
                r in 0.0f64..=1.0,
                mu in proptest::array::uniform3(-5.0f64..5.0),
            ) {
                let a = Matrix3::from_row_slice(&a);
                let sigma = SymMat3::from_matrix(&(a * a.transpose()));
                let g = dist(Vec3::from(mu), sigma);
                let d = Vec3::from(dir);
                prop_assume!(d.norm() > 1e-3);
                // Points mu + alpha r L u with |u| = 1 have Mahalanobis distance alpha r.
                let l = sigma.add_diagonal(1e-12).to_matrix().cholesky().unwrap().l();
                let x = g.mu + 2.0 * r * (l * d.normalize());
                let b = aabb_of_gaussian(&g, 2.0);
                let slack = Vec3::repeat(1e-9);
                prop_assert!(Aabb::new(b.min - slack, b.max + slack).contains_point(&x));
            }
        }
    }
}
