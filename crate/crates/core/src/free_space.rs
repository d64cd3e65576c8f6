//! Free-space GMM construction from free-Gaussian bases.
//!
//! The camera frustum is cut into slabs by constant-depth planes whose
//! spacing grows geometrically. Each basis yields one free Gaussian per
//! slab in closed form; Gaussians inside a slab are then merged by region
//! growing, and merge decisions carry over to the next slab towards the
//! sensor.

use std::collections::VecDeque;

use crate::error::{GmmapError, Result};
use crate::fusion::{unscented_hellinger, z_extent_iou};
use crate::map::regularized_distribution;
use crate::moments::fuse_gaussians;
use crate::types::{
    aabb_of_gaussian, Aabb, CameraIntrinsics, DistGaussian, GaussianKind, GmmapParams,
    MomentGaussian,
};

/// Accumulators from which a triple's free Gaussians are recovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeBasis {
    /// Full sensor rays.
    pub phi: MomentGaussian,
    /// The same rays scaled to unit depth.
    pub beta: MomentGaussian,
    /// Lowest subregion index among the rays' endpoints.
    pub i_f: usize,
}

impl FreeBasis {
    pub fn empty() -> Self {
        FreeBasis {
            phi: MomentGaussian::empty(GaussianKind::Free),
            beta: MomentGaussian::empty(GaussianKind::Free),
            i_f: 0,
        }
    }

    pub fn merge(&mut self, other: &FreeBasis) -> Result<()> {
        self.phi.merge(&other.phi)?;
        self.beta.merge(&other.beta)?;
        self.i_f = self.i_f.min(other.i_f);
        Ok(())
    }
}

/// Slab boundaries `(d_min, d_max)` of subregion `i`.
pub fn partition_planes(i: usize, d0: f64, alpha_d: f64, gamma: f64) -> (f64, f64) {
    let d_max = |k: usize| {
        let g = alpha_d * gamma;
        if g <= 0.0 {
            d0 * (k + 1) as f64
        } else {
            d0 * ((1.0 + g).powi(k as i32 + 1) - 1.0) / g
        }
    };
    let lo = if i == 0 { 0.0 } else { d_max(i - 1) };
    (lo, d_max(i))
}

/// Depth slabs of one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrustumPartition {
    pub d0: f64,
    pub alpha_d: f64,
    pub gamma: f64,
    pub max_depth: f64,
}

impl FrustumPartition {
    pub fn new(cam: &CameraIntrinsics, params: &GmmapParams) -> Self {
        FrustumPartition {
            d0: params.d0,
            alpha_d: params.alpha_d,
            gamma: cam.frustum_slope(),
            max_depth: cam.max_range,
        }
    }

    pub fn planes(&self, i: usize) -> (f64, f64) {
        partition_planes(i, self.d0, self.alpha_d, self.gamma)
    }

    /// Smallest `i` whose slab upper bound is at or beyond `z`. Depths past
    /// the sensor range map to the slab holding the range limit.
    pub fn subregion_index(&self, z: f64) -> usize {
        let z = if z.is_nan() { 0.0 } else { z.min(self.max_depth) };
        let mut i = 0;
        while z > self.planes(i).1 {
            i += 1;
        }
        i
    }
}

/// Free Gaussian of basis `f` restricted to the slab `[d_min, d_max]` of
/// subregion `i`. Returns `None` when no ray length falls in the slab.
pub fn recover_free_gaussian(
    f: &FreeBasis,
    i: usize,
    d_min: f64,
    d_max: f64,
) -> Result<Option<MomentGaussian>> {
    if i > f.i_f {
        return Err(GmmapError::InconsistentBasis {
            xi: f.phi.xi,
            subregion: i,
        });
    }
    let (m1, m2, xi) = if i == f.i_f {
        (
            f.phi.m1 - f.beta.m1 * d_min.powi(2),
            f.phi.m2.sub(&f.beta.m2.scale(d_min.powi(3))),
            f.phi.xi - f.beta.xi * d_min,
        )
    } else {
        (
            f.beta.m1 * (d_max.powi(2) - d_min.powi(2)),
            f.beta.m2.scale(d_max.powi(3) - d_min.powi(3)),
            f.beta.xi * (d_max - d_min),
        )
    };
    if xi < -1e-6 * f.phi.xi {
        return Err(GmmapError::InconsistentBasis { xi, subregion: i });
    }
    if xi <= 1e-9 * f.phi.xi.max(f64::MIN_POSITIVE) {
        return Ok(None);
    }
    Ok(Some(MomentGaussian {
        m1,
        m2,
        xi,
        pi: xi,
        support_count: f.phi.support_count,
        kind: GaussianKind::Free,
    }))
}

struct Candidate {
    g: MomentGaussian,
    dist: DistGaussian,
    bbox: Aabb,
    basis: FreeBasis,
}

impl Candidate {
    fn new(g: MomentGaussian, basis: FreeBasis, params: &GmmapParams) -> Result<Self> {
        let dist = regularized_distribution(&g, params.min_variance)?;
        Ok(Candidate {
            bbox: aabb_of_gaussian(&dist, params.alpha_m),
            g,
            dist,
            basis,
        })
    }
}

/// Result of free-space construction, in the camera frame.
#[derive(Debug, Clone, Default)]
pub struct FreeGmm {
    pub gaussians: Vec<MomentGaussian>,
    /// Largest number of candidates plus pending bases held at once.
    pub peak_items: usize,
}

/// Builds the free GMM in moment form (camera frame).
pub fn construct_free_moments(
    bases: &[FreeBasis],
    partition: &FrustumPartition,
    params: &GmmapParams,
) -> Result<FreeGmm> {
    let mut out = FreeGmm::default();
    let Some(i_max) = bases.iter().map(|b| b.i_f).max() else {
        return Ok(out);
    };
    let mut buckets: Vec<Vec<FreeBasis>> = vec![Vec::new(); i_max + 1];
    for b in bases {
        buckets[b.i_f].push(*b);
    }
    let mut pending: usize = bases.len();

    for i in (0..=i_max).rev() {
        let (d_min, d_max) = partition.planes(i);
        let bucket = std::mem::take(&mut buckets[i]);
        pending -= bucket.len();
        let mut queue = VecDeque::with_capacity(bucket.len());
        for f in bucket {
            match recover_free_gaussian(&f, i, d_min, d_max)? {
                Some(g) => queue.push_back(Candidate::new(g, f, params)?),
                None if i > 0 => {
                    buckets[i - 1].push(f);
                    pending += 1;
                }
                None => {}
            }
        }
        out.peak_items = out.peak_items.max(queue.len() + pending);

        while let Some(mut q) = queue.pop_front() {
            let mut absorbed = Vec::new();
            for (idx, c) in queue.iter().enumerate() {
                if !c.bbox.intersects(&q.bbox) {
                    continue;
                }
                let r = fuse_gaussians(&c.g, &q.g)?;
                let r_dist = regularized_distribution(&r, params.min_variance)?;
                let d_h = unscented_hellinger(&r_dist, &c.dist, &q.dist);
                let s_r = z_extent_iou(&c.bbox, &q.bbox);
                if d_h <= s_r * params.alpha_h_free {
                    let mut basis = q.basis;
                    basis.merge(&c.basis)?;
                    q = Candidate {
                        bbox: aabb_of_gaussian(&r_dist, params.alpha_m),
                        g: r,
                        dist: r_dist,
                        basis,
                    };
                    absorbed.push(idx);
                }
            }
            if absorbed.is_empty() {
                out.gaussians.push(q.g);
                if i > 0 {
                    buckets[i - 1].push(q.basis);
                    pending += 1;
                }
            } else {
                for idx in absorbed.into_iter().rev() {
                    queue.remove(idx);
                }
                // A grown Gaussian may now reach candidates it missed.
                queue.push_front(q);
            }
        }
    }
    Ok(out)
}

/// Builds the free GMM in distribution form (camera frame).
pub fn construct_free_gmm(
    bases: &[FreeBasis],
    partition: &FrustumPartition,
    params: &GmmapParams,
) -> Result<Vec<DistGaussian>> {
    construct_free_moments(bases, partition, params)?
        .gaussians
        .iter()
        .map(|g| regularized_distribution(g, params.min_variance))
        .collect()
}
