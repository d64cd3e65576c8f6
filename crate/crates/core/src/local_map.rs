//! Per-image map: compress the image, build its free space, and move
//! everything into the world frame.

use crate::depth::DepthImage;
use crate::error::Result;
use crate::free_space::{construct_free_moments, FrustumPartition};
use crate::map::{GaussianMap, MapGaussian};
use crate::moments::transform;
use crate::spgf::{spgf_star, spgf_star_parallel, SpgfStats};
use crate::types::{CameraIntrinsics, GaussianKind, GmmapParams, MomentGaussian, Pose, Vec3};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalMapStats {
    pub spgf: SpgfStats,
    pub occupied: usize,
    pub free: usize,
    /// Largest transient footprint while building this map, including the
    /// map itself.
    pub peak_transient_bytes: usize,
}

/// Gaussians of one image in the world frame.
#[derive(Debug, Clone, Default)]
pub struct LocalMap {
    pub gaussians: GaussianMap,
    pub sensor_origin: Vec3,
    pub stats: LocalMapStats,
}

impl LocalMap {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

fn to_world(g: &MomentGaussian, pose: &Pose, params: &GmmapParams) -> Result<MapGaussian> {
    let world = transform(&g.to_distribution()?, pose).to_moments();
    MapGaussian::from_moments(world, params.min_variance, params.alpha_m)
}

/// Builds the local map of one image taken at `pose`.
pub fn construct_local_map(
    image: &DepthImage,
    pose: &Pose,
    cam: &CameraIntrinsics,
    params: &GmmapParams,
) -> Result<LocalMap> {
    build(image, pose, cam, params, false)
}

/// Like [`construct_local_map`] with rows segmented on the current rayon
/// pool. The result is identical.
pub fn construct_local_map_parallel(
    image: &DepthImage,
    pose: &Pose,
    cam: &CameraIntrinsics,
    params: &GmmapParams,
) -> Result<LocalMap> {
    build(image, pose, cam, params, true)
}

fn build(
    image: &DepthImage,
    pose: &Pose,
    cam: &CameraIntrinsics,
    params: &GmmapParams,
    parallel: bool,
) -> Result<LocalMap> {
    let out = if parallel {
        spgf_star_parallel(image, cam, params)?
    } else {
        spgf_star(image, cam, params)?
    };
    let partition = FrustumPartition::new(cam, params);
    let free = construct_free_moments(&out.bases, &partition, params)?;

    let mut all = Vec::with_capacity(out.occupied.len() + free.gaussians.len());
    for g in out.occupied.iter().chain(free.gaussians.iter()) {
        all.push(to_world(g, pose, params)?);
    }
    all.sort_by(|a, b| a.bbox.min.x.total_cmp(&b.bbox.min.x));

    let mut gaussians = GaussianMap::new();
    for g in all {
        gaussians.insert(g);
    }
    let basis_bytes = out.bases.len() * std::mem::size_of::<crate::free_space::FreeBasis>()
        + out.occupied.len() * std::mem::size_of::<MomentGaussian>();
    let free_bytes = free.peak_items * std::mem::size_of::<crate::free_space::FreeBasis>() * 2;
    let stats = LocalMapStats {
        spgf: out.stats,
        occupied: gaussians.count(GaussianKind::Occupied),
        free: gaussians.count(GaussianKind::Free),
        peak_transient_bytes: out
            .stats
            .peak_transient_bytes
            .max(basis_bytes + free_bytes)
            .max(basis_bytes + gaussians.byte_size()),
    };
    Ok(LocalMap {
        gaussians,
        sensor_origin: pose.translation,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 60.0,
            fy: 60.0,
            cx: 31.5,
            cy: 31.5,
            width: 64,
            height: 64,
            depth_scale: 0.001,
            min_range: 0.1,
            max_range: 8.0,
        }
    }

    fn params() -> GmmapParams {
        GmmapParams::default().scaled_for_pixels(64 * 64)
    }

    #[test]
    fn wall_gives_one_occupied_and_a_free_column() {
        let c = cam();
        let p = params();
        let img = DepthImage::filled(64, 64, 2.0);
        let local = construct_local_map(&img, &Pose::identity(), &c, &p).unwrap();
        let partition = FrustumPartition::new(&c, &p);
        assert_eq!(local.stats.occupied, 1);
        assert_eq!(local.stats.free, partition.subregion_index(2.0) + 1);
        let root = local.gaussians.root_box().unwrap();
        assert!(root.contains_point(&Vec3::zeros()));
        assert!(root.contains_point(&Vec3::new(0.0, 0.0, 2.0)));
    }

    #[test]
    fn translation_shifts_means_only() {
        let c = cam();
        let p = params();
        let img = DepthImage::filled(64, 64, 2.0);
        let a = construct_local_map(&img, &Pose::identity(), &c, &p).unwrap();
        let shift = Vec3::new(10.0, 0.0, 0.0);
        let b = construct_local_map(&img, &Pose::from_translation(shift), &c, &p).unwrap();
        assert_eq!(a.len(), b.len());
        let mut ga: Vec<_> = a.gaussians.values().collect();
        let mut gb: Vec<_> = b.gaussians.values().collect();
        ga.sort_by(|x, y| x.dist.mu.z.total_cmp(&y.dist.mu.z));
        gb.sort_by(|x, y| x.dist.mu.z.total_cmp(&y.dist.mu.z));
        for (x, y) in ga.iter().zip(gb.iter()) {
            assert!((y.dist.mu - x.dist.mu - shift).norm() < 1e-9);
            for k in 0..6 {
                assert!((y.dist.sigma.0[k] - x.dist.sigma.0[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_image_gives_empty_map() {
        let c = cam();
        let img = DepthImage::filled(64, 64, 0.0);
        let local = construct_local_map(&img, &Pose::identity(), &c, &params()).unwrap();
        assert!(local.is_empty());
        assert!(local.gaussians.root_box().is_none());
    }
}
