//! Method-of-moments updates. Every Gaussian under construction is a sum
//! of unnormalized moments, so fusing points, rays or whole Gaussians is
//! addition and the mean/covariance can be recovered at any time.

use crate::error::{GmmapError, Result};
use crate::types::{DistGaussian, GaussianKind, MomentGaussian, Pose, SymMat3, Vec3};

/// Rays shorter than this carry no free-space evidence.
const MIN_LINE_LENGTH: f64 = 1e-12;

impl MomentGaussian {
    /// Adds a surface point measured in the sensor frame. The weight grows
    /// by the range to the point so occupied and free weights share units.
    pub fn fuse_point(&mut self, x: &Vec3) {
        debug_assert_eq!(self.kind, GaussianKind::Occupied);
        self.m1 += x;
        self.m2 = self.m2.add(&SymMat3::outer(x));
        self.xi += 1.0;
        self.pi += x.norm();
        self.support_count += 1;
    }

    /// Adds the segment from the sensor origin to `p` with uniform line
    /// density, using the closed-form moments of the segment. Returns
    /// `false` (and leaves `self` untouched) for zero-length or
    /// non-finite rays; range gating happens at unprojection.
    pub fn fuse_line(&mut self, p: &Vec3) -> bool {
        debug_assert_eq!(self.kind, GaussianKind::Free);
        let len = p.norm();
        if !(len >= MIN_LINE_LENGTH) || !len.is_finite() {
            return false;
        }
        self.m1 += p * (len / 2.0);
        self.m2 = self.m2.add(&SymMat3::outer(p).scale(len / 3.0));
        self.xi += len;
        self.pi += len;
        self.support_count += 1;
        true
    }

    /// In-place Gaussian-Gaussian fusion.
    pub fn merge(&mut self, other: &MomentGaussian) -> Result<()> {
        if self.kind != other.kind {
            return Err(GmmapError::KindMismatch(self.kind, other.kind));
        }
        self.m1 += other.m1;
        self.m2 = self.m2.add(&other.m2);
        self.xi += other.xi;
        self.pi += other.pi;
        self.support_count = self.support_count.saturating_add(other.support_count);
        Ok(())
    }

    /// Mean and covariance, with covariance drift clamped to PSD.
    pub fn to_distribution(&self) -> Result<DistGaussian> {
        if !(self.xi > 0.0) {
            return Err(GmmapError::EmptyGaussian(self.xi));
        }
        let mu = self.m1 / self.xi;
        let sigma = self.m2.scale(1.0 / self.xi).sub(&SymMat3::outer(&mu));
        Ok(DistGaussian {
            mu,
            sigma: sigma.repair_psd(),
            pi: self.pi,
            xi: self.xi,
            support_count: self.support_count,
            kind: self.kind,
        })
    }
}

impl DistGaussian {
    pub fn to_moments(&self) -> MomentGaussian {
        MomentGaussian {
            m1: self.mu * self.xi,
            m2: self.sigma.add(&SymMat3::outer(&self.mu)).scale(self.xi),
            xi: self.xi,
            pi: self.pi,
            support_count: self.support_count,
            kind: self.kind,
        }
    }
}

/// Fuses two Gaussians of the same kind.
pub fn fuse_gaussians(a: &MomentGaussian, b: &MomentGaussian) -> Result<MomentGaussian> {
    let mut out = *a;
    out.merge(b)?;
    Ok(out)
}

/// Rigid-body transform of a Gaussian: `μ ← Rμ + t`, `Σ ← RΣRᵀ`.
pub fn transform(g: &DistGaussian, pose: &Pose) -> DistGaussian {
    DistGaussian {
        mu: pose.apply(&g.mu),
        sigma: g.sigma.rotate(&pose.rotation),
        ..*g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Rotation3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn occ() -> MomentGaussian {
        MomentGaussian::empty(GaussianKind::Occupied)
    }

    fn free() -> MomentGaussian {
        MomentGaussian::empty(GaussianKind::Free)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + b.abs())
    }

    /// Two-pass sample mean and (biased) covariance.
    fn batch_stats(points: &[Vec3]) -> (Vec3, Matrix3<f64>) {
        let n = points.len() as f64;
        let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
        let cov = points
            .iter()
            .map(|p| (p - mean) * (p - mean).transpose())
            .fold(Matrix3::zeros(), |acc, m| acc + m)
            / n;
        (mean, cov)
    }

    #[test]
    fn single_point() {
        let mut g = occ();
        g.fuse_point(&Vec3::new(1.0, 2.0, 3.0));
        let d = g.to_distribution().unwrap();
        assert_eq!(d.mu, Vec3::new(1.0, 2.0, 3.0));
        assert!(d.sigma.0.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(d.xi, 1.0);
        assert!((d.pi - 14f64.sqrt()).abs() < 1e-12);
        assert_eq!(d.support_count, 1);
    }

    #[test]
    fn two_points() {
        let mut g = occ();
        g.fuse_point(&Vec3::zeros());
        g.fuse_point(&Vec3::new(2.0, 0.0, 0.0));
        let d = g.to_distribution().unwrap();
        assert_eq!(d.mu, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(d.sigma, SymMat3([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn sampled_gaussian_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mu = Vec3::new(1.0, -2.0, 0.5);
        let l = Matrix3::new(0.5, 0.0, 0.0, 0.2, 0.3, 0.0, -0.1, 0.05, 0.2);
        let sigma = l * l.transpose();
        let n = 1000;
        let mut g = occ();
        for _ in 0..n {
            let z = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            g.fuse_point(&(mu + l * z));
        }
        let d = g.to_distribution().unwrap();
        for k in 0..3 {
            let se = (sigma[(k, k)] / n as f64).sqrt();
            assert!((d.mu[k] - mu[k]).abs() < 3.0 * se, "mean axis {k}");
        }
        let est = d.sigma.to_matrix();
        for i in 0..3 {
            for j in 0..3 {
                // Standard error of a sample covariance entry.
                let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((est[(i, j)] - sigma[(i, j)]).abs() < 3.0 * se, "cov ({i},{j})");
            }
        }
    }

    #[test]
    fn line_moments_match_uniform_segment() {
        let mut g = free();
        assert!(g.fuse_line(&Vec3::new(3.0, 0.0, 0.0)));
        let d = g.to_distribution().unwrap();
        assert!((d.mu - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-12);
        // Variance of U(0, L) is L^2 / 12.
        assert!((d.sigma.0[0] - 0.75).abs() < 1e-12);
        assert!(d.sigma.0[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(d.xi, 3.0);
        assert_eq!(d.pi, 3.0);
    }

    #[test]
    fn zero_length_ray_is_rejected() {
        let mut g = free();
        assert!(!g.fuse_line(&Vec3::zeros()));
        assert_eq!(g, free());
        assert!(!g.fuse_line(&Vec3::new(f64::NAN, 0.0, 0.0)));
        assert_eq!(g, free());
    }

    #[test]
    fn collinear_rays_weight_midpoints_by_length() {
        let mut g = free();
        g.fuse_line(&Vec3::new(2.0, 0.0, 0.0));
        g.fuse_line(&Vec3::new(4.0, 0.0, 0.0));
        let d = g.to_distribution().unwrap();
        assert_eq!(d.xi, 6.0);
        assert!((d.mu.x - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn composed_line_then_distribution() {
        let p = Vec3::new(1.0, -2.0, 2.0);
        let mut g = free();
        g.fuse_line(&p);
        let d = g.to_distribution().unwrap();
        assert!((d.mu - p / 2.0).norm() < 1e-12);
        // Along the ray the variance is L^2/12; the covariance is that times the unit outer product.
        let u = p.normalize();
        let expected = SymMat3::outer(&u).scale(p.norm_squared() / 12.0);
        for (a, b) in d.sigma.0.iter().zip(expected.0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fusing_with_empty_is_identity() {
        let mut a = occ();
        a.fuse_point(&Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(fuse_gaussians(&a, &occ()).unwrap(), a);
    }

    #[test]
    fn gaussian_fusion_matches_point_fusion() {
        let mut a = occ();
        a.fuse_point(&Vec3::zeros());
        let mut b = occ();
        b.fuse_point(&Vec3::new(2.0, 0.0, 0.0));
        let fused = fuse_gaussians(&a, &b).unwrap().to_distribution().unwrap();
        let (mean, cov) = batch_stats(&[Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]);
        assert!((fused.mu - mean).norm() < 1e-12);
        assert!((fused.sigma.to_matrix() - cov).norm() < 1e-12);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        assert!(matches!(
            fuse_gaussians(&occ(), &free()),
            Err(GmmapError::KindMismatch(..))
        ));
    }

    #[test]
    fn empty_distribution_is_an_error() {
        assert!(matches!(occ().to_distribution(), Err(GmmapError::EmptyGaussian(_))));
    }

    #[test]
    fn batch_equivalence_for_ten_thousand_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..1.0), rng.random_range(1.0..4.0)))
            .collect();
        let mut g = occ();
        pts.iter().for_each(|p| g.fuse_point(p));
        let d = g.to_distribution().unwrap();
        let (mean, cov) = batch_stats(&pts);
        for k in 0..3 {
            assert!(rel(d.mu[k], mean[k]) < 1e-5);
        }
        let est = d.sigma.to_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!(rel(est[(i, j)], cov[(i, j)]) < 1e-5);
            }
        }
    }

    #[test]
    fn rotation_examples() {
        let g = DistGaussian {
            mu: Vec3::new(1.0, 0.0, 0.0),
            sigma: SymMat3::diagonal(Vec3::new(1.0, 2.0, 3.0)),
            pi: 4.0,
            xi: 5.0,
            support_count: 6,
            kind: GaussianKind::Free,
        };
        assert_eq!(transform(&g, &Pose::identity()), g);
        let rz = Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let pose = Pose::new(*rz.matrix(), Vec3::zeros()).unwrap();
        let t = transform(&g, &pose);
        assert!((t.mu - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!((t.sigma.diag() - Vec3::new(2.0, 1.0, 3.0)).norm() < 1e-12);
        assert_eq!((t.pi, t.xi, t.support_count, t.kind), (4.0, 5.0, 6, GaussianKind::Free));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_occ() -> impl Strategy<Value = MomentGaussian> {
            proptest::collection::vec(proptest::array::uniform3(-5.0f64..5.0), 1..20).prop_map(|pts| {
                let mut g = occ();
                pts.iter().for_each(|p| g.fuse_point(&Vec3::from(*p)));
                g
            })
        }

        fn arb_pose() -> impl Strategy<Value = Pose> {
            (proptest::array::uniform3(-3.0f64..3.0), proptest::array::uniform3(-10.0f64..10.0)).prop_map(
                |(axis, t)| {
                    let r = Rotation3::new(Vec3::from(axis));
                    Pose::new(*r.matrix(), Vec3::from(t)).unwrap()
                },
            )
        }

        fn close(a: &MomentGaussian, b: &MomentGaussian) -> bool {
            let scale = 1.0 + a.m2.trace().abs() + a.m1.norm();
            (a.m1 - b.m1).norm() <= 1e-6 * scale
                && a.m2.sub(&b.m2).0.iter().all(|v| v.abs() <= 1e-6 * scale)
                && rel(a.xi, b.xi) <= 1e-6
                && rel(a.pi, b.pi) <= 1e-6
                && a.support_count == b.support_count
        }

        proptest! {
            #[test]
            fn fusion_commutes(a in arb_occ(), b in arb_occ()) {
                prop_assert!(close(&fuse_gaussians(&a, &b).unwrap(), &fuse_gaussians(&b, &a).unwrap()));
            }

            #[test]
            fn fusion_associates(a in arb_occ(), b in arb_occ(), c in arb_occ()) {
                let left = fuse_gaussians(&fuse_gaussians(&a, &b).unwrap(), &c).unwrap();
                let right = fuse_gaussians(&a, &fuse_gaussians(&b, &c).unwrap()).unwrap();
                prop_assert!(close(&left, &right));
            }

            #[test]
            fn moment_round_trip(g in arb_occ()) {
                let d = g.to_distribution().unwrap();
                let back = d.to_moments().to_distribution().unwrap();
                prop_assert!((back.mu - d.mu).norm() <= 1e-5 * (1.0 + d.mu.norm()));
                let tr = 1.0 + d.sigma.trace();
                prop_assert!(back.sigma.sub(&d.sigma).0.iter().all(|v| v.abs() <= 1e-5 * tr));
                prop_assert!(rel(back.xi, d.xi) <= 1e-5 && rel(back.pi, d.pi) <= 1e-5);
            }

            #[test]
            fn transform_preserves_mahalanobis(
                g in arb_occ(),
                pose in arb_pose(),
                x in proptest::array::uniform3(-5.0f64..5.0),
            ) {
                let mut d = g.to_distribution().unwrap();
                d.sigma = d.sigma.add_diagonal(0.1);
                let t = transform(&d, &pose);
                let x = Vec3::from(x);
                let before = d.mahalanobis_sq(&x);
                let after = t.mahalanobis_sq(&pose.apply(&x));
                prop_assert!((before - after).abs() <= 1e-6 * (1.0 + before));
                let det0 = d.sigma.to_matrix().determinant();
                let det1 = t.sigma.to_matrix().determinant();
                prop_assert!((det0 - det1).abs() <= 1e-9 * (1.0 + det0.abs()));
                prop_assert_eq!((t.pi, t.xi), (d.pi, d.xi));
            }
        }
    }
}
