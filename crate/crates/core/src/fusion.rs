//! Merging a local map into the global map, gated by an unscented
//! Hellinger distance scaled by geometric similarity.

use nalgebra::Matrix3;

use crate::error::Result;
use crate::local_map::LocalMap;
use crate::map::{density_terms, GmMap, MapGaussian};
use crate::moments::fuse_gaussians;
use crate::types::{aabb_of_gaussian, regularized, Aabb, DistGaussian, GaussianKind, GmmapParams, Vec3};

/// Sigma-point spread for n = 3 and κ = 0.
const SIGMA_SCALE: f64 = 1.732_050_807_568_877_2;
/// Weight of each of the 2n non-central sigma points; the central point
/// has weight zero when κ = 0.
const SIGMA_WEIGHT: f64 = 1.0 / 6.0;

struct Component {
    log_w: f64,
    mu: Vec3,
    chol: Matrix3<f64>,
    precision: Matrix3<f64>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, g: &DistGaussian) -> Self {
        let sigma = regularized(&g.sigma);
        let chol = sigma
            .to_matrix()
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| Matrix3::from_diagonal(&sigma.diag().map(|v| v.max(0.0).sqrt())));
        let (precision, log_norm) = density_terms(&sigma);
        Component {
            log_w: weight.ln(),
            mu: g.mu,
            chol,
            precision,
            log_norm,
        }
    }

    fn log_pdf(&self, x: &Vec3) -> f64 {
        let d = x - self.mu;
        self.log_w + self.log_norm - 0.5 * d.dot(&(self.precision * d))
    }

    fn sigma_points(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..3).flat_map(move |k| {
            let col = self.chol.column(k) * SIGMA_SCALE;
            [self.mu + col, self.mu - col]
        })
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn mixture(parts: &[(f64, &DistGaussian)]) -> Vec<Component> {
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    parts
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, g)| Component::new(w / total, g))
        .collect()
}

/// Hellinger distance in `[0, 1]` between two weighted Gaussian mixtures,
/// with the integral estimated by sigma points of the proposal
/// `(f + g) / 2`.
pub fn unscented_hellinger_mixtures(f: &[(f64, &DistGaussian)], g: &[(f64, &DistGaussian)]) -> f64 {
    let f = mixture(f);
    let g = mixture(g);
    let ln_half = 0.5f64.ln();
    let log_f = |x: &Vec3| log_sum_exp(f.iter().map(|c| c.log_pdf(x)));
    let log_g = |x: &Vec3| log_sum_exp(g.iter().map(|c| c.log_pdf(x)));

    let mut h2 = 0.0;
    for comp in f.iter().chain(g.iter()) {
        // Each proposal component carries half of its mixture weight.
        let proposal_w = 0.5 * comp.log_w.exp();
        for x in comp.sigma_points() {
            let lf = log_f(&x);
            let lg = log_g(&x);
            let lh = log_sum_exp([lf + ln_half, lg + ln_half].into_iter());
            let a = (0.5 * (lf - lh)).exp();
            let b = (0.5 * (lg - lh)).exp();
            h2 += proposal_w * SIGMA_WEIGHT * (a - b).powi(2);
        }
    }
    (0.5 * h2).clamp(0.0, 1.0).sqrt()
}

/// Distance between the fused Gaussian `r` and the pair `{c, q}` weighted
/// by their regression weights.
pub fn unscented_hellinger(r: &DistGaussian, c: &DistGaussian, q: &DistGaussian) -> f64 {
    unscented_hellinger_mixtures(&[(1.0, r)], &[(c.pi, c), (q.pi, q)])
}

/// IoU of the z ranges of two boxes.
pub fn z_extent_iou(a: &Aabb, b: &Aabb) -> f64 {
    let inter = (a.max.z.min(b.max.z) - a.min.z.max(b.min.z)).max(0.0);
    let union = a.max.z.max(b.max.z) - a.min.z.min(b.min.z);
    if union <= 0.0 {
        return if inter >= 0.0 && a.min.z == b.min.z { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Unit eigenvector of the smallest covariance eigenvalue.
pub fn surface_normal(g: &DistGaussian) -> Vec3 {
    let (_, vecs) = g.sigma.eigen();
    vecs.column(0).into_owned().normalize()
}

fn projected_rect(b: &Aabb, e1: &Vec3, e2: &Vec3) -> [f64; 4] {
    let mut r = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in b.corners() {
        let (s, t) = (p.dot(e1), p.dot(e2));
        r[0] = r[0].min(s);
        r[1] = r[1].min(t);
        r[2] = r[2].max(s);
        r[3] = r[3].max(t);
    }
    r
}

fn rect_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let area = |r: &[f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Overlap score in `[0, 1]` of two same-kind Gaussians. Free: IoU of the
/// boxes. Occupied: IoU of the boxes projected onto the plane orthogonal
/// to the mean surface normal, times the normals' alignment.
pub fn geometric_similarity(c: &DistGaussian, q: &DistGaussian, alpha_m: f64) -> f64 {
    let bc = aabb_of_gaussian(c, alpha_m);
    let bq = aabb_of_gaussian(q, alpha_m);
    match c.kind {
        GaussianKind::Free => bc.iou(&bq),
        GaussianKind::Occupied => {
            let nc = surface_normal(c);
            let mut nq = surface_normal(q);
            let dot = nc.dot(&nq);
            if dot < 0.0 {
                nq = -nq;
            }
            let n = (nc + nq).normalize();
            let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let e1 = n.cross(&helper).normalize();
            let e2 = n.cross(&e1);
            let iou = rect_iou(&projected_rect(&bc, &e1, &e2), &projected_rect(&bq, &e1, &e2));
            iou * dot.abs()
        }
    }
}

/// Bookkeeping of one fusion step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FusionStats {
    /// Global Gaussians overlapping the local map's root box.
    pub observed: usize,
    /// Observed Gaussians that absorbed at least one local Gaussian.
    pub fused: usize,
    /// Local Gaussians absorbed into observed ones.
    pub absorbed: usize,
    /// Bytes held by the extracted observed region.
    pub transient_bytes: usize,
}

/// Merges `local` into `global`. Observed global Gaussians absorb every
/// same-kind overlapping local Gaussian that passes the distance gate;
/// all survivors are then stored in the global map.
pub fn fuse_local_into_global(
    global: &mut GmMap,
    local: LocalMap,
    params: &GmmapParams,
) -> Result<FusionStats> {
    let mut stats = FusionStats::default();
    let mut local = local.gaussians;
    let Some(root) = local.root_box() else {
        return Ok(stats);
    };
    let observed_ids = global.gaussians.search_intersecting(&root);
    let mut observed = Vec::with_capacity(observed_ids.len());
    for id in observed_ids {
        observed.push(global.gaussians.remove(id)?);
    }
    stats.observed = observed.len();
    stats.transient_bytes = observed.capacity() * std::mem::size_of::<MapGaussian>();

    let mut untouched = Vec::new();
    for mut c in observed {
        let alpha_h = match c.kind() {
            GaussianKind::Free => params.alpha_h_free,
            GaussianKind::Occupied => params.alpha_h_occ,
        };
        let mut fused = false;
        for qid in local.search_intersecting(&c.bbox) {
            let q = local.get(qid).expect("id from search");
            if q.kind() != c.kind() {
                continue;
            }
            let r = fuse_gaussians(&c.moments, &q.moments)?;
            let r = MapGaussian::from_moments(r, params.min_variance, params.alpha_m)?;
            let d_h = unscented_hellinger(&r.dist, &c.dist, &q.dist);
            let s_r = geometric_similarity(&c.dist, &q.dist, params.alpha_m);
            if d_h <= s_r * alpha_h {
                local.remove(qid)?;
                c = r;
                fused = true;
                stats.absorbed += 1;
            }
        }
        if fused {
            stats.fused += 1;
            local.insert(c);
        } else {
            untouched.push(c);
        }
    }
    for c in &untouched {
        global.insert(c);
    }
    for (_, g) in local.iter() {
        global.insert(g);
    }
    Ok(stats)
}
