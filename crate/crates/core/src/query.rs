//! Occupancy regression over the global map.
//!
//! Each component contributes its constant occupancy (1 occupied, 0 free)
//! weighted by `π N(x | μ, Σ)`; the unexplored prior contributes 0.5 with
//! weight `π0`. Only components whose Mahalanobis distance is within
//! `alpha_m` take part.

use rayon::prelude::*;

use crate::map::{GmMap, MapGaussian};
use crate::types::{GaussianKind, UnexploredPrior, Vec3};

/// Discrete occupancy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OccupancyClass {
    Occupied,
    Free,
    Unexplored,
}

impl OccupancyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OccupancyClass::Occupied => "Occupied",
            OccupancyClass::Free => "Free",
            OccupancyClass::Unexplored => "Unexplored",
        }
    }
}

impl std::fmt::Display for OccupancyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify(m: f64, occ_threshold: f64, free_threshold: f64) -> OccupancyClass {
    if m >= occ_threshold {
        OccupancyClass::Occupied
    } else if m <= free_threshold {
        OccupancyClass::Free
    } else {
        OccupancyClass::Unexplored
    }
}

/// Expected occupancy and its variance from the prior and a set of
/// components, accumulated in log space.
fn regress<'a>(
    prior: &UnexploredPrior,
    x: &Vec3,
    components: impl Iterator<Item = &'a MapGaussian>,
) -> (f64, f64) {
    let log_prior = prior.pi0.ln();
    // Weights relative to exp(shift); the shift is raised as larger log
    // weights appear so no exponent overflows.
    let mut shift = log_prior;
    let mut total = 1.0;
    let mut occupied = 0.0;
    let mut prior_w = 1.0;
    for g in components {
        let lw = g.log_weighted_density(x);
        if lw > shift {
            let s = (shift - lw).exp();
            total *= s;
            occupied *= s;
            prior_w *= s;
            shift = lw;
        }
        let w = (lw - shift).exp();
        total += w;
        if g.kind() == GaussianKind::Occupied {
            occupied += w;
        }
    }
    let w_occ = occupied / total;
    let w0 = prior_w / total;
    let m = w_occ + w0 * prior.mu0;
    let second = w_occ + w0 * (prior.sigma0_sq + prior.mu0 * prior.mu0);
    (m, (second - m * m).max(0.0))
}

/// `(m, v)` at `x` using only components within the Mahalanobis bound.
pub fn query_occupancy(map: &GmMap, x: &Vec3) -> (f64, f64) {
    let gate = map.alpha_m * map.alpha_m;
    let ids = map.gaussians.search_point(x);
    let hits = ids
        .iter()
        .filter_map(|id| map.gaussians.get(*id))
        .filter(|g| g.mahalanobis_sq(x) <= gate);
    regress(&map.prior, x, hits)
}

/// `(m, v)` at `x` summing over every component.
pub fn query_occupancy_unpruned(map: &GmMap, x: &Vec3) -> (f64, f64) {
    regress(&map.prior, x, map.gaussians.values())
}

impl GmMap {
    /// Occupancy mean and variance at `x`.
    pub fn query(&self, x: &Vec3) -> (f64, f64) {
        query_occupancy(self, x)
    }
}

/// Parallel form of [`query_occupancy`]; results are identical.
pub fn query_batch(map: &GmMap, points: &[Vec3]) -> Vec<(f64, f64)> {
    points.par_iter().map(|x| query_occupancy(map, x)).collect()
}
