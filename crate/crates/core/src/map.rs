//! Gaussian storage shared by local and global maps: every Gaussian is kept
//! in both moment form (for lossless fusion) and distribution form (for
//! queries), and indexed by its Mahalanobis bounding box.

use std::collections::BTreeMap;

use nalgebra::Matrix3;

use crate::error::{GmmapError, Result};
use crate::spatial_index::RTree;
use crate::types::{
    aabb_of_gaussian, regularized, Aabb, DistGaussian, GaussianKind, GmmapParams,
    MomentGaussian, SymMat3, UnexploredPrior, Vec3,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Distribution form with `min_variance` added to the covariance diagonal.
pub fn regularized_distribution(m: &MomentGaussian, min_variance: f64) -> Result<DistGaussian> {
    let mut d = m.to_distribution()?;
    d.sigma = d.sigma.add_diagonal(min_variance);
    Ok(d)
}

/// Inverse covariance and log normalizer of a Gaussian density.
pub(crate) fn density_terms(sigma: &SymMat3) -> (Matrix3<f64>, f64) {
    let cov = sigma.to_matrix();
    let chol = cov
        .cholesky()
        .or_else(|| regularized(sigma).to_matrix().cholesky())
        .expect("regularized covariance must factor");
    let l = chol.l();
    let log_det = 2.0 * (0..3).map(|k| l[(k, k)].ln()).sum::<f64>();
    (chol.inverse(), -0.5 * (3.0 * LN_2PI + log_det))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapGaussian {
    pub moments: MomentGaussian,
    pub dist: DistGaussian,
    pub bbox: Aabb,
    precision: Matrix3<f64>,
    log_norm: f64,
}

impl MapGaussian {
    pub fn from_moments(moments: MomentGaussian, min_variance: f64, alpha_m: f64) -> Result<Self> {
        let dist = regularized_distribution(&moments, min_variance)?;
        Ok(Self::from_parts(moments, dist, alpha_m))
    }

    pub fn from_parts(moments: MomentGaussian, dist: DistGaussian, alpha_m: f64) -> Self {
        let (precision, log_norm) = density_terms(&dist.sigma);
        MapGaussian {
            bbox: aabb_of_gaussian(&dist, alpha_m),
            moments,
            dist,
            precision,
            log_norm,
        }
    }

    /// Rounds every stored field to single precision, the resolution the
    /// map is persisted at.
    pub fn quantized(&self, alpha_m: f64) -> Self {
        let q = |v: f64| v as f32 as f64;
        let moments = MomentGaussian {
            m1: self.moments.m1.map(q),
            m2: SymMat3(self.moments.m2.0.map(q)),
            xi: q(self.moments.xi),
            pi: q(self.moments.pi),
            ..self.moments
        };
        let dist = DistGaussian {
            mu: self.dist.mu.map(q),
            sigma: SymMat3(self.dist.sigma.0.map(q)),
            pi: q(self.dist.pi),
            xi: q(self.dist.xi),
            ..self.dist
        };
        Self::from_parts(moments, dist, alpha_m)
    }

    pub fn kind(&self) -> GaussianKind {
        self.moments.kind
    }

    pub fn mahalanobis_sq(&self, x: &Vec3) -> f64 {
        let d = x - self.dist.mu;
        d.dot(&(self.precision * d))
    }

    /// `ln N(x | μ, Σ)`
    pub fn log_density(&self, x: &Vec3) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    /// `ln π + ln N(x | μ, Σ)`
    pub fn log_weighted_density(&self, x: &Vec3) -> f64 {
        self.dist.pi.ln() + self.log_density(x)
    }
}

/// Id-keyed Gaussians plus their R-tree.
#[derive(Debug, Clone, Default)]
pub struct GaussianMap {
    gaussians: BTreeMap<u64, MapGaussian>,
    tree: RTree,
    next_id: u64,
}

impl GaussianMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn insert(&mut self, g: MapGaussian) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.tree
            .insert(g.bbox, id)
            .expect("fresh ids are never duplicated");
        self.gaussians.insert(id, g);
        id
    }

    pub fn remove(&mut self, id: u64) -> Result<MapGaussian> {
        self.tree.remove(id)?;
        self.gaussians.remove(&id).ok_or(GmmapError::MissingId(id))
    }

    pub fn get(&self, id: u64) -> Option<&MapGaussian> {
        self.gaussians.get(&id)
    }

    /// Gaussians in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &MapGaussian)> {
        self.gaussians.iter().map(|(id, g)| (*id, g))
    }

    pub fn values(&self) -> impl Iterator<Item = &MapGaussian> {
        self.gaussians.values()
    }

    /// Ids whose boxes overlap `query`, ascending.
    pub fn search_intersecting(&self, query: &Aabb) -> Vec<u64> {
        let mut ids = self.tree.search_intersecting(query);
        ids.sort_unstable();
        ids
    }

    /// Ids whose boxes contain `x`, ascending.
    pub fn search_point(&self, x: &Vec3) -> Vec<u64> {
        let mut ids = self.tree.search_point(x);
        ids.sort_unstable();
        ids
    }

    pub fn root_box(&self) -> Option<Aabb> {
        self.tree.root_box()
    }

    pub fn tree(&self) -> &RTree {
        &self.tree
    }

    pub fn count(&self, kind: GaussianKind) -> usize {
        self.values().filter(|g| g.kind() == kind).count()
    }

    /// Sum of `xi` over Gaussians of `kind`.
    pub fn total_xi(&self, kind: GaussianKind) -> f64 {
        self.values()
            .filter(|g| g.kind() == kind)
            .map(|g| g.moments.xi)
            .sum()
    }

    /// In-memory footprint of Gaussians plus tree nodes.
    pub fn byte_size(&self) -> usize {
        self.len() * std::mem::size_of::<MapGaussian>() + self.tree.node_bytes()
    }
}

/// The global map: indexed Gaussians plus the unexplored prior.
#[derive(Debug, Clone)]
pub struct GmMap {
    pub gaussians: GaussianMap,
    pub prior: UnexploredPrior,
    pub alpha_m: f64,
    pub min_variance: f64,
}

impl GmMap {
    pub fn new(params: &GmmapParams) -> Result<Self> {
        params.validate()?;
        Ok(GmMap {
            gaussians: GaussianMap::new(),
            prior: params.prior()?,
            alpha_m: params.alpha_m,
            min_variance: params.min_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Inserts a Gaussian at storage precision.
    pub fn insert(&mut self, g: &MapGaussian) -> u64 {
        self.gaussians.insert(g.quantized(self.alpha_m))
    }
}
