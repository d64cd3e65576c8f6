//! Binary map files (little endian).
//!
//! | offset | size | field                        |
//! |--------|------|------------------------------|
//! | 0      | 4    | magic `GMM1`                 |
//! | 4      | 4    | version (u32)                |
//! | 8      | 8    | Gaussian count (u64)         |
//! | 16     | 8    | prior weight π0 (f64)        |
//! | 24     | 8    | Mahalanobis bound (f64)      |
//! | 32     | 8    | covariance floor (f64)       |
//! | 40     | 88·n | records                      |
//!
//! Each record holds single-precision floats: first moment (3), second
//! moment (6, upper triangle row-major), ξ, π, mean (3), covariance (6);
//! then the kind code (u32, 1 occupied, 0 free) and support count (u32).

use std::fs;
use std::path::Path;

use crate::error::{GmmapError, Result};
use crate::map::{GaussianMap, GmMap, MapGaussian};
use crate::types::{DistGaussian, GaussianKind, MomentGaussian, SymMat3, UnexploredPrior, Vec3};

pub const MAGIC: &[u8; 4] = b"GMM1";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 40;
pub const RECORD_BYTES: usize = 88;

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn encode_record(out: &mut Vec<u8>, g: &MapGaussian) {
    let m = &g.moments;
    let d = &g.dist;
    m.m1.iter().for_each(|&v| put_f32(out, v));
    m.m2.0.iter().for_each(|&v| put_f32(out, v));
    put_f32(out, m.xi);
    put_f32(out, m.pi);
    d.mu.iter().for_each(|&v| put_f32(out, v));
    d.sigma.0.iter().for_each(|&v| put_f32(out, v));
    out.extend_from_slice(&m.kind.code().to_le_bytes());
    out.extend_from_slice(&m.support_count.to_le_bytes());
}

/// Serializes `map` into the binary layout above.
pub fn encode_map(map: &GmMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + RECORD_BYTES * map.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(map.len() as u64).to_le_bytes());
    out.extend_from_slice(&map.prior.pi0.to_le_bytes());
    out.extend_from_slice(&map.alpha_m.to_le_bytes());
    out.extend_from_slice(&map.min_variance.to_le_bytes());
    for g in map.gaussians.values() {
        encode_record(&mut out, g);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| GmmapError::MapFormat(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take()?) as f64)
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))
    }

    fn sym(&mut self) -> Result<SymMat3> {
        let mut s = [0.0; 6];
        for v in &mut s {
            *v = self.f32()?;
        }
        Ok(SymMat3(s))
    }
}

/// Parses a map from bytes and rebuilds its spatial index.
pub fn decode_map(bytes: &[u8]) -> Result<GmMap> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.take()?;
    if &magic != MAGIC {
        return Err(GmmapError::MapFormat(format!("bad magic {magic:?}")));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(GmmapError::UnsupportedVersion(version));
    }
    let count = c.u64()? as usize;
    let pi0 = c.f64()?;
    let alpha_m = c.f64()?;
    let min_variance = c.f64()?;
    let expected = HEADER_BYTES as u128 + RECORD_BYTES as u128 * count as u128;
    if expected != bytes.len() as u128 {
        return Err(GmmapError::MapFormat(format!(
            "{count} records need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut gaussians = GaussianMap::new();
    for _ in 0..count {
        let m1 = c.vec3()?;
        let m2 = c.sym()?;
        let xi = c.f32()?;
        let pi = c.f32()?;
        let mu = c.vec3()?;
        let sigma = c.sym()?;
        let code = c.u32()?;
        let support_count = c.u32()?;
        let kind = GaussianKind::from_code(code)
            .ok_or_else(|| GmmapError::MapFormat(format!("unknown kind code {code}")))?;
        if !(xi > 0.0) || !sigma.is_finite() || !mu.iter().all(|v| v.is_finite()) {
            return Err(GmmapError::MapFormat("invalid Gaussian record".into()));
        }
        let moments = MomentGaussian {
            m1,
            m2,
            xi,
            pi,
            support_count,
            kind,
        };
        let dist = DistGaussian {
            mu,
            sigma,
            pi,
            xi,
            support_count,
            kind,
        };
        gaussians.insert(MapGaussian::from_parts(moments, dist, alpha_m));
    }
    Ok(GmMap {
        gaussians,
        prior: UnexploredPrior::new(pi0)?,
        alpha_m,
        min_variance,
    })
}

pub fn save_map(map: &GmMap, path: &Path) -> Result<()> {
    fs::write(path, encode_map(map))?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<GmMap> {
    decode_map(&fs::read(path)?)
}
