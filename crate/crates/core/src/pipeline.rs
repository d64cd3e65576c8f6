//! Frame-by-frame map construction.

use std::time::Instant;

use crate::depth::DepthImage;
use crate::error::{invalid_param, Result};
use crate::eval::{memory_report, MemoryReport};
use crate::fusion::fuse_local_into_global;
use crate::local_map::{construct_local_map, construct_local_map_parallel};
use crate::map::GmMap;
use crate::types::{CameraIntrinsics, GmmapParams, Pose};

/// Per-frame timing and size figures.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameReport {
    pub frame: usize,
    pub local_ms: f64,
    pub fusion_ms: f64,
    pub local_gaussians: usize,
    pub fused: usize,
    pub map_gaussians: usize,
    /// Local map plus transient buffers for this frame.
    pub overhead_bytes: usize,
}

/// Incrementally builds a global map from posed depth images.
pub struct MapBuilder {
    cam: CameraIntrinsics,
    params: GmmapParams,
    map: GmMap,
    pool: Option<rayon::ThreadPool>,
    reports: Vec<FrameReport>,
    peak_overhead: usize,
}

impl MapBuilder {
    pub fn new(cam: CameraIntrinsics, params: GmmapParams) -> Result<Self> {
        cam.validate()?;
        params.validate()?;
        Ok(MapBuilder {
            map: GmMap::new(&params)?,
            cam,
            params,
            pool: None,
            reports: Vec::new(),
            peak_overhead: 0,
        })
    }

    /// Segments image rows on `threads` worker threads. The map produced
    /// does not depend on the thread count.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(invalid_param("threads", "must be positive"));
        }
        self.pool = if threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| invalid_param("threads", e.to_string()))?,
            )
        };
        Ok(self)
    }

    pub fn integrate(&mut self, image: &DepthImage, pose: &Pose) -> Result<FrameReport> {
        let t0 = Instant::now();
        let local = match &self.pool {
            Some(pool) => {
                pool.install(|| construct_local_map_parallel(image, pose, &self.cam, &self.params))?
            }
            None => construct_local_map(image, pose, &self.cam, &self.params)?,
        };
        let local_ms = t0.elapsed().as_secs_f64() * 1e3;
        let local_gaussians = local.len();
        let local_bytes = local.stats.peak_transient_bytes;
        let t1 = Instant::now();
        let fusion = fuse_local_into_global(&mut self.map, local, &self.params)?;
        let fusion_ms = t1.elapsed().as_secs_f64() * 1e3;
        let overhead_bytes = local_bytes + fusion.transient_bytes;
        self.peak_overhead = self.peak_overhead.max(overhead_bytes);
        let report = FrameReport {
            frame: self.reports.len(),
            local_ms,
            fusion_ms,
            local_gaussians,
            fused: fusion.absorbed,
            map_gaussians: self.map.len(),
            overhead_bytes,
        };
        log::debug!(
            "frame {}: {} local, {} absorbed, {} in map",
            report.frame,
            local_gaussians,
            fusion.absorbed,
            report.map_gaussians
        );
        self.reports.push(report);
        Ok(report)
    }

    pub fn map(&self) -> &GmMap {
        &self.map
    }

    pub fn into_map(self) -> GmMap {
        self.map
    }

    pub fn camera(&self) -> &CameraIntrinsics {
        &self.cam
    }

    pub fn params(&self) -> &GmmapParams {
        &self.params
    }

    pub fn reports(&self) -> &[FrameReport] {
        &self.reports
    }

    pub fn peak_overhead_bytes(&self) -> usize {
        self.peak_overhead
    }

    pub fn memory_report(&self) -> MemoryReport {
        memory_report(&self.map, self.peak_overhead)
    }
}

/// Writes `frame,local_ms,fusion_ms,local_gaussians,fused,map_gaussians,overhead_bytes`.
pub fn write_timing_csv(path: &std::path::Path, reports: &[FrameReport]) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::from("frame,local_ms,fusion_ms,local_gaussians,fused,map_gaussians,overhead_bytes\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{:.3},{:.3},{},{},{},{}",
            r.frame, r.local_ms, r.fusion_ms, r.local_gaussians, r.fused, r.map_gaussians, r.overhead_bytes
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}
