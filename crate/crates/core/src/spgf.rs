//! Single-pass Gaussian fitting of a depth image.
//!
//! Rows are read one pixel at a time and split into runs of pixels that lie
//! on a common line (scanline segmentation). Segments of consecutive rows
//! that continue the same planar surface are then fused into triples of one
//! occupied Gaussian and two free-space accumulators (segment fusion).
//! Completed triples leave the working set immediately, so transient state
//! is bounded by the segments of one row plus the open triples.

use rayon::prelude::*;

use crate::depth::DepthImage;
use crate::error::{GmmapError, Result};
use crate::free_space::{FreeBasis, FrustumPartition};
use crate::types::{CameraIntrinsics, GaussianKind, GmmapParams, MomentGaussian, Vec3};

/// A run of pixels in one row lying on a common line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSegment {
    pub occ: MomentGaussian,
    pub phi: MomentGaussian,
    pub beta: MomentGaussian,
    pub row: usize,
    pub col_start: usize,
    /// Inclusive.
    pub col_end: usize,
    pub centroid: Vec3,
    /// Unit direction of the fitted line (camera frame).
    pub direction: Vec3,
    pub min_depth: f64,
}

impl ScanSegment {
    pub fn len(&self) -> usize {
        self.col_end + 1 - self.col_start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// An occupied Gaussian with its free-space accumulators, grown across rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTriple {
    pub occ: MomentGaussian,
    pub phi: MomentGaussian,
    pub beta: MomentGaussian,
    pub min_depth: f64,
    pub rows: usize,
    pub last_row: usize,
    pub col_start: usize,
    pub col_end: usize,
    pub last_centroid: Vec3,
    pub last_direction: Vec3,
    /// Unit normal and centroid of the fitted plane once two rows are in.
    pub plane: Option<(Vec3, Vec3)>,
}

impl GaussianTriple {
    fn open(seg: &ScanSegment) -> Self {
        GaussianTriple {
            occ: seg.occ,
            phi: seg.phi,
            beta: seg.beta,
            min_depth: seg.min_depth,
            rows: 1,
            last_row: seg.row,
            col_start: seg.col_start,
            col_end: seg.col_end,
            last_centroid: seg.centroid,
            last_direction: seg.direction,
            plane: None,
        }
    }

    fn absorb(&mut self, seg: &ScanSegment) -> Result<()> {
        self.occ.merge(&seg.occ)?;
        self.phi.merge(&seg.phi)?;
        self.beta.merge(&seg.beta)?;
        self.min_depth = self.min_depth.min(seg.min_depth);
        self.rows += 1;
        self.last_row = seg.row;
        self.col_start = seg.col_start;
        self.col_end = seg.col_end;
        self.last_centroid = seg.centroid;
        self.last_direction = seg.direction;
        let d = self.occ.to_distribution()?;
        let (_, vecs) = d.sigma.eigen();
        self.plane = Some((vecs.column(0).into_owned(), d.mu));
        Ok(())
    }

    /// Whether `seg` continues this triple's surface in the next row.
    fn accepts(&self, seg: &ScanSegment, cam: &CameraIntrinsics, params: &GmmapParams) -> bool {
        if seg.row != self.last_row + 1
            || seg.col_start > self.col_end
            || seg.col_end < self.col_start
        {
            return false;
        }
        if self.last_direction.dot(&seg.direction).abs() < params.normal_dot_min {
            return false;
        }
        let step = seg.centroid - self.last_centroid;
        match self.plane {
            None => {
                let perp = step - self.last_direction * step.dot(&self.last_direction);
                let tol = params
                    .noise_floor
                    .max(params.k_slope * seg.centroid.norm() / cam.fy);
                perp.norm() <= tol
            }
            Some((normal, center)) => {
                let across = step - seg.direction * step.dot(&seg.direction);
                if across.norm() > 1e-9 {
                    let local = seg.direction.cross(&across).normalize();
                    if local.dot(&normal).abs() < params.normal_dot_min {
                        return false;
                    }
                }
                (seg.centroid - center).dot(&normal).abs()
                    <= params.plane_dist_factor * params.noise_floor
            }
        }
    }

    pub fn basis(&self, partition: &FrustumPartition) -> FreeBasis {
        FreeBasis {
            phi: self.phi,
            beta: self.beta,
            i_f: partition.subregion_index(self.min_depth),
        }
    }
}

/// Counters for one image.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpgfStats {
    pub valid_pixels: usize,
    /// Pixels in runs shorter than `min_segment_pixels`.
    pub discarded_pixels: usize,
    pub discarded_ray_length: f64,
    /// Pixels of triples below `prune_min_support`.
    pub pruned_pixels: usize,
    pub pruned_ray_length: f64,
    pub emitted_pixels: usize,
    pub emitted_ray_length: f64,
    pub peak_segments: usize,
    pub peak_open_triples: usize,
    /// Largest transient footprint: one row of segments plus open triples.
    pub peak_transient_bytes: usize,
}

impl SpgfStats {
    fn merge_row(&mut self, other: &SpgfStats) {
        self.valid_pixels += other.valid_pixels;
        self.discarded_pixels += other.discarded_pixels;
        self.discarded_ray_length += other.discarded_ray_length;
    }
}

/// Accumulator of the run currently being extended.
struct Run {
    occ: MomentGaussian,
    phi: MomentGaussian,
    beta: MomentGaussian,
    col_start: usize,
    col_end: usize,
    last: Vec3,
    min_depth: f64,
}

impl Run {
    fn start(u: usize, p: Vec3) -> Self {
        let mut run = Run {
            occ: MomentGaussian::empty(GaussianKind::Occupied),
            phi: MomentGaussian::empty(GaussianKind::Free),
            beta: MomentGaussian::empty(GaussianKind::Free),
            col_start: u,
            col_end: u,
            last: p,
            min_depth: p.z,
        };
        run.add(u, p);
        run
    }

    fn add(&mut self, u: usize, p: Vec3) {
        self.occ.fuse_point(&p);
        self.phi.fuse_line(&p);
        self.beta.fuse_line(&(p / p.z));
        self.col_end = u;
        self.last = p;
        self.min_depth = self.min_depth.min(p.z);
    }

    /// Mean and principal direction of the run in the row's (x, z) plane.
    fn line_xz(&self) -> ((f64, f64), (f64, f64)) {
        let n = self.occ.xi;
        let (mx, mz) = (self.occ.m1.x / n, self.occ.m1.z / n);
        let m2 = &self.occ.m2.0;
        let cxx = m2[0] / n - mx * mx;
        let cxz = m2[2] / n - mx * mz;
        let czz = m2[5] / n - mz * mz;
        let theta = 0.5 * (2.0 * cxz).atan2(cxx - czz);
        ((mx, mz), (theta.cos(), theta.sin()))
    }

    /// Depth at which the fitted line crosses the ray with x/z = `ru`.
    fn predict_depth(&self, ru: f64) -> Option<f64> {
        if self.occ.xi < 2.0 {
            return Some(self.last.z);
        }
        let ((mx, mz), (dx, dz)) = self.line_xz();
        let denom = dx - ru * dz;
        if denom.abs() < 1e-9 {
            return None;
        }
        let s = (ru * mz - mx) / denom;
        let t = mz + s * dz;
        (t > 0.0).then_some(t)
    }

    fn finish(self, row: usize, rv: f64) -> ScanSegment {
        let ((_, _), (dx, dz)) = self.line_xz();
        let direction = Vec3::new(dx, rv * dz, dz).normalize();
        ScanSegment {
            centroid: self.occ.m1 / self.occ.xi,
            occ: self.occ,
            phi: self.phi,
            beta: self.beta,
            row,
            col_start: self.col_start,
            col_end: self.col_end,
            direction,
            min_depth: self.min_depth,
        }
    }
}

/// Splits row `v` into line segments. `depths` yields `(u, depth)` in
/// increasing `u`; only the current pixel and the open run are held.
pub fn scanline_segmentation(
    v: usize,
    depths: impl IntoIterator<Item = (usize, f32)>,
    cam: &CameraIntrinsics,
    params: &GmmapParams,
) -> (Vec<ScanSegment>, SpgfStats) {
    let mut segments = Vec::new();
    let mut stats = SpgfStats::default();
    let rv = (v as f64 - cam.cy) / cam.fy;
    let mut run: Option<Run> = None;

    let close = |run: Run, segments: &mut Vec<ScanSegment>, stats: &mut SpgfStats| {
        let n = run.col_end + 1 - run.col_start;
        if n >= params.min_segment_pixels {
            segments.push(run.finish(v, rv));
        } else {
            stats.discarded_pixels += n;
            stats.discarded_ray_length += run.phi.xi;
        }
    };

    let mut prev_u: Option<usize> = None;
    for (u, z) in depths {
        let z = z as f64;
        let Some(p) = cam.unproject_checked(u as f64, v as f64, z) else {
            if let Some(r) = run.take() {
                close(r, &mut segments, &mut stats);
            }
            prev_u = Some(u);
            continue;
        };
        stats.valid_pixels += 1;
        let contiguous = prev_u.is_some_and(|pu| pu + 1 == u);
        prev_u = Some(u);
        run = Some(match run.take() {
            Some(mut r) if contiguous => {
                let ru = (u as f64 - cam.cx) / cam.fx;
                // A fitted line predicts planar surfaces exactly, so only
                // the first step of a run needs the wide tolerance.
                let k = if r.occ.xi < 2.0 { params.k_slope } else { params.k_line };
                let tol = params.noise_floor.max(k * r.last.norm() / cam.fx);
                let joins = r.predict_depth(ru).is_some_and(|t| {
                    (z - t).abs() * Vec3::new(ru, rv, 1.0).norm() <= tol
                });
                if joins {
                    r.add(u, p);
                    r
                } else {
                    close(r, &mut segments, &mut stats);
                    Run::start(u, p)
                }
            }
            Some(r) => {
                close(r, &mut segments, &mut stats);
                Run::start(u, p)
            }
            None => Run::start(u, p),
        });
    }
    if let Some(r) = run.take() {
        close(r, &mut segments, &mut stats);
    }
    (segments, stats)
}

/// Extends the open triples `prev` (ending in the previous row) with the
/// segments `segs` of the current row. Each triple takes at most one
/// segment, the first compatible one. Returns the open triples for the next
/// row and the triples that were not extended.
pub fn segment_fusion(
    prev: Vec<GaussianTriple>,
    segs: &[ScanSegment],
    cam: &CameraIntrinsics,
    params: &GmmapParams,
) -> Result<(Vec<GaussianTriple>, Vec<GaussianTriple>)> {
    let mut taken = vec![false; prev.len()];
    let mut next = Vec::with_capacity(segs.len());
    for seg in segs {
        let hit = prev
            .iter()
            .enumerate()
            .find(|(k, t)| !taken[*k] && t.accepts(seg, cam, params))
            .map(|(k, _)| k);
        match hit {
            Some(k) => {
                taken[k] = true;
                let mut t = prev[k];
                t.absorb(seg)?;
                next.push(t);
            }
            None => next.push(GaussianTriple::open(seg)),
        }
    }
    let completed = prev
        .into_iter()
        .zip(taken)
        .filter_map(|(t, used)| (!used).then_some(t))
        .collect();
    Ok((next, completed))
}

/// Occupied Gaussians (moment form, camera frame) and free bases of one
/// image.
#[derive(Debug, Clone, Default)]
pub struct SpgfOutput {
    pub occupied: Vec<MomentGaussian>,
    pub bases: Vec<FreeBasis>,
    pub stats: SpgfStats,
}

/// Incremental row-by-row driver.
struct Builder<'a> {
    cam: &'a CameraIntrinsics,
    params: &'a GmmapParams,
    partition: FrustumPartition,
    open: Vec<GaussianTriple>,
    out: SpgfOutput,
}

impl<'a> Builder<'a> {
    fn new(cam: &'a CameraIntrinsics, params: &'a GmmapParams) -> Self {
        Builder {
            cam,
            params,
            partition: FrustumPartition::new(cam, params),
            open: Vec::new(),
            out: SpgfOutput::default(),
        }
    }

    fn emit(&mut self, t: GaussianTriple) {
        let stats = &mut self.out.stats;
        let n = t.occ.support_count as usize;
        if t.occ.support_count < self.params.prune_min_support {
            stats.pruned_pixels += n;
            stats.pruned_ray_length += t.phi.xi;
        } else {
            stats.emitted_pixels += n;
            stats.emitted_ray_length += t.phi.xi;
            self.out.bases.push(t.basis(&self.partition));
            self.out.occupied.push(t.occ);
        }
    }

    fn push_row(&mut self, segs: &[ScanSegment], row_stats: &SpgfStats) -> Result<()> {
        self.out.stats.merge_row(row_stats);
        let stats = &mut self.out.stats;
        stats.peak_segments = stats.peak_segments.max(segs.len());
        stats.peak_open_triples = stats.peak_open_triples.max(self.open.len());
        let bytes = segs.len() * std::mem::size_of::<ScanSegment>()
            + (self.open.len() + segs.len()) * std::mem::size_of::<GaussianTriple>();
        stats.peak_transient_bytes = stats.peak_transient_bytes.max(bytes);

        let prev = std::mem::take(&mut self.open);
        let (next, completed) = segment_fusion(prev, segs, self.cam, self.params)?;
        self.open = next;
        for t in completed {
            self.emit(t);
        }
        Ok(())
    }

    fn finish(mut self) -> SpgfOutput {
        for t in std::mem::take(&mut self.open) {
            self.emit(t);
        }
        self.out
    }
}

fn check_dims(image: &DepthImage, cam: &CameraIntrinsics) -> Result<()> {
    if image.width() != cam.width || image.height() != cam.height {
        return Err(GmmapError::DimensionMismatch {
            got_w: image.width(),
            got_h: image.height(),
            want_w: cam.width,
            want_h: cam.height,
        });
    }
    Ok(())
}

/// Compresses `image` in a single sequential pass.
pub fn spgf_star(
    image: &DepthImage,
    cam: &CameraIntrinsics,
    params: &GmmapParams,
) -> Result<SpgfOutput> {
    check_dims(image, cam)?;
    let mut builder = Builder::new(cam, params);
    for v in 0..image.height() {
        let pixels = image.row(v).iter().copied().enumerate();
        let (segs, row_stats) = scanline_segmentation(v, pixels, cam, params);
        builder.push_row(&segs, &row_stats)?;
    }
    Ok(builder.finish())
}

/// Same result as [`spgf_star`], with rows segmented concurrently on the
/// current rayon pool and fused in row order.
pub fn spgf_star_parallel(
    image: &DepthImage,
    cam: &CameraIntrinsics,
    params: &GmmapParams,
) -> Result<SpgfOutput> {
    check_dims(image, cam)?;
    let rows: Vec<(Vec<ScanSegment>, SpgfStats)> = (0..image.height())
        .into_par_iter()
        .map(|v| {
            let pixels = image.row(v).iter().copied().enumerate();
            scanline_segmentation(v, pixels, cam, params)
        })
        .collect();
    let mut builder = Builder::new(cam, params);
    for (segs, row_stats) in &rows {
        builder.push_row(segs, row_stats)?;
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 60.0,
            fy: 60.0,
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            width: w,
            height: h,
            depth_scale: 0.001,
            min_range: 0.1,
            max_range: 8.0,
        }
    }

    fn params() -> GmmapParams {
        GmmapParams {
            prune_min_support: 1,
            ..GmmapParams::default()
        }
    }

    fn row_of(depths: &[f32]) -> impl Iterator<Item = (usize, f32)> + '_ {
        depths.iter().copied().enumerate()
    }

    #[test]
    fn concave_corner_splits_at_the_corner_pixel() {
        // Walls z = 2 + x and z = 3 - x meet at ru = 0.2, between
        // columns 43 and 44.
        let c = cam(64, 64);
        let depths: Vec<f32> = (0..64)
            .map(|u| {
                let ru = (u as f64 - c.cx) / c.fx;
                (2.0 / (1.0 - ru)).min(3.0 / (1.0 + ru)) as f32
            })
            .collect();
        let (segs, _) = scanline_segmentation(10, row_of(&depths), &c, &params());
        let spans: Vec<_> = segs.iter().map(|s| (s.col_start, s.col_end)).collect();
        assert_eq!(spans, vec![(0, 43), (44, 63)]);
    }

    #[test]
    fn fronto_parallel_row_is_one_segment() {
        let c = cam(64, 64);
        let depths = vec![2.0f32; 64];
        let (segs, stats) = scanline_segmentation(10, row_of(&depths), &c, &params());
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].col_start, segs[0].col_end), (0, 63));
        assert_eq!(segs[0].occ.support_count, 64);
        assert_eq!(stats.valid_pixels, 64);
    }

    #[test]
    fn step_in_depth_splits_row() {
        let c = cam(640, 4);
        let depths: Vec<f32> = (0..640).map(|u| if u < 320 { 1.0 } else { 3.0 }).collect();
        let (segs, _) = scanline_segmentation(0, row_of(&depths), &c, &params());
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].col_end, 319);
        assert_eq!(segs[1].col_start, 320);
    }

    #[test]
    fn slanted_wall_row_stays_whole() {
        // Plane z = 2 + 0.5 x seen along one row.
        let c = cam(64, 64);
        let depths: Vec<f32> = (0..64)
            .map(|u| {
                let ru = (u as f64 - c.cx) / c.fx;
                (2.0 / (1.0 - 0.5 * ru)) as f32
            })
            .collect();
        let (segs, _) = scanline_segmentation(5, row_of(&depths), &c, &params());
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn invalid_pixels_end_runs_and_short_runs_are_dropped() {
        let c = cam(16, 1);
        let mut depths = vec![0.0f32; 16];
        depths[0..3].fill(2.0);
        depths[5..12].fill(2.0);
        let (segs, stats) = scanline_segmentation(0, row_of(&depths), &c, &params());
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].col_start, segs[0].col_end), (5, 11));
        assert_eq!(stats.discarded_pixels, 3);
        assert_eq!(stats.valid_pixels, 10);

        let (segs, stats) = scanline_segmentation(0, row_of(&[0.0; 16]), &c, &params());
        assert!(segs.is_empty());
        assert_eq!(stats.valid_pixels, 0);
    }

    #[test]
    fn segment_moments_are_batch_moments() {
        let c = cam(64, 64);
        let depths: Vec<f32> = (0..64).map(|u| 2.0 + 0.004 * u as f32).collect();
        let (segs, _) = scanline_segmentation(20, row_of(&depths), &c, &params());
        assert_eq!(segs.len(), 1);
        let pts: Vec<Vec3> = (0..64)
            .map(|u| c.unproject(u as f64, 20.0, depths[u] as f64))
            .collect();
        let mean = pts.iter().sum::<Vec3>() / 64.0;
        let d = segs[0].occ.to_distribution().unwrap();
        assert!((d.mu - mean).norm() < 1e-9);
        let cxx = pts.iter().map(|p| (p.x - mean.x).powi(2)).sum::<f64>() / 64.0;
        assert!((d.sigma.0[0] - cxx).abs() < 1e-9);
    }

    #[test]
    fn two_rows_of_a_wall_fuse() {
        let c = cam(64, 64);
        let p = params();
        let row = vec![2.0f32; 64];
        let (s0, _) = scanline_segmentation(30, row_of(&row), &c, &p);
        let (s1, _) = scanline_segmentation(31, row_of(&row), &c, &p);
        let (open, done) = segment_fusion(Vec::new(), &s0, &c, &p).unwrap();
        assert!(done.is_empty());
        let (open, done) = segment_fusion(open, &s1, &c, &p).unwrap();
        assert!(done.is_empty());
        assert_eq!(open.len(), 1);
        let (_, done) = segment_fusion(open, &[], &c, &p).unwrap();
        assert_eq!(done.len(), 1);

        let pts: Vec<Vec3> = (30..32)
            .flat_map(|v| (0..64).map(move |u| (u, v)))
            .map(|(u, v)| c.unproject(u as f64, v as f64, 2.0))
            .collect();
        let n = pts.len() as f64;
        let mean = pts.iter().sum::<Vec3>() / n;
        let cov_yy = pts.iter().map(|q| (q.y - mean.y).powi(2)).sum::<f64>() / n;
        let d = done[0].occ.to_distribution().unwrap();
        assert!((d.mu - mean).norm() < 1e-9);
        assert!((d.sigma.0[3] - cov_yy).abs() < 1e-9);
    }

    #[test]
    fn disjoint_spans_do_not_fuse() {
        let c = cam(64, 64);
        let p = params();
        let mut a = vec![0.0f32; 64];
        a[0..20].fill(2.0);
        let mut b = vec![0.0f32; 64];
        b[40..60].fill(2.0);
        let (s0, _) = scanline_segmentation(10, row_of(&a), &c, &p);
        let (s1, _) = scanline_segmentation(11, row_of(&b), &c, &p);
        let (open, _) = segment_fusion(Vec::new(), &s0, &c, &p).unwrap();
        let (open, done) = segment_fusion(open, &s1, &c, &p).unwrap();
        assert_eq!(open.len(), 1);
        assert_eq!(done.len(), 1);
    }

    /// Camera looking along +z at a corner: floor plane y = 0.5 below a
    /// wall z = 2. Rows near the horizon see the wall, lower rows the floor.
    fn corner_image(c: &CameraIntrinsics) -> DepthImage {
        let mut img = DepthImage::filled(c.width, c.height, 0.0);
        for v in 0..c.height {
            let rv = (v as f64 - c.cy) / c.fy;
            let floor_t = if rv > 0.0 { 0.5 / rv } else { f64::INFINITY };
            let z = floor_t.min(2.0);
            for u in 0..c.width {
                img.set(u, v, z as f32);
            }
        }
        img
    }

    #[test]
    fn perpendicular_surfaces_stay_separate() {
        let c = cam(64, 64);
        let out = spgf_star(&corner_image(&c), &c, &params()).unwrap();
        assert_eq!(out.occupied.len(), 2);
        for g in &out.occupied {
            let d = g.to_distribution().unwrap();
            let (vals, _) = d.sigma.eigen();
            assert!(vals.x < 1e-3, "surface not planar: {vals:?}");
        }
    }

    #[test]
    fn wall_image_is_one_triple() {
        let c = cam(64, 64);
        let img = DepthImage::filled(64, 64, 2.0);
        let out = spgf_star(&img, &c, &params()).unwrap();
        assert_eq!(out.occupied.len(), 1);
        assert_eq!(out.bases.len(), 1);
        assert_eq!(out.occupied[0].support_count, 64 * 64);
    }

    #[test]
    fn speck_is_pruned_with_its_free_space() {
        let c = cam(64, 64);
        let mut img = DepthImage::filled(64, 64, 0.0);
        for v in 0..2 {
            for u in 10..15 {
                img.set(u, v, 1.0);
            }
        }
        let p = GmmapParams {
            prune_min_support: 20,
            ..GmmapParams::default()
        };
        let out = spgf_star(&img, &c, &p).unwrap();
        assert!(out.occupied.is_empty() && out.bases.is_empty());
        assert_eq!(out.stats.pruned_pixels, 10);
    }

    #[test]
    fn empty_image_gives_nothing() {
        let c = cam(32, 32);
        let out = spgf_star(&DepthImage::filled(32, 32, 0.0), &c, &params()).unwrap();
        assert!(out.occupied.is_empty() && out.bases.is_empty());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = cam(32, 32);
        assert!(matches!(
            spgf_star(&DepthImage::filled(16, 32, 1.0), &c, &params()),
            Err(GmmapError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn every_valid_pixel_is_accounted_for() {
        let c = cam(64, 64);
        let img = corner_image(&c);
        let p = GmmapParams {
            prune_min_support: 100,
            ..GmmapParams::default()
        };
        let out = spgf_star(&img, &c, &p).unwrap();
        let s = out.stats;
        assert_eq!(
            s.emitted_pixels + s.pruned_pixels + s.discarded_pixels,
            s.valid_pixels
        );
        assert_eq!(s.valid_pixels, 64 * 64);
    }

    #[test]
    fn parallel_rows_match_sequential() {
        let c = cam(64, 64);
        let img = corner_image(&c);
        let a = spgf_star(&img, &c, &params()).unwrap();
        let b = spgf_star_parallel(&img, &c, &params()).unwrap();
        assert_eq!(a.occupied, b.occupied);
        assert_eq!(a.bases, b.bases);
    }

    #[test]
    fn constant_depth_wall_bases_obey_scaling_law() {
        let c = cam(64, 64);
        let img = DepthImage::filled(64, 64, 2.5);
        let out = spgf_star(&img, &c, &params()).unwrap();
        let b = &out.bases[0];
        let d: f64 = 2.5;
        let rel = |a: f64, e: f64| (a - e).abs() / e.abs().max(1e-12);
        assert!(rel(b.beta.xi * d, b.phi.xi) < 1e-5);
        for k in 0..3 {
            let e = b.phi.m1[k];
            if e.abs() > 1e-9 {
                assert!(rel(b.beta.m1[k] * d * d, e) < 1e-5);
            }
        }
        for k in 0..6 {
            let e = b.phi.m2.0[k];
            if e.abs() > 1e-9 {
                assert!(rel(b.beta.m2.0[k] * d.powi(3), e) < 1e-5);
            }
        }
    }
}
