//! Flat `key = value` configuration files with `#` comments.
//!
//! Camera keys: `fx fy cx cy width height depth_scale min_range max_range`.
//! Map keys: every field of [`GmmapParams`]. `scale_to_image = true`
//! rescales `pi0` and `prune_min_support` to the image size.

use std::path::Path;

use crate::error::{GmmapError, Result};
use crate::types::{CameraIntrinsics, GmmapParams};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub camera: CameraIntrinsics,
    pub params: GmmapParams,
    pub scale_to_image: bool,
}

impl Config {
    /// Map parameters after optional rescaling to the camera resolution.
    pub fn effective_params(&self) -> GmmapParams {
        if self.scale_to_image {
            self.params.scaled_for_pixels(self.camera.pixels())
        } else {
            self.params.clone()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(GmmapError::Config {
                    line,
                    reason: format!("expected key = value, got {content:?}"),
                });
            };
            cfg.set(key.trim(), value.trim(), line)?;
        }
        cfg.camera.validate()?;
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GmmapError::Dataset {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |what: &str| GmmapError::Config {
            line,
            reason: format!("{key}: expected {what}, got {value:?}"),
        };
        let float = || value.parse::<f64>().map_err(|_| bad("a number"));
        let int = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let cam = &mut self.camera;
        let p = &mut self.params;
        match key {
            "fx" => cam.fx = float()?,
            "fy" => cam.fy = float()?,
            "cx" => cam.cx = float()?,
            "cy" => cam.cy = float()?,
            "width" => cam.width = int()?,
            "height" => cam.height = int()?,
            "depth_scale" => cam.depth_scale = float()?,
            "min_range" => cam.min_range = float()?,
            "max_range" => cam.max_range = float()?,
            "alpha_m" => p.alpha_m = float()?,
            "alpha_d" => p.alpha_d = float()?,
            "d0" => p.d0 = float()?,
            "alpha_h_free" => p.alpha_h_free = float()?,
            "alpha_h_occ" => p.alpha_h_occ = float()?,
            "pi0" => p.pi0 = float()?,
            "prune_min_support" => {
                p.prune_min_support = u32::try_from(int()?).map_err(|_| bad("a 32-bit integer"))?
            }
            "noise_floor" => p.noise_floor = float()?,
            "k_slope" => p.k_slope = float()?,
            "k_line" => p.k_line = float()?,
            "min_segment_pixels" => p.min_segment_pixels = int()?,
            "normal_dot_min" => p.normal_dot_min = float()?,
            "plane_dist_factor" => p.plane_dist_factor = float()?,
            "min_variance" => p.min_variance = float()?,
            "occ_threshold" => p.occ_threshold = float()?,
            "free_threshold" => p.free_threshold = float()?,
            "scale_to_image" => {
                self.scale_to_image = value.parse::<bool>().map_err(|_| bad("true or false"))?
            }
            _ => {
                return Err(GmmapError::UnknownConfigKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }

    /// Renders the configuration in the file syntax.
    pub fn to_text(&self) -> String {
        let c = &self.camera;
        let p = &self.params;
        format!(
            "# camera\nfx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\n\
             depth_scale = {}\nmin_range = {}\nmax_range = {}\n\n# map\n\
             alpha_m = {}\nalpha_d = {}\nd0 = {}\nalpha_h_free = {}\nalpha_h_occ = {}\n\
             pi0 = {}\nprune_min_support = {}\nnoise_floor = {}\nk_slope = {}\nk_line = {}\n\
             min_segment_pixels = {}\nnormal_dot_min = {}\nplane_dist_factor = {}\n\
             min_variance = {}\nocc_threshold = {}\nfree_threshold = {}\nscale_to_image = {}\n",
            c.fx, c.fy, c.cx, c.cy, c.width, c.height, c.depth_scale, c.min_range, c.max_range,
            p.alpha_m, p.alpha_d, p.d0, p.alpha_h_free, p.alpha_h_occ, p.pi0,
            p.prune_min_support, p.noise_floor, p.k_slope, p.k_line, p.min_segment_pixels,
            p.normal_dot_min, p.plane_dist_factor, p.min_variance, p.occ_threshold,
            p.free_threshold, self.scale_to_image
        )
    }
}
