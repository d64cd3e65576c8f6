//! Reading and writing sequences, maps and visualizations.

pub mod config;
pub mod mapfile;
pub mod ply;
pub mod synthetic;
pub mod tum;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::depth::DepthImage;
use crate::error::{GmmapError, Result};

/// Decodes a 16-bit grayscale PNG, converting raw units to metres with
/// `scale` metres per unit.
pub fn read_depth_png(path: &Path, scale: f64) -> Result<DepthImage> {
    let file = File::open(path)?;
    let mut reader = png::Decoder::new(BufReader::new(file)).read_info()?;
    let info = reader.info();
    let (w, h) = (info.width as usize, info.height as usize);
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(GmmapError::Dataset {
            path: path.to_path_buf(),
            reason: format!(
                "expected 16-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        });
    }
    let mut buf = vec![0u8; w * h * 2];
    reader.next_frame(&mut buf)?;
    let raw: Vec<u16> = buf
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok(DepthImage::from_raw(w, h, &raw, scale))
}

/// Encodes depths as a 16-bit grayscale PNG with `scale` metres per unit.
/// Depths that do not fit in 16 bits are written as invalid (zero).
pub fn write_depth_png(path: &Path, image: &DepthImage, scale: f64) -> Result<()> {
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        image.width() as u32,
        image.height() as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header()?;
    let mut bytes = Vec::with_capacity(image.data().len() * 2);
    for &d in image.data() {
        let raw = (d as f64 / scale).round();
        let raw = if d.is_finite() && d > 0.0 && raw <= u16::MAX as f64 {
            raw as u16
        } else {
            0
        };
        bytes.extend_from_slice(&raw.to_be_bytes());
    }
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_at_sensor_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut img = DepthImage::filled(5, 3, 1.2345);
        img.set(0, 0, 0.0);
        img.set(4, 2, 20.0);
        write_depth_png(&path, &img, 1.0 / 5000.0).unwrap();
        let back = read_depth_png(&path, 1.0 / 5000.0).unwrap();
        assert_eq!((back.width(), back.height()), (5, 3));
        assert_eq!(back.get(0, 0), 0.0);
        assert_eq!(back.get(4, 2), 0.0);
        assert!((back.get(1, 1) - 1.2345).abs() < 1e-4);
    }
}
