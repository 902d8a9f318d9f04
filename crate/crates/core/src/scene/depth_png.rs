use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Raw-to-meter divisor of TUM depth images.
pub const DEFAULT_DEPTH_SCALE: f64 = 5000.0;

fn image_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::DepthImage { path: path.to_path_buf(), reason: reason.into() }
}

/// Raw 16-bit values of a single-channel PNG: (width, height, row-major data).
pub fn read_depth_png_raw(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(image_err(path, format!("expected single-channel grayscale, got {:?}", info.color_type)));
    }
    if info.bit_depth != png::BitDepth::Sixteen {
        return Err(image_err(path, format!("expected 16-bit depth, got {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| image_err(path, e.to_string()))?;
    let bytes = &buf[..frame.buffer_size()];
    // PNG stores 16-bit samples big-endian
    let raw = bytes.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok((w, h, raw))
}

/// Depth map in meters: raw value / `scale_factor`, with 0 kept as invalid.
pub fn load_depth_png(path: &Path, scale_factor: f64) -> Result<(usize, usize, Vec<f64>)> {
    if !(scale_factor > 0.0) {
        return Err(Error::InvalidArgument(format!("depth scale must be positive, got {scale_factor}")));
    }
    let (w, h, raw) = read_depth_png_raw(path)?;
    Ok((w, h, raw.into_iter().map(|v| v as f64 / scale_factor).collect()))
}

pub fn write_depth_png(path: &Path, width: usize, height: usize, raw: &[u16]) -> Result<()> {
    if raw.len() != width * height {
        return Err(Error::ShapeMismatch { expected: width * height, actual: raw.len() });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header().map_err(|e| image_err(path, e.to_string()))?;
    let bytes: Vec<u8> = raw.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| image_err(path, e.to_string()))?;
    writer.finish().map_err(|e| image_err(path, e.to_string()))
}

/// Quantizes meters to raw values (rounding, saturating at u16::MAX).
pub fn write_depth_png_meters(path: &Path, width: usize, height: usize, depth: &[f64], scale_factor: f64) -> Result<()> {
    let raw: Vec<u16> = depth
        .iter()
        .map(|&d| (d * scale_factor).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    write_depth_png(path, width, height, &raw)
}
