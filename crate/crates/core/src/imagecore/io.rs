use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::{Image, Plane};
use crate::{Error, Result};

/// Raw 8-bit grayscale PNG contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayPng {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    bytes: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let decode_err = |e: png::DecodingError| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = decoder.read_info().map_err(decode_err)?;
    if reader.info().bit_depth == BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "16-bit PNG; only 8-bit images are supported".into(),
        });
    }
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        message: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("bit depth {:?}", info.bit_depth),
        });
    }
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "empty PNG",
        });
    }
    let channels = info.color_type.samples();
    let row_bytes = width * channels;
    let mut bytes = Vec::with_capacity(row_bytes * height);
    for row in buf.chunks(info.line_size).take(height) {
        bytes.extend_from_slice(&row[..row_bytes]);
    }
    Ok(Decoded {
        width,
        height,
        color: info.color_type,
        bytes,
    })
}

/// Loads an 8-bit RGB or RGBA PNG (alpha is dropped) as a unit-range image.
/// Grayscale files are replicated into all three channels.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let d = decode(path)?;
    let to_unit = |b: u8| b as f64 / 255.0;
    let data: Vec<f64> = match d.color {
        ColorType::Rgb => d.bytes.iter().map(|&b| to_unit(b)).collect(),
        ColorType::Rgba => d
            .bytes
            .chunks_exact(4)
            .flat_map(|p| [to_unit(p[0]), to_unit(p[1]), to_unit(p[2])])
            .collect(),
        ColorType::Grayscale => d.bytes.iter().flat_map(|&b| [to_unit(b); 3]).collect(),
        ColorType::GrayscaleAlpha => d.bytes.chunks_exact(2).flat_map(|p| [to_unit(p[0]); 3]).collect(),
        ColorType::Indexed => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: "unexpanded palette image".into(),
            })
        }
    };
    Image::new(d.width, d.height, data)
}

/// Loads an 8-bit single-channel grayscale PNG without conversion.
pub fn load_gray_png(path: impl AsRef<Path>) -> Result<GrayPng> {
    let path = path.as_ref();
    let d = decode(path)?;
    if d.color != ColorType::Grayscale {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("expected 8-bit grayscale, found {:?}", d.color),
        });
    }
    Ok(GrayPng {
        width: d.width,
        height: d.height,
        pixels: d.bytes,
    })
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(path: &Path, width: usize, height: usize, color: ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(BitDepth::Eight);
    let encode_err = |e: png::EncodingError| Error::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Writes an 8-bit RGB PNG, rounding each sample to the nearest level.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    encode(path.as_ref(), img.width(), img.height(), ColorType::Rgb, &bytes)
}

/// Writes a single-channel plane (e.g. a mask or edge map) as 8-bit grayscale.
pub fn save_gray_png(p: &Plane, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = p.data().iter().map(|&v| quantize(v)).collect();
    encode(path.as_ref(), p.width(), p.height(), ColorType::Grayscale, &bytes)
}
