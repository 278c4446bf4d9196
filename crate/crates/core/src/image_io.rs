//! 8-bit image and mask files: binary PPM/PGM and PNG.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::region::{HoleRegion, Space};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("degenerate image {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::shape("RgbImage::new", 3 * width * height, data.len()));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// `[1, 3, H, W]` with samples scaled to `[0, 1]`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let scale = T::from_f64_lossy(1.0 / 255.0);
        Tensor::from_fn([1, 3, self.height, self.width], |[_, c, y, x]| {
            T::from_f64_lossy(self.data[3 * (y * self.width + x) + c] as f64) * scale
        })
    }

    /// Inverse of [`to_tensor`](Self::to_tensor): clamps to `[0, 1]` and rounds.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let [n, c, h, w] = t.dims();
        if n != 1 || c != 3 {
            return Err(Error::shape("RgbImage::from_tensor", "[1, 3, H, W]", format!("{:?}", t.dims())));
        }
        let mut data = vec![0u8; 3 * h * w];
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let v = t.get(0, ch, y, x).to_f64_lossy();
                    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                    data[3 * (y * w + x) + ch] = (v * 255.0).round() as u8;
                }
            }
        }
        RgbImage::new(w, h, data)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

fn is_png(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn decode_any(path: &Path) -> Result<Decoded> {
    let bytes = read_file(path)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_pnm(&bytes)
    }
}

/// Parses a binary PPM (P6) or PGM (P5) with maxval ≤ 255.
fn decode_pnm(bytes: &[u8]) -> Result<Decoded> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::Image("not a binary PPM/PGM or PNG file".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Image("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Image(format!("malformed header field at byte {start}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Image("malformed header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Image(format!("invalid maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedDepth(16));
    }
    if width == 0 || height == 0 {
        return Err(Error::Image(format!("degenerate image {width}x{height}")));
    }
    let len = channels * width * height;
    let data = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::Image(format!("expected {len} sample bytes, found {}", bytes.len() - pos)))?
        .to_vec();
    Ok(Decoded {
        width,
        height,
        channels,
        data,
    })
}

fn decode_png(bytes: &[u8]) -> Result<Decoded> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
    if reader.info().bit_depth == png::BitDepth::Sixteen {
        return Err(Error::UnsupportedDepth(16));
    }
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Image("unexpanded palette".into())),
    };
    let (width, height) = (frame.width as usize, frame.height as usize);
    let mut data = Vec::with_capacity(channels * width * height);
    for row in buf[..frame.buffer_size()].chunks(frame.line_size) {
        data.extend_from_slice(&row[..channels * width]);
    }
    Ok(Decoded {
        width,
        height,
        channels,
        data,
    })
}

/// Reads an RGB image. Grayscale inputs are replicated and alpha is dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let d = decode_any(path.as_ref())?;
    let data = match d.channels {
        3 => d.data,
        c => d
            .data
            .chunks(c)
            .flat_map(|px| if c < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] })
            .collect(),
    };
    RgbImage::new(d.width, d.height, data)
}

/// Writes PNG when the extension is `.png`, binary PPM otherwise.
pub fn write_image(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_png(path, image.width, image.height, png::ColorType::Rgb, &image.data)
    } else {
        write_pnm(path, b"P6", image.width, image.height, &image.data)
    }
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let d = decode_any(path.as_ref())?;
    let data = match d.channels {
        1 => d.data,
        2 => d.data.chunks(2).map(|p| p[0]).collect(),
        c => return Err(Error::Image(format!("mask must be single-channel, found {c} channels"))),
    };
    Ok(GrayImage {
        width: d.width,
        height: d.height,
        data,
    })
}

/// Writes PNG when the extension is `.png`, binary PGM otherwise.
pub fn write_gray(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    if image.data.len() != image.width * image.height {
        return Err(Error::shape("write_gray", image.width * image.height, image.data.len()));
    }
    if is_png(path) {
        write_png(path, image.width, image.height, png::ColorType::Grayscale, &image.data)
    } else {
        write_pnm(path, b"P5", image.width, image.height, &image.data)
    }
}

/// Reads a hole mask (nonzero = hole) that must match `expected` (height, width).
pub fn read_mask(path: impl AsRef<Path>, expected: (usize, usize)) -> Result<HoleRegion> {
    let g = read_gray(path)?;
    if (g.height, g.width) != expected {
        return Err(Error::shape("read_mask", format!("{:?}", expected), format!("{:?}", (g.height, g.width))));
    }
    let mask: Vec<bool> = g.data.iter().map(|&v| v != 0).collect();
    HoleRegion::from_mask(&mask, expected, Space::Pixel)
}

/// Encodes a region as a 0/255 grayscale mask.
pub fn mask_image(region: &HoleRegion) -> GrayImage {
    let (height, width) = region.grid();
    GrayImage {
        width,
        height,
        data: region.to_grid_mask().into_iter().map(|b| if b { 255 } else { 0 }).collect(),
    }
}

fn write_pnm(path: &Path, magic: &[u8], width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(magic)?;
    write!(out, "\n{width} {height}\n255\n")?;
    out.write_all(data)?;
    out.flush()?;
    Ok(())
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
    writer.write_image_data(data).map_err(|e| Error::Image(e.to_string()))?;
    writer.finish().map_err(|e| Error::Image(e.to_string()))?;
    Ok(())
}
