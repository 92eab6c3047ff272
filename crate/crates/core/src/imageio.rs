//! File formats: PNG and binary PGM/PPM images, masks, point lists, raw outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::features::{AnnotatedPoint, BinaryMask, Image};

fn read_dynamic(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    decode_dynamic(&bytes, &path.display().to_string())
}

fn decode_dynamic(bytes: &[u8], context: &str) -> Result<DynamicImage> {
    let format = image::guess_format(bytes).map_err(|e| Error::parse(context, e))?;
    match format {
        ImageFormat::Png | ImageFormat::Pnm => {}
        other => return Err(Error::parse(context, format!("unsupported format {other:?}"))),
    }
    image::load_from_memory_with_format(bytes, format).map_err(|e| Error::parse(context, e))
}

fn to_image(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        Image::from_rgb8(w, h, img.to_rgb8().as_raw())
    } else {
        Image::from_gray8(w, h, img.to_luma8().as_raw())
    }
}

/// Loads a gray image as one channel and a color image as HSV.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    to_image(read_dynamic(path.as_ref())?)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    to_image(decode_dynamic(bytes, "image upload")?)
}

fn to_mask(img: DynamicImage) -> Result<BinaryMask> {
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    BinaryMask::new(w, h, gray.as_raw().iter().map(|&v| v >= 128).collect())
}

/// Single-channel mask; samples `>= 128` are object.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    to_mask(read_dynamic(path.as_ref())?)
}

pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    to_mask(decode_dynamic(bytes, "mask upload")?)
}

/// Binary `P5` with maxval 255.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Mask bytes with object = 255 and background = 0.
pub fn mask_bytes(mask: &BinaryMask) -> Vec<u8> {
    mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect()
}

pub fn encode_mask_pgm(mask: &BinaryMask) -> Vec<u8> {
    encode_pgm(mask.width(), mask.height(), &mask_bytes(mask))
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    encode_gray_png(mask.width(), mask.height(), mask_bytes(mask))
}

pub fn encode_gray_png(width: usize, height: usize, pixels: Vec<u8>) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| Error::InvalidImage("gray buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidImage(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_mask_pgm(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    fs::write(path, encode_mask_pgm(mask))?;
    Ok(())
}

pub fn encode_rgb_png(width: usize, height: usize, rgb: Vec<u8>) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .ok_or_else(|| Error::InvalidImage("RGB buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidImage(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_rgb_png(path: impl AsRef<Path>, width: usize, height: usize, rgb: Vec<u8>) -> Result<()> {
    fs::write(path, encode_rgb_png(width, height, rgb)?)?;
    Ok(())
}

pub fn write_mask_png(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

/// Raw outputs as little-endian `f32`, row-major, no header.
pub fn write_raw_f32(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for &v in values {
        f.write_all(&(v as f32).to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_raw_f32(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse("raw f32 file", "length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// 8-bit preview of real outputs; values are clamped to `[0, 1]`.
pub fn preview_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let px: Vec<u8> = values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_pgm(width, height, &px)
}

/// Parses `x,y,role,class` lines. A header line and `#` comments are skipped.
pub fn parse_points_csv(text: &str) -> Result<Vec<AnnotatedPoint>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("x")) {
            continue;
        }
        let ctx = format!("points line {}", lineno + 1);
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::parse(ctx, "expected x,y,role[,class]"));
        }
        let x = fields[0].parse().map_err(|e| Error::parse(ctx.clone(), e))?;
        let y = fields[1].parse().map_err(|e| Error::parse(ctx.clone(), e))?;
        let role = fields[2].parse()?;
        let class_label = fields.get(3).map_or("object", |c| c).to_string();
        points.push(AnnotatedPoint {
            x,
            y,
            role,
            class_label,
        });
    }
    Ok(points)
}

pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<AnnotatedPoint>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    parse_points_csv(&fs::read_to_string(path)?)
}

pub fn points_to_csv(points: &[AnnotatedPoint]) -> String {
    let mut out = String::from("x,y,role,class\n");
    for p in points {
        let role = match p.role {
            crate::features::PointRole::Prototype => "prototype",
            crate::features::PointRole::CounterPrototype => "counter_prototype",
        };
        out.push_str(&format!("{},{},{},{}\n", p.x, p.y, role, p.class_label));
    }
    out
}
