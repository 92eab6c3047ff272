//! Images, binary masks, annotated points and circular-neighborhood features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiset::FeatureVector;

/// Row-major image with 1 (gray) or 3 (HSV) interleaved channels, samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("image dimensions must be non-zero".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel; `f` returns one value per channel.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Vec<f64>,
    {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                if px.len() != channels {
                    return Err(Error::InvalidImage(format!(
                        "pixel ({x}, {y}) has {} channels, expected {channels}",
                        px.len()
                    )));
                }
                data.extend(px);
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Converts interleaved 8-bit RGB to HSV in `[0, 1]³`.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::InvalidImage("RGB buffer size mismatch".into()));
        }
        let mut data = Vec::with_capacity(rgb.len());
        for px in rgb.chunks_exact(3) {
            let [h, s, v] = rgb_to_hsv(
                f64::from(px[0]) / 255.0,
                f64::from(px[1]) / 255.0,
                f64::from(px[2]) / 255.0,
            );
            data.extend([h, s, v]);
        }
        Self::new(width, height, 3, data)
    }

    pub fn from_gray8(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        let data = gray.iter().map(|&g| f64::from(g) / 255.0).collect();
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Keeps pixels whose coordinates are both divisible by `factor`.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let (w, h) = subsampled_dims(self.width, self.height, factor)?;
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in (0..self.height).step_by(factor) {
            for x in (0..self.width).step_by(factor) {
                data.extend_from_slice(self.pixel(x, y));
            }
        }
        Self::new(w, h, self.channels, data)
    }
}

/// HSV with hue scaled to `[0, 1)`; hue is 0 for achromatic colors.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [h.clamp(0.0, 1.0), s.clamp(0.0, 1.0), v.clamp(0.0, 1.0)]
}

fn subsampled_dims(width: usize, height: usize, factor: usize) -> Result<(usize, usize)> {
    if factor == 0 {
        return Err(Error::Config("subsample factor must be at least 1".into()));
    }
    Ok((width.div_ceil(factor), height.div_ceil(factor)))
}

/// Per-pixel boolean mask; `true` marks the object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    pub fn check_matches(&self, img: &Image) -> Result<()> {
        if self.same_dims(img.width(), img.height()) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, image is {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            )))
        }
    }

    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let (w, h) = subsampled_dims(self.width, self.height, factor)?;
        let mut bits = Vec::with_capacity(w * h);
        for y in (0..self.height).step_by(factor) {
            for x in (0..self.width).step_by(factor) {
                bits.push(self.get(x, y));
            }
        }
        Ok(Self {
            width: w,
            height: h,
            bits,
        })
    }
}

/// Nearest-neighbor decimation: keeps pixels at coordinates divisible by `factor`.
pub fn subsample(img: &Image, factor: usize) -> Result<Image> {
    img.subsample(factor)
}

pub fn subsample_mask(mask: &BinaryMask, factor: usize) -> Result<BinaryMask> {
    mask.subsample(factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRole {
    Prototype,
    CounterPrototype,
}

impl std::str::FromStr for PointRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "prototype" | "proto" | "p" | "+" => Ok(PointRole::Prototype),
            "counter_prototype" | "counterprototype" | "counter" | "c" | "-" => {
                Ok(PointRole::CounterPrototype)
            }
            other => Err(Error::parse("point role", format!("unknown role {other:?}"))),
        }
    }
}

/// A pixel tagged as a prototype or counter-prototype of a class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotatedPoint {
    pub x: usize,
    pub y: usize,
    pub role: PointRole,
    #[serde(rename = "class", alias = "class_label", default = "default_class")]
    pub class_label: String,
}

fn default_class() -> String {
    "object".to_string()
}

impl AnnotatedPoint {
    pub fn prototype(x: usize, y: usize, class_label: impl Into<String>) -> Self {
        Self {
            x,
            y,
            role: PointRole::Prototype,
            class_label: class_label.into(),
        }
    }

    pub fn counter(x: usize, y: usize, class_label: impl Into<String>) -> Self {
        Self {
            x,
            y,
            role: PointRole::CounterPrototype,
            class_label: class_label.into(),
        }
    }

    pub fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.x < width && self.y < height {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x: self.x as i64,
                y: self.y as i64,
                width,
                height,
            })
        }
    }

    /// Coordinates divided by `factor`, rounded down.
    pub fn scaled_down(&self, factor: usize) -> Self {
        Self {
            x: self.x / factor.max(1),
            y: self.y / factor.max(1),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// Out-of-image neighbors read the nearest edge pixel.
    #[default]
    ClampToEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub radius: u32,
    #[serde(default = "default_sort")]
    pub sort_within_channel: bool,
    #[serde(default)]
    pub border_policy: BorderPolicy,
}

fn default_sort() -> bool {
    true
}

impl FeatureConfig {
    pub fn new(radius: u32, sort_within_channel: bool) -> Self {
        Self {
            radius,
            sort_within_channel,
            border_policy: BorderPolicy::ClampToEdge,
        }
    }

    pub fn mask_size(&self) -> usize {
        circular_offsets(self.radius).len()
    }

    pub fn feature_len(&self, channels: usize) -> usize {
        self.mask_size() * channels
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::new(3, true)
    }
}

/// Lattice offsets with `dx² + dy² ≤ r²`, `dy` outer and `dx` inner, both ascending.
pub fn circular_offsets(r: u32) -> Vec<(i64, i64)> {
    let r = i64::from(r);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Reusable extractor: the offset list is computed once per configuration.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    offsets: Vec<(i64, i64)>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Self {
        Self {
            offsets: circular_offsets(cfg.radius),
            cfg,
        }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn feature_len(&self, channels: usize) -> usize {
        self.offsets.len() * channels
    }

    pub fn extract(&self, img: &Image, x: i64, y: i64) -> Result<FeatureVector> {
        if !img.contains(x, y) {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(FeatureVector::new(self.extract_unchecked(img, x as usize, y as usize))
            .expect("image samples are finite"))
    }

    pub(crate) fn extract_unchecked(&self, img: &Image, x: usize, y: usize) -> Vec<f64> {
        let n = self.offsets.len();
        let channels = img.channels();
        let max_x = img.width() as i64 - 1;
        let max_y = img.height() as i64 - 1;
        let mut out = vec![0.0; n * channels];
        for (k, &(dx, dy)) in self.offsets.iter().enumerate() {
            let sx = (x as i64 + dx).clamp(0, max_x) as usize;
            let sy = (y as i64 + dy).clamp(0, max_y) as usize;
            for (c, &v) in img.pixel(sx, sy).iter().enumerate() {
                out[c * n + k] = v;
            }
        }
        if self.cfg.sort_within_channel {
            for block in out.chunks_mut(n) {
                block.sort_by(f64::total_cmp);
            }
        }
        out
    }
}

/// Channel-blocked neighborhood values around `(x, y)`.
pub fn extract_features(img: &Image, x: i64, y: i64, cfg: &FeatureConfig) -> Result<FeatureVector> {
    FeatureExtractor::new(*cfg).extract(img, x, y)
}
