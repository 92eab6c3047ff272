//! Synthetic color scenes with known gold masks.
//!
//! Scenes are painted in 8-bit RGB (so they survive a PNG round trip
//! unchanged) with Gaussian noise added per channel, then converted to HSV.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::features::{AnnotatedPoint, BinaryMask, Image};

pub type Rgb = [f64; 3];

pub const BACKGROUND: Rgb = [0.45, 0.40, 0.35];
pub const GREEN: Rgb = [0.20, 0.60, 0.25];
pub const RED: Rgb = [0.75, 0.25, 0.20];
pub const BLUE: Rgb = [0.20, 0.30, 0.70];
pub const DARK_BROWN: Rgb = [0.30, 0.22, 0.18];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub color: Rgb,
    /// Index into the scene's class list; `None` paints a distractor.
    pub class: Option<usize>,
}

impl Disk {
    fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 - self.cx;
        let dy = y as f64 - self.cy;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background: Rgb,
    pub disks: Vec<Disk>,
    pub classes: Vec<String>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// A rendered scene: image, per-class gold masks and suggested annotation points.
#[derive(Debug, Clone)]
pub struct Scene {
    pub rgb: Vec<u8>,
    pub image: Image,
    pub class_masks: Vec<(String, BinaryMask)>,
    pub points: Vec<AnnotatedPoint>,
}

impl Scene {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn mask(&self, class: &str) -> &BinaryMask {
        &self
            .class_masks
            .iter()
            .find(|(c, _)| c == class)
            .unwrap_or_else(|| panic!("no class {class}"))
            .1
    }

    /// Union of every class mask.
    pub fn gold(&self) -> BinaryMask {
        let masks: Vec<BinaryMask> = self.class_masks.iter().map(|(_, m)| m.clone()).collect();
        crate::network::or_combine(&masks).expect("class masks share dimensions")
    }

    pub fn points_for(&self, class: &str) -> Vec<AnnotatedPoint> {
        self.points
            .iter()
            .filter(|p| p.class_label == class)
            .cloned()
            .collect()
    }
}

impl SceneSpec {
    pub fn render(&self) -> Result<Scene> {
        let (w, h) = (self.width, self.height);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("sigma is non-negative");
        let mut rgb = Vec::with_capacity(w * h * 3);
        let mut class_bits = vec![vec![false; w * h]; self.classes.len()];
        for y in 0..h {
            for x in 0..w {
                // Later disks paint over earlier ones.
                let disk = self.disks.iter().rev().find(|d| d.contains(x, y));
                let color = disk.map_or(self.background, |d| d.color);
                if let Some(c) = disk.and_then(|d| d.class) {
                    class_bits[c][y * w + x] = true;
                }
                for ch in color {
                    let v = (ch + noise.sample(&mut rng)).clamp(0.0, 1.0);
                    rgb.push((v * 255.0).round() as u8);
                }
            }
        }
        let image = Image::from_rgb8(w, h, &rgb)?;
        let class_masks = self
            .classes
            .iter()
            .cloned()
            .zip(class_bits.into_iter().map(|b| BinaryMask::new(w, h, b).expect("sized")))
            .collect();
        Ok(Scene {
            rgb,
            image,
            class_masks,
            points: Vec::new(),
        })
    }
}

fn scaled(size: usize, frac: f64) -> f64 {
    (size as f64 * frac).round()
}

/// Object blobs (green) and distractor blobs (dark brown) on a brown-gray background.
///
/// Points: one prototype inside the first object blob and one counter-prototype
/// on the background, class `"object"`.
pub fn two_blob_scene(size: usize, noise_sigma: f64, seed: u64) -> Result<Scene> {
    let s = size;
    let disk = |fx: f64, fy: f64, fr: f64, color: Rgb, class: Option<usize>| Disk {
        cx: scaled(s, fx),
        cy: scaled(s, fy),
        radius: scaled(s, fr),
        color,
        class,
    };
    let spec = SceneSpec {
        width: s,
        height: s,
        background: BACKGROUND,
        disks: vec![
            disk(0.27, 0.27, 0.16, GREEN, Some(0)),
            disk(0.70, 0.72, 0.14, GREEN, Some(0)),
            disk(0.74, 0.26, 0.13, DARK_BROWN, None),
            disk(0.25, 0.75, 0.11, DARK_BROWN, None),
        ],
        classes: vec!["object".into()],
        noise_sigma,
        seed,
    };
    let mut scene = spec.render()?;
    scene.points = vec![
        AnnotatedPoint::prototype(scaled(s, 0.27) as usize, scaled(s, 0.27) as usize, "object"),
        AnnotatedPoint::counter(scaled(s, 0.50) as usize, scaled(s, 0.50) as usize, "object"),
    ];
    Ok(scene)
}

/// Two object classes on a shared background: class `"a"` (green) and class `"b"` (blue),
/// plus red distractors.
///
/// Points, in order: prototype a, counter-prototype a (on red), prototype b,
/// counter-prototype b (on the background).
pub fn two_object_scene(size: usize, noise_sigma: f64, seed: u64) -> Result<Scene> {
    let s = size;
    let disk = |fx: f64, fy: f64, fr: f64, color: Rgb, class: Option<usize>| Disk {
        cx: scaled(s, fx),
        cy: scaled(s, fy),
        radius: scaled(s, fr),
        color,
        class,
    };
    let spec = SceneSpec {
        width: s,
        height: s,
        background: BACKGROUND,
        disks: vec![
            disk(0.25, 0.25, 0.14, GREEN, Some(0)),
            disk(0.72, 0.70, 0.12, GREEN, Some(0)),
            disk(0.75, 0.25, 0.13, BLUE, Some(1)),
            disk(0.28, 0.72, 0.12, BLUE, Some(1)),
            disk(0.50, 0.50, 0.15, RED, None),
        ],
        classes: vec!["a".into(), "b".into()],
        noise_sigma,
        seed,
    };
    let mut scene = spec.render()?;
    let p = |fx: f64, fy: f64| (scaled(s, fx) as usize, scaled(s, fy) as usize);
    let (ax, ay) = p(0.25, 0.25);
    let (rx, ry) = p(0.50, 0.50);
    let (bx, by) = p(0.75, 0.25);
    let (gx, gy) = p(0.50, 0.08);
    scene.points = vec![
        AnnotatedPoint::prototype(ax, ay, "a"),
        AnnotatedPoint::counter(rx, ry, "a"),
        AnnotatedPoint::prototype(bx, by, "b"),
        AnnotatedPoint::counter(gx, gy, "b"),
    ];
    Ok(scene)
}
