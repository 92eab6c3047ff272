//! Circular neighborhoods, sorted per channel, on a small HSV image.
//!
//!     cargo run -p mmnn --example features

use mmnn::features::rgb_to_hsv;
use mmnn::{circular_offsets, extract_features, FeatureConfig, Image};

fn main() -> mmnn::Result<()> {
    for r in 0..=4 {
        println!("radius {r}: {} offsets", circular_offsets(r).len());
    }

    // 6×6 image: left half green, right half red.
    let mut rgb = Vec::new();
    for _y in 0..6 {
        for x in 0..6 {
            rgb.extend_from_slice(if x < 3 { &[51u8, 153, 64] } else { &[191, 64, 51] });
        }
    }
    let img = Image::from_rgb8(6, 6, &rgb)?;
    println!("green in HSV: {:?}", rgb_to_hsv(0.2, 0.6, 0.25));

    let cfg = FeatureConfig::new(1, true);
    for (x, y) in [(0, 0), (2, 3), (3, 3)] {
        let f = extract_features(&img, x, y, &cfg)?;
        let h: Vec<String> = f[..5].iter().map(|v| format!("{v:.3}")).collect();
        println!("({x},{y}) {} values, hue block [{}]", f.len(), h.join(", "));
    }
    if let Err(e) = extract_features(&img, 6, 0, &cfg) {
        println!("outside the image: {e}");
    }

    let small = img.subsample(4)?;
    println!("subsampled by 4: {}x{}", small.width(), small.height());
    Ok(())
}
