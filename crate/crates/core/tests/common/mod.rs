//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// `v` as an integer multiple of 2^-1074 (every finite double is one).
pub fn to_scaled_int(v: f64) -> BigInt {
    assert!(v.is_finite());
    let bits = v.to_bits();
    let neg = bits >> 63 == 1;
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, shift) = if exp == 0 { (frac, 0) } else { (frac | (1u64 << 52), exp - 1) };
    let n = BigInt::from(mant) << shift as usize;
    if neg {
        -n
    } else {
        n
    }
}

/// Rounds `n · 2^-1074` to the nearest double, ties to even.
pub fn from_scaled_int(n: &BigInt) -> f64 {
    if n.is_zero() {
        return 0.0;
    }
    let neg = n.is_negative();
    let mag = n.abs();
    let len = mag.bits() as i64;
    let value = if len <= 53 {
        mag.to_u64().unwrap() as f64 * f64::from_bits(1)
    } else {
        let shift = (len - 53) as usize;
        let mut q = (&mag >> shift).to_u64().unwrap();
        let rem = &mag - (BigInt::from(q) << shift);
        let half = BigInt::from(1u8) << (shift - 1);
        if rem > half || (rem == half && q & 1 == 1) {
            q += 1;
        }
        // q may have carried into 2^53; still exact as a double, and the
        // product is a normal number since the magnitude exceeds 2^53 ulps.
        q as f64 * pow2(shift as i64 - 1074)
    };
    if neg {
        -value
    } else {
        value
    }
}

fn pow2(e: i64) -> f64 {
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}

/// Exact sum rounded once.
pub fn big_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let total = values.into_iter().fold(BigInt::zero(), |acc, v| acc + to_scaled_int(v));
    from_scaled_int(&total)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Jaccard, interiority and coincidence straight from their definitions.
/// `None` when both operands are all-zero.
pub fn ref_indices(x: &[f64], y: &[f64], d: f64) -> Option<(f64, f64, f64)> {
    assert_eq!(x.len(), y.len());
    let num = big_sum(x.iter().zip(y).map(|(a, b)| sign(*a) * sign(*b) * a.abs().min(b.abs())));
    let den = big_sum(x.iter().zip(y).map(|(a, b)| a.abs().max(b.abs())));
    if den == 0.0 {
        return None;
    }
    let shared = big_sum(x.iter().zip(y).map(|(a, b)| a.abs().min(b.abs())));
    let sx = big_sum(x.iter().map(|a| a.abs()));
    let sy = big_sum(y.iter().map(|b| b.abs()));
    let j = num / den;
    let m = sx.min(sy);
    let i = if m == 0.0 { 0.0 } else { shared / m };
    let jd = if j == 0.0 { 0.0 } else { j.signum() * j.abs().powf(d) };
    Some((j, i, jd * i))
}

/// Clamp-to-edge circular neighborhood, each channel sorted ascending, channels concatenated.
/// `data` is row-major, channel-interleaved.
pub fn ref_features(data: &[f64], w: usize, h: usize, ch: usize, x: usize, y: usize, r: i64) -> Vec<f64> {
    let mut blocks = vec![Vec::new(); ch];
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let px = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
            let py = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
            for (c, block) in blocks.iter_mut().enumerate() {
                block.push(data[(py * w + px) * ch + c]);
            }
        }
    }
    for b in &mut blocks {
        b.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    blocks.concat()
}

pub fn logistic(z: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (-a * (z + b)).exp())
}

/// Central secant slopes with probe `h`, computed without the library.
pub fn secant_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let mut p = w.to_vec();
            let mut m = w.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}
