//! Correctly rounded floating-point summation.
//!
//! Every similarity index is a ratio of sums, and the sums are taken with
//! Shewchuk's partials algorithm: the result is the exact sum of the inputs
//! rounded once to the nearest `f64`. A correctly rounded result does not
//! depend on the order of the terms, so the indices are bit-identical under
//! operand swaps and under any common permutation of the two vectors.

/// Running exact sum over a sequence of finite `f64` terms.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            partials: Vec::with_capacity(4),
        }
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// The exact running total, rounded half-to-even.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding direction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

/// Correctly rounded sum of `terms`.
pub fn exact_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = ExactSum::new();
    acc.extend(terms);
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_is_exact() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn half_way_rounds_to_even() {
        // 1 + 2^-53 is exactly half-way between 1 and the next double.
        let half_ulp = f64::EPSILON / 2.0;
        assert_eq!(exact_sum([1.0, half_ulp]), 1.0);
        // The tiny extra term pushes past the half-way point.
        assert_eq!(exact_sum([1.0, half_ulp, 1e-30]), 1.0 + f64::EPSILON);
    }
}
