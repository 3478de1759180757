//! Arithmetic policies shared by the dense reference and the tiled executor.
//!
//! Full precision accumulates every dot product exactly (error-free products
//! plus a non-overlapping expansion, like a Kulisch accumulator) and rounds
//! once at the end, so the result does not depend on summation order.
//! Half precision keeps operands and operator results in IEEE binary16 but
//! accumulates dot products in binary32, as the 4-byte accumulators do, and
//! rounds the finished sum back to binary16.

use half::f16;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    FullPrecision,
    HalfPrecisionEmulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    pub mode: Precision,
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self::full()
    }
}

impl NumericPolicy {
    pub fn full() -> Self {
        Self {
            mode: Precision::FullPrecision,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
        }
    }

    pub fn half() -> Self {
        Self {
            mode: Precision::HalfPrecisionEmulated,
            eps_abs: 1e-2,
            eps_rel: 1e-2,
        }
    }

    pub fn is_half(&self) -> bool {
        self.mode == Precision::HalfPrecisionEmulated
    }

    #[inline]
    fn acc32(x: f64) -> f64 {
        x as f32 as f64
    }

    /// Rounds an operator result according to the active mode.
    #[inline]
    pub fn round(&self, x: f64) -> f64 {
        match self.mode {
            Precision::FullPrecision => x,
            Precision::HalfPrecisionEmulated => f16::from_f64(x).to_f64(),
        }
    }

    pub fn zero(&self) -> Partial {
        match self.mode {
            Precision::FullPrecision => Partial::Exact(ExactSum::new()),
            Precision::HalfPrecisionEmulated => Partial::Rounded(0.0),
        }
    }

    pub fn from_value(&self, v: f64) -> Partial {
        let mut p = self.zero();
        self.add_value(&mut p, v);
        p
    }

    #[inline]
    pub fn add_value(&self, acc: &mut Partial, v: f64) {
        match acc {
            Partial::Exact(s) => s.add(v),
            Partial::Rounded(r) => *r = Self::acc32(*r + self.round(v)),
        }
    }

    #[inline]
    pub fn add_product(&self, acc: &mut Partial, a: f64, b: f64) {
        match acc {
            Partial::Exact(s) => s.add_product(a, b),
            // binary16 x binary16 is exact in binary32
            Partial::Rounded(r) => *r = Self::acc32(*r + self.round(a) * self.round(b)),
        }
    }

    /// Folds `other` into `acc` (one tree-adder node).
    pub fn merge(&self, acc: &mut Partial, other: &Partial) {
        match (acc, other) {
            (Partial::Exact(s), Partial::Exact(o)) => s.merge(o),
            (Partial::Rounded(r), Partial::Rounded(o)) => *r = Self::acc32(*r + *o),
            (acc, other) => {
                let v = other.value();
                self.add_value(acc, v);
            }
        }
    }

    /// Whether `got` matches `expected` under this policy's tolerance.
    pub fn close(&self, got: f64, expected: f64) -> bool {
        if got == expected {
            return true;
        }
        let diff = (got - expected).abs();
        match self.mode {
            Precision::FullPrecision => diff <= self.eps_abs,
            Precision::HalfPrecisionEmulated => diff <= self.eps_rel * expected.abs().max(1.0),
        }
    }
}

/// A running dot-product accumulator. `Rounded` holds a binary32 sum that
/// `value` rounds to binary16.
#[derive(Debug, Clone)]
pub enum Partial {
    Exact(ExactSum),
    Rounded(f64),
}

impl Partial {
    pub fn value(&self) -> f64 {
        match self {
            Partial::Exact(s) => s.value(),
            Partial::Rounded(r) => f16::from_f64(*r).to_f64(),
        }
    }
}

/// `a * b - p` exactly, for `p = fl(a * b)`. Dekker's split unless the
/// target has FMA or the operands sit where splitting could overflow or the
/// error term could underflow.
#[inline]
fn two_product_err(a: f64, b: f64, p: f64) -> f64 {
    const SPLIT: f64 = 134_217_729.0; // 2^27 + 1
    if cfg!(target_feature = "fma")
        || a.abs() > 1e290
        || b.abs() > 1e290
        || (p != 0.0 && p.abs() < 1e-280)
    {
        return a.mul_add(b, -p);
    }
    let split = |x: f64| {
        let c = SPLIT * x;
        let hi = c - (c - x);
        (hi, x - hi)
    };
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    ((ah * bh - p) + ah * bl + al * bh) + al * bl
}

/// Exact sum of doubles held as non-overlapping partials; `value` is
/// correctly rounded.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
    special: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.special += x;
            return;
        }
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            if !hi.is_finite() {
                self.special += hi;
                return;
            }
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

    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        if !p.is_finite() {
            self.special += p;
            return;
        }
        let e = two_product_err(a, b, p);
        self.add(p);
        if e != 0.0 {
            self.add(e);
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
        self.special += other.special;
    }

    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
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
            let y = p[n - 1];
            n -= 1;
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way correction so the result is correctly rounded
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sum_is_order_independent() {
        let xs = [1e16, 1.0, -1e16, 3.5, 1e-8, -2.25];
        let mut fwd = ExactSum::new();
        let mut rev = ExactSum::new();
        for &x in &xs {
            fwd.add(x);
        }
        for &x in xs.iter().rev() {
            rev.add(x);
        }
        assert_eq!(fwd.value(), rev.value());
        assert_eq!(fwd.value(), 2.25 + 1e-8);
    }

    #[test]
    fn exact_product_keeps_low_bits() {
        let a = 1.0 + f64::EPSILON;
        let mut s = ExactSum::new();
        s.add_product(a, a);
        s.add(-1.0);
        s.add(-2.0 * f64::EPSILON);
        assert_eq!(s.value(), f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn half_rounding_saturates() {
        let p = NumericPolicy::half();
        assert_eq!(p.round(1e6), f64::INFINITY);
        assert_eq!(p.round(1.0 / 3.0), f16::from_f64(1.0 / 3.0).to_f64());
    }

    #[test]
    fn overflow_is_reported_as_non_finite() {
        let mut s = ExactSum::new();
        s.add_product(1e300, 1e300);
        assert!(s.value().is_infinite());
    }

    #[test]
    fn split_product_error_matches_fma() {
        let mut x = 0.123456789f64;
        for _ in 0..1000 {
            x = (x * 3.7 + 0.31).fract() * 2.0 - 1.0;
            let y = (x * 1e3).fract() * 1e-3 + x * 7.0;
            let p = x * y;
            assert_eq!(two_product_err(x, y, p), x.mul_add(y, -p));
        }
    }
}
