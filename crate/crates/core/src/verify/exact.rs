//! Arbitrary-precision sums of f32 products, independent of the datapath.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// Every f32 product is an integer multiple of 2^-298.
const SCALE: i32 = 298;

fn scaled(x: f32) -> BigInt {
    // x = m·2^e with integer m and e >= -149
    let bits = x.to_bits();
    let exp = ((bits >> 23) & 0xff) as i32;
    let frac = (bits & 0x7f_ffff) as i64;
    let (m, e) = if exp == 0 { (frac, -149) } else { (frac | 0x80_0000, exp - 150) };
    let m = if x.is_sign_negative() { -m } else { m };
    BigInt::from(m) << ((e + 149) as usize)
}

/// Exact value of `init + Σ a·b` in units of 2^-298.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExactSum {
    units: BigInt,
    non_finite: bool,
}

impl ExactSum {
    pub fn new(init: f32) -> Self {
        let mut s = ExactSum::default();
        s.add(init);
        s
    }

    pub fn add(&mut self, x: f32) {
        if !x.is_finite() {
            self.non_finite = true;
            return;
        }
        self.units += scaled(x) << 149usize;
    }

    pub fn add_product(&mut self, a: f32, b: f32) {
        if !a.is_finite() || !b.is_finite() {
            self.non_finite = true;
            return;
        }
        self.units += scaled(a) * scaled(b);
    }

    /// Rounds to nearest-even with `precision` significant bits and the
    /// given minimum exponent of the last bit, returning sign, integer
    /// significand and exponent.
    fn round(&self, precision: u64, min_lsb: i64) -> Option<(bool, BigInt, i64)> {
        if self.units.is_zero() {
            return None;
        }
        let neg = self.units.is_negative();
        let mag = self.units.abs();
        let bits = mag.bits() as i64;
        let shift = (bits - precision as i64).max(min_lsb + SCALE as i64).max(0);
        let mut q: BigInt = &mag >> (shift as usize);
        if shift > 0 {
            let rem = &mag - (&q << (shift as usize));
            let half = BigInt::from(1) << ((shift - 1) as usize);
            if rem > half || (rem == half && (&q & BigInt::from(1)) == BigInt::from(1)) {
                q += 1;
            }
        }
        Some((neg, q, shift - SCALE as i64))
    }

    /// Correctly rounded f32, +0 for an exact zero.
    pub fn to_f32(&self) -> f32 {
        if self.non_finite {
            return f32::NAN;
        }
        match self.round(24, -149) {
            None => 0.0,
            Some((neg, q, e)) => {
                let v = q.to_f64().unwrap() * 2f64.powi(e as i32);
                let r = if v >= 2f64.powi(128) { f32::INFINITY } else { v as f32 };
                if neg {
                    -r
                } else {
                    r
                }
            }
        }
    }

    /// Correctly rounded f64.
    pub fn to_f64(&self) -> f64 {
        if self.non_finite {
            return f64::NAN;
        }
        match self.round(53, -1074) {
            None => 0.0,
            Some((neg, q, e)) => {
                // split the scaling so no intermediate leaves the range
                let v = q.to_f64().unwrap() * 2f64.powi((e / 2) as i32) * 2f64.powi((e - e / 2) as i32);
                if neg {
                    -v
                } else {
                    v
                }
            }
        }
    }
}

/// Correctly rounded `init + Σ a_i·b_i`.
pub fn exact_dot(init: f32, terms: impl IntoIterator<Item = (f32, f32)>) -> f32 {
    let mut s = ExactSum::new(init);
    for (a, b) in terms {
        s.add_product(a, b);
    }
    s.to_f32()
}

/// Bit equality with the two zeros identified.
pub fn same_value(a: f32, b: f32) -> bool {
    a.to_bits() == b.to_bits() || (a == 0.0 && b == 0.0) || (a.is_nan() && b.is_nan())
}
