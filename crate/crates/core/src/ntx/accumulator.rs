//! Exact fixed-point accumulator for sums of float32 products.
//!
//! The register is a 640-bit two's complement integer scaled by 2^-298, the
//! weight of the smallest product of two subnormals. The largest product is
//! below 2^256, so magnitudes need 554 bits and the remaining 85 bits are
//! carry guard.

const LIMBS: usize = 10;
pub const ACC_BITS: usize = LIMBS * 64;
/// Binary weight of bit 0 is 2^-LSB_EXP.
pub const LSB_EXP: i32 = 298;
/// Bit position of 2^-149 (smallest float32 subnormal).
const MIN_SUBNORMAL_BIT: i32 = LSB_EXP - 149;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WideAccumulator {
    limbs: [u64; LIMBS],
    invalid: bool,
}

impl Default for WideAccumulator {
    fn default() -> Self {
        Self::zero()
    }
}

/// Integer significand and exponent with `x = m · 2^e`, `m < 2^24`.
fn decompose(x: f32) -> (bool, u64, i32) {
    let bits = x.to_bits();
    let neg = bits >> 31 != 0;
    let exp = ((bits >> 23) & 0xff) as i32;
    let frac = (bits & 0x7f_ffff) as u64;
    if exp == 0 {
        (neg, frac, -149)
    } else {
        (neg, frac | 0x80_0000, exp - 150)
    }
}

/// True if any bit strictly below position `pos` is set.
fn any_below(mag: &[u64; LIMBS], pos: usize) -> bool {
    let word = pos / 64;
    if mag[..word].iter().any(|&w| w != 0) {
        return true;
    }
    let bit = pos % 64;
    bit > 0 && mag[word] & ((1u64 << bit) - 1) != 0
}

impl WideAccumulator {
    pub fn zero() -> Self {
        WideAccumulator {
            limbs: [0; LIMBS],
            invalid: false,
        }
    }

    pub fn from_f32(x: f32) -> Self {
        let mut acc = Self::zero();
        acc.add(x);
        acc
    }

    /// Sticky flag set by any NaN or infinite operand.
    pub fn is_invalid(&self) -> bool {
        self.invalid
    }

    pub fn is_zero(&self) -> bool {
        !self.invalid && self.limbs.iter().all(|&l| l == 0)
    }

    fn is_negative(&self) -> bool {
        self.limbs[LIMBS - 1] >> 63 != 0
    }

    /// Adds `m · 2^shift` (in units of the LSB), subtracting when `neg`.
    fn add_shifted(&mut self, neg: bool, m: u64, shift: u32) {
        if m == 0 {
            return;
        }
        let word = (shift / 64) as usize;
        let bit = shift % 64;
        let lo = m << bit;
        let hi = if bit == 0 { 0 } else { m >> (64 - bit) };
        let mut term = [0u64; LIMBS];
        term[word] = lo;
        if word + 1 < LIMBS {
            term[word + 1] = hi;
        }
        if neg {
            // two's complement negation of the term
            let mut carry = 1u64;
            for t in term.iter_mut() {
                let (v, c) = (!*t).overflowing_add(carry);
                *t = v;
                carry = c as u64;
            }
        }
        let mut carry = false;
        for (l, t) in self.limbs.iter_mut().zip(term) {
            let (v1, c1) = l.overflowing_add(t);
            let (v2, c2) = v1.overflowing_add(carry as u64);
            *l = v2;
            carry = c1 || c2;
        }
    }

    /// acc += a·b, exactly.
    pub fn add_product(&mut self, a: f32, b: f32) {
        if !a.is_finite() || !b.is_finite() {
            self.invalid = true;
            return;
        }
        let (na, ma, ea) = decompose(a);
        let (nb, mb, eb) = decompose(b);
        let shift = ea + eb + LSB_EXP;
        debug_assert!(shift >= 0);
        self.add_shifted(na != nb, ma * mb, shift as u32);
    }

    /// acc += x, exactly.
    pub fn add(&mut self, x: f32) {
        if !x.is_finite() {
            self.invalid = true;
            return;
        }
        let (n, m, e) = decompose(x);
        self.add_shifted(n, m, (e + LSB_EXP) as u32);
    }

    pub fn merge(&mut self, other: &WideAccumulator) {
        let mut carry = false;
        for (l, &o) in self.limbs.iter_mut().zip(&other.limbs) {
            let (v1, c1) = l.overflowing_add(o);
            let (v2, c2) = v1.overflowing_add(carry as u64);
            *l = v2;
            carry = c1 || c2;
        }
        self.invalid |= other.invalid;
    }

    fn magnitude(&self) -> [u64; LIMBS] {
        if !self.is_negative() {
            return self.limbs;
        }
        let mut out = [0u64; LIMBS];
        let mut carry = 1u64;
        for (o, &l) in out.iter_mut().zip(&self.limbs) {
            let (v, c) = (!l).overflowing_add(carry);
            *o = v;
            carry = c as u64;
        }
        out
    }

    /// Two's complement limbs, least significant first.
    pub fn limbs(&self) -> &[u64] {
        &self.limbs
    }

    /// Rounds the exact value to float32, nearest-even, in one step.
    pub fn reduce(&self) -> f32 {
        if self.invalid {
            return f32::NAN;
        }
        let neg = self.is_negative();
        let mag = self.magnitude();
        let Some(top_word) = mag.iter().rposition(|&w| w != 0) else {
            return 0.0;
        };
        let top = (top_word * 64 + 63 - mag[top_word].leading_zeros() as usize) as i32;
        // weight of the last kept bit: 24 significant bits, or the subnormal grid
        let lsb = (top - 23).max(MIN_SUBNORMAL_BIT);
        let bit = |pos: i32| -> bool {
            if pos < 0 {
                return false;
            }
            let pos = pos as usize;
            mag[pos / 64] >> (pos % 64) & 1 == 1
        };
        let mut m: u64 = 0;
        for pos in (lsb..=top).rev() {
            m = (m << 1) | bit(pos) as u64;
        }
        let guard = bit(lsb - 1);
        let sticky = any_below(&mag, (lsb - 1).max(0) as usize);
        if guard && (sticky || m & 1 == 1) {
            m += 1;
        }
        // m ≤ 2^24, so m·2^(lsb - 298) is exact in f64 and the cast to f32
        // is exact or overflows to infinity
        let v = m as f64 * 2f64.powi(lsb - LSB_EXP);
        let r = v as f32;
        if neg {
            -r
        } else {
            r
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::{Signed, ToPrimitive, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact value as an integer multiple of 2^-298, built independently.
    fn exact(terms: &[(f32, f32)]) -> BigInt {
        let mut sum = BigInt::zero();
        for &(a, b) in terms {
            let p = to_scaled(a) * to_scaled(b);
            sum += p;
        }
        // each factor carries 2^149, product carries 2^298
        sum
    }

    fn to_scaled(x: f32) -> BigInt {
        // x · 2^149 is an integer for every finite float32
        let bits = x.to_bits();
        let exp = ((bits >> 23) & 0xff) as i64;
        let frac = (bits & 0x7f_ffff) as i64;
        let (m, e) = if exp == 0 { (frac, -149) } else { (frac | 0x80_0000, exp - 150) };
        let v = BigInt::from(m) << ((e + 149) as usize);
        if bits >> 31 != 0 {
            -v
        } else {
            v
        }
    }

    /// |r - exact| ≤ ulp(r)/2, checked in exact integer arithmetic.
    fn within_half_ulp(r: f32, exact_scaled: &BigInt) -> bool {
        let rs = to_scaled(r) << 149usize;
        let diff = (&rs - exact_scaled).abs();
        let ulp = {
            let bits = r.abs().to_bits();
            let exp = ((bits >> 23) & 0xff) as i64;
            let e = if exp == 0 { -149 } else { exp - 150 };
            BigInt::from(1) << ((e + 298) as usize)
        };
        diff * 2 <= ulp
    }

    fn acc_of(terms: &[(f32, f32)]) -> WideAccumulator {
        let mut acc = WideAccumulator::zero();
        for &(a, b) in terms {
            acc.add_product(a, b);
        }
        acc
    }

    #[test]
    fn exact_cancellation_gives_positive_zero() {
        let r = acc_of(&[(1.0, 1.0), (1.0, -1.0)]).reduce();
        assert_eq!(r.to_bits(), 0.0f32.to_bits());
    }

    #[test]
    fn large_cancellation_keeps_small_term() {
        let terms = [(1e20f32, 1.0f32), (1.0, 1.0), (-1e20, 1.0)];
        assert_eq!(acc_of(&terms).reduce(), 1.0);
        let mut seq = 0f32;
        for (a, b) in terms {
            seq += a * b;
        }
        assert_eq!(seq, 0.0);
    }

    #[test]
    fn zero_reduces_to_positive_zero() {
        assert_eq!(WideAccumulator::zero().reduce().to_bits(), 0);
        assert!(WideAccumulator::zero().is_zero());
    }

    #[test]
    fn half_min_subnormal_ties_to_even_zero() {
        // 2^-149 · 2^-1 = half of the smallest subnormal
        let tiny = f32::from_bits(1);
        let r = acc_of(&[(tiny, 0.5)]).reduce();
        assert_eq!(r.to_bits(), 0);
        // 3/2 of min subnormal rounds to 2 units (even)
        let r = acc_of(&[(tiny, 1.5)]).reduce();
        assert_eq!(r.to_bits(), 2);
        // slightly above half rounds up
        let mut acc = acc_of(&[(tiny, 0.5)]);
        acc.add_product(tiny, tiny);
        assert_eq!(acc.reduce().to_bits(), 1);
    }

    #[test]
    fn extreme_products_fit() {
        let tiny = f32::from_bits(1);
        let acc = acc_of(&[(tiny, tiny)]);
        assert!(!acc.is_zero());
        assert_eq!(acc.reduce(), 0.0);
        let big = acc_of(&[(f32::MAX, f32::MAX)]);
        assert_eq!(big.reduce(), f32::INFINITY);
        let neg = acc_of(&[(f32::MAX, -f32::MAX)]);
        assert_eq!(neg.reduce(), f32::NEG_INFINITY);
        let back = acc_of(&[(f32::MAX, f32::MAX), (f32::MAX, -f32::MAX), (3.0, 1.0)]);
        assert_eq!(back.reduce(), 3.0);
    }

    #[test]
    fn overflow_boundary() {
        assert_eq!(WideAccumulator::from_f32(f32::MAX).reduce(), f32::MAX);
        let mut acc = WideAccumulator::from_f32(f32::MAX);
        // half an ulp above MAX rounds to even, which overflows
        acc.add_product(2f32.powi(103), 1.0);
        assert_eq!(acc.reduce(), f32::INFINITY);
    }

    #[test]
    fn non_finite_poisons() {
        let mut acc = WideAccumulator::zero();
        acc.add_product(1.0, 2.0);
        acc.add_product(f32::INFINITY, 1.0);
        assert!(acc.is_invalid());
        assert!(acc.reduce().is_nan());
        let mut acc = WideAccumulator::zero();
        acc.add(f32::NAN);
        assert!(acc.reduce().is_nan());
    }

    #[test]
    fn random_sequence_matches_big_integer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let terms: Vec<(f32, f32)> = (0..1000)
            .map(|_| {
                let ea = rng.gen_range(-20..20);
                let eb = rng.gen_range(-20..20);
                (
                    rng.gen_range(-1.0f32..1.0) * 2f32.powi(ea),
                    rng.gen_range(-1.0f32..1.0) * 2f32.powi(eb),
                )
            })
            .collect();
        let r = acc_of(&terms).reduce();
        let ex = exact(&terms);
        assert!(within_half_ulp(r, &ex));
        // float64 of the exact sum rounded to float32
        let f64_oracle = ex.to_f64().unwrap() * 2f64.powi(-298);
        assert_eq!(r, f64_oracle as f32);
    }

    #[test]
    fn conv_window_matches_float64_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let terms: Vec<(f32, f32)> = (0..3 * 3 * 64)
            .map(|_| (rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0f32..1.0)))
            .collect();
        let r = acc_of(&terms).reduce();
        let ex = exact(&terms);
        assert!(within_half_ulp(r, &ex));
        assert_eq!(r, (ex.to_f64().unwrap() * 2f64.powi(-298)) as f32);
    }

    #[test]
    fn vadd_terms() {
        let mut acc = WideAccumulator::zero();
        acc.add(0.1);
        acc.add(0.2);
        let exact = 0.1f32 as f64 + 0.2f32 as f64;
        assert_eq!(acc.reduce(), exact as f32);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_finite() -> impl Strategy<Value = f32> {
            any::<u32>()
                .prop_map(f32::from_bits)
                .prop_filter("finite", |x| x.is_finite())
        }

        proptest! {
            #[test]
            fn permutation_invariant(
                terms in prop::collection::vec((any_finite(), any_finite()), 1..40),
                seed in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                let a = acc_of(&terms);
                let mut shuffled = terms.clone();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let b = acc_of(&shuffled);
                prop_assert_eq!(a, b);
            }

            #[test]
            fn reduce_within_half_ulp(
                terms in prop::collection::vec((any_finite(), any_finite()), 1..20),
            ) {
                let r = acc_of(&terms).reduce();
                let ex = exact(&terms);
                if r.is_finite() {
                    prop_assert!(within_half_ulp(r, &ex));
                } else {
                    // overflow only when the exact value is beyond the largest float
                    let max = to_scaled(f32::MAX) << 149usize;
                    prop_assert!(ex.abs() > max);
                }
            }

            #[test]
            fn single_value_round_trips(x in any_finite()) {
                let r = WideAccumulator::from_f32(x).reduce();
                if x == 0.0 {
                    prop_assert_eq!(r.to_bits(), 0);
                } else {
                    prop_assert_eq!(r.to_bits(), x.to_bits());
                }
            }
        }
    }
}
