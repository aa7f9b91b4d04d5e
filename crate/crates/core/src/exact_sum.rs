//! Order-independent floating-point summation.
//!
//! Every finite `f64` is an integer multiple of 2^-1074, so a sum of them is
//! held exactly in a wide fixed-point accumulator and rounded once at the
//! end. The result depends only on the multiset of addends, never on their
//! order, which is what makes the detector bit-exactly permutation
//! equivariant.

use num_complex::Complex64;

const LIMB_BITS: u32 = 32;
const LIMB_MASK: i64 = (1 << LIMB_BITS) - 1;
// Highest bit position of a finite f64 mantissa is 2045 + 52; three limbs of
// spill plus one carry limb.
const LIMBS: usize = 68;
// Each limb absorbs at most 2^32 per add, leaving 2^30 adds of headroom.
const NORMALIZE_EVERY: u32 = 1 << 30;

#[derive(Clone)]
pub struct ExactSum {
    limbs: [i64; LIMBS],
    pending: u32,
    special: f64,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self { limbs: [0; LIMBS], pending: 0, special: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        if x == 0.0 {
            return;
        }
        if !x.is_finite() {
            self.special += x;
            return;
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as u32;
        let frac = bits & ((1u64 << 52) - 1);
        // value = mantissa * 2^(position - 1074)
        let (mantissa, position) = if biased == 0 {
            (frac, 0)
        } else {
            (frac | (1u64 << 52), biased - 1)
        };
        let idx = (position / LIMB_BITS) as usize;
        let wide = (mantissa as u128) << (position % LIMB_BITS);
        let parts = [
            (wide & LIMB_MASK as u128) as i64,
            ((wide >> 32) & LIMB_MASK as u128) as i64,
            (wide >> 64) as i64,
        ];
        for (k, part) in parts.into_iter().enumerate() {
            if negative {
                self.limbs[idx + k] -= part;
            } else {
                self.limbs[idx + k] += part;
            }
        }
        self.pending += 1;
        if self.pending >= NORMALIZE_EVERY {
            self.normalize();
        }
    }

    fn normalize(&mut self) {
        for i in 0..LIMBS - 1 {
            let carry = self.limbs[i] >> LIMB_BITS;
            self.limbs[i] &= LIMB_MASK;
            self.limbs[i + 1] += carry;
        }
        self.pending = 0;
    }

    /// The exact sum rounded to nearest-even.
    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let mut limbs = self.limbs;
        carry_propagate(&mut limbs);
        let negative = limbs[LIMBS - 1] < 0;
        if negative {
            for l in limbs.iter_mut() {
                *l = -*l;
            }
            carry_propagate(&mut limbs);
        }
        let Some(top) = limbs.iter().rposition(|&l| l != 0) else {
            return 0.0;
        };
        let hi = top.max(2);
        let mut head: u128 = 0;
        for k in (hi - 2..=hi).rev() {
            head = (head << LIMB_BITS) | limbs[k] as u128;
        }
        let sticky = limbs[..hi - 2].iter().any(|&l| l != 0);
        let magnitude = round_to_f64(head, sticky, 32 * (hi as i32 - 2) - 1074);
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

fn carry_propagate(limbs: &mut [i64; LIMBS]) {
    for i in 0..LIMBS - 1 {
        let carry = limbs[i] >> LIMB_BITS;
        limbs[i] &= LIMB_MASK;
        limbs[i + 1] += carry;
    }
}

/// Rounds `head * 2^exponent` (plus a sticky tail below `head`) to f64.
fn round_to_f64(head: u128, sticky: bool, exponent: i32) -> f64 {
    let width = 128 - head.leading_zeros() as i32;
    // Subnormal results keep fewer than 53 significant bits.
    let min_lsb = -1074;
    let mut shift = (width - 53).max(min_lsb - exponent).max(0);
    if shift >= 128 {
        shift = 127;
    }
    let mut mantissa = head >> shift;
    if shift > 0 {
        let rem = head & ((1u128 << shift) - 1);
        let half = 1u128 << (shift - 1);
        if rem > half || (rem == half && (sticky || mantissa & 1 == 1)) {
            mantissa += 1;
        }
    }
    ldexp(mantissa as f64, exponent + shift)
}

fn ldexp(mut x: f64, mut e: i32) -> f64 {
    while e > 1000 {
        x *= pow2(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= pow2(-1000);
        e += 1000;
    }
    x * pow2(e)
}

fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Order-independent sum of `values`.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Complex accumulator built from two exact real accumulators.
#[derive(Clone, Default)]
pub struct ExactComplexSum {
    re: ExactSum,
    im: ExactSum,
}

impl ExactComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_integers_are_exact() {
        assert_eq!(exact_sum([1.0, 2.0, 3.0, -6.0]), 0.0);
        assert_eq!(exact_sum([0.5, 0.25, -0.125]), 0.625);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn cancellation_keeps_small_terms() {
        assert_eq!(exact_sum([1e300, 1.0, -1e300]), 1.0);
        assert_eq!(exact_sum([1.0, 1e-30, -1.0]), 1e-30);
    }

    #[test]
    fn subnormals_and_extremes() {
        let tiny = f64::from_bits(1);
        assert_eq!(exact_sum([tiny, tiny]), 2.0 * tiny);
        assert_eq!(exact_sum([f64::MAX, -f64::MAX, f64::MIN_POSITIVE]), f64::MIN_POSITIVE);
        assert_eq!(exact_sum([-f64::MAX]), -f64::MAX);
    }

    #[test]
    fn non_finite_propagates() {
        assert!(exact_sum([1.0, f64::NAN]).is_nan());
        assert_eq!(exact_sum([1.0, f64::INFINITY]), f64::INFINITY);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6..1e6f64,
            (-1.0..1.0f64, -300i32..300).prop_map(|(m, e)| m * 10f64.powi(e)),
        ]
    }

    proptest! {
        #[test]
        fn pair_sum_matches_ieee_addition(a in finite(), b in finite()) {
            prop_assert_eq!(exact_sum([a, b]).to_bits(), (a + b).to_bits());
        }

        #[test]
        fn order_does_not_matter(mut v in proptest::collection::vec(finite(), 0..60), seed in any::<u64>()) {
            let forward = exact_sum(v.iter().copied());
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..v.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                v.swap(i, (state % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(forward.to_bits(), exact_sum(v.iter().copied()).to_bits());
        }

        #[test]
        fn close_to_naive_sum(v in proptest::collection::vec(-1e3..1e3f64, 1..100)) {
            let naive: f64 = v.iter().sum();
            let scale: f64 = v.iter().map(|x| x.abs()).sum();
            prop_assert!((exact_sum(v.iter().copied()) - naive).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
