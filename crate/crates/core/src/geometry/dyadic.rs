use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of fractional bits shared by every coordinate.
pub const FRAC_BITS: i32 = 40;
/// Largest power of two representable as a side length or coordinate bound.
pub const MAX_LOG2: i32 = 21;

/// A dyadic rational `mantissa * 2^-FRAC_BITS`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Dyadic(pub i64);

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic(0);

    pub fn from_int(k: i64) -> Self {
        Dyadic(k << FRAC_BITS)
    }

    /// `2^k`; panics outside the representable range.
    pub fn pow2(k: i32) -> Self {
        assert!(
            (-FRAC_BITS..=MAX_LOG2).contains(&k),
            "2^{k} is outside the dyadic range"
        );
        Dyadic(1i64 << (k + FRAC_BITS))
    }

    /// Exact conversion; fails if `x` is not a multiple of `2^-FRAC_BITS` or is too large.
    pub fn exact(x: f64) -> Result<Self> {
        let scaled = x * (FRAC_BITS as f64).exp2();
        if !scaled.is_finite() || scaled.fract() != 0.0 || scaled.abs() >= (62f64).exp2() {
            return Err(Error::InvalidParameter(format!(
                "{x} is not a representable dyadic coordinate"
            )));
        }
        Ok(Dyadic(scaled as i64))
    }

    /// Round to the nearest representable dyadic.
    pub fn snap(x: f64) -> Result<Self> {
        let scaled = (x * (FRAC_BITS as f64).exp2()).round();
        if !scaled.is_finite() || scaled.abs() >= (62f64).exp2() {
            return Err(Error::InvalidParameter(format!(
                "{x} is outside the dyadic coordinate range"
            )));
        }
        Ok(Dyadic(scaled as i64))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 * (-FRAC_BITS as f64).exp2()
    }

    pub fn mantissa(self) -> i64 {
        self.0
    }

    /// Floor of `self / 2^k` as an integer.
    pub fn floor_div_pow2(self, k: i32) -> i64 {
        let shift = k + FRAC_BITS;
        if shift >= 0 {
            self.0 >> shift
        } else {
            self.0 << (-shift)
        }
    }

    pub fn mul_int(self, k: i64) -> Self {
        Dyadic(self.0.checked_mul(k).expect("dyadic overflow"))
    }

    pub fn abs(self) -> Self {
        Dyadic(self.0.abs())
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, o: Dyadic) -> Dyadic {
        Dyadic(self.0.checked_add(o.0).expect("dyadic overflow"))
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, o: Dyadic) -> Dyadic {
        Dyadic(self.0.checked_sub(o.0).expect("dyadic overflow"))
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic(-self.0)
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Squared Euclidean length of a vector of mantissa gaps, in units of `2^-2*FRAC_BITS`.
pub fn norm_sq(gaps: impl IntoIterator<Item = i64>) -> i128 {
    gaps.into_iter().map(|g| (g as i128) * (g as i128)).sum()
}

/// Convert a squared mantissa length to a real length.
pub fn sqrt_len(d2: i128) -> f64 {
    (d2 as f64).sqrt() * (-FRAC_BITS as f64).exp2()
}

/// Gap between the closed intervals `[a0, a1]` and `[b0, b1]`.
pub fn interval_gap(a0: i64, a1: i64, b0: i64, b1: i64) -> i64 {
    (b0 - a1).max(a0 - b1).max(0)
}

/// `t = m * 2^e` with an integer mantissa; `t` must be finite and non-negative.
fn split_f64(t: f64) -> (i128, i32) {
    assert!(t.is_finite() && t >= 0.0, "length {t} must be finite and non-negative");
    let bits = t.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i128;
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1i128 << 52), exp - 1075)
    }
}

/// Compare a non-negative integer `a` with `m * 2^k`, `m >= 0`.
fn cmp_pow2(a: i128, m: i128, k: i32) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    if m == 0 {
        return a.cmp(&0);
    }
    if k >= 0 {
        let fits = k < 127 && (m.leading_zeros() as i32) > k + 1;
        if !fits {
            return Ordering::Less;
        }
        a.cmp(&(m << k))
    } else {
        let s = -k;
        // a * 2^s vs m; if a * 2^s overflows it certainly exceeds m
        let fits = s < 127 && (a.leading_zeros() as i32) > s + 1;
        if !fits {
            return if a == 0 { Ordering::Less } else { Ordering::Greater };
        }
        (a << s).cmp(&m)
    }
}

/// Exact `sqrt(d2) < t` for a squared mantissa length `d2` and a real length `t`.
pub fn len_lt(d2: i128, t: f64) -> bool {
    let (m, e) = split_f64(t);
    // t in mantissa units is m * 2^(e + FRAC_BITS); square it
    cmp_pow2(d2, m * m, 2 * (e + FRAC_BITS)) == std::cmp::Ordering::Less
}

/// Exact `sqrt(d2) <= t`.
pub fn len_le(d2: i128, t: f64) -> bool {
    let (m, e) = split_f64(t);
    cmp_pow2(d2, m * m, 2 * (e + FRAC_BITS)) != std::cmp::Ordering::Greater
}

/// Exact comparison of `|a|` (a mantissa gap) with a real length `t`.
pub fn cmp_gap(a: i64, t: f64) -> std::cmp::Ordering {
    let (m, e) = split_f64(t);
    cmp_pow2((a as i128).abs(), m, e + FRAC_BITS)
}

/// Exact `|a| <= t`.
pub fn gap_le(a: i64, t: f64) -> bool {
    cmp_gap(a, t) != std::cmp::Ordering::Greater
}
