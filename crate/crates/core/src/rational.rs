//! Exact rational helpers shared by the probability code.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

pub fn half() -> Q {
    q(1, 2)
}

/// `count / 2^bits`.
pub fn dyadic(count: u64, bits: usize) -> Q {
    BigRational::new(BigInt::from(count), BigInt::one() << bits)
}

/// `count / total`.
pub fn ratio(count: u64, total: u64) -> Q {
    BigRational::new(BigInt::from(count), BigInt::from(total))
}

pub fn is_unit_interval(x: &Q) -> bool {
    !x.is_negative() && x <= &Q::one()
}

pub fn abs(x: &Q) -> Q {
    x.abs()
}

/// Canonical `p/q` form, always with a denominator.
pub fn format(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Parses `p/q` or an integer `p`.
pub fn parse(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(BigRational::new(n, d))
    } else {
        let n: BigInt = s.parse().ok()?;
        Some(BigRational::from_integer(n))
    }
}

/// Formats `x` as `k/2^j` when `x·2^j` is an integer and `0 < x < 1`, so a
/// length-`j` program's acceptance probability reads as a count over `2^j`.
/// Other values use the reduced form.
pub fn format_over_pow2(x: &Q, j: usize) -> String {
    let scale = BigInt::one() << j;
    let scaled = x * BigRational::from_integer(scale.clone());
    if scaled.is_integer() && x.is_positive() && x < &Q::one() {
        format!("{}/{}", scaled.to_integer(), scale)
    } else {
        format(x)
    }
}

/// Lossy conversion for reporting.
pub fn to_f64(x: &Q) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}
