//! Exact arithmetic over numbers of the form `q · √r` with `q` rational and
//! `r` a squarefree positive integer.
//!
//! Every built-in ancilla has coefficients of this shape (`1/√2`, `1/√3`,
//! `1/√(2·2!^p)`, …), which lets the bounds layer carry polarization profiles
//! and the resulting bounds as exact rationals instead of floats.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// An exact real number `q · √rad`, with `rad` squarefree and ≥ 1.
///
/// The zero value is canonicalized to `rad = 1` so that equality and addition
/// behave as expected.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Radical {
    q: BigRational,
    rad: u64,
}

impl Radical {
    #[cfg(test)]
    pub fn zero() -> Self {
        Radical { q: BigRational::zero(), rad: 1 }
    }

    pub fn one() -> Self {
        Radical { q: BigRational::one(), rad: 1 }
    }

    pub fn from_rational(q: BigRational) -> Self {
        let mut r = Radical { q, rad: 1 };
        r.canonicalize();
        r
    }

    /// Builds `q · √rad`, extracting the square part of `rad` into `q`.
    pub fn new(q: BigRational, rad: u64) -> Self {
        assert!(rad > 0, "radicand must be positive");
        let (square_root, free) = squarefree_decompose(rad);
        let mut r = Radical { q: q * BigRational::from_integer(BigInt::from(square_root)), rad: free };
        r.canonicalize();
        r
    }

    /// `1/√n`, exactly: `(1/n)·√n`.
    pub fn inv_sqrt(n: u64) -> Self {
        Radical::new(BigRational::new(BigInt::one(), BigInt::from(n)), n)
    }

    fn canonicalize(&mut self) {
        if self.q.is_zero() {
            self.rad = 1;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.q.is_zero()
    }

    pub fn mul(&self, other: &Radical) -> Radical {
        let g = gcd(self.rad, other.rad);
        // rad/g and other.rad/g are coprime squarefree numbers, so their
        // product is squarefree again; the common factor g comes out as a
        // whole √(g²) = g.
        let free = (self.rad / g)
            .checked_mul(other.rad / g)
            .expect("radicand overflow");
        let mut r = Radical {
            q: &self.q * &other.q * BigRational::from_integer(BigInt::from(g)),
            rad: free,
        };
        r.canonicalize();
        r
    }

    /// Exact sum, available only when both operands lie over the same radical
    /// (or one of them is zero).
    pub fn try_add(&self, other: &Radical) -> Option<Radical> {
        if self.is_zero() {
            return Some(other.clone());
        }
        if other.is_zero() {
            return Some(self.clone());
        }
        if self.rad != other.rad {
            return None;
        }
        let mut r = Radical { q: &self.q + &other.q, rad: self.rad };
        r.canonicalize();
        Some(r)
    }

    /// The exact square `q²·rad`, always rational.
    pub fn sqr(&self) -> BigRational {
        &self.q * &self.q * BigRational::from_integer(BigInt::from(self.rad))
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.q) * (self.rad as f64).sqrt()
    }
}

/// Splits `n` into `(s, f)` with `n = s²·f` and `f` squarefree.
fn squarefree_decompose(n: u64) -> (u64, u64) {
    let mut n = n;
    let mut square_root = 1u64;
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        while n.is_multiple_of(d * d) {
            n /= d * d;
            square_root *= d;
        }
        d += 1;
    }
    (square_root, n)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn rational_to_f64(q: &BigRational) -> f64 {
    // Values in this crate comfortably fit f64; fall through BigInt's
    // conversion which handles sign and magnitude.
    q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN)
}

/// Exact binomial coefficient.
pub(crate) fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Exact factorial.
pub(crate) fn factorial(n: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    acc
}

/// Formats a non-negative rational as `p/q` (or `p` when integral).
pub(crate) fn format_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        format!("{}", q.numer())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parses a rational like `3/4` or `1`.
#[allow(dead_code)]
pub(crate) fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().ok()?;
        let d: BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(BigRational::new(n, d))
    } else {
        let n: BigInt = s.parse().ok()?;
        Some(BigRational::from_integer(n))
    }
}
