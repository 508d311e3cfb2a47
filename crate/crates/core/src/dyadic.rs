//! Exact dyadic rationals `num / 2^exp`.
//!
//! Values are kept canonical: the numerator is odd whenever `exp > 0`, and
//! zero is stored as `0 / 2^0`. Numerators that fit in an `i64` stay inline;
//! larger ones spill to a boxed [`BigInt`]. Equality, hashing and ordering
//! are therefore value-based.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use core::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, PartialEq, Eq, Hash)]
enum Mant {
    Small(i64),
    Big(Box<BigInt>),
}

/// An exact value `num / 2^exp` with `num` an arbitrary-precision integer.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mant: Mant,
    exp: u32,
}

impl Default for Dyadic {
    fn default() -> Self {
        Dyadic::zero()
    }
}

fn big_fits_i64(n: &BigInt) -> Option<i64> {
    i64::try_from(n).ok()
}

impl Dyadic {
    pub const fn zero() -> Dyadic {
        Dyadic { mant: Mant::Small(0), exp: 0 }
    }

    pub const fn one() -> Dyadic {
        Dyadic { mant: Mant::Small(1), exp: 0 }
    }

    pub fn from_int(n: i64) -> Dyadic {
        Dyadic { mant: Mant::Small(n), exp: 0 }
    }

    /// `2^k` for any integer `k`.
    pub fn pow2(k: i64) -> Dyadic {
        if k >= 0 {
            if k <= 62 {
                Dyadic::from_int(1i64 << k)
            } else {
                Dyadic::from_bigint_exp(BigInt::one() << (k as u64), 0)
            }
        } else {
            let e = u32::try_from(-k).expect("exponent out of range");
            Dyadic { mant: Mant::Small(1), exp: e }
        }
    }

    /// `num / 2^exp`, normalized.
    pub fn from_parts(num: BigInt, exp: u32) -> Dyadic {
        Dyadic::from_bigint_exp(num, exp)
    }

    /// `num / 2^exp` for a machine-sized numerator.
    pub fn from_ratio_pow2(num: i64, exp: u32) -> Dyadic {
        Dyadic::from_i128_exp(num as i128, exp)
    }

    fn from_i128_exp(n: i128, exp: u32) -> Dyadic {
        if n == 0 {
            return Dyadic::zero();
        }
        let tz = n.trailing_zeros().min(exp);
        let n = n >> tz;
        let exp = exp - tz;
        match i64::try_from(n) {
            Ok(s) => Dyadic { mant: Mant::Small(s), exp },
            Err(_) => Dyadic { mant: Mant::Big(Box::new(BigInt::from(n))), exp },
        }
    }

    fn from_bigint_exp(n: BigInt, exp: u32) -> Dyadic {
        let tz = match n.trailing_zeros() {
            None => return Dyadic::zero(),
            Some(t) => t.min(exp as u64) as u32,
        };
        let n = if tz > 0 { n >> tz } else { n };
        let exp = exp - tz;
        match big_fits_i64(&n) {
            Some(s) => Dyadic { mant: Mant::Small(s), exp },
            None => Dyadic { mant: Mant::Big(Box::new(n)), exp },
        }
    }

    /// The (canonical) numerator.
    pub fn numerator(&self) -> BigInt {
        match &self.mant {
            Mant::Small(s) => BigInt::from(*s),
            Mant::Big(b) => (**b).clone(),
        }
    }

    /// The (canonical) power-of-two denominator exponent.
    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.mant, Mant::Small(0))
    }

    pub fn signum(&self) -> i32 {
        match &self.mant {
            Mant::Small(s) => s.signum() as i32,
            Mant::Big(b) => match b.sign() {
                Sign::Minus => -1,
                Sign::NoSign => 0,
                Sign::Plus => 1,
            },
        }
    }

    pub fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub fn is_positive(&self) -> bool {
        self.signum() > 0
    }

    #[must_use]
    pub fn abs(&self) -> Dyadic {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// `max(0, self)`.
    #[must_use]
    pub fn relu(&self) -> Dyadic {
        if self.is_negative() {
            Dyadic::zero()
        } else {
            self.clone()
        }
    }

    /// `self * 2^k`.
    #[must_use]
    pub fn mul_pow2(&self, k: i64) -> Dyadic {
        if self.is_zero() || k == 0 {
            return self.clone();
        }
        if k < 0 {
            let e = u32::try_from(-k).ok().and_then(|e| self.exp.checked_add(e)).expect("exponent overflow");
            // An odd numerator stays odd; an even one only occurs with exp == 0.
            return Dyadic::from_bigint_or_small(&self.mant, e);
        }
        let k = k as u64;
        if (self.exp as u64) >= k {
            Dyadic { mant: self.mant.clone(), exp: self.exp - k as u32 }
        } else {
            let shift = k - self.exp as u64;
            match &self.mant {
                Mant::Small(s) if shift <= 62 => Dyadic::from_i128_exp((*s as i128) << shift, 0),
                _ => Dyadic::from_bigint_exp(self.numerator() << shift, 0),
            }
        }
    }

    fn from_bigint_or_small(m: &Mant, exp: u32) -> Dyadic {
        match m {
            Mant::Small(s) => Dyadic::from_i128_exp(*s as i128, exp),
            Mant::Big(b) => Dyadic::from_bigint_exp((**b).clone(), exp),
        }
    }

    /// `Some(k)` when `self == 2^k`.
    pub fn log2_exact(&self) -> Option<i64> {
        let num = self.numerator();
        if num.sign() != Sign::Plus {
            return None;
        }
        let tz = num.trailing_zeros()?;
        if num.bits() != tz + 1 {
            return None;
        }
        Some(tz as i64 - self.exp as i64)
    }

    /// Smallest power of two `>= self`; requires `self > 0`.
    #[must_use]
    pub fn pow2_ceil(&self) -> Dyadic {
        assert!(self.is_positive(), "pow2_ceil of a non-positive value");
        let num = self.numerator();
        let bits = num.bits() as i64;
        let is_pow2 = num.trailing_zeros() == Some(bits as u64 - 1);
        let k = if is_pow2 { bits - 1 } else { bits } - self.exponent() as i64;
        Dyadic::pow2(k)
    }

    pub fn is_integer(&self) -> bool {
        self.exp == 0
    }

    /// Largest integer `<= self`.
    pub fn floor(&self) -> BigInt {
        match &self.mant {
            Mant::Small(s) => {
                if self.exp >= 64 {
                    BigInt::from(if *s < 0 { -1 } else { 0 })
                } else {
                    BigInt::from(*s >> self.exp)
                }
            }
            Mant::Big(b) => (**b).clone() >> self.exp,
        }
    }

    /// Smallest integer `>= self`.
    pub fn ceil(&self) -> BigInt {
        let f = self.floor();
        if self.is_integer() {
            f
        } else {
            f + 1
        }
    }

    /// Machine integer value if `self` is an integer that fits.
    pub fn to_i64(&self) -> Option<i64> {
        match (&self.mant, self.exp) {
            (Mant::Small(s), 0) => Some(*s),
            _ => None,
        }
    }

    /// Round up to a multiple of `2^-bits`.
    #[must_use]
    pub fn round_up(&self, bits: u32) -> Dyadic {
        if self.exp <= bits {
            return self.clone();
        }
        Dyadic::from_bigint_exp(self.mul_pow2(bits as i64).ceil(), bits)
    }

    /// Round down to a multiple of `2^-bits`.
    #[must_use]
    pub fn round_down(&self, bits: u32) -> Dyadic {
        if self.exp <= bits {
            return self.clone();
        }
        Dyadic::from_bigint_exp(self.mul_pow2(bits as i64).floor(), bits)
    }

    /// Exact conversion; `None` for NaN and infinities.
    pub fn from_f64(x: f64) -> Option<Dyadic> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Dyadic::zero());
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let ef = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if ef == 0 { (frac, -1074i64) } else { (frac | (1u64 << 52), ef - 1075) };
        let m = if neg { -(m as i128) } else { m as i128 };
        if e >= 0 {
            Some(Dyadic::from_i128_exp(m, 0).mul_pow2(e))
        } else {
            Some(Dyadic::from_i128_exp(m, (-e) as u32))
        }
    }

    /// Round-to-nearest conversion to `f64`.
    pub fn to_f64(&self) -> f64 {
        match &self.mant {
            Mant::Small(s) => scale2(*s as f64, -(self.exp as i64)),
            Mant::Big(b) => {
                let neg = b.sign() == Sign::Minus;
                let mag = b.magnitude();
                let bits = mag.bits();
                let (top, shift) = if bits > 64 {
                    let sh = bits - 64;
                    let top = (mag >> sh).to_u64().unwrap_or(u64::MAX);
                    let sticky = mag.trailing_zeros().is_some_and(|t| t < sh);
                    (top | sticky as u64, sh as i64)
                } else {
                    (mag.to_u64().unwrap_or(0), 0)
                };
                let v = scale2(top as f64, shift - self.exp as i64);
                if neg {
                    -v
                } else {
                    v
                }
            }
        }
    }

    /// `Some(x)` when the conversion to `f64` is exact.
    pub fn to_f64_exact(&self) -> Option<f64> {
        let v = self.to_f64();
        match Dyadic::from_f64(v) {
            Some(back) if &back == self => Some(v),
            _ => None,
        }
    }

    /// `min(self, other)` by value.
    pub fn min_of(&self, other: &Dyadic) -> Dyadic {
        if self <= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    /// `max(self, other)` by value.
    pub fn max_of(&self, other: &Dyadic) -> Dyadic {
        if self >= other {
            self.clone()
        } else {
            other.clone()
        }
    }

    fn add_impl(&self, other: &Dyadic, negate_other: bool) -> Dyadic {
        let e = self.exp.max(other.exp);
        if let (Mant::Small(a), Mant::Small(b)) = (&self.mant, &other.mant) {
            let sa = e - self.exp;
            let sb = e - other.exp;
            if sa <= 62 && sb <= 62 {
                let x = (*a as i128) << sa;
                let y = (*b as i128) << sb;
                return Dyadic::from_i128_exp(if negate_other { x - y } else { x + y }, e);
            }
        }
        let x = self.numerator() << (e - self.exp) as u64;
        let y = other.numerator() << (e - other.exp) as u64;
        Dyadic::from_bigint_exp(if negate_other { x - y } else { x + y }, e)
    }

    fn mul_impl(&self, other: &Dyadic) -> Dyadic {
        let e = self.exp.checked_add(other.exp).expect("exponent overflow");
        match (&self.mant, &other.mant) {
            (Mant::Small(a), Mant::Small(b)) => Dyadic::from_i128_exp(*a as i128 * *b as i128, e),
            _ => Dyadic::from_bigint_exp(self.numerator() * other.numerator(), e),
        }
    }
}

fn scale2(x: f64, k: i64) -> f64 {
    let k = k.clamp(-100_000, 100_000) as i32;
    // Two steps keep intermediate scaling finite for large |k|.
    let half = k / 2;
    libm::scalbn(libm::scalbn(x, half), k - half)
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Dyadic) -> Ordering {
        if let (Mant::Small(a), Mant::Small(b)) = (&self.mant, &other.mant) {
            let e = self.exp.max(other.exp);
            let sa = e - self.exp;
            let sb = e - other.exp;
            if sa <= 62 && sb <= 62 {
                return ((*a as i128) << sa).cmp(&((*b as i128) << sb));
            }
        }
        let sa = self.signum();
        let sb = other.signum();
        if sa != sb {
            return sa.cmp(&sb);
        }
        self.add_impl(other, true).signum().cmp(&0)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Dyadic) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        match &self.mant {
            Mant::Small(s) => match s.checked_neg() {
                Some(n) => Dyadic { mant: Mant::Small(n), exp: self.exp },
                None => Dyadic::from_bigint_exp(-BigInt::from(*s), self.exp),
            },
            Mant::Big(b) => Dyadic::from_bigint_exp(-(**b).clone(), self.exp),
        }
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        -&self
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr, $atr:ident, $am:ident) => {
        impl $tr<&Dyadic> for &Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: &Dyadic) -> Dyadic {
                $body(self, rhs)
            }
        }
        impl $tr<Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: Dyadic) -> Dyadic {
                $body(&self, &rhs)
            }
        }
        impl $tr<&Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: &Dyadic) -> Dyadic {
                $body(&self, rhs)
            }
        }
        impl $tr<Dyadic> for &Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: Dyadic) -> Dyadic {
                $body(self, &rhs)
            }
        }
        impl $atr<&Dyadic> for Dyadic {
            fn $am(&mut self, rhs: &Dyadic) {
                *self = $body(&*self, rhs);
            }
        }
        impl $atr<Dyadic> for Dyadic {
            fn $am(&mut self, rhs: Dyadic) {
                *self = $body(&*self, &rhs);
            }
        }
    };
}

binop!(Add, add, |a: &Dyadic, b: &Dyadic| a.add_impl(b, false), AddAssign, add_assign);
binop!(Sub, sub, |a: &Dyadic, b: &Dyadic| a.add_impl(b, true), SubAssign, sub_assign);
binop!(Mul, mul, |a: &Dyadic, b: &Dyadic| a.mul_impl(b), MulAssign, mul_assign);

impl From<i64> for Dyadic {
    fn from(n: i64) -> Dyadic {
        Dyadic::from_int(n)
    }
}

impl From<i32> for Dyadic {
    fn from(n: i32) -> Dyadic {
        Dyadic::from_int(n as i64)
    }
}

impl From<u32> for Dyadic {
    fn from(n: u32) -> Dyadic {
        Dyadic::from_int(n as i64)
    }
}

impl From<u64> for Dyadic {
    fn from(n: u64) -> Dyadic {
        Dyadic::from_i128_exp(n as i128, 0)
    }
}

impl From<BigInt> for Dyadic {
    fn from(n: BigInt) -> Dyadic {
        Dyadic::from_bigint_exp(n, 0)
    }
}

impl fmt::Display for Dyadic {
    /// `num` for integers, `num/2^exp` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mant {
            Mant::Small(s) => write!(f, "{s}")?,
            Mant::Big(b) => write!(f, "{b}")?,
        }
        if self.exp > 0 {
            write!(f, "/2^{}", self.exp)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dyadic({self})")
    }
}

/// Parse failure for [`Dyadic::from_str`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDyadicError(pub String);

impl fmt::Display for ParseDyadicError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot parse `{}` as a dyadic rational", self.0)
    }
}

impl core::error::Error for ParseDyadicError {}

impl FromStr for Dyadic {
    type Err = ParseDyadicError;

    /// Accepts `num`, `num/2^exp` and finite decimal literals whose value is
    /// dyadic (for example `0.375`).
    fn from_str(s: &str) -> Result<Dyadic, ParseDyadicError> {
        let err = || ParseDyadicError(s.to_string());
        let t = s.trim();
        if let Some((num, den)) = t.split_once('/') {
            let num = BigInt::parse_bytes(num.trim().as_bytes(), 10).ok_or_else(err)?;
            let exp: u32 = den.trim().strip_prefix("2^").ok_or_else(err)?.parse().map_err(|_| err())?;
            return Ok(Dyadic::from_parts(num, exp));
        }
        if let Some(n) = BigInt::parse_bytes(t.as_bytes(), 10) {
            return Ok(Dyadic::from(n));
        }
        // Decimal literal: value = digits / 10^k; dyadic iff 5^k divides digits.
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = body.split_once('.').ok_or_else(err)?;
        if frac_part.is_empty() && int_part.is_empty() {
            return Err(err());
        }
        let mut digits = String::from(int_part);
        digits.push_str(frac_part);
        let mut n = BigInt::parse_bytes(digits.as_bytes(), 10).ok_or_else(err)?;
        let k = frac_part.len() as u32;
        let five = BigInt::from(5);
        for _ in 0..k {
            if !(&n % &five).is_zero() {
                return Err(err());
            }
            n /= &five;
        }
        if neg {
            n = -n;
        }
        Ok(Dyadic::from_parts(n, k))
    }
}

impl Dyadic {
    /// Absolute value of the numerator's bit length plus exponent: a cheap
    /// size measure used by callers that guard against blow-up.
    pub fn size_bits(&self) -> u64 {
        let nb = match &self.mant {
            Mant::Small(s) => 64 - s.unsigned_abs().leading_zeros() as u64,
            Mant::Big(b) => b.abs().bits(),
        };
        nb + self.exp as u64
    }
}
