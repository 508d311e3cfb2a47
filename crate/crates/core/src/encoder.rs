//! Turning a target into intrinsic values.
//!
//! The target is first affinely normalized to `[0,1]`, then sampled at the
//! lower-left vertex of each of the `K^d` grid cells. Each sample is
//! truncated to `n` bits, and bit `l` of the sample for the cell with index
//! `j` becomes the base-4 digit `j` of the coefficient `a_l`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use crate::net::{InputBox, Interval, LayerBuilder, ParamOrigin};
use crate::targets::TargetFunction;
use crate::{Dyadic, Error, ReluNetwork, Result};

/// Bits kept when rounding the normalization constants.
pub const NORMALIZATION_BITS: u32 = 32;

/// Affine normalization `f~ = (f - b) / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub s: Dyadic,
    pub b: Dyadic,
    /// `omega(sqrt d)` as evaluated in `f64`.
    pub omega_sqrt_d: f64,
    /// True for targets with a zero modulus; then `s = 0` and `b = f(0)`.
    pub constant: bool,
}

impl Normalization {
    /// Exact `floor(2^n (F - b) / s)` together with the membership check
    /// `0 <= F - b <= s`.
    fn truncate(&self, fx: &Dyadic, n: u32) -> (BigInt, bool) {
        let diff = fx - &self.b;
        let inside = !diff.is_negative() && diff <= self.s;
        // diff = p / 2^e, s = q / 2^e' so 2^n diff / s = p 2^(n+e') / (q 2^e).
        let p = diff.numerator() << (n as u64 + self.s.exponent() as u64);
        let q = self.s.numerator() << diff.exponent() as u64;
        (p.div_floor(&q), inside)
    }

    /// `f~(x)` in `f64`, for reporting.
    pub fn tilde_f64(&self, fx: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (fx - self.b.to_f64()) / self.s.to_f64()
        }
    }
}

fn rounded_up_modulus(v: f64) -> Result<Dyadic> {
    let d = Dyadic::from_f64(v).ok_or_else(|| Error::NonFinite(format!("{v}")))?;
    if d.exponent() <= NORMALIZATION_BITS {
        return Ok(d);
    }
    Ok(Dyadic::from_f64(v.next_up()).unwrap().round_up(NORMALIZATION_BITS))
}

/// Normalization constants with `f~` in `[0,1]`:
/// `s = 2 w`, `b = f(0) - w` with `w >= omega(sqrt d)`, both rounded to
/// [`NORMALIZATION_BITS`] fractional bits (rounding only ever widens the
/// range). The result is checked on a coarse grid.
pub fn normalize(f: &TargetFunction) -> Result<Normalization> {
    let omega = f.omega(libm::sqrt(f.d as f64));
    let f0 = f.value_at_zero();
    let f0d = Dyadic::from_f64(f0).ok_or_else(|| Error::NonFinite(format!("{f0}")))?;
    if f.modulus.is_zero() || omega == 0.0 {
        return Ok(Normalization { s: Dyadic::zero(), b: f0d, omega_sqrt_d: 0.0, constant: true });
    }
    let w = rounded_up_modulus(omega)?;
    let f0_floor = f0d.round_down(NORMALIZATION_BITS);
    let mut s = &w * Dyadic::from_int(2);
    if f0_floor != f0d {
        s += Dyadic::pow2(-(NORMALIZATION_BITS as i64));
    }
    let norm = Normalization { s, b: f0_floor - w, omega_sqrt_d: omega, constant: false };
    let per_axis: usize = match f.d {
        1 => 257,
        2 => 33,
        3 => 9,
        _ => 3,
    };
    let total = per_axis.saturating_pow(f.d as u32).min(1 << 16);
    let mut x = vec![0.0; f.d];
    for idx in 0..total {
        let mut rest = idx;
        for xi in x.iter_mut() {
            *xi = (rest % per_axis) as f64 / (per_axis - 1) as f64;
            rest /= per_axis;
        }
        check_unit(&norm, f.eval(&x), idx)?;
    }
    Ok(norm)
}

/// Tolerance for `f64` noise in the `[0,1]` membership check.
const MEMBERSHIP_SLACK: f64 = 1.0 / (1u64 << 30) as f64;

fn check_unit(norm: &Normalization, fx: f64, index: usize) -> Result<()> {
    let t = norm.tilde_f64(fx);
    if !t.is_finite() || !(-MEMBERSHIP_SLACK..=1.0 + MEMBERSHIP_SLACK).contains(&t) {
        return Err(Error::ModulusViolation { index, value: format!("{t}") });
    }
    Ok(())
}

/// `rho(beta) = 1 + sum_i beta_i K^(i-1)` with `K = 2^n`.
pub fn rho(beta: &[u64], n: u32) -> u64 {
    1 + beta.iter().enumerate().map(|(i, &b)| b << (n as usize * i)).sum::<u64>()
}

/// Inverse of [`rho`].
pub fn beta_of_rho(j: u64, d: usize, n: u32) -> Vec<u64> {
    let mask = (1u64 << n) - 1;
    (0..d).map(|i| ((j - 1) >> (n as usize * i)) & mask).collect()
}

/// `n`-bit codes `xi_beta`, indexed by `rho(beta) - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodeTable {
    pub d: usize,
    pub n: u32,
    pub codes: Vec<u64>,
}

impl BinaryCodeTable {
    pub fn code(&self, beta: &[u64]) -> u64 {
        self.codes[(rho(beta, self.n) - 1) as usize]
    }

    /// Bit `l` (1-based, most significant first) of the code at index `j`.
    pub fn bit(&self, j: u64, l: u32) -> bool {
        (self.codes[(j - 1) as usize] >> (self.n - l)) & 1 == 1
    }

    /// `xi / 2^n` as a dyadic value.
    pub fn value(&self, beta: &[u64]) -> Dyadic {
        Dyadic::from_ratio_pow2(self.code(beta) as i64, self.n)
    }
}

/// Everything target-dependent in an approximant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntrinsicParams {
    pub s: Dyadic,
    pub b: Dyadic,
    /// `a_l = sum_j theta_{j,l} 4^-j`, one per bit plane.
    pub a: Vec<Dyadic>,
    pub n: u32,
    /// Bits per coefficient, `2 K^d`.
    pub m: u64,
    /// `sum_i 2^(-m(i-1)) a_i` when the coefficients are packed.
    pub packed_v: Option<Dyadic>,
}

impl IntrinsicParams {
    /// Checks `a_l` in `[0, 1/3)` and `2^m a_l` integral.
    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.n as usize {
            return Err(Error::DimensionMismatch { expected: self.n as usize, found: self.a.len() });
        }
        for (l, a) in self.a.iter().enumerate() {
            if a.is_negative() || Dyadic::from_int(3) * a >= Dyadic::one() {
                return Err(Error::InvalidArgument(format!("a_{} = {a} outside [0, 1/3)", l + 1)));
            }
            if (a.exponent() as u64) > self.m {
                return Err(Error::InvalidArgument(format!("a_{} = {a} needs more than {} bits", l + 1, self.m)));
            }
        }
        Ok(())
    }

    /// All intrinsic scalars in network order: `a_1..a_n, s, b`.
    pub fn values(&self) -> Vec<Dyadic> {
        let mut v = self.a.clone();
        v.push(self.s.clone());
        v.push(self.b.clone());
        v
    }
}

/// Result of [`encode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub table: BinaryCodeTable,
    pub params: IntrinsicParams,
    /// Samples whose normalized value fell (within tolerance) outside
    /// `[0,1]` and were clamped.
    pub clamped: usize,
}

/// Guard against materializing absurd grids.
pub const MAX_GRID_BITS: u32 = 24;

/// Samples `f` on the `K^d` cell vertices and builds the bit planes.
pub fn encode(f: &TargetFunction, norm: &Normalization, n: u32) -> Result<Encoding> {
    let d = f.d;
    let dn = d as u64 * n as u64;
    if n == 0 || n > 62 {
        return Err(Error::InvalidArgument(format!("n = {n} must lie in 1..=62")));
    }
    if dn > MAX_GRID_BITS as u64 {
        return Err(Error::SizeGuard(format!("K^d = 2^{dn} cells exceeds 2^{MAX_GRID_BITS}")));
    }
    let cells = 1u64 << dn;
    let k = 1u64 << n;
    let max_code = k - 1;
    let mut codes = Vec::with_capacity(cells as usize);
    let mut clamped = 0usize;
    let mut x = vec![0.0; d];
    for j in 1..=cells {
        let beta = beta_of_rho(j, d, n);
        for (xi, b) in x.iter_mut().zip(&beta) {
            *xi = *b as f64 / k as f64;
        }
        if norm.constant {
            codes.push(0);
            continue;
        }
        let fx = f.eval(&x);
        check_unit(norm, fx, (j - 1) as usize)?;
        let fxd = Dyadic::from_f64(fx).ok_or_else(|| Error::NonFinite(format!("{fx}")))?;
        let (q, inside) = norm.truncate(&fxd, n);
        if !inside {
            clamped += 1;
        }
        let q = if q.sign() == num_bigint::Sign::Minus { 0 } else { q.to_u64().unwrap_or(u64::MAX).min(max_code) };
        codes.push(q);
    }
    let table = BinaryCodeTable { d, n, codes };
    let m = 2 * cells;
    let a = (1..=n).map(|l| coefficient(&table, l)).collect();
    let params = IntrinsicParams { s: norm.s.clone(), b: norm.b.clone(), a, n, m, packed_v: None };
    Ok(Encoding { table, params, clamped })
}

/// `a_l = sum_j theta_{j,l} 4^-j` from bit plane `l`.
fn coefficient(table: &BinaryCodeTable, l: u32) -> Dyadic {
    let cells = table.codes.len() as u64;
    let mut num = BigUint::zero();
    for j in 1..=cells {
        if table.bit(j, l) {
            num.set_bit(2 * (cells - j), true);
        }
    }
    Dyadic::from_parts(BigInt::from(num), (2 * cells) as u32)
}

/// Base-4 digit `j` (in `{0,1}` for valid coefficients) of `a`.
pub fn digit(a: &Dyadic, j: u64) -> u64 {
    let shifted = a.mul_pow2(2 * j as i64).floor();
    (shifted % 4u32).to_u64().unwrap_or(0)
}

/// `v = sum_i 2^(-m(i-1)) a_i` for `m`-bit words `a_i` in `[0,1)`.
pub fn pack_words(a: &[Dyadic], m: u64) -> Result<Dyadic> {
    let mut v = Dyadic::zero();
    for (i, ai) in a.iter().enumerate() {
        if ai.is_negative() || *ai >= Dyadic::one() || ai.exponent() as u64 > m {
            return Err(Error::InvalidArgument(format!("word {} = {ai} is not an {m}-bit fraction in [0,1)", i + 1)));
        }
        v += ai.mul_pow2(-((m * i as u64) as i64));
    }
    Ok(v)
}

/// Packs the coefficients of `params` into `packed_v`.
pub fn pack_coefficients(params: &mut IntrinsicParams) -> Result<Dyadic> {
    let v = pack_words(&params.a, params.m)?;
    params.packed_v = Some(v.clone());
    Ok(v)
}

/// Reference unpacking: `a_i = floor(2^(m i) v) / 2^m - floor(2^(m(i-1)) v)`.
pub fn unpack_words(v: &Dyadic, m: u64, n: u32) -> Vec<Dyadic> {
    let fl = |k: u64| Dyadic::from(v.mul_pow2(k as i64).floor());
    (1..=n as u64).map(|i| fl(m * i).mul_pow2(-(m as i64)) - fl(m * (i - 1))).collect()
}

/// `t -> (a_1 t, ..., a_n t)` with intrinsic weights.
pub fn build_linear_map(params: &IntrinsicParams) -> ReluNetwork {
    build_replicated_linear_map(params, 1)
}

/// `copies` disjoint copies of [`build_linear_map`].
pub fn build_replicated_linear_map(params: &IntrinsicParams, copies: usize) -> ReluNetwork {
    let n = params.a.len();
    let mut b = LayerBuilder::new(copies * n, copies);
    for c in 0..copies {
        for (l, a) in params.a.iter().enumerate() {
            b.weight_tagged(c * n + l, c, a.clone(), ParamOrigin::Intrinsic);
        }
    }
    ReluNetwork::affine(b.build(), InputBox(vec![Interval::unbounded(); copies])).expect("linear map layer is consistent")
}

/// `y -> s y + b` with both parameters intrinsic.
pub fn build_output_affine(s: &Dyadic, b: &Dyadic) -> ReluNetwork {
    let mut l = LayerBuilder::new(1, 1);
    l.weight_tagged(0, 0, s.clone(), ParamOrigin::Intrinsic);
    l.bias_tagged(0, b.clone(), ParamOrigin::Intrinsic);
    ReluNetwork::affine(l.build(), InputBox(vec![Interval::unbounded()])).expect("output layer is consistent")
}
