//! Fixed gadgets. Every parameter produced here is [`ParamOrigin::Fixed`].
//!
//! Conventions: `K = 2^n` is the number of cells per axis, `J` the largest
//! exponent handled by the power map, and all breakpoints are dyadic so the
//! gadgets are exact in [`Dyadic`] arithmetic.
//!
//! [`ParamOrigin::Fixed`]: crate::ParamOrigin::Fixed

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::net::{compose, parallel, stack, AffineLayer, InputBox, Interval, Junction, LayerBuilder};
use crate::{Dyadic, Error, ReluNetwork, Result};

/// Largest `m * n` for which the unpacking staircase is materialized.
pub const UNPACK_CAP_BITS: u32 = 20;

fn single(layers: Vec<AffineLayer>, input_box: InputBox) -> ReluNetwork {
    ReluNetwork::new(layers, input_box).expect("gadget layers are consistent")
}

fn check_pow2_count(name: &str, k: u64) -> Result<u32> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("{name} must be a power of two, got {k}")));
    }
    Ok(k.trailing_zeros())
}

/// Piecewise-linear step `g` on `[0,1]` with `K` plateaus:
/// `g = k` on `[k/K, (k+1)/K - delta]` and a ramp of width `delta` before
/// each `k/K`. Requires `K` a power of two and `delta` a power of two with
/// `0 < delta <= 1/(3K)`.
pub fn build_step(k: u64, delta: &Dyadic) -> Result<ReluNetwork> {
    let log_k = check_pow2_count("K", k)?;
    let log_delta = delta.log2_exact().ok_or_else(|| Error::InvalidDelta(format!("{delta} is not a positive power of two")))?;
    if Dyadic::from(3 * k) * delta > Dyadic::one() {
        return Err(Error::InvalidDelta(format!("{delta} exceeds 1/(3K) for K = {k}")));
    }
    let units = (2 * (k - 1)).max(1) as usize;
    let mut l0 = LayerBuilder::new(units, 1);
    let mut l1 = LayerBuilder::new(1, units);
    let slope = Dyadic::pow2(-log_delta);
    for j in 1..k {
        let idx = 2 * (j - 1) as usize;
        let knot = Dyadic::from_ratio_pow2(j as i64, log_k);
        l0.weight(idx, 0, Dyadic::one()).bias(idx, -(&knot - delta));
        l0.weight(idx + 1, 0, Dyadic::one()).bias(idx + 1, -knot);
        l1.weight(0, idx, slope.clone());
        l1.weight(0, idx + 1, -slope.clone());
    }
    if k == 1 {
        l0.weight(0, 0, Dyadic::one());
    }
    Ok(single(vec![l0.build(), l1.build()], InputBox::unit(1)))
}

/// Power map `h` with `h(j) = 4^j` for integers `1 <= j <= J`, linear in
/// between and constant `4` below `1`.
pub fn build_power_map(j_max: u64) -> Result<ReluNetwork> {
    if j_max == 0 {
        return Err(Error::InvalidArgument("power map needs J >= 1".into()));
    }
    let units = (j_max - 1).max(1) as usize;
    let mut l0 = LayerBuilder::new(units, 1);
    let mut l1 = LayerBuilder::new(1, units);
    l1.bias(0, Dyadic::from_int(4));
    for j in 1..j_max {
        let idx = (j - 1) as usize;
        l0.weight(idx, 0, Dyadic::one()).bias(idx, Dyadic::from(-(j as i64)));
        // Slope change at j: 12 at j = 1, then 3*4^j - 3*4^(j-1) = 9*4^(j-1).
        let c = if j == 1 { Dyadic::from_int(12) } else { Dyadic::from_int(9) * Dyadic::pow2(2 * (j as i64 - 1)) };
        l1.weight(0, idx, c);
    }
    if j_max == 1 {
        l0.weight(0, 0, Dyadic::one());
    }
    let hi = Dyadic::from(j_max);
    Ok(single(vec![l0.build(), l1.build()], InputBox(vec![Interval::new(Dyadic::zero(), hi)])))
}

/// `phi_1(x) = 4^rho(beta)` on the plateau of cell `beta`, where
/// `rho(beta) = 1 + sum_i beta_i K^(i-1)`.
pub fn build_phi1(d: usize, n: u32, delta: &Dyadic) -> Result<ReluNetwork> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("phi_1 needs d >= 1 and n >= 1".into()));
    }
    let k = 1u64.checked_shl(n).filter(|_| n < 63).ok_or_else(|| Error::SizeGuard(format!("K = 2^{n}")))?;
    let j_max = k.checked_pow(d as u32).ok_or_else(|| Error::SizeGuard(format!("K^d = 2^{}", d as u32 * n)))?;
    let step = build_step(k, delta)?;
    let steps = parallel(&vec![step; d])?;
    let mut rho = LayerBuilder::new(1, d);
    rho.bias(0, Dyadic::one());
    for i in 0..d {
        rho.weight(0, i, Dyadic::pow2((n as usize * i) as i64));
    }
    let rho = ReluNetwork::affine(rho.build(), InputBox(vec![Interval::unbounded(); d]))?;
    let index = compose(&rho, &steps, Junction::Merge)?;
    compose(&build_power_map(j_max)?, &index, Junction::Relu)
}

/// One tooth `1 - 2 sigma(x - 1/2) - 2 sigma(1/2 - x)` on `[0,1]`.
pub fn build_tooth() -> ReluNetwork {
    let half = Dyadic::pow2(-1);
    let mut l0 = LayerBuilder::new(2, 1);
    l0.weight(0, 0, Dyadic::one()).bias(0, -half.clone());
    l0.weight(1, 0, -Dyadic::one()).bias(1, half);
    let mut l1 = LayerBuilder::new(1, 2);
    l1.weight(0, 0, Dyadic::from_int(-2)).weight(0, 1, Dyadic::from_int(-2)).bias(0, Dyadic::one());
    single(vec![l0.build(), l1.build()], InputBox::unit(1))
}

/// Sawtooth with `4^J` teeth on `[0, 2^(2J+1)]`: zero at even integers,
/// one at odd integers. Width 2, depth `2J + 1`.
pub fn build_sawtooth(j: u64) -> Result<ReluNetwork> {
    let reps = 2 * j + 1;
    let tooth = build_tooth();
    let mut net = tooth.clone();
    for _ in 1..reps {
        net = compose(&tooth, &net, Junction::Merge)?;
    }
    let top = Dyadic::pow2(reps as i64);
    let mut scale = LayerBuilder::new(1, 1);
    scale.weight(0, 0, Dyadic::pow2(-(reps as i64)));
    let scale = ReluNetwork::affine(scale.build(), InputBox(vec![Interval::new(Dyadic::zero(), top)]))?;
    compose(&net, &scale, Junction::Merge)
}

/// Lower and upper breakpoints of [`build_gate`].
pub fn gate_breakpoints() -> (Dyadic, Dyadic) {
    (Dyadic::from_ratio_pow2(3, 3), Dyadic::from_ratio_pow2(5, 3))
}

/// Gate `4 sigma(x - 3/8) - 4 sigma(x - 5/8)`: `0` on `[0, 3/8]`, `1` on
/// `[5/8, 1]`, slope 4 in between.
pub fn build_gate() -> ReluNetwork {
    let (lo, hi) = gate_breakpoints();
    let mut l0 = LayerBuilder::new(2, 1);
    l0.weight(0, 0, Dyadic::one()).bias(0, -lo);
    l0.weight(1, 0, Dyadic::one()).bias(1, -hi);
    let mut l1 = LayerBuilder::new(1, 2);
    l1.weight(0, 0, Dyadic::from_int(4)).weight(0, 1, Dyadic::from_int(-4));
    single(vec![l0.build(), l1.build()], InputBox::unit(1))
}

/// Bit extractor `gate o sawtooth`: maps `4^j a` to the `j`-th base-4 digit
/// of `a = sum_j theta_j 4^-j` with digits in `{0,1}`. Width 2, depth
/// `2J + 2`.
pub fn build_bit_extractor(j: u64) -> Result<ReluNetwork> {
    compose(&build_gate(), &build_sawtooth(j)?, Junction::Merge)
}

/// `phi_2(y) = sum_l 2^-l extractor(y_l)` on `n` inputs.
pub fn build_phi2(d: usize, n: u32) -> Result<ReluNetwork> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("phi_2 needs d >= 1 and n >= 1".into()));
    }
    let j_max = 1u64.checked_shl(n * d as u32).filter(|_| n as u64 * (d as u64) < 63).ok_or_else(|| Error::SizeGuard(format!("K^d = 2^{}", d as u32 * n)))?;
    let ext = build_bit_extractor(j_max)?;
    let all = parallel(&vec![ext; n as usize])?;
    let mut sum = LayerBuilder::new(1, n as usize);
    for l in 0..n as usize {
        sum.weight(0, l, Dyadic::pow2(-(l as i64 + 1)));
    }
    let sum = ReluNetwork::affine(sum.build(), InputBox(vec![Interval::unbounded(); n as usize]))?;
    compose(&sum, &all, Junction::Merge)
}

/// Exact median of three reals. Width 6, depth 2.
pub fn build_mid_net() -> ReluNetwork {
    let one = Dyadic::one;
    // Hidden 1: x1+, x1-, x3+, x3-, (x2-x1)+, (x1-x2)+.
    let mut l0 = LayerBuilder::new(6, 3);
    l0.weight(0, 0, one()).weight(1, 0, -one());
    l0.weight(2, 2, one()).weight(3, 2, -one());
    l0.weight(4, 1, one()).weight(4, 0, -one());
    l0.weight(5, 0, one()).weight(5, 1, -one());
    // Hidden 2: x3+, x3-, (x3 - max12)+, (min12 - x3)+ with
    // max12 = x1 + (x2-x1)+ and min12 = x1 - (x1-x2)+.
    let mut l1 = LayerBuilder::new(4, 6);
    l1.weight(0, 2, one()).weight(0, 3, -one());
    l1.weight(1, 2, -one()).weight(1, 3, one());
    l1.weight(2, 2, one()).weight(2, 3, -one()).weight(2, 0, -one()).weight(2, 1, one()).weight(2, 4, -one());
    l1.weight(3, 0, one()).weight(3, 1, -one()).weight(3, 5, -one()).weight(3, 2, -one()).weight(3, 3, one());
    // mid = x3 - (x3 - max12)+ + (min12 - x3)+.
    let mut l2 = LayerBuilder::new(1, 4);
    l2.weight(0, 0, one()).weight(0, 1, -one()).weight(0, 2, -one()).weight(0, 3, one());
    single(vec![l0.build(), l1.build(), l2.build()], InputBox(vec![Interval::unbounded(); 3]))
}

/// Floor surrogate shift used by [`build_unpacker`]: `2^-(m n)`.
pub fn unpack_ramp(m: u32, n: u32) -> Dyadic {
    Dyadic::pow2(-((m * n) as i64))
}

/// Unpacks `v = sum_i 2^(-m(i-1)) a_i`, where each `a_i` is an `m`-bit
/// fraction in `[0,1)`, into `(a_1, ..., a_n)`.
///
/// Copy `i` is a staircase on `2^(m i) v` with unit steps whose ramps have
/// width `2^-(m n)`; `a_i = g(2^(m i) v) / 2^m - g(2^(m (i-1)) v)`.
pub fn build_unpacker(m: u32, n: u32) -> Result<ReluNetwork> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("unpacker needs m >= 1 and n >= 1".into()));
    }
    let bits = m as u64 * n as u64;
    if bits > UNPACK_CAP_BITS as u64 {
        return Err(Error::PackingCapExceeded {
            required_breakpoints: if bits < 127 { 1u128 << bits } else { u128::MAX },
            cap_bits: UNPACK_CAP_BITS,
        });
    }
    let ramp = unpack_ramp(m, n);
    let slope = Dyadic::pow2(bits as i64);
    let units: usize = (1..=n).map(|i| 2 * ((1usize << (m * i)) - 1)).sum();
    let mut l0 = LayerBuilder::new(units, 1);
    let mut l1 = LayerBuilder::new(n as usize, units);
    let mut idx = 0usize;
    for i in 1..=n {
        let scale = Dyadic::pow2((m * i) as i64);
        let to_own = &slope * Dyadic::pow2(-(m as i64));
        for l in 1..(1u64 << (m * i)) {
            let l = Dyadic::from(l);
            l0.weight(idx, 0, scale.clone()).bias(idx, -(&l - &ramp));
            l0.weight(idx + 1, 0, scale.clone()).bias(idx + 1, -l);
            let (own, next) = (i as usize - 1, i as usize);
            l1.weight(own, idx, to_own.clone()).weight(own, idx + 1, -to_own.clone());
            if next < n as usize {
                l1.weight(next, idx, -slope.clone()).weight(next, idx + 1, slope.clone());
            }
            idx += 2;
        }
    }
    Ok(single(vec![l0.build(), l1.build()], InputBox::unit(1)))
}

/// Piecewise-linear interpolant of `t^2` on the grid `2^-r Z` over `[0,1]`,
/// `t - sum_{s=1..r} T_s(t) / 4^s` with `T_s` the `s`-fold tooth. Width 3,
/// depth `r`.
pub fn build_square_approx(r: u32) -> Result<ReluNetwork> {
    if r == 0 {
        return Ok(ReluNetwork::identity(InputBox::unit(1)));
    }
    let half = Dyadic::pow2(-1);
    let one = Dyadic::one;
    let mut layers = Vec::with_capacity(r as usize + 1);
    let mut l0 = LayerBuilder::new(3, 1);
    l0.weight(0, 0, one()).bias(0, -half.clone());
    l0.weight(1, 0, -one()).bias(1, half.clone());
    l0.weight(2, 0, one());
    layers.push(l0.build());
    // Hidden state after layer s: (sigma(z - 1/2), sigma(1/2 - z), acc) with
    // z = T_{s-1}(t) and acc = t - sum_{i<s} T_i / 4^i.
    // Next z = 1 - 2u - 2w, next acc = acc - z / 4^s.
    for s in 1..=r {
        let q = Dyadic::pow2(-2 * s as i64);
        let last = s == r;
        let mut b = LayerBuilder::new(if last { 1 } else { 3 }, 3);
        let acc_row = if last { 0 } else { 2 };
        b.weight(acc_row, 2, one());
        b.weight(acc_row, 0, &q * Dyadic::from_int(2));
        b.weight(acc_row, 1, &q * Dyadic::from_int(2));
        b.bias(acc_row, -q.clone());
        if !last {
            // sigma(z - 1/2) with z - 1/2 = 1/2 - 2u - 2w.
            b.weight(0, 0, Dyadic::from_int(-2)).weight(0, 1, Dyadic::from_int(-2)).bias(0, half.clone());
            b.weight(1, 0, Dyadic::from_int(2)).weight(1, 1, Dyadic::from_int(2)).bias(1, -half.clone());
        }
        layers.push(b.build());
    }
    Ok(single(layers, InputBox::unit(1)))
}

/// Power of two `M^` actually used to scale the multiplier inputs.
pub fn mult_scale(m: &Dyadic) -> Result<Dyadic> {
    if !m.is_positive() {
        return Err(Error::InvalidArgument(format!("multiplier range must be positive, got {m}")));
    }
    Ok(m.pow2_ceil())
}

/// Guaranteed `|psi(x,y) - xy|` bound of [`build_mult_approx`]:
/// `M^2 2^(-2r-1)` with `M^` the power of two scaling.
pub fn mult_error_bound(m: &Dyadic, r: u32) -> Result<Dyadic> {
    let s = mult_scale(m)?;
    Ok(&s * &s * Dyadic::pow2(-(2 * r as i64) - 1))
}

/// Approximate product on `[-M, M]^2` by polarization with two
/// [`build_square_approx`] copies. `M` is rounded up to a power of two
/// `M^` so all scalings stay dyadic. Width 6, depth `r + 1`.
pub fn build_mult_approx(m: &Dyadic, r: u32) -> Result<ReluNetwork> {
    let s = mult_scale(m)?;
    let inv = Dyadic::pow2(-(s.log2_exact().unwrap() + 1));
    let one = Dyadic::one;
    let mut l0 = LayerBuilder::new(4, 2);
    l0.weight(0, 0, one()).weight(0, 1, one());
    l0.weight(1, 0, -one()).weight(1, 1, -one());
    l0.weight(2, 0, one()).weight(2, 1, -one());
    l0.weight(3, 0, -one()).weight(3, 1, one());
    let mut l1 = LayerBuilder::new(2, 4);
    l1.weight(0, 0, inv.clone()).weight(0, 1, inv.clone());
    l1.weight(1, 2, inv.clone()).weight(1, 3, inv);
    let abs = single(vec![l0.build(), l1.build()], InputBox::cube(2, -m.clone(), m.clone()));
    let sq = build_square_approx(r)?;
    let squares = compose(&parallel(&[sq.clone(), sq])?, &abs, Junction::Merge)?;
    let s2 = &s * &s;
    let mut out = LayerBuilder::new(1, 2);
    out.weight(0, 0, s2.clone()).weight(0, 1, -s2);
    let out = ReluNetwork::affine(out.build(), InputBox(vec![Interval::unbounded(); 2]))?;
    compose(&out, &squares, Junction::Merge)
}

/// Shared-input copies of `net` evaluated at `x - delta e_axis`, `x` and
/// `x + delta e_axis`.
pub fn shifted_triple(net: &ReluNetwork, axis: usize, delta: &Dyadic) -> Result<ReluNetwork> {
    let d = net.input_dim();
    let copies = [-delta.clone(), Dyadic::zero(), delta.clone()]
        .into_iter()
        .map(|shift| {
            let mut b = LayerBuilder::new(d, d);
            for i in 0..d {
                b.weight(i, i, Dyadic::one());
            }
            b.bias(axis, shift);
            let aff = ReluNetwork::affine(b.build(), net.input_box().clone())?;
            compose(net, &aff, Junction::Merge)
        })
        .collect::<Result<Vec<_>>>()?;
    stack(&copies)
}

/// `(y_1, y_2, y_3) -> mid(net(y_1), net(y_2), net(y_3))` for a scalar net.
pub fn mid_of_three(net: &ReluNetwork) -> Result<ReluNetwork> {
    if net.output_dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: net.output_dim() });
    }
    let three = parallel(&[net.clone(), net.clone(), net.clone()])?;
    compose(&build_mid_net(), &three, Junction::Merge)
}
