//! Wiring gadgets and intrinsic values into complete approximants.
//!
//! Three constructions are provided:
//!
//! * [`assemble_lp`]: `x -> s phi_2(L(phi_1(x))) + b`, accurate outside a
//!   small trifling region and in `L^p` on the whole cube. Intrinsic
//!   parameters: the `n` coefficients of `L`, plus `s` and `b`.
//! * [`assemble_linf`]: the same pieces wrapped in `d` rounds of shifted
//!   copies and medians, accurate on the whole cube. Intrinsic parameters:
//!   `3^d n` coefficients plus `s` and `b`.
//! * [`assemble_three_param`]: the coefficients are packed into a single
//!   number `v` and unpacked by a fixed staircase; products `a_l * t` are
//!   formed by approximate multiplication gadgets. Intrinsic parameters:
//!   `v`, `s`, `b`.
//!
//! Gadgets are glued with ReLU junctions wherever one side carries
//! intrinsic parameters, so that fixed and intrinsic values never share a
//! slot (apart from the output bias, which absorbs the fixed junction shift
//! as `b - s C`).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::{self, UNPACK_CAP_BITS};
use crate::encoder::{self, BinaryCodeTable, IntrinsicParams};
use crate::net::{compose, parallel, ExactEvaluator, FloatEvaluator, InputBox, Interval, Junction, LayerBuilder, ParamOrigin};
use crate::targets::TargetFunction;
use crate::{Dyadic, Error, ReluNetwork, Result, ShapeAudit};

/// Which construction produced an approximant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theorem {
    Lp { p: u32 },
    Linf,
    ThreeParam { eps: f64 },
}

impl Theorem {
    pub fn name(&self) -> &'static str {
        match self {
            Theorem::Lp { .. } => "lp",
            Theorem::Linf => "linf",
            Theorem::ThreeParam { .. } => "three-param",
        }
    }
}

/// Audit of a named sub-network, with its parameter budget where one is
/// stated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartAudit {
    pub name: String,
    pub audit: ShapeAudit,
    pub budget: Option<u64>,
}

impl PartAudit {
    /// Budget check on the structural (nonzero) parameter count.
    pub fn within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.audit.nonzero_params <= b)
    }

    /// Budget check on the dense slot count.
    pub fn dense_within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.audit.total_params <= b)
    }
}

/// Extra data of the three-parameter construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeParamInfo {
    /// Input range `M` of the multipliers.
    pub range: Dyadic,
    /// Power of two `M^ >= M` used for scaling.
    pub scale: Dyadic,
    /// Depth of each squaring gadget.
    pub r: u32,
    /// Guaranteed multiplier error `M^2 2^(-2r-1)`.
    pub mult_bound: Dyadic,
    /// False when the coefficients are unpacked outside the network.
    pub pure_network: bool,
}

/// A finished approximant.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximant {
    pub theorem: Theorem,
    pub target_id: String,
    pub d: usize,
    pub n: u32,
    /// Ramp width of the step functions.
    pub delta: Dyadic,
    pub net: ReluNetwork,
    pub params: IntrinsicParams,
    pub table: BinaryCodeTable,
    pub parts: Vec<PartAudit>,
    pub three_param: Option<ThreeParamInfo>,
    pub notes: Vec<String>,
}

/// Largest power of two `<= 1/(3K)`, i.e. `2^-(n+2)`.
pub fn max_delta(n: u32) -> Dyadic {
    Dyadic::pow2(-(n as i64 + 2))
}

fn ceil_log2(d: usize) -> i64 {
    (usize::BITS - (d.max(1) - 1).leading_zeros()) as i64
}

/// Ramp width for the `L^p` construction: the largest power of two with
/// `delta <= 1/(3K)` and `d K delta 2^p <= 2^(-p n)`. Independent of `f`.
pub fn lp_delta(d: usize, n: u32, p: u32) -> Dyadic {
    let quad = -(p as i64 * n as i64) - n as i64 - p as i64 - ceil_log2(d);
    Dyadic::pow2(quad.min(-(n as i64 + 2)))
}

/// Ramp width for the uniform construction: the largest power of two with
/// `delta <= 1/(3K)` and `d omega(delta) <= s 2^-n`.
pub fn linf_delta(f: &TargetFunction, s: &Dyadic, n: u32) -> Result<Dyadic> {
    let mut e = n as i64 + 2;
    let target = s.to_f64() * libm::ldexp(1.0, -(n as i32));
    if s.is_zero() {
        return Ok(Dyadic::pow2(-e));
    }
    while f.d as f64 * f.omega(libm::ldexp(1.0, -(e as i32))) > target {
        e += 1;
        if e > 1000 {
            return Err(Error::Infeasible("no ramp width satisfies the uniform-error condition".into()));
        }
    }
    Ok(Dyadic::pow2(-e))
}

fn part(name: &str, net: &ReluNetwork, budget: Option<u64>) -> PartAudit {
    PartAudit { name: name.into(), audit: net.audit(), budget }
}

fn pow2_u64(k: u64) -> Option<u64> {
    1u64.checked_shl(k as u32).filter(|_| k < 64)
}

fn notes_for(parts: &[PartAudit], params: &IntrinsicParams) -> Vec<String> {
    let mut notes = budget_notes(parts);
    if params.s.is_zero() {
        notes.push(CONSTANT_NOTE.into());
    }
    notes
}

/// Note attached to approximants of constant targets.
pub const CONSTANT_NOTE: &str = "constant target: the approximant reproduces f exactly (zero error)";

fn budget_notes(parts: &[PartAudit]) -> Vec<String> {
    parts
        .iter()
        .filter(|p| !p.dense_within_budget())
        .map(|p| format!("{}: dense slot count {} exceeds the budget {} (nonzero count {})", p.name, p.audit.total_params, p.budget.unwrap_or(0), p.audit.nonzero_params))
        .collect()
}

/// Approximant accurate in `L^p` and outside the trifling region.
pub fn assemble_lp(f: &TargetFunction, n: u32, p: u32) -> Result<Approximant> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let d = f.d;
    let norm = encoder::normalize(f)?;
    let enc = encoder::encode(f, &norm, n)?;
    let delta = lp_delta(d, n, p);
    let phi1 = blocks::build_phi1(d, n, &delta)?;
    let lin = encoder::build_linear_map(&enc.params);
    let phi2 = blocks::build_phi2(d, n)?;
    let out = encoder::build_output_affine(&enc.params.s, &enc.params.b);
    let net = compose(&out, &compose(&phi2, &compose(&lin, &phi1, Junction::Relu)?, Junction::Relu)?, Junction::Relu)?;
    let dn = d as u64 * n as u64;
    let parts = vec![
        part("phi1", &phi1, pow2_u64(dn + 4)),
        part("linear_map", &lin, None),
        part("phi2", &phi2, pow2_u64(dn + 5).map(|b| b * n as u64)),
        part("output", &out, None),
    ];
    let notes = notes_for(&parts, &enc.params);
    Ok(Approximant {
        theorem: Theorem::Lp { p },
        target_id: f.id.clone(),
        d,
        n,
        delta,
        net,
        params: enc.params,
        table: enc.table,
        parts,
        three_param: None,
        notes,
    })
}

/// Approximant accurate on the whole cube.
pub fn assemble_linf(f: &TargetFunction, n: u32) -> Result<Approximant> {
    let d = f.d;
    let norm = encoder::normalize(f)?;
    let enc = encoder::encode(f, &norm, n)?;
    let delta = linf_delta(f, &norm.s, n)?;
    let phi1 = blocks::build_phi1(d, n, &delta)?;
    let mut psi1 = phi1;
    for axis in 0..d {
        psi1 = blocks::shifted_triple(&psi1, axis, &delta)?;
    }
    let copies = 3usize.pow(d as u32);
    let lin = encoder::build_replicated_linear_map(&enc.params, copies);
    let mut psi2 = blocks::build_phi2(d, n)?;
    for _ in 0..d {
        psi2 = blocks::mid_of_three(&psi2)?;
    }
    let out = encoder::build_output_affine(&enc.params.s, &enc.params.b);
    let net = compose(&out, &compose(&psi2, &compose(&lin, &psi1, Junction::Relu)?, Junction::Relu)?, Junction::Relu)?;
    let dn = d as u64 * n as u64;
    let parts = vec![
        part("phi1", &psi1, pow2_u64(dn + 5).map(|b| b * copies as u64)),
        part("linear_map", &lin, None),
        part("phi2", &psi2, pow2_u64(dn + 8).map(|b| b * copies as u64 * n as u64)),
        part("output", &out, None),
    ];
    let notes = notes_for(&parts, &enc.params);
    Ok(Approximant {
        theorem: Theorem::Linf,
        target_id: f.id.clone(),
        d,
        n,
        delta,
        net,
        params: enc.params,
        table: enc.table,
        parts,
        three_param: None,
        notes,
    })
}

/// Options for [`assemble_three_param`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeParamConfig {
    pub eps: f64,
    /// Unpack outside the network when the staircase would exceed the cap.
    pub allow_semantic: bool,
    pub max_n: u32,
}

impl ThreeParamConfig {
    pub fn new(eps: f64) -> ThreeParamConfig {
        ThreeParamConfig { eps, allow_semantic: false, max_n: 16 }
    }
}

/// Smallest `n >= 1` with `5 lambda d^(alpha/2) 2^(-alpha n) <= eps / 2`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail the check.
pub fn three_param_n(d: usize, alpha: f64, lambda: f64, eps: f64, max_n: u32) -> Result<u32> {
    if !(eps > 0.0) || !(alpha > 0.0 && alpha <= 1.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("need eps > 0, alpha in (0,1], lambda >= 0 (got {eps}, {alpha}, {lambda})")));
    }
    (1..=max_n)
        .find(|&n| 5.0 * lambda * libm::pow(d as f64, alpha / 2.0) * libm::pow(2.0, -alpha * n as f64) <= eps / 2.0)
        .ok_or_else(|| Error::Infeasible(format!("no n <= {max_n} reaches eps = {eps}")))
}

/// Lipschitz constant of the fixed readout in each multiplier output
/// (sawtooth slope 1 times gate slope 4, weights `2^-l` summing below 1).
pub const READOUT_LIPSCHITZ: i64 = 4;

/// Smallest `r >= 1` with `4 M^2 2^(-2r-1) <= 2^-n`.
pub fn three_param_r(range: &Dyadic, n: u32) -> Result<u32> {
    let target = Dyadic::pow2(-(n as i64));
    for r in 1..=4096u32 {
        if Dyadic::from_int(READOUT_LIPSCHITZ) * blocks::mult_error_bound(range, r)? <= target {
            return Ok(r);
        }
    }
    Err(Error::Infeasible("no squaring depth reaches the multiplier budget".into()))
}

/// Three-parameter approximant with error at most `eps` outside the
/// trifling region. The target must have a Hölder modulus.
pub fn assemble_three_param(f: &TargetFunction, cfg: &ThreeParamConfig) -> Result<Approximant> {
    let d = f.d;
    let (alpha, lambda) = f.modulus.holder_params().ok_or_else(|| Error::InvalidArgument("a Hölder modulus is required".into()))?;
    let n = three_param_n(d, alpha, lambda, cfg.eps, cfg.max_n)?;
    let norm = encoder::normalize(f)?;
    let mut enc = encoder::encode(f, &norm, n)?;
    let v = encoder::pack_coefficients(&mut enc.params)?;
    let m = enc.params.m;
    let delta = max_delta(n);
    let cells = 1u64 << (d as u64 * n as u64);
    let range = Dyadic::one() + Dyadic::pow2(2 * cells as i64);
    let scale = blocks::mult_scale(&range)?;
    let r = three_param_r(&range, n)?;
    let mult_bound = blocks::mult_error_bound(&range, r)?;

    let phi1 = blocks::build_phi1(d, n, &delta)?;
    let pure = m.checked_mul(n as u64).is_some_and(|b| b <= UNPACK_CAP_BITS as u64);
    if !pure && !cfg.allow_semantic {
        return Err(Error::PackingCapExceeded {
            required_breakpoints: m.checked_mul(n as u64).filter(|&b| b < 127).map_or(u128::MAX, |b| 1u128 << b),
            cap_bits: UNPACK_CAP_BITS,
        });
    }
    let unpack = if pure { blocks::build_unpacker(m as u32, n)? } else { ReluNetwork::identity(InputBox::unit(n as usize)) };
    let branches = parallel(&[phi1.clone(), unpack.clone()])?;

    // (t, a_1, ..., a_n) -> (a_1, t, a_2, t, ..., a_n, t).
    let mut fan = LayerBuilder::new(2 * n as usize, 1 + n as usize);
    for l in 0..n as usize {
        fan.weight(2 * l, 1 + l, Dyadic::one());
        fan.weight(2 * l + 1, 0, Dyadic::one());
    }
    let fan = ReluNetwork::affine(fan.build(), InputBox(vec![Interval::unbounded(); 1 + n as usize]))?;
    let mult = blocks::build_mult_approx(&range, r)?;
    let mults = compose(&parallel(&vec![mult.clone(); n as usize])?, &fan, Junction::Merge)?;
    let phi2 = blocks::build_phi2(d, n)?;
    let fixed = compose(&phi2, &compose(&mults, &branches, Junction::Relu)?, Junction::Merge)?;

    let inner = if pure {
        // x -> (x, v) with v an intrinsic bias.
        let mut lv = LayerBuilder::new(d + 1, d);
        for i in 0..d {
            lv.weight(i, i, Dyadic::one());
        }
        lv.bias_tagged(d, v.clone(), ParamOrigin::Intrinsic);
        let lv = ReluNetwork::affine(lv.build(), InputBox::unit(d))?;
        compose(&fixed, &lv, Junction::Relu)?
    } else {
        fixed
    };
    let out = encoder::build_output_affine(&enc.params.s, &enc.params.b);
    let net = compose(&out, &inner, Junction::Relu)?;

    let dn = d as u64 * n as u64;
    let mut parts = vec![
        part("phi1", &phi1, pow2_u64(dn + 4)),
        part("unpacker", &unpack, None),
        part("multiplier", &mult, None),
        part("phi2", &phi2, pow2_u64(dn + 5).map(|b| b * n as u64)),
        part("output", &out, None),
    ];
    let mut notes = notes_for(&parts, &enc.params);
    if !pure {
        notes.push(format!("coefficients unpacked outside the network: m n = {} exceeds 2^{UNPACK_CAP_BITS} breakpoints", m * n as u64));
        parts[1].name = "unpacker (semantic)".into();
    }
    Ok(Approximant {
        theorem: Theorem::ThreeParam { eps: cfg.eps },
        target_id: f.id.clone(),
        d,
        n,
        delta,
        net,
        params: enc.params,
        table: enc.table,
        parts,
        three_param: Some(ThreeParamInfo { range, scale, r, mult_bound, pure_network: pure }),
        notes,
    })
}

impl Approximant {
    /// Audit of the whole approximant. A semantically unpacked coefficient
    /// word counts as one extra intrinsic parameter.
    pub fn audit(&self) -> ShapeAudit {
        let mut a = self.net.audit();
        if self.is_semantic() {
            a.intrinsic_params += 1;
            a.total_params += 1;
        }
        a
    }

    pub fn is_semantic(&self) -> bool {
        self.three_param.as_ref().is_some_and(|t| !t.pure_network)
    }

    /// Inputs appended to `x` when the coefficients are unpacked outside
    /// the network.
    fn semantic_inputs(&self) -> Vec<Dyadic> {
        if !self.is_semantic() {
            return Vec::new();
        }
        let v = self.params.packed_v.clone().unwrap_or_default();
        encoder::unpack_words(&v, self.params.m, self.n)
    }

    pub fn exact_evaluator(&self) -> ApproxExact {
        ApproxExact { eval: ExactEvaluator::new(&self.net), extra: self.semantic_inputs(), d: self.d }
    }

    pub fn float_evaluator(&self) -> ApproxFloat {
        let extra = self.semantic_inputs().iter().map(Dyadic::to_f64).collect();
        ApproxFloat { eval: FloatEvaluator::new(&self.net), extra, d: self.d }
    }

    /// Every slot tagged intrinsic, as `(layer, is_bias, row, col, value)`.
    pub fn intrinsic_slots(&self) -> Vec<(usize, bool, usize, usize, Dyadic)> {
        self.net
            .layers()
            .iter()
            .enumerate()
            .flat_map(|(li, l)| l.intrinsic_slots().into_iter().map(move |(b, r, c, v)| (li, b, r, c, v)))
            .collect()
    }
}

/// Exact evaluator of an [`Approximant`].
#[derive(Debug, Clone)]
pub struct ApproxExact {
    eval: ExactEvaluator,
    extra: Vec<Dyadic>,
    d: usize,
}

impl ApproxExact {
    pub fn evaluate(&self, x: &[Dyadic]) -> Result<Dyadic> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
        }
        let out = if self.extra.is_empty() {
            self.eval.evaluate(x)?
        } else {
            let mut full = x.to_vec();
            full.extend(self.extra.iter().cloned());
            self.eval.evaluate(&full)?
        };
        Ok(out.into_iter().next().unwrap())
    }
}

/// `f64` evaluator of an [`Approximant`].
#[derive(Debug, Clone)]
pub struct ApproxFloat {
    eval: FloatEvaluator,
    extra: Vec<f64>,
    d: usize,
}

impl ApproxFloat {
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
        }
        let out = if self.extra.is_empty() {
            self.eval.evaluate(x)?
        } else {
            let mut full = x.to_vec();
            full.extend_from_slice(&self.extra);
            self.eval.evaluate(&full)?
        };
        Ok(out[0])
    }

    /// Value and forward-error bound.
    pub fn evaluate_with_error(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
        }
        let (v, e) = if self.extra.is_empty() {
            self.eval.evaluate_with_error(x)?
        } else {
            let mut full = x.to_vec();
            full.extend_from_slice(&self.extra);
            self.eval.evaluate_with_error(&full)?
        };
        Ok((v[0], e[0]))
    }

    pub fn rounded(&self) -> bool {
        self.eval.rounded()
    }
}
