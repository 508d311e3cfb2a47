//! Measuring approximants against closed-form error bounds.
//!
//! Measurements run over deterministic grids (or seeded random samples) and
//! are parallelized through the [`PointMap`] trait; [`Sequential`] is the
//! built-in implementation. Bounds are evaluated in `f64`. In exact mode
//! errors are compared exactly against the bound; in float mode a margin of
//! [`FLOAT_MARGIN`] is allowed.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembler::{Approximant, PartAudit, Theorem};
use crate::blocks;
use crate::net::ExactEvaluator;
use crate::targets::{Modulus, TargetFunction};
use crate::{Dyadic, Error, Result, ShapeAudit};

/// Slack for comparisons of `f64` measurements.
pub const FLOAT_MARGIN: f64 = 1.0 / (1u64 << 40) as f64;

/// Index-parallel map; implementations must preserve order.
pub trait PointMap: Sync {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded [`PointMap`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PointMap for Sequential {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

/// The union of slabs `x_i in (k/K - delta, k/K)`, `k = 1..K-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriflingRegion {
    pub d: usize,
    pub n: u32,
    pub delta: Dyadic,
}

impl TriflingRegion {
    pub fn new(d: usize, n: u32, delta: Dyadic) -> TriflingRegion {
        TriflingRegion { d, n, delta }
    }

    pub fn of(approx: &Approximant) -> TriflingRegion {
        TriflingRegion::new(approx.d, approx.n, approx.delta.clone())
    }

    fn coord_inside(&self, x: &Dyadic) -> bool {
        let t = x.mul_pow2(self.n as i64);
        if t.is_integer() {
            return false;
        }
        let k = t.ceil();
        let kk = match k.to_u64() {
            Some(v) => v,
            None => return false,
        };
        if kk == 0 || kk >= (1u64 << self.n) {
            return false;
        }
        let knot = Dyadic::from(kk).mul_pow2(-(self.n as i64));
        *x > knot - &self.delta
    }

    pub fn contains(&self, x: &[Dyadic]) -> bool {
        x.iter().any(|c| self.coord_inside(c))
    }

    pub fn contains_f64(&self, x: &[f64]) -> bool {
        x.iter().any(|&c| Dyadic::from_f64(c).is_some_and(|v| self.coord_inside(&v)))
    }

    /// Upper bound `d K delta` on the Lebesgue measure.
    pub fn measure_bound(&self) -> Dyadic {
        Dyadic::from(self.d as u64).mul_pow2(self.n as i64) * &self.delta
    }
}

/// Sampling grid on `[0,1]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// `per_cell` points per axis inside each of the `K` cells, at offsets
    /// `(i + 1/2) / per_cell`. `per_cell` must be a power of two.
    CellInterior { per_cell: u64 },
    /// `points` equispaced points per axis including both ends; `points - 1`
    /// must be a power of two.
    Equispaced { points: u64 },
}

impl Grid {
    fn axis(&self, n: u32) -> Result<(u64, Vec<Dyadic>)> {
        match *self {
            Grid::CellInterior { per_cell } => {
                if !per_cell.is_power_of_two() {
                    return Err(Error::InvalidArgument(format!("points per cell must be a power of two, got {per_cell}")));
                }
                let total = per_cell << n;
                let e = total.trailing_zeros() + 1;
                Ok((total, (0..total).map(|i| Dyadic::from_ratio_pow2((2 * i + 1) as i64, e)).collect()))
            }
            Grid::Equispaced { points } => {
                if points < 2 || !(points - 1).is_power_of_two() {
                    return Err(Error::InvalidArgument(format!("equispaced grids need 2^k + 1 points, got {points}")));
                }
                let e = (points - 1).trailing_zeros();
                Ok((points, (0..points).map(|i| Dyadic::from_ratio_pow2(i as i64, e)).collect()))
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Grid::CellInterior { per_cell } => format!("cell-interior, {per_cell} per cell per axis"),
            Grid::Equispaced { points } => format!("equispaced, {points} per axis"),
        }
    }

    /// Materialized tensor grid.
    pub fn points(&self, d: usize, n: u32) -> Result<GridPoints> {
        let (per_axis, axis) = self.axis(n)?;
        let count = (per_axis as u128).checked_pow(d as u32).filter(|&c| c <= (1u128 << 32)).ok_or_else(|| Error::SizeGuard(format!("{per_axis}^{d} grid points")))?;
        Ok(GridPoints { d, per_axis: per_axis as usize, axis, count: count as usize })
    }
}

/// Tensor-product grid with lazy point construction.
#[derive(Debug, Clone)]
pub struct GridPoints {
    d: usize,
    per_axis: usize,
    axis: Vec<Dyadic>,
    count: usize,
}

impl GridPoints {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn point(&self, mut idx: usize) -> Vec<Dyadic> {
        let mut x = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            x.push(self.axis[idx % self.per_axis].clone());
            idx /= self.per_axis;
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    #[default]
    Exact,
    Float,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Exact => "exact",
            EvalMode::Float => "float",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Full,
    OutsideTrifling,
}

/// Largest observed `|approx(x) - f(x)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupMeasurement {
    pub value: f64,
    /// Exact value in exact mode.
    pub exact: Option<Dyadic>,
    pub argmax: Vec<f64>,
    pub points: usize,
    pub skipped: usize,
    /// Largest forward-error bound of the float evaluations (0 in exact mode).
    pub float_error: f64,
}

enum PointErr {
    Skipped,
    Exact(Dyadic),
    Float(f64, f64),
}

/// Sup-norm error over a grid.
pub fn measure_sup<P: PointMap>(approx: &Approximant, f: &TargetFunction, grid: &Grid, region: Region, mode: EvalMode, pm: &P) -> Result<SupMeasurement> {
    let pts = grid.points(approx.d, approx.n)?;
    let omega = TriflingRegion::of(approx);
    let exact = (mode == EvalMode::Exact).then(|| approx.exact_evaluator());
    let float = (mode == EvalMode::Float).then(|| approx.float_evaluator());
    let results: Vec<Result<PointErr>> = pm.map(pts.len(), |i| {
        let x = pts.point(i);
        if region == Region::OutsideTrifling && omega.contains(&x) {
            return Ok(PointErr::Skipped);
        }
        let xf: Vec<f64> = x.iter().map(Dyadic::to_f64).collect();
        let fx = f.eval(&xf);
        match (&exact, &float) {
            (Some(ev), _) => {
                let fxd = Dyadic::from_f64(fx).ok_or_else(|| Error::NonFinite(format!("{fx}")))?;
                Ok(PointErr::Exact((ev.evaluate(&x)? - fxd).abs()))
            }
            (_, Some(ev)) => {
                let (v, e) = ev.evaluate_with_error(&xf)?;
                Ok(PointErr::Float((v - fx).abs(), e))
            }
            _ => unreachable!(),
        }
    });
    let mut best: Option<(usize, PointErr)> = None;
    let mut skipped = 0;
    let mut float_error: f64 = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        let better = match (&r, &best) {
            (PointErr::Skipped, _) => {
                skipped += 1;
                false
            }
            (_, None) => true,
            (PointErr::Exact(a), Some((_, PointErr::Exact(b)))) => a > b,
            (PointErr::Float(a, _), Some((_, PointErr::Float(b, _)))) => a > b,
            _ => false,
        };
        if let PointErr::Float(_, e) = &r {
            float_error = float_error.max(*e);
        }
        if better {
            best = Some((i, r));
        }
    }
    let (value, exact_value, argmax) = match best {
        None => (0.0, None, Vec::new()),
        Some((i, PointErr::Exact(v))) => (v.to_f64(), Some(v), pts.point(i).iter().map(Dyadic::to_f64).collect()),
        Some((i, PointErr::Float(v, _))) => (v, None, pts.point(i).iter().map(Dyadic::to_f64).collect()),
        Some((_, PointErr::Skipped)) => unreachable!(),
    };
    Ok(SupMeasurement { value, exact: exact_value, argmax, points: pts.len() - skipped, skipped, float_error })
}

/// `L^p` error estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LpMeasurement {
    pub p: u32,
    /// Midpoint rule on the cell-interior grid.
    pub quadrature: f64,
    pub quadrature_points: usize,
    pub monte_carlo: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub mc_samples: usize,
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn pow_p(e: f64, p: u32) -> f64 {
    libm::pow(e, p as f64)
}

/// Quadrature (and optional Monte Carlo) `L^p` error on the whole cube.
#[allow(clippy::too_many_arguments)]
pub fn measure_lp<P: PointMap>(approx: &Approximant, f: &TargetFunction, p: u32, per_cell: u64, mc_samples: usize, seed: u64, mode: EvalMode, pm: &P) -> Result<LpMeasurement> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let pts = Grid::CellInterior { per_cell }.points(approx.d, approx.n)?;
    let exact = (mode == EvalMode::Exact).then(|| approx.exact_evaluator());
    let float = approx.float_evaluator();
    let err_at = |x: &[Dyadic], xf: &[f64]| -> Result<f64> {
        let fx = f.eval(xf);
        match &exact {
            Some(ev) => {
                let fxd = Dyadic::from_f64(fx).ok_or_else(|| Error::NonFinite(format!("{fx}")))?;
                Ok((ev.evaluate(x)? - fxd).abs().to_f64())
            }
            None => Ok((float.evaluate(xf)? - fx).abs()),
        }
    };
    let vals: Vec<Result<f64>> = pm.map(pts.len(), |i| {
        let x = pts.point(i);
        let xf: Vec<f64> = x.iter().map(Dyadic::to_f64).collect();
        err_at(&x, &xf).map(|e| pow_p(e, p))
    });
    let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean = pairwise_sum(&vals) / vals.len() as f64;
    let quadrature = libm::pow(mean, 1.0 / p as f64);

    let (monte_carlo, mc_stderr) = if mc_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Vec<f64>> = (0..mc_samples).map(|_| (0..approx.d).map(|_| rng.gen::<f64>()).collect()).collect();
        let vals: Vec<Result<f64>> = pm.map(mc_samples, |i| {
            let xf = &samples[i];
            let x: Vec<Dyadic> = xf.iter().map(|&v| Dyadic::from_f64(v).unwrap()).collect();
            err_at(&x, xf).map(|e| pow_p(e, p))
        });
        let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
        let mean = pairwise_sum(&vals) / mc_samples as f64;
        let dev: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if mc_samples > 1 { pairwise_sum(&dev) / (mc_samples - 1) as f64 } else { 0.0 };
        let se_mean = libm::sqrt(var / mc_samples as f64);
        let est = libm::pow(mean, 1.0 / p as f64);
        let se = if mean > 0.0 { se_mean * libm::pow(mean, 1.0 / p as f64 - 1.0) / p as f64 } else { 0.0 };
        (Some(est), Some(se))
    } else {
        (None, None)
    };
    Ok(LpMeasurement { p, quadrature, quadrature_points: pts.len(), monte_carlo, mc_stderr, mc_samples })
}

/// `omega(sqrt(d) 2^-n) + 2^(-n+2) omega(sqrt d)`.
pub fn bound_general(modulus: &Modulus, d: usize, n: u32) -> f64 {
    let sd = libm::sqrt(d as f64);
    modulus.eval(sd * libm::ldexp(1.0, -(n as i32))) + libm::ldexp(1.0, 2 - n as i32) * modulus.eval(sd)
}

/// `5 lambda d^(alpha/2) 2^(-alpha n)`.
pub fn bound_holder(d: usize, n: u32, alpha: f64, lambda: f64) -> f64 {
    5.0 * lambda * libm::pow(d as f64, alpha / 2.0) * libm::pow(2.0, -alpha * n as f64)
}

/// Error bound off the trifling region in original units:
/// `s (omega_~(sqrt(d) 2^-n) + 2^-n) = omega(sqrt(d) 2^-n) + s 2^-n`.
pub fn bound_outside(modulus: &Modulus, s: &Dyadic, d: usize, n: u32) -> f64 {
    let h = libm::ldexp(1.0, -(n as i32));
    modulus.eval(libm::sqrt(d as f64) * h) + s.to_f64() * h
}

/// Headline bound of a construction.
pub fn theorem_bound(theorem: &Theorem, d: usize, n: u32, modulus: &Modulus) -> f64 {
    match theorem {
        Theorem::Lp { .. } | Theorem::Linf => bound_general(modulus, d, n),
        Theorem::ThreeParam { eps } => *eps,
    }
}

/// One pass/fail comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Measurement settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CertConfig {
    pub grid: Grid,
    /// Points per cell per axis for the quadrature rule.
    pub lp_per_cell: u64,
    pub mc_samples: usize,
    pub seed: u64,
    pub mode: EvalMode,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig { grid: Grid::CellInterior { per_cell: 64 }, lp_per_cell: 64, mc_samples: 0, seed: 0, mode: EvalMode::Exact }
    }
}

/// Everything [`certify`] found out.
#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub theorem: Theorem,
    pub target: String,
    pub d: usize,
    pub n: u32,
    pub delta: Dyadic,
    pub mode: EvalMode,
    pub grid: Grid,
    pub sup_outside: Option<SupMeasurement>,
    pub sup_full: Option<SupMeasurement>,
    pub lp: Option<LpMeasurement>,
    pub bound: f64,
    pub bound_outside: f64,
    pub checks: Vec<Check>,
    pub audit: ShapeAudit,
    pub parts: Vec<PartAudit>,
    pub float_rounded: bool,
    pub notes: Vec<String>,
    pub pass: bool,
    /// Wall-clock time, filled in by callers that can measure it.
    pub runtime_ms: Option<u64>,
}

fn sup_check(name: &str, m: &SupMeasurement, bound: f64) -> Check {
    let pass = match &m.exact {
        Some(v) => Dyadic::from_f64(bound).is_some_and(|b| *v <= b),
        None => m.value <= bound + FLOAT_MARGIN,
    };
    Check { name: name.into(), measured: m.value, bound, pass }
}

/// Points per axis of the multiplier grid used by [`certify`].
pub const MULT_GRID_POINTS: u64 = 65;

/// Measured multiplier error on a `points x points` grid over
/// `[0, a_max] x [4, 4^J]` against the guaranteed bound, where `J = K^d`
/// and `a_max = sum_{j<=J} 4^-j` is the largest possible coefficient.
pub fn multiplier_check<P: PointMap>(approx: &Approximant, points: u64, pm: &P) -> Result<Check> {
    let info = approx.three_param.as_ref().ok_or_else(|| Error::InvalidArgument("not a three-parameter approximant".into()))?;
    let mult = blocks::build_mult_approx(&info.range, info.r)?;
    let ev = ExactEvaluator::new(&mult);
    let t_max = &info.range - Dyadic::one();
    let steps = points.max(2) - 1;
    let cells = approx.params.m / 2;
    let a_max = largest_coefficient(cells);
    let four = Dyadic::from_int(4);
    let total = (points * points) as usize;
    let errs: Vec<Result<Dyadic>> = pm.map(total, |k| {
        let (i, j) = ((k as u64) % points, (k as u64) / points);
        let a = exact_div(&(&a_max * Dyadic::from(i)), steps);
        let t = &four + exact_div(&((&t_max - &four) * Dyadic::from(j)), steps);
        let out = ev.evaluate(&[a.clone(), t.clone()])?;
        Ok((out[0].clone() - a * t).abs())
    });
    let mut worst = Dyadic::zero();
    for e in errs {
        worst = worst.max_of(&e?);
    }
    Ok(Check { name: "multiplier grid error".into(), measured: worst.to_f64(), bound: info.mult_bound.to_f64(), pass: worst <= info.mult_bound })
}

/// `sum_{j=1..J} 4^-j = ((4^J - 1) / 3) / 4^J`.
fn largest_coefficient(cells: u64) -> Dyadic {
    let num = ((BigInt::one() << (2 * cells)) - 1u32) / 3u32;
    Dyadic::from_parts(num, (2 * cells) as u32)
}

/// `x / steps` for power-of-two `steps`.
fn exact_div(x: &Dyadic, steps: u64) -> Dyadic {
    debug_assert!(steps.is_power_of_two());
    x.mul_pow2(-(steps.trailing_zeros() as i64))
}

/// Runs every measurement relevant to the construction and compares it
/// with its bound.
pub fn certify<P: PointMap>(approx: &Approximant, f: &TargetFunction, cfg: &CertConfig, pm: &P) -> Result<CertReport> {
    let (d, n) = (approx.d, approx.n);
    let bound = theorem_bound(&approx.theorem, d, n, &f.modulus);
    let b_out = bound_outside(&f.modulus, &approx.params.s, d, n);
    let mut checks = Vec::new();
    let sup_outside;
    let mut sup_full = None;
    let mut lp = None;
    let mut notes = approx.notes.clone();
    match approx.theorem {
        Theorem::Lp { p } => {
            let m = measure_sup(approx, f, &cfg.grid, Region::OutsideTrifling, cfg.mode, pm)?;
            checks.push(sup_check("sup outside trifling region", &m, b_out));
            sup_outside = Some(m);
            let l = measure_lp(approx, f, p, cfg.lp_per_cell, cfg.mc_samples, cfg.seed, cfg.mode, pm)?;
            checks.push(Check { name: format!("L^{p} quadrature"), measured: l.quadrature, bound, pass: l.quadrature <= bound + FLOAT_MARGIN });
            lp = Some(l);
        }
        Theorem::Linf => {
            let m = measure_sup(approx, f, &cfg.grid, Region::Full, cfg.mode, pm)?;
            checks.push(sup_check("sup on the whole cube", &m, bound));
            sup_full = Some(m);
            let m = measure_sup(approx, f, &cfg.grid, Region::OutsideTrifling, cfg.mode, pm)?;
            sup_outside = Some(m);
        }
        Theorem::ThreeParam { eps } => {
            let m = measure_sup(approx, f, &cfg.grid, Region::OutsideTrifling, cfg.mode, pm)?;
            checks.push(sup_check("sup outside trifling region", &m, eps));
            sup_outside = Some(m);
            checks.push(multiplier_check(approx, MULT_GRID_POINTS, pm)?);
            notes.push("certified outside the trifling region only".into());
        }
    }
    let audit = approx.audit();
    let float_rounded = approx.float_evaluator().rounded();
    if cfg.mode == EvalMode::Float && float_rounded {
        notes.push("some parameters were rounded to f64".into());
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(CertReport {
        theorem: approx.theorem,
        target: f.id.clone(),
        d,
        n,
        delta: approx.delta.clone(),
        mode: cfg.mode,
        grid: cfg.grid,
        sup_outside,
        sup_full,
        lp,
        bound,
        bound_outside: b_out,
        checks,
        audit,
        parts: approx.parts.clone(),
        float_rounded,
        notes,
        pass,
        runtime_ms: None,
    })
}

/// Points of a grid that avoid the trifling region, for reporting.
pub fn count_outside(grid: &Grid, region: &TriflingRegion) -> Result<usize> {
    let pts = grid.points(region.d, region.n)?;
    Ok((0..pts.len()).filter(|&i| !region.contains(&pts.point(i))).count())
}
