//! Continuous targets on `[0,1]^d` with a declared modulus of continuity.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Upper modulus of continuity `omega(r)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Modulus {
    /// `lambda * r^alpha`.
    Holder { alpha: f64, lambda: f64 },
    /// Sorted `(r_k, omega_k)` samples with `omega` non-decreasing; evaluated
    /// as the first sample at or above `r`, and by subadditivity beyond the
    /// last one.
    Tabulated(Vec<(f64, f64)>),
}

impl Modulus {
    pub fn lipschitz(lambda: f64) -> Modulus {
        Modulus::Holder { alpha: 1.0, lambda }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            Modulus::Holder { alpha, lambda } => {
                if *alpha == 1.0 {
                    lambda * r
                } else {
                    lambda * libm::pow(r, *alpha)
                }
            }
            Modulus::Tabulated(t) => {
                if let Some(&(_, w)) = t.iter().find(|(rk, _)| *rk >= r) {
                    return w;
                }
                match t.last() {
                    Some(&(rl, wl)) if rl > 0.0 => libm::ceil(r / rl) * wl,
                    _ => f64::INFINITY,
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Modulus::Holder { lambda, .. } => *lambda == 0.0,
            Modulus::Tabulated(t) => t.iter().all(|(_, w)| *w == 0.0),
        }
    }

    /// `(alpha, lambda)` for Hölder moduli.
    pub fn holder_params(&self) -> Option<(f64, f64)> {
        match self {
            Modulus::Holder { alpha, lambda } => Some((*alpha, *lambda)),
            Modulus::Tabulated(_) => None,
        }
    }
}

/// Random continuous piecewise-linear function
/// `offset + sum_k c_k relu(w_k . x + b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCpwl {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl RandomCpwl {
    pub fn generate(d: usize, pieces: usize, seed: u64) -> RandomCpwl {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(pieces);
        let mut biases = Vec::with_capacity(pieces);
        let mut coeffs = Vec::with_capacity(pieces);
        for _ in 0..pieces {
            weights.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            biases.push(rng.gen_range(-1.0..1.0));
            coeffs.push(rng.gen_range(-1.0..1.0) / pieces as f64);
        }
        RandomCpwl { weights, biases, coeffs, offset: rng.gen_range(-0.5..0.5) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = self.offset;
        for ((w, b), c) in self.weights.iter().zip(&self.biases).zip(&self.coeffs) {
            let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            if z > 0.0 {
                acc += c * z;
            }
        }
        acc
    }

    /// `sum_k |c_k| ||w_k||_2`, rounded up.
    pub fn lipschitz(&self) -> f64 {
        let l: f64 = self.weights.iter().zip(&self.coeffs).map(|(w, c)| c.abs() * libm::sqrt(w.iter().map(|v| v * v).sum())).sum();
        l.next_up()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Constant(f64),
    /// `sum_i x_i / d`.
    Mean,
    /// Euclidean norm.
    Norm,
    /// First coordinate.
    Coordinate,
    /// `sqrt(x_1)`.
    Sqrt,
    /// `prod_i x_i`.
    Product,
    RandomCpwl(RandomCpwl),
}

/// A target `f : [0,1]^d -> R`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFunction {
    pub id: String,
    pub d: usize,
    pub kind: TargetKind,
    pub modulus: Modulus,
    /// True when the modulus was estimated from samples rather than derived.
    pub empirical_modulus: bool,
    pub seed: Option<u64>,
}

/// Extra knobs for [`builtin`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetOptions {
    pub constant: f64,
    pub seed: u64,
    pub pieces: usize,
}

impl Default for TargetOptions {
    fn default() -> Self {
        TargetOptions { constant: 0.5, seed: 0, pieces: 8 }
    }
}

/// Identifiers accepted by [`builtin`].
pub const BUILTIN_IDS: &[&str] = &["constant", "linear", "norm", "coordinate", "sqrt", "product", "random-cpwl"];

fn sqrt_up(d: usize) -> f64 {
    let r = libm::sqrt(d as f64);
    if r * r == d as f64 {
        r
    } else {
        r.next_up()
    }
}

/// Builtin target by identifier. `linear` is the coordinate mean, which is
/// `f(x) = x` for `d = 1`.
pub fn builtin(id: &str, d: usize, opts: &TargetOptions) -> Result<TargetFunction> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let (kind, modulus) = match id {
        "constant" => (TargetKind::Constant(opts.constant), Modulus::lipschitz(0.0)),
        "linear" | "mean" => {
            let r = libm::sqrt(d as f64);
            let lambda = if r * r == d as f64 { 1.0 / r } else { (1.0 / r).next_up() };
            (TargetKind::Mean, Modulus::lipschitz(lambda))
        }
        "norm" => (TargetKind::Norm, Modulus::lipschitz(1.0)),
        "coordinate" => (TargetKind::Coordinate, Modulus::lipschitz(1.0)),
        "sqrt" => (TargetKind::Sqrt, Modulus::Holder { alpha: 0.5, lambda: 1.0 }),
        "product" => (TargetKind::Product, Modulus::lipschitz(sqrt_up(d))),
        "random-cpwl" => {
            let g = RandomCpwl::generate(d, opts.pieces.max(1), opts.seed);
            let lambda = g.lipschitz();
            (TargetKind::RandomCpwl(g), Modulus::lipschitz(lambda))
        }
        other => return Err(Error::UnknownTarget(other.to_string())),
    };
    let id = if id == "mean" { "linear" } else { id };
    Ok(TargetFunction {
        id: id.to_string(),
        d,
        kind,
        modulus,
        empirical_modulus: false,
        seed: (id == "random-cpwl").then_some(opts.seed),
    })
}

impl TargetFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        match &self.kind {
            TargetKind::Constant(c) => *c,
            TargetKind::Mean => x.iter().sum::<f64>() / self.d as f64,
            TargetKind::Norm => libm::sqrt(x.iter().map(|v| v * v).sum()),
            TargetKind::Coordinate => x[0],
            TargetKind::Sqrt => libm::sqrt(x[0]),
            TargetKind::Product => x.iter().product(),
            TargetKind::RandomCpwl(g) => g.eval(x),
        }
    }

    pub fn omega(&self, r: f64) -> f64 {
        self.modulus.eval(r)
    }

    pub fn value_at_zero(&self) -> f64 {
        self.eval(&alloc::vec![0.0; self.d])
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match &self.modulus {
            Modulus::Holder { alpha, lambda } => format!("{} on [0,1]^{} (alpha = {alpha}, lambda = {lambda})", self.id, self.d),
            Modulus::Tabulated(t) => format!("{} on [0,1]^{} (tabulated modulus, {} samples)", self.id, self.d, t.len()),
        }
    }
}

/// Outcome of [`check_modulus`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusDiagnostic {
    pub pairs: usize,
    /// Largest `|f(x) - f(y)| / omega(|x - y|)` observed.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Empirical check `|f(x) - f(y)| <= omega(|x - y|)` on random pairs.
pub fn check_modulus(f: &TargetFunction, pairs: usize, seed: u64) -> ModulusDiagnostic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut x = alloc::vec![0.0; f.d];
    let mut y = alloc::vec![0.0; f.d];
    for k in 0..pairs {
        for i in 0..f.d {
            x[i] = rng.gen::<f64>();
            // Every other pair is close, to probe small radii.
            y[i] = if k % 2 == 0 { rng.gen::<f64>() } else { (x[i] + rng.gen_range(-1e-3..1e-3)).clamp(0.0, 1.0) };
        }
        let r = libm::sqrt(x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum());
        let diff = (f.eval(&x) - f.eval(&y)).abs();
        let w = f.omega(r);
        if w > 0.0 {
            max_ratio = max_ratio.max(diff / w);
        }
        if diff > w * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
    }
    ModulusDiagnostic { pairs, max_ratio, violations }
}
