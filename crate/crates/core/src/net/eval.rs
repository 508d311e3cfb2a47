//! Forward evaluation.
//!
//! Evaluators pre-compile a network: zero weights are dropped, and hidden
//! units whose value does not depend on the input are folded (exactly) into
//! the biases of the next layer. A network whose input-independent branch
//! is huge, such as an unpacking staircase driven by a bias, is then as
//! cheap to evaluate as its input-dependent part.

use alloc::vec::Vec;

use super::ReluNetwork;
use crate::{Dyadic, Error, Result};

/// Arithmetic needed by an evaluator.
pub trait Scalar: Clone + Send + Sync + 'static {
    fn mul_add(&mut self, w: &Self, x: &Self);
    fn relu(&mut self);
}

impl Scalar for Dyadic {
    fn mul_add(&mut self, w: &Dyadic, x: &Dyadic) {
        if !x.is_zero() {
            *self += w * x;
        }
    }

    fn relu(&mut self) {
        if self.is_negative() {
            *self = Dyadic::zero();
        }
    }
}

impl Scalar for f64 {
    fn mul_add(&mut self, w: &f64, x: &f64) {
        *self += w * x;
    }

    fn relu(&mut self) {
        if *self < 0.0 {
            *self = 0.0;
        }
    }
}

#[derive(Debug, Clone)]
enum Slot<T> {
    Var(u32),
    Const(T),
}

#[derive(Debug, Clone)]
struct PlanLayer<T> {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<T>,
    biases: Vec<T>,
    relu: bool,
}

#[derive(Debug, Clone)]
struct Plan<T> {
    input_dim: usize,
    layers: Vec<PlanLayer<T>>,
    outputs: Vec<Slot<T>>,
}

impl Plan<Dyadic> {
    fn compile(net: &ReluNetwork) -> Plan<Dyadic> {
        let last = net.layers().len() - 1;
        let mut state: Vec<Slot<Dyadic>> = (0..net.input_dim() as u32).map(Slot::Var).collect();
        let mut layers = Vec::with_capacity(net.layers().len());
        for (li, layer) in net.layers().iter().enumerate() {
            let hidden = li < last;
            let mut pl = PlanLayer { row_ptr: Vec::new(), cols: Vec::new(), weights: Vec::new(), biases: Vec::new(), relu: hidden };
            pl.row_ptr.push(0);
            let mut next = Vec::with_capacity(layer.out_dim());
            for r in 0..layer.out_dim() {
                let mut bias = layer.bias(r).clone();
                let start = pl.cols.len();
                for (c, w, _) in layer.row(r) {
                    if w.is_zero() {
                        continue;
                    }
                    match &state[c] {
                        Slot::Const(v) => bias.mul_add(w, v),
                        Slot::Var(i) => {
                            pl.cols.push(*i);
                            pl.weights.push(w.clone());
                        }
                    }
                }
                if pl.cols.len() == start {
                    if hidden {
                        Scalar::relu(&mut bias);
                    }
                    next.push(Slot::Const(bias));
                } else {
                    next.push(Slot::Var(pl.biases.len() as u32));
                    pl.biases.push(bias);
                    pl.row_ptr.push(pl.cols.len());
                }
            }
            layers.push(pl);
            state = next;
        }
        Plan { input_dim: net.input_dim(), layers, outputs: state }
    }

    fn to_f64(&self) -> (Plan<f64>, bool) {
        let mut rounded = false;
        let mut conv = |v: &Dyadic| match v.to_f64_exact() {
            Some(x) => x,
            None => {
                rounded = true;
                v.to_f64()
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|l| PlanLayer {
                row_ptr: l.row_ptr.clone(),
                cols: l.cols.clone(),
                weights: l.weights.iter().map(&mut conv).collect(),
                biases: l.biases.iter().map(&mut conv).collect(),
                relu: l.relu,
            })
            .collect();
        let outputs = self
            .outputs
            .iter()
            .map(|s| match s {
                Slot::Var(i) => Slot::Var(*i),
                Slot::Const(c) => Slot::Const(conv(c)),
            })
            .collect();
        (Plan { input_dim: self.input_dim, layers, outputs }, rounded)
    }
}

impl<T: Scalar> Plan<T> {
    fn run(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        let mut cur: Vec<T> = x.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.biases.len());
            for (r, b) in layer.biases.iter().enumerate() {
                let mut acc = b.clone();
                for k in layer.row_ptr[r]..layer.row_ptr[r + 1] {
                    acc.mul_add(&layer.weights[k], &cur[layer.cols[k] as usize]);
                }
                if layer.relu {
                    acc.relu();
                }
                next.push(acc);
            }
            cur = next;
        }
        Ok(self
            .outputs
            .iter()
            .map(|s| match s {
                Slot::Var(i) => cur[*i as usize].clone(),
                Slot::Const(c) => c.clone(),
            })
            .collect())
    }
}

/// Compiled exact evaluator.
#[derive(Debug, Clone)]
pub struct ExactEvaluator {
    plan: Plan<Dyadic>,
}

impl ExactEvaluator {
    pub fn new(net: &ReluNetwork) -> ExactEvaluator {
        ExactEvaluator { plan: Plan::compile(net) }
    }

    pub fn input_dim(&self) -> usize {
        self.plan.input_dim
    }

    pub fn evaluate(&self, x: &[Dyadic]) -> Result<Vec<Dyadic>> {
        self.plan.run(x)
    }

    /// Exact evaluation at an `f64` point (every finite `f64` is dyadic).
    pub fn evaluate_at_f64(&self, x: &[f64]) -> Result<Vec<Dyadic>> {
        let xs = x.iter().map(|&v| Dyadic::from_f64(v).ok_or_else(|| Error::NonFinite(alloc::format!("{v}")))).collect::<Result<Vec<_>>>()?;
        self.plan.run(&xs)
    }

    /// Number of multiply-adds per evaluation after folding.
    pub fn live_weights(&self) -> usize {
        self.plan.layers.iter().map(|l| l.cols.len()).sum()
    }
}

/// Compiled `f64` evaluator.
#[derive(Debug, Clone)]
pub struct FloatEvaluator {
    plan: Plan<f64>,
    rounded: bool,
}

const UNIT_ROUNDOFF: f64 = 1.0 / 9_007_199_254_740_992.0;

fn gamma(k: usize) -> f64 {
    let ku = k as f64 * UNIT_ROUNDOFF;
    ku / (1.0 - ku)
}

impl FloatEvaluator {
    pub fn new(net: &ReluNetwork) -> FloatEvaluator {
        let (plan, rounded) = Plan::compile(net).to_f64();
        FloatEvaluator { plan, rounded }
    }

    /// True if some parameter (after folding) is not representable in `f64`.
    pub fn rounded(&self) -> bool {
        self.rounded
    }

    pub fn input_dim(&self) -> usize {
        self.plan.input_dim
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("{v}")));
        }
        self.plan.run(x)
    }

    /// Values together with a running forward-error bound against exact
    /// evaluation at the same (exactly representable) input.
    pub fn evaluate_with_error(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.plan.input_dim {
            return Err(Error::DimensionMismatch { expected: self.plan.input_dim, found: x.len() });
        }
        let repr = if self.rounded { UNIT_ROUNDOFF } else { 0.0 };
        let mut val: Vec<f64> = x.to_vec();
        let mut err: Vec<f64> = alloc::vec![0.0; x.len()];
        for layer in &self.plan.layers {
            let mut nv = Vec::with_capacity(layer.biases.len());
            let mut ne = Vec::with_capacity(layer.biases.len());
            for (r, b) in layer.biases.iter().enumerate() {
                let span = layer.row_ptr[r]..layer.row_ptr[r + 1];
                let g = gamma(span.len() + 1);
                let mut acc = *b;
                let mut mag = b.abs();
                let mut prop = 0.0;
                for k in span {
                    let w = layer.weights[k];
                    let i = layer.cols[k] as usize;
                    acc += w * val[i];
                    mag += (w * val[i]).abs();
                    prop += w.abs() * err[i];
                }
                let mag = mag * (1.0 + g) + prop;
                let mut e = (prop + g * mag + repr * mag) * (1.0 + 4.0 * UNIT_ROUNDOFF);
                if layer.relu && acc < 0.0 {
                    acc = 0.0;
                    e = e.min(mag);
                }
                nv.push(acc);
                ne.push(e);
            }
            val = nv;
            err = ne;
        }
        let mut out_v = Vec::with_capacity(self.plan.outputs.len());
        let mut out_e = Vec::with_capacity(self.plan.outputs.len());
        for s in &self.plan.outputs {
            match s {
                Slot::Var(i) => {
                    out_v.push(val[*i as usize]);
                    out_e.push(err[*i as usize]);
                }
                Slot::Const(c) => {
                    out_v.push(*c);
                    out_e.push(repr * c.abs());
                }
            }
        }
        Ok((out_v, out_e))
    }
}

/// Exact evaluation of a depth-one, single-input network at many points
/// by a sweep over the hidden-unit thresholds, in `O(units + points)`
/// arithmetic per output instead of `O(units * points)`.
///
/// `points` must be sorted ascending and every input weight must be a
/// power of two up to sign. Returns one output vector per point.
pub fn sweep_univariate(net: &ReluNetwork, points: &[Dyadic]) -> Result<Vec<Vec<Dyadic>>> {
    if net.input_dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: net.input_dim() });
    }
    if net.depth() != 1 {
        return Err(Error::InvalidArgument(alloc::format!("sweep needs depth 1, got {}", net.depth())));
    }
    if points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("sweep points must be sorted".into()));
    }
    let (hid, out) = (&net.layers()[0], &net.layers()[1]);
    let k = out.out_dim();
    // Per-unit outgoing weights.
    let mut fan: Vec<Vec<(usize, Dyadic)>> = alloc::vec![Vec::new(); hid.out_dim()];
    for r in 0..k {
        for (u, w, _) in out.row(r) {
            fan[u].push((r, w.clone()));
        }
    }
    // The output is b + A x + B over the currently active units.
    let mut slope = alloc::vec![Dyadic::zero(); k];
    let mut icept: Vec<Dyadic> = (0..k).map(|r| out.bias(r).clone()).collect();
    // (threshold, unit, activates): crossing the threshold upward toggles the unit.
    let mut events: Vec<(Dyadic, usize, bool)> = Vec::new();
    for (u, outs) in fan.iter().enumerate() {
        let (w, b) = (hid.weight(u, 0).0.clone(), hid.bias(u).clone());
        if w.is_zero() {
            let c = b.relu();
            for (r, v) in outs {
                icept[*r] += v * &c;
            }
            continue;
        }
        // Active iff w x + b > 0; at the threshold the unit is zero either way.
        let thr = threshold(&w, &b)?;
        if w.is_negative() {
            for (r, v) in outs {
                slope[*r] += v * &w;
                icept[*r] += v * &b;
            }
        }
        events.push((thr, u, w.is_positive()));
    }
    events.sort_by(|a, b| a.0.cmp(&b.0));
    let mut next = 0;
    let mut res = Vec::with_capacity(points.len());
    for x in points {
        while next < events.len() && events[next].0 <= *x {
            let (_, u, on) = &events[next];
            let (w, b) = (hid.weight(*u, 0).0, hid.bias(*u));
            for (r, v) in &fan[*u] {
                let (dw, db) = (v * &w, v * b);
                if *on {
                    slope[*r] += dw;
                    icept[*r] += db;
                } else {
                    slope[*r] -= dw;
                    icept[*r] -= db;
                }
            }
            next += 1;
        }
        res.push((0..k).map(|r| &icept[r] + &slope[r] * x).collect());
    }
    Ok(res)
}

/// `-b / w` as an exact dyadic; `w` must be a power of two up to sign.
fn threshold(w: &Dyadic, b: &Dyadic) -> Result<Dyadic> {
    let e = w.abs().log2_exact().ok_or_else(|| Error::InvalidArgument(alloc::format!("sweep input weight {w} is not a power of two")))?;
    let t = b.mul_pow2(-e);
    Ok(if w.is_negative() { t } else { -t })
}
