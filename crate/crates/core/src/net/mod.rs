//! Fully connected ReLU networks with exact dyadic parameters.
//!
//! A [`ReluNetwork`] is a list of [`AffineLayer`]s with a ReLU after every
//! layer but the last. Each stored weight and bias carries a
//! [`ParamOrigin`] tag. Layers are stored row-compressed: entries that are
//! absent are `0` and tagged [`ParamOrigin::Fixed`], so a layer behaves like
//! a dense `out_dim x in_dim` matrix while large staircase gadgets stay
//! cheap to hold.

mod eval;
mod interval;
mod ops;

use alloc::vec;
use alloc::vec::Vec;

use crate::{Dyadic, Error, Result};

pub use eval::{sweep_univariate, ExactEvaluator, FloatEvaluator, Scalar};
pub use interval::{InputBox, Interval};
pub use ops::{compose, pad_depth, parallel, stack, Junction};

/// Whether a parameter is independent of the target function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ParamOrigin {
    #[default]
    Fixed,
    Intrinsic,
}

impl ParamOrigin {
    pub fn join(self, other: ParamOrigin) -> ParamOrigin {
        if self == ParamOrigin::Intrinsic || other == ParamOrigin::Intrinsic {
            ParamOrigin::Intrinsic
        } else {
            ParamOrigin::Fixed
        }
    }

    pub fn is_intrinsic(self) -> bool {
        self == ParamOrigin::Intrinsic
    }
}

/// Tag of the product `a * b`: intrinsic only if an intrinsic factor can
/// actually influence the value, i.e. the other factor is not a fixed zero.
pub(crate) fn product_tag(a: &Dyadic, ta: ParamOrigin, b: &Dyadic, tb: ParamOrigin) -> ParamOrigin {
    let fixed_zero = |v: &Dyadic, t: ParamOrigin| t == ParamOrigin::Fixed && v.is_zero();
    if (ta.is_intrinsic() && !fixed_zero(b, tb)) || (tb.is_intrinsic() && !fixed_zero(a, ta)) {
        ParamOrigin::Intrinsic
    } else {
        ParamOrigin::Fixed
    }
}

/// One affine map `x -> W x + b` with tagged entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineLayer {
    out_dim: usize,
    in_dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<Dyadic>,
    weight_tags: Vec<ParamOrigin>,
    biases: Vec<Dyadic>,
    bias_tags: Vec<ParamOrigin>,
}

/// Accumulating builder for [`AffineLayer`].
///
/// Repeated writes to the same weight are summed and their tags joined.
#[derive(Debug, Clone)]
pub struct LayerBuilder {
    out_dim: usize,
    in_dim: usize,
    entries: Vec<(u32, u32, Dyadic, ParamOrigin)>,
    biases: Vec<Dyadic>,
    bias_tags: Vec<ParamOrigin>,
}

impl LayerBuilder {
    pub fn new(out_dim: usize, in_dim: usize) -> LayerBuilder {
        assert!(in_dim <= u32::MAX as usize && out_dim <= u32::MAX as usize);
        LayerBuilder {
            out_dim,
            in_dim,
            entries: Vec::new(),
            biases: vec![Dyadic::zero(); out_dim],
            bias_tags: vec![ParamOrigin::Fixed; out_dim],
        }
    }

    pub fn weight(&mut self, row: usize, col: usize, value: Dyadic) -> &mut Self {
        self.weight_tagged(row, col, value, ParamOrigin::Fixed)
    }

    pub fn weight_tagged(&mut self, row: usize, col: usize, value: Dyadic, tag: ParamOrigin) -> &mut Self {
        assert!(row < self.out_dim && col < self.in_dim, "weight index ({row}, {col}) out of range");
        self.entries.push((row as u32, col as u32, value, tag));
        self
    }

    pub fn bias(&mut self, row: usize, value: Dyadic) -> &mut Self {
        self.biases[row] = value;
        self
    }

    pub fn bias_tagged(&mut self, row: usize, value: Dyadic, tag: ParamOrigin) -> &mut Self {
        self.biases[row] = value;
        self.bias_tags[row] = tag;
        self
    }

    pub fn build(mut self) -> AffineLayer {
        self.entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = Vec::with_capacity(self.out_dim + 1);
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut weights = Vec::with_capacity(self.entries.len());
        let mut weight_tags = Vec::with_capacity(self.entries.len());
        row_ptr.push(0);
        let mut rows_done = 0usize;
        let mut iter = self.entries.into_iter().peekable();
        while let Some((r, c, mut v, mut t)) = iter.next() {
            while let Some(next) = iter.peek() {
                if next.0 == r && next.1 == c {
                    let (_, _, v2, t2) = iter.next().unwrap();
                    v += v2;
                    t = t.join(t2);
                } else {
                    break;
                }
            }
            while rows_done < r as usize {
                row_ptr.push(cols.len());
                rows_done += 1;
            }
            if t == ParamOrigin::Fixed && v.is_zero() {
                continue;
            }
            cols.push(c);
            weights.push(v);
            weight_tags.push(t);
        }
        while rows_done < self.out_dim {
            row_ptr.push(cols.len());
            rows_done += 1;
        }
        AffineLayer {
            out_dim: self.out_dim,
            in_dim: self.in_dim,
            row_ptr,
            cols,
            weights,
            weight_tags,
            biases: self.biases,
            bias_tags: self.bias_tags,
        }
    }
}

impl AffineLayer {
    pub fn builder(out_dim: usize, in_dim: usize) -> LayerBuilder {
        LayerBuilder::new(out_dim, in_dim)
    }

    /// Layer from dense rows of tagged weights.
    pub fn from_dense(rows: Vec<Vec<(Dyadic, ParamOrigin)>>, biases: Vec<(Dyadic, ParamOrigin)>, in_dim: usize) -> Result<AffineLayer> {
        if rows.len() != biases.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: biases.len() });
        }
        let mut b = LayerBuilder::new(rows.len(), in_dim);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != in_dim {
                return Err(Error::DimensionMismatch { expected: in_dim, found: row.len() });
            }
            for (c, (v, t)) in row.into_iter().enumerate() {
                if t.is_intrinsic() || !v.is_zero() {
                    b.weight_tagged(r, c, v, t);
                }
            }
        }
        for (r, (v, t)) in biases.into_iter().enumerate() {
            b.bias_tagged(r, v, t);
        }
        Ok(b.build())
    }

    /// Identity map on `k` coordinates.
    pub fn identity(k: usize) -> AffineLayer {
        let mut b = LayerBuilder::new(k, k);
        for i in 0..k {
            b.weight(i, i, Dyadic::one());
        }
        b.build()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Stored entries of row `r` as `(column, value, tag)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, &Dyadic, ParamOrigin)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        span.map(move |k| (self.cols[k] as usize, &self.weights[k], self.weight_tags[k]))
    }

    /// Dense view of a single weight.
    pub fn weight(&self, r: usize, c: usize) -> (Dyadic, ParamOrigin) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => (self.weights[span.start + k].clone(), self.weight_tags[span.start + k]),
            Err(_) => (Dyadic::zero(), ParamOrigin::Fixed),
        }
    }

    pub fn bias(&self, r: usize) -> &Dyadic {
        &self.biases[r]
    }

    pub fn bias_tag(&self, r: usize) -> ParamOrigin {
        self.bias_tags[r]
    }

    pub(crate) fn bias_mut(&mut self, r: usize) -> (&mut Dyadic, &mut ParamOrigin) {
        (&mut self.biases[r], &mut self.bias_tags[r])
    }

    /// Number of explicitly stored weights.
    pub fn stored_weights(&self) -> usize {
        self.cols.len()
    }

    /// Dense slot count `out_dim * (in_dim + 1)`.
    pub fn param_count(&self) -> u64 {
        self.out_dim as u64 * (self.in_dim as u64 + 1)
    }

    pub fn intrinsic_count(&self) -> u64 {
        let w = self.weight_tags.iter().filter(|t| t.is_intrinsic()).count();
        let b = self.bias_tags.iter().filter(|t| t.is_intrinsic()).count();
        (w + b) as u64
    }

    /// Slots that are nonzero or intrinsic.
    pub fn nonzero_count(&self) -> u64 {
        let w = self.weights.iter().zip(&self.weight_tags).filter(|(v, t)| t.is_intrinsic() || !v.is_zero()).count();
        let b = self.biases.iter().zip(&self.bias_tags).filter(|(v, t)| t.is_intrinsic() || !v.is_zero()).count();
        (w + b) as u64
    }

    /// Every intrinsic slot as `(is_bias, row, col, value)`; `col` is 0 for biases.
    pub fn intrinsic_slots(&self) -> Vec<(bool, usize, usize, Dyadic)> {
        let mut out = Vec::new();
        for r in 0..self.out_dim {
            for (c, v, t) in self.row(r) {
                if t.is_intrinsic() {
                    out.push((false, r, c, v.clone()));
                }
            }
            if self.bias_tags[r].is_intrinsic() {
                out.push((true, r, 0, self.biases[r].clone()));
            }
        }
        out
    }
}

/// Shape and parameter accounting of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShapeAudit {
    /// Largest hidden layer; 0 for a purely affine network.
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Dense slot count, summed over layers.
    pub total_params: u64,
    pub intrinsic_params: u64,
    pub fixed_params: u64,
    /// Slots holding a nonzero value or an intrinsic tag.
    pub nonzero_params: u64,
}

/// A ReLU network together with its declared input box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReluNetwork {
    layers: Vec<AffineLayer>,
    input_box: InputBox,
}

impl ReluNetwork {
    pub fn new(layers: Vec<AffineLayer>, input_box: InputBox) -> Result<ReluNetwork> {
        let first = layers.first().ok_or(Error::EmptyNetworkList)?;
        if input_box.dim() != first.in_dim {
            return Err(Error::DimensionMismatch { expected: first.in_dim, found: input_box.dim() });
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim != pair[0].out_dim {
                return Err(Error::DimensionMismatch { expected: pair[0].out_dim, found: pair[1].in_dim });
            }
        }
        Ok(ReluNetwork { layers, input_box })
    }

    /// Single affine layer on the given box.
    pub fn affine(layer: AffineLayer, input_box: InputBox) -> Result<ReluNetwork> {
        ReluNetwork::new(vec![layer], input_box)
    }

    /// Identity on `k` coordinates.
    pub fn identity(input_box: InputBox) -> ReluNetwork {
        let k = input_box.dim();
        ReluNetwork { layers: vec![AffineLayer::identity(k)], input_box }
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn into_layers(self) -> (Vec<AffineLayer>, InputBox) {
        (self.layers, self.input_box)
    }

    pub fn input_box(&self) -> &InputBox {
        &self.input_box
    }

    pub fn with_input_box(mut self, input_box: InputBox) -> Result<ReluNetwork> {
        if input_box.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: input_box.dim() });
        }
        self.input_box = input_box;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn width(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.out_dim).max().unwrap_or(0)
    }

    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(AffineLayer::param_count).sum()
    }

    pub fn audit(&self) -> ShapeAudit {
        let total: u64 = self.param_count();
        let intrinsic: u64 = self.layers.iter().map(AffineLayer::intrinsic_count).sum();
        ShapeAudit {
            width: self.width(),
            depth: self.depth(),
            total_params: total,
            intrinsic_params: intrinsic,
            fixed_params: total - intrinsic,
            nonzero_params: self.layers.iter().map(AffineLayer::nonzero_count).sum(),
        }
    }

    /// Exact forward pass. Builds a fresh evaluator; reuse an
    /// [`ExactEvaluator`] when evaluating many points.
    pub fn evaluate_exact(&self, x: &[Dyadic]) -> Result<Vec<Dyadic>> {
        ExactEvaluator::new(self).evaluate(x)
    }

    /// Forward pass in `f64`. The flag reports whether any parameter had to
    /// be rounded to fit an `f64`.
    pub fn evaluate_float(&self, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        let ev = FloatEvaluator::new(self);
        Ok((ev.evaluate(x)?, ev.rounded()))
    }

    /// Interval enclosure of every output over the input box.
    pub fn output_bounds(&self) -> Vec<Interval> {
        interval::propagate(self)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut Vec<AffineLayer> {
        &mut self.layers
    }
}
