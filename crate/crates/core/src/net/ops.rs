//! Composition, stacking and depth padding.

use alloc::vec::Vec;

use super::{product_tag, AffineLayer, InputBox, LayerBuilder, ParamOrigin, ReluNetwork};
use crate::{Dyadic, Error, Result};

/// How two networks are glued in [`compose`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Junction {
    /// Multiply the inner output layer into the outer input layer. Exact and
    /// adds no depth, but mixes the tags of both layers.
    Merge,
    /// Insert a ReLU using `sigma(t + C) - C` with a power-of-two shift `C`
    /// derived from interval bounds. Adds one hidden layer and keeps the
    /// parameters of both sides in separate slots.
    #[default]
    Relu,
}

/// Per-output shifts making the inner outputs nonnegative on its box.
fn junction_shifts(inner: &ReluNetwork) -> Result<Vec<Dyadic>> {
    inner
        .output_bounds()
        .into_iter()
        .enumerate()
        .map(|(index, iv)| match iv.lo {
            None => Err(Error::JunctionShift { index }),
            Some(lo) if !lo.is_negative() => Ok(Dyadic::zero()),
            Some(lo) => Ok((-lo).pow2_ceil()),
        })
        .collect()
}

fn merge_layers(outer: &AffineLayer, inner: &AffineLayer) -> AffineLayer {
    let mut b = LayerBuilder::new(outer.out_dim(), inner.in_dim());
    for r in 0..outer.out_dim() {
        let mut bias = outer.bias(r).clone();
        let mut btag = outer.bias_tag(r);
        for (c, wo, to) in outer.row(r) {
            for (c2, wi, ti) in inner.row(c) {
                b.weight_tagged(r, c2, wo * wi, product_tag(wo, to, wi, ti));
            }
            let bi = inner.bias(c);
            bias += wo * bi;
            btag = btag.join(product_tag(wo, to, bi, inner.bias_tag(c)));
        }
        b.bias_tagged(r, bias, btag);
    }
    b.build()
}

/// `outer o inner`. The result keeps the input box of `inner`.
pub fn compose(outer: &ReluNetwork, inner: &ReluNetwork, junction: Junction) -> Result<ReluNetwork> {
    if outer.input_dim() != inner.output_dim() {
        return Err(Error::DimensionMismatch { expected: outer.input_dim(), found: inner.output_dim() });
    }
    let mut layers: Vec<AffineLayer> = Vec::with_capacity(inner.layers().len() + outer.layers().len());
    match junction {
        Junction::Merge => {
            let (inner_last, inner_rest) = inner.layers().split_last().unwrap();
            let (outer_first, outer_rest) = outer.layers().split_first().unwrap();
            layers.extend(inner_rest.iter().cloned());
            layers.push(merge_layers(outer_first, inner_last));
            layers.extend(outer_rest.iter().cloned());
        }
        Junction::Relu => {
            let shifts = junction_shifts(inner)?;
            let mut inner_layers = inner.layers().to_vec();
            let last = inner_layers.last_mut().unwrap();
            for (k, c) in shifts.iter().enumerate() {
                if !c.is_zero() {
                    *last.bias_mut(k).0 += c;
                }
            }
            let mut outer_layers = outer.layers().to_vec();
            let first = &mut outer_layers[0];
            for r in 0..first.out_dim() {
                let mut delta = Dyadic::zero();
                let mut tag = ParamOrigin::Fixed;
                for (c, w, t) in first.row(r) {
                    if !shifts[c].is_zero() {
                        delta += w * &shifts[c];
                        tag = tag.join(t);
                    }
                }
                let (b, bt) = first.bias_mut(r);
                *b -= delta;
                *bt = bt.join(tag);
            }
            layers.extend(inner_layers);
            layers.extend(outer_layers);
        }
    }
    ReluNetwork::new(layers, inner.input_box().clone())
}

/// Append `extra` hidden layers that reproduce the outputs exactly on the
/// input box.
pub fn pad_depth(net: &ReluNetwork, extra: usize) -> Result<ReluNetwork> {
    if extra == 0 {
        return Ok(net.clone());
    }
    let shifts = junction_shifts(net)?;
    let k = net.output_dim();
    let mut padded = net.clone();
    {
        let last = padded.layers_mut().last_mut().unwrap();
        for (i, c) in shifts.iter().enumerate() {
            *last.bias_mut(i).0 += c;
        }
    }
    for _ in 1..extra {
        padded.layers_mut().push(AffineLayer::identity(k));
    }
    let mut out = AffineLayer::identity(k);
    for (i, c) in shifts.iter().enumerate() {
        *out.bias_mut(i).0 = -c;
    }
    padded.layers_mut().push(out);
    Ok(padded)
}

fn pad_all(nets: &[ReluNetwork]) -> Result<Vec<ReluNetwork>> {
    let depth = nets.iter().map(ReluNetwork::depth).max().ok_or(Error::EmptyNetworkList)?;
    nets.iter().map(|n| pad_depth(n, depth - n.depth())).collect()
}

/// Block layout shared by [`stack`] and [`parallel`]; `shared_input` selects
/// whether the first layers read the same input or disjoint slices of it.
fn block_combine(nets: &[ReluNetwork], shared_input: bool, input_box: InputBox) -> Result<ReluNetwork> {
    let nets = pad_all(nets)?;
    let n_layers = nets[0].layers().len();
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let out_dim: usize = nets.iter().map(|n| n.layers()[l].out_dim()).sum();
        let in_dim = if l == 0 && shared_input {
            nets[0].input_dim()
        } else {
            nets.iter().map(|n| n.layers()[l].in_dim()).sum()
        };
        let mut b = LayerBuilder::new(out_dim, in_dim);
        let (mut row_off, mut col_off) = (0usize, 0usize);
        for n in &nets {
            let layer = &n.layers()[l];
            for r in 0..layer.out_dim() {
                for (c, w, t) in layer.row(r) {
                    b.weight_tagged(row_off + r, col_off + c, w.clone(), t);
                }
                b.bias_tagged(row_off + r, layer.bias(r).clone(), layer.bias_tag(r));
            }
            row_off += layer.out_dim();
            if !(l == 0 && shared_input) {
                col_off += layer.in_dim();
            }
        }
        layers.push(b.build());
    }
    ReluNetwork::new(layers, input_box)
}

/// Shared-input stack `x -> (N_1(x), ..., N_k(x))`. Shallower members are
/// padded to the common depth.
pub fn stack(nets: &[ReluNetwork]) -> Result<ReluNetwork> {
    let first = nets.first().ok_or(Error::EmptyNetworkList)?;
    for n in &nets[1..] {
        if n.input_dim() != first.input_dim() {
            return Err(Error::DimensionMismatch { expected: first.input_dim(), found: n.input_dim() });
        }
        if n.input_box() != first.input_box() {
            return Err(Error::InputBoxMismatch);
        }
    }
    block_combine(nets, true, first.input_box().clone())
}

/// Disjoint-input product `(x_1, ..., x_k) -> (N_1(x_1), ..., N_k(x_k))`.
pub fn parallel(nets: &[ReluNetwork]) -> Result<ReluNetwork> {
    if nets.is_empty() {
        return Err(Error::EmptyNetworkList);
    }
    let boxes: Vec<&InputBox> = nets.iter().map(ReluNetwork::input_box).collect();
    block_combine(nets, false, InputBox::concat(&boxes))
}

impl ReluNetwork {
    /// `outer o self`.
    pub fn then(&self, outer: &ReluNetwork, junction: Junction) -> Result<ReluNetwork> {
        compose(outer, self, junction)
    }
}
