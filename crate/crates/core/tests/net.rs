use fewparam_core::net::{compose, pad_depth, parallel, stack, AffineLayer, ExactEvaluator, FloatEvaluator, Interval, LayerBuilder};
use fewparam_core::{Dyadic, Error, InputBox, Junction, ParamOrigin, ReluNetwork};
use proptest::prelude::*;

/// Oracle: dense layer-by-layer forward pass straight from the definition.
fn dense_forward(net: &ReluNetwork, x: &[Dyadic]) -> Vec<Dyadic> {
    let mut cur = x.to_vec();
    let last = net.layers().len() - 1;
    for (li, l) in net.layers().iter().enumerate() {
        let mut next = Vec::new();
        for r in 0..l.out_dim() {
            let mut acc = l.bias(r).clone();
            for (c, v) in cur.iter().enumerate() {
                acc += l.weight(r, c).0 * v;
            }
            next.push(if li < last { acc.relu() } else { acc });
        }
        cur = next;
    }
    cur
}

fn dy(num: i64, exp: u32) -> Dyadic {
    Dyadic::from_ratio_pow2(num, exp)
}

prop_compose! {
    fn arb_dyadic()(num in -12i64..=12, exp in 0u32..4) -> Dyadic { dy(num, exp) }
}

prop_compose! {
    fn arb_layer(out_dim: usize, in_dim: usize)(
        w in proptest::collection::vec(arb_dyadic(), out_dim * in_dim),
        b in proptest::collection::vec(arb_dyadic(), out_dim),
        tags in proptest::collection::vec(any::<bool>(), out_dim * (in_dim + 1)),
    ) -> AffineLayer {
        let mut lb = LayerBuilder::new(out_dim, in_dim);
        for r in 0..out_dim {
            for c in 0..in_dim {
                let t = if tags[r * in_dim + c] { ParamOrigin::Intrinsic } else { ParamOrigin::Fixed };
                lb.weight_tagged(r, c, w[r * in_dim + c].clone(), t);
            }
            let t = if tags[out_dim * in_dim + r] { ParamOrigin::Intrinsic } else { ParamOrigin::Fixed };
            lb.bias_tagged(r, b[r].clone(), t);
        }
        lb.build()
    }
}

fn arb_net(in_dim: usize, out_dim: usize) -> impl Strategy<Value = ReluNetwork> {
    (proptest::collection::vec(1usize..4, 0..3)).prop_flat_map(move |hidden| {
        let mut dims = vec![in_dim];
        dims.extend(hidden);
        dims.push(out_dim);
        let layers: Vec<_> = dims.windows(2).map(|w| arb_layer(w[1], w[0])).collect();
        layers.prop_map(move |ls| ReluNetwork::new(ls, InputBox::unit(in_dim)).unwrap())
    })
}

fn arb_point(d: usize) -> impl Strategy<Value = Vec<Dyadic>> {
    proptest::collection::vec((0i64..=16).prop_map(|k| dy(k, 4)), d)
}

#[test]
fn audit_counts() {
    let mut lb = LayerBuilder::new(2, 3);
    lb.weight_tagged(0, 1, dy(1, 1), ParamOrigin::Intrinsic);
    lb.weight(1, 2, Dyadic::from_int(3));
    lb.bias_tagged(1, Dyadic::zero(), ParamOrigin::Intrinsic);
    let l0 = lb.build();
    let l1 = AffineLayer::identity(2);
    let net = ReluNetwork::new(vec![l0, l1], InputBox::unit(3)).unwrap();
    let a = net.audit();
    assert_eq!(a.width, 2);
    assert_eq!(a.depth, 1);
    assert_eq!(a.total_params, 2 * 4 + 2 * 3);
    assert_eq!(a.intrinsic_params, 2);
    assert_eq!(a.fixed_params, a.total_params - 2);
    assert_eq!(a.nonzero_params, 2 + 1 + 2);
}

#[test]
fn dimension_errors() {
    let a = ReluNetwork::identity(InputBox::unit(2));
    let b = ReluNetwork::identity(InputBox::unit(3));
    assert!(matches!(compose(&a, &b, Junction::Merge), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(stack(&[]), Err(Error::EmptyNetworkList)));
    assert!(matches!(stack(&[a.clone(), b]), Err(Error::DimensionMismatch { .. })));
    assert!(a.evaluate_exact(&[Dyadic::one()]).is_err());
    let other_box = ReluNetwork::identity(InputBox::cube(2, Dyadic::zero(), Dyadic::from_int(2)));
    assert!(matches!(stack(&[a, other_box]), Err(Error::InputBoxMismatch)));
}

#[test]
fn unbounded_junction_is_reported() {
    let inner = ReluNetwork::identity(InputBox(vec![Interval::unbounded()]));
    let outer = ReluNetwork::identity(InputBox::unit(1));
    assert!(matches!(compose(&outer, &inner, Junction::Relu), Err(Error::JunctionShift { index: 0 })));
    // A nonnegative lower bound needs no shift even with an open top.
    let half_open = ReluNetwork::identity(InputBox(vec![Interval { lo: Some(Dyadic::zero()), hi: None }]));
    let c = compose(&outer, &half_open, Junction::Relu).unwrap();
    assert_eq!(c.layers()[0].bias(0), &Dyadic::zero());
}

#[test]
fn relu_junction_shift_is_a_power_of_two() {
    // x in [0,1] -> x - 3/4 has lower bound -3/4, so C = 1.
    let mut lb = LayerBuilder::new(1, 1);
    lb.weight(0, 0, Dyadic::one()).bias(0, dy(-3, 2));
    let inner = ReluNetwork::affine(lb.build(), InputBox::unit(1)).unwrap();
    let outer = ReluNetwork::identity(InputBox::unit(1));
    let c = compose(&outer, &inner, Junction::Relu).unwrap();
    assert_eq!(c.layers()[0].bias(0), &dy(1, 2));
    assert_eq!(c.layers()[1].bias(0), &Dyadic::from_int(-1));
    assert_eq!(c.evaluate_exact(&[Dyadic::zero()]).unwrap(), vec![dy(-3, 2)]);
}

#[test]
fn intrinsic_tag_survives_a_shift() {
    let mut lb = LayerBuilder::new(1, 1);
    lb.weight(0, 0, Dyadic::one()).bias(0, Dyadic::from_int(-1));
    let inner = ReluNetwork::affine(lb.build(), InputBox::unit(1)).unwrap();
    let mut lb = LayerBuilder::new(1, 1);
    lb.weight_tagged(0, 0, Dyadic::from_int(5), ParamOrigin::Intrinsic);
    let outer = ReluNetwork::affine(lb.build(), InputBox::unit(1)).unwrap();
    let c = compose(&outer, &inner, Junction::Relu).unwrap();
    assert_eq!(c.layers()[1].bias_tag(0), ParamOrigin::Intrinsic);
    assert_eq!(c.audit().intrinsic_params, 2);
}

#[test]
fn folding_constant_branches() {
    // Second unit depends only on a bias and must be folded away.
    let mut lb = LayerBuilder::new(2, 1);
    lb.weight(0, 0, Dyadic::one());
    lb.bias(1, Dyadic::from_int(3));
    let mut lb2 = LayerBuilder::new(1, 2);
    lb2.weight(0, 0, Dyadic::one()).weight(0, 1, Dyadic::from_int(2));
    let net = ReluNetwork::new(vec![lb.build(), lb2.build()], InputBox::unit(1)).unwrap();
    let ev = ExactEvaluator::new(&net);
    assert_eq!(ev.live_weights(), 2);
    assert_eq!(ev.evaluate(&[dy(1, 1)]).unwrap(), vec![dy(13, 1)]);
}

#[test]
fn float_rounding_flag() {
    let mut lb = LayerBuilder::new(1, 1);
    lb.weight(0, 0, Dyadic::pow2(80) + Dyadic::one());
    let net = ReluNetwork::affine(lb.build(), InputBox::unit(1)).unwrap();
    let (_, rounded) = net.evaluate_float(&[1.0]).unwrap();
    assert!(rounded);
    let (_, rounded) = ReluNetwork::identity(InputBox::unit(1)).evaluate_float(&[0.5]).unwrap();
    assert!(!rounded);
}

proptest! {
    #[test]
    fn evaluator_matches_dense_oracle(net in arb_net(2, 2), x in arb_point(2)) {
        prop_assert_eq!(net.evaluate_exact(&x).unwrap(), dense_forward(&net, &x));
    }

    #[test]
    fn audit_is_consistent(net in arb_net(3, 2)) {
        let a = net.audit();
        let slots: u64 = net.layers().iter().map(|l| (l.out_dim() * (l.in_dim() + 1)) as u64).sum();
        prop_assert_eq!(a.total_params, slots);
        prop_assert_eq!(a.intrinsic_params + a.fixed_params, a.total_params);
        prop_assert!(a.nonzero_params <= a.total_params);
        prop_assert_eq!(a.depth, net.layers().len() - 1);
    }

    #[test]
    fn compose_is_sound(outer in arb_net(2, 1), inner in arb_net(2, 2), x in arb_point(2)) {
        let y = dense_forward(&inner, &x);
        let expect = dense_forward(&outer, &y);
        for j in [Junction::Merge, Junction::Relu] {
            let c = compose(&outer, &inner, j).unwrap();
            prop_assert_eq!(c.evaluate_exact(&x).unwrap(), expect.clone());
        }
        let merged = compose(&outer, &inner, Junction::Merge).unwrap();
        prop_assert_eq!(merged.depth(), outer.depth() + inner.depth());
        let shifted = compose(&outer, &inner, Junction::Relu).unwrap();
        prop_assert_eq!(shifted.depth(), outer.depth() + inner.depth() + 1);
    }

    #[test]
    fn relu_junction_keeps_intrinsic_slots_apart(outer in arb_net(2, 1), inner in arb_net(2, 2)) {
        // Only outer first-layer biases can pick up a tag through the shift.
        let c = compose(&outer, &inner, Junction::Relu).unwrap();
        let extra = c.audit().intrinsic_params as i64 - outer.audit().intrinsic_params as i64 - inner.audit().intrinsic_params as i64;
        prop_assert!((0..=outer.layers()[0].out_dim() as i64).contains(&extra));
    }

    #[test]
    fn stack_and_parallel_are_sound(a in arb_net(2, 1), b in arb_net(2, 2), x in arb_point(2), y in arb_point(2)) {
        let s = stack(&[a.clone(), b.clone()]).unwrap();
        let mut expect = dense_forward(&a, &x);
        expect.extend(dense_forward(&b, &x));
        prop_assert_eq!(s.evaluate_exact(&x).unwrap(), expect);
        prop_assert_eq!(s.depth(), a.depth().max(b.depth()));

        let p = parallel(&[a.clone(), b.clone()]).unwrap();
        let mut xy = x.clone();
        xy.extend(y.iter().cloned());
        let mut expect = dense_forward(&a, &x);
        expect.extend(dense_forward(&b, &y));
        prop_assert_eq!(p.evaluate_exact(&xy).unwrap(), expect);
        prop_assert_eq!(p.audit().intrinsic_params, a.audit().intrinsic_params + b.audit().intrinsic_params);
    }

    #[test]
    fn padding_preserves_values(a in arb_net(2, 2), extra in 0usize..4, x in arb_point(2)) {
        let p = pad_depth(&a, extra).unwrap();
        prop_assert_eq!(p.depth(), a.depth() + extra);
        prop_assert_eq!(p.evaluate_exact(&x).unwrap(), dense_forward(&a, &x));
    }

    #[test]
    fn interval_bounds_enclose(net in arb_net(2, 2), x in arb_point(2)) {
        let bounds = net.output_bounds();
        for (v, iv) in net.evaluate_exact(&x).unwrap().iter().zip(&bounds) {
            prop_assert!(iv.contains(v));
        }
    }

    #[test]
    fn float_agrees_with_exact(net in arb_net(2, 1), x in arb_point(2)) {
        let exact = net.evaluate_exact(&x).unwrap()[0].to_f64();
        let xf: Vec<f64> = x.iter().map(Dyadic::to_f64).collect();
        let ev = FloatEvaluator::new(&net);
        let (v, e) = ev.evaluate_with_error(&xf).unwrap();
        prop_assert!((v[0] - exact).abs() <= e[0] + f64::EPSILON * exact.abs());
    }
}
