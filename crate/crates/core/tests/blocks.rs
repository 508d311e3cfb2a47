use fewparam_core::blocks::*;
use fewparam_core::net::{sweep_univariate, ExactEvaluator};
use fewparam_core::{Dyadic, Error, ReluNetwork};
use num_bigint::BigInt;
use proptest::prelude::*;

fn dy(num: i64, exp: u32) -> Dyadic {
    Dyadic::from_ratio_pow2(num, exp)
}

fn eval1(net: &ReluNetwork, x: &[Dyadic]) -> Dyadic {
    let out = net.evaluate_exact(x).unwrap();
    assert_eq!(out.len(), 1);
    out.into_iter().next().unwrap()
}

fn clamp01(v: Dyadic) -> Dyadic {
    v.clamp(Dyadic::zero(), Dyadic::one())
}

/// Step oracle: sum of unit ramps ending at each interior knot `j/K`.
fn step_oracle(k: u64, delta: &Dyadic, x: &Dyadic) -> Dyadic {
    let mut acc = Dyadic::zero();
    let lk = k.trailing_zeros();
    let inv = Dyadic::pow2(-delta.log2_exact().unwrap());
    for j in 1..k {
        let knot = dy(j as i64, lk);
        acc += clamp01((x - &(&knot - delta)) * &inv);
    }
    acc
}

/// Power map oracle: linear interpolation of `j -> 4^j` through integers, flat below 1.
fn power_oracle(x: &Dyadic) -> Dyadic {
    if *x <= Dyadic::one() {
        return Dyadic::from_int(4);
    }
    let j = x.floor();
    let j: i64 = i64::try_from(j).unwrap();
    let lo = Dyadic::pow2(2 * j);
    let hi = Dyadic::pow2(2 * j + 2);
    let t = x - Dyadic::from_int(j);
    &lo + (&hi - &lo) * t
}

/// Sawtooth oracle: `1 - |y - 2 floor(y/2) - 1|`.
fn saw_oracle(y: &Dyadic) -> Dyadic {
    let half = y.mul_pow2(-1).floor();
    let r = y - Dyadic::from(half) * Dyadic::from_int(2);
    Dyadic::one() - (r - Dyadic::one()).abs()
}

/// Interpolant of `t^2` on the grid `2^-r Z`.
fn square_interp(t: &Dyadic, r: u32) -> Dyadic {
    let scaled = t.mul_pow2(r as i64);
    let i = Dyadic::from(scaled.floor());
    let a = i.mul_pow2(-(r as i64));
    let b = (&i + Dyadic::one()).mul_pow2(-(r as i64));
    let frac = scaled - &i;
    let fa = &a * &a;
    let fb = &b * &b;
    &fa + (fb - &fa) * frac
}

#[test]
fn step_plateaus_and_ramps() {
    for (k, delta) in [(1u64, dy(1, 2)), (2, dy(1, 3)), (4, dy(1, 4)), (8, dy(1, 5))] {
        let g = build_step(k, &delta).unwrap();
        assert_eq!(g.depth(), 1);
        for i in 0..=256 {
            let x = dy(i, 8);
            assert_eq!(eval1(&g, std::slice::from_ref(&x)), step_oracle(k, &delta, &x), "K={k} x={x}");
        }
        // Definition on plateaus.
        for c in 0..k {
            let lo = dy(c as i64, k.trailing_zeros());
            let hi = dy(c as i64 + 1, k.trailing_zeros()) - &delta;
            assert_eq!(eval1(&g, &[lo]), Dyadic::from(c));
            assert_eq!(eval1(&g, &[hi]), Dyadic::from(c));
        }
    }
}

#[test]
fn step_rejects_bad_arguments() {
    assert!(matches!(build_step(3, &dy(1, 4)), Err(Error::InvalidArgument(_))));
    assert!(matches!(build_step(4, &dy(3, 6)), Err(Error::InvalidDelta(_))));
    assert!(matches!(build_step(4, &dy(1, 3)), Err(Error::InvalidDelta(_))));
}

#[test]
fn power_map_interpolates() {
    for j_max in [1u64, 2, 5, 16] {
        let h = build_power_map(j_max).unwrap();
        for i in 0..=(j_max as i64 * 16) {
            let x = dy(i, 4);
            assert_eq!(eval1(&h, std::slice::from_ref(&x)), power_oracle(&x), "J={j_max} x={x}");
        }
        for j in 1..=j_max {
            assert_eq!(eval1(&h, &[Dyadic::from(j)]), Dyadic::pow2(2 * j as i64));
        }
    }
}

#[test]
fn phi1_on_plateaus() {
    for (d, n) in [(1usize, 1u32), (1, 3), (2, 2), (3, 1)] {
        let k = 1i64 << n;
        let delta = Dyadic::pow2(-(n as i64) - 2);
        let phi = build_phi1(d, n, &delta).unwrap();
        let cells = (k as usize).pow(d as u32);
        for c in 0..cells {
            let beta: Vec<i64> = (0..d).map(|i| (c as i64 / k.pow(i as u32)) % k).collect();
            let rho = 1 + beta.iter().enumerate().map(|(i, b)| b * k.pow(i as u32)).sum::<i64>();
            let expect = Dyadic::pow2(2 * rho);
            for corner in 0..(1 << d) {
                let x: Vec<Dyadic> = beta
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| if corner >> i & 1 == 0 { dy(b, n) } else { dy(b + 1, n) - &delta })
                    .collect();
                assert_eq!(eval1(&phi, &x), expect, "d={d} n={n} beta={beta:?}");
            }
        }
    }
}

#[test]
fn sawtooth_known_value_and_shape() {
    let t = build_sawtooth(4).unwrap();
    assert_eq!(eval1(&t, &[dy(85, 6)]), dy(43, 6));
    for j in 0..4u64 {
        let t = build_sawtooth(j).unwrap();
        assert_eq!(t.depth(), 2 * j as usize + 1);
        assert_eq!(t.width(), 2);
        let top = 1i64 << (2 * j + 1);
        for i in 0..=(top * 8) {
            let y = dy(i, 3);
            assert_eq!(eval1(&t, std::slice::from_ref(&y)), saw_oracle(&y));
        }
    }
}

#[test]
fn extractor_exhaustive() {
    for jj in 1..=6u64 {
        let ext = build_bit_extractor(jj).unwrap();
        assert_eq!(ext.depth(), 2 * jj as usize + 2);
        assert_eq!(ext.width(), 2);
        let ev = ExactEvaluator::new(&ext);
        for code in 0u64..(1 << jj) {
            // a = sum_j theta_j 4^-j with theta_j = bit (j-1) of code.
            let mut a = Dyadic::zero();
            for j in 1..=jj {
                if code >> (j - 1) & 1 == 1 {
                    a += Dyadic::pow2(-2 * j as i64);
                }
            }
            for j in 1..=jj {
                let y = a.mul_pow2(2 * j as i64);
                let got = ev.evaluate(&[y]).unwrap().remove(0);
                assert_eq!(got, Dyadic::from(code >> (j - 1) & 1), "J={jj} code={code} j={j}");
            }
        }
    }
}

#[test]
fn phi2_reads_one_digit_per_word() {
    let (d, n) = (1usize, 2u32);
    let jj = 4u64;
    let phi = build_phi2(d, n).unwrap();
    let words = [[1u8, 1, 1, 1], [0, 0, 1, 1]];
    let a: Vec<Dyadic> = words
        .iter()
        .map(|w| w.iter().enumerate().map(|(j, &t)| if t == 1 { Dyadic::pow2(-2 * (j as i64 + 1)) } else { Dyadic::zero() }).fold(Dyadic::zero(), |s, v| s + v))
        .collect();
    assert_eq!(a, vec![dy(85, 8), dy(5, 8)]);
    for j in 1..=jj {
        let y: Vec<Dyadic> = a.iter().map(|v| v.mul_pow2(2 * j as i64)).collect();
        let expect = dy(words[0][j as usize - 1] as i64, 1) + dy(words[1][j as usize - 1] as i64, 2);
        assert_eq!(eval1(&phi, &y), expect);
    }
}

#[test]
fn unpacker_exhaustive_small() {
    for (m, n) in [(1u32, 1u32), (2, 1), (1, 3), (2, 2), (3, 2), (2, 4), (4, 3)] {
        let net = build_unpacker(m, n).unwrap();
        assert_eq!(net.depth(), 1);
        let total = m * n;
        let points: Vec<Dyadic> = (0..(1i64 << total)).map(|w| dy(w, total)).collect();
        let swept = sweep_univariate(&net, &points).unwrap();
        let ev = ExactEvaluator::new(&net);
        for (w, (v, got)) in points.iter().zip(&swept).enumerate() {
            // Oracle: split the integer word into n chunks of m bits, most significant first.
            let expect: Vec<Dyadic> = (1..=n).map(|i| dy(((w >> (m * (n - i))) & ((1 << m) - 1)) as i64, m)).collect();
            assert_eq!(got, &expect, "m={m} n={n} w={w}");
            if w % 7 == 0 {
                assert_eq!(ev.evaluate(std::slice::from_ref(v)).unwrap(), expect);
            }
        }
    }
}

#[test]
fn unpacker_cap() {
    assert!(build_unpacker(5, 4).is_ok());
    match build_unpacker(7, 3) {
        Err(Error::PackingCapExceeded { required_breakpoints, cap_bits }) => {
            assert_eq!(required_breakpoints, 1 << 21);
            assert_eq!(cap_bits, UNPACK_CAP_BITS);
        }
        other => panic!("expected cap error, got {other:?}"),
    }
    assert_eq!(unpack_ramp(4, 5), dy(1, 20));
}

#[test]
fn square_is_grid_interpolant() {
    for r in 0..=8u32 {
        let sq = build_square_approx(r).unwrap();
        assert_eq!(sq.depth(), r as usize);
        if r > 0 {
            assert_eq!(sq.width(), 3);
        }
        for i in 0..=1024 {
            let t = dy(i, 10);
            let got = eval1(&sq, std::slice::from_ref(&t));
            assert_eq!(got, square_interp(&t, r), "r={r} t={t}");
            assert!((&got - &t * &t).abs() <= Dyadic::pow2(-2 * r as i64 - 2));
        }
    }
}

#[test]
fn multiplier_desk_value() {
    let psi = build_mult_approx(&Dyadic::one(), 4).unwrap();
    assert_eq!(psi.depth(), 5);
    assert_eq!(psi.width(), 6);
    let v = eval1(&psi, &[dy(3, 3), dy(5, 3)]);
    assert!((v - dy(15, 6)).abs() <= dy(1, 9));
}

#[test]
fn multiplier_scale_and_bound() {
    assert_eq!(mult_scale(&Dyadic::from_int(257)).unwrap(), Dyadic::from_int(512));
    assert_eq!(mult_error_bound(&Dyadic::from_int(257), 11).unwrap(), Dyadic::pow2(18 - 23));
    assert!(mult_scale(&Dyadic::zero()).is_err());
}

#[test]
fn mid_and_triples() {
    let mid = build_mid_net();
    assert_eq!(mid.depth(), 2);
    assert_eq!(mid.width(), 6);
    // A step net evaluated at x - delta, x, x + delta.
    let delta = dy(1, 4);
    let g = build_step(4, &delta).unwrap();
    let tri = shifted_triple(&g, 0, &delta).unwrap();
    let med = mid_of_three(&g).unwrap();
    for i in 0..=64 {
        let x = dy(i, 6);
        let ys = tri.evaluate_exact(std::slice::from_ref(&x)).unwrap();
        let expect: Vec<Dyadic> = [-delta.clone(), Dyadic::zero(), delta.clone()].iter().map(|s| eval1(&g, &[&x + s])).collect();
        assert_eq!(ys, expect);
        let mut sorted = expect.clone();
        sorted.sort();
        let shifted: Vec<Dyadic> = [-delta.clone(), Dyadic::zero(), delta.clone()].iter().map(|s| &x + s).collect();
        assert_eq!(eval1(&med, &shifted), sorted[1]);
    }
}

proptest! {
    #[test]
    fn mid_is_median(a in -1000i64..1000, b in -1000i64..1000, c in -1000i64..1000, e in 0u32..6) {
        let mut v = vec![dy(a, e), dy(b, e), dy(c, e)];
        let got = eval1(&build_mid_net(), &v);
        v.sort();
        prop_assert_eq!(got, v[1].clone());
    }

    #[test]
    fn extractor_tolerates_small_tails(k in 0i64..16, f in 0i64..=48, hi in any::<bool>()) {
        // Any y with saw(y) <= 3/8 reads 0 and saw(y) >= 5/8 reads 1.
        let ext = build_bit_extractor(2).unwrap();
        let tail = dy(f, 7);
        let y = Dyadic::from_int(2 * k + hi as i64) + &tail;
        prop_assert_eq!(eval1(&ext, &[y]), Dyadic::from(hi as i64));
    }

    #[test]
    fn sweep_matches_evaluator(m in 1u32..4, n in 1u32..4, raw in proptest::collection::vec(0i64..(1 << 14), 1..20)) {
        let net = build_unpacker(m, n).unwrap();
        let mut xs: Vec<Dyadic> = raw.iter().map(|&r| dy(r, 14)).collect();
        xs.sort();
        let swept = sweep_univariate(&net, &xs).unwrap();
        for (x, s) in xs.iter().zip(swept) {
            prop_assert_eq!(net.evaluate_exact(std::slice::from_ref(x)).unwrap(), s);
        }
    }

    #[test]
    fn multiplier_error_within_bound(x in -256i64..=256, y in -256i64..=256, r in 1u32..8) {
        let m = Dyadic::from_int(3);
        let psi = build_mult_approx(&m, r).unwrap();
        let (x, y) = (dy(3 * x, 8), dy(3 * y, 8));
        let v = eval1(&psi, &[x.clone(), y.clone()]);
        prop_assert!((v - &x * &y).abs() <= mult_error_bound(&m, r).unwrap());
    }
}

#[test]
fn big_shapes_stay_exact() {
    // 4^J for J = 16 needs 32 bits; check the top of the power map range.
    let h = build_power_map(40).unwrap();
    assert_eq!(eval1(&h, &[Dyadic::from_int(40)]).numerator(), BigInt::from(1) << 80u32);
}

#[test]
fn named_values() {
    let mid = build_mid_net();
    let ints = |v: [i64; 3]| v.map(Dyadic::from_int).to_vec();
    assert_eq!(eval1(&mid, &ints([2, 1, 3])), Dyadic::from_int(2));
    assert_eq!(eval1(&mid, &ints([3, 2, 3])), Dyadic::from_int(3));

    let sq1 = build_square_approx(1).unwrap();
    assert_eq!(eval1(&sq1, &[dy(1, 1)]), dy(1, 2));
    for r in 0..6 {
        let sq = build_square_approx(r).unwrap();
        assert_eq!(eval1(&sq, &[Dyadic::zero()]), Dyadic::zero());
        assert_eq!(eval1(&sq, &[Dyadic::one()]), Dyadic::one());
    }
    let sq3 = build_square_approx(3).unwrap();
    for i in 0..=1024 {
        let t = dy(i, 10);
        assert!((eval1(&sq3, std::slice::from_ref(&t)) - &t * &t).abs() <= dy(1, 8));
    }

    // Ten points on every plateau, endpoints included.
    let (k, delta) = (8u64, dy(1, 5));
    let g = build_step(k, &delta).unwrap();
    let width = dy(1, 3) - &delta;
    for c in 0..k as i64 {
        let lo = dy(c, 3);
        for frac in [0, 1, 2, 3, 5, 8, 11, 13, 15, 16] {
            let x = &lo + &width * dy(frac, 4);
            assert_eq!(eval1(&g, &[x]), Dyadic::from_int(c));
        }
    }
}
