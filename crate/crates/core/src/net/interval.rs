use alloc::vec;
use alloc::vec::Vec;

use super::ReluNetwork;
use crate::Dyadic;

/// A closed interval; `None` ends are infinite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Option<Dyadic>,
    pub hi: Option<Dyadic>,
}

impl Interval {
    pub fn new(lo: Dyadic, hi: Dyadic) -> Interval {
        Interval { lo: Some(lo), hi: Some(hi) }
    }

    pub fn point(v: Dyadic) -> Interval {
        Interval { lo: Some(v.clone()), hi: Some(v) }
    }

    pub fn unit() -> Interval {
        Interval::new(Dyadic::zero(), Dyadic::one())
    }

    pub fn unbounded() -> Interval {
        Interval { lo: None, hi: None }
    }

    pub fn contains(&self, x: &Dyadic) -> bool {
        self.lo.as_ref().is_none_or(|lo| lo <= x) && self.hi.as_ref().is_none_or(|hi| x <= hi)
    }

    fn relu(&self) -> Interval {
        Interval {
            lo: Some(self.lo.as_ref().map_or(Dyadic::zero(), Dyadic::relu)),
            hi: self.hi.as_ref().map(Dyadic::relu),
        }
    }
}

/// Declared input domain, one interval per coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBox(pub Vec<Interval>);

impl InputBox {
    /// `[0,1]^d`.
    pub fn unit(d: usize) -> InputBox {
        InputBox(vec![Interval::unit(); d])
    }

    /// `[lo,hi]^d`.
    pub fn cube(d: usize, lo: Dyadic, hi: Dyadic) -> InputBox {
        InputBox(vec![Interval::new(lo, hi); d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, x: &[Dyadic]) -> bool {
        x.len() == self.0.len() && self.0.iter().zip(x).all(|(i, v)| i.contains(v))
    }

    pub fn concat(boxes: &[&InputBox]) -> InputBox {
        InputBox(boxes.iter().flat_map(|b| b.0.iter().cloned()).collect())
    }
}

fn add_scaled(acc: &mut Option<Dyadic>, w: &Dyadic, x: &Option<Dyadic>) {
    if let Some(a) = acc.as_mut() {
        match x {
            Some(v) => *a += w * v,
            None => *acc = None,
        }
    }
}

pub(super) fn propagate(net: &ReluNetwork) -> Vec<Interval> {
    let mut cur: Vec<Interval> = net.input_box().0.clone();
    let last = net.layers().len() - 1;
    for (li, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.out_dim());
        for r in 0..layer.out_dim() {
            let mut lo = Some(layer.bias(r).clone());
            let mut hi = Some(layer.bias(r).clone());
            for (c, w, _) in layer.row(r) {
                if w.is_zero() {
                    continue;
                }
                let x = &cur[c];
                if w.is_positive() {
                    add_scaled(&mut lo, w, &x.lo);
                    add_scaled(&mut hi, w, &x.hi);
                } else {
                    add_scaled(&mut lo, w, &x.hi);
                    add_scaled(&mut hi, w, &x.lo);
                }
            }
            let iv = Interval { lo, hi };
            next.push(if li < last { iv.relu() } else { iv });
        }
        cur = next;
    }
    cur
}
