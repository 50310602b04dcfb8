//! Exact reachability along one input coordinate.
//!
//! When a single input moves, every pre-activation is a piecewise affine
//! function of its offset `t`. Walking the layers while splitting the range
//! of `t` at each free neuron's zero crossing yields closed pieces on which
//! the network is affine. Variable bounds, fixed activation phases and
//! output rows each cut a piece down to a sub-interval, so the surviving
//! pieces are exactly the offsets consistent with all of them.

use crate::encoder::{NeuronEncoding, VarMap};
use crate::milp_model::Sense;
use crate::network::Network;
use crate::scalar::Scalar;

/// A linear row over network outputs: `sum c * out[i]  sense  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OutputRow<T> {
    pub coeffs: Vec<(T, usize)>,
    pub sense: Sense,
    pub rhs: T,
}

pub(crate) struct Line<'a, T: Scalar> {
    pub net: &'a Network<T>,
    pub varmap: &'a VarMap,
    pub base: &'a [T],
    pub input: usize,
    pub rows: &'a [OutputRow<T>],
    pub max_pieces: usize,
}

pub(crate) struct Reach<T> {
    /// Disjoint closed offset intervals, increasing.
    pub pieces: Vec<(T, T)>,
    /// Range of every pre-activation over the pieces, per layer.
    pub pre: Vec<Vec<(T, T)>>,
}

#[derive(Clone)]
struct Piece<T> {
    a: T,
    b: T,
    /// Affine maps `alpha + beta * t` of the current layer's values.
    maps: Vec<(T, T)>,
}

/// Restricts `[a, b]` to the offsets where `lo <= alpha + beta * t <= hi`,
/// with a small relative slack so rounding never removes a valid point.
fn cut<T: Scalar>(a: T, b: T, alpha: T, beta: T, lo: T, hi: T) -> Option<(T, T)> {
    let scale = T::one().max(alpha.abs() + beta.abs() * a.abs().max(b.abs()));
    let tol = T::lit(1e-9) * scale;
    let (lo, hi) = (lo - tol, hi + tol);
    if beta == T::zero() {
        return (alpha >= lo && alpha <= hi).then_some((a, b));
    }
    let (mut ta, mut tb) = ((lo - alpha) / beta, (hi - alpha) / beta);
    if beta < T::zero() {
        std::mem::swap(&mut ta, &mut tb);
    }
    let na = if ta.is_nan() { a } else { a.max(ta) };
    let nb = if tb.is_nan() { b } else { b.min(tb) };
    (na <= nb).then_some((na, nb))
}

impl<T: Scalar> Line<'_, T> {
    /// Pieces of `[t_lo, t_hi]` consistent with the bounds. `None` when the
    /// piece budget is exceeded.
    pub fn reach(&self, lower: &[T], upper: &[T], t_lo: T, t_hi: T) -> Option<Reach<T>> {
        let zero = T::zero();
        let half = T::lit(0.5);
        if t_lo > t_hi {
            return Some(Reach {
                pieces: Vec::new(),
                pre: Vec::new(),
            });
        }
        let start = Piece {
            a: t_lo,
            b: t_hi,
            maps: self
                .base
                .iter()
                .enumerate()
                .map(|(j, &v)| (v, if j == self.input { T::one() } else { zero }))
                .collect(),
        };
        let mut pieces = vec![start];
        for (layer, encs) in self.net.layers().iter().zip(&self.varmap.layers) {
            let mut next = Vec::with_capacity(pieces.len());
            for p in pieces {
                let pre: Vec<(T, T)> = layer
                    .weights
                    .iter()
                    .zip(&layer.biases)
                    .map(|(row, &bias)| {
                        row.iter()
                            .zip(&p.maps)
                            .fold((bias, zero), |(al, be), (&w, &(a, b))| (al + w * a, be + w * b))
                    })
                    .collect();
                let (mut a, mut b) = (p.a, p.b);
                let mut alive = true;
                // phase: Some(true) active, Some(false) inactive, None free
                let mut phase: Vec<Option<bool>> = Vec::with_capacity(encs.len());
                for (&(al, be), enc) in pre.iter().zip(encs) {
                    let (lo, hi, ph) = match *enc {
                        NeuronEncoding::Linear(y) => (lower[y.index()], upper[y.index()], Some(true)),
                        NeuronEncoding::Relu(nv) => {
                            let (x, s, ac) = (nv.x.index(), nv.s.index(), nv.ac.index());
                            if lower[ac] > half {
                                if lower[x] > T::lit(1e-9) {
                                    alive = false;
                                    break;
                                }
                                (-upper[s], -lower[s].max(zero), Some(false))
                            } else if upper[ac] < half {
                                if lower[s] > T::lit(1e-9) {
                                    alive = false;
                                    break;
                                }
                                (lower[x].max(zero), upper[x], Some(true))
                            } else {
                                let lo = if lower[x] > zero { lower[x] } else { -upper[s] };
                                let hi = if lower[s] > zero { -lower[s] } else { upper[x] };
                                (lo, hi, None)
                            }
                        }
                    };
                    match cut(a, b, al, be, lo, hi) {
                        Some((na, nb)) => {
                            a = na;
                            b = nb;
                        }
                        None => {
                            alive = false;
                            break;
                        }
                    }
                    phase.push(ph);
                }
                if !alive {
                    continue;
                }
                let mut splits = vec![a];
                for (&(al, be), ph) in pre.iter().zip(&phase) {
                    if ph.is_none() && be != zero {
                        let t = -al / be;
                        if t > a && t < b {
                            splits.push(t);
                        }
                    }
                }
                splits.push(b);
                splits.sort_by(|x, y| x.partial_cmp(y).expect("finite split points"));
                splits.dedup();
                if splits.len() == 1 {
                    splits.push(b);
                }
                for w in splits.windows(2) {
                    let mid = (w[0] + w[1]) * half;
                    let maps = pre
                        .iter()
                        .zip(&phase)
                        .map(|(&(al, be), ph)| {
                            let active = ph.unwrap_or_else(|| al + be * mid > zero);
                            if active {
                                (al, be)
                            } else {
                                (zero, zero)
                            }
                        })
                        .collect();
                    next.push(Piece { a: w[0], b: w[1], maps });
                }
                if next.len() > self.max_pieces {
                    return None;
                }
            }
            pieces = next;
        }
        if !self.rows.is_empty() {
            pieces.retain_mut(|p| {
                for row in self.rows {
                    let (al, be) = row
                        .coeffs
                        .iter()
                        .fold((zero, zero), |(al, be), &(c, i)| (al + c * p.maps[i].0, be + c * p.maps[i].1));
                    let (lo, hi) = match row.sense {
                        Sense::Le => (T::neg_infinity(), row.rhs),
                        Sense::Ge => (row.rhs, T::infinity()),
                        Sense::Eq => (row.rhs, row.rhs),
                    };
                    match cut(p.a, p.b, al, be, lo, hi) {
                        Some((a, b)) => {
                            p.a = a;
                            p.b = b;
                        }
                        None => return false,
                    }
                }
                true
            });
        }
        let mut pre: Vec<Vec<(T, T)>> = self
            .net
            .layers()
            .iter()
            .map(|l| vec![(T::infinity(), T::neg_infinity()); l.outputs()])
            .collect();
        let mut x = self.base.to_vec();
        let mut out: Vec<(T, T)> = Vec::with_capacity(pieces.len());
        for p in &pieces {
            for t in [p.a, p.b] {
                x[self.input] = self.base[self.input] + t;
                let trace = self.net.forward_trace(&x).ok()?;
                for (r, lt) in pre.iter_mut().zip(&trace) {
                    for (range, &v) in r.iter_mut().zip(&lt.pre) {
                        range.0 = range.0.min(v);
                        range.1 = range.1.max(v);
                    }
                }
            }
            match out.last_mut() {
                Some(last) if p.a <= last.1 => last.1 = last.1.max(p.b),
                _ => out.push((p.a, p.b)),
            }
        }
        Some(Reach { pieces: out, pre })
    }
}

/// Point of `pieces` closest to `t` (ties to the lower one).
pub(crate) fn project<T: Scalar>(pieces: &[(T, T)], t: T) -> Option<T> {
    let mut best: Option<(T, T)> = None;
    for &(a, b) in pieces {
        let p = t.max(a).min(b);
        let d = (p - t).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}
