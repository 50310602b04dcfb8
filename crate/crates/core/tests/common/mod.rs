//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ripple_core::encoder::{EncodedAttack, NeuronEncoding, PerturbationSpec};
use ripple_core::lp_solver::{solve_lp, LpProblem, LpRow, LpStatus};
use ripple_core::milp_model::{MilpModel, ObjectiveSense};
use ripple_core::network::{ActivationKind, LayerSpec, Network};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense network with weights in [-1, 1] and biases in [-0.5, 0.5].
pub fn random_net(rng: &mut impl Rng, widths: &[usize], final_act: ActivationKind) -> Network {
    let mut layers = Vec::new();
    for (k, w) in widths.windows(2).enumerate() {
        let weights = (0..w[1])
            .map(|_| (0..w[0]).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let biases = (0..w[1]).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        let act = if k + 2 == widths.len() { final_act } else { ActivationKind::Relu };
        layers.push(LayerSpec::new(weights, biases, act));
    }
    Network::new(widths[0], layers).unwrap()
}

/// Random shape with `inputs` inputs, up to `max_hidden` hidden layers of
/// at most `max_width` neurons and `outputs` outputs.
pub fn random_shape(rng: &mut impl Rng, inputs: usize, max_hidden: usize, max_width: usize, outputs: usize) -> Vec<usize> {
    let hidden = rng.gen_range(1..=max_hidden);
    let mut v = vec![inputs];
    for _ in 0..hidden {
        v.push(rng.gen_range(1..=max_width));
    }
    v.push(outputs);
    v
}

/// Pre-activations and post-activations of every layer, computed with
/// plain index loops.
pub fn forward_oracle(net: &Network, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut cur = x.to_vec();
    let mut out = Vec::new();
    for layer in net.layers() {
        let mut pre = vec![0.0; layer.biases.len()];
        for i in 0..pre.len() {
            let mut acc = layer.biases[i];
            for j in 0..cur.len() {
                acc += layer.weights[i][j] * cur[j];
            }
            pre[i] = acc;
        }
        let post: Vec<f64> = match layer.activation {
            ActivationKind::Relu => pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            ActivationKind::Linear => pre.clone(),
        };
        cur = post.clone();
        out.push((pre, post));
    }
    out
}

pub fn output_oracle(net: &Network, x: &[f64]) -> Vec<f64> {
    forward_oracle(net, x).pop().unwrap().1
}

/// Best objective over every assignment of the model's binaries, each
/// solved as an LP with the active indicators installed as rows. `None`
/// when no assignment is feasible.
pub fn enumerate_binaries(model: &MilpModel) -> Option<f64> {
    let bins: Vec<usize> = model.binaries().map(|v| v.index()).collect();
    assert!(bins.len() <= 16, "too many binaries to enumerate");
    let obj = &model.objectives()[0];
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut lower = model.lower_bounds();
        let mut upper = model.upper_bounds();
        let mut ok = true;
        for (k, &b) in bins.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            if v < lower[b] || v > upper[b] {
                ok = false;
            }
            lower[b] = v;
            upper[b] = v;
        }
        if !ok {
            continue;
        }
        let mut p = LpProblem::new(model.var_count(), lower.clone(), upper);
        p.set_objective(obj.sense, &obj.expr);
        for c in model.constraints() {
            p.rows.push(LpRow {
                coeffs: c.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                sense: c.sense,
                rhs: c.rhs - c.expr.constant,
            });
        }
        for ic in model.indicators() {
            let g = lower[ic.guard.index()] > 0.5;
            if g == ic.guard_value {
                p.rows.push(LpRow {
                    coeffs: ic.implied.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                    sense: ic.implied.sense,
                    rhs: ic.implied.rhs - ic.implied.expr.constant,
                });
            }
        }
        let out = solve_lp(&p, 1e-9).unwrap();
        if out.status != LpStatus::Optimal {
            continue;
        }
        let v = out.objective;
        best = Some(match (best, obj.sense) {
            (None, _) => v,
            (Some(b), ObjectiveSense::Minimize) => b.min(v),
            (Some(b), ObjectiveSense::Maximize) => b.max(v),
        });
    }
    best
}

/// Optimum of `max c.x` over `{x >= 0, A x <= b}` in two dimensions by
/// checking every intersection of two boundary lines.
pub fn vertex_oracle_2d(c: [f64; 2], a: &[[f64; 2]], b: &[f64]) -> Option<f64> {
    let mut lines: Vec<([f64; 2], f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    lines.push(([-1.0, 0.0], 0.0));
    lines.push(([0.0, -1.0], 0.0));
    let feasible = |x: [f64; 2]| lines.iter().all(|(r, rhs)| r[0] * x[0] + r[1] * x[1] <= rhs + 1e-9);
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (r1, b1) = lines[i];
            let (r2, b2) = lines[j];
            let det = r1[0] * r2[1] - r1[1] * r2[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(b1 * r2[1] - r1[1] * b2) / det, (r1[0] * b2 - b1 * r2[0]) / det];
            if feasible(x) {
                let v = c[0] * x[0] + c[1] * x[1];
                best = Some(best.map_or(v, |bv: f64| bv.max(v)));
            }
        }
    }
    best
}

/// Model assignment built from the loop oracle, independent of the
/// library's own forward pass.
pub fn oracle_assignment(ea: &EncodedAttack, net: &Network, pert: &PerturbationSpec, delta: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = pert.base.iter().zip(delta).map(|(b, d)| b + d).collect();
    let trace = forward_oracle(net, &x);
    let mut v = vec![0.0; ea.model.var_count()];
    for (i, d) in ea.varmap.deltas.iter().enumerate() {
        if let Some((p, m)) = d {
            v[p.index()] = delta[i].max(0.0);
            v[m.index()] = (-delta[i]).max(0.0);
        }
    }
    for (layer, (pre, _)) in ea.varmap.layers.iter().zip(&trace) {
        for (enc, &z) in layer.iter().zip(pre) {
            match enc {
                NeuronEncoding::Relu(nv) => {
                    v[nv.x.index()] = z.max(0.0);
                    v[nv.s.index()] = (-z).max(0.0);
                    v[nv.ac.index()] = if z < 0.0 { 1.0 } else { 0.0 };
                }
                NeuronEncoding::Linear(y) => v[y.index()] = z,
            }
        }
    }
    v
}
