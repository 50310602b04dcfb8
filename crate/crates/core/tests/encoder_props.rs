mod common;

use proptest::prelude::*;
use rand::Rng;
use ripple_core::bb_solver::{lexicographic_solve_with, solve_milp, solve_milp_with, MilpStatus, SolverConfig};
use ripple_core::encoder::{encode, AttackConstraint, ObjectiveKind, PerturbationSpec};
use ripple_core::lp_solver::{solve_lp, LpStatus};
use ripple_core::milp_model::{LinearExpr, Objective};
use ripple_core::network::{ActivationKind, Network};

fn act_strategy() -> impl Strategy<Value = ActivationKind> {
    prop_oneof![Just(ActivationKind::Relu), Just(ActivationKind::Linear)]
}

fn random_setup(seed: u64, act: ActivationKind, outputs: usize) -> (Network, PerturbationSpec, rand_chacha::ChaCha8Rng) {
    let mut rng = common::rng(seed);
    let inputs = rng.gen_range(1..=3);
    let shape = common::random_shape(&mut rng, inputs, 3, 6, outputs);
    let net = common::random_net(&mut rng, &shape, act);
    let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let allowed: Vec<usize> = (0..inputs).filter(|_| rng.gen_bool(0.7)).collect();
    let allowed = if allowed.is_empty() { vec![0] } else { allowed };
    let r = rng.gen_range(0.5..3.0);
    (net, PerturbationSpec::uniform(base, allowed, -r, r), rng)
}

fn random_delta(rng: &mut impl Rng, pert: &PerturbationSpec) -> Vec<f64> {
    (0..pert.base.len())
        .map(|i| {
            if pert.is_allowed(i) {
                rng.gen_range(pert.delta_lower[i]..=pert.delta_upper[i])
            } else {
                0.0
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_points_satisfy_encoding(seed in any::<u64>(), act in act_strategy()) {
        let (net, pert, mut rng) = random_setup(seed, act, 2);
        let ea = encode(&net, &pert).unwrap();
        for _ in 0..50 {
            let delta = random_delta(&mut rng, &pert);
            let v = common::oracle_assignment(&ea, &net, &pert, &delta);
            prop_assert!(ea.model.max_violation(&v) <= 1e-9);
        }
    }

    #[test]
    fn counts_follow_the_network(seed in any::<u64>(), act in act_strategy()) {
        let (net, pert, _) = random_setup(seed, act, 3);
        let mut ea = encode(&net, &pert).unwrap();
        let relus = net.relu_neuron_count();
        let linear = net.layers().iter().filter(|l| l.activation == ActivationKind::Linear).map(|l| l.outputs()).sum::<usize>();
        prop_assert_eq!(ea.model.constraints().len(), relus + linear);
        prop_assert_eq!(ea.model.indicators().len(), 2 * relus);
        prop_assert_eq!(ea.model.binaries().count(), relus);
        prop_assert_eq!(ea.model.var_count(), 2 * pert.allowed.len() + 3 * relus + linear);
        prop_assert_eq!(ea.varmap.deltas.iter().flatten().count(), pert.allowed.len());
        let before = ea.model.constraints().len();
        ea.add_attack_constraint(AttackConstraint::TotalOrdering { permutation: vec![2, 0, 1], eps: 1e-4 }).unwrap();
        ea.add_attack_constraint(AttackConstraint::MinScore { target: 1, eps: 1e-4 }).unwrap();
        prop_assert_eq!(ea.model.constraints().len(), before + 2 + 2);
    }

    #[test]
    fn true_pattern_lp_reproduces_forward(seed in any::<u64>(), act in act_strategy()) {
        let (net, pert, mut rng) = random_setup(seed, act, 2);
        let ea = encode(&net, &pert).unwrap();
        for _ in 0..10 {
            let delta = random_delta(&mut rng, &pert);
            let x: Vec<f64> = pert.base.iter().zip(&delta).map(|(b, d)| b + d).collect();
            let pattern = net.activation_pattern(&x).unwrap();
            let mut lp = ea.fix_pattern(&pattern).unwrap();
            for (i, d) in ea.varmap.deltas.iter().enumerate() {
                if let Some((p, m)) = d {
                    lp.lower[p.index()] = delta[i].max(0.0);
                    lp.upper[p.index()] = delta[i].max(0.0);
                    lp.lower[m.index()] = (-delta[i]).max(0.0);
                    lp.upper[m.index()] = (-delta[i]).max(0.0);
                }
            }
            let out = solve_lp(&lp, 1e-9).unwrap();
            prop_assert_eq!(out.status, LpStatus::Optimal);
            let trace = common::forward_oracle(&net, &x);
            for (vals, (_, post)) in ea.layer_values(&out.values).iter().zip(&trace) {
                for (a, b) in vals.iter().zip(post) {
                    prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn solutions_decode_to_forward(seed in any::<u64>(), act in act_strategy(), hooks in any::<bool>()) {
        let (net, pert, mut rng) = random_setup(seed, act, 2);
        let mut ea = encode(&net, &pert).unwrap();
        ea.set_objective(ObjectiveKind::MinPerturbation).unwrap();
        // Push an output in a random direction, then keep the perturbation small.
        let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let first = Objective::maximize(LinearExpr::new().term(dir, ea.varmap.outputs[0]));
        let second = ea.model.objectives()[0].clone();
        ea.model.set_objectives(vec![first, second]).unwrap();
        let cfg = SolverConfig::default();
        let out = if hooks {
            lexicographic_solve_with(&ea.model, &cfg, &ea).unwrap()
        } else {
            ripple_core::bb_solver::lexicographic_solve(&ea.model, &cfg).unwrap()
        };
        prop_assert_eq!(out.status, MilpStatus::Optimal);
        let best = out.best.unwrap();
        let dec = ea.decode(&best.values);
        let x: Vec<f64> = pert.base.iter().zip(&dec.delta).map(|(b, d)| b + d).collect();
        let y = common::output_oracle(&net, &x);
        for (a, b) in dec.outputs.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        for nv in ea.varmap.relu_neurons() {
            prop_assert!(best.values[nv.x.index()].min(best.values[nv.s.index()]) <= 1e-6);
        }
        for (p, m) in ea.varmap.deltas.iter().flatten() {
            prop_assert!(best.values[p.index()].min(best.values[m.index()]) <= 1e-6);
        }
    }

    #[test]
    fn hooks_do_not_change_optimum(seed in any::<u64>(), act in act_strategy()) {
        let (net, pert, mut rng) = random_setup(seed, act, 2);
        let mut ea = encode(&net, &pert).unwrap();
        let y0 = net.forward(&pert.base).unwrap();
        let shift = rng.gen_range(0.05..1.0);
        ea.add_attack_constraint(AttackConstraint::MinOutputIncrease { index: 0, threshold: shift }).unwrap();
        ea.set_objective(ObjectiveKind::MinPerturbation).unwrap();
        let cfg = SolverConfig::default();
        let plain = solve_milp(&ea.model, &cfg).unwrap();
        let hooked = solve_milp_with(&ea.model, &cfg, &ea).unwrap();
        prop_assert_eq!(plain.status, hooked.status);
        if let (Some(a), Some(b)) = (plain.best, hooked.best) {
            prop_assert!((a.objectives[0] - b.objectives[0]).abs() <= 1e-6, "{} vs {}", a.objectives[0], b.objectives[0]);
            let dec = ea.decode(&b.values);
            let x: Vec<f64> = pert.base.iter().zip(&dec.delta).map(|(b, d)| b + d).collect();
            prop_assert!(common::output_oracle(&net, &x)[0] >= y0[0] + shift - 1e-6);
        }
    }
}
