//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use ripple_core::attack::{
    brute_force, enumerate_scenarios, run_campaign, synthesize, verify, AttackConfig, AttackResult, AttackStatus,
    Scenario,
};
use ripple_core::bb_solver::{solve_milp, solve_milp_with, MilpStatus, SolverConfig};
use ripple_core::encoder::{encode, AttackConstraint, ObjectiveKind, PerturbationSpec};
use ripple_core::lp_solver::{solve_lp, LpStatus};
use ripple_core::network::{ActivationKind, Interval, IntervalBox, Network};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Collects the solution checks that every solved attack must pass.
#[derive(Default)]
struct Fidelity {
    checked: usize,
    failures: Vec<String>,
}

impl Fidelity {
    fn check(&mut self, label: &str, net: &Network, cfg: &AttackConfig, res: &AttackResult) {
        if res.status != AttackStatus::Success || res.timed_out {
            return;
        }
        self.checked += 1;
        let x: Vec<f64> = cfg.base_input.iter().zip(&res.delta).map(|(b, d)| b + d).collect();
        let y = common::output_oracle(net, &x);
        let gap = y.iter().zip(&res.outputs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if y.len() != res.outputs.len() || gap > 1e-6 {
            self.failures.push(format!("{label}: output gap {gap:.3e}"));
        }
        let v = verify(net, res, cfg);
        if !v.ok {
            self.failures.push(format!("{label}: verify failed ({:?})", v.reason));
        }
    }
}

fn config(base: &[f64], lo: f64, hi: f64, constraint: &str) -> AttackConfig {
    AttackConfig::from_json_str(&format!(
        r#"{{"base_input": {base:?}, "delta_bounds": {{"lo": {lo}, "hi": {hi}}}, "constraint": {constraint}}}"#
    ))
    .expect("valid config")
}

fn small_net(rng: &mut impl Rng, inputs: usize, outputs: usize) -> Network {
    let act = if rng.gen_bool(0.5) { ActivationKind::Relu } else { ActivationKind::Linear };
    let shape = common::random_shape(rng, inputs, 3, 8, outputs);
    common::random_net(rng, &shape, act)
}

fn encoding_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inputs = rng.gen_range(1..=4);
        let outputs = rng.gen_range(1..=3);
        let net = small_net(&mut rng, inputs, outputs);
        let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = rng.gen_range(0.5..3.0);
        let pert = PerturbationSpec::uniform(base, (0..inputs).collect(), -r, r);
        let ea = encode(&net, &pert).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let delta: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-r..=r)).collect();
            let v = common::oracle_assignment(&ea, &net, &pert, &delta);
            worst = worst.max(ea.model.max_violation(&v));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-9, "max residual {worst:.3e}");
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("10000 assignments, max residual {worst:.1e}, {secs:.2} s"))
}

/// Threshold for `MinOutputIncrease` on output 0: half the best increase
/// seen at random points of the scenario box, so the feasible region has
/// interior. `None` when the output barely moves.
fn sampled_threshold(rng: &mut impl Rng, net: &Network, base: &[f64], idx: &[usize], r: f64) -> Option<f64> {
    let y0 = net.forward(base).unwrap()[0];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..400 {
        let mut x = base.to_vec();
        for &i in idx {
            x[i] += rng.gen_range(-r..=r);
        }
        best = best.max(net.forward(&x).unwrap()[0] - y0);
    }
    (best > 0.1).then_some(0.5 * best)
}

fn optimality_vs_grid(fid: &mut Fidelity) -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(303);
    let r = 1.0;
    let mut cases = 0;
    let mut worst_above: f64 = f64::NEG_INFINITY;
    let mut widest_gap: f64 = 0.0;
    while cases < 50 {
        let inputs = rng.gen_range(1..=2);
        let outputs = rng.gen_range(1..=2);
        let net = small_net(&mut rng, inputs, outputs);
        let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let idx: Vec<usize> = (0..inputs).collect();
        let Some(thr) = sampled_threshold(&mut rng, &net, &base, &idx, r) else {
            continue;
        };
        cases += 1;
        let cfg = config(
            &base,
            -r,
            r,
            &format!(r#"{{"type": "min_output_increase", "index": 0, "threshold": {thr}}}"#),
        );
        let sc = Scenario { id: 0, indices: idx };
        let res = synthesize(&net, &cfg, &sc, &SolverConfig::default()).map_err(|e| e.to_string())?;
        fid.check(&format!("optimality case {cases}"), &net, &cfg, &res);
        let grid = brute_force(&net, &cfg, &sc, 0.01).map_err(|e| e.to_string())?;
        let Some(grid) = grid else {
            return Err(format!("case {cases}: grid found no attack although sampling did"));
        };
        ensure!(res.status == AttackStatus::Success, "case {cases}: solver status {:?}", res.status);
        let milp = res.objectives[0];
        let k = inputs as f64;
        worst_above = worst_above.max(milp - grid.objective);
        widest_gap = widest_gap.max(grid.objective - milp);
        ensure!(milp <= grid.objective + 1e-6, "case {cases}: milp {milp} above grid {}", grid.objective);
        ensure!(
            milp >= grid.objective - 0.02 * k,
            "case {cases}: milp {milp} more than 0.02 per input below grid {}",
            grid.objective
        );
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 600.0, "took {secs:.1} s");
    Ok(format!(
        "50 nets, max(milp - grid) {worst_above:.1e}, max(grid - milp) {widest_gap:.1e}, {secs:.1} s"
    ))
}

fn enumeration_equivalence() -> Outcome {
    let mut rng = common::rng(404);
    let mut cases = 0;
    let mut feasible = 0;
    let mut worst: f64 = 0.0;
    while cases < 30 {
        let inputs = rng.gen_range(1..=3);
        let widths: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=5)).collect();
        let mut shape = vec![inputs];
        shape.extend(&widths);
        shape.push(2);
        let net = common::random_net(&mut rng, &shape, ActivationKind::Linear);
        if net.relu_neuron_count() > 10 {
            continue;
        }
        cases += 1;
        let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = net.forward(&base).unwrap();
        let pert = PerturbationSpec::uniform(base, (0..inputs).collect(), -2.0, 2.0);
        let mut ea = encode(&net, &pert).map_err(|e| e.to_string())?;
        let target = if y[0] < y[1] { 1 } else { 0 };
        ea.add_attack_constraint(AttackConstraint::MinScore { target, eps: 1e-3 })
            .map_err(|e| e.to_string())?;
        ea.set_objective(ObjectiveKind::MinPerturbation).map_err(|e| e.to_string())?;
        let oracle = common::enumerate_binaries(&ea.model);
        for hooked in [false, true] {
            let out = if hooked {
                solve_milp_with(&ea.model, &SolverConfig::default(), &ea)
            } else {
                solve_milp(&ea.model, &SolverConfig::default())
            }
            .map_err(|e| e.to_string())?;
            match oracle {
                None => ensure!(out.status == MilpStatus::Infeasible, "case {cases}: expected infeasible"),
                Some(v) => {
                    ensure!(out.status == MilpStatus::Optimal, "case {cases}: status {:?}", out.status);
                    let got = out.best.unwrap().objectives[0];
                    worst = worst.max((got - v).abs());
                    ensure!((got - v).abs() <= 1e-6, "case {cases}: {got} vs enumeration {v}");
                }
            }
        }
        feasible += usize::from(oracle.is_some());
    }
    Ok(format!("30 models ({feasible} feasible), max gap {worst:.1e}"))
}

fn infeasibility(fid: &mut Fidelity) -> Outcome {
    let mut rng = common::rng(505);
    let mut slowest: f64 = 0.0;
    for case in 0..20 {
        let inputs = rng.gen_range(1..=5);
        let outputs = rng.gen_range(1..=3);
        let net = small_net(&mut rng, inputs, outputs);
        let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = rng.gen_range(0.5..2.0);
        let bx = IntervalBox::new(base.iter().map(|&b| Interval::new(b - r, b + r)).collect()).unwrap();
        let bounds = net.interval_bounds(&bx).unwrap();
        let out = rng.gen_range(0..net.output_dim());
        let mut hi = bounds.last().unwrap()[out].hi;
        if net.layers().last().unwrap().activation == ActivationKind::Relu {
            hi = hi.max(0.0);
        }
        let lo = hi + rng.gen_range(0.01..1.0);
        let cfg = config(
            &base,
            -r,
            r,
            &format!(r#"{{"type": "output_range", "index": {out}, "lo": {lo}, "hi": {}}}"#, lo + 1.0),
        );
        let sc = Scenario { id: 0, indices: (0..inputs).collect() };
        let solver = SolverConfig { time_limit: 60.0, ..SolverConfig::default() };
        let res = synthesize(&net, &cfg, &sc, &solver).map_err(|e| e.to_string())?;
        fid.check(&format!("infeasibility case {case}"), &net, &cfg, &res);
        ensure!(res.status == AttackStatus::NoAttackExists, "case {case}: status {:?}", res.status);
        slowest = slowest.max(res.wall_time);
    }
    Ok(format!("20 windows proved infeasible, slowest {slowest:.3} s"))
}

fn structural() -> Outcome {
    let count = |n, k| enumerate_scenarios(n, k).map(|s| s.len()).map_err(|e| e.to_string());
    ensure!(count(74, 2)? == 2701, "C(74,2) gave {}", count(74, 2)?);
    ensure!(count(74, 1)? == 74, "C(74,1) gave {}", count(74, 1)?);
    ensure!(count(74, 74)? == 1, "C(74,74) gave {}", count(74, 74)?);
    let mut rng = common::rng(606);
    for m in 2..=6 {
        let net = common::random_net(&mut rng, &[3, 4, m], ActivationKind::Linear);
        let pert = PerturbationSpec::uniform(vec![0.0; 3], vec![0, 1, 2], -1.0, 1.0);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.reverse();
        for (name, c) in [
            ("total ordering", AttackConstraint::TotalOrdering { permutation: perm.clone(), eps: 1e-4 }),
            ("min score", AttackConstraint::MinScore { target: m / 2, eps: 1e-4 }),
        ] {
            let mut ea = encode(&net, &pert).map_err(|e| e.to_string())?;
            let before = ea.model.constraints().len();
            let added = ea.add_attack_constraint(c).map_err(|e| e.to_string())?;
            let rows = ea.model.constraints().len() - before;
            ensure!(added == m - 1 && rows == m - 1, "{name} with {m} outputs added {rows} rows");
        }
    }
    Ok("2701 / 74 / 1 scenarios, m-1 ordering rows for m = 2..6".into())
}

fn fixed_pattern() -> Outcome {
    let mut rng = common::rng(707);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let inputs = rng.gen_range(1..=4);
        let outputs = rng.gen_range(1..=3);
        let net = small_net(&mut rng, inputs, outputs);
        let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pert = PerturbationSpec::uniform(base.clone(), (0..inputs).collect(), -2.0, 2.0);
        let ea = encode(&net, &pert).map_err(|e| e.to_string())?;
        let delta: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let x: Vec<f64> = base.iter().zip(&delta).map(|(b, d)| b + d).collect();
        let pattern = net.activation_pattern(&x).unwrap();
        let mut lp = ea.fix_pattern(&pattern).map_err(|e| e.to_string())?;
        for (i, d) in ea.varmap.deltas.iter().enumerate() {
            if let Some((p, m)) = d {
                lp.lower[p.index()] = delta[i].max(0.0);
                lp.upper[p.index()] = delta[i].max(0.0);
                lp.lower[m.index()] = (-delta[i]).max(0.0);
                lp.upper[m.index()] = (-delta[i]).max(0.0);
            }
        }
        let out = solve_lp(&lp, 1e-9).map_err(|e| e.to_string())?;
        ensure!(out.status == LpStatus::Optimal, "case {case}: LP status {:?}", out.status);
        for (vals, (_, post)) in ea.layer_values(&out.values).iter().zip(common::forward_oracle(&net, &x)) {
            for (a, b) in vals.iter().zip(&post) {
                worst = worst.max((a - b).abs());
            }
        }
        ensure!(worst <= 1e-9, "case {case}: neuron gap {worst:.3e}");
    }
    Ok(format!("100 patterns, max neuron gap {worst:.1e}"))
}

fn second_lowest(y: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap());
    order[1]
}

fn desk_performance(fid: &mut Fidelity) -> Outcome {
    let mut rng = common::rng(808);
    let hcas = common::random_net(&mut rng, &[5, 25, 25, 25, 25, 25, 3], ActivationKind::Linear);
    let base: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = second_lowest(&hcas.forward(&base).unwrap());
    let cfg = config(&base, -5.0, 5.0, &format!(r#"{{"type": "min_score", "target": {target}}}"#));
    let solver = SolverConfig { time_limit: 60.0, ..SolverConfig::default() };
    let mut hcas_worst: f64 = 0.0;
    let mut found = 0;
    for input in 0..5 {
        let sc = Scenario { id: input, indices: vec![input] };
        let t = Instant::now();
        let res = synthesize(&hcas, &cfg, &sc, &solver).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        fid.check(&format!("hcas input {input}"), &hcas, &cfg, &res);
        ensure!(
            matches!(res.status, AttackStatus::Success | AttackStatus::NoAttackExists) && !res.timed_out,
            "HCAS input {input}: {:?}",
            res.status
        );
        ensure!(secs < 60.0, "HCAS input {input} took {secs:.1} s");
        found += usize::from(res.status == AttackStatus::Success);
        hcas_worst = hcas_worst.max(secs);
    }

    let aps = common::random_net(&mut rng, &[74, 8, 8, 1], ActivationKind::Linear);
    let mut aps_worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 5 {
        let base: Vec<f64> = (0..74).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a = rng.gen_range(0..74);
        let b = (a + rng.gen_range(1..74)) % 74;
        let mut idx = vec![a, b];
        idx.sort_unstable();
        let Some(thr) = sampled_threshold(&mut rng, &aps, &base, &idx, 1.0) else {
            continue;
        };
        pairs += 1;
        let cfg: AttackConfig = AttackConfig::from_json_str(&format!(
            r#"{{"base_input": {base:?}, "delta_bounds": {{"lo": -1, "hi": 1}}, "clamp_nonnegative": true,
                "constraint": {{"type": "min_output_increase", "index": 0, "threshold": {thr}}}}}"#
        ))
        .unwrap();
        let sc = Scenario { id: 0, indices: idx.clone() };
        let t = Instant::now();
        let res = synthesize(&aps, &cfg, &sc, &solver).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        fid.check(&format!("aps inputs {idx:?}"), &aps, &cfg, &res);
        ensure!(res.status != AttackStatus::TimedOut, "APS inputs {idx:?} timed out");
        ensure!(secs < 10.0, "APS inputs {idx:?} took {secs:.1} s");
        aps_worst = aps_worst.max(secs);
    }
    Ok(format!(
        "HCAS 5 inputs ({found} attacks) slowest {hcas_worst:.2} s; APS 5 pairs slowest {aps_worst:.2} s"
    ))
}

fn determinism() -> Outcome {
    let mut rng = common::rng(909);
    let net = common::random_net(&mut rng, &[5, 8, 8, 3], ActivationKind::Linear);
    let base: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = second_lowest(&net.forward(&base).unwrap());
    let cfg = config(&base, -2.0, 2.0, &format!(r#"{{"type": "min_score", "target": {target}}}"#));
    let csv = |jobs| -> Result<Vec<u8>, String> {
        let rep = run_campaign(&net, &cfg, &[1, 2, 3], &SolverConfig::default(), jobs).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let a = csv(1)?;
    let b = csv(1)?;
    let c = csv(4)?;
    ensure!(a == b, "two single-threaded runs differ");
    ensure!(a == c, "thread count changes the CSV");
    Ok(format!("25 scenarios, {} identical bytes across 3 runs", a.len()))
}

fn fidelity(fid: &mut Fidelity) -> Outcome {
    let mut rng = common::rng(202);
    for case in 0..60 {
        let inputs = rng.gen_range(1..=4);
        let outputs = rng.gen_range(2..=4);
        let net = small_net(&mut rng, inputs, outputs);
        let base: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = net.forward(&base).unwrap();
        let constraint = match case % 3 {
            0 => format!(r#"{{"type": "min_score", "target": {}}}"#, second_lowest(&y)),
            1 => {
                let mut perm: Vec<usize> = (0..outputs).collect();
                perm.swap(0, 1);
                format!(r#"{{"type": "total_ordering", "permutation": {perm:?}}}"#)
            }
            _ => r#"{"type": "partial_ordering", "first": 1, "second": 0, "eps": 0.01}"#.to_string(),
        };
        let mut cfg = config(&base, -3.0, 3.0, &constraint);
        if case % 2 == 1 {
            cfg.objective = ObjectiveKind::Hierarchical { target: Some(0) };
        }
        let sc = Scenario { id: 0, indices: (0..inputs).collect() };
        let res = synthesize(&net, &cfg, &sc, &SolverConfig::default()).map_err(|e| e.to_string())?;
        fid.check(&format!("fidelity case {case}"), &net, &cfg, &res);
    }
    ensure!(fid.failures.is_empty(), "{} failures, first: {}", fid.failures.len(), fid.failures[0]);
    ensure!(fid.checked >= 50, "only {} solutions checked", fid.checked);
    Ok(format!("{} optimal solutions decoded and verified", fid.checked))
}

fn run(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    (out, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut fid = Fidelity::default();
    let mut results = vec![
        (1, "encoding soundness", run(encoding_soundness)),
        (3, "optimality vs grid oracle", run(|| optimality_vs_grid(&mut fid))),
        (4, "binary enumeration equivalence", run(enumeration_equivalence)),
        (5, "infeasibility correctness", run(|| infeasibility(&mut fid))),
        (6, "structural checks", run(structural)),
        (7, "fixed-pattern LP equivalence", run(fixed_pattern)),
        (8, "desk-scale performance", run(|| desk_performance(&mut fid))),
        (9, "campaign determinism", run(determinism)),
    ];
    results.push((2, "solution fidelity", run(|| fidelity(&mut fid))));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, (outcome, secs)) in &results {
        match outcome {
            Ok(detail) => println!("PASS  criterion {id}: {name} ({detail}) [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {id}: {name} ({why}) [{secs:.1} s]");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
