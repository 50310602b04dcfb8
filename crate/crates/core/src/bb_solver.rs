//! Best-first branch-and-bound over binary variables, with lexicographic
//! objectives layered on top.
//!
//! Every node carries its own variable bounds. When a guard binary is fixed
//! the matching indicator's implied constraint is installed directly (as a
//! bound when it touches a single variable, otherwise as a row); unfixed
//! guards contribute big-M rows computed from the node's bounds, so big-M
//! constants shrink as bounds tighten down the tree.
//!
//! Problem-specific knowledge enters through [`NodeHooks`]: sound bound
//! propagation, linear expressions whose LP range is worth probing at every
//! node, and a repair heuristic that turns an LP point into a candidate
//! integer solution. Candidates are always checked against the full model
//! before they become incumbents.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use thiserror::Error;

use crate::lp_solver::{LpConfig, LpError, LpProblem, LpRow, LpSession, LpStatus};
use crate::milp_model::{big_m_rows, LinearExpr, MilpModel, ModelError, ObjectiveSense, Sense};
use crate::scalar::Scalar;

/// Seven hours, the cutoff used for the longest reference experiments.
pub const DEFAULT_TIME_LIMIT: f64 = 25_200.0;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchRule {
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Wall-clock budget in seconds, shared by all levels of a
    /// lexicographic solve.
    pub time_limit: f64,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub node_limit: usize,
    pub branch_rule: BranchRule,
    /// Slack allowed on earlier levels of a lexicographic objective,
    /// relative to `max(1, |optimum|)`.
    pub lex_tol: f64,
    /// Record one trace line per node.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit: DEFAULT_TIME_LIMIT,
            feasibility_tol: crate::lp_solver::DEFAULT_FEASIBILITY_TOL,
            integrality_tol: 1e-6,
            node_limit: 10_000_000,
            branch_rule: BranchRule::MostFractional,
            lex_tol: 1e-6,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let tol_ok = |t: f64| t > 0.0 && t <= 1e-2;
        if !(self.time_limit > 0.0) {
            return Err(SolveError::Config("time_limit must be positive".into()));
        }
        if self.node_limit == 0 {
            return Err(SolveError::Config("node_limit must be positive".into()));
        }
        for (name, t) in [
            ("feasibility_tol", self.feasibility_tol),
            ("integrality_tol", self.integrality_tol),
            ("lex_tol", self.lex_tol),
        ] {
            if !tol_ok(t) {
                return Err(SolveError::Config(format!("{name} must lie in (0, 1e-2]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimedOut,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution<T: Scalar = f64> {
    pub values: Vec<T>,
    /// One value per objective level, each in its own sense.
    pub objectives: Vec<T>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: usize,
    pub wall_time: f64,
    pub peak_open: usize,
    pub lp_iterations: usize,
    /// Objective levels solved to optimality.
    pub levels_completed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpOutcome<T: Scalar = f64> {
    pub status: MilpStatus,
    pub best: Option<MilpSolution<T>>,
    pub stats: SolveStats,
    pub trace: Vec<String>,
}

/// Problem-specific callbacks for [`solve_milp_with`].
pub trait NodeHooks<T: Scalar>: Sync {
    /// Expressions whose LP range is computed at each node and passed to
    /// [`NodeHooks::propagate`].
    fn probe_exprs(&self) -> Vec<LinearExpr<T>> {
        Vec::new()
    }

    /// Tightens `lower`/`upper` in place. `probes[i]` is a valid range for
    /// `probe_exprs()[i]` at this node. Must only remove points that violate
    /// the model. Returns `false` when the node is infeasible.
    fn propagate(&self, _lower: &mut [T], _upper: &mut [T], _probes: &[(T, T)]) -> bool {
        true
    }

    /// Builds a full candidate assignment from an LP point.
    fn repair(&self, _lp_values: &[T]) -> Option<Vec<T>> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoHooks;

impl<T: Scalar> NodeHooks<T> for NoHooks {}

pub fn solve_milp<T: Scalar>(model: &MilpModel<T>, cfg: &SolverConfig) -> Result<MilpOutcome<T>, SolveError> {
    solve_milp_with(model, cfg, &NoHooks)
}

/// Solves a model carrying exactly one objective.
pub fn solve_milp_with<T: Scalar, H: NodeHooks<T>>(
    model: &MilpModel<T>,
    cfg: &SolverConfig,
    hooks: &H,
) -> Result<MilpOutcome<T>, SolveError> {
    cfg.validate()?;
    match model.objectives().len() {
        0 => return Err(ModelError::NoObjective.into()),
        1 => {}
        _ => {
            return Err(SolveError::Config(
                "solve_milp takes exactly one objective; use lexicographic_solve".into(),
            ))
        }
    }
    let start = Instant::now();
    let mut search = Search::new(model, cfg, hooks, start, None)?;
    let status = search.run()?;
    Ok(search.finish(status))
}

pub fn lexicographic_solve<T: Scalar>(model: &MilpModel<T>, cfg: &SolverConfig) -> Result<MilpOutcome<T>, SolveError> {
    lexicographic_solve_with(model, cfg, &NoHooks)
}

/// Optimises the objectives in order. After each level the level's
/// expression is held within `lex_tol` of its optimum for the remaining
/// levels.
pub fn lexicographic_solve_with<T: Scalar, H: NodeHooks<T>>(
    model: &MilpModel<T>,
    cfg: &SolverConfig,
    hooks: &H,
) -> Result<MilpOutcome<T>, SolveError> {
    cfg.validate()?;
    let levels = model.objectives().to_vec();
    if levels.is_empty() {
        return Err(ModelError::NoObjective.into());
    }
    let start = Instant::now();
    let lex_tol = T::lit(cfg.lex_tol);
    let mut work = model.with_single_objective(0)?;
    let mut stats = SolveStats::default();
    let mut trace = Vec::new();
    let mut warm: Option<Vec<T>> = None;
    let mut last: Option<Vec<T>> = None;
    let evaluate = |values: &[T]| -> Vec<T> { levels.iter().map(|o| o.expr.eval(values)).collect() };

    for (level, obj) in levels.iter().enumerate() {
        if level > 0 {
            work.set_objectives(vec![obj.clone()])?;
        }
        let mut search = Search::new(&work, cfg, hooks, start, warm.take())?;
        let status = search.run()?;
        let out = search.finish(status);
        stats.nodes += out.stats.nodes;
        stats.lp_iterations += out.stats.lp_iterations;
        stats.peak_open = stats.peak_open.max(out.stats.peak_open);
        trace.extend(out.trace.into_iter().map(|l| format!("L{level} {l}")));
        if out.status != MilpStatus::Optimal {
            stats.wall_time = start.elapsed().as_secs_f64();
            let best = out
                .best
                .map(|b| b.values)
                .or(if out.status == MilpStatus::Infeasible { None } else { last })
                .map(|values| MilpSolution {
                    objectives: evaluate(&values),
                    values,
                });
            return Ok(MilpOutcome {
                status: out.status,
                best,
                stats,
                trace,
            });
        }
        stats.levels_completed += 1;
        let sol = out.best.expect("optimal outcome carries a solution");
        let v = sol.objectives[0];
        let lex_tol = lex_tol * v.abs().max(T::one());
        let hold = match obj.sense {
            ObjectiveSense::Minimize => crate::milp_model::Constraint::le(obj.expr.clone(), v + lex_tol),
            ObjectiveSense::Maximize => crate::milp_model::Constraint::ge(obj.expr.clone(), v - lex_tol),
        };
        work.add_constraint(hold)?;
        warm = Some(sol.values.clone());
        last = Some(sol.values);
    }
    stats.wall_time = start.elapsed().as_secs_f64();
    let values = last.expect("at least one level solved");
    Ok(MilpOutcome {
        status: MilpStatus::Optimal,
        best: Some(MilpSolution {
            objectives: evaluate(&values),
            values,
        }),
        stats,
        trace,
    })
}

struct Node<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    probes: Vec<(T, T)>,
    /// Parent's LP bound in the internal (minimisation) sense.
    bound: T,
    depth: usize,
    seq: usize,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    // BinaryHeap is a max-heap: smaller bound, then smaller seq, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum NodeEval<T> {
    Infeasible,
    Unbounded,
    Solved {
        bound: T,
        values: Vec<T>,
        lower: Vec<T>,
        upper: Vec<T>,
        probes: Vec<(T, T)>,
    },
}

struct Search<'a, T: Scalar, H> {
    model: &'a MilpModel<T>,
    cfg: &'a SolverConfig,
    hooks: &'a H,
    start: Instant,
    lp_cfg: LpConfig,
    /// +1 for minimisation, -1 for maximisation.
    sign: T,
    objective: Vec<T>,
    objective_constant: T,
    binaries: Vec<usize>,
    base_rows: Vec<LpRow<T>>,
    probes: Vec<Vec<T>>,
    probe_constants: Vec<T>,
    incumbent: Option<(T, Vec<T>)>,
    stats: SolveStats,
    trace: Vec<String>,
    seq: usize,
}

impl<'a, T: Scalar, H: NodeHooks<T>> Search<'a, T, H> {
    fn new(
        model: &'a MilpModel<T>,
        cfg: &'a SolverConfig,
        hooks: &'a H,
        start: Instant,
        warm: Option<Vec<T>>,
    ) -> Result<Self, SolveError> {
        let obj = &model.objectives()[0];
        let n = model.var_count();
        let mut objective = vec![T::zero(); n];
        for &(c, v) in &obj.expr.terms {
            objective[v.index()] += c;
        }
        let sign = match obj.sense {
            ObjectiveSense::Minimize => T::one(),
            ObjectiveSense::Maximize => -T::one(),
        };
        let base_rows = model
            .constraints()
            .iter()
            .map(|c| LpRow {
                coeffs: c.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                sense: c.sense,
                rhs: c.rhs - c.expr.constant,
            })
            .collect();
        let mut probes = Vec::new();
        let mut probe_constants = Vec::new();
        for e in hooks.probe_exprs() {
            let mut dense = vec![T::zero(); n];
            for &(c, v) in &e.terms {
                dense[v.index()] += c;
            }
            probes.push(dense);
            probe_constants.push(e.constant);
        }
        let mut s = Self {
            model,
            cfg,
            hooks,
            start,
            lp_cfg: LpConfig::with_tolerance(cfg.feasibility_tol),
            sign,
            objective,
            objective_constant: obj.expr.constant,
            binaries: model.binaries().map(|v| v.index()).collect(),
            base_rows,
            probes,
            probe_constants,
            incumbent: None,
            stats: SolveStats::default(),
            trace: Vec::new(),
            seq: 0,
        };
        if let Some(values) = warm {
            s.offer(values);
        }
        Ok(s)
    }

    fn tol(&self) -> T {
        T::lit(self.cfg.feasibility_tol)
    }

    fn internal_objective(&self, values: &[T]) -> T {
        let v = self
            .objective
            .iter()
            .zip(values)
            .fold(self.objective_constant, |a, (&c, &x)| a + c * x);
        v * self.sign
    }

    /// Accepts `values` as incumbent if it is feasible and improving.
    fn offer(&mut self, values: Vec<T>) -> bool {
        if values.len() != self.model.var_count() {
            return false;
        }
        if self.model.max_violation(&values) > self.tol() * T::lit(10.0) {
            return false;
        }
        let obj = self.internal_objective(&values);
        let better = self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best);
        if better {
            self.incumbent = Some((obj, values));
        }
        better
    }

    fn prune_gap(&self, bound: T) -> bool {
        match &self.incumbent {
            Some((best, _)) => bound >= *best - self.tol() * T::one().max(best.abs()),
            None => false,
        }
    }

    fn is_fixed_to(&self, lower: &[T], upper: &[T], j: usize) -> Option<bool> {
        let half = T::lit(0.5);
        if lower[j] > half {
            Some(true)
        } else if upper[j] < half {
            Some(false)
        } else {
            None
        }
    }

    /// Installs single-variable implied constraints of fixed guards as bounds
    /// and runs the hook propagation until nothing changes.
    fn tighten(&self, lower: &mut [T], upper: &mut [T], probes: &[(T, T)]) -> bool {
        let tol = self.tol();
        for _round in 0..8 {
            let before: Vec<T> = lower.iter().chain(upper.iter()).copied().collect();
            for &j in &self.binaries {
                lower[j] = (lower[j] - tol).ceil().max(T::zero());
                upper[j] = (upper[j] + tol).floor().min(T::one());
            }
            for ic in self.model.indicators() {
                let g = ic.guard.index();
                if self.is_fixed_to(lower, upper, g) != Some(ic.guard_value) || ic.implied.expr.terms.len() != 1 {
                    continue;
                }
                for row in ic.implied.as_le_rows() {
                    let (a, v) = row.expr.terms[0];
                    let lim = row.rhs / a;
                    let v = v.index();
                    if a > T::zero() {
                        upper[v] = upper[v].min(lim);
                    } else {
                        lower[v] = lower[v].max(lim);
                    }
                }
            }
            if !self.hooks.propagate(lower, upper, probes) {
                return false;
            }
            for j in 0..lower.len() {
                if lower[j] > upper[j] {
                    if lower[j] > upper[j] + tol {
                        return false;
                    }
                    let mid = (lower[j] + upper[j]) * T::lit(0.5);
                    lower[j] = mid;
                    upper[j] = mid;
                }
            }
            let after: Vec<T> = lower.iter().chain(upper.iter()).copied().collect();
            if before == after {
                break;
            }
        }
        true
    }

    fn build_lp(&self, lower: &[T], upper: &[T]) -> Result<LpProblem<T>, SolveError> {
        let mut p = LpProblem::new(self.model.var_count(), lower.to_vec(), upper.to_vec());
        p.objective = self.objective.clone();
        p.objective_constant = self.objective_constant;
        p.sense = if self.sign > T::zero() {
            ObjectiveSense::Minimize
        } else {
            ObjectiveSense::Maximize
        };
        p.rows = self.base_rows.clone();
        for (k, ic) in self.model.indicators().iter().enumerate() {
            let g = ic.guard.index();
            match self.is_fixed_to(lower, upper, g) {
                Some(v) if v == ic.guard_value => {
                    if ic.implied.expr.terms.len() > 1 {
                        p.rows.push(LpRow {
                            coeffs: ic.implied.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                            sense: ic.implied.sense,
                            rhs: ic.implied.rhs - ic.implied.expr.constant,
                        });
                    }
                }
                Some(_) => {}
                None => match big_m_rows(k, ic, lower, upper, |v| self.model.var(v).name.clone()) {
                    Ok(rows) => {
                        for r in rows {
                            p.rows.push(LpRow {
                                coeffs: r.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                                sense: Sense::Le,
                                rhs: r.rhs,
                            });
                        }
                    }
                    // Left out of the relaxation; the guard is branched on
                    // before the node can be accepted.
                    Err(ModelError::UnboundedBigM { .. }) => {}
                    Err(e) => return Err(e.into()),
                },
            }
        }
        Ok(p)
    }

    /// Guards whose indicator could not be lowered and are not yet fixed.
    fn unlowered_guard(&self, lower: &[T], upper: &[T]) -> Option<usize> {
        self.model
            .indicators()
            .iter()
            .filter(|ic| self.is_fixed_to(lower, upper, ic.guard.index()).is_none())
            .filter(|ic| {
                ic.implied.as_le_rows().iter().any(|r| {
                    let (_, hi) = r.expr.range(lower, upper);
                    !hi.is_finite()
                })
            })
            .map(|ic| ic.guard.index())
            .min()
    }

    fn evaluate(&mut self, mut lower: Vec<T>, mut upper: Vec<T>, mut probes: Vec<(T, T)>) -> Result<NodeEval<T>, SolveError> {
        let max_rounds = if self.probes.is_empty() { 1 } else { 4 };
        let mut round = 0;
        loop {
            round += 1;
            if !self.tighten(&mut lower, &mut upper, &probes) {
                return Ok(NodeEval::Infeasible);
            }
            let lp = self.build_lp(&lower, &upper)?;
            let Some(mut session) = LpSession::new(&lp, &self.lp_cfg)? else {
                return Ok(NodeEval::Infeasible);
            };
            let out = session.optimize(&lp.objective, lp.objective_constant, lp.sense)?;
            match out.status {
                LpStatus::Infeasible => {
                    self.stats.lp_iterations += session.iterations();
                    return Ok(NodeEval::Infeasible);
                }
                LpStatus::Unbounded => {
                    self.stats.lp_iterations += session.iterations();
                    return Ok(NodeEval::Unbounded);
                }
                LpStatus::Optimal => {}
            }
            let bound = out.objective * self.sign;
            if round >= max_rounds || self.prune_gap(bound) {
                self.stats.lp_iterations += session.iterations();
                return Ok(NodeEval::Solved {
                    bound,
                    values: out.values,
                    lower,
                    upper,
                    probes,
                });
            }
            // Probe the hook expressions on the same basis.
            let mut shrank = false;
            for (k, dense) in self.probes.iter().enumerate() {
                let c = self.probe_constants[k];
                let lo = session.optimize(dense, c, ObjectiveSense::Minimize)?;
                let hi = session.optimize(dense, c, ObjectiveSense::Maximize)?;
                if lo.status != LpStatus::Optimal || hi.status != LpStatus::Optimal {
                    continue;
                }
                let (old_lo, old_hi) = probes[k];
                let new_lo = old_lo.max(lo.objective);
                let new_hi = old_hi.min(hi.objective);
                let old_w = old_hi - old_lo;
                let new_w = new_hi - new_lo;
                if !old_w.is_finite() || new_w < old_w * T::lit(0.9) {
                    shrank = true;
                }
                probes[k] = (new_lo, new_hi);
            }
            self.stats.lp_iterations += session.iterations();
            if !shrank {
                return Ok(NodeEval::Solved {
                    bound,
                    values: out.values,
                    lower,
                    upper,
                    probes,
                });
            }
        }
    }

    /// Most fractional unfixed binary (ties to the lowest index).
    fn branch_candidate(&self, values: &[T], lower: &[T], upper: &[T], threshold: T) -> Option<usize> {
        let half = T::lit(0.5);
        let mut best: Option<(usize, T)> = None;
        for &j in &self.binaries {
            if self.is_fixed_to(lower, upper, j).is_some() {
                continue;
            }
            let frac = (values[j] - values[j].floor()).min(values[j].ceil() - values[j]);
            if frac <= threshold {
                continue;
            }
            let dist = (values[j] - half).abs();
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Solves the LP with every binary fixed to its rounded value.
    fn polish(&mut self, values: &[T], lower: &[T], upper: &[T], probes: &[(T, T)]) -> Result<Option<Vec<T>>, SolveError> {
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        for &j in &self.binaries {
            let r = values[j].round().max(lo[j]).min(hi[j]);
            lo[j] = r;
            hi[j] = r;
        }
        if !self.tighten(&mut lo, &mut hi, probes) {
            return Ok(None);
        }
        let lp = self.build_lp(&lo, &hi)?;
        let Some(mut session) = LpSession::new(&lp, &self.lp_cfg)? else {
            return Ok(None);
        };
        let out = session.optimize(&lp.objective, lp.objective_constant, lp.sense)?;
        self.stats.lp_iterations += session.iterations();
        Ok((out.status == LpStatus::Optimal).then_some(out.values))
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if self.cfg.trace {
            self.trace.push(line());
        }
    }

    fn run(&mut self) -> Result<MilpStatus, SolveError> {
        let n = self.model.var_count();
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            lower: self.model.lower_bounds(),
            upper: self.model.upper_bounds(),
            probes: vec![(T::neg_infinity(), T::infinity()); self.probes.len()],
            bound: T::neg_infinity(),
            depth: 0,
            seq: 0,
        });
        self.seq = 1;
        let int_tol = T::lit(self.cfg.integrality_tol);
        while let Some(node) = heap.pop() {
            if self.start.elapsed().as_secs_f64() >= self.cfg.time_limit {
                return Ok(MilpStatus::TimedOut);
            }
            if self.stats.nodes >= self.cfg.node_limit {
                return Ok(MilpStatus::NodeLimit);
            }
            if self.prune_gap(node.bound) {
                let (seq, depth, b) = (node.seq, node.depth, node.bound);
                self.log(|| format!("node {seq} depth {depth} bound {:.9e} pruned", b.to_f64_lossy()));
                continue;
            }
            self.stats.nodes += 1;
            let Node {
                lower,
                upper,
                probes,
                bound: parent_bound,
                depth,
                seq,
            } = node;
            let eval = self.evaluate(lower, upper, probes)?;
            let (bound, values, lower, upper, probes) = match eval {
                NodeEval::Infeasible => {
                    self.log(|| format!("node {seq} depth {depth} bound inf infeasible"));
                    continue;
                }
                NodeEval::Unbounded => {
                    self.log(|| format!("node {seq} depth {depth} bound -inf unbounded"));
                    return Ok(MilpStatus::Unbounded);
                }
                NodeEval::Solved {
                    bound,
                    values,
                    lower,
                    upper,
                    probes,
                } => (bound, values, lower, upper, probes),
            };
            debug_assert!(
                !parent_bound.is_finite()
                    || bound >= parent_bound - T::lit(1e-6) * T::one().max(parent_bound.abs()),
                "child bound {bound} improves on parent bound {parent_bound}"
            );
            if self.prune_gap(bound) {
                self.log(|| format!("node {seq} depth {depth} bound {:.9e} pruned", bound.to_f64_lossy()));
                continue;
            }
            if let Some(candidate) = self.hooks.repair(&values) {
                if self.offer(candidate) {
                    let inc = self.incumbent.as_ref().map(|(o, _)| *o).unwrap_or(bound);
                    self.log(|| format!("node {seq} depth {depth} heuristic incumbent {:.9e}", inc.to_f64_lossy()));
                }
            }
            let mut branch = self
                .branch_candidate(&values, &lower, &upper, int_tol)
                .or_else(|| self.unlowered_guard(&lower, &upper));
            if branch.is_none() {
                match self.polish(&values, &lower, &upper, &probes)? {
                    Some(polished) => {
                        let obj = self.internal_objective(&polished);
                        let accepted = self.offer(polished);
                        let gap = self.tol() * T::one().max(bound.abs());
                        if accepted {
                            self.log(|| format!("node {seq} depth {depth} bound {:.9e} incumbent {:.9e}", bound.to_f64_lossy(), obj.to_f64_lossy()));
                        }
                        if obj > bound + gap {
                            // Big-M slack let the relaxation cheat slightly.
                            branch = self.branch_candidate(&values, &lower, &upper, T::lit(1e-12));
                        }
                    }
                    None => {
                        branch = self.branch_candidate(&values, &lower, &upper, T::zero());
                    }
                }
                if branch.is_none() {
                    self.log(|| format!("node {seq} depth {depth} bound {:.9e} closed", bound.to_f64_lossy()));
                    continue;
                }
            }
            let j = branch.expect("branch variable chosen");
            self.log(|| format!("node {seq} depth {depth} bound {:.9e} branch {}", bound.to_f64_lossy(), self.model.vars()[j].name));
            for value in [T::zero(), T::one()] {
                let mut lo = lower.clone();
                let mut hi = upper.clone();
                lo[j] = value;
                hi[j] = value;
                debug_assert_eq!(lo.len(), n);
                heap.push(Node {
                    lower: lo,
                    upper: hi,
                    probes: probes.clone(),
                    bound,
                    depth: depth + 1,
                    seq: self.seq,
                });
                self.seq += 1;
            }
            self.stats.peak_open = self.stats.peak_open.max(heap.len());
        }
        Ok(if self.incumbent.is_some() {
            MilpStatus::Optimal
        } else {
            MilpStatus::Infeasible
        })
    }

    fn finish(mut self, status: MilpStatus) -> MilpOutcome<T> {
        self.stats.wall_time = self.start.elapsed().as_secs_f64();
        let best = match status {
            MilpStatus::Infeasible | MilpStatus::Unbounded => None,
            _ => self.incumbent.take().map(|(obj, values)| MilpSolution {
                values,
                objectives: vec![obj * self.sign],
            }),
        };
        let status = if status == MilpStatus::Optimal && best.is_none() {
            MilpStatus::Infeasible
        } else {
            status
        };
        MilpOutcome {
            status,
            best,
            stats: self.stats,
            trace: self.trace,
        }
    }
}
