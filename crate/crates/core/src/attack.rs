//! Attack synthesis, independent verification and campaigns over input
//! subsets.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bb_solver::{lexicographic_solve_with, solve_milp_with, MilpStatus, SolveError, SolverConfig};
use crate::encoder::{encode, AttackConstraint, EncodeError, ObjectiveKind, PerturbationSpec};
use crate::network::{Network, NetworkError};
use crate::scalar::Scalar;

/// Absolute tolerance applied to output checks during verification.
pub const VERIFY_TOL: f64 = 1e-6;

/// Largest grid [`brute_force`] will scan.
pub const MAX_GRID_POINTS: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("solver returned an optimal solution that fails verification ({0})")]
    Unverified(VerifyReason),
    #[error("grid of {0} points exceeds the brute-force limit")]
    GridTooLarge(u64),
    #[error("brute force supports at most 3 perturbed inputs, got {0}")]
    ScenarioTooLarge(usize),
    #[error("solver reported an unbounded objective")]
    Unbounded,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllKeyword {
    All,
}

/// `"all"` or an explicit index list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AllowedInputs {
    Keyword(AllKeyword),
    Indices(Vec<usize>),
}

impl Default for AllowedInputs {
    fn default() -> Self {
        AllowedInputs::Keyword(AllKeyword::All)
    }
}

/// A value given once for every input, or per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum PerInput<T: Scalar> {
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Scalar> PerInput<T> {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<T>, AttackError> {
        match self {
            PerInput::Scalar(v) => Ok(vec![*v; n]),
            PerInput::Vector(v) if v.len() == n => Ok(v.clone()),
            PerInput::Vector(v) => Err(AttackError::Config(format!(
                "{what} has {} entries, network has {n} inputs",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DeltaBounds<T: Scalar> {
    pub lo: PerInput<T>,
    pub hi: PerInput<T>,
}

/// Optional replacements for solver settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrality_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lex_tol: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, base: &SolverConfig) -> SolverConfig {
        let mut c = base.clone();
        if let Some(v) = self.time_limit {
            c.time_limit = v;
        }
        if let Some(v) = self.feasibility_tol {
            c.feasibility_tol = v;
        }
        if let Some(v) = self.integrality_tol {
            c.integrality_tol = v;
        }
        if let Some(v) = self.node_limit {
            c.node_limit = v;
        }
        if let Some(v) = self.lex_tol {
            c.lex_tol = v;
        }
        c
    }
}

fn default_objective() -> ObjectiveKind {
    ObjectiveKind::MinPerturbation
}

/// Attack description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct AttackConfig<T: Scalar = f64> {
    pub base_input: Vec<T>,
    #[serde(default)]
    pub allowed: AllowedInputs,
    pub delta_bounds: DeltaBounds<T>,
    /// Raise each lower delta bound to `-max(x_i, 0)` so perturbed inputs
    /// never go negative.
    #[serde(default)]
    pub clamp_nonnegative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PerInput<T>>,
    pub constraint: AttackConstraint<T>,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveKind,
    /// Replaces the ordering margin of `constraint` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<T>,
    #[serde(default)]
    pub solver: SolverOverrides,
}

impl<T: Scalar> AttackConfig<T> {
    pub fn from_json_str(s: &str) -> Result<Self, AttackError> {
        serde_json::from_str(s).map_err(|e| AttackError::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("attack config serializes")
    }

    /// The constraint with the top-level `eps` applied.
    pub fn effective_constraint(&self) -> AttackConstraint<T> {
        let mut c = self.constraint.clone();
        if let Some(e) = self.eps {
            match &mut c {
                AttackConstraint::MinScore { eps, .. }
                | AttackConstraint::PartialOrdering { eps, .. }
                | AttackConstraint::TotalOrdering { eps, .. } => *eps = e,
                AttackConstraint::OutputRange { .. } | AttackConstraint::MinOutputIncrease { .. } => {}
            }
        }
        c
    }

    /// Indices named by `allowed`, resolved against the network width.
    pub fn allowed_indices(&self, n: usize) -> Vec<usize> {
        match &self.allowed {
            AllowedInputs::Keyword(AllKeyword::All) => (0..n).collect(),
            AllowedInputs::Indices(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    /// Per-input delta bounds after clamping.
    pub fn bounds(&self, n: usize) -> Result<(Vec<T>, Vec<T>), AttackError> {
        let mut lo = self.delta_bounds.lo.expand(n, "delta_bounds.lo")?;
        let hi = self.delta_bounds.hi.expand(n, "delta_bounds.hi")?;
        if self.clamp_nonnegative {
            for (l, &x) in lo.iter_mut().zip(&self.base_input) {
                *l = l.max(-x.max(T::zero()));
            }
        }
        Ok((lo, hi))
    }

    pub fn weights(&self, n: usize) -> Result<Vec<T>, AttackError> {
        match &self.weights {
            Some(w) => w.expand(n, "weights"),
            None => Ok(vec![T::one(); n]),
        }
    }

    pub fn perturbation(&self, n: usize, indices: &[usize]) -> Result<PerturbationSpec<T>, AttackError> {
        if self.base_input.len() != n {
            return Err(AttackError::Config(format!(
                "base_input has {} entries, network has {n} inputs",
                self.base_input.len()
            )));
        }
        let (lo, hi) = self.bounds(n)?;
        let mut allowed = indices.to_vec();
        allowed.sort_unstable();
        allowed.dedup();
        Ok(PerturbationSpec {
            base: self.base_input.clone(),
            allowed,
            delta_lower: lo,
            delta_upper: hi,
            weights: self.weights(n)?,
        })
    }

    /// Checks the configuration against `net` without solving anything.
    pub fn validate(&self, net: &Network<T>) -> Result<(), AttackError> {
        let n = net.input_dim();
        let pert = self.perturbation(n, &self.allowed_indices(n))?;
        pert.validate(n)?;
        self.effective_constraint().validate(net.output_dim())?;
        if let ObjectiveKind::Hierarchical { target } = self.objective {
            match target {
                None => return Err(EncodeError::MissingTarget.into()),
                Some(t) if t >= net.output_dim() => {
                    return Err(AttackError::Config(format!("objective target {t} out of range")))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Rank of `indices` among all subsets of the same size.
    pub id: usize,
    pub indices: Vec<usize>,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn enumerate_scenarios(n: usize, k: usize) -> Result<Vec<Scenario>, AttackError> {
    if k == 0 || k > n {
        return Err(AttackError::Config(format!("k = {k} must lie in 1..={n}")));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(Scenario {
            id: out.len(),
            indices: idx.clone(),
        });
        // Rightmost position that can still advance.
        let Some(p) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            break;
        };
        idx[p] += 1;
        for q in p + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    Success,
    NoAttackExists,
    TimedOut,
}

impl AttackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackStatus::Success => "success",
            AttackStatus::NoAttackExists => "no_attack_exists",
            AttackStatus::TimedOut => "timed_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttackResult<T: Scalar = f64> {
    pub scenario: Scenario,
    pub status: AttackStatus,
    /// The time or node budget ran out; a `Success` with this flag carries
    /// a verified but possibly suboptimal attack.
    pub timed_out: bool,
    /// Full-width perturbation, empty when no attack was found.
    pub delta: Vec<T>,
    /// Output values as reported by the model.
    pub outputs: Vec<T>,
    /// One value per objective level.
    pub objectives: Vec<T>,
    pub wall_time: f64,
    pub nodes: usize,
    pub verified: bool,
    /// Solver node log, filled only when tracing is on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum VerifyReason {
    NoDelta,
    DimensionMismatch,
    OutOfScenario { index: usize },
    OutOfBounds { index: usize },
    OutputMismatch { index: usize },
    ConstraintViolated,
}

impl fmt::Display for VerifyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyReason::NoDelta => write!(f, "no-delta"),
            VerifyReason::DimensionMismatch => write!(f, "dimension-mismatch"),
            VerifyReason::OutOfScenario { index } => write!(f, "out-of-scenario (input {index})"),
            VerifyReason::OutOfBounds { index } => write!(f, "out-of-bounds (input {index})"),
            VerifyReason::OutputMismatch { index } => write!(f, "output-mismatch (output {index})"),
            VerifyReason::ConstraintViolated => write!(f, "constraint-violated"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub reason: Option<VerifyReason>,
}

impl Verdict {
    fn pass() -> Self {
        Verdict { ok: true, reason: None }
    }

    fn fail(reason: VerifyReason) -> Self {
        Verdict {
            ok: false,
            reason: Some(reason),
        }
    }
}

/// Does `y` meet `c`? `abs_tol` loosens range and threshold checks,
/// `margin_scale` scales the ordering margin.
fn constraint_holds<T: Scalar>(c: &AttackConstraint<T>, y: &[T], clean: &[T], abs_tol: T, margin_scale: T) -> bool {
    let below = |a: usize, b: usize, eps: T| y[a] + eps * margin_scale <= y[b];
    match c {
        AttackConstraint::OutputRange { index, lo, hi } => y[*index] >= *lo - abs_tol && y[*index] <= *hi + abs_tol,
        AttackConstraint::MinScore { target, eps } => (0..y.len()).filter(|j| j != target).all(|j| below(*target, j, *eps)),
        AttackConstraint::PartialOrdering { first, second, eps } => {
            below(*first, *second, *eps)
                && (0..y.len())
                    .filter(|j| j != first && j != second)
                    .all(|j| below(*second, j, *eps))
        }
        AttackConstraint::TotalOrdering { permutation, eps } => permutation.windows(2).all(|w| below(w[0], w[1], *eps)),
        AttackConstraint::MinOutputIncrease { index, threshold } => y[*index] >= clean[*index] + *threshold - abs_tol,
    }
}

/// Re-evaluates the network at `base + delta` and checks the attack's
/// semantics there, independently of the solver.
pub fn verify<T: Scalar>(net: &Network<T>, result: &AttackResult<T>, cfg: &AttackConfig<T>) -> Verdict {
    let n = net.input_dim();
    if cfg.base_input.len() != n || result.scenario.indices.iter().any(|&i| i >= n) {
        return Verdict::fail(VerifyReason::DimensionMismatch);
    }
    if result.delta.is_empty() {
        return Verdict::fail(VerifyReason::NoDelta);
    }
    if result.delta.len() != n {
        return Verdict::fail(VerifyReason::DimensionMismatch);
    }
    let Ok((lo, hi)) = cfg.bounds(n) else {
        return Verdict::fail(VerifyReason::DimensionMismatch);
    };
    let tol = T::lit(VERIFY_TOL);
    for (i, &d) in result.delta.iter().enumerate() {
        if !d.is_finite() {
            return Verdict::fail(VerifyReason::OutOfBounds { index: i });
        }
        let inside = result.scenario.indices.contains(&i);
        if !inside && d != T::zero() {
            return Verdict::fail(VerifyReason::OutOfScenario { index: i });
        }
        if inside && (d < lo[i] - tol || d > hi[i] + tol) {
            return Verdict::fail(VerifyReason::OutOfBounds { index: i });
        }
    }
    let x: Vec<T> = cfg.base_input.iter().zip(&result.delta).map(|(&b, &d)| b + d).collect();
    let (Ok(y), Ok(clean)) = (net.forward(&x), net.forward(&cfg.base_input)) else {
        return Verdict::fail(VerifyReason::DimensionMismatch);
    };
    if !result.outputs.is_empty() {
        if result.outputs.len() != y.len() {
            return Verdict::fail(VerifyReason::DimensionMismatch);
        }
        for (i, (&a, &b)) in result.outputs.iter().zip(&y).enumerate() {
            if !((a - b).abs() <= tol * T::one().max(b.abs())) {
                return Verdict::fail(VerifyReason::OutputMismatch { index: i });
            }
        }
    }
    let c = cfg.effective_constraint();
    if c.validate(y.len()).is_err() || !constraint_holds(&c, &y, &clean, tol, T::lit(0.5)) {
        return Verdict::fail(VerifyReason::ConstraintViolated);
    }
    Verdict::pass()
}

/// Encodes, solves and verifies one scenario.
pub fn synthesize<T: Scalar>(
    net: &Network<T>,
    cfg: &AttackConfig<T>,
    scenario: &Scenario,
    solver: &SolverConfig,
) -> Result<AttackResult<T>, AttackError> {
    cfg.validate(net)?;
    if scenario.indices.is_empty() {
        return Err(AttackError::Config("scenario has no inputs".into()));
    }
    let solver = cfg.solver.apply(solver);
    let pert = cfg.perturbation(net.input_dim(), &scenario.indices)?;
    let mut ea = encode(net, &pert)?;
    ea.add_attack_constraint(cfg.effective_constraint())?;
    ea.set_objective(cfg.objective)?;
    let out = if ea.model.objectives().len() > 1 {
        lexicographic_solve_with(&ea.model, &solver, &ea)?
    } else {
        solve_milp_with(&ea.model, &solver, &ea)?
    };
    let mut result = AttackResult {
        scenario: scenario.clone(),
        status: AttackStatus::NoAttackExists,
        timed_out: false,
        delta: Vec::new(),
        outputs: Vec::new(),
        objectives: Vec::new(),
        wall_time: out.stats.wall_time,
        nodes: out.stats.nodes,
        verified: false,
        trace: out.trace,
    };
    match out.status {
        MilpStatus::Infeasible => return Ok(result),
        MilpStatus::Unbounded => return Err(AttackError::Unbounded),
        MilpStatus::Optimal => {}
        MilpStatus::TimedOut | MilpStatus::NodeLimit => {
            result.status = AttackStatus::TimedOut;
            result.timed_out = true;
        }
    }
    let Some(best) = out.best else {
        return Ok(result);
    };
    let decoded = ea.decode(&best.values);
    result.delta = decoded.delta;
    result.outputs = decoded.outputs;
    result.objectives = best.objectives;
    let verdict = verify(net, &result, cfg);
    result.verified = verdict.ok;
    match (out.status, verdict.reason) {
        (_, None) => result.status = AttackStatus::Success,
        (MilpStatus::Optimal, Some(reason)) => return Err(AttackError::Unverified(reason)),
        (_, Some(_)) => {}
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult<T> {
    pub delta: Vec<T>,
    /// Weighted perturbation size, or the target output for hierarchical
    /// objectives.
    pub objective: T,
}

/// Scans the grid `{k * step}` inside the perturbation box of every
/// scenario input, keeping the best point that meets the attack constraint
/// exactly. Ties go to the lexicographically first grid point.
pub fn brute_force<T: Scalar>(
    net: &Network<T>,
    cfg: &AttackConfig<T>,
    scenario: &Scenario,
    step: T,
) -> Result<Option<BruteForceResult<T>>, AttackError> {
    cfg.validate(net)?;
    if !(step > T::zero() && step.is_finite()) {
        return Err(AttackError::Config("grid step must be positive".into()));
    }
    let k = scenario.indices.len();
    if k == 0 || k > 3 {
        return Err(AttackError::ScenarioTooLarge(k));
    }
    let n = net.input_dim();
    let pert = cfg.perturbation(n, &scenario.indices)?;
    pert.validate(n)?;
    let axes: Vec<Vec<T>> = pert
        .allowed
        .iter()
        .map(|&i| {
            let first = (pert.delta_lower[i] / step).ceil().to_i64().unwrap_or(0);
            let last = (pert.delta_upper[i] / step).floor().to_i64().unwrap_or(0);
            (first..=last).map(|j| T::lit(j as f64) * step).collect()
        })
        .collect();
    let total = axes.iter().fold(1u64, |a, ax| a.saturating_mul(ax.len() as u64));
    if total > MAX_GRID_POINTS {
        return Err(AttackError::GridTooLarge(total));
    }
    let constraint = cfg.effective_constraint();
    let clean = net.forward(&cfg.base_input)?;
    let target = match cfg.objective {
        ObjectiveKind::Hierarchical { target } => target,
        ObjectiveKind::MinPerturbation => None,
    };
    let cost = |delta: &[T]| -> T {
        delta
            .iter()
            .zip(&pert.weights)
            .fold(T::zero(), |a, (&d, &w)| a + w * d.abs())
    };
    // Scores are compared as (primary, secondary), smaller is better.
    let score = |delta: &[T], y: &[T]| -> (T, T) {
        match target {
            Some(t) => (-y[t], cost(delta)),
            None => (cost(delta), T::zero()),
        }
    };
    let rest: u64 = axes[1..].iter().map(|a| a.len() as u64).product();
    let best = (0..axes[0].len())
        .into_par_iter()
        .map(|a0| {
            let mut delta = vec![T::zero(); n];
            let mut x = cfg.base_input.clone();
            let mut best: Option<((T, T), Vec<T>)> = None;
            for r in 0..rest {
                let mut rem = r;
                let mut pick = vec![a0];
                for ax in axes[1..].iter().rev() {
                    pick.push((rem % ax.len() as u64) as usize);
                    rem /= ax.len() as u64;
                }
                pick[1..].reverse();
                for (p, (&i, ax)) in pick.iter().zip(pert.allowed.iter().zip(&axes)) {
                    delta[i] = ax[*p];
                    x[i] = cfg.base_input[i] + ax[*p];
                }
                let Ok(y) = net.forward(&x) else { continue };
                if !constraint_holds(&constraint, &y, &clean, T::zero(), T::one()) {
                    continue;
                }
                let s = score(&delta, &y);
                if best.as_ref().is_none_or(|(b, _)| s < *b) {
                    best = Some((s, delta.clone()));
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<((T, T), Vec<T>)>, |acc, (s, d)| match acc {
            Some((b, bd)) if !(s < b) => Some((b, bd)),
            _ => Some((s, d)),
        });
    Ok(best.map(|((primary, _), delta)| BruteForceResult {
        objective: if target.is_some() { -primary } else { primary },
        delta,
    }))
}

/// One campaign row. `result` is `None` when the scenario failed with an
/// error, described in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CampaignRow<T: Scalar = f64> {
    pub k: usize,
    pub scenario: Scenario,
    pub result: Option<AttackResult<T>>,
    pub error: Option<String>,
}

impl<T: Scalar> CampaignRow<T> {
    pub fn status_str(&self) -> &'static str {
        match &self.result {
            Some(r) => r.status.as_str(),
            None => "error",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignTotals {
    pub total: usize,
    pub successful: usize,
    /// Successful attacks found before the budget ran out.
    pub successful_timed_out: usize,
    pub no_attack: usize,
    pub timed_out: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CampaignReport<T: Scalar = f64> {
    pub config: AttackConfig<T>,
    pub ks: Vec<usize>,
    pub totals: CampaignTotals,
    pub peak_time: f64,
    pub mean_time: f64,
    pub rows: Vec<CampaignRow<T>>,
}

/// Column order of [`CampaignReport::write_csv`].
pub const CSV_HEADER: [&str; 8] = ["k", "scenario_id", "indices", "status", "timed_out", "verified", "objective", "nodes"];

impl<T: Scalar> CampaignReport<T> {
    fn tally(config: AttackConfig<T>, ks: Vec<usize>, rows: Vec<CampaignRow<T>>) -> Self {
        let mut t = CampaignTotals {
            total: rows.len(),
            ..Default::default()
        };
        let mut peak: f64 = 0.0;
        let mut sum = 0.0;
        let mut timed = 0usize;
        for row in &rows {
            match &row.result {
                None => t.errors += 1,
                Some(r) => {
                    match r.status {
                        AttackStatus::Success => {
                            t.successful += 1;
                            if r.timed_out {
                                t.successful_timed_out += 1;
                            }
                        }
                        AttackStatus::NoAttackExists => t.no_attack += 1,
                        AttackStatus::TimedOut => t.timed_out += 1,
                    }
                    peak = peak.max(r.wall_time);
                    sum += r.wall_time;
                    timed += 1;
                }
            }
        }
        CampaignReport {
            config,
            ks,
            totals: t,
            peak_time: peak,
            mean_time: if timed > 0 { sum / timed as f64 } else { 0.0 },
            rows,
        }
    }

    /// One row per scenario. Timing is left out so that identical runs give
    /// identical files; it is part of the JSON summary.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AttackError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let (timed_out, verified, objective, nodes) = match &row.result {
                Some(r) => (
                    r.timed_out.to_string(),
                    r.verified.to_string(),
                    r.objectives.iter().map(|v| format!("{v:.9e}")).collect::<Vec<_>>().join(";"),
                    r.nodes.to_string(),
                ),
                None => ("false".into(), "false".into(), String::new(), String::new()),
            };
            wr.write_record([
                row.k.to_string(),
                row.scenario.id.to_string(),
                row.scenario.to_string(),
                row.status_str().to_string(),
                timed_out,
                verified,
                objective,
                nodes,
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs [`synthesize`] for every `k`-subset of the inputs, for each `k` in
/// `ks`, on `jobs` worker threads. Rows come back in (k, scenario id)
/// order whatever the thread count.
pub fn run_campaign<T: Scalar>(
    net: &Network<T>,
    cfg: &AttackConfig<T>,
    ks: &[usize],
    solver: &SolverConfig,
    jobs: usize,
) -> Result<CampaignReport<T>, AttackError> {
    cfg.validate(net)?;
    if ks.is_empty() {
        return Err(AttackError::Config("no scenario sizes given".into()));
    }
    let mut work = Vec::new();
    for &k in ks {
        for s in enumerate_scenarios(net.input_dim(), k)? {
            work.push((k, s));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AttackError::Config(e.to_string()))?;
    let rows: Vec<CampaignRow<T>> = pool.install(|| {
        work.into_par_iter()
            .map(|(k, scenario)| match synthesize(net, cfg, &scenario, solver) {
                Ok(r) => CampaignRow {
                    k,
                    scenario,
                    result: Some(r),
                    error: None,
                },
                Err(e) => CampaignRow {
                    k,
                    scenario,
                    result: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    Ok(CampaignReport::tally(cfg.clone(), ks.to_vec(), rows))
}
