//! Bounded-variable primal simplex on a dense tableau.
//!
//! Rows are turned into equalities with one slack each (`<=`: slack in
//! `[0, inf)`, `>=`: slack in `(-inf, 0]`, `=`: no slack). Rows whose slack
//! cannot absorb the initial residual get an artificial column, and phase 1
//! minimises the sum of artificials. Fixed variables are substituted out
//! before the tableau is built.
//!
//! Pricing is Dantzig's rule until `bland_after` consecutive degenerate
//! pivots have been taken; from then on Bland's smallest-index rule is used
//! until a pivot makes progress.

use thiserror::Error;

use crate::milp_model::{MilpModel, ObjectiveSense, Sense};
use crate::scalar::Scalar;

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex iteration limit ({0}) exceeded")]
    IterationLimit(usize),
    #[error("malformed LP: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow<T: Scalar = f64> {
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> LpRow<T> {
    pub fn activity(&self, x: &[T]) -> T {
        self.coeffs
            .iter()
            .fold(T::zero(), |acc, &(j, c)| acc + c * x[j])
    }

    pub fn violation(&self, x: &[T]) -> T {
        let d = self.activity(x) - self.rhs;
        match self.sense {
            Sense::Le => d.max(T::zero()),
            Sense::Ge => (-d).max(T::zero()),
            Sense::Eq => d.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T: Scalar = f64> {
    pub sense: ObjectiveSense,
    pub objective: Vec<T>,
    pub objective_constant: T,
    pub rows: Vec<LpRow<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> LpProblem<T> {
    /// Problem over `n` variables with empty objective and no rows.
    pub fn new(n: usize, lower: Vec<T>, upper: Vec<T>) -> Self {
        assert_eq!(lower.len(), n);
        assert_eq!(upper.len(), n);
        Self {
            sense: ObjectiveSense::Minimize,
            objective: vec![T::zero(); n],
            objective_constant: T::zero(),
            rows: Vec::new(),
            lower,
            upper,
        }
    }

    /// LP relaxation of an indicator-free model: binaries become `[0, 1]`
    /// continuous variables. Uses objective `level` when present, otherwise
    /// a zero objective.
    pub fn from_model(model: &MilpModel<T>, level: usize) -> Result<Self, LpError> {
        if !model.indicators().is_empty() {
            return Err(LpError::Malformed(
                "model still has indicator constraints; lower them first".into(),
            ));
        }
        let n = model.var_count();
        let mut p = Self::new(n, model.lower_bounds(), model.upper_bounds());
        for c in model.constraints() {
            p.rows.push(LpRow {
                coeffs: c.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                sense: c.sense,
                rhs: c.rhs - c.expr.constant,
            });
        }
        if let Some(obj) = model.objectives().get(level) {
            p.set_objective(obj.sense, &obj.expr);
        }
        Ok(p)
    }

    pub fn set_objective(&mut self, sense: ObjectiveSense, expr: &crate::milp_model::LinearExpr<T>) {
        self.sense = sense;
        self.objective = vec![T::zero(); self.var_count()];
        for &(c, v) in &expr.terms {
            self.objective[v.index()] += c;
        }
        self.objective_constant = expr.constant;
    }

    pub fn var_count(&self) -> usize {
        self.lower.len()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective
            .iter()
            .zip(x)
            .fold(self.objective_constant, |acc, (&c, &v)| acc + c * v)
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for ((&v, &l), &u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - v).max(v - u);
        }
        for r in &self.rows {
            worst = worst.max(r.violation(x));
        }
        worst
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.var_count();
        if self.upper.len() != n || self.objective.len() != n {
            return Err(LpError::Malformed("bound/objective length mismatch".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has non-finite rhs")));
            }
            for &(j, c) in &r.coeffs {
                if j >= n || !c.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has a bad term on column {j}")));
                }
            }
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] == T::infinity()
                || self.upper[j] == T::neg_infinity()
            {
                return Err(LpError::Malformed(format!("column {j} has unusable bounds")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome<T: Scalar = f64> {
    pub status: LpStatus,
    /// Variable values; empty unless `status` is `Optimal`.
    pub values: Vec<T>,
    /// Objective in the problem's own sense; meaningful only when optimal.
    pub objective: T,
    pub iterations: usize,
}

impl<T: Scalar> LpOutcome<T> {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: T::nan(),
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConfig {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// `None` picks a limit from the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            bland_after: 200,
            max_iterations: None,
        }
    }
}

impl LpConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            feasibility_tol: tol,
            ..Self::default()
        }
    }
}

/// Solves `p` with default settings and feasibility tolerance `tol`.
pub fn solve_lp<T: Scalar>(p: &LpProblem<T>, tol: f64) -> Result<LpOutcome<T>, LpError> {
    solve_lp_with(p, &LpConfig::with_tolerance(tol))
}

pub fn solve_lp_with<T: Scalar>(p: &LpProblem<T>, cfg: &LpConfig) -> Result<LpOutcome<T>, LpError> {
    match LpSession::new(p, cfg)? {
        Some(mut s) => s.optimize(&p.objective, p.objective_constant, p.sense),
        None => Ok(LpOutcome::without_point(LpStatus::Infeasible, 0)),
    }
}

const NONBASIC: usize = usize::MAX;

/// A feasible basis for a problem's constraint set, reusable across several
/// objectives. Each `optimize` call starts from the basis left by the
/// previous one.
#[derive(Debug, Clone)]
pub struct LpSession<T: Scalar> {
    cfg: LpConfig,
    n_orig: usize,
    /// Original column of each structural tableau column.
    col_var: Vec<usize>,
    /// Tableau column per original variable, `NONBASIC` when substituted.
    var_col: Vec<usize>,
    fixed_value: Vec<T>,
    m: usize,
    n: usize,
    tab: Vec<T>,
    /// Original (unscaled) rows over tableau columns, for recomputing values.
    orig_rows: Vec<Vec<(usize, T)>>,
    rhs: Vec<T>,
    /// Column holding a scaled identity entry in each row and its scale.
    id_col: Vec<(usize, T)>,
    lower: Vec<T>,
    upper: Vec<T>,
    x: Vec<T>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    cost: Vec<T>,
    d: Vec<T>,
    iterations: usize,
    max_iterations: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl<T: Scalar> LpSession<T> {
    /// Runs phase 1. Returns `Ok(None)` when the constraints are infeasible.
    pub fn new(p: &LpProblem<T>, cfg: &LpConfig) -> Result<Option<Self>, LpError> {
        p.validate()?;
        let tol = T::lit(cfg.feasibility_tol);
        let n_orig = p.var_count();
        let mut var_col = vec![NONBASIC; n_orig];
        let mut col_var = Vec::new();
        let mut fixed_value = vec![T::zero(); n_orig];
        for j in 0..n_orig {
            let (l, u) = (p.lower[j], p.upper[j]);
            if l > u + tol {
                return Ok(None);
            }
            if u - l <= T::zero() {
                fixed_value[j] = l;
            } else {
                var_col[j] = col_var.len();
                col_var.push(j);
            }
        }
        let n_struct = col_var.len();

        // Rows after substituting fixed variables.
        struct Pending<T> {
            coeffs: Vec<(usize, T)>,
            sense: Sense,
            rhs: T,
        }
        let mut rows: Vec<Pending<T>> = Vec::new();
        for r in &p.rows {
            let mut rhs = r.rhs;
            let mut coeffs: Vec<(usize, T)> = Vec::new();
            for &(j, c) in &r.coeffs {
                if c == T::zero() {
                    continue;
                }
                if var_col[j] == NONBASIC {
                    rhs -= c * fixed_value[j];
                } else {
                    coeffs.push((var_col[j], c));
                }
            }
            if coeffs.is_empty() {
                let ok = match r.sense {
                    Sense::Le => rhs >= -tol,
                    Sense::Ge => rhs <= tol,
                    Sense::Eq => rhs.abs() <= tol,
                };
                if !ok {
                    return Ok(None);
                }
                continue;
            }
            rows.push(Pending {
                coeffs,
                sense: r.sense,
                rhs,
            });
        }
        let m = rows.len();

        let mut lower: Vec<T> = col_var.iter().map(|&j| p.lower[j]).collect();
        let mut upper: Vec<T> = col_var.iter().map(|&j| p.upper[j]).collect();
        let mut x: Vec<T> = lower
            .iter()
            .zip(&upper)
            .map(|(&l, &u)| {
                if l.is_finite() {
                    l
                } else if u.is_finite() {
                    u
                } else {
                    T::zero()
                }
            })
            .collect();

        // Slack columns.
        let mut slack_of = vec![NONBASIC; m];
        for (i, r) in rows.iter().enumerate() {
            let (l, u) = match r.sense {
                Sense::Le => (T::zero(), T::infinity()),
                Sense::Ge => (T::neg_infinity(), T::zero()),
                Sense::Eq => continue,
            };
            slack_of[i] = lower.len();
            lower.push(l);
            upper.push(u);
            x.push(T::zero());
        }

        // Decide the initial basic column of every row.
        let mut basis = vec![NONBASIC; m];
        let mut art_rows: Vec<(usize, T, T)> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let act = r.coeffs.iter().fold(T::zero(), |a, &(c, v)| a + v * x[c]);
            let resid = r.rhs - act;
            let s = slack_of[i];
            if s != NONBASIC && lower[s] <= resid && resid <= upper[s] {
                basis[i] = s;
                x[s] = resid;
            } else {
                let sigma = if resid >= T::zero() { T::one() } else { -T::one() };
                art_rows.push((i, sigma, resid.abs()));
            }
        }
        let art_start = lower.len();
        for &(i, _, val) in &art_rows {
            basis[i] = lower.len();
            lower.push(T::zero());
            upper.push(T::infinity());
            x.push(val);
        }
        let n = lower.len();

        let mut orig_rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(m);
        let mut id_col = vec![(NONBASIC, T::one()); m];
        for (i, r) in rows.iter().enumerate() {
            let mut row = r.coeffs.clone();
            if slack_of[i] != NONBASIC {
                row.push((slack_of[i], T::one()));
                id_col[i] = (slack_of[i], T::one());
            }
            orig_rows.push(row);
        }
        for (k, &(i, sigma, _)) in art_rows.iter().enumerate() {
            orig_rows[i].push((art_start + k, sigma));
            id_col[i] = (art_start + k, sigma);
        }

        let mut tab = vec![T::zero(); m * n];
        for i in 0..m {
            let scale = id_col[i].1;
            let row = &mut tab[i * n..(i + 1) * n];
            for &(c, v) in &orig_rows[i] {
                row[c] += v / scale;
            }
        }
        let mut row_of = vec![NONBASIC; n];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = i;
        }

        let max_iterations = cfg
            .max_iterations
            .unwrap_or_else(|| 20_000 + 50 * (m + n));
        let mut s = Self {
            cfg: *cfg,
            n_orig,
            col_var,
            var_col,
            fixed_value,
            m,
            n,
            tab,
            orig_rows,
            rhs: rows.iter().map(|r| r.rhs).collect(),
            id_col,
            lower,
            upper,
            x,
            basis,
            row_of,
            cost: vec![T::zero(); n],
            d: vec![T::zero(); n],
            iterations: 0,
            max_iterations,
        };
        debug_assert!(s.n >= n_struct);

        if !art_rows.is_empty() {
            for j in art_start..n {
                s.cost[j] = T::one();
            }
            s.compute_reduced_costs();
            s.run()?;
            s.refresh_basic_values();
            let infeas = (art_start..n).fold(T::zero(), |a, j| a + s.x[j].max(T::zero()));
            if infeas > tol {
                return Ok(None);
            }
            for j in art_start..n {
                s.upper[j] = T::zero();
                if s.row_of[j] == NONBASIC {
                    s.x[j] = T::zero();
                }
            }
            s.drive_out_artificials(art_start);
            s.refresh_basic_values();
        }
        Ok(Some(s))
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Optimises `objective . x + constant` in `sense` from the current basis.
    pub fn optimize(&mut self, objective: &[T], constant: T, sense: ObjectiveSense) -> Result<LpOutcome<T>, LpError> {
        if objective.len() != self.n_orig {
            return Err(LpError::Malformed("objective length mismatch".into()));
        }
        let flip = sense == ObjectiveSense::Maximize;
        self.cost.iter_mut().for_each(|c| *c = T::zero());
        for (k, &j) in self.col_var.iter().enumerate() {
            self.cost[k] = if flip { -objective[j] } else { objective[j] };
        }
        self.compute_reduced_costs();
        let start = self.iterations;
        let phase = self.run()?;
        self.refresh_basic_values();
        if let Phase::Unbounded = phase {
            return Ok(LpOutcome::without_point(LpStatus::Unbounded, self.iterations - start));
        }
        // Values drifted back inside tolerance may uncover a few more
        // improving columns; one polishing pass settles them.
        self.compute_reduced_costs();
        if let Phase::Unbounded = self.run()? {
            return Ok(LpOutcome::without_point(LpStatus::Unbounded, self.iterations - start));
        }
        self.refresh_basic_values();
        let values = self.values();
        let objective_value = values
            .iter()
            .zip(objective)
            .fold(constant, |acc, (&v, &c)| acc + c * v);
        Ok(LpOutcome {
            status: LpStatus::Optimal,
            values,
            objective: objective_value,
            iterations: self.iterations - start,
        })
    }

    fn values(&self) -> Vec<T> {
        (0..self.n_orig)
            .map(|j| match self.var_col[j] {
                NONBASIC => self.fixed_value[j],
                c => self.x[c].max(self.lower[c]).min(self.upper[c]),
            })
            .collect()
    }

    fn compute_reduced_costs(&mut self) {
        let n = self.n;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == T::zero() {
                continue;
            }
            let row = &self.tab[i * n..(i + 1) * n];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
    }

    /// Recomputes basic values from the nonbasic ones and the original rows.
    fn refresh_basic_values(&mut self) {
        let n = self.n;
        let mut resid = self.rhs.clone();
        for (i, row) in self.orig_rows.iter().enumerate() {
            for &(c, v) in row {
                if self.row_of[c] == NONBASIC {
                    resid[i] -= v * self.x[c];
                }
            }
        }
        let mut xb = vec![T::zero(); self.m];
        for (k, &r) in resid.iter().enumerate() {
            if r == T::zero() {
                continue;
            }
            let (col, scale) = self.id_col[k];
            let coef = r / scale;
            for (i, v) in xb.iter_mut().enumerate() {
                *v += coef * self.tab[i * n + col];
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            self.x[b] = xb[i];
        }
    }

    fn drive_out_artificials(&mut self, art_start: usize) {
        let piv = T::lit(1e-7);
        for r in 0..self.m {
            if self.basis[r] < art_start {
                continue;
            }
            let row = &self.tab[r * self.n..(r + 1) * self.n];
            let cand = (0..art_start)
                .filter(|&j| self.row_of[j] == NONBASIC && self.lower[j] < self.upper[j])
                .max_by(|&a, &b| {
                    row[a]
                        .abs()
                        .partial_cmp(&row[b].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                });
            if let Some(q) = cand {
                if row[q].abs() > piv {
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.x[leaving] = T::zero();
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let prow_start = r * n;
        let p = self.tab[prow_start + q];
        let mut prow: Vec<T> = self.tab[prow_start..prow_start + n].to_vec();
        for v in &mut prow {
            *v /= p;
        }
        prow[q] = T::one();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.tab[i * n..(i + 1) * n];
            let f = row[q];
            if f == T::zero() {
                continue;
            }
            for (a, &pv) in row.iter_mut().zip(&prow) {
                *a -= f * pv;
            }
            row[q] = T::zero();
        }
        let f = self.d[q];
        if f != T::zero() {
            for (dj, &pv) in self.d.iter_mut().zip(&prow) {
                *dj -= f * pv;
            }
            self.d[q] = T::zero();
        }
        self.tab[prow_start..prow_start + n].copy_from_slice(&prow);
        let leaving = self.basis[r];
        self.row_of[leaving] = NONBASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
    }

    fn choose_entering(&self, bland: bool) -> Option<usize> {
        let opt = T::lit(self.cfg.optimality_tol);
        let mut best: Option<(usize, T)> = None;
        for j in 0..self.n {
            if self.row_of[j] != NONBASIC || self.lower[j] >= self.upper[j] {
                continue;
            }
            let dj = self.d[j];
            let eligible = (dj < -opt && self.x[j] < self.upper[j]) || (dj > opt && self.x[j] > self.lower[j]);
            if !eligible {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, v)| dj.abs() > v) {
                best = Some((j, dj.abs()));
            }
        }
        best.map(|(j, _)| j)
    }

    fn run(&mut self) -> Result<Phase, LpError> {
        let piv_tol = T::lit(self.cfg.pivot_tol);
        let degenerate_step = T::lit(1e-12);
        let n = self.n;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.iterations));
            }
            let bland = degenerate_run >= self.cfg.bland_after;
            let Some(q) = self.choose_entering(bland) else {
                return Ok(Phase::Optimal);
            };
            self.iterations += 1;
            let dir = if self.d[q] < T::zero() { T::one() } else { -T::one() };

            let mut step = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = T::zero();
            for i in 0..self.m {
                let alpha = self.tab[i * n + q] * dir;
                let b = self.basis[i];
                let lim = if alpha > piv_tol {
                    if !self.lower[b].is_finite() {
                        continue;
                    }
                    ((self.x[b] - self.lower[b]) / alpha, true)
                } else if alpha < -piv_tol {
                    if !self.upper[b].is_finite() {
                        continue;
                    }
                    ((self.upper[b] - self.x[b]) / -alpha, false)
                } else {
                    continue;
                };
                let t = lim.0.max(T::zero());
                let better = match leave {
                    _ if t < step => true,
                    Some((r, _)) if t == step => {
                        if bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > leave_alpha
                        }
                    }
                    _ => false,
                };
                if better {
                    step = t;
                    leave = Some((i, lim.1));
                    leave_alpha = alpha.abs();
                }
            }
            if !step.is_finite() {
                return Ok(Phase::Unbounded);
            }
            if step <= degenerate_step {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let delta = dir * step;
            if step != T::zero() {
                self.x[q] += delta;
                for i in 0..self.m {
                    let a = self.tab[i * n + q];
                    if a != T::zero() {
                        let b = self.basis[i];
                        self.x[b] -= delta * a;
                    }
                }
            }
            match leave {
                Some((r, to_lower)) => {
                    let b = self.basis[r];
                    self.x[b] = if to_lower { self.lower[b] } else { self.upper[b] };
                    self.pivot(r, q);
                }
                None => {
                    self.x[q] = if dir > T::zero() { self.upper[q] } else { self.lower[q] };
                }
            }
        }
    }
}
