//! Mixed-integer linear programs with indicator constraints and ordered
//! (lexicographic) objectives.
//!
//! A model is append-only: ids handed out by `add_*` stay valid for the
//! lifetime of the model. Solvers take `&MilpModel`, so a model that has been
//! handed to a solver is effectively frozen.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::network::Interval;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable `{name}` has invalid bounds [{lower}, {upper}]")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("unknown variable id {id} (model has {count} variables)")]
    UnknownVar { id: usize, count: usize },
    #[error("non-finite coefficient on variable {id}")]
    NonFiniteCoefficient { id: usize },
    #[error("non-finite right-hand side")]
    NonFiniteRhs,
    #[error("indicator guard `{name}` is not binary")]
    GuardNotBinary { name: String },
    #[error("cannot lower indicator {indicator}: variable `{var}` has no finite bound")]
    UnboundedBigM { indicator: usize, var: String },
    #[error("model has no objective")]
    NoObjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec<T: Scalar = f64> {
    pub kind: VarKind,
    pub lower: T,
    pub upper: T,
    pub name: String,
}

impl<T: Scalar> VarSpec<T> {
    pub fn continuous(name: impl Into<String>, lower: T, upper: T) -> Self {
        Self {
            kind: VarKind::Continuous,
            lower,
            upper,
            name: name.into(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            kind: VarKind::Binary,
            lower: T::zero(),
            upper: T::one(),
            name: name.into(),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = self.lower.is_nan()
            || self.upper.is_nan()
            || self.lower > self.upper
            || self.lower == T::infinity()
            || self.upper == T::neg_infinity()
            || (self.kind == VarKind::Binary && (self.lower < T::zero() || self.upper > T::one()));
        if bad {
            return Err(ModelError::InvalidBounds {
                name: self.name.clone(),
                lower: self.lower.to_f64_lossy(),
                upper: self.upper.to_f64_lossy(),
            });
        }
        Ok(())
    }
}

/// `sum(coef * var) + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExpr<T: Scalar = f64> {
    pub terms: Vec<(T, VarId)>,
    pub constant: T,
}

impl<T: Scalar> Default for LinearExpr<T> {
    fn default() -> Self {
        Self {
            terms: Vec::new(),
            constant: T::zero(),
        }
    }
}

impl<T: Scalar> LinearExpr<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        Self::new().term(T::one(), v)
    }

    pub fn term(mut self, coef: T, v: VarId) -> Self {
        self.terms.push((coef, v));
        self
    }

    pub fn plus_constant(mut self, c: T) -> Self {
        self.constant += c;
        self
    }

    pub fn push(&mut self, coef: T, v: VarId) {
        self.terms.push((coef, v));
    }

    /// Merges repeated variables (first-appearance order) and drops zero
    /// coefficients.
    pub fn normalized(&self) -> Self {
        let mut order: Vec<VarId> = Vec::new();
        let mut acc: BTreeMap<VarId, T> = BTreeMap::new();
        for &(c, v) in &self.terms {
            acc.entry(v)
                .and_modify(|a| *a += c)
                .or_insert_with(|| {
                    order.push(v);
                    c
                });
        }
        let terms = order
            .into_iter()
            .filter_map(|v| {
                let c = acc[&v];
                (c != T::zero()).then_some((c, v))
            })
            .collect();
        Self {
            terms,
            constant: self.constant,
        }
    }

    pub fn eval(&self, values: &[T]) -> T {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(c, v)| acc + c * values[v.0])
    }

    pub fn negated(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|&(c, v)| (-c, v)).collect(),
            constant: -self.constant,
        }
    }

    /// Smallest and largest value over per-variable bounds. Infinite bounds
    /// propagate to an infinite end.
    pub fn range(&self, lower: &[T], upper: &[T]) -> (T, T) {
        let (mut lo, mut hi) = (self.constant, self.constant);
        for &(c, v) in &self.terms {
            let (l, u) = (lower[v.0], upper[v.0]);
            if c > T::zero() {
                lo += c * l;
                hi += c * u;
            } else if c < T::zero() {
                lo += c * u;
                hi += c * l;
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// `expr sense rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T: Scalar = f64> {
    pub expr: LinearExpr<T>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn new(expr: LinearExpr<T>, sense: Sense, rhs: T) -> Self {
        Self { expr, sense, rhs }
    }

    pub fn le(expr: LinearExpr<T>, rhs: T) -> Self {
        Self::new(expr, Sense::Le, rhs)
    }

    pub fn ge(expr: LinearExpr<T>, rhs: T) -> Self {
        Self::new(expr, Sense::Ge, rhs)
    }

    pub fn eq(expr: LinearExpr<T>, rhs: T) -> Self {
        Self::new(expr, Sense::Eq, rhs)
    }

    /// Normalized terms with the expression constant folded into the rhs.
    pub fn canonical(&self) -> Self {
        let mut expr = self.expr.normalized();
        let rhs = self.rhs - expr.constant;
        expr.constant = T::zero();
        Self {
            expr,
            sense: self.sense,
            rhs,
        }
    }

    /// Amount by which `values` violate the constraint (0 when satisfied).
    pub fn violation(&self, values: &[T]) -> T {
        let lhs = self.expr.eval(values);
        let d = lhs - self.rhs;
        match self.sense {
            Sense::Le => d.max(T::zero()),
            Sense::Ge => (-d).max(T::zero()),
            Sense::Eq => d.abs(),
        }
    }

    /// Equivalent list of `<=` constraints (`=` becomes two rows).
    pub fn as_le_rows(&self) -> Vec<Constraint<T>> {
        match self.sense {
            Sense::Le => vec![Self::le(self.expr.clone(), self.rhs)],
            Sense::Ge => vec![Self::le(self.expr.negated(), -self.rhs)],
            Sense::Eq => vec![
                Self::le(self.expr.clone(), self.rhs),
                Self::le(self.expr.negated(), -self.rhs),
            ],
        }
    }
}

/// `guard == guard_value  =>  implied`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorConstraint<T: Scalar = f64> {
    pub guard: VarId,
    pub guard_value: bool,
    pub implied: Constraint<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective<T: Scalar = f64> {
    pub sense: ObjectiveSense,
    pub expr: LinearExpr<T>,
}

impl<T: Scalar> Objective<T> {
    pub fn minimize(expr: LinearExpr<T>) -> Self {
        Self {
            sense: ObjectiveSense::Minimize,
            expr,
        }
    }

    pub fn maximize(expr: LinearExpr<T>) -> Self {
        Self {
            sense: ObjectiveSense::Maximize,
            expr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel<T: Scalar = f64> {
    vars: Vec<VarSpec<T>>,
    constraints: Vec<Constraint<T>>,
    indicators: Vec<IndicatorConstraint<T>>,
    objectives: Vec<Objective<T>>,
}

impl<T: Scalar> Default for MilpModel<T> {
    fn default() -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            indicators: Vec::new(),
            objectives: Vec::new(),
        }
    }
}

impl<T: Scalar> MilpModel<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, spec: VarSpec<T>) -> Result<VarId, ModelError> {
        spec.validate()?;
        self.vars.push(spec);
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: T, upper: T) -> Result<VarId, ModelError> {
        self.add_var(VarSpec::continuous(name, lower, upper))
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, ModelError> {
        self.add_var(VarSpec::binary(name))
    }

    fn check_expr(&self, expr: &LinearExpr<T>) -> Result<(), ModelError> {
        for &(c, v) in &expr.terms {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVar {
                    id: v.0,
                    count: self.vars.len(),
                });
            }
            if !c.is_finite() {
                return Err(ModelError::NonFiniteCoefficient { id: v.0 });
            }
        }
        if !expr.constant.is_finite() {
            return Err(ModelError::NonFiniteRhs);
        }
        Ok(())
    }

    fn check_constraint(&self, c: &Constraint<T>) -> Result<(), ModelError> {
        self.check_expr(&c.expr)?;
        if !c.rhs.is_finite() {
            return Err(ModelError::NonFiniteRhs);
        }
        Ok(())
    }

    /// Stores the constraint with merged terms and the expression constant
    /// moved to the right-hand side.
    pub fn add_constraint(&mut self, c: Constraint<T>) -> Result<usize, ModelError> {
        self.check_constraint(&c)?;
        self.constraints.push(c.canonical());
        Ok(self.constraints.len() - 1)
    }

    pub fn add_indicator(&mut self, ic: IndicatorConstraint<T>) -> Result<usize, ModelError> {
        let g = ic.guard.0;
        if g >= self.vars.len() {
            return Err(ModelError::UnknownVar {
                id: g,
                count: self.vars.len(),
            });
        }
        if self.vars[g].kind != VarKind::Binary {
            return Err(ModelError::GuardNotBinary {
                name: self.vars[g].name.clone(),
            });
        }
        self.check_constraint(&ic.implied)?;
        self.indicators.push(IndicatorConstraint {
            implied: ic.implied.canonical(),
            ..ic
        });
        Ok(self.indicators.len() - 1)
    }

    pub fn push_objective(&mut self, obj: Objective<T>) -> Result<usize, ModelError> {
        self.check_expr(&obj.expr)?;
        self.objectives.push(Objective {
            sense: obj.sense,
            expr: obj.expr.normalized(),
        });
        Ok(self.objectives.len() - 1)
    }

    pub fn set_objectives(&mut self, objs: Vec<Objective<T>>) -> Result<(), ModelError> {
        self.objectives.clear();
        for o in objs {
            self.push_objective(o)?;
        }
        Ok(())
    }

    /// Copy of the model carrying only objective `level`.
    pub fn with_single_objective(&self, level: usize) -> Result<Self, ModelError> {
        let obj = self.objectives.get(level).ok_or(ModelError::NoObjective)?;
        Ok(Self {
            objectives: vec![obj.clone()],
            ..self.clone()
        })
    }

    pub fn vars(&self) -> &[VarSpec<T>] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &VarSpec<T> {
        &self.vars[v.0]
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var_id(&self, index: usize) -> Option<VarId> {
        (index < self.vars.len()).then_some(VarId(index))
    }

    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }

    pub fn indicators(&self) -> &[IndicatorConstraint<T>] {
        &self.indicators
    }

    pub fn objectives(&self) -> &[Objective<T>] {
        &self.objectives
    }

    pub fn binaries(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
    }

    pub fn lower_bounds(&self) -> Vec<T> {
        self.vars.iter().map(|v| v.lower).collect()
    }

    pub fn upper_bounds(&self) -> Vec<T> {
        self.vars.iter().map(|v| v.upper).collect()
    }

    /// Replaces every indicator by big-M rows. A variable's interval comes
    /// from `bounds` when present, otherwise from its declared bounds; both
    /// must be finite for every variable an implied constraint touches.
    pub fn lower_indicators(&self, bounds: &BTreeMap<VarId, Interval<T>>) -> Result<Self, ModelError> {
        let mut lower = self.lower_bounds();
        let mut upper = self.upper_bounds();
        for (v, iv) in bounds {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVar {
                    id: v.0,
                    count: self.vars.len(),
                });
            }
            lower[v.0] = iv.lo;
            upper[v.0] = iv.hi;
        }
        let mut out = Self {
            indicators: Vec::new(),
            ..self.clone()
        };
        for (k, ic) in self.indicators.iter().enumerate() {
            for row in big_m_rows(k, ic, &lower, &upper, |v| self.vars[v.0].name.clone())? {
                out.constraints.push(row);
            }
        }
        Ok(out)
    }

    /// Largest violation over bounds, constraints, integrality and
    /// indicators. Indicators are judged with the guard rounded to 0/1.
    pub fn max_violation(&self, values: &[T]) -> T {
        let mut worst = T::zero();
        for (spec, v) in self.vars.iter().zip(values) {
            worst = worst.max(spec.lower - *v).max(*v - spec.upper);
            if spec.kind == VarKind::Binary {
                worst = worst.max((*v - v.round()).abs());
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(values));
        }
        for ic in &self.indicators {
            let g = values[ic.guard.0] >= T::lit(0.5);
            if g == ic.guard_value {
                worst = worst.max(ic.implied.violation(values));
            }
        }
        worst
    }
}

/// Big-M rows for one indicator under the given per-variable bounds.
///
/// `g = 1 => e <= r` becomes `e <= r + M (1 - g)` and `g = 0 => e <= r`
/// becomes `e <= r + M g`, with `M = max(0, sup(e - r))`. Rows whose `M` is
/// zero are returned without the guard term since the implied constraint
/// holds everywhere in the box.
pub fn big_m_rows<T: Scalar>(
    index: usize,
    ic: &IndicatorConstraint<T>,
    lower: &[T],
    upper: &[T],
    name_of: impl Fn(VarId) -> String,
) -> Result<Vec<Constraint<T>>, ModelError> {
    let mut rows = Vec::new();
    for row in ic.implied.as_le_rows() {
        let (_, hi) = row.expr.range(lower, upper);
        if !hi.is_finite() {
            let culprit = row
                .expr
                .terms
                .iter()
                .find(|(_, v)| !(lower[v.0].is_finite() && upper[v.0].is_finite()))
                .map(|&(_, v)| name_of(v))
                .unwrap_or_default();
            return Err(ModelError::UnboundedBigM {
                indicator: index,
                var: culprit,
            });
        }
        let big_m = (hi - row.rhs).max(T::zero());
        if big_m == T::zero() {
            continue;
        }
        let mut expr = row.expr.clone();
        let rhs = if ic.guard_value {
            expr.push(big_m, ic.guard);
            row.rhs + big_m
        } else {
            expr.push(-big_m, ic.guard);
            row.rhs
        };
        rows.push(Constraint::le(expr, rhs));
    }
    Ok(rows)
}

impl<T: Scalar> fmt::Display for MilpModel<T> {
    /// Text listing used for diffing models in tests:
    ///
    /// ```text
    /// var v0 dxp0 continuous [0, 5]
    /// con c0: 1 x_1_0 - 1 s_1_0 = -0.5
    /// ind i0: ac_1_0 = 1 -> 1 x_1_0 <= 0
    /// obj o0 minimize: 1 dxp0 + 1 dxm0
    /// ```
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let expr = |e: &LinearExpr<T>| -> String {
            let mut s = String::new();
            for (k, &(c, v)) in e.terms.iter().enumerate() {
                let name = &self.vars[v.0].name;
                if k == 0 {
                    s.push_str(&format!("{c} {name}"));
                } else if c < T::zero() {
                    s.push_str(&format!(" - {} {name}", -c));
                } else {
                    s.push_str(&format!(" + {c} {name}"));
                }
            }
            if e.constant != T::zero() || e.terms.is_empty() {
                s.push_str(&format!(" + {}", e.constant));
            }
            s
        };
        for (i, v) in self.vars.iter().enumerate() {
            let kind = match v.kind {
                VarKind::Continuous => "continuous",
                VarKind::Binary => "binary",
            };
            writeln!(f, "var v{i} {} {kind} [{}, {}]", v.name, v.lower, v.upper)?;
        }
        for (i, c) in self.constraints.iter().enumerate() {
            writeln!(f, "con c{i}: {} {} {}", expr(&c.expr), c.sense, c.rhs)?;
        }
        for (i, ic) in self.indicators.iter().enumerate() {
            writeln!(
                f,
                "ind i{i}: {} = {} -> {} {} {}",
                self.vars[ic.guard.0].name,
                u8::from(ic.guard_value),
                expr(&ic.implied.expr),
                ic.implied.sense,
                ic.implied.rhs
            )?;
        }
        for (i, o) in self.objectives.iter().enumerate() {
            let sense = match o.sense {
                ObjectiveSense::Minimize => "minimize",
                ObjectiveSense::Maximize => "maximize",
            };
            writeln!(f, "obj o{i} {sense}: {}", expr(&o.expr))?;
        }
        Ok(())
    }
}
