//! Encodes a network plus an attacker's perturbation budget as a MILP.
//!
//! Every input the attacker may touch gets a pair of non-negative variables
//! `dxp`, `dxm` with `delta = dxp - dxm`; untouched inputs stay constants.
//! Each ReLU neuron `i` of layer `k` gets
//!
//! ```text
//! sum_j w_ij * in_j + b_i = x - s,   x >= 0,  s >= 0,
//! ac = 1  =>  x <= 0,
//! ac = 0  =>  s <= 0,                ac in {0, 1}
//! ```
//!
//! and a linear neuron gets a free output variable tied to its affine value.
//! The variables' finite bounds come from interval propagation over the
//! perturbation box; they supply the big-M constants for the relaxation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bb_solver::NodeHooks;
use crate::lp_solver::LpProblem;
use crate::milp_model::{Constraint, IndicatorConstraint, LinearExpr, MilpModel, ModelError, Objective, VarId};
use crate::network::{affine_interval, ActivationKind, Interval, IntervalBox, Network, NetworkError};
use crate::scalar::Scalar;
use crate::segments::{project, Line, OutputRow};

/// Default margin used to make orderings strict.
pub const DEFAULT_EPS: f64 = 1e-4;

/// Inputs whose LP range gets probed at every node when at most this many
/// inputs are perturbable.
pub const DEFAULT_PROBE_LIMIT: usize = 3;

/// Piece budget for exact single-input propagation.
pub const DEFAULT_MAX_PIECES: usize = 20_000;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("base input has length {actual}, network expects {expected}")]
    BaseLength { expected: usize, actual: usize },
    #[error("{what} index {index} out of range (dimension {dim})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        dim: usize,
    },
    #[error("delta bounds for input {index} must satisfy lo <= 0 <= hi and be finite")]
    BadDeltaBounds { index: usize },
    #[error("weight for input {index} must be finite and non-negative")]
    BadWeight { index: usize },
    #[error("eps must be positive")]
    NonPositiveEps,
    #[error("output range lower bound exceeds upper bound")]
    InvertedRange,
    #[error("ordering is not a permutation of the outputs")]
    BadPermutation,
    #[error("partial ordering needs two distinct outputs")]
    RepeatedIndex,
    #[error("hierarchical objective needs a target output index")]
    MissingTarget,
    #[error("activation pattern has length {actual}, network has {expected} ReLU neurons")]
    PatternLength { expected: usize, actual: usize },
}

/// What the attacker may change: a clean input, the indices that may move,
/// per-index delta bounds and per-index cost weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec<T: Scalar = f64> {
    pub base: Vec<T>,
    /// Strictly increasing input indices.
    pub allowed: Vec<usize>,
    pub delta_lower: Vec<T>,
    pub delta_upper: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> PerturbationSpec<T> {
    /// Same delta range `[lo, hi]` and weight 1 for every index.
    pub fn uniform(base: Vec<T>, allowed: Vec<usize>, lo: T, hi: T) -> Self {
        let n = base.len();
        let mut allowed = allowed;
        allowed.sort_unstable();
        allowed.dedup();
        Self {
            base,
            allowed,
            delta_lower: vec![lo; n],
            delta_upper: vec![hi; n],
            weights: vec![T::one(); n],
        }
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Self {
        self.weights = weights;
        self
    }

    pub fn is_allowed(&self, index: usize) -> bool {
        self.allowed.binary_search(&index).is_ok()
    }

    pub fn validate(&self, input_dim: usize) -> Result<(), EncodeError> {
        if self.base.len() != input_dim {
            return Err(EncodeError::BaseLength {
                expected: input_dim,
                actual: self.base.len(),
            });
        }
        for (what, len) in [
            ("delta_lower", self.delta_lower.len()),
            ("delta_upper", self.delta_upper.len()),
            ("weights", self.weights.len()),
        ] {
            if len != input_dim {
                return Err(EncodeError::IndexOutOfRange {
                    what,
                    index: len,
                    dim: input_dim,
                });
            }
        }
        if self.base.iter().any(|v| !v.is_finite()) {
            return Err(NetworkError::BadInterval { index: 0 }.into());
        }
        for w in self.allowed.windows(2) {
            if w[0] >= w[1] {
                return Err(EncodeError::RepeatedIndex);
            }
        }
        for &i in &self.allowed {
            if i >= input_dim {
                return Err(EncodeError::IndexOutOfRange {
                    what: "perturbed input",
                    index: i,
                    dim: input_dim,
                });
            }
            let (lo, hi) = (self.delta_lower[i], self.delta_upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= T::zero() && T::zero() <= hi) {
                return Err(EncodeError::BadDeltaBounds { index: i });
            }
            let w = self.weights[i];
            if !(w.is_finite() && w >= T::zero()) {
                return Err(EncodeError::BadWeight { index: i });
            }
        }
        Ok(())
    }

    /// Input box `[base + lo, base + hi]` on allowed indices, the base point
    /// elsewhere.
    pub fn input_box(&self) -> Result<IntervalBox<T>, NetworkError> {
        IntervalBox::new(
            (0..self.base.len())
                .map(|i| {
                    if self.is_allowed(i) {
                        Interval::new(self.base[i] + self.delta_lower[i], self.base[i] + self.delta_upper[i])
                    } else {
                        Interval::point(self.base[i])
                    }
                })
                .collect(),
        )
    }
}

fn default_eps<T: Scalar>() -> T {
    T::lit(DEFAULT_EPS)
}

/// Condition the perturbed output must meet. Orderings use "lower score
/// ranks first", so `MinScore { target }` asks for `target` to be the
/// smallest output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "T: Scalar")]
pub enum AttackConstraint<T: Scalar = f64> {
    OutputRange {
        index: usize,
        lo: T,
        hi: T,
    },
    MinScore {
        target: usize,
        #[serde(default = "default_eps")]
        eps: T,
    },
    PartialOrdering {
        first: usize,
        second: usize,
        #[serde(default = "default_eps")]
        eps: T,
    },
    TotalOrdering {
        permutation: Vec<usize>,
        #[serde(default = "default_eps")]
        eps: T,
    },
    MinOutputIncrease {
        index: usize,
        threshold: T,
    },
}

impl<T: Scalar> AttackConstraint<T> {
    pub fn validate(&self, output_dim: usize) -> Result<(), EncodeError> {
        let check = |i: usize| {
            if i < output_dim {
                Ok(())
            } else {
                Err(EncodeError::IndexOutOfRange {
                    what: "output",
                    index: i,
                    dim: output_dim,
                })
            }
        };
        let positive = |eps: T| {
            if eps > T::zero() && eps.is_finite() {
                Ok(())
            } else {
                Err(EncodeError::NonPositiveEps)
            }
        };
        match self {
            AttackConstraint::OutputRange { index, lo, hi } => {
                check(*index)?;
                if !(lo <= hi) {
                    return Err(EncodeError::InvertedRange);
                }
            }
            AttackConstraint::MinScore { target, eps } => {
                check(*target)?;
                positive(*eps)?;
            }
            AttackConstraint::PartialOrdering { first, second, eps } => {
                check(*first)?;
                check(*second)?;
                if first == second {
                    return Err(EncodeError::RepeatedIndex);
                }
                positive(*eps)?;
            }
            AttackConstraint::TotalOrdering { permutation, eps } => {
                let mut seen = vec![false; output_dim];
                if permutation.len() != output_dim {
                    return Err(EncodeError::BadPermutation);
                }
                for &p in permutation {
                    check(p)?;
                    if std::mem::replace(&mut seen[p], true) {
                        return Err(EncodeError::BadPermutation);
                    }
                }
                positive(*eps)?;
            }
            AttackConstraint::MinOutputIncrease { index, threshold } => {
                check(*index)?;
                if !threshold.is_finite() {
                    return Err(EncodeError::InvertedRange);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Minimise the weighted sum of `|delta_i|`.
    MinPerturbation,
    /// Maximise output `target`, then minimise the perturbation.
    Hierarchical {
        #[serde(default)]
        target: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronVars {
    pub x: VarId,
    pub s: VarId,
    pub ac: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronEncoding {
    Relu(NeuronVars),
    Linear(VarId),
}

impl NeuronEncoding {
    /// Variable carrying the neuron's post-activation value.
    pub fn output(&self) -> VarId {
        match self {
            NeuronEncoding::Relu(v) => v.x,
            NeuronEncoding::Linear(v) => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    /// `layers[k][i]` encodes neuron `i` of layer `k + 1`.
    pub layers: Vec<Vec<NeuronEncoding>>,
    /// `(dxp, dxm)` per input, `None` for inputs the attacker cannot touch.
    pub deltas: Vec<Option<(VarId, VarId)>>,
    /// Network outputs. For a ReLU output layer this is the neuron's `x`.
    pub outputs: Vec<VarId>,
}

impl VarMap {
    /// ReLU neurons in pattern order.
    pub fn relu_neurons(&self) -> impl Iterator<Item = NeuronVars> + '_ {
        self.layers.iter().flatten().filter_map(|n| match n {
            NeuronEncoding::Relu(v) => Some(*v),
            NeuronEncoding::Linear(_) => None,
        })
    }
}

/// Perturbation and network values read back from a model solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<T> {
    pub delta: Vec<T>,
    pub outputs: Vec<T>,
    pub pattern: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct EncodedAttack<T: Scalar = f64> {
    pub model: MilpModel<T>,
    pub varmap: VarMap,
    net: Network<T>,
    pert: PerturbationSpec<T>,
    clean_output: Vec<T>,
    pre_bounds: Vec<Vec<Interval<T>>>,
    attack_constraints: Vec<AttackConstraint<T>>,
    output_rows: Vec<OutputRow<T>>,
    probe_limit: usize,
    max_pieces: usize,
}

fn pad<T: Scalar>(iv: Interval<T>) -> Interval<T> {
    iv.widen(T::lit(1e-9), T::lit(1e-9))
}

/// Builds the MILP for `net` under perturbation budget `pert`, with no
/// attack constraint or objective yet.
pub fn encode<T: Scalar>(net: &Network<T>, pert: &PerturbationSpec<T>) -> Result<EncodedAttack<T>, EncodeError> {
    pert.validate(net.input_dim())?;
    let bx = pert.input_box()?;
    let pre_bounds: Vec<Vec<Interval<T>>> = net
        .interval_bounds(&bx)?
        .into_iter()
        .map(|l| l.into_iter().map(pad).collect())
        .collect();
    let clean_output = net.forward(&pert.base)?;

    let mut model = MilpModel::new();
    let mut deltas = vec![None; net.input_dim()];
    let mut current: Vec<LinearExpr<T>> = Vec::with_capacity(net.input_dim());
    for (j, &b) in pert.base.iter().enumerate() {
        let mut e = LinearExpr::new().plus_constant(b);
        if pert.is_allowed(j) {
            let p = model.add_continuous(format!("dxp_{j}"), T::zero(), pert.delta_upper[j])?;
            let m = model.add_continuous(format!("dxm_{j}"), T::zero(), -pert.delta_lower[j])?;
            e = e.term(T::one(), p).term(-T::one(), m);
            deltas[j] = Some((p, m));
        }
        current.push(e);
    }

    let mut layers = Vec::with_capacity(net.layers().len());
    for (k, layer) in net.layers().iter().enumerate() {
        let lno = k + 1;
        let mut encs = Vec::with_capacity(layer.outputs());
        let mut next = Vec::with_capacity(layer.outputs());
        for (i, (row, &bias)) in layer.weights.iter().zip(&layer.biases).enumerate() {
            let mut pre = LinearExpr::new().plus_constant(bias);
            for (&w, e) in row.iter().zip(&current) {
                if w == T::zero() {
                    continue;
                }
                for &(c, v) in &e.terms {
                    pre.push(w * c, v);
                }
                pre.constant += w * e.constant;
            }
            let iv = pre_bounds[k][i];
            match layer.activation {
                ActivationKind::Relu => {
                    let x = model.add_continuous(format!("x_{lno}_{i}"), T::zero(), iv.hi.max(T::zero()))?;
                    let s = model.add_continuous(format!("s_{lno}_{i}"), T::zero(), (-iv.lo).max(T::zero()))?;
                    let mut ac_spec = crate::milp_model::VarSpec::binary(format!("ac_{lno}_{i}"));
                    if iv.hi < T::zero() {
                        ac_spec.lower = T::one();
                    } else if iv.lo > T::zero() {
                        ac_spec.upper = T::zero();
                    }
                    let ac = model.add_var(ac_spec)?;
                    model.add_constraint(Constraint::eq(pre.term(-T::one(), x).term(T::one(), s), T::zero()))?;
                    model.add_indicator(IndicatorConstraint {
                        guard: ac,
                        guard_value: true,
                        implied: Constraint::le(LinearExpr::var(x), T::zero()),
                    })?;
                    model.add_indicator(IndicatorConstraint {
                        guard: ac,
                        guard_value: false,
                        implied: Constraint::le(LinearExpr::var(s), T::zero()),
                    })?;
                    encs.push(NeuronEncoding::Relu(NeuronVars { x, s, ac }));
                    next.push(LinearExpr::var(x));
                }
                ActivationKind::Linear => {
                    let y = model.add_continuous(format!("y_{lno}_{i}"), iv.lo, iv.hi)?;
                    model.add_constraint(Constraint::eq(pre.term(-T::one(), y), T::zero()))?;
                    encs.push(NeuronEncoding::Linear(y));
                    next.push(LinearExpr::var(y));
                }
            }
        }
        layers.push(encs);
        current = next;
    }
    let outputs = layers
        .last()
        .map(|l| l.iter().map(NeuronEncoding::output).collect())
        .unwrap_or_default();
    Ok(EncodedAttack {
        model,
        varmap: VarMap {
            layers,
            deltas,
            outputs,
        },
        net: net.clone(),
        pert: pert.clone(),
        clean_output,
        pre_bounds,
        attack_constraints: Vec::new(),
        output_rows: Vec::new(),
        probe_limit: DEFAULT_PROBE_LIMIT,
        max_pieces: DEFAULT_MAX_PIECES,
    })
}

impl<T: Scalar> EncodedAttack<T> {
    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn perturbation(&self) -> &PerturbationSpec<T> {
        &self.pert
    }

    /// Network output at the unperturbed input.
    pub fn clean_output(&self) -> &[T] {
        &self.clean_output
    }

    /// Padded interval bounds of every pre-activation over the perturbation
    /// box.
    pub fn pre_activation_bounds(&self) -> &[Vec<Interval<T>>] {
        &self.pre_bounds
    }

    pub fn attack_constraints(&self) -> &[AttackConstraint<T>] {
        &self.attack_constraints
    }

    /// Caps the number of perturbable inputs for which node-level range
    /// probing is enabled (0 disables probing).
    pub fn set_probe_limit(&mut self, limit: usize) {
        self.probe_limit = limit;
    }

    /// Piece budget for exact propagation when a single input is
    /// perturbable (0 disables it).
    pub fn set_max_pieces(&mut self, limit: usize) {
        self.max_pieces = limit;
    }

    fn line(&self) -> Option<Line<'_, T>> {
        match self.pert.allowed.as_slice() {
            [i] if self.max_pieces > 0 => Some(Line {
                net: &self.net,
                varmap: &self.varmap,
                base: &self.pert.base,
                input: *i,
                rows: &self.output_rows,
                max_pieces: self.max_pieces,
            }),
            _ => None,
        }
    }

    /// Offsets of the single perturbable input that satisfy every encoded
    /// constraint, as disjoint closed intervals. `None` when more than one
    /// input is perturbable or the piece budget runs out.
    pub fn feasible_offsets(&self) -> Option<Vec<(T, T)>> {
        let line = self.line()?;
        let i = line.input;
        let reach = line.reach(
            &self.model.lower_bounds(),
            &self.model.upper_bounds(),
            self.pert.delta_lower[i],
            self.pert.delta_upper[i],
        )?;
        Some(reach.pieces)
    }

    /// Exact propagation along the single perturbable input. `None` when
    /// not applicable, otherwise whether the node is feasible.
    fn propagate_line(&self, lower: &mut [T], upper: &mut [T], probes: &[(T, T)]) -> Option<bool> {
        let line = self.line()?;
        let (p, m) = self.varmap.deltas[line.input]?;
        let (p, m) = (p.index(), m.index());
        let mut lo = lower[p] - upper[m];
        let mut hi = upper[p] - lower[m];
        if let Some(&(plo, phi)) = probes.first() {
            lo = lo.max(plo);
            hi = hi.min(phi);
        }
        let reach = line.reach(lower, upper, lo, hi)?;
        let (Some(first), Some(last)) = (reach.pieces.first(), reach.pieces.last()) else {
            return Some(false);
        };
        let zero = T::zero();
        let (tlo, thi) = (first.0, last.1);
        upper[p] = upper[p].min(thi.max(zero));
        upper[m] = upper[m].min((-tlo).max(zero));
        lower[p] = lower[p].max(tlo);
        lower[m] = lower[m].max(-thi);
        for (encs, ranges) in self.varmap.layers.iter().zip(&reach.pre) {
            for (enc, &(plo, phi)) in encs.iter().zip(ranges) {
                let iv = pad(Interval::new(plo, phi));
                match *enc {
                    NeuronEncoding::Relu(nv) => {
                        let (x, s, ac) = (nv.x.index(), nv.s.index(), nv.ac.index());
                        upper[x] = upper[x].min(iv.hi.max(zero));
                        upper[s] = upper[s].min((-iv.lo).max(zero));
                        lower[x] = lower[x].max(iv.lo.max(zero));
                        lower[s] = lower[s].max((-iv.hi).max(zero));
                        if iv.hi < zero {
                            lower[ac] = lower[ac].max(T::one());
                        } else if iv.lo > zero {
                            upper[ac] = upper[ac].min(zero);
                        }
                    }
                    NeuronEncoding::Linear(y) => {
                        let y = y.index();
                        lower[y] = lower[y].max(iv.lo);
                        upper[y] = upper[y].min(iv.hi);
                    }
                }
            }
        }
        Some(lower.iter().zip(upper.iter()).all(|(l, u)| *l <= *u + T::lit(1e-9)))
    }

    /// Adds the rows for `c`; returns how many rows were added.
    pub fn add_attack_constraint(&mut self, c: AttackConstraint<T>) -> Result<usize, EncodeError> {
        c.validate(self.net.output_dim())?;
        let out = &self.varmap.outputs;
        let m = out.len();
        // a + eps <= b
        let below = |a: usize, b: usize, eps: T| {
            Constraint::le(LinearExpr::var(out[a]).term(-T::one(), out[b]), -eps)
        };
        let mut rows = Vec::new();
        match &c {
            AttackConstraint::OutputRange { index, lo, hi } => {
                rows.push(Constraint::ge(LinearExpr::var(out[*index]), *lo));
                rows.push(Constraint::le(LinearExpr::var(out[*index]), *hi));
            }
            AttackConstraint::MinScore { target, eps } => {
                for j in (0..m).filter(|j| j != target) {
                    rows.push(below(*target, j, *eps));
                }
            }
            AttackConstraint::PartialOrdering { first, second, eps } => {
                rows.push(below(*first, *second, *eps));
                for j in (0..m).filter(|j| j != first && j != second) {
                    rows.push(below(*second, j, *eps));
                }
            }
            AttackConstraint::TotalOrdering { permutation, eps } => {
                for w in permutation.windows(2) {
                    rows.push(below(w[0], w[1], *eps));
                }
            }
            AttackConstraint::MinOutputIncrease { index, threshold } => {
                rows.push(Constraint::ge(
                    LinearExpr::var(out[*index]),
                    self.clean_output[*index] + *threshold,
                ));
            }
        }
        let n = rows.len();
        for r in rows {
            let canon = r.canonical();
            self.output_rows.push(OutputRow {
                coeffs: canon
                    .expr
                    .terms
                    .iter()
                    .map(|&(c, v)| (c, out.iter().position(|&o| o == v).expect("row over outputs")))
                    .collect(),
                sense: canon.sense,
                rhs: canon.rhs,
            });
            self.model.add_constraint(r)?;
        }
        self.attack_constraints.push(c);
        Ok(n)
    }

    /// `sum_i w_i (dxp_i + dxm_i)` over perturbable inputs with non-zero
    /// weight.
    pub fn perturbation_cost(&self) -> LinearExpr<T> {
        let mut e = LinearExpr::new();
        for (i, d) in self.varmap.deltas.iter().enumerate() {
            if let Some((p, m)) = d {
                let w = self.pert.weights[i];
                if w != T::zero() {
                    e.push(w, *p);
                    e.push(w, *m);
                }
            }
        }
        e
    }

    /// Replaces the model's objectives.
    pub fn set_objective(&mut self, kind: ObjectiveKind) -> Result<(), EncodeError> {
        let cost = Objective::minimize(self.perturbation_cost());
        let objs = match kind {
            ObjectiveKind::MinPerturbation => vec![cost],
            ObjectiveKind::Hierarchical { target } => {
                let t = target.ok_or(EncodeError::MissingTarget)?;
                if t >= self.varmap.outputs.len() {
                    return Err(EncodeError::IndexOutOfRange {
                        what: "output",
                        index: t,
                        dim: self.varmap.outputs.len(),
                    });
                }
                vec![Objective::maximize(LinearExpr::var(self.varmap.outputs[t])), cost]
            }
        };
        self.model.set_objectives(objs)?;
        Ok(())
    }

    /// Pure LP with every `ac` fixed to `pattern` (one entry per ReLU
    /// neuron, `true` = inactive) and the matching implied constraint
    /// installed as a bound. A pattern that contradicts a neuron whose sign
    /// is already settled by the interval bounds yields an LP with crossed
    /// bounds, which solves as infeasible.
    pub fn fix_pattern(&self, pattern: &[bool]) -> Result<LpProblem<T>, EncodeError> {
        let neurons: Vec<NeuronVars> = self.varmap.relu_neurons().collect();
        if pattern.len() != neurons.len() {
            return Err(EncodeError::PatternLength {
                expected: neurons.len(),
                actual: pattern.len(),
            });
        }
        let lowered = MilpModel::clone(&self.model);
        let mut lower = lowered.lower_bounds();
        let mut upper = lowered.upper_bounds();
        for (nv, &inactive) in neurons.iter().zip(pattern) {
            let a = nv.ac.index();
            let v = if inactive { T::one() } else { T::zero() };
            lower[a] = lower[a].max(v);
            upper[a] = upper[a].min(v);
            if inactive {
                upper[nv.x.index()] = T::zero();
            } else {
                upper[nv.s.index()] = T::zero();
            }
        }
        let mut p = LpProblem::new(lowered.var_count(), lower, upper);
        for c in lowered.constraints() {
            p.rows.push(crate::lp_solver::LpRow {
                coeffs: c.expr.terms.iter().map(|&(a, v)| (v.index(), a)).collect(),
                sense: c.sense,
                rhs: c.rhs - c.expr.constant,
            });
        }
        if let Some(obj) = lowered.objectives().first() {
            p.set_objective(obj.sense, &obj.expr);
        }
        Ok(p)
    }

    pub fn decode(&self, values: &[T]) -> Decoded<T> {
        let delta = self
            .varmap
            .deltas
            .iter()
            .map(|d| match d {
                Some((p, m)) => values[p.index()] - values[m.index()],
                None => T::zero(),
            })
            .collect();
        let outputs = self.varmap.outputs.iter().map(|v| values[v.index()]).collect();
        let pattern = self
            .varmap
            .relu_neurons()
            .map(|nv| values[nv.ac.index()] >= T::lit(0.5))
            .collect();
        Decoded {
            delta,
            outputs,
            pattern,
        }
    }

    /// Post-activation values of every layer as read from a solution.
    pub fn layer_values(&self, values: &[T]) -> Vec<Vec<T>> {
        self.varmap
            .layers
            .iter()
            .map(|l| l.iter().map(|n| values[n.output().index()]).collect())
            .collect()
    }

    /// Full model assignment obtained by evaluating the network at
    /// `base + delta`.
    pub fn assignment_from_delta(&self, delta: &[T]) -> Result<Vec<T>, EncodeError> {
        let x: Vec<T> = self.pert.base.iter().zip(delta).map(|(&b, &d)| b + d).collect();
        let trace = self.net.forward_trace(&x)?;
        let mut values = vec![T::zero(); self.model.var_count()];
        for (i, d) in self.varmap.deltas.iter().enumerate() {
            if let Some((p, m)) = d {
                values[p.index()] = delta[i].max(T::zero());
                values[m.index()] = (-delta[i]).max(T::zero());
            }
        }
        for (layer, t) in self.varmap.layers.iter().zip(&trace) {
            for (enc, &pre) in layer.iter().zip(&t.pre) {
                match enc {
                    NeuronEncoding::Relu(nv) => {
                        values[nv.x.index()] = pre.max(T::zero());
                        values[nv.s.index()] = (-pre).max(T::zero());
                        values[nv.ac.index()] = if pre < T::zero() { T::one() } else { T::zero() };
                    }
                    NeuronEncoding::Linear(y) => values[y.index()] = pre,
                }
            }
        }
        Ok(values)
    }
}

impl<T: Scalar> NodeHooks<T> for EncodedAttack<T> {
    fn probe_exprs(&self) -> Vec<LinearExpr<T>> {
        if self.pert.allowed.len() > self.probe_limit {
            return Vec::new();
        }
        self.varmap
            .deltas
            .iter()
            .flatten()
            .map(|&(p, m)| LinearExpr::var(p).term(-T::one(), m))
            .collect()
    }

    fn propagate(&self, lower: &mut [T], upper: &mut [T], probes: &[(T, T)]) -> bool {
        if let Some(ok) = self.propagate_line(lower, upper, probes) {
            return ok;
        }
        let zero = T::zero();
        let half = T::lit(0.5);
        let mut probe_iter = probes.iter();
        let mut cur: Vec<Interval<T>> = Vec::with_capacity(self.pert.base.len());
        for (j, d) in self.varmap.deltas.iter().enumerate() {
            let b = self.pert.base[j];
            match d {
                Some((p, m)) => {
                    let (p, m) = (p.index(), m.index());
                    let mut lo = lower[p] - upper[m];
                    let mut hi = upper[p] - lower[m];
                    if let Some(&(plo, phi)) = probe_iter.next() {
                        lo = lo.max(plo);
                        hi = hi.min(phi);
                    }
                    if lo > hi + T::lit(1e-9) {
                        return false;
                    }
                    cur.push(pad(Interval::new(b + lo, b + hi.max(lo))));
                }
                None => cur.push(Interval::point(b)),
            }
        }
        for (layer, encs) in self.net.layers().iter().zip(&self.varmap.layers) {
            let pre = affine_interval(layer, &cur);
            let mut next = Vec::with_capacity(encs.len());
            for (iv, enc) in pre.into_iter().zip(encs) {
                let iv = pad(iv);
                match *enc {
                    NeuronEncoding::Relu(NeuronVars { x, s, ac }) => {
                        let (x, s, ac) = (x.index(), s.index(), ac.index());
                        let lo = iv.lo.max(lower[x] - upper[s]);
                        let hi = iv.hi.min(upper[x] - lower[s]);
                        if lo > hi + T::lit(1e-9) {
                            return false;
                        }
                        let inactive = if lower[ac] > half {
                            Some(true)
                        } else if upper[ac] < half {
                            Some(false)
                        } else if hi < zero {
                            Some(true)
                        } else if lo > zero {
                            Some(false)
                        } else {
                            None
                        };
                        match inactive {
                            Some(true) => {
                                if lo > zero {
                                    return false;
                                }
                                lower[ac] = T::one();
                                upper[ac] = T::one();
                                upper[x] = zero;
                                lower[s] = lower[s].max(-hi);
                                upper[s] = upper[s].min(-lo);
                            }
                            Some(false) => {
                                if hi < zero {
                                    return false;
                                }
                                lower[ac] = zero;
                                upper[ac] = zero;
                                upper[s] = zero;
                                lower[x] = lower[x].max(lo);
                                upper[x] = upper[x].min(hi);
                            }
                            None => {
                                upper[x] = upper[x].min(hi.max(zero));
                                upper[s] = upper[s].min((-lo).max(zero));
                            }
                        }
                        if lower[x] > upper[x] + T::lit(1e-9) || lower[s] > upper[s] + T::lit(1e-9) {
                            return false;
                        }
                        next.push(Interval::new(lower[x], upper[x].max(lower[x])));
                    }
                    NeuronEncoding::Linear(y) => {
                        let y = y.index();
                        lower[y] = lower[y].max(iv.lo);
                        upper[y] = upper[y].min(iv.hi);
                        if lower[y] > upper[y] + T::lit(1e-9) {
                            return false;
                        }
                        next.push(Interval::new(lower[y], upper[y].max(lower[y])));
                    }
                }
            }
            cur = next;
        }
        true
    }

    fn repair(&self, lp_values: &[T]) -> Option<Vec<T>> {
        if let (Some(line), Some(pieces)) = (self.line(), self.feasible_offsets()) {
            let i = line.input;
            let (p, m) = self.varmap.deltas[i]?;
            let t = project(&pieces, lp_values[p.index()] - lp_values[m.index()])?;
            let mut delta = vec![T::zero(); self.pert.base.len()];
            delta[i] = t.max(self.pert.delta_lower[i]).min(self.pert.delta_upper[i]);
            return self.assignment_from_delta(&delta).ok();
        }
        let delta: Vec<T> = self
            .varmap
            .deltas
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                Some((p, m)) => (lp_values[p.index()] - lp_values[m.index()])
                    .max(self.pert.delta_lower[i])
                    .min(self.pert.delta_upper[i]),
                None => T::zero(),
            })
            .collect();
        self.assignment_from_delta(&delta).ok()
    }
}
