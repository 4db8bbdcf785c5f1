//! Discrete Bayesian networks, parameter addressing and proportional co-variation.
//!
//! A [`Network`] is an immutable value. Varying a parameter with
//! [`Network::apply_parameter`] returns a new network in which exactly one CPT
//! column differs from the original.
//!
//! Value indices and parent configurations follow declaration order. A parent
//! configuration is a tuple of parent value indices in parent order; its linear
//! index is mixed-radix with the first parent most significant.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Absolute tolerance on CPT column sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Index of a variable within its network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed network: {0}")]
    Structure(String),
    #[error("invalid network: {}", summarize(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),
    #[error("unknown parameter: {0}")]
    UnknownParameter(String),
    #[error("value index {value} out of range for variable {variable}")]
    UnknownValue { variable: VarId, value: usize },
    #[error("conflicting evidence for variable {0}")]
    ConflictingEvidence(VarId),
    #[error("co-variation undefined: entry {value} of the column is 1 and the column has more than two entries")]
    CovariationUndefined { value: usize },
    #[error("parameter value {0} is outside [0, 1]")]
    ValueOutOfRange(f64),
}

fn summarize(violations: &[Violation]) -> String {
    match violations {
        [] => String::from("no violations"),
        [only] => format!("{only}"),
        [first, rest @ ..] => format!("{first} (and {} more)", rest.len()),
    }
}

/// How the remaining entries of a column follow when one entry is set to `x`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CovaryMode {
    /// Proportional scaling only; a column whose varied entry is 1 cannot be
    /// co-varied when it has more than two entries.
    #[default]
    Strict,
    /// As `Strict`, but a varied entry of 1 spreads `1 - x` uniformly over the
    /// other entries.
    UniformFallback,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    name: String,
    values: Vec<String>,
}

impl Variable {
    pub fn new<N, V, I>(name: N, values: I) -> Self
    where
        N: Into<String>,
        V: Into<String>,
        I: IntoIterator<Item = V>,
    {
        Variable {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn arity(&self) -> usize {
        self.values.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// Conditional probability table: one column per parent configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    columns: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(columns: Vec<Vec<f64>>) -> Self {
        Cpt { columns }
    }

    /// CPT of a root variable.
    pub fn prior(column: Vec<f64>) -> Self {
        Cpt { columns: vec![column] }
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, config: usize) -> Option<&[f64]> {
        self.columns.get(config).map(Vec::as_slice)
    }
}

/// One CPT entry `p(value | parent_config)` of `variable`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParameterRef {
    pub variable: VarId,
    pub value: usize,
    pub parent_config: Vec<usize>,
}

impl ParameterRef {
    pub fn new(variable: VarId, value: usize, parent_config: Vec<usize>) -> Self {
        ParameterRef {
            variable,
            value,
            parent_config,
        }
    }
}

/// A partial assignment of observed values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Evidence {
    assignments: BTreeMap<VarId, usize>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    /// Adds an observation. Re-observing the same value is a no-op; a different
    /// value is an error.
    pub fn observe(&mut self, variable: VarId, value: usize) -> Result<(), ModelError> {
        match self.assignments.insert(variable, value) {
            Some(previous) if previous != value => {
                self.assignments.insert(variable, previous);
                Err(ModelError::ConflictingEvidence(variable))
            }
            _ => Ok(()),
        }
    }

    pub fn with(mut self, variable: VarId, value: usize) -> Result<Self, ModelError> {
        self.observe(variable, value)?;
        Ok(self)
    }

    pub fn get(&self, variable: VarId) -> Option<usize> {
        self.assignments.get(&variable).copied()
    }

    pub fn contains(&self, variable: VarId) -> bool {
        self.assignments.contains_key(&variable)
    }

    pub fn remove(&mut self, variable: VarId) -> Option<usize> {
        self.assignments.remove(&variable)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.assignments.iter().map(|(&v, &i)| (v, i))
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Posterior distribution over the values of one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub target: VarId,
    pub probs: Vec<f64>,
}

impl Distribution {
    /// Index of the most probable value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    TooFewValues(usize),
    DuplicateValue(String),
    DuplicateVariable,
    DuplicateParent(String),
    CyclicGraph,
    ColumnCount { expected: usize, found: usize },
    ColumnLength { expected: usize, found: usize },
    ProbabilityOutOfRange(f64),
    ColumnSum(f64),
}

/// A broken network invariant, located by variable and (when relevant) column.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub variable: String,
    /// Comma-joined parent value labels of the offending column.
    pub column: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "variable {}", self.variable)?;
        if let Some(column) = &self.column {
            write!(f, ", column [{column}]")?;
        }
        f.write_str(": ")?;
        match &self.kind {
            ViolationKind::TooFewValues(n) => write!(f, "has {n} value(s), needs at least 2"),
            ViolationKind::DuplicateValue(v) => write!(f, "duplicate value label {v:?}"),
            ViolationKind::DuplicateVariable => f.write_str("duplicate variable name"),
            ViolationKind::DuplicateParent(p) => write!(f, "parent {p} listed twice"),
            ViolationKind::CyclicGraph => f.write_str("graph is cyclic"),
            ViolationKind::ColumnCount { expected, found } => {
                write!(f, "expected {expected} column(s), found {found}")
            }
            ViolationKind::ColumnLength { expected, found } => {
                write!(f, "column has {found} entries, expected {expected}")
            }
            ViolationKind::ProbabilityOutOfRange(p) => write!(f, "probability {p} outside [0, 1]"),
            ViolationKind::ColumnSum(s) => write!(f, "column sum {s} != 1"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    variables: Vec<Variable>,
    parents: Vec<Vec<VarId>>,
    cpts: Vec<Cpt>,
}

impl Network {
    /// Assembles a network without checking probabilities or acyclicity.
    ///
    /// Only the shape is checked: one parent list and one CPT per variable, and
    /// every parent reference in range. Use [`Network::validate`] for the rest.
    pub fn from_parts(variables: Vec<Variable>, parents: Vec<Vec<VarId>>, cpts: Vec<Cpt>) -> Result<Self, ModelError> {
        let n = variables.len();
        if parents.len() != n || cpts.len() != n {
            return Err(ModelError::Structure(format!(
                "{n} variables but {} parent lists and {} CPTs",
                parents.len(),
                cpts.len()
            )));
        }
        for (child, ps) in parents.iter().enumerate() {
            if let Some(bad) = ps.iter().find(|p| p.0 >= n) {
                return Err(ModelError::Structure(format!(
                    "variable {} has out-of-range parent {bad}",
                    variables[child].name
                )));
            }
        }
        Ok(Network {
            variables,
            parents,
            cpts,
        })
    }

    /// Assembles and validates a network.
    pub fn new(variables: Vec<Variable>, parents: Vec<Vec<VarId>>, cpts: Vec<Cpt>) -> Result<Self, ModelError> {
        let net = Network::from_parts(variables, parents, cpts)?;
        let violations = net.validate();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.variables.len()).map(VarId)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    /// Panics if `id` is out of range.
    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.parents[id.0]
    }

    pub fn cpt(&self, id: VarId) -> &Cpt {
        &self.cpts[id.0]
    }

    pub fn arity(&self, id: VarId) -> usize {
        self.variables[id.0].arity()
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn contains(&self, id: VarId) -> bool {
        id.0 < self.variables.len()
    }

    /// Number of parent configurations of `id`.
    pub fn config_count(&self, id: VarId) -> usize {
        self.parents[id.0].iter().map(|&p| self.arity(p)).product()
    }

    /// Linear index of a parent configuration, or `None` if it is not a valid
    /// configuration of the parents of `id`.
    pub fn config_index(&self, id: VarId, config: &[usize]) -> Option<usize> {
        let parents = self.parents.get(id.0)?;
        if config.len() != parents.len() {
            return None;
        }
        let mut index = 0;
        for (&p, &value) in parents.iter().zip(config) {
            let arity = self.arity(p);
            if value >= arity {
                return None;
            }
            index = index * arity + value;
        }
        Some(index)
    }

    /// Inverse of [`Network::config_index`].
    pub fn config_tuple(&self, id: VarId, mut index: usize) -> Vec<usize> {
        let parents = &self.parents[id.0];
        let mut config = vec![0; parents.len()];
        for (slot, &p) in config.iter_mut().zip(parents).rev() {
            let arity = self.arity(p);
            *slot = index % arity;
            index /= arity;
        }
        config
    }

    /// Comma-joined parent value labels of a configuration; empty for roots.
    pub fn config_label(&self, id: VarId, index: usize) -> String {
        let config = self.config_tuple(id, index);
        let labels: Vec<&str> = self.parents[id.0]
            .iter()
            .zip(&config)
            .map(|(&p, &v)| self.variables[p.0].values[v].as_str())
            .collect();
        labels.join(",")
    }

    /// Every CPT entry, ordered by variable, then parent configuration, then value.
    pub fn parameters(&self) -> Vec<ParameterRef> {
        let mut out = Vec::new();
        for id in self.ids() {
            for config in 0..self.config_count(id) {
                let tuple = self.config_tuple(id, config);
                for value in 0..self.arity(id) {
                    out.push(ParameterRef::new(id, value, tuple.clone()));
                }
            }
        }
        out
    }

    fn locate(&self, p: &ParameterRef) -> Result<usize, ModelError> {
        if !self.contains(p.variable) {
            return Err(ModelError::UnknownParameter(format!("no variable {}", p.variable)));
        }
        let var = &self.variables[p.variable.0];
        if p.value >= var.arity() {
            return Err(ModelError::UnknownParameter(format!(
                "value index {} out of range for {}",
                p.value, var.name
            )));
        }
        let config = self.config_index(p.variable, &p.parent_config).ok_or_else(|| {
            ModelError::UnknownParameter(format!(
                "parent configuration {:?} invalid for {}",
                p.parent_config, var.name
            ))
        })?;
        match self.cpts[p.variable.0].column(config) {
            Some(column) if p.value < column.len() => Ok(config),
            _ => Err(ModelError::UnknownParameter(format!(
                "no CPT entry for {} at configuration {:?}",
                var.name, p.parent_config
            ))),
        }
    }

    /// The stored CPT entry addressed by `p`.
    pub fn assessment(&self, p: &ParameterRef) -> Result<f64, ModelError> {
        let config = self.locate(p)?;
        Ok(self.cpts[p.variable.0].columns[config][p.value])
    }

    /// Returns a copy of the network with parameter `p` set to `x` and its
    /// column-mates co-varied according to `mode`.
    pub fn apply_parameter(&self, p: &ParameterRef, x: f64, mode: CovaryMode) -> Result<Network, ModelError> {
        let config = self.locate(p)?;
        let column = &self.cpts[p.variable.0].columns[config];
        let varied = covary_column(column, p.value, x, mode)?;
        let mut net = self.clone();
        net.cpts[p.variable.0].columns[config] = varied;
        Ok(net)
    }

    /// Checks that every evidence entry addresses an existing variable and value.
    pub fn check_evidence(&self, evidence: &Evidence) -> Result<(), ModelError> {
        for (var, value) in evidence.iter() {
            if !self.contains(var) {
                return Err(ModelError::UnknownVariable(var));
            }
            if value >= self.arity(var) {
                return Err(ModelError::UnknownValue { variable: var, value });
            }
        }
        Ok(())
    }

    /// Variables in an order where every parent precedes its children, or `None`
    /// if the parent graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<VarId>> {
        let n = self.len();
        let mut pending: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (child, ps) in self.parents.iter().enumerate() {
            for p in ps {
                children[p.0].push(child);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| pending[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(VarId(v));
            for &c in &children[v] {
                pending[c] -= 1;
                if pending[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Lists every violated network invariant. An empty list means the network
    /// is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let violation = |var: &Variable, column: Option<String>, kind| Violation {
            variable: var.name.clone(),
            column,
            kind,
        };

        for (i, var) in self.variables.iter().enumerate() {
            if var.arity() < 2 {
                out.push(violation(var, None, ViolationKind::TooFewValues(var.arity())));
            }
            for (j, label) in var.values.iter().enumerate() {
                if var.values[..j].contains(label) {
                    out.push(violation(var, None, ViolationKind::DuplicateValue(label.clone())));
                }
            }
            if self.variables[..i].iter().any(|v| v.name == var.name) {
                out.push(violation(var, None, ViolationKind::DuplicateVariable));
            }
            let ps = &self.parents[i];
            for (j, p) in ps.iter().enumerate() {
                if ps[..j].contains(p) {
                    let parent = self.variables[p.0].name.clone();
                    out.push(violation(var, None, ViolationKind::DuplicateParent(parent)));
                }
            }
        }

        if let Some(on_cycle) = self.cycle_member() {
            let var = &self.variables[on_cycle.0];
            out.push(violation(var, None, ViolationKind::CyclicGraph));
        }

        for id in self.ids() {
            let var = &self.variables[id.0];
            let cpt = &self.cpts[id.0];
            let expected = self.config_count(id);
            if cpt.columns.len() != expected {
                out.push(violation(
                    var,
                    None,
                    ViolationKind::ColumnCount {
                        expected,
                        found: cpt.columns.len(),
                    },
                ));
            }
            for (config, column) in cpt.columns.iter().enumerate() {
                let label = || {
                    if config < expected {
                        Some(self.config_label(id, config))
                    } else {
                        Some(format!("#{config}"))
                    }
                };
                if column.len() != var.arity() {
                    out.push(violation(
                        var,
                        label(),
                        ViolationKind::ColumnLength {
                            expected: var.arity(),
                            found: column.len(),
                        },
                    ));
                    continue;
                }
                if let Some(&bad) = column.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    out.push(violation(var, label(), ViolationKind::ProbabilityOutOfRange(bad)));
                    continue;
                }
                let sum: f64 = column.iter().sum();
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    out.push(violation(var, label(), ViolationKind::ColumnSum(sum)));
                }
            }
        }
        out
    }

    /// Some variable that lies on a directed cycle, if any.
    fn cycle_member(&self) -> Option<VarId> {
        // Variables left over by the topological sort are on a cycle or
        // downstream of one; walking parents among them must revisit a node.
        let sorted = self.sortable();
        let mut seen = vec![false; self.len()];
        let mut current = (0..self.len()).find(|&v| !sorted[v])?;
        loop {
            if seen[current] {
                return Some(VarId(current));
            }
            seen[current] = true;
            current = self.parents[current].iter().find(|p| !sorted[p.0])?.0;
        }
    }

    fn sortable(&self) -> Vec<bool> {
        let n = self.len();
        let mut done = vec![false; n];
        let mut progress = true;
        while progress {
            progress = false;
            for v in 0..n {
                if !done[v] && self.parents[v].iter().all(|p| done[p.0]) {
                    done[v] = true;
                    progress = true;
                }
            }
        }
        done
    }
}

/// Sets entry `index` of a probability column to `x` and co-varies the others
/// so that their mutual proportions are kept.
///
/// Binary columns always take the complement `1 - x`.
pub fn covary_column(column: &[f64], index: usize, x: f64, mode: CovaryMode) -> Result<Vec<f64>, ModelError> {
    if index >= column.len() {
        return Err(ModelError::UnknownParameter(format!(
            "value index {index} out of range for a column of {} entries",
            column.len()
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(ModelError::ValueOutOfRange(x));
    }
    let m = column.len();
    let old = column[index];
    let mut out = Vec::with_capacity(m);
    if m == 2 {
        out.extend((0..2).map(|j| if j == index { x } else { 1.0 - x }));
    } else if old < 1.0 {
        let scale = (1.0 - x) / (1.0 - old);
        out.extend(
            column
                .iter()
                .enumerate()
                .map(|(j, &p)| if j == index { x } else { p * scale }),
        );
    } else {
        match mode {
            CovaryMode::Strict => return Err(ModelError::CovariationUndefined { value: index }),
            CovaryMode::UniformFallback => {
                let share = (1.0 - x) / (m - 1) as f64;
                out.extend((0..m).map(|j| if j == index { x } else { share }));
            }
        }
    }
    Ok(out)
}
