//! Brute-force reference computations.
//!
//! Nothing here touches factors or elimination orders: probabilities come from
//! a nested loop over joint states, multiplying CPT entries. These routines exist
//! to cross-check [`crate::engine`], [`crate::sensitivity`] and
//! [`crate::admissible`].

use alloc::vec;
use alloc::vec::Vec;

use crate::admissible::AdmissibleDeviation;
use crate::engine::QueryResult;
use crate::model::{argmax, covary_column, CovaryMode, Evidence, ModelError, Network, ParameterRef, VarId};
use crate::sensitivity::{fit_bundle, FittedBundle, SensitivityError};

/// Default cap on the number of joint states.
pub const DEFAULT_STATE_CAP: usize = 1 << 22;
/// Points scanned by [`deviation_check`].
pub const DEVIATION_GRID: usize = 10_001;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("network has {states} joint states, more than the cap of {cap}")]
    NetworkTooLarge { states: u128, cap: usize },
    #[error("grid needs at least 2 points, got {0}")]
    InvalidGrid(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

fn check_size(net: &Network, cap: usize) -> Result<(), OracleError> {
    let states: u128 = net
        .ids()
        .map(|v| net.arity(v) as u128)
        .try_fold(1u128, |acc, a| acc.checked_mul(a))
        .unwrap_or(u128::MAX);
    if states > cap as u128 {
        Err(OracleError::NetworkTooLarge { states, cap })
    } else {
        Ok(())
    }
}

fn config_of(net: &Network, v: VarId, state: &[usize]) -> usize {
    net.parents(v).iter().fold(0, |acc, &p| acc * net.arity(p) + state[p.0])
}

/// Visits every joint state consistent with `evidence`.
fn for_each_state(net: &Network, evidence: &Evidence, mut visit: impl FnMut(&[usize])) {
    let mut state = vec![0usize; net.len()];
    for (v, value) in evidence.iter() {
        state[v.0] = value;
    }
    let free: Vec<usize> = net.ids().filter(|&v| !evidence.contains(v)).map(|v| v.0).collect();
    loop {
        visit(&state);
        let mut k = free.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let v = free[k];
            state[v] += 1;
            if state[v] < net.arity(VarId(v)) {
                break;
            }
            state[v] = 0;
        }
    }
}

/// `Pr(target = value_i, e)` for every value by summing over all joint states.
pub fn enumerate_query(
    net: &Network,
    target: VarId,
    evidence: &Evidence,
    cap: usize,
) -> Result<QueryResult, OracleError> {
    if !net.contains(target) {
        return Err(ModelError::UnknownVariable(target).into());
    }
    net.check_evidence(evidence)?;
    check_size(net, cap)?;
    let mut joint = vec![0.0; net.arity(target)];
    for_each_state(net, evidence, |state| {
        let mut prob = 1.0;
        for v in net.ids() {
            prob *= net.cpt(v).columns()[config_of(net, v, state)][state[v.0]];
        }
        joint[state[target.0]] += prob;
    });
    Ok(QueryResult::from_joint(joint))
}

/// Joint probabilities as a function of one parameter, by enumeration with the
/// parameter's column factored out: every state contributes either a fixed mass
/// or a weight times one entry of the co-varied column.
pub struct ParameterSweep {
    column: Vec<f64>,
    value: usize,
    mode: CovaryMode,
    fixed: Vec<f64>,
    // weights[target value][column entry]
    weights: Vec<Vec<f64>>,
}

impl ParameterSweep {
    pub fn new(
        net: &Network,
        p: &ParameterRef,
        target: VarId,
        evidence: &Evidence,
        mode: CovaryMode,
        cap: usize,
    ) -> Result<Self, OracleError> {
        if !net.contains(target) {
            return Err(ModelError::UnknownVariable(target).into());
        }
        net.assessment(p)?;
        net.check_evidence(evidence)?;
        check_size(net, cap)?;
        let varied = p.variable;
        let config = net
            .config_index(varied, &p.parent_config)
            .expect("checked by assessment");
        let column = net.cpt(varied).columns()[config].clone();
        let arity = net.arity(target);
        let mut fixed = vec![0.0; arity];
        let mut weights = vec![vec![0.0; column.len()]; arity];
        for_each_state(net, evidence, |state| {
            let mut rest = 1.0;
            for v in net.ids().filter(|&v| v != varied) {
                rest *= net.cpt(v).columns()[config_of(net, v, state)][state[v.0]];
            }
            let own_config = config_of(net, varied, state);
            let t = state[target.0];
            if own_config == config {
                weights[t][state[varied.0]] += rest;
            } else {
                fixed[t] += rest * net.cpt(varied).columns()[own_config][state[varied.0]];
            }
        });
        Ok(ParameterSweep {
            column,
            value: p.value,
            mode,
            fixed,
            weights,
        })
    }

    pub fn joint_at(&self, x: f64) -> Result<QueryResult, OracleError> {
        let column = covary_column(&self.column, self.value, x, self.mode)?;
        let joint = self
            .fixed
            .iter()
            .zip(&self.weights)
            .map(|(&k, w)| k + w.iter().zip(&column).map(|(w, p)| w * p).sum::<f64>())
            .collect();
        Ok(QueryResult::from_joint(joint))
    }
}

/// Fitted functions against enumeration on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub parameter: ParameterRef,
    /// Points at which both sides were defined (`Pr(e) > 0`).
    pub grid_points: Vec<f64>,
    pub max_abs_error: f64,
    pub per_value_errors: Vec<f64>,
    /// Most likely value from enumeration at each grid point.
    pub argmax_trace: Vec<usize>,
    /// Grid points dropped because the evidence had zero probability there.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GridReport {
    pub fn passed(&self) -> bool {
        self.max_abs_error <= self.tolerance
    }
}

fn grid(n: usize) -> Result<impl Iterator<Item = f64>, OracleError> {
    if n < 2 {
        return Err(OracleError::InvalidGrid(n));
    }
    let last = (n - 1) as f64;
    Ok((0..n).map(move |k| k as f64 / last))
}

/// Fits the bundle for `p` and compares it with enumeration at `n` equispaced
/// points of `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn grid_check(
    net: &Network,
    p: &ParameterRef,
    target: VarId,
    evidence: &Evidence,
    n: usize,
    tol: f64,
    mode: CovaryMode,
    cap: usize,
) -> Result<GridReport, OracleError> {
    check_size(net, cap)?;
    let fitted = fit_bundle(net, p, target, evidence, mode)?;
    grid_check_bundle(net, &fitted, n, tol, mode, cap)
}

/// Compares an already fitted (or replayed) bundle with enumeration.
pub fn grid_check_bundle(
    net: &Network,
    fitted: &FittedBundle,
    n: usize,
    tol: f64,
    mode: CovaryMode,
    cap: usize,
) -> Result<GridReport, OracleError> {
    let points = grid(n)?;
    let mut report = GridReport {
        parameter: fitted.parameter.clone(),
        grid_points: Vec::with_capacity(n),
        max_abs_error: 0.0,
        per_value_errors: vec![0.0; fitted.bundle.len()],
        argmax_trace: Vec::with_capacity(n),
        skipped: 0,
        tolerance: tol,
    };
    for x in points {
        let varied = net.apply_parameter(&fitted.parameter, x, mode)?;
        let direct = enumerate_query(&varied, fitted.target, &fitted.evidence, cap)?;
        let Some(posterior) = direct.posterior() else {
            report.skipped += 1;
            continue;
        };
        let values = fitted.bundle.eval_all(x)?;
        if values.len() != posterior.len() {
            return Err(SensitivityError::Normalization("bundle does not cover every target value").into());
        }
        for ((err, f), p) in report.per_value_errors.iter_mut().zip(&values).zip(&posterior) {
            let e = (f - p).abs();
            // NaN must register as a failure
            if e.is_nan() || e > *err {
                *err = e;
            }
        }
        report.grid_points.push(x);
        report.argmax_trace.push(argmax(&direct.joint));
    }
    report.max_abs_error = report
        .per_value_errors
        .iter()
        .fold(0.0, |m: f64, &e| if e.is_nan() { f64::NAN } else { m.max(e) });
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeviationFailure {
    /// The most likely value differs from the leader strictly inside the interval.
    LeaderChangedInside,
    /// No change of most likely value within one grid step beyond a finite bound.
    NoChangeBeyond,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeviationCheck {
    Pass,
    Fail { witness: f64, reason: DeviationFailure },
}

/// Scans a 10001-point grid by enumeration and checks `dev` against it.
pub fn deviation_check(
    net: &Network,
    p: &ParameterRef,
    target: VarId,
    evidence: &Evidence,
    dev: &AdmissibleDeviation,
    mode: CovaryMode,
    cap: usize,
) -> Result<DeviationCheck, OracleError> {
    let x0 = net.assessment(p)?;
    let sweep = ParameterSweep::new(net, p, target, evidence, mode, cap)?;
    let step = 1.0 / (DEVIATION_GRID - 1) as f64;
    let leader_at = |x: f64| -> Result<Option<usize>, OracleError> {
        let q = sweep.joint_at(x)?;
        Ok((q.evidence_prob > 0.0).then(|| argmax(&q.joint)))
    };

    let (lo, hi) = dev.interval(x0);
    for k in 0..DEVIATION_GRID {
        let x = k as f64 * step;
        if x <= lo || x >= hi {
            continue;
        }
        if leader_at(x)?.is_some_and(|l| l != dev.leader_at_x0) {
            return Ok(DeviationCheck::Fail {
                witness: x,
                reason: DeviationFailure::LeaderChangedInside,
            });
        }
    }

    let beyond = |from: f64, to: f64, witness: f64| -> Result<DeviationCheck, OracleError> {
        let first = libm::ceil(from / step) as usize;
        let mut valid = false;
        for k in first..DEVIATION_GRID {
            let x = k as f64 * step;
            if x > to {
                break;
            }
            if !(from..=to).contains(&x) || x == witness {
                continue;
            }
            if let Some(l) = leader_at(x)? {
                if l != dev.leader_at_x0 {
                    return Ok(DeviationCheck::Pass);
                }
                valid = true;
            }
        }
        Ok(if valid {
            DeviationCheck::Fail {
                witness,
                reason: DeviationFailure::NoChangeBeyond,
            }
        } else {
            DeviationCheck::Pass
        })
    };

    if let Some(x) = dev.crossing_left {
        let verdict = beyond((x - step).max(0.0), x, x)?;
        if verdict != DeviationCheck::Pass {
            return Ok(verdict);
        }
    }
    if let Some(x) = dev.crossing_right {
        let verdict = beyond(x, (x + step).min(1.0), x)?;
        if verdict != DeviationCheck::Pass {
            return Ok(verdict);
        }
    }
    Ok(DeviationCheck::Pass)
}
