//! Admissible deviation: how far an assessment can move in either direction
//! before the most likely value of the variable of interest changes.
//!
//! All functions of a bundle share a positive denominator, so the most likely
//! value at `x` is the index of the largest numerator line `a_i·x + b_i`. Leader
//! changes are the breakpoints of the upper envelope of those lines.

use alloc::vec::Vec;
use core::fmt;

use crate::sensitivity::{FunctionBundle, Line, POLE_TOLERANCE};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AdmissibleError {
    #[error("pole at x = {0}: denominator vanishes")]
    Pole(f64),
    #[error("values {0} and {1} have identical maximal functions")]
    TotalTie(usize, usize),
    #[error("values {0} and {1} are tied for most likely at the assessment")]
    TieAtAssessment(usize, usize),
}

/// One side of an admissible deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Finite(f64),
    /// The leader persists up to the edge of the interval.
    Unbounded,
}

impl Bound {
    pub fn finite(self) -> Option<f64> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Bound::Unbounded)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Unbounded => f.write_str("inf"),
        }
    }
}

/// A point where the most likely value changes from `from` to `to` (left to right).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint {
    pub x: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleDeviation {
    pub left: Bound,
    pub right: Bound,
    pub leader_at_x0: usize,
    pub crossing_left: Option<f64>,
    pub crossing_right: Option<f64>,
    /// Interval the deviation is measured in: `(0, 1)` unless the denominator
    /// vanishes inside `[0, 1]`, in which case it is the pole-free side
    /// containing the assessment and `degenerate` is set.
    pub domain: (f64, f64),
    pub degenerate: bool,
}

impl AdmissibleDeviation {
    /// Lowest and highest parameter value keeping the leader.
    pub fn interval(&self, x0: f64) -> (f64, f64) {
        let lo = self.crossing_left.unwrap_or(self.domain.0);
        let hi = self.crossing_right.unwrap_or(self.domain.1);
        debug_assert!(lo <= x0 && x0 <= hi);
        (lo, hi)
    }
}

/// Index of the most likely value at `x`; ties go to the lowest index.
pub fn argmax_at(bundle: &FunctionBundle, x: f64) -> Result<usize, AdmissibleError> {
    if bundle.denominator().at(x).abs() <= POLE_TOLERANCE {
        return Err(AdmissibleError::Pole(x));
    }
    let lines = bundle.numerators();
    let mut best = 0;
    let mut best_value = lines[0].at(x);
    for (i, line) in lines.iter().enumerate().skip(1) {
        let v = line.at(x);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    Ok(best)
}

/// Leader just right of `x`: largest value at `x`, then largest slope.
fn leader_right_of(lines: &[Line], x: f64) -> usize {
    let key = |l: &Line| (l.at(x), l.slope);
    let mut best = 0;
    for i in 1..lines.len() {
        let (v, s) = key(&lines[i]);
        let (bv, bs) = key(&lines[best]);
        if v > bv || (v == bv && s > bs) {
            best = i;
        }
    }
    best
}

fn identical_twin(lines: &[Line], leader: usize) -> Option<usize> {
    (0..lines.len()).find(|&j| j != leader && lines[j] == lines[leader])
}

/// Breakpoints of the upper envelope of `lines` strictly inside `(lo, hi)`.
fn envelope(lines: &[Line], lo: f64, hi: f64) -> Result<Vec<Breakpoint>, AdmissibleError> {
    let mut leader = leader_right_of(lines, lo);
    let mut x = lo;
    let mut out = Vec::new();
    loop {
        if let Some(twin) = identical_twin(lines, leader) {
            return Err(AdmissibleError::TotalTie(leader.min(twin), leader.max(twin)));
        }
        let current = lines[leader];
        let mut next: Option<(f64, usize)> = None;
        for (j, line) in lines.iter().enumerate() {
            if line.slope <= current.slope {
                continue;
            }
            let crossing = (current.intercept - line.intercept) / (line.slope - current.slope);
            if !(crossing > x && crossing < hi) {
                continue;
            }
            next = match next {
                Some((bx, bj)) if bx < crossing || (bx == crossing && lines[bj].slope >= line.slope) => Some((bx, bj)),
                _ => Some((crossing, j)),
            };
        }
        match next {
            Some((crossing, j)) => {
                out.push(Breakpoint {
                    x: crossing,
                    from: leader,
                    to: j,
                });
                leader = j;
                x = crossing;
            }
            None => return Ok(out),
        }
    }
}

/// Points in `(0, 1)` where the most likely value changes, in increasing order.
pub fn leader_intersections(bundle: &FunctionBundle) -> Result<Vec<Breakpoint>, AdmissibleError> {
    envelope(bundle.numerators(), 0.0, 1.0)
}

/// Interval in which the denominator has no root, containing `x0`.
fn pole_free_domain(bundle: &FunctionBundle) -> Result<((f64, f64), bool), AdmissibleError> {
    let den = bundle.denominator();
    let x0 = bundle.x0();
    if den.at(x0).abs() <= POLE_TOLERANCE {
        return Err(AdmissibleError::Pole(x0));
    }
    if let Some(pole) = bundle.pole() {
        let domain = if pole < x0 { (pole, 1.0) } else { (0.0, pole) };
        return Ok((domain, true));
    }
    Ok(((0.0, 1.0), false))
}

pub fn admissible_deviation(bundle: &FunctionBundle) -> Result<AdmissibleDeviation, AdmissibleError> {
    let x0 = bundle.x0();
    let ((lo, hi), degenerate) = pole_free_domain(bundle)?;
    let breakpoints = envelope(bundle.numerators(), lo, hi)?;
    if let Some(bp) = breakpoints.iter().find(|bp| bp.x == x0) {
        return Err(AdmissibleError::TieAtAssessment(bp.from.min(bp.to), bp.from.max(bp.to)));
    }

    let below = breakpoints.iter().rev().find(|bp| bp.x < x0);
    let above = breakpoints.iter().find(|bp| bp.x > x0);
    let segment_leader = match (below, above) {
        (Some(bp), _) => bp.to,
        (None, Some(bp)) => bp.from,
        (None, None) => leader_right_of(bundle.numerators(), lo),
    };
    let leader_at_x0 = argmax_at(bundle, x0)?;
    if leader_at_x0 != segment_leader {
        // x0 sits within rounding of a crossing
        let (i, j) = (leader_at_x0.min(segment_leader), leader_at_x0.max(segment_leader));
        return Err(AdmissibleError::TieAtAssessment(i, j));
    }

    Ok(AdmissibleDeviation {
        left: below.map_or(Bound::Unbounded, |bp| Bound::Finite(x0 - bp.x)),
        right: above.map_or(Bound::Unbounded, |bp| Bound::Finite(bp.x - x0)),
        leader_at_x0,
        crossing_left: below.map(|bp| bp.x),
        crossing_right: above.map(|bp| bp.x),
        domain: (lo, hi),
        degenerate,
    })
}
