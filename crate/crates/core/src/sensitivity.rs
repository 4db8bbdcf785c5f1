//! Sensitivity functions `f(x) = (a·x + b) / (c·x + d)`.
//!
//! Under proportional co-variation, both `Pr(a_i, e)` and `Pr(e)` are linear in
//! the varied parameter `x`. Two propagations, at `x = 0` and `x = 1`, therefore
//! pin down every constant. Constants are kept in units of joint probability
//! mass: the numerator of value `i` is `Pr(a_i, e)(x)` and the shared
//! denominator is `Pr(e)(x)`.

use alloc::vec::Vec;

use crate::engine::{query, EngineError};
use crate::model::{CovaryMode, Evidence, ModelError, Network, ParameterRef, VarId};

/// `|c·x + d|` at or below this is treated as a pole.
pub const POLE_TOLERANCE: f64 = 1e-12;
/// `|a·d - b·c| <= CONSTANT_TOLERANCE · max(1, d²)` classifies as constant.
pub const CONSTANT_TOLERANCE: f64 = 1e-12;
/// `|c| <= LINEAR_TOLERANCE · max(|c| + |d|, 1)` classifies as linear.
pub const LINEAR_TOLERANCE: f64 = 1e-9;
/// Maximum disagreement between the fitted function and a direct propagation
/// at the original assessment.
pub const SELF_CHECK_TOLERANCE: f64 = 1e-9;
/// Relative tolerance on `Σ a_i = c` and `Σ b_i = d`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("pole at x = {0}: denominator vanishes")]
    Pole(f64),
    #[error("function is not a hyperbola")]
    NotHyperbolic,
    #[error("evidence has zero probability at the original assessment")]
    ZeroEvidenceProbability,
    #[error("fitted function for value {value} is off by {error:e} at the assessment")]
    SelfCheckFailed { value: usize, error: f64 },
    #[error("numerators do not sum to the denominator: {0}")]
    Normalization(&'static str),
    #[error("assessment {0} is outside [0, 1]")]
    AssessmentOutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// `slope · x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn new(slope: f64, intercept: f64) -> Self {
        Line { slope, intercept }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    Constant,
    Linear,
    Hyperbolic,
}

/// `f(x) = r / (x - s) + t`; `(s, t)` is the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperbolaForm {
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

/// Where the gradient of a hyperbola has absolute value 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    /// The branch nearest to the unit interval (the one on the same side of the
    /// pole as `[0, 1]`).
    pub x_hat: f64,
    /// `s + √|r|` and `s - √|r|`.
    pub branches: [f64; 2],
    /// `x_hat` lies outside `[0, 1]`.
    pub out_of_range: bool,
}

impl Vertex {
    pub fn distance_to(&self, x0: f64) -> f64 {
        (x0 - self.x_hat).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RationalLinear {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl RationalLinear {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        RationalLinear { a, b, c, d }
    }

    fn denominator(&self, x: f64) -> Result<f64, SensitivityError> {
        let den = self.c * x + self.d;
        if den.abs() <= POLE_TOLERANCE {
            Err(SensitivityError::Pole(x))
        } else {
            Ok(den)
        }
    }

    /// `a·d - b·c`, the numerator of the derivative.
    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn eval(&self, x: f64) -> Result<f64, SensitivityError> {
        let den = self.denominator(x)?;
        Ok((self.a * x + self.b) / den)
    }

    pub fn derivative_at(&self, x: f64) -> Result<f64, SensitivityError> {
        let den = self.denominator(x)?;
        Ok(self.determinant() / (den * den))
    }

    /// `|f'(x0)|`.
    pub fn sensitivity_value(&self, x0: f64) -> Result<f64, SensitivityError> {
        self.derivative_at(x0).map(f64::abs)
    }

    pub fn classify(&self) -> Classification {
        if self.determinant().abs() <= CONSTANT_TOLERANCE * (self.d * self.d).max(1.0) {
            Classification::Constant
        } else if self.c.abs() <= LINEAR_TOLERANCE * (self.c.abs() + self.d.abs()).max(1.0) {
            Classification::Linear
        } else {
            Classification::Hyperbolic
        }
    }

    fn require_hyperbolic(&self) -> Result<(), SensitivityError> {
        match self.classify() {
            Classification::Hyperbolic => Ok(()),
            _ => Err(SensitivityError::NotHyperbolic),
        }
    }

    pub fn hyperbola_form(&self) -> Result<HyperbolaForm, SensitivityError> {
        self.require_hyperbolic()?;
        let c = self.c;
        Ok(HyperbolaForm {
            r: (self.b * c - self.a * self.d) / (c * c),
            s: -self.d / c,
            t: self.a / c,
        })
    }

    pub fn vertex(&self) -> Result<Vertex, SensitivityError> {
        self.require_hyperbolic()?;
        // x̂ = (-d ± √|ad - bc|) / c; the sign is folded so that the first
        // branch is s + √|r| whatever the sign of c.
        let q = libm::sqrt(self.determinant().abs()).copysign(self.c);
        let upper = (-self.d + q) / self.c;
        let lower = (-self.d - q) / self.c;
        let gap = |x: f64| (-x).max(x - 1.0).max(0.0);
        let x_hat = if gap(lower) < gap(upper) { lower } else { upper };
        Ok(Vertex {
            x_hat,
            branches: [upper, lower],
            out_of_range: !(0.0..=1.0).contains(&x_hat),
        })
    }
}

/// Sensitivity functions for every value of one variable, sharing a denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionBundle {
    x0: f64,
    numerators: Vec<Line>,
    denominator: Line,
}

impl FunctionBundle {
    /// Checks `Σ a_i = c` and `Σ b_i = d` within a relative `1e-9`.
    pub fn new(x0: f64, numerators: Vec<Line>, denominator: Line) -> Result<Self, SensitivityError> {
        if !(0.0..=1.0).contains(&x0) {
            return Err(SensitivityError::AssessmentOutOfRange(x0));
        }
        if numerators.is_empty() {
            return Err(SensitivityError::Normalization("bundle has no functions"));
        }
        let slopes: f64 = numerators.iter().map(|l| l.slope).sum();
        let intercepts: f64 = numerators.iter().map(|l| l.intercept).sum();
        let (c, d) = (denominator.slope, denominator.intercept);
        if (slopes - c).abs() > NORMALIZATION_TOLERANCE * c.abs().max(1.0) {
            return Err(SensitivityError::Normalization("slopes do not sum to c"));
        }
        if (intercepts - d).abs() > NORMALIZATION_TOLERANCE * d.abs().max(1.0) {
            return Err(SensitivityError::Normalization("intercepts do not sum to d"));
        }
        Ok(FunctionBundle {
            x0,
            numerators,
            denominator,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn numerators(&self) -> &[Line] {
        &self.numerators
    }

    pub fn denominator(&self) -> Line {
        self.denominator
    }

    /// The sensitivity function of value `i`. Panics if `i` is out of range.
    pub fn function(&self, i: usize) -> RationalLinear {
        let n = self.numerators[i];
        RationalLinear::new(n.slope, n.intercept, self.denominator.slope, self.denominator.intercept)
    }

    pub fn functions(&self) -> impl Iterator<Item = RationalLinear> + '_ {
        (0..self.len()).map(|i| self.function(i))
    }

    /// Root of the denominator if it lies in `[0, 1]`.
    pub fn pole(&self) -> Option<f64> {
        let den = self.denominator;
        if den.slope == 0.0 {
            return None;
        }
        Some(-den.intercept / den.slope).filter(|x| (0.0..=1.0).contains(x))
    }

    /// Every function evaluated at `x`.
    pub fn eval_all(&self, x: f64) -> Result<Vec<f64>, SensitivityError> {
        self.functions().map(|f| f.eval(x)).collect()
    }

    /// Every constant multiplied by `k`; the functions themselves are unchanged.
    pub fn scaled(&self, k: f64) -> FunctionBundle {
        let scale = |l: &Line| Line::new(l.slope * k, l.intercept * k);
        FunctionBundle {
            x0: self.x0,
            numerators: self.numerators.iter().map(scale).collect(),
            denominator: scale(&self.denominator),
        }
    }
}

/// A bundle together with the analysis it was fitted for.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedBundle {
    pub parameter: ParameterRef,
    pub target: VarId,
    pub evidence: Evidence,
    pub bundle: FunctionBundle,
}

/// Fits the sensitivity functions of every value of `target` to parameter `p`.
///
/// Propagates at `x = 0` and `x = 1` to obtain the constants, then once more on
/// the unmodified network to check the fit at the original assessment.
pub fn fit_bundle(
    net: &Network,
    p: &ParameterRef,
    target: VarId,
    evidence: &Evidence,
    mode: CovaryMode,
) -> Result<FittedBundle, SensitivityError> {
    let x0 = net.assessment(p)?;
    let original = query(net, target, evidence)?;
    if original.evidence_prob <= 0.0 {
        return Err(SensitivityError::ZeroEvidenceProbability);
    }
    let at0 = query(&net.apply_parameter(p, 0.0, mode)?, target, evidence)?;
    let at1 = query(&net.apply_parameter(p, 1.0, mode)?, target, evidence)?;

    let numerators = at0
        .joint
        .iter()
        .zip(&at1.joint)
        .map(|(&lo, &hi)| Line::new(hi - lo, lo))
        .collect();
    let d = at0.evidence_prob;
    let denominator = Line::new(at1.evidence_prob - d, d);
    let bundle = FunctionBundle::new(x0, numerators, denominator)?;

    for (value, f) in bundle.functions().enumerate() {
        let direct = original.joint[value] / original.evidence_prob;
        let error = (f.eval(x0)? - direct).abs();
        if error.is_nan() || error > SELF_CHECK_TOLERANCE {
            return Err(SensitivityError::SelfCheckFailed { value, error });
        }
    }

    Ok(FittedBundle {
        parameter: p.clone(),
        target,
        evidence: evidence.clone(),
        bundle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cpt, Variable};
    use alloc::vec;

    const IVB: RationalLinear = RationalLinear {
        a: 0.09208,
        b: 1.17403,
        c: 1.0,
        d: 1.17403,
    };

    fn chain() -> Network {
        Network::new(
            vec![Variable::new("A", ["a1", "a2"]), Variable::new("B", ["b1", "b2"])],
            vec![vec![], vec![VarId(0)]],
            vec![
                Cpt::prior(vec![0.4, 0.6]),
                Cpt::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(IVB.eval(0.0).unwrap(), 1.0);
        assert_eq!(RationalLinear::new(1., 0., 0., 1.).eval(0.42).unwrap(), 0.42);
        assert_eq!(RationalLinear::new(0., 1., 1., 1.).eval(1.0).unwrap(), 0.5);
        assert_eq!(
            RationalLinear::new(1., 0., 1., -0.5).eval(0.5),
            Err(SensitivityError::Pole(0.5))
        );
    }

    #[test]
    fn derivative_examples() {
        assert!((IVB.derivative_at(0.05).unwrap() + 0.71145).abs() < 1e-5);
        let linear = RationalLinear::new(0.7, 0.2, 0.0, 1.0);
        for x in [0.0, 0.3, 1.0] {
            assert!((linear.derivative_at(x).unwrap() - 0.7).abs() < 1e-15);
        }
        assert_eq!(RationalLinear::new(1., 0., 0., 1.).derivative_at(0.8).unwrap(), 1.0);
        assert!(RationalLinear::new(1., 0., 1., -0.5).derivative_at(0.5).is_err());
    }

    #[test]
    fn sensitivity_value_examples() {
        assert!((IVB.sensitivity_value(0.05).unwrap() - 0.71145).abs() < 1e-5);
        assert_eq!(
            RationalLinear::new(0.0, 0.3, 0.0, 1.0).sensitivity_value(0.4).unwrap(),
            0.0
        );
        assert_eq!(RationalLinear::new(1., 0., 0., 1.).sensitivity_value(0.1).unwrap(), 1.0);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            RationalLinear::new(0.7, 0.2, 0.0, 1.0).classify(),
            Classification::Linear
        );
        assert_eq!(IVB.classify(), Classification::Hyperbolic);
        assert_eq!(
            RationalLinear::new(0.0, 0.3, 0.0, 1.0).classify(),
            Classification::Constant
        );
        // proportional numerator and denominator
        assert_eq!(
            RationalLinear::new(0.2, 0.1, 0.4, 0.2).classify(),
            Classification::Constant
        );
    }

    #[test]
    fn hyperbola_form_examples() {
        let h = IVB.hyperbola_form().unwrap();
        assert!((h.r - 1.0659253176).abs() < 1e-9);
        assert!((h.r * IVB.c * IVB.c - (IVB.b * IVB.c - IVB.a * IVB.d)).abs() < 1e-15);
        assert_eq!(h.s, -1.17403);
        assert_eq!(h.t, 0.09208);
        let h = RationalLinear::new(0., 1., 1., 1.).hyperbola_form().unwrap();
        assert_eq!((h.r, h.s, h.t), (1.0, -1.0, 0.0));
        assert_eq!(
            RationalLinear::new(0.7, 0.2, 0.0, 1.0).hyperbola_form(),
            Err(SensitivityError::NotHyperbolic)
        );
    }

    #[test]
    fn hyperbola_form_reproduces_function() {
        let h = IVB.hyperbola_form().unwrap();
        for x in [0.0, 0.25, 0.5, 1.0] {
            let via_form = h.r / (x - h.s) + h.t;
            assert!((via_form - IVB.eval(x).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn vertex_examples() {
        let v = IVB.vertex().unwrap();
        assert!((v.x_hat + 0.1416).abs() < 1e-4);
        assert!((v.x_hat + 0.14).abs() < 0.01);
        assert!((v.branches[1] + 2.2065).abs() < 1e-4);
        assert!(v.out_of_range);
        assert!((v.distance_to(0.05) - 0.19159).abs() < 1e-4);

        let v = RationalLinear::new(0., 1., 1., 1.).vertex().unwrap();
        assert_eq!(v.branches, [0.0, -2.0]);
        assert_eq!(v.x_hat, 0.0);
        assert!(!v.out_of_range);

        assert!(RationalLinear::new(0.7, 0.2, 0.0, 1.0).vertex().is_err());
    }

    #[test]
    fn vertex_with_pole_above_interval() {
        // f = 0.1x / (0.8 - 0.7x): pole at 8/7, vertex branch below it
        let f = RationalLinear::new(0.1, 0.0, -0.7, 0.8);
        let v = f.vertex().unwrap();
        let s = f.hyperbola_form().unwrap().s;
        assert!(s > 1.0);
        assert!(v.x_hat < s);
        assert!((f.sensitivity_value(v.x_hat).unwrap() - 1.0).abs() < 1e-9);
        for branch in v.branches {
            assert!((f.sensitivity_value(branch).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn vertex_gradient_is_one() {
        for f in [
            IVB,
            RationalLinear::new(0., 1., 1., 1.),
            RationalLinear::new(0.3, 0.01, 2.0, 0.05),
        ] {
            let v = f.vertex().unwrap();
            for x in v.branches {
                assert!((f.sensitivity_value(x).unwrap() - 1.0).abs() < 1e-9, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn bundle_checks_normalization() {
        let ok = FunctionBundle::new(
            0.5,
            vec![Line::new(1.0, 0.0), Line::new(-1.0, 1.0)],
            Line::new(0.0, 1.0),
        );
        assert!(ok.is_ok());
        let bad = FunctionBundle::new(0.5, vec![Line::new(1.0, 0.0)], Line::new(0.0, 1.0));
        assert!(matches!(bad, Err(SensitivityError::Normalization(_))));
        assert!(FunctionBundle::new(1.5, vec![Line::new(0.0, 1.0)], Line::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn fit_single_variable() {
        let net = Network::new(
            vec![Variable::new("B", ["b1", "b2"])],
            vec![vec![]],
            vec![Cpt::prior(vec![0.3, 0.7])],
        )
        .unwrap();
        let p = ParameterRef::new(VarId(0), 0, vec![]);
        let fit = fit_bundle(&net, &p, VarId(0), &Evidence::new(), CovaryMode::Strict).unwrap();
        assert_eq!(fit.bundle.x0(), 0.3);
        assert_eq!(fit.bundle.function(0), RationalLinear::new(1.0, 0.0, 0.0, 1.0));
        assert_eq!(fit.bundle.function(1), RationalLinear::new(-1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn fit_chain_root_parameter() {
        // Pr(b1)(x) = 0.9x + 0.2(1 - x) = 0.7x + 0.2
        let p = ParameterRef::new(VarId(0), 0, vec![]);
        let fit = fit_bundle(&chain(), &p, VarId(1), &Evidence::new(), CovaryMode::Strict).unwrap();
        let f = fit.bundle.function(0);
        assert!((f.a - 0.7).abs() < 1e-15 && (f.b - 0.2).abs() < 1e-15);
        assert!(f.c.abs() < 1e-15 && (f.d - 1.0).abs() < 1e-15);
        assert_eq!(f.classify(), Classification::Linear);
    }

    #[test]
    fn fit_with_evidence_is_hyperbolic() {
        // Pr(a1 | b1)(x) = 0.9x / (0.7x + 0.2)
        let p = ParameterRef::new(VarId(0), 0, vec![]);
        let e = Evidence::new().with(VarId(1), 0).unwrap();
        let fit = fit_bundle(&chain(), &p, VarId(0), &e, CovaryMode::Strict).unwrap();
        let f = fit.bundle.function(0);
        assert!((f.a - 0.9).abs() < 1e-15 && f.b.abs() < 1e-15);
        assert!((f.c - 0.7).abs() < 1e-15 && (f.d - 0.2).abs() < 1e-15);
        assert_eq!(f.classify(), Classification::Hyperbolic);
        // shared denominator, bit for bit
        let g = fit.bundle.function(1);
        assert_eq!((f.c.to_bits(), f.d.to_bits()), (g.c.to_bits(), g.d.to_bits()));
    }

    #[test]
    fn fit_independent_parameter_is_constant() {
        // A and C are independent roots; B has parent A only.
        let net = Network::new(
            vec![
                Variable::new("A", ["a1", "a2"]),
                Variable::new("B", ["b1", "b2"]),
                Variable::new("C", ["c1", "c2", "c3"]),
            ],
            vec![vec![], vec![VarId(0)], vec![]],
            vec![
                Cpt::prior(vec![0.4, 0.6]),
                Cpt::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
                Cpt::prior(vec![0.2, 0.5, 0.3]),
            ],
        )
        .unwrap();
        let p = ParameterRef::new(VarId(2), 1, vec![]);
        let e = Evidence::new().with(VarId(1), 0).unwrap();
        let fit = fit_bundle(&net, &p, VarId(0), &e, CovaryMode::Strict).unwrap();
        for f in fit.bundle.functions() {
            assert!(f.determinant().abs() < 1e-15);
            assert_eq!(f.classify(), Classification::Constant);
        }
    }

    #[test]
    fn fit_rejects_zero_evidence() {
        let net = Network::new(
            vec![Variable::new("A", ["a1", "a2"]), Variable::new("B", ["b1", "b2"])],
            vec![vec![], vec![VarId(0)]],
            vec![
                Cpt::prior(vec![1.0, 0.0]),
                Cpt::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]),
            ],
        )
        .unwrap();
        let p = ParameterRef::new(VarId(0), 0, vec![]);
        let e = Evidence::new().with(VarId(1), 1).unwrap();
        assert_eq!(
            fit_bundle(&net, &p, VarId(0), &e, CovaryMode::Strict),
            Err(SensitivityError::ZeroEvidenceProbability)
        );
    }

    #[test]
    fn fit_degenerate_column_needs_fallback() {
        let net = Network::new(
            vec![Variable::new("A", ["a1", "a2", "a3"]), Variable::new("B", ["b1", "b2"])],
            vec![vec![], vec![VarId(0)]],
            vec![
                Cpt::prior(vec![0.0, 1.0, 0.0]),
                Cpt::new(vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]]),
            ],
        )
        .unwrap();
        let p = ParameterRef::new(VarId(0), 1, vec![]);
        let strict = fit_bundle(&net, &p, VarId(1), &Evidence::new(), CovaryMode::Strict);
        assert!(matches!(
            strict,
            Err(SensitivityError::Model(ModelError::CovariationUndefined { .. }))
        ));
        let fit = fit_bundle(&net, &p, VarId(1), &Evidence::new(), CovaryMode::UniformFallback).unwrap();
        // Pr(b1)(x) = 0.2x + (0.9 + 0.5)(1 - x)/2
        let f = fit.bundle.function(0);
        assert!((f.eval(1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((f.eval(0.0).unwrap() - 0.7).abs() < 1e-15);
    }
}
