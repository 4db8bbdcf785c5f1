//! Report entries, parameter selection and their JSON form.

use std::collections::BTreeSet;
use std::fmt;

use bnsens_core::admissible::admissible_deviation;
use bnsens_core::{
    AdmissibleDeviation, AdmissibleError, Bound, Classification, CovaryMode, FunctionBundle, Line, SensitivityError,
    Vertex,
};
use serde_json::{json, Map, Value};

use crate::netparse::FORMAT_VERSION;

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    /// Vertex proximity threshold.
    pub delta: f64,
    /// Absolute admissible-deviation threshold.
    pub rho_abs: f64,
    /// Admissible-deviation threshold relative to the assessment.
    pub rho_rel: f64,
    /// Rows of a sampled CSV.
    pub steps: usize,
    pub mode: CovaryMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            delta: 0.1,
            rho_abs: 0.05,
            rho_rel: 1.0,
            steps: 101,
            mode: CovaryMode::Strict,
        }
    }
}

impl AnalysisConfig {
    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("delta", self.delta),
            ("rho-abs", self.rho_abs),
            ("rho-rel", self.rho_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a positive number, got {v}"));
            }
        }
        if self.steps < 2 {
            return Err(format!("steps must be at least 2, got {}", self.steps));
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        json!({
            "delta": self.delta,
            "rho_abs": self.rho_abs,
            "rho_rel": self.rho_rel,
            "covariation": match self.mode {
                CovaryMode::Strict => "strict",
                CovaryMode::UniformFallback => "uniform-fallback",
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SelectionFlag {
    HighSensitivity,
    VertexProximity,
    SmallDeviation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DegenerateFlag {
    /// The denominator vanishes somewhere in `[0, 1]`.
    Pole,
    TotalTie,
    TieAtAssessment,
}

impl fmt::Display for SelectionFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionFlag::HighSensitivity => "HIGH_SENSITIVITY",
            SelectionFlag::VertexProximity => "VERTEX_PROXIMITY",
            SelectionFlag::SmallDeviation => "SMALL_DEVIATION",
        })
    }
}

impl fmt::Display for DegenerateFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DegenerateFlag::Pole => "POLE",
            DegenerateFlag::TotalTie => "TOTAL_TIE",
            DegenerateFlag::TieAtAssessment => "TIE_AT_ASSESSMENT",
        })
    }
}

/// Sensitivity function of one value of the target.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueEntry {
    pub label: String,
    pub numerator: Line,
    pub sensitivity_value: f64,
    pub classification: Classification,
    pub vertex: Option<Vertex>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportEntry {
    pub parameter_spec: String,
    pub x0: f64,
    pub denominator: Line,
    pub values: Vec<ValueEntry>,
    /// Flags and ordering consider only this value when set.
    pub focus: Option<usize>,
    /// Present when the target is a whole variable.
    pub admissible: Option<Result<AdmissibleDeviation, AdmissibleError>>,
    pub pole: Option<f64>,
    pub selection_flags: BTreeSet<SelectionFlag>,
    pub degenerate_flags: BTreeSet<DegenerateFlag>,
}

impl ReportEntry {
    /// Derives every reported quantity from `bundle`; flags are left empty.
    pub fn build(
        parameter_spec: String,
        labels: &[String],
        bundle: &FunctionBundle,
        focus: Option<usize>,
    ) -> Result<Self, SensitivityError> {
        let x0 = bundle.x0();
        let mut values = Vec::with_capacity(bundle.len());
        for (f, (label, numerator)) in bundle.functions().zip(labels.iter().zip(bundle.numerators())) {
            let classification = f.classify();
            values.push(ValueEntry {
                label: label.clone(),
                numerator: *numerator,
                sensitivity_value: f.sensitivity_value(x0)?,
                classification,
                vertex: match classification {
                    Classification::Hyperbolic => Some(f.vertex()?),
                    _ => None,
                },
            });
        }
        let pole = bundle.pole();
        let mut degenerate_flags = BTreeSet::new();
        if pole.is_some() {
            degenerate_flags.insert(DegenerateFlag::Pole);
        }
        let admissible = focus.is_none().then(|| admissible_deviation(bundle));
        match &admissible {
            Some(Err(AdmissibleError::TotalTie(..))) => {
                degenerate_flags.insert(DegenerateFlag::TotalTie);
            }
            Some(Err(AdmissibleError::TieAtAssessment(..))) => {
                degenerate_flags.insert(DegenerateFlag::TieAtAssessment);
            }
            _ => {}
        }
        Ok(ReportEntry {
            parameter_spec,
            x0,
            denominator: bundle.denominator(),
            values,
            focus,
            admissible,
            pole,
            selection_flags: BTreeSet::new(),
            degenerate_flags,
        })
    }

    fn relevant(&self) -> impl Iterator<Item = &ValueEntry> {
        self.values
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.focus.is_none_or(|f| f == *i))
            .map(|(_, v)| v)
    }

    pub fn max_sensitivity_value(&self) -> f64 {
        self.relevant().map(|v| v.sensitivity_value).fold(0.0, f64::max)
    }

    /// No relevant function varies with the parameter.
    pub fn is_constant(&self) -> bool {
        self.relevant().all(|v| v.classification == Classification::Constant)
    }

    pub fn is_selected(&self) -> bool {
        !self.selection_flags.is_empty()
    }

    pub fn to_json(&self) -> Value {
        let values: Vec<Value> = self
            .values
            .iter()
            .map(|v| {
                json!({
                    "value": v.label,
                    "a": v.numerator.slope,
                    "b": v.numerator.intercept,
                    "sensitivity_value": v.sensitivity_value,
                    "classification": match v.classification {
                        Classification::Constant => "constant",
                        Classification::Linear => "linear",
                        Classification::Hyperbolic => "hyperbolic",
                    },
                    "vertex": v.vertex.map(|x| json!({
                        "x_hat": x.x_hat,
                        "branches": x.branches,
                        "out_of_range": x.out_of_range,
                    })),
                })
            })
            .collect();
        let mut out = Map::new();
        out.insert("parameter".into(), json!(self.parameter_spec));
        out.insert("x0".into(), json!(self.x0));
        out.insert(
            "denominator".into(),
            json!({"c": self.denominator.slope, "d": self.denominator.intercept}),
        );
        out.insert("values".into(), Value::Array(values));
        out.insert("focus".into(), json!(self.focus.map(|f| &self.values[f].label)));
        out.insert("max_sensitivity_value".into(), json!(self.max_sensitivity_value()));
        out.insert("pole".into(), json!(self.pole));
        if let Some(admissible) = &self.admissible {
            out.insert(
                "admissible".into(),
                match admissible {
                    Ok(dev) => json!({
                        "left": bound(dev.left),
                        "right": bound(dev.right),
                        "leader": self.values[dev.leader_at_x0].label,
                        "crossing_left": dev.crossing_left,
                        "crossing_right": dev.crossing_right,
                        "domain": [dev.domain.0, dev.domain.1],
                        "degenerate": dev.degenerate,
                    }),
                    Err(e) => json!({ "error": e.to_string() }),
                },
            );
        }
        out.insert(
            "selection_flags".into(),
            self.selection_flags.iter().map(|f| f.to_string()).collect(),
        );
        out.insert(
            "degenerate_flags".into(),
            self.degenerate_flags.iter().map(|f| f.to_string()).collect(),
        );
        Value::Object(out)
    }
}

fn bound(b: Bound) -> Value {
    match b {
        Bound::Finite(x) => json!(x),
        Bound::Unbounded => json!("inf"),
    }
}

/// Sets the selection flags of every entry; returns the number selected.
pub fn select_parameters(entries: &mut [ReportEntry], config: &AnalysisConfig) -> usize {
    for e in entries.iter_mut() {
        e.selection_flags.clear();
        if e.max_sensitivity_value() > 1.0 {
            e.selection_flags.insert(SelectionFlag::HighSensitivity);
        }
        let x0 = e.x0;
        let near_vertex = e
            .relevant()
            .filter_map(|v| v.vertex)
            .filter(|v| (-config.delta..=1.0 + config.delta).contains(&v.x_hat))
            .any(|v| v.distance_to(x0) < config.delta);
        if near_vertex {
            e.selection_flags.insert(SelectionFlag::VertexProximity);
        }
        if let Some(Ok(dev)) = &e.admissible {
            let smallest = [dev.left, dev.right]
                .into_iter()
                .filter_map(Bound::finite)
                .fold(f64::INFINITY, f64::min);
            if smallest < config.rho_abs.max(config.rho_rel * x0) {
                e.selection_flags.insert(SelectionFlag::SmallDeviation);
            }
        }
    }
    entries.iter().filter(|e| e.is_selected()).count()
}

/// Highest sensitivity value first, then parameter text.
pub fn sort_entries(entries: &mut [ReportEntry]) {
    entries.sort_by(|a, b| {
        b.max_sensitivity_value()
            .total_cmp(&a.max_sensitivity_value())
            .then_with(|| a.parameter_spec.cmp(&b.parameter_spec))
    });
}

/// A parameter that could not be analyzed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub parameter_spec: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub network: Option<String>,
    pub case_id: Option<String>,
    pub target: String,
    pub config: AnalysisConfig,
    /// Non-constant entries.
    pub entries: Vec<ReportEntry>,
    pub constant_parameters: usize,
    pub failures: Vec<Failure>,
}

impl Report {
    pub fn new(target: String, config: AnalysisConfig) -> Self {
        Report {
            network: None,
            case_id: None,
            target,
            config,
            entries: Vec::new(),
            constant_parameters: 0,
            failures: Vec::new(),
        }
    }

    /// Drops constant entries into the count, sets flags and sorts.
    pub fn finish(&mut self) {
        let before = self.entries.len();
        self.entries.retain(|e| !e.is_constant());
        self.constant_parameters += before - self.entries.len();
        select_parameters(&mut self.entries, &self.config);
        sort_entries(&mut self.entries);
        self.failures.sort_by(|a, b| a.parameter_spec.cmp(&b.parameter_spec));
    }

    pub fn selected(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| e.is_selected())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "format_version": FORMAT_VERSION,
            "network": self.network,
            "case_id": self.case_id,
            "target": self.target,
            "config": self.config.to_json(),
            "entries": self.entries.iter().map(ReportEntry::to_json).collect::<Vec<_>>(),
            "constant_parameters": self.constant_parameters,
            "selected_parameters": self.selected().count(),
            "failures": self.failures.iter().map(|f| json!({
                "parameter": f.parameter_spec,
                "error": f.error,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Function constants read back from a report document.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayEntry {
    pub parameter_spec: String,
    pub labels: Vec<String>,
    pub focus: Option<usize>,
    pub bundle: FunctionBundle,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("entry {index}: missing or malformed field {field:?}")]
    Field { index: usize, field: &'static str },
    #[error("entry {index} ({parameter}): {source}")]
    Bundle {
        index: usize,
        parameter: String,
        source: SensitivityError,
    },
}

/// Reads the entries of a report document. Only `parameter`, `x0`,
/// `denominator.{c,d}`, `values[].{value,a,b}` and an optional `focus` are used;
/// everything else is recomputed.
pub fn read_replay(doc: &Value) -> Result<(Option<String>, Vec<ReplayEntry>), ReplayError> {
    let entries = doc.get("entries").and_then(Value::as_array).ok_or(ReplayError::Field {
        index: 0,
        field: "entries",
    })?;
    let target = doc.get("target").and_then(Value::as_str).map(str::to_owned);
    let mut out = Vec::with_capacity(entries.len());
    for (index, e) in entries.iter().enumerate() {
        let field = |field: &'static str| ReplayError::Field { index, field };
        let num = |v: Option<&Value>, name: &'static str| v.and_then(Value::as_f64).ok_or(field(name));
        let parameter_spec = e
            .get("parameter")
            .and_then(Value::as_str)
            .ok_or(field("parameter"))?
            .to_owned();
        let x0 = num(e.get("x0"), "x0")?;
        let den = e.get("denominator").ok_or(field("denominator"))?;
        let denominator = Line::new(num(den.get("c"), "denominator.c")?, num(den.get("d"), "denominator.d")?);
        let values = e.get("values").and_then(Value::as_array).ok_or(field("values"))?;
        let mut labels = Vec::with_capacity(values.len());
        let mut numerators = Vec::with_capacity(values.len());
        for v in values {
            labels.push(
                v.get("value")
                    .and_then(Value::as_str)
                    .ok_or(field("values.value"))?
                    .to_owned(),
            );
            numerators.push(Line::new(num(v.get("a"), "values.a")?, num(v.get("b"), "values.b")?));
        }
        let focus = match e.get("focus") {
            None | Some(Value::Null) => None,
            Some(Value::String(label)) => Some(labels.iter().position(|l| l == label).ok_or(field("focus"))?),
            Some(_) => return Err(field("focus")),
        };
        let bundle = FunctionBundle::new(x0, numerators, denominator).map_err(|source| ReplayError::Bundle {
            index,
            parameter: parameter_spec.clone(),
            source,
        })?;
        out.push(ReplayEntry {
            parameter_spec,
            labels,
            focus,
            bundle,
        });
    }
    Ok((target, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    fn bundle(x0: f64, lines: &[(f64, f64)]) -> FunctionBundle {
        let numerators: Vec<Line> = lines.iter().map(|&(a, b)| Line::new(a, b)).collect();
        let c = numerators.iter().map(|l| l.slope).sum();
        let d = numerators.iter().map(|l| l.intercept).sum();
        FunctionBundle::new(x0, numerators, Line::new(c, d)).unwrap()
    }

    fn entry(x0: f64, lines: &[(f64, f64)], focus: Option<usize>) -> ReportEntry {
        ReportEntry::build("P=p".into(), &labels(lines.len()), &bundle(x0, lines), focus).unwrap()
    }

    fn flags(mut e: ReportEntry) -> Vec<String> {
        select_parameters(std::slice::from_mut(&mut e), &AnalysisConfig::default());
        e.selection_flags.iter().map(|f| f.to_string()).collect()
    }

    #[test]
    fn high_sensitivity() {
        // f(x) = 6.97x + 0.01 on a constant denominator
        let e = entry(0.1, &[(6.97, 0.01), (-6.97, 0.99)], Some(0));
        assert!((e.max_sensitivity_value() - 6.97).abs() < 1e-12);
        assert_eq!(flags(e), ["HIGH_SENSITIVITY"]);
    }

    #[test]
    fn vertex_proximity_below_unit_gradient() {
        // f(x) = -r / (x - s) with vertex s + √|r| = 0.05 and |f'(0.07)| ≈ 0.53
        let (s, r) = (0.05 - 0.0535_f64, 0.0535_f64 * 0.0535);
        let f = |a: f64, b: f64| (a, b);
        let e = entry(0.07, &[f(0.0, r), f(1.0, -s - r)], Some(0));
        let v = e.values[0].vertex.unwrap();
        assert!((v.x_hat - 0.05).abs() < 1e-12, "{v:?}");
        assert!(e.max_sensitivity_value() < 1.0 && e.max_sensitivity_value() > 0.5);
        assert_eq!(flags(e), ["VERTEX_PROXIMITY"]);
    }

    #[test]
    fn small_deviation() {
        let e = entry(0.05, &[(-0.5, 0.5 + 0.5 * 0.048), (0.5, 0.5 - 0.5 * 0.048)], None);
        let dev = e.admissible.clone().unwrap().unwrap();
        assert!((dev.left.finite().unwrap() - 0.002).abs() < 1e-12);
        assert_eq!(dev.right, Bound::Unbounded);
        assert_eq!(flags(e), ["SMALL_DEVIATION"]);
    }

    #[test]
    fn unflagged_and_constant() {
        let e = entry(0.5, &[(0.1, 0.5), (-0.1, 0.5)], Some(0));
        assert!(!e.is_constant());
        assert!(flags(e).is_empty());
        assert!(entry(0.5, &[(0.0, 0.3), (0.0, 0.7)], None).is_constant());
    }

    #[test]
    fn ordering_ignores_input_order() {
        let mk = |name: &str, slope: f64| {
            let mut e = entry(0.5, &[(slope, 0.2), (-slope, 0.8)], None);
            e.parameter_spec = name.into();
            e
        };
        let mut a = vec![mk("B", 0.5), mk("A", 0.5), mk("C", 2.0)];
        let mut b = vec![mk("A", 0.5), mk("C", 2.0), mk("B", 0.5)];
        sort_entries(&mut a);
        sort_entries(&mut b);
        let names: Vec<&str> = a.iter().map(|e| e.parameter_spec.as_str()).collect();
        assert_eq!(names, ["C", "A", "B"]);
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_through_replay() {
        let mut report = Report::new("T".into(), AnalysisConfig::default());
        report.entries.push(entry(0.02, &[(-0.5, 0.585), (0.5, 0.415)], None));
        report.entries.push(entry(0.3, &[(0.0, 0.4), (0.0, 0.6)], None));
        report.finish();
        assert_eq!(report.constant_parameters, 1);
        let doc = report.to_json();
        assert_eq!(doc["entries"][0]["admissible"]["left"], json!("inf"));
        assert!((doc["entries"][0]["admissible"]["right"].as_f64().unwrap() - 0.15).abs() < 1e-12);
        let (target, replayed) = read_replay(&doc).unwrap();
        assert_eq!(target.as_deref(), Some("T"));
        assert_eq!(replayed.len(), 1);
        assert_eq!(&replayed[0].bundle, &bundle(0.02, &[(-0.5, 0.585), (0.5, 0.415)]));
    }

    #[test]
    fn replay_rejects_bad_constants() {
        let doc = json!({"entries": [{"parameter": "P=p", "x0": 0.5,
            "denominator": {"c": 0.0, "d": 1.0},
            "values": [{"value": "v0", "a": 0.0, "b": 0.3}, {"value": "v1", "a": 0.0, "b": 0.3}]}]});
        assert!(matches!(read_replay(&doc), Err(ReplayError::Bundle { index: 0, .. })));
        let doc = json!({"entries": [{"parameter": "P=p"}]});
        assert_eq!(read_replay(&doc), Err(ReplayError::Field { index: 0, field: "x0" }));
    }

    #[test]
    fn config_thresholds_are_positive() {
        assert!(AnalysisConfig::default().check().is_ok());
        let bad = AnalysisConfig {
            delta: 0.0,
            ..AnalysisConfig::default()
        };
        assert!(bad.check().is_err());
        let bad = AnalysisConfig {
            steps: 1,
            ..AnalysisConfig::default()
        };
        assert!(bad.check().is_err());
    }
}
