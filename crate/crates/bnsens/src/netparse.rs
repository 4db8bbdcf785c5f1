//! Network, evidence-case and report documents.
//!
//! Network file:
//!
//! ```json
//! { "format_version": "1",
//!   "name": "toy-chain",
//!   "variables": [ {"name": "A", "values": ["a1", "a2"]},
//!                  {"name": "B", "values": ["b1", "b2"], "parents": ["A"]} ],
//!   "cpts": { "A": {"": [0.4, 0.6]},
//!             "B": {"a1": [0.9, 0.1], "a2": [0.2, 0.8]} } }
//! ```
//!
//! CPT keys are the comma-joined parent value labels in declared parent order;
//! a root variable has the single key `""`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use bnsens_core::{Cpt, Evidence, ModelError, Network, VarId, Variable, Violation};
use serde::Deserialize;
use serde_json::Value;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format_version {0:?}, expected \"1\"")]
    Version(String),
    #[error("variable {variable}: {message}")]
    Semantic { variable: String, message: String },
    #[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("variable {variable}: unknown value {value:?}")]
    UnknownValue { variable: String, value: String },
}

impl ParseError {
    fn semantic(variable: &str, message: impl Into<String>) -> Self {
        ParseError::Semantic {
            variable: variable.to_owned(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends " at line L column C"; the location is kept separately
        let full = e.to_string();
        let message = match full.rfind(" at line ") {
            Some(cut) => full[..cut].to_owned(),
            None => full,
        };
        ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkDocument {
    pub format_version: String,
    pub name: Option<String>,
    pub description: Option<String>,
    pub network: Network,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseDocument {
    pub case_id: String,
    pub evidence: Evidence,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    format_version: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    variables: Vec<RawVariable>,
    cpts: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    values: Vec<String>,
    #[serde(default)]
    parents: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    case_id: String,
    evidence: BTreeMap<String, String>,
}

pub fn parse_network(text: &str) -> Result<NetworkDocument, ParseError> {
    let raw: RawNetwork = serde_json::from_str(text)?;
    if raw.format_version != FORMAT_VERSION {
        return Err(ParseError::Version(raw.format_version));
    }
    let mut index = BTreeMap::new();
    for (i, v) in raw.variables.iter().enumerate() {
        if index.insert(v.name.as_str(), VarId(i)).is_some() {
            return Err(ParseError::semantic(&v.name, "declared twice"));
        }
    }
    if let Some(stray) = raw.cpts.keys().find(|k| !index.contains_key(k.as_str())) {
        return Err(ParseError::semantic(stray, "CPT given for an undeclared variable"));
    }

    let mut parents = Vec::with_capacity(raw.variables.len());
    for v in &raw.variables {
        let ids = v
            .parents
            .iter()
            .map(|p| {
                index
                    .get(p.as_str())
                    .copied()
                    .ok_or_else(|| ParseError::semantic(&v.name, format!("unknown parent {p:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        parents.push(ids);
    }
    let variables: Vec<Variable> = raw
        .variables
        .iter()
        .map(|v| Variable::new(v.name.as_str(), v.values.iter().map(String::as_str)))
        .collect();

    let mut cpts = Vec::with_capacity(variables.len());
    for (v, ps) in raw.variables.iter().zip(&parents) {
        let rows = raw
            .cpts
            .get(&v.name)
            .ok_or_else(|| ParseError::semantic(&v.name, "missing CPT"))?;
        let labels: Vec<&[String]> = ps.iter().map(|p| variables[p.0].values()).collect();
        let configs: usize = labels.iter().map(|l| l.len()).product();
        let mut columns = Vec::with_capacity(configs);
        let mut seen = BTreeSet::new();
        for config in 0..configs {
            let key = config_key(&labels, config);
            let column = rows
                .get(&key)
                .ok_or_else(|| ParseError::semantic(&v.name, format!("missing CPT column {key:?}")))?;
            seen.insert(key);
            columns.push(column.clone());
        }
        if let Some(extra) = rows.keys().find(|k| !seen.contains(*k)) {
            return Err(ParseError::semantic(
                &v.name,
                format!("CPT column {extra:?} matches no parent configuration"),
            ));
        }
        cpts.push(Cpt::new(columns));
    }

    let network = Network::new(variables, parents, cpts).map_err(|e| match e {
        ModelError::Invalid(violations) => ParseError::Invalid(violations),
        other => ParseError::Semantic {
            variable: String::new(),
            message: other.to_string(),
        },
    })?;
    Ok(NetworkDocument {
        format_version: raw.format_version,
        name: raw.name,
        description: raw.description,
        network,
    })
}

/// Parent configuration `config` as a CPT key; the first parent varies slowest.
fn config_key(labels: &[&[String]], mut config: usize) -> String {
    let mut parts = vec![""; labels.len()];
    for (k, l) in labels.iter().enumerate().rev() {
        parts[k] = l[config % l.len()].as_str();
        config /= l.len();
    }
    parts.join(",")
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Shortest decimal text that reads back to the same `f64`.
pub fn number(x: f64) -> String {
    serde_json::to_string(&x).expect("finite numbers serialize")
}

/// Writes `doc` in the network file format; parsing the result gives back an
/// equal document.
pub fn serialize_network(doc: &NetworkDocument) -> String {
    let net = &doc.network;
    let mut out = String::new();
    let _ = writeln!(out, "{{");
    let _ = writeln!(out, "  \"format_version\": {},", quote(&doc.format_version));
    if let Some(name) = &doc.name {
        let _ = writeln!(out, "  \"name\": {},", quote(name));
    }
    if let Some(description) = &doc.description {
        let _ = writeln!(out, "  \"description\": {},", quote(description));
    }
    let _ = writeln!(out, "  \"variables\": [");
    for id in net.ids() {
        let v = net.variable(id);
        let values: Vec<String> = v.values().iter().map(|s| quote(s)).collect();
        let _ = write!(
            out,
            "    {{\"name\": {}, \"values\": [{}]",
            quote(v.name()),
            values.join(", ")
        );
        if !net.parents(id).is_empty() {
            let parents: Vec<String> = net.parents(id).iter().map(|&p| quote(net.variable(p).name())).collect();
            let _ = write!(out, ", \"parents\": [{}]", parents.join(", "));
        }
        let comma = if id.0 + 1 < net.len() { "," } else { "" };
        let _ = writeln!(out, "}}{comma}");
    }
    let _ = writeln!(out, "  ],");
    let _ = writeln!(out, "  \"cpts\": {{");
    for id in net.ids() {
        let _ = writeln!(out, "    {}: {{", quote(net.variable(id).name()));
        let columns = net.cpt(id).columns();
        for (k, column) in columns.iter().enumerate() {
            let probs: Vec<String> = column.iter().map(|&p| number(p)).collect();
            let comma = if k + 1 < columns.len() { "," } else { "" };
            let _ = writeln!(
                out,
                "      {}: [{}]{comma}",
                quote(&net.config_label(id, k)),
                probs.join(", ")
            );
        }
        let comma = if id.0 + 1 < net.len() { "," } else { "" };
        let _ = writeln!(out, "    }}{comma}");
    }
    let _ = writeln!(out, "  }}");
    let _ = writeln!(out, "}}");
    out
}

pub fn parse_case(text: &str, net: &Network) -> Result<CaseDocument, ParseError> {
    let raw: RawCase = serde_json::from_str(text)?;
    let mut evidence = Evidence::new();
    for (name, value) in &raw.evidence {
        let id = net
            .find(name)
            .ok_or_else(|| ParseError::UnknownVariable(name.clone()))?;
        let index = net
            .variable(id)
            .value_index(value)
            .ok_or_else(|| ParseError::UnknownValue {
                variable: name.clone(),
                value: value.clone(),
            })?;
        evidence.observe(id, index).expect("object keys are unique");
    }
    Ok(CaseDocument {
        case_id: raw.case_id,
        evidence,
    })
}

/// Pretty-printed JSON with every object's keys sorted, newline-terminated.
pub fn write_document(doc: &Value) -> String {
    // serde_json's default map is ordered by key
    let mut text = serde_json::to_string_pretty(doc).expect("values serialize");
    text.push('\n');
    text
}

/// Reads a JSON document of any shape.
pub fn read_document(text: &str) -> Result<Value, ParseError> {
    Ok(serde_json::from_str(text)?)
}
