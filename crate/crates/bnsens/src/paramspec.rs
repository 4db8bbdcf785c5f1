//! Text addressing of targets and parameters.
//!
//! A parameter is written `Var=value | Parent1=v1, Parent2=v2`; the bar and the
//! parent list are omitted for root variables. Whitespace is insignificant.
//! A target is `Var` or `Var=value`.

use bnsens_core::{Network, ParameterRef, VarId};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("malformed specification {0:?}")]
    Malformed(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("variable {variable}: unknown value {value:?}")]
    UnknownValue { variable: String, value: String },
    #[error("variable {variable}: parents are {expected}, got {got}")]
    Parents {
        variable: String,
        expected: String,
        got: String,
    },
}

/// A variable of interest, optionally narrowed to one of its values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target {
    pub variable: VarId,
    pub focus: Option<usize>,
}

fn strip(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn lookup(net: &Network, name: &str) -> Result<VarId, SpecError> {
    net.find(name)
        .ok_or_else(|| SpecError::UnknownVariable(name.to_owned()))
}

fn value_of(net: &Network, id: VarId, value: &str) -> Result<usize, SpecError> {
    net.variable(id)
        .value_index(value)
        .ok_or_else(|| SpecError::UnknownValue {
            variable: net.variable(id).name().to_owned(),
            value: value.to_owned(),
        })
}

fn assignment(net: &Network, text: &str, whole: &str) -> Result<(VarId, usize), SpecError> {
    let (name, value) = text
        .split_once('=')
        .filter(|(n, v)| !n.is_empty() && !v.is_empty())
        .ok_or_else(|| SpecError::Malformed(whole.to_owned()))?;
    let id = lookup(net, name)?;
    Ok((id, value_of(net, id, value)?))
}

pub fn parse_target(net: &Network, text: &str) -> Result<Target, SpecError> {
    let compact = strip(text);
    if compact.is_empty() || compact.contains('|') || compact.contains(',') {
        return Err(SpecError::Malformed(text.to_owned()));
    }
    if compact.contains('=') {
        let (variable, value) = assignment(net, &compact, text)?;
        Ok(Target {
            variable,
            focus: Some(value),
        })
    } else {
        Ok(Target {
            variable: lookup(net, &compact)?,
            focus: None,
        })
    }
}

pub fn format_target(net: &Network, target: Target) -> String {
    let var = net.variable(target.variable);
    match target.focus {
        Some(v) => format!("{}={}", var.name(), var.values()[v]),
        None => var.name().to_owned(),
    }
}

/// Parent assignments may come in any order but must cover every parent once.
pub fn parse_parameter(net: &Network, text: &str) -> Result<ParameterRef, SpecError> {
    let compact = strip(text);
    let (head, tail) = match compact.split_once('|') {
        Some((h, t)) => (h, Some(t)),
        None => (compact.as_str(), None),
    };
    let (variable, value) = assignment(net, head, text)?;
    let parents = net.parents(variable);
    let mut config: Vec<Option<usize>> = vec![None; parents.len()];
    let given: Vec<&str> = match tail {
        Some(t) => t.split(',').collect(),
        None => Vec::new(),
    };
    let mismatch = || SpecError::Parents {
        variable: net.variable(variable).name().to_owned(),
        expected: if parents.is_empty() {
            String::from("none")
        } else {
            parents
                .iter()
                .map(|&p| net.variable(p).name())
                .collect::<Vec<_>>()
                .join(", ")
        },
        got: tail.filter(|t| !t.is_empty()).unwrap_or("none").to_owned(),
    };
    for part in given {
        let (parent, v) = assignment(net, part, text)?;
        let slot = parents.iter().position(|&p| p == parent).ok_or_else(mismatch)?;
        if config[slot].replace(v).is_some() {
            return Err(mismatch());
        }
    }
    let config: Vec<usize> = config.into_iter().collect::<Option<_>>().ok_or_else(mismatch)?;
    Ok(ParameterRef::new(variable, value, config))
}

/// Canonical text: declared parent order, single spaces around `|` and after commas.
pub fn format_parameter(net: &Network, p: &ParameterRef) -> String {
    let var = net.variable(p.variable);
    let head = format!("{}={}", var.name(), var.values()[p.value]);
    if p.parent_config.is_empty() {
        return head;
    }
    let parents: Vec<String> = net
        .parents(p.variable)
        .iter()
        .zip(&p.parent_config)
        .map(|(&q, &v)| format!("{}={}", net.variable(q).name(), net.variable(q).values()[v]))
        .collect();
    format!("{head} | {}", parents.join(", "))
}
