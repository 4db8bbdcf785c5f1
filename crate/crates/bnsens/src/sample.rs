//! Sensitivity functions tabulated over `[0, 1]` as CSV.

use std::fmt::Write as _;

use bnsens_core::sensitivity::POLE_TOLERANCE;
use bnsens_core::FunctionBundle;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("invalid steps {0}: at least 2 rows are needed")]
    InvalidSteps(usize),
}

/// Header `x,<value1>,...,<valuek>` followed by `steps` equispaced rows. If any
/// row falls on a pole, its value cells are empty and a trailing `degenerate`
/// column marks it.
pub fn sample_csv(labels: &[String], bundle: &FunctionBundle, steps: usize) -> Result<String, SampleError> {
    if steps < 2 {
        return Err(SampleError::InvalidSteps(steps));
    }
    let last = (steps - 1) as f64;
    let xs: Vec<f64> = (0..steps).map(|k| k as f64 / last).collect();
    let is_pole = |x: f64| bundle.denominator().at(x).abs() <= POLE_TOLERANCE;
    let marker = xs.iter().any(|&x| is_pole(x));

    let mut out = String::from("x");
    for label in labels {
        out.push(',');
        out.push_str(&csv_field(label));
    }
    if marker {
        out.push_str(",degenerate");
    }
    out.push('\n');
    for x in xs {
        let _ = write!(out, "{x}");
        if is_pole(x) {
            out.push_str(&",".repeat(labels.len()));
            out.push_str(",pole");
        } else {
            for f in bundle.functions() {
                let y = f.eval(x).expect("pole rows handled above");
                let _ = write!(out, ",{y}");
            }
            if marker {
                out.push(',');
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
