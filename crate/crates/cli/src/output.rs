//! Deterministic number and file formatting: every float is written with 10
//! significant digits so repeated runs are byte-identical.

use mpinfer::DenseVector;
use std::fmt::Write as _;

/// 10 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        // Avoid the -0 wobble.
        return "0.000000000e0".to_string();
    }
    format!("{x:.9e}")
}

/// Tiny flat JSON object writer; values arrive pre-formatted.
pub struct JsonObject {
    body: String,
}

impl JsonObject {
    pub fn new() -> Self {
        Self { body: String::new() }
    }

    pub fn field_raw(&mut self, key: &str, value: &str) -> &mut Self {
        if !self.body.is_empty() {
            self.body.push_str(",\n");
        }
        let _ = write!(self.body, "  \"{key}\": {value}");
        self
    }

    pub fn field_str(&mut self, key: &str, value: &str) -> &mut Self {
        self.field_raw(key, &format!("\"{value}\""))
    }

    pub fn field_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.field_raw(key, &format!("\"{}\"", fmt_num(value)))
    }

    pub fn field_int(&mut self, key: &str, value: usize) -> &mut Self {
        self.field_raw(key, &value.to_string())
    }

    pub fn field_array(&mut self, key: &str, value: &DenseVector) -> &mut Self {
        let inner: Vec<String> =
            value.iter().map(|x| format!("\"{}\"", fmt_num(*x))).collect();
        self.field_raw(key, &format!("[{}]", inner.join(", ")))
    }

    pub fn finish(&self) -> String {
        format!("{{\n{}\n}}\n", self.body)
    }
}

/// CSV of evaluated grid points: `theta_1..theta_k,statistic,accepted`.
pub fn cs_points_csv(
    k: usize,
    accepted: &[(DenseVector, f64)],
    rejected: &[(DenseVector, f64)],
) -> String {
    let mut out = String::new();
    for j in 1..=k {
        if j > 1 {
            out.push(',');
        }
        let _ = write!(out, "theta_{j}");
    }
    out.push_str(",statistic,accepted\n");
    for (theta, stat) in accepted {
        for x in theta.iter() {
            let _ = write!(out, "{},", fmt_num(*x));
        }
        let _ = writeln!(out, "{},1", fmt_num(*stat));
    }
    for (theta, stat) in rejected {
        for x in theta.iter() {
            let _ = write!(out, "{},", fmt_num(*x));
        }
        let _ = writeln!(out, "{},0", fmt_num(*stat));
    }
    out
}

pub fn projection_csv(intervals: &[(f64, f64)]) -> String {
    let mut out = String::from("coordinate,lower,upper\n");
    for (j, (lo, hi)) in intervals.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", j + 1, fmt_num(*lo), fmt_num(*hi));
    }
    out
}
