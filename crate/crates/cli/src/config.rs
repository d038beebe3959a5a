//! Flat `key = value` problem configs with whitespace-separated matrix
//! blocks. A key with nothing after `=` opens a block: the following lines
//! are rows of numbers until the next key line. `#` starts a comment.
//!
//! See `configs/lp_example.cfg` and `configs/qp_example.cfg` at the
//! repository root for annotated examples of every key.

use mpinfer::densela::{DenseMatrix, DenseVector};
use mpinfer::inference::{ConstraintSense, ThetaConstraint};
use mpinfer::kkt::EstimatedCoefficients;
use mpinfer::lp::LpProblem;
use mpinfer::qp::QpProblem;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl ConfigError {
    fn new(field: &str, msg: impl Into<String>) -> Self {
        Self { field: field.to_string(), msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Lp,
    Qp,
}

/// Which program the config describes, plus everything inference needs.
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub lp: Option<LpProblem>,
    pub qp: Option<QpProblem>,
    pub est: EstimatedCoefficients,
    pub alpha: f64,
    pub theta_box: Option<Vec<(f64, f64)>>, // None = auto
    pub grid_step: f64,
    pub constraints: Vec<ThetaConstraint>,
    pub threads: Option<usize>,
}

/// Raw parse of the file: scalar values and numeric blocks.
struct RawConfig {
    values: BTreeMap<String, String>,
    blocks: BTreeMap<String, Vec<Vec<f64>>>,
    constraints: Vec<String>,
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut values = BTreeMap::new();
    let mut blocks: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut constraints = Vec::new();
    let mut open_block: Option<String> = None;

    for raw_line in text.lines() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(eq) = line.find('=') {
            let key = line[..eq].trim();
            // `=` can also appear as a constraint sense; only treat the line
            // as a key assignment when the key is a single identifier.
            let is_key = !key.is_empty()
                && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !key.chars().next().unwrap().is_ascii_digit();
            if is_key {
                let value = line[eq + 1..].trim();
                if key == "constraint" {
                    constraints.push(value.to_string());
                    open_block = None;
                } else if value.is_empty() {
                    if blocks.contains_key(key) || values.contains_key(key) {
                        return Err(ConfigError::new(key, "duplicate key"));
                    }
                    blocks.insert(key.to_string(), Vec::new());
                    open_block = Some(key.to_string());
                } else {
                    if blocks.contains_key(key) || values.contains_key(key) {
                        return Err(ConfigError::new(key, "duplicate key"));
                    }
                    values.insert(key.to_string(), value.to_string());
                    open_block = None;
                }
                continue;
            }
        }
        // Not a key line: must be a numeric row of the open block.
        let Some(block) = &open_block else {
            return Err(ConfigError::new("<line>", format!("unexpected line `{line}`")));
        };
        let row: Result<Vec<f64>, _> =
            line.split_whitespace().map(|t| t.parse::<f64>()).collect();
        match row {
            Ok(r) if !r.is_empty() => blocks.get_mut(block).unwrap().push(r),
            _ => {
                return Err(ConfigError::new(
                    block,
                    format!("block row `{line}` is not numeric"),
                ))
            }
        }
    }
    Ok(RawConfig { values, blocks, constraints })
}

impl RawConfig {
    fn take_value(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn require_value(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take_value(key).ok_or_else(|| ConfigError::new(key, "missing required key"))
    }

    fn parse_scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ConfigError> {
        let raw = self.require_value(key)?;
        raw.parse::<T>().map_err(|_| ConfigError::new(key, format!("cannot parse `{raw}`")))
    }

    /// A vector given inline (`b = 4 1`) or as a one-block column/row.
    fn take_vector(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        if let Some(raw) = self.take_value(key) {
            let v: Result<Vec<f64>, _> =
                raw.split_whitespace().map(|t| t.parse::<f64>()).collect();
            return match v {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(ConfigError::new(key, format!("cannot parse vector `{raw}`"))),
            };
        }
        if let Some(rows) = self.blocks.remove(key) {
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            if flat.is_empty() {
                return Err(ConfigError::new(key, "empty block"));
            }
            return Ok(Some(flat));
        }
        Ok(None)
    }

    fn require_vector(&mut self, key: &str, len: usize) -> Result<Vec<f64>, ConfigError> {
        let v = self
            .take_vector(key)?
            .ok_or_else(|| ConfigError::new(key, "missing required key"))?;
        if v.len() != len {
            return Err(ConfigError::new(key, format!("expected {len} numbers, got {}", v.len())));
        }
        Ok(v)
    }

    fn require_matrix(&mut self, key: &str, rows: usize, cols: usize) -> Result<DenseMatrix, ConfigError> {
        if let Some(block) = self.blocks.remove(key) {
            if block.len() != rows {
                return Err(ConfigError::new(key, format!("expected {rows} rows, got {}", block.len())));
            }
            for (i, r) in block.iter().enumerate() {
                if r.len() != cols {
                    return Err(ConfigError::new(
                        key,
                        format!("row {} has {} entries, expected {cols}", i + 1, r.len()),
                    ));
                }
            }
            return Ok(DenseMatrix::new(rows, cols, block.into_iter().flatten().collect()));
        }
        // Inline fallback: rows*cols numbers on one line, row-major.
        let flat = self.require_vector(key, rows * cols)?;
        Ok(DenseMatrix::new(rows, cols, flat))
    }
}

fn parse_constraint(raw: &str, k: usize, index: usize) -> Result<ThetaConstraint, ConfigError> {
    let field = format!("constraint[{index}]");
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.len() != k + 2 {
        return Err(ConfigError::new(
            &field,
            format!("expected `{k} coefficients, sense, rhs`, got `{raw}`"),
        ));
    }
    let coeffs: Result<Vec<f64>, _> = tokens[..k].iter().map(|t| t.parse::<f64>()).collect();
    let coeffs = coeffs.map_err(|_| ConfigError::new(&field, "bad coefficient"))?;
    let rhs: f64 =
        tokens[k + 1].parse().map_err(|_| ConfigError::new(&field, "bad right-hand side"))?;
    let sense = match tokens[k] {
        "=" | "==" => ConstraintSense::Eq,
        ">=" => ConstraintSense::Ge,
        "<=" => ConstraintSense::Le,
        other => return Err(ConfigError::new(&field, format!("unknown sense `{other}`"))),
    };
    Ok(ThetaConstraint { coeffs: DenseVector::new(coeffs), sense, rhs })
}

/// Stacked index ranges of each named block for the mask shorthand.
fn block_indices(kind: ProblemKind, m_rows: &[(String, usize)], k: usize, name: &str) -> Option<Vec<usize>> {
    // m_rows: (block name, row count) in stacked row order.
    let m: usize = m_rows.iter().map(|(_, c)| c).sum();
    let mut row_start = 0usize;
    let mut a_rows: Option<(usize, usize)> = None;
    for (bname, count) in m_rows {
        if bname == name {
            a_rows = Some((row_start, *count));
        }
        row_start += count;
    }
    if let Some((start, count)) = a_rows {
        // Columns of A touching those rows, plus the aligned b entries for
        // b-block names.
        if name.starts_with('A') || name == "A" {
            let mut idx = Vec::new();
            for j in 0..k {
                for i in start..start + count {
                    idx.push(j * m + i);
                }
            }
            return Some(idx);
        }
    }
    let b_off = m * k;
    let c_off = m * k + m;
    let q_off = m * k + m + k;
    match (kind, name) {
        (_, "b") => Some((b_off..b_off + m).collect()),
        (ProblemKind::Qp, "b_ineq") => {
            let count = m_rows.iter().find(|(n, _)| n == "A_ineq").map(|(_, c)| *c).unwrap_or(0);
            Some((b_off..b_off + count).collect())
        }
        (ProblemKind::Qp, "b_eq") => {
            let ineq = m_rows.iter().find(|(n, _)| n == "A_ineq").map(|(_, c)| *c).unwrap_or(0);
            Some((b_off + ineq..b_off + m).collect())
        }
        (_, "c") => Some((c_off..c_off + k).collect()),
        (ProblemKind::Qp, "Q") => Some((q_off..q_off + k * k).collect()),
        _ => None,
    }
}

/// Parse and validate a problem config file.
pub fn load_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.parent())
}

pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<ProblemConfig, ConfigError> {
    let mut raw = parse_raw(text)?;
    let kind = match raw.require_value("kind")?.as_str() {
        "lp" => ProblemKind::Lp,
        "qp" => ProblemKind::Qp,
        other => return Err(ConfigError::new("kind", format!("must be lp or qp, got `{other}`"))),
    };
    let k: usize = raw.parse_scalar("k")?;
    if k == 0 {
        return Err(ConfigError::new("k", "must be at least 1"));
    }

    let (lp, qp, stacked_len, m_rows) = match kind {
        ProblemKind::Lp => {
            let m: usize = raw.parse_scalar("m")?;
            if m == 0 {
                return Err(ConfigError::new("m", "must be at least 1"));
            }
            let a = raw.require_matrix("A", m, k)?;
            let b = DenseVector::new(raw.require_vector("b", m)?);
            let c = DenseVector::new(raw.require_vector("c", k)?);
            let nonneg = match raw.take_value("nonneg").as_deref() {
                None | Some("false") => false,
                Some("true") => true,
                Some(other) => {
                    return Err(ConfigError::new("nonneg", format!("must be true or false, got `{other}`")))
                }
            };
            let lp = LpProblem::new(a, b, c, nonneg)
                .map_err(|e| ConfigError::new("A", e.to_string()))?;
            let rows = vec![("A".to_string(), m)];
            (Some(lp), None, m * k + m + k, rows)
        }
        ProblemKind::Qp => {
            let m_ineq: usize = raw.parse_scalar("m_ineq")?;
            let m_eq: usize = raw.parse_scalar("m_eq")?;
            let q = raw.require_matrix("Q", k, k)?;
            let c = DenseVector::new(raw.require_vector("c", k)?);
            let ineq = if m_ineq > 0 {
                let a = raw.require_matrix("A_ineq", m_ineq, k)?;
                let b = DenseVector::new(raw.require_vector("b_ineq", m_ineq)?);
                Some((a, b))
            } else {
                None
            };
            let eq = if m_eq > 0 {
                let a = raw.require_matrix("A_eq", m_eq, k)?;
                let b = DenseVector::new(raw.require_vector("b_eq", m_eq)?);
                Some((a, b))
            } else {
                None
            };
            let qp = QpProblem::new(q, c, ineq, eq)
                .map_err(|e| ConfigError::new("Q", e.to_string()))?;
            let m = m_ineq + m_eq;
            let rows = vec![("A_ineq".to_string(), m_ineq), ("A_eq".to_string(), m_eq)];
            (None, Some(qp), m * k + m + k + k * k, rows)
        }
    };

    // Stacked coefficient point from the problem data.
    let point = match (&lp, &qp) {
        (Some(p), _) => {
            let mut v = p.a.vec().as_slice().to_vec();
            v.extend_from_slice(p.b.as_slice());
            v.extend_from_slice(p.c.as_slice());
            v
        }
        (_, Some(p)) => {
            let m = p.num_ineq() + p.num_eq();
            let mut stacked = DenseMatrix::zeros(m.max(1), k);
            for i in 0..p.num_ineq() {
                for j in 0..k {
                    stacked[(i, j)] = p.ineq_row(i)[j];
                }
            }
            for e in 0..p.num_eq() {
                for j in 0..k {
                    stacked[(p.num_ineq() + e, j)] = p.eq_row(e)[j];
                }
            }
            let mut v = if m > 0 { stacked.vec().as_slice().to_vec() } else { Vec::new() };
            v.extend_from_slice(p.b_ineq.as_slice());
            v.extend_from_slice(p.b_eq.as_slice());
            v.extend_from_slice(p.c.as_slice());
            v.extend_from_slice(p.q.vec().as_slice());
            v
        }
        _ => unreachable!(),
    };
    debug_assert_eq!(point.len(), stacked_len);

    // Stochastic mask: `mask = 0/1...` over the stacked vector, or
    // `stochastic = <block names>`.
    let mask: Vec<bool> = if let Some(flat) = raw.take_vector("mask")? {
        if flat.len() != stacked_len {
            return Err(ConfigError::new(
                "mask",
                format!("expected {stacked_len} entries (stacked coefficients), got {}", flat.len()),
            ));
        }
        flat.iter().map(|&x| x != 0.0).collect()
    } else if let Some(names) = raw.take_value("stochastic") {
        let mut mask = vec![false; stacked_len];
        for name in names.split_whitespace() {
            let idx = block_indices(kind, &m_rows, k, name).ok_or_else(|| {
                ConfigError::new("stochastic", format!("unknown block `{name}`"))
            })?;
            for i in idx {
                mask[i] = true;
            }
        }
        mask
    } else {
        return Err(ConfigError::new("stochastic", "provide `stochastic = <blocks>` or `mask = ...`"));
    };
    let n_stoch = mask.iter().filter(|&&b| b).count();
    if n_stoch == 0 {
        return Err(ConfigError::new("stochastic", "at least one coefficient must be estimated"));
    }

    // V̂ over the stochastic entries, in stacked order.
    let v_small: DenseMatrix = if let Some(diag) = raw.take_vector("V_diag")? {
        if diag.len() != n_stoch {
            return Err(ConfigError::new(
                "V_diag",
                format!("expected {n_stoch} entries (one per stochastic coefficient), got {}", diag.len()),
            ));
        }
        DenseMatrix::from_diag(&diag)
    } else if raw.blocks.contains_key("V") || raw.values.contains_key("V") {
        raw.require_matrix("V", n_stoch, n_stoch)?
    } else if let Some(path) = raw.take_value("V_file") {
        let full = match base_dir {
            Some(dir) => dir.join(&path),
            None => std::path::PathBuf::from(&path),
        };
        let text = std::fs::read_to_string(&full).map_err(|e| {
            ConfigError::new("V_file", format!("cannot read {}: {e}", full.display()))
        })?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(|ch: char| ch == ',' || ch.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError::new("V_file", "non-numeric entry"))?;
        if rows.len() != n_stoch || rows.iter().any(|r| r.len() != n_stoch) {
            return Err(ConfigError::new(
                "V_file",
                format!("expected a {n_stoch}x{n_stoch} matrix"),
            ));
        }
        DenseMatrix::new(n_stoch, n_stoch, rows.into_iter().flatten().collect())
    } else {
        return Err(ConfigError::new("V", "provide `V =`, `V_diag =` or `V_file =`"));
    };

    // Embed into the full stacked covariance.
    let stoch_idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| if b { Some(i) } else { None })
        .collect();
    let mut v_full = DenseMatrix::zeros(stacked_len, stacked_len);
    for (a, &i) in stoch_idx.iter().enumerate() {
        for (b, &j) in stoch_idx.iter().enumerate() {
            v_full[(i, j)] = v_small[(a, b)];
        }
    }

    let n: usize = raw.parse_scalar("n")?;
    if n == 0 {
        return Err(ConfigError::new("n", "must be at least 1"));
    }
    let est = EstimatedCoefficients::new(DenseVector::new(point), v_full, n, mask)
        .map_err(|e| ConfigError::new("V", e.to_string()))?;

    let alpha: f64 = raw.parse_scalar("alpha")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConfigError::new("alpha", "must be strictly between 0 and 1"));
    }
    let grid_step: f64 = raw.parse_scalar("grid_step")?;
    if grid_step <= 0.0 {
        return Err(ConfigError::new("grid_step", "must be positive"));
    }

    let theta_box = match raw.take_value("theta_box") {
        None => None,
        Some(raw_box) if raw_box == "auto" => None,
        Some(raw_box) => {
            let vals: Result<Vec<f64>, _> =
                raw_box.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let vals = vals.map_err(|_| ConfigError::new("theta_box", "bad number"))?;
            if vals.len() != 2 * k {
                return Err(ConfigError::new(
                    "theta_box",
                    format!("expected {} numbers (lo hi per coordinate) or `auto`", 2 * k),
                ));
            }
            let pairs: Vec<(f64, f64)> =
                vals.chunks(2).map(|pair| (pair[0], pair[1])).collect();
            for (j, &(lo, hi)) in pairs.iter().enumerate() {
                if lo >= hi {
                    return Err(ConfigError::new(
                        "theta_box",
                        format!("coordinate {} has lower {lo} >= upper {hi}", j + 1),
                    ));
                }
            }
            Some(pairs)
        }
    };

    let constraints = raw
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| parse_constraint(c, k, i))
        .collect::<Result<Vec<_>, _>>()?;

    let threads = match raw.take_value("threads") {
        None => None,
        Some(t) => {
            let v: usize =
                t.parse().map_err(|_| ConfigError::new("threads", "must be an integer"))?;
            if v == 0 {
                None
            } else {
                Some(v)
            }
        }
    };

    // Leftover keys are typos.
    if let Some(key) = raw.values.keys().next() {
        return Err(ConfigError::new(key, "unknown key"));
    }
    if let Some(key) = raw.blocks.keys().next() {
        return Err(ConfigError::new(key, "unknown key"));
    }

    Ok(ProblemConfig {
        kind,
        lp,
        qp,
        est,
        alpha,
        theta_box,
        grid_step,
        constraints,
        threads,
    })
}
