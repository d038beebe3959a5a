//! Minimum-variance portfolio application: ingest daily yield panels,
//! estimate the return vector R̂, covariance Q̂ and their joint sampling
//! covariance V̂, solve the long-only efficient-portfolio QP
//!
//! ```text
//!     min θ'Qθ   s.t.  R'θ = μ,  1'θ = 1,  θ ≥ 0
//! ```
//!
//! and invert the moment test over the weight simplex. The budget row
//! `1'θ = 1` involves no estimated coefficient, so it is enforced exactly
//! rather than tested; the return row and the k dual-feasibility rows are
//! the moments, giving a chi-square test with 1 + k degrees of freedom.

use crate::densela::{DenseMatrix, DenseVector};
use crate::exec;
use crate::inference::{
    grid_scan_threads, member, ConfidenceSet, ConfidenceSpec, InferenceError, ThetaConstraint,
};
use crate::kkt::{build_qp_system, EstimatedCoefficients, KktError, KktSystem};
use crate::qp::{solve_qp, QpError, QpProblem, QpSolution};
use crate::stats::{moments_influence_cov, sample_mean_cov, Rng, StatsError};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum PortfolioError {
    Io(std::io::Error),
    Parse { line: usize, msg: String },
    EmptyPanel,
    TooFewRows { need: usize, got: usize },
    MuOutOfRange { mu: f64, min: f64, max: f64 },
    PreconditionViolated(String),
    Qp(QpError),
    Kkt(KktError),
    Inference(InferenceError),
}

impl fmt::Display for PortfolioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortfolioError::Io(e) => write!(f, "io error: {e}"),
            PortfolioError::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            PortfolioError::EmptyPanel => write!(f, "no usable rows in the panel"),
            PortfolioError::TooFewRows { need, got } => {
                write!(f, "too few rows: need at least {need}, got {got}")
            }
            PortfolioError::MuOutOfRange { mu, min, max } => {
                write!(f, "target return {mu} outside the attainable range [{min}, {max}]")
            }
            PortfolioError::PreconditionViolated(msg) => write!(f, "precondition violated: {msg}"),
            PortfolioError::Qp(e) => write!(f, "{e}"),
            PortfolioError::Kkt(e) => write!(f, "{e}"),
            PortfolioError::Inference(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PortfolioError {}

impl From<std::io::Error> for PortfolioError {
    fn from(e: std::io::Error) -> Self {
        PortfolioError::Io(e)
    }
}

impl From<QpError> for PortfolioError {
    fn from(e: QpError) -> Self {
        PortfolioError::Qp(e)
    }
}

impl From<KktError> for PortfolioError {
    fn from(e: KktError) -> Self {
        PortfolioError::Kkt(e)
    }
}

impl From<InferenceError> for PortfolioError {
    fn from(e: InferenceError) -> Self {
        PortfolioError::Inference(e)
    }
}

impl From<StatsError> for PortfolioError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::TooFewRows { need, got } => PortfolioError::TooFewRows { need, got },
            StatsError::DomainError(msg) => PortfolioError::PreconditionViolated(msg),
        }
    }
}

/// Daily yields in percent per annum: strictly increasing dates, no missing
/// cells, one column per asset. `dropped_rows` counts input rows discarded
/// for missing or unparsable values.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub tickers: Vec<String>,
    pub values: DenseMatrix,
    pub dropped_rows: usize,
}

impl ReturnPanel {
    pub fn num_days(&self) -> usize {
        self.values.rows()
    }

    pub fn num_assets(&self) -> usize {
        self.values.cols()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (i, date) in self.dates.iter().enumerate() {
            out.push_str(date);
            for j in 0..self.num_assets() {
                out.push_str(&format!(",{:.6}", self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

fn looks_like_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, &c)| {
            if i == 4 || i == 7 {
                c == b'-'
            } else {
                c.is_ascii_digit()
            }
        })
}

/// Parse a `date,<ticker>,...` CSV; rows with missing or unparsable cells
/// are dropped and counted, duplicate dates keep the first occurrence.
pub fn parse_csv(text: &str) -> Result<ReturnPanel, PortfolioError> {
    let mut lines = text.lines().enumerate();
    let (header_line, header) = loop {
        match lines.next() {
            Some((i, l)) if !l.trim().is_empty() => break (i + 1, l.trim()),
            Some(_) => continue,
            None => return Err(PortfolioError::EmptyPanel),
        }
    };
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 2 || !fields[0].eq_ignore_ascii_case("date") {
        return Err(PortfolioError::Parse {
            line: header_line,
            msg: "header must be `date,<ticker1>,...`".into(),
        });
    }
    let tickers: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    let k = tickers.len();

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dropped = 0usize;
    for (_, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != k + 1 || !looks_like_iso_date(cells[0]) {
            dropped += 1;
            continue;
        }
        let mut vals = Vec::with_capacity(k);
        let mut ok = true;
        for cell in &cells[1..] {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => vals.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            rows.push((cells[0].to_string(), vals));
        } else {
            dropped += 1;
        }
    }
    if rows.is_empty() {
        return Err(PortfolioError::EmptyPanel);
    }
    // ISO dates sort lexically; enforce strictly increasing dates.
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut dates = Vec::with_capacity(rows.len());
    let mut data = Vec::with_capacity(rows.len() * k);
    for (date, vals) in rows {
        if dates.last() == Some(&date) {
            dropped += 1;
            continue;
        }
        dates.push(date);
        data.extend_from_slice(&vals);
    }
    let values = DenseMatrix::new(dates.len(), k, data);
    Ok(ReturnPanel { dates, tickers, values, dropped_rows: dropped })
}

pub fn ingest_csv(path: &Path) -> Result<ReturnPanel, PortfolioError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Point estimates for one target return: R̂ (percent), Q̂ (percent²), the
/// influence covariance V̂ of `(vec(Q̂), R̂)`, and the sample size.
#[derive(Debug, Clone)]
pub struct PortfolioInstance {
    pub r_hat: DenseVector,
    pub q_hat: DenseMatrix,
    pub v_hat: DenseMatrix,
    pub n: usize,
    pub mu: f64,
}

impl PortfolioInstance {
    pub fn new(
        r_hat: DenseVector,
        q_hat: DenseMatrix,
        v_hat: DenseMatrix,
        n: usize,
        mu: f64,
    ) -> Result<Self, PortfolioError> {
        let k = r_hat.len();
        if q_hat.rows() != k || q_hat.cols() != k {
            return Err(PortfolioError::PreconditionViolated(format!(
                "Q̂ is {}x{}, expected {k}x{k}",
                q_hat.rows(),
                q_hat.cols()
            )));
        }
        let dim = k * k + k;
        if v_hat.rows() != dim || v_hat.cols() != dim {
            return Err(PortfolioError::PreconditionViolated(format!(
                "V̂ is {}x{}, expected {dim}x{dim}",
                v_hat.rows(),
                v_hat.cols()
            )));
        }
        if q_hat.max_asymmetry() > 1e-8 * (1.0 + q_hat.max_abs()) {
            return Err(PortfolioError::PreconditionViolated("Q̂ not symmetric".into()));
        }
        let mut shifted = q_hat.symmetrized();
        for i in 0..k {
            shifted[(i, i)] += 1e-8 * (1.0 + q_hat.max_abs());
        }
        if shifted.cholesky().is_err() {
            return Err(PortfolioError::PreconditionViolated("Q̂ not PSD".into()));
        }
        let (min_r, max_r) = r_hat
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        if mu < min_r - 1e-12 || mu > max_r + 1e-12 {
            return Err(PortfolioError::MuOutOfRange { mu, min: min_r, max: max_r });
        }
        Ok(Self { r_hat, q_hat, v_hat, n, mu })
    }

    pub fn num_assets(&self) -> usize {
        self.r_hat.len()
    }
}

/// Estimate an instance from a panel: column means, (n-1)-denominator
/// covariance, and the influence-function covariance of `(vec(Q̂), R̂)`.
pub fn estimate_instance(panel: &ReturnPanel, mu: f64) -> Result<PortfolioInstance, PortfolioError> {
    estimate_instance_scaled(panel, mu, 1.0)
}

/// Like [`estimate_instance`], with Q̂ multiplied by `annualize_factor` and
/// V̂ rescaled to match (the vec(Q̂) block by factor², the cross block by
/// factor). Yields quoted as annual percent levels use factor 1.
pub fn estimate_instance_scaled(
    panel: &ReturnPanel,
    mu: f64,
    annualize_factor: f64,
) -> Result<PortfolioInstance, PortfolioError> {
    let k = panel.num_assets();
    let t = panel.num_days();
    if t < k + 2 {
        return Err(PortfolioError::TooFewRows { need: k + 2, got: t });
    }
    let (r_hat, cov) = sample_mean_cov(&panel.values)?;
    let q_hat = cov.scaled(annualize_factor);
    let mut v_hat = moments_influence_cov(&panel.values)?;
    let kk = k * k;
    for i in 0..(kk + k) {
        for j in 0..(kk + k) {
            let fi = if i < kk { annualize_factor } else { 1.0 };
            let fj = if j < kk { annualize_factor } else { 1.0 };
            v_hat[(i, j)] *= fi * fj;
        }
    }
    PortfolioInstance::new(r_hat, q_hat, v_hat, t, mu)
}

/// The long-only efficient-portfolio QP for an instance. `min ½θ'Q̂θ` has
/// the same minimizers as `min θ'Q̂θ`, and its multipliers satisfy the
/// unscaled dual rows `λ_θ + λ_R R̂ + λ_F 1 - Q̂θ = 0`.
pub fn efficient_problem(inst: &PortfolioInstance) -> QpProblem {
    let k = inst.num_assets();
    let mut a_eq = DenseMatrix::zeros(2, k);
    for j in 0..k {
        a_eq[(0, j)] = inst.r_hat[j];
        a_eq[(1, j)] = 1.0;
    }
    QpProblem::new(
        inst.q_hat.clone(),
        DenseVector::zeros(k),
        Some((DenseMatrix::identity(k), DenseVector::zeros(k))),
        Some((a_eq, DenseVector::from([inst.mu, 1.0]))),
    )
    .expect("instance invariants guarantee a valid QP")
}

/// Solve for the minimum-variance weights at the instance's target return.
pub fn efficient_weights(inst: &PortfolioInstance) -> Result<QpSolution, PortfolioError> {
    let p = efficient_problem(inst);
    let sol = solve_qp(&p)?;
    if !sol.is_optimal() {
        return Err(PortfolioError::MuOutOfRange {
            mu: inst.mu,
            min: inst.r_hat.iter().copied().fold(f64::INFINITY, f64::min),
            max: inst.r_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(sol)
}

/// Build the instance's moment system: stacked coefficients
/// `(vec([I; R̂'; 1']), b̂, ĉ, vec(Q̂))` with R̂ and Q̂ stochastic, and the
/// influence covariance embedded at their positions.
pub fn build_instance_system(
    inst: &PortfolioInstance,
) -> Result<(QpProblem, KktSystem, EstimatedCoefficients), PortfolioError> {
    let k = inst.num_assets();
    let m = k + 2;
    let dim = m * k + m + k + k * k;
    let q_off = m * k + m + k;
    let mut point = DenseVector::zeros(dim);
    let mut mask = vec![false; dim];
    for j in 0..k {
        point[j * m + j] = 1.0; // sign rows
        point[j * m + k] = inst.r_hat[j]; // return row
        mask[j * m + k] = true;
        point[j * m + k + 1] = 1.0; // budget row
    }
    point[m * k + k] = inst.mu;
    point[m * k + k + 1] = 1.0;
    for j in 0..k {
        for i in 0..k {
            point[q_off + j * k + i] = inst.q_hat[(i, j)];
            mask[q_off + j * k + i] = true;
        }
    }
    // Influence ordering is (vec(Q̂), R̂); map into the stacked positions.
    let influence_to_stacked = |idx: usize| -> usize {
        if idx < k * k {
            q_off + idx
        } else {
            (idx - k * k) * m + k
        }
    };
    let mut v_full = DenseMatrix::zeros(dim, dim);
    for i in 0..(k * k + k) {
        for j in 0..(k * k + k) {
            v_full[(influence_to_stacked(i), influence_to_stacked(j))] = inst.v_hat[(i, j)];
        }
    }
    let problem = efficient_problem(inst);
    let est = EstimatedCoefficients::new(point, v_full, inst.n, mask)?;
    let sys = build_qp_system(&problem, &est)?;
    Ok((problem, sys, est))
}

fn simplex_spec(inst: &PortfolioInstance, alpha: f64, grid_step: f64, df: usize) -> ConfidenceSpec {
    let k = inst.num_assets();
    let mut constraints = vec![ThetaConstraint::eq(
        DenseVector::new(vec![1.0; k]),
        1.0,
    )];
    for j in 0..k {
        let mut e = DenseVector::zeros(k);
        e[j] = 1.0;
        constraints.push(ThetaConstraint::ge(e, 0.0));
    }
    ConfidenceSpec {
        alpha,
        df,
        theta_box: vec![(0.0, 1.0); k],
        grid_step,
        extra_theta_constraints: constraints,
    }
}

/// A confidence set over the weight simplex, plus the rejected boundary
/// shell (grid neighbors of accepted points) for clean contour plotting.
#[derive(Debug, Clone)]
pub struct PortfolioConfidenceSet {
    pub set: ConfidenceSet,
    pub boundary: Vec<(DenseVector, f64)>,
}

pub fn portfolio_cs(
    inst: &PortfolioInstance,
    alpha: f64,
    grid_step: f64,
) -> Result<PortfolioConfidenceSet, PortfolioError> {
    portfolio_cs_threads(inst, alpha, grid_step, exec::default_threads())
}

pub fn portfolio_cs_threads(
    inst: &PortfolioInstance,
    alpha: f64,
    grid_step: f64,
    threads: usize,
) -> Result<PortfolioConfidenceSet, PortfolioError> {
    let k = inst.num_assets();
    let (_, sys, est) = build_instance_system(inst)?;
    let spec = simplex_spec(inst, alpha, grid_step, sys.df);
    let set = grid_scan_threads(&sys, &est, &spec, threads)?;

    // Boundary shell: rejected simplex points one step from an accepted
    // point along the free coordinates (the last weight is pinned by the
    // budget constraint).
    let to_index = |theta: &DenseVector| -> Vec<i64> {
        (0..k - 1).map(|j| (theta[j] / grid_step).round() as i64).collect()
    };
    let accepted_idx: BTreeSet<Vec<i64>> =
        set.accepted.iter().map(|(t, _)| to_index(t)).collect();
    let mut shell_idx: BTreeSet<Vec<i64>> = BTreeSet::new();
    for idx in &accepted_idx {
        for dim in 0..(k - 1) {
            for delta in [-1i64, 1] {
                let mut nb = idx.clone();
                nb[dim] += delta;
                if accepted_idx.contains(&nb) || shell_idx.contains(&nb) {
                    continue;
                }
                // Reconstruct θ and keep it only if it lies on the simplex.
                let mut theta = DenseVector::zeros(k);
                let mut sum = 0.0;
                let mut valid = true;
                for j in 0..(k - 1) {
                    let v = nb[j] as f64 * grid_step;
                    if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                        valid = false;
                        break;
                    }
                    theta[j] = v.clamp(0.0, 1.0);
                    sum += theta[j];
                }
                if !valid || sum > 1.0 + 1e-9 {
                    continue;
                }
                theta[k - 1] = 1.0 - sum;
                shell_idx.insert(nb.clone());
            }
        }
    }
    let mut boundary = Vec::with_capacity(shell_idx.len());
    for idx in shell_idx {
        let mut theta = DenseVector::zeros(k);
        let mut sum = 0.0;
        for j in 0..(k - 1) {
            theta[j] = (idx[j] as f64 * grid_step).clamp(0.0, 1.0);
            sum += theta[j];
        }
        let last = 1.0 - sum;
        theta[k - 1] = if last.abs() < 1e-12 { 0.0 } else { last };
        let (_, stat) = member(&sys, &est, &spec, &theta)?;
        boundary.push((theta, stat));
    }
    Ok(PortfolioConfidenceSet { set, boundary })
}

/// Test whether previously chosen weights stay acceptable under new data.
pub fn retest_weights(
    inst_new: &PortfolioInstance,
    theta_old: &DenseVector,
    alpha: f64,
) -> Result<(bool, f64), PortfolioError> {
    let k = inst_new.num_assets();
    if theta_old.len() != k {
        return Err(PortfolioError::PreconditionViolated(format!(
            "theta has {} weights, instance has {k} assets",
            theta_old.len()
        )));
    }
    let sum: f64 = theta_old.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(PortfolioError::PreconditionViolated(format!(
            "weights sum to {sum}, not 1"
        )));
    }
    if theta_old.iter().any(|&t| t < -1e-9) {
        return Err(PortfolioError::PreconditionViolated("negative weight".into()));
    }
    let (_, sys, est) = build_instance_system(inst_new)?;
    let spec = simplex_spec(inst_new, alpha, 0.01, sys.df);
    Ok(member(&sys, &est, &spec, theta_old)?)
}

/// Published point estimates for the three-asset yield application.
pub fn reference_r_hat() -> DenseVector {
    DenseVector::from([2.2550, 2.5137, 3.9256])
}

pub fn reference_q_hat() -> DenseMatrix {
    DenseMatrix::from_rows(&[
        vec![0.5976, 0.2336, 0.2758],
        vec![0.2336, 0.2674, 0.2285],
        vec![0.2758, 0.2285, 0.4488],
    ])
}

/// Synthetic daily panel whose sample moments reproduce
/// [`reference_r_hat`]/[`reference_q_hat`] to four decimals: whitened
/// Gaussian noise is recolored by the Cholesky factor of the target
/// covariance, so the sample mean and covariance match by construction (up
/// to the 6-decimal rounding of the stored values).
pub fn fixture_panel() -> ReturnPanel {
    let t = 1902usize; // trading days, 2010-01-04 through 2017-07-31
    let k = 3usize;
    let r_target = reference_r_hat();
    let lq = reference_q_hat().cholesky().expect("reference covariance is PD");

    let mut rng = Rng::new(0x2010_0104);
    let mut z = DenseMatrix::zeros(t, k);
    for i in 0..t {
        for j in 0..k {
            z[(i, j)] = rng.normal();
        }
    }
    let (mean, cov) = sample_mean_cov(&z).expect("t >= 2");
    let ls = cov.cholesky().expect("sample covariance of Gaussian noise is PD");

    let mut values = DenseMatrix::zeros(t, k);
    for i in 0..t {
        // Whiten: y = Ls⁻¹ (z - mean) by forward substitution.
        let mut y = [0.0f64; 3];
        for a in 0..k {
            let mut s = z[(i, a)] - mean[a];
            for b in 0..a {
                s -= ls[(a, b)] * y[b];
            }
            y[a] = s / ls[(a, a)];
        }
        // Recolor to the target covariance and shift to the target mean.
        for a in 0..k {
            let mut v = r_target[a];
            for b in 0..=a {
                v += lq[(a, b)] * y[b];
            }
            values[(i, a)] = (v * 1e6).round() / 1e6;
        }
    }

    ReturnPanel {
        dates: weekday_dates(2010, 1, 4, t),
        tickers: vec!["TBILL10Y".into(), "AAA".into(), "BBB".into()],
        values,
        dropped_rows: 0,
    }
}

/// `count` consecutive weekdays starting from a given date (which must be a
/// weekday itself), formatted ISO.
fn weekday_dates(mut year: i32, mut month: u32, mut day: u32, count: usize) -> Vec<String> {
    fn days_in_month(y: i32, m: u32) -> u32 {
        match m {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            _ => {
                if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 {
                    29
                } else {
                    28
                }
            }
        }
    }
    // 2010-01-04 is a Monday; track the weekday offset from it.
    let mut weekday = 0u32; // 0 = Monday
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if weekday < 5 {
            out.push(format!("{year:04}-{month:02}-{day:02}"));
        }
        day += 1;
        if day > days_in_month(year, month) {
            day = 1;
            month += 1;
            if month > 12 {
                month = 1;
                year += 1;
            }
        }
        weekday = (weekday + 1) % 7;
    }
    out
}
