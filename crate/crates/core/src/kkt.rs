//! Stochastic moment systems built from a program's optimality conditions.
//!
//! For an LP `max c'θ s.t. Aθ ≤ b` the optimality conditions in slack form
//! are
//!
//! ```text
//!     Aθ + s - b = 0        (primal rows)
//!     A'λ - c   = 0         (dual rows)
//!     0 ≤ λᵢ ⊥ sᵢ ≥ 0       (complementarity)
//! ```
//!
//! and for a QP `min c'θ + ½θ'Qθ s.t. Aθ ≥ b` the analogous system is
//! `Aθ - b - s = 0`, `A'λ - c - Qθ = 0`. Every row is affine in the stacked
//! coefficient vector `(vec(A), b, c[, vec(Q)])`, so when some coefficients
//! are estimated the rows split into *moments* (touching at least one
//! estimated entry, tested statistically) and *hard constraints* (fully
//! deterministic, enforced exactly while profiling). The degrees of freedom
//! of the resulting chi-square test equal the number of moment rows.
//!
//! Rows that pin a parameter's own sign (`θⱼ ≥ 0`) get no auxiliary slack:
//! θⱼ doubles as the slack, and the complementarity pair references the θ
//! coordinate directly.

use crate::densela::{DenseMatrix, DenseVector};
use crate::lp::LpProblem;
use crate::qp::QpProblem;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum KktError {
    DimensionMismatch { what: String },
    /// No optimality row touches an estimated coefficient.
    EmptyMoments,
    InvalidVhat(String),
    /// A deterministic entry of `est.point` disagrees with the problem data.
    CoefficientMismatch { index: usize },
}

impl fmt::Display for KktError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KktError::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
            KktError::EmptyMoments => {
                write!(f, "no stochastic coefficient: nothing to test")
            }
            KktError::InvalidVhat(msg) => write!(f, "invalid V_hat: {msg}"),
            KktError::CoefficientMismatch { index } => {
                write!(f, "deterministic coefficient {index} disagrees with problem data")
            }
        }
    }
}

impl std::error::Error for KktError {}

/// Point estimates of the stacked coefficient vector together with the
/// asymptotic covariance of `√n (estimate - truth)` and a per-entry flag for
/// which entries are estimated (`true`) versus known constants (`false`).
#[derive(Debug, Clone)]
pub struct EstimatedCoefficients {
    pub point: DenseVector,
    pub v_hat: DenseMatrix,
    pub n: usize,
    pub stochastic_mask: Vec<bool>,
}

impl EstimatedCoefficients {
    pub fn new(
        point: DenseVector,
        v_hat: DenseMatrix,
        n: usize,
        stochastic_mask: Vec<bool>,
    ) -> Result<Self, KktError> {
        let dim = point.len();
        if stochastic_mask.len() != dim {
            return Err(KktError::DimensionMismatch {
                what: format!("mask length {} != point length {}", stochastic_mask.len(), dim),
            });
        }
        if v_hat.rows() != dim || v_hat.cols() != dim {
            return Err(KktError::DimensionMismatch {
                what: format!("V_hat is {}x{}, expected {dim}x{dim}", v_hat.rows(), v_hat.cols()),
            });
        }
        let asym = v_hat.max_asymmetry();
        if asym > 1e-8 * (1.0 + v_hat.max_abs()) {
            return Err(KktError::InvalidVhat(format!("asymmetry {asym:.3e}")));
        }
        for (i, &stoch) in stochastic_mask.iter().enumerate() {
            if !stoch {
                for j in 0..dim {
                    if v_hat[(i, j)] != 0.0 || v_hat[(j, i)] != 0.0 {
                        return Err(KktError::InvalidVhat(format!(
                            "row/col {i} must be exactly zero for a non-stochastic entry"
                        )));
                    }
                }
            }
        }
        Ok(Self { point, v_hat, n, stochastic_mask })
    }

    /// Indices of estimated entries, in stacking order.
    pub fn stochastic_indices(&self) -> Vec<usize> {
        self.stochastic_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| if s { Some(i) } else { None })
            .collect()
    }

    /// V̂ restricted to the stochastic rows and columns.
    pub fn restricted_vhat(&self) -> DenseMatrix {
        let idx = self.stochastic_indices();
        let mut out = DenseMatrix::zeros(idx.len().max(1), idx.len().max(1));
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self.v_hat[(i, j)];
            }
        }
        out
    }
}

/// What a complementarity pair's slack side refers to: an auxiliary slack
/// variable, or a θ coordinate that doubles as its own slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackRef {
    Slack(usize),
    Theta(usize),
}

/// One optimality-condition row of the source program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptRow {
    /// LP: `A_i θ + s_i - b_i = 0`; QP: `A_i θ - b_i - s_i = 0`.
    PrimalIneq { row: usize },
    /// Equality row `A_i θ - b_i = 0` (QP only; index into the stacked A).
    PrimalEq { row: usize },
    /// Sign row whose slack is θ itself; identically satisfied.
    PrimalSign { coord: usize },
    /// LP: `A'_j λ [- ν_j] - c_j = 0`; QP: `A'_j λ - c_j - Q_j θ = 0`.
    Dual { col: usize },
}

#[derive(Debug, Clone, Copy)]
enum SourceKind {
    Lp { m: usize, k: usize, nonneg: bool },
    Qp { k: usize, m_ineq: usize, m_eq: usize },
}

impl SourceKind {
    fn stacked_rows(self) -> usize {
        match self {
            SourceKind::Lp { m, .. } => m,
            SourceKind::Qp { m_ineq, m_eq, .. } => m_ineq + m_eq,
        }
    }

    fn theta_dim(self) -> usize {
        match self {
            SourceKind::Lp { k, .. } | SourceKind::Qp { k, .. } => k,
        }
    }

    fn a_idx(self, i: usize, j: usize) -> usize {
        j * self.stacked_rows() + i
    }

    fn b_idx(self, i: usize) -> usize {
        self.stacked_rows() * self.theta_dim() + i
    }

    fn c_idx(self, j: usize) -> usize {
        let m = self.stacked_rows();
        m * self.theta_dim() + m + j
    }

    fn q_idx(self, i: usize, j: usize) -> usize {
        let m = self.stacked_rows();
        let k = self.theta_dim();
        m * k + m + k + j * k + i
    }

    fn point_len(self) -> usize {
        let m = self.stacked_rows();
        let k = self.theta_dim();
        match self {
            SourceKind::Lp { .. } => m * k + m + k,
            SourceKind::Qp { .. } => m * k + m + k + k * k,
        }
    }
}

/// The moment map of one program: row partition, complementarity pairs, and
/// the chi-square degrees of freedom (= number of moment rows).
#[derive(Debug, Clone)]
pub struct KktSystem {
    source: SourceKind,
    pub moment_rows: Vec<OptRow>,
    pub constraint_rows: Vec<OptRow>,
    /// `(λ index, slack reference)` per inequality row of the program.
    pub complementarity_pairs: Vec<(usize, SlackRef)>,
    /// λ entries exempt from `λ ≥ 0` and complementarity.
    pub equality_multiplier_indices: Vec<usize>,
    pub df: usize,
    /// Slack representation per inequality row.
    slack_refs: Vec<SlackRef>,
    n_lambda: usize,
    n_slack: usize,
    stochastic_cols: Vec<usize>,
}

impl KktSystem {
    pub fn theta_dim(&self) -> usize {
        self.source.theta_dim()
    }

    pub fn n_lambda(&self) -> usize {
        self.n_lambda
    }

    pub fn n_slack(&self) -> usize {
        self.n_slack
    }

    pub fn moment_count(&self) -> usize {
        self.moment_rows.len()
    }

    pub fn total_rows(&self) -> usize {
        self.moment_rows.len() + self.constraint_rows.len()
    }

    /// Column indices (into `est.point`) that the Jacobian G is taken over.
    pub fn stochastic_columns(&self) -> &[usize] {
        &self.stochastic_cols
    }
}

fn check_est(source: SourceKind, est: &EstimatedCoefficients) -> Result<(), KktError> {
    if est.point.len() != source.point_len() {
        return Err(KktError::DimensionMismatch {
            what: format!(
                "stacked coefficient length {} does not match program ({})",
                est.point.len(),
                source.point_len()
            ),
        });
    }
    Ok(())
}

fn check_deterministic_entry(
    est: &EstimatedCoefficients,
    idx: usize,
    problem_value: f64,
) -> Result<(), KktError> {
    if !est.stochastic_mask[idx] && (est.point[idx] - problem_value).abs() > 1e-9 {
        return Err(KktError::CoefficientMismatch { index: idx });
    }
    Ok(())
}

/// Build the moment system of an LP. Rows touching an estimated coefficient
/// become moments; fully deterministic rows become hard constraints. The
/// problem supplies the shape (and the `θ ≥ 0` flag); coefficient values are
/// read from `est.point`.
pub fn build_lp_system(
    p: &LpProblem,
    est: &EstimatedCoefficients,
) -> Result<KktSystem, KktError> {
    let m = p.num_constraints();
    let k = p.num_vars();
    let source = SourceKind::Lp { m, k, nonneg: p.nonneg };
    check_est(source, est)?;
    for i in 0..m {
        for j in 0..k {
            check_deterministic_entry(est, source.a_idx(i, j), p.a[(i, j)])?;
        }
        check_deterministic_entry(est, source.b_idx(i), p.b[i])?;
    }
    for j in 0..k {
        check_deterministic_entry(est, source.c_idx(j), p.c[j])?;
    }

    let stochastic = |idx: usize| est.stochastic_mask[idx];
    let mut moment_rows = Vec::new();
    let mut constraint_rows = Vec::new();

    for i in 0..m {
        let any = (0..k).any(|j| stochastic(source.a_idx(i, j))) || stochastic(source.b_idx(i));
        let row = OptRow::PrimalIneq { row: i };
        if any {
            moment_rows.push(row);
        } else {
            constraint_rows.push(row);
        }
    }
    if p.nonneg {
        for j in 0..k {
            constraint_rows.push(OptRow::PrimalSign { coord: j });
        }
    }
    for j in 0..k {
        let any = (0..m).any(|i| stochastic(source.a_idx(i, j))) || stochastic(source.c_idx(j));
        let row = OptRow::Dual { col: j };
        if any {
            moment_rows.push(row);
        } else {
            constraint_rows.push(row);
        }
    }
    if moment_rows.is_empty() {
        return Err(KktError::EmptyMoments);
    }

    let mut slack_refs: Vec<SlackRef> = (0..m).map(SlackRef::Slack).collect();
    let mut pairs: Vec<(usize, SlackRef)> = (0..m).map(|i| (i, SlackRef::Slack(i))).collect();
    if p.nonneg {
        for j in 0..k {
            slack_refs.push(SlackRef::Theta(j));
            pairs.push((m + j, SlackRef::Theta(j)));
        }
    }

    let df = moment_rows.len();
    Ok(KktSystem {
        source,
        moment_rows,
        constraint_rows,
        complementarity_pairs: pairs,
        equality_multiplier_indices: Vec::new(),
        df,
        slack_refs,
        n_lambda: m + if p.nonneg { k } else { 0 },
        n_slack: m,
        stochastic_cols: est.stochastic_indices(),
    })
}

/// Build the moment system of a QP. Equality-constraint multipliers carry no
/// sign restriction and no complementarity; `θⱼ ≥ 0` rows use θ itself as
/// the slack.
pub fn build_qp_system(
    p: &QpProblem,
    est: &EstimatedCoefficients,
) -> Result<KktSystem, KktError> {
    let k = p.num_vars();
    let mi = p.num_ineq();
    let me = p.num_eq();
    let source = SourceKind::Qp { k, m_ineq: mi, m_eq: me };
    check_est(source, est)?;
    let stacked_row = |i: usize, j: usize| -> f64 {
        if i < mi {
            p.ineq_row(i)[j]
        } else {
            p.eq_row(i - mi)[j]
        }
    };
    let stacked_b = |i: usize| -> f64 {
        if i < mi {
            p.b_ineq[i]
        } else {
            p.b_eq[i - mi]
        }
    };
    for i in 0..(mi + me) {
        for j in 0..k {
            check_deterministic_entry(est, source.a_idx(i, j), stacked_row(i, j))?;
        }
        check_deterministic_entry(est, source.b_idx(i), stacked_b(i))?;
    }
    for j in 0..k {
        check_deterministic_entry(est, source.c_idx(j), p.c[j])?;
        for l in 0..k {
            check_deterministic_entry(est, source.q_idx(j, l), p.q[(j, l)])?;
        }
    }

    let stochastic = |idx: usize| est.stochastic_mask[idx];
    let row_is_stochastic = |i: usize| -> bool {
        (0..k).any(|j| stochastic(source.a_idx(i, j))) || stochastic(source.b_idx(i))
    };

    // θ ≥ 0 pattern: a deterministic unit row with zero right-hand side.
    let is_sign_row = |i: usize| -> Option<usize> {
        if i >= mi || row_is_stochastic(i) || stacked_b(i) != 0.0 {
            return None;
        }
        let mut unit = None;
        for j in 0..k {
            match stacked_row(i, j) {
                0.0 => {}
                1.0 if unit.is_none() => unit = Some(j),
                _ => return None,
            }
        }
        unit
    };

    let mut moment_rows = Vec::new();
    let mut constraint_rows = Vec::new();
    let mut slack_refs = Vec::with_capacity(mi);
    let mut pairs = Vec::with_capacity(mi);
    let mut n_aux = 0;

    for i in 0..mi {
        if let Some(j) = is_sign_row(i) {
            slack_refs.push(SlackRef::Theta(j));
            pairs.push((i, SlackRef::Theta(j)));
            constraint_rows.push(OptRow::PrimalSign { coord: j });
        } else {
            let sref = SlackRef::Slack(n_aux);
            n_aux += 1;
            slack_refs.push(sref);
            pairs.push((i, sref));
            let row = OptRow::PrimalIneq { row: i };
            if row_is_stochastic(i) {
                moment_rows.push(row);
            } else {
                constraint_rows.push(row);
            }
        }
    }
    for e in 0..me {
        let row = OptRow::PrimalEq { row: mi + e };
        if row_is_stochastic(mi + e) {
            moment_rows.push(row);
        } else {
            constraint_rows.push(row);
        }
    }
    for j in 0..k {
        let any = (0..(mi + me)).any(|i| stochastic(source.a_idx(i, j)))
            || stochastic(source.c_idx(j))
            || (0..k).any(|l| stochastic(source.q_idx(j, l)));
        let row = OptRow::Dual { col: j };
        if any {
            moment_rows.push(row);
        } else {
            constraint_rows.push(row);
        }
    }
    if moment_rows.is_empty() {
        return Err(KktError::EmptyMoments);
    }

    let df = moment_rows.len();
    Ok(KktSystem {
        source,
        moment_rows,
        constraint_rows,
        complementarity_pairs: pairs,
        equality_multiplier_indices: (mi..mi + me).collect(),
        df,
        slack_refs,
        n_lambda: mi + me,
        n_slack: n_aux,
        stochastic_cols: est.stochastic_indices(),
    })
}

/// Value of one row at `(est.point, θ, λ, s)`.
fn row_value(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    row: OptRow,
    theta: &DenseVector,
    lambda: &DenseVector,
    s: &DenseVector,
) -> f64 {
    let src = sys.source;
    let p = &est.point;
    let k = src.theta_dim();
    match (row, src) {
        (OptRow::PrimalIneq { row: i }, SourceKind::Lp { .. }) => {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            ax + s[i] - p[src.b_idx(i)]
        }
        (OptRow::PrimalIneq { row: i }, SourceKind::Qp { .. }) => {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            let slack = match sys.slack_refs[i] {
                SlackRef::Slack(a) => s[a],
                SlackRef::Theta(j) => theta[j],
            };
            ax - p[src.b_idx(i)] - slack
        }
        (OptRow::PrimalEq { row: i }, _) => {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            ax - p[src.b_idx(i)]
        }
        (OptRow::PrimalSign { .. }, _) => 0.0,
        (OptRow::Dual { col: j }, SourceKind::Lp { m, nonneg, .. }) => {
            let at_lambda: f64 = (0..m).map(|i| p[src.a_idx(i, j)] * lambda[i]).sum();
            let nu = if nonneg { lambda[m + j] } else { 0.0 };
            at_lambda - nu - p[src.c_idx(j)]
        }
        (OptRow::Dual { col: j }, SourceKind::Qp { m_ineq, m_eq, .. }) => {
            let at_lambda: f64 =
                (0..(m_ineq + m_eq)).map(|i| p[src.a_idx(i, j)] * lambda[i]).sum();
            let q_theta: f64 = (0..k).map(|l| p[src.q_idx(j, l)] * theta[l]).sum();
            at_lambda - p[src.c_idx(j)] - q_theta
        }
    }
}

/// Jacobian entries of one row with respect to the stacked coefficients,
/// reported as `(coefficient index, partial derivative)` pairs.
fn row_coeff_partials(
    sys: &KktSystem,
    row: OptRow,
    theta: &DenseVector,
    lambda: &DenseVector,
) -> Vec<(usize, f64)> {
    let src = sys.source;
    let k = src.theta_dim();
    let mut out = Vec::new();
    match (row, src) {
        (OptRow::PrimalIneq { row: i }, _) | (OptRow::PrimalEq { row: i }, _) => {
            for j in 0..k {
                out.push((src.a_idx(i, j), theta[j]));
            }
            out.push((src.b_idx(i), -1.0));
        }
        (OptRow::PrimalSign { .. }, _) => {}
        (OptRow::Dual { col: j }, SourceKind::Lp { m, .. }) => {
            for i in 0..m {
                out.push((src.a_idx(i, j), lambda[i]));
            }
            out.push((src.c_idx(j), -1.0));
        }
        (OptRow::Dual { col: j }, SourceKind::Qp { m_ineq, m_eq, .. }) => {
            for i in 0..(m_ineq + m_eq) {
                out.push((src.a_idx(i, j), lambda[i]));
            }
            out.push((src.c_idx(j), -1.0));
            for l in 0..k {
                out.push((src.q_idx(j, l), -theta[l]));
            }
        }
    }
    out
}

/// Evaluate the moment vector `g` and its coefficient Jacobian `G` at
/// `(est.point, θ, λ, s)`. `G` has one column per stochastic coefficient, in
/// stacking order.
pub fn eval_moments(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
    lambda: &DenseVector,
    s: &DenseVector,
) -> Result<(DenseVector, DenseMatrix), KktError> {
    check_est(sys.source, est)?;
    if theta.len() != sys.theta_dim() {
        return Err(KktError::DimensionMismatch {
            what: format!("theta length {} != {}", theta.len(), sys.theta_dim()),
        });
    }
    if lambda.len() != sys.n_lambda {
        return Err(KktError::DimensionMismatch {
            what: format!("lambda length {} != {}", lambda.len(), sys.n_lambda),
        });
    }
    if s.len() != sys.n_slack {
        return Err(KktError::DimensionMismatch {
            what: format!("slack length {} != {}", s.len(), sys.n_slack),
        });
    }
    let n_rows = sys.moment_rows.len();
    let mut g = DenseVector::zeros(n_rows);
    let mut big_g = DenseMatrix::zeros(n_rows, sys.stochastic_cols.len().max(1));
    // Map stacked index -> stochastic column position.
    let mut col_of = vec![usize::MAX; est.point.len()];
    for (pos, &idx) in sys.stochastic_cols.iter().enumerate() {
        col_of[idx] = pos;
    }
    for (r, &row) in sys.moment_rows.iter().enumerate() {
        g[r] = row_value(sys, est, row, theta, lambda, s);
        for (idx, partial) in row_coeff_partials(sys, row, theta, lambda) {
            let pos = col_of[idx];
            if pos != usize::MAX {
                big_g[(r, pos)] = partial;
            }
        }
    }
    Ok((g, big_g))
}

/// Jacobian of the moment rows at `(θ, λ)`; slacks never enter `G`.
pub(crate) fn moment_jacobian(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
    lambda: &DenseVector,
) -> DenseMatrix {
    let n_rows = sys.moment_rows.len();
    let mut big_g = DenseMatrix::zeros(n_rows, sys.stochastic_cols.len().max(1));
    let mut col_of = vec![usize::MAX; est.point.len()];
    for (pos, &idx) in sys.stochastic_cols.iter().enumerate() {
        col_of[idx] = pos;
    }
    for (r, &row) in sys.moment_rows.iter().enumerate() {
        for (idx, partial) in row_coeff_partials(sys, row, theta, lambda) {
            let pos = col_of[idx];
            if pos != usize::MAX {
                big_g[(r, pos)] = partial;
            }
        }
    }
    big_g
}

/// A row re-expressed as an affine function of the nuisance vector `(λ, s)`
/// at fixed θ: `value = constant + Σ coef·λᵢ + Σ coef·sₐ`.
#[derive(Debug, Clone)]
pub(crate) struct RowAffine {
    pub constant: f64,
    pub lambda_coeffs: Vec<(usize, f64)>,
    pub slack_coeffs: Vec<(usize, f64)>,
}

pub(crate) fn row_nuisance_affine(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    row: OptRow,
    theta: &DenseVector,
) -> RowAffine {
    let src = sys.source;
    let p = &est.point;
    let k = src.theta_dim();
    match (row, src) {
        (OptRow::PrimalIneq { row: i }, SourceKind::Lp { .. }) => {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            RowAffine {
                constant: ax - p[src.b_idx(i)],
                lambda_coeffs: Vec::new(),
                slack_coeffs: vec![(i, 1.0)],
            }
        }
        (OptRow::PrimalIneq { row: i }, SourceKind::Qp { .. }) => {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            let (constant, slack_coeffs) = match sys.slack_refs[i] {
                SlackRef::Slack(a) => (ax - p[src.b_idx(i)], vec![(a, -1.0)]),
                SlackRef::Theta(j) => (ax - p[src.b_idx(i)] - theta[j], Vec::new()),
            };
            RowAffine { constant, lambda_coeffs: Vec::new(), slack_coeffs }
        }
        (OptRow::PrimalEq { row: i }, _) => {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            RowAffine {
                constant: ax - p[src.b_idx(i)],
                lambda_coeffs: Vec::new(),
                slack_coeffs: Vec::new(),
            }
        }
        (OptRow::PrimalSign { .. }, _) => RowAffine {
            constant: 0.0,
            lambda_coeffs: Vec::new(),
            slack_coeffs: Vec::new(),
        },
        (OptRow::Dual { col: j }, SourceKind::Lp { m, nonneg, .. }) => {
            let mut lambda_coeffs: Vec<(usize, f64)> =
                (0..m).map(|i| (i, p[src.a_idx(i, j)])).collect();
            if nonneg {
                lambda_coeffs.push((m + j, -1.0));
            }
            RowAffine {
                constant: -p[src.c_idx(j)],
                lambda_coeffs,
                slack_coeffs: Vec::new(),
            }
        }
        (OptRow::Dual { col: j }, SourceKind::Qp { m_ineq, m_eq, .. }) => {
            let lambda_coeffs: Vec<(usize, f64)> =
                (0..(m_ineq + m_eq)).map(|i| (i, p[src.a_idx(i, j)])).collect();
            let q_theta: f64 = (0..k).map(|l| p[src.q_idx(j, l)] * theta[l]).sum();
            RowAffine {
                constant: -p[src.c_idx(j)] - q_theta,
                lambda_coeffs,
                slack_coeffs: Vec::new(),
            }
        }
    }
}

/// Auxiliary slack values pinned by deterministic primal rows at fixed θ;
/// `None` for slacks the profiler is free to move.
pub(crate) fn pinned_aux_slacks(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
) -> Vec<Option<f64>> {
    let src = sys.source;
    let p = &est.point;
    let k = src.theta_dim();
    let mut pins = vec![None; sys.n_slack];
    for &row in &sys.constraint_rows {
        if let OptRow::PrimalIneq { row: i } = row {
            let ax: f64 = (0..k).map(|j| p[src.a_idx(i, j)] * theta[j]).sum();
            let value = match src {
                SourceKind::Lp { .. } => p[src.b_idx(i)] - ax,
                SourceKind::Qp { .. } => ax - p[src.b_idx(i)],
            };
            if let SlackRef::Slack(a) = sys.slack_refs[i] {
                pins[a] = Some(value);
            }
        }
    }
    pins
}

/// Rebuild the sample program from `est.point` (used to seed multiplier
/// starts when profiling).
pub(crate) fn reconstruct_lp(sys: &KktSystem, est: &EstimatedCoefficients) -> Option<LpProblem> {
    let SourceKind::Lp { m, k, nonneg } = sys.source else { return None };
    let src = sys.source;
    let mut a = DenseMatrix::zeros(m, k);
    for i in 0..m {
        for j in 0..k {
            a[(i, j)] = est.point[src.a_idx(i, j)];
        }
    }
    let b = DenseVector::new((0..m).map(|i| est.point[src.b_idx(i)]).collect());
    let c = DenseVector::new((0..k).map(|j| est.point[src.c_idx(j)]).collect());
    LpProblem::new(a, b, c, nonneg).ok()
}

pub(crate) fn reconstruct_qp(sys: &KktSystem, est: &EstimatedCoefficients) -> Option<QpProblem> {
    let SourceKind::Qp { k, m_ineq, m_eq } = sys.source else { return None };
    let src = sys.source;
    let mut q = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            q[(i, j)] = est.point[src.q_idx(i, j)];
        }
    }
    let c = DenseVector::new((0..k).map(|j| est.point[src.c_idx(j)]).collect());
    let ineq = if m_ineq > 0 {
        let mut a = DenseMatrix::zeros(m_ineq, k);
        for i in 0..m_ineq {
            for j in 0..k {
                a[(i, j)] = est.point[src.a_idx(i, j)];
            }
        }
        let b = DenseVector::new((0..m_ineq).map(|i| est.point[src.b_idx(i)]).collect());
        Some((a, b))
    } else {
        None
    };
    let eq = if m_eq > 0 {
        let mut a = DenseMatrix::zeros(m_eq, k);
        for e in 0..m_eq {
            for j in 0..k {
                a[(e, j)] = est.point[src.a_idx(m_ineq + e, j)];
            }
        }
        let b =
            DenseVector::new((0..m_eq).map(|e| est.point[src.b_idx(m_ineq + e)]).collect());
        Some((a, b))
    } else {
        None
    };
    QpProblem::new(q.symmetrized(), c, ineq, eq).ok()
}

pub(crate) fn is_lp_source(sys: &KktSystem) -> bool {
    matches!(sys.source, SourceKind::Lp { .. })
}
