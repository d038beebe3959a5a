//! Finite linear programs `max c'θ s.t. Aθ ≤ b`, optionally with `θ ≥ 0`,
//! solved by a two-phase dense primal simplex with Bland's rule.
//!
//! Solutions carry the dual multipliers and slacks of the optimality system
//!
//! ```text
//!     Aθ ≤ b,   A'λ = c,   λ ≥ 0,   c'θ = b'λ
//! ```
//!
//! because downstream moment construction consumes (θ, λ, s) jointly. When
//! `θ ≥ 0` is requested the sign constraints are appended internally as
//! `-I` rows so their duals are first-class multipliers.

use crate::densela::{DenseMatrix, DenseVector};
use std::fmt;

const EPS: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    DimensionMismatch { what: &'static str },
    /// `enumerate_vertices` refuses problems with `m + k` beyond desk scale.
    DimensionGuard { limit: usize, got: usize },
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
            LpError::DimensionGuard { limit, got } => {
                write!(f, "vertex enumeration limited to m+k <= {limit}, got {got}")
            }
        }
    }
}

impl std::error::Error for LpError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `max c'θ s.t. Aθ ≤ b` with `A` of shape m×k; `nonneg` adds `θ ≥ 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub a: DenseMatrix,
    pub b: DenseVector,
    pub c: DenseVector,
    pub nonneg: bool,
}

impl LpProblem {
    pub fn new(
        a: DenseMatrix,
        b: DenseVector,
        c: DenseVector,
        nonneg: bool,
    ) -> Result<Self, LpError> {
        if a.rows() != b.len() {
            return Err(LpError::DimensionMismatch { what: "rows(A) != len(b)" });
        }
        if a.cols() != c.len() {
            return Err(LpError::DimensionMismatch { what: "cols(A) != len(c)" });
        }
        Ok(Self { a, b, c, nonneg })
    }

    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn num_vars(&self) -> usize {
        self.a.cols()
    }
}

/// Solution of an [`LpProblem`]; `lambda` holds the multipliers on the m
/// user rows and `slack = b - Aθ`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub theta: DenseVector,
    pub lambda: DenseVector,
    pub slack: DenseVector,
    pub objective: f64,
    pub status: LpStatus,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Multipliers on the internal `θ ≥ 0` rows, recovered from dual
    /// feasibility `A'λ - ν = c`. Zero vector for problems without the
    /// sign constraints.
    pub fn sign_duals(&self, p: &LpProblem) -> DenseVector {
        if !p.nonneg {
            return DenseVector::zeros(p.num_vars());
        }
        p.a.tr_matvec(&self.lambda).sub(&p.c)
    }

    fn non_optimal(status: LpStatus, m: usize, k: usize) -> Self {
        Self {
            theta: DenseVector::zeros(k),
            lambda: DenseVector::zeros(m),
            slack: DenseVector::zeros(m),
            objective: f64::NAN,
            status,
        }
    }
}

/// Dense simplex tableau over the sign-fixed standard form
/// `Ā x = b̄, x ≥ 0` with `x = (θ⁺, θ⁻, slacks, artificials)`.
struct Tableau {
    m: usize,
    n: usize, // columns excluding rhs
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    obj_value: f64,
    basis: Vec<usize>,
    artificial_start: usize,
}

enum StepOutcome {
    Optimal,
    Unbounded,
    Stepped,
}

impl Tableau {
    /// One Bland-rule pivot toward maximizing the current objective row.
    fn step(&mut self) -> StepOutcome {
        // Entering: lowest-index improving column, never an artificial.
        let mut entering = None;
        for j in 0..self.artificial_start {
            if self.basis.contains(&j) {
                continue;
            }
            if self.obj[j] > EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else { return StepOutcome::Optimal };

        // Leaving: minimum ratio, ties broken by lowest basic variable index.
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let coef = self.rows[r][e];
            if coef > PIVOT_TOL {
                let ratio = self.rhs[r] / coef;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((br, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && self.basis[r] < self.basis[br])
                        {
                            leave = Some((r, ratio.min(best)));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else { return StepOutcome::Unbounded };
        self.pivot(r, e);
        StepOutcome::Stepped
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let pivot = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= pivot;
        }
        self.rhs[r] /= pivot;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.rows[i][e];
            if factor == 0.0 {
                continue;
            }
            for j in 0..self.n {
                self.rows[i][j] -= factor * self.rows[r][j];
            }
            self.rows[i][e] = 0.0;
            self.rhs[i] -= factor * self.rhs[r];
        }
        let factor = self.obj[e];
        if factor != 0.0 {
            for j in 0..self.n {
                self.obj[j] -= factor * self.rows[r][j];
            }
            self.obj[e] = 0.0;
            self.obj_value += factor * self.rhs[r];
        }
        self.basis[r] = e;
    }

    fn run(&mut self) -> StepOutcome {
        for _ in 0..50_000 {
            match self.step() {
                StepOutcome::Stepped => {}
                done => return done,
            }
        }
        // Bland's rule precludes cycling; hitting this means a logic bug.
        panic!("simplex exceeded its iteration bound");
    }
}

/// Solve the LP, returning a vertex-optimal solution with duals recovered
/// from the final simplex basis.
pub fn solve_lp(p: &LpProblem) -> LpSolution {
    let m = p.num_constraints();
    let k = p.num_vars();
    let m_all = m + if p.nonneg { k } else { 0 };

    // Sign-fixed standard form columns: θ⁺ (k), θ⁻ (k), slacks (m_all),
    // artificials (m_all).
    let n_real = 2 * k + m_all;
    let n_total = n_real + m_all;

    let mut flip = vec![false; m_all];
    let mut rows = vec![vec![0.0; n_total]; m_all];
    let mut rhs = vec![0.0; m_all];
    for i in 0..m_all {
        let (coef_row, b_i): (Vec<f64>, f64) = if i < m {
            (p.a.row(i).to_vec(), p.b[i])
        } else {
            // θ_j >= 0 encoded as -θ_j <= 0.
            let j = i - m;
            let mut r = vec![0.0; k];
            r[j] = -1.0;
            (r, 0.0)
        };
        let sign = if b_i < 0.0 {
            flip[i] = true;
            -1.0
        } else {
            1.0
        };
        for j in 0..k {
            rows[i][j] = sign * coef_row[j];
            rows[i][k + j] = -sign * coef_row[j];
        }
        rows[i][2 * k + i] = sign;
        rows[i][n_real + i] = 1.0;
        rhs[i] = sign * b_i;
    }

    // Phase 1: maximize -(sum of artificials), starting from the artificial
    // basis. Reduced cost of real column j is the column sum.
    let mut tab = Tableau {
        m: m_all,
        n: n_total,
        obj: {
            let mut o = vec![0.0; n_total];
            for j in 0..n_real {
                o[j] = rows.iter().map(|r| r[j]).sum();
            }
            o
        },
        obj_value: -rhs.iter().sum::<f64>(),
        basis: (n_real..n_total).collect(),
        artificial_start: n_real,
        rows,
        rhs,
    };
    tab.run();
    if tab.obj_value < -EPS {
        return LpSolution::non_optimal(LpStatus::Infeasible, m, k);
    }

    // Drive remaining artificials out of the basis where possible.
    for r in 0..m_all {
        if tab.basis[r] >= n_real {
            if let Some(e) = (0..n_real).find(|&j| tab.rows[r][j].abs() > 1e-8) {
                tab.pivot(r, e);
            }
        }
    }

    // Phase 2: reduced costs of max c'θ⁺ - c'θ⁻ under the current basis.
    let cost = |j: usize| -> f64 {
        if j < k {
            p.c[j]
        } else if j < 2 * k {
            -p.c[j - k]
        } else {
            0.0
        }
    };
    let mut obj: Vec<f64> = (0..n_total).map(cost).collect();
    let mut obj_value = 0.0;
    for r in 0..m_all {
        let cb = cost(tab.basis[r]);
        if cb != 0.0 {
            for (o, t) in obj.iter_mut().zip(&tab.rows[r]) {
                *o -= cb * t;
            }
            obj_value += cb * tab.rhs[r];
        }
    }
    for r in 0..m_all {
        obj[tab.basis[r]] = 0.0;
    }
    tab.obj = obj;
    tab.obj_value = obj_value;
    if let StepOutcome::Unbounded = tab.run() {
        return LpSolution::non_optimal(LpStatus::Unbounded, m, k);
    }

    // Primal solution.
    let mut x = vec![0.0; n_total];
    for r in 0..m_all {
        x[tab.basis[r]] = tab.rhs[r];
    }
    let theta = DenseVector::new((0..k).map(|j| x[j] - x[k + j]).collect());

    // Duals from the final basis: solve B'y = c_B over the sign-fixed
    // standard form, then undo row flips.
    let mut basis_cols = DenseMatrix::zeros(m_all, m_all);
    for (pos, &var) in tab.basis.iter().enumerate() {
        for i in 0..m_all {
            basis_cols[(i, pos)] = standard_form_entry(p, m, k, flip[i], i, var, n_real);
        }
    }
    let cb = DenseVector::new(tab.basis.iter().map(|&v| cost(v)).collect());
    let y = basis_cols
        .transpose()
        .solve(&cb)
        .unwrap_or_else(|_| DenseVector::zeros(m_all));
    let lambda = DenseVector::new(
        (0..m).map(|i| if flip[i] { -y[i] } else { y[i] }).collect(),
    );

    let slack = p.b.sub(&p.a.matvec(&theta));
    let objective = p.c.dot(&theta);
    LpSolution { theta, lambda, slack, objective, status: LpStatus::Optimal }
}

/// Entry (i, var) of the sign-fixed standard-form constraint matrix.
fn standard_form_entry(
    p: &LpProblem,
    m: usize,
    k: usize,
    flipped: bool,
    i: usize,
    var: usize,
    n_real: usize,
) -> f64 {
    let sign = if flipped { -1.0 } else { 1.0 };
    let row_coef = |j: usize| -> f64 {
        if i < m {
            p.a[(i, j)]
        } else if i - m == j {
            -1.0
        } else {
            0.0
        }
    };
    if var < k {
        sign * row_coef(var)
    } else if var < 2 * k {
        -sign * row_coef(var - k)
    } else if var < n_real {
        if var - 2 * k == i {
            sign
        } else {
            0.0
        }
    } else if var - n_real == i {
        1.0
    } else {
        0.0
    }
}

/// Enumerate all basic feasible points by choosing `k` constraints to bind,
/// solving the resulting square system, and filtering by feasibility.
/// Returns `(θ, objective)` pairs sorted by objective, best first.
pub fn enumerate_vertices(p: &LpProblem) -> Result<Vec<(DenseVector, f64)>, LpError> {
    let m = p.num_constraints();
    let k = p.num_vars();
    if m + k > 20 {
        return Err(LpError::DimensionGuard { limit: 20, got: m + k });
    }
    let m_all = m + if p.nonneg { k } else { 0 };
    let row_of = |i: usize| -> (Vec<f64>, f64) {
        if i < m {
            (p.a.row(i).to_vec(), p.b[i])
        } else {
            let mut r = vec![0.0; k];
            r[i - m] = -1.0;
            (r, 0.0)
        }
    };

    let mut out = Vec::new();
    for combo in combinations(m_all, k) {
        let mut mat = DenseMatrix::zeros(k, k);
        let mut rhs = DenseVector::zeros(k);
        for (pos, &i) in combo.iter().enumerate() {
            let (coefs, b_i) = row_of(i);
            for j in 0..k {
                mat[(pos, j)] = coefs[j];
            }
            rhs[pos] = b_i;
        }
        let Ok(theta) = mat.solve(&rhs) else { continue };
        let feasible = (0..m_all).all(|i| {
            let (coefs, b_i) = row_of(i);
            let lhs: f64 = coefs.iter().zip(theta.iter()).map(|(a, t)| a * t).sum();
            lhs <= b_i + EPS
        });
        if feasible {
            let objective = p.c.dot(&theta);
            out.push((theta, objective));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(out)
}

/// All size-`r` index subsets of `0..n` in lexicographic order.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    if r > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that can still move.
        let mut pos = r;
        while pos > 0 {
            pos -= 1;
            if idx[pos] != pos + n - r {
                idx[pos] += 1;
                for p2 in (pos + 1)..r {
                    idx[p2] = idx[p2 - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return out;
            }
        }
        if r == 0 {
            return out;
        }
    }
}
