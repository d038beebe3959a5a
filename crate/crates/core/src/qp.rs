//! Convex quadratic programs `min c'θ + ½θ'Qθ s.t. A θ ≥ b` plus optional
//! equality rows, solved by a primal active-set method.
//!
//! The solver returns multipliers and slacks satisfying the KKT system
//!
//! ```text
//!     Aθ - b - s = 0,   A'λ - c - Qθ = 0,   0 ≤ λᵢ ⊥ sᵢ ≥ 0
//! ```
//!
//! exactly the inputs the moment construction consumes. An active-set method
//! is used rather than an interior point because inference needs exact
//! active sets and clean multipliers, not interior approximations of λ ⊥ s.

use crate::densela::{DenseMatrix, DenseVector, LinAlgError};
use crate::lp::{solve_lp, LpProblem, LpStatus};
use std::fmt;

const EPS: f64 = 1e-9;
const MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    DimensionMismatch { what: &'static str },
    NotSymmetric,
    NotPositiveSemidefinite,
    /// The active-set loop stalled, which signals degeneracy; callers may
    /// jitter `b` by 1e-9 and retry once.
    MaxIterations,
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpError::DimensionMismatch { what } => write!(f, "dimension mismatch: {what}"),
            QpError::NotSymmetric => write!(f, "Q is not symmetric"),
            QpError::NotPositiveSemidefinite => write!(f, "Q is not positive semidefinite"),
            QpError::MaxIterations => write!(f, "active-set method exceeded 1000 iterations"),
        }
    }
}

impl std::error::Error for QpError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `min c'θ + ½ θ'Qθ s.t. A_ineq θ ≥ b_ineq, A_eq θ = b_eq`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DenseMatrix,
    pub c: DenseVector,
    pub a_ineq: Option<DenseMatrix>,
    pub b_ineq: DenseVector,
    pub a_eq: Option<DenseMatrix>,
    pub b_eq: DenseVector,
}

impl QpProblem {
    pub fn new(
        q: DenseMatrix,
        c: DenseVector,
        ineq: Option<(DenseMatrix, DenseVector)>,
        eq: Option<(DenseMatrix, DenseVector)>,
    ) -> Result<Self, QpError> {
        let k = c.len();
        if q.rows() != k || q.cols() != k {
            return Err(QpError::DimensionMismatch { what: "Q must be k x k" });
        }
        if q.max_asymmetry() > 1e-10 * (1.0 + q.max_abs()) {
            return Err(QpError::NotSymmetric);
        }
        // Smallest eigenvalue >= -1e-8, checked via Cholesky of Q + 1e-8 I.
        let mut shifted = q.symmetrized();
        for i in 0..k {
            shifted[(i, i)] += 1e-8;
        }
        if shifted.cholesky().is_err() {
            return Err(QpError::NotPositiveSemidefinite);
        }
        let (a_ineq, b_ineq) = match ineq {
            Some((a, b)) => {
                if a.cols() != k {
                    return Err(QpError::DimensionMismatch { what: "cols(A_ineq) != k" });
                }
                if a.rows() != b.len() {
                    return Err(QpError::DimensionMismatch { what: "rows(A_ineq) != len(b_ineq)" });
                }
                (Some(a), b)
            }
            None => (None, DenseVector::zeros(0)),
        };
        let (a_eq, b_eq) = match eq {
            Some((a, b)) => {
                if a.cols() != k {
                    return Err(QpError::DimensionMismatch { what: "cols(A_eq) != k" });
                }
                if a.rows() != b.len() {
                    return Err(QpError::DimensionMismatch { what: "rows(A_eq) != len(b_eq)" });
                }
                (Some(a), b)
            }
            None => (None, DenseVector::zeros(0)),
        };
        Ok(Self { q, c, a_ineq, b_ineq, a_eq, b_eq })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.a_ineq.as_ref().map_or(0, |a| a.rows())
    }

    pub fn num_eq(&self) -> usize {
        self.a_eq.as_ref().map_or(0, |a| a.rows())
    }

    pub fn ineq_row(&self, i: usize) -> &[f64] {
        self.a_ineq.as_ref().expect("no inequality rows").row(i)
    }

    pub fn eq_row(&self, i: usize) -> &[f64] {
        self.a_eq.as_ref().expect("no equality rows").row(i)
    }

    pub fn objective(&self, theta: &DenseVector) -> f64 {
        self.c.dot(theta) + 0.5 * self.q.quad_form(theta)
    }
}

/// Solution of a [`QpProblem`]; `slack = A_ineq θ - b_ineq`.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub theta: DenseVector,
    pub lambda_ineq: DenseVector,
    pub lambda_eq: DenseVector,
    pub slack: DenseVector,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Objective value after each active-set step; non-increasing.
    pub objective_trace: Vec<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    fn non_optimal(status: QpStatus, k: usize, mi: usize, me: usize) -> Self {
        Self {
            theta: DenseVector::zeros(k),
            lambda_ineq: DenseVector::zeros(mi),
            lambda_eq: DenseVector::zeros(me),
            slack: DenseVector::zeros(mi),
            objective: f64::NAN,
            status,
            iterations: 0,
            objective_trace: Vec::new(),
        }
    }
}

/// Phase 1: find a feasible point by minimizing the worst violation t via
/// the LP `max -t s.t. A_ineq θ + t ≥ b_ineq, |A_eq θ - b_eq| ≤ t, t ≥ 0`.
fn feasible_point(p: &QpProblem) -> Option<DenseVector> {
    let k = p.num_vars();
    let mi = p.num_ineq();
    let me = p.num_eq();
    if mi == 0 && me == 0 {
        return Some(DenseVector::zeros(k));
    }
    let rows = mi + 2 * me + 1;
    let mut a = DenseMatrix::zeros(rows, k + 1);
    let mut b = DenseVector::zeros(rows);
    let mut r = 0;
    for i in 0..mi {
        for j in 0..k {
            a[(r, j)] = -p.ineq_row(i)[j];
        }
        a[(r, k)] = -1.0;
        b[r] = -p.b_ineq[i];
        r += 1;
    }
    for e in 0..me {
        for j in 0..k {
            a[(r, j)] = p.eq_row(e)[j];
        }
        a[(r, k)] = -1.0;
        b[r] = p.b_eq[e];
        r += 1;
        for j in 0..k {
            a[(r, j)] = -p.eq_row(e)[j];
        }
        a[(r, k)] = -1.0;
        b[r] = -p.b_eq[e];
        r += 1;
    }
    a[(r, k)] = -1.0; // t >= 0
    let mut c = DenseVector::zeros(k + 1);
    c[k] = -1.0;
    let lp = LpProblem::new(a, b, c, false).expect("phase-1 LP dimensions");
    let sol = solve_lp(&lp);
    if sol.status != LpStatus::Optimal || sol.theta[k] > EPS {
        return None;
    }
    let mut x = DenseVector::new(sol.theta.as_slice()[..k].to_vec());

    // Polish equality feasibility by least-squares projection.
    if me > 0 {
        let a_eq = p.a_eq.as_ref().unwrap();
        let resid = a_eq.matvec(&x).sub(&p.b_eq);
        let gram = a_eq.matmul(&a_eq.transpose());
        if let Ok(mu) = gram.solve(&resid) {
            x = x.sub(&a_eq.tr_matvec(&mu));
        }
    }
    Some(x)
}

/// Solve the QP by a primal active-set method with lowest-index tie breaks.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    let k = p.num_vars();
    let mi = p.num_ineq();
    let me = p.num_eq();

    let Some(mut x) = feasible_point(p) else {
        return Ok(QpSolution::non_optimal(QpStatus::Infeasible, k, mi, me));
    };

    let mut working: Vec<usize> = Vec::new();
    let mut trace = vec![p.objective(&x)];

    for iter in 1..=MAX_ITER {
        let grad = p.c.add(&p.q.matvec(&x));
        let n_w = me + working.len();

        // Equality-constrained subproblem: Qp - G'mu = -grad, Gp = 0.
        let dim = k + n_w;
        let mut m = DenseMatrix::zeros(dim, dim);
        let mut rhs = DenseVector::zeros(dim);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = p.q[(i, j)];
            }
            rhs[i] = -grad[i];
        }
        for w in 0..n_w {
            let coeffs: Vec<f64> = if w < me {
                p.eq_row(w).to_vec()
            } else {
                p.ineq_row(working[w - me]).to_vec()
            };
            for j in 0..k {
                m[(k + w, j)] = coeffs[j];
                m[(j, k + w)] = -coeffs[j];
            }
        }

        let sol = match m.solve(&rhs) {
            Ok(s) => s,
            Err(LinAlgError::SingularMatrix) => {
                // Ridge the curvature block and retry; PSD Q or dependent
                // working rows land here.
                let ridge = 1e-10 * (1.0 + p.q.trace().abs());
                let mut m2 = m.clone();
                for i in 0..k {
                    m2[(i, i)] += ridge;
                }
                match m2.solve(&rhs) {
                    Ok(s) => s,
                    Err(_) => {
                        // Dependent working rows: drop the most recent.
                        if working.pop().is_none() {
                            return Ok(QpSolution::non_optimal(QpStatus::Unbounded, k, mi, me));
                        }
                        continue;
                    }
                }
            }
            Err(_) => unreachable!("KKT solve only fails as singular"),
        };
        let step = DenseVector::new(sol.as_slice()[..k].to_vec());
        let mult = &sol.as_slice()[k..];

        // An exact subproblem step satisfies grad'p = -p'Qp, so the
        // available decrease is ½ p'Qp; once that falls to the roundoff
        // floor the point is stationary even if a near-singular curvature
        // block inflates ‖p‖ itself.
        let predicted_decrease = 0.5 * p.q.quad_form(&step);
        if step.norm_inf() <= 1e-10 * (1.0 + x.norm_inf())
            || predicted_decrease <= 1e-11 * (1.0 + p.objective(&x).abs())
        {
            // Stationary on the working set; inspect multipliers.
            let mut drop_candidate: Option<(usize, f64)> = None;
            for (pos, &row) in working.iter().enumerate() {
                let lam = mult[me + pos];
                if lam < -EPS {
                    let better = match drop_candidate {
                        None => true,
                        Some((brow, blam)) => {
                            lam < blam - 1e-15 || (lam <= blam + 1e-15 && row < brow)
                        }
                    };
                    if better {
                        drop_candidate = Some((row, lam));
                    }
                }
            }
            match drop_candidate {
                Some((row, _)) => {
                    working.retain(|&r| r != row);
                    continue;
                }
                None => {
                    let mut lambda_ineq = DenseVector::zeros(mi);
                    for (pos, &row) in working.iter().enumerate() {
                        lambda_ineq[row] = mult[me + pos].max(0.0);
                    }
                    let lambda_eq = DenseVector::new(mult[..me].to_vec());
                    let slack = match &p.a_ineq {
                        Some(a) => a.matvec(&x).sub(&p.b_ineq),
                        None => DenseVector::zeros(0),
                    };
                    let objective = p.objective(&x);
                    return Ok(QpSolution {
                        theta: x,
                        lambda_ineq,
                        lambda_eq,
                        slack,
                        objective,
                        status: QpStatus::Optimal,
                        iterations: iter,
                        objective_trace: trace,
                    });
                }
            }
        }

        // Step length limited by inactive inequality rows.
        let mut alpha = 1.0f64;
        let mut blocking: Option<usize> = None;
        for i in 0..mi {
            if working.contains(&i) {
                continue;
            }
            let coeffs = p.ineq_row(i);
            let ap: f64 = coeffs.iter().zip(step.iter()).map(|(a, s)| a * s).sum();
            if ap < -1e-12 {
                let ax: f64 = coeffs.iter().zip(x.iter()).map(|(a, t)| a * t).sum();
                let limit = ((p.b_ineq[i] - ax) / ap).max(0.0);
                if limit < alpha - 1e-15 {
                    alpha = limit;
                    blocking = Some(i);
                }
            }
        }

        if alpha >= 1.0 && step.norm_inf() > 1e13 * (1.0 + x.norm_inf()) {
            return Ok(QpSolution::non_optimal(QpStatus::Unbounded, k, mi, me));
        }

        x = x.add(&step.scaled(alpha));
        trace.push(p.objective(&x));
        if let Some(row) = blocking {
            working.push(row);
        }
    }
    Err(QpError::MaxIterations)
}
