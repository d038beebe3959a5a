//! Profiled test statistic: minimize `n · g'(G V̂ G')⁻¹ g` over the
//! multiplier/slack nuisance parameters subject to sign constraints, the
//! system's deterministic rows, and the complementarity restriction
//! `λᵢ sᵢ = 0`, at a fixed candidate θ.
//!
//! Complementarity is handled exactly by enumerating pieces: each pair is
//! assigned either `λᵢ = 0` or `sᵢ = 0`, and on every piece the moment
//! vector is affine in the remaining free nuisance entries. Because the
//! Jacobian `G` depends on λ, the weight matrix is iterated to a fixed
//! point: freeze `W = (G V̂ G')⁻¹` at the current λ, solve the resulting
//! inequality-constrained least squares as a convex QP, recompute `W`, and
//! repeat. Two starts (λ = 0 and the sample program's own duals) guard
//! against fixed-point multiplicity; if the iteration has not settled after
//! 100 sweeps the smallest value seen is kept, which errs on the
//! conservative side.

use crate::densela::{DenseMatrix, DenseVector, LinAlgError};
use crate::kkt::{
    self, EstimatedCoefficients, KktSystem, RowAffine, SlackRef,
};
use crate::lp::solve_lp;
use crate::qp::{solve_qp, QpError, QpProblem, QpStatus};
use std::fmt;

const ZERO_TOL: f64 = 1e-9;
const CONSTRAINT_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 100;
const MAX_PAIRS: usize = 20;

#[derive(Debug)]
pub enum MpccError {
    /// More than 20 complementarity pairs; enumeration would explode.
    PieceLimitExceeded { pairs: usize },
    /// Every piece violates the deterministic constraint rows.
    NoFeasiblePiece,
    Qp(QpError),
    LinAlg(LinAlgError),
    Kkt(kkt::KktError),
}

impl fmt::Display for MpccError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpccError::PieceLimitExceeded { pairs } => {
                write!(f, "{pairs} complementarity pairs exceed the limit of {MAX_PAIRS}")
            }
            MpccError::NoFeasiblePiece => {
                write!(f, "no complementarity piece satisfies the deterministic constraints")
            }
            MpccError::Qp(e) => write!(f, "piece subproblem failed: {e}"),
            MpccError::LinAlg(e) => write!(f, "weight matrix failure: {e}"),
            MpccError::Kkt(e) => write!(f, "moment evaluation failed: {e}"),
        }
    }
}

impl std::error::Error for MpccError {}

impl From<QpError> for MpccError {
    fn from(e: QpError) -> Self {
        MpccError::Qp(e)
    }
}

impl From<LinAlgError> for MpccError {
    fn from(e: LinAlgError) -> Self {
        MpccError::LinAlg(e)
    }
}

impl From<kkt::KktError> for MpccError {
    fn from(e: kkt::KktError) -> Self {
        MpccError::Kkt(e)
    }
}

/// Which side of a complementarity pair a piece sets to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceSide {
    ZeroMultiplier,
    ZeroSlack,
}

/// Result of profiling at one θ.
#[derive(Debug, Clone)]
pub struct ProfileResult {
    /// `n · Q̂_n` at the minimizing nuisance values; non-negative.
    pub statistic: f64,
    pub lambda_star: DenseVector,
    pub s_star: DenseVector,
    /// The winning complementarity assignment, aligned with
    /// `sys.complementarity_pairs`.
    pub piece: Vec<PieceSide>,
    /// Fixed-point sweeps used by the winning piece; `MAX_SWEEPS` flags
    /// non-convergence.
    pub iterations: usize,
}

/// Outcome of minimizing one piece.
#[derive(Debug, Clone)]
pub enum PieceOutcome {
    /// The piece's zero assignments conflict with the deterministic rows.
    Infeasible,
    Solved { value: f64, lambda: DenseVector, s: DenseVector, sweeps: usize },
}

/// Precomputed per-θ state shared across pieces.
struct ProfileContext<'a> {
    sys: &'a KktSystem,
    est: &'a EstimatedCoefficients,
    theta: &'a DenseVector,
    vhat_s: DenseMatrix,
    pins: Vec<Option<f64>>,
    moment_affines: Vec<RowAffine>,
    constraint_affines: Vec<RowAffine>,
    seed_lambda: Option<DenseVector>,
}

impl<'a> ProfileContext<'a> {
    fn build(
        sys: &'a KktSystem,
        est: &'a EstimatedCoefficients,
        theta: &'a DenseVector,
        with_seed: bool,
    ) -> Self {
        let moment_affines = sys
            .moment_rows
            .iter()
            .map(|&row| kkt::row_nuisance_affine(sys, est, row, theta))
            .collect();
        let constraint_affines = sys
            .constraint_rows
            .iter()
            .map(|&row| kkt::row_nuisance_affine(sys, est, row, theta))
            .collect();
        let seed_lambda = if with_seed { sample_dual_seed(sys, est) } else { None };
        Self {
            sys,
            est,
            theta,
            vhat_s: est.restricted_vhat(),
            pins: kkt::pinned_aux_slacks(sys, est, theta),
            moment_affines,
            constraint_affines,
            seed_lambda,
        }
    }
}

/// Multipliers of the sample program rebuilt from `est.point`, used as the
/// second weight-iteration start.
fn sample_dual_seed(sys: &KktSystem, est: &EstimatedCoefficients) -> Option<DenseVector> {
    if kkt::is_lp_source(sys) {
        let p = kkt::reconstruct_lp(sys, est)?;
        let sol = solve_lp(&p);
        if !sol.is_optimal() {
            return None;
        }
        let mut lambda = DenseVector::zeros(sys.n_lambda());
        for i in 0..p.num_constraints() {
            lambda[i] = sol.lambda[i].max(0.0);
        }
        if p.nonneg {
            let nu = sol.sign_duals(&p);
            for j in 0..p.num_vars() {
                lambda[p.num_constraints() + j] = nu[j].max(0.0);
            }
        }
        Some(lambda)
    } else {
        let p = kkt::reconstruct_qp(sys, est)?;
        let sol = solve_qp(&p).ok()?;
        if !sol.is_optimal() {
            return None;
        }
        let mut lambda = DenseVector::zeros(sys.n_lambda());
        for i in 0..p.num_ineq() {
            lambda[i] = sol.lambda_ineq[i].max(0.0);
        }
        for e in 0..p.num_eq() {
            lambda[p.num_ineq() + e] = sol.lambda_eq[e];
        }
        Some(lambda)
    }
}

/// Profile the statistic at θ by enumerating complementarity pieces.
///
/// Pairs whose slack side is θ itself, or is pinned by a deterministic
/// primal row, have their side forced by the fixed θ; only genuinely free
/// pairs branch, so the enumeration stays at `2^(free pairs)` while the
/// reported piece covers every pair.
pub fn profile_statistic(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
) -> Result<ProfileResult, MpccError> {
    let pairs = &sys.complementarity_pairs;
    if pairs.len() > MAX_PAIRS {
        return Err(MpccError::PieceLimitExceeded { pairs: pairs.len() });
    }
    let ctx = ProfileContext::build(sys, est, theta, true);

    // θ violating a deterministic primal row makes every piece infeasible.
    for pin in ctx.pins.iter().flatten() {
        if *pin < -CONSTRAINT_TOL {
            return Err(MpccError::NoFeasiblePiece);
        }
    }

    // Forced sides: θ-referenced pairs and pinned slacks do not branch.
    let mut forced: Vec<Option<PieceSide>> = Vec::with_capacity(pairs.len());
    let mut free_positions = Vec::new();
    for (pos, &(_, sref)) in pairs.iter().enumerate() {
        let side = match sref {
            SlackRef::Theta(j) => {
                if theta[j] > ZERO_TOL {
                    Some(PieceSide::ZeroMultiplier)
                } else {
                    Some(PieceSide::ZeroSlack)
                }
            }
            SlackRef::Slack(a) => match ctx.pins[a] {
                Some(v) if v > ZERO_TOL => Some(PieceSide::ZeroMultiplier),
                Some(_) => Some(PieceSide::ZeroSlack),
                None => None,
            },
        };
        if side.is_none() {
            free_positions.push(pos);
        }
        forced.push(side);
    }

    let mut best: Option<(f64, DenseVector, DenseVector, Vec<PieceSide>, usize)> = None;
    for assignment in 0u64..(1 << free_positions.len()) {
        let mut piece: Vec<PieceSide> = forced
            .iter()
            .map(|side| side.unwrap_or(PieceSide::ZeroMultiplier))
            .collect();
        for (bit, &pos) in free_positions.iter().enumerate() {
            piece[pos] = if assignment & (1 << bit) != 0 {
                PieceSide::ZeroSlack
            } else {
                PieceSide::ZeroMultiplier
            };
        }
        match solve_piece(&ctx, &piece)? {
            PieceOutcome::Infeasible => continue,
            PieceOutcome::Solved { value, lambda, s, sweeps } => {
                let better = best.as_ref().is_none_or(|(bv, ..)| value < *bv);
                if better {
                    best = Some((value, lambda, s, piece, sweeps));
                }
            }
        }
    }

    let Some((value, lambda_star, s_star, piece, iterations)) = best else {
        return Err(MpccError::NoFeasiblePiece);
    };
    Ok(ProfileResult {
        statistic: value.max(0.0),
        lambda_star,
        s_star,
        piece,
        iterations,
    })
}

/// Minimize one complementarity piece. With the assigned entries zeroed the
/// moments are affine in the free nuisance vector, so each frozen-weight
/// step is an exact convex QP; the weight is then refreshed at the new λ
/// until successive values differ by less than 1e-10.
pub fn minimize_piece(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
    piece: &[PieceSide],
) -> Result<PieceOutcome, MpccError> {
    let ctx = ProfileContext::build(sys, est, theta, true);
    solve_piece(&ctx, piece)
}

/// Free-nuisance layout of one piece.
struct PieceLayout {
    free_lambda: Vec<usize>,
    free_slack: Vec<usize>,
    lambda_zeroed: Vec<bool>,
    slack_fixed: Vec<Option<f64>>, // zeroed or pinned
}

fn piece_layout(ctx: &ProfileContext, piece: &[PieceSide]) -> Option<PieceLayout> {
    let sys = ctx.sys;
    let mut lambda_zeroed = vec![false; sys.n_lambda()];
    let mut slack_fixed: Vec<Option<f64>> = ctx.pins.clone();
    for (&(lam_idx, sref), side) in sys.complementarity_pairs.iter().zip(piece) {
        match side {
            PieceSide::ZeroMultiplier => lambda_zeroed[lam_idx] = true,
            PieceSide::ZeroSlack => match sref {
                SlackRef::Theta(j) => {
                    if ctx.theta[j] > ZERO_TOL {
                        return None; // θ is fixed and nonzero
                    }
                }
                SlackRef::Slack(a) => match slack_fixed[a] {
                    Some(v) if v.abs() > ZERO_TOL => return None, // pinned nonzero
                    _ => slack_fixed[a] = Some(0.0),
                },
            },
        }
    }
    let free_lambda: Vec<usize> = (0..sys.n_lambda()).filter(|&i| !lambda_zeroed[i]).collect();
    let free_slack: Vec<usize> = (0..sys.n_slack()).filter(|&a| slack_fixed[a].is_none()).collect();
    Some(PieceLayout { free_lambda, free_slack, lambda_zeroed, slack_fixed })
}

/// Restrict an affine row to the free nuisance coordinates, folding fixed
/// entries into the constant.
fn reduce_row(
    affine: &RowAffine,
    layout: &PieceLayout,
    lambda_pos: &[usize],
    slack_pos: &[usize],
) -> (Vec<(usize, f64)>, f64) {
    let mut constant = affine.constant;
    let mut coeffs = Vec::new();
    for &(i, c) in &affine.lambda_coeffs {
        if layout.lambda_zeroed[i] {
            continue; // contributes zero
        }
        coeffs.push((lambda_pos[i], c));
    }
    for &(a, c) in &affine.slack_coeffs {
        match layout.slack_fixed[a] {
            Some(v) => constant += c * v,
            None => coeffs.push((slack_pos[a], c)),
        }
    }
    (coeffs, constant)
}

fn solve_piece(ctx: &ProfileContext, piece: &[PieceSide]) -> Result<PieceOutcome, MpccError> {
    let sys = ctx.sys;
    assert_eq!(piece.len(), sys.complementarity_pairs.len(), "piece length mismatch");
    let Some(layout) = piece_layout(ctx, piece) else {
        return Ok(PieceOutcome::Infeasible);
    };
    let n_free = layout.free_lambda.len() + layout.free_slack.len();

    // Positions of each λ / slack index inside the free vector.
    let mut lambda_pos = vec![usize::MAX; sys.n_lambda()];
    for (pos, &i) in layout.free_lambda.iter().enumerate() {
        lambda_pos[i] = pos;
    }
    let mut slack_pos = vec![usize::MAX; sys.n_slack()];
    for (pos, &a) in layout.free_slack.iter().enumerate() {
        slack_pos[a] = pos + layout.free_lambda.len();
    }

    // Moments: J ν + r.
    let n_mom = sys.moment_count();
    let mut jac = DenseMatrix::zeros(n_mom.max(1), n_free.max(1));
    let mut resid = DenseVector::zeros(n_mom);
    for (r, affine) in ctx.moment_affines.iter().enumerate() {
        let (coeffs, constant) = reduce_row(affine, &layout, &lambda_pos, &slack_pos);
        resid[r] = constant;
        for (pos, c) in coeffs {
            jac[(r, pos)] += c;
        }
    }

    // Deterministic rows: equality constraints on ν, or pure checks.
    let mut eq_rows: Vec<Vec<f64>> = Vec::new();
    let mut eq_rhs: Vec<f64> = Vec::new();
    for affine in &ctx.constraint_affines {
        let (coeffs, constant) = reduce_row(affine, &layout, &lambda_pos, &slack_pos);
        if coeffs.is_empty() {
            if constant.abs() > CONSTRAINT_TOL {
                return Ok(PieceOutcome::Infeasible);
            }
            continue;
        }
        let mut row = vec![0.0; n_free];
        for (pos, c) in coeffs {
            row[pos] += c;
        }
        eq_rows.push(row);
        eq_rhs.push(-constant);
    }

    // Sign constraints: free non-equality multipliers and free slacks >= 0.
    let mut sign_rows: Vec<usize> = Vec::new();
    for (pos, &i) in layout.free_lambda.iter().enumerate() {
        if !sys.equality_multiplier_indices.contains(&i) {
            sign_rows.push(pos);
        }
    }
    for pos in layout.free_lambda.len()..n_free {
        sign_rows.push(pos);
    }

    let assemble = |nu: &DenseVector| -> (DenseVector, DenseVector) {
        let mut lambda = DenseVector::zeros(sys.n_lambda());
        for (pos, &i) in layout.free_lambda.iter().enumerate() {
            lambda[i] = nu[pos];
        }
        let mut s = DenseVector::zeros(sys.n_slack());
        for a in 0..sys.n_slack() {
            s[a] = match layout.slack_fixed[a] {
                Some(v) => v,
                None => nu[slack_pos[a]],
            };
        }
        (lambda, s)
    };

    // Starts for the weight iteration: λ = 0 and the sample program's duals
    // (projected onto the piece).
    let mut starts = vec![DenseVector::zeros(sys.n_lambda())];
    if let Some(seed) = &ctx.seed_lambda {
        let mut projected = seed.clone();
        for i in 0..sys.n_lambda() {
            if layout.lambda_zeroed[i] {
                projected[i] = 0.0;
            }
        }
        starts.push(projected);
    }

    let n = ctx.est.n as f64;
    let mut best: Option<(f64, DenseVector, usize)> = None;

    for start_lambda in starts {
        let mut lambda_cur = start_lambda;
        let mut prev_value: Option<f64> = None;
        let mut start_best: Option<(f64, DenseVector)> = None;
        let mut sweeps_used = 0;

        for sweep in 1..=MAX_SWEEPS {
            sweeps_used = sweep;
            let g_jac = kkt::moment_jacobian(sys, ctx.est, ctx.theta, &lambda_cur);
            let w_raw = g_jac.matmul(&ctx.vhat_s).matmul(&g_jac.transpose()).symmetrized();

            if w_raw.max_abs() <= 1e-300 {
                // Degenerate zero-variance weight: the statistic is 0 when
                // the moments can be zeroed exactly and +inf otherwise.
                let outcome = minimize_quadratic(
                    &jac,
                    &resid,
                    &DenseMatrix::identity(n_mom.max(1)),
                    &eq_rows,
                    &eq_rhs,
                    &sign_rows,
                    n_free,
                )?;
                match outcome {
                    None => return Ok(PieceOutcome::Infeasible),
                    Some(nu) => {
                        let gval = affine_value(&jac, &resid, &nu);
                        let value = if gval.norm_inf() <= 1e-8 { 0.0 } else { f64::INFINITY };
                        start_best = Some((value, nu));
                    }
                }
                break;
            }

            let weight = match w_raw.sym_pinv(0.0) {
                Ok(w) => w,
                Err(LinAlgError::NotPositiveDefinite) => {
                    let ridge = 1e-10 * w_raw.trace() / w_raw.rows() as f64;
                    w_raw.sym_pinv(ridge).map_err(MpccError::LinAlg)?
                }
                Err(e) => return Err(MpccError::LinAlg(e)),
            };

            let Some(nu) =
                minimize_quadratic(&jac, &resid, &weight, &eq_rows, &eq_rhs, &sign_rows, n_free)?
            else {
                return Ok(PieceOutcome::Infeasible);
            };
            let gval = affine_value(&jac, &resid, &nu);

            // Score the candidate by the raw objective, with the weight
            // evaluated at its own λ; the frozen-weight value is only the
            // subproblem's internal objective and is attained by no point
            // once the weight moves.
            let (new_lambda, _) = assemble(&nu);
            let next_jac = kkt::moment_jacobian(sys, ctx.est, ctx.theta, &new_lambda);
            let next_w =
                next_jac.matmul(&ctx.vhat_s).matmul(&next_jac.transpose()).symmetrized();
            let value = if next_w.max_abs() <= 1e-300 {
                if gval.norm_inf() <= 1e-8 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                let raw_weight = match next_w.sym_pinv(0.0) {
                    Ok(w) => w,
                    Err(LinAlgError::NotPositiveDefinite) => {
                        let ridge = 1e-10 * next_w.trace() / next_w.rows() as f64;
                        next_w.sym_pinv(ridge).map_err(MpccError::LinAlg)?
                    }
                    Err(e) => return Err(MpccError::LinAlg(e)),
                };
                n * raw_weight.quad_form(&gval)
            };

            let improved = start_best.as_ref().is_none_or(|(bv, _)| value < *bv);
            if improved {
                start_best = Some((value, nu.clone()));
            }

            let converged_value =
                prev_value.is_some_and(|pv| (pv - value).abs() < 1e-10);
            // Weight stability: a λ-independent G converges in one sweep.
            let w_stable = max_abs_diff(&next_w, &w_raw) <= 1e-14 * (1.0 + w_raw.max_abs());
            lambda_cur = new_lambda;
            prev_value = Some(value);
            if converged_value || w_stable {
                break;
            }
        }

        if let Some((value, nu)) = start_best {
            let better = best.as_ref().is_none_or(|(bv, ..)| value < *bv);
            if better {
                best = Some((value, nu, sweeps_used));
            }
        }
    }

    let Some((value, nu, sweeps)) = best else {
        return Ok(PieceOutcome::Infeasible);
    };
    let (lambda, s) = assemble(&nu);
    Ok(PieceOutcome::Solved { value, lambda, s, sweeps })
}

fn affine_value(jac: &DenseMatrix, resid: &DenseVector, nu: &DenseVector) -> DenseVector {
    let mut out = resid.clone();
    if !nu.is_empty() {
        let jnu = jac.matvec(nu);
        out = out.add(&jnu);
    }
    out
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let mut m = 0.0f64;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Minimize `(Jν + r)' W (Jν + r)` subject to `C ν = d` and `νᵢ ≥ 0` for
/// the selected components. Returns `None` when the constraints are
/// infeasible.
fn minimize_quadratic(
    jac: &DenseMatrix,
    resid: &DenseVector,
    weight: &DenseMatrix,
    eq_rows: &[Vec<f64>],
    eq_rhs: &[f64],
    sign_rows: &[usize],
    n_free: usize,
) -> Result<Option<DenseVector>, MpccError> {
    if n_free == 0 {
        return Ok(Some(DenseVector::zeros(0)));
    }
    // Normalize the weight so the QP sees O(1) curvature regardless of n/σ².
    let scale = weight.max_abs().max(1e-300);
    let wn = weight.scaled(1.0 / scale);
    let wj = wn.matmul(jac); // W J
    let q = jac.transpose().matmul(&wj).scaled(2.0).symmetrized();
    let lin = {
        let wr = wn.matvec(resid);
        jac.tr_matvec(&wr).scaled(2.0)
    };

    // Curvature at roundoff level means the weight annihilates the moment
    // Jacobian: the objective is constant in ν up to noise (its gradient is
    // bounded by the square root of the curvature), so any feasible point
    // will do and chasing the noise-level linear term would stall.
    if q.max_abs() <= 1e-9 {
        if eq_rows.is_empty() {
            return Ok(Some(DenseVector::zeros(n_free)));
        }
        let mut a = DenseMatrix::zeros(eq_rows.len(), n_free);
        for (r, row) in eq_rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a[(r, j)] = v;
            }
        }
        let sign = if sign_rows.is_empty() {
            None
        } else {
            let mut s = DenseMatrix::zeros(sign_rows.len(), n_free);
            for (r, &pos) in sign_rows.iter().enumerate() {
                s[(r, pos)] = 1.0;
            }
            Some((s, DenseVector::zeros(sign_rows.len())))
        };
        let feasibility = QpProblem::new(
            DenseMatrix::identity(n_free),
            DenseVector::zeros(n_free),
            sign,
            Some((a, DenseVector::new(eq_rhs.to_vec()))),
        )
        .map_err(MpccError::Qp)?;
        let sol = solve_qp(&feasibility).map_err(MpccError::Qp)?;
        return match sol.status {
            QpStatus::Optimal => Ok(Some(sol.theta)),
            _ => Ok(None),
        };
    }
    let ineq = if sign_rows.is_empty() {
        None
    } else {
        let mut a = DenseMatrix::zeros(sign_rows.len(), n_free);
        for (r, &pos) in sign_rows.iter().enumerate() {
            a[(r, pos)] = 1.0;
        }
        Some((a, DenseVector::zeros(sign_rows.len())))
    };
    let eq = if eq_rows.is_empty() {
        None
    } else {
        let mut a = DenseMatrix::zeros(eq_rows.len(), n_free);
        for (r, row) in eq_rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a[(r, j)] = v;
            }
        }
        Some((a, DenseVector::new(eq_rhs.to_vec())))
    };

    // J'WJ is PSD in exact arithmetic, but an ill-conditioned weight can
    // leave the computed matrix indefinite at roundoff level. Escalate a
    // convexifying ridge from zero until the solver accepts it, so clean
    // pieces stay exact and only noisy ones are perturbed.
    let q_scale = 1.0 + q.max_abs();
    let mut problem = None;
    for magnitude in [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6] {
        let mut q_try = q.clone();
        for i in 0..n_free {
            q_try[(i, i)] += magnitude * q_scale;
        }
        match QpProblem::new(q_try, lin.clone(), ineq.clone(), eq.clone()) {
            Ok(p) => {
                problem = Some(p);
                break;
            }
            Err(QpError::NotPositiveSemidefinite) => continue,
            Err(e) => return Err(MpccError::Qp(e)),
        }
    }
    let Some(problem) = problem else {
        return Err(MpccError::Qp(QpError::NotPositiveSemidefinite));
    };
    let ineq = problem.a_ineq.clone().map(|a| (a, problem.b_ineq.clone()));
    let sol = match solve_qp(&problem) {
        Ok(s) => s,
        Err(QpError::MaxIterations) => {
            // Degeneracy: jitter the equality targets by 1e-9 and retry once.
            let eq_jittered = eq.map(|(a, d)| {
                let jitter = DenseVector::new(
                    (0..d.len())
                        .map(|i| if i % 2 == 0 { 1e-9 } else { -1e-9 })
                        .collect(),
                );
                (a, d.add(&jitter))
            });
            let retry = QpProblem::new(
                problem.q.clone(),
                problem.c.clone(),
                ineq,
                eq_jittered,
            )
            .map_err(MpccError::Qp)?;
            solve_qp(&retry).map_err(MpccError::Qp)?
        }
        Err(e) => return Err(MpccError::Qp(e)),
    };
    match sol.status {
        QpStatus::Optimal => Ok(Some(sol.theta)),
        QpStatus::Infeasible | QpStatus::Unbounded => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{build_lp_system, build_qp_system};
    use crate::lp::LpProblem;

    /// Intersection-bounds system with estimated means and V̂ = I.
    fn sim1_system(xbar: [f64; 2], n: usize) -> (KktSystem, EstimatedCoefficients) {
        let p = LpProblem::new(
            DenseMatrix::new(2, 1, vec![-1.0, -1.0]),
            DenseVector::from([-xbar[0], -xbar[1]]),
            DenseVector::from([-1.0]),
            false,
        )
        .unwrap();
        let point = DenseVector::from([-1.0, -1.0, -xbar[0], -xbar[1], -1.0]);
        let mut v = DenseMatrix::zeros(5, 5);
        v[(2, 2)] = 1.0;
        v[(3, 3)] = 1.0;
        let est = EstimatedCoefficients::new(
            point,
            v,
            n,
            vec![false, false, true, true, false],
        )
        .unwrap();
        let sys = build_lp_system(&p, &est).unwrap();
        (sys, est)
    }

    #[test]
    fn statistic_zero_at_sample_optimum() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let res = profile_statistic(&sys, &est, &DenseVector::from([5.0])).unwrap();
        assert!(res.statistic.abs() <= 1e-10, "statistic {}", res.statistic);
        assert!((res.lambda_star[0] - 1.0).abs() < 1e-8);
        assert!(res.lambda_star[1].abs() < 1e-8);
        assert!(res.s_star[0].abs() < 1e-9);
        assert!((res.s_star[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn sim1_quadratic_in_theta_below_max() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let res = profile_statistic(&sys, &est, &DenseVector::from([4.5])).unwrap();
        assert!((res.statistic - 25.0).abs() < 1e-6, "statistic {}", res.statistic);
        // Winning piece binds the first row: s₁ = 0.
        assert_eq!(res.piece[0], PieceSide::ZeroSlack);
        assert_eq!(res.piece[1], PieceSide::ZeroMultiplier);
        assert!(res.s_star[0].abs() <= 1e-9);
        // Complementarity and signs hold at the reported minimizer.
        for (pos, &(li, sref)) in sys.complementarity_pairs.iter().enumerate() {
            let slack = match sref {
                SlackRef::Slack(a) => res.s_star[a],
                SlackRef::Theta(_) => unreachable!(),
            };
            assert!(res.lambda_star[li] >= -1e-9);
            assert!(slack >= -1e-9);
            assert!(
                res.lambda_star[li] * slack <= 1e-10,
                "pair {pos} violates complementarity"
            );
        }
    }

    #[test]
    fn sim1_converges_in_one_sweep() {
        // G does not depend on λ here, so the weight is constant.
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let res = profile_statistic(&sys, &est, &DenseVector::from([4.2])).unwrap();
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn winning_piece_beats_all_pieces() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        for theta in [3.4, 4.5, 5.0, 5.6] {
            let theta = DenseVector::from([theta]);
            let res = profile_statistic(&sys, &est, &theta).unwrap();
            for a in [PieceSide::ZeroMultiplier, PieceSide::ZeroSlack] {
                for b in [PieceSide::ZeroMultiplier, PieceSide::ZeroSlack] {
                    match minimize_piece(&sys, &est, &theta, &[a, b]).unwrap() {
                        PieceOutcome::Infeasible => {}
                        PieceOutcome::Solved { value, .. } => {
                            assert!(res.statistic <= value + 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn residual_scaling_is_quadratic_per_piece() {
        // Scaling the mean misfit by t scales each piece value by t²; the
        // weight is constant for this system so frozen = actual.
        let theta = DenseVector::from([4.0]);
        let t = 1.9f64;
        let (sys1, est1) = sim1_system([5.0, 3.0], 100);
        // Means scaled about θ: X̄' = θ + t (X̄ - θ).
        let scaled = [4.0 + t * (5.0 - 4.0), 4.0 + t * (3.0 - 4.0)];
        let (sys2, est2) = sim1_system([scaled[0], scaled[1]], 100);
        for a in [PieceSide::ZeroMultiplier, PieceSide::ZeroSlack] {
            for b in [PieceSide::ZeroMultiplier, PieceSide::ZeroSlack] {
                let v1 = minimize_piece(&sys1, &est1, &theta, &[a, b]).unwrap();
                let v2 = minimize_piece(&sys2, &est2, &theta, &[a, b]).unwrap();
                match (v1, v2) {
                    (PieceOutcome::Infeasible, PieceOutcome::Infeasible) => {}
                    (
                        PieceOutcome::Solved { value: x, .. },
                        PieceOutcome::Solved { value: y, .. },
                    ) => {
                        assert!(
                            (y - t * t * x).abs() <= 1e-8 * (1.0 + y.abs()),
                            "expected t² scaling: {x} -> {y}"
                        );
                    }
                    other => panic!("feasibility changed under scaling: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn all_nuisance_zeroed_piece() {
        // QP: min cθ + ½qθ² s.t. θ ≥ 0 with (c, q) estimated. The only
        // multiplier pairs with θ itself, so at θ > 0 everything is zeroed.
        let q = DenseMatrix::new(1, 1, vec![1.2]);
        let c = DenseVector::from([-0.7]);
        let p = QpProblem::new(
            q.clone(),
            c.clone(),
            Some((DenseMatrix::identity(1), DenseVector::zeros(1))),
            None,
        )
        .unwrap();
        // Stacking: vec(A)=1 | b=0 | c | vec(Q).
        let point = DenseVector::from([1.0, 0.0, -0.7, 1.2]);
        let mut v = DenseMatrix::zeros(4, 4);
        v[(2, 2)] = 1.0;
        v[(3, 3)] = 1.0;
        let est = EstimatedCoefficients::new(point, v, 50, vec![false, false, true, true])
            .unwrap();
        let sys = build_qp_system(&p, &est).unwrap();
        assert_eq!(sys.df, 1);

        let theta = DenseVector::from([0.4]);
        let res = profile_statistic(&sys, &est, &theta).unwrap();
        // g = λ - c - qθ at λ = 0; G = (-1, -θ); weight = 1/(1 + θ²).
        let g = 0.7 - 1.2 * 0.4;
        let expected = 50.0 * g * g / (1.0 + 0.4 * 0.4);
        assert!(
            (res.statistic - expected).abs() <= 1e-9 * (1.0 + expected),
            "statistic {} vs expected {expected}",
            res.statistic
        );
        assert_eq!(res.piece, vec![PieceSide::ZeroMultiplier]);
        assert_eq!(res.lambda_star[0], 0.0);
    }

    #[test]
    fn infeasible_constraints_reported() {
        // Sim1's dual constraint λ₁ + λ₂ = 1 cannot hold when both λ are
        // zeroed; forcing both multiplier sides must report infeasibility.
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let out = minimize_piece(
            &sys,
            &est,
            &DenseVector::from([4.0]),
            &[PieceSide::ZeroMultiplier, PieceSide::ZeroMultiplier],
        )
        .unwrap();
        assert!(matches!(out, PieceOutcome::Infeasible));
    }

    #[test]
    fn pair_limit_guard() {
        let m = 21;
        let a = DenseMatrix::new(m, 1, vec![1.0; m]);
        let b = DenseVector::new((0..m).map(|i| i as f64 + 1.0).collect());
        let c = DenseVector::from([1.0]);
        let p = LpProblem::new(a.clone(), b.clone(), c.clone(), false).unwrap();
        let mut point = a.vec().as_slice().to_vec();
        point.extend_from_slice(b.as_slice());
        point.extend_from_slice(c.as_slice());
        let dim = point.len();
        let est = EstimatedCoefficients::new(
            DenseVector::new(point),
            DenseMatrix::identity(dim),
            10,
            vec![true; dim],
        )
        .unwrap();
        let sys = build_lp_system(&p, &est).unwrap();
        let err = profile_statistic(&sys, &est, &DenseVector::from([0.5])).unwrap_err();
        assert!(matches!(err, MpccError::PieceLimitExceeded { pairs: 21 }));
    }
}
