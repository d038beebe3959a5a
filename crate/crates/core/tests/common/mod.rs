//! Shared oracles for the integration suites. These deliberately take
//! different routes than the library: vertex enumeration checks the
//! simplex, exhaustive active-set enumeration checks the QP solver, and a
//! dense nuisance grid over the raw weighted objective checks the profiled
//! statistic.

use mpinfer::densela::{DenseMatrix, DenseVector};
use mpinfer::kkt::{build_lp_system, EstimatedCoefficients, KktSystem, SlackRef};
use mpinfer::lp::{LpProblem, LpSolution};
use mpinfer::qp::QpProblem;
use mpinfer::stats::Rng;

/// Random LP per the oracle protocol: coefficients uniform on [-3, 3] and
/// feasibility forced by `b = A θ₀ + |noise|`. Sign-constrained instances
/// draw θ₀ ≥ 0 so the forced point stays feasible.
pub fn random_lp(rng: &mut Rng, max_dim: usize, nonneg: bool) -> LpProblem {
    let k = 1 + (rng.next_u64() as usize) % max_dim;
    let m = if nonneg {
        1 + (rng.next_u64() as usize) % max_dim
    } else {
        // Free variables need at least k rows for the feasible set to have
        // vertices at all.
        k + (rng.next_u64() as usize) % (max_dim.max(k) - k + 1)
    };
    let a = DenseMatrix::new(m, k, (0..m * k).map(|_| rng.uniform_range(-3.0, 3.0)).collect());
    let theta0 = DenseVector::new(
        (0..k)
            .map(|_| if nonneg { rng.uniform_range(0.0, 3.0) } else { rng.uniform_range(-3.0, 3.0) })
            .collect(),
    );
    let noise = DenseVector::new((0..m).map(|_| rng.uniform_range(0.0, 1.0)).collect());
    let b = a.matvec(&theta0).add(&noise);
    let c = DenseVector::new((0..k).map(|_| rng.uniform_range(-3.0, 3.0)).collect());
    LpProblem::new(a, b, c, nonneg).expect("conforming dimensions")
}

/// Assert the full optimality residual suite on an Optimal LP solution.
pub fn assert_lp_kkt(p: &LpProblem, sol: &LpSolution) {
    assert!(sol.lambda.iter().all(|&l| l >= -1e-9), "negative multiplier: {:?}", sol.lambda);
    assert!(sol.slack.iter().all(|&s| s >= -1e-9), "negative slack: {:?}", sol.slack);
    for i in 0..p.num_constraints() {
        assert!(
            sol.lambda[i] * sol.slack[i] <= 1e-9,
            "complementarity violated at row {i}: {} * {}",
            sol.lambda[i],
            sol.slack[i]
        );
    }
    let dual_resid = p.a.tr_matvec(&sol.lambda).sub(&p.c);
    if p.nonneg {
        // A'λ - ν = c with ν ≥ 0 and ν ⊥ θ.
        let nu = sol.sign_duals(p);
        assert!(nu.iter().all(|&v| v >= -1e-8), "negative sign dual: {nu:?}");
        for j in 0..p.num_vars() {
            assert!(nu[j] * sol.theta[j].max(0.0) <= 1e-7, "sign complementarity at {j}");
        }
    } else {
        assert!(dual_resid.norm_inf() <= 1e-9, "dual residual {:e}", dual_resid.norm_inf());
    }
    let gap = (p.c.dot(&sol.theta) - p.b.dot(&sol.lambda)).abs();
    assert!(gap <= 1e-9 * (1.0 + sol.objective.abs()), "duality gap {gap:e}");
}

/// Random convex QP with forced-feasible constraints: `Q = M'M`, `b_ineq =
/// A x₀ - |noise|`, optional equality row through x₀.
pub fn random_qp(rng: &mut Rng, max_dim: usize, with_eq: bool) -> QpProblem {
    let k = 1 + (rng.next_u64() as usize) % max_dim;
    let m_ineq = 1 + (rng.next_u64() as usize) % 6;
    let half = DenseMatrix::new(k, k, (0..k * k).map(|_| rng.uniform_range(-1.5, 1.5)).collect());
    let q = half.transpose().matmul(&half).symmetrized();
    let c = DenseVector::new((0..k).map(|_| rng.uniform_range(-2.0, 2.0)).collect());
    let x0 = DenseVector::new((0..k).map(|_| rng.uniform_range(-2.0, 2.0)).collect());
    let a_i =
        DenseMatrix::new(m_ineq, k, (0..m_ineq * k).map(|_| rng.uniform_range(-2.0, 2.0)).collect());
    let slack = DenseVector::new((0..m_ineq).map(|_| rng.uniform_range(0.0, 1.5)).collect());
    let b_i = a_i.matvec(&x0).sub(&slack);
    let eq = if with_eq && k >= 2 {
        let a_e = DenseMatrix::new(1, k, (0..k).map(|_| rng.uniform_range(-2.0, 2.0)).collect());
        let b_e = DenseVector::new(vec![a_e.matvec(&x0)[0]]);
        Some((a_e, b_e))
    } else {
        None
    };
    QpProblem::new(q, c, Some((a_i, b_i)), eq).expect("valid PSD problem")
}

/// Exhaustive active-set enumeration for small convex QPs: try every
/// subset of inequality rows as the active set, solve the corresponding
/// equality-constrained KKT system, and return the objective of the
/// KKT-feasible point (the global minimum, by convexity).
pub fn qp_active_set_oracle(p: &QpProblem) -> Option<f64> {
    let k = p.num_vars();
    let mi = p.num_ineq();
    let me = p.num_eq();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << mi) {
        let active: Vec<usize> = (0..mi).filter(|&i| mask & (1 << i) != 0).collect();
        let n_w = me + active.len();
        let dim = k + n_w;
        let mut m = DenseMatrix::zeros(dim, dim);
        let mut rhs = DenseVector::zeros(dim);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = p.q[(i, j)];
            }
            rhs[i] = -p.c[i];
        }
        for w in 0..n_w {
            let (coeffs, target): (Vec<f64>, f64) = if w < me {
                (p.eq_row(w).to_vec(), p.b_eq[w])
            } else {
                let row = active[w - me];
                (p.ineq_row(row).to_vec(), p.b_ineq[row])
            };
            for j in 0..k {
                m[(k + w, j)] = coeffs[j];
                m[(j, k + w)] = -coeffs[j];
            }
            rhs[k + w] = target;
        }
        let Ok(sol) = m.solve(&rhs) else { continue };
        let theta = DenseVector::new(sol.as_slice()[..k].to_vec());
        // Primal feasibility over all rows.
        let mut feasible = true;
        for i in 0..mi {
            let v: f64 = p.ineq_row(i).iter().zip(theta.iter()).map(|(a, t)| a * t).sum();
            if v < p.b_ineq[i] - 1e-8 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        // Multipliers on active rows must be non-negative.
        let lam_ok = (0..active.len()).all(|w| sol[k + me + w] >= -1e-8);
        if !lam_ok {
            continue;
        }
        let obj = p.objective(&theta);
        best = Some(match best {
            None => obj,
            Some(b) => b.min(obj),
        });
    }
    best
}

/// Intersection-bounds moment system with estimated means and a given
/// covariance for them.
pub fn intersection_bounds_system(
    xbar: [f64; 2],
    vhat: &DenseMatrix,
    n: usize,
) -> (KktSystem, EstimatedCoefficients) {
    let p = LpProblem::new(
        DenseMatrix::new(2, 1, vec![-1.0, -1.0]),
        DenseVector::from([-xbar[0], -xbar[1]]),
        DenseVector::from([-1.0]),
        false,
    )
    .unwrap();
    let point = DenseVector::from([-1.0, -1.0, -xbar[0], -xbar[1], -1.0]);
    let mut v = DenseMatrix::zeros(5, 5);
    for a in 0..2 {
        for b in 0..2 {
            v[(2 + a, 2 + b)] = vhat[(a, b)];
        }
    }
    let est =
        EstimatedCoefficients::new(point, v, n, vec![false, false, true, true, false]).unwrap();
    let sys = build_lp_system(&p, &est).unwrap();
    (sys, est)
}

/// Closed form of the intersection-bounds profiled statistic for diagonal
/// V̂: one primal row binds (its mean pays the full misfit) while the other
/// row's slack absorbs any downward gap.
pub fn intersection_bounds_closed_form(xbar: [f64; 2], v: [f64; 2], n: usize, theta: f64) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..2 {
        let mut value = (xbar[j] - theta).powi(2) / v[j];
        let other = 1 - j;
        value += (xbar[other] - theta).max(0.0).powi(2) / v[other];
        best = best.min(value);
    }
    n as f64 * best
}

/// Raw profiled objective `n g'(G V̂ G')⁻¹ g` at explicit nuisance values.
pub fn raw_statistic(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
    lambda: &DenseVector,
    s: &DenseVector,
) -> f64 {
    let (g, big_g) = mpinfer::kkt::eval_moments(sys, est, theta, lambda, s).unwrap();
    let w_raw = big_g.matmul(&est.restricted_vhat()).matmul(&big_g.transpose()).symmetrized();
    let weight = match w_raw.sym_pinv(0.0) {
        Ok(w) => w,
        Err(_) => {
            let ridge = 1e-10 * w_raw.trace() / w_raw.rows() as f64;
            w_raw.sym_pinv(ridge).expect("ridge rescues PSD weight")
        }
    };
    est.n as f64 * weight.quad_form(&g)
}

/// Dense-grid brute force over the nuisance parameters of a system whose
/// rows are all moments (no deterministic rows) and whose pairs all carry
/// auxiliary slacks: for each complementarity piece, grid the free entries
/// on `[max(0, center - 2), center + 2]`, then refine twice around the
/// incumbent down to a 1e-4 step.
pub fn mpcc_grid_oracle(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    theta: &DenseVector,
    center_lambda: &DenseVector,
    center_s: &DenseVector,
) -> f64 {
    let pairs = &sys.complementarity_pairs;
    assert!(pairs.len() <= 2, "oracle is sized for at most 2 pairs");
    let n_lambda = sys.n_lambda();
    let n_slack = sys.n_slack();
    let mut best = f64::INFINITY;

    for assignment in 0u32..(1 << pairs.len()) {
        // Free coordinates after zeroing one side per pair.
        let mut lambda_zero = vec![false; n_lambda];
        let mut slack_zero = vec![false; n_slack];
        for (bit, &(li, sref)) in pairs.iter().enumerate() {
            if assignment & (1 << bit) == 0 {
                lambda_zero[li] = true;
            } else {
                match sref {
                    SlackRef::Slack(a) => slack_zero[a] = true,
                    SlackRef::Theta(_) => panic!("oracle expects auxiliary slacks"),
                }
            }
        }
        let free: Vec<(bool, usize, f64)> = (0..n_lambda)
            .filter(|&i| !lambda_zero[i])
            .map(|i| (true, i, center_lambda[i].max(0.0)))
            .chain(
                (0..n_slack)
                    .filter(|&a| !slack_zero[a])
                    .map(|a| (false, a, center_s[a].max(0.0))),
            )
            .collect();

        let eval = |coords: &[f64]| -> f64 {
            let mut lambda = DenseVector::zeros(n_lambda);
            let mut s = DenseVector::zeros(n_slack);
            for ((is_lambda, idx, _), &v) in free.iter().zip(coords) {
                if *is_lambda {
                    lambda[*idx] = v;
                } else {
                    s[*idx] = v;
                }
            }
            raw_statistic(sys, est, theta, &lambda, &s)
        };

        let mut centers: Vec<f64> = free.iter().map(|&(_, _, c)| c).collect();
        let mut half_width = 2.0;
        let mut piece_best = if free.is_empty() { eval(&[]) } else { f64::INFINITY };
        for &step in &[1e-2, 1e-3, 1e-4] {
            if free.is_empty() {
                break;
            }
            let (value, argmin) = grid_minimize(&centers, half_width, step, &eval);
            if value < piece_best {
                piece_best = value;
            }
            centers = argmin;
            half_width = step * 1.5;
        }
        best = best.min(piece_best);
    }
    best
}

/// Minimize `eval` on the product grid `center ± half_width` (clipped at 0)
/// with the given step; returns the best value and its location.
fn grid_minimize(
    centers: &[f64],
    half_width: f64,
    step: f64,
    eval: &dyn Fn(&[f64]) -> f64,
) -> (f64, Vec<f64>) {
    let axes: Vec<Vec<f64>> = centers
        .iter()
        .map(|&c| {
            let lo = (c - half_width).max(0.0);
            let hi = c + half_width;
            let count = ((hi - lo) / step).round() as usize + 1;
            (0..count).map(|i| lo + i as f64 * step).collect()
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut best_at = centers.to_vec();
    let mut idx = vec![0usize; axes.len()];
    loop {
        let coords: Vec<f64> = idx.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect();
        let value = eval(&coords);
        if value < best {
            best = value;
            best_at = coords;
        }
        // Odometer increment.
        let mut dim = 0;
        loop {
            if dim == axes.len() {
                return (best, best_at);
            }
            idx[dim] += 1;
            if idx[dim] < axes[dim].len() {
                break;
            }
            idx[dim] = 0;
            dim += 1;
        }
    }
}

/// Build an all-stochastic LP moment system from a problem, with identity
/// or supplied covariance.
pub fn all_stochastic_lp_system(
    p: &LpProblem,
    vhat: DenseMatrix,
    n: usize,
) -> (KktSystem, EstimatedCoefficients) {
    let mut point = p.a.vec().as_slice().to_vec();
    point.extend_from_slice(p.b.as_slice());
    point.extend_from_slice(p.c.as_slice());
    let dim = point.len();
    assert_eq!(vhat.rows(), dim);
    let est =
        EstimatedCoefficients::new(DenseVector::new(point), vhat, n, vec![true; dim]).unwrap();
    let sys = build_lp_system(p, &est).unwrap();
    (sys, est)
}

/// A well-conditioned random SPD matrix with unit-scale eigenvalues.
pub fn random_spd(rng: &mut Rng, dim: usize) -> DenseMatrix {
    let m = DenseMatrix::new(
        dim,
        dim,
        (0..dim * dim).map(|_| rng.uniform_range(-0.4, 0.4)).collect(),
    );
    let mut spd = m.transpose().matmul(&m).symmetrized();
    for i in 0..dim {
        spd[(i, i)] += 0.5;
    }
    spd
}
