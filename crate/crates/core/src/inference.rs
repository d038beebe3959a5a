//! Confidence sets by test inversion: membership tests against chi-square
//! critical values, lattice scans over a bounded parameter box, and
//! per-coordinate projection intervals refined by bisection.
//!
//! Equality constraints on θ (the portfolio's `1'θ = 1`, for instance) are
//! resolved by parameterizing the constrained subspace: Gaussian elimination
//! pins one coordinate per equality and the lattice runs over the remaining
//! free coordinates, so every grid point satisfies the equalities exactly.

use crate::densela::DenseVector;
use crate::exec;
use crate::kkt::{EstimatedCoefficients, KktSystem};
use crate::mpcc::{profile_statistic, MpccError};
use crate::stats::{chi2_quantile, StatsError};
use std::fmt;

const GRID_LIMIT: u128 = 10_000_000;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug)]
pub enum InferenceError {
    BadSpec(String),
    GridTooLarge { points: u128 },
    /// No lattice point was accepted; carries the smallest statistic seen,
    /// which is diagnostic for misspecification.
    EmptySet { min_statistic: f64 },
    Mpcc(MpccError),
    Stats(StatsError),
}

impl fmt::Display for InferenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferenceError::BadSpec(msg) => write!(f, "bad confidence spec: {msg}"),
            InferenceError::GridTooLarge { points } => {
                write!(f, "grid has {points} points, over the {GRID_LIMIT} limit")
            }
            InferenceError::EmptySet { min_statistic } => {
                write!(f, "empty confidence set (minimum statistic {min_statistic:.6})")
            }
            InferenceError::Mpcc(e) => write!(f, "{e}"),
            InferenceError::Stats(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for InferenceError {}

impl From<MpccError> for InferenceError {
    fn from(e: MpccError) -> Self {
        InferenceError::Mpcc(e)
    }
}

impl From<StatsError> for InferenceError {
    fn from(e: StatsError) -> Self {
        InferenceError::Stats(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Eq,
    Ge,
    Le,
}

/// A linear restriction `coeffs'θ {=, ≥, ≤} rhs` imposed on the parameter
/// space during inversion.
#[derive(Debug, Clone)]
pub struct ThetaConstraint {
    pub coeffs: DenseVector,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl ThetaConstraint {
    pub fn eq(coeffs: DenseVector, rhs: f64) -> Self {
        Self { coeffs, sense: ConstraintSense::Eq, rhs }
    }

    pub fn ge(coeffs: DenseVector, rhs: f64) -> Self {
        Self { coeffs, sense: ConstraintSense::Ge, rhs }
    }

    pub fn le(coeffs: DenseVector, rhs: f64) -> Self {
        Self { coeffs, sense: ConstraintSense::Le, rhs }
    }

    fn satisfied(&self, theta: &DenseVector) -> bool {
        let v = self.coeffs.dot(theta);
        match self.sense {
            ConstraintSense::Eq => (v - self.rhs).abs() <= FEAS_TOL,
            ConstraintSense::Ge => v >= self.rhs - FEAS_TOL,
            ConstraintSense::Le => v <= self.rhs + FEAS_TOL,
        }
    }
}

/// What to invert: confidence level, degrees of freedom, the search box for
/// θ, the lattice step, and any extra restrictions on θ.
#[derive(Debug, Clone)]
pub struct ConfidenceSpec {
    pub alpha: f64,
    pub df: usize,
    pub theta_box: Vec<(f64, f64)>,
    pub grid_step: f64,
    pub extra_theta_constraints: Vec<ThetaConstraint>,
}

impl ConfidenceSpec {
    fn validate(&self, k: usize) -> Result<(), InferenceError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(InferenceError::BadSpec(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if self.grid_step <= 0.0 {
            return Err(InferenceError::BadSpec("grid_step must be positive".into()));
        }
        if self.theta_box.len() != k {
            return Err(InferenceError::BadSpec(format!(
                "theta_box has {} coordinates, system has {k}",
                self.theta_box.len()
            )));
        }
        for (j, &(lo, hi)) in self.theta_box.iter().enumerate() {
            if lo >= hi {
                return Err(InferenceError::BadSpec(format!(
                    "theta_box[{j}] has lower {lo} >= upper {hi}"
                )));
            }
        }
        for (i, c) in self.extra_theta_constraints.iter().enumerate() {
            if c.coeffs.len() != k {
                return Err(InferenceError::BadSpec(format!(
                    "constraint {i} has {} coefficients, expected {k}",
                    c.coeffs.len()
                )));
            }
        }
        Ok(())
    }

    pub fn critical_value(&self) -> Result<f64, InferenceError> {
        Ok(chi2_quantile(self.df, 1.0 - self.alpha)?)
    }
}

/// Accepted grid points with their statistics, the critical value used, and
/// the per-coordinate projection envelope (empty when nothing is accepted).
#[derive(Debug, Clone)]
pub struct ConfidenceSet {
    pub accepted: Vec<(DenseVector, f64)>,
    pub critical_value: f64,
    pub projection: Vec<(f64, f64)>,
    /// Smallest statistic seen across the whole scan.
    pub min_statistic: f64,
}

/// Default search box: sample solution ± 10 standard errors derived from
/// the V̂ diagonal (falling back to ±1 for noiseless coefficients).
pub fn default_theta_box(center: &DenseVector, est: &EstimatedCoefficients) -> Vec<(f64, f64)> {
    let mut max_var = 0.0f64;
    for i in 0..est.v_hat.rows() {
        max_var = max_var.max(est.v_hat[(i, i)]);
    }
    let radius = if max_var > 0.0 && est.n > 0 {
        10.0 * (max_var / est.n as f64).sqrt()
    } else {
        1.0
    };
    let radius = radius.max(1e-6);
    center.iter().map(|&c| (c - radius, c + radius)).collect()
}

/// Test whether θ belongs to the confidence set. Returns the acceptance
/// flag and the profiled statistic.
pub fn member(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    spec: &ConfidenceSpec,
    theta: &DenseVector,
) -> Result<(bool, f64), InferenceError> {
    spec.validate(sys.theta_dim())?;
    for (j, &(lo, hi)) in spec.theta_box.iter().enumerate() {
        if theta[j] < lo - FEAS_TOL || theta[j] > hi + FEAS_TOL {
            return Err(InferenceError::BadSpec(format!(
                "theta[{j}] = {} outside the search box [{lo}, {hi}]",
                theta[j]
            )));
        }
    }
    for (i, c) in spec.extra_theta_constraints.iter().enumerate() {
        if !c.satisfied(theta) {
            return Err(InferenceError::BadSpec(format!("theta violates constraint {i}")));
        }
    }
    let crit = spec.critical_value()?;
    let profile = profile_statistic(sys, est, theta)?;
    Ok((profile.statistic <= crit, profile.statistic))
}

/// One pinned coordinate: `θ_coord = constant + Σ coeffs[f]·θ_f` over free
/// coordinates only.
#[derive(Debug, Clone)]
struct Pivot {
    coord: usize,
    coeffs: Vec<f64>,
    constant: f64,
}

#[derive(Debug, Clone)]
struct Elimination {
    pivots: Vec<Pivot>,
    free: Vec<usize>,
    infeasible: bool,
}

/// Gaussian elimination over the equality constraints. Pivots prefer the
/// highest-index coordinate (so `1'θ = 1` pins the last weight), except
/// that `prefer` wins when present in a row.
fn eliminate(k: usize, eqs: &[(Vec<f64>, f64)], prefer: Option<usize>) -> Elimination {
    let mut pivots: Vec<Pivot> = Vec::new();
    let mut infeasible = false;
    for (coeffs0, rhs0) in eqs {
        let mut coeffs = coeffs0.clone();
        let mut rhs = *rhs0;
        for p in &pivots {
            let t = coeffs[p.coord];
            if t != 0.0 {
                coeffs[p.coord] = 0.0;
                for (c, pc) in coeffs.iter_mut().zip(&p.coeffs) {
                    *c += t * pc;
                }
                rhs -= t * p.constant;
            }
        }
        let pick = prefer
            .filter(|&j| coeffs[j].abs() > 1e-10 && !pivots.iter().any(|p| p.coord == j))
            .or_else(|| {
                (0..k)
                    .rev()
                    .find(|&q| coeffs[q].abs() > 1e-10 && !pivots.iter().any(|p| p.coord == q))
            });
        let Some(pc) = pick else {
            if rhs.abs() > FEAS_TOL {
                infeasible = true;
            }
            continue;
        };
        let lead = coeffs[pc];
        let mut expr = vec![0.0; k];
        for q in 0..k {
            if q != pc {
                expr[q] = -coeffs[q] / lead;
            }
        }
        let constant = rhs / lead;
        // Keep earlier pivot expressions free of the new pivot coordinate.
        for p in pivots.iter_mut() {
            let t = p.coeffs[pc];
            if t != 0.0 {
                p.coeffs[pc] = 0.0;
                for (c, e) in p.coeffs.iter_mut().zip(&expr) {
                    *c += t * e;
                }
                p.constant += t * constant;
            }
        }
        pivots.push(Pivot { coord: pc, coeffs: expr, constant });
    }
    let free: Vec<usize> =
        (0..k).filter(|q| !pivots.iter().any(|p| p.coord == *q)).collect();
    Elimination { pivots, free, infeasible }
}

/// Lattice over the free coordinates of an elimination, addressable by flat
/// index so scans can run data-parallel.
struct Lattice<'a> {
    spec: &'a ConfidenceSpec,
    elim: &'a Elimination,
    counts: Vec<usize>,
    total: u128,
    k: usize,
}

impl<'a> Lattice<'a> {
    fn new(spec: &'a ConfidenceSpec, elim: &'a Elimination, k: usize) -> Self {
        let counts: Vec<usize> = elim
            .free
            .iter()
            .map(|&f| {
                let (lo, hi) = spec.theta_box[f];
                ((hi - lo) / spec.grid_step + 1e-9).floor() as usize + 1
            })
            .collect();
        let total = counts.iter().map(|&c| c as u128).product::<u128>().max(1);
        Self { spec, elim, counts, total, k }
    }

    /// The θ at a flat index, or `None` when it falls outside the box or
    /// violates an inequality constraint.
    fn point_at(&self, flat: usize) -> Option<DenseVector> {
        let mut theta = DenseVector::zeros(self.k);
        let mut rest = flat;
        for (dim, &f) in self.elim.free.iter().enumerate() {
            let idx = rest % self.counts[dim];
            rest /= self.counts[dim];
            theta[f] = self.spec.theta_box[f].0 + idx as f64 * self.spec.grid_step;
        }
        for p in &self.elim.pivots {
            let mut v = p.constant;
            for &f in &self.elim.free {
                v += p.coeffs[f] * theta[f];
            }
            if v.abs() < 1e-12 {
                v = 0.0; // snap accumulation residue off exact zeros
            }
            let (lo, hi) = self.spec.theta_box[p.coord];
            if v < lo - FEAS_TOL || v > hi + FEAS_TOL {
                return None;
            }
            theta[p.coord] = v;
        }
        for c in &self.spec.extra_theta_constraints {
            if c.sense != ConstraintSense::Eq && !c.satisfied(&theta) {
                return None;
            }
        }
        Some(theta)
    }
}

fn equality_rows(spec: &ConfidenceSpec) -> Vec<(Vec<f64>, f64)> {
    spec.extra_theta_constraints
        .iter()
        .filter(|c| c.sense == ConstraintSense::Eq)
        .map(|c| (c.coeffs.as_slice().to_vec(), c.rhs))
        .collect()
}

/// Evaluate membership on every lattice point of the box satisfying the
/// extra constraints.
pub fn grid_scan(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    spec: &ConfidenceSpec,
) -> Result<ConfidenceSet, InferenceError> {
    grid_scan_threads(sys, est, spec, exec::default_threads())
}

pub fn grid_scan_threads(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    spec: &ConfidenceSpec,
    threads: usize,
) -> Result<ConfidenceSet, InferenceError> {
    let k = sys.theta_dim();
    spec.validate(k)?;
    let crit = spec.critical_value()?;
    let elim = eliminate(k, &equality_rows(spec), None);
    if elim.infeasible {
        return Ok(ConfidenceSet {
            accepted: Vec::new(),
            critical_value: crit,
            projection: Vec::new(),
            min_statistic: f64::INFINITY,
        });
    }
    let lattice = Lattice::new(spec, &elim, k);
    if lattice.total > GRID_LIMIT {
        return Err(InferenceError::GridTooLarge { points: lattice.total });
    }
    let total = lattice.total as usize;

    type PointResult = Result<Option<(DenseVector, f64)>, MpccError>;
    let results: Vec<PointResult> = exec::parallel_map(total, threads, |flat| {
        match lattice.point_at(flat) {
            None => Ok(None),
            Some(theta) => {
                let profile = profile_statistic(sys, est, &theta)?;
                Ok(Some((theta, profile.statistic)))
            }
        }
    });

    let mut accepted = Vec::new();
    let mut min_statistic = f64::INFINITY;
    for res in results {
        if let Some((theta, stat)) = res? {
            min_statistic = min_statistic.min(stat);
            if stat <= crit {
                accepted.push((theta, stat));
            }
        }
    }
    let projection = envelope(&accepted, k);
    Ok(ConfidenceSet { accepted, critical_value: crit, projection, min_statistic })
}

fn envelope(accepted: &[(DenseVector, f64)], k: usize) -> Vec<(f64, f64)> {
    if accepted.is_empty() {
        return Vec::new();
    }
    (0..k)
        .map(|j| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (theta, _) in accepted {
                lo = lo.min(theta[j]);
                hi = hi.max(theta[j]);
            }
            (lo, hi)
        })
        .collect()
}

/// Is any lattice point with `θ_j = t` accepted? Used as the bisection
/// predicate when refining projection intervals; the remaining coordinates
/// are searched on the coarse grid.
fn accepted_on_slice(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    spec: &ConfidenceSpec,
    j: usize,
    t: f64,
    crit: f64,
) -> Result<bool, InferenceError> {
    let k = sys.theta_dim();
    let mut pin = vec![0.0; k];
    pin[j] = 1.0;
    let mut eqs = vec![(pin, t)];
    eqs.extend(equality_rows(spec));
    let elim = eliminate(k, &eqs, Some(j));
    if elim.infeasible {
        return Ok(false);
    }
    let lattice = Lattice::new(spec, &elim, k);
    if lattice.total > GRID_LIMIT {
        return Err(InferenceError::GridTooLarge { points: lattice.total });
    }
    for flat in 0..lattice.total as usize {
        if let Some(theta) = lattice.point_at(flat) {
            let profile = profile_statistic(sys, est, &theta)?;
            if profile.statistic <= crit {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Per-coordinate projection interval `[inf θ_j, sup θ_j]` over the
/// confidence set, refined beyond the grid by bisection until the bracket
/// is narrower than `grid_step / 10`. The reported endpoints are the outer
/// (rejected) ends of the final brackets, so the interval always envelops
/// the accepted region.
pub fn projection_interval(
    sys: &KktSystem,
    est: &EstimatedCoefficients,
    spec: &ConfidenceSpec,
    j: usize,
) -> Result<(f64, f64), InferenceError> {
    let k = sys.theta_dim();
    spec.validate(k)?;
    if j >= k {
        return Err(InferenceError::BadSpec(format!("coordinate {j} out of range")));
    }
    let set = grid_scan(sys, est, spec)?;
    if set.accepted.is_empty() {
        return Err(InferenceError::EmptySet { min_statistic: set.min_statistic });
    }
    let crit = set.critical_value;
    let (env_lo, env_hi) = set.projection[j];
    let (box_lo, box_hi) = spec.theta_box[j];
    let tol = spec.grid_step / 10.0;

    // Upper side: bracket [accepted, rejected] and shrink.
    let upper = {
        let mut a = env_hi;
        let mut b = (env_hi + spec.grid_step).min(box_hi);
        if b - a < 1e-15 || accepted_on_slice(sys, est, spec, j, b, crit)? {
            b
        } else {
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if accepted_on_slice(sys, est, spec, j, mid, crit)? {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            b
        }
    };
    let lower = {
        let mut b = env_lo;
        let mut a = (env_lo - spec.grid_step).max(box_lo);
        if b - a < 1e-15 || accepted_on_slice(sys, est, spec, j, a, crit)? {
            a
        } else {
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if accepted_on_slice(sys, est, spec, j, mid, crit)? {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            a
        }
    };
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::DenseMatrix;
    use crate::kkt::{build_lp_system, build_qp_system};
    use crate::lp::LpProblem;
    use crate::qp::QpProblem;

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
        let est =
            EstimatedCoefficients::new(point, v, n, vec![false, false, true, true, false])
                .unwrap();
        let sys = build_lp_system(&p, &est).unwrap();
        (sys, est)
    }

    fn sim1_spec(alpha: f64) -> ConfidenceSpec {
        ConfidenceSpec {
            alpha,
            df: 2,
            theta_box: vec![(3.0, 7.0)],
            grid_step: 0.01,
            extra_theta_constraints: Vec::new(),
        }
    }

    #[test]
    fn sample_solution_always_accepted() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let spec = sim1_spec(0.05);
        let (ok, stat) = member(&sys, &est, &spec, &DenseVector::from([5.0])).unwrap();
        assert!(ok);
        assert!(stat.abs() <= 1e-10);
    }

    #[test]
    fn member_matches_one_dimensional_algebra() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let spec = sim1_spec(0.05);
        let (ok, stat) = member(&sys, &est, &spec, &DenseVector::from([4.5])).unwrap();
        assert!(!ok);
        assert!((stat - 25.0).abs() < 1e-6);
        let (ok, stat) = member(&sys, &est, &spec, &DenseVector::from([5.1])).unwrap();
        assert!(ok);
        assert!((stat - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_scan_inverts_the_statistic() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let spec = sim1_spec(0.05);
        let set = grid_scan(&sys, &est, &spec).unwrap();
        // Closed form: accepted iff 100 (θ - 5)² ≤ χ²₂(0.95) = 5.9915.
        let half_width = (5.991464547107979f64 / 100.0).sqrt();
        let (lo, hi) = set.projection[0];
        assert!((lo - (5.0 - half_width)).abs() <= spec.grid_step + 1e-12);
        assert!((hi - (5.0 + half_width)).abs() <= spec.grid_step + 1e-12);
        for (theta, stat) in &set.accepted {
            assert!(*stat <= set.critical_value);
            assert!((100.0 * (theta[0] - 5.0).powi(2) - stat).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_noise_collapses_the_set() {
        let p = LpProblem::new(
            DenseMatrix::new(2, 1, vec![-1.0, -1.0]),
            DenseVector::from([-5.0, -3.0]),
            DenseVector::from([-1.0]),
            false,
        )
        .unwrap();
        let point = DenseVector::from([-1.0, -1.0, -5.0, -3.0, -1.0]);
        let mut v = DenseMatrix::zeros(5, 5);
        v[(2, 2)] = 1e-6;
        v[(3, 3)] = 1e-6;
        let est =
            EstimatedCoefficients::new(point, v, 100, vec![false, false, true, true, false])
                .unwrap();
        let sys = build_lp_system(&p, &est).unwrap();
        let set = grid_scan(&sys, &est, &sim1_spec(0.05)).unwrap();
        assert_eq!(set.accepted.len(), 1);
        assert!((set.accepted[0].0[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn acceptance_is_monotone_in_alpha() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let tight = grid_scan(&sys, &est, &sim1_spec(0.05)).unwrap();
        let loose = grid_scan(&sys, &est, &sim1_spec(0.01)).unwrap();
        // Smaller α means a larger critical value, so every θ accepted at
        // α = 0.05 stays accepted at α = 0.01.
        let loose_thetas: Vec<f64> = loose.accepted.iter().map(|(t, _)| t[0]).collect();
        for (theta, _) in &tight.accepted {
            assert!(loose_thetas.iter().any(|&t| (t - theta[0]).abs() < 1e-12));
        }
        assert!(loose.accepted.len() >= tight.accepted.len());
    }

    #[test]
    fn projection_refines_the_envelope() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let spec = sim1_spec(0.05);
        let (lo, hi) = projection_interval(&sys, &est, &spec, 0).unwrap();
        let half_width = (5.991464547107979f64 / 100.0).sqrt();
        // Outer bracket ends: within grid_step/10 above the exact bound.
        assert!(hi >= 5.0 + half_width - 1e-9);
        assert!(hi <= 5.0 + half_width + spec.grid_step / 10.0 + 1e-9);
        assert!(lo <= 5.0 - half_width + 1e-9);
        assert!(lo >= 5.0 - half_width - spec.grid_step / 10.0 - 1e-9);
    }

    #[test]
    fn empty_set_reports_minimum_statistic() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let mut spec = sim1_spec(0.05);
        spec.theta_box = vec![(6.0, 7.0)]; // excludes the whole accepted region
        let err = projection_interval(&sys, &est, &spec, 0).unwrap_err();
        match err {
            InferenceError::EmptySet { min_statistic } => {
                // Nearest box point is θ = 6: statistic 100 (6 - 5)² = 100.
                assert!((min_statistic - 100.0).abs() < 1e-6);
            }
            other => panic!("expected EmptySet, got {other:?}"),
        }
    }

    /// Two exchangeable assets on the simplex: projections for the two
    /// weights must coincide.
    #[test]
    fn exchangeable_assets_have_identical_projections() {
        let q = DenseMatrix::from_rows(&[vec![0.3, 0.1], vec![0.1, 0.3]]);
        let r = [2.0, 2.0];
        let mu = 2.0;
        let p = QpProblem::new(
            q.clone(),
            DenseVector::zeros(2),
            Some((DenseMatrix::identity(2), DenseVector::zeros(2))),
            Some((
                DenseMatrix::from_rows(&[r.to_vec(), vec![1.0, 1.0]]),
                DenseVector::from([mu, 1.0]),
            )),
        )
        .unwrap();
        // Stacked: vec(Â) 8 | b̂ 4 | ĉ 2 | vec(Q̂) 4 with Â = [I; R'; 1'].
        let m = 4;
        let mut point = DenseVector::zeros(8 + 4 + 2 + 4);
        let mut mask = vec![false; 18];
        for j in 0..2 {
            point[j * m + j] = 1.0;
            point[j * m + 2] = r[j];
            mask[j * m + 2] = true;
            point[j * m + 3] = 1.0;
        }
        point[8 + 2] = mu;
        point[8 + 3] = 1.0;
        for j in 0..2 {
            for i in 0..2 {
                point[14 + j * 2 + i] = q[(i, j)];
                mask[14 + j * 2 + i] = true;
            }
        }
        let mut v = DenseMatrix::zeros(18, 18);
        for (i, &s) in mask.iter().enumerate() {
            if s {
                v[(i, i)] = 0.01;
            }
        }
        let est = EstimatedCoefficients::new(point, v, 200, mask).unwrap();
        let sys = build_qp_system(&p, &est).unwrap();
        let spec = ConfidenceSpec {
            alpha: 0.10,
            df: sys.df,
            theta_box: vec![(0.0, 1.0), (0.0, 1.0)],
            grid_step: 0.05,
            extra_theta_constraints: vec![ThetaConstraint::eq(
                DenseVector::from([1.0, 1.0]),
                1.0,
            )],
        };
        let set = grid_scan(&sys, &est, &spec).unwrap();
        assert!(!set.accepted.is_empty());
        for (theta, _) in &set.accepted {
            assert!((theta[0] + theta[1] - 1.0).abs() <= 1e-12);
            assert!(theta[0] >= -1e-12 && theta[1] >= -1e-12);
        }
        let p0 = projection_interval(&sys, &est, &spec, 0).unwrap();
        let p1 = projection_interval(&sys, &est, &spec, 1).unwrap();
        assert!((p0.0 - p1.0).abs() <= spec.grid_step / 10.0 + 1e-9, "{p0:?} vs {p1:?}");
        assert!((p0.1 - p1.1).abs() <= spec.grid_step / 10.0 + 1e-9, "{p0:?} vs {p1:?}");
    }

    #[test]
    fn projection_contains_accepted_coordinates() {
        let (sys, est) = sim1_system([5.0, 3.0], 200);
        let spec = sim1_spec(0.10);
        let set = grid_scan(&sys, &est, &spec).unwrap();
        let (lo, hi) = projection_interval(&sys, &est, &spec, 0).unwrap();
        for (theta, _) in &set.accepted {
            assert!(theta[0] >= lo - 1e-12 && theta[0] <= hi + 1e-12);
        }
    }

    #[test]
    fn grid_guard_trips() {
        let (sys, est) = sim1_system([5.0, 3.0], 100);
        let mut spec = sim1_spec(0.05);
        spec.grid_step = 1e-9;
        assert!(matches!(
            grid_scan(&sys, &est, &spec),
            Err(InferenceError::GridTooLarge { .. })
        ));
    }
}
