//! Monte Carlo coverage studies for two LP designs: intersection bounds
//! with estimated means (three noise designs), and a 2×2 LP whose A, b and
//! c entries are all sample means of unit-variance normals.
//!
//! Each replication draws a dataset, estimates the coefficients and their
//! covariance, builds the moment system, and tests whether the true θ₀ is
//! accepted; coverage is the acceptance fraction. Replications derive
//! independent generators from `master_seed + replication`, so results are
//! reproducible bit-for-bit and independent of the thread count.

use crate::densela::{DenseMatrix, DenseVector};
use crate::exec;
use crate::inference::{member, ConfidenceSpec, InferenceError, ThetaConstraint};
use crate::kkt::{build_lp_system, EstimatedCoefficients};
use crate::lp::LpProblem;
use crate::stats::{sample_mean_cov, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignId {
    Sim1Design1,
    Sim1Design2,
    Sim1Design3,
    Sim2,
}

/// One simulation cell: a design plus sample size, replication count,
/// level, and master seed.
#[derive(Debug, Clone)]
pub struct SimDesign {
    pub id: DesignId,
    /// Means (μ₁, μ₂) of the intersection-bounds designs.
    pub mu: [f64; 2],
    /// Covariance of (X₁, X₂) for the intersection-bounds designs.
    pub sigma: [[f64; 2]; 2],
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    /// Noise standard deviation for the 2×2 design (1.0 in the study;
    /// 0.0 degenerates every draw to the truth).
    pub noise_sd: f64,
}

impl SimDesign {
    /// Intersection-bounds designs: μ = (5, 3) with per-design covariance
    /// (1,1;0), (3,1;0), (3,1;1.5).
    pub fn sim1(design: u8, n: usize, reps: usize, alpha: f64, master_seed: u64) -> Self {
        let (id, sigma) = match design {
            1 => (DesignId::Sim1Design1, [[1.0, 0.0], [0.0, 1.0]]),
            2 => (DesignId::Sim1Design2, [[3.0, 0.0], [0.0, 1.0]]),
            3 => (DesignId::Sim1Design3, [[3.0, 1.5], [1.5, 1.0]]),
            other => panic!("intersection-bounds design must be 1, 2 or 3, got {other}"),
        };
        Self { id, mu: [5.0, 3.0], sigma, n, reps, alpha, master_seed, noise_sd: 1.0 }
    }

    /// The 2×2 LP with A = [[1,2],[1,-1]], b = (4,1), c = (3,2), all
    /// estimated as means of n unit-variance normals; true θ₀ = (2, 1).
    pub fn sim2(n: usize, reps: usize, alpha: f64, master_seed: u64) -> Self {
        Self {
            id: DesignId::Sim2,
            mu: [0.0, 0.0],
            sigma: [[0.0; 2]; 2],
            n,
            reps,
            alpha,
            master_seed,
            noise_sd: 1.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.id {
            DesignId::Sim1Design1 => "design 1",
            DesignId::Sim1Design2 => "design 2",
            DesignId::Sim1Design3 => "design 3",
            DesignId::Sim2 => "2x2 LP",
        }
    }
}

/// Lower Cholesky factor of a 2×2 covariance.
fn chol2(sigma: [[f64; 2]; 2]) -> [f64; 3] {
    let l11 = sigma[0][0].sqrt();
    let l21 = if l11 > 0.0 { sigma[0][1] / l11 } else { 0.0 };
    let l22 = (sigma[1][1] - l21 * l21).max(0.0).sqrt();
    [l11, l21, l22]
}

fn sim1_replication(design: &SimDesign, rep: usize) -> Result<bool, InferenceError> {
    let mut rng = Rng::new(design.master_seed.wrapping_add(rep as u64));
    let [l11, l21, l22] = chol2(design.sigma);
    let n = design.n;
    let mut data = DenseMatrix::zeros(n, 2);
    for i in 0..n {
        let (z1, z2) = (rng.normal(), rng.normal());
        data[(i, 0)] = design.mu[0] + l11 * z1;
        data[(i, 1)] = design.mu[1] + l21 * z1 + l22 * z2;
    }
    let (mean, cov) = sample_mean_cov(&data).expect("n >= 2");

    let p = LpProblem::new(
        DenseMatrix::new(2, 1, vec![-1.0, -1.0]),
        DenseVector::from([-mean[0], -mean[1]]),
        DenseVector::from([-1.0]),
        false,
    )
    .expect("fixed shape");
    let point = DenseVector::from([-1.0, -1.0, -mean[0], -mean[1], -1.0]);
    let mut v = DenseMatrix::zeros(5, 5);
    for a in 0..2 {
        for b in 0..2 {
            v[(2 + a, 2 + b)] = cov[(a, b)];
        }
    }
    let est = EstimatedCoefficients::new(point, v, n, vec![false, false, true, true, false])
        .map_err(|e| InferenceError::Mpcc(e.into()))?;
    let sys = build_lp_system(&p, &est).map_err(|e| InferenceError::Mpcc(e.into()))?;

    let theta0 = design.mu[0].max(design.mu[1]);
    let spec = ConfidenceSpec {
        alpha: design.alpha,
        df: sys.df,
        theta_box: vec![(theta0 - 1.0, theta0 + 1.0)],
        grid_step: 0.1,
        extra_theta_constraints: Vec::new(),
    };
    let (accepted, _) = member(&sys, &est, &spec, &DenseVector::from([theta0]))?;
    Ok(accepted)
}

fn sim2_replication(design: &SimDesign, rep: usize) -> Result<bool, InferenceError> {
    let mut rng = Rng::new(design.master_seed.wrapping_add(rep as u64));
    // Stacked truth (vec A, b, c).
    let truth = [1.0, 1.0, 2.0, -1.0, 4.0, 1.0, 3.0, 2.0];
    let n = design.n;
    let mut means = [0.0f64; 8];
    let mut vars = [0.0f64; 8];
    for (e, &t) in truth.iter().enumerate() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = t + design.noise_sd * rng.normal();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        means[e] = mean;
        vars[e] = ((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0);
    }
    let a = DenseMatrix::new(2, 2, vec![means[0], means[2], means[1], means[3]]);
    let b = DenseVector::from([means[4], means[5]]);
    let c = DenseVector::from([means[6], means[7]]);
    let p = LpProblem::new(a, b, c, false).expect("fixed shape");
    let est = EstimatedCoefficients::new(
        DenseVector::new(means.to_vec()),
        DenseMatrix::from_diag(&vars),
        n,
        vec![true; 8],
    )
    .map_err(|e| InferenceError::Mpcc(e.into()))?;
    let sys = build_lp_system(&p, &est).map_err(|e| InferenceError::Mpcc(e.into()))?;

    let theta0 = DenseVector::from([2.0, 1.0]);
    let spec = ConfidenceSpec {
        alpha: design.alpha,
        df: sys.df,
        theta_box: vec![(0.0, 4.0), (0.0, 3.0)],
        grid_step: 0.1,
        extra_theta_constraints: vec![
            ThetaConstraint::ge(DenseVector::from([1.0, 0.0]), 0.0),
            ThetaConstraint::ge(DenseVector::from([0.0, 1.0]), 0.0),
        ],
    };
    let (accepted, _) = member(&sys, &est, &spec, &theta0)?;
    Ok(accepted)
}

/// Empirical coverage of θ₀ = max(μ₁, μ₂) for an intersection-bounds design.
pub fn run_sim1(design: &SimDesign) -> Result<f64, InferenceError> {
    run_sim1_threads(design, exec::default_threads())
}

pub fn run_sim1_threads(design: &SimDesign, threads: usize) -> Result<f64, InferenceError> {
    assert!(
        matches!(
            design.id,
            DesignId::Sim1Design1 | DesignId::Sim1Design2 | DesignId::Sim1Design3
        ),
        "run_sim1 requires an intersection-bounds design"
    );
    let results = exec::parallel_map(design.reps, threads, |rep| sim1_replication(design, rep));
    let mut hits = 0usize;
    for r in results {
        if r? {
            hits += 1;
        }
    }
    Ok(hits as f64 / design.reps as f64)
}

/// Empirical coverage of θ₀ = (2, 1) for the 2×2 LP design.
pub fn run_sim2(design: &SimDesign) -> Result<f64, InferenceError> {
    run_sim2_threads(design, exec::default_threads())
}

pub fn run_sim2_threads(design: &SimDesign, threads: usize) -> Result<f64, InferenceError> {
    assert!(design.id == DesignId::Sim2, "run_sim2 requires the 2x2 LP design");
    let results = exec::parallel_map(design.reps, threads, |rep| sim2_replication(design, rep));
    let mut hits = 0usize;
    for r in results {
        if r? {
            hits += 1;
        }
    }
    Ok(hits as f64 / design.reps as f64)
}

pub fn run_design(design: &SimDesign) -> Result<f64, InferenceError> {
    run_design_threads(design, exec::default_threads())
}

pub fn run_design_threads(design: &SimDesign, threads: usize) -> Result<f64, InferenceError> {
    match design.id {
        DesignId::Sim2 => run_sim2_threads(design, threads),
        _ => run_sim1_threads(design, threads),
    }
}

/// Coverage rates arranged with one row per design and one column per
/// sample size, mirroring the study tables.
#[derive(Debug, Clone)]
pub struct CoverageTable {
    pub row_labels: Vec<String>,
    pub sample_sizes: Vec<usize>,
    pub rates: Vec<Vec<Option<f64>>>,
}

impl CoverageTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("design");
        for n in &self.sample_sizes {
            out.push_str(&format!(",n={n}"));
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.rates) {
            out.push_str(label);
            for cell in row {
                match cell {
                    Some(rate) => out.push_str(&format!(",{rate:.3}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let label_width = self.row_labels.iter().map(|l| l.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<label_width$}", "design");
        for n in &self.sample_sizes {
            out.push_str(&format!("  {:>7}", format!("n={n}")));
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.rates) {
            out.push_str(&format!("{label:<label_width$}"));
            for cell in row {
                match cell {
                    Some(rate) => out.push_str(&format!("  {rate:>7.3}")),
                    None => out.push_str(&format!("  {:>7}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Run a list of simulation cells and arrange the coverage estimates into
/// a table (rows: designs in first-appearance order; columns: sample sizes
/// ascending).
pub fn coverage_table(designs: &[SimDesign]) -> Result<CoverageTable, InferenceError> {
    coverage_table_threads(designs, exec::default_threads())
}

pub fn coverage_table_threads(
    designs: &[SimDesign],
    threads: usize,
) -> Result<CoverageTable, InferenceError> {
    let mut row_labels: Vec<String> = Vec::new();
    let mut sample_sizes: Vec<usize> = Vec::new();
    for d in designs {
        if !row_labels.iter().any(|l| l == d.label()) {
            row_labels.push(d.label().to_string());
        }
        if !sample_sizes.contains(&d.n) {
            sample_sizes.push(d.n);
        }
    }
    sample_sizes.sort_unstable();
    let mut rates = vec![vec![None; sample_sizes.len()]; row_labels.len()];
    for d in designs {
        let row = row_labels.iter().position(|l| l == d.label()).unwrap();
        let col = sample_sizes.iter().position(|&n| n == d.n).unwrap();
        rates[row][col] = Some(run_design_threads(d, threads)?);
    }
    Ok(CoverageTable { row_labels, sample_sizes, rates })
}
