//! Monte Carlo harness: population designs, data generation, loss
//! functions and PRIAL aggregation across seeded replications.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SpectralMixture;
use crate::fit::FitOptions;
use crate::linalg::{eigh, reconstruct, sample_covariance, DataMatrix};
use crate::mp::{Concentration, ForwardSolver};
use crate::shrink::{
    self, cross_validation_factors, finite_sample_optimal, interpolate_m, linear_shrinkage,
};
use crate::{Error, Result};

/// Shape of the population spectrum.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationDesign {
    /// 20% of eigenvalues at 1, 40% at `1 + 2d/9`, 40% at `1 + d`.
    BaiSilverstein { dispersion: f64 },
    /// `1 + 9·F⁻¹_{(α,β)}((i - 1/2)/p)`: beta-distributed shapes on [1, 10].
    Beta { alpha: f64, beta: f64 },
    /// Explicit eigenvalues.
    Custom { eigenvalues: Vec<f64> },
}

/// Distribution of the i.i.d. data entries (always standardized to unit
/// variance).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataDistribution {
    Normal,
    /// Student t with `df > 2` degrees of freedom, divided by
    /// `sqrt(df / (df - 2))` so the entries have unit variance.
    StudentT { df: f64 },
}

/// Loss underlying the PRIAL.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Frobenius,
    JamesStein,
}

/// Which matrix the study estimates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StudyTarget {
    Covariance,
    Precision,
}

/// Reference matrix inside the PRIAL (the 100% mark).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrialReference {
    /// Finite-sample optimal rotation-equivariant matrix (`S*` or `P*`).
    #[default]
    FiniteSampleOptimal,
    /// The population matrix itself (fixed-dimension studies).
    TrueSigma,
}

/// Estimators a study can evaluate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Sample covariance (or its inverse): the PRIAL-0 baseline.
    Sample,
    /// Optimal linear shrinkage toward the spherical target.
    Linear,
    /// Bona fide nonlinear shrinkage.
    Nonlinear,
    /// Inverse of the nonlinear covariance estimate (precision studies).
    NonlinearInverted,
    /// Oracle nonlinear shrinkage using the true population spectrum.
    Oracle,
    /// Leave-one-out cross-validation factors.
    CrossValidation,
    /// Finite-sample optimal reference as an "estimator" row.
    FiniteSampleOptimal,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sample => "sample",
            Self::Linear => "linear",
            Self::Nonlinear => "nonlinear",
            Self::NonlinearInverted => "nonlinear_inverted",
            Self::Oracle => "oracle",
            Self::CrossValidation => "cross_validation",
            Self::FiniteSampleOptimal => "finite_sample_optimal",
        }
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Sample,
        EstimatorKind::Linear,
        EstimatorKind::Nonlinear,
        EstimatorKind::Oracle,
    ]
}

/// Full description of one Monte Carlo study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub design: PopulationDesign,
    pub p: usize,
    pub n: usize,
    pub distribution: DataDistribution,
    pub replications: usize,
    pub loss: LossKind,
    pub target: StudyTarget,
    #[serde(default)]
    pub reference: PrialReference,
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Apply a random rotation to the population covariance instead of
    /// keeping it diagonal (the results are distribution-identical either
    /// way; this exercises the equivariance claim end to end).
    #[serde(default)]
    pub rotate: bool,
    /// Record (λ_i, d_i) pairs of the nonlinear estimator for plotting.
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub fit: FitOptions,
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be >= 1".into()));
        }
        if self.p >= self.n {
            return Err(Error::ConcentrationOutOfRange { p: self.p, n: self.n });
        }
        if let DataDistribution::StudentT { df } = self.distribution {
            if df <= 2.0 {
                return Err(Error::InvalidInput(format!(
                    "student t needs df > 2 for unit variance, got {df}"
                )));
            }
        }
        Ok(())
    }
}

/// One estimator's aggregate row in a study report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub name: String,
    pub mean_loss: f64,
    pub prial: f64,
    /// Delta-method Monte Carlo standard error of the PRIAL.
    pub prial_se: f64,
}

/// Aggregated study output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<EstimatorRow>,
    pub replications: usize,
    pub failures: usize,
    /// Wall-clock duration; excluded from serialization so that identical
    /// seeds and configs produce byte-identical report files.
    #[serde(skip)]
    pub runtime_seconds: f64,
    pub config: StudyConfig,
    /// Spectrum-fit bookkeeping over all replications that ran one.
    pub fit_stats: FitStats,
    /// (replication, λ_i, d_i) triples when tracing was requested.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<(usize, f64, f64)>,
}

/// Convergence bookkeeping for the nonlinear fits inside a study.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitStats {
    /// Replications that ran a spectrum fit.
    pub total: usize,
    /// Fits that converged (on any start).
    pub converged: usize,
    /// Fits that converged on the first start, without restarts.
    pub first_try: usize,
}

impl StudyReport {
    pub fn row(&self, kind: EstimatorKind) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.name == kind.name())
    }
}

/// Deterministic population eigenvalues for a design, ascending.
pub fn population_eigenvalues(design: &PopulationDesign, p: usize) -> Result<Vec<f64>> {
    if p < 2 {
        return Err(Error::InvalidInput("need p >= 2".into()));
    }
    match design {
        PopulationDesign::BaiSilverstein { dispersion } => {
            let d = *dispersion;
            if !(d >= 0.0) {
                return Err(Error::InvalidInput("dispersion must be >= 0".into()));
            }
            let n1 = (0.2 * p as f64).round() as usize;
            let n2 = (0.4 * p as f64).round() as usize;
            let n3 = p - n1 - n2;
            let mut out = Vec::with_capacity(p);
            out.extend(std::iter::repeat(1.0).take(n1));
            out.extend(std::iter::repeat(1.0 + 2.0 * d / 9.0).take(n2));
            out.extend(std::iter::repeat(1.0 + d).take(n3));
            Ok(out)
        }
        PopulationDesign::Beta { alpha, beta } => {
            if !(*alpha > 0.0 && *beta > 0.0) {
                return Err(Error::InvalidInput(
                    "beta design needs alpha > 0 and beta > 0".into(),
                ));
            }
            (1..=p)
                .map(|i| {
                    let q = (i as f64 - 0.5) / p as f64;
                    Ok(1.0 + 9.0 * beta_quantile(*alpha, *beta, q)?)
                })
                .collect()
        }
        PopulationDesign::Custom { eigenvalues } => {
            if eigenvalues.len() != p {
                return Err(Error::DimensionMismatch(eigenvalues.len(), p));
            }
            if eigenvalues.iter().any(|&t| !(t > 0.0)) {
                return Err(Error::InvalidInput("population eigenvalues must be > 0".into()));
            }
            let mut out = eigenvalues.clone();
            out.sort_by(f64::total_cmp);
            Ok(out)
        }
    }
}

/// Quantile of the Beta(α, β) distribution by bisection on the regularized
/// incomplete beta function.
pub fn beta_quantile(alpha: f64, beta: f64, q: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidInput("beta parameters must be positive".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("quantile level {q} outside [0,1]")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statrs::function::beta::beta_reg(alpha, beta, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws `Y = X Σ^{1/2}` with i.i.d. standardized entries in `X`.
/// `Σ = diag(eigenvalues)`, optionally conjugated by a random rotation.
pub fn sample_data(
    eigenvalues: &[f64],
    n: usize,
    distribution: DataDistribution,
    rng: &mut ChaCha8Rng,
    rotation: Option<&DMatrix<f64>>,
) -> Result<DataMatrix> {
    let p = eigenvalues.len();
    if p >= n {
        return Err(Error::ConcentrationOutOfRange { p, n });
    }
    let mut x = DMatrix::zeros(n, p);
    match distribution {
        DataDistribution::Normal => {
            let normal = StandardNormal;
            for v in x.iter_mut() {
                *v = normal.sample(rng);
            }
        }
        DataDistribution::StudentT { df } => {
            if df <= 2.0 {
                return Err(Error::InvalidInput("student t needs df > 2".into()));
            }
            let t = StudentT::new(df)
                .map_err(|e| Error::InvalidInput(format!("student t: {e}")))?;
            let scale = (df / (df - 2.0)).sqrt();
            for v in x.iter_mut() {
                let draw: f64 = t.sample(rng);
                *v = draw / scale;
            }
        }
    }
    let y = match rotation {
        None => {
            // diagonal Σ^{1/2}: scale columns
            for (j, mut col) in x.column_iter_mut().enumerate() {
                col *= eigenvalues[j].sqrt();
            }
            x
        }
        Some(q) => {
            // Σ^{1/2} = Q diag(sqrt(τ)) Q'
            let scaled = DMatrix::from_fn(p, p, |i, j| q[(i, j)] * eigenvalues[j].sqrt());
            let sqrt_sigma = scaled * q.transpose();
            x * sqrt_sigma
        }
    };
    DataMatrix::new(y)
}

/// Random orthogonal matrix from the QR of a Gaussian matrix with the sign
/// convention fixed.
pub fn random_rotation(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let normal = StandardNormal;
    let g = DMatrix::from_fn(p, p, |_, _| normal.sample(rng));
    let qr = g.qr();
    let r_diag: Vec<f64> = (0..p).map(|i| qr.r()[(i, i)]).collect();
    let mut q = qr.q();
    for (j, d) in r_diag.iter().enumerate() {
        if *d < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// Squared dimension-normalized Frobenius distance
/// `‖A - B‖² = tr((A-B)(A-B)') / p`.
pub fn frobenius_loss(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(a.nrows(), b.nrows()));
    }
    Ok((a - b).norm_squared() / a.nrows() as f64)
}

/// Scale-invariant loss `tr(Σ̂ Σ⁻¹) - log det(Σ̂ Σ⁻¹) - p`, computed through
/// the eigenvalues of `Σ^{-1/2} Σ̂ Σ^{-1/2}`.
pub fn james_stein_loss(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(estimate.nrows(), truth.nrows()));
    }
    let p = truth.nrows();
    let eig_t = eigh(truth)?;
    if eig_t.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput("james-stein loss needs PD truth".into()));
    }
    let inv_sqrt: Vec<f64> = eig_t.eigenvalues.iter().map(|&l| 1.0 / l.sqrt()).collect();
    let w = reconstruct(&eig_t, &inv_sqrt)?;
    let conj = &w * estimate * &w;
    let eig_c = eigh(&conj)?;
    let mut loss = 0.0;
    for &mu in eig_c.eigenvalues.iter() {
        if mu <= 0.0 {
            return Err(Error::InvalidInput("james-stein loss needs PD estimate".into()));
        }
        loss += mu - mu.ln() - 1.0;
    }
    let _ = p;
    Ok(loss)
}

struct RepOutcome {
    losses: Vec<f64>,
    base_loss: f64,
    trace: Vec<(usize, f64, f64)>,
    fit: Option<(bool, bool)>, // (converged, first try)
}

/// Runs every replication of a study and aggregates PRIALs.
///
/// Replications execute in parallel with independent RNG streams derived
/// from the master seed, so reports are identical for identical configs
/// regardless of thread schedule. Individual replication failures are
/// counted and skipped.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let start = std::time::Instant::now();
    let tau = population_eigenvalues(&config.design, config.p)?;
    let conc = Concentration::from_dims(config.p, config.n)?;

    // one forward solver for the oracle, shared across replications
    let oracle_solver = if config.estimators.contains(&EstimatorKind::Oracle) {
        let mut locs: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for &t in &tau {
            match locs.last() {
                Some(&last) if (t - last).abs() < 1e-12 => *counts.last_mut().unwrap() += 1.0,
                _ => {
                    locs.push(t);
                    counts.push(1.0);
                }
            }
        }
        let total: f64 = counts.iter().sum();
        for c in &mut counts {
            *c /= total;
        }
        let mix = SpectralMixture::from_atoms(&locs, &counts)?;
        Some(ForwardSolver::new(&mix, &conc)?)
    } else {
        None
    };

    let outcomes: Vec<Result<RepOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, &tau, &conc, oracle_solver.as_ref(), rep))
        .collect();

    let mut losses: Vec<Vec<f64>> = vec![Vec::new(); config.estimators.len()];
    let mut base: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut failures = 0usize;
    let mut fit_stats = FitStats::default();
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                for (dst, &l) in losses.iter_mut().zip(&o.losses) {
                    dst.push(l);
                }
                base.push(o.base_loss);
                trace.extend(o.trace);
                if let Some((converged, first_try)) = o.fit {
                    fit_stats.total += 1;
                    fit_stats.converged += converged as usize;
                    fit_stats.first_try += first_try as usize;
                }
            }
            Err(_) => failures += 1,
        }
    }
    if base.is_empty() {
        return Err(Error::Numerical("every replication failed".into()));
    }

    let n_ok = base.len() as f64;
    let base_mean = base.iter().sum::<f64>() / n_ok;
    let rows = config
        .estimators
        .iter()
        .zip(&losses)
        .map(|(kind, ls)| {
            let mean = ls.iter().sum::<f64>() / n_ok;
            let ratio = mean / base_mean;
            // delta method for the ratio of means with correlated samples
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for (x, y) in ls.iter().zip(&base) {
                sxx += (x - mean) * (x - mean);
                syy += (y - base_mean) * (y - base_mean);
                sxy += (x - mean) * (y - base_mean);
            }
            let denom = (n_ok - 1.0).max(1.0);
            let var_ratio = (sxx / denom - 2.0 * ratio * sxy / denom
                + ratio * ratio * syy / denom)
                / (n_ok * base_mean * base_mean);
            EstimatorRow {
                name: kind.name().to_string(),
                mean_loss: mean,
                prial: 100.0 * (1.0 - ratio),
                prial_se: 100.0 * var_ratio.max(0.0).sqrt(),
            }
        })
        .collect();

    Ok(StudyReport {
        rows,
        replications: base.len(),
        failures,
        runtime_seconds: start.elapsed().as_secs_f64(),
        config: config.clone(),
        fit_stats,
        trace,
    })
}

fn run_replication(
    config: &StudyConfig,
    tau: &[f64],
    conc: &Concentration,
    oracle_solver: Option<&ForwardSolver>,
    rep: usize,
) -> Result<RepOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep as u64 + 1);
    let rotation = if config.rotate {
        Some(random_rotation(tau.len(), &mut rng))
    } else {
        None
    };
    let data = sample_data(tau, config.n, config.distribution, &mut rng, rotation.as_ref())?;
    let p = config.p;
    let c = conc.value();

    let sigma = match &rotation {
        None => DMatrix::from_fn(p, p, |i, j| if i == j { tau[i] } else { 0.0 }),
        Some(q) => {
            let scaled = DMatrix::from_fn(p, p, |i, j| q[(i, j)] * tau[j]);
            scaled * q.transpose()
        }
    };

    let s = sample_covariance(&data);
    let eigsys = eigh(&s)?;
    let lambdas: Vec<f64> = eigsys.eigenvalues.iter().copied().collect();
    let (s_star, p_star) = finite_sample_optimal(&eigsys, &sigma)?;

    // reference and baseline per target
    let sigma_inv = {
        let eig = eigh(&sigma)?;
        let inv: Vec<f64> = eig.eigenvalues.iter().map(|&l| 1.0 / l).collect();
        reconstruct(&eig, &inv)?
    };
    let (reference, baseline) = match (config.target, config.reference) {
        (StudyTarget::Covariance, PrialReference::FiniteSampleOptimal) => (s_star.clone(), s.clone()),
        (StudyTarget::Covariance, PrialReference::TrueSigma) => (sigma.clone(), s.clone()),
        (StudyTarget::Precision, PrialReference::FiniteSampleOptimal) => {
            let s_inv = reconstruct(&eigsys, &inverted(&lambdas))?;
            (p_star.clone(), s_inv)
        }
        (StudyTarget::Precision, PrialReference::TrueSigma) => {
            let s_inv = reconstruct(&eigsys, &inverted(&lambdas))?;
            (sigma_inv.clone(), s_inv)
        }
    };
    let loss = |m: &DMatrix<f64>| -> Result<f64> {
        match config.loss {
            LossKind::Frobenius => frobenius_loss(m, &reference),
            LossKind::JamesStein => james_stein_loss(m, &reference),
        }
    };
    let base_loss = loss(&baseline)?;

    // nonlinear fit is shared by several estimator rows
    let needs_fit = config.estimators.iter().any(|e| {
        matches!(e, EstimatorKind::Nonlinear | EstimatorKind::NonlinearInverted)
    });
    let fit = if needs_fit {
        let mut options = config.fit.clone();
        options.seed = config.seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(rep as u64 + 1));
        Some(crate::fit::fit_spectrum(&lambdas, conc, &options)?)
    } else {
        None
    };
    let fit_flags = fit.as_ref().map(|f| {
        (
            f.diagnostics.converged,
            f.diagnostics.converged && f.diagnostics.restarts_used == 0,
        )
    });
    let nonlinear_cov_factors = fit
        .as_ref()
        .map(|f| {
            let m = interpolate_m(&f.solution.grid, &f.solution.m, &lambdas);
            shrink::oracle_cov_factors(&lambdas, c, &m).map(|f| f.values)
        })
        .transpose()?;

    let mut losses = Vec::with_capacity(config.estimators.len());
    let mut trace = Vec::new();
    for kind in &config.estimators {
        let matrix: DMatrix<f64> = match (kind, config.target) {
            (EstimatorKind::Sample, StudyTarget::Covariance) => s.clone(),
            (EstimatorKind::Sample, StudyTarget::Precision) => {
                reconstruct(&eigsys, &inverted(&lambdas))?
            }
            (EstimatorKind::Linear, StudyTarget::Covariance) => linear_shrinkage(&data)?,
            (EstimatorKind::Linear, StudyTarget::Precision) => {
                let sbar = linear_shrinkage(&data)?;
                let eig = eigh(&sbar)?;
                let inv: Vec<f64> = eig.eigenvalues.iter().map(|&l| 1.0 / l).collect();
                reconstruct(&eig, &inv)?
            }
            (EstimatorKind::Nonlinear, StudyTarget::Covariance) => {
                let d = nonlinear_cov_factors.as_ref().expect("fit requested");
                if config.trace {
                    for (l, di) in lambdas.iter().zip(d) {
                        trace.push((rep, *l, *di));
                    }
                }
                reconstruct(&eigsys, d)?
            }
            (EstimatorKind::Nonlinear, StudyTarget::Precision) => {
                let f = fit.as_ref().expect("fit requested");
                let m = interpolate_m(&f.solution.grid, &f.solution.m, &lambdas);
                let a = shrink::oracle_prec_factors(&lambdas, c, &m)?;
                reconstruct(&eigsys, &a.values)?
            }
            (EstimatorKind::NonlinearInverted, _) => {
                let d = nonlinear_cov_factors.as_ref().expect("fit requested");
                reconstruct(&eigsys, &inverted(d))?
            }
            (EstimatorKind::Oracle, target) => {
                let solver = oracle_solver.expect("oracle solver built");
                let m: Vec<_> = lambdas
                    .iter()
                    .map(|&l| solver.m_breve(l))
                    .collect::<Result<_>>()?;
                match target {
                    StudyTarget::Covariance => {
                        let d = shrink::oracle_cov_factors(&lambdas, c, &m)?;
                        reconstruct(&eigsys, &d.values)?
                    }
                    StudyTarget::Precision => {
                        let a = shrink::oracle_prec_factors(&lambdas, c, &m)?;
                        reconstruct(&eigsys, &a.values)?
                    }
                }
            }
            (EstimatorKind::CrossValidation, StudyTarget::Covariance) => {
                let f = cross_validation_factors(&data)?;
                reconstruct(&eigsys, &f.values)?
            }
            (EstimatorKind::CrossValidation, StudyTarget::Precision) => {
                return Err(Error::InvalidInput(
                    "cross-validation applies to the covariance target only".into(),
                ))
            }
            (EstimatorKind::FiniteSampleOptimal, StudyTarget::Covariance) => s_star.clone(),
            (EstimatorKind::FiniteSampleOptimal, StudyTarget::Precision) => p_star.clone(),
        };
        losses.push(loss(&matrix)?);
    }
    Ok(RepOutcome {
        losses,
        base_loss,
        trace,
        fit: fit_flags,
    })
}

fn inverted(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| 1.0 / v).collect()
}
