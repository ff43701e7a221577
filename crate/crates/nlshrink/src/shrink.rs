//! Shrinkage estimators: oracle and bona fide nonlinear shrinkage for the
//! covariance and precision matrices, the optimal linear-shrinkage baseline,
//! a leave-one-out cross-validation variant, and the finite-sample optimal
//! references used by the Monte Carlo studies.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fit::{fit_spectrum, FitOptions, FitResult};
use crate::linalg::{eigh, reconstruct, sample_covariance, DataMatrix, EigenSystem};
use crate::mp::Concentration;
use crate::{Error, Result};

/// Which matrix a set of per-eigenvalue factors targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Covariance,
    Precision,
}

/// Per-eigenvalue corrected values, `d_i` for the covariance or `a_i` for
/// the precision matrix.
#[derive(Debug, Clone)]
pub struct ShrinkageFactors {
    pub values: Vec<f64>,
    pub kind: FactorKind,
    pub method: &'static str,
    /// Set when a precision factor came out nonpositive (the formula does
    /// not guarantee a sign; values are kept as computed).
    pub sign_warning: bool,
}

/// Linear interpolation of grid values of `m̆` onto the sample eigenvalues,
/// real and imaginary parts separately, clamped at the grid ends.
pub fn interpolate_m(grid: &[f64], m: &[Complex64], lambdas: &[f64]) -> Vec<Complex64> {
    lambdas
        .iter()
        .map(|&l| {
            if l <= grid[0] {
                m[0]
            } else if l >= grid[grid.len() - 1] {
                m[m.len() - 1]
            } else {
                let idx = grid.partition_point(|&x| x < l).clamp(1, grid.len() - 1);
                let (x0, x1) = (grid[idx - 1], grid[idx]);
                let t = (l - x0) / (x1 - x0);
                m[idx - 1] + (m[idx] - m[idx - 1]) * t
            }
        })
        .collect()
}

/// Covariance shrinkage factors `d_i = λ_i / |1 - c - c·λ_i·m̆(λ_i)|²`.
pub fn oracle_cov_factors(
    lambdas: &[f64],
    c: f64,
    m_breve: &[Complex64],
) -> Result<ShrinkageFactors> {
    if lambdas.len() != m_breve.len() {
        return Err(Error::DimensionMismatch(lambdas.len(), m_breve.len()));
    }
    let mut values = Vec::with_capacity(lambdas.len());
    for (&l, &m) in lambdas.iter().zip(m_breve) {
        let den = (Complex64::new(1.0 - c, 0.0) - c * l * m).norm_sqr();
        if den == 0.0 {
            return Err(Error::Numerical(format!(
                "vanishing correction denominator at lambda = {l}"
            )));
        }
        values.push(l / den);
    }
    Ok(ShrinkageFactors {
        values,
        kind: FactorKind::Covariance,
        method: "nonlinear",
        sign_warning: false,
    })
}

/// Precision shrinkage factors `a_i = (1 - c - 2·c·λ_i·Re m̆(λ_i)) / λ_i`.
pub fn oracle_prec_factors(
    lambdas: &[f64],
    c: f64,
    m_breve: &[Complex64],
) -> Result<ShrinkageFactors> {
    if lambdas.len() != m_breve.len() {
        return Err(Error::DimensionMismatch(lambdas.len(), m_breve.len()));
    }
    let mut sign_warning = false;
    let values = lambdas
        .iter()
        .zip(m_breve)
        .map(|(&l, &m)| {
            let a = (1.0 - c - 2.0 * c * l * m.re) / l;
            if a <= 0.0 {
                sign_warning = true;
            }
            a
        })
        .collect();
    Ok(ShrinkageFactors {
        values,
        kind: FactorKind::Precision,
        method: "nonlinear",
        sign_warning,
    })
}

/// Everything produced along the way by the full estimation pipeline.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub matrix: DMatrix<f64>,
    pub eigensystem: EigenSystem,
    pub factors: ShrinkageFactors,
    pub fit: FitResult,
}

fn pipeline(
    data: &DataMatrix,
    options: &FitOptions,
    kind: FactorKind,
) -> Result<EstimateReport> {
    let conc = Concentration::from_dims(data.p(), data.n())?;
    let s = sample_covariance(data);
    let eigsys = eigh(&s)?;
    let lambdas: Vec<f64> = eigsys.eigenvalues.iter().copied().collect();
    let fit = fit_spectrum(&lambdas, &conc, options)?;
    let m_at_lambda = interpolate_m(&fit.solution.grid, &fit.solution.m, &lambdas);
    let factors = match kind {
        FactorKind::Covariance => oracle_cov_factors(&lambdas, conc.value(), &m_at_lambda)?,
        FactorKind::Precision => oracle_prec_factors(&lambdas, conc.value(), &m_at_lambda)?,
    };
    let matrix = reconstruct(&eigsys, &factors.values)?;
    Ok(EstimateReport {
        matrix,
        eigensystem: eigsys,
        factors,
        fit,
    })
}

/// Bona fide nonlinear shrinkage estimator of the covariance matrix.
pub fn estimate_cov(data: &DataMatrix, options: &FitOptions) -> Result<EstimateReport> {
    pipeline(data, options, FactorKind::Covariance)
}

/// Bona fide nonlinear shrinkage estimator of the precision matrix
/// (estimated directly, not by inverting the covariance estimate).
pub fn estimate_precision(data: &DataMatrix, options: &FitOptions) -> Result<EstimateReport> {
    pipeline(data, options, FactorKind::Precision)
}

/// Optimal linear shrinkage toward the grand-mean spherical target:
/// `ρ·m·I + (1 - ρ)·S` with the data-driven intensity `ρ = b²/d²`.
pub fn linear_shrinkage(data: &DataMatrix) -> Result<DMatrix<f64>> {
    let s = sample_covariance(data);
    let (p, n) = (data.p(), data.n() as f64);
    let pf = p as f64;
    let grand_mean = s.trace() / pf;
    let mut d2 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { grand_mean } else { 0.0 };
            d2 += (s[(i, j)] - target).powi(2);
        }
    }
    d2 /= pf;
    if d2 <= 0.0 {
        return Ok(s); // already spherical
    }
    let y = data.values();
    let mut b2_bar = 0.0;
    for kth in 0..data.n() {
        let row = y.row(kth);
        let mut norm2 = 0.0;
        for i in 0..p {
            for j in 0..p {
                norm2 += (row[i] * row[j] - s[(i, j)]).powi(2);
            }
        }
        b2_bar += norm2 / pf;
    }
    b2_bar /= n * n;
    let b2 = b2_bar.min(d2);
    let rho = b2 / d2;
    let mut out = s * (1.0 - rho);
    for i in 0..p {
        out[(i, i)] += rho * grand_mean;
    }
    Ok(out)
}

/// Leave-one-out cross-validation estimate of the optimal covariance
/// factors: `d_i = (1/n) Σ_k (u_i[k]' y_k)²` where `u_i[k]` comes from the
/// sample covariance without observation `k`.
pub fn cross_validation_factors(data: &DataMatrix) -> Result<ShrinkageFactors> {
    let (n, p) = (data.n(), data.p());
    if p + 1 >= n {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs p < n - 1, got p = {p}, n = {n}"
        )));
    }
    let y = data.values();
    let nf = n as f64;
    let s_full = y.transpose() * y; // unnormalized scatter
    let mut acc = vec![0.0; p];
    for kth in 0..n {
        let yk = y.row(kth).transpose();
        let mut s_k = &s_full - &yk * yk.transpose();
        s_k /= nf - 1.0;
        let eig = eigh(&s_k)?;
        let proj = eig.eigenvectors.transpose() * &yk;
        for i in 0..p {
            acc[i] += proj[i] * proj[i];
        }
    }
    for v in &mut acc {
        *v /= nf;
    }
    Ok(ShrinkageFactors {
        values: acc,
        kind: FactorKind::Covariance,
        method: "cross-validation",
        sign_warning: false,
    })
}

/// Cross-validation covariance estimator built from
/// [`cross_validation_factors`].
pub fn estimate_cov_cv(data: &DataMatrix) -> Result<DMatrix<f64>> {
    let s = sample_covariance(data);
    let eigsys = eigh(&s)?;
    let factors = cross_validation_factors(data)?;
    reconstruct(&eigsys, &factors.values)
}

/// Finite-sample optimal rotation-equivariant references
/// `S* = U diag(u_i'Σu_i) U'` and `P* = U diag(u_i'Σ⁻¹u_i) U'`.
/// Requires the true covariance, so this is for simulations only.
pub fn finite_sample_optimal(
    eigsys: &EigenSystem,
    sigma: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = eigsys.p();
    if sigma.shape() != (p, p) {
        return Err(Error::DimensionMismatch(sigma.nrows(), p));
    }
    let sig_eig = eigh(sigma)?;
    if sig_eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput(
            "true covariance must be positive definite".into(),
        ));
    }
    let inv_vals: Vec<f64> = sig_eig.eigenvalues.iter().map(|&l| 1.0 / l).collect();
    let sigma_inv = reconstruct(&sig_eig, &inv_vals)?;
    let u = &eigsys.eigenvectors;
    let d_star: Vec<f64> = (0..p)
        .map(|i| {
            let ui = u.column(i);
            (ui.transpose() * sigma * ui)[(0, 0)]
        })
        .collect();
    let a_star: Vec<f64> = (0..p)
        .map(|i| {
            let ui = u.column(i);
            (ui.transpose() * &sigma_inv * ui)[(0, 0)]
        })
        .collect();
    Ok((reconstruct(eigsys, &d_star)?, reconstruct(eigsys, &a_star)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_data(n: usize, p: usize, scales: &[f64], seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let y = DMatrix::from_fn(n, p, |_, j| {
            let x: f64 = normal.sample(&mut rng);
            x * scales[j].sqrt()
        });
        DataMatrix::new(y).unwrap()
    }

    #[test]
    fn cov_factors_reduce_to_identity_as_c_vanishes() {
        let lambdas = [0.5, 1.0, 2.0];
        let m: Vec<Complex64> = lambdas
            .iter()
            .map(|_| Complex64::new(0.3, 0.8))
            .collect();
        let f = oracle_cov_factors(&lambdas, 1e-12, &m).unwrap();
        for (d, l) in f.values.iter().zip(lambdas) {
            assert_abs_diff_eq!(d, &l, epsilon = 1e-9);
        }
    }

    #[test]
    fn cov_factors_direct_arithmetic() {
        // |1 - 0.5 - 0.5(1+i)|^2 = |-0.5i|^2 = 0.25 -> d = 4
        let f = oracle_cov_factors(&[1.0], 0.5, &[Complex64::new(1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(f.values[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn prec_factors_limit_and_arithmetic() {
        let f = oracle_prec_factors(&[2.0], 1e-14, &[Complex64::new(0.1, 0.2)]).unwrap();
        assert_abs_diff_eq!(f.values[0], 0.5, epsilon = 1e-9);
        let f = oracle_prec_factors(&[2.0], 0.25, &[Complex64::new(0.1, 0.0)]).unwrap();
        assert_abs_diff_eq!(f.values[0], 0.325, epsilon = 1e-12);
    }

    #[test]
    fn prec_factors_flag_negative_values() {
        // large positive Re m forces the factor negative
        let f = oracle_prec_factors(&[5.0], 0.5, &[Complex64::new(10.0, 0.0)]).unwrap();
        assert!(f.sign_warning);
        assert!(f.values[0] < 0.0);
    }

    #[test]
    fn interpolation_clamps_and_is_linear() {
        let grid = [1.0, 2.0, 3.0];
        let m = [
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 2.0),
            Complex64::new(2.0, 0.0),
        ];
        let out = interpolate_m(&grid, &m, &[0.5, 1.5, 3.5]);
        assert_eq!(out[0], m[0]);
        assert_abs_diff_eq!(out[1].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1].im, 1.0, epsilon = 1e-15);
        assert_eq!(out[2], m[2]);
    }

    #[test]
    fn linear_shrinkage_map_is_affine_in_eigenvalues() {
        let data = gaussian_data(80, 6, &[1.0, 1.0, 2.0, 3.0, 5.0, 8.0], 42);
        let s = sample_covariance(&data);
        let eig_s = eigh(&s).unwrap();
        let sbar = linear_shrinkage(&data).unwrap();
        let eig_b = eigh(&sbar).unwrap();
        // dbar_i = alpha + beta * lambda_i; verify by fitting on two points
        let l = &eig_s.eigenvalues;
        let d = &eig_b.eigenvalues;
        let beta = (d[5] - d[0]) / (l[5] - l[0]);
        let alpha = d[0] - beta * l[0];
        for i in 0..6 {
            assert_abs_diff_eq!(d[i], alpha + beta * l[i], epsilon = 1e-8);
        }
        // eigenvectors unchanged: S and Sbar commute
        let comm = (&s * &sbar - &sbar * &s).norm();
        assert!(comm < 1e-10);
    }

    #[test]
    fn linear_shrinkage_vanishes_with_huge_samples() {
        let data = gaussian_data(20_000, 4, &[1.0, 1.0, 1.0, 1.0], 3);
        let s = sample_covariance(&data);
        let sbar = linear_shrinkage(&data).unwrap();
        // rho near... S is already accurate, so Sbar stays close to S
        assert!((&s - &sbar).norm() / s.norm() < 0.05);
    }

    #[test]
    fn cross_validation_matches_brute_force_on_toy_data() {
        let rows = vec![
            vec![1.0, 2.0],
            vec![-1.5, 0.5],
            vec![0.3, -0.7],
            vec![2.0, 1.0],
        ];
        let data = DataMatrix::from_rows(&rows).unwrap();
        let fast = cross_validation_factors(&data).unwrap();
        // brute force: rebuild the leave-one-out covariance from scratch
        let n = rows.len();
        let p = 2;
        let mut brute = vec![0.0; p];
        for k in 0..n {
            let kept: Vec<Vec<f64>> = (0..n).filter(|&r| r != k).map(|r| rows[r].clone()).collect();
            let mut s = DMatrix::zeros(p, p);
            for r in &kept {
                let v = DVector::from_vec(r.clone());
                s += &v * v.transpose();
            }
            s /= (n - 1) as f64;
            let eig = eigh(&s).unwrap();
            let yk = DVector::from_vec(rows[k].clone());
            for i in 0..p {
                let dot = eig.eigenvectors.column(i).dot(&yk);
                brute[i] += dot * dot / n as f64;
            }
        }
        for i in 0..p {
            assert_abs_diff_eq!(fast.values[i], brute[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn cross_validation_tracks_finite_sample_optimal() {
        // Bai-Silverstein diagonal, p = 30, n = 90: mean relative error of
        // E[d_cv] against d* stays moderate
        let p = 30;
        let n = 90;
        let mut scales = vec![1.0; 6];
        scales.extend(vec![3.0; 12]);
        scales.extend(vec![10.0; 12]);
        let reps = 100;
        let mut mean_cv = vec![0.0; p];
        let mut mean_star = vec![0.0; p];
        for rep in 0..reps {
            let data = gaussian_data(n, p, &scales, 100 + rep);
            let s = sample_covariance(&data);
            let eig = eigh(&s).unwrap();
            // d*_i = u_i' Σ u_i in eigenvector order
            for i in 0..p {
                mean_star[i] += eig
                    .eigenvectors
                    .column(i)
                    .iter()
                    .enumerate()
                    .map(|(j, u)| u * u * scales[j])
                    .sum::<f64>()
                    / reps as f64;
            }
            let cv = cross_validation_factors(&data).unwrap();
            for i in 0..p {
                mean_cv[i] += cv.values[i] / reps as f64;
            }
        }
        let rel: f64 = mean_cv
            .iter()
            .zip(&mean_star)
            .map(|(a, b)| (a - b).abs() / b)
            .sum::<f64>()
            / p as f64;
        assert!(rel <= 0.15, "mean relative error of averages {rel}");
    }

    #[test]
    fn finite_sample_optimal_identity_and_diagonal() {
        let data = gaussian_data(50, 4, &[1.0; 4], 9);
        let eig = eigh(&sample_covariance(&data)).unwrap();
        let (s_star, p_star) = finite_sample_optimal(&eig, &DMatrix::identity(4, 4)).unwrap();
        assert!((s_star - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert!((p_star - DMatrix::identity(4, 4)).amax() < 1e-10);

        // diagonal data: U = I so d*_i = Sigma_ii
        let sigma = DMatrix::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let eye = EigenSystem {
            eigenvalues: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            eigenvectors: DMatrix::identity(3, 3),
        };
        let (s_star, _) = finite_sample_optimal(&eye, &sigma).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(s_star[(i, i)], (i + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn finite_sample_optimal_minimizes_over_random_diagonals() {
        let p = 5;
        let scales = [1.0, 2.0, 3.0, 5.0, 8.0];
        let data = gaussian_data(40, p, &scales, 17);
        let eig = eigh(&sample_covariance(&data)).unwrap();
        let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { scales[i] } else { 0.0 });
        let (s_star, _) = finite_sample_optimal(&eig, &sigma).unwrap();
        let best = (&s_star - &sigma).norm_squared();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let d: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..12.0)).collect();
            let cand = reconstruct(&eig, &d).unwrap();
            assert!((&cand - &sigma).norm_squared() >= best - 1e-9);
        }
    }

    #[test]
    fn finite_sample_optimal_rejects_non_pd() {
        let data = gaussian_data(20, 3, &[1.0; 3], 1);
        let eig = eigh(&sample_covariance(&data)).unwrap();
        let mut sigma = DMatrix::identity(3, 3);
        sigma[(2, 2)] = -1.0;
        assert!(finite_sample_optimal(&eig, &sigma).is_err());
    }
}
