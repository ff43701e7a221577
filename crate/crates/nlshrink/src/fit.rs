//! Inverse problem: estimate the population spectral distribution from
//! observed sample eigenvalues by sequential linear programming.
//!
//! The decision variables are mixture weights `w` over the standard basis
//! together with the boundary values `m_j = a_j + i·b_j` of the candidate
//! limiting sample spectrum on a grid. The misfit between the trapezoidal
//! c.d.f. implied by the `b_j` and the empirical eigenvalue c.d.f. is
//! minimized in sup norm, subject to every `m_j` solving the
//! Marčenko–Pastur equation for the weighted mixture.
//!
//! The solver keeps iterates exactly on the MP constraint manifold: after
//! every linear-programming step in `w` (with the first-order response of
//! `m` to `w` eliminated into the LP), each grid value `m_j` is re-solved by
//! a Newton corrector. Trust-region bookkeeping accepts only steps that do
//! not increase the misfit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, build_grid, BasisElement, SpectralMixture};
use crate::lp::{self, LinearProgram};
use crate::mp::{Concentration, ForwardSolver, MpGridSolution};
use crate::{Error, Result};

/// Empirical spectral c.d.f. target: the convention `F̂(λ_i) = i/p - 1/(2p)`
/// at the sample eigenvalues, carried to the grid by linear interpolation
/// with constant extrapolation beyond `[λ_1, λ_p]`.
#[derive(Debug, Clone)]
pub struct EmpiricalSpectrumTarget {
    pub eigenvalues: Vec<f64>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn empirical_target(eigs: &[f64], grid: &[f64]) -> Result<EmpiricalSpectrumTarget> {
    if eigs.len() < 2 {
        return Err(Error::InvalidInput("need at least two eigenvalues".into()));
    }
    if eigs.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("eigenvalues must be positive".into()));
    }
    if eigs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("eigenvalues must be ascending".into()));
    }
    let p = eigs.len();
    let conv: Vec<f64> = (1..=p).map(|i| (i as f64 - 0.5) / p as f64).collect();
    let lo = conv[0];
    let hi = conv[p - 1];
    let values = grid
        .iter()
        .map(|&x| {
            if x <= eigs[0] {
                lo
            } else if x >= eigs[p - 1] {
                hi
            } else {
                let idx = eigs.partition_point(|&l| l < x).clamp(1, p - 1);
                let (l0, l1) = (eigs[idx - 1], eigs[idx]);
                if l1 == l0 {
                    conv[idx]
                } else {
                    conv[idx - 1] + (conv[idx] - conv[idx - 1]) * (x - l0) / (l1 - l0)
                }
            }
        })
        .collect();
    Ok(EmpiricalSpectrumTarget {
        eigenvalues: eigs.to_vec(),
        grid: grid.to_vec(),
        values,
    })
}

/// Sup-norm misfit between a grid solution's trapezoidal c.d.f. and the
/// empirical target.
pub fn objective(sol: &MpGridSolution, target: &EmpiricalSpectrumTarget) -> Result<f64> {
    if sol.grid.len() != target.values.len() {
        return Err(Error::DimensionMismatch(
            sol.grid.len(),
            target.values.len(),
        ));
    }
    let cdf = crate::mp::cdf_trapezoid(sol);
    Ok(cdf
        .iter()
        .zip(&target.values)
        .map(|(f, t)| (f - t).abs())
        .fold(0.0, f64::max))
}

/// Iterate of the SLP loop: weights, grid values, misfit and residual
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct SlpState {
    pub weights: Vec<f64>,
    pub m: Vec<Complex64>,
    pub objective: f64,
    pub iteration: usize,
    pub converged: bool,
    pub max_residual: f64,
    pub trust_radius: f64,
}

/// Tuning knobs for [`fit_spectrum`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// SLP iteration cap per start.
    pub max_iter: usize,
    /// Random restarts after the uniform start fails.
    pub restarts: usize,
    /// Seed for restart randomness.
    pub seed: u64,
    /// Lower bound for the imaginary parts `b_j` and half-plane margin.
    pub epsilon: f64,
    /// Grid size; default is the number of eigenvalues. May be capped at
    /// 200 for very large problems.
    pub grid_points: Option<usize>,
    /// Initial trust radius; default `1/K` for basis size `K`.
    pub trust_init: Option<f64>,
    /// Trust radius ceiling; default `2.5/K`.
    pub trust_max: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            restarts: 10,
            seed: 0,
            epsilon: 1e-6,
            grid_points: None,
            trust_init: None,
            trust_max: None,
        }
    }
}

/// Convergence data for one fit.
#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
    /// Misfit after every accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
    pub max_residual: f64,
    pub lp_iterations: usize,
}

/// Fitted population spectrum with the matching grid solution.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub mixture: SpectralMixture,
    pub solution: MpGridSolution,
    pub objective: f64,
    pub diagnostics: FitDiagnostics,
}

/// Kernel integrals of the Marčenko–Pastur constraint at one grid point:
/// `I_k = ∫ dM_k(t) / (t·β - ξ)` with `β = 1 - c - c·ξ·m`, plus the
/// derivatives `dI_k/dm`. The change of variables `ζ = ξ/β` reduces each
/// integral to the element's ordinary Stieltjes transform.
fn kernel_row(
    elements: &[BasisElement],
    xi: f64,
    m: Complex64,
    c: f64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let beta = Complex64::new(1.0 - c, 0.0) - c * xi * m;
    let zeta = xi / beta;
    let mut vals = Vec::with_capacity(elements.len());
    let mut grads = Vec::with_capacity(elements.len());
    let beta2 = beta * beta;
    for e in elements {
        let (v, dv_dbeta) = match *e {
            BasisElement::Atom { at } => {
                let den = at * beta - xi;
                (1.0 / den, -at / (den * den))
            }
            _ => {
                let mg = e.stieltjes(zeta);
                let mgp = e.stieltjes_prime(zeta);
                (mg / beta, -(mg + zeta * mgp) / beta2)
            }
        };
        vals.push(v);
        grads.push(dv_dbeta * (-c * xi));
    }
    (vals, grads)
}

/// Residual `ψ = Σ_k w_k I_k(ξ, m) - m` of the Marčenko–Pastur constraint
/// at one grid point, together with its complex derivative in `m`.
pub fn constraint_residual(
    elements: &[BasisElement],
    xi: f64,
    m: Complex64,
    w: &[f64],
    c: f64,
) -> (Complex64, Complex64) {
    point_residual(elements, xi, m, w, c)
}

/// Residual `ψ_j = Σ_k w_k I_k - m_j` of the constraint at one point, with
/// its derivative in `m_j`.
fn point_residual(
    elements: &[BasisElement],
    xi: f64,
    m: Complex64,
    w: &[f64],
    c: f64,
) -> (Complex64, Complex64) {
    let (vals, grads) = kernel_row(elements, xi, m, c);
    let mut psi = -m;
    let mut d = Complex64::new(-1.0, 0.0);
    for k in 0..w.len() {
        psi += w[k] * vals[k];
        d += w[k] * grads[k];
    }
    (psi, d)
}

/// Re-solves the constraint at every grid point by Newton from a predictor,
/// keeping iterates in the closed upper half-plane. Returns the corrected
/// values, the residuals before the `b ≥ ε` clamp, and whether every point
/// converged.
fn newton_from(
    elements: &[BasisElement],
    xi: f64,
    seed: Complex64,
    w: &[f64],
    c: f64,
    damping: f64,
) -> Option<(Complex64, f64)> {
    let mut m = seed;
    let mut resid = f64::INFINITY;
    for _ in 0..60 {
        let (psi, d) = point_residual(elements, xi, m, w, c);
        resid = psi.norm();
        if resid < 1e-11 {
            return Some((m, resid));
        }
        if d.norm() < 1e-14 {
            return None;
        }
        let mut next = m - damping * psi / d;
        if next.im < 0.0 {
            // allow landing on the real axis, otherwise damp the descent
            next = if next.im > -1e-8 {
                Complex64::new(next.re, 0.0)
            } else {
                Complex64::new(next.re, (m.im * 0.5).max(0.0))
            };
        }
        m = next;
    }
    if resid < 1e-9 {
        Some((m, resid))
    } else {
        None
    }
}

fn newton_corrector(
    elements: &[BasisElement],
    grid: &[f64],
    m0: &[Complex64],
    m_prev: &[Complex64],
    w: &[f64],
    c: f64,
    eps_b: f64,
) -> (Vec<Complex64>, f64, bool) {
    let mut out: Vec<Complex64> = Vec::with_capacity(grid.len());
    let mut max_resid = 0.0_f64;
    for (j, &xi) in grid.iter().enumerate() {
        // predictor seed first, then progressively safer fallbacks
        let solved = newton_from(elements, xi, m0[j], w, c, 1.0)
            .or_else(|| newton_from(elements, xi, m_prev[j], w, c, 1.0))
            .or_else(|| {
                out.last()
                    .and_then(|&prev| newton_from(elements, xi, prev, w, c, 1.0))
            })
            .or_else(|| newton_from(elements, xi, m_prev[j], w, c, 0.25));
        match solved {
            Some((m, resid)) => {
                max_resid = max_resid.max(resid);
                out.push(Complex64::new(m.re, m.im.max(eps_b)));
            }
            None => return (out, max_resid, false),
        }
    }
    (out, max_resid, true)
}

/// Lower-triangular trapezoid coefficients: row `i` maps density values to
/// `F(x_i)` with the `x_0 = 0` convention (already divided by π).
fn trapezoid_rows(grid: &[f64]) -> Vec<Vec<f64>> {
    let g = grid.len();
    let pi = std::f64::consts::PI;
    let x = |j: usize| -> f64 { if j == 0 { 0.0 } else { grid[j - 1] } };
    (1..=g)
        .map(|i| {
            let mut row = vec![0.0; g];
            for j in 1..i {
                row[j - 1] = (x(j + 1) - x(j - 1)) / (2.0 * pi);
            }
            row[i - 1] = (x(i) - x(i - 1)) / (2.0 * pi);
            row
        })
        .collect()
}

/// Builds the full linearized subproblem exactly as specified for the SLP
/// step: variables `(Δa, Δb, Δw, t, s)`, the linearized MP equalities with
/// an ℓ∞ slack `s` under a large penalty, the sup-norm objective rows in
/// `t`, the simplex row, and trust-region boxes of radius `rho`.
///
/// [`fit_spectrum`] itself solves an equivalent reduced program (with the
/// `Δm` response eliminated through the constraint Jacobian) because the
/// full form is several times slower at the sizes used here; this producer
/// is the reference formulation and is exercised directly by the tests.
pub fn linearize_constraints(
    state: &SlpState,
    elements: &[BasisElement],
    grid: &[f64],
    conc: &Concentration,
    target: &EmpiricalSpectrumTarget,
    rho: f64,
    epsilon: f64,
    penalty: f64,
) -> Result<LinearProgram> {
    let g = grid.len();
    let k = elements.len();
    let c = conc.value();
    if state.m.len() != g || state.weights.len() != k {
        return Err(Error::DimensionMismatch(state.m.len(), g));
    }
    let nvar = 2 * g + k + 2;
    let idx_t = 2 * g + k;
    let idx_s = idx_t + 1;

    let mut rows = Vec::with_capacity(6 * g + 1);
    let mut row_lower = Vec::with_capacity(6 * g + 1);
    let mut row_upper = Vec::with_capacity(6 * g + 1);

    for (j, &xi) in grid.iter().enumerate() {
        let (vals, grads) = kernel_row(elements, xi, state.m[j], c);
        let mut d = Complex64::new(-1.0, 0.0);
        let mut r = -state.m[j];
        for (kk, &wk) in state.weights.iter().enumerate() {
            d += wk * grads[kk];
            r += wk * vals[kk];
        }
        if !d.norm().is_finite() {
            return Err(Error::SingularLinearization(j));
        }
        // residual rows, real and imaginary parts; the derivative in
        // m = a + ib follows the Cauchy-Riemann structure of d
        for part in 0..2 {
            let (da, db, rr) = if part == 0 {
                (d.re, -d.im, r.re)
            } else {
                (d.im, d.re, r.im)
            };
            let mut base = vec![0.0; nvar];
            base[j] = da;
            base[g + j] = db;
            for kk in 0..k {
                base[2 * g + kk] = if part == 0 { vals[kk].re } else { vals[kk].im };
            }
            // r + row·Δ ≤ s  and  r + row·Δ ≥ -s
            let mut up = base.clone();
            up[idx_s] = -1.0;
            rows.push(up);
            row_lower.push(f64::NEG_INFINITY);
            row_upper.push(-rr);
            let mut lo = base;
            lo[idx_s] = 1.0;
            rows.push(lo);
            row_lower.push(-rr);
            row_upper.push(f64::INFINITY);
        }
    }

    let trap = trapezoid_rows(grid);
    let b_now: Vec<f64> = state.m.iter().map(|m| m.im).collect();
    for i in 0..g {
        let base_i: f64 = trap[i]
            .iter()
            .zip(&b_now)
            .map(|(t, b)| t * b)
            .sum::<f64>()
            - target.values[i];
        let mut up = vec![0.0; nvar];
        for j in 0..g {
            up[g + j] = trap[i][j];
        }
        let mut lo = up.clone();
        up[idx_t] = -1.0;
        rows.push(up);
        row_lower.push(f64::NEG_INFINITY);
        row_upper.push(-base_i);
        lo[idx_t] = 1.0;
        rows.push(lo);
        row_lower.push(-base_i);
        row_upper.push(f64::INFINITY);
    }

    let mut simplex = vec![0.0; nvar];
    for kk in 0..k {
        simplex[2 * g + kk] = 1.0;
    }
    rows.push(simplex);
    let drift = 1.0 - state.weights.iter().sum::<f64>();
    row_lower.push(drift);
    row_upper.push(drift);

    let big = 1.0 / epsilon;
    let mut lower = Vec::with_capacity(nvar);
    let mut upper = Vec::with_capacity(nvar);
    for j in 0..g {
        let a = state.m[j].re;
        lower.push((-rho).max(-big - a));
        upper.push(rho.min(big - a));
    }
    for j in 0..g {
        let b = state.m[j].im;
        lower.push((-rho).max(epsilon - b));
        upper.push(rho.min(big - b));
    }
    for kk in 0..k {
        lower.push((-rho).max(-state.weights[kk]));
        upper.push(rho);
    }
    lower.push(0.0);
    upper.push(f64::INFINITY); // t
    lower.push(0.0);
    upper.push(f64::INFINITY); // s

    let mut objective = vec![0.0; nvar];
    objective[idx_t] = 1.0;
    objective[idx_s] = penalty;

    Ok(LinearProgram {
        objective,
        rows,
        row_lower,
        row_upper,
        lower,
        upper,
    })
}

/// Estimates the population spectrum underlying `eigs` by SLP over the
/// standard basis. Starts from uniform weights; on failure retries from
/// random simplex weights up to `options.restarts` times and returns the
/// best attempt flagged as non-converged.
pub fn fit_spectrum(
    eigs: &[f64],
    conc: &Concentration,
    options: &FitOptions,
) -> Result<FitResult> {
    let p = eigs.len();
    if p < 2 {
        return Err(Error::InvalidInput("need at least two eigenvalues".into()));
    }
    if eigs.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput("eigenvalues must be positive".into()));
    }
    // work on eigenvalues normalized to unit mean so the pipeline is
    // exactly homogeneous in the data scale, then map the artifacts back
    let scale: f64 = eigs.iter().sum::<f64>() / p as f64;
    let scaled: Vec<f64> = eigs.iter().map(|l| l / scale).collect();
    let fit = fit_spectrum_unit(&scaled, conc, options)?;
    rescale_fit(fit, scale)
}

fn rescale_fit(fit: FitResult, scale: f64) -> Result<FitResult> {
    if scale == 1.0 {
        return Ok(fit);
    }
    let elements = fit
        .mixture
        .elements()
        .iter()
        .map(|e| match *e {
            BasisElement::Atom { at } => BasisElement::atom(at * scale),
            BasisElement::RampUp { lo, hi } => BasisElement::ramp_up(lo * scale, hi * scale),
            BasisElement::RampDown { lo, hi } => {
                BasisElement::ramp_down(lo * scale, hi * scale)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = SpectralMixture::new(elements, fit.mixture.weights().to_vec())?;
    // Stieltjes values scale inversely with the eigenvalue scale
    let solution = MpGridSolution {
        grid: fit.solution.grid.iter().map(|x| x * scale).collect(),
        m: fit.solution.m.iter().map(|m| m / scale).collect(),
        c: fit.solution.c,
    };
    Ok(FitResult {
        mixture,
        solution,
        objective: fit.objective,
        diagnostics: fit.diagnostics,
    })
}

fn fit_spectrum_unit(
    eigs: &[f64],
    conc: &Concentration,
    options: &FitOptions,
) -> Result<FitResult> {
    let p = eigs.len();
    let mut sorted = eigs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gp = options.grid_points.unwrap_or(p).max(2);
    let grid = build_grid(sorted[0], sorted[p - 1], gp)?;
    let elements = build_basis(&grid)?;
    let g = grid.len();
    let k = elements.len();
    let c = conc.value();
    let target = empirical_target(&sorted, &grid)?;
    let trap = trapezoid_rows(&grid);
    let eps_b = options.epsilon;
    // radii scale with the basis size: a step moves O(1) total mass; both
    // stay inside the global [1e-6, 0.1] bracket
    let rho_init = options.trust_init.unwrap_or((2.0 / k as f64).min(0.05));
    let rho_max = options.trust_max.unwrap_or((8.0 / k as f64).min(0.1));

    let misfit = |b: &[f64]| -> f64 {
        trap.iter()
            .zip(&target.values)
            .map(|(row, t)| {
                (row.iter().zip(b).map(|(r, bi)| r * bi).sum::<f64>() - t).abs()
            })
            .fold(0.0, f64::max)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<(FitResult, bool)> = None;
    let mut lp_iterations_total = 0usize;

    for attempt in 0..=options.restarts {
        let weights: Vec<f64> = if attempt == 0 {
            vec![1.0 / k as f64; k]
        } else {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        };
        let mixture = SpectralMixture::new(elements.clone(), weights.clone())?;
        // one full forward solve before the loop seeds the grid values
        let init = match ForwardSolver::new(&mixture, conc) {
            Ok(solver) => solver.solve_grid_points(&grid),
            Err(e) => Err(e),
        };
        let Ok(mut m) = init else {
            continue;
        };
        for mj in &mut m {
            *mj = Complex64::new(mj.re, mj.im.max(eps_b));
        }
        let mut w = weights;
        let mut rho = rho_init;
        let b_now: Vec<f64> = m.iter().map(|mj| mj.im).collect();
        let mut obj = misfit(&b_now);
        let mut max_resid = 0.0_f64;
        let mut trace = vec![obj];
        let mut converged = false;
        let mut iterations = 0usize;

        while iterations < options.max_iter {
            iterations += 1;
            // first-order response of m to w through the constraint
            let mut resp = vec![Complex64::new(0.0, 0.0); g * k];
            let mut singular = false;
            for (j, &xi) in grid.iter().enumerate() {
                let (vals, grads) = kernel_row(&elements, xi, m[j], c);
                let mut d = Complex64::new(-1.0, 0.0);
                for kk in 0..k {
                    d += w[kk] * grads[kk];
                }
                if d.norm() < 1e-12 {
                    singular = true;
                    break;
                }
                for kk in 0..k {
                    resp[j * k + kk] = -vals[kk] / d;
                }
            }
            if singular {
                break;
            }
            // one predictor/corrector trial along alpha * dw
            let attempt = |w_cur: &[f64],
                           m_cur: &[Complex64],
                           dw: &[f64],
                           alpha: f64|
             -> Option<(Vec<f64>, Vec<Complex64>, f64, f64)> {
                let mut m_pred = m_cur.to_vec();
                for j in 0..g {
                    let mut dm = Complex64::new(0.0, 0.0);
                    for kk in 0..k {
                        dm += resp[j * k + kk] * (alpha * dw[kk]);
                    }
                    let norm = dm.norm();
                    if norm > DM_CAP {
                        dm *= DM_CAP / norm;
                    }
                    m_pred[j] += dm;
                    if m_pred[j].im < 0.0 {
                        m_pred[j] = Complex64::new(m_pred[j].re, 0.0);
                    }
                }
                let mut w2: Vec<f64> = w_cur
                    .iter()
                    .zip(dw)
                    .map(|(a, b)| (a + alpha * b).max(0.0))
                    .collect();
                let total: f64 = w2.iter().sum();
                for v in &mut w2 {
                    *v /= total;
                }
                let (m2, resid2, ok) = newton_corrector(&elements, &grid, &m_pred, m_cur, &w2, c, eps_b);
                if !ok {
                    return None;
                }
                let b2: Vec<f64> = m2.iter().map(|mj| mj.im).collect();
                Some((w2, m2, misfit(&b2), resid2))
            };
            match reduced_step(&trap, &target.values, &m, &resp, &w, rho, eps_b) {
                Ok((dw, predicted, lp_iters)) => {
                    lp_iterations_total += lp_iters;
                    if obj - predicted < 1e-7 {
                        converged = true;
                        break;
                    }
                    // backtracking line search along the LP direction;
                    // every trial is corrected back onto the manifold
                    let obj_before = obj;
                    let mut accepted = false;
                    let mut best: Option<(f64, (Vec<f64>, Vec<Complex64>, f64, f64))> = None;
                    for &alpha in &[1.0, 0.5, 0.25, 0.125] {
                        if let Some(c) = attempt(&w, &m, &dw, alpha) {
                            if c.2 <= obj {
                                best = Some((alpha, c));
                                break;
                            }
                        }
                    }
                    if let Some((alpha, (w2, m2, obj2, resid2))) = best {
                        w = w2;
                        m = m2;
                        obj = obj2;
                        max_resid = resid2;
                        trace.push(obj);
                        accepted = true;
                        if alpha == 1.0 {
                            // direction reuse while it keeps paying
                            let mut reuses = 0;
                            while reuses < 16 {
                                match attempt(&w, &m, &dw, 1.0) {
                                    Some((w3, m3, obj3, resid3)) if obj3 < obj - 1e-12 => {
                                        w = w3;
                                        m = m3;
                                        obj = obj3;
                                        max_resid = resid3;
                                        trace.push(obj);
                                        reuses += 1;
                                    }
                                    _ => break,
                                }
                            }
                            rho = (rho * 1.5).min(rho_max);
                        } else {
                            rho = (rho * alpha.max(SHRINK_FLOOR)).max(1e-6);
                        }
                    }
                    if accepted {
                        if obj_before - obj < 1e-7 {
                            // a noise-level gain only counts as convergence
                            // once the radius is already fine
                            if rho <= rho_init / 16.0 {
                                converged = true;
                                break;
                            }
                            rho *= 0.5;
                        }
                    } else {
                        rho *= 0.5;
                        if rho < 1e-6 {
                            converged = true;
                            break;
                        }
                    }
                }
                Err(Error::Infeasible) => {
                    rho *= 0.5;
                    if rho < 1e-6 {
                        converged = true;
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
        }

        let result = FitResult {
            mixture: SpectralMixture::new(elements.clone(), w.clone())?,
            solution: MpGridSolution {
                grid: grid.clone(),
                m: m.clone(),
                c,
            },
            objective: obj,
            diagnostics: FitDiagnostics {
                converged,
                iterations,
                restarts_used: attempt,
                objective_trace: trace,
                max_residual: max_resid,
                lp_iterations: lp_iterations_total,
            },
        };
        if converged {
            return Ok(result);
        }
        match &best {
            Some((cur, _)) if cur.objective <= result.objective => {}
            _ => best = Some((result, false)),
        }
    }
    best.map(|(r, _)| r)
        .ok_or_else(|| Error::Numerical("every start failed before iterating".into()))
}

/// Cap on the per-point predictor move of `m`; the corrector snaps back to
/// the manifold so this only guards the Newton seed.
const DM_CAP: f64 = 0.5;

/// Ceiling on the sup-norm misfit variable inside the step LP (misfits of
/// interest are below 1).
const T_CAP: f64 = 10.0;

/// Gentlest factor a partial line-search accept may shrink the radius by.
const SHRINK_FLOOR: f64 = 0.25;

/// Solves the reduced trust-region LP in `(Δw, t)`:
/// the sup-norm objective rows with the `Δb` response substituted in, the
/// `b + Δb ≥ ε` floor rows, and the simplex equality.
fn reduced_step(
    trap: &[Vec<f64>],
    target: &[f64],
    m: &[Complex64],
    resp: &[Complex64],
    w: &[f64],
    rho: f64,
    eps_b: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    let g = trap.len();
    let k = w.len();
    let width = k;
    let nvar = width + 1;
    let mut rows = Vec::with_capacity(3 * g + 1);
    let mut row_lower = Vec::with_capacity(3 * g + 1);
    let mut row_upper = Vec::with_capacity(3 * g + 1);

    let fill = |coeff: &mut Vec<f64>, values: &dyn Fn(usize) -> f64| {
        for kk in 0..k {
            coeff[kk] = values(kk);
        }
    };

    // T · (b + Mb·dw) - target within ±t, written through the headroom
    // variable h = T_CAP - t so that the all-slack start (h = 0, dw = 0)
    // is already feasible and phase 1 is trivial
    for i in 0..g {
        let mut coeff = vec![0.0; nvar];
        fill(&mut coeff, &|kk| {
            let mut acc = 0.0;
            for j in 0..g {
                let t = trap[i][j];
                if t != 0.0 {
                    acc += t * resp[j * k + kk].im;
                }
            }
            acc
        });
        let base: f64 = trap[i]
            .iter()
            .zip(m)
            .map(|(t, mj)| t * mj.im)
            .sum::<f64>()
            - target[i];
        let mut up = coeff.clone();
        up[width] = 1.0;
        rows.push(up);
        row_lower.push(f64::NEG_INFINITY);
        row_upper.push(T_CAP - base);
        let mut lo = coeff;
        lo[width] = -1.0;
        rows.push(lo);
        row_lower.push(-T_CAP - base);
        row_upper.push(f64::INFINITY);
    }
    // b_j + db_j >= eps
    for j in 0..g {
        let mut coeff = vec![0.0; nvar];
        fill(&mut coeff, &|kk| resp[j * k + kk].im);
        rows.push(coeff);
        row_lower.push(eps_b - m[j].im);
        row_upper.push(f64::INFINITY);
    }
    // simplex: sum dw = 0
    let mut simplex = vec![0.0; nvar];
    fill(&mut simplex, &|_| 1.0);
    rows.push(simplex);
    row_lower.push(0.0);
    row_upper.push(0.0);

    let mut lower = Vec::with_capacity(nvar);
    let mut upper = Vec::with_capacity(nvar);
    for kk in 0..k {
        lower.push((-rho).max(-w[kk]));
        upper.push(rho);
    }
    lower.push(0.0);
    upper.push(T_CAP);

    // minimizing t == maximizing the headroom
    let mut objective = vec![0.0; width];
    objective.push(-1.0);

    let sol = lp::solve(&LinearProgram {
        objective,
        rows,
        row_lower,
        row_upper,
        lower,
        upper,
    })?;
    let dw = sol.x[..k].to_vec();
    Ok((dw, T_CAP - sol.x[width], sol.iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn target_convention_values_p4() {
        let eigs = [1.0, 2.0, 3.0, 4.0];
        let t = empirical_target(&eigs, &eigs).unwrap();
        let want = [0.125, 0.375, 0.625, 0.875];
        for (got, want) in t.values.iter().zip(want) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-15);
        }
    }

    #[test]
    fn target_interpolates_midpoints() {
        let eigs = [1.0, 2.0, 3.0, 4.0];
        let t = empirical_target(&eigs, &[2.5]).unwrap();
        assert_abs_diff_eq!(t.values[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn target_extrapolates_constant() {
        let eigs = [1.0, 2.0, 3.0, 4.0];
        let t = empirical_target(&eigs, &[0.5, 9.0]).unwrap();
        assert_abs_diff_eq!(t.values[0], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(t.values[1], 0.875, epsilon = 1e-15);
    }

    #[test]
    fn target_rejects_nonpositive_eigenvalues() {
        assert!(empirical_target(&[0.0, 1.0], &[1.0]).is_err());
        assert!(empirical_target(&[-1.0, 1.0], &[1.0]).is_err());
    }

    fn on_manifold_state(c: f64) -> (SlpState, Vec<BasisElement>, Vec<f64>, Concentration) {
        // a small mixture solved exactly on a short grid
        let conc = Concentration::from_ratio(c).unwrap();
        let grid_b = crate::basis::build_grid(0.8, 3.0, 4).unwrap();
        let elements = crate::basis::build_basis(&grid_b).unwrap();
        let k = elements.len();
        let weights = vec![1.0 / k as f64; k];
        let mix = SpectralMixture::new(elements.clone(), weights.clone()).unwrap();
        let solver = ForwardSolver::new(&mix, &conc).unwrap();
        let grid: Vec<f64> = vec![0.5, 1.0, 1.6, 2.2, 2.9, 3.6];
        let m: Vec<Complex64> = grid
            .iter()
            .map(|&x| {
                let v = solver.m_breve(x).unwrap();
                Complex64::new(v.re, v.im.max(1e-6))
            })
            .collect();
        let state = SlpState {
            weights,
            m,
            objective: 0.0,
            iteration: 0,
            converged: false,
            max_residual: 0.0,
            trust_radius: 0.01,
        };
        (state, elements, grid, conc)
    }

    #[test]
    fn linearization_jacobian_matches_finite_differences() {
        let (mut state, elements, grid, conc) = on_manifold_state(0.3);
        // perturb off the manifold so residuals are generic
        for (j, mj) in state.m.iter_mut().enumerate() {
            *mj += Complex64::new(0.01 * (j as f64 + 1.0), 0.02);
        }
        let target = EmpiricalSpectrumTarget {
            eigenvalues: vec![0.5, 3.6],
            grid: grid.clone(),
            values: vec![0.1, 0.25, 0.4, 0.6, 0.8, 0.9],
        };
        let lp = linearize_constraints(&state, &elements, &grid, &conc, &target, 0.01, 1e-6, 1e4)
            .unwrap();
        let g = grid.len();
        let k = elements.len();
        let c = conc.value();
        let residual = |m: &[Complex64], w: &[f64], j: usize| -> Complex64 {
            point_residual(&elements, grid[j], m[j], w, c).0
        };
        let h = 1e-6;
        // the first 4g rows hold the linearized residuals as two one-sided
        // inequalities each; row 4j is the "<=" of the real part at point j
        for j in 0..g {
            for part in 0..2 {
                let row = &lp.rows[4 * j + 2 * part];
                let pick = |v: Complex64| if part == 0 { v.re } else { v.im };
                // d/da_j
                let mut mp = state.m.clone();
                mp[j] += h;
                let mut mm = state.m.clone();
                mm[j] -= h;
                let fd = (pick(residual(&mp, &state.weights, j))
                    - pick(residual(&mm, &state.weights, j)))
                    / (2.0 * h);
                assert!(
                    (row[j] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "da mismatch at j={j} part={part}: {} vs {fd}",
                    row[j]
                );
                // d/db_j
                let mut mp = state.m.clone();
                mp[j] += Complex64::new(0.0, h);
                let mut mm = state.m.clone();
                mm[j] -= Complex64::new(0.0, h);
                let fd = (pick(residual(&mp, &state.weights, j))
                    - pick(residual(&mm, &state.weights, j)))
                    / (2.0 * h);
                assert!(
                    (row[g + j] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                    "db mismatch at j={j} part={part}"
                );
                // d/dw_k for a few k
                for kk in [0usize, k / 2, k - 1] {
                    let mut wp = state.weights.clone();
                    wp[kk] += h;
                    let mut wm = state.weights.clone();
                    wm[kk] -= h;
                    let fd = (pick(residual(&state.m, &wp, j))
                        - pick(residual(&state.m, &wm, j)))
                        / (2.0 * h);
                    assert!(
                        (row[2 * g + kk] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                        "dw mismatch at j={j} part={part} k={kk}"
                    );
                }
            }
        }
    }

    #[test]
    fn linearization_stationary_at_exact_solution() {
        let (state, elements, grid, conc) = on_manifold_state(0.25);
        let trap = trapezoid_rows(&grid);
        let b: Vec<f64> = state.m.iter().map(|m| m.im).collect();
        let cdf: Vec<f64> = trap
            .iter()
            .map(|row| row.iter().zip(&b).map(|(t, bi)| t * bi).sum())
            .collect();
        // target shifted off the model cdf by 0.02 -> misfit is exactly 0.02
        let target = EmpiricalSpectrumTarget {
            eigenvalues: vec![grid[0], grid[5]],
            grid: grid.clone(),
            values: cdf.iter().map(|v| v + 0.02).collect(),
        };
        let lp = linearize_constraints(&state, &elements, &grid, &conc, &target, 0.01, 1e-6, 1e4)
            .unwrap();
        // delta = 0 with t = misfit, s = max residual must be feasible
        let nvar = lp.objective.len();
        let mut x = vec![0.0; nvar];
        x[nvar - 2] = 0.02; // t
        x[nvar - 1] = 1e-9; // s: state is on the manifold to solver accuracy
        for (i, row) in lp.rows.iter().enumerate() {
            let v: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!(
                v >= lp.row_lower[i] - 1e-7 && v <= lp.row_upper[i] + 1e-7,
                "row {i} violated: {v} not in [{}, {}]",
                lp.row_lower[i],
                lp.row_upper[i]
            );
        }
        // and the LP optimum cannot beat the current misfit by more than
        // the trust region allows
        let sol = lp::solve(&lp).unwrap();
        assert!(sol.objective <= 0.02 + 1e-9);
    }

    #[test]
    fn zero_trust_region_returns_zero_step() {
        let (state, elements, grid, conc) = on_manifold_state(0.3);
        let target = EmpiricalSpectrumTarget {
            eigenvalues: vec![grid[0], grid[5]],
            grid: grid.clone(),
            values: vec![0.1, 0.3, 0.5, 0.6, 0.8, 0.95],
        };
        let lp =
            linearize_constraints(&state, &elements, &grid, &conc, &target, 0.0, 1e-6, 1e4)
                .unwrap();
        let sol = lp::solve(&lp).unwrap();
        let g = grid.len();
        let k = elements.len();
        for v in &sol.x[..2 * g + k] {
            assert!(v.abs() <= 1e-10, "nonzero step component {v}");
        }
    }

    #[test]
    fn full_and_reduced_programs_agree_on_the_manifold() {
        let (state, elements, grid, conc) = on_manifold_state(0.3);
        let target = EmpiricalSpectrumTarget {
            eigenvalues: vec![grid[0], grid[5]],
            grid: grid.clone(),
            values: vec![0.1, 0.3, 0.5, 0.6, 0.8, 0.95],
        };
        let rho = 0.004;
        let mut full =
            linearize_constraints(&state, &elements, &grid, &conc, &target, rho, 1e-6, 1e4)
                .unwrap();
        let g = grid.len();
        let k = elements.len();
        // the reduced program has no boxes on the m-response (the predictor
        // clip and step acceptance play that role), so widen them here to
        // compare the shared polytope in dw
        for j in 0..2 * g {
            full.lower[j] = -10.0;
            full.upper[j] = 10.0;
        }
        let full_sol = lp::solve(&full).unwrap();
        let c = conc.value();
        let mut resp = vec![Complex64::new(0.0, 0.0); g * k];
        for (j, &xi) in grid.iter().enumerate() {
            let (vals, grads) = kernel_row(&elements, xi, state.m[j], c);
            let mut d = Complex64::new(-1.0, 0.0);
            for kk in 0..k {
                d += state.weights[kk] * grads[kk];
            }
            for kk in 0..k {
                resp[j * k + kk] = -vals[kk] / d;
            }
        }
        let trap = trapezoid_rows(&grid);
        let (_, predicted, _) = reduced_step(
            &trap,
            &target.values,
            &state.m,
            &resp,
            &state.weights,
            rho,
            1e-6,
        )
        .unwrap();
        // the slack penalty keeps s ~ 0 on the manifold, so the optimal
        // linearized misfits coincide up to the corrector's residual scale
        assert!(
            (full_sol.objective - predicted).abs() <= 1e-5,
            "full {} vs reduced {predicted}",
            full_sol.objective
        );
    }

    #[test]
    fn objective_zero_when_cdf_matches_and_shift_is_exact() {
        let grid = vec![1.0, 2.0, 3.0];
        let density = [0.2, 0.3, 0.1];
        let m: Vec<Complex64> = density
            .iter()
            .map(|&f| Complex64::new(0.0, f * std::f64::consts::PI))
            .collect();
        let sol = MpGridSolution {
            grid: grid.clone(),
            m,
            c: 0.3,
        };
        let cdf = crate::mp::cdf_trapezoid(&sol);
        let t0 = EmpiricalSpectrumTarget {
            eigenvalues: vec![1.0, 3.0],
            grid: grid.clone(),
            values: cdf.clone(),
        };
        assert_abs_diff_eq!(objective(&sol, &t0).unwrap(), 0.0, epsilon = 1e-15);
        let shifted = EmpiricalSpectrumTarget {
            eigenvalues: vec![1.0, 3.0],
            grid,
            values: cdf.iter().map(|v| v + 0.05).collect(),
        };
        assert_abs_diff_eq!(objective(&sol, &shifted).unwrap(), 0.05, epsilon = 1e-12);
    }
}
