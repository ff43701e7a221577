//! Forward Marčenko–Pastur solve: from a population mixture and a
//! concentration ratio to the support, boundary Stieltjes values, density
//! and c.d.f. of the limiting sample spectral distribution.
//!
//! Everything rides on the real inverse map `z̃(u) = u - c·u·m_LH(u)`: its
//! increasing stretches sweep out the complement of the support, and inside
//! the support the boundary values come from the unique solution `v` in the
//! upper half-plane of `v - c·v·m_LH(v) = λ`.

use num_complex::Complex64;

use crate::basis::SpectralMixture;
use crate::{Error, Result};

/// Dimension-to-sample-size ratio, restricted to (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct Concentration {
    c: f64,
    dims: Option<(usize, usize)>,
}

impl Concentration {
    /// From dimension and sample size; requires `0 < p < n`.
    pub fn from_dims(p: usize, n: usize) -> Result<Self> {
        if p == 0 || p >= n {
            return Err(Error::ConcentrationOutOfRange { p, n });
        }
        Ok(Self {
            c: p as f64 / n as f64,
            dims: Some((p, n)),
        })
    }

    /// From a raw ratio in (0, 1).
    pub fn from_ratio(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidInput(format!(
                "concentration {c} must lie strictly between 0 and 1"
            )));
        }
        Ok(Self { c, dims: None })
    }

    pub fn value(&self) -> f64 {
        self.c
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }
}

/// Disjoint closed intervals in `(0, ∞)`, ascending.
#[derive(Debug, Clone)]
pub struct SupportSet {
    pub intervals: Vec<(f64, f64)>,
}

impl SupportSet {
    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    pub fn lower_edge(&self) -> f64 {
        self.intervals.first().map_or(f64::NAN, |iv| iv.0)
    }

    pub fn upper_edge(&self) -> f64 {
        self.intervals.last().map_or(f64::NAN, |iv| iv.1)
    }
}

/// Boundary Stieltjes values `m_j = a_j + i·b_j` on a real grid, with the
/// density `b_j / π` and trapezoidal c.d.f. derived from them.
#[derive(Debug, Clone)]
pub struct MpGridSolution {
    pub grid: Vec<f64>,
    pub m: Vec<Complex64>,
    pub c: f64,
}

impl MpGridSolution {
    /// Density values `Im(m_j) / π`.
    pub fn density(&self) -> Vec<f64> {
        self.m.iter().map(|m| m.im / std::f64::consts::PI).collect()
    }
}

/// Trapezoidal c.d.f. over the solution grid with the convention `x_0 = 0`:
/// `F(x_i) = Σ_{j<i} (x_{j+1} - x_{j-1})/2 · f_j + (x_i - x_{i-1})/2 · f_i`.
/// Values are clipped into `[0, 1]` (the raw sum can overshoot 1 by the
/// discretization error of the rule).
pub fn cdf_trapezoid(sol: &MpGridSolution) -> Vec<f64> {
    cdf_trapezoid_raw(&sol.grid, &sol.density())
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect()
}

pub(crate) fn cdf_trapezoid_raw(grid: &[f64], density: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let mut out = vec![0.0; g];
    // 1-based grid access with the x_0 = 0 convention
    let x = |j: usize| -> f64 { if j == 0 { 0.0 } else { grid[j - 1] } };
    let mut centered = 0.0; // Σ_{j<i} (x_{j+1} - x_{j-1})/2 · f_j
    for i in 1..=g {
        out[i - 1] = centered + (x(i) - x(i - 1)) / 2.0 * density[i - 1];
        if i < g {
            centered += (x(i + 1) - x(i - 1)) / 2.0 * density[i - 1];
        }
    }
    out
}

const SCAN_POINTS: usize = 2048;
const Y_EPS_DEFAULT: f64 = 1e-6;

/// One maximal stretch of `u` on which `z̃` increases. Its image is excluded
/// from the support. `u_hi`/`z_hi` are infinite for the rightmost stretch.
#[derive(Debug, Clone, Copy)]
struct Run {
    u_lo: f64,
    u_hi: f64,
    z_lo: f64,
    z_hi: f64,
}

#[derive(Debug, Clone)]
struct IntervalTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    lams: Vec<f64>,
}

/// Precomputed forward solution for one (mixture, concentration) pair.
///
/// Building the solver scans the support once and tabulates the
/// `x ↦ (y_x, λ(x))` parametrization of each support interval; point
/// queries then cost a seeded Newton polish.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    mix: SpectralMixture,
    c: f64,
    support: SupportSet,
    runs: Vec<Run>,
    tables: Vec<IntervalTable>,
    /// open u-interval bracketing each support interval's parametrization
    x_domains: Vec<(f64, f64)>,
}

impl ForwardSolver {
    pub fn new(mix: &SpectralMixture, conc: &Concentration) -> Result<Self> {
        Self::with_resolution(mix, conc, 200)
    }

    /// `table_points` controls the per-interval parametrization table size.
    pub fn with_resolution(
        mix: &SpectralMixture,
        conc: &Concentration,
        table_points: usize,
    ) -> Result<Self> {
        let c = conc.value();
        let runs = scan_increasing_runs(mix, c)?;
        if runs.len() < 2 {
            return Err(Error::Numerical(
                "support scan found no bounded spectral interval".into(),
            ));
        }
        let mut intervals = Vec::new();
        let mut x_domains = Vec::new();
        for k in 0..runs.len() - 1 {
            intervals.push((runs[k].z_hi, runs[k + 1].z_lo));
            x_domains.push((runs[k].u_hi, runs[k + 1].u_lo));
        }
        let mut solver = Self {
            mix: mix.clone(),
            c,
            support: SupportSet { intervals },
            runs,
            tables: Vec::new(),
            x_domains,
        };
        solver.build_tables(table_points.max(16))?;
        Ok(solver)
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn concentration(&self) -> f64 {
        self.c
    }

    fn build_tables(&mut self, nx: usize) -> Result<()> {
        for &(u1, u2) in &self.x_domains {
            let eta = (u2 - u1) * 1e-6;
            let lo = u1 + eta;
            let hi = u2 - eta;
            let mut xs = Vec::with_capacity(nx);
            let mut ys = Vec::with_capacity(nx);
            let mut lams = Vec::with_capacity(nx);
            let mut seed = None;
            for i in 0..nx {
                let x = lo + (hi - lo) * i as f64 / (nx - 1) as f64;
                let y = solve_y_bracketed(&self.mix, self.c, x, seed, Y_EPS_DEFAULT)?;
                let lam = lambda_of(&self.mix, self.c, x, y)?;
                xs.push(x);
                ys.push(y);
                lams.push(lam);
                seed = Some(y);
            }
            for i in 1..nx {
                if lams[i] <= lams[i - 1] {
                    return Err(Error::NonMonotone(xs[i]));
                }
            }
            self.tables.push(IntervalTable { xs, ys, lams });
        }
        Ok(())
    }

    /// The unique `v ∈ ℂ⁺` with `v - c·v·m_LH(v) = λ` for `λ` inside the
    /// support; the real preimage of `z̃` outside it.
    pub fn v_at(&self, lam: f64) -> Result<Complex64> {
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::InvalidInput(format!("lambda {lam} must be positive")));
        }
        for (k, &(z1, z2)) in self.support.intervals.iter().enumerate() {
            if lam > z1 && lam < z2 {
                return self.v_inside(k, lam);
            }
        }
        // off support (or exactly at an edge): invert z̃ on the covering run
        for run in &self.runs {
            if lam >= run.z_lo && lam <= run.z_hi {
                let u = invert_ztilde_on_run(&self.mix, self.c, run, lam)?;
                return Ok(Complex64::new(u, 0.0));
            }
        }
        Err(Error::OutsideBulk(lam))
    }

    fn v_inside(&self, k: usize, lam: f64) -> Result<Complex64> {
        let table = &self.tables[k];
        let n = table.lams.len();
        let idx = table
            .lams
            .partition_point(|&l| l < lam)
            .clamp(1, n - 1);
        let (l0, l1) = (table.lams[idx - 1], table.lams[idx]);
        let t = ((lam - l0) / (l1 - l0)).clamp(0.0, 1.0);
        let x0 = table.xs[idx - 1] + t * (table.xs[idx] - table.xs[idx - 1]);
        let y0 = (table.ys[idx - 1] + t * (table.ys[idx] - table.ys[idx - 1])).max(1e-12);
        let mut v = Complex64::new(x0, y0);
        let scale = lam.abs().max(1.0);
        for _ in 0..60 {
            let m = self.mix.mlh(v)?;
            let h = v - self.c * v * m - lam;
            if h.norm() <= 1e-12 * scale {
                return Ok(v);
            }
            let hp = 1.0 - self.c * (m + v * self.mix.mlh_prime(v)?);
            let step = h / hp;
            let mut vn = v - step;
            if vn.im <= 0.0 {
                vn = Complex64::new(vn.re, (v.im * 0.5).max(1e-14));
            }
            v = vn;
        }
        // Newton stalled; fall back to bisection in the x-parametrization
        self.v_by_x_bisection(k, lam)
    }

    fn v_by_x_bisection(&self, k: usize, lam: f64) -> Result<Complex64> {
        let (mut a, mut b) = self.x_domains[k];
        let table = &self.tables[k];
        let eta = (b - a) * 1e-6;
        a += eta;
        b -= eta;
        let mut seed = None;
        let eval = |x: f64, seed: Option<f64>| -> Result<(f64, f64)> {
            let y = solve_y_bracketed(&self.mix, self.c, x, seed, Y_EPS_DEFAULT)?;
            Ok((y, lambda_of(&self.mix, self.c, x, y)?))
        };
        // seed bracket from the table
        let idx = table.lams.partition_point(|&l| l < lam);
        if idx > 0 && idx < table.xs.len() {
            a = table.xs[idx - 1];
            b = table.xs[idx];
        }
        let (mut ya, _) = eval(a, seed)?;
        for _ in 0..200 {
            let xm = 0.5 * (a + b);
            let (ym, lm) = eval(xm, seed)?;
            seed = Some(ym);
            if lm < lam {
                a = xm;
                ya = ym;
            } else {
                b = xm;
            }
            if b - a <= 1e-13 * a.abs().max(1.0) {
                break;
            }
        }
        Ok(Complex64::new(0.5 * (a + b), ya.max(1e-12)))
    }

    /// Boundary Stieltjes value `m̆_F(λ)` via `v_λ`.
    pub fn m_breve(&self, lam: f64) -> Result<Complex64> {
        let v = self.v_at(lam)?;
        let m = m_breve_from_v(v, self.c, lam)?;
        // real preimage means zero density by construction
        if v.im == 0.0 {
            return Ok(Complex64::new(m.re, 0.0));
        }
        Ok(m)
    }

    /// Solve at every grid point, off-support points yielding `Im = 0`.
    pub fn solve_grid_points(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        grid.iter().map(|&x| self.m_breve(x)).collect()
    }
}

/// `m̆_F(λ) = (1 - c)/(c·λ) - 1/(c·v_λ)`.
pub fn m_breve_from_v(v: Complex64, c: f64, lam: f64) -> Result<Complex64> {
    if lam == 0.0 {
        return Err(Error::InvalidInput("m_breve undefined at lambda = 0".into()));
    }
    Ok((1.0 - c) / (c * lam) - 1.0 / (c * v))
}

/// `λ(x) = Re[(x + i·y)(1 - c·m_LH(x + i·y))]`; with `y = y_x` the
/// imaginary part vanishes and this is the support point parametrized by x.
fn lambda_of(mix: &SpectralMixture, c: f64, x: f64, y: f64) -> Result<f64> {
    let z = Complex64::new(x, y);
    Ok((z - c * z * mix.mlh(z)?).re)
}

fn im_residual(mix: &SpectralMixture, c: f64, x: f64, y: f64) -> Result<f64> {
    let z = Complex64::new(x, y);
    Ok((z - c * z * mix.mlh(z)?).im)
}

/// Locates `y_x` by bracketing the sign change of the imaginary residual and
/// bisecting to 1e-12 in `y`. `seed` (from a neighbouring `x`) tightens the
/// initial bracket.
fn solve_y_bracketed(
    mix: &SpectralMixture,
    c: f64,
    x: f64,
    seed: Option<f64>,
    eps: f64,
) -> Result<f64> {
    let y_min = 1e-14;
    let y_max = 1.0 / eps;
    let (mut lo, mut hi);
    match seed {
        Some(s) if s > 0.0 => {
            lo = s;
            hi = s;
            while lo > y_min && im_residual(mix, c, x, lo)? > 0.0 {
                lo *= 0.5;
            }
            while im_residual(mix, c, x, hi)? < 0.0 {
                hi *= 2.0;
                if hi > y_max {
                    return Err(Error::OutsideBulk(x));
                }
            }
        }
        _ => {
            lo = eps;
            while im_residual(mix, c, x, lo)? > 0.0 {
                lo *= 0.5;
                if lo < y_min {
                    return Err(Error::OutsideBulk(x));
                }
            }
            hi = (2.0 * lo).max(1.0);
            while im_residual(mix, c, x, hi)? < 0.0 {
                hi *= 2.0;
                if hi > y_max {
                    return Err(Error::OutsideBulk(x));
                }
            }
        }
    }
    if im_residual(mix, c, x, lo)? > 0.0 {
        return Err(Error::OutsideBulk(x));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if im_residual(mix, c, x, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Public single-point version of the `y_x` solve, searching inside `k_box`.
pub fn solve_y(
    mix: &SpectralMixture,
    conc: &Concentration,
    x: f64,
    k_box: (f64, f64),
) -> Result<f64> {
    let c = conc.value();
    let (mut lo, hi) = k_box;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidInput("k_box must satisfy 0 < lo < hi".into()));
    }
    if im_residual(mix, c, x, lo)? > 0.0 {
        return Err(Error::OutsideBulk(x));
    }
    let mut hi_cur = (2.0 * lo).max(1.0).min(hi);
    while im_residual(mix, c, x, hi_cur)? < 0.0 {
        if hi_cur >= hi {
            return Err(Error::OutsideBulk(x));
        }
        hi_cur = (hi_cur * 2.0).min(hi);
    }
    let mut hi = hi_cur;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if im_residual(mix, c, x, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn ztilde(mix: &SpectralMixture, c: f64, u: f64) -> Result<f64> {
    let z = Complex64::new(u, 0.0);
    Ok(u - c * u * mix.mlh(z)?.re)
}

fn ztilde_prime(mix: &SpectralMixture, c: f64, u: f64) -> Result<f64> {
    let z = Complex64::new(u, 0.0);
    let m = mix.mlh(z)?;
    let mp = mix.mlh_prime(z)?;
    Ok(1.0 - c * (m.re + u * mp.re))
}

/// Scans the complement of the mixture support for the increasing runs of
/// `z̃`. Always yields the run starting at `u = 0` (where `z̃' → 1 - c`) and
/// the run ending at `+∞` (where `z̃' → 1`).
fn scan_increasing_runs(mix: &SpectralMixture, c: f64) -> Result<Vec<Run>> {
    let supp_h = mix.support_intervals();
    if supp_h.is_empty() {
        return Err(Error::InvalidInput("mixture carries no weight".into()));
    }
    let mut components: Vec<(f64, f64)> = Vec::new();
    components.push((0.0, supp_h[0].0));
    for w in supp_h.windows(2) {
        components.push((w[0].1, w[1].0));
    }
    components.push((supp_h.last().unwrap().1, f64::INFINITY));

    let mut runs: Vec<Run> = Vec::new();
    for &(lo, hi) in &components {
        let unbounded = hi.is_infinite();
        if !unbounded && hi - lo < 1e-13 * hi.abs().max(1.0) {
            continue;
        }
        let scale = lo.max(1.0);
        let us: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| {
                if unbounded {
                    let t = 1e-9 + (1.0 - 1e-6 - 1e-9) * i as f64 / (SCAN_POINTS - 1) as f64;
                    lo + scale * t / (1.0 - t)
                } else {
                    let eta = (hi - lo) * 1e-9;
                    lo + eta + (hi - lo - 2.0 * eta) * i as f64 / (SCAN_POINTS - 1) as f64
                }
            })
            .collect();
        let signs: Vec<bool> = us
            .iter()
            .map(|&u| ztilde_prime(mix, c, u).map(|d| d > 0.0))
            .collect::<Result<_>>()?;
        let mut i = 0;
        while i < SCAN_POINTS {
            if !signs[i] {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < SCAN_POINTS && signs[j + 1] {
                j += 1;
            }
            let mut u_lo = us[i];
            let mut u_hi = us[j];
            if i > 0 && !signs[i - 1] {
                u_lo = bisect_derivative_root(mix, c, us[i - 1], us[i])?;
            } else if i == 0 && lo == 0.0 {
                u_lo = 0.0;
            }
            if j + 1 < SCAN_POINTS && !signs[j + 1] {
                u_hi = bisect_derivative_root(mix, c, us[j + 1], us[j])?;
            } else if j + 1 == SCAN_POINTS && unbounded {
                u_hi = f64::INFINITY;
            }
            let z_lo = if u_lo == 0.0 { 0.0 } else { ztilde(mix, c, u_lo)? };
            let z_hi = if u_hi.is_infinite() {
                f64::INFINITY
            } else {
                ztilde(mix, c, u_hi)?
            };
            runs.push(Run { u_lo, u_hi, z_lo, z_hi });
            i = j + 1;
        }
    }
    runs.sort_by(|a, b| a.u_lo.total_cmp(&b.u_lo));
    Ok(runs)
}

/// Root of `z̃'` between a point where it is negative and one where it is
/// positive.
fn bisect_derivative_root(mix: &SpectralMixture, c: f64, neg: f64, pos: f64) -> Result<f64> {
    let (mut neg, mut pos) = (neg, pos);
    for _ in 0..100 {
        let mid = 0.5 * (neg + pos);
        if ztilde_prime(mix, c, mid)? > 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
        if (pos - neg).abs() <= 1e-12 * pos.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (neg + pos))
}

/// Inverts the increasing `z̃` on a run by bisection.
fn invert_ztilde_on_run(mix: &SpectralMixture, c: f64, run: &Run, lam: f64) -> Result<f64> {
    let mut a = if run.u_lo == 0.0 { 1e-12 } else { run.u_lo };
    let mut b = if run.u_hi.is_infinite() {
        let mut b = (2.0 * a).max(1.0);
        while ztilde(mix, c, b)? < lam {
            b *= 2.0;
            if b > 1e12 {
                return Err(Error::Numerical("z-inverse diverged".into()));
            }
        }
        b
    } else {
        run.u_hi
    };
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if ztilde(mix, c, mid)? < lam {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-13 * b.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Support of the limiting sample spectral distribution.
pub fn support(mix: &SpectralMixture, conc: &Concentration) -> Result<SupportSet> {
    let runs = scan_increasing_runs(mix, conc.value())?;
    let mut intervals = Vec::new();
    for k in 0..runs.len().saturating_sub(1) {
        intervals.push((runs[k].z_hi, runs[k + 1].z_lo));
    }
    Ok(SupportSet { intervals })
}

/// Single-point solve of `v_λ`. For batch queries build a [`ForwardSolver`].
pub fn solve_v(mix: &SpectralMixture, conc: &Concentration, lam: f64) -> Result<Complex64> {
    let solver = ForwardSolver::new(mix, conc)?;
    let v = solver.v_at(lam)?;
    if v.im == 0.0 {
        return Err(Error::OutsideBulk(lam));
    }
    Ok(v)
}

/// Boundary values of `m̆_F` on a grid: the upper-half-plane solve inside the
/// support, the real-line limit outside it.
pub fn solve_grid(
    mix: &SpectralMixture,
    conc: &Concentration,
    grid: &[f64],
) -> Result<MpGridSolution> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("solution grid must be ascending".into()));
    }
    let solver = ForwardSolver::new(mix, conc)?;
    let m = solver.solve_grid_points(grid)?;
    Ok(MpGridSolution {
        grid: grid.to_vec(),
        m,
        c: conc.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, build_grid};
    use approx::assert_abs_diff_eq;

    fn atom_mix(at: f64) -> SpectralMixture {
        SpectralMixture::from_atoms(&[at], &[1.0]).unwrap()
    }

    fn mp_density(lam: f64, c: f64, tau: f64) -> f64 {
        let a = tau * (1.0 - c.sqrt()).powi(2);
        let b = tau * (1.0 + c.sqrt()).powi(2);
        if lam <= a || lam >= b {
            return 0.0;
        }
        ((b - lam) * (lam - a)).sqrt() / (2.0 * std::f64::consts::PI * c * lam * tau)
    }

    #[test]
    fn single_atom_support_matches_closed_form() {
        for &c in &[0.1, 1.0 / 3.0, 0.5, 0.9] {
            let conc = Concentration::from_ratio(c).unwrap();
            let sup = support(&atom_mix(1.0), &conc).unwrap();
            assert_eq!(sup.intervals.len(), 1);
            let (lo, hi) = sup.intervals[0];
            assert_abs_diff_eq!(lo, (1.0 - c.sqrt()).powi(2), epsilon = 1e-4);
            assert_abs_diff_eq!(hi, (1.0 + c.sqrt()).powi(2), epsilon = 1e-4);
        }
    }

    #[test]
    fn support_shrinks_to_atom_as_c_vanishes() {
        let conc = Concentration::from_ratio(1e-4).unwrap();
        let sup = support(&atom_mix(1.0), &conc).unwrap();
        let (lo, hi) = sup.intervals[0];
        assert!(lo > 0.97 && hi < 1.03, "({lo}, {hi})");
    }

    #[test]
    fn single_atom_density_matches_closed_form() {
        for &c in &[0.1, 1.0 / 3.0, 0.5, 0.9] {
            let conc = Concentration::from_ratio(c).unwrap();
            let solver = ForwardSolver::new(&atom_mix(1.0), &conc).unwrap();
            let (a, b) = solver.support().intervals[0];
            let width = b - a;
            let mut worst = 0.0_f64;
            for i in 0..200 {
                let lam = a + 0.05 * width + 0.9 * width * i as f64 / 199.0;
                let got = solver.m_breve(lam).unwrap().im / std::f64::consts::PI;
                let want = mp_density(lam, c, 1.0);
                worst = worst.max((got - want).abs());
            }
            assert!(worst <= 1e-5, "c = {c}: sup density error {worst}");
        }
    }

    #[test]
    fn solve_y_residual_small_at_center() {
        let conc = Concentration::from_ratio(0.25).unwrap();
        let mix = atom_mix(1.0);
        let y = solve_y(&mix, &conc, 1.0, (1e-6, 1e6)).unwrap();
        assert!(y > 0.0);
        let g = im_residual(&mix, 0.25, 1.0, y).unwrap().abs();
        assert!(g <= 1e-9, "residual {g}");
    }

    #[test]
    fn solve_y_errors_outside_bulk() {
        let conc = Concentration::from_ratio(0.25).unwrap();
        let mix = atom_mix(1.0);
        // way to the right of the support's u-interval
        assert!(matches!(
            solve_y(&mix, &conc, 50.0, (1e-6, 1e6)),
            Err(Error::OutsideBulk(_))
        ));
    }

    #[test]
    fn solve_y_stable_under_table_refinement() {
        let conc = Concentration::from_ratio(0.3).unwrap();
        let mix = SpectralMixture::from_atoms(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
        let coarse = ForwardSolver::with_resolution(&mix, &conc, 60).unwrap();
        let fine = ForwardSolver::with_resolution(&mix, &conc, 400).unwrap();
        for lam in [1.0, 1.5, 2.2] {
            let vc = coarse.v_at(lam).unwrap();
            let vf = fine.v_at(lam).unwrap();
            assert!((vc - vf).norm() < 1e-8, "lam {lam}: {vc} vs {vf}");
        }
    }

    #[test]
    fn solve_v_residual_and_positivity() {
        let conc = Concentration::from_ratio(0.25).unwrap();
        let mix = atom_mix(1.0);
        let v = solve_v(&mix, &conc, 1.0).unwrap();
        assert!(v.im > 0.0);
        let m = mix.mlh(v).unwrap();
        let h = (v - 0.25 * v * m - 1.0).norm();
        assert!(h <= 1e-9, "|h| = {h}");
    }

    #[test]
    fn solve_v_on_two_atom_support_midpoint() {
        let conc = Concentration::from_ratio(1.0 / 3.0).unwrap();
        let mix = SpectralMixture::from_atoms(&[1.0, 10.0], &[0.5, 0.5]).unwrap();
        let solver = ForwardSolver::new(&mix, &conc).unwrap();
        let (lo, hi) = solver.support().intervals[0];
        let lam = 0.5 * (lo + hi);
        let v = solver.v_at(lam).unwrap();
        assert!(v.im > 0.0);
    }

    #[test]
    fn solve_v_errors_off_support() {
        let conc = Concentration::from_ratio(0.25).unwrap();
        assert!(matches!(
            solve_v(&atom_mix(1.0), &conc, 100.0),
            Err(Error::OutsideBulk(_))
        ));
    }

    #[test]
    fn bai_silverstein_support_has_three_intervals() {
        let conc = Concentration::from_ratio(1.0 / 3.0).unwrap();
        let mix = SpectralMixture::from_atoms(&[1.0, 3.0, 10.0], &[0.2, 0.4, 0.4]).unwrap();
        let sup = support(&mix, &conc).unwrap();
        assert_eq!(sup.intervals.len(), 3);
    }

    #[test]
    fn m_breve_from_v_direct_arithmetic() {
        let m = m_breve_from_v(Complex64::new(0.0, 1.0), 0.5, 1.0).unwrap();
        // (1-c)/(c λ) - 1/(c v) = 1 - 2/i = 1 + 2i
        assert_abs_diff_eq!(m.re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.im, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn m_breve_from_v_imaginary_sign() {
        let m = m_breve_from_v(Complex64::new(0.3, 0.8), 0.4, 2.0).unwrap();
        assert!(m.im >= 0.0);
        assert!(m_breve_from_v(Complex64::new(0.0, 1.0), 0.5, 0.0).is_err());
    }

    #[test]
    fn grid_solution_matches_mp_law_and_masses() {
        let c = 0.25;
        let conc = Concentration::from_ratio(c).unwrap();
        let mix = atom_mix(1.0);
        let (a, b) = ((1.0_f64 - c.sqrt()).powi(2), (1.0_f64 + c.sqrt()).powi(2));
        let grid: Vec<f64> = (0..500)
            .map(|i| 0.9 * a + (1.1 * b - 0.9 * a) * i as f64 / 499.0)
            .collect();
        let sol = solve_grid(&mix, &conc, &grid).unwrap();
        let dens = sol.density();
        let mut worst = 0.0_f64;
        for (i, &x) in grid.iter().enumerate() {
            assert!(sol.m[i].im >= 0.0);
            // compare on the interior 90% only; edges have sqrt kinks
            if x > a + 0.05 * (b - a) && x < b - 0.05 * (b - a) {
                worst = worst.max((dens[i] - mp_density(x, c, 1.0)).abs());
            }
        }
        assert!(worst <= 1e-6, "density error {worst}");
        let cdf = cdf_trapezoid(&sol);
        assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let total = *cdf.last().unwrap();
        assert!((total - 1.0).abs() <= 0.01 + 1.0 / grid.len() as f64, "mass {total}");
    }

    #[test]
    fn grid_point_far_right_has_zero_density() {
        let conc = Concentration::from_ratio(0.25).unwrap();
        let sol = solve_grid(&atom_mix(1.0), &conc, &[0.01, 1.0, 100.0]).unwrap();
        assert_eq!(sol.m[0].im, 0.0);
        assert!(sol.m[1].im > 0.0);
        assert_eq!(sol.m[2].im, 0.0);
    }

    #[test]
    fn trapezoid_of_zero_density_is_zero() {
        let sol = MpGridSolution {
            grid: vec![1.0, 2.0, 3.0],
            m: vec![Complex64::new(-0.5, 0.0); 3],
            c: 0.3,
        };
        assert_eq!(cdf_trapezoid(&sol), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn trapezoid_matches_handwritten_formula() {
        // three points, hand-expanded coefficients with x0 = 0
        let grid = vec![1.0, 2.0, 4.0];
        let f = [0.3, 0.2, 0.1];
        let m: Vec<Complex64> = f
            .iter()
            .map(|&fi| Complex64::new(0.0, fi * std::f64::consts::PI))
            .collect();
        let sol = MpGridSolution { grid, m, c: 0.3 };
        let cdf = cdf_trapezoid(&sol);
        // F(x1) = (x1-x0)/2 f1
        assert_abs_diff_eq!(cdf[0], 0.5 * 0.3, epsilon = 1e-12);
        // F(x2) = (x2-x0)/2 f1 + (x2-x1)/2 f2
        assert_abs_diff_eq!(cdf[1], 1.0 * 0.3 + 0.5 * 0.2, epsilon = 1e-12);
        // F(x3) = (x2-x0)/2 f1 + (x3-x1)/2 f2 + (x3-x2)/2 f3
        assert_abs_diff_eq!(cdf[2], 1.0 * 0.3 + 1.5 * 0.2 + 1.0 * 0.1, epsilon = 1e-12);
    }

    #[test]
    fn eq2_fixed_point_consistency_across_routes() {
        // m from the v-route satisfies the direct MP kernel equation
        let c = 1.0 / 3.0;
        let conc = Concentration::from_ratio(c).unwrap();
        let grid_b = build_grid(0.5, 12.0, 12).unwrap();
        let els = build_basis(&grid_b).unwrap();
        let k = els.len();
        let mix = SpectralMixture::new(els, vec![1.0 / k as f64; k]).unwrap();
        let solver = ForwardSolver::new(&mix, &conc).unwrap();
        let (lo, hi) = solver.support().intervals[0];
        for i in 0..20 {
            let lam = lo + (hi - lo) * (0.03 + 0.94 * i as f64 / 19.0);
            let m = solver.m_breve(lam).unwrap();
            let beta = Complex64::new(1.0 - c, 0.0) - c * lam * m;
            let zeta = lam / beta;
            let mut rhs = Complex64::new(0.0, 0.0);
            for (e, &w) in mix.elements().iter().zip(mix.weights()) {
                rhs += w * e.stieltjes(zeta) / beta;
            }
            assert!(
                (rhs - m).norm() <= 1e-8,
                "fixed-point residual {} at lam {lam}",
                (rhs - m).norm()
            );
        }
    }
}
