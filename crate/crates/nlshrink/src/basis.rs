//! Basis of candidate population spectral c.d.f.'s and their closed-form
//! transforms.
//!
//! A candidate population spectrum is a probability measure written as a
//! nonnegative mixture over a fixed basis: point masses (atoms) at grid
//! points plus c.d.f.'s whose densities increase or decrease linearly over
//! each grid interval. Every transform needed downstream has an analytic
//! form, so the optimization loop never integrates numerically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One basis c.d.f.: an atom or a linear-ramp density on an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisElement {
    /// Point mass at `at` (> 0).
    Atom { at: f64 },
    /// Density rising linearly from 0 at `lo` to `2/(hi-lo)` at `hi`.
    RampUp { lo: f64, hi: f64 },
    /// Density falling linearly from `2/(hi-lo)` at `lo` to 0 at `hi`.
    RampDown { lo: f64, hi: f64 },
}

impl BasisElement {
    pub fn atom(at: f64) -> Result<Self> {
        if !(at > 0.0) || !at.is_finite() {
            return Err(Error::InvalidInput(format!("atom location {at} must be > 0")));
        }
        Ok(Self::Atom { at })
    }

    pub fn ramp_up(lo: f64, hi: f64) -> Result<Self> {
        Self::check_interval(lo, hi)?;
        Ok(Self::RampUp { lo, hi })
    }

    pub fn ramp_down(lo: f64, hi: f64) -> Result<Self> {
        Self::check_interval(lo, hi)?;
        Ok(Self::RampDown { lo, hi })
    }

    fn check_interval(lo: f64, hi: f64) -> Result<()> {
        if !(lo > 0.0 && hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ramp interval [{lo}, {hi}] must satisfy 0 < lo < hi"
            )));
        }
        Ok(())
    }

    /// Closed support as an interval (degenerate for atoms).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Atom { at } => (at, at),
            Self::RampUp { lo, hi } | Self::RampDown { lo, hi } => (lo, hi),
        }
    }

    /// Mean of the element's distribution.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Atom { at } => at,
            Self::RampUp { lo, hi } => lo + 2.0 * (hi - lo) / 3.0,
            Self::RampDown { lo, hi } => lo + (hi - lo) / 3.0,
        }
    }

    /// C.d.f. of the element at `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Self::Atom { at } => {
                if t >= at {
                    1.0
                } else {
                    0.0
                }
            }
            Self::RampUp { lo, hi } => {
                let s = ((t - lo) / (hi - lo)).clamp(0.0, 1.0);
                s * s
            }
            Self::RampDown { lo, hi } => {
                let s = ((hi - t) / (hi - lo)).clamp(0.0, 1.0);
                1.0 - s * s
            }
        }
    }

    /// Stieltjes transform `m(z) = ∫ dG(t) / (t - z)`.
    ///
    /// The ramp forms use the principal-branch logarithm of
    /// `(hi - z) / (lo - z)`; for `z` in the upper half-plane both factors
    /// have negative imaginary part, so the ratio never crosses the branch
    /// cut and the expression is continuous there. Real `z` must lie off the
    /// element's support.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        match *self {
            Self::Atom { at } => 1.0 / (at - z),
            Self::RampUp { lo, hi } => {
                let alpha = 2.0 / ((hi - lo) * (hi - lo));
                let l = ((hi - z) / (lo - z)).ln();
                alpha * ((hi - lo) + (z - lo) * l)
            }
            Self::RampDown { lo, hi } => {
                let alpha = 2.0 / ((hi - lo) * (hi - lo));
                let l = ((hi - z) / (lo - z)).ln();
                alpha * ((hi - z) * l - (hi - lo))
            }
        }
    }

    /// Derivative of [`Self::stieltjes`] in `z`.
    pub fn stieltjes_prime(&self, z: Complex64) -> Complex64 {
        match *self {
            Self::Atom { at } => {
                let d = at - z;
                1.0 / (d * d)
            }
            Self::RampUp { lo, hi } => {
                let alpha = 2.0 / ((hi - lo) * (hi - lo));
                let l = ((hi - z) / (lo - z)).ln();
                alpha * (l - 1.0 - (z - lo) / (hi - z))
            }
            Self::RampDown { lo, hi } => {
                let alpha = 2.0 / ((hi - lo) * (hi - lo));
                let l = ((hi - z) / (lo - z)).ln();
                alpha * (-l + (hi - z) / (lo - z) - 1.0)
            }
        }
    }

    /// `m_LG(z) = ∫ t dG(t) / (t - z) = 1 + z·m_G(z)`.
    pub fn mlg(&self, z: Complex64) -> Result<Complex64> {
        self.reject_on_support(z)?;
        Ok(1.0 + z * self.stieltjes(z))
    }

    /// Derivative of [`Self::mlg`] in `z`.
    pub fn mlg_prime(&self, z: Complex64) -> Result<Complex64> {
        self.reject_on_support(z)?;
        Ok(self.stieltjes(z) + z * self.stieltjes_prime(z))
    }

    fn reject_on_support(&self, z: Complex64) -> Result<()> {
        if z.im == 0.0 {
            let (lo, hi) = self.support();
            if z.re >= lo && z.re <= hi {
                return Err(Error::OnSupport(z.re));
            }
        }
        Ok(())
    }
}

/// A probability measure as nonnegative weights over a list of basis
/// elements. Weights sum to one.
#[derive(Debug, Clone)]
pub struct SpectralMixture {
    elements: Vec<BasisElement>,
    weights: Vec<f64>,
}

impl SpectralMixture {
    pub fn new(elements: Vec<BasisElement>, weights: Vec<f64>) -> Result<Self> {
        if elements.len() != weights.len() {
            return Err(Error::DimensionMismatch(elements.len(), weights.len()));
        }
        if elements.is_empty() {
            return Err(Error::InvalidInput("empty mixture".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { elements, weights })
    }

    /// Point masses at `locations` with the given `weights`.
    pub fn from_atoms(locations: &[f64], weights: &[f64]) -> Result<Self> {
        let elements = locations
            .iter()
            .map(|&t| BasisElement::atom(t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements, weights.to_vec())
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Replaces the weights, revalidating the simplex constraints.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.elements.clone(), weights)
    }

    pub fn mean(&self) -> f64 {
        self.elements
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w * e.mean())
            .sum()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.elements
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w * e.cdf(t))
            .sum()
    }

    /// `m_LH(z)`: weighted sum of the elements' `m_LG`. Elements with zero
    /// weight are skipped so that real `z` off the weighted support is fine.
    pub fn mlh(&self, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, &w) in self.elements.iter().zip(&self.weights) {
            if w <= WEIGHT_FLOOR {
                continue;
            }
            acc += w * e.mlg(z)?;
        }
        Ok(acc)
    }

    /// Derivative of [`Self::mlh`] in `z`.
    pub fn mlh_prime(&self, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, &w) in self.elements.iter().zip(&self.weights) {
            if w <= WEIGHT_FLOOR {
                continue;
            }
            acc += w * e.mlg_prime(z)?;
        }
        Ok(acc)
    }

    /// Union of closed intervals carrying more than `WEIGHT_FLOOR` mass.
    pub fn support_intervals(&self) -> Vec<(f64, f64)> {
        let mut ivs: Vec<(f64, f64)> = self
            .elements
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > WEIGHT_FLOOR)
            .map(|(e, _)| e.support())
            .collect();
        ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in ivs {
            match merged.last_mut() {
                Some(last) if lo <= last.1 + 1e-14 * last.1.abs().max(1.0) => {
                    last.1 = last.1.max(hi);
                }
                _ => merged.push((lo, hi)),
            }
        }
        merged
    }
}

/// Weights at or below this floor are treated as exact zeros when deciding
/// where the mixture's transforms are singular.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// The grid underlying the standard basis: `x_i = lo + (i-1)/p · (hi - lo)`
/// for `i = 1..p`, with `hi` appended. The printed increment `(hi-lo)/p`
/// never reaches `hi` on its own, so appending the endpoint keeps the grid
/// equally spaced while making it span `[lo, hi]` inclusively; the result
/// has `p + 1` points.
pub fn build_grid(lambda_min: f64, lambda_max: f64, p: usize) -> Result<Vec<f64>> {
    if !(lambda_min > 0.0) || !lambda_min.is_finite() {
        return Err(Error::InvalidInput(format!(
            "grid lower endpoint {lambda_min} must be positive"
        )));
    }
    if !(lambda_max > lambda_min) {
        return Err(Error::InvalidInput(format!(
            "degenerate grid interval [{lambda_min}, {lambda_max}]"
        )));
    }
    if p < 2 {
        return Err(Error::InvalidInput("grid needs p >= 2".into()));
    }
    let mut xs: Vec<f64> = (0..p)
        .map(|i| lambda_min + (i as f64 / p as f64) * (lambda_max - lambda_min))
        .collect();
    if *xs.last().unwrap() < lambda_max {
        xs.push(lambda_max);
    }
    Ok(xs)
}

/// The standard basis over an ascending positive grid of `g` points:
/// `g` atoms, `g - 1` rising ramps and `g - 1` falling ramps, `3g - 2`
/// elements in total.
pub fn build_basis(grid: &[f64]) -> Result<Vec<BasisElement>> {
    if grid.len() < 2 {
        return Err(Error::InvalidInput("basis grid needs at least 2 points".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("basis grid must be strictly ascending".into()));
    }
    let mut elements = Vec::with_capacity(3 * grid.len() - 2);
    for &x in grid {
        elements.push(BasisElement::atom(x)?);
    }
    for w in grid.windows(2) {
        elements.push(BasisElement::ramp_up(w[0], w[1])?);
    }
    for w in grid.windows(2) {
        elements.push(BasisElement::ramp_down(w[0], w[1])?);
    }
    Ok(elements)
}
