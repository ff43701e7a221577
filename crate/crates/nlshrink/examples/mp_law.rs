//! Forward Marčenko–Pastur solve for a single population atom, checked
//! against the closed-form density.
//!
//! ```bash
//! cargo run --release --example mp_law
//! ```

use nlshrink::basis::SpectralMixture;
use nlshrink::mp::{cdf_trapezoid, solve_grid, support, Concentration};

fn closed_form_density(lam: f64, c: f64) -> f64 {
    let a = (1.0 - c.sqrt()).powi(2);
    let b = (1.0 + c.sqrt()).powi(2);
    if lam <= a || lam >= b {
        return 0.0;
    }
    ((b - lam) * (lam - a)).sqrt() / (2.0 * std::f64::consts::PI * c * lam)
}

fn main() -> nlshrink::Result<()> {
    let c = 0.25;
    let conc = Concentration::from_ratio(c)?;
    let mix = SpectralMixture::from_atoms(&[1.0], &[1.0])?;

    let sup = support(&mix, &conc)?;
    println!(
        "support for H = δ_1, c = {c}: computed {:?}, closed form ({:.4}, {:.4})",
        sup.intervals,
        (1.0 - c.sqrt()).powi(2),
        (1.0 + c.sqrt()).powi(2)
    );

    let (lo, hi) = sup.intervals[0];
    let grid: Vec<f64> = (0..400)
        .map(|i| (lo - 0.05) + (hi - lo + 0.1) * i as f64 / 399.0)
        .collect();
    let sol = solve_grid(&mix, &conc, &grid)?;
    let density = sol.density();
    let mut worst = 0.0_f64;
    for (x, d) in grid.iter().zip(&density) {
        worst = worst.max((d - closed_form_density(*x, c)).abs());
    }
    println!("sup |computed - closed form| over 400 points: {worst:.2e}");

    let cdf = cdf_trapezoid(&sol);
    println!("trapezoidal total mass: {:.6}", cdf.last().unwrap());

    println!("\n   λ        density   cdf");
    for i in (0..grid.len()).step_by(50) {
        println!("  {:6.3}   {:8.5}  {:7.4}", grid[i], density[i], cdf[i]);
    }
    Ok(())
}
