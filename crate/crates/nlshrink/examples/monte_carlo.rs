//! Small PRIAL study: how much of the gap between the sample covariance
//! matrix and the finite-sample optimal estimator does each method close?
//!
//! ```bash
//! cargo run --release --example monte_carlo
//! ```

use nlshrink::fit::FitOptions;
use nlshrink::mc::{
    run_study, DataDistribution, EstimatorKind, LossKind, PopulationDesign, PrialReference,
    StudyConfig, StudyTarget,
};

fn main() -> nlshrink::Result<()> {
    let config = StudyConfig {
        design: PopulationDesign::BaiSilverstein { dispersion: 9.0 },
        p: 30,
        n: 90,
        distribution: DataDistribution::Normal,
        replications: 40,
        loss: LossKind::Frobenius,
        target: StudyTarget::Covariance,
        reference: PrialReference::FiniteSampleOptimal,
        seed: 42,
        estimators: vec![
            EstimatorKind::Sample,
            EstimatorKind::Linear,
            EstimatorKind::Nonlinear,
            EstimatorKind::CrossValidation,
            EstimatorKind::Oracle,
            EstimatorKind::FiniteSampleOptimal,
        ],
        rotate: false,
        trace: false,
        fit: FitOptions::default(),
    };
    println!(
        "design: 20%/40%/40% population eigenvalues at 1/3/10, p = {}, n = {}, {} replications",
        config.p, config.n, config.replications
    );
    let report = run_study(&config)?;
    println!(
        "finished in {:.1}s ({} failures)\n",
        report.runtime_seconds, report.failures
    );
    println!("{:<24} {:>12} {:>9} {:>9}", "estimator", "mean loss", "PRIAL", "SE");
    for row in &report.rows {
        println!(
            "{:<24} {:>12.4} {:>8.2}% {:>8.2}",
            row.name, row.mean_loss, row.prial, row.prial_se
        );
    }
    Ok(())
}
