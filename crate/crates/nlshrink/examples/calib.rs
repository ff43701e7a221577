//! Temporary calibration probe (not part of the deliverable surface).
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nlshrink::fit::{fit_spectrum, FitOptions};
use nlshrink::linalg::{eigh, sample_covariance};
use nlshrink::mc::{population_eigenvalues, sample_data, DataDistribution, PopulationDesign};
use nlshrink::mp::{Concentration, ForwardSolver};
use nlshrink::basis::SpectralMixture;
use nlshrink::shrink::{interpolate_m, oracle_cov_factors};

fn main() -> nlshrink::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let p: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3 * p);
    let reps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5);
    let ti: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let tm: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2.5);
    let max_iter: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(200);

    let design = PopulationDesign::BaiSilverstein { dispersion: 9.0 };
    let tau = population_eigenvalues(&design, p)?;
    let conc = Concentration::from_dims(p, n)?;
    let c = conc.value();

    // oracle solver from the true three-atom spectrum
    let mix = SpectralMixture::from_atoms(&[1.0, 3.0, 10.0], &[0.2, 0.4, 0.4])?;
    let oracle = ForwardSolver::new(&mix, &conc)?;

    let k = 3 * (p + 1) - 2;
    let opts = FitOptions {
        trust_init: Some(ti / k as f64),
        trust_max: Some(tm / k as f64),
        max_iter,
        ..FitOptions::default()
    };
    let mut ratios = Vec::new();
    let mut iters = Vec::new();
    let mut lp_iters = Vec::new();
    let mut conv1 = 0;
    let t0 = std::time::Instant::now();
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep as u64);
        let data = sample_data(&tau, n, DataDistribution::Normal, &mut rng, None)?;
        let s = sample_covariance(&data);
        let eig = eigh(&s)?;
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let mut o = opts.clone();
        o.seed = rep as u64;
        if std::env::var("NLSHRINK_DUMP_EIGS").is_ok() {
            let text: Vec<String> = lambdas.iter().map(|l| format!("{l}")).collect();
            std::fs::write(format!("/tmp/eigs_{rep}.csv"), text.join("\n")).ok();
            let ds: Vec<String> = (0..p)
                .map(|i| {
                    format!(
                        "{}",
                        eig.eigenvectors
                            .column(i)
                            .iter()
                            .enumerate()
                            .map(|(j, u)| u * u * tau[j])
                            .sum::<f64>()
                    )
                })
                .collect();
            std::fs::write(format!("/tmp/dstar_{rep}.csv"), ds.join("\n")).ok();
        }
        let fit = fit_spectrum(&lambdas, &conc, &o)?;
        if fit.diagnostics.converged && fit.diagnostics.restarts_used == 0 {
            conv1 += 1;
        }
        iters.push(fit.diagnostics.iterations);
        lp_iters.push(fit.diagnostics.lp_iterations);
        // loss ratio vs sample, with d* from quadratic forms
        let d_star: Vec<f64> = (0..p)
            .map(|i| {
                eig.eigenvectors
                    .column(i)
                    .iter()
                    .enumerate()
                    .map(|(j, u)| u * u * tau[j])
                    .sum()
            })
            .collect();
        if std::env::var("NLSHRINK_DUMP_H").is_ok() {
            let mut cdf_pts = String::new();
            for t in [0.5, 0.9, 1.1, 1.5, 2.5, 2.9, 3.1, 3.5, 6.0, 8.0, 9.0, 9.5, 10.5, 11.0, 12.0, 15.0, 20.0] {
                cdf_pts.push_str(&format!("{t},{}\n", fit.mixture.cdf(t)));
            }
            std::fs::write(format!("/tmp/hfit_{rep}.csv"), cdf_pts).ok();
        }
        let m_hat = interpolate_m(&fit.solution.grid, &fit.solution.m, &lambdas);
        let d_hat = oracle_cov_factors(&lambdas, c, &m_hat)?.values;
        let m_or: Vec<_> = lambdas.iter().map(|&l| oracle.m_breve(l)).collect::<nlshrink::Result<_>>()?;
        let d_or = oracle_cov_factors(&lambdas, c, &m_or)?.values;
        let l2 = |d: &[f64]| -> f64 {
            d.iter().zip(&d_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p as f64
        };
        let l_s: f64 = lambdas.iter().zip(&d_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p as f64;
        if std::env::var("NLSHRINK_DUMP_D").is_ok() {
            let rows: Vec<String> = (0..p)
                .map(|i| format!("{},{},{},{}", lambdas[i], d_hat[i], d_or[i], d_star[i]))
                .collect();
            std::fs::write(format!("/tmp/dcomp_{rep}.csv"), rows.join("\n")).ok();
        }
        println!(
            "  rep {rep}: obj={:.5} iters={} conv={} att={} PRIAL={:.2}",
            fit.objective,
            fit.diagnostics.iterations,
            fit.diagnostics.converged,
            fit.diagnostics.restarts_used,
            100.0 * (1.0 - l2(&d_hat) / l_s)
        );
        ratios.push((l2(&d_hat) / l_s, l2(&d_or) / l_s));
    }
    let dt = t0.elapsed().as_secs_f64();
    let mean_nl: f64 = ratios.iter().map(|r| r.0).sum::<f64>() / reps as f64;
    let mean_or: f64 = ratios.iter().map(|r| r.1).sum::<f64>() / reps as f64;
    println!(
        "p={p} n={n} reps={reps} ti={ti} tm={tm}: PRIAL(nl)~{:.2} PRIAL(or)~{:.2} iters={:?} lp_iters_mean={} conv1={conv1}/{reps} {:.2}s/rep",
        100.0 * (1.0 - mean_nl),
        100.0 * (1.0 - mean_or),
        iters,
        lp_iters.iter().sum::<usize>() / reps,
        dt / reps as f64
    );
    Ok(())
}
