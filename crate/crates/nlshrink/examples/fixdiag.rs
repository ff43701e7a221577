use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use nlshrink::fit::{fit_spectrum, FitOptions};
use nlshrink::linalg::{eigh, sample_covariance};
use nlshrink::mc::{population_eigenvalues, sample_data, DataDistribution, PopulationDesign};
use nlshrink::mp::Concentration;

fn main() {
    let (p, n) = (100usize, 10_000usize);
    let tau = population_eigenvalues(&PopulationDesign::BaiSilverstein { dispersion: 9.0 }, p).unwrap();
    let conc = Concentration::from_dims(p, n).unwrap();
    for rep in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20260809);
        rng.set_stream(rep + 1);
        let data = sample_data(&tau, n, DataDistribution::Normal, &mut rng, None).unwrap();
        let eig = eigh(&sample_covariance(&data)).unwrap();
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let mut opts = FitOptions::default();
        opts.seed = 20260809 ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(rep + 1));
        match fit_spectrum(&lambdas, &conc, &opts) {
            Ok(fit) => {
                println!("rep {rep}: ok obj={:.5} iters={} conv={} att={}",
                    fit.objective, fit.diagnostics.iterations,
                    fit.diagnostics.converged, fit.diagnostics.restarts_used);
                let w = |c0: f64, h: f64| fit.mixture.cdf(c0 + h) - fit.mixture.cdf(c0 - h);
                println!("   mass windows ±0.2: {:.3} {:.3} {:.3}", w(1.0,0.2), w(3.0,0.2), w(10.0,0.2));
            }
            Err(e) => println!("rep {rep}: ERROR {e}"),
        }
    }
}
