use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use nlshrink::fit::{fit_spectrum, FitOptions};
use nlshrink::linalg::{eigh, sample_covariance};
use nlshrink::mc::{population_eigenvalues, sample_data, DataDistribution, PopulationDesign};
use nlshrink::mp::Concentration;

fn main() {
    let (p, n) = (100, 300);
    let tau = population_eigenvalues(&PopulationDesign::BaiSilverstein { dispersion: 9.0 }, p).unwrap();
    let conc = Concentration::from_dims(p, n).unwrap();
    let mut masses = Vec::new();
    for seed in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = sample_data(&tau, n, DataDistribution::Normal, &mut rng, None).unwrap();
        let eig = eigh(&sample_covariance(&data)).unwrap();
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let fit = fit_spectrum(&lambdas, &conc, &FitOptions::default()).unwrap();
        let w = |c: f64| fit.mixture.cdf(c + 0.5) - fit.mixture.cdf(c - 0.5);
        let total = w(1.0) + w(3.0) + w(10.0);
        masses.push(total);
        println!("seed {seed}: windows total {total:.3}");
    }
    let mean: f64 = masses.iter().sum::<f64>() / masses.len() as f64;
    println!("mean {mean:.3} min {:.3}", masses.iter().cloned().fold(f64::INFINITY, f64::min));
}
