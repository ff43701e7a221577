//! Temporary: small-replication preview of the acceptance-study arms.
use nlshrink::fit::FitOptions;
use nlshrink::mc::{
    run_study, DataDistribution, EstimatorKind, LossKind, PopulationDesign, PrialReference,
    StudyConfig, StudyTarget,
};

fn base(p: usize, n: usize, d: f64, reps: usize) -> StudyConfig {
    StudyConfig {
        design: PopulationDesign::BaiSilverstein { dispersion: d },
        p,
        n,
        distribution: DataDistribution::Normal,
        replications: reps,
        loss: LossKind::Frobenius,
        target: StudyTarget::Covariance,
        reference: PrialReference::FiniteSampleOptimal,
        seed: 20260809,
        estimators: vec![
            EstimatorKind::Sample,
            EstimatorKind::Linear,
            EstimatorKind::Nonlinear,
            EstimatorKind::Oracle,
        ],
        rotate: false,
        trace: false,
        fit: FitOptions::default(),
    }
}

fn show(tag: &str, c: &StudyConfig) {
    match run_study(c) {
        Ok(r) => {
            print!("{tag}: ");
            for row in &r.rows {
                print!("{}={:.2}±{:.2} ", row.name, row.prial, row.prial_se);
            }
            println!(
                "conv {}/{} ({:.1}s)",
                r.fit_stats.first_try, r.fit_stats.total, r.runtime_seconds
            );
        }
        Err(e) => println!("{tag}: ERROR {e}"),
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "d0" => show("d=0 p=100", &base(100, 300, 0.0, 10)),
        "t3" => {
            let mut c = base(100, 300, 9.0, 10);
            c.distribution = DataDistribution::StudentT { df: 3.0 };
            show("t3 p=100", &c);
        }
        "prec" => {
            let mut c = base(100, 300, 9.0, 10);
            c.target = StudyTarget::Precision;
            c.estimators = vec![
                EstimatorKind::Sample,
                EstimatorKind::Linear,
                EstimatorKind::NonlinearInverted,
                EstimatorKind::Nonlinear,
                EstimatorKind::FiniteSampleOptimal,
            ];
            show("precision p=100", &c);
        }
        "fixdim" => {
            let mut c = base(100, 10_000, 9.0, 4);
            c.reference = PrialReference::TrueSigma;
            show("fixed-dim n=10000", &c);
        }
        _ => {
            show("d=9 p=30", &base(30, 90, 9.0, 10));
        }
    }
}
