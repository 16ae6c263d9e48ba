//! Label recovery under Gaussian / Laplace gradient noise (PSO only).
//!
//! cargo run --release --example dp_noise_sweep

use softlabel::experiment::{generate, sweep, ExperimentConfig};
use softlabel::robustness::NoiseFamily;

pub fn run_example() -> softlabel::Result<()> {
    let mut config = ExperimentConfig {
        instances: 12,
        seed: 17,
        ..ExperimentConfig::default()
    };
    config.victim.dims = vec![128, 10];
    config.victim.input_scale = 2.0;
    config.noise.families = vec![NoiseFamily::Gaussian, NoiseFamily::Laplace];
    config.noise.scales = vec![1e-4, 1e-3, 1e-1];
    // a smaller swarm keeps the example quick
    config.recovery.pop = 60;
    config.recovery.max_iter = 20;

    let generated = generate(&config)?;
    let report = sweep(&generated, &config)?;
    print!("{}", report.to_csv());
    let small = report.point(NoiseFamily::Gaussian, 1e-4).unwrap();
    let large = report.point(NoiseFamily::Gaussian, 1e-1).unwrap();
    assert!(small.accuracy > large.accuracy);
    assert!(small.mean_ls < large.mean_ls);
    Ok(())
}

#[allow(dead_code)]
fn main() -> softlabel::Result<()> {
    run_example()
}
