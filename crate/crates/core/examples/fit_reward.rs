//! Fit the constrained MLE from labelled comparisons and watch the error
//! shrink with the sample size.
//!
//! cargo run --example fit_reward

use dualpref::{fit_mle, info_matrix, sample_preference, FeatureDiff, MleOptions, PreferenceRecord, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dualpref::Result<()> {
    let theta_star = Vector::from_column_slice(&[0.9, -0.4, 0.3]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut records = Vec::new();

    println!("{:>6} {:>10} {:>6} {:>12}", "n", "error", "iters", "logdet(H)");
    for n in [50, 200, 800, 3200] {
        while records.len() < n {
            let z = FeatureDiff::new(Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)), 0, records.len());
            let beta = rng.random_range(0.5..2.0);
            let y = sample_preference(&theta_star, &z, beta, &mut rng);
            records.push(PreferenceRecord::new(z, beta, 0, y));
        }
        let fit = fit_mle(&records, &MleOptions::new(2.0))?;
        let info = info_matrix(&fit.params.theta, &records, 1e-6)?;
        println!(
            "{n:>6} {:>10.4} {:>6} {:>12.3}",
            (&fit.params.theta - &theta_star).norm(),
            fit.iterations,
            info.log_det()
        );
    }
    Ok(())
}
