//! Sample labels from the rationality-scaled logistic model and compare the
//! empirical agreement rate with the model probability.
//!
//! cargo run --example preference_sampling

use dualpref::{preference_prob, sample_preference, FeatureDiff, RewardParams, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dualpref::Result<()> {
    let theta = RewardParams::new(Vector::from_column_slice(&[1.0, -0.5]), 2.0)?;
    let z = FeatureDiff::new(Vector::from_column_slice(&[0.8, 0.4]), 0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    println!("{:>6} {:>10} {:>10}", "beta", "P(y=1)", "observed");
    for beta in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| sample_preference(&theta.theta, &z, beta, &mut rng))
            .count();
        println!(
            "{beta:>6.1} {:>10.4} {:>10.4}",
            preference_prob(&theta.theta, &z, beta),
            ones as f64 / n as f64
        );
    }
    // beta = 0 is a coin flip; larger beta follows the reward gap more closely.
    Ok(())
}
