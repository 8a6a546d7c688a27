//! Compare two trajectories by the difference of their summed state-action
//! features, then fit a reward from such comparisons.
//!
//! cargo run --example trajectory_reduction

use dualpref::{fit_mle, sample_preference, trajectory_feature_diff, MleOptions, PreferenceRecord, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rollout(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vector> {
    (0..len)
        .map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
        .collect()
}

fn main() -> dualpref::Result<()> {
    let theta_star = Vector::from_column_slice(&[0.6, -0.3]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let a = rollout(&mut rng, 4);
    let b = rollout(&mut rng, 6);
    let z = trajectory_feature_diff(&a, &b, 0, 0)?;
    println!("feature difference of one pair: {:?}", z.z.as_slice());

    let records: Vec<PreferenceRecord> = (0..2000)
        .map(|i| {
            let (la, lb) = (rng.random_range(2..8), rng.random_range(2..8));
            let (a, b) = (rollout(&mut rng, la), rollout(&mut rng, lb));
            let z = trajectory_feature_diff(&a, &b, 0, i).expect("same feature dimension");
            let y = sample_preference(&theta_star, &z, 1.0, &mut rng);
            PreferenceRecord::new(z, 1.0, 0, y)
        })
        .collect();
    let fit = fit_mle(&records, &MleOptions::new(2.0))?;
    println!(
        "estimate {:?}, truth {:?}",
        fit.params.theta.as_slice(),
        theta_star.as_slice()
    );
    Ok(())
}
