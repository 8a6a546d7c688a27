//! Wall time and accuracy of the joint design as the batch size grows.
//!
//! cargo run --release --example batch_speedup

use std::time::Instant;

use dualpref::sim::{gen_sim_env, SimSpec};
use dualpref::{DesignConfig, DesignState, SelectorKind, SelectorPolicy};

fn main() -> dualpref::Result<()> {
    let spec = SimSpec::default();
    println!("{:>5} {:>10} {:>8}", "K", "wall_ms", "error");
    for k in [1, 10, 50, 100] {
        let mut env = gen_sim_env(&spec)?;
        let policy = SelectorPolicy::new(SelectorKind::DualDOptimal, k, 20)?;
        let start = Instant::now();
        let mut state = DesignState::initialize(
            env.pool.clone(),
            env.teachers.clone(),
            &policy,
            DesignConfig::default(),
            &mut env.oracle,
            0,
        )?;
        state.run(&policy, 1000, &mut env.oracle)?;
        println!(
            "{k:>5} {:>10} {:>8.4}",
            start.elapsed().as_millis(),
            (state.estimate() - &env.theta_star.theta).norm()
        );
    }
    Ok(())
}
