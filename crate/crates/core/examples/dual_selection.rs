//! Run the joint conversation/teacher design against the baselines on a small
//! simulated pool and compare estimation error and log-determinant.
//!
//! cargo run --release --example dual_selection

use dualpref::sim::{gen_sim_env, SimSpec};
use dualpref::{DesignConfig, DesignState, SelectorKind, SelectorPolicy};

fn main() -> dualpref::Result<()> {
    let spec = SimSpec {
        n: 2000,
        n_eval: 200,
        seed: 11,
        ..SimSpec::default()
    };
    let budget = 400;

    println!("{:<18} {:>8} {:>10}", "method", "error", "logdet(H)");
    for kind in SelectorKind::ALL {
        let mut env = gen_sim_env(&spec)?;
        let policy = SelectorPolicy::new(kind, 10, 20)?;
        let mut state = DesignState::initialize(
            env.pool.clone(),
            env.teachers.clone(),
            &policy,
            DesignConfig::default(),
            &mut env.oracle,
            spec.seed,
        )?;
        state.run(&policy, budget, &mut env.oracle)?;
        println!(
            "{:<18} {:>8.4} {:>10.3}",
            kind.as_str(),
            (state.estimate() - &env.theta_star.theta).norm(),
            state.info().log_det()
        );
    }

    // The trace records every query with the teacher that answered it.
    let mut env = gen_sim_env(&spec)?;
    let policy = SelectorPolicy::new(SelectorKind::DualDOptimal, 10, 20)?;
    let mut state = DesignState::initialize(
        env.pool.clone(),
        env.teachers.clone(),
        &policy,
        DesignConfig::default(),
        &mut env.oracle,
        spec.seed,
    )?;
    state.run(&policy, 40, &mut env.oracle)?;
    println!("\nfirst selected queries:");
    for r in state.trace().iter().take(5) {
        println!(
            "  step {:>3} pair {:>5} teacher {:>2} beta {:.3} gain {:.4}",
            r.step, r.candidate_id, r.teacher_id, r.beta, r.gain
        );
    }
    Ok(())
}
