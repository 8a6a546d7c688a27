//! Extract greedy and pessimistic policies from a fitted reward and compare
//! their sub-optimality on held-out contexts.
//!
//! cargo run --release --example pessimistic_policy

use dualpref::mle::ConfidenceSpec;
use dualpref::sim::{gen_sim_env, SimSpec};
use dualpref::{
    confidence_radius, greedy_policy, solve_pessimistic, suboptimality, DesignConfig, DesignState, PessimismMode,
    SelectorKind, SelectorPolicy,
};

fn main() -> dualpref::Result<()> {
    let spec = SimSpec {
        n_eval: 500,
        ..SimSpec::default()
    };
    let mut env = gen_sim_env(&spec)?;
    let policy = SelectorPolicy::new(SelectorKind::DualDOptimal, 50, 20)?;
    let t = 1000;
    let mut state = DesignState::initialize(
        env.pool.clone(),
        env.teachers.clone(),
        &policy,
        DesignConfig::default(),
        &mut env.oracle,
        0,
    )?;
    state.run(&policy, t, &mut env.oracle)?;

    let gamma = confidence_radius(&ConfidenceSpec::default(), t, spec.d);
    println!("gamma = {gamma:.4}");
    let greedy = greedy_policy(&env.problem, state.theta_hat());
    println!(
        "greedy       subopt {:.6}",
        suboptimality(&greedy, &env.problem, &env.theta_star)?
    );
    for mode in [PessimismMode::PerContext, PessimismMode::Joint, PessimismMode::Greedy] {
        let pi = solve_pessimistic(&env.problem, state.theta_hat(), state.info(), gamma, mode)?;
        println!(
            "{:<12} subopt {:.6}",
            format!("{mode:?}"),
            suboptimality(&pi, &env.problem, &env.theta_star)?
        );
    }
    Ok(())
}
