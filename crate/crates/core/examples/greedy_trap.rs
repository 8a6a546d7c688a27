//! Logged comparisons that never show the best action: the greedy policy
//! stays stuck while the pessimistic one does not.
//!
//! cargo run --release --example greedy_trap

use dualpref::sim::gen_greedy_trap;
use dualpref::{
    confidence_radius, fit_mle, greedy_policy, info_matrix, solve_pessimistic, suboptimality, ConfidenceSpec,
    MleOptions, PessimismMode,
};

fn main() -> dualpref::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>10}", "T", "mle_err", "greedy", "pessim");
    for t in [100, 400, 1600, 3200] {
        let trap = gen_greedy_trap(t, 5)?;
        let fit = fit_mle(&trap.records, &MleOptions::new(trap.theta_star.bound_c_theta))?;
        let info = info_matrix(&fit.params.theta, &trap.records, 1e-6)?;
        let gamma = confidence_radius(&ConfidenceSpec::default(), t, 3);
        let greedy = greedy_policy(&trap.problem, &fit.params);
        let pess = solve_pessimistic(&trap.problem, &fit.params, &info, gamma, PessimismMode::Joint)?;
        println!(
            "{t:>6} {:>10.4} {:>10.4} {:>10.4}",
            (&fit.params.theta - &trap.theta_star.theta).norm(),
            suboptimality(&greedy, &trap.problem, &trap.theta_star)?,
            suboptimality(&pess, &trap.problem, &trap.theta_star)?
        );
    }
    Ok(())
}
