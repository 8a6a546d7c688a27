//! Policy extraction from a learned reward: pessimistic (lower confidence
//! bound) and greedy policies over finite per-context action sets, and the
//! sub-optimality gap against a known reward.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mle::InfoMatrix;
use crate::preference::{FeatureDiff, RewardParams};
use crate::{Error, Result, Vector};

/// Joint enumeration is used up to this many deterministic policies.
pub const ENUMERATION_LIMIT: usize = 4096;

const RESTARTS: usize = 8;

/// One context with the features of each candidate action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyContext {
    pub actions: Vec<Vector>,
}

impl PolicyContext {
    pub fn new(actions: Vec<Vector>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::invalid("a context needs at least one action"));
        }
        Ok(Self { actions })
    }
}

/// Contexts and their weights in the empirical mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProblem {
    pub contexts: Vec<PolicyContext>,
    pub weights: Vec<f64>,
}

impl PolicyProblem {
    /// Uniformly weighted problem.
    pub fn uniform(contexts: Vec<PolicyContext>) -> Result<Self> {
        let n = contexts.len();
        Self::weighted(contexts, vec![1.0 / n as f64; n])
    }

    pub fn weighted(contexts: Vec<PolicyContext>, weights: Vec<f64>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::NoData);
        }
        if weights.len() != contexts.len() {
            return Err(Error::DimensionMismatch {
                expected: contexts.len(),
                actual: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid(format!(
                "context weights must be a probability vector (sum = {total})"
            )));
        }
        let d = contexts[0].actions[0].len();
        for c in &contexts {
            if c.actions.is_empty() {
                return Err(Error::invalid("a context needs at least one action"));
            }
            if let Some(a) = c.actions.iter().find(|a| a.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: a.len(),
                });
            }
        }
        Ok(Self { contexts, weights })
    }

    pub fn dim(&self) -> usize {
        self.contexts[0].actions[0].len()
    }

    fn check_assignment(&self, pi: &PolicyAssignment) -> Result<()> {
        if pi.chosen.len() != self.contexts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.contexts.len(),
                actual: pi.chosen.len(),
            });
        }
        for (c, a) in self.contexts.iter().zip(&pi.chosen) {
            if *a >= c.actions.len() {
                return Err(Error::invalid(format!(
                    "action {a} out of range for a context with {} actions",
                    c.actions.len()
                )));
            }
        }
        Ok(())
    }

    /// Weighted mean feature `Σ w_i φ(x_i, π(x_i))`.
    pub fn mean_feature(&self, pi: &PolicyAssignment) -> Result<Vector> {
        self.check_assignment(pi)?;
        let mut v = Vector::zeros(self.dim());
        for ((c, a), w) in self.contexts.iter().zip(&pi.chosen).zip(&self.weights) {
            v.axpy(*w, &c.actions[*a], 1.0);
        }
        Ok(v)
    }

    /// Expected reward `Σ w_i θᵀφ(x_i, π(x_i))`.
    pub fn value(&self, pi: &PolicyAssignment, theta: &Vector) -> Result<f64> {
        Ok(theta.dot(&self.mean_feature(pi)?))
    }

    fn num_policies(&self) -> Option<usize> {
        self.contexts
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(c.actions.len()))
    }
}

/// Action index chosen in each context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyAssignment {
    pub chosen: Vec<usize>,
}

impl PolicyAssignment {
    pub fn new(chosen: Vec<usize>) -> Self {
        Self { chosen }
    }
}

/// How the pessimistic objective is optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PessimismMode {
    /// Maximize the coupled objective over whole policies.
    Joint,
    /// Maximize the per-context lower confidence bound independently.
    PerContext,
    /// Ignore the penalty entirely (plug-in argmax).
    Greedy,
}

impl fmt::Display for PessimismMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PessimismMode::Joint => "joint",
            PessimismMode::PerContext => "per_context",
            PessimismMode::Greedy => "greedy",
        })
    }
}

impl FromStr for PessimismMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "joint" => Ok(PessimismMode::Joint),
            "per_context" | "percontext" => Ok(PessimismMode::PerContext),
            "greedy" => Ok(PessimismMode::Greedy),
            other => Err(Error::Config(format!("unknown pessimism mode `{other}`"))),
        }
    }
}

/// Lower confidence bound `θ̂ᵀv − γ ‖v‖_{H̄⁻¹}` of a policy's value, with `v`
/// the weighted mean feature and `H̄ = H / T`.
pub fn pessimistic_value(
    pi: &PolicyAssignment,
    prob: &PolicyProblem,
    theta_hat: &RewardParams,
    info: &InfoMatrix,
    gamma: f64,
) -> Result<f64> {
    let v = prob.mean_feature(pi)?;
    lcb(&v, &theta_hat.theta, info, gamma)
}

fn lcb(v: &Vector, theta: &Vector, info: &InfoMatrix, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma must be nonnegative"));
    }
    let plug_in = theta.dot(v);
    if gamma == 0.0 {
        return Ok(plug_in);
    }
    Ok(plug_in - gamma * info.normalized_quad_form_inv(v)?.sqrt())
}

/// Per-context argmax of `θ̂ᵀφ`; ties go to the lowest index.
pub fn greedy_policy(prob: &PolicyProblem, theta_hat: &RewardParams) -> PolicyAssignment {
    argmax_each(prob, |phi| theta_hat.theta.dot(phi))
}

fn argmax_each(prob: &PolicyProblem, score: impl Fn(&Vector) -> f64) -> PolicyAssignment {
    let chosen = prob
        .contexts
        .iter()
        .map(|c| {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, phi) in c.actions.iter().enumerate() {
                let s = score(phi);
                if s > best.1 {
                    best = (i, s);
                }
            }
            best.0
        })
        .collect();
    PolicyAssignment { chosen }
}

/// Maximizes the pessimistic value over deterministic policies.
pub fn solve_pessimistic(
    prob: &PolicyProblem,
    theta_hat: &RewardParams,
    info: &InfoMatrix,
    gamma: f64,
    mode: PessimismMode,
) -> Result<PolicyAssignment> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma must be nonnegative"));
    }
    if gamma == 0.0 || mode == PessimismMode::Greedy {
        return Ok(greedy_policy(prob, theta_hat));
    }
    match mode {
        PessimismMode::PerContext => {
            // Surface singular information before scoring.
            info.normalized_quad_form_inv(&Vector::zeros(prob.dim()))?;
            Ok(argmax_each(prob, |phi| {
                lcb(phi, &theta_hat.theta, info, gamma).unwrap_or(f64::NEG_INFINITY)
            }))
        }
        PessimismMode::Joint => match prob.num_policies() {
            Some(n) if n <= ENUMERATION_LIMIT => enumerate(prob, theta_hat, info, gamma),
            _ => coordinate_ascent(prob, theta_hat, info, gamma),
        },
        PessimismMode::Greedy => unreachable!(),
    }
}

fn enumerate(
    prob: &PolicyProblem,
    theta_hat: &RewardParams,
    info: &InfoMatrix,
    gamma: f64,
) -> Result<PolicyAssignment> {
    let sizes: Vec<usize> = prob.contexts.iter().map(|c| c.actions.len()).collect();
    let mut current = vec![0usize; sizes.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let pi = PolicyAssignment::new(current.clone());
        let value = pessimistic_value(&pi, prob, theta_hat, info, gamma)?;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, current.clone()));
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return Ok(PolicyAssignment::new(best.expect("at least one policy").1));
            }
            current[i] += 1;
            if current[i] < sizes[i] {
                break;
            }
            current[i] = 0;
            i += 1;
        }
    }
}

fn coordinate_ascent(
    prob: &PolicyProblem,
    theta_hat: &RewardParams,
    info: &InfoMatrix,
    gamma: f64,
) -> Result<PolicyAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..RESTARTS {
        let mut chosen = if restart == 0 {
            solve_pessimistic(prob, theta_hat, info, gamma, PessimismMode::PerContext)?.chosen
        } else {
            prob.contexts
                .iter()
                .map(|c| rng.random_range(0..c.actions.len()))
                .collect()
        };
        let mut v = prob.mean_feature(&PolicyAssignment::new(chosen.clone()))?;
        let mut value = lcb(&v, &theta_hat.theta, info, gamma)?;
        loop {
            let mut improved = false;
            for (i, c) in prob.contexts.iter().enumerate() {
                let w = prob.weights[i];
                let cur = chosen[i];
                for a in 0..c.actions.len() {
                    if a == cur {
                        continue;
                    }
                    let cand = &v + (&c.actions[a] - &c.actions[chosen[i]]) * w;
                    let cand_value = lcb(&cand, &theta_hat.theta, info, gamma)?;
                    if cand_value > value + 1e-15 * value.abs() {
                        v = cand;
                        value = cand_value;
                        chosen[i] = a;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, chosen));
        }
    }
    Ok(PolicyAssignment::new(best.expect("at least one restart").1))
}

/// `J(π*) − J(π)` under the true parameter, with `π*` the per-context argmax.
pub fn suboptimality(pi: &PolicyAssignment, prob: &PolicyProblem, theta_star: &RewardParams) -> Result<f64> {
    let best = greedy_policy(prob, theta_star);
    let gap = prob.value(&best, &theta_star.theta)? - prob.value(pi, &theta_star.theta)?;
    Ok(gap)
}

/// Reduces a pair of trajectories to a single comparison by summing per-step
/// features: `Σ φ(s¹, a¹) − Σ φ(s⁰, a⁰)`.
pub fn trajectory_feature_diff(
    traj0: &[Vector],
    traj1: &[Vector],
    category: usize,
    source_id: usize,
) -> Result<FeatureDiff> {
    let first = traj0
        .first()
        .or(traj1.first())
        .ok_or_else(|| Error::invalid("trajectories must be nonempty"))?;
    if traj0.is_empty() || traj1.is_empty() {
        return Err(Error::invalid("trajectories must be nonempty"));
    }
    let d = first.len();
    let mut z = Vector::zeros(d);
    for (sign, traj) in [(-1.0, traj0), (1.0, traj1)] {
        for phi in traj {
            if phi.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: phi.len(),
                });
            }
            z.axpy(sign, phi, 1.0);
        }
    }
    Ok(FeatureDiff::new(z, category, source_id))
}
