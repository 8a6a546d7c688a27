//! Synthetic environments.
//!
//! [`gen_sim_env`] builds the contextual-bandit benchmark: contexts
//! `x = (x₁, …, x_d)` with `x₁ ~ U(1, 2)` and the rest `U(-½, ½)`, features
//! `φ(x, a) = (x₁a², x₂a, …, x_d a)`, and true parameter
//! `θ* = (-½, ½, …, ½)`. Each conversation compares the optimal action
//! `a*(x)` against `‖x‖₂ / 3`.
//!
//! [`gen_greedy_trap`] builds the four-action scenario in which the data never
//! contain the optimal action, so the plug-in greedy policy stalls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::policy::{PolicyContext, PolicyProblem};
use crate::preference::{sample_preference, FeatureDiff, PreferenceRecord, RewardParams, TeacherPool};
use crate::selector::LabelOracle;
use crate::{Error, Matrix, Result, Vector};

// RNG streams derived from one seed.
const STREAM_POOL: u64 = 1;
const STREAM_CATEGORY: u64 = 2;
const STREAM_TEACHERS: u64 = 3;
const STREAM_ORACLE: u64 = 4;
const STREAM_EVAL: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Parameters of the contextual-bandit benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    /// Candidate conversations.
    pub n: usize,
    /// Held-out contexts used to evaluate policies.
    pub n_eval: usize,
    pub d: usize,
    pub g: usize,
    pub m: usize,
    pub beta_low: f64,
    pub beta_high: f64,
    pub c_beta: f64,
    pub c_theta: f64,
    pub theta_star: Vector,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self::with_dim(5)
    }
}

impl SimSpec {
    /// Default benchmark in dimension `d`.
    pub fn with_dim(d: usize) -> Self {
        Self {
            n: 10_000,
            n_eval: 2_000,
            d,
            g: 5,
            m: 20,
            beta_low: 0.0,
            beta_high: 2.0,
            c_beta: 3.0,
            c_theta: 2.0,
            theta_star: default_theta_star(d),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_eval == 0 {
            return Err(Error::invalid("n and n_eval must be at least 1"));
        }
        if self.d < 2 {
            return Err(Error::invalid("the benchmark feature map needs d >= 2"));
        }
        if self.g == 0 || self.m == 0 {
            return Err(Error::invalid("g and m must be at least 1"));
        }
        if !(self.beta_low >= 0.0 && self.beta_low < self.beta_high && self.beta_high <= self.c_beta) {
            return Err(Error::invalid(format!(
                "rationality range ({}, {}) must satisfy 0 <= low < high <= c_beta = {}",
                self.beta_low, self.beta_high, self.c_beta
            )));
        }
        if self.theta_star.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: self.theta_star.len(),
            });
        }
        if !(self.theta_star[0] < 0.0) {
            return Err(Error::invalid(
                "theta_star[0] must be negative so rewards are concave in a",
            ));
        }
        Ok(())
    }
}

/// `(-½, ½, …, ½)`.
pub fn default_theta_star(d: usize) -> Vector {
    Vector::from_fn(d, |i, _| if i == 0 { -0.5 } else { 0.5 })
}

/// `φ(x, a) = (x₁a², x₂a, …, x_d a)`.
pub fn features(x: &Vector, a: f64) -> Vector {
    Vector::from_fn(x.len(), |i, _| if i == 0 { x[0] * a * a } else { x[i] * a })
}

/// Closed-form maximizer of `θᵀφ(x, a)` over `a` (requires `θ₁x₁ < 0`).
pub fn optimal_action(x: &Vector, theta: &Vector) -> f64 {
    let linear: f64 = (1..x.len()).map(|i| theta[i] * x[i]).sum();
    -linear / (2.0 * theta[0] * x[0])
}

/// Comparison action `‖x‖₂ / 3`.
pub fn alternative_action(x: &Vector) -> f64 {
    x.norm() / 3.0
}

fn sample_context<R: Rng>(rng: &mut R, d: usize) -> Vector {
    Vector::from_fn(d, |i, _| {
        if i == 0 {
            rng.random_range(1.0..2.0)
        } else {
            rng.random_range(-0.5..0.5)
        }
    })
}

/// `m x g` rationalities drawn i.i.d. from `U(low, high)`.
pub fn gen_teacher_pool(m: usize, g: usize, low: f64, high: f64, c_beta: f64, seed: u64) -> Result<TeacherPool> {
    if low > high {
        return Err(Error::invalid(format!("rationality range low {low} > high {high}")));
    }
    if low < 0.0 || high > c_beta {
        return Err(Error::invalid(format!(
            "rationality range ({low}, {high}) outside [0, {c_beta}]"
        )));
    }
    let mut rng = stream(seed, STREAM_TEACHERS);
    let betas = Matrix::from_fn(m, g, |_, _| if low == high { low } else { rng.random_range(low..high) });
    TeacherPool::new(betas, c_beta.max(high * (1.0 + f64::EPSILON)))
}

/// Labels queries by sampling from the preference model at `θ*`.
#[derive(Debug, Clone)]
pub struct SimOracle {
    theta_star: Vector,
    rng: ChaCha8Rng,
}

impl SimOracle {
    pub fn new(theta_star: Vector, seed: u64) -> Self {
        Self {
            theta_star,
            rng: stream(seed, STREAM_ORACLE),
        }
    }
}

impl LabelOracle for SimOracle {
    fn label(&mut self, z: &FeatureDiff, _teacher_id: usize, beta: f64) -> std::result::Result<bool, String> {
        if z.dim() != self.theta_star.len() {
            return Err(format!(
                "feature dimension {} does not match oracle dimension {}",
                z.dim(),
                self.theta_star.len()
            ));
        }
        Ok(sample_preference(&self.theta_star, z, beta, &mut self.rng))
    }
}

/// A generated benchmark instance.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub pool: Vec<FeatureDiff>,
    pub teachers: TeacherPool,
    /// Held-out contexts, each offering `{a*(x), ‖x‖/3}`.
    pub problem: PolicyProblem,
    pub theta_star: RewardParams,
    /// Largest feature norm seen across pool and evaluation contexts.
    pub c_phi: f64,
    pub oracle: SimOracle,
}

/// Generates pool, teachers, evaluation problem and oracle from `spec`.
pub fn gen_sim_env(spec: &SimSpec) -> Result<SimEnv> {
    spec.validate()?;
    let theta = &spec.theta_star;
    let mut ctx_rng = stream(spec.seed, STREAM_POOL);
    let mut cat_rng = stream(spec.seed, STREAM_CATEGORY);
    let mut c_phi: f64 = 0.0;

    let mut pool = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x = sample_context(&mut ctx_rng, spec.d);
        let phi0 = features(&x, optimal_action(&x, theta));
        let phi1 = features(&x, alternative_action(&x));
        c_phi = c_phi.max(phi0.norm()).max(phi1.norm());
        let category = cat_rng.random_range(0..spec.g);
        pool.push(FeatureDiff::new(phi1 - phi0, category, i));
    }

    let mut eval_rng = stream(spec.seed, STREAM_EVAL);
    let contexts = (0..spec.n_eval)
        .map(|_| {
            let x = sample_context(&mut eval_rng, spec.d);
            let phi0 = features(&x, optimal_action(&x, theta));
            let phi1 = features(&x, alternative_action(&x));
            c_phi = c_phi.max(phi0.norm()).max(phi1.norm());
            PolicyContext::new(vec![phi0, phi1])
        })
        .collect::<Result<Vec<_>>>()?;

    let teachers = gen_teacher_pool(spec.m, spec.g, spec.beta_low, spec.beta_high, spec.c_beta, spec.seed)?;
    Ok(SimEnv {
        pool,
        teachers,
        problem: PolicyProblem::uniform(contexts)?,
        theta_star: RewardParams::new(theta.clone(), spec.c_theta)?,
        c_phi,
        oracle: SimOracle::new(theta.clone(), spec.seed),
    })
}

/// Behaviour distribution over the first three trap actions.
pub const TRAP_PROBS: [f64; 3] = [0.45, 0.45, 0.10];

/// Features of the four trap actions.
pub fn trap_actions() -> [Vector; 4] {
    [
        Vector::from_column_slice(&[0.2, 0.0, 0.1]),
        Vector::from_column_slice(&[0.1, -0.9, 0.1]),
        Vector::from_column_slice(&[0.2, 0.1, -0.1]),
        Vector::from_column_slice(&[0.0, 0.1, 0.0]),
    ]
}

/// True parameter of the trap scenario.
pub fn trap_theta_star() -> Vector {
    Vector::from_column_slice(&[-1.0, 0.1, 1.0])
}

/// Labelled comparisons that never involve the optimal action.
#[derive(Debug, Clone)]
pub struct GreedyTrap {
    pub records: Vec<PreferenceRecord>,
    /// One context offering all four actions.
    pub problem: PolicyProblem,
    pub theta_star: RewardParams,
    /// How often each action appeared in a comparison.
    pub action_counts: [usize; 4],
}

fn sample_behaviour<R: Rng>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    if u < TRAP_PROBS[0] {
        0
    } else if u < TRAP_PROBS[0] + TRAP_PROBS[1] {
        1
    } else {
        2
    }
}

/// `t` comparisons between two actions drawn independently from
/// [`TRAP_PROBS`], labelled with unit rationality.
pub fn gen_greedy_trap(t: usize, seed: u64) -> Result<GreedyTrap> {
    if t == 0 {
        return Err(Error::invalid("t must be at least 1"));
    }
    let actions = trap_actions();
    let theta = trap_theta_star();
    let mut rng = stream(seed, STREAM_POOL);
    let mut label_rng = stream(seed, STREAM_ORACLE);
    let mut counts = [0usize; 4];
    let records = (0..t)
        .map(|i| {
            let a0 = sample_behaviour(&mut rng);
            let a1 = sample_behaviour(&mut rng);
            counts[a0] += 1;
            counts[a1] += 1;
            let z = FeatureDiff::new(&actions[a1] - &actions[a0], 0, i);
            let y = sample_preference(&theta, &z, 1.0, &mut label_rng);
            PreferenceRecord::new(z, 1.0, 0, y)
        })
        .collect();
    let problem = PolicyProblem::uniform(vec![PolicyContext::new(actions.to_vec())?])?;
    Ok(GreedyTrap {
        records,
        problem,
        theta_star: RewardParams::new(theta, 2.0)?,
        action_counts: counts,
    })
}
