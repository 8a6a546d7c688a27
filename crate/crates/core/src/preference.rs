//! Linear reward model and the logistic (Bradley–Terry–Luce) preference model
//! with teacher rationality.
//!
//! A teacher with rationality `beta` prefers the second response of a
//! conversation with probability `sigmoid(beta * theta·z)`, where `z` is the
//! feature difference between the two responses. `beta = 1` everywhere is the
//! plain BTL model, a single `beta` per teacher gives heterogeneous teachers,
//! and a `beta` that also depends on the conversation category gives the
//! context-dependent model used throughout this crate.

use rand::Rng;

use crate::{Error, Matrix, Result, Vector};

/// Largest `f64` strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, clamped to the open interval (0, 1).
pub fn sigmoid(w: f64) -> f64 {
    let v = if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

/// Derivative of the logistic function, `sigmoid(w) * (1 - sigmoid(w))`.
///
/// Evaluated as `sigmoid(w) * sigmoid(-w)` so the tails keep full relative
/// precision.
pub fn sigmoid_deriv(w: f64) -> f64 {
    sigmoid(w) * sigmoid(-w)
}

/// `ln sigmoid(w)` without forming `sigmoid(w)`.
pub fn log_sigmoid(w: f64) -> f64 {
    if w >= 0.0 {
        -(-w).exp().ln_1p()
    } else {
        w - w.exp().ln_1p()
    }
}

/// Reward parameter `theta` together with its L2 bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub theta: Vector,
    pub bound_c_theta: f64,
}

impl RewardParams {
    pub fn new(theta: Vector, bound_c_theta: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("reward dimension must be at least 1"));
        }
        if !(bound_c_theta > 0.0) {
            return Err(Error::invalid("bound_c_theta must be positive"));
        }
        if theta.norm() > bound_c_theta * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "‖theta‖ = {} exceeds bound {}",
                theta.norm(),
                bound_c_theta
            )));
        }
        Ok(Self { theta, bound_c_theta })
    }

    pub fn zeros(d: usize, bound_c_theta: f64) -> Self {
        Self {
            theta: Vector::zeros(d),
            bound_c_theta,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Reward `theta·phi` of a single feature vector.
    pub fn reward(&self, phi: &Vector) -> f64 {
        self.theta.dot(phi)
    }
}

/// Feature difference `phi(x, a1) - phi(x, a0)` of one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDiff {
    pub z: Vector,
    /// Zero-based category index, selects the teacher-pool column.
    pub category: usize,
    /// Identifier of the originating conversation.
    pub source_id: usize,
}

impl FeatureDiff {
    pub fn new(z: Vector, category: usize, source_id: usize) -> Self {
        Self { z, category, source_id }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// The same conversation with its two responses swapped.
    pub fn swapped(&self) -> Self {
        Self {
            z: -&self.z,
            ..self.clone()
        }
    }
}

/// `m x g` matrix of teacher rationalities, one column per category.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPool {
    pub betas: Matrix,
    pub bound_c_beta: f64,
}

impl TeacherPool {
    pub fn new(betas: Matrix, bound_c_beta: f64) -> Result<Self> {
        if betas.nrows() == 0 || betas.ncols() == 0 {
            return Err(Error::invalid("teacher pool needs m >= 1 and g >= 1"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b >= 0.0 && **b < bound_c_beta)) {
            return Err(Error::invalid(format!("rationality {b} outside [0, {bound_c_beta})")));
        }
        Ok(Self { betas, bound_c_beta })
    }

    /// A pool where every teacher has the same rationality in every category.
    pub fn uniform(m: usize, g: usize, beta: f64) -> Result<Self> {
        Self::new(Matrix::from_element(m, g, beta), beta.max(1.0) * 2.0)
    }

    pub fn num_teachers(&self) -> usize {
        self.betas.nrows()
    }

    pub fn num_categories(&self) -> usize {
        self.betas.ncols()
    }

    pub fn beta(&self, teacher: usize, category: usize) -> f64 {
        self.betas[(teacher, category)]
    }
}

/// One labelled comparison. `y = true` means the second response won.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord {
    pub z: FeatureDiff,
    pub beta: f64,
    pub teacher_id: usize,
    pub y: bool,
}

impl PreferenceRecord {
    pub fn new(z: FeatureDiff, beta: f64, teacher_id: usize, y: bool) -> Self {
        Self { z, beta, teacher_id, y }
    }

    /// Builds a record whose rationality is looked up from `teachers`.
    pub fn from_pool(z: FeatureDiff, teachers: &TeacherPool, teacher_id: usize, y: bool) -> Self {
        let beta = teachers.beta(teacher_id, z.category);
        Self::new(z, beta, teacher_id, y)
    }

    pub fn label(&self) -> f64 {
        if self.y {
            1.0
        } else {
            0.0
        }
    }
}

/// Probability that a teacher of rationality `beta` prefers the second response.
pub fn preference_prob(theta: &Vector, z: &FeatureDiff, beta: f64) -> f64 {
    sigmoid(beta * theta.dot(&z.z))
}

/// Draws one preference label from the model.
pub fn sample_preference<R: Rng + ?Sized>(theta: &Vector, z: &FeatureDiff, beta: f64, rng: &mut R) -> bool {
    let p = preference_prob(theta, z, beta);
    rng.random::<f64>() < p
}

/// Average log-likelihood of `records` at `theta`.
pub fn log_likelihood(theta: &Vector, records: &[PreferenceRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::NoData);
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let w = r.beta * theta.dot(&r.z.z);
            if r.y {
                log_sigmoid(w)
            } else {
                log_sigmoid(-w)
            }
        })
        .sum();
    Ok(total / records.len() as f64)
}
