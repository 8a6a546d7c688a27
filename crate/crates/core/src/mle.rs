//! Maximum-likelihood estimation of the reward parameter, Fisher information
//! matrices and the confidence radius used by the pessimistic policy.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::preference::{log_likelihood, sigmoid, sigmoid_deriv, PreferenceRecord, RewardParams};
use crate::{Error, Matrix, Result, Vector};

/// Sherman–Morrison updates between full refactorizations.
const REFACTOR_EVERY: usize = 100;

/// Eigenvalues below `CUTOFF * max_eigenvalue` are treated as zero by the
/// Newton solver.
const CUTOFF: f64 = 1e-12;

/// Settings for [`fit_mle`].
#[derive(Debug, Clone)]
pub struct MleOptions {
    pub bound_c_theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Option<Vector>,
}

impl MleOptions {
    pub fn new(bound_c_theta: f64) -> Self {
        Self {
            bound_c_theta,
            tol: 1e-8,
            max_iter: 200,
            init: None,
        }
    }

    pub fn with_init(mut self, init: Vector) -> Self {
        self.init = Some(init);
        self
    }
}

/// Result of [`fit_mle`].
#[derive(Debug, Clone)]
pub struct MleFit {
    pub params: RewardParams,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

/// Gradient of [`log_likelihood`] with respect to `theta`.
pub fn score(theta: &Vector, records: &[PreferenceRecord]) -> Result<Vector> {
    if records.is_empty() {
        return Err(Error::NoData);
    }
    let mut g = Vector::zeros(theta.len());
    for r in records {
        let w = r.beta * theta.dot(&r.z.z);
        let resid = r.label() - sigmoid(w);
        g.axpy(resid * r.beta, &r.z.z, 1.0);
    }
    Ok(g / records.len() as f64)
}

/// Negated Hessian of the average log-likelihood, i.e. the normalized
/// information `(1/T) Σ μ'(β θᵀz) β² z zᵀ`.
fn neg_hessian(theta: &Vector, records: &[PreferenceRecord]) -> Matrix {
    let d = theta.len();
    let mut f = Matrix::zeros(d, d);
    for r in records {
        let w = sigmoid_deriv(r.beta * theta.dot(&r.z.z)) * r.beta * r.beta;
        if w > 0.0 {
            f.ger(w, &r.z.z, &r.z.z, 1.0);
        }
    }
    f / records.len() as f64
}

fn project(theta: &Vector, bound: f64) -> Vector {
    let n = theta.norm();
    if n > bound {
        theta * (bound / n)
    } else {
        theta.clone()
    }
}

fn on_boundary(theta: &Vector, bound: f64) -> bool {
    theta.norm() >= bound * (1.0 - 1e-9)
}

fn stationarity(theta: &Vector, g: &Vector, bound: f64) -> f64 {
    if on_boundary(theta, bound) {
        (project(&(theta + g), bound) - theta).amax()
    } else {
        g.amax()
    }
}

/// Newton step maximizing the local quadratic model inside the ball.
///
/// Solves `(F + λI) d = g - λθ` with the smallest `λ ≥ 0` that keeps
/// `‖θ + d‖ ≤ bound`. Rank-deficient `F` is handled with a truncated
/// eigendecomposition, so directions carrying no information are left alone.
fn ball_newton_step(f: &Matrix, g: &Vector, theta: &Vector, bound: f64) -> Option<Vector> {
    let eig = SymmetricEigen::new(f.clone());
    let lam_max = eig.eigenvalues.max();
    if !(lam_max > 0.0) {
        return None;
    }
    let cutoff = lam_max * CUTOFF;
    let q = &eig.eigenvectors;
    let g_rot = q.transpose() * g;
    let t_rot = q.transpose() * theta;

    let d0 = {
        let mut c = Vector::zeros(g.len());
        for i in 0..g.len() {
            if eig.eigenvalues[i] > cutoff {
                c[i] = g_rot[i] / eig.eigenvalues[i];
            }
        }
        q * c
    };
    if (theta + &d0).norm() <= bound {
        return Some(d0);
    }

    // ‖(F + λI)⁻¹ (Fθ + g)‖ is decreasing in λ > 0.
    let b_rot: Vector = Vector::from_iterator(
        g.len(),
        (0..g.len()).map(|i| eig.eigenvalues[i].max(0.0) * t_rot[i] + g_rot[i]),
    );
    let target = |lam: f64| -> Vector {
        Vector::from_iterator(
            g.len(),
            (0..g.len()).map(|i| b_rot[i] / (eig.eigenvalues[i].max(0.0) + lam)),
        )
    };
    let mut lo = 0.0;
    let mut hi = lam_max.max(1e-12);
    while target(hi).norm() > bound {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if target(mid).norm() > bound {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let next = q * target(hi);
    Some(next - theta)
}

/// Constrained MLE over the L2 ball of radius `opts.bound_c_theta`.
///
/// Newton iterations with Armijo backtracking; each step maximizes the
/// quadratic model inside the ball. If backtracking fails the iteration falls
/// back to a projected gradient step. Non-convergence is reported through
/// [`MleFit::converged`], not as an error.
pub fn fit_mle(records: &[PreferenceRecord], opts: &MleOptions) -> Result<MleFit> {
    if records.is_empty() {
        return Err(Error::NoData);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let d = records[0].z.dim();
    if let Some(r) = records.iter().find(|r| r.z.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: r.z.dim(),
        });
    }
    let bound = opts.bound_c_theta;
    let mut theta = match &opts.init {
        Some(init) if init.len() == d => project(init, bound),
        Some(init) => {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: init.len(),
            })
        }
        None => Vector::zeros(d),
    };
    let mut ll = log_likelihood(&theta, records)?;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let g = score(&theta, records)?;
        if stationarity(&theta, &g, bound) <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let slack = 8.0 * f64::EPSILON * ll.abs().max(1e-300);

        let mut accepted = None;
        if let Some(step) = ball_newton_step(&neg_hessian(&theta, records), &g, &theta, bound) {
            let slope = g.dot(&step);
            let mut s = 1.0;
            for _ in 0..40 {
                let cand = project(&(&theta + &step * s), bound);
                let cand_ll = log_likelihood(&cand, records)?;
                if cand_ll >= ll + 1e-4 * s * slope - slack {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                s *= 0.5;
            }
        }
        if accepted.is_none() {
            let mut s = 1.0;
            for _ in 0..60 {
                let cand = project(&(&theta + &g * s), bound);
                let cand_ll = log_likelihood(&cand, records)?;
                if cand_ll >= ll + 1e-4 * g.dot(&(&cand - &theta)) - slack {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                s *= 0.5;
            }
        }
        match accepted {
            Some((cand, cand_ll)) => {
                let moved = (&cand - &theta).amax();
                theta = cand;
                ll = cand_ll;
                if moved == 0.0 {
                    break;
                }
            }
            None => break,
        }
    }
    if !converged {
        let g = score(&theta, records)?;
        converged = stationarity(&theta, &g, bound) <= opts.tol;
    }
    Ok(MleFit {
        params: RewardParams {
            theta,
            bound_c_theta: bound,
        },
        converged,
        iterations,
        log_likelihood: ll,
    })
}

/// Sample information matrix `Σ μ'(β θᵀz) β² z zᵀ + ridge·I` with a cached
/// inverse and log-determinant.
///
/// `h` always includes the ridge term. Accumulating a record applies a
/// Sherman–Morrison update to the inverse and the matrix determinant lemma to
/// the log-determinant; every [`REFACTOR_EVERY`] updates both are recomputed
/// from a fresh Cholesky factorization.
#[derive(Debug, Clone)]
pub struct InfoMatrix {
    h: Matrix,
    h_inv: Option<Matrix>,
    log_det: f64,
    count: usize,
    ridge: f64,
    since_refactor: usize,
}

impl InfoMatrix {
    /// Empty information `ridge·I`.
    pub fn new(d: usize, ridge: f64) -> Self {
        Self::from_matrix(Matrix::identity(d, d) * ridge, 0, ridge)
    }

    /// Wraps a precomputed matrix `h` (ridge already included).
    pub fn from_matrix(h: Matrix, count: usize, ridge: f64) -> Self {
        let mut m = Self {
            h,
            h_inv: None,
            log_det: f64::NEG_INFINITY,
            count,
            ridge,
            since_refactor: 0,
        };
        m.refactor();
        m
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn h_inv(&self) -> Option<&Matrix> {
        self.h_inv.as_ref()
    }

    pub fn is_invertible(&self) -> bool {
        self.h_inv.is_some()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Recomputes inverse and log-determinant from scratch.
    pub fn refactor(&mut self) {
        self.h = (&self.h + self.h.transpose()) * 0.5;
        self.since_refactor = 0;
        match Cholesky::new(self.h.clone()) {
            Some(chol) => {
                self.log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                self.h_inv = Some(chol.inverse());
            }
            None => {
                self.h_inv = None;
                let det = self.h.determinant();
                self.log_det = if det > 0.0 { det.ln() } else { f64::NEG_INFINITY };
            }
        }
    }

    /// Adds `weight · z zᵀ` as one more accumulated record.
    pub fn accumulate(&mut self, z: &Vector, weight: f64) {
        self.count += 1;
        if weight == 0.0 {
            return;
        }
        self.h.ger(weight, z, z, 1.0);
        self.since_refactor += 1;
        let refresh = self.since_refactor >= REFACTOR_EVERY;
        match self.h_inv.as_mut() {
            Some(inv) if !refresh => {
                let u = &*inv * z;
                let denom = 1.0 + weight * z.dot(&u);
                inv.ger(-weight / denom, &u, &u, 1.0);
                self.log_det += denom.ln();
            }
            _ => self.refactor(),
        }
    }

    /// Functional form of [`accumulate`](Self::accumulate).
    pub fn accumulated(&self, z: &Vector, weight: f64) -> Self {
        let mut next = self.clone();
        next.accumulate(z, weight);
        next
    }

    /// Adds a preference record evaluated at `theta`.
    pub fn accumulate_record(&mut self, theta: &Vector, record: &PreferenceRecord) {
        let w = record_weight(theta, &record.z.z, record.beta);
        self.accumulate(&record.z.z, w);
    }

    /// `vᵀ h⁻¹ v`.
    pub fn quad_form_inv(&self, v: &Vector) -> Result<f64> {
        let inv = self.h_inv.as_ref().ok_or(Error::SingularInformation)?;
        Ok((v.dot(&(inv * v))).max(0.0))
    }

    /// `vᵀ H̄⁻¹ v` for the normalized information `H̄ = h / count`.
    pub fn normalized_quad_form_inv(&self, v: &Vector) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::NoData);
        }
        Ok(self.count as f64 * self.quad_form_inv(v)?)
    }

    /// Normalized information `h / count`.
    pub fn normalized(&self) -> Result<Matrix> {
        if self.count == 0 {
            return Err(Error::NoData);
        }
        Ok(&self.h / self.count as f64)
    }

    /// Relative gain `g` with `det(h + w z zᵀ) = det(h)·(1 + g)`, where
    /// `w = μ'(β θᵀz) β²`.
    pub fn rank_one_det_gain(&self, z: &Vector, beta: f64, theta: &Vector) -> Result<f64> {
        let q = self.quad_form_inv(z)?;
        Ok(record_weight(theta, z, beta) * q)
    }
}

/// Information weight `μ'(β θᵀz) β²` of a single comparison.
pub fn record_weight(theta: &Vector, z: &Vector, beta: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    sigmoid_deriv(beta * theta.dot(z)) * beta * beta
}

/// Builds the sample information matrix of `records` at `theta`.
pub fn info_matrix(theta: &Vector, records: &[PreferenceRecord], ridge: f64) -> Result<InfoMatrix> {
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be nonnegative"));
    }
    let d = theta.len();
    let mut h = Matrix::identity(d, d) * ridge;
    for r in records {
        if r.z.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: r.z.dim(),
            });
        }
        let w = record_weight(theta, &r.z.z, r.beta);
        if w > 0.0 {
            h.ger(w, &r.z.z, &r.z.z, 1.0);
        }
    }
    Ok(InfoMatrix::from_matrix(h, records.len(), ridge))
}

/// Constants of the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
}

impl ConfidenceSpec {
    pub fn new(c1: f64, c2: f64, delta: f64) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::invalid("c1 and c2 must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        Ok(Self { c1, c2, delta })
    }
}

impl Default for ConfidenceSpec {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            delta: 0.1,
        }
    }
}

/// `γ(t, d, δ) = sqrt( (c1/t) [ d ln(e + c2 t / d) + ln(2/δ) ] )`.
pub fn confidence_radius(spec: &ConfidenceSpec, t: usize, d: usize) -> f64 {
    let t = t.max(1) as f64;
    let d = d.max(1) as f64;
    let inner = d * (std::f64::consts::E + spec.c2 * t / d).ln() + (2.0 / spec.delta).ln();
    (spec.c1 / t * inner).sqrt()
}
