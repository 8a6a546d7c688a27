//! Sequential D-optimal selection of (conversation, teacher) pairs.
//!
//! At every round the current estimate `θ̂` and sample information `H`
//! are used to score each candidate pair by the relative determinant gain
//! `μ'(β θ̂ᵀz) β² zᵀH⁻¹z`. The batch variant scores all candidates against
//! the same `H`, takes the best `K` conversations, queries them, and only
//! then refits `θ̂`. `K = 1` is the fully sequential procedure.
//!
//! Baselines share the loop and differ only in how the pair is chosen:
//!
//! | kind               | conversation                 | teacher             |
//! |--------------------|------------------------------|---------------------|
//! | `DualDOptimal`     | determinant gain             | determinant gain    |
//! | `ConversationOnly` | determinant gain for teacher | uniform, drawn first |
//! | `TeacherOnly`      | uniform                      | determinant gain    |
//! | `Apo`              | `zᵀ(Σ z zᵀ + λI)⁻¹z`         | uniform             |
//! | `Random`           | uniform                      | uniform             |

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mle::{fit_mle, info_matrix, record_weight, InfoMatrix, MleOptions};
use crate::preference::{FeatureDiff, PreferenceRecord, RewardParams, TeacherPool};
use crate::{Error, Result, Vector};

/// Relative tolerance under which two gains count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Pools smaller than this are scanned on the calling thread.
const PAR_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    DualDOptimal,
    ConversationOnly,
    TeacherOnly,
    Apo,
    Random,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::DualDOptimal,
        SelectorKind::ConversationOnly,
        SelectorKind::TeacherOnly,
        SelectorKind::Apo,
        SelectorKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::DualDOptimal => "dual_d_optimal",
            SelectorKind::ConversationOnly => "conversation_only",
            SelectorKind::TeacherOnly => "teacher_only",
            SelectorKind::Apo => "apo",
            SelectorKind::Random => "random",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dual_d_optimal" | "dual" => Ok(SelectorKind::DualDOptimal),
            "conversation_only" | "conversation" => Ok(SelectorKind::ConversationOnly),
            "teacher_only" | "teacher" => Ok(SelectorKind::TeacherOnly),
            "apo" => Ok(SelectorKind::Apo),
            "random" => Ok(SelectorKind::Random),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// How pairs are chosen and in what batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorPolicy {
    pub kind: SelectorKind,
    pub batch_k: usize,
    /// Size of the uniformly drawn initial design.
    pub t0: usize,
    /// Exclude conversations that were already queried.
    pub no_repeat: bool,
}

impl SelectorPolicy {
    pub fn new(kind: SelectorKind, batch_k: usize, t0: usize) -> Result<Self> {
        if batch_k == 0 {
            return Err(Error::invalid("batch_k must be at least 1"));
        }
        if t0 == 0 {
            return Err(Error::invalid("t0 must be at least 1"));
        }
        Ok(Self {
            kind,
            batch_k,
            t0,
            no_repeat: false,
        })
    }

    pub fn with_no_repeat(mut self, no_repeat: bool) -> Self {
        self.no_repeat = no_repeat;
        self
    }
}

/// Numerical settings shared by every round of a design run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignConfig {
    pub ridge: f64,
    pub bound_c_theta: f64,
    pub mle_tol: f64,
    pub mle_max_iter: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            bound_c_theta: 2.0,
            mle_tol: 1e-8,
            mle_max_iter: 200,
        }
    }
}

/// Source of preference labels for queried pairs.
pub trait LabelOracle {
    fn label(&mut self, z: &FeatureDiff, teacher_id: usize, beta: f64) -> std::result::Result<bool, String>;
}

impl<F> LabelOracle for F
where
    F: FnMut(&FeatureDiff, usize, f64) -> std::result::Result<bool, String>,
{
    fn label(&mut self, z: &FeatureDiff, teacher_id: usize, beta: f64) -> std::result::Result<bool, String> {
        self(z, teacher_id, beta)
    }
}

/// One accumulated query, as written to trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub candidate_id: usize,
    pub teacher_id: usize,
    pub beta: f64,
    pub gain: f64,
    pub log_det: f64,
    pub theta_hat_norm: f64,
}

/// A chosen pair. `index` points into [`DesignState::pool`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub teacher_id: usize,
    pub beta: f64,
    pub gain: f64,
}

/// Running state of one design run.
#[derive(Debug, Clone)]
pub struct DesignState {
    pool: Vec<FeatureDiff>,
    teachers: TeacherPool,
    selected: Vec<PreferenceRecord>,
    info: InfoMatrix,
    linear_info: InfoMatrix,
    theta_hat: RewardParams,
    used: Vec<bool>,
    rng: ChaCha8Rng,
    config: DesignConfig,
    trace: Vec<TraceRecord>,
    unconverged_fits: usize,
}

impl DesignState {
    /// Draws `policy.t0` pairs uniformly, labels them and fits the first
    /// estimate.
    pub fn initialize(
        pool: Vec<FeatureDiff>,
        teachers: TeacherPool,
        policy: &SelectorPolicy,
        config: DesignConfig,
        oracle: &mut dyn LabelOracle,
        rng_seed: u64,
    ) -> Result<Self> {
        let first = pool.first().ok_or(Error::PoolExhausted)?;
        let d = first.dim();
        for z in &pool {
            if z.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: z.dim(),
                });
            }
            if z.category >= teachers.num_categories() {
                return Err(Error::invalid(format!(
                    "category {} outside teacher pool with {} categories",
                    z.category,
                    teachers.num_categories()
                )));
            }
        }
        let n = pool.len();
        let mut state = Self {
            pool,
            teachers,
            selected: Vec::new(),
            info: InfoMatrix::new(d, config.ridge),
            linear_info: InfoMatrix::new(d, config.ridge),
            theta_hat: RewardParams::zeros(d, config.bound_c_theta),
            used: vec![false; n],
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            config,
            trace: Vec::new(),
            unconverged_fits: 0,
        };

        let mut picks = Vec::with_capacity(policy.t0);
        for _ in 0..policy.t0 {
            let index = if policy.no_repeat {
                let free: Vec<usize> = (0..n).filter(|i| !state.used[*i]).collect();
                *free.choose(&mut state.rng).ok_or(Error::PoolExhausted)?
            } else {
                state.rng.random_range(0..n)
            };
            state.used[index] = true;
            let teacher_id = state.rng.random_range(0..state.teachers.num_teachers());
            // With ridge = 0 the initial matrix is singular and the gain undefined.
            let pick = state.scored(index, teacher_id).unwrap_or_else(|_| {
                let beta = state.teachers.beta(teacher_id, state.pool[index].category);
                Selection {
                    index,
                    teacher_id,
                    beta,
                    gain: 0.0,
                }
            });
            picks.push(pick);
        }
        state.apply(&picks, oracle)?;
        state.refit()?;
        Ok(state)
    }

    pub fn pool(&self) -> &[FeatureDiff] {
        &self.pool
    }

    pub fn teachers(&self) -> &TeacherPool {
        &self.teachers
    }

    pub fn selected(&self) -> &[PreferenceRecord] {
        &self.selected
    }

    pub fn info(&self) -> &InfoMatrix {
        &self.info
    }

    pub fn theta_hat(&self) -> &RewardParams {
        &self.theta_hat
    }

    pub fn step_t(&self) -> usize {
        self.selected.len()
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    /// Number of refits that stopped before meeting the MLE tolerance.
    pub fn unconverged_fits(&self) -> usize {
        self.unconverged_fits
    }

    /// Best single pair under `policy`.
    pub fn select_next(&mut self, policy: &SelectorPolicy) -> Result<Selection> {
        Ok(self.select_k(policy, 1)?[0])
    }

    /// `policy.batch_k` pairs scored against the current information matrix.
    pub fn select_batch(&mut self, policy: &SelectorPolicy) -> Result<Vec<Selection>> {
        self.select_k(policy, policy.batch_k)
    }

    /// Runs rounds until `budget_t` comparisons have been collected.
    pub fn run(&mut self, policy: &SelectorPolicy, budget_t: usize, oracle: &mut dyn LabelOracle) -> Result<()> {
        if budget_t < self.step_t() {
            return Err(Error::invalid(format!(
                "budget {budget_t} below the {} comparisons already collected",
                self.step_t()
            )));
        }
        while self.step_t() < budget_t {
            let k = policy.batch_k.min(budget_t - self.step_t());
            let picks = self.select_k(policy, k)?;
            self.apply(&picks, oracle)?;
            self.refit()?;
        }
        Ok(())
    }

    fn available(&self, no_repeat: bool) -> Vec<usize> {
        if no_repeat {
            (0..self.pool.len()).filter(|i| !self.used[*i]).collect()
        } else {
            (0..self.pool.len()).collect()
        }
    }

    fn scored(&self, index: usize, teacher_id: usize) -> Result<Selection> {
        let z = &self.pool[index];
        let beta = self.teachers.beta(teacher_id, z.category);
        let gain = self.info.rank_one_det_gain(&z.z, beta, &self.theta_hat.theta)?;
        Ok(Selection {
            index,
            teacher_id,
            beta,
            gain,
        })
    }

    /// Best teachers for conversation `index` and their common gain.
    fn best_teachers(&self, index: usize, q: f64) -> (f64, Vec<usize>) {
        let z = &self.pool[index];
        let theta = &self.theta_hat.theta;
        let gains: Vec<f64> = (0..self.teachers.num_teachers())
            .map(|j| record_weight(theta, &z.z, self.teachers.beta(j, z.category)) * q)
            .collect();
        let best = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let floor = best - TIE_RTOL * best.abs();
        let ties = (0..gains.len()).filter(|j| gains[*j] >= floor).collect();
        (best, ties)
    }

    fn quad_forms(&self, candidates: &[usize], linear: bool) -> Result<Vec<f64>> {
        let m = if linear { &self.linear_info } else { &self.info };
        let inv = m.h_inv().ok_or(Error::SingularInformation)?;
        let f = |i: &usize| {
            let z = &self.pool[*i].z;
            z.dot(&(inv * z)).max(0.0)
        };
        Ok(if candidates.len() >= PAR_THRESHOLD {
            candidates.par_iter().map(f).collect()
        } else {
            candidates.iter().map(f).collect()
        })
    }

    fn select_k(&mut self, policy: &SelectorPolicy, k: usize) -> Result<Vec<Selection>> {
        let candidates = self.available(policy.no_repeat);
        if candidates.len() < k || candidates.is_empty() {
            return Err(Error::PoolExhausted);
        }
        let m = self.teachers.num_teachers();
        match policy.kind {
            SelectorKind::DualDOptimal => {
                let q = self.quad_forms(&candidates, false)?;
                let per_conv: Vec<(f64, Vec<usize>)> = if candidates.len() >= PAR_THRESHOLD {
                    candidates
                        .par_iter()
                        .zip(q.par_iter())
                        .map(|(i, q)| self.best_teachers(*i, *q))
                        .collect()
                } else {
                    candidates
                        .iter()
                        .zip(q.iter())
                        .map(|(i, q)| self.best_teachers(*i, *q))
                        .collect()
                };
                let scores: Vec<f64> = per_conv.iter().map(|(g, _)| *g).collect();
                let chosen = rank_top_k(&scores, k, &mut self.rng);
                chosen
                    .into_iter()
                    .map(|pos| {
                        let teacher = *per_conv[pos].1.choose(&mut self.rng).expect("nonempty ties");
                        self.scored(candidates[pos], teacher)
                    })
                    .collect()
            }
            SelectorKind::ConversationOnly => {
                // Each slot draws a teacher first, then takes the best remaining
                // conversation for that teacher.
                let q = self.quad_forms(&candidates, false)?;
                let theta = &self.theta_hat.theta;
                let mut taken = vec![false; candidates.len()];
                let mut picks = Vec::with_capacity(k);
                for _ in 0..k {
                    let teacher = self.rng.random_range(0..m);
                    let scores: Vec<f64> = candidates
                        .iter()
                        .zip(&q)
                        .zip(&taken)
                        .map(|((i, q), t)| {
                            if *t {
                                f64::NEG_INFINITY
                            } else {
                                let z = &self.pool[*i];
                                record_weight(theta, &z.z, self.teachers.beta(teacher, z.category)) * q
                            }
                        })
                        .collect();
                    let pos = rank_top_k(&scores, 1, &mut self.rng)[0];
                    taken[pos] = true;
                    picks.push((candidates[pos], teacher));
                }
                picks.into_iter().map(|(i, j)| self.scored(i, j)).collect()
            }
            SelectorKind::Apo => {
                let scores = self.quad_forms(&candidates, true)?;
                let chosen = rank_top_k(&scores, k, &mut self.rng);
                chosen
                    .into_iter()
                    .map(|pos| {
                        let teacher = self.rng.random_range(0..m);
                        self.scored(candidates[pos], teacher)
                    })
                    .collect()
            }
            SelectorKind::TeacherOnly | SelectorKind::Random => {
                let chosen: Vec<usize> = candidates.choose_multiple(&mut self.rng, k).cloned().collect();
                chosen
                    .into_iter()
                    .map(|index| {
                        let teacher = if policy.kind == SelectorKind::TeacherOnly {
                            let q = self.info.quad_form_inv(&self.pool[index].z)?;
                            let (_, ties) = self.best_teachers(index, q);
                            *ties.choose(&mut self.rng).expect("nonempty ties")
                        } else {
                            self.rng.random_range(0..m)
                        };
                        self.scored(index, teacher)
                    })
                    .collect()
            }
        }
    }

    fn apply(&mut self, picks: &[Selection], oracle: &mut dyn LabelOracle) -> Result<()> {
        let theta = self.theta_hat.theta.clone();
        let theta_norm = theta.norm();
        for pick in picks {
            let z = self.pool[pick.index].clone();
            let step = self.selected.len() + 1;
            let y = oracle
                .label(&z, pick.teacher_id, pick.beta)
                .map_err(|message| Error::Oracle { step, message })?;
            let record = PreferenceRecord::new(z, pick.beta, pick.teacher_id, y);
            self.info.accumulate_record(&theta, &record);
            self.linear_info.accumulate(&record.z.z, 1.0);
            self.used[pick.index] = true;
            self.trace.push(TraceRecord {
                step,
                candidate_id: record.z.source_id,
                teacher_id: pick.teacher_id,
                beta: pick.beta,
                gain: pick.gain,
                log_det: self.info.log_det(),
                theta_hat_norm: theta_norm,
            });
            self.selected.push(record);
        }
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let opts = MleOptions {
            bound_c_theta: self.config.bound_c_theta,
            tol: self.config.mle_tol,
            max_iter: self.config.mle_max_iter,
            init: Some(self.theta_hat.theta.clone()),
        };
        let fit = fit_mle(&self.selected, &opts)?;
        if !fit.converged {
            self.unconverged_fits += 1;
        }
        self.theta_hat = fit.params;
        self.info = info_matrix(&self.theta_hat.theta, &self.selected, self.config.ridge)?;
        Ok(())
    }

    /// Current estimate as a plain vector.
    pub fn estimate(&self) -> &Vector {
        &self.theta_hat.theta
    }
}

/// Positions of the `k` largest scores. Scores within [`TIE_RTOL`] of each
/// other are treated as tied and the tie is broken uniformly at random.
fn rank_top_k<R: Rng>(scores: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    let mut out = Vec::with_capacity(k);
    let mut i = 0;
    while out.len() < k && i < order.len() {
        let top = scores[order[i]];
        let floor = top - TIE_RTOL * top.abs();
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] >= floor {
            j += 1;
        }
        let need = k - out.len();
        if j - i <= need {
            out.extend_from_slice(&order[i..j]);
        } else {
            let group = &mut order[i..j];
            let (picked, _) = group.partial_shuffle(rng, need);
            out.extend_from_slice(picked);
        }
        i = j;
    }
    out
}
