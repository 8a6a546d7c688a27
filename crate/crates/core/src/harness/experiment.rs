use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Experiment, RunConfig};
use super::metrics::MetricsRow;
use super::persist::{self, EnvFile, EnvParts, LabelRecord};
use crate::mle::{confidence_radius, fit_mle, info_matrix, InfoMatrix, MleOptions};
use crate::policy::{greedy_policy, solve_pessimistic, suboptimality, PessimismMode, PolicyProblem};
use crate::preference::{FeatureDiff, RewardParams, TeacherPool};
use crate::selector::{DesignState, LabelOracle, SelectorKind, SelectorPolicy, TraceRecord};
use crate::sim::{gen_greedy_trap, gen_sim_env, SimOracle};
use crate::{Error, Result, Vector};

/// Method labels of the two rows emitted per greedy-trap replication.
pub const TRAP_METHODS: [&str; 2] = ["greedy", "pessimistic"];

/// Result of one seeded run.
#[derive(Debug, Clone)]
pub struct Replication {
    pub row: MetricsRow,
    pub estimate: Vector,
    pub trace: Vec<TraceRecord>,
    pub labels: Vec<LabelRecord>,
    /// Largest feature norm of the run's environment.
    pub c_phi: f64,
}

/// Rows of a whole experiment, ordered by (method, T, K, rep) following the
/// order of the config lists.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    /// Final estimate per row; `None` for failed rows.
    pub estimates: Vec<Option<Vector>>,
    /// Error message per failed row index.
    pub failures: Vec<(usize, String)>,
    pub c_phi: f64,
}

impl ExperimentOutput {
    /// Successful rows of one cell.
    pub fn cell(&self, method: &str, t: usize, k: usize) -> Vec<&MetricsRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.t == t && r.k == k && !r.failed())
            .collect()
    }

    /// Final estimates of one cell, in replication order.
    pub fn cell_estimates(&self, method: &str, t: usize, k: usize) -> Vec<Vector> {
        self.rows
            .iter()
            .zip(&self.estimates)
            .filter(|(r, _)| r.method == method && r.t == t && r.k == k)
            .filter_map(|(_, e)| e.clone())
            .collect()
    }
}

struct LabelLog<'a> {
    inner: &'a mut dyn LabelOracle,
    labels: Vec<LabelRecord>,
}

impl LabelOracle for LabelLog<'_> {
    fn label(&mut self, z: &FeatureDiff, teacher_id: usize, beta: f64) -> std::result::Result<bool, String> {
        let y = self.inner.label(z, teacher_id, beta)?;
        self.labels.push(LabelRecord {
            step: self.labels.len() + 1,
            candidate_id: z.source_id,
            teacher_id,
            beta,
            y,
        });
        Ok(y)
    }
}

/// Inputs of a design run that do not depend on the selector.
struct Env {
    pool: Vec<FeatureDiff>,
    teachers: TeacherPool,
    problem: PolicyProblem,
    theta_star: RewardParams,
    c_phi: f64,
}

fn env_for(cfg: &RunConfig, custom: Option<&EnvParts>, seed: u64) -> Result<Env> {
    match (cfg.experiment, custom) {
        (Experiment::Custom, Some(p)) => Ok(Env {
            pool: p.pool.clone(),
            teachers: p.teachers.clone(),
            problem: p.problem.clone(),
            theta_star: p.theta_star.clone(),
            c_phi: p.c_phi,
        }),
        (Experiment::Custom, None) => Err(Error::Config("custom experiments need env_file".into())),
        _ => {
            let e = gen_sim_env(&cfg.sim_spec(seed))?;
            Ok(Env {
                pool: e.pool,
                teachers: e.teachers,
                problem: e.problem,
                theta_star: e.theta_star,
                c_phi: e.c_phi,
            })
        }
    }
}

/// Runs one design replication of `method` with budget `t` and batch size `k`
/// on the configured benchmark (or on `custom` for custom experiments), then
/// extracts the pessimistic policy and scores it on the evaluation contexts.
pub fn run_replication(
    cfg: &RunConfig,
    custom: Option<&EnvParts>,
    method: SelectorKind,
    t: usize,
    k: usize,
    rep: usize,
) -> Result<Replication> {
    let seed = cfg.seed_for(rep);
    let env = env_for(cfg, custom, seed)?;
    let d = env.theta_star.dim();
    let mut sim_oracle = SimOracle::new(env.theta_star.theta.clone(), seed);
    let mut oracle = LabelLog {
        inner: &mut sim_oracle,
        labels: Vec::with_capacity(t),
    };
    let policy = SelectorPolicy::new(method, k, cfg.t0())?.with_no_repeat(cfg.no_repeat);

    let start = Instant::now();
    let mut state = DesignState::initialize(env.pool, env.teachers, &policy, cfg.design(), &mut oracle, seed)?;
    state.run(&policy, t, &mut oracle)?;
    let wall_ms = start.elapsed().as_millis() as u64;

    let gamma = confidence_radius(&cfg.confidence()?, t, d);
    let pi = solve_pessimistic(&env.problem, state.theta_hat(), state.info(), gamma, cfg.pessimism_mode)?;
    let subopt = suboptimality(&pi, &env.problem, &env.theta_star)?;
    let estimate = state.estimate().clone();
    let (gv, logdet) = design_metrics(state.info(), t);
    Ok(Replication {
        row: MetricsRow {
            method: method.as_str().to_string(),
            t,
            k,
            rep,
            seed,
            gv,
            mse: (&estimate - &env.theta_star.theta).norm(),
            subopt,
            logdet,
            wall_ms,
        },
        estimate,
        trace: state.trace().to_vec(),
        labels: oracle.labels,
        c_phi: env.c_phi,
    })
}

fn design_metrics(info: &InfoMatrix, t: usize) -> (f64, f64) {
    let ld = info.log_det();
    ((-ld).exp(), ld - info.dim() as f64 * (t as f64).ln())
}

/// One greedy-trap replication: fits the MLE on `t` comparisons that never
/// involve the optimal action and returns the greedy and pessimistic rows.
pub fn run_trap_replication(cfg: &RunConfig, t: usize, rep: usize) -> Result<[Replication; 2]> {
    let seed = cfg.seed_for(rep);
    let start = Instant::now();
    let trap = gen_greedy_trap(t, seed)?;
    let d = trap.theta_star.dim();
    let fit = fit_mle(&trap.records, &MleOptions::new(cfg.c_theta))?;
    let info = info_matrix(&fit.params.theta, &trap.records, cfg.ridge)?;
    let gamma = confidence_radius(&cfg.confidence()?, t, d);
    let greedy = greedy_policy(&trap.problem, &fit.params);
    let pess = solve_pessimistic(&trap.problem, &fit.params, &info, gamma, PessimismMode::Joint)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let (gv, logdet) = design_metrics(&info, t);
    let mse = (&fit.params.theta - &trap.theta_star.theta).norm();
    let labels: Vec<LabelRecord> = trap
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| LabelRecord {
            step: i + 1,
            candidate_id: r.z.source_id,
            teacher_id: r.teacher_id,
            beta: r.beta,
            y: r.y,
        })
        .collect();
    let c_phi = crate::sim::trap_actions().iter().map(|a| a.norm()).fold(0.0, f64::max);
    let make = |name: &str, pi| -> Result<Replication> {
        Ok(Replication {
            row: MetricsRow {
                method: name.to_string(),
                t,
                k: 1,
                rep,
                seed,
                gv,
                mse,
                subopt: suboptimality(pi, &trap.problem, &trap.theta_star)?,
                logdet,
                wall_ms,
            },
            estimate: fit.params.theta.clone(),
            trace: Vec::new(),
            labels: labels.clone(),
            c_phi,
        })
    };
    Ok([make(TRAP_METHODS[0], &greedy)?, make(TRAP_METHODS[1], &pess)?])
}

fn failed_row(method: &str, t: usize, k: usize, rep: usize, seed: u64) -> MetricsRow {
    MetricsRow {
        method: method.to_string(),
        t,
        k,
        rep,
        seed,
        gv: f64::NAN,
        mse: f64::NAN,
        subopt: f64::NAN,
        logdet: f64::NAN,
        wall_ms: 0,
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    c_phi: f64,
    seed_rule: &'static str,
    subopt_evaluation: &'static str,
    rows: usize,
    failures: Vec<ManifestFailure<'a>>,
}

#[derive(Serialize)]
struct ManifestFailure<'a> {
    method: &'a str,
    t: usize,
    k: usize,
    rep: usize,
    error: &'a str,
}

#[derive(Serialize)]
struct EstimateLine<'a> {
    method: &'a str,
    t: usize,
    k: usize,
    rep: usize,
    theta_hat: Vec<f64>,
}

/// Runs every (method, T, K) cell for `replications` seeds in parallel.
///
/// A replication that errors or panics yields a row of NaN metrics and an
/// entry in [`ExperimentOutput::failures`]; the others are unaffected. When
/// `output_dir` is set the run directory receives `metrics.csv`,
/// `estimates.jsonl`, `manifest.json` and, with `write_traces`, per-run
/// `traces/*.jsonl` and `labels/*.jsonl`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let custom = match (&cfg.experiment, &cfg.env_file) {
        (Experiment::Custom, Some(path)) => Some(
            EnvFile::load(path)
                .and_then(EnvFile::into_parts)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        ),
        _ => None,
    };

    type Job = (Option<SelectorKind>, usize, usize, usize);
    let mut jobs: Vec<Job> = Vec::new();
    if cfg.experiment == Experiment::GreedyTrap {
        for &t in &cfg.budget_t {
            for rep in 0..cfg.replications {
                jobs.push((None, t, 1, rep));
            }
        }
    } else {
        for &method in &cfg.method {
            for &t in &cfg.budget_t {
                for &k in &cfg.batch_k {
                    for rep in 0..cfg.replications {
                        jobs.push((Some(method), t, k, rep));
                    }
                }
            }
        }
    }

    let results: Vec<Vec<(MetricsRow, std::result::Result<Replication, String>)>> = jobs
        .par_iter()
        .map(|&(method, t, k, rep)| {
            let seed = cfg.seed_for(rep);
            match method {
                Some(kind) => {
                    let out = catch_unwind(AssertUnwindSafe(|| {
                        run_replication(cfg, custom.as_ref(), kind, t, k, rep)
                    }));
                    let res = match out {
                        Ok(Ok(r)) => Ok(r),
                        Ok(Err(e)) => Err(e.to_string()),
                        Err(p) => Err(panic_message(p)),
                    };
                    vec![(failed_row(kind.as_str(), t, k, rep, seed), res)]
                }
                None => {
                    let out = catch_unwind(AssertUnwindSafe(|| run_trap_replication(cfg, t, rep)));
                    match out {
                        Ok(Ok(pair)) => pair
                            .into_iter()
                            .map(|r| (failed_row(&r.row.method, t, 1, rep, seed), Ok(r)))
                            .collect(),
                        other => {
                            let msg = match other {
                                Ok(Err(e)) => e.to_string(),
                                Err(p) => panic_message(p),
                                Ok(Ok(_)) => unreachable!(),
                            };
                            TRAP_METHODS
                                .iter()
                                .map(|m| (failed_row(m, t, 1, rep, seed), Err(msg.clone())))
                                .collect()
                        }
                    }
                }
            }
        })
        .collect();

    let mut flat: Vec<(MetricsRow, std::result::Result<Replication, String>)> = results.into_iter().flatten().collect();
    if cfg.experiment == Experiment::GreedyTrap {
        // Group by method first so rows follow the (method, T, K, rep) order.
        flat.sort_by_key(|(r, _)| TRAP_METHODS.iter().position(|m| *m == r.method));
    }

    let mut out = ExperimentOutput {
        rows: Vec::with_capacity(flat.len()),
        estimates: Vec::with_capacity(flat.len()),
        failures: Vec::new(),
        c_phi: 0.0,
    };
    let mut reps = Vec::with_capacity(flat.len());
    for (i, (placeholder, res)) in flat.into_iter().enumerate() {
        match res {
            Ok(r) => {
                out.c_phi = out.c_phi.max(r.c_phi);
                out.rows.push(r.row.clone());
                out.estimates.push(Some(r.estimate.clone()));
                reps.push(Some(r));
            }
            Err(msg) => {
                out.rows.push(placeholder);
                out.estimates.push(None);
                out.failures.push((i, msg));
                reps.push(None);
            }
        }
    }

    if let Some(dir) = &cfg.output_dir {
        write_run_dir(dir, cfg, &out, &reps)?;
    }
    Ok(out)
}

fn run_name(row: &MetricsRow) -> String {
    format!("{}_t{}_k{}_rep{}", row.method, row.t, row.k, row.rep)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_run_dir(dir: &Path, cfg: &RunConfig, out: &ExperimentOutput, reps: &[Option<Replication>]) -> Result<()> {
    create_dir(dir)?;
    persist::write_metrics_csv(&dir.join("metrics.csv"), &out.rows)?;

    let estimates: Vec<EstimateLine> = out
        .rows
        .iter()
        .zip(&out.estimates)
        .filter_map(|(r, e)| {
            e.as_ref().map(|e| EstimateLine {
                method: &r.method,
                t: r.t,
                k: r.k,
                rep: r.rep,
                theta_hat: e.iter().cloned().collect(),
            })
        })
        .collect();
    persist::write_jsonl(&dir.join("estimates.jsonl"), &estimates)?;

    if cfg.write_traces {
        let traces = dir.join("traces");
        let labels = dir.join("labels");
        create_dir(&traces)?;
        create_dir(&labels)?;
        let mut seen_labels = std::collections::HashSet::new();
        for r in reps.iter().flatten() {
            let name = run_name(&r.row);
            if !r.trace.is_empty() {
                persist::write_jsonl(&traces.join(format!("{name}.jsonl")), &r.trace)?;
            }
            // Both trap rows share one label stream.
            let label_name = if cfg.experiment == Experiment::GreedyTrap {
                format!("trap_t{}_rep{}", r.row.t, r.row.rep)
            } else {
                name
            };
            if seen_labels.insert(label_name.clone()) {
                persist::write_jsonl(&labels.join(format!("{label_name}.jsonl")), &r.labels)?;
            }
        }
    }

    let manifest = Manifest {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        c_phi: out.c_phi,
        seed_rule: "replication r uses seed base_seed + r",
        subopt_evaluation: match cfg.experiment {
            Experiment::Sim61 => "held-out contexts drawn from the pool distribution (n_eval)",
            Experiment::GreedyTrap => "the single four-action context",
            Experiment::Custom => "eval_contexts of env_file",
        },
        rows: out.rows.len(),
        failures: out
            .failures
            .iter()
            .map(|(i, msg)| {
                let r = &out.rows[*i];
                ManifestFailure {
                    method: &r.method,
                    t: r.t,
                    k: r.k,
                    rep: r.rep,
                    error: msg,
                }
            })
            .collect(),
    };
    persist::write_json(&dir.join("manifest.json"), &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n: 300,
            n_eval: 100,
            budget_t: vec![30],
            batch_k: vec![5],
            replications: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn one_row_per_replication_and_cell() {
        let cfg = RunConfig {
            method: vec![SelectorKind::Random, SelectorKind::DualDOptimal],
            batch_k: vec![1, 5],
            ..small()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2);
        assert!(out.failures.is_empty());
        assert_eq!(out.rows[0].method, "random");
        assert_eq!((out.rows[1].k, out.rows[1].rep), (1, 1));
        assert_eq!(out.rows[2].k, 5);
        assert_eq!(out.rows[4].method, "dual_d_optimal");
        for r in &out.rows {
            assert!(r.gv > 0.0 && r.mse >= 0.0 && r.subopt >= -1e-12);
        }
    }

    #[test]
    fn budget_equal_to_t0_gives_one_row() {
        let cfg = RunConfig {
            method: vec![SelectorKind::Random],
            budget_t: vec![10],
            replications: 1,
            ..small()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(!out.rows[0].failed());
    }

    #[test]
    fn pool_exhaustion_is_a_failed_row() {
        let cfg = RunConfig {
            n: 20,
            budget_t: vec![40],
            no_repeat: true,
            replications: 1,
            ..small()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.rows[0].failed());
        assert_eq!(out.failures.len(), 1);
        assert!(out.failures[0].1.contains("exhausted"));
    }

    #[test]
    fn trap_rows_come_in_pairs() {
        let cfg = RunConfig {
            experiment: Experiment::GreedyTrap,
            budget_t: vec![100, 200],
            replications: 3,
            ..RunConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 12);
        assert!(out.rows[..6].iter().all(|r| r.method == "greedy"));
        assert!(out.rows[6..].iter().all(|r| r.method == "pessimistic"));
        assert_eq!(out.rows[0].mse, out.rows[6].mse);
    }
}
