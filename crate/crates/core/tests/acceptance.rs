//! Acceptance gate: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so every line is printed whether or not
//! the criterion holds; the process exits nonzero if any criterion fails.
//! Oracles below (determinants by LU, log-likelihood, bootstrap) are written
//! independently of the library code they check.

use std::time::Instant;

use dualpref::harness::experiment::{run_replication, ExperimentOutput};
use dualpref::harness::{compute_gv, run_experiment, Experiment, MetricsRow, RunConfig};
use dualpref::{
    fit_mle, score, DesignConfig, DesignState, FeatureDiff, InfoMatrix, Matrix, MleOptions, PessimismMode,
    PreferenceRecord, SelectorKind, SelectorPolicy, TeacherPool, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn cell_col(out: &ExperimentOutput, method: &str, t: usize, k: usize, f: fn(&MetricsRow) -> f64) -> Vec<f64> {
    out.cell(method, t, k).into_iter().map(f).collect()
}

fn sim_cfg() -> RunConfig {
    RunConfig {
        experiment: Experiment::Sim61,
        write_traces: false,
        output_dir: None,
        ..RunConfig::default()
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, d: usize, s: f64) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-s..s))
}

fn logistic(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

// Average log P(y | θ) over records, written from scratch.
fn oracle_loglik(theta: &Vector, recs: &[PreferenceRecord]) -> f64 {
    let total: f64 = recs
        .iter()
        .map(|r| {
            let w = r.beta * theta.dot(&r.z.z);
            let s = if r.y { w } else { -w };
            // log σ(s) = -log(1 + e^{-s})
            if s >= 0.0 {
                -(-s).exp().ln_1p()
            } else {
                s - s.exp().ln_1p()
            }
        })
        .sum();
    total / recs.len() as f64
}

fn oracle_weight(theta: &Vector, z: &Vector, beta: f64) -> f64 {
    let p = logistic(beta * theta.dot(z));
    p * (1.0 - p) * beta * beta
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let methods = [
        SelectorKind::DualDOptimal,
        SelectorKind::ConversationOnly,
        SelectorKind::TeacherOnly,
        SelectorKind::Apo,
        SelectorKind::Random,
    ];
    let ks = [10usize, 50, 100];
    let reps = 50;
    let cfg = RunConfig {
        method: methods.to_vec(),
        budget_t: vec![1000],
        batch_k: ks.to_vec(),
        replications: reps,
        beta_low: 0.0,
        beta_high: 2.0,
        ..sim_cfg()
    };
    let start = Instant::now();
    let out = run_experiment(&cfg).expect("experiment runs");
    let total_s = start.elapsed().as_secs_f64();
    let k50_ms: u64 = out.rows.iter().filter(|r| r.k == 50).map(|r| r.wall_ms).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(0xb007);
    let resamples = 1000;
    let mut pass = out.failures.is_empty();
    let mut detail = Vec::new();
    for &k in &ks {
        let est: Vec<Vec<Vector>> = methods
            .iter()
            .map(|m| out.cell_estimates(m.as_str(), 1000, k))
            .collect();
        let mse: Vec<Vec<f64>> = methods
            .iter()
            .map(|m| cell_col(&out, m.as_str(), 1000, k, |r| r.mse))
            .collect();
        if est.iter().any(|e| e.len() != reps) {
            pass = false;
            continue;
        }
        const CLAUSES: [&str; 4] = ["dual<conv", "conv<teacher,apo", "teacher,apo<random", "gv(dual) min"];
        // Which clauses hold on the resample; all four make the ordering.
        let clauses = |idx: &[usize]| -> [bool; 4] {
            let m: Vec<f64> = mse.iter().map(|v| idx.iter().map(|i| v[*i]).sum::<f64>()).collect();
            let gv: Vec<f64> = est
                .iter()
                .map(|e| compute_gv(&idx.iter().map(|i| e[*i].clone()).collect::<Vec<_>>()).unwrap())
                .collect();
            let (dual, conv, teach, apo, rand) = (m[0], m[1], m[2], m[3], m[4]);
            [
                dual < conv,
                conv < teach && conv < apo,
                teach < rand && apo < rand,
                gv[1..].iter().all(|g| gv[0] < *g),
            ]
        };
        let full: Vec<usize> = (0..reps).collect();
        let full_ok = clauses(&full).iter().all(|c| *c);
        let mut hits = 0;
        let mut misses = [0usize; 4];
        for _ in 0..resamples {
            let idx: Vec<usize> = (0..reps).map(|_| rng.random_range(0..reps)).collect();
            let c = clauses(&idx);
            hits += c.iter().all(|x| *x) as usize;
            for (m, ok) in misses.iter_mut().zip(c) {
                *m += !ok as usize;
            }
        }
        let broken: Vec<String> = CLAUSES
            .iter()
            .zip(misses)
            .filter(|(_, m)| *m > 0)
            .map(|(n, m)| format!("{n} fails {m}"))
            .collect();
        let frac = hits as f64 / resamples as f64;
        pass &= frac >= 0.9;
        let means: Vec<String> = mse.iter().map(|v| format!("{:.3}", mean_se(v).0)).collect();
        detail.push(format!(
            "K={k}: {:.1}% [{}] (full sample {}), MSE d/c/t/a/r = {}",
            100.0 * frac,
            broken.join(", "),
            if full_ok { "ordered" } else { "NOT ordered" },
            means.join("/")
        ));
    }
    let k50_cell_s = k50_ms as f64 / 1000.0;
    pass &= k50_cell_s < 600.0;
    detail.push(format!(
        "K=50 selection time {k50_cell_s:.1}s summed over cells, all cells {total_s:.0}s"
    ));
    Outcome {
        id: 1,
        name: "method ordering (MSE, GV)",
        pass,
        detail: detail.join("; "),
    }
}

fn subopt_curve(mode: PessimismMode, ts: &[usize]) -> Vec<(f64, f64)> {
    let cfg = RunConfig {
        method: vec![SelectorKind::DualDOptimal],
        budget_t: ts.to_vec(),
        batch_k: vec![50],
        replications: 30,
        pessimism_mode: mode,
        ..sim_cfg()
    };
    let out = run_experiment(&cfg).expect("experiment runs");
    ts.iter()
        .map(|t| mean_se(&cell_col(&out, "dual_d_optimal", *t, 50, |r| r.subopt)))
        .collect()
}

fn decay_ok(curve: &[(f64, f64)]) -> (bool, bool, f64) {
    let ratio = curve.last().unwrap().0 / curve[0].0;
    let monotone = curve.windows(2).all(|w| w[1].0 <= w[0].0 + w[0].1.max(w[1].1));
    (ratio < 0.5, monotone, ratio)
}

fn fmt_curve(c: &[(f64, f64)]) -> String {
    c.iter().map(|(m, _)| format!("{m:.2e}")).collect::<Vec<_>>().join(",")
}

fn criterion_2() -> Outcome {
    let ts = [250, 500, 1000, 2000, 4000];
    let curve = subopt_curve(PessimismMode::PerContext, &ts);
    let (half, mono, ratio) = decay_ok(&curve);
    // Reported only: the jointly coupled objective on the same runs.
    let joint = subopt_curve(PessimismMode::Joint, &ts);
    let (_, _, jratio) = decay_ok(&joint);
    Outcome {
        id: 2,
        name: "sub-optimality decay",
        pass: half && mono,
        detail: format!(
            "per-context T=250..4000: {} ratio {ratio:.3} (need < 0.5), monotone within SE: {mono}; joint mode (not gated): {} ratio {jratio:.3}",
            fmt_curve(&curve),
            fmt_curve(&joint)
        ),
    }
}

fn criterion_3() -> Outcome {
    let ts: Vec<usize> = (1..=32).map(|i| 100 * i).collect();
    let cfg = RunConfig {
        experiment: Experiment::GreedyTrap,
        budget_t: ts.clone(),
        replications: 100,
        write_traces: false,
        ..RunConfig::default()
    };
    let out = run_experiment(&cfg).expect("trap runs");
    let greedy: Vec<f64> = ts
        .iter()
        .map(|t| mean_se(&cell_col(&out, "greedy", *t, 1, |r| r.subopt)).0)
        .collect();
    let err: Vec<f64> = ts
        .iter()
        .map(|t| mean_se(&cell_col(&out, "greedy", *t, 1, |r| r.mse)).0)
        .collect();
    let pess_last = mean_se(&cell_col(&out, "pessimistic", 3200, 1, |r| r.subopt)).0;
    let floor = greedy.iter().cloned().fold(f64::INFINITY, f64::min);
    let greedy_ok = floor >= 0.05;
    let err_ratio = err[0] / err[err.len() - 1];
    let err_ok = err_ratio >= 3.0;
    let pess_ok = pess_last < floor;
    Outcome {
        id: 3,
        name: "greedy failure",
        pass: greedy_ok && err_ok && pess_ok,
        detail: format!(
            "greedy min SubOpt {floor:.4} (need >= 0.05): {greedy_ok}; MLE error {:.3} -> {:.3}, {err_ratio:.2}x (need >= 3x): {err_ok}; pessimistic at 3200 {pess_last:.4} < floor: {pess_ok}",
            err[0],
            err[err.len() - 1]
        ),
    }
}

fn subopt_at_1000(beta_high: f64, d: usize) -> (f64, f64) {
    let cfg = RunConfig {
        method: vec![SelectorKind::DualDOptimal],
        budget_t: vec![1000],
        batch_k: vec![50],
        replications: 30,
        beta_low: 0.0,
        beta_high,
        d,
        ..sim_cfg()
    };
    let out = run_experiment(&cfg).expect("experiment runs");
    mean_se(&cell_col(&out, "dual_d_optimal", 1000, 50, |r| r.subopt))
}

fn criterion_4() -> Outcome {
    // Wide to narrow: Unif(0,3), Unif(0,2), Unif(0,1).
    let cells: Vec<(f64, f64)> = [3.0, 2.0, 1.0].iter().map(|b| subopt_at_1000(*b, 5)).collect();
    let mut violations = 0;
    let mut within = true;
    for w in cells.windows(2) {
        if w[0].0 > w[1].0 {
            violations += 1;
            within &= w[0].0 - w[1].0 <= w[0].1.max(w[1].1);
        }
    }
    Outcome {
        id: 4,
        name: "rationality-range effect",
        pass: violations == 0 || (violations == 1 && within),
        detail: format!(
            "SubOpt U(0,3) {:.2e}±{:.1e}, U(0,2) {:.2e}±{:.1e}, U(0,1) {:.2e}±{:.1e}; violations {violations}",
            cells[0].0, cells[0].1, cells[1].0, cells[1].1, cells[2].0, cells[2].1
        ),
    }
}

fn criterion_5() -> Outcome {
    let cells: Vec<(f64, f64)> = [3usize, 5, 10].iter().map(|d| subopt_at_1000(1.0, *d)).collect();
    let pass = cells.windows(2).all(|w| w[0].0 < w[1].0);
    Outcome {
        id: 5,
        name: "dimension effect",
        pass,
        detail: format!(
            "SubOpt d=3 {:.2e}, d=5 {:.2e}, d=10 {:.2e} (beta ~ U(0,1))",
            cells[0].0, cells[1].0, cells[2].0
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 1000;
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = rng.random_range(1..=8);
        let ridge = rng.random_range(1e-3..1.0);
        let mut info = InfoMatrix::new(d, ridge);
        let mut h = Matrix::identity(d, d) * ridge;
        // Build through the incremental path so the cached inverse is exercised.
        for _ in 0..rng.random_range(0..20) {
            let z = rand_vec(&mut rng, d, 2.0);
            let w = rng.random_range(0.0..1.0);
            info.accumulate(&z, w);
            h += &z * z.transpose() * w;
        }
        let z = rand_vec(&mut rng, d, 2.0);
        let theta = rand_vec(&mut rng, d, 1.5);
        let beta = rng.random_range(0.0..3.0);
        let gain = info.rank_one_det_gain(&z, beta, &theta).unwrap();
        let w = oracle_weight(&theta, &z, beta);
        let h2 = &h + &z * z.transpose() * w;
        let want = h2.clone().lu().determinant() / h.clone().lu().determinant();
        let rel = ((1.0 + gain) - want).abs() / want.abs();
        let ld_err = (info.log_det() - h.lu().determinant().ln()).abs() / info.log_det().abs().max(1.0);
        worst = worst.max(rel).max(ld_err);
        if rel <= 1e-10 && ld_err <= 1e-10 {
            passed += 1;
        }
    }
    Outcome {
        id: 6,
        name: "determinant-update oracle",
        pass: passed == n,
        detail: format!("{passed}/{n} within 1e-10 relative, worst {worst:.1e}"),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n_inst = 200;
    let mut passed = 0;
    let mut ties = 0;
    for inst in 0..n_inst {
        let d = rng.random_range(2..=4);
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=3);
        let g = rng.random_range(1..=3);
        let pool: Vec<FeatureDiff> = (0..n)
            .map(|i| FeatureDiff::new(rand_vec(&mut rng, d, 1.5), rng.random_range(0..g), i))
            .collect();
        let betas = Matrix::from_fn(m, g, |_, _| rng.random_range(0.0..2.9));
        let teachers = TeacherPool::new(betas.clone(), 3.0).unwrap();
        let truth = rand_vec(&mut rng, d, 0.8);
        let mut lrng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let mut oracle = |z: &FeatureDiff, _: usize, beta: f64| -> Result<bool, String> {
            Ok(lrng.random::<f64>() < logistic(beta * truth.dot(&z.z)))
        };
        let policy = SelectorPolicy::new(SelectorKind::DualDOptimal, 1, rng.random_range(1..=4)).unwrap();
        let config = DesignConfig {
            ridge: rng.random_range(0.01..0.5),
            ..DesignConfig::default()
        };
        let mut state = DesignState::initialize(pool.clone(), teachers, &policy, config, &mut oracle, inst).unwrap();
        let h = state.info().h().clone();
        let th = state.theta_hat().theta.clone();
        let base = h.clone().lu().determinant();
        let mut vals = Vec::new();
        for (i, z) in pool.iter().enumerate() {
            for j in 0..m {
                let w = oracle_weight(&th, &z.z, betas[(j, z.category)]);
                let det = (&h + &z.z * z.z.transpose() * w).lu().determinant();
                vals.push(((i, j), det / base));
            }
        }
        let best = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<(usize, usize)> = vals.iter().filter(|v| v.1 >= best - 1e-9 * best).map(|v| v.0).collect();
        if tied.len() > 1 {
            ties += 1;
        }
        let pick = state.select_next(&policy).unwrap();
        if tied.contains(&(pick.index, pick.teacher_id)) {
            passed += 1;
        }
    }
    Outcome {
        id: 7,
        name: "brute-force selection oracle",
        pass: passed == n_inst,
        detail: format!("{passed}/{n_inst} match exhaustive argmax ({ties} instances with ties)"),
    }
}

fn random_records(rng: &mut ChaCha8Rng, d: usize, n: usize, truth: &Vector) -> Vec<PreferenceRecord> {
    (0..n)
        .map(|i| {
            let z = FeatureDiff::new(rand_vec(rng, d, 1.0), 0, i);
            let beta = rng.random_range(0.1..2.5);
            let y = rng.random::<f64>() < logistic(beta * truth.dot(&z.z));
            PreferenceRecord::new(z, beta, 0, y)
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fd_ok = 0;
    for _ in 0..100 {
        let d = rng.random_range(1..=8);
        let truth = rand_vec(&mut rng, d, 1.0);
        let count = rng.random_range(5..60);
        let recs = random_records(&mut rng, d, count, &truth);
        let at = rand_vec(&mut rng, d, 1.0);
        let g = score(&at, &recs).unwrap();
        let h = 1e-5;
        let ok = (0..d).all(|i| {
            let mut p = at.clone();
            let mut q = at.clone();
            p[i] += h;
            q[i] -= h;
            let fd = (oracle_loglik(&p, &recs) - oracle_loglik(&q, &recs)) / (2.0 * h);
            (fd - g[i]).abs() <= 1e-6
        });
        fd_ok += ok as usize;
    }

    let c = 2.0;
    let mut grid_ok = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let truth = rand_vec(&mut rng, 2, 1.2);
        let count = rng.random_range(30..300);
        let recs = random_records(&mut rng, 2, count, &truth);
        let fit = fit_mle(&recs, &MleOptions::new(c)).unwrap();
        // Coarse grid over the disk, then a fine grid around the coarse winner.
        let search = |center: (f64, f64), half: f64, step: f64| {
            let mut best = (f64::NEG_INFINITY, center);
            let k = (half / step).round() as i64;
            for a in -k..=k {
                for b in -k..=k {
                    let p = (center.0 + a as f64 * step, center.1 + b as f64 * step);
                    if p.0.hypot(p.1) > c {
                        continue;
                    }
                    let ll = oracle_loglik(&Vector::from_column_slice(&[p.0, p.1]), &recs);
                    if ll > best.0 {
                        best = (ll, p);
                    }
                }
            }
            best.1
        };
        let coarse = search((0.0, 0.0), c, 0.05);
        let fine = search(coarse, 0.1, 0.002);
        let dist = (fit.params.theta[0] - fine.0)
            .abs()
            .max((fit.params.theta[1] - fine.1).abs());
        worst = worst.max(dist);
        grid_ok += (dist <= 0.02) as usize;
    }
    Outcome {
        id: 8,
        name: "MLE oracles",
        pass: fd_ok == 100 && grid_ok == 20,
        detail: format!(
            "score vs finite differences {fd_ok}/100; d=2 grid search {grid_ok}/20 (worst L-inf {worst:.4})"
        ),
    }
}

fn criterion_9() -> Outcome {
    let ts = [250usize, 500, 1000, 2000, 4000];
    let cfg = RunConfig {
        method: vec![SelectorKind::Random],
        budget_t: ts.to_vec(),
        batch_k: vec![50],
        replications: 30,
        ..sim_cfg()
    };
    let out = run_experiment(&cfg).expect("experiment runs");
    let x: Vec<f64> = ts.iter().map(|t| (*t as f64).ln()).collect();
    let y: Vec<f64> = ts
        .iter()
        .map(|t| mean_se(&cell_col(&out, "random", *t, 50, |r| r.mse)).0.ln())
        .collect();
    let mx = x.iter().sum::<f64>() / 5.0;
    let my = y.iter().sum::<f64>() / 5.0;
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    Outcome {
        id: 9,
        name: "estimation rate",
        pass: (slope + 0.5).abs() <= 0.15,
        detail: format!("log-log slope {slope:.3} (need -0.5 ± 0.15)"),
    }
}

fn criterion_10() -> Outcome {
    // θ̂ᵀz = 2 with two teachers of rationality 0.5 and 3.0.
    let theta = Vector::from_column_slice(&[1.0, 0.0, 0.0]);
    let z = Vector::from_column_slice(&[2.0, 0.0, 0.0]);
    let pool = TeacherPool::new(Matrix::from_column_slice(2, 1, &[0.5, 3.0]), 3.5).unwrap();
    let info = InfoMatrix::new(3, 1.0);
    let gains: Vec<f64> = (0..pool.num_teachers())
        .map(|j| info.rank_one_det_gain(&z, pool.beta(j, 0), &theta).unwrap())
        .collect();
    let best = (0..gains.len()).max_by(|a, b| gains[*a].total_cmp(&gains[*b])).unwrap();
    let most_rational = (0..gains.len())
        .max_by(|a, b| pool.beta(*a, 0).total_cmp(&pool.beta(*b, 0)))
        .unwrap();
    let oracle: Vec<f64> = [0.5, 3.0].iter().map(|b| oracle_weight(&theta, &z, *b) * 4.0).collect();
    let agrees = gains
        .iter()
        .zip(&oracle)
        .all(|(g, o)| (g - o).abs() <= 1e-12 * o.max(1e-300));
    Outcome {
        id: 10,
        name: "rationality witness",
        pass: best != most_rational && gains[best] > gains[most_rational] && agrees,
        detail: format!(
            "gain(beta=0.5) {:.5} > gain(beta=3.0) {:.5}; matches closed form: {agrees}",
            gains[0], gains[1]
        ),
    }
}

fn criterion_11() -> Outcome {
    let cfg = sim_cfg();
    let times: Vec<u64> = [10usize, 50, 100]
        .iter()
        .map(|k| {
            run_replication(&cfg, None, SelectorKind::DualDOptimal, 1000, *k, 0)
                .unwrap()
                .row
                .wall_ms
        })
        .collect();
    Outcome {
        id: 11,
        name: "batch speedup",
        pass: times[2] < times[1] && times[1] < times[0],
        detail: format!("wall ms K=10 {}, K=50 {}, K=100 {}", times[0], times[1], times[2]),
    }
}

fn main() {
    // `cargo test --test acceptance -- 2 5` runs only criteria 2 and 5;
    // arguments that are not criterion numbers are ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [fn() -> Outcome; 11] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, c) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = c();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {:>2} {:<30} {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
