//! On-disk formats.
//!
//! * metrics: CSV with columns `method,t,k,rep,seed,gv,mse,subopt,logdet,wall_ms`
//! * traces: JSON lines of [`TraceRecord`]
//! * labels: JSON lines of [`LabelRecord`], the label stream of one run
//! * environments: one JSON document, [`EnvFile`]
//! * manifest: one JSON document describing a run directory

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::metrics::{MetricsRow, CSV_HEADER};
use crate::policy::{PolicyContext, PolicyProblem};
use crate::preference::{FeatureDiff, RewardParams, TeacherPool};
use crate::selector::LabelOracle;
use crate::sim::SimEnv;
use crate::{Error, Matrix, Result, Vector};

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a metrics CSV, reporting the 1-based line of the first bad record.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics(file)
}

pub fn read_metrics<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers().map_err(|e| Error::MalformedCsv {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedCsv {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<MetricsRow>() {
        let row = rec.map_err(|e| Error::MalformedCsv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// One label of a run's label stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub step: usize,
    pub candidate_id: usize,
    pub teacher_id: usize,
    pub beta: f64,
    pub y: bool,
}

/// Replays a recorded label stream in order.
#[derive(Debug, Clone)]
pub struct RecordedOracle {
    labels: Vec<LabelRecord>,
    next: usize,
}

impl RecordedOracle {
    pub fn new(labels: Vec<LabelRecord>) -> Self {
        Self { labels, next: 0 }
    }
}

impl LabelOracle for RecordedOracle {
    fn label(&mut self, z: &FeatureDiff, teacher_id: usize, _beta: f64) -> std::result::Result<bool, String> {
        let rec = self
            .labels
            .get(self.next)
            .ok_or_else(|| format!("label stream ended after {} labels", self.labels.len()))?;
        if rec.candidate_id != z.source_id || rec.teacher_id != teacher_id {
            return Err(format!(
                "recorded query {} was ({}, {}), replay asked for ({}, {})",
                rec.step, rec.candidate_id, rec.teacher_id, z.source_id, teacher_id
            ));
        }
        self.next += 1;
        Ok(rec.y)
    }
}

/// Serialized candidate conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub source_id: usize,
    /// Zero-based category.
    pub category: usize,
    pub z: Vec<f64>,
}

/// A complete environment: candidate pool, teacher rationalities (`m` rows of
/// `g` values), true parameter and evaluation contexts (each a list of action
/// feature vectors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFile {
    pub d: usize,
    pub theta_star: Vec<f64>,
    pub c_theta: f64,
    pub c_beta: f64,
    pub teachers: Vec<Vec<f64>>,
    pub pool: Vec<PoolEntry>,
    pub eval_contexts: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_weights: Option<Vec<f64>>,
}

/// Parsed form of an [`EnvFile`].
#[derive(Debug, Clone)]
pub struct EnvParts {
    pub pool: Vec<FeatureDiff>,
    pub teachers: TeacherPool,
    pub problem: PolicyProblem,
    pub theta_star: RewardParams,
    pub c_phi: f64,
}

impl EnvFile {
    pub fn from_sim(env: &SimEnv) -> Self {
        let t = &env.teachers.betas;
        Self {
            d: env.theta_star.dim(),
            theta_star: env.theta_star.theta.iter().cloned().collect(),
            c_theta: env.theta_star.bound_c_theta,
            c_beta: env.teachers.bound_c_beta,
            teachers: (0..t.nrows()).map(|j| t.row(j).iter().cloned().collect()).collect(),
            pool: env
                .pool
                .iter()
                .map(|z| PoolEntry {
                    source_id: z.source_id,
                    category: z.category,
                    z: z.z.iter().cloned().collect(),
                })
                .collect(),
            eval_contexts: env
                .problem
                .contexts
                .iter()
                .map(|c| c.actions.iter().map(|a| a.iter().cloned().collect()).collect())
                .collect(),
            eval_weights: Some(env.problem.weights.clone()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_parts(self) -> Result<EnvParts> {
        let d = self.d;
        let check = |len: usize| {
            if len == d {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: d,
                    actual: len,
                })
            }
        };
        check(self.theta_star.len())?;
        let m = self.teachers.len();
        let g = self.teachers.first().map_or(0, |r| r.len());
        if self.teachers.iter().any(|r| r.len() != g) {
            return Err(Error::invalid("teacher rows must have equal length"));
        }
        let teachers = TeacherPool::new(Matrix::from_fn(m, g, |j, k| self.teachers[j][k]), self.c_beta)?;
        let mut c_phi: f64 = 0.0;
        let mut pool = Vec::with_capacity(self.pool.len());
        for p in self.pool {
            check(p.z.len())?;
            pool.push(FeatureDiff::new(Vector::from_vec(p.z), p.category, p.source_id));
        }
        let mut contexts = Vec::with_capacity(self.eval_contexts.len());
        for c in self.eval_contexts {
            let mut actions = Vec::with_capacity(c.len());
            for a in c {
                check(a.len())?;
                let v = Vector::from_vec(a);
                c_phi = c_phi.max(v.norm());
                actions.push(v);
            }
            contexts.push(PolicyContext::new(actions)?);
        }
        let problem = match self.eval_weights {
            Some(w) => PolicyProblem::weighted(contexts, w)?,
            None => PolicyProblem::uniform(contexts)?,
        };
        Ok(EnvParts {
            pool,
            teachers,
            problem,
            theta_star: RewardParams::new(Vector::from_vec(self.theta_star), self.c_theta)?,
            c_phi,
        })
    }
}
