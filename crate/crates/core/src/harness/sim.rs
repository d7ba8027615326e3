//! Monte Carlo MSE study of the shape estimators under Student t data.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{EstimatorKind, SimConfig, DEFAULT_TRIALS};
use crate::bounds;
use crate::elliptical::DensityGenerator;
use crate::error::{CesError, Result};
use crate::estimators::{self, ScoreTable, ShapeEstimate};
use crate::scale_shape::{self, ScaleFunctional};

/// Fraction of failed trials above which a cell is flagged invalid.
pub const MAX_FAILURE_RATE: f64 = 0.01;

pub const CSV_HEADER: [&str; 6] = ["nu", "estimator", "mse", "stderr", "scrb_trace", "crb_param_trace"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub nu: f64,
    pub estimator: String,
    pub mse: f64,
    pub std_err: f64,
    pub trials_ok: usize,
    pub failures: usize,
    pub valid: bool,
}

/// Bound traces divided by `n`, directly comparable with the MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTraces {
    pub nu: f64,
    /// `tr SCRB(ovecs V) / n`
    pub scrb_trace: f64,
    /// `tr I_V⁻¹ / n` (scale and generator known)
    pub crb_param_trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub scale_kind: ScaleFunctional,
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub root_seed: u64,
    pub cells: Vec<CellResult>,
    pub bounds: Vec<BoundTraces>,
}

impl SimResult {
    pub fn cell(&self, nu: f64, estimator: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.nu == nu && c.estimator == estimator)
    }

    pub fn bound(&self, nu: f64) -> Option<&BoundTraces> {
        self.bounds.iter().find(|b| b.nu == nu)
    }

    /// One row per (ν, estimator). Bounds carry 17 significant digits, Monte Carlo statistics 6.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for c in &self.cells {
            let b = self.bound(c.nu).expect("bounds cover the grid");
            w.write_record([
                format!("{}", c.nu),
                c.estimator.clone(),
                format!("{:.5e}", c.mse),
                format!("{:.5e}", c.std_err),
                format!("{:.16e}", b.scrb_trace),
                format!("{:.16e}", b.crb_param_trace),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| CesError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn metadata(&self, cfg: &SimConfig) -> serde_json::Value {
        let invalid: Vec<_> = self
            .cells
            .iter()
            .filter(|c| !c.valid)
            .map(|c| serde_json::json!({"nu": c.nu, "estimator": c.estimator, "failures": c.failures}))
            .collect();
        serde_json::json!({
            "schema": super::config::SCHEMA_VERSION,
            "scale_kind": self.scale_kind.name(),
            "config": cfg,
            "trials": self.trials,
            "trials_note": format!(
                "desk-scale run: {} trials per cell (default {DEFAULT_TRIALS}); published curves used 1e5 trials, \
                 so the MSE columns carry Monte Carlo error of the size given in the stderr column",
                self.trials
            ),
            "mse_definition": "mean over valid trials of ||ovecs(V_hat - V_0)||^2",
            "bound_columns": "traces of the shape bounds divided by n",
            "failures": self.cells.iter().map(|c| c.failures).sum::<usize>(),
            "invalid_cells": invalid,
        })
    }
}

/// The RNG of trial `trial` at grid point `nu_index`.
///
/// The key comes from `root_seed` and the stream index packs `(nu_index, trial)`,
/// so a trial's data do not depend on which worker draws them or in what order.
pub fn trial_rng(root_seed: u64, nu_index: usize, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(root_seed);
    rng.set_stream(((nu_index as u64) << 32) | trial as u64);
    rng
}

/// Bound traces at every `ν` of the grid. Independent of the trial count.
pub fn bound_traces(cfg: &SimConfig) -> Result<Vec<BoundTraces>> {
    let v0 = scale_shape::renormalize(cfg.scale_kind, &cfg.sigma())?;
    let n = cfg.n as f64;
    cfg.nu_grid
        .iter()
        .map(|&nu| {
            let gen = DensityGenerator::student_t(nu)?;
            Ok(BoundTraces {
                nu,
                scrb_trace: bounds::crb_shape(cfg.scale_kind, &v0, &gen, cfg.m)?.trace() / n,
                crb_param_trace: bounds::no_nuisance_crb_shape(cfg.scale_kind, &v0, &gen, cfg.m)?.trace() / n,
            })
        })
        .collect()
}

enum Slot {
    Scm,
    Tyler,
    R(usize),
}

/// Squared errors of every estimator on one dataset; `None` marks a failure.
fn run_trial(data: &DMatrix<f64>, cfg: &SimConfig, slots: &[Slot], tables: &[ScoreTable], v0: &DMatrix<f64>) -> Vec<Option<f64>> {
    let kind = cfg.scale_kind;
    let needs_tyler = slots.iter().any(|s| !matches!(s, Slot::Scm));
    let tyler: Option<ShapeEstimate> = if needs_tyler {
        estimators::tyler_shape(data, kind, estimators::TYLER_TOL, estimators::TYLER_MAX_ITER).ok()
    } else {
        None
    };
    let iterations = cfg.r_iterations.unwrap_or_else(|| estimators::default_iterations(kind));
    slots
        .iter()
        .map(|slot| {
            let est = match slot {
                Slot::Scm => estimators::scm_shape(data, kind).ok(),
                Slot::Tyler => tyler.clone(),
                Slot::R(i) => tyler
                    .as_ref()
                    .and_then(|pre| estimators::r_estimator_with_table(data, kind, &tables[*i], pre, iterations, false).ok()),
            };
            est.map(|e| estimators::squared_error(&e.v_hat, v0)).filter(|e| e.is_finite())
        })
        .collect()
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let kind = cfg.scale_kind;
    let sigma = cfg.sigma();
    let v0 = scale_shape::renormalize(kind, &sigma)?;
    let mu = DVector::zeros(cfg.m);
    let labels = cfg.labels();
    let bounds = bound_traces(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CesError::Config(format!("cannot build worker pool: {e}")))?;

    let mut cells = Vec::new();
    let mut table_cache: HashMap<String, ScoreTable> = HashMap::new();
    for (nu_index, &nu) in cfg.nu_grid.iter().enumerate() {
        let gen = DensityGenerator::student_t(nu)?;
        let mut slots = Vec::new();
        let mut tables = Vec::new();
        for e in &cfg.estimators {
            match e {
                EstimatorKind::Scm => slots.push(Slot::Scm),
                EstimatorKind::Tyler => slots.push(Slot::Tyler),
                EstimatorKind::R => {
                    for s in &cfg.scores {
                        let score = s.resolve(nu);
                        let key = score.name();
                        let table = match table_cache.get(&key) {
                            Some(t) => t.clone(),
                            None => {
                                let t = ScoreTable::new(score, cfg.m, cfg.n)?;
                                table_cache.insert(key, t.clone());
                                t
                            }
                        };
                        slots.push(Slot::R(tables.len()));
                        tables.push(table);
                    }
                }
            }
        }

        // collect() keeps trial order, so the reduction below is the same for any pool size
        let per_trial: Vec<Vec<Option<f64>>> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(cfg.root_seed, nu_index, t);
                    match gen.sample_with(&mut rng, cfg.n, &mu, &sigma) {
                        Ok(data) => run_trial(&data, cfg, &slots, &tables, &v0),
                        Err(_) => vec![None; slots.len()],
                    }
                })
                .collect()
        });

        for (j, label) in labels.iter().enumerate() {
            let errs: Vec<f64> = per_trial.iter().filter_map(|r| r[j]).collect();
            let failures = cfg.trials - errs.len();
            let mse = if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 };
            cells.push(CellResult {
                nu,
                estimator: label.clone(),
                mse,
                std_err: estimators::std_err(&errs),
                trials_ok: errs.len(),
                failures,
                valid: !errs.is_empty() && failures as f64 <= MAX_FAILURE_RATE * cfg.trials as f64,
            });
        }
    }
    Ok(SimResult {
        scale_kind: kind,
        m: cfg.m,
        n: cfg.n,
        trials: cfg.trials,
        root_seed: cfg.root_seed,
        cells,
        bounds,
    })
}
