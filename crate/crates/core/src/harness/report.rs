//! Bound and adaptivity reports.

use std::fmt::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{AdaptivitySpec, BoundsSpec, ModelSpec};
use crate::adaptivity::{self, AdaptivityReport};
use crate::bounds::{self, BoundSet, ChainReport};
use crate::error::{CesError, Result};
use crate::scale_shape;

pub struct BoundsReport {
    pub spec: BoundsSpec,
    pub sets: Vec<BoundSet>,
    pub chain: ChainReport,
}

pub fn report_bounds(spec: &BoundsSpec) -> Result<BoundsReport> {
    spec.validate()?;
    let gens = spec.parsed_generators()?;
    let sigma = spec.sigma();
    let v = scale_shape::renormalize(spec.scale_kind, &sigma)?;
    let sets = gens.iter().map(|g| bounds::bound_set(spec.scale_kind, &sigma, g)).collect::<Result<Vec<_>>>()?;
    let chain = bounds::verify_chain(spec.scale_kind, &v, &gens, spec.m)?;
    Ok(BoundsReport { spec: spec.clone(), sets, chain })
}

fn push_matrix(w: &mut csv::Writer<Vec<u8>>, gen: &str, block: &str, a: &DMatrix<f64>) -> Result<()> {
    // row-major
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            w.write_record([gen.to_string(), block.to_string(), i.to_string(), j.to_string(), format!("{:.16e}", a[(i, j)])])?;
        }
    }
    Ok(())
}

impl BoundsReport {
    /// Long-format CSV of every bound matrix, one entry per row, 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["generator", "block", "row", "col", "value"])?;
        for s in &self.sets {
            let g = s.generator.name();
            push_matrix(&mut w, &g, "crb_mu", &s.crb_mu)?;
            push_matrix(&mut w, &g, "crb_shape", &s.crb_shape)?;
            push_matrix(&mut w, &g, "crb_scale", &DMatrix::from_element(1, 1, s.crb_scale))?;
            push_matrix(&mut w, &g, "psi_cross", &DMatrix::from_column_slice(s.psi_cross.len(), 1, s.psi_cross.as_slice()))?;
            push_matrix(&mut w, &g, "crb_vecs_sigma", &s.crb_vecs_sigma)?;
        }
        let bytes = w.into_inner().map_err(|e| CesError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn chain_json(&self) -> String {
        serde_json::to_string_pretty(&self.chain).expect("report serializes")
    }

    /// Trace summary and chain table, 12 significant digits.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Shape bounds: m = {}, Toeplitz rho = {}, scale {}",
            self.spec.m,
            self.spec.rho,
            self.spec.scale_kind.name()
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>19} {:>19} {:>19} {:>19}",
            "generator", "tr CRB(mu)", "tr SCRB(V)", "tr CRB(V|s,g)", "CRB(s)"
        );
        for (s, g) in self.sets.iter().zip(&self.chain.generators) {
            let _ = writeln!(
                out,
                "{:<10} {:>19.11e} {:>19.11e} {:>19.11e} {:>19.11e}",
                g.generator,
                s.crb_mu.trace(),
                s.crb_shape.trace(),
                g.no_nuisance_trace,
                s.crb_scale
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Chain of shape bounds");
        for g in &self.chain.generators {
            for l in &g.links {
                let verdict = match (l.passed, l.expected_equal) {
                    (true, true) => "equal",
                    (true, false) => "gap (expected)",
                    (false, true) => "FAIL: not equal",
                    (false, false) => "FAIL: gap missing",
                };
                let gap = match (l.gap_min_eig, l.gap_max_eig) {
                    (Some(lo), Some(hi)) => format!("  gap eig [{lo:.3e}, {hi:.3e}]"),
                    _ => String::new(),
                };
                let _ = writeln!(
                    out,
                    "  {:<10} {:<46} [{}] rel {:.3e}  {verdict}{gap}",
                    g.generator, l.name, l.status, l.rel_error
                );
            }
        }
        let _ = writeln!(out, "chain {}", if self.chain.passed { "verified" } else { "FAILED" });
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptivityEntry {
    pub generator: String,
    pub report: AdaptivityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptivityOutcome {
    pub model: ModelSpec,
    pub interest_dim: usize,
    pub nuisance_dim: usize,
    pub entries: Vec<AdaptivityEntry>,
}

impl AdaptivityOutcome {
    /// True when the residual test and the FIM comparison agree for every generator.
    pub fn consistent(&self) -> bool {
        self.entries.iter().all(|e| {
            // a zero residual forces a zero gap; the converse fails only for Gaussian data
            !e.report.condition.satisfied || e.report.adaptive
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Adaptivity: model {:?}", self.model);
        let _ = writeln!(out, "interest dim {}, nuisance dim {}", self.interest_dim, self.nuisance_dim);
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>10} {:>19} {:>19} {:>12} {:>9}",
            "generator", "residual", "condition", "tr I_eff(param)", "tr I_eff(semi)", "rel gap", "adaptive"
        );
        for e in &self.entries {
            let r = &e.report;
            let _ = writeln!(
                out,
                "{:<10} {:>12.3e} {:>10} {:>19.11e} {:>19.11e} {:>12.3e} {:>9}",
                e.generator,
                r.condition.residual_inf,
                if r.condition.satisfied { "holds" } else { "fails" },
                r.parametric_trace,
                r.semiparametric_trace,
                r.relative_gap,
                if r.adaptive { "yes" } else { "no" }
            );
        }
        out
    }
}

pub fn report_adaptivity(spec: &AdaptivitySpec) -> Result<AdaptivityOutcome> {
    spec.validate()?;
    let (param, theta0) = spec.model.build()?;
    let m = spec.model.m();
    let mut entries = Vec::new();
    for gen in spec.parsed_generators()? {
        entries.push(AdaptivityEntry {
            generator: gen.name(),
            report: adaptivity::verify_adaptivity_by_fim(&param, &theta0, &gen, m)?,
        });
    }
    Ok(AdaptivityOutcome {
        model: spec.model.clone(),
        interest_dim: param.q,
        nuisance_dim: param.r(),
        entries,
    })
}
