//! JSON configuration shared by all subcommands.
//!
//! One document holds a section per subcommand; every section and every
//! field has a default, so `{"schema": 1}` is a complete configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adaptivity::{LowRankModel, Parameterization};
use crate::elliptical::DensityGenerator;
use crate::error::{CesError, Result};
use crate::estimators::ScoreFunction;
use crate::linalg;
use crate::matcalc;
use crate::scale_shape::ScaleFunctional;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRIALS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub adaptivity: AdaptivitySpec,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema: SCHEMA_VERSION,
            simulation: SimConfig::default(),
            bounds: BoundsSpec::default(),
            adaptivity: AdaptivitySpec::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CesError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(CesError::Config(format!(
                "unsupported schema {} (this build reads schema {SCHEMA_VERSION})",
                self.schema
            )));
        }
        self.simulation.validate()?;
        self.bounds.validate()?;
        self.adaptivity.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Scm,
    Tyler,
    /// One R-estimator per entry of `scores`, with the Tyler estimate as preliminary.
    R,
}

/// Score of an R-estimator: fixed, or the t-score matched to the simulated `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoreSpec {
    Fixed(ScoreFunction),
    Matched,
}

impl ScoreSpec {
    pub fn resolve(&self, nu: f64) -> ScoreFunction {
        match self {
            ScoreSpec::Fixed(k) => *k,
            ScoreSpec::Matched => ScoreFunction::TScore(nu),
        }
    }
}

impl fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSpec::Fixed(k) => write!(f, "{k}"),
            ScoreSpec::Matched => f.write_str("t-matched"),
        }
    }
}

impl FromStr for ScoreSpec {
    type Err = CesError;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("t-matched") {
            return Ok(ScoreSpec::Matched);
        }
        Ok(ScoreSpec::Fixed(s.parse()?))
    }
}

impl TryFrom<String> for ScoreSpec {
    type Error = CesError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScoreSpec> for String {
    fn from(s: ScoreSpec) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub m: usize,
    pub n: usize,
    /// Toeplitz correlation, `[Σ]ᵢⱼ = ρ^{|i-j|}`.
    pub rho: f64,
    pub nu_grid: Vec<f64>,
    pub trials: usize,
    pub scale_kind: ScaleFunctional,
    pub estimators: Vec<EstimatorKind>,
    pub scores: Vec<ScoreSpec>,
    pub root_seed: u64,
    /// Worker threads; 0 uses every available core. Results do not depend on it.
    pub parallelism: usize,
    /// R-steps; `None` uses the per-scale default.
    pub r_iterations: Option<usize>,
    pub svg: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            m: 4,
            n: 100,
            rho: 0.8,
            nu_grid: vec![2.1, 3.0, 5.0, 10.0, 20.0],
            trials: DEFAULT_TRIALS,
            scale_kind: ScaleFunctional::FirstElement,
            estimators: vec![EstimatorKind::Scm, EstimatorKind::Tyler, EstimatorKind::R],
            scores: vec![ScoreSpec::Fixed(ScoreFunction::VanDerWaerden), ScoreSpec::Matched],
            root_seed: 20_240_601,
            parallelism: 0,
            r_iterations: None,
            svg: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CesError::Config(msg));
        if self.m < 2 {
            return bad(format!("simulation.m must be at least 2, got {}", self.m));
        }
        if self.n <= matcalc::half_len(self.m) {
            return bad(format!("simulation.n must exceed m(m+1)/2 = {}", matcalc::half_len(self.m)));
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("simulation.rho must lie in (-1, 1), got {}", self.rho));
        }
        if self.trials < 1 {
            return bad("simulation.trials must be at least 1".into());
        }
        if self.nu_grid.is_empty() {
            return bad("simulation.nu_grid is empty".into());
        }
        if let Some(nu) = self.nu_grid.iter().find(|&&nu| !(nu > 2.0) || !nu.is_finite()) {
            return bad(format!("simulation.nu_grid entries must be finite and > 2, got {nu}"));
        }
        if self.estimators.is_empty() {
            return bad("simulation.estimators is empty".into());
        }
        if self.estimators.contains(&EstimatorKind::R) && self.scores.is_empty() {
            return bad("simulation.scores is empty but the R-estimator is requested".into());
        }
        Ok(())
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        linalg::toeplitz(self.m, self.rho)
    }

    /// Estimator labels in output order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.estimators {
            match e {
                EstimatorKind::Scm => out.push("scm".to_string()),
                EstimatorKind::Tyler => out.push("tyler".to_string()),
                EstimatorKind::R => out.extend(self.scores.iter().map(|s| format!("r-{s}"))),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub m: usize,
    pub rho: f64,
    pub scale_kind: ScaleFunctional,
    pub generators: Vec<String>,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        BoundsSpec {
            m: 4,
            rho: 0.8,
            scale_kind: ScaleFunctional::FirstElement,
            generators: vec!["gaussian".into(), "t:6".into(), "t:8".into(), "gg:0.5".into()],
        }
    }
}

impl BoundsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(CesError::Config(format!("bounds.m must be at least 2, got {}", self.m)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(CesError::Config(format!("bounds.rho must lie in (-1, 1), got {}", self.rho)));
        }
        self.parsed_generators().map(|_| ())
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        linalg::toeplitz(self.m, self.rho)
    }

    pub fn parsed_generators(&self) -> Result<Vec<DensityGenerator>> {
        if self.generators.is_empty() {
            return Err(CesError::Config("bounds.generators is empty".into()));
        }
        self.generators.iter().map(|g| DensityGenerator::parse(g)).collect()
    }
}

/// Built-in parameterized models for the adaptivity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `μ = γ` (all of R^m), `Σ = ξ₁ I + ξ₂ T` with `T` the first off-diagonal pattern.
    Split { m: usize },
    ShapeScale { m: usize, rho: f64, scale_kind: ScaleFunctional },
    LowRank { m: usize, gamma0: Vec<f64>, signal_power: f64, noise_level: f64 },
    Breaking { m: usize, rho: f64 },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::LowRank { m: 6, gamma0: vec![0.4, 1.1], signal_power: 1.0, noise_level: 0.5 }
    }
}

impl ModelSpec {
    pub fn m(&self) -> usize {
        match self {
            ModelSpec::Split { m }
            | ModelSpec::ShapeScale { m, .. }
            | ModelSpec::LowRank { m, .. }
            | ModelSpec::Breaking { m, .. } => *m,
        }
    }

    /// The parameterization and the point `θ₀` it is evaluated at.
    pub fn build(&self) -> Result<(Parameterization, DVector<f64>)> {
        match self {
            ModelSpec::Split { m } => {
                let m = *m;
                let mut t = DMatrix::zeros(m, m);
                for i in 0..m.saturating_sub(1) {
                    t[(i, i + 1)] = 1.0;
                    t[(i + 1, i)] = 1.0;
                }
                let param = Parameterization::split_linear(DMatrix::identity(m, m), vec![DMatrix::identity(m, m), t])?;
                let mut theta = DVector::zeros(m + 2);
                for i in 0..m {
                    theta[i] = 0.1 * (i as f64 + 1.0);
                }
                theta[m] = 2.0;
                theta[m + 1] = 0.5;
                Ok((param, theta))
            }
            ModelSpec::ShapeScale { m, rho, scale_kind } => {
                let param = Parameterization::shape_scale(*scale_kind, *m)?;
                let theta = Parameterization::shape_scale_theta(*scale_kind, &DVector::zeros(*m), &linalg::toeplitz(*m, *rho))?;
                Ok((param, theta))
            }
            ModelSpec::LowRank { m, gamma0, signal_power, noise_level } => {
                let p = gamma0.len();
                let model = LowRankModel::sinusoidal(
                    *m,
                    DVector::from_column_slice(gamma0),
                    DMatrix::identity(p, p) * *signal_power,
                    *noise_level,
                );
                Ok((crate::adaptivity::low_rank_parameterization(&model)?, model.theta0()))
            }
            ModelSpec::Breaking { m, rho } => {
                let param = Parameterization::breaking(linalg::toeplitz(*m, *rho));
                let mut theta = DVector::zeros(m + 1);
                theta[0] = 1.5;
                Ok((param, theta))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CesError::Config(msg));
        match self {
            ModelSpec::Split { m } if *m < 2 => bad("adaptivity split model needs m >= 2".into()),
            ModelSpec::ShapeScale { m, rho, .. } | ModelSpec::Breaking { m, rho } if *m < 2 || !(rho.abs() < 1.0) => {
                bad("adaptivity model needs m >= 2 and |rho| < 1".into())
            }
            ModelSpec::LowRank { m, gamma0, signal_power, noise_level } => {
                if gamma0.is_empty() || gamma0.len() >= *m {
                    bad(format!("low-rank model needs 1 <= p < m, got p = {}, m = {m}", gamma0.len()))
                } else if !(*signal_power > 0.0) || !(*noise_level > 0.0) {
                    bad("low-rank model needs positive signal power and noise level".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptivitySpec {
    pub model: ModelSpec,
    pub generators: Vec<String>,
}

impl Default for AdaptivitySpec {
    fn default() -> Self {
        AdaptivitySpec { model: ModelSpec::default(), generators: vec!["gaussian".into(), "t:8".into()] }
    }
}

impl AdaptivitySpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.parsed_generators().map(|_| ())
    }

    pub fn parsed_generators(&self) -> Result<Vec<DensityGenerator>> {
        if self.generators.is_empty() {
            return Err(CesError::Config("adaptivity.generators is empty".into()));
        }
        self.generators.iter().map(|g| DensityGenerator::parse(g)).collect()
    }
}
