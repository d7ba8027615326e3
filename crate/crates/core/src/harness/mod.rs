//! Configuration, Monte Carlo simulation, reports and the invariant suite behind the CLI.

pub mod config;
pub mod report;
pub mod sim;
pub mod svg;
pub mod verify;

use std::path::{Path, PathBuf};

pub use config::{AdaptivitySpec, BoundsSpec, Config, EstimatorKind, ModelSpec, ScoreSpec, SimConfig, SCHEMA_VERSION};
pub use report::{report_adaptivity, report_bounds, AdaptivityOutcome, BoundsReport};
pub use sim::{run_simulation, BoundTraces, CellResult, SimResult};
pub use verify::{run_invariant_suite, Level, SuiteReport, VerifyOptions};

use crate::error::Result;

/// Writes `mse_<scale>.csv`, its metadata JSON and (if enabled) the SVG chart into `dir`.
pub fn write_simulation(result: &SimResult, cfg: &SimConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("mse_{}", result.scale_kind.name());
    let mut written = Vec::new();
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, result.to_csv()?)?;
    written.push(csv);
    let meta = dir.join(format!("{stem}.meta.json"));
    std::fs::write(&meta, serde_json::to_string_pretty(&result.metadata(cfg))?)?;
    written.push(meta);
    if cfg.svg {
        let svg = dir.join(format!("{stem}.svg"));
        std::fs::write(&svg, svg::render(result))?;
        written.push(svg);
    }
    Ok(written)
}
