//! Experiment driver: runs the adaptive loop for a [`RunConfig`] and
//! renders the trace as CSV.

use std::fmt::Write;

use crate::adaptivity::{adaptive_loop, AdaptiveTrace, TraceRow};
use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::BoundaryGeometry;
use crate::problem::model_rhs;

pub const CSV_HEADER: &str = "ell,num_elements,dofs,estimator,energy_error,num_marked,seconds";

/// Window of the printed rate fits.
pub const RATE_WINDOW: usize = 4;

pub struct RunOutput {
    pub trace: AdaptiveTrace,
    pub csv: String,
}

/// Runs the model problem of `cfg.geometry`. The output file, if any, is
/// written by the caller.
pub fn run(cfg: &RunConfig, progress: impl FnMut(&TraceRow)) -> Result<RunOutput> {
    cfg.validate()?;
    let geom = BoundaryGeometry::by_name(&cfg.geometry)?;
    let lc = cfg.loop_config();
    let f = model_rhs(&geom, &lc.quad)?;
    let trace = adaptive_loop(&geom, &*f, &lc, progress)?;
    let csv = to_csv(&trace.rows, cfg.timing);
    Ok(RunOutput { trace, csv })
}

pub fn to_csv(rows: &[TraceRow], timing: bool) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let err = r.energy_error.map(|e| format!("{e:e}")).unwrap_or_default();
        let secs = if timing { format!("{:.3}", r.seconds) } else { String::new() };
        let _ = writeln!(
            s,
            "{},{},{},{:e},{},{},{}",
            r.ell, r.num_elements, r.dofs, r.estimator, err, r.num_marked, secs
        );
    }
    s
}

/// Fitted rates over the last [`RATE_WINDOW`] points.
pub fn summary(trace: &AdaptiveTrace) -> String {
    let fmt = |r: Result<f64>| r.map(|v| format!("{v:.4}")).unwrap_or_else(|_| "n/a".into());
    format!(
        "estimator rate {}  energy error rate {}  (last {} points)",
        fmt(trace.estimator_rate(RATE_WINDOW)),
        fmt(trace.error_rate(RATE_WINDOW)),
        RATE_WINDOW
    )
}
