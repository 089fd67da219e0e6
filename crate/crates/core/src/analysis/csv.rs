use std::fmt::Write as _;
use std::path::Path;

use super::Projection2D;
use crate::error::{Error, Result};
use crate::federation::RoundReport;

pub const ROUND_HEADER: &str = "round,accuracy,kept,excluded,filter_precision,filter_recall,filter_accuracy";
pub const PROJECTION_HEADER: &str = "round,client_id,role,x,y";

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One row per round.
pub fn write_round_csv(reports: &[RoundReport], path: impl AsRef<Path>) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("no round reports to write"));
    }
    let mut out = String::from(ROUND_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{:.6},{},{},{:.6},{:.6},{:.6}",
            r.round,
            r.accuracy,
            r.kept(),
            r.excluded(),
            r.metrics.precision,
            r.metrics.recall,
            r.metrics.accuracy
        )
        .expect("write to String");
    }
    write(path.as_ref(), &out)
}

/// One row per projected client.
pub fn write_projection_csv(proj: &Projection2D, round: usize, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(PROJECTION_HEADER);
    out.push('\n');
    for p in &proj.points {
        writeln!(out, "{},{},{},{:.6},{:.6}", round, p.client_id, p.role, p.x, p.y).expect("write to String");
    }
    write(path.as_ref(), &out)
}
