//! Sweep driver behind the `probefl` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use probefl_core::analysis::{write_projection_csv, write_round_csv, Projection2D};
use probefl_core::federation::{run_experiment, RoundReport};
use probefl_core::seed::{derive, TAG_SWEEP};
use probefl_core::{Error, ExperimentConfig, Result};

pub const SUMMARY_HEADER: &str =
    "noise_ratio,abnormal_subjects,final_accuracy_filter,final_accuracy_no_filter";

/// One experiment of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub noise_ratio: f64,
    pub abnormal: Option<usize>,
}

impl SweepPoint {
    fn tag(&self) -> String {
        match self.abnormal {
            Some(a) => format!("r{:.2}_a{a}", self.noise_ratio),
            None => format!("r{:.2}", self.noise_ratio),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: SweepPoint,
    pub abnormal_subjects: usize,
    pub accuracy_filter: Option<f64>,
    pub accuracy_no_filter: Option<f64>,
}

/// Cartesian product of the ratio and abnormal-count sweeps; a missing list
/// contributes the single configured value.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let ratios = if cfg.sweep_noise_ratios.is_empty() {
        vec![cfg.noise_ratio]
    } else {
        cfg.sweep_noise_ratios.clone()
    };
    let counts: Vec<Option<usize>> = if cfg.sweep_abnormal_counts.is_empty() {
        vec![None]
    } else {
        cfg.sweep_abnormal_counts.iter().copied().map(Some).collect()
    };
    ratios
        .iter()
        .flat_map(|&r| counts.iter().map(move |&a| SweepPoint { noise_ratio: r, abnormal: a }))
        .collect()
}

/// Configuration of a single sweep point. Points of a real sweep get seeds
/// derived from the master seed and their own coordinates.
pub fn point_config(cfg: &ExperimentConfig, point: &SweepPoint) -> ExperimentConfig {
    let mut out = match point.abnormal {
        Some(a) => cfg.with_abnormal_subjects(a),
        None => cfg.clone(),
    };
    out.noise_ratio = point.noise_ratio;
    if !cfg.sweep_noise_ratios.is_empty() || !cfg.sweep_abnormal_counts.is_empty() {
        let a = point.abnormal.map_or(u64::MAX, |a| a as u64);
        out.seed = derive(&[cfg.seed, TAG_SWEEP, point.noise_ratio.to_bits(), a]);
    }
    out.sweep_noise_ratios.clear();
    out.sweep_abnormal_counts.clear();
    out
}

/// Tracks files written so a failed run can remove them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn final_accuracy(reports: &[RoundReport]) -> Option<f64> {
    reports.last().map(|r| r.accuracy)
}

fn write_point(out: &mut Outputs, cfg: &ExperimentConfig, point: &SweepPoint) -> Result<SummaryRow> {
    let pcfg = point_config(cfg, point);
    let tag = point.tag();
    let run = run_experiment(&pcfg)?;
    write_round_csv(&run.reports, out.path(&format!("metrics_{tag}.csv")))?;
    let first = run.reports.first().expect("rounds >= 1");
    let last = run.reports.last().expect("rounds >= 1");
    for report in [first, last] {
        let proj = Projection2D::from_report(report)?;
        let name = format!("projection_{tag}_round{}.csv", report.round);
        write_projection_csv(&proj, report.round, out.path(&name))?;
        if first.round == last.round {
            break;
        }
    }

    let mut row = SummaryRow {
        point: point.clone(),
        abnormal_subjects: pcfg.subject_abnormal,
        accuracy_filter: None,
        accuracy_no_filter: None,
    };
    if pcfg.train.filter_enabled {
        row.accuracy_filter = final_accuracy(&run.reports);
        if cfg.compare {
            let mut base = pcfg.clone();
            base.train.filter_enabled = false;
            let baseline = run_experiment(&base)?;
            write_round_csv(&baseline.reports, out.path(&format!("metrics_{tag}_nofilter.csv")))?;
            row.accuracy_no_filter = final_accuracy(&baseline.reports);
        }
    } else {
        row.accuracy_no_filter = final_accuracy(&run.reports);
    }
    Ok(row)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{:.6},{},{},{}",
            r.point.noise_ratio,
            r.abnormal_subjects,
            fmt_opt(r.accuracy_filter),
            fmt_opt(r.accuracy_no_filter)
        )
        .expect("write to String");
    }
    s
}

fn run_points(out: &mut Outputs, cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    cfg.validate()?;
    if cfg.train.rounds == 0 {
        return Err(Error::Config {
            key: "rounds".into(),
            message: "nothing to run with zero rounds".into(),
        });
    }
    std::fs::create_dir_all(&out.dir).map_err(|e| Error::Io { path: out.dir.clone(), source: e })?;
    let mut rows = Vec::new();
    for point in sweep_points(cfg) {
        log(&format!("running {}", point.tag()));
        rows.push(write_point(out, cfg, &point)?);
    }
    let path = out.path("summary.csv");
    std::fs::write(&path, summary_csv(&rows)).map_err(|e| Error::Io { path, source: e })?;
    Ok(rows)
}

fn log(msg: &str) {
    if std::env::var_os("PROBEFL_QUIET").is_none() {
        eprintln!("probefl: {msg}");
    }
}

/// Runs every sweep point and writes all CSV outputs into `cfg.out_dir`.
/// Files written by a failed invocation are removed.
pub fn run_main(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    let mut out = Outputs { dir: cfg.out_dir.clone(), written: Vec::new() };
    let result = run_points(&mut out, cfg);
    if result.is_err() {
        out.discard();
    }
    result
}

/// Lists files under `dir` relative to it, sorted.
pub fn list_outputs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| PathBuf::from(e.file_name())))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    Ok(names)
}
