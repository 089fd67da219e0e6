use std::path::Path;
use std::process::Command;

use probefl_cli::{list_outputs, run_main, summary_csv, sweep_points, SUMMARY_HEADER};
use probefl_core::config::{parse_config, Overrides};

const TINY: &str = "\
seed = 5
per_client = 20
indicator_normal = 2
indicator_abnormal = 2
subject_normal = 1
subject_abnormal = 1
validation_size = 40
rounds = 2
epochs = 1
batch_size = 10
";

fn tiny(extra: &str, out: &Path) -> probefl_core::ExperimentConfig {
    std::env::set_var("PROBEFL_QUIET", "1");
    let overrides = Overrides { out_dir: Some(out.to_path_buf()), ..Overrides::default() };
    parse_config(&format!("{TINY}{extra}"), &overrides).unwrap()
}

fn names(dir: &Path) -> Vec<String> {
    list_outputs(dir).unwrap().iter().map(|p| p.display().to_string()).collect()
}

#[test]
fn command_line_overrides_file_values() {
    let text = "seed = 3\nnoise_ratio = 0.2\nrounds = 7\nout_dir = from_file\n";
    let cfg = parse_config(text, &Overrides::default()).unwrap();
    assert_eq!((cfg.seed, cfg.noise_ratio, cfg.train.rounds), (3, 0.2, 7));

    let overrides = Overrides {
        seed: Some(9),
        noise_ratio: Some(0.9),
        rounds: Some(2),
        clients: Some(11),
        out_dir: Some("cli".into()),
        no_filter: true,
        default_out_dir: Some("env".into()),
        ..Overrides::default()
    };
    let cfg = parse_config(text, &overrides).unwrap();
    assert_eq!((cfg.seed, cfg.noise_ratio, cfg.train.rounds), (9, 0.9, 2));
    assert_eq!(cfg.out_dir, Path::new("cli"));
    assert!(!cfg.train.filter_enabled);
    assert_eq!((cfg.n_clients, cfg.subject_normal, cfg.subject_abnormal), (11, 4, 3));

    // the environment default sits between the file and the built-in default
    let env_only = Overrides { default_out_dir: Some("env".into()), ..Overrides::default() };
    assert_eq!(parse_config(text, &env_only).unwrap().out_dir, Path::new("from_file"));
    assert_eq!(parse_config("", &env_only).unwrap().out_dir, Path::new("env"));
    assert_eq!(parse_config("", &Overrides::default()).unwrap().out_dir, Path::new("out"));
}

#[test]
fn single_run_writes_metrics_projections_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny("compare = true\n", tmp.path());
    let rows = run_main(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].accuracy_filter.is_some() && rows[0].accuracy_no_filter.is_some());
    assert_eq!(
        names(tmp.path()),
        [
            "metrics_r1.00.csv",
            "metrics_r1.00_nofilter.csv",
            "projection_r1.00_round1.csv",
            "projection_r1.00_round2.csv",
            "summary.csv",
        ]
    );
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary, summary_csv(&rows));
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert!(lines[1].starts_with("1.000000,1,"), "{}", lines[1]);
    let metrics = std::fs::read_to_string(tmp.path().join("metrics_r1.00.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let projection = std::fs::read_to_string(tmp.path().join("projection_r1.00_round2.csv")).unwrap();
    assert_eq!(projection.lines().count(), 1 + 6);
}

#[test]
fn sweep_produces_one_summary_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("sweep_noise_ratios = 0.0, 1.0\nsweep_abnormal_counts = 0, 1\n", tmp.path());
    cfg.train.rounds = 1;
    assert_eq!(sweep_points(&cfg).len(), 4);
    let rows = run_main(&cfg).unwrap();
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + rows.len());
    assert_eq!(rows.iter().map(|r| r.abnormal_subjects).collect::<Vec<_>>(), [0, 1, 0, 1]);
    // single-round runs write one projection per point
    let files = names(tmp.path());
    assert!(files.contains(&"projection_r0.00_a1_round1.csv".to_string()), "{files:?}");
    assert_eq!(files.len(), 4 * 2 + 1);
}

#[test]
fn failed_run_removes_its_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("keep.txt"), "unrelated").unwrap();
    // a directory where the second point's metrics file should go makes that write fail
    std::fs::create_dir(tmp.path().join("metrics_r1.00.csv")).unwrap();
    let cfg = tiny("sweep_noise_ratios = 0.5, 1.0\n", tmp.path());
    assert!(run_main(&cfg).is_err());
    assert_eq!(names(tmp.path()), ["keep.txt", "metrics_r1.00.csv"]);
}

#[test]
fn zero_rounds_is_rejected_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny("", tmp.path());
    let mut zero = cfg.clone();
    zero.train.rounds = 0;
    assert!(run_main(&zero).is_err());
    assert!(names(tmp.path()).is_empty());
}

fn probefl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_probefl"));
    cmd.env("PROBEFL_QUIET", "1").env_remove("PROBEFL_OUT_DIR");
    cmd
}

#[test]
fn binary_prints_summary_and_reports_errors_by_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("tiny.conf");
    std::fs::write(&conf, TINY).unwrap();
    let out_dir = tmp.path().join("out");

    let ok = probefl()
        .args(["--config", conf.to_str().unwrap(), "--rounds", "1", "--threads", "1", "--noise-ratio", "0.5"])
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(stdout, std::fs::read_to_string(out_dir.join("summary.csv")).unwrap());
    assert!(stdout.lines().nth(1).unwrap().starts_with("0.500000,1,"));

    let bad_key = tmp.path().join("bad.conf");
    std::fs::write(&bad_key, "learning_rate = 0.1\n").unwrap();
    let status = probefl().arg("--config").arg(&bad_key).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = probefl().args(["--noise-ratio", "1.5"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // a missing MNIST directory fails at run time, not while parsing
    let missing = tmp.path().join("mnist.conf");
    std::fs::write(&missing, format!("{TINY}dataset = mnist\nmnist_dir = {}\n", tmp.path().join("nope").display()))
        .unwrap();
    let run_err = probefl().arg("--config").arg(&missing).arg("--out-dir").arg(tmp.path().join("m")).status().unwrap();
    assert_eq!(run_err.code(), Some(1));
}

#[test]
fn provided_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = parse_config(&text, &Overrides::default()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!sweep_points(&cfg).is_empty());
        seen += 1;
    }
    assert_eq!(seen, 3);
}
