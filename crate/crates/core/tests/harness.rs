use std::fs;
use std::path::{Path, PathBuf};

use scors::harness::{
    parse_config, read_trace_csv, run_experiment, ConfigDocument, ExperimentConfig, HarnessError,
    MANIFEST_FILE, SUMMARY_FILE,
};

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let mut doc = ConfigDocument::parse(text).unwrap();
    doc.set("out", out.display().to_string()).unwrap();
    doc.resolve().unwrap()
}

fn preset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(name)
}

#[test]
fn every_preset_parses() {
    let mut n = 0;
    for entry in fs::read_dir(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 8);
}

#[test]
fn convergence_writes_one_curve_per_sampler_against_cost() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = convergence\nfamily = quadratic\nd = 10\nsamplers = U,G,S,SGD\nbudget = 1e6\n",
        dir.path(),
    );
    let art = run_experiment(&cfg).unwrap();
    let traces: Vec<_> = art.file_with_role("trace").collect();
    assert_eq!(traces.len(), 4);
    for f in traces {
        let snaps = read_trace_csv(&f.path).unwrap();
        let last = snaps.last().unwrap();
        // Every curve ends at the shared coordinate budget.
        assert!(last.cumulative_cost <= 1_000_000 && last.cumulative_cost > 1_000_000 - 10);
        assert!(snaps
            .windows(2)
            .all(|w| w[0].cumulative_cost < w[1].cumulative_cost));
    }
    assert!(art.summary_value("u_le_sgd_count").is_some());
}

#[test]
fn manifest_lists_existing_non_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = gamma_check\nd = 4\nmc_draws = 1e4\n",
        dir.path(),
    );
    let art = run_experiment(&cfg).unwrap();
    let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    for line in manifest.lines() {
        let (_, file) = line.split_once('\t').unwrap();
        assert!(
            fs::metadata(dir.path().join(file)).unwrap().len() > 0,
            "{file}"
        );
    }
    for f in &art.files {
        assert!(f.path.exists());
    }
    let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert!(summary.contains("status = ok"));
    assert!(summary.contains("gamma.NU.rel_error"));
}

#[test]
fn scalar_clt_through_the_harness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = clt\nd = 1\nlambda_min = 1\nlambda_max = 1\nsamplers = U\nreplicates = 400\niterations = 1e5\n",
        dir.path(),
    );
    let art = run_experiment(&cfg).unwrap();
    let err = art.summary_f64("clt.U.rel_frobenius_error").unwrap();
    assert!(err <= 0.15, "{err}");
    assert_eq!(art.file_with_role("clt_terminal").count(), 1);
}

#[test]
fn inadmissible_hessian_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = config(
        "experiment = clt\nd = 2\nlambda_min = 0.4\nsamplers = U\nreplicates = 4\niterations = 100\n",
        &out,
    );
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(matches!(err, HarnessError::Asymptotics(_)), "{err}");
    assert!(!out.exists());
}

#[test]
fn mse_reports_step_condition_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = mse\nd = 2\nlambda_min = 0.4\nlambda_max = 1\nsamplers = U\nreplicates = 4\niterations = 1e3\n",
        dir.path(),
    );
    let art = run_experiment(&cfg).unwrap();
    let w = art.summary_value("warning.0").unwrap();
    assert!(w.contains("2cμ > 1"), "{w}");
}

#[test]
fn adaptive_nu_convergence_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = convergence\nfamily = logistic\nN = 300\nd = 5\nsamplers = NU\nnu_mode = adaptive\nc = 0.3\nalpha = 0.7\nbudget = 2e4\nreplicates = 2\n",
        dir.path(),
    );
    let art = run_experiment(&cfg).unwrap();
    assert_eq!(art.file_with_role("trace").count(), 2);
    assert!(art.summary_f64("gap.NU.median").unwrap() < 1.0);
}

#[test]
fn timing_orders_u_before_nu() {
    // The logistic desk instance: N = 5000, d = 50, 10^6 iterations.
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(preset("timing_logistic.conf")).unwrap();
    let cfg = config(&text, dir.path());
    let art = run_experiment(&cfg).unwrap();
    assert_eq!(art.summary_value("timing.u_faster_than_nu"), Some("true"));
    assert_eq!(art.summary_f64("timing.U.ratio_to_u"), Some(1.0));
    assert!(art.summary_f64("timing.NU.ratio_to_u").unwrap() > 1.0);
    let csv = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    let nu = csv.lines().find(|l| l.starts_with("NU,")).unwrap();
    let reference: f64 = nu.split(',').nth(3).unwrap().parse().unwrap();
    assert!((reference - 12.01e-6).abs() < 1e-12);
}
