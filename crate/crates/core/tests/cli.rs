use std::path::Path;
use std::process::{Command, Output};

use lbc::dataset::SampleSet;

fn lbc(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lbc"));
    cmd.args(args);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().expect("spawn lbc")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--set", "lattice=4",
    "--set", "grid_points=4",
    "--set", "m_train=12",
    "--set", "m_valid=12",
    "--set", "thermalization_sweeps=100",
    "--set", "hidden=6",
];

fn small(cmd: &str, extra: &[&str]) -> Vec<String> {
    std::iter::once(cmd).chain(SMALL.iter().copied()).chain(extra.iter().copied()).map(String::from).collect()
}

fn run_small(cmd: &str, extra: &[&str], out: &Path) -> Output {
    let args = small(cmd, extra);
    lbc(&args.iter().map(String::as_str).collect::<Vec<_>>(), Some(out))
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn sample_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for (dir, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let o = run_small("sample", &["--seed", seed], &tmp.path().join(dir));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("samples.lbcd")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let samples = SampleSet::load(&tmp.path().join("a").join("samples.lbcd")).unwrap();
    assert_eq!((samples.grid().len(), samples.samples_at(0), samples.feature_dim()), (4, 24, 16));
}

#[test]
fn zero_samples_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_small("sample", &["--set", "samples_per_point=0"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for extra in [
        &["--mode", "sideways"][..],
        &["--mode", "single"],
        &["--mode", "single", "--nodes", "3"],
        &["--set", "no_such_key=1"],
        &["--lr", "-1"],
    ] {
        let o = run_small("run", extra, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{extra:?}: {}", stderr(&o));
    }
    // node out of range is reported before any output is written
    assert!(!tmp.path().join("summary.csv").exists());
    assert_eq!(lbc(&["run", "--bogus-flag"], None).status.code(), Some(2));
    assert_eq!(lbc(&["oracle", "--lattice", "6"], None).status.code(), Some(2));
}

#[test]
fn malformed_csv_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "grid_index,f0,f1\n0,1,2\n0,1,2\n1,3,x\n1,3,4\n").unwrap();
    let o = lbc(&["ingest", csv.to_str().unwrap(), "--set", "m_train=1", "--set", "m_valid=1"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    std::fs::write(&csv, "0,1,2\n0,1\n1,3,4\n1,3,4\n").unwrap();
    let o = lbc(&["ingest", csv.to_str().unwrap(), "--set", "m_train=1", "--set", "m_valid=1"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ragged"), "{}", stderr(&o));

    std::fs::write(&csv, "0,1,2\n0,1,2\n2,3,4\n2,3,4\n").unwrap();
    let o = lbc(&["ingest", csv.to_str().unwrap(), "--grid", "1,2"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn ingest_fixed_split_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("emb.csv");
    let mut text = String::new();
    for p in 0..5 {
        for i in 0..27 {
            text.push_str(&format!("{p},{},{}\n", i as f32 * 0.5, p as f32 - 0.25));
        }
    }
    std::fs::write(&csv, text).unwrap();
    let out = tmp.path().join("out");
    let o = lbc(
        &["ingest", csv.to_str().unwrap(), "--grid", "1920,1940,1960,1980,2000", "--set", "m_train=16", "--set", "m_valid=11"],
        Some(&out),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let msg = String::from_utf8_lossy(&o.stdout);
    assert!(msg.contains("80 train / 55 validation"), "{msg}");
    let stored = SampleSet::load(&out.join("dataset.lbcd")).unwrap();
    assert_eq!(stored.grid().values(), &[1920.0, 1940.0, 1960.0, 1980.0, 2000.0]);
    assert_eq!(stored.total_samples(), 135);

    // binary input with a conflicting grid is rejected
    let path = out.join("dataset.lbcd");
    let o = lbc(&["ingest", path.to_str().unwrap(), "--grid", "1,2,3,4,5"], Some(&tmp.path().join("again")));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_outputs_and_plot_independence() {
    let tmp = tempfile::tempdir().unwrap();
    let with_plot = tmp.path().join("plot");
    let without = tmp.path().join("noplot");
    let extra = ["--mode", "both", "--nodes", "0,2", "--epochs", "4", "--batch", "16", "--seed", "3"];
    let o = run_small("run", &extra, &with_plot);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut extra_no = extra.to_vec();
    extra_no.push("--no-plot");
    assert!(run_small("run", &extra_no, &without).status.success());

    for f in ["curves_run0.csv", "summary.csv", "traces.csv", "curves.svg", "traces.svg", "model_run0.lbcm", "model_run0_node2.lbcm"] {
        assert!(with_plot.join(f).exists(), "missing {f}");
    }
    assert!(!without.join("curves.svg").exists());
    assert_eq!(csvs(&with_plot), csvs(&without));

    std::fs::remove_file(with_plot.join("curves.svg")).unwrap();
    assert_eq!(csvs(&with_plot), csvs(&without));

    let summary = std::fs::read_to_string(with_plot.join("summary.csv")).unwrap();
    assert!(summary.starts_with("run,source,curve,argmin_node,boundary,error,tied\n"));
    assert!(summary.lines().any(|l| l.starts_with("mean,multi,final,")));
    assert!(summary.lines().any(|l| l.starts_with("mean,single,final,")));
    let traces = std::fs::read_to_string(with_plot.join("traces.csv")).unwrap();
    // 2 nodes × 2 sources × 5 recorded epochs
    assert_eq!(traces.lines().count(), 1 + 20);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    std::fs::write(&cfg, "# small run\nepochs = 2\nbatch_size = 16\nmode = bayes\nmin_over_epochs = true\n").unwrap();
    let out = tmp.path().join("out");
    let mut args = small("run", &["--config", cfg.to_str().unwrap(), "--epochs", "3"]);
    args.push("--no-plot".into());
    let o = lbc(&args.iter().map(String::as_str).collect::<Vec<_>>(), Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let rendered = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(rendered.contains("epochs = 3\n") && rendered.contains("mode = bayes\n"));
    let curves = std::fs::read_to_string(out.join("curves_run0.csv")).unwrap();
    assert_eq!(curves.lines().filter(|l| l.ends_with(",bayes")).count(), 3);
    assert_eq!(curves.lines().filter(|l| l.ends_with(",multi")).count(), 4 * 3);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("0,multi,min_over_epochs,") && summary.contains("0,bayes,bayes,"));
}

#[test]
fn bayes_mode_on_non_spin_data_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("x.csv");
    std::fs::write(&csv, "0,0.5\n0,0.2\n1,0.1\n1,0.3\n").unwrap();
    let data = format!("data={}", csv.display());
    let o = lbc(
        &["run", "--mode", "bayes", "--set", &data, "--set", "m_train=1", "--set", "m_valid=1", "--set", "hidden=2"],
        Some(tmp.path()),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_small("run", &["--lr", "1e300", "--epochs", "5", "--batch", "4"], tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn oracle_table() {
    let o = lbc(&["oracle", "--lattice", "2", "--temps", "1,2"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lattice,temperature,log_partition,mean_energy,energy_variance,mean_abs_magnetization");
    let log_z: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    let z = 2.0 * 8f64.exp() + 12.0 + 2.0 * (-8f64).exp();
    assert!((log_z - z.ln()).abs() < 1e-12);
}

#[test]
fn benchmark_writes_deterministic_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = ["--epochs", "2", "--batch", "16", "--ks", "1,3", "--thresholds", "0.4,0.2"];
    for d in ["a", "b"] {
        let o = run_small("benchmark", &extra, &tmp.path().join(d));
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("speedup"));
    }
    let a = csvs(&tmp.path().join("a"));
    assert_eq!(a, csvs(&tmp.path().join("b")));
    assert_eq!(a.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(), ["benchmark_curves.csv", "thresholds.csv"]);
    assert!(tmp.path().join("a").join("report.txt").exists());
    let o = run_small("benchmark", &["--ks", "2"], &tmp.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
}
