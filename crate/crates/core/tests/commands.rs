use std::process::Command as Process;

use rdalpha::cli::{cmd_alpha, cmd_bounds, cmd_eval, cmd_pca, cmd_rdcurve, cmd_synth, cmd_train, ModeArg, RunConfig};
use rdalpha::data_io;
use rdalpha::model_file;
use rdalpha::rd::Variant;

fn arithmetic() -> Vec<f64> {
    (1..=10).rev().map(|i| i as f64 / 10.0).collect()
}

fn geometric() -> Vec<f64> {
    (0..10).map(|k| 51.2 / 2f64.powi(k)).collect()
}

fn spectrum_cfg(values: Vec<f64>) -> RunConfig {
    RunConfig {
        eigenvalues: Some(values),
        ..RunConfig::default()
    }
}

#[test]
fn rdcurve_arithmetic_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let cfg = RunConfig {
        out: Some(out.clone()),
        ..spectrum_cfg(arithmetic())
    };
    let report = cmd_rdcurve(&cfg).unwrap();
    assert!((report.condition_number - 10.0).abs() < 1e-12);
    let ea = report.curve.max_abs_error(Variant::RAlphaStar).unwrap();
    assert!(ea < report.curve.max_abs_error(Variant::R1).unwrap());
    let text = report.to_string();
    assert!(text.contains("kappa = 10"));
    assert!(text.contains("alpha* = "));

    let (header, rows) = data_io::read_table(&out).unwrap();
    assert_eq!(header, ["D", "R", "R0", "R1", "Ralpha_star"]);
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r.len() == 5));
    assert_eq!(rows[199][0], 5.5);
}

#[test]
fn rdcurve_scalar_source() {
    let report = cmd_rdcurve(&spectrum_cfg(vec![5.0])).unwrap();
    assert_eq!(report.curve.alpha_star.unwrap().alpha_star, 0.0);
    for row in &report.curve.rows {
        let exact = row.get(Variant::Exact).unwrap();
        assert!((row.get(Variant::R0).unwrap() - exact).abs() < 1e-9);
        assert!((row.get(Variant::RAlphaStar).unwrap() - exact).abs() < 1e-9);
    }
}

#[test]
fn rdcurve_singular_flags_r0() {
    let values = vec![51.2, 25.6, 12.8, 6.4, 3.2, 0.0, 0.0, 0.0, 0.0, 0.0];
    let report = cmd_rdcurve(&spectrum_cfg(values)).unwrap();
    assert!(report.curve.r0_divergent);
    assert!(report.table_rows().iter().all(|r| r[2] == f64::NEG_INFINITY));
    assert!(report.to_string().contains("-inf"));
}

#[test]
fn rdcurve_bits_scale_rates() {
    let nats = cmd_rdcurve(&spectrum_cfg(arithmetic())).unwrap();
    let bits = cmd_rdcurve(&RunConfig {
        bits: Some(true),
        ..spectrum_cfg(arithmetic())
    })
    .unwrap();
    let (a, b) = (&nats.table_rows()[0], &bits.table_rows()[0]);
    assert_eq!(a[0], b[0]);
    assert!((a[1] / std::f64::consts::LN_2 - b[1]).abs() < 1e-12);
}

#[test]
fn rdcurve_from_covariance_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cov.csv");
    std::fs::write(&path, "2,0\n0,1\n").unwrap();
    let report = cmd_rdcurve(&RunConfig {
        cov: Some(path),
        grid: Some(10),
        linear_grid: Some(true),
        ..RunConfig::default()
    })
    .unwrap();
    assert_eq!(report.dim, 2);
    assert_eq!(report.curve.rows.len(), 10);
    assert!((report.curve.rows[0].distortion - 0.3).abs() < 1e-15);
}

#[test]
fn alpha_command() {
    let iso = cmd_alpha(&spectrum_cfg(vec![2.0; 4])).unwrap();
    assert!(iso.result.alpha_star.abs() <= 1e-8);
    let r = cmd_alpha(&spectrum_cfg(arithmetic())).unwrap();
    assert!(r.result.residual <= 1e-8);
    assert!(r.result.iterations <= 60);
    assert!((r.upper_bracket - (1.0 - 0.1 / 0.55)).abs() < 1e-12);
    assert!(r.to_string().contains("iterations = "));
    assert!(cmd_alpha(&RunConfig {
        delta: Some(0.0),
        ..spectrum_cfg(arithmetic())
    })
    .is_err());
}

#[test]
fn bounds_isotropic_all_zero() {
    let report = cmd_bounds(&spectrum_cfg(vec![0.7; 5])).unwrap();
    assert_eq!(report.failures, 0);
    for row in &report.rows {
        assert!(row.observed.abs() < 1e-15);
        assert_eq!(row.theorem2, (0.0, 0.0));
        assert_eq!(row.corollary1, (0.0, 0.0));
    }
}

#[test]
fn bounds_geometric_spectrum_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bounds.csv");
    let report = cmd_bounds(&RunConfig {
        out: Some(out.clone()),
        ..spectrum_cfg(geometric())
    })
    .unwrap();
    assert_eq!(report.rows.len(), 200);
    assert_eq!(report.failures, 0);
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("spectrum,D,observed,"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn bounds_random_batch() {
    let report = cmd_bounds(&RunConfig {
        batch: Some(100),
        seed: Some(5),
        grid: Some(50),
        ..RunConfig::default()
    })
    .unwrap();
    assert_eq!(report.spectra, 100);
    assert_eq!(report.failures, 0);
}

fn anisotropic_data(dir: &std::path::Path) -> std::path::PathBuf {
    // Exact covariance diag(4, 1, 0.25) from sign patterns.
    let path = dir.join("data.csv");
    let mut text = String::from("a,b,c\n");
    let scale = [4f64.sqrt(), 1.0, 0.5];
    let m = 8;
    let f = ((m - 1) as f64 / m as f64).sqrt();
    for i in 0..m {
        let signs = [(i & 1) as f64 * 2.0 - 1.0, ((i >> 1) & 1) as f64 * 2.0 - 1.0, ((i >> 2) & 1) as f64 * 2.0 - 1.0];
        let row: Vec<String> = (0..3).map(|j| (signs[j] * scale[j] * f).to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn pca_full_ratio_keeps_everything() {
    let dir = tempfile::tempdir().unwrap();
    let data = anisotropic_data(dir.path());
    let out = dir.path().join("pca.bin");
    let sweep = dir.path().join("sweep.csv");
    let report = cmd_pca(&RunConfig {
        data: Some(data),
        pca_ratio: Some(1.0),
        out: Some(out.clone()),
        sweep: Some(sweep.clone()),
        ..RunConfig::default()
    })
    .unwrap();
    assert_eq!(report.model.output_dim, 3);
    assert!((report.input_condition_number - 16.0).abs() < 1e-9);
    assert!((report.retained_condition_number - report.input_condition_number).abs() < 1e-9);
    assert_eq!(model_file::load_pca(&out).unwrap(), report.model);
    let (_, rows) = data_io::read_table(&sweep).unwrap();
    for pair in rows.windows(2) {
        assert!(pair[0][1] <= pair[1][1]);
    }
}

#[test]
fn pca_needs_selector() {
    let dir = tempfile::tempdir().unwrap();
    let data = anisotropic_data(dir.path());
    assert!(cmd_pca(&RunConfig {
        data: Some(data),
        ..RunConfig::default()
    })
    .is_err());
}

fn train_cfg(dir: &std::path::Path, name: &str, mode: ModeArg) -> RunConfig {
    RunConfig {
        layers: Some(100),
        seed: Some(3),
        mode: Some(mode),
        out: Some(dir.join(name)),
        trace: Some(dir.join(format!("{name}.trace.csv"))),
        ..RunConfig::default()
    }
}

#[test]
fn train_round_trip_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_cfg(dir.path(), "ar.bin", ModeArg::Ar);
    let report = cmd_train(&cfg).unwrap();
    let (loaded, pca) = model_file::load_network(cfg.out.as_ref().unwrap()).unwrap();
    assert_eq!(loaded, report.outcome.network);
    assert!(pca.is_none());
    assert_eq!(report.train_accuracy, 1.0);

    let (header, trace) = data_io::read_table(cfg.trace.as_ref().unwrap()).unwrap();
    assert_eq!(header, ["layer", "objective"]);
    assert_eq!(trace.len(), 101);

    let eval = cmd_eval(&RunConfig {
        model: cfg.out.clone(),
        similarity: Some(dir.path().join("sim.csv")),
        ..cfg.clone()
    })
    .unwrap();
    assert!(eval.accuracy >= 0.95);
    assert_eq!(eval.per_class.len(), 3);
    let sim = eval.similarity.unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(sim[(i, i)] > sim[(i, j)]);
            }
        }
    }
}

#[test]
fn eval_on_training_data_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    let labels = dir.path().join("y.csv");
    let synth = RunConfig {
        out: Some(data.clone()),
        labels: Some(labels.clone()),
        per_class: Some(60),
        test_per_class: Some(0),
        seed: Some(9),
        ..RunConfig::default()
    };
    assert_eq!(cmd_synth(&synth).unwrap().samples, 180);
    let model = dir.path().join("m.bin");
    let common = RunConfig {
        data: Some(data),
        labels: Some(labels),
        layers: Some(40),
        ..RunConfig::default()
    };
    cmd_train(&RunConfig {
        out: Some(model.clone()),
        ..common.clone()
    })
    .unwrap();
    let eval = cmd_eval(&RunConfig {
        model: Some(model),
        ..common
    })
    .unwrap();
    assert_eq!(eval.accuracy, 1.0);
}

#[test]
fn eval_rejects_empty_test_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        layers: Some(2),
        out: Some(dir.path().join("m.bin")),
        ..RunConfig::default()
    };
    cmd_train(&cfg).unwrap();
    let err = cmd_eval(&RunConfig {
        model: cfg.out.clone(),
        test_per_class: Some(0),
        ..cfg
    });
    assert!(err.is_err());
}

#[test]
fn modes_differ_only_in_alpha_dependent_parts() {
    let dir = tempfile::tempdir().unwrap();
    let ar = cmd_train(&train_cfg(dir.path(), "ar.bin", ModeArg::Ar)).unwrap().outcome.network;
    let fx = cmd_train(&train_cfg(dir.path(), "fx.bin", ModeArg::Fixed)).unwrap().outcome.network;
    assert_eq!(ar.dim, fx.dim);
    assert_eq!(ar.class_count, fx.class_count);
    assert_eq!(ar.layers.len(), fx.layers.len());
    let (ca, cf) = (ar.config, fx.config);
    assert_eq!((ca.epsilon_sq, ca.eta, ca.lambda_u, ca.layers), (cf.epsilon_sq, cf.eta, cf.lambda_u, cf.layers));
    for (a, f) in ar.layers.iter().zip(&fx.layers) {
        assert_eq!(a.index, f.index);
        assert_eq!(a.expansion.shape(), f.expansion.shape());
        assert_eq!(f.alpha, 1.0);
        assert_ne!(a.alpha, f.alpha);
        assert_ne!(a.expansion, f.expansion);
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "eigenvalues = [1.0, 0.5]\ndelta = 1e-3\n").unwrap();
    let merged = RunConfig::load(RunConfig {
        config: Some(file),
        delta: Some(1e-10),
        ..RunConfig::default()
    })
    .unwrap();
    assert_eq!(merged.eigenvalues, Some(vec![1.0, 0.5]));
    assert_eq!(merged.delta, Some(1e-10));
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_rdalpha"))
}

#[test]
fn binary_prints_config_and_exit_status() {
    let ok = binary().args(["alpha", "--eigenvalues", "1,0.5"]).output().unwrap();
    assert!(ok.status.success());
    let text = String::from_utf8(ok.stdout).unwrap();
    let delta = text
        .lines()
        .find_map(|l| l.strip_prefix("# delta = "))
        .unwrap();
    assert_eq!(delta.parse::<f64>().unwrap(), 1e-8);
    assert!(text.contains("alpha* = "));

    let bad = binary().args(["alpha", "--eigenvalues", "1,0.5", "--delta", "0"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8(bad.stderr).unwrap().contains("delta"));

    let missing = binary().args(["eval"]).output().unwrap();
    assert!(!missing.status.success());
}

#[test]
fn binary_train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.bin", "b.bin"] {
        let path = dir.path().join(name);
        let run = binary()
            .args(["train", "--layers", "10", "--seed", "4", "--out"])
            .arg(&path)
            .output()
            .unwrap();
        assert!(run.status.success());
        files.push(std::fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn pca_front_end_is_stored_with_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        layers: Some(20),
        pca_dim: Some(8),
        out: Some(dir.path().join("m.bin")),
        ..RunConfig::default()
    };
    let report = cmd_train(&cfg).unwrap();
    assert_eq!(report.outcome.network.dim, 8);
    let (_, pca) = model_file::load_network(cfg.out.as_ref().unwrap()).unwrap();
    assert_eq!(pca.as_ref(), report.pca.as_ref());
    let eval = cmd_eval(&RunConfig {
        model: cfg.out.clone(),
        ..cfg
    })
    .unwrap();
    assert!(eval.accuracy >= 0.95);
}
