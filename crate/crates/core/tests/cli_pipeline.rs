use std::fs;
use std::path::{Path, PathBuf};

use sparsecode::cli::report::read_csv;
use sparsecode::cli::{run, CliError, Command, ExperimentConfig};
use sparsecode::dataset::synthetic_digits;

fn write_data(dir: &Path) {
    let set = synthetic_digits(300, 28, 8);
    set.write_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
}

fn tiny_config(data: &Path, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.apply_text(
        "train_split = 240
         lambdas = 0.3
         lambda = 0.3
         n_atoms = 24
         dict_images = 80
         dict_iterations = 30
         checkpoint_every = 10
         infer_images = 20
         infer_max_iters = 20000
         infer_check_every = 500
         sensitivity_samples = 12
         rip_trials = 20
         mlp_steps = 10
         eval_images = 40
         pool_code_iters = 40
         k_grid = 1, 3
         seeds = 0, 1
         lambda_w_grid = 1e-3, 1e-1
         logreg_steps = 30
         random_logreg_max_k = 1
         random_width = 48",
    )
    .unwrap();
    c.data_dir = Some(data.to_path_buf());
    c.output_dir = out.to_path_buf();
    c
}

fn all_commands() -> Vec<Command> {
    vec![
        Command::TrainDict { lambda: None },
        Command::Infer { lambda: None },
        Command::Sensitivity { samples: None },
        Command::Spectrum,
        Command::Pairs,
        Command::Classify,
    ]
}

/// Runs every command and returns the report files (manifests excluded).
fn run_all(config: &ExperimentConfig) -> Vec<PathBuf> {
    let mut reports = Vec::new();
    for command in all_commands() {
        let files = match run(&command, config.clone()) {
            Ok(f) => f,
            // Unconverged codes still produce their report.
            Err(CliError::NotConverged(_)) => vec![config.output_dir.join("codes-lambda0.3.csv")],
            Err(e) => panic!("{}: {e}", command.name()),
        };
        reports.extend(
            files
                .into_iter()
                .filter(|f| f.extension().is_some_and(|e| e == "csv" || e == "json"))
                .filter(|f| {
                    !f.file_name()
                        .unwrap()
                        .to_string_lossy()
                        .starts_with("manifest")
                }),
        );
    }
    reports
}

#[test]
fn reruns_are_byte_identical_and_stale_inputs_are_refused() {
    let data = tempfile::tempdir().unwrap();
    write_data(data.path());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = tiny_config(data.path(), a.path());
    let cb = tiny_config(data.path(), b.path());
    let first = run_all(&ca);
    let second = run_all(&cb);
    assert!(first.len() >= 12, "{first:?}");
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{} differs",
            x.display()
        );
    }

    // Every report names the config hash that produced it.
    let hash = ca.hash();
    for f in first.iter().filter(|f| f.extension().unwrap() == "csv") {
        assert!(fs::read_to_string(f)
            .unwrap()
            .contains(&format!("# config_hash={hash}")));
    }
    let manifest = fs::read_to_string(a.path().join("manifest-classify.json")).unwrap();
    assert!(manifest.contains(&hash));

    // Histogram rows: one per (sample, kind) minus flagged cases.
    let (header, rows) = read_csv(&a.path().join("sensitivity.csv")).unwrap();
    assert_eq!(
        header,
        vec!["representation", "sample", "image", "kind", "value"]
    );
    let pixel_rows = rows.iter().filter(|r| r[0] == "pixels").count();
    assert!((3 * 12 - 12..=3 * 12).contains(&pixel_rows));
    assert!(rows
        .iter()
        .filter(|r| r[0] == "pixels")
        .all(|r| r[4].parse::<f64>().unwrap() == 1.0));

    // A checkpoint from another seed is not silently reused.
    let mut other = ca.clone();
    other.dict_seed = 99;
    let err = run(&Command::Infer { lambda: None }, other).unwrap_err();
    assert!(matches!(err, CliError::Stale(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn lock_and_missing_data_errors_map_to_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let missing = out.path().join("no-data");
    let config = tiny_config(&missing, out.path());
    let err = run(&Command::TrainDict { lambda: None }, config.clone()).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");

    fs::write(out.path().join(".lock"), "1").unwrap();
    let err = run(&Command::Pairs, config).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("another run"));
}

#[test]
fn invalid_config_is_exit_code_one() {
    let mut c = ExperimentConfig::desk();
    let err = c.apply_text("k_grid =").unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
