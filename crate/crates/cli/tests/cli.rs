use std::path::Path;
use std::process::Command;

use serde_json::Value;

use dyadic_lab::fit::ols;
use dyadic_lab_cli::config::ExperimentConfig;
use dyadic_lab_cli::invariants::run_invariant_suite;
use dyadic_lab_cli::representation::run_representation;
use dyadic_lab_cli::{run_command, COMMANDS};

/// Small settings so every subcommand runs in about a second.
fn small() -> ExperimentConfig {
    ExperimentConfig::parse(
        r#"
        # desk-scale smoke configuration
        k_min = -7
        seed = 11
        power_exponents = [0.0, 0.5, 0.9, 0.95]
        a2_targets = [1.0, 10.0, 100.0]
        complexity_max = 3
        complexity_a2 = 20.0
        n_weights = 4
        spike_random = 20
        weak_complexity_max = 1
        carleson_instances = 50
        carleson_depth = 8
        carleson_iterations = 50
        cascade_k_min = -12
        jn_t_max = 5
        r0_values = [5, 6, 7, 8]
        pi_samples = 2000
        samples = 300
        kernel_cells = 32
        decay_k_min = -8
        decay_levels = [[-6, -6], [-5, -5]]
        "#,
    )
    .unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn config_parses_comments_and_defaults() {
    let cfg = small();
    assert_eq!(cfg.k_min, -7);
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.gamma, 0.25);
    assert_eq!(
        ExperimentConfig::parse("").unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn config_rejects_bad_input() {
    assert!(ExperimentConfig::parse("no_such_key = 1").is_err());
    assert!(ExperimentConfig::parse("dimension = 3").is_err());
    assert!(ExperimentConfig::parse("shift_families = [\"hilbert\"]").is_err());
    assert!(ExperimentConfig::parse("power_exponents = [1.0]").is_err());
    assert!(ExperimentConfig::parse("kernel_cells = 100").is_err());
    assert!(ExperimentConfig::parse("a2_targets = [0.5]").is_err());
    assert!(ExperimentConfig::parse("seed = -1").is_err());
}

#[test]
fn resolution_sets_finest_level() {
    let mut cfg = ExperimentConfig::default();
    cfg.set_cells(256).unwrap();
    assert_eq!(cfg.k_min, -8);
    assert!(cfg.set_cells(100).is_err());
}

#[test]
fn zero_samples_rejected() {
    let cfg = ExperimentConfig {
        samples: 0,
        ..small()
    };
    assert!(run_representation(&cfg).is_err());
    let cfg = ExperimentConfig {
        pi_samples: 0,
        ..small()
    };
    assert!(run_representation(&cfg).is_err());
}

#[test]
fn two_point_fit_closed_form() {
    // slope (y2 - y1) / (x2 - x1), intercept y1 - slope x1
    let f = ols(&[2.0, 5.0], &[1.0, 10.0]).unwrap();
    assert_eq!(f.slope, 3.0);
    assert_eq!(f.intercept, -5.0);
    assert_eq!(f.count, 2);
    assert!(f.residual_max < 1e-12);
}

#[test]
fn invariant_suite_passes_and_catches_fault() {
    let s = run_invariant_suite(&small());
    for r in &s.results {
        assert!(r.passed, "{}: {:?}", r.name, r.witness);
    }
    assert!(s.get("corrupted_shift_detected").unwrap().passed);
}

#[test]
fn every_command_is_deterministic() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for c in COMMANDS {
        run_command(c, &cfg).unwrap().write(a.path()).unwrap();
        run_command(c, &cfg).unwrap().write(b.path()).unwrap();
        let (fa, fb) = (
            read_dir_sorted(&a.path().join(c)),
            read_dir_sorted(&b.path().join(c)),
        );
        assert!(fa.len() >= 2, "{c}");
        assert_eq!(fa, fb, "{c}");
    }
}

#[test]
fn provenance_covers_every_column() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    for c in COMMANDS {
        let out = run_command(c, &cfg).unwrap();
        out.write(dir.path()).unwrap();
        let summary: Value = serde_json::from_slice(
            &std::fs::read(dir.path().join(c).join("summary.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(summary["command"], *c);
        assert_eq!(summary["seed"], 11);
        assert!(
            summary["passed"].is_boolean()
                && summary["warnings"].is_array()
                && summary["summary"].is_object()
        );
        let prov = summary["provenance"].as_array().unwrap();
        for entry in prov {
            let file = entry["file"].as_str().unwrap();
            let csv = std::fs::read_to_string(dir.path().join(c).join(file)).unwrap();
            let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
            let cols: Vec<&str> = entry["columns"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x["name"].as_str().unwrap())
                .collect();
            assert_eq!(header, cols, "{c}/{file}");
            for x in entry["columns"].as_array().unwrap() {
                assert!(
                    !x["module"].as_str().unwrap().is_empty()
                        && !x["operation"].as_str().unwrap().is_empty()
                );
            }
            assert_eq!(entry["seed"], 11);
            let width = header.len();
            assert!(
                csv.lines().skip(1).all(|l| l.split(',').count() == width),
                "{c}/{file}"
            );
        }
    }
}

#[test]
fn floats_carry_seventeen_digits() {
    let out = run_command("a2-sweep", &small()).unwrap();
    let csv = out.tables[0].to_csv();
    let row = csv.lines().nth(1).unwrap();
    let a2 = row.split(',').nth(3).unwrap();
    let mantissa = a2
        .split('e')
        .next()
        .unwrap()
        .trim_start_matches('-')
        .replace('.', "");
    assert_eq!(mantissa.len(), 17, "{a2}");
    // constant weight row: a2 = 1 and the unweighted norm
    let first = out.tables[0]
        .rows
        .iter()
        .find(|r| r[1] == "cascade".into())
        .unwrap();
    assert_eq!(first[3], 1.0.into());
}

#[test]
fn binary_runs_invariants_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "# invariants only\nseed = 3\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_dyadic-lab"))
        .args(["invariants", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "4", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let summary: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("invariants/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["passed"], true);
    let bad = Command::new(env!("CARGO_BIN_EXE_dyadic-lab"))
        .args(["representation", "--samples", "0", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}
