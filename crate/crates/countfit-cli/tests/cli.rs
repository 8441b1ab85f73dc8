//! Exit-code and artifact contracts of the command-line interface.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_countfit"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("countfit_cli_{}_{name}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Simulates a small scenario into `dir` and returns the artifact paths.
fn simulate_small(dir: &Path, scenario: &str, seed: &str) -> (String, String, String) {
    let (code, _, stderr) = run(&[
        "simulate",
        "--scenario",
        scenario,
        "--seed",
        seed,
        "--out-dir",
        &path(dir),
    ]);
    assert_eq!(code, 0, "simulate failed: {stderr}");
    (
        path(&dir.join("dataset.csv")),
        path(&dir.join("schema.json")),
        path(&dir.join("model_spec.json")),
    )
}

#[test]
fn list_scenarios() {
    let (code, stdout, _) = run(&["simulate", "--list"]);
    assert_eq!(code, 0);
    for name in ["nb_basic", "zinb_basic", "glmm_basic", "nb_misspecified"] {
        assert!(stdout.contains(name), "missing {name} in listing");
    }
}

#[test]
fn missing_input_exits_one() {
    let dir = tmp("missing_input");
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        "/nonexistent/data.csv",
        "--schema",
        "/nonexistent/schema.json",
        "--spec",
        "/nonexistent/spec.json",
        "--out-dir",
        &path(&dir),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("error"), "{stderr}");
}

#[test]
fn spec_with_unknown_covariate_exits_one_naming_it() {
    let dir = tmp("unknown_cov");
    let (data, schema, _) = simulate_small(&dir, "nb_basic", "42");
    let spec_path = dir.join("bad_spec.json");
    std::fs::write(
        &spec_path,
        r#"{"family":"nb","count_terms":["intercept",{"covariate":{"name":"no_such_covariate"}}]}"#,
    )
    .unwrap();
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        &data,
        "--schema",
        &schema,
        "--spec",
        &path(&spec_path),
        "--out-dir",
        &path(&dir.join("out")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("no_such_covariate"), "{stderr}");
}

#[test]
fn family_override_without_zero_terms_is_a_validation_error() {
    let dir = tmp("family_override");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        &data,
        "--schema",
        &schema,
        "--spec",
        &spec,
        "--family",
        "zinb",
        "--out-dir",
        &path(&dir.join("out")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("zero_terms"), "{stderr}");
}

#[test]
fn non_convergence_exits_two_with_artifacts() {
    let dir = tmp("nonconv");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let out = dir.join("out");
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        &data,
        "--schema",
        &schema,
        "--spec",
        &spec,
        "--max-iterations",
        "2",
        "--out-dir",
        &path(&out),
    ]);
    assert_eq!(code, 2, "{stderr}");
    assert!(out.join("fit.json").exists());
    assert!(out.join("coefficients.csv").exists());
    assert!(stderr.contains("did not converge"), "{stderr}");
}

#[test]
fn gof_bin_width_controls_chart_count() {
    let dir = tmp("bin_width");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let fit_dir = dir.join("fit");
    let (code, _, _) = run(&[
        "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
        &path(&fit_dir),
    ]);
    assert_eq!(code, 0);
    let fit_json = path(&fit_dir.join("fit.json"));

    let gof_dir = dir.join("gof_half");
    let (code, _, stderr) = run(&[
        "gof",
        "--input",
        &data,
        "--schema",
        &schema,
        "--fit",
        &fit_json,
        "--bin-width",
        "0.5",
        "--out-dir",
        &path(&gof_dir),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let bins: Vec<_> = std::fs::read_dir(&gof_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let n = e.file_name().to_string_lossy().into_owned();
            n.starts_with("bin_") && n.ends_with(".svg") && n != "bin_means.svg"
        })
        .collect();
    assert_eq!(bins.len(), 4, "2.0 / 0.5 = 4 per-bin charts");

    // Tight max-binned-mean pushes most observations into overflow, still
    // reported in the JSON.
    let gof_dir2 = dir.join("gof_low_max");
    let (code, _, _) = run(&[
        "gof",
        "--input",
        &data,
        "--schema",
        &schema,
        "--fit",
        &fit_json,
        "--max-binned-mean",
        "1.0",
        "--out-dir",
        &path(&gof_dir2),
    ]);
    assert_eq!(code, 0);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gof_dir2.join("gof.json")).unwrap())
            .unwrap();
    assert!(
        doc["report"]["overflow_indices"].as_array().unwrap().len() > 0,
        "overflow should be reported"
    );
}

#[test]
fn default_gof_emits_ten_bin_charts_and_two_summaries() {
    let dir = tmp("ten_charts");
    // Canonical oracle seed: every interval up to 2.0 is populated.
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "20240101");
    let fit_dir = dir.join("fit");
    assert_eq!(
        run(&[
            "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
            &path(&fit_dir),
        ])
        .0,
        0
    );
    let gof_dir = dir.join("gof");
    assert_eq!(
        run(&[
            "gof",
            "--input",
            &data,
            "--schema",
            &schema,
            "--fit",
            &path(&fit_dir.join("fit.json")),
            "--out-dir",
            &path(&gof_dir),
        ])
        .0,
        0
    );
    let names: Vec<String> = std::fs::read_dir(&gof_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    let bin_charts = names
        .iter()
        .filter(|n| n.starts_with("bin_") && n.ends_with(".svg") && *n != "bin_means.svg")
        .count();
    assert_eq!(bin_charts, 10, "ranges 0.0-2.0 at width 0.2: {names:?}");
    assert!(names.contains(&"pooled.svg".to_string()));
    assert!(names.contains(&"bin_means.svg".to_string()));
}

#[test]
fn scenario_file_round_trips_through_simulate() {
    let dir = tmp("scenario_file");
    let (code, _, _) = run(&[
        "simulate",
        "--scenario",
        "nb_basic",
        "--seed",
        "5",
        "--out-dir",
        &path(&dir.join("a")),
    ]);
    assert_eq!(code, 0);
    // Re-simulate from the emitted scenario file; identical dataset.
    let (code, _, stderr) = run(&[
        "simulate",
        "--scenario-file",
        &path(&dir.join("a/scenario.json")),
        "--out-dir",
        &path(&dir.join("b")),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(
        std::fs::read(dir.join("a/dataset.csv")).unwrap(),
        std::fs::read(dir.join("b/dataset.csv")).unwrap()
    );
}

#[test]
fn compare_same_fit_twice_surfaces_degenerate_vuong() {
    let dir = tmp("self_compare");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let fit_dir = dir.join("fit");
    assert_eq!(
        run(&[
            "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
            &path(&fit_dir),
        ])
        .0,
        0
    );
    let fit_json = path(&fit_dir.join("fit.json"));
    let cmp = dir.join("cmp");
    let (code, _, stderr) = run(&[
        "compare",
        "--input",
        &data,
        "--schema",
        &schema,
        "--fit",
        &fit_json,
        "--fit",
        &fit_json,
        "--out-dir",
        &path(&cmp),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(cmp.join("comparison.csv").exists());
    let vuong = std::fs::read_to_string(cmp.join("vuong.csv")).unwrap();
    assert!(vuong.contains("degenerate"), "{vuong}");
}

#[test]
fn compare_rejects_mismatched_dataset() {
    let dir = tmp("mismatch");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let fit_dir = dir.join("fit");
    assert_eq!(
        run(&[
            "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
            &path(&fit_dir),
        ])
        .0,
        0
    );
    // A different seed = a different dataset.
    let other = tmp("mismatch_other");
    let (other_data, other_schema, _) = simulate_small(&other, "nb_basic", "43");
    let (code, _, stderr) = run(&[
        "compare",
        "--input",
        &other_data,
        "--schema",
        &other_schema,
        "--fit",
        &path(&fit_dir.join("fit.json")),
        "--fit",
        &path(&fit_dir.join("fit.json")),
        "--out-dir",
        &path(&dir.join("cmp")),
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("different dataset"), "{stderr}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tmp("idempotent");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");

    let mut digests: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for run_dir in ["a", "b"] {
        let fit_dir = dir.join(run_dir).join("fit");
        assert_eq!(
            run(&[
                "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
                &path(&fit_dir),
            ])
            .0,
            0
        );
        let gof_dir = dir.join(run_dir).join("gof");
        assert_eq!(
            run(&[
                "gof",
                "--input",
                &data,
                "--schema",
                &schema,
                "--fit",
                &path(&fit_dir.join("fit.json")),
                "--out-dir",
                &path(&gof_dir),
            ])
            .0,
            0
        );
        let mut files = Vec::new();
        for d in [fit_dir, gof_dir] {
            let mut entries: Vec<_> = std::fs::read_dir(&d)
                .unwrap()
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .collect();
            entries.sort();
            for p in entries {
                files.push((
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
        digests.push(files);
    }
    assert_eq!(digests[0].len(), digests[1].len());
    for (a, b) in digests[0].iter().zip(&digests[1]) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1, "file {} differs between reruns", a.0);
    }
}

#[test]
fn simulate_seed_env_var_is_honored() {
    let dir_a = tmp("env_seed_a");
    let dir_b = tmp("env_seed_b");
    let out = bin()
        .args(["simulate", "--scenario", "nb_basic", "--out-dir", &path(&dir_a)])
        .env("COUNTFIT_SEED", "777")
        .output()
        .unwrap();
    assert!(out.status.success());
    let (code, _, _) = run(&[
        "simulate",
        "--scenario",
        "nb_basic",
        "--seed",
        "777",
        "--out-dir",
        &path(&dir_b),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(dir_a.join("dataset.csv")).unwrap(),
        std::fs::read(dir_b.join("dataset.csv")).unwrap()
    );
}

// The chart's embedded metadata table is byte-for-byte the emitted CSV.
#[test]
fn svg_metadata_matches_emitted_csv() {
    let dir = tmp("metadata");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let fit_dir = dir.join("fit");
    assert_eq!(
        run(&[
            "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
            &path(&fit_dir),
        ])
        .0,
        0
    );
    let gof_dir = dir.join("gof");
    assert_eq!(
        run(&[
            "gof",
            "--input",
            &data,
            "--schema",
            &schema,
            "--fit",
            &path(&fit_dir.join("fit.json")),
            "--out-dir",
            &path(&gof_dir),
        ])
        .0,
        0
    );
    let csv = std::fs::read_to_string(gof_dir.join("gof_bins.csv")).unwrap();
    for chart in ["pooled.svg", "bin_means.svg", "bin_00.svg"] {
        let svg = std::fs::read_to_string(gof_dir.join(chart)).unwrap();
        let start = svg.find("<![CDATA[").unwrap() + "<![CDATA[".len();
        let end = svg[start..].find("]]>").unwrap() + start;
        assert_eq!(&svg[start..end], csv, "{chart} metadata mismatch");
    }
}

// A fit can be applied to a different (here: single-row) dataset for
// reporting; charts render without crashing.
#[test]
fn report_renders_single_row_dataset() {
    let dir = tmp("single_row");
    let (data, schema, spec) = simulate_small(&dir, "nb_basic", "42");
    let fit_dir = dir.join("fit");
    assert_eq!(
        run(&[
            "fit", "--input", &data, "--schema", &schema, "--spec", &spec, "--out-dir",
            &path(&fit_dir),
        ])
        .0,
        0
    );
    let full = std::fs::read_to_string(&data).unwrap();
    let mut lines = full.lines();
    let header = lines.next().unwrap();
    let first = lines.next().unwrap();
    let one_row = dir.join("one_row.csv");
    std::fs::write(&one_row, format!("{header}\n{first}\n")).unwrap();
    let (code, _, stderr) = run(&[
        "report",
        "--input",
        &path(&one_row),
        "--schema",
        &schema,
        "--fit",
        &path(&fit_dir.join("fit.json")),
        "--out-dir",
        &path(&dir.join("report")),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(dir.join("report/deviance_residuals.svg").exists());
    assert!(dir.join("report/observed_vs_predicted.svg").exists());
}
