//! Subcommand implementations.

use std::path::Path;
use std::process::ExitCode;

use countfit::data::{build_design, load_dataset, write_dataset, Family, SchemaConfig};
use countfit::error::{Error, Result};
use countfit::estimation::{
    deviance_residuals, predict_mean, vuong_test, OptimizerConfig,
};
use countfit::gof::{bins_csv, display_pmf, run_gof, GofConfig, GofReport};
use countfit::simulate;
use countfit::{DesignMatrix64, FitResult64};

use crate::io::{dataset_fingerprint, write_atomic, FitDocument, GofDocument, SCHEMA_VERSION};
use crate::svg;
use crate::{CompareArgs, FitArgs, GofArgs, ReportArgs, SimulateArgs};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn load(
    input: &Path,
    schema: &Path,
) -> Result<(Vec<countfit::data::SectionRecord>, SchemaConfig)> {
    let schema = SchemaConfig::from_json_file(schema)?;
    let records = load_dataset(input, &schema)?;
    Ok((records, schema))
}

pub fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    if args.list {
        println!("{:<18} {:<8} {:>8} {:>10}", "name", "family", "sections", "seed");
        for s in simulate::default_scenarios() {
            println!(
                "{:<18} {:<8} {:>8} {:>10}",
                s.name,
                s.family.as_str(),
                s.n_sections,
                s.seed
            );
        }
        return Ok(ExitCode::SUCCESS);
    }

    let mut scenario = match (&args.scenario, &args.scenario_file) {
        (Some(name), None) => simulate::scenario(name)?,
        (None, Some(path)) => simulate::SimScenario::from_json_file(path)?,
        _ => {
            return Err(Error::Invalid(
                "exactly one of --scenario or --scenario-file is required".to_string(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }

    let out_dir = args.out_dir.expect("clap enforces out_dir");
    ensure_dir(&out_dir)?;
    let (records, truth) = simulate::generate(&scenario)?;

    let staged = out_dir.join("dataset.csv.tmp");
    write_dataset(&records, &staged)?;
    std::fs::rename(&staged, out_dir.join("dataset.csv"))?;
    write_atomic(
        &out_dir.join("schema.json"),
        (serde_json::to_string_pretty(&SchemaConfig::canonical())? + "\n").as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("model_spec.json"),
        (serde_json::to_string_pretty(&truth.model_spec)? + "\n").as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("manifest.json"),
        (serde_json::to_string_pretty(&truth)? + "\n").as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("scenario.json"),
        (serde_json::to_string_pretty(&scenario)? + "\n").as_bytes(),
    )?;

    log::info!(
        "wrote {} sections from scenario '{}' (seed {}) to {}",
        records.len(),
        scenario.name,
        scenario.seed,
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn optimizer_config(
    quadrature_points: Option<usize>,
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
) -> OptimizerConfig<f64> {
    let mut cfg = OptimizerConfig::default();
    if let Some(q) = quadrature_points {
        cfg.quadrature_points = q;
    }
    if let Some(m) = max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(g) = gradient_tolerance {
        cfg.gradient_tolerance = g;
    }
    cfg
}

fn coefficients_csv(fit: &FitResult64) -> String {
    let mut out = String::from("section,name,estimate,std_error,z,p_value\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for c in &fit.count_coefficients {
        out.push_str(&format!(
            "count,{},{},{},{},{}\n",
            c.name,
            c.estimate,
            opt(c.std_error),
            opt(c.z),
            opt(c.p_value)
        ));
    }
    for c in &fit.zero_coefficients {
        out.push_str(&format!(
            "zero,{},{},{},{},{}\n",
            c.name,
            c.estimate,
            opt(c.std_error),
            opt(c.z),
            opt(c.p_value)
        ));
    }
    out.push_str(&format!(
        "stat,theta,{},{},,\n",
        fit.theta,
        opt(fit.theta_std_error)
    ));
    if let Some(sd) = fit.random_intercept_sd {
        out.push_str(&format!(
            "stat,random_intercept_sd,{},{},,\n",
            sd,
            opt(fit.random_intercept_sd_std_error)
        ));
    }
    out.push_str(&format!("stat,log_likelihood,{},,,\n", fit.log_likelihood));
    out.push_str(&format!("stat,aic,{},,,\n", fit.aic));
    out.push_str(&format!("stat,bic,{},,,\n", fit.bic));
    out.push_str(&format!("stat,n_obs,{},,,\n", fit.n_obs));
    out.push_str(&format!("stat,n_params,{},,,\n", fit.n_params));
    out
}

pub fn fit(args: FitArgs) -> Result<ExitCode> {
    let (records, _) = load(&args.input, &args.schema)?;
    let mut spec = countfit::data::ModelSpec::from_json_file(&args.spec)?;
    if let Some(family) = &args.family {
        spec.family = Family::parse(family)?;
        spec.validate()?;
    }
    let design: DesignMatrix64 = build_design(&records, &spec)?;
    let cfg = optimizer_config(
        args.quadrature_points,
        args.max_iterations,
        args.gradient_tolerance,
    );
    let fit = countfit::estimation::fit(&design, spec.family, &cfg)?;

    ensure_dir(&args.out_dir)?;
    let doc = FitDocument::new(dataset_fingerprint(&records), spec, fit);
    doc.write(&args.out_dir.join("fit.json"))?;
    write_atomic(
        &args.out_dir.join("coefficients.csv"),
        coefficients_csv(&doc.fit).as_bytes(),
    )?;

    if doc.fit.converged {
        log::info!(
            "converged in {} iterations; LL = {:.4}, AIC = {:.2}",
            doc.fit.iterations,
            doc.fit.log_likelihood,
            doc.fit.aic
        );
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("fit did not converge; artifacts written with diagnostics:");
        for d in &doc.fit.diagnostics {
            eprintln!("  {d}");
        }
        Ok(ExitCode::from(2))
    }
}

fn gof_config(
    bin_width: Option<f64>,
    max_binned_mean: Option<f64>,
    min_bin_count: Option<usize>,
    k_display: Option<usize>,
) -> GofConfig<f64> {
    let mut cfg = GofConfig::default();
    if let Some(w) = bin_width {
        cfg.bin_width = w;
    }
    if let Some(m) = max_binned_mean {
        cfg.max_binned_mean = m;
    }
    if let Some(c) = min_bin_count {
        cfg.min_bin_count = c;
    }
    if let Some(k) = k_display {
        cfg.k_display = k;
    }
    cfg
}

fn display_labels(k_display: usize) -> Vec<String> {
    let mut labels: Vec<String> = (0..k_display).map(|k| k.to_string()).collect();
    labels.push(format!("{k_display}+"));
    labels
}

fn write_gof_charts(
    out_dir: &Path,
    report: &GofReport<f64>,
    cfg: &GofConfig<f64>,
    table: &str,
) -> Result<()> {
    let labels = display_labels(cfg.k_display);
    for (i, bin) in report.bins.iter().enumerate() {
        let observed = display_pmf(&bin.observed_pmf, cfg.k_display);
        let predicted = display_pmf(&bin.predicted_pmf, cfg.k_display);
        let chart = svg::grouped_bar_chart(
            &format!(
                "Observed vs predicted distribution, predicted mean in [{}, {})",
                bin.lower, bin.upper
            ),
            &[
                format!("{} sections", bin.n_sections),
                format!("{} crashes", bin.total_observed_crashes),
            ],
            &labels,
            &observed,
            &predicted,
            table,
        );
        write_atomic(&out_dir.join(format!("bin_{i:02}.svg")), chart.as_bytes())?;
    }

    let pooled_chart = svg::grouped_bar_chart(
        "Pooled observed vs predicted distribution (section-count weights)",
        &[format!(
            "{} sections in {} bins",
            report.bins.iter().map(|b| b.n_sections).sum::<usize>(),
            report.bins.len()
        )],
        &labels,
        &display_pmf(&report.pooled_observed, cfg.k_display),
        &display_pmf(&report.pooled_predicted, cfg.k_display),
        table,
    );
    write_atomic(&out_dir.join("pooled.svg"), pooled_chart.as_bytes())?;

    let points: Vec<(f64, f64)> = report
        .bins
        .iter()
        .map(|b| (b.predicted_mean, b.observed_mean))
        .collect();
    let means_chart = svg::scatter_chart(
        "Mean observed vs mean predicted crashes per data segment",
        "Mean predicted crashes",
        "Mean observed crashes",
        &points,
        true,
        &[
            format!("weighted pseudo-R2 = {:.4}", report.pseudo_r2_weighted),
            format!("unweighted pseudo-R2 = {:.4}", report.pseudo_r2_unweighted),
        ],
        table,
    );
    write_atomic(&out_dir.join("bin_means.svg"), means_chart.as_bytes())?;
    Ok(())
}

pub fn gof(args: GofArgs) -> Result<ExitCode> {
    let (records, _) = load(&args.input, &args.schema)?;
    let doc = FitDocument::read(&args.fit)?;
    let design: DesignMatrix64 = build_design(&records, &doc.model_spec)?;
    let cfg = gof_config(
        args.bin_width,
        args.max_binned_mean,
        args.min_bin_count,
        args.k_display,
    );

    let report = match run_gof(&doc.fit, &design, &cfg, args.force) {
        Ok(report) => report,
        Err(err) => {
            if let Some(code) = crate::analytic_exit(&err) {
                eprintln!("error: {err}");
                return Ok(code);
            }
            return Err(err);
        }
    };

    ensure_dir(&args.out_dir)?;
    let table = bins_csv(&report, cfg.k_display);
    write_atomic(&args.out_dir.join("gof_bins.csv"), table.as_bytes())?;
    GofDocument::new(dataset_fingerprint(&records), report.clone())
        .write(&args.out_dir.join("gof.json"))?;
    write_gof_charts(&args.out_dir, &report, &cfg, &table)?;

    log::info!(
        "{} bins, overflow {}, weighted pseudo-R2 {:.4}",
        report.bins.len(),
        report.overflow_indices.len(),
        report.pseudo_r2_weighted
    );
    Ok(ExitCode::SUCCESS)
}

pub fn report(args: ReportArgs) -> Result<ExitCode> {
    let (records, _) = load(&args.input, &args.schema)?;
    let doc = FitDocument::read(&args.fit)?;
    let design: DesignMatrix64 = build_design(&records, &doc.model_spec)?;
    ensure_dir(&args.out_dir)?;

    let means = predict_mean(&doc.fit, &design)?;

    // Naive observed-vs-predicted scatter: each section's realized count
    // against its predicted average. The apparent bias of this view is what
    // the binned procedure corrects for.
    let mut table = String::from("index,predicted_mean,observed_count\n");
    let points: Vec<(f64, f64)> = means
        .iter()
        .zip(&design.y)
        .enumerate()
        .map(|(i, (&m, &y))| {
            table.push_str(&format!("{i},{m},{y}\n"));
            (m, y as f64)
        })
        .collect();
    let chart = svg::scatter_chart(
        "Observed crashes vs predicted average (naive view)",
        "Predicted average crashes",
        "Observed crashes",
        &points,
        true,
        &[format!("{} sections", points.len())],
        &table,
    );
    write_atomic(&args.out_dir.join("observed_vs_predicted.svg"), chart.as_bytes())?;
    write_atomic(&args.out_dir.join("observed_vs_predicted.csv"), table.as_bytes())?;

    // Deviance residuals against the linear predictor.
    let residuals = deviance_residuals(&doc.fit, &design)?;
    let mut table = String::from("index,linear_predictor,deviance_residual\n");
    let points: Vec<(f64, f64)> = residuals
        .iter()
        .zip(&means)
        .enumerate()
        .map(|(i, (&d, &m))| {
            let eta = m.ln();
            table.push_str(&format!("{i},{eta},{d}\n"));
            (eta, d)
        })
        .collect();
    let chart = svg::scatter_chart(
        "Deviance residuals vs linear predictor",
        "Linear predictor",
        "Deviance residual",
        &points,
        false,
        &[],
        &table,
    );
    write_atomic(&args.out_dir.join("deviance_residuals.svg"), chart.as_bytes())?;
    write_atomic(&args.out_dir.join("deviance_residuals.csv"), table.as_bytes())?;

    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Serialize)]
struct CompareRow {
    model: String,
    family: String,
    converged: bool,
    n_params: usize,
    log_likelihood: f64,
    aic: f64,
    bic: f64,
    theta: f64,
    random_intercept_sd: Option<f64>,
    pseudo_r2_weighted: Option<f64>,
    pseudo_r2_unweighted: Option<f64>,
    preferred: bool,
}

#[derive(serde::Serialize)]
struct VuongRow {
    model_a: String,
    model_b: String,
    statistic: Option<f64>,
    p_value: Option<f64>,
    note: String,
}

#[derive(serde::Serialize)]
struct CompareDocument {
    schema_version: u32,
    rows: Vec<CompareRow>,
    vuong: Vec<VuongRow>,
    preferred: String,
}

pub fn compare(args: CompareArgs) -> Result<ExitCode> {
    if args.fits.len() < 2 {
        return Err(Error::Invalid("compare needs at least two --fit documents".into()));
    }
    let (records, _) = load(&args.input, &args.schema)?;
    let fingerprint = dataset_fingerprint(&records);

    let mut docs = Vec::new();
    for path in &args.fits {
        let doc = FitDocument::read(path)?;
        if doc.fit.n_obs != records.len() || doc.data_fingerprint != fingerprint {
            return Err(Error::Data(format!(
                "fit '{}' was estimated on a different dataset (fingerprint {} vs {}, n {} vs {})",
                path.display(),
                doc.data_fingerprint,
                fingerprint,
                doc.fit.n_obs,
                records.len()
            )));
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let design: DesignMatrix64 = build_design(&records, &doc.model_spec)?;
        docs.push((label, doc, design));
    }

    // Duplicate labels (e.g. the same file twice) get disambiguated.
    for i in 0..docs.len() {
        let duplicates = docs.iter().filter(|(l, _, _)| *l == docs[i].0).count();
        if duplicates > 1 {
            for (k, entry) in docs.iter_mut().enumerate() {
                entry.0 = format!("{}#{k}", entry.0);
            }
            break;
        }
    }

    let cfg = gof_config(args.bin_width, args.max_binned_mean, args.min_bin_count, None);
    let best_aic = docs
        .iter()
        .map(|(_, d, _)| d.fit.aic)
        .fold(f64::INFINITY, f64::min);

    let mut rows = Vec::new();
    for (label, doc, design) in &docs {
        let (r2w, r2u) = match run_gof(&doc.fit, design, &cfg, args.force) {
            Ok(report) => (
                Some(report.pseudo_r2_weighted),
                Some(report.pseudo_r2_unweighted),
            ),
            Err(err) => {
                log::warn!("GoF unavailable for '{label}': {err}");
                (None, None)
            }
        };
        rows.push(CompareRow {
            model: label.clone(),
            family: doc.fit.family.as_str().to_string(),
            converged: doc.fit.converged,
            n_params: doc.fit.n_params,
            log_likelihood: doc.fit.log_likelihood,
            aic: doc.fit.aic,
            bic: doc.fit.bic,
            theta: doc.fit.theta,
            random_intercept_sd: doc.fit.random_intercept_sd,
            pseudo_r2_weighted: r2w,
            pseudo_r2_unweighted: r2u,
            preferred: doc.fit.aic == best_aic,
        });
    }

    let mut vuong_rows = Vec::new();
    for i in 0..docs.len() {
        for j in (i + 1)..docs.len() {
            let (la, da, dda) = &docs[i];
            let (lb, db, ddb) = &docs[j];
            if da.fit.family == Family::GlmmNb || db.fit.family == Family::GlmmNb {
                continue;
            }
            match vuong_test(&da.fit, dda, &db.fit, ddb) {
                Ok(v) => vuong_rows.push(VuongRow {
                    model_a: la.clone(),
                    model_b: lb.clone(),
                    statistic: Some(v.statistic),
                    p_value: Some(v.p_value),
                    note: String::new(),
                }),
                Err(Error::DegenerateComparison(msg)) => vuong_rows.push(VuongRow {
                    model_a: la.clone(),
                    model_b: lb.clone(),
                    statistic: None,
                    p_value: None,
                    note: format!("degenerate comparison: {msg}"),
                }),
                Err(err) => return Err(err),
            }
        }
    }

    ensure_dir(&args.out_dir)?;
    let preferred = rows
        .iter()
        .find(|r| r.preferred)
        .map(|r| r.model.clone())
        .unwrap_or_default();

    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut table = String::from(
        "model,family,converged,n_params,log_likelihood,aic,bic,theta,random_intercept_sd,pseudo_r2_weighted,pseudo_r2_unweighted,preferred\n",
    );
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.family,
            r.converged,
            r.n_params,
            r.log_likelihood,
            r.aic,
            r.bic,
            r.theta,
            opt(r.random_intercept_sd),
            opt(r.pseudo_r2_weighted),
            opt(r.pseudo_r2_unweighted),
            r.preferred
        ));
    }
    write_atomic(&args.out_dir.join("comparison.csv"), table.as_bytes())?;

    let mut vuong_table = String::from("model_a,model_b,statistic,p_value,note\n");
    for v in &vuong_rows {
        vuong_table.push_str(&format!(
            "{},{},{},{},{}\n",
            v.model_a,
            v.model_b,
            opt(v.statistic),
            opt(v.p_value),
            v.note
        ));
    }
    write_atomic(&args.out_dir.join("vuong.csv"), vuong_table.as_bytes())?;

    let doc = CompareDocument {
        schema_version: SCHEMA_VERSION,
        rows,
        vuong: vuong_rows,
        preferred,
    };
    write_atomic(
        &args.out_dir.join("comparison.json"),
        (serde_json::to_string_pretty(&doc)? + "\n").as_bytes(),
    )?;

    Ok(ExitCode::SUCCESS)
}
