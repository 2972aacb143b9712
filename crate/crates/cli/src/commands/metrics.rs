use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use crjmcmc::io::read_ground_truth;
use crjmcmc::metrics::{framewise_report, mean_with_ci, rmse_intensity};
use crjmcmc::sampler::PosteriorSummary;

use crate::manifest::ManifestBuilder;
use crate::MetricsArgs;

struct TraceRow {
    id: String,
    frames: usize,
    accuracy: f64,
    precision: Option<f64>,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    kappa: f64,
    rmse: f64,
    abs_mu_f: f64,
    abs_mu_b: f64,
    abs_sigma_f2: f64,
    abs_sigma_b2: f64,
}

pub fn run(args: MetricsArgs) -> Result<()> {
    let estimates = collect(&args.estimates, ".summary.json")?;
    let truths = collect(&args.truth, ".truth.json")?;

    let est_only: Vec<&String> = estimates
        .keys()
        .filter(|k| !truths.contains_key(*k))
        .collect();
    let truth_only: Vec<&String> = truths
        .keys()
        .filter(|k| !estimates.contains_key(*k))
        .collect();
    if !est_only.is_empty() || !truth_only.is_empty() {
        bail!(
            "trace IDs do not match: estimates without truth {est_only:?}, \
             truth without estimates {truth_only:?}"
        );
    }
    if estimates.is_empty() {
        bail!("no summaries found under {}", args.estimates.display());
    }

    let mut rows = Vec::new();
    for (id, est_path) in &estimates {
        let text = std::fs::read_to_string(est_path)
            .with_context(|| format!("reading {}", est_path.display()))?;
        let summary: PosteriorSummary = serde_json::from_str(&text).map_err(|e| {
            anyhow::anyhow!("{}:{}:{}: {e}", est_path.display(), e.line(), e.column())
        })?;
        let truth = read_ground_truth(&truths[id])?;
        if truth.counts.len() != summary.frame_counts.len() {
            bail!(
                "{id}: truth has {} frames but the summary covers {}",
                truth.counts.len(),
                summary.frame_counts.len()
            );
        }
        let report = framewise_report(&truth.counts, &summary.frame_counts)?;
        let rmse = rmse_intensity(&truth.intensity(), &summary.predicted_intensity)?;
        rows.push(TraceRow {
            id: id.clone(),
            frames: truth.counts.len(),
            accuracy: report.accuracy,
            precision: report.precision,
            sensitivity: report.sensitivity,
            specificity: report.specificity,
            kappa: report.cohens_kappa,
            rmse,
            abs_mu_f: (truth.mu_f - summary.mu_f.mean).abs(),
            abs_mu_b: (truth.mu_b - summary.mu_b.mean).abs(),
            abs_sigma_f2: (truth.sigma_f2 - summary.sigma_f2.mean).abs(),
            abs_sigma_b2: (truth.sigma_b2 - summary.sigma_b2.mean).abs(),
        });
    }

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(
        w,
        "trace,frames,accuracy,precision,sensitivity,specificity,cohens_kappa,rmse,\
         abs_mu_f,abs_mu_b,abs_sigma_f2,abs_sigma_b2"
    )?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.id,
            r.frames,
            r.accuracy,
            fmt_opt(r.precision),
            fmt_opt(r.sensitivity),
            fmt_opt(r.specificity),
            r.kappa,
            r.rmse,
            r.abs_mu_f,
            r.abs_mu_b,
            r.abs_sigma_f2,
            r.abs_sigma_b2
        )?;
    }
    // aggregate rows: mean and 95% confidence half-width per metric column
    let columns: [fn(&TraceRow) -> Option<f64>; 10] = [
        |r| Some(r.accuracy),
        |r| r.precision,
        |r| r.sensitivity,
        |r| r.specificity,
        |r| Some(r.kappa),
        |r| Some(r.rmse),
        |r| Some(r.abs_mu_f),
        |r| Some(r.abs_mu_b),
        |r| Some(r.abs_sigma_f2),
        |r| Some(r.abs_sigma_b2),
    ];
    let mut mean_cells = vec!["mean".to_string(), rows.len().to_string()];
    let mut ci_cells = vec!["ci95".to_string(), rows.len().to_string()];
    for f in columns {
        let vals: Vec<f64> = rows.iter().filter_map(f).collect();
        let (m, ci) = mean_with_ci(&vals);
        mean_cells.push(if m.is_nan() {
            String::new()
        } else {
            m.to_string()
        });
        ci_cells.push(if ci.is_nan() {
            String::new()
        } else {
            ci.to_string()
        });
    }
    writeln!(w, "{}", mean_cells.join(","))?;
    writeln!(w, "{}", ci_cells.join(","))?;
    w.flush()?;

    let mut manifest = ManifestBuilder::new(
        "metrics",
        None,
        serde_json::json!({
            "estimates": args.estimates.display().to_string(),
            "truth": args.truth.display().to_string(),
        }),
    );
    for p in estimates.values().chain(truths.values()) {
        manifest.input(p);
    }
    manifest.output(&args.out);
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "wrote metrics for {} traces to {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}

/// Maps trace IDs to files with the given suffix under a directory.
fn collect(dir: &PathBuf, suffix: &str) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix(suffix) {
            out.insert(id.to_string(), path);
        }
    }
    Ok(out)
}
