use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crjmcmc::io::{read_ground_truth, read_trace_csv, write_sample_csv};
use crjmcmc::rng::derive_seed;
use crjmcmc::sampler::{analyze, AnalysisConfig};

use crate::commands::hyperparams::HyperFile;
use crate::commands::{glob_traces, group_label, truth_sidecar};
use crate::manifest::ManifestBuilder;
use crate::AnalyzeArgs;

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let paths = glob_traces(&args.traces)?;
    let hyper_text = std::fs::read_to_string(&args.hyper)
        .with_context(|| format!("reading {}", args.hyper.display()))?;
    let hyper_file: HyperFile = serde_json::from_str(&hyper_text).map_err(|e| {
        anyhow::anyhow!("{}:{}:{}: {e}", args.hyper.display(), e.line(), e.column())
    })?;
    if hyper_file.groups.is_empty() {
        bail!("{} contains no hyperparameter groups", args.hyper.display());
    }

    let mut config: AnalysisConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| {
                anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column())
            })?
        }
        None => AnalysisConfig {
            tau_frames: Some(10.0),
            ..AnalysisConfig::default()
        },
    };
    if let Some(max_iter) = args.max_iter {
        config.chain.max_iter = max_iter;
    }
    if let Some(threshold) = args.psrf_threshold {
        config.chain.psrf_threshold = threshold;
    }
    std::fs::create_dir_all(&args.out)?;

    let outputs: Vec<Vec<String>> = paths
        .par_iter()
        .enumerate()
        .map(|(idx, path)| -> Result<Vec<String>> {
            let trace =
                read_trace_csv(path).with_context(|| format!("reading {}", path.display()))?;
            let hyper = resolve_group(&hyper_file, path)?;
            let mut config = config.clone();
            config.chain.seed = derive_seed(args.seed, idx as u64);
            let result = analyze(&trace, hyper, &config)
                .with_context(|| format!("analysing {}", path.display()))?;

            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("trace")
                .to_string();
            let mut written = Vec::new();
            let summary_path = args.out.join(format!("{stem}.summary.json"));
            let file = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
            serde_json::to_writer_pretty(file, &result.summary)?;
            written.push(summary_path.display().to_string());
            if args.dump_samples {
                for (c, chain) in result.chains.iter().enumerate() {
                    let chain_path = args.out.join(format!("{stem}.chain{c}.csv"));
                    write_sample_csv(&chain_path, chain)?;
                    written.push(chain_path.display().to_string());
                }
            }
            Ok(written)
        })
        .collect::<Result<_>>()?;

    let mut manifest = ManifestBuilder::new(
        "analyze",
        Some(args.seed),
        serde_json::json!({
            "traces": args.traces,
            "hyper": args.hyper.display().to_string(),
            "config": serde_json::to_value(&config)?,
            "dump_samples": args.dump_samples,
        }),
    );
    for p in &paths {
        manifest.input(p);
    }
    manifest.input(&args.hyper);
    for group in outputs.iter().flatten() {
        manifest.output(Path::new(group));
    }
    manifest.write(&args.out.join("manifest.json"))?;
    println!(
        "analysed {} traces into {}",
        paths.len(),
        args.out.display()
    );
    Ok(())
}

/// Picks the hyperparameter group for a trace: its simulation group when a
/// ground-truth sidecar exists, falling back to the single available group
/// (covers pools built with a `--tag`).
fn resolve_group<'a>(
    hyper_file: &'a HyperFile,
    trace_path: &Path,
) -> Result<&'a crjmcmc::model::Hyperparams> {
    let sidecar = truth_sidecar(trace_path);
    if sidecar.is_file() {
        let label = group_label(&read_ground_truth(&sidecar)?);
        if let Some(entry) = hyper_file.groups.get(&label) {
            return Ok(&entry.hyperparams);
        }
    }
    if hyper_file.groups.len() == 1 {
        return Ok(&hyper_file.groups.values().next().unwrap().hyperparams);
    }
    bail!(
        "cannot pick a hyperparameter group for {} among {:?}",
        trace_path.display(),
        hyper_file.groups.keys().collect::<Vec<_>>()
    )
}
