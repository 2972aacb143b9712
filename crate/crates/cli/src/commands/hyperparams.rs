use std::collections::BTreeMap;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crjmcmc::gibbs::{estimate_trace_hyperparams, pool_hyperparams, WeightScheme};
use crjmcmc::io::{read_ground_truth, read_trace_csv};
use crjmcmc::model::Hyperparams;
use crjmcmc::sampler::ProposalSettings;

use crate::commands::{glob_traces, group_label, truth_sidecar};
use crate::manifest::ManifestBuilder;
use crate::HyperparamsArgs;

/// Pooled hyperparameters per experiment group, as written by the
/// `hyperparams` command and consumed by `analyze`.
#[derive(Debug, Serialize, Deserialize)]
pub struct HyperFile {
    pub groups: BTreeMap<String, GroupEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroupEntry {
    pub n_traces: usize,
    pub hyperparams: Hyperparams,
}

pub fn run(args: HyperparamsArgs) -> Result<()> {
    let paths = glob_traces(&args.traces)?;
    let proposal = ProposalSettings {
        window_size: args.window,
        base_variance: args.base_variance,
        ..ProposalSettings::default()
    };
    let scheme = if args.heterogeneous {
        WeightScheme::Heterogeneous
    } else {
        WeightScheme::InverseTraceVariance
    };

    // estimate per trace, keyed by its experiment group
    let estimates: Vec<(String, crjmcmc::gibbs::TraceHyperEstimate)> = paths
        .par_iter()
        .map(|path| -> Result<_> {
            let trace =
                read_trace_csv(path).with_context(|| format!("reading {}", path.display()))?;
            let dist = proposal.build(&trace)?;
            let est = estimate_trace_hyperparams(&trace, &dist, args.floor, scheme);
            let sidecar = truth_sidecar(path);
            let label = match (&args.tag, sidecar.is_file()) {
                (Some(tag), _) => tag.clone(),
                (None, true) => group_label(&read_ground_truth(&sidecar)?),
                (None, false) => "default".to_string(),
            };
            Ok((label, est))
        })
        .collect::<Result<_>>()?;

    let mut by_group: BTreeMap<String, Vec<crjmcmc::gibbs::TraceHyperEstimate>> = BTreeMap::new();
    for (label, est) in estimates {
        by_group.entry(label).or_default().push(est);
    }

    let mut groups = BTreeMap::new();
    for (label, ests) in by_group {
        let pooled = pool_hyperparams(&ests, args.scaling_f, args.scaling_b)
            .with_context(|| format!("pooling group '{label}'"))?;
        groups.insert(
            label,
            GroupEntry {
                n_traces: ests.len(),
                hyperparams: pooled,
            },
        );
    }

    let mut manifest = ManifestBuilder::new(
        "hyperparams",
        None,
        serde_json::json!({
            "traces": args.traces,
            "scaling_f": args.scaling_f,
            "scaling_b": args.scaling_b,
            "floor": args.floor,
            "heterogeneous": args.heterogeneous,
            "tag": args.tag,
            "window": args.window,
            "base_variance": args.base_variance,
        }),
    );
    for p in &paths {
        manifest.input(p);
    }
    manifest.output(&args.out);

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    let out = HyperFile { groups };
    serde_json::to_writer_pretty(file, &out)?;
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "pooled {} traces into {} group(s) at {}",
        paths.len(),
        out.groups.len(),
        args.out.display()
    );
    Ok(())
}
