use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crjmcmc::io::{write_ground_truth, write_trace_csv};
use crjmcmc::rng::stream_rng;
use crjmcmc::sim::{simulate_trace, SimConfig, SnrDefinition};

use crate::manifest::ManifestBuilder;
use crate::SimulateArgs;

/// Simulation grid: the cartesian product of intensity, SNR, and fluorophore
/// count, with `replicates` traces per cell. Defaults span typical
/// single-molecule conditions: 500/1000/2000 photons, SNR 0.01/0.1/1, one
/// to four fluorophores, ten replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimGrid {
    pub mu_f: Vec<f64>,
    pub snr: Vec<f64>,
    pub n_fluorophores: Vec<usize>,
    pub replicates: usize,
    pub snr_definition: SnrDefinition,
    pub dur_blink: f64,
    pub dur_dark: f64,
    pub p_blink: f64,
    pub p_dark: f64,
    pub p_bleach: f64,
    pub bin_width: f64,
    pub extension_frames: (usize, usize),
    pub initial_dark_prob: f64,
}

impl Default for SimGrid {
    fn default() -> Self {
        let base = SimConfig::default();
        Self {
            mu_f: vec![500.0, 1000.0, 2000.0],
            snr: vec![0.01, 0.1, 1.0],
            n_fluorophores: vec![1, 2, 3, 4],
            replicates: 10,
            snr_definition: base.snr_definition,
            dur_blink: base.dur_blink,
            dur_dark: base.dur_dark,
            p_blink: base.p_blink,
            p_dark: base.p_dark,
            p_bleach: base.p_bleach,
            bin_width: base.bin_width,
            extension_frames: base.extension_frames,
            initial_dark_prob: base.initial_dark_prob,
        }
    }
}

impl SimGrid {
    fn cells(&self) -> Vec<(SimConfig, String)> {
        let mut out = Vec::new();
        for &mu_f in &self.mu_f {
            for &snr in &self.snr {
                for &n in &self.n_fluorophores {
                    for rep in 0..self.replicates {
                        let cfg = SimConfig {
                            n_fluorophores: n,
                            mu_f_photons: mu_f,
                            snr,
                            snr_definition: self.snr_definition,
                            dur_blink: self.dur_blink,
                            dur_dark: self.dur_dark,
                            p_blink: self.p_blink,
                            p_dark: self.p_dark,
                            p_bleach: self.p_bleach,
                            bin_width: self.bin_width,
                            extension_frames: self.extension_frames,
                            initial_dark_prob: self.initial_dark_prob,
                        };
                        let stem = format!("trace_mu{mu_f:.0}_snr{snr}_n{n}_r{rep:02}");
                        out.push((cfg, stem));
                    }
                }
            }
        }
        out
    }
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let grid: SimGrid = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| {
                anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column())
            })?
        }
        None => SimGrid::default(),
    };
    std::fs::create_dir_all(&args.out)?;

    let cells = grid.cells();
    let mut manifest =
        ManifestBuilder::new("simulate", Some(args.seed), serde_json::to_value(&grid)?);
    if let Some(path) = &args.config {
        manifest.input(path);
    }

    let written: Vec<(String, String)> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, (cfg, stem))| -> Result<(String, String)> {
            let mut rng = stream_rng(args.seed, idx as u64);
            let (trace, truth) = simulate_trace(cfg, &mut rng)?;
            let trace_path = args.out.join(format!("{stem}.csv"));
            let truth_path = args.out.join(format!("{stem}.truth.json"));
            write_trace_csv(&trace_path, &trace)?;
            write_ground_truth(&truth_path, &truth)?;
            Ok((
                trace_path.display().to_string(),
                truth_path.display().to_string(),
            ))
        })
        .collect::<Result<_>>()?;

    for (trace_path, truth_path) in &written {
        manifest.output(Path::new(trace_path));
        manifest.output(Path::new(truth_path));
    }
    manifest.write(&args.out.join("manifest.json"))?;
    println!(
        "simulated {} traces into {}",
        cells.len(),
        args.out.display()
    );
    Ok(())
}
