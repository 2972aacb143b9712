//! File formats: trace CSV (`frame,time,intensity`), ground-truth and
//! hyperparameter JSON documents, and per-iteration sample CSV dumps.
//!
//! Parse failures always report file, line, and column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::sampler::ChainSample;
use crate::sim::GroundTruth;
use crate::trace::Trace;

/// Writes a trace as `frame,time,intensity` rows.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["frame", "time", "intensity"])
        .map_err(|e| csv_error(path, &e))?;
    for (i, (&t, &y)) in trace.times().iter().zip(trace.intensities()).enumerate() {
        w.write_record(&[i.to_string(), format_f64(t), format_f64(y)])
            .map_err(|e| csv_error(path, &e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]. The end-of-trace time is
/// taken as the final frame time plus half the median frame spacing.
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(File::open(path)?));
    let headers = r.headers().map_err(|e| csv_error(path, &e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                col: 0,
                msg: format!("missing column '{name}'"),
            })
    };
    let t_col = col("time")?;
    let y_col = col("intensity")?;
    let mut times = Vec::new();
    let mut intensities = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let pos = record.position().cloned();
        let line = pos.as_ref().map(|p| p.line()).unwrap_or(0);
        let parse = |idx: usize| -> Result<f64> {
            let field = record.get(idx).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line,
                col: idx as u64 + 1,
                msg: "missing field".into(),
            })?;
            field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line,
                col: idx as u64 + 1,
                msg: format!("bad number '{field}': {e}"),
            })
        };
        times.push(parse(t_col)?);
        intensities.push(parse(y_col)?);
    }
    if times.len() < 2 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: times.len() as u64 + 1,
            col: 0,
            msg: "trace needs at least two frames".into(),
        });
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = gaps[gaps.len() / 2];
    let l_end = times[times.len() - 1] + 0.5 * dt;
    Trace::new(times, intensities, l_end)
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, truth)?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let f = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

pub fn write_hyperparams(path: &Path, hyper: &Hyperparams) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, hyper)?;
    Ok(())
}

pub fn read_hyperparams(path: &Path) -> Result<Hyperparams> {
    let f = BufReader::new(File::open(path)?);
    let hyper: Hyperparams = serde_json::from_reader(f)?;
    hyper.validate()?;
    Ok(hyper)
}

/// Dumps a chain trajectory, one row per iteration. Location and count
/// vectors are pipe-separated within their fields.
pub fn write_sample_csv(path: &Path, sample: &ChainSample) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "iteration,k,k_t,mu_f,mu_b,sigma_f2,sigma_b2,log_posterior,move,log_acceptance,accepted,locations,counts"
    )?;
    for (i, r) in sample.records.iter().enumerate() {
        let locs: Vec<String> = r.s.iter().map(|&v| format_f64(v)).collect();
        let counts: Vec<String> = r.n.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:?},{},{},{},{}",
            i,
            r.k,
            r.k_t,
            format_f64(r.params.mu_f),
            format_f64(r.params.mu_b),
            format_f64(r.params.sigma_f2),
            format_f64(r.params.sigma_b2),
            format_f64(r.log_posterior),
            r.move_kind,
            format_f64(r.log_acceptance),
            r.accepted,
            locs.join("|"),
            counts.join("|"),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    // shortest round-trip representation keeps outputs byte-reproducible
    format!("{v}")
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    let (line, col) = match e.position() {
        Some(p) => (p.line(), 0),
        None => (0, 0),
    };
    Error::Parse {
        path: path.display().to_string(),
        line,
        col,
        msg: e.to_string(),
    }
}
