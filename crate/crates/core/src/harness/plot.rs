//! Aggregated regret curves for external plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::experiment::{read_records, RunRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub t: usize,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Percentile of sorted `values` with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean and 10th/90th percentile of cumulative regret at each round, across
/// seeds. Seeds must share a horizon.
pub fn plot_rows(runs: &[Vec<RunRecord>]) -> Result<Vec<PlotRow>> {
    let horizon = match runs.first() {
        Some(r) if !r.is_empty() => r.len(),
        _ => return Err(Error::input("no run records to aggregate")),
    };
    if runs.iter().any(|r| r.len() != horizon) {
        return Err(Error::input("runs have different horizons"));
    }
    let mut column = vec![0.0; runs.len()];
    Ok((0..horizon)
        .map(|i| {
            for (c, run) in column.iter_mut().zip(runs) {
                *c = run[i].cum_regret;
            }
            let mean = column.iter().sum::<f64>() / column.len() as f64;
            column.sort_by(f64::total_cmp);
            PlotRow {
                t: runs[0][i].t,
                mean,
                p10: percentile(&column, 0.1),
                p90: percentile(&column, 0.9),
            }
        })
        .collect())
}

/// Per-seed CSV files (`seed_*.csv`) in `dir`, sorted by name.
pub fn seed_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every per-seed CSV in `run_dir` and writes `t,mean_cum_regret,p10,p90`
/// rows to `out`.
pub fn emit_plot_data(run_dir: &Path, out: &Path) -> Result<usize> {
    let runs = seed_files(run_dir)?
        .iter()
        .map(|p| read_records(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = plot_rows(&runs)?;
    write_plot_rows(out, &rows)?;
    Ok(rows.len())
}

pub fn write_plot_rows(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "t,mean_cum_regret,p10,p90").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6},{:.6}", r.t, r.mean, r.p10, r.p90).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(regrets: &[f64]) -> Vec<RunRecord> {
        let mut cum = 0.0;
        regrets
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                cum += r;
                RunRecord {
                    seed: 0,
                    t: i + 1,
                    context: 0,
                    action: 0,
                    propensity: 1.0,
                    reward: 0.0,
                    instant_regret: r,
                    cum_regret: cum,
                    n_active: 1,
                    solver_iters: 0,
                    solver_violation: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn empty_is_input_error() {
        assert!(matches!(plot_rows(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn single_seed_percentiles_equal_mean() {
        let rows = plot_rows(&[run(&[0.5, 0.0, 0.25])]).unwrap();
        for r in &rows {
            assert_eq!(r.p10, r.mean);
            assert_eq!(r.p90, r.mean);
        }
        assert!(rows.windows(2).all(|w| w[1].mean >= w[0].mean));
    }

    #[test]
    fn interpolated_percentiles() {
        let sorted: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(percentile(&sorted, 0.1), 1.0);
        assert!((percentile(&[0.0, 1.0], 0.9) - 0.9).abs() < 1e-15);
    }
}
