//! Textual metrics output: per-episode CSVs, the multi-algorithm comparison
//! table, and interaction-aligned curves averaged across seeds.

use crate::config::Algorithm;
use crate::learner::EpisodeRow;

pub const EPISODE_HEADER: &str =
    "run_seed,episode,interactions,episode_return,episode_length,mean_loss,wall_ms";

fn push_row(out: &mut String, row: &EpisodeRow) {
    let loss = row.mean_loss.map(|l| l.to_string()).unwrap_or_default();
    out.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        row.run_seed,
        row.episode,
        row.interactions,
        row.episode_return,
        row.episode_length,
        loss,
        row.wall_ms
    ));
}

/// One training run as CSV text. Float fields use the shortest round-trip
/// decimal form, so equal runs serialize identically.
pub fn episodes_csv(rows: &[EpisodeRow]) -> String {
    let mut out = String::from(EPISODE_HEADER);
    out.push('\n');
    for row in rows {
        push_row(&mut out, row);
    }
    out
}

/// Multi-algorithm sweep as one CSV with a leading algorithm tag column.
pub fn compare_csv(entries: &[(Algorithm, EpisodeRow)]) -> String {
    let mut out = String::from("algorithm,");
    out.push_str(EPISODE_HEADER);
    out.push('\n');
    for (algorithm, row) in entries {
        out.push_str(algorithm.as_str());
        out.push(',');
        push_row(&mut out, row);
    }
    out
}

/// Mean of the trailing `window` values (all of them when fewer exist).
pub fn trailing_mean(values: &[f64], window: usize) -> f64 {
    let take = values.len().min(window.max(1));
    if take == 0 {
        return 0.0;
    }
    values[values.len() - take..].iter().sum::<f64>() / take as f64
}

/// Per-seed learning curves resampled onto a shared interaction grid and
/// averaged. Each seed's curve is the trailing-`window` mean of episode
/// returns, treated as a step function of cumulative interactions; grid
/// points before a seed's first completed episode take its first value.
/// Columns: interactions, mean_return, std_return (population).
pub fn averaged_curve_csv(
    per_seed: &[Vec<EpisodeRow>],
    max_interactions: u64,
    points: usize,
    window: usize,
) -> String {
    let mut out = String::from("interactions,mean_return,std_return\n");
    let points = points.max(1);
    let curves: Vec<(Vec<u64>, Vec<f64>)> = per_seed
        .iter()
        .filter(|rows| !rows.is_empty())
        .map(|rows| {
            let xs: Vec<u64> = rows.iter().map(|r| r.interactions).collect();
            let mut returns = Vec::with_capacity(rows.len());
            let mut ys = Vec::with_capacity(rows.len());
            for row in rows {
                returns.push(row.episode_return);
                ys.push(trailing_mean(&returns, window));
            }
            (xs, ys)
        })
        .collect();
    if curves.is_empty() {
        return out;
    }
    for i in 1..=points {
        let x = max_interactions * i as u64 / points as u64;
        let values: Vec<f64> = curves
            .iter()
            .map(|(xs, ys)| {
                match xs.partition_point(|&v| v <= x) {
                    0 => ys[0],
                    n => ys[n - 1],
                }
            })
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        out.push_str(&format!("{},{},{}\n", x, mean, var.sqrt()));
    }
    out
}
