use serde::{Deserialize, Serialize};

use super::run::SimTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingMetrics {
    /// `max ‖s‖∞` over the trace.
    pub max_s: f64,
    /// `sup ‖ṡ‖` from central differences.
    pub max_sdot: f64,
    /// Band excluded from the reaching audit: `α + 5·dt·sup‖ṡ‖`.
    pub layer: f64,
    /// Samples outside the band with `sᵀṡ < 0`, as a fraction of all samples
    /// outside it (1 when there are none).
    pub reaching_fraction: f64,
    pub samples_outside: usize,
    /// Sign changes of the switching term per second.
    pub chattering_index: f64,
}

/// Band multiplier relating sample-and-hold drift of `s` to `dt·sup‖ṡ‖`.
pub const BAND_FACTOR: f64 = 5.0;

fn sdot(tr: &SimTrace) -> Vec<Vec<f64>> {
    let n = tr.len();
    let w = tr.s.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let dt = tr.t[b] - tr.t[a];
            (0..w).map(|j| if dt > 0.0 { (tr.s[b][j] - tr.s[a][j]) / dt } else { 0.0 }).collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn sliding_metrics(tr: &SimTrace) -> SlidingMetrics {
    let ds = sdot(tr);
    let max_s = tr.s.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_sdot = ds.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let layer = tr.alpha + BAND_FACTOR * tr.dt * max_sdot;
    let mut outside = 0;
    let mut reaching = 0;
    for (s, d) in tr.s.iter().zip(&ds) {
        if norm(s) > layer {
            outside += 1;
            if s.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                reaching += 1;
            }
        }
    }
    // Zero stretches inside the layer do not count; only flips between
    // consecutive nonzero values do.
    let w = tr.switching.first().map_or(0, Vec::len);
    let mut last = vec![0.0f64; w];
    let mut changes = 0usize;
    for row in &tr.switching {
        for (l, &v) in last.iter_mut().zip(row) {
            if v != 0.0 {
                if *l * v < 0.0 {
                    changes += 1;
                }
                *l = v;
            }
        }
    }
    let duration = match (tr.t.first(), tr.t.last()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => 1.0,
    };
    SlidingMetrics {
        max_s,
        max_sdot,
        layer,
        reaching_fraction: if outside == 0 { 1.0 } else { reaching as f64 / outside as f64 },
        samples_outside: outside,
        chattering_index: changes as f64 / duration,
    }
}
