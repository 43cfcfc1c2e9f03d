//! Per-frame latency of the streaming tracker.

use std::fmt::Write as _;
use std::time::Instant;

use rectrack_core::network::NetworkParams;
use rectrack_core::synthgen::{generate, PatchSource, SynthConfig};
use rectrack_core::tracker::{Tracker, TrackerConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub latencies_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub fps: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl BenchReport {
    pub fn from_latencies(latencies_ms: Vec<f64>) -> Self {
        let mean_ms = latencies_ms.iter().sum::<f64>() / latencies_ms.len().max(1) as f64;
        let median_ms = median(&latencies_ms);
        let fps = if mean_ms > 0.0 { 1000.0 / mean_ms } else { f64::INFINITY };
        Self { latencies_ms, mean_ms, median_ms, fps }
    }

    /// Median latency over steps `[center - half, center + half]`, clipped
    /// to the run (1-based step numbers).
    pub fn median_around(&self, center: usize, half: usize) -> f64 {
        let n = self.latencies_ms.len();
        let lo = center.saturating_sub(half).max(1) - 1;
        let hi = (center + half).min(n);
        median(&self.latencies_ms[lo.min(hi)..hi])
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("frame,latency_ms\n");
        for (i, l) in self.latencies_ms.iter().enumerate() {
            let _ = writeln!(s, "{},{l}", i + 1);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "frames {}\nmean_latency_ms {:.4}\nmedian_latency_ms {:.4}\nfps {:.2}\n",
            self.latencies_ms.len(),
            self.mean_ms,
            self.median_ms,
            self.fps
        )
    }
}

/// Times `frames` tracking steps on a generated sequence.
pub fn run(
    params: &NetworkParams,
    frames: usize,
    synth: &SynthConfig,
    seed: u64,
    tracker: TrackerConfig,
) -> Result<BenchReport> {
    if frames == 0 {
        return Err(Error::Usage("benchmark needs at least one frame".into()));
    }
    let seq = generate(&PatchSource::Procedural, synth, frames + 1, seed)?;
    let mut t = Tracker::init(params, &seq.frames[0], &seq.truth[0], tracker)?;
    let mut lat = Vec::with_capacity(frames);
    for f in &seq.frames[1..] {
        let start = Instant::now();
        t.track_step(f)?;
        lat.push(start.elapsed().as_secs_f64() * 1000.0);
    }
    Ok(BenchReport::from_latencies(lat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let r = BenchReport::from_latencies(vec![2.0, 4.0, 3.0, 7.0]);
        assert_eq!(r.mean_ms, 4.0);
        assert_eq!(r.median_ms, 3.5);
        assert_eq!(r.fps, 250.0);
        assert_eq!(r.median_around(1, 1), 3.0);
        assert_eq!(r.median_around(4, 0), 7.0);
    }
}
