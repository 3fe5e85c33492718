//! Summary statistics over sampled vehicle states.

use crate::runlog::StateFrame;

/// Pooled standard deviation of every vehicle's speed over frames with
/// `t >= t_from`. `None` when no samples qualify.
pub fn speed_std(frames: &[StateFrame], t_from: f64) -> Option<f64> {
    let speeds = frames
        .iter()
        .filter(|f| f.t >= t_from)
        .flat_map(|f| f.vehicles.iter().map(|v| v.speed));
    let (n, _, m2) = speeds.fold((0u64, 0.0f64, 0.0f64), |(n, mean, m2), x| {
        // Welford update.
        let n = n + 1;
        let d = x - mean;
        let mean = mean + d / n as f64;
        (n, mean, m2 + d * (x - mean))
    });
    (n > 0).then(|| (m2 / n as f64).sqrt())
}

/// Mean speed over the same samples.
pub fn mean_speed(frames: &[StateFrame], t_from: f64) -> Option<f64> {
    let (n, sum) = frames
        .iter()
        .filter(|f| f.t >= t_from)
        .flat_map(|f| f.vehicles.iter().map(|v| v.speed))
        .fold((0u64, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}
