//! Velocity-dispersion indices over a simulated trajectory.
//!
//! SD and MAD are evaluated verbatim over all recorded samples, without
//! dividing by the number of steps, so the values scale with the horizon and
//! the step size. The `*_normalized` per-step variants are provided for
//! cross-configuration comparisons. All indices exclude the head vehicle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sd: f64,
    pub mad: f64,
    /// `sd / sqrt(samples)`: root mean (over time) of the per-step sum of
    /// squared deviations, scaled by 1/(N-1).
    pub sd_normalized: f64,
    /// `mad / samples`: per-step mean absolute deviation sum, scaled by 1/N.
    pub mad_normalized: f64,
    /// Max |v_i(t) - v_star| per vehicle, head included at index 0.
    pub peak_deviation: Vec<f64>,
}

fn follower_deviations(traj: &Trajectory) -> impl Iterator<Item = (f64, f64)> + '_ {
    // (squared, absolute) deviation sums per sample
    traj.velocities.iter().map(move |sample| {
        let v = &sample[1..];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let (mut sq, mut ab) = (0.0, 0.0);
        for &vi in v {
            let d = vi - mean;
            sq += d * d;
            ab += d.abs();
        }
        (sq, ab)
    })
}

/// `sqrt( 1/(N-1) * sum_t sum_i (v_i(t) - vbar(t))^2 )`.
pub fn sd(traj: &Trajectory) -> Result<f64> {
    let n = traj.n_vehicles();
    if n < 2 {
        return Err(Error::InvalidInput(
            "SD requires at least 2 vehicles".into(),
        ));
    }
    let total: f64 = follower_deviations(traj).map(|(sq, _)| sq).sum();
    Ok((total / (n as f64 - 1.0)).sqrt())
}

/// `1/N * sum_t sum_i |v_i(t) - vbar(t)|`.
pub fn mad(traj: &Trajectory) -> f64 {
    let n = traj.n_vehicles();
    let total: f64 = follower_deviations(traj).map(|(_, ab)| ab).sum();
    total / n as f64
}

/// Per-vehicle peak absolute velocity deviation from `v_star`; index 0 is
/// the head vehicle.
pub fn peak_deviation_profile(traj: &Trajectory, v_star: f64) -> Vec<f64> {
    let width = traj.n_vehicles() + 1;
    let mut peaks = vec![0.0f64; width];
    for sample in &traj.velocities {
        for (i, &v) in sample.iter().enumerate() {
            peaks[i] = peaks[i].max((v - v_star).abs());
        }
    }
    peaks
}

pub fn report(traj: &Trajectory) -> Result<MetricsReport> {
    let sd = sd(traj)?;
    let mad = mad(traj);
    let samples = traj.n_samples() as f64;
    Ok(MetricsReport {
        sd,
        mad,
        sd_normalized: sd / samples.sqrt(),
        mad_normalized: mad / samples,
        peak_deviation: peak_deviation_profile(traj, traj.config.v_star),
    })
}
