//! Shared helpers for unit tests. Not part of the public API.

use nalgebra::{DMatrix, DVector, RowDVector};

/// Steady-state output amplitude of `x' = A x + h sin(w t)`, `y = c x`,
/// measured in the time domain: RK4 integration past the transient, then a
/// Fourier projection of y over an integer number of periods.
pub fn sinusoid_response_amplitude(
    a: &DMatrix<f64>,
    h: &DVector<f64>,
    c: &RowDVector<f64>,
    omega: f64,
) -> f64 {
    let n = a.nrows();
    let period = 2.0 * std::f64::consts::PI / omega;
    let t_settle = 120.0;
    let n_periods = (t_settle / period).ceil().max(4.0);
    let t_end = t_settle + n_periods * period;
    let dt = (period / 400.0).min(0.01);
    let steps = (t_end / dt).ceil() as usize;
    let dt = t_end / steps as f64;

    let f = |t: f64, x: &DVector<f64>| a * x + h * (omega * t).sin();
    let mut x = DVector::zeros(n);
    let mut t = 0.0;
    let mut sin_acc = 0.0;
    let mut cos_acc = 0.0;
    for _ in 0..steps {
        if t >= t_settle {
            let y: f64 = c.iter().zip(x.iter()).map(|(&ci, &xi)| ci * xi).sum();
            sin_acc += y * (omega * t).sin() * dt;
            cos_acc += y * (omega * t).cos() * dt;
        }
        let k1 = f(t, &x);
        let k2 = f(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)));
        let k3 = f(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)));
        let k4 = f(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        t += dt;
    }
    let window = t_end - t_settle;
    2.0 * (sin_acc * sin_acc + cos_acc * cos_acc).sqrt() / window
}
