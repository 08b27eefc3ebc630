use std::f64::consts::PI;

/// Ricker wavelet with peak frequency `f0` centred at `t0`.
pub fn ricker(t: f64, f0: f64, t0: f64) -> f64 {
    let a = (PI * f0 * (t - t0)).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}
