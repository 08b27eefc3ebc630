//! Constant-density acoustic propagation on a staggered grid.
//!
//! Pressure lives at cell centres, `vx` half a cell to the right and `vz`
//! half a cell below. Space derivatives are fourth order, time stepping is
//! second order leapfrog. The model is padded on every side by a damping
//! sponge whose profile grows quadratically towards the outer edge.

use crate::error::{Error, Result};
use crate::model::VelocityModel;

const C1: f64 = 9.0 / 8.0;
const C2: f64 = -1.0 / 24.0;

/// Largest stable `v_max * dt / h` for this stencil in two dimensions:
/// `1 / (sqrt(2) * (|c1| + |c2|)) = 6 / (7 sqrt(2))`.
pub const CFL_CONST: f64 = 6.0 / (7.0 * std::f64::consts::SQRT_2);

/// Target amplitude reflection of the sponge at normal incidence.
const SPONGE_REFLECTION: f64 = 1e-4;

/// Pressure and particle velocities on the padded grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefield {
    pub p: Vec<f64>,
    pub vx: Vec<f64>,
    pub vz: Vec<f64>,
}

impl Wavefield {
    pub fn is_zero(&self) -> bool {
        self.p.iter().chain(&self.vx).chain(&self.vz).all(|&v| v == 0.0)
    }
}

/// Precomputed coefficients for stepping one model.
#[derive(Clone, Debug)]
pub struct Propagator {
    nz: usize,
    nx: usize,
    pad: usize,
    dt: f64,
    dx: f64,
    dz: f64,
    /// Bulk modulus times `dt` at every padded cell.
    kdt: Vec<f64>,
    /// Per-step decay factors along each axis, at whole and half positions.
    decay_x: Vec<f64>,
    decay_x_half: Vec<f64>,
    decay_z: Vec<f64>,
    decay_z_half: Vec<f64>,
}

fn sponge_profile(len: usize, pad: usize, half: bool, d0: f64, dt: f64) -> Vec<f64> {
    let inner_hi = (len - 1 - pad) as f64;
    (0..len)
        .map(|i| {
            let pos = i as f64 + if half { 0.5 } else { 0.0 };
            let dist = (pad as f64 - pos).max(pos - inner_hi).max(0.0);
            let d = if pad == 0 {
                0.0
            } else {
                d0 * (dist / pad as f64).powi(2)
            };
            (-d * dt).exp()
        })
        .collect()
}

impl Propagator {
    /// Pads the model by `pad` cells, replicating edge velocities.
    ///
    /// Fails with a parameter error when `dt` breaks the stability bound.
    pub fn new(model: &VelocityModel, dt: f64, pad: usize) -> Result<Self> {
        let g = model.geometry();
        let vmax = model.max_velocity();
        let h = g.dx.min(g.dz);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let limit = CFL_CONST * h / vmax;
        if dt > limit {
            return Err(Error::Parameter(format!(
                "time step {dt} s exceeds the stability limit {limit:.6} s for v_max {vmax} m/s"
            )));
        }
        let (nz, nx) = (g.nz + 2 * pad, g.nx + 2 * pad);
        let mut kdt = vec![0.0; nz * nx];
        for i in 0..nz {
            let mi = i.saturating_sub(pad).min(g.nz - 1);
            for j in 0..nx {
                let mj = j.saturating_sub(pad).min(g.nx - 1);
                let v = model.at(mi, mj);
                kdt[i * nx + j] = v * v * dt;
            }
        }
        let width = |d: f64| pad as f64 * d;
        let d0x = if pad > 0 {
            3.0 * vmax * (1.0 / SPONGE_REFLECTION).ln() / (2.0 * width(g.dx))
        } else {
            0.0
        };
        let d0z = if pad > 0 {
            3.0 * vmax * (1.0 / SPONGE_REFLECTION).ln() / (2.0 * width(g.dz))
        } else {
            0.0
        };
        Ok(Self {
            nz,
            nx,
            pad,
            dt,
            dx: g.dx,
            dz: g.dz,
            kdt,
            decay_x: sponge_profile(nx, pad, false, d0x, dt),
            decay_x_half: sponge_profile(nx, pad, true, d0x, dt),
            decay_z: sponge_profile(nz, pad, false, d0z, dt),
            decay_z_half: sponge_profile(nz, pad, true, d0z, dt),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Padded grid shape `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.nx)
    }

    /// Flat index into the padded grid of model cell `(row, col)`.
    pub fn index(&self, row: usize, col: usize) -> usize {
        (row + self.pad) * self.nx + col + self.pad
    }

    pub fn zero_field(&self) -> Wavefield {
        let len = self.nz * self.nx;
        Wavefield {
            p: vec![0.0; len],
            vx: vec![0.0; len],
            vz: vec![0.0; len],
        }
    }

    /// Advances one time step, then adds `dt * amplitude` of pressure at
    /// each listed source cell.
    ///
    /// `step` is only used to report where an instability appeared.
    pub fn step(&self, w: &mut Wavefield, sources: &[(usize, f64)], step: usize) -> Result<()> {
        let (nz, nx) = (self.nz, self.nx);
        let bx = self.dt / self.dx;
        let bz = self.dt / self.dz;

        for i in 0..nz {
            let p = &w.p[i * nx..(i + 1) * nx];
            let vx = &mut w.vx[i * nx..(i + 1) * nx];
            let ez = self.decay_z[i];
            for j in 1..nx - 2 {
                let grad = C1 * (p[j + 1] - p[j]) + C2 * (p[j + 2] - p[j - 1]);
                vx[j] = (vx[j] - bx * grad) * (ez * self.decay_x_half[j]);
            }
        }
        for i in 1..nz - 2 {
            let ez = self.decay_z_half[i];
            for j in 0..nx {
                let grad = C1 * (w.p[(i + 1) * nx + j] - w.p[i * nx + j])
                    + C2 * (w.p[(i + 2) * nx + j] - w.p[(i - 1) * nx + j]);
                let v = &mut w.vz[i * nx + j];
                *v = (*v - bz * grad) * (ez * self.decay_x[j]);
            }
        }
        let mut sum = 0.0;
        for i in 2..nz - 2 {
            let ez = self.decay_z[i];
            let row = i * nx;
            for j in 2..nx - 2 {
                let c = row + j;
                let vx = &w.vx;
                let vz = &w.vz;
                let div_x = C1 * (vx[c] - vx[c - 1]) + C2 * (vx[c + 1] - vx[c - 2]);
                let div_z = C1 * (vz[c] - vz[c - nx]) + C2 * (vz[c + nx] - vz[c - 2 * nx]);
                let div = div_x / self.dx + div_z / self.dz;
                let p = &mut w.p[c];
                *p = (*p - self.kdt[c] * div) * (ez * self.decay_x[j]);
                sum += *p;
            }
        }
        for &(idx, amp) in sources {
            w.p[idx] += self.dt * amp;
            sum += amp;
        }
        if !sum.is_finite() {
            return Err(Error::Instability { step });
        }
        Ok(())
    }

    /// Acoustic energy inside the unpadded model, per unit density.
    pub fn interior_energy(&self, w: &Wavefield) -> f64 {
        let mut e = 0.0;
        for i in self.pad..self.nz - self.pad {
            for j in self.pad..self.nx - self.pad {
                let c = i * self.nx + j;
                e += w.p[c] * w.p[c] * self.dt / self.kdt[c] + w.vx[c] * w.vx[c] + w.vz[c] * w.vz[c];
            }
        }
        0.5 * e * self.dx * self.dz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridGeometry;

    fn homogeneous(n: usize) -> VelocityModel {
        let g = GridGeometry {
            nz: n,
            nx: n,
            dx: 10.0,
            dz: 10.0,
        };
        VelocityModel::homogeneous(g, 3000.0).unwrap()
    }

    #[test]
    fn cfl_guard() {
        let m = homogeneous(20);
        let limit = CFL_CONST * 10.0 / 3000.0;
        assert!(Propagator::new(&m, limit * 0.99, 5).is_ok());
        assert!(matches!(
            Propagator::new(&m, limit * 1.01, 5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn null_dynamics() {
        let m = homogeneous(20);
        let prop = Propagator::new(&m, 1e-3, 5).unwrap();
        let mut w = prop.zero_field();
        for k in 0..200 {
            prop.step(&mut w, &[], k).unwrap();
        }
        assert!(w.is_zero());
    }

    #[test]
    fn nan_reports_step() {
        let m = homogeneous(20);
        let prop = Propagator::new(&m, 1e-3, 5).unwrap();
        let mut w = prop.zero_field();
        let src = prop.index(10, 10);
        prop.step(&mut w, &[(src, 1.0)], 0).unwrap();
        assert!(matches!(
            prop.step(&mut w, &[(src, f64::NAN)], 1),
            Err(Error::Instability { step: 1 })
        ));
    }
}
