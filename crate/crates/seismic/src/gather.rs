//! Common-shot gathers recorded along the surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::Propagator;
use crate::model::VelocityModel;
use crate::wavelet::ricker;

/// Acquisition and time-stepping settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Ricker peak frequency, Hz.
    pub f0: f64,
    pub receivers: usize,
    /// Receiver spacing, metres.
    pub receiver_interval: f64,
    /// Time step, seconds.
    pub dt: f64,
    /// Recorded samples per trace.
    pub samples: usize,
    /// Time steps between recorded samples.
    pub record_every: usize,
    /// Sponge width, cells.
    pub boundary: usize,
    /// Source cell `(row, col)`; the surface centre when absent.
    pub source: Option<(usize, usize)>,
}

impl SimConfig {
    /// 50 x 50 grid profile: 16 receivers 15 m apart, 250 samples at 2 ms.
    pub fn desk() -> Self {
        Self {
            f0: 25.0,
            receivers: 16,
            receiver_interval: 15.0,
            dt: 1e-3,
            samples: 250,
            record_every: 2,
            boundary: 20,
            source: None,
        }
    }

    /// 32 receivers and 1000 samples per trace.
    pub fn standard() -> Self {
        Self {
            receivers: 32,
            samples: 1000,
            ..Self::desk()
        }
    }

    /// Source delay `1.5 / f0`.
    pub fn t0(&self) -> f64 {
        1.5 / self.f0
    }

    /// Length of one flattened gather.
    pub fn feature_len(&self) -> usize {
        self.receivers * self.samples
    }

    pub fn source_cell(&self, model: &VelocityModel) -> (usize, usize) {
        self.source.unwrap_or((0, model.nx() / 2))
    }

    /// Fractional column of every receiver, on the source row.
    pub fn receiver_columns(&self, model: &VelocityModel) -> Vec<f64> {
        let (_, sc) = self.source_cell(model);
        let step = self.receiver_interval / model.geometry().dx;
        let mid = (self.receivers as f64 - 1.0) / 2.0;
        (0..self.receivers)
            .map(|k| sc as f64 + (k as f64 - mid) * step)
            .collect()
    }

    pub fn validate(&self, model: &VelocityModel) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(Error::Parameter("peak frequency must be positive".into()));
        }
        if self.receivers == 0 || self.samples == 0 || self.record_every == 0 {
            return Err(Error::Parameter(
                "receivers, samples and record interval must be positive".into(),
            ));
        }
        if !(self.receiver_interval > 0.0) {
            return Err(Error::Parameter("receiver interval must be positive".into()));
        }
        let (sr, sc) = self.source_cell(model);
        if sr >= model.nz() || sc >= model.nx() {
            return Err(Error::Parameter(format!(
                "source cell ({sr}, {sc}) lies outside the {}x{} grid",
                model.nz(),
                model.nx()
            )));
        }
        let cols = self.receiver_columns(model);
        let (lo, hi) = (cols[0], cols[cols.len() - 1]);
        if lo < 0.0 || hi > (model.nx() - 1) as f64 {
            return Err(Error::Parameter(format!(
                "{} receivers {} m apart do not fit in {} columns of {} m",
                self.receivers,
                self.receiver_interval,
                model.nx(),
                model.geometry().dx
            )));
        }
        Ok(())
    }
}

/// Recorded pressure, receiver-major: `data[r * samples + t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherFeature {
    pub receivers: usize,
    pub samples: usize,
    pub data: Vec<f32>,
}

impl GatherFeature {
    pub fn trace(&self, r: usize) -> &[f32] {
        &self.data[r * self.samples..(r + 1) * self.samples]
    }
}

/// Runs `samples * record_every` steps and records pressure at each receiver
/// by linear interpolation between the two nearest cells.
pub fn simulate_gather(model: &VelocityModel, config: &SimConfig) -> Result<GatherFeature> {
    config.validate(model)?;
    let prop = Propagator::new(model, config.dt, config.boundary)?;
    let (sr, sc) = config.source_cell(model);
    let src = prop.index(sr, sc);
    let taps: Vec<(usize, usize, f64)> = config
        .receiver_columns(model)
        .into_iter()
        .map(|c| {
            let left = (c.floor() as usize).min(model.nx() - 2);
            let frac = c - left as f64;
            (prop.index(sr, left), prop.index(sr, left + 1), frac)
        })
        .collect();
    let t0 = config.t0();
    let mut w = prop.zero_field();
    let (r, t) = (config.receivers, config.samples);
    let mut data = vec![0.0f32; r * t];
    let mut source = [(src, 0.0)];
    for n in 0..t * config.record_every {
        source[0].1 = ricker(n as f64 * config.dt, config.f0, t0);
        prop.step(&mut w, &source, n)?;
        if (n + 1) % config.record_every == 0 {
            let s = (n + 1) / config.record_every - 1;
            for (k, &(a, b, f)) in taps.iter().enumerate() {
                data[k * t + s] = ((1.0 - f) * w.p[a] + f * w.p[b]) as f32;
            }
        }
    }
    Ok(GatherFeature {
        receivers: r,
        samples: t,
        data,
    })
}
