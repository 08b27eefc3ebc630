//! Random layered velocity models cut by a single dipping fault.
//!
//! Coordinates are in grid cells: cell `(row, col)` is centred at depth
//! `z = row` and lateral position `x = col`, and the surface is the row-0
//! centre line. The fault is the line through `(x = offset, z = 0)` dipping
//! at `angle` degrees from the positive x axis, so
//! `x_fault(z) = offset + z * cot(angle)`. Offsets are therefore measured at
//! the surface row. The hanging wall (right of the fault for angles below
//! 90 degrees, left above 90, right at exactly 90) is shifted down by
//! `throw` cells. Cells straddling the fault take the area-weighted mix of the
//! two sides along their centre row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval of real values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.min <= self.max {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "{what} range [{}, {}] is not ordered",
                self.min, self.max
            )))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..self.max)
        }
    }
}

/// Closed interval of counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSpan {
    pub min: usize,
    pub max: usize,
}

impl CountSpan {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.min <= self.max {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "{what} range [{}, {}] is not ordered",
                self.min, self.max
            )))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

/// Grid size and spacing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nz: usize,
    pub nx: usize,
    /// Lateral spacing in metres.
    pub dx: f64,
    /// Vertical spacing in metres.
    pub dz: f64,
}

impl GridGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.nz < 16 || self.nx < 16 {
            return Err(Error::Parameter(format!(
                "grid must be at least 16x16, got {}x{}",
                self.nz, self.nx
            )));
        }
        if !(self.dx > 0.0 && self.dz > 0.0 && self.dx.is_finite() && self.dz.is_finite()) {
            return Err(Error::Parameter("grid spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Ranges that random models are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRanges {
    /// Fault offset at the surface, cells.
    pub offset: Span,
    /// Dipping angle, degrees.
    pub angle: Span,
    pub layers: CountSpan,
    /// Thickness of every layer but the bottom half-space, cells.
    pub thickness: CountSpan,
    /// P velocity, m/s.
    pub velocity: Span,
    /// Vertical displacement of the hanging wall, cells.
    pub throw: CountSpan,
    /// Minimum velocity jump between adjacent layers, m/s.
    pub min_contrast: f64,
}

impl ModelRanges {
    /// 100 x 100 grid: offsets 30-70 cells, angles 25-165 degrees, 3-5
    /// layers 5-80 cells thick, 3000-5000 m/s.
    pub fn standard() -> Self {
        Self {
            offset: Span::new(30.0, 70.0),
            angle: Span::new(25.0, 165.0),
            layers: CountSpan::new(3, 5),
            thickness: CountSpan::new(5, 80),
            velocity: Span::new(3000.0, 5000.0),
            throw: CountSpan::new(4, 12),
            min_contrast: 150.0,
        }
    }

    /// 50 x 50 grid with the fault ranges of the standard profile scaled to
    /// the grid, and the layering held to 10-cell layers, a fixed 5-cell
    /// throw and 3000-3300 m/s so the fault dominates the gather variance.
    pub fn desk() -> Self {
        Self {
            offset: Span::new(15.0, 35.0),
            angle: Span::new(25.0, 165.0),
            layers: CountSpan::new(3, 5),
            thickness: CountSpan::new(10, 10),
            velocity: Span::new(3000.0, 3300.0),
            throw: CountSpan::new(5, 5),
            min_contrast: 150.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.offset.check("offset")?;
        self.angle.check("angle")?;
        self.layers.check("layer count")?;
        self.thickness.check("thickness")?;
        self.velocity.check("velocity")?;
        self.throw.check("throw")?;
        if self.angle.min <= 0.0 || self.angle.max >= 180.0 {
            return Err(Error::Parameter("dipping angle must lie in (0, 180)".into()));
        }
        if self.layers.min < 1 {
            return Err(Error::Parameter("need at least one layer".into()));
        }
        if self.velocity.min <= 0.0 {
            return Err(Error::Parameter("velocities must be positive".into()));
        }
        if self.min_contrast < 0.0 || self.min_contrast > self.velocity.max - self.velocity.min {
            return Err(Error::Parameter(format!(
                "layer contrast {} cannot be met inside the velocity range",
                self.min_contrast
            )));
        }
        Ok(())
    }
}

/// Regression targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultLabel {
    /// Horizontal position of the fault at the surface, cells.
    pub offset: f64,
    /// Dipping angle, degrees.
    pub angle: f64,
}

/// One layer: its top row and velocity. The last layer extends to the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub top: usize,
    pub velocity: f64,
}

/// Everything that determines a model grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub geometry: GridGeometry,
    pub layers: Vec<Layer>,
    pub label: FaultLabel,
    pub throw: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    pub params: ModelParams,
    /// Row-major `nz x nx` velocities, m/s.
    pub velocity: Vec<f64>,
}

impl VelocityModel {
    pub fn nz(&self) -> usize {
        self.params.geometry.nz
    }

    pub fn nx(&self) -> usize {
        self.params.geometry.nx
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.params.geometry
    }

    pub fn label(&self) -> FaultLabel {
        self.params.label
    }

    pub fn layer_count(&self) -> usize {
        self.params.layers.len()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.velocity[row * self.nx() + col]
    }

    pub fn max_velocity(&self) -> f64 {
        self.velocity.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_velocity(&self) -> f64 {
        self.velocity.iter().copied().fold(f64::MAX, f64::min)
    }

    /// Uniform medium of the given size.
    pub fn homogeneous(geometry: GridGeometry, velocity: f64) -> Result<Self> {
        build_model(ModelParams {
            geometry,
            layers: vec![Layer { top: 0, velocity }],
            label: FaultLabel {
                offset: geometry.nx as f64 / 2.0,
                angle: 90.0,
            },
            throw: 0,
        })
    }
}

fn layer_velocity(layers: &[Layer], depth: f64) -> f64 {
    layers
        .iter()
        .rev()
        .find(|l| l.top as f64 <= depth)
        .unwrap_or(&layers[0])
        .velocity
}

/// Rasterizes a model from explicit parameters.
pub fn build_model(params: ModelParams) -> Result<VelocityModel> {
    params.geometry.validate()?;
    if params.layers.is_empty() {
        return Err(Error::Parameter("model needs at least one layer".into()));
    }
    if params.layers[0].top != 0 || params.layers.windows(2).any(|w| w[1].top <= w[0].top) {
        return Err(Error::Parameter(
            "layer tops must start at 0 and increase".into(),
        ));
    }
    if params.layers.iter().any(|l| !(l.velocity > 0.0 && l.velocity.is_finite())) {
        return Err(Error::Parameter("layer velocities must be positive".into()));
    }
    let FaultLabel { offset, angle } = params.label;
    if !(angle > 0.0 && angle < 180.0) || !offset.is_finite() {
        return Err(Error::Parameter(format!(
            "fault label out of range: offset {offset}, angle {angle}"
        )));
    }
    let GridGeometry { nz, nx, .. } = params.geometry;
    let rad = angle.to_radians();
    let cot = rad.cos() / rad.sin();
    let hanging_right = angle <= 90.0;
    let throw = params.throw as f64;
    let mut velocity = vec![0.0; nz * nx];
    for row in 0..nz {
        let z = row as f64;
        let xf = offset + z * cot;
        let foot = layer_velocity(&params.layers, z);
        let hang = layer_velocity(&params.layers, z - throw);
        let (left, right) = if hanging_right { (foot, hang) } else { (hang, foot) };
        for col in 0..nx {
            let w_right = (col as f64 + 0.5 - xf).clamp(0.0, 1.0);
            velocity[row * nx + col] = if w_right == 0.0 {
                left
            } else if w_right == 1.0 {
                right
            } else {
                w_right * right + (1.0 - w_right) * left
            };
        }
    }
    Ok(VelocityModel { params, velocity })
}

/// Draws a random model; the same seed always gives the same model.
pub fn generate_model(ranges: &ModelRanges, geometry: GridGeometry, seed: u64) -> Result<VelocityModel> {
    ranges.validate()?;
    geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = ranges.layers.sample(&mut rng);
    let mut layers = Vec::with_capacity(count);
    let mut top = 0;
    for k in 0..count {
        if k > 0 {
            top += ranges.thickness.sample(&mut rng).max(1);
        }
        let previous = layers.last().map(|l: &Layer| l.velocity);
        let mut v = ranges.velocity.sample(&mut rng);
        if let Some(p) = previous {
            while (v - p).abs() < ranges.min_contrast {
                v = ranges.velocity.sample(&mut rng);
            }
        }
        layers.push(Layer { top, velocity: v });
    }
    let label = FaultLabel {
        offset: ranges.offset.sample(&mut rng),
        angle: ranges.angle.sample(&mut rng),
    };
    let throw = ranges.throw.sample(&mut rng);
    build_model(ModelParams {
        geometry,
        layers,
        label,
        throw,
    })
}

/// Re-measures the fault line from the grid alone.
///
/// In every row whose two ends differ and whose two outermost cells on each
/// side agree (so they are unmixed), the single transition cell is
/// located and its mixed value gives the sub-cell crossing point; a least
/// squares line through those points gives the surface offset and the dip.
/// Returns `None` when fewer than two rows show the fault.
pub fn measure_fault(model: &VelocityModel) -> Option<FaultLabel> {
    let (nz, nx) = (model.nz(), model.nx());
    let mut points = Vec::new();
    for row in 0..nz {
        let line = &model.velocity[row * nx..(row + 1) * nx];
        let (left, right) = (line[0], line[nx - 1]);
        if left == right || line[1] != left || line[nx - 2] != right {
            continue;
        }
        let j = line.iter().position(|&v| v != left)?;
        let xf = if line[j] == right {
            j as f64 - 0.5
        } else {
            let w_right = (line[j] - left) / (right - left);
            j as f64 + 0.5 - w_right
        };
        points.push((row as f64, xf));
    }
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mz = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = points.iter().map(|p| p.1).sum::<f64>() / n;
    let szz: f64 = points.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szx: f64 = points.iter().map(|p| (p.0 - mz) * (p.1 - mx)).sum();
    let slope = szx / szz;
    let offset = mx - slope * mz;
    let angle = 1.0f64.atan2(slope).to_degrees();
    Some(FaultLabel { offset, angle })
}
