//! Array geometries, narrowband steering vectors, and per-antenna phase
//! calibration errors.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::geometry::Position;
use crate::rng::{rng_from_seed, uniform};
use crate::{Error, Result, C64};

/// Antenna offsets relative to the array's center of gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    offsets: Vec<Position>,
    wavelength: f64,
}

impl ArrayGeometry {
    /// Recenters `offsets` so their centroid is the origin.
    pub fn new(offsets: Vec<Position>, wavelength: f64) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter {
                name: "offsets",
                reason: "array needs at least one antenna",
            });
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::InvalidParameter {
                name: "wavelength",
                reason: "must be positive and finite",
            });
        }
        if offsets.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "offsets",
                reason: "non-finite antenna offset",
            });
        }
        let n = offsets.len() as f64;
        let (sx, sy) = offsets.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        let centroid = Position::new(sx / n, sy / n);
        // Already centred up to rounding: keep the offsets bit for bit so
        // that written tables read back unchanged.
        let aperture = offsets.iter().map(|p| p.x.abs().max(p.y.abs())).fold(0.0, f64::max);
        if centroid.x.abs().max(centroid.y.abs()) <= 1e-12 * aperture {
            return Ok(Self { offsets, wavelength });
        }
        let offsets = offsets.into_iter().map(|p| p - centroid).collect();
        Ok(Self { offsets, wavelength })
    }

    pub fn offsets(&self) -> &[Position] {
        &self.offsets
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Point reflection through the array center.
    pub fn mirrored(&self) -> Self {
        Self {
            offsets: self.offsets.iter().map(|p| *p * -1.0).collect(),
            wavelength: self.wavelength,
        }
    }

    /// Largest pairwise antenna separation.
    pub fn aperture(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.offsets.iter().enumerate() {
            for b in &self.offsets[i + 1..] {
                d = d.max(a.distance(b));
            }
        }
        d
    }

    /// Writes `a(θ)` into `out`.
    pub fn steering_into(&self, theta: f64, out: &mut [C64]) {
        let k = TAU / self.wavelength;
        let (s, c) = theta.sin_cos();
        for (o, p) in out.iter_mut().zip(&self.offsets) {
            *o = C64::from_polar(1.0, k * (p.x * c + p.y * s));
        }
    }

    /// Plane-wave response for a ray impinging from bearing `theta`; the
    /// phase reference is the array centroid so every element has unit
    /// modulus.
    pub fn steering_vector(&self, theta: f64) -> Vec<C64> {
        let mut out = alloc::vec![C64::new(0.0, 0.0); self.offsets.len()];
        self.steering_into(theta, &mut out);
        out
    }
}

/// `count` antennas placed uniformly at random in a disk, then recentered.
pub fn circular_random_array(
    count: usize,
    radius: f64,
    wavelength: f64,
    seed: u64,
) -> Result<ArrayGeometry> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "count",
            reason: "array needs at least one antenna",
        });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: "must be positive",
        });
    }
    let mut rng = rng_from_seed(seed);
    let offsets = (0..count)
        .map(|_| {
            let r = radius * uniform(&mut rng, 0.0, 1.0).sqrt();
            let phi = uniform(&mut rng, 0.0, TAU);
            Position::new(r * phi.cos(), r * phi.sin())
        })
        .collect();
    ArrayGeometry::new(offsets, wavelength)
}

/// Per-antenna phase offsets drawn from `U(-I/2, I/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationError {
    offsets: Vec<f64>,
}

impl CalibrationError {
    pub fn from_offsets(offsets: Vec<f64>) -> Self {
        Self { offsets }
    }

    pub fn uniform(count: usize, interval: f64, seed: u64) -> Result<Self> {
        if !(interval >= 0.0) || interval > TAU {
            return Err(Error::InvalidParameter {
                name: "interval",
                reason: "calibration interval must lie in [0, 2π]",
            });
        }
        let mut rng = rng_from_seed(seed);
        let half = interval / 2.0;
        let offsets = (0..count)
            .map(|_| if half == 0.0 { 0.0 } else { uniform(&mut rng, -half, half) })
            .collect();
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Element-wise multiplication by `exp(j·offset_s)`.
pub fn apply_calibration_error(response: &[C64], err: &CalibrationError) -> Result<Vec<C64>> {
    if response.len() != err.offsets.len() {
        return Err(Error::LengthMismatch {
            expected: response.len(),
            found: err.offsets.len(),
        });
    }
    Ok(response
        .iter()
        .zip(&err.offsets)
        .map(|(v, phi)| v * C64::from_polar(1.0, *phi))
        .collect())
}

/// Far-field boundary `2D²/λ` for the array's largest pairwise separation.
pub fn fraunhofer_distance(geom: &ArrayGeometry) -> f64 {
    let d = geom.aperture();
    2.0 * d * d / geom.wavelength
}

/// Carrier wavelength for a frequency in Hz.
pub fn wavelength_for(carrier_hz: f64) -> f64 {
    crate::SPEED_OF_LIGHT / carrier_hz
}
