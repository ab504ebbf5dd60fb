//! Group-sparse recovery over a location grid and per-station angle grids.
//!
//! Every station `l` observes `z_l ≈ D_l x_l + B_l y_l` where column `q` of
//! `D_l` is the array response towards grid location `q` and the columns of
//! `B_l` are responses on the station's own angle grid. The recovery problem
//!
//! ```text
//! minimize   w Σ_q ‖X_{q,:}‖₂ + Σ_l ‖y_l‖₁
//! subject to Σ_l ‖z_l − D_l x_l − B_l y_l‖² ≤ ε
//! ```
//!
//! couples the stations only through the row norms of `X`: a location row is
//! cheap when all stations use it together.

mod barrier;
mod solver;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::arrays::ArrayGeometry;
use crate::geometry::{aoa_of, Position};
use crate::stats::chi_square_quantile;
use crate::{Error, Result, C64};

pub use solver::{solve, SolverOptions, WarmStart};

/// Dense column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
    norms_sqr: Vec<f64>,
}

impl Dictionary {
    pub fn from_columns(rows: usize, columns: Vec<Vec<C64>>) -> Result<Self> {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        let mut norms_sqr = Vec::with_capacity(cols);
        for c in columns {
            if c.len() != rows {
                return Err(Error::LengthMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            let n: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "dictionary",
                    reason: "columns must be non-zero and finite",
                });
            }
            norms_sqr.push(n);
            data.extend(c);
        }
        Ok(Self {
            rows,
            cols,
            data,
            norms_sqr,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn norm_sqr(&self, j: usize) -> f64 {
        self.norms_sqr[j]
    }
}

/// One instance of the recovery problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseProblem {
    pub snapshots: Vec<Vec<C64>>,
    /// Per station, one column per grid location (shared row index `q`).
    pub location_dicts: Vec<Dictionary>,
    /// Per station, one column per angle of that station's grid.
    pub angle_dicts: Vec<Dictionary>,
    pub weight: f64,
    pub epsilon: f64,
}

impl SparseProblem {
    pub fn from_dictionaries(
        snapshots: Vec<Vec<C64>>,
        location_dicts: Vec<Dictionary>,
        angle_dicts: Vec<Dictionary>,
        weight: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let l = snapshots.len();
        if l == 0 {
            return Err(Error::InvalidParameter {
                name: "snapshots",
                reason: "need at least one station",
            });
        }
        for n in [location_dicts.len(), angle_dicts.len()] {
            if n != l {
                return Err(Error::LengthMismatch { expected: l, found: n });
            }
        }
        let q = location_dicts[0].cols();
        for ((z, d), b) in snapshots.iter().zip(&location_dicts).zip(&angle_dicts) {
            if d.rows() != z.len() || b.rows() != z.len() {
                return Err(Error::LengthMismatch {
                    expected: z.len(),
                    found: d.rows().min(b.rows()),
                });
            }
            if d.cols() != q {
                return Err(Error::LengthMismatch {
                    expected: q,
                    found: d.cols(),
                });
            }
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: "must be positive",
            });
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "must be non-negative",
            });
        }
        Ok(Self {
            snapshots,
            location_dicts,
            angle_dicts,
            weight,
            epsilon,
        })
    }

    /// Builds the dictionaries from array responses. Locations must not
    /// coincide with a station center.
    #[allow(clippy::too_many_arguments)]
    pub fn from_geometry(
        snapshots: Vec<Vec<C64>>,
        stations: &[Position],
        geometries: &[ArrayGeometry],
        locations: &[Position],
        angle_grids: &[Vec<f64>],
        weight: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let l = snapshots.len();
        for n in [stations.len(), geometries.len(), angle_grids.len()] {
            if n != l {
                return Err(Error::LengthMismatch { expected: l, found: n });
            }
        }
        let mut location_dicts = Vec::with_capacity(l);
        let mut angle_dicts = Vec::with_capacity(l);
        for ((center, geom), angles) in stations.iter().zip(geometries).zip(angle_grids) {
            let cols = locations
                .iter()
                .map(|p| Ok(geom.steering_vector(aoa_of(p, center)?)))
                .collect::<Result<Vec<_>>>()?;
            location_dicts.push(Dictionary::from_columns(geom.len(), cols)?);
            let cols = angles.iter().map(|t| geom.steering_vector(*t)).collect();
            angle_dicts.push(Dictionary::from_columns(geom.len(), cols)?);
        }
        Self::from_dictionaries(snapshots, location_dicts, angle_dicts, weight, epsilon)
    }

    pub fn num_stations(&self) -> usize {
        self.snapshots.len()
    }

    pub fn num_locations(&self) -> usize {
        self.location_dicts[0].cols()
    }

    pub fn num_angles(&self, station: usize) -> usize {
        self.angle_dicts[station].cols()
    }

    pub fn snapshot_energy(&self) -> f64 {
        self.snapshots
            .iter()
            .flatten()
            .map(|v| v.norm_sqr())
            .sum()
    }

    /// `w Σ_q ‖x_q‖ + Σ_l ‖y_l‖₁` for a point laid out like [`SparseSolution`].
    pub fn objective(&self, x: &[C64], y: &[Vec<C64>]) -> f64 {
        let l = self.num_stations();
        let rows: f64 = x
            .chunks(l)
            .map(|row| row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .sum();
        let angles: f64 = y.iter().flatten().map(|v| v.norm()).sum();
        self.weight * rows + angles
    }

    /// `Σ_l ‖z_l − D_l x_l − B_l y_l‖²`.
    pub fn residual_energy(&self, x: &[C64], y: &[Vec<C64>]) -> f64 {
        self.residuals(x, y)
            .iter()
            .flatten()
            .map(|v| v.norm_sqr())
            .sum()
    }

    pub(crate) fn residuals(&self, x: &[C64], y: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let nl = self.num_stations();
        (0..nl)
            .map(|l| {
                let mut r = self.snapshots[l].clone();
                let d = &self.location_dicts[l];
                for q in 0..d.cols() {
                    let c = x[q * nl + l];
                    if c != C64::new(0.0, 0.0) {
                        for (ri, a) in r.iter_mut().zip(d.column(q)) {
                            *ri -= a * c;
                        }
                    }
                }
                let b = &self.angle_dicts[l];
                for (m, c) in y[l].iter().enumerate() {
                    if *c != C64::new(0.0, 0.0) {
                        for (ri, a) in r.iter_mut().zip(b.column(m)) {
                            *ri -= a * c;
                        }
                    }
                }
                r
            })
            .collect()
    }
}

/// Solver output. `x` is row-major: entry `(q, l)` lives at `q·L + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub x: Vec<C64>,
    pub y: Vec<Vec<C64>>,
    pub num_stations: usize,
    pub objective: f64,
    pub residual: f64,
    /// Certified lower bound on the optimal objective.
    pub lower_bound: f64,
    /// Penalty parameter of the last penalized subproblem.
    pub lambda: f64,
    /// Coordinate-descent epochs spent.
    pub epochs: usize,
    /// Penalized subproblems solved.
    pub subproblems: usize,
}

impl SparseSolution {
    /// `objective − lower_bound`.
    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound).max(0.0)
    }

    pub fn num_locations(&self) -> usize {
        self.x.len().checked_div(self.num_stations).unwrap_or(0)
    }

    pub fn row(&self, q: usize) -> &[C64] {
        &self.x[q * self.num_stations..(q + 1) * self.num_stations]
    }

    pub fn row_norm(&self, q: usize) -> f64 {
        self.row(q).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Index of the largest row; lowest index on ties. `None` if `X ≡ 0`.
    pub fn strongest_row(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for q in 0..self.num_locations() {
            let n = self.row_norm(q);
            if n > 0.0 && best.is_none_or(|(_, b)| n > b) {
                best = Some((q, n));
            }
        }
        best.map(|(q, _)| q)
    }
}

/// Indices of the retained locations and per-station angles.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportIndices {
    pub locations: Vec<usize>,
    pub angles: Vec<Vec<usize>>,
}

/// Rows with norm above `zero_threshold` times the largest row norm, and per
/// station the angle coefficients above the same fraction of that station's
/// largest one. The location support is empty when the rows hold no more
/// than `zero_threshold` of the total coefficient mass.
pub fn extract_support(sol: &SparseSolution, zero_threshold: f64) -> SupportIndices {
    let norms: Vec<f64> = (0..sol.num_locations()).map(|q| sol.row_norm(q)).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let row_mass: f64 = norms.iter().sum();
    let angle_mass: f64 = sol.y.iter().flatten().map(|v| v.norm()).sum();
    let locations = if max > 0.0 && row_mass > zero_threshold * (row_mass + angle_mass) {
        (0..norms.len())
            .filter(|&q| norms[q] > zero_threshold * max)
            .collect()
    } else {
        Vec::new()
    };
    let angles = sol
        .y
        .iter()
        .map(|y| {
            let max = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if max > 0.0 {
                (0..y.len())
                    .filter(|&m| y[m].norm() > zero_threshold * max)
                    .collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    SupportIndices { locations, angles }
}

/// `ε = (σ²/2)·F⁻¹(γ; 2·ΣS_l)`: the noise energy not exceeded with
/// probability `γ`.
pub fn epsilon_for(gamma: f64, noise_variance: f64, total_antennas: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: "must lie in (0, 1)",
        });
    }
    Ok(0.5 * noise_variance * chi_square_quantile(gamma, 2.0 * total_antennas as f64))
}

/// True when the all-zero point already satisfies the residual constraint.
pub fn trivial_energy_check(snapshots: &[Vec<C64>], epsilon: f64) -> bool {
    let e: f64 = snapshots.iter().flatten().map(|v| v.norm_sqr()).sum();
    e <= epsilon
}

/// Grid location whose direct-path responses correlate best with the
/// snapshots. Grid points on top of a station are skipped.
pub fn correlator_fallback(
    snapshots: &[Vec<C64>],
    grid: &[Position],
    stations: &[Position],
    geometries: &[ArrayGeometry],
) -> Result<Position> {
    if snapshots.len() != stations.len() || geometries.len() != stations.len() {
        return Err(Error::LengthMismatch {
            expected: stations.len(),
            found: snapshots.len().min(geometries.len()),
        });
    }
    let mut best: Option<(Position, f64)> = None;
    let mut a = Vec::new();
    'points: for p in grid {
        let mut score = 0.0;
        for ((z, c), g) in snapshots.iter().zip(stations).zip(geometries) {
            let Ok(theta) = aoa_of(p, c) else {
                continue 'points;
            };
            a.resize(g.len(), C64::new(0.0, 0.0));
            g.steering_into(theta, &mut a);
            let corr: C64 = a.iter().zip(z).map(|(ai, zi)| ai.conj() * zi).sum();
            score += corr.norm_sqr() / g.len() as f64;
        }
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((*p, score));
        }
    }
    best.map(|(p, _)| p).ok_or(Error::EmptyGrid)
}

#[cfg(test)]
mod tests;
