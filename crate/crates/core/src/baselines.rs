//! Two-step comparison estimators: a beamforming bearing pick per station,
//! bearing-line least squares (range weighted or plain), and squared-range
//! least squares from TOAs.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::arrays::ArrayGeometry;
use crate::geometry::{wrap_angle, AngleGrid, Position};
use crate::{Error, Result, C64, SPEED_OF_LIGHT};

/// Per-station bearings, optionally with range estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingSet {
    angles: Vec<f64>,
    ranges: Option<Vec<f64>>,
}

impl BearingSet {
    /// Bearings are wrapped into `[0, 2π)`.
    pub fn new(angles: Vec<f64>, ranges: Option<Vec<f64>>) -> Result<Self> {
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "bearing",
                reason: "must be finite",
            });
        }
        if let Some(r) = &ranges {
            if r.len() != angles.len() {
                return Err(Error::LengthMismatch {
                    expected: angles.len(),
                    found: r.len(),
                });
            }
            if r.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(Error::InvalidParameter {
                    name: "range",
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(Self {
            angles: angles.into_iter().map(wrap_angle).collect(),
            ranges,
        })
    }

    /// Ranges `c·τ̂` from delays, floored at `min_range` meters.
    pub fn with_toas(angles: Vec<f64>, toas: &[f64], min_range: f64) -> Result<Self> {
        let ranges = toas.iter().map(|t| (SPEED_OF_LIGHT * t).max(min_range)).collect();
        Self::new(angles, Some(ranges))
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn ranges(&self) -> Option<&[f64]> {
        self.ranges.as_deref()
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// `|a(ϑ)ᴴ z|² / ‖a(ϑ)‖²` on every grid angle.
pub fn beam_spectrum(snapshot: &[C64], geometry: &ArrayGeometry, grid: &AngleGrid) -> Result<Vec<f64>> {
    if snapshot.len() != geometry.len() {
        return Err(Error::LengthMismatch {
            expected: geometry.len(),
            found: snapshot.len(),
        });
    }
    let mut a = alloc::vec![C64::new(0.0, 0.0); geometry.len()];
    Ok(grid
        .angles()
        .iter()
        .map(|&theta| {
            geometry.steering_into(theta, &mut a);
            let proj: C64 = a.iter().zip(snapshot).map(|(ai, zi)| ai.conj() * zi).sum();
            let energy: f64 = a.iter().map(|v| v.norm_sqr()).sum();
            proj.norm_sqr() / energy
        })
        .collect())
}

/// Strongest beamformer direction with a three-point parabolic refinement on
/// the wrapped lattice. Ties go to the lowest grid index.
pub fn beamforming_aoa(snapshot: &[C64], geometry: &ArrayGeometry, grid: &AngleGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let power = beam_spectrum(snapshot, geometry, grid)?;
    let mut best = 0;
    for (i, p) in power.iter().enumerate() {
        if *p > power[best] {
            best = i;
        }
    }
    let angles = grid.angles();
    let n = angles.len();
    if n < 3 {
        return Ok(angles[best]);
    }
    let prev = (best + n - 1) % n;
    let next = (best + 1) % n;
    let (lo, mid, hi) = (power[prev], power[best], power[next]);
    let curvature = lo - 2.0 * mid + hi;
    if !(curvature < 0.0) {
        return Ok(angles[best]);
    }
    let offset = (0.5 * (lo - hi) / curvature).clamp(-0.5, 0.5);
    let step_up = wrap_angle(angles[next] - angles[best]);
    let step_down = wrap_angle(angles[best] - angles[prev]);
    let step = if offset >= 0.0 { step_up } else { step_down };
    // The lattice may not close evenly at 2π; an oversized gap is not a step.
    if step > 1.5 * grid.resolution() || step <= 0.0 {
        return Ok(angles[best]);
    }
    Ok(wrap_angle(angles[best] + offset * step))
}

/// Bearing-line weighted least squares with weights `1/r̂²`.
///
/// Each station contributes `sin θ (x − x_l) − cos θ (y − y_l) = 0`.
pub fn stansfield(bearings: &BearingSet, stations: &[Position]) -> Result<Position> {
    let ranges = bearings.ranges().ok_or(Error::InvalidParameter {
        name: "ranges",
        reason: "range-weighted bearing fix needs a range per station",
    })?;
    let weights: Vec<f64> = ranges.iter().map(|r| 1.0 / (r * r)).collect();
    bearing_lines(bearings.angles(), &weights, stations)
}

/// Unweighted bearing-line least squares; ranges, if present, are ignored.
pub fn pure_bearing_fix(bearings: &BearingSet, stations: &[Position]) -> Result<Position> {
    let weights = alloc::vec![1.0; bearings.len()];
    bearing_lines(bearings.angles(), &weights, stations)
}

fn bearing_lines(angles: &[f64], weights: &[f64], stations: &[Position]) -> Result<Position> {
    if angles.len() != stations.len() {
        return Err(Error::LengthMismatch {
            expected: stations.len(),
            found: angles.len(),
        });
    }
    if stations.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "stations",
            reason: "at least 2 bearings are required",
        });
    }
    // Work relative to the station centroid for conditioning.
    let origin = centroid(stations);
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((theta, w), st) in angles.iter().zip(weights).zip(stations) {
        let (s, c) = theta.sin_cos();
        let q = *st - origin;
        let rhs = s * q.x - c * q.y;
        a11 += w * s * s;
        a12 -= w * s * c;
        a22 += w * c * c;
        b1 += w * s * rhs;
        b2 -= w * c * rhs;
    }
    let det = a11 * a22 - a12 * a12;
    let scale = (a11 + a22) * (a11 + a22);
    if !(det > 1e-12 * scale) {
        return Err(Error::SingularGeometry("bearing lines are parallel"));
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    Ok(origin + Position::new(x, y))
}

fn centroid(points: &[Position]) -> Position {
    let sum = points.iter().fold(Position::ORIGIN, |acc, p| acc + *p);
    sum * (1.0 / points.len() as f64)
}

/// Squared-range least squares: minimizes `Σ (‖p − p_l‖² − d_l²)²` with
/// `d_l = c·τ̂_l`, exactly, via the generalized trust-region form and a
/// bisection on its secular equation.
pub fn srls(toas: &[f64], stations: &[Position]) -> Result<Position> {
    if toas.len() != stations.len() {
        return Err(Error::LengthMismatch {
            expected: stations.len(),
            found: toas.len(),
        });
    }
    if stations.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "stations",
            reason: "at least 3 ranges are required",
        });
    }
    let origin = centroid(stations);
    let spread = stations.iter().map(|s| s.distance(&origin)).fold(0.0, f64::max);
    if !(spread > 0.0) {
        return Err(Error::SingularGeometry("stations coincide"));
    }
    // Unknown y = (x, y, ‖p‖²) in units of `spread`; rows [-2xᵢ, -2yᵢ, 1].
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for (t, st) in toas.iter().zip(stations) {
        let q = (*st - origin) * (1.0 / spread);
        let d = SPEED_OF_LIGHT * t / spread;
        let row = [-2.0 * q.x, -2.0 * q.y, 1.0];
        let b = d * d - (q.x * q.x + q.y * q.y);
        for i in 0..3 {
            v[i] += row[i] * b;
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert3(&m).ok_or(Error::SingularGeometry("stations are collinear"))?;
    // Generalized eigenvalue of D = diag(1,1,0) against M: the nonzero ones
    // are those of the leading 2×2 block of M⁻¹.
    let (p, q, r) = (inv[0][0], inv[0][1], inv[1][1]);
    let top = 0.5 * (p + r) + (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let lower = -1.0 / top;

    let solve = |lambda: f64| -> Option<[f64; 3]> {
        let mut a = m;
        a[0][0] += lambda;
        a[1][1] += lambda;
        let rhs = [v[0], v[1], v[2] + 0.5 * lambda];
        let ai = invert3(&a)?;
        Some(core::array::from_fn(|i| (0..3).map(|j| ai[i][j] * rhs[j]).sum()))
    };
    // φ(λ) = yᵀDy + 2fᵀy with f = (0, 0, -½); decreasing on (lower, ∞).
    let phi = |y: &[f64; 3]| y[0] * y[0] + y[1] * y[1] - y[2];

    let finish = |y: [f64; 3]| origin + Position::new(y[0], y[1]) * spread;
    let at_zero = solve(0.0).ok_or(Error::SingularGeometry("stations are collinear"))?;
    if phi(&at_zero) == 0.0 {
        return Ok(finish(at_zero));
    }
    let (mut lo, mut hi) = if phi(&at_zero) > 0.0 {
        let mut step = 1.0;
        loop {
            let y = solve(step).ok_or(Error::SingularGeometry("degenerate secular equation"))?;
            if phi(&y) <= 0.0 {
                break (0.0, step);
            }
            step *= 2.0;
            if step > 1e30 {
                return Err(Error::SingularGeometry("secular equation has no root"));
            }
        }
    } else {
        (lower, 0.0)
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match solve(mid) {
            Some(y) if phi(&y) > 0.0 => lo = mid,
            Some(_) => hi = mid,
            None => lo = mid,
        }
    }
    let y = solve(hi).ok_or(Error::SingularGeometry("degenerate secular equation"))?;
    let est = finish(y);
    if !est.is_finite() {
        return Err(Error::SingularGeometry("degenerate secular equation"));
    }
    Ok(est)
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let norm: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if !(det.abs() > 1e-12 * norm * norm * norm) {
        return None;
    }
    Some(core::array::from_fn(|i| core::array::from_fn(|j| c(j, i) / det)))
}

/// Bearing picks for every station, one snapshot each.
pub fn beamforming_bearings(
    snapshots: &[Vec<C64>],
    geometries: &[ArrayGeometry],
    grid: &AngleGrid,
) -> Result<Vec<f64>> {
    if snapshots.len() != geometries.len() {
        return Err(Error::LengthMismatch {
            expected: geometries.len(),
            found: snapshots.len(),
        });
    }
    snapshots
        .iter()
        .zip(geometries)
        .map(|(z, g)| beamforming_aoa(z, g, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::{circular_random_array, wavelength_for};
    use crate::geometry::{angle_distance, aoa_of, make_angle_grid};
    use alloc::vec;
    use core::f64::consts::TAU;
    use proptest::prelude::*;

    fn corners() -> Vec<Position> {
        vec![
            Position::new(-45.0, -45.0),
            Position::new(45.0, -45.0),
            Position::new(45.0, 45.0),
            Position::new(-45.0, 45.0),
        ]
    }

    fn uniform_circle(count: usize, rotation: f64) -> ArrayGeometry {
        let lambda = wavelength_for(7e9);
        let r = 2.0 * lambda;
        let offsets = (0..count)
            .map(|k| {
                let phi = rotation + TAU * k as f64 / count as f64;
                Position::new(r * phi.cos(), r * phi.sin())
            })
            .collect();
        ArrayGeometry::new(offsets, lambda).unwrap()
    }

    #[test]
    fn symmetric_array_returns_the_on_grid_bearing() {
        let grid = make_angle_grid(5.71f64.to_radians()).unwrap();
        let truth = grid.angles()[10];
        // Mirror symmetric about the source direction, so the beam is even.
        let g = uniform_circle(16, truth);
        let z = g.steering_vector(truth);
        assert!(angle_distance(beamforming_aoa(&z, &g, &grid).unwrap(), truth) < 1e-9);
    }

    #[test]
    fn random_array_peaks_at_the_on_grid_bearing() {
        let lambda = wavelength_for(7e9);
        let g = circular_random_array(100, 5.0 * lambda, lambda, 3).unwrap();
        let grid = make_angle_grid(5.71f64.to_radians()).unwrap();
        for k in [0, 7, 31, 62] {
            let truth = grid.angles()[k];
            let z = g.steering_vector(truth);
            let power = beam_spectrum(&z, &g, &grid).unwrap();
            let top = power.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(power.iter().position(|p| *p == top), Some(k));
            let est = beamforming_aoa(&z, &g, &grid).unwrap();
            assert!(angle_distance(est, truth) < 0.5 * grid.resolution());
        }
    }

    #[test]
    fn stronger_path_wins() {
        let lambda = wavelength_for(7e9);
        let g = circular_random_array(100, 5.0 * lambda, lambda, 8).unwrap();
        let grid = make_angle_grid(5.71f64.to_radians()).unwrap();
        let (weak, strong) = (grid.angles()[10], grid.angles()[40]);
        let z: Vec<C64> = g
            .steering_vector(weak)
            .iter()
            .zip(g.steering_vector(strong))
            .map(|(a, b)| a + b * 10.0)
            .collect();
        // Exhaustive scan oracle over the lattice.
        let mut best = (0, f64::MIN);
        for (i, theta) in grid.angles().iter().enumerate() {
            let a = g.steering_vector(*theta);
            let p: C64 = a.iter().zip(&z).map(|(x, y)| x.conj() * y).sum();
            if p.norm_sqr() / a.len() as f64 > best.1 {
                best = (i, p.norm_sqr() / a.len() as f64);
            }
        }
        assert_eq!(best.0, 40);
        let est = beamforming_aoa(&z, &g, &grid).unwrap();
        assert!(angle_distance(est, strong) < 0.5 * grid.resolution());
    }

    #[test]
    fn common_scale_does_not_move_the_pick() {
        let lambda = wavelength_for(7e9);
        let g = circular_random_array(30, 5.0 * lambda, lambda, 9).unwrap();
        let grid = make_angle_grid(5.71f64.to_radians()).unwrap();
        let z = g.steering_vector(1.234);
        let scaled: Vec<C64> = z.iter().map(|v| v * C64::new(-3.0, 7.5)).collect();
        let a = beamforming_aoa(&z, &g, &grid).unwrap();
        let b = beamforming_aoa(&scaled, &g, &grid).unwrap();
        assert!(angle_distance(a, b) < 1e-12);
    }

    #[test]
    fn flat_spectrum_ties_go_to_the_first_angle() {
        let g = ArrayGeometry::new(vec![Position::ORIGIN], 0.05).unwrap();
        let grid = make_angle_grid(0.5).unwrap();
        assert_eq!(beamforming_aoa(&[C64::new(1.0, 0.0)], &g, &grid).unwrap(), 0.0);
    }

    #[test]
    fn two_exact_bearings_cross_at_the_source() {
        let stations = vec![Position::new(-45.0, -45.0), Position::new(45.0, -45.0)];
        let truth = Position::new(12.0, 30.0);
        let angles = stations.iter().map(|s| aoa_of(&truth, s).unwrap()).collect();
        let ranges = stations.iter().map(|s| s.distance(&truth)).collect();
        let b = BearingSet::new(angles, Some(ranges)).unwrap();
        let est = stansfield(&b, &stations).unwrap();
        assert!(est.distance(&truth) < 1e-9);
        assert!(pure_bearing_fix(&b, &stations).unwrap().distance(&truth) < 1e-9);
    }

    #[test]
    fn parallel_bearings_are_singular() {
        let stations = vec![Position::new(0.0, 0.0), Position::new(0.0, 10.0)];
        let b = BearingSet::new(vec![0.3, 0.3], Some(vec![5.0, 6.0])).unwrap();
        assert!(matches!(stansfield(&b, &stations), Err(Error::SingularGeometry(_))));
    }

    #[test]
    fn missing_ranges_are_rejected_by_the_weighted_fix() {
        let b = BearingSet::new(vec![0.1, 1.0], None).unwrap();
        assert!(stansfield(&b, &corners()[..2]).is_err());
        assert!(pure_bearing_fix(&b, &corners()[..2]).is_ok());
    }

    #[test]
    fn noisy_bearings_match_the_normal_equations() {
        let stations = corners();
        let truth = Position::new(-7.0, 18.0);
        let noise = [0.02, -0.015, 0.03, -0.01];
        let angles: Vec<f64> = stations
            .iter()
            .zip(noise)
            .map(|(s, e)| aoa_of(&truth, s).unwrap() + e)
            .collect();
        let ranges: Vec<f64> = stations.iter().map(|s| s.distance(&truth) * 1.1).collect();
        let est = stansfield(&BearingSet::new(angles.clone(), Some(ranges.clone())).unwrap(), &stations).unwrap();
        // Oracle: minimize Σ w (n_lᵀp − c_l)² by explicit normal equations in
        // absolute coordinates.
        let mut ata = [[0.0; 2]; 2];
        let mut atb = [0.0; 2];
        for ((theta, r), s) in angles.iter().zip(&ranges).zip(&stations) {
            let n = [theta.sin(), -theta.cos()];
            let c = n[0] * s.x + n[1] * s.y;
            let w = 1.0 / (r * r);
            for i in 0..2 {
                atb[i] += w * n[i] * c;
                for j in 0..2 {
                    ata[i][j] += w * n[i] * n[j];
                }
            }
        }
        let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
        let ox = (ata[1][1] * atb[0] - ata[0][1] * atb[1]) / det;
        let oy = (ata[0][0] * atb[1] - ata[1][0] * atb[0]) / det;
        assert!(est.distance(&Position::new(ox, oy)) < 1e-9);
    }

    fn toas_for(p: &Position, stations: &[Position], bias: f64) -> Vec<f64> {
        stations
            .iter()
            .map(|s| (s.distance(p) + bias) / SPEED_OF_LIGHT)
            .collect()
    }

    #[test]
    fn exact_ranges_give_the_source() {
        let stations = corners();
        for truth in [Position::new(18.0, 31.0), Position::new(-40.0, 2.0), Position::new(0.0, 0.0)] {
            let est = srls(&toas_for(&truth, &stations, 0.0), &stations).unwrap();
            assert!(est.distance(&truth) < 1e-6, "{truth:?} -> {est:?}");
        }
    }

    /// Brute-force oracle on the squared-range objective.
    fn srls_objective(p: &Position, toas: &[f64], stations: &[Position]) -> f64 {
        toas.iter()
            .zip(stations)
            .map(|(t, s)| {
                let d = SPEED_OF_LIGHT * t;
                let r = p.distance(s);
                (r * r - d * d).powi(2)
            })
            .sum()
    }

    #[test]
    fn noisy_ranges_reach_the_global_minimum() {
        let stations = corners();
        let truth = Position::new(10.0, -22.0);
        let mut toas = toas_for(&truth, &stations, 0.0);
        for (t, e) in toas.iter_mut().zip([1.5, -0.7, 2.2, 0.4]) {
            *t += e / SPEED_OF_LIGHT;
        }
        let est = srls(&toas, &stations).unwrap();
        let f = srls_objective(&est, &toas, &stations);
        let mut best = f64::MAX;
        for i in -200..=200 {
            for j in -200..=200 {
                let p = Position::new(i as f64 * 0.25, j as f64 * 0.25);
                best = best.min(srls_objective(&p, &toas, &stations));
            }
        }
        assert!(f <= best * (1.0 + 1e-9));
        for dx in [-1e-3, 1e-3] {
            for dy in [-1e-3, 1e-3] {
                let q = est + Position::new(dx, dy);
                assert!(srls_objective(&q, &toas, &stations) >= f);
            }
        }
    }

    #[test]
    fn positive_range_bias_grows_the_error() {
        let stations = corners();
        let truth = Position::new(25.0, 33.0);
        let mut last = -1.0;
        for bias in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let err = srls(&toas_for(&truth, &stations, bias), &stations).unwrap().distance(&truth);
            assert!(err >= last, "bias {bias}: {err} < {last}");
            last = err;
        }
        assert!(last > 1.0);
    }

    #[test]
    fn collinear_stations_are_degenerate() {
        let stations = vec![Position::new(-10.0, 0.0), Position::new(0.0, 0.0), Position::new(10.0, 0.0)];
        let truth = Position::new(3.0, 5.0);
        assert!(matches!(
            srls(&toas_for(&truth, &stations, 0.0), &stations),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn too_few_stations() {
        assert!(srls(&[1e-7, 1e-7], &corners()[..2]).is_err());
        let b = BearingSet::new(vec![0.1], Some(vec![3.0])).unwrap();
        assert!(stansfield(&b, &corners()[..1]).is_err());
    }

    proptest! {
        #[test]
        fn srls_commutes_with_translation(
            sx in -40.0f64..40.0, sy in -40.0f64..40.0,
            tx in -500.0f64..500.0, ty in -500.0f64..500.0,
            e in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let stations = corners();
            let truth = Position::new(sx, sy);
            let mut toas = toas_for(&truth, &stations, 0.0);
            for (t, d) in toas.iter_mut().zip(&e) {
                *t = (*t + d / SPEED_OF_LIGHT).max(0.0);
            }
            let shift = Position::new(tx, ty);
            let moved: Vec<Position> = stations.iter().map(|s| *s + shift).collect();
            let a = srls(&toas, &stations).unwrap();
            let b = srls(&toas, &moved).unwrap();
            prop_assert!((b - shift).distance(&a) < 1e-6);
        }

        #[test]
        fn stansfield_commutes_with_translation(
            sx in -40.0f64..40.0, sy in -40.0f64..40.0,
            tx in -500.0f64..500.0, ty in -500.0f64..500.0,
            e in proptest::collection::vec(-0.05f64..0.05, 4),
        ) {
            let stations = corners();
            let truth = Position::new(sx, sy);
            let angles: Vec<f64> = stations.iter().zip(&e).map(|(s, d)| aoa_of(&truth, s).unwrap() + d).collect();
            let ranges: Vec<f64> = stations.iter().map(|s| s.distance(&truth)).collect();
            let set = BearingSet::new(angles, Some(ranges)).unwrap();
            let shift = Position::new(tx, ty);
            let moved: Vec<Position> = stations.iter().map(|s| *s + shift).collect();
            let a = stansfield(&set, &stations).unwrap();
            let b = stansfield(&set, &moved).unwrap();
            prop_assert!((b - shift).distance(&a) < 1e-9);
        }

        #[test]
        fn beamforming_ignores_station_translation(theta in 0.0f64..TAU, seed in 0u64..50) {
            // The snapshot depends only on offsets, so the same data at a
            // shifted station yields the same bearing.
            let lambda = wavelength_for(7e9);
            let g = circular_random_array(20, 5.0 * lambda, lambda, seed).unwrap();
            let grid = make_angle_grid(5.71f64.to_radians()).unwrap();
            let z = g.steering_vector(theta);
            let est = beamforming_aoa(&z, &g, &grid).unwrap();
            prop_assert_eq!(est, beamforming_aoa(&z, &g.clone(), &grid).unwrap());
            prop_assert!(angle_distance(est, theta) < grid.resolution());
        }
    }
}
