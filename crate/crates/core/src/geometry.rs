//! Planar positions, the position-to-delay and position-to-bearing maps, the
//! uniform search grids, TOA-based grid trimming and the refinement operators.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, TAU};
use core::ops::{Add, Mul, Sub};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Two points closer than this are the same grid point.
pub const POSITION_TOLERANCE: f64 = 1e-9;
/// Two angles closer than this (modulo 2π) are the same grid angle.
pub const ANGLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Position {
    type Output = Position;
    fn add(self, rhs: Position) -> Position {
        Position::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Position {
    type Output = Position;
    fn sub(self, rhs: Position) -> Position {
        Position::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Position {
    type Output = Position;
    fn mul(self, rhs: f64) -> Position {
        Position::new(self.x * rhs, self.y * rhs)
    }
}

/// Axis-aligned rectangle given by its center and side lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: Position,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            center: Position::ORIGIN,
            width,
            height,
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (p.x - self.center.x).abs() <= self.width / 2.0
            && (p.y - self.center.y).abs() <= self.height / 2.0
    }
}

/// Line-of-sight delay from `p` to the array centered at `station_center`.
pub fn toa_of(p: &Position, station_center: &Position) -> f64 {
    p.distance(station_center) / SPEED_OF_LIGHT
}

/// Bearing of `p` seen from `station_center`, anticlockwise from the x-axis.
///
/// Uses the half-open arctangent branch plus a π shift for points west of the
/// center, so the result lies in `[-π/2, 3π/2)`.
pub fn aoa_of(p: &Position, station_center: &Position) -> Result<f64> {
    let dx = p.x - station_center.x;
    let dy = p.y - station_center.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::UndefinedBearing);
    }
    let base = if dx == 0.0 {
        // arctan(±∞); the branch is [-π/2, π/2) so +∞ maps just below π/2,
        // which in the limit is π/2 itself for the point due north.
        if dy > 0.0 {
            FRAC_PI_2
        } else {
            -FRAC_PI_2
        }
    } else {
        (dy / dx).atan()
    };
    let shifted = if dx < 0.0 { base + PI } else { base };
    // atan(+large) rounds to exactly π/2 for tiny dx > 0; fold it into range.
    if shifted >= 1.5 * PI {
        Ok(shifted - TAU)
    } else {
        Ok(shifted)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = num_traits::Euclid::rem_euclid(&theta, &TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Circular distance between two angles.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationGrid {
    points: Vec<Position>,
    resolution: f64,
}

impl LocationGrid {
    /// Builds a grid from arbitrary points; duplicates (within
    /// [`POSITION_TOLERANCE`]) are merged keeping the first occurrence.
    pub fn from_points(points: Vec<Position>, resolution: f64) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "points",
                reason: "non-finite grid point",
            });
        }
        Ok(Self {
            points: dedup_positions(points),
            resolution,
        })
    }

    pub fn points(&self) -> &[Position] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Position> {
        self.points
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position_of(&self, p: &Position) -> Option<usize> {
        self.points
            .iter()
            .position(|q| q.distance(p) <= POSITION_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    angles: Vec<f64>,
    resolution: f64,
}

impl AngleGrid {
    /// Wraps every angle into `[0, 2π)`, sorts, and merges duplicates.
    pub fn from_angles(angles: Vec<f64>, resolution: f64) -> Result<Self> {
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "angles",
                reason: "non-finite angle",
            });
        }
        Ok(Self {
            angles: normalize_angles(angles),
            resolution,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Per-station TOA upper bounds plus the step used to enlarge them when the
/// feasible region they define contains no grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ToaEstimates {
    pub toas: Vec<f64>,
    pub expansion_step: f64,
}

impl ToaEstimates {
    pub fn new(toas: Vec<f64>, expansion_step: f64) -> Result<Self> {
        if toas.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(Error::InvalidParameter {
                name: "toas",
                reason: "TOA estimates must be non-negative",
            });
        }
        if !(expansion_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "expansion_step",
                reason: "must be positive",
            });
        }
        Ok(Self {
            toas,
            expansion_step,
        })
    }

    /// No timing information: every grid point is feasible.
    pub fn unbounded(stations: usize) -> Self {
        Self {
            toas: alloc::vec![f64::INFINITY; stations],
            expansion_step: 1.0,
        }
    }

    fn expanded(&self, rounds: u64) -> Vec<f64> {
        let extra = rounds as f64 * self.expansion_step;
        self.toas.iter().map(|t| t + extra).collect()
    }
}

/// Uniform lattice over `region`, anchored at the region center.
pub fn make_location_grid(region: &Rect, resolution: f64) -> Result<LocationGrid> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidResolution(resolution));
    }
    if !(region.width >= 0.0 && region.height >= 0.0) || !region.center.is_finite() {
        return Err(Error::InvalidParameter {
            name: "region",
            reason: "region must have non-negative finite extent",
        });
    }
    let nx = (region.width / 2.0 / resolution + 1e-9).floor() as i64;
    let ny = (region.height / 2.0 / resolution + 1e-9).floor() as i64;
    let mut points = Vec::with_capacity(((2 * nx + 1) * (2 * ny + 1)) as usize);
    for i in -nx..=nx {
        for j in -ny..=ny {
            points.push(Position::new(
                region.center.x + i as f64 * resolution,
                region.center.y + j as f64 * resolution,
            ));
        }
    }
    Ok(LocationGrid { points, resolution })
}

/// `{0, Δ, 2Δ, …}` with `⌊2π/Δ⌋` entries, all in `[0, 2π)`.
pub fn make_angle_grid(resolution: f64) -> Result<AngleGrid> {
    if !(resolution > 0.0 && resolution < TAU) {
        return Err(Error::InvalidResolution(resolution));
    }
    let count = (TAU / resolution + 1e-9).floor() as usize;
    let angles = (0..count)
        .map(|k| k as f64 * resolution)
        .filter(|a| *a < TAU - ANGLE_TOLERANCE)
        .collect();
    Ok(AngleGrid { angles, resolution })
}

fn feasible(p: &Position, toas: &[f64], centers: &[Position]) -> bool {
    toas.iter()
        .zip(centers)
        .all(|(t, c)| p.distance(c) <= SPEED_OF_LIGHT * t)
}

/// Result of intersecting a grid with the TOA feasible region.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimmedGrid {
    pub grid: LocationGrid,
    /// The TOA bounds actually used (after any expansion rounds).
    pub toas: ToaEstimates,
    pub expansion_rounds: u64,
}

/// Keeps the grid points inside every disk `‖π − p̃_l‖ ≤ c·τ̂_l`. When none
/// survive, all bounds are raised by one expansion step per round until at
/// least one point does.
pub fn trim_by_toa(
    grid: &LocationGrid,
    toas: &ToaEstimates,
    station_centers: &[Position],
) -> Result<TrimmedGrid> {
    if toas.toas.len() != station_centers.len() {
        return Err(Error::LengthMismatch {
            expected: station_centers.len(),
            found: toas.toas.len(),
        });
    }
    let keep = |bounds: &[f64]| -> Vec<Position> {
        grid.points
            .iter()
            .copied()
            .filter(|p| feasible(p, bounds, station_centers))
            .collect()
    };
    let mut points = keep(&toas.toas);
    let mut rounds = 0u64;
    if points.is_empty() && !grid.is_empty() {
        // Smallest number of whole rounds that admits some point; computed
        // directly, then confirmed against the same membership test the
        // round-by-round loop would apply.
        let step = toas.expansion_step;
        let needed = grid
            .points
            .iter()
            .map(|p| {
                toas.toas
                    .iter()
                    .zip(station_centers)
                    .map(|(t, c)| {
                        let deficit = p.distance(c) / SPEED_OF_LIGHT - t;
                        if deficit <= 0.0 {
                            0.0
                        } else {
                            (deficit / step).ceil()
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        rounds = (needed as u64).saturating_sub(1);
        loop {
            points = keep(&toas.expanded(rounds));
            if !points.is_empty() {
                break;
            }
            rounds += 1;
        }
    }
    Ok(TrimmedGrid {
        grid: LocationGrid {
            points,
            resolution: grid.resolution,
        },
        toas: ToaEstimates {
            toas: toas.expanded(rounds),
            expansion_step: toas.expansion_step,
        },
        expansion_rounds: rounds,
    })
}

/// `{π̂ + [i, j]·δ : π̂ ∈ estimated, i, j ∈ −2..=2}` with duplicates merged.
pub fn refine_location_grid(estimated: &[Position], delta: f64) -> Result<Vec<Position>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidResolution(delta));
    }
    let mut out = Vec::with_capacity(estimated.len() * 25);
    for p in estimated {
        for i in -2i32..=2 {
            for j in -2i32..=2 {
                out.push(Position::new(
                    p.x + f64::from(i) * delta,
                    p.y + f64::from(j) * delta,
                ));
            }
        }
    }
    Ok(dedup_positions(out))
}

/// Rounds `x` to the nearest multiple of `step`.
pub fn round_to_multiple(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Angle-grid refinement: five-point neighbourhoods around every estimated
/// angle plus the (rounded) direct bearing of every estimated location.
pub fn refine_angle_grid(
    estimated_angles: &[f64],
    delta: f64,
    estimated_locations: &[Position],
    station_center: &Position,
) -> Result<Vec<f64>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidResolution(delta));
    }
    let mut out = Vec::with_capacity(estimated_angles.len() * 5 + estimated_locations.len());
    for theta in estimated_angles {
        for i in -2i32..=2 {
            out.push(theta + f64::from(i) * delta);
        }
    }
    for p in estimated_locations {
        // A location on top of the array has no bearing to contribute.
        if let Ok(theta) = aoa_of(p, station_center) {
            out.push(round_to_multiple(theta, delta));
        }
    }
    Ok(normalize_angles(out))
}

fn dedup_positions(points: Vec<Position>) -> Vec<Position> {
    // Sort indices by x so duplicates are adjacent within the tolerance
    // window, then keep first occurrences in the original order.
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
    let mut duplicate = alloc::vec![false; n];
    for (k, &a) in order.iter().enumerate() {
        if duplicate[a] {
            continue;
        }
        for &b in &order[k + 1..] {
            if points[b].x - points[a].x > POSITION_TOLERANCE {
                break;
            }
            if !duplicate[b] && points[a].distance(&points[b]) <= POSITION_TOLERANCE {
                // Keep whichever came first in the input.
                if b > a {
                    duplicate[b] = true;
                } else {
                    duplicate[a] = true;
                    break;
                }
            }
        }
    }
    points
        .into_iter()
        .zip(duplicate)
        .filter_map(|(p, d)| (!d).then_some(p))
        .collect()
}

fn normalize_angles(angles: Vec<f64>) -> Vec<f64> {
    let mut wrapped: Vec<f64> = angles.into_iter().map(wrap_angle).collect();
    wrapped.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(wrapped.len());
    for a in wrapped {
        match out.last() {
            Some(last) if a - last <= ANGLE_TOLERANCE => {}
            _ => out.push(a),
        }
    }
    // The circle closes: an angle just below 2π duplicates one at 0.
    if out.len() > 1 && out[0] + TAU - out[out.len() - 1] <= ANGLE_TOLERANCE {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn toa_examples() {
        let c = Position::new(-45.0, -45.0);
        assert_eq!(toa_of(&c, &c), 0.0);
        let t = toa_of(&Position::new(45.0, 45.0), &c);
        // hypot(90, 90) / c
        assert!(close(t, 127.279_220_613_578_55 / SPEED_OF_LIGHT, 1e-20));
        assert!(close(t, 4.2456e-7, 1e-11));
        let t = toa_of(&Position::new(300.0, 0.0), &Position::ORIGIN);
        assert!(close(t, 1.000_69e-6, 1e-11));
    }

    #[test]
    fn aoa_cardinal_directions() {
        let c = Position::new(3.0, -2.0);
        assert_eq!(aoa_of(&Position::new(10.0, -2.0), &c).unwrap(), 0.0);
        assert!(close(aoa_of(&Position::new(3.0, 5.0), &c).unwrap(), FRAC_PI_2, 1e-15));
        assert!(close(aoa_of(&Position::new(-7.0, -2.0), &c).unwrap(), PI, 1e-15));
        assert!(close(aoa_of(&Position::new(3.0, -9.0), &c).unwrap(), -FRAC_PI_2, 1e-15));
        assert_eq!(aoa_of(&c, &c), Err(Error::UndefinedBearing));
    }

    #[test]
    fn location_grid_counts() {
        let g = make_location_grid(&Rect::centered(10.0, 10.0), 5.0).unwrap();
        assert_eq!(g.len(), 9);
        let g = make_location_grid(&Rect::centered(100.0, 100.0), 5.0).unwrap();
        assert_eq!(g.len(), 441);
        assert!(g.position_of(&Position::ORIGIN).is_some());
        let g = make_location_grid(&Rect::centered(0.0, 0.0), 5.0).unwrap();
        assert_eq!(g.points(), &[Position::ORIGIN]);
        assert!(matches!(
            make_location_grid(&Rect::centered(1.0, 1.0), 0.0),
            Err(Error::InvalidResolution(_))
        ));
    }

    #[test]
    fn angle_grid_counts() {
        let g = make_angle_grid(FRAC_PI_2).unwrap();
        assert_eq!(g.angles(), &[0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]);
        let g = make_angle_grid(TAU / 3.0).unwrap();
        assert_eq!(g.len(), 3);
        assert!(close(g.angles()[2], 4.0 * PI / 3.0, 1e-15));
        let g = make_angle_grid(5.71_f64.to_radians()).unwrap();
        assert_eq!(g.len(), 63);
        assert!(make_angle_grid(-0.1).is_err());
        assert!(make_angle_grid(TAU).is_err());
    }

    #[test]
    fn trim_unbounded_keeps_everything() {
        let g = make_location_grid(&Rect::centered(20.0, 20.0), 5.0).unwrap();
        let t = trim_by_toa(&g, &ToaEstimates::unbounded(2), &[Position::ORIGIN, Position::new(3.0, 3.0)])
            .unwrap();
        assert_eq!(t.grid, g);
        assert_eq!(t.expansion_rounds, 0);
    }

    #[test]
    fn trim_single_disk() {
        let g = make_location_grid(&Rect::centered(40.0, 40.0), 1.0).unwrap();
        let toas = ToaEstimates::new(vec![10.0 / SPEED_OF_LIGHT], 1e-9).unwrap();
        let t = trim_by_toa(&g, &toas, &[Position::ORIGIN]).unwrap();
        let brute: Vec<_> = g
            .points()
            .iter()
            .copied()
            .filter(|p| p.norm() <= 10.0 + 1e-9)
            .collect();
        assert_eq!(t.grid.len(), brute.len());
        assert!(t.grid.points().iter().all(|p| p.norm() <= 10.0 + 1e-9));
    }

    #[test]
    fn trim_expands_until_nonempty() {
        // Grid centered on the source, stations away from it, zero TOA bounds.
        let region = Rect {
            center: Position::new(7.0, -4.0),
            width: 10.0,
            height: 10.0,
        };
        let g = make_location_grid(&region, 2.5).unwrap();
        let centers = [
            Position::new(-20.0, 0.0),
            Position::new(25.0, 10.0),
            Position::new(0.0, 30.0),
        ];
        let step = 1.0 / 30e6;
        let toas = ToaEstimates::new(vec![0.0; 3], step).unwrap();
        let t = trim_by_toa(&g, &toas, &centers).unwrap();
        // Brute-force oracle: literally add one step per round.
        let mut k = 0u64;
        let expected = loop {
            let bounds: Vec<f64> = vec![k as f64 * step; 3];
            let pts: Vec<_> = g
                .points()
                .iter()
                .copied()
                .filter(|p| {
                    centers
                        .iter()
                        .zip(&bounds)
                        .all(|(c, b)| p.distance(c) <= SPEED_OF_LIGHT * b)
                })
                .collect();
            if !pts.is_empty() {
                break (k, pts);
            }
            k += 1;
        };
        assert_eq!(t.expansion_rounds, expected.0);
        assert_eq!(t.grid.points(), expected.1.as_slice());
        assert!(t.toas.toas.iter().all(|b| close(*b, expected.0 as f64 * step, 1e-18)));
    }

    #[test]
    fn refine_location_examples() {
        let one = refine_location_grid(&[Position::new(1.0, 2.0)], 1.0).unwrap();
        assert_eq!(one.len(), 25);
        let two = refine_location_grid(&[Position::new(0.0, 0.0), Position::new(1.0, 0.0)], 1.0).unwrap();
        // Set-union oracle on integer lattices.
        let mut set = alloc::collections::BTreeSet::new();
        for cx in [0i32, 1] {
            for i in -2..=2 {
                for j in -2..=2 {
                    set.insert((cx + i, j));
                }
            }
        }
        assert_eq!(two.len(), set.len());
        assert_eq!(two.len(), 30);
        assert!(refine_location_grid(&[], 1.0).unwrap().is_empty());
        assert!(refine_location_grid(&[Position::ORIGIN], 0.0).is_err());
    }

    #[test]
    fn refine_angle_examples() {
        let a = refine_angle_grid(&[1.0], 0.1, &[], &Position::ORIGIN).unwrap();
        assert_eq!(a.len(), 5);
        let a = refine_angle_grid(&[], PI / 4.0, &[Position::new(0.0, 10.0)], &Position::ORIGIN).unwrap();
        assert_eq!(a.len(), 1);
        assert!(close(a[0], FRAC_PI_2, 1e-15));
        let a = refine_angle_grid(&[0.01], 0.1, &[], &Position::ORIGIN).unwrap();
        let expected = [0.01 - 0.2, 0.01 - 0.1, 0.01, 0.11, 0.21].map(|t: f64| t.rem_euclid(TAU));
        assert_eq!(a.len(), 5);
        for e in expected {
            assert!(a.iter().any(|x| close(*x, e, 1e-12)), "missing {e}");
        }
        assert!(a.iter().any(|x| close(*x, TAU - 0.19, 1e-12)));
    }

    #[test]
    fn angle_normalization_merges_wraparound_duplicates() {
        let g = AngleGrid::from_angles(vec![0.0, TAU - 1e-14, 1.0, 1.0 + 1e-13], 0.1).unwrap();
        assert_eq!(g.len(), 2);
    }
}
