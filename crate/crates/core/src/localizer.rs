//! Multi-pass localization: weight schedule over the assumed number of
//! line-of-sight stations, grid refinement with TOA trimming, and the full
//! waveform-to-position pipeline.

use alloc::vec::Vec;

use crate::arrays::ArrayGeometry;
use crate::geometry::{
    angle_distance, make_angle_grid, AngleGrid, make_location_grid, refine_angle_grid, refine_location_grid, trim_by_toa,
    LocationGrid, Position, Rect, ToaEstimates, ANGLE_TOLERANCE, POSITION_TOLERANCE,
};
use crate::sparse::{
    correlator_fallback, epsilon_for, extract_support, solve, trivial_energy_check, SolverOptions,
    SparseProblem, SparseSolution, WarmStart,
};
use crate::timing::{noncoherent_trace, threshold_for_pfa, time_station, FalseAlarmModel, NcTrace, TimingResult};
use crate::waveform::{matched_filter, snapshot_at, Pulse, ReceivedWaveform, Snapshot};
use crate::{Error, Result, C64};

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerConfig {
    /// Area searched by the initial location grid.
    pub region: Rect,
    /// Probability that the noise energy stays below ε.
    pub gamma: f64,
    /// Relative objective change that stops refinement.
    pub beta: f64,
    /// Initial location grid spacing, m.
    pub location_resolution: f64,
    /// Initial angle grid spacing, rad.
    pub angle_resolution: f64,
    /// Early false-alarm target for the timing threshold.
    pub pfa: f64,
    pub false_alarm_model: FalseAlarmModel,
    /// Step by which TOA bounds grow when they admit no grid point, s.
    /// `None` uses one inverse bandwidth.
    pub toa_expansion: Option<f64>,
    /// Relative magnitude below which coefficients count as zero.
    pub zero_threshold: f64,
    /// Refinement steps after the initial solve.
    pub max_depth: usize,
    pub solver: SolverOptions,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            region: Rect::centered(100.0, 100.0),
            gamma: 0.99,
            beta: 1e-3,
            location_resolution: 5.0,
            angle_resolution: 5.71f64.to_radians(),
            pfa: 1e-3,
            false_alarm_model: FalseAlarmModel::IndependentLooks,
            toa_expansion: None,
            zero_threshold: 1e-3,
            max_depth: 6,
            solver: SolverOptions::default(),
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be positive",
            });
        }
        if !(self.location_resolution > 0.0) || !self.location_resolution.is_finite() {
            return Err(Error::InvalidResolution(self.location_resolution));
        }
        if !(self.angle_resolution > 0.0) || !self.angle_resolution.is_finite() {
            return Err(Error::InvalidResolution(self.angle_resolution));
        }
        if let Some(v) = self.toa_expansion {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "toa_expansion",
                    reason: "must be positive",
                });
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "must lie in (0, 1)",
            });
        }
        if !(self.zero_threshold >= 0.0 && self.zero_threshold < 1.0) {
            return Err(Error::InvalidParameter {
                name: "zero_threshold",
                reason: "must lie in [0, 1)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Solver,
    Fallback,
}

/// Why the fallback estimator was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    /// The snapshots carry no more energy than the noise allowance.
    LowEnergy,
    /// Every weight down to two stations produced an empty support.
    Exhausted,
    /// Fewer than two stations crossed the detection threshold.
    Undetected,
}

/// Objectives of one refinement run.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTrace {
    pub weight: f64,
    pub objectives: Vec<f64>,
    /// Candidate locations in each step's problem.
    pub grid_sizes: Vec<usize>,
    /// Coordinate-descent epochs spent in each step.
    pub epochs: Vec<usize>,
    /// The relative-change criterion fired before the depth cap.
    pub converged: bool,
    /// Some step returned an empty location support.
    pub empty_support: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Support {
    pub locations: Vec<Position>,
    pub angles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationOutcome {
    pub position: Position,
    pub method: Method,
    pub fallback: Option<FallbackReason>,
    /// Number of stations assumed to see the direct path in the accepted
    /// pass; zero for the fallback.
    pub los_count: usize,
    /// One entry per pass, in the order run.
    pub passes: Vec<RefinementTrace>,
    pub support: Support,
}

impl LocalizationOutcome {
    /// Refinement steps taken in the accepted pass.
    pub fn refinement_steps(&self) -> usize {
        match self.method {
            Method::Solver => self.passes.last().map_or(0, |p| p.objectives.len().saturating_sub(1)),
            Method::Fallback => 0,
        }
    }
}

/// Final state of one refinement run.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub solution: SparseSolution,
    pub locations: Vec<Position>,
    pub angles: Vec<Vec<f64>>,
    pub trace: RefinementTrace,
}

impl Refinement {
    pub fn support(&self, zero_threshold: f64) -> Support {
        let idx = extract_support(&self.solution, zero_threshold);
        Support {
            locations: idx.locations.iter().map(|&q| self.locations[q]).collect(),
            angles: idx
                .angles
                .iter()
                .zip(&self.angles)
                .map(|(ix, grid)| ix.iter().map(|&m| grid[m]).collect())
                .collect(),
        }
    }
}

fn off_station(points: impl IntoIterator<Item = Position>, stations: &[Position]) -> Vec<Position> {
    points
        .into_iter()
        .filter(|p| stations.iter().all(|c| p.distance(c) > POSITION_TOLERANCE))
        .collect()
}

/// Replaces near-duplicates of `exact` by the exact values so carried
/// coefficients multiply identical dictionary columns.
fn snap_points(points: &mut [Position], exact: &[Position]) {
    for p in points.iter_mut() {
        if let Some(e) = exact.iter().find(|e| e.distance(p) <= POSITION_TOLERANCE) {
            *p = *e;
        }
    }
}

fn snap_angles(angles: &mut [f64], exact: &[f64]) {
    for a in angles.iter_mut() {
        if let Some(e) = exact.iter().find(|e| angle_distance(**e, *a) <= ANGLE_TOLERANCE) {
            *a = *e;
        }
    }
}

/// Grids of one refinement step plus a warm start that reproduces the
/// previous solution on them.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedStep {
    pub locations: Vec<Position>,
    pub angles: Vec<Vec<f64>>,
    pub warm: WarmStart,
}

/// Builds step `k` from the previous step's grids and solution. Every point
/// and angle carrying a non-zero coefficient is kept, so the previous
/// solution remains available and the optimum cannot increase.
pub fn refined_step(
    solution: &SparseSolution,
    locations: &[Position],
    angles: &[Vec<f64>],
    stations: &[Position],
    toas: &ToaEstimates,
    cfg: &LocalizerConfig,
    k: u32,
) -> Result<RefinedStep> {
    let nl = stations.len();
    let support = extract_support(solution, cfg.zero_threshold);
    if support.locations.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let scale = 2f64.powi(k as i32);
    let delta = cfg.location_resolution / scale;
    let theta_delta = cfg.angle_resolution / scale;
    let est: Vec<Position> = support.locations.iter().map(|&q| locations[q]).collect();

    let kept_rows: Vec<usize> = (0..locations.len()).filter(|&q| solution.row_norm(q) > 0.0).collect();
    let kept_points: Vec<Position> = kept_rows.iter().map(|&q| locations[q]).collect();
    let refined = off_station(refine_location_grid(&est, delta)?, stations);
    let refined = LocationGrid::from_points(refined, delta)?;
    // Trimming only assists; a refined grid it would empty is used whole.
    let trimmed = trim_by_toa(&refined, toas, stations)?;
    let mut points = if trimmed.expansion_rounds == 0 {
        trimmed.grid.into_points()
    } else {
        refined.into_points()
    };
    snap_points(&mut points, &kept_points);
    let mut all = kept_points;
    all.extend(points);
    let new_locations = LocationGrid::from_points(all, delta)?.into_points();

    let mut new_angles = Vec::with_capacity(nl);
    for l in 0..nl {
        let est_angles: Vec<f64> = support.angles[l].iter().map(|&m| angles[l][m]).collect();
        let kept: Vec<f64> = (0..angles[l].len())
            .filter(|&m| solution.y[l][m] != C64::new(0.0, 0.0))
            .map(|m| angles[l][m])
            .collect();
        let mut grid = refine_angle_grid(&est_angles, theta_delta, &est, &stations[l])?;
        grid.extend(kept.iter().copied());
        let mut grid = AngleGrid::from_angles(grid, theta_delta)?.angles().to_vec();
        snap_angles(&mut grid, &kept);
        new_angles.push(grid);
    }

    let mut wx = alloc::vec![C64::new(0.0, 0.0); new_locations.len() * nl];
    for &q in &kept_rows {
        let p = locations[q];
        if let Some(nq) = new_locations.iter().position(|e| *e == p) {
            wx[nq * nl..(nq + 1) * nl].copy_from_slice(solution.row(q));
        }
    }
    let mut wy: Vec<Vec<C64>> = new_angles
        .iter()
        .map(|g| alloc::vec![C64::new(0.0, 0.0); g.len()])
        .collect();
    for l in 0..nl {
        for (m, v) in solution.y[l].iter().enumerate() {
            if *v == C64::new(0.0, 0.0) {
                continue;
            }
            let old = angles[l][m];
            if let Some(nm) = new_angles[l]
                .iter()
                .position(|a| angle_distance(*a, old) <= ANGLE_TOLERANCE)
            {
                wy[l][nm] = *v;
            }
        }
    }
    Ok(RefinedStep {
        locations: new_locations,
        angles: new_angles,
        warm: WarmStart {
            x: wx,
            y: wy,
            lambda: Some(solution.lambda),
        },
    })
}

/// Initial grids: the region lattice (minus station centers) trimmed by the
/// TOA bounds, and the full angle lattice at every station. Also returns
/// the TOA bounds after any expansion.
pub fn initial_grids(
    stations: &[Position],
    toas: &ToaEstimates,
    cfg: &LocalizerConfig,
) -> Result<(Vec<Position>, Vec<Vec<f64>>, ToaEstimates)> {
    let grid = make_location_grid(&cfg.region, cfg.location_resolution)?;
    let grid = LocationGrid::from_points(off_station(grid.into_points(), stations), cfg.location_resolution)?;
    let trimmed = trim_by_toa(&grid, toas, stations)?;
    let locations = trimmed.grid.into_points();
    if locations.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let angles = make_angle_grid(cfg.angle_resolution)?.angles().to_vec();
    Ok((locations, alloc::vec![angles; stations.len()], trimmed.toas))
}

/// Grid refinement driven by the relative objective change.
#[allow(clippy::too_many_arguments)]
pub fn refine(
    snapshots: &[Vec<C64>],
    stations: &[Position],
    geometries: &[ArrayGeometry],
    cfg: &LocalizerConfig,
    weight: f64,
    epsilon: f64,
    toas: &ToaEstimates,
) -> Result<Refinement> {
    let (locations, angles, carried) = initial_grids(stations, toas, cfg)?;
    refine_from(snapshots, stations, geometries, cfg, weight, epsilon, &carried, locations, angles)
}

/// [`refine`] starting from caller-supplied grids instead of the trimmed
/// region lattice.
#[allow(clippy::too_many_arguments)]
pub fn refine_from(
    snapshots: &[Vec<C64>],
    stations: &[Position],
    geometries: &[ArrayGeometry],
    cfg: &LocalizerConfig,
    weight: f64,
    epsilon: f64,
    toas: &ToaEstimates,
    mut locations: Vec<Position>,
    mut angles: Vec<Vec<f64>>,
) -> Result<Refinement> {
    if locations.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let carried = toas;
    let build = |locations: &[Position], angles: &[Vec<f64>]| {
        SparseProblem::from_geometry(snapshots.to_vec(), stations, geometries, locations, angles, weight, epsilon)
    };
    let mut solution = solve(&build(&locations, &angles)?, &cfg.solver, None)?;
    let mut trace = RefinementTrace {
        weight,
        objectives: alloc::vec![solution.objective],
        grid_sizes: alloc::vec![locations.len()],
        epochs: alloc::vec![solution.epochs],
        converged: false,
        empty_support: false,
    };
    if cfg.beta.is_finite() {
        for k in 1..=cfg.max_depth {
            if extract_support(&solution, cfg.zero_threshold).locations.is_empty() {
                break;
            }
            let step = refined_step(&solution, &locations, &angles, stations, carried, cfg, k as u32)?;
            let next = solve(&build(&step.locations, &step.angles)?, &cfg.solver, Some(&step.warm))?;
            let prev = solution.objective;
            locations = step.locations;
            angles = step.angles;
            solution = next;
            trace.objectives.push(solution.objective);
            trace.grid_sizes.push(locations.len());
            trace.epochs.push(solution.epochs);
            if prev > 0.0 && (prev - solution.objective).abs() / prev < cfg.beta {
                trace.converged = true;
                break;
            }
        }
    }
    trace.empty_support = extract_support(&solution, cfg.zero_threshold).locations.is_empty();
    Ok(Refinement {
        solution,
        locations,
        angles,
        trace,
    })
}

fn fallback_outcome(
    snapshots: &[Vec<C64>],
    stations: &[Position],
    geometries: &[ArrayGeometry],
    cfg: &LocalizerConfig,
    reason: FallbackReason,
    passes: Vec<RefinementTrace>,
) -> Result<LocalizationOutcome> {
    let grid = make_location_grid(&cfg.region, cfg.location_resolution)?;
    let position = correlator_fallback(snapshots, grid.points(), stations, geometries)?;
    Ok(LocalizationOutcome {
        position,
        method: Method::Fallback,
        fallback: Some(reason),
        los_count: 0,
        passes,
        support: Support::default(),
    })
}

/// Tries `L̂ = L, L − 1, …, 2` with `w = √(L̂ − 0.5)` and keeps the first pass
/// whose support is non-empty.
pub fn locate(
    snapshots: &[Vec<C64>],
    stations: &[Position],
    geometries: &[ArrayGeometry],
    noise_variance: f64,
    cfg: &LocalizerConfig,
    toas: &ToaEstimates,
) -> Result<LocalizationOutcome> {
    cfg.validate()?;
    let nl = stations.len();
    if snapshots.len() != nl || geometries.len() != nl || toas.toas.len() != nl {
        return Err(Error::LengthMismatch {
            expected: nl,
            found: snapshots.len().min(geometries.len()).min(toas.toas.len()),
        });
    }
    let total: usize = snapshots.iter().map(Vec::len).sum();
    let epsilon = epsilon_for(cfg.gamma, noise_variance, total)?;
    if trivial_energy_check(snapshots, epsilon) {
        return fallback_outcome(snapshots, stations, geometries, cfg, FallbackReason::LowEnergy, Vec::new());
    }
    let mut passes = Vec::new();
    for los_count in (2..=nl).rev() {
        let weight = (los_count as f64 - 0.5).sqrt();
        let r = refine(snapshots, stations, geometries, cfg, weight, epsilon, toas)?;
        let empty = r.trace.empty_support;
        passes.push(r.trace.clone());
        if empty {
            continue;
        }
        let q = r.solution.strongest_row().ok_or(Error::EmptyGrid)?;
        return Ok(LocalizationOutcome {
            position: r.locations[q],
            method: Method::Solver,
            fallback: None,
            los_count,
            support: r.support(cfg.zero_threshold),
            passes,
        });
    }
    fallback_outcome(snapshots, stations, geometries, cfg, FallbackReason::Exhausted, passes)
}

/// Timing and snapshot of one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationFrontEnd {
    pub threshold: f64,
    /// `None` when the trace never reaches the threshold.
    pub timing: Option<TimingResult>,
    pub snapshot: Option<Snapshot>,
    pub trace: NcTrace,
}

/// Per-station threshold, TOA estimate, sampling time and snapshot.
pub fn front_end(
    waveform: &ReceivedWaveform,
    pulse: &Pulse,
    noise_variance: f64,
    cfg: &LocalizerConfig,
) -> Result<StationFrontEnd> {
    let mf = matched_filter(waveform, pulse);
    let trace = NcTrace::from_mf(&mf);
    let antennas = waveform.antennas.len();
    let threshold = threshold_for_pfa(
        cfg.pfa,
        antennas,
        noise_variance,
        waveform.duration(),
        pulse.bandwidth(),
        cfg.false_alarm_model,
    )?;
    match time_station(&trace, threshold) {
        Ok(t) => {
            let snapshot = snapshot_at(&mf, t.sampling_time)?;
            Ok(StationFrontEnd {
                threshold,
                timing: Some(t),
                snapshot: Some(snapshot),
                trace,
            })
        }
        Err(Error::NoDetection) => Ok(StationFrontEnd {
            threshold,
            timing: None,
            snapshot: None,
            trace,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisoulOutcome {
    pub stations: Vec<StationFrontEnd>,
    /// Indices of the stations that took part in localization.
    pub detected: Vec<usize>,
    pub outcome: LocalizationOutcome,
}

/// Localization from snapshots already produced by [`front_end`].
pub fn locate_detected(
    front: Vec<StationFrontEnd>,
    stations: &[Position],
    geometries: &[ArrayGeometry],
    noise_variance: f64,
    bandwidth: f64,
    cfg: &LocalizerConfig,
) -> Result<DisoulOutcome> {
    let detected: Vec<usize> = (0..front.len()).filter(|&l| front[l].snapshot.is_some()).collect();
    if detected.len() < 2 {
        return Err(Error::InsufficientDetections {
            detected: detected.len(),
        });
    }
    let snapshots: Vec<Vec<C64>> = detected
        .iter()
        .map(|&l| front[l].snapshot.as_ref().map(|s| s.values.clone()).unwrap_or_default())
        .collect();
    let centers: Vec<Position> = detected.iter().map(|&l| stations[l]).collect();
    let geoms: Vec<ArrayGeometry> = detected.iter().map(|&l| geometries[l].clone()).collect();
    let toas = ToaEstimates::new(
        detected
            .iter()
            .map(|&l| front[l].timing.map_or(f64::INFINITY, |t| t.toa.max(0.0)))
            .collect(),
        cfg.toa_expansion.unwrap_or(1.0 / bandwidth),
    )?;
    let outcome = locate(&snapshots, &centers, &geoms, noise_variance, cfg, &toas)?;
    Ok(DisoulOutcome {
        stations: front,
        detected,
        outcome,
    })
}

/// Position for records where fewer than two stations cross the detection
/// threshold: each station is sampled at the peak of its aggregated trace
/// and the correlator picks the location.
pub fn undetected_fallback(
    waveforms: &[ReceivedWaveform],
    pulse: &Pulse,
    stations: &[Position],
    geometries: &[ArrayGeometry],
    cfg: &LocalizerConfig,
) -> Result<LocalizationOutcome> {
    if waveforms.len() != stations.len() || geometries.len() != stations.len() {
        return Err(Error::LengthMismatch {
            expected: stations.len(),
            found: waveforms.len().min(geometries.len()),
        });
    }
    let snapshots = waveforms
        .iter()
        .map(|w| {
            let mf = matched_filter(w, pulse);
            let trace = NcTrace::from_mf(&mf);
            // First maximum wins ties.
            let peak = trace
                .values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0;
            Ok(snapshot_at(&mf, peak as f64 * mf.dt)?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    fallback_outcome(&snapshots, stations, geometries, cfg, FallbackReason::Undetected, Vec::new())
}

/// Waveforms in, position out.
pub fn disoul(
    waveforms: &[ReceivedWaveform],
    stations: &[Position],
    geometries: &[ArrayGeometry],
    pulse: &Pulse,
    noise_variance: f64,
    cfg: &LocalizerConfig,
) -> Result<DisoulOutcome> {
    if waveforms.len() != stations.len() || geometries.len() != stations.len() {
        return Err(Error::LengthMismatch {
            expected: stations.len(),
            found: waveforms.len().min(geometries.len()),
        });
    }
    let front = waveforms
        .iter()
        .map(|w| front_end(w, pulse, noise_variance, cfg))
        .collect::<Result<Vec<_>>>()?;
    locate_detected(front, stations, geometries, noise_variance, pulse.bandwidth(), cfg)
}

/// Convenience for callers that only need the aggregated trace.
pub fn trace_of(waveform: &ReceivedWaveform, pulse: &Pulse) -> NcTrace {
    noncoherent_trace(waveform, pulse)
}
