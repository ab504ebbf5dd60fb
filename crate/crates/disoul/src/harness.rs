//! Seeded Monte-Carlo trials, parameter sweeps and the metrics they feed.
//!
//! A trial is fully determined by the scenario and its index: the trial
//! seed is derived from the master seed and the index, and every random
//! stream (arrays, source, channel, calibration, noise) from the trial seed.
//! All methods of a trial see the same waveforms.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use disoul_core::arrays::{
    circular_random_array, fraunhofer_distance, wavelength_for, ArrayGeometry, CalibrationError,
};
use disoul_core::baselines::{beamforming_aoa, pure_bearing_fix, srls, stansfield, BearingSet};
use disoul_core::channel::{draw_channel, ChannelParams, ChannelRealization};
use disoul_core::geometry::{make_angle_grid, toa_of, AngleGrid, Position, ToaEstimates};
use disoul_core::localizer::{
    front_end, initial_grids, locate_detected, undetected_fallback, FallbackReason, LocalizerConfig, Method, RefinementTrace, StationFrontEnd,
};
use disoul_core::rng::{derive_seed, rng_from_seed, uniform};
use disoul_core::sparse::{epsilon_for, SparseProblem};
use disoul_core::waveform::{default_observation_window, gaussian_pulse, synthesize_received, Pulse, ReceivedWaveform};
use disoul_core::C64;
use rayon::prelude::*;

use crate::config::{MethodId, ScenarioConfig};
use crate::Error;

/// Sub-meter accuracy: the headline metric.
pub const SUBMETER: f64 = 1.0;

/// Range floor used when a delay estimate is zero, m.
const MIN_RANGE: f64 = 1e-3;

const SOURCE_ATTEMPTS: usize = 10_000;

// Stream identifiers under the trial seed.
const STREAM_SOURCE: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_ARRAYS: u64 = 100;
const STREAM_CALIBRATION: u64 = 200;
const STREAM_NOISE: u64 = 300;

/// Everything derived once from a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub pulse: Pulse,
    pub wavelength: f64,
    pub noise_variance: f64,
    pub channel: ChannelParams,
    pub localizer: LocalizerConfig,
    pub angle_grid: AngleGrid,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let pulse = gaussian_pulse(cfg.bandwidth_hz, cfg.oversampling, cfg.pulse_truncation)?;
        let channel = cfg.channel_params();
        channel.validate()?;
        let localizer = cfg.localizer();
        localizer.validate()?;
        Ok(Self {
            pulse,
            wavelength: wavelength_for(cfg.carrier_hz),
            noise_variance: cfg.noise_variance(),
            angle_grid: make_angle_grid(localizer.angle_resolution)?,
            channel,
            localizer,
            cfg,
        })
    }

    pub fn trial_seed(&self, index: usize) -> u64 {
        derive_seed(self.cfg.seed, index as u64)
    }
}

/// Synthetic inputs of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub index: usize,
    pub seed: u64,
    pub source: Position,
    pub geometries: Vec<ArrayGeometry>,
    pub channel: ChannelRealization,
    /// Empty when the calibration interval is zero.
    pub calibration: Vec<CalibrationError>,
    pub waveforms: Vec<ReceivedWaveform>,
}

/// Arrays are redrawn for every trial.
pub fn draw_arrays(sc: &Scenario, seed: u64) -> Result<Vec<ArrayGeometry>, Error> {
    let radius = sc.cfg.array_radius_wavelengths * sc.wavelength;
    (0..sc.cfg.stations.len())
        .map(|l| {
            circular_random_array(
                sc.cfg.antennas,
                radius,
                sc.wavelength,
                derive_seed(seed, STREAM_ARRAYS + l as u64),
            )
            .map_err(Error::from)
        })
        .collect()
}

/// Uniform in the region, outside every array's Fraunhofer disk.
pub fn draw_source(sc: &Scenario, geometries: &[ArrayGeometry], seed: u64) -> Result<Position, Error> {
    let region = sc.cfg.region();
    let mut rng = rng_from_seed(derive_seed(seed, STREAM_SOURCE));
    for _ in 0..SOURCE_ATTEMPTS {
        let p = Position::new(
            uniform(&mut rng, region.center.x - region.width / 2.0, region.center.x + region.width / 2.0),
            uniform(&mut rng, region.center.y - region.height / 2.0, region.center.y + region.height / 2.0),
        );
        let far = sc
            .cfg
            .stations
            .iter()
            .zip(geometries)
            .all(|(c, g)| p.distance(c) > fraunhofer_distance(g));
        if far {
            return Ok(p);
        }
    }
    Err(Error::SourcePlacement(SOURCE_ATTEMPTS))
}

pub fn simulate(sc: &Scenario, index: usize) -> Result<TrialData, Error> {
    let seed = sc.trial_seed(index);
    let geometries = draw_arrays(sc, seed)?;
    let source = draw_source(sc, &geometries, seed)?;
    let channel = draw_channel(&source, &sc.cfg.stations, &sc.channel, derive_seed(seed, STREAM_CHANNEL))?;
    let interval = sc.cfg.calibration_interval_deg.to_radians();
    let calibration = if interval > 0.0 {
        (0..geometries.len())
            .map(|l| CalibrationError::uniform(sc.cfg.antennas, interval, derive_seed(seed, STREAM_CALIBRATION + l as u64)))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let t_obs = default_observation_window(channel.max_toa(), &sc.pulse);
    let waveforms = geometries
        .iter()
        .zip(&channel.stations)
        .enumerate()
        .map(|(l, (g, paths))| {
            synthesize_received(
                g,
                paths,
                &sc.pulse,
                sc.noise_variance,
                t_obs,
                derive_seed(seed, STREAM_NOISE + l as u64),
                calibration.get(l),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrialData {
        index,
        seed,
        source,
        geometries,
        channel,
        calibration,
        waveforms,
    })
}

/// Localization bookkeeping of the direct method.
#[derive(Debug, Clone, PartialEq)]
pub struct DisoulDetails {
    pub los_count: usize,
    pub refinement_steps: usize,
    pub method: Method,
    pub fallback: Option<FallbackReason>,
    pub detected: Vec<usize>,
    pub passes: Vec<RefinementTrace>,
    /// Whether the snapshot energy was already within the noise allowance.
    pub low_energy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: MethodId,
    pub estimate: Option<Position>,
    pub error_m: Option<f64>,
    /// Why no estimate was produced.
    pub failure: Option<String>,
    pub details: Option<DisoulDetails>,
}

impl MethodResult {
    /// Localization error, infinite when the method failed.
    pub fn error_or_inf(&self) -> f64 {
        self.error_m.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationTiming {
    /// Direct-path delay from the geometry.
    pub true_toa: f64,
    pub estimated_toa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    pub source: Position,
    pub stations: Vec<StationTiming>,
    pub methods: Vec<MethodResult>,
}

impl TrialResult {
    pub fn method(&self, id: MethodId) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == id)
    }
}

impl fmt::Display for TrialResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trial {} seed {}", self.index, self.seed)?;
        writeln!(f, "source {} {}", self.source.x, self.source.y)?;
        for (l, s) in self.stations.iter().enumerate() {
            match s.estimated_toa {
                Some(t) => writeln!(f, "station {l} toa_true {:e} toa_est {:e}", s.true_toa, t)?,
                None => writeln!(f, "station {l} toa_true {:e} toa_est none", s.true_toa)?,
            }
        }
        for m in &self.methods {
            match (&m.estimate, &m.failure) {
                (Some(p), _) => write!(
                    f,
                    "method {} estimate {} {} error_m {}",
                    m.method,
                    p.x,
                    p.y,
                    m.error_or_inf()
                )?,
                (None, Some(why)) => write!(f, "method {} failed: {why}", m.method)?,
                (None, None) => write!(f, "method {} failed", m.method)?,
            }
            if let Some(d) = &m.details {
                let kind = match (d.method, d.fallback) {
                    (Method::Solver, _) => "solver".to_string(),
                    (Method::Fallback, Some(FallbackReason::LowEnergy)) => "fallback(low-energy)".to_string(),
                    (Method::Fallback, Some(FallbackReason::Undetected)) => "fallback(undetected)".to_string(),
                    (Method::Fallback, _) => "fallback(exhausted)".to_string(),
                };
                write!(
                    f,
                    " los_count {} refinement_steps {} path {kind} detected {:?}",
                    d.los_count, d.refinement_steps, d.detected
                )?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn finish(method: MethodId, source: &Position, r: Result<Position, String>) -> MethodResult {
    match r {
        Ok(p) => MethodResult {
            method,
            estimate: Some(p),
            error_m: Some(p.distance(source)),
            failure: None,
            details: None,
        },
        Err(why) => MethodResult {
            method,
            estimate: None,
            error_m: None,
            failure: Some(why),
            details: None,
        },
    }
}

/// Runs the configured methods on a simulated trial.
pub fn evaluate(sc: &Scenario, data: &TrialData) -> Result<TrialResult, Error> {
    let stations = &sc.cfg.stations;
    let front: Vec<StationFrontEnd> = data
        .waveforms
        .iter()
        .map(|w| front_end(w, &sc.pulse, sc.noise_variance, &sc.localizer))
        .collect::<Result<_, _>>()?;
    let detected: Vec<usize> = (0..front.len()).filter(|&l| front[l].timing.is_some()).collect();
    let timing: Vec<StationTiming> = stations
        .iter()
        .zip(&front)
        .map(|(c, fe)| StationTiming {
            true_toa: toa_of(&data.source, c),
            estimated_toa: fe.timing.map(|t| t.toa),
        })
        .collect();
    let centers: Vec<Position> = detected.iter().map(|&l| stations[l]).collect();
    let toas: Vec<f64> = detected
        .iter()
        .filter_map(|&l| front[l].timing.map(|t| t.toa.max(0.0)))
        .collect();
    let bearings = || -> Result<Vec<f64>, String> {
        detected
            .iter()
            .map(|&l| {
                let z = &front[l].snapshot.as_ref().ok_or("missing snapshot")?.values;
                beamforming_aoa(z, &data.geometries[l], &sc.angle_grid).map_err(|e| e.to_string())
            })
            .collect()
    };

    let mut methods = Vec::with_capacity(sc.cfg.methods.len());
    for &id in &sc.cfg.methods {
        let result = match id {
            MethodId::Disoul => {
                let low_energy_oracle = low_energy(sc, &front);
                match locate_detected(
                    front.clone(),
                    stations,
                    &data.geometries,
                    sc.noise_variance,
                    sc.pulse.bandwidth(),
                    &sc.localizer,
                ) {
                    Ok(o) => {
                        let mut r = finish(id, &data.source, Ok(o.outcome.position));
                        r.details = Some(DisoulDetails {
                            los_count: o.outcome.los_count,
                            refinement_steps: o.outcome.refinement_steps(),
                            method: o.outcome.method,
                            fallback: o.outcome.fallback,
                            detected: o.detected,
                            passes: o.outcome.passes,
                            low_energy: low_energy_oracle,
                        });
                        r
                    }
                    // Too few detections for the solver: the correlator
                    // still places the source from the trace peaks.
                    Err(disoul_core::Error::InsufficientDetections { .. }) => {
                        match undetected_fallback(&data.waveforms, &sc.pulse, stations, &data.geometries, &sc.localizer) {
                            Ok(o) => {
                                let mut r = finish(id, &data.source, Ok(o.position));
                                r.details = Some(DisoulDetails {
                                    los_count: 0,
                                    refinement_steps: 0,
                                    method: o.method,
                                    fallback: o.fallback,
                                    detected: detected.clone(),
                                    passes: Vec::new(),
                                    low_energy: low_energy_oracle,
                                });
                                r
                            }
                            Err(e) => finish(id, &data.source, Err(e.to_string())),
                        }
                    }
                    Err(e) => finish(id, &data.source, Err(e.to_string())),
                }
            }
            MethodId::Srls => finish(id, &data.source, srls(&toas, &centers).map_err(|e| e.to_string())),
            MethodId::Stansfield => {
                let r = bearings().and_then(|a| {
                    let set = BearingSet::with_toas(a, &toas, MIN_RANGE).map_err(|e| e.to_string())?;
                    stansfield(&set, &centers).map_err(|e| e.to_string())
                });
                finish(id, &data.source, r)
            }
            MethodId::BearingLs => {
                let r = bearings().and_then(|a| {
                    let set = BearingSet::new(a, None).map_err(|e| e.to_string())?;
                    pure_bearing_fix(&set, &centers).map_err(|e| e.to_string())
                });
                finish(id, &data.source, r)
            }
        };
        methods.push(result);
    }
    Ok(TrialResult {
        index: data.index,
        seed: data.seed,
        source: data.source,
        stations: timing,
        methods,
    })
}

/// Independent check of the low-energy condition on the detected snapshots.
fn low_energy(sc: &Scenario, front: &[StationFrontEnd]) -> bool {
    let snaps: Vec<_> = front.iter().filter_map(|f| f.snapshot.as_ref()).collect();
    if snaps.is_empty() {
        return false;
    }
    let total: usize = snaps.iter().map(|s| s.values.len()).sum();
    let energy: f64 = snaps.iter().map(|s| s.energy()).sum();
    match disoul_core::sparse::epsilon_for(sc.localizer.gamma, sc.noise_variance, total) {
        Ok(eps) => energy <= eps,
        Err(_) => false,
    }
}

/// The first-pass problem the localizer would solve on this trial: every
/// detected station, all of them assumed direct, initial grids. `None`
/// when fewer than two stations detect.
pub fn initial_problem(sc: &Scenario, data: &TrialData) -> Result<Option<SparseProblem>, Error> {
    let front: Vec<StationFrontEnd> = data
        .waveforms
        .iter()
        .map(|w| front_end(w, &sc.pulse, sc.noise_variance, &sc.localizer))
        .collect::<Result<_, _>>()?;
    let detected: Vec<usize> = (0..front.len()).filter(|&l| front[l].snapshot.is_some()).collect();
    if detected.len() < 2 {
        return Ok(None);
    }
    let snapshots: Vec<Vec<C64>> = detected
        .iter()
        .filter_map(|&l| front[l].snapshot.as_ref().map(|s| s.values.clone()))
        .collect();
    let centers: Vec<Position> = detected.iter().map(|&l| sc.cfg.stations[l]).collect();
    let geoms: Vec<ArrayGeometry> = detected.iter().map(|&l| data.geometries[l].clone()).collect();
    let toas = ToaEstimates::new(
        detected
            .iter()
            .map(|&l| front[l].timing.map_or(f64::INFINITY, |t| t.toa.max(0.0)))
            .collect(),
        sc.localizer.toa_expansion.unwrap_or(1.0 / sc.pulse.bandwidth()),
    )?;
    let (locations, angles, _) = initial_grids(&centers, &toas, &sc.localizer)?;
    let total: usize = snapshots.iter().map(Vec::len).sum();
    let eps = epsilon_for(sc.localizer.gamma, sc.noise_variance, total)?;
    let weight = (detected.len() as f64 - 0.5).sqrt();
    Ok(Some(SparseProblem::from_geometry(snapshots, &centers, &geoms, &locations, &angles, weight, eps)?))
}

pub fn run_trial(cfg: &ScenarioConfig, index: usize) -> Result<TrialResult, Error> {
    let sc = Scenario::new(cfg.clone())?;
    evaluate(&sc, &simulate(&sc, index)?)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))
}

/// Trials `0..count` in parallel; results are ordered by index.
pub fn run_trials(sc: &Scenario, count: usize) -> Result<Vec<TrialResult>, Error> {
    pool(sc.cfg.workers)?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| evaluate(sc, &simulate(sc, i)?))
            .collect()
    })
}

/// Parameters a sweep can vary, with the unit of their values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// dB.
    ENoDb,
    /// MHz.
    Bandwidth,
    /// Antennas per station.
    Antennas,
    /// Mean ray inter-arrival time in ns; the cluster inter-arrival time
    /// follows at 17/5 of it.
    RayArrival,
    /// Calibration phase interval, degrees.
    Calibration,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::ENoDb => "e_n0",
            SweepParam::Bandwidth => "bandwidth",
            SweepParam::Antennas => "antennas",
            SweepParam::RayArrival => "ray_arrival",
            SweepParam::Calibration => "calibration",
        }
    }

    /// Copy of `cfg` with the parameter set to `value`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, Error> {
        let mut c = cfg.clone();
        match self {
            SweepParam::ENoDb => c.e_n0_db = value,
            SweepParam::Bandwidth => c.bandwidth_hz = value * 1e6,
            SweepParam::Antennas => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidValues(format!("antennas = {value}")));
                }
                c.antennas = value as usize;
            }
            SweepParam::RayArrival => {
                c.ray_interarrival_ns = value;
                c.cluster_interarrival_ns = value * 17.0 / 5.0;
            }
            SweepParam::Calibration => c.calibration_interval_deg = value,
        }
        c.validate()?;
        Ok(c)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "e_n0" => Ok(SweepParam::ENoDb),
            "bandwidth" => Ok(SweepParam::Bandwidth),
            "antennas" => Ok(SweepParam::Antennas),
            "ray_arrival" => Ok(SweepParam::RayArrival),
            "calibration" => Ok(SweepParam::Calibration),
            _ => Err(Error::UnknownParameter(s.to_string())),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_values(s: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidValues(s.to_string());
    let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step == 0.0 || (stop - start) / step < 0.0 {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(bad());
            }
            // Rounded so that e.g. 0.1 steps print cleanly.
            (0..=n)
                .map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9)
                .collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub method: MethodId,
    pub prob_submeter: f64,
    pub n_trials: usize,
    /// Sorted errors; failed trials count as infinite.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

/// Fraction of errors strictly below one meter.
pub fn prob_submeter(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| **e < SUBMETER).count() as f64 / errors.len() as f64
}

/// Empirical CDF at each finite error: `(error, fraction ≤ error)`.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_finite())
        .map(|(i, e)| (*e, (i + 1) as f64 / n))
        .collect()
}

/// Rows for one set of trials, one per configured method.
pub fn summarize(value: f64, methods: &[MethodId], trials: &[TrialResult]) -> Vec<SweepRow> {
    methods
        .iter()
        .map(|&m| {
            let mut errors: Vec<f64> = trials
                .iter()
                .map(|t| t.method(m).map_or(f64::INFINITY, MethodResult::error_or_inf))
                .collect();
            errors.sort_by(f64::total_cmp);
            SweepRow {
                value,
                method: m,
                prob_submeter: prob_submeter(&errors),
                n_trials: trials.len(),
                errors,
            }
        })
        .collect()
}

/// Every value uses trial indices `0..trials`, so sweep points share the
/// same source positions and random streams.
pub fn run_sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<MetricsTable, Error> {
    let mut rows = Vec::new();
    for &v in values {
        let sc = Scenario::new(param.apply(cfg, v)?)?;
        let trials = run_trials(&sc, cfg.trials)?;
        rows.extend(summarize(v, &cfg.methods, &trials));
    }
    Ok(MetricsTable { param, rows })
}

/// `param,method,prob_submeter,n_trials`.
pub fn write_sweep_csv<W: Write>(table: &MetricsTable, out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "method", "prob_submeter", "n_trials"])?;
    for r in &table.rows {
        w.write_record([
            r.value.to_string(),
            r.method.name().to_string(),
            r.prob_submeter.to_string(),
            r.n_trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `param,method,error_m,cdf`, one row per finite error.
pub fn write_cdf_csv<W: Write>(table: &MetricsTable, out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "method", "error_m", "cdf"])?;
    for r in &table.rows {
        for (e, p) in error_cdf(&r.errors) {
            w.write_record([r.value.to_string(), r.method.name().to_string(), e.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
