//! Weight validation on a hand-built two-point scene.
//!
//! The source at (18, 31) m reaches all four corner stations directly; a
//! reflector at (25, −7) m adds a second path at every station except the
//! top-left one. The source is therefore consistent with four paths, the
//! reflector with three, and every other location with at most two. Grids
//! contain both points and all true bearings, delays are ignored, and each
//! run redraws path gains (Rayleigh amplitude, uniform phase) and noise.

use disoul_core::arrays::{circular_random_array, wavelength_for, ArrayGeometry};
use disoul_core::geometry::{aoa_of, make_angle_grid, make_location_grid, AngleGrid, LocationGrid, Position, ToaEstimates};
use disoul_core::localizer::{refine_from, LocalizerConfig, RefinementTrace};
use disoul_core::rng::{complex_normal, derive_seed, rng_from_seed};
use disoul_core::sparse::epsilon_for;
use disoul_core::C64;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::harness::prob_submeter;
use crate::Error;

pub const SOURCE: Position = Position::new(18.0, 31.0);
pub const REFLECTOR: Position = Position::new(25.0, -7.0);

const STREAM_ARRAYS: u64 = 1_000;
const STREAM_RUNS: u64 = 2_000;

#[derive(Debug, Clone)]
pub struct WeightScene {
    pub stations: Vec<Position>,
    /// Stations that also see the reflector.
    pub reflected: Vec<bool>,
    pub geometries: Vec<ArrayGeometry>,
    /// Snapshot noise variance for the requested SNR.
    pub noise_variance: f64,
    pub localizer: LocalizerConfig,
    pub locations: Vec<Position>,
    pub angles: Vec<Vec<f64>>,
    pub seed: u64,
}

impl WeightScene {
    /// Stations, array sizes, resolutions and seed come from `cfg`; the SNR
    /// is per station, `S·E|α|²/σ²` with unit mean path power.
    pub fn new(cfg: &ScenarioConfig, snr_db: f64) -> Result<Self, Error> {
        cfg.validate()?;
        let lambda = wavelength_for(cfg.carrier_hz);
        let geometries = (0..cfg.stations.len())
            .map(|l| {
                circular_random_array(
                    cfg.antennas,
                    cfg.array_radius_wavelengths * lambda,
                    lambda,
                    derive_seed(cfg.seed, STREAM_ARRAYS + l as u64),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        // The station nearest the top-left corner of the region misses the
        // reflection.
        let top_left = Position::new(-cfg.region_width_m / 2.0, cfg.region_height_m / 2.0);
        let blocked = (0..cfg.stations.len())
            .min_by(|&a, &b| cfg.stations[a].distance(&top_left).total_cmp(&cfg.stations[b].distance(&top_left)))
            .unwrap_or(0);
        let reflected = (0..cfg.stations.len()).map(|l| l != blocked).collect();
        let localizer = cfg.localizer();
        let noise_variance = cfg.antennas as f64 / 10f64.powf(snr_db / 10.0);

        let lattice = make_location_grid(&localizer.region, localizer.location_resolution)?;
        let mut points: Vec<Position> = lattice
            .into_points()
            .into_iter()
            .filter(|p| cfg.stations.iter().all(|c| p.distance(c) > 0.0))
            .collect();
        points.extend([SOURCE, REFLECTOR]);
        let locations = LocationGrid::from_points(points, localizer.location_resolution)?.into_points();
        let base = make_angle_grid(localizer.angle_resolution)?;
        let angles = cfg
            .stations
            .iter()
            .map(|c| {
                let mut a = base.angles().to_vec();
                a.push(aoa_of(&SOURCE, c)?);
                a.push(aoa_of(&REFLECTOR, c)?);
                Ok(AngleGrid::from_angles(a, localizer.angle_resolution)?.angles().to_vec())
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(Self {
            stations: cfg.stations.clone(),
            reflected,
            geometries,
            noise_variance,
            localizer,
            locations,
            angles,
            seed: cfg.seed,
        })
    }

    /// Snapshots of run `index`; identical for every weight.
    pub fn snapshots(&self, index: usize) -> Result<Vec<Vec<C64>>, Error> {
        let mut rng = rng_from_seed(derive_seed(self.seed, STREAM_RUNS + index as u64));
        self.stations
            .iter()
            .zip(&self.geometries)
            .zip(&self.reflected)
            .map(|((c, g), &refl)| {
                let mut z = g.steering_vector(aoa_of(&SOURCE, c)?);
                let a = complex_normal(&mut rng, 1.0);
                z.iter_mut().for_each(|v| *v *= a);
                let b = complex_normal(&mut rng, 1.0);
                if refl {
                    for (v, r) in z.iter_mut().zip(g.steering_vector(aoa_of(&REFLECTOR, c)?)) {
                        *v += r * b;
                    }
                }
                for v in z.iter_mut() {
                    *v += complex_normal(&mut rng, self.noise_variance);
                }
                Ok(z)
            })
            .collect()
    }

    /// One refinement run at weight `√w2`.
    pub fn run(&self, index: usize, w2: f64) -> Result<WeightRun, Error> {
        let z = self.snapshots(index)?;
        let total: usize = z.iter().map(Vec::len).sum();
        let eps = epsilon_for(self.localizer.gamma, self.noise_variance, total)?;
        let r = refine_from(
            &z,
            &self.stations,
            &self.geometries,
            &self.localizer,
            w2.sqrt(),
            eps,
            &ToaEstimates::unbounded(self.stations.len()),
            self.locations.clone(),
            self.angles.clone(),
        )?;
        let estimate = if r.trace.empty_support {
            None
        } else {
            r.solution.strongest_row().map(|q| r.locations[q])
        };
        Ok(WeightRun {
            estimate,
            error_m: estimate.map(|p| p.distance(&SOURCE)),
            trace: r.trace,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRun {
    /// `None` when the support came out empty.
    pub estimate: Option<Position>,
    pub error_m: Option<f64>,
    pub trace: RefinementTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub w2: f64,
    pub prob_submeter: f64,
    pub n_trials: usize,
    pub runs: Vec<WeightRun>,
}

/// Runs `trials` scenes per squared weight.
pub fn validate_weight(
    cfg: &ScenarioConfig,
    snr_db: f64,
    trials: usize,
    weights: &[f64],
) -> Result<Vec<WeightRow>, Error> {
    let scene = WeightScene::new(cfg, snr_db)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))?;
    weights
        .iter()
        .map(|&w2| {
            if !(w2 > 0.0 && w2.is_finite()) {
                return Err(Error::InvalidValues(w2.to_string()));
            }
            let runs: Vec<WeightRun> =
                pool.install(|| (0..trials).into_par_iter().map(|i| scene.run(i, w2)).collect::<Result<_, _>>())?;
            let errors: Vec<f64> = runs.iter().map(|r| r.error_m.unwrap_or(f64::INFINITY)).collect();
            Ok(WeightRow {
                w2,
                prob_submeter: prob_submeter(&errors),
                n_trials: trials,
                runs,
            })
        })
        .collect()
}

/// `w2,prob_submeter,n_trials`.
pub fn write_weight_csv<W: std::io::Write>(rows: &[WeightRow], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["w2", "prob_submeter", "n_trials"])?;
    for r in rows {
        w.write_record([r.w2.to_string(), r.prob_submeter.to_string(), r.n_trials.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
