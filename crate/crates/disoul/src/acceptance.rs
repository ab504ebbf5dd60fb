//! The ten end-to-end acceptance checks, each with its pinned tolerance.
//!
//! Criterion 5 has no runs of its own: it inspects every refinement
//! sequence produced by the other checks (and by the exact-recovery scenes
//! when it is selected alone).

use std::fmt;
use std::time::Instant;

use disoul_core::arrays::{circular_random_array, wavelength_for, ArrayGeometry};
use disoul_core::geometry::{angle_distance, aoa_of, make_angle_grid, make_location_grid, Position, ToaEstimates, POSITION_TOLERANCE};
use disoul_core::localizer::{front_end, locate, FallbackReason, LocalizerConfig, Method, RefinementTrace};
use disoul_core::rng::{complex_normal, derive_seed, rng_from_seed, uniform};
use disoul_core::sparse::{epsilon_for, extract_support, solve, SolverOptions, SparseProblem, SparseSolution};
use disoul_core::timing::{threshold_for_pfa, time_station, FalseAlarmModel, NcTrace};
use disoul_core::waveform::{gaussian_pulse, matched_filter, synthesize_received};
use disoul_core::C64;
use rayon::prelude::*;

use crate::config::{MethodId, ScenarioConfig};
use crate::harness::{run_sweep, run_trial, run_trials, simulate, write_sweep_csv, Scenario, SweepParam};
use crate::reference::solve_reference;
use crate::weight::validate_weight;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 10] = [
    "weight band",
    "noise allowance coverage",
    "threshold false alarm",
    "positive TOA bias",
    "refinement monotonicity",
    "noiseless exact recovery",
    "solver oracle equivalence",
    "comparative ordering",
    "low-SNR fallback",
    "determinism",
];

#[derive(Debug, Clone)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Criteria to run; empty means all.
    pub only: Vec<u8>,
    pub workers: usize,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            only: Vec::new(),
            workers: 0,
        }
    }
}

fn scenario(opts: &AcceptanceOptions) -> ScenarioConfig {
    ScenarioConfig {
        seed: opts.seed,
        workers: opts.workers,
        ..ScenarioConfig::default()
    }
}

struct Outcome {
    passed: bool,
    detail: String,
    traces: Vec<RefinementTrace>,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self {
            passed,
            detail,
            traces: Vec::new(),
        }
    }
}

type Check<'a> = &'a dyn Fn() -> Result<Outcome, Error>;

/// Runs the selected criteria in order, handing each report to `sink` as
/// soon as it is available.
pub fn run_acceptance(opts: &AcceptanceOptions, mut sink: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    let selected = |id: u8| opts.only.is_empty() || opts.only.contains(&id);
    let mut reports = Vec::new();
    let mut traces: Vec<RefinementTrace> = Vec::new();
    let mut run = |id: u8, traces: &mut Vec<RefinementTrace>, f: &dyn Fn() -> Result<Outcome, Error>| {
        let start = Instant::now();
        let (passed, detail) = match f() {
            Ok(o) => {
                traces.extend(o.traces);
                (o.passed, o.detail)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        let report = CriterionReport {
            id,
            title: TITLES[id as usize - 1],
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        sink(&report);
        reports.push(report);
    };
    let checks: [(u8, Check); 9] = [
        (1, &|| weight_band(opts)),
        (2, &|| noise_allowance(opts)),
        (3, &|| false_alarm(opts)),
        (4, &|| toa_bias(opts)),
        (6, &|| exact_recovery(opts)),
        (7, &|| oracle_equivalence(opts)),
        (8, &|| ordering(opts)),
        (9, &|| low_snr(opts)),
        (10, &|| determinism(opts)),
    ];
    for (id, f) in checks {
        if selected(id) {
            run(id, &mut traces, f);
        }
    }
    if selected(5) {
        let own = traces.is_empty();
        let collected = std::mem::take(&mut traces);
        run(5, &mut traces, &|| {
            let mut all = collected.clone();
            if own {
                all.extend(exact_recovery(opts)?.traces);
            }
            Ok(monotonicity(&all))
        });
    }
    reports.sort_by_key(|r| r.id);
    reports
}

/// Criterion 1: weight band on the two-point scene at 20 dB, 100 runs.
fn weight_band(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    let start = Instant::now();
    let rows = validate_weight(&scenario(opts), 20.0, 100, &[0.5, 3.5])?;
    let (low, high) = (rows[0].prob_submeter, rows[1].prob_submeter);
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let passed = high >= 0.9 && high - low >= 0.25 && minutes <= 30.0;
    let traces = rows.iter().flat_map(|r| r.runs.iter().map(|x| x.trace.clone())).collect();
    Ok(Outcome {
        passed,
        detail: format!(
            "P(<1 m) = {high:.2} at w²=3.5 (need ≥ 0.90), {low:.2} at w²=0.5 (gap {:.2}, need ≥ 0.25), {minutes:.1} min (limit 30)",
            high - low
        ),
        traces,
    })
}

/// Criterion 2: fraction of noise draws inside the allowance, L=4, S=100.
fn noise_allowance(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const DRAWS: usize = 10_000;
    let (stations, antennas, sigma2) = (4, 100, 1.0);
    let eps = epsilon_for(0.99, sigma2, stations * antennas)?;
    let mut rng = rng_from_seed(derive_seed(opts.seed, 2));
    let inside = (0..DRAWS)
        .filter(|_| {
            let e: f64 = (0..stations * antennas).map(|_| complex_normal(&mut rng, sigma2).norm_sqr()).sum();
            e <= eps
        })
        .count();
    let frac = inside as f64 / DRAWS as f64;
    Ok(Outcome::new(
        (0.985..=0.995).contains(&frac),
        format!("{frac:.4} of {DRAWS} draws within allowance (need [0.985, 0.995])"),
    ))
}

/// Antenna count for the false-alarm check. With one antenna the model's
/// per-look exceedance `exp(−η/σ²)` is the exact noise tail, so the check
/// isolates the independent-look approximation itself.
pub const FALSE_ALARM_ANTENNAS: usize = 1;

/// Criterion 3: empirical early-alarm rate on noise-only records with
/// `T_obs/T_corr = 1000`.
fn false_alarm(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const RECORDS: usize = 10_000;
    let cfg = scenario(opts);
    let pulse = gaussian_pulse(cfg.bandwidth_hz, cfg.oversampling, cfg.pulse_truncation)?;
    let lambda = wavelength_for(cfg.carrier_hz);
    let geom = circular_random_array(FALSE_ALARM_ANTENNAS, lambda, lambda, opts.seed)?;
    let t_obs = 1000.0 / cfg.bandwidth_hz;
    let sigma2 = 1.0;
    let targets = [1e-2, 1e-3];
    let traces: Vec<NcTrace> = (0..RECORDS)
        .into_par_iter()
        .map(|i| {
            let w = synthesize_received(&geom, &[], &pulse, sigma2, t_obs, derive_seed(opts.seed, 3_000_000 + i as u64), None)?;
            Ok(NcTrace::from_mf(&matched_filter(&w, &pulse)))
        })
        .collect::<Result<_, Error>>()?;
    let looks = traces[0].len() as f64 * traces[0].dt * cfg.bandwidth_hz;
    let mut passed = true;
    let mut parts = Vec::new();
    for pfa in targets {
        let eta = threshold_for_pfa(
            pfa,
            FALSE_ALARM_ANTENNAS,
            sigma2,
            traces[0].len() as f64 * traces[0].dt,
            cfg.bandwidth_hz,
            FalseAlarmModel::IndependentLooks,
        )?;
        let alarms = traces.iter().filter(|t| time_station(t, eta).is_ok()).count();
        let rate = alarms as f64 / RECORDS as f64;
        let ok = rate >= pfa / 3.0 && rate <= pfa * 3.0;
        passed &= ok;
        parts.push(format!("target {pfa:e}: rate {rate:.2e} ({:.2}x)", rate / pfa));
    }
    Ok(Outcome::new(
        passed,
        format!(
            "{} over {RECORDS} records, {looks:.0} looks, {FALSE_ALARM_ANTENNAS} antenna (need within 3x)",
            parts.join(", ")
        ),
    ))
}

/// Criterion 4: share of TOA estimates at or after the direct-path delay.
fn toa_bias(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const TRIALS: usize = 500;
    let sc = Scenario::new(scenario(opts))?;
    let per_trial: Vec<(usize, usize, usize)> = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))?
        .install(|| {
            (0..TRIALS)
                .into_par_iter()
                .map(|i| {
                    let data = simulate(&sc, i)?;
                    let (mut late, mut detected, mut missed) = (0, 0, 0);
                    for (l, w) in data.waveforms.iter().enumerate() {
                        let fe = front_end(w, &sc.pulse, sc.noise_variance, &sc.localizer)?;
                        let truth = data.source.distance(&sc.cfg.stations[l]) / disoul_core::SPEED_OF_LIGHT;
                        match fe.timing {
                            Some(t) => {
                                detected += 1;
                                if t.toa >= truth {
                                    late += 1;
                                }
                            }
                            None => missed += 1,
                        }
                    }
                    Ok((late, detected, missed))
                })
                .collect::<Result<_, Error>>()
        })?;
    let late: usize = per_trial.iter().map(|t| t.0).sum();
    let detected: usize = per_trial.iter().map(|t| t.1).sum();
    let missed: usize = per_trial.iter().map(|t| t.2).sum();
    let frac = if detected == 0 { 0.0 } else { late as f64 / detected as f64 };
    Ok(Outcome::new(
        frac >= 0.95,
        format!("{late}/{detected} estimates ≥ true delay = {frac:.3} (need ≥ 0.95); {missed} station records undetected"),
    ))
}

fn corners() -> Vec<Position> {
    ScenarioConfig::default().stations
}

pub struct Scene {
    pub truth: Position,
    pub geometries: Vec<ArrayGeometry>,
    pub snapshots: Vec<Vec<C64>>,
}

/// Pure direct-path snapshots with the source on the initial lattice; when
/// `blocked` is set that station hears one reflection, from a bearing on
/// the initial angle lattice, instead.
pub fn lattice_scene(opts: &AcceptanceOptions, index: usize, blocked: Option<usize>) -> Result<Scene, Error> {
    let cfg = scenario(opts);
    let stations = corners();
    let seed = derive_seed(opts.seed, 6_000 + index as u64);
    let lambda = wavelength_for(cfg.carrier_hz);
    let geometries = (0..stations.len())
        .map(|l| circular_random_array(cfg.antennas, cfg.array_radius_wavelengths * lambda, lambda, derive_seed(seed, l as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let lattice: Vec<Position> = make_location_grid(&cfg.region(), cfg.location_resolution_m)?
        .into_points()
        .into_iter()
        .filter(|p| stations.iter().all(|c| p.distance(c) > cfg.location_resolution_m))
        .collect();
    let resolution = cfg.localizer().angle_resolution;
    let bearings = make_angle_grid(resolution)?.angles().to_vec();
    let mut rng = rng_from_seed(seed);
    let pick = |rng: &mut _, n: usize| (uniform(rng, 0.0, n as f64) as usize).min(n - 1);
    let truth = lattice[pick(&mut rng, lattice.len())];
    let snapshots = stations
        .iter()
        .zip(&geometries)
        .enumerate()
        .map(|(l, (c, g))| {
            let gain = complex_normal(&mut rng, 1.0);
            let direct = aoa_of(&truth, c)?;
            // The reflection also sits on the angle lattice, clear of the
            // direct bearing.
            let away: Vec<f64> = bearings
                .iter()
                .copied()
                .filter(|&a| angle_distance(a, direct) > 2.0 * resolution)
                .collect();
            let reflection = away[pick(&mut rng, away.len())];
            let theta = if blocked == Some(l) { reflection } else { direct };
            Ok(g.steering_vector(theta).into_iter().map(|a| a * gain).collect())
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Scene {
        truth,
        geometries,
        snapshots,
    })
}

/// Nominal noise level that sets the allowance for noiseless scenes, about
/// 1e-6 of the snapshot energy.
pub const NOISELESS_VARIANCE: f64 = 1e-6;

pub fn localize_scene(opts: &AcceptanceOptions, scene: &Scene, noise_variance: f64) -> Result<disoul_core::localizer::LocalizationOutcome, Error> {
    let cfg: LocalizerConfig = scenario(opts).localizer();
    Ok(locate(
        &scene.snapshots,
        &corners(),
        &scene.geometries,
        noise_variance,
        &cfg,
        &ToaEstimates::unbounded(4),
    )?)
}

/// Criterion 6: exact recovery on 50 noiseless on-grid scenes, then again
/// with one station's direct path replaced by a reflection.
fn exact_recovery(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const SCENES: usize = 50;
    let results: Vec<(bool, bool, Vec<RefinementTrace>)> = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))?
        .install(|| {
            (0..SCENES)
                .into_par_iter()
                .map(|i| {
                    let clear = lattice_scene(opts, i, None)?;
                    let a = localize_scene(opts, &clear, NOISELESS_VARIANCE)?;
                    let exact = a.method == Method::Solver
                        && a.los_count == 4
                        && a.position.distance(&clear.truth) <= POSITION_TOLERANCE;
                    let blocked = lattice_scene(opts, i, Some(i % 4))?;
                    let b = localize_scene(opts, &blocked, NOISELESS_VARIANCE)?;
                    let reduced = b.method == Method::Solver
                        && b.los_count == 3
                        && b.position.distance(&blocked.truth) <= POSITION_TOLERANCE;
                    let mut traces = a.passes;
                    traces.extend(b.passes);
                    Ok((exact, reduced, traces))
                })
                .collect::<Result<_, Error>>()
        })?;
    let exact = results.iter().filter(|r| r.0).count();
    let reduced = results.iter().filter(|r| r.1).count();
    let passed = exact == SCENES && reduced as f64 >= 0.9 * SCENES as f64;
    Ok(Outcome {
        passed,
        detail: format!(
            "clear scenes exact {exact}/{SCENES} (need all); one blocked station: reduced count and exact {reduced}/{SCENES} (need ≥ 90%)"
        ),
        traces: results.into_iter().flat_map(|r| r.2).collect(),
    })
}

/// A random small instance: up to 20 locations and 30 angles per station.
pub fn small_instance(seed: u64) -> Result<SparseProblem, Error> {
    let mut rng = rng_from_seed(seed);
    let stations = corners();
    let lambda = wavelength_for(7e9);
    let geometries = (0..4)
        .map(|l| circular_random_array(16, 2.0 * lambda, lambda, derive_seed(seed, 10 + l)))
        .collect::<Result<Vec<_>, _>>()?;
    let q = 10 + (uniform(&mut rng, 0.0, 11.0) as usize).min(10);
    let locations: Vec<Position> = (0..q)
        .map(|_| Position::new(uniform(&mut rng, -40.0, 40.0), uniform(&mut rng, -40.0, 40.0)))
        .collect();
    let angles: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let m = 15 + (uniform(&mut rng, 0.0, 16.0) as usize).min(15);
            (0..m).map(|_| uniform(&mut rng, 0.0, std::f64::consts::TAU)).collect()
        })
        .collect();
    let source = locations[0];
    let sigma2 = 0.01;
    let snapshots = stations
        .iter()
        .zip(&geometries)
        .zip(&angles)
        .map(|((c, g), a)| {
            let gain = complex_normal(&mut rng, 1.0);
            let nlos = complex_normal(&mut rng, 0.5);
            let theta = aoa_of(&source, c)?;
            Ok(g.steering_vector(theta)
                .into_iter()
                .zip(g.steering_vector(a[0]))
                .map(|(d, r)| d * gain + r * nlos + complex_normal(&mut rng, sigma2))
                .collect())
        })
        .collect::<Result<Vec<Vec<C64>>, Error>>()?;
    let eps = epsilon_for(0.99, sigma2, 64)?;
    Ok(SparseProblem::from_geometry(snapshots, &stations, &geometries, &locations, &angles, 3.5f64.sqrt(), eps)?)
}

/// Criterion 7: built-in solver against the conic reference on 20 small
/// instances.
fn oracle_equivalence(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const INSTANCES: usize = 20;
    let mut worst: f64 = 0.0;
    let mut mismatched = Vec::new();
    for i in 0..INSTANCES {
        let p = small_instance(derive_seed(opts.seed, 7_000 + i as u64))?;
        let ours = solve(&p, &SolverOptions::default(), None)?;
        let reference = solve_reference(&p)?;
        let rel = (ours.objective - reference.objective).abs() / reference.objective.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        let as_solution = SparseSolution {
            x: reference.x.clone(),
            y: reference.y.clone(),
            num_stations: p.num_stations(),
            objective: reference.objective,
            residual: p.residual_energy(&reference.x, &reference.y),
            lower_bound: reference.objective,
            lambda: 0.0,
            epochs: 0,
            subproblems: 0,
        };
        let (a, b) = (extract_support(&ours, 1e-3), extract_support(&as_solution, 1e-3));
        if a != b || rel > 1e-4 {
            mismatched.push(i);
        }
    }
    Ok(Outcome::new(
        mismatched.is_empty(),
        format!(
            "worst relative objective gap {worst:.1e} (need ≤ 1e-4); support or objective mismatch on {} of {INSTANCES} instances {:?}",
            mismatched.len(),
            mismatched
        ),
    ))
}

/// Two-proportion separation at 95%: `p1 − p2 > 1.96·√(p1q1/n + p2q2/n)`.
pub fn separated(p1: f64, p2: f64, n: usize) -> bool {
    let n = n as f64;
    p1 - p2 > 1.96 * (p1 * (1.0 - p1) / n + p2 * (1.0 - p2) / n).sqrt()
}

/// Criterion 8: direct localization against the two-step baselines on the
/// default scenario, 200 trials.
fn ordering(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const TRIALS: usize = 200;
    let cfg = ScenarioConfig {
        methods: vec![MethodId::Disoul, MethodId::Srls, MethodId::Stansfield],
        ..scenario(opts)
    };
    let sc = Scenario::new(cfg)?;
    let trials = run_trials(&sc, TRIALS)?;
    let prob = |m: MethodId| {
        trials
            .iter()
            .filter(|t| t.method(m).and_then(|r| r.error_m).is_some_and(|e| e < 1.0))
            .count() as f64
            / TRIALS as f64
    };
    let (d, s, st) = (prob(MethodId::Disoul), prob(MethodId::Srls), prob(MethodId::Stansfield));
    let traces = trials
        .iter()
        .filter_map(|t| t.method(MethodId::Disoul)?.details.as_ref())
        .flat_map(|d| d.passes.clone())
        .collect();
    Ok(Outcome {
        passed: separated(d, s, TRIALS) && separated(d, st, TRIALS),
        detail: format!("P(<1 m): disoul {d:.3}, srls {s:.3}, stansfield {st:.3} over {TRIALS} trials (need 95% separation)"),
        traces,
    })
}

/// Criterion 9: E/N0 = −5 dB, 50 trials.
fn low_snr(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    const TRIALS: usize = 50;
    let cfg = ScenarioConfig {
        e_n0_db: -5.0,
        methods: vec![MethodId::Disoul],
        ..scenario(opts)
    };
    let sc = Scenario::new(cfg)?;
    let trials = run_trials(&sc, TRIALS)?;
    let (mut positions, mut low, mut low_handled, mut failures) = (0, 0, 0, Vec::new());
    let mut traces = Vec::new();
    for t in &trials {
        let r = t.method(MethodId::Disoul).expect("configured method");
        if r.estimate.is_some() {
            positions += 1;
        } else if let Some(why) = &r.failure {
            failures.push(why.clone());
        }
        if let Some(d) = &r.details {
            traces.extend(d.passes.clone());
            if d.low_energy {
                low += 1;
                if d.method == Method::Fallback && d.fallback == Some(FallbackReason::LowEnergy) {
                    low_handled += 1;
                }
            }
        }
    }
    failures.sort();
    failures.dedup();
    Ok(Outcome {
        passed: positions == TRIALS && low_handled == low,
        detail: format!(
            "{TRIALS} trials ran without crashing; positions emitted {positions}/{TRIALS} (need all); low-energy branch {low} times, fallback taken {low_handled}; failure kinds {failures:?}"
        ),
        traces,
    })
}

/// Criterion 10: a trial and a small sweep rerun byte-for-byte, with
/// different worker counts.
fn determinism(opts: &AcceptanceOptions) -> Result<Outcome, Error> {
    let base = ScenarioConfig {
        antennas: 30,
        trials: 3,
        methods: MethodId::ALL.to_vec(),
        ..scenario(opts)
    };
    let csv = |workers: usize| -> Result<Vec<u8>, Error> {
        let cfg = ScenarioConfig { workers, ..base.clone() };
        let table = run_sweep(&cfg, SweepParam::ENoDb, &[10.0, 20.0])?;
        let mut out = Vec::new();
        write_sweep_csv(&table, &mut out)?;
        Ok(out)
    };
    let (a, b) = (csv(1)?, csv(3)?);
    let (t1, t2) = (run_trial(&base, 7)?, run_trial(&base, 7)?);
    let same_trial = t1.to_string() == t2.to_string() && t1 == t2;
    Ok(Outcome::new(
        a == b && same_trial,
        format!(
            "sweep CSV {} ({} bytes), single trial {}",
            if a == b { "identical" } else { "differs" },
            a.len(),
            if same_trial { "identical" } else { "differs" }
        ),
    ))
}

/// Criterion 5 over the collected sequences.
fn monotonicity(traces: &[RefinementTrace]) -> Outcome {
    let increasing = traces
        .iter()
        .filter(|t| t.objectives.windows(2).any(|w| w[1] > w[0]))
        .count();
    // Only runs that went on refining (non-empty support) can meet the stop
    // rule; empty-support passes end at once by design.
    let refining: Vec<&RefinementTrace> = traces.iter().filter(|t| !t.empty_support).collect();
    let converged = refining.iter().filter(|t| t.converged).count();
    let share = if refining.is_empty() { 0.0 } else { converged as f64 / refining.len() as f64 };
    Outcome::new(
        !traces.is_empty() && increasing == 0 && share >= 0.95,
        format!(
            "{} sequences, {increasing} with an increase (need 0); stop rule met in {converged}/{} refining runs = {share:.3} (need ≥ 0.95)",
            traces.len(),
            refining.len()
        ),
    )
}
