//! Pulse generation, baseband synthesis of the array signals, matched
//! filtering and snapshot extraction.
//!
//! Time is sampled on a uniform lattice `t_k = k·dt` starting at zero. The
//! pulse is causal: it occupies `[0, support)` and peaks at `center`, so a
//! path with delay `τ` contributes `α·a(θ)·s(t − τ)` and the matched-filter
//! output indexed by delay peaks at `τ`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::arrays::{apply_calibration_error, ArrayGeometry, CalibrationError};
use crate::channel::PathComponent;
use crate::rng::{complex_normal, rng_from_seed};
use crate::{Error, Result, C64};

/// Unit-energy real Gaussian pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    samples: Vec<C64>,
    dt: f64,
    bandwidth: f64,
    sigma_t: f64,
    amplitude: f64,
    center: f64,
    half_width: f64,
}

impl Pulse {
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// Sample interval, s.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Half-power bandwidth, Hz.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Standard deviation of the Gaussian amplitude envelope, s.
    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    /// Time of the pulse peak relative to its start.
    pub fn center(&self) -> f64 {
        self.center
    }

    /// Duration spanned by the sample vector.
    pub fn support(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// `Σ |s_k|² dt`; one by construction.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.dt
    }

    /// Continuous-time pulse value (same normalization as the samples).
    pub fn value_at(&self, t: f64) -> f64 {
        let u = t - self.center;
        if u.abs() > self.half_width {
            0.0
        } else {
            self.amplitude * (-u * u / (2.0 * self.sigma_t * self.sigma_t)).exp()
        }
    }
}

/// Gaussian pulse with power spectrum 3 dB down at `±B/2`, sampled at
/// `oversampling·B` and truncated at `±truncation·σ_t`.
pub fn gaussian_pulse(bandwidth: f64, oversampling: f64, truncation: f64) -> Result<Pulse> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidParameter {
            name: "bandwidth",
            reason: "must be positive",
        });
    }
    if !(oversampling >= 2.0) {
        return Err(Error::InvalidParameter {
            name: "oversampling",
            reason: "must be at least 2",
        });
    }
    if !(truncation > 0.0) {
        return Err(Error::InvalidParameter {
            name: "truncation",
            reason: "must be positive",
        });
    }
    // |S(f)|² ∝ exp(−4π²σ_t² f²) equals one half at f = B/2.
    let sigma_t = core::f64::consts::LN_2.sqrt() / (PI * bandwidth);
    let dt = 1.0 / (oversampling * bandwidth);
    let half_width = truncation * sigma_t;
    let half = (half_width / dt).ceil() as usize;
    let center = half as f64 * dt;
    let envelope: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let u = k as f64 * dt - center;
            if u.abs() > half_width {
                0.0
            } else {
                (-u * u / (2.0 * sigma_t * sigma_t)).exp()
            }
        })
        .collect();
    let energy: f64 = envelope.iter().map(|v| v * v).sum::<f64>() * dt;
    let amplitude = 1.0 / energy.sqrt();
    Ok(Pulse {
        samples: envelope.iter().map(|v| C64::new(v * amplitude, 0.0)).collect(),
        dt,
        bandwidth,
        sigma_t,
        amplitude,
        center,
        half_width,
    })
}

/// Sampled autocorrelation `r_s(k·dt) = Σ_n s*(n − k) s(n) dt` for lags
/// `−(N−1)..=N−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    values: Vec<C64>,
    max_lag: usize,
    dt: f64,
}

impl Autocorrelation {
    pub fn at_lag(&self, lag: i64) -> C64 {
        if lag.unsigned_abs() as usize > self.max_lag {
            C64::new(0.0, 0.0)
        } else {
            self.values[(lag + self.max_lag as i64) as usize]
        }
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

pub fn autocorrelation(p: &Pulse) -> Autocorrelation {
    let s = &p.samples;
    let n = s.len();
    let max_lag = n - 1;
    let values = (-(max_lag as i64)..=max_lag as i64)
        .map(|lag| {
            let mut acc = C64::new(0.0, 0.0);
            for (i, si) in s.iter().enumerate() {
                let j = i as i64 - lag;
                if j >= 0 && (j as usize) < n {
                    acc += s[j as usize].conj() * si;
                }
            }
            acc * p.dt
        })
        .collect();
    Autocorrelation {
        values,
        max_lag,
        dt: p.dt,
    }
}

/// Per-antenna complex baseband samples on `[0, T_obs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedWaveform {
    pub antennas: Vec<Vec<C64>>,
    pub dt: f64,
    /// Noise spectral density σ² per antenna.
    pub noise_psd: f64,
}

impl ReceivedWaveform {
    pub fn num_samples(&self) -> usize {
        self.antennas.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> f64 {
        self.num_samples() as f64 * self.dt
    }
}

/// Default observation window: latest arrival plus 8σ_t of pulse plus a
/// guard of ten inverse bandwidths.
pub fn default_observation_window(max_toa: f64, pulse: &Pulse) -> f64 {
    max_toa + pulse.support().max(8.0 * pulse.sigma_t) + 10.0 / pulse.bandwidth
}

/// Sum of `α·a(θ)·s(t − τ)` over `paths` plus white circular Gaussian noise
/// of spectral density `noise_psd` (per-sample variance `σ²/dt`).
pub fn synthesize_received(
    geom: &ArrayGeometry,
    paths: &[PathComponent],
    pulse: &Pulse,
    noise_psd: f64,
    t_obs: f64,
    seed: u64,
    calibration: Option<&CalibrationError>,
) -> Result<ReceivedWaveform> {
    if !(noise_psd >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "noise_psd",
            reason: "must be non-negative",
        });
    }
    let latest = paths.iter().map(|p| p.toa).fold(0.0, f64::max);
    let required = latest + pulse.support();
    if required >= t_obs {
        return Err(Error::ObservationTooShort {
            required,
            available: t_obs,
        });
    }
    let dt = pulse.dt;
    let n = (t_obs / dt).ceil() as usize;
    let sensors = geom.len();
    let mut antennas = alloc::vec![alloc::vec![C64::new(0.0, 0.0); n]; sensors];
    let mut response = alloc::vec![C64::new(0.0, 0.0); sensors];
    let mut shape = Vec::new();
    for path in paths {
        geom.steering_into(path.aoa, &mut response);
        if let Some(cal) = calibration {
            response = apply_calibration_error(&response, cal)?;
        }
        let first = (path.toa / dt).ceil() as usize;
        let last = (((path.toa + pulse.support()) / dt).floor() as usize).min(n - 1);
        shape.clear();
        shape.extend((first..=last).map(|k| pulse.value_at(k as f64 * dt - path.toa)));
        for (samples, a) in antennas.iter_mut().zip(&response) {
            let coef = path.gain * a;
            for (k, v) in (first..=last).zip(&shape) {
                samples[k] += coef * v;
            }
        }
    }
    if noise_psd > 0.0 {
        let mut rng = rng_from_seed(seed);
        let variance = noise_psd / dt;
        for samples in antennas.iter_mut() {
            for s in samples.iter_mut() {
                *s += complex_normal(&mut rng, variance);
            }
        }
    }
    Ok(ReceivedWaveform {
        antennas,
        dt,
        noise_psd,
    })
}

/// Matched-filter output per antenna on the delay lattice `d_j = j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfTrace {
    pub antennas: Vec<Vec<C64>>,
    pub dt: f64,
    pub noise_variance: f64,
}

impl MfTrace {
    pub fn len(&self) -> usize {
        self.antennas.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `MF_j = Σ_i s*(i·dt) z_{j+i} dt`, i.e. `∫ s*(t − d_j) z(t) dt` on the lattice.
pub fn matched_filter(w: &ReceivedWaveform, pulse: &Pulse) -> MfTrace {
    let taps: Vec<C64> = pulse.samples.iter().map(|s| s.conj() * w.dt).collect();
    let antennas = w
        .antennas
        .iter()
        .map(|z| {
            let n = z.len();
            (0..n)
                .map(|j| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (tap, zk) in taps.iter().zip(&z[j..]) {
                        acc += tap * zk;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    MfTrace {
        antennas,
        dt: w.dt,
        noise_variance: w.noise_psd,
    }
}

/// Matched-filter output across the array at one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub values: Vec<C64>,
    /// Lattice instant actually sampled, s.
    pub time: f64,
    /// Noise variance per complex entry.
    pub noise_variance: f64,
}

impl Snapshot {
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Samples the trace at the lattice delay nearest to `t`.
pub fn snapshot_at(mf: &MfTrace, t: f64) -> Result<Snapshot> {
    let idx = (t / mf.dt).round();
    if !(idx >= 0.0) || idx as usize >= mf.len() {
        return Err(Error::TimeOutOfRange(t));
    }
    let j = idx as usize;
    Ok(Snapshot {
        values: mf.antennas.iter().map(|a| a[j]).collect(),
        time: j as f64 * mf.dt,
        noise_variance: mf.noise_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PathKind;
    use crate::geometry::Position;
    use alloc::vec;

    fn pulse() -> Pulse {
        gaussian_pulse(30e6, 3.0, 4.0).unwrap()
    }

    #[test]
    fn pulse_has_unit_energy() {
        for b in [10e6, 30e6, 100e6] {
            let p = gaussian_pulse(b, 3.0, 4.0).unwrap();
            assert!((p.energy() - 1.0).abs() < 1e-9);
        }
        assert!(gaussian_pulse(30e6, 1.5, 4.0).is_err());
        assert!(gaussian_pulse(0.0, 3.0, 4.0).is_err());
    }

    #[test]
    fn pulse_spectrum_half_power_at_half_bandwidth() {
        // Discrete-time Fourier transform of the samples.
        let p = pulse();
        let dtft = |f: f64| -> f64 {
            let mut acc = C64::new(0.0, 0.0);
            for (k, s) in p.samples().iter().enumerate() {
                acc += s * C64::from_polar(1.0, -2.0 * PI * f * k as f64 * p.dt());
            }
            acc.norm_sqr()
        };
        let ratio = dtft(15e6) / dtft(0.0);
        assert!((ratio - 0.5).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn doubling_bandwidth_halves_duration() {
        let width = |b: f64| {
            let p = gaussian_pulse(b, 3.0, 4.0).unwrap();
            let peak = p.value_at(p.center());
            let step = p.sigma_t() / 1000.0;
            let mut t = 0.0;
            let mut count = 0usize;
            while t < p.support() {
                if p.value_at(t).powi(2) >= 0.5 * peak * peak {
                    count += 1;
                }
                t += step;
            }
            count as f64 * step
        };
        let ratio = width(30e6) / width(60e6);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn autocorrelation_properties() {
        let p = pulse();
        let r = autocorrelation(&p);
        assert!((r.at_lag(0).re - 1.0).abs() < 1e-9);
        for lag in -(r.max_lag() as i64)..=r.max_lag() as i64 {
            assert!(r.at_lag(lag).norm() <= r.at_lag(0).norm() + 1e-12);
            assert!((r.at_lag(-lag) - r.at_lag(lag).conj()).norm() < 1e-12);
        }
    }

    fn los(gain: C64, aoa: f64, toa: f64) -> PathComponent {
        PathComponent {
            gain,
            aoa,
            toa,
            kind: PathKind::Los,
        }
    }

    #[test]
    fn zero_paths_no_noise_is_silent() {
        let g = ArrayGeometry::new(vec![Position::ORIGIN, Position::new(0.01, 0.0)], 0.04).unwrap();
        let w = synthesize_received(&g, &[], &pulse(), 0.0, 1e-6, 1, None).unwrap();
        assert!(w.antennas.iter().flatten().all(|v| *v == C64::new(0.0, 0.0)));
        let mf = matched_filter(&w, &pulse());
        assert!(mf.antennas.iter().flatten().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn observation_window_checked() {
        let g = ArrayGeometry::new(vec![Position::ORIGIN], 0.04).unwrap();
        let p = pulse();
        let err = synthesize_received(&g, &[los(C64::new(1.0, 0.0), 0.0, 1e-6)], &p, 0.0, 1e-6, 1, None);
        assert!(matches!(err, Err(Error::ObservationTooShort { .. })));
    }

    #[test]
    fn single_path_single_antenna_is_scaled_delayed_pulse() {
        let g = ArrayGeometry::new(vec![Position::ORIGIN], 0.04).unwrap();
        let p = pulse();
        let alpha = C64::new(0.3, -1.2);
        let tau = 123.4e-9;
        let w = synthesize_received(&g, &[los(alpha, 0.4, tau)], &p, 0.0, 1e-6, 1, None).unwrap();
        // Direct evaluation oracle: each sample is α·s(t_k − τ).
        for (k, v) in w.antennas[0].iter().enumerate() {
            let expect = alpha * p.value_at(k as f64 * w.dt - tau);
            assert!((v - expect).norm() < 1e-12);
        }
        let peak = w.antennas[0].iter().map(|v| v.norm()).fold(0.0, f64::max);
        let max_s = p.value_at(p.center());
        // Lattice offset from the continuous peak is at most dt/2.
        let worst = p.value_at(p.center() + p.dt() / 2.0);
        assert!(peak <= alpha.norm() * max_s + 1e-12 && peak >= alpha.norm() * worst - 1e-12);
    }

    #[test]
    fn matched_filter_peaks_at_delay_with_array_response() {
        let lambda = 0.0428;
        let g = crate::arrays::circular_random_array(8, 5.0 * lambda, lambda, 3).unwrap();
        let p = pulse();
        let alpha = C64::new(0.8, 0.6);
        let tau = 40.0 * p.dt();
        let theta = 1.1;
        let w = synthesize_received(&g, &[los(alpha, theta, tau)], &p, 0.0, 2e-6, 1, None).unwrap();
        let mf = matched_filter(&w, &p);
        let snap = snapshot_at(&mf, tau).unwrap();
        let a = g.steering_vector(theta);
        for (z, ai) in snap.values.iter().zip(&a) {
            assert!((z - alpha * ai).norm() < 1e-9);
        }
        // Off-lattice delay: r_s of the offset scales the response.
        let tau2 = 40.3 * p.dt();
        let w = synthesize_received(&g, &[los(alpha, theta, tau2)], &p, 0.0, 2e-6, 1, None).unwrap();
        let mf = matched_filter(&w, &p);
        let snap = snapshot_at(&mf, tau2).unwrap();
        assert_eq!(snap.time, 40.0 * p.dt());
        // Continuous autocorrelation of the Gaussian: exp(−u²/(4σ²)).
        let u = snap.time - tau2;
        let rs = (-u * u / (4.0 * p.sigma_t() * p.sigma_t())).exp();
        for (z, ai) in snap.values.iter().zip(&a) {
            assert!((z - alpha * ai * rs).norm() < 0.01);
        }
        assert!(snapshot_at(&mf, -1e-6).is_err());
        assert!(snapshot_at(&mf, 1.0).is_err());
    }

    #[test]
    fn matched_filter_is_linear() {
        let g = ArrayGeometry::new(vec![Position::ORIGIN, Position::new(0.02, 0.01)], 0.04).unwrap();
        let p = pulse();
        let w1 = synthesize_received(&g, &[los(C64::new(1.0, 0.0), 0.2, 50e-9)], &p, 0.01, 1e-6, 7, None).unwrap();
        let w2 = synthesize_received(&g, &[los(C64::new(0.0, 2.0), 2.2, 90e-9)], &p, 0.01, 1e-6, 8, None).unwrap();
        let mut sum = w1.clone();
        for (a, b) in sum.antennas.iter_mut().zip(&w2.antennas) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        let (m1, m2, ms) = (matched_filter(&w1, &p), matched_filter(&w2, &p), matched_filter(&sum, &p));
        for ((a, b), c) in m1.antennas.iter().flatten().zip(m2.antennas.iter().flatten()).zip(ms.antennas.iter().flatten()) {
            assert!((a + b - c).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_sample_variance() {
        let g = ArrayGeometry::new(vec![Position::ORIGIN], 0.04).unwrap();
        let p = pulse();
        let sigma2 = 0.25;
        let w = synthesize_received(&g, &[], &p, sigma2, 2e-3, 99, None).unwrap();
        let n = w.num_samples() as f64;
        let var = w.antennas[0].iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        let expect = sigma2 / p.dt();
        assert!(((var - expect) / expect).abs() < 0.05);
    }

    #[test]
    fn snapshot_noise_energy_mean() {
        // ‖z̄‖² averaged over draws equals S·σ².
        let lambda = 0.0428;
        let g = crate::arrays::circular_random_array(4, lambda, lambda, 1).unwrap();
        let p = pulse();
        let sigma2 = 2.0;
        let mut total = 0.0;
        let mut draws = 0usize;
        for seed in 0..500u64 {
            let w = synthesize_received(&g, &[], &p, sigma2, 1.5e-6, seed, None).unwrap();
            let mf = matched_filter(&w, &p);
            // Lags 20 samples apart are independent (pulse spans 7 samples).
            for j in (0..mf.len() - p.samples().len()).step_by(20) {
                let s = snapshot_at(&mf, j as f64 * mf.dt).unwrap();
                total += s.energy();
                draws += 1;
            }
        }
        assert!(draws >= 1000);
        let mean = total / draws as f64;
        let expect = 4.0 * sigma2;
        assert!(((mean - expect) / expect).abs() < 0.05, "mean {mean} expect {expect} ({draws} draws)");
    }
}
