//! Threshold matched-filter timing: non-coherent aggregation, threshold
//! selection for an early false-alarm target, first-peak TOA and
//! first-crossing sampling time.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::stats::gamma_q;
use crate::waveform::{matched_filter, MfTrace, Pulse, ReceivedWaveform};
use crate::{Error, Result};

/// `‖MF(d_j)‖²` across the array on the delay lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct NcTrace {
    pub values: Vec<f64>,
    pub dt: f64,
}

impl NcTrace {
    pub fn from_mf(mf: &MfTrace) -> Self {
        let n = mf.len();
        let mut values = alloc::vec![0.0; n];
        for antenna in &mf.antennas {
            for (v, z) in values.iter_mut().zip(antenna) {
                *v += z.norm_sqr();
            }
        }
        Self { values, dt: mf.dt }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn noncoherent_trace(w: &ReceivedWaveform, pulse: &Pulse) -> NcTrace {
    NcTrace::from_mf(&matched_filter(w, pulse))
}

/// Early false-alarm model used to pick η.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FalseAlarmModel {
    /// `1 − (1 − e^{−η/(Sσ²)})^N` over `N = T_obs/T_corr` independent looks.
    #[default]
    IndependentLooks,
    /// As above but with the exact per-look tail of a sum of `S` unit
    /// exponentials, `Q(S, η/σ²)`.
    GammaLooks,
    /// `1 + ((1 − q)^N − 1)/q^N` with `q = e^{−η/(Sσ²)}`. Never positive,
    /// so any target in (0, 1) is unattainable; kept for comparison.
    Printed,
}

/// Model probability of an early false alarm at threshold `eta`.
pub fn false_alarm_probability(
    model: FalseAlarmModel,
    eta: f64,
    antennas: usize,
    noise_variance: f64,
    looks: f64,
) -> f64 {
    let s = antennas as f64;
    let x = eta / (s * noise_variance);
    match model {
        FalseAlarmModel::IndependentLooks => -(looks * (-(-x).exp()).ln_1p()).exp_m1(),
        FalseAlarmModel::GammaLooks => {
            let q = gamma_q(s, eta / noise_variance);
            -(looks * (-q).ln_1p()).exp_m1()
        }
        FalseAlarmModel::Printed => {
            let q = (-x).exp();
            1.0 + ((1.0 - q).powf(looks) - 1.0) / q.powf(looks)
        }
    }
}

/// Threshold η for a false-alarm target with `T_corr = 1/B`, by bisection
/// to 1e-6 relative tolerance.
pub fn threshold_for_pfa(
    pfa: f64,
    antennas: usize,
    noise_variance: f64,
    t_obs: f64,
    bandwidth: f64,
    model: FalseAlarmModel,
) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::UnattainableFalseAlarm(pfa));
    }
    if antennas == 0 || !(noise_variance > 0.0) || !(t_obs > 0.0) || !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            reason: "antennas, noise variance, window and bandwidth must be positive",
        });
    }
    let looks = t_obs * bandwidth;
    let p = |eta: f64| false_alarm_probability(model, eta, antennas, noise_variance, looks);
    // Every model is non-increasing in η; the target must lie below p(0).
    if !(p(0.0) >= pfa) {
        return Err(Error::UnattainableFalseAlarm(pfa));
    }
    let scale = antennas as f64 * noise_variance;
    let mut lo = 0.0;
    let mut hi = scale;
    while p(hi) > pfa {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::UnattainableFalseAlarm(pfa));
        }
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if p(mid) > pfa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Timing outcome for one station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingResult {
    pub toa: f64,
    pub sampling_time: f64,
    pub threshold: f64,
}

fn is_peak(v: &[f64], j: usize) -> bool {
    let rises = j == 0 || v[j] > v[j - 1];
    let holds = j + 1 == v.len() || v[j] >= v[j + 1];
    rises && holds
}

/// Earliest local maximum at or above `eta`, refined by a three-point
/// parabola on the trace values.
pub fn estimate_toa(trace: &NcTrace, eta: f64) -> Result<f64> {
    let v = &trace.values;
    let j = (0..v.len())
        .find(|&j| v[j] >= eta && is_peak(v, j))
        .ok_or(Error::NoDetection)?;
    let mut offset = 0.0;
    if j > 0 && j + 1 < v.len() {
        let denom = v[j - 1] - 2.0 * v[j] + v[j + 1];
        if denom < 0.0 {
            offset = (0.5 * (v[j - 1] - v[j + 1]) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok((j as f64 + offset) * trace.dt)
}

/// First lattice delay at which the trace reaches `eta`.
pub fn sampling_time(trace: &NcTrace, eta: f64) -> Result<f64> {
    trace
        .values
        .iter()
        .position(|v| *v >= eta)
        .map(|j| j as f64 * trace.dt)
        .ok_or(Error::NoDetection)
}

pub fn time_station(trace: &NcTrace, eta: f64) -> Result<TimingResult> {
    Ok(TimingResult {
        toa: estimate_toa(trace, eta)?,
        sampling_time: sampling_time(trace, eta)?,
        threshold: eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::{circular_random_array, ArrayGeometry};
    use crate::channel::{PathComponent, PathKind};
    use crate::geometry::Position;
    use crate::waveform::{gaussian_pulse, synthesize_received};
    use crate::C64;
    use alloc::vec;

    fn trace(values: Vec<f64>) -> NcTrace {
        NcTrace { values, dt: 1.0 }
    }

    #[test]
    fn closed_form_single_look() {
        // N = 1: e^{−η/(Sσ²)} = e^{−1} at η = Sσ².
        let eta = threshold_for_pfa((-1f64).exp(), 4, 2.5, 1.0, 1.0, FalseAlarmModel::IndependentLooks).unwrap();
        assert!((eta - 10.0).abs() < 1e-5 * 10.0);
    }

    #[test]
    fn bisection_matches_inverse() {
        let (s, sigma2, n, pfa) = (100usize, 1.0, 1000.0, 1e-2);
        let eta = threshold_for_pfa(pfa, s, sigma2, n, 1.0, FalseAlarmModel::IndependentLooks).unwrap();
        let closed = -(s as f64) * sigma2 * (1.0 - (1.0 - pfa).powf(1.0 / n)).ln();
        assert!(((eta - closed) / closed).abs() < 2e-6, "{eta} vs {closed}");
        assert!(eta > 100.0 * 11.0 && eta < 100.0 * 12.0);
    }

    #[test]
    fn threshold_limits_and_printed_model() {
        let mut prev = f64::INFINITY;
        for pfa in [1e-3, 0.5, 0.9, 1.0 - 1e-9] {
            let eta = threshold_for_pfa(pfa, 10, 1.0, 1.0, 1.0, FalseAlarmModel::IndependentLooks).unwrap();
            assert!(eta < prev);
            prev = eta;
        }
        assert!(prev < 1e-6);
        assert!(threshold_for_pfa(1.0, 10, 1.0, 1e-6, 30e6, FalseAlarmModel::IndependentLooks).is_err());
        for eta in [0.0, 0.1, 1.0, 10.0, 100.0] {
            assert!(false_alarm_probability(FalseAlarmModel::Printed, eta, 10, 1.0, 30.0) <= 0.0);
        }
        assert_eq!(
            threshold_for_pfa(1e-3, 10, 1.0, 1e-6, 30e6, FalseAlarmModel::Printed),
            Err(Error::UnattainableFalseAlarm(1e-3))
        );
    }

    #[test]
    fn gamma_model_is_less_conservative_for_many_antennas() {
        let a = threshold_for_pfa(1e-3, 100, 1.0, 1e-6, 30e6, FalseAlarmModel::IndependentLooks).unwrap();
        let b = threshold_for_pfa(1e-3, 100, 1.0, 1e-6, 30e6, FalseAlarmModel::GammaLooks).unwrap();
        assert!(b < a);
        let a1 = threshold_for_pfa(1e-3, 1, 1.0, 1e-6, 30e6, FalseAlarmModel::IndependentLooks).unwrap();
        let b1 = threshold_for_pfa(1e-3, 1, 1.0, 1e-6, 30e6, FalseAlarmModel::GammaLooks).unwrap();
        assert!(((a1 - b1) / a1).abs() < 1e-5);
    }

    #[test]
    fn first_peak_semantics() {
        let t = trace(vec![0.0, 1.0, 3.0, 1.0, 0.0, 2.0, 9.0, 2.0, 0.0]);
        assert_eq!(estimate_toa(&t, 2.5).unwrap(), 2.0);
        assert_eq!(estimate_toa(&t, 3.5).unwrap(), 6.0);
        assert_eq!(estimate_toa(&t, 10.0), Err(Error::NoDetection));
        assert_eq!(sampling_time(&t, 2.5).unwrap(), 2.0);
        assert_eq!(sampling_time(&t, 1.5).unwrap(), 2.0);
        assert_eq!(sampling_time(&t, 1e-12).unwrap(), 1.0);
        // Asymmetric neighbours move the estimate towards the larger one.
        let t = trace(vec![0.0, 2.0, 4.0, 3.0, 0.0]);
        let tau = estimate_toa(&t, 1.0).unwrap();
        assert!(tau > 2.0 && tau < 2.5);
        // Plateau: earliest sample.
        let t = trace(vec![0.0, 5.0, 5.0, 0.0]);
        // Plateau: the earliest sample is the peak; the parabola then puts
        // the vertex midway.
        assert_eq!(estimate_toa(&t, 1.0).unwrap(), 1.5);
        let t = trace(vec![0.0, 5.0, 5.0, 5.0, 0.0]);
        assert_eq!(estimate_toa(&t, 1.0).unwrap(), 1.5);
        assert!(sampling_time(&trace(vec![0.0; 4]), 1.0).is_err());
        assert!(noncoherent_trace_is_zero_on_zero_input());
    }

    fn noncoherent_trace_is_zero_on_zero_input() -> bool {
        let p = gaussian_pulse(30e6, 3.0, 4.0).unwrap();
        let g = ArrayGeometry::new(vec![Position::ORIGIN, Position::new(0.01, 0.0)], 0.04).unwrap();
        let w = synthesize_received(&g, &[], &p, 0.0, 1e-6, 0, None).unwrap();
        noncoherent_trace(&w, &p).values.iter().all(|v| *v == 0.0)
    }

    #[test]
    fn clean_pulse_timing() {
        let lambda = 0.0428;
        let p = gaussian_pulse(30e6, 3.0, 4.0).unwrap();
        let g = circular_random_array(16, 5.0 * lambda, lambda, 2).unwrap();
        for frac in [0.0, 0.2, 0.45, 0.7] {
            let tau = (30.0 + frac) * p.dt();
            let alpha = C64::new(0.6, -0.8);
            let path = PathComponent {
                gain: alpha,
                aoa: 2.0,
                toa: tau,
                kind: PathKind::Los,
            };
            let w = synthesize_received(&g, &[path], &p, 0.0, 2e-6, 0, None).unwrap();
            let tr = noncoherent_trace(&w, &p);
            let (jmax, vmax) = tr
                .values
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc });
            assert!((jmax as f64 * p.dt() - tau).abs() <= 0.5 * p.dt() + 1e-15);
            // Peak value is |α|²·S scaled by the lattice offset.
            assert!(vmax <= 16.0 + 1e-9 && vmax > 16.0 * 0.6);
            let eta = 0.2 * vmax;
            let r = time_station(&tr, eta).unwrap();
            assert!((r.toa - tau).abs() < 0.1 / 30e6, "frac {frac}: {} vs {tau}", r.toa);
            assert!(r.sampling_time < r.toa);
            assert!(r.sampling_time <= r.toa + p.dt());
        }
    }

    #[test]
    fn common_phase_rotation_leaves_trace_unchanged() {
        let lambda = 0.0428;
        let p = gaussian_pulse(30e6, 3.0, 4.0).unwrap();
        let g = circular_random_array(8, lambda, lambda, 4).unwrap();
        let w = synthesize_received(&g, &[], &p, 1.0, 1e-6, 3, None).unwrap();
        let mut rotated = w.clone();
        let rot = C64::from_polar(1.0, 0.77);
        rotated.antennas.iter_mut().flatten().for_each(|v| *v *= rot);
        let (a, b) = (noncoherent_trace(&w, &p), noncoherent_trace(&rotated, &p));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-9 * x.max(1.0));
        }
    }
}
