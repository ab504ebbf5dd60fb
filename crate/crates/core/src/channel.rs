//! Clustered indoor multipath generation with a deterministic direct path.
//!
//! Clusters arrive as a Poisson process starting at the LOS delay; rays
//! within each cluster arrive as a second Poisson process. The first ray of
//! the first cluster is the direct path itself.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::geometry::{aoa_of, toa_of, wrap_angle, Position};
use crate::rng::{complex_normal, derive_seed, exponential, laplacian, rng_from_seed, uniform};
use crate::{Error, Result, C64};

/// Expected ray energy, relative to the LOS energy, below which generation
/// stops.
pub const ENERGY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    pub aoa: f64,
    pub toa: f64,
    pub kind: PathKind,
}

/// Direct-path condition at one station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LosState {
    Los,
    /// Obstructed: the direct path is attenuated by the given amount in dB.
    Olos(f64),
    Nlos,
}

impl LosState {
    /// Power factor applied to the direct path.
    pub fn power_factor(&self) -> f64 {
        match self {
            LosState::Los => 1.0,
            LosState::Olos(db) => 10f64.powf(-db / 10.0),
            LosState::Nlos => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Cluster power decay constant Γ, s.
    pub cluster_decay: f64,
    /// Ray power decay constant γ_r, s.
    pub ray_decay: f64,
    /// Cluster arrival rate Λ, 1/s.
    pub cluster_rate: f64,
    /// Ray arrival rate λ_r, 1/s.
    pub ray_rate: f64,
    /// Standard deviation of the Laplacian intra-cluster angle spread, rad.
    pub angular_spread: f64,
    /// Mean-square LOS gain `E|α|²`.
    pub los_energy: f64,
    /// Per-station direct-path state; stations beyond the list are LOS.
    pub los_states: Vec<LosState>,
}

impl ChannelParams {
    /// Indoor office statistics: Γ = 34 ns, γ_r = 29 ns, 1/Λ = 17 ns,
    /// 1/λ_r = 5 ns, 26° spread.
    pub fn clyde() -> Self {
        Self {
            cluster_decay: 34e-9,
            ray_decay: 29e-9,
            cluster_rate: 1.0 / 17e-9,
            ray_rate: 1.0 / 5e-9,
            angular_spread: 26f64.to_radians(),
            los_energy: 1.0,
            los_states: Vec::new(),
        }
    }

    /// No multipath at all; only the direct paths remain.
    pub fn los_only(los_energy: f64) -> Self {
        Self {
            cluster_rate: 0.0,
            ray_rate: 0.0,
            los_energy,
            ..Self::clyde()
        }
    }

    pub fn state_for(&self, station: usize) -> LosState {
        self.los_states.get(station).copied().unwrap_or(LosState::Los)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.cluster_decay) || !positive(self.ray_decay) {
            return Err(Error::InvalidParameter {
                name: "decay",
                reason: "decay constants must be positive",
            });
        }
        if !(self.cluster_rate >= 0.0 && self.ray_rate >= 0.0)
            || !self.cluster_rate.is_finite()
            || !self.ray_rate.is_finite()
        {
            return Err(Error::InvalidParameter {
                name: "rate",
                reason: "arrival rates must be non-negative",
            });
        }
        if !(self.angular_spread >= 0.0) || !positive(self.los_energy) {
            return Err(Error::InvalidParameter {
                name: "channel",
                reason: "angular spread must be non-negative and LOS energy positive",
            });
        }
        for s in &self.los_states {
            if let LosState::Olos(db) = s {
                if !(*db >= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "los_states",
                        reason: "OLOS attenuation must be non-negative dB",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Paths seen by every station.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelRealization {
    pub stations: Vec<Vec<PathComponent>>,
}

impl ChannelRealization {
    pub fn los(&self, station: usize) -> Option<&PathComponent> {
        self.stations
            .get(station)?
            .iter()
            .find(|p| p.kind == PathKind::Los)
    }

    pub fn max_toa(&self) -> f64 {
        self.stations
            .iter()
            .flatten()
            .map(|p| p.toa)
            .fold(0.0, f64::max)
    }
}

/// Draws an independent realization for every station.
pub fn draw_channel(
    source: &Position,
    stations: &[Position],
    params: &ChannelParams,
    seed: u64,
) -> Result<ChannelRealization> {
    params.validate()?;
    let stations = stations
        .iter()
        .enumerate()
        .map(|(l, c)| draw_station(source, c, params, params.state_for(l), derive_seed(seed, l as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelRealization { stations })
}

fn draw_station(
    source: &Position,
    center: &Position,
    params: &ChannelParams,
    state: LosState,
    seed: u64,
) -> Result<Vec<PathComponent>> {
    let mut rng = rng_from_seed(seed);
    let tau0 = toa_of(source, center);
    let theta0 = aoa_of(source, center)?;
    let e = params.los_energy;
    let mut paths = Vec::new();
    // Drawn for every state so the multipath is identical across states.
    let los_gain = complex_normal(&mut rng, e * state.power_factor());
    if state != LosState::Nlos {
        paths.push(PathComponent {
            gain: los_gain,
            aoa: theta0,
            toa: tau0,
            kind: PathKind::Los,
        });
    }
    if params.cluster_rate == 0.0 && params.ray_rate == 0.0 {
        return Ok(paths);
    }
    let floor = ENERGY_FLOOR;
    let mut cluster_delay = 0.0;
    let mut first_cluster = true;
    loop {
        let cluster_weight = (-cluster_delay / params.cluster_decay).exp();
        if cluster_weight < floor {
            break;
        }
        let cluster_aoa = uniform(&mut rng, 0.0, TAU);
        let mut ray_delay = 0.0;
        let mut first_ray = true;
        loop {
            let weight = cluster_weight * (-ray_delay / params.ray_decay).exp();
            if weight < floor {
                break;
            }
            let deviation = laplacian(&mut rng, params.angular_spread);
            let gain = complex_normal(&mut rng, e * weight);
            // The leading ray of the leading cluster is the direct path.
            if !(first_cluster && first_ray) {
                paths.push(PathComponent {
                    gain,
                    aoa: wrap_angle(cluster_aoa + deviation),
                    toa: tau0 + cluster_delay + ray_delay,
                    kind: PathKind::Nlos,
                });
            }
            first_ray = false;
            if params.ray_rate == 0.0 {
                break;
            }
            ray_delay += exponential(&mut rng, 1.0 / params.ray_rate);
        }
        first_cluster = false;
        if params.cluster_rate == 0.0 {
            break;
        }
        cluster_delay += exponential(&mut rng, 1.0 / params.cluster_rate);
    }
    Ok(paths)
}

/// Expected per-station SNR `10·log10(S·E|ᾱ|²/σ²)` in dB.
pub fn snr_db(params: &ChannelParams, station: usize, noise_variance: f64, antennas: usize) -> Result<f64> {
    let factor = params.state_for(station).power_factor();
    if factor == 0.0 {
        return Err(Error::NoLineOfSight);
    }
    Ok(10.0 * (antennas as f64 * params.los_energy * factor / noise_variance).log10())
}
