//! Flat `key = value` scenario files.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; anything
//! left out keeps the default scenario value (see [`ScenarioConfig::default`]).
//! Errors name the offending line.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use disoul_core::channel::{ChannelParams, LosState};
use disoul_core::geometry::{Position, Rect};
use disoul_core::localizer::LocalizerConfig;
use disoul_core::timing::FalseAlarmModel;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    /// 1-based line, or `None` for problems not tied to a line.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {n}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl ConfigError {
    pub fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Localization methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    Disoul,
    Srls,
    Stansfield,
    /// Unweighted bearing-line fix.
    BearingLs,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [MethodId::Disoul, MethodId::Srls, MethodId::Stansfield, MethodId::BearingLs];

    pub fn name(&self) -> &'static str {
        match self {
            MethodId::Disoul => "disoul",
            MethodId::Srls => "srls",
            MethodId::Stansfield => "stansfield",
            MethodId::BearingLs => "bearing-ls",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "disoul" => Ok(MethodId::Disoul),
            "srls" => Ok(MethodId::Srls),
            "stansfield" => Ok(MethodId::Stansfield),
            "bearing-ls" => Ok(MethodId::BearingLs),
            "dpd" | "iv" => Err(format!("method `{s}` is a reserved slot with no implementation")),
            _ => Err(format!(
                "unknown method `{s}` (expected disoul, srls, stansfield or bearing-ls)"
            )),
        }
    }
}

/// Parses a comma-separated method list; duplicates are dropped, order kept.
pub fn parse_methods(s: &str) -> Result<Vec<MethodId>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: MethodId = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err("method list is empty".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub region_width_m: f64,
    pub region_height_m: f64,
    pub stations: Vec<Position>,
    pub antennas: usize,
    pub array_radius_wavelengths: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub oversampling: f64,
    /// Pulse truncation in multiples of its time-domain standard deviation.
    pub pulse_truncation: f64,
    pub e_n0_db: f64,
    /// `false` keeps only the direct paths.
    pub multipath: bool,
    pub cluster_decay_ns: f64,
    pub ray_decay_ns: f64,
    pub cluster_interarrival_ns: f64,
    pub ray_interarrival_ns: f64,
    pub angular_spread_deg: f64,
    pub los_states: Vec<LosState>,
    pub gamma: f64,
    pub pfa: f64,
    pub false_alarm_model: FalseAlarmModel,
    pub beta: f64,
    pub location_resolution_m: f64,
    pub angle_resolution_deg: f64,
    pub zero_threshold: f64,
    pub max_depth: usize,
    /// `None` uses one inverse bandwidth.
    pub toa_expansion_ns: Option<f64>,
    pub calibration_interval_deg: f64,
    pub seed: u64,
    pub trials: usize,
    pub methods: Vec<MethodId>,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            region_width_m: 100.0,
            region_height_m: 100.0,
            stations: vec![
                Position::new(-45.0, -45.0),
                Position::new(45.0, -45.0),
                Position::new(45.0, 45.0),
                Position::new(-45.0, 45.0),
            ],
            antennas: 100,
            array_radius_wavelengths: 5.0,
            carrier_hz: 7e9,
            bandwidth_hz: 30e6,
            oversampling: 3.0,
            pulse_truncation: 4.0,
            e_n0_db: 20.0,
            multipath: true,
            cluster_decay_ns: 34.0,
            ray_decay_ns: 29.0,
            cluster_interarrival_ns: 17.0,
            ray_interarrival_ns: 5.0,
            angular_spread_deg: 26.0,
            los_states: Vec::new(),
            gamma: 0.99,
            pfa: 1e-3,
            false_alarm_model: FalseAlarmModel::IndependentLooks,
            beta: 1e-3,
            location_resolution_m: 5.0,
            angle_resolution_deg: 5.71,
            zero_threshold: 1e-3,
            max_depth: 6,
            toa_expansion_ns: None,
            calibration_interval_deg: 0.0,
            seed: 1,
            trials: 200,
            methods: vec![MethodId::Disoul, MethodId::Srls, MethodId::Stansfield],
            workers: 0,
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean (true/false)")),
    }
}

fn parse_stations(v: &str) -> Result<Vec<Position>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| format!("station `{pair}` must be `x,y`"))?;
            Ok(Position::new(parse_f64(x.trim())?, parse_f64(y.trim())?))
        })
        .collect()
}

fn parse_los_state(v: &str) -> Result<LosState, String> {
    match v {
        "los" => Ok(LosState::Los),
        "nlos" => Ok(LosState::Nlos),
        _ => match v.strip_prefix("olos:") {
            Some(db) => Ok(LosState::Olos(parse_f64(db)?)),
            None => Err(format!("direct-path state `{v}` must be los, nlos or olos:<dB>")),
        },
    }
}

fn parse_model(v: &str) -> Result<FalseAlarmModel, String> {
    match v {
        "independent" => Ok(FalseAlarmModel::IndependentLooks),
        "gamma" => Ok(FalseAlarmModel::GammaLooks),
        "printed" => Ok(FalseAlarmModel::Printed),
        _ => Err(format!("false-alarm model `{v}` must be independent, gamma or printed")),
    }
}

fn model_name(m: FalseAlarmModel) -> &'static str {
    match m {
        FalseAlarmModel::IndependentLooks => "independent",
        FalseAlarmModel::GammaLooks => "gamma",
        FalseAlarmModel::Printed => "printed",
    }
}

fn los_state_name(s: &LosState) -> String {
    match s {
        LosState::Los => "los".into(),
        LosState::Nlos => "nlos".into(),
        LosState::Olos(db) => format!("olos:{db}"),
    }
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at(None, format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    /// Sets one key; `line` only labels errors.
    pub fn set(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let err = |m: String| ConfigError::at(line, format!("invalid value for `{key}`: {m}"));
        match key {
            "region_width_m" => self.region_width_m = parse_f64(value).map_err(err)?,
            "region_height_m" => self.region_height_m = parse_f64(value).map_err(err)?,
            "stations" => self.stations = parse_stations(value).map_err(err)?,
            "antennas" => self.antennas = parse_usize(value).map_err(err)?,
            "array_radius_wavelengths" => self.array_radius_wavelengths = parse_f64(value).map_err(err)?,
            "carrier_hz" => self.carrier_hz = parse_f64(value).map_err(err)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_f64(value).map_err(err)?,
            "oversampling" => self.oversampling = parse_f64(value).map_err(err)?,
            "pulse_truncation" => self.pulse_truncation = parse_f64(value).map_err(err)?,
            "e_n0_db" => self.e_n0_db = parse_f64(value).map_err(err)?,
            "multipath" => self.multipath = parse_bool(value).map_err(err)?,
            "cluster_decay_ns" => self.cluster_decay_ns = parse_f64(value).map_err(err)?,
            "ray_decay_ns" => self.ray_decay_ns = parse_f64(value).map_err(err)?,
            "cluster_interarrival_ns" => self.cluster_interarrival_ns = parse_f64(value).map_err(err)?,
            "ray_interarrival_ns" => self.ray_interarrival_ns = parse_f64(value).map_err(err)?,
            "angular_spread_deg" => self.angular_spread_deg = parse_f64(value).map_err(err)?,
            "los_states" => {
                self.los_states = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(parse_los_state)
                    .collect::<Result<_, _>>()
                    .map_err(err)?
            }
            "gamma" => self.gamma = parse_f64(value).map_err(err)?,
            "pfa" => self.pfa = parse_f64(value).map_err(err)?,
            "false_alarm_model" => self.false_alarm_model = parse_model(value).map_err(err)?,
            "beta" => {
                self.beta = if value == "inf" {
                    f64::INFINITY
                } else {
                    parse_f64(value).map_err(err)?
                }
            }
            "location_resolution_m" => self.location_resolution_m = parse_f64(value).map_err(err)?,
            "angle_resolution_deg" => self.angle_resolution_deg = parse_f64(value).map_err(err)?,
            "zero_threshold" => self.zero_threshold = parse_f64(value).map_err(err)?,
            "max_depth" => self.max_depth = parse_usize(value).map_err(err)?,
            "toa_expansion_ns" => {
                self.toa_expansion_ns = if value == "auto" {
                    None
                } else {
                    Some(parse_f64(value).map_err(err)?)
                }
            }
            "calibration_interval_deg" => self.calibration_interval_deg = parse_f64(value).map_err(err)?,
            "seed" => self.seed = value.parse().map_err(|_| err(format!("`{value}` is not a u64")))?,
            "trials" => self.trials = parse_usize(value).map_err(err)?,
            "methods" => self.methods = parse_methods(value).map_err(err)?,
            "workers" => self.workers = parse_usize(value).map_err(err)?,
            _ => return Err(ConfigError::at(line, format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Range and consistency checks. Errors point at the line that set the
    /// offending key when `lines` knows it.
    pub fn validate_with(&self, lines: &HashMap<String, usize>) -> Result<(), ConfigError> {
        let fail = |key: &str, m: &str| Err(ConfigError::at(lines.get(key).copied(), format!("`{key}` {m}")));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        for (key, v) in [
            ("region_width_m", self.region_width_m),
            ("region_height_m", self.region_height_m),
            ("array_radius_wavelengths", self.array_radius_wavelengths),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pulse_truncation", self.pulse_truncation),
            ("cluster_decay_ns", self.cluster_decay_ns),
            ("ray_decay_ns", self.ray_decay_ns),
            ("cluster_interarrival_ns", self.cluster_interarrival_ns),
            ("ray_interarrival_ns", self.ray_interarrival_ns),
            ("location_resolution_m", self.location_resolution_m),
            ("angle_resolution_deg", self.angle_resolution_deg),
        ] {
            if !positive(v) {
                return fail(key, "must be positive");
            }
        }
        if self.oversampling < 2.0 {
            return fail("oversampling", "must be at least 2");
        }
        if self.angle_resolution_deg >= 360.0 {
            return fail("angle_resolution_deg", "must be below 360");
        }
        if self.stations.len() < 2 {
            return fail("stations", "needs at least two stations");
        }
        if self.los_states.len() > self.stations.len() {
            return fail("los_states", "lists more states than stations");
        }
        if self.antennas == 0 {
            return fail("antennas", "must be at least 1");
        }
        if !(self.angular_spread_deg >= 0.0) {
            return fail("angular_spread_deg", "must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma", "must lie in (0, 1)");
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return fail("pfa", "must lie in (0, 1)");
        }
        if !(self.beta > 0.0) {
            return fail("beta", "must be positive or `inf`");
        }
        if !(self.zero_threshold > 0.0 && self.zero_threshold < 1.0) {
            return fail("zero_threshold", "must lie in (0, 1)");
        }
        if let Some(v) = self.toa_expansion_ns {
            if !positive(v) {
                return fail("toa_expansion_ns", "must be positive or `auto`");
            }
        }
        if !(0.0..=360.0).contains(&self.calibration_interval_deg) {
            return fail("calibration_interval_deg", "must lie in [0, 360]");
        }
        if self.trials == 0 {
            return fail("trials", "must be at least 1");
        }
        for s in &self.los_states {
            if let LosState::Olos(db) = s {
                if *db < 0.0 {
                    return fail("los_states", "OLOS attenuation must be non-negative");
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with(&HashMap::new())
    }

    pub fn region(&self) -> Rect {
        Rect::centered(self.region_width_m, self.region_height_m)
    }

    /// Noise spectral density for a unit-energy pulse.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.e_n0_db / 10.0)
    }

    pub fn channel_params(&self) -> ChannelParams {
        let base = ChannelParams {
            cluster_decay: self.cluster_decay_ns * 1e-9,
            ray_decay: self.ray_decay_ns * 1e-9,
            cluster_rate: 1.0 / (self.cluster_interarrival_ns * 1e-9),
            ray_rate: 1.0 / (self.ray_interarrival_ns * 1e-9),
            angular_spread: self.angular_spread_deg.to_radians(),
            los_energy: 1.0,
            los_states: self.los_states.clone(),
        };
        if self.multipath {
            base
        } else {
            ChannelParams {
                cluster_rate: 0.0,
                ray_rate: 0.0,
                ..base
            }
        }
    }

    pub fn localizer(&self) -> LocalizerConfig {
        LocalizerConfig {
            region: self.region(),
            gamma: self.gamma,
            beta: self.beta,
            location_resolution: self.location_resolution_m,
            angle_resolution: self.angle_resolution_deg.to_radians(),
            pfa: self.pfa,
            false_alarm_model: self.false_alarm_model,
            toa_expansion: self.toa_expansion_ns.map(|v| v * 1e-9),
            zero_threshold: self.zero_threshold,
            max_depth: self.max_depth,
            ..LocalizerConfig::default()
        }
    }

    /// Writes every key; the output parses back to an equal config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let stations: Vec<String> = self.stations.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
        let methods: Vec<&str> = self.methods.iter().map(MethodId::name).collect();
        let states: Vec<String> = self.los_states.iter().map(los_state_name).collect();
        let beta = if self.beta.is_infinite() {
            "inf".to_string()
        } else {
            self.beta.to_string()
        };
        let expansion = self.toa_expansion_ns.map_or("auto".to_string(), |v| v.to_string());
        let rows: Vec<(&str, String)> = vec![
            ("region_width_m", self.region_width_m.to_string()),
            ("region_height_m", self.region_height_m.to_string()),
            ("stations", stations.join("; ")),
            ("antennas", self.antennas.to_string()),
            ("array_radius_wavelengths", self.array_radius_wavelengths.to_string()),
            ("carrier_hz", self.carrier_hz.to_string()),
            ("bandwidth_hz", self.bandwidth_hz.to_string()),
            ("oversampling", self.oversampling.to_string()),
            ("pulse_truncation", self.pulse_truncation.to_string()),
            ("e_n0_db", self.e_n0_db.to_string()),
            ("multipath", self.multipath.to_string()),
            ("cluster_decay_ns", self.cluster_decay_ns.to_string()),
            ("ray_decay_ns", self.ray_decay_ns.to_string()),
            ("cluster_interarrival_ns", self.cluster_interarrival_ns.to_string()),
            ("ray_interarrival_ns", self.ray_interarrival_ns.to_string()),
            ("angular_spread_deg", self.angular_spread_deg.to_string()),
            ("los_states", states.join(",")),
            ("gamma", self.gamma.to_string()),
            ("pfa", self.pfa.to_string()),
            ("false_alarm_model", model_name(self.false_alarm_model).to_string()),
            ("beta", beta),
            ("location_resolution_m", self.location_resolution_m.to_string()),
            ("angle_resolution_deg", self.angle_resolution_deg.to_string()),
            ("zero_threshold", self.zero_threshold.to_string()),
            ("max_depth", self.max_depth.to_string()),
            ("toa_expansion_ns", expansion),
            ("calibration_interval_deg", self.calibration_interval_deg.to_string()),
            ("seed", self.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("methods", methods.join(",")),
            ("workers", self.workers.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut lines: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(Some(n), format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::at(Some(n), "missing key before `=`"));
            }
            if let Some(first) = lines.get(key) {
                return Err(ConfigError::at(
                    Some(n),
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            cfg.set(key, value, Some(n))?;
            lines.insert(key.to_string(), n);
        }
        cfg.validate_with(&lines)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_scenario() {
        let cfg: ScenarioConfig = "# nothing\n\n".parse().unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn defaults_match_the_reference_scenario() {
        let c = ScenarioConfig::default();
        assert_eq!((c.region_width_m, c.region_height_m), (100.0, 100.0));
        assert_eq!(c.stations.len(), 4);
        assert!(c.stations.iter().all(|p| p.x.abs() == 45.0 && p.y.abs() == 45.0));
        assert_eq!(c.antennas, 100);
        assert_eq!(c.array_radius_wavelengths, 5.0);
        assert_eq!(c.carrier_hz, 7e9);
        assert_eq!(c.bandwidth_hz, 30e6);
        assert_eq!(c.oversampling, 3.0);
        assert_eq!(c.e_n0_db, 20.0);
        assert_eq!(
            (c.cluster_decay_ns, c.ray_decay_ns, c.cluster_interarrival_ns, c.ray_interarrival_ns),
            (34.0, 29.0, 17.0, 5.0)
        );
        assert_eq!(c.angular_spread_deg, 26.0);
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.beta, 1e-3);
        assert_eq!(c.location_resolution_m, 5.0);
        assert_eq!(c.angle_resolution_deg, 5.71);
        assert_eq!(c.calibration_interval_deg, 0.0);
    }

    #[test]
    fn render_round_trips() {
        let c = ScenarioConfig {
            beta: f64::INFINITY,
            los_states: vec![LosState::Los, LosState::Olos(6.5), LosState::Nlos],
            toa_expansion_ns: Some(12.5),
            methods: vec![MethodId::Srls, MethodId::BearingLs],
            ..ScenarioConfig::default()
        };
        let back: ScenarioConfig = c.render().parse().unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_line() {
        let e = "seed = 3\n\nantennas = many\n".parse::<ScenarioConfig>().unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("config line 3:"));
        let e = "seed = 3\nbogus = 1\n".parse::<ScenarioConfig>().unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = "seed = 3\nseed = 4\n".parse::<ScenarioConfig>().unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = "just words\n".parse::<ScenarioConfig>().unwrap_err();
        assert_eq!(e.line, Some(1));
        // Range checks point at the line that set the key.
        let e = "seed = 3\ngamma = 1.5\n".parse::<ScenarioConfig>().unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn reserved_methods_are_rejected() {
        assert!(parse_methods("disoul,dpd").unwrap_err().contains("reserved"));
        assert_eq!(parse_methods("srls, srls ,disoul").unwrap(), vec![MethodId::Srls, MethodId::Disoul]);
    }

    #[test]
    fn direct_paths_only() {
        let c: ScenarioConfig = "multipath = off".parse().unwrap();
        let p = c.channel_params();
        assert_eq!((p.cluster_rate, p.ray_rate), (0.0, 0.0));
    }
}
