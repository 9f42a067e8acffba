//! Scenario configuration and seeded generation of everything random in a
//! simulated day: the request stream, the weather at each producer and the
//! initial fleet.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::bilevel::BilevelOptions;
use crate::error::{Error, Result};
use crate::ev_cost::{CostConstants, EvState};
use crate::network::{NetworkSpec, RoadNetwork};
use crate::renewables::HpsState;
use crate::station::FcsState;

const BUILTIN_NETWORK: &str = include_str!("../data/network26.toml");

/// The 26-node road network used when a config names none.
pub fn builtin_network() -> NetworkSpec {
    toml::from_str(BUILTIN_NETWORK).expect("built-in network parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    /// Step length, hours.
    pub delta_h: f64,
    pub steps: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            delta_h: 0.25,
            steps: 96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub n_evs: usize,
    pub capacity_kwh: f64,
    pub speed_kmh: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            n_evs: 200,
            capacity_kwh: 75.0,
            speed_kmh: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestConfig {
    /// Mean charging requests per EV per day.
    pub per_ev_per_day: f64,
    /// Relative request intensity for each hour of the day (24 values).
    pub hourly_profile: Vec<f64>,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Probability that a requesting EV carries passengers.
    pub passenger_prob: f64,
    /// Minimum time between two requests of the same EV, hours.
    pub min_gap_h: f64,
    /// Unserved EVs ask again at the next step; otherwise they leave.
    pub retry_unserved: bool,
}

impl Default for RequestConfig {
    fn default() -> Self {
        Self {
            // 12,350 requests per day from 4,000 EVs
            per_ev_per_day: 12350.0 / 4000.0,
            hourly_profile: vec![
                0.6, 0.4, 0.3, 0.3, 0.4, 0.6, 0.9, 1.1, 1.2, 1.2, 1.3, 1.5, 1.5, 1.3, 1.2, 1.2, 1.3, 1.4, 1.3, 1.1,
                1.0, 0.9, 0.8, 0.7,
            ],
            soc_min: 0.1,
            soc_max: 0.4,
            passenger_prob: 0.4,
            min_gap_h: 4.0,
            retry_unserved: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationConfig {
    /// Piles per station.
    pub piles: usize,
    /// Per-station pile counts overriding `piles`.
    pub piles_per_station: Option<Vec<usize>>,
    /// Base load, kW.
    pub base_load_kw: f64,
}

impl Default for StationConfig {
    fn default() -> Self {
        Self {
            piles: 20,
            piles_per_station: None,
            base_load_kw: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandHistory {
    /// Observations at the same time of day on previous days.
    TimeOfDay,
    /// The most recent steps.
    Recent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandConfig {
    /// Estimate used before any history exists, kWh per step.
    pub prior_kwh: f64,
    pub window: usize,
    /// EWMA smoothing factor.
    pub alpha: f64,
    pub history: DemandHistory,
}

impl Default for DemandConfig {
    fn default() -> Self {
        Self {
            prior_kwh: 100.0,
            window: 4,
            alpha: 0.5,
            history: DemandHistory::TimeOfDay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProducerConfig {
    /// Parameters shared by every producer.
    pub hps: HpsState,
    pub tanker_speed_kmh: f64,
}

impl Default for ProducerConfig {
    fn default() -> Self {
        Self {
            hps: HpsState::default(),
            tanker_speed_kmh: 48.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherConfig {
    /// Daily mean wind speed, m/s.
    pub wind_mean: f64,
    /// Amplitude of the diurnal wind cycle, m/s.
    pub wind_amplitude: f64,
    /// Standard deviation of the AR(1) wind disturbance, m/s.
    pub wind_noise: f64,
    /// Clear-sky noon radiation, W/m^2.
    pub radiation_peak: f64,
    /// Relative spread of cloud attenuation.
    pub cloud_noise: f64,
    /// Explicit wind speeds, one row per producer, one value per step.
    pub wind_trace: Option<Vec<Vec<f64>>>,
    /// Explicit radiation, one row per producer, one value per step.
    pub radiation_trace: Option<Vec<Vec<f64>>>,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        Self {
            wind_mean: 8.0,
            wind_amplitude: 2.0,
            wind_noise: 1.0,
            radiation_peak: 800.0,
            cloud_noise: 0.2,
            wind_trace: None,
            radiation_trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TouConfig {
    /// Grid price per step, CNY/kWh; a built-in day curve when absent.
    pub prices: Option<Vec<f64>>,
    pub peak: f64,
    pub flat: f64,
    pub valley: f64,
}

impl Default for TouConfig {
    fn default() -> Self {
        Self {
            prices: None,
            peak: 1.2,
            flat: 0.7,
            valley: 0.3,
        }
    }
}

impl TouConfig {
    /// Peak 08-11 and 18-21, valley 22-06, flat otherwise.
    fn price_at_hour(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if (8.0..11.0).contains(&h) || (18.0..21.0).contains(&h) {
            self.peak
        } else if !(6.0..22.0).contains(&h) {
            self.valley
        } else {
            self.flat
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilevelConfig {
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for BilevelConfig {
    fn default() -> Self {
        let d = BilevelOptions::default();
        Self {
            epsilon: d.epsilon,
            max_iter: d.max_iter,
        }
    }
}

/// Complete scenario description. Every field has a default, so an empty
/// document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: HorizonConfig,
    pub fleet: FleetConfig,
    pub requests: RequestConfig,
    pub stations: StationConfig,
    pub demand: DemandConfig,
    pub producers: ProducerConfig,
    pub weather: WeatherConfig,
    pub tou: TouConfig,
    pub costs: CostConstants,
    pub bilevel: BilevelConfig,
    /// Road network; the built-in 26-node network when absent.
    pub network: Option<NetworkSpec>,
}

impl ScenarioConfig {
    /// Parse a TOML document; errors name the offending field path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            reason: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn network_spec(&self) -> NetworkSpec {
        self.network.clone().unwrap_or_else(builtin_network)
    }

    pub fn bilevel_options(&self) -> BilevelOptions {
        BilevelOptions {
            epsilon: self.bilevel.epsilon,
            max_iter: self.bilevel.max_iter,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.horizon;
        if !(h.delta_h > 0.0) {
            return Err(Error::param("horizon.delta_h", "must be > 0"));
        }
        if h.steps == 0 {
            return Err(Error::param("horizon.steps", "must be >= 1"));
        }
        let f = &self.fleet;
        if !(f.capacity_kwh > 0.0) {
            return Err(Error::param("fleet.capacity_kwh", "must be > 0"));
        }
        if !(f.speed_kmh > 0.0) {
            return Err(Error::param("fleet.speed_kmh", "must be > 0"));
        }
        let r = &self.requests;
        if !(r.per_ev_per_day >= 0.0) {
            return Err(Error::param("requests.per_ev_per_day", "must be >= 0"));
        }
        if r.hourly_profile.len() != 24 || r.hourly_profile.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::param("requests.hourly_profile", "needs 24 nonnegative weights"));
        }
        if !(0.0 <= r.soc_min && r.soc_min <= r.soc_max && r.soc_max <= 1.0) {
            return Err(Error::param("requests.soc_min", "need 0 <= soc_min <= soc_max <= 1"));
        }
        if !(0.0..=1.0).contains(&r.passenger_prob) {
            return Err(Error::param("requests.passenger_prob", "must lie in [0, 1]"));
        }
        if !(r.min_gap_h >= 0.0) {
            return Err(Error::param("requests.min_gap_h", "must be >= 0"));
        }
        if !(self.stations.base_load_kw > 0.0) {
            return Err(Error::param("stations.base_load_kw", "must be > 0"));
        }
        let d = &self.demand;
        if !(d.prior_kwh >= 0.0) || d.window == 0 || !(d.alpha > 0.0 && d.alpha <= 1.0) {
            return Err(Error::param("demand", "need prior >= 0, window >= 1, 0 < alpha <= 1"));
        }
        self.producers.hps.validate()?;
        if !(self.producers.tanker_speed_kmh > 0.0) {
            return Err(Error::param("producers.tanker_speed_kmh", "must be > 0"));
        }
        if let Some(p) = &self.tou.prices {
            if p.len() != h.steps || p.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::param("tou.prices", "one nonnegative price per step"));
            }
        }
        self.costs.validate()?;
        if !(self.bilevel.epsilon > 0.0) || self.bilevel.max_iter == 0 {
            return Err(Error::param("bilevel", "need epsilon > 0 and max_iter >= 1"));
        }
        let net = self.network_spec();
        if let Some(p) = &self.stations.piles_per_station {
            if p.len() != net.fcs_nodes.len() {
                return Err(Error::param("stations.piles_per_station", "one count per station"));
            }
        }
        for (name, trace) in [
            ("weather.wind_trace", &self.weather.wind_trace),
            ("weather.radiation_trace", &self.weather.radiation_trace),
        ] {
            if let Some(t) = trace {
                if t.len() != net.hps_nodes.len() || t.iter().any(|row| row.len() != h.steps) {
                    return Err(Error::param(name, "one row per producer, one value per step"));
                }
            }
        }
        Ok(())
    }
}

/// A charging request entering the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub step: usize,
    pub ev: usize,
    /// Node where the request is raised.
    pub node: u32,
    pub soc: f64,
    pub with_passengers: bool,
    pub destination: Option<u32>,
}

/// A fully generated day: static data plus all seeded randomness.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub network: RoadNetwork,
    pub fleet: Vec<EvState>,
    pub fcs: Vec<FcsState>,
    pub hps: Vec<HpsState>,
    /// `wind[k][t]`, m/s.
    pub wind: Vec<Vec<f64>>,
    /// `radiation[k][t]`, W/m^2.
    pub radiation: Vec<Vec<f64>>,
    pub tou: Vec<f64>,
    /// Sorted by step, then EV id.
    pub requests: Vec<RequestEvent>,
}

impl Scenario {
    pub fn delta_h(&self) -> f64 {
        self.config.horizon.delta_h
    }

    pub fn steps(&self) -> usize {
        self.config.horizon.steps
    }

    pub fn steps_per_day(&self) -> usize {
        ((24.0 / self.delta_h()).round() as usize).max(1)
    }
}

/// Expected number of requests raised at `step` across the fleet, before
/// the minimum-gap rule thins them.
pub fn request_rate(cfg: &ScenarioConfig, step: usize) -> f64 {
    let r = &cfg.requests;
    let total: f64 = r.hourly_profile.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let hour = ((step as f64 * cfg.horizon.delta_h) % 24.0).floor() as usize;
    cfg.fleet.n_evs as f64 * r.per_ev_per_day * r.hourly_profile[hour.min(23)] / total * cfg.horizon.delta_h
}

fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Build a scenario from `cfg`, drawing all randomness from `seed`.
///
/// The request stream does not depend on pile counts, battery capacity,
/// EV speed or the penalty, so sweeps over those axes see identical requests.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let network = RoadNetwork::new(cfg.network_spec())?;
    let nodes: Vec<u32> = network.node_ids().to_vec();
    let steps = cfg.horizon.steps;
    let dt = cfg.horizon.delta_h;

    let mut rng = component_rng(seed, 1);
    let fleet: Vec<EvState> = (0..cfg.fleet.n_evs)
        .map(|id| {
            let node = *nodes.choose(&mut rng).expect("network has nodes");
            EvState {
                id,
                soc: 1.0,
                capacity_kwh: cfg.fleet.capacity_kwh,
                with_passengers: false,
                position: node,
                origin: node,
                destination: None,
                requesting: false,
                speed_kmh: cfg.fleet.speed_kmh,
            }
        })
        .collect();

    let mut rng = component_rng(seed, 2);
    let gap_steps = (cfg.requests.min_gap_h / dt).ceil() as usize;
    let mut next_allowed = vec![0usize; cfg.fleet.n_evs];
    let mut requests = Vec::new();
    for step in 0..steps {
        let lambda = request_rate(cfg, step);
        let count = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize
        } else {
            0
        };
        let eligible: Vec<usize> = (0..cfg.fleet.n_evs).filter(|&j| next_allowed[j] <= step).collect();
        let mut chosen: Vec<usize> = eligible
            .choose_multiple(&mut rng, count.min(eligible.len()))
            .copied()
            .collect();
        chosen.sort_unstable();
        for ev in chosen {
            let node = *nodes.choose(&mut rng).expect("network has nodes");
            let soc = if cfg.requests.soc_max > cfg.requests.soc_min {
                rng.gen_range(cfg.requests.soc_min..cfg.requests.soc_max)
            } else {
                cfg.requests.soc_min
            };
            let with_passengers = rng.gen_bool(cfg.requests.passenger_prob);
            let dest = *nodes.choose(&mut rng).expect("network has nodes");
            requests.push(RequestEvent {
                step,
                ev,
                node,
                soc,
                with_passengers,
                destination: with_passengers.then_some(dest),
            });
            next_allowed[ev] = step + gap_steps.max(1);
        }
    }

    let np = network.num_producers();
    let mut rng = component_rng(seed, 3);
    let w = &cfg.weather;
    let wind = match &w.wind_trace {
        Some(t) => t.clone(),
        None => {
            let noise = Normal::new(0.0, w.wind_noise.max(0.0))
                .map_err(|e| Error::param("weather.wind_noise", e.to_string()))?;
            (0..np)
                .map(|_| {
                    let mut ar = 0.0;
                    (0..steps)
                        .map(|t| {
                            let hour = t as f64 * dt;
                            ar = 0.8 * ar + noise.sample(&mut rng);
                            let cycle = w.wind_amplitude * (2.0 * std::f64::consts::PI * (hour - 3.0) / 24.0).cos();
                            (w.wind_mean + cycle + ar).max(0.0)
                        })
                        .collect()
                })
                .collect()
        }
    };
    let radiation = match &w.radiation_trace {
        Some(t) => t.clone(),
        None => (0..np)
            .map(|_| {
                (0..steps)
                    .map(|t| {
                        let hour = (t as f64 * dt) % 24.0;
                        let sun = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().max(0.0);
                        let cloud = 1.0 - w.cloud_noise * rng.gen::<f64>();
                        w.radiation_peak * sun * cloud.clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect(),
    };

    let tou = match &cfg.tou.prices {
        Some(p) => p.clone(),
        None => (0..steps).map(|t| cfg.tou.price_at_hour(t as f64 * dt)).collect(),
    };
    let fcs = (0..network.num_stations())
        .map(|i| {
            let piles = cfg
                .stations
                .piles_per_station
                .as_ref()
                .map_or(cfg.stations.piles, |p| p[i]);
            let mut s = FcsState::new(piles, cfg.stations.base_load_kw, cfg.costs.c_maint, tou[0]);
            s.demand_estimate = cfg.demand.prior_kwh;
            s
        })
        .collect();
    let hps = vec![cfg.producers.hps.clone(); np];
    Ok(Scenario {
        config: cfg.clone(),
        seed,
        network,
        fleet,
        fcs,
        hps,
        wind,
        radiation,
        tou,
        requests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.costs.gamma, 300.0);
        assert_eq!(cfg.stations.piles, 20);
        assert_eq!(cfg.producers.hps.wind.capacity_kw, 2200.0);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = ScenarioConfig::from_toml_str("[fleet]\nspeed_kmh = \"fast\"\n").unwrap_err();
        assert!(err.to_string().contains("fleet.speed_kmh"), "{err}");
        let err = ScenarioConfig::from_toml_str("[costs]\nc_wiat = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("costs"), "{err}");
        assert!(ScenarioConfig::from_toml_str("[horizon]\nsteps = 0\n").is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = ScenarioConfig::default();
        cfg.fleet.n_evs = 12;
        cfg.stations.piles_per_station = Some(vec![1, 2, 3, 4, 5]);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn builtin_network_is_connected() {
        let net = RoadNetwork::new(builtin_network()).unwrap();
        assert_eq!(net.node_ids().len(), 26);
        assert_eq!(net.num_stations(), 5);
        assert_eq!(net.num_producers(), 2);
    }

    #[test]
    fn zero_rate_means_no_requests() {
        let mut cfg = ScenarioConfig::default();
        cfg.requests.per_ev_per_day = 0.0;
        let sc = generate_scenario(&cfg, 1).unwrap();
        assert!(sc.requests.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&cfg, 42).unwrap();
        let b = generate_scenario(&cfg, 42).unwrap();
        assert_eq!(a.requests, b.requests);
        assert_eq!(a.wind, b.wind);
        assert_eq!(a.radiation, b.radiation);
        assert_eq!(a.fleet, b.fleet);
        let c = generate_scenario(&cfg, 43).unwrap();
        assert_ne!(a.requests, c.requests);
    }

    #[test]
    fn request_stream_ignores_swept_parameters() {
        let base = ScenarioConfig::default();
        let mut other = base.clone();
        other.stations.piles = 3;
        other.fleet.capacity_kwh = 50.0;
        other.fleet.speed_kmh = 30.0;
        other.costs.gamma = 800.0;
        let a = generate_scenario(&base, 5).unwrap();
        let b = generate_scenario(&other, 5).unwrap();
        assert_eq!(a.requests, b.requests);
    }

    #[test]
    fn requests_respect_minimum_gap() {
        let cfg = ScenarioConfig::default();
        let sc = generate_scenario(&cfg, 9).unwrap();
        let gap = (cfg.requests.min_gap_h / cfg.horizon.delta_h).ceil() as usize;
        let mut last = vec![None; cfg.fleet.n_evs];
        for r in &sc.requests {
            if let Some(prev) = last[r.ev] {
                assert!(r.step >= prev + gap);
            }
            last[r.ev] = Some(r.step);
            assert!((cfg.requests.soc_min..cfg.requests.soc_max).contains(&r.soc));
        }
    }

    #[test]
    fn tou_curve_shape() {
        let sc = generate_scenario(&ScenarioConfig::default(), 0).unwrap();
        assert_eq!(sc.tou.len(), 96);
        assert_eq!(sc.tou[0], 0.3);
        assert_eq!(sc.tou[36], 1.2);
        assert_eq!(sc.tou[60], 0.7);
    }
}
