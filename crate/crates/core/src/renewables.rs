//! Wind and PV generation feeding an electrolyzer, and the hydrogen power
//! that each production station can make available for dispatch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wind turbine power curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindParams {
    pub n_turbines: u32,
    /// Rated capacity of one turbine, kW.
    pub capacity_kw: f64,
    /// m/s
    pub rated_speed: f64,
    pub cut_in_speed: f64,
    pub cut_out_speed: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            n_turbines: 1,
            capacity_kw: 2200.0,
            rated_speed: 12.0,
            cut_in_speed: 2.5,
            cut_out_speed: 22.0,
        }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kw > 0.0) {
            return Err(Error::param("wind.capacity_kw", "must be > 0"));
        }
        if !(0.0 < self.cut_in_speed && self.cut_in_speed < self.rated_speed && self.rated_speed < self.cut_out_speed) {
            return Err(Error::param(
                "wind",
                "requires 0 < cut_in_speed < rated_speed < cut_out_speed",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvParams {
    pub capacity_kw: f64,
    /// Inverter efficiency in (0, 1].
    pub inverter_eff: f64,
    /// Standard radiation intensity, W.
    pub rated_radiation: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            capacity_kw: 1000.0,
            inverter_eff: 0.88,
            rated_radiation: 800.0,
        }
    }
}

impl PvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kw > 0.0 && self.rated_radiation > 0.0) {
            return Err(Error::param("pv", "capacity and rated radiation must be > 0"));
        }
        if !(self.inverter_eff > 0.0 && self.inverter_eff <= 1.0) {
            return Err(Error::param("pv.inverter_eff", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Electrolyzer, storage and fuel-cell constants.
///
/// Units are SI throughout (`pressure` in Pa). The electrolysis -> storage ->
/// fuel-cell chain is applied exactly as the stoichiometric formulas are
/// written, which collapses to one linear coefficient from available power to
/// hydrogen power (see [`HydrogenChainParams::coefficient`]). The chain is not
/// dimensionally consistent, so the coefficient is a modelling convention; it
/// is tuned in practice through `n_electrolyzers`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydrogenChainParams {
    pub faraday_eff: f64,
    pub n_electrolyzers: u32,
    /// Electrolyzer voltage, V.
    pub electrolyzer_voltage: f64,
    /// Faraday constant, C/mol.
    pub faraday: f64,
    /// Universal gas constant, J/(mol K).
    pub gas_constant: f64,
    /// Cylinder temperature, K.
    pub temperature: f64,
    /// Cylinder pressure, Pa.
    pub pressure: f64,
    /// Fuel-cell voltage, V.
    pub fuel_cell_voltage: f64,
    /// Station base load, kW.
    pub base_load_kw: f64,
}

impl Default for HydrogenChainParams {
    fn default() -> Self {
        Self {
            faraday_eff: 0.98,
            n_electrolyzers: 8,
            electrolyzer_voltage: 60.0,
            faraday: 96485.34,
            gas_constant: 8.314,
            temperature: 300.0,
            pressure: 15.0e6,
            fuel_cell_voltage: 400.0,
            base_load_kw: 400.0,
        }
    }
}

impl HydrogenChainParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("faraday_eff", self.faraday_eff),
            ("n_electrolyzers", self.n_electrolyzers as f64),
            ("electrolyzer_voltage", self.electrolyzer_voltage),
            ("faraday", self.faraday),
            ("gas_constant", self.gas_constant),
            ("temperature", self.temperature),
            ("pressure", self.pressure),
            ("fuel_cell_voltage", self.fuel_cell_voltage),
            ("base_load_kw", self.base_load_kw),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::param(format!("chain.{name}"), "must be > 0"));
            }
        }
        if self.faraday_eff > 1.0 {
            return Err(Error::param("chain.faraday_eff", "must be <= 1"));
        }
        Ok(())
    }

    /// Moles of hydrogen per kW of available power.
    pub fn moles(&self, available_kw: f64) -> f64 {
        self.faraday_eff * available_kw * self.n_electrolyzers as f64 / (2.0 * self.electrolyzer_voltage * self.faraday)
    }

    /// Stored gas volume for `moles` at cylinder conditions.
    pub fn volume(&self, moles: f64) -> f64 {
        moles * self.gas_constant * self.temperature / self.pressure
    }

    /// Fuel-cell current from stored volume.
    pub fn fuel_cell_current(&self, volume: f64) -> f64 {
        2.0 * volume * self.faraday
    }

    /// Linear factor mapping available power to hydrogen power.
    pub fn coefficient(&self) -> f64 {
        let n = self.faraday_eff * self.n_electrolyzers as f64 / (2.0 * self.electrolyzer_voltage * self.faraday);
        n * (self.gas_constant * self.temperature / self.pressure) * (2.0 * self.faraday * self.fuel_cell_voltage)
    }
}

/// Static parameters of one hydrogen production station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpsState {
    pub wind: WindParams,
    pub pv: PvParams,
    pub chain: HydrogenChainParams,
    /// CNY/kW
    pub maint_wind: f64,
    pub maint_pv: f64,
    /// Tanker delivery cost, CNY/kW dispatched.
    pub delivery: f64,
    /// Hydrogen power available this step, kW (recomputed each step).
    pub p_hydrogen: f64,
}

impl Default for HpsState {
    fn default() -> Self {
        Self {
            wind: WindParams::default(),
            pv: PvParams::default(),
            chain: HydrogenChainParams::default(),
            maint_wind: 0.018,
            maint_pv: 0.018,
            delivery: 0.04,
            p_hydrogen: 0.0,
        }
    }
}

impl HpsState {
    pub fn validate(&self) -> Result<()> {
        self.wind.validate()?;
        self.pv.validate()?;
        self.chain.validate()?;
        for (name, v) in [
            ("maint_wind", self.maint_wind),
            ("maint_pv", self.maint_pv),
            ("delivery", self.delivery),
        ] {
            if !(v >= 0.0) {
                return Err(Error::param(format!("hps.{name}"), "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Generation and hydrogen output for one step of weather.
    pub fn step_output(&self, wind_speed: f64, radiation: f64) -> HpsOutput {
        let wind_kw = wind_power(wind_speed, &self.wind);
        let pv_kw = pv_power(radiation, &self.pv);
        HpsOutput {
            wind_kw,
            pv_kw,
            hydrogen_kw: hydrogen_from_available(wind_kw + pv_kw, &self.chain),
        }
    }
}

/// Per-step generation summary of a production station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpsOutput {
    pub wind_kw: f64,
    pub pv_kw: f64,
    pub hydrogen_kw: f64,
}

/// Turbine power curve: cubic between cut-in and rated, flat up to cut-out,
/// zero elsewhere. Note the curve jumps from 0 at cut-in.
pub fn wind_power(v: f64, p: &WindParams) -> f64 {
    let full = p.n_turbines as f64 * p.capacity_kw;
    if v >= p.rated_speed && v <= p.cut_out_speed {
        full
    } else if v >= p.cut_in_speed && v <= p.rated_speed {
        full * (v / p.rated_speed).powi(3)
    } else {
        0.0
    }
}

pub fn pv_power(g: f64, p: &PvParams) -> f64 {
    p.capacity_kw * p.inverter_eff * (g / p.rated_radiation)
}

/// Hydrogen power from total renewable generation, after the station base
/// load. Available power is clamped at zero.
fn hydrogen_from_available(generation_kw: f64, chain: &HydrogenChainParams) -> f64 {
    let available = (generation_kw - chain.base_load_kw).max(0.0);
    let moles = chain.moles(available);
    let volume = chain.volume(moles);
    let current = chain.fuel_cell_current(volume);
    current * chain.fuel_cell_voltage
}

/// Hydrogen power (kW) available at a production station under the given weather.
pub fn hydrogen_power(wind_speed: f64, radiation: f64, hps: &HpsState) -> f64 {
    hps.step_output(wind_speed, radiation).hydrogen_kw
}

/// Maintenance of generation plus tanker delivery for one dispatch row.
pub fn hps_cost(hps: &HpsState, wind_kw: f64, pv_kw: f64, dispatched_row: &[f64]) -> f64 {
    hps.maint_wind * wind_kw + hps.maint_pv * pv_kw + hps.delivery * dispatched_row.iter().sum::<f64>()
}
