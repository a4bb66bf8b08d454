//! System parameters, unit conversions and per-terminal photon budgets.
//!
//! Parameters enter through [`LinkConfig`], the on-disk JSON schema, which
//! uses the units an experimenter writes down (nm, mrad, dBm). A validated
//! [`SystemParams`] holds the same values in SI units together with the
//! derived symbol duration and mean photon counts per symbol.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(p_dbm: f64) -> Result<f64> {
    if !p_dbm.is_finite() {
        return Err(invalid("p_dbm", format!("must be finite, got {p_dbm}")));
    }
    Ok(1e-3 * 10f64.powf(p_dbm / 10.0))
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(p_watts: f64) -> Result<f64> {
    if !(p_watts.is_finite() && p_watts > 0.0) {
        return Err(invalid("p_watts", format!("must be positive, got {p_watts}")));
    }
    Ok(10.0 * (p_watts / 1e-3).log10())
}

/// Mean photon count per symbol carried by an optical power `power` (W):
/// `P T_s / (h_p ν)` with `ν = c / λ`.
pub fn photons_per_symbol(power: f64, params: &SystemParams) -> Result<f64> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(invalid("power", format!("must be non-negative, got {power}")));
    }
    Ok(power * params.symbol_duration * params.lambda / (params.planck * params.light_speed))
}

/// JSON configuration schema. Every key is optional; omitted keys take the
/// reference system defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub lambda_nm: f64,
    pub visibility_km: f64,
    pub cn2: f64,
    pub aperture_area_m2: f64,
    pub divergence_mrad: f64,
    pub symbol_rate_hz: f64,
    pub n_sp: f64,
    pub dof: i64,
    pub eta: f64,
    pub p_source_dbm: f64,
    pub p_relay1_dbm: f64,
    pub p_relay2_dbm: f64,
    pub p_bg_relay1_w: f64,
    pub p_bg_relay2_w: f64,
    pub p_bg_dest_w: f64,
    pub d_sd_m: f64,
    pub receiver_load_ohm: f64,
    pub receiver_temp_k: f64,
    pub planck: f64,
    pub boltzmann: f64,
    pub light_speed: f64,
    pub electron_charge: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            lambda_nm: 1550.0,
            visibility_km: 1.5,
            cn2: 1e-15,
            aperture_area_m2: PI * 0.1 * 0.1,
            divergence_mrad: 1.0,
            symbol_rate_hz: 2e9,
            n_sp: 1.0,
            dof: 100,
            eta: 0.8,
            p_source_dbm: 5.0,
            p_relay1_dbm: 5.0,
            p_relay2_dbm: 5.0,
            p_bg_relay1_w: 5e-9,
            p_bg_relay2_w: 5e-9,
            p_bg_dest_w: 5e-9,
            d_sd_m: 5000.0,
            receiver_load_ohm: 100.0,
            receiver_temp_k: 300.0,
            // Rounded value from the reference parameter table.
            planck: 6.6e-34,
            boltzmann: 1.38e-23,
            light_speed: 3e8,
            electron_charge: 1.602176634e-19,
        }
    }
}

/// Validated physical parameters in SI units, plus derived photon budgets.
///
/// Built only through [`SystemParams::from_config`] (or [`load_params`]);
/// the originating [`LinkConfig`] is retained so serialization round-trips
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    config: LinkConfig,

    /// Wavelength (m).
    pub lambda: f64,
    /// Visibility (km).
    pub visibility: f64,
    /// Refractive index structure constant (m^-2/3).
    pub cn2: f64,
    /// Receiver aperture area (m²).
    pub aperture_area: f64,
    /// Full divergence angle (rad).
    pub divergence: f64,
    pub planck: f64,
    pub boltzmann: f64,
    pub light_speed: f64,
    pub electron_charge: f64,
    /// Receiver load resistance (Ω).
    pub receiver_load: f64,
    /// Receiver equivalent temperature (K).
    pub receiver_temp: f64,
    /// Symbols per second.
    pub symbol_rate: f64,
    /// `1 / symbol_rate` (s).
    pub symbol_duration: f64,
    /// Spontaneous emission factor of both EDFAs.
    pub n_sp: f64,
    /// Optical degrees of freedom.
    pub dof: u32,
    /// Detector quantum efficiency.
    pub eta: f64,
    /// Transmit powers (W).
    pub p_source: f64,
    pub p_relay1: f64,
    pub p_relay2: f64,
    /// Filtered background powers (W).
    pub p_bg_relay1: f64,
    pub p_bg_relay2: f64,
    pub p_bg_dest: f64,
    /// Source-to-destination distance (m).
    pub d_sd: f64,

    /// Photon budgets per symbol: transmitted by source and relays, and
    /// background collected at relay 1, relay 2 and the destination.
    pub m_s: f64,
    pub m_r1: f64,
    pub m_r2: f64,
    pub m_br1: f64,
    pub m_br2: f64,
    pub m_bd: f64,
}

fn positive(field: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be non-negative and finite, got {v}")))
    }
}

impl SystemParams {
    pub fn from_config(config: &LinkConfig) -> Result<Self> {
        let c = config;
        let lambda_nm = positive("lambda_nm", c.lambda_nm)?;
        let symbol_rate = positive("symbol_rate_hz", c.symbol_rate_hz)?;
        if c.dof < 1 || c.dof > u32::MAX as i64 {
            return Err(invalid("dof", format!("must be an integer >= 1, got {}", c.dof)));
        }
        if !(c.eta.is_finite() && c.eta > 0.0 && c.eta <= 1.0) {
            return Err(invalid("eta", format!("must lie in (0, 1], got {}", c.eta)));
        }
        let p_source = dbm_to_watts(c.p_source_dbm).map_err(|_| invalid("p_source_dbm", "must be finite"))?;
        let p_relay1 = dbm_to_watts(c.p_relay1_dbm).map_err(|_| invalid("p_relay1_dbm", "must be finite"))?;
        let p_relay2 = dbm_to_watts(c.p_relay2_dbm).map_err(|_| invalid("p_relay2_dbm", "must be finite"))?;

        let mut p = SystemParams {
            config: c.clone(),
            lambda: lambda_nm / 1e9,
            visibility: positive("visibility_km", c.visibility_km)?,
            cn2: non_negative("cn2", c.cn2)?,
            aperture_area: positive("aperture_area_m2", c.aperture_area_m2)?,
            divergence: positive("divergence_mrad", c.divergence_mrad)? / 1e3,
            planck: positive("planck", c.planck)?,
            boltzmann: positive("boltzmann", c.boltzmann)?,
            light_speed: positive("light_speed", c.light_speed)?,
            electron_charge: positive("electron_charge", c.electron_charge)?,
            receiver_load: positive("receiver_load_ohm", c.receiver_load_ohm)?,
            receiver_temp: non_negative("receiver_temp_k", c.receiver_temp_k)?,
            symbol_rate,
            symbol_duration: 1.0 / symbol_rate,
            n_sp: non_negative("n_sp", c.n_sp)?,
            dof: c.dof as u32,
            eta: c.eta,
            p_source,
            p_relay1,
            p_relay2,
            p_bg_relay1: non_negative("p_bg_relay1_w", c.p_bg_relay1_w)?,
            p_bg_relay2: non_negative("p_bg_relay2_w", c.p_bg_relay2_w)?,
            p_bg_dest: non_negative("p_bg_dest_w", c.p_bg_dest_w)?,
            d_sd: positive("d_sd_m", c.d_sd_m)?,
            m_s: 0.0,
            m_r1: 0.0,
            m_r2: 0.0,
            m_br1: 0.0,
            m_br2: 0.0,
            m_bd: 0.0,
        };
        p.m_s = photons_per_symbol(p.p_source, &p)?;
        p.m_r1 = photons_per_symbol(p.p_relay1, &p)?;
        p.m_r2 = photons_per_symbol(p.p_relay2, &p)?;
        p.m_br1 = photons_per_symbol(p.p_bg_relay1, &p)?;
        p.m_br2 = photons_per_symbol(p.p_bg_relay2, &p)?;
        p.m_bd = photons_per_symbol(p.p_bg_dest, &p)?;
        Ok(p)
    }

    /// The configuration these parameters were built from.
    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    /// Serializes back to the JSON configuration schema.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("config serializes")
    }

    /// Same system with all three background powers set to `p_bg` watts.
    pub fn with_background_power(&self, p_bg: f64) -> Result<Self> {
        let mut c = self.config.clone();
        c.p_bg_relay1_w = p_bg;
        c.p_bg_relay2_w = p_bg;
        c.p_bg_dest_w = p_bg;
        Self::from_config(&c)
    }

    /// Frequency of the optical carrier (Hz).
    pub fn optical_frequency(&self) -> f64 {
        self.light_speed / self.lambda
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::from_config(&LinkConfig::default()).expect("default parameters are valid")
    }
}

/// Parses and validates a JSON configuration.
pub fn load_params(config_text: &str) -> Result<SystemParams> {
    let config: LinkConfig = serde_json::from_str(config_text)?;
    SystemParams::from_config(&config)
}
