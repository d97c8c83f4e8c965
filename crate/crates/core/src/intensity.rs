//! Grid carbon intensity factors.
//!
//! Only entries with a documented source are bundled (see
//! `docs/intensity.md`); anything else has to be given as a number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_REGION: &str = "US";

/// Bundled factors in kg CO2e per kWh.
pub const REGIONS: &[(&str, f64)] = &[("US", 0.65)];

#[derive(Debug, Error, PartialEq)]
pub enum IntensityError {
    #[error("unknown region `{region}` (available: {available}; or use custom:<kg per kWh>)")]
    UnknownRegion { region: String, available: String },
    #[error("intensity factor must be a positive number of kg CO2e per kWh, got {0}")]
    InvalidFactor(String),
}

/// CO2e mass per unit of electricity. The factor is in kg/kWh, which is
/// numerically the same as g/Wh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensity {
    pub region: String,
    pub factor: f64,
}

impl CarbonIntensity {
    pub fn new(region: impl Into<String>, factor: f64) -> Result<Self, IntensityError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(IntensityError::InvalidFactor(factor.to_string()));
        }
        Ok(Self {
            region: region.into(),
            factor,
        })
    }

    /// Grams of CO2e per watt-hour.
    pub fn grams_per_wh(&self) -> f64 {
        self.factor
    }
}

impl Default for CarbonIntensity {
    fn default() -> Self {
        lookup_intensity(DEFAULT_REGION).expect("default region is bundled")
    }
}

/// Resolves a region name, or a `custom:<factor>` override.
pub fn lookup_intensity(region: &str) -> Result<CarbonIntensity, IntensityError> {
    let region = region.trim();
    if let Some(raw) = region.strip_prefix("custom:") {
        let factor: f64 = raw
            .trim()
            .parse()
            .map_err(|_| IntensityError::InvalidFactor(raw.to_string()))?;
        return CarbonIntensity::new("custom", factor);
    }
    REGIONS
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(region))
        .map(|&(name, factor)| CarbonIntensity {
            region: name.to_string(),
            factor,
        })
        .ok_or_else(|| IntensityError::UnknownRegion {
            region: region.to_string(),
            available: REGIONS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        })
}
