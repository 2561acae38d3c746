// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// Where a PPA triple came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PpaSource {
    /// Parsed from a real synthesis report.
    #[default]
    Real,
    /// Placeholder from the stub synthesis backend.
    Stub,
    /// Estimated by the analytical cost model.
    Analytical,
}

/// Power (mW), clock frequency (MHz) and area (mm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ppa {
    pub power_mw: f64,
    pub clk_mhz: f64,
    pub area_mm2: f64,
    #[serde(default)]
    pub source: PpaSource,
}

impl Ppa {
    pub fn new(power_mw: f64, clk_mhz: f64, area_mm2: f64, source: PpaSource) -> Self {
        Self {
            power_mw,
            clk_mhz,
            area_mm2,
            source,
        }
    }

    /// Checks the finite / sign constraints. Zero power is only accepted
    /// from the stub backend.
    pub fn check(&self) -> Result<(), String> {
        if !(self.power_mw.is_finite() && self.clk_mhz.is_finite() && self.area_mm2.is_finite()) {
            return Err("PPA components must be finite".into());
        }
        if self.power_mw < 0.0 {
            return Err(format!("negative power {}", self.power_mw));
        }
        if self.power_mw == 0.0 && self.source != PpaSource::Stub {
            return Err("zero power is only allowed for stub backends".into());
        }
        if self.clk_mhz <= 0.0 {
            return Err(format!(
                "clock frequency must be positive, got {}",
                self.clk_mhz
            ));
        }
        if self.area_mm2 < 0.0 {
            return Err(format!("negative area {}", self.area_mm2));
        }
        Ok(())
    }

    /// Clock period in ns.
    pub fn period_ns(&self) -> f64 {
        1000.0 / self.clk_mhz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_power_only_for_stub() {
        assert!(Ppa::new(0.0, 100.0, 1.0, PpaSource::Stub).check().is_ok());
        assert!(Ppa::new(0.0, 100.0, 1.0, PpaSource::Real).check().is_err());
        assert!(Ppa::new(1.0, 0.0, 1.0, PpaSource::Real).check().is_err());
        assert!(Ppa::new(f64::NAN, 1.0, 1.0, PpaSource::Real)
            .check()
            .is_err());
    }
}
