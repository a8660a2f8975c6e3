use std::path::Path;

use serde::Deserialize;

use super::{AlphaParams, DeviceError, Integrator, MifParams, StepConfig};

/// Flat key-value view of all device-level parameters, as read from a TOML
/// file. Missing keys fall back to defaults; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub r_on1: f64,
    pub r_off1: f64,
    pub r_on2: f64,
    pub r_off2: f64,
    pub v_on1: f64,
    pub v_off1: f64,
    pub v_on2: f64,
    pub v_off2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub e_rest: f64,
    pub e_reset: f64,
    pub v_th: f64,
    pub k_v: f64,
    pub c: f64,
    pub tau_syn: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub substeps: usize,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self::from_parts(
            &MifParams::default(),
            &AlphaParams::default(),
            &StepConfig::default(),
        )
    }
}

impl DeviceConfig {
    pub fn from_parts(p: &MifParams, alpha: &AlphaParams, step: &StepConfig) -> Self {
        Self {
            r_on1: p.r_on1,
            r_off1: p.r_off1,
            r_on2: p.r_on2,
            r_off2: p.r_off2,
            v_on1: p.v_on1,
            v_off1: p.v_off1,
            v_on2: p.v_on2,
            v_off2: p.v_off2,
            tau1: p.tau1,
            tau2: p.tau2,
            e_rest: p.e_rest,
            e_reset: p.e_reset,
            v_th: p.v_th,
            k_v: p.k_v,
            c: p.c,
            tau_syn: alpha.tau_syn,
            dt: step.dt,
            integrator: step.integrator,
            substeps: step.substeps,
        }
    }

    pub fn parse(text: &str) -> Result<Self, DeviceError> {
        let cfg: DeviceConfig =
            toml::from_str(text).map_err(|e| DeviceError::Config(e.to_string()))?;
        cfg.mif().validate()?;
        cfg.alpha().validate()?;
        cfg.step().validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeviceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DeviceError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn mif(&self) -> MifParams {
        MifParams {
            r_on1: self.r_on1,
            r_off1: self.r_off1,
            r_on2: self.r_on2,
            r_off2: self.r_off2,
            v_on1: self.v_on1,
            v_off1: self.v_off1,
            v_on2: self.v_on2,
            v_off2: self.v_off2,
            tau1: self.tau1,
            tau2: self.tau2,
            e_rest: self.e_rest,
            e_reset: self.e_reset,
            v_th: self.v_th,
            k_v: self.k_v,
            c: self.c,
        }
    }

    pub fn alpha(&self) -> AlphaParams {
        AlphaParams {
            tau_syn: self.tau_syn,
        }
    }

    pub fn step(&self) -> StepConfig {
        StepConfig::new(self.dt, self.integrator, self.substeps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = DeviceConfig::parse("").unwrap();
        assert_eq!(cfg.mif(), MifParams::default());
        assert_eq!(cfg.alpha(), AlphaParams::default());
        assert_eq!(cfg.step(), StepConfig::default());
    }

    #[test]
    fn overrides_are_applied() {
        let cfg = DeviceConfig::parse(
            "tau1 = 2e-3\nc = 50e-12\ntau_syn = 1e-3\nintegrator = \"euler\"\nsubsteps = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.mif().tau1, 2e-3);
        assert_eq!(cfg.mif().tau2, 1e-3);
        assert_eq!(cfg.mif().c, 50e-12);
        assert_eq!(cfg.alpha().tau_syn, 1e-3);
        assert_eq!(cfg.step().integrator, Integrator::Euler);
        assert_eq!(cfg.step().substeps, 4);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = DeviceConfig::parse("r_on3 = 1.0\n").unwrap_err();
        assert!(matches!(err, DeviceError::Config(ref m) if m.contains("r_on3")), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(DeviceConfig::parse("r_on1 = 1e6\n").is_err());
        assert!(DeviceConfig::parse("k_v = 0.0\n").is_err());
        assert!(DeviceConfig::parse("substeps = 0\n").is_err());
    }
}
