//! Memristive integrate-and-fire (MIF) neuron and alpha synaptic current
//! dynamics.
//!
//! Everything in this module is a pure function of value-semantic inputs.
//! The MIF circuit is two metastable-switch memristors (M1 biased at
//! `e_rest`, M2 biased at `e_reset`) discharging a bit-line capacitor `c`:
//!
//! ```text
//! C dv/dt  = I - G1 (v - E_rest) - G2 (v - E_reset)
//! G_k      = x_k / R_on_k + (1 - x_k) / R_off_k
//! tau dx/dt = (1 - x) s((d - v_on)/(V_th k_v)) - x s((v_off - d)/(V_th k_v))
//! ```
//!
//! where `d` is the drop across the device (`v - E_rest` for M1,
//! `v - E_reset` for M2) and `s` is the logistic function.

mod config;
mod simulate;

pub use config::DeviceConfig;
pub use simulate::{
    default_schedule, parse_schedule, rk4_reference, rk4_reference_from, simulate_neuron,
    simulate_neuron_from, SpikeEvent, Traces,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Logistic arguments are clamped to this magnitude before exponentiation.
pub const EXP_CLAMP: f64 = 500.0;

const CONDUCTANCE_DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("state variable {0} outside [0, 1]")]
    Domain(f64),
    #[error("non-finite state at step {step}: v={v}, x1={x1}, x2={x2}")]
    NonFinite { step: usize, v: f64, x1: f64, x2: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("config: {0}")]
    Config(String),
}

/// Circuit constants of one MIF neuron. Defaults are the published circuit
/// parameters (1 kOhm / 100 kOhm devices, 110 mV / 5 mV switching voltages,
/// 1 ms state time constants, 100 pF bit-line capacitance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MifParams {
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
}

impl Default for MifParams {
    fn default() -> Self {
        Self {
            r_on1: 1e3,
            r_off1: 1e5,
            r_on2: 1e3,
            r_off2: 1e5,
            v_on1: 0.110,
            v_off1: 0.005,
            v_on2: 0.110,
            v_off2: 0.005,
            tau1: 1e-3,
            tau2: 1e-3,
            e_rest: 0.0,
            e_reset: 0.050,
            v_th: 0.025,
            k_v: 0.6,
            c: 100e-12,
        }
    }
}

/// The per-device subset of [`MifParams`] that enters the switching rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchParams {
    pub v_on: f64,
    pub v_off: f64,
    pub tau: f64,
    pub v_th: f64,
    pub k_v: f64,
}

impl SwitchParams {
    /// Slope scale `V_th * k_v` of both logistic switching terms.
    pub fn slope(&self) -> f64 {
        self.v_th * self.k_v
    }
}

impl MifParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let positive = [
            ("r_on1", self.r_on1),
            ("r_off1", self.r_off1),
            ("r_on2", self.r_on2),
            ("r_off2", self.r_off2),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("v_th", self.v_th),
            ("c", self.c),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(DeviceError::InvalidParams(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.r_on1 >= self.r_off1 || self.r_on2 >= self.r_off2 {
            return Err(DeviceError::InvalidParams(
                "r_on must be strictly below r_off for both devices".into(),
            ));
        }
        if !(self.k_v > 0.0 && self.k_v <= 1.0) {
            return Err(DeviceError::InvalidParams(format!(
                "k_v must lie in (0, 1], got {}",
                self.k_v
            )));
        }
        for (name, value) in [
            ("v_on1", self.v_on1),
            ("v_off1", self.v_off1),
            ("v_on2", self.v_on2),
            ("v_off2", self.v_off2),
            ("e_rest", self.e_rest),
            ("e_reset", self.e_reset),
        ] {
            if !value.is_finite() {
                return Err(DeviceError::InvalidParams(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    pub fn device1(&self) -> SwitchParams {
        SwitchParams {
            v_on: self.v_on1,
            v_off: self.v_off1,
            tau: self.tau1,
            v_th: self.v_th,
            k_v: self.k_v,
        }
    }

    pub fn device2(&self) -> SwitchParams {
        SwitchParams {
            v_on: self.v_on2,
            v_off: self.v_off2,
            tau: self.tau2,
            v_th: self.v_th,
            k_v: self.k_v,
        }
    }

    pub fn g1(&self, x1: f64) -> f64 {
        affine_conductance(x1, self.r_on1, self.r_off1)
    }

    pub fn g2(&self, x2: f64) -> f64 {
        affine_conductance(x2, self.r_on2, self.r_off2)
    }

    /// Membrane potential the capacitor relaxes to with conductances and
    /// input frozen.
    pub fn v_inf(&self, g1: f64, g2: f64, i_in: f64) -> f64 {
        (g1 * self.e_rest + g2 * self.e_reset + i_in) / (g1 + g2)
    }
}

/// Alpha synaptic current generator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    pub tau_syn: f64,
}

impl Default for AlphaParams {
    fn default() -> Self {
        Self { tau_syn: 0.64e-3 }
    }
}

impl AlphaParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.tau_syn.is_finite() && self.tau_syn > 0.0 {
            Ok(())
        } else {
            Err(DeviceError::InvalidParams(format!(
                "tau_syn must be > 0, got {}",
                self.tau_syn
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Explicit Euler on the membrane equation. Only stable when
    /// `dt * (G1 + G2) / C` stays well below 2.
    #[serde(alias = "forwardeuler")]
    Euler,
    /// Exact solution of the membrane equation with conductances and input
    /// held for the substep. Unconditionally stable.
    #[default]
    #[serde(alias = "exponentialeuler")]
    ExpEuler,
}

impl std::str::FromStr for Integrator {
    type Err = DeviceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "forwardeuler" | "forward-euler" => Ok(Integrator::Euler),
            "expeuler" | "exponentialeuler" | "exp-euler" => Ok(Integrator::ExpEuler),
            other => Err(DeviceError::Config(format!("unknown integrator `{other}`"))),
        }
    }
}

/// Outer time step of the simulation and how it is subdivided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub integrator: Integrator,
    pub substeps: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            integrator: Integrator::ExpEuler,
            substeps: 10,
        }
    }
}

impl StepConfig {
    pub fn new(dt: f64, integrator: Integrator, substeps: usize) -> Self {
        Self {
            dt,
            integrator,
            substeps,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DeviceError::InvalidParams(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.substeps == 0 {
            return Err(DeviceError::InvalidParams("substeps must be >= 1".into()));
        }
        Ok(())
    }

    /// Duration of one inner step.
    pub fn h(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    /// A single-substep config whose `dt` is this config's inner step.
    pub fn inner(&self) -> StepConfig {
        StepConfig {
            dt: self.h(),
            integrator: self.integrator,
            substeps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MifState {
    pub v: f64,
    pub x1: f64,
    pub x2: f64,
}

impl MifState {
    /// Discharged capacitor at `e_rest` with both devices fully off.
    pub fn initial(params: &MifParams) -> Self {
        Self {
            v: params.e_rest,
            x1: 0.0,
            x2: 0.0,
        }
    }

    /// The no-input fixed point: every state rate is zero and `v = v_inf`.
    pub fn resting(params: &MifParams) -> Self {
        let x_eq = |drop: f64, sw: &SwitchParams| {
            let s = sw.slope();
            let on = logistic((drop - sw.v_on) / s);
            let off = logistic((sw.v_off - drop) / s);
            on / (on + off)
        };
        let residual = |v: f64| {
            let x1 = x_eq(v - params.e_rest, &params.device1());
            let x2 = x_eq(v - params.e_reset, &params.device2());
            params.v_inf(params.g1(x1), params.g2(x2), 0.0) - v
        };
        // v_inf is a convex combination of the two biases, so the fixed point
        // is bracketed by them.
        let (mut lo, mut hi) = if params.e_rest <= params.e_reset {
            (params.e_rest, params.e_reset)
        } else {
            (params.e_reset, params.e_rest)
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        Self {
            v,
            x1: x_eq(v - params.e_rest, &params.device1()),
            x2: x_eq(v - params.e_reset, &params.device2()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.x1.is_finite() && self.x2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlphaState {
    pub i: f64,
    pub a: f64,
}

/// `1 / (1 + exp(-z))` with `z` clamped to `[-500, 500]`.
pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-EXP_CLAMP, EXP_CLAMP)).exp())
}

/// Device conductance `x / r_on + (1 - x) / r_off`.
pub fn conductance(x: f64, r_on: f64, r_off: f64) -> Result<f64, DeviceError> {
    if !(-CONDUCTANCE_DOMAIN_TOL..=1.0 + CONDUCTANCE_DOMAIN_TOL).contains(&x) {
        return Err(DeviceError::Domain(x));
    }
    Ok(affine_conductance(x, r_on, r_off))
}

#[inline]
fn affine_conductance(x: f64, r_on: f64, r_off: f64) -> f64 {
    x / r_on + (1.0 - x) / r_off
}

/// Rate of change of a device state variable under a voltage drop `v_drop`.
/// Bounded in magnitude by `1 / tau`.
pub fn state_rate(x: f64, v_drop: f64, sw: &SwitchParams) -> f64 {
    let s = sw.slope();
    let on = logistic((v_drop - sw.v_on) / s);
    let off = logistic((sw.v_off - v_drop) / s);
    ((1.0 - x) * on - x * off) / sw.tau
}

/// Advance a MIF neuron by one outer step of `cfg.dt`, holding `i_in` for
/// all `cfg.substeps` inner steps.
pub fn mif_step(
    state: MifState,
    params: &MifParams,
    i_in: f64,
    cfg: &StepConfig,
) -> Result<MifState, DeviceError> {
    let h = cfg.h();
    let sw1 = params.device1();
    let sw2 = params.device2();
    let MifState {
        mut v,
        mut x1,
        mut x2,
    } = state;
    for _ in 0..cfg.substeps {
        let g1 = params.g1(x1);
        let g2 = params.g2(x2);
        let r1 = state_rate(x1, v - params.e_rest, &sw1);
        let r2 = state_rate(x2, v - params.e_reset, &sw2);
        v = match cfg.integrator {
            Integrator::Euler => {
                v + (h / params.c) * (i_in - g1 * (v - params.e_rest) - g2 * (v - params.e_reset))
            }
            Integrator::ExpEuler => {
                let v_inf = params.v_inf(g1, g2, i_in);
                v_inf + (v - v_inf) * (-(h / params.c) * (g1 + g2)).exp()
            }
        };
        x1 = (x1 + h * r1).clamp(0.0, 1.0);
        x2 = (x2 + h * r2).clamp(0.0, 1.0);
    }
    let next = MifState { v, x1, x2 };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DeviceError::NonFinite {
            step: 0,
            v,
            x1,
            x2,
        })
    }
}

/// Advance the alpha current generator by one outer step. The impulse
/// `spike_weight` lands on `a` during the first substep, after its decay.
pub fn alpha_step(
    state: AlphaState,
    params: &AlphaParams,
    spike_weight: f64,
    cfg: &StepConfig,
) -> AlphaState {
    let k = cfg.h() / params.tau_syn;
    let AlphaState { mut i, mut a } = state;
    for sub in 0..cfg.substeps {
        a += k * (-a);
        if sub == 0 {
            a += spike_weight;
        }
        i += k * (a - i);
    }
    AlphaState { i, a }
}
