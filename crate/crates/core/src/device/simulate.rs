//! Single-neuron simulation driven by an alpha current, plus a classic RK4
//! integration of the continuous-time system used as a verification oracle.

use serde::{Deserialize, Serialize};

use super::{
    alpha_step, mif_step, state_rate, AlphaParams, AlphaState, DeviceError, MifParams, MifState,
    StepConfig,
};

/// An input spike of synaptic weight `weight` (A) arriving at outer step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub step: usize,
    pub weight: f64,
}

impl SpikeEvent {
    pub fn new(step: usize, weight: f64) -> Self {
        Self { step, weight }
    }
}

/// One 3e-5 A impulse at step 100: a single action potential from rest.
pub fn default_schedule() -> Vec<SpikeEvent> {
    vec![SpikeEvent::new(100, 3e-5)]
}

/// Parse `"step:weight,step:weight,..."`; an empty string is no input.
pub fn parse_schedule(s: &str) -> Result<Vec<SpikeEvent>, DeviceError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let bad = || DeviceError::Config(format!("bad spike `{p}`, expected step:weight"));
            let (step, weight) = p.split_once(':').ok_or_else(bad)?;
            let step = step.trim().parse().map_err(|_| bad())?;
            let weight: f64 = weight.trim().parse().map_err(|_| bad())?;
            if !weight.is_finite() {
                return Err(bad());
            }
            Ok(SpikeEvent::new(step, weight))
        })
        .collect()
}

/// Time series sampled at the end of every outer step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Traces {
    pub v: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub i: Vec<f64>,
}

impl Traces {
    fn with_capacity(n: usize) -> Self {
        Self {
            v: Vec::with_capacity(n),
            x1: Vec::with_capacity(n),
            x2: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, s: &MifState, i: f64) {
        self.v.push(s.v);
        self.x1.push(s.x1);
        self.x2.push(s.x2);
        self.i.push(i);
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

fn weights_per_step(schedule: &[SpikeEvent], steps: usize) -> Vec<f64> {
    let mut w = vec![0.0; steps];
    for ev in schedule {
        if ev.step < steps {
            w[ev.step] += ev.weight;
        }
    }
    w
}

fn check_inputs(
    params: &MifParams,
    alpha: &AlphaParams,
    steps: usize,
    cfg: &StepConfig,
) -> Result<(), DeviceError> {
    if steps == 0 {
        return Err(DeviceError::InvalidParams("steps must be >= 1".into()));
    }
    params.validate()?;
    alpha.validate()?;
    cfg.validate()
}

/// Simulate one MIF neuron fed by an alpha synapse, starting from the
/// resting fixed point.
///
/// The synapse and the membrane are advanced together at the inner step
/// `cfg.dt / cfg.substeps`, so the membrane sees the current change within
/// an outer step.
pub fn simulate_neuron(
    params: &MifParams,
    alpha: &AlphaParams,
    schedule: &[SpikeEvent],
    steps: usize,
    cfg: &StepConfig,
) -> Result<Traces, DeviceError> {
    simulate_neuron_from(MifState::resting(params), params, alpha, schedule, steps, cfg)
}

pub fn simulate_neuron_from(
    initial: MifState,
    params: &MifParams,
    alpha: &AlphaParams,
    schedule: &[SpikeEvent],
    steps: usize,
    cfg: &StepConfig,
) -> Result<Traces, DeviceError> {
    check_inputs(params, alpha, steps, cfg)?;
    let weights = weights_per_step(schedule, steps);
    let inner = cfg.inner();
    let mut traces = Traces::with_capacity(steps);
    let mut syn = AlphaState::default();
    let mut neuron = initial;
    for (t, &w) in weights.iter().enumerate() {
        for sub in 0..cfg.substeps {
            syn = alpha_step(syn, alpha, if sub == 0 { w } else { 0.0 }, &inner);
            neuron = mif_step(neuron, params, syn.i, &inner).map_err(|e| match e {
                DeviceError::NonFinite { v, x1, x2, .. } => DeviceError::NonFinite { step: t, v, x1, x2 },
                other => other,
            })?;
        }
        traces.push(&neuron, syn.i);
    }
    Ok(traces)
}

/// State vector `[v, x1, x2, a, i]` of the continuous system.
type Y = [f64; 5];

fn derivative(y: &Y, p: &MifParams, alpha: &AlphaParams) -> Y {
    let [v, x1, x2, a, i] = *y;
    let g1 = p.g1(x1);
    let g2 = p.g2(x2);
    [
        (i - g1 * (v - p.e_rest) - g2 * (v - p.e_reset)) / p.c,
        state_rate(x1, v - p.e_rest, &p.device1()),
        state_rate(x2, v - p.e_reset, &p.device2()),
        -a / alpha.tau_syn,
        (a - i) / alpha.tau_syn,
    ]
}

fn axpy(y: &Y, h: f64, k: &Y) -> Y {
    std::array::from_fn(|n| y[n] + h * k[n])
}

/// Classic fourth-order Runge-Kutta integration of the continuous MIF and
/// alpha equations at `dt_inner`, sampled on the outer grid of `cfg.dt`.
/// Impulses add their weight to `a` at the start of their outer step.
/// Verification only; nothing here is differentiated.
pub fn rk4_reference(
    params: &MifParams,
    alpha: &AlphaParams,
    schedule: &[SpikeEvent],
    steps: usize,
    cfg: &StepConfig,
    dt_inner: f64,
) -> Result<Traces, DeviceError> {
    rk4_reference_from(MifState::resting(params), params, alpha, schedule, steps, cfg, dt_inner)
}

pub fn rk4_reference_from(
    initial: MifState,
    params: &MifParams,
    alpha: &AlphaParams,
    schedule: &[SpikeEvent],
    steps: usize,
    cfg: &StepConfig,
    dt_inner: f64,
) -> Result<Traces, DeviceError> {
    check_inputs(params, alpha, steps, cfg)?;
    if !(dt_inner > 0.0 && dt_inner <= cfg.dt * (1.0 + 1e-12)) {
        return Err(DeviceError::InvalidParams(format!(
            "dt_inner must lie in (0, dt], got {dt_inner}"
        )));
    }
    let n_inner = (cfg.dt / dt_inner - 1e-9).ceil().max(1.0) as usize;
    let h = cfg.dt / n_inner as f64;
    let weights = weights_per_step(schedule, steps);
    let mut y: Y = [initial.v, initial.x1, initial.x2, 0.0, 0.0];
    let mut traces = Traces::with_capacity(steps);
    for (t, &w) in weights.iter().enumerate() {
        y[3] += w;
        for _ in 0..n_inner {
            let k1 = derivative(&y, params, alpha);
            let k2 = derivative(&axpy(&y, 0.5 * h, &k1), params, alpha);
            let k3 = derivative(&axpy(&y, 0.5 * h, &k2), params, alpha);
            let k4 = derivative(&axpy(&y, h, &k3), params, alpha);
            for n in 0..5 {
                y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
            }
            y[1] = y[1].clamp(0.0, 1.0);
            y[2] = y[2].clamp(0.0, 1.0);
        }
        let state = MifState {
            v: y[0],
            x1: y[1],
            x2: y[2],
        };
        if !(state.is_finite() && y[3].is_finite() && y[4].is_finite()) {
            return Err(DeviceError::NonFinite {
                step: t,
                v: y[0],
                x1: y[1],
                x2: y[2],
            });
        }
        traces.push(&state, y[4]);
    }
    Ok(traces)
}
