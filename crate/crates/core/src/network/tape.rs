use crate::autodiff::{AutodiffError, Shape, Tape, Var};
use crate::device::{Integrator, MifParams, MifState, StepConfig, SwitchParams};

/// A MIF layer's state as tape variables, one vector entry per neuron.
#[derive(Debug, Clone, Copy)]
pub struct TapeMifState {
    pub v: Var,
    pub x1: Var,
    pub x2: Var,
}

impl TapeMifState {
    pub fn constant(tape: &mut Tape, states: &[MifState]) -> Result<Self, AutodiffError> {
        let n = states.len();
        let col = |f: fn(&MifState) -> f64| states.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            v: tape.constant(col(|s| s.v), Shape::Vector(n))?,
            x1: tape.constant(col(|s| s.x1), Shape::Vector(n))?,
            x2: tape.constant(col(|s| s.x2), Shape::Vector(n))?,
        })
    }
}

fn conductance(tape: &mut Tape, x: Var, r_on: f64, r_off: f64) -> Result<Var, AutodiffError> {
    let on = tape.scale(x, 1.0 / r_on)?;
    let off = tape.affine(x, -1.0 / r_off, 1.0 / r_off)?;
    tape.add(on, off)
}

fn rate(tape: &mut Tape, x: Var, v: Var, bias: f64, sw: &SwitchParams) -> Result<Var, AutodiffError> {
    let s = sw.slope();
    // (drop - v_on)/s and (v_off - drop)/s with drop = v - bias
    let z_on = tape.affine(v, 1.0 / s, -(bias + sw.v_on) / s)?;
    let z_off = tape.affine(v, -1.0 / s, (sw.v_off + bias) / s)?;
    let on = tape.logistic(z_on)?;
    let off = tape.logistic(z_off)?;
    let one_minus_x = tape.affine(x, -1.0, 1.0)?;
    let up = tape.mul(one_minus_x, on)?;
    let down = tape.mul(x, off)?;
    let net = tape.sub(up, down)?;
    tape.scale(net, 1.0 / sw.tau)
}

/// [`crate::device::mif_step`] for a whole layer, recorded on the tape.
pub fn mif_step_tape(
    tape: &mut Tape,
    state: &TapeMifState,
    i_in: Var,
    p: &MifParams,
    cfg: &StepConfig,
) -> Result<TapeMifState, AutodiffError> {
    let h = cfg.h();
    let sw1 = p.device1();
    let sw2 = p.device2();
    let TapeMifState { mut v, mut x1, mut x2 } = *state;
    for _ in 0..cfg.substeps {
        let g1 = conductance(tape, x1, p.r_on1, p.r_off1)?;
        let g2 = conductance(tape, x2, p.r_on2, p.r_off2)?;
        let r1 = rate(tape, x1, v, p.e_rest, &sw1)?;
        let r2 = rate(tape, x2, v, p.e_reset, &sw2)?;
        v = match cfg.integrator {
            Integrator::ExpEuler => {
                let g_sum = tape.add(g1, g2)?;
                let pull_rest = tape.scale(g1, p.e_rest)?;
                let pull_reset = tape.scale(g2, p.e_reset)?;
                let pulls = tape.add(pull_rest, pull_reset)?;
                let num = tape.add(pulls, i_in)?;
                let v_inf = tape.div(num, g_sum)?;
                let rate = tape.scale(g_sum, -h / p.c)?;
                let decay = tape.exp(rate)?;
                let gap = tape.sub(v, v_inf)?;
                let relaxed = tape.mul(gap, decay)?;
                tape.add(v_inf, relaxed)?
            }
            Integrator::Euler => {
                let d1 = tape.affine(v, 1.0, -p.e_rest)?;
                let d2 = tape.affine(v, 1.0, -p.e_reset)?;
                let leak1 = tape.mul(g1, d1)?;
                let leak2 = tape.mul(g2, d2)?;
                let net = tape.sub(i_in, leak1)?;
                let net = tape.sub(net, leak2)?;
                let dv = tape.scale(net, h / p.c)?;
                tape.add(v, dv)?
            }
        };
        let dx1 = tape.scale(r1, h)?;
        let dx2 = tape.scale(r2, h)?;
        let x1_next = tape.add(x1, dx1)?;
        let x2_next = tape.add(x2, dx2)?;
        x1 = tape.clamp(x1_next, 0.0, 1.0)?;
        x2 = tape.clamp(x2_next, 0.0, 1.0)?;
    }
    Ok(TapeMifState { v, x1, x2 })
}
