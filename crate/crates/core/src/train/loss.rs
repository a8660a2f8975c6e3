use crate::autodiff::{log_softmax_values, AutodiffError, Tape, Var};

/// `sum_t -log softmax(beta * v_out[t])[target]`.
pub fn loss_nll_membrane(v_out: &[Vec<f64>], target: usize, beta: f64) -> Option<f64> {
    let mut total = 0.0;
    for row in v_out {
        if target >= row.len() || row.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let z: Vec<f64> = row.iter().map(|v| beta * v).collect();
        total -= log_softmax_values(&z)[target];
    }
    Some(total)
}

/// [`loss_nll_membrane`] recorded on the tape.
pub fn loss_nll_tape(
    tape: &mut Tape,
    outputs: &[Var],
    target: usize,
    beta: f64,
) -> Result<Var, AutodiffError> {
    let mut terms = Vec::with_capacity(outputs.len());
    for &v in outputs {
        let z = tape.scale(v, beta)?;
        let ls = tape.log_softmax(z)?;
        terms.push(tape.index(ls, target)?);
    }
    let stacked = tape.stack(&terms)?;
    let total = tape.sum(stacked)?;
    tape.neg(total)
}
