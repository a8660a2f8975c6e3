use super::{AutodiffError, Shape, Tape, Var};

/// Outcome of comparing tape gradients with central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Leaf index and flat coordinate of the worst disagreement.
    pub worst_leaf: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub tol: f64,
    pub checked: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

/// `|a - b| / max(|a|, |b|, 1e-12)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Check the gradient of the scalar function `f` at `leaves` against
/// `(f(x + eps) - f(x - eps)) / 2 eps`, one coordinate at a time.
///
/// `f` records its computation on the tape it is handed, using the leaf
/// variables it is given, and returns the scalar output.
pub fn gradcheck<F, E>(
    f: F,
    leaves: &[(Vec<f64>, Shape)],
    eps: f64,
    tol: f64,
) -> Result<GradcheckReport, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    let eval = |values: &[(Vec<f64>, Shape)]| -> Result<(Tape, Vec<Var>, Var), E> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|(v, s)| tape.leaf(v.clone(), *s))
            .collect::<Result<Vec<_>, _>>()?;
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(leaves)?;
    let grads = tape.backward(out, &vars)?;

    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst_leaf: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        tol,
        checked: 0,
    };
    let mut probe: Vec<(Vec<f64>, Shape)> = leaves.to_vec();
    for (l, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf gradient requested");
        for k in 0..leaves[l].0.len() {
            let x = leaves[l].0[k];
            probe[l].0[k] = x + eps;
            let (t, _, o) = eval(&probe)?;
            let plus = t.scalar(o);
            probe[l].0[k] = x - eps;
            let (t, _, o) = eval(&probe)?;
            let minus = t.scalar(o);
            probe[l].0[k] = x;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[k], numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.checked == 1 {
                report.max_rel_err = err;
                report.worst_leaf = l;
                report.worst_index = k;
                report.analytic = analytic[k];
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{mif_step, MifParams, MifState, StepConfig};

    #[test]
    fn square_at_three() {
        let r = gradcheck::<_, AutodiffError>(
            |t, v| t.mul(v[0], v[0]),
            &[(vec![3.0], Shape::Scalar)],
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(r.passed());
        assert!((r.analytic - 6.0).abs() < 1e-12);
        assert!(r.max_rel_err < 1e-8, "{}", r.max_rel_err);
    }

    #[test]
    fn wrong_gradient_is_reported_with_coordinates() {
        // clamp kink exactly at the probe point: analytic 1, numeric 0.5
        let r = gradcheck::<_, AutodiffError>(
            |t, v| {
                let c = t.clamp(v[0], 0.0, 1.0)?;
                t.sum(c)
            },
            &[(vec![0.5, 1.0], Shape::Vector(2))],
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(!r.passed());
        assert_eq!((r.worst_leaf, r.worst_index), (0, 1));
    }

    /// One MIF step recorded with tape primitives, differentiated with
    /// respect to the input current.
    #[test]
    fn mif_step_input_current() {
        let p = MifParams::default();
        let cfg = StepConfig::new(1e-5, crate::device::Integrator::ExpEuler, 1);
        let s = MifState { v: 0.06, x1: 0.05, x2: 0.01 };
        let r = gradcheck::<_, AutodiffError>(
            |t, v| {
                let st = crate::network::TapeMifState::constant(t, &[s])?;
                let next = crate::network::mif_step_tape(t, &st, v[0], &p, &cfg)?;
                t.sum(next.v)
            },
            &[(vec![2e-6], Shape::Vector(1))],
            1e-9,
            1e-6,
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
        // the same step through the scalar device path
        let direct = mif_step(s, &p, 2e-6, &cfg).unwrap();
        let mut t = Tape::new();
        let st = crate::network::TapeMifState::constant(&mut t, &[s]).unwrap();
        let i = t.constant(vec![2e-6], Shape::Vector(1)).unwrap();
        let next = crate::network::mif_step_tape(&mut t, &st, i, &p, &cfg).unwrap();
        assert!((t.value(next.v)[0] - direct.v).abs() < 1e-15);
    }
}
