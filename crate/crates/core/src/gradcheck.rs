//! Central finite-difference gradient checking.

use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared on an absolute scale; below it
/// the finite-difference round-off (about `1e-16 · |f| / step`) dominates.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Per-element relative error.
    pub errors: Vec<f64>,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst: usize,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn new(analytic: Vec<f64>, numeric: Vec<f64>, tol: f64) -> Self {
        let errors: Vec<f64> = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .collect();
        let (worst, max_rel_error) = errors
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
        Self {
            analytic,
            numeric,
            errors,
            max_rel_error,
            worst,
            tol,
            passed: max_rel_error < tol,
        }
    }
}

/// Compares the tape gradient of a scalar function `f` at `x` against
/// central differences with step `step`.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
{
    let reports = grad_check_many(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        step,
        tol,
    )?;
    Ok(reports.into_iter().next().expect("one input, one report"))
}

/// Multi-input variant: one report per input tensor.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], step: f64, tol: f64) -> Result<Vec<GradCheckReport>, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    if step <= 0.0 {
        return Err(TensorError::Contract(format!("finite-difference step {step} must be positive")));
    }
    let eval = |values: &[Tensor], with_grad: bool| -> Result<(f64, Tape, Vec<Var>), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.set_requires_grad(with_grad);
                tape.leaf(&t)
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return Err(TensorError::Contract(format!(
                "grad_check needs a scalar function, got shape {:?}",
                tape.shape(out)
            )));
        }
        let y = tape.scalar(out);
        if !y.is_finite() {
            return Err(TensorError::Evaluation(format!("f(x) = {y} is not finite")));
        }
        if with_grad {
            tape.backward(out)?;
        }
        Ok((y, tape, vars))
    };

    let (_, tape, vars) = eval(inputs, true)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    drop(tape);

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut reports = Vec::with_capacity(inputs.len());
    for (which, analytic) in analytic.into_iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..work[which].numel() {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = orig + step;
            let (plus, ..) = eval(&work, false)?;
            work[which].data_mut()[i] = orig - step;
            let (minus, ..) = eval(&work, false)?;
            work[which].data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * step));
        }
        reports.push(GradCheckReport::new(analytic, numeric, tol));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_zero_error() {
        let report = grad_check(|_, x| Ok(x), &Tensor::scalar(0.0), 1e-5, 1e-12).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn non_finite_output_is_an_evaluation_error() {
        let err = grad_check(
            |t, x| Ok(t.map(x, |v| 1.0 / v, |v| -1.0 / (v * v))),
            &Tensor::scalar(0.0),
            1e-5,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::Evaluation(_)));
    }

    #[test]
    fn corrupted_backward_rule_is_caught() {
        // derivative of x³ deliberately off by 1%
        let x = Tensor::new(&[3], vec![0.4, -0.7, 0.9]).unwrap();
        let report = grad_check(
            |t, x| {
                let y = t.map(x, |v| v * v * v, |v| 3.03 * v * v);
                Ok(t.sum(y))
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed);
        assert!(report.max_rel_error > 5e-3);

        let report = grad_check(
            |t, x| {
                let y = t.map(x, |v| v * v * v, |v| 3.0 * v * v);
                Ok(t.sum(y))
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }
}
