use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |analytic|)` over every element.
    pub max_relative_error: f64,
    /// Input tensor and flat element index where the maximum occurred.
    pub worst: (usize, usize),
    pub elements_checked: usize,
}

/// Checks the gradient of a scalar function of one tensor.
///
/// Returns the maximum relative error between the taped gradient and
/// central finite differences.
pub fn finite_difference_check<F>(f: F, x: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    finite_difference_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), step)
        .map(|r| r.max_relative_error)
}

/// Checks the gradient of a scalar function of several tensors.
///
/// `f` must be deterministic: it is evaluated twice at the unperturbed point
/// and any difference is reported as a contract violation.
pub fn finite_difference_check_many<F>(f: F, inputs: &[Tensor<f64>], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }

    let evaluate = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let base = tape.value(loss).item()?;
    let grads = tape.backward(loss)?;

    let again = evaluate(inputs)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::Contract(format!(
            "function is not deterministic: {base} then {again}"
        )));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        elements_checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned();
        for idx in 0..inputs[which].len() {
            let original = inputs[which].data()[idx];
            work[which].data_mut()[idx] = original + step;
            let plus = evaluate(&work)?;
            work[which].data_mut()[idx] = original - step;
            let minus = evaluate(&work)?;
            work[which].data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let an = analytic.as_ref().map_or(0.0, |g| g.data()[idx]);
            let rel = (an - numeric).abs() / an.abs().max(1.0);
            if !rel.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient comparison at input {which}, element {idx}"
                )));
            }
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (which, idx);
            }
            report.elements_checked += 1;
        }
    }
    Ok(report)
}
