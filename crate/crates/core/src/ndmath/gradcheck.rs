use super::{NdError, Tape, Tensor, Var};

/// Finite-difference comparison for one input tensor.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub numel: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂, 1e-6)`
    pub rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checks: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.checks.iter().all(|c| c.rel_error < tolerance)
    }
}

const NORM_FLOOR: f64 = 1e-6;

/// Compares tape gradients of the scalar built by `f` against central
/// differences with step `eps`, perturbing one element at a time.
pub fn check_gradients<F>(
    inputs: &[(String, Tensor<f64>)],
    eps: f64,
    f: F,
) -> Result<GradCheckReport, NdError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, NdError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64, NdError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|(_, v)| tape.param(v.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let mut checks = Vec::with_capacity(inputs.len());
    for (k, (name, original)) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(original.shape().to_vec()));
        let mut numeric = vec![0.0; original.numel()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x = original.data()[i];
            values[k].data_mut()[i] = x + eps;
            let up = eval(&values)?;
            values[k].data_mut()[i] = x - eps;
            let down = eval(&values)?;
            values[k].data_mut()[i] = x;
            *slot = (up - down) / (2.0 * eps);
        }
        let mut diff_sq = 0.0;
        let mut max_abs: f64 = 0.0;
        for (&a, &n) in analytic.data().iter().zip(&numeric) {
            diff_sq += (a - n) * (a - n);
            max_abs = max_abs.max((a - n).abs());
        }
        let a_norm = analytic.sq_norm().sqrt();
        let n_norm = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        checks.push(TensorCheck {
            name: name.clone(),
            numel: original.numel(),
            rel_error: diff_sq.sqrt() / a_norm.max(n_norm).max(NORM_FLOOR),
            max_abs_error: max_abs,
        });
    }
    Ok(GradCheckReport { checks })
}
