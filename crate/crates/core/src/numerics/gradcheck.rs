//! Central finite-difference verification of reverse-mode gradients.

use alloc::vec::Vec;

use super::{Graph, NumericsError, Ops, Tensor, Var};

/// Result of comparing analytic and numeric gradients for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub input: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂ + ‖numeric‖₂, floor)`
    pub relative_error: f64,
    pub max_abs_error: f64,
}

/// Norms below this are treated as zero gradients when forming ratios.
const NORM_FLOOR: f64 = 1e-6;

/// Differentiates the scalar produced by `build` with respect to every
/// entry of `inputs`, once by backward and once by central differences with
/// step `h`. `build` receives a fresh graph and leaf handles for the inputs
/// and must return a scalar.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, build: F) -> Result<Vec<GradCheck>, NumericsError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NumericsError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, NumericsError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(&out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;

    let mut report = Vec::with_capacity(inputs.len());
    let mut perturbed: Vec<Tensor> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = g.grad(*var);
        let mut diff_sq = 0.0;
        let mut a_sq = 0.0;
        let mut n_sq = 0.0;
        let mut max_abs: f64 = 0.0;
        for idx in 0..inputs[k].numel() {
            let orig = inputs[k].data()[idx];
            perturbed[k].data_mut()[idx] = orig + h;
            let plus = eval(&perturbed)?;
            perturbed[k].data_mut()[idx] = orig - h;
            let minus = eval(&perturbed)?;
            perturbed[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[idx];
            diff_sq += (a - numeric) * (a - numeric);
            a_sq += a * a;
            n_sq += numeric * numeric;
            max_abs = max_abs.max(libm::fabs(a - numeric));
        }
        let denom = (libm::sqrt(a_sq) + libm::sqrt(n_sq)).max(NORM_FLOOR);
        report.push(GradCheck {
            input: k,
            relative_error: libm::sqrt(diff_sq) / denom,
            max_abs_error: max_abs,
        });
    }
    Ok(report)
}
