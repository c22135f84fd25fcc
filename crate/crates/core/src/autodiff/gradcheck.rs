//! Central finite-difference oracle for checking analytic gradients.
//!
//! Only forward values are used here, so the check stays independent of the
//! backward rules it validates.

use super::{Graph, Var};
use crate::error::Result;
use crate::numcore::Mat;

pub const FD_STEP: f64 = 1e-5;

/// Worst relative error, over all inputs, between the analytic gradient of
/// `f` and central differences with step `h`. Relative error of one input is
/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-6)`.
pub fn max_relative_error<F>(inputs: &[Mat], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
    let root = f(&mut g, &vars)?;
    let grads = g.backward(root)?;
    let analytic: Vec<Mat> = vars.iter().map(|&v| grads.get(v)).collect();

    let eval = |xs: &[Mat]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|m| g.param(m.clone())).collect();
        let root = f(&mut g, &vars)?;
        Ok(g.scalar(root))
    };

    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        let mut numeric = Mat::zeros(a.rows(), a.cols());
        for j in 0..a.len() {
            let orig = xs[i].as_slice()[j];
            xs[i].as_mut_slice()[j] = orig + h;
            let up = eval(&xs)?;
            xs[i].as_mut_slice()[j] = orig - h;
            let down = eval(&xs)?;
            xs[i].as_mut_slice()[j] = orig;
            numeric.as_mut_slice()[j] = (up - down) / (2.0 * h);
        }
        let diff = a.zip_map(&numeric, |x, y| x - y).frobenius();
        let scale = a.frobenius().max(numeric.frobenius()).max(1e-6);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}
