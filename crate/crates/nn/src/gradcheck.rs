//! Finite-difference gradient checking. Runs in f64; f32 tapes lose too much
//! precision for a 1e-3 relative tolerance.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{BoundParams, ParameterSet};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub n_checked: usize,
    /// (parameter name, flat index, analytic, numeric) for the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compare tape gradients against central differences for every scalar in
/// `params`. `eval` must rebuild the same loss deterministically each call
/// (reseed any RNG inside it).
pub fn gradient_check<F>(params: &mut ParameterSet<f64>, mut eval: F, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet<f64>) -> Result<(Graph<f64>, BoundParams, Var)>,
{
    let (mut g, bound, loss) = eval(params)?;
    g.backward(loss)?;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut analytic: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    for name in &names {
        let var = bound.var(name)?;
        match g.grad(var) {
            Some(t) => analytic.push(t.values().to_vec()),
            None => analytic.push(vec![0.0; params.get(name).unwrap().len()]),
        }
    }
    drop(g);

    let mut report = GradCheckReport { max_rel_err: 0.0, n_checked: 0, worst: None };
    for (ni, name) in names.iter().enumerate() {
        let len = params.get(name).unwrap().len();
        for i in 0..len {
            let orig = params.get(name).unwrap().values()[i];

            params.get_mut(name).unwrap().values_mut()[i] = orig + h;
            let (gp, _, lp) = eval(params)?;
            let f_plus = gp.value(lp).scalar_value()?;

            params.get_mut(name).unwrap().values_mut()[i] = orig - h;
            let (gm, _, lm) = eval(params)?;
            let f_minus = gm.value(lm).scalar_value()?;

            params.get_mut(name).unwrap().values_mut()[i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[ni][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.n_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
