use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Solution of a transport problem between normalized marginals.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// Flow `f[i][j]`, rows sum to the normalized supplies, columns to the demands.
    pub flow: Array2<f64>,
    /// Transport cost `sum c[i][j] f[i][j]`.
    pub objective: f64,
    /// Entropic solvers only: the regularized objective whose gradient is `duals.0`.
    pub regularized: Option<f64>,
    /// Potentials `(u, v)` with `u[i] + v[j] <= c[i][j]` (exact) or the entropic duals.
    pub duals: Option<(Vec<f64>, Vec<f64>)>,
    /// Original masses of the inputs before normalization.
    pub supply_scale: f64,
    pub demand_scale: f64,
    pub converged: bool,
    pub iterations: usize,
    /// L1 marginal violation at exit.
    pub marginal_error: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.flow.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.flow.columns().into_iter().map(|c| c.sum()).collect()
    }
}

/// L1-normalizes a nonnegative mass vector, returning it with its original total.
pub(crate) fn normalize(x: &[f64], what: &str) -> Result<(Vec<f64>, f64)> {
    if x.is_empty() {
        return Err(Error::arg(format!("{what} is empty")));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("{what} has invalid mass {v}")));
    }
    let s: f64 = x.iter().sum();
    if s <= 0.0 {
        return Err(Error::arg(format!("{what} has zero mass")));
    }
    Ok((x.iter().map(|v| v / s).collect(), s))
}

pub(crate) fn check_cost(c: ArrayView2<'_, f64>, ns: usize, nd: usize) -> Result<()> {
    if c.dim() != (ns, nd) {
        return Err(Error::arg(format!(
            "cost matrix is {:?}, marginals need {ns}x{nd}",
            c.dim()
        )));
    }
    if let Some(v) = c.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!(
            "cost entry {v} is negative or non-finite"
        )));
    }
    Ok(())
}

pub(crate) fn transport_cost(c: ArrayView2<'_, f64>, flow: &Array2<f64>) -> f64 {
    c.iter().zip(flow.iter()).map(|(a, b)| a * b).sum()
}

/// Subtracts the mean so potentials are gauge-fixed.
pub fn center(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}
