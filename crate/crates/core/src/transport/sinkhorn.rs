//! Entropic transport, `min <C, P> + eps * KL(P || p q^T)`, solved in the log domain.
//!
//! With potentials `f`, `g` the plan is `P = p q^T exp((f + g - C) / eps)`
//! and the regularized value is `<f, p> + <g, q> - eps * (sum P - 1)`,
//! whose gradient in `p` is `f` (up to a constant).

use ndarray::{Array2, ArrayView2};

use super::plan::{check_cost, normalize, transport_cost, TransportPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    pub eps: f64,
    pub max_iters: usize,
    /// Stop once the L1 row-marginal violation falls below this.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            eps: 0.01,
            max_iters: 10_000,
            tol: 1e-9,
        }
    }
}

fn logsumexp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn on normalized marginals.
///
/// `warm` supplies starting potentials (e.g. from a previous, nearby problem).
/// Non-convergence is reported through `converged`, not as an error.
pub fn sinkhorn_warm(
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    opts: SinkhornOptions,
    warm: Option<(&[f64], &[f64])>,
) -> Result<TransportPlan> {
    if !(opts.eps > 0.0) {
        return Err(Error::arg(format!(
            "eps must be positive, got {}",
            opts.eps
        )));
    }
    let (ps, sp) = normalize(p, "supply")?;
    let (qs, sq) = normalize(q, "demand")?;
    let (n, m) = (ps.len(), qs.len());
    check_cost(c, n, m)?;
    let eps = opts.eps;
    let lp: Vec<f64> = ps.iter().map(|v| v.ln()).collect();
    let lq: Vec<f64> = qs.iter().map(|v| v.ln()).collect();
    let (mut f, mut g) = match warm {
        Some((f0, g0)) if f0.len() == n && g0.len() == m => (f0.to_vec(), g0.to_vec()),
        _ => (vec![0.0; n], vec![0.0; m]),
    };

    let update_f = |g: &[f64], f: &mut [f64]| {
        for i in 0..n {
            let lse = logsumexp((0..m).map(|j| lq[j] + (g[j] - c[[i, j]]) / eps));
            f[i] = -eps * lse;
        }
    };
    let update_g = |f: &[f64], g: &mut [f64]| {
        for j in 0..m {
            let lse = logsumexp((0..n).map(|i| lp[i] + (f[i] - c[[i, j]]) / eps));
            g[j] = -eps * lse;
        }
    };
    let row_error = |f: &[f64], g: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let r: f64 = (0..m)
                    .map(|j| (lp[i] + lq[j] + (f[i] + g[j] - c[[i, j]]) / eps).exp())
                    .sum();
                (r - ps[i]).abs()
            })
            .sum()
    };

    let mut iterations = 0;
    let mut err = f64::INFINITY;
    while iterations < opts.max_iters {
        update_f(&g, &mut f);
        update_g(&f, &mut g);
        iterations += 1;
        err = row_error(&f, &g);
        if err <= opts.tol {
            break;
        }
    }

    let flow = Array2::from_shape_fn((n, m), |(i, j)| {
        (lp[i] + lq[j] + (f[i] + g[j] - c[[i, j]]) / eps).exp()
    });
    let mass: f64 = flow.sum();
    let dual = dot(&f, &ps) + dot(&g, &qs);
    Ok(TransportPlan {
        objective: transport_cost(c, &flow),
        regularized: Some(dual - eps * (mass - 1.0)),
        flow,
        duals: Some((f, g)),
        supply_scale: sp,
        demand_scale: sq,
        converged: err <= opts.tol,
        iterations,
        marginal_error: err,
    })
}

/// Entropic transport from a cold start.
pub fn sinkhorn(
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    opts: SinkhornOptions,
) -> Result<TransportPlan> {
    sinkhorn_warm(p, q, c, opts, None)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
