//! Optimal transport with a location-aware ground cost, and assignment.

mod cost;
mod emd;
mod grid;
mod hungarian;
mod plan;
mod sinkhorn;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use cost::location_cost;
pub use emd::emd;
pub use grid::{GridSinkhorn, GridSolution, MAX_COST_OVER_EPS};
pub use hungarian::{hungarian, Assignment};
pub use plan::{center, TransportPlan};
pub use sinkhorn::{sinkhorn, sinkhorn_warm, SinkhornOptions};

use crate::error::{Error, Result};

/// Solver used for transport values and gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum GradientVia {
    ExactDuals,
    Sinkhorn {
        eps: f64,
        max_iters: usize,
        tol: f64,
    },
}

impl GradientVia {
    pub fn sinkhorn(eps: f64) -> Self {
        let d = SinkhornOptions::default();
        GradientVia::Sinkhorn {
            eps,
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }
}

/// Value and zero-mean gradient with respect to the supply distribution.
///
/// Exact path: EMD value and its optimal supply potential (zero when the
/// value is zero, where the EMD is minimal and not differentiable). Sinkhorn path: the
/// regularized objective and its potential `f`. Inputs are normalized first,
/// so the gradient acts on the simplex.
pub fn emd_gradient(
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    via: GradientVia,
) -> Result<(f64, Vec<f64>)> {
    let (value, mut u) = match via {
        GradientVia::ExactDuals => {
            let plan = emd(p, q, c)?;
            let (u, _) = plan
                .duals
                .ok_or_else(|| Error::Solver("exact duals missing".into()))?;
            if plan.objective == 0.0 {
                // Global minimum: zero is a valid subgradient and the stationary choice.
                (0.0, vec![0.0; u.len()])
            } else {
                (plan.objective, u)
            }
        }
        GradientVia::Sinkhorn {
            eps,
            max_iters,
            tol,
        } => {
            let plan = sinkhorn(
                p,
                q,
                c,
                SinkhornOptions {
                    eps,
                    max_iters,
                    tol,
                },
            )?;
            let value = plan
                .regularized
                .expect("sinkhorn sets the regularized value");
            (value, plan.duals.expect("sinkhorn sets duals").0)
        }
    };
    center(&mut u);
    Ok((value, u))
}
