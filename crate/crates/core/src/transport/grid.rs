//! Entropic transport on a regular grid with the Euclidean location cost.
//!
//! The Gibbs kernel `exp(-c / eps)` depends only on the offset between two
//! cells, so applying it is a 2-D convolution, done here with zero-padded
//! FFTs. Potentials stay in the log domain; each kernel application works on
//! max-shifted weights so nothing overflows.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::cost::diagonal;
use super::plan::{center, normalize};
use super::sinkhorn::dot;
use crate::error::{Error, Result};

/// Largest `max_cost / eps` accepted. Beyond it the smallest kernel entries
/// fall below FFT round-off relative to the largest.
pub const MAX_COST_OVER_EPS: f64 = 20.0;

struct Convolver {
    h: usize,
    w: usize,
    hh: usize,
    ww: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl Convolver {
    fn new(h: usize, w: usize) -> Self {
        let (hh, ww) = (2 * h, 2 * w);
        let mut planner = FftPlanner::<f64>::new();
        let row_fwd = planner.plan_fft_forward(ww);
        let row_inv = planner.plan_fft_inverse(ww);
        let col_fwd = planner.plan_fft_forward(hh);
        let col_inv = planner.plan_fft_inverse(hh);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Convolver {
            h,
            w,
            hh,
            ww,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scratch_len,
        }
    }

    /// Spectrum of a full `hh x ww` image, returned in column-major (transposed) layout.
    fn spectrum(&self, image: &[f64]) -> Vec<Complex64> {
        let (hh, ww) = (self.hh, self.ww);
        let mut scratch = vec![Complex64::default(); self.scratch_len];
        let mut buf: Vec<Complex64> = image.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.row_fwd.process_with_scratch(&mut buf, &mut scratch);
        let mut t = vec![Complex64::default(); hh * ww];
        for y in 0..hh {
            for x in 0..ww {
                t[x * hh + y] = buf[y * ww + x];
            }
        }
        self.col_fwd.process_with_scratch(&mut t, &mut scratch);
        t
    }

    /// Linear convolution of an `h x w` input with the kernel whose spectrum is `spec`.
    fn apply(&self, input: &[f64], spec: &[Complex64], ws: &mut Workspace) -> Vec<f64> {
        let (h, w, hh, ww) = (self.h, self.w, self.hh, self.ww);
        let buf = &mut ws.rows;
        buf[..h * ww].fill(Complex64::default());
        for y in 0..h {
            for x in 0..w {
                buf[y * ww + x] = Complex64::new(input[y * w + x], 0.0);
            }
        }
        self.row_fwd
            .process_with_scratch(&mut buf[..h * ww], &mut ws.scratch);
        let t = &mut ws.cols;
        for x in 0..ww {
            let col = &mut t[x * hh..(x + 1) * hh];
            for y in 0..h {
                col[y] = buf[y * ww + x];
            }
            col[h..].fill(Complex64::default());
        }
        self.col_fwd.process_with_scratch(t, &mut ws.scratch);
        for (a, k) in t.iter_mut().zip(spec) {
            *a *= k;
        }
        self.col_inv.process_with_scratch(t, &mut ws.scratch);
        for y in 0..h {
            for x in 0..ww {
                buf[y * ww + x] = t[x * hh + y];
            }
        }
        self.row_inv
            .process_with_scratch(&mut buf[..h * ww], &mut ws.scratch);
        let scale = 1.0 / (hh * ww) as f64;
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                out.push(buf[y * ww + x].re * scale);
            }
        }
        out
    }
}

struct Workspace {
    rows: Vec<Complex64>,
    cols: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Result of a grid solve. The plan itself is never materialized.
#[derive(Debug, Clone)]
pub struct GridSolution {
    /// Potentials on the normalized marginals.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Regularized objective `<f, p> + <g, q> - eps (sum P - 1)`.
    pub regularized: f64,
    /// Transport cost `<C, P>` of the entropic plan.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
}

impl GridSolution {
    /// `f` shifted to zero mean: the gradient of `regularized` along the simplex.
    pub fn gradient(&self) -> Vec<f64> {
        let mut f = self.f.clone();
        center(&mut f);
        f
    }
}

/// Reusable FFT Sinkhorn solver for one grid, cost normalization and `eps`.
pub struct GridSinkhorn {
    h: usize,
    w: usize,
    eps: f64,
    conv: Convolver,
    kernel: Vec<Complex64>,
    kernel_cost: Vec<Complex64>,
}

impl std::fmt::Debug for GridSinkhorn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridSinkhorn")
            .field("h", &self.h)
            .field("w", &self.w)
            .field("eps", &self.eps)
            .finish()
    }
}

impl GridSinkhorn {
    /// Fails with an argument error when `eps` is too small for FFT accuracy
    /// (see [`MAX_COST_OVER_EPS`]); callers should use the dense solver then.
    pub fn new(h: usize, w: usize, normalize_cost: bool, eps: f64) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::arg("grid must be non-empty"));
        }
        if !(eps > 0.0) {
            return Err(Error::arg(format!("eps must be positive, got {eps}")));
        }
        let diag = diagonal(h, w);
        let scale = if normalize_cost && diag > 0.0 {
            diag
        } else {
            1.0
        };
        let max_c = diag / scale;
        if max_c / eps > MAX_COST_OVER_EPS * (1.0 + 1e-12) {
            return Err(Error::arg(format!(
                "eps = {eps} is below max_cost / {MAX_COST_OVER_EPS} for the FFT solver"
            )));
        }
        let conv = Convolver::new(h, w);
        let (hh, ww) = (2 * h, 2 * w);
        let mut k = vec![0.0; hh * ww];
        let mut kc = vec![0.0; hh * ww];
        for dy in -(h as isize - 1)..=(h as isize - 1) {
            for dx in -(w as isize - 1)..=(w as isize - 1) {
                let c = ((dy * dy + dx * dx) as f64).sqrt() / scale;
                let y = dy.rem_euclid(hh as isize) as usize;
                let x = dx.rem_euclid(ww as isize) as usize;
                k[y * ww + x] = (-c / eps).exp();
                kc[y * ww + x] = c * (-c / eps).exp();
            }
        }
        let kernel = conv.spectrum(&k);
        let kernel_cost = conv.spectrum(&kc);
        Ok(GridSinkhorn {
            h,
            w,
            eps,
            conv,
            kernel,
            kernel_cost,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn workspace(&self) -> Workspace {
        let (hh, ww) = (2 * self.h, 2 * self.w);
        Workspace {
            rows: vec![Complex64::default(); hh * ww],
            cols: vec![Complex64::default(); hh * ww],
            scratch: vec![Complex64::default(); self.conv.scratch_len],
        }
    }

    /// `-eps * ln K(m * exp(pot / eps))`, computed on max-shifted weights.
    fn soft_min(&self, mass: &[f64], pot: &[f64], ws: &mut Workspace) -> (Vec<f64>, Vec<f64>) {
        let eps = self.eps;
        let top = pot
            .iter()
            .zip(mass)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = pot
            .iter()
            .zip(mass)
            .map(|(&v, &m)| {
                if m > 0.0 {
                    m * ((v - top) / eps).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let kw = self.conv.apply(&weights, &self.kernel, ws);
        let out = kw
            .iter()
            .map(|&v| -eps * v.max(f64::MIN_POSITIVE).ln() - top)
            .collect();
        (out, weights)
    }

    /// Solves between `p` and `q` (normalized internally). `warm` holds `(f, g)`
    /// from a previous call and is overwritten with the new potentials.
    pub fn solve(
        &self,
        p: &[f64],
        q: &[f64],
        max_iters: usize,
        tol: f64,
        warm: Option<&mut (Vec<f64>, Vec<f64>)>,
    ) -> Result<GridSolution> {
        let n = self.h * self.w;
        if p.len() != n || q.len() != n {
            return Err(Error::arg(format!("marginals must have {n} entries")));
        }
        let (ps, _) = normalize(p, "supply")?;
        let (qs, _) = normalize(q, "demand")?;
        let mut ws = self.workspace();
        let (mut f, mut g) = match warm.as_deref() {
            Some((f0, g0)) if f0.len() == n && g0.len() == n => (f0.clone(), g0.clone()),
            _ => (vec![0.0; n], vec![0.0; n]),
        };
        let eps = self.eps;
        let mut iterations = 0;
        let mut err = f64::INFINITY;
        let mut last = None;
        while iterations < max_iters.max(1) {
            g = self.soft_min(&ps, &f, &mut ws).0;
            let (f_new, weights) = self.soft_min(&qs, &g, &mut ws);
            err = ps
                .iter()
                .zip(f.iter().zip(&f_new))
                .map(|(&pi, (&a, &b))| {
                    if pi > 0.0 {
                        pi * (((a - b) / eps).exp() - 1.0).abs()
                    } else {
                        0.0
                    }
                })
                .sum();
            f = f_new;
            last = Some(weights);
            iterations += 1;
            if err <= tol {
                break;
            }
        }
        let weights = last.expect("at least one iteration");
        // <C, P> = sum_i p_i (KC b)_i / (K b)_i with b the shifted column weights.
        let kb = self.conv.apply(&weights, &self.kernel, &mut ws);
        let kcb = self.conv.apply(&weights, &self.kernel_cost, &mut ws);
        let objective = ps
            .iter()
            .zip(kb.iter().zip(&kcb))
            .map(|(&pi, (&a, &b))| {
                if pi > 0.0 {
                    pi * b.max(0.0) / a.max(f64::MIN_POSITIVE)
                } else {
                    0.0
                }
            })
            .sum();
        let regularized = dot(&f, &ps) + dot(&g, &qs);
        if let Some(wm) = warm {
            *wm = (f.clone(), g.clone());
        }
        Ok(GridSolution {
            f,
            g,
            regularized,
            objective,
            converged: err <= tol,
            iterations,
            marginal_error: err,
        })
    }
}
