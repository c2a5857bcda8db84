//! Total-variation reconstruction by accelerated ADMM.
//!
//! Minimizes `(mu/2)||S g - lambda||^2 + (eps/2)||grad g||^2 + ||grad g||_1`
//! (anisotropic TV) with the splitting `v = grad g` and scaled dual `u`:
//!
//! 1. `(mu S^T S + (eps + beta) grad^T grad) g = mu S^T lambda + beta grad^T (v^ - u^)`
//!    solved by Jacobi-preconditioned CG, warm-started;
//! 2. `v = shrink(grad g + u^, 1/beta)`;
//! 3. `u = u^ + grad g - v`;
//! 4. Nesterov extrapolation of `(v, u)` while the combined residual
//!    `c_k = beta (||u - u^||^2 + ||v - v^||^2)` keeps falling below
//!    `restart_eta * c_{k-1}`; otherwise the momentum restarts from the
//!    current iterate. `restart_eta = 0` gives plain ADMM.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{residual_norm, snapshot, IterRecord, Method, ReconResult};
use crate::cg::{pcg, Stop};
use crate::error::{Error, Result};
use crate::geometry::PixelGrid;
use crate::linops::{soft, GradientField, GridStencil, SensitivityMatrix};
use crate::metrics::normalize_image;
use crate::par::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AadmmParams {
    /// Fidelity weight.
    pub mu: f64,
    /// Smoothing weight on `||grad g||^2`.
    pub eps: f64,
    /// Augmented-Lagrangian penalty.
    pub beta: f64,
    pub iters: usize,
    /// Relative residual tolerance of the inner CG solve.
    pub cg_tol: f64,
    /// Restart factor in `[0, 1)`.
    pub restart_eta: f64,
    /// Min-max rescale the final image to `[0, 1]`.
    pub normalize_output: bool,
}

impl Default for AadmmParams {
    fn default() -> Self {
        Self {
            mu: 1e4,
            eps: 1e-3,
            beta: 30.0,
            iters: 300,
            cg_tol: 1e-6,
            restart_eta: 0.999,
            normalize_output: true,
        }
    }
}

impl AadmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::param(format!("aadmm mu must be positive, got {}", self.mu)));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::param(format!("aadmm eps must be >= 0, got {}", self.eps)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::param(format!("aadmm beta must be positive, got {}", self.beta)));
        }
        if self.iters == 0 {
            return Err(Error::param("aadmm needs at least one iteration"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::param("aadmm cg_tol must be positive"));
        }
        if !(0.0..1.0).contains(&self.restart_eta) {
            return Err(Error::param(format!(
                "aadmm restart_eta must lie in [0, 1), got {}",
                self.restart_eta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AadmmRun {
    pub result: ReconResult,
    /// Unnormalized minimizer estimate.
    pub raw: Vec<f64>,
    /// `||grad g_k - v_k||_2` per iteration.
    pub primal_gap: Vec<f64>,
    /// Combined residual `c_k` per iteration.
    pub combined: Vec<f64>,
    /// Augmented Lagrangian at `(g_k, v_k, u_k)`.
    pub lagrangian: Vec<f64>,
    pub restarts: usize,
    pub cg_iterations: usize,
}

fn check_dims(lambda: &[f64], s: &SensitivityMatrix, grid: &PixelGrid) -> Result<()> {
    if lambda.len() != s.rows() {
        return Err(Error::dim("aadmm: measurements", s.rows(), lambda.len()));
    }
    if s.cols() != grid.n_active() {
        return Err(Error::dim("aadmm: pixels", grid.n_active(), s.cols()));
    }
    Ok(())
}

/// The TV objective at `g`.
pub fn tv_objective(
    g: &[f64],
    lambda: &[f64],
    s: &SensitivityMatrix,
    grid: &PixelGrid,
    mu: f64,
    eps: f64,
) -> Result<f64> {
    check_dims(lambda, s, grid)?;
    let st = GridStencil::new(grid);
    let mut d = GradientField::zeros(g.len());
    st.grad_into(g, &mut d);
    let res = residual_norm(&s.apply(g)?, lambda);
    Ok(0.5 * mu * res * res + 0.5 * eps * d.norm2_sq() + d.norm1())
}

/// `L(g, v, u) = (mu/2)||Sg - lambda||^2 + (eps/2)||grad g||^2 + ||v||_1
///  + (beta/2)||grad g - v + u||^2 - (beta/2)||u||^2`
#[allow(clippy::too_many_arguments)]
pub fn augmented_lagrangian(
    g: &[f64],
    v: &GradientField,
    u: &GradientField,
    lambda: &[f64],
    s: &SensitivityMatrix,
    grid: &PixelGrid,
    params: &AadmmParams,
) -> Result<f64> {
    check_dims(lambda, s, grid)?;
    let st = GridStencil::new(grid);
    let mut d = GradientField::zeros(g.len());
    st.grad_into(g, &mut d);
    lagrangian_with(&d, g, v, u, lambda, s, params)
}

fn lagrangian_with(
    d: &GradientField,
    g: &[f64],
    v: &GradientField,
    u: &GradientField,
    lambda: &[f64],
    s: &SensitivityMatrix,
    p: &AadmmParams,
) -> Result<f64> {
    let res = residual_norm(&s.apply(g)?, lambda);
    let mut coupling = 0.0;
    for k in 0..d.len() {
        coupling += (d.gx[k] - v.gx[k] + u.gx[k]).powi(2) + (d.gy[k] - v.gy[k] + u.gy[k]).powi(2);
    }
    Ok(0.5 * p.mu * res * res + 0.5 * p.eps * d.norm2_sq() + v.norm1() + 0.5 * p.beta * coupling
        - 0.5 * p.beta * u.norm2_sq())
}

fn sq_dist(a: &GradientField, b: &GradientField) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += (a.gx[k] - b.gx[k]).powi(2) + (a.gy[k] - b.gy[k]).powi(2);
    }
    acc
}

pub fn aadmm_solve(
    lambda: &[f64],
    s: &SensitivityMatrix,
    grid: &PixelGrid,
    params: &AadmmParams,
) -> Result<AadmmRun> {
    params.validate()?;
    check_dims(lambda, s, grid)?;
    let start = Instant::now();
    let p = s.cols();
    let st = GridStencil::new(grid);
    let AadmmParams {
        mu,
        eps,
        beta,
        iters,
        cg_tol,
        restart_eta,
        normalize_output,
    } = *params;

    // Jacobi preconditioner: diag(mu S^T S) + (eps + beta) * degree
    let mut diag = vec![0.0; p];
    for m in 0..s.rows() {
        for (d, v) in diag.iter_mut().zip(s.row(m)) {
            *d += mu * v * v;
        }
    }
    for q in 0..p {
        for nb in [st.right[q], st.down[q]].into_iter().flatten() {
            diag[q] += eps + beta;
            diag[nb] += eps + beta;
        }
    }
    diag.iter_mut().for_each(|d| {
        if *d == 0.0 {
            *d = 1.0
        }
    });

    let mut st_lambda = vec![0.0; p];
    s.apply_t_into(lambda, &mut st_lambda, Execution::Sequential)?;
    st_lambda.iter_mut().for_each(|x| *x *= mu);

    let mut g = vec![0.0; p];
    let mut d = GradientField::zeros(p);
    let mut v = GradientField::zeros(p);
    let mut u = GradientField::zeros(p);
    let mut v_hat = v.clone();
    let mut u_hat = u.clone();
    let mut v_prev = v.clone();
    let mut u_prev = u.clone();
    let mut rhs = vec![0.0; p];
    let mut div_buf = vec![0.0; p];
    let mut tmp = GradientField::zeros(p);
    let mut sv = vec![0.0; s.rows()];
    let mut stsv = vec![0.0; p];
    let mut lap = vec![0.0; p];

    let mut alpha = 1.0_f64;
    let mut c_prev = f64::INFINITY;
    let mut history = Vec::with_capacity(iters);
    let mut primal_gap = Vec::with_capacity(iters);
    let mut combined = Vec::with_capacity(iters);
    let mut lagrangian = Vec::with_capacity(iters);
    let mut restarts = 0;
    let mut cg_iterations = 0;

    for _ in 0..iters {
        // g-step
        for k in 0..p {
            tmp.gx[k] = v_hat.gx[k] - u_hat.gx[k];
            tmp.gy[k] = v_hat.gy[k] - u_hat.gy[k];
        }
        st.div_into(&tmp, &mut div_buf);
        for k in 0..p {
            rhs[k] = st_lambda[k] - beta * div_buf[k];
        }
        let mut grad_tmp = GradientField::zeros(p);
        let report = pcg(
            |x, out| {
                s.normal_apply(x, &mut sv, &mut stsv).expect("dimensions checked");
                st.laplacian_into(x, &mut grad_tmp, &mut lap);
                for k in 0..out.len() {
                    out[k] = mu * stsv[k] + (eps + beta) * lap[k];
                }
            },
            Some(&diag),
            &rhs,
            &mut g,
            Stop::Relative(cg_tol),
            20 * p.max(50),
        );
        cg_iterations += report.iterations;
        if !report.converged {
            return Err(Error::NoConvergence {
                solver: "aadmm inner CG",
                iterations: report.iterations,
                residual: report.residual,
            });
        }

        // v- and dual steps
        st.grad_into(&g, &mut d);
        let shrink = 1.0 / beta;
        for k in 0..p {
            v.gx[k] = soft(d.gx[k] + u_hat.gx[k], shrink);
            v.gy[k] = soft(d.gy[k] + u_hat.gy[k], shrink);
            u.gx[k] = u_hat.gx[k] + d.gx[k] - v.gx[k];
            u.gy[k] = u_hat.gy[k] + d.gy[k] - v.gy[k];
        }

        let c = beta * (sq_dist(&u, &u_hat) + sq_dist(&v, &v_hat));
        primal_gap.push(sq_dist(&d, &v).sqrt());
        combined.push(c);
        lagrangian.push(lagrangian_with(&d, &g, &v, &u, lambda, s, params)?);

        // acceleration
        if restart_eta > 0.0 && c < restart_eta * c_prev {
            let alpha_next = (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt()) / 2.0;
            let w = (alpha - 1.0) / alpha_next;
            for k in 0..p {
                v_hat.gx[k] = v.gx[k] + w * (v.gx[k] - v_prev.gx[k]);
                v_hat.gy[k] = v.gy[k] + w * (v.gy[k] - v_prev.gy[k]);
                u_hat.gx[k] = u.gx[k] + w * (u.gx[k] - u_prev.gx[k]);
                u_hat.gy[k] = u.gy[k] + w * (u.gy[k] - u_prev.gy[k]);
            }
            alpha = alpha_next;
        } else {
            if restart_eta > 0.0 {
                restarts += 1;
            }
            alpha = 1.0;
            v_hat.clone_from(&v);
            u_hat.clone_from(&u);
        }
        c_prev = c;
        v_prev.clone_from(&v);
        u_prev.clone_from(&u);

        let res = residual_norm(&s.apply(&g)?, lambda);
        history.push(IterRecord {
            residual: res,
            objective: 0.5 * mu * res * res + 0.5 * eps * d.norm2_sq() + d.norm1(),
        });
    }

    let raw = g.clone();
    let image = if normalize_output {
        normalize_image(&g.into())
    } else {
        g.into()
    };
    Ok(AadmmRun {
        result: ReconResult {
            image,
            history,
            elapsed: start.elapsed().as_secs_f64(),
            method: Method::Aadmm,
            params: snapshot!(mu, eps, beta, iters, cg_tol, restart_eta, normalize_output),
        },
        raw,
        primal_gap,
        combined,
        lagrangian,
        restarts,
        cg_iterations,
    })
}
