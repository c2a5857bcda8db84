//! l0-regularized post-processing by extrapolated proximal iterative hard
//! thresholding, run in two phases.
//!
//! With `G(g) = ||Sg - lambda||^2 / 2 + ||g||^2 / 2` and
//! `H(g) = G(g) + r ||g||_0`, each iteration extrapolates
//! `y = g_k + w (g_k - g_{k-1})`, falls back to `y = g_k` when that would
//! raise `H`, and takes a thresholded gradient step from `y`:
//! `b = y - grad G(y) / q`, `a = sqrt(2r / q)`.
//!
//! Phase I uses plain hard thresholding to strip low-level artifacts.
//! Phase II keeps components above the threshold and leaves the rest at
//! their previous value, so the support cannot grow while surviving
//! pixels are pulled towards the data.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{snapshot, IterRecord, Method, ReconResult};
use crate::error::{Error, Result};
use crate::linops::{dot, SensitivityMatrix};
use crate::phantom::PermittivityImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdOperator {
    /// Hard thresholding: sub-threshold components become 0.
    Psi,
    /// Sub-threshold components follow [`NuPolicy`].
    Nu,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuPolicy {
    /// Keep the previous iterate's value.
    #[default]
    FreezePrevious,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpihtParams {
    pub r: f64,
    pub q: f64,
    pub w: f64,
    pub k_max: usize,
    pub operator: ThresholdOperator,
    pub nu_policy: NuPolicy,
}

impl Default for EpihtParams {
    fn default() -> Self {
        Self::phase_one()
    }
}

impl EpihtParams {
    pub fn phase_one() -> Self {
        Self {
            r: 0.01,
            q: 2.0,
            w: 1000.0,
            k_max: 50,
            operator: ThresholdOperator::Psi,
            nu_policy: NuPolicy::FreezePrevious,
        }
    }

    pub fn phase_two() -> Self {
        Self {
            r: 1.0,
            w: 1.0,
            operator: ThresholdOperator::Nu,
            ..Self::phase_one()
        }
    }

    /// `sqrt(2r / q)`
    pub fn threshold(&self) -> f64 {
        (2.0 * self.r / self.q).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::param(format!("epiht r must be >= 0, got {}", self.r)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::param(format!("epiht q must be positive, got {}", self.q)));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::param(format!("epiht w must be >= 0, got {}", self.w)));
        }
        if self.k_max == 0 {
            return Err(Error::param("epiht needs at least one iteration"));
        }
        Ok(())
    }
}

/// Partial phase table: absent keys fall back to that phase's defaults
/// rather than to [`EpihtParams::default`].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EpihtPatch {
    r: Option<f64>,
    q: Option<f64>,
    w: Option<f64>,
    k_max: Option<usize>,
    operator: Option<ThresholdOperator>,
    nu_policy: Option<NuPolicy>,
}

impl EpihtPatch {
    fn apply(self, base: EpihtParams) -> EpihtParams {
        EpihtParams {
            r: self.r.unwrap_or(base.r),
            q: self.q.unwrap_or(base.q),
            w: self.w.unwrap_or(base.w),
            k_max: self.k_max.unwrap_or(base.k_max),
            operator: self.operator.unwrap_or(base.operator),
            nu_policy: self.nu_policy.unwrap_or(base.nu_policy),
        }
    }
}

fn de_phase_one<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<EpihtParams, D::Error> {
    Ok(EpihtPatch::deserialize(d)?.apply(EpihtParams::phase_one()))
}

fn de_phase_two<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<EpihtParams, D::Error> {
    Ok(EpihtPatch::deserialize(d)?.apply(EpihtParams::phase_two()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepihtParams {
    #[serde(deserialize_with = "de_phase_one")]
    pub phase1: EpihtParams,
    #[serde(deserialize_with = "de_phase_two")]
    pub phase2: EpihtParams,
    /// Shared proximal parameter; `None` selects `sigma_max(S)^2 + 1`.
    pub q: Option<f64>,
}

impl Default for DepihtParams {
    fn default() -> Self {
        Self {
            phase1: EpihtParams::phase_one(),
            phase2: EpihtParams::phase_two(),
            q: Some(50.0),
        }
    }
}

impl DepihtParams {
    /// The `q` both phases will use for `s`.
    pub fn resolve_q(&self, s: &SensitivityMatrix) -> f64 {
        self.q.unwrap_or_else(|| s.sigma_max_sq() + 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct EpihtRun {
    pub result: ReconResult,
    /// `H(g_k)` for `k = 0..=k_max`.
    pub h_history: Vec<f64>,
    /// Per iteration, `(H(y_{k+1}), H(g_k))` after the guard.
    pub guard_checks: Vec<(f64, f64)>,
    pub guard_fires: usize,
}

impl EpihtRun {
    pub fn guard_fire_rate(&self) -> f64 {
        if self.guard_checks.is_empty() {
            0.0
        } else {
            self.guard_fires as f64 / self.guard_checks.len() as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct DepihtRun {
    pub result: ReconResult,
    pub phase1: EpihtRun,
    pub phase2: EpihtRun,
    pub q: f64,
}

fn check_dims(g: &[f64], lambda: &[f64], s: &SensitivityMatrix) -> Result<()> {
    if g.len() != s.cols() {
        return Err(Error::dim("epiht: image", s.cols(), g.len()));
    }
    if lambda.len() != s.rows() {
        return Err(Error::dim("epiht: measurements", s.rows(), lambda.len()));
    }
    Ok(())
}

/// Returns `(G(g), Sg - lambda)`.
fn g_and_residual(g: &[f64], lambda: &[f64], s: &SensitivityMatrix) -> Result<(f64, Vec<f64>)> {
    check_dims(g, lambda, s)?;
    let mut res = s.apply(g)?;
    res.iter_mut().zip(lambda).for_each(|(r, l)| *r -= l);
    Ok((0.5 * dot(&res, &res) + 0.5 * dot(g, g), res))
}

pub fn g_value(g: &[f64], lambda: &[f64], s: &SensitivityMatrix) -> Result<f64> {
    Ok(g_and_residual(g, lambda, s)?.0)
}

pub fn grad_g(g: &[f64], lambda: &[f64], s: &SensitivityMatrix) -> Result<Vec<f64>> {
    let (_, res) = g_and_residual(g, lambda, s)?;
    let mut out = s.apply_t(&res)?;
    out.iter_mut().zip(g).for_each(|(o, x)| *o += x);
    Ok(out)
}

fn l0(g: &[f64]) -> usize {
    g.iter().filter(|&&x| x != 0.0).count()
}

pub fn h_value(g: &[f64], lambda: &[f64], s: &SensitivityMatrix, r: f64) -> Result<f64> {
    Ok(g_value(g, lambda, s)? + r * l0(g) as f64)
}

/// `r ||x||_0 + G(y) + <grad G(y), x - y> + (q/2) ||x - y||^2`
pub fn surrogate_value(
    x: &[f64],
    y: &[f64],
    lambda: &[f64],
    s: &SensitivityMatrix,
    r: f64,
    q: f64,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("surrogate: x", y.len(), x.len()));
    }
    let gy = g_value(y, lambda, s)?;
    let grad = grad_g(y, lambda, s)?;
    let mut lin = 0.0;
    let mut quad = 0.0;
    for k in 0..x.len() {
        let d = x[k] - y[k];
        lin += grad[k] * d;
        quad += d * d;
    }
    Ok(r * l0(x) as f64 + gy + lin + 0.5 * q * quad)
}

/// One thresholded gradient step from `y`. `g_prev` supplies the
/// sub-threshold values for `Nu` with `FreezePrevious`.
pub fn prox_step(
    y: &[f64],
    lambda: &[f64],
    s: &SensitivityMatrix,
    params: &EpihtParams,
    g_prev: &[f64],
) -> Result<Vec<f64>> {
    params.validate()?;
    if g_prev.len() != y.len() {
        return Err(Error::dim("prox_step: g_prev", y.len(), g_prev.len()));
    }
    let grad = grad_g(y, lambda, s)?;
    Ok(threshold_step(y, &grad, params, g_prev))
}

fn threshold_step(y: &[f64], grad: &[f64], params: &EpihtParams, g_prev: &[f64]) -> Vec<f64> {
    let a = params.threshold();
    let inv_q = 1.0 / params.q;
    y.iter()
        .zip(grad)
        .zip(g_prev)
        .map(|((&yi, &gi), &pi)| {
            let b = yi - inv_q * gi;
            if b.abs() > a {
                b
            } else {
                match (params.operator, params.nu_policy) {
                    (ThresholdOperator::Nu, NuPolicy::FreezePrevious) => pi,
                    _ => 0.0,
                }
            }
        })
        .collect()
}

fn epiht_inner(
    g_init: &[f64],
    lambda: &[f64],
    s: &SensitivityMatrix,
    params: &EpihtParams,
    method: Method,
) -> Result<EpihtRun> {
    params.validate()?;
    check_dims(g_init, lambda, s)?;
    let start = Instant::now();
    let EpihtParams {
        r,
        q,
        w,
        k_max,
        operator,
        nu_policy,
    } = params.clone();

    let h = |g: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (gv, res) = g_and_residual(g, lambda, s)?;
        Ok((gv + r * l0(g) as f64, res))
    };

    let mut g_prev = g_init.to_vec();
    let mut g = g_init.to_vec();
    let (mut h_g, mut res_g) = h(&g)?;
    let mut h_history = vec![h_g];
    let mut guard_checks = Vec::with_capacity(k_max);
    let mut history = Vec::with_capacity(k_max);
    let mut guard_fires = 0;

    for _ in 0..k_max {
        let mut y: Vec<f64> = g.iter().zip(&g_prev).map(|(a, b)| a + w * (a - b)).collect();
        let (mut h_y, mut res_y) = h(&y)?;
        if h_y > h_g {
            guard_fires += 1;
            y.clone_from(&g);
            h_y = h_g;
            res_y.clone_from(&res_g);
        }
        guard_checks.push((h_y, h_g));

        let mut grad = s.apply_t(&res_y)?;
        grad.iter_mut().zip(&y).for_each(|(o, x)| *o += x);
        let next = threshold_step(&y, &grad, params, &g);

        g_prev = std::mem::replace(&mut g, next);
        (h_g, res_g) = h(&g)?;
        h_history.push(h_g);
        history.push(IterRecord {
            residual: dot(&res_g, &res_g).sqrt(),
            objective: h_g,
        });
    }

    let operator = format!("{operator:?}");
    let nu_policy = format!("{nu_policy:?}");
    Ok(EpihtRun {
        result: ReconResult {
            image: PermittivityImage::new(g),
            history,
            elapsed: start.elapsed().as_secs_f64(),
            method,
            params: snapshot!(r, q, w, k_max, operator, nu_policy),
        },
        h_history,
        guard_checks,
        guard_fires,
    })
}

pub fn epiht_run(
    g_init: &[f64],
    lambda: &[f64],
    s: &SensitivityMatrix,
    params: &EpihtParams,
) -> Result<EpihtRun> {
    let method = match params.operator {
        ThresholdOperator::Psi => Method::EpihtI,
        ThresholdOperator::Nu => Method::EpihtII,
    };
    epiht_inner(g_init, lambda, s, params, method)
}

/// Phase I followed by phase II, both with the shared `q`.
pub fn depiht(
    g_init: &[f64],
    lambda: &[f64],
    s: &SensitivityMatrix,
    params: &DepihtParams,
) -> Result<DepihtRun> {
    check_dims(g_init, lambda, s)?;
    let start = Instant::now();
    let q = params.resolve_q(s);
    let p1 = EpihtParams { q, ..params.phase1.clone() };
    let p2 = EpihtParams { q, ..params.phase2.clone() };
    let phase1 = epiht_run(g_init, lambda, s, &p1)?;
    let phase2 = epiht_run(&phase1.result.image.values, lambda, s, &p2)?;

    let mut history = phase1.result.history.clone();
    history.extend_from_slice(&phase2.result.history);
    let mut snap = snapshot!(q);
    for (phase, run) in [("phase1", &phase1), ("phase2", &phase2)] {
        for (k, v) in &run.result.params {
            snap.insert(format!("{phase}.{k}"), v.clone());
        }
    }
    Ok(DepihtRun {
        result: ReconResult {
            image: phase2.result.image.clone(),
            history,
            elapsed: start.elapsed().as_secs_f64(),
            method: Method::Depiht,
            params: snap,
        },
        phase1,
        phase2,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, m: usize, p: usize) -> (SensitivityMatrix, Vec<f64>) {
        let data: Vec<f64> = (0..m * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        (SensitivityMatrix::from_rows_flat(m, p, data).unwrap(), lambda)
    }

    #[test]
    fn g_and_gradient_hand_cases() {
        let s = SensitivityMatrix::identity(2);
        assert_eq!(g_value(&[0.0, 0.0], &[1.0, 0.0], &s).unwrap(), 0.5);
        assert_eq!(grad_g(&[0.0, 0.0], &[1.0, 0.0], &s).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(g_value(&[0.0; 2], &[0.0; 2], &s).unwrap(), 0.0);
        assert_eq!(grad_g(&[0.0; 2], &[0.0; 2], &s).unwrap(), vec![0.0; 2]);
        assert_eq!(g_value(&[2.0, 0.0], &[0.0; 2], &s).unwrap(), 4.0);
        assert_eq!(h_value(&[2.0, 0.0], &[0.0; 2], &s, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (s, lambda) = random_instance(&mut rng, 5, 4);
            let g: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad = grad_g(&g, &lambda, &s).unwrap();
            let h = 1e-5;
            for k in 0..4 {
                let mut gp = g.clone();
                let mut gm = g.clone();
                gp[k] += h;
                gm[k] -= h;
                let fd = (g_value(&gp, &lambda, &s).unwrap() - g_value(&gm, &lambda, &s).unwrap()) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-6, "{fd} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn threshold_value() {
        let p = EpihtParams { r: 0.01, q: 2.0, ..EpihtParams::phase_one() };
        assert!((p.threshold() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn surrogate_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s, lambda) = random_instance(&mut rng, 3, 3);
        let y = [0.5, 0.0, -0.2];
        let sv = surrogate_value(&y, &y, &lambda, &s, 0.3, 4.0).unwrap();
        assert!((sv - h_value(&y, &lambda, &s, 0.3).unwrap()).abs() < 1e-14);
        let z = [0.0; 3];
        let sv = surrogate_value(&z, &z, &lambda, &s, 0.3, 4.0).unwrap();
        assert_eq!(sv, g_value(&z, &lambda, &s).unwrap());
    }

    #[test]
    fn psi_output_clears_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (s, lambda) = random_instance(&mut rng, 4, 4);
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = EpihtParams { r: rng.random_range(0.0..0.5), q: 3.0, ..EpihtParams::phase_one() };
            let out = prox_step(&y, &lambda, &s, &p, &y).unwrap();
            assert!(out.iter().all(|&x| x == 0.0 || x.abs() > p.threshold()));
        }
    }

    #[test]
    fn single_plain_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (s, lambda) = random_instance(&mut rng, 4, 3);
        let g0 = [0.9, -0.4, 0.1];
        let p = EpihtParams { k_max: 1, w: 0.0, q: 4.0, ..EpihtParams::phase_one() };
        let run = epiht_run(&g0, &lambda, &s, &p).unwrap();
        let direct = prox_step(&g0, &lambda, &s, &p, &g0).unwrap();
        assert_eq!(run.result.image.values, direct);
        assert_eq!(run.guard_fires, 0);
    }

    #[test]
    fn guard_catches_wild_extrapolation() {
        let s = SensitivityMatrix::identity(2);
        let lambda = [0.5, 0.5];
        // The first step moves g, so the w = 1000 extrapolation lands far
        // from the data and must be rejected.
        let p = EpihtParams { k_max: 3, w: 1000.0, q: 2.0, r: 0.0, ..EpihtParams::phase_one() };
        let run = epiht_run(&[3.0, -3.0], &lambda, &s, &p).unwrap();
        assert!(run.guard_fires >= 1);
        for (hy, hg) in &run.guard_checks {
            assert!(hy <= hg);
        }
    }

    #[test]
    fn artifact_removed_in_first_step() {
        // Unit S with lambda chosen so that the object pixels are stationary
        // for G: g = S^T (S g - lambda) + g = 0 gives lambda = 2 g.
        let s = SensitivityMatrix::identity(3);
        let g0 = [0.05, 0.8, 0.8];
        let lambda = [0.1, 1.6, 1.6];
        // b = y - grad/q = y exactly here, so only the threshold acts.
        let p = EpihtParams { k_max: 1, w: 0.0, r: 0.01, q: 2.0, ..EpihtParams::phase_one() };
        assert!((p.threshold() - 0.1).abs() < 1e-15);
        let run = epiht_run(&g0, &lambda, &s, &p).unwrap();
        assert_eq!(run.result.image.values, vec![0.0, 0.8, 0.8]);
    }

    #[test]
    fn nu_support_never_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let (s, lambda) = random_instance(&mut rng, 6, 6);
            let g0: Vec<f64> = (0..6)
                .map(|k| if k % 2 == 0 { rng.random_range(0.5..1.0) } else { 0.0 })
                .collect();
            let p = EpihtParams { q: s.sigma_max_sq() + 1.0, ..EpihtParams::phase_two() };
            let run = epiht_run(&g0, &lambda, &s, &p).unwrap();
            // Every off-support value is either still the frozen zero or a
            // component that cleared the threshold.
            for k in (1..6).step_by(2) {
                let v = run.result.image.values[k];
                assert!(v == 0.0 || v.abs() > p.threshold());
            }
        }
    }

    #[test]
    fn nu_zero_matches_psi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (s, lambda) = random_instance(&mut rng, 4, 4);
        let y = [0.3, -0.05, 0.9, 0.01];
        let psi = EpihtParams { r: 0.05, q: 3.0, ..EpihtParams::phase_one() };
        let nu = EpihtParams { operator: ThresholdOperator::Nu, nu_policy: NuPolicy::Zero, ..psi.clone() };
        let prev = [7.0; 4];
        assert_eq!(
            prox_step(&y, &lambda, &s, &psi, &prev).unwrap(),
            prox_step(&y, &lambda, &s, &nu, &prev).unwrap()
        );
        let frozen = EpihtParams { nu_policy: NuPolicy::FreezePrevious, ..nu };
        let out = prox_step(&y, &lambda, &s, &frozen, &prev).unwrap();
        assert!(out.iter().all(|&x| x == 7.0 || x.abs() > psi.threshold()));
    }

    #[test]
    fn zero_start_zero_data() {
        let s = SensitivityMatrix::identity(5);
        let params = DepihtParams { q: None, ..Default::default() };
        let run = depiht(&[0.0; 5], &[0.0; 5], &s, &params).unwrap();
        assert!(run.result.image.values.iter().all(|&x| x == 0.0));
        assert_eq!(run.q, 2.0);
    }

    #[test]
    fn rejects_bad_params() {
        let s = SensitivityMatrix::identity(2);
        for bad in [
            EpihtParams { r: -1.0, ..Default::default() },
            EpihtParams { q: 0.0, ..Default::default() },
            EpihtParams { w: -0.1, ..Default::default() },
            EpihtParams { k_max: 0, ..Default::default() },
        ] {
            assert!(epiht_run(&[0.0; 2], &[0.0; 2], &s, &bad).is_err());
        }
        assert!(epiht_run(&[0.0; 3], &[0.0; 2], &s, &EpihtParams::default()).is_err());
    }
}
