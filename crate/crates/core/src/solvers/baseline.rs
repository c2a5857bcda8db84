//! Linear back projection and projected Landweber iteration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{residual_norm, snapshot, IterRecord, Method, ReconResult};
use crate::error::{Error, Result};
use crate::linops::SensitivityMatrix;
use crate::phantom::PermittivityImage;

/// `g_p = (S^T lambda)_p / (S^T 1)_p`, zero where the column sum vanishes.
pub fn lbp(lambda: &[f64], s: &SensitivityMatrix) -> Result<PermittivityImage> {
    let num = s.apply_t(lambda)?;
    let den = s.apply_t(&vec![1.0; s.rows()])?;
    Ok(num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d == 0.0 { 0.0 } else { n / d })
        .collect::<Vec<_>>()
        .into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandweberParams {
    /// Relaxation factor.
    pub alpha: f64,
    pub iters: usize,
    /// Project onto `[0, 1]` after every step.
    pub clamp: bool,
}

impl Default for LandweberParams {
    fn default() -> Self {
        Self {
            alpha: 0.008,
            iters: 3000,
            clamp: true,
        }
    }
}

impl LandweberParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("landweber alpha must be positive, got {}", self.alpha)));
        }
        if self.iters == 0 {
            return Err(Error::param("landweber needs at least one iteration"));
        }
        Ok(())
    }
}

/// `g_{k+1} = clamp(g_k + alpha S^T (lambda - S g_k))` from `g_0 = 0`.
///
/// The history holds `||S g_k - lambda||` for `k = 1..=iters`; the
/// objective column is half its square.
pub fn landweber(lambda: &[f64], s: &SensitivityMatrix, params: &LandweberParams) -> Result<ReconResult> {
    params.validate()?;
    if lambda.len() != s.rows() {
        return Err(Error::dim("landweber: measurements", s.rows(), lambda.len()));
    }
    let start = Instant::now();
    let mut g = vec![0.0; s.cols()];
    let mut sg = vec![0.0; s.rows()];
    let mut r = vec![0.0; s.rows()];
    let mut step = vec![0.0; s.cols()];
    let initial = residual_norm(&sg, lambda);
    let mut history = Vec::with_capacity(params.iters);
    for k in 0..params.iters {
        r.iter_mut().zip(lambda).zip(&sg).for_each(|((r, l), sg)| *r = l - sg);
        s.apply_t_into(&r, &mut step, crate::par::Execution::Sequential)?;
        for (g, d) in g.iter_mut().zip(&step) {
            *g += params.alpha * d;
            if params.clamp {
                *g = g.clamp(0.0, 1.0);
            }
        }
        s.apply_into(&g, &mut sg)?;
        let res = residual_norm(&sg, lambda);
        history.push(IterRecord {
            residual: res,
            objective: 0.5 * res * res,
        });
        if !res.is_finite() || (initial > 0.0 && res > 1e6 * initial) {
            return Err(Error::Diverged {
                iteration: k + 1,
                residual: res,
                history: history.iter().map(|h| h.residual).collect(),
            });
        }
    }
    let (alpha, iters, clamp) = (params.alpha, params.iters, params.clamp);
    Ok(ReconResult {
        image: g.into(),
        history,
        elapsed: start.elapsed().as_secs_f64(),
        method: Method::Li,
        params: snapshot!(alpha, iters, clamp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbp_examples() {
        let s = SensitivityMatrix::from_rows(&[vec![0.2, 0.3, 0.5]]).unwrap();
        assert_eq!(lbp(&[0.0], &s).unwrap().values, vec![0.0; 3]);
        let ones = SensitivityMatrix::from_rows(&[vec![1.0; 4]]).unwrap();
        assert_eq!(lbp(&[1.0], &ones).unwrap().values, vec![1.0; 4]);
        let s = SensitivityMatrix::from_rows(&[vec![0.2, 0.0], vec![0.7, 0.0]]).unwrap();
        let g = lbp(&[1.0, 1.0], &s).unwrap();
        assert_eq!(g.values, vec![1.0, 0.0]);
    }

    #[test]
    fn identity_geometric_series() {
        let s = SensitivityMatrix::identity(1);
        let mut p = LandweberParams {
            alpha: 0.5,
            iters: 1,
            clamp: false,
        };
        assert_eq!(landweber(&[1.0], &s, &p).unwrap().image.values, vec![0.5]);
        p.iters = 2;
        let r = landweber(&[1.0], &s, &p).unwrap();
        assert_eq!(r.image.values, vec![0.75]);
        assert_eq!(r.history.len(), 2);
        assert_eq!(r.history[1].residual, 0.25);
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = SensitivityMatrix::from_rows(&[vec![0.3, 0.1], vec![0.2, 0.4]]).unwrap();
        let r = landweber(&[0.0, 0.0], &s, &LandweberParams::default()).unwrap();
        assert_eq!(r.image.values, vec![0.0, 0.0]);
    }

    #[test]
    fn divergence_is_reported_with_history() {
        let s = SensitivityMatrix::identity(2);
        let p = LandweberParams {
            alpha: 5.0,
            iters: 100,
            clamp: false,
        };
        match landweber(&[1.0, -1.0], &s, &p) {
            Err(Error::Diverged { history, iteration, .. }) => {
                assert_eq!(history.len(), iteration);
                assert!(history.windows(2).all(|w| w[1] > w[0]));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params() {
        let s = SensitivityMatrix::identity(1);
        let bad = LandweberParams {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(landweber(&[1.0], &s, &bad).is_err());
        let bad = LandweberParams {
            iters: 0,
            ..Default::default()
        };
        assert!(landweber(&[1.0], &s, &bad).is_err());
        assert!(landweber(&[1.0, 2.0], &s, &LandweberParams::default()).is_err());
    }
}
