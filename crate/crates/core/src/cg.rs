//! Matrix-free preconditioned conjugate gradients for SPD systems.

/// Stopping rule for [`pcg`].
#[derive(Clone, Copy, Debug)]
pub enum Stop {
    /// `max_i |b - Ax|_i <= tol`
    MaxNorm(f64),
    /// `||b - Ax||_2 <= tol * ||b||_2`
    Relative(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Final residual in the norm of the stopping rule (relative for
    /// [`Stop::Relative`]).
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// `apply(v, out)` must write `A v` into `out`. `diag`, when given, is the
/// Jacobi preconditioner (the diagonal of `A`). On convergence the true
/// residual is recomputed; if recurrence drift pushed it above tolerance the
/// iteration restarts from the current `x`.
pub fn pcg<F>(
    mut apply: F,
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    stop: Stop,
    max_iter: usize,
) -> CgReport
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    assert_eq!(x.len(), n, "pcg: x and b lengths differ");
    let b_norm = dot(b, b).sqrt();
    let measure = |r: &[f64]| match stop {
        Stop::MaxNorm(_) => max_abs(r),
        Stop::Relative(_) => {
            if b_norm == 0.0 {
                dot(r, r).sqrt()
            } else {
                dot(r, r).sqrt() / b_norm
            }
        }
    };
    let tol = match stop {
        Stop::MaxNorm(t) | Stop::Relative(t) => t,
    };

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let precondition = |r: &[f64], z: &mut [f64]| match diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r / d),
        None => z.copy_from_slice(r),
    };

    let mut iterations = 0;
    loop {
        // (re)start from the true residual
        apply(x, &mut ap);
        r.iter_mut()
            .zip(b)
            .zip(&ap)
            .for_each(|((r, b), ax)| *r = b - ax);
        let res = measure(&r);
        if res <= tol {
            return CgReport {
                iterations,
                residual: res,
                converged: true,
            };
        }
        if iterations >= max_iter {
            return CgReport {
                iterations,
                residual: res,
                converged: false,
            };
        }
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
            if measure(&r) <= tol {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
    }
}
