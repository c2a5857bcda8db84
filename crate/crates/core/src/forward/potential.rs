//! Electrode potentials: `div(eps grad phi) = 0` on the interior cells with
//! the excited electrode at 1 V and every other ring cell at 0 V.

use super::mesh::{CellKind, Face, PermittivityMap, SolverMesh};
use crate::cg::{pcg, Stop};
use crate::error::{Error, Result};

/// Harmonic mean of two cell permittivities; the face coefficient between
/// interior cells.
pub(crate) fn face_coeff(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Derivative of [`face_coeff`] with respect to `a`.
pub(crate) fn face_coeff_da(a: f64, b: f64) -> f64 {
    2.0 * b * b / ((a + b) * (a + b))
}

/// Assembled five-point operator for one permittivity map.
pub(crate) struct Stencil {
    diag: Vec<f64>,
    /// Up to four interior neighbours per cell as `(index, coefficient)`.
    nbrs: Vec<[(usize, f64); 4]>,
    n_nbrs: Vec<u8>,
    /// `(interior cell, electrode, coefficient)` per electrode-ring face.
    electrode_faces: Vec<(usize, usize, f64)>,
    eps_max: f64,
}

impl Stencil {
    pub(crate) fn new(mesh: &SolverMesh, perm: &PermittivityMap) -> Result<Self> {
        let n = mesh.n_interior();
        if perm.values.len() != n {
            return Err(Error::dim("permittivity map", n, perm.values.len()));
        }
        if let Some((a, &e)) = perm.values.iter().enumerate().find(|(_, e)| !(**e >= 1.0) || !e.is_finite()) {
            return Err(Error::param(format!(
                "relative permittivity must be finite and >= 1, cell {a} has {e}"
            )));
        }
        let eps = &perm.values;
        let mut diag = vec![0.0; n];
        let mut nbrs = vec![[(usize::MAX, 0.0); 4]; n];
        let mut n_nbrs = vec![0u8; n];
        let mut electrode_faces = Vec::new();
        for face in &mesh.faces {
            match *face {
                Face::Inner { a, b } => {
                    let c = face_coeff(eps[a], eps[b]);
                    diag[a] += c;
                    diag[b] += c;
                    nbrs[a][n_nbrs[a] as usize] = (b, c);
                    n_nbrs[a] += 1;
                    nbrs[b][n_nbrs[b] as usize] = (a, c);
                    n_nbrs[b] += 1;
                }
                Face::Boundary { a, electrode, .. } => {
                    let c = eps[a];
                    diag[a] += c;
                    if let Some(k) = electrode {
                        electrode_faces.push((a, k, c));
                    }
                }
            }
        }
        Ok(Self {
            diag,
            nbrs,
            n_nbrs,
            electrode_faces,
            eps_max: perm.max(),
        })
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[a] * v[a];
            for &(b, c) in &self.nbrs[a][..self.n_nbrs[a] as usize] {
                acc -= c * v[b];
            }
            *o = acc;
        }
    }

    fn rhs(&self, excited: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.diag.len()];
        for &(a, k, c) in &self.electrode_faces {
            if k == excited {
                b[a] += c;
            }
        }
        b
    }

    /// Charge collected on electrode `k` from the field `phi` (interior
    /// values), with the ring at the excitation pattern of `excited`.
    pub(crate) fn electrode_flux(&self, phi: &[f64], excited: usize, k: usize) -> f64 {
        let v_ring = if k == excited { 1.0 } else { 0.0 };
        self.electrode_faces
            .iter()
            .filter(|f| f.1 == k)
            .map(|&(a, _, c)| c * (phi[a] - v_ring))
            .sum()
    }

    pub(crate) fn solve(&self, excited: usize, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
        let b = self.rhs(excited);
        let mut x = vec![0.0; b.len()];
        // The equation is scaled by the largest permittivity so the
        // tolerance is independent of the material's absolute level.
        let report = pcg(
            |v, out| self.apply(v, out),
            Some(&self.diag),
            &b,
            &mut x,
            Stop::MaxNorm(tol * self.eps_max),
            max_iter,
        );
        if !report.converged {
            return Err(Error::NoConvergence {
                solver: "potential CG",
                iterations: report.iterations,
                residual: report.residual / self.eps_max,
            });
        }
        Ok((x, report.residual / self.eps_max, report.iterations))
    }

    /// `max |A phi - b| / eps_max` for an interior field.
    #[cfg(test)]
    pub(crate) fn residual(&self, phi: &[f64], excited: usize) -> f64 {
        let b = self.rhs(excited);
        let mut ax = vec![0.0; phi.len()];
        self.apply(phi, &mut ax);
        ax.iter()
            .zip(&b)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            / self.eps_max
    }
}

/// Potential on the padded solver grid for one excited electrode.
#[derive(Clone, Debug)]
pub struct PotentialField {
    /// Solver grid side (without the pad).
    pub side: usize,
    /// 0-based electrode held at 1 V.
    pub excited: usize,
    /// Row-major over the `(side + 2)^2` padded grid: interior cells carry
    /// the solution, electrode ring cells their Dirichlet value, the screen
    /// and cells outside the ring 0.
    pub potential: Vec<f64>,
    /// Interior values only, indexed like the mesh's interior cells.
    pub interior: Vec<f64>,
    /// Max-norm residual of the discrete field equation, scaled by the
    /// largest permittivity.
    pub residual: f64,
    pub iterations: usize,
}

impl PotentialField {
    pub fn at(&self, pr: usize, pc: usize) -> f64 {
        self.potential[pr * (self.side + 2) + pc]
    }

    /// Value on the padded cell `idx`.
    pub(crate) fn value(&self, idx: usize) -> f64 {
        self.potential[idx]
    }
}

/// Default cap on CG iterations per field solve.
pub const MAX_CG_ITER: usize = 20_000;

/// Solves for the potential with electrode `excited` (0-based) at 1 V.
pub fn solve_potential(
    mesh: &SolverMesh,
    perm: &PermittivityMap,
    excited: usize,
    tol: f64,
) -> Result<PotentialField> {
    if excited >= mesh.n_electrodes {
        return Err(Error::param(format!(
            "electrode {excited} out of range for {} electrodes",
            mesh.n_electrodes
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::param(format!("solver tolerance must be positive, got {tol}")));
    }
    let stencil = Stencil::new(mesh, perm)?;
    solve_with(mesh, &stencil, excited, tol)
}

pub(crate) fn solve_with(mesh: &SolverMesh, stencil: &Stencil, excited: usize, tol: f64) -> Result<PotentialField> {
    let (interior, residual, iterations) = stencil.solve(excited, tol, MAX_CG_ITER)?;
    Ok(scatter(mesh, excited, interior, residual, iterations))
}

fn scatter(mesh: &SolverMesh, excited: usize, interior: Vec<f64>, residual: f64, iterations: usize) -> PotentialField {
    let ps = mesh.padded_side();
    let mut potential = vec![0.0; ps * ps];
    for (idx, v) in potential.iter_mut().enumerate() {
        match mesh.kind_at(idx) {
            CellKind::Interior(a) => *v = interior[a],
            CellKind::Boundary(Some(k)) if k == excited => *v = 1.0,
            _ => {}
        }
    }
    PotentialField {
        side: mesh.side,
        excited,
        potential,
        interior,
        residual,
        iterations,
    }
}
