//! Normalized sensitivity map at the low-permittivity operating point.
//!
//! The discrete capacitance is `C_ij = -sum_f c_f dphi_i(f) dphi_j(f)` over
//! all faces, where `dphi(f)` is the potential jump across face `f`. Because
//! both fields solve the discrete equation, its derivative with respect to a
//! cell permittivity only sees the explicit dependence of the face
//! coefficients:
//!
//! `dC_ij / d eps_c = -sum_{f touching c} (d c_f / d eps_c) dphi_i(f) dphi_j(f)`
//!
//! which is the discrete form of `-int grad phi_i . grad phi_j dA` over the
//! cell. Cell sensitivities are summed into reconstruction pixels and each row
//! is scaled by `(eps_high - eps_low) / (C_high - C_low)`, so that the
//! normalized capacitance is `S g` to first order in the normalized
//! permittivity `g`.

use super::capacitance::CalibrationPair;
use super::mesh::{Face, PermittivityMap, SolverMesh};
use super::potential::{face_coeff_da, PotentialField};
use crate::error::{Error, Result};
use crate::geometry::PairIndex;
use crate::linops::SensitivityMatrix;
use crate::par::{map_range, Execution};

/// Per-cell capacitance derivatives for every pair, `M x n_interior`.
pub fn cell_sensitivities(
    mesh: &SolverMesh,
    perm: &PermittivityMap,
    fields: &[PotentialField],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    if fields.len() != mesh.n_electrodes {
        return Err(Error::dim("electrode fields", mesh.n_electrodes, fields.len()));
    }
    if perm.values.len() != mesh.n_interior() {
        return Err(Error::dim("permittivity map", mesh.n_interior(), perm.values.len()));
    }
    let eps = &perm.values;
    // potential jump across every face, per excitation
    let jumps: Vec<Vec<f64>> = map_range(exec, fields.len(), |k| {
        let f = &fields[k];
        mesh.faces
            .iter()
            .map(|face| match *face {
                Face::Inner { a, b } => f.interior[a] - f.interior[b],
                Face::Boundary { a, cell, .. } => f.interior[a] - f.value(cell),
            })
            .collect()
    });
    let pairs = PairIndex::new(mesh.n_electrodes);
    Ok(map_range(exec, pairs.len(), |m| {
        let (i, j) = pairs.pairs()[m];
        let (ji, jj) = (&jumps[i - 1], &jumps[j - 1]);
        let mut row = vec![0.0; mesh.n_interior()];
        for (f, face) in mesh.faces.iter().enumerate() {
            let prod = ji[f] * jj[f];
            match *face {
                Face::Inner { a, b } => {
                    row[a] -= face_coeff_da(eps[a], eps[b]) * prod;
                    row[b] -= face_coeff_da(eps[b], eps[a]) * prod;
                }
                Face::Boundary { a, .. } => row[a] -= prod,
            }
        }
        row
    }))
}

/// Sensitivity matrix from the low-calibration fields.
pub fn compute_sensitivity(
    mesh: &SolverMesh,
    low_perm: &PermittivityMap,
    low_fields: &[PotentialField],
    cal: &CalibrationPair,
    eps_low: f64,
    eps_high: f64,
    exec: Execution,
) -> Result<SensitivityMatrix> {
    let cells = cell_sensitivities(mesh, low_perm, low_fields, exec)?;
    if cal.low.len() != cells.len() {
        return Err(Error::dim("calibration channels", cells.len(), cal.low.len()));
    }
    let p = mesh.n_pixels();
    let rows: Vec<Vec<f64>> = map_range(exec, cells.len(), |m| {
        let scale = (eps_high - eps_low) / cal.span(m);
        let mut row = vec![0.0; p];
        for (a, d) in cells[m].iter().enumerate() {
            row[mesh.pixel_of(a)] += d;
        }
        row.iter_mut().for_each(|s| *s *= scale);
        row
    });
    for (m, r) in rows.iter().enumerate() {
        if r.iter().all(|&v| v == 0.0) || r.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!("sensitivity row {m} is degenerate")));
        }
    }
    SensitivityMatrix::from_rows(&rows)
}
