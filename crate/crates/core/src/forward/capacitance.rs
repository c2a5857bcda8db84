use super::mesh::{Face, PermittivityMap, SolverMesh};
use super::potential::{face_coeff, solve_with, PotentialField, Stencil};
use crate::error::{Error, Result};
use crate::geometry::PairIndex;
use crate::par::{try_map_range, Execution};

/// Inter-electrode capacitances for every pair, in pair-index order.
/// Units are permittivity times the 2-D face conductance (consistent, not
/// farads).
#[derive(Clone, Debug, PartialEq)]
pub struct CapacitanceFrame {
    pub values: Vec<f64>,
}

impl CapacitanceFrame {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Capacitances mapped to `[0, 1]` between the calibration frames.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedCapacitance {
    pub lambda: Vec<f64>,
}

/// Frames for the vessel filled with the low and the high permittivity
/// material.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationPair {
    pub low: CapacitanceFrame,
    pub high: CapacitanceFrame,
}

impl CalibrationPair {
    pub fn new(low: CapacitanceFrame, high: CapacitanceFrame) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::dim("calibration frames", low.len(), high.len()));
        }
        for (m, (&l, &h)) in low.values.iter().zip(&high.values).enumerate() {
            if !(h > l) {
                return Err(Error::Calibration {
                    channel: m,
                    low: l,
                    high: h,
                });
            }
        }
        Ok(Self { low, high })
    }

    pub fn span(&self, m: usize) -> f64 {
        self.high.values[m] - self.low.values[m]
    }
}

/// Parallel normalization model: `(C - C_low) / (C_high - C_low)`.
pub fn normalize(c: &CapacitanceFrame, cal: &CalibrationPair) -> Result<NormalizedCapacitance> {
    if c.len() != cal.low.len() {
        return Err(Error::dim("frame vs calibration", cal.low.len(), c.len()));
    }
    let mut lambda = Vec::with_capacity(c.len());
    for m in 0..c.len() {
        let (l, h) = (cal.low.values[m], cal.high.values[m]);
        if !(h > l) {
            return Err(Error::Calibration {
                channel: m,
                low: l,
                high: h,
            });
        }
        lambda.push((c.values[m] - l) / (h - l));
    }
    Ok(NormalizedCapacitance { lambda })
}

/// Fields for every electrode plus the capacitance frame they produce.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub fields: Vec<PotentialField>,
    pub frame: CapacitanceFrame,
}

/// Solves one field per electrode and evaluates every pair capacitance.
///
/// `C(i, j)` is the charge induced on electrode `j` by exciting `i`. It is
/// evaluated in the reciprocal energy form
/// `C(i, j) = -sum_f c_f dphi_i(f) dphi_j(f)`, which equals the Gauss-law
/// flux into electrode `j` (see [`electrode_flux`]) for exact fields, is
/// symmetric in `i, j`, and has an error quadratic in the field residuals.
pub fn measure(mesh: &SolverMesh, perm: &PermittivityMap, tol: f64, exec: Execution) -> Result<Measurement> {
    let stencil = Stencil::new(mesh, perm)?;
    let n = mesh.n_electrodes;
    let fields = try_map_range(exec, n, |k| solve_with(mesh, &stencil, k, tol))?;
    let pairs = PairIndex::new(n);
    let eps = &perm.values;
    let values = pairs
        .pairs()
        .iter()
        .map(|&(i, j)| {
            let (fi, fj) = (&fields[i - 1], &fields[j - 1]);
            let mut energy = 0.0;
            for face in &mesh.faces {
                energy += match *face {
                    Face::Inner { a, b } => {
                        face_coeff(eps[a], eps[b])
                            * (fi.interior[a] - fi.interior[b])
                            * (fj.interior[a] - fj.interior[b])
                    }
                    Face::Boundary { a, cell, .. } => {
                        eps[a] * (fi.interior[a] - fi.value(cell)) * (fj.interior[a] - fj.value(cell))
                    }
                };
            }
            -energy
        })
        .collect();
    Ok(Measurement {
        fields,
        frame: CapacitanceFrame { values },
    })
}

/// Gauss-law charge on electrode `j` (1-based) from the field of electrode
/// `i`: the flux of `eps grad phi_i` through the faces separating `j`'s ring
/// cells from the interior.
pub fn electrode_flux(mesh: &SolverMesh, perm: &PermittivityMap, field_i: &PotentialField, j: usize) -> Result<f64> {
    let stencil = Stencil::new(mesh, perm)?;
    Ok(stencil.electrode_flux(&field_i.interior, field_i.excited, j - 1))
}

pub fn compute_capacitances(
    mesh: &SolverMesh,
    perm: &PermittivityMap,
    tol: f64,
    exec: Execution,
) -> Result<CapacitanceFrame> {
    Ok(measure(mesh, perm, tol, exec)?.frame)
}
