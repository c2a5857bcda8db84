//! Forward simulator standing in for the acquisition hardware: field solves,
//! capacitances, calibration, the sensitivity map, and frame noise.

mod capacitance;
mod mesh;
mod noise;
mod potential;
mod sensitivity;

pub use capacitance::{
    compute_capacitances, electrode_flux, measure, normalize, CalibrationPair, CapacitanceFrame, Measurement,
    NormalizedCapacitance,
};
pub use mesh::{CellKind, PermittivityMap, SolverMesh};
pub use noise::{add_noise, average_frames, noisy_frames};
pub use potential::{solve_potential, PotentialField, MAX_CG_ITER};
pub use sensitivity::{cell_sensitivities, compute_sensitivity};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{PixelGrid, SensorGeometry};
use crate::linops::SensitivityMatrix;
use crate::par::Execution;
use crate::phantom::Shape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    /// Solver cells per reconstruction pixel along each axis.
    pub refine: usize,
    pub eps_low: f64,
    pub eps_high: f64,
    /// Field-equation residual tolerance.
    pub tol: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            refine: 2,
            eps_low: 1.0,
            eps_high: 4.0,
            tol: 1e-8,
        }
    }
}

/// Low calibration fields and both calibration frames.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub pair: CalibrationPair,
    pub low: Measurement,
}

#[derive(Clone, Debug)]
pub struct ForwardModel {
    pub geometry: SensorGeometry,
    pub grid: PixelGrid,
    pub mesh: SolverMesh,
    pub config: ForwardConfig,
    pub exec: Execution,
}

impl ForwardModel {
    pub fn new(geometry: SensorGeometry, grid: PixelGrid, config: ForwardConfig, exec: Execution) -> Result<Self> {
        let mesh = SolverMesh::new(&geometry, &grid, config.refine)?;
        Ok(Self {
            geometry,
            grid,
            mesh,
            config,
            exec,
        })
    }

    pub fn measure(&self, perm: &PermittivityMap) -> Result<Measurement> {
        measure(&self.mesh, perm, self.config.tol, self.exec)
    }

    pub fn frame(&self, perm: &PermittivityMap) -> Result<CapacitanceFrame> {
        Ok(self.measure(perm)?.frame)
    }

    pub fn shapes_perm(&self, shapes: &[Shape]) -> Result<PermittivityMap> {
        self.mesh.from_shapes(shapes, self.config.eps_low, self.config.eps_high)
    }

    pub fn calibrate(&self) -> Result<Calibration> {
        let low = self.measure(&self.mesh.uniform(self.config.eps_low))?;
        let high = self.frame(&self.mesh.uniform(self.config.eps_high))?;
        let pair = CalibrationPair::new(low.frame.clone(), high)?;
        Ok(Calibration { pair, low })
    }

    pub fn sensitivity(&self, cal: &Calibration) -> Result<SensitivityMatrix> {
        compute_sensitivity(
            &self.mesh,
            &self.mesh.uniform(self.config.eps_low),
            &cal.low.fields,
            &cal.pair,
            self.config.eps_low,
            self.config.eps_high,
            self.exec,
        )
    }
}
