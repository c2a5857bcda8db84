//! Finite-difference mesh of the vessel cross-section.
//!
//! The solver grid refines the reconstruction grid by an integer factor and
//! carries a one-cell pad on every side, so that every interior cell has four
//! neighbours on the array. Cells whose centre is strictly inside the vessel
//! are unknowns. Non-interior cells touching an interior cell form the
//! boundary ring: a ring cell whose centre angle falls on an electrode arc
//! belongs to that electrode, the rest are the grounded screen.

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, SensorGeometry};
use crate::phantom::{union_contains, PermittivityImage, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Interior(usize),
    /// Boundary ring cell; `Some(k)` when it belongs to electrode `k`
    /// (0-based), `None` for the grounded screen.
    Boundary(Option<usize>),
    Outside,
}

/// A face between an interior cell and one of its neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Face {
    Inner { a: usize, b: usize },
    /// `a` interior, `cell` a padded index on the boundary ring.
    Boundary { a: usize, cell: usize, electrode: Option<usize> },
}

#[derive(Clone, Debug)]
pub struct SolverMesh {
    pub side: usize,
    pub cell_size: f64,
    pub radius: f64,
    pub n_electrodes: usize,
    kinds: Vec<CellKind>,
    /// interior index -> padded index
    interior: Vec<usize>,
    pub(crate) faces: Vec<Face>,
    /// interior index -> reconstruction pixel
    pixel_of: Vec<usize>,
    n_pixels: usize,
}

impl SolverMesh {
    /// Builds a mesh refining `grid` by `factor` per axis.
    pub fn new(geometry: &SensorGeometry, grid: &PixelGrid, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("solver refinement factor must be >= 1"));
        }
        if (grid.radius - geometry.radius()).abs() > 1e-12 * geometry.radius() {
            return Err(Error::Geometry(format!(
                "grid radius {} does not match sensor radius {}",
                grid.radius,
                geometry.radius()
            )));
        }
        let side = grid.side * factor;
        let radius = geometry.radius();
        let cell_size = 2.0 * radius / side as f64;
        let ps = side + 2;

        let centre = |pr: usize, pc: usize| {
            let x = -radius + (pc as f64 - 0.5) * cell_size;
            let y = radius - (pr as f64 - 0.5) * cell_size;
            (x, y)
        };
        let inside = |pr: usize, pc: usize| {
            let (x, y) = centre(pr, pc);
            x * x + y * y < radius * radius
        };

        let mut kinds = vec![CellKind::Outside; ps * ps];
        let mut interior = Vec::new();
        for pr in 0..ps {
            for pc in 0..ps {
                if inside(pr, pc) {
                    kinds[pr * ps + pc] = CellKind::Interior(interior.len());
                    interior.push(pr * ps + pc);
                }
            }
        }
        for &idx in &interior {
            let (pr, pc) = (idx / ps, idx % ps);
            for nb in [idx - ps, idx + ps, idx - 1, idx + 1] {
                if kinds[nb] == CellKind::Outside {
                    let (x, y) = centre(nb / ps, nb % ps);
                    let angle = y.atan2(x).to_degrees();
                    kinds[nb] = CellKind::Boundary(geometry.electrode_at(angle));
                }
            }
            debug_assert!(pr >= 1 && pc >= 1 && pr <= side && pc <= side);
        }

        let mut faces = Vec::new();
        for (a, &idx) in interior.iter().enumerate() {
            for nb in [idx - ps, idx + ps, idx - 1, idx + 1] {
                match kinds[nb] {
                    CellKind::Interior(b) if b > a => faces.push(Face::Inner { a, b }),
                    CellKind::Interior(_) => {}
                    CellKind::Boundary(electrode) => faces.push(Face::Boundary {
                        a,
                        cell: nb,
                        electrode,
                    }),
                    CellKind::Outside => unreachable!("interior cell next to a non-ring cell"),
                }
            }
        }

        // Interior solver cells whose parent pixel is masked out go to the
        // nearest active pixel.
        let pixel_of = interior
            .iter()
            .map(|&idx| {
                let (row, col) = (idx / ps - 1, idx % ps - 1);
                let (pr, pc) = (row / factor, col / factor);
                grid.active(pr, pc).unwrap_or_else(|| {
                    let (x, y) = centre(idx / ps, idx % ps);
                    nearest_pixel(grid, x, y)
                })
            })
            .collect();

        Ok(Self {
            side,
            cell_size,
            radius,
            n_electrodes: geometry.n_electrodes,
            kinds,
            interior,
            faces,
            pixel_of,
            n_pixels: grid.n_active(),
        })
    }

    pub fn padded_side(&self) -> usize {
        self.side + 2
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    /// Kind of the padded cell `(pr, pc)`; row/column 0 is the pad.
    pub fn kind(&self, pr: usize, pc: usize) -> CellKind {
        self.kinds[pr * self.padded_side() + pc]
    }

    pub(crate) fn kind_at(&self, idx: usize) -> CellKind {
        self.kinds[idx]
    }

    /// Padded index of interior cell `a`.
    pub fn interior_cell(&self, a: usize) -> usize {
        self.interior[a]
    }

    /// Reconstruction pixel that interior cell `a` contributes to.
    pub fn pixel_of(&self, a: usize) -> usize {
        self.pixel_of[a]
    }

    pub fn centre(&self, pr: usize, pc: usize) -> (f64, f64) {
        let x = -self.radius + (pc as f64 - 0.5) * self.cell_size;
        let y = self.radius - (pr as f64 - 0.5) * self.cell_size;
        (x, y)
    }

    /// Number of ring cells assigned to each electrode.
    pub fn electrode_cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_electrodes];
        for k in &self.kinds {
            if let CellKind::Boundary(Some(e)) = k {
                counts[*e] += 1;
            }
        }
        counts
    }

    pub fn uniform(&self, eps: f64) -> PermittivityMap {
        PermittivityMap {
            values: vec![eps; self.n_interior()],
        }
    }

    /// Material `eps_high` inside the union of `shapes`, `eps_low` elsewhere,
    /// sampled at solver-cell centres.
    pub fn from_shapes(&self, shapes: &[Shape], eps_low: f64, eps_high: f64) -> Result<PermittivityMap> {
        for s in shapes {
            s.validate(self.radius)?;
        }
        let ps = self.padded_side();
        let values = self
            .interior
            .iter()
            .map(|&idx| {
                let (x, y) = self.centre(idx / ps, idx % ps);
                if union_contains(shapes, x, y) {
                    eps_high
                } else {
                    eps_low
                }
            })
            .collect();
        Ok(PermittivityMap { values })
    }

    /// Lifts a normalized pixel image to solver cells:
    /// `eps = eps_low + (eps_high - eps_low) * g`.
    pub fn from_image(&self, g: &PermittivityImage, eps_low: f64, eps_high: f64) -> Result<PermittivityMap> {
        if g.len() != self.n_pixels {
            return Err(Error::dim("image pixels", self.n_pixels, g.len()));
        }
        let values = self
            .pixel_of
            .iter()
            .map(|&p| eps_low + (eps_high - eps_low) * g.values[p])
            .collect();
        Ok(PermittivityMap { values })
    }
}

fn nearest_pixel(grid: &PixelGrid, x: f64, y: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for p in 0..grid.n_active() {
        let (r, c) = grid.position(p);
        let (px, py) = grid.centre(r, c);
        let d = (px - x).powi(2) + (py - y).powi(2);
        if d < best.0 {
            best = (d, p);
        }
    }
    best.1
}

/// Relative permittivity per interior solver cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PermittivityMap {
    pub values: Vec<f64>,
}

impl PermittivityMap {
    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}
