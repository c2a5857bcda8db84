//! Sensor layout, the masked reconstruction grid and electrode-pair indexing.
//!
//! Coordinates are in millimetres with the origin at the vessel centre, `x`
//! to the right and `y` up. Grids are stored row-major with row 0 at the top
//! (largest `y`), so a cell index is `row * side + col`. Electrode 1 is
//! centred on the positive `x` axis and numbering runs counter-clockwise.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SensorGeometry {
    pub diameter: f64,
    pub n_electrodes: usize,
    /// Angular span of each electrode, degrees.
    pub electrode_span: f64,
    /// `(start, end)` angle of each arc in degrees, `start < end`; the first
    /// arc starts at a negative angle.
    pub electrode_arcs: Vec<(f64, f64)>,
}

impl SensorGeometry {
    pub fn new(n_electrodes: usize, diameter: f64, span: f64) -> Result<Self> {
        if n_electrodes < 3 {
            return Err(Error::Geometry(format!(
                "need at least 3 electrodes, got {n_electrodes}"
            )));
        }
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::Geometry(format!("diameter must be positive, got {diameter}")));
        }
        let pitch = 360.0 / n_electrodes as f64;
        if !(span > 0.0) {
            return Err(Error::Geometry(format!("electrode span must be positive, got {span}")));
        }
        if span >= pitch {
            return Err(Error::Geometry(format!(
                "electrode span {span} deg overlaps neighbours (pitch {pitch} deg)"
            )));
        }
        let electrode_arcs = (0..n_electrodes)
            .map(|k| {
                let centre = k as f64 * pitch;
                (centre - span / 2.0, centre + span / 2.0)
            })
            .collect();
        Ok(Self {
            diameter,
            n_electrodes,
            electrode_span: span,
            electrode_arcs,
        })
    }

    /// The default sensor: 8 electrodes, 76 mm, 30 degree span.
    pub fn standard() -> Self {
        Self::new(8, 76.0, 30.0).expect("standard geometry is valid")
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }

    pub fn pitch(&self) -> f64 {
        360.0 / self.n_electrodes as f64
    }

    pub fn gap(&self) -> f64 {
        self.pitch() - self.electrode_span
    }

    /// Centre angle of electrode `k` (0-based), degrees.
    pub fn electrode_centre(&self, k: usize) -> f64 {
        k as f64 * self.pitch()
    }

    /// 0-based electrode whose arc contains the polar angle `angle_deg`.
    pub fn electrode_at(&self, angle_deg: f64) -> Option<usize> {
        let pitch = self.pitch();
        let a = angle_deg.rem_euclid(360.0);
        let k = ((a / pitch).round() as usize) % self.n_electrodes;
        let mut d = (a - k as f64 * pitch).abs();
        if d > 180.0 {
            d = 360.0 - d;
        }
        (d <= self.electrode_span / 2.0).then_some(k)
    }

    pub fn pairs(&self) -> PairIndex {
        PairIndex::new(self.n_electrodes)
    }
}

/// Square grid over the bounding box of the vessel with a circular mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    pub side: usize,
    pub cell_size: f64,
    pub radius: f64,
    pub active_mask: Vec<bool>,
    /// Cell index -> active pixel index.
    active_index: Vec<Option<usize>>,
    /// Active pixel index -> cell index.
    active_cells: Vec<usize>,
}

impl PixelGrid {
    pub fn new(side: usize, geometry: &SensorGeometry) -> Result<Self> {
        Self::with_radius(side, geometry.radius())
    }

    pub fn with_radius(side: usize, radius: f64) -> Result<Self> {
        if side < 2 {
            return Err(Error::Geometry(format!("grid side must be >= 2, got {side}")));
        }
        let cell_size = 2.0 * radius / side as f64;
        let mut active_mask = vec![false; side * side];
        let mut active_index = vec![None; side * side];
        let mut active_cells = Vec::new();
        for row in 0..side {
            for col in 0..side {
                let (x, y) = cell_centre(side, cell_size, radius, row, col);
                let idx = row * side + col;
                if x * x + y * y < radius * radius {
                    active_mask[idx] = true;
                    active_index[idx] = Some(active_cells.len());
                    active_cells.push(idx);
                }
            }
        }
        Ok(Self {
            side,
            cell_size,
            radius,
            active_mask,
            active_index,
            active_cells,
        })
    }

    /// Number of active pixels (P).
    pub fn n_active(&self) -> usize {
        self.active_cells.len()
    }

    pub fn n_cells(&self) -> usize {
        self.side * self.side
    }

    pub fn centre(&self, row: usize, col: usize) -> (f64, f64) {
        cell_centre(self.side, self.cell_size, self.radius, row, col)
    }

    /// Active pixel index of `(row, col)`, `None` when masked out or off-grid.
    pub fn active(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.side || col >= self.side {
            return None;
        }
        self.active_index[row * self.side + col]
    }

    /// `(row, col)` of active pixel `p`.
    pub fn position(&self, p: usize) -> (usize, usize) {
        let idx = self.active_cells[p];
        (idx / self.side, idx % self.side)
    }

    pub fn active_cells(&self) -> &[usize] {
        &self.active_cells
    }

    /// Scatters per-pixel values into a full `side * side` raster, zero
    /// outside the mask.
    pub fn to_full(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.n_active() {
            return Err(Error::dim("image pixels", self.n_active(), values.len()));
        }
        let mut full = vec![0.0; self.n_cells()];
        for (p, &idx) in self.active_cells.iter().enumerate() {
            full[idx] = values[p];
        }
        Ok(full)
    }

    /// Gathers the active pixels out of a full raster.
    pub fn from_full(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.n_cells() {
            return Err(Error::dim("raster cells", self.n_cells(), full.len()));
        }
        Ok(self.active_cells.iter().map(|&idx| full[idx]).collect())
    }
}

fn cell_centre(side: usize, cell: f64, radius: f64, row: usize, col: usize) -> (f64, f64) {
    debug_assert!(row < side && col < side);
    let x = -radius + (col as f64 + 0.5) * cell;
    let y = radius - (row as f64 + 0.5) * cell;
    (x, y)
}

/// Lexicographic list of electrode pairs `(i, j)`, `i < j`, 1-based ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        let pairs = (1..=n)
            .flat_map(|i| (i + 1..=n).map(move |j| (i, j)))
            .collect();
        Self { n, pairs }
    }

    /// M = n(n-1)/2.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn index(&self, i: usize, j: usize) -> Result<usize> {
        pair_index(i, j, self.n)
    }
}

/// 0-based lexicographic rank of the 1-based electrode pair `(i, j)`.
pub fn pair_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i == 0 || i >= j || j > n {
        return Err(Error::PairIndex { i, j, n });
    }
    Ok((i - 1) * (2 * n - i) / 2 + (j - i - 1))
}
