//! Dense sensitivity matrix products, the masked-grid gradient/divergence
//! pair, and componentwise shrinkage operators.

use crate::error::{Error, Result};
use crate::geometry::PixelGrid;
use crate::par::{fill_chunks, Execution};

/// Dense row-major `rows x cols` matrix; as the sensitivity map it is
/// `M x P` (measurements by pixels).
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

// Columns per parallel task for the transpose product.
const COL_CHUNK: usize = 256;

impl SensitivityMatrix {
    pub fn from_rows_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("matrix row", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        (0..n).for_each(|i| data[i * n + i] = 1.0);
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.cols..(m + 1) * self.cols]
    }

    pub fn get(&self, m: usize, p: usize) -> f64 {
        self.data[m * self.cols + p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Returns a copy with rows reordered so that new row `k` is old row
    /// `order[k]`.
    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &m in order {
            data.extend_from_slice(self.row(m));
        }
        Self {
            rows: order.len(),
            cols: self.cols,
            data,
        }
    }

    /// `S g`
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(g, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, g: &[f64], out: &mut [f64]) -> Result<()> {
        if g.len() != self.cols {
            return Err(Error::dim("S g: image length", self.cols, g.len()));
        }
        if out.len() != self.rows {
            return Err(Error::dim("S g: output length", self.rows, out.len()));
        }
        for (m, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(m), g);
        }
        Ok(())
    }

    /// `S^T lambda`
    pub fn apply_t(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.apply_t_into(lambda, &mut out, Execution::Sequential)?;
        Ok(out)
    }

    /// `S^T lambda` into `out`. Each output entry is summed over rows in
    /// order, so the result does not depend on `exec`.
    pub fn apply_t_into(&self, lambda: &[f64], out: &mut [f64], exec: Execution) -> Result<()> {
        if lambda.len() != self.rows {
            return Err(Error::dim("S^T lambda: measurement length", self.rows, lambda.len()));
        }
        if out.len() != self.cols {
            return Err(Error::dim("S^T lambda: output length", self.cols, out.len()));
        }
        let chunk = if exec.is_parallel() { COL_CHUNK } else { self.cols };
        fill_chunks(exec, out, chunk, |start, block| {
            block.iter_mut().for_each(|o| *o = 0.0);
            for (m, &l) in lambda.iter().enumerate() {
                let row = &self.row(m)[start..start + block.len()];
                block.iter_mut().zip(row).for_each(|(o, s)| *o += s * l);
            }
        });
        Ok(())
    }

    /// `S^T S v` through both products.
    pub fn normal_apply(&self, v: &[f64], scratch: &mut [f64], out: &mut [f64]) -> Result<()> {
        self.apply_into(v, scratch)?;
        self.apply_t_into(scratch, out, Execution::Sequential)
    }

    /// Largest singular value squared, by power iteration on `S^T S`.
    pub fn sigma_max_sq(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        // deterministic, non-degenerate start
        let mut v: Vec<f64> = (0..self.cols).map(|p| 1.0 + 0.01 * (p % 7) as f64).collect();
        normalize(&mut v);
        let mut sv = vec![0.0; self.rows];
        let mut w = vec![0.0; self.cols];
        let mut est = 0.0;
        for _ in 0..5000 {
            self.normal_apply(&v, &mut sv, &mut w).expect("dimensions fixed");
            let next = dot(&v, &w);
            let n = dot(&w, &w).sqrt();
            if n == 0.0 {
                return 0.0;
            }
            w.iter_mut().for_each(|x| *x /= n);
            std::mem::swap(&mut v, &mut w);
            let done = (next - est).abs() <= 1e-15 * next.abs();
            est = next;
            if done {
                break;
            }
        }
        // Rayleigh quotient on the converged vector
        self.normal_apply(&v, &mut sv, &mut w).expect("dimensions fixed");
        dot(&v, &w).max(est)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Forward differences on the active pixels; components whose forward
/// neighbour is masked out or off-grid are zero.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GradientField {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(n: usize) -> Self {
        Self {
            gx: vec![0.0; n],
            gy: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.gx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gx.is_empty()
    }

    pub fn dot(&self, other: &GradientField) -> f64 {
        dot(&self.gx, &other.gx) + dot(&self.gy, &other.gy)
    }

    pub fn norm1(&self) -> f64 {
        self.gx.iter().chain(&self.gy).map(|v| v.abs()).sum()
    }

    pub fn norm2_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// Neighbour table of the masked grid used by [`grad`] and [`div`].
#[derive(Clone, Debug)]
pub struct GridStencil {
    /// Active index of the pixel to the right (+x), if any.
    pub right: Vec<Option<usize>>,
    /// Active index of the pixel below (next row), if any.
    pub down: Vec<Option<usize>>,
}

impl GridStencil {
    pub fn new(grid: &PixelGrid) -> Self {
        let n = grid.n_active();
        let mut right = vec![None; n];
        let mut down = vec![None; n];
        for p in 0..n {
            let (r, c) = grid.position(p);
            right[p] = grid.active(r, c + 1);
            down[p] = grid.active(r + 1, c);
        }
        Self { right, down }
    }

    pub fn len(&self) -> usize {
        self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.right.is_empty()
    }

    pub fn grad_into(&self, g: &[f64], out: &mut GradientField) {
        for p in 0..g.len() {
            out.gx[p] = self.right[p].map_or(0.0, |q| g[q] - g[p]);
            out.gy[p] = self.down[p].map_or(0.0, |q| g[q] - g[p]);
        }
    }

    /// Writes `div v = -grad^T v`.
    pub fn div_into(&self, v: &GradientField, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for p in 0..out.len() {
            if let Some(q) = self.right[p] {
                out[p] += v.gx[p];
                out[q] -= v.gx[p];
            }
            if let Some(q) = self.down[p] {
                out[p] += v.gy[p];
                out[q] -= v.gy[p];
            }
        }
    }

    /// `grad^T grad g = -div grad g`.
    pub fn laplacian_into(&self, g: &[f64], tmp: &mut GradientField, out: &mut [f64]) {
        self.grad_into(g, tmp);
        self.div_into(tmp, out);
        out.iter_mut().for_each(|o| *o = -*o);
    }
}

pub fn grad(g: &[f64], grid: &PixelGrid) -> Result<GradientField> {
    if g.len() != grid.n_active() {
        return Err(Error::dim("grad: image length", grid.n_active(), g.len()));
    }
    let st = GridStencil::new(grid);
    let mut out = GradientField::zeros(g.len());
    st.grad_into(g, &mut out);
    Ok(out)
}

pub fn div(v: &GradientField, grid: &PixelGrid) -> Result<Vec<f64>> {
    if v.gx.len() != grid.n_active() || v.gy.len() != grid.n_active() {
        return Err(Error::dim("div: field length", grid.n_active(), v.gx.len().min(v.gy.len())));
    }
    let st = GridStencil::new(grid);
    let mut out = vec![0.0; v.len()];
    st.div_into(v, &mut out);
    Ok(out)
}

/// `sign(b) * max(|b| - a, 0)`
pub fn soft(b: f64, a: f64) -> f64 {
    if b > a {
        b - a
    } else if b < -a {
        b + a
    } else {
        0.0
    }
}

/// Keeps `b` iff `|b| > a` (strict).
pub fn hard(b: f64, a: f64) -> f64 {
    if b.abs() > a {
        b
    } else {
        0.0
    }
}

pub fn soft_threshold(b: &[f64], a: f64) -> Vec<f64> {
    debug_assert!(a >= 0.0);
    b.iter().map(|&x| soft(x, a)).collect()
}

/// The hard-thresholding operator with a scalar threshold.
pub fn hard_threshold(b: &[f64], a: f64) -> Vec<f64> {
    debug_assert!(a >= 0.0);
    b.iter().map(|&x| hard(x, a)).collect()
}

/// Hard thresholding with a per-component threshold vector.
pub fn hard_threshold_each(b: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::dim("threshold vector", b.len(), a.len()));
    }
    Ok(b.iter().zip(a).map(|(&x, &t)| hard(x, t)).collect())
}
