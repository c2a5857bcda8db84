//! Image post-processing and the fluctuation metric used to compare
//! reconstructions.

use crate::error::{Error, Result};
use crate::phantom::PermittivityImage;

/// Binarizes at `thr`: below goes to 0, above to 1, and a pixel exactly at
/// `thr` goes to 1.
pub fn threshold_op(g: &PermittivityImage, thr: f64) -> Result<PermittivityImage> {
    if !(thr > 0.0 && thr < 1.0) {
        return Err(Error::param(format!("threshold must lie in (0, 1), got {thr}")));
    }
    Ok(g.values
        .iter()
        .map(|&v| if v < thr { 0.0 } else { 1.0 })
        .collect::<Vec<_>>()
        .into())
}

/// Population standard deviation over all pixels, computed in one pass
/// (Welford).
pub fn sd_metric(g: &PermittivityImage) -> f64 {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in g.values.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    if g.values.is_empty() {
        0.0
    } else {
        (m2 / g.values.len() as f64).sqrt()
    }
}

/// Min-max rescale to `[0, 1]`; a constant image maps to all zeros.
pub fn normalize_image(g: &PermittivityImage) -> PermittivityImage {
    let (lo, hi) = g
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return PermittivityImage::zeros(g.len());
    }
    let span = hi - lo;
    g.values
        .iter()
        .map(|&v| (v - lo) / span)
        .collect::<Vec<_>>()
        .into()
}
