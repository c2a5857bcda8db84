//! Plain-text file formats.
//!
//! * image CSV: `side` lines of `side` comma-separated reals, cells outside
//!   the vessel written as 0;
//! * PGM: ASCII P2, maxval 255, grey level `round(255 g)` with `g` clamped
//!   to `[0, 1]`;
//! * frames CSV: one frame per line;
//! * calibration CSV: the low frame then the high frame;
//! * sensitivity CSV: an `M,P` header line, then `M` rows of `P` reals.
//!
//! Reals are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forward::{CalibrationPair, CapacitanceFrame};
use crate::geometry::PixelGrid;
use crate::linops::SensitivityMatrix;
use crate::phantom::PermittivityImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Csv,
    Pgm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Csv => "csv",
            ImageFormat::Pgm => "pgm",
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ImageFormat::Csv),
            "pgm" => Ok(ImageFormat::Pgm),
            other => Err(Error::param(format!("unknown image format `{other}` (csv or pgm)"))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// A numeric row together with its 1-based source line.
struct Row {
    line: usize,
    values: Vec<f64>,
}

fn parse_line(path: &Path, line: usize, raw: &str) -> Result<Row> {
    let mut values = Vec::new();
    let mut column = 1;
    for token in raw.split(',') {
        let lead = token.len() - token.trim_start().len();
        let t = token.trim();
        let v: f64 = t
            .parse()
            .map_err(|_| parse_error(path, line, column + lead, format!("`{t}` is not a number")))?;
        if !v.is_finite() {
            return Err(parse_error(path, line, column + lead, format!("`{t}` is not finite")));
        }
        values.push(v);
        column += token.len() + 1;
    }
    Ok(Row { line, values })
}

/// Non-blank lines of `text`, numbered from 1.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_rows(path: &Path, text: &str) -> Result<Vec<Row>> {
    content_lines(text).map(|(k, l)| parse_line(path, k, l)).collect()
}

fn check_width(path: &Path, row: &Row, expected: usize) -> Result<()> {
    if row.values.len() != expected {
        return Err(parse_error(
            path,
            row.line,
            1,
            format!("expected {expected} values, found {}", row.values.len()),
        ));
    }
    Ok(())
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

pub fn image_to_csv(image: &PermittivityImage, grid: &PixelGrid) -> Result<String> {
    let full = grid.to_full(&image.values)?;
    let mut out = String::new();
    for row in full.chunks(grid.side) {
        out.push_str(&join(row));
        out.push('\n');
    }
    Ok(out)
}

pub fn image_to_pgm(image: &PermittivityImage, grid: &PixelGrid) -> Result<String> {
    let full = grid.to_full(&image.values)?;
    let mut out = format!("P2\n{} {}\n255\n", grid.side, grid.side);
    for row in full.chunks(grid.side) {
        let line: Vec<String> = row
            .iter()
            .map(|g| ((255.0 * g.clamp(0.0, 1.0)).round() as u8).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_image(path: &Path, image: &PermittivityImage, grid: &PixelGrid, format: ImageFormat) -> Result<()> {
    let text = match format {
        ImageFormat::Csv => image_to_csv(image, grid)?,
        ImageFormat::Pgm => image_to_pgm(image, grid)?,
    };
    write_text_file(path, &text)
}

/// Reads an image CSV and keeps the pixels inside the vessel.
pub fn read_image(path: &Path, grid: &PixelGrid) -> Result<PermittivityImage> {
    let rows = parse_rows(path, &read(path)?)?;
    if rows.len() != grid.side {
        return Err(parse_error(
            path,
            rows.last().map_or(1, |r| r.line),
            1,
            format!("expected {} rows, found {}", grid.side, rows.len()),
        ));
    }
    let mut full = Vec::with_capacity(grid.n_cells());
    for row in &rows {
        check_width(path, row, grid.side)?;
        full.extend_from_slice(&row.values);
    }
    Ok(PermittivityImage::new(grid.from_full(&full)?))
}

pub fn frames_to_csv(frames: &[CapacitanceFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&join(&f.values));
        out.push('\n');
    }
    out
}

pub fn write_frames(path: &Path, frames: &[CapacitanceFrame]) -> Result<()> {
    write_text_file(path, &frames_to_csv(frames))
}

/// Reads one frame per non-empty line; all lines must have the same width.
pub fn read_frames(path: &Path) -> Result<Vec<CapacitanceFrame>> {
    let rows = parse_rows(path, &read(path)?)?;
    let Some(first) = rows.first() else {
        return Err(Error::EmptyFrames);
    };
    let width = first.values.len();
    let mut frames = Vec::with_capacity(rows.len());
    for row in rows {
        check_width(path, &row, width)?;
        frames.push(CapacitanceFrame::new(row.values));
    }
    Ok(frames)
}

pub fn write_calibration(path: &Path, cal: &CalibrationPair) -> Result<()> {
    write_frames(path, &[cal.low.clone(), cal.high.clone()])
}

pub fn read_calibration(path: &Path) -> Result<CalibrationPair> {
    let frames = read_frames(path)?;
    if frames.len() != 2 {
        return Err(parse_error(
            path,
            1,
            1,
            format!("calibration needs exactly 2 rows (low, high), found {}", frames.len()),
        ));
    }
    let mut it = frames.into_iter();
    CalibrationPair::new(it.next().unwrap(), it.next().unwrap())
}

pub fn matrix_to_csv(s: &SensitivityMatrix) -> String {
    let mut out = format!("{},{}\n", s.rows(), s.cols());
    for m in 0..s.rows() {
        out.push_str(&join(s.row(m)));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, s: &SensitivityMatrix) -> Result<()> {
    write_text_file(path, &matrix_to_csv(s))
}

pub fn read_matrix(path: &Path) -> Result<SensitivityMatrix> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let Some((hline, header)) = lines.next() else {
        return Err(parse_error(path, 1, 1, "missing `M,P` header"));
    };
    let bad_header = || parse_error(path, hline, 1, format!("malformed header `{header}`, expected `M,P`"));
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse().ok().filter(|&d: &usize| d > 0))
        .collect::<Option<_>>()
        .ok_or_else(bad_header)?;
    let &[m, p] = dims.as_slice() else {
        return Err(bad_header());
    };
    let rows: Vec<Row> = lines.map(|(k, l)| parse_line(path, k, l)).collect::<Result<_>>()?;
    if rows.len() != m {
        return Err(parse_error(
            path,
            hline,
            1,
            format!("header declares {m} rows but the file has {}", rows.len()),
        ));
    }
    let mut data = Vec::with_capacity(m * p);
    for row in rows {
        check_width(path, &row, p)?;
        data.extend_from_slice(&row.values);
    }
    SensitivityMatrix::from_rows_flat(m, p, data)
}
