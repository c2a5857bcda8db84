//! Binary test distributions: a cross, a 'V', two rectangles and three
//! circles, rasterized by cell-centre membership.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelGrid;

/// Normalized permittivity per active pixel: 0 is the low-permittivity
/// material, 1 the high one.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PermittivityImage {
    pub values: Vec<f64>,
}

impl PermittivityImage {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Number of nonzero pixels.
    pub fn support(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

impl From<Vec<f64>> for PermittivityImage {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// A filled shape. Positions and sizes in mm, rotations in degrees
/// counter-clockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rectangle {
        centre: (f64, f64),
        width: f64,
        height: f64,
        #[serde(default)]
        rotation: f64,
    },
    Circle {
        centre: (f64, f64),
        radius: f64,
    },
    /// Simple polygon with vertices relative to `centre`.
    Polygon {
        centre: (f64, f64),
        vertices: Vec<(f64, f64)>,
        #[serde(default)]
        rotation: f64,
    },
}

impl Shape {
    pub fn rect(centre: (f64, f64), width: f64, height: f64, rotation: f64) -> Self {
        Shape::Rectangle {
            centre,
            width,
            height,
            rotation,
        }
    }

    pub fn circle(centre: (f64, f64), radius: f64) -> Self {
        Shape::Circle { centre, radius }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Circle { centre, radius } => {
                let (dx, dy) = (x - centre.0, y - centre.1);
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Rectangle {
                centre,
                width,
                height,
                rotation,
            } => {
                let (u, v) = to_local(x - centre.0, y - centre.1, *rotation);
                u.abs() <= width / 2.0 && v.abs() <= height / 2.0
            }
            Shape::Polygon {
                centre,
                vertices,
                rotation,
            } => {
                let (u, v) = to_local(x - centre.0, y - centre.1, *rotation);
                point_in_polygon(u, v, vertices)
            }
        }
    }

    /// Points whose containment in the vessel implies the whole shape is
    /// inside (the vessel is convex).
    fn extreme_points(&self) -> Vec<(f64, f64)> {
        match self {
            Shape::Circle { .. } => Vec::new(),
            Shape::Rectangle {
                centre,
                width,
                height,
                rotation,
            } => {
                let (w, h) = (width / 2.0, height / 2.0);
                [(-w, -h), (w, -h), (w, h), (-w, h)]
                    .iter()
                    .map(|&(u, v)| to_world(u, v, *rotation, *centre))
                    .collect()
            }
            Shape::Polygon {
                centre,
                vertices,
                rotation,
            } => vertices
                .iter()
                .map(|&(u, v)| to_world(u, v, *rotation, *centre))
                .collect(),
        }
    }

    pub fn validate(&self, vessel_radius: f64) -> Result<()> {
        let tol = 1e-9 * vessel_radius;
        let inside = |(x, y): (f64, f64)| (x * x + y * y).sqrt() <= vessel_radius + tol;
        match self {
            Shape::Circle { centre, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Shape(format!("circle radius must be positive, got {radius}")));
                }
                if centre.0.hypot(centre.1) + radius > vessel_radius + tol {
                    return Err(Error::Shape(format!(
                        "circle at {centre:?} r={radius} leaves the vessel (radius {vessel_radius})"
                    )));
                }
            }
            Shape::Rectangle { width, height, .. } => {
                if !(*width > 0.0 && *height > 0.0) {
                    return Err(Error::Shape(format!(
                        "rectangle sides must be positive, got {width} x {height}"
                    )));
                }
            }
            Shape::Polygon { vertices, .. } => {
                if vertices.len() < 3 {
                    return Err(Error::Shape("polygon needs at least 3 vertices".into()));
                }
            }
        }
        if let Some(p) = self.extreme_points().into_iter().find(|&p| !inside(p)) {
            return Err(Error::Shape(format!(
                "{self:?} has a corner at {p:?} outside the vessel (radius {vessel_radius})"
            )));
        }
        Ok(())
    }
}

fn to_local(dx: f64, dy: f64, rotation_deg: f64) -> (f64, f64) {
    let (s, c) = rotation_deg.to_radians().sin_cos();
    (c * dx + s * dy, -s * dx + c * dy)
}

fn to_world(u: f64, v: f64, rotation_deg: f64, centre: (f64, f64)) -> (f64, f64) {
    let (s, c) = rotation_deg.to_radians().sin_cos();
    (centre.0 + c * u - s * v, centre.1 + s * u + c * v)
}

// Even-odd crossing test.
fn point_in_polygon(x: f64, y: f64, vertices: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// True when `(x, y)` lies in the union of `shapes`.
pub fn union_contains(shapes: &[Shape], x: f64, y: f64) -> bool {
    shapes.iter().any(|s| s.contains(x, y))
}

/// Pixel is 1 iff its centre lies in the union of the shapes.
pub fn rasterize(shapes: &[Shape], grid: &PixelGrid) -> Result<PermittivityImage> {
    for s in shapes {
        s.validate(grid.radius)?;
    }
    let values = (0..grid.n_active())
        .map(|p| {
            let (row, col) = grid.position(p);
            let (x, y) = grid.centre(row, col);
            if union_contains(shapes, x, y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(PermittivityImage { values })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Cross,
    V,
    TwoRects,
    ThreeCircles,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 4] = [
        PhantomKind::Cross,
        PhantomKind::V,
        PhantomKind::TwoRects,
        PhantomKind::ThreeCircles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Cross => "cross",
            PhantomKind::V => "v",
            PhantomKind::TwoRects => "two_rects",
            PhantomKind::ThreeCircles => "three_circles",
        }
    }

    /// Default shapes for a 76 mm vessel.
    ///
    /// - cross: arms 40 x 12 mm, centred;
    /// - v: two 34 x 10 mm bars meeting at 60 degrees at a vertex 14 mm
    ///   below the centre;
    /// - two_rects: 14 x 20 mm rectangles centred at x = +-15 mm;
    /// - three_circles: r = 9 mm at 90, 210 and 330 degrees, 20 mm out.
    pub fn shapes(self) -> Vec<Shape> {
        match self {
            PhantomKind::Cross => vec![
                Shape::rect((0.0, 0.0), 40.0, 12.0, 0.0),
                Shape::rect((0.0, 0.0), 12.0, 40.0, 0.0),
            ],
            PhantomKind::V => {
                let (len, width, half_angle) = (34.0, 10.0, 30.0_f64);
                let vertex = (0.0, -14.0);
                let mut bars = Vec::new();
                for dir in [90.0 - half_angle, 90.0 + half_angle] {
                    let (s, c) = dir.to_radians().sin_cos();
                    let centre = (vertex.0 + c * len / 2.0, vertex.1 + s * len / 2.0);
                    bars.push(Shape::rect(centre, len, width, dir));
                }
                bars
            }
            PhantomKind::TwoRects => vec![
                Shape::rect((-15.0, 0.0), 14.0, 20.0, 0.0),
                Shape::rect((15.0, 0.0), 14.0, 20.0, 0.0),
            ],
            PhantomKind::ThreeCircles => [90.0_f64, 210.0, 330.0]
                .iter()
                .map(|a| {
                    let (s, c) = a.to_radians().sin_cos();
                    Shape::circle((20.0 * c, 20.0 * s), 9.0)
                })
                .collect(),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cross" => Ok(PhantomKind::Cross),
            "v" => Ok(PhantomKind::V),
            "two_rects" => Ok(PhantomKind::TwoRects),
            "three_circles" => Ok(PhantomKind::ThreeCircles),
            _ => Err(Error::UnknownPhantom(s.to_string())),
        }
    }
}

pub fn phantom(kind: PhantomKind, grid: &PixelGrid) -> Result<PermittivityImage> {
    rasterize(&kind.shapes(), grid)
}

/// Number of 4-connected components of nonzero pixels.
pub fn connected_components(image: &PermittivityImage, grid: &PixelGrid) -> usize {
    let n = grid.n_active();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] || image.values[start] == 0.0 {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (r, c) = grid.position(p);
            let neighbours = [
                r.checked_sub(1).map(|r| (r, c)),
                Some((r + 1, c)),
                c.checked_sub(1).map(|c| (r, c)),
                Some((r, c + 1)),
            ];
            for (nr, nc) in neighbours.into_iter().flatten() {
                if let Some(q) = grid.active(nr, nc) {
                    if !seen[q] && image.values[q] != 0.0 {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
    }
    count
}
