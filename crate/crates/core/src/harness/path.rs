//! Reference paths and their on-disk JSON form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

/// Nominal spacing between consecutive path samples, mm.
pub const SAMPLE_SPACING_MM: f64 = 0.05;

/// Geometry of a reference path. Lengths in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathKind {
    /// Horizontal segment traversed in +x.
    Line { length: f64 },
    /// Axis-aligned square, counter-clockwise from the lower-left corner.
    Square { side: f64 },
    /// Counter-clockwise circle starting at its leftmost point.
    Circle { radius: f64 },
    /// Arbitrary open or closed polyline through the given vertices.
    Polyline { vertices: Vec<[f64; 2]> },
}

impl PathKind {
    pub fn line() -> Self {
        PathKind::Line { length: 4.0 }
    }

    pub fn square() -> Self {
        PathKind::Square { side: 3.0 }
    }

    pub fn circle() -> Self {
        PathKind::Circle { radius: 1.5 }
    }

    /// Default geometry by name: `line`, `square` or `circle`.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "line" => Some(Self::line()),
            "square" => Some(Self::square()),
            "circle" => Some(Self::circle()),
            _ => None,
        }
    }

    pub fn is_closed(&self) -> bool {
        match self {
            PathKind::Line { .. } => false,
            PathKind::Square { .. } | PathKind::Circle { .. } => true,
            PathKind::Polyline { vertices } => {
                vertices.len() > 2 && vertices.first() == vertices.last()
            }
        }
    }
}

/// A densely sampled reference path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathFile", into = "PathFile")]
pub struct ReferencePath {
    pub name: String,
    pub kind: PathKind,
    pub center: Vec2,
    pub samples: Vec<Vec2>,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    name: String,
    shape: PathKind,
    center: [f64; 2],
    spacing_mm: f64,
    points: Vec<[f64; 2]>,
}

impl From<ReferencePath> for PathFile {
    fn from(p: ReferencePath) -> Self {
        PathFile {
            name: p.name,
            shape: p.kind,
            center: [p.center.x, p.center.y],
            spacing_mm: SAMPLE_SPACING_MM,
            points: p.samples.iter().map(|s| [s.x, s.y]).collect(),
        }
    }
}

impl TryFrom<PathFile> for ReferencePath {
    type Error = Error;

    fn try_from(f: PathFile) -> Result<Self> {
        if f.points.is_empty() {
            return Err(Error::domain("path", "file has no points"));
        }
        Ok(ReferencePath {
            name: f.name,
            kind: f.shape,
            center: Vec2::new(f.center[0], f.center[1]),
            samples: f.points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        })
    }
}

/// Subdivide every segment into `max(1, round(len / spacing))` equal parts.
/// Vertices are kept, so corners stay sharp; repeated vertices are dropped.
pub fn resample_polyline(vertices: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for &v in vertices {
        match out.last() {
            None => out.push(v),
            Some(&prev) => {
                let len = (v - prev).norm();
                if len < 1e-9 {
                    continue;
                }
                let n = ((len / spacing).round() as usize).max(1);
                for k in 1..n {
                    out.push(prev + (v - prev) * (k as f64 / n as f64));
                }
                out.push(v);
            }
        }
    }
    out
}

/// Build a path of the requested geometry around `center`, checked against
/// the workspace radius.
pub fn make_path(kind: PathKind, center: Vec2, workspace_radius: f64) -> Result<ReferencePath> {
    let h = SAMPLE_SPACING_MM;
    let samples = match &kind {
        PathKind::Line { length } => {
            check_positive("line length", *length)?;
            let a = center - Vec2::new(0.5 * length, 0.0);
            resample_polyline(&[a, a + Vec2::new(*length, 0.0)], h)
        }
        PathKind::Square { side } => {
            check_positive("square side", *side)?;
            let s = 0.5 * side;
            let corners = [(-s, -s), (s, -s), (s, s), (-s, s), (-s, -s)]
                .map(|(x, y)| center + Vec2::new(x, y));
            resample_polyline(&corners, h)
        }
        PathKind::Circle { radius } => {
            check_positive("circle radius", *radius)?;
            let n = ((std::f64::consts::TAU * radius / h).round() as usize).max(8);
            let mut pts: Vec<Vec2> = (0..n)
                .map(|k| {
                    let a = std::f64::consts::PI + std::f64::consts::TAU * k as f64 / n as f64;
                    center + Vec2::new(radius * a.cos(), radius * a.sin())
                })
                .collect();
            pts.push(pts[0]);
            pts
        }
        PathKind::Polyline { vertices } => {
            let v: Vec<Vec2> = vertices
                .iter()
                .map(|p| center + Vec2::new(p[0], p[1]))
                .collect();
            let s = resample_polyline(&v, h);
            if s.len() < 2 {
                return Err(Error::domain(
                    "path",
                    "polyline needs two distinct vertices",
                ));
            }
            s
        }
    };
    if let Some(p) = samples.iter().find(|p| p.norm() > workspace_radius + 1e-9) {
        return Err(Error::domain(
            "path",
            format!(
                "point ({:.3}, {:.3}) lies outside the {workspace_radius} mm workspace",
                p.x, p.y
            ),
        ));
    }
    let name = match &kind {
        PathKind::Line { .. } => "line",
        PathKind::Square { .. } => "square",
        PathKind::Circle { .. } => "circle",
        PathKind::Polyline { .. } => "polyline",
    };
    Ok(ReferencePath {
        name: name.into(),
        kind,
        center,
        samples,
    })
}

fn check_positive(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, format!("{x} must be positive")))
    }
}

impl ReferencePath {
    /// Polyline path from client-supplied points (already in workspace mm).
    pub fn from_points(name: &str, points: &[[f64; 2]], workspace_radius: f64) -> Result<Self> {
        let mut p = make_path(
            PathKind::Polyline {
                vertices: points.to_vec(),
            },
            Vec2::zeros(),
            workspace_radius,
        )?;
        p.name = name.into();
        Ok(p)
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn start(&self) -> Vec2 {
        self.samples[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.samples.last().unwrap()
    }

    pub fn arc_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Vertices of the five single-stroke letters spelling "AALTO", each about
/// 3 mm tall and centred on the origin. Strokes retrace where a letter
/// cannot be drawn in one pass.
pub fn letter_strokes() -> Vec<(&'static str, Vec<[f64; 2]>)> {
    let a = vec![
        [-1.0, -1.5],
        [0.0, 1.5],
        [1.0, -1.5],
        [0.5, 0.0],
        [-0.5, 0.0],
    ];
    let l = vec![[-0.75, 1.5], [-0.75, -1.5], [1.0, -1.5]];
    let t = vec![[-1.0, 1.5], [1.0, 1.5], [0.0, 1.5], [0.0, -1.5]];
    // Ellipse with semi-axes 1.0 x 1.5, traced counter-clockwise from the top.
    let o: Vec<[f64; 2]> = (0..=24)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * (k % 24) as f64 / 24.0;
            [1.0 * a.cos(), 1.5 * a.sin()]
        })
        .collect();
    vec![
        ("letter_1_a", a.clone()),
        ("letter_2_a", a),
        ("letter_3_l", l),
        ("letter_4_t", t),
        ("letter_5_o", o),
    ]
}

/// Every path shipped with the workbench: the three default trial paths and
/// the five letters.
pub fn preset_paths(workspace_radius: f64) -> Result<Vec<ReferencePath>> {
    let mut out = Vec::new();
    for kind in [PathKind::line(), PathKind::square(), PathKind::circle()] {
        out.push(make_path(kind, Vec2::zeros(), workspace_radius)?);
    }
    for (name, vertices) in letter_strokes() {
        let p = make_path(
            PathKind::Polyline { vertices },
            Vec2::zeros(),
            workspace_radius,
        )?;
        out.push(p.with_name(name));
    }
    Ok(out)
}
