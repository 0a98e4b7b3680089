use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// Closed polygon with counterclockwise nodes; node `P-1` connects back to
/// node `0`. Construction checks that the curve is simple with positive
/// area.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonCurve {
    nodes: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test (touching counts).
pub(crate) fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

impl PolygonCurve {
    pub fn new(nodes: Vec<[f64; 2]>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Geometry(format!(
                "a closed curve needs at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Geometry("non-finite node coordinate".into()));
        }
        let curve = Self { nodes };
        for e in 0..curve.len() {
            let (a, b) = curve.edge(e);
            if a == b {
                return Err(Error::Geometry(format!("edge {e} has zero length")));
            }
        }
        if !(curve.signed_area() > 0.0) {
            return Err(Error::Geometry(
                "curve must be counterclockwise with positive area".into(),
            ));
        }
        if let Some((e, f)) = curve.first_self_intersection() {
            return Err(Error::Geometry(format!("edges {e} and {f} intersect")));
        }
        Ok(curve)
    }

    /// Flat `[x0, y0, x1, y1, ...]` layout.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::Geometry("odd number of curve coordinates".into()));
        }
        Self::new(coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn to_coords(&self) -> Vec<f64> {
        self.nodes.iter().flatten().copied().collect()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn edge(&self, e: usize) -> ([f64; 2], [f64; 2]) {
        (self.nodes[e], self.nodes[(e + 1) % self.len()])
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        (0..self.len())
            .map(|e| {
                let (a, b) = self.edge(e);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .collect()
    }

    fn signed_area(&self) -> f64 {
        0.5 * (0..self.len())
            .map(|e| {
                let (a, b) = self.edge(e);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let p = self.len();
        for e in 0..p {
            let (a, b) = self.edge(e);
            for f in (e + 2)..p {
                if e == 0 && f == p - 1 {
                    continue;
                }
                let (c, d) = self.edge(f);
                if segments_intersect(a, b, c, d) {
                    return Some((e, f));
                }
            }
        }
        None
    }

    /// Enclosed area by the shoelace formula.
    pub fn volume(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths().iter().sum()
    }

    /// Partial derivatives of [`volume`](Self::volume) in the flat layout.
    pub fn volume_gradient(&self) -> Vec<f64> {
        let p = self.len();
        let mut g = Vec::with_capacity(2 * p);
        for i in 0..p {
            let prev = self.nodes[(i + p - 1) % p];
            let next = self.nodes[(i + 1) % p];
            g.push(0.5 * (next[1] - prev[1]));
            g.push(0.5 * (prev[0] - next[0]));
        }
        g
    }

    /// Partial derivatives of [`perimeter`](Self::perimeter): at each node,
    /// the unit direction of the incoming edge minus that of the outgoing
    /// edge.
    pub fn perimeter_gradient(&self) -> Vec<f64> {
        let p = self.len();
        let lens = self.edge_lengths();
        let mut g = vec![0.0; 2 * p];
        for e in 0..p {
            let (a, b) = self.edge(e);
            let t = [(b[0] - a[0]) / lens[e], (b[1] - a[1]) / lens[e]];
            let head = (e + 1) % p;
            g[2 * head] += t[0];
            g[2 * head + 1] += t[1];
            g[2 * e] -= t[0];
            g[2 * e + 1] -= t[1];
        }
        g
    }

    /// Outward unit normal at each node (normalized sum of adjacent edge
    /// normals).
    pub fn vertex_normals(&self) -> Vec<[f64; 2]> {
        let p = self.len();
        let lens = self.edge_lengths();
        let edge_normal = |e: usize| {
            let (a, b) = self.edge(e);
            [(b[1] - a[1]) / lens[e], -(b[0] - a[0]) / lens[e]]
        };
        (0..p)
            .map(|i| {
                let n1 = edge_normal((i + p - 1) % p);
                let n2 = edge_normal(i);
                let s = [n1[0] + n2[0], n1[1] + n2[1]];
                let len = s[0].hypot(s[1]);
                if len > 0.0 {
                    [s[0] / len, s[1] / len]
                } else {
                    n2
                }
            })
            .collect()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for n in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(n[d]);
                hi[d] = hi[d].max(n[d]);
            }
        }
        (lo, hi)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains_point(&self, q: [f64; 2]) -> bool {
        let mut inside = false;
        for e in 0..self.len() {
            let (a, b) = self.edge(e);
            if (a[1] > q[1]) != (b[1] > q[1]) {
                let x = a[0] + (q[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if q[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn intersects(&self, other: &PolygonCurve) -> bool {
        let (alo, ahi) = self.bounding_box();
        let (blo, bhi) = other.bounding_box();
        if alo[0] > bhi[0] || blo[0] > ahi[0] || alo[1] > bhi[1] || blo[1] > ahi[1] {
            return false;
        }
        for e in 0..self.len() {
            let (a, b) = self.edge(e);
            for f in 0..other.len() {
                let (c, d) = other.edge(f);
                if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
        }
        self.contains_point(other.nodes[0]) || other.contains_point(self.nodes[0])
    }
}

/// Nodes translated by `step * v`; fails with a step-rejection error when
/// the moved curve is no longer simple.
pub fn retract_curve(c: &PolygonCurve, v: &[f64], step: f64) -> Result<PolygonCurve> {
    if v.len() != 2 * c.len() {
        return Err(Error::Dimension {
            context: "curve displacement",
            expected: 2 * c.len(),
            got: v.len(),
        });
    }
    let nodes = c
        .nodes
        .iter()
        .zip(v.chunks_exact(2))
        .map(|(n, d)| [n[0] + step * d[0], n[1] + step * d[1]])
        .collect();
    PolygonCurve::new(nodes).map_err(|e| match e {
        Error::Geometry(msg) => Error::StepRejected(msg),
        other => other,
    })
}

/// Regular `n`-gon of circumradius `radius`, first node at angle `phase`.
pub fn regular_polygon(
    center: [f64; 2],
    radius: f64,
    n: usize,
    phase: f64,
) -> Result<PolygonCurve> {
    PolygonCurve::new(
        (0..n)
            .map(|p| {
                let t = phase + 2.0 * PI * p as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect(),
    )
}

/// Several curves with pairwise disjoint interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiShape {
    curves: Vec<PolygonCurve>,
}

impl MultiShape {
    pub fn new(curves: Vec<PolygonCurve>) -> Result<Self> {
        for i in 0..curves.len() {
            for j in (i + 1)..curves.len() {
                if curves[i].intersects(&curves[j]) {
                    return Err(Error::Geometry(format!("curves {i} and {j} overlap")));
                }
            }
        }
        Ok(Self { curves })
    }

    pub fn curves(&self) -> &[PolygonCurve] {
        &self.curves
    }

    pub fn into_curves(self) -> Vec<PolygonCurve> {
        self.curves
    }
}

/// Writes one `x y` row per node.
pub fn write_curve(c: &PolygonCurve, mut out: impl Write) -> io::Result<()> {
    for n in &c.nodes {
        writeln!(out, "{} {}", n[0], n[1])?;
    }
    Ok(())
}

pub fn read_curve(input: impl BufRead) -> Result<PolygonCurve> {
    let mut nodes = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Geometry(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Geometry(format!("line {}: {e}", i + 1)))?;
        if vals.len() != 2 {
            return Err(Error::Geometry(format!("line {}: expected `x y`", i + 1)));
        }
        nodes.push([vals[0], vals[1]]);
    }
    PolygonCurve::new(nodes)
}
