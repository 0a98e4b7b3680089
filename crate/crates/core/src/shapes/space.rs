use std::sync::Arc;

use super::{retract_curve, CurveMetricOperator, MultiShape, PolygonCurve};
use crate::error::{check_len, Error, Result};
use crate::manifold::{Manifold, ManifoldPoint, ProductManifold, TangentVector};

/// One closed curve with `nodes` nodes, the curve metric, and the additive
/// retraction `R_u(v) = u + v`.
///
/// Distances are chart distances (Euclidean norm of the node offsets).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSpace {
    pub nodes: usize,
    pub metric: CurveMetricOperator,
    /// Keep only the normal component of each node's gradient.
    pub project_normal: bool,
}

impl CurveSpace {
    pub fn new(nodes: usize, metric: CurveMetricOperator) -> Self {
        Self {
            nodes,
            metric,
            project_normal: false,
        }
    }

    pub fn curve(&self, u: &[f64]) -> Result<PolygonCurve> {
        check_len("curve point", 2 * self.nodes, u.len())?;
        PolygonCurve::from_coords(u)
    }
}

impl Manifold for CurveSpace {
    fn dim(&self) -> usize {
        2 * self.nodes
    }

    fn inner(&self, at: &ManifoldPoint, v: &TangentVector, w: &TangentVector) -> Result<f64> {
        let c = self.curve(at)?;
        self.metric.bilinear(&c, v, w)
    }

    fn retract(&self, at: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        let c = self.curve(at)?;
        Ok(ManifoldPoint::new(retract_curve(&c, v, 1.0)?.to_coords()))
    }

    fn distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> Result<f64> {
        check_len("curve point", self.dim(), a.len())?;
        check_len("curve point", self.dim(), b.len())?;
        Ok(a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }

    fn gradient_from_differential(
        &self,
        at: &ManifoldPoint,
        differential: &[f64],
    ) -> Result<TangentVector> {
        let c = self.curve(at)?;
        let mut g = self.metric.riesz(&c, differential)?;
        if self.project_normal {
            for (d, n) in g.chunks_exact_mut(2).zip(c.vertex_normals()) {
                let s = d[0] * n[0] + d[1] * n[1];
                d[0] = s * n[0];
                d[1] = s * n[1];
            }
        }
        Ok(TangentVector::new(g))
    }

    fn check_point(&self, u: &ManifoldPoint) -> Result<()> {
        self.curve(u).map(|_| ())
    }
}

/// Product of `N` curve spaces whose curves must stay pairwise disjoint.
#[derive(Debug, Clone)]
pub struct MultiShapeSpace {
    product: ProductManifold,
    curve_space: CurveSpace,
    count: usize,
}

impl MultiShapeSpace {
    pub fn new(count: usize, curve_space: CurveSpace) -> Self {
        let factors: Vec<Arc<dyn Manifold>> = (0..count)
            .map(|_| Arc::new(curve_space) as Arc<dyn Manifold>)
            .collect();
        Self {
            product: ProductManifold::new(factors),
            curve_space,
            count,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn nodes_per_curve(&self) -> usize {
        self.curve_space.nodes
    }

    pub fn shapes(&self, u: &[f64]) -> Result<MultiShape> {
        check_len("multishape point", self.dim(), u.len())?;
        let curves = (0..self.count)
            .map(|i| PolygonCurve::from_coords(&u[self.product.range(i)]))
            .collect::<Result<Vec<_>>>()?;
        MultiShape::new(curves)
    }
}

impl Manifold for MultiShapeSpace {
    fn dim(&self) -> usize {
        self.product.dim()
    }

    fn inner(&self, at: &ManifoldPoint, v: &TangentVector, w: &TangentVector) -> Result<f64> {
        self.product.inner(at, v, w)
    }

    fn retract(&self, at: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        let moved = self.product.retract(at, v)?;
        self.shapes(&moved).map_err(|e| match e {
            Error::Geometry(msg) => Error::StepRejected(msg),
            other => other,
        })?;
        Ok(moved)
    }

    fn distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> Result<f64> {
        self.product.distance(a, b)
    }

    fn gradient_from_differential(
        &self,
        at: &ManifoldPoint,
        differential: &[f64],
    ) -> Result<TangentVector> {
        self.product.gradient_from_differential(at, differential)
    }

    fn check_point(&self, u: &ManifoldPoint) -> Result<()> {
        self.shapes(u).map(|_| ())
    }
}
