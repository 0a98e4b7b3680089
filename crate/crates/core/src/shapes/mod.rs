//! Polygonal plane curves standing in for the shape space: geometry,
//! constraint functionals with exact derivatives, an H1-type curve metric
//! and the manifold instances built from them.

mod metric;
mod polygon;
mod space;

pub use metric::CurveMetricOperator;
pub use polygon::{
    read_curve, regular_polygon, retract_curve, write_curve, MultiShape, PolygonCurve,
};
pub use space::{CurveSpace, MultiShapeSpace};
