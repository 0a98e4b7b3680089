use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PolygonCurve;
use crate::error::{check_len, Error, Result};

/// Discrete H1 + L2 form on node displacements of a curve:
///
/// `a(v, w) = sum_edges (dv . dw) / |e| + c0 sum_nodes omega_p (v_p . w_p)`
///
/// where `dv` is the difference of `v` across an edge and `omega_p` is half
/// the length of the two edges meeting at node `p`. The same scalar matrix
/// acts on the x and y components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveMetricOperator {
    pub mass_weight: f64,
}

impl Default for CurveMetricOperator {
    fn default() -> Self {
        Self { mass_weight: 1.0 }
    }
}

impl CurveMetricOperator {
    pub fn new(mass_weight: f64) -> Result<Self> {
        if !(mass_weight > 0.0 && mass_weight.is_finite()) {
            return Err(Error::Parameter(format!(
                "curve metric mass weight must be positive, got {mass_weight}"
            )));
        }
        Ok(Self { mass_weight })
    }

    /// Node weights `omega_p`.
    pub fn node_weights(curve: &PolygonCurve) -> Vec<f64> {
        let lens = curve.edge_lengths();
        let p = lens.len();
        (0..p)
            .map(|i| 0.5 * (lens[(i + p - 1) % p] + lens[i]))
            .collect()
    }

    /// The `P x P` matrix of the form.
    pub fn matrix(&self, curve: &PolygonCurve) -> DMatrix<f64> {
        let lens = curve.edge_lengths();
        let p = lens.len();
        let mut a = DMatrix::zeros(p, p);
        for (e, len) in lens.iter().enumerate() {
            let (i, j) = (e, (e + 1) % p);
            let s = 1.0 / len;
            a[(i, i)] += s;
            a[(j, j)] += s;
            a[(i, j)] -= s;
            a[(j, i)] -= s;
        }
        for (i, w) in Self::node_weights(curve).iter().enumerate() {
            a[(i, i)] += self.mass_weight * w;
        }
        a
    }

    fn split(v: &[f64]) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_iterator(v.len() / 2, v.iter().step_by(2).copied()),
            DVector::from_iterator(v.len() / 2, v.iter().skip(1).step_by(2).copied()),
        )
    }

    pub fn bilinear(&self, curve: &PolygonCurve, v: &[f64], w: &[f64]) -> Result<f64> {
        check_len("curve tangent", 2 * curve.len(), v.len())?;
        check_len("curve tangent", 2 * curve.len(), w.len())?;
        let a = self.matrix(curve);
        let (vx, vy) = Self::split(v);
        let (wx, wy) = Self::split(w);
        Ok(vx.dot(&(&a * wx)) + vy.dot(&(&a * wy)))
    }

    /// Riesz representative of a covector: the `v` with
    /// `a(v, w) = covector . w` for every displacement `w`.
    pub fn riesz(&self, curve: &PolygonCurve, covector: &[f64]) -> Result<Vec<f64>> {
        check_len("curve covector", 2 * curve.len(), covector.len())?;
        let a = self.matrix(curve);
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("curve metric is not positive definite".into()))?;
        let (cx, cy) = Self::split(covector);
        let vx = chol.solve(&cx);
        let vy = chol.solve(&cy);
        // normwise relative residual |Av - c| / (|A| |v| + |c|)
        let a_norm = a
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let scale = a_norm * vx.amax().max(vy.amax()) + cx.amax().max(cy.amax());
        let res = (&a * &vx - &cx).amax().max((&a * &vy - &cy).amax());
        if res > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "curve metric solve residual {res:e} too large"
            )));
        }
        Ok(vx
            .iter()
            .zip(vy.iter())
            .flat_map(|(x, y)| [*x, *y])
            .collect())
    }
}
