//! Manifold contract used by the solver, with Euclidean and product
//! instances. Points and tangent vectors are stored in chart coordinates.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A point on a manifold, in the chart coordinates of its instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint(Vec<f64>);

/// A tangent vector. The base point is passed alongside wherever it matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector(Vec<f64>);

macro_rules! coordinate_newtype {
    ($name:ident) => {
        impl $name {
            pub fn new(coords: Vec<f64>) -> Self {
                Self(coords)
            }

            pub fn zeros(dim: usize) -> Self {
                Self(vec![0.0; dim])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

coordinate_newtype!(ManifoldPoint);
coordinate_newtype!(TangentVector);

impl TangentVector {
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| factor * x).collect())
    }
}

/// Riemannian manifold in a single global chart.
///
/// Objectives and constraints report *differentials*, i.e. partial
/// derivatives with respect to the chart coordinates. The instance turns a
/// differential into a gradient through its metric (Riesz representation).
pub trait Manifold: Send + Sync + fmt::Debug {
    /// Number of chart coordinates.
    fn dim(&self) -> usize;

    fn inner(&self, at: &ManifoldPoint, v: &TangentVector, w: &TangentVector) -> Result<f64>;

    fn retract(&self, at: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint>;

    /// Exact exponential map, where the instance has one.
    fn exp(&self, _at: &ManifoldPoint, _v: &TangentVector) -> Option<Result<ManifoldPoint>> {
        None
    }

    fn distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> Result<f64>;

    /// Solves `g_at(grad, w) = differential . w` for all `w`.
    fn gradient_from_differential(
        &self,
        at: &ManifoldPoint,
        differential: &[f64],
    ) -> Result<TangentVector>;

    /// Validates that `u` is a point of this instance.
    fn check_point(&self, u: &ManifoldPoint) -> Result<()> {
        check_len("manifold point", self.dim(), u.len())?;
        if !u.is_finite() {
            return Err(Error::Domain("non-finite point coordinates".into()));
        }
        Ok(())
    }

    fn norm(&self, at: &ManifoldPoint, v: &TangentVector) -> Result<f64> {
        Ok(self.inner(at, v, v)?.max(0.0).sqrt())
    }
}

fn check_tangent(m: &dyn Manifold, at: &ManifoldPoint, v: &TangentVector) -> Result<()> {
    check_len("base point", m.dim(), at.len())?;
    check_len("tangent vector", m.dim(), v.len())
}

/// Flat `R^n` with the standard inner product and additive retraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Manifold for Euclidean {
    fn dim(&self) -> usize {
        self.dim
    }

    fn inner(&self, at: &ManifoldPoint, v: &TangentVector, w: &TangentVector) -> Result<f64> {
        check_tangent(self, at, v)?;
        check_len("tangent vector", self.dim, w.len())?;
        Ok(v.iter().zip(w.iter()).map(|(a, b)| a * b).sum())
    }

    fn retract(&self, at: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        check_tangent(self, at, v)?;
        Ok(ManifoldPoint(
            at.iter().zip(v.iter()).map(|(a, b)| a + b).collect(),
        ))
    }

    fn exp(&self, at: &ManifoldPoint, v: &TangentVector) -> Option<Result<ManifoldPoint>> {
        Some(self.retract(at, v))
    }

    fn distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> Result<f64> {
        check_len("manifold point", self.dim, a.len())?;
        check_len("manifold point", self.dim, b.len())?;
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
        check_len("base point", self.dim, at.len())?;
        check_len("differential", self.dim, differential.len())?;
        Ok(TangentVector(differential.to_vec()))
    }
}

/// Cartesian product `M_1 x ... x M_N` with the summed metric.
///
/// Coordinates of the factors are concatenated in order.
#[derive(Debug, Clone)]
pub struct ProductManifold {
    factors: Vec<Arc<dyn Manifold>>,
    offsets: Vec<usize>,
}

impl ProductManifold {
    pub fn new(factors: Vec<Arc<dyn Manifold>>) -> Self {
        let mut offsets = Vec::with_capacity(factors.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for f in &factors {
            acc += f.dim();
            offsets.push(acc);
        }
        Self { factors, offsets }
    }

    pub fn factors(&self) -> &[Arc<dyn Manifold>] {
        &self.factors
    }

    /// Coordinate range of factor `i`.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    fn split<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        (0..self.factors.len()).map(move |i| &x[self.range(i)])
    }

    /// Applies `f` to each factor with its slices of `a` and `b`.
    fn per_factor<T>(
        &self,
        a: &[f64],
        b: &[f64],
        mut f: impl FnMut(&dyn Manifold, &[f64], &[f64]) -> Result<T>,
    ) -> Result<Vec<T>> {
        self.factors
            .iter()
            .zip(self.split(a).zip(self.split(b)))
            .map(|(m, (x, y))| f(m.as_ref(), x, y))
            .collect()
    }
}

fn pt(x: &[f64]) -> ManifoldPoint {
    ManifoldPoint(x.to_vec())
}

fn tv(x: &[f64]) -> TangentVector {
    TangentVector(x.to_vec())
}

impl Manifold for ProductManifold {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn inner(&self, at: &ManifoldPoint, v: &TangentVector, w: &TangentVector) -> Result<f64> {
        check_tangent(self, at, v)?;
        check_len("tangent vector", self.dim(), w.len())?;
        let mut total = 0.0;
        for (i, m) in self.factors.iter().enumerate() {
            let r = self.range(i);
            total += m.inner(&pt(&at[r.clone()]), &tv(&v[r.clone()]), &tv(&w[r]))?;
        }
        Ok(total)
    }

    fn retract(&self, at: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        check_tangent(self, at, v)?;
        let parts = self.per_factor(at, v, |m, x, y| m.retract(&pt(x), &tv(y)))?;
        Ok(ManifoldPoint(
            parts
                .into_iter()
                .flat_map(ManifoldPoint::into_inner)
                .collect(),
        ))
    }

    fn exp(&self, at: &ManifoldPoint, v: &TangentVector) -> Option<Result<ManifoldPoint>> {
        if let Err(e) = check_tangent(self, at, v) {
            return Some(Err(e));
        }
        let mut out = Vec::with_capacity(self.dim());
        for (i, m) in self.factors.iter().enumerate() {
            let r = self.range(i);
            match m.exp(&pt(&at[r.clone()]), &tv(&v[r]))? {
                Ok(p) => out.extend(p.into_inner()),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(ManifoldPoint(out)))
    }

    fn distance(&self, a: &ManifoldPoint, b: &ManifoldPoint) -> Result<f64> {
        check_len("manifold point", self.dim(), a.len())?;
        check_len("manifold point", self.dim(), b.len())?;
        let d = self.per_factor(a, b, |m, x, y| m.distance(&pt(x), &pt(y)))?;
        Ok(d.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    fn gradient_from_differential(
        &self,
        at: &ManifoldPoint,
        differential: &[f64],
    ) -> Result<TangentVector> {
        check_len("base point", self.dim(), at.len())?;
        check_len("differential", self.dim(), differential.len())?;
        let parts = self.per_factor(at, differential, |m, x, d| {
            m.gradient_from_differential(&pt(x), d)
        })?;
        Ok(TangentVector(
            parts
                .into_iter()
                .flat_map(TangentVector::into_inner)
                .collect(),
        ))
    }

    fn check_point(&self, u: &ManifoldPoint) -> Result<()> {
        check_len("manifold point", self.dim(), u.len())?;
        for (i, m) in self.factors.iter().enumerate() {
            m.check_point(&pt(&u[self.range(i)]))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r1_squared() -> ProductManifold {
        ProductManifold::new(vec![
            Arc::new(Euclidean::new(1)),
            Arc::new(Euclidean::new(1)),
        ])
    }

    #[test]
    fn metric_examples() {
        let e = Euclidean::new(2);
        let u = ManifoldPoint::new(vec![5.0, -1.0]);
        let ip = |v: Vec<f64>, w: Vec<f64>| e.inner(&u, &v.into(), &w.into()).unwrap();
        assert_eq!(ip(vec![1.0, 0.0], vec![0.0, 1.0]), 0.0);
        assert_eq!(ip(vec![3.0, 4.0], vec![3.0, 4.0]), 25.0);

        let p = r1_squared();
        let u = ManifoldPoint::new(vec![0.0, 0.0]);
        let v = TangentVector::new(vec![1.0, 2.0]);
        assert_eq!(p.inner(&u, &v, &v).unwrap(), 5.0);
    }

    #[test]
    fn retraction_examples() {
        let e = Euclidean::new(2);
        let u = ManifoldPoint::new(vec![1.0, 2.0]);
        assert_eq!(e.retract(&u, &TangentVector::zeros(2)).unwrap(), u);
        assert_eq!(
            e.retract(&u, &vec![0.5, -1.0].into()).unwrap().as_slice(),
            &[1.5, 1.0]
        );
        let p = r1_squared();
        let moved = p
            .retract(&vec![0.0, 1.0].into(), &vec![1.0, -1.0].into())
            .unwrap();
        assert_eq!(moved.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn distance_examples() {
        let e = Euclidean::new(2);
        let a = ManifoldPoint::new(vec![7.0, 7.0]);
        assert_eq!(e.distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            e.distance(&vec![0.0, 0.0].into(), &vec![3.0, 4.0].into())
                .unwrap(),
            5.0
        );
        let p = r1_squared();
        assert_eq!(
            p.distance(&vec![0.0, 0.0].into(), &vec![3.0, 4.0].into())
                .unwrap(),
            5.0
        );
    }

    #[test]
    fn mismatched_dimensions_are_errors() {
        let e = Euclidean::new(2);
        let u = ManifoldPoint::new(vec![0.0, 0.0]);
        assert!(e.retract(&u, &TangentVector::zeros(3)).is_err());
        assert!(e.distance(&u, &ManifoldPoint::zeros(1)).is_err());
        assert!(e.check_point(&vec![f64::NAN, 0.0].into()).is_err());
    }

    #[test]
    fn metric_is_positive_and_product_decomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e2 = Euclidean::new(2);
        let p = ProductManifold::new(vec![
            Arc::new(Euclidean::new(2)),
            Arc::new(Euclidean::new(3)),
        ]);
        let u = ManifoldPoint::zeros(5);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = TangentVector::new(v);
            assert!(p.inner(&u, &v, &v).unwrap() > 0.0);
            let a = e2
                .inner(
                    &ManifoldPoint::zeros(2),
                    &v[..2].to_vec().into(),
                    &v[..2].to_vec().into(),
                )
                .unwrap();
            let b = Euclidean::new(3)
                .inner(
                    &ManifoldPoint::zeros(3),
                    &v[2..].to_vec().into(),
                    &v[2..].to_vec().into(),
                )
                .unwrap();
            assert_eq!(p.inner(&u, &v, &v).unwrap(), a + b);
        }
    }

    #[test]
    fn retraction_is_first_order() {
        let p = r1_squared();
        let u = ManifoldPoint::new(vec![0.3, -0.2]);
        let v = TangentVector::new(vec![0.6, 0.8]);
        let norm = p.norm(&u, &v).unwrap();
        for t in [1e-2, 1e-3] {
            let moved = p.retract(&u, &v.scaled(t)).unwrap();
            let ratio = p.distance(&moved, &u).unwrap() / t;
            assert!((ratio - norm).abs() < 1e-3);
        }
    }
}
