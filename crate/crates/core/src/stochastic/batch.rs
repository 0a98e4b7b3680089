use std::fmt;

use rayon::prelude::*;

use super::{RngStream, SampleRng};
use crate::error::{check_len, Error, Result};
use crate::manifold::ManifoldPoint;

/// One realization `J(u, xi)` and its differential with respect to the
/// chart coordinates of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSample {
    pub value: f64,
    pub differential: Vec<f64>,
}

/// An objective `j(u) = E[J(u, xi)]` accessible through samples.
///
/// `sample` must draw `xi` from `rng` only, so a sample is a pure function
/// of `(u, rng state)`. Per-sample differentials must be unbiased for the
/// differential of `j`.
pub trait StochasticObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn sample(&self, u: &ManifoldPoint, rng: &mut SampleRng) -> Result<ObjectiveSample>;

    /// `j(u)` and its differential in closed form, when known.
    fn expected(&self, _u: &ManifoldPoint) -> Option<Result<ObjectiveSample>> {
        None
    }
}

/// Sample mean over a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEstimate {
    pub value: f64,
    pub differential: Vec<f64>,
    pub count: usize,
}

const CHUNK: usize = 64;

fn chunk_sum(
    obj: &dyn StochasticObjective,
    u: &ManifoldPoint,
    stream: &RngStream,
    range: std::ops::Range<usize>,
) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut diff = vec![0.0; obj.dim()];
    for s in range {
        let mut rng = stream.sample(s as u64).rng();
        let smp = obj.sample(u, &mut rng)?;
        check_len("sample differential", diff.len(), smp.differential.len())?;
        value += smp.value;
        for (d, g) in diff.iter_mut().zip(&smp.differential) {
            *d += g;
        }
    }
    Ok((value, diff))
}

/// Mean of `m` draws at `u`. Draw `s` uses substream `stream.sample(s)`.
///
/// Draws are summed sequentially inside fixed chunks of 64 and the chunk
/// sums are added in index order, so the result is bitwise identical for
/// any number of worker threads.
pub fn batch_gradient(
    obj: &dyn StochasticObjective,
    u: &ManifoldPoint,
    m: usize,
    stream: &RngStream,
) -> Result<BatchEstimate> {
    if m == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    check_len("objective point", obj.dim(), u.len())?;
    let chunks: Vec<std::ops::Range<usize>> = (0..m)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(m))
        .collect();
    let partials: Vec<Result<(f64, Vec<f64>)>> = if chunks.len() > 1 {
        chunks
            .into_par_iter()
            .map(|r| chunk_sum(obj, u, stream, r))
            .collect()
    } else {
        chunks
            .into_iter()
            .map(|r| chunk_sum(obj, u, stream, r))
            .collect()
    };
    let mut value = 0.0;
    let mut diff = vec![0.0; obj.dim()];
    for p in partials {
        let (v, d) = p?;
        value += v;
        for (a, b) in diff.iter_mut().zip(&d) {
            *a += b;
        }
    }
    let inv = 1.0 / m as f64;
    diff.iter_mut().for_each(|d| *d *= inv);
    let est = BatchEstimate {
        value: value * inv,
        differential: diff,
        count: m,
    };
    if !est.value.is_finite() || est.differential.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numerical(
            "non-finite objective sample in batch".into(),
        ));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    /// `J(u, z) = u^2/2 + sigma z u`
    #[derive(Debug)]
    struct Noisy {
        sigma: f64,
    }

    impl StochasticObjective for Noisy {
        fn dim(&self) -> usize {
            1
        }

        fn sample(&self, u: &ManifoldPoint, rng: &mut SampleRng) -> Result<ObjectiveSample> {
            let z: f64 = StandardNormal.sample(rng);
            Ok(ObjectiveSample {
                value: 0.5 * u[0] * u[0] + self.sigma * z * u[0],
                differential: vec![u[0] + self.sigma * z],
            })
        }
    }

    #[test]
    fn single_draw_passthrough() {
        let obj = Noisy { sigma: 1.0 };
        let u = ManifoldPoint::new(vec![0.7]);
        let stream = RngStream::new(9).outer(1).step(1);
        let est = batch_gradient(&obj, &u, 1, &stream).unwrap();
        let direct = obj.sample(&u, &mut stream.sample(0).rng()).unwrap();
        assert_eq!(est.differential, direct.differential);
        assert_eq!(est.value, direct.value);
    }

    #[test]
    fn zero_variance_is_exact() {
        let obj = Noisy { sigma: 0.0 };
        let u = ManifoldPoint::new(vec![-1.25]);
        let est = batch_gradient(&obj, &u, 300, &RngStream::new(1)).unwrap();
        assert_eq!(est.differential, vec![-1.25]);
    }

    #[test]
    fn zero_batch_rejected() {
        let obj = Noisy { sigma: 0.0 };
        assert!(batch_gradient(&obj, &ManifoldPoint::zeros(1), 0, &RngStream::new(1)).is_err());
    }

    #[test]
    fn reduction_is_thread_count_independent() {
        let obj = Noisy { sigma: 2.0 };
        let u = ManifoldPoint::new(vec![0.3]);
        let stream = RngStream::new(77).outer(2).step(5);
        let a = batch_gradient(&obj, &u, 1000, &stream).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| batch_gradient(&obj, &u, 1000, &stream).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn variance_of_mean_scales_inversely_with_batch() {
        let obj = Noisy { sigma: 1.0 };
        let u = ManifoldPoint::new(vec![0.0]);
        let reps = 10_000u64;
        let mut points = Vec::new();
        for m in [1usize, 4, 16] {
            let base = RngStream::new(454612).outer(m as u64);
            let vals: Vec<f64> = (0..reps)
                .map(|r| {
                    batch_gradient(&obj, &u, m, &base.step(r))
                        .unwrap()
                        .differential[0]
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            points.push(((m as f64).ln(), var.ln()));
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    }
}
