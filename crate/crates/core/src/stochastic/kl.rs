use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Truncated Karhunen–Loève field on `x2 in [0, 1]`:
///
/// `kappa(x2, xi) = -4 x2 (x2 - 1) + sum_l l^(-eta - 1/2) sin(2 pi l (x2 - 1/2)) xi_l`
///
/// with `xi_l ~ U[-1/2, 1/2]` independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlField {
    pub num_terms: usize,
    pub eta: f64,
}

impl Default for KlField {
    fn default() -> Self {
        Self {
            num_terms: 100,
            eta: 3.5,
        }
    }
}

impl KlField {
    pub fn new(num_terms: usize, eta: f64) -> Result<Self> {
        if num_terms == 0 {
            return Err(Error::Parameter("KL field needs at least one term".into()));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Parameter(format!(
                "KL decay exponent must be positive, got {eta}"
            )));
        }
        Ok(Self { num_terms, eta })
    }

    fn check_x2(x2: f64) -> Result<()> {
        if (0.0..=1.0).contains(&x2) {
            Ok(())
        } else {
            Err(Error::Domain(format!("KL coordinate {x2} outside [0, 1]")))
        }
    }

    /// Deterministic part `-4 x2 (x2 - 1)`.
    pub fn mean(&self, x2: f64) -> Result<f64> {
        Self::check_x2(x2)?;
        Ok(-4.0 * x2 * (x2 - 1.0))
    }

    /// Mode shapes `l^(-eta-1/2) sin(2 pi l (x2 - 1/2))` for `l = 1..=num_terms`.
    pub fn modes(&self, x2: f64) -> Result<Vec<f64>> {
        Self::check_x2(x2)?;
        Ok((1..=self.num_terms)
            .map(|l| {
                let lf = l as f64;
                lf.powf(-self.eta - 0.5) * (2.0 * PI * lf * (x2 - 0.5)).sin()
            })
            .collect())
    }

    pub fn sample_coefficients(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.num_terms)
            .map(|_| rng.random::<f64>() - 0.5)
            .collect()
    }

    pub fn evaluate(&self, x2: f64, xi: &[f64]) -> Result<f64> {
        check_len("KL coefficients", self.num_terms, xi.len())?;
        if let Some(bad) = xi.iter().find(|x| !(x.abs() <= 0.5)) {
            return Err(Error::Domain(format!(
                "KL coefficient {bad} outside [-1/2, 1/2]"
            )));
        }
        let modes = self.modes(x2)?;
        Ok(self.mean(x2)? + modes.iter().zip(xi).map(|(m, x)| m * x).sum::<f64>())
    }

    /// `Var[kappa(x2)] = (1/12) sum_l l^(-2 eta - 1) sin^2(2 pi l (x2 - 1/2))`.
    pub fn variance(&self, x2: f64) -> Result<f64> {
        Ok(self.modes(x2)?.iter().map(|m| m * m).sum::<f64>() / 12.0)
    }
}
