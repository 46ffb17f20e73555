use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Isotropic Gaussian mixture with equal weights. The index of the mode a
/// sample came from doubles as its prompt-like condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub mode_centers: Vec<Vec<f64>>,
    pub mode_std: f64,
}

impl DataSpec {
    /// `modes` centers evenly spaced on a circle in the plane.
    pub fn ring(modes: usize, radius: f64, mode_std: f64) -> Result<Self> {
        let centers = (0..modes)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / modes as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect();
        let spec = Self {
            mode_centers: centers,
            mode_std,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode_centers.len() < 2 {
            return Err(invalid("data needs at least two modes"));
        }
        if !(self.mode_std > 0.0 && self.mode_std.is_finite()) {
            return Err(invalid(format!(
                "mode_std must be positive, got {}",
                self.mode_std
            )));
        }
        let d = self.mode_centers[0].len();
        if d == 0 || self.mode_centers.iter().any(|c| c.len() != d) {
            return Err(invalid("mode centers must share a positive dimension"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mode_centers[0].len()
    }

    pub fn num_modes(&self) -> usize {
        self.mode_centers.len()
    }

    /// Draw one sample and the index of its mode.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let k = rng.random_range(0..self.mode_centers.len());
        let x = self.mode_centers[k]
            .iter()
            .map(|c| c + self.mode_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, k)
    }

    /// Index of and distance to the closest mode center.
    pub fn nearest_mode(&self, x: &[f64]) -> (usize, f64) {
        self.mode_centers
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let d = c
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (k, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least two modes")
    }
}
