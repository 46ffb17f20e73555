//! Brute-force numerical references used to check the closed-form and
//! analytic machinery elsewhere in the crate.
//!
//! Nothing in here calls into [`crate::dynamics`] or [`crate::flownet`]; the
//! checks stay independent of the code paths they verify.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::flownet::VelocityField;

/// Midpoint-rule quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panels: 1_000_000 }
    }
}

/// Midpoint-rule estimate of `∫ η² s/(1-s) ds` over `[sigma_lo, sigma_hi]`.
pub fn quadrature_variance(sigma_hi: f64, sigma_lo: f64, eta: f64, panels: usize) -> Result<f64> {
    if panels == 0 {
        return Err(invalid("quadrature needs at least one panel"));
    }
    if sigma_hi >= 1.0 {
        return Err(Error::Domain(format!(
            "integrand s/(1-s) is singular at sigma_hi = {sigma_hi}"
        )));
    }
    if !(sigma_lo >= 0.0 && sigma_lo <= sigma_hi) {
        return Err(invalid(format!(
            "need 0 <= sigma_lo <= sigma_hi, got [{sigma_lo}, {sigma_hi}]"
        )));
    }
    let width = sigma_hi - sigma_lo;
    if width == 0.0 {
        return Ok(0.0);
    }
    let h = width / panels as f64;
    // Neumaier-compensated sum; a million panels otherwise leaks ~1e-11.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..panels {
        let s = sigma_lo + (i as f64 + 0.5) * h;
        let term = s / (1.0 - s);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok(eta * eta * (sum + comp) * h)
}

/// Central finite-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Oracle(format!(
                "non-finite function value while differentiating coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Per-dimension std of `x_σ = (1-σ) x_0 + σ z` for `x_0, z ~ N(0, I)`.
pub fn gaussian_marginal_std(sigma: f64) -> f64 {
    ((1.0 - sigma).powi(2) + sigma * sigma).sqrt()
}

/// `E‖ζ‖` for `ζ ~ N(0, I_d)`: `√2 Γ((d+1)/2) / Γ(d/2)`.
pub fn expected_gaussian_norm(dim: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let d = dim as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)).exp()
}

/// Exact probability-flow field when the data distribution is `N(0, I)`.
///
/// Velocity `(2σ - 1) x / m(σ)` and score `-x / m(σ)` with
/// `m(σ) = (1-σ)² + σ²`.
#[derive(Debug, Clone, Copy)]
pub struct StandardGaussianFlow {
    pub dim: usize,
}

impl StandardGaussianFlow {
    pub fn marginal_variance(sigma: f64) -> f64 {
        (1.0 - sigma).powi(2) + sigma * sigma
    }

    pub fn velocity(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let k = (2.0 * sigma - 1.0) / Self::marginal_variance(sigma);
        x.iter().map(|xi| k * xi).collect()
    }

    pub fn score(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let m = Self::marginal_variance(sigma);
        x.iter().map(|xi| -xi / m).collect()
    }
}

impl VelocityField for StandardGaussianFlow {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn velocity_batch(
        &self,
        xs: &Array2<f64>,
        sigmas: &[f64],
        _conditions: &[Option<usize>],
    ) -> Result<Array2<f64>> {
        let mut out = xs.clone();
        for (mut row, &s) in out.rows_mut().into_iter().zip(sigmas) {
            let k = (2.0 * s - 1.0) / Self::marginal_variance(s);
            row.mapv_inplace(|x| k * x);
        }
        Ok(out)
    }
}

/// Distance summary between two sample sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleReport {
    pub energy_distance: f64,
    /// `mean_a - mean_b` per dimension.
    pub mean_gaps: Vec<f64>,
    /// `var_a / var_b - 1` per dimension (population variances).
    pub variance_gaps: Vec<f64>,
}

fn check_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("two-sample comparison needs non-empty sets"));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|s| s.len() != d) {
        return Err(invalid("sample dimensions differ"));
    }
    Ok(d)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += euclid(x, y);
        }
    }
    total / (a.len() * b.len()) as f64
}

fn moments(s: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = s.len() as f64;
    let mut mean = vec![0.0; d];
    for x in s {
        for (m, xi) in mean.iter_mut().zip(x) {
            *m += xi;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for x in s {
        for ((v, xi), m) in var.iter_mut().zip(x).zip(&mean) {
            *v += (xi - m) * (xi - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Energy distance `2E‖X-Y‖ - E‖X-X'‖ - E‖Y-Y'‖` (V-statistic) plus
/// per-dimension moment gaps.
pub fn two_sample_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<TwoSampleReport> {
    let d = check_samples(a, b)?;
    let energy = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
    let (ma, va) = moments(a, d);
    let (mb, vb) = moments(b, d);
    Ok(TwoSampleReport {
        energy_distance: energy,
        mean_gaps: ma.iter().zip(&mb).map(|(x, y)| x - y).collect(),
        variance_gaps: va.iter().zip(&vb).map(|(x, y)| x / y - 1.0).collect(),
    })
}

/// Outcome of an energy-distance permutation test.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationTest {
    pub statistic: f64,
    /// Empirical `level` quantile of the permutation null.
    pub threshold: f64,
    pub p_value: f64,
}

impl PermutationTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.threshold
    }
}

/// Energy-distance permutation test with `resamples` random relabelings of
/// the pooled sample.
pub fn energy_permutation_test(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<PermutationTest> {
    check_samples(a, b)?;
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(invalid(
            "permutation test needs resamples >= 1 and level in (0, 1)",
        ));
    }
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let n = pooled.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclid(pooled[i], pooled[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let total: f64 = dist.iter().sum();
    let (na, nb) = (a.len(), b.len());
    let within = |idx: &[usize]| -> f64 {
        let mut s = 0.0;
        for &i in idx {
            let row = &dist[i * n..(i + 1) * n];
            for &j in idx {
                s += row[j];
            }
        }
        s
    };
    let stat = |labels: &[usize]| -> f64 {
        let (ia, ib) = labels.split_at(na);
        let saa = within(ia);
        let sbb = within(ib);
        let sab = 0.5 * (total - saa - sbb);
        2.0 * sab / (na * nb) as f64 - saa / (na * na) as f64 - sbb / (nb * nb) as f64
    };
    let mut labels: Vec<usize> = (0..n).collect();
    let observed = stat(&labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut null = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        labels.shuffle(&mut rng);
        null.push(stat(&labels));
    }
    null.sort_by(|x, y| x.total_cmp(y));
    let idx = ((level * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    Ok(PermutationTest {
        statistic: observed,
        threshold: null[idx],
        p_value: (exceed + 1) as f64 / (resamples + 1) as f64,
    })
}
