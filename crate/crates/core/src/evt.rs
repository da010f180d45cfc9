//! Peaks-over-threshold tail modelling with the Generalized Pareto
//! distribution
//!
//! ```text
//! G(z) = 1 - (1 + xi z / sigma)_+^(-1/xi),   z >= 0
//! ```
//!
//! with the exponential limit `1 - exp(-z / sigma)` at `xi = 0`.
//!
//! [`fit_gpd_tail`] takes the upper `rho` fraction of a sample: the threshold
//! `u` is the order statistic at (1-based) index `ceil((1 - rho) n)`, and the
//! exceedances `s - u` of the samples strictly above `u` are fitted by maximum
//! likelihood. The likelihood is maximised by profiling: for a fixed shape the
//! scale solves a one-dimensional score equation, the profile is scanned on a
//! shape grid over `[-0.5, 0.5]` and the best grid cell is refined by golden
//! section search.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest exceedances a tail fit accepts.
pub const MIN_EXCEEDANCES: usize = 20;
/// Shape search range is `[-SHAPE_BOUND, SHAPE_BOUND]`.
pub const SHAPE_BOUND: f64 = 0.5;
/// Below this `|xi|` the exponential limit is used.
pub const EXPONENTIAL_LIMIT: f64 = 1e-8;

const SHAPE_GRID_STEP: f64 = 0.025;
const GOLDEN_ITERATIONS: usize = 48;

/// Fitted tail model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdModel {
    pub sigma: f64,
    pub xi: f64,
    pub threshold_u: f64,
    pub tail_fraction: f64,
    pub n_exceedances: usize,
}

impl GpdModel {
    /// `G(z)` for an exceedance `z >= 0`.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        gpd_cdf(self.sigma, self.xi, z)
    }

    /// `0` at or below the threshold, otherwise `G(raw - u)`.
    pub fn tail_probability(&self, raw_value: f64) -> f64 {
        if !(raw_value > self.threshold_u) {
            return 0.0;
        }
        cdf_unchecked(self.sigma, self.xi, raw_value - self.threshold_u)
    }
}

/// How the parameters of a [`GpdFit`] were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    MaximumLikelihood,
    /// The likelihood could not be maximised; moment estimates were kept.
    MomentFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub model: GpdModel,
    pub log_likelihood: f64,
    pub method: FitMethod,
    /// The shape estimate sits on the edge of the search range.
    pub shape_at_bound: bool,
}

pub fn gpd_cdf(sigma: f64, xi: f64, z: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    if !(z >= 0.0) {
        return Err(Error::param("z", "exceedance must be nonnegative"));
    }
    Ok(cdf_unchecked(sigma, xi, z))
}

fn cdf_unchecked(sigma: f64, xi: f64, z: f64) -> f64 {
    if xi.abs() < EXPONENTIAL_LIMIT {
        return -libm::expm1(-z / sigma);
    }
    let t = xi * z / sigma;
    if t <= -1.0 {
        // beyond the upper end point of a negative-shape model
        return 1.0;
    }
    (-libm::expm1(-libm::log1p(t) / xi)).clamp(0.0, 1.0)
}

/// Sum of log densities; `-inf` when an exceedance is outside the support.
pub fn gpd_log_likelihood(sigma: f64, xi: f64, exceedances: &[f64]) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive"));
    }
    if exceedances.iter().any(|z| !(*z >= 0.0)) {
        return Err(Error::param("exceedances", "must be nonnegative"));
    }
    Ok(log_likelihood_unchecked(sigma, xi, exceedances))
}

fn log_likelihood_unchecked(sigma: f64, xi: f64, z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let ln_sigma = libm::log(sigma);
    if xi.abs() < EXPONENTIAL_LIMIT {
        return -n * ln_sigma - z.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &zi in z {
        let t = xi * zi / sigma;
        if t <= -1.0 {
            return f64::NEG_INFINITY;
        }
        acc += libm::log1p(t);
    }
    -n * ln_sigma - (1.0 + 1.0 / xi) * acc
}

/// Moment estimates `xi = (1 - m^2/v) / 2`, `sigma = m (m^2/v + 1) / 2`, with
/// the shape clipped to the search range.
pub fn moment_estimate(exceedances: &[f64]) -> Result<(f64, f64)> {
    let n = exceedances.len();
    if n < 2 {
        return Err(Error::TooFewExceedances {
            needed: 2,
            available: n,
        });
    }
    let mean = exceedances.iter().sum::<f64>() / n as f64;
    let var = exceedances.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) || !(mean > 0.0) {
        return Err(Error::DegenerateSamples);
    }
    let ratio = mean * mean / var;
    let xi = (0.5 * (1.0 - ratio)).clamp(-SHAPE_BOUND, SHAPE_BOUND);
    let sigma = 0.5 * mean * (ratio + 1.0);
    Ok((sigma, xi))
}

/// Maximum likelihood scale for a fixed shape.
///
/// With `theta = 1/sigma` the score is
/// `g(theta) = n/theta - (1 + xi) sum z / (1 + xi theta z)`,
/// positive near zero and negative near the upper end of the admissible
/// range; the root is bracketed and found by safeguarded Newton steps.
fn profile_scale(xi: f64, z: &[f64], z_max: f64, mean: f64) -> Option<f64> {
    let n = z.len() as f64;
    let score = |theta: f64| -> (f64, f64) {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &zi in z {
            let q = 1.0 / (1.0 + xi * theta * zi);
            s1 += zi * q;
            s2 += zi * zi * q * q;
        }
        let g = n / theta - (1.0 + xi) * s1;
        let dg = -n / (theta * theta) + (1.0 + xi) * xi * s2;
        (g, dg)
    };

    let mut lo = 0.0;
    let mut hi = if xi < 0.0 {
        -1.0 / (xi * z_max) * (1.0 - 1e-12)
    } else {
        let mut h = 1.0 / mean;
        let mut tries = 0;
        while score(h).0 > 0.0 {
            h *= 2.0;
            tries += 1;
            if tries > 200 {
                return None;
            }
        }
        h
    };
    if score(hi).0 > 0.0 {
        // the score never turns negative inside the support
        return Some(1.0 / hi);
    }
    let mut theta = if xi < 0.0 { 0.5 * hi } else { 1.0 / mean };
    theta = theta.clamp(hi * 1e-6, hi);
    for _ in 0..200 {
        let (g, dg) = score(theta);
        if g > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let newton = theta - g / dg;
        theta = if dg < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-14 * hi || g == 0.0 {
            break;
        }
        if (g / dg).abs() <= 1e-15 * theta {
            break;
        }
    }
    if theta > 0.0 && theta.is_finite() {
        Some(1.0 / theta)
    } else {
        None
    }
}

/// Maximum likelihood fit of exceedances.
fn fit_exceedances(z: &[f64]) -> Result<(f64, f64, f64, FitMethod)> {
    let (sigma0, xi0) = moment_estimate(z)?;
    let ll0 = log_likelihood_unchecked(sigma0, xi0, z);
    let z_max = z.iter().fold(0.0f64, |m, &v| m.max(v));
    let mean = z.iter().sum::<f64>() / z.len() as f64;

    let profile = |xi: f64| -> (f64, f64) {
        match profile_scale(xi, z, z_max, mean) {
            Some(s) => (log_likelihood_unchecked(s, xi, z), s),
            None => (f64::NEG_INFINITY, f64::NAN),
        }
    };

    let steps = libm::round(2.0 * SHAPE_BOUND / SHAPE_GRID_STEP) as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| -SHAPE_BOUND + i as f64 * SHAPE_GRID_STEP)
        .collect();
    let mut best = (f64::NEG_INFINITY, f64::NAN, f64::NAN);
    let mut best_i = 0;
    for (i, &xi) in grid.iter().enumerate() {
        let (ll, s) = profile(xi);
        if ll > best.0 {
            best = (ll, s, xi);
            best_i = i;
        }
    }
    if !best.0.is_finite() {
        if ll0.is_finite() {
            return Ok((sigma0, xi0, ll0, FitMethod::MomentFallback));
        }
        return Err(Error::NotConverged {
            iterations: grid.len(),
            gap: f64::INFINITY,
        });
    }

    // golden section on the bracketing grid cells
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(steps)];
    let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = profile(c);
    let mut fd = profile(d);
    for _ in 0..GOLDEN_ITERATIONS {
        if fc.0 >= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = profile(d);
        }
    }
    for (cand, xi) in [(fc, c), (fd, d)] {
        if cand.0 > best.0 {
            best = (cand.0, cand.1, xi);
        }
    }

    if ll0 > best.0 {
        // the moment point is inside the search range, so this only happens
        // when the profile solver lost precision; keep the better point
        return Ok((sigma0, xi0, ll0, FitMethod::MaximumLikelihood));
    }
    Ok((best.1, best.2, best.0, FitMethod::MaximumLikelihood))
}

/// Threshold and exceedances of the upper `rho` fraction of `samples`.
pub fn tail_exceedances(samples: &[f64], rho: f64) -> Result<(f64, Vec<f64>)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", "must lie in (0, 1]"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("tail samples must be finite".into()));
    }
    let n = samples.len();
    let tail_size = libm::ceil(rho * n as f64 - 1e-9) as usize;
    if tail_size < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances {
            needed: MIN_EXCEEDANCES,
            available: tail_size,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::DegenerateSamples);
    }
    let k = (libm::ceil((1.0 - rho) * n as f64 - 1e-9) as usize).clamp(1, n);
    let u = sorted[k - 1];
    let z: Vec<f64> = sorted[k..].iter().filter(|&&s| s > u).map(|&s| s - u).collect();
    Ok((u, z))
}

/// Fits the upper `rho` fraction of `samples`.
pub fn fit_gpd_tail(samples: &[f64], rho: f64) -> Result<GpdFit> {
    let (u, z) = tail_exceedances(samples, rho)?;
    let mut fit = fit_gpd_exceedances(&z)?;
    fit.model.threshold_u = u;
    fit.model.tail_fraction = rho;
    Ok(fit)
}

/// Fits exceedances that are already measured from a threshold at zero.
pub fn fit_gpd_exceedances(z: &[f64]) -> Result<GpdFit> {
    if z.len() < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances {
            needed: MIN_EXCEEDANCES,
            available: z.len(),
        });
    }
    if z.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidDataset("exceedances must be finite and nonnegative".into()));
    }
    let (sigma, xi, log_likelihood, method) = fit_exceedances(z)?;
    Ok(GpdFit {
        model: GpdModel {
            sigma,
            xi,
            threshold_u: 0.0,
            tail_fraction: 1.0,
            n_exceedances: z.len(),
        },
        log_likelihood,
        method,
        shape_at_bound: xi.abs() >= SHAPE_BOUND - 1e-9,
    })
}
