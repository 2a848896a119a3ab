//! Two-parameter Weibull fitting for extreme-value tails.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-6;
/// Shapes above this are numerically a step function.
const SHAPE_CAP: f64 = 500.0;
const SHAPE_FLOOR: f64 = 0.05;
/// Distances are floored here so that logarithms stay finite.
const MIN_SAMPLE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

impl Weibull {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::invalid("weibull shape and scale must be positive"));
        }
        Ok(Self { shape, scale })
    }

    /// Inclusion probability `exp(-(d / scale)^shape)`.
    pub fn psi(&self, distance: f64) -> f64 {
        (-(distance / self.scale).powf(self.shape)).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - self.psi(x)
        }
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let (k, l) = (self.shape, self.scale);
        samples
            .iter()
            .map(|&x| {
                let z = x.max(MIN_SAMPLE) / l;
                k.ln() - l.ln() + (k - 1.0) * z.ln() - z.powf(k)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    MaximumLikelihood,
    Moments,
    /// All samples equal: a capped-shape step at the common value.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullFit {
    pub weibull: Weibull,
    pub method: FitMethod,
    pub iterations: usize,
}

/// Fit shape and scale to nonnegative samples.
///
/// Maximum likelihood solves the profile equation for the shape by damped
/// fixed-point iteration on data rescaled to `(0, 1]`. If that does not
/// settle within the iteration cap, moment matching on the coefficient of
/// variation is used instead.
pub fn fit_weibull(samples: &[f64]) -> Result<WeibullFit> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit a weibull to no samples"));
    }
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid(
            "weibull samples must be finite and nonnegative",
        ));
    }
    let xs: Vec<f64> = samples.iter().map(|x| x.max(MIN_SAMPLE)).collect();
    let top = xs.iter().copied().fold(0.0, f64::max);
    let n = xs.len() as f64;
    let ys: Vec<f64> = xs.iter().map(|x| x / top).collect();
    let lns: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mean_ln = lns.iter().sum::<f64>() / n;
    let spread = lns.iter().map(|l| (l - mean_ln).powi(2)).sum::<f64>() / n;

    if spread < 1e-18 {
        return Ok(WeibullFit {
            weibull: Weibull {
                shape: SHAPE_CAP,
                scale: top,
            },
            method: FitMethod::Degenerate,
            iterations: 0,
        });
    }

    let scale_for = |k: f64| top * (ys.iter().map(|y| y.powf(k)).sum::<f64>() / n).powf(1.0 / k);

    // Profile equation: 1/k = sum(y^k ln y) / sum(y^k) - mean(ln y).
    let mut k = (1.2825 / spread.sqrt()).clamp(SHAPE_FLOOR, SHAPE_CAP);
    for it in 1..=MAX_ITER {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (y, l) in ys.iter().zip(&lns) {
            let p = y.powf(k);
            s0 += p;
            s1 += p * l;
        }
        let denom = s1 / s0 - mean_ln;
        if !(denom.is_finite() && denom > 0.0) {
            break;
        }
        let next = (0.5 * (k + 1.0 / denom)).clamp(SHAPE_FLOOR, SHAPE_CAP);
        if (next - k).abs() <= TOL * k.max(1.0) {
            let scale = scale_for(next);
            if let Ok(weibull) = Weibull::new(next, scale) {
                return Ok(WeibullFit {
                    weibull,
                    method: FitMethod::MaximumLikelihood,
                    iterations: it,
                });
            }
            break;
        }
        k = next;
    }
    moments_fit(&xs)
}

fn cv_for_shape(k: f64) -> f64 {
    let ratio = (ln_gamma(1.0 + 2.0 / k) - 2.0 * ln_gamma(1.0 + 1.0 / k)).exp();
    (ratio - 1.0).max(0.0).sqrt()
}

fn moments_fit(xs: &[f64]) -> Result<WeibullFit> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let cv = sd / mean;
    // cv_for_shape is decreasing in k.
    let (mut lo, mut hi) = (SHAPE_FLOOR, SHAPE_CAP);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cv_for_shape(mid) > cv {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    let scale = mean / ln_gamma(1.0 + 1.0 / k).exp();
    let weibull = Weibull::new(k, scale).map_err(|_| Error::NonConvergent)?;
    Ok(WeibullFit {
        weibull,
        method: FitMethod::Moments,
        iterations: MAX_ITER,
    })
}
