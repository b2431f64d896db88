//! The level-α decision rule.
//!
//! Standardizes T by the plug-in null scale σ̂_{n,0} and rejects equality of
//! the two covariance matrices when the standardized statistic exceeds the
//! (1−α) standard normal quantile. One-sided by construction: T estimates
//! the nonnegative signal ‖Σ₁ − Σ₂‖²_F. A p-value from the same upper tail
//! is reported alongside the threshold decision.

use serde::Serialize;
use thiserror::Error;

use crate::ustat::{t_statistic, DataMatrix, TraceEstimates, UstatError};
use crate::variance::sigma_hat_null;

#[derive(Debug, Error)]
pub enum TestError {
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    #[error("degenerate null-scale estimate: sigma_hat = {0} is not positive")]
    DegenerateScale(f64),
    #[error("quantile argument must lie strictly between 0 and 1, got {0}")]
    QuantileOutOfRange(f64),
    #[error(transparent)]
    Engine(#[from] UstatError),
}

/// Outcome of one two-sample covariance equality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    /// The difference statistic T = U₁ + U₂ − 2V.
    pub t: f64,
    /// Plug-in null scale σ̂_{n,0}.
    pub sigma_hat: f64,
    /// Standardized statistic T / σ̂_{n,0}.
    pub statistic: f64,
    /// Upper-tail p-value 1 − Φ(statistic).
    pub p_value: f64,
    /// Whether statistic > z_{1−α}.
    pub reject: bool,
    pub alpha: f64,
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
}

impl TestOutcome {
    /// The trace estimates are not retained on the outcome; recompute when
    /// needed via [`t_statistic`].
    pub fn threshold(&self) -> f64 {
        // reject ⇔ statistic > z_{1−α}, so the threshold always exists here.
        normal_quantile(1.0 - self.alpha).expect("alpha validated on construction")
    }
}

/// Runs the test at level `alpha` on two samples with equal column counts.
pub fn run_test(
    sample1: &DataMatrix,
    sample2: &DataMatrix,
    alpha: f64,
) -> Result<TestOutcome, TestError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TestError::InvalidAlpha(alpha));
    }
    let estimates: TraceEstimates = t_statistic(sample1, sample2)?;
    let sigma_hat = sigma_hat_null(estimates.u1, estimates.u2, sample1.rows(), sample2.rows());
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(TestError::DegenerateScale(sigma_hat));
    }
    let statistic = estimates.t / sigma_hat;
    let threshold = normal_quantile(1.0 - alpha)?;
    Ok(TestOutcome {
        t: estimates.t,
        sigma_hat,
        statistic,
        p_value: normal_sf(statistic),
        reject: statistic > threshold,
        alpha,
        n1: sample1.rows(),
        n2: sample2.rows(),
        p: sample1.cols(),
    })
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF Φ(x), via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal upper tail 1 − Φ(x), without cancellation for large x.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverse standard normal CDF.
///
/// A rational approximation (absolute error ≈ 1e-9) polished by one Newton
/// step against the erfc-based CDF, giving absolute error below 1e-10
/// across (0, 1).
pub fn normal_quantile(q: f64) -> Result<f64, TestError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(TestError::QuantileOutOfRange(q));
    }

    // Acklam's rational approximation in three regions.
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;

    let mut x = if q < LOW {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else if q <= 1.0 - LOW {
        let r = q - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    } else {
        let r = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };

    // One Newton step; the residual is formed tail-side to avoid
    // cancellation near q → 1.
    let err = if q <= 0.5 {
        normal_cdf(x) - q
    } else {
        normal_sf(x) - (1.0 - q)
    };
    let sign = if q <= 0.5 { 1.0 } else { -1.0 };
    x -= sign * err / normal_pdf(x);
    Ok(x)
}
