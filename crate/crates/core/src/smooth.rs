//! Differentiable scalar primitives: sigmoid gates, two-state switches,
//! parametric softplus, and weighted soft max / mean reductions.
//!
//! Everything here is overflow-safe for sharpness parameters up to the
//! `beta = 1000` range used by the material mask, and every primitive has a
//! closed-form derivative (used by the reverse-mode tape in
//! [`crate::autodiff`]).

use crate::error::{CookError, Result};

/// Logistic gate `1 / (1 + exp(-beta * z))`, computed branch-free on the
/// sign of the argument so neither exponential overflows.
#[inline]
pub fn sigmoid_gate(z: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    sigmoid(beta * z)
}

/// Stable logistic function of a pre-scaled argument.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`] with respect to its argument.
#[inline]
pub fn sigmoid_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Two-state property switch blending `a_minus` below the threshold `z_c`
/// and `a_plus` above it, with gate sharpness `beta`.
#[inline]
pub fn two_state_switch(z: f64, z_c: f64, beta: f64, a_minus: f64, a_plus: f64) -> f64 {
    let chi = sigmoid_gate(z - z_c, beta);
    a_minus * (1.0 - chi) + a_plus * chi
}

/// Smooth positive part `(1/alpha) * ln(1 + exp(alpha * x))`.
///
/// For large `alpha * x` this returns `x + ln(1+exp(-alpha x))/alpha`
/// so the exponential never overflows.
#[inline]
pub fn softplus_alpha(x: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0);
    let ax = alpha * x;
    if ax > 0.0 {
        x + (-ax).exp().ln_1p() / alpha
    } else {
        ax.exp().ln_1p() / alpha
    }
}

/// Derivative of [`softplus_alpha`] with respect to `x`: `sigmoid(alpha*x)`.
#[inline]
pub fn softplus_alpha_deriv(x: f64, alpha: f64) -> f64 {
    sigmoid(alpha * x)
}

/// Swish activation `x * sigmoid(x)`.
#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of [`swish`]: `sigmoid(x) + x * sigmoid'(x)`.
#[inline]
pub fn swish_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// Smooth absolute value `softplus_alpha(x) + softplus_alpha(-x)`.
///
/// Exceeds `|x|` by at most `2 ln2 / alpha` (at the origin).
#[inline]
pub fn smooth_abs(x: f64, alpha: f64) -> f64 {
    softplus_alpha(x, alpha) + softplus_alpha(-x, alpha)
}

/// Derivative of [`smooth_abs`]: `sigmoid(alpha x) - sigmoid(-alpha x)`.
#[inline]
pub fn smooth_abs_deriv(x: f64, alpha: f64) -> f64 {
    sigmoid(alpha * x) - sigmoid(-alpha * x)
}

/// Two-argument Log-Sum-Exp soft maximum with sharpness `beta`.
///
/// Exceeds the hard max by at most `ln2 / beta`.
#[inline]
pub fn smooth_max2(a: f64, b: f64, beta: f64) -> f64 {
    let m = a.max(b);
    m + (-(beta * (a - b).abs())).exp().ln_1p() / beta
}

/// Partial derivative of [`smooth_max2`] with respect to `a`
/// (the `b` partial is its complement).
#[inline]
pub fn smooth_max2_da(a: f64, b: f64, beta: f64) -> f64 {
    sigmoid(beta * (a - b))
}

/// Weight-normalized Log-Sum-Exp soft maximum of `values` under
/// nonnegative `weights`:
/// `(1/beta) * ln( sum_i (w_i / W) * exp(beta * v_i) )` with `W = sum w_i`.
///
/// Lies between the weighted mean and the hard max over the support, and
/// approaches the hard max as `beta` grows. Errors when the mask is empty.
pub fn smooth_max(values: &[f64], weights: &[f64], beta: f64) -> Result<f64> {
    assert_eq!(values.len(), weights.len());
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 1e-300) {
        return Err(CookError::EmptyMask);
    }
    // Shift by the supported max for stability; the shift is exact.
    let mut vmax = f64::NEG_INFINITY;
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 && v > vmax {
            vmax = v;
        }
    }
    let mut acc = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            acc += w * (beta * (v - vmax)).exp();
        }
    }
    Ok(vmax + (acc / wsum).ln() / beta)
}

/// Weight-normalized mean of `values`. Errors when the mask is empty.
pub fn smooth_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    assert_eq!(values.len(), weights.len());
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 1e-300) {
        return Err(CookError::EmptyMask);
    }
    let dot: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    Ok(dot / wsum)
}

/// Logit (inverse of [`sigmoid`]); `p` must lie strictly inside (0, 1).
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
