//! Lambert W evaluation and the log-exponential transition score.
//!
//! The score maps a conditioning error in [0,1] to a quality in [0,1] through
//! two branches joined at a Lambert-W-determined branch point: a log branch
//! `-ln(eps)/a` for large errors and a Gaussian branch for small ones. With
//! the Gaussian width chosen from the same Lambert value the two branches
//! match in both value and slope, the slope magnitude peaks exactly at the
//! branch point, and it decays to zero at zero error.

use crate::error::Error;
use crate::tensor::Tensor;

const INV_E: f64 = 1.0 / std::f64::consts::E;

/// Smallest admissible cutoff; below it the Lambert argument leaves the
/// principal-branch domain.
pub const MIN_CUTOFF: f64 = std::f64::consts::E / 2.0;

/// Principal branch of the Lambert W function on `[-1/e, inf)`.
///
/// Halley iteration from a series/log initial guess; the returned `w`
/// satisfies `w * exp(w) = x` with residual below `1e-12`.
pub fn lambert_w0(x: f64) -> Result<f64, Error> {
    if !x.is_finite() {
        return Err(Error::Numeric { op: "lambert_w0", detail: format!("input {x}") });
    }
    if x < -INV_E - 1e-12 {
        return Err(Error::Domain(format!("lambert_w0: {x} < -1/e")));
    }
    if x <= -INV_E {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = initial_guess(x);
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - x;
        residual = f.abs();
        if residual < 1e-14 * (1.0 + x.abs()) {
            break;
        }
        // Halley step: f' = (w+1)e^w, f'' = (w+2)e^w.
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * (w + 1.0));
        let step = f / denom;
        w -= step;
        if step.abs() < 1e-16 * (1.0 + w.abs()) {
            let ew = w.exp();
            residual = (w * ew - x).abs();
            break;
        }
    }
    if residual > 1e-12 {
        return Err(Error::Numeric {
            op: "lambert_w0",
            detail: format!("no convergence at x={x}: residual {residual}"),
        });
    }
    Ok(w)
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.32 {
        // Series around the branch point -1/e.
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 1.0 {
        x * (1.0 - x)
    } else if x < 3.0 {
        (1.0 + x).ln()
    } else {
        let l = x.ln();
        l - l.ln()
    }
}

/// Derived constants of the transition score for one cutoff value.
#[derive(Debug, Clone, Copy)]
pub struct LletsParams {
    /// Cutoff `a`; larger values move the branch point toward zero and
    /// steepen the score.
    pub cutoff: f64,
    /// `W0(-1/(2a))`, in (-1, 0].
    pub lambert_w: f64,
    /// Error value where the branches meet, in (0, 1).
    pub branch_point: f64,
    /// Width of the Gaussian branch.
    pub gauss_width: f64,
}

/// Derive the score constants for cutoff `a >= e/2`.
pub fn llets_params(cutoff: f64) -> Result<LletsParams, Error> {
    if !(cutoff >= MIN_CUTOFF) {
        return Err(Error::Domain(format!(
            "llets cutoff {cutoff} below minimum e/2 = {MIN_CUTOFF}"
        )));
    }
    let w = lambert_w0(-1.0 / (2.0 * cutoff))?;
    let branch_point = (-cutoff * w.exp()).exp();
    let gauss_width = branch_point / (-2.0 * w).sqrt();
    let params = LletsParams { cutoff, lambert_w: w, branch_point, gauss_width };
    debug_assert!((-1.0..=0.0).contains(&w));
    debug_assert!(branch_point > 0.0 && branch_point < 1.0);
    debug_assert!(gauss_width > 0.0);
    Ok(params)
}

impl LletsParams {
    /// Score one error value in [0, 1].
    pub fn score(&self, eps: f64) -> f64 {
        debug_assert!(eps >= 0.0, "llets score: negative error {eps}");
        if eps > self.branch_point {
            -eps.ln() / self.cutoff
        } else {
            let s = self.gauss_width;
            (-eps * eps / (2.0 * s * s)).exp()
        }
    }

    /// Analytic derivative of [`score`](Self::score) with respect to the
    /// error.
    pub fn score_deriv(&self, eps: f64) -> f64 {
        if eps > self.branch_point {
            -1.0 / (self.cutoff * eps)
        } else {
            let s2 = self.gauss_width * self.gauss_width;
            -(eps / s2) * (-eps * eps / (2.0 * s2)).exp()
        }
    }
}

/// Differentiable transition score over a tensor of errors in [0, 1].
///
/// Both branches are built from autodiff ops and joined by a value-level
/// branch mask, so gradients follow whichever branch each element took.
pub fn llets_score(eps: &Tensor, params: &LletsParams) -> Tensor {
    debug_assert!(
        eps.values().iter().all(|&e| e >= 0.0),
        "llets_score: negative error input"
    );
    let mask: Vec<bool> = eps.values().iter().map(|&e| e <= params.branch_point).collect();
    let s = params.gauss_width;
    let gauss = eps.square().scale(-1.0 / (2.0 * s * s)).exp();
    let log_branch = eps.ln().scale(-1.0 / params.cutoff);
    Tensor::select(&mask, &gauss, &log_branch)
}
