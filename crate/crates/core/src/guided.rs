//! Gradient-domain weighted guided filter.
//!
//! Like the classic guided filter, the output is a local linear transform of a
//! guide image, `z = a * I + b`, fitted independently in every square window.
//! Two edge-aware maps built from the edge-aware gradient `g'` change the fit:
//!
//! * a weight `T(k)` that scales the regularization down (`lambda / T(k)`) at
//!   edges and up in flat regions, and
//! * a shift `psi(k)` in `(0, 1)` that pulls `a` towards 1 at edges and towards
//!   0 in flat regions instead of always towards 0.
//!
//! Per window the cost is
//!
//! ```text
//! E(a, b) = sum_i [ (a I_i + b - q_i)^2 + c (a - psi)^2 ],  c = lambda / T(k)
//! ```
//!
//! Setting `dE/db = 0` gives `b = mean(q) - a mean(I)`. Substituting into
//! `dE/da = 0` and dividing by the window size:
//!
//! ```text
//! a (var(I) + c) = cov(I, q) + c psi
//! ```
//!
//! Every pixel is covered by many windows, so the final coefficients are the
//! window averages of `a` and `b`. An adaptive oriented-window pass then
//! smooths eligible edge pixels of the result.

use crate::edge::{compute_gradients, edge_aware_gradient, EdgeAwareGradient};
use crate::error::{Error, Result};
use crate::image::{ColorImage, ImagePlane};
use crate::stats::{box_mean, local_moments, local_stats};
use crate::window::{oriented_filter_with, WindowKernel};

/// Radius of the gradient coefficient-of-variation term.
pub const GRADIENT_CV_RADIUS: usize = 3;
/// Guard on the guide variance in the coefficient solve.
const VAR_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Regularization strength.
    pub lambda: f64,
    /// Window radius.
    pub xi: usize,
    /// Adaptive-window size coefficient.
    pub r: usize,
    /// Weak/strong edge threshold on the variance deviation.
    pub threshold: f64,
    /// `(0.001 * dynamic range)^2`; the range is 1 for normalized input.
    pub epsilon: f64,
    pub kernel: WindowKernel,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            xi: 7,
            r: 5,
            threshold: 0.2,
            epsilon: 1e-6,
            kernel: WindowKernel::Gaussian,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.to_owned(),
            })
        };
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be a positive number");
        }
        if self.xi < 1 {
            return bad("xi", "must be at least 1");
        }
        if self.r < 1 {
            return bad("r", "must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad("threshold", "must be a positive number");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be a positive number");
        }
        Ok(())
    }

    pub fn with_xi(self, xi: usize) -> Self {
        Self { xi, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }
}

/// Edge-aware regularization maps.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightMaps {
    pub chi: ImagePlane,
    pub weight: ImagePlane,
    pub psi: ImagePlane,
}

impl EdgeWeightMaps {
    /// `weight = 1`, `psi = 0`: reduces the filter to the classic guided filter.
    pub fn neutral(width: usize, height: usize) -> Self {
        Self {
            chi: ImagePlane::filled(width, height, 0.0),
            weight: ImagePlane::filled(width, height, 1.0),
            psi: ImagePlane::filled(width, height, 0.0),
        }
    }
}

/// Per-window coefficients and their window averages.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficients {
    pub a: ImagePlane,
    pub b: ImagePlane,
    pub a_mean: ImagePlane,
    pub b_mean: ImagePlane,
}

impl LinearCoefficients {
    /// `a_mean * guide + b_mean`.
    pub fn apply(&self, guide: &ImagePlane) -> ImagePlane {
        let ag = self.a_mean.zip_map(guide, |a, i| a * i);
        ag.zip_map(&self.b_mean, |x, b| x + b)
    }
}

/// Local variance normalized by its global mean; a plane with no variance
/// anywhere maps to all ones.
fn variance_ratio(var: &ImagePlane) -> ImagePlane {
    let m = var.mean();
    if m == 0.0 {
        ImagePlane::filled(var.width(), var.height(), 1.0)
    } else {
        let m = m.max(1e-12);
        var.map(|v| v / m)
    }
}

/// `chi = phi_3 * phi_xi * g'`, where `phi_3` is the normalized local variance
/// of `g'` at radius 3 and `phi_xi` that of the guide at radius `xi`.
pub fn chi_map(gprime: &EdgeAwareGradient, guide: &ImagePlane, xi: usize) -> ImagePlane {
    let g = &gprime.gprime;
    guide.assert_same_dims(g);
    let phi3 = variance_ratio(&local_stats(g, GRADIENT_CV_RADIUS).variance);
    let phi_xi = variance_ratio(&local_stats(guide, xi).variance);
    let p = phi3.zip_map(&phi_xi, |a, b| a * b);
    p.zip_map(g, |a, b| a * b)
}

/// `T(k) = (1/N) sum_p (chi(k) + eps) / (chi(p) + eps)`: above 1 at edges,
/// below 1 in flat regions.
pub fn edge_aware_weight(chi: &ImagePlane, epsilon: f64) -> ImagePlane {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let inv_mean = chi.data().iter().map(|&c| 1.0 / (c + epsilon)).sum::<f64>() / chi.len() as f64;
    chi.map(|c| (c + epsilon) * inv_mean)
}

/// `psi = 1 - 1 / (1 + exp(eta (chi - mean)))` with
/// `eta = 4 / (mean - min)`; a constant `chi` gives 0.5 everywhere.
pub fn psi_map(chi: &ImagePlane) -> ImagePlane {
    let (lo, hi) = (chi.min(), chi.max());
    if lo == hi {
        return ImagePlane::filled(chi.width(), chi.height(), 0.5);
    }
    let mu = chi.mean();
    let spread = mu - lo;
    if spread <= 0.0 {
        // rounding put the mean at the minimum; the sigmoid is a step at mu
        return chi.map(|c| if c > mu { 1.0 } else { 0.5 });
    }
    let eta = 4.0 / spread;
    chi.map(|c| 1.0 - 1.0 / (1.0 + (eta * (c - mu)).exp()))
}

pub fn edge_weight_maps(
    gprime: &EdgeAwareGradient,
    guide: &ImagePlane,
    params: &FilterParams,
) -> EdgeWeightMaps {
    let chi = chi_map(gprime, guide, params.xi);
    let weight = edge_aware_weight(&chi, params.epsilon);
    let psi = psi_map(&chi);
    EdgeWeightMaps { chi, weight, psi }
}

/// Closed-form coefficients for every window of radius `xi`.
pub fn linear_coefficients(
    q: &ImagePlane,
    guide: &ImagePlane,
    maps: &EdgeWeightMaps,
    lambda: f64,
    xi: usize,
) -> LinearCoefficients {
    q.assert_same_dims(guide);
    let m = local_moments(guide, q, xi);
    let w = guide.width();
    let mut a = ImagePlane::filled(w, guide.height(), 0.0);
    a.fill_rows(|y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            let c = lambda / maps.weight.get(x, y);
            let psi = maps.psi.get(x, y);
            *v = (m.cov.get(x, y) + c * psi) / (m.var_guide.get(x, y) + c + VAR_GUARD);
        }
    });
    let ai = a.zip_map(&m.mean_guide, |a, i| a * i);
    let b = m.mean_input.zip_map(&ai, |mq, ai| mq - ai);
    let a_mean = box_mean(&a, xi);
    let b_mean = box_mean(&b, xi);
    LinearCoefficients {
        a,
        b,
        a_mean,
        b_mean,
    }
}

/// Classic guided filter with regularization `lambda`.
pub fn guided_filter(q: &ImagePlane, guide: &ImagePlane, lambda: f64, xi: usize) -> ImagePlane {
    let maps = EdgeWeightMaps::neutral(q.width(), q.height());
    linear_coefficients(q, guide, &maps, lambda, xi).apply(guide)
}

/// Full filter with caller-supplied maps, followed by the adaptive-window
/// pass over pixels where `gprime` is non-zero.
pub fn gdwgif_with_maps(
    q: &ImagePlane,
    guide: &ImagePlane,
    gprime: &EdgeAwareGradient,
    maps: &EdgeWeightMaps,
    params: &FilterParams,
) -> ImagePlane {
    let z = linear_coefficients(q, guide, maps, params.lambda, params.xi).apply(guide);
    if gprime.gprime.data().iter().all(|&v| v == 0.0) {
        return z;
    }
    let grad = compute_gradients(guide);
    oriented_filter_with(&z, &grad, gprime, params.r, params.kernel)
}

/// Filters `q` with guide `guide` and edge-aware gradient `gprime`.
pub fn gdwgif(
    q: &ImagePlane,
    guide: &ImagePlane,
    gprime: &EdgeAwareGradient,
    params: &FilterParams,
) -> ImagePlane {
    let maps = edge_weight_maps(gprime, guide, params);
    gdwgif_with_maps(q, guide, gprime, &maps, params)
}

/// Self-guided filtering: the guide is `q` and the edge-aware gradient is
/// derived from `q` itself.
pub fn filter_plane(q: &ImagePlane, params: &FilterParams) -> ImagePlane {
    let gprime = edge_aware_gradient(q, params.xi, params.threshold);
    gdwgif(q, q, &gprime, params)
}

/// Validates `params` and self-guided filters each channel of `img`. A gray
/// image is filtered once and the result shared.
pub fn filter_color(img: &ColorImage, params: &FilterParams) -> Result<ColorImage> {
    params.validate()?;
    if img.is_gray() {
        return Ok(ColorImage::from_gray(filter_plane(&img.r, params)));
    }
    Ok(img.map_channels(|c| filter_plane(c, params)))
}
