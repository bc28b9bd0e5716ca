//! Retinex decomposition with adaptive illumination correction.
//!
//! The illumination `L_hat` is a multi-scale edge-preserving smoothing of the
//! max-channel luminance `L`. It is gamma corrected with a per-pixel exponent
//! driven by the local mean brightness, the reflection `L / (L_hat + tau)` is
//! denoised, and the two are multiplied back together. The same chain runs on
//! the photographic negative to recover over-exposed regions.

use crate::edge::edge_aware_gradient;
use crate::error::{Error, Result};
use crate::guided::{filter_plane, gdwgif, FilterParams};
use crate::image::{invert, max_channel, ColorImage, ImagePlane};
use crate::par;
use crate::stats::box_mean;

/// Floor applied to the illumination before a possibly negative power.
pub const ILLUMINATION_FLOOR: f64 = 1e-6;

/// One smoothing scale: radius multiplier of the base window and blend weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub factor: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionParams {
    /// Gamma adjustment factor.
    pub alpha: f64,
    /// Regularizer in the reflection denominator.
    pub tau_r: f64,
    /// Radius of the local mean that drives the gamma exponent.
    pub mu_radius: usize,
    pub scales: [Scale; 3],
}

impl Default for CorrectionParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            tau_r: 1e-3,
            mu_radius: 7,
            scales: [
                Scale {
                    factor: 1,
                    weight: 0.5,
                },
                Scale {
                    factor: 2,
                    weight: 0.3,
                },
                Scale {
                    factor: 4,
                    weight: 0.2,
                },
            ],
        }
    }
}

impl CorrectionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.to_owned(),
            })
        };
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be a positive number");
        }
        if !(self.tau_r > 0.0 && self.tau_r.is_finite()) {
            return bad("tau-r", "must be a positive number");
        }
        if self.mu_radius < 1 {
            return bad("mu-radius", "must be at least 1");
        }
        if self.scales.iter().any(|s| s.factor < 1) {
            return bad("scales", "radius factors must be at least 1");
        }
        if self
            .scales
            .iter()
            .any(|s| !(s.weight >= 0.0 && s.weight.is_finite()))
        {
            return bad("scale-weights", "weights must be non-negative");
        }
        let total: f64 = self.scales.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("scale-weights", "weights must sum to 1");
        }
        Ok(())
    }
}

/// Illumination estimates of the image and of its negative.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationPair {
    pub pos: ImagePlane,
    pub neg: ImagePlane,
}

/// Initial luminance of the image and of its negative: per-pixel channel
/// maxima of `q` and of `1 - q`. For a grayscale image these are `q` and
/// `1 - q`.
pub fn luminance_pair(img: &ColorImage) -> (ImagePlane, ImagePlane) {
    (max_channel(img), max_channel(&invert(img)))
}

/// Weighted sum of self-guided filterings at the configured radii, followed
/// by one stronger pass at the base radius to remove residual texture.
pub fn estimate_illumination(
    l: &ImagePlane,
    filter: &FilterParams,
    corr: &CorrectionParams,
) -> ImagePlane {
    let mut acc = ImagePlane::filled(l.width(), l.height(), 0.0);
    for s in &corr.scales {
        let z = filter_plane(l, &filter.with_xi(filter.xi * s.factor));
        acc = acc.zip_map(&z, |a, v| a + s.weight * v);
    }
    filter_plane(&acc, &filter.with_lambda(2.0 * filter.lambda)).clamp01()
}

pub fn dual_illumination(
    img: &ColorImage,
    filter: &FilterParams,
    corr: &CorrectionParams,
) -> IlluminationPair {
    let (l, l_inv) = luminance_pair(img);
    let (pos, neg) = par::join(
        || estimate_illumination(&l, filter, corr),
        || estimate_illumination(&l_inv, filter, corr),
    );
    IlluminationPair { pos, neg }
}

/// `gamma = (alpha + mu)^(2 mu - 1)` with `mu` the local mean of `lhat`.
pub fn gamma_field(lhat: &ImagePlane, alpha: f64, mu_radius: usize) -> ImagePlane {
    box_mean(lhat, mu_radius).map(|mu| (alpha + mu).powf(2.0 * mu - 1.0))
}

/// `lhat^gamma` pixel-wise with the adaptive exponent of [`gamma_field`].
pub fn correct_illumination(lhat: &ImagePlane, alpha: f64, mu_radius: usize) -> ImagePlane {
    let gamma = gamma_field(lhat, alpha, mu_radius);
    lhat.zip_map(&gamma, |l, g| l.max(ILLUMINATION_FLOOR).powf(g).min(1.0))
}

/// `L / (L_hat + tau)` before clamping.
pub fn reflection_unclamped(l: &ImagePlane, lhat: &ImagePlane, tau_r: f64) -> ImagePlane {
    l.zip_map(lhat, |l, lh| l / (lh + tau_r))
}

/// `L / (L_hat + tau)` clamped to `[0, 1]`.
pub fn extract_reflection(l: &ImagePlane, lhat: &ImagePlane, tau_r: f64) -> ImagePlane {
    l.zip_map(lhat, |l, lh| (l / (lh + tau_r)).clamp(0.0, 1.0))
}

/// Self-guided filtering of the reflection whose gradient constraint comes
/// from the recomposed image `lhat_corrected * r` rather than from `r`.
pub fn denoise_reflection(
    r: &ImagePlane,
    lhat_corrected: &ImagePlane,
    filter: &FilterParams,
) -> ImagePlane {
    let composite = lhat_corrected.zip_map(r, |l, r| l * r);
    let gprime = edge_aware_gradient(&composite, filter.xi, filter.threshold);
    gdwgif(r, r, &gprime, filter)
}

/// Every intermediate of one channel run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLayers {
    pub luminance: ImagePlane,
    pub illumination: ImagePlane,
    pub corrected: ImagePlane,
    pub reflection: ImagePlane,
    pub denoised: ImagePlane,
    /// `corrected * denoised`.
    pub recomposed: ImagePlane,
}

pub fn run_channel(
    l: &ImagePlane,
    filter: &FilterParams,
    corr: &CorrectionParams,
) -> ChannelLayers {
    let illumination = estimate_illumination(l, filter, corr);
    let corrected = correct_illumination(&illumination, corr.alpha, corr.mu_radius);
    let reflection = extract_reflection(l, &illumination, corr.tau_r);
    let denoised = denoise_reflection(&reflection, &corrected, filter);
    let recomposed = corrected.zip_map(&denoised, |a, b| (a * b).clamp(0.0, 1.0));
    ChannelLayers {
        luminance: l.clone(),
        illumination,
        corrected,
        reflection,
        denoised,
        recomposed,
    }
}

/// Results of the positive and negative channel runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedChannels {
    pub pos: ChannelLayers,
    pub neg: ChannelLayers,
    /// Positive-channel recomposition; lifts dark regions.
    pub qf: ImagePlane,
    /// Negative-channel recomposition inverted back to positive orientation;
    /// restores contrast in bright regions.
    pub qr: ImagePlane,
}

pub fn compose_channels(
    img: &ColorImage,
    filter: &FilterParams,
    corr: &CorrectionParams,
) -> ComposedChannels {
    let (l, l_inv) = luminance_pair(img);
    let (pos, neg) = par::join(
        || run_channel(&l, filter, corr),
        || run_channel(&l_inv, filter, corr),
    );
    let qf = pos.recomposed.clone();
    let qr = invert(&neg.recomposed);
    ComposedChannels { pos, neg, qf, qr }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::compute_gradients;
    use crate::testutil::{noisy, random_plane, step};
    use proptest::prelude::*;

    fn small_filter() -> FilterParams {
        FilterParams::default().with_xi(2)
    }

    fn max_diff(a: &ImagePlane, b: &ImagePlane) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn default_params_are_valid() {
        assert!(CorrectionParams::default().validate().is_ok());
        let mut p = CorrectionParams::default();
        p.scales[0].weight = 0.6;
        assert!(p.validate().is_err());
        let p = CorrectionParams {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn constant_illumination_is_a_fixpoint() {
        for c in [0.0, 0.3, 0.5, 1.0] {
            let l = ImagePlane::filled(24, 20, c);
            let lhat = estimate_illumination(&l, &small_filter(), &CorrectionParams::default());
            assert!(max_diff(&lhat, &l) < 1e-9);
        }
    }

    #[test]
    fn illumination_keeps_step_and_smooths_flats() {
        let clean = step(48, 32, 24, 0.2, 0.7);
        let l = noisy(&clean, 0.02, 3);
        let lhat = estimate_illumination(&l, &small_filter(), &CorrectionParams::default());
        let gl = compute_gradients(&lhat);
        let mut hits = 0;
        for y in 0..32 {
            let row: Vec<f64> = (0..48).map(|x| gl.gx.get(x, y).abs()).collect();
            let arg = (0..48).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            if (23..=24).contains(&arg) {
                hits += 1;
            }
        }
        assert!(hits >= 30, "{hits}");
        let flat = |p: &ImagePlane| {
            let v: Vec<f64> = (4..28)
                .flat_map(|y| (2..16).map(move |x| (x, y)))
                .map(|(x, y)| p.get(x, y))
                .collect();
            crate::stats::naive::mean_var(&v).1
        };
        assert!(flat(&lhat) < flat(&l));
    }

    #[test]
    fn dual_illumination_endpoints() {
        let corr = CorrectionParams::default();
        let gray = ColorImage::from_gray(ImagePlane::filled(16, 16, 0.5));
        let p = dual_illumination(&gray, &small_filter(), &corr);
        assert!(p
            .pos
            .data()
            .iter()
            .chain(p.neg.data())
            .all(|&v| (v - 0.5).abs() < 1e-12));
        let black = ColorImage::from_gray(ImagePlane::filled(16, 16, 0.0));
        let p = dual_illumination(&black, &small_filter(), &corr);
        assert!(p.pos.data().iter().all(|&v| v.abs() < 1e-12));
        assert!(p.neg.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn negative_is_estimated_not_mirrored() {
        let img = ColorImage::new(
            random_plane(24, 24, 1),
            random_plane(24, 24, 2),
            random_plane(24, 24, 3),
        )
        .unwrap();
        let p = dual_illumination(&img, &small_filter(), &CorrectionParams::default());
        let mirrored = invert(&p.pos);
        assert!(max_diff(&mirrored, &p.neg) > 1e-3);
        let (_, l_inv) = luminance_pair(&img);
        let direct = estimate_illumination(&l_inv, &small_filter(), &CorrectionParams::default());
        assert_eq!(direct, p.neg);
    }

    #[test]
    fn gamma_examples() {
        let mid = ImagePlane::filled(9, 9, 0.5);
        assert_eq!(correct_illumination(&mid, 2.0, 3), mid);

        let mut bright = ImagePlane::filled(31, 31, 1.0);
        bright = ImagePlane::from_fn(31, 31, |x, y| {
            if (x, y) == (15, 15) {
                0.8
            } else {
                bright.get(x, y)
            }
        });
        // local mean at the centre is slightly below one; check the exponent there
        let g = gamma_field(&bright, 2.0, 7);
        let mu: f64 = (224.0 + 0.8) / 225.0;
        assert!((g.get(15, 15) - (2.0 + mu).powf(2.0 * mu - 1.0)).abs() < 1e-12);
        let out = correct_illumination(&bright, 2.0, 7);
        assert!((out.get(15, 15) - 0.8f64.powf(g.get(15, 15))).abs() < 1e-12);
        assert!((0.8f64.powf(3.0) - 0.512).abs() < 1e-12);

        let dark = ImagePlane::from_fn(31, 31, |x, y| if (x, y) == (15, 15) { 0.25 } else { 0.0 });
        let g = gamma_field(&dark, 2.0, 7);
        let mu: f64 = 0.25 / 225.0;
        assert!((g.get(15, 15) - (2.0 + mu).powf(2.0 * mu - 1.0)).abs() < 1e-12);
        // far from the bright pixel the field is exactly the dark-limit exponent
        assert_eq!(g.get(0, 0), 0.5);
        assert!((0.25f64.powf(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_double_loop() {
        let l = random_plane(16, 16, 9);
        let out = correct_illumination(&l, 2.0, 3);
        let mu = crate::stats::naive::box_mean(&l, 3);
        for y in 0..16 {
            for x in 0..16 {
                let m = mu.get(x, y);
                let want = l
                    .get(x, y)
                    .max(ILLUMINATION_FLOOR)
                    .powf((2.0 + m).powf(2.0 * m - 1.0));
                assert!((out.get(x, y) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reflection_examples() {
        let p = |v| ImagePlane::filled(2, 2, v);
        let r = extract_reflection(&p(0.4), &p(0.4), 1e-3);
        assert!((r.get(0, 0) - 0.4 / 0.401).abs() < 1e-15);
        assert!((r.get(0, 0) - 0.99751).abs() < 1e-5);
        let r = extract_reflection(&p(0.0), &p(0.3), 1e-3);
        assert!(r.data().iter().all(|&v| v == 0.0));
        let r = extract_reflection(&p(0.4), &p(0.5), 1e-3);
        assert!((r.get(0, 0) - 0.79840).abs() < 1e-5);
    }

    #[test]
    fn denoise_reflection_examples() {
        let r = ImagePlane::filled(20, 20, 0.7);
        let l = random_plane(20, 20, 2);
        assert!(max_diff(&denoise_reflection(&r, &l, &small_filter()), &r) < 1e-9);

        let clean = step(40, 24, 20, 0.3, 0.8);
        let r = noisy(&clean, 0.02, 5);
        let lhat = ImagePlane::filled(40, 24, 0.6);
        let out = denoise_reflection(&r, &lhat, &small_filter());
        let flat_var = |p: &ImagePlane| {
            let v: Vec<f64> = (0..24)
                .flat_map(|y| (2..14).map(move |x| (x, y)))
                .map(|(x, y)| p.get(x, y))
                .collect();
            crate::stats::naive::mean_var(&v).1
        };
        assert!(flat_var(&out) < flat_var(&r));
        let g = compute_gradients(&out);
        let arg = (0..40)
            .max_by(|&a, &b| {
                let s = |x| (0..24).map(|y| g.gx.get(x, y).abs()).sum::<f64>();
                s(a).total_cmp(&s(b))
            })
            .unwrap();
        assert!((19..=20).contains(&arg));
    }

    #[test]
    fn compose_examples() {
        let corr = CorrectionParams::default();
        let mid = ColorImage::from_gray(ImagePlane::filled(16, 16, 0.5));
        let c = compose_channels(&mid, &small_filter(), &corr);
        let want = 0.5 * (0.5 / 0.501);
        assert!(c.qf.data().iter().all(|&v| (v - want).abs() < 1e-12));
        assert!(c
            .qr
            .data()
            .iter()
            .all(|&v| (v - (1.0 - want)).abs() < 1e-12));

        let black = ColorImage::from_gray(ImagePlane::filled(16, 16, 0.0));
        let c = compose_channels(&black, &small_filter(), &corr);
        assert!(c.qf.data().iter().all(|&v| v == 0.0));

        // half dark, half bright
        let card = ColorImage::from_gray(step(32, 16, 16, 0.1, 0.85));
        let c = compose_channels(&card, &small_filter(), &corr);
        let half_mean = |p: &ImagePlane, lo: usize, hi: usize| {
            (0..16)
                .flat_map(|y| (lo..hi).map(move |x| (x, y)))
                .map(|(x, y)| p.get(x, y))
                .sum::<f64>()
                / (16 * (hi - lo)) as f64
        };
        let lift_f = half_mean(&c.qf, 0, 12) - 0.1;
        let lift_r = half_mean(&c.qr, 0, 12) - 0.1;
        assert!(lift_f > lift_r, "{lift_f} vs {lift_r}");
        // the negative branch darkens the bright half, pulling it back from saturation
        assert!(half_mean(&c.qr, 20, 32) < half_mean(&c.qf, 20, 32));
    }

    #[test]
    fn decomposition_consistency() {
        let l = random_plane(16, 16, 4);
        let lhat = random_plane(16, 16, 5);
        let r = reflection_unclamped(&l, &lhat, 1e-3);
        for i in 0..l.len() {
            let back = r.data()[i] * (lhat.data()[i] + 1e-3);
            assert!((back - l.data()[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn dual_symmetry_on_dyadic_input() {
        let img =
            ColorImage::from_gray(random_plane(16, 16, 8).map(|v| (v * 256.0).floor() / 256.0));
        let neg = invert(&img);
        let a = dual_illumination(&img, &small_filter(), &CorrectionParams::default());
        let b = dual_illumination(&neg, &small_filter(), &CorrectionParams::default());
        assert_eq!(a.pos, b.neg);
        assert_eq!(a.neg, b.pos);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gamma_within_bounds(seed in 0u64..1000) {
            let g = gamma_field(&random_plane(12, 12, seed), 2.0, 2);
            prop_assert!(g.data().iter().all(|&v| (0.5..=3.0).contains(&v)));
        }

        #[test]
        fn gamma_is_monotone_for_fixed_exponent(a in 0.0f64..1.0, b in 0.0f64..1.0, g in 0.5f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lo.max(ILLUMINATION_FLOOR).powf(g) <= hi.max(ILLUMINATION_FLOOR).powf(g));
        }

        #[test]
        fn reflection_in_unit_range(seed in 0u64..1000) {
            let r = extract_reflection(&random_plane(8, 8, seed), &random_plane(8, 8, seed + 1), 1e-3);
            prop_assert!(r.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
