//! Synthetic low-light degradation and full-reference quality metrics.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::enhance;
use crate::image::{ColorImage, ImagePlane};
use crate::io::load_image;
use crate::par;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
/// Side of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradeSpec {
    pub gamma: f64,
    pub gauss_sigma: f64,
    /// Expected photon count at full scale; `None` disables shot noise.
    pub poisson_peak: Option<f64>,
    pub seed: u64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            gamma: 2.5,
            gauss_sigma: 0.02,
            poisson_peak: Some(255.0),
            seed: 0,
        }
    }
}

impl DegradeSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParam {
                name,
                reason: reason.to_owned(),
            })
        };
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", "must be a positive number");
        }
        if !(self.gauss_sigma >= 0.0 && self.gauss_sigma.is_finite()) {
            return bad("sigma", "must be non-negative");
        }
        if let Some(p) = self.poisson_peak {
            if !(p > 0.0 && p.is_finite()) {
                return bad("peak", "must be a positive number");
            }
        }
        Ok(())
    }
}

/// Gamma darkening, shot noise and additive Gaussian noise, clamped to
/// `[0, 1]`. Each row of each channel draws from its own ChaCha stream keyed
/// by the seed, so the result does not depend on evaluation order.
pub fn degrade(img: &ColorImage, spec: &DegradeSpec) -> Result<ColorImage> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.gauss_sigma).expect("sigma validated");
    let channel = |c: u64, plane: &ImagePlane| {
        let mut out = plane.clone();
        let h = plane.height() as u64;
        out.fill_rows(|y, row| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c * h + y as u64);
            for (x, v) in row.iter_mut().enumerate() {
                let mut s = plane.get(x, y).max(0.0).powf(spec.gamma);
                if let Some(peak) = spec.poisson_peak {
                    let lambda = s * peak;
                    s = if lambda > 0.0 {
                        Poisson::new(lambda)
                            .expect("finite positive rate")
                            .sample(&mut rng)
                            / peak
                    } else {
                        0.0
                    };
                }
                if spec.gauss_sigma > 0.0 {
                    s += normal.sample(&mut rng);
                }
                *v = s.clamp(0.0, 1.0);
            }
        });
        out
    };
    if img.is_gray() {
        // a grayscale photo has one sensor value per pixel, so one noise draw
        return Ok(ColorImage::from_gray(channel(0, &img.r)));
    }
    Ok(ColorImage {
        r: channel(0, &img.r),
        g: channel(1, &img.g),
        b: channel(2, &img.b),
    })
}

fn check_dims(a: &ColorImage, b: &ColorImage) -> Result<()> {
    a.r.check_same_dims(&b.r)
}

pub fn mse(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    check_dims(a, b)?;
    let mut sum = 0.0;
    for (pa, pb) in a.channels().iter().zip(b.channels()) {
        sum += pa
            .data()
            .iter()
            .zip(pb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(sum / (3 * a.r.len()) as f64)
}

/// `10 log10(1 / MSE)` over all channels for data range 1, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    })
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filtering keeping only positions where the window fits.
fn filter_valid(x: &ImagePlane, taps: &[f64; SSIM_WINDOW]) -> ImagePlane {
    let (w, h) = x.dims();
    let (vw, vh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let rows = ImagePlane::from_fn(vw, h, |i, j| {
        let r = &x.row(j)[i..i + SSIM_WINDOW];
        r.iter().zip(taps).map(|(a, t)| a * t).sum()
    });
    ImagePlane::from_fn(vw, vh, |i, j| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * rows.get(i, j + k))
            .sum()
    })
}

/// Mean SSIM of two planes over all positions where the window fits.
pub fn ssim_plane(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.check_same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let taps = gaussian_taps();
    let mu_a = filter_valid(a, &taps);
    let mu_b = filter_valid(b, &taps);
    let aa = filter_valid(&a.map(|v| v * v), &taps);
    let bb = filter_valid(&b.map(|v| v * v), &taps);
    let ab = filter_valid(&a.zip_map(b, |x, y| x * y), &taps);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let va = aa.data()[i] - ma * ma;
        let vb = bb.data()[i] - mb * mb;
        let cov = ab.data()[i] - ma * mb;
        sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    Ok(sum / mu_a.len() as f64)
}

/// SSIM on the channel-mean luminance.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    check_dims(a, b)?;
    ssim_plane(&a.channel_mean(), &b.channel_mean())
}

/// Per-pixel channel minimum followed by a square local minimum.
pub fn dark_channel(img: &ColorImage, radius: usize) -> ImagePlane {
    let m = img.r.zip_map(&img.g, f64::min).zip_map(&img.b, f64::min);
    let r = radius as isize;
    let rows = ImagePlane::from_fn(m.width(), m.height(), |x, y| {
        (-r..=r)
            .map(|d| m.get_clamped(x as isize + d, y as isize))
            .fold(f64::INFINITY, f64::min)
    });
    ImagePlane::from_fn(m.width(), m.height(), |x, y| {
        (-r..=r)
            .map(|d| rows.get_clamped(x as isize, y as isize + d))
            .fold(f64::INFINITY, f64::min)
    })
}

/// Mean of the dark channel; lower means less haze.
pub fn dark_channel_mean(img: &ColorImage, radius: usize) -> f64 {
    dark_channel(img, radius).mean()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub degraded_psnr_db: f64,
    pub degraded_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct QualityReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub images: usize,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_degraded_psnr_db: f64,
    pub mean_degraded_ssim: f64,
}

impl QualityReport {
    fn mean_of(&self, f: impl Fn(&ReportRow) -> f64) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            images: self.rows.len(),
            mean_psnr_db: self.mean_of(|r| r.psnr_db),
            mean_ssim: self.mean_of(|r| r.ssim),
            mean_degraded_psnr_db: self.mean_of(|r| r.degraded_psnr_db),
            mean_degraded_ssim: self.mean_of(|r| r.degraded_ssim),
        }
    }

    /// Comma-separated table with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,psnr_db,ssim,degraded_psnr_db,degraded_ssim\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.name, r.psnr_db, r.ssim, r.degraded_psnr_db, r.degraded_ssim
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("plain data serializes")
    }
}

/// Degrades, enhances and scores one clean image.
pub fn evaluate_image(
    name: &str,
    clean: &ColorImage,
    spec: &DegradeSpec,
    config: &PipelineConfig,
) -> Result<ReportRow> {
    let degraded = degrade(clean, spec)?;
    let enhanced = enhance(&degraded, config)?;
    Ok(ReportRow {
        name: name.to_owned(),
        psnr_db: psnr(&enhanced, clean)?,
        ssim: ssim(&enhanced, clean)?,
        degraded_psnr_db: psnr(&degraded, clean)?,
        degraded_ssim: ssim(&degraded, clean)?,
    })
}

/// PNG and JPEG files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let read_err = |source| Error::Read {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(read_err)? {
        let path = entry.map_err(read_err)?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Runs the degrade, enhance and score loop over every image in `dir`.
pub fn evaluate_dir(
    dir: impl AsRef<Path>,
    spec: &DegradeSpec,
    config: &PipelineConfig,
) -> Result<QualityReport> {
    let paths = list_images(dir)?;
    let rows = par::map_range(paths.len(), |i| {
        let path = &paths[i];
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        evaluate_image(&name, &load_image(path)?, spec, config)
    });
    Ok(QualityReport {
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}
