//! Sliding-window statistics over square windows with replicate padding.
//!
//! Window sums come from summed-area tables, so the cost per pixel does not
//! depend on the radius. Samples are first quantized to fixed point (at least
//! 2^-40 of the plane's largest magnitude) and accumulated in `i128`, which
//! makes every window sum exact. Variances are then formed from exact integer
//! moments: a flat window has variance exactly zero and the result never goes
//! negative, regardless of how large the rest of the image is.

use crate::image::ImagePlane;
use crate::par;

/// Mean and population variance over the `(2r+1)^2` window around each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStats {
    pub mean: ImagePlane,
    pub variance: ImagePlane,
    pub radius: usize,
}

/// Windowed first and second moments of a guide/input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoments {
    pub mean_guide: ImagePlane,
    pub mean_input: ImagePlane,
    pub var_guide: ImagePlane,
    pub cov: ImagePlane,
}

const MAX_BITS: i32 = 40;

/// Fixed-point scale (a power of two) for values bounded by `max_abs` summed
/// over windows of `n` samples.
fn fixed_point_scale(max_abs: f64, n: usize) -> f64 {
    let log_n = (n as f64).log2().ceil() as i32;
    let bits = MAX_BITS.min(63 - log_n);
    assert!(bits > 8, "window of {n} samples is too large");
    if max_abs == 0.0 {
        return 1.0;
    }
    let exp = max_abs.log2().ceil() as i32;
    2f64.powi(bits - exp)
}

fn max_abs(x: &ImagePlane) -> f64 {
    x.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Replicate-padded plane, quantized.
fn padded(x: &ImagePlane, radius: usize, scale: f64) -> Vec<i64> {
    let (w, h) = x.dims();
    let pw = w + 2 * radius;
    let ph = h + 2 * radius;
    let r = radius as isize;
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let y = py as isize - r;
        for px in 0..pw {
            let v = x.get_clamped(px as isize - r, y);
            out.push((v * scale).round() as i64);
        }
    }
    out
}

/// Summed-area table with one extra leading row and column of zeros.
/// Uses wrapping arithmetic: partial sums may overflow, window sums never do.
struct Integral {
    stride: usize,
    table: Vec<i128>,
}

impl Integral {
    fn build(pw: usize, ph: usize, value: impl Fn(usize) -> i128) -> Self {
        let stride = pw + 1;
        let mut table = vec![0i128; stride * (ph + 1)];
        for y in 0..ph {
            let mut run = 0i128;
            let (prev, cur) = table.split_at_mut((y + 1) * stride);
            let prev = &prev[y * stride..];
            let cur = &mut cur[..stride];
            for x in 0..pw {
                run = run.wrapping_add(value(y * pw + x));
                cur[x + 1] = prev[x + 1].wrapping_add(run);
            }
        }
        Self { stride, table }
    }

    /// Sum over the padded-coordinate rectangle `[x0, x0+side) x [y0, y0+side)`.
    #[inline]
    fn window(&self, x0: usize, y0: usize, side: usize) -> i128 {
        let s = self.stride;
        let (x1, y1) = (x0 + side, y0 + side);
        self.table[y1 * s + x1]
            .wrapping_sub(self.table[y0 * s + x1])
            .wrapping_sub(self.table[y1 * s + x0])
            .wrapping_add(self.table[y0 * s + x0])
    }
}

struct Prepared {
    scale: f64,
    values: Vec<i64>,
}

fn prepare(x: &ImagePlane, radius: usize) -> Prepared {
    let n = (2 * radius + 1).pow(2);
    let scale = fixed_point_scale(max_abs(x), n);
    Prepared {
        scale,
        values: padded(x, radius, scale),
    }
}

fn padded_dims(x: &ImagePlane, radius: usize) -> (usize, usize) {
    (x.width() + 2 * radius, x.height() + 2 * radius)
}

/// Evaluates `f(window_index_fn)` at every pixel, writing into a new plane.
fn per_pixel(
    width: usize,
    height: usize,
    f: impl Fn(usize, usize) -> f64 + Sync + Send,
) -> ImagePlane {
    let mut data = vec![0.0; width * height];
    par::fill_rows(&mut data, width, |y, row| {
        for (x, v) in row.iter_mut().enumerate() {
            *v = f(x, y);
        }
    });
    ImagePlane::from_vec_unchecked(width, height, data)
}

/// Box mean over the `(2r+1)^2` window with replicate padding.
pub fn box_mean(x: &ImagePlane, radius: usize) -> ImagePlane {
    let side = 2 * radius + 1;
    let n = (side * side) as f64;
    let p = prepare(x, radius);
    let (pw, ph) = padded_dims(x, radius);
    let sums = Integral::build(pw, ph, |i| p.values[i] as i128);
    let denom = n * p.scale;
    per_pixel(x.width(), x.height(), |px, py| {
        sums.window(px, py, side) as f64 / denom
    })
}

/// Local mean and population variance.
pub fn local_stats(x: &ImagePlane, radius: usize) -> LocalStats {
    let side = 2 * radius + 1;
    let n = (side * side) as i128;
    let p = prepare(x, radius);
    let (pw, ph) = padded_dims(x, radius);
    let (s1, s2) = par::join(
        || Integral::build(pw, ph, |i| p.values[i] as i128),
        || {
            Integral::build(pw, ph, |i| {
                let v = p.values[i] as i128;
                v * v
            })
        },
    );
    let nf = n as f64;
    let mean_denom = nf * p.scale;
    let var_denom = nf * nf * p.scale * p.scale;
    let mean = per_pixel(x.width(), x.height(), |px, py| {
        s1.window(px, py, side) as f64 / mean_denom
    });
    let variance = per_pixel(x.width(), x.height(), |px, py| {
        let a = s1.window(px, py, side);
        let b = s2.window(px, py, side);
        // n * sum(q^2) - (sum q)^2 >= 0 exactly (Cauchy-Schwarz on integers)
        (n * b - a * a) as f64 / var_denom
    });
    LocalStats {
        mean,
        variance,
        radius,
    }
}

/// Means of `guide` and `input`, variance of `guide`, and their covariance,
/// all over the same windows.
pub fn local_moments(guide: &ImagePlane, input: &ImagePlane, radius: usize) -> LocalMoments {
    guide.assert_same_dims(input);
    let side = 2 * radius + 1;
    let n = (side * side) as i128;
    let g = prepare(guide, radius);
    let q = prepare(input, radius);
    let (pw, ph) = padded_dims(guide, radius);
    let ((sg, sq), (sgg, sgq)) = par::join(
        || {
            (
                Integral::build(pw, ph, |i| g.values[i] as i128),
                Integral::build(pw, ph, |i| q.values[i] as i128),
            )
        },
        || {
            (
                Integral::build(pw, ph, |i| {
                    let v = g.values[i] as i128;
                    v * v
                }),
                Integral::build(pw, ph, |i| g.values[i] as i128 * q.values[i] as i128),
            )
        },
    );
    let nf = n as f64;
    let (w, h) = guide.dims();
    let mean_guide = per_pixel(w, h, |x, y| sg.window(x, y, side) as f64 / (nf * g.scale));
    let mean_input = per_pixel(w, h, |x, y| sq.window(x, y, side) as f64 / (nf * q.scale));
    let var_guide = per_pixel(w, h, |x, y| {
        let a = sg.window(x, y, side);
        (n * sgg.window(x, y, side) - a * a) as f64 / (nf * nf * g.scale * g.scale)
    });
    let cov = per_pixel(w, h, |x, y| {
        let num = n * sgq.window(x, y, side) - sg.window(x, y, side) * sq.window(x, y, side);
        num as f64 / (nf * nf * g.scale * q.scale)
    });
    LocalMoments {
        mean_guide,
        mean_input,
        var_guide,
        cov,
    }
}
