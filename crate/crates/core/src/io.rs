//! PNG/JPEG input and PNG output.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageError, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{ColorImage, ImagePlane};

/// Output sample depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Depth {
    #[default]
    Eight,
    Sixteen,
}

impl Depth {
    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(Depth::Eight),
            16 => Ok(Depth::Sixteen),
            other => Err(Error::Depth(other)),
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            Depth::Eight => 8,
            Depth::Sixteen => 16,
        }
    }

    fn full_scale(self) -> f64 {
        match self {
            Depth::Eight => 255.0,
            Depth::Sixteen => 65535.0,
        }
    }
}

/// Loads a PNG or JPEG as normalized RGB. Grayscale files are replicated into
/// all three channels and alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    let format = image::guess_format(&bytes)
        .map_err(|e| Error::UnsupportedFormat(format!("{}: {e}", path.display())))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| match e {
        ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Decode {
            path: path.to_owned(),
            message: other.to_string(),
        },
    })?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<ColorImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension);
    }
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    if sixteen {
        let buf = img.to_rgb16();
        for (i, px) in buf.pixels().enumerate() {
            for (plane, &v) in planes.iter_mut().zip(&px.0) {
                plane[i] = v as f64 / 65535.0;
            }
        }
    } else {
        let buf = img.to_rgb8();
        for (i, px) in buf.pixels().enumerate() {
            for (plane, &v) in planes.iter_mut().zip(&px.0) {
                plane[i] = v as f64 / 255.0;
            }
        }
    }
    let [r, g, b] = planes;
    ColorImage::new(
        ImagePlane::new(w, h, r)?,
        ImagePlane::new(w, h, g)?,
        ImagePlane::new(w, h, b)?,
    )
}

fn quantize(v: f64, depth: Depth) -> u16 {
    (v.clamp(0.0, 1.0) * depth.full_scale()).round() as u16
}

/// Anything that can be written as a PNG.
pub trait Raster {
    fn to_dynamic(&self, depth: Depth) -> DynamicImage;
}

impl Raster for ImagePlane {
    fn to_dynamic(&self, depth: Depth) -> DynamicImage {
        let (w, h) = (self.width() as u32, self.height() as u32);
        match depth {
            Depth::Eight => {
                let data = self
                    .data()
                    .iter()
                    .map(|&v| quantize(v, depth) as u8)
                    .collect();
                DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).unwrap())
            }
            Depth::Sixteen => {
                let data = self.data().iter().map(|&v| quantize(v, depth)).collect();
                DynamicImage::ImageLuma16(
                    ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data).unwrap(),
                )
            }
        }
    }
}

impl Raster for ColorImage {
    fn to_dynamic(&self, depth: Depth) -> DynamicImage {
        let (w, h) = (self.width() as u32, self.height() as u32);
        let interleaved = || {
            self.r
                .data()
                .iter()
                .zip(self.g.data())
                .zip(self.b.data())
                .flat_map(|((&r, &g), &b)| [r, g, b])
        };
        match depth {
            Depth::Eight => {
                let data = interleaved().map(|v| quantize(v, depth) as u8).collect();
                DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, data).unwrap())
            }
            Depth::Sixteen => {
                let data = interleaved().map(|v| quantize(v, depth)).collect();
                DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, data).unwrap())
            }
        }
    }
}

/// Encodes `img` as PNG bytes; values are clamped to `[0, 1]` and rounded to
/// the nearest code.
pub fn encode_png(img: &impl Raster, depth: Depth) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.to_dynamic(depth)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

/// Writes `img` to `path` as PNG regardless of the file extension.
pub fn save_image(img: &impl Raster, path: impl AsRef<Path>, depth: Depth) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png(img, depth)).map_err(|source| Error::Write {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn full_scale_png_loads_as_one() {
        let dir = tmp();
        let path = dir.path().join("white.png");
        image::RgbImage::from_pixel(2, 2, Rgb([255, 255, 255]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        for c in img.channels() {
            assert!(c.data().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn eight_bit_scaling_and_gray_replication() {
        let dir = tmp();
        let path = dir.path().join("gray.png");
        image::GrayImage::from_raw(2, 1, vec![128, 7])
            .unwrap()
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.r.get(0, 0) - 128.0 / 255.0).abs() < 1e-15);
        assert!((img.r.get(0, 0) - 0.50196).abs() < 1e-5);
        assert_eq!(img.r, img.g);
        assert_eq!(img.g, img.b);
    }

    #[test]
    fn sixteen_bit_scaling() {
        let dir = tmp();
        let path = dir.path().join("g16.png");
        ImageBuffer::<Luma<u16>, _>::from_raw(1, 1, vec![65535u16])
            .unwrap()
            .save(&path)
            .unwrap();
        assert_eq!(load_image(&path).unwrap().g.get(0, 0), 1.0);
    }

    #[test]
    fn alpha_is_dropped() {
        let dir = tmp();
        let path = dir.path().join("rgba.png");
        image::RgbaImage::from_pixel(1, 1, image::Rgba([10, 20, 30, 0]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.b.get(0, 0), 30.0 / 255.0);
    }

    #[test]
    fn half_saves_as_128() {
        let dir = tmp();
        let path = dir.path().join("half.png");
        save_image(&ImagePlane::filled(3, 2, 0.5), &path, Depth::Eight).unwrap();
        let raw = image::open(&path).unwrap().to_luma8();
        assert!(raw.pixels().all(|p| p.0[0] == 128));
    }

    #[test]
    fn over_range_is_clamped() {
        let dir = tmp();
        let path = dir.path().join("hot.png");
        save_image(&ImagePlane::filled(1, 1, 1.2), &path, Depth::Eight).unwrap();
        assert_eq!(load_image(&path).unwrap().r.get(0, 0), 1.0);
    }

    #[test]
    fn sixteen_bit_round_trip_within_half_step() {
        let dir = tmp();
        let path = dir.path().join("rt.png");
        let p = ImagePlane::new(4, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        save_image(&p, &path, Depth::Sixteen).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in back.r.data().iter().zip(p.data()) {
            assert!((a - b).abs() <= 1.0 / 131070.0 + 1e-15);
        }
    }

    #[test]
    fn errors_are_classified() {
        let dir = tmp();
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(Error::Read { .. })
        ));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"definitely not an image").unwrap();
        assert!(matches!(
            load_image(&junk),
            Err(Error::UnsupportedFormat(_))
        ));
        let bmp = dir.path().join("x.bmp");
        std::fs::write(&bmp, b"BM\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(load_image(&bmp), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(
            save_image(
                &ImagePlane::filled(1, 1, 0.0),
                dir.path().join("no/such/dir.png"),
                Depth::Eight
            ),
            Err(Error::Write { .. })
        ));
    }

    #[test]
    fn depth_parsing() {
        assert_eq!(Depth::from_bits(16).unwrap(), Depth::Sixteen);
        assert!(Depth::from_bits(12).is_err());
    }
}
