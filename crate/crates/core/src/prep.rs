//! Raw scan → network input: gray-level inversion, foreground crop, and
//! aspect-preserving linear normalization onto a 64×64 canvas.

use crate::dataio::GrayImage;
use crate::error::{Error, Result};
use crate::nnkernel::Tensor;
use crate::scalar::Scalar;

/// Side length of the normalized canvas.
pub const CANVAS: usize = 64;

/// 64×64 intensities in `[0, 1]`, background 0.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage {
    pixels: Vec<f32>,
}

impl NormalizedImage {
    pub fn new(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != CANVAS * CANVAS {
            return Err(Error::InvalidImage(format!(
                "normalized image needs {} values, got {}",
                CANVAS * CANVAS,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(NormalizedImage { pixels })
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * CANVAS + x]
    }

    /// `[1, 1, 64, 64]` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_f32(&[1, 1, CANVAS, CANVAS], &self.pixels).expect("canvas-sized")
    }
}

/// Stacks images into an `[N, 1, 64, 64]` batch.
pub fn batch_tensor<T: Scalar>(images: &[&NormalizedImage]) -> Result<Tensor<T>> {
    if images.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut data = Vec::with_capacity(images.len() * CANVAS * CANVAS);
    for img in images {
        data.extend(img.pixels.iter().map(|&v| T::narrow_from(v)));
    }
    Tensor::new(&[images.len(), 1, CANVAS, CANVAS], data)
}

/// `p ↦ 255 − p`.
pub fn invert(img: &GrayImage) -> GrayImage {
    let px = img.pixels().iter().map(|&p| 255 - p).collect();
    GrayImage::new(img.width(), img.height(), px).expect("same geometry")
}

/// Tightest box containing every pixel strictly brighter than `threshold`.
pub fn crop_foreground(img: &GrayImage, threshold: u8) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) > threshold {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::EmptyForeground);
    }
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut px = Vec::with_capacity(cw * ch);
    for y in y0..=y1 {
        px.extend_from_slice(&img.pixels()[y * w + x0..=y * w + x1]);
    }
    GrayImage::new(cw, ch, px)
}

/// Short-side ratio transform `r ↦ √sin(πr/2)` for `r ∈ (0, 1]`.
pub fn aspect_map(r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::AspectOutOfRange(r));
    }
    Ok((std::f64::consts::FRAC_PI_2 * r).sin().sqrt())
}

/// Size of the glyph box on the canvas for a `w × h` crop.
pub fn target_box(w: usize, h: usize) -> Result<(usize, usize)> {
    let long = w.max(h);
    let short = w.min(h);
    let mapped = aspect_map(short as f64 / long as f64)?;
    let short_t = ((CANVAS as f64 * mapped).round() as usize).clamp(1, CANVAS);
    Ok(if w >= h {
        (CANVAS, short_t)
    } else {
        (short_t, CANVAS)
    })
}

/// Linear normalization of a cropped, inverted glyph. The long side is scaled
/// to the full canvas, the short side to `64·aspect_map(r)`; the glyph box is
/// centered (odd margins round toward the top-left) and intensities are
/// divided by 255.
pub fn normalize(img: &GrayImage) -> Result<NormalizedImage> {
    if img.pixels().iter().all(|&p| p == 0) {
        return Err(Error::EmptyForeground);
    }
    let (w, h) = (img.width(), img.height());
    let (tw, th) = target_box(w, h)?;
    let (ox, oy) = ((CANVAS - tw) / 2, (CANVAS - th) / 2);
    let sx = w as f64 / tw as f64;
    let sy = h as f64 / th as f64;
    let taps = |pos: f64, len: usize| -> (usize, usize, f64) {
        let p = pos.clamp(0.0, (len - 1) as f64);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, p - lo as f64)
    };
    let mut out = vec![0f32; CANVAS * CANVAS];
    for dy in 0..th {
        let (y0, y1, fy) = taps((dy as f64 + 0.5) * sy - 0.5, h);
        for dx in 0..tw {
            let (x0, x1, fx) = taps((dx as f64 + 0.5) * sx - 0.5, w);
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            let v = (top * (1.0 - fy) + bottom * fy) / 255.0;
            out[(oy + dy) * CANVAS + ox + dx] = v.clamp(0.0, 1.0) as f32;
        }
    }
    NormalizedImage::new(out)
}

/// invert → crop_foreground → normalize.
pub fn preprocess(img: &GrayImage, threshold: u8) -> Result<NormalizedImage> {
    normalize(&crop_foreground(&invert(img), threshold)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_endpoints_and_example() {
        let img = GrayImage::new(2, 2, vec![10, 200, 255, 0]).unwrap();
        assert_eq!(invert(&img).pixels(), &[245, 55, 0, 255]);
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn crop_single_pixel() {
        let mut img = GrayImage::filled(5, 5, 0).unwrap();
        img.set(2, 3, 9);
        let c = crop_foreground(&img, 0).unwrap();
        assert_eq!((c.width(), c.height()), (1, 1));
        assert_eq!(c.pixels(), &[9]);
    }

    #[test]
    fn crop_band() {
        let mut img = GrayImage::filled(4, 4, 0).unwrap();
        for y in 1..=2 {
            for x in 0..4 {
                img.set(x, y, 100);
            }
        }
        let c = crop_foreground(&img, 0).unwrap();
        assert_eq!((c.width(), c.height()), (4, 2));
    }

    #[test]
    fn crop_empty_is_error() {
        let img = GrayImage::filled(3, 3, 0).unwrap();
        assert!(matches!(
            crop_foreground(&img, 0),
            Err(Error::EmptyForeground)
        ));
        let mut faint = GrayImage::filled(3, 3, 0).unwrap();
        faint.set(1, 1, 5);
        assert!(matches!(
            crop_foreground(&faint, 5),
            Err(Error::EmptyForeground)
        ));
        assert!(crop_foreground(&faint, 4).is_ok());
    }

    #[test]
    fn aspect_map_values() {
        assert_eq!(aspect_map(1.0).unwrap(), 1.0);
        assert!((aspect_map(0.5).unwrap() - 0.840_896).abs() < 1e-4);
        assert!(aspect_map(0.3).unwrap() < aspect_map(0.6).unwrap());
        assert!(aspect_map(0.0).is_err());
        assert!(aspect_map(1.01).is_err());
        assert!(aspect_map(-0.5).is_err());
    }

    #[test]
    fn full_canvas_is_identity() {
        let px: Vec<u8> = (0..CANVAS * CANVAS).map(|i| (i % 251) as u8 + 1).collect();
        let img = GrayImage::new(CANVAS, CANVAS, px.clone()).unwrap();
        let n = normalize(&img).unwrap();
        for (a, b) in n.pixels().iter().zip(&px) {
            assert_eq!(*a, (*b as f64 / 255.0) as f32);
        }
    }

    #[test]
    fn half_aspect_box_is_centered() {
        let img = GrayImage::filled(32, 64, 200).unwrap();
        assert_eq!(target_box(32, 64).unwrap(), (54, 64));
        let n = normalize(&img).unwrap();
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                let inside = (5..59).contains(&x);
                assert_eq!(n.get(x, y) > 0.0, inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn single_pixel_crop_fills_canvas() {
        let img = GrayImage::new(1, 1, vec![51]).unwrap();
        let n = normalize(&img).unwrap();
        assert!(n.pixels().iter().all(|&v| v == (51.0f64 / 255.0) as f32));
    }

    #[test]
    fn white_page_is_empty_foreground() {
        let img = GrayImage::filled(20, 30, 255).unwrap();
        assert!(matches!(preprocess(&img, 0), Err(Error::EmptyForeground)));
    }

    #[test]
    fn dark_square_centered() {
        let mut img = GrayImage::filled(40, 40, 255).unwrap();
        for y in 5..25 {
            for x in 12..32 {
                img.set(x, y, 0);
            }
        }
        let n = preprocess(&img, 0).unwrap();
        let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
        for y in 0..CANVAS {
            for x in 0..CANVAS {
                let v = n.get(x, y) as f64;
                sx += v * x as f64;
                sy += v * y as f64;
                m += v;
            }
        }
        assert!((sx / m - 31.5).abs() <= 1.0 && (sy / m - 31.5).abs() <= 1.0);
        assert!(n.pixels().iter().all(|&v| v == 1.0));
    }
}
