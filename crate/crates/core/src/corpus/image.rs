//! Square RGB face images with values in [0,1], plus PNG I/O and the
//! default center-crop + resize preprocessing hook.

use std::path::Path;

use super::CorpusError;

/// A square RGB image, row-major interleaved, values in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct FaceImage {
    size: usize,
    data: Vec<f64>,
}

impl FaceImage {
    pub fn new(size: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), size * size * 3, "image data length");
        Self { size, data }
    }

    pub fn filled(size: usize, value: f64) -> Self {
        Self { size, data: vec![value; size * size * 3] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let off = (y * self.size + x) * 3;
        [self.data[off], self.data[off + 1], self.data[off + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let off = (y * self.size + x) * 3;
        self.data[off..off + 3].copy_from_slice(&rgb);
    }

    /// Mean value per channel.
    pub fn mean_color(&self) -> [f64; 3] {
        let mut sums = [0.0f64; 3];
        for px in self.data.chunks_exact(3) {
            sums[0] += px[0];
            sums[1] += px[1];
            sums[2] += px[2];
        }
        let n = (self.size * self.size) as f64;
        [sums[0] / n, sums[1] / n, sums[2] / n]
    }

    /// Maximum absolute per-channel difference over all pixels.
    pub fn max_abs_diff(&self, other: &FaceImage) -> f64 {
        assert_eq!(self.size, other.size);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), CorpusError> {
        let mut buf = image::RgbImage::new(self.size as u32, self.size as u32);
        for y in 0..self.size {
            for x in 0..self.size {
                let p = self.pixel(x, y);
                let q = [quantize(p[0]), quantize(p[1]), quantize(p[2])];
                buf.put_pixel(x as u32, y as u32, image::Rgb(q));
            }
        }
        buf.save(path).map_err(|e| CorpusError::Encode {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Pluggable preprocessing from an arbitrary decoded RGB image to a square
/// [`FaceImage`] of the requested size. The paper's pipeline runs a face
/// detector and landmark aligner here; detector choice is orthogonal to this
/// codebase, so the default is a center crop followed by bilinear resize.
pub trait Preprocessor {
    fn prepare(&self, rgb: &image::RgbImage, target: usize) -> FaceImage;
}

/// Center-crop to a square, then bilinear-resize to the target size.
#[derive(Clone, Copy, Debug, Default)]
pub struct CenterCropResize;

impl Preprocessor for CenterCropResize {
    fn prepare(&self, rgb: &image::RgbImage, target: usize) -> FaceImage {
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let side = w.min(h);
        let x0 = (w - side) / 2;
        let y0 = (h - side) / 2;
        let mut square = vec![0.0f64; side * side * 3];
        for y in 0..side {
            for x in 0..side {
                let p = rgb.get_pixel((x0 + x) as u32, (y0 + y) as u32);
                let off = (y * side + x) * 3;
                square[off] = p[0] as f64 / 255.0;
                square[off + 1] = p[1] as f64 / 255.0;
                square[off + 2] = p[2] as f64 / 255.0;
            }
        }
        let img = FaceImage::new(side, square);
        if side == target {
            img
        } else {
            resize_bilinear(&img, target)
        }
    }
}

pub fn load_png(path: &Path, target: usize, pre: &dyn Preprocessor) -> Result<FaceImage, CorpusError> {
    let img = image::open(path).map_err(|e| CorpusError::Decode {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(pre.prepare(&img.to_rgb8(), target))
}

/// Bilinear resample with clamp-to-edge, pixel centers at half-integers.
pub fn resize_bilinear(src: &FaceImage, target: usize) -> FaceImage {
    let n = src.size();
    let scale = n as f64 / target as f64;
    let mut out = vec![0.0f64; target * target * 3];
    for y in 0..target {
        let fy = (y as f64 + 0.5) * scale - 0.5;
        let y0 = fy.floor();
        let wy = fy - y0;
        let yi0 = (y0 as isize).clamp(0, n as isize - 1) as usize;
        let yi1 = (y0 as isize + 1).clamp(0, n as isize - 1) as usize;
        for x in 0..target {
            let fx = (x as f64 + 0.5) * scale - 0.5;
            let x0 = fx.floor();
            let wx = fx - x0;
            let xi0 = (x0 as isize).clamp(0, n as isize - 1) as usize;
            let xi1 = (x0 as isize + 1).clamp(0, n as isize - 1) as usize;
            let p00 = src.pixel(xi0, yi0);
            let p10 = src.pixel(xi1, yi0);
            let p01 = src.pixel(xi0, yi1);
            let p11 = src.pixel(xi1, yi1);
            let off = (y * target + x) * 3;
            for c in 0..3 {
                let top = p00[c] * (1.0 - wx) + p10[c] * wx;
                let bot = p01[c] * (1.0 - wx) + p11[c] * wx;
                out[off + c] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    FaceImage::new(target, out)
}
