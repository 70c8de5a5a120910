//! Deterministic scale/rotation/flip augmentation. All randomness derives
//! from `(seed, epoch, index)` so results are independent of worker count
//! and iteration order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::FaceImage;
use super::{CorpusError, ImageSample};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPolicy {
    /// Multiplicative scale jitter bounds (lo, hi), both positive.
    pub scale_jitter_range: (f64, f64),
    /// Maximum rotation magnitude in degrees.
    pub rotation_max_deg: f64,
    /// Probability of a horizontal flip.
    pub hflip_prob: f64,
}

impl AugmentPolicy {
    pub fn new(
        scale_jitter_range: (f64, f64),
        rotation_max_deg: f64,
        hflip_prob: f64,
    ) -> Result<Self, CorpusError> {
        let (lo, hi) = scale_jitter_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(CorpusError::InvalidPolicy(format!(
                "scale range must be positive and ordered, got ({lo}, {hi})"
            )));
        }
        if rotation_max_deg < 0.0 {
            return Err(CorpusError::InvalidPolicy(format!(
                "rotation_max_deg must be >= 0, got {rotation_max_deg}"
            )));
        }
        if !(0.0..=1.0).contains(&hflip_prob) {
            return Err(CorpusError::InvalidPolicy(format!(
                "hflip_prob must be in [0,1], got {hflip_prob}"
            )));
        }
        Ok(Self { scale_jitter_range, rotation_max_deg, hflip_prob })
    }

    /// Identity transform.
    pub fn identity() -> Self {
        Self { scale_jitter_range: (1.0, 1.0), rotation_max_deg: 0.0, hflip_prob: 0.0 }
    }

    /// Mild jitter suitable for training.
    pub fn light() -> Self {
        Self { scale_jitter_range: (0.95, 1.05), rotation_max_deg: 5.0, hflip_prob: 0.5 }
    }
}

fn derived_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(b"augment\0");
    ChaCha8Rng::from_seed(key)
}

/// Apply the policy to a sample. Annotations are copied unchanged (no
/// supported geometric change alters them). Same `(sample, policy, seed,
/// epoch, index)` produce bit-identical output.
pub fn augment(
    sample: &ImageSample,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: u64,
    index: u64,
) -> ImageSample {
    let mut rng = derived_rng(seed, epoch, index);
    // Fixed draw order regardless of which transforms are active.
    let (lo, hi) = policy.scale_jitter_range;
    let scale = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let angle_deg = if policy.rotation_max_deg == 0.0 {
        0.0
    } else {
        rng.gen_range(-policy.rotation_max_deg..=policy.rotation_max_deg)
    };
    let flip = rng.gen_range(0.0..1.0) < policy.hflip_prob;

    let image = transform(&sample.image, scale, angle_deg, flip);
    ImageSample { image, ..sample.clone() }
}

fn transform(img: &FaceImage, scale: f64, angle_deg: f64, flip: bool) -> FaceImage {
    let identity_affine = scale == 1.0 && angle_deg == 0.0;
    if identity_affine && !flip {
        return img.clone();
    }
    let n = img.size();
    if identity_affine {
        // Pure flip: exact index mirror, no resampling.
        let mut out = FaceImage::filled(n, 0.0);
        for y in 0..n {
            for x in 0..n {
                out.set_pixel(x, y, img.pixel(n - 1 - x, y));
            }
        }
        return out;
    }
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let c = n as f64 / 2.0;
    let mut out = FaceImage::filled(n, 0.0);
    for y in 0..n {
        for x in 0..n {
            // Inverse map: undo scale and rotation about the center.
            let ox = x as f64 + 0.5 - c;
            let oy = y as f64 + 0.5 - c;
            let ux = (cos * ox + sin * oy) / scale;
            let uy = (-sin * ox + cos * oy) / scale;
            let mut sx = ux + c;
            let sy = uy + c;
            if flip {
                sx = n as f64 - sx;
            }
            out.set_pixel(x, y, sample_bilinear(img, sx, sy));
        }
    }
    out
}

fn sample_bilinear(img: &FaceImage, fx: f64, fy: f64) -> [f64; 3] {
    let n = img.size() as isize;
    let gx = fx - 0.5;
    let gy = fy - 0.5;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let wx = gx - x0;
    let wy = gy - y0;
    let xi0 = (x0 as isize).clamp(0, n - 1) as usize;
    let xi1 = (x0 as isize + 1).clamp(0, n - 1) as usize;
    let yi0 = (y0 as isize).clamp(0, n - 1) as usize;
    let yi1 = (y0 as isize + 1).clamp(0, n - 1) as usize;
    let p00 = img.pixel(xi0, yi0);
    let p10 = img.pixel(xi1, yi0);
    let p01 = img.pixel(xi0, yi1);
    let p11 = img.pixel(xi1, yi1);
    let mut out = [0.0f64; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - wx) + p10[c] * wx;
        let bot = p01[c] * (1.0 - wx) + p11[c] * wx;
        out[c] = top * (1.0 - wy) + bot * wy;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::manifest::Split;

    fn sample() -> ImageSample {
        let mut img = FaceImage::filled(16, 0.2);
        img.set_pixel(3, 5, [0.9, 0.1, 0.4]);
        img.set_pixel(12, 2, [0.0, 1.0, 0.5]);
        ImageSample {
            image: img,
            path: "x.png".into(),
            split: Split::Train,
            emotion: Some(1),
            av: Some((0.5, -0.2)),
            mood: None,
        }
    }

    #[test]
    fn identity_policy_is_pixel_identical() {
        let s = sample();
        let out = augment(&s, &AugmentPolicy::identity(), 1, 2, 3);
        assert_eq!(out.image, s.image);
        assert_eq!(out.emotion, s.emotion);
    }

    #[test]
    fn same_key_is_bit_identical() {
        let s = sample();
        let p = AugmentPolicy::light();
        let a = augment(&s, &p, 9, 4, 77);
        let b = augment(&s, &p, 9, 4, 77);
        assert_eq!(a.image, b.image);
        let c = augment(&s, &p, 9, 4, 78);
        assert_ne!(c.image, a.image, "different index should change the draw");
    }

    #[test]
    fn double_flip_restores_image() {
        let s = sample();
        let p = AugmentPolicy::new((1.0, 1.0), 0.0, 1.0).unwrap();
        let once = augment(&s, &p, 5, 0, 0);
        assert_ne!(once.image, s.image);
        let twice = augment(&once, &p, 5, 0, 0);
        assert!(twice.image.max_abs_diff(&s.image) < 1e-6);
    }

    #[test]
    fn invalid_policies_rejected() {
        assert!(AugmentPolicy::new((0.0, 1.0), 0.0, 0.0).is_err());
        assert!(AugmentPolicy::new((1.0, 0.5), 0.0, 0.0).is_err());
        assert!(AugmentPolicy::new((1.0, 1.0), -1.0, 0.0).is_err());
        assert!(AugmentPolicy::new((1.0, 1.0), 0.0, 1.5).is_err());
    }
}
