//! Deterministic parametric face renderer used as the desk-scale oracle.
//!
//! Three controls map to visible geometry: mouth curvature tracks `v`
//! (valence proxy), eye aperture tracks `a` (arousal proxy), and the
//! vertical offset of the eyebrows' inner ends tracks `d` (dominance
//! proxy). A seed jitters identity only: skin color and face position.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::FaceImage;
use super::manifest::ManifestRow;
use super::{CorpusError, Split};
use crate::types::ClassList;

/// Controls for one synthetic face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticParams {
    /// Mouth curvature, valence proxy, in [-1,1].
    pub v: f64,
    /// Eye openness, arousal proxy, in [-1,1].
    pub a: f64,
    /// Eyebrow angle, dominance proxy, in [-1,1].
    pub d: f64,
    /// Identity jitter: face color and position noise.
    pub seed: u64,
}

impl SyntheticParams {
    pub fn new(v: f64, a: f64, d: f64, seed: u64) -> Self {
        assert!((-1.0..=1.0).contains(&v), "v out of [-1,1]");
        assert!((-1.0..=1.0).contains(&a), "a out of [-1,1]");
        assert!((-1.0..=1.0).contains(&d), "d out of [-1,1]");
        Self { v, a, d, seed }
    }
}

const MIN_SIZE: usize = 16;

// Colors.
const BACKGROUND: [f64; 3] = [0.92, 0.93, 0.95];
const SKIN_BASE: [f64; 3] = [0.87, 0.74, 0.62];
const EYE_COLOR: [f64; 3] = [0.10, 0.09, 0.09];
const BROW_COLOR: [f64; 3] = [0.25, 0.18, 0.12];
const MOUTH_COLOR: [f64; 3] = [0.62, 0.22, 0.22];

/// Per-identity layout derived from the seed, in units of the canvas side.
struct Layout {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    skin: [f64; 3],
}

impl Layout {
    fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let dx: f64 = rng.gen_range(-0.02..=0.02);
        let dy: f64 = rng.gen_range(-0.02..=0.02);
        let jr: f64 = rng.gen_range(-0.05..=0.05);
        let jg: f64 = rng.gen_range(-0.05..=0.05);
        let jb: f64 = rng.gen_range(-0.05..=0.05);
        Layout {
            cx: 0.50 + dx,
            cy: 0.52 + dy,
            rx: 0.34,
            ry: 0.40,
            skin: [
                (SKIN_BASE[0] + jr).clamp(0.0, 1.0),
                (SKIN_BASE[1] + jg).clamp(0.0, 1.0),
                (SKIN_BASE[2] + jb).clamp(0.0, 1.0),
            ],
        }
    }

    // Mouth geometry (independent of v so the bounding box covers every
    // curvature).
    fn mouth_center_y(&self) -> f64 {
        self.cy + 0.45 * self.ry
    }
    fn mouth_half_width(&self) -> f64 {
        0.42 * self.rx
    }
    fn mouth_bow(&self) -> f64 {
        0.35 * self.ry
    }
    fn mouth_thickness(&self) -> f64 {
        0.09 * self.ry
    }

    // Eyes.
    fn eye_y(&self) -> f64 {
        self.cy - 0.25 * self.ry
    }
    fn eye_dx(&self) -> f64 {
        0.40 * self.rx
    }
    fn eye_rx(&self) -> f64 {
        0.16 * self.rx
    }
    fn eye_ry(&self, a: f64) -> f64 {
        // Aperture affine in a, always positive.
        (0.11 + 0.07 * a) * self.ry
    }

    // Brows.
    fn brow_y(&self) -> f64 {
        self.eye_y() - 0.30 * self.ry
    }
    fn brow_thickness(&self) -> f64 {
        0.07 * self.ry
    }
    fn brow_inner_drop(&self, d: f64) -> f64 {
        // Inner-end vertical offset affine in d; positive d lowers the inner
        // ends toward the nose.
        0.13 * self.ry * d
    }
}

fn dist_point_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (vx, vy) = (bx - ax, by - ay);
    let (wx, wy) = (px - ax, py - ay);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (px - (ax + t * vx), py - (ay + t * vy));
    (dx * dx + dy * dy).sqrt()
}

/// Color at a continuous canvas point (coordinates in [0,1]).
fn shade(p: &SyntheticParams, l: &Layout, x: f64, y: f64) -> [f64; 3] {
    // Mouth: thick parabolic arc, curvature proportional to v.
    let mcx = l.cx;
    let my = l.mouth_center_y();
    let hw = l.mouth_half_width();
    let t = (x - mcx) / hw;
    if t.abs() <= 1.0 {
        let curve_y = my + p.v * l.mouth_bow() * (0.5 - t * t);
        if (y - curve_y).abs() <= l.mouth_thickness() / 2.0 {
            return MOUTH_COLOR;
        }
    }

    // Brows: segments whose inner ends shift vertically with d.
    let by = l.brow_y();
    let drop = l.brow_inner_drop(p.d);
    for side in [-1.0, 1.0] {
        let ex = l.cx + side * l.eye_dx();
        let outer_x = ex + side * 0.22 * l.rx;
        let inner_x = ex - side * 0.20 * l.rx;
        let dist = dist_point_segment(x, y, inner_x, by + drop, outer_x, by);
        if dist <= l.brow_thickness() / 2.0 {
            return BROW_COLOR;
        }
    }

    // Eyes: ellipses whose vertical radius is the aperture.
    let ery = l.eye_ry(p.a);
    let erx = l.eye_rx();
    for side in [-1.0, 1.0] {
        let ex = l.cx + side * l.eye_dx();
        let ey = l.eye_y();
        let q = ((x - ex) / erx).powi(2) + ((y - ey) / ery).powi(2);
        if q <= 1.0 {
            return EYE_COLOR;
        }
    }

    // Face ellipse.
    let q = ((x - l.cx) / l.rx).powi(2) + ((y - l.cy) / l.ry).powi(2);
    if q <= 1.0 {
        return l.skin;
    }

    BACKGROUND
}

/// Render a synthetic face. Identical `(params, size)` render bit-identical
/// images; the result carries mood `(v,a,d)`, av `(v,a)` and the discrete
/// label from [`label_synthetic`].
pub fn render_synthetic(params: &SyntheticParams, size: usize) -> Result<RenderedFace, CorpusError> {
    if size < MIN_SIZE {
        return Err(CorpusError::CanvasTooSmall { size, min: MIN_SIZE });
    }
    let l = Layout::from_seed(params.seed);
    let mut data = vec![0.0f64; size * size * 3];
    let inv = 1.0 / size as f64;
    // 3x3 supersampling per pixel.
    const SUB: [f64; 3] = [1.0 / 6.0, 0.5, 5.0 / 6.0];
    for yi in 0..size {
        for xi in 0..size {
            let mut acc = [0.0f64; 3];
            for sy in SUB {
                for sx in SUB {
                    let x = (xi as f64 + sx) * inv;
                    let y = (yi as f64 + sy) * inv;
                    let c = shade(params, &l, x, y);
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
            }
            let off = (yi * size + xi) * 3;
            data[off] = acc[0] / 9.0;
            data[off + 1] = acc[1] / 9.0;
            data[off + 2] = acc[2] / 9.0;
        }
    }
    Ok(RenderedFace {
        image: FaceImage::new(size, data),
        emotion: label_synthetic(params),
        av: (params.v, params.a),
        mood: [params.v, params.a, params.d],
    })
}

/// A rendered face together with its ground-truth annotations.
#[derive(Clone, Debug)]
pub struct RenderedFace {
    pub image: FaceImage,
    pub emotion: usize,
    pub av: (f64, f64),
    pub mood: [f64; 3],
}

/// Pixel rectangle `(x0, y0, x1, y1)` (half-open) that contains the mouth for
/// every curvature value, given the identity seed and canvas size. Pixels
/// outside this rectangle are unaffected by `v`.
pub fn mouth_bbox(seed: u64, size: usize) -> (usize, usize, usize, usize) {
    let l = Layout::from_seed(seed);
    let margin = l.mouth_thickness() / 2.0;
    let x0 = l.cx - l.mouth_half_width() - margin;
    let x1 = l.cx + l.mouth_half_width() + margin;
    let y0 = l.mouth_center_y() - 0.5 * l.mouth_bow() - margin;
    let y1 = l.mouth_center_y() + 0.5 * l.mouth_bow() + margin;
    let s = size as f64;
    let px0 = ((x0 * s).floor() as isize - 1).max(0) as usize;
    let py0 = ((y0 * s).floor() as isize - 1).max(0) as usize;
    let px1 = ((x1 * s).ceil() as usize + 1).min(size);
    let py1 = ((y1 * s).ceil() as usize + 1).min(size);
    (px0, py0, px1, py1)
}

/// Discrete label for a parameter triple; first matching rule wins, every
/// triple in [-1,1]^3 gets exactly one label.
pub fn label_synthetic(params: &SyntheticParams) -> usize {
    let (v, a, d) = (params.v, params.a, params.d);
    if a > 0.5 && v.abs() <= 0.3 {
        ClassList::SURPRISE
    } else if v > 0.4 {
        ClassList::HAPPY
    } else if v < -0.3 && a > 0.3 && d < 0.0 {
        ClassList::FEAR
    } else if v < -0.3 && a > 0.3 && d >= 0.0 {
        ClassList::ANGRY
    } else if v < -0.4 && a <= 0.3 && d >= 0.2 {
        ClassList::DISGUST
    } else if v < -0.4 {
        ClassList::SAD
    } else {
        ClassList::NEUTRAL
    }
}

/// Write a synthetic corpus (PNG images plus a JSONL manifest) and return
/// the manifest path. Runs with identical arguments produce byte-identical
/// output.
pub fn make_synthetic_corpus(
    n_train: usize,
    n_test: usize,
    size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf, CorpusError> {
    if n_train == 0 || n_test == 0 {
        return Err(CorpusError::InvalidCounts { n_train, n_test });
    }
    if size < MIN_SIZE {
        return Err(CorpusError::CanvasTooSmall { size, min: MIN_SIZE });
    }
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| CorpusError::Io {
        path: images_dir.display().to_string(),
        detail: e.to_string(),
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manifest_path = out_dir.join("manifest.jsonl");
    let mut file = fs::File::create(&manifest_path).map_err(|e| CorpusError::Io {
        path: manifest_path.display().to_string(),
        detail: e.to_string(),
    })?;

    for (split, count) in [(Split::Train, n_train), (Split::Test, n_test)] {
        for i in 0..count {
            let v: f64 = rng.gen_range(-1.0..=1.0);
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let d: f64 = rng.gen_range(-1.0..=1.0);
            let identity: u64 = rng.gen();
            let params = SyntheticParams::new(v, a, d, identity);
            let face = render_synthetic(&params, size)?;
            let rel = format!("images/{}_{:05}.png", split.as_str(), i);
            face.image.save_png(&out_dir.join(&rel))?;
            let row = ManifestRow {
                path: rel,
                split,
                emotion: Some(face.emotion),
                valence: Some(face.av.0),
                arousal: Some(face.av.1),
                mood: Some(face.mood),
            };
            let line = serde_json::to_string(&row).expect("manifest row serializes");
            writeln!(file, "{line}").map_err(|e| CorpusError::Io {
                path: manifest_path.display().to_string(),
                detail: e.to_string(),
            })?;
        }
    }
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let p = SyntheticParams::new(0.0, 0.0, 0.0, 1);
        let a = render_synthetic(&p, 32).unwrap();
        let b = render_synthetic(&p, 32).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.emotion, ClassList::NEUTRAL);
    }

    #[test]
    fn too_small_canvas_errors() {
        let p = SyntheticParams::new(0.0, 0.0, 0.0, 1);
        assert!(matches!(
            render_synthetic(&p, 15),
            Err(CorpusError::CanvasTooSmall { .. })
        ));
    }

    #[test]
    fn valence_changes_only_mouth_region() {
        for seed in [1u64, 7, 42] {
            let smile = render_synthetic(&SyntheticParams::new(1.0, 0.0, 0.0, seed), 32).unwrap();
            let frown = render_synthetic(&SyntheticParams::new(-1.0, 0.0, 0.0, seed), 32).unwrap();
            let (x0, y0, x1, y1) = mouth_bbox(seed, 32);
            let mut inside_diff = 0.0f64;
            for y in 0..32 {
                for x in 0..32 {
                    let pa = smile.image.pixel(x, y);
                    let pb = frown.image.pixel(x, y);
                    let diff = (0..3).map(|c| (pa[c] - pb[c]).abs()).fold(0.0, f64::max);
                    if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                        inside_diff = inside_diff.max(diff);
                    } else {
                        assert_eq!(pa, pb, "pixel ({x},{y}) outside mouth bbox differs");
                    }
                }
            }
            assert!(inside_diff > 0.1, "mouth must visibly change with v");
        }
    }

    #[test]
    fn eye_aperture_affine_in_arousal() {
        let l = Layout::from_seed(3);
        let lo = l.eye_ry(-1.0);
        let mid = l.eye_ry(0.0);
        let hi = l.eye_ry(1.0);
        assert!(lo > 0.0);
        assert!((mid - (lo + hi) / 2.0).abs() < 1e-12);
        assert!(hi > lo);
    }

    #[test]
    fn label_rule_table_examples() {
        let lbl = |v, a, d| label_synthetic(&SyntheticParams::new(v, a, d, 0));
        assert_eq!(lbl(0.0, 0.0, 0.0), ClassList::NEUTRAL);
        assert_eq!(lbl(-0.8, 0.6, -0.5), ClassList::FEAR);
        assert_eq!(lbl(0.9, 0.1, 0.0), ClassList::HAPPY);
        assert_eq!(lbl(0.0, 0.8, 0.0), ClassList::SURPRISE);
        assert_eq!(lbl(-0.8, 0.6, 0.5), ClassList::ANGRY);
        assert_eq!(lbl(-0.8, 0.0, 0.5), ClassList::DISGUST);
        assert_eq!(lbl(-0.8, 0.0, 0.0), ClassList::SAD);
    }

    #[test]
    fn label_grid_covers_all_classes() {
        let mut histogram = [0usize; 7];
        for vi in 0..11 {
            for ai in 0..11 {
                for di in 0..11 {
                    let v = -1.0 + 0.2 * vi as f64;
                    let a = -1.0 + 0.2 * ai as f64;
                    let d = -1.0 + 0.2 * di as f64;
                    histogram[label_synthetic(&SyntheticParams::new(v, a, d, 0))] += 1;
                }
            }
        }
        assert_eq!(histogram.iter().sum::<usize>(), 11 * 11 * 11);
        for (id, &count) in histogram.iter().enumerate() {
            assert!(count > 0, "class {} has zero grid mass", ClassList::name(id));
        }
    }
}
