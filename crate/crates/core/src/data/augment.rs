//! Seeded augmentation with consistent label geometry.
//!
//! Determinism contract: outputs depend only on `(seed, image_id, variant
//! index, step index)` — never on execution order — so per-image work can be
//! parallelized or re-run and still produce byte-identical trees.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{image::Rgb8Image, labels, parse_manifest, write_manifest, LabeledImage, ManifestEntry};
use crate::boxloss::BBox;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Rotate90,
    Rotate180,
    Rotate270,
    FlipH,
    FlipV,
    RandomCrop,
    RandomOcclusion,
    ColorEnhance,
    HistEqualize,
}

impl AugmentOp {
    pub fn is_geometric(self) -> bool {
        matches!(
            self,
            AugmentOp::Rotate90
                | AugmentOp::Rotate180
                | AugmentOp::Rotate270
                | AugmentOp::FlipH
                | AugmentOp::FlipV
                | AugmentOp::RandomCrop
                | AugmentOp::RandomOcclusion
        )
    }

    pub fn suffix(self) -> &'static str {
        match self {
            AugmentOp::Rotate90 => "rot90",
            AugmentOp::Rotate180 => "rot180",
            AugmentOp::Rotate270 => "rot270",
            AugmentOp::FlipH => "fliph",
            AugmentOp::FlipV => "flipv",
            AugmentOp::RandomCrop => "crop",
            AugmentOp::RandomOcclusion => "occl",
            AugmentOp::ColorEnhance => "color",
            AugmentOp::HistEqualize => "histeq",
        }
    }
}

/// Parameter ranges for the randomized operations. Ranges are inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Retained fraction of each spatial dimension for random crops.
    pub crop_fraction: (f64, f64),
    /// Boxes keeping less than this fraction of their area are dropped.
    pub crop_min_area_retained: f64,
    pub occlusion_count: (u32, u32),
    /// Occluding rectangle side, as a fraction of the shorter image side.
    pub occlusion_size: (f64, f64),
    /// Additive brightness delta on the 0..255 scale.
    pub brightness_delta: (f64, f64),
    /// Multiplicative contrast about mid-gray.
    pub contrast: (f64, f64),
    pub hue_degrees: (f64, f64),
    /// Multiplicative saturation factor.
    pub saturation: (f64, f64),
    pub gamma: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            crop_fraction: (0.6, 0.9),
            crop_min_area_retained: 0.30,
            occlusion_count: (1, 3),
            occlusion_size: (0.1, 0.25),
            brightness_delta: (-32.0, 32.0),
            contrast: (0.8, 1.2),
            hue_degrees: (-18.0, 18.0),
            saturation: (0.7, 1.3),
            gamma: (0.7, 1.4),
        }
    }
}

/// One output per source image: an op sequence and a filename suffix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentVariant {
    pub suffix: String,
    pub ops: Vec<AugmentOp>,
}

impl AugmentVariant {
    pub fn single(op: AugmentOp) -> Self {
        Self {
            suffix: op.suffix().to_string(),
            ops: vec![op],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub seed: u64,
    pub variants: Vec<AugmentVariant>,
    #[serde(default)]
    pub params: AugmentParams,
}

impl AugmentSpec {
    /// The default preset: every rotation combined with every flip
    /// (rotate, then flip) — six variants per image.
    pub fn rotation_flip_preset(seed: u64) -> Self {
        let rotations = [AugmentOp::Rotate90, AugmentOp::Rotate180, AugmentOp::Rotate270];
        let flips = [AugmentOp::FlipH, AugmentOp::FlipV];
        let mut variants = Vec::new();
        for rot in rotations {
            for flip in flips {
                variants.push(AugmentVariant {
                    suffix: format!("{}_{}", rot.suffix(), flip.suffix()),
                    ops: vec![rot, flip],
                });
            }
        }
        Self {
            seed,
            variants,
            params: AugmentParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: AugmentSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("augment spec: {e}"),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("augment spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::param("augment spec has no variants"));
        }
        let mut seen = BTreeSet::new();
        for v in &self.variants {
            if v.ops.is_empty() {
                return Err(Error::param(format!("variant {:?} has no ops", v.suffix)));
            }
            if v.suffix.trim().is_empty() || !seen.insert(v.suffix.clone()) {
                return Err(Error::param(format!(
                    "variant suffix {:?} empty or duplicated",
                    v.suffix
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Deterministic per-(seed, image, variant, step) RNG keying.
// ---------------------------------------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-style RNG keyed by the work item, independent of execution order.
pub fn rng_for(seed: u64, image_id: &str, variant_idx: usize, step_idx: usize) -> ChaCha8Rng {
    let key = splitmix64(
        seed ^ splitmix64(fnv1a(image_id.as_bytes()))
            ^ splitmix64(((variant_idx as u64) << 32) | step_idx as u64),
    );
    ChaCha8Rng::seed_from_u64(key)
}

// ---------------------------------------------------------------------------
// Geometric operations.
// ---------------------------------------------------------------------------

fn rotate90_image(img: &Rgb8Image) -> Rgb8Image {
    let (w, h) = (img.width, img.height);
    let mut out = Rgb8Image::filled(h, w, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set(h - 1 - y, x, img.get(x, y));
        }
    }
    out
}

fn rotate180_image(img: &Rgb8Image) -> Rgb8Image {
    let (w, h) = (img.width, img.height);
    let mut out = Rgb8Image::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set(w - 1 - x, h - 1 - y, img.get(x, y));
        }
    }
    out
}

fn flip_h_image(img: &Rgb8Image) -> Rgb8Image {
    let (w, h) = (img.width, img.height);
    let mut out = Rgb8Image::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set(w - 1 - x, y, img.get(x, y));
        }
    }
    out
}

fn flip_v_image(img: &Rgb8Image) -> Rgb8Image {
    let (w, h) = (img.width, img.height);
    let mut out = Rgb8Image::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set(x, h - 1 - y, img.get(x, y));
        }
    }
    out
}

/// Clockwise quarter-turn on normalized labels: `(cx,cy,w,h) → (1−cy,cx,h,w)`.
fn rotate90_label(b: &BBox<f64>) -> BBox<f64> {
    BBox {
        cx: 1.0 - b.cy,
        cy: b.cx,
        w: b.h,
        h: b.w,
    }
}

fn apply_rotation(img: &LabeledImage, quarter_turns: usize) -> LabeledImage {
    let image = match quarter_turns {
        1 => rotate90_image(&img.image),
        2 => rotate180_image(&img.image),
        3 => rotate90_image(&rotate90_image(&rotate90_image(&img.image))),
        _ => img.image.clone(),
    };
    let labels = img
        .labels
        .iter()
        .map(|(c, b)| {
            let mut nb = *b;
            for _ in 0..quarter_turns {
                nb = rotate90_label(&nb);
            }
            (*c, nb)
        })
        .collect();
    LabeledImage {
        image_id: img.image_id.clone(),
        image,
        labels,
    }
}

fn apply_crop(img: &LabeledImage, params: &AugmentParams, rng: &mut ChaCha8Rng) -> LabeledImage {
    let (w, h) = (img.image.width as f64, img.image.height as f64);
    let (lo, hi) = params.crop_fraction;
    let fx = rng.random_range(lo..=hi);
    let fy = rng.random_range(lo..=hi);
    let cw = ((w * fx).round() as usize).clamp(1, img.image.width);
    let ch = ((h * fy).round() as usize).clamp(1, img.image.height);
    let x0 = rng.random_range(0..=img.image.width - cw);
    let y0 = rng.random_range(0..=img.image.height - ch);

    let mut data = Vec::with_capacity(cw * ch * 3);
    for y in y0..y0 + ch {
        for x in x0..x0 + cw {
            data.extend_from_slice(&img.image.get(x, y));
        }
    }
    let image = Rgb8Image::new(cw, ch, data).expect("crop dimensions consistent");

    let mut labels = Vec::new();
    for (c, b) in &img.labels {
        // pixel-space box, clipped against the crop window
        let bx1 = (b.cx - b.w / 2.0) * w;
        let bx2 = (b.cx + b.w / 2.0) * w;
        let by1 = (b.cy - b.h / 2.0) * h;
        let by2 = (b.cy + b.h / 2.0) * h;
        let cx1 = bx1.max(x0 as f64);
        let cx2 = bx2.min((x0 + cw) as f64);
        let cy1 = by1.max(y0 as f64);
        let cy2 = by2.min((y0 + ch) as f64);
        if cx2 <= cx1 || cy2 <= cy1 {
            continue;
        }
        let retained = (cx2 - cx1) * (cy2 - cy1) / ((bx2 - bx1) * (by2 - by1));
        if retained < params.crop_min_area_retained {
            continue;
        }
        labels.push((
            *c,
            BBox {
                cx: ((cx1 + cx2) / 2.0 - x0 as f64) / cw as f64,
                cy: ((cy1 + cy2) / 2.0 - y0 as f64) / ch as f64,
                w: (cx2 - cx1) / cw as f64,
                h: (cy2 - cy1) / ch as f64,
            },
        ));
    }
    LabeledImage {
        image_id: img.image_id.clone(),
        image,
        labels,
    }
}

/// Mid-gray fill for occluding rectangles.
pub const OCCLUSION_FILL: [u8; 3] = [128, 128, 128];

fn apply_occlusion(
    img: &LabeledImage,
    params: &AugmentParams,
    rng: &mut ChaCha8Rng,
) -> LabeledImage {
    let mut image = img.image.clone();
    let (w, h) = (image.width, image.height);
    let short = w.min(h) as f64;
    let count = rng.random_range(params.occlusion_count.0..=params.occlusion_count.1);
    for _ in 0..count {
        let side = params.occlusion_size;
        let rw = ((short * rng.random_range(side.0..=side.1)).round() as usize).clamp(1, w);
        let rh = ((short * rng.random_range(side.0..=side.1)).round() as usize).clamp(1, h);
        let x0 = rng.random_range(0..=w - rw);
        let y0 = rng.random_range(0..=h - rh);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                image.set(x, y, OCCLUSION_FILL);
            }
        }
    }
    LabeledImage {
        image_id: img.image_id.clone(),
        image,
        labels: img.labels.clone(),
    }
}

/// Apply one geometric op. Labels are transformed alongside the pixels.
pub fn apply_geometric(
    img: &LabeledImage,
    op: AugmentOp,
    params: &AugmentParams,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledImage> {
    if !op.is_geometric() {
        return Err(Error::param(format!(
            "{op:?} is a photometric operation, not geometric"
        )));
    }
    Ok(match op {
        AugmentOp::Rotate90 => apply_rotation(img, 1),
        AugmentOp::Rotate180 => apply_rotation(img, 2),
        AugmentOp::Rotate270 => apply_rotation(img, 3),
        AugmentOp::FlipH => LabeledImage {
            image_id: img.image_id.clone(),
            image: flip_h_image(&img.image),
            labels: img
                .labels
                .iter()
                .map(|(c, b)| (*c, BBox { cx: 1.0 - b.cx, ..*b }))
                .collect(),
        },
        AugmentOp::FlipV => LabeledImage {
            image_id: img.image_id.clone(),
            image: flip_v_image(&img.image),
            labels: img
                .labels
                .iter()
                .map(|(c, b)| (*c, BBox { cy: 1.0 - b.cy, ..*b }))
                .collect(),
        },
        AugmentOp::RandomCrop => apply_crop(img, params, rng),
        AugmentOp::RandomOcclusion => apply_occlusion(img, params, rng),
        _ => unreachable!("geometric ops covered above"),
    })
}

// ---------------------------------------------------------------------------
// Photometric operations. Labels never change.
// ---------------------------------------------------------------------------

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub(crate) fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let r = f64::from(rgb[0]) / 255.0;
    let g = f64::from(rgb[1]) / 255.0;
    let b = f64::from(rgb[2]) / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0).rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [
        clamp_u8((r + m) * 255.0),
        clamp_u8((g + m) * 255.0),
        clamp_u8((b + m) * 255.0),
    ]
}

pub(crate) fn color_enhance(
    img: &Rgb8Image,
    brightness: f64,
    contrast: f64,
    hue: f64,
    saturation: f64,
    gamma: f64,
) -> Rgb8Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let px = img.get(x, y);
            // contrast about mid-gray, then brightness, clamped per channel
            let mut adjusted = [0u8; 3];
            for (slot, &v) in adjusted.iter_mut().zip(&px) {
                *slot = clamp_u8((f64::from(v) - 128.0) * contrast + 128.0 + brightness);
            }
            // hue/saturation through an HSV round trip
            let (h, s, v) = rgb_to_hsv(adjusted);
            let mut px = hsv_to_rgb(h + hue, (s * saturation).clamp(0.0, 1.0), v);
            // normalized power curve keeps 0 and 255 fixed
            for slot in &mut px {
                *slot = clamp_u8(255.0 * (f64::from(*slot) / 255.0).powf(gamma));
            }
            out.set(x, y, px);
        }
    }
    out
}

pub(crate) fn hist_equalize(img: &Rgb8Image) -> Rgb8Image {
    // equalize the luminance channel and scale RGB by the luminance gain
    let mut hist = [0u64; 256];
    let luma = |px: [u8; 3]| -> u8 {
        clamp_u8(0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
    };
    for y in 0..img.height {
        for x in 0..img.width {
            hist[luma(img.get(x, y)) as usize] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    let mut cdf = [0u64; 256];
    let mut acc = 0u64;
    for (i, &h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc;
    }
    let cdf_min = cdf
        .iter()
        .copied()
        .find(|&v| v > 0)
        .unwrap_or(0);
    let mut mapping = [0u8; 256];
    for i in 0..256 {
        mapping[i] = if total > cdf_min {
            clamp_u8(255.0 * (cdf[i] - cdf_min) as f64 / (total - cdf_min) as f64)
        } else {
            i as u8
        };
    }
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let px = img.get(x, y);
            let l = luma(px);
            let target = mapping[l as usize];
            let gain = f64::from(target) / f64::from(l.max(1));
            out.set(
                x,
                y,
                [
                    clamp_u8(f64::from(px[0]) * gain),
                    clamp_u8(f64::from(px[1]) * gain),
                    clamp_u8(f64::from(px[2]) * gain),
                ],
            );
        }
    }
    out
}

/// Apply one photometric op; labels pass through untouched.
pub fn apply_photometric(
    img: &LabeledImage,
    op: AugmentOp,
    params: &AugmentParams,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledImage> {
    let image = match op {
        AugmentOp::ColorEnhance => {
            let brightness = rng.random_range(params.brightness_delta.0..=params.brightness_delta.1);
            let contrast = rng.random_range(params.contrast.0..=params.contrast.1);
            let hue = rng.random_range(params.hue_degrees.0..=params.hue_degrees.1);
            let saturation = rng.random_range(params.saturation.0..=params.saturation.1);
            let gamma = rng.random_range(params.gamma.0..=params.gamma.1);
            color_enhance(&img.image, brightness, contrast, hue, saturation, gamma)
        }
        AugmentOp::HistEqualize => hist_equalize(&img.image),
        other => {
            return Err(Error::param(format!(
                "{other:?} is a geometric operation, not photometric"
            )))
        }
    };
    Ok(LabeledImage {
        image_id: img.image_id.clone(),
        image,
        labels: img.labels.clone(),
    })
}

/// Apply a variant's op sequence with per-step keyed RNGs.
pub fn apply_variant(
    img: &LabeledImage,
    spec: &AugmentSpec,
    variant_idx: usize,
) -> Result<LabeledImage> {
    let variant = &spec.variants[variant_idx];
    let mut current = img.clone();
    for (step, &op) in variant.ops.iter().enumerate() {
        let mut rng = rng_for(spec.seed, &img.image_id, variant_idx, step);
        current = if op.is_geometric() {
            apply_geometric(&current, op, &spec.params, &mut rng)?
        } else {
            apply_photometric(&current, op, &spec.params, &mut rng)?
        };
    }
    Ok(current)
}

#[derive(Debug, Clone, Default)]
pub struct AugmentSummary {
    pub sources: usize,
    pub originals: usize,
    pub augmented: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Run the pipeline over a manifest: copy originals, emit every variant with
/// derived filenames (stem + variant suffix), and write a combined manifest.
///
/// Output layout under `out_dir`: `images/`, `labels/`, `manifest.txt`.
/// Unreadable sources are skipped with a warning in the summary.
pub fn augment_dataset(
    manifest_path: &Path,
    spec: &AugmentSpec,
    out_dir: &Path,
) -> Result<AugmentSummary> {
    spec.validate()?;
    let manifest_text = std::fs::read_to_string(manifest_path)?;
    let entries = parse_manifest(&manifest_text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let images_dir = out_dir.join("images");
    let labels_dir = out_dir.join("labels");
    std::fs::create_dir_all(&images_dir)?;
    std::fs::create_dir_all(&labels_dir)?;

    let mut summary = AugmentSummary {
        sources: entries.len(),
        ..Default::default()
    };
    let mut out_entries: Vec<ManifestEntry> = Vec::new();

    for entry in &entries {
        let src = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let stem = src
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();

        let image = match Rgb8Image::load(&src) {
            Ok(img) => img,
            Err(e) => {
                summary.skipped += 1;
                summary
                    .warnings
                    .push(format!("skipping {}: {e}", src.display()));
                continue;
            }
        };
        let label_path = src.with_extension("txt");
        let labels = if label_path.exists() {
            labels::parse_labels(&std::fs::read_to_string(&label_path)?)?
        } else {
            Vec::new()
        };
        let labeled = LabeledImage {
            image_id: stem.clone(),
            image,
            labels,
        };

        // original: verbatim image bytes, normalized labels
        let orig_name = src
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("image.ppm")
            .to_string();
        std::fs::write(images_dir.join(&orig_name), std::fs::read(&src)?)?;
        std::fs::write(
            labels_dir.join(format!("{stem}.txt")),
            labels::write_labels(&labeled.labels),
        )?;
        out_entries.push(ManifestEntry {
            split: entry.split.clone(),
            path: Path::new("images").join(&orig_name),
        });
        summary.originals += 1;

        for (vi, variant) in spec.variants.iter().enumerate() {
            let produced = apply_variant(&labeled, spec, vi)?;
            let name = format!("{stem}_{}.ppm", variant.suffix);
            produced.image.save_ppm(&images_dir.join(&name))?;
            std::fs::write(
                labels_dir.join(format!("{stem}_{}.txt", variant.suffix)),
                labels::write_labels(&produced.labels),
            )?;
            out_entries.push(ManifestEntry {
                split: entry.split.clone(),
                path: Path::new("images").join(&name),
            });
            summary.augmented += 1;
        }
    }

    std::fs::write(out_dir.join("manifest.txt"), write_manifest(&out_entries))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn checker(w: usize, h: usize) -> Rgb8Image {
        let mut img = Rgb8Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let v = (((x + y) % 2) * 255) as u8;
                img.set(x, y, [v, (x * 7 % 256) as u8, (y * 11 % 256) as u8]);
            }
        }
        img
    }

    fn sample() -> LabeledImage {
        LabeledImage {
            image_id: "sample".to_string(),
            image: checker(8, 6),
            labels: vec![
                (0, BBox { cx: 0.25, cy: 0.25, w: 0.1, h: 0.2 }),
                (3, BBox { cx: 0.7, cy: 0.6, w: 0.3, h: 0.25 }),
            ],
        }
    }

    fn rng() -> ChaCha8Rng {
        rng_for(7, "sample", 0, 0)
    }

    #[test]
    fn flips_are_involutions() {
        let img = sample();
        for op in [AugmentOp::FlipH, AugmentOp::FlipV] {
            let once = apply_geometric(&img, op, &AugmentParams::default(), &mut rng()).unwrap();
            let twice = apply_geometric(&once, op, &AugmentParams::default(), &mut rng()).unwrap();
            assert_eq!(twice.image, img.image);
            for ((c1, b1), (c2, b2)) in twice.labels.iter().zip(&img.labels) {
                assert_eq!(c1, c2);
                assert_abs_diff_eq!(b1.cx, b2.cx, epsilon = 1e-12);
                assert_abs_diff_eq!(b1.cy, b2.cy, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = sample();
        let mut cur = img.clone();
        for _ in 0..4 {
            cur = apply_geometric(&cur, AugmentOp::Rotate90, &AugmentParams::default(), &mut rng())
                .unwrap();
        }
        assert_eq!(cur.image, img.image);
        for ((c1, b1), (c2, b2)) in cur.labels.iter().zip(&img.labels) {
            assert_eq!(c1, c2);
            assert_abs_diff_eq!(b1.cx, b2.cx, epsilon = 1e-12);
            assert_abs_diff_eq!(b1.cy, b2.cy, epsilon = 1e-12);
            assert_abs_diff_eq!(b1.w, b2.w, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotate90_composition_consistency() {
        // rotate270 == rotate90 applied three times, on pixels and labels
        let img = sample();
        let p = AugmentParams::default();
        let r270 = apply_geometric(&img, AugmentOp::Rotate270, &p, &mut rng()).unwrap();
        let mut triple = img.clone();
        for _ in 0..3 {
            triple = apply_geometric(&triple, AugmentOp::Rotate90, &p, &mut rng()).unwrap();
        }
        assert_eq!(r270.image, triple.image);
        // rotate180 point symmetry on a known label
        let lone = LabeledImage {
            image_id: "x".into(),
            image: checker(4, 4),
            labels: vec![(0, BBox { cx: 0.25, cy: 0.25, w: 0.1, h: 0.2 })],
        };
        let r180 = apply_geometric(&lone, AugmentOp::Rotate180, &p, &mut rng()).unwrap();
        let (_, b) = r180.labels[0];
        assert_abs_diff_eq!(b.cx, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(b.cy, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(b.w, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b.h, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn crop_emits_valid_boxes_only() {
        let img = sample();
        let p = AugmentParams::default();
        for trial in 0..50 {
            let mut r = rng_for(11, "sample", trial, 0);
            let cropped = apply_geometric(&img, AugmentOp::RandomCrop, &p, &mut r).unwrap();
            for (_, b) in &cropped.labels {
                assert!(b.w > 0.0 && b.h > 0.0);
                assert!(b.cx - b.w / 2.0 >= -1e-9 && b.cx + b.w / 2.0 <= 1.0 + 1e-9);
                assert!(b.cy - b.h / 2.0 >= -1e-9 && b.cy + b.h / 2.0 <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn occlusion_leaves_labels_untouched() {
        let img = sample();
        let out = apply_geometric(
            &img,
            AugmentOp::RandomOcclusion,
            &AugmentParams::default(),
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out.labels, img.labels);
        // some pixels became mid-gray
        let grays = (0..out.image.height)
            .flat_map(|y| (0..out.image.width).map(move |x| (x, y)))
            .filter(|&(x, y)| out.image.get(x, y) == OCCLUSION_FILL)
            .count();
        assert!(grays > 0);
    }

    #[test]
    fn photometric_identity_cases() {
        let img = sample();
        let identity = color_enhance(&img.image, 0.0, 1.0, 0.0, 1.0, 1.0);
        assert_eq!(identity, img.image);
        // 0 and 255 are fixed points of the gamma curve
        let mut two_tone = Rgb8Image::filled(2, 1, [0, 0, 0]);
        two_tone.set(1, 0, [255, 255, 255]);
        let g = color_enhance(&two_tone, 0.0, 1.0, 0.0, 1.0, 2.2);
        assert_eq!(g, two_tone);
    }

    #[test]
    fn hue_full_turn_is_identity_within_quantization() {
        let img = checker(6, 6);
        let turned = color_enhance(&img, 0.0, 1.0, 360.0, 1.0, 1.0);
        for y in 0..6 {
            for x in 0..6 {
                let a = img.get(x, y);
                let b = turned.get(x, y);
                for c in 0..3 {
                    assert!(
                        (i16::from(a[c]) - i16::from(b[c])).abs() <= 1,
                        "at ({x},{y}) channel {c}: {a:?} vs {b:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn photometric_ops_never_touch_labels() {
        let img = sample();
        let p = AugmentParams::default();
        for op in [AugmentOp::ColorEnhance, AugmentOp::HistEqualize] {
            let out = apply_photometric(&img, op, &p, &mut rng()).unwrap();
            assert_eq!(out.labels, img.labels);
        }
    }

    #[test]
    fn wrong_category_rejected() {
        let img = sample();
        let p = AugmentParams::default();
        assert!(apply_geometric(&img, AugmentOp::ColorEnhance, &p, &mut rng()).is_err());
        assert!(apply_photometric(&img, AugmentOp::Rotate90, &p, &mut rng()).is_err());
    }

    #[test]
    fn preset_has_six_variants() {
        let spec = AugmentSpec::rotation_flip_preset(1);
        assert_eq!(spec.variants.len(), 6);
        spec.validate().unwrap();
        let parsed = AugmentSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(parsed.variants.len(), 6);
        assert_eq!(parsed.seed, 1);
    }

    #[test]
    fn keyed_rng_is_order_independent() {
        let mut a = rng_for(1, "img", 2, 3);
        let mut b = rng_for(1, "img", 2, 3);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        let mut c = rng_for(1, "img", 3, 2);
        assert_ne!(a.random::<u64>(), c.random::<u64>());
    }
}
