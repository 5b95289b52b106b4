//! Deterministic toy fingerprints with exact minutiae ground truth.
//!
//! Ridges are the cosine of a phase field: a smoothly rotating plane wave
//! plus a winding singularity at every minutia. Each identity also has its
//! own foreground ellipse and ridge frequency. Impressions apply a rigid
//! transform, minutiae dropout, occlusion and pixel noise.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{write_pgm, Image};
use crate::minutiae::{write_minutiae_file, Minutia, MinutiaeSet};

pub const DEFAULT_SIDE: usize = 224;
pub const MIN_SEPARATION: f64 = 12.0;
const MINUTIAE_RANGE: (usize, usize) = (20, 60);
const MAX_RETRIES: usize = 5;
// minutiae sit at least this far from the border of the template frame
const MARGIN: f64 = 20.0;
// radius (px) over which a minutia's phase winding is blended in
const SINGULARITY_RADIUS: f64 = 18.0;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ id) ^ index))
}

/// Low-frequency orientation field: `θ(x, y) = base + Σ aₖ sin(fxₖ x + fyₖ y + φₖ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeField {
    pub base: f64,
    pub waves: Vec<[f64; 4]>,
    /// Ridge frequency in cycles per pixel.
    pub frequency: f64,
}

impl RidgeField {
    fn orientation(&self, x: f64, y: f64) -> f64 {
        self.base + self.waves.iter().map(|w| w[0] * (w[1] * x + w[2] * y + w[3]).sin()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTemplate {
    pub id: u64,
    pub side: usize,
    pub master: MinutiaeSet,
    pub field: RidgeField,
    /// Foreground ellipse `(cx, cy, rx, ry)` in template pixels.
    pub ellipse: [f64; 4],
}

impl IdentityTemplate {
    /// Template for `id`, a pure function of `(seed, id)`.
    pub fn generate(seed: u64, id: u64, side: usize) -> Result<Self> {
        if (side as f64) < 4.0 * MARGIN {
            return Err(Error::Config(format!("template side {side} is too small")));
        }
        let mut rng = stream(seed, id, u64::MAX);
        let s = side as f64;
        let target = rng.gen_range(MINUTIAE_RANGE.0..=MINUTIAE_RANGE.1);
        let mut points: Vec<Minutia> = Vec::with_capacity(target);
        let mut attempts = 0;
        while points.len() < target && attempts < 20_000 {
            attempts += 1;
            let x = rng.gen_range(MARGIN..s - MARGIN);
            let y = rng.gen_range(MARGIN..s - MARGIN);
            if points.iter().all(|p| (p.x - x).hypot(p.y - y) >= MIN_SEPARATION) {
                points.push(Minutia::new(x, y, rng.gen_range(0.0..360.0)));
            }
        }
        let waves = (0..3)
            .map(|_| {
                let k = 2.0 * PI / s;
                [
                    rng.gen_range(0.2..0.6),
                    rng.gen_range(-1.5..1.5) * k,
                    rng.gen_range(-1.5..1.5) * k,
                    rng.gen_range(0.0..2.0 * PI),
                ]
            })
            .collect();
        let field = RidgeField {
            base: rng.gen_range(0.0..PI),
            waves,
            frequency: rng.gen_range(0.03..0.045),
        };
        let ellipse = [
            s / 2.0 + rng.gen_range(-0.08..0.08) * s,
            s / 2.0 + rng.gen_range(-0.08..0.08) * s,
            rng.gen_range(0.34..0.46) * s,
            rng.gen_range(0.38..0.5) * s,
        ];
        Ok(Self {
            id,
            side,
            master: MinutiaeSet::new(side, side, points)?,
            field,
            ellipse,
        })
    }

    /// Gray level in `[0, 1]` at template coordinates `(x, y)`.
    fn intensity(&self, x: f64, y: f64) -> f64 {
        let theta = self.field.orientation(x, y);
        // coordinate across the ridges
        let across = -x * theta.sin() + y * theta.cos();
        let mut phase = 2.0 * PI * self.field.frequency * across;
        let r2max = SINGULARITY_RADIUS * SINGULARITY_RADIUS;
        for m in self.master.points() {
            let (dx, dy) = (x - m.x, y - m.y);
            let d2 = dx * dx + dy * dy;
            if d2 < r2max {
                let w = 1.0 - d2 / r2max;
                let turn = if m.theta() < 180.0 { 1.0 } else { -1.0 };
                phase += turn * w * w * (dy.atan2(dx) - m.theta().to_radians());
            }
        }
        let [cx, cy, rx, ry] = self.ellipse;
        let e = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
        // soft foreground mask
        let fg = 1.0 / (1.0 + ((e - 1.0) * 12.0).exp());
        0.5 + 0.5 * fg * phase.cos()
    }
}

/// Per-impression distortion bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionParams {
    pub max_translation: f64,
    pub max_rotation_deg: f64,
    pub dropout: f64,
    pub noise_std: f64,
    /// Contrast is drawn uniformly from `[1 − contrast_jitter, 1]`.
    pub contrast_jitter: f64,
    pub max_occlusions: usize,
    pub max_occlusion_size: usize,
}

impl Default for ImpressionParams {
    fn default() -> Self {
        Self {
            max_translation: 4.0,
            max_rotation_deg: 3.0,
            dropout: 0.1,
            noise_std: 0.08,
            contrast_jitter: 0.3,
            max_occlusions: 1,
            max_occlusion_size: 48,
        }
    }
}

impl ImpressionParams {
    /// No distortion at all: the impression reproduces the template.
    pub fn identity() -> Self {
        Self {
            max_translation: 0.0,
            max_rotation_deg: 0.0,
            dropout: 0.0,
            noise_std: 0.0,
            contrast_jitter: 0.0,
            max_occlusions: 0,
            max_occlusion_size: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = [self.max_translation, self.max_rotation_deg, self.noise_std]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite_nonneg || !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.contrast_jitter) {
            return Err(Error::Config(format!("invalid impression parameters {self:?}")));
        }
        Ok(())
    }
}

/// The rigid transform applied to one impression: rotate by `rotation_deg`
/// about the frame center, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub dx: f64,
    pub dy: f64,
    pub rotation_deg: f64,
}

impl RigidTransform {
    pub fn apply(&self, x: f64, y: f64, center: f64) -> (f64, f64) {
        if self.rotation_deg == 0.0 {
            return (x + self.dx, y + self.dy);
        }
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (u, v) = (x - center, y - center);
        (c * u - s * v + center + self.dx, s * u + c * v + center + self.dy)
    }

    pub fn invert(&self, x: f64, y: f64, center: f64) -> (f64, f64) {
        if self.rotation_deg == 0.0 {
            return (x - self.dx, y - self.dy);
        }
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (u, v) = (x - self.dx - center, y - self.dy - center);
        (c * u + s * v + center, -s * u + c * v + center)
    }
}

/// One rendered impression.
#[derive(Debug, Clone)]
pub struct Impression {
    pub identity: u64,
    pub index: u32,
    pub image: Image<f32>,
    pub minutiae: MinutiaeSet,
    pub transform: RigidTransform,
}

/// Render impression `index` of `template`; deterministic in
/// `(seed, template.id, index)`.
pub fn render_impression(
    template: &IdentityTemplate,
    index: u32,
    params: &ImpressionParams,
    seed: u64,
) -> Result<Impression> {
    params.validate()?;
    let mut rng = stream(seed, template.id, index as u64);
    let side = template.side;
    let s = side as f64;
    let center = (s - 1.0) / 2.0;
    let mut shrink = 1.0;
    let mut transform = None;
    for _ in 0..=MAX_RETRIES {
        let t = RigidTransform {
            dx: sym(&mut rng, params.max_translation * shrink),
            dy: sym(&mut rng, params.max_translation * shrink),
            rotation_deg: sym(&mut rng, params.max_rotation_deg * shrink),
        };
        let any_inside = template.master.points().iter().any(|m| {
            let (x, y) = t.apply(m.x, m.y, center);
            inside(x, y, s)
        });
        if any_inside {
            transform = Some(t);
            break;
        }
        shrink *= 0.5;
    }
    let transform = transform.ok_or_else(|| {
        Error::Generation(format!(
            "identity {} impression {index}: every minutia left the frame after {MAX_RETRIES} retries",
            template.id
        ))
    })?;

    let occlusions: Vec<[f64; 4]> = (0..rng.gen_range(0..=params.max_occlusions))
        .filter(|_| params.max_occlusion_size > 0)
        .map(|_| {
            let w = rng.gen_range(params.max_occlusion_size as f64 / 3.0..=params.max_occlusion_size as f64);
            let h = rng.gen_range(params.max_occlusion_size as f64 / 3.0..=params.max_occlusion_size as f64);
            let x0 = rng.gen_range(0.0..(s - w).max(1.0));
            let y0 = rng.gen_range(0.0..(s - h).max(1.0));
            [x0, y0, x0 + w, y0 + h]
        })
        .collect();
    let occluded = |x: f64, y: f64| occlusions.iter().any(|o| x >= o[0] && x < o[2] && y >= o[1] && y < o[3]);

    let mut points = Vec::new();
    for m in template.master.points() {
        let (x, y) = transform.apply(m.x, m.y, center);
        let dropped = params.dropout > 0.0 && rng.gen::<f64>() < params.dropout;
        if inside(x, y, s) && !dropped && !occluded(x, y) {
            points.push(Minutia::new(x, y, m.theta() + transform.rotation_deg));
        }
    }

    let contrast = 1.0 - rng.gen_range(0.0..=params.contrast_jitter);
    let noise = Normal::new(0.0, params.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let image = Image::from_fn(side, side, |row, col| {
        let (x, y) = (col as f64, row as f64);
        let v = if occluded(x, y) {
            0.5
        } else {
            let (tx, ty) = transform.invert(x, y, center);
            0.5 + contrast * (template.intensity(tx, ty) - 0.5)
        };
        let n = if params.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        (v + n).clamp(0.0, 1.0) as f32
    });

    Ok(Impression {
        identity: template.id,
        index,
        image,
        minutiae: MinutiaeSet::new(side, side, points)?,
        transform,
    })
}

fn sym(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.gen_range(-bound..=bound)
    } else {
        0.0
    }
}

fn inside(x: f64, y: f64, s: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x < s && y < s
}

/// Corpus shape and distortion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub side: usize,
    pub params: ImpressionParams,
    /// Identity ids are `first_id..first_id + num_identities`.
    pub first_id: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            side: DEFAULT_SIDE,
            params: ImpressionParams::default(),
            first_id: 0,
        }
    }
}

/// Render every impression of every identity in memory, ordered by
/// identity then impression.
pub fn generate_corpus(
    config: &SynthConfig,
    num_identities: usize,
    impressions_per_identity: usize,
    seed: u64,
) -> Result<Vec<Impression>> {
    let jobs: Vec<(u64, u32)> = (0..num_identities as u64)
        .flat_map(|i| (0..impressions_per_identity as u32).map(move |k| (config.first_id + i, k)))
        .collect();
    let templates: Vec<IdentityTemplate> = (0..num_identities as u64)
        .into_par_iter()
        .map(|i| IdentityTemplate::generate(seed, config.first_id + i, config.side))
        .collect::<Result<_>>()?;
    jobs.par_iter()
        .map(|&(id, k)| {
            let t = &templates[(id - config.first_id) as usize];
            render_impression(t, k, &config.params, seed)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub identity: u64,
    pub impression: u32,
    pub image_path: PathBuf,
    pub minutiae_path: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "identity,impression,image_path,minutiae_path";

/// Manifest CSV text; paths are written relative to the corpus directory.
pub fn encode_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.identity,
            e.impression,
            e.image_path.display(),
            e.minutiae_path.display()
        );
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{MANIFEST_HEADER}'"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let err = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 4 {
                return Err(err("expected 4 comma-separated fields"));
            }
            Ok(ManifestEntry {
                identity: f[0].parse().map_err(|_| err("bad identity"))?,
                impression: f[1].parse().map_err(|_| err("bad impression"))?,
                image_path: f[2].into(),
                minutiae_path: f[3].into(),
            })
        })
        .collect()
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    parse_manifest(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)
}

/// Render the corpus and write PGM images, MNT minutiae files and the manifest.
pub fn generate_dataset(
    config: &SynthConfig,
    num_identities: usize,
    impressions_per_identity: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>> {
    let out = out_dir.as_ref();
    for sub in ["images", "minutiae"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let corpus = generate_corpus(config, num_identities, impressions_per_identity, seed)?;
    let mut entries = Vec::with_capacity(corpus.len());
    for imp in &corpus {
        let stem = format!("{:06}_{:03}", imp.identity, imp.index);
        let image_path = PathBuf::from("images").join(format!("{stem}.pgm"));
        let minutiae_path = PathBuf::from("minutiae").join(format!("{stem}.mnt"));
        write_pgm(&imp.image, out.join(&image_path))?;
        write_minutiae_file(&imp.minutiae, out.join(&minutiae_path))?;
        entries.push(ManifestEntry {
            identity: imp.identity,
            impression: imp.index,
            image_path,
            minutiae_path,
        });
    }
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, encode_manifest(&entries)).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// Size of a one-to-one nearest-neighbour matching between two minutiae
/// sets: pairs within `dist` pixels and `angle_deg` degrees, matched
/// greedily closest-first.
pub fn minutiae_overlap(a: &[Minutia], b: &[Minutia], dist: f64, angle_deg: f64) -> usize {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = (p.x - q.x).hypot(p.y - q.y);
            if d <= dist && angle_diff(p.theta(), q.theta()) <= angle_deg {
                cands.push((d, i, j));
            }
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut ua, mut ub) = (vec![false; a.len()], vec![false; b.len()]);
    let mut n = 0;
    for (_, i, j) in cands {
        if !ua[i] && !ub[j] {
            ua[i] = true;
            ub[j] = true;
            n += 1;
        }
    }
    n
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Overlap after rigid alignment: every minutia pair votes for a
/// rotation and translation, and the best-supported hypotheses are scored
/// with [`minutiae_overlap`].
pub fn aligned_overlap(a: &MinutiaeSet, b: &MinutiaeSet, dist: f64, angle_deg: f64) -> usize {
    const BIN_XY: f64 = 4.0;
    const BIN_DEG: f64 = 5.0;
    let center = (a.width() as f64 - 1.0) / 2.0;
    let mut votes: std::collections::HashMap<(i64, i64, i64), usize> = std::collections::HashMap::new();
    for p in a.points() {
        for q in b.points() {
            let rot = {
                let d = (q.theta() - p.theta()).rem_euclid(360.0);
                if d > 180.0 { d - 360.0 } else { d }
            };
            if rot.abs() > 30.0 {
                continue;
            }
            let t = RigidTransform { dx: 0.0, dy: 0.0, rotation_deg: rot };
            let (rx, ry) = t.apply(p.x, p.y, center);
            let key = (
                ((q.x - rx) / BIN_XY).round() as i64,
                ((q.y - ry) / BIN_XY).round() as i64,
                (rot / BIN_DEG).round() as i64,
            );
            *votes.entry(key).or_default() += 1;
        }
    }
    let mut ranked: Vec<_> = votes.into_iter().collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut best = minutiae_overlap(a.points(), b.points(), dist, angle_deg);
    for ((kx, ky, kr), _) in ranked.into_iter().take(3) {
        let t = RigidTransform {
            dx: kx as f64 * BIN_XY,
            dy: ky as f64 * BIN_XY,
            rotation_deg: kr as f64 * BIN_DEG,
        };
        let moved: Vec<Minutia> = a
            .points()
            .iter()
            .map(|p| {
                let (x, y) = t.apply(p.x, p.y, center);
                Minutia::new(x, y, p.theta() + t.rotation_deg)
            })
            .collect();
        best = best.max(minutiae_overlap(&moved, b.points(), dist, angle_deg));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_impression_reproduces_template() {
        let t = IdentityTemplate::generate(3, 17, DEFAULT_SIDE).unwrap();
        let imp = render_impression(&t, 0, &ImpressionParams::identity(), 3).unwrap();
        assert!(imp.minutiae.set_eq(&t.master));
        assert!((MINUTIAE_RANGE.0..=MINUTIAE_RANGE.1).contains(&t.master.len()));
    }

    #[test]
    fn master_minutiae_are_separated() {
        for id in 0..10 {
            let t = IdentityTemplate::generate(1, id, DEFAULT_SIDE).unwrap();
            let p = t.master.points();
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    assert!((p[i].x - p[j].x).hypot(p[i].y - p[j].y) >= MIN_SEPARATION);
                }
            }
        }
    }

    #[test]
    fn pure_translation_shifts_minutiae() {
        let t = IdentityTemplate::generate(5, 2, DEFAULT_SIDE).unwrap();
        let params = ImpressionParams {
            max_translation: 10.0,
            ..ImpressionParams::identity()
        };
        let imp = render_impression(&t, 4, &params, 5).unwrap();
        let (dx, dy) = (imp.transform.dx, imp.transform.dy);
        let expected: Vec<Minutia> = t
            .master
            .points()
            .iter()
            .map(|m| Minutia::new(m.x + dx, m.y + dy, m.theta()))
            .filter(|m| inside(m.x, m.y, DEFAULT_SIDE as f64))
            .collect();
        assert!(imp.minutiae.set_eq(&MinutiaeSet::new(DEFAULT_SIDE, DEFAULT_SIDE, expected).unwrap()));
    }

    #[test]
    fn rendering_is_deterministic_and_bounded() {
        let t = IdentityTemplate::generate(9, 1, DEFAULT_SIDE).unwrap();
        let p = ImpressionParams::default();
        let a = render_impression(&t, 2, &p, 9).unwrap();
        let b = render_impression(&t, 2, &p, 9).unwrap();
        assert_eq!(a.image, b.image);
        assert!(a.minutiae.set_eq(&b.minutiae));
        assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn transform_round_trip() {
        let t = RigidTransform { dx: 3.0, dy: -7.5, rotation_deg: 8.0 };
        let (x, y) = t.apply(40.0, 90.0, 111.5);
        let (bx, by) = t.invert(x, y, 111.5);
        assert!((bx - 40.0).abs() < 1e-9 && (by - 90.0).abs() < 1e-9);
    }

    #[test]
    fn manifest_round_trip() {
        let e = vec![ManifestEntry {
            identity: 3,
            impression: 1,
            image_path: "images/a.pgm".into(),
            minutiae_path: "minutiae/a.mnt".into(),
        }];
        assert_eq!(parse_manifest(&encode_manifest(&e)).unwrap(), e);
        assert!(matches!(parse_manifest("nope\n"), Err(Error::Parse { line: 1, .. })));
    }
}
