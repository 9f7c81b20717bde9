//! Procedural glyph fixture: seeded stroke programs rendered with integer
//! rasterization, a clean template per class plus jittered "handwritten"
//! samples. Dark ink on a white page, like scanned character images.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{save_manifest, save_pgm, GrayImage, Manifest, ManifestEntry};
use crate::error::{Error, Result};

pub const GLYPH_SIDE: usize = 64;
const MARGIN: i32 = 8;
const CURVE_STEPS: i32 = 16;
const MAX_RETRIES: u64 = 200;

pub type Point = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stroke {
    Line { from: Point, to: Point },
    Curve { from: Point, ctrl: Point, to: Point },
}

/// Per-sample distortion amplitudes, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Jitter {
    /// Each control point moves by the sum of two uniform draws in `[-endpoint, endpoint]`.
    pub endpoint: i32,
    /// Pen radius varies uniformly in `[-thickness, thickness]` around the class radius.
    pub thickness: i32,
    /// Horizontal shear of up to `shear/16` pixels per row from the center.
    pub shear: i32,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            endpoint: 2,
            thickness: 1,
            shear: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlyphClassSpec {
    pub class_id: u32,
    pub strokes: Vec<Stroke>,
    pub radius: i32,
    pub jitter: Jitter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    Template,
    Sample(u64),
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Strokes join points of a coarse anchor lattice, so classes are different
/// combinations drawn from one shared stroke vocabulary.
const LATTICE: i32 = 5;
const LATTICE_STEP: i32 = (GLYPH_SIDE as i32 - 2 * MARGIN) / (LATTICE - 1);

fn anchor(i: i32, j: i32) -> Point {
    (MARGIN + i * LATTICE_STEP, MARGIN + j * LATTICE_STEP)
}

fn random_anchor_pair(rng: &mut ChaCha8Rng) -> ((i32, i32), (i32, i32)) {
    loop {
        let a = (rng.random_range(0..LATTICE), rng.random_range(0..LATTICE));
        let b = (
            a.0 + rng.random_range(-2..=2),
            a.1 + rng.random_range(-2..=2),
        );
        let inside = (0..LATTICE).contains(&b.0) && (0..LATTICE).contains(&b.1);
        if inside && (a.0 - b.0).abs().max((a.1 - b.1).abs()) >= 1 {
            return (a, b);
        }
    }
}

/// Deterministic stroke program with `complexity` strokes.
pub fn gen_class(class_id: u32, seed: u64, complexity: usize) -> Result<GlyphClassSpec> {
    if complexity < 2 {
        return Err(Error::Glyph(format!("complexity {complexity} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strokes: Vec<Stroke> = Vec::with_capacity(complexity);
    while strokes.len() < complexity {
        let (a, b) = random_anchor_pair(&mut rng);
        let (from, to) = (anchor(a.0, a.1), anchor(b.0, b.1));
        let stroke = if rng.random_bool(0.3) {
            // bow the stroke sideways by half a lattice step
            let (mx, my) = ((from.0 + to.0) / 2, (from.1 + to.1) / 2);
            let (nx, ny) = (-(to.1 - from.1).signum(), (to.0 - from.0).signum());
            let bow = if rng.random_bool(0.5) { 1 } else { -1 } * LATTICE_STEP / 2;
            Stroke::Curve {
                from,
                ctrl: (mx + nx * bow, my + ny * bow),
                to,
            }
        } else {
            Stroke::Line { from, to }
        };
        if !strokes.contains(&stroke) {
            strokes.push(stroke);
        }
    }
    Ok(GlyphClassSpec {
        class_id,
        strokes,
        radius: 2,
        jitter: Jitter::default(),
    })
}

fn stamp(img: &mut GrayImage, (cx, cy): Point, radius: i32) {
    let side = GLYPH_SIDE as i32;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            let (x, y) = (cx + dx, cy + dy);
            if (0..side).contains(&x) && (0..side).contains(&y) {
                img.set(x as usize, y as usize, 0);
            }
        }
    }
}

fn draw_line(img: &mut GrayImage, (x0, y0): Point, (x1, y1): Point, radius: i32) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        stamp(img, (x, y), radius);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn bezier_point(p0: Point, p1: Point, p2: Point, k: i32) -> Point {
    let n = CURVE_STEPS;
    let (a, b, c) = ((n - k) * (n - k), 2 * k * (n - k), k * k);
    let den = n * n;
    let round = |v: i32| (v + den / 2).div_euclid(den);
    (
        round(a * p0.0 + b * p1.0 + c * p2.0),
        round(a * p0.1 + b * p1.1 + c * p2.1),
    )
}

fn draw_curve(img: &mut GrayImage, p0: Point, p1: Point, p2: Point, radius: i32) {
    let mut prev = p0;
    for k in 1..=CURVE_STEPS {
        let next = bezier_point(p0, p1, p2, k);
        draw_line(img, prev, next, radius);
        prev = next;
    }
}

/// Renders a glyph as white background (255) with black strokes (0).
/// Template mode draws the stroke program exactly; sample mode applies the
/// class jitter drawn from `seed`.
pub fn render(spec: &GlyphClassSpec, mode: RenderMode) -> GrayImage {
    let mut img = GrayImage::filled(GLYPH_SIDE, GLYPH_SIDE, 255).expect("non-empty canvas");
    let (mut rng, j) = match mode {
        RenderMode::Template => (
            None,
            Jitter {
                endpoint: 0,
                thickness: 0,
                shear: 0,
            },
        ),
        RenderMode::Sample(seed) => (Some(ChaCha8Rng::seed_from_u64(seed)), spec.jitter),
    };
    let draw = |r: &mut Option<ChaCha8Rng>, lo: i32, hi: i32| match r {
        Some(rng) if hi > lo => rng.random_range(lo..=hi),
        _ => 0,
    };
    let shear = draw(&mut rng, -j.shear, j.shear);
    let center = GLYPH_SIDE as i32 / 2;
    let mut warp = |p: Point| -> Point {
        let ox = draw(&mut rng, -j.endpoint, j.endpoint) + draw(&mut rng, -j.endpoint, j.endpoint);
        let oy = draw(&mut rng, -j.endpoint, j.endpoint) + draw(&mut rng, -j.endpoint, j.endpoint);
        let x = p.0 + ox + ((p.1 - center) * shear).div_euclid(16);
        (x, p.1 + oy)
    };
    let mut strokes = Vec::with_capacity(spec.strokes.len());
    for s in &spec.strokes {
        strokes.push(match *s {
            Stroke::Line { from, to } => Stroke::Line {
                from: warp(from),
                to: warp(to),
            },
            Stroke::Curve { from, ctrl, to } => Stroke::Curve {
                from: warp(from),
                ctrl: warp(ctrl),
                to: warp(to),
            },
        });
    }
    let mut radius_rng = match mode {
        RenderMode::Template => None,
        RenderMode::Sample(seed) => Some(ChaCha8Rng::seed_from_u64(mix(seed, 0x7ad1))),
    };
    for s in strokes {
        let radius = (spec.radius + draw(&mut radius_rng, -j.thickness, j.thickness)).max(1);
        match s {
            Stroke::Line { from, to } => draw_line(&mut img, from, to, radius),
            Stroke::Curve { from, ctrl, to } => draw_curve(&mut img, from, ctrl, to, radius),
        }
    }
    img
}

pub fn l1_distance(a: &GrayImage, b: &GrayImage) -> u64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
        .sum()
}

/// `count` classes whose templates are pairwise at least `min_l1` apart.
pub fn gen_classes(
    count: usize,
    seed: u64,
    complexity: usize,
    min_l1: u64,
) -> Result<Vec<GlyphClassSpec>> {
    let mut specs: Vec<GlyphClassSpec> = Vec::with_capacity(count);
    let mut templates: Vec<GrayImage> = Vec::with_capacity(count);
    for class_id in 0..count as u32 {
        let mut accepted = false;
        for attempt in 0..MAX_RETRIES {
            let spec = gen_class(
                class_id,
                mix(mix(seed, class_id as u64 + 1), attempt),
                complexity,
            )?;
            let t = render(&spec, RenderMode::Template);
            if templates.iter().all(|o| l1_distance(o, &t) >= min_l1) {
                specs.push(spec);
                templates.push(t);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Distinctness(count));
        }
    }
    Ok(specs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToyConfig {
    pub classes: usize,
    pub samples: usize,
    pub seed: u64,
    pub complexity: usize,
    pub min_l1: u64,
    pub jitter: Jitter,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            classes: 10,
            samples: 20,
            seed: 7,
            complexity: 4,
            min_l1: 255 * 300,
            jitter: Jitter::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyFixture {
    pub classes: Vec<GlyphClassSpec>,
    pub templates: Vec<GrayImage>,
    pub samples: Vec<Vec<GrayImage>>,
}

pub fn generate_fixture(cfg: &ToyConfig) -> Result<ToyFixture> {
    let mut classes = gen_classes(cfg.classes, cfg.seed, cfg.complexity, cfg.min_l1)?;
    for c in &mut classes {
        c.jitter = cfg.jitter;
    }
    let templates = classes
        .iter()
        .map(|c| render(c, RenderMode::Template))
        .collect();
    let samples = classes
        .iter()
        .map(|c| {
            (0..cfg.samples as u64)
                .map(|i| {
                    render(
                        c,
                        RenderMode::Sample(mix(mix(cfg.seed ^ 0x5a17, c.class_id as u64), i)),
                    )
                })
                .collect()
        })
        .collect();
    Ok(ToyFixture {
        classes,
        templates,
        samples,
    })
}

/// Writes `samples/`, `manifest.tsv`, `templates/` and `templates.tsv` under `dir`.
pub fn write_fixture(fixture: &ToyFixture, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["samples", "templates"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut sample_entries = Vec::new();
    for (c, imgs) in fixture.samples.iter().enumerate() {
        for (i, img) in imgs.iter().enumerate() {
            let rel = format!("samples/c{c:04}_{i:04}.pgm");
            save_pgm(img, dir.join(&rel))?;
            sample_entries.push(ManifestEntry {
                path: rel,
                class_id: c as u32,
            });
        }
    }
    let mut template_entries = Vec::new();
    for (c, img) in fixture.templates.iter().enumerate() {
        let rel = format!("templates/t{c:04}.pgm");
        save_pgm(img, dir.join(&rel))?;
        template_entries.push(ManifestEntry {
            path: rel,
            class_id: c as u32,
        });
    }
    save_manifest(
        &Manifest::new(dir, sample_entries),
        dir.join("manifest.tsv"),
    )?;
    save_manifest(
        &Manifest::new(dir, template_entries),
        dir.join("templates.tsv"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_program() {
        assert_eq!(gen_class(0, 99, 3).unwrap(), gen_class(0, 99, 3).unwrap());
        assert_ne!(
            gen_class(0, 99, 3).unwrap().strokes,
            gen_class(0, 98, 3).unwrap().strokes
        );
    }

    #[test]
    fn complexity_one_rejected() {
        assert!(matches!(gen_class(0, 1, 1), Err(Error::Glyph(_))));
    }

    #[test]
    fn template_render_is_stable_and_inked() {
        let spec = gen_class(3, 5, 3).unwrap();
        let a = render(&spec, RenderMode::Template);
        assert_eq!(a, render(&spec, RenderMode::Template));
        assert!(a.pixels().contains(&0));
        assert!(a.pixels().contains(&255));
    }

    #[test]
    fn samples_differ_from_template() {
        let spec = gen_class(3, 5, 3).unwrap();
        let t = render(&spec, RenderMode::Template);
        let s = render(&spec, RenderMode::Sample(1));
        assert_ne!(t, s);
        assert_eq!(s, render(&spec, RenderMode::Sample(1)));
    }

    #[test]
    fn distinctness_floor_holds() {
        let floor = 255 * 300;
        let specs = gen_classes(6, 4, 3, floor).unwrap();
        let t: Vec<_> = specs
            .iter()
            .map(|s| render(s, RenderMode::Template))
            .collect();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                assert!(l1_distance(&t[i], &t[j]) >= floor);
            }
        }
    }

    #[test]
    fn impossible_floor_errors() {
        assert!(matches!(
            gen_classes(3, 1, 2, u64::MAX),
            Err(Error::Distinctness(3))
        ));
    }
}
