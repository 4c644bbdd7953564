//! Seeded synthetic glyphs and two-line plates.
//!
//! Each class has a stroke prototype drawn in a unit box: digits are narrow,
//! letters hang from a top bar, and city words are wide with several
//! sub-shapes hanging from one long bar. Every prototype is a single
//! connected stroke set, so it segments as one component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{transliterate, DatasetSplits, LabeledGlyph, NUM_CLASSES};
use crate::imgcore::RgbImage;
use crate::segment::GLYPH_SIZE;

type Pt = (f64, f64);

struct Prototype {
    /// Ink width over ink height.
    aspect: f64,
    /// Stroke width over ink height.
    stroke: f64,
    paths: Vec<Vec<Pt>>,
}

fn poly(pts: &[Pt]) -> Vec<Pt> {
    pts.to_vec()
}

/// Elliptic arc in unit-box coordinates; angles in degrees, 90 points down.
fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64) -> Vec<Pt> {
    let steps = ((a1 - a0).abs() / 10.0).ceil().max(2.0) as usize;
    (0..=steps)
        .map(|i| {
            let a = (a0 + (a1 - a0) * i as f64 / steps as f64).to_radians();
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn ring(cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<Pt> {
    arc(cx, cy, rx, ry, 0.0, 360.0)
}

const BAR: [Pt; 2] = [(0.0, 0.0), (1.0, 0.0)];

fn prototype(label: usize) -> Prototype {
    let digit = |paths| Prototype {
        aspect: 0.62,
        stroke: 0.13,
        paths,
    };
    let letter = |mut paths: Vec<Vec<Pt>>| {
        paths.push(poly(&BAR));
        Prototype {
            aspect: 0.9,
            stroke: 0.12,
            paths,
        }
    };
    let city = |aspect, mut paths: Vec<Vec<Pt>>| {
        paths.push(poly(&BAR));
        Prototype {
            aspect,
            stroke: 0.11,
            paths,
        }
    };
    match label {
        0 => digit(vec![ring(0.5, 0.5, 0.5, 0.5)]),
        1 => digit(vec![
            poly(&[(0.2, 0.25), (0.6, 0.0), (0.6, 1.0)]),
            poly(&[(0.2, 1.0), (0.95, 1.0)]),
        ]),
        2 => {
            let mut top = arc(0.5, 0.28, 0.45, 0.28, 180.0, 390.0);
            top.extend([(0.0, 1.0), (1.0, 1.0)]);
            digit(vec![top])
        }
        3 => digit(vec![
            arc(0.47, 0.26, 0.43, 0.26, 200.0, 450.0),
            arc(0.47, 0.74, 0.48, 0.26, 270.0, 520.0),
        ]),
        4 => digit(vec![poly(&[(0.72, 1.0), (0.72, 0.0), (0.0, 0.68), (1.0, 0.68)])]),
        5 => {
            let mut p = poly(&[(0.95, 0.0), (0.15, 0.0), (0.1, 0.47)]);
            p.extend(arc(0.5, 0.7, 0.45, 0.3, 215.0, 505.0));
            digit(vec![p])
        }
        6 => digit(vec![
            ring(0.5, 0.71, 0.45, 0.29),
            arc(0.8, 0.71, 0.75, 0.71, 180.0, 265.0),
        ]),
        7 => digit(vec![poly(&[(0.0, 0.0), (1.0, 0.0), (0.35, 1.0)])]),
        8 => digit(vec![ring(0.5, 0.25, 0.38, 0.25), ring(0.5, 0.73, 0.48, 0.27)]),
        9 => digit(vec![
            ring(0.5, 0.29, 0.45, 0.29),
            poly(&[(0.95, 0.29), (0.85, 0.7), (0.45, 1.0)]),
        ]),
        10 => letter(vec![
            poly(&[(0.45, 0.0), (0.45, 1.0)]),
            ring(0.68, 0.58, 0.27, 0.22),
        ]),
        11 => {
            let mut u = poly(&[(0.15, 0.0), (0.15, 0.6)]);
            u.extend(arc(0.475, 0.6, 0.325, 0.35, 180.0, 0.0));
            letter(vec![u, poly(&[(0.8, 0.0), (0.8, 1.0)])])
        }
        12 => letter(vec![
            poly(&[(0.1, 0.0), (0.1, 0.4), (0.5, 0.7), (0.88, 0.4), (0.88, 0.0)]),
            poly(&[(0.5, 0.7), (0.5, 1.0)]),
        ]),
        13 => letter(vec![
            poly(&[(0.85, 0.0), (0.85, 0.66)]),
            ring(0.45, 0.66, 0.38, 0.32),
        ]),
        14 => city(
            2.0,
            vec![
                poly(&[(0.15, 0.0), (0.15, 0.3)]),
                ring(0.15, 0.62, 0.12, 0.32),
                poly(&[(0.5, 0.0), (0.5, 1.0), (0.36, 0.8)]),
                poly(&[(0.85, 0.0), (0.85, 1.0)]),
                poly(&[(0.85, 0.45), (0.66, 0.18)]),
            ],
        ),
        15 => city(
            3.2,
            vec![
                poly(&[(0.06, 0.0), (0.06, 1.0)]),
                poly(&[(0.27, 0.0), (0.27, 0.35)]),
                ring(0.27, 0.66, 0.07, 0.31),
                poly(&[(0.42, 0.0), (0.5, 1.0), (0.58, 0.0)]),
                poly(&[(0.73, 0.0), (0.73, 1.0)]),
                poly(&[(0.73, 0.5), (0.64, 0.78)]),
                poly(&[(0.93, 0.0), (0.93, 1.0), (0.86, 0.88)]),
            ],
        ),
        16 => city(
            2.5,
            vec![
                poly(&[(0.04, 0.0), (0.04, 0.55), (0.2, 0.85), (0.2, 0.0)]),
                poly(&[(0.42, 0.0), (0.42, 0.2)]),
                ring(0.42, 0.57, 0.1, 0.37),
                poly(&[(0.7, 0.0), (0.7, 1.0)]),
                poly(&[(0.58, 0.5), (0.7, 0.5)]),
                poly(&[(0.9, 0.0), (0.9, 0.2)]),
                arc(0.9, 0.5, 0.09, 0.3, 270.0, 450.0),
            ],
        ),
        _ => unreachable!("label checked by caller"),
    }
}

/// Placement of one glyph on a canvas.
#[derive(Debug, Clone, Copy)]
struct Placement {
    cx: f64,
    cy: f64,
    ink_h: f64,
    rotation: f64,
    /// Stroke width multiplier.
    weight: f64,
    /// Width in pixels of the anti-aliased edge ramp.
    softness: f64,
}

/// Adds a glyph's coverage (0..1) into `cov`, keeping the maximum.
fn draw(cov: &mut [f64], w: usize, h: usize, proto: &Prototype, p: Placement) {
    let ink_w = proto.aspect * p.ink_h;
    let sw = proto.stroke * p.ink_h * p.weight;
    let (gw, gh) = ((ink_w - sw).max(0.0), p.ink_h - sw);
    let (x0, y0) = (p.cx - gw / 2.0, p.cy - gh / 2.0);
    let (s, c) = p.rotation.sin_cos();
    let map = |(u, v): Pt| {
        let (dx, dy) = (x0 + u * gw - p.cx, y0 + v * gh - p.cy);
        (p.cx + dx * c - dy * s, p.cy + dx * s + dy * c)
    };
    let mut segs = Vec::new();
    for path in &proto.paths {
        let pts: Vec<Pt> = path.iter().map(|&q| map(q)).collect();
        segs.extend(pts.windows(2).map(|pair| (pair[0], pair[1])));
    }
    let reach = sw / 2.0 + p.softness;
    let (mut bx0, mut by0, mut bx1, mut by1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &((ax, ay), (bx, by)) in &segs {
        bx0 = bx0.min(ax.min(bx));
        by0 = by0.min(ay.min(by));
        bx1 = bx1.max(ax.max(bx));
        by1 = by1.max(ay.max(by));
    }
    let xs = (bx0 - reach).floor().max(0.0) as usize;
    let ys = (by0 - reach).floor().max(0.0) as usize;
    let xe = ((bx1 + reach).ceil().max(0.0) as usize).min(w);
    let ye = ((by1 + reach).ceil().max(0.0) as usize).min(h);
    for y in ys..ye {
        for x in xs..xe {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = segs
                .iter()
                .map(|&(a, b)| segment_distance((px, py), a, b))
                .fold(f64::MAX, f64::min);
            let v = ((sw / 2.0 - d) / p.softness + 0.5).clamp(0.0, 1.0);
            let slot = &mut cov[y * w + x];
            *slot = slot.max(v);
        }
    }
}

fn segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * vx - p.0, a.1 + t * vy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn compose(cov: &[f64], w: usize, h: usize, bg: [f64; 3], fg: [f64; 3], noise: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut data = Vec::with_capacity(w * h * 3);
    for &a in cov {
        for c in 0..3 {
            let v = bg[c] + (fg[c] - bg[c]) * a;
            let n = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            data.push((v + n).round().clamp(0.0, 255.0) as u8);
        }
    }
    RgbImage::from_raw(w, h, data).expect("buffer sized for image")
}

fn tinted(rng: &mut ChaCha8Rng, base: f64, tint: f64) -> [f64; 3] {
    [0, 1, 2].map(|_| base + rng.gen_range(-tint..=tint))
}

/// Random variation applied to each training glyph.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphJitter {
    pub shift_px: f64,
    pub scale: f64,
    pub rotation_deg: f64,
    pub noise_sigma: f64,
    /// Longer ink side, in pixels of the 32×32 glyph.
    pub nominal_extent: f64,
}

impl Default for GlyphJitter {
    fn default() -> Self {
        Self {
            shift_px: 2.0,
            scale: 0.10,
            rotation_deg: 5.0,
            noise_sigma: 8.0,
            nominal_extent: 27.0,
        }
    }
}

/// Renders one 32×32 glyph of class `label`.
///
/// # Panics
/// If `label` is not below 17.
pub fn render_glyph(label: usize, jitter: &GlyphJitter, rng: &mut ChaCha8Rng) -> RgbImage {
    assert!(label < NUM_CLASSES, "label {label} out of range");
    let proto = prototype(label);
    let n = GLYPH_SIZE;
    let extent = jitter.nominal_extent * (1.0 + rng.gen_range(-jitter.scale..=jitter.scale));
    let ink_h = if proto.aspect <= 1.0 {
        extent
    } else {
        extent / proto.aspect
    };
    let shift = jitter.shift_px;
    let place = Placement {
        cx: n as f64 / 2.0 + rng.gen_range(-shift..=shift),
        cy: n as f64 / 2.0 + rng.gen_range(-shift..=shift),
        ink_h,
        rotation: rng.gen_range(-jitter.rotation_deg..=jitter.rotation_deg).to_radians(),
        weight: rng.gen_range(0.8..1.25),
        softness: rng.gen_range(1.0..2.5),
    };
    let mut cov = vec![0.0; n * n];
    draw(&mut cov, n, n, &proto, place);
    let bg_base = rng.gen_range(150.0..240.0);
    let bg = tinted(rng, bg_base, 10.0);
    let fg_base = rng.gen_range(10.0..90.0);
    let fg = tinted(rng, fg_base, 10.0);
    compose(&cov, n, n, bg, fg, jitter.noise_sigma, rng)
}

fn synth_split(rng: &mut ChaCha8Rng, per_class: usize, jitter: &GlyphJitter) -> Vec<LabeledGlyph> {
    let mut out = Vec::with_capacity(per_class * NUM_CLASSES);
    for label in 0..NUM_CLASSES {
        for _ in 0..per_class {
            out.push(LabeledGlyph {
                image: render_glyph(label, jitter, rng),
                label,
            });
        }
    }
    out
}

/// Seeded synthetic dataset with the given per-class split sizes.
/// Each split draws from its own stream, so changing one size leaves the
/// other splits unchanged.
pub fn synth_glyphs(seed: u64, train: usize, valid: usize, test: usize) -> DatasetSplits {
    let jitter = GlyphJitter::default();
    let mut sets = [train, valid, test].into_iter().enumerate().map(|(i, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        synth_split(&mut rng, n, &jitter)
    });
    let (tr, va, te) = (sets.next().unwrap(), sets.next().unwrap(), sets.next().unwrap());
    DatasetSplits::new(tr, va, te)
}

/// Class labels of a plate: the upper line (optional city, then letter)
/// and the lower line of digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlateSpec {
    pub line1: Vec<usize>,
    pub line2: Vec<usize>,
}

impl PlateSpec {
    /// The transliterated reading, upper line first.
    pub fn truth(&self) -> String {
        self.line1
            .iter()
            .chain(&self.line2)
            .map(|&l| transliterate(l).expect("labels in vocabulary"))
            .collect()
    }
}

/// A city (most of the time) and a letter over six digits.
pub fn random_plate_spec(rng: &mut ChaCha8Rng) -> PlateSpec {
    let mut line1 = Vec::new();
    if rng.gen_bool(0.8) {
        line1.push(rng.gen_range(14..17));
    }
    line1.push(rng.gen_range(10..14));
    let line2 = (0..6).map(|_| rng.gen_range(0..10)).collect();
    PlateSpec { line1, line2 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateStyle {
    /// Output height; the plate is drawn `supersample` times larger and
    /// area-averaged down.
    pub height: usize,
    pub supersample: usize,
    pub noise_sigma: f64,
    /// Small dark specks scattered over the plate.
    pub specks: usize,
    /// Draw a dash between the second and third digit.
    pub dash: bool,
}

impl Default for PlateStyle {
    fn default() -> Self {
        Self {
            height: 48,
            supersample: 4,
            noise_sigma: 4.0,
            specks: 4,
            dash: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPlate {
    pub image: RgbImage,
    pub spec: PlateSpec,
    pub truth: String,
}

fn area_downsample(cov: &[f64], w: usize, h: usize, k: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / k, h / k);
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh * k {
        for x in 0..ow * k {
            out[(y / k) * ow + x / k] += cov[y * w + x];
        }
    }
    let norm = 1.0 / (k * k) as f64;
    out.iter_mut().for_each(|v| *v *= norm);
    (out, ow, oh)
}

/// Renders a low-resolution plate photo for `spec`.
///
/// # Panics
/// If a label is out of range or the style has a zero size.
pub fn render_plate(spec: &PlateSpec, style: &PlateStyle, rng: &mut ChaCha8Rng) -> RenderedPlate {
    assert!(style.height > 0 && style.supersample > 0, "plate style needs non-zero size");
    let k = style.supersample;
    let hh = (style.height * k) as f64;
    let digit_h = 0.32 * hh;
    let digit_w = prototype(0).aspect * digit_h;
    let gap2 = 0.08 * hh;
    let dash_slot = if style.dash { 0.2 * hh } else { 0.0 };
    let n2 = spec.line2.len() as f64;
    let line2_w = n2 * digit_w + (n2 - 1.0).max(0.0) * gap2 + dash_slot;
    let h1 = 0.26 * hh;
    let gap1 = 0.16 * hh;
    let line1_w: f64 =
        spec.line1.iter().map(|&l| prototype(l).aspect * h1).sum::<f64>() + (spec.line1.len().saturating_sub(1)) as f64 * gap1;
    let margin = 0.14 * hh;
    let w = (((line1_w.max(line2_w) + 2.0 * margin) / k as f64).ceil() as usize * k).max(k);
    let h = style.height * k;
    let mut cov = vec![0.0; w * h];
    let softness = 1.5 * k as f64 / 2.0;
    let place = |cx: f64, cy: f64, ink_h: f64, rng: &mut ChaCha8Rng| Placement {
        cx: cx + rng.gen_range(-0.01..=0.01) * hh,
        cy: cy + rng.gen_range(-0.01..=0.01) * hh,
        ink_h: ink_h * rng.gen_range(0.97..1.03),
        rotation: rng.gen_range(-1.5f64..1.5).to_radians(),
        weight: rng.gen_range(0.9..1.1),
        softness,
    };

    let mut x = (w as f64 - line1_w) / 2.0;
    for &l in &spec.line1 {
        let proto = prototype(l);
        let iw = proto.aspect * h1;
        let p = place(x + iw / 2.0, 0.27 * hh, h1, rng);
        draw(&mut cov, w, h, &proto, p);
        x += iw + gap1;
    }
    let mut x = (w as f64 - line2_w) / 2.0;
    let y2 = 0.70 * hh;
    for (i, &l) in spec.line2.iter().enumerate() {
        let proto = prototype(l);
        let p = place(x + digit_w / 2.0, y2, digit_h, rng);
        draw(&mut cov, w, h, &proto, p);
        x += digit_w + gap2;
        if style.dash && i == 1 {
            let dash = Prototype {
                aspect: 1.0,
                stroke: 0.2,
                paths: vec![poly(&[(0.0, 0.5), (1.0, 0.5)])],
            };
            let p = Placement {
                cx: x + dash_slot / 2.0 - gap2 / 2.0,
                cy: y2,
                ink_h: 0.1 * hh,
                rotation: 0.0,
                weight: 1.0,
                softness,
            };
            draw(&mut cov, w, h, &dash, p);
            x += dash_slot;
        }
    }
    for _ in 0..style.specks {
        let r = rng.gen_range(0.008..0.02) * hh;
        let speck = Prototype {
            aspect: 1.0,
            stroke: 1.0,
            paths: vec![poly(&[(0.5, 0.5), (0.5, 0.5)])],
        };
        let p = Placement {
            cx: rng.gen_range(0.05..0.95) * w as f64,
            cy: rng.gen_range(0.05..0.95) * hh,
            ink_h: 2.0 * r,
            rotation: 0.0,
            weight: 1.0,
            softness,
        };
        draw(&mut cov, w, h, &speck, p);
    }

    let (small, sw, sh) = area_downsample(&cov, w, h, k);
    let bg_base = rng.gen_range(200.0..235.0);
    let bg = tinted(rng, bg_base, 8.0);
    let fg_base = rng.gen_range(15.0..60.0);
    let fg = tinted(rng, fg_base, 8.0);
    let image = compose(&small, sw, sh, bg, fg, style.noise_sigma, rng);
    RenderedPlate {
        image,
        truth: spec.truth(),
        spec: spec.clone(),
    }
}

/// `count` random plates drawn from one seeded stream.
pub fn synth_plates(seed: u64, count: usize, style: &PlateStyle) -> Vec<RenderedPlate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let spec = random_plate_spec(&mut rng);
            render_plate(&spec, style, &mut rng)
        })
        .collect()
}
