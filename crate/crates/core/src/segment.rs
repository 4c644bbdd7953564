//! Character segmentation: connected-component labeling, two-line
//! splitting, reading order and glyph cropping.

use thiserror::Error;

use crate::imgcore::{self, BinaryImage, RgbImage};
use crate::platefind::Box2D;

/// Side length of a cropped glyph.
pub const GLYPH_SIZE: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("no boxes to split")]
    EmptyInput,
    #[error("box {0:?} lies outside the {1}x{2} plate")]
    BoxOutOfBounds(Box2D, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4" => Ok(Self::Four),
            "8" => Ok(Self::Eight),
            other => Err(format!("connectivity must be 4 or 8, got `{other}`")),
        }
    }
}

impl std::fmt::Display for Connectivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Four => "4",
            Self::Eight => "8",
        })
    }
}

/// Per-pixel component labels; 0 is background, components are `1..=count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling. Final labels follow the raster order in
/// which each component is first encountered.
pub fn label_components(img: &BinaryImage, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (img.width(), img.height());
    let src = img.as_raw();
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    // Already-visited neighbors in raster order.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };
    for y in 0..h {
        for x in 0..w {
            if !src[y * w + x] {
                continue;
            }
            let mut label = 0u32;
            for &(dx, dy) in back {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize {
                    continue;
                }
                let n = provisional[ny as usize * w + nx as usize];
                if n == 0 {
                    continue;
                }
                if label == 0 {
                    label = n;
                } else if n != label {
                    union(&mut parent, label, n);
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[y * w + x] = label;
        }
    }
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0u32;
    for p in provisional.iter_mut() {
        if *p == 0 {
            continue;
        }
        let root = find(&mut parent, *p);
        if remap[root as usize] == 0 {
            count += 1;
            remap[root as usize] = count;
        }
        *p = remap[root as usize];
    }
    LabelMap {
        width: w,
        height: h,
        labels: provisional,
        count: count as usize,
    }
}

/// One cropped character ready for classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub image: RgbImage,
    pub source_box: Box2D,
    pub line_index: usize,
    pub position_in_line: usize,
}

/// Splits boxes into an upper and a lower text line with a 1-D 2-means on
/// vertical centers, seeded at a quarter and three quarters of the plate
/// height. When every center lies within `0.15 * plate_h` of the others the
/// plate is treated as a single line.
pub fn split_lines(boxes: &[Box2D], plate_h: usize) -> Result<(Vec<Box2D>, Vec<Box2D>), SegmentError> {
    if boxes.is_empty() {
        return Err(SegmentError::EmptyInput);
    }
    let centers: Vec<f64> = boxes.iter().map(Box2D::center_y).collect();
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.15 * plate_h as f64 {
        return Ok((boxes.to_vec(), Vec::new()));
    }
    let mut means = [0.25 * plate_h as f64, 0.75 * plate_h as f64];
    let mut assign = vec![0usize; boxes.len()];
    for _ in 0..100 {
        let next: Vec<usize> = centers
            .iter()
            .map(|&c| usize::from((c - means[1]).abs() < (c - means[0]).abs()))
            .collect();
        let mut new_means = means;
        for (k, m) in new_means.iter_mut().enumerate() {
            let members: Vec<f64> = centers.iter().zip(&next).filter(|(_, &a)| a == k).map(|(&c, _)| c).collect();
            if !members.is_empty() {
                *m = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        let converged = next == assign && new_means == means;
        assign = next;
        means = new_means;
        if converged {
            break;
        }
    }
    let (mut line1, mut line2) = (Vec::new(), Vec::new());
    for (b, &a) in boxes.iter().zip(&assign) {
        if a == 0 {
            line1.push(*b)
        } else {
            line2.push(*b)
        }
    }
    if line1.is_empty() {
        std::mem::swap(&mut line1, &mut line2);
    }
    Ok((line1, line2))
}

fn median_usize(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

/// Merges horizontally adjacent boxes of one line that are closer than
/// `0.25 * median_width` and overlap vertically by more than half of the
/// shorter box. Repairs words whose connector stroke broke apart.
pub fn merge_matra_fragments(line: &[Box2D], median_width: f64) -> Vec<Box2D> {
    let mut boxes = line.to_vec();
    boxes.sort_by_key(|b| (b.x, b.y));
    let max_gap = 0.25 * median_width;
    let mut merged = true;
    while merged {
        merged = false;
        'scan: for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (a, b) = (boxes[i], boxes[j]);
                let (left, right) = if a.x <= b.x { (a, b) } else { (b, a) };
                let gap = right.x as f64 - left.right() as f64;
                let overlap = a.bottom().min(b.bottom()) as f64 - a.y.max(b.y) as f64;
                if gap < max_gap && overlap > 0.5 * a.h.min(b.h) as f64 {
                    boxes[i] = a.union(&b);
                    boxes.remove(j);
                    merged = true;
                    break 'scan;
                }
            }
        }
    }
    boxes.sort_by_key(|b| (b.x, b.y));
    boxes
}

/// Median width over all boxes on both lines; 0 when there are none.
pub fn median_box_width(line1: &[Box2D], line2: &[Box2D]) -> f64 {
    let mut widths: Vec<usize> = line1.iter().chain(line2).map(|b| b.w).collect();
    if widths.is_empty() {
        return 0.0;
    }
    median_usize(&mut widths)
}

/// Per-channel median of the 1-px border ring.
pub fn border_color(plate: &RgbImage) -> [u8; 3] {
    let (w, h) = (plate.width(), plate.height());
    let mut ring = Vec::new();
    for x in 0..w {
        ring.push(plate.get(x, 0));
        if h > 1 {
            ring.push(plate.get(x, h - 1));
        }
    }
    for y in 1..h.saturating_sub(1) {
        ring.push(plate.get(0, y));
        if w > 1 {
            ring.push(plate.get(w - 1, y));
        }
    }
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut vals: Vec<u8> = ring.iter().map(|p| p[c]).collect();
        vals.sort_unstable();
        *o = vals[(vals.len() - 1) / 2];
    }
    out
}

/// Crops `b`, centers it on a square canvas of `background` whose side is
/// the longer box side plus `margin_frac` of it on every edge, and resizes
/// to [`GLYPH_SIZE`].
pub fn crop_glyph(plate: &RgbImage, b: Box2D, background: [u8; 3], margin_frac: f64) -> RgbImage {
    let crop = plate.crop(b.x, b.y, b.w, b.h);
    let side = b.w.max(b.h);
    let margin = (side as f64 * margin_frac).round() as usize;
    let canvas_side = side + 2 * margin;
    let mut canvas = RgbImage::filled(canvas_side, canvas_side, background);
    let ox = margin + (side - b.w) / 2;
    let oy = margin + (side - b.h) / 2;
    for y in 0..b.h {
        for x in 0..b.w {
            canvas.put(ox + x, oy + y, crop.get(x, y));
        }
    }
    imgcore::resize(&canvas, GLYPH_SIZE, GLYPH_SIZE).expect("non-zero glyph size")
}

/// Glyphs in reading order: the upper line left to right, then the lower.
pub fn order_and_crop(
    plate: &RgbImage,
    line1: &[Box2D],
    line2: &[Box2D],
    margin_frac: f64,
) -> Result<Vec<Glyph>, SegmentError> {
    let (w, h) = (plate.width(), plate.height());
    if let Some(b) = line1.iter().chain(line2).find(|b| !b.fits_in(w, h)) {
        return Err(SegmentError::BoxOutOfBounds(*b, w, h));
    }
    let background = border_color(plate);
    let mut glyphs = Vec::with_capacity(line1.len() + line2.len());
    for (line_index, line) in [line1, line2].into_iter().enumerate() {
        let mut sorted = line.to_vec();
        sorted.sort_by_key(|b| (b.x, b.y));
        for (position_in_line, b) in sorted.into_iter().enumerate() {
            glyphs.push(Glyph {
                image: crop_glyph(plate, b, background, margin_frac),
                source_box: b,
                line_index,
                position_in_line,
            });
        }
    }
    Ok(glyphs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(w: usize, h: usize, rows: &[&str]) -> BinaryImage {
        let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryImage::from_raw(w, h, data).unwrap()
    }

    #[test]
    fn empty_image_has_zero_components() {
        let lm = label_components(&BinaryImage::new(5, 4), Connectivity::Eight);
        assert_eq!(lm.count(), 0);
        assert!(lm.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let img = mask(2, 2, &["#.", ".#"]);
        assert_eq!(label_components(&img, Connectivity::Eight).count(), 1);
        assert_eq!(label_components(&img, Connectivity::Four).count(), 2);
    }

    #[test]
    fn labels_follow_first_encounter_order() {
        let img = mask(5, 3, &["..#.#", "#...#", "#.###"]);
        let lm = label_components(&img, Connectivity::Four);
        assert_eq!(lm.labels(), &[0, 0, 1, 0, 2, 3, 0, 0, 0, 2, 3, 0, 2, 2, 2]);
    }

    #[test]
    fn u_shape_merges_late() {
        // Two arms joined only on the bottom row.
        let img = mask(3, 3, &["#.#", "#.#", "###"]);
        let lm = label_components(&img, Connectivity::Four);
        assert_eq!(lm.count(), 1);
        assert!(lm.labels().iter().all(|&l| l <= 1));
    }

    #[test]
    fn bridged_shapes_form_one_component() {
        // Two rings joined by a one-pixel horizontal bridge.
        let img = mask(
            9,
            4,
            &["###...###", "#.#####.#", "#.#...#.#", "###...###"],
        );
        assert_eq!(label_components(&img, Connectivity::Eight).count(), 1);
    }

    /// Recursive flood fill; returns a label per pixel.
    fn flood_oracle(img: &BinaryImage, eight: bool) -> Vec<u32> {
        fn visit(img: &BinaryImage, out: &mut [u32], x: isize, y: isize, l: u32, eight: bool) {
            let (w, h) = (img.width() as isize, img.height() as isize);
            if x < 0 || y < 0 || x >= w || y >= h {
                return;
            }
            let i = (y * w + x) as usize;
            if !img.as_raw()[i] || out[i] != 0 {
                return;
            }
            out[i] = l;
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                visit(img, out, x + dx, y + dy, l, eight);
            }
            if eight {
                for (dx, dy) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
                    visit(img, out, x + dx, y + dy, l, eight);
                }
            }
        }
        let mut out = vec![0u32; img.as_raw().len()];
        let mut next = 0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.get(x, y) && out[y * img.width() + x] == 0 {
                    next += 1;
                    visit(img, &mut out, x as isize, y as isize, next, eight);
                }
            }
        }
        out
    }

    #[test]
    fn labeling_matches_flood_fill_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &density in &[0.2, 0.5, 0.8] {
            for _ in 0..10 {
                let img = BinaryImage::from_raw(24, 24, (0..576).map(|_| rng.gen_bool(density)).collect()).unwrap();
                for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
                    // Both number components in raster first-encounter order,
                    // so the labelings must agree exactly.
                    assert_eq!(label_components(&img, conn).labels(), flood_oracle(&img, eight).as_slice());
                }
            }
        }
    }

    fn b(x: usize, y: usize, w: usize, h: usize) -> Box2D {
        Box2D::new(x, y, w, h)
    }

    #[test]
    fn split_at_seed_centers() {
        // plate_h = 100: centers 25 and 75.
        let up = b(10, 15, 8, 20);
        let down = b(10, 65, 8, 20);
        assert_eq!(split_lines(&[down, up], 100).unwrap(), (vec![up], vec![down]));
    }

    #[test]
    fn split_collapses_single_line() {
        let boxes = vec![b(0, 40, 5, 20), b(10, 40, 5, 20), b(20, 40, 5, 20)];
        assert_eq!(split_lines(&boxes, 100).unwrap(), (boxes.clone(), vec![]));
        assert_eq!(split_lines(&[], 100), Err(SegmentError::EmptyInput));
    }

    #[test]
    fn split_fixture_three_over_six() {
        // 128-high plate: a word, a letter and a wide city name on top
        // (centers around 30), six digits below (centers around 92).
        let upper = vec![b(10, 10, 60, 40), b(80, 14, 20, 34), b(110, 12, 70, 36)];
        let lower: Vec<Box2D> = (0..6).map(|i| b(10 + i * 30, 70 + (i % 2) * 3, 18, 40)).collect();
        let mut all = lower.clone();
        all.extend(&upper);
        let (l1, l2) = split_lines(&all, 128).unwrap();
        let mut l1s = l1.clone();
        l1s.sort();
        let mut up = upper.clone();
        up.sort();
        assert_eq!(l1s, up);
        assert_eq!(l2.len(), 6);
        assert!(lower.iter().all(|d| l2.contains(d)));
    }

    #[test]
    fn matra_merge_joins_close_fragments_only() {
        let median = 20.0; // max gap 5
        let line = vec![b(0, 10, 15, 30), b(18, 12, 15, 28), b(60, 10, 15, 30)];
        let merged = merge_matra_fragments(&line, median);
        assert_eq!(merged, vec![b(0, 10, 33, 30), b(60, 10, 15, 30)]);
        // Vertically disjoint fragments are not joined.
        let stacked = vec![b(0, 0, 10, 10), b(12, 20, 10, 10)];
        assert_eq!(merge_matra_fragments(&stacked, median), stacked);
    }

    #[test]
    fn single_box_covering_plate_is_identity_crop() {
        let data: Vec<u8> = (0..32 * 32 * 3).map(|i| (i % 251) as u8).collect();
        let plate = RgbImage::from_raw(32, 32, data).unwrap();
        let glyphs = order_and_crop(&plate, &[b(0, 0, 32, 32)], &[], 0.0).unwrap();
        assert_eq!(glyphs.len(), 1);
        assert_eq!(glyphs[0].image, plate);
    }

    #[test]
    fn positions_follow_x_order() {
        let plate = RgbImage::filled(40, 40, [200; 3]);
        let glyphs = order_and_crop(&plate, &[], &[b(20, 20, 5, 10), b(5, 20, 5, 10)], 0.1).unwrap();
        assert_eq!(glyphs[0].source_box.x, 5);
        assert_eq!((glyphs[0].line_index, glyphs[0].position_in_line), (1, 0));
        assert_eq!((glyphs[1].source_box.x, glyphs[1].position_in_line), (20, 1));
        assert!(glyphs.iter().all(|g| g.image.width() == 32 && g.image.height() == 32));
    }

    #[test]
    fn out_of_bounds_box_is_rejected() {
        let plate = RgbImage::filled(10, 10, [0; 3]);
        assert!(matches!(
            order_and_crop(&plate, &[b(5, 5, 6, 2)], &[], 0.0),
            Err(SegmentError::BoxOutOfBounds(..))
        ));
    }

    #[test]
    fn fixture_reading_order() {
        // Dark marks on a light plate: upper line "B A" at x 40, 10;
        // lower line three marks at x 50, 5, 25.
        let mut plate = RgbImage::filled(80, 60, [220; 3]);
        let mut put_mark = |bx: Box2D, v: u8| {
            for y in bx.y..bx.bottom() {
                for x in bx.x..bx.right() {
                    plate.put(x, y, [v; 3]);
                }
            }
        };
        let marks = [
            (b(40, 5, 10, 15), 10u8),
            (b(10, 5, 10, 15), 20),
            (b(50, 35, 8, 15), 30),
            (b(5, 35, 8, 15), 40),
            (b(25, 35, 8, 15), 50),
        ];
        for &(bx, v) in &marks {
            put_mark(bx, v);
        }
        let boxes: Vec<Box2D> = marks.iter().map(|m| m.0).collect();
        let (l1, l2) = split_lines(&boxes, 60).unwrap();
        let glyphs = order_and_crop(&plate, &l1, &l2, 0.0).unwrap();
        let centers: Vec<u8> = glyphs.iter().map(|g| g.image.get(16, 16)[0]).collect();
        assert_eq!(centers, vec![20, 10, 40, 50, 30]);
    }

    #[test]
    fn border_color_is_ring_median() {
        let mut plate = RgbImage::filled(5, 5, [0; 3]);
        for x in 0..5 {
            plate.put(x, 0, [100, 110, 120]);
            plate.put(x, 4, [100, 110, 120]);
        }
        for y in 1..4 {
            plate.put(0, y, [100, 110, 120]);
        }
        assert_eq!(border_color(&plate), [100, 110, 120]);
    }

    proptest! {
        #[test]
        fn pixel_counts_and_transpose(data in proptest::collection::vec(any::<bool>(), 7 * 9)) {
            let img = BinaryImage::from_raw(7, 9, data.clone()).unwrap();
            let t: Vec<bool> = (0..7).flat_map(|x| (0..9).map(move |y| (x, y))).map(|(x, y)| data[y * 7 + x]).collect();
            let timg = BinaryImage::from_raw(9, 7, t).unwrap();
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let lm = label_components(&img, conn);
                prop_assert_eq!(lm.count(), label_components(&timg, conn).count());
                let mut sizes = vec![0usize; lm.count() + 1];
                for &l in lm.labels() {
                    sizes[l as usize] += 1;
                }
                prop_assert_eq!(sizes[1..].iter().sum::<usize>(), img.count_foreground());
                prop_assert!(sizes[1..].iter().all(|&s| s > 0));
            }
        }

        #[test]
        fn split_is_partition(raw in proptest::collection::vec((0usize..90, 0usize..90, 1usize..10, 1usize..10), 1..15)) {
            let boxes: Vec<Box2D> = raw.into_iter().map(|(x, y, w, h)| Box2D::new(x, y, w, h)).collect();
            let (l1, l2) = split_lines(&boxes, 100).unwrap();
            prop_assert_eq!(l1.len() + l2.len(), boxes.len());
            let mut joined: Vec<Box2D> = l1.into_iter().chain(l2).collect();
            joined.sort();
            let mut orig = boxes.clone();
            orig.sort();
            prop_assert_eq!(joined, orig);
        }
    }
}
