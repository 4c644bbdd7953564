//! Candidate character regions: component bounding boxes and size filtering.

use serde::{Deserialize, Serialize};

use crate::imgcore::BinaryImage;
use crate::segment::{label_components, Connectivity};

/// Axis-aligned box, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Box2D {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Box2D {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn center_y(&self) -> f64 {
        self.y as f64 + self.h as f64 / 2.0
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Box2D) -> Box2D {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        Box2D {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxFilterConfig {
    pub min_h_frac: f64,
    pub max_h_frac: f64,
    pub min_w_frac: f64,
    pub max_w_frac: f64,
    pub min_area_px: usize,
}

impl Default for BoxFilterConfig {
    fn default() -> Self {
        Self {
            min_h_frac: 0.15,
            max_h_frac: 0.90,
            min_w_frac: 0.01,
            max_w_frac: 0.95,
            min_area_px: 10,
        }
    }
}

impl BoxFilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, lo, hi) in [
            ("h", self.min_h_frac, self.max_h_frac),
            ("w", self.min_w_frac, self.max_w_frac),
        ] {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(format!("box filter {name} fractions need 0 <= min < max <= 1, got {lo}..{hi}"));
            }
        }
        Ok(())
    }
}

/// Tight bounding box of every connected foreground component, ordered by
/// the `(y, x)` of the top-left corner.
pub fn component_boxes(img: &BinaryImage, connectivity: Connectivity) -> Vec<Box2D> {
    let labels = label_components(img, connectivity);
    // (min_x, min_y, max_x, max_y) per label
    let mut ext = vec![(usize::MAX, usize::MAX, 0usize, 0usize); labels.count()];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let l = labels.get(x, y);
            if l == 0 {
                continue;
            }
            let e = &mut ext[l as usize - 1];
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
        }
    }
    let mut boxes: Vec<Box2D> = ext
        .into_iter()
        .map(|(x0, y0, x1, y1)| Box2D::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
        .collect();
    boxes.sort_by_key(|b| (b.y, b.x));
    boxes
}

/// Keeps boxes whose height and width fractions and area fall in range.
/// Input order is preserved.
pub fn filter_character_boxes(
    boxes: &[Box2D],
    plate_w: usize,
    plate_h: usize,
    cfg: &BoxFilterConfig,
) -> Vec<Box2D> {
    let (pw, ph) = (plate_w as f64, plate_h as f64);
    boxes
        .iter()
        .copied()
        .filter(|b| {
            let (h, w) = (b.h as f64, b.w as f64);
            h >= cfg.min_h_frac * ph
                && h <= cfg.max_h_frac * ph
                && w >= cfg.min_w_frac * pw
                && w <= cfg.max_w_frac * pw
                && b.area() >= cfg.min_area_px
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn fill(img: &mut BinaryImage, b: Box2D) {
        for y in b.y..b.bottom() {
            for x in b.x..b.right() {
                img.put(x, y, true);
            }
        }
    }

    #[test]
    fn empty_image_has_no_boxes() {
        assert!(component_boxes(&BinaryImage::new(8, 8), Connectivity::Eight).is_empty());
    }

    #[test]
    fn two_blocks() {
        let mut img = BinaryImage::new(8, 8);
        fill(&mut img, Box2D::new(5, 5, 2, 2));
        fill(&mut img, Box2D::new(0, 0, 2, 2));
        assert_eq!(
            component_boxes(&img, Connectivity::Eight),
            vec![Box2D::new(0, 0, 2, 2), Box2D::new(5, 5, 2, 2)]
        );
    }

    /// Flood fill from every unvisited foreground pixel, tracking extents.
    fn boxes_oracle(img: &BinaryImage, eight: bool) -> BTreeSet<Box2D> {
        let (w, h) = (img.width(), img.height());
        let mut seen = vec![false; w * h];
        let mut out = BTreeSet::new();
        for sy in 0..h {
            for sx in 0..w {
                if !img.get(sx, sy) || seen[sy * w + sx] {
                    continue;
                }
                let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
                let mut stack = vec![(sx, sy)];
                seen[sy * w + sx] = true;
                while let Some((x, y)) = stack.pop() {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                                continue;
                            }
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                continue;
                            }
                            let (nx, ny) = (nx as usize, ny as usize);
                            if img.get(nx, ny) && !seen[ny * w + nx] {
                                seen[ny * w + nx] = true;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
                out.insert(Box2D::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1));
            }
        }
        out
    }

    #[test]
    fn boxes_match_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for i in 0..100 {
            let density = [0.1, 0.3, 0.5, 0.7][i % 4];
            let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
            let img = BinaryImage::from_raw(w, h, (0..w * h).map(|_| rng.gen_bool(density)).collect()).unwrap();
            for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
                let got = component_boxes(&img, conn);
                assert!(got.windows(2).all(|p| (p[0].y, p[0].x) <= (p[1].y, p[1].x)));
                let as_set: BTreeSet<Box2D> = got.iter().copied().collect();
                // Distinct components can share a box, so compare multiplicity too.
                assert_eq!(got.len(), label_components(&img, conn).count());
                assert_eq!(as_set, boxes_oracle(&img, eight));
            }
        }
    }

    #[test]
    fn full_plate_box_is_rejected() {
        let cfg = BoxFilterConfig::default();
        assert!(filter_character_boxes(&[Box2D::new(0, 0, 100, 50)], 100, 50, &cfg).is_empty());
        assert!(filter_character_boxes(&[], 100, 50, &cfg).is_empty());
    }

    #[test]
    fn specks_are_dropped_digits_kept() {
        // 200x100 plate: six 14x40 digits along the bottom, three 1px specks.
        let mut img = BinaryImage::new(200, 100);
        let digits: Vec<Box2D> = (0..6).map(|i| Box2D::new(10 + i * 30, 50, 14, 40)).collect();
        for &d in &digits {
            fill(&mut img, d);
        }
        for (x, y) in [(3, 3), (190, 10), (100, 30)] {
            img.put(x, y, true);
        }
        let boxes = component_boxes(&img, Connectivity::Eight);
        assert_eq!(boxes.len(), 9);
        // Thresholds applied by hand: 15 <= h <= 90, 2 <= w <= 190, area >= 10.
        // The digits (h=40, w=14, area=560) pass; the specks (h=1) fail.
        let kept = filter_character_boxes(&boxes, 200, 100, &BoxFilterConfig::default());
        assert_eq!(kept, digits);
    }

    #[test]
    fn config_validation() {
        assert!(BoxFilterConfig::default().validate().is_ok());
        let bad = BoxFilterConfig { min_h_frac: 0.5, max_h_frac: 0.4, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn boxes_are_tight(data in proptest::collection::vec(any::<bool>(), 100)) {
            let img = BinaryImage::from_raw(10, 10, data).unwrap();
            let labels = label_components(&img, Connectivity::Eight);
            let boxes = component_boxes(&img, Connectivity::Eight);
            for b in &boxes {
                // The component owning this box is the label of any of its pixels
                // touching the top edge; every side must be touched by that component.
                let owners: BTreeSet<u32> = (b.x..b.right()).map(|x| labels.get(x, b.y)).filter(|&l| l != 0).collect();
                let mut tight = false;
                for &l in &owners {
                    let row = |y: usize| (b.x..b.right()).any(|x| labels.get(x, y) == l);
                    let col = |x: usize| (b.y..b.bottom()).any(|y| labels.get(x, y) == l);
                    tight |= row(b.y) && row(b.bottom() - 1) && col(b.x) && col(b.right() - 1);
                }
                prop_assert!(tight, "box {:?} not tight", b);
            }
        }

        #[test]
        fn filter_is_subset_and_idempotent(raw in proptest::collection::vec((0usize..50, 0usize..30, 1usize..50, 1usize..30), 0..20)) {
            let boxes: Vec<Box2D> = raw.into_iter().map(|(x, y, w, h)| Box2D::new(x, y, w.min(50 - x), h.min(30 - y))).collect();
            let cfg = BoxFilterConfig::default();
            let once = filter_character_boxes(&boxes, 50, 30, &cfg);
            prop_assert!(once.iter().all(|b| boxes.contains(b)));
            prop_assert_eq!(filter_character_boxes(&once, 50, 30, &cfg), once);
        }
    }
}
