//! Rasterization of crack patterns into coverage images and binary masks.
//!
//! Edges are drawn as anti-aliased capsules whose width tapers linearly from
//! the configured stroke width at the impact toward 1 px at branch tips, the
//! way real cracks thin out. Coverage is fractional at the boundary so the
//! downstream blend stays soft.

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::stress::CrackPattern;

const NO_EDGE: u32 = u32::MAX;

/// Grayscale crack coverage in `[0, 1]` plus the dominant edge per pixel.
#[derive(Debug, Clone)]
pub struct CrackImage {
    width: u32,
    height: u32,
    intensity: Vec<f32>,
    edge_ids: Vec<u32>,
    stroke_width: f32,
}

impl CrackImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn stroke_width(&self) -> f32 {
        self.stroke_width
    }

    pub fn intensity(&self, x: u32, y: u32) -> f32 {
        self.intensity[(y * self.width + x) as usize]
    }

    /// Index of the pattern edge that painted this pixel, if any.
    pub fn edge_id(&self, x: u32, y: u32) -> Option<usize> {
        match self.edge_ids[(y * self.width + x) as usize] {
            NO_EDGE => None,
            id => Some(id as usize),
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.intensity.iter().filter(|&&v| v > 0.0).count()
    }

    pub(crate) fn pixels(&self) -> &[f32] {
        &self.intensity
    }

    pub(crate) fn edge_ids(&self) -> &[u32] {
        &self.edge_ids
    }

    pub fn to_gray_image(&self) -> image::GrayImage {
        let buf: Vec<u8> = self
            .intensity
            .iter()
            .map(|&v| ((v as f64) * 255.0).clamp(0.0, 255.0).round_ties_even() as u8)
            .collect();
        image::GrayImage::from_raw(self.width, self.height, buf).unwrap()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray_image().save(path)?;
        Ok(())
    }
}

/// Per-pixel crack localization mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new_false(width: u32, height: u32) -> BinaryMask {
        BinaryMask {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn true_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }

    pub fn to_gray_image(&self) -> image::GrayImage {
        let buf: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, buf).unwrap()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray_image().save(path)?;
        Ok(())
    }
}

/// Draws every pattern edge as an anti-aliased tapered segment. Coordinates
/// outside the image are clipped, never an error; an empty pattern yields an
/// all-zero image.
pub fn rasterize(
    pattern: &CrackPattern,
    width: u32,
    height: u32,
    stroke_width: f32,
) -> Result<CrackImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if !(stroke_width >= 1.0) {
        return Err(Error::invalid("stroke width must be at least 1 px"));
    }
    let mut img = CrackImage {
        width,
        height,
        intensity: vec![0.0; (width * height) as usize],
        edge_ids: vec![NO_EDGE; (width * height) as usize],
        stroke_width,
    };
    if pattern.edges.is_empty() {
        return Ok(img);
    }

    let widths = node_widths(pattern, stroke_width);
    for (edge_index, e) in pattern.edges.iter().enumerate() {
        draw_capsule(
            &mut img,
            pattern.nodes[e.a],
            pattern.nodes[e.b],
            widths[e.a] * 0.5,
            widths[e.b] * 0.5,
            edge_index as u32,
        );
    }
    Ok(img)
}

/// Per-node stroke width: proportional to the node's remaining tree height so
/// the impact draws at full width and every tip thins to 1 px.
fn node_widths(pattern: &CrackPattern, stroke_width: f32) -> Vec<f32> {
    let n = pattern.nodes.len();
    let mut adjacency = vec![Vec::new(); n];
    for e in &pattern.edges {
        adjacency[e.a].push(e.b);
        adjacency[e.b].push(e.a);
    }

    // BFS orders from the impact root (extra components root at their lowest
    // unvisited node), then heights accumulate in reverse visit order.
    let root = pattern.impact_node.unwrap_or(0).min(n.saturating_sub(1));
    let mut order = Vec::with_capacity(n);
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let enqueue = |start: usize, seen: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        seen[start] = true;
        queue.push_back(start);
    };
    enqueue(root, &mut seen, &mut queue);
    let mut next_root = 0;
    loop {
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = v;
                    queue.push_back(w);
                }
            }
        }
        while next_root < n && seen[next_root] {
            next_root += 1;
        }
        if next_root == n {
            break;
        }
        enqueue(next_root, &mut seen, &mut queue);
    }

    let mut heights = vec![0usize; n];
    for &v in order.iter().rev() {
        let p = parent[v];
        if p != usize::MAX {
            heights[p] = heights[p].max(heights[v] + 1);
        }
    }
    let max_height = heights.iter().copied().max().unwrap_or(0).max(1) as f32;

    heights
        .iter()
        .map(|&h| 1.0 + (stroke_width - 1.0) * h as f32 / max_height)
        .collect()
}

fn draw_capsule(img: &mut CrackImage, a: Point2, b: Point2, half_a: f32, half_b: f32, id: u32) {
    let seg = b - a;
    let len_sq = seg.norm_sq();
    let pad = half_a.max(half_b) as f64 + 1.0;

    let x_min = (a.x.min(b.x) - pad).floor().max(0.0) as u32;
    let x_max = (a.x.max(b.x) + pad).ceil().min(img.width as f64) as u32;
    let y_min = (a.y.min(b.y) - pad).floor().max(0.0) as u32;
    let y_max = (a.y.max(b.y) + pad).ceil().min(img.height as f64) as u32;
    if x_min >= x_max || y_min >= y_max {
        return;
    }

    for py in y_min..y_max {
        for px in x_min..x_max {
            let p = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
            let t = if len_sq > 0.0 {
                ((p - a).dot(seg) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let closest = a.lerp(b, t);
            let dist = p.distance(closest) as f32;
            let hw = half_a + (half_b - half_a) * t as f32;
            let coverage = (hw - dist + 0.5).clamp(0.0, 1.0);
            if coverage > 0.0 {
                let at = (py * img.width + px) as usize;
                if coverage > img.intensity[at] {
                    img.intensity[at] = coverage;
                    img.edge_ids[at] = id;
                }
            }
        }
    }
}

/// Thresholds the coverage at zero and dilates by a disk of the given radius.
pub fn crack_mask(img: &CrackImage, dilation: u32) -> BinaryMask {
    let mut mask = BinaryMask::new_false(img.width, img.height);
    let base: Vec<(u32, u32)> = (0..img.height)
        .flat_map(|y| (0..img.width).map(move |x| (x, y)))
        .filter(|&(x, y)| img.intensity(x, y) > 0.0)
        .collect();

    if dilation == 0 {
        for (x, y) in base {
            mask.set(x, y, true);
        }
        return mask;
    }

    let d = dilation as i64;
    let mut disk = Vec::new();
    for dy in -d..=d {
        for dx in -d..=d {
            if dx * dx + dy * dy <= d * d {
                disk.push((dx, dy));
            }
        }
    }
    for (x, y) in base {
        for &(dx, dy) in &disk {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as u32) < img.width && (ny as u32) < img.height {
                mask.set(nx as u32, ny as u32, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stress::PatternEdge;

    fn pattern(nodes: Vec<Point2>, edges: Vec<(usize, usize)>) -> CrackPattern {
        CrackPattern {
            nodes,
            edges: edges
                .into_iter()
                .map(|(a, b)| PatternEdge { a, b, stress: 400.0 })
                .collect(),
            impact_node: Some(0),
        }
    }

    #[test]
    fn empty_pattern_is_all_zero() {
        let img = rasterize(&CrackPattern::default(), 32, 16, 2.0).unwrap();
        assert_eq!(img.nonzero_count(), 0);
        let mask = crack_mask(&img, 3);
        assert_eq!(mask.true_count(), 0);
    }

    #[test]
    fn horizontal_unit_stroke_stays_in_band() {
        let p = pattern(
            vec![Point2::new(10.0, 5.0), Point2::new(20.0, 5.0)],
            vec![(0, 1)],
        );
        let img = rasterize(&p, 32, 12, 1.0).unwrap();
        assert!(img.nonzero_count() > 0);
        for y in 0..12 {
            for x in 0..32 {
                if img.intensity(x, y) > 0.0 {
                    assert!((4..=6).contains(&y), "row {y} lit");
                    assert!((9..=21).contains(&x), "col {x} lit");
                }
            }
        }
    }

    #[test]
    fn nonzero_count_tracks_analytic_area() {
        // Star of long edges: analytic ink is edge length x stroke width.
        let c = Point2::new(150.0, 150.0);
        let nodes = vec![
            c,
            Point2::new(250.0, 150.0),
            Point2::new(150.0, 250.0),
            Point2::new(50.0, 150.0),
            Point2::new(150.0, 50.0),
            Point2::new(220.0, 220.0),
        ];
        let edges = vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)];
        let total_len: f64 = edges
            .iter()
            .map(|&(a, b)| nodes[a].distance(nodes[b]))
            .sum();
        let p = pattern(nodes, edges);
        let stroke = 3.0;
        let img = rasterize(&p, 300, 300, stroke).unwrap();
        let expect = total_len * stroke as f64;
        let got = img.nonzero_count() as f64;
        assert!(
            (got - expect).abs() <= 0.2 * expect,
            "nonzero {got} vs analytic {expect}"
        );
    }

    #[test]
    fn out_of_bounds_nodes_are_clipped() {
        let p = pattern(
            vec![Point2::new(-50.0, -50.0), Point2::new(100.0, 100.0)],
            vec![(0, 1)],
        );
        let img = rasterize(&p, 40, 40, 2.0).unwrap();
        assert!(img.nonzero_count() > 0);
    }

    #[test]
    fn mask_without_dilation_equals_support() {
        let p = pattern(
            vec![Point2::new(2.0, 2.0), Point2::new(12.0, 9.0)],
            vec![(0, 1)],
        );
        let img = rasterize(&p, 16, 16, 2.0).unwrap();
        let mask = crack_mask(&img, 0);
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(mask.get(x, y), img.intensity(x, y) > 0.0);
            }
        }
    }

    #[test]
    fn single_pixel_dilation_is_a_disk() {
        let mut img = CrackImage {
            width: 21,
            height: 21,
            intensity: vec![0.0; 21 * 21],
            edge_ids: vec![NO_EDGE; 21 * 21],
            stroke_width: 1.0,
        };
        img.intensity[(10 * 21 + 10) as usize] = 1.0;
        let mask = crack_mask(&img, 2);
        // Disk of radius 2: offsets with dx^2 + dy^2 <= 4.
        let disk_size = (-2i32..=2)
            .flat_map(|dy| (-2i32..=2).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx * dx + dy * dy <= 4)
            .count();
        assert_eq!(mask.true_count(), disk_size);
    }

    #[test]
    fn dilation_is_monotone_and_contains_support() {
        let p = pattern(
            vec![Point2::new(5.0, 5.0), Point2::new(25.0, 20.0), Point2::new(10.0, 25.0)],
            vec![(0, 1), (0, 2)],
        );
        let img = rasterize(&p, 32, 32, 2.0).unwrap();
        let m0 = crack_mask(&img, 0);
        let m2 = crack_mask(&img, 2);
        let m4 = crack_mask(&img, 4);
        assert!(m0.is_subset_of(&m2));
        assert!(m2.is_subset_of(&m4));
        for y in 0..32 {
            for x in 0..32 {
                if img.intensity(x, y) > 0.0 {
                    assert!(m0.get(x, y) && m2.get(x, y) && m4.get(x, y));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = CrackPattern::default();
        assert!(rasterize(&p, 0, 10, 2.0).is_err());
        assert!(rasterize(&p, 10, 10, 0.5).is_err());
    }
}
