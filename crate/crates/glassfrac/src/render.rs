//! Photometric crack shading and compositing.
//!
//! Every crack segment acts as a tiny mirror: it emits nothing and reflects
//! the light source according to how its in-plane normal faces the azimuth
//! and zenith light directions. The mean incident energy per segment,
//! normalized by the pattern total, scales the light color into a per-edge
//! crack intensity. Compositing alpha-blends the shaded crack onto a source
//! image and defocuses either the crack region (far focus: the scene is
//! sharp) or the scene itself (short focus: the crack is sharp).

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::raster::{BinaryMask, CrackImage};
use crate::stress::CrackPattern;

pub type RgbImage = image::RgbImage;

/// Light source: mean RGB intensity and two in-plane unit directions.
#[derive(Debug, Clone, Copy)]
pub struct LightSource {
    mean_intensity: [f64; 3],
    azimuth_dir: Point2,
    zenith_dir: Point2,
}

impl Default for LightSource {
    fn default() -> Self {
        LightSource {
            mean_intensity: [255.0, 255.0, 255.0],
            azimuth_dir: Point2::new(1.0, 0.0),
            zenith_dir: Point2::new(0.0, 1.0),
        }
    }
}

impl LightSource {
    /// Direction arguments are normalized; zero-length directions and
    /// channels outside `[0, 255]` are rejected.
    pub fn new(mean_intensity: [f64; 3], azimuth: Point2, zenith: Point2) -> Result<LightSource> {
        for (i, c) in mean_intensity.iter().enumerate() {
            if !(*c >= 0.0 && *c <= 255.0) {
                return Err(Error::invalid(format!(
                    "light channel {i} must be in [0, 255], got {c}"
                )));
            }
        }
        let azimuth_dir = azimuth
            .normalized()
            .ok_or_else(|| Error::invalid("azimuth direction must be non-zero"))?;
        let zenith_dir = zenith
            .normalized()
            .ok_or_else(|| Error::invalid("zenith direction must be non-zero"))?;
        Ok(LightSource {
            mean_intensity,
            azimuth_dir,
            zenith_dir,
        })
    }

    /// Builds from 3D directions by projecting onto the glass plane.
    pub fn from_3d(
        mean_intensity: [f64; 3],
        azimuth: [f64; 3],
        zenith: [f64; 3],
    ) -> Result<LightSource> {
        Self::new(
            mean_intensity,
            Point2::new(azimuth[0], azimuth[1]),
            Point2::new(zenith[0], zenith[1]),
        )
    }

    pub fn mean_intensity(&self) -> [f64; 3] {
        self.mean_intensity
    }

    pub fn azimuth_dir(&self) -> Point2 {
        self.azimuth_dir
    }

    pub fn zenith_dir(&self) -> Point2 {
        self.zenith_dir
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FocusMode {
    /// Scene sharp, crack region defocused.
    FarFocus,
    /// Whole scene defocused, crack sharp.
    ShortFocus,
}

/// Everything the overlay stage needs besides the images themselves.
#[derive(Debug, Clone)]
pub struct RenderConfig {
    pub light: LightSource,
    pub focus_mode: FocusMode,
    pub blur_sigma: f64,
    /// Crack opacity in `[0, 1]`.
    pub alpha: f64,
    pub stroke_width: f32,
    pub dilation: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            light: LightSource::default(),
            focus_mode: FocusMode::FarFocus,
            blur_sigma: 2.0,
            alpha: 0.65,
            stroke_width: 2.0,
            dilation: 3,
        }
    }
}

impl RenderConfig {
    pub fn short_focus() -> Self {
        RenderConfig {
            focus_mode: FocusMode::ShortFocus,
            blur_sigma: 4.0,
            ..RenderConfig::default()
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid("blur sigma must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must be in [0, 1]"));
        }
        if !(self.stroke_width >= 1.0) {
            return Err(Error::invalid("stroke width must be at least 1 px"));
        }
        Ok(self)
    }
}

/// A finished overlay: the adversarial image, its crack mask and the shaded
/// per-edge colors.
#[derive(Debug, Clone)]
pub struct OverlayResult {
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub crack_intensities: Vec<[f64; 3]>,
}

/// Mean energy a crack with unit normal receives from the two light
/// directions: the average of the absolute direction cosines, in `[0, 1]`.
pub fn mean_incident_energy(crack_normal: Point2, light: &LightSource) -> Result<f64> {
    if !crack_normal.is_unit(1e-9) {
        return Err(Error::invalid("crack normal must be unit length"));
    }
    let e = (light.azimuth_dir.dot(crack_normal).abs() + light.zenith_dir.dot(crack_normal).abs())
        / 2.0;
    Ok(e.clamp(0.0, 1.0))
}

/// Channel-wise light intensity scaled by this crack's share of the total
/// reflected energy, clamped to `[0, 255]`.
pub fn crack_intensity(
    light: &LightSource,
    energy: f64,
    total_reflected: f64,
) -> Result<[f64; 3]> {
    if !(total_reflected > 0.0) {
        return Err(Error::invalid("total reflected energy must be positive"));
    }
    if !(energy >= 0.0) {
        return Err(Error::invalid("energy must be non-negative"));
    }
    let ratio = energy / total_reflected;
    let [r, g, b] = light.mean_intensity;
    Ok([
        (r * ratio).clamp(0.0, 255.0),
        (g * ratio).clamp(0.0, 255.0),
        (b * ratio).clamp(0.0, 255.0),
    ])
}

/// Shades every edge of a pattern: in-plane normals, mean incident energies,
/// then intensities normalized over the pattern's total reflected energy.
/// Zero-length edges shade to black and are excluded from the total.
pub fn shade_pattern(pattern: &CrackPattern, light: &LightSource) -> Result<Vec<[f64; 3]>> {
    let mut energies = Vec::with_capacity(pattern.edges.len());
    for (i, e) in pattern.edges.iter().enumerate() {
        let dir = (pattern.nodes[e.b] - pattern.nodes[e.a]).normalized();
        match dir {
            Some(d) => energies.push(Some(mean_incident_energy(d.perp(), light)?)),
            None => {
                log::warn!("skipping zero-length crack edge {i}");
                energies.push(None);
            }
        }
    }
    let total: f64 = energies.iter().flatten().sum();
    if total <= 0.0 {
        return Ok(vec![[0.0, 0.0, 0.0]; pattern.edges.len()]);
    }
    energies
        .into_iter()
        .map(|e| match e {
            Some(e) => crack_intensity(light, e, total),
            None => Ok([0.0, 0.0, 0.0]),
        })
        .collect()
}

/// Alpha-blends the shaded crack onto the source and applies the configured
/// focus. Far focus keeps every pixel outside the mask bit-identical to the
/// source; short focus defocuses the scene and draws the crack sharp.
pub fn composite(
    source: &RgbImage,
    crack: &CrackImage,
    shading: &[[f64; 3]],
    mask: &BinaryMask,
    cfg: &RenderConfig,
) -> Result<OverlayResult> {
    let (w, h) = (source.width(), source.height());
    check_dims(w, h, crack.width(), crack.height())?;
    check_dims(w, h, mask.width(), mask.height())?;
    for &id in crack.edge_ids() {
        if id != u32::MAX && id as usize >= shading.len() {
            return Err(Error::invalid(format!(
                "crack references edge {id} but only {} shaded colors given",
                shading.len()
            )));
        }
    }

    let image = match cfg.focus_mode {
        FocusMode::FarFocus => {
            let blended = blend_crack(source, crack, shading, cfg.alpha);
            let blurred = blur_f32(&blended, w as usize, h as usize, 3, cfg.blur_sigma);
            let mut out = source.clone();
            let raw = out.as_mut();
            for (i, &m) in mask.bits().iter().enumerate() {
                if m {
                    for c in 0..3 {
                        raw[i * 3 + c] = to_u8(blurred[i * 3 + c]);
                    }
                }
            }
            out
        }
        FocusMode::ShortFocus => {
            let src_f: Vec<f32> = source.as_raw().iter().map(|&v| v as f32).collect();
            let blurred = blur_f32(&src_f, w as usize, h as usize, 3, cfg.blur_sigma);
            let mut blurred_img = RgbImage::new(w, h);
            for (dst, &v) in blurred_img.as_mut().iter_mut().zip(&blurred) {
                *dst = to_u8(v);
            }
            let blended = blend_crack(&blurred_img, crack, shading, cfg.alpha);
            let mut out = RgbImage::new(w, h);
            for (dst, &v) in out.as_mut().iter_mut().zip(&blended) {
                *dst = to_u8(v);
            }
            out
        }
    };

    Ok(OverlayResult {
        image,
        mask: mask.clone(),
        crack_intensities: shading.to_vec(),
    })
}

/// Masked (far) or global (short) Gaussian defocus; `blur_sigma = 0` is the
/// identity.
pub fn apply_focus(image: &RgbImage, mask: &BinaryMask, mode: FocusMode, blur_sigma: f64) -> RgbImage {
    if blur_sigma <= 0.0 {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let src_f: Vec<f32> = image.as_raw().iter().map(|&v| v as f32).collect();
    let blurred = blur_f32(&src_f, w as usize, h as usize, 3, blur_sigma);
    let mut out = image.clone();
    let raw = out.as_mut();
    match mode {
        FocusMode::FarFocus => {
            for (i, &m) in mask.bits().iter().enumerate() {
                if m {
                    for c in 0..3 {
                        raw[i * 3 + c] = to_u8(blurred[i * 3 + c]);
                    }
                }
            }
        }
        FocusMode::ShortFocus => {
            for (dst, &v) in raw.iter_mut().zip(&blurred) {
                *dst = to_u8(v);
            }
        }
    }
    out
}

fn check_dims(ew: u32, eh: u32, gw: u32, gh: u32) -> Result<()> {
    if ew != gw || eh != gh {
        return Err(Error::DimensionMismatch {
            expected_w: ew,
            expected_h: eh,
            got_w: gw,
            got_h: gh,
        });
    }
    Ok(())
}

/// Source as f32 with the shaded crack alpha-blended in; per-pixel opacity is
/// the crack coverage scaled by the configured alpha.
fn blend_crack(source: &RgbImage, crack: &CrackImage, shading: &[[f64; 3]], alpha: f64) -> Vec<f32> {
    let mut out: Vec<f32> = source.as_raw().iter().map(|&v| v as f32).collect();
    for (i, &cov) in crack.pixels().iter().enumerate() {
        if cov <= 0.0 {
            continue;
        }
        let id = crack.edge_ids()[i];
        if id == u32::MAX {
            continue;
        }
        let color = shading[id as usize];
        let a = (alpha * cov as f64) as f32;
        for c in 0..3 {
            let s = out[i * 3 + c];
            out[i * 3 + c] = s * (1.0 - a) + color[c] as f32 * a;
        }
    }
    out
}

fn to_u8(v: f32) -> u8 {
    v.clamp(0.0, 255.0).round_ties_even() as u8
}

/// Separable Gaussian blur over interleaved channels, clamp-to-edge.
fn blur_f32(data: &[f32], w: usize, h: usize, ch: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let mut tmp = vec![0.0f32; data.len()];
    let mut out = vec![0.0f32; data.len()];

    // Horizontal pass.
    for y in 0..h {
        let row = y * w * ch;
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (k, &wgt) in kernel.iter().enumerate() {
                    let sx = (x as isize + k as isize - radius as isize).clamp(0, w as isize - 1);
                    acc += data[row + sx as usize * ch + c] * wgt;
                }
                tmp[row + x * ch + c] = acc;
            }
        }
    }
    // Vertical pass.
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (k, &wgt) in kernel.iter().enumerate() {
                    let sy = (y as isize + k as isize - radius as isize).clamp(0, h as isize - 1);
                    acc += tmp[sy as usize * w * ch + x * ch + c] * wgt;
                }
                out[y * w * ch + x * ch + c] = acc;
            }
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut weights: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights.into_iter().map(|w| w as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{crack_mask, rasterize};
    use crate::stress::PatternEdge;

    fn white() -> LightSource {
        LightSource::default()
    }

    #[test]
    fn energy_unit_cases() {
        // Azimuth and zenith both along the normal.
        let light = LightSource::new(
            [255.0, 255.0, 255.0],
            Point2::new(1.0, 0.0),
            Point2::new(-1.0, 0.0),
        )
        .unwrap();
        assert_eq!(mean_incident_energy(Point2::new(1.0, 0.0), &light).unwrap(), 1.0);
        assert_eq!(mean_incident_energy(Point2::new(0.0, 1.0), &light).unwrap(), 0.0);
        // Default light: parallel to azimuth, orthogonal to zenith.
        assert_eq!(mean_incident_energy(Point2::new(1.0, 0.0), &white()).unwrap(), 0.5);
        assert!(mean_incident_energy(Point2::new(2.0, 0.0), &white()).is_err());
    }

    #[test]
    fn energy_range_fuzz() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let ang = |r: &mut rand_chacha::ChaCha8Rng| {
                let a = r.random_range(0.0..std::f64::consts::TAU);
                Point2::new(a.cos(), a.sin())
            };
            let light =
                LightSource::new([255.0, 255.0, 255.0], ang(&mut rng), ang(&mut rng)).unwrap();
            let e = mean_incident_energy(ang(&mut rng), &light).unwrap();
            assert!((0.0..=1.0).contains(&e));
        }
    }

    #[test]
    fn intensity_unit_cases() {
        assert_eq!(
            crack_intensity(&white(), 1.0, 1.0).unwrap(),
            [255.0, 255.0, 255.0]
        );
        assert_eq!(crack_intensity(&white(), 0.0, 1.0).unwrap(), [0.0, 0.0, 0.0]);
        let light = LightSource::new(
            [200.0, 100.0, 50.0],
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        )
        .unwrap();
        assert_eq!(crack_intensity(&light, 0.5, 1.0).unwrap(), [100.0, 50.0, 25.0]);
        assert!(crack_intensity(&white(), 1.0, 0.0).is_err());
        assert!(crack_intensity(&white(), -0.5, 1.0).is_err());
    }

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
    fn single_edge_takes_the_whole_budget() {
        let p = pattern(
            vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)],
            vec![(0, 1)],
        );
        let shading = shade_pattern(&p, &white()).unwrap();
        assert_eq!(shading, vec![[255.0, 255.0, 255.0]]);
    }

    #[test]
    fn parallel_edges_shade_equally() {
        let p = pattern(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(10.0, 0.0),
                Point2::new(0.0, 5.0),
                Point2::new(10.0, 5.0),
            ],
            vec![(0, 1), (2, 3)],
        );
        let shading = shade_pattern(&p, &white()).unwrap();
        assert_eq!(shading[0], shading[1]);
    }

    #[test]
    fn shading_matches_direct_evaluation() {
        // Independent oracle: raw vector arithmetic, no library helpers.
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let nodes: Vec<Point2> = (0..11)
            .map(|_| Point2::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)))
            .collect();
        let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, i + 1)).collect();
        let p = pattern(nodes.clone(), edges.clone());
        let light = LightSource::new(
            [220.0, 180.0, 90.0],
            Point2::new(3.0, 4.0),
            Point2::new(-1.0, 1.0),
        )
        .unwrap();
        let shading = shade_pattern(&p, &light).unwrap();

        let az = (3.0 / 5.0, 4.0 / 5.0);
        let sq2 = 2.0_f64.sqrt();
        let ze = (-1.0 / sq2, 1.0 / sq2);
        let mut oracle_e = Vec::new();
        for &(a, b) in &edges {
            let dx = nodes[b].x - nodes[a].x;
            let dy = nodes[b].y - nodes[a].y;
            let len = (dx * dx + dy * dy).sqrt();
            let (nx, ny) = (-dy / len, dx / len);
            let e = ((az.0 * nx + az.1 * ny).abs() + (ze.0 * nx + ze.1 * ny).abs()) / 2.0;
            oracle_e.push(e);
        }
        let total: f64 = oracle_e.iter().sum();
        for (i, &e) in oracle_e.iter().enumerate() {
            let expect = [220.0 * e / total, 180.0 * e / total, 90.0 * e / total];
            for c in 0..3 {
                assert!(
                    (shading[i][c] - expect[c]).abs() < 1e-9,
                    "edge {i} channel {c}: {} vs {}",
                    shading[i][c],
                    expect[c]
                );
            }
        }
    }

    #[test]
    fn shaded_energy_shares_sum_to_one() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let nodes: Vec<Point2> = (0..8)
            .map(|_| Point2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)))
            .collect();
        let edges: Vec<(usize, usize)> = (0..7).map(|i| (i, i + 1)).collect();
        let p = pattern(nodes, edges);
        let light = white();
        let mut total = 0.0;
        let mut shares = 0.0;
        for e in &p.edges {
            let d = (p.nodes[e.b] - p.nodes[e.a]).normalized().unwrap();
            total += mean_incident_energy(d.perp(), &light).unwrap();
        }
        for e in &p.edges {
            let d = (p.nodes[e.b] - p.nodes[e.a]).normalized().unwrap();
            shares += mean_incident_energy(d.perp(), &light).unwrap() / total;
        }
        assert!((shares - 1.0).abs() < 1e-9);
        // Intensity bound: no channel exceeds its light channel.
        let shading = shade_pattern(&p, &light).unwrap();
        for s in shading {
            for c in 0..3 {
                assert!(s[c] >= 0.0 && s[c] <= 255.0);
            }
        }
    }

    fn gradient_source(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([
                (x * 7 % 256) as u8,
                (y * 11 % 256) as u8,
                ((x + y) * 3 % 256) as u8,
            ])
        })
    }

    fn overlay_fixture(w: u32, h: u32) -> (RgbImage, CrackImage, Vec<[f64; 3]>, BinaryMask) {
        let p = pattern(
            vec![
                Point2::new(w as f64 * 0.2, h as f64 * 0.3),
                Point2::new(w as f64 * 0.8, h as f64 * 0.6),
                Point2::new(w as f64 * 0.4, h as f64 * 0.8),
            ],
            vec![(0, 1), (0, 2)],
        );
        let source = gradient_source(w, h);
        let crack = rasterize(&p, w, h, 2.0).unwrap();
        let shading = shade_pattern(&p, &white()).unwrap();
        let mask = crack_mask(&crack, 3);
        (source, crack, shading, mask)
    }

    #[test]
    fn far_focus_is_local_to_the_mask() {
        let (source, crack, shading, mask) = overlay_fixture(64, 48);
        let cfg = RenderConfig::default();
        let result = composite(&source, &crack, &shading, &mask, &cfg).unwrap();
        assert_eq!(result.image.dimensions(), source.dimensions());
        let mut changed = 0;
        for y in 0..48 {
            for x in 0..64 {
                if !mask.get(x, y) {
                    assert_eq!(result.image.get_pixel(x, y), source.get_pixel(x, y));
                } else if result.image.get_pixel(x, y) != source.get_pixel(x, y) {
                    changed += 1;
                }
            }
        }
        assert!(changed > 0, "overlay had no visible effect");
    }

    #[test]
    fn empty_mask_far_focus_is_identity() {
        let source = gradient_source(32, 24);
        let crack = rasterize(&CrackPattern::default(), 32, 24, 2.0).unwrap();
        let mask = BinaryMask::new_false(32, 24);
        let cfg = RenderConfig::default();
        let result = composite(&source, &crack, &[], &mask, &cfg).unwrap();
        assert_eq!(result.image.as_raw(), source.as_raw());
    }

    #[test]
    fn zero_alpha_zero_sigma_is_identity() {
        let (source, crack, shading, mask) = overlay_fixture(40, 30);
        let cfg = RenderConfig {
            alpha: 0.0,
            blur_sigma: 0.0,
            ..RenderConfig::default()
        };
        let result = composite(&source, &crack, &shading, &mask, &cfg).unwrap();
        assert_eq!(result.image.as_raw(), source.as_raw());
    }

    #[test]
    fn short_focus_blurs_outside_the_crack() {
        let (source, crack, shading, mask) = overlay_fixture(64, 48);
        let cfg = RenderConfig::short_focus();
        let result = composite(&source, &crack, &shading, &mask, &cfg).unwrap();
        // A gradient image changes under global blur.
        assert_ne!(result.image.as_raw(), source.as_raw());
        assert_eq!(result.image.dimensions(), source.dimensions());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (source, crack, shading, _) = overlay_fixture(40, 30);
        let wrong_mask = BinaryMask::new_false(41, 30);
        let cfg = RenderConfig::default();
        assert!(matches!(
            composite(&source, &crack, &shading, &wrong_mask, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn apply_focus_identity_cases() {
        let source = gradient_source(32, 24);
        let mask = BinaryMask::new_false(32, 24);
        // Zero sigma.
        let out = apply_focus(&source, &mask, FocusMode::ShortFocus, 0.0);
        assert_eq!(out.as_raw(), source.as_raw());
        // Far mode with an all-false mask.
        let out = apply_focus(&source, &mask, FocusMode::FarFocus, 3.0);
        assert_eq!(out.as_raw(), source.as_raw());
        // Constant image: blur of a constant is the constant.
        let flat = RgbImage::from_pixel(32, 24, image::Rgb([120, 30, 200]));
        let out = apply_focus(&flat, &mask, FocusMode::ShortFocus, 4.0);
        assert_eq!(out.as_raw(), flat.as_raw());
    }
}
