//! Glass-sheet substrate: uniformly sampled particles and their constrained
//! Delaunay triangulation.

use std::collections::HashSet;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Triangulation};

use crate::error::{Error, Result};
use crate::geom::Point2;

/// Rectangular pixel-plane extent, `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub width: f64,
    pub height: f64,
}

impl Extent {
    pub fn new(width: f64, height: f64) -> Result<Extent> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::invalid(format!(
                "extent must be positive and finite, got {width}x{height}"
            )));
        }
        Ok(Extent { width, height })
    }

    /// True when `p` lies within the closed rectangle.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    fn corners(&self) -> [Point2; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(self.width, 0.0),
            Point2::new(self.width, self.height),
            Point2::new(0.0, self.height),
        ]
    }
}

/// Glass particles: distinct 2D positions inside an extent.
///
/// Sampled sets are uniform over `[0, width) x [0, height)` and fully
/// reproducible from their seed.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    positions: Vec<Point2>,
    extent: Extent,
    seed: u64,
}

impl ParticleSet {
    /// Samples `count` distinct positions uniformly over the extent.
    ///
    /// Identical `(count, extent, seed)` reproduce bit-identical positions.
    pub fn sample(count: usize, extent: Extent, seed: u64) -> Result<ParticleSet> {
        if count < 3 {
            return Err(Error::invalid(format!(
                "particle count must be at least 3, got {count}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = Vec::with_capacity(count);
        let mut seen: HashSet<(u64, u64)> = HashSet::with_capacity(count);
        while positions.len() < count {
            let p = Point2::new(
                rng.random_range(0.0..extent.width),
                rng.random_range(0.0..extent.height),
            );
            // Coincident samples would degenerate the triangulation; resample.
            if seen.insert((p.x.to_bits(), p.y.to_bits())) {
                positions.push(p);
            }
        }
        Ok(ParticleSet {
            positions,
            extent,
            seed,
        })
    }

    /// Wraps explicit positions. Positions must be finite, pairwise distinct
    /// and inside the closed extent rectangle.
    pub fn from_points(positions: Vec<Point2>, extent: Extent) -> Result<ParticleSet> {
        if positions.is_empty() {
            return Err(Error::invalid("particle set must not be empty"));
        }
        let mut seen = HashSet::with_capacity(positions.len());
        for (i, p) in positions.iter().enumerate() {
            if !p.is_finite() || !extent.contains(*p) {
                return Err(Error::invalid(format!(
                    "position {i} ({}, {}) outside extent {}x{}",
                    p.x, p.y, extent.width, extent.height
                )));
            }
            if !seen.insert((p.x.to_bits(), p.y.to_bits())) {
                return Err(Error::invalid(format!("duplicate position at index {i}")));
            }
        }
        Ok(ParticleSet {
            positions,
            extent,
            seed: 0,
        })
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self, id: usize) -> Point2 {
        self.positions[id]
    }
}

/// Constrained Delaunay triangulation of a particle set.
///
/// Vertices `0..particle_count` are the particles in id order; any vertices
/// past that are frame corners added by [`TriMesh::triangulate_framed`].
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point2>,
    particle_count: usize,
    edges: Vec<(usize, usize)>,
    triangles: Vec<[usize; 3]>,
    constraints: Vec<(usize, usize)>,
    extent: Extent,
}

impl TriMesh {
    /// Delaunay triangulation of exactly the particle positions.
    /// The convex hull boundary is registered as the constraint set.
    pub fn triangulate(particles: &ParticleSet) -> Result<TriMesh> {
        Self::build(particles, false)
    }

    /// Triangulation of the particles plus the four extent corners, with the
    /// frame border as constraint segments, so the mesh spans the full image
    /// and cracks can reach the frame. Corner insertion de-duplicates against
    /// coincident particles.
    pub fn triangulate_framed(particles: &ParticleSet) -> Result<TriMesh> {
        Self::build(particles, true)
    }

    fn build(particles: &ParticleSet, framed: bool) -> Result<TriMesh> {
        let n = particles.len();
        if n < 3 {
            return Err(Error::invalid(format!(
                "triangulation needs at least 3 points, got {n}"
            )));
        }
        let extent = particles.extent();

        let mut vertices: Vec<Point2> = particles.positions().to_vec();
        if framed {
            let occupied: HashSet<(u64, u64)> = vertices
                .iter()
                .map(|p| (p.x.to_bits(), p.y.to_bits()))
                .collect();
            for c in extent.corners() {
                if !occupied.contains(&(c.x.to_bits(), c.y.to_bits())) {
                    vertices.push(c);
                }
            }
        }

        let spade_points: Vec<spade::Point2<f64>> =
            vertices.iter().map(|p| spade::Point2::new(p.x, p.y)).collect();
        let constraint_pairs = if framed {
            border_chains(&vertices, extent)
        } else {
            Vec::new()
        };
        let cdt: ConstrainedDelaunayTriangulation<spade::Point2<f64>> =
            ConstrainedDelaunayTriangulation::bulk_load_cdt(
                spade_points,
                constraint_pairs.iter().map(|&(a, b)| [a, b]).collect(),
            )
            .map_err(|e| Error::invalid(format!("triangulation rejected input: {e:?}")))?;

        if cdt.num_inner_faces() == 0 {
            return Err(Error::degenerate("all input points are collinear"));
        }

        let mut edges: Vec<(usize, usize)> = cdt
            .undirected_edges()
            .map(|e| {
                let [a, b] = e.vertices();
                canonical(a.fix().index(), b.fix().index())
            })
            .collect();
        edges.sort_unstable();

        let mut triangles: Vec<[usize; 3]> = cdt
            .inner_faces()
            .map(|f| {
                let vs = f.vertices();
                let mut t = [
                    vs[0].fix().index(),
                    vs[1].fix().index(),
                    vs[2].fix().index(),
                ];
                t.sort_unstable();
                t
            })
            .collect();
        triangles.sort_unstable();

        let mut constraints: Vec<(usize, usize)> = if framed {
            constraint_pairs
                .into_iter()
                .map(|(a, b)| canonical(a, b))
                .collect()
        } else {
            // The hull boundary plays the constraint role for plain meshes.
            cdt.convex_hull()
                .map(|e| {
                    let [a, b] = e.vertices();
                    canonical(a.fix().index(), b.fix().index())
                })
                .collect()
        };
        constraints.sort_unstable();

        Ok(TriMesh {
            vertices,
            particle_count: n,
            edges,
            triangles,
            constraints,
            extent,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Point2 {
        self.vertices[id]
    }

    /// Number of particle vertices (frame corners excluded).
    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    /// Undirected edges as canonical `(low, high)` id pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Triangles as ascending id triples, sorted.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Constraint edges (frame border or hull boundary).
    pub fn constraints(&self) -> &[(usize, usize)] {
        &self.constraints
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn to_json(&self) -> MeshJson {
        MeshJson {
            vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// JSON document form of a mesh, for debugging and golden tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshJson {
    pub vertices: Vec<[f64; 2]>,
    pub edges: Vec<[usize; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Splits each frame border into constraint segments between consecutive
/// vertices lying exactly on it. Returned pairs index into `vertices`.
fn border_chains(vertices: &[Point2], extent: Extent) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let sides: [(Box<dyn Fn(Point2) -> bool>, Box<dyn Fn(Point2) -> f64>); 4] = [
        (Box::new(|p: Point2| p.y == 0.0), Box::new(|p: Point2| p.x)),
        (
            Box::new(move |p: Point2| p.x == extent.width),
            Box::new(|p: Point2| p.y),
        ),
        (
            Box::new(move |p: Point2| p.y == extent.height),
            Box::new(|p: Point2| p.x),
        ),
        (Box::new(|p: Point2| p.x == 0.0), Box::new(|p: Point2| p.y)),
    ];
    for (on_side, along) in sides {
        let mut ids: Vec<usize> = (0..vertices.len())
            .filter(|&i| on_side(vertices[i]))
            .collect();
        ids.sort_by(|&a, &b| {
            along(vertices[a])
                .partial_cmp(&along(vertices[b]))
                .unwrap()
                .then(a.cmp(&b))
        });
        for w in ids.windows(2) {
            if w[0] != w[1] {
                pairs.push((w[0], w[1]));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn extent(w: f64, h: f64) -> Extent {
        Extent::new(w, h).unwrap()
    }

    #[test]
    fn sample_respects_bounds_and_count() {
        let ps = ParticleSet::sample(3, extent(10.0, 10.0), 7).unwrap();
        assert_eq!(ps.len(), 3);
        for p in ps.positions() {
            assert!(p.x >= 0.0 && p.x < 10.0);
            assert!(p.y >= 0.0 && p.y < 10.0);
        }
        let mut unique: Vec<_> = ps.positions().to_vec();
        unique.dedup_by(|a, b| a == b);
        assert_eq!(unique.len(), 3);
    }

    #[test]
    fn sample_is_deterministic() {
        let a = ParticleSet::sample(10_000, extent(1242.0, 375.0), 99).unwrap();
        let b = ParticleSet::sample(10_000, extent(1242.0, 375.0), 99).unwrap();
        for (p, q) in a.positions().iter().zip(b.positions()) {
            assert_eq!(p.x.to_bits(), q.x.to_bits());
            assert_eq!(p.y.to_bits(), q.y.to_bits());
        }
    }

    #[test]
    fn sample_mean_is_centered() {
        // Mean of 1000 uniform x-coordinates on [0,100) concentrates near 50;
        // +-5 is ~5.5 standard deviations of the sample mean.
        let ps = ParticleSet::sample(1000, extent(100.0, 100.0), 4).unwrap();
        let mean_x: f64 = ps.positions().iter().map(|p| p.x).sum::<f64>() / 1000.0;
        assert!((mean_x - 50.0).abs() < 5.0, "mean_x = {mean_x}");
    }

    #[test]
    fn sample_rejects_bad_arguments() {
        assert!(ParticleSet::sample(2, extent(10.0, 10.0), 0).is_err());
        assert!(Extent::new(0.0, 10.0).is_err());
        assert!(Extent::new(10.0, -1.0).is_err());
    }

    #[test]
    fn triangle_of_three_points() {
        let ps = ParticleSet::from_points(
            vec![
                Point2::new(1.0, 1.0),
                Point2::new(8.0, 2.0),
                Point2::new(4.0, 7.0),
            ],
            extent(10.0, 10.0),
        )
        .unwrap();
        let mesh = TriMesh::triangulate(&ps).unwrap();
        assert_eq!(mesh.triangles().len(), 1);
        assert_eq!(mesh.edges().len(), 3);
    }

    #[test]
    fn square_gives_two_triangles() {
        let ps = ParticleSet::from_points(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(10.0, 0.0),
                Point2::new(10.0, 10.0),
                Point2::new(0.0, 10.0),
            ],
            extent(10.0, 10.0),
        )
        .unwrap();
        let mesh = TriMesh::triangulate(&ps).unwrap();
        assert_eq!(mesh.triangles().len(), 2);
        assert_eq!(mesh.edges().len(), 5);

        // Framed triangulation de-duplicates the coincident corners.
        let framed = TriMesh::triangulate_framed(&ps).unwrap();
        assert_eq!(framed.vertices().len(), 4);
        assert_eq!(framed.triangles().len(), 2);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let ps = ParticleSet::from_points(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(2.0, 2.0),
                Point2::new(3.0, 3.0),
            ],
            extent(10.0, 10.0),
        )
        .unwrap();
        assert!(matches!(
            TriMesh::triangulate(&ps),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn framed_mesh_reaches_the_border() {
        let ps = ParticleSet::sample(200, extent(60.0, 40.0), 5).unwrap();
        let mesh = TriMesh::triangulate_framed(&ps).unwrap();
        assert_eq!(mesh.vertices().len(), 204);
        assert_eq!(mesh.particle_count(), 200);
        // All four border segments are constraints between corner vertices.
        assert!(mesh.constraints().len() >= 4);
        for &(a, b) in mesh.constraints() {
            let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
            let same_side = (pa.x == 0.0 && pb.x == 0.0)
                || (pa.y == 0.0 && pb.y == 0.0)
                || (pa.x == 60.0 && pb.x == 60.0)
                || (pa.y == 40.0 && pb.y == 40.0);
            assert!(same_side, "constraint ({a},{b}) not on a border");
        }
        // Constraint edges appear in the edge set.
        for c in mesh.constraints() {
            assert!(mesh.edges().binary_search(c).is_ok());
        }
    }

    #[test]
    fn every_edge_belongs_to_a_triangle() {
        let ps = ParticleSet::sample(80, extent(30.0, 30.0), 12).unwrap();
        let mesh = TriMesh::triangulate(&ps).unwrap();
        let mut edge_used: HashSet<(usize, usize)> = HashSet::new();
        for t in mesh.triangles() {
            edge_used.insert((t[0], t[1]));
            edge_used.insert((t[0], t[2]));
            edge_used.insert((t[1], t[2]));
        }
        for e in mesh.edges() {
            assert!(edge_used.contains(e), "edge {e:?} not in any triangle");
        }
        assert_eq!(edge_used.len(), mesh.edges().len());
    }

    #[test]
    fn empty_circumcircle_property() {
        // Oracle: O(n * t) scan, vertex strictly inside a circumcircle fails.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let n = rng.random_range(10..120);
            let points: Vec<Point2> = (0..n)
                .map(|_| Point2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
                .collect();
            let ps = ParticleSet::from_points(points.clone(), extent(1.0, 1.0)).unwrap();
            let mesh = TriMesh::triangulate(&ps).unwrap();
            for t in mesh.triangles() {
                for (d, p) in points.iter().enumerate() {
                    if t.contains(&d) {
                        continue;
                    }
                    let det = in_circle_det(points[t[0]], points[t[1]], points[t[2]], *p);
                    assert!(det <= 1e-9, "vertex {d} inside circumcircle of {t:?}: {det}");
                }
            }
        }
    }

    /// Positive when `d` lies strictly inside the circumcircle of `abc`.
    fn in_circle_det(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
        let orient = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        let (b, c) = if orient < 0.0 { (c, b) } else { (b, c) };
        let m = [
            [a.x - d.x, a.y - d.y, (a.x - d.x).powi(2) + (a.y - d.y).powi(2)],
            [b.x - d.x, b.y - d.y, (b.x - d.x).powi(2) + (b.y - d.y).powi(2)],
            [c.x - d.x, c.y - d.y, (c.x - d.x).powi(2) + (c.y - d.y).powi(2)],
        ];
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[test]
    fn triangulation_is_deterministic() {
        let ps = ParticleSet::sample(500, extent(100.0, 80.0), 77).unwrap();
        let a = TriMesh::triangulate_framed(&ps).unwrap();
        let b = TriMesh::triangulate_framed(&ps).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.triangles(), b.triangles());
    }

    #[test]
    fn json_round_trip() {
        let ps = ParticleSet::sample(20, extent(10.0, 10.0), 1).unwrap();
        let mesh = TriMesh::triangulate(&ps).unwrap();
        let doc = serde_json::to_string(&mesh.to_json()).unwrap();
        let parsed: MeshJson = serde_json::from_str(&doc).unwrap();
        assert_eq!(parsed.vertices.len(), 20);
        assert_eq!(parsed.edges.len(), mesh.edges().len());
        assert_eq!(parsed.triangles.len(), mesh.triangles().len());
    }
}
