//! Fixed-radius neighbor search over particle positions.
//!
//! The index is a static KD-tree with exact query semantics: a radius query
//! returns precisely the ids whose Euclidean distance to the center is `<= R`,
//! matching a brute-force scan bit for bit.

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::mesh::ParticleSet;

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// Particle id stored at this node (the median of its slice).
    point: u32,
    axis: u8,
    left: u32,
    right: u32,
}

/// Immutable spatial index over a particle set.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point2>,
    nodes: Vec<Node>,
    root: u32,
}

impl NeighborIndex {
    /// Builds the index over all positions of a particle set.
    pub fn build(particles: &ParticleSet) -> NeighborIndex {
        Self::from_points(particles.positions().to_vec())
    }

    /// Builds the index over raw positions (ids are slice indices).
    pub fn from_points(points: Vec<Point2>) -> NeighborIndex {
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(&points, &mut ids, 0, &mut nodes);
        NeighborIndex {
            points,
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, id: usize) -> Point2 {
        self.points[id]
    }

    /// All particle ids within Euclidean distance `radius` of `center`
    /// (inclusive), in ascending id order.
    pub fn query_radius(&self, center: Point2, radius: f64) -> Result<Vec<usize>> {
        if !(radius >= 0.0) {
            return Err(Error::invalid(format!(
                "radius must be non-negative, got {radius}"
            )));
        }
        let mut out = Vec::new();
        if self.root != NO_CHILD {
            let r_sq = radius * radius;
            self.collect_in_radius(self.root, center, radius, r_sq, &mut out);
        }
        out.sort_unstable();
        Ok(out)
    }

    fn collect_in_radius(&self, node: u32, center: Point2, r: f64, r_sq: f64, out: &mut Vec<usize>) {
        let n = &self.nodes[node as usize];
        let p = self.points[n.point as usize];
        if center.distance_sq(p) <= r_sq {
            out.push(n.point as usize);
        }
        let delta = if n.axis == 0 {
            center.x - p.x
        } else {
            center.y - p.y
        };
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if near != NO_CHILD {
            self.collect_in_radius(near, center, r, r_sq, out);
        }
        if far != NO_CHILD && delta.abs() <= r {
            self.collect_in_radius(far, center, r, r_sq, out);
        }
    }

    /// Id of the particle nearest to `p`; ties resolve to the lowest id.
    pub fn nearest(&self, p: Point2) -> usize {
        debug_assert!(!self.points.is_empty());
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_recursive(self.root, p, &mut best);
        best.1
    }

    fn nearest_recursive(&self, node: u32, target: Point2, best: &mut (f64, usize)) {
        if node == NO_CHILD {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point as usize];
        let d_sq = target.distance_sq(p);
        let candidate = (d_sq, n.point as usize);
        if candidate < *best {
            *best = candidate;
        }
        let delta = if n.axis == 0 {
            target.x - p.x
        } else {
            target.y - p.y
        };
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_recursive(near, target, best);
        if delta * delta <= best.0 {
            self.nearest_recursive(far, target, best);
        }
    }
}

fn build_recursive(points: &[Point2], ids: &mut [u32], depth: usize, nodes: &mut Vec<Node>) -> u32 {
    if ids.is_empty() {
        return NO_CHILD;
    }
    let axis = (depth % 2) as u8;
    let mid = ids.len() / 2;
    // Deterministic ordering: coordinate first, id as tie-break.
    ids.select_nth_unstable_by(mid, |&a, &b| {
        let (pa, pb) = (points[a as usize], points[b as usize]);
        let (ka, kb) = if axis == 0 {
            ((pa.x, a), (pb.x, b))
        } else {
            ((pa.y, a), (pb.y, b))
        };
        ka.partial_cmp(&kb).unwrap()
    });
    let point = ids[mid];
    let slot = nodes.len();
    nodes.push(Node {
        point,
        axis,
        left: NO_CHILD,
        right: NO_CHILD,
    });
    let (lo, rest) = ids.split_at_mut(mid);
    let hi = &mut rest[1..];
    let left = build_recursive(points, lo, depth + 1, nodes);
    let right = build_recursive(points, hi, depth + 1, nodes);
    nodes[slot].left = left;
    nodes[slot].right = right;
    slot as u32
}
