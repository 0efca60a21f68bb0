//! Impact-driven stress propagation over the particle mesh and crack-pattern
//! extraction.
//!
//! An impact deposits a directional stress budget at the particle nearest the
//! impact point. The wave then hops between particles: each hop projects the
//! carried stress onto every candidate direction inside the neighbor radius,
//! compares the summed positive and negative stress on either side of the
//! splitting plane, and continues through the strongest node of the winning
//! side. Carried stress shrinks by the cosine of the turn and a fixed decay
//! per hop, so every branch terminates. The final crack is the minimum
//! spanning tree over all stressed nodes, weighted by Euclidean distance and
//! annotated with the propagation stresses.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::mesh::{ParticleSet, TriMesh};
use crate::spatial::NeighborIndex;

/// Multiplicative stress loss per hop. Combined with the cosine projection it
/// makes carried stress strictly decreasing along every branch; a 500-unit
/// impact crosses a 300-unit halt threshold in roughly 17 near-collinear hops.
pub const DECAY_PER_HOP: f64 = 0.97;

/// Complete-graph extraction is quadratic; above this many stressed nodes the
/// spanning tree falls back to the radius-neighborhood graph.
const COMPLETE_GRAPH_LIMIT: usize = 2000;

/// How often the impact-node frontier search may double its radius when the
/// configured radius finds no neighbor at all.
const MAX_RADIUS_EXPANSIONS: u32 = 6;

/// Impact parameters: where the glass is struck, how hard, and the material
/// thresholds governing fracture and halt.
#[derive(Debug, Clone, Copy)]
pub struct ImpactSpec {
    pub impact_point: Point2,
    /// Effective stress deposited at the impact point.
    pub force: f64,
    /// Unit direction of the impact in the glass plane.
    pub impact_vector: Point2,
    pub critical_stress: f64,
    pub safety_factor: f64,
    /// Propagation halts on a branch once carried stress drops below this.
    pub stop_threshold: f64,
}

impl ImpactSpec {
    /// Paper-default thresholds: critical stress and halt threshold 300,
    /// safety factor 1.
    pub fn new(impact_point: Point2, force: f64, impact_vector: Point2) -> Result<ImpactSpec> {
        ImpactSpec {
            impact_point,
            force,
            impact_vector,
            critical_stress: 300.0,
            safety_factor: 1.0,
            stop_threshold: 300.0,
        }
        .validated()
    }

    pub fn with_thresholds(
        mut self,
        critical_stress: f64,
        safety_factor: f64,
        stop_threshold: f64,
    ) -> Result<ImpactSpec> {
        self.critical_stress = critical_stress;
        self.safety_factor = safety_factor;
        self.stop_threshold = stop_threshold;
        self.validated()
    }

    fn validated(self) -> Result<ImpactSpec> {
        if !self.impact_point.is_finite() {
            return Err(Error::invalid("impact point must be finite"));
        }
        if !(self.force >= 0.0 && self.force.is_finite()) {
            return Err(Error::invalid("force must be non-negative"));
        }
        if !self.impact_vector.is_unit(1e-9) {
            return Err(Error::invalid("impact vector must be unit length"));
        }
        if !(self.critical_stress > 0.0) {
            return Err(Error::invalid("critical stress must be positive"));
        }
        if !(self.safety_factor > 0.0) {
            return Err(Error::invalid("safety factor must be positive"));
        }
        if !(self.stop_threshold >= 0.0) {
            return Err(Error::invalid("stop threshold must be non-negative"));
        }
        Ok(self)
    }
}

/// One recorded hop of the stress wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub parent: usize,
    pub child: usize,
    /// Carried stress after the hop (the child's node stress).
    pub stress: f64,
    /// Global 1-based step counter; branches interleave.
    pub step: usize,
}

/// The outcome of a propagation run.
#[derive(Debug, Clone, Default)]
pub struct StressField {
    pub node_stress: BTreeMap<usize, f64>,
    pub visited: BTreeSet<usize>,
    pub trace: Vec<TraceStep>,
    /// Neighbor radius the run used; extraction reuses it for large fields.
    pub radius: f64,
}

impl StressField {
    pub fn is_empty(&self) -> bool {
        self.visited.is_empty()
    }

    pub fn max_step(&self) -> usize {
        self.trace.last().map_or(0, |t| t.step)
    }
}

/// Eq.-style fracture gate: stress exceeds critical stress over safety factor.
pub fn fracture_condition(sigma_v: f64, sigma_c: f64, safety: f64) -> Result<bool> {
    if !(sigma_c > 0.0) {
        return Err(Error::invalid("critical stress must be positive"));
    }
    if !(safety > 0.0) {
        return Err(Error::invalid("safety factor must be positive"));
    }
    Ok(sigma_v > sigma_c / safety)
}

/// Directional stress received at `to` from a stress `sigma_v` carried at
/// `from` along `impact_vector`: the cosine projection of the carried stress.
pub fn edge_stress(sigma_v: f64, from: Point2, to: Point2, impact_vector: Point2) -> Result<f64> {
    if !impact_vector.is_unit(1e-9) {
        return Err(Error::invalid("impact vector must be unit length"));
    }
    let dir = (to - from)
        .normalized()
        .ok_or_else(|| Error::degenerate("edge endpoints coincide"))?;
    // Rounding can push the dot product of two unit vectors past 1.
    let cos_theta = dir.dot(impact_vector).clamp(-1.0, 1.0);
    Ok(sigma_v * cos_theta)
}

/// Summed positive stress `q1` and summed negative stress `q2 <= 0`.
pub fn summed_stress(stresses: &[f64]) -> (f64, f64) {
    let mut q1 = 0.0;
    let mut q2 = 0.0;
    for &s in stresses {
        if s > 0.0 {
            q1 += s;
        } else if s < 0.0 {
            q2 += s;
        }
    }
    (q1, q2)
}

/// Splitting-plane choice: compare `q1` against `|q2|`, then return the id of
/// the maximum-magnitude stress within the winning sign class. The
/// non-negative class wins ties; equal magnitudes resolve to the lowest id.
pub fn select_splitting_edge(frontier: &[(usize, f64)]) -> Result<usize> {
    if frontier.is_empty() {
        return Err(Error::EmptyFrontier);
    }
    let stresses: Vec<f64> = frontier.iter().map(|&(_, s)| s).collect();
    let (q1, q2) = summed_stress(&stresses);
    let negative_wins = q2.abs() > q1;
    let mut best: Option<(f64, usize)> = None;
    for &(id, s) in frontier {
        let in_class = if negative_wins { s < 0.0 } else { s >= 0.0 };
        if !in_class {
            continue;
        }
        let mag = s.abs();
        let better = match best {
            None => true,
            Some((bm, bi)) => mag > bm || (mag == bm && id < bi),
        };
        if better {
            best = Some((mag, id));
        }
    }
    // The winning class is never empty: a negative win requires a negative
    // entry, and otherwise every all-negative frontier has |q2| > q1 = 0.
    Ok(best.expect("winning sign class is non-empty").1)
}

/// Runs the stress wave from the impact point over the particle neighborhood
/// graph.
///
/// Up to `branch_k` arms leave the impact node (both sides of the splitting
/// plane allowed when `branch_k >= 2`); each arm then continues single-path
/// through the winner of the splitting-plane comparison, halting when the
/// winner falls on the negative side (back-crack avoidance), when carried
/// stress drops below the halt threshold, or when the frontier is exhausted.
pub fn propagate(
    mesh: &TriMesh,
    idx: &NeighborIndex,
    impact: &ImpactSpec,
    radius: f64,
    branch_k: usize,
) -> Result<StressField> {
    if branch_k == 0 {
        return Err(Error::invalid("branch_k must be at least 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("neighbor radius must be positive"));
    }
    if !mesh.extent().contains(impact.impact_point) {
        return Err(Error::invalid(format!(
            "impact point ({}, {}) outside mesh extent",
            impact.impact_point.x, impact.impact_point.y
        )));
    }
    impact.validated()?;

    let mut field = StressField {
        radius,
        ..StressField::default()
    };
    if !fracture_condition(impact.force, impact.critical_stress, impact.safety_factor)? {
        return Ok(field);
    }

    let start = idx.nearest(impact.impact_point);
    field.visited.insert(start);
    field.node_stress.insert(start, impact.force);

    // The strike always reaches its nearest neighbors: expand the first query
    // if the configured radius happens to find nothing.
    let mut first_radius = radius;
    let mut candidates = unvisited(idx.query_radius(idx.position(start), first_radius)?, &field);
    let mut expansions = 0;
    while candidates.is_empty() && expansions < MAX_RADIUS_EXPANSIONS && idx.len() > 1 {
        first_radius *= 2.0;
        expansions += 1;
        candidates = unvisited(idx.query_radius(idx.position(start), first_radius)?, &field);
    }

    let mut frontier = stress_frontier(idx, start, impact.force, impact.impact_vector, &candidates);
    // Active branch heads: (node, carried stress, carried direction).
    let mut queue: VecDeque<(usize, f64, Point2)> = VecDeque::new();
    let mut step = 0usize;

    for _ in 0..branch_k.min(frontier.len()) {
        let chosen = select_splitting_edge(&frontier)?;
        let at = frontier.iter().position(|&(id, _)| id == chosen).unwrap();
        let (child, raw) = frontier.remove(at);
        if branch_k == 1 && raw < 0.0 {
            // Single-path mode follows the dominant stress only forward.
            break;
        }
        let dir = (idx.position(child) - idx.position(start))
            .normalized()
            .expect("particle positions are distinct");
        let carried = raw.abs() * DECAY_PER_HOP;
        step += 1;
        record(&mut field, start, child, carried, step);
        if carried >= impact.stop_threshold && carried > 0.0 {
            queue.push_back((child, carried, dir));
        }
    }

    while let Some((node, sigma, dir)) = queue.pop_front() {
        let candidates = unvisited(idx.query_radius(idx.position(node), radius)?, &field);
        if candidates.is_empty() {
            continue;
        }
        let frontier = stress_frontier(idx, node, sigma, dir, &candidates);
        let chosen = select_splitting_edge(&frontier)?;
        let &(child, raw) = frontier.iter().find(|&&(id, _)| id == chosen).unwrap();
        if raw < 0.0 {
            // The relief now lies behind the wave; continuing would crack back
            // into already fractured material.
            continue;
        }
        let new_dir = (idx.position(child) - idx.position(node))
            .normalized()
            .expect("particle positions are distinct");
        let carried = raw * DECAY_PER_HOP;
        step += 1;
        record(&mut field, node, child, carried, step);
        if carried >= impact.stop_threshold && carried > 0.0 {
            queue.push_back((child, carried, new_dir));
        }
    }

    Ok(field)
}

fn unvisited(ids: Vec<usize>, field: &StressField) -> Vec<usize> {
    ids.into_iter()
        .filter(|id| !field.visited.contains(id))
        .collect()
}

fn stress_frontier(
    idx: &NeighborIndex,
    from: usize,
    sigma: f64,
    dir: Point2,
    candidates: &[usize],
) -> Vec<(usize, f64)> {
    let origin = idx.position(from);
    candidates
        .iter()
        .map(|&j| {
            let s = edge_stress(sigma, origin, idx.position(j), dir)
                .expect("particle positions are distinct");
            (j, s)
        })
        .collect()
}

fn record(field: &mut StressField, parent: usize, child: usize, stress: f64, step: usize) {
    field.visited.insert(child);
    field.node_stress.insert(child, stress);
    field.trace.push(TraceStep {
        parent,
        child,
        stress,
        step,
    });
}

/// Crack-pattern edge between compact node indices, annotated with the lower
/// of the two endpoint stresses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternEdge {
    pub a: usize,
    pub b: usize,
    pub stress: f64,
}

/// Final crack: an acyclic, connected set of segments rooted at the impact.
#[derive(Debug, Clone, Default)]
pub struct CrackPattern {
    pub nodes: Vec<Point2>,
    pub edges: Vec<PatternEdge>,
    pub impact_node: Option<usize>,
}

impl CrackPattern {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True when the edge set is connected and acyclic over all nodes.
    pub fn is_tree(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        if self.edges.len() != self.nodes.len() - 1 {
            return false;
        }
        let mut uf = UnionFind::new(self.nodes.len());
        for e in &self.edges {
            if !uf.union(e.a, e.b) {
                return false; // cycle
            }
        }
        true
    }

    pub fn total_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| self.nodes[e.a].distance(self.nodes[e.b]))
            .sum()
    }

    pub fn to_json(&self) -> PatternJson {
        PatternJson {
            nodes: self.nodes.iter().map(|p| [p.x, p.y]).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| (e.a, e.b, e.stress))
                .collect(),
            impact: self.impact_node.map(|i| [self.nodes[i].x, self.nodes[i].y]),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.json_bytes()?)?;
        Ok(())
    }

    pub fn json_bytes(&self) -> Result<Vec<u8>> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        Ok(text.into_bytes())
    }
}

/// JSON document form of a crack pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternJson {
    pub nodes: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize, f64)>,
    pub impact: Option<[f64; 2]>,
}

/// Builds the crack pattern for a stress field: the Euclidean minimum
/// spanning tree over the visited nodes, rooted at the node nearest the
/// impact point.
pub fn extract_crack_pattern(
    field: &StressField,
    particles: &ParticleSet,
    impact: &ImpactSpec,
) -> CrackPattern {
    extract_with_positions(field, |id| particles.position(id), impact.impact_point)
}

fn extract_with_positions(
    field: &StressField,
    position: impl Fn(usize) -> Point2,
    impact_point: Point2,
) -> CrackPattern {
    let ids: Vec<usize> = field.visited.iter().copied().collect();
    let m = ids.len();
    if m == 0 {
        return CrackPattern::default();
    }
    let nodes: Vec<Point2> = ids.iter().map(|&id| position(id)).collect();

    let mut root = 0;
    let mut best = f64::INFINITY;
    for (i, p) in nodes.iter().enumerate() {
        let d = impact_point.distance_sq(*p);
        if d < best {
            best = d;
            root = i;
        }
    }
    if m == 1 {
        return CrackPattern {
            nodes,
            edges: Vec::new(),
            impact_node: Some(root),
        };
    }

    let mut candidates: Vec<(f64, usize, usize)> = if m <= COMPLETE_GRAPH_LIMIT {
        let mut all = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in (i + 1)..m {
                all.push((nodes[i].distance(nodes[j]), i, j));
            }
        }
        all
    } else {
        radius_graph(&nodes, field.radius, root)
    };

    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut uf = UnionFind::new(m);
    let mut edges = Vec::with_capacity(m - 1);
    for (_, i, j) in candidates {
        if uf.union(i, j) {
            let stress = edge_field_stress(field, ids[i], ids[j]);
            edges.push(PatternEdge {
                a: i,
                b: j,
                stress,
            });
            if edges.len() == m - 1 {
                break;
            }
        }
    }

    CrackPattern {
        nodes,
        edges,
        impact_node: Some(root),
    }
}

fn edge_field_stress(field: &StressField, id_a: usize, id_b: usize) -> f64 {
    let sa = field.node_stress.get(&id_a).copied().unwrap_or(0.0);
    let sb = field.node_stress.get(&id_b).copied().unwrap_or(0.0);
    sa.min(sb)
}

/// Radius-neighborhood candidate edges with nearest-pair bridges added until
/// the graph is connected.
fn radius_graph(nodes: &[Point2], radius: f64, root: usize) -> Vec<(f64, usize, usize)> {
    let m = nodes.len();
    let idx = NeighborIndex::from_points(nodes.to_vec());
    let mut edges = Vec::new();
    for i in 0..m {
        for j in idx
            .query_radius(nodes[i], radius)
            .expect("radius is non-negative")
        {
            if j > i {
                edges.push((nodes[i].distance(nodes[j]), i, j));
            }
        }
    }
    // Bridge disconnected components through their closest cross pair.
    loop {
        let mut uf = UnionFind::new(m);
        for &(_, i, j) in &edges {
            uf.union(i, j);
        }
        let root_set = uf.find(root);
        if (0..m).all(|i| uf.find(i) == root_set) {
            break;
        }
        let mut bridge: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            if uf.find(i) != root_set {
                continue;
            }
            for j in 0..m {
                if uf.find(j) == root_set {
                    continue;
                }
                let cand = (nodes[i].distance(nodes[j]), i, j);
                if bridge.is_none() || cand < bridge.unwrap() {
                    bridge = Some(cand);
                }
            }
        }
        edges.push(bridge.expect("disconnected graph has a cross pair"));
    }
    edges
}

/// Crack growth over time: monotone prefixes of the final pattern, cut by
/// trace step index. Frame `frame_count` equals the full pattern.
pub fn simulate_timesteps(
    mesh: &TriMesh,
    idx: &NeighborIndex,
    impact: &ImpactSpec,
    radius: f64,
    branch_k: usize,
    frame_count: usize,
) -> Result<Vec<CrackPattern>> {
    if frame_count == 0 {
        return Err(Error::invalid("frame_count must be at least 1"));
    }
    let field = propagate(mesh, idx, impact, radius, branch_k)?;
    Ok(pattern_frames(&field, |id| idx.position(id), impact.impact_point, frame_count))
}

/// Splits a finished field into `frame_count` growing pattern prefixes.
pub fn pattern_frames(
    field: &StressField,
    position: impl Fn(usize) -> Point2,
    impact_point: Point2,
    frame_count: usize,
) -> Vec<CrackPattern> {
    let full = extract_with_positions(field, &position, impact_point);
    let max_step = field.max_step();
    if max_step == 0 || full.is_empty() {
        return vec![full; frame_count.max(1)];
    }

    // Visit step per compact node index; the impact root is step 0.
    let ids: Vec<usize> = field.visited.iter().copied().collect();
    let step_of_id: BTreeMap<usize, usize> = field
        .trace
        .iter()
        .map(|t| (t.child, t.step))
        .collect();
    let node_steps: Vec<usize> = ids
        .iter()
        .map(|id| step_of_id.get(id).copied().unwrap_or(0))
        .collect();

    let mut frames = Vec::with_capacity(frame_count);
    for t in 1..=frame_count {
        let cutoff = t * max_step / frame_count;
        let keep: Vec<bool> = node_steps.iter().map(|&s| s <= cutoff).collect();
        let mut remap = vec![usize::MAX; full.nodes.len()];
        let mut nodes = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = nodes.len();
                nodes.push(full.nodes[i]);
            }
        }
        let edges: Vec<PatternEdge> = full
            .edges
            .iter()
            .filter(|e| keep[e.a] && keep[e.b])
            .map(|e| PatternEdge {
                a: remap[e.a],
                b: remap[e.b],
                stress: e.stress,
            })
            .collect();
        let impact_node = full.impact_node.map(|i| remap[i]);
        frames.push(CrackPattern {
            nodes,
            edges,
            impact_node,
        });
    }
    frames
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    /// Returns false when the two were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
