//! Wireframe front-end: drops keypoints that duplicate line endpoints, merges
//! close-by endpoints by single linkage and emits the node/edge graph the
//! network consumes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureSet, ImageSize, Point2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WireframeConfig {
    /// Pixels. Keypoints within this distance of an endpoint are dropped and
    /// endpoints within it of each other are merged.
    pub merge_distance: f64,
}

impl Default for WireframeConfig {
    fn default() -> Self {
        WireframeConfig { merge_distance: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSource {
    /// Kept keypoint with its index in the feature set.
    Keypoint(usize),
    /// Merged endpoints, each as `(line index, 0 = start | 1 = end)`.
    Endpoints(Vec<(usize, usize)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireNode {
    pub position: Point2,
    pub score: f64,
    pub desc: Vec<f64>,
    pub source: NodeSource,
}

impl WireNode {
    pub fn is_endpoint(&self) -> bool {
        matches!(self.source, NodeSource::Endpoints(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireEdge {
    /// Node of the line's start and end point.
    pub nodes: [usize; 2],
    pub score: f64,
    pub line: usize,
    /// Detector endpoint positions before merging.
    pub original: [Point2; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wireframe {
    pub size: ImageSize,
    pub nodes: Vec<WireNode>,
    /// One edge per input line, in input order.
    pub edges: Vec<WireEdge>,
    /// Per node: `(neighbor node, edge index)` for every incident edge.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl Wireframe {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Wireframe node holding keypoint `k`, if it was kept.
    pub fn keypoint_node(&self, k: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.source == NodeSource::Keypoint(k))
    }

    pub fn descriptor_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.desc.len())
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, keeps labels independent of union order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Single-linkage clusters of the endpoints (index `2 * line + end`).
///
/// A line whose two endpoints end up in one cluster would become a self-loop;
/// its endpoints are taken out of merging and the clustering is redone.
fn cluster_endpoints(endpoints: &[Point2], d: f64) -> Vec<usize> {
    let n = endpoints.len();
    let mut isolated = vec![false; n];
    loop {
        let mut sets = DisjointSets::new(n);
        for p in 0..n {
            if isolated[p] {
                continue;
            }
            for q in p + 1..n {
                if !isolated[q] && dist(endpoints[p], endpoints[q]) <= d {
                    sets.union(p, q);
                }
            }
        }
        let roots: Vec<usize> = (0..n).map(|p| sets.find(p)).collect();
        let mut changed = false;
        for line in 0..n / 2 {
            if roots[2 * line] == roots[2 * line + 1] {
                isolated[2 * line] = true;
                isolated[2 * line + 1] = true;
                changed = true;
            }
        }
        if !changed {
            return roots;
        }
    }
}

fn mean_unit(descs: &[&[f64]]) -> Vec<f64> {
    let dim = descs[0].len();
    let mut m = vec![0.0; dim];
    for d in descs {
        for (a, b) in m.iter_mut().zip(d.iter()) {
            *a += b;
        }
    }
    let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 1e-12 {
        m.iter_mut().for_each(|v| *v /= n);
        m
    } else {
        descs[0].to_vec()
    }
}

pub fn build_wireframe(features: &FeatureSet, cfg: &WireframeConfig) -> Wireframe {
    let d = cfg.merge_distance.max(0.0);
    let size = features.size();
    let endpoints: Vec<Point2> = features
        .lines
        .iter()
        .flat_map(|l| [l.start(), l.end()])
        .collect();

    let mut nodes = Vec::new();
    for (k, kp) in features.keypoints.iter().enumerate() {
        let p = kp.position();
        if endpoints.iter().all(|&e| dist(p, e) > d) {
            nodes.push(WireNode {
                position: p,
                score: kp.score,
                desc: kp.desc.clone(),
                source: NodeSource::Keypoint(k),
            });
        }
    }

    let roots = cluster_endpoints(&endpoints, d);
    // clusters keyed by their smallest member, which is the root
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, &r) in roots.iter().enumerate() {
        clusters.entry(r).or_default().push(p);
    }
    let mut endpoint_node = vec![0usize; endpoints.len()];
    for members in clusters.values() {
        let node = nodes.len();
        let mut c = [0.0, 0.0];
        let mut score = f64::NEG_INFINITY;
        let mut descs = Vec::with_capacity(members.len());
        for &p in members {
            let (line, end) = (p / 2, p % 2);
            c[0] += endpoints[p][0];
            c[1] += endpoints[p][1];
            score = score.max(features.line_score(line));
            let l = &features.lines[line];
            descs.push(if end == 0 { &l.desc1[..] } else { &l.desc2[..] });
            endpoint_node[p] = node;
        }
        let k = members.len() as f64;
        nodes.push(WireNode {
            position: [c[0] / k, c[1] / k],
            score,
            desc: mean_unit(&descs),
            source: NodeSource::Endpoints(members.iter().map(|&p| (p / 2, p % 2)).collect()),
        });
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    let edges: Vec<WireEdge> = features
        .lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let (a, b) = (endpoint_node[2 * i], endpoint_node[2 * i + 1]);
            adjacency[a].push((b, i));
            adjacency[b].push((a, i));
            WireEdge {
                nodes: [a, b],
                score: features.line_score(i),
                line: i,
                original: [l.start(), l.end()],
            }
        })
        .collect();

    Wireframe {
        size,
        nodes,
        edges,
        adjacency,
    }
}

/// Number of nodes per degree (0 for an isolated keypoint, 2 for a corner, ...).
pub fn connectivity_histogram(w: &Wireframe) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for adj in &w.adjacency {
        *h.entry(adj.len()).or_insert(0) += 1;
    }
    h
}
