use rand::Rng;
use wirematch::features::{FeatureSet, Keypoint, LineSegment};
use wirematch::wireframe::{WireEdge, Wireframe};

pub fn unit_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random keypoints and lines. Roughly a third of the lines start near the
/// end of the previous one so that merged nodes and corners appear.
pub fn random_features<R: Rng>(
    rng: &mut R,
    keypoints: usize,
    lines: usize,
    desc_dim: usize,
    width: u32,
    height: u32,
) -> FeatureSet {
    let (w, h) = (width as f64, height as f64);
    let mut fs = FeatureSet::empty(width, height);
    for _ in 0..keypoints {
        fs.keypoints.push(Keypoint {
            x: rng.random_range(0.0..w),
            y: rng.random_range(0.0..h),
            score: rng.random_range(0.0..1.0),
            desc: unit_vec(rng, desc_dim),
        });
    }
    let mut prev_end: Option<[f64; 2]> = None;
    while fs.lines.len() < lines {
        let start = match prev_end {
            Some(p) if rng.random_bool(0.35) => [
                (p[0] + rng.random_range(-1.5..1.5)).clamp(0.0, w - 1e-6),
                (p[1] + rng.random_range(-1.5..1.5)).clamp(0.0, h - 1e-6),
            ],
            _ => [rng.random_range(0.0..w), rng.random_range(0.0..h)],
        };
        let end = [rng.random_range(0.0..w), rng.random_range(0.0..h)];
        let len = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt();
        if len < 8.0 {
            continue;
        }
        fs.lines.push(LineSegment {
            x1: start[0],
            y1: start[1],
            x2: end[0],
            y2: end[1],
            score: Some(rng.random_range(0.1..1.0)),
            desc1: unit_vec(rng, desc_dim),
            desc2: unit_vec(rng, desc_dim),
        });
        prev_end = Some(end);
    }
    fs
}

/// Relabels nodes so that new node `k` is old node `perm[k]`. Edge order is
/// kept, so line indices are unchanged.
pub fn permute_nodes(w: &Wireframe, perm: &[usize]) -> Wireframe {
    let mut inv = vec![0; perm.len()];
    for (k, &old) in perm.iter().enumerate() {
        inv[old] = k;
    }
    let nodes: Vec<_> = perm.iter().map(|&old| w.nodes[old].clone()).collect();
    let edges: Vec<WireEdge> = w
        .edges
        .iter()
        .map(|e| WireEdge {
            nodes: [inv[e.nodes[0]], inv[e.nodes[1]]],
            ..e.clone()
        })
        .collect();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        adjacency[e.nodes[0]].push((e.nodes[1], i));
        adjacency[e.nodes[1]].push((e.nodes[0], i));
    }
    Wireframe {
        size: w.size,
        nodes,
        edges,
        adjacency,
    }
}

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
