use wirematch::features::FeatureSet;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Connected components of the endpoints under `dist <= d` by plain
/// breadth-first search over the full distance graph. Endpoints of a line
/// that would share a component are excluded and the search repeats.
pub fn endpoint_components(endpoints: &[[f64; 2]], d: f64) -> Vec<Vec<usize>> {
    let n = endpoints.len();
    let mut excluded = vec![false; n];
    loop {
        let mut comp = vec![usize::MAX; n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = comps.len();
            comp[s] = id;
            let mut members = vec![s];
            let mut head = 0;
            while head < members.len() {
                let p = members[head];
                head += 1;
                if excluded[p] {
                    continue;
                }
                for q in 0..n {
                    if comp[q] == usize::MAX && !excluded[q] && dist(endpoints[p], endpoints[q]) <= d {
                        comp[q] = id;
                        members.push(q);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        let mut changed = false;
        for l in 0..n / 2 {
            if comp[2 * l] == comp[2 * l + 1] {
                excluded[2 * l] = true;
                excluded[2 * l + 1] = true;
                changed = true;
            }
        }
        if !changed {
            return comps;
        }
    }
}

/// Expected node count: keypoints farther than `d` from every endpoint plus
/// the endpoint components.
pub fn expected_nodes(fs: &FeatureSet, d: f64) -> (usize, Vec<Vec<usize>>) {
    let endpoints: Vec<[f64; 2]> = fs.lines.iter().flat_map(|l| [l.start(), l.end()]).collect();
    let kept = fs
        .keypoints
        .iter()
        .filter(|k| endpoints.iter().all(|&e| dist(k.position(), e) > d))
        .count();
    let comps = endpoint_components(&endpoints, d);
    (kept + comps.len(), comps)
}
