//! Loop-nest re-implementation of the graph network, written against the
//! wireframe directly (not the precomputed graph inputs).

use wirematch::gnn::{normalize_coords, GnnConfig};
use wirematch::numerics::ParamStore;
use wirematch::wireframe::Wireframe;

pub type Mat = Vec<Vec<f64>>;

fn weight(store: &ParamStore<f64>, name: &str) -> Mat {
    let t = store.get(name).unwrap_or_else(|| panic!("missing {name}"));
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

pub fn linear(store: &ParamStore<f64>, name: &str, x: &Mat) -> Mat {
    let w = weight(store, &format!("{name}.weight"));
    let b = weight(store, &format!("{name}.bias"));
    x.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|o| {
                    let mut s = b[0][o];
                    for (i, v) in row.iter().enumerate() {
                        s += v * w[i][o];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn mlp3(store: &ParamStore<f64>, prefix: &str, x: &Mat) -> Mat {
    let mut h = x.clone();
    for l in 0..3 {
        h = linear(store, &format!("{prefix}.{l}"), &h);
        if l < 2 {
            for row in &mut h {
                for v in row.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }
    h
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

/// `x ← x + ψ([x ‖ MHA(x, t)])`.
pub fn attention(store: &ParamStore<f64>, cfg: &GnnConfig, prefix: &str, x: &Mat, t: &Mat) -> Mat {
    let d = cfg.dim;
    let dh = d / cfg.heads;
    let msg: Mat = if t.is_empty() {
        vec![vec![0.0; d]; x.len()]
    } else {
        let q = linear(store, &format!("{prefix}.q"), x);
        let k = linear(store, &format!("{prefix}.k"), t);
        let v = linear(store, &format!("{prefix}.v"), t);
        let mut cat = vec![vec![0.0; d]; x.len()];
        for h in 0..cfg.heads {
            for i in 0..x.len() {
                let logits: Vec<f64> = (0..t.len())
                    .map(|j| {
                        let mut s = 0.0;
                        for c in h * dh..(h + 1) * dh {
                            s += q[i][c] * k[j][c];
                        }
                        s / (dh as f64).sqrt()
                    })
                    .collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for j in 0..t.len() {
                    for c in h * dh..(h + 1) * dh {
                        cat[i][c] += e[j] / z * v[j][c];
                    }
                }
            }
        }
        linear(store, &format!("{prefix}.merge"), &cat)
    };
    let inp: Mat = x.iter().zip(&msg).map(|(a, m)| concat(a, m)).collect();
    let delta = mlp3(store, &format!("{prefix}.psi"), &inp);
    x.iter()
        .zip(&delta)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
        .collect()
}

fn coords(w: &Wireframe) -> Vec<[f64; 2]> {
    w.nodes
        .iter()
        .map(|n| normalize_coords(n.position, w.size.width as f64, w.size.height as f64))
        .collect()
}

/// Edge encoding anchored at node `j` for the edge towards node `i`.
pub fn edge_encoding(store: &ParamStore<f64>, w: &Wireframe, j: usize, i: usize, line: usize) -> Vec<f64> {
    let c = coords(w);
    let input = vec![vec![
        c[j][0],
        c[j][1],
        c[i][0] - c[j][0],
        c[i][1] - c[j][1],
        w.edges[line].score,
    ]];
    mlp3(store, "pe_edge", &input).remove(0)
}

pub fn line_message_passing(store: &ParamStore<f64>, block: usize, w: &Wireframe, x: &Mat) -> Mat {
    let mut out = x.clone();
    for i in 0..w.num_nodes() {
        let nbrs = &w.adjacency[i];
        if nbrs.is_empty() {
            continue;
        }
        let mut acc = vec![0.0; x[i].len()];
        for &(j, line) in nbrs {
            let de = edge_encoding(store, w, j, i, line);
            let inp = vec![concat(&concat(&x[i], &x[j]), &de)];
            let m = mlp3(store, &format!("block{block}.line.phi"), &inp).remove(0);
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
        for (o, a) in out[i].iter_mut().zip(acc) {
            *o += a / nbrs.len() as f64;
        }
    }
    out
}

pub fn initial_features(store: &ParamStore<f64>, w: &Wireframe) -> Mat {
    let c = coords(w);
    let pin: Mat = w
        .nodes
        .iter()
        .zip(&c)
        .map(|(n, c)| vec![c[0], c[1], n.score])
        .collect();
    let dp = mlp3(store, "pe_point", &pin);
    let desc: Mat = w.nodes.iter().map(|n| n.desc.clone()).collect();
    let dv = linear(store, "input_proj", &desc);
    dp.iter()
        .zip(&dv)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn forward(store: &ParamStore<f64>, cfg: &GnnConfig, wa: &Wireframe, wb: &Wireframe) -> (Mat, Mat) {
    let mut xa = initial_features(store, wa);
    let mut xb = initial_features(store, wb);
    for m in 0..cfg.layers {
        let p = format!("block{m}.self");
        xa = attention(store, cfg, &p, &xa, &xa.clone());
        xb = attention(store, cfg, &p, &xb, &xb.clone());
        if cfg.line_message_passing {
            xa = line_message_passing(store, m, wa, &xa);
            xb = line_message_passing(store, m, wb, &xb);
        }
        let p = format!("block{m}.cross");
        let na = attention(store, cfg, &p, &xa, &xb);
        let nb = attention(store, cfg, &p, &xb, &xa);
        xa = na;
        xb = nb;
    }
    (linear(store, "final", &xa), linear(store, "final", &xb))
}

pub fn max_abs_diff(a: &Mat, t: &wirematch::numerics::Tensor<f64>) -> f64 {
    assert_eq!(a.len(), t.rows());
    let mut m: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((v - t.at(r, c)).abs());
        }
    }
    m
}
