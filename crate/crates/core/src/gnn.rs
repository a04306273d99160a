//! Attention graph network over a pair of wireframes.
//!
//! Node features start as a positional encoding of `(x, y, score)` plus a
//! learned projection of the visual descriptor. Each of the `L` blocks then
//! applies self-attention, line message passing along wireframe edges and
//! cross-attention to the other image, all as residual updates. Weights are
//! shared between the two images.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mlp_on_tape, register_mlp, Activation, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::wireframe::Wireframe;

/// Linear layers in each of the encoder, ψ and φ MLPs.
pub const MLP_LAYERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnConfig {
    /// Feature width `D`.
    pub dim: usize,
    /// Number of [self, line, cross] blocks `L`.
    pub layers: usize,
    pub heads: usize,
    /// Width of the input visual descriptors.
    pub desc_dim: usize,
    /// Disables the line message passing layers when false.
    pub line_message_passing: bool,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            dim: 32,
            layers: 3,
            heads: 4,
            desc_dim: 32,
            line_message_passing: true,
        }
    }
}

impl GnnConfig {
    /// Full-size network: `D = 256`, 9 blocks.
    pub fn full_size(desc_dim: usize) -> Self {
        GnnConfig {
            dim: 256,
            layers: 9,
            heads: 4,
            desc_dim,
            line_message_passing: true,
        }
    }

    /// Smallest useful configuration, for gradient checks.
    pub fn tiny(desc_dim: usize) -> Self {
        GnnConfig {
            dim: 8,
            layers: 1,
            heads: 2,
            desc_dim,
            line_message_passing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Invalid(format!(
                "feature width {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Invalid("at least one block is required".into()));
        }
        if self.desc_dim == 0 {
            return Err(Error::Invalid("descriptor width must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    SelfAttention,
    CrossAttention,
}

impl EdgeKind {
    fn tag(self) -> &'static str {
        match self {
            EdgeKind::SelfAttention => "self",
            EdgeKind::CrossAttention => "cross",
        }
    }
}

pub fn attention_prefix(block: usize, kind: EdgeKind) -> String {
    format!("block{block}.{}", kind.tag())
}

/// All learnable tensors of the matcher, including the two dustbin scores.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams<T> {
    pub config: GnnConfig,
    pub store: ParamStore<T>,
}

fn expected_shapes(cfg: &GnnConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.dim;
    let mut out = Vec::new();
    let mut linear = |name: String, i: usize, o: usize| {
        out.push((format!("{name}.weight"), vec![i, o]));
        out.push((format!("{name}.bias"), vec![1, o]));
    };
    let mlp = |dims: [usize; MLP_LAYERS + 1]| dims;
    linear("input_proj".into(), cfg.desc_dim, d);
    for (name, first) in [("pe_point", 3), ("pe_edge", 5)] {
        if name == "pe_edge" && !cfg.line_message_passing {
            continue;
        }
        let dims = mlp([first, d, d, d]);
        for l in 0..MLP_LAYERS {
            linear(format!("{name}.{l}"), dims[l], dims[l + 1]);
        }
    }
    for m in 0..cfg.layers {
        for kind in [EdgeKind::SelfAttention, EdgeKind::CrossAttention] {
            let p = attention_prefix(m, kind);
            for proj in ["q", "k", "v", "merge"] {
                linear(format!("{p}.{proj}"), d, d);
            }
            let dims = mlp([2 * d, d, d, d]);
            for l in 0..MLP_LAYERS {
                linear(format!("{p}.psi.{l}"), dims[l], dims[l + 1]);
            }
        }
        if cfg.line_message_passing {
            let dims = mlp([3 * d, d, d, d]);
            for l in 0..MLP_LAYERS {
                linear(format!("block{m}.line.phi.{l}"), dims[l], dims[l + 1]);
            }
        }
    }
    linear("final".into(), d, d);
    out.push(("dustbin.point".into(), vec![1, 1]));
    out.push(("dustbin.line".into(), vec![1, 1]));
    out
}

impl<T: Scalar> GnnParams<T> {
    /// Xavier-uniform weights, zero biases, dustbins at 1.
    pub fn init<R: Rng + ?Sized>(config: GnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let mut store = ParamStore::new();
        let linear = |store: &mut ParamStore<T>, name: &str, i: usize, o: usize, rng: &mut R| {
            store.insert_xavier(format!("{name}.weight"), i, o, rng);
            store.insert(format!("{name}.bias"), Tensor::zeros(&[1, o]));
        };
        linear(&mut store, "input_proj", config.desc_dim, d, rng);
        register_mlp(&mut store, "pe_point", &[3, d, d, d], rng);
        if config.line_message_passing {
            register_mlp(&mut store, "pe_edge", &[5, d, d, d], rng);
        }
        for m in 0..config.layers {
            for kind in [EdgeKind::SelfAttention, EdgeKind::CrossAttention] {
                let p = attention_prefix(m, kind);
                for proj in ["q", "k", "v", "merge"] {
                    linear(&mut store, &format!("{p}.{proj}"), d, d, rng);
                }
                register_mlp(&mut store, &format!("{p}.psi"), &[2 * d, d, d, d], rng);
            }
            if config.line_message_passing {
                register_mlp(&mut store, &format!("block{m}.line.phi"), &[3 * d, d, d, d], rng);
            }
        }
        linear(&mut store, "final", d, d, rng);
        store.insert("dustbin.point", Tensor::scalar(T::one()));
        store.insert("dustbin.line", Tensor::scalar(T::one()));
        Ok(GnnParams { config, store })
    }

    /// Wraps a loaded checkpoint, checking it against `config`.
    pub fn from_store(config: GnnConfig, store: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let expected = expected_shapes(&config);
        for (name, shape) in &expected {
            match store.get(name) {
                None => {
                    return Err(Error::Incompatible(format!(
                        "checkpoint lacks `{name}` required by D={}, L={}",
                        config.dim, config.layers
                    )))
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Incompatible(format!(
                        "`{name}` has shape {:?}, D={} L={} needs {:?}",
                        t.shape(),
                        config.dim,
                        config.layers,
                        shape
                    )))
                }
                _ => {}
            }
        }
        if store.len() != expected.len() {
            let extra = store
                .names()
                .find(|n| !expected.iter().any(|(e, _)| e == *n))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Incompatible(format!(
                "checkpoint has parameter `{extra}` unknown to D={}, L={}",
                config.dim, config.layers
            )));
        }
        Ok(GnnParams { config, store })
    }
}

/// Network inputs derived from one wireframe.
#[derive(Clone, Debug)]
pub struct GraphInput<T> {
    pub num_nodes: usize,
    /// `[n, desc_dim]` visual descriptors.
    pub desc: Tensor<T>,
    /// `[n, 3]` rows of `(x̃, ỹ, s_p)` with coordinates scaled to `[-1, 1]`.
    pub point_enc_input: Tensor<T>,
    /// `[2E, 5]` rows of `(x̃, ỹ, x̃' - x̃, ỹ' - ỹ, s_l)`, one per
    /// (node, incident edge); row `2e` is anchored at the start node of edge
    /// `e`, row `2e + 1` at its end node.
    pub edge_enc_input: Tensor<T>,
    /// Anchor node of each incidence row.
    pub incidence_anchor: Vec<usize>,
    /// Opposite endpoint of each incidence row.
    pub incidence_other: Vec<usize>,
    /// Per node `1 / degree`, or 0 for isolated nodes.
    pub inv_degree: Vec<T>,
    /// Start / end node of every line.
    pub line_starts: Vec<usize>,
    pub line_ends: Vec<usize>,
}

/// Image coordinates mapped to `[-1, 1]` by the image half-extent.
pub fn normalize_coords(p: [f64; 2], width: f64, height: f64) -> [f64; 2] {
    let (hw, hh) = (width / 2.0, height / 2.0);
    [(p[0] - hw) / hw, (p[1] - hh) / hh]
}

impl<T: Scalar> GraphInput<T> {
    pub fn from_wireframe(w: &Wireframe) -> Result<Self> {
        let n = w.num_nodes();
        let dim = w.descriptor_dim().unwrap_or(0);
        let (wd, ht) = (w.size.width as f64, w.size.height as f64);
        let mut desc = Vec::with_capacity(n * dim);
        let mut pin = Vec::with_capacity(n * 3);
        let coords: Vec<[f64; 2]> = w
            .nodes
            .iter()
            .map(|node| normalize_coords(node.position, wd, ht))
            .collect();
        for (i, node) in w.nodes.iter().enumerate() {
            if node.desc.len() != dim {
                return Err(Error::Shape(format!(
                    "node {i} descriptor has {} entries, expected {dim}",
                    node.desc.len()
                )));
            }
            desc.extend(node.desc.iter().map(|&v| T::lit(v)));
            pin.extend([coords[i][0], coords[i][1], node.score].map(T::lit));
        }
        let mut ein = Vec::with_capacity(w.num_edges() * 10);
        let mut anchor = Vec::with_capacity(2 * w.num_edges());
        let mut other = Vec::with_capacity(2 * w.num_edges());
        for e in &w.edges {
            for (a, b) in [(e.nodes[0], e.nodes[1]), (e.nodes[1], e.nodes[0])] {
                let (pa, pb) = (coords[a], coords[b]);
                ein.extend([pa[0], pa[1], pb[0] - pa[0], pb[1] - pa[1], e.score].map(T::lit));
                anchor.push(a);
                other.push(b);
            }
        }
        let inv_degree = (0..n)
            .map(|i| match w.degree(i) {
                0 => T::zero(),
                k => T::one() / T::from_usize_lossy(k),
            })
            .collect();
        Ok(GraphInput {
            num_nodes: n,
            desc: Tensor::matrix(n, dim, desc)?,
            point_enc_input: Tensor::matrix(n, 3, pin)?,
            edge_enc_input: Tensor::matrix(anchor.len(), 5, ein)?,
            incidence_anchor: anchor,
            incidence_other: other,
            inv_degree,
            line_starts: w.edges.iter().map(|e| e.nodes[0]).collect(),
            line_ends: w.edges.iter().map(|e| e.nodes[1]).collect(),
        })
    }

    pub fn num_lines(&self) -> usize {
        self.line_starts.len()
    }
}

/// Positional encodings: `d^p` per node and `d^e` per (node, incident edge).
/// `d^e` is `None` when line message passing is disabled or there are no lines.
pub fn encode_positions<T: Scalar>(
    tape: &mut Tape<T>,
    params: &GnnParams<T>,
    graph: &GraphInput<T>,
) -> Result<(Var, Option<Var>)> {
    let pin = tape.leaf(graph.point_enc_input.clone());
    let dp = mlp_on_tape(tape, &params.store, "pe_point", MLP_LAYERS, Activation::Relu, pin)?;
    let de = if params.config.line_message_passing && !graph.incidence_anchor.is_empty() {
        let ein = tape.leaf(graph.edge_enc_input.clone());
        Some(mlp_on_tape(tape, &params.store, "pe_edge", MLP_LAYERS, Activation::Relu, ein)?)
    } else {
        None
    };
    Ok((dp, de))
}

fn linear<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, name: &str, x: Var) -> Result<Var> {
    let w = tape.param(store, &format!("{name}.weight"))?;
    let b = tape.param(store, &format!("{name}.bias"))?;
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Multi-head attention message from `x_tgt` to every row of `x_src`.
/// An empty target set yields a zero message.
pub fn attention_message<T: Scalar>(
    tape: &mut Tape<T>,
    params: &GnnParams<T>,
    prefix: &str,
    x_src: Var,
    x_tgt: Var,
) -> Result<Var> {
    let cfg = &params.config;
    let n_src = tape.value(x_src).rows();
    if tape.value(x_tgt).rows() == 0 || n_src == 0 {
        return Ok(tape.leaf(Tensor::zeros(&[n_src, cfg.dim])));
    }
    let store = &params.store;
    let q = linear(tape, store, &format!("{prefix}.q"), x_src)?;
    let k = linear(tape, store, &format!("{prefix}.k"), x_tgt)?;
    let v = linear(tape, store, &format!("{prefix}.v"), x_tgt)?;
    let dh = cfg.head_dim();
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let s = tape.matmul_nt(qh, kh)?;
        let s = tape.scale(s, scale);
        let p = tape.softmax_rows(s)?;
        heads.push(tape.matmul(p, vh)?);
    }
    let cat = tape.concat_cols(&heads)?;
    linear(tape, store, &format!("{prefix}.merge"), cat)
}

/// Residual update `x ← x + ψ([x ‖ a(x; E)])`.
pub fn attention_update<T: Scalar>(
    tape: &mut Tape<T>,
    params: &GnnParams<T>,
    prefix: &str,
    x_src: Var,
    x_tgt: Var,
) -> Result<Var> {
    let a = attention_message(tape, params, prefix, x_src, x_tgt)?;
    let cat = tape.concat_cols(&[x_src, a])?;
    let delta = mlp_on_tape(
        tape,
        &params.store,
        &format!("{prefix}.psi"),
        MLP_LAYERS,
        Activation::Relu,
        cat,
    )?;
    tape.add(x_src, delta)
}

/// Residual update `x_i ← x_i + mean_j φ([x_i ‖ x_j ‖ d^e_j])` over the
/// line neighbors `j` of `i`, where `d^e_j` is anchored at `j` on the edge
/// towards `i`. Isolated nodes pass through.
pub fn line_message_passing<T: Scalar>(
    tape: &mut Tape<T>,
    params: &GnnParams<T>,
    block: usize,
    x: Var,
    graph: &GraphInput<T>,
    edge_enc: Option<Var>,
) -> Result<Var> {
    let Some(de) = edge_enc else {
        return Ok(x);
    };
    let xi = tape.gather_rows(x, &graph.incidence_other)?;
    let xj = tape.gather_rows(x, &graph.incidence_anchor)?;
    let cat = tape.concat_cols(&[xi, xj, de])?;
    let msg = mlp_on_tape(
        tape,
        &params.store,
        &format!("block{block}.line.phi"),
        MLP_LAYERS,
        Activation::Relu,
        cat,
    )?;
    let agg = tape.scatter_add_rows(msg, &graph.incidence_other, graph.num_nodes)?;
    let agg = tape.scale_rows(agg, &graph.inv_degree)?;
    tape.add(x, agg)
}

/// Final node features `(f^A, f^B)` for a pair of graphs.
pub fn gnn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    params: &GnnParams<T>,
    a: &GraphInput<T>,
    b: &GraphInput<T>,
) -> Result<(Var, Var)> {
    let cfg = params.config;
    for (name, g) in [("A", a), ("B", b)] {
        if g.desc.cols() != cfg.desc_dim && g.num_nodes > 0 {
            return Err(Error::Shape(format!(
                "image {name} has {}-d descriptors, network expects {}",
                g.desc.cols(),
                cfg.desc_dim
            )));
        }
    }
    let init = |tape: &mut Tape<T>, g: &GraphInput<T>| -> Result<(Var, Option<Var>)> {
        let (dp, de) = encode_positions(tape, params, g)?;
        let d = tape.leaf(g.desc.clone());
        let dvis = linear(tape, &params.store, "input_proj", d)?;
        Ok((tape.add(dp, dvis)?, de))
    };
    let (mut xa, de_a) = init(tape, a)?;
    let (mut xb, de_b) = init(tape, b)?;
    for m in 0..cfg.layers {
        let p = attention_prefix(m, EdgeKind::SelfAttention);
        xa = attention_update(tape, params, &p, xa, xa)?;
        xb = attention_update(tape, params, &p, xb, xb)?;
        if cfg.line_message_passing {
            xa = line_message_passing(tape, params, m, xa, a, de_a)?;
            xb = line_message_passing(tape, params, m, xb, b, de_b)?;
        }
        let p = attention_prefix(m, EdgeKind::CrossAttention);
        let new_a = attention_update(tape, params, &p, xa, xb)?;
        let new_b = attention_update(tape, params, &p, xb, xa)?;
        xa = new_a;
        xb = new_b;
    }
    let fa = linear(tape, &params.store, "final", xa)?;
    let fb = linear(tape, &params.store, "final", xb)?;
    Ok((fa, fb))
}
