use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Activation applied after every layer except the last.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

/// Affine layer `y = x · W + b` with `W: [in, out]` and `b: [1, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Linear<T>>,
    pub activation: Activation,
}

impl<T: Scalar> MlpParams<T> {
    pub fn new(layers: Vec<Linear<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("MLP without layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (i, o) = layer.weight.require_matrix("MLP weight")?;
            if layer.bias.len() != o {
                return Err(Error::Shape(format!(
                    "layer {l}: bias of {} for {o} outputs",
                    layer.bias.len()
                )));
            }
            if l > 0 {
                let prev = layers[l - 1].weight.cols();
                if prev != i {
                    return Err(Error::Shape(format!(
                        "layer {l} takes {i} inputs but layer {} emits {prev}",
                        l - 1
                    )));
                }
            }
        }
        Ok(MlpParams { layers, activation })
    }

    /// Xavier-uniform weights and zero biases for the given layer widths.
    pub fn xavier<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        register_mlp(&mut store, "mlp", dims, rng);
        Self::from_store(&store, "mlp", dims.len() - 1, activation).expect("freshly built")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn from_store(
        store: &ParamStore<T>,
        prefix: &str,
        n_layers: usize,
        activation: Activation,
    ) -> Result<Self> {
        let layers = (0..n_layers)
            .map(|l| {
                let get = |suffix: &str| {
                    let name = format!("{prefix}.{l}.{suffix}");
                    store
                        .get(&name)
                        .cloned()
                        .ok_or(Error::UnknownParam(name))
                };
                Ok(Linear {
                    weight: get("weight")?,
                    bias: get("bias")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, activation)
    }

    pub fn write_to(&self, store: &mut ParamStore<T>, prefix: &str) {
        for (l, layer) in self.layers.iter().enumerate() {
            store.insert(format!("{prefix}.{l}.weight"), layer.weight.clone());
            store.insert(format!("{prefix}.{l}.bias"), layer.bias.clone());
        }
    }
}

/// Adds `{prefix}.{l}.weight` / `{prefix}.{l}.bias` for consecutive `dims`.
pub fn register_mlp<T: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    dims: &[usize],
    rng: &mut R,
) {
    for (l, w) in dims.windows(2).enumerate() {
        store.insert_xavier(format!("{prefix}.{l}.weight"), w[0], w[1], rng);
        store.insert(format!("{prefix}.{l}.bias"), Tensor::zeros(&[1, w[1]]));
    }
}

/// Applies the stored MLP `prefix` with `n_layers` layers to the rows of `x`.
pub fn mlp_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    prefix: &str,
    n_layers: usize,
    activation: Activation,
    x: Var,
) -> Result<Var> {
    let mut h = x;
    for l in 0..n_layers {
        let w = tape.param(store, &format!("{prefix}.{l}.weight"))?;
        let b = tape.param(store, &format!("{prefix}.{l}.bias"))?;
        h = tape.matmul(h, w)?;
        h = tape.add_row(h, b)?;
        if l + 1 < n_layers && activation == Activation::Relu {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Evaluates an MLP on `input`, whose last dimension must equal the input width.
/// Leading dimensions are treated as a batch.
pub fn mlp_forward<T: Scalar>(params: &MlpParams<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = input.shape();
    let Some(&last) = shape.last() else {
        return Err(Error::Shape("MLP input without dimensions".into()));
    };
    if last != params.input_dim() {
        return Err(Error::Shape(format!(
            "MLP expects {} inputs, got last dimension {last}",
            params.input_dim()
        )));
    }
    let rows = input.len() / last.max(1);
    let mut store = ParamStore::new();
    params.write_to(&mut store, "mlp");
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::matrix(rows, last, input.data().to_vec())?);
    let y = mlp_on_tape(&mut tape, &store, "mlp", params.layers.len(), params.activation, x)?;
    let mut out_shape = shape[..shape.len() - 1].to_vec();
    out_shape.push(params.output_dim());
    Tensor::new(out_shape, tape.value(y).data().to_vec())
}
