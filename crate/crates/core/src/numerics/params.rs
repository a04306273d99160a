//! Named parameter collections and their JSON checkpoint format.
//!
//! A checkpoint is a single JSON object `{name: {"shape": [..], "data": [..]}}`.
//! Numbers are written in their shortest round-trip decimal form, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Inserts a `[fan_in, fan_out]` weight with Xavier-uniform entries.
    pub fn insert_xavier<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.random_range(-limit..=limit)))
            .collect();
        self.insert(name, Tensor::new(vec![fan_in, fan_out], data).expect("sized"));
    }

    pub fn to_json(&self) -> Result<String> {
        let entries: BTreeMap<&str, Entry> = self
            .tensors
            .iter()
            .map(|(k, v)| {
                (
                    k.as_str(),
                    Entry {
                        shape: v.shape().to_vec(),
                        data: v.data().iter().map(|x| x.to_f64_lossy()).collect(),
                    },
                )
            })
            .collect();
        let mut s = serde_json::to_string(&entries)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: BTreeMap<String, Entry> = serde_json::from_str(text)
            .map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        let mut store = ParamStore::new();
        for (name, e) in entries {
            if let Some(bad) = e.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::parse(
                    format!("checkpoint entry `{name}`"),
                    format!("non-finite value at index {bad}"),
                ));
            }
            let data = e.data.into_iter().map(T::lit).collect();
            let t = Tensor::new(e.shape, data)
                .map_err(|err| Error::parse(format!("checkpoint entry `{name}`"), err.to_string()))?;
            store.insert(name, t);
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn xavier_within_limit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::<f64>::new();
        s.insert_xavier("w", 10, 6, &mut rng);
        let limit = (6.0f64 / 16.0).sqrt();
        assert_eq!(s.get("w").unwrap().shape(), &[10, 6]);
        assert!(s.get("w").unwrap().data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn malformed_checkpoint_names_entry() {
        let err = ParamStore::<f64>::from_json(r#"{"a.w": {"shape": [2, 2], "data": [1.0]}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("a.w"), "{err}");
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40)
        ) {
            let mut s = ParamStore::<f64>::new();
            let n = vals.len();
            s.insert("layer.weight", Tensor::new(vec![1, n], vals.clone()).unwrap());
            s.insert("bin", Tensor::scalar(vals[0]));
            let text = s.to_json().unwrap();
            let back = ParamStore::<f64>::from_json(&text).unwrap();
            for (a, b) in back.get("layer.weight").unwrap().data().iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.to_json().unwrap(), text);
        }
    }
}
