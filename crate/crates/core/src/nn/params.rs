use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tape::{BnStats, Tape, Var};
use super::tensor::{Precision, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BnId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Named trainable tensors plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub params: Vec<Param<T>>,
    pub buffers: Vec<(String, BnStats<T>)>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }
}

/// Conv and linear weights: He-style uniform in +-sqrt(6 / fan_in).
pub fn fan_in_uniform<T: Real>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    uniform(shape, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}

pub fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect(),
    }
}

pub fn normal<T: Real>(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::of(z * std)
            })
            .collect(),
    }
}

impl<T: Real> ParamStore<T> {
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_bn(&mut self, name: impl Into<String>, channels: usize) -> BnId {
        self.buffers.push((name.into(), BnStats::new(channels)));
        BnId(self.buffers.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn bn_mut(&mut self, id: BnId) -> &mut BnStats<T> {
        &mut self.buffers[id.0].1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total trainable scalars (running statistics excluded).
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            buffers: self
                .buffers
                .iter()
                .map(|(n, s)| {
                    let c = |v: &[T]| v.iter().map(|x| U::of(x.to_f64().unwrap_or(f64::NAN))).collect();
                    (n.clone(), BnStats { mean: c(&s.mean), var: c(&s.var) })
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = CheckpointHeader {
            precision: T::PRECISION,
            tensors: Vec::new(),
        };
        let mut payload = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, data: &[T], payload: &mut Vec<u8>| {
            header.tensors.push(TensorEntry {
                name,
                shape,
                offset: payload.len(),
                len: data.len(),
            });
            for &v in data {
                v.to_le(payload);
            }
        };
        for p in &self.params {
            push(p.name.clone(), p.value.shape.clone(), &p.value.data, &mut payload);
        }
        for (name, s) in &self.buffers {
            push(format!("{name}.running_mean"), vec![s.mean.len()], &s.mean, &mut payload);
            push(format!("{name}.running_var"), vec![s.var.len()], &s.var, &mut payload);
        }
        let head = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
        let mut bytes = (head.len() as u64).to_le_bytes().to_vec();
        bytes.extend(head);
        bytes.extend(payload);
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads values into an already-built store; names and shapes must match.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: String| Error::Schema(format!("{}: {m}", path.display()));
        if bytes.len() < 8 {
            return Err(bad("truncated checkpoint".into()));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let head = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(head).map_err(|e| Error::json(path, e))?;
        if header.precision != T::PRECISION {
            return Err(bad(format!("checkpoint precision is {:?}", header.precision)));
        }
        let payload = &bytes[8 + hlen..];
        let width = std::mem::size_of::<T>();
        let read = |e: &TensorEntry| -> Result<Vec<T>> {
            let raw = payload
                .get(e.offset..e.offset + e.len * width)
                .ok_or_else(|| bad(format!("tensor {} out of bounds", e.name)))?;
            Ok(raw.chunks_exact(width).map(T::from_le).collect())
        };
        let find = |name: &str| {
            header
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))
        };
        for p in &mut self.params {
            let e = find(&p.name)?;
            if e.shape != p.value.shape {
                return Err(bad(format!("{}: shape {:?} vs {:?}", p.name, e.shape, p.value.shape)));
            }
            p.value.data = read(e)?;
        }
        for (name, s) in &mut self.buffers {
            s.mean = read(find(&format!("{name}.running_mean"))?)?;
            s.var = read(find(&format!("{name}.running_var"))?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// byte offset into the payload
    offset: usize,
    /// element count
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    precision: Precision,
    tensors: Vec<TensorEntry>,
}

/// Tape variables for the parameters used in one forward pass. Each
/// parameter is placed on the tape once, on first use.
#[derive(Debug, Default)]
pub struct Bound {
    vars: Vec<Option<Var>>,
}

impl Bound {
    pub fn var<T: Real>(&mut self, tape: &mut Tape<T>, store: &ParamStore<T>, id: ParamId) -> Var {
        if self.vars.len() < store.len() {
            self.vars.resize(store.len(), None);
        }
        *self.vars[id.0].get_or_insert_with(|| tape.leaf(store.get(id).clone()))
    }

    pub fn get(&self, id: ParamId) -> Option<Var> {
        self.vars.get(id.0).copied().flatten()
    }

    /// Parameter gradients aligned with the store; unused parameters get `None`.
    pub fn grads<T: Real>(&self, grads: &mut super::tape::Grads<T>, store: &ParamStore<T>) -> Vec<Option<Tensor<T>>> {
        (0..store.len())
            .map(|i| self.get(ParamId(i)).and_then(|v| grads.take(v)))
            .collect()
    }
}
