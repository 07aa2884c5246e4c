use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::Seeds;

/// Trainable parameters keyed by module path (`encoder.l0.conv0.weight`, ...).
///
/// Initial values come from a per-path random stream, so the value of a
/// parameter depends only on the run seed and its path.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    seeds: Seeds,
    dtype: DType,
}

impl ParamStore {
    pub fn new(seeds: Seeds, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            seeds,
            dtype,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn insert(&mut self, path: &str, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        if self.vars.contains_key(path) {
            return Err(Error::InvalidValue(format!("duplicate parameter {path}")));
        }
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let v = Var::from_tensor(&t)?;
        self.vars.insert(path.to_string(), v.clone());
        Ok(v)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, path: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let mut rng = self.seeds.stream(path, 0);
        let values: Vec<f64> = if bound > 0.0 {
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        } else {
            vec![0.0; n]
        };
        self.insert(path, values, shape)
    }

    pub fn constant(&mut self, path: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.insert(path, vec![value; n], shape)
    }

    /// Random draws that are not registered as parameters (frozen weights).
    pub fn frozen_uniform(seeds: &Seeds, tag: &str, shape: &[usize], bound: f64, dtype: DType) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let mut rng = seeds.stream(tag, 0);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Ok(Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(dtype)?)
    }

    pub fn get(&self, path: &str) -> Option<&Var> {
        self.vars.get(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Parameters whose path starts with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a String, &'a Var)> + 'a {
        self.vars.iter().filter(move |(k, _)| k.starts_with(prefix))
    }

    /// Overwrites parameter values in place, e.g. from a checkpoint.
    pub fn load(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        for (k, v) in &self.vars {
            let t = values
                .get(k)
                .ok_or_else(|| Error::InvalidValue(format!("checkpoint lacks parameter {k}")))?;
            if t.dims() != v.dims() {
                return Err(Error::shape("load parameter", t.dims(), v.dims()));
            }
            v.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().detach()))
            .collect()
    }
}
