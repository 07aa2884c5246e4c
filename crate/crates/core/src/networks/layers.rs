use candle_core::{Tensor, Var};

use super::params::ParamStore;
use crate::error::Result;

/// 2-D convolution with bias, square kernel, "same" padding for stride 1.
#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, path: &str, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Result<Self> {
        let fan_in = (c_in * kernel * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = store.uniform(&format!("{path}.weight"), &[c_out, c_in, kernel, kernel], bound)?;
        let bias = store.constant(&format!("{path}.bias"), &[c_out], 0.0)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        })
    }

    /// Output layer: weights drawn `weight_scale` times narrower than
    /// [`Conv2d::new`], constant bias.
    pub fn head(
        store: &mut ParamStore,
        path: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        weight_scale: f64,
        bias: f64,
    ) -> Result<Self> {
        let fan_in = (c_in * kernel * kernel) as f64;
        let bound = weight_scale * (6.0 / fan_in).sqrt();
        let weight = store.uniform(&format!("{path}.weight"), &[c_out, c_in, kernel, kernel], bound)?;
        let bias = store.constant(&format!("{path}.bias"), &[c_out], bias)?;
        Ok(Self {
            weight,
            bias,
            stride: 1,
            padding: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.as_tensor().reshape((1, c, 1, 1))?)?)
    }
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, 0.1)?)
}
