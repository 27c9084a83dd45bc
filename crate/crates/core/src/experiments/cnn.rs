use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Padding, Var};
use crate::error::{shape_err, Error, Result};
use crate::grid::grid_coordinate;
use crate::operator::Normalization;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::GridModel;

/// Plain convolutional baseline: its kernels span a fixed number of pixels,
/// so the physical receptive field shrinks as the grid is refined.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CnnConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Output channels of each hidden `kernel x kernel` convolution.
    pub widths: Vec<usize>,
    pub kernel: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub coord_features: bool,
    /// Cyclic instead of zero padding (used to test shift equivariance).
    #[cfg_attr(feature = "serde", serde(default))]
    pub periodic_padding: bool,
    #[cfg_attr(feature = "serde", serde(default))]
    pub normalization: Option<Normalization>,
}

impl CnnConfig {
    pub fn new(in_channels: usize, out_channels: usize, widths: &[usize]) -> Self {
        CnnConfig {
            in_channels,
            out_channels,
            widths: widths.to_vec(),
            kernel: 3,
            coord_features: false,
            periodic_padding: false,
            normalization: None,
        }
    }

    fn lifted_inputs(&self) -> usize {
        self.in_channels + if self.coord_features { 2 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.widths.contains(&0) {
            return Err(Error::Config("cnn channels must be positive".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(alloc::format!("cnn kernel extent {} must be odd", self.kernel)));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let mut c = self.lifted_inputs();
        let mut total = 0;
        for &w in &self.widths {
            total += w * c * self.kernel * self.kernel + w;
            c = w;
        }
        total + self.out_channels * c + self.out_channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedGridCnn {
    pub config: CnnConfig,
    /// `[c_out, c_in, k, k]` per hidden layer, then the `[c_out, c_in, 1, 1]` projection.
    pub kernels: Vec<Tensor>,
    /// `[c_out, 1, 1]` per layer.
    pub biases: Vec<Tensor>,
}

impl FixedGridCnn {
    /// Kernels and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(config: &CnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::split(seed, 0);
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        let mut c = config.lifted_inputs();
        let layers = config.widths.iter().map(|&w| (w, config.kernel)).chain([(config.out_channels, 1)]);
        for (w, k) in layers {
            let fan_in = c * k * k;
            let bound = 1.0 / crate::math::sqrt(fan_in as f64);
            kernels.push(Tensor::new(&[w, c, k, k], (0..w * fan_in).map(|_| rng.uniform_in(-bound, bound)).collect())?);
            biases.push(Tensor::new(&[w, 1, 1], (0..w).map(|_| rng.uniform_in(-bound, bound)).collect())?);
            c = w;
        }
        Ok(FixedGridCnn { config: config.clone(), kernels, biases })
    }

    fn padding(&self) -> Padding {
        if self.config.periodic_padding {
            Padding::Periodic
        } else {
            Padding::SameZero
        }
    }
}

fn channel_column(g: &mut Graph, v: &[f64], f: impl Fn(f64) -> f64) -> Result<Var> {
    Ok(g.constant(Tensor::new(&[v.len(), 1, 1], v.iter().map(|&x| f(x)).collect())?))
}

impl GridModel for FixedGridCnn {
    fn params(&self) -> Vec<&Tensor> {
        self.kernels.iter().zip(&self.biases).flat_map(|(k, b)| [k, b]).collect()
    }

    fn set_params(&mut self, values: &[Tensor]) -> Result<()> {
        let slots: Vec<&mut Tensor> = self.kernels.iter_mut().zip(self.biases.iter_mut()).flat_map(|(k, b)| [k, b]).collect();
        if slots.len() != values.len() || slots.iter().zip(values).any(|(s, v)| s.shape() != v.shape() || v.is_complex()) {
            return Err(shape_err!("cnn parameter list does not match its layers"));
        }
        for (s, v) in slots.into_iter().zip(values) {
            *s = v.clone();
        }
        Ok(())
    }

    fn out_channels(&self) -> usize {
        self.config.out_channels
    }

    fn forward_grid(&self, g: &mut Graph, vars: &[Var], a: Var, periodic: bool, out_resolution: &[usize]) -> Result<Var> {
        let shape = g.shape(a).to_vec();
        if shape.len() != 3 || shape[0] != self.config.in_channels {
            return Err(shape_err!("cnn expects [{}, H, W] input, got {shape:?}", self.config.in_channels));
        }
        if out_resolution != &shape[1..] {
            return Err(Error::Invalid("a fixed-grid cnn only evaluates at its input resolution".into()));
        }
        let (h, w) = (shape[1], shape[2]);
        let mut x = a;
        if let Some(n) = &self.config.normalization {
            let shift = channel_column(g, &n.in_mean, |v| v)?;
            let inv = channel_column(g, &n.in_std, |v| 1.0 / v)?;
            x = g.sub(x, shift)?;
            x = g.mul(x, inv)?;
        }
        if self.config.coord_features {
            let mut coords = vec![0.0; 2 * h * w];
            for i in 0..h {
                for j in 0..w {
                    coords[i * w + j] = grid_coordinate(i, h, periodic);
                    coords[h * w + i * w + j] = grid_coordinate(j, w, periodic);
                }
            }
            let c = g.constant(Tensor::new(&[2, h, w], coords)?);
            x = g.concat(&[x, c], 0)?;
        }
        let layers = self.kernels.len();
        for l in 0..layers {
            x = g.conv2d(x, vars[2 * l], self.padding())?;
            x = g.add(x, vars[2 * l + 1])?;
            if l + 1 < layers {
                x = g.gelu(x)?;
            }
        }
        if let Some(n) = &self.config.normalization {
            let scale = channel_column(g, &n.out_std, |v| v)?;
            let shift = channel_column(g, &n.out_mean, |v| v)?;
            x = g.mul(x, scale)?;
            x = g.add(x, shift)?;
        }
        Ok(x)
    }
}

/// Evaluates the cnn on a 2-d grid function at its own resolution.
pub fn cnn_forward(model: &FixedGridCnn, u: &crate::GridFunction) -> Result<crate::GridFunction> {
    model.predict(u, u.resolution())
}
