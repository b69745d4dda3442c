use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of a dense feed-forward classifier.
///
/// `layer_sizes` runs from the input dimension through the hidden widths to
/// the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub use_layernorm: bool,
}

impl MlpConfig {
    pub fn new(layer_sizes: Vec<usize>, use_layernorm: bool) -> Result<Self> {
        let config = MlpConfig {
            layer_sizes,
            activation: Activation::Relu,
            use_layernorm,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "layer_sizes",
                "need at least an input and an output size",
            ));
        }
        if let Some(i) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid("layer_sizes", format!("entry {i} is zero")));
        }
        if self.class_count() < 2 {
            return Err(Error::invalid(
                "layer_sizes",
                "class count must be at least 2",
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    pub fn is_hidden(&self, layer: usize) -> bool {
        layer + 1 < self.num_layers()
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let norm = if self.use_layernorm && self.is_hidden(l) {
                    2 * w[1]
                } else {
                    0
                };
                w[1] * w[0] + w[1] + norm
            })
            .sum()
    }
}

/// Per-unit affine parameters of a layer normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`
    #[serde(rename = "w")]
    pub weight: Matrix,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
    #[serde(rename = "ln", default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<LayerNorm>,
}

impl Layer {
    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        let norm = self
            .norm
            .iter()
            .flat_map(|n| [n.gain.as_slice(), n.shift.as_slice()]);
        [self.weight.data.as_slice(), self.bias.as_slice()]
            .into_iter()
            .chain(norm)
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        let norm = self
            .norm
            .iter_mut()
            .flat_map(|n| [n.gain.as_mut_slice(), n.shift.as_mut_slice()]);
        [self.weight.data.as_mut_slice(), self.bias.as_mut_slice()]
            .into_iter()
            .chain(norm)
    }
}

/// A point in parameter space. Gradients and search directions share this
/// type since they have the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: MlpConfig,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    pub fn zeros(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| Layer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
                norm: (config.use_layernorm && config.is_hidden(l)).then(|| LayerNorm {
                    gain: vec![0.0; w[1]],
                    shift: vec![0.0; w[1]],
                }),
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            layers,
        })
    }

    /// He-normal weights, zero biases, unit gains and zero shifts.
    pub fn init_he<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> Result<Self> {
        let mut params = ModelParams::zeros(config)?;
        for layer in &mut params.layers {
            let fan_in = layer.weight.cols as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for w in &mut layer.weight.data {
                *w = normal.sample(rng);
            }
            if let Some(norm) = &mut layer.norm {
                norm.gain.fill(1.0);
            }
        }
        Ok(params)
    }

    /// Checks that every block has the shape the config demands and all
    /// entries are finite.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cfg = &self.config;
        if self.layers.len() != cfg.num_layers() {
            return Err(Error::shape(
                "layer count",
                cfg.num_layers(),
                self.layers.len(),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (fan_in, fan_out) = (cfg.layer_sizes[l], cfg.layer_sizes[l + 1]);
            let w = &layer.weight;
            if w.rows != fan_out || w.cols != fan_in || w.data.len() != fan_out * fan_in {
                return Err(Error::shape(
                    format!("layer {l} weight"),
                    format!("{fan_out}x{fan_in}"),
                    format!("{}x{} ({} entries)", w.rows, w.cols, w.data.len()),
                ));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::shape(
                    format!("layer {l} bias"),
                    fan_out,
                    layer.bias.len(),
                ));
            }
            let wants_norm = cfg.use_layernorm && cfg.is_hidden(l);
            match (&layer.norm, wants_norm) {
                (Some(n), true) => {
                    if n.gain.len() != fan_out || n.shift.len() != fan_out {
                        return Err(Error::shape(
                            format!("layer {l} layernorm"),
                            fan_out,
                            format!("gain {} / shift {}", n.gain.len(), n.shift.len()),
                        ));
                    }
                }
                (None, false) => {}
                (Some(_), false) => {
                    return Err(Error::shape(
                        format!("layer {l} layernorm"),
                        "none",
                        "present",
                    ))
                }
                (None, true) => {
                    return Err(Error::shape(
                        format!("layer {l} layernorm"),
                        "present",
                        "none",
                    ))
                }
            }
            if !layer.slices().all(|s| s.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite(format!("layer {l} parameters")));
            }
        }
        Ok(())
    }

    pub fn ensure_same_config(&self, other: &ModelParams) -> Result<()> {
        if self.config != other.config {
            return Err(Error::ConfigMismatch(format!(
                "{:?} vs {:?}",
                self.config.layer_sizes, other.config.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(Layer::slices)
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::slices_mut)
    }

    pub fn num_params(&self) -> usize {
        self.slices().map(<[f64]>::len).sum()
    }

    /// Flat parameter vector in layer order: weights, bias, gain, shift.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        out.fill(0.0);
        out
    }

    pub fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.fill(value);
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) -> Result<()> {
        self.ensure_same_config(other)?;
        for (dst, src) in self.slices_mut().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.slices_mut() {
            for v in s {
                *v *= alpha;
            }
        }
    }

    /// `self - other`
    pub fn sub(&self, other: &ModelParams) -> Result<ModelParams> {
        self.ensure_same_config(other)?;
        let mut out = self.clone();
        for (dst, src) in out.slices_mut().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= s;
            }
        }
        Ok(out)
    }

    pub fn dot(&self, other: &ModelParams) -> Result<f64> {
        self.ensure_same_config(other)?;
        Ok(self
            .slices()
            .zip(other.slices())
            .map(|(a, b)| crate::linalg::dot(a, b))
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance(&self, other: &ModelParams) -> Result<f64> {
        self.ensure_same_config(other)?;
        Ok(self
            .slices()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }

    /// `a + t (b - a)` elementwise.
    pub fn lerp(a: &ModelParams, b: &ModelParams, t: f64) -> Result<ModelParams> {
        a.ensure_same_config(b)?;
        let mut out = a.clone();
        for (dst, src) in out.slices_mut().zip(b.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * (s - *d);
            }
        }
        Ok(out)
    }

    /// Bitwise equality of every parameter, including the sign of zeros.
    pub fn bitwise_eq(&self, other: &ModelParams) -> bool {
        self.config == other.config
            && self.slices().zip(other.slices()).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
