//! Parameter layout, naming and initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError, Variant};
use crate::numerics::{Ops, Tensor};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Norm {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncoderLayer {
    pub ln1: Norm,
    pub attn: Attention,
    pub ln2: Norm,
    pub ffn: FeedForward,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderLayer {
    pub ln1: Norm,
    pub self_attn: Attention,
    /// Absent in the decoder-only stack.
    pub cross: Option<(Norm, Attention)>,
    pub ln3: Norm,
    pub ffn: FeedForward,
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderStack {
    pub layers: Vec<EncoderLayer>,
    pub norm: Norm,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Embedding,
    Xavier,
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
    pub embed: usize,
    pub output_bias: usize,
    pub encoders: Vec<EncoderStack>,
    pub decoder: Vec<DecoderLayer>,
    pub decoder_norm: Norm,
}

impl Layout {
    fn new(c: &ModelConfig) -> Layout {
        let mut b = Builder::default();
        let d = c.d_model;
        let embed = b.add("embed.tokens", vec![c.vocab_size, d], Init::Embedding);
        let output_bias = b.add("output.bias", vec![c.vocab_size], Init::Zeros);
        let encoders = (0..c.encoder_stacks())
            .map(|k| {
                let layers = (0..c.encoder_layers)
                    .map(|l| {
                        let p = format!("encoder.{k}.layer.{l}");
                        EncoderLayer {
                            ln1: b.norm(&format!("{p}.ln1"), d),
                            attn: b.attention(&format!("{p}.attn"), d),
                            ln2: b.norm(&format!("{p}.ln2"), d),
                            ffn: b.ffn(&format!("{p}.ffn"), d, c.ffn),
                        }
                    })
                    .collect();
                EncoderStack {
                    layers,
                    norm: b.norm(&format!("encoder.{k}.norm"), d),
                }
            })
            .collect();
        let decoder = (0..c.decoder_layers)
            .map(|l| {
                let p = format!("decoder.layer.{l}");
                let ln1 = b.norm(&format!("{p}.ln1"), d);
                let self_attn = b.attention(&format!("{p}.self_attn"), d);
                let cross = (c.variant != Variant::DecoderOnly)
                    .then(|| (b.norm(&format!("{p}.ln2"), d), b.attention(&format!("{p}.cross_attn"), d)));
                DecoderLayer {
                    ln1,
                    self_attn,
                    cross,
                    ln3: b.norm(&format!("{p}.ln3"), d),
                    ffn: b.ffn(&format!("{p}.ffn"), d, c.ffn),
                }
            })
            .collect();
        let decoder_norm = b.norm("decoder.norm", d);
        Layout {
            names: b.names,
            shapes: b.shapes,
            inits: b.inits,
            embed,
            output_bias,
            encoders,
            decoder,
            decoder_norm,
        }
    }
}

#[derive(Default)]
struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: &str, shape: Vec<usize>, init: Init) -> usize {
        self.names.push(name.into());
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn norm(&mut self, p: &str, d: usize) -> Norm {
        Norm {
            gamma: self.add(&format!("{p}.gamma"), vec![d], Init::Ones),
            beta: self.add(&format!("{p}.beta"), vec![d], Init::Zeros),
        }
    }

    fn linear(&mut self, p: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            weight: self.add(&format!("{p}.weight"), vec![fan_in, fan_out], Init::Xavier),
            bias: self.add(&format!("{p}.bias"), vec![fan_out], Init::Zeros),
        }
    }

    fn attention(&mut self, p: &str, d: usize) -> Attention {
        Attention {
            q: self.linear(&format!("{p}.q"), d, d),
            k: self.linear(&format!("{p}.k"), d, d),
            v: self.linear(&format!("{p}.v"), d, d),
            o: self.linear(&format!("{p}.o"), d, d),
        }
    }

    fn ffn(&mut self, p: &str, d: usize, hidden: usize) -> FeedForward {
        FeedForward {
            inner: self.linear(&format!("{p}.in"), d, hidden),
            outer: self.linear(&format!("{p}.out"), hidden, d),
        }
    }
}

/// Validated configuration plus everything derived from it: the parameter
/// layout and the position-encoding table.
#[derive(Clone, Debug)]
pub struct Model {
    pub(crate) config: ModelConfig,
    pub(crate) layout: Layout,
    /// `max_len × d_model`, row-major.
    pub(crate) positions: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Model, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let d = config.d_model;
        let mut positions = vec![0.0; config.max_len * d];
        for pos in 0..config.max_len {
            for i in (0..d).step_by(2) {
                let angle = pos as f64 / libm::pow(10000.0, i as f64 / d as f64);
                positions[pos * d + i] = libm::sin(angle);
                if i + 1 < d {
                    positions[pos * d + i + 1] = libm::cos(angle);
                }
            }
        }
        Ok(Model {
            config,
            layout,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.layout.names
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.shapes.iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Embeddings ~ N(0, 1/d), weight matrices Xavier-uniform, biases and
    /// layer-norm shifts 0, layer-norm gains 1.
    pub fn init_params(&self, seed: u64) -> ModelParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.d_model as f64;
        let embed = Normal::new(0.0, 1.0 / libm::sqrt(d)).expect("finite std");
        let tensors = self
            .layout
            .shapes
            .iter()
            .zip(&self.layout.inits)
            .map(|(shape, init)| {
                let n: usize = shape.iter().product();
                let data: Vec<f64> = match init {
                    Init::Embedding => (0..n).map(|_| embed.sample(&mut rng)).collect(),
                    Init::Xavier => {
                        let bound = libm::sqrt(6.0 / (shape[0] + shape[1]) as f64);
                        (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                    }
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                };
                Tensor::new(shape.clone(), data).expect("layout shapes are valid")
            })
            .collect();
        ModelParameters {
            names: self.layout.names.clone(),
            tensors,
        }
    }

    /// Checks names and shapes of externally supplied parameters and puts
    /// them in layout order.
    pub fn params_from_named(&self, named: Vec<(String, Tensor)>) -> Result<ModelParameters, ModelError> {
        let mut slots: Vec<Option<Tensor>> = vec![None; self.layout.names.len()];
        for (name, tensor) in named {
            let i = self
                .layout
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| ModelError::UnexpectedParameter(name.clone()))?;
            if tensor.shape() != self.layout.shapes[i].as_slice() {
                return Err(ModelError::ParameterShape {
                    name,
                    expected: self.layout.shapes[i].clone(),
                    found: tensor.shape().to_vec(),
                });
            }
            slots[i] = Some(tensor);
        }
        let tensors = slots
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| ModelError::MissingParameter(self.layout.names[i].clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ModelParameters {
            names: self.layout.names.clone(),
            tensors,
        })
    }

    /// Places every parameter on `ops` (as trainable leaves on a tape).
    pub fn bind<O: Ops>(&self, ops: &mut O, params: &ModelParameters) -> Vec<O::Value> {
        params.tensors.iter().map(|t| ops.parameter(t.clone())).collect()
    }
}

/// Named parameter tensors in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParameters {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (&str, &Tensor)> + ExactSizeIterator {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }
}
