//! The MLRN network: coarse extraction, a shallow-feature block, a chain of
//! feature-skip-fusion blocks, optional global feature fusion and residual
//! skip connection, sub-pixel upscaling, and a tail correction block.
//!
//! The whole forward pass is expressed with the five graph primitives
//! (conv2d / relu / concat / add / pixel_shuffle); there is no batch
//! normalization and no pooling anywhere.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{
    concat_channels, read_named_tensors, write_named_tensors, ContainerError, ConvParams,
    NamedTensor, Shape, Tensor, TensorError,
};

/// Architecture hyperparameters.
///
/// `g` is the feature width (default 32) and `n_blocks` the number of
/// fusion blocks (default 8). The `(use_gff, use_rsc)` pairs correspond to
/// the four ablation variants `(false,false)` N_BASE, `(true,false)` N_GFF,
/// `(false,true)` N_RSC, and `(true,true)` N_GFF_RSC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlrnConfig {
    pub g: usize,
    pub n_blocks: usize,
    pub scale: usize,
    pub use_gff: bool,
    pub use_rsc: bool,
    pub in_channels: usize,
}

impl Default for MlrnConfig {
    fn default() -> Self {
        MlrnConfig {
            g: 32,
            n_blocks: 8,
            scale: 2,
            use_gff: true,
            use_rsc: true,
            in_channels: 3,
        }
    }
}

impl MlrnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.g < 1 {
            return Err(ModelError::InvalidConfig("g must be >= 1"));
        }
        if self.n_blocks < 1 {
            return Err(ModelError::InvalidConfig("n_blocks must be >= 1"));
        }
        if !matches!(self.scale, 2 | 3 | 4) {
            return Err(ModelError::InvalidConfig("scale must be one of 2, 3, 4"));
        }
        if !matches!(self.in_channels, 1 | 3) {
            return Err(ModelError::InvalidConfig("in_channels must be 1 or 3"));
        }
        Ok(())
    }

    /// Table-style label of the (use_gff, use_rsc) variant.
    pub fn variant_label(&self) -> &'static str {
        match (self.use_gff, self.use_rsc) {
            (false, false) => "N_BASE",
            (true, false) => "N_GFF",
            (false, true) => "N_RSC",
            (true, true) => "N_GFF_RSC",
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("input has {input} channels but the model was built for {expected}")]
    InputChannels { input: usize, expected: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error("checkpoint is missing parameter {0}")]
    MissingParameter(String),
    #[error("checkpoint parameter {name} has shape {got}, expected {want}")]
    ParameterShape {
        name: String,
        got: Shape,
        want: Shape,
    },
}

/// Kernel-size pairs of the three bypass extractors: each extractor is two
/// same-size convolutions with a ReLU between them.
pub const BYPASS_KERNELS: [(usize, usize); 3] = [(3, 3), (3, 5), (5, 5)];

/// One layer of the canonical schedule.
#[derive(Clone, Debug)]
pub struct LayerSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn parameter_count(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel + self.c_out
    }
}

/// The full layer schedule implied by a config, in build, serialization,
/// and optimizer order.
pub fn layer_schedule(config: &MlrnConfig) -> Vec<LayerSpec> {
    let g = config.g;
    let c = config.in_channels;
    let mut layers = Vec::new();
    let mut push = |name: String, c_in: usize, c_out: usize, kernel: usize| {
        layers.push(LayerSpec {
            name,
            c_in,
            c_out,
            kernel,
        });
    };

    push("coarse".into(), c, g, 3);
    push("sf_head.conv[0]".into(), g, g, 1);
    push("sf_head.conv[1]".into(), g, g, 1);
    for d in 0..config.n_blocks {
        for (b, &(k0, k1)) in BYPASS_KERNELS.iter().enumerate() {
            push(format!("fsf[{d}].bypass[{b}].conv[0]"), g, g, k0);
            push(format!("fsf[{d}].bypass[{b}].conv[1]"), g, g, k1);
            push(format!("fsf[{d}].fuse[{b}]"), 2 * g, g, 1);
        }
    }
    if config.use_gff {
        push("gff".into(), config.n_blocks * g, g, 1);
    }
    push("up_conv".into(), g, g * config.scale * config.scale, 3);
    push("sf_tail.conv[0]".into(), g, g, 1);
    push("sf_tail.conv[1]".into(), g, g, 1);
    push("recon".into(), g, c, 3);
    layers
}

/// Closed-form parameter count of the layer schedule.
pub fn parameter_count(config: &MlrnConfig) -> usize {
    layer_schedule(config).iter().map(|l| l.parameter_count()).sum()
}

/// Shallow feature block: `x + conv1x1(relu(conv1x1(x)))`.
pub fn sf_block(conv: &[ConvParams; 2], x: &Tensor) -> Result<Tensor, TensorError> {
    let inner = x.conv2d(&conv[0])?.relu().conv2d(&conv[1])?;
    x.add(&inner)
}

/// One bypass extractor: two same-size convolutions with a ReLU between.
fn bypass_extract(conv: &[ConvParams; 2], x: &Tensor) -> Result<Tensor, TensorError> {
    x.conv2d(&conv[0])?.relu().conv2d(&conv[1])
}

/// Parameters of one feature-skip-fusion block.
pub struct FsfBlockParams {
    pub bypass: [[ConvParams; 2]; 3],
    pub fuse: [ConvParams; 3],
}

/// One feature-skip-fusion block. Each of the three bypass extractors reads
/// the block input; its output is concatenated with the running feature
/// (extractor output first) and fused back to width G by a 1x1 convolution.
/// The block closes with a residual add of the block input.
pub fn fsf_block(params: &FsfBlockParams, f_prev: &Tensor) -> Result<Tensor, TensorError> {
    let mut running = f_prev.clone();
    for (bypass, fuse) in params.bypass.iter().zip(&params.fuse) {
        let extracted = bypass_extract(bypass, f_prev)?;
        running = concat_channels(&[extracted, running])?.conv2d(fuse)?;
    }
    running.add(f_prev)
}

pub struct Model {
    config: MlrnConfig,
    init_seed: u64,
    coarse: ConvParams,
    sf_head: [ConvParams; 2],
    blocks: Vec<FsfBlockParams>,
    gff: Option<ConvParams>,
    up_conv: ConvParams,
    sf_tail: [ConvParams; 2],
    recon: ConvParams,
}

impl Model {
    /// Build a model with He-uniform weight initialization (fan-in scaled)
    /// and zero biases, deterministically derived from `init_seed`.
    pub fn build(config: MlrnConfig, init_seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(init_seed);
        let params: Vec<ConvParams> = layer_schedule(&config)
            .iter()
            .map(|spec| init_layer(spec, &mut rng))
            .collect::<Result<_, _>>()?;
        Model::assemble(config, init_seed, params)
    }

    /// Assemble a model around externally supplied weight/bias tensors, two
    /// per layer in schedule order. Shapes are validated against the
    /// schedule. Used by the gradient-check harness and the bindings.
    pub fn from_param_tensors(
        config: MlrnConfig,
        tensors: &[Tensor],
    ) -> Result<Model, ModelError> {
        config.validate()?;
        let schedule = layer_schedule(&config);
        if tensors.len() != 2 * schedule.len() {
            return Err(ModelError::InvalidConfig(
                "expected one weight and one bias tensor per layer",
            ));
        }
        let mut params = Vec::with_capacity(schedule.len());
        for (spec, pair) in schedule.iter().zip(tensors.chunks_exact(2)) {
            let want_w = Shape::new(spec.c_out, spec.c_in, spec.kernel, spec.kernel);
            if pair[0].shape() != want_w {
                return Err(ModelError::ParameterShape {
                    name: format!("{}.weight", spec.name),
                    got: pair[0].shape(),
                    want: want_w,
                });
            }
            params.push(ConvParams::same_size(pair[0].clone(), pair[1].clone())?);
        }
        Model::assemble(config, 0, params)
    }

    fn assemble(
        config: MlrnConfig,
        init_seed: u64,
        mut params: Vec<ConvParams>,
    ) -> Result<Model, ModelError> {
        params.reverse();
        // Consume in schedule order.
        let mut take = || params.pop().expect("schedule and params agree");

        let coarse = take();
        let sf_head = [take(), take()];
        let mut blocks = Vec::with_capacity(config.n_blocks);
        for _ in 0..config.n_blocks {
            let mut bypass_list = Vec::with_capacity(3);
            let mut fuse_list = Vec::with_capacity(3);
            for _ in 0..3 {
                bypass_list.push([take(), take()]);
                fuse_list.push(take());
            }
            blocks.push(FsfBlockParams {
                bypass: bypass_list.try_into().map_err(|_| ()).unwrap(),
                fuse: fuse_list.try_into().map_err(|_| ()).unwrap(),
            });
        }
        let gff = if config.use_gff { Some(take()) } else { None };
        let up_conv = take();
        let sf_tail = [take(), take()];
        let recon = take();
        debug_assert!(params.is_empty());

        Ok(Model {
            config,
            init_seed,
            coarse,
            sf_head,
            blocks,
            gff,
            up_conv,
            sf_tail,
            recon,
        })
    }

    pub fn config(&self) -> &MlrnConfig {
        &self.config
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Coarse feature extraction: a single 3x3 same-size convolution from
    /// the color channels to width G.
    pub fn coarse_extract(&self, lr: &Tensor) -> Result<Tensor, ModelError> {
        if lr.shape().c != self.config.in_channels {
            return Err(ModelError::InputChannels {
                input: lr.shape().c,
                expected: self.config.in_channels,
            });
        }
        Ok(lr.conv2d(&self.coarse)?)
    }

    /// Full pipeline from an LR batch to an SR batch of `scale` times the
    /// spatial size.
    pub fn forward(&self, lr: &Tensor) -> Result<Tensor, ModelError> {
        let coarse = self.coarse_extract(lr)?;
        let shallow = sf_block(&self.sf_head, &coarse)?;

        let mut block_outputs = Vec::with_capacity(self.config.n_blocks);
        let mut feature = shallow.clone();
        for block in &self.blocks {
            feature = fsf_block(block, &feature)?;
            block_outputs.push(feature.clone());
        }

        let mut deep = match &self.gff {
            Some(gff) => concat_channels(&block_outputs)?.conv2d(gff)?,
            None => feature,
        };
        if self.config.use_rsc {
            deep = deep.add(&shallow)?;
        }

        let upscaled = deep
            .conv2d(&self.up_conv)?
            .pixel_shuffle(self.config.scale)?;
        let corrected = sf_block(&self.sf_tail, &upscaled)?;
        Ok(corrected.conv2d(&self.recon)?)
    }

    /// Parameters as `(name, ConvParams)` in schedule order.
    pub fn named_params(&self) -> Vec<(String, &ConvParams)> {
        let mut out: Vec<(String, &ConvParams)> = Vec::new();
        out.push(("coarse".into(), &self.coarse));
        out.push(("sf_head.conv[0]".into(), &self.sf_head[0]));
        out.push(("sf_head.conv[1]".into(), &self.sf_head[1]));
        for (d, block) in self.blocks.iter().enumerate() {
            for b in 0..3 {
                out.push((
                    format!("fsf[{d}].bypass[{b}].conv[0]"),
                    &block.bypass[b][0],
                ));
                out.push((
                    format!("fsf[{d}].bypass[{b}].conv[1]"),
                    &block.bypass[b][1],
                ));
                out.push((format!("fsf[{d}].fuse[{b}]"), &block.fuse[b]));
            }
        }
        if let Some(gff) = &self.gff {
            out.push(("gff".into(), gff));
        }
        out.push(("up_conv".into(), &self.up_conv));
        out.push(("sf_tail.conv[0]".into(), &self.sf_tail[0]));
        out.push(("sf_tail.conv[1]".into(), &self.sf_tail[1]));
        out.push(("recon".into(), &self.recon));
        out
    }

    /// Weight and bias tensors in schedule order (optimizer view).
    pub fn param_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (name, conv) in self.named_params() {
            out.push((format!("{name}.weight"), conv.weight.clone()));
            out.push((format!("{name}.bias"), conv.bias.clone()));
        }
        out
    }

    /// Total scalar parameter count of this instance.
    pub fn parameter_count(&self) -> usize {
        self.named_params()
            .iter()
            .map(|(_, p)| p.parameter_count())
            .sum()
    }

    pub fn zero_grad(&self) {
        for (_, tensor) in self.param_tensors() {
            tensor.zero_grad();
        }
    }

    /// Write the parameter container and its JSON sidecar
    /// (`<path>` and `<path>.json`).
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        self.save_with_mean(path, None)
    }

    /// Checkpoint including the per-channel normalization mean the model
    /// was trained with, so eval/infer can reconstruct the input space.
    pub fn save_with_mean(&self, path: &Path, mean: Option<&[f64]>) -> Result<(), ModelError> {
        let entries: Vec<NamedTensor> = self
            .param_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape(),
                values: t.values(),
            })
            .collect();
        let file = File::create(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut writer = BufWriter::new(file);
        write_named_tensors(&mut writer, &entries).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;

        let sidecar = Sidecar {
            config: self.config,
            init_seed: self.init_seed,
            mean_rgb: mean.map(|m| m.to_vec()),
        };
        let sidecar_path = sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(&sidecar_path, json).map_err(|e| ModelError::Io {
            path: sidecar_path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }

    /// Load a checkpoint written by [`Model::save`].
    pub fn load(path: &Path) -> Result<Model, ModelError> {
        Ok(Model::load_with_mean(path)?.0)
    }

    /// Load a checkpoint plus its stored normalization mean (zeros when the
    /// sidecar carries none).
    pub fn load_with_mean(path: &Path) -> Result<(Model, Vec<f64>), ModelError> {
        let sidecar_path = sidecar_path(path);
        let raw = std::fs::read_to_string(&sidecar_path).map_err(|e| ModelError::Io {
            path: sidecar_path.display().to_string(),
            source: e,
        })?;
        let sidecar: Sidecar =
            serde_json::from_str(&raw).map_err(|e| ModelError::Sidecar {
                path: sidecar_path.display().to_string(),
                message: e.to_string(),
            })?;

        let file = File::open(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let entries = read_named_tensors(&mut BufReader::new(file))?;

        let model = Model::build(sidecar.config, sidecar.init_seed)?;
        for (name, tensor) in model.param_tensors() {
            let entry = entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| ModelError::MissingParameter(name.clone()))?;
            if entry.shape != tensor.shape() {
                return Err(ModelError::ParameterShape {
                    name,
                    got: entry.shape,
                    want: tensor.shape(),
                });
            }
            tensor.set_values(&entry.values)?;
        }
        let mean = sidecar
            .mean_rgb
            .unwrap_or_else(|| vec![0.0; sidecar.config.in_channels]);
        Ok((model, mean))
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: MlrnConfig,
    init_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_rgb: Option<Vec<f64>>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

/// He-uniform weights over `(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias.
/// Draws map `next_u64` to `[0, 1)` with 53-bit resolution so the stream is
/// stable regardless of RNG-crate sampling internals.
fn init_layer(spec: &LayerSpec, rng: &mut ChaCha20Rng) -> Result<ConvParams, TensorError> {
    let fan_in = (spec.c_in * spec.kernel * spec.kernel) as f64;
    let bound = (6.0 / fan_in).sqrt();
    let w_shape = Shape::new(spec.c_out, spec.c_in, spec.kernel, spec.kernel);
    let values: Vec<f64> = (0..w_shape.count())
        .map(|_| {
            let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (unit * 2.0 - 1.0) * bound
        })
        .collect();
    let weight = Tensor::param(w_shape, values)?;
    let bias = Tensor::param(
        Shape::new(1, spec.c_out, 1, 1),
        vec![0.0; spec.c_out],
    )?;
    ConvParams::same_size(weight, bias)
}
