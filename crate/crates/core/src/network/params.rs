use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConvBlock, NetworkConfig, LSTM_LAYERS};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Indices of a conv (or fully connected) layer's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerIdx {
    pub weight: usize,
    pub bias: usize,
    pub slope: Option<usize>,
}

/// Indices of one peephole LSTM layer, gates ordered (z, i, f, o).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmIdx {
    pub w: [usize; 4],
    pub r: [usize; 4],
    /// Peepholes for (i, f, o); the block input has none.
    pub p: [usize; 3],
    pub b: [usize; 4],
}

pub const GATE_Z: usize = 0;
pub const GATE_I: usize = 1;
pub const GATE_F: usize = 2;
pub const GATE_O: usize = 3;
const GATE_NAMES: [&str; 4] = ["z", "i", "f", "o"];

/// Where each role lives in the flat, ordered tensor list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub conv: Vec<LayerIdx>,
    pub skip: Vec<LayerIdx>,
    pub embed: LayerIdx,
    pub lstm: [LstmIdx; LSTM_LAYERS],
    pub head: LayerIdx,
}

enum Init {
    Uniform { fan_in: usize },
    Const(f64),
}

struct Spec {
    name: String,
    dims: Vec<usize>,
    init: Init,
}

fn build_specs(config: &NetworkConfig) -> (Vec<Spec>, ParamLayout) {
    let mut specs: Vec<Spec> = Vec::new();
    let mut add = |name: String, dims: Vec<usize>, init: Init| {
        specs.push(Spec { name, dims, init });
        specs.len() - 1
    };
    let mut conv = Vec::new();
    let mut skip = Vec::new();
    let mut in_ch = 3;
    for (i, (block, &skip_ch)) in config.conv_blocks.iter().zip(&config.skip_channels).enumerate() {
        let k = block.kernel;
        let out = block.out_channels;
        let weight = add(format!("conv{i}.weight"), vec![out, in_ch, k, k], Init::Uniform { fan_in: in_ch * k * k });
        let bias = add(format!("conv{i}.bias"), vec![out], Init::Const(0.0));
        let slope = add(format!("conv{i}.prelu"), vec![out], Init::Const(0.25));
        conv.push(LayerIdx { weight, bias, slope: Some(slope) });
        let weight = add(format!("skip{i}.weight"), vec![skip_ch, out, 1, 1], Init::Uniform { fan_in: out });
        let bias = add(format!("skip{i}.bias"), vec![skip_ch], Init::Const(0.0));
        let slope = add(format!("skip{i}.prelu"), vec![skip_ch], Init::Const(0.25));
        skip.push(LayerIdx { weight, bias, slope: Some(slope) });
        in_ch = out;
    }
    let feat = 2 * config.stream_feature_len();
    let e = config.embed_dim;
    let embed = LayerIdx {
        weight: add("embed.weight".into(), vec![feat, e], Init::Uniform { fan_in: feat }),
        bias: add("embed.bias".into(), vec![e], Init::Const(0.0)),
        slope: Some(add("embed.prelu".into(), vec![e], Init::Const(0.25))),
    };
    let u = config.lstm_units;
    let lstm_inputs = [e, e + u];
    let lstm: [LstmIdx; LSTM_LAYERS] = core::array::from_fn(|l| {
        let d = lstm_inputs[l];
        let w = core::array::from_fn(|g| {
            add(format!("lstm{l}.w_{}", GATE_NAMES[g]), vec![d, u], Init::Uniform { fan_in: d })
        });
        let r = core::array::from_fn(|g| {
            add(format!("lstm{l}.r_{}", GATE_NAMES[g]), vec![u, u], Init::Uniform { fan_in: u })
        });
        let p = core::array::from_fn(|g| add(format!("lstm{l}.p_{}", GATE_NAMES[g + 1]), vec![u], Init::Const(0.0)));
        let b = core::array::from_fn(|g| {
            let init = if g == GATE_F { 1.0 } else { 0.0 };
            add(format!("lstm{l}.b_{}", GATE_NAMES[g]), vec![u], Init::Const(init))
        });
        LstmIdx { w, r, p, b }
    });
    let head = LayerIdx {
        weight: add("head.weight".into(), vec![u, 4], Init::Uniform { fan_in: u }),
        bias: add("head.bias".into(), vec![4], Init::Const(0.0)),
        slope: None,
    };
    (specs, ParamLayout { conv, skip, embed, lstm, head })
}

/// Every learnable tensor of the network, each registered once by name.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    layout: ParamLayout,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl NetworkParams {
    /// Fresh parameters: fan-in scaled symmetric uniform weights (MSRA),
    /// zero biases except the LSTM forget gates (+1), PReLU slopes 0.25.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = build_specs(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let len: usize = spec.dims.iter().product();
            let data = match spec.init {
                Init::Const(v) => vec![v; len],
                Init::Uniform { fan_in } => {
                    let bound = libm::sqrt(6.0 / fan_in as f64);
                    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
                }
            };
            tensors.push(Tensor::new(&spec.dims, data)?);
            names.push(spec.name);
        }
        Ok(Self { config: config.clone(), layout, names, tensors })
    }

    /// Reassembles parameters from named tensors, e.g. a loaded checkpoint.
    /// Every expected name must be present exactly once with matching dims.
    pub fn from_named(config: &NetworkConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = build_specs(config);
        if named.len() != specs.len() {
            return Err(Error::Usage(format!("expected {} tensors, got {}", specs.len(), named.len())));
        }
        let mut slots: Vec<Option<Tensor>> = (0..specs.len()).map(|_| None).collect();
        for (name, t) in named {
            let idx = specs
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| Error::Usage(format!("unexpected tensor {name:?}")))?;
            if specs[idx].dims != t.dims() {
                return Err(Error::Shape(format!(
                    "tensor {name:?}: expected {:?}, got {:?}",
                    specs[idx].dims,
                    t.dims()
                )));
            }
            if slots[idx].replace(t).is_some() {
                return Err(Error::Usage(format!("tensor {name:?} appears twice")));
            }
        }
        let tensors = slots.into_iter().map(|t| t.expect("all slots filled")).collect();
        let names = specs.into_iter().map(|s| s.name).collect();
        Ok(Self { config: config.clone(), layout, names, tensors })
    }

    /// Like [`NetworkParams::from_named`], with the architecture read off
    /// the tensor names and shapes.
    pub fn from_tensors(named: Vec<(String, Tensor)>) -> Result<Self> {
        let config = infer_config(&named)?;
        Self::from_named(&config, named)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
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

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Binds every tensor as a borrowed leaf, in layout order.
    pub fn bind<'a>(&'a self, graph: &mut Graph<'a>, requires_grad: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| graph.leaf(t, requires_grad)).collect()
    }
}

/// Recovers a [`NetworkConfig`] (with seed 0) from named tensors.
pub fn infer_config(named: &[(String, Tensor)]) -> Result<NetworkConfig> {
    let dims = |name: &str| -> Option<&[usize]> { named.iter().find(|(n, _)| n == name).map(|(_, t)| t.dims()) };
    let need = |name: &str, rank: usize| -> Result<&[usize]> {
        match dims(name) {
            Some(d) if d.len() == rank => Ok(d),
            Some(d) => Err(Error::Shape(format!("tensor {name:?} has rank {}, expected {rank}", d.len()))),
            None => Err(Error::Usage(format!("missing tensor {name:?}"))),
        }
    };
    let mut conv_blocks = Vec::new();
    let mut skip_channels = Vec::new();
    while dims(&format!("conv{}.weight", conv_blocks.len())).is_some() {
        let i = conv_blocks.len();
        let w = need(&format!("conv{i}.weight"), 4)?;
        conv_blocks.push(ConvBlock { kernel: w[2], out_channels: w[0] });
        skip_channels.push(need(&format!("skip{i}.weight"), 4)?[0]);
    }
    if conv_blocks.is_empty() {
        return Err(Error::Usage("no conv layers found".into()));
    }
    let embed = need("embed.weight", 2)?;
    let head = need("head.weight", 2)?;
    let mut config =
        NetworkConfig { crop_size: 0, conv_blocks, skip_channels, embed_dim: embed[1], lstm_units: head[0], seed: 0 };
    let step = 1usize << config.conv_blocks.len();
    for m in 1..=4096 / step {
        config.crop_size = m * step;
        let f = config.stream_feature_len();
        if 2 * f == embed[0] {
            return Ok(config);
        }
        if 2 * f > embed[0] {
            break;
        }
    }
    Err(Error::Shape(format!("no crop size yields an embedding input of {}", embed[0])))
}
