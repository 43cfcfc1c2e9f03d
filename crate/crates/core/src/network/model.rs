use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::config::{NetworkConfig, LSTM_LAYERS};
use super::params::{LayerIdx, LstmIdx, NetworkParams, ParamLayout, GATE_F, GATE_I, GATE_O, GATE_Z};
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::geometry::{extract_crop_into, CropFrameBox, CropWindow};
use crate::image::Image;
use crate::tensor::Tensor;

/// Recurrent state of one LSTM layer for a batch: `y` and `c` are `[N, U]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub y: Tensor,
    pub c: Tensor,
}

/// Recurrent state for every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub layers: Vec<LayerState>,
}

impl LstmState {
    pub fn zeros(batch: usize, units: usize) -> Self {
        let layer = LayerState { y: Tensor::zeros(&[batch, units]), c: Tensor::zeros(&[batch, units]) };
        Self { layers: vec![layer; LSTM_LAYERS] }
    }

    pub fn batch(&self) -> usize {
        self.layers[0].y.dims()[0]
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.y.is_finite() && l.c.is_finite())
    }
}

/// Graph handles for an [`LstmState`].
#[derive(Debug, Clone)]
pub struct StateVars {
    pub layers: Vec<(Var, Var)>,
}

impl StateVars {
    pub fn constant(graph: &mut Graph<'_>, state: &LstmState) -> Self {
        let layers = state.layers.iter().map(|l| (graph.constant(l.y.clone()), graph.constant(l.c.clone()))).collect();
        Self { layers }
    }

    pub fn read(&self, graph: &Graph<'_>) -> LstmState {
        let layers = self
            .layers
            .iter()
            .map(|&(y, c)| LayerState { y: graph.value(y).clone(), c: graph.value(c).clone() })
            .collect();
        LstmState { layers }
    }
}

/// Graph handles for one LSTM layer, gates ordered (z, i, f, o).
#[derive(Debug, Clone, Copy)]
pub struct LstmLayerVars {
    pub w: [Var; 4],
    pub r: [Var; 4],
    pub p: [Var; 3],
    pub b: [Var; 4],
}

/// Standalone tensors of one peephole LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// Input weights `[D, U]`.
    pub w: [Tensor; 4],
    /// Recurrent weights `[U, U]`.
    pub r: [Tensor; 4],
    /// Diagonal peepholes `[U]` for the input, forget and output gates.
    pub p: [Tensor; 3],
    pub b: [Tensor; 4],
}

impl LstmLayerParams {
    pub fn zeros(input: usize, units: usize) -> Self {
        Self {
            w: core::array::from_fn(|_| Tensor::zeros(&[input, units])),
            r: core::array::from_fn(|_| Tensor::zeros(&[units, units])),
            p: core::array::from_fn(|_| Tensor::zeros(&[units])),
            b: core::array::from_fn(|_| Tensor::zeros(&[units])),
        }
    }

    pub fn random<R: Rng>(input: usize, units: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |dims: &[usize]| {
            let len = dims.iter().product();
            Tensor::new(dims, (0..len).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
        };
        Self {
            w: core::array::from_fn(|_| draw(&[input, units])),
            r: core::array::from_fn(|_| draw(&[units, units])),
            p: core::array::from_fn(|_| draw(&[units])),
            b: core::array::from_fn(|_| draw(&[units])),
        }
    }

    pub fn bind<'a>(&'a self, graph: &mut Graph<'a>, requires_grad: bool) -> LstmLayerVars {
        LstmLayerVars {
            w: core::array::from_fn(|i| graph.leaf(&self.w[i], requires_grad)),
            r: core::array::from_fn(|i| graph.leaf(&self.r[i], requires_grad)),
            p: core::array::from_fn(|i| graph.leaf(&self.p[i], requires_grad)),
            b: core::array::from_fn(|i| graph.leaf(&self.b[i], requires_grad)),
        }
    }

    /// One step outside any caller graph; `x` is `[N, D]`, state `[N, U]`.
    pub fn step(&self, x: &Tensor, y_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.leaf(x, false);
        let y = g.leaf(y_prev, false);
        let c = g.leaf(c_prev, false);
        let (y, c) = lstm_step(&mut g, &vars, x, y, c)?;
        Ok((g.value(y).clone(), g.value(c).clone()))
    }
}

/// One peephole LSTM step:
///
/// ```text
/// z = tanh(W_z x + R_z y' + b_z)
/// i = σ(W_i x + R_i y' + P_i ⊙ c' + b_i)
/// f = σ(W_f x + R_f y' + P_f ⊙ c' + b_f)
/// c = i ⊙ z + f ⊙ c'
/// o = σ(W_o x + R_o y' + P_o ⊙ c + b_o)
/// y = o ⊙ tanh(c)
/// ```
pub fn lstm_step(g: &mut Graph<'_>, layer: &LstmLayerVars, x: Var, y_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let pre = |g: &mut Graph<'_>, gate: usize| -> Result<Var> {
        let xin = g.fully_connected(x, layer.w[gate], layer.b[gate])?;
        let rec = g.matmul(y_prev, layer.r[gate])?;
        g.add(xin, rec)
    };
    let z_pre = pre(g, GATE_Z)?;
    let z = g.tanh(z_pre);

    let i_pre = pre(g, GATE_I)?;
    let i_peep = g.mul_row(c_prev, layer.p[0])?;
    let i_pre = g.add(i_pre, i_peep)?;
    let i = g.sigmoid(i_pre);

    let f_pre = pre(g, GATE_F)?;
    let f_peep = g.mul_row(c_prev, layer.p[1])?;
    let f_pre = g.add(f_pre, f_peep)?;
    let f = g.sigmoid(f_pre);

    let iz = g.mul(i, z)?;
    let fc = g.mul(f, c_prev)?;
    let c = g.add(iz, fc)?;

    let o_pre = pre(g, GATE_O)?;
    let o_peep = g.mul_row(c, layer.p[2])?;
    let o_pre = g.add(o_pre, o_peep)?;
    let o = g.sigmoid(o_pre);

    let hc = g.tanh(c);
    let y = g.mul(o, hc)?;
    Ok((y, c))
}

/// Network structure paired with the position of each tensor in a bound
/// parameter list. Works with any `&[Var]` laid out like [`NetworkParams`].
#[derive(Debug, Clone, Copy)]
pub struct NetView<'p> {
    pub config: &'p NetworkConfig,
    pub layout: &'p ParamLayout,
}

impl NetworkParams {
    pub fn view(&self) -> NetView<'_> {
        NetView { config: self.config(), layout: self.layout() }
    }
}

impl NetView<'_> {
    pub fn lstm_vars(&self, vars: &[Var], layer: usize) -> LstmLayerVars {
        let LstmIdx { w, r, p, b } = self.layout.lstm[layer];
        LstmLayerVars { w: w.map(|i| vars[i]), r: r.map(|i| vars[i]), p: p.map(|i| vars[i]), b: b.map(|i| vars[i]) }
    }

    fn conv_prelu(&self, g: &mut Graph<'_>, vars: &[Var], x: Var, idx: &LayerIdx, pad: usize) -> Result<Var> {
        let y = g.conv2d(x, vars[idx.weight], vars[idx.bias], 1, pad)?;
        g.prelu(y, vars[idx.slope.expect("conv layers carry a slope")])
    }

    /// Runs the shared conv pipeline on `[M, 3, S, S]` images and returns
    /// the flattened skip taps and final block output, `[M, F]`.
    pub fn stream_features(&self, g: &mut Graph<'_>, vars: &[Var], images: Var) -> Result<Var> {
        let dims = g.value(images).dims().to_vec();
        let s = self.config.crop_size;
        if dims.len() != 4 || dims[1] != 3 || dims[2] != s || dims[3] != s {
            return Err(shape_err!("crop batch must be [M, 3, {s}, {s}], got {dims:?}"));
        }
        let mut features = Vec::with_capacity(self.config.conv_blocks.len() + 1);
        let mut x = images;
        for (i, block) in self.config.conv_blocks.iter().enumerate() {
            let act = self.conv_prelu(g, vars, x, &self.layout.conv[i], block.kernel / 2)?;
            x = g.maxpool2x2(act)?;
            let tap = self.conv_prelu(g, vars, x, &self.layout.skip[i], 0)?;
            features.push(g.flatten(tap)?);
        }
        features.push(g.flatten(x)?);
        g.concat(&features, 1)
    }

    /// Embeds crop pairs. `crops` is `[2N, 3, S, S]` with each item's
    /// previous-frame crop immediately followed by its current-frame crop;
    /// both streams run through the same conv weights and their features
    /// are concatenated (previous first) before the embedding layer.
    /// Returns `[N, embed_dim]`.
    pub fn embed_pairs(&self, g: &mut Graph<'_>, vars: &[Var], crops: Var) -> Result<Var> {
        let images = g.value(crops).dims()[0];
        if !images.is_multiple_of(2) {
            return Err(shape_err!("crop batch holds {images} images; pairs need an even count"));
        }
        let per_stream = self.stream_features(g, vars, crops)?;
        let pairs = g.reshape(per_stream, &[images / 2, 2 * self.config.stream_feature_len()])?;
        let e = &self.layout.embed;
        let emb = g.fully_connected(pairs, vars[e.weight], vars[e.bias])?;
        g.prelu(emb, vars[e.slope.unwrap()])
    }

    /// Features feed layer 0; layer 1 sees `concat(features, y_0)`; the
    /// head regresses four crop-frame corners from layer 1's output.
    pub fn forward_step(
        &self,
        g: &mut Graph<'_>,
        vars: &[Var],
        crops: Var,
        state: &StateVars,
    ) -> Result<(Var, StateVars)> {
        let features = self.embed_pairs(g, vars, crops)?;
        let l0 = self.lstm_vars(vars, 0);
        let (y0, c0) = lstm_step(g, &l0, features, state.layers[0].0, state.layers[0].1)?;
        let x1 = g.concat(&[features, y0], 1)?;
        let l1 = self.lstm_vars(vars, 1);
        let (y1, c1) = lstm_step(g, &l1, x1, state.layers[1].0, state.layers[1].1)?;
        let h = &self.layout.head;
        let pred = g.fully_connected(y1, vars[h.weight], vars[h.bias])?;
        Ok((pred, StateVars { layers: vec![(y0, c0), (y1, c1)] }))
    }
}

/// Accumulates per-step predictions over an unroll and produces the mean
/// L1 loss across all steps.
pub struct Unroll {
    state: StateVars,
    preds: Vec<Var>,
    targets: Vec<Var>,
}

impl Unroll {
    pub fn new(state: StateVars) -> Self {
        Self { state, preds: Vec::new(), targets: Vec::new() }
    }

    pub fn state(&self) -> &StateVars {
        &self.state
    }

    /// Runs one step and records its target; returns the `[N, 4]` prediction.
    pub fn step(&mut self, net: &NetView<'_>, g: &mut Graph<'_>, vars: &[Var], crops: Var, target: Var) -> Result<Var> {
        let (pred, next) = net.forward_step(g, vars, crops, &self.state)?;
        self.state = next;
        self.preds.push(pred);
        self.targets.push(target);
        Ok(pred)
    }

    pub fn steps(&self) -> usize {
        self.preds.len()
    }

    /// Every step has the same `[N, 4]` shape, so the L1 over the stacked
    /// steps equals the mean over steps of each step's L1.
    pub fn loss(&self, g: &mut Graph<'_>) -> Result<Var> {
        if self.preds.is_empty() {
            return Err(crate::error::Error::Usage("unroll has no steps".into()));
        }
        let p = g.concat(&self.preds, 0)?;
        let t = g.concat(&self.targets, 0)?;
        g.l1_loss(p, t)
    }
}

/// Mean L1 loss over a precomputed sequence of `(crops [2N,3,S,S], targets [N,4])`
/// steps, threading the recurrent state from `initial`.
pub fn unrolled_loss(
    net: &NetView<'_>,
    g: &mut Graph<'_>,
    vars: &[Var],
    steps: &[(Tensor, Tensor)],
    initial: &LstmState,
) -> Result<Var> {
    let state = StateVars::constant(g, initial);
    let mut unroll = Unroll::new(state);
    for (crops, target) in steps {
        let c = g.constant(crops.clone());
        let t = g.constant(target.clone());
        unroll.step(net, g, vars, c, t)?;
    }
    unroll.loss(g)
}

/// One previous/current crop pair to be cut at a shared window.
#[derive(Debug, Clone, Copy)]
pub struct PairRequest<'a> {
    pub prev: &'a Image,
    pub cur: &'a Image,
    pub window: CropWindow,
}

/// Cuts every pair into one `[2N, 3, S, S]` batch in the layout
/// [`NetView::embed_pairs`] expects.
pub fn crop_pair_batch(pairs: &[PairRequest<'_>], crop_size: usize) -> Tensor {
    let per = 3 * crop_size * crop_size;
    let mut data = vec![0.0; 2 * pairs.len() * per];
    for (k, p) in pairs.iter().enumerate() {
        extract_crop_into(p.prev, &p.window, crop_size, &mut data[2 * k * per..(2 * k + 1) * per]);
        extract_crop_into(p.cur, &p.window, crop_size, &mut data[(2 * k + 1) * per..(2 * k + 2) * per]);
    }
    Tensor::new(&[2 * pairs.len(), 3, crop_size, crop_size], data).expect("non-empty batch")
}

impl NetworkParams {
    /// Inference-only step: predictions per item plus the next state.
    pub fn predict(&self, crops: &Tensor, state: &LstmState) -> Result<(Vec<CropFrameBox>, LstmState)> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let c = g.leaf(crops, false);
        let s = StateVars::constant(&mut g, state);
        let (pred, next) = self.view().forward_step(&mut g, &vars, c, &s)?;
        let boxes = g.value(pred).data().chunks(4).map(CropFrameBox::from_slice).collect();
        Ok((boxes, next.read(&g)))
    }
}
