//! Curriculum training: unroll doubling with batch halving, whole-sequence
//! self-crops, plateau-triggered stage advances and a two-step learning rate.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, Graph, Var};
use crate::error::{Error, Result};
use crate::geometry::{
    crop_window_for, decode_prediction, encode_target, mirror_track, BoundingBox, CropFrameBox, CropWindow,
};
use crate::image::Image;
use crate::network::{crop_pair_batch, LstmState, NetworkParams, PairRequest, StateVars, Unroll};
use crate::synthgen::SequenceSource;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumStage {
    pub unroll: usize,
    pub batch: usize,
    pub p_self: f64,
}

impl CurriculumStage {
    pub const fn new(unroll: usize, batch: usize, p_self: f64) -> Self {
        Self { unroll, batch, p_self }
    }
}

/// Unroll doubles and batch halves at every advance; the self-crop
/// probability is held at its last value for the final doubling.
pub const LADDER: [CurriculumStage; 5] = [
    CurriculumStage::new(2, 64, 0.0),
    CurriculumStage::new(4, 32, 0.25),
    CurriculumStage::new(8, 16, 0.5),
    CurriculumStage::new(16, 8, 0.75),
    CurriculumStage::new(32, 4, 0.75),
];

/// Where the next step's crop window comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropSource {
    GroundTruth,
    Predicted,
}

/// One Bernoulli draw, made once per training sequence.
pub fn select_crop_source<R: Rng + ?Sized>(p_self: f64, rng: &mut R) -> CropSource {
    if rng.random::<f64>() < p_self {
        CropSource::Predicted
    } else {
        CropSource::GroundTruth
    }
}

/// A track to unroll over, with its crop-source decision.
#[derive(Debug, Clone, Copy)]
pub struct TrackSample<'s> {
    pub frames: &'s [Image],
    pub truth: &'s [BoundingBox],
    pub source: CropSource,
}

/// The loss node of an unrolled batch plus what each step was fed.
pub struct UnrolledBatch {
    pub loss: Var,
    /// `windows[t][i]`: crop window used at step `t + 1` for item `i`.
    pub windows: Vec<Vec<CropWindow>>,
    /// `targets[t][i]`: encoded truth at step `t + 1` for item `i`.
    pub targets: Vec<Vec<CropFrameBox>>,
    pub predictions: Vec<Vec<CropFrameBox>>,
}

/// Builds the graph for `unroll` steps over every sample at once. Each step
/// cuts the previous and current frame at the same window; the first window
/// always comes from the initial true box, later ones from the truth or from
/// the network's own decoded prediction depending on the sample's source.
pub fn unroll_batch(
    params: &NetworkParams,
    g: &mut Graph<'_>,
    vars: &[Var],
    samples: &[TrackSample<'_>],
    unroll: usize,
) -> Result<UnrolledBatch> {
    if samples.is_empty() || unroll == 0 {
        return Err(Error::Usage("need at least one sample and one step".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.frames.len() != s.truth.len() {
            return Err(Error::Usage(format!("sample {i}: {} frames but {} boxes", s.frames.len(), s.truth.len())));
        }
        if s.frames.len() < unroll + 1 {
            return Err(Error::Usage(format!(
                "sample {i}: sequence of {} frames is too short for {unroll} steps",
                s.frames.len()
            )));
        }
    }
    let net = params.view();
    let n = samples.len();
    let units = params.config().lstm_units;
    let crop = params.config().crop_size;
    let state = StateVars::constant(g, &LstmState::zeros(n, units));
    let mut unrolled = Unroll::new(state);
    let mut windows: Vec<CropWindow> = samples.iter().map(|s| crop_window_for(&s.truth[0])).collect();
    let mut all_windows = Vec::with_capacity(unroll);
    let mut all_targets = Vec::with_capacity(unroll);
    let mut all_preds = Vec::with_capacity(unroll);
    for t in 1..=unroll {
        let pairs: Vec<PairRequest<'_>> = samples
            .iter()
            .zip(&windows)
            .map(|(s, w)| PairRequest { prev: &s.frames[t - 1], cur: &s.frames[t], window: *w })
            .collect();
        let crops = g.constant(crop_pair_batch(&pairs, crop));
        let targets: Vec<CropFrameBox> =
            samples.iter().zip(&windows).map(|(s, w)| encode_target(w, &s.truth[t])).collect();
        let flat: Vec<f64> = targets.iter().flat_map(|b| b.to_array()).collect();
        let target = g.constant(Tensor::new(&[n, 4], flat)?);
        let pred = unrolled.step(&net, g, vars, crops, target)?;
        let preds: Vec<CropFrameBox> = g.value(pred).data().chunks(4).map(CropFrameBox::from_slice).collect();
        let next: Vec<CropWindow> = samples
            .iter()
            .zip(&windows)
            .zip(&preds)
            .map(|((s, w), p)| match s.source {
                CropSource::GroundTruth => Ok(crop_window_for(&s.truth[t])),
                CropSource::Predicted => Ok(crop_window_for(&decode_prediction(w, p)?.bbox)),
            })
            .collect::<Result<_>>()?;
        all_windows.push(core::mem::replace(&mut windows, next));
        all_targets.push(targets);
        all_preds.push(preds);
    }
    let loss = unrolled.loss(g)?;
    Ok(UnrolledBatch { loss, windows: all_windows, targets: all_targets, predictions: all_preds })
}

/// One unrolled step of a single training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStep {
    pub window: CropWindow,
    /// `[2, 3, S, S]`: previous-frame crop then current-frame crop.
    pub crops: Tensor,
    pub target: CropFrameBox,
}

/// Crop pairs and encoded targets for `unroll` steps of one track. In
/// predicted mode the windows follow the current network's outputs.
pub fn build_training_sequence(
    params: &NetworkParams,
    frames: &[Image],
    truth: &[BoundingBox],
    unroll: usize,
    source: CropSource,
) -> Result<Vec<TrainingStep>> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let sample = TrackSample { frames, truth, source };
    let batch = unroll_batch(params, &mut g, &vars, &[sample], unroll)?;
    let crop = params.config().crop_size;
    Ok(batch
        .windows
        .iter()
        .zip(&batch.targets)
        .enumerate()
        .map(|(k, (w, tg))| {
            let t = k + 1;
            let pair = PairRequest { prev: &frames[t - 1], cur: &frames[t], window: w[0] };
            TrainingStep { window: w[0], crops: crop_pair_batch(&[pair], crop), target: tg[0] }
        })
        .collect())
}

/// True iff the mean of the last `window` losses improved on the mean of
/// the `window` before it by less than `threshold` (relative). Needs at
/// least `2 * window` entries, otherwise false.
pub fn plateau_detect(history: &[f64], window: usize, threshold: f64) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let cur = mean(&history[n - window..]);
    let prev = mean(&history[n - 2 * window..n - window]);
    let improvement = if prev > 0.0 { (prev - cur) / prev } else { 0.0 };
    improvement < threshold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    pub window: usize,
    pub threshold: f64,
    /// A stage advances after this many iterations regardless of loss.
    pub stage_cap: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self { window: 500, threshold: 0.01, stage_cap: 20_000 }
    }
}

/// Checks for a plateau at each window boundary, counted from the start of
/// the current stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauDetector {
    config: PlateauConfig,
    history: Vec<f64>,
}

impl PlateauDetector {
    pub fn new(config: PlateauConfig) -> Self {
        Self { config, history: Vec::new() }
    }

    pub fn config(&self) -> &PlateauConfig {
        &self.config
    }

    pub fn stage_iterations(&self) -> usize {
        self.history.len()
    }

    /// Records a loss; true when the stage should advance.
    pub fn push(&mut self, loss: f64) -> bool {
        self.history.push(loss);
        let n = self.history.len();
        if n >= self.config.stage_cap {
            return true;
        }
        n.is_multiple_of(self.config.window.max(1))
            && plateau_detect(&self.history, self.config.window, self.config.threshold)
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub ladder: Vec<CurriculumStage>,
    pub lr: f64,
    pub lr_final: f64,
    /// Iteration at which `lr` drops to `lr_final`; `None` means 20% of
    /// the planned iterations.
    pub lr_drop_at: Option<usize>,
    /// Planned run length, used for the default drop point.
    pub iterations: usize,
    pub plateau: PlateauConfig,
    pub mirror_probability: f64,
    /// When false every sequence uses ground-truth crops.
    pub self_training: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ladder: LADDER.to_vec(),
            lr: 1e-3,
            lr_final: 1e-4,
            lr_drop_at: None,
            iterations: 10_000,
            plateau: PlateauConfig::default(),
            mirror_probability: 0.5,
            self_training: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rates for full-size, pretrained-backbone training.
    pub fn full_scale() -> Self {
        Self { lr: 1e-5, lr_final: 1e-6, lr_drop_at: Some(10_000), iterations: 200_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::Usage("curriculum ladder is empty".into()));
        }
        for s in &self.ladder {
            if s.unroll == 0 || s.batch == 0 || !(0.0..=1.0).contains(&s.p_self) {
                return Err(Error::Usage(format!("invalid curriculum stage {s:?}")));
            }
        }
        if !(self.lr > 0.0 && self.lr_final > 0.0) {
            return Err(Error::Usage("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mirror_probability) {
            return Err(Error::Usage("mirror probability must lie in [0, 1]".into()));
        }
        if self.plateau.window == 0 {
            return Err(Error::Usage("plateau window must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        let drop = self.lr_drop_at.unwrap_or(self.iterations / 5);
        if iteration < drop {
            self.lr
        } else {
            self.lr_final
        }
    }
}

/// One line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub stage_index: usize,
    pub stage: CurriculumStage,
    pub lr: f64,
    pub loss: f64,
}

/// Owns the parameters, optimizer and curriculum position.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    params: NetworkParams,
    adam: Adam,
    stage: usize,
    iteration: usize,
    plateau: PlateauDetector,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(params: NetworkParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(params.tensors(), config.lr);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let plateau = PlateauDetector::new(config.plateau);
        Ok(Self { config, params, adam, stage: 0, iteration: 0, plateau, rng })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn stage_index(&self) -> usize {
        self.stage
    }

    /// The stage in effect, with `p_self` zeroed when self-training is off.
    pub fn stage(&self) -> CurriculumStage {
        let mut s = self.config.ladder[self.stage];
        if !self.config.self_training {
            s.p_self = 0.0;
        }
        s
    }

    /// Switches scheduled self-crops on or off from the next step on.
    pub fn set_self_training(&mut self, on: bool) {
        self.config.self_training = on;
    }

    pub fn is_final_stage(&self) -> bool {
        self.stage + 1 == self.config.ladder.len()
    }

    /// Moves one rung up the ladder; a no-op at the top. Optimizer moments
    /// carry over.
    pub fn advance_stage(&mut self) {
        if !self.is_final_stage() {
            self.stage += 1;
            self.plateau.reset();
        }
    }

    /// One optimizer step on a freshly sampled batch. On a non-finite loss
    /// or gradient the parameters are left untouched and an error returned.
    pub fn step(&mut self, data: &mut dyn SequenceSource) -> Result<IterationRecord> {
        let stage = self.stage();
        let lr = self.config.lr_at(self.iteration);
        let mut tracks = Vec::with_capacity(stage.batch);
        let mut sources = Vec::with_capacity(stage.batch);
        for _ in 0..stage.batch {
            let seq = data.sample(stage.unroll + 1, &mut self.rng)?;
            if seq.len() < stage.unroll + 1 {
                return Err(Error::Usage(format!(
                    "data source returned {} frames, need {}",
                    seq.len(),
                    stage.unroll + 1
                )));
            }
            let track = if self.rng.random::<f64>() < self.config.mirror_probability {
                mirror_track(&seq.frames, &seq.truth)?
            } else {
                (seq.frames, seq.truth)
            };
            tracks.push(track);
            sources.push(select_crop_source(stage.p_self, &mut self.rng));
        }
        let samples: Vec<TrackSample<'_>> =
            tracks.iter().zip(&sources).map(|((f, t), s)| TrackSample { frames: f, truth: t, source: *s }).collect();
        let (loss, grads) = {
            let mut g = Graph::new();
            let vars = self.params.bind(&mut g, true);
            let batch = unroll_batch(&self.params, &mut g, &vars, &samples, stage.unroll)?;
            let loss = g.value(batch.loss).data()[0];
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss is {loss} at iteration {}", self.iteration)));
            }
            let grads = g.backward(batch.loss)?;
            let per: Vec<Vec<f64>> =
                vars.iter().zip(self.params.tensors()).map(|(v, t)| grads.get_or_zeros(*v, t.len())).collect();
            (loss, per)
        };
        self.adam.set_lr(lr);
        self.adam.step(self.params.tensors_mut(), &grads)?;
        let record = IterationRecord { iteration: self.iteration, stage_index: self.stage, stage, lr, loss };
        self.iteration += 1;
        if self.plateau.push(loss) {
            self.advance_stage();
        }
        Ok(record)
    }
}
