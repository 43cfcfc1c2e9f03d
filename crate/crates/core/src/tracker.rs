//! Streaming inference with periodic recurrent-state resets.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{crop_window_for, decode_prediction, BoundingBox};
use crate::image::Image;
use crate::network::{crop_pair_batch, LstmState, NetworkParams, PairRequest};

pub const DEFAULT_RESET_INTERVAL: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerConfig {
    /// Restore the first-pass state after this many steps; `None` never resets.
    pub reset_interval: Option<usize>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { reset_interval: Some(DEFAULT_RESET_INTERVAL) }
    }
}

impl TrackerConfig {
    pub fn no_reset() -> Self {
        Self { reset_interval: None }
    }
}

#[derive(Debug, Clone)]
pub struct Tracker<'p> {
    params: &'p NetworkParams,
    config: TrackerConfig,
    lstm: LstmState,
    snapshot: LstmState,
    prev_box: BoundingBox,
    prev_frame: Image,
    frames_since_reset: usize,
    steps: usize,
    resets: usize,
    held: Vec<usize>,
}

impl<'p> Tracker<'p> {
    /// Runs the pair (frame, frame) at the box's window from a zero state;
    /// the resulting state becomes both the live state and the snapshot.
    pub fn init(params: &'p NetworkParams, frame: &Image, bbox: &BoundingBox, config: TrackerConfig) -> Result<Self> {
        if !bbox.is_valid() {
            return Err(Error::Usage(format!("initial box {bbox:?} is not a valid box")));
        }
        if config.reset_interval == Some(0) {
            return Err(Error::Usage("reset interval must be positive".into()));
        }
        let window = crop_window_for(bbox);
        let crops = crop_pair_batch(&[PairRequest { prev: frame, cur: frame, window }], params.config().crop_size);
        let (_, state) = params.predict(&crops, &LstmState::zeros(1, params.config().lstm_units))?;
        if !state.is_finite() {
            return Err(Error::NonFinite("initial forward pass produced a non-finite state".into()));
        }
        Ok(Self {
            params,
            config,
            snapshot: state.clone(),
            lstm: state,
            prev_box: *bbox,
            prev_frame: frame.clone(),
            frames_since_reset: 0,
            steps: 0,
            resets: 0,
            held: Vec::new(),
        })
    }

    /// Predicts the box in `frame`. A non-finite output keeps the previous
    /// box and state and records the step in [`Tracker::held_steps`].
    pub fn track_step(&mut self, frame: &Image) -> Result<BoundingBox> {
        let window = crop_window_for(&self.prev_box);
        let crops = crop_pair_batch(
            &[PairRequest { prev: &self.prev_frame, cur: frame, window }],
            self.params.config().crop_size,
        );
        let (preds, next) = self.params.predict(&crops, &self.lstm)?;
        let decoded = if next.is_finite() { decode_prediction(&window, &preds[0]).ok() } else { None };
        match decoded {
            Some(d) => {
                self.prev_box = d.bbox;
                self.lstm = next;
            }
            None => self.held.push(self.steps),
        }
        self.prev_frame = frame.clone();
        self.steps += 1;
        self.frames_since_reset += 1;
        if let Some(k) = self.config.reset_interval {
            if self.frames_since_reset == k {
                self.lstm = self.snapshot.clone();
                self.frames_since_reset = 0;
                self.resets += 1;
            }
        }
        Ok(self.prev_box)
    }

    pub fn state(&self) -> &LstmState {
        &self.lstm
    }

    pub fn snapshot(&self) -> &LstmState {
        &self.snapshot
    }

    pub fn prev_box(&self) -> BoundingBox {
        self.prev_box
    }

    pub fn frames_since_reset(&self) -> usize {
        self.frames_since_reset
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn resets(&self) -> usize {
        self.resets
    }

    /// Zero-based step indices whose output was non-finite.
    pub fn held_steps(&self) -> &[usize] {
        &self.held
    }
}

/// Initializes on frame 0 and returns one box per later frame.
pub fn track_sequence(
    params: &NetworkParams,
    frames: &[Image],
    init_box: &BoundingBox,
    config: TrackerConfig,
) -> Result<Vec<BoundingBox>> {
    if frames.len() < 2 {
        return Err(Error::Usage(format!("tracking needs at least 2 frames, got {}", frames.len())));
    }
    let mut tracker = Tracker::init(params, &frames[0], init_box, config)?;
    frames[1..].iter().map(|f| tracker.track_step(f)).collect()
}
