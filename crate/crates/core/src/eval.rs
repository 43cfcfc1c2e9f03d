//! Success curves, VOT-style accuracy and robustness, baselines and report
//! tables.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::image::Image;
use crate::network::NetworkParams;
use crate::tracker::{Tracker, TrackerConfig};

/// Success-curve thresholds 0.00, 0.05, ..., 1.00.
pub const THRESHOLD_STEPS: usize = 20;
pub const DEFAULT_REINIT_GAP: usize = 5;
/// Robustness is `exp(-ROBUSTNESS_RATE * drops / frames)`.
pub const ROBUSTNESS_RATE: f64 = 30.0;

pub fn thresholds() -> impl Iterator<Item = f64> {
    (0..=THRESHOLD_STEPS).map(|i| i as f64 / THRESHOLD_STEPS as f64)
}

/// Fraction of IOUs at or above each threshold; all zeros when empty.
pub fn success_curve(ious: &[f64]) -> Vec<f64> {
    thresholds()
        .map(
            |t| if ious.is_empty() { 0.0 } else { ious.iter().filter(|&&v| v >= t).count() as f64 / ious.len() as f64 },
        )
        .collect()
}

/// Trapezoid-rule area under a curve sampled on [`thresholds`].
pub fn curve_auc(curve: &[f64]) -> f64 {
    if curve.len() < 2 {
        return 0.0;
    }
    let n = curve.len() - 1;
    let inner: f64 = curve[1..n].iter().sum();
    ((inner + (curve[0] + curve[n]) / 2.0) / n as f64).clamp(0.0, 1.0)
}

pub fn robustness(drops: usize, frames: usize) -> f64 {
    if frames == 0 {
        return 1.0;
    }
    libm::exp(-ROBUSTNESS_RATE * drops as f64 / frames as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// IOU of every scored frame.
    pub ious: Vec<f64>,
    /// Occlusion flag per scored frame; `None` when the data had no flags.
    pub occluded: Option<Vec<bool>>,
    pub drops: usize,
    /// Frames counted for robustness (whole sequence lengths).
    pub frames: usize,
    pub accuracy: f64,
    pub robustness: f64,
    /// Mean of accuracy and robustness.
    pub average: f64,
    pub success: Vec<f64>,
    pub auc: f64,
    /// `None` when there are no flags or no occluded scored frames.
    pub success_occluded: Option<Vec<f64>>,
    pub auc_occluded: Option<f64>,
}

impl EvalResult {
    pub fn from_frames(ious: Vec<f64>, occluded: Option<Vec<bool>>, drops: usize, frames: usize) -> Result<Self> {
        if let Some(o) = &occluded {
            if o.len() != ious.len() {
                return Err(Error::Usage(format!("{} IOUs but {} occlusion flags", ious.len(), o.len())));
            }
        }
        let accuracy = if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 };
        let robustness = robustness(drops, frames);
        let success = success_curve(&ious);
        let auc = curve_auc(&success);
        let occ_ious: Option<Vec<f64>> = occluded
            .as_ref()
            .map(|o| ious.iter().zip(o).filter(|(_, &f)| f).map(|(v, _)| *v).collect::<Vec<f64>>())
            .filter(|v| !v.is_empty());
        let success_occluded = occ_ious.as_deref().map(success_curve);
        let auc_occluded = success_occluded.as_deref().map(curve_auc);
        Ok(Self {
            ious,
            occluded,
            drops,
            frames,
            accuracy,
            robustness,
            average: (accuracy + robustness) / 2.0,
            success,
            auc,
            success_occluded,
            auc_occluded,
        })
    }

    /// Pools frames and drops across sequences.
    pub fn pooled(results: &[EvalResult]) -> Result<Self> {
        let ious = results.iter().flat_map(|r| r.ious.iter().copied()).collect();
        let occluded = if !results.is_empty() && results.iter().all(|r| r.occluded.is_some()) {
            Some(results.iter().flat_map(|r| r.occluded.as_ref().unwrap().iter().copied()).collect())
        } else {
            None
        };
        let drops = results.iter().map(|r| r.drops).sum();
        let frames = results.iter().map(|r| r.frames).sum();
        Self::from_frames(ious, occluded, drops, frames)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Usage(format!("{what}: expected {want} entries, got {got}")));
    }
    Ok(())
}

/// Scores aligned predictions. A drop is counted at each onset of a
/// zero-IOU run; no reinitialization happens.
pub fn ope_evaluate(pred: &[BoundingBox], truth: &[BoundingBox], occluded: Option<&[bool]>) -> Result<EvalResult> {
    check_len("predictions vs truth", pred.len(), truth.len())?;
    if let Some(o) = occluded {
        check_len("occlusion flags", o.len(), truth.len())?;
    }
    let ious: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| iou(p, t)).collect();
    let mut drops = 0;
    let mut lost = false;
    for &v in &ious {
        if v == 0.0 && !lost {
            drops += 1;
        }
        lost = v == 0.0;
    }
    let n = ious.len();
    EvalResult::from_frames(ious, occluded.map(<[bool]>::to_vec), drops, n)
}

/// Anything that can be started from a box and then stepped frame by frame.
pub trait SequenceTracker {
    fn start(&mut self, index: usize, frame: &Image, bbox: &BoundingBox) -> Result<()>;
    fn update(&mut self, index: usize, frame: &Image) -> Result<BoundingBox>;
}

/// Keeps reporting the box it was started with.
#[derive(Debug, Clone, Default)]
pub struct StaticTracker {
    bbox: Option<BoundingBox>,
}

impl SequenceTracker for StaticTracker {
    fn start(&mut self, _: usize, _: &Image, bbox: &BoundingBox) -> Result<()> {
        self.bbox = Some(*bbox);
        Ok(())
    }

    fn update(&mut self, _: usize, _: &Image) -> Result<BoundingBox> {
        self.bbox.ok_or_else(|| Error::Usage("tracker not started".into()))
    }
}

/// Replays the true boxes.
#[derive(Debug, Clone)]
pub struct PlaybackTracker {
    pub truth: Vec<BoundingBox>,
}

impl SequenceTracker for PlaybackTracker {
    fn start(&mut self, _: usize, _: &Image, _: &BoundingBox) -> Result<()> {
        Ok(())
    }

    fn update(&mut self, index: usize, _: &Image) -> Result<BoundingBox> {
        self.truth.get(index).copied().ok_or_else(|| Error::Usage(format!("no truth for frame {index}")))
    }
}

/// The recurrent tracker, restarted from scratch on every `start`.
#[derive(Debug, Clone)]
pub struct NetworkTracker<'p> {
    params: &'p NetworkParams,
    config: TrackerConfig,
    inner: Option<Tracker<'p>>,
}

impl<'p> NetworkTracker<'p> {
    pub fn new(params: &'p NetworkParams, config: TrackerConfig) -> Self {
        Self { params, config, inner: None }
    }
}

impl SequenceTracker for NetworkTracker<'_> {
    fn start(&mut self, _: usize, frame: &Image, bbox: &BoundingBox) -> Result<()> {
        self.inner = Some(Tracker::init(self.params, frame, bbox, self.config)?);
        Ok(())
    }

    fn update(&mut self, _: usize, frame: &Image) -> Result<BoundingBox> {
        self.inner.as_mut().ok_or_else(|| Error::Usage("tracker not started".into()))?.track_step(frame)
    }
}

/// Runs `tracker` over frames `1..`, started from the truth on frame 0.
pub fn run_ope(tracker: &mut dyn SequenceTracker, frames: &[Image], init: &BoundingBox) -> Result<Vec<BoundingBox>> {
    if frames.len() < 2 {
        return Err(Error::Usage(format!("tracking needs at least 2 frames, got {}", frames.len())));
    }
    tracker.start(0, &frames[0], init)?;
    (1..frames.len()).map(|i| tracker.update(i, &frames[i])).collect()
}

/// VOT-style run: a zero-IOU frame is a drop; the tracker is restarted from
/// the truth `reinit_gap` frames later. Start frames and the skipped frames
/// are not scored.
pub fn vot_evaluate(
    tracker: &mut dyn SequenceTracker,
    frames: &[Image],
    truth: &[BoundingBox],
    occluded: Option<&[bool]>,
    reinit_gap: usize,
) -> Result<EvalResult> {
    check_len("frames vs truth", frames.len(), truth.len())?;
    if let Some(o) = occluded {
        check_len("occlusion flags", o.len(), truth.len())?;
    }
    if frames.is_empty() {
        return Err(Error::Usage("empty sequence".into()));
    }
    let mut ious = Vec::new();
    let mut flags = Vec::new();
    let mut drops = 0;
    tracker.start(0, &frames[0], &truth[0])?;
    let mut restart_at: Option<usize> = None;
    for t in 1..frames.len() {
        if let Some(r) = restart_at {
            if t < r {
                continue;
            }
            tracker.start(t, &frames[t], &truth[t])?;
            restart_at = None;
            continue;
        }
        let v = iou(&tracker.update(t, &frames[t])?, &truth[t]);
        ious.push(v);
        if let Some(o) = occluded {
            flags.push(o[t]);
        }
        if v == 0.0 {
            drops += 1;
            restart_at = Some(t + reinit_gap.max(1));
        }
    }
    EvalResult::from_frames(ious, occluded.map(|_| flags), drops, frames.len())
}

/// `init_box` for every frame after the first.
pub fn baseline_static(frames: &[Image], init_box: &BoundingBox) -> Vec<BoundingBox> {
    alloc::vec![*init_box; frames.len().saturating_sub(1)]
}

/// Per-method rows sorted by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<(String, EvalResult)>,
}

pub fn compare(results: &[(String, EvalResult)]) -> Report {
    let mut rows = results.to_vec();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Report { rows }
}

impl Report {
    /// True when any method was scored on data carrying occlusion flags.
    pub fn has_occlusion_flags(&self) -> bool {
        self.rows.iter().any(|(_, r)| r.occluded.is_some())
    }

    /// `method,accuracy,drops,robustness,average,auc[,auc_occluded]`. The
    /// occluded column exists only for flagged data and is left empty for a
    /// method without occluded frames.
    pub fn summary_csv(&self) -> String {
        let occ_col = self.has_occlusion_flags();
        let mut s = format!("# robustness = exp(-{ROBUSTNESS_RATE}*drops/frames)\n");
        s.push_str("method,accuracy,drops,robustness,average,auc");
        s.push_str(if occ_col { ",auc_occluded\n" } else { "\n" });
        for (name, r) in &self.rows {
            let _ = write!(s, "{name},{},{},{},{},{}", r.accuracy, r.drops, r.robustness, r.average, r.auc);
            if occ_col {
                let _ = write!(s, ",{}", r.auc_occluded.map(|v| format!("{v}")).unwrap_or_default());
            }
            s.push('\n');
        }
        s
    }

    /// `method,threshold,fraction[,fraction_occluded]`, one row per threshold.
    pub fn success_csv(&self) -> String {
        let occ_col = self.has_occlusion_flags();
        let mut s = String::from("method,threshold,fraction");
        s.push_str(if occ_col { ",fraction_occluded\n" } else { "\n" });
        for (name, r) in &self.rows {
            for (i, t) in thresholds().enumerate() {
                let _ = write!(s, "{name},{t:.2},{}", r.success[i]);
                if occ_col {
                    let _ =
                        write!(s, ",{}", r.success_occluded.as_ref().map(|c| format!("{}", c[i])).unwrap_or_default());
                }
                s.push('\n');
            }
        }
        s
    }
}
