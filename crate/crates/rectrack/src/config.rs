//! Flat `key = value` configuration with `#` comments.
//!
//! Every key has a default and unknown keys are rejected. The network preset
//! is applied before any individual `network.*` override, wherever the
//! lines appear.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rectrack_core::network::{ConvBlock, NetworkConfig};
use rectrack_core::synthgen::{MotionScript, SynthConfig};
use rectrack_core::tracker::TrackerConfig;
use rectrack_core::trainer::{CurriculumStage, PlateauConfig, TrainConfig};

use crate::checkpoint::DType;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub checkpoint_dtype: DType,
    pub synth: SynthConfig,
    /// `None` selects procedural scene images.
    pub image_dir: Option<PathBuf>,
    pub tracker: TrackerConfig,
    pub reinit_gap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            network: NetworkConfig::desk(),
            train: TrainConfig::default(),
            checkpoint_every: 1000,
            checkpoint_dtype: DType::F64,
            synth: SynthConfig::default(),
            image_dir: None,
            tracker: TrackerConfig::default(),
            reinit_gap: rectrack_core::eval::DEFAULT_REINIT_GAP,
        }
    }
}

const KEYS: &[&str] = &[
    "network.preset",
    "network.crop_size",
    "network.conv_blocks",
    "network.skip_channels",
    "network.embed_dim",
    "network.lstm_units",
    "network.seed",
    "train.ladder",
    "train.iterations",
    "train.lr",
    "train.lr_final",
    "train.lr_drop_at",
    "train.plateau_window",
    "train.plateau_threshold",
    "train.stage_cap",
    "train.mirror_probability",
    "train.self_training",
    "train.seed",
    "train.checkpoint_every",
    "train.checkpoint_dtype",
    "synth.source",
    "synth.frame_width",
    "synth.frame_height",
    "synth.min_area_fraction",
    "synth.max_area_fraction",
    "synth.occluders_min",
    "synth.occluders_max",
    "synth.occluder_max_area_fraction",
    "synth.min_box_size",
    "synth.occlusion_threshold",
    "synth.speed_min",
    "synth.speed_max",
    "synth.sigma_speed",
    "synth.sigma_dir",
    "synth.sigma_aspect",
    "synth.sigma_scale",
    "synth.max_retries",
    "track.reset_interval",
    "eval.reinit_gap",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    v.split(',').map(|s| item(s.trim()).ok_or_else(|| Error::Config(format!("{key}: bad list item {s:?}")))).collect()
}

fn preset(name: &str) -> Result<NetworkConfig> {
    match name {
        "desk" => Ok(NetworkConfig::desk()),
        "full" => Ok(NetworkConfig::full()),
        "tiny" => Ok(NetworkConfig::tiny()),
        _ => Err(Error::Config(format!("network.preset: unknown preset {name:?} (desk, full, tiny)"))),
    }
}

/// Splits text into key/value pairs, rejecting malformed, unknown and
/// repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        if map.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(Error::Config(format!("line {}: key {k:?} given twice", i + 1)));
        }
    }
    Ok(map)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        let mut c = Config::default();
        if let Some(p) = map.get("network.preset") {
            c.network = preset(p)?;
        }
        for (k, v) in &map {
            let v = v.as_str();
            let k = k.as_str();
            match k {
                "network.preset" => {}
                "network.crop_size" => c.network.crop_size = parse_num(k, v)?,
                "network.conv_blocks" => {
                    c.network.conv_blocks = parse_list(k, v, |s| {
                        let (kk, ch) = s.split_once('x')?;
                        Some(ConvBlock { kernel: kk.parse().ok()?, out_channels: ch.parse().ok()? })
                    })?
                }
                "network.skip_channels" => c.network.skip_channels = parse_list(k, v, |s| s.parse().ok())?,
                "network.embed_dim" => c.network.embed_dim = parse_num(k, v)?,
                "network.lstm_units" => c.network.lstm_units = parse_num(k, v)?,
                "network.seed" => c.network.seed = parse_num(k, v)?,
                "train.ladder" => {
                    c.train.ladder = parse_list(k, v, |s| {
                        let (ub, p) = s.split_once('@')?;
                        let (u, b) = ub.split_once('x')?;
                        Some(CurriculumStage::new(u.parse().ok()?, b.parse().ok()?, p.parse().ok()?))
                    })?
                }
                "train.iterations" => c.train.iterations = parse_num(k, v)?,
                "train.lr" => c.train.lr = parse_num(k, v)?,
                "train.lr_final" => c.train.lr_final = parse_num(k, v)?,
                "train.lr_drop_at" => c.train.lr_drop_at = if v == "auto" { None } else { Some(parse_num(k, v)?) },
                "train.plateau_window" => c.train.plateau.window = parse_num(k, v)?,
                "train.plateau_threshold" => c.train.plateau.threshold = parse_num(k, v)?,
                "train.stage_cap" => c.train.plateau.stage_cap = parse_num(k, v)?,
                "train.mirror_probability" => c.train.mirror_probability = parse_num(k, v)?,
                "train.self_training" => c.train.self_training = parse_bool(k, v)?,
                "train.seed" => c.train.seed = parse_num(k, v)?,
                "train.checkpoint_every" => c.checkpoint_every = parse_num(k, v)?,
                "train.checkpoint_dtype" => {
                    c.checkpoint_dtype =
                        DType::parse(v).ok_or_else(|| Error::Config(format!("{k}: expected f32 or f64, got {v:?}")))?
                }
                "synth.source" => c.image_dir = if v == "procedural" { None } else { Some(PathBuf::from(v)) },
                "synth.frame_width" => c.synth.frame_width = parse_num(k, v)?,
                "synth.frame_height" => c.synth.frame_height = parse_num(k, v)?,
                "synth.min_area_fraction" => c.synth.min_area_fraction = parse_num(k, v)?,
                "synth.max_area_fraction" => c.synth.max_area_fraction = parse_num(k, v)?,
                "synth.occluders_min" => c.synth.occluders_min = parse_num(k, v)?,
                "synth.occluders_max" => c.synth.occluders_max = parse_num(k, v)?,
                "synth.occluder_max_area_fraction" => c.synth.occluder_max_area_fraction = parse_num(k, v)?,
                "synth.min_box_size" => c.synth.min_box_size = parse_num(k, v)?,
                "synth.occlusion_threshold" => c.synth.occlusion_threshold = parse_num(k, v)?,
                "synth.speed_min" => c.synth.motion.speed_min = parse_num(k, v)?,
                "synth.speed_max" => c.synth.motion.speed_max = parse_num(k, v)?,
                "synth.sigma_speed" => c.synth.motion.sigma_speed = parse_num(k, v)?,
                "synth.sigma_dir" => c.synth.motion.sigma_dir = parse_num(k, v)?,
                "synth.sigma_aspect" => c.synth.motion.sigma_aspect = parse_num(k, v)?,
                "synth.sigma_scale" => c.synth.motion.sigma_scale = parse_num(k, v)?,
                "synth.max_retries" => c.synth.max_retries = parse_num(k, v)?,
                "track.reset_interval" => {
                    let n: usize = parse_num(k, v)?;
                    c.tracker.reset_interval = (n > 0).then_some(n);
                }
                "eval.reinit_gap" => c.reinit_gap = parse_num(k, v)?,
                _ => unreachable!("key list and match arms disagree on {k}"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate().map_err(|e| Error::Config(format!("network: {e}")))?;
        self.train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        let s = &self.synth;
        let m = &s.motion;
        let ok = s.frame_width >= 2 * s.min_box_size as usize
            && s.frame_height >= 2 * s.min_box_size as usize
            && s.min_box_size > 0.0
            && s.min_area_fraction > 0.0
            && s.min_area_fraction <= 1.0
            && s.occluders_min <= s.occluders_max
            && m.speed_min >= 0.0
            && m.speed_min <= m.speed_max
            && [m.sigma_speed, m.sigma_dir, m.sigma_aspect, m.sigma_scale].iter().all(|v| *v >= 0.0 && v.is_finite());
        if !ok {
            return Err(Error::Config(format!("synth: inconsistent settings {s:?}")));
        }
        Ok(())
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn render(&self) -> String {
        let n = &self.network;
        let t = &self.train;
        let s = &self.synth;
        let m: &MotionScript = &s.motion;
        let p: &PlateauConfig = &t.plateau;
        let blocks: Vec<String> = n.conv_blocks.iter().map(|b| format!("{}x{}", b.kernel, b.out_channels)).collect();
        let skips: Vec<String> = n.skip_channels.iter().map(|c| c.to_string()).collect();
        let ladder: Vec<String> = t.ladder.iter().map(|l| format!("{}x{}@{}", l.unroll, l.batch, l.p_self)).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("network.crop_size", n.crop_size.to_string());
        kv("network.conv_blocks", blocks.join(","));
        kv("network.skip_channels", skips.join(","));
        kv("network.embed_dim", n.embed_dim.to_string());
        kv("network.lstm_units", n.lstm_units.to_string());
        kv("network.seed", n.seed.to_string());
        kv("train.ladder", ladder.join(","));
        kv("train.iterations", t.iterations.to_string());
        kv("train.lr", t.lr.to_string());
        kv("train.lr_final", t.lr_final.to_string());
        kv("train.lr_drop_at", t.lr_drop_at.map_or("auto".into(), |v| v.to_string()));
        kv("train.plateau_window", p.window.to_string());
        kv("train.plateau_threshold", p.threshold.to_string());
        kv("train.stage_cap", p.stage_cap.to_string());
        kv("train.mirror_probability", t.mirror_probability.to_string());
        kv("train.self_training", t.self_training.to_string());
        kv("train.seed", t.seed.to_string());
        kv("train.checkpoint_every", self.checkpoint_every.to_string());
        kv("train.checkpoint_dtype", if self.checkpoint_dtype == DType::F32 { "f32" } else { "f64" }.into());
        kv("synth.source", self.image_dir.as_ref().map_or("procedural".into(), |d| d.display().to_string()));
        kv("synth.frame_width", s.frame_width.to_string());
        kv("synth.frame_height", s.frame_height.to_string());
        kv("synth.min_area_fraction", s.min_area_fraction.to_string());
        kv("synth.max_area_fraction", s.max_area_fraction.to_string());
        kv("synth.occluders_min", s.occluders_min.to_string());
        kv("synth.occluders_max", s.occluders_max.to_string());
        kv("synth.occluder_max_area_fraction", s.occluder_max_area_fraction.to_string());
        kv("synth.min_box_size", s.min_box_size.to_string());
        kv("synth.occlusion_threshold", s.occlusion_threshold.to_string());
        kv("synth.speed_min", m.speed_min.to_string());
        kv("synth.speed_max", m.speed_max.to_string());
        kv("synth.sigma_speed", m.sigma_speed.to_string());
        kv("synth.sigma_dir", m.sigma_dir.to_string());
        kv("synth.sigma_aspect", m.sigma_aspect.to_string());
        kv("synth.sigma_scale", m.sigma_scale.to_string());
        kv("synth.max_retries", s.max_retries.to_string());
        kv("track.reset_interval", self.tracker.reset_interval.unwrap_or(0).to_string());
        kv("eval.reinit_gap", self.reinit_gap.to_string());
        out
    }
}
