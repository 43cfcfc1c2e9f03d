//! Synthetic tracking sequences built from a single still image.
//!
//! The tracked object and any occluders are rectangular patches cut from the
//! same image that serves as the static background. Each entity drifts with
//! Gaussian-perturbed speed, heading, aspect ratio and scale, and bounces off
//! the frame edges.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::Image;

/// Per-step Gaussian perturbations and initial speed range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionScript {
    /// Initial speed is drawn from `U[speed_min, speed_max]` px/frame.
    pub speed_min: f64,
    pub speed_max: f64,
    pub sigma_speed: f64,
    pub sigma_dir: f64,
    pub sigma_aspect: f64,
    pub sigma_scale: f64,
}

impl Default for MotionScript {
    fn default() -> Self {
        Self { speed_min: 0.0, speed_max: 4.0, sigma_speed: 0.5, sigma_dir: 0.2, sigma_aspect: 0.02, sigma_scale: 0.02 }
    }
}

impl MotionScript {
    pub fn still() -> Self {
        Self { speed_min: 0.0, speed_max: 0.0, sigma_speed: 0.0, sigma_dir: 0.0, sigma_aspect: 0.0, sigma_scale: 0.0 }
    }
}

/// Where scene images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchSource {
    /// Smoothed multi-octave noise fields generated on the fly.
    Procedural,
    /// User-supplied images; one is picked per scene.
    Images(Vec<Image>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub frame_width: usize,
    pub frame_height: usize,
    /// Smallest object/occluder patch, as a fraction of the image area.
    pub min_area_fraction: f64,
    /// Largest object patch, as a fraction of the image area.
    pub max_area_fraction: f64,
    /// Occluder count is drawn uniformly from this inclusive range.
    pub occluders_min: usize,
    pub occluders_max: usize,
    /// Largest occluder patch, as a fraction of the image area.
    pub occluder_max_area_fraction: f64,
    /// Box extents are clamped to `[min_box_size, frame / 2]`.
    pub min_box_size: f64,
    /// A frame is flagged occluded when coverage exceeds this.
    pub occlusion_threshold: f64,
    pub motion: MotionScript,
    /// Resampling attempts before a scene is declared impossible.
    pub max_retries: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frame_width: 128,
            frame_height: 128,
            min_area_fraction: 0.01,
            max_area_fraction: 0.08,
            occluders_min: 0,
            occluders_max: 2,
            occluder_max_area_fraction: 0.08,
            min_box_size: 8.0,
            occlusion_threshold: 0.5,
            motion: MotionScript::default(),
            max_retries: 100,
        }
    }
}

/// Integer rectangle in source-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PatchRect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// An image region cut out for compositing.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub rect: PatchRect,
    pub pixels: Image,
}

/// Background plus the patches that will move over it, all from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub background: Image,
    pub object: Patch,
    pub occluders: Vec<Patch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<Image>,
    pub truth: Vec<BoundingBox>,
    pub occluded: Vec<bool>,
    pub seed: u64,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames `[start, start + len)` as a new sequence.
    pub fn window(&self, start: usize, len: usize) -> Self {
        Self {
            frames: self.frames[start..start + len].to_vec(),
            truth: self.truth[start..start + len].to_vec(),
            occluded: self.occluded[start..start + len].to_vec(),
            seed: self.seed,
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise, one independent field per channel.
pub fn procedural_image<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Image {
    let mut acc = vec![0.0f64; width * height * 3];
    let octaves = [(32.0, 1.0), (16.0, 0.6), (8.0, 0.35), (4.0, 0.2)];
    let mut total_amp = 0.0;
    for &(cell, amp) in &octaves {
        total_amp += amp;
        let gw = (width as f64 / cell) as usize + 2;
        let gh = (height as f64 / cell) as usize + 2;
        // lattice[(gy * gw + gx) * 3 + c]
        let lattice: Vec<f64> = (0..gw * gh * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let split = |v: usize| {
            let f = v as f64 / cell;
            let i = f as usize;
            (i, smoothstep(f - i as f64))
        };
        let xs: Vec<(usize, f64)> = (0..width).map(split).collect();
        let mut row = vec![0.0f64; gw * 3];
        for y in 0..height {
            let (y0, ty) = split(y);
            let (top, bot) = (&lattice[y0 * gw * 3..(y0 + 1) * gw * 3], &lattice[(y0 + 1) * gw * 3..(y0 + 2) * gw * 3]);
            for ((r, a), b) in row.iter_mut().zip(top).zip(bot) {
                *r = a + (b - a) * ty;
            }
            let out = &mut acc[y * width * 3..(y + 1) * width * 3];
            for (x, &(x0, tx)) in xs.iter().enumerate() {
                for c in 0..3 {
                    let l = row[x0 * 3 + c];
                    let r = row[(x0 + 1) * 3 + c];
                    out[x * 3 + c] += amp * (l + (r - l) * tx);
                }
            }
        }
    }
    let tint: [f64; 3] = core::array::from_fn(|_| rng.random_range(-40.0..40.0));
    let scale = 150.0 / total_amp;
    let data = acc.iter().enumerate().map(|(i, v)| (128.0 + tint[i % 3] + scale * v).clamp(0.0, 255.0) as u8).collect();
    Image::from_rgb(width, height, data).expect("dims match")
}

/// Bilinear resize to exactly `width × height`.
pub fn resize(image: &Image, width: usize, height: usize) -> Image {
    if image.width() == width && image.height() == height {
        return image.clone();
    }
    let sx = image.width() as f64 / width as f64;
    let sy = image.height() as f64 / height as f64;
    let mut out = Image::new(width, height, [0, 0, 0]);
    let clamp_x = |v: isize| v.clamp(0, image.width() as isize - 1) as usize;
    let clamp_y = |v: isize| v.clamp(0, image.height() as isize - 1) as usize;
    for y in 0..height {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        let y0 = libm::floor(fy);
        let ty = fy - y0;
        for x in 0..width {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let x0 = libm::floor(fx);
            let tx = fx - x0;
            let (xa, xb) = (clamp_x(x0 as isize), clamp_x(x0 as isize + 1));
            let (ya, yb) = (clamp_y(y0 as isize), clamp_y(y0 as isize + 1));
            let px: [u8; 3] = core::array::from_fn(|c| {
                let top = image.pixel(xa, ya)[c] as f64 * (1.0 - tx) + image.pixel(xb, ya)[c] as f64 * tx;
                let bot = image.pixel(xa, yb)[c] as f64 * (1.0 - tx) + image.pixel(xb, yb)[c] as f64 * tx;
                libm::round(top * (1.0 - ty) + bot * ty).clamp(0.0, 255.0) as u8
            });
            out.set_pixel(x, y, px);
        }
    }
    out
}

fn cut(image: &Image, rect: PatchRect) -> Image {
    let mut out = Image::new(rect.w, rect.h, [0, 0, 0]);
    for y in 0..rect.h {
        for x in 0..rect.w {
            out.set_pixel(x, y, image.pixel(rect.x + x, rect.y + y));
        }
    }
    out
}

/// Random rectangle covering at least `min_frac` and roughly at most
/// `max_frac` of the image.
fn sample_rect<R: Rng + ?Sized>(image: &Image, min_frac: f64, max_frac: f64, rng: &mut R) -> PatchRect {
    let (iw, ih) = (image.width(), image.height());
    let total = (iw * ih) as f64;
    let hi = max_frac.max(min_frac);
    let frac = if hi > min_frac { rng.random_range(min_frac..hi) } else { min_frac };
    let target = libm::ceil(frac * total).max(1.0);
    // Any width in [ceil(target / ih), iw] admits a height <= ih.
    let w_lo = (libm::ceil(target / ih as f64) as usize).clamp(1, iw);
    let aspect = libm::exp(rng.random_range(-0.5..0.5));
    let w_pref = libm::round(libm::sqrt(target * aspect)) as usize;
    let w = w_pref.clamp(w_lo, iw);
    let h = (libm::ceil(target / w as f64) as usize).clamp(1, ih);
    let x = rng.random_range(0..=iw - w);
    let y = rng.random_range(0..=ih - h);
    PatchRect { x, y, w, h }
}

/// Picks a scene image and cuts the object and occluder patches from it.
pub fn sample_scene<R: Rng + ?Sized>(source: &PatchSource, cfg: &SynthConfig, rng: &mut R) -> Result<Scene> {
    let min_side = libm::ceil(cfg.min_box_size) as usize;
    let mut attempts = 0;
    let background = loop {
        let candidate = match source {
            PatchSource::Procedural => procedural_image(cfg.frame_width, cfg.frame_height, rng),
            PatchSource::Images(images) => {
                if images.is_empty() {
                    return Err(Error::Usage("image source has no images".into()));
                }
                let img = &images[rng.random_range(0..images.len())];
                if img.width() >= min_side && img.height() >= min_side {
                    resize(img, cfg.frame_width, cfg.frame_height)
                } else {
                    attempts += 1;
                    if attempts >= cfg.max_retries {
                        return Err(Error::Usage(format!(
                            "no usable scene image after {attempts} attempts (need at least {min_side}x{min_side})"
                        )));
                    }
                    continue;
                }
            }
        };
        break candidate;
    };
    let rect = sample_rect(&background, cfg.min_area_fraction, cfg.max_area_fraction, rng);
    let object = Patch { rect, pixels: cut(&background, rect) };
    let count = if cfg.occluders_max > cfg.occluders_min {
        rng.random_range(cfg.occluders_min..=cfg.occluders_max)
    } else {
        cfg.occluders_min
    };
    let occluders = (0..count)
        .map(|_| {
            let rect = sample_rect(&background, cfg.min_area_fraction, cfg.occluder_max_area_fraction, rng);
            Patch { rect, pixels: cut(&background, rect) }
        })
        .collect();
    Ok(Scene { background, object, occluders })
}

/// Fraction of `object`'s area covered by the union of `occluders`, by
/// exact rectangle-union area over the compressed coordinate grid.
pub fn coverage(object: &BoundingBox, occluders: &[BoundingBox]) -> f64 {
    let clipped: Vec<BoundingBox> = occluders
        .iter()
        .filter_map(|o| {
            let c = BoundingBox {
                x1: o.x1.max(object.x1),
                y1: o.y1.max(object.y1),
                x2: o.x2.min(object.x2),
                y2: o.y2.min(object.y2),
            };
            (c.x1 < c.x2 && c.y1 < c.y2).then_some(c)
        })
        .collect();
    if clipped.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|c| [c.x1, c.x2]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|c| [c.y1, c.y2]).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    ys.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    ys.dedup();
    let mut covered = 0.0;
    for xw in xs.windows(2) {
        let mx = (xw[0] + xw[1]) / 2.0;
        for yw in ys.windows(2) {
            let my = (yw[0] + yw[1]) / 2.0;
            if clipped.iter().any(|c| c.x1 <= mx && mx <= c.x2 && c.y1 <= my && my <= c.y2) {
                covered += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    (covered / object.area()).clamp(0.0, 1.0)
}

struct Entity {
    cx: f64,
    cy: f64,
    base_w: f64,
    base_h: f64,
    speed: f64,
    dir: f64,
    aspect: f64,
    scale: f64,
}

impl Entity {
    fn spawn<R: Rng + ?Sized>(patch: &Patch, cfg: &SynthConfig, inside: bool, rng: &mut R) -> Self {
        let (fw, fh) = (cfg.frame_width as f64, cfg.frame_height as f64);
        let max_w = (fw / 2.0).max(cfg.min_box_size);
        let max_h = (fh / 2.0).max(cfg.min_box_size);
        let base_w = (patch.rect.w as f64).clamp(cfg.min_box_size, max_w);
        let base_h = (patch.rect.h as f64).clamp(cfg.min_box_size, max_h);
        let (cx, cy) = if inside {
            (rng.random_range(base_w / 2.0..=fw - base_w / 2.0), rng.random_range(base_h / 2.0..=fh - base_h / 2.0))
        } else {
            (rng.random_range(0.0..=fw), rng.random_range(0.0..=fh))
        };
        let m = &cfg.motion;
        let speed = if m.speed_max > m.speed_min { rng.random_range(m.speed_min..m.speed_max) } else { m.speed_min };
        let dir = rng.random_range(0.0..2.0 * PI);
        Self { cx, cy, base_w, base_h, speed, dir, aspect: 1.0, scale: 1.0 }
    }

    fn extents(&self, cfg: &SynthConfig) -> (f64, f64) {
        let ra = libm::sqrt(self.aspect);
        let w = (self.base_w * self.scale * ra)
            .clamp(cfg.min_box_size, (cfg.frame_width as f64 / 2.0).max(cfg.min_box_size));
        let h = (self.base_h * self.scale / ra)
            .clamp(cfg.min_box_size, (cfg.frame_height as f64 / 2.0).max(cfg.min_box_size));
        (w, h)
    }

    fn bbox(&self, cfg: &SynthConfig) -> BoundingBox {
        let (w, h) = self.extents(cfg);
        BoundingBox::from_center(self.cx, self.cy, w, h)
    }

    fn advance<R: Rng + ?Sized>(&mut self, cfg: &SynthConfig, noise: &Noise, rng: &mut R) {
        self.speed = (self.speed + noise.speed.sample(rng)).max(0.0);
        self.dir += noise.dir.sample(rng);
        self.aspect = (self.aspect * libm::exp(noise.aspect.sample(rng))).clamp(0.5, 2.0);
        self.scale = (self.scale * libm::exp(noise.scale.sample(rng))).clamp(0.5, 2.0);
        self.cx += self.speed * libm::cos(self.dir);
        self.cy += self.speed * libm::sin(self.dir);
        let (fw, fh) = (cfg.frame_width as f64, cfg.frame_height as f64);
        // Reflect the centre off the frame edges; a centre inside the frame
        // keeps at least a quarter of the box visible.
        if self.cx < 0.0 {
            self.cx = (-self.cx).min(fw);
            self.dir = PI - self.dir;
        } else if self.cx > fw {
            self.cx = (2.0 * fw - self.cx).max(0.0);
            self.dir = PI - self.dir;
        }
        if self.cy < 0.0 {
            self.cy = (-self.cy).min(fh);
            self.dir = -self.dir;
        } else if self.cy > fh {
            self.cy = (2.0 * fh - self.cy).max(0.0);
            self.dir = -self.dir;
        }
    }
}

struct Noise {
    speed: Normal<f64>,
    dir: Normal<f64>,
    aspect: Normal<f64>,
    scale: Normal<f64>,
}

impl Noise {
    fn new(m: &MotionScript) -> Result<Self> {
        let n = |s: f64| Normal::new(0.0, s).map_err(|e| Error::Usage(format!("invalid noise std {s}: {e}")));
        Ok(Self {
            speed: n(m.sigma_speed)?,
            dir: n(m.sigma_dir)?,
            aspect: n(m.sigma_aspect)?,
            scale: n(m.sigma_scale)?,
        })
    }
}

/// Nearest-neighbour paste of `patch` stretched over `bbox`.
fn paste(frame: &mut Image, patch: &Image, bbox: &BoundingBox) {
    let x_lo = libm::floor(bbox.x1.max(0.0)) as usize;
    let y_lo = libm::floor(bbox.y1.max(0.0)) as usize;
    let x_hi = (libm::ceil(bbox.x2).max(0.0) as usize).min(frame.width());
    let y_hi = (libm::ceil(bbox.y2).max(0.0) as usize).min(frame.height());
    let (bw, bh) = (bbox.width(), bbox.height());
    for y in y_lo..y_hi {
        let py = y as f64 + 0.5;
        if py < bbox.y1 || py >= bbox.y2 {
            continue;
        }
        let sy = (((py - bbox.y1) / bh * patch.height() as f64) as usize).min(patch.height() - 1);
        for x in x_lo..x_hi {
            let px = x as f64 + 0.5;
            if px < bbox.x1 || px >= bbox.x2 {
                continue;
            }
            let sx = (((px - bbox.x1) / bw * patch.width() as f64) as usize).min(patch.width() - 1);
            frame.set_pixel(x, y, patch.pixel(sx, sy));
        }
    }
}

/// Animates `scene` for `length` frames. Frame 0 shows the initial layout;
/// every later frame first perturbs and moves each entity.
pub fn simulate<R: Rng + ?Sized>(
    scene: &Scene,
    cfg: &SynthConfig,
    length: usize,
    seed: u64,
    rng: &mut R,
) -> Result<SyntheticSequence> {
    if length < 2 {
        return Err(Error::Usage(format!("sequence length must be at least 2, got {length}")));
    }
    let noise = Noise::new(&cfg.motion)?;
    let mut object = Entity::spawn(&scene.object, cfg, true, rng);
    let mut occluders: Vec<Entity> = scene.occluders.iter().map(|p| Entity::spawn(p, cfg, false, rng)).collect();
    let mut frames = Vec::with_capacity(length);
    let mut truth = Vec::with_capacity(length);
    let mut occluded = Vec::with_capacity(length);
    for t in 0..length {
        if t > 0 {
            object.advance(cfg, &noise, rng);
            for o in &mut occluders {
                o.advance(cfg, &noise, rng);
            }
        }
        let background = if scene.background.width() == cfg.frame_width && scene.background.height() == cfg.frame_height
        {
            scene.background.clone()
        } else {
            resize(&scene.background, cfg.frame_width, cfg.frame_height)
        };
        let mut frame = background;
        let obox = object.bbox(cfg);
        paste(&mut frame, &scene.object.pixels, &obox);
        let oboxes: Vec<BoundingBox> = occluders.iter().map(|o| o.bbox(cfg)).collect();
        for (o, b) in scene.occluders.iter().zip(&oboxes) {
            paste(&mut frame, &o.pixels, b);
        }
        occluded.push(coverage(&obox, &oboxes) > cfg.occlusion_threshold);
        frames.push(frame);
        truth.push(obox);
    }
    Ok(SyntheticSequence { frames, truth, occluded, seed })
}

/// Samples a scene and simulates it, fully determined by `seed`.
pub fn generate(source: &PatchSource, cfg: &SynthConfig, length: usize, seed: u64) -> Result<SyntheticSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(source, cfg, &mut rng)?;
    simulate(&scene, cfg, length, seed, &mut rng)
}

/// Anything that can hand the trainer a sequence of a requested length.
pub trait SequenceSource {
    fn sample(&mut self, length: usize, rng: &mut dyn RngCore) -> Result<SyntheticSequence>;
}

/// Endless stream of freshly generated sequences.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub patches: PatchSource,
    pub config: SynthConfig,
}

impl SequenceSource for SyntheticSource {
    fn sample(&mut self, length: usize, rng: &mut dyn RngCore) -> Result<SyntheticSequence> {
        generate(&self.patches, &self.config, length, rng.next_u64())
    }
}
