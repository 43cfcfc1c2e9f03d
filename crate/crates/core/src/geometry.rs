//! Box and crop mathematics linking image pixels to the network's crop frame.
//!
//! Continuous image coordinates place pixel `(i, j)` on the unit square
//! `[j, j+1) × [i, i+1)`, so pixel centers sit at half-integers.

use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;

/// Smallest box extent, in pixels, that the crop math will accept.
pub const MIN_BOX_SIZE: f64 = 2.0;

/// Default side length of the square network input at desk scale.
pub const DEFAULT_CROP_SIZE: usize = 48;

/// Axis-aligned box in image pixels with `x1 < x2` and `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        if !b.is_valid() {
            return Err(shape_err!("invalid box ({x1}, {y1}, {x2}, {y2}): need finite x1 < x2 and y1 < y2"));
        }
        Ok(b)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { x1: cx - w / 2.0, y1: cy - h / 2.0, x2: cx + w / 2.0, y2: cy + h / 2.0 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite()) && self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self { x1: self.x1 + dx, y1: self.y1 + dy, x2: self.x2 + dx, y2: self.y2 + dy }
    }

    /// True when either extent is below [`MIN_BOX_SIZE`] and will be clamped.
    pub fn is_degenerate(&self) -> bool {
        self.width() < MIN_BOX_SIZE || self.height() < MIN_BOX_SIZE
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Reflects the box across the vertical center line of an image.
    pub fn mirrored(&self, image_width: f64) -> Self {
        Self { x1: image_width - self.x2, y1: self.y1, x2: image_width - self.x1, y2: self.y2 }
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Square-warped crop region in image pixels; may extend past the borders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl CropWindow {
    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn as_box(&self) -> BoundingBox {
        BoundingBox::from_center(self.cx, self.cy, self.w, self.h)
    }
}

/// Box corners in crop coordinates, where the crop spans `[0,1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropFrameBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl CropFrameBox {
    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { x1: v[0], y1: v[1], x2: v[2], y2: v[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Context window centred on `bbox` with twice its extents. Extents below
/// [`MIN_BOX_SIZE`] are raised to it first.
pub fn crop_window_for(bbox: &BoundingBox) -> CropWindow {
    let (cx, cy) = bbox.center();
    CropWindow { cx, cy, w: 2.0 * bbox.width().max(MIN_BOX_SIZE), h: 2.0 * bbox.height().max(MIN_BOX_SIZE) }
}

pub fn encode_target(window: &CropWindow, truth: &BoundingBox) -> CropFrameBox {
    let (left, top) = (window.left(), window.top());
    CropFrameBox {
        x1: (truth.x1 - left) / window.w,
        y1: (truth.y1 - top) / window.h,
        x2: (truth.x2 - left) / window.w,
        y2: (truth.y2 - top) / window.h,
    }
}

/// Result of mapping a network prediction back to image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub bbox: BoundingBox,
    /// Corners arrived inverted or collapsed and were repaired.
    pub repaired: bool,
}

/// Inverse of [`encode_target`]. Inverted corners are swapped and extents
/// below [`MIN_BOX_SIZE`] are widened about their centre.
pub fn decode_prediction(window: &CropWindow, pred: &CropFrameBox) -> Result<Decoded> {
    if !pred.is_finite() {
        return Err(Error::NonFinite(alloc::format!("prediction {pred:?}")));
    }
    let (left, top) = (window.left(), window.top());
    let mut x1 = left + pred.x1 * window.w;
    let mut x2 = left + pred.x2 * window.w;
    let mut y1 = top + pred.y1 * window.h;
    let mut y2 = top + pred.y2 * window.h;
    let mut repaired = false;
    if x1 > x2 {
        core::mem::swap(&mut x1, &mut x2);
        repaired = true;
    }
    if y1 > y2 {
        core::mem::swap(&mut y1, &mut y2);
        repaired = true;
    }
    if x2 - x1 < MIN_BOX_SIZE {
        let c = (x1 + x2) / 2.0;
        x1 = c - MIN_BOX_SIZE / 2.0;
        x2 = c + MIN_BOX_SIZE / 2.0;
        repaired = true;
    }
    if y2 - y1 < MIN_BOX_SIZE {
        let c = (y1 + y2) / 2.0;
        y1 = c - MIN_BOX_SIZE / 2.0;
        y2 = c + MIN_BOX_SIZE / 2.0;
        repaired = true;
    }
    Ok(Decoded { bbox: BoundingBox { x1, y1, x2, y2 }, repaired })
}

/// Maps a byte to the network's `[-1, 1]` input range.
#[inline]
pub fn normalize_pixel(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Bilinearly resamples `window` to `out_size × out_size` without keeping
/// the aspect ratio. Output is `[3, out_size, out_size]` in `[-1, 1]`;
/// samples that fall outside the image read as 0.
pub fn extract_crop(image: &Image, window: &CropWindow, out_size: usize) -> Tensor {
    let mut out = alloc::vec![0.0; 3 * out_size * out_size];
    extract_crop_into(image, window, out_size, &mut out);
    Tensor::new(&[3, out_size, out_size], out).expect("crop dims")
}

/// [`extract_crop`] writing into a caller-provided `[3·S·S]` buffer.
pub fn extract_crop_into(image: &Image, window: &CropWindow, out_size: usize, out: &mut [f64]) {
    assert_eq!(out.len(), 3 * out_size * out_size);
    let (iw, ih) = (image.width() as isize, image.height() as isize);
    let sx = window.w / out_size as f64;
    let sy = window.h / out_size as f64;
    let (left, top) = (window.left(), window.top());
    let plane = out_size * out_size;
    let read = |x: isize, y: isize, c: usize| -> f64 {
        if x < 0 || y < 0 || x >= iw || y >= ih {
            0.0
        } else {
            normalize_pixel(image.pixel(x as usize, y as usize)[c])
        }
    };
    // Precompute horizontal taps once per column.
    let cols: Vec<(isize, f64)> = (0..out_size)
        .map(|j| {
            let x = left + (j as f64 + 0.5) * sx - 0.5;
            let x0 = libm::floor(x);
            (x0 as isize, x - x0)
        })
        .collect();
    for i in 0..out_size {
        let y = top + (i as f64 + 0.5) * sy - 0.5;
        let y0f = libm::floor(y);
        let (y0, fy) = (y0f as isize, y - y0f);
        for (j, &(x0, fx)) in cols.iter().enumerate() {
            for c in 0..3 {
                let v00 = read(x0, y0, c);
                let v01 = read(x0 + 1, y0, c);
                let v10 = read(x0, y0 + 1, c);
                let v11 = read(x0 + 1, y0 + 1, c);
                let top_row = v00 * (1.0 - fx) + v01 * fx;
                let bot_row = v10 * (1.0 - fx) + v11 * fx;
                out[c * plane + i * out_size + j] = top_row * (1.0 - fy) + bot_row * fy;
            }
        }
    }
}

/// Horizontally mirrors a whole track: every frame and every box.
pub fn mirror_track(frames: &[Image], boxes: &[BoundingBox]) -> Result<(Vec<Image>, Vec<BoundingBox>)> {
    if frames.len() != boxes.len() {
        return Err(shape_err!("mirror_track: {} frames but {} boxes", frames.len(), boxes.len()));
    }
    let frames_out = frames.iter().map(Image::flip_horizontal).collect();
    let boxes_out = frames.iter().zip(boxes).map(|(f, b)| b.mirrored(f.width() as f64)).collect();
    Ok((frames_out, boxes_out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn window_doubles_extents() {
        let w = crop_window_for(&bx(10.0, 20.0, 30.0, 60.0));
        assert_eq!(w, CropWindow { cx: 20.0, cy: 40.0, w: 40.0, h: 80.0 });
        assert_eq!(w.as_box(), bx(0.0, 0.0, 40.0, 80.0));
        let w = crop_window_for(&bx(0.0, 0.0, 2.0, 2.0));
        assert_eq!(w.as_box(), bx(-1.0, -1.0, 3.0, 3.0));
        let w = crop_window_for(&bx(-0.5, -0.5, 0.5, 0.5));
        assert_eq!((w.cx, w.cy), (0.0, 0.0));
        // degenerate extents clamp to the minimum size
        assert_eq!((w.w, w.h), (2.0 * MIN_BOX_SIZE, 2.0 * MIN_BOX_SIZE));
    }

    #[test]
    fn encode_known_targets() {
        let b = bx(10.0, 20.0, 30.0, 60.0);
        let w = crop_window_for(&b);
        assert_eq!(encode_target(&w, &b).to_array(), [0.25, 0.25, 0.75, 0.75]);
        let shifted = b.translate(b.width() / 2.0, 0.0);
        assert_eq!(encode_target(&w, &shifted).to_array(), [0.5, 0.25, 1.0, 0.75]);
    }

    #[test]
    fn decode_known_predictions() {
        let b = bx(10.0, 20.0, 30.0, 60.0);
        let w = crop_window_for(&b);
        let d = decode_prediction(&w, &CropFrameBox { x1: 0.25, y1: 0.25, x2: 0.75, y2: 0.75 }).unwrap();
        assert_eq!(d.bbox, b);
        assert!(!d.repaired);
        let d = decode_prediction(&w, &CropFrameBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0 }).unwrap();
        assert_eq!(d.bbox, w.as_box());
    }

    #[test]
    fn decode_repairs_inverted_corners() {
        let w = crop_window_for(&bx(0.0, 0.0, 20.0, 20.0));
        let d = decode_prediction(&w, &CropFrameBox { x1: 0.75, y1: 0.25, x2: 0.25, y2: 0.75 }).unwrap();
        assert!(d.repaired);
        assert_eq!(d.bbox, bx(0.0, 0.0, 20.0, 20.0));
        let d = decode_prediction(&w, &CropFrameBox { x1: 0.5, y1: 0.5, x2: 0.5, y2: 0.5 }).unwrap();
        assert!(d.repaired && d.bbox.is_valid());
        assert_eq!(d.bbox.width(), MIN_BOX_SIZE);
        assert!(decode_prediction(&w, &CropFrameBox { x1: f64::NAN, y1: 0.0, x2: 1.0, y2: 1.0 }).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &bx(10.0, 0.0, 20.0, 10.0)), 0.0);
        let third = iou(&a, &bx(5.0, 0.0, 15.0, 10.0));
        assert!((third - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(BoundingBox::new(5.0, 0.0, 5.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 3.0, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 2.0).is_err());
    }

    #[test]
    fn mirror_reflects_boxes_and_frames() {
        let mut img = Image::new(100, 4, [0, 0, 0]);
        img.set_pixel(0, 1, [255, 1, 2]);
        let (frames, boxes) = mirror_track(&[img.clone()], &[bx(0.0, 0.0, 10.0, 10.0)]).unwrap();
        assert_eq!(boxes[0], bx(90.0, 0.0, 100.0, 10.0));
        assert_eq!(frames[0].pixel(99, 1), [255, 1, 2]);
        let centered = bx(40.0, 0.0, 60.0, 10.0);
        assert_eq!(centered.mirrored(100.0), centered);
        let (twice, _) = mirror_track(&frames, &boxes).unwrap();
        assert_eq!(twice[0], img);
        assert!(mirror_track(&[img], &[]).is_err());
    }

    #[test]
    fn full_image_window_is_identity_up_to_normalization() {
        let mut img = Image::new(4, 4, [0, 0, 0]);
        for y in 0..4 {
            for x in 0..4 {
                img.set_pixel(x, y, [(x * 40) as u8, (y * 50) as u8, ((x + y) * 20) as u8]);
            }
        }
        let w = CropWindow { cx: 2.0, cy: 2.0, w: 4.0, h: 4.0 };
        let t = extract_crop(&img, &w, 4);
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(t.data()[c * 16 + y * 4 + x], normalize_pixel(img.pixel(x, y)[c]));
                }
            }
        }
    }

    #[test]
    fn constant_image_gives_constant_crop() {
        let img = Image::new(9, 7, [200, 10, 128]);
        let w = CropWindow { cx: 4.3, cy: 3.1, w: 3.7, h: 5.2 };
        let t = extract_crop(&img, &w, 6);
        for c in 0..3 {
            let want = normalize_pixel([200, 10, 128][c]);
            assert!(t.data()[c * 36..(c + 1) * 36].iter().all(|v| (v - want).abs() < 1e-12));
        }
    }

    #[test]
    fn out_of_image_samples_read_zero() {
        let img = Image::new(4, 4, [255, 255, 255]);
        let w = CropWindow { cx: 100.0, cy: 100.0, w: 4.0, h: 4.0 };
        assert!(extract_crop(&img, &w, 3).data().iter().all(|&v| v == 0.0));
    }
}
