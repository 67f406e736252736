//! Shared value types: frame rates, spans and grayscale frames.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Frame rate as an exact ratio, e.g. `30000/1001`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub const fn new(num: u32, den: u32) -> Self {
        Rational { num, den }
    }

    pub const fn integer(fps: u32) -> Self {
        Rational { num: fps, den: 1 }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_valid(self) -> bool {
        self.num > 0 && self.den > 0
    }

    /// Parses `"25"`, `"25/1"` or `"30000/1001"`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let r = match s.split_once('/') {
            Some((n, d)) => Rational::new(n.trim().parse().ok()?, d.trim().parse().ok()?),
            None => Rational::new(s.parse().ok()?, 1),
        };
        r.is_valid().then_some(r)
    }

    /// First frame index whose timestamp is at or after `second` seconds.
    pub fn second_start(self, second: u64) -> u64 {
        let num = self.num as u128;
        let den = self.den as u128;
        (second as u128 * num).div_ceil(den) as u64
    }

    /// Frame range `[start, end)` belonging to a whole second.
    pub fn second_frames(self, second: u64) -> FrameSpan {
        FrameSpan::new(self.second_start(second), self.second_start(second + 1))
    }

    /// Center-most frame of a second, clamped into the second's frame range.
    pub fn second_center(self, second: u64) -> u64 {
        let num = self.num as u128;
        let den = self.den as u128;
        let center = ((2 * second as u128 + 1) * num / (2 * den)) as u64;
        let span = self.second_frames(second);
        if span.is_empty() {
            return span.start;
        }
        center.clamp(span.start, span.end - 1)
    }

    /// Number of complete seconds in a stream of `frame_count` frames.
    /// The trailing partial second is not counted.
    pub fn full_seconds(self, frame_count: u64) -> u64 {
        (frame_count as u128 * self.den as u128 / self.num as u128) as u64
    }

    /// Number of frames spanning `seconds` (rounded to nearest).
    pub fn frames_in(self, seconds: f64) -> u64 {
        (seconds * self.as_f64()).round().max(0.0) as u64
    }

    /// Second that contains frame `index`.
    pub fn second_of(self, index: u64) -> u64 {
        (index as u128 * self.den as u128 / self.num as u128) as u64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    pub const fn new(start: f64, end: f64) -> Self {
        TimeSpan { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_valid(&self) -> bool {
        self.start.is_finite() && self.end.is_finite() && self.start < self.end
    }

    pub fn overlap(&self, other: &TimeSpan) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    pub fn intersects(&self, other: &TimeSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    /// Intersection over union of two intervals.
    pub fn iou(&self, other: &TimeSpan) -> f64 {
        let inter = self.overlap(other);
        let union = self.duration() + other.duration() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Half-open frame interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameSpan {
    pub start: u64,
    pub end: u64,
}

impl FrameSpan {
    pub const fn new(start: u64, end: u64) -> Self {
        FrameSpan { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: u64) -> bool {
        self.start <= index && index < self.end
    }

    pub fn to_time(&self, fps: Rational) -> TimeSpan {
        let f = fps.as_f64();
        TimeSpan::new(self.start as f64 / f, self.end as f64 / f)
    }
}

/// An 8-bit luma image stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for GrayFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayFrame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayFrame {
    /// Returns `None` when the buffer length does not match the dimensions.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width * height).then_some(GrayFrame { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayFrame { width, height, pixels: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayFrame { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Height after an aspect-preserving resize to `width`.
    pub fn scaled_height(src_width: usize, src_height: usize, width: usize) -> usize {
        ((src_height as f64 * width as f64 / src_width as f64).round() as usize).max(1)
    }

    /// Aspect-preserving bilinear resize to the given width.
    pub fn resize_to_width(&self, width: usize) -> GrayFrame {
        if width == self.width {
            return self.clone();
        }
        let height = Self::scaled_height(self.width, self.height, width);
        self.resize_bilinear(width, height)
    }

    /// Bilinear resampling with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayFrame {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let top = self.get(x0, y0) as f64 * (1.0 - wx) + self.get(x1, y0) as f64 * wx;
                let bot = self.get(x0, y1) as f64 * (1.0 - wx) + self.get(x1, y1) as f64 * wx;
                let v = top * (1.0 - wy) + bot * wy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayFrame { width, height, pixels: out }
    }
}
