//! Raster containers shared by every stage of the pipeline.
//!
//! Coordinates are continuous with pixel centers at integer positions:
//! `x` runs along columns, `y` along rows, and storage is row-major.

use std::ops::{Add, Mul, Neg, Sub};

/// A point or direction in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        // Pixel-scale values; no need for the overflow-safe `hypot`.
        (self.x * self.x + self.y * self.y).sqrt()
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Nearest pixel, clamped to a `width` x `height` grid.
    #[inline]
    pub fn to_pixel(self, width: usize, height: usize) -> (usize, usize) {
        // Truncating a clamped non-negative value is floor; NaN maps to 0.
        let x = (self.x.clamp(0.0, (width - 1) as f64) + 0.5) as usize;
        let y = (self.y.clamp(0.0, (height - 1) as f64) + 0.5) as usize;
        (x.min(width - 1), y.min(height - 1))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Single-channel floating point raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps row-major data. Panics if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "image data length must equal width * height"
        );
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Value at a signed position, clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image2D {
        Image2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Non-negative integer label per pixel; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u32>) -> Self {
        assert_eq!(
            labels.len(),
            width * height,
            "label data length must equal width * height"
        );
        Self {
            width,
            height,
            labels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u32) {
        self.labels[y * self.width + x] = label;
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Pixel count per label, indexed by label (index 0 is background).
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.max_label() as usize + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// Sorted distinct positive labels.
    pub fn distinct_labels(&self) -> Vec<u32> {
        self.areas()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &a)| a > 0)
            .map(|(l, _)| l as u32)
            .collect()
    }

    /// Renumbers positive labels to 1..K preserving their relative order.
    /// Returns the old-to-new mapping indexed by old label.
    pub fn relabel_sequential(&mut self) -> Vec<u32> {
        let areas = self.areas();
        let mut mapping = vec![0u32; areas.len()];
        let mut next = 1;
        for (old, &area) in areas.iter().enumerate().skip(1) {
            if area > 0 {
                mapping[old] = next;
                next += 1;
            }
        }
        for l in &mut self.labels {
            *l = mapping[*l as usize];
        }
        mapping
    }
}

/// Axis-aligned pixel rectangle, `x0..x1` by `y0..y1` (exclusive ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    #[inline]
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    /// Grown by `margin` on every side and clipped to a `width` x `height` frame.
    pub fn expand(&self, margin: usize, width: usize, height: usize) -> Rect {
        Rect {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    /// Frame index of local pixel `(lx, ly)`.
    pub(crate) fn frame_index(&self, frame_width: usize, lx: usize, ly: usize) -> usize {
        (self.y0 + ly) * frame_width + self.x0 + lx
    }
}

/// Binary mask over a frame, stored as sorted pixel indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Mask {
    width: usize,
    height: usize,
    pixels: Vec<usize>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: Vec::new(),
        }
    }

    /// Indices are sorted and deduplicated.
    pub fn from_indices(width: usize, height: usize, mut pixels: Vec<usize>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        assert!(pixels.last().is_none_or(|&p| p < width * height));
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Self {
        assert_eq!(bits.len(), width * height);
        let pixels = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let pixels = (0..width * height)
            .filter(|&i| f(i % width, i / width))
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Pixels of `labels` equal to `label`.
    pub fn from_label(labels: &LabelMap, label: u32) -> Self {
        let pixels = labels
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect();
        Self {
            width: labels.width(),
            height: labels.height(),
            pixels,
        }
    }

    /// Mask from a raster local to `win`.
    pub(crate) fn from_window(width: usize, height: usize, win: &Rect, bits: &[bool]) -> Self {
        let ww = win.width();
        let pixels = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| win.frame_index(width, i % ww, i / ww))
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.contains_index(y * self.width + x)
    }

    pub fn contains_index(&self, idx: usize) -> bool {
        self.pixels.binary_search(&idx).is_ok()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        let mut bits = vec![false; self.width * self.height];
        for &p in &self.pixels {
            bits[p] = true;
        }
        bits
    }

    /// Local raster of the mask inside `win`.
    pub(crate) fn window_bits(&self, win: &Rect) -> Vec<bool> {
        let ww = win.width();
        let mut bits = vec![false; ww * win.height()];
        for &p in &self.pixels {
            let (x, y) = (p % self.width, p / self.width);
            if x >= win.x0 && x < win.x1 && y >= win.y0 && y < win.y1 {
                bits[(y - win.y0) * ww + x - win.x0] = true;
            }
        }
        bits
    }

    pub fn bbox(&self) -> Option<Rect> {
        let first = *self.pixels.first()?;
        let last = *self.pixels.last()?;
        let (mut x0, mut x1) = (usize::MAX, 0);
        for &p in &self.pixels {
            let x = p % self.width;
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        Some(Rect {
            x0,
            y0: first / self.width,
            x1: x1 + 1,
            y1: last / self.width + 1,
        })
    }

    pub fn centroid(&self) -> Option<Vec2> {
        if self.pixels.is_empty() {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for &p in &self.pixels {
            sx += (p % self.width) as f64;
            sy += (p / self.width) as f64;
        }
        let n = self.pixels.len() as f64;
        Some(Vec2::new(sx / n, sy / n))
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match self.pixels[i].cmp(&other.pixels[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Intersection over union; 0 when both are empty.
    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Mean of `img` over the mask; 0 when empty.
    pub fn mean_of(&self, img: &Image2D) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| img.data()[p]).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Rasters that can be sampled at continuous positions by bilinear blending.
pub trait BilinearField {
    type Output;

    fn grid_width(&self) -> usize;
    fn grid_height(&self) -> usize;

    /// Blend of the four nodes at `(x0, y0)`, `(x0 + 1, y0)`, `(x0, y0 + 1)`,
    /// `(x0 + 1, y0 + 1)` with fractional offsets `(tx, ty)`.
    fn blend(&self, x0: usize, y0: usize, x1: usize, y1: usize, tx: f64, ty: f64) -> Self::Output;
}

/// Splits a clamped coordinate into the lower node, upper node and fraction.
#[inline]
pub(crate) fn bilinear_cell(v: f64, extent: usize) -> (usize, usize, f64) {
    let max = (extent - 1) as f64;
    // NaN passes through clamp unchanged and lands on node 0 with NaN weight.
    let v = v.clamp(0.0, max);
    // Truncation is floor here; NaN truncates to 0.
    let i0 = v as usize;
    let v0 = i0 as f64;
    let i1 = (i0 + 1).min(extent - 1);
    (i0, i1, v - v0)
}

/// Bilinear sample with border clamping. Grid nodes reproduce stored values.
pub fn bilinear_sample<F: BilinearField>(field: &F, p: Vec2) -> F::Output {
    let (x0, x1, tx) = bilinear_cell(p.x, field.grid_width());
    let (y0, y1, ty) = bilinear_cell(p.y, field.grid_height());
    field.blend(x0, y0, x1, y1, tx, ty)
}

impl BilinearField for Image2D {
    type Output = f64;

    fn grid_width(&self) -> usize {
        self.width
    }

    fn grid_height(&self) -> usize {
        self.height
    }

    #[inline]
    fn blend(&self, x0: usize, y0: usize, x1: usize, y1: usize, tx: f64, ty: f64) -> f64 {
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        let top = a + (b - a) * tx;
        let bottom = c + (d - c) * tx;
        top + (bottom - top) * ty
    }
}

/// Min-max rescale to [0, 1]; a constant image maps to all zeros.
pub fn normalize(img: &Image2D) -> Image2D {
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return Image2D::new(img.width(), img.height());
    }
    img.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
}

/// 4-neighbourhood offsets.
pub(crate) const N4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// 8-neighbourhood offsets.
pub(crate) const N8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Neighbours of pixel index `idx` inside a `width` x `height` grid.
#[inline]
pub(crate) fn neighbors(
    idx: usize,
    width: usize,
    height: usize,
    offsets: &'static [(isize, isize)],
) -> impl Iterator<Item = usize> {
    let x = (idx % width) as isize;
    let y = (idx / width) as isize;
    offsets.iter().filter_map(move |&(dx, dy)| {
        let nx = x + dx;
        let ny = y + dy;
        if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
            Some(ny as usize * width + nx as usize)
        } else {
            None
        }
    })
}
