//! Cell masks grown from significant minima, refined by a level set and
//! split along distance-transform ridges.

mod chan_vese;
mod grow;
mod split;

pub use chan_vese::{chan_vese_refine, Refinement};
pub use grow::region_grow;
pub use split::split_mask;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{neighbors, Image2D, LabelMap, Mask, Vec2, N4};
use crate::morphology::{connected_components, squared_distance_to, Connectivity};
use crate::preprocess::{clahe, fill_dark_spots, ClaheParams};

/// Width of the ring used for local contrast, pixels.
pub const RIM_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegParams {
    /// Wall threshold below the running mask mean, normalized intensity.
    pub contrast_delta: f64,
    pub cv_iterations: usize,
    /// Perimeter weight of the level set energy.
    pub cv_smoothness_mu: f64,
    /// Dynamic of the distance-transform maxima used as split seeds, pixels.
    pub h_maxima_h: f64,
    /// Split seeds closer than this are merged, pixels.
    pub min_seed_separation: f64,
    pub clahe: ClaheParams,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            contrast_delta: 0.15,
            cv_iterations: 50,
            cv_smoothness_mu: 0.2,
            h_maxima_h: 2.0,
            min_seed_separation: 5.0,
            clahe: ClaheParams::default(),
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_delta > 0.0 && self.contrast_delta < 1.0) {
            return Err(Error::param("seg.contrast_delta", "must lie in (0, 1)"));
        }
        if self.cv_iterations < 1 {
            return Err(Error::param("seg.cv_iterations", "must be >= 1"));
        }
        if !(self.cv_smoothness_mu >= 0.0) || !self.cv_smoothness_mu.is_finite() {
            return Err(Error::param(
                "seg.cv_smoothness_mu",
                "must be finite and >= 0",
            ));
        }
        if !(self.h_maxima_h > 0.0) || !self.h_maxima_h.is_finite() {
            return Err(Error::param("seg.h_maxima_h", "must be finite and > 0"));
        }
        if !(self.min_seed_separation >= 0.0) || !self.min_seed_separation.is_finite() {
            return Err(Error::param(
                "seg.min_seed_separation",
                "must be finite and >= 0",
            ));
        }
        self.clahe.validate()
    }
}

/// Area and intensity summary of one cell mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub area: usize,
    pub mean_interior: f64,
    /// Mean over the ring of pixels within [`RIM_WIDTH`] of the mask.
    pub mean_rim: f64,
}

impl CellStats {
    pub fn measure(mask: &Mask, img: &Image2D) -> Self {
        let (w, h) = (img.width(), img.height());
        let mean_interior = mask.mean_of(img);
        let Some(bbox) = mask.bbox() else {
            return Self {
                area: 0,
                mean_interior: 0.0,
                mean_rim: 0.0,
            };
        };
        let win = bbox.expand(RIM_WIDTH.ceil() as usize + 1, w, h);
        let bits = mask.window_bits(&win);
        let d2 = squared_distance_to(&bits, win.width(), win.height());
        let r2 = RIM_WIDTH * RIM_WIDTH + 1e-9;
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && d <= r2 {
                let (lx, ly) = (i % win.width(), i / win.width());
                sum += img.data()[win.frame_index(w, lx, ly)];
                n += 1;
            }
        }
        let mean_rim = if n > 0 { sum / n as f64 } else { mean_interior };
        Self {
            area: mask.area(),
            mean_interior,
            mean_rim,
        }
    }

    /// Interior mean minus rim mean.
    pub fn contrast(&self) -> f64 {
        self.mean_interior - self.mean_rim
    }
}

/// Cell instances of one frame. `stats[l - 1]` and `recovered[l - 1]`
/// describe label `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMaskSet {
    pub labels: LabelMap,
    pub stats: Vec<CellStats>,
    /// Set for masks added by tracking rather than detected.
    pub recovered: Vec<bool>,
}

impl CellMaskSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            labels: LabelMap::new(width, height),
            stats: Vec::new(),
            recovered: Vec::new(),
        }
    }

    /// Labels masks 1..K in the given order, skipping empty ones. Pixels
    /// claimed twice stay with the earlier mask.
    pub fn from_masks(width: usize, height: usize, masks: &[Mask], img: &Image2D) -> Self {
        let mut labels = LabelMap::new(width, height);
        let mut kept = Vec::new();
        for m in masks {
            let free: Vec<usize> = m
                .pixels()
                .iter()
                .copied()
                .filter(|&p| labels.labels()[p] == 0)
                .collect();
            if free.is_empty() {
                continue;
            }
            let label = kept.len() as u32 + 1;
            for &p in &free {
                labels.labels_mut()[p] = label;
            }
            kept.push(Mask::from_indices(width, height, free));
        }
        let stats = kept.iter().map(|m| CellStats::measure(m, img)).collect();
        Self {
            labels,
            stats,
            recovered: vec![false; kept.len()],
        }
    }

    /// Renumbers `labels` to 1..K and measures every cell.
    pub fn from_labels(mut labels: LabelMap, img: &Image2D) -> Self {
        labels.relabel_sequential();
        let stats: Vec<CellStats> = split_labels(&labels)
            .iter()
            .map(|m| CellStats::measure(m, img))
            .collect();
        let n = stats.len();
        Self {
            labels,
            stats,
            recovered: vec![false; n],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.labels.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.labels.height()
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn mask(&self, label: u32) -> Mask {
        Mask::from_label(&self.labels, label)
    }

    /// All masks, `masks()[l - 1]` for label `l`.
    pub fn masks(&self) -> Vec<Mask> {
        let mut out = split_labels(&self.labels);
        out.resize(self.len(), Mask::empty(self.width(), self.height()));
        out
    }

    pub fn stats(&self, label: u32) -> &CellStats {
        &self.stats[label as usize - 1]
    }

    /// Adds a recovered cell from the part of `mask` not owned by another
    /// cell, keeping its largest 4-connected piece. Returns the new label,
    /// or `None` if nothing is left.
    pub fn add_cell(&mut self, mask: &Mask, img: &Image2D) -> Option<u32> {
        let free: Vec<usize> = mask
            .pixels()
            .iter()
            .copied()
            .filter(|&p| self.labels.labels()[p] == 0)
            .collect();
        let piece = largest_component(&Mask::from_indices(self.width(), self.height(), free));
        if piece.is_empty() {
            return None;
        }
        let label = self.len() as u32 + 1;
        for &p in piece.pixels() {
            self.labels.labels_mut()[p] = label;
        }
        self.stats.push(CellStats::measure(&piece, img));
        self.recovered.push(true);
        Some(label)
    }
}

/// One mask per label 1..=max_label, built in a single pass.
pub(crate) fn split_labels(labels: &LabelMap) -> Vec<Mask> {
    let (w, h) = (labels.width(), labels.height());
    let mut buckets = vec![Vec::new(); labels.max_label() as usize];
    for (i, &l) in labels.labels().iter().enumerate() {
        if l > 0 {
            buckets[l as usize - 1].push(i);
        }
    }
    // Indices arrive in ascending order, so the masks are already sorted.
    buckets
        .into_iter()
        .map(|px| Mask::from_indices(w, h, px))
        .collect()
}

/// CLAHE followed by filling of enclosed dark spots.
pub fn enhance(raw: &Image2D, p: &SegParams) -> Result<Image2D> {
    Ok(fill_dark_spots(&clahe(raw, &p.clahe)?))
}

/// Largest 4-connected component; ties go to the one found first in
/// raster order.
pub(crate) fn largest_component(mask: &Mask) -> Mask {
    let Some(bbox) = mask.bbox() else {
        return mask.clone();
    };
    let bits = mask.window_bits(&bbox);
    let (comp, n) = connected_components(&bits, bbox.width(), bbox.height(), Connectivity::Four);
    if n <= 1 {
        return mask.clone();
    }
    let mut sizes = vec![0usize; n as usize + 1];
    for &c in &comp {
        sizes[c as usize] += 1;
    }
    let best = (1..=n as usize).fold(1, |b, c| if sizes[c] > sizes[b] { c } else { b });
    let keep: Vec<bool> = comp.iter().map(|&c| c as usize == best).collect();
    Mask::from_window(mask.width(), mask.height(), &bbox, &keep)
}

/// Full per-frame segmentation of the log-brightened frame `raw`.
pub fn segment_frame(raw: &Image2D, minima: &[Vec2], p: &SegParams) -> Result<CellMaskSet> {
    p.validate()?;
    let (w, h) = (raw.width(), raw.height());
    if minima.is_empty() {
        return Ok(CellMaskSet::empty(w, h));
    }
    let enhanced = enhance(raw, p)?;
    segment_enhanced(&enhanced, minima, p)
}

/// [`segment_frame`] on a frame that is already enhanced.
pub fn segment_enhanced(enhanced: &Image2D, minima: &[Vec2], p: &SegParams) -> Result<CellMaskSet> {
    p.validate()?;
    let (w, h) = (enhanced.width(), enhanced.height());
    if minima.is_empty() {
        return Ok(CellMaskSet::empty(w, h));
    }
    let seed_pixels: Vec<usize> = minima
        .iter()
        .map(|m| {
            let (x, y) = m.to_pixel(w, h);
            y * w + x
        })
        .collect();
    let grown = grow::grow_labels(enhanced, &seed_pixels, p.contrast_delta);

    // Touching regions that would each admit the other's contact pixels
    // belong to one bright object; splitting decides later how to cut it.
    let groups = merge_admissible(enhanced, &grown, seed_pixels.len(), p.contrast_delta);
    let mut grouped: Vec<(Vec<usize>, Vec<Vec2>)> = Vec::new();
    let mut slot = vec![usize::MAX; seed_pixels.len()];
    for seed in 0..seed_pixels.len() {
        let root = groups[seed];
        if slot[root] == usize::MAX {
            slot[root] = grouped.len();
            grouped.push((Vec::new(), Vec::new()));
        }
        grouped[slot[root]].1.push(minima[seed]);
    }
    for (i, &l) in grown.iter().enumerate() {
        if l > 0 {
            grouped[slot[groups[l as usize - 1]]].0.push(i);
        }
    }
    let regions: Vec<(Mask, Vec<Vec2>)> = grouped
        .into_iter()
        .filter(|(px, _)| !px.is_empty())
        .map(|(px, seeds)| (Mask::from_indices(w, h, px), seeds))
        // Regions no brighter than their surroundings are background.
        .filter(|(m, _)| CellStats::measure(m, enhanced).contrast() > 0.0)
        .collect();

    let refined: Vec<Mask> = regions
        .par_iter()
        .map(|(m, _)| chan_vese_refine(enhanced, m, p).map(|r| r.mask))
        .collect::<Result<_>>()?;
    let seeds: Vec<&[Vec2]> = regions.iter().map(|(_, s)| s.as_slice()).collect();
    let resolved = resolve_contested(w, h, &refined, &seeds);

    let mut pieces: Vec<Mask> = resolved
        .par_iter()
        .filter(|m| !m.is_empty())
        .map(|m| split_mask(&largest_component(m), p))
        .flatten()
        .collect();
    // Splitting a background flood leaves pieces darker than their rim.
    pieces.retain(|m| !m.is_empty() && CellStats::measure(m, enhanced).contrast() > 0.0);
    pieces.sort_by_key(|m| m.pixels()[0]);
    Ok(CellMaskSet::from_masks(w, h, &pieces, enhanced))
}

/// Union-find roots over seed indices.
fn merge_admissible(img: &Image2D, labels: &[u32], n: usize, delta: f64) -> Vec<usize> {
    let (w, h) = (img.width(), img.height());
    let mut sums = vec![(0.0, 0usize); n];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            let s = &mut sums[l as usize - 1];
            s.0 += img.data()[i];
            s.1 += 1;
        }
    }
    let mean = |l: u32| {
        let (s, c) = sums[l as usize - 1];
        s / c as f64
    };
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for (i, &a) in labels.iter().enumerate() {
        if a == 0 {
            continue;
        }
        for j in neighbors(i, w, h, &N4) {
            let b = labels[j];
            if b == 0 || b <= a {
                continue;
            }
            let admissible = img.data()[i] >= mean(b) - delta && img.data()[j] >= mean(a) - delta;
            if admissible {
                let (ra, rb) = (
                    find(&mut parent, a as usize - 1),
                    find(&mut parent, b as usize - 1),
                );
                // Keep the smaller root for order independence.
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
    }
    (0..n).map(|s| find(&mut parent, s)).collect()
}

/// Gives every pixel claimed by several masks to the claimant with the
/// nearest seed; ties go to the earlier mask.
fn resolve_contested(width: usize, height: usize, masks: &[Mask], seeds: &[&[Vec2]]) -> Vec<Mask> {
    const NONE: u32 = u32::MAX;
    let mut owner = vec![NONE; width * height];
    let mut contested = Vec::new();
    for (k, m) in masks.iter().enumerate() {
        for &p in m.pixels() {
            if owner[p] == NONE {
                owner[p] = k as u32;
            } else {
                contested.push((p, k as u32));
            }
        }
    }
    for &(p, k) in &contested {
        let here = Vec2::new((p % width) as f64, (p / width) as f64);
        let dist = |k: u32| {
            seeds[k as usize]
                .iter()
                .map(|s| s.distance(here))
                .fold(f64::INFINITY, f64::min)
        };
        let cur = owner[p];
        let (dc, dk) = (dist(cur), dist(k));
        if dk < dc || (dk == dc && k < cur) {
            owner[p] = k;
        }
    }
    let mut buckets = vec![Vec::new(); masks.len()];
    for (i, &o) in owner.iter().enumerate() {
        if o != NONE {
            buckets[o as usize].push(i);
        }
    }
    buckets
        .into_iter()
        .map(|px| Mask::from_indices(width, height, px))
        .collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::preprocess::log_brighten;

    #[test]
    fn defaults_validate() {
        SegParams::default().validate().unwrap();
        let bad = SegParams {
            contrast_delta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SegParams {
            h_maxima_h: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SegParams {
            cv_iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stats_of_a_bright_square() {
        let img = Image2D::from_fn(20, 20, |x, y| {
            if (5..15).contains(&x) && (5..15).contains(&y) {
                0.9
            } else {
                0.1
            }
        });
        let m = Mask::from_fn(20, 20, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let s = CellStats::measure(&m, &img);
        assert_eq!(s.area, 100);
        assert!((s.mean_interior - 0.9).abs() < 1e-12);
        assert!((s.mean_rim - 0.1).abs() < 1e-12);
        assert!((s.contrast() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_minima_give_empty_set() {
        let img = Image2D::filled(32, 32, 0.5);
        let s = segment_frame(&img, &[], &SegParams::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.labels.max_label(), 0);
    }

    #[test]
    fn ten_blobs_give_ten_cells() {
        let centers: Vec<(f64, f64)> = (0..10)
            .map(|i| (20.0 + 40.0 * (i % 5) as f64, 40.0 + 70.0 * (i / 5) as f64))
            .collect();
        let img = gaussian_blobs(220, 160, &centers, 5.0, 0.8, 0.05);
        let raw = log_brighten(&img, 10.0).unwrap();
        let minima: Vec<Vec2> = centers.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let p = SegParams {
            clahe: ClaheParams {
                tile_size: 32,
                clip_limit: 0.01,
            },
            ..Default::default()
        };
        let cells = segment_frame(&raw, &minima, &p).unwrap();
        assert_eq!(cells.len(), 10);
        assert_eq!(
            cells.labels.distinct_labels(),
            (1..=10).collect::<Vec<u32>>()
        );
        let mut hit: Vec<u32> = centers
            .iter()
            .map(|&(x, y)| cells.labels.get(x as usize, y as usize))
            .collect();
        assert!(hit.iter().all(|&l| l > 0));
        hit.sort();
        hit.dedup();
        assert_eq!(hit.len(), 10);
    }

    #[test]
    fn touching_disks_are_split() {
        let (w, h) = (64, 48);
        let a = disk(w, h, 22.0, 24.0, 10.0);
        let b = disk(w, h, 38.0, 24.0, 10.0);
        let img = Image2D::from_fn(w, h, |x, y| {
            if a[y * w + x] || b[y * w + x] {
                0.9
            } else {
                0.1
            }
        });
        let minima = [Vec2::new(22.0, 24.0), Vec2::new(38.0, 24.0)];
        let cells = segment_enhanced(&img, &minima, &SegParams::default()).unwrap();
        assert_eq!(cells.len(), 2);
        assert_ne!(cells.labels.get(22, 24), cells.labels.get(38, 24));
    }

    #[test]
    fn contested_pixels_go_to_nearest_seed() {
        let a = Mask::from_fn(10, 1, |x, _| x < 7);
        let b = Mask::from_fn(10, 1, |x, _| x >= 3);
        let sa = [Vec2::new(0.0, 0.0)];
        let sb = [Vec2::new(9.0, 0.0)];
        let out = resolve_contested(10, 1, &[a, b], &[&sa, &sb]);
        assert_eq!(out[0].pixels(), &[0, 1, 2, 3, 4]);
        assert_eq!(out[1].pixels(), &[5, 6, 7, 8, 9]);
    }

    #[test]
    fn deterministic() {
        let centers = [(20.0, 20.0), (44.0, 22.0), (30.0, 45.0)];
        let img = gaussian_blobs(64, 64, &centers, 4.0, 0.8, 0.05);
        let minima: Vec<Vec2> = centers.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let p = SegParams {
            clahe: ClaheParams {
                tile_size: 32,
                clip_limit: 0.01,
            },
            ..Default::default()
        };
        let a = segment_frame(&img, &minima, &p).unwrap();
        let b = segment_frame(&img, &minima, &p).unwrap();
        assert_eq!(a, b);
    }
}
