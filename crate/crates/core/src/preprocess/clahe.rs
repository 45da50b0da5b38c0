use crate::error::{Error, Result};
use crate::image::Image2D;

const BINS: usize = 256;

/// Contrast limited adaptive histogram equalization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    /// Side of a square tile, pixels.
    pub tile_size: usize,
    /// Per-bin cap as a fraction of the tile's pixel count.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tile_size: 64,
            clip_limit: 0.01,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size < 8 {
            return Err(Error::param("clahe.tile_size", "must be >= 8"));
        }
        if !(self.clip_limit > 0.0 && self.clip_limit <= 1.0) {
            return Err(Error::param("clahe.clip_limit", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[inline]
fn bin_of(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1)
}

/// Tile boundaries along one axis.
fn tile_bounds(extent: usize, tile: usize) -> Vec<(usize, usize)> {
    if tile >= extent {
        return vec![(0, extent)];
    }
    let count = extent.div_ceil(tile);
    (0..count)
        .map(|t| (t * tile, ((t + 1) * tile).min(extent)))
        .collect()
}

/// Lower tile index and blend weight of the upper one for coordinate `v`.
fn interp_index(v: usize, centers: &[f64]) -> (usize, usize, f64) {
    let v = v as f64;
    if centers.len() == 1 || v <= centers[0] {
        return (0, 0, 0.0);
    }
    let last = centers.len() - 1;
    if v >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= v) - 1;
    let t = (v - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

/// Tile-wise equalization with clipped histograms, blended bilinearly
/// between tile centers. Tiles larger than the image fall back to a
/// single global equalization.
pub fn clahe(img: &Image2D, p: &ClaheParams) -> Result<Image2D> {
    p.validate()?;
    let (w, h) = (img.width(), img.height());
    if img.is_empty() {
        return Ok(img.clone());
    }
    let xs = tile_bounds(w, p.tile_size);
    let ys = tile_bounds(h, p.tile_size);

    let mut maps: Vec<[f64; BINS]> = Vec::with_capacity(xs.len() * ys.len());
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut hist = [0.0f64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(img.get(x, y))] += 1.0;
                }
            }
            let total = ((x1 - x0) * (y1 - y0)) as f64;
            let clip = (p.clip_limit * total).max(1.0);
            let mut excess = 0.0;
            for c in hist.iter_mut() {
                if *c > clip {
                    excess += *c - clip;
                    *c = clip;
                }
            }
            let share = excess / BINS as f64;
            let mut map = [0.0f64; BINS];
            let mut acc = 0.0;
            for (m, c) in map.iter_mut().zip(hist.iter()) {
                acc += c + share;
                *m = (acc / total).clamp(0.0, 1.0);
            }
            maps.push(map);
        }
    }

    let cx: Vec<f64> = xs
        .iter()
        .map(|&(a, b)| (a + b) as f64 / 2.0 - 0.5)
        .collect();
    let cy: Vec<f64> = ys
        .iter()
        .map(|&(a, b)| (a + b) as f64 / 2.0 - 0.5)
        .collect();
    let ntx = xs.len();
    let mut out = Image2D::new(w, h);
    for y in 0..h {
        let (ty0, ty1, fy) = interp_index(y, &cy);
        for x in 0..w {
            let (tx0, tx1, fx) = interp_index(x, &cx);
            let b = bin_of(img.get(x, y));
            let m00 = maps[ty0 * ntx + tx0][b];
            let m10 = maps[ty0 * ntx + tx1][b];
            let m01 = maps[ty1 * ntx + tx0][b];
            let m11 = maps[ty1 * ntx + tx1][b];
            let top = m00 + (m10 - m00) * fx;
            let bottom = m01 + (m11 - m01) * fx;
            out.set(x, y, (top + (bottom - top) * fy).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}
