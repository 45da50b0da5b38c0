//! Grayscale reconstruction, Euclidean distance transforms and connected
//! components on row-major rasters.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::image::{neighbors, N4, N8};

/// Pixel connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &N4,
            Connectivity::Eight => &N8,
        }
    }
}

/// Max-heap entry; equal values pop in ascending pixel index order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MaxEntry {
    pub value: f64,
    pub idx: usize,
}

impl PartialEq for MaxEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for MaxEntry {}

impl Ord for MaxEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for MaxEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grayscale reconstruction by dilation of `marker` under `mask`.
///
/// `marker` is clipped to `mask` first; the result is the fixpoint of
/// geodesic dilation, computed with a priority queue.
pub fn reconstruct_by_dilation(
    marker: &[f64],
    mask: &[f64],
    width: usize,
    height: usize,
    conn: Connectivity,
) -> Vec<f64> {
    assert_eq!(marker.len(), width * height);
    assert_eq!(mask.len(), width * height);
    let mut out: Vec<f64> = marker.iter().zip(mask).map(|(&m, &k)| m.min(k)).collect();
    let mut heap: BinaryHeap<MaxEntry> = out
        .iter()
        .enumerate()
        .map(|(idx, &value)| MaxEntry { value, idx })
        .collect();
    while let Some(MaxEntry { value, idx }) = heap.pop() {
        if value < out[idx] {
            continue;
        }
        for n in neighbors(idx, width, height, conn.offsets()) {
            let candidate = value.min(mask[n]);
            if candidate > out[n] {
                out[n] = candidate;
                heap.push(MaxEntry {
                    value: candidate,
                    idx: n,
                });
            }
        }
    }
    out
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    // Skip leading infinite samples: they never contribute a parabola.
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `source` is true. Infinite when there is no source pixel.
pub fn squared_distance_to(source: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(source.len(), width * height);
    let mut grid: Vec<f64> = source
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

/// Euclidean distance from each mask pixel to the nearest non-mask pixel;
/// zero outside the mask. Pixels beyond the raster do not count as
/// background.
pub fn distance_transform(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let background: Vec<bool> = mask.iter().map(|&m| !m).collect();
    squared_distance_to(&background, width, height)
        .into_iter()
        .zip(mask)
        .map(|(d2, &m)| if m { d2.sqrt() } else { 0.0 })
        .collect()
}

/// Signed distance, positive inside: `d_out - 0.5` inside and
/// `-(d_in - 0.5)` outside, so the zero level runs along pixel edges.
pub fn signed_distance(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let background: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let to_bg = squared_distance_to(&background, width, height);
    let to_fg = squared_distance_to(mask, width, height);
    mask.iter()
        .zip(to_bg.iter().zip(&to_fg))
        .map(|(&m, (&dbg, &dfg))| {
            if m {
                // A full mask has no background; treat distance as large.
                if dbg.is_finite() {
                    dbg.sqrt() - 0.5
                } else {
                    (width + height) as f64
                }
            } else if dfg.is_finite() {
                -(dfg.sqrt() - 0.5)
            } else {
                -((width + height) as f64)
            }
        })
        .collect()
}

/// Dilation of a binary mask by a Euclidean disk of the given radius.
pub fn dilate_disk(mask: &[bool], width: usize, height: usize, radius: f64) -> Vec<bool> {
    let r2 = radius * radius;
    squared_distance_to(mask, width, height)
        .into_iter()
        .map(|d2| d2 <= r2 + 1e-9)
        .collect()
}

/// Labels connected components of `mask` as 1..K in raster order.
/// Returns the label raster and K.
pub fn connected_components(
    mask: &[bool],
    width: usize,
    height: usize,
    conn: Connectivity,
) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for n in neighbors(p, width, height, conn.offsets()) {
                if mask[n] && labels[n] == 0 {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    (labels, next)
}

/// Connected plateaus of equal value whose outer neighbours are all
/// strictly lower, restricted to pixels where `domain` is true.
pub fn regional_maxima(
    values: &[f64],
    domain: &[bool],
    width: usize,
    height: usize,
    conn: Connectivity,
) -> Vec<Vec<usize>> {
    let mut visited = vec![false; values.len()];
    let mut maxima = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..values.len() {
        if !domain[start] || visited[start] {
            continue;
        }
        let level = values[start];
        let mut plateau = Vec::new();
        let mut is_max = true;
        visited[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            plateau.push(p);
            for n in neighbors(p, width, height, conn.offsets()) {
                if !domain[n] {
                    continue;
                }
                if values[n] > level {
                    is_max = false;
                } else if values[n] == level && !visited[n] {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if is_max {
            maxima.push(plateau);
        }
    }
    maxima
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_sq_distance(source: &[bool], w: usize, h: usize) -> Vec<f64> {
        let pts: Vec<(usize, usize)> = (0..w * h)
            .filter(|&i| source[i])
            .map(|i| (i % w, i / w))
            .collect();
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                pts.iter()
                    .map(|&(px, py)| {
                        let dx = px as f64 - x as f64;
                        let dy = py as f64 - y as f64;
                        dx * dx + dy * dy
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn brute_reconstruct(marker: &[f64], mask: &[f64], w: usize, h: usize) -> Vec<f64> {
        let mut cur: Vec<f64> = marker.iter().zip(mask).map(|(a, b)| a.min(*b)).collect();
        loop {
            let mut next = cur.clone();
            for i in 0..w * h {
                let mut m = cur[i];
                for n in neighbors(i, w, h, &N4) {
                    m = m.max(cur[n]);
                }
                next[i] = m.min(mask[i]);
            }
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    proptest! {
        #[test]
        fn edt_matches_brute_force(
            (w, h, bits) in (1usize..12, 1usize..12)
                .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(proptest::bool::weighted(0.2), w * h)))
        ) {
            let fast = squared_distance_to(&bits, w, h);
            let slow = brute_sq_distance(&bits, w, h);
            for (a, b) in fast.iter().zip(&slow) {
                if b.is_infinite() {
                    prop_assert!(a.is_infinite());
                } else {
                    prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
                }
            }
        }

        #[test]
        fn reconstruction_matches_iterated_dilation(
            (w, h, mask, marker) in (2usize..9, 2usize..9).prop_flat_map(|(w, h)| (
                Just(w), Just(h),
                proptest::collection::vec(0.0f64..1.0, w * h),
                proptest::collection::vec(0.0f64..1.0, w * h),
            ))
        ) {
            let fast = reconstruct_by_dilation(&marker, &mask, w, h, Connectivity::Four);
            let slow = brute_reconstruct(&marker, &mask, w, h);
            prop_assert_eq!(fast, slow);
        }
    }

    #[test]
    fn components_count() {
        #[rustfmt::skip]
        let m = [
            true, false, true,
            false, true, false,
            true, false, true,
        ];
        assert_eq!(connected_components(&m, 3, 3, Connectivity::Four).1, 5);
        assert_eq!(connected_components(&m, 3, 3, Connectivity::Eight).1, 1);
    }

    #[test]
    fn regional_maxima_plateau() {
        let v = [0.0, 2.0, 2.0, 0.0, 1.0, 0.0];
        let dom = [true; 6];
        let maxima = regional_maxima(&v, &dom, 6, 1, Connectivity::Four);
        assert_eq!(maxima, vec![vec![1, 2], vec![4]]);
    }

    #[test]
    fn signed_distance_sign_convention() {
        let mask = [false, true, true, true, false];
        let sd = signed_distance(&mask, 5, 1);
        assert_eq!(sd, vec![-0.5, 0.5, 1.5, 0.5, -0.5]);
    }
}
