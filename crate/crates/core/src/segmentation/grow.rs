use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::{CellMaskSet, SegParams};
use crate::error::Result;
use crate::image::{neighbors, Image2D, LabelMap, Vec2, N4};

/// Brightest first, then fewest steps from the seed, then lowest pixel
/// index, then lowest label.
#[derive(Debug, Clone, Copy)]
struct Entry {
    value: f64,
    hops: u32,
    idx: usize,
    label: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.hops.cmp(&self.hops))
            .then_with(|| other.idx.cmp(&self.idx))
            .then_with(|| other.label.cmp(&self.label))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Grows one region per seed pixel from a shared max-heap. Returns a
/// label per pixel: `k + 1` for seed `k`, 0 if unclaimed. A seed on a
/// pixel already taken by an earlier seed grows nothing.
pub(crate) fn grow_labels(img: &Image2D, seeds: &[usize], delta: f64) -> Vec<u32> {
    let (w, h) = (img.width(), img.height());
    let data = img.data();
    let mut owner = vec![0u32; w * h];
    let mut sums = vec![(0.0f64, 0usize); seeds.len()];
    let mut walls: HashSet<(usize, u32)> = HashSet::new();
    let mut heap = BinaryHeap::new();
    for (k, &s) in seeds.iter().enumerate() {
        heap.push(Entry {
            value: data[s],
            hops: 0,
            idx: s,
            label: k as u32 + 1,
        });
    }
    while let Some(Entry {
        value,
        hops,
        idx,
        label,
    }) = heap.pop()
    {
        if owner[idx] != 0 || walls.contains(&(idx, label)) {
            continue;
        }
        let sum = &mut sums[label as usize - 1];
        // The seed itself is always admitted.
        if sum.1 > 0 && value < sum.0 / sum.1 as f64 - delta {
            walls.insert((idx, label));
            continue;
        }
        owner[idx] = label;
        sum.0 += value;
        sum.1 += 1;
        for n in neighbors(idx, w, h, &N4) {
            if owner[n] == 0 && !walls.contains(&(n, label)) {
                heap.push(Entry {
                    value: data[n],
                    hops: hops + 1,
                    idx: n,
                    label,
                });
            }
        }
    }
    owner
}

/// Heap-ordered region growing from each seed with first-claim ownership.
pub fn region_grow(enhanced: &Image2D, seeds: &[Vec2], p: &SegParams) -> Result<CellMaskSet> {
    p.validate()?;
    let (w, h) = (enhanced.width(), enhanced.height());
    let px: Vec<usize> = seeds
        .iter()
        .map(|s| {
            let (x, y) = s.to_pixel(w, h);
            y * w + x
        })
        .collect();
    let labels = grow_labels(enhanced, &px, p.contrast_delta);
    Ok(CellMaskSet::from_labels(
        LabelMap::from_vec(w, h, labels),
        enhanced,
    ))
}
