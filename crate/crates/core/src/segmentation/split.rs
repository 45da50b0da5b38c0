use std::collections::BinaryHeap;

use super::SegParams;
use crate::image::{neighbors, Mask, Vec2, N4};
use crate::morphology::{
    distance_transform, reconstruct_by_dilation, regional_maxima, Connectivity, MaxEntry,
};

/// Splits a mask into pieces around the h-maxima of its distance
/// transform. The pieces partition the input.
pub fn split_mask(mask: &Mask, p: &SegParams) -> Vec<Mask> {
    let Some(bbox) = mask.bbox() else {
        return vec![mask.clone()];
    };
    let (w, h) = (mask.width(), mask.height());
    // One pixel of margin so the window border counts as background.
    let win = bbox.expand(1, w, h);
    let (ww, wh) = (win.width(), win.height());
    let bits = mask.window_bits(&win);
    let dt = distance_transform(&bits, ww, wh);
    let marker: Vec<f64> = dt.iter().map(|&d| d - p.h_maxima_h).collect();
    let rec = reconstruct_by_dilation(&marker, &dt, ww, wh, Connectivity::Eight);
    let plateaus = regional_maxima(&rec, &bits, ww, wh, Connectivity::Eight);

    let centroid = |px: &[usize]| {
        let n = px.len() as f64;
        let (sx, sy) = px.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            (sx + (i % ww) as f64, sy + (i / ww) as f64)
        });
        Vec2::new(sx / n, sy / n)
    };
    let centers: Vec<Vec2> = plateaus.iter().map(|px| centroid(px)).collect();
    let mut group: Vec<usize> = (0..plateaus.len()).collect();
    fn find(g: &mut [usize], mut a: usize) -> usize {
        while g[a] != a {
            g[a] = g[g[a]];
            a = g[a];
        }
        a
    }
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            if centers[a].distance(centers[b]) < p.min_seed_separation {
                let (ra, rb) = (find(&mut group, a), find(&mut group, b));
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                group[hi] = lo;
            }
        }
    }
    let mut seed_label = vec![0u32; plateaus.len()];
    let mut count = 0u32;
    for (k, label) in seed_label.iter_mut().enumerate() {
        if find(&mut group, k) == k {
            count += 1;
            *label = count;
        }
    }
    if count <= 1 {
        return vec![mask.clone()];
    }
    for k in 0..plateaus.len() {
        seed_label[k] = seed_label[find(&mut group, k)];
    }

    // Flood from the seeds in order of decreasing distance, so fronts meet
    // at the narrowest part of the mask.
    let mut labels = vec![0u32; ww * wh];
    let mut heap = BinaryHeap::new();
    for (k, px) in plateaus.iter().enumerate() {
        for &i in px {
            labels[i] = seed_label[k];
            heap.push(MaxEntry {
                value: dt[i],
                idx: i,
            });
        }
    }
    while let Some(MaxEntry { idx, .. }) = heap.pop() {
        for n in neighbors(idx, ww, wh, &N4) {
            if bits[n] && labels[n] == 0 {
                labels[n] = labels[idx];
                heap.push(MaxEntry {
                    value: dt[n],
                    idx: n,
                });
            }
        }
    }
    // Pixels the flood cannot reach (not 4-connected to any seed) join
    // the nearest seed group.
    for i in 0..ww * wh {
        if bits[i] && labels[i] == 0 {
            let here = Vec2::new((i % ww) as f64, (i / ww) as f64);
            let nearest = (0..centers.len())
                .min_by(|&a, &b| {
                    centers[a]
                        .distance(here)
                        .total_cmp(&centers[b].distance(here))
                })
                .expect("at least two seeds");
            labels[i] = seed_label[nearest];
        }
    }
    (1..=count)
        .map(|l| {
            let piece: Vec<bool> = labels.iter().map(|&x| x == l).collect();
            Mask::from_window(w, h, &win, &piece)
        })
        .collect()
}
