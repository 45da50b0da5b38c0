use std::collections::HashMap;

use rayon::prelude::*;

use super::{
    associate, interpolate_gap, merge_basins, recover_missing, InstanceBasinMap, TrackGraph,
    TrackParams, TrackedCell, Tracklet,
};
use crate::basins::BasinMap;
use crate::error::Result;
use crate::image::{Image2D, Mask};
use crate::segmentation::{CellMaskSet, SegParams};

/// Per-frame inputs to tracking. `cells` gains recovered masks.
#[derive(Debug, Clone)]
pub struct TrackFrame {
    pub cells: CellMaskSet,
    pub basins: BasinMap,
    /// The frame the cells were segmented on, used for recovery.
    pub enhanced: Image2D,
}

fn backward_links(
    cells: &CellMaskSet,
    prev: &InstanceBasinMap,
    p: &TrackParams,
) -> Vec<Option<u32>> {
    associate(cells, prev).best_all(cells.len(), p.match_min_fraction)
}

/// Best target of a single mask under `target`, if any reaches the
/// threshold; ties go to the lower label.
fn best_target(mask: &Mask, target: &InstanceBasinMap, min_fraction: f64) -> Option<u32> {
    let mut votes: HashMap<u32, usize> = HashMap::new();
    for &px in mask.pixels() {
        let l = target.labels.labels()[px];
        if l > 0 {
            *votes.entry(l).or_default() += 1;
        }
    }
    let area = mask.area() as f64;
    votes
        .into_iter()
        .filter(|&(_, n)| n as f64 / area >= min_fraction)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
}

/// Backward, forward and linking passes over a sequence.
///
/// The forward pass fills one-frame gaps between a lost cell and an
/// unclaimed cell two frames later by interpolation, and otherwise tries
/// to re-segment the lost cell on the next frame. The linking pass walks
/// backwards in time; a cell claimed by several successors of at least
/// `p.lower_area` pixels that overlap its mask becomes the parent of
/// their tracklets.
pub fn track_sequence(
    frames: &mut [TrackFrame],
    p: &TrackParams,
    seg: &SegParams,
) -> Result<TrackGraph> {
    p.validate()?;
    let n = frames.len();
    if n == 0 {
        return Ok(TrackGraph::default());
    }
    let mut inst: Vec<InstanceBasinMap> = frames
        .par_iter()
        .map(|f| merge_basins(&f.basins, &f.cells))
        .collect();

    let mut back: Vec<Vec<Option<u32>>> = vec![Vec::new(); n];
    for t in 1..n {
        back[t] = backward_links(&frames[t].cells, &inst[t - 1], p);
    }

    for t in 0..n - 1 {
        let fwd = associate(&frames[t].cells, &inst[t + 1])
            .best_all(frames[t].cells.len(), p.match_min_fraction);
        for c in 1..=frames[t].cells.len() as u32 {
            // Cells too small to survive filtering are not worth chasing.
            if fwd[c as usize - 1].is_some()
                || (frames[t].cells.stats(c).area as f64) < p.lower_area
            {
                continue;
            }
            let prev = frames[t].cells.mask(c);
            let flanked = (t + 2 < n)
                .then(|| best_target(&prev, &inst[t + 2], p.match_min_fraction))
                .flatten()
                .filter(|&d| back[t + 2][d as usize - 1].is_none());
            let candidate = match flanked {
                Some(d) => Some(interpolate_gap(&prev, &frames[t + 2].cells.mask(d))),
                None => recover_missing(
                    &prev,
                    &frames[t + 1].enhanced,
                    frames[t].cells.stats(c).contrast(),
                    seg,
                    p.contrast_accept_ratio,
                )?,
            };
            let Some(mask) = candidate else {
                continue;
            };
            let next = &mut frames[t + 1];
            let Some(label) = next.cells.add_cell(&mask, &next.enhanced) else {
                continue;
            };
            let stamp = inst[t + 1].labels.labels_mut();
            for (px, &l) in next.cells.labels.labels().iter().enumerate() {
                if l == label {
                    stamp[px] = label;
                }
            }
            if t + 2 < n {
                back[t + 2] = backward_links(&frames[t + 2].cells, &inst[t + 1], p);
            }
        }
    }

    let links: Vec<Vec<Option<u32>>> = (0..n)
        .into_par_iter()
        .map(|t| {
            if t == 0 {
                Vec::new()
            } else {
                backward_links(&frames[t].cells, &inst[t - 1], p)
            }
        })
        .collect();
    Ok(build_tracklets(frames, &links, p))
}

struct Building {
    end: usize,
    /// Cell labels from `end` backwards.
    cells: Vec<u32>,
    parent: Option<usize>,
}

fn build_tracklets(
    frames: &[TrackFrame],
    links: &[Vec<Option<u32>>],
    p: &TrackParams,
) -> TrackGraph {
    let n = frames.len();
    let mut tracks: Vec<Building> = Vec::new();
    let mut open: Vec<usize> = (1..=frames[n - 1].cells.len() as u32)
        .map(|c| {
            tracks.push(Building {
                end: n - 1,
                cells: vec![c],
                parent: None,
            });
            tracks.len() - 1
        })
        .collect();
    for t in (1..n).rev() {
        let m = frames[t - 1].cells.len();
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); m];
        for (i, link) in links[t].iter().enumerate() {
            if let Some(p) = link {
                children[*p as usize - 1].push(i as u32 + 1);
            }
        }
        let area = |k: u32| frames[t].cells.stats(k).area;
        let mut next_open = Vec::with_capacity(m);
        for (pi, kids) in children.iter().enumerate() {
            let cell = pi as u32 + 1;
            // Only successors large enough to survive filtering that
            // also grew out of the parent's own mask, not merely its
            // basin, decide between continuation and division.
            let sizable: Vec<u32> = if kids.len() < 2 {
                Vec::new()
            } else {
                let parent = frames[t - 1].cells.mask(cell);
                kids.iter()
                    .copied()
                    .filter(|&k| {
                        let a = area(k) as f64;
                        let m = frames[t].cells.mask(k);
                        a >= p.lower_area
                            && m.intersection_area(&parent) as f64 >= p.match_min_fraction * a
                    })
                    .collect()
            };
            let heir = match (kids.len(), sizable.len()) {
                (1, _) => Some(kids[0]),
                (_, 1) => Some(sizable[0]),
                (0, _) => None,
                (_, 0) => kids
                    .iter()
                    .copied()
                    .max_by(|&a, &b| area(a).cmp(&area(b)).then(b.cmp(&a))),
                _ => None,
            };
            if let Some(k) = heir {
                let tr = open[k as usize - 1];
                tracks[tr].cells.push(cell);
                next_open.push(tr);
                continue;
            }
            tracks.push(Building {
                end: t - 1,
                cells: vec![cell],
                parent: None,
            });
            let id = tracks.len() - 1;
            // Several sizable successors of one cell: a division.
            for &k in &sizable {
                tracks[open[k as usize - 1]].parent = Some(id);
            }
            next_open.push(id);
        }
        open = next_open;
    }

    let mut order: Vec<usize> = (0..tracks.len()).collect();
    let begin = |b: &Building| b.end + 1 - b.cells.len();
    order.sort_by_key(|&i| (begin(&tracks[i]), *tracks[i].cells.last().unwrap()));
    let mut label_of = vec![0u32; tracks.len()];
    for (k, &i) in order.iter().enumerate() {
        label_of[i] = k as u32 + 1;
    }
    let tracklets = order
        .iter()
        .map(|&i| {
            let b = &tracks[i];
            let start = begin(b);
            let cells = b
                .cells
                .iter()
                .rev()
                .enumerate()
                .map(|(k, &cell)| {
                    let s = frames[start + k].cells.stats(cell);
                    TrackedCell {
                        cell,
                        area: s.area,
                        contrast: s.contrast(),
                    }
                })
                .collect();
            Tracklet {
                label: label_of[i],
                begin: start,
                end: b.end,
                parent: b.parent.map_or(0, |p| label_of[p]),
                cells,
            }
        })
        .collect();
    TrackGraph { tracklets }
}
