//! Frame-to-frame association through instance-merged attraction basins,
//! tracklet construction and hysteresis filtering.

mod recover;
mod res_track;
mod sequence;

pub use recover::{interpolate_gap, recover_missing};
pub(crate) use res_track::format_records;
pub use res_track::{read_res_track, write_res_track, TrackRecord};
pub use sequence::{track_sequence, TrackFrame};

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::basins::BasinMap;
use crate::error::{Error, Result};
use crate::image::LabelMap;
use crate::segmentation::CellMaskSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    /// Smallest vote fraction that counts as a match.
    pub match_min_fraction: f64,
    /// A recovered mask needs this fraction of its predecessor's contrast.
    pub contrast_accept_ratio: f64,
    /// Hysteresis bounds on mask area, pixels.
    pub lower_area: f64,
    pub upper_area: f64,
    /// Smallest median local contrast of a kept tracklet.
    pub min_contrast: f64,
}

impl TrackParams {
    /// Bounds derived from the basin significance area: a quarter of it
    /// and all of it.
    pub fn for_min_area(min_area: f64) -> Self {
        Self {
            match_min_fraction: 0.2,
            contrast_accept_ratio: 0.5,
            lower_area: min_area / 4.0,
            upper_area: min_area,
            min_contrast: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.match_min_fraction > 0.0 && self.match_min_fraction <= 1.0) {
            return Err(Error::param(
                "track.match_min_fraction",
                "must lie in (0, 1]",
            ));
        }
        if !(self.contrast_accept_ratio >= 0.0) || !self.contrast_accept_ratio.is_finite() {
            return Err(Error::param(
                "track.contrast_accept_ratio",
                "must be finite and >= 0",
            ));
        }
        if !(self.lower_area >= 0.0) || !self.upper_area.is_finite() {
            return Err(Error::param("track.lower_area", "must be finite and >= 0"));
        }
        if self.lower_area > self.upper_area {
            return Err(Error::param(
                "track.upper_area",
                format!("must be >= lower_area ({})", self.lower_area),
            ));
        }
        if !self.min_contrast.is_finite() {
            return Err(Error::param("track.min_contrast", "must be finite"));
        }
        Ok(())
    }
}

impl Default for TrackParams {
    /// Matches the default gravity radius of 20 px.
    fn default() -> Self {
        Self::for_min_area(PI * 10.0 * 10.0)
    }
}

/// Basin map relabelled by cell instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceBasinMap {
    pub labels: LabelMap,
}

/// Replaces each basin label by the cell containing its minimum and
/// stamps every cell's own pixels with its label.
pub fn merge_basins(basins: &BasinMap, cells: &CellMaskSet) -> InstanceBasinMap {
    let (w, h) = (cells.width(), cells.height());
    assert_eq!((basins.width(), basins.height()), (w, h));
    let mut map = vec![0u32; basins.minima.len() + 1];
    for (k, m) in basins.minima.iter().enumerate() {
        let (x, y) = m.to_pixel(w, h);
        map[k + 1] = cells.labels.get(x, y);
    }
    let labels = basins
        .labels
        .labels()
        .iter()
        .zip(cells.labels.labels())
        .map(|(&b, &c)| if c > 0 { c } else { map[b as usize] })
        .collect();
    InstanceBasinMap {
        labels: LabelMap::from_vec(w, h, labels),
    }
}

/// Vote tallies from the cells of one frame into an adjacent frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatching {
    /// `(source cell, target cell, fraction of the source area)`, sorted by
    /// source then target.
    pub entries: Vec<(u32, u32, f64)>,
}

impl FrameMatching {
    /// Target with the largest fraction not below `min_fraction`; ties go
    /// to the lower target label.
    pub fn best(&self, source: u32, min_fraction: f64) -> Option<u32> {
        let start = self.entries.partition_point(|e| e.0 < source);
        self.entries[start..]
            .iter()
            .take_while(|e| e.0 == source)
            .filter(|e| e.2 >= min_fraction)
            .fold(None, |best: Option<(u32, f64)>, e| match best {
                Some((_, f)) if f >= e.2 => best,
                _ => Some((e.1, e.2)),
            })
            .map(|(t, _)| t)
    }

    /// Best target for every source `1..=n`, index `l - 1`.
    pub fn best_all(&self, n: usize, min_fraction: f64) -> Vec<Option<u32>> {
        (1..=n as u32).map(|s| self.best(s, min_fraction)).collect()
    }
}

/// Tallies where the pixels of each mask land in another frame's
/// instance basins. Background votes are not reported.
pub fn associate(masks: &CellMaskSet, target: &InstanceBasinMap) -> FrameMatching {
    assert_eq!(masks.labels.len(), target.labels.len());
    let mut votes: HashMap<(u32, u32), usize> = HashMap::new();
    for (&s, &t) in masks.labels.labels().iter().zip(target.labels.labels()) {
        if s > 0 && t > 0 {
            *votes.entry((s, t)).or_default() += 1;
        }
    }
    let mut entries: Vec<(u32, u32, f64)> = votes
        .into_iter()
        .map(|((s, t), n)| (s, t, n as f64 / masks.stats(s).area as f64))
        .collect();
    entries.sort_by_key(|a| (a.0, a.1));
    FrameMatching { entries }
}

/// One frame of a tracklet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedCell {
    /// Label in that frame's [`CellMaskSet`].
    pub cell: u32,
    pub area: usize,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub label: u32,
    pub begin: usize,
    pub end: usize,
    /// 0 when the tracklet has no parent.
    pub parent: u32,
    /// `cells[i]` lives in frame `begin + i`.
    pub cells: Vec<TrackedCell>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackGraph {
    /// Sorted by label, labels 1..N.
    pub tracklets: Vec<Tracklet>,
}

impl TrackGraph {
    pub fn records(&self) -> Vec<TrackRecord> {
        self.tracklets
            .iter()
            .map(|t| TrackRecord {
                label: t.label,
                begin: t.begin,
                end: t.end,
                parent: t.parent,
            })
            .collect()
    }

    /// Per-frame label maps carrying tracklet labels.
    pub fn render(&self, frames: &[CellMaskSet]) -> Vec<LabelMap> {
        frames
            .iter()
            .enumerate()
            .map(|(t, cells)| {
                let mut to_track = vec![0u32; cells.len() + 1];
                for tr in &self.tracklets {
                    if tr.begin <= t && t <= tr.end {
                        to_track[tr.cells[t - tr.begin].cell as usize] = tr.label;
                    }
                }
                let labels = cells
                    .labels
                    .labels()
                    .iter()
                    .map(|&c| to_track[c as usize])
                    .collect();
                LabelMap::from_vec(cells.width(), cells.height(), labels)
            })
            .collect()
    }

    /// Checks label uniqueness, frame spans and parent timing.
    pub fn check(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::param("track_graph", detail));
        let by_label: HashMap<u32, &Tracklet> =
            self.tracklets.iter().map(|t| (t.label, t)).collect();
        if by_label.len() != self.tracklets.len() || by_label.contains_key(&0) {
            return bad("labels must be unique and positive".into());
        }
        for t in &self.tracklets {
            if t.begin > t.end || t.cells.len() != t.end - t.begin + 1 {
                return bad(format!("tracklet {} has an inconsistent span", t.label));
            }
            if t.parent != 0 {
                match by_label.get(&t.parent) {
                    Some(p) if p.end + 1 == t.begin => {}
                    _ => return bad(format!("tracklet {} has an invalid parent", t.label)),
                }
            }
        }
        Ok(())
    }

    /// Renumbers tracklets 1..N in their current order, remapping parents;
    /// parents that no longer exist become 0.
    fn renumber(&mut self) {
        let mapping: HashMap<u32, u32> = self
            .tracklets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.label, i as u32 + 1))
            .collect();
        for t in &mut self.tracklets {
            t.label = mapping[&t.label];
            t.parent = mapping.get(&t.parent).copied().unwrap_or(0);
        }
    }
}

/// The hysteresis rule: discard when any area is below `lower` or every
/// area is below `upper`.
pub fn hysteresis_keep(areas: &[usize], lower: f64, upper: f64) -> bool {
    let any_below_lower = areas.iter().any(|&a| (a as f64) < lower);
    let all_below_upper = areas.iter().all(|&a| (a as f64) < upper);
    !(any_below_lower || all_below_upper)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Keeps tracklets passing the area hysteresis whose median contrast is at
/// least `min_contrast`. Orphaned children lose their parent, a lone
/// surviving child is joined to its parent, and labels are renumbered in
/// order.
pub fn filter_tracklets(g: &TrackGraph, lower: f64, upper: f64, min_contrast: f64) -> TrackGraph {
    let tracklets = g
        .tracklets
        .iter()
        .filter(|t| {
            let areas: Vec<usize> = t.cells.iter().map(|c| c.area).collect();
            let mut contrast: Vec<f64> = t.cells.iter().map(|c| c.contrast).collect();
            hysteresis_keep(&areas, lower, upper) && median(&mut contrast) >= min_contrast
        })
        .cloned()
        .collect();
    let mut out = TrackGraph { tracklets };
    join_single_children(&mut out.tracklets);
    out.renumber();
    out
}

/// A division left with one branch is a continuation: the child is
/// appended to its parent and its own children are handed over.
fn join_single_children(tracklets: &mut Vec<Tracklet>) {
    loop {
        let labels: HashMap<u32, usize> = tracklets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.label, i))
            .collect();
        let mut kids: HashMap<u32, usize> = HashMap::new();
        for t in tracklets.iter().filter(|t| labels.contains_key(&t.parent)) {
            *kids.entry(t.parent).or_default() += 1;
        }
        let Some(ci) = tracklets
            .iter()
            .position(|t| kids.get(&t.parent) == Some(&1))
        else {
            return;
        };
        let child = tracklets.remove(ci);
        let pi = tracklets
            .iter()
            .position(|t| t.label == child.parent)
            .expect("parent is kept");
        let parent = &mut tracklets[pi];
        parent.end = child.end;
        parent.cells.extend(child.cells);
        let heir = parent.label;
        for t in tracklets.iter_mut().filter(|t| t.parent == child.label) {
            t.parent = heir;
        }
    }
}
