//! Detection and tracking scores of predicted masks and tracks against
//! ground truth.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{LabelMap, Mask};
use crate::io::load_label_map;
use crate::pipeline::{read_report, StageTimings, REPORT_FILE, TRACK_FILE};
use crate::synth::GT_TRACK_FILE;
use crate::tracking::{read_res_track, TrackRecord};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1.0 when nothing was predicted; see `no_predictions`.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub no_predictions: bool,
    pub gt_tracks: usize,
    /// Fraction of ground-truth tracks matched in every frame to one and
    /// the same predicted tracklet.
    pub track_purity: f64,
    pub id_switches: usize,
    pub mitoses_expected: usize,
    pub mitoses_detected: usize,
    /// Parents with exactly two children in the predicted track file.
    pub predicted_divisions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl EvalReport {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report always serializes")
    }
}

/// `(parent, child, child)` for every parent with exactly two children.
pub fn division_triples(records: &[TrackRecord]) -> Vec<(u32, u32, u32)> {
    let mut kids: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.parent != 0) {
        kids.entry(r.parent).or_default().push(r.label);
    }
    kids.into_iter()
        .filter(|(_, c)| c.len() == 2)
        .map(|(p, mut c)| {
            c.sort_unstable();
            (p, c[0], c[1])
        })
        .collect()
}

fn masks_by_label(m: &LabelMap) -> BTreeMap<u32, Mask> {
    let mut px: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in m.labels().iter().enumerate() {
        if l > 0 {
            px.entry(l).or_default().push(i);
        }
    }
    px.into_iter()
        .map(|(l, p)| (l, Mask::from_indices(m.width(), m.height(), p)))
        .collect()
}

/// One-to-one `(gt, pred)` pairs of one frame: each centroid must lie in
/// the other mask; conflicts go to the higher IoU.
pub fn match_frame(pred: &LabelMap, gt: &LabelMap) -> Result<Vec<(u32, u32)>> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::Dimensions {
            expected_width: gt.width(),
            expected_height: gt.height(),
            width: pred.width(),
            height: pred.height(),
        });
    }
    let (w, h) = (gt.width(), gt.height());
    let pm = masks_by_label(pred);
    let gm = masks_by_label(gt);
    let label_at = |m: &LabelMap, mask: &Mask| {
        let (x, y) = mask.centroid().expect("non-empty").to_pixel(w, h);
        m.get(x, y)
    };
    let mut cands: Vec<(f64, u32, u32)> = Vec::new();
    for (&p, pmask) in &pm {
        let g = label_at(gt, pmask);
        if g == 0 || label_at(pred, &gm[&g]) != p {
            continue;
        }
        cands.push((pmask.iou(&gm[&g]), g, p));
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_g, mut used_p) = (Vec::new(), Vec::new());
    let mut out = Vec::new();
    for (_, g, p) in cands {
        if !used_g.contains(&g) && !used_p.contains(&p) {
            used_g.push(g);
            used_p.push(p);
            out.push((g, p));
        }
    }
    out.sort_unstable();
    Ok(out)
}

pub fn evaluate(
    pred_masks: &[LabelMap],
    pred_tracks: &[TrackRecord],
    gt_masks: &[LabelMap],
    gt_tracks: &[TrackRecord],
) -> Result<EvalReport> {
    if pred_masks.len() != gt_masks.len() {
        return Err(Error::FrameCountMismatch {
            predicted: pred_masks.len(),
            truth: gt_masks.len(),
        });
    }
    let mut r = EvalReport {
        frames: gt_masks.len(),
        ..EvalReport::default()
    };
    // matched[t]: gt label -> pred label
    let mut matched: Vec<HashMap<u32, u32>> = Vec::with_capacity(gt_masks.len());
    let mut n_pred = 0;
    let mut n_gt = 0;
    for (p, g) in pred_masks.iter().zip(gt_masks) {
        let pairs = match_frame(p, g)?;
        n_pred += p.distinct_labels().len();
        n_gt += g.distinct_labels().len();
        r.true_positives += pairs.len();
        matched.push(pairs.into_iter().collect());
    }
    r.false_positives = n_pred - r.true_positives;
    r.false_negatives = n_gt - r.true_positives;
    r.no_predictions = n_pred == 0;
    r.precision = if n_pred == 0 {
        1.0
    } else {
        r.true_positives as f64 / n_pred as f64
    };
    r.recall = if n_gt == 0 {
        1.0
    } else {
        r.true_positives as f64 / n_gt as f64
    };
    r.f1 = if r.precision + r.recall > 0.0 {
        2.0 * r.precision * r.recall / (r.precision + r.recall)
    } else {
        0.0
    };

    let present: Vec<Vec<u32>> = gt_masks.iter().map(|m| m.distinct_labels()).collect();
    let mut pure = 0;
    // GT track -> every pred tracklet it was matched to
    let mut followed: HashMap<u32, Vec<u32>> = HashMap::new();
    for g in gt_tracks {
        let mut seq = Vec::new();
        let mut complete = true;
        for t in g.begin..=g.end.min(r.frames.saturating_sub(1)) {
            if present[t].binary_search(&g.label).is_err() {
                continue;
            }
            match matched[t].get(&g.label) {
                Some(&p) => seq.push(p),
                None => complete = false,
            }
        }
        r.id_switches += seq.windows(2).filter(|w| w[0] != w[1]).count();
        if complete && !seq.is_empty() && seq.iter().all(|&p| p == seq[0]) {
            pure += 1;
        }
        followed.insert(g.label, seq);
    }
    r.gt_tracks = gt_tracks.len();
    r.track_purity = if gt_tracks.is_empty() {
        1.0
    } else {
        pure as f64 / gt_tracks.len() as f64
    };

    let pred_parent: HashMap<u32, u32> = pred_tracks.iter().map(|t| (t.label, t.parent)).collect();
    let gt_divisions = division_triples(gt_tracks);
    r.mitoses_expected = gt_divisions.len();
    r.predicted_divisions = division_triples(pred_tracks).len();
    r.mitoses_detected = gt_divisions
        .iter()
        .filter(|(gp, c1, c2)| {
            let parents = &followed[gp];
            [c1, c2].iter().any(|c| {
                followed[c].iter().any(|pc| {
                    pred_parent
                        .get(pc)
                        .is_some_and(|pp| *pp != 0 && parents.contains(pp))
                })
            })
        })
        .count();
    Ok(r)
}

/// Label maps `<prefix>NNN.tif` of a directory, ordered by number.
pub fn load_label_sequence(dir: &Path, prefix: &str) -> Result<Vec<LabelMap>> {
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let Some(rest) = name.strip_prefix(prefix) else {
            continue;
        };
        let Some(num) = rest
            .strip_suffix(".tif")
            .or_else(|| rest.strip_suffix(".tiff"))
        else {
            continue;
        };
        if let Ok(n) = num.parse::<u64>() {
            files.push((n, path));
        }
    }
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    files.sort();
    files.iter().map(|(_, p)| load_label_map(p)).collect()
}

fn track_file(dir: &Path) -> PathBuf {
    let own = dir.join(GT_TRACK_FILE);
    if own.is_file() {
        own
    } else {
        dir.join(TRACK_FILE)
    }
}

/// Compares a pipeline output directory with a ground-truth directory as
/// written by the synthetic generator. Timings come from the run report
/// when one is present.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    let pred = load_label_sequence(pred_dir, "mask")?;
    let gt = load_label_sequence(gt_dir, "man_track")?;
    let pt = read_res_track(&track_file(pred_dir))?;
    let gtt = read_res_track(&track_file(gt_dir))?;
    let mut r = evaluate(&pred, &pt, &gt, &gtt)?;
    let report = pred_dir.join(REPORT_FILE);
    if report.is_file() {
        r.timings = Some(read_report(&report)?.timings);
    }
    Ok(r)
}
