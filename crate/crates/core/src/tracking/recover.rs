use crate::error::Result;
use crate::image::{Image2D, Mask, Rect};
use crate::morphology::signed_distance;
use crate::segmentation::{chan_vese_refine, CellStats, SegParams};

pub const MAX_AREA_CHANGE: f64 = 3.0;

/// Re-segments a lost cell on the next frame, starting from its previous
/// mask. The candidate is kept only if its local contrast reaches
/// `accept_ratio * ref_contrast` and its area is within a factor of
/// [`MAX_AREA_CHANGE`] of the previous one.
pub fn recover_missing(
    prev_mask: &Mask,
    frame: &Image2D,
    ref_contrast: f64,
    p: &SegParams,
    accept_ratio: f64,
) -> Result<Option<Mask>> {
    if prev_mask.is_empty() {
        return Ok(None);
    }
    let r = chan_vese_refine(frame, prev_mask, p)?;
    if r.collapsed {
        return Ok(None);
    }
    let ratio = r.mask.area() as f64 / prev_mask.area() as f64;
    if !(1.0 / MAX_AREA_CHANGE..=MAX_AREA_CHANGE).contains(&ratio) {
        return Ok(None);
    }
    let contrast = CellStats::measure(&r.mask, frame).contrast();
    Ok((contrast >= accept_ratio * ref_contrast).then_some(r.mask))
}

fn union_rect(a: &Rect, b: &Rect) -> Rect {
    Rect {
        x0: a.x0.min(b.x0),
        y0: a.y0.min(b.y0),
        x1: a.x1.max(b.x1),
        y1: a.y1.max(b.y1),
    }
}

/// Midway shape between two masks: the zero superlevel set of the mean of
/// their signed distances. Masks whose boxes do not overlap give the
/// smaller mask moved to the mean of the centroids.
pub fn interpolate_gap(before: &Mask, after: &Mask) -> Mask {
    let (w, h) = (before.width(), before.height());
    match (before.bbox(), after.bbox()) {
        (None, None) => Mask::empty(w, h),
        (Some(_), None) => before.clone(),
        (None, Some(_)) => after.clone(),
        (Some(ba), Some(bb)) if !ba.intersects(&bb) => {
            let small = if after.area() < before.area() {
                after
            } else {
                before
            };
            let mid = (before.centroid().unwrap() + after.centroid().unwrap()) * 0.5;
            let c = small.centroid().unwrap();
            let (dx, dy) = (
                (mid.x - c.x).round() as isize,
                (mid.y - c.y).round() as isize,
            );
            let moved = small
                .pixels()
                .iter()
                .filter_map(|&p| {
                    let x = (p % w) as isize + dx;
                    let y = (p / w) as isize + dy;
                    (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
                        .then(|| y as usize * w + x as usize)
                })
                .collect();
            Mask::from_indices(w, h, moved)
        }
        (Some(ba), Some(bb)) => {
            let win = union_rect(&ba, &bb).expand(1, w, h);
            let (ww, wh) = (win.width(), win.height());
            let d1 = signed_distance(&before.window_bits(&win), ww, wh);
            let d2 = signed_distance(&after.window_bits(&win), ww, wh);
            let bits: Vec<bool> = d1.iter().zip(&d2).map(|(a, b)| a + b >= 0.0).collect();
            Mask::from_window(w, h, &win, &bits)
        }
    }
}
