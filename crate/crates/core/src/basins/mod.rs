//! Critical points, separatrices and basins of attraction of a force field.
//!
//! Basins are built by walling off separatrices traced from saddles and
//! flood filling the remaining regions; regions that do not hold exactly
//! one minimum are resolved pixel by pixel with streamline descent.

mod critical;
mod integrator;
mod oracle;
mod separatrix;

pub use critical::{
    classify, find_critical_points, search_critical_points, CriticalKind, CriticalPoint,
    CriticalSearch, Jacobian,
};
pub use integrator::{
    adapt_step, follow, integrate_fixed, integrate_step, Direction, IntegratorConfig,
    IntegratorTableau, Termination, Trajectory, EULER_HEUN_3,
};
pub use oracle::drop_of_water_oracle;
pub use separatrix::{trace_separatrix, Separatrix, SeparatrixBranch, SEPARATRIX_OFFSET};

use std::collections::HashMap;

use rayon::prelude::*;

use crate::gravity::ForceField2D;
use crate::image::{LabelMap, Vec2};
use crate::morphology::{connected_components, Connectivity};
use separatrix::raster_line;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BasinDiagnostics {
    /// The critical point list held no minimum.
    pub no_minima: bool,
    pub saddles: usize,
    pub truncated_separatrices: usize,
    /// Pixels resolved by per-pixel descent rather than flood fill.
    pub descended_pixels: usize,
    pub unassigned: usize,
}

/// Label `k > 0` marks the basin of `minima[k - 1]`; 0 is unassigned.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinMap {
    pub labels: LabelMap,
    pub minima: Vec<Vec2>,
    pub diagnostics: BasinDiagnostics,
}

impl BasinMap {
    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    /// Position of the minimum owning `label`.
    pub fn minimum(&self, label: u32) -> Option<Vec2> {
        label
            .checked_sub(1)
            .and_then(|i| self.minima.get(i as usize))
            .copied()
    }
}

/// Distance to a minimum at which descent is considered converged.
const CAPTURE_RADIUS: f64 = 0.5;
/// Descent passing this close to an interior saddle rides a separatrix
/// and belongs to no basin.
const SADDLE_RADIUS: f64 = 0.25;
/// Border pixels start this far inside the image so that descent does not
/// ride the border line, which is invariant under reflect padding.
const BORDER_NUDGE: f64 = 1e-3;

/// Unit-cell grid of points for capture-radius queries.
struct PointIndex {
    origin: (i64, i64),
    cols: i64,
    rows: i64,
    /// Cell `c` holds `ids[starts[c]..starts[c + 1]]`.
    starts: Vec<usize>,
    ids: Vec<usize>,
    points: Vec<Vec2>,
}

impl PointIndex {
    fn new(points: Vec<Vec2>) -> Self {
        let keys: Vec<(i64, i64)> = points.iter().map(|&p| Self::key(p)).collect();
        let (mut x0, mut y0, mut x1, mut y1) = (0, 0, -1, -1);
        if let Some(&(x, y)) = keys.first() {
            (x0, y0, x1, y1) = (x, y, x, y);
        }
        for &(x, y) in &keys {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (cols, rows) = (x1 - x0 + 1, y1 - y0 + 1);
        let cell = |(x, y): (i64, i64)| ((y - y0) * cols + (x - x0)) as usize;
        let mut starts = vec![0usize; (cols * rows) as usize + 1];
        for &k in &keys {
            starts[cell(k) + 1] += 1;
        }
        for c in 1..starts.len() {
            starts[c] += starts[c - 1];
        }
        let mut fill = starts.clone();
        let mut ids = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            ids[fill[cell(k)]] = i;
            fill[cell(k)] += 1;
        }
        Self {
            origin: (x0, y0),
            cols,
            rows,
            starts,
            ids,
            points,
        }
    }

    fn key(p: Vec2) -> (i64, i64) {
        (p.x.floor() as i64, p.y.floor() as i64)
    }

    /// Lowest-index point within `radius` (at most one pixel).
    fn capture(&self, p: Vec2, radius: f64) -> Option<usize> {
        let lo = Self::key(Vec2::new(p.x - radius, p.y - radius));
        let hi = Self::key(Vec2::new(p.x + radius, p.y + radius));
        let mut hit: Option<usize> = None;
        for by in (lo.1 - self.origin.1).max(0)..=(hi.1 - self.origin.1).min(self.rows - 1) {
            for bx in (lo.0 - self.origin.0).max(0)..=(hi.0 - self.origin.0).min(self.cols - 1) {
                let c = (by * self.cols + bx) as usize;
                for &i in &self.ids[self.starts[c]..self.starts[c + 1]] {
                    if self.points[i].distance(p) <= radius {
                        hit = Some(hit.map_or(i, |h| h.min(i)));
                    }
                }
            }
        }
        hit
    }
}

/// Start of the descent from pixel `(x, y)`, moved off the image edge.
fn descent_start(x: usize, y: usize, w: usize, h: usize) -> Vec2 {
    let nudge = |v: usize, n: usize| {
        let max = (n - 1) as f64;
        let v = v as f64;
        if max == 0.0 {
            v
        } else if v <= 0.0 {
            BORDER_NUDGE
        } else if v >= max {
            max - BORDER_NUDGE
        } else {
            v
        }
    };
    Vec2::new(nudge(x, w), nudge(y, h))
}

/// Assigns every pixel the label of the minimum its descent streamline
/// converges to. Minima are labeled 1..K in the order they appear in `cps`.
pub fn extract_basins(f: &ForceField2D, cps: &[CriticalPoint], cfg: &IntegratorConfig) -> BasinMap {
    let (w, h) = (f.width(), f.height());
    let n = w * h;
    let minima: Vec<Vec2> = cps
        .iter()
        .filter(|c| c.kind.is_attractor())
        .map(|c| c.pos)
        .collect();
    let mut diagnostics = BasinDiagnostics::default();
    if minima.is_empty() || n == 0 {
        diagnostics.no_minima = minima.is_empty();
        diagnostics.unassigned = n;
        return BasinMap {
            labels: LabelMap::new(w, h),
            minima,
            diagnostics,
        };
    }

    // Walls along separatrices.
    let saddles: Vec<&CriticalPoint> = cps
        .iter()
        .filter(|c| c.kind == CriticalKind::Saddle)
        .collect();
    diagnostics.saddles = saddles.len();
    let traced: Vec<Separatrix> = saddles
        .par_iter()
        .filter_map(|s| trace_separatrix(s, f, cfg).ok())
        .collect();
    let mut wall = vec![false; n];
    for sep in &traced {
        for branch in &sep.branches {
            if branch.truncated {
                diagnostics.truncated_separatrices += 1;
            }
            for seg in branch.points.windows(2) {
                raster_line(seg[0].to_pixel(w, h), seg[1].to_pixel(w, h), |x, y| {
                    wall[y * w + x] = true
                });
            }
        }
    }

    // Regions holding exactly one minimum are its basin.
    let open: Vec<bool> = wall.iter().map(|&b| !b).collect();
    let (region, count) = connected_components(&open, w, h, Connectivity::Four);
    let mut owners: Vec<(u32, u32)> = vec![(0, 0); count as usize + 1];
    for (k, m) in minima.iter().enumerate() {
        let (x, y) = m.to_pixel(w, h);
        let r = region[y * w + x] as usize;
        if r > 0 {
            owners[r].0 += 1;
            owners[r].1 = k as u32 + 1;
        }
    }
    let mut labels = vec![0u32; n];
    let mut resolved = vec![false; n];
    for i in 0..n {
        let r = region[i] as usize;
        if r > 0 && owners[r].0 == 1 {
            labels[i] = owners[r].1;
            resolved[i] = true;
        }
    }

    // Everything else follows its streamline.
    let index = PointIndex::new(minima.clone());
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    // Saddles on the image edge come from the reflected copy of the
    // image; streamlines near them still drain inward.
    let interior_saddles = PointIndex::new(
        saddles
            .iter()
            .map(|s| s.pos)
            .filter(|p| p.x > 1e-6 && p.y > 1e-6 && p.x < max_x - 1e-6 && p.y < max_y - 1e-6)
            .collect(),
    );
    for start in 0..n {
        if resolved[start] {
            continue;
        }
        diagnostics.descended_pixels += 1;
        let p0 = descent_start(start % w, start / w, w, h);
        if index.capture(p0, CAPTURE_RADIUS).is_none()
            && interior_saddles.capture(p0, SADDLE_RADIUS).is_some()
        {
            labels[start] = 0;
            resolved[start] = true;
            continue;
        }
        let mut outcome: Option<u32> = None;
        let trajectory = follow(f, p0, Direction::Descent, cfg, true, |p| {
            if let Some(k) = index.capture(p, CAPTURE_RADIUS) {
                outcome = Some(k as u32 + 1);
                return true;
            }
            if interior_saddles.capture(p, SADDLE_RADIUS).is_some() {
                outcome = Some(0);
                return true;
            }
            let (x, y) = p.to_pixel(w, h);
            let i = y * w + x;
            if i != start && resolved[i] {
                outcome = Some(labels[i]);
                return true;
            }
            false
        });
        let label = match outcome {
            Some(l) => l,
            None => {
                let (x, y) = trajectory.end().to_pixel(w, h);
                let i = y * w + x;
                if resolved[i] {
                    labels[i]
                } else {
                    0
                }
            }
        };
        labels[start] = label;
        resolved[start] = true;
        // Pixels along the walked path drain to the same place.
        if label > 0 {
            for p in &trajectory.points[1..] {
                let (x, y) = p.to_pixel(w, h);
                let i = y * w + x;
                if !resolved[i] {
                    labels[i] = label;
                    resolved[i] = true;
                }
            }
        }
    }

    diagnostics.unassigned = labels.iter().filter(|&&l| l == 0).count();
    BasinMap {
        labels: LabelMap::from_vec(w, h, labels),
        minima,
        diagnostics,
    }
}

/// Labels whose basin holds at least `min_area` pixels, ascending.
pub fn significant_minima(basins: &BasinMap, min_area: f64) -> Vec<u32> {
    let areas = basins.labels.areas();
    (1..=basins.minima.len() as u32)
        .filter(|&l| areas.get(l as usize).copied().unwrap_or(0) as f64 >= min_area)
        .collect()
}

/// Fraction of pixels on which two labelings agree after matching labels
/// one-to-one by largest overlap, ignoring pixels of `reference` that
/// touch (8-neighbourhood) a different `reference` label.
pub fn basin_agreement(candidate: &LabelMap, reference: &LabelMap) -> f64 {
    let (w, h) = (reference.width(), reference.height());
    assert_eq!((w, h), (candidate.width(), candidate.height()));
    let r = reference.labels();
    let c = candidate.labels();
    let interior: Vec<usize> = (0..w * h)
        .filter(|&i| crate::image::neighbors(i, w, h, &crate::image::N8).all(|j| r[j] == r[i]))
        .collect();
    if interior.is_empty() {
        return 1.0;
    }
    let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
    for &i in &interior {
        *overlap.entry((c[i], r[i])).or_default() += 1;
    }
    let mut pairs: Vec<((u32, u32), usize)> = overlap.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mapping: HashMap<u32, u32> = HashMap::from([(0, 0)]);
    let mut taken: std::collections::HashSet<u32> = std::collections::HashSet::from([0]);
    for ((cl, rl), _) in pairs {
        if cl == 0 || rl == 0 || mapping.contains_key(&cl) || taken.contains(&rl) {
            continue;
        }
        mapping.insert(cl, rl);
        taken.insert(rl);
    }
    let agree = interior
        .iter()
        .filter(|&&i| mapping.get(&c[i]) == Some(&r[i]))
        .count();
    agree as f64 / interior.len() as f64
}


#[cfg(test)]
mod tests {
    use super::testutil::blob_image;
    use super::*;
    use crate::gravity::{build_kernels, force_field};
    use crate::image::Image2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basins_of(img: &Image2D, radius: usize) -> (ForceField2D, BasinMap) {
        let f = force_field(img, &build_kernels(radius, 0.5).unwrap()).unwrap();
        let cps = find_critical_points(&f);
        let b = extract_basins(&f, &cps, &IntegratorConfig::default());
        (f, b)
    }

    fn random_two_blob(rng: &mut ChaCha8Rng) -> Image2D {
        loop {
            let a = (rng.random_range(12.0..52.0), rng.random_range(12.0..52.0));
            let b = (rng.random_range(12.0..52.0), rng.random_range(12.0..52.0));
            let d = f64::hypot(a.0 - b.0, a.1 - b.1);
            if d < 14.0 {
                continue;
            }
            let (sa, sb) = (rng.random_range(2.5..4.0), rng.random_range(2.5..4.0));
            let (ma, mb) = (rng.random_range(0.6..1.0), rng.random_range(0.6..1.0));
            return Image2D::from_fn(64, 64, |x, y| {
                let g = |c: (f64, f64), s: f64| {
                    let d2 = (x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2);
                    (-d2 / (2.0 * s * s)).exp()
                };
                0.05 + ma * g(a, sa) + mb * g(b, sb)
            });
        }
    }

    #[test]
    fn single_blob_single_basin() {
        let img = blob_image(32, 32, &[(16.0, 16.0)], 3.0);
        let (f, b) = basins_of(&img, 10);
        assert_eq!(b.minima.len(), 1);
        for y in 0..32 {
            for x in 0..32 {
                if f.get(x, y).norm() > 1e-6 {
                    assert_eq!(b.labels.get(x, y), 1, "({x}, {y})");
                }
            }
        }
        let oracle = drop_of_water_oracle(&f);
        let same = b
            .labels
            .labels()
            .iter()
            .zip(oracle.labels.labels())
            .filter(|(a, o)| a == o)
            .count();
        assert!(same as f64 >= 0.99 * 1024.0, "{same}");
    }

    #[test]
    fn two_equal_blobs_split_evenly() {
        // Mirror-symmetric about x = 16.
        let img = blob_image(33, 33, &[(10.0, 16.0), (22.0, 16.0)], 2.5);
        let (f, b) = basins_of(&img, 10);
        assert_eq!(b.minima.len(), 2);
        let areas = b.labels.areas();
        assert_eq!(areas.len(), 3);
        let (a1, a2) = (areas[1] as f64, areas[2] as f64);
        assert!((a1 - a2).abs() / a1.max(a2) <= 0.02, "{a1} {a2}");
        let oracle = drop_of_water_oracle(&f);
        assert!(basin_agreement(&b.labels, &oracle.labels) >= 0.95);
        assert_eq!(b.labels.max_label() as usize, b.minima.len());
    }

    #[test]
    fn no_minima_gives_empty_map() {
        let f = ForceField2D::from_fn(10, 10, |_, _| Vec2::new(1.0, 0.0));
        let b = extract_basins(&f, &[], &IntegratorConfig::default());
        assert!(b.diagnostics.no_minima);
        assert!(b.labels.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn oracle_agreement_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let img = random_two_blob(&mut rng);
            let (f, b) = basins_of(&img, 12);
            let oracle = drop_of_water_oracle(&f);
            let agree = basin_agreement(&b.labels, &oracle.labels);
            assert!(agree >= 0.95, "trial {trial}: {agree}");
        }
    }

    #[test]
    fn descent_reaches_oracle_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_two_blob(&mut rng);
        let f = force_field(&img, &build_kernels(12, 0.5).unwrap()).unwrap();
        let cps = find_critical_points(&f);
        let minima: Vec<Vec2> = cps
            .iter()
            .filter(|c| c.kind.is_attractor())
            .map(|c| c.pos)
            .collect();
        let oracle = drop_of_water_oracle(&f);
        let cfg = IntegratorConfig::default();
        let mut tested = 0;
        while tested < 100 {
            let (x, y) = (rng.random_range(0..64usize), rng.random_range(0..64usize));
            let l = oracle.labels.get(x, y);
            let interior = (x.saturating_sub(1)..=(x + 1).min(63)).all(|nx| {
                (y.saturating_sub(1)..=(y + 1).min(63)).all(|ny| oracle.labels.get(nx, ny) == l)
            });
            if l == 0 || !interior {
                continue;
            }
            let terminus = oracle.minimum(l).unwrap();
            // The critical minimum lying in this oracle basin.
            let target = minima
                .iter()
                .copied()
                .min_by(|a, b| a.distance(terminus).total_cmp(&b.distance(terminus)))
                .unwrap();
            if target.distance(terminus) > 1.5 {
                continue;
            }
            let t = follow(
                &f,
                descent_start(x, y, 64, 64),
                Direction::Descent,
                &cfg,
                false,
                |p| p.distance(target) < 0.5,
            );
            assert!(t.end().distance(target) <= 1.0, "from ({x}, {y}): {:?}", t);
            tested += 1;
        }
    }

    #[test]
    fn order_of_accuracy() {
        let f = |y: Vec2| -y;
        let exact = (-1.0f64).exp();
        let mut pts_high = Vec::new();
        let mut pts_low = Vec::new();
        for steps in [10usize, 20, 40, 80, 160] {
            let (hi, lo) = integrate_fixed(f, Vec2::new(1.0, 0.0), 1.0, steps);
            let h = 1.0 / steps as f64;
            pts_high.push((h.ln(), (hi.x - exact).abs().ln()));
            pts_low.push((h.ln(), (lo.x - exact).abs().ln()));
        }
        let slope = |pts: &[(f64, f64)]| {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            num / den
        };
        assert!((slope(&pts_high) - 3.0).abs() <= 0.3);
        assert!((slope(&pts_low) - 2.0).abs() <= 0.3);
    }

    #[test]
    fn significant_minima_threshold() {
        let mut labels = vec![1u32; 500];
        labels.extend(std::iter::repeat_n(2u32, 30));
        labels.extend(std::iter::repeat_n(0u32, 10));
        let b = BasinMap {
            labels: LabelMap::from_vec(540, 1, labels),
            minima: vec![Vec2::ZERO, Vec2::ZERO],
            diagnostics: BasinDiagnostics::default(),
        };
        assert_eq!(significant_minima(&b, 100.0), vec![1]);
        assert_eq!(significant_minima(&b, 0.0), vec![1, 2]);
        assert!(significant_minima(&b, 1e6).is_empty());
    }

    #[test]
    fn extraction_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_two_blob(&mut rng);
        let (_, a) = basins_of(&img, 12);
        let (_, b) = basins_of(&img, 12);
        assert_eq!(a, b);
    }
}
