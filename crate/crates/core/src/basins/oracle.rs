use super::{BasinDiagnostics, BasinMap};
use crate::gravity::ForceField2D;
use crate::image::{LabelMap, Vec2, N8};
use crate::morphology::{connected_components, Connectivity};

/// Force magnitude under which a pixel counts as stagnant.
const STAGNANT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    To(usize),
    /// No improving neighbour: the walk ends here.
    Terminus,
    /// Force below the stagnation level. Ends walks like a terminus, but
    /// only counts as a sink if something drains into it.
    Stagnant,
    /// A step leaving the image.
    Lost,
}

fn next_step(f: &ForceField2D, idx: usize) -> Step {
    let (w, h) = (f.width(), f.height());
    let (x, y) = (idx % w, idx / w);
    let here = Vec2::new(x as f64, y as f64);
    let force = f.get(x, y);
    let inside = |dx: isize, dy: isize| {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize
    };
    let target = |dx: isize, dy: isize| (y as isize + dy) as usize * w + (x as isize + dx) as usize;
    let pull = |dx: isize, dy: isize| {
        let d = Vec2::new(dx as f64, dy as f64);
        f.sample(here + d * 0.5).dot(d) / d.norm()
    };

    let stagnant = !(force.norm() >= STAGNANT);
    if !stagnant {
        let mut best = (f64::NEG_INFINITY, (0isize, 0isize));
        for &(dx, dy) in &N8 {
            let d = Vec2::new(dx as f64, dy as f64);
            let align = force.dot(d) / d.norm();
            if align > best.0 {
                best = (align, (dx, dy));
            }
        }
        let (dx, dy) = best.1;
        if !inside(dx, dy) {
            return Step::Lost;
        }
        if pull(dx, dy) > 0.0 {
            return Step::To(target(dx, dy));
        }
    }
    // The local direction does not improve (or there is none): a pixel
    // sitting on a saddle may still drain sideways, so take the neighbour
    // whose midpoint force pulls hardest toward it.
    let mut best = (0.0, None);
    for &(dx, dy) in &N8 {
        if inside(dx, dy) {
            let p = pull(dx, dy);
            if p > best.0 {
                best = (p, Some((dx, dy)));
            }
        }
    }
    match best.1 {
        Some((dx, dy)) if best.0 >= STAGNANT => Step::To(target(dx, dy)),
        _ if stagnant => Step::Stagnant,
        _ => Step::Terminus,
    }
}

/// Discrete steepest-descent labeling: each pixel walks to its 8-neighbour
/// most aligned with the local force while the force at the midpoint keeps
/// pointing along the move. Walks ending at 8-adjacent termini share a
/// label; walks that stagnate, leave the image or cycle get 0.
pub fn drop_of_water_oracle(f: &ForceField2D) -> BasinMap {
    let (w, h) = (f.width(), f.height());
    let n = w * h;
    let steps: Vec<Step> = (0..n).map(|i| next_step(f, i)).collect();

    let termini: Vec<bool> = steps
        .iter()
        .map(|s| matches!(s, Step::Terminus | Step::Stagnant))
        .collect();
    let (mut groups, count) = connected_components(&termini, w, h, Connectivity::Eight);
    // A purely stagnant group is a sink only if some walk enters it.
    let mut live = vec![false; count as usize + 1];
    for (i, s) in steps.iter().enumerate() {
        match *s {
            Step::Terminus => live[groups[i] as usize] = true,
            Step::To(t) if groups[t] > 0 => live[groups[t] as usize] = true,
            _ => {}
        }
    }
    let mut renumber = vec![0u32; count as usize + 1];
    let mut count = 0u32;
    for g in 1..live.len() {
        if live[g] {
            count += 1;
            renumber[g] = count;
        }
    }
    for g in groups.iter_mut() {
        *g = renumber[*g as usize];
    }

    const UNSET: u32 = u32::MAX;
    const ON_PATH: u32 = u32::MAX - 1;
    let mut labels = vec![UNSET; n];
    let mut path = Vec::new();
    for start in 0..n {
        if labels[start] != UNSET {
            continue;
        }
        path.clear();
        let mut cur = start;
        let label = loop {
            match labels[cur] {
                UNSET => {}
                ON_PATH => break 0,
                l => break l,
            }
            labels[cur] = ON_PATH;
            path.push(cur);
            match steps[cur] {
                Step::To(next) => cur = next,
                Step::Terminus | Step::Stagnant => break groups[cur],
                Step::Lost => break 0,
            }
        };
        for &p in &path {
            labels[p] = label;
        }
    }

    let mut sums = vec![(0.0, 0.0, 0usize); count as usize];
    for (i, &g) in groups.iter().enumerate() {
        if g > 0 {
            let s = &mut sums[g as usize - 1];
            s.0 += (i % w) as f64;
            s.1 += (i / w) as f64;
            s.2 += 1;
        }
    }
    let minima = sums
        .into_iter()
        .map(|(sx, sy, c)| Vec2::new(sx / c as f64, sy / c as f64))
        .collect();
    let unassigned = labels.iter().filter(|&&l| l == 0).count();
    BasinMap {
        labels: LabelMap::from_vec(w, h, labels),
        minima,
        diagnostics: BasinDiagnostics {
            unassigned,
            ..Default::default()
        },
    }
}
