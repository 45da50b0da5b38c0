use super::critical::{CriticalKind, CriticalPoint};
use super::integrator::{follow, Direction, IntegratorConfig, Termination};
use crate::error::{Error, Result};
use crate::gravity::ForceField2D;
use crate::image::Vec2;

/// Offset from the saddle at which each branch starts, pixels.
pub const SEPARATRIX_OFFSET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatrixBranch {
    /// Starts at the saddle position.
    pub points: Vec<Vec2>,
    pub termination: Termination,
    /// Step budget ran out before the branch ended.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separatrix {
    pub saddle: Vec2,
    pub branches: [SeparatrixBranch; 2],
}

/// Follows both ascent branches leaving a saddle along the attracting
/// direction of the descent dynamics.
pub fn trace_separatrix(
    saddle: &CriticalPoint,
    field: &ForceField2D,
    cfg: &IntegratorConfig,
) -> Result<Separatrix> {
    if saddle.kind != CriticalKind::Saddle {
        return Err(Error::param(
            "saddle",
            format!("expected a saddle, got {:?}", saddle.kind),
        ));
    }
    // Eigenvalues are sorted, so index 0 is the negative one.
    let dir = saddle.eigenvectors[0];
    let branch = |sign: f64| {
        let start = saddle.pos + dir * (sign * SEPARATRIX_OFFSET);
        let t = follow(field, start, Direction::Ascent, cfg, true, |_| false);
        let mut points = Vec::with_capacity(t.points.len() + 1);
        points.push(saddle.pos);
        points.extend(t.points);
        SeparatrixBranch {
            points,
            termination: t.termination,
            truncated: t.termination == Termination::MaxSteps,
        }
    };
    Ok(Separatrix {
        saddle: saddle.pos,
        branches: [branch(1.0), branch(-1.0)],
    })
}

/// Pixels of an 8-connected digital line between two pixels, inclusive.
pub(crate) fn raster_line(
    (x0, y0): (usize, usize),
    (x1, y1): (usize, usize),
    mut plot: impl FnMut(usize, usize),
) {
    let (mut x, mut y) = (x0 as isize, y0 as isize);
    let (x1, y1) = (x1 as isize, y1 as isize);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x as usize, y as usize);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basins::critical::find_critical_points;
    use crate::basins::testutil::blob_image;
    use crate::gravity::{build_kernels, force_field};

    fn central_saddle(f: &ForceField2D) -> CriticalPoint {
        *find_critical_points(f)
            .iter()
            .filter(|c| c.kind == CriticalKind::Saddle)
            .min_by(|a, b| {
                let da = a.pos.distance(Vec2::new(16.0, 16.0));
                let db = b.pos.distance(Vec2::new(16.0, 16.0));
                da.total_cmp(&db)
            })
            .expect("a saddle")
    }

    #[test]
    fn bisector_between_equal_blobs() {
        // Mirror-symmetric about both x = 16 and y = 16.
        let img = blob_image(33, 33, &[(10.0, 16.0), (22.0, 16.0)], 2.5);
        let f = force_field(&img, &build_kernels(10, 0.5).unwrap()).unwrap();
        let s = central_saddle(&f);
        let sep = trace_separatrix(&s, &f, &IntegratorConfig::default()).unwrap();
        for b in &sep.branches {
            assert!(!b.truncated);
            for p in &b.points {
                assert!((p.x - 16.0).abs() < 1.0, "{p:?}");
            }
        }
        // The branches run in opposite directions and mirror each other.
        let end0 = sep.branches[0].points.last().unwrap();
        let end1 = sep.branches[1].points.last().unwrap();
        assert!((end0.y - 16.0) * (end1.y - 16.0) < 0.0);
        assert!(((end0.y - 16.0) + (end1.y - 16.0)).abs() < 1.0);
        assert!((end0.x - end1.x).abs() < 1.0);
    }

    #[test]
    fn branches_reaching_edge_end_on_border() {
        let img = blob_image(32, 32, &[(10.0, 16.0), (22.0, 16.0)], 2.5);
        let f = force_field(&img, &build_kernels(10, 0.5).unwrap()).unwrap();
        let s = central_saddle(&f);
        let sep = trace_separatrix(&s, &f, &IntegratorConfig::default()).unwrap();
        for b in &sep.branches {
            let end = b.points.last().unwrap();
            let on_border = end.y <= 1e-9 || end.y >= 31.0 - 1e-9;
            assert!(
                on_border || b.termination != Termination::Border,
                "{end:?} {:?}",
                b.termination
            );
            if b.termination == Termination::Border {
                assert!(on_border || end.x <= 1e-9 || end.x >= 31.0 - 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_saddles() {
        let img = blob_image(32, 32, &[(16.0, 16.0)], 3.0);
        let f = force_field(&img, &build_kernels(10, 0.5).unwrap()).unwrap();
        let m = find_critical_points(&f)
            .into_iter()
            .find(|c| c.kind.is_attractor())
            .unwrap();
        assert!(trace_separatrix(&m, &f, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn raster_line_is_eight_connected() {
        let mut pts = Vec::new();
        raster_line((0, 0), (7, 3), |x, y| pts.push((x, y)));
        assert_eq!(pts.first(), Some(&(0, 0)));
        assert_eq!(pts.last(), Some(&(7, 3)));
        for w in pts.windows(2) {
            let dx = w[0].0.abs_diff(w[1].0);
            let dy = w[0].1.abs_diff(w[1].1);
            assert!(dx <= 1 && dy <= 1 && dx + dy > 0);
        }
    }
}
