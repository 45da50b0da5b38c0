use std::collections::HashMap;

use rustfft::num_complex::Complex64;

use crate::gravity::ForceField2D;
use crate::image::Vec2;

/// Partial derivatives of the force at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    /// d fx / dx
    pub xx: f64,
    /// d fx / dy
    pub xy: f64,
    /// d fy / dx
    pub yx: f64,
    /// d fy / dy
    pub yy: f64,
}

impl Jacobian {
    pub const fn new(xx: f64, xy: f64, yx: f64, yy: f64) -> Self {
        Self { xx, xy, yx, yy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.yx
    }

    /// Eigenvalues, real spectra sorted ascending.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.det();
        if disc >= 0.0 {
            let s = disc.sqrt();
            [
                Complex64::new(half_tr - s, 0.0),
                Complex64::new(half_tr + s, 0.0),
            ]
        } else {
            let s = (-disc).sqrt();
            [Complex64::new(half_tr, -s), Complex64::new(half_tr, s)]
        }
    }

    /// Unit eigenvector for a real eigenvalue.
    pub fn eigenvector(&self, lambda: f64) -> Vec2 {
        let a = Vec2::new(self.xy, lambda - self.xx);
        let b = Vec2::new(lambda - self.yy, self.yx);
        let v = if a.norm() >= b.norm() { a } else { b };
        let n = v.norm();
        if n > 0.0 {
            v * (1.0 / n)
        } else if (self.xx - lambda).abs() <= (self.yy - lambda).abs() {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriticalKind {
    Minimum,
    Saddle,
    Maximum,
    SpiralSink,
    SpiralSource,
    Degenerate,
}

impl CriticalKind {
    /// Attracting under descent, so it owns a basin.
    pub fn is_attractor(self) -> bool {
        matches!(self, CriticalKind::Minimum | CriticalKind::SpiralSink)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub pos: Vec2,
    pub kind: CriticalKind,
    pub eigenvalues: [Complex64; 2],
    /// Matching the eigenvalue order; zero vectors for complex spectra.
    pub eigenvectors: [Vec2; 2],
    pub jacobian: Jacobian,
}

const DEGENERATE_DET: f64 = 1e-9;

/// Kind of a critical point of the descent dynamics `x' = f(x)`.
pub fn classify(j: &Jacobian) -> CriticalKind {
    let det = j.det();
    if !(det.abs() >= DEGENERATE_DET) {
        return CriticalKind::Degenerate;
    }
    let [l1, l2] = j.eigenvalues();
    if l1.im == 0.0 {
        if det < 0.0 {
            CriticalKind::Saddle
        } else if l2.re < 0.0 {
            CriticalKind::Minimum
        } else {
            CriticalKind::Maximum
        }
    } else if l1.re < 0.0 {
        CriticalKind::SpiralSink
    } else if l1.re > 0.0 {
        CriticalKind::SpiralSource
    } else {
        CriticalKind::Degenerate
    }
}

/// Bilinear model `c0 + c1 u + c2 v + c3 u v` of one force component over a cell.
#[derive(Debug, Clone, Copy)]
struct Bilinear([f64; 4]);

impl Bilinear {
    fn from_corners(f00: f64, f10: f64, f01: f64, f11: f64) -> Self {
        Bilinear([f00, f10 - f00, f01 - f00, f00 - f10 - f01 + f11])
    }

    #[inline]
    fn eval(&self, u: f64, v: f64) -> f64 {
        let c = &self.0;
        c[0] + c[1] * u + c[2] * v + c[3] * u * v
    }

    #[inline]
    fn du(&self, v: f64) -> f64 {
        self.0[1] + self.0[3] * v
    }

    #[inline]
    fn dv(&self, u: f64) -> f64 {
        self.0[2] + self.0[3] * u
    }
}

struct Cell {
    fx: Bilinear,
    fy: Bilinear,
}

impl Cell {
    fn residual(&self, u: f64, v: f64) -> f64 {
        self.fx.eval(u, v).hypot(self.fy.eval(u, v))
    }

    fn jacobian(&self, u: f64, v: f64) -> Jacobian {
        Jacobian::new(self.fx.du(v), self.fx.dv(u), self.fy.du(v), self.fy.dv(u))
    }

    /// Newton iteration on the bilinear model. `None` if it diverges or
    /// leaves the (slightly padded) cell.
    fn newton(&self, mut u: f64, mut v: f64) -> Option<(f64, f64)> {
        for _ in 0..NEWTON_ITERATIONS {
            let (gx, gy) = (self.fx.eval(u, v), self.fy.eval(u, v));
            let j = self.jacobian(u, v);
            let det = j.det();
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let du = (gx * j.yy - gy * j.xy) / det;
            let dv = (gy * j.xx - gx * j.yx) / det;
            u -= du;
            v -= dv;
            if !(-CELL_SLACK..=1.0 + CELL_SLACK).contains(&u)
                || !(-CELL_SLACK..=1.0 + CELL_SLACK).contains(&v)
            {
                return None;
            }
            if du.abs() + dv.abs() < 1e-12 {
                return Some((u, v));
            }
        }
        None
    }

    /// Zeros of both components inside the cell.
    fn roots(&self) -> (Vec<(f64, f64)>, usize) {
        let [a0, a1, a2, a3] = self.fx.0;
        let [b0, b1, b2, b3] = self.fy.0;
        // Eliminating u from fx = 0 gives a quadratic in v.
        let qa = b2 * a3 - b3 * a2;
        let qb = b0 * a3 - b1 * a2 + b2 * a1 - b3 * a0;
        let qc = b0 * a1 - b1 * a0;
        let scale = self
            .fx
            .0
            .iter()
            .chain(&self.fy.0)
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let tiny = 1e-14 * scale * scale;

        let mut vs = Vec::with_capacity(2);
        if qa.abs() > tiny {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let s = disc.sqrt();
                // Numerically stable pair.
                let q = -0.5 * (qb + qb.signum() * s);
                if q != 0.0 {
                    vs.push(q / qa);
                    vs.push(qc / q);
                } else {
                    vs.push(0.0);
                }
            }
        } else if qb.abs() > tiny {
            vs.push(-qc / qb);
        }

        let mut out = Vec::new();
        let mut failed = 0;
        let in_cell = |t: f64| (-CELL_SLACK..=1.0 + CELL_SLACK).contains(&t);
        for v in vs {
            if !in_cell(v) {
                continue;
            }
            let den_x = a1 + a3 * v;
            let den_y = b1 + b3 * v;
            let u = if den_x.abs() >= den_y.abs() && den_x != 0.0 {
                -(a0 + a2 * v) / den_x
            } else if den_y != 0.0 {
                -(b0 + b2 * v) / den_y
            } else {
                continue;
            };
            if !in_cell(u) {
                continue;
            }
            match self.newton(u, v) {
                Some(p) => out.push(p),
                None if self.residual(u, v) <= 1e-10 * scale => out.push((u, v)),
                None => failed += 1,
            }
        }
        if out.is_empty() && failed == 0 && qa.abs() <= tiny && qb.abs() <= tiny {
            // Degenerate elimination; try Newton from the cell center.
            match self.newton(0.5, 0.5) {
                Some(p) => out.push(p),
                None => failed += 1,
            }
        }
        out.retain(|&(u, v)| {
            (-CELL_SLACK..=1.0 + CELL_SLACK).contains(&u)
                && (-CELL_SLACK..=1.0 + CELL_SLACK).contains(&v)
        });
        (out, failed)
    }
}

const NEWTON_ITERATIONS: usize = 50;
const CELL_SLACK: f64 = 1e-9;
const DEDUP_DISTANCE: f64 = 0.5;

/// Result of a critical point search.
#[derive(Debug, Clone, Default)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    /// Candidate roots dropped because Newton refinement did not converge.
    pub discarded: usize,
}

/// Critical points of the bilinear interpolant of `f`, using the default
/// minimum force scale of 1e-6.
pub fn find_critical_points(f: &ForceField2D) -> Vec<CriticalPoint> {
    search_critical_points(f, 1e-6).points
}

/// Scans every grid cell where both components change sign and whose
/// corner force reaches `min_scale`, solves for the bilinear zeros and
/// classifies them.
pub fn search_critical_points(f: &ForceField2D, min_scale: f64) -> CriticalSearch {
    let (w, h) = (f.width(), f.height());
    let mut result = CriticalSearch::default();
    if w < 2 || h < 2 {
        return result;
    }
    let (fx, fy) = (f.fx(), f.fy());
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: Vec2| {
        (
            (p.x / DEDUP_DISTANCE).floor() as i64,
            (p.y / DEDUP_DISTANCE).floor() as i64,
        )
    };

    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let i = y * w + x;
            let cx = [fx[i], fx[i + 1], fx[i + w], fx[i + w + 1]];
            let cy = [fy[i], fy[i + 1], fy[i + w], fy[i + w + 1]];
            if !spans_zero(&cx) || !spans_zero(&cy) {
                continue;
            }
            let scale = cx.iter().chain(&cy).fold(0.0f64, |m, v| m.max(v.abs()));
            if !(scale >= min_scale) || scale == 0.0 {
                continue;
            }
            let cell = Cell {
                fx: Bilinear::from_corners(cx[0], cx[1], cx[2], cx[3]),
                fy: Bilinear::from_corners(cy[0], cy[1], cy[2], cy[3]),
            };
            let (roots, failed) = cell.roots();
            result.discarded += failed;
            for (u, v) in roots {
                let pos = Vec2::new(x as f64 + u.clamp(0.0, 1.0), y as f64 + v.clamp(0.0, 1.0));
                let (kx, ky) = key(pos);
                let duplicate = (kx - 1..=kx + 1).any(|bx| {
                    (ky - 1..=ky + 1).any(|by| {
                        buckets.get(&(bx, by)).is_some_and(|ids| {
                            ids.iter()
                                .any(|&id| result.points[id].pos.distance(pos) < DEDUP_DISTANCE)
                        })
                    })
                });
                if duplicate {
                    continue;
                }
                let j = cell.jacobian(u, v);
                let kind = classify(&j);
                let eigenvalues = j.eigenvalues();
                let eigenvectors = if eigenvalues[0].im == 0.0 {
                    [
                        j.eigenvector(eigenvalues[0].re),
                        j.eigenvector(eigenvalues[1].re),
                    ]
                } else {
                    [Vec2::ZERO; 2]
                };
                buckets
                    .entry((kx, ky))
                    .or_default()
                    .push(result.points.len());
                result.points.push(CriticalPoint {
                    pos,
                    kind,
                    eigenvalues,
                    eigenvectors,
                    jacobian: j,
                });
            }
        }
    }
    result
}

#[inline]
fn spans_zero(c: &[f64; 4]) -> bool {
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo <= 0.0 && hi >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basins::testutil::blob_image;
    use crate::gravity::{build_kernels, force_field};
    use crate::image::Image2D;
    use proptest::prelude::*;

    /// Minimum of |f| on a dense grid inside the given window.
    fn grid_search(f: &ForceField2D, x0: f64, x1: f64, y0: f64, y1: f64) -> Vec2 {
        let mut best = (f64::INFINITY, Vec2::ZERO);
        let steps_x = ((x1 - x0) / 0.01).round() as usize;
        let steps_y = ((y1 - y0) / 0.01).round() as usize;
        for j in 0..=steps_y {
            for i in 0..=steps_x {
                let p = Vec2::new(x0 + i as f64 * 0.01, y0 + j as f64 * 0.01);
                let m = f.sample(p).norm();
                if m < best.0 {
                    best = (m, p);
                }
            }
        }
        best.1
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(&Jacobian::new(-1.0, 0.0, 0.0, -2.0)),
            CriticalKind::Minimum
        );
        assert_eq!(
            classify(&Jacobian::new(-1.0, 0.0, 0.0, 1.0)),
            CriticalKind::Saddle
        );
        assert_eq!(
            classify(&Jacobian::new(1.0, 0.0, 0.0, 2.0)),
            CriticalKind::Maximum
        );
        assert_eq!(
            classify(&Jacobian::new(0.0, -1.0, 1.0, 0.0)),
            CriticalKind::Degenerate
        );
        assert_eq!(
            classify(&Jacobian::new(-0.5, -1.0, 1.0, -0.5)),
            CriticalKind::SpiralSink
        );
        assert_eq!(
            classify(&Jacobian::new(0.5, -1.0, 1.0, 0.5)),
            CriticalKind::SpiralSource
        );
        assert_eq!(
            classify(&Jacobian::new(1e-6, 0.0, 0.0, 1e-6)),
            CriticalKind::Degenerate
        );
    }

    #[test]
    fn eigenvectors_satisfy_definition() {
        let j = Jacobian::new(-1.0, 0.7, 0.3, 2.0);
        for l in j.eigenvalues() {
            let v = j.eigenvector(l.re);
            let jv = Vec2::new(j.xx * v.x + j.xy * v.y, j.yx * v.x + j.yy * v.y);
            assert!((jv - v * l.re).norm() < 1e-12);
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_blob_has_one_minimum_at_center() {
        let img = blob_image(32, 32, &[(16.0, 16.0)], 3.0);
        let f = force_field(&img, &build_kernels(10, 0.5).unwrap()).unwrap();
        let cps = find_critical_points(&f);
        let minima: Vec<_> = cps.iter().filter(|c| c.kind.is_attractor()).collect();
        assert_eq!(minima.len(), 1, "{cps:?}");
        let oracle = grid_search(&f, 14.0, 18.0, 14.0, 18.0);
        assert!(minima[0].pos.distance(oracle) < 0.1);
        assert!(minima[0].pos.distance(Vec2::new(16.0, 16.0)) < 0.1);
    }

    #[test]
    fn two_blobs_have_saddle_between() {
        let img = blob_image(32, 32, &[(10.0, 16.0), (22.0, 16.0)], 2.5);
        let f = force_field(&img, &build_kernels(10, 0.5).unwrap()).unwrap();
        let cps = find_critical_points(&f);
        let minima: Vec<_> = cps.iter().filter(|c| c.kind.is_attractor()).collect();
        assert_eq!(minima.len(), 2);
        for m in &minima {
            let c = m.pos;
            let oracle = grid_search(&f, c.x - 1.0, c.x + 1.0, c.y - 1.0, c.y + 1.0);
            assert!(c.distance(oracle) < 0.02);
        }
        let saddles: Vec<_> = cps
            .iter()
            .filter(|c| {
                c.kind == CriticalKind::Saddle
                    && c.pos.x > 10.0
                    && c.pos.x < 22.0
                    && (c.pos.y - 16.0).abs() < 0.5
            })
            .collect();
        assert!(!saddles.is_empty(), "{cps:?}");
        let s = saddles[0].pos;
        let oracle = grid_search(&f, s.x - 1.0, s.x + 1.0, s.y - 1.0, s.y + 1.0);
        assert!(s.distance(oracle) < 0.02);
    }

    #[test]
    fn uniform_image_has_no_critical_points() {
        let img = Image2D::filled(24, 24, 0.5);
        let f = force_field(&img, &build_kernels(6, 0.5).unwrap()).unwrap();
        assert!(find_critical_points(&f).is_empty());
    }

    proptest! {
        #[test]
        fn roots_of_random_cells_vanish(
            cx in proptest::array::uniform4(-1.0f64..1.0),
            cy in proptest::array::uniform4(-1.0f64..1.0),
        ) {
            let f = ForceField2D::from_components(
                2, 2,
                vec![cx[0], cx[1], cx[2], cx[3]],
                vec![cy[0], cy[1], cy[2], cy[3]],
            );
            for cp in search_critical_points(&f, 0.0).points {
                prop_assert!(f.sample(cp.pos).norm() < 1e-8);
            }
        }

        #[test]
        fn linear_field_zero_is_found(
            px in 0.05f64..0.95, py in 0.05f64..0.95,
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0,
        ) {
            prop_assume!((a * d - b * c).abs() > 0.05);
            let f = ForceField2D::from_fn(2, 2, |x, y| {
                let (dx, dy) = (x as f64 - px, y as f64 - py);
                Vec2::new(a * dx + b * dy, c * dx + d * dy)
            });
            let pts = search_critical_points(&f, 0.0).points;
            prop_assert_eq!(pts.len(), 1);
            prop_assert!(pts[0].pos.distance(Vec2::new(px, py)) < 1e-4);
            prop_assert_eq!(pts[0].kind, classify(&Jacobian::new(a, b, c, d)));
        }
    }
}
