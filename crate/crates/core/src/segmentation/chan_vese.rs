use super::SegParams;
use crate::error::{Error, Result};
use crate::image::{Image2D, Mask};
use crate::morphology::{connected_components, signed_distance, Connectivity};

/// Margin around the mask bounding box of the evolution window, pixels.
pub const CV_MARGIN: usize = 10;
/// Half-width of the band of updated level-set values, pixels.
pub const NARROW_BAND: f64 = 3.0;
const REINIT_EVERY: usize = 5;
const MIN_SIGMA: f64 = 0.01;
/// Each region's spread is at least this fraction of the gap between the
/// region means, so flat regions do not yield degenerate likelihoods.
const RELATIVE_SIGMA: f64 = 0.1;
/// Largest level-set change per iteration, pixels.
const MAX_STEP: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub mask: Mask,
    /// The level set vanished; `mask` is the input unchanged.
    pub collapsed: bool,
}

#[derive(Debug, Clone, Copy)]
struct Gaussian {
    mean: f64,
    sigma: f64,
}

impl Gaussian {
    fn fit(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            s += v;
            s2 += v * v;
        }
        if n == 0 {
            return None;
        }
        let mean = s / n as f64;
        let var = (s2 / n as f64 - mean * mean).max(0.0);
        Some(Self {
            mean,
            sigma: var.sqrt().max(MIN_SIGMA),
        })
    }

    fn log_density(&self, v: f64) -> f64 {
        let z = (v - self.mean) / self.sigma;
        -0.5 * z * z - self.sigma.ln()
    }
}

/// Curvature of the level lines of `phi` at interior window pixel `i`,
/// clamped to one inverse pixel.
fn curvature(phi: &[f64], w: usize, h: usize, i: usize) -> f64 {
    let (x, y) = (i % w, i / w);
    let at = |x: usize, y: usize| phi[y * w + x];
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
    let c = at(x, y);
    let fx = (at(xr, y) - at(xl, y)) / 2.0;
    let fy = (at(x, yd) - at(x, yu)) / 2.0;
    let fxx = at(xr, y) - 2.0 * c + at(xl, y);
    let fyy = at(x, yd) - 2.0 * c + at(x, yu);
    let fxy = (at(xr, yd) - at(xr, yu) - at(xl, yd) + at(xl, yu)) / 4.0;
    let g2 = fx * fx + fy * fy;
    if g2 < 1e-12 {
        return 0.0;
    }
    let k = (fxx * fy * fy - 2.0 * fx * fy * fxy + fyy * fx * fx) / g2.powf(1.5);
    k.clamp(-1.0, 1.0)
}

/// Two-phase level set with Gaussian region likelihoods and a perimeter
/// penalty, evolved on a window around `mask`.
pub fn chan_vese_refine(img: &Image2D, mask: &Mask, p: &SegParams) -> Result<Refinement> {
    let (w, h) = (img.width(), img.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::Dimensions {
            expected_width: w,
            expected_height: h,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let Some(bbox) = mask.bbox() else {
        return Err(Error::param("mask", "must not be empty"));
    };
    let win = bbox.expand(CV_MARGIN, w, h);
    let (ww, wh) = (win.width(), win.height());
    let values: Vec<f64> = (0..ww * wh)
        .map(|i| img.data()[win.frame_index(w, i % ww, i / ww)])
        .collect();
    let input = mask.window_bits(&win);
    let mut phi = signed_distance(&input, ww, wh);
    let mu = p.cv_smoothness_mu;
    let dt = if mu > 0.0 {
        MAX_STEP.min(0.2 / mu)
    } else {
        MAX_STEP
    };
    let collapsed = || Refinement {
        mask: mask.clone(),
        collapsed: true,
    };

    let mut speed = vec![0.0; ww * wh];
    for it in 0..p.cv_iterations {
        let inside = Gaussian::fit(
            values
                .iter()
                .zip(&phi)
                .filter(|(_, &f)| f > 0.0)
                .map(|(&v, _)| v),
        );
        let outside = Gaussian::fit(
            values
                .iter()
                .zip(&phi)
                .filter(|(_, &f)| f <= 0.0)
                .map(|(&v, _)| v),
        );
        let Some(mut inside) = inside else {
            return Ok(collapsed());
        };
        let Some(mut outside) = outside else {
            break;
        };
        let floor = RELATIVE_SIGMA * (inside.mean - outside.mean).abs();
        inside.sigma = inside.sigma.max(floor);
        outside.sigma = outside.sigma.max(floor);
        for i in 0..ww * wh {
            speed[i] = if phi[i].abs() <= NARROW_BAND {
                let data = inside.log_density(values[i]) - outside.log_density(values[i]);
                data.tanh() + mu * curvature(&phi, ww, wh, i)
            } else {
                0.0
            };
        }
        for (f, s) in phi.iter_mut().zip(&speed) {
            *f += dt * s;
        }
        if (it + 1) % REINIT_EVERY == 0 {
            let bits: Vec<bool> = phi.iter().map(|&f| f > 0.0).collect();
            phi = signed_distance(&bits, ww, wh);
        }
    }

    let bits: Vec<bool> = phi.iter().map(|&f| f > 0.0).collect();
    let (comp, n) = connected_components(&bits, ww, wh, Connectivity::Four);
    let mut overlap = vec![0usize; n as usize + 1];
    for (c, &m) in comp.iter().zip(&input) {
        if m {
            overlap[*c as usize] += 1;
        }
    }
    let best = (1..=n as usize).fold(0, |b, c| if overlap[c] > overlap[b] { c } else { b });
    if best == 0 {
        return Ok(collapsed());
    }
    let keep: Vec<bool> = comp.iter().map(|&c| c as usize == best).collect();
    Ok(Refinement {
        mask: Mask::from_window(w, h, &win, &keep),
        collapsed: false,
    })
}
