use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image2D;

/// Parameters of the anisotropic Kuwahara filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KuwaharaParams {
    /// Filter radius in pixels before anisotropic stretching.
    pub radius: f64,
    /// Number of angular sectors.
    pub sector_count: usize,
    /// Sharpness exponent applied to sector standard deviations.
    pub sharpness_q: f64,
    /// Gaussian sigma used to smooth the structure tensor.
    pub tensor_smoothing_sigma: f64,
}

impl Default for KuwaharaParams {
    fn default() -> Self {
        Self {
            radius: 4.0,
            sector_count: 8,
            sharpness_q: 8.0,
            tensor_smoothing_sigma: 2.0,
        }
    }
}

impl KuwaharaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 1.0) {
            return Err(Error::param("kuwahara.radius", "must be >= 1"));
        }
        if self.sector_count < 2 {
            return Err(Error::param("kuwahara.sector_count", "must be >= 2"));
        }
        if !(self.sharpness_q > 0.0) {
            return Err(Error::param("kuwahara.sharpness_q", "must be > 0"));
        }
        if !(self.tensor_smoothing_sigma >= 0.0) {
            return Err(Error::param(
                "kuwahara.tensor_smoothing_sigma",
                "must be >= 0",
            ));
        }
        Ok(())
    }
}

/// Separable Gaussian blur with border clamping. `sigma <= 0` copies.
pub fn gaussian_blur(img: &Image2D, sigma: f64) -> Image2D {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let (w, h) = (img.width(), img.height());
    let r = radius as usize;
    let src = img.data();
    let mut tmp = vec![0.0; w * h];
    for (row, dst) in src.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        for (x, d) in dst.iter_mut().enumerate() {
            *d = if x >= r && x + r < w {
                kernel
                    .iter()
                    .zip(&row[x - r..=x + r])
                    .map(|(k, v)| k * v)
                    .sum()
            } else {
                kernel
                    .iter()
                    .zip(-radius..=radius)
                    .map(|(k, i)| k * row[(x as isize + i).clamp(0, w as isize - 1) as usize])
                    .sum()
            };
        }
    }
    // Vertical pass, accumulated a clamped row at a time.
    let mut out = vec![0.0; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        for (k, i) in kernel.iter().zip(-radius..=radius) {
            let yy = (y as isize + i).clamp(0, h as isize - 1) as usize;
            for (d, v) in dst.iter_mut().zip(&tmp[yy * w..(yy + 1) * w]) {
                *d += k * v;
            }
        }
    }
    Image2D::from_vec(w, h, out)
}

/// Per-pixel local orientation and anisotropy from the smoothed
/// structure tensor.
struct Orientation {
    /// Angle of the minor eigenvector (along edges), radians.
    phi: Vec<f64>,
    /// (l1 - l2) / (l1 + l2), zero where the tensor vanishes.
    anisotropy: Vec<f64>,
}

fn structure_orientation(img: &Image2D, sigma: f64) -> Orientation {
    let (w, h) = (img.width(), img.height());
    let mut exx = Image2D::new(w, h);
    let mut exy = Image2D::new(w, h);
    let mut eyy = Image2D::new(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            // Sobel
            let gx =
                (p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1)) / 8.0;
            let gy =
                (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1)) / 8.0;
            let (xu, yu) = (x as usize, y as usize);
            exx.set(xu, yu, gx * gx);
            exy.set(xu, yu, gx * gy);
            eyy.set(xu, yu, gy * gy);
        }
    }
    let exx = gaussian_blur(&exx, sigma);
    let exy = gaussian_blur(&exy, sigma);
    let eyy = gaussian_blur(&eyy, sigma);

    let mut phi = vec![0.0; w * h];
    let mut anisotropy = vec![0.0; w * h];
    for i in 0..w * h {
        let (e, f, g) = (exx.data()[i], exy.data()[i], eyy.data()[i]);
        let root = ((e - g) * (e - g) + 4.0 * f * f).sqrt();
        let l1 = 0.5 * (e + g + root);
        let l2 = 0.5 * (e + g - root);
        let (tx, ty) = (l1 - e, -f);
        phi[i] = if tx.hypot(ty) > 1e-12 {
            ty.atan2(tx)
        } else {
            0.0
        };
        anisotropy[i] = if l1 + l2 > 1e-12 {
            (l1 - l2) / (l1 + l2)
        } else {
            0.0
        };
    }
    Orientation { phi, anisotropy }
}

const GAUSS_STEPS: usize = 1024;

/// Edge-preserving smoothing with polynomial sector weights over an
/// ellipse aligned to the local structure.
///
/// Each output pixel blends the weighted sector means, where sector `k`
/// contributes with weight `1 / (1 + (255 * var_k)^(q / 2))`. The 255
/// factor keeps `q` on the customary 8-bit scale for [0, 1] input.
pub fn kuwahara_anisotropic(img: &Image2D, p: &KuwaharaParams) -> Result<Image2D> {
    p.validate()?;
    let orient = structure_orientation(img, p.tensor_smoothing_sigma);

    let n = p.sector_count;
    let zeta = 2.0 / p.radius;
    let half = PI / n as f64;
    let eta = (zeta + half.cos()) / (half.sin() * half.sin());
    let dirs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect();

    // exp(-3.125 r^2) tabulated over r^2 in [0, 1].
    let gauss: Vec<f64> = (0..=GAUSS_STEPS)
        .map(|i| (-3.125 * (i as f64 + 0.5) / GAUSS_STEPS as f64).exp())
        .collect();
    let filter = SectorFilter {
        img,
        orient: &orient,
        p,
        zeta,
        eta,
        dirs: &dirs,
        gauss: &gauss,
    };
    // A fixed sector count lets the per-sector loops unroll.
    Ok(match n {
        4 => filter.run([0.0; 4]),
        8 => filter.run([0.0; 8]),
        _ => filter.run(vec![0.0; n]),
    })
}

struct SectorFilter<'a> {
    img: &'a Image2D,
    orient: &'a Orientation,
    p: &'a KuwaharaParams,
    zeta: f64,
    eta: f64,
    dirs: &'a [(f64, f64)],
    gauss: &'a [f64],
}

impl SectorFilter<'_> {
    fn run<B: AsMut<[f64]> + Clone>(&self, zeros: B) -> Image2D {
        let SectorFilter {
            img,
            orient,
            p,
            zeta,
            eta,
            dirs,
            gauss,
        } = *self;
        let (w, h) = (img.width(), img.height());
        let exponent = 0.5 * p.sharpness_q;
        let sharpen = |v: f64| {
            if exponent.fract() == 0.0 && exponent <= 64.0 {
                v.powi(exponent as i32)
            } else {
                v.powf(exponent)
            }
        };
        let mut out = Image2D::new(w, h);
        let (mut wk_buf, mut m_buf, mut s_buf, mut wsum_buf) =
            (zeros.clone(), zeros.clone(), zeros.clone(), zeros);
        let wk = wk_buf.as_mut();
        let m = m_buf.as_mut();
        let s = s_buf.as_mut();
        let wsum = wsum_buf.as_mut();
        let n = wk.len();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let aniso = orient.anisotropy[i];
                let a = p.radius * (1.0 + aniso).clamp(0.1, 2.0);
                let b = p.radius * (1.0 / (1.0 + aniso)).clamp(0.1, 2.0);
                let (sin_phi, cos_phi) = orient.phi[i].sin_cos();
                let max_x = (a * a * cos_phi * cos_phi + b * b * sin_phi * sin_phi).sqrt() as isize;
                let max_y = (a * a * sin_phi * sin_phi + b * b * cos_phi * cos_phi).sqrt() as isize;

                m.iter_mut().for_each(|v| *v = 0.0);
                s.iter_mut().for_each(|v| *v = 0.0);
                wsum.iter_mut().for_each(|v| *v = 0.0);

                let (ca, sa) = (cos_phi / a, sin_phi / a);
                let (cb, sb) = (cos_phi / b, sin_phi / b);
                let half_n = n / 2;
                let qa = ca * ca + sb * sb;
                // Columns inside the ellipse on row `j`, padded by one.
                let span = |j: isize| {
                    let fy = j as f64;
                    let qb = 2.0 * fy * (ca * sa - cb * sb);
                    let qc = fy * fy * (sa * sa + cb * cb) - 1.0;
                    let disc = qb * qb - 4.0 * qa * qc;
                    (disc >= 0.0).then(|| {
                        let root = disc.sqrt();
                        let lo = ((((-qb - root) / (2.0 * qa)).floor() as isize) - 1).max(-max_x);
                        let hi = ((((-qb + root) / (2.0 * qa)).ceil() as isize) + 1).min(max_x);
                        (lo, hi)
                    })
                };
                let pixel = |i2: isize, j: isize| {
                    let yy = (y as isize + j).clamp(0, h as isize - 1) as usize;
                    img.data()[yy * w + (x as isize + i2).clamp(0, w as isize - 1) as usize]
                };
                let offset = |i2: isize, j: isize| {
                    let (fx, fy) = (i2 as f64, j as f64);
                    let vx = ca * fx + sa * fy;
                    let vy = cb * fy - sb * fx;
                    (vx, vy, vx * vx + vy * vy)
                };
                // Normalized gaussian factor of one sample, with its sector
                // weights left in `wk`.
                let weigh = |vx: f64, vy: f64, r2: f64, wk: &mut [f64]| {
                    let mut sum = 0.0;
                    for (wv, &(dx, dy)) in wk.iter_mut().zip(dirs) {
                        let along = vx * dx + vy * dy;
                        let across = -vx * dy + vy * dx;
                        let z = (along + zeta - eta * across * across).max(0.0);
                        *wv = z * z;
                        sum += *wv;
                    }
                    (sum > 0.0)
                        .then(|| gauss[((r2 * GAUSS_STEPS as f64) as usize).min(GAUSS_STEPS)] / sum)
                };
                if n % 2 == 1 {
                    for j in -max_y..=max_y {
                        let Some((lo, hi)) = span(j) else { continue };
                        for i2 in lo..=hi {
                            let (vx, vy, r2) = offset(i2, j);
                            if r2 > 1.0 {
                                continue;
                            }
                            let Some(g) = weigh(vx, vy, r2, wk) else {
                                continue;
                            };
                            let c = pixel(i2, j);
                            let (cg, ccg) = (c * g, c * c * g);
                            for (k, &wgt) in wk.iter().enumerate() {
                                m[k] += cg * wgt;
                                s[k] += ccg * wgt;
                                wsum[k] += g * wgt;
                            }
                        }
                    }
                } else {
                    // The ellipse is point symmetric: the sample at (-i, -j)
                    // has the same radius and swaps each sector's weight with
                    // the opposite sector's.
                    let (vx, vy, r2) = offset(0, 0);
                    if let Some(g) = weigh(vx, vy, r2, wk) {
                        let c = pixel(0, 0);
                        for (k, &wgt) in wk.iter().enumerate() {
                            m[k] += c * g * wgt;
                            s[k] += c * c * g * wgt;
                            wsum[k] += g * wgt;
                        }
                    }
                    for j in 0..=max_y {
                        let Some((lo, hi)) = span(j) else { continue };
                        let lo = if j == 0 { 1 } else { lo };
                        for i2 in lo..=hi {
                            let (vx, vy, r2) = offset(i2, j);
                            if r2 > 1.0 {
                                continue;
                            }
                            let mut sum = 0.0;
                            for k in 0..half_n {
                                let (dx, dy) = dirs[k];
                                let along = vx * dx + vy * dy;
                                let across = -vx * dy + vy * dx;
                                let base = zeta - eta * across * across;
                                let z1 = (base + along).max(0.0);
                                let z2 = (base - along).max(0.0);
                                wk[k] = z1 * z1;
                                wk[k + half_n] = z2 * z2;
                                sum += wk[k] + wk[k + half_n];
                            }
                            if sum <= 0.0 {
                                continue;
                            }
                            let g =
                                gauss[((r2 * GAUSS_STEPS as f64) as usize).min(GAUSS_STEPS)] / sum;
                            let (c1, c2) = (pixel(i2, j), pixel(-i2, -j));
                            let (q1, q2) = (c1 * c1, c2 * c2);
                            for k in 0..half_n {
                                let (w1, w2) = (wk[k] * g, wk[k + half_n] * g);
                                m[k] += c1 * w1 + c2 * w2;
                                m[k + half_n] += c1 * w2 + c2 * w1;
                                s[k] += q1 * w1 + q2 * w2;
                                s[k + half_n] += q1 * w2 + q2 * w1;
                                wsum[k] += w1 + w2;
                                wsum[k + half_n] += w1 + w2;
                            }
                        }
                    }
                }

                let mut num = 0.0;
                let mut den = 0.0;
                for k in 0..n {
                    if wsum[k] <= 0.0 {
                        continue;
                    }
                    let mean = m[k] / wsum[k];
                    let var = (s[k] / wsum[k] - mean * mean).abs();
                    let alpha = 1.0 / (1.0 + sharpen(255.0 * var));
                    num += mean * alpha;
                    den += alpha;
                }
                out.set(x, y, if den > 0.0 { num / den } else { img.get(x, y) });
            }
        }
        out
    }
}
