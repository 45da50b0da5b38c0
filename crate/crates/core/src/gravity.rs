//! Inverse-square force and potential fields built by correlating the
//! frame (mass = normalized brightness, G = 1) with truncated kernels.
//!
//! Borders use "reflect" padding: the edge pixel is the mirror axis and is
//! not duplicated, so a uniform image produces a zero force everywhere.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{BilinearField, Image2D, Vec2};

/// Kernels up to this radius are applied by direct correlation.
pub const DIRECT_RADIUS_LIMIT: usize = 15;

/// Square kernels of side `2 * radius + 1`, indexed `[(dy + r) * side + (dx + r)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GravityKernelSet {
    radius: usize,
    softening_eps: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    kp: Vec<f64>,
}

impl GravityKernelSet {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn softening_eps(&self) -> f64 {
        self.softening_eps
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    fn index(&self, dx: isize, dy: isize) -> usize {
        let r = self.radius as isize;
        ((dy + r) as usize) * self.side() + (dx + r) as usize
    }

    pub fn kx_at(&self, dx: isize, dy: isize) -> f64 {
        self.kx[self.index(dx, dy)]
    }

    pub fn ky_at(&self, dx: isize, dy: isize) -> f64 {
        self.ky[self.index(dx, dy)]
    }

    pub fn kp_at(&self, dx: isize, dy: isize) -> f64 {
        self.kp[self.index(dx, dy)]
    }

    pub fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    pub fn kp(&self) -> &[f64] {
        &self.kp
    }
}

/// Builds force and potential kernels. Positive force components point
/// from the field point toward the attracting pixel.
pub fn build_kernels(radius: usize, softening_eps: f64) -> Result<GravityKernelSet> {
    if radius == 0 {
        return Err(Error::param("gravity.radius", "must be >= 1"));
    }
    if !(softening_eps >= 0.0) || !softening_eps.is_finite() {
        return Err(Error::param("gravity.softening_eps", "must be >= 0"));
    }
    let side = 2 * radius + 1;
    let r = radius as isize;
    let mut kx = vec![0.0; side * side];
    let mut ky = vec![0.0; side * side];
    let mut kp = vec![0.0; side * side];
    for dy in -r..=r {
        for dx in -r..=r {
            let i = ((dy + r) as usize) * side + (dx + r) as usize;
            if dx == 0 && dy == 0 {
                kp[i] = -1.0 / softening_eps.max(0.5);
                continue;
            }
            let (fx, fy) = (dx as f64, dy as f64);
            let dist = fx.hypot(fy).max(softening_eps);
            let inv3 = 1.0 / (dist * dist * dist);
            kx[i] = fx * inv3;
            ky[i] = fy * inv3;
            kp[i] = -1.0 / dist;
        }
    }
    Ok(GravityKernelSet {
        radius,
        softening_eps,
        kx,
        ky,
        kp,
    })
}

/// Acceleration per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField2D {
    width: usize,
    height: usize,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl ForceField2D {
    pub fn from_components(width: usize, height: usize, fx: Vec<f64>, fy: Vec<f64>) -> Self {
        assert_eq!(fx.len(), width * height);
        assert_eq!(fy.len(), width * height);
        Self {
            width,
            height,
            fx,
            fy,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Vec2) -> Self {
        let mut fx = Vec::with_capacity(width * height);
        let mut fy = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                fx.push(v.x);
                fy.push(v.y);
            }
        }
        Self::from_components(width, height, fx, fy)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fx(&self) -> &[f64] {
        &self.fx
    }

    pub fn fy(&self) -> &[f64] {
        &self.fy
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vec2 {
        let i = y * self.width + x;
        Vec2::new(self.fx[i], self.fy[i])
    }

    /// Force at a continuous position (bilinear, border-clamped).
    #[inline]
    pub fn sample(&self, p: Vec2) -> Vec2 {
        crate::image::bilinear_sample(self, p)
    }

    pub fn magnitude(&self) -> Image2D {
        Image2D::from_vec(
            self.width,
            self.height,
            self.fx
                .iter()
                .zip(&self.fy)
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.fx.iter().chain(&self.fy).all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            fx: self.fx.iter().map(|v| v * s).collect(),
            fy: self.fy.iter().map(|v| v * s).collect(),
        }
    }
}

impl BilinearField for ForceField2D {
    type Output = Vec2;

    fn grid_width(&self) -> usize {
        self.width
    }

    fn grid_height(&self) -> usize {
        self.height
    }

    #[inline]
    fn blend(&self, x0: usize, y0: usize, x1: usize, y1: usize, tx: f64, ty: f64) -> Vec2 {
        let w = self.width;
        let lerp2 = |v: &[f64]| {
            let a = v[y0 * w + x0];
            let b = v[y0 * w + x1];
            let c = v[y1 * w + x0];
            let d = v[y1 * w + x1];
            let top = a + (b - a) * tx;
            let bottom = c + (d - c) * tx;
            top + (bottom - top) * ty
        };
        Vec2::new(lerp2(&self.fx), lerp2(&self.fy))
    }
}

/// Gravitational potential per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField2D {
    width: usize,
    height: usize,
    phi: Vec<f64>,
}

impl PotentialField2D {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.phi[y * self.width + x]
    }

    pub fn to_image(&self) -> Image2D {
        Image2D::from_vec(self.width, self.height, self.phi.clone())
    }
}

/// Mirror index without repeating the edge sample.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn check_extent(img: &Image2D, k: &GravityKernelSet) -> Result<()> {
    if img.is_empty() {
        return Err(Error::param("image", "empty image"));
    }
    let side = k.side();
    if side > 2 * img.width() || side > 2 * img.height() {
        return Err(Error::param(
            "gravity.radius",
            format!(
                "kernel side {side} exceeds twice the image extent {}x{}",
                img.width(),
                img.height()
            ),
        ));
    }
    Ok(())
}

/// Reflect-padded copy of `img` with a border of `r` pixels.
fn pad_reflect(img: &Image2D, r: usize) -> (Vec<f64>, usize, usize) {
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut out = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = reflect_index(py as isize - r as isize, h);
        for px in 0..pw {
            let sx = reflect_index(px as isize - r as isize, w);
            out[py * pw + px] = img.get(sx, sy);
        }
    }
    (out, pw, ph)
}

/// Direct correlation of the padded image with several kernels at once.
fn correlate_direct(img: &Image2D, radius: usize, kernels: &[&[f64]]) -> Vec<Vec<f64>> {
    let (w, h) = (img.width(), img.height());
    let (padded, pw, _) = pad_reflect(img, radius);
    let side = 2 * radius + 1;
    let mut outs = vec![vec![0.0; w * h]; kernels.len()];
    let mut acc = vec![0.0; kernels.len()];
    for y in 0..h {
        for x in 0..w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ky in 0..side {
                let row = &padded[(y + ky) * pw + x..(y + ky) * pw + x + side];
                let krow = ky * side;
                for (k, a) in kernels.iter().zip(acc.iter_mut()) {
                    let kr = &k[krow..krow + side];
                    *a += row.iter().zip(kr).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            for (o, a) in outs.iter_mut().zip(&acc) {
                o[y * w + x] = *a;
            }
        }
    }
    outs
}

/// Smallest size >= n whose only prime factors are 2, 3, 5, 7.
fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

struct Fft2d {
    rows: usize,
    cols: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2d {
    fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            col_fwd: planner.plan_fft_forward(rows),
            row_inv: planner.plan_fft_inverse(cols),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn transpose(src: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
        let mut dst = vec![Complex::new(0.0, 0.0); rows * cols];
        const B: usize = 32;
        for rb in (0..rows).step_by(B) {
            for cb in (0..cols).step_by(B) {
                for r in rb..(rb + B).min(rows) {
                    for c in cb..(cb + B).min(cols) {
                        dst[c * rows + r] = src[r * cols + c];
                    }
                }
            }
        }
        dst
    }

    /// Forward transform; the spectrum is returned transposed (cols x rows).
    fn forward(&self, mut data: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        self.row_fwd.process(&mut data);
        let mut t = Self::transpose(&data, self.rows, self.cols);
        self.col_fwd.process(&mut t);
        t
    }

    /// Inverse of [`Fft2d::forward`], including the 1/N scale.
    fn inverse(&self, mut spectrum: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        self.col_inv.process(&mut spectrum);
        let mut data = Self::transpose(&spectrum, self.cols, self.rows);
        self.row_inv.process(&mut data);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        data
    }
}

/// Frequency-domain correlation. Each entry of `kernel_pairs` is a pair of
/// real kernels packed as real and imaginary parts; the two outputs come
/// back as the real and imaginary parts of one inverse transform.
fn correlate_fft(
    img: &Image2D,
    radius: usize,
    kernel_pairs: &[(&[f64], Option<&[f64]>)],
) -> Vec<(Vec<f64>, Option<Vec<f64>>)> {
    let (w, h) = (img.width(), img.height());
    let (padded, pw, ph) = pad_reflect(img, radius);
    let side = 2 * radius + 1;
    let rows = smooth_size(ph);
    let cols = smooth_size(pw);
    let fft = Fft2d::new(rows, cols);

    let mut buf = vec![Complex::new(0.0, 0.0); rows * cols];
    for y in 0..ph {
        for x in 0..pw {
            buf[y * cols + x].re = padded[y * pw + x];
        }
    }
    let image_spec = fft.forward(buf);

    kernel_pairs
        .iter()
        .map(|&(re_k, im_k)| {
            // Flipped kernel turns the circular convolution into correlation.
            let mut kb = vec![Complex::new(0.0, 0.0); rows * cols];
            for ky in 0..side {
                for kx in 0..side {
                    let src = (side - 1 - ky) * side + (side - 1 - kx);
                    let dst = &mut kb[ky * cols + kx];
                    dst.re = re_k[src];
                    if let Some(im) = im_k {
                        dst.im = im[src];
                    }
                }
            }
            let mut spec = fft.forward(kb);
            for (s, i) in spec.iter_mut().zip(&image_spec) {
                *s *= i;
            }
            let out = fft.inverse(spec);
            let off = 2 * radius;
            let mut re = vec![0.0; w * h];
            let mut im = im_k.map(|_| vec![0.0; w * h]);
            for y in 0..h {
                for x in 0..w {
                    let v = out[(y + off) * cols + x + off];
                    re[y * w + x] = v.re;
                    if let Some(im) = im.as_mut() {
                        im[y * w + x] = v.im;
                    }
                }
            }
            (re, im)
        })
        .collect()
}

/// Force field: reflect-padded correlation of the image with `kx`, `ky`.
pub fn force_field(img: &Image2D, k: &GravityKernelSet) -> Result<ForceField2D> {
    check_extent(img, k)?;
    let (w, h) = (img.width(), img.height());
    let (fx, fy) = if k.radius <= DIRECT_RADIUS_LIMIT {
        let mut outs = correlate_direct(img, k.radius, &[&k.kx, &k.ky]);
        let fy = outs.pop().expect("two outputs");
        let fx = outs.pop().expect("two outputs");
        (fx, fy)
    } else {
        let mut outs = correlate_fft(img, k.radius, &[(&k.kx, Some(&k.ky))]);
        let (fx, fy) = outs.pop().expect("one output");
        (fx, fy.expect("packed pair"))
    };
    Ok(ForceField2D::from_components(w, h, fx, fy))
}

/// Potential field: reflect-padded correlation of the image with `kp`.
pub fn potential_field(img: &Image2D, k: &GravityKernelSet) -> Result<PotentialField2D> {
    check_extent(img, k)?;
    let phi = if k.radius <= DIRECT_RADIUS_LIMIT {
        correlate_direct(img, k.radius, &[&k.kp])
            .pop()
            .expect("one output")
    } else {
        correlate_fft(img, k.radius, &[(&k.kp, None)])
            .pop()
            .expect("one output")
            .0
    };
    Ok(PotentialField2D {
        width: img.width(),
        height: img.height(),
        phi,
    })
}

/// Force and potential together, sharing one forward transform of the image.
pub fn fields(img: &Image2D, k: &GravityKernelSet) -> Result<(ForceField2D, PotentialField2D)> {
    check_extent(img, k)?;
    let (w, h) = (img.width(), img.height());
    if k.radius <= DIRECT_RADIUS_LIMIT {
        let mut outs = correlate_direct(img, k.radius, &[&k.kx, &k.ky, &k.kp]);
        let phi = outs.pop().expect("three outputs");
        let fy = outs.pop().expect("three outputs");
        let fx = outs.pop().expect("three outputs");
        return Ok((
            ForceField2D::from_components(w, h, fx, fy),
            PotentialField2D {
                width: w,
                height: h,
                phi,
            },
        ));
    }
    let mut outs = correlate_fft(img, k.radius, &[(&k.kx, Some(&k.ky)), (&k.kp, None)]);
    let (phi, _) = outs.pop().expect("two outputs");
    let (fx, fy) = outs.pop().expect("two outputs");
    Ok((
        ForceField2D::from_components(w, h, fx, fy.expect("packed pair")),
        PotentialField2D {
            width: w,
            height: h,
            phi,
        },
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pointwise sum of inverse-square attractions over the square support,
    /// with mirrored masses beyond the border. Independent of the kernel tables.
    pub(crate) fn brute_force(img: &Image2D, radius: usize) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (img.width(), img.height());
        let r = radius as isize;
        let mut fx = vec![0.0; w * h];
        let mut fy = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut ax, mut ay) = (0.0, 0.0);
                for sy in y - r..=y + r {
                    for sx in x - r..=x + r {
                        if sx == x && sy == y {
                            continue;
                        }
                        let mass = img.get(reflect_index(sx, w), reflect_index(sy, h));
                        let to_pixel = ((sx - x) as f64, (sy - y) as f64);
                        let dist = to_pixel.0.hypot(to_pixel.1);
                        let unit = (to_pixel.0 / dist, to_pixel.1 / dist);
                        let magnitude = mass / (dist * dist);
                        ax += magnitude * unit.0;
                        ay += magnitude * unit.1;
                    }
                }
                fx[(y as usize) * w + x as usize] = ax;
                fy[(y as usize) * w + x as usize] = ay;
            }
        }
        (fx, fy)
    }

    /// Max absolute difference relative to the largest reference magnitude.
    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn kernel_examples() {
        let k = build_kernels(1, 0.5).unwrap();
        assert_eq!(k.kx_at(1, 0), 1.0);
        assert_eq!(k.kx_at(-1, 0), -1.0);
        assert!((k.kx_at(1, 1) - 0.353_553_390_6).abs() < 1e-9);
        assert_eq!(k.kx_at(0, 0), 0.0);
        assert_eq!(k.kp_at(0, 0), -2.0);
        assert!(build_kernels(0, 0.5).is_err());
    }

    #[test]
    fn kernel_invariants() {
        for r in [1, 3, 8, 20] {
            let k = build_kernels(r, 0.5).unwrap();
            let ri = r as isize;
            let sum_x: f64 = k.kx().iter().sum();
            let sum_y: f64 = k.ky().iter().sum();
            assert!(sum_x.abs() < 1e-12 && sum_y.abs() < 1e-12);
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    assert_eq!(k.kx_at(dx, dy), -k.kx_at(-dx, dy));
                    assert_eq!(k.ky_at(dx, dy), -k.ky_at(dx, -dy));
                    assert!(k.kp_at(dx, dy) <= 0.0);
                    assert_eq!(k.kp_at(dx, dy), k.kp_at(dy, dx));
                }
            }
            for d in 1..ri {
                assert!(k.kp_at(d + 1, 0) > k.kp_at(d, 0));
            }
        }
    }

    #[test]
    fn direct_path_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image2D::from_fn(16, 16, |_, _| rng.random::<f64>());
        let k = build_kernels(6, 0.5).unwrap();
        let f = force_field(&img, &k).unwrap();
        let (bx, by) = brute_force(&img, 6);
        assert!(max_rel_err(f.fx(), &bx) < 1e-9);
        assert!(max_rel_err(f.fy(), &by) < 1e-9);
    }

    #[test]
    fn fft_path_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Image2D::from_fn(45, 38, |_, _| rng.random::<f64>());
        let k = build_kernels(20, 0.5).unwrap();
        let f = force_field(&img, &k).unwrap();
        let (bx, by) = brute_force(&img, 20);
        assert!(max_rel_err(f.fx(), &bx) < 1e-6);
        assert!(max_rel_err(f.fy(), &by) < 1e-6);

        let direct = correlate_direct(&img, 20, &[k.kp()]).pop().unwrap();
        let phi = potential_field(&img, &k).unwrap();
        assert!(max_rel_err(phi.phi(), &direct) < 1e-9);
    }

    #[test]
    fn uniform_image_has_no_force() {
        let img = Image2D::filled(24, 20, 0.6);
        for r in [5, 18] {
            let k = build_kernels(r, 0.5).unwrap();
            let f = force_field(&img, &k).unwrap();
            for v in f.fx().iter().chain(f.fy()) {
                assert!(v.abs() < 1e-12);
            }
        }
        // Interior potential is constant when the support stays inside.
        let k = build_kernels(5, 0.5).unwrap();
        let phi = potential_field(&img, &k).unwrap();
        let c = phi.get(12, 10);
        for y in 0..20 {
            for x in 0..24 {
                assert!((phi.get(x, y) - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn point_mass_attracts() {
        let mut img = Image2D::new(21, 21);
        img.set(10, 10, 1.0);
        let k = build_kernels(5, 0.5).unwrap();
        let f = force_field(&img, &k).unwrap();
        let v = f.get(12, 10);
        assert!(v.x < 0.0);
        assert_eq!(v.y, 0.0);

        let phi = potential_field(&img, &k).unwrap();
        let argmin = (0..phi.phi().len())
            .min_by(|&a, &b| phi.phi()[a].total_cmp(&phi.phi()[b]))
            .unwrap();
        assert_eq!(argmin, 10 * 21 + 10);

        let scaled = potential_field(&img.map(|v| 3.0 * v), &k).unwrap();
        for (a, b) in scaled.phi().iter().zip(phi.phi()) {
            assert!((a - 3.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_masses_cancel_at_midpoint() {
        let mut img = Image2D::new(21, 21);
        img.set(8, 10, 1.0);
        img.set(12, 10, 1.0);
        let k = build_kernels(6, 0.5).unwrap();
        let f = force_field(&img, &k).unwrap();
        let v = f.get(10, 10);
        assert!(v.x.abs() < 1e-15 && v.y.abs() < 1e-15);
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Image2D::from_fn(30, 30, |_, _| rng.random::<f64>());
        let b = Image2D::from_fn(30, 30, |_, _| rng.random::<f64>());
        let combo = Image2D::from_vec(
            30,
            30,
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| 2.0 * x - 0.5 * y)
                .collect(),
        );
        for r in [4, 17] {
            let k = build_kernels(r, 0.5).unwrap();
            let fa = force_field(&a, &k).unwrap();
            let fb = force_field(&b, &k).unwrap();
            let fc = force_field(&combo, &k).unwrap();
            let expect: Vec<f64> = fa
                .fx()
                .iter()
                .zip(fb.fx())
                .map(|(x, y)| 2.0 * x - 0.5 * y)
                .collect();
            assert!(max_rel_err(fc.fx(), &expect) < 1e-6);
        }
    }

    #[test]
    fn translation_equivariance_in_interior() {
        let blob = |cx: f64| {
            Image2D::from_fn(48, 48, move |x, y| {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - 24.0).powi(2);
                (-d2 / 18.0).exp()
            })
        };
        let k = build_kernels(6, 0.5).unwrap();
        let f0 = force_field(&blob(22.0), &k).unwrap();
        let f1 = force_field(&blob(23.0), &k).unwrap();
        for y in 14..34 {
            for x in 14..34 {
                let a = f0.get(x, y);
                let b = f1.get(x + 1, y);
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn oversized_kernel_rejected() {
        let img = Image2D::new(10, 10);
        let k = build_kernels(10, 0.5).unwrap();
        assert!(force_field(&img, &k).is_err());
    }

    #[test]
    fn reflect_index_mirrors_without_repeat() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    }
}
