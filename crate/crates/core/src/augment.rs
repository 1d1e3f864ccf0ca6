//! Image-space augmentation of depth maps and foreground histogram
//! equalization.
//!
//! Geometric transforms resample by inverse mapping with bilinear
//! interpolation in pixel-index coordinates (pixel `i` sits at `i`), and
//! samples falling outside the image read the background value 1.0.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::image::{DepthImage, GrayImage};
use crate::seed;

pub const BACKGROUND: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
}

/// One stage of the policy with its enable probability and parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Each image corner moves independently by up to `max_shift` × width.
    Perspective {
        p: f64,
        max_shift: f64,
    },
    /// Zoom about the image centre by a factor in `factor`, re-cropped or padded.
    Rescale {
        p: f64,
        factor: [f64; 2],
    },
    /// Thin-plate spline warp driven by a `grid` × `grid` lattice of control
    /// points displaced with standard deviation `sigma_px`.
    ThinPlate {
        p: f64,
        grid: usize,
        sigma_px: f64,
    },
    Blur {
        p: f64,
        sigma_px: [f64; 2],
    },
    /// Additive Gaussian noise on foreground pixels.
    Noise {
        p: f64,
        sigma: [f64; 2],
    },
    Posterize {
        p: f64,
        levels: [u32; 2],
    },
    /// `count` rectangles, each covering a fraction `area` of the image,
    /// filled with the background value.
    Erase {
        p: f64,
        count: [u32; 2],
        area: [f64; 2],
    },
}

impl Transform {
    pub fn probability(&self) -> f64 {
        match self {
            Transform::Perspective { p, .. }
            | Transform::Rescale { p, .. }
            | Transform::ThinPlate { p, .. }
            | Transform::Blur { p, .. }
            | Transform::Noise { p, .. }
            | Transform::Posterize { p, .. }
            | Transform::Erase { p, .. } => *p,
        }
    }

    fn set_probability(&mut self, value: f64) {
        match self {
            Transform::Perspective { p, .. }
            | Transform::Rescale { p, .. }
            | Transform::ThinPlate { p, .. }
            | Transform::Blur { p, .. }
            | Transform::Noise { p, .. }
            | Transform::Posterize { p, .. }
            | Transform::Erase { p, .. } => *p = value,
        }
    }

    fn validate(&self) -> Result<(), AugmentError> {
        let p = self.probability();
        let range_ok = |r: [f64; 2], lo: f64| {
            r[0].is_finite() && r[1].is_finite() && r[0] >= lo && r[0] <= r[1]
        };
        let ok = (0.0..=1.0).contains(&p)
            && match self {
                Transform::Perspective { max_shift, .. } => (0.0..0.5).contains(max_shift),
                Transform::Rescale { factor, .. } => range_ok(*factor, 1e-3),
                Transform::ThinPlate { grid, sigma_px, .. } => {
                    *grid >= 2 && sigma_px.is_finite() && *sigma_px >= 0.0
                }
                Transform::Blur { sigma_px, .. } => range_ok(*sigma_px, 0.0),
                Transform::Noise { sigma, .. } => range_ok(*sigma, 0.0),
                Transform::Posterize { levels, .. } => levels[0] >= 2 && levels[0] <= levels[1],
                Transform::Erase { count, area, .. } => {
                    count[0] <= count[1] && range_ok(*area, 0.0) && area[1] <= 1.0
                }
            };
        if ok {
            Ok(())
        } else {
            Err(AugmentError::InvalidPolicy(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub seed: u64,
    /// Applied in list order.
    pub transforms: Vec<Transform>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            seed: 0,
            transforms: vec![
                Transform::Perspective {
                    p: 0.5,
                    max_shift: 0.03,
                },
                Transform::Rescale {
                    p: 0.5,
                    factor: [0.9, 1.1],
                },
                Transform::ThinPlate {
                    p: 0.5,
                    grid: 4,
                    sigma_px: 2.0,
                },
                Transform::Blur {
                    p: 0.5,
                    sigma_px: [0.5, 1.5],
                },
                Transform::Noise {
                    p: 0.8,
                    sigma: [0.003, 0.02],
                },
                Transform::Posterize {
                    p: 0.3,
                    levels: [64, 256],
                },
                Transform::Erase {
                    p: 0.3,
                    count: [0, 3],
                    area: [0.02, 0.10],
                },
            ],
        }
    }
}

impl AugmentPolicy {
    /// The default stages with every probability set to zero.
    pub fn identity() -> Self {
        let mut p = Self::default();
        p.transforms.iter_mut().for_each(|t| t.set_probability(0.0));
        p
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        self.transforms.iter().try_for_each(Transform::validate)
    }
}

/// Applies the policy's stages in order; deterministic for
/// `(policy.seed, sample_seed)`. Each stage draws from its own stream so
/// toggling one stage leaves the others' randomness unchanged.
pub fn augment(
    img: &DepthImage,
    policy: &AugmentPolicy,
    sample_seed: u64,
) -> Result<DepthImage, AugmentError> {
    policy.validate()?;
    let mut out = img.image.clone();
    for (k, t) in policy.transforms.iter().enumerate() {
        let mut rng = seed::rng_for(policy.seed, &[0xA06, sample_seed, k as u64]);
        if rng.random::<f64>() < t.probability() {
            out = apply(&out, t, &mut rng);
        }
    }
    out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(DepthImage {
        image: out,
        near: img.near,
        far: img.far,
    })
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn apply(img: &GrayImage, t: &Transform, rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (img.width as f64, img.height as f64);
    match t {
        Transform::Perspective { max_shift, .. } => {
            let s = max_shift * w;
            let corners = [
                (0.0, 0.0),
                (w - 1.0, 0.0),
                (w - 1.0, h - 1.0),
                (0.0, h - 1.0),
            ];
            let moved =
                corners.map(|(x, y)| (x + rng.random_range(-s..=s), y + rng.random_range(-s..=s)));
            perspective(img, &corners, &moved)
        }
        Transform::Rescale { factor, .. } => rescale(img, uniform(rng, *factor)),
        Transform::ThinPlate { grid, sigma_px, .. } => {
            let mut d = Vec::with_capacity(grid * grid);
            for _ in 0..grid * grid {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                d.push((dx * sigma_px, dy * sigma_px));
            }
            thin_plate(img, *grid, &d)
        }
        Transform::Blur { sigma_px, .. } => gaussian_blur(img, uniform(rng, *sigma_px)),
        Transform::Noise { sigma, .. } => {
            let s = uniform(rng, *sigma);
            let mut out = img.clone();
            for v in out.data.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                if *v < BACKGROUND {
                    *v = (*v + s * n).clamp(0.0, 1.0);
                }
            }
            out
        }
        Transform::Posterize { levels, .. } => {
            posterize(img, rng.random_range(levels[0]..=levels[1]))
        }
        Transform::Erase { count, area, .. } => {
            let mut out = img.clone();
            for _ in 0..rng.random_range(count[0]..=count[1]) {
                let a = uniform(rng, *area) * w * h;
                let aspect = (rng.random_range(-1.0..1.0) * std::f64::consts::LN_2).exp();
                let rw = ((a * aspect).sqrt().round() as usize).clamp(1, img.width);
                let rh = ((a / aspect).sqrt().round() as usize).clamp(1, img.height);
                let x0 = rng.random_range(0..=img.width - rw);
                let y0 = rng.random_range(0..=img.height - rh);
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        out.set(x, y, BACKGROUND);
                    }
                }
            }
            out
        }
    }
}

/// Bilinear sample at pixel-index coordinates; outside reads the background.
fn sample(img: &GrayImage, x: f64, y: f64) -> f64 {
    if !(x.is_finite() && y.is_finite()) {
        return BACKGROUND;
    }
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= img.width as f64 || yi >= img.height as f64 {
            BACKGROUND
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let mut v = 0.0;
    for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            let wgt = wx * wy;
            if wgt != 0.0 {
                v += wgt * at(x0 + dx, y0 + dy);
            }
        }
    }
    v
}

fn remap(img: &GrayImage, map: impl Fn(f64, f64) -> (f64, f64)) -> GrayImage {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let (sx, sy) = map(x as f64, y as f64);
            out.set(x, y, sample(img, sx, sy));
        }
    }
    out
}

/// Homography `H` with `H · (from, 1) ∝ (to, 1)` for four correspondences.
pub fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<Matrix3<f64>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for k in 0..4 {
        let ((x, y), (u, v)) = (from[k], to[k]);
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a.lu().solve(&b)?;
    Some(Matrix3::new(
        sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0,
    ))
}

/// Warps so that the image corners `corners` land on `moved`.
fn perspective(img: &GrayImage, corners: &[(f64, f64); 4], moved: &[(f64, f64); 4]) -> GrayImage {
    let Some(inv) = homography(moved, corners) else {
        return img.clone();
    };
    remap(img, |x, y| {
        let p = inv * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    })
}

fn rescale(img: &GrayImage, factor: f64) -> GrayImage {
    let cx = 0.5 * (img.width as f64 - 1.0);
    let cy = 0.5 * (img.height as f64 - 1.0);
    remap(img, |x, y| (cx + (x - cx) / factor, cy + (y - cy) / factor))
}

fn tps_kernel(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

/// Thin-plate warp: output pixel `q` reads the input at `q + f(q)`, where
/// `f` interpolates `displacements` on a `grid` × `grid` lattice spanning
/// the image.
pub fn thin_plate(img: &GrayImage, grid: usize, displacements: &[(f64, f64)]) -> GrayImage {
    let n = grid * grid;
    let step_x = (img.width as f64 - 1.0) / (grid as f64 - 1.0);
    let step_y = (img.height as f64 - 1.0) / (grid as f64 - 1.0);
    let ctrl: Vec<(f64, f64)> = (0..n)
        .map(|k| ((k % grid) as f64 * step_x, (k / grid) as f64 * step_y))
        .collect();
    let mut a = DMatrix::<f64>::zeros(n + 3, n + 3);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (ctrl[i].0 - ctrl[j].0, ctrl[i].1 - ctrl[j].1);
            a[(i, j)] = tps_kernel(dx * dx + dy * dy);
        }
        for (c, v) in [1.0, ctrl[i].0, ctrl[i].1].into_iter().enumerate() {
            a[(i, n + c)] = v;
            a[(n + c, i)] = v;
        }
    }
    let mut rhs = DMatrix::<f64>::zeros(n + 3, 2);
    for (i, d) in displacements.iter().enumerate().take(n) {
        rhs[(i, 0)] = d.0;
        rhs[(i, 1)] = d.1;
    }
    let Some(coef) = a.lu().solve(&rhs) else {
        return img.clone();
    };
    if coef.iter().all(|c| *c == 0.0) {
        return img.clone();
    }
    remap(img, |x, y| {
        let mut f = [
            coef[(n, 0)] + coef[(n + 1, 0)] * x + coef[(n + 2, 0)] * y,
            0.0,
        ];
        f[1] = coef[(n, 1)] + coef[(n + 1, 1)] * x + coef[(n + 2, 1)] * y;
        for (i, c) in ctrl.iter().enumerate() {
            let u = tps_kernel((x - c.0).powi(2) + (y - c.1).powi(2));
            f[0] += coef[(i, 0)] * u;
            f[1] += coef[(i, 1)] * u;
        }
        (x + f[0], y + f[1])
    })
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (w, h) = (img.width as isize, img.height as isize);
    let pass = |src: &GrayImage, horizontal: bool| {
        let mut out = src.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if horizontal {
                        ((x + o).clamp(0, w - 1), y)
                    } else {
                        (x, (y + o).clamp(0, h - 1))
                    };
                    acc += wk * src.get(sx as usize, sy as usize);
                }
                out.set(x as usize, y as usize, acc);
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Quantizes to `levels` evenly spaced values in `[0, 1]`.
pub fn posterize(img: &GrayImage, levels: u32) -> GrayImage {
    let q = (levels.max(2) - 1) as f64;
    let mut out = img.clone();
    out.data
        .iter_mut()
        .for_each(|v| *v = (v.clamp(0.0, 1.0) * q).round() / q);
    out
}

/// Histogram equalization over 256 bins of the foreground (pixels below the
/// background value 1.0), which is preserved. Foreground values map to
/// `(cdf(b) - cdf_min) / (N - cdf_min) · 255/256`, keeping them strictly
/// below the background. A foreground confined to one bin is left unchanged.
pub fn equalize(img: &GrayImage) -> GrayImage {
    let bin = |v: f64| ((v.clamp(0.0, 1.0) * 256.0) as usize).min(255);
    let mut hist = [0usize; 256];
    for v in img.data.iter().filter(|v| **v < BACKGROUND) {
        hist[bin(*v)] += 1;
    }
    let total: usize = hist.iter().sum();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = hist
        .iter()
        .zip(cdf)
        .find(|(h, _)| **h > 0)
        .map(|(_, c)| c)
        .unwrap_or(0);
    if total == cdf_min {
        return img.clone();
    }
    let mut out = img.clone();
    for v in out.data.iter_mut().filter(|v| **v < BACKGROUND) {
        *v = (cdf[bin(*v)] - cdf_min) as f64 / (total - cdf_min) as f64 * (255.0 / 256.0);
    }
    out
}

pub fn equalize_depth(img: &DepthImage) -> DepthImage {
    DepthImage {
        image: equalize(&img.image),
        near: img.near,
        far: img.far,
    }
}
