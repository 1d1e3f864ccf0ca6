//! Material parameter space: the seven simulation coefficients, their
//! bounds, the coupled sampler used to build datasets, normalization, and
//! parameter-space distances and rank statistics.

use libm::erfc;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Number of coefficients in a parameter vector.
pub const PARAM_COUNT: usize = 7;

/// Field names in canonical order. These are also the JSON keys.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "kStretchWarp",
    "kStretchWeft",
    "kStretchBias",
    "kBendingWarp",
    "kBendingWeft",
    "kBendingBias",
    "density",
];

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("coefficient {name} must be finite and strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("invalid bounds for {name}: min {min} must be positive and below max {max}")]
    InvalidBounds {
        name: &'static str,
        min: f64,
        max: f64,
    },
    #[error("coupling {name} must lie in [0, 1), got {value}")]
    InvalidCoupling { name: &'static str, value: f64 },
    #[error("population needs at least 2 members, got {0}")]
    PopulationTooSmall(usize),
    #[error("coefficient {0} has zero variance over the population")]
    ZeroVariance(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation needs at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("rank correlation undefined for a constant input")]
    ConstantInput,
    #[error("unknown parameter name {0:?}")]
    UnknownParameter(String),
}

/// Mechanical parameters driving the simulator: anisotropic membrane
/// stiffness (N/m), anisotropic bending stiffness (N·m) and area density
/// (kg/m²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    #[serde(rename = "kStretchWarp")]
    pub stretch_warp: f64,
    #[serde(rename = "kStretchWeft")]
    pub stretch_weft: f64,
    #[serde(rename = "kStretchBias")]
    pub stretch_bias: f64,
    #[serde(rename = "kBendingWarp")]
    pub bending_warp: f64,
    #[serde(rename = "kBendingWeft")]
    pub bending_weft: f64,
    #[serde(rename = "kBendingBias")]
    pub bending_bias: f64,
    pub density: f64,
}

impl MaterialParams {
    pub fn from_array(v: [f64; PARAM_COUNT]) -> Self {
        Self {
            stretch_warp: v[0],
            stretch_weft: v[1],
            stretch_bias: v[2],
            bending_warp: v[3],
            bending_weft: v[4],
            bending_bias: v[5],
            density: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; PARAM_COUNT] {
        [
            self.stretch_warp,
            self.stretch_weft,
            self.stretch_bias,
            self.bending_warp,
            self.bending_weft,
            self.bending_bias,
            self.density,
        ]
    }

    /// Isotropic convenience constructor.
    pub fn uniform(k_stretch: f64, k_bending: f64, density: f64) -> Self {
        Self::from_array([
            k_stretch, k_stretch, k_stretch, k_bending, k_bending, k_bending, density,
        ])
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        for (name, value) in PARAM_NAMES.iter().zip(self.to_array()) {
            if !(value.is_finite() && value > 0.0) {
                return Err(MaterialError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// Returns a copy with a named coefficient replaced. Besides the seven
    /// field names, `kStretch` and `kBending` set all three directions.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, MaterialError> {
        let mut v = self.to_array();
        match name {
            "kStretch" => v[0..3].fill(value),
            "kBending" => v[3..6].fill(value),
            _ => {
                let i = param_index(name)?;
                v[i] = value;
            }
        }
        Ok(Self::from_array(v))
    }
}

pub fn param_index(name: &str) -> Result<usize, MaterialError> {
    PARAM_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| MaterialError::UnknownParameter(name.to_string()))
}

/// Per-coefficient `(min, max)` anchors, serialized as `{"min": [...], "max": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub min: [f64; PARAM_COUNT],
    pub max: [f64; PARAM_COUNT],
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            min: [20.0, 20.0, 20.0, 1e-7, 1e-7, 1e-7, 0.05],
            max: [5000.0, 5000.0, 5000.0, 1e-3, 1e-3, 1e-3, 0.6],
        }
    }
}

impl ParameterBounds {
    pub fn validate(&self) -> Result<(), MaterialError> {
        for i in 0..PARAM_COUNT {
            let (min, max) = (self.min[i], self.max[i]);
            if !(min.is_finite() && max.is_finite() && min > 0.0 && min < max) {
                return Err(MaterialError::InvalidBounds {
                    name: PARAM_NAMES[i],
                    min,
                    max,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub bounds: ParameterBounds,
    pub log_uniform: [bool; PARAM_COUNT],
    /// Gaussian-copula correlation shared by the three membrane stiffnesses.
    pub stretch_coupling: f64,
    /// Gaussian-copula correlation between `kBendingBias` and density.
    pub bias_density_coupling: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            bounds: ParameterBounds::default(),
            log_uniform: [true, true, true, true, true, true, false],
            stretch_coupling: 0.7,
            bias_density_coupling: 0.4,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), MaterialError> {
        self.bounds.validate()?;
        for (name, value) in [
            ("stretch_coupling", self.stretch_coupling),
            ("bias_density_coupling", self.bias_density_coupling),
        ] {
            if !(0.0..1.0).contains(&value) {
                return Err(MaterialError::InvalidCoupling { name, value });
            }
        }
        Ok(())
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Draws the `index`-th parameter vector of the stream keyed by `cfg.seed`.
///
/// Marginals are uniform (or log-uniform) within the bounds; dependence is
/// injected through a Gaussian copula so that the three stretch draws share
/// a common factor and `kBendingBias` is correlated with density.
pub fn sample_params(cfg: &SamplerConfig, index: u64) -> Result<MaterialParams, MaterialError> {
    cfg.validate()?;
    let mut rng = seed::rng_for(cfg.seed, &[0x5A3D_1E, index]);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let mut z = [0.0; PARAM_COUNT];

    let rho = cfg.stretch_coupling;
    let common = normal();
    for zi in z.iter_mut().take(3) {
        *zi = rho.sqrt() * common + (1.0 - rho).sqrt() * normal();
    }
    z[3] = normal();
    z[4] = normal();
    let c = cfg.bias_density_coupling;
    let bias = normal();
    z[5] = bias;
    z[6] = c * bias + (1.0 - c * c).sqrt() * normal();

    let b = &cfg.bounds;
    let mut out = [0.0; PARAM_COUNT];
    for i in 0..PARAM_COUNT {
        // Clamp away from the open-interval endpoints so rounding never
        // escapes the bounds.
        let u = normal_cdf(z[i]).clamp(0.0, 1.0);
        out[i] = if cfg.log_uniform[i] {
            let (lo, hi) = (b.min[i].ln(), b.max[i].ln());
            (lo + u * (hi - lo)).exp().clamp(b.min[i], b.max[i])
        } else {
            (b.min[i] + u * (b.max[i] - b.min[i])).clamp(b.min[i], b.max[i])
        };
    }
    Ok(MaterialParams::from_array(out))
}

/// Result of min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalized {
    pub values: [f64; PARAM_COUNT],
    /// Components that fell outside the bounds and were clipped.
    pub clipped: [bool; PARAM_COUNT],
}

impl Normalized {
    pub fn any_clipped(&self) -> bool {
        self.clipped.iter().any(|&c| c)
    }
}

pub fn normalize_params(
    p: &MaterialParams,
    bounds: &ParameterBounds,
) -> Result<Normalized, MaterialError> {
    bounds.validate()?;
    let mut values = [0.0; PARAM_COUNT];
    let mut clipped = [false; PARAM_COUNT];
    for (i, x) in p.to_array().into_iter().enumerate() {
        let t = (x - bounds.min[i]) / (bounds.max[i] - bounds.min[i]);
        clipped[i] = !(0.0..=1.0).contains(&t);
        values[i] = t.clamp(0.0, 1.0);
    }
    Ok(Normalized { values, clipped })
}

pub fn denormalize_params(
    values: &[f64; PARAM_COUNT],
    bounds: &ParameterBounds,
) -> Result<MaterialParams, MaterialError> {
    bounds.validate()?;
    let mut out = [0.0; PARAM_COUNT];
    for i in 0..PARAM_COUNT {
        out[i] = bounds.min[i] + values[i] * (bounds.max[i] - bounds.min[i]);
    }
    Ok(MaterialParams::from_array(out))
}

/// Per-coefficient mean and sample standard deviation of a population.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScorer {
    pub mean: [f64; PARAM_COUNT],
    pub std: [f64; PARAM_COUNT],
}

impl ZScorer {
    pub fn fit(population: &[MaterialParams]) -> Result<Self, MaterialError> {
        let n = population.len();
        if n < 2 {
            return Err(MaterialError::PopulationTooSmall(n));
        }
        let mut mean = [0.0; PARAM_COUNT];
        let mut std = [0.0; PARAM_COUNT];
        for i in 0..PARAM_COUNT {
            let col: Vec<f64> = population.iter().map(|p| p.to_array()[i]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            if var <= 0.0 || !var.is_finite() {
                return Err(MaterialError::ZeroVariance(PARAM_NAMES[i]));
            }
            mean[i] = m;
            std[i] = var.sqrt();
        }
        Ok(Self { mean, std })
    }

    pub fn z(&self, p: &MaterialParams) -> [f64; PARAM_COUNT] {
        let mut out = p.to_array();
        for (i, x) in out.iter_mut().enumerate() {
            *x = (*x - self.mean[i]) / self.std[i];
        }
        out
    }

    pub fn distance(&self, a: &MaterialParams, b: &MaterialParams) -> f64 {
        let (za, zb) = (self.z(a), self.z(b));
        za.iter()
            .zip(zb.iter())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Euclidean distance between z-scored parameter vectors, with mean and
/// sample standard deviation taken over `population`.
pub fn param_distance(
    a: &MaterialParams,
    b: &MaterialParams,
    population: &[MaterialParams],
) -> Result<f64, MaterialError> {
    Ok(ZScorer::fit(population)?.distance(a, b))
}

/// Fractional ranks (1-based), ties receive the average of their positions.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean of (i+1..=j)
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MaterialError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MaterialError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MaterialError> {
    if x.len() != y.len() {
        return Err(MaterialError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MaterialError::TooFewObservations(x.len()));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}
