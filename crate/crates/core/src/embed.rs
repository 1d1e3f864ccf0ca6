//! Ordinal embedding from triplet judgements (t-distributed stochastic
//! triplet embedding) and rank-correlation comparison of distance sets.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::material::spearman;
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("optimization diverged at iteration {0}")]
    Diverged(usize),
    #[error("need at least 3 materials with matching distance rows")]
    Shape,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `chosen` was judged more similar to `reference` than `rejected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    #[serde(rename = "ref")]
    pub reference: usize,
    pub chosen: usize,
    pub rejected: usize,
}

impl Triplet {
    pub fn new(reference: usize, chosen: usize, rejected: usize) -> Self {
        Self {
            reference,
            chosen,
            rejected,
        }
    }

    fn check(&self, n_items: usize) -> Result<(), EmbedError> {
        let t = [self.reference, self.chosen, self.rejected];
        if t.iter().any(|i| *i >= n_items) {
            return Err(EmbedError::InvalidInput(format!(
                "{self:?} references an item >= {n_items}"
            )));
        }
        if t[0] == t[1] || t[0] == t[2] || t[1] == t[2] {
            return Err(EmbedError::InvalidInput(format!(
                "{self:?} has repeated indices"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub dims: usize,
    pub points: Vec<Vec<f64>>,
    /// Mean negative log-likelihood of the triplets.
    pub loss: f64,
    /// Loss after every iteration of the winning restart.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl Embedding {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.points[i]
            .iter()
            .zip(&self.points[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.points.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.distance(i, j)).collect())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EmbedError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string()];
        header.extend((0..self.dims).map(|d| format!("x{d}")));
        out.write_record(&header)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// SVG scatter plot of the first two coordinates with one label per point.
pub fn scatter_svg(e: &Embedding, labels: &[String]) -> String {
    let coord = |p: &Vec<f64>, d: usize| p.get(d).copied().unwrap_or(0.0);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &e.points {
        for d in 0..2 {
            lo[d] = lo[d].min(coord(p, d));
            hi[d] = hi[d].max(coord(p, d));
        }
    }
    let (size, pad) = (480.0, 40.0);
    let map = |v: f64, d: usize| {
        let span = (hi[d] - lo[d]).max(1e-12);
        let t = (v - lo[d]) / span;
        if d == 0 {
            pad + t * (size - 2.0 * pad)
        } else {
            size - pad - t * (size - 2.0 * pad)
        }
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, p) in e.points.iter().enumerate() {
        let (x, y) = (map(coord(p, 0), 0), map(coord(p, 1), 1));
        let label = labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let label = label
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"steelblue\"/><text x=\"{:.2}\" y=\"{:.2}\">{label}</text>\n",
            x + 6.0,
            y - 6.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsteOptions {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Degrees of freedom of the Student-t kernel.
    pub alpha: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TsteOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 2000,
            alpha: 1.0,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Mean negative log-likelihood and its gradient.
fn objective(
    x: &[f64],
    dims: usize,
    triplets: &[Triplet],
    alpha: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let pt = |i: usize| &x[i * dims..(i + 1) * dims];
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let expo = -(alpha + 1.0) / 2.0;
    let mut nll = 0.0;
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let scale = 1.0 / triplets.len() as f64;
    for t in triplets {
        let (r, c, j) = (pt(t.reference), pt(t.chosen), pt(t.rejected));
        let (drc, drj) = (d2(r, c), d2(r, j));
        let kc = (1.0 + drc / alpha).powf(expo);
        let kj = (1.0 + drj / alpha).powf(expo);
        let p = kc / (kc + kj);
        nll -= p.ln() * scale;
        if let Some(g) = g.as_deref_mut() {
            // d(-log p)/dx_r = -(1 - p) (∇ log kc - ∇ log kj), ∇_r log k = -(α+1)(r - y)/(α + d²)
            let wc = (1.0 - p) * (alpha + 1.0) / (alpha + drc) * scale;
            let wj = (1.0 - p) * (alpha + 1.0) / (alpha + drj) * scale;
            for d in 0..dims {
                let gc = wc * (r[d] - c[d]);
                let gj = wj * (r[d] - j[d]);
                g[t.reference * dims + d] += gc - gj;
                g[t.chosen * dims + d] -= gc;
                g[t.rejected * dims + d] += gj;
            }
        }
    }
    nll
}

fn optimize(
    triplets: &[Triplet],
    n_items: usize,
    dims: usize,
    opt: &TsteOptions,
    restart: u64,
) -> Result<Embedding, EmbedError> {
    let mut rng = seed::rng_for(opt.seed, &[0x75E, restart]);
    let mut x: Vec<f64> = (0..n_items * dims)
        .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut grad = vec![0.0; x.len()];
    let mut loss = objective(&x, dims, triplets, opt.alpha, Some(&mut grad));
    let mut lr = opt.learning_rate;
    let mut history = Vec::with_capacity(opt.iterations);
    let mut trial = x.clone();
    for it in 0..opt.iterations {
        if !loss.is_finite() {
            return Err(EmbedError::Diverged(it));
        }
        // Backtracking keeps the loss non-increasing.
        loop {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = xi - lr * gi;
            }
            let candidate = objective(&trial, dims, triplets, opt.alpha, None);
            if candidate.is_finite() && candidate <= loss {
                std::mem::swap(&mut x, &mut trial);
                loss = objective(&x, dims, triplets, opt.alpha, Some(&mut grad));
                lr *= 1.1;
                break;
            }
            lr *= 0.5;
            if lr < 1e-14 {
                break;
            }
        }
        history.push(loss);
    }
    let points = x.chunks(dims).map(|c| c.to_vec()).collect();
    Ok(Embedding {
        dims,
        points,
        loss,
        history,
    })
}

/// Fits a `dims`-dimensional embedding of `n_items` explaining the triplets;
/// returns the best of `opt.restarts` random initializations.
pub fn tste_embed(
    triplets: &[Triplet],
    n_items: usize,
    dims: usize,
    opt: &TsteOptions,
) -> Result<Embedding, EmbedError> {
    if triplets.is_empty() {
        return Err(EmbedError::InvalidInput("no triplets".into()));
    }
    if dims == 0 || opt.restarts == 0 || !(opt.alpha > 0.0) || !(opt.learning_rate > 0.0) {
        return Err(EmbedError::InvalidInput(
            "dims, restarts, alpha and learning rate must be positive".into(),
        ));
    }
    triplets.iter().try_for_each(|t| t.check(n_items))?;
    let runs: Vec<Embedding> = (0..opt.restarts as u64)
        .into_par_iter()
        .map(|r| optimize(triplets, n_items, dims, opt, r))
        .collect::<Result<_, _>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, e| if e.loss < best.loss { e } else { best })
        .unwrap())
}

/// Fraction of triplets the embedding reproduces; exact ties count one half.
pub fn triplet_agreement(e: &Embedding, triplets: &[Triplet]) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    let score: f64 = triplets
        .iter()
        .map(|t| {
            let (dc, dj) = (
                e.distance(t.reference, t.chosen),
                e.distance(t.reference, t.rejected),
            );
            if dc < dj {
                1.0
            } else if dc == dj {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    score / triplets.len() as f64
}

/// Triplets answered from a distance matrix, each flipped with probability
/// `flip_prob`. References and pairs are drawn uniformly; equal distances
/// are resolved by a coin toss.
pub fn synthetic_triplets(
    distances: &[Vec<f64>],
    count: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<Vec<Triplet>, EmbedError> {
    let n = distances.len();
    if n < 3 || distances.iter().any(|r| r.len() != n) {
        return Err(EmbedError::Shape);
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(EmbedError::InvalidInput(
            "flip probability outside [0, 1]".into(),
        ));
    }
    let mut rng = seed::rng_for(seed, &[0x7219]);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = rng.random_range(0..n);
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if r == a || r == b || a == b {
            continue;
        }
        let (da, db) = (distances[r][a], distances[r][b]);
        let mut a_closer = if da == db {
            rng.random::<bool>()
        } else {
            da < db
        };
        if rng.random::<f64>() < flip_prob {
            a_closer = !a_closer;
        }
        out.push(if a_closer {
            Triplet::new(r, a, b)
        } else {
            Triplet::new(r, b, a)
        });
    }
    Ok(out)
}

pub fn read_triplets_csv<R: Read>(r: R) -> Result<Vec<Triplet>, EmbedError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn write_triplets_csv<W: Write>(w: W, triplets: &[Triplet]) -> Result<(), EmbedError> {
    let mut out = csv::Writer::from_writer(w);
    for t in triplets {
        out.serialize(t)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelationReport {
    /// Spearman r per material, `None` when a row is constant.
    pub per_material: Vec<Option<f64>>,
    pub flagged: Vec<usize>,
    pub mean: f64,
    /// Sample standard deviation across unflagged materials.
    pub std: f64,
}

/// For each material, the Spearman correlation between its distances to all
/// other materials under `reference` and under `candidate`.
pub fn rank_correlation_report(
    reference: &[Vec<f64>],
    candidate: &[Vec<f64>],
) -> Result<RankCorrelationReport, EmbedError> {
    let n = reference.len();
    if n < 3 || candidate.len() != n || reference.iter().chain(candidate).any(|r| r.len() != n) {
        return Err(EmbedError::Shape);
    }
    let mut per_material = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for i in 0..n {
        let others = |m: &[Vec<f64>]| {
            (0..n)
                .filter(|j| *j != i)
                .map(|j| m[i][j])
                .collect::<Vec<f64>>()
        };
        match spearman(&others(reference), &others(candidate)) {
            Ok(r) => per_material.push(Some(r)),
            Err(_) => {
                per_material.push(None);
                flagged.push(i);
            }
        }
    }
    let valid: Vec<f64> = per_material.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&valid);
    Ok(RankCorrelationReport {
        per_material,
        flagged,
        mean,
        std,
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    (m, s)
}

/// Markdown table with rows for ground-truth and estimated parameters and
/// columns for parameter distance and drape similarity.
pub fn comparison_table(
    gt_param: &RankCorrelationReport,
    gt_metric: &RankCorrelationReport,
    est_param: Option<&RankCorrelationReport>,
    est_metric: Option<&RankCorrelationReport>,
) -> String {
    let cell = |r: Option<&RankCorrelationReport>| match r {
        Some(r) => format!("{:.3} ± {:.2}", r.mean, r.std),
        None => "n/a".to_string(),
    };
    format!(
        "| | Parameter distance | Similarity metric |\n|---|---|---|\n| GT | {} | {} |\n| Estimated | {} | {} |\n",
        cell(Some(gt_param)),
        cell(Some(gt_metric)),
        cell(est_param),
        cell(est_metric)
    )
}
