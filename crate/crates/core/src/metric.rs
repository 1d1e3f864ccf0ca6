//! Image-based drape similarity.
//!
//! A material is simulated `N` times per scene with independently jittered
//! initial conditions and rendered with a fixed camera and light. The scene
//! distance between two materials is the mean inner image distance over all
//! `N²` cross pairs, and the drape distance averages the hanging and stretch
//! scene distances.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{GrayImage, ImageError};
use crate::material::MaterialParams;
use crate::render::{default_light, render_shaded, Camera, RenderError};
use crate::seed::derive_seed;
use crate::sim::{
    make_grid_mesh, solve_static, ClothMesh, JitterConfig, SceneConfig, SceneKind, SimError,
    SolverConfig, Vec3,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation with jitter seed {seed} ({scene}) failed: {source}")]
    Simulation {
        seed: u64,
        scene: SceneKind,
        source: SimError,
    },
    #[error(
        "simulation with jitter seed {seed} ({scene}) did not converge (residual {residual:.3e} N)"
    )]
    NotConverged {
        seed: u64,
        scene: SceneKind,
        residual: f64,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("no external distance for pair {0}")]
    MissingExternal(String),
    #[error("external metric: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMetric {
    /// Mean absolute difference.
    Mad,
    /// `1 - SSIM`.
    Ssim,
    /// Distances supplied by an external program through `pairs.json` /
    /// `distances.csv`.
    External,
}

impl std::str::FromStr for InnerMetric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mad" => Ok(InnerMetric::Mad),
            "ssim" => Ok(InnerMetric::Ssim),
            "external" => Ok(InnerMetric::External),
            other => Err(MetricError::InvalidConfig(format!(
                "unknown inner metric {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    /// Directory receiving `pairs.json`, the images and `distances.csv`.
    pub workdir: PathBuf,
    /// Program and arguments; the paths of `pairs.json` and `distances.csv`
    /// are appended. Without a command, `distances.csv` must already exist.
    #[serde(default)]
    pub command: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Simulations per material and scene.
    pub replicates: usize,
    /// Master seed for the per-replicate jitter seeds.
    pub seed: u64,
    /// Jitter magnitudes; its `seed` field is ignored.
    pub jitter: JitterConfig,
    pub inner: InnerMetric,
    pub external: Option<ExternalConfig>,
    pub fabric_size: f64,
    pub mesh_edge: f64,
    pub solver: SolverConfig,
    pub image_size: usize,
    pub light: [f64; 3],
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            replicates: 5,
            seed: 0,
            jitter: JitterConfig::default(),
            inner: InnerMetric::Ssim,
            external: None,
            fabric_size: 0.5,
            mesh_edge: 0.005,
            solver: SolverConfig::default(),
            image_size: 256,
            light: default_light().into(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: String| Err(MetricError::InvalidConfig(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.inner == InnerMetric::External && self.external.is_none() {
            return bad("external inner metric needs an `external` section".into());
        }
        if self.image_size < 11 {
            return bad("images must be at least 11 pixels wide for SSIM".into());
        }
        if !(self.jitter.impulse_sigma >= 0.0 && self.jitter.pin_radius >= 0.0) {
            return bad("jitter magnitudes must be non-negative".into());
        }
        self.solver
            .validate()
            .map_err(|e| MetricError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera {
            width: self.image_size,
            height: self.image_size,
            ..Camera::facing_panel(self.fabric_size)
        }
    }
}

/// Which argument of a distance a simulation belongs to. Self-distances
/// compare side A against side B, so they use independent jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    fn tag(self) -> u64 {
        match self {
            Side::A => 0xA,
            Side::B => 0xB,
        }
    }
}

/// Jitter seed of replicate `rep` on `side`.
pub fn jitter_seed(master: u64, side: Side, rep: usize) -> u64 {
    derive_seed(master, &[0x7E7, side.tag(), rep as u64])
}

/// Stable identifier of a parameter vector.
pub fn params_key(p: &MaterialParams) -> u64 {
    let bits: Vec<u64> = p.to_array().iter().map(|v| v.to_bits()).collect();
    derive_seed(0x9A7A, &bits)
}

/// A rendered replicate together with a stable name.
#[derive(Debug, Clone)]
pub struct Render {
    pub key: String,
    pub image: Arc<GrayImage>,
}

pub struct ImagePair<'a> {
    pub id: String,
    pub a: &'a Render,
    pub b: &'a Render,
}

/// Distance between rendered images.
pub trait InnerDistance: Sync {
    fn distances(&self, pairs: &[ImagePair<'_>]) -> Result<Vec<f64>, MetricError>;
}

pub struct MeanAbsDiff;

impl InnerDistance for MeanAbsDiff {
    fn distances(&self, pairs: &[ImagePair<'_>]) -> Result<Vec<f64>, MetricError> {
        pairs
            .par_iter()
            .map(|p| mean_abs_diff(&p.a.image, &p.b.image))
            .collect()
    }
}

pub struct SsimDistance;

impl InnerDistance for SsimDistance {
    fn distances(&self, pairs: &[ImagePair<'_>]) -> Result<Vec<f64>, MetricError> {
        pairs
            .par_iter()
            .map(|p| Ok(1.0 - ssim(&p.a.image, &p.b.image)?))
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub image_a_path: PathBuf,
    pub image_b_path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub pair_id: String,
    pub distance: f64,
}

/// File-based protocol: writes the images and `pairs.json`, optionally runs
/// the configured program, then reads `distances.csv`.
pub struct ExternalDistance(pub ExternalConfig);

impl ExternalDistance {
    pub fn pairs_path(&self) -> PathBuf {
        self.0.workdir.join("pairs.json")
    }

    pub fn distances_path(&self) -> PathBuf {
        self.0.workdir.join("distances.csv")
    }
}

impl InnerDistance for ExternalDistance {
    fn distances(&self, pairs: &[ImagePair<'_>]) -> Result<Vec<f64>, MetricError> {
        let dir = &self.0.workdir;
        let img_dir = dir.join("images");
        std::fs::create_dir_all(&img_dir)?;
        let mut records = Vec::with_capacity(pairs.len());
        for p in pairs {
            let mut paths = [PathBuf::new(), PathBuf::new()];
            for (slot, r) in paths.iter_mut().zip([p.a, p.b]) {
                *slot = img_dir.join(format!("{}.png", r.key));
                if !slot.exists() {
                    r.image.write_png(slot)?;
                }
            }
            let [image_a_path, image_b_path] = paths;
            records.push(PairRecord {
                pair_id: p.id.clone(),
                image_a_path,
                image_b_path,
            });
        }
        std::fs::write(
            self.pairs_path(),
            serde_json::to_string_pretty(&records).map_err(ImageError::from)?,
        )?;
        if let Some(cmd) = &self.0.command {
            let (prog, args) = cmd
                .split_first()
                .ok_or_else(|| MetricError::External("empty command".into()))?;
            let status = Command::new(prog)
                .args(args)
                .arg(self.pairs_path())
                .arg(self.distances_path())
                .status()?;
            if !status.success() {
                return Err(MetricError::External(format!(
                    "{prog} exited with {status}"
                )));
            }
        }
        let table = read_distances_csv(&self.distances_path())?;
        pairs
            .iter()
            .map(|p| {
                table
                    .get(&p.id)
                    .copied()
                    .ok_or_else(|| MetricError::MissingExternal(p.id.clone()))
            })
            .collect()
    }
}

pub fn read_distances_csv(path: &Path) -> Result<HashMap<String, f64>, MetricError> {
    if !path.exists() {
        return Err(MetricError::External(format!(
            "{} not found",
            path.display()
        )));
    }
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| MetricError::External(e.to_string()))?;
    let mut out = HashMap::new();
    for rec in reader.deserialize::<DistanceRecord>() {
        let rec = rec.map_err(|e| MetricError::External(e.to_string()))?;
        if !(rec.distance.is_finite() && rec.distance >= 0.0) {
            return Err(MetricError::External(format!(
                "invalid distance for {}",
                rec.pair_id
            )));
        }
        out.insert(rec.pair_id, rec.distance);
    }
    Ok(out)
}

pub fn write_distances_csv(path: &Path, rows: &[DistanceRecord]) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| MetricError::External(e.to_string()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| MetricError::External(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn mean_abs_diff(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    a.same_size(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5),
/// with `k1 = 0.01`, `k2 = 0.03` and dynamic range 1.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    a.same_size(b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::InvalidConfig(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images"
        )));
    }
    let half = (SSIM_WINDOW / 2) as f64;
    let mut g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);

    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let filter = |f: &dyn Fn(usize) -> f64| {
        let mut tmp = vec![0.0; ow * h];
        for y in 0..h {
            for x in 0..ow {
                tmp[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * f(y * w + x + k)).sum();
            }
        }
        let mut out = vec![0.0; ow * oh];
        for y in 0..oh {
            for x in 0..ow {
                out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * tmp[(y + k) * ow + x]).sum();
            }
        }
        out
    };
    let (da, db) = (&a.data, &b.data);
    let mu_a = filter(&|i| da[i]);
    let mu_b = filter(&|i| db[i]);
    let aa = filter(&|i| da[i] * da[i]);
    let bb = filter(&|i| db[i] * db[i]);
    let ab = filter(&|i| da[i] * db[i]);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let sum: f64 = (0..ow * oh)
        .map(|k| {
            let (ma, mb) = (mu_a[k], mu_b[k]);
            let (va, vb, cov) = (aa[k] - ma * ma, bb[k] - mb * mb, ab[k] - ma * mb);
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(sum / (ow * oh) as f64)
}

/// Mean of the `N²` inner distances of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDistance {
    pub distance: f64,
    /// Row-major `inner[i * N + j] = IM(a_i, b_j)`.
    pub inner: Vec<f64>,
}

impl SceneDistance {
    pub fn from_inner(inner: Vec<f64>) -> Self {
        let distance = inner.iter().sum::<f64>() / inner.len() as f64;
        Self { distance, inner }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub d_hanging: f64,
    pub d_stretch: f64,
    pub d: f64,
    pub inner_hanging: Vec<f64>,
    pub inner_stretch: Vec<f64>,
}

impl DistanceReport {
    pub fn from_scenes(hanging: SceneDistance, stretch: SceneDistance) -> Self {
        Self {
            d_hanging: hanging.distance,
            d_stretch: stretch.distance,
            d: (hanging.distance + stretch.distance) / 2.0,
            inner_hanging: hanging.inner,
            inner_stretch: stretch.inner,
        }
    }
}

type SimKey = (u64, SceneKind, Side, usize);

/// Simulates, renders and compares materials, caching renders per
/// (material, scene, side, replicate).
pub struct DrapeMetric {
    cfg: MetricConfig,
    mesh: ClothMesh,
    inner: Box<dyn InnerDistance>,
    cache: Mutex<HashMap<SimKey, Render>>,
}

impl DrapeMetric {
    pub fn new(cfg: MetricConfig) -> Result<Self, MetricError> {
        let inner: Box<dyn InnerDistance> = match cfg.inner {
            InnerMetric::Mad => Box::new(MeanAbsDiff),
            InnerMetric::Ssim => Box::new(SsimDistance),
            InnerMetric::External => {
                Box::new(ExternalDistance(cfg.external.clone().ok_or_else(|| {
                    MetricError::InvalidConfig(
                        "external inner metric needs an `external` section".into(),
                    )
                })?))
            }
        };
        Self::with_inner(cfg, inner)
    }

    pub fn with_inner(
        cfg: MetricConfig,
        inner: Box<dyn InnerDistance>,
    ) -> Result<Self, MetricError> {
        cfg.validate()?;
        let mesh = make_grid_mesh(cfg.fabric_size, cfg.mesh_edge, 0.2)
            .map_err(|e| MetricError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            cfg,
            mesh,
            inner,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &MetricConfig {
        &self.cfg
    }

    pub fn mesh(&self) -> &ClothMesh {
        &self.mesh
    }

    /// Renders of the `N` replicates of `p` on `side`, simulated in parallel.
    pub fn renders(
        &self,
        p: &MaterialParams,
        scene: SceneKind,
        side: Side,
    ) -> Result<Vec<Render>, MetricError> {
        let pk = params_key(p);
        (0..self.cfg.replicates)
            .into_par_iter()
            .map(|rep| {
                let key = (pk, scene, side, rep);
                if let Some(r) = self.cache.lock().unwrap().get(&key) {
                    return Ok(r.clone());
                }
                let r = self.simulate_render(p, scene, side, rep)?;
                self.cache.lock().unwrap().insert(key, r.clone());
                Ok(r)
            })
            .collect()
    }

    fn simulate_render(
        &self,
        p: &MaterialParams,
        scene: SceneKind,
        side: Side,
        rep: usize,
    ) -> Result<Render, MetricError> {
        let seed = jitter_seed(self.cfg.seed, side, rep);
        let mut scene_cfg = SceneConfig::new(scene);
        scene_cfg.fabric_size = self.cfg.fabric_size;
        let jitter = JitterConfig {
            seed,
            ..self.cfg.jitter
        };
        let (state, report) =
            solve_static(&scene_cfg, &self.mesh, p, &self.cfg.solver, Some(&jitter)).map_err(
                |source| MetricError::Simulation {
                    seed,
                    scene,
                    source,
                },
            )?;
        if !report.converged {
            return Err(MetricError::NotConverged {
                seed,
                scene,
                residual: report.final_residual,
            });
        }
        let image = render_shaded(
            &state,
            &self.mesh,
            &self.cfg.camera(),
            &Vec3::from(self.cfg.light).normalize(),
        )?;
        let side_tag = match side {
            Side::A => 'a',
            Side::B => 'b',
        };
        Ok(Render {
            key: format!("{:016x}-{}-{}{}", params_key(p), scene, side_tag, rep),
            image: Arc::new(image),
        })
    }

    fn scene_pairs<'r>(ra: &'r [Render], rb: &'r [Render]) -> Vec<ImagePair<'r>> {
        ra.iter()
            .flat_map(|a| {
                rb.iter().map(move |b| ImagePair {
                    id: format!("{}~{}", a.key, b.key),
                    a,
                    b,
                })
            })
            .collect()
    }

    /// Mean inner distance over the `N²` cross pairs of one scene.
    pub fn scene_distance(
        &self,
        pa: &MaterialParams,
        pb: &MaterialParams,
        scene: SceneKind,
    ) -> Result<SceneDistance, MetricError> {
        let ra = self.renders(pa, scene, Side::A)?;
        let rb = self.renders(pb, scene, Side::B)?;
        Ok(SceneDistance::from_inner(
            self.inner.distances(&Self::scene_pairs(&ra, &rb))?,
        ))
    }

    pub fn drape_distance(
        &self,
        pa: &MaterialParams,
        pb: &MaterialParams,
    ) -> Result<DistanceReport, MetricError> {
        let h = self.scene_distance(pa, pb, SceneKind::Hanging)?;
        let s = self.scene_distance(pa, pb, SceneKind::Stretch)?;
        Ok(DistanceReport::from_scenes(h, s))
    }

    /// All-pairs drape distances, `m[i][j] = d(P_i, P_j)`, evaluated with a
    /// single batch of inner distances.
    pub fn distance_matrix(
        &self,
        materials: &[MaterialParams],
    ) -> Result<Vec<Vec<DistanceReport>>, MetricError> {
        let mut renders: HashMap<(usize, SceneKind, Side), Vec<Render>> = HashMap::new();
        for (i, p) in materials.iter().enumerate() {
            for scene in SceneKind::ALL {
                for side in [Side::A, Side::B] {
                    renders.insert((i, scene, side), self.renders(p, scene, side)?);
                }
            }
        }
        let n = materials.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for scene in SceneKind::ALL {
                    pairs.extend(Self::scene_pairs(
                        &renders[&(i, scene, Side::A)],
                        &renders[&(j, scene, Side::B)],
                    ));
                }
            }
        }
        let d = self.inner.distances(&pairs)?;
        let per_scene = self.cfg.replicates * self.cfg.replicates;
        let mut chunks = d.chunks(per_scene);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                let h = SceneDistance::from_inner(chunks.next().unwrap().to_vec());
                let s = SceneDistance::from_inner(chunks.next().unwrap().to_vec());
                row.push(DistanceReport::from_scenes(h, s));
            }
            out.push(row);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfDistanceReport {
    pub distances: Vec<Vec<f64>>,
    /// `row_pass[i]`: the self-distance of material `i` is strictly below
    /// every other entry of its row.
    pub row_pass: Vec<bool>,
    pub pass: bool,
}

/// Checks `d(P_a, P_a) < d(P_a, P_b)` for every `b ≠ a` on a square matrix.
pub fn check_self_distance(distances: Vec<Vec<f64>>) -> SelfDistanceReport {
    let row_pass: Vec<bool> = distances
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().all(|(j, d)| j == i || row[i] < *d))
        .collect();
    let pass = row_pass.iter().all(|p| *p);
    SelfDistanceReport {
        distances,
        row_pass,
        pass,
    }
}

pub fn validate_self_distance(
    metric: &DrapeMetric,
    materials: &[MaterialParams],
) -> Result<SelfDistanceReport, MetricError> {
    if materials.is_empty() {
        return Err(MetricError::InvalidConfig(
            "need at least one material".into(),
        ));
    }
    let m = metric.distance_matrix(materials)?;
    Ok(check_self_distance(
        m.iter()
            .map(|row| row.iter().map(|r| r.d).collect())
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub index: usize,
    pub distance: f64,
}

/// Sorts indices ascending by distance; ties keep the lower index first.
pub fn rank_distances(distances: &[f64]) -> Vec<Ranked> {
    let mut out: Vec<Ranked> = distances
        .iter()
        .enumerate()
        .map(|(index, d)| Ranked {
            index,
            distance: *d,
        })
        .collect();
    out.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    });
    out
}

/// Candidates ordered by drape distance to `reference`.
pub fn rank_by_similarity(
    metric: &DrapeMetric,
    reference: &MaterialParams,
    candidates: &[MaterialParams],
) -> Result<Vec<Ranked>, MetricError> {
    if candidates.is_empty() {
        return Err(MetricError::InvalidConfig(
            "need at least one candidate".into(),
        ));
    }
    let d: Vec<f64> = candidates
        .iter()
        .map(|c| metric.drape_distance(reference, c).map(|r| r.d))
        .collect::<Result<_, _>>()?;
    Ok(rank_distances(&d))
}

/// Z-scores with the sample standard deviation; all zeros for constant input.
pub fn z_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.len() < 2 {
        return vec![0.0; values.len()];
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mad_of_constants() {
        let a = GrayImage::filled(5, 4, 0.2);
        let b = GrayImage::filled(5, 4, 0.7);
        assert!((mean_abs_diff(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!(mean_abs_diff(&a, &GrayImage::filled(4, 4, 0.0)).is_err());
    }

    #[test]
    fn ssim_identity_and_size_checks() {
        let data = (0..400).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
        let a = GrayImage::from_data(20, 20, data).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&GrayImage::filled(8, 8, 0.0), &GrayImage::filled(8, 8, 0.0)).is_err());
    }

    #[test]
    fn self_distance_check() {
        let r = check_self_distance(vec![vec![0.1, 0.3], vec![0.12, 0.15]]);
        assert_eq!(r.row_pass, vec![true, false]);
        assert!(!r.pass);
        assert!(check_self_distance(vec![vec![0.4]]).pass);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let r = rank_distances(&[0.3, 0.1, 0.3, 0.0]);
        assert_eq!(
            r.iter().map(|x| x.index).collect::<Vec<_>>(),
            vec![3, 1, 0, 2]
        );
    }

    #[test]
    fn z_scores_sample_std() {
        let z = z_scores(&[1.0, 2.0, 3.0]);
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        assert_eq!(z_scores(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn jitter_seeds_differ_by_side_and_replicate() {
        assert_ne!(jitter_seed(1, Side::A, 0), jitter_seed(1, Side::B, 0));
        assert_ne!(jitter_seed(1, Side::A, 0), jitter_seed(1, Side::A, 1));
        assert_eq!(jitter_seed(1, Side::A, 2), jitter_seed(1, Side::A, 2));
    }

    #[test]
    fn external_config_required() {
        let cfg = MetricConfig {
            inner: InnerMetric::External,
            ..Default::default()
        };
        assert!(matches!(
            DrapeMetric::new(cfg),
            Err(MetricError::InvalidConfig(_))
        ));
        assert!("lpips".parse::<InnerMetric>().is_err());
    }
}
