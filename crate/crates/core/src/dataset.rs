//! Synthetic dataset generation (sample, simulate, sweep-render, augment,
//! persist), manifest I/O, parameter statistics and parameter sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentError, AugmentPolicy};
use crate::image::{DepthImage, GrayImage, ImageError};
use crate::material::{
    sample_params, spearman, MaterialError, MaterialParams, SamplerConfig, PARAM_COUNT, PARAM_NAMES,
};
use crate::render::{
    camera_sweep, default_light, render_depth, render_shaded, Camera, RenderError, SWEEP_DEGREES,
};
use crate::seed::{derive_seed, rng_for};
use crate::sim::{
    make_grid_mesh, solve_static, ClothMesh, SceneConfig, SceneKind, SimError, SimState,
    SolverConfig,
};

pub const VIEWS_PER_SCENE: usize = SWEEP_DEGREES.len();

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: u64,
    pub params: MaterialParams,
    pub scene: SceneKind,
    pub view_index: usize,
    pub augment_seed: u64,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub split: Split,
}

/// A sample whose simulation failed; none of its views are in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub sample_id: u64,
    pub params: MaterialParams,
    pub scene: SceneKind,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String, DatasetError> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DatasetError> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Parameters of each distinct sample, ordered by id.
    pub fn samples(&self) -> BTreeMap<u64, MaterialParams> {
        self.records
            .iter()
            .map(|r| (r.sample_id, r.params))
            .collect()
    }

    /// Checks view completeness, split consistency and, when `root` is
    /// given, that every image exists and decodes.
    pub fn validate(&self, root: Option<&Path>) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidManifest(m));
        let mut views: BTreeMap<(u64, SceneKind), BTreeSet<usize>> = BTreeMap::new();
        let mut splits: BTreeMap<u64, Split> = BTreeMap::new();
        for r in &self.records {
            if r.view_index >= VIEWS_PER_SCENE {
                return bad(format!(
                    "sample {} has view index {}",
                    r.sample_id, r.view_index
                ));
            }
            if !views
                .entry((r.sample_id, r.scene))
                .or_default()
                .insert(r.view_index)
            {
                return bad(format!(
                    "duplicate view {} for sample {} {}",
                    r.view_index, r.sample_id, r.scene
                ));
            }
            if *splits.entry(r.sample_id).or_insert(r.split) != r.split {
                return bad(format!("sample {} appears in both splits", r.sample_id));
            }
            if let Some(root) = root {
                GrayImage::read_png(&root.join(&r.path))?;
            }
        }
        for ((id, scene), v) in &views {
            if v.len() != VIEWS_PER_SCENE {
                return bad(format!("sample {id} {scene} has {} views", v.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub sampler: SamplerConfig,
    pub solver: SolverConfig,
    pub augment: AugmentPolicy,
    pub count: usize,
    pub val_fraction: f64,
    pub fabric_size: f64,
    pub mesh_edge: f64,
    pub image_size: usize,
    pub output_dir: PathBuf,
    /// Worker cap; `None` uses every core.
    pub jobs: Option<usize>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            solver: SolverConfig::default(),
            augment: AugmentPolicy::default(),
            count: 100,
            val_fraction: 0.1,
            fabric_size: 0.5,
            mesh_edge: 0.005,
            image_size: 256,
            output_dir: PathBuf::from("dataset"),
            jobs: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidConfig(m.to_string()));
        if self.count == 0 {
            return bad("count must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive");
        }
        if self.image_size < 8 {
            return bad("image_size must be at least 8");
        }
        self.sampler.validate()?;
        self.solver.validate()?;
        self.augment.validate()?;
        self.camera().validate()?;
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera {
            width: self.image_size,
            height: self.image_size,
            ..Camera::facing_panel(self.fabric_size)
        }
    }

    /// Samples assigned to validation: `round(count · val_fraction)` ids
    /// drawn without replacement.
    pub fn val_ids(&self) -> BTreeSet<u64> {
        let n_val = ((self.count as f64) * self.val_fraction).round() as usize;
        let mut ids: Vec<u64> = (0..self.count as u64).collect();
        ids.shuffle(&mut rng_for(self.sampler.seed, &[0x5B17]));
        ids.into_iter().take(n_val).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenOutput {
    pub manifest: DatasetManifest,
    pub quarantined: Vec<QuarantineRecord>,
    pub manifest_path: PathBuf,
}

pub fn run_with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, DatasetError> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| DatasetError::InvalidConfig(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn image_name(sample_id: u64, scene: SceneKind, view: usize) -> PathBuf {
    Path::new("images").join(format!("{sample_id:06}_{scene}_{view:02}.png"))
}

enum SampleOutcome {
    Done(Vec<ManifestRecord>),
    Failed(QuarantineRecord),
}

fn generate_sample(
    cfg: &GenConfig,
    mesh: &ClothMesh,
    id: u64,
    split: Split,
) -> Result<SampleOutcome, DatasetError> {
    let params = sample_params(&cfg.sampler, id)?;
    let base = cfg.camera();
    let mut records = Vec::with_capacity(2 * VIEWS_PER_SCENE);
    let mut pending = Vec::new();
    for scene in SceneKind::ALL {
        let mut scene_cfg = SceneConfig::new(scene);
        scene_cfg.fabric_size = cfg.fabric_size;
        let error = match solve_static(&scene_cfg, mesh, &params, &cfg.solver, None) {
            Ok((state, report)) if report.converged => {
                pending.push((scene, state));
                continue;
            }
            Ok((_, report)) => format!(
                "not converged after {} steps, residual {:.3e} N",
                report.steps, report.final_residual
            ),
            Err(e) => e.to_string(),
        };
        return Ok(SampleOutcome::Failed(QuarantineRecord {
            sample_id: id,
            params,
            scene,
            error,
        }));
    }
    for (scene, state) in pending {
        for (view, depth) in camera_sweep(&state, mesh, &base)?.into_iter().enumerate() {
            let augment_seed = derive_seed(id, &[0xDA7A, scene as u64, view as u64]);
            let img = augment(&depth, &cfg.augment, augment_seed)?;
            let path = image_name(id, scene, view);
            let cam = if view == VIEWS_PER_SCENE / 2 {
                base.clone()
            } else {
                base.inclined(SWEEP_DEGREES[view] as f64)
            };
            img.write(
                &cfg.output_dir.join(&path),
                Some(serde_json::to_value(&cam)?),
            )?;
            records.push(ManifestRecord {
                sample_id: id,
                params,
                scene,
                view_index: view,
                augment_seed,
                path,
                split,
            });
        }
    }
    Ok(SampleOutcome::Done(records))
}

/// Generates `cfg.count` samples into `cfg.output_dir`, writing
/// `manifest.jsonl` and `quarantine.jsonl`. Samples whose solve fails in
/// either scene are quarantined rather than aborting the run.
pub fn generate_dataset(cfg: &GenConfig) -> Result<GenOutput, DatasetError> {
    cfg.validate()?;
    std::fs::create_dir_all(cfg.output_dir.join("images"))?;
    let mesh = make_grid_mesh(cfg.fabric_size, cfg.mesh_edge, 0.2)?;
    let val = cfg.val_ids();
    let outcomes: Vec<SampleOutcome> = run_with_jobs(cfg.jobs, || {
        (0..cfg.count as u64)
            .into_par_iter()
            .map(|id| {
                let split = if val.contains(&id) {
                    Split::Val
                } else {
                    Split::Train
                };
                generate_sample(cfg, &mesh, id, split)
            })
            .collect::<Result<_, _>>()
    })??;

    let mut manifest = DatasetManifest::default();
    let mut quarantined = Vec::new();
    for o in outcomes {
        match o {
            SampleOutcome::Done(r) => manifest.records.extend(r),
            SampleOutcome::Failed(q) => quarantined.push(q),
        }
    }
    let manifest_path = cfg.output_dir.join("manifest.jsonl");
    manifest.write(&manifest_path)?;
    let mut q = std::fs::File::create(cfg.output_dir.join("quarantine.jsonl"))?;
    for r in &quarantined {
        writeln!(q, "{}", serde_json::to_string(r)?)?;
    }
    Ok(GenOutput {
        manifest,
        quarantined,
        manifest_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub names: Vec<String>,
    /// Spearman correlations; `None` where a parameter is constant.
    pub spearman: Vec<Vec<Option<f64>>>,
    pub constant: Vec<String>,
    /// Mean of the three pairwise correlations among the stretch stiffnesses.
    pub mean_stretch_r: Option<f64>,
    pub summary: Vec<ParamSummary>,
}

impl DatasetStats {
    pub fn to_markdown(&self) -> String {
        let mut s = format!("Samples: {}\n\n| |", self.samples);
        for n in &self.names {
            s.push_str(&format!(" {n} |"));
        }
        s.push_str(&format!("\n|---|{}\n", "---|".repeat(self.names.len())));
        for (n, row) in self.names.iter().zip(&self.spearman) {
            s.push_str(&format!("| {n} |"));
            for v in row {
                match v {
                    Some(v) => s.push_str(&format!(" {v:.2} |")),
                    None => s.push_str(" n/a |"),
                }
            }
            s.push('\n');
        }
        if let Some(r) = self.mean_stretch_r {
            s.push_str(&format!("\nMean pairwise stretch correlation: {r:.3}\n"));
        }
        s
    }
}

/// Spearman correlation matrix and per-parameter summaries over the
/// distinct samples of a manifest.
pub fn dataset_stats(manifest: &DatasetManifest) -> Result<DatasetStats, DatasetError> {
    let samples: Vec<[f64; PARAM_COUNT]> =
        manifest.samples().values().map(|p| p.to_array()).collect();
    param_stats(&samples)
}

pub fn param_stats(samples: &[[f64; PARAM_COUNT]]) -> Result<DatasetStats, DatasetError> {
    if samples.len() < 3 {
        return Err(DatasetError::InvalidManifest(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    let cols: Vec<Vec<f64>> = (0..PARAM_COUNT)
        .map(|i| samples.iter().map(|s| s[i]).collect())
        .collect();
    let constant: Vec<usize> = (0..PARAM_COUNT)
        .filter(|i| cols[*i].iter().all(|v| *v == cols[*i][0]))
        .collect();
    let mut m = vec![vec![None; PARAM_COUNT]; PARAM_COUNT];
    for i in 0..PARAM_COUNT {
        for j in i..PARAM_COUNT {
            if constant.contains(&i) || constant.contains(&j) {
                continue;
            }
            let r = if i == j {
                1.0
            } else {
                spearman(&cols[i], &cols[j])?
            };
            m[i][j] = Some(r);
            m[j][i] = Some(r);
        }
    }
    let stretch: Vec<f64> = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .filter_map(|(i, j)| m[*i][*j])
        .collect();
    let mean_stretch_r = (stretch.len() == 3).then(|| stretch.iter().sum::<f64>() / 3.0);
    let summary = cols
        .iter()
        .zip(PARAM_NAMES)
        .map(|(c, name)| {
            let mut s = c.clone();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            let median = if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            };
            ParamSummary {
                name: name.to_string(),
                min: s[0],
                max: s[n - 1],
                mean: s.iter().sum::<f64>() / n as f64,
                median,
            }
        })
        .collect();
    Ok(DatasetStats {
        samples: samples.len(),
        names: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        spearman: m,
        constant: constant
            .iter()
            .map(|i| PARAM_NAMES[*i].to_string())
            .collect(),
        mean_stretch_r,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub solver: SolverConfig,
    pub fabric_size: f64,
    pub mesh_edge: f64,
    pub image_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            fabric_size: 0.5,
            mesh_edge: 0.005,
            image_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub scene: SceneKind,
    pub converged: bool,
    pub steps: usize,
    /// Height of the lowest vertex (m).
    pub lowest_point: Option<f64>,
    /// Foreground pixels of the depth render.
    pub silhouette_px: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub param: String,
    pub values: Vec<f64>,
    /// Row-major over scenes (hanging, stretch) then values.
    pub cells: Vec<SweepCell>,
    /// Shaded renders tiled with one row per scene and one column per value;
    /// failed cells are left black.
    pub grid: GrayImage,
}

impl SweepReport {
    pub fn cell(&self, scene: SceneKind, index: usize) -> &SweepCell {
        let row = SceneKind::ALL.iter().position(|s| *s == scene).unwrap();
        &self.cells[row * self.values.len() + index]
    }

    pub fn lowest_points(&self, scene: SceneKind) -> Vec<Option<f64>> {
        (0..self.values.len())
            .map(|i| self.cell(scene, i).lowest_point)
            .collect()
    }
}

/// Solves and renders both scenes for each value of one parameter (or the
/// `kStretch` / `kBending` groups), all other parameters taken from `fixed`. Solver failures are reported per
/// cell.
pub fn sweep_report(
    param: &str,
    values: &[f64],
    fixed: &MaterialParams,
    cfg: &SweepConfig,
) -> Result<SweepReport, DatasetError> {
    if values.is_empty() || values.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(DatasetError::InvalidConfig(
            "sweep values must be non-empty and sorted".into(),
        ));
    }
    let materials: Vec<MaterialParams> = values
        .iter()
        .map(|v| fixed.with_param(param, *v))
        .collect::<Result<_, _>>()?;
    let mesh = make_grid_mesh(cfg.fabric_size, cfg.mesh_edge, fixed.density)?;
    let cam = Camera {
        width: cfg.image_size,
        height: cfg.image_size,
        ..Camera::facing_panel(cfg.fabric_size)
    };
    cam.validate()?;
    let jobs: Vec<(SceneKind, usize)> = SceneKind::ALL
        .iter()
        .flat_map(|s| (0..values.len()).map(move |i| (*s, i)))
        .collect();
    let results: Vec<(SweepCell, Option<GrayImage>)> = jobs
        .par_iter()
        .map(|(scene, i)| sweep_cell(*scene, values[*i], &materials[*i], &mesh, &cam, cfg))
        .collect::<Result<_, _>>()?;

    let (w, h) = (cam.width, cam.height);
    let mut grid = GrayImage::filled(w * values.len(), h * SceneKind::ALL.len(), 0.0);
    for (k, (_, img)) in results.iter().enumerate() {
        if let Some(img) = img {
            let (row, col) = (k / values.len(), k % values.len());
            for y in 0..h {
                for x in 0..w {
                    grid.set(col * w + x, row * h + y, img.get(x, y));
                }
            }
        }
    }
    Ok(SweepReport {
        param: param.to_string(),
        values: values.to_vec(),
        cells: results.into_iter().map(|(c, _)| c).collect(),
        grid,
    })
}

fn sweep_cell(
    scene: SceneKind,
    value: f64,
    p: &MaterialParams,
    mesh: &ClothMesh,
    cam: &Camera,
    cfg: &SweepConfig,
) -> Result<(SweepCell, Option<GrayImage>), DatasetError> {
    let mut scene_cfg = SceneConfig::new(scene);
    scene_cfg.fabric_size = cfg.fabric_size;
    let mut cell = SweepCell {
        value,
        scene,
        converged: false,
        steps: 0,
        lowest_point: None,
        silhouette_px: None,
        error: None,
    };
    let state: SimState = match solve_static(&scene_cfg, mesh, p, &cfg.solver, None) {
        Ok((state, report)) => {
            cell.converged = report.converged;
            cell.steps = report.steps;
            if !report.converged {
                cell.error = Some(format!(
                    "not converged, residual {:.3e} N",
                    report.final_residual
                ));
                return Ok((cell, None));
            }
            state
        }
        Err(e) => {
            cell.error = Some(e.to_string());
            return Ok((cell, None));
        }
    };
    cell.lowest_point = Some(state.lowest_height());
    let depth: DepthImage = render_depth(&state, mesh, cam)?;
    cell.silhouette_px = Some(depth.image.data.iter().filter(|v| **v < 1.0).count());
    let shaded = render_shaded(&state, mesh, cam, &default_light())?;
    Ok((cell, Some(shaded)))
}
