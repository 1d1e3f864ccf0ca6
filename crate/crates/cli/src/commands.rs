use std::path::PathBuf;

use drape_core::augment::{augment as apply_policy, equalize_depth, AugmentPolicy};
use drape_core::dataset::{
    dataset_stats, generate_dataset, sweep_report, DatasetManifest, DatasetStats, GenConfig,
    SweepConfig,
};
use drape_core::embed::{
    read_triplets_csv, scatter_svg, triplet_agreement, tste_embed, TsteOptions,
};
use drape_core::image::DepthImage;
use drape_core::material::{MaterialParams, PARAM_COUNT};
use drape_core::metric::{
    rank_by_similarity, validate_self_distance, z_scores, DrapeMetric, InnerMetric, MetricConfig,
};
use drape_core::render::{
    default_light, render_depth_triangles, render_shaded_triangles, Camera, SWEEP_DEGREES,
};
use drape_core::sim::{
    make_grid_mesh, read_obj, solve_static, write_obj, JitterConfig, SceneConfig, SceneKind,
    SolverConfig,
};
use serde::{Deserialize, Serialize};

use crate::util::{
    config_err, read_json, read_json_or_default, read_materials, read_params, runtime_err,
    CliError, RunContext,
};
use crate::{
    AugmentArgs, DistanceArgs, EmbedArgs, GenDatasetArgs, MetricArgs, RankArgs, RenderArgs,
    SimulateArgs, StatsArgs, SweepArgs, ValidateArgs,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub fabric_size: f64,
    pub mesh_edge: f64,
    pub solver: SolverConfig,
    pub jitter: Option<JitterConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            fabric_size: 0.5,
            mesh_edge: 0.005,
            solver: SolverConfig::default(),
            jitter: None,
        }
    }
}

pub fn simulate(a: &SimulateArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let scene: SceneKind = a.scene.parse().map_err(config_err)?;
    let params = read_params(&a.params)?;
    let mut cfg: SimulateConfig = read_json_or_default(a.config.as_ref())?;
    if let Some(e) = a.mesh_edge {
        cfg.mesh_edge = e;
    }
    if a.jitter && cfg.jitter.is_none() {
        cfg.jitter = Some(JitterConfig::default());
    }
    if let (Some(j), Some(seed)) = (cfg.jitter.as_mut(), ctx.seed) {
        j.seed = seed;
    }
    cfg.solver.validate().map_err(config_err)?;
    ctx.set_config(&serde_json::json!({ "scene": scene, "params": params, "config": cfg }))?;

    let mesh =
        make_grid_mesh(cfg.fabric_size, cfg.mesh_edge, params.density).map_err(config_err)?;
    let mut scene_cfg = SceneConfig::new(scene);
    scene_cfg.fabric_size = cfg.fabric_size;
    let (state, mut report) =
        solve_static(&scene_cfg, &mesh, &params, &cfg.solver, cfg.jitter.as_ref())
            .map_err(runtime_err)?;
    let mut obj = Vec::new();
    write_obj(&mut obj, &mesh, &state.positions).map_err(runtime_err)?;
    ctx.write_text(
        &format!("{scene}.obj"),
        &String::from_utf8(obj).map_err(runtime_err)?,
    )?;
    report.wall_time_s = (report.wall_time_s * 1e3).round() / 1e3;
    ctx.write_json(&format!("{scene}_convergence.json"), &report)?;
    if !report.converged {
        return Err(CliError::Runtime(format!(
            "{scene} did not converge in {} steps (residual {:.3e} N)",
            report.steps, report.final_residual
        )));
    }
    println!(
        "{scene}: converged in {} steps, residual {:.3e} N",
        report.steps, report.final_residual
    );
    Ok(())
}

pub fn render(a: &RenderArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.mesh)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.mesh.display())))?;
    let (positions, tris) =
        read_obj(&text).map_err(|e| CliError::Config(format!("{}: {e}", a.mesh.display())))?;
    let mut cam: Camera = match &a.camera {
        Some(p) => read_json(p)?,
        None => Camera::facing_panel(a.fabric_size),
    };
    if let Some(s) = a.size {
        cam.width = s;
        cam.height = s;
    }
    cam.validate().map_err(config_err)?;
    ctx.set_config(
        &serde_json::json!({ "mesh": a.mesh, "camera": cam, "mode": a.mode, "sweep": a.sweep }),
    )?;
    match (a.mode.as_str(), a.sweep) {
        ("depth", false) => {
            let d = render_depth_triangles(&positions, &tris, &cam).map_err(runtime_err)?;
            write_depth(ctx, "depth.png", &d, &cam)
        }
        ("depth", true) => {
            for (k, deg) in SWEEP_DEGREES.iter().enumerate() {
                let c = if *deg == 0 {
                    cam.clone()
                } else {
                    cam.inclined(*deg as f64)
                };
                let d = render_depth_triangles(&positions, &tris, &c).map_err(runtime_err)?;
                write_depth(ctx, &format!("sweep_{k:02}.png"), &d, &c)?;
            }
            Ok(())
        }
        ("shaded", false) => {
            let g = render_shaded_triangles(&positions, &tris, &cam, &default_light())
                .map_err(runtime_err)?;
            ctx.write_png("shaded.png", &g)
        }
        ("shaded", true) => Err(CliError::Config("--sweep renders depth maps only".into())),
        (m, _) => Err(CliError::Config(format!(
            "unknown render mode {m:?} (depth or shaded)"
        ))),
    }
}

fn write_depth(
    ctx: &mut RunContext,
    name: &str,
    d: &DepthImage,
    cam: &Camera,
) -> Result<(), CliError> {
    let p = ctx.path(name);
    ctx.path(&format!("{name}.json"));
    d.write(&p, Some(serde_json::to_value(cam).map_err(runtime_err)?))
        .map_err(runtime_err)
}

pub fn default_fixed() -> MaterialParams {
    MaterialParams::uniform(300.0, 1e-5, 0.2)
}

pub fn sweep(a: &SweepArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let fixed = a
        .params
        .as_ref()
        .map(|p| read_params(p))
        .transpose()?
        .unwrap_or_else(default_fixed);
    let mut cfg: SweepConfig = read_json_or_default(a.config.as_ref())?;
    if let Some(e) = a.mesh_edge {
        cfg.mesh_edge = e;
    }
    ctx.set_config(
        &serde_json::json!({ "param": a.param, "values": a.values, "fixed": fixed, "config": cfg }),
    )?;
    let r = sweep_report(&a.param, &a.values, &fixed, &cfg).map_err(|e| match e {
        drape_core::dataset::DatasetError::InvalidConfig(_)
        | drape_core::dataset::DatasetError::Material(_) => config_err(e),
        other => runtime_err(other),
    })?;
    ctx.write_png("sweep_grid.png", &r.grid)?;
    ctx.write_json(
        "sweep.json",
        &serde_json::json!({ "param": r.param, "values": r.values, "cells": r.cells }),
    )?;
    ctx.write_text("sweep.md", &sweep_markdown(&r))?;
    let failed = r.cells.iter().filter(|c| c.error.is_some()).count();
    println!("{} cells, {failed} failed", r.cells.len());
    Ok(())
}

pub fn sweep_markdown(r: &drape_core::dataset::SweepReport) -> String {
    let mut s = format!("| {} | scene | converged | steps | lowest point (m) | silhouette (px) |\n|---|---|---|---|---|---|\n", r.param);
    for c in &r.cells {
        let low = c
            .lowest_point
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into());
        let sil = c
            .silhouette_px
            .map(|v| v.to_string())
            .unwrap_or_else(|| "n/a".into());
        s.push_str(&format!(
            "| {:e} | {} | {} | {} | {low} | {sil} |\n",
            c.value, c.scene, c.converged, c.steps
        ));
    }
    s
}

pub fn augment(a: &AugmentArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let mut policy: AugmentPolicy = read_json_or_default(a.policy.as_ref())?;
    if let Some(seed) = ctx.seed {
        policy.seed = seed;
    }
    policy.validate().map_err(config_err)?;
    ctx.set_config(&serde_json::json!({ "policy": policy, "inputs": a.input, "sample_seed": a.sample_seed, "equalize": a.equalize }))?;
    for (i, input) in a.input.iter().enumerate() {
        let img = DepthImage::read(input)
            .map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
        let mut out = apply_policy(&img, &policy, a.sample_seed + i as u64).map_err(runtime_err)?;
        if a.equalize {
            out = equalize_depth(&out);
        }
        let stem = input
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{i}.png"));
        let name = format!("aug_{stem}");
        let p = ctx.path(&name);
        ctx.path(&format!("{name}.json"));
        out.write(&p, None).map_err(runtime_err)?;
    }
    Ok(())
}

pub fn gen_dataset(a: &GenDatasetArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let mut cfg: GenConfig = read_json_or_default(a.config.as_ref())?;
    cfg.output_dir = ctx.out.clone();
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(e) = a.mesh_edge {
        cfg.mesh_edge = e;
    }
    if let Some(seed) = ctx.seed {
        cfg.sampler.seed = seed;
        cfg.augment.seed = seed;
    }
    cfg.jobs = ctx.jobs;
    cfg.validate().map_err(config_err)?;
    let mut hashed = cfg.clone();
    hashed.output_dir = PathBuf::new();
    hashed.jobs = None;
    ctx.set_config(&hashed)?;
    let out = generate_dataset(&cfg).map_err(runtime_err)?;
    ctx.path("manifest.jsonl");
    ctx.path("quarantine.jsonl");
    ctx.path("images");
    println!(
        "{} records from {} samples, {} quarantined",
        out.manifest.records.len(),
        out.manifest.samples().len(),
        out.quarantined.len()
    );
    Ok(())
}

/// Heatmap of a correlation matrix: r = -1 black, r = 1 white, undefined
/// entries mid-gray with a dark border.
pub fn correlation_heatmap(stats: &DatasetStats, cell: usize) -> drape_core::image::GrayImage {
    let n = PARAM_COUNT;
    let mut img = drape_core::image::GrayImage::filled(n * cell, n * cell, 0.5);
    for i in 0..n {
        for j in 0..n {
            let v = stats.spearman[i][j].map(|r| 0.5 * (r + 1.0));
            for y in 0..cell {
                for x in 0..cell {
                    let border = x == 0 || y == 0;
                    let value = match v {
                        Some(v) if !border => v,
                        Some(_) => 0.5,
                        None => 0.35,
                    };
                    img.set(j * cell + x, i * cell + y, value);
                }
            }
        }
    }
    img
}

pub fn stats(a: &StatsArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let manifest = DatasetManifest::read(&a.manifest)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.manifest.display())))?;
    ctx.set_config(&serde_json::json!({ "manifest": a.manifest }))?;
    let s = dataset_stats(&manifest).map_err(config_err)?;
    ctx.write_json("stats.json", &s)?;
    ctx.write_text("stats.md", &s.to_markdown())?;
    ctx.write_png("spearman.png", &correlation_heatmap(&s, 24))?;
    if let Some(r) = s.mean_stretch_r {
        println!("{} samples, mean stretch correlation {r:.3}", s.samples);
    }
    Ok(())
}

pub fn metric_config(a: &MetricArgs, seed: Option<u64>) -> Result<MetricConfig, CliError> {
    let mut cfg: MetricConfig = read_json_or_default(a.config.as_ref())?;
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(e) = a.mesh_edge {
        cfg.mesh_edge = e;
    }
    if let Some(s) = a.image_size {
        cfg.image_size = s;
    }
    if let Some(i) = &a.inner {
        cfg.inner = i.parse::<InnerMetric>().map_err(config_err)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

pub fn distance(a: &DistanceArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let (pa, pb) = (read_params(&a.a)?, read_params(&a.b)?);
    let cfg = metric_config(&a.metric, ctx.seed)?;
    ctx.set_config(&serde_json::json!({ "a": pa, "b": pb, "metric": cfg }))?;
    let m = DrapeMetric::new(cfg).map_err(config_err)?;
    let r = m.drape_distance(&pa, &pb).map_err(runtime_err)?;
    ctx.write_json("distance.json", &r)?;
    println!(
        "d = {:.6} (hanging {:.6}, stretch {:.6})",
        r.d, r.d_hanging, r.d_stretch
    );
    Ok(())
}

pub fn rank(a: &RankArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let reference = read_params(&a.reference)?;
    let (names, candidates) = read_materials(&a.candidates)?;
    let cfg = metric_config(&a.metric, ctx.seed)?;
    ctx.set_config(
        &serde_json::json!({ "reference": reference, "candidates": candidates, "metric": cfg }),
    )?;
    let m = DrapeMetric::new(cfg).map_err(config_err)?;
    let ranked = rank_by_similarity(&m, &reference, &candidates).map_err(runtime_err)?;
    let mut by_index = vec![0.0; candidates.len()];
    for r in &ranked {
        by_index[r.index] = r.distance;
    }
    let z = z_scores(&by_index);
    let rows: Vec<_> = ranked
        .iter()
        .enumerate()
        .map(|(pos, r)| serde_json::json!({ "rank": pos + 1, "index": r.index, "name": names[r.index], "distance": r.distance, "z": z[r.index] }))
        .collect();
    ctx.write_json("ranking.json", &rows)?;
    let mut md = String::from("| rank | material | distance | z-score |\n|---|---|---|---|\n");
    for (pos, r) in ranked.iter().enumerate() {
        md.push_str(&format!(
            "| {} | {} | {:.4} | {:+.2} |\n",
            pos + 1,
            names[r.index],
            r.distance,
            z[r.index]
        ));
    }
    ctx.write_text("ranking.md", &md)?;
    print!("{md}");
    Ok(())
}

pub fn validate_metric(a: &ValidateArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let (names, materials) = read_materials(&a.materials)?;
    let cfg = metric_config(&a.metric, ctx.seed)?;
    ctx.set_config(&serde_json::json!({ "materials": materials, "metric": cfg }))?;
    let m = DrapeMetric::new(cfg).map_err(config_err)?;
    let r = validate_self_distance(&m, &materials).map_err(runtime_err)?;
    ctx.write_json(
        "self_distance.json",
        &serde_json::json!({ "names": names, "report": r }),
    )?;
    let mut md = String::from("| |");
    for n in &names {
        md.push_str(&format!(" {n} |"));
    }
    md.push_str(&format!(
        " pass |\n|---|{}---|\n",
        "---|".repeat(names.len())
    ));
    for (i, row) in r.distances.iter().enumerate() {
        md.push_str(&format!("| {} |", names[i]));
        for (j, d) in row.iter().enumerate() {
            if i == j {
                md.push_str(&format!(" **{d:.4}** |"));
            } else {
                md.push_str(&format!(" {d:.4} |"));
            }
        }
        md.push_str(&format!(
            " {} |\n",
            if r.row_pass[i] { "yes" } else { "no" }
        ));
    }
    ctx.write_text("self_distance.md", &md)?;
    println!(
        "self-distance check: {}",
        if r.pass { "PASS" } else { "FAIL" }
    );
    Ok(())
}

pub fn embed(a: &EmbedArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let file = std::fs::File::open(&a.triplets)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.triplets.display())))?;
    let triplets = read_triplets_csv(file)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.triplets.display())))?;
    let mut opt: TsteOptions = read_json_or_default(a.config.as_ref())?;
    if let Some(al) = a.alpha {
        opt.alpha = al;
    }
    if let Some(s) = ctx.seed {
        opt.seed = s;
    }
    let max_index = triplets
        .iter()
        .map(|t| t.reference.max(t.chosen).max(t.rejected))
        .max()
        .unwrap_or(0);
    let n_items = a.n_items.unwrap_or(max_index + 1);
    let labels = match &a.labels {
        Some(p) => read_materials(p)?.0,
        None => (0..n_items).map(|i| i.to_string()).collect(),
    };
    ctx.set_config(&serde_json::json!({ "triplets": triplets.len(), "n_items": n_items, "dims": a.dims, "options": opt }))?;
    let mut e = tste_embed(&triplets, n_items, a.dims, &opt).map_err(|e| match e {
        drape_core::embed::EmbedError::InvalidInput(_) => config_err(e),
        other => runtime_err(other),
    })?;
    let agreement = triplet_agreement(&e, &triplets);
    let mut csv = Vec::new();
    e.write_csv(&mut csv).map_err(runtime_err)?;
    ctx.write_text(
        "embedding.csv",
        &String::from_utf8(csv).map_err(runtime_err)?,
    )?;
    ctx.write_text("embedding.svg", &scatter_svg(&e, &labels))?;
    e.history.clear();
    ctx.write_json(
        "embedding.json",
        &serde_json::json!({ "embedding": e, "agreement": agreement, "triplets": triplets.len() }),
    )?;
    println!("agreement {agreement:.4}, loss {:.5}", e.loss);
    Ok(())
}
