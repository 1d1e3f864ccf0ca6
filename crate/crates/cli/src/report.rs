use std::fmt::Write as _;
use std::path::PathBuf;

use drape_core::dataset::{dataset_stats, sweep_report, DatasetManifest, SweepConfig};
use drape_core::embed::{
    comparison_table, rank_correlation_report, read_triplets_csv, tste_embed, TsteOptions,
};
use drape_core::image::GrayImage;
use drape_core::material::{MaterialParams, ZScorer};
use drape_core::metric::{rank_distances, z_scores, DrapeMetric, MetricConfig, Side};
use drape_core::sim::SceneKind;
use serde::{Deserialize, Serialize};

use crate::commands::{correlation_heatmap, default_fixed, sweep_markdown};
use crate::util::{config_err, read_json, read_materials, runtime_err, CliError, RunContext};
use crate::ReportArgs;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSweep {
    pub param: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub fixed: Option<MaterialParams>,
    #[serde(default)]
    pub config: SweepConfig,
}

/// Every section is optional; a section is produced when its inputs are given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Dataset manifest for the statistics section.
    pub manifest: Option<PathBuf>,
    pub sweep: Option<ReportSweep>,
    /// Named materials for the z-score, ranking and correlation sections.
    pub materials: Option<PathBuf>,
    /// Index of the reference material in `materials`.
    pub reference: usize,
    /// Estimated parameters, one per material in the same order.
    pub estimated: Option<PathBuf>,
    pub metric: MetricConfig,
    /// Triplet judgements over `materials`.
    pub triplets: Option<PathBuf>,
    pub tste: TsteOptions,
}

pub fn run(a: &ReportArgs, ctx: &mut RunContext) -> Result<(), CliError> {
    let mut cfg: ReportConfig = read_json(&a.config)?;
    if let Some(s) = ctx.seed {
        cfg.metric.seed = s;
        cfg.tste.seed = s;
    }
    cfg.metric.validate().map_err(config_err)?;
    ctx.set_config(&cfg)?;
    let mut md = String::from("# Drape report\n");

    if let Some(path) = &cfg.manifest {
        let manifest = DatasetManifest::read(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let s = dataset_stats(&manifest).map_err(config_err)?;
        ctx.write_png("spearman.png", &correlation_heatmap(&s, 24))?;
        ctx.write_text("stats.md", &s.to_markdown())?;
        let _ = write!(
            md,
            "\n## Dataset statistics\n\n{}\n![Spearman correlations](spearman.png)\n",
            s.to_markdown()
        );
    }

    if let Some(sw) = &cfg.sweep {
        let fixed = sw.fixed.clone().unwrap_or_else(default_fixed);
        let r = sweep_report(&sw.param, &sw.values, &fixed, &sw.config).map_err(config_err)?;
        ctx.write_png("sweep_grid.png", &r.grid)?;
        let table = sweep_markdown(&r);
        ctx.write_text("sweep.md", &table)?;
        let _ = write!(
            md,
            "\n## Parameter sweep: {}\n\nRows: hanging, stretch. Columns: increasing {}.\n\n![Sweep](sweep_grid.png)\n\n{table}",
            sw.param, sw.param
        );
    }

    let Some(mpath) = &cfg.materials else {
        ctx.write_text("report.md", &md)?;
        return Ok(());
    };
    let (names, materials) = read_materials(mpath)?;
    let n = materials.len();
    if cfg.reference >= n {
        return Err(CliError::Config(format!(
            "reference index {} out of range for {n} materials",
            cfg.reference
        )));
    }
    if n < 3 {
        return Err(CliError::Config(
            "report needs at least three materials".into(),
        ));
    }
    let metric = DrapeMetric::new(cfg.metric.clone()).map_err(config_err)?;
    let drape = drape_matrix(&metric, &materials)?;
    let param = param_matrix(&materials, &materials)?;

    let i = cfg.reference;
    let others: Vec<usize> = (0..n).filter(|j| *j != i).collect();
    let zd = z_scores(&others.iter().map(|j| drape[i][*j]).collect::<Vec<_>>());
    let zp = z_scores(&others.iter().map(|j| param[i][*j]).collect::<Vec<_>>());
    let labels: Vec<String> = others.iter().map(|j| names[*j].clone()).collect();
    ctx.write_text("zscores.svg", &zscore_svg(&labels, &zd, &zp))?;

    let ranked = rank_distances(&others.iter().map(|j| drape[i][*j]).collect::<Vec<_>>());
    let mut order = vec![i];
    order.extend(ranked.iter().map(|r| others[r.index]));
    let mut tiles = Vec::with_capacity(n);
    for k in &order {
        let renders = metric
            .renders(&materials[*k], SceneKind::Hanging, Side::A)
            .map_err(runtime_err)?;
        tiles.push(renders[0].image.as_ref().clone());
    }
    ctx.write_png("ranking.png", &strip(&tiles, 4))?;
    let _ = write!(
        md,
        "\n## Similarity to {}\n\n![z-scores](zscores.svg)\n\nHanging drapes, reference first, then by increasing drape distance:\n\n![Ranking](ranking.png)\n\n| rank | material | drape distance | drape z | parameter z |\n|---|---|---|---|---|\n",
        names[i]
    );
    for (pos, r) in ranked.iter().enumerate() {
        let _ = writeln!(
            md,
            "| {} | {} | {:.4} | {:+.2} | {:+.2} |",
            pos + 1,
            labels[r.index],
            r.distance,
            zd[r.index],
            zp[r.index]
        );
    }

    if let Some(tpath) = &cfg.triplets {
        let file = std::fs::File::open(tpath)
            .map_err(|e| CliError::Config(format!("{}: {e}", tpath.display())))?;
        let triplets = read_triplets_csv(file)
            .map_err(|e| CliError::Config(format!("{}: {e}", tpath.display())))?;
        let e = tste_embed(&triplets, n, 2, &cfg.tste).map_err(runtime_err)?;
        let perceived = e.distance_matrix();
        let gt_param = rank_correlation_report(&perceived, &param).map_err(runtime_err)?;
        let gt_metric = rank_correlation_report(&perceived, &drape).map_err(runtime_err)?;
        let (est_param, est_metric) = match &cfg.estimated {
            Some(p) => {
                let (_, est) = read_materials(p)?;
                if est.len() != n {
                    return Err(CliError::Config(format!(
                        "{}: expected {n} estimated materials",
                        p.display()
                    )));
                }
                let ep = param_matrix(&est, &materials)?;
                let em = drape_matrix(&metric, &est)?;
                (
                    Some(rank_correlation_report(&perceived, &ep).map_err(runtime_err)?),
                    Some(rank_correlation_report(&perceived, &em).map_err(runtime_err)?),
                )
            }
            None => (None, None),
        };
        let table = comparison_table(
            &gt_param,
            &gt_metric,
            est_param.as_ref(),
            est_metric.as_ref(),
        );
        ctx.write_text("correlation.md", &table)?;
        ctx.write_json(
            "correlation.json",
            &serde_json::json!({ "gt_param": gt_param, "gt_metric": gt_metric, "est_param": est_param, "est_metric": est_metric }),
        )?;
        let _ = write!(
            md,
            "\n## Rank correlation with perceived similarity\n\n{table}"
        );
    }

    ctx.write_text("report.md", &md)?;
    Ok(())
}

fn drape_matrix(
    metric: &DrapeMetric,
    materials: &[MaterialParams],
) -> Result<Vec<Vec<f64>>, CliError> {
    let m = metric.distance_matrix(materials).map_err(runtime_err)?;
    Ok(m.iter()
        .map(|row| row.iter().map(|r| r.d).collect())
        .collect())
}

/// Pairwise z-scored parameter distances, standardized over `population`.
fn param_matrix(
    materials: &[MaterialParams],
    population: &[MaterialParams],
) -> Result<Vec<Vec<f64>>, CliError> {
    let z = ZScorer::fit(population).map_err(config_err)?;
    Ok(materials
        .iter()
        .map(|a| materials.iter().map(|b| z.distance(a, b)).collect())
        .collect())
}

fn strip(tiles: &[GrayImage], gap: usize) -> GrayImage {
    let h = tiles.iter().map(|t| t.height).max().unwrap_or(0);
    let w = tiles.iter().map(|t| t.width).sum::<usize>() + gap * tiles.len().saturating_sub(1);
    let mut out = GrayImage::filled(w, h, 1.0);
    let mut x0 = 0;
    for t in tiles {
        for y in 0..t.height {
            for x in 0..t.width {
                out.set(x0 + x, y, t.get(x, y));
            }
        }
        x0 += t.width + gap;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bar chart of drape-distance and parameter-distance z-scores.
pub fn zscore_svg(labels: &[String], drape: &[f64], param: &[f64]) -> String {
    let (bar, group, h, pad) = (14.0, 40.0, 240.0, 40.0);
    let width = pad * 2.0 + group * labels.len() as f64;
    let lim = drape
        .iter()
        .chain(param)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let mid = pad + h / 2.0;
    let scale = (h / 2.0) / lim;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{:.0}\">\n<line x1=\"{pad}\" y1=\"{mid}\" x2=\"{:.1}\" y2=\"{mid}\" stroke=\"black\"/>\n",
        h + pad * 3.0,
        width - pad
    );
    for (k, label) in labels.iter().enumerate() {
        let gx = pad + group * k as f64 + (group - 2.0 * bar) / 2.0;
        for (j, (v, color)) in [(drape[k], "#1f77b4"), (param[k], "#ff7f0e")]
            .into_iter()
            .enumerate()
        {
            let y = if v >= 0.0 { mid - v * scale } else { mid };
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{bar}\" height=\"{:.1}\" fill=\"{color}\"/>",
                gx + bar * j as f64,
                v.abs() * scale
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            gx + bar,
            pad + h + 14.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{pad}\" y=\"{:.1}\" font-size=\"11\" fill=\"#1f77b4\">drape distance</text>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#ff7f0e\">parameter distance</text>",
        pad - 14.0,
        pad + 110.0,
        pad - 14.0
    );
    s.push_str("</svg>\n");
    s
}
