use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sgcr_core::curves::{extract as run_extract, Segment};
use sgcr_core::io::{
    cameras_from_json, cameras_to_json, checkpoint_from_ply, checkpoint_to_ply, curves_from_json, curves_to_json,
    edge_map_from_pgm, edge_map_to_pgm, points_from_text, points_to_text,
};
use sgcr_core::metrics::{compute_metrics, point_metrics, MetricReport};
use sgcr_core::scene::synthesize;
use sgcr_core::splat::render;
use sgcr_core::train::{log_to_csv, Checkpoint, Trainer};
use sgcr_core::{Camera, EdgeMap, SphericalGaussianSet, Vec3};

use crate::config::{PipelineConfig, SceneConfig};
use crate::failure::Failure;

/// File layout under the output directory.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }

    pub fn cameras(&self) -> PathBuf {
        self.root.join("scene/cameras.json")
    }
    pub fn edge_dir(&self) -> PathBuf {
        self.root.join("scene/edges")
    }
    pub fn edge_map(&self, i: usize) -> PathBuf {
        self.edge_dir().join(format!("view_{i:03}.pgm"))
    }
    pub fn gt_points(&self) -> PathBuf {
        self.root.join("scene/gt_points.txt")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("scene/model.json")
    }
    pub fn phase1(&self) -> PathBuf {
        self.root.join("train/phase1.ply")
    }
    pub fn gaussians(&self) -> PathBuf {
        self.root.join("train/gaussians.ply")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train/log.csv")
    }
    pub fn curves(&self) -> PathBuf {
        self.root.join("extract/curves.json")
    }
    pub fn segments(&self) -> PathBuf {
        self.root.join("extract/segments.json")
    }
    pub fn trace(&self) -> PathBuf {
        self.root.join("extract/trace.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("eval/report.json")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("eval/summary.csv")
    }
    pub fn contact_sheet(&self) -> PathBuf {
        self.root.join("eval/contact_sheet.pgm")
    }
}

fn write(stage: &str, path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(stage, dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::io(stage, path, e))
}

fn read_text(stage: &str, path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(stage, path, e))
}

fn read_bytes(stage: &str, path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(stage, path, e))
}

fn json<T: Serialize>(stage: &str, value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::stage(stage, e.into()))
}

pub fn synth(cfg: &PipelineConfig) -> Result<(), Failure> {
    let SceneConfig::Synthetic {
        model,
        rig,
        line_width_px,
        hidden_line_removal,
    } = &cfg.scene
    else {
        return Err(Failure::config("synth: scene source is external, nothing to synthesize"));
    };
    let t0 = Instant::now();
    let bundle = synthesize(model, rig, *line_width_px, *hidden_line_removal).map_err(|e| Failure::stage("synth", e))?;
    let out = Layout::new(&cfg.out_dir);
    write("synth", &out.cameras(), cameras_to_json(&bundle.cameras).map_err(|e| Failure::stage("synth", e))?)?;
    for (i, map) in bundle.edge_maps.iter().enumerate() {
        write("synth", &out.edge_map(i), edge_map_to_pgm(map))?;
    }
    write("synth", &out.gt_points(), points_to_text(&bundle.gt_points))?;
    write("synth", &out.model(), json("synth", &bundle.model)?)?;
    println!(
        "synth: {} views, {} ground-truth points in {:.2?}",
        bundle.cameras.len(),
        bundle.gt_points.len(),
        t0.elapsed()
    );
    Ok(())
}

/// Cameras and edge maps, from the synthesized scene or external files.
pub fn load_views(cfg: &PipelineConfig, stage: &str) -> Result<(Vec<Camera>, Vec<EdgeMap>), Failure> {
    let out = Layout::new(&cfg.out_dir);
    let (cam_path, map_paths) = match &cfg.scene {
        SceneConfig::Synthetic { .. } => {
            let dir = out.edge_dir();
            let mut maps = Vec::new();
            let mut i = 0;
            while out.edge_map(i).exists() {
                maps.push(out.edge_map(i));
                i += 1;
            }
            if !out.cameras().exists() || maps.is_empty() {
                return Err(Failure::config(format!(
                    "{stage}: missing input: no scene under {} (run synth first)",
                    dir.parent().unwrap_or(&dir).display()
                )));
            }
            (out.cameras(), maps)
        }
        SceneConfig::External {
            cameras,
            edge_maps,
            edge_map_dir,
            ..
        } => {
            let maps = match edge_map_dir {
                Some(dir) => {
                    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
                        .map_err(|e| Failure::io(stage, dir, e))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                        .collect();
                    found.sort();
                    found
                }
                None => edge_maps.clone(),
            };
            (cameras.clone(), maps)
        }
    };
    let cameras = cameras_from_json(&read_text(stage, &cam_path)?).map_err(|e| Failure::stage(stage, e))?;
    let maps = map_paths
        .iter()
        .map(|p| edge_map_from_pgm(&read_bytes(stage, p)?).map_err(|e| Failure::stage(stage, e)))
        .collect::<Result<Vec<_>, _>>()?;
    if cameras.len() != maps.len() {
        return Err(Failure::config(format!(
            "{stage}: {} cameras but {} edge maps",
            cameras.len(),
            maps.len()
        )));
    }
    Ok((cameras, maps))
}

fn gt_path(cfg: &PipelineConfig) -> Option<PathBuf> {
    match &cfg.scene {
        SceneConfig::Synthetic { .. } => Some(Layout::new(&cfg.out_dir).gt_points()),
        SceneConfig::External { gt_points, .. } => gt_points.clone(),
    }
}

fn save_checkpoint(stage: &str, path: &Path, ck: &Checkpoint) -> Result<(), Failure> {
    write(stage, path, checkpoint_to_ply(ck).map_err(|e| Failure::stage(stage, e))?)
}

/// Trains from the grid, or continues the unfinished phases of `resume`.
pub fn train(cfg: &PipelineConfig, resume: Option<&Path>) -> Result<SphericalGaussianSet, Failure> {
    let (cameras, maps) = load_views(cfg, "train")?;
    let out = Layout::new(&cfg.out_dir);
    let t0 = Instant::now();
    let mut trainer = match resume {
        Some(path) => {
            let ck = checkpoint_from_ply(&read_text("train", path)?).map_err(|e| Failure::stage("train", e))?;
            Trainer::from_checkpoint(&cameras, &maps, ck)
        }
        None => Trainer::new(&cameras, &maps, cfg.train.clone()),
    }
    .map_err(|e| Failure::stage("train", e))?;
    while trainer.phases_done() < 2 {
        trainer.run_phase().map_err(|e| Failure::stage("train", e))?;
        if trainer.phases_done() == 1 {
            save_checkpoint("train", &out.phase1(), &trainer.checkpoint())?;
        }
        println!("train: phase {} done, {} gaussians", trainer.phases_done(), trainer.len());
    }
    let ck = trainer.checkpoint();
    save_checkpoint("train", &out.gaussians(), &ck)?;
    write("train", &out.train_log(), log_to_csv(trainer.log()))?;
    println!("train: final count {} in {:.2?}", trainer.len(), t0.elapsed());
    Ok(ck.gaussians())
}

#[derive(Serialize)]
struct SegmentDoc {
    segments: Vec<[[f64; 3]; 2]>,
}

fn segment_doc(segments: &[Segment]) -> SegmentDoc {
    let arr = |v: &Vec3| [v.x, v.y, v.z];
    SegmentDoc {
        segments: segments.iter().map(|s| [arr(&s.p), arr(&s.q)]).collect(),
    }
}

pub fn extract(cfg: &PipelineConfig) -> Result<(), Failure> {
    let out = Layout::new(&cfg.out_dir);
    let path = out.gaussians();
    if !path.exists() {
        return Err(Failure::config(format!(
            "extract: missing input: {} (run train first)",
            path.display()
        )));
    }
    let set = checkpoint_from_ply(&read_text("extract", &path)?)
        .map_err(|e| Failure::stage("extract", e))?
        .gaussians();
    let t0 = Instant::now();
    let ex = run_extract(&set, &cfg.extract).map_err(|e| Failure::stage("extract", e))?;
    write("extract", &out.curves(), curves_to_json(&ex.curves).map_err(|e| Failure::stage("extract", e))?)?;
    write("extract", &out.segments(), json("extract", &segment_doc(&ex.segments))?)?;
    let mut trace = String::from("step,objective\n");
    for (i, v) in ex.trace.iter().enumerate() {
        trace.push_str(&format!("{i},{v:e}\n"));
    }
    write("extract", &out.trace(), trace)?;
    let (first, last) = (ex.trace.first().copied(), ex.trace.last().copied());
    println!(
        "extract: {} segments -> {} curves ({} dropped, {} merged) in {:.2?}",
        ex.segments.len(),
        ex.curves.len(),
        ex.dropped,
        ex.merged,
        t0.elapsed()
    );
    if let (Some(a), Some(b)) = (first, last) {
        println!(
            "extract: objective {a:.6e} -> {b:.6e} over {} steps, {} rejected",
            ex.trace.len(),
            ex.rejected_steps
        );
    }
    Ok(())
}

/// Optional overrides for what gets scored.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub curves: Option<PathBuf>,
    pub pred_points: Option<PathBuf>,
    pub gt_points: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    name: &'a str,
    #[serde(flatten)]
    report: &'a MetricReport,
}

/// GT map and rendering side by side per view, views tiled in a grid.
pub fn contact_sheet(cameras: &[Camera], maps: &[EdgeMap], set: &SphericalGaussianSet) -> Result<EdgeMap, Failure> {
    let n = maps.len();
    if n == 0 {
        return Err(Failure::stage("eval", sgcr_core::Error::EmptySet));
    }
    let (w, h) = (maps[0].width(), maps[0].height());
    if maps.iter().any(|m| m.width() != w || m.height() != h) {
        return Err(Failure::config("eval: contact sheet needs equally sized views"));
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let sheet_w = cols * 2 * w;
    let mut px = vec![0.0; sheet_w * rows * h];
    for (i, (cam, gt)) in cameras.iter().zip(maps).enumerate() {
        let rendered = render(set, cam);
        let (x0, y0) = ((i % cols) * 2 * w, (i / cols) * h);
        for y in 0..h {
            for x in 0..w {
                px[(y0 + y) * sheet_w + x0 + x] = gt.get(x, y);
                px[(y0 + y) * sheet_w + x0 + w + x] = rendered.get(x, y);
            }
        }
    }
    EdgeMap::from_pixels(sheet_w, rows * h, px).map_err(|e| Failure::stage("eval", e))
}

pub fn eval(cfg: &PipelineConfig, inputs: &EvalInputs) -> Result<MetricReport, Failure> {
    let out = Layout::new(&cfg.out_dir);
    let gt_file = inputs
        .gt_points
        .clone()
        .or_else(|| gt_path(cfg))
        .ok_or_else(|| Failure::config("eval: missing input: no ground-truth points configured"))?;
    let gt = points_from_text(&read_text("eval", &gt_file)?).map_err(|e| Failure::stage("eval", e))?;
    let (name, report) = match &inputs.pred_points {
        Some(p) => {
            let pred = points_from_text(&read_text("eval", p)?).map_err(|e| Failure::stage("eval", e))?;
            ("points", point_metrics(&pred, &gt, &cfg.eval))
        }
        None => {
            let path = inputs.curves.clone().unwrap_or_else(|| out.curves());
            if !path.exists() {
                return Err(Failure::config(format!(
                    "eval: missing input: {} (run extract first)",
                    path.display()
                )));
            }
            let curves = curves_from_json(&read_text("eval", &path)?).map_err(|e| Failure::stage("eval", e))?;
            ("curves", compute_metrics(&curves, &gt, &cfg.eval))
        }
    };
    let report = report.map_err(|e| Failure::stage("eval", e))?;
    write("eval", &out.report(), json("eval", &ReportDoc { name, report: &report })?)?;
    write(
        "eval",
        &out.summary(),
        format!("{}\n{}\n", MetricReport::SUMMARY_HEADER, report.summary_line(name)),
    )?;
    if out.gaussians().exists() {
        if let Ok((cameras, maps)) = load_views(cfg, "eval") {
            let set = checkpoint_from_ply(&read_text("eval", &out.gaussians())?)
                .map_err(|e| Failure::stage("eval", e))?
                .gaussians();
            write("eval", &out.contact_sheet(), edge_map_to_pgm(&contact_sheet(&cameras, &maps, &set)?))?;
        }
    }
    println!(
        "eval: CD {:.6} P {:.4} R {:.4} F {:.4} IoU {:.4}",
        report.chamfer, report.precision, report.recall, report.fscore, report.iou
    );
    Ok(report)
}

pub fn pipeline(cfg: &PipelineConfig) -> Result<MetricReport, Failure> {
    if matches!(cfg.scene, SceneConfig::Synthetic { .. }) {
        synth(cfg)?;
    }
    train(cfg, None)?;
    extract(cfg)?;
    eval(cfg, &EvalInputs::default())
}
