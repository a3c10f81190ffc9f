use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgcr_core::curves::ExtractConfig;
use sgcr_core::metrics::EvalOptions;
use sgcr_core::scene::{ModelSpec, RigSpec};
use sgcr_core::train::TrainConfig;

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneConfig {
    Synthetic {
        model: ModelSpec,
        #[serde(default)]
        rig: RigSpec,
        #[serde(default = "default_line_width")]
        line_width_px: f64,
        #[serde(default)]
        hidden_line_removal: bool,
    },
    /// Cameras and edge maps produced elsewhere. Edge maps are listed
    /// explicitly or taken from a directory in file-name order.
    External {
        cameras: PathBuf,
        #[serde(default)]
        edge_maps: Vec<PathBuf>,
        edge_map_dir: Option<PathBuf>,
        gt_points: Option<PathBuf>,
    },
}

fn default_line_width() -> f64 {
    1.5
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::Synthetic {
            model: ModelSpec::cube(),
            rig: RigSpec::default(),
            line_width_px: default_line_width(),
            hidden_line_removal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scene: SceneConfig,
    pub train: TrainConfig,
    pub extract: ExtractConfig,
    pub eval: EvalOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("sgcr_out"),
            scene: SceneConfig::default(),
            train: TrainConfig::default(),
            extract: ExtractConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))
    }

    /// Reads `path`; relative paths inside are taken against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("config: cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let SceneConfig::External {
            cameras,
            edge_maps,
            edge_map_dir,
            gt_points,
        } = &mut self.scene
        {
            fix(cameras);
            edge_maps.iter_mut().for_each(fix);
            if let Some(d) = edge_map_dir {
                fix(d);
            }
            if let Some(g) = gt_points {
                fix(g);
            }
        }
    }

    /// The single seed drives every stochastic stage.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.extract.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |stage: &str, e: sgcr_core::Error| Failure::config(format!("config [{stage}]: {e}"));
        self.train.validate().map_err(|e| bad("train", e))?;
        self.extract.validate().map_err(|e| bad("extract", e))?;
        self.eval.validate().map_err(|e| bad("eval", e))?;
        match &self.scene {
            SceneConfig::Synthetic { line_width_px, .. } => {
                if !(*line_width_px >= 1.0) {
                    return Err(Failure::config("config [scene]: line_width_px must be at least 1"));
                }
            }
            SceneConfig::External {
                cameras,
                edge_maps,
                edge_map_dir,
                gt_points,
            } => {
                let mut paths: Vec<&PathBuf> = vec![cameras];
                paths.extend(edge_maps);
                paths.extend(edge_map_dir);
                paths.extend(gt_points);
                if let Some(p) = paths.into_iter().find(|p| !p.exists()) {
                    return Err(Failure::config(format!("config [scene]: {} does not exist", p.display())));
                }
                if edge_maps.is_empty() == edge_map_dir.is_none() {
                    return Err(Failure::config(
                        "config [scene]: give exactly one of edge_maps or edge_map_dir",
                    ));
                }
            }
        }
        Ok(())
    }
}
