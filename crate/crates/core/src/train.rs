//! Stage-1 fitting of Spherical Gaussians to multi-view edge maps.
//!
//! Opacity and color are optimized as logits so they stay inside `(0, 1)`.
//! Training runs in two phases; the first densifies, prunes and resets
//! opacities, the second only refines. Each phase starts with fresh Adam
//! moments and its own RNG stream, so a run resumed from the phase-1
//! checkpoint is identical to an uninterrupted one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, Moments};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Vec3};
use crate::image::EdgeMap;
use crate::losses::{total_loss, LossTerms, LossWeights};
use crate::splat::{RenderSettings, RenderState, SphericalGaussian, SphericalGaussianSet, SplatGradients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub grid_resolution: usize,
    pub r0: f64,
    pub eta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub phase_iters: [usize; 2],
    pub densify_interval: usize,
    /// mean `‖dL/d(mean2d)‖` in pixels above which a Gaussian is duplicated
    pub densify_grad_threshold: f64,
    pub opacity_reset_interval: usize,
    pub opacity_reset_value: f64,
    pub prune_opacity_min: f64,
    pub final_prune_opacity: f64,
    pub final_prune_color: f64,
    pub init_opacity: f64,
    pub init_color: f64,
    pub lr_position_init: f64,
    pub lr_position_final: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        TrainConfig {
            grid_resolution: 50,
            r0: 0.005,
            eta: w.eta,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            lambda3: w.lambda3,
            phase_iters: [3000, 3000],
            densify_interval: 200,
            densify_grad_threshold: 1e-3,
            opacity_reset_interval: 1000,
            opacity_reset_value: 0.1,
            prune_opacity_min: 0.005,
            final_prune_opacity: 0.5,
            final_prune_color: 0.1,
            init_opacity: 0.1,
            init_color: 0.5,
            lr_position_init: 5e-4,
            lr_position_final: 5e-6,
            lr_opacity: 0.05,
            lr_color: 0.0025,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            eta: self.eta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.grid_resolution < 2 {
            return bad("grid_resolution must be at least 2");
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return bad("r0 must be positive");
        }
        let nonneg = [
            self.eta,
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.densify_grad_threshold,
            self.prune_opacity_min,
            self.final_prune_opacity,
            self.final_prune_color,
            self.lr_position_init,
            self.lr_position_final,
            self.lr_opacity,
            self.lr_color,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("weights, thresholds and learning rates must be finite and >= 0");
        }
        if self.lambda1 > 1.0 {
            return bad("lambda1 must be <= 1");
        }
        if self.lr_position_init > 0.0 && self.lr_position_final <= 0.0 {
            return bad("lr_position_final must be positive when lr_position_init is");
        }
        for v in [self.opacity_reset_value, self.init_opacity, self.init_color] {
            if !(v > 0.0 && v < 1.0) {
                return bad("initial and reset opacity/color must lie strictly inside (0, 1)");
            }
        }
        if self.densify_interval == 0 || self.opacity_reset_interval == 0 {
            return bad("intervals must be positive");
        }
        if self.phase_iters[0] % self.densify_interval != 0
            || self.phase_iters[0] % self.opacity_reset_interval != 0
        {
            return bad("densify and reset intervals must divide the phase-1 length");
        }
        Ok(())
    }

    fn total_iters(&self) -> usize {
        self.phase_iters[0] + self.phase_iters[1]
    }

    fn position_lr(&self, iteration: usize) -> f64 {
        if self.lr_position_init == 0.0 {
            return 0.0;
        }
        let t = (iteration as f64 / self.total_iters().max(1) as f64).clamp(0.0, 1.0);
        (self.lr_position_init.ln() * (1.0 - t) + self.lr_position_final.ln() * t).exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `resolution³` Gaussians at the cell centers of a lattice over `[0,1]³`.
pub fn grid_init(cfg: &TrainConfig) -> Result<SphericalGaussianSet> {
    let n = cfg.grid_resolution;
    if n < 2 {
        return Err(Error::InvalidParameter("grid_resolution must be at least 2".into()));
    }
    let h = 1.0 / n as f64;
    let mut set = SphericalGaussianSet::new(cfg.r0);
    set.gaussians.reserve(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c = Vec3::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h);
                set.gaussians.push(SphericalGaussian::new(c, cfg.init_opacity, cfg.init_color));
            }
        }
    }
    Ok(set)
}

/// Running sums of the per-view 2-D positional gradient norm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        GradStats {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn accumulate(&mut self, grads: &SplatGradients) {
        for (i, g) in grads.mean2d_grad.iter().enumerate() {
            if grads.visible[i] {
                self.sum[i] += g[0].hypot(g[1]);
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }

    fn over(&self, threshold: f64) -> Vec<usize> {
        (0..self.sum.len()).filter(|&i| self.mean(i) > threshold).collect()
    }
}

fn offsets<R: Rng>(n: usize, r0: f64, rng: &mut R) -> Vec<Vec3> {
    let normal = Normal::new(0.0, r0 / 2.0).expect("positive std");
    (0..n)
        .map(|_| Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
        .collect()
}

/// Appends one jittered copy of every Gaussian whose mean positional
/// gradient exceeds `threshold`.
pub fn densify<R: Rng>(
    set: &SphericalGaussianSet,
    stats: &GradStats,
    threshold: f64,
    rng: &mut R,
) -> SphericalGaussianSet {
    let picked = stats.over(threshold);
    let offs = offsets(picked.len(), set.radius, rng);
    let mut out = set.clone();
    for (&i, d) in picked.iter().zip(offs) {
        let g = set.gaussians[i];
        out.gaussians.push(SphericalGaussian { center: g.center + d, ..g });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneMode {
    Running { min_opacity: f64 },
    /// drop when opacity or color is below its threshold
    Final { min_opacity: f64, min_color: f64 },
}

impl PruneMode {
    pub fn keeps(&self, opacity: f64, color: f64) -> bool {
        match *self {
            PruneMode::Running { min_opacity } => opacity >= min_opacity,
            PruneMode::Final { min_opacity, min_color } => opacity >= min_opacity && color >= min_color,
        }
    }
}

pub fn prune(set: &SphericalGaussianSet, mode: PruneMode) -> SphericalGaussianSet {
    SphericalGaussianSet {
        gaussians: set
            .gaussians
            .iter()
            .filter(|g| mode.keeps(g.opacity, g.color))
            .copied()
            .collect(),
        radius: set.radius,
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub phase: usize,
    pub view: usize,
    pub edge: f64,
    pub dssim: f64,
    pub opacity_color: f64,
    pub regularization: f64,
    pub total: f64,
    /// count after this iteration's schedule events
    pub count: usize,
    /// `+` separated: densify, prune, reset, final_prune
    pub event: String,
}

impl LogEntry {
    pub const CSV_HEADER: &'static str =
        "iteration,phase,view,edge,dssim,opacity_color,regularization,total,count,event";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{}",
            self.iteration,
            self.phase,
            self.view,
            self.edge,
            self.dssim,
            self.opacity_color,
            self.regularization,
            self.total,
            self.count,
            self.event
        )
    }
}

pub fn log_to_csv(log: &[LogEntry]) -> String {
    let mut s = String::from(LogEntry::CSV_HEADER);
    s.push('\n');
    for e in log {
        s.push_str(&e.csv_row());
        s.push('\n');
    }
    s
}

/// Raw optimizer state; enough to continue training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: usize,
    pub phases_done: usize,
    pub radius: f64,
    pub centers: Vec<Vec3>,
    pub opacity_logit: Vec<f64>,
    pub color_logit: Vec<f64>,
}

impl Checkpoint {
    pub fn gaussians(&self) -> SphericalGaussianSet {
        SphericalGaussianSet {
            gaussians: self
                .centers
                .iter()
                .zip(self.opacity_logit.iter().zip(&self.color_logit))
                .map(|(c, (o, k))| SphericalGaussian::new(*c, sigmoid(*o), sigmoid(*k)))
                .collect(),
            radius: self.radius,
        }
    }

    /// Logits recovered from plain values; clamped away from 0 and 1.
    pub fn from_gaussians(config: TrainConfig, set: &SphericalGaussianSet, iteration: usize, phases_done: usize) -> Self {
        let lg = |p: f64| logit(p.clamp(1e-12, 1.0 - 1e-12));
        Checkpoint {
            config,
            iteration,
            phases_done,
            radius: set.radius,
            centers: set.centers(),
            opacity_logit: set.gaussians.iter().map(|g| lg(g.opacity)).collect(),
            color_logit: set.gaussians.iter().map(|g| lg(g.color)).collect(),
        }
    }
}

pub struct TrainOutput {
    pub gaussians: SphericalGaussianSet,
    pub log: Vec<LogEntry>,
    pub phase1: Checkpoint,
    pub last: Checkpoint,
}

/// Mutable training state over a fixed list of views.
pub struct Trainer<'a> {
    views: Vec<(usize, &'a Camera, &'a EdgeMap)>,
    cfg: TrainConfig,
    weights: LossWeights,
    settings: RenderSettings,
    adam: Adam,
    radius: f64,
    centers: Vec<f64>,
    opacity_logit: Vec<f64>,
    color_logit: Vec<f64>,
    iteration: usize,
    phases_done: usize,
    log: Vec<LogEntry>,
}

fn usable_views<'a>(cameras: &'a [Camera], maps: &'a [EdgeMap], eta: f64) -> Result<Vec<(usize, &'a Camera, &'a EdgeMap)>> {
    if cameras.len() != maps.len() {
        return Err(Error::InvalidParameter(format!(
            "{} cameras but {} edge maps",
            cameras.len(),
            maps.len()
        )));
    }
    let mut out = Vec::new();
    for (i, (c, m)) in cameras.iter().zip(maps).enumerate() {
        if c.width() != m.width() || c.height() != m.height() {
            return Err(Error::DimensionMismatch(c.width(), c.height(), m.width(), m.height()));
        }
        if m.count_above(eta) > 0 {
            out.push((i, c, m));
        }
    }
    if out.is_empty() {
        return Err(Error::Degenerate("no view has edge pixels above eta".into()));
    }
    Ok(out)
}

impl<'a> Trainer<'a> {
    pub fn new(cameras: &'a [Camera], maps: &'a [EdgeMap], cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let set = grid_init(&cfg)?;
        let ck = Checkpoint::from_gaussians(cfg.clone(), &set, 0, 0);
        Self::from_checkpoint(cameras, maps, ck)
    }

    pub fn from_checkpoint(cameras: &'a [Camera], maps: &'a [EdgeMap], ck: Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        let n = ck.centers.len();
        if ck.opacity_logit.len() != n || ck.color_logit.len() != n {
            return Err(Error::InvalidParameter("checkpoint arrays differ in length".into()));
        }
        let views = usable_views(cameras, maps, ck.config.eta)?;
        Ok(Trainer {
            views,
            weights: ck.config.weights(),
            settings: RenderSettings::default(),
            adam: Adam::default(),
            radius: ck.radius,
            centers: ck.centers.iter().flat_map(|c| [c.x, c.y, c.z]).collect(),
            opacity_logit: ck.opacity_logit,
            color_logit: ck.color_logit,
            iteration: ck.iteration,
            phases_done: ck.phases_done,
            log: Vec::new(),
            cfg: ck.config,
        })
    }

    pub fn len(&self) -> usize {
        self.opacity_logit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logit.is_empty()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn phases_done(&self) -> usize {
        self.phases_done
    }

    pub fn gaussians(&self) -> SphericalGaussianSet {
        self.checkpoint().gaussians()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            iteration: self.iteration,
            phases_done: self.phases_done,
            radius: self.radius,
            centers: self
                .centers
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
            opacity_logit: self.opacity_logit.clone(),
            color_logit: self.color_logit.clone(),
        }
    }

    fn retain(&mut self, keep: &[bool], moments: &mut [&mut Moments; 3]) {
        let mut c = Vec::with_capacity(self.centers.len());
        let mut o = Vec::with_capacity(self.opacity_logit.len());
        let mut k = Vec::with_capacity(self.color_logit.len());
        for (i, &flag) in keep.iter().enumerate() {
            if flag {
                c.extend_from_slice(&self.centers[3 * i..3 * i + 3]);
                o.push(self.opacity_logit[i]);
                k.push(self.color_logit[i]);
            }
        }
        self.centers = c;
        self.opacity_logit = o;
        self.color_logit = k;
        for m in moments.iter_mut() {
            m.retain(keep);
        }
    }

    fn prune_in_place(&mut self, mode: PruneMode, moments: &mut [&mut Moments; 3]) -> usize {
        let keep: Vec<bool> = self
            .opacity_logit
            .iter()
            .zip(&self.color_logit)
            .map(|(o, c)| mode.keeps(sigmoid(*o), sigmoid(*c)))
            .collect();
        let removed = keep.iter().filter(|k| !**k).count();
        if removed > 0 {
            self.retain(&keep, moments);
        }
        removed
    }

    fn densify_in_place<R: Rng>(&mut self, stats: &GradStats, rng: &mut R, moments: &mut [&mut Moments; 3]) -> usize {
        let picked = stats.over(self.cfg.densify_grad_threshold);
        let offs = offsets(picked.len(), self.radius, rng);
        for (&i, d) in picked.iter().zip(&offs) {
            let c = [self.centers[3 * i] + d.x, self.centers[3 * i + 1] + d.y, self.centers[3 * i + 2] + d.z];
            self.centers.extend_from_slice(&c);
            self.opacity_logit.push(self.opacity_logit[i]);
            self.color_logit.push(self.color_logit[i]);
        }
        for m in moments.iter_mut() {
            m.push_zero_rows(picked.len());
        }
        picked.len()
    }

    fn phase_rng(&self, phase: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(phase as u64 + 1);
        rng
    }

    /// One optimization step on `view`; returns the loss terms.
    fn step(&mut self, view: usize, moments: &mut [&mut Moments; 3], stats: Option<&mut GradStats>) -> Result<LossTerms> {
        let (_, camera, gt) = self.views[view];
        let set = self.gaussians();
        let state = RenderState::forward(&set, camera, &self.settings);
        let loss = total_loss(&state, camera, gt, &set, &self.weights)?
            .ok_or_else(|| Error::Degenerate("view lost its edge pixels".into()))?;
        if !loss.terms.total.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at iteration {}", self.iteration)));
        }
        let g = &loss.grads;
        let d_center: Vec<f64> = g.d_center.iter().flat_map(|d| [d.x, d.y, d.z]).collect();
        let d_op: Vec<f64> = set
            .gaussians
            .iter()
            .zip(&g.d_opacity)
            .map(|(s, d)| d * s.opacity * (1.0 - s.opacity))
            .collect();
        let d_col: Vec<f64> = set
            .gaussians
            .iter()
            .zip(&g.d_color)
            .map(|(s, d)| d * s.color * (1.0 - s.color))
            .collect();
        let lr_pos = self.cfg.position_lr(self.iteration);
        let [mc, mo, mk] = moments;
        mc.step(&self.adam, lr_pos, &mut self.centers, &d_center);
        mo.step(&self.adam, self.cfg.lr_opacity, &mut self.opacity_logit, &d_op);
        mk.step(&self.adam, self.cfg.lr_color, &mut self.color_logit, &d_col);
        if let Some(stats) = stats {
            stats.accumulate(g);
        }
        Ok(loss.terms)
    }

    /// Runs the next unfinished phase. Returns `false` if both are done.
    pub fn run_phase(&mut self) -> Result<bool> {
        let phase = self.phases_done;
        if phase >= 2 {
            return Ok(false);
        }
        let len = self.cfg.phase_iters[phase];
        let mut rng = self.phase_rng(phase);
        let n = self.len();
        let (mut mc, mut mo, mut mk) = (Moments::new(n, 3), Moments::new(n, 1), Moments::new(n, 1));
        let mut stats = GradStats::new(n);
        let reset_logit = logit(self.cfg.opacity_reset_value);
        for it in 1..=len {
            let view = rng.random_range(0..self.views.len());
            let mut moments = [&mut mc, &mut mo, &mut mk];
            let densifying = phase == 0;
            let terms = self.step(view, &mut moments, densifying.then_some(&mut stats))?;
            self.iteration += 1;
            let mut events = Vec::new();
            if densifying && it < len {
                if it % self.cfg.densify_interval == 0 {
                    self.densify_in_place(&stats, &mut rng, &mut moments);
                    stats = GradStats::new(self.len());
                    events.push("densify");
                }
                if it % self.cfg.opacity_reset_interval == 0 {
                    let keep: Vec<bool> = self
                        .opacity_logit
                        .iter()
                        .map(|o| sigmoid(*o) >= self.cfg.prune_opacity_min)
                        .collect();
                    self.retain(&keep, &mut moments);
                    let kept_stats = GradStats {
                        sum: stats.sum.iter().zip(&keep).filter(|(_, k)| **k).map(|(s, _)| *s).collect(),
                        count: stats.count.iter().zip(&keep).filter(|(_, k)| **k).map(|(s, _)| *s).collect(),
                    };
                    stats = kept_stats;
                    self.opacity_logit.iter_mut().for_each(|o| *o = reset_logit);
                    moments[1].reset();
                    events.push("prune");
                    events.push("reset");
                }
            }
            if it == len {
                let mode = PruneMode::Final {
                    min_opacity: self.cfg.final_prune_opacity,
                    min_color: self.cfg.final_prune_color,
                };
                self.prune_in_place(mode, &mut moments);
                events.push("final_prune");
            }
            self.log.push(LogEntry {
                iteration: self.iteration,
                phase: phase + 1,
                view: self.views[view].0,
                edge: terms.edge,
                dssim: terms.dssim,
                opacity_color: terms.opacity_color,
                regularization: terms.regularization,
                total: terms.total,
                count: self.len(),
                event: events.join("+"),
            });
            if self.is_empty() {
                return Err(Error::Degenerate(format!(
                    "every Gaussian was pruned by iteration {}",
                    self.iteration
                )));
            }
        }
        self.phases_done += 1;
        Ok(true)
    }
}

/// Both phases from grid initialization.
pub fn train(cameras: &[Camera], maps: &[EdgeMap], cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut t = Trainer::new(cameras, maps, cfg.clone())?;
    t.run_phase()?;
    let phase1 = t.checkpoint();
    t.run_phase()?;
    let last = t.checkpoint();
    Ok(TrainOutput {
        gaussians: last.gaussians(),
        log: t.log,
        phase1,
        last,
    })
}
