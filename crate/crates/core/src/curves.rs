//! Stage-2: from Gaussian centers to a network of cubic rational Béziers.
//!
//! Randomized line fitting peels segments off the point set one at a time;
//! each segment seeds a Bézier, and all curves are then optimized together
//! against the full set with an opacity-weighted Chamfer term plus a pull
//! between nearby curve endpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, Moments};
use crate::error::{Error, Result};
use crate::geometry::{bernstein3, RationalBezier, Vec3};
use crate::kdtree::KdTree;
use crate::splat::SphericalGaussianSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub n0: usize,
    pub n_searches: usize,
    pub ns: usize,
    /// compared against squared distance (1.6e-3 is a 0.04 radius)
    pub delta1: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta2: f64,
    pub lambda_ep: f64,
    pub dilate_k: usize,
    pub inner_iters: usize,
    pub inner_lr: f64,
    /// subset recomputations per search
    pub refine_rounds: usize,
    pub global_iters: usize,
    pub global_lr_points: f64,
    pub global_lr_weights: f64,
    pub optimize_weights: bool,
    pub merge_cd: f64,
    /// curves supported by fewer Gaussians than this fraction of the best
    /// supported curve are dropped (on top of the absolute `n0` floor)
    pub min_support_fraction: f64,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            n0: 5,
            n_searches: 32,
            ns: 64,
            delta1: 1.6e-3,
            gamma1: 2.0,
            gamma2: 2.0,
            delta2: 0.01,
            lambda_ep: 0.005,
            dilate_k: 3,
            inner_iters: 100,
            inner_lr: 5e-3,
            refine_rounds: 16,
            global_iters: 2000,
            global_lr_points: 3e-3,
            global_lr_weights: 1e-2,
            optimize_weights: true,
            merge_cd: 1e-4,
            min_support_fraction: 0.2,
            seed: 0,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.delta1,
            self.gamma1,
            self.gamma2,
            self.delta2,
            self.inner_lr,
            self.global_lr_points,
            self.global_lr_weights,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("extraction thresholds and rates must be positive".into()));
        }
        if !(self.lambda_ep >= 0.0 && self.merge_cd >= 0.0) {
            return Err(Error::InvalidParameter("lambda_ep and merge_cd must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_support_fraction) {
            return Err(Error::InvalidParameter("min_support_fraction must lie in [0, 1]".into()));
        }
        if self.ns < 2 || self.dilate_k == 0 || self.n_searches == 0 || self.refine_rounds == 0 {
            return Err(Error::InvalidParameter(
                "ns >= 2 and dilate_k, n_searches, refine_rounds >= 1 required".into(),
            ));
        }
        Ok(())
    }
}

fn noise<R: Rng>(n: usize, std: f64, rng: &mut R) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            let v: [f64; 3] = [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ];
            Vec3::new(v[0], v[1], v[2]) * std
        })
        .collect()
}

/// `k` jittered copies of every point (noise std `r0`), point-major.
pub fn dilate_with<R: Rng>(points: &[Vec3], r0: f64, k: usize, rng: &mut R) -> Vec<Vec3> {
    let n = noise(points.len() * k, r0, rng);
    points
        .iter()
        .flat_map(|p| std::iter::repeat_n(*p, k))
        .zip(n)
        .map(|(p, e)| p + e)
        .collect()
}

pub fn dilate_samples(points: &[Vec3], r0: f64, seed: u64) -> Vec<Vec3> {
    dilate_with(points, r0, 3, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Value and (optionally) gradient w.r.t. `a` of
/// `γ/|A| Σ_a o(nn_B(a)) d² + 1/|B| Σ_b o(b) d²(b, nn_A(b))`.
/// Unit weights when `ob` is `None`.
fn chamfer_core(
    a: &[Vec3],
    b: &[Vec3],
    b_tree: &KdTree,
    ob: Option<&[f64]>,
    gamma: f64,
    grad: Option<&mut [Vec3]>,
) -> f64 {
    let a_tree = KdTree::new(a);
    let w = |i: usize| ob.map_or(1.0, |o| o[i]);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let fwd: Vec<(usize, f64)> = a.iter().map(|x| b_tree.nearest(x).expect("nonempty")).collect();
    let bwd: Vec<(usize, f64)> = b.iter().map(|y| a_tree.nearest(y).expect("nonempty")).collect();
    let mut s1 = 0.0;
    for &(j, d) in &fwd {
        s1 += w(j) * d;
    }
    let mut s2 = 0.0;
    for (j, &(_, d)) in bwd.iter().enumerate() {
        s2 += w(j) * d;
    }
    if let Some(g) = grad {
        for (i, &(j, _)) in fwd.iter().enumerate() {
            g[i] += (a[i] - b[j]) * (2.0 * gamma * w(j) / na);
        }
        for (j, &(i, _)) in bwd.iter().enumerate() {
            g[i] += (a[i] - b[j]) * (2.0 * w(j) / nb);
        }
    }
    gamma * s1 / na + s2 / nb
}

pub fn chamfer(a: &[Vec3], b: &[Vec3], gamma: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(chamfer_core(a, b, &KdTree::new(b), None, gamma, None))
}

pub fn weighted_chamfer(samples: &[Vec3], set: &SphericalGaussianSet, gamma2: f64) -> Result<f64> {
    if samples.is_empty() || set.is_empty() {
        return Err(Error::EmptySet);
    }
    let c = set.centers();
    Ok(chamfer_core(samples, &c, &KdTree::new(&c), Some(&set.opacities()), gamma2, None))
}

/// Indices of `points` whose squared distance to the nearest sample is
/// below `delta1`.
pub fn select_subset(points: &[Vec3], samples: &[Vec3], delta1: f64) -> Vec<usize> {
    if samples.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::new(samples);
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| tree.nearest(p).expect("nonempty").1 < delta1)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub p: Vec3,
    pub q: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    pub segments: Vec<Segment>,
    /// Gaussians left when the loop stopped
    pub remaining: usize,
    /// winning score of every turn
    pub scores: Vec<f64>,
}

struct SearchResult {
    score: f64,
    seg: Segment,
    subset: Vec<usize>,
}

fn params(ns: usize, k: usize) -> Vec<f64> {
    let last = (ns - 1) as f64;
    (0..ns)
        .flat_map(|i| std::iter::repeat_n(i as f64 / last, k))
        .collect()
}

fn segment_samples(p: &Vec3, q: &Vec3, ts: &[f64], jitter: &[Vec3]) -> Vec<Vec3> {
    ts.iter().zip(jitter).map(|(t, e)| p * (1.0 - t) + q * *t + e).collect()
}

/// Adam on the two endpoints against a fixed target set; the rate decays
/// geometrically to a tenth of its start.
fn fit_endpoints(seg: &mut Segment, target: &[Vec3], ts: &[f64], jitter: &[Vec3], cfg: &ExtractConfig) {
    let tree = KdTree::new(target);
    let adam = Adam::default();
    let mut m = Moments::new(2, 3);
    let mut x = [seg.p.x, seg.p.y, seg.p.z, seg.q.x, seg.q.y, seg.q.z];
    let iters = cfg.inner_iters.max(1);
    for it in 0..cfg.inner_iters {
        let p = Vec3::new(x[0], x[1], x[2]);
        let q = Vec3::new(x[3], x[4], x[5]);
        let s = segment_samples(&p, &q, ts, jitter);
        let mut g = vec![Vec3::zeros(); s.len()];
        chamfer_core(&s, target, &tree, None, cfg.gamma1, Some(&mut g));
        let mut gp = Vec3::zeros();
        let mut gq = Vec3::zeros();
        for (gi, t) in g.iter().zip(ts) {
            gp += gi * (1.0 - t);
            gq += gi * *t;
        }
        let lr = cfg.inner_lr * 0.1f64.powf(it as f64 / iters as f64);
        m.step(&adam, lr, &mut x, &[gp.x, gp.y, gp.z, gq.x, gq.y, gq.z]);
    }
    seg.p = Vec3::new(x[0], x[1], x[2]);
    seg.q = Vec3::new(x[3], x[4], x[5]);
}

fn search(points: &[Vec3], tree: &KdTree, r0: f64, cfg: &ExtractConfig, rng: &mut ChaCha8Rng) -> Option<SearchResult> {
    let pi = rng.random_range(0..points.len());
    let p = points[pi];
    let near: Vec<usize> = tree
        .k_nearest(&p, 6)
        .into_iter()
        .filter(|&(i, d)| i != pi && d > 0.0)
        .map(|(i, _)| i)
        .take(5)
        .collect();
    if near.is_empty() {
        return None;
    }
    let q = points[near[rng.random_range(0..near.len())]];
    let mut seg = Segment { p, q };
    let ts = params(cfg.ns, cfg.dilate_k);
    let jitter = noise(ts.len(), r0, rng);
    let mut subset = select_subset(points, &segment_samples(&seg.p, &seg.q, &ts, &jitter), cfg.delta1);
    for _ in 0..cfg.refine_rounds {
        if subset.len() < cfg.n0 {
            return None;
        }
        let target: Vec<Vec3> = subset.iter().map(|&i| points[i]).collect();
        fit_endpoints(&mut seg, &target, &ts, &jitter, cfg);
        let next = select_subset(points, &segment_samples(&seg.p, &seg.q, &ts, &jitter), cfg.delta1);
        let done = next == subset;
        subset = next;
        if done {
            break;
        }
    }
    if subset.len() < cfg.n0 || seg.p == seg.q {
        return None;
    }
    let samples = segment_samples(&seg.p, &seg.q, &ts, &jitter);
    let target: Vec<Vec3> = subset.iter().map(|&i| points[i]).collect();
    let score = chamfer(&samples, &target, cfg.gamma1).ok()?;
    score.is_finite().then_some(SearchResult { score, seg, subset })
}

fn search_rng(seed: u64, turn: usize, search: usize, n_searches: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (turn * n_searches + search) as u64);
    rng
}

/// Randomized segment extraction: each turn keeps the best of
/// `n_searches` independent fits and removes the Gaussians it explains.
pub fn line_fitting(set: &SphericalGaussianSet, cfg: &ExtractConfig) -> Result<LineFit> {
    cfg.validate()?;
    let mut points = set.centers();
    let mut out = LineFit {
        segments: Vec::new(),
        remaining: points.len(),
        scores: Vec::new(),
    };
    let mut turn = 0;
    while points.len() > cfg.n0 {
        let tree = KdTree::new(&points);
        let results: Vec<Option<SearchResult>> = (0..cfg.n_searches)
            .into_par_iter()
            .map(|s| {
                let mut rng = search_rng(cfg.seed, turn, s, cfg.n_searches);
                search(&points, &tree, set.radius, cfg, &mut rng)
            })
            .collect();
        let best = results
            .into_iter()
            .flatten()
            .reduce(|a, b| if b.score < a.score { b } else { a });
        let Some(best) = best else { break };
        let mut drop = vec![false; points.len()];
        for &i in &best.subset {
            drop[i] = true;
        }
        points = points
            .into_iter()
            .zip(drop)
            .filter(|(_, d)| !d)
            .map(|(p, _)| p)
            .collect();
        out.segments.push(best.seg);
        out.scores.push(best.score);
        turn += 1;
    }
    out.remaining = points.len();
    Ok(out)
}

/// Straight cubic through `p` and `q` with unit weights.
pub fn init_beziers(segments: &[Segment]) -> Vec<RationalBezier> {
    segments
        .iter()
        .map(|s| {
            RationalBezier::polynomial([s.p, s.p * 0.75 + s.q * 0.25, s.p * 0.25 + s.q * 0.75, s.q])
        })
        .collect()
}

fn endpoints(curves: &[RationalBezier]) -> Vec<Vec3> {
    curves.iter().flat_map(|c| [c.start(), c.end()]).collect()
}

fn endpoint_core(pts: &[Vec3], delta2: f64, grad: Option<&mut [Vec3]>) -> f64 {
    let mut total = 0.0;
    let mut pairs = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[i] - pts[j];
            let d2 = d.norm_squared();
            if d2 < delta2 {
                total += d2;
                pairs.push((i, j, d));
            }
        }
    }
    if let Some(g) = grad {
        for (i, j, d) in pairs {
            g[i] += d * 2.0;
            g[j] -= d * 2.0;
        }
    }
    total
}

/// Sum of squared distances over endpoint pairs closer than `√δ2`.
pub fn endpoint_loss(curves: &[RationalBezier], delta2: f64) -> f64 {
    endpoint_core(&endpoints(curves), delta2, None)
}

/// Flat parameter vector: 12 coordinates then 4 log-weights per curve.
fn pack(curves: &[RationalBezier]) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::with_capacity(curves.len() * 12);
    let mut lw = Vec::with_capacity(curves.len() * 4);
    for c in curves {
        for p in &c.control_points {
            pts.extend_from_slice(&[p.x, p.y, p.z]);
        }
        lw.extend(c.weights.iter().map(|w| w.ln()));
    }
    (pts, lw)
}

fn unpack(pts: &[f64], lw: &[f64]) -> Vec<RationalBezier> {
    pts.chunks_exact(12)
        .zip(lw.chunks_exact(4))
        .map(|(p, w)| RationalBezier {
            control_points: [
                Vec3::new(p[0], p[1], p[2]),
                Vec3::new(p[3], p[4], p[5]),
                Vec3::new(p[6], p[7], p[8]),
                Vec3::new(p[9], p[10], p[11]),
            ],
            weights: [w[0].exp(), w[1].exp(), w[2].exp(), w[3].exp()],
        })
        .collect()
}

/// Objective of the joint curve fit; held fixed per step so that old and
/// new parameters can be compared on the same dilation noise.
struct GlobalObjective<'a> {
    centers: &'a [Vec3],
    opacity: &'a [f64],
    tree: &'a KdTree,
    us: Vec<f64>,
    basis: Vec<[f64; 4]>,
    cfg: &'a ExtractConfig,
}

impl GlobalObjective<'_> {
    fn eval(
        &self,
        curves: &[RationalBezier],
        jitter: &[Vec3],
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> f64 {
        let per = self.us.len();
        let mut samples = Vec::with_capacity(curves.len() * per);
        for c in curves {
            for b in &self.basis {
                let mut num = Vec3::zeros();
                let mut den = 0.0;
                for j in 0..4 {
                    num += c.control_points[j] * (b[j] * c.weights[j]);
                    den += b[j] * c.weights[j];
                }
                samples.push(num / den);
            }
        }
        let clean = samples.clone();
        for (s, e) in samples.iter_mut().zip(jitter) {
            *s += e;
        }
        let want = grads.is_some();
        let mut gs = vec![Vec3::zeros(); if want { samples.len() } else { 0 }];
        let wcd = chamfer_core(
            &samples,
            self.centers,
            self.tree,
            Some(self.opacity),
            self.cfg.gamma2,
            want.then_some(&mut gs[..]),
        );
        let ends = endpoints(curves);
        let mut ge = vec![Vec3::zeros(); if want { ends.len() } else { 0 }];
        let ep = endpoint_core(&ends, self.cfg.delta2, want.then_some(&mut ge[..]));
        if let Some((gp, gw)) = grads {
            for (ci, c) in curves.iter().enumerate() {
                for (k, b) in self.basis.iter().enumerate() {
                    let g = gs[ci * per + k];
                    let x = clean[ci * per + k];
                    let den: f64 = (0..4).map(|j| b[j] * c.weights[j]).sum();
                    for j in 0..4 {
                        let bw = b[j] * c.weights[j] / den;
                        for a in 0..3 {
                            gp[ci * 12 + j * 3 + a] += g[a] * bw;
                        }
                        // d/d(log w_j) = w_j · B_j (P_j − C) / W
                        gw[ci * 4 + j] += g.dot(&(c.control_points[j] - x)) * bw;
                    }
                }
                for a in 0..3 {
                    gp[ci * 12 + a] += self.cfg.lambda_ep * ge[2 * ci][a];
                    gp[ci * 12 + 9 + a] += self.cfg.lambda_ep * ge[2 * ci + 1][a];
                }
            }
        }
        wcd + self.cfg.lambda_ep * ep
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFit {
    pub curves: Vec<RationalBezier>,
    /// objective at the parameters entering each step
    pub trace: Vec<f64>,
    /// steps whose update would have raised the objective
    pub rejected: usize,
}

const BACKTRACK_STEPS: usize = 8;
const FREEZE_ROUNDS: usize = 3;

/// Endpoint pairs of the flat control-point vector closer than `√δ2`.
fn close_pairs(pts: &[f64], delta2: f64) -> Vec<(usize, usize)> {
    let ends: Vec<Vec3> = pts
        .chunks_exact(12)
        .flat_map(|c| [Vec3::new(c[0], c[1], c[2]), Vec3::new(c[9], c[10], c[11])])
        .collect();
    let mut out = Vec::new();
    for i in 0..ends.len() {
        for j in i + 1..ends.len() {
            if (ends[i] - ends[j]).norm_squared() < delta2 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Halves the step up to `BACKTRACK_STEPS` times on the same noise draw;
/// returns the first parameters whose objective does not exceed `f0`.
#[allow(clippy::too_many_arguments)]
fn backtrack(
    obj: &GlobalObjective,
    jitter: &[Vec3],
    f0: f64,
    pts: &[f64],
    lw: &[f64],
    dp: &[f64],
    dw: &[f64],
    mut scale: f64,
    cfg: &ExtractConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    for _ in 0..BACKTRACK_STEPS {
        let np: Vec<f64> = pts.iter().zip(dp).map(|(p, d)| p - cfg.global_lr_points * scale * d).collect();
        let nw: Vec<f64> = lw.iter().zip(dw).map(|(w, d)| w - cfg.global_lr_weights * scale * d).collect();
        if obj.eval(&unpack(&np, &nw), jitter, None) <= f0 {
            return Some((np, nw));
        }
        scale *= 0.5;
    }
    None
}

/// Joint Adam descent on all control points and log-weights. A step that
/// would raise the objective is halved up to eight times, then skipped, so
/// the objective on each step's noise draw never increases.
/// The step size is constant for the first half and then decays
/// geometrically by 100×.
pub fn global_optimize(curves: &[RationalBezier], set: &SphericalGaussianSet, cfg: &ExtractConfig) -> Result<GlobalFit> {
    cfg.validate()?;
    if curves.is_empty() || set.is_empty() {
        return Err(Error::EmptySet);
    }
    let centers = set.centers();
    let opacity = set.opacities();
    let tree = KdTree::new(&centers);
    let us = params(cfg.ns, cfg.dilate_k);
    let obj = GlobalObjective {
        centers: &centers,
        opacity: &opacity,
        tree: &tree,
        basis: us.iter().map(|u| bernstein3(*u)).collect(),
        us,
        cfg,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let (mut pts, mut lw) = pack(curves);
    let adam = Adam::default();
    let mut mp = Moments::new(curves.len() * 4, 3);
    let mut mw = Moments::new(curves.len() * 4, 1);
    let mut trace = Vec::with_capacity(cfg.global_iters);
    let mut rejected = 0;
    let half = cfg.global_iters / 2;
    for it in 0..cfg.global_iters {
        let jitter = noise(curves.len() * obj.us.len(), set.radius, &mut rng);
        let cur = unpack(&pts, &lw);
        let mut gp = vec![0.0; pts.len()];
        let mut gw = vec![0.0; lw.len()];
        let f0 = obj.eval(&cur, &jitter, Some((&mut gp, &mut gw)));
        if !f0.is_finite() {
            return Err(Error::Numerical(format!("curve objective not finite at step {it}")));
        }
        trace.push(f0);
        let decay = if it < half {
            1.0
        } else {
            0.01f64.powf((it - half) as f64 / (cfg.global_iters - half) as f64)
        };
        let dp = mp.direction(&adam, &gp);
        let dw = if cfg.optimize_weights {
            mw.direction(&adam, &gw)
        } else {
            vec![0.0; lw.len()]
        };
        let mut dp = dp;
        let mut accepted = false;
        // An endpoint pair entering the δ2 ball makes the objective jump up,
        // which no step size can undo. Endpoints that would newly pair are
        // held in place and the rest of the step is retried.
        for _ in 0..=FREEZE_ROUNDS {
            if let Some((np, nw)) = backtrack(&obj, &jitter, f0, &pts, &lw, &dp, &dw, decay, cfg) {
                pts = np;
                lw = nw;
                accepted = true;
                break;
            }
            let trial: Vec<f64> = pts.iter().zip(&dp).map(|(p, d)| p - cfg.global_lr_points * decay * d).collect();
            let before = close_pairs(&pts, cfg.delta2);
            let entering: Vec<(usize, usize)> = close_pairs(&trial, cfg.delta2)
                .into_iter()
                .filter(|p| !before.contains(p))
                .collect();
            if entering.is_empty() {
                break;
            }
            for (a, b) in entering {
                for e in [a, b] {
                    let off = (e / 2) * 12 + (e % 2) * 9;
                    dp[off..off + 3].iter_mut().for_each(|d| *d = 0.0);
                }
            }
        }
        if !accepted {
            rejected += 1;
        }
    }
    Ok(GlobalFit {
        curves: unpack(&pts, &lw),
        trace,
        rejected,
    })
}

/// The global objective without dilation noise.
pub fn curve_objective(curves: &[RationalBezier], set: &SphericalGaussianSet, cfg: &ExtractConfig) -> Result<f64> {
    if curves.is_empty() || set.is_empty() {
        return Err(Error::EmptySet);
    }
    let centers = set.centers();
    let opacity = set.opacities();
    let tree = KdTree::new(&centers);
    let us = params(cfg.ns, 1);
    let obj = GlobalObjective {
        centers: &centers,
        opacity: &opacity,
        tree: &tree,
        basis: us.iter().map(|u| bernstein3(*u)).collect(),
        us,
        cfg,
    };
    let zero = vec![Vec3::zeros(); curves.len() * obj.us.len()];
    Ok(obj.eval(curves, &zero, None))
}

/// Number of Gaussians within `√δ1` of the curve.
pub fn curve_support(curve: &RationalBezier, centers: &[Vec3], ns: usize, delta1: f64) -> usize {
    select_subset(centers, &curve.sample(ns.max(2) * 4), delta1).len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub segments: Vec<Segment>,
    pub curves: Vec<RationalBezier>,
    pub trace: Vec<f64>,
    pub rejected_steps: usize,
    pub dropped: usize,
    pub merged: usize,
}

/// Drops weakly supported curves, then near-duplicates (keeping the first).
/// Support counts Gaussians within `√δ1` of the curve; a curve needs at
/// least `n0` and at least `min_support_fraction` of the best-supported curve.
pub fn postprocess(curves: Vec<RationalBezier>, set: &SphericalGaussianSet, cfg: &ExtractConfig) -> (Vec<RationalBezier>, usize, usize) {
    let centers = set.centers();
    let before = curves.len();
    let support: Vec<usize> = curves
        .iter()
        .map(|c| curve_support(c, &centers, cfg.ns, cfg.delta1))
        .collect();
    let best = support.iter().copied().max().unwrap_or(0) as f64;
    let floor = (cfg.min_support_fraction * best).max(cfg.n0 as f64);
    let supported: Vec<RationalBezier> = curves
        .into_iter()
        .zip(support)
        .filter(|(_, s)| *s as f64 >= floor)
        .map(|(c, _)| c)
        .collect();
    let dropped = before - supported.len();
    let mut kept: Vec<RationalBezier> = Vec::new();
    let mut kept_samples: Vec<Vec<Vec3>> = Vec::new();
    for c in supported {
        let s = c.sample(cfg.ns.max(2));
        let dup = kept_samples
            .iter()
            .any(|k| chamfer(&s, k, 1.0).map(|d| d / 2.0 < cfg.merge_cd).unwrap_or(false));
        if !dup {
            kept.push(c);
            kept_samples.push(s);
        }
    }
    let merged = before - dropped - kept.len();
    (kept, dropped, merged)
}

/// Line fitting, global optimization and clean-up.
pub fn extract(set: &SphericalGaussianSet, cfg: &ExtractConfig) -> Result<Extraction> {
    cfg.validate()?;
    if set.len() <= cfg.n0 {
        return Err(Error::TooFewGaussians {
            count: set.len(),
            min: cfg.n0,
        });
    }
    let lines = line_fitting(set, cfg)?;
    if lines.segments.is_empty() {
        return Err(Error::Degenerate("line fitting found no segment".into()));
    }
    let fit = global_optimize(&init_beziers(&lines.segments), set, cfg)?;
    let (curves, dropped, merged) = postprocess(fit.curves, set, cfg);
    Ok(Extraction {
        segments: lines.segments,
        curves,
        trace: fit.trace,
        rejected_steps: fit.rejected,
        dropped,
        merged,
    })
}
