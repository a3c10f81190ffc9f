//! Forward and backward splatting of isotropic, fixed-radius Gaussians into a
//! grayscale edge map.
//!
//! Each Gaussian projects to a 2-D splat with covariance
//! `r0² · J Jᵀ + ε I`, where `J` is the perspective Jacobian at its center
//! (the camera rotation drops out because the 3-D covariance is isotropic).
//! Splats are composited front to back per pixel:
//! `C = Σ cᵢ αᵢ Tᵢ`, `Tᵢ = Π_{j<i} (1 − αⱼ)`.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Camera, Vec3};
use crate::image::EdgeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalGaussian {
    pub center: Vec3,
    pub opacity: f64,
    pub color: f64,
}

impl SphericalGaussian {
    /// Opacity and color are clamped into `[0, 1]`.
    pub fn new(center: Vec3, opacity: f64, color: f64) -> Self {
        SphericalGaussian {
            center,
            opacity: opacity.clamp(0.0, 1.0),
            color: color.clamp(0.0, 1.0),
        }
    }
}

/// Gaussians sharing one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalGaussianSet {
    pub gaussians: Vec<SphericalGaussian>,
    pub radius: f64,
}

impl SphericalGaussianSet {
    pub fn new(radius: f64) -> Self {
        SphericalGaussianSet {
            gaussians: Vec::new(),
            radius,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.gaussians.iter().map(|g| g.center).collect()
    }

    pub fn opacities(&self) -> Vec<f64> {
        self.gaussians.iter().map(|g| g.opacity).collect()
    }
}

/// Fixed rasterization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub alpha_max: f64,
    pub min_transmittance: f64,
    /// Added to the diagonal of every 2-D covariance, pixels².
    pub dilation: f64,
    /// Footprint radius in standard deviations.
    pub cutoff_sigma: f64,
    pub near: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            alpha_max: 0.99,
            min_transmittance: 1e-4,
            dilation: 0.3,
            cutoff_sigma: 3.0,
            near: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub mean2d: [f64; 2],
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub gaussian_index: usize,
}

/// Per-splat intermediate values kept for the backward pass.
#[derive(Debug, Clone, Copy)]
struct Projected {
    index: usize,
    /// camera-frame center
    t: Vec3,
    mean: [f64; 2],
    /// covariance entries `[[a, b], [b, c]]`
    a: f64,
    b: f64,
    c: f64,
    /// inverse covariance entries in the same layout
    ia: f64,
    ib: f64,
    ic: f64,
    opacity: f64,
    color: f64,
    bbox: [usize; 4],
}

fn project_raw(
    index: usize,
    g: &SphericalGaussian,
    r0: f64,
    camera: &Camera,
    settings: &RenderSettings,
) -> Option<Projected> {
    let t = camera.to_camera(&g.center);
    if t.z <= settings.near {
        return None;
    }
    let k = &camera.intrinsics;
    let z = t.z;
    let j00 = k.fx / z;
    let j02 = -k.fx * t.x / (z * z);
    let j11 = k.fy / z;
    let j12 = -k.fy * t.y / (z * z);
    let r2 = r0 * r0;
    let a = r2 * (j00 * j00 + j02 * j02) + settings.dilation;
    let b = r2 * j02 * j12;
    let c = r2 * (j11 * j11 + j12 * j12) + settings.dilation;
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let mean = [k.fx * t.x / z + k.cx, k.fy * t.y / z + k.cy];
    // bounding box of the cutoff ellipse
    let lambda_max = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let rad = settings.cutoff_sigma * lambda_max.sqrt();
    let (w, h) = (k.width as f64, k.height as f64);
    let x0 = (mean[0] - rad).ceil().max(0.0);
    let x1 = (mean[0] + rad).floor().min(w - 1.0);
    let y0 = (mean[1] - rad).ceil().max(0.0);
    let y1 = (mean[1] + rad).floor().min(h - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some(Projected {
        index,
        t,
        mean,
        a,
        b,
        c,
        ia: c / det,
        ib: -b / det,
        ic: a / det,
        opacity: g.opacity,
        color: g.color,
        bbox: [x0 as usize, x1 as usize, y0 as usize, y1 as usize],
    })
}

/// Projects one Gaussian; `None` when it is behind the near plane or its
/// footprint misses the image.
pub fn project_gaussian(g: &SphericalGaussian, r0: f64, camera: &Camera) -> Option<Splat2D> {
    project_with(g, r0, camera, &RenderSettings::default())
}

pub fn project_with(
    g: &SphericalGaussian,
    r0: f64,
    camera: &Camera,
    settings: &RenderSettings,
) -> Option<Splat2D> {
    project_raw(0, g, r0, camera, settings).map(|p| Splat2D {
        mean2d: p.mean,
        cov2d: Matrix2::new(p.a, p.b, p.b, p.c),
        depth: p.t.z,
        gaussian_index: 0,
    })
}

/// Counters describing which discrete branches the forward pass took. Two
/// renders with equal traces lie on the same smooth piece of the image
/// function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderTrace {
    pub footprint_pairs: usize,
    pub composited: usize,
    pub clamped_alphas: usize,
    pub terminated_pixels: usize,
    /// hash of the global depth order
    pub order_hash: u64,
}

/// Forward pass with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct RenderState {
    width: usize,
    height: usize,
    splats: Vec<Projected>,
    /// CSR pixel → splat lists, front to back
    offsets: Vec<usize>,
    entries: Vec<u32>,
    /// number of list entries actually composited per pixel
    used: Vec<u32>,
    final_t: Vec<f64>,
    raw: Vec<f64>,
    settings: RenderSettings,
    n_gaussians: usize,
    trace: RenderTrace,
}

#[inline]
fn mahalanobis(s: &Projected, px: f64, py: f64) -> (f64, f64, f64) {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    (s.ia * dx * dx + 2.0 * s.ib * dx * dy + s.ic * dy * dy, dx, dy)
}

/// Rows per backward work chunk. Fixed so the reduction order does not
/// depend on the thread count.
const ROW_CHUNK: usize = 16;

impl RenderState {
    pub fn forward(set: &SphericalGaussianSet, camera: &Camera, settings: &RenderSettings) -> Self {
        let (width, height) = (camera.width(), camera.height());
        let mut splats: Vec<Projected> = set
            .gaussians
            .par_iter()
            .enumerate()
            .filter_map(|(i, g)| project_raw(i, g, set.radius, camera, settings))
            .collect();
        splats.sort_by(|p, q| p.t.z.total_cmp(&q.t.z).then(p.index.cmp(&q.index)));

        let cutoff = settings.cutoff_sigma * settings.cutoff_sigma;
        let n_pix = width * height;
        let mut counts = vec![0usize; n_pix + 1];
        for s in &splats {
            for y in s.bbox[2]..=s.bbox[3] {
                for x in s.bbox[0]..=s.bbox[1] {
                    if mahalanobis(s, x as f64, y as f64).0 <= cutoff {
                        counts[y * width + x + 1] += 1;
                    }
                }
            }
        }
        for i in 0..n_pix {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut entries = vec![0u32; offsets[n_pix]];
        for (si, s) in splats.iter().enumerate() {
            for y in s.bbox[2]..=s.bbox[3] {
                for x in s.bbox[0]..=s.bbox[1] {
                    if mahalanobis(s, x as f64, y as f64).0 <= cutoff {
                        let p = y * width + x;
                        entries[fill[p]] = si as u32;
                        fill[p] += 1;
                    }
                }
            }
        }

        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<u32>, RenderTrace)> = (0..height)
            .into_par_iter()
            .map(|y| {
                let mut raw = vec![0.0; width];
                let mut tf = vec![1.0; width];
                let mut used = vec![0u32; width];
                let mut tr = RenderTrace::default();
                for x in 0..width {
                    let p = y * width + x;
                    let list = &entries[offsets[p]..offsets[p + 1]];
                    tr.footprint_pairs += list.len();
                    let mut t = 1.0;
                    let mut acc = 0.0;
                    let mut n = 0;
                    for &si in list {
                        let s = &splats[si as usize];
                        let (q, _, _) = mahalanobis(s, x as f64, y as f64);
                        let mut alpha = s.opacity * (-0.5 * q).exp();
                        if alpha > settings.alpha_max {
                            alpha = settings.alpha_max;
                            tr.clamped_alphas += 1;
                        }
                        acc += s.color * alpha * t;
                        t *= 1.0 - alpha;
                        n += 1;
                        if t < settings.min_transmittance {
                            tr.terminated_pixels += 1;
                            break;
                        }
                    }
                    tr.composited += n;
                    raw[x] = acc;
                    tf[x] = t;
                    used[x] = n as u32;
                }
                (raw, tf, used, tr)
            })
            .collect();

        let mut raw = Vec::with_capacity(n_pix);
        let mut final_t = Vec::with_capacity(n_pix);
        let mut used = Vec::with_capacity(n_pix);
        let mut trace = RenderTrace {
            order_hash: splats.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, s| {
                (h ^ s.index as u64).wrapping_mul(0x0100_0000_01b3)
            }),
            ..Default::default()
        };
        for (r, t, u, tr) in rows {
            raw.extend(r);
            final_t.extend(t);
            used.extend(u);
            trace.footprint_pairs += tr.footprint_pairs;
            trace.composited += tr.composited;
            trace.clamped_alphas += tr.clamped_alphas;
            trace.terminated_pixels += tr.terminated_pixels;
        }
        RenderState {
            width,
            height,
            splats,
            offsets,
            entries,
            used,
            final_t,
            raw,
            settings: *settings,
            n_gaussians: set.len(),
            trace,
        }
    }

    pub fn image(&self) -> EdgeMap {
        let px = self.raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        EdgeMap::from_pixels(self.width, self.height, px).expect("finite render")
    }

    pub fn trace(&self) -> RenderTrace {
        self.trace
    }

    pub fn splat_count(&self) -> usize {
        self.splats.len()
    }

    /// Gradients of a scalar loss given `dL/dimage`.
    pub fn backward(&self, camera: &Camera, r0: f64, dl_dimage: &[f64]) -> SplatGradients {
        assert_eq!(dl_dimage.len(), self.width * self.height, "gradient image shape");
        let n_s = self.splats.len();
        let width = self.width;
        let chunks: Vec<usize> = (0..self.height).step_by(ROW_CHUNK).collect();
        // per splat: opacity, color, mean x, mean y, a, b, c
        let partials: Vec<Vec<[f64; 7]>> = chunks
            .par_iter()
            .map(|&y0| {
                let mut acc = vec![[0.0; 7]; n_s];
                for y in y0..(y0 + ROW_CHUNK).min(self.height) {
                    for x in 0..width {
                        let p = y * width + x;
                        let g = dl_dimage[p];
                        if g == 0.0 || self.raw[p] < 0.0 || self.raw[p] > 1.0 {
                            continue;
                        }
                        let list = &self.entries[self.offsets[p]..self.offsets[p] + self.used[p] as usize];
                        let mut t = self.final_t[p];
                        let mut behind = 0.0;
                        for &si in list.iter().rev() {
                            let s = &self.splats[si as usize];
                            let (q, dx, dy) = mahalanobis(s, x as f64, y as f64);
                            let gauss = (-0.5 * q).exp();
                            let raw_alpha = s.opacity * gauss;
                            let clamped = raw_alpha > self.settings.alpha_max;
                            let alpha = if clamped { self.settings.alpha_max } else { raw_alpha };
                            let one_minus = 1.0 - alpha;
                            t /= one_minus;
                            let a = &mut acc[si as usize];
                            a[1] += g * alpha * t;
                            let dc_dalpha = s.color * t - behind / one_minus;
                            behind += s.color * alpha * t;
                            if clamped {
                                continue;
                            }
                            let dl_dalpha = g * dc_dalpha;
                            a[0] += dl_dalpha * gauss;
                            let dl_dq = -0.5 * dl_dalpha * raw_alpha;
                            // q = ia dx² + 2 ib dx dy + ic dy², d = pixel − mean
                            a[2] += dl_dq * -2.0 * (s.ia * dx + s.ib * dy);
                            a[3] += dl_dq * -2.0 * (s.ib * dx + s.ic * dy);
                            // q through the covariance entries (a, b, c)
                            let det = s.a * s.c - s.b * s.b;
                            let num = s.c * dx * dx - 2.0 * s.b * dx * dy + s.a * dy * dy;
                            let det2 = det * det;
                            a[4] += dl_dq * (dy * dy / det - num * s.c / det2);
                            a[5] += dl_dq * (-2.0 * dx * dy / det + num * 2.0 * s.b / det2);
                            a[6] += dl_dq * (dx * dx / det - num * s.a / det2);
                        }
                    }
                }
                acc
            })
            .collect();

        let mut total = vec![[0.0; 7]; n_s];
        for part in &partials {
            for (t, p) in total.iter_mut().zip(part) {
                for k in 0..7 {
                    t[k] += p[k];
                }
            }
        }

        let mut out = SplatGradients::zeros(self.n_gaussians);
        let rot_t = camera.rotation().transpose();
        let k = &camera.intrinsics;
        let r2 = r0 * r0;
        for (s, d) in self.splats.iter().zip(&total) {
            let i = s.index;
            out.visible[i] = true;
            out.d_opacity[i] = d[0];
            out.d_color[i] = d[1];
            out.mean2d_grad[i] = [d[2], d[3]];
            let (tx, ty, z) = (s.t.x, s.t.y, s.t.z);
            let z2 = z * z;
            let z3 = z2 * z;
            let j00 = k.fx / z;
            let j02 = -k.fx * tx / z2;
            let j11 = k.fy / z;
            let j12 = -k.fy * ty / z2;
            // dL/dJ from a = r²(j00² + j02²) + ε, b = r² j02 j12, c = r²(j11² + j12²) + ε
            let (ga, gb, gc) = (d[4], d[5], d[6]);
            let g00 = ga * 2.0 * r2 * j00;
            let g02 = ga * 2.0 * r2 * j02 + gb * r2 * j12;
            let g11 = gc * 2.0 * r2 * j11;
            let g12 = gc * 2.0 * r2 * j12 + gb * r2 * j02;
            let mut dt = Vec3::zeros();
            // mean
            dt.x += d[2] * k.fx / z;
            dt.y += d[3] * k.fy / z;
            dt.z += -d[2] * k.fx * tx / z2 - d[3] * k.fy * ty / z2;
            // Jacobian entries
            dt.z += g00 * -k.fx / z2;
            dt.x += g02 * -k.fx / z2;
            dt.z += g02 * 2.0 * k.fx * tx / z3;
            dt.z += g11 * -k.fy / z2;
            dt.y += g12 * -k.fy / z2;
            dt.z += g12 * 2.0 * k.fy * ty / z3;
            out.d_center[i] = rot_t * dt;
        }
        out
    }
}

/// Per-Gaussian gradients of a scalar image loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatGradients {
    pub d_center: Vec<Vec3>,
    pub d_opacity: Vec<f64>,
    pub d_color: Vec<f64>,
    /// `dL/d(mean2d)` in pixels, for densification statistics
    pub mean2d_grad: Vec<[f64; 2]>,
    /// Gaussians that produced a splat in this view
    pub visible: Vec<bool>,
}

impl SplatGradients {
    pub fn zeros(n: usize) -> Self {
        SplatGradients {
            d_center: vec![Vec3::zeros(); n],
            d_opacity: vec![0.0; n],
            d_color: vec![0.0; n],
            mean2d_grad: vec![[0.0; 2]; n],
            visible: vec![false; n],
        }
    }
}

pub fn render(set: &SphericalGaussianSet, camera: &Camera) -> EdgeMap {
    RenderState::forward(set, camera, &RenderSettings::default()).image()
}

pub fn render_backward(
    set: &SphericalGaussianSet,
    camera: &Camera,
    dl_dimage: &[f64],
) -> SplatGradients {
    RenderState::forward(set, camera, &RenderSettings::default()).backward(
        camera,
        set.radius,
        dl_dimage,
    )
}
