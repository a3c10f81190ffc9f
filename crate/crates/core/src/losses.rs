//! Training losses and their analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Camera;
use crate::image::EdgeMap;
use crate::splat::{RenderState, SphericalGaussianSet, SplatGradients};

/// A scalar loss with its gradient w.r.t. the rendered image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLoss {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Edge-aware squared error. Pixels whose ground truth exceeds `eta` are
/// edge pixels; edge and non-edge sums are weighted by the opposite class
/// fraction. Returns `None` when the ground truth has no edge pixels (the
/// view carries no signal and is skipped).
pub fn edge_loss(rendered: &EdgeMap, gt: &EdgeMap, eta: f64) -> Result<Option<ImageLoss>> {
    rendered.same_shape(gt)?;
    let n = gt.len() as f64;
    let n_edge = gt.pixels().iter().filter(|&&v| v > eta).count();
    if n_edge == 0 {
        return Ok(None);
    }
    let w_edge = (n - n_edge as f64) / n;
    let w_rest = n_edge as f64 / n;
    let mut value = 0.0;
    let grad = rendered
        .pixels()
        .iter()
        .zip(gt.pixels())
        .map(|(&r, &g)| {
            let w = if g > eta { w_edge } else { w_rest };
            let d = r - g;
            value += w * d * d;
            2.0 * w * d
        })
        .collect();
    Ok(Some(ImageLoss { value, grad }))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter with zero padding. The kernel is symmetric, so
/// the operator is self-adjoint.
fn blur(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - half;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - half;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// `(1 − SSIM) / 2` with an 11×11 Gaussian window (σ = 1.5), averaged over
/// all pixels, and its gradient w.r.t. `rendered`.
pub fn dssim_loss(rendered: &EdgeMap, gt: &EdgeMap) -> Result<ImageLoss> {
    rendered.same_shape(gt)?;
    let (w, h) = (rendered.width(), rendered.height());
    let k = gaussian_kernel();
    let x = rendered.pixels();
    let y = gt.pixels();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = blur(x, w, h, &k);
    let mu_y = blur(y, w, h, &k);
    let e_xx = blur(&xx, w, h, &k);
    let e_yy = blur(&yy, w, h, &k);
    let e_xy = blur(&xy, w, h, &k);

    let n = (w * h) as f64;
    let dl_ds = -0.5 / n;
    let mut ssim_sum = 0.0;
    let mut g_mu = vec![0.0; w * h];
    let mut g_xx = vec![0.0; w * h];
    let mut g_xy = vec![0.0; w * h];
    for p in 0..w * h {
        let (m, my) = (mu_x[p], mu_y[p]);
        let a1 = 2.0 * m * my + SSIM_C1;
        let a2 = 2.0 * (e_xy[p] - m * my) + SSIM_C2;
        let b1 = m * m + my * my + SSIM_C1;
        let b2 = (e_xx[p] - m * m) + (e_yy[p] - my * my) + SSIM_C2;
        let s = a1 * a2 / (b1 * b2);
        ssim_sum += s;
        let ds_dm = (2.0 * my * a2 - 2.0 * my * a1) / (b1 * b2) - s * (2.0 * m / b1 - 2.0 * m / b2);
        g_mu[p] = dl_ds * ds_dm;
        g_xx[p] = dl_ds * (-s / b2);
        g_xy[p] = dl_ds * (2.0 * a1 / (b1 * b2));
    }
    let b_mu = blur(&g_mu, w, h, &k);
    let b_xx = blur(&g_xx, w, h, &k);
    let b_xy = blur(&g_xy, w, h, &k);
    let grad = (0..w * h)
        .map(|p| b_mu[p] + 2.0 * x[p] * b_xx[p] + y[p] * b_xy[p])
        .collect();
    Ok(ImageLoss {
        value: 0.5 * (1.0 - ssim_sum / n),
        grad,
    })
}

/// Per-Gaussian loss with gradients w.r.t. opacity and color.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeLoss {
    pub value: f64,
    pub d_opacity: Vec<f64>,
    pub d_color: Vec<f64>,
}

/// `Σ (oᵢ − cᵢ)²`.
pub fn opacity_color_loss(set: &SphericalGaussianSet) -> AttributeLoss {
    let mut value = 0.0;
    let mut d_opacity = Vec::with_capacity(set.len());
    let mut d_color = Vec::with_capacity(set.len());
    for g in &set.gaussians {
        let d = g.opacity - g.color;
        value += d * d;
        d_opacity.push(2.0 * d);
        d_color.push(-2.0 * d);
    }
    AttributeLoss {
        value,
        d_opacity,
        d_color,
    }
}

/// `Σ log(1 + oᵢ² / 0.5)`.
pub fn regularization_loss(set: &SphericalGaussianSet) -> AttributeLoss {
    let mut value = 0.0;
    let mut d_opacity = Vec::with_capacity(set.len());
    for g in &set.gaussians {
        let o = g.opacity;
        value += (1.0 + o * o / 0.5).ln();
        d_opacity.push(2.0 * o / (0.5 + o * o));
    }
    AttributeLoss {
        value,
        d_opacity,
        d_color: vec![0.0; set.len()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub eta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            eta: 0.3,
            lambda1: 0.2,
            lambda2: 2.0,
            lambda3: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub edge: f64,
    pub dssim: f64,
    pub opacity_color: f64,
    pub regularization: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub terms: LossTerms,
    pub grads: SplatGradients,
}

/// `(1 − λ1) L_edge + λ1 L_D-SSIM + λ2 L_oc + λ3 L_reg` for one view, with
/// gradients w.r.t. every Gaussian's center, opacity and color. `None` when
/// the view has no edge pixels.
pub fn total_loss(
    state: &RenderState,
    camera: &Camera,
    gt: &EdgeMap,
    set: &SphericalGaussianSet,
    weights: &LossWeights,
) -> Result<Option<TotalLoss>> {
    let rendered = state.image();
    let Some(edge) = edge_loss(&rendered, gt, weights.eta)? else {
        return Ok(None);
    };
    let dssim = dssim_loss(&rendered, gt)?;
    let l1 = weights.lambda1;
    let dl_dimage: Vec<f64> = edge
        .grad
        .iter()
        .zip(&dssim.grad)
        .map(|(e, d)| (1.0 - l1) * e + l1 * d)
        .collect();
    let mut grads = state.backward(camera, set.radius, &dl_dimage);
    let oc = opacity_color_loss(set);
    let reg = regularization_loss(set);
    for i in 0..set.len() {
        grads.d_opacity[i] += weights.lambda2 * oc.d_opacity[i] + weights.lambda3 * reg.d_opacity[i];
        grads.d_color[i] += weights.lambda2 * oc.d_color[i];
    }
    let total = (1.0 - l1) * edge.value
        + l1 * dssim.value
        + weights.lambda2 * oc.value
        + weights.lambda3 * reg.value;
    Ok(Some(TotalLoss {
        terms: LossTerms {
            edge: edge.value,
            dssim: dssim.value,
            opacity_color: oc.value,
            regularization: reg.value,
            total,
        },
        grads,
    }))
}
