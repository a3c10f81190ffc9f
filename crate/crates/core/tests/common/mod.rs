#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgcr_core::geometry::{Camera, Intrinsics, Vec3};
use sgcr_core::image::EdgeMap;
use sgcr_core::losses::{total_loss, LossWeights};
use sgcr_core::splat::{RenderSettings, RenderState, RenderTrace, SphericalGaussian, SphericalGaussianSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random scene: up to `n` Gaussians in front of a 32×32 camera.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize, size: usize) -> (SphericalGaussianSet, Camera, EdgeMap) {
    let k = Intrinsics::from_fov(size, size, 0.7);
    let eye = Vec3::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5), rng.random_range(1.5..2.5));
    let cam = Camera::look_at(k, eye, Vec3::zeros(), Vec3::z()).unwrap();
    let gaussians = (0..n)
        .map(|_| {
            SphericalGaussian::new(
                Vec3::new(rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25)),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            )
        })
        .collect();
    let set = SphericalGaussianSet { gaussians, radius: rng.random_range(0.02..0.05) };
    let gt: Vec<f64> = (0..size * size)
        .map(|_| if rng.random_bool(0.15) { rng.random_range(0.3..1.0) } else { rng.random_range(0.0..0.2) })
        .collect();
    (set, cam, EdgeMap::from_pixels(size, size, gt).unwrap())
}

pub fn objective(set: &SphericalGaussianSet, cam: &Camera, gt: &EdgeMap, w: &LossWeights) -> (f64, RenderTrace) {
    let state = RenderState::forward(set, cam, &RenderSettings::default());
    let l = total_loss(&state, cam, gt, set, w).unwrap().expect("edge pixels");
    (l.terms.total, state.trace())
}

/// Central difference of `f` at `x` along one coordinate, shrinking the step
/// until both probes take the same discrete branches of the renderer.
/// Returns `None` if no such step exists down to `h·1e-3`.
pub fn central_difference<F>(f: F, h: f64) -> Option<f64>
where
    F: Fn(f64) -> (f64, RenderTrace),
{
    let base = f(0.0).1;
    let mut step = h;
    for _ in 0..4 {
        let (fp, tp) = f(step);
        let (fm, tm) = f(-step);
        if tp == base && tm == base {
            return Some((fp - fm) / (2.0 * step));
        }
        step *= 0.1;
    }
    None
}

pub fn close(analytic: f64, numeric: f64, rel: f64, abs: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs || diff <= rel * analytic.abs().max(numeric.abs())
}
