//! Synthetic wireframe scenes, camera rigs and analytic ground-truth edge maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arc, Camera, Intrinsics, Solid, Vec3, WireframeModel};
use crate::image::EdgeMap;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Arc-length spacing of the evaluation reference points.
pub const GT_POINT_SPACING: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Cube {
        center: [f64; 3],
        side: f64,
    },
    /// Upright cylinder; only the two rim circles are edges.
    Cylinder {
        center: [f64; 3],
        radius: f64,
        height: f64,
    },
    /// Box with a vertical through-hole.
    BoxWithHole {
        center: [f64; 3],
        size: [f64; 3],
        hole_radius: f64,
    },
    /// A wide slab standing in front of a smaller block.
    TwoBoxesOccluding {
        front_center: [f64; 3],
        front_size: [f64; 3],
        back_center: [f64; 3],
        back_size: [f64; 3],
    },
}

impl ModelSpec {
    pub fn cube() -> Self {
        ModelSpec::Cube {
            center: [0.5, 0.5, 0.5],
            side: 0.4,
        }
    }

    pub fn cylinder() -> Self {
        ModelSpec::Cylinder {
            center: [0.5, 0.5, 0.5],
            radius: 0.2,
            height: 0.5,
        }
    }

    pub fn box_with_hole() -> Self {
        ModelSpec::BoxWithHole {
            center: [0.5, 0.5, 0.5],
            size: [0.6, 0.6, 0.3],
            hole_radius: 0.15,
        }
    }

    pub fn two_boxes_occluding() -> Self {
        ModelSpec::TwoBoxesOccluding {
            front_center: [0.5, 0.32, 0.45],
            front_size: [0.6, 0.12, 0.6],
            back_center: [0.5, 0.7, 0.35],
            back_size: [0.3, 0.3, 0.4],
        }
    }
}

fn v(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn box_segments(min: Vec3, max: Vec3) -> Vec<(Vec3, Vec3)> {
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let mut out = Vec::with_capacity(12);
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            if i & bit == 0 {
                out.push((corner(i), corner(i | bit)));
            }
        }
    }
    out
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive")))
    }
}

pub fn make_model(spec: &ModelSpec) -> Result<WireframeModel> {
    let model = match spec {
        ModelSpec::Cube { center, side } => {
            check_positive("side", *side)?;
            let c = v(*center);
            let h = Vec3::repeat(side / 2.0);
            WireframeModel {
                segments: box_segments(c - h, c + h),
                arcs: vec![],
                occluder_solids: vec![],
            }
        }
        ModelSpec::Cylinder {
            center,
            radius,
            height,
        } => {
            check_positive("radius", *radius)?;
            check_positive("height", *height)?;
            let c = v(*center);
            let half = Vec3::new(0.0, 0.0, height / 2.0);
            WireframeModel {
                segments: vec![],
                arcs: vec![
                    Arc::full_circle(c - half, Vec3::z(), *radius),
                    Arc::full_circle(c + half, Vec3::z(), *radius),
                ],
                occluder_solids: vec![Solid::Cylinder {
                    base: c - half,
                    axis: Vec3::z(),
                    radius: *radius,
                    height: *height,
                }],
            }
        }
        ModelSpec::BoxWithHole {
            center,
            size,
            hole_radius,
        } => {
            let c = v(*center);
            let h = v(*size) / 2.0;
            for (k, s) in size.iter().enumerate() {
                check_positive(&format!("size[{k}]"), *s)?;
            }
            check_positive("hole_radius", *hole_radius)?;
            if *hole_radius >= h.x.min(h.y) {
                return Err(Error::InvalidParameter("hole does not fit in the box".into()));
            }
            let half = Vec3::new(0.0, 0.0, h.z);
            WireframeModel {
                segments: box_segments(c - h, c + h),
                arcs: vec![
                    Arc::full_circle(c - half, Vec3::z(), *hole_radius),
                    Arc::full_circle(c + half, Vec3::z(), *hole_radius),
                ],
                occluder_solids: vec![Solid::Box {
                    min: c - h,
                    max: c + h,
                }],
            }
        }
        ModelSpec::TwoBoxesOccluding {
            front_center,
            front_size,
            back_center,
            back_size,
        } => {
            for s in front_size.iter().chain(back_size.iter()) {
                check_positive("box size", *s)?;
            }
            let (fc, fh) = (v(*front_center), v(*front_size) / 2.0);
            let (bc, bh) = (v(*back_center), v(*back_size) / 2.0);
            let mut segments = box_segments(fc - fh, fc + fh);
            segments.extend(box_segments(bc - bh, bc + bh));
            WireframeModel {
                segments,
                arcs: vec![],
                occluder_solids: vec![
                    Solid::Box {
                        min: fc - fh,
                        max: fc + fh,
                    },
                    Solid::Box {
                        min: bc - bh,
                        max: bc + bh,
                    },
                ],
            }
        }
    };
    model.validate()?;
    Ok(model)
}

/// Cameras on horizontal rings around `target`, evenly spaced in azimuth
/// within each ring. `n` is the total count, split across the rings as
/// evenly as possible (earlier rings take the remainder). Ring `j` is
/// rotated by a golden-ratio fraction of its azimuth step so that rings do
/// not share viewing planes.
pub fn sample_camera_ring(
    n: usize,
    radius: f64,
    elevation_angles: &[f64],
    target: Vec3,
    intrinsics: Intrinsics,
) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one camera".into()));
    }
    let rings = if elevation_angles.is_empty() {
        &[0.0][..]
    } else {
        elevation_angles
    };
    let mut cams = Vec::with_capacity(n);
    for (j, &elev) in rings.iter().enumerate() {
        let count = n / rings.len() + usize::from(j < n % rings.len());
        let stagger = (j as f64 * GOLDEN).fract();
        for i in 0..count {
            let az = std::f64::consts::TAU * (i as f64 + stagger) / count as f64;
            let dir = Vec3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
            cams.push(Camera::look_at(intrinsics, target + dir * radius, target, Vec3::z())?);
        }
    }
    Ok(cams)
}

/// Rig description used by the synthesizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    pub views: usize,
    pub radius: f64,
    pub elevations_deg: Vec<f64>,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, degrees.
    pub fov_deg: f64,
    pub target: [f64; 3],
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec {
            views: 30,
            radius: 2.2,
            elevations_deg: vec![50.0, 20.0, -15.0, -45.0, 5.0],
            width: 256,
            height: 256,
            fov_deg: 45.0,
            target: [0.5, 0.5, 0.5],
        }
    }
}

impl RigSpec {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.width, self.height, self.fov_deg.to_radians())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let elev: Vec<f64> = self.elevations_deg.iter().map(|d| d.to_radians()).collect();
        let target = v(self.target);
        // every camera must see the whole unit cube from outside it
        if self.radius <= 3f64.sqrt() / 2.0 + (target - Vec3::repeat(0.5)).norm() {
            return Err(Error::InvalidParameter("camera radius inside the scene".into()));
        }
        sample_camera_ring(self.views, self.radius, &elev, target, self.intrinsics())
    }
}

/// Distance from `p` to the 2-D segment `a`–`b`.
fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn rasterize_segment(map: &mut EdgeMap, a: (f64, f64), b: (f64, f64), width: f64) {
    let (w, h) = (map.width() as f64, map.height() as f64);
    let x0 = (a.0.min(b.0) - width).floor().max(0.0);
    let x1 = (a.0.max(b.0) + width).ceil().min(w - 1.0);
    let y0 = (a.1.min(b.1) - width).floor().max(0.0);
    let y1 = (a.1.max(b.1) + width).ceil().min(h - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let d = point_segment_distance((x as f64, y as f64), a, b);
            if d < width {
                map.splat_max(x, y, 1.0 - d / width);
            }
        }
    }
}

/// Anti-aliased edge map of `model` seen from `camera`: 1 on the projected
/// centerline, falling off linearly to 0 at `line_width_px`. With
/// `hidden_line_removal`, edge samples behind an occluder solid are dropped.
pub fn render_gt_edge_map(
    model: &WireframeModel,
    camera: &Camera,
    line_width_px: f64,
    hidden_line_removal: bool,
) -> EdgeMap {
    let mut map = EdgeMap::zeros(camera.width(), camera.height());
    if model.is_empty() {
        return map;
    }
    // choose a 3-d sampling step that stays below a quarter pixel
    let min_depth = model
        .sample_points(0.01)
        .iter()
        .map(|p| camera.to_camera(p).z)
        .fold(f64::INFINITY, f64::min)
        .max(0.05);
    let f = camera.intrinsics.fx.max(camera.intrinsics.fy);
    let spacing = (0.25 * min_depth / f).min(GT_POINT_SPACING);
    let eye = camera.center();
    for line in model.polylines(spacing) {
        let proj: Vec<Option<(f64, f64)>> = line
            .iter()
            .map(|p| {
                if hidden_line_removal && model.is_occluded(&eye, p) {
                    return None;
                }
                camera.project_point(p).ok().map(|q| (q.u, q.v))
            })
            .collect();
        for w in proj.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                rasterize_segment(&mut map, a, b, line_width_px);
            }
        }
    }
    map
}

/// Everything the pipeline needs about one synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub model: WireframeModel,
    pub cameras: Vec<Camera>,
    pub edge_maps: Vec<EdgeMap>,
    pub gt_points: Vec<Vec3>,
}

pub fn synthesize(
    spec: &ModelSpec,
    rig: &RigSpec,
    line_width_px: f64,
    hidden_line_removal: bool,
) -> Result<SceneBundle> {
    if line_width_px < 1.0 {
        return Err(Error::InvalidParameter("line width must be at least one pixel".into()));
    }
    let model = make_model(spec)?;
    let cameras = rig.cameras()?;
    let edge_maps = cameras
        .par_iter()
        .map(|c| render_gt_edge_map(&model, c, line_width_px, hidden_line_removal))
        .collect();
    let gt_points = model.sample_points(GT_POINT_SPACING);
    Ok(SceneBundle {
        model,
        cameras,
        edge_maps,
        gt_points,
    })
}
