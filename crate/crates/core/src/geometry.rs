//! Shared geometric types: pinhole cameras, cubic rational Bézier curves and
//! analytic wireframe models.
//!
//! Conventions: right-handed world, angles in radians. The camera frame has
//! +x to the right, +y down and looks along +z.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Depth below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Principal point at the image center and the given full horizontal
    /// field of view. Pixel `(x, y)` is sampled at continuous coordinates
    /// `(x, y)`, so the center is `((w - 1) / 2, (h - 1) / 2)`.
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Intrinsics {
            fx: f,
            fy: f,
            cx: 0.5 * (width as f64 - 1.0),
            cy: 0.5 * (height as f64 - 1.0),
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole camera with a rigid world-to-camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub world_to_camera: Matrix4<f64>,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, world_to_camera: Matrix4<f64>) -> Result<Self> {
        let cam = Camera {
            intrinsics,
            world_to_camera,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        if k.width == 0 || k.height == 0 {
            return Err(Error::InvalidParameter("image size must be positive".into()));
        }
        if !(k.cx >= 0.0 && k.cx < k.width as f64 && k.cy >= 0.0 && k.cy < k.height as f64) {
            return Err(Error::InvalidParameter("principal point outside the image".into()));
        }
        let r = self.rotation();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("pose rotation is not orthonormal".into()));
        }
        let last = self.world_to_camera.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidParameter("pose last row must be (0,0,0,1)".into()));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`. `up` only fixes the roll; the
    /// image y axis points away from it.
    pub fn look_at(intrinsics: Intrinsics, eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidParameter("eye coincides with target".into()))?;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            // looking straight along `up`; any roll will do
            let alt = if forward.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Camera::new(intrinsics, m)
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation()
    }

    pub fn project_point(&self, p: &Vec3) -> Result<Projection> {
        let c = self.to_camera(p);
        if c.z <= MIN_DEPTH {
            return Err(Error::BehindCamera(c.z));
        }
        let k = &self.intrinsics;
        Ok(Projection {
            u: k.fx * c.x / c.z + k.cx,
            v: k.fy * c.y / c.z + k.cy,
            depth: c.z,
        })
    }

    /// Inverse of [`Camera::project_point`]: the world point at `depth`
    /// along the ray through pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        let c = Vec3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
        self.rotation().transpose() * (c - self.translation())
    }
}

/// Cubic rational Bézier curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalBezier {
    pub control_points: [Vec3; 4],
    pub weights: [f64; 4],
}

/// Cubic Bernstein basis at `u`.
pub fn bernstein3(u: f64) -> [f64; 4] {
    let s = 1.0 - u;
    [s * s * s, 3.0 * s * s * u, 3.0 * s * u * u, u * u * u]
}

impl RationalBezier {
    pub fn new(control_points: [Vec3; 4], weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("bezier weights must be positive".into()));
        }
        if control_points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter("bezier control point not finite".into()));
        }
        Ok(RationalBezier {
            control_points,
            weights,
        })
    }

    /// Plain cubic (all weights one).
    pub fn polynomial(control_points: [Vec3; 4]) -> Self {
        RationalBezier {
            control_points,
            weights: [1.0; 4],
        }
    }

    pub fn start(&self) -> Vec3 {
        self.control_points[0]
    }

    pub fn end(&self) -> Vec3 {
        self.control_points[3]
    }

    pub fn eval(&self, u: f64) -> Vec3 {
        if u <= 0.0 {
            return self.control_points[0];
        }
        if u >= 1.0 {
            return self.control_points[3];
        }
        let b = bernstein3(u);
        let mut num = Vec3::zeros();
        let mut den = 0.0;
        for i in 0..4 {
            let bw = b[i] * self.weights[i];
            num += self.control_points[i] * bw;
            den += bw;
        }
        num / den
    }

    /// `n` points at uniform parameter spacing, endpoints included.
    pub fn sample(&self, n: usize) -> Vec<Vec3> {
        assert!(n >= 2, "need at least two samples");
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| match i {
                0 => self.control_points[0],
                _ if i == n - 1 => self.control_points[3],
                _ => self.eval(i as f64 / last),
            })
            .collect()
    }

    /// Polyline length from `n` uniform parameter samples.
    pub fn approx_length(&self, n: usize) -> f64 {
        self.sample(n).windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Points spaced (approximately) `spacing` apart in arc length.
    pub fn sample_arc_length(&self, spacing: f64) -> Vec<Vec3> {
        const DENSE: usize = 2048;
        let dense = self.sample(DENSE);
        let mut cumulative = Vec::with_capacity(DENSE);
        cumulative.push(0.0);
        for w in dense.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        let total = *cumulative.last().unwrap();
        let n = ((total / spacing).ceil() as usize).max(1) + 1;
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        for i in 0..n {
            let s = total * i as f64 / (n - 1) as f64;
            while seg + 1 < DENSE - 1 && cumulative[seg + 1] < s {
                seg += 1;
            }
            let span = cumulative[seg + 1] - cumulative[seg];
            let t = if span > 0.0 { (s - cumulative[seg]) / span } else { 0.0 };
            out.push(dense[seg] + (dense[seg + 1] - dense[seg]) * t.clamp(0.0, 1.0));
        }
        out
    }
}

/// Circular arc around `axis` through `center`. Angles are measured from the
/// reference direction returned by [`Arc::basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: Vec3,
    pub axis: Vec3,
    pub radius: f64,
    pub start_angle: f64,
    pub end_angle: f64,
}

impl Arc {
    pub fn full_circle(center: Vec3, axis: Vec3, radius: f64) -> Self {
        Arc {
            center,
            axis: axis.normalize(),
            radius,
            start_angle: 0.0,
            end_angle: std::f64::consts::TAU,
        }
    }

    /// Orthonormal in-plane basis (u, v) with u × v = axis.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let a = if self.axis.x.abs() > 0.9 { Vec3::y() } else { Vec3::x() };
        let u = (a - self.axis * a.dot(&self.axis)).normalize();
        let v = self.axis.cross(&u);
        (u, v)
    }

    pub fn point_at(&self, theta: f64) -> Vec3 {
        let (u, v) = self.basis();
        self.center + (u * theta.cos() + v * theta.sin()) * self.radius
    }

    pub fn length(&self) -> f64 {
        self.radius * (self.end_angle - self.start_angle).abs()
    }
}

/// Analytic solid used for hidden-line tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Solid {
    Box { min: Vec3, max: Vec3 },
    /// Finite cylinder from `base` along unit `axis` for `height`.
    Cylinder {
        base: Vec3,
        axis: Vec3,
        radius: f64,
        height: f64,
    },
}

impl Solid {
    /// Parametric interval `[t0, t1]` where the ray `origin + t·dir` is
    /// inside the solid, if any.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        match self {
            Solid::Box { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for k in 0..3 {
                    if dir[k].abs() < 1e-300 {
                        if origin[k] < min[k] || origin[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (min[k] - origin[k]) / dir[k];
                    let b = (max[k] - origin[k]) / dir[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                (t0 <= t1).then_some((t0, t1))
            }
            Solid::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                // slab along the axis
                let o_ax = (origin - base).dot(axis);
                let d_ax = dir.dot(axis);
                let (mut t0, mut t1) = if d_ax.abs() < 1e-300 {
                    if o_ax < 0.0 || o_ax > *height {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let a = -o_ax / d_ax;
                    let b = (height - o_ax) / d_ax;
                    (a.min(b), a.max(b))
                };
                // infinite cylinder
                let o_perp = (origin - base) - axis * o_ax;
                let d_perp = dir - axis * d_ax;
                let qa = d_perp.norm_squared();
                let qb = 2.0 * o_perp.dot(&d_perp);
                let qc = o_perp.norm_squared() - radius * radius;
                if qa < 1e-300 {
                    if qc > 0.0 {
                        return None;
                    }
                } else {
                    let disc = qb * qb - 4.0 * qa * qc;
                    if disc < 0.0 {
                        return None;
                    }
                    let sq = disc.sqrt();
                    t0 = t0.max((-qb - sq) / (2.0 * qa));
                    t1 = t1.min((-qb + sq) / (2.0 * qa));
                }
                (t0 <= t1).then_some((t0, t1))
            }
        }
    }

    fn within_unit_cube(&self) -> bool {
        let inside = |p: &Vec3| p.iter().all(|c| (-1e-12..=1.0 + 1e-12).contains(c));
        match self {
            Solid::Box { min, max } => inside(min) && inside(max),
            Solid::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                let top = base + axis * *height;
                // conservative: axis-aligned bound of the two cap discs
                (0..3).all(|k| {
                    let ext = radius * (1.0 - axis[k] * axis[k]).max(0.0).sqrt();
                    base[k].min(top[k]) - ext >= -1e-12 && base[k].max(top[k]) + ext <= 1.0 + 1e-12
                })
            }
        }
    }
}

/// Ground-truth edge set: straight segments and circular arcs, plus the
/// solids that can hide them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireframeModel {
    pub segments: Vec<(Vec3, Vec3)>,
    pub arcs: Vec<Arc>,
    pub occluder_solids: Vec<Solid>,
}

impl WireframeModel {
    pub fn validate(&self) -> Result<()> {
        let inside = |p: &Vec3| p.iter().all(|c| (-1e-12..=1.0 + 1e-12).contains(c));
        for (a, b) in &self.segments {
            if !inside(a) || !inside(b) {
                return Err(Error::OutOfBounds(format!("segment {a:?} -> {b:?}")));
            }
        }
        for arc in &self.arcs {
            if (arc.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter("arc axis is not unit length".into()));
            }
            // the extreme points of a circle lie within radius·sqrt(1 - a_k²) of its center
            let out = (0..3).any(|k| {
                let ext = arc.radius * (1.0 - arc.axis[k] * arc.axis[k]).max(0.0).sqrt();
                arc.center[k] - ext < -1e-12 || arc.center[k] + ext > 1.0 + 1e-12
            });
            if out {
                return Err(Error::OutOfBounds(format!("arc around {:?}", arc.center)));
            }
        }
        for s in &self.occluder_solids {
            if !s.within_unit_cube() {
                return Err(Error::OutOfBounds(format!("solid {s:?}")));
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        let seg: f64 = self.segments.iter().map(|(a, b)| (b - a).norm()).sum();
        let arcs: f64 = self.arcs.iter().map(Arc::length).sum();
        seg + arcs
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty() && self.arcs.is_empty()
    }

    /// Edge polylines with consecutive points at most `spacing` apart, one
    /// per primitive.
    pub fn polylines(&self, spacing: f64) -> Vec<Vec<Vec3>> {
        let mut out = Vec::with_capacity(self.segments.len() + self.arcs.len());
        for (a, b) in &self.segments {
            let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
            out.push((0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect());
        }
        for arc in &self.arcs {
            let n = (arc.length() / spacing).ceil().max(1.0) as usize;
            let span = arc.end_angle - arc.start_angle;
            out.push(
                (0..=n)
                    .map(|i| arc.point_at(arc.start_angle + span * i as f64 / n as f64))
                    .collect(),
            );
        }
        out
    }

    /// Uniform arc-length samples over every edge.
    pub fn sample_points(&self, spacing: f64) -> Vec<Vec3> {
        self.polylines(spacing).into_iter().flatten().collect()
    }

    /// True when something solid lies on the segment between `eye` and `p`,
    /// strictly before `p`.
    pub fn is_occluded(&self, eye: &Vec3, p: &Vec3) -> bool {
        const TOL: f64 = 1e-7;
        let dir = p - eye;
        self.occluder_solids.iter().any(|s| match s.ray_interval(eye, &dir) {
            // t = 1 is the sample itself; require a real passage through the
            // solid before reaching it
            Some((t0, t1)) => {
                let enter = t0.max(0.0);
                let leave = t1.min(1.0 - TOL);
                leave - enter > TOL
            }
            None => false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simple_camera() -> Camera {
        let k = Intrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 100,
            height: 100,
        };
        Camera::new(k, Matrix4::identity()).unwrap()
    }

    #[test]
    fn projects_principal_point() {
        let p = simple_camera().project_point(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 1.0));
    }

    #[test]
    fn projects_offset_point() {
        let p = simple_camera().project_point(&Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p.u, 60.0, epsilon = 1e-12);
        assert_eq!(p.v, 50.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let r = simple_camera().project_point(&Vec3::new(0.0, 0.0, -1.0));
        assert!(matches!(r, Err(Error::BehindCamera(_))));
    }

    #[test]
    fn rejects_non_orthonormal_pose() {
        let mut m = Matrix4::identity();
        m[(0, 0)] = 1.1;
        assert!(Camera::new(simple_camera().intrinsics, m).is_err());
    }

    #[test]
    fn look_at_centers_target() {
        let k = Intrinsics::from_fov(64, 64, 0.8);
        let target = Vec3::new(0.5, 0.5, 0.5);
        let cam = Camera::look_at(k, Vec3::new(2.0, -1.0, 1.3), target, Vec3::z()).unwrap();
        let p = cam.project_point(&target).unwrap();
        assert!((p.u - 31.5).abs() < 1e-9 && (p.v - 31.5).abs() < 1e-9);
        assert_relative_eq!(cam.center(), Vec3::new(2.0, -1.0, 1.3), epsilon = 1e-12);
    }

    #[test]
    fn bezier_endpoints_and_line() {
        let c = RationalBezier::polynomial([
            Vec3::zeros(),
            Vec3::new(1.0 / 3.0, 0.0, 0.0),
            Vec3::new(2.0 / 3.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ]);
        assert_eq!(c.eval(0.0), Vec3::zeros());
        assert_relative_eq!(c.eval(0.5), Vec3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        let xs: Vec<f64> = c.sample(5).iter().map(|p| p.x).collect();
        for (x, e) in xs.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert_relative_eq!(*x, e, epsilon = 1e-15);
        }
        let two = c.sample(2);
        assert_eq!(two, vec![c.start(), c.end()]);
    }

    #[test]
    fn elevated_quarter_circle_is_exact() {
        // quadratic arc (1,0) (1,1) (0,1) with middle weight 1/sqrt 2, raised to degree three
        let w1 = std::f64::consts::FRAC_1_SQRT_2;
        let (p0, p1, p2) = (Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y());
        let wm = (1.0 + 2.0 * w1) / 3.0;
        let q1 = (p0 + p1 * (2.0 * w1)) / (3.0 * wm);
        let q2 = (p1 * (2.0 * w1) + p2) / (3.0 * wm);
        let c = RationalBezier::new([p0, q1, q2, p2], [1.0, wm, wm, 1.0]).unwrap();
        for p in c.sample(100) {
            assert!((p.norm() - 1.0).abs() < 1e-9);
        }
        for i in 0..=1000 {
            assert!((c.eval(i as f64 / 1000.0).norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_nonpositive_weights() {
        assert!(RationalBezier::new([Vec3::zeros(); 4], [1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn arc_length_sampling_is_uniform() {
        let c = RationalBezier::polynomial([
            Vec3::zeros(),
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.2, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ]);
        let pts = c.sample_arc_length(0.01);
        let gaps: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let (lo, hi) = gaps
            .iter()
            .fold((f64::MAX, 0.0f64), |(lo, hi), g| (lo.min(*g), hi.max(*g)));
        assert!(hi <= 0.0101 && lo > 0.0095, "{lo} {hi}");
    }

    #[test]
    fn box_ray_interval() {
        let s = Solid::Box {
            min: Vec3::new(0.4, 0.4, 0.4),
            max: Vec3::new(0.6, 0.6, 0.6),
        };
        let (t0, t1) = s
            .ray_interval(&Vec3::new(0.0, 0.5, 0.5), &Vec3::new(1.0, 0.0, 0.0))
            .unwrap();
        assert_relative_eq!(t0, 0.4, epsilon = 1e-15);
        assert_relative_eq!(t1, 0.6, epsilon = 1e-15);
        assert!(s
            .ray_interval(&Vec3::new(0.0, 0.9, 0.5), &Vec3::new(1.0, 0.0, 0.0))
            .is_none());
    }

    #[test]
    fn cylinder_ray_interval() {
        let s = Solid::Cylinder {
            base: Vec3::new(0.5, 0.5, 0.2),
            axis: Vec3::z(),
            radius: 0.1,
            height: 0.6,
        };
        let (t0, t1) = s
            .ray_interval(&Vec3::new(0.0, 0.5, 0.5), &Vec3::new(1.0, 0.0, 0.0))
            .unwrap();
        assert_relative_eq!(t0, 0.4, epsilon = 1e-12);
        assert_relative_eq!(t1, 0.6, epsilon = 1e-12);
        // above the top cap
        assert!(s
            .ray_interval(&Vec3::new(0.0, 0.5, 0.9), &Vec3::new(1.0, 0.0, 0.0))
            .is_none());
        // straight down the axis
        let (t0, t1) = s
            .ray_interval(&Vec3::new(0.5, 0.5, 1.0), &Vec3::new(0.0, 0.0, -1.0))
            .unwrap();
        assert_relative_eq!(t0, 0.2, epsilon = 1e-12);
        assert_relative_eq!(t1, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn occlusion_requires_passage_before_sample() {
        let model = WireframeModel {
            occluder_solids: vec![Solid::Box {
                min: Vec3::new(0.4, 0.4, 0.4),
                max: Vec3::new(0.6, 0.6, 0.6),
            }],
            ..Default::default()
        };
        let eye = Vec3::new(-2.0, 0.5, 0.5);
        assert!(model.is_occluded(&eye, &Vec3::new(0.8, 0.5, 0.5)));
        // a point on the near face is visible
        assert!(!model.is_occluded(&eye, &Vec3::new(0.4, 0.5, 0.5)));
        assert!(!model.is_occluded(&eye, &Vec3::new(0.2, 0.5, 0.5)));
    }
}
