use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use sgcr_core::curves::{chamfer, endpoint_loss, init_beziers, line_fitting, ExtractConfig, Segment};
use sgcr_core::geometry::bernstein3;
use sgcr_core::io::{gaussians_from_ply, gaussians_to_ply};
use sgcr_core::kdtree::{brute_force_nearest, KdTree};
use sgcr_core::metrics::{point_metrics, EvalOptions};
use sgcr_core::scene::{make_model, render_gt_edge_map, ModelSpec};
use sgcr_core::splat::render;
use sgcr_core::{Camera, Intrinsics, RationalBezier, SphericalGaussian, SphericalGaussianSet, Vec3};

fn unit_point() -> impl Strategy<Value = Vec3> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(unit_point(), 1..max)
}

fn camera_around() -> impl Strategy<Value = Camera> {
    (0.0..std::f64::consts::TAU, -1.2..1.2f64, 1.5..3.0f64).prop_map(|(az, el, r)| {
        let eye = Vector3::new(0.5 + r * el.cos() * az.cos(), 0.5 + r * el.cos() * az.sin(), 0.5 + r * el.sin());
        Camera::look_at(Intrinsics::from_fov(48, 48, 0.8), eye, Vec3::new(0.5, 0.5, 0.5), Vec3::z()).unwrap()
    })
}

fn gaussians(max: usize) -> impl Strategy<Value = SphericalGaussianSet> {
    prop::collection::vec((unit_point(), 0.0..=1.0f64, 0.0..=1.0f64), 1..max).prop_map(|v| SphericalGaussianSet {
        gaussians: v.into_iter().map(|(c, o, k)| SphericalGaussian::new(c, o, k)).collect(),
        radius: 0.02,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equal_weights_give_the_plain_cubic(
        p in prop::array::uniform4(unit_point()),
        w in 0.01..10.0f64,
        us in prop::collection::vec(0.0..=1.0f64, 50),
    ) {
        let c = RationalBezier::new(p, [w; 4]).unwrap();
        for u in us {
            let b = bernstein3(u);
            let plain = p[0] * b[0] + p[1] * b[1] + p[2] * b[2] + p[3] * b[3];
            prop_assert!((c.eval(u) - plain).norm() < 1e-12);
        }
        prop_assert_eq!(c.eval(0.0), p[0]);
        prop_assert!((c.eval(1.0) - p[3]).norm() < 1e-15);
    }

    #[test]
    fn unproject_inverts_project(cam in camera_around(), x in unit_point()) {
        let pr = cam.project_point(&x).unwrap();
        prop_assert!((cam.unproject(pr.u, pr.v, pr.depth) - x).norm() < 1e-9);
    }

    #[test]
    fn chamfer_is_nonnegative_and_zero_on_itself(a in cloud(60), b in cloud(60), gamma in 0.1..4.0f64) {
        prop_assert_eq!(chamfer(&a, &a, gamma).unwrap(), 0.0);
        prop_assert!(chamfer(&a, &b, gamma).unwrap() >= 0.0);
    }

    #[test]
    fn kdtree_nearest_is_brute_force(pts in cloud(200), qs in cloud(20)) {
        let tree = KdTree::new(&pts);
        for q in &qs {
            prop_assert_eq!(tree.nearest(q).unwrap().1, brute_force_nearest(&pts, q).unwrap().1);
        }
    }

    #[test]
    fn renders_stay_in_unit_range_and_repeat(set in gaussians(40), cam in camera_around()) {
        let a = render(&set, &cam);
        prop_assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a, render(&set, &cam));
    }

    #[test]
    fn hidden_line_maps_are_dominated(cam in camera_around()) {
        let model = make_model(&ModelSpec::two_boxes_occluding()).unwrap();
        let all = render_gt_edge_map(&model, &cam, 1.5, false);
        let visible = render_gt_edge_map(&model, &cam, 1.5, true);
        prop_assert!(all.pixels().iter().zip(visible.pixels()).all(|(a, v)| a >= v));
    }

    #[test]
    fn endpoint_loss_vanishes_iff_no_close_pair(segs in prop::collection::vec((unit_point(), unit_point()), 1..6), delta2 in 1e-4..0.05f64) {
        let segs: Vec<Segment> = segs.into_iter().map(|(p, q)| Segment { p, q }).collect();
        let curves = init_beziers(&segs);
        let ends: Vec<Vec3> = curves.iter().flat_map(|c| [c.start(), c.end()]).collect();
        let mut close = false;
        for i in 0..ends.len() {
            for j in i + 1..ends.len() {
                if (ends[i] - ends[j]).norm_squared() < delta2 {
                    close = true;
                }
            }
        }
        let l = endpoint_loss(&curves, delta2);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, !close, "loss {}", l);
    }

    #[test]
    fn metric_chamfer_is_symmetric(a in cloud(80), b in cloud(80)) {
        let o = EvalOptions::default();
        let ab = point_metrics(&a, &b, &o).unwrap();
        let ba = point_metrics(&b, &a, &o).unwrap();
        prop_assert!((ab.chamfer - ba.chamfer).abs() < 1e-12);
        prop_assert_eq!(ab.precision, ba.recall);
        let f = if ab.precision + ab.recall > 0.0 {
            2.0 * ab.precision * ab.recall / (ab.precision + ab.recall)
        } else {
            0.0
        };
        prop_assert!((ab.fscore - f).abs() < 1e-12);
    }

    #[test]
    fn rigid_motion_keeps_chamfer(a in cloud(60), b in cloud(60), axis in unit_point(), angle in 0.0..6.0f64, shift in unit_point()) {
        let r = Rotation3::from_scaled_axis((axis - Vec3::repeat(0.5)).normalize() * angle);
        let mv = |p: &Vec3| r * p + shift;
        let o = EvalOptions::default();
        let before = point_metrics(&a, &b, &o).unwrap().chamfer;
        let a2: Vec<Vec3> = a.iter().map(mv).collect();
        let b2: Vec<Vec3> = b.iter().map(mv).collect();
        prop_assert!((point_metrics(&a2, &b2, &o).unwrap().chamfer - before).abs() < 1e-9);
    }

    #[test]
    fn tighter_threshold_never_raises_precision_or_recall(a in cloud(80), b in cloud(80), t in 0.01..0.3f64, s in 0.1..1.0f64) {
        let loose = point_metrics(&a, &b, &EvalOptions { threshold: t, ..EvalOptions::default() }).unwrap();
        let tight = point_metrics(&a, &b, &EvalOptions { threshold: t * s, ..EvalOptions::default() }).unwrap();
        prop_assert!(tight.precision <= loose.precision && tight.recall <= loose.recall);
    }

    #[test]
    fn gaussian_interchange_roundtrips(set in gaussians(30)) {
        prop_assert_eq!(gaussians_from_ply(&gaussians_to_ply(&set)).unwrap(), set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn line_fitting_consumes_gaussians(pts in cloud(120), seed in 0..1000u64) {
        let set = SphericalGaussianSet {
            gaussians: pts.iter().map(|p| SphericalGaussian::new(*p, 1.0, 1.0)).collect(),
            radius: 0.005,
        };
        let cfg = ExtractConfig { seed, n_searches: 4, inner_iters: 20, ..ExtractConfig::default() };
        let fit = line_fitting(&set, &cfg).unwrap();
        // each kept segment removed at least n0 Gaussians
        prop_assert!(fit.remaining + fit.segments.len() * cfg.n0 <= set.len());
        prop_assert!(fit.segments.iter().all(|s| s.p != s.q));
    }
}
