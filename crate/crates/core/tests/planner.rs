use std::sync::OnceLock;

use nalgebra::Rotation3;
use primplan::planner::{replan, select_trajectory, velocity_frame, Aabb, PlannerConfig, PlannerState, Selection};
use primplan::{build_index, build_library, check, CollisionIndex, Preset, PrimitiveLibrary, RunConfig, Vector3};
use proptest::prelude::*;

fn high() -> &'static (PrimitiveLibrary, CollisionIndex) {
    static BUILT: OnceLock<(PrimitiveLibrary, CollisionIndex)> = OnceLock::new();
    BUILT.get_or_init(|| {
        let cfg = RunConfig::from_preset(Preset::High);
        let lib = build_library(&cfg.library).unwrap();
        let idx = build_index(&lib, cfg.index).unwrap();
        (lib, idx)
    })
}

fn open_box() -> PlannerConfig {
    PlannerConfig::with_box(Aabb::new(Vector3::repeat(-1e3), Vector3::repeat(1e3)))
}

fn state(position: Vector3<f64>, velocity: Vector3<f64>, goal: Vector3<f64>) -> PlannerState {
    PlannerState { position, velocity, goal, previous_y: None, yaw: None }
}

fn chosen_path(sel: &Selection, lib: &PrimitiveLibrary) -> Option<usize> {
    match sel {
        Selection::Primitive(id) => Some(lib.primitive(*id).path_id),
        Selection::EmergencyStop => None,
    }
}

fn straight_path(lib: &PrimitiveLibrary) -> usize {
    lib.paths.iter().position(|p| p.arc.radius.is_infinite()).unwrap()
}

#[test]
fn free_space_goes_straight() {
    let (lib, idx) = high();
    let cfg = open_box();
    for speed in [0.0, 1.0, 2.9] {
        let s = state(Vector3::new(0.0, 0.0, 1.0), Vector3::new(speed, 0.0, 0.0), Vector3::new(30.0, 0.0, 1.0));
        let out = replan(&s, &[], lib, idx, &cfg).unwrap();
        assert_eq!(chosen_path(&out.selection, lib), Some(straight_path(lib)), "speed {speed}");
    }
}

#[test]
fn blocked_straight_path_curves_away() {
    let (lib, idx) = high();
    let cfg = open_box();
    let s = state(Vector3::new(0.0, 0.0, 1.0), Vector3::new(2.0, 0.0, 0.0), Vector3::new(30.0, 0.0, 1.0));
    // A small plate 3 m ahead.
    let mut wall = Vec::new();
    for j in -2..=2 {
        for k in -2..=2 {
            wall.push(Vector3::new(3.0, j as f64 * 0.05, 1.0 + k as f64 * 0.05));
        }
    }
    let out = replan(&s, &wall, lib, idx, &cfg).unwrap();
    let Selection::Primitive(id) = out.selection else { panic!("expected a primitive") };
    let prim = lib.primitive(id);
    assert!(!lib.paths[prim.path_id].arc.radius.is_infinite());
    // The chosen primitive keeps the query distance from every wall point.
    let qd = idx.params.query_distance();
    for k in &out.trajectory.knots {
        for p in &wall {
            assert!((k.position - p).norm() > qd - idx.params.voxel_size);
        }
    }
}

#[test]
fn out_of_bounds_end_loses() {
    let (lib, idx) = high();
    // Box stops 4.9 m ahead: the straight and gently curved primitives end outside it.
    let cfg = PlannerConfig::with_box(Aabb::new(Vector3::new(-10.0, -10.0, -10.0), Vector3::new(4.9, 10.0, 10.0)));
    let frame = velocity_frame(&Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros(), &Vector3::new(30.0, 0.0, 0.0), 0.05, None)
        .unwrap();
    let slice = lib.speed_index_for(1.0);
    let mask = check(idx, &[], slice).unwrap();
    let sel = select_trajectory(&mask, lib, &frame, &Vector3::new(30.0, 0.0, 0.0), &cfg).unwrap();
    let Selection::Primitive(id) = sel else { panic!("expected a primitive") };
    let end = frame.to_world(&lib.primitive(id).trajectory.end().position);
    assert!(cfg.bounds_box.contains(&end), "{end:?}");
    let straight = lib.get(straight_path(lib), slice).unwrap();
    assert!(!cfg.bounds_box.contains(&frame.to_world(&straight.trajectory.end().position)));
}

#[test]
fn surrounded_vehicle_stops() {
    let (lib, idx) = high();
    let cfg = open_box();
    let mut cloud = Vec::new();
    for i in 0..40 {
        for k in -10..=10 {
            let a = i as f64 / 40.0 * std::f64::consts::TAU;
            cloud.push(Vector3::new(0.8 * a.cos(), 0.8 * a.sin(), 1.0 + k as f64 * 0.1));
        }
    }
    let s = state(Vector3::new(0.0, 0.0, 1.0), Vector3::new(2.0, 0.0, 0.0), Vector3::new(30.0, 0.0, 1.0));
    let out = replan(&s, &cloud, lib, idx, &cfg).unwrap();
    assert!(matches!(out.selection, Selection::EmergencyStop));
    assert_eq!(out.mask.safe_count(), 0);
    let end = out.trajectory.end();
    assert!(end.velocity.norm() < 1e-9);
    assert!((out.trajectory.duration() - 2.0 / lib.bounds().min_abs_accel()).abs() < 0.02);
}

#[test]
fn stationary_start_uses_slice_zero() {
    let (lib, idx) = high();
    let s = state(Vector3::new(-18.0, -9.0, 1.0), Vector3::zeros(), Vector3::new(18.0, 9.0, 1.0));
    let out = replan(&s, &[], lib, idx, &open_box()).unwrap();
    assert_eq!(out.speed_index, 0);
    let start = out.trajectory.start();
    assert!(start.velocity.norm() < 1e-9);
    assert!((start.position - s.position).norm() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectory_starts_tangent_at_slice_speed(
        speed in 0.2f64..3.0, heading in 0.0f64..std::f64::consts::TAU, vz in -0.3f64..0.3,
    ) {
        let (lib, idx) = high();
        let v = Vector3::new(speed * heading.cos(), speed * heading.sin(), vz);
        let s = state(Vector3::new(1.0, 2.0, 1.5), v, Vector3::new(-20.0, 5.0, 1.0));
        let out = replan(&s, &[], lib, idx, &open_box()).unwrap();
        let k0 = out.trajectory.start();
        prop_assert!((k0.position - s.position).norm() < 1e-9);
        let angle = k0.velocity.normalize().dot(&v.normalize()).clamp(-1.0, 1.0).acos();
        prop_assert!(angle < 1e-6, "angle {angle}");
        prop_assert!((k0.velocity.norm() - lib.speed_grid[out.speed_index]).abs() < 1e-6);
        prop_assert!((lib.speed_grid[out.speed_index] - v.norm()).abs() <= lib.speed_step() / 2.0 + 1e-9);
    }

    #[test]
    fn selection_is_yaw_invariant(
        yaw in 0.0f64..std::f64::consts::TAU,
        heading in 0.0f64..std::f64::consts::TAU,
        speed in 0.3f64..3.0,
        goal_angle in -1.5f64..1.5,
        obstacles in prop::collection::vec((1.0f64..5.0, -2.5f64..2.5, -1.0f64..1.0), 0..40),
    ) {
        let (lib, idx) = high();
        let cfg = open_box();
        let p = Vector3::new(0.0, 0.0, 1.0);
        let dir = Vector3::new(heading.cos(), heading.sin(), 0.0);
        let side = Vector3::new(-heading.sin(), heading.cos(), 0.0);
        let goal_dir = Rotation3::from_axis_angle(&Vector3::z_axis(), goal_angle) * dir;
        let s = state(p, dir * speed, p + goal_dir * 25.0);
        let cloud: Vec<Vector3<f64>> =
            obstacles.iter().map(|&(a, b, c)| p + dir * a + side * b + Vector3::z() * c).collect();

        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let turned = state(rot * s.position, rot * s.velocity, rot * s.goal);
        let turned_cloud: Vec<Vector3<f64>> = cloud.iter().map(|q| rot * q).collect();

        let a = replan(&s, &cloud, lib, idx, &cfg).unwrap();
        let b = replan(&turned, &turned_cloud, lib, idx, &cfg).unwrap();
        prop_assert_eq!(chosen_path(&a.selection, lib), chosen_path(&b.selection, lib));
    }
}
