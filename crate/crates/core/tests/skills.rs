use proptest::prelude::*;
use skillbo_core::behavior_tree::{ActionLeaf, Blackboard, NodeKind, Status, TreeBuilder, Value};
use skillbo_core::control_sim::motion::MotionGenerator;
use skillbo_core::math::{Pose, Quat, Vec3};
use skillbo_core::skills::{
    get_pose, object_pose_key, read_command, set_pose, write_command, DepthMonitor, GoToLinear, MotionCommand, Overlay,
    PegPrimitive, PegStep, Push, EE_POSE, EE_REFERENCE, PEG_DEPTH, TIME,
};

const DT: f64 = 0.02;

fn go_to(target: &str, speed: f64) -> GoToLinear {
    GoToLinear {
        target: target.into(),
        speed,
        stiffness: [1000.0, 1000.0, 1000.0, 50.0, 50.0, 50.0],
        tolerance: 0.005,
    }
}

fn board(ee: Pose<f64>) -> Blackboard {
    let mut bb = Blackboard::new();
    set_pose(&mut bb, EE_POSE, &ee);
    set_pose(&mut bb, EE_REFERENCE, &ee);
    bb.set(TIME, Value::Number(0.0));
    bb
}

fn at(x: f64, y: f64, z: f64) -> Pose<f64> {
    Pose::from_position(Vec3::new(x, y, z))
}

#[test]
fn go_to_linear_at_target_succeeds_at_once() {
    let p = at(0.4, 0.1, 0.2);
    let mut bb = board(p);
    set_pose(&mut bb, &object_pose_key("T"), &p);
    assert_eq!(go_to("T", 0.1).tick(&mut bb), Status::Success);
    assert_eq!(read_command(&bb).unwrap().goal, p);
}

#[test]
fn go_to_linear_without_target_fails() {
    let mut bb = board(at(0.0, 0.0, 0.0));
    assert_eq!(go_to("missing", 0.1).tick(&mut bb), Status::Failure);
}

#[test]
fn go_to_linear_midpoint_lies_on_the_segment() {
    let a = at(0.3, -0.1, 0.3);
    let b = at(0.5, 0.2, 0.1);
    let speed = 0.1;
    let mut bb = board(a);
    set_pose(&mut bb, &object_pose_key("T"), &b);
    let mut leaf = go_to("T", speed);
    let mut mg = MotionGenerator::new(a);
    let dist = (b.position - a.position).norm();
    let half_steps = (0.5 * dist / speed / DT).round() as usize;
    for _ in 0..half_steps {
        assert_eq!(leaf.tick(&mut bb), Status::Running);
        let cmd = read_command(&bb).unwrap();
        let r = mg.step(&cmd, DT);
        set_pose(&mut bb, EE_REFERENCE, &r);
    }
    let t = half_steps as f64 * DT * speed / dist;
    let expected = a.position + (b.position - a.position).scale(t);
    let got = mg.reference().position;
    assert!((got - expected).norm() < 1e-12, "{got:?} vs {expected:?}");
    assert!((t - 0.5).abs() < DT * speed / dist);
}

fn push_board(object: [f64; 2], goal: [f64; 3]) -> Blackboard {
    let ee = at(0.9, 0.0, 0.03);
    let mut bb = board(ee);
    set_pose(&mut bb, &object_pose_key("Obj"), &at(object[0], object[1], 0.0));
    set_pose(
        &mut bb,
        &object_pose_key("Goal"),
        &Pose::new(Vec3::new(goal[0], goal[1], 0.0), Quat::from_yaw(goal[2])),
    );
    bb
}

#[test]
fn push_zero_offsets_aim_at_the_object_centre() {
    let mut bb = push_board([0.75, 0.0], [0.3, 0.0, 0.0]);
    let mut leaf = Push::new("Obj", "Goal", [0.0, 0.0], [0.0, 0.0]);
    assert_eq!(leaf.tick(&mut bb), Status::Running);
    let t = leaf.target().position;
    assert_eq!([t.x, t.y, t.z], [0.75, 0.0, 0.03]);
    assert_eq!(read_command(&bb).unwrap().goal.position, t);
}

#[test]
fn push_start_offset_displaces_the_approach_target() {
    let mut bb = push_board([0.75, 0.0], [0.3, 0.0, 0.0]);
    let mut leaf = Push::new("Obj", "Goal", [0.0, -0.1], [0.02, 0.01]);
    leaf.tick(&mut bb);
    let t = leaf.target().position;
    assert!((t.x - 0.75).abs() < 1e-15 && (t.y + 0.1).abs() < 1e-15);
    // once the attractor arrives the target switches to the offset goal
    let arrived = leaf.target();
    set_pose(&mut bb, EE_REFERENCE, &arrived);
    leaf.tick(&mut bb);
    let t = leaf.target().position;
    assert!((t.x - 0.32).abs() < 1e-15 && (t.y - 0.01).abs() < 1e-15);
}

#[test]
fn push_succeeds_when_object_is_at_goal() {
    let mut bb = push_board([0.3, 0.0], [0.3, 0.0, 0.0]);
    let mut leaf = Push::new("Obj", "Goal", [0.0, 0.0], [0.0, 0.0]);
    assert_eq!(leaf.tick(&mut bb), Status::Success);
}

#[test]
fn push_fails_after_settling_without_success() {
    let mut bb = push_board([0.75, 0.0], [0.3, 0.0, 0.0]);
    let mut leaf = Push::new("Obj", "Goal", [0.0, 0.0], [0.0, 0.0]);
    leaf.tick(&mut bb);
    for _ in 0..2 {
        let target = leaf.target();
        set_pose(&mut bb, EE_REFERENCE, &target);
        assert_eq!(leaf.tick(&mut bb), Status::Running);
    }
    bb.set(TIME, Value::Number(1.0));
    assert_eq!(leaf.tick(&mut bb), Status::Running);
    bb.set(TIME, Value::Number(2.5));
    assert_eq!(leaf.tick(&mut bb), Status::Failure);
}

fn peg_step(p: PegPrimitive) -> PegStep {
    PegStep {
        primitive: p,
        box_id: "Box".into(),
        stiffness: [1000.0, 1000.0, 1000.0, 50.0, 50.0, 50.0],
        speed: 0.05,
    }
}

fn peg_tree(force: f64, overlay: Overlay) -> skillbo_core::behavior_tree::Tree {
    let mut b = TreeBuilder::new();
    let ids = [
        b.action("release", peg_step(PegPrimitive::ReleaseZ)),
        b.action("press", peg_step(PegPrimitive::PressDown(force))),
        b.action("centre", peg_step(PegPrimitive::CentreOnHole)),
        b.action("search", peg_step(PegPrimitive::Search(overlay))),
    ];
    let seq = b.control(NodeKind::SequenceStar, "primitives", &ids).unwrap();
    let monitor = b.action("depth", DepthMonitor { depth: 0.01 });
    let root = b
        .control(NodeKind::ParallelFirstSuccess, "processor", &[seq, monitor])
        .unwrap();
    b.build(root).unwrap()
}

#[test]
fn peg_primitives_compose_one_command() {
    let start = at(0.5, 0.2, 0.07);
    let hole = at(0.55, 0.0, 0.05);
    let mut bb = board(start);
    set_pose(&mut bb, &object_pose_key("Box"), &hole);
    write_command(&mut bb, &MotionCommand::hold(start, [800.0; 6]));
    let overlay = Overlay::Spiral {
        radius: 0.01,
        path_velocity: 0.02,
        pitch: 0.0025,
    };
    let mut tree = peg_tree(7.0, overlay);
    let mut mg = MotionGenerator::new(start);
    let mut searched = false;
    for _ in 0..500 {
        assert_eq!(tree.tick(&mut bb), Status::Running);
        let cmd = read_command(&bb).unwrap();
        assert_eq!(cmd.stiffness[2], 0.0);
        assert_eq!(cmd.stiffness[0], 1000.0);
        assert_eq!(cmd.wrench[2], -7.0);
        assert_eq!([cmd.goal.position.x, cmd.goal.position.y], [0.55, 0.0]);
        if cmd.overlay == overlay {
            searched = true;
            break;
        }
        let r = mg.step(&cmd, DT);
        set_pose(&mut bb, EE_REFERENCE, &r);
    }
    assert!(searched);
    bb.set(PEG_DEPTH, Value::Number(0.02));
    assert_eq!(tree.tick(&mut bb), Status::Success);
}

#[test]
fn zero_radius_keeps_reference_over_the_hole() {
    let hole = at(0.55, 0.0, 0.05);
    let start = at(0.55, 0.0, 0.07);
    let mut bb = board(start);
    set_pose(&mut bb, &object_pose_key("Box"), &hole);
    let overlay = Overlay::Spiral {
        radius: 0.0,
        path_velocity: 0.02,
        pitch: 0.0025,
    };
    let mut tree = peg_tree(5.0, overlay);
    let mut mg = MotionGenerator::new(start);
    for _ in 0..300 {
        tree.tick(&mut bb);
        let r = mg.step(&read_command(&bb).unwrap(), DT);
        assert!((r.position.x - 0.55).abs() < 1e-12 && r.position.y.abs() < 1e-12);
        set_pose(&mut bb, EE_REFERENCE, &r);
    }
    assert_eq!(mg.overlay(), overlay);
}

/// Largest distance from any point of the disc of radius `r` to the path.
fn coverage_gap(overlay: &Overlay, r: f64, length: f64) -> f64 {
    let path: Vec<[f64; 2]> = (0..=20_000)
        .map(|i| overlay.offset(length * i as f64 / 20_000.0))
        .collect();
    let mut worst: f64 = 0.0;
    let n = 25;
    for i in 0..=n {
        for j in 0..=n {
            let p = [
                r * (2.0 * i as f64 / n as f64 - 1.0),
                r * (2.0 * j as f64 / n as f64 - 1.0),
            ];
            if p[0].hypot(p[1]) > r {
                continue;
            }
            let d = path
                .iter()
                .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    worst
}

#[test]
fn circle_traces_an_annulus_while_spiral_covers_the_disc() {
    let r = 0.01;
    let circle = Overlay::Circular {
        radius: r,
        path_velocity: 0.01,
    };
    for k in 0..100 {
        let [x, y] = circle.offset(k as f64 * 0.001);
        assert!((x.hypot(y) - r).abs() < 1e-15);
    }
    let pitch = 0.0025;
    let spiral = Overlay::Spiral {
        radius: r,
        path_velocity: 0.01,
        pitch,
    };
    // whole spiral plus one closing turn
    let length = std::f64::consts::PI * r * r / pitch + std::f64::consts::TAU * r;
    assert!(coverage_gap(&spiral, r, length) <= 0.5 * pitch + 1e-4);
    assert!((coverage_gap(&circle, r, std::f64::consts::TAU * r) - r).abs() < 1e-3);
}

fn pose_strategy() -> impl Strategy<Value = Pose<f64>> {
    (0.2..0.8f64, -0.3..0.3f64, 0.0..0.4f64, -3.0..3.0f64)
        .prop_map(|(x, y, z, yaw)| Pose::new(Vec3::new(x, y, z), Quat::from_yaw(yaw)))
}

proptest! {
    #[test]
    fn emitted_commands_are_valid(
        ee in pose_strategy(),
        target in pose_strategy(),
        offsets in prop::array::uniform4(-0.08..0.08f64),
        force in 1.0..30.0f64,
        radius in 0.0..0.02f64,
        velocity in 0.002..0.05f64,
        steps in 1usize..60,
    ) {
        let mut bb = board(ee);
        set_pose(&mut bb, &object_pose_key("T"), &target);
        set_pose(&mut bb, &object_pose_key("Obj"), &target);
        set_pose(&mut bb, &object_pose_key("Goal"), &ee);
        set_pose(&mut bb, &object_pose_key("Box"), &target);
        let mut leaves: Vec<Box<dyn ActionLeaf>> = vec![
            Box::new(go_to("T", 0.1)),
            Box::new(Push::new("Obj", "Goal", [offsets[0], offsets[1]], [offsets[2], offsets[3]])),
        ];
        for p in [
            PegPrimitive::ReleaseZ,
            PegPrimitive::PressDown(force),
            PegPrimitive::CentreOnHole,
            PegPrimitive::Search(Overlay::Spiral { radius, path_velocity: velocity, pitch: 0.0025 }),
            PegPrimitive::Search(Overlay::Circular { radius, path_velocity: velocity }),
        ] {
            leaves.push(Box::new(peg_step(p)));
        }
        for leaf in &mut leaves {
            let mut mg = MotionGenerator::new(ee);
            for _ in 0..steps {
                leaf.tick(&mut bb);
                let cmd = read_command(&bb).unwrap();
                prop_assert!(cmd.is_valid());
                let r = mg.step(&cmd, DT);
                prop_assert!(r.is_finite());
                set_pose(&mut bb, EE_REFERENCE, &r);
            }
            prop_assert!(get_pose(&bb, EE_REFERENCE).is_some());
        }
    }
}
