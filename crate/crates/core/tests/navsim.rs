use bdpi_core::navsim::{
    advance, camera_angles, clearance, observe, raw_sensor_distances, scripted_expert, Action,
    NavSim, SceneConfig, WorldState, ACTION_COUNT, SENSOR_COUNT,
};
use proptest::prelude::*;

fn pose() -> impl Strategy<Value = WorldState> {
    let scene = SceneConfig::default();
    (
        0.0..1.0f64,
        0.0..1.0f64,
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(x, y, h)| WorldState::at(x, y, h))
        .prop_filter("robot must fit", move |w| clearance(w, &scene) >= 0.0)
}

proptest! {
    #[test]
    fn observations_stay_in_range(w in pose()) {
        let scene = SceneConfig::default();
        let obs = observe(&w, &scene);
        prop_assert_eq!(obs.sensors.len(), SENSOR_COUNT);
        prop_assert_eq!(obs.camera.len(), scene.camera_rays);
        for v in obs.sensors.iter().chain(&obs.camera) {
            prop_assert!((0.0..=1.0).contains(v));
        }
        for d in raw_sensor_distances(&w, &scene) {
            prop_assert!(d >= 0.0);
        }
    }

    #[test]
    fn motion_never_penetrates(w in pose(), actions in prop::collection::vec(0..ACTION_COUNT, 1..200)) {
        let scene = SceneConfig::default();
        let mut w = w;
        for a in actions {
            advance(&mut w, &scene, Action::from_index(a).unwrap());
            prop_assert!(clearance(&w, &scene) >= -1e-9);
            prop_assert!(w.heading.abs() <= std::f64::consts::PI + 1e-12);
        }
    }

    #[test]
    fn stay_keeps_a_resting_robot_still(w in pose()) {
        let scene = SceneConfig::default();
        let mut moved = w.clone();
        advance(&mut moved, &scene, Action::Stay);
        prop_assert_eq!((moved.x, moved.y, moved.heading), (w.x, w.y, w.heading));
    }
}

#[test]
fn camera_spans_the_field_of_view() {
    let scene = SceneConfig::default();
    let angles = camera_angles(&scene);
    assert_eq!(angles.len(), 32);
    assert!((angles[0] - 30f64.to_radians()).abs() < 1e-12);
    assert!((angles[31] + 30f64.to_radians()).abs() < 1e-12);
}

#[test]
fn episodes_replay_exactly() {
    let scene = SceneConfig::default();
    let rollout = |seed| {
        let mut sim = NavSim::new(scene.clone()).unwrap();
        sim.record_trajectory();
        let mut obs = sim.reset(seed);
        loop {
            let (next, _, done) = sim.step(scripted_expert(&obs.sensors)).unwrap();
            obs = next;
            if done {
                break;
            }
        }
        sim.trajectory().to_vec()
    };
    assert_eq!(rollout(7), rollout(7));
    assert_ne!(rollout(7), rollout(8));
}

#[test]
fn expert_earns_most_of_the_forward_reward() {
    let scene = SceneConfig::default();
    let mut sim = NavSim::new(scene.clone()).unwrap();
    let (mut total, mut steps) = (0.0, 0);
    for seed in 0..10 {
        let mut obs = sim.reset(seed);
        loop {
            let (next, r, done) = sim.step(scripted_expert(&obs.sensors)).unwrap();
            total += r;
            steps += 1;
            obs = next;
            if done {
                break;
            }
        }
    }
    assert_eq!(steps, 10 * scene.episode_cap);
    let per_step = total / steps as f64;
    assert!(per_step >= 0.8, "expert averaged {per_step}");
}
