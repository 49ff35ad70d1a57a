//! A deterministic differential-drive robot in a 1 m square room with one
//! round pillar.
//!
//! The robot carries 8 ray-cast proximity sensors and a forward-looking 1-D
//! depth camera. Five actions change the wheel speeds: stay, accelerate the
//! left wheel, accelerate the right wheel, accelerate both, decelerate both.
//! Choosing "accelerate both" earns +1; any sensor reading closer than
//! 10 cm to an obstacle costs -1, and the two add up.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::mdp::{Environment, Observation, Transition};

pub const ACTION_COUNT: usize = 5;
pub const SENSOR_COUNT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Stay = 0,
    AccelerateLeft = 1,
    AccelerateRight = 2,
    Forward = 3,
    Decelerate = 4,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::Stay,
        Action::AccelerateLeft,
        Action::AccelerateRight,
        Action::Forward,
        Action::Decelerate,
    ];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| contract(format!("action index {index} out of range")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Scene geometry, robot dynamics and sensor models. Lengths in meters,
/// speeds in m/s, angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub room_size: f64,
    pub pillar_x: f64,
    pub pillar_y: f64,
    pub pillar_radius: f64,
    pub robot_radius: f64,
    pub wheel_base: f64,
    /// Wheel speed change per accelerate/decelerate action.
    pub acceleration: f64,
    pub max_wheel_speed: f64,
    /// Wheel speeds are multiplied by this factor before each action is
    /// applied; 1 keeps them unchanged.
    pub velocity_decay: f64,
    pub dt: f64,
    pub sensor_range: f64,
    /// Sensor directions relative to the heading, counter-clockwise positive.
    pub sensor_angles: Vec<f64>,
    pub camera_rays: usize,
    pub camera_fov: f64,
    pub camera_range: f64,
    pub penalty_distance: f64,
    /// Minimum gap between the robot's body and any obstacle at spawn.
    pub spawn_clearance: f64,
    pub episode_cap: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_size: 1.0,
            pillar_x: 0.65,
            pillar_y: 0.65,
            pillar_radius: 0.08,
            robot_radius: 0.037,
            wheel_base: 0.02,
            acceleration: 0.02,
            max_wheel_speed: 0.10,
            velocity_decay: 0.7,
            dt: 0.05,
            sensor_range: 0.30,
            sensor_angles: vec![-18.0, -45.0, -90.0, -150.0, 150.0, 90.0, 45.0, 18.0],
            camera_rays: 32,
            camera_fov: 60.0,
            camera_range: 1.5,
            penalty_distance: 0.10,
            spawn_clearance: 0.10,
            episode_cap: 500,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("room_size", self.room_size),
            ("pillar_radius", self.pillar_radius),
            ("robot_radius", self.robot_radius),
            ("wheel_base", self.wheel_base),
            ("acceleration", self.acceleration),
            ("max_wheel_speed", self.max_wheel_speed),
            ("dt", self.dt),
            ("sensor_range", self.sensor_range),
            ("camera_fov", self.camera_fov),
            ("camera_range", self.camera_range),
            ("penalty_distance", self.penalty_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.velocity_decay) {
            return fail(format!(
                "velocity_decay = {} must lie in [0, 1]",
                self.velocity_decay
            ));
        }
        if self.spawn_clearance < 0.0 {
            return fail("spawn_clearance must not be negative".into());
        }
        if self.sensor_angles.len() != SENSOR_COUNT {
            return fail(format!(
                "exactly {SENSOR_COUNT} sensor angles are required, got {}",
                self.sensor_angles.len()
            ));
        }
        if self.camera_rays < 2 {
            return fail("the camera needs at least 2 rays".into());
        }
        if self.episode_cap == 0 {
            return fail("episode_cap must be at least 1".into());
        }
        // the pillar must leave room for the robot to pass on every side
        let gap = self.pillar_radius + 2.0 * self.robot_radius;
        let (px, py, l) = (self.pillar_x, self.pillar_y, self.room_size);
        if px - gap <= 0.0 || py - gap <= 0.0 || px + gap >= l || py + gap >= l {
            return fail("the pillar is too close to a wall".into());
        }
        let margin = self.robot_radius + self.spawn_clearance;
        if 2.0 * margin >= l {
            return fail("no room left to spawn the robot".into());
        }
        Ok(())
    }

    fn pillar_keepout(&self) -> f64 {
        self.pillar_radius + self.robot_radius
    }
}

/// Ground truth of the simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub x: f64,
    pub y: f64,
    /// Radians, wrapped to `(-pi, pi]`.
    pub heading: f64,
    pub v_left: f64,
    pub v_right: f64,
    pub step: usize,
}

impl WorldState {
    pub fn at(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading,
            v_left: 0.0,
            v_right: 0.0,
            step: 0,
        }
    }
}

/// Both observations of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPair {
    /// Proximity readings normalized by the sensor range: 1 means nothing
    /// within range.
    pub sensors: Vec<f64>,
    /// Depth image, `1 - distance / camera_range`: closer is brighter.
    pub camera: Vec<f64>,
}

/// Distance from the robot's center to the first obstacle along the ray
/// leaving `(x, y)` in world direction `angle`.
pub fn center_ray_distance(scene: &SceneConfig, x: f64, y: f64, angle: f64) -> f64 {
    let (dy, dx) = angle.sin_cos();
    let l = scene.room_size;
    let mut best = f64::INFINITY;
    if dx > 0.0 {
        best = best.min((l - x) / dx);
    } else if dx < 0.0 {
        best = best.min(-x / dx);
    }
    if dy > 0.0 {
        best = best.min((l - y) / dy);
    } else if dy < 0.0 {
        best = best.min(-y / dy);
    }
    // |p + t d - c|^2 = r^2
    let (ox, oy) = (x - scene.pillar_x, y - scene.pillar_y);
    let b = ox * dx + oy * dy;
    let c = ox * ox + oy * oy - scene.pillar_radius * scene.pillar_radius;
    let disc = b * b - c;
    if disc >= 0.0 {
        let t = -b - disc.sqrt();
        if t >= 0.0 {
            best = best.min(t);
        }
    }
    best.max(0.0)
}

/// Uncapped distance from the robot's surface to the nearest obstacle along
/// the ray at `angle` radians relative to the heading.
pub fn surface_distance(world: &WorldState, scene: &SceneConfig, angle: f64) -> f64 {
    (center_ray_distance(scene, world.x, world.y, world.heading + angle) - scene.robot_radius)
        .max(0.0)
}

/// Proximity reading along `angle` (radians, relative to the heading),
/// capped at the sensor range.
pub fn raycast(world: &WorldState, scene: &SceneConfig, angle: f64) -> f64 {
    surface_distance(world, scene, angle).min(scene.sensor_range)
}

/// Uncapped surface distance of every proximity sensor.
pub fn raw_sensor_distances(world: &WorldState, scene: &SceneConfig) -> Vec<f64> {
    scene
        .sensor_angles
        .iter()
        .map(|deg| surface_distance(world, scene, deg.to_radians()))
        .collect()
}

pub fn sensor_observation(world: &WorldState, scene: &SceneConfig) -> Vec<f64> {
    scene
        .sensor_angles
        .iter()
        .map(|deg| raycast(world, scene, deg.to_radians()) / scene.sensor_range)
        .collect()
}

/// Ray directions of the camera, left edge of the field of view first.
pub fn camera_angles(scene: &SceneConfig) -> Vec<f64> {
    let half = scene.camera_fov.to_radians() / 2.0;
    let n = scene.camera_rays;
    (0..n)
        .map(|i| half - 2.0 * half * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn render_camera(world: &WorldState, scene: &SceneConfig) -> Vec<f64> {
    camera_angles(scene)
        .into_iter()
        .map(|a| (1.0 - surface_distance(world, scene, a) / scene.camera_range).clamp(0.0, 1.0))
        .collect()
}

pub fn observe(world: &WorldState, scene: &SceneConfig) -> ObservationPair {
    ObservationPair {
        sensors: sensor_observation(world, scene),
        camera: render_camera(world, scene),
    }
}

/// Reward for taking `action` and ending up in `world`.
pub fn reward(action: Action, world: &WorldState, scene: &SceneConfig) -> f64 {
    let forward = if action == Action::Forward { 1.0 } else { 0.0 };
    let nearest = raw_sensor_distances(world, scene)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let penalty = if nearest < scene.penalty_distance {
        -1.0
    } else {
        0.0
    };
    forward + penalty
}

/// Smallest gap between the robot's body and any obstacle (negative when
/// penetrating).
pub fn clearance(world: &WorldState, scene: &SceneConfig) -> f64 {
    let l = scene.room_size;
    let walls = world.x.min(l - world.x).min(world.y).min(l - world.y) - scene.robot_radius;
    let pillar = (world.x - scene.pillar_x).hypot(world.y - scene.pillar_y)
        - scene.pillar_radius
        - scene.robot_radius;
    walls.min(pillar)
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Pushes the robot's center back into the free region.
fn resolve_collisions(world: &mut WorldState, scene: &SceneConfig) {
    let r = scene.robot_radius;
    let l = scene.room_size;
    let keepout = scene.pillar_keepout();
    let (ox, oy) = (world.x - scene.pillar_x, world.y - scene.pillar_y);
    let dist = ox.hypot(oy);
    if dist < keepout {
        let (ux, uy) = if dist > 1e-12 {
            (ox / dist, oy / dist)
        } else {
            let (s, c) = world.heading.sin_cos();
            (-c, -s)
        };
        world.x = scene.pillar_x + ux * keepout;
        world.y = scene.pillar_y + uy * keepout;
    }
    world.x = world.x.clamp(r, l - r);
    world.y = world.y.clamp(r, l - r);
}

/// Applies one action's wheel-speed change and integrates the pose over
/// `dt` along the resulting arc.
pub fn advance(world: &mut WorldState, scene: &SceneConfig, action: Action) {
    let decay = scene.velocity_decay;
    let (mut vl, mut vr) = (world.v_left * decay, world.v_right * decay);
    let dv = scene.acceleration;
    match action {
        Action::Stay => {}
        Action::AccelerateLeft => vl += dv,
        Action::AccelerateRight => vr += dv,
        Action::Forward => {
            vl += dv;
            vr += dv;
        }
        Action::Decelerate => {
            vl -= dv;
            vr -= dv;
        }
    }
    let vmax = scene.max_wheel_speed;
    world.v_left = vl.clamp(-vmax, vmax);
    world.v_right = vr.clamp(-vmax, vmax);

    let v = 0.5 * (world.v_left + world.v_right);
    let omega = (world.v_right - world.v_left) / scene.wheel_base;
    let dt = scene.dt;
    let theta = world.heading;
    if omega.abs() < 1e-12 {
        world.x += v * theta.cos() * dt;
        world.y += v * theta.sin() * dt;
    } else {
        let radius = v / omega;
        let next = theta + omega * dt;
        world.x += radius * (next.sin() - theta.sin());
        world.y -= radius * (next.cos() - theta.cos());
    }
    world.heading = wrap_angle(theta + omega * dt);
    resolve_collisions(world, scene);
}

/// Reactive reference controller working on normalized sensor readings with
/// the default sensor layout: drive forward while every sensor in the front
/// half-plane sees more than 12 cm of clearance, otherwise speed up the wheel
/// on the nearer obstacle's side so the robot turns away from it. Sides
/// within 3 cm of each other count as a tie and turn right, which keeps the
/// robot from dithering in corners.
pub fn scripted_expert(sensors: &[f64]) -> usize {
    ScriptedExpert::new(&SceneConfig::default()).act(sensors)
}

#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    threshold: f64,
    tie: f64,
    front: Vec<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl ScriptedExpert {
    pub const CLEARANCE: f64 = 0.12;
    pub const TIE: f64 = 0.03;

    pub fn new(scene: &SceneConfig) -> Self {
        let pick = |f: &dyn Fn(f64) -> bool| -> Vec<usize> {
            scene
                .sensor_angles
                .iter()
                .enumerate()
                .filter(|(_, a)| f(**a))
                .map(|(k, _)| k)
                .collect()
        };
        Self {
            threshold: Self::CLEARANCE / scene.sensor_range,
            tie: Self::TIE / scene.sensor_range,
            front: pick(&|a| a.abs() <= 90.0),
            left: pick(&|a| a > 0.0 && a <= 90.0),
            right: pick(&|a| (-90.0..0.0).contains(&a)),
        }
    }

    pub fn act(&self, sensors: &[f64]) -> usize {
        let min_of = |idx: &[usize]| {
            idx.iter()
                .map(|&k| sensors[k])
                .fold(f64::INFINITY, f64::min)
        };
        if min_of(&self.front) > self.threshold {
            return Action::Forward.index();
        }
        if min_of(&self.right) < min_of(&self.left) - self.tie {
            Action::AccelerateRight.index()
        } else {
            Action::AccelerateLeft.index()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Unstarted,
    Running,
    Finished,
}

/// One row of a trajectory dump.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub action: usize,
    pub reward: f64,
}

/// The stateful simulator.
#[derive(Clone, Debug)]
pub struct NavSim {
    scene: SceneConfig,
    world: WorldState,
    phase: Phase,
    trajectory: Option<Vec<TrajectoryRow>>,
}

impl NavSim {
    pub fn new(scene: SceneConfig) -> Result<Self> {
        scene.validate()?;
        let c = scene.room_size / 2.0;
        Ok(Self {
            scene,
            world: WorldState::at(c, c, 0.0),
            phase: Phase::Unstarted,
            trajectory: None,
        })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Starts recording `(step, x, y, heading, action, reward)` rows.
    pub fn record_trajectory(&mut self) {
        self.trajectory = Some(Vec::new());
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        self.trajectory.as_deref().unwrap_or(&[])
    }

    /// Places the robot uniformly at random in a collision-free pose.
    pub fn reset(&mut self, seed: u64) -> ObservationPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = &self.scene;
        let margin = s.robot_radius + s.spawn_clearance;
        let keepout = s.pillar_keepout() + s.spawn_clearance;
        let (x, y) = loop {
            let x = rng.gen_range(margin..=s.room_size - margin);
            let y = rng.gen_range(margin..=s.room_size - margin);
            if (x - s.pillar_x).hypot(y - s.pillar_y) >= keepout {
                break (x, y);
            }
        };
        let heading = rng.gen_range(-PI..PI);
        self.world = WorldState::at(x, y, heading);
        self.phase = Phase::Running;
        if let Some(t) = &mut self.trajectory {
            t.clear();
        }
        observe(&self.world, &self.scene)
    }

    /// Starts an episode from an explicit pose.
    pub fn reset_to(&mut self, world: WorldState) -> ObservationPair {
        self.world = world;
        self.world.step = 0;
        self.phase = Phase::Running;
        if let Some(t) = &mut self.trajectory {
            t.clear();
        }
        observe(&self.world, &self.scene)
    }

    pub fn step(&mut self, action: usize) -> Result<(ObservationPair, f64, bool)> {
        match self.phase {
            Phase::Unstarted => return Err(contract("step called before reset")),
            Phase::Finished => return Err(contract("step called on a finished episode")),
            Phase::Running => {}
        }
        let action = Action::from_index(action)?;
        advance(&mut self.world, &self.scene, action);
        self.world.step += 1;
        let r = reward(action, &self.world, &self.scene);
        let done = self.world.step >= self.scene.episode_cap;
        if done {
            self.phase = Phase::Finished;
        }
        if let Some(t) = &mut self.trajectory {
            t.push(TrajectoryRow {
                step: self.world.step,
                x: self.world.x,
                y: self.world.y,
                heading: self.world.heading,
                action: action.index(),
                reward: r,
            });
        }
        Ok((observe(&self.world, &self.scene), r, done))
    }

    pub fn write_trajectory(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.trajectory() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which observation the learner receives as its primary input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObservationKind {
    Sensors,
    Camera,
}

/// [`NavSim`] behind the generic environment contract. The advisor channel
/// always carries the proximity readings.
#[derive(Clone, Debug)]
pub struct NavEnv {
    sim: NavSim,
    kind: ObservationKind,
}

impl NavEnv {
    pub fn new(scene: SceneConfig, kind: ObservationKind) -> Result<Self> {
        Ok(Self {
            sim: NavSim::new(scene)?,
            kind,
        })
    }

    pub fn sim(&self) -> &NavSim {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut NavSim {
        &mut self.sim
    }

    fn split(&self, pair: ObservationPair) -> Observation {
        match self.kind {
            ObservationKind::Sensors => Observation {
                advisor: pair.sensors.clone(),
                primary: pair.sensors,
            },
            ObservationKind::Camera => Observation {
                primary: pair.camera,
                advisor: pair.sensors,
            },
        }
    }
}

impl Environment for NavEnv {
    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn observation_width(&self) -> usize {
        match self.kind {
            ObservationKind::Sensors => SENSOR_COUNT,
            ObservationKind::Camera => self.sim.scene.camera_rays,
        }
    }

    fn advisor_width(&self) -> usize {
        SENSOR_COUNT
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let pair = self.sim.reset(seed);
        Ok(self.split(pair))
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        let (pair, reward, done) = self.sim.step(action)?;
        Ok(Transition {
            observation: self.split(pair),
            reward,
            terminal: false,
            truncated: done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scene() -> SceneConfig {
        SceneConfig::default()
    }

    #[test]
    fn default_scene_is_valid() {
        scene().validate().unwrap();
        let bad = SceneConfig {
            sensor_angles: vec![0.0; 3],
            ..scene()
        };
        assert!(bad.validate().is_err());
        let bad = SceneConfig {
            pillar_x: 0.95,
            ..scene()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wall_behind_the_robot() {
        // heading +y, sensor pointing straight back at the y = 0 wall
        let w = WorldState::at(0.5, 0.1, PI / 2.0);
        assert_abs_diff_eq!(raycast(&w, &scene(), PI), 0.063, epsilon = 1e-12);
    }

    #[test]
    fn open_ray_is_capped() {
        let w = WorldState::at(0.2, 0.2, PI / 4.0);
        // diagonal toward (1, 1) would hit the pillar area far beyond range
        assert_eq!(raycast(&w, &scene(), 0.0), 0.30);
    }

    #[test]
    fn ray_at_the_pillar() {
        let s = scene();
        let w = WorldState::at(s.pillar_x - 0.25, s.pillar_y, 0.0);
        assert_abs_diff_eq!(raycast(&w, &s, 0.0), 0.25 - 0.08 - 0.037, epsilon = 1e-12);
    }

    #[test]
    fn center_spawn_sees_nothing() {
        // facing away from the pillar so that it sits between the two rear sensors
        let w = WorldState::at(0.5, 0.5, -3.0 * PI / 4.0);
        let s = scene();
        for r in sensor_observation(&w, &s) {
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn camera_facing_a_wall() {
        let w = WorldState::at(1.0 - 0.037 - 0.10, 0.3, 0.0);
        let img = render_camera(&w, &scene());
        let mid = img.len() / 2;
        for v in &img[mid - 1..=mid] {
            assert_abs_diff_eq!(*v, 1.0 - 0.1 / 1.5, epsilon = 1e-3);
        }
    }

    #[test]
    fn camera_down_the_diagonal() {
        let s = scene();
        // from the corner region facing away from the pillar's diagonal
        let w = WorldState::at(0.9, 0.1, 3.0 * PI / 4.0);
        let img = render_camera(&w, &s);
        for (v, a) in img.iter().zip(camera_angles(&s)) {
            let d = center_ray_distance(&s, 0.9, 0.1, w.heading + a) - s.robot_radius;
            assert_abs_diff_eq!(*v, 1.0 - d / 1.5, epsilon = 1e-12);
            assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn rewards_follow_the_two_clauses() {
        let s = scene();
        let open = WorldState::at(0.3, 0.3, 0.0);
        let mut sim = NavSim::new(s.clone()).unwrap();
        sim.reset_to(open);
        let (_, r, _) = sim.step(Action::Forward.index()).unwrap();
        assert_eq!(r, 1.0);

        // wall 5 cm from the body, robot parallel to it
        let near = WorldState::at(0.037 + 0.05, 0.5, PI / 2.0);
        sim.reset_to(near.clone());
        assert_eq!(sim.step(Action::Stay.index()).unwrap().1, -1.0);
        sim.reset_to(near);
        assert_eq!(sim.step(Action::Forward.index()).unwrap().1, 0.0);
    }

    #[test]
    fn stepping_protocol() {
        let mut sim = NavSim::new(SceneConfig {
            episode_cap: 2,
            ..scene()
        })
        .unwrap();
        assert!(sim.step(0).is_err());
        sim.reset(1);
        assert!(!sim.step(0).unwrap().2);
        assert!(sim.step(0).unwrap().2);
        assert!(matches!(sim.step(0), Err(Error::Contract(_))));
        sim.reset(1);
        assert!(sim.step(7).is_err());
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = NavSim::new(scene()).unwrap();
        let mut b = NavSim::new(scene()).unwrap();
        assert_eq!(a.reset(42), b.reset(42));
        assert_eq!(a.world(), b.world());
        assert_ne!(a.reset(43), b.reset(42));
    }

    #[test]
    fn spawns_keep_their_distance() {
        let s = scene();
        let mut sim = NavSim::new(s.clone()).unwrap();
        for seed in 0..1000 {
            sim.reset(seed);
            assert!(clearance(sim.world(), &s) >= s.spawn_clearance - 1e-12);
        }
    }

    #[test]
    fn right_wheel_turns_left() {
        let s = scene();
        let mut w = WorldState::at(0.5, 0.5, 0.0);
        advance(&mut w, &s, Action::AccelerateRight);
        assert!(w.heading > 0.0);
        let mut w = WorldState::at(0.5, 0.5, 0.0);
        advance(&mut w, &s, Action::AccelerateLeft);
        assert!(w.heading < 0.0);
    }

    #[test]
    fn wheel_speeds_are_clamped() {
        let s = scene();
        let mut w = WorldState::at(0.5, 0.3, 0.0);
        for _ in 0..50 {
            advance(&mut w, &s, Action::Forward);
        }
        assert!(w.v_left <= s.max_wheel_speed && w.v_right <= s.max_wheel_speed);
        for _ in 0..50 {
            advance(&mut w, &s, Action::Decelerate);
        }
        assert!(w.v_left >= -s.max_wheel_speed);
    }

    #[test]
    fn expert_rules() {
        assert_eq!(scripted_expert(&[1.0; 8]), 3);
        // obstacle close on the left-front sensor (+18 degrees, index 7)
        let mut left = [1.0; 8];
        left[7] = 0.2;
        assert_eq!(scripted_expert(&left), Action::AccelerateLeft.index());
        let mut right = [1.0; 8];
        right[0] = 0.2;
        assert_eq!(scripted_expert(&right), Action::AccelerateRight.index());
        let mut ahead = [1.0; 8];
        ahead[0] = 0.2;
        ahead[7] = 0.2;
        assert_eq!(scripted_expert(&ahead), 1);
    }

    #[test]
    fn expert_turns_away_from_the_obstacle() {
        let s = scene();
        // the x = 1 wall is ahead and to the left of a robot heading slightly right
        let mut w = WorldState::at(0.88, 0.5, -0.6);
        w.v_left = 0.08;
        w.v_right = 0.08;
        let a = scripted_expert(&sensor_observation(&w, &s));
        assert_eq!(a, Action::AccelerateLeft.index());
        let before = w.heading;
        advance(&mut w, &s, Action::from_index(a).unwrap());
        // turning right lowers the heading, away from the wall on the left
        assert!(w.heading < before);
        let mut mirrored = WorldState::at(0.88, 0.5, 0.6);
        mirrored.v_left = 0.08;
        mirrored.v_right = 0.08;
        let a = scripted_expert(&sensor_observation(&mirrored, &s));
        assert_eq!(a, Action::AccelerateRight.index());
        advance(&mut mirrored, &s, Action::from_index(a).unwrap());
        assert!(mirrored.heading > 0.6);
    }

    #[test]
    fn env_exposes_both_channels() {
        let mut env = NavEnv::new(scene(), ObservationKind::Camera).unwrap();
        let obs = env.reset(3).unwrap();
        assert_eq!(obs.primary.len(), 32);
        assert_eq!(obs.advisor.len(), 8);
        assert_eq!(env.observation_width(), 32);
        let t = env.step(3).unwrap();
        assert!(!t.terminal);
    }

    #[test]
    fn trajectory_dump() {
        let dir = tempfile::tempdir().unwrap();
        let mut sim = NavSim::new(SceneConfig {
            episode_cap: 3,
            ..scene()
        })
        .unwrap();
        sim.record_trajectory();
        sim.reset(0);
        for _ in 0..3 {
            sim.step(3).unwrap();
        }
        let path = dir.path().join("traj.csv");
        sim.write_trajectory(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,x,y,heading,action,reward"));
        assert_eq!(lines.count(), 3);
    }
}
