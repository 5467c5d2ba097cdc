//! Quasi-static hand/object plant and the two-rate closed loop.
//!
//! Joints are velocity sources (`q̇ = Γ·τ`), fingertips stick to the object,
//! and the object follows the minimum-norm rigid motion of the fingertips.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{
    clamp_torque_to, impedance_torque, resolved_rate_step, squeeze_targets, ControllerConfig, DynamicsTerms,
    GainSet, ObjectSurface, TorqueCommand,
};
use crate::error::{check_len, Error, Result};
use crate::grasp::{
    build_grasp_matrix, force_decompose, object_wrench, select_interaction_forces, Contact, ObjectInertia,
};
use crate::hand::{object_jacobians, stacked_jacobian_for, HandProfile, JointState, ObjectJacobian};
use crate::se3::{rotation_error, screw_between_poses, Pose, Twist};

pub const DEFAULT_GAMMA: f64 = 2.0;
/// 60°
pub const DEFAULT_GOAL_ROTATION_CAP: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Joint velocity per unit clamped torque, rad/s per N·m.
    pub gamma: f64,
    /// `None` takes the profile's rate.
    pub torque_rate_hz: Option<f64>,
    pub rrm_rate_hz: Option<f64>,
    /// `None` fits a sphere through the fingertips at the grasp configuration.
    pub surface: Option<ObjectSurface>,
    pub object_mass_kg: f64,
    /// Round the joint angles seen by the controller to the encoder resolution.
    pub encoder_quantization: bool,
    /// Minimum inward squeeze per contact; `None` reports equilibrating forces only.
    pub interaction_force_n: Option<f64>,
    pub goal_rotation_cap_rad: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            torque_rate_hz: None,
            rrm_rate_hz: None,
            surface: None,
            object_mass_kg: 0.1,
            encoder_quantization: false,
            interaction_force_n: None,
            goal_rotation_cap_rad: DEFAULT_GOAL_ROTATION_CAP,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        for rate in [self.torque_rate_hz, self.rrm_rate_hz].into_iter().flatten() {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Invalid(format!("rates must be positive, got {rate}")));
            }
        }
        if !(self.object_mass_kg > 0.0) {
            return Err(Error::Invalid("object mass must be positive".into()));
        }
        if let Some(f) = self.interaction_force_n {
            if !(f >= 0.0) {
                return Err(Error::Invalid("interaction force must be non-negative".into()));
            }
        }
        if let Some(s) = &self.surface {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub joints: JointState,
    pub object_pose: Pose,
    pub object_twist: Twist,
    /// Contact points in the object frame; fixed while sticking.
    pub contact_points: Vec<Vector3<f64>>,
    /// Force applied by each fingertip on the object, hand frame (N).
    pub contact_forces: Vec<Vector3<f64>>,
    pub time: f64,
}

/// Static description of a grasp: which chains touch and where.
#[derive(Debug, Clone, PartialEq)]
pub struct Grasp {
    pub chains: Vec<usize>,
    pub surface: ObjectSurface,
    pub initial_pose: Pose,
    pub contact_points: Vec<Vector3<f64>>,
}

/// Centre of the circle through three points.
fn circumcenter(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Vector3<f64>> {
    let (ab, ac) = (b - a, c - a);
    let n = ab.cross(&ac);
    let denom = 2.0 * n.norm_squared();
    if denom < 1e-18 {
        return None;
    }
    Some(a + (ac.norm_squared() * n.cross(&ab) + ab.norm_squared() * ac.cross(&n)) / denom)
}

impl Grasp {
    /// Grasp at joint configuration `q` with the profile's manipulating chains.
    /// The object frame starts axis-aligned with its origin equidistant from the
    /// fingertips (circumcentre for three contacts, centroid otherwise).
    pub fn from_profile(profile: &HandProfile, q: &DVector<f64>, surface: Option<ObjectSurface>) -> Result<Self> {
        let chains = profile.manipulating_chains.clone();
        if chains.is_empty() {
            return Err(Error::Invalid("no manipulating chains".into()));
        }
        let tips = profile.fingertip_poses(q)?;
        let points: Vec<Vector3<f64>> = chains.iter().map(|&c| tips[c].origin).collect();
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let center = match points.as_slice() {
            [a, b, c] => circumcenter(a, b, c).unwrap_or(centroid),
            _ => centroid,
        };
        let contact_points: Vec<Vector3<f64>> = points.iter().map(|p| p - center).collect();
        let surface = match surface {
            Some(s) => s,
            None => {
                let radius = contact_points.iter().map(|r| r.norm()).sum::<f64>() / contact_points.len() as f64;
                ObjectSurface::Sphere { radius }
            }
        };
        surface.validate()?;
        Ok(Self {
            chains,
            surface,
            initial_pose: Pose::from_translation(center),
            contact_points,
        })
    }

    /// Contacts expressed in the hand frame at object pose `pose`.
    pub fn contacts_at(&self, pose: &Pose) -> Result<Vec<Contact>> {
        self.contact_points
            .iter()
            .map(|c| Contact::new(pose.rotation * c, pose.rotation * self.surface.inward_normal(c)?))
            .collect()
    }

    pub fn object_jacobian_at(&self, pose: &Pose) -> Result<ObjectJacobian> {
        object_jacobians(&self.contacts_at(pose)?)
    }
}

/// `$_o = J_o⁺·$_RH`: minimum-norm rigid motion matching stacked fingertip twists.
pub fn object_twist_from_fingertips(fingertip_twists: &DVector<f64>, object_jacobian: &ObjectJacobian) -> Result<Twist> {
    crate::intent::estimate_object_twist(fingertip_twists, object_jacobian)
}

/// One inner step of the plant under an already clamped torque.
pub fn step_plant(
    profile: &HandProfile,
    grasp: &Grasp,
    cfg: &PlantConfig,
    state: &PlantState,
    torque: &TorqueCommand,
    dt: f64,
) -> Result<PlantState> {
    check_len(profile.num_joints(), torque.tau.len(), "torque command")?;
    let qdot = &torque.tau * cfg.gamma;
    let q = &state.joints.q;
    let j = stacked_jacobian_for(profile, q, &grasp.chains)?;
    let jo = grasp.object_jacobian_at(&state.object_pose)?;
    let twist = object_twist_from_fingertips(&(&j * &qdot), &jo)?;

    let object_pose = twist.integrate(&state.object_pose, dt);
    let contact_forces = contact_force_readout(grasp, cfg, &object_pose, &state.object_twist, &twist, dt)?;
    Ok(PlantState {
        joints: JointState {
            q: profile.clamp_to_limits(&(q + &qdot * dt)),
            qdot,
        },
        object_pose,
        object_twist: twist,
        contact_points: state.contact_points.clone(),
        contact_forces,
        time: state.time + dt,
    })
}

fn contact_force_readout(
    grasp: &Grasp,
    cfg: &PlantConfig,
    pose: &Pose,
    previous: &Twist,
    current: &Twist,
    dt: f64,
) -> Result<Vec<Vector3<f64>>> {
    let contacts = grasp.contacts_at(pose)?;
    let g = build_grasp_matrix(&contacts)?;
    let radius = grasp.surface.inradius();
    let inertia = ObjectInertia::solid_sphere(cfg.object_mass_kg, radius)?;
    let inertia = ObjectInertia {
        angular_velocity: current.angular,
        ..inertia
    };
    let accel = (current.linear - previous.linear) / dt;
    let alpha = (current.angular - previous.angular) / dt;
    let mut sol = force_decompose(&g, &object_wrench(&inertia, &accel, &alpha));
    if let Some(f_min) = cfg.interaction_force_n {
        if contacts.len() >= 2 {
            sol = select_interaction_forces(&sol, &contacts, f_min)?;
        }
    }
    Ok(sol.total())
}

/// Encoder reading of `q`: nearest multiple of the resolution.
pub fn quantize(q: &DVector<f64>, resolution_rad: f64) -> DVector<f64> {
    q.map(|v| (v / resolution_rad).round() * resolution_rad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub tau: DVector<f64>,
    pub pose: Pose,
}

/// Closed loop: resolved-rate goals at the outer rate, impedance torques at the inner rate.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub profile: HandProfile,
    pub plant: PlantConfig,
    pub ctrl: ControllerConfig,
    pub gains: GainSet,
    pub dynamics: DynamicsTerms,
    pub grasp: Grasp,
    pub state: PlantState,
    pub log: Vec<TrajectoryRow>,
    pub q_des: DVector<f64>,
    pub outer_steps: usize,
    inner_per_outer: usize,
    dt_inner: f64,
}

impl Simulation {
    /// Starts at the profile's grasp configuration.
    pub fn new(profile: &HandProfile, plant: &PlantConfig, ctrl: &ControllerConfig) -> Result<Self> {
        plant.validate()?;
        ctrl.validate()?;
        let n = profile.num_joints();
        let gains = ctrl.gains(n)?;
        let q0 = profile.clamp_to_limits(&profile.grasp_q);
        let grasp = Grasp::from_profile(profile, &q0, plant.surface)?;
        let contacts = grasp.contacts_at(&grasp.initial_pose)?;
        let object_frame_contacts: Vec<Contact> = grasp
            .contact_points
            .iter()
            .zip(&contacts)
            .map(|(c, world)| Contact::new(*c, world.inward_normal))
            .collect::<Result<_>>()?;
        squeeze_targets(&grasp.surface, &object_frame_contacts, ctrl.squeeze_depth_m)?;

        let torque_rate = plant.torque_rate_hz.unwrap_or(profile.torque_rate_hz);
        let rrm_rate = plant.rrm_rate_hz.unwrap_or(profile.rrm_rate_hz);
        let inner_per_outer = ((torque_rate / rrm_rate).round() as usize).max(1);
        let state = PlantState {
            joints: JointState::at_rest(q0.clone()),
            object_pose: grasp.initial_pose,
            object_twist: Twist::zero(),
            contact_points: grasp.contact_points.clone(),
            contact_forces: vec![Vector3::zeros(); grasp.chains.len()],
            time: 0.0,
        };
        let log = vec![TrajectoryRow {
            t: 0.0,
            q: q0.clone(),
            tau: DVector::zeros(n),
            pose: state.object_pose,
        }];
        Ok(Self {
            profile: profile.clone(),
            plant: plant.clone(),
            ctrl: ctrl.clone(),
            gains,
            dynamics: DynamicsTerms::zero(),
            grasp,
            state,
            log,
            q_des: q0,
            outer_steps: 0,
            inner_per_outer,
            dt_inner: 1.0 / torque_rate,
        })
    }

    pub fn inner_steps_per_outer(&self) -> usize {
        self.inner_per_outer
    }

    pub fn outer_period(&self) -> f64 {
        self.inner_per_outer as f64 * self.dt_inner
    }

    /// Joint state as the controller sees it.
    pub fn measured_joints(&self) -> JointState {
        let mut js = self.state.joints.clone();
        if self.plant.encoder_quantization {
            js.q = quantize(&js.q, self.profile.encoder_resolution_deg.to_radians());
        }
        js
    }

    /// Shrinks the joint-goal increment uniformly until the stiffness torque
    /// it demands fits the torque limits. Per-joint saturation alone would bend
    /// the commanded motion and the fingers would stop agreeing on a rigid motion.
    fn torque_feasible_goal(&self, q: &DVector<f64>, q_des: &DVector<f64>) -> DVector<f64> {
        let delta = q_des - q;
        let demand = self
            .gains
            .k
            .iter()
            .zip(delta.iter())
            .zip(&self.profile.torque_limits_nm)
            .map(|((k, d), lim)| (k * d).abs() / lim)
            .fold(0.0, f64::max);
        if demand > 1.0 {
            q + delta / demand
        } else {
            q_des.clone()
        }
    }

    pub fn rotation_error_to(&self, goal: &Pose) -> Result<f64> {
        rotation_error(&self.state.object_pose, goal)
    }

    /// One outer period toward `goal`: a resolved-rate update followed by the inner torque loop.
    pub fn outer_step(&mut self, goal: &Pose) -> Result<()> {
        let measured = self.measured_joints();
        let twist = screw_between_poses(&self.state.object_pose, goal, self.ctrl.dt_s)?;
        let j: DMatrix<f64> = stacked_jacobian_for(&self.profile, &measured.q, &self.grasp.chains)?;
        let jo = self.grasp.object_jacobian_at(&self.state.object_pose)?;
        let step = resolved_rate_step(&j, &jo, &twist, &measured, &self.ctrl, &self.profile)?;
        self.q_des = self.torque_feasible_goal(&measured.q, &step.q_des);

        let n = self.profile.num_joints();
        let zeros = DVector::zeros(n);
        for _ in 0..self.inner_per_outer {
            let measured = self.measured_joints();
            let cmd = impedance_torque(&self.gains, &self.dynamics, &self.q_des, &zeros, &zeros, &measured)?;
            let cmd = clamp_torque_to(&cmd, &self.profile.torque_limits_nm);
            self.state = step_plant(&self.profile, &self.grasp, &self.plant, &self.state, &cmd, self.dt_inner)?;
            self.log.push(TrajectoryRow {
                t: self.state.time,
                q: self.state.joints.q.clone(),
                tau: cmd.tau,
                pose: self.state.object_pose,
            });
        }
        self.outer_steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub log: Vec<TrajectoryRow>,
    /// Rotation error to the goal before each outer step, and after the last.
    pub errors: Vec<f64>,
    pub outer_steps: usize,
    pub final_state: PlantState,
}

impl Episode {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("episode records the initial error")
    }
}

/// Drives the object to `goal` (object pose in the hand frame) until the
/// rotation error drops below tolerance.
pub fn run_episode(profile: &HandProfile, plant: &PlantConfig, ctrl: &ControllerConfig, goal: &Pose) -> Result<Episode> {
    goal.validate()?;
    let mut sim = Simulation::new(profile, plant, ctrl)?;
    run_episode_from(&mut sim, goal)
}

/// Same as [`run_episode`] for a prepared simulation.
pub fn run_episode_from(sim: &mut Simulation, goal: &Pose) -> Result<Episode> {
    let initial_error = sim.rotation_error_to(goal)?;
    if initial_error > sim.plant.goal_rotation_cap_rad {
        return Err(Error::Invalid(format!(
            "goal rotation {:.3} rad exceeds the cap of {:.3} rad",
            initial_error, sim.plant.goal_rotation_cap_rad
        )));
    }
    let mut errors = vec![initial_error];
    while *errors.last().unwrap() >= sim.ctrl.rotation_error_tol_rad {
        if sim.outer_steps >= sim.ctrl.max_steps {
            return Err(Error::NotConverged {
                steps: sim.outer_steps,
                error_rad: *errors.last().unwrap(),
            });
        }
        sim.outer_step(goal)?;
        errors.push(sim.rotation_error_to(goal)?);
    }
    Ok(Episode {
        log: sim.log.clone(),
        errors,
        outer_steps: sim.outer_steps,
        final_state: sim.state.clone(),
    })
}

/// Object pose rotated about its own origin by `rotation_vector` (hand-frame axis).
pub fn rotated_goal(initial: &Pose, rotation_vector: &Vector3<f64>) -> Pose {
    let r = Pose::from_rotation_vector(rotation_vector);
    Pose::new(r.rotation * initial.rotation, initial.origin)
}
