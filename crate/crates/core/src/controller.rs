//! Joint impedance law, torque saturation, squeeze targets and the
//! resolved-rate outer loop.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grasp::Contact;
use crate::hand::{HandProfile, JointState, ObjectJacobian};
use crate::se3::{pseudoinverse, Twist};

pub const DEFAULT_STIFFNESS: f64 = 5.0;
pub const DEFAULT_DAMPING: f64 = 0.1;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_SQUEEZE_DEPTH: f64 = 0.005;
/// 0.1°
pub const DEFAULT_ROTATION_TOL: f64 = 0.1 * std::f64::consts::PI / 180.0;
pub const DEFAULT_MAX_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    /// N·m/rad
    pub k: DVector<f64>,
    /// N·m·s/rad
    pub d: DVector<f64>,
}

impl GainSet {
    pub fn uniform(n: usize, k: f64, d: f64) -> Self {
        Self {
            k: DVector::from_element(n, k),
            d: DVector::from_element(n, d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len(self.k.len(), self.d.len(), "damping gains")?;
        if self.k.iter().chain(self.d.iter()).any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::Invalid("gains must be finite and non-negative".into()));
        }
        Ok(())
    }
}

pub type MassFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type CoriolisFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type GravityFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Feed-forward terms `M(q)`, `C(q, q̇)` and `g(q)`. Unset providers contribute zero.
#[derive(Clone, Default)]
pub struct DynamicsTerms {
    pub mass: Option<MassFn>,
    pub coriolis: Option<CoriolisFn>,
    pub gravity: Option<GravityFn>,
}

impl fmt::Debug for DynamicsTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsTerms")
            .field("mass", &self.mass.is_some())
            .field("coriolis", &self.coriolis.is_some())
            .field("gravity", &self.gravity.is_some())
            .finish()
    }
}

impl DynamicsTerms {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.mass.is_none() && self.coriolis.is_none() && self.gravity.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorqueCommand {
    pub tau: DVector<f64>,
    pub clamped: Vec<bool>,
}

impl TorqueCommand {
    pub fn unclamped(tau: DVector<f64>) -> Self {
        let n = tau.len();
        Self {
            tau,
            clamped: vec![false; n],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::unclamped(DVector::zeros(n))
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

/// `τ = K(q_des − q) + D(q̇_des − q̇) + M q̈_des + C(q_des, q̇_des) + g(q_des)`.
pub fn impedance_torque(
    gains: &GainSet,
    dynamics: &DynamicsTerms,
    q_des: &DVector<f64>,
    qdot_des: &DVector<f64>,
    qddot_des: &DVector<f64>,
    state: &JointState,
) -> Result<TorqueCommand> {
    let n = state.q.len();
    check_len(n, state.qdot.len(), "joint rates")?;
    check_len(n, q_des.len(), "desired joint angles")?;
    check_len(n, qdot_des.len(), "desired joint rates")?;
    check_len(n, qddot_des.len(), "desired joint accelerations")?;
    check_len(n, gains.k.len(), "stiffness gains")?;
    check_len(n, gains.d.len(), "damping gains")?;

    let mut tau = gains.k.component_mul(&(q_des - &state.q)) + gains.d.component_mul(&(qdot_des - &state.qdot));
    if let Some(m) = &dynamics.mass {
        tau += m(q_des) * qddot_des;
    }
    if let Some(c) = &dynamics.coriolis {
        tau += c(q_des, qdot_des);
    }
    if let Some(g) = &dynamics.gravity {
        tau += g(q_des);
    }
    Ok(TorqueCommand::unclamped(tau))
}

/// Saturates each joint at ± its limiting torque. Flags from `cmd` are kept.
pub fn clamp_torque(cmd: &TorqueCommand, profile: &HandProfile) -> TorqueCommand {
    clamp_torque_to(cmd, &profile.torque_limits_nm)
}

pub fn clamp_torque_to(cmd: &TorqueCommand, limits: &[f64]) -> TorqueCommand {
    let mut out = cmd.clone();
    for (j, (t, &lim)) in out.tau.iter_mut().zip(limits).enumerate() {
        if t.abs() > lim {
            *t = t.clamp(-lim, lim);
            out.clamped[j] = true;
        }
    }
    out
}

/// Object surface centred on the object frame origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectSurface {
    Sphere { radius: f64 },
    /// Axis-aligned box in the object frame.
    Box { half_extents: [f64; 3] },
}

impl ObjectSurface {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Sphere { radius } => *radius > 0.0 && radius.is_finite(),
            Self::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0 && h.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("object dimensions must be positive: {self:?}")))
        }
    }

    /// Radius of the largest sphere inside the object.
    pub fn inradius(&self) -> f64 {
        match self {
            Self::Sphere { radius } => *radius,
            Self::Box { half_extents } => half_extents.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Unit normal pointing into the object at (or nearest to) surface point `p`.
    pub fn inward_normal(&self, p: &Vector3<f64>) -> Result<Vector3<f64>> {
        match self {
            Self::Sphere { .. } => {
                let n = p.norm();
                if n == 0.0 {
                    return Err(Error::Invalid("contact at the sphere centre has no normal".into()));
                }
                Ok(-p / n)
            }
            Self::Box { half_extents } => {
                let axis = (0..3)
                    .max_by(|&a, &b| (p[a].abs() / half_extents[a]).total_cmp(&(p[b].abs() / half_extents[b])))
                    .unwrap_or(0);
                if p[axis] == 0.0 {
                    return Err(Error::Invalid("contact at the box centre has no normal".into()));
                }
                let mut n = Vector3::zeros();
                n[axis] = -p[axis].signum();
                Ok(n)
            }
        }
    }
}

/// Fingertip goals pushed `depth` into the object along the inward surface normal.
pub fn squeeze_targets(surface: &ObjectSurface, contacts: &[Contact], depth: f64) -> Result<Vec<Vector3<f64>>> {
    surface.validate()?;
    if !(depth >= 0.0) {
        return Err(Error::Invalid(format!("squeeze depth must be non-negative, got {depth}")));
    }
    let inradius = surface.inradius();
    if depth > inradius {
        return Err(Error::SqueezeTooDeep { depth, inradius });
    }
    contacts
        .iter()
        .map(|c| Ok(c.r + depth * surface.inward_normal(&c.r)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub eta: f64,
    /// Outer-loop period; `1 / rrm_rate`.
    pub dt_s: f64,
    /// Per-joint stiffness; empty means the default for every joint.
    pub gains_k: Vec<f64>,
    pub gains_d: Vec<f64>,
    pub squeeze_depth_m: f64,
    pub rotation_error_tol_rad: f64,
    pub max_steps: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            dt_s: 0.05,
            gains_k: Vec::new(),
            gains_d: Vec::new(),
            squeeze_depth_m: DEFAULT_SQUEEZE_DEPTH,
            rotation_error_tol_rad: DEFAULT_ROTATION_TOL,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl ControllerConfig {
    pub fn for_profile(profile: &HandProfile) -> Self {
        Self {
            dt_s: 1.0 / profile.rrm_rate_hz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 2.0) {
            return Err(Error::Invalid(format!("eta must lie in (0, 2], got {}", self.eta)));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::Invalid(format!("dt_s must be positive, got {}", self.dt_s)));
        }
        if !(self.squeeze_depth_m >= 0.0) {
            return Err(Error::Invalid("squeeze_depth_m must be non-negative".into()));
        }
        if !(self.rotation_error_tol_rad > 0.0) {
            return Err(Error::Invalid("rotation_error_tol_rad must be positive".into()));
        }
        Ok(())
    }

    pub fn gains(&self, n: usize) -> Result<GainSet> {
        let expand = |v: &[f64], default: f64, ctx| -> Result<DVector<f64>> {
            match v.len() {
                0 => Ok(DVector::from_element(n, default)),
                1 => Ok(DVector::from_element(n, v[0])),
                _ => {
                    check_len(n, v.len(), ctx)?;
                    Ok(DVector::from_column_slice(v))
                }
            }
        };
        let gains = GainSet {
            k: expand(&self.gains_k, DEFAULT_STIFFNESS, "gains_k")?,
            d: expand(&self.gains_d, DEFAULT_DAMPING, "gains_d")?,
        };
        gains.validate()?;
        Ok(gains)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStep {
    pub qdot: DVector<f64>,
    pub q_des: DVector<f64>,
}

/// One resolved-rate update: `q̇ = J⁺·J_o·$_o`, `q_des = clamp(q + η·q̇·Δt)`.
///
/// `jacobian` holds the fingertip rows of the chains listed in the object
/// Jacobian, in the same order.
pub fn resolved_rate_step(
    jacobian: &DMatrix<f64>,
    object_jacobian: &ObjectJacobian,
    object_twist: &Twist,
    state: &JointState,
    cfg: &ControllerConfig,
    profile: &HandProfile,
) -> Result<RateStep> {
    if !object_twist.is_finite() {
        return Err(Error::Invalid("object twist is not finite".into()));
    }
    check_len(object_jacobian.stacked.nrows(), jacobian.nrows(), "fingertip Jacobian rows")?;
    check_len(state.q.len(), jacobian.ncols(), "fingertip Jacobian columns")?;
    let tip_twists = &object_jacobian.stacked * DVector::from_column_slice(object_twist.to_vector().as_slice());
    let qdot = pseudoinverse(jacobian) * tip_twists;
    let q_des = profile.clamp_to_limits(&(&state.q + &qdot * (cfg.eta * cfg.dt_s)));
    Ok(RateStep { qdot, q_des })
}
