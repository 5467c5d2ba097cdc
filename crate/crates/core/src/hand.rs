//! Tree-type hand kinematics: DH serial chains, fingertip Jacobians and the
//! object-to-fingertip twist maps.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grasp::Contact;
use crate::se3::{skew, Pose};

const ALLEGRO_LIKE_JSON: &str = include_str!("../profiles/allegro_like.json");

/// Standard DH link: `Rz(θ + θ₀) · Tz(d) · Tx(a) · Rx(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhParam {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhParam {
    pub fn transform(&self, q: f64) -> Pose {
        let (st, ct) = (q + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Pose {
            rotation: Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
            origin: Vector3::new(self.a * ct, self.a * st, self.d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain {
    pub name: String,
    pub base_pose: Pose,
    pub joints: Vec<DhParam>,
}

impl SerialChain {
    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Frames `0..=k` in the hand frame; frame 0 is the base, frame `k` the fingertip.
    pub fn frames(&self, q: &[f64]) -> Result<Vec<Pose>> {
        check_len(self.joints.len(), q.len(), "chain joint angles")?;
        let mut frames = Vec::with_capacity(q.len() + 1);
        let mut current = self.base_pose;
        frames.push(current);
        for (link, &qi) in self.joints.iter().zip(q) {
            current = current.compose(&link.transform(qi));
            frames.push(current);
        }
        Ok(frames)
    }
}

/// Fingertip pose of a chain.
pub fn forward_kinematics(chain: &SerialChain, q: &[f64]) -> Result<Pose> {
    Ok(*chain.frames(q)?.last().expect("chain has a base frame"))
}

/// 6 × k geometric Jacobian in the hand frame: column j is `[zⱼ; zⱼ × (p_tip − pⱼ)]`,
/// so `J·q̇` is the fingertip twist with the fingertip point velocity as linear part.
pub fn chain_jacobian(chain: &SerialChain, q: &[f64]) -> Result<DMatrix<f64>> {
    let frames = chain.frames(q)?;
    let tip = frames[frames.len() - 1].origin;
    let mut j = DMatrix::zeros(6, q.len());
    for (col, frame) in frames[..q.len()].iter().enumerate() {
        let z: Vector3<f64> = frame.rotation.column(2).into_owned();
        let v = z.cross(&(tip - frame.origin));
        j.fixed_view_mut::<3, 1>(0, col).copy_from(&z);
        j.fixed_view_mut::<3, 1>(3, col).copy_from(&v);
    }
    Ok(j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qdot: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandProfile {
    pub name: String,
    pub chains: Vec<SerialChain>,
    /// Per joint `(min, max)` in degrees.
    pub joint_limits_deg: Vec<(f64, f64)>,
    /// Per joint symmetric limit, N·m.
    pub torque_limits_nm: Vec<f64>,
    pub gear_ratio: f64,
    pub torque_rate_hz: f64,
    pub rrm_rate_hz: f64,
    pub encoder_resolution_deg: f64,
    /// Joint configuration holding the object (rad).
    pub grasp_q: DVector<f64>,
    /// Chains whose fingertips touch the object.
    pub manipulating_chains: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainFile {
    #[serde(default)]
    name: Option<String>,
    base_pose: Vec<f64>,
    dh: Vec<DhParam>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileFile {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    chains: Vec<ChainFile>,
    joint_limits_deg: Vec<[f64; 2]>,
    torque_limits_nm: Vec<f64>,
    gear_ratio: f64,
    torque_rate_hz: f64,
    rrm_rate_hz: f64,
    encoder_resolution_deg: f64,
    #[serde(default)]
    grasp_q_deg: Option<Vec<f64>>,
    #[serde(default)]
    manipulating_chains: Option<Vec<usize>>,
}

impl HandProfile {
    /// Bundled four-finger, sixteen-joint profile.
    pub fn allegro_like() -> Self {
        Self::from_json_str(ALLEGRO_LIKE_JSON).expect("bundled profile is valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ProfileFile = serde_json::from_str(s)?;
        let chains = file
            .chains
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(SerialChain {
                    name: c.name.unwrap_or_else(|| format!("chain{i}")),
                    base_pose: Pose::from_row_major(&c.base_pose)?,
                    joints: c.dh,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let k3: usize = chains.iter().map(SerialChain::num_joints).sum();
        let grasp_q = match file.grasp_q_deg {
            Some(v) => {
                check_len(k3, v.len(), "grasp_q_deg")?;
                DVector::from_iterator(k3, v.iter().map(|d| d.to_radians()))
            }
            None => DVector::zeros(k3),
        };
        let profile = HandProfile {
            name: file.name,
            manipulating_chains: file
                .manipulating_chains
                .unwrap_or_else(|| (0..chains.len()).collect()),
            chains,
            joint_limits_deg: file.joint_limits_deg.iter().map(|l| (l[0], l[1])).collect(),
            torque_limits_nm: file.torque_limits_nm,
            gear_ratio: file.gear_ratio,
            torque_rate_hz: file.torque_rate_hz,
            rrm_rate_hz: file.rrm_rate_hz,
            encoder_resolution_deg: file.encoder_resolution_deg,
            grasp_q,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = ProfileFile {
            name: self.name.clone(),
            note: None,
            chains: self
                .chains
                .iter()
                .map(|c| ChainFile {
                    name: Some(c.name.clone()),
                    base_pose: c.base_pose.to_row_major(),
                    dh: c.joints.clone(),
                })
                .collect(),
            joint_limits_deg: self.joint_limits_deg.iter().map(|&(a, b)| [a, b]).collect(),
            torque_limits_nm: self.torque_limits_nm.clone(),
            gear_ratio: self.gear_ratio,
            torque_rate_hz: self.torque_rate_hz,
            rrm_rate_hz: self.rrm_rate_hz,
            encoder_resolution_deg: self.encoder_resolution_deg,
            grasp_q_deg: Some(self.grasp_q.iter().map(|q| q.to_degrees()).collect()),
            manipulating_chains: Some(self.manipulating_chains.clone()),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains.is_empty() {
            return Err(Error::Invalid("hand profile has no chains".into()));
        }
        if let Some(c) = self.chains.iter().find(|c| c.joints.is_empty()) {
            return Err(Error::Invalid(format!("chain '{}' has no joints", c.name)));
        }
        let k3 = self.num_joints();
        check_len(k3, self.joint_limits_deg.len(), "joint_limits_deg")?;
        check_len(k3, self.torque_limits_nm.len(), "torque_limits_nm")?;
        check_len(k3, self.grasp_q.len(), "grasp_q_deg")?;
        for (j, &(lo, hi)) in self.joint_limits_deg.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::Invalid(format!("joint {j}: limit min {lo} is not below max {hi}")));
            }
        }
        if let Some(j) = self.torque_limits_nm.iter().position(|&t| !(t > 0.0)) {
            return Err(Error::Invalid(format!("joint {j}: torque limit must be positive")));
        }
        for (label, v) in [
            ("gear_ratio", self.gear_ratio),
            ("torque_rate_hz", self.torque_rate_hz),
            ("rrm_rate_hz", self.rrm_rate_hz),
            ("encoder_resolution_deg", self.encoder_resolution_deg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{label} must be positive, got {v}")));
            }
        }
        if let Some(&c) = self.manipulating_chains.iter().find(|&&c| c >= self.chains.len()) {
            return Err(Error::Invalid(format!("manipulating chain {c} does not exist")));
        }
        if self.chains.iter().flat_map(|c| c.joints.iter()).any(|d| {
            !(d.a.is_finite() && d.alpha.is_finite() && d.d.is_finite() && d.theta_offset.is_finite())
        }) {
            return Err(Error::Invalid("non-finite DH parameter".into()));
        }
        Ok(())
    }

    /// Total joint count k₃.
    pub fn num_joints(&self) -> usize {
        self.chains.iter().map(SerialChain::num_joints).sum()
    }

    /// Index of the first joint of each chain in the stacked joint vector.
    pub fn chain_offsets(&self) -> Vec<usize> {
        self.chains
            .iter()
            .scan(0, |acc, c| {
                let start = *acc;
                *acc += c.num_joints();
                Some(start)
            })
            .collect()
    }

    pub fn chain_index(&self, name: &str) -> Option<usize> {
        self.chains.iter().position(|c| c.name == name)
    }

    /// Global joint index of joint `joint` of chain `chain`.
    pub fn joint_index(&self, chain: usize, joint: usize) -> Option<usize> {
        let c = self.chains.get(chain)?;
        (joint < c.num_joints()).then(|| self.chain_offsets()[chain] + joint)
    }

    pub fn chain_q<'a>(&self, q: &'a DVector<f64>, chain: usize) -> &'a [f64] {
        let start = self.chain_offsets()[chain];
        &q.as_slice()[start..start + self.chains[chain].num_joints()]
    }

    pub fn joint_limits_rad(&self) -> Vec<(f64, f64)> {
        self.joint_limits_deg
            .iter()
            .map(|&(lo, hi)| (lo.to_radians(), hi.to_radians()))
            .collect()
    }

    /// Joint motion range in degrees.
    pub fn joint_range_deg(&self, joint: usize) -> f64 {
        let (lo, hi) = self.joint_limits_deg[joint];
        hi - lo
    }

    /// Saturates each joint angle to its mechanical range.
    pub fn clamp_to_limits(&self, q: &DVector<f64>) -> DVector<f64> {
        let limits = self.joint_limits_rad();
        DVector::from_iterator(
            q.len(),
            q.iter().zip(limits).map(|(&v, (lo, hi))| v.clamp(lo, hi)),
        )
    }

    pub fn fingertip_poses(&self, q: &DVector<f64>) -> Result<Vec<Pose>> {
        check_len(self.num_joints(), q.len(), "hand joint angles")?;
        (0..self.chains.len())
            .map(|i| forward_kinematics(&self.chains[i], self.chain_q(q, i)))
            .collect()
    }
}

/// Reads and validates a hand profile file.
pub fn load_profile(path: impl AsRef<Path>) -> Result<HandProfile> {
    HandProfile::from_json_str(&std::fs::read_to_string(path)?)
}

/// Block-diagonal fingertip Jacobian of all chains, `6p × k₃`.
pub fn stacked_jacobian(profile: &HandProfile, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..profile.chains.len()).collect();
    stacked_jacobian_for(profile, q, &all)
}

/// Fingertip Jacobian rows for the listed chains only, `6·|chains| × k₃`.
pub fn stacked_jacobian_for(
    profile: &HandProfile,
    q: &DVector<f64>,
    chains: &[usize],
) -> Result<DMatrix<f64>> {
    check_len(profile.num_joints(), q.len(), "hand joint angles")?;
    let offsets = profile.chain_offsets();
    let mut j = DMatrix::zeros(6 * chains.len(), profile.num_joints());
    for (row, &c) in chains.iter().enumerate() {
        let chain = profile
            .chains
            .get(c)
            .ok_or_else(|| Error::Invalid(format!("chain {c} does not exist")))?;
        let block = chain_jacobian(chain, profile.chain_q(q, c))?;
        j.view_mut((6 * row, offsets[c]), (6, chain.num_joints()))
            .copy_from(&block);
    }
    Ok(j)
}

/// Object twist → fingertip twist maps, `[[I, 0], [−r̃ᵢ, I]]` per contact.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectJacobian {
    pub blocks: Vec<Matrix6<f64>>,
    /// 6p × 6
    pub stacked: DMatrix<f64>,
}

pub fn object_jacobians(contacts: &[Contact]) -> Result<ObjectJacobian> {
    if contacts.is_empty() {
        return Err(Error::Invalid("object Jacobian needs at least one contact".into()));
    }
    let blocks: Vec<Matrix6<f64>> = contacts
        .iter()
        .map(|c| {
            let mut b = Matrix6::identity();
            b.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-skew(&c.r)));
            b
        })
        .collect();
    let mut stacked = DMatrix::zeros(6 * blocks.len(), 6);
    for (i, b) in blocks.iter().enumerate() {
        stacked.fixed_view_mut::<6, 6>(6 * i, 0).copy_from(b);
    }
    Ok(ObjectJacobian { blocks, stacked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{rotation_log, Twist};
    use nalgebra::{Matrix4, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn planar_2r() -> SerialChain {
        let link = DhParam {
            a: 1.0,
            alpha: 0.0,
            d: 0.0,
            theta_offset: 0.0,
        };
        SerialChain {
            name: "planar".into(),
            base_pose: Pose::identity(),
            joints: vec![link, link],
        }
    }

    /// Oracle: product of elementary homogeneous matrices.
    fn naive_fk(chain: &SerialChain, q: &[f64]) -> Matrix4<f64> {
        let rz = |t: f64| {
            let (s, c) = t.sin_cos();
            Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
        };
        let rx = |t: f64| {
            let (s, c) = t.sin_cos();
            Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0)
        };
        let tr = |x: f64, z: f64| {
            let mut m = Matrix4::identity();
            m[(0, 3)] = x;
            m[(2, 3)] = z;
            m
        };
        let mut t = chain.base_pose.to_homogeneous();
        for (l, &qi) in chain.joints.iter().zip(q) {
            t = t * rz(qi + l.theta_offset) * tr(0.0, l.d) * tr(l.a, 0.0) * rx(l.alpha);
        }
        t
    }

    fn random_q(profile: &HandProfile, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let limits = profile.joint_limits_rad();
        DVector::from_iterator(
            limits.len(),
            limits.iter().map(|&(lo, hi)| rng.random_range(lo..hi)),
        )
    }

    #[test]
    fn default_profile_tables() {
        let p = HandProfile::allegro_like();
        assert_eq!(p.chains.len(), 4);
        assert!(p.chains.iter().all(|c| c.num_joints() == 4));
        let thumb = p.chain_index("thumb").unwrap();
        let j1 = p.joint_index(thumb, 0).unwrap();
        assert!((p.joint_range_deg(j1) - 64.9).abs() < 1e-9);
        assert_eq!(p.torque_limits_nm[j1], 0.437);
        let index = p.chain_index("index").unwrap();
        let j2 = p.joint_index(index, 1).unwrap();
        assert!((p.joint_range_deg(j2) - 116.52).abs() < 1e-9);
        assert_eq!(p.torque_limits_nm[j2], 0.562);
        assert_eq!(p.gear_ratio, 369.0);
        assert_eq!(p.torque_rate_hz, 333.0);
        assert_eq!(p.rrm_rate_hz, 20.0);
        assert_eq!(p.encoder_resolution_deg, 0.005);
    }

    #[test]
    fn profile_json_round_trip() {
        let p = HandProfile::allegro_like();
        let back = HandProfile::from_json_str(&p.to_json_string().unwrap()).unwrap();
        assert_eq!(back.num_joints(), 16);
        assert_eq!(back.joint_limits_deg, p.joint_limits_deg);
        assert!((back.grasp_q.clone() - p.grasp_q.clone()).amax() < 1e-12);
    }

    #[test]
    fn inconsistent_limits_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(ALLEGRO_LIKE_JSON).unwrap();
        v["chains"] = serde_json::json!([v["chains"][0]]);
        v["joint_limits_deg"] = serde_json::json!([[0, 1], [0, 1], [0, 1]]);
        v["torque_limits_nm"] = serde_json::json!([1, 1, 1, 1]);
        v["grasp_q_deg"] = serde_json::Value::Null;
        v["manipulating_chains"] = serde_json::Value::Null;
        let err = HandProfile::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }), "{err}");

        v["joint_limits_deg"] = serde_json::json!([[0, 1], [0, 1], [2, 1], [0, 1]]);
        assert!(HandProfile::from_json_str(&v.to_string()).is_err());
        assert!(HandProfile::from_json_str("{").is_err());
    }

    #[test]
    fn planar_fk() {
        let chain = planar_2r();
        let tip = forward_kinematics(&chain, &[FRAC_PI_2, 0.0]).unwrap();
        assert!((tip.origin - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-15);
        let home = forward_kinematics(&chain, &[0.0, 0.0]).unwrap();
        assert_eq!(home.origin, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(home.rotation, Matrix3::identity());
        assert!(forward_kinematics(&chain, &[0.0]).is_err());
    }

    #[test]
    fn zero_configuration_composes_offsets_only() {
        let p = HandProfile::allegro_like();
        for chain in &p.chains {
            let q = vec![0.0; chain.num_joints()];
            let mut expected = chain.base_pose;
            for l in &chain.joints {
                expected = expected.compose(&l.transform(0.0));
            }
            let tip = forward_kinematics(chain, &q).unwrap();
            assert_eq!(tip, expected);
        }
    }

    #[test]
    fn fk_matches_naive_oracle() {
        let p = HandProfile::allegro_like();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let q = random_q(&p, &mut rng);
            for (i, chain) in p.chains.iter().enumerate() {
                let qi = p.chain_q(&q, i);
                let tip = forward_kinematics(chain, qi).unwrap().to_homogeneous();
                assert!((tip - naive_fk(chain, qi)).amax() < 1e-12);
                let r = tip.fixed_view::<3, 3>(0, 0).into_owned();
                assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn planar_jacobian_single_screw() {
        let chain = planar_2r();
        let j = chain_jacobian(&chain, &[0.0, 0.0]).unwrap();
        let tw = Twist::from_slice((&j * DVector::from_vec(vec![1.0, 0.0])).as_slice()).unwrap();
        assert_eq!(tw.angular, Vector3::new(0.0, 0.0, 1.0));
        let r_tip = Vector3::new(2.0, 0.0, 0.0);
        assert!((tw.linear - tw.angular.cross(&r_tip)).norm() < 1e-15);
        let zero = &j * DVector::zeros(2);
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = HandProfile::allegro_like();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eps = 1e-7;
        for _ in 0..20 {
            let q = random_q(&p, &mut rng);
            for (i, chain) in p.chains.iter().enumerate() {
                let qi = p.chain_q(&q, i);
                let qdot: Vec<f64> = (0..qi.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let step = |s: f64| -> Vec<f64> { qi.iter().zip(&qdot).map(|(a, b)| a + s * b).collect() };
                let t0 = forward_kinematics(chain, &step(-eps)).unwrap();
                let t1 = forward_kinematics(chain, &step(eps)).unwrap();
                let w = rotation_log(&(t1.rotation * t0.rotation.transpose())).unwrap() / (2.0 * eps);
                let v = (t1.origin - t0.origin) / (2.0 * eps);
                let fd = Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z);
                let analytic = chain_jacobian(chain, qi).unwrap() * DVector::from_vec(qdot);
                let analytic = Vector6::from_column_slice(analytic.as_slice());
                assert!((fd - analytic).norm() <= 1e-5 * analytic.norm(), "{i} {fd} {analytic}");
            }
        }
    }

    #[test]
    fn stacked_jacobian_is_block_diagonal() {
        let p = HandProfile::allegro_like();
        let q = p.grasp_q.clone();
        let j = stacked_jacobian(&p, &q).unwrap();
        assert_eq!(j.shape(), (24, 16));
        let offsets = p.chain_offsets();
        for (i, chain) in p.chains.iter().enumerate() {
            let block = chain_jacobian(chain, p.chain_q(&q, i)).unwrap();
            for (k, _) in p.chains.iter().enumerate() {
                let view = j.view((6 * i, offsets[k]), (6, p.chains[k].num_joints()));
                if k == i {
                    assert_eq!(view.into_owned(), block);
                } else {
                    assert!(view.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn object_jacobian_cases() {
        let identity = object_jacobians(&[Contact::new(Vector3::zeros(), Vector3::x()).unwrap()]).unwrap();
        assert_eq!(identity.blocks[0], Matrix6::identity());

        let c = Contact::new(Vector3::new(1.0, 0.0, 0.0), -Vector3::x()).unwrap();
        let jo = object_jacobians(&[c]).unwrap();
        let tw = Twist::from_vector(&(jo.blocks[0] * Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0)));
        assert_eq!(tw.angular, Vector3::new(0.0, 0.0, 1.0));
        assert!((tw.linear - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn object_jacobian_matches_point_velocity_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let contacts: Vec<Contact> = (0..4)
            .map(|_| {
                let r = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3);
                Contact::new(r, -r).unwrap()
            })
            .collect();
        let jo = object_jacobians(&contacts).unwrap();
        assert_eq!(jo.stacked.shape(), (24, 6));
        let obj = Twist::new(Vector3::new(0.3, -0.2, 0.9), Vector3::new(0.1, 0.0, -0.4));
        let stacked = &jo.stacked * DVector::from_column_slice(obj.to_vector().as_slice());
        for (i, c) in contacts.iter().enumerate() {
            let tw = Twist::from_slice(&stacked.as_slice()[6 * i..6 * i + 6]).unwrap();
            assert!((tw.angular - obj.angular).norm() < 1e-15);
            assert!((tw.linear - (obj.linear + obj.angular.cross(&c.r))).norm() < 1e-15);
        }
    }

    #[test]
    fn clamping_is_idempotent() {
        let p = HandProfile::allegro_like();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = DVector::from_fn(16, |_, _| rng.random_range(-4.0..4.0));
        let once = p.clamp_to_limits(&q);
        assert_eq!(p.clamp_to_limits(&once), once);
        for ((v, (lo, hi)), orig) in once.iter().zip(p.joint_limits_rad()).zip(q.iter()) {
            assert!(*v >= lo && *v <= hi);
            if *orig >= lo && *orig <= hi {
                assert_eq!(v, orig);
            }
        }
    }
}
