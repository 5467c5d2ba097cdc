//! Rigid-body numerics shared by every other module.
//!
//! Twists are stored angular-first, `[ω; v]`, where `v` is the velocity of the
//! reference point the twist is attached to (object origin or fingertip).
//! Wrenches are force-first, `[f; m]`, matching the row order of the grasp matrix.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative singular-value threshold used for rank decisions.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-12;

/// Below this rotation angle the exponential/log maps use series expansions.
pub const SMALL_ANGLE: f64 = 1e-9;

/// Allowed deviation of `RᵀR` from identity before a matrix is rejected as a rotation.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

static RANK_TOLERANCE_BITS: AtomicU64 = AtomicU64::new(DEFAULT_RANK_TOLERANCE.to_bits());

/// Current relative rank tolerance (`τ = max(m, n) · σ_max · tol`).
pub fn rank_tolerance() -> f64 {
    f64::from_bits(RANK_TOLERANCE_BITS.load(Ordering::Relaxed))
}

/// Overrides the global relative rank tolerance. Non-positive or non-finite
/// values are ignored.
pub fn set_rank_tolerance(tol: f64) {
    if tol.is_finite() && tol > 0.0 {
        RANK_TOLERANCE_BITS.store(tol.to_bits(), Ordering::Relaxed);
    }
}

/// Cross-product matrix: `skew(r) * x == r.cross(&x)`.
pub fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rotation matrix of the rotation vector `rv` (axis · angle).
///
/// The axis is normalised before building `R = I + E sinθ + E²(1 − cosθ)`;
/// below [`SMALL_ANGLE`] the second-order series `I + [rv] + [rv]²/2` is used.
pub fn rodrigues_exp(rv: &Vector3<f64>) -> Matrix3<f64> {
    let theta = rv.norm();
    if theta < SMALL_ANGLE {
        let k = skew(rv);
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let e = skew(&(rv / theta));
    Matrix3::identity() + e * theta.sin() + e * e * (1.0 - theta.cos())
}

/// Rotation vector of a proper rotation matrix, with angle in `[0, π]`.
pub fn rotation_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let deviation = (r.transpose() * r - Matrix3::identity()).amax();
    if !deviation.is_finite() || deviation > ORTHONORMAL_TOLERANCE || r.determinant() <= 0.0 {
        return Err(Error::NotOrthonormal(deviation));
    }
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = vee(r);
    let sin = w.norm();
    let theta = sin.atan2(cos);
    if theta < SMALL_ANGLE {
        return Ok(w * (1.0 + theta * theta / 6.0));
    }
    if sin > 1e-2 || cos > 0.0 {
        return Ok(w * (theta / sin));
    }
    // Close to π the antisymmetric part vanishes; read the axis from the
    // symmetric part (1 − cosθ)·a·aᵀ instead.
    let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
    let k = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = b.column(k).into();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Rigid transform `[R o; 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            origin: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, origin: Vector3<f64>) -> Self {
        Self { rotation, origin }
    }

    pub fn from_translation(origin: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            origin,
        }
    }

    pub fn from_rotation_vector(rv: &Vector3<f64>) -> Self {
        Self {
            rotation: rodrigues_exp(rv),
            origin: Vector3::zeros(),
        }
    }

    /// Reads a row-major homogeneous 4×4 matrix, rejecting non-rigid input.
    pub fn from_row_major(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::Dimension {
                expected: 16,
                actual: m.len(),
                context: "row-major 4x4 pose",
            });
        }
        let h = Matrix4::from_row_slice(m);
        let pose = Self {
            rotation: h.fixed_view::<3, 3>(0, 0).into_owned(),
            origin: h.fixed_view::<3, 1>(0, 3).into_owned(),
        };
        let bottom = [h[(3, 0)], h[(3, 1)], h[(3, 2)], h[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Invalid("pose bottom row must be [0 0 0 1]".into()));
        }
        pose.validate()?;
        Ok(pose)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.to_homogeneous().transpose().as_slice().to_vec()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.origin);
        h
    }

    pub fn validate(&self) -> Result<()> {
        let deviation = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = self.rotation.determinant();
        if !deviation.is_finite() || deviation > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::NotOrthonormal(deviation.max((det - 1.0).abs())));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("pose origin is not finite".into()));
        }
        Ok(())
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            origin: self.rotation * other.origin + self.origin,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            origin: -(rt * self.origin),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.origin
    }

    /// Unit quaternion as `(w, x, y, z)`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            self.rotation,
        ));
        [q.w, q.i, q.j, q.k]
    }

    /// Re-orthonormalises the rotation (polar projection via SVD).
    pub fn renormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * v_t;
        }
        Pose {
            rotation: r,
            origin: self.origin,
        }
    }
}

/// Geodesic rotation angle between the orientations of two poses.
pub fn rotation_error(a: &Pose, b: &Pose) -> Result<f64> {
    Ok(rotation_log(&(b.rotation * a.rotation.transpose()))?.norm())
}

/// Rigid-body velocity, angular-first.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

impl Twist {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            angular: v.fixed_rows::<3>(0).into_owned(),
            linear: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        crate::error::check_len(6, v.len(), "twist")?;
        Ok(Self {
            angular: Vector3::new(v[0], v[1], v[2]),
            linear: Vector3::new(v[3], v[4], v[5]),
        })
    }

    /// `[ω; v]`
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    /// External linear-first representation `[v; ω]`.
    pub fn to_linear_first(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn from_linear_first(v: &Vector6<f64>) -> Self {
        Self {
            linear: v.fixed_rows::<3>(0).into_owned(),
            angular: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            angular: self.angular * s,
            linear: self.linear * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.angular.iter().chain(self.linear.iter()).all(|v| v.is_finite())
    }

    /// Holds the twist constant for `dt`: `R ← exp(ω dt)·R`, `o ← o + v dt`.
    pub fn integrate(&self, pose: &Pose, dt: f64) -> Pose {
        Pose {
            rotation: rodrigues_exp(&(self.angular * dt)) * pose.rotation,
            origin: pose.origin + self.linear * dt,
        }
    }
}

/// Finite screw motion: rotation vector and translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScrewDisplacement {
    pub rotation_vector: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl ScrewDisplacement {
    pub fn angle(&self) -> f64 {
        self.rotation_vector.norm()
    }

    /// Equivalent displacement with rotation angle below π.
    pub fn canonical(&self) -> Self {
        let theta = self.angle();
        if theta < std::f64::consts::PI {
            return *self;
        }
        let axis = self.rotation_vector / theta;
        let mut wrapped = theta.rem_euclid(2.0 * std::f64::consts::PI);
        if wrapped > std::f64::consts::PI {
            wrapped -= 2.0 * std::f64::consts::PI;
        }
        Self {
            rotation_vector: axis * wrapped,
            translation: self.translation,
        }
    }

    pub fn to_pose(&self) -> Pose {
        Pose {
            rotation: rodrigues_exp(&self.rotation_vector),
            origin: self.translation,
        }
    }
}

/// Constant twist carrying `from` onto `to` in `duration` seconds, under
/// [`Twist::integrate`].
pub fn screw_between_poses(from: &Pose, to: &Pose, duration: f64) -> Result<Twist> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Invalid(format!("duration must be positive, got {duration}")));
    }
    let rv = rotation_log(&(to.rotation * from.rotation.transpose()))?;
    Ok(Twist {
        angular: rv / duration,
        linear: (to.origin - from.origin) / duration,
    })
}

/// Singular value decomposition with full right factor.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Descending, length `min(m, n)`.
    pub singular_values: DVector<f64>,
    /// `m × min(m, n)`
    pub u: DMatrix<f64>,
    /// `n × n`; the first `min(m, n)` columns pair with `singular_values`.
    pub v: DMatrix<f64>,
    /// Absolute threshold below which singular values count as zero.
    pub tolerance: f64,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values
            .iter()
            .filter(|&&s| s > self.tolerance)
            .count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.singular_values.len();
        let vk = self.v.columns(0, k);
        &self.u * DMatrix::from_diagonal(&self.singular_values) * vk.transpose()
    }
}

/// SVD of `a` using the global rank tolerance.
pub fn svd(a: &DMatrix<f64>) -> SvdResult {
    svd_with_tolerance(a, rank_tolerance())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plane rotation of columns `p < q` of a column-major matrix with `rows` rows.
fn rotate_columns(data: &mut [f64], rows: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// One-sided Jacobi: rotates column pairs of `a` until they are mutually
/// orthogonal, accumulating the rotations in `v`. Unlike bidiagonal QR it
/// stays accurate when some singular values are exactly zero, and it yields
/// the full `n × n` right factor directly.
pub fn svd_with_tolerance(a: &DMatrix<f64>, rel_tol: f64) -> SvdResult {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut w = a.clone();
    let mut vf = DMatrix::<f64>::identity(n, n);
    let mut sq: Vec<f64> = (0..n).map(|j| w.column(j).norm_squared()).collect();
    // Columns below this are rounding noise; rotating them only trades noise.
    let floor = (f64::EPSILON * a.norm()).powi(2);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (sq[p], sq[q]);
                if alpha <= floor || beta <= floor {
                    continue;
                }
                let gamma = {
                    let ws = w.as_slice();
                    dot(&ws[p * m..(p + 1) * m], &ws[q * m..(q + 1) * m])
                };
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(w.as_mut_slice(), m, p, q, c, s);
                rotate_columns(vf.as_mut_slice(), n, p, q, c, s);
                sq[p] = alpha - t * gamma;
                sq[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
        // Refresh against drift of the running updates.
        for (j, v) in sq.iter_mut().enumerate() {
            *v = w.column(j).norm_squared();
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma_max = norms.iter().cloned().fold(0.0, f64::max);
    let tiny = sigma_max * f64::EPSILON * (m.max(n) as f64);

    let mut singular_values = DVector::zeros(k);
    let mut u = DMatrix::zeros(m, k);
    let mut v = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v.column_mut(dst).copy_from(&vf.column(src));
        if dst < k {
            singular_values[dst] = norms[src];
            if norms[src] > tiny {
                u.column_mut(dst).copy_from(&(w.column(src) / norms[src]));
            }
        }
    }
    // Left vectors of (numerically) zero singular values: complete to an
    // orthonormal set with Gram–Schmidt against the standard basis.
    let mut e = 0;
    for j in 0..k {
        if singular_values[j] > tiny {
            continue;
        }
        while e < m {
            let mut c = DVector::zeros(m);
            c[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for i in 0..k {
                    if i != j {
                        let d = u.column(i).dot(&c);
                        c -= u.column(i) * d;
                    }
                }
            }
            let nrm = c.norm();
            if nrm > 1e-6 {
                u.column_mut(j).copy_from(&(c / nrm));
                break;
            }
        }
    }
    SvdResult {
        singular_values,
        u,
        v,
        tolerance: (m.max(n) as f64) * sigma_max * rel_tol,
    }
}

/// Moore–Penrose pseudoinverse.
pub fn pseudoinverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let dec = svd(a);
    let (m, n) = a.shape();
    let mut pinv = DMatrix::zeros(n, m);
    for i in 0..dec.rank() {
        let s = dec.singular_values[i];
        pinv += dec.v.column(i) * dec.u.column(i).transpose() / s;
    }
    pinv
}

/// Orthonormal basis of `{x : a·x = 0}`, `n − rank(a)` vectors.
pub fn null_space_basis(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let dec = svd(a);
    let rank = dec.rank();
    (rank..a.ncols())
        .map(|i| dec.v.column(i).into_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Independent oracle: rotation matrix of the unit quaternion exp(rv/2).
    fn quaternion_oracle(rv: &Vector3<f64>) -> Matrix3<f64> {
        let theta = rv.norm();
        let (s, c) = (0.5 * theta).sin_cos();
        let a = rv / theta;
        let (w, x, y, z) = (c, s * a.x, s * a.y, s * a.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let rv = Vector3::new(
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
        );
        let o = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Pose::new(rodrigues_exp(&rv), o)
    }

    #[test]
    fn skew_matches_definition() {
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(s, Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0));
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let r = Vector3::new(0.3, -1.2, 0.5);
        assert!((skew(&r) * r).norm() == 0.0);
        assert_eq!(skew(&r).transpose(), -skew(&r));
        let x = Vector3::new(-0.7, 0.1, 2.0);
        assert!((skew(&r) * x - r.cross(&x)).norm() < 1e-15);
    }

    #[test]
    fn rodrigues_known_values() {
        assert_eq!(rodrigues_exp(&Vector3::zeros()), Matrix3::identity());
        let r = rodrigues_exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).amax() < 1e-15);
    }

    #[test]
    fn rodrigues_matches_quaternion_oracle() {
        let rv = Vector3::new(0.2, -0.1, 0.3);
        let r = rodrigues_exp(&rv);
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r - quaternion_oracle(&rv)).amax() < 1e-12);
    }

    #[test]
    fn rodrigues_small_angle_is_orthonormal() {
        let r = rodrigues_exp(&Vector3::new(1e-10, -3e-11, 2e-10));
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-15);
    }

    #[test]
    fn log_known_values() {
        assert_eq!(rotation_log(&Matrix3::identity()).unwrap(), Vector3::zeros());
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let v = rotation_log(&r).unwrap();
        assert!((v - Vector3::new(0.0, 0.0, FRAC_PI_2)).norm() < 1e-15);
    }

    #[test]
    fn log_rejects_non_rotations() {
        assert!(rotation_log(&(Matrix3::identity() * 2.0)).is_err());
        assert!(rotation_log(&Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))).is_err());
    }

    #[test]
    fn log_exp_round_trip_near_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let theta = PI - rng.random_range(1e-3..2e-2);
            let v = axis * theta;
            assert!((rotation_log(&rodrigues_exp(&v)).unwrap() - v).norm() < 1e-9);
        }
        // exactly π: the axis is recovered up to sign.
        let v = Vector3::new(0.0, 0.6, 0.8) * PI;
        let back = rotation_log(&rodrigues_exp(&v)).unwrap();
        assert!((back - v).norm() < 1e-9 || (back + v).norm() < 1e-9);
    }

    #[test]
    fn screw_between_poses_cases() {
        let t = Pose::new(rodrigues_exp(&Vector3::new(0.1, 0.2, 0.3)), Vector3::new(1.0, 2.0, 3.0));
        let zero = screw_between_poses(&t, &t, 2.5).unwrap();
        assert!(zero.to_vector().norm() < 1e-15);

        let goal = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let tw = screw_between_poses(&Pose::identity(), &goal, 1.0).unwrap();
        assert_eq!(tw.angular, Vector3::zeros());
        assert_eq!(tw.linear, Vector3::new(1.0, 0.0, 0.0));

        assert!(screw_between_poses(&t, &t, 0.0).is_err());
    }

    #[test]
    fn screw_between_poses_round_trip_and_inverse_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let duration = rng.random_range(0.1..3.0);
            let tw = screw_between_poses(&a, &b, duration).unwrap();
            let reached = tw.integrate(&a, duration);
            assert!((reached.rotation - b.rotation).amax() < 1e-9);
            assert!((reached.origin - b.origin).amax() < 1e-9);
            let back = screw_between_poses(&b, &a, duration).unwrap();
            assert!((back.to_vector() + tw.to_vector()).amax() < 1e-9);
        }
    }

    #[test]
    fn linear_first_conversion_is_lossless() {
        let tw = Twist::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0));
        let lf = tw.to_linear_first();
        assert_eq!(lf, Vector6::new(4.0, 5.0, 6.0, 1.0, 2.0, 3.0));
        assert_eq!(Twist::from_linear_first(&lf), tw);
        assert_eq!(Twist::from_vector(&tw.to_vector()), tw);
    }

    #[test]
    fn pose_row_major_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_pose(&mut rng);
        let back = Pose::from_row_major(&p.to_row_major()).unwrap();
        assert!((back.rotation - p.rotation).amax() < 1e-15);
        assert_eq!(back.origin, p.origin);
        let inv = p.compose(&p.inverse());
        assert!((inv.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(inv.origin.norm() < 1e-12);
    }

    #[test]
    fn canonical_screw_wraps_large_angles() {
        let s = ScrewDisplacement {
            rotation_vector: Vector3::new(0.0, 0.0, 1.5 * PI),
            translation: Vector3::zeros(),
        };
        let c = s.canonical();
        assert!(c.angle() < PI);
        assert!((c.to_pose().rotation - s.to_pose().rotation).amax() < 1e-12);
    }

    #[test]
    fn pseudoinverse_simple_cases() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((pseudoinverse(&i3) - &i3).amax() < 1e-15);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((pseudoinverse(&d) - &d).amax() < 1e-15);
        let z = DMatrix::<f64>::zeros(2, 3);
        assert_eq!(pseudoinverse(&z), DMatrix::zeros(3, 2));
    }

    fn mp_residuals(a: &DMatrix<f64>) -> [f64; 4] {
        let p = pseudoinverse(a);
        let na = a.norm().max(1.0);
        let np = p.norm().max(1.0);
        let ap = a * &p;
        let pa = &p * a;
        [
            (&ap * a - a).norm() / na,
            (&pa * &p - &p).norm() / np,
            (&ap - ap.transpose()).norm() / ap.norm().max(1.0),
            (&pa - pa.transpose()).norm() / pa.norm().max(1.0),
        ]
    }

    #[test]
    fn pseudoinverse_moore_penrose_conditions_random_6x12() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 6, 12);
        for r in mp_residuals(&a) {
            assert!(r < 1e-9, "{r}");
        }
    }

    #[test]
    fn pseudoinverse_of_rank_deficient_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = random_matrix(&mut rng, 8, 3);
        let c = random_matrix(&mut rng, 3, 7);
        let a = b * c; // rank 3
        assert_eq!(svd(&a).rank(), 3);
        for r in mp_residuals(&a) {
            assert!(r < 1e-9, "{r}");
        }
    }

    #[test]
    fn svd_of_low_rank_products_reconstructs() {
        // Exact zero singular values used to stall convergence.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (m, k, n) in [(8, 2, 4), (4, 2, 8), (7, 3, 5), (6, 1, 6)] {
            for _ in 0..50 {
                let a = random_matrix(&mut rng, m, k) * random_matrix(&mut rng, k, n);
                let dec = svd(&a);
                assert_eq!(dec.rank(), k);
                assert!((dec.reconstruct() - &a).norm() <= 1e-12 * a.norm());
            }
        }
    }

    #[test]
    fn svd_reconstructs_and_sorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (m, n) in [(6, 9), (18, 6), (5, 5)] {
            let a = random_matrix(&mut rng, m, n);
            let dec = svd(&a);
            assert!((dec.reconstruct() - &a).norm() <= 1e-9 * a.norm());
            let sv = dec.singular_values.as_slice();
            assert!(sv.windows(2).all(|w| w[0] >= w[1]));
            assert!(sv.iter().all(|&s| s >= 0.0));
            let vtv = dec.v.transpose() * &dec.v;
            assert!((vtv - DMatrix::identity(n, n)).amax() < 1e-12);
        }
    }

    #[test]
    fn null_space_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let full = random_matrix(&mut rng, 4, 4);
        assert!(null_space_basis(&full).is_empty());

        let row = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let basis = null_space_basis(&row);
        assert_eq!(basis.len(), 2);
        for (i, n) in basis.iter().enumerate() {
            assert!((&row * n).norm() < 1e-15);
            assert!((n.norm() - 1.0).abs() < 1e-12);
            for m in &basis[i + 1..] {
                assert!(n.dot(m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_tolerance_is_configurable() {
        assert_eq!(rank_tolerance(), DEFAULT_RANK_TOLERANCE);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-8]);
        assert_eq!(svd(&a).rank(), 2);
        assert_eq!(svd_with_tolerance(&a, 1e-6).rank(), 1);
    }

    #[test]
    fn log_small_angles_keep_axis() {
        for &angle in &[1e-8, 1e-6, 1e-4, 5e-3, 2e-2] {
            let rv = Vector3::new(0.2, -0.5, 0.8).normalize() * angle;
            let back = rotation_log(&rodrigues_exp(&rv)).unwrap();
            assert!((back - rv).norm() <= 1e-9 * angle, "{angle}");
        }
    }
}
