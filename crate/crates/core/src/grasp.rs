//! Grasp map and fingertip force fields.
//!
//! `G` maps stacked contact forces `F = [f₁; …; f_p]` to the net wrench
//! `[Σ fᵢ; Σ rᵢ × fᵢ]`. Solutions split into the minimum-norm equilibrating
//! part `G⁺W` and interaction forces from the null space of `G`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::se3::{null_space_basis, pseudoinverse, skew};

/// Normal components may undershoot the requested squeeze by this much.
const SQUEEZE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Object reference point → contact point (m).
    pub r: Vector3<f64>,
    /// Unit normal pointing into the object.
    pub inward_normal: Vector3<f64>,
}

impl Contact {
    pub fn new(r: Vector3<f64>, inward_normal: Vector3<f64>) -> Result<Self> {
        let n = inward_normal.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Invalid("contact normal must be non-zero".into()));
        }
        Ok(Self {
            r,
            inward_normal: inward_normal / n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self { force, moment }
    }

    /// `[f; m]`
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.moment.x,
            self.moment.y,
            self.moment.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            force: v.fixed_rows::<3>(0).into_owned(),
            moment: v.fixed_rows::<3>(3).into_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInertia {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl ObjectInertia {
    pub fn new(mass: f64, inertia: Matrix3<f64>, angular_velocity: Vector3<f64>) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Invalid(format!("object mass must be positive, got {mass}")));
        }
        if (inertia - inertia.transpose()).amax() > 1e-12 {
            return Err(Error::Invalid("inertia tensor is not symmetric".into()));
        }
        let eig = inertia.symmetric_eigenvalues();
        if eig.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Invalid("inertia tensor is not positive definite".into()));
        }
        Ok(Self {
            mass,
            inertia,
            angular_velocity,
        })
    }

    /// Solid sphere of uniform density.
    pub fn solid_sphere(mass: f64, radius: f64) -> Result<Self> {
        let i = 0.4 * mass * radius * radius;
        Self::new(mass, Matrix3::from_diagonal_element(i), Vector3::zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspMatrix {
    pub contacts: Vec<Contact>,
    /// 6 × 3p
    pub g: DMatrix<f64>,
}

impl GraspMatrix {
    pub fn num_contacts(&self) -> usize {
        self.contacts.len()
    }

    /// Net wrench produced by stacked contact forces.
    pub fn wrench(&self, forces: &DVector<f64>) -> Wrench {
        let w = &self.g * forces;
        Wrench::from_vector(&Vector6::from_column_slice(w.as_slice()))
    }
}

/// Contact forces split into motion-producing and internal parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceSolution {
    /// Minimum-norm equilibrating forces, one per contact.
    pub particular: Vec<Vector3<f64>>,
    /// Orthonormal basis of `NS(G)`, each of length 3p.
    pub null_basis: Vec<DVector<f64>>,
    /// Coefficients over `null_basis`.
    pub alpha: DVector<f64>,
}

impl ForceSolution {
    pub fn particular_stacked(&self) -> DVector<f64> {
        stack(&self.particular)
    }

    /// `Σ αᵢ nᵢ`
    pub fn interaction_stacked(&self) -> DVector<f64> {
        let len = 3 * self.particular.len();
        self.null_basis
            .iter()
            .zip(self.alpha.iter())
            .fold(DVector::zeros(len), |acc, (n, &a)| acc + n * a)
    }

    pub fn total_stacked(&self) -> DVector<f64> {
        self.particular_stacked() + self.interaction_stacked()
    }

    /// Per-contact total forces.
    pub fn total(&self) -> Vec<Vector3<f64>> {
        unstack(&self.total_stacked())
    }
}

pub(crate) fn stack(forces: &[Vector3<f64>]) -> DVector<f64> {
    DVector::from_iterator(forces.len() * 3, forces.iter().flat_map(|f| f.iter().copied()))
}

pub(crate) fn unstack(v: &DVector<f64>) -> Vec<Vector3<f64>> {
    v.as_slice()
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

/// `G = [I … I; r̃₁ … r̃_p]`.
pub fn build_grasp_matrix(contacts: &[Contact]) -> Result<GraspMatrix> {
    if contacts.is_empty() {
        return Err(Error::Invalid("grasp needs at least one contact".into()));
    }
    let mut g = DMatrix::zeros(6, 3 * contacts.len());
    for (i, c) in contacts.iter().enumerate() {
        g.fixed_view_mut::<3, 3>(0, 3 * i)
            .copy_from(&Matrix3::identity());
        g.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&skew(&c.r));
    }
    Ok(GraspMatrix {
        contacts: contacts.to_vec(),
        g,
    })
}

/// Newton–Euler wrench needed for the given object accelerations.
pub fn object_wrench(
    inertia: &ObjectInertia,
    linear_acceleration: &Vector3<f64>,
    angular_acceleration: &Vector3<f64>,
) -> Wrench {
    let w = inertia.angular_velocity;
    Wrench {
        force: linear_acceleration * inertia.mass,
        moment: inertia.inertia * angular_acceleration + w.cross(&(inertia.inertia * w)),
    }
}

/// Minimum-norm solution of `G·F = W` plus the null-space basis, with `α = 0`.
pub fn force_decompose(grasp: &GraspMatrix, wrench: &Wrench) -> ForceSolution {
    let w = DVector::from_column_slice(wrench.to_vector().as_slice());
    let particular = pseudoinverse(&grasp.g) * w;
    let null_basis = null_space_basis(&grasp.g);
    let alpha = DVector::zeros(null_basis.len());
    ForceSolution {
        particular: unstack(&particular),
        null_basis,
        alpha,
    }
}

/// Stacked interaction-force direction for the pair `(i, j)`: contact `i`
/// pushed towards `j`, contact `j` towards `i`.
fn pair_direction(contacts: &[Contact], i: usize, j: usize) -> Option<DVector<f64>> {
    let d = contacts[j].r - contacts[i].r;
    let len = d.norm();
    if len < 1e-12 {
        return None;
    }
    let e = d / len;
    let mut v = DVector::zeros(3 * contacts.len());
    v.fixed_rows_mut::<3>(3 * i).copy_from(&e);
    v.fixed_rows_mut::<3>(3 * j).copy_from(&(-e));
    Some(v)
}

/// Chooses interaction coefficients so that every contact presses on the
/// object with at least `f_min` along its inward normal.
///
/// Squeeze magnitudes along the fingertip-joining lines are the
/// minimum-norm least-squares fit to the per-contact normal deficits; the
/// result is projected onto the null-space basis to give `α`.
pub fn select_interaction_forces(
    solution: &ForceSolution,
    contacts: &[Contact],
    f_min: f64,
) -> Result<ForceSolution> {
    let p = contacts.len();
    if p != solution.particular.len() {
        return Err(Error::Dimension {
            expected: solution.particular.len(),
            actual: p,
            context: "contacts vs force solution",
        });
    }
    if !(f_min >= 0.0) {
        return Err(Error::Invalid(format!("f_min must be non-negative, got {f_min}")));
    }
    if p < 2 {
        return Err(Error::Invalid("interaction forces need at least two contacts".into()));
    }

    let current = solution.total_stacked();
    let normal_component =
        |forces: &DVector<f64>, i: usize| forces.fixed_rows::<3>(3 * i).dot(&contacts[i].inward_normal);
    let deficit = DVector::from_iterator(
        p,
        (0..p).map(|i| (f_min - normal_component(&current, i)).max(0.0)),
    );
    if deficit.iter().all(|&d| d == 0.0) {
        return Ok(solution.clone());
    }

    let pairs: Vec<DVector<f64>> = (0..p)
        .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
        .filter_map(|(i, j)| pair_direction(contacts, i, j))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InfeasibleSqueeze {
            contact: 0,
            achieved: normal_component(&current, 0),
            required: f_min,
        });
    }
    // Normal response of each contact to a unit squeeze along each pair line.
    let response = DMatrix::from_fn(p, pairs.len(), |i, k| normal_component(&pairs[k], i));
    let lambda = pseudoinverse(&response) * &deficit;
    let added = pairs
        .iter()
        .zip(lambda.iter())
        .fold(DVector::zeros(3 * p), |acc, (v, &l)| acc + v * l);

    let total = &current + &added;
    for i in 0..p {
        let achieved = normal_component(&total, i);
        if achieved < f_min - SQUEEZE_SLACK {
            return Err(Error::InfeasibleSqueeze {
                contact: i,
                achieved,
                required: f_min,
            });
        }
    }

    let interaction = solution.interaction_stacked() + added;
    let alpha = DVector::from_iterator(
        solution.null_basis.len(),
        solution.null_basis.iter().map(|n| n.dot(&interaction)),
    );
    Ok(ForceSolution {
        particular: solution.particular.clone(),
        null_basis: solution.null_basis.clone(),
        alpha,
    })
}
