//! Human intent from glove signals: glove joint rates are replayed on the
//! hand's own joint screws, the minimum-norm object twist is extracted and
//! integrated into a goal pose.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::hand::{chain_jacobian, HandProfile, ObjectJacobian};
use crate::plant::Grasp;
use crate::se3::{pseudoinverse, null_space_basis, rodrigues_exp, Pose, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Bend,
    Split,
}

/// Glove encoder `j` drives joint `joint` of hand chain `chain`, scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderMapping {
    pub chain: usize,
    pub joint: usize,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GloveProfile {
    pub name: String,
    pub sample_rate_hz: f64,
    pub resolution_deg: f64,
    pub bend_range_deg: (f64, f64),
    pub split_range_deg: (f64, f64),
    /// kg·cm/deg
    pub static_stiffness_range: (f64, f64),
    /// Encoders the glove can restrain. Hardware only; unused in simulation.
    pub restrained_joints: Vec<usize>,
    pub channels: Vec<ChannelKind>,
    pub mapping: Vec<EncoderMapping>,
}

impl Default for GloveProfile {
    /// Eleven-encoder exoskeleton glove mapped onto index, middle and thumb
    /// of [`HandProfile::allegro_like`].
    fn default() -> Self {
        use ChannelKind::{Bend, Split};
        let (index, middle, thumb) = (0, 1, 3);
        let m = |chain, joint| EncoderMapping { chain, joint, scale: 1.0 };
        Self {
            name: "dexmo_like".into(),
            sample_rate_hz: 200.0,
            resolution_deg: 0.08,
            bend_range_deg: (0.0, 147.0),
            split_range_deg: (-15.0, 15.0),
            static_stiffness_range: (0.0, 0.33),
            restrained_joints: vec![0, 1, 3, 5, 7],
            channels: vec![Bend, Bend, Split, Bend, Split, Bend, Split, Bend, Bend, Bend, Bend],
            mapping: vec![
                m(thumb, 1),
                m(thumb, 2),
                m(thumb, 0),
                m(index, 1),
                m(index, 0),
                m(middle, 1),
                m(middle, 0),
                m(middle, 2),
                m(thumb, 3),
                m(index, 2),
                m(index, 3),
            ],
        }
    }
}

impl GloveProfile {
    pub fn encoder_count(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.encoder_count();
        check_len(k, self.mapping.len(), "glove mapping")?;
        if !(self.sample_rate_hz > 0.0 && self.resolution_deg > 0.0) {
            return Err(Error::Invalid("glove rate and resolution must be positive".into()));
        }
        if self.restrained_joints.len() > k || self.restrained_joints.iter().any(|&j| j >= k) {
            return Err(Error::Invalid("restrained joints must be glove encoders".into()));
        }
        if self.mapping.iter().any(|m| !m.scale.is_finite()) {
            return Err(Error::Invalid("mapping scale factors must be finite".into()));
        }
        for (lo, hi) in [self.bend_range_deg, self.split_range_deg] {
            if !(lo < hi) {
                return Err(Error::Invalid(format!("glove range ({lo}, {hi}) is empty")));
            }
        }
        Ok(())
    }

    pub fn range_deg(&self, channel: usize) -> (f64, f64) {
        match self.channels[channel] {
            ChannelKind::Bend => self.bend_range_deg,
            ChannelKind::Split => self.split_range_deg,
        }
    }

    /// Angles in the middle of each channel's range.
    pub fn neutral_deg(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.encoder_count(),
            (0..self.encoder_count()).map(|j| match self.channels[j] {
                ChannelKind::Bend => 60.0,
                ChannelKind::Split => {
                    let (lo, hi) = self.split_range_deg;
                    0.5 * (lo + hi)
                }
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GloveSample {
    pub t: f64,
    /// Degrees.
    pub values: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GloveTrace {
    pub samples: Vec<GloveSample>,
}

impl GloveTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(0, |s| s.values.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.channels();
        for (n, s) in self.samples.iter().enumerate() {
            check_len(k, s.values.len(), "glove sample channels")?;
            if !s.t.is_finite() || s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("glove sample {n} is not finite")));
            }
            if n > 0 && !(s.t > self.samples[n - 1].t) {
                return Err(Error::Invalid(format!("glove timestamps not increasing at sample {n}")));
            }
        }
        Ok(())
    }

    pub fn validate_against(&self, glove: &GloveProfile) -> Result<()> {
        self.validate()?;
        if self.is_empty() {
            return Ok(());
        }
        check_len(glove.encoder_count(), self.channels(), "glove trace channels")?;
        for (n, s) in self.samples.iter().enumerate() {
            for (j, &v) in s.values.iter().enumerate() {
                let (lo, hi) = glove.range_deg(j);
                if v < lo || v > hi {
                    return Err(Error::Invalid(format!(
                        "sample {n}, channel jm{:02}: {v} deg outside [{lo}, {hi}]",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Glove-to-object operators evaluated at a fixed hand configuration.
#[derive(Debug, Clone)]
pub struct IntentModel {
    /// Hand chains in contact, in stacking order.
    pub chains: Vec<usize>,
    /// Equivalent screws, 6p × k: column j sits in the block of its chain.
    pub screws: DMatrix<f64>,
    pub object_jacobian: ObjectJacobian,
    /// `J_o⁺·screws`, 6 × k: glove rates (rad/s) to object twist.
    pub glove_to_object: DMatrix<f64>,
}

impl IntentModel {
    pub fn new(glove: &GloveProfile, hand: &HandProfile, q_ref: &DVector<f64>, grasp: &Grasp) -> Result<Self> {
        glove.validate()?;
        check_len(hand.num_joints(), q_ref.len(), "reference hand configuration")?;
        let chains = grasp.chains.clone();
        let mut screws = DMatrix::zeros(6 * chains.len(), glove.encoder_count());
        for (j, m) in glove.mapping.iter().enumerate() {
            let chain = hand
                .chains
                .get(m.chain)
                .ok_or_else(|| Error::Invalid(format!("encoder {j} maps to missing chain {}", m.chain)))?;
            if m.joint >= chain.num_joints() {
                return Err(Error::Invalid(format!(
                    "encoder {j} maps to missing joint {} of chain '{}'",
                    m.joint, chain.name
                )));
            }
            let block = chains.iter().position(|&c| c == m.chain).ok_or_else(|| {
                Error::Invalid(format!("encoder {j} maps to chain '{}' which is not in contact", chain.name))
            })?;
            let jac = chain_jacobian(chain, hand.chain_q(q_ref, m.chain))?;
            screws
                .view_mut((6 * block, j), (6, 1))
                .copy_from(&(jac.column(m.joint) * m.scale));
        }
        let object_jacobian = grasp.object_jacobian_at(&grasp.initial_pose)?;
        let glove_to_object = pseudoinverse(&object_jacobian.stacked) * &screws;
        Ok(Self {
            chains,
            screws,
            object_jacobian,
            glove_to_object,
        })
    }

    pub fn encoder_count(&self) -> usize {
        self.screws.ncols()
    }

    /// Stacked hypothetical fingertip twists `$_HG` for glove rates in rad/s.
    pub fn fingertip_twists(&self, rates: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.encoder_count(), rates.len(), "glove rates")?;
        Ok(&self.screws * rates)
    }

    /// k × 6 map from an object twist to glove rates whose estimate reproduces
    /// that twist exactly, choosing among those the rates whose hypothetical
    /// fingertip twists best match `J_o·$`.
    pub fn synthesis_operator(&self) -> Result<DMatrix<f64>> {
        let a = &self.glove_to_object;
        let a_pinv = pseudoinverse(a);
        let rank = crate::se3::svd(a).rank();
        if rank < 6 {
            return Err(Error::Invalid(format!(
                "glove mapping reaches only {rank} of 6 object twist directions"
            )));
        }
        let k = self.encoder_count();
        let null = null_space_basis(a);
        let particular = &a_pinv;
        if null.is_empty() {
            return Ok(particular.clone());
        }
        let n = DMatrix::from_columns(&null);
        // min ‖M(A⁺$ + Nz) − J_o$‖ over z.
        let mn = &self.screws * &n;
        let residual = &self.screws * particular - &self.object_jacobian.stacked;
        let z = -pseudoinverse(&mn) * residual;
        let s = particular + n * z;
        debug_assert_eq!(s.shape(), (k, 6));
        Ok(s)
    }
}

/// `$_HG` from two consecutive samples (backward difference, deg → rad).
pub fn glove_to_fingertip_twists(prev: &GloveSample, next: &GloveSample, model: &IntentModel) -> Result<DVector<f64>> {
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::Invalid("glove samples must be strictly increasing in time".into()));
    }
    check_len(prev.values.len(), next.values.len(), "glove sample channels")?;
    let rates = (&next.values - &prev.values).map(f64::to_radians) / dt;
    model.fingertip_twists(&rates)
}

/// `$'_o = J_o⁺·$_HG`, the minimum-norm rigid motion.
pub fn estimate_object_twist(fingertip_twists: &DVector<f64>, object_jacobian: &ObjectJacobian) -> Result<Twist> {
    check_len(object_jacobian.stacked.nrows(), fingertip_twists.len(), "stacked fingertip twists")?;
    Twist::from_slice((pseudoinverse(&object_jacobian.stacked) * fingertip_twists).as_slice())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentState {
    /// Cumulative translation, m.
    pub d: Vector3<f64>,
    /// Cumulative rotation vector, rad.
    pub dtheta: Vector3<f64>,
    pub goal: Pose,
    pub rotation_only: bool,
    last: Option<Twist>,
}

impl IntentState {
    pub fn new(rotation_only: bool) -> Self {
        Self {
            d: Vector3::zeros(),
            dtheta: Vector3::zeros(),
            goal: Pose::identity(),
            rotation_only,
            last: None,
        }
    }
}

/// Trapezoidal accumulation; the first twist is paired with itself.
pub fn integrate_intent(state: &IntentState, twist: &Twist, dt: f64) -> Result<IntentState> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("integration step must be positive, got {dt}")));
    }
    let prev = state.last.unwrap_or(*twist);
    let mut next = state.clone();
    next.dtheta += 0.5 * (prev.angular + twist.angular) * dt;
    if !state.rotation_only {
        next.d += 0.5 * (prev.linear + twist.linear) * dt;
    }
    next.last = Some(*twist);
    next.goal = goal_pose_from_intent(&next);
    Ok(next)
}

/// `T_o = [R(Δθ) d; 0 1]`.
pub fn goal_pose_from_intent(state: &IntentState) -> Pose {
    Pose::new(rodrigues_exp(&state.dtheta), state.d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntentRecord {
    pub t: f64,
    pub dtheta: Vector3<f64>,
    pub d: Vector3<f64>,
}

/// Cumulative intent at every glove sample; the first record is zero.
pub fn estimate_intent(trace: &GloveTrace, model: &IntentModel, rotation_only: bool) -> Result<Vec<IntentRecord>> {
    trace.validate()?;
    if trace.is_empty() {
        return Ok(Vec::new());
    }
    let mut state = IntentState::new(rotation_only);
    let mut out = Vec::with_capacity(trace.len());
    out.push(IntentRecord {
        t: trace.samples[0].t,
        dtheta: state.dtheta,
        d: state.d,
    });
    for pair in trace.samples.windows(2) {
        let hg = glove_to_fingertip_twists(&pair[0], &pair[1], model)?;
        let twist = estimate_object_twist(&hg, &model.object_jacobian)?;
        state = integrate_intent(&state, &twist, pair[1].t - pair[0].t)?;
        out.push(IntentRecord {
            t: pair[1].t,
            dtheta: state.dtheta,
            d: state.d,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unit vectors matching `eigenvalues`; empty for constant data.
    pub components: Vec<DVector<f64>>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaResult {
    pub fn cumulative_ratio(&self, n: usize) -> f64 {
        self.explained_variance_ratio.iter().take(n).sum()
    }
}

/// Eigen-decomposition of the mean-centred sample covariance of all samples.
pub fn pca_analysis(traces: &[GloveTrace]) -> Result<PcaResult> {
    let rows: Vec<&DVector<f64>> = traces.iter().flat_map(|t| t.samples.iter().map(|s| &s.values)).collect();
    if rows.len() < 2 {
        return Err(Error::Invalid("PCA needs at least two samples".into()));
    }
    let k = rows[0].len();
    for r in &rows {
        check_len(k, r.len(), "glove sample channels")?;
    }
    let n = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(k), |acc, r| acc + *r) / n;
    let mut cov = DMatrix::zeros(k, k);
    for r in &rows {
        let c = *r - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= n - 1.0;

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let floor = top * k as f64 * 1e-12;
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| {
            let v = eig.eigenvalues[i];
            if v <= floor {
                0.0
            } else {
                v
            }
        })
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if total == 0.0 {
        return Ok(PcaResult {
            eigenvalues,
            components: Vec::new(),
            explained_variance_ratio: Vec::new(),
        });
    }
    Ok(PcaResult {
        components: order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect(),
        explained_variance_ratio: eigenvalues.iter().map(|v| v / total).collect(),
        eigenvalues,
    })
}

/// Sum of logistic steps `Σ aᵢ / (1 + exp(−sᵢ(t − tᵢ)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSet {
    pub amplitudes: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub steepness: Vec<f64>,
}

impl WaveletSet {
    pub fn value(&self, t: f64) -> f64 {
        self.iter().map(|(a, m, s)| a / (1.0 + (-s * (t - m)).exp())).sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.iter()
            .map(|(a, m, s)| {
                let e = (-s * (t - m)).exp();
                if e.is_infinite() {
                    0.0
                } else {
                    a * s * e / ((1.0 + e) * (1.0 + e))
                }
            })
            .sum()
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.amplitudes
            .iter()
            .zip(&self.midpoints)
            .zip(&self.steepness)
            .map(|((&a, &m), &s)| (a, m, s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmoidConfig {
    pub amplitude_deg: f64,
    /// Midpoint of the first wavelet.
    pub midpoint_s: f64,
    /// Logistic rate, 1/s.
    pub steepness: f64,
    pub wavelets: usize,
    pub spacing_s: f64,
    /// Relative jitter of spacing, amplitude and steepness.
    pub jitter: f64,
    /// Alternate the sign of consecutive wavelets so the intent returns to rest.
    pub alternate: bool,
    pub rate_hz: f64,
    /// Intent rotation axis (hand frame).
    pub axis: [f64; 3],
    pub noise_deg: f64,
    pub quantize: bool,
    /// Time after the last midpoint.
    pub tail_s: f64,
    pub seed: u64,
}

impl Default for SigmoidConfig {
    fn default() -> Self {
        Self {
            amplitude_deg: 10.0,
            midpoint_s: 2.0,
            steepness: 3.0,
            wavelets: 1,
            spacing_s: 4.0,
            jitter: 0.2,
            alternate: true,
            rate_hz: 200.0,
            axis: [0.0, 0.0, 1.0],
            noise_deg: 0.02,
            quantize: true,
            tail_s: 2.0,
            seed: 0,
        }
    }
}

impl SigmoidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0) {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        if !(self.steepness > 0.0 && self.spacing_s > 0.0 && self.tail_s >= 0.0) {
            return Err(Error::Invalid("steepness and spacing must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Invalid("jitter must lie in [0, 1)".into()));
        }
        if !(self.noise_deg >= 0.0) {
            return Err(Error::Invalid("noise must be non-negative".into()));
        }
        if Vector3::from(self.axis).norm() == 0.0 {
            return Err(Error::Invalid("intent axis must be non-zero".into()));
        }
        Ok(())
    }

    pub fn wavelet_set(&self, rng: &mut ChaCha8Rng) -> WaveletSet {
        let jit = |rng: &mut ChaCha8Rng| {
            if self.jitter > 0.0 {
                1.0 + rng.random_range(-self.jitter..self.jitter)
            } else {
                1.0
            }
        };
        let mut set = WaveletSet {
            amplitudes: Vec::with_capacity(self.wavelets),
            midpoints: Vec::with_capacity(self.wavelets),
            steepness: Vec::with_capacity(self.wavelets),
        };
        let mut amp = self.amplitude_deg;
        for w in 0..self.wavelets {
            let spacing = if w == 0 { 0.0 } else { self.spacing_s * jit(rng) };
            let prev = set.midpoints.last().copied().unwrap_or(self.midpoint_s);
            set.midpoints.push(prev + spacing);
            if !self.alternate || w % 2 == 0 {
                amp = self.amplitude_deg * jit(rng);
                set.amplitudes.push(amp);
            } else {
                set.amplitudes.push(-amp);
            }
            set.steepness.push(self.steepness * jit(rng));
        }
        set
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticIntent {
    pub trace: GloveTrace,
    /// Ground-truth cumulative rotation at each glove sample, rad.
    pub truth: Vec<IntentRecord>,
    /// Intent angle about the axis, degrees.
    pub wavelets: WaveletSet,
}

/// Glove trace whose intent follows a sum of logistic wavelets about `cfg.axis`.
/// `mixing` maps an object twist to glove rates (k × 6); `None` uses the model's
/// synthesis operator so the estimated intent tracks the ground truth.
pub fn generate_sigmoid_trace(
    cfg: &SigmoidConfig,
    glove: &GloveProfile,
    model: &IntentModel,
    mixing: Option<&DMatrix<f64>>,
) -> Result<SyntheticIntent> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let wavelets = cfg.wavelet_set(&mut rng);
    let s = match mixing {
        Some(m) => {
            check_len(6, m.ncols(), "mixing columns")?;
            check_len(glove.encoder_count(), m.nrows(), "mixing rows")?;
            m.clone()
        }
        None => model.synthesis_operator()?,
    };
    let axis = Vector3::from(cfg.axis).normalize();
    let per_rad = &s * Vector6::new(axis.x, axis.y, axis.z, 0.0, 0.0, 0.0);
    let neutral = glove.neutral_deg();
    let noise = Normal::new(0.0, cfg.noise_deg.max(f64::MIN_POSITIVE)).map_err(|e| Error::Invalid(e.to_string()))?;

    let end = wavelets.midpoints.last().copied().unwrap_or(0.0) + cfg.tail_s;
    let count = (end * cfg.rate_hz).floor() as usize + 1;
    let mut trace = GloveTrace {
        samples: Vec::with_capacity(count),
    };
    let mut truth = Vec::with_capacity(count);
    let offset = wavelets.value(0.0);
    for n in 0..count {
        let t = n as f64 / cfg.rate_hz;
        let phi = (wavelets.value(t) - offset).to_radians();
        let mut values = &neutral + (&per_rad * phi).map(f64::to_degrees);
        if cfg.noise_deg > 0.0 {
            values.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        if cfg.quantize {
            values.iter_mut().for_each(|v| *v = (*v / glove.resolution_deg).round() * glove.resolution_deg);
        }
        trace.samples.push(GloveSample { t, values });
        truth.push(IntentRecord {
            t,
            dtheta: axis * phi,
            d: Vector3::zeros(),
        });
    }
    trace.validate_against(glove)?;
    Ok(SyntheticIntent { trace, truth, wavelets })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigidMotionConfig {
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Standard deviation of the three rotation then three translation
    /// coordinates, expressed as glove degrees.
    pub latent_std_deg: [f64; 6],
    pub noise_deg: f64,
    pub seed: u64,
}

impl Default for RigidMotionConfig {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            rate_hz: 200.0,
            latent_std_deg: [8.0, 6.0, 5.0, 1.5, 1.2, 1.0],
            noise_deg: 0.1,
            seed: 0,
        }
    }
}

/// Glove trace driven by a six-dimensional rigid motion through a fixed
/// orthonormal mixing map, plus channel noise.
pub fn generate_rigid_motion_trace(cfg: &RigidMotionConfig, glove: &GloveProfile) -> Result<GloveTrace> {
    if !(cfg.rate_hz > 0.0 && cfg.duration_s > 0.0) {
        return Err(Error::Invalid("duration and rate must be positive".into()));
    }
    let k = glove.encoder_count();
    if k < 6 {
        return Err(Error::Invalid("rigid-motion traces need at least six channels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gauss = DMatrix::from_fn(k, 6, |_, _| rng.random_range(-1.0..1.0));
    let mixing = gauss.qr().q();

    // Each latent coordinate is a sum of a few slow sinusoids, scaled to its std.
    let tones: Vec<Vec<(f64, f64, f64)>> = (0..6)
        .map(|_| {
            (0..4)
                .map(|_| {
                    (
                        rng.random_range(0.05..0.6),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(0.5..1.0),
                    )
                })
                .collect()
        })
        .collect();
    let tone_std: Vec<f64> = tones
        .iter()
        .map(|ts| (ts.iter().map(|(_, _, a)| a * a / 2.0).sum::<f64>()).sqrt())
        .collect();
    let noise = Normal::new(0.0, cfg.noise_deg.max(f64::MIN_POSITIVE)).map_err(|e| Error::Invalid(e.to_string()))?;
    let neutral = glove.neutral_deg();
    let count = (cfg.duration_s * cfg.rate_hz).floor() as usize;
    let mut trace = GloveTrace::default();
    for n in 0..count {
        let t = n as f64 / cfg.rate_hz;
        let latent = DVector::from_fn(6, |i, _| {
            let raw: f64 = tones[i]
                .iter()
                .map(|(f, p, a)| a * (std::f64::consts::TAU * f * t + p).sin())
                .sum();
            raw / tone_std[i] * cfg.latent_std_deg[i]
        });
        let mut values = &neutral + &mixing * latent;
        if cfg.noise_deg > 0.0 {
            values.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        trace.samples.push(GloveSample { t, values });
    }
    Ok(trace)
}
