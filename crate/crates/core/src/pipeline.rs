//! End-to-end run: glove trace → intent → optional per-axis prediction →
//! closed-loop relocation, with a lag report against a reference intent.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::hand::HandProfile;
use crate::intent::{estimate_intent, GloveProfile, GloveTrace, IntentModel, IntentRecord};
use crate::plant::{Grasp, PlantConfig, Simulation, TrajectoryRow};
use crate::predictor::{make_windows, train, StreamPredictor, TrainConfig, TrainedModel, DEFAULT_WINDOW};
use crate::se3::{rotation_log, Pose};
use crate::signal;

pub const DEFAULT_DECIMATION: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Glove samples per intent sample.
    pub decimation: usize,
    pub rotation_only: bool,
    /// Search range of the lag estimate, intent samples.
    pub max_lag_samples: usize,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            decimation: DEFAULT_DECIMATION,
            rotation_only: true,
            max_lag_samples: 40,
            plant: PlantConfig::default(),
            controller: ControllerConfig::default(),
        }
    }
}

/// One row per intent sample; angles in degrees, hand frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRecord {
    pub t: f64,
    pub intent_deg: Vector3<f64>,
    /// Rotation commanded to the hand (the prediction where one is available).
    pub goal_deg: Vector3<f64>,
    /// Object rotation relative to the start of the run, sampled at `t`.
    pub object_deg: Vector3<f64>,
}

pub const PIPELINE_HEADER: [&str; 10] = [
    "t_s", "intent_x_deg", "intent_y_deg", "intent_z_deg", "goal_x_deg", "goal_y_deg", "goal_z_deg", "object_x_deg",
    "object_y_deg", "object_z_deg",
];

impl PipelineRecord {
    pub fn to_row(&self) -> Vec<f64> {
        let mut v = vec![self.t];
        v.extend(self.intent_deg.iter());
        v.extend(self.goal_deg.iter());
        v.extend(self.object_deg.iter());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagReport {
    /// 0, 1, 2 for x, y, z: the reference axis with the most variance.
    pub axis: usize,
    /// Positive when the object trails the reference.
    pub lag_samples: i64,
    pub lag_s: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub records: Vec<PipelineRecord>,
    pub trajectory: Vec<TrajectoryRow>,
    pub lag: LagReport,
    pub intent_period_s: f64,
}

fn dominant_axis(series: &[Vector3<f64>]) -> usize {
    let mean = series.iter().fold(Vector3::zeros(), |a, v| a + v) / series.len().max(1) as f64;
    let var = series
        .iter()
        .fold(Vector3::zeros(), |a: Vector3<f64>, v| a + (v - mean).component_mul(&(v - mean)));
    var.imax()
}

/// Lag of `signal` behind `reference` on the reference's dominant axis.
pub fn measure_lag(reference: &[Vector3<f64>], signal: &[Vector3<f64>], period_s: f64, max_lag: usize) -> Result<LagReport> {
    let axis = dominant_axis(reference);
    let r: Vec<f64> = reference.iter().map(|v| v[axis]).collect();
    let s: Vec<f64> = signal.iter().map(|v| v[axis]).collect();
    let lag_samples = signal::best_lag(&r, &s, max_lag)?;
    Ok(LagReport {
        axis,
        lag_samples,
        lag_s: lag_samples as f64 * period_s,
    })
}

/// Estimated intent at the predictor rate (every `cfg.decimation`-th glove sample).
pub fn intent_series(
    trace: &GloveTrace,
    hand: &HandProfile,
    glove: &GloveProfile,
    cfg: &PipelineConfig,
) -> Result<Vec<IntentRecord>> {
    if cfg.decimation == 0 {
        return Err(Error::Invalid("decimation must be positive".into()));
    }
    trace.validate_against(glove)?;
    let q0 = hand.clamp_to_limits(&hand.grasp_q);
    let grasp = Grasp::from_profile(hand, &q0, cfg.plant.surface)?;
    let model = IntentModel::new(glove, hand, &q0, &grasp)?;
    let intent = signal::decimate(&estimate_intent(trace, &model, cfg.rotation_only)?, cfg.decimation);
    if intent.len() < 2 {
        return Err(Error::Invalid("trace too short for one intent period".into()));
    }
    Ok(intent)
}

/// Prediction horizon that cancels a measured lag: the lag itself, at least one sample.
pub fn matched_horizon(lag: &LagReport) -> usize {
    lag.lag_samples.max(1) as usize
}

/// One model per rotation axis whose intent (degrees) varies by more than
/// `min_std_deg`; quiet axes get `None` and pass through unpredicted. Each
/// axis trains independently from the same configuration.
pub fn train_axis_models(
    intent: &[IntentRecord],
    horizon: usize,
    period_s: f64,
    train_cfg: &TrainConfig,
    min_std_deg: f64,
) -> Result<[Option<TrainedModel>; 3]> {
    let mut out: [Option<TrainedModel>; 3] = [None, None, None];
    for (axis, slot) in out.iter_mut().enumerate() {
        let series: Vec<f64> = intent.iter().map(|r| r.dtheta[axis].to_degrees()).collect();
        let mean = signal::mean(&series);
        let std = (series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / series.len().max(1) as f64).sqrt();
        if std <= min_std_deg {
            continue;
        }
        let mut ds = make_windows(&series, DEFAULT_WINDOW, horizon)?;
        ds.period_s = period_s;
        *slot = Some(train(&ds, train_cfg)?);
    }
    Ok(out)
}

/// Runs the loop. `predictors` holds an optional model per axis (x, y, z);
/// axes without one, and every axis until its first full window, pass the
/// estimated intent through. `reference` (glove-rate records, e.g. ground
/// truth) is what the lag is measured against; the estimated intent is used
/// when it is absent.
pub fn run_pipeline(
    trace: &GloveTrace,
    reference: Option<&[IntentRecord]>,
    hand: &HandProfile,
    glove: &GloveProfile,
    predictors: &[Option<TrainedModel>; 3],
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    let intent = intent_series(trace, hand, glove, cfg)?;
    let mut sim = Simulation::new(hand, &cfg.plant, &cfg.controller)?;
    let period = intent[1].t - intent[0].t;
    let mut streams: Vec<Option<StreamPredictor>> = predictors
        .iter()
        .map(|p| p.as_ref().map(|m| StreamPredictor::new(m.clone())))
        .collect();

    let initial = sim.state.object_pose;
    let t0 = intent[0].t;
    let mut records = Vec::with_capacity(intent.len());
    for rec in &intent {
        let intent_deg = rec.dtheta.map(f64::to_degrees);
        let mut goal_deg = intent_deg;
        for (axis, stream) in streams.iter_mut().enumerate() {
            if let Some(s) = stream {
                if let Some((_, y)) = s.push(rec.t, intent_deg[axis])? {
                    goal_deg[axis] = y;
                }
            }
        }
        let relative = sim.state.object_pose.rotation * initial.rotation.transpose();
        records.push(PipelineRecord {
            t: rec.t,
            intent_deg,
            goal_deg,
            object_deg: rotation_log(&relative)?.map(f64::to_degrees),
        });

        let rv = goal_deg.map(f64::to_radians);
        let turn = Pose::from_rotation_vector(&rv);
        let origin = if cfg.rotation_only { initial.origin } else { initial.origin + rec.d };
        let goal = Pose::new(turn.rotation * initial.rotation, origin);
        if rv.norm() > sim.plant.goal_rotation_cap_rad {
            return Err(Error::Invalid(format!(
                "goal rotation {:.1}° at t = {:.2} s exceeds the cap",
                rv.norm().to_degrees(),
                rec.t
            )));
        }
        let until = rec.t - t0 + period;
        while sim.state.time + 0.5 * sim.outer_period() <= until {
            sim.outer_step(&goal)?;
        }
    }

    let reference_deg: Vec<Vector3<f64>> = match reference {
        Some(r) => signal::decimate(r, cfg.decimation)
            .iter()
            .map(|v| v.dtheta.map(f64::to_degrees))
            .collect(),
        None => records.iter().map(|r| r.intent_deg).collect(),
    };
    let n = reference_deg.len().min(records.len());
    let object: Vec<Vector3<f64>> = records[..n].iter().map(|r| r.object_deg).collect();
    let lag = measure_lag(&reference_deg[..n], &object, period, cfg.max_lag_samples)?;
    Ok(PipelineRun {
        records,
        trajectory: std::mem::take(&mut sim.log),
        lag,
        intent_period_s: period,
    })
}

/// Relative lag reduction `(|L_base| − |L_pred|) / |L_base|`.
pub fn lag_reduction(baseline: &LagReport, predicted: &LagReport) -> f64 {
    let base = baseline.lag_samples.unsigned_abs() as f64;
    if base == 0.0 {
        return 0.0;
    }
    (base - predicted.lag_samples.unsigned_abs() as f64) / base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{generate_sigmoid_trace, SigmoidConfig};

    #[test]
    fn lag_is_measured_on_the_moving_axis() {
        let reference: Vec<Vector3<f64>> = (0..200)
            .map(|i| Vector3::new(0.01, 0.0, (i as f64 / 10.0).sin()))
            .collect();
        let late: Vec<Vector3<f64>> = (0..200)
            .map(|i| Vector3::new(0.0, 0.0, ((i as f64 - 4.0) / 10.0).sin()))
            .collect();
        let rep = measure_lag(&reference, &late, 0.06, 20).unwrap();
        assert_eq!(rep.axis, 2);
        assert_eq!(rep.lag_samples, 4);
        assert!((rep.lag_s - 0.24).abs() < 1e-12);
    }

    #[test]
    fn reduction_formula() {
        let rep = |l| LagReport {
            axis: 2,
            lag_samples: l,
            lag_s: 0.0,
        };
        assert_eq!(lag_reduction(&rep(8), &rep(2)), 0.75);
        assert_eq!(lag_reduction(&rep(8), &rep(-2)), 0.75);
        assert_eq!(lag_reduction(&rep(0), &rep(3)), 0.0);
    }

    #[test]
    fn object_follows_a_single_wavelet() {
        let hand = HandProfile::allegro_like();
        let glove = GloveProfile::default();
        let grasp = Grasp::from_profile(&hand, &hand.grasp_q, None).unwrap();
        let model = IntentModel::new(&glove, &hand, &hand.grasp_q, &grasp).unwrap();
        let syn = generate_sigmoid_trace(&SigmoidConfig::default(), &glove, &model, None).unwrap();
        let run = run_pipeline(&syn.trace, Some(&syn.truth), &hand, &glove, &[None, None, None], &PipelineConfig::default())
            .unwrap();
        let last = run.records.last().unwrap();
        assert!((last.object_deg.z - last.intent_deg.z).abs() < 0.5, "{last:?}");
        assert!(last.intent_deg.z > 9.0);
        assert_eq!(run.lag.axis, 2);
        assert!(run.lag.lag_samples >= 0);
    }
}
