use std::path::{Path, PathBuf};

use glove_teleop::hand::HandProfile;
use glove_teleop::intent::{
    estimate_intent, generate_rigid_motion_trace, generate_sigmoid_trace, goal_pose_from_intent, pca_analysis, GloveTrace,
    IntentModel, IntentRecord, IntentState,
};
use glove_teleop::io::{
    read_glove_csv, read_intent_csv, read_json, write_glove_csv, write_intent_csv, write_json, write_table,
    write_trajectory_csv,
};
use glove_teleop::pipeline::{
    intent_series, lag_reduction, matched_horizon, run_pipeline, train_axis_models, LagReport, PipelineRun,
    PIPELINE_HEADER,
};
use glove_teleop::plant::{rotated_goal, run_episode, Grasp};
use glove_teleop::predictor::{make_windows, predict_series, train, ModelFile, TrainedModel};
use glove_teleop::se3::Pose;
use glove_teleop::signal;
use glove_teleop::{Error, Result};
use nalgebra::Vector3;
use serde::Serialize;

use crate::config::RunConfig;

pub const AXES: [&str; 3] = ["x", "y", "z"];

fn intent_model(cfg: &RunConfig, hand: &HandProfile) -> Result<IntentModel> {
    let glove = cfg.glove()?;
    let q0 = hand.clamp_to_limits(&hand.grasp_q);
    let grasp = Grasp::from_profile(hand, &q0, cfg.plant.surface)?;
    IntentModel::new(&glove, hand, &q0, &grasp)
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

pub fn axis_index(name: &str) -> Result<usize> {
    AXES.iter()
        .position(|a| *a == name)
        .ok_or_else(|| Error::Invalid(format!("axis must be x, y or z, got '{name}'")))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    read_json::<ModelFile>(path)?.into_model()
}

pub enum DataKind {
    Sigmoid { wavelets: Option<usize> },
    Rigid,
}

pub fn gen_data(cfg: &RunConfig, kind: DataKind) -> Result<Vec<PathBuf>> {
    let glove = cfg.glove()?;
    match kind {
        DataKind::Sigmoid { wavelets } => {
            let hand = cfg.hand()?;
            let model = intent_model(cfg, &hand)?;
            let mut sc = cfg.sigmoid.clone();
            sc.seed = cfg.seed;
            if let Some(w) = wavelets {
                sc.wavelets = w;
            }
            let syn = generate_sigmoid_trace(&sc, &glove, &model, None)?;
            let (g, t, w) = (out(cfg, "glove.csv"), out(cfg, "truth.csv"), out(cfg, "wavelets.json"));
            write_glove_csv(&g, &syn.trace)?;
            write_intent_csv(&t, &syn.truth)?;
            write_json(&w, &syn.wavelets)?;
            Ok(vec![g, t, w])
        }
        DataKind::Rigid => {
            let mut rc = cfg.rigid.clone();
            rc.seed = cfg.seed;
            let trace = generate_rigid_motion_trace(&rc, &glove)?;
            let g = out(cfg, "glove.csv");
            write_glove_csv(&g, &trace)?;
            Ok(vec![g])
        }
    }
}

pub fn intent(cfg: &RunConfig, trace: &Path) -> Result<Vec<PathBuf>> {
    let hand = cfg.hand()?;
    let glove = cfg.glove()?;
    let trace = read_glove_csv(trace)?;
    trace.validate_against(&glove)?;
    let model = intent_model(cfg, &hand)?;
    let records = signal::decimate(&estimate_intent(&trace, &model, cfg.rotation_only)?, cfg.decimation.max(1));
    let goals = records.iter().map(|r| {
        let mut state = IntentState::new(cfg.rotation_only);
        state.d = r.d;
        state.dtheta = r.dtheta;
        let g = goal_pose_from_intent(&state);
        let mut row = vec![r.t];
        row.extend(g.quaternion_wxyz());
        row.extend(g.origin.iter());
        row
    });
    let (i, g) = (out(cfg, "intent.csv"), out(cfg, "goal_poses.csv"));
    write_intent_csv(&i, &records)?;
    let header: Vec<String> = ["t_s", "qw", "qx", "qy", "qz", "px", "py", "pz"].iter().map(|s| s.to_string()).collect();
    write_table(&g, &header, goals)?;
    Ok(vec![i, g])
}

pub fn pca(cfg: &RunConfig, traces: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let traces: Vec<GloveTrace> = traces.iter().map(read_glove_csv).collect::<Result<_>>()?;
    let res = pca_analysis(&traces)?;
    let k = res.eigenvalues.len();
    let mut header: Vec<String> = ["component", "eigenvalue", "explained_ratio", "cumulative_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|j| format!("jm{j:02}")));
    let rows = (0..k).map(|i| {
        let mut row = vec![(i + 1) as f64, res.eigenvalues[i], res.explained_variance_ratio[i], res.cumulative_ratio(i + 1)];
        match res.components.get(i) {
            Some(c) => row.extend(c.iter()),
            None => row.extend(std::iter::repeat_n(0.0, k)),
        }
        row
    });
    let p = out(cfg, "pca.csv");
    write_table(&p, &header, rows)?;
    Ok(vec![p])
}

/// Intent angles (degrees) for one axis at the predictor rate, plus the period.
fn axis_series(cfg: &RunConfig, trace: &GloveTrace, axis: usize) -> Result<(Vec<f64>, f64)> {
    let hand = cfg.hand()?;
    let records = intent_series(trace, &hand, &cfg.glove()?, &cfg.pipeline(&hand))?;
    let period = records[1].t - records[0].t;
    Ok((records.iter().map(|r| r.dtheta[axis].to_degrees()).collect(), period))
}

fn write_model(cfg: &RunConfig, axis: usize, model: &TrainedModel, files: &mut Vec<PathBuf>) -> Result<()> {
    let m = out(cfg, &format!("model_{}.json", AXES[axis]));
    let l = out(cfg, &format!("loss_{}.csv", AXES[axis]));
    write_json(&m, &ModelFile::from(model))?;
    let header: Vec<String> = ["epoch", "train_mse_deg2", "validation_mse_deg2"].iter().map(|s| s.to_string()).collect();
    write_table(
        &l,
        &header,
        model.history.iter().map(|e| vec![e.epoch as f64, e.train_mse, e.validation_mse]),
    )?;
    files.push(m);
    files.push(l);
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, trace: &Path, axes: &[usize]) -> Result<Vec<PathBuf>> {
    let trace = read_glove_csv(trace)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    let mut files = Vec::new();
    for &axis in axes {
        let (series, period) = axis_series(cfg, &trace, axis)?;
        let mut ds = make_windows(&series, cfg.window, cfg.horizon)?;
        ds.period_s = period;
        let model = train(&ds, &tc)?;
        write_model(cfg, axis, &model, &mut files)?;
    }
    Ok(files)
}

#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub axis: String,
    pub horizon: usize,
    pub period_s: f64,
    /// Lag of the prediction (indexed by emission time) behind the reference.
    pub best_lag_samples: i64,
    pub best_lag_s: f64,
    pub mse_deg2: f64,
}

pub fn predict(cfg: &RunConfig, model: &Path, trace: &Path, truth: Option<&Path>, axis: usize) -> Result<(PredictReport, Vec<PathBuf>)> {
    let model = load_model(model)?;
    let trace = read_glove_csv(trace)?;
    let (series, period) = axis_series(cfg, &trace, axis)?;
    let reference: Vec<f64> = match truth {
        Some(p) => signal::decimate(&read_intent_csv(p)?, cfg.decimation.max(1))
            .iter()
            .map(|r| r.dtheta[axis].to_degrees())
            .collect(),
        None => series.clone(),
    };
    let preds = predict_series(&model, &series)?;
    let first = model.r - 1;
    let emitted: Vec<f64> = preds.iter().map(|p| p.1).collect();
    let n = emitted.len().min(reference.len().saturating_sub(first));
    let aligned = &reference[first..first + n];
    let lag = signal::best_lag(aligned, &emitted[..n], cfg.max_lag_samples)?;
    // Error against the sample each prediction targets.
    let hits: Vec<(f64, f64)> = preds
        .iter()
        .filter_map(|&(target, y)| reference.get(target).map(|&r| (y, r)))
        .collect();
    let (ys, rs): (Vec<f64>, Vec<f64>) = hits.into_iter().unzip();
    let report = PredictReport {
        axis: AXES[axis].to_string(),
        horizon: model.m,
        period_s: period,
        best_lag_samples: lag,
        best_lag_s: lag as f64 * period,
        mse_deg2: signal::mse(&ys, &rs),
    };
    let csv = out(cfg, &format!("prediction_{}.csv", AXES[axis]));
    let header: Vec<String> = ["t_s", "target_t_s", "predicted_deg", "reference_deg"].iter().map(|s| s.to_string()).collect();
    let t0 = trace.samples[0].t;
    write_table(
        &csv,
        &header,
        preds.iter().map(|&(target, y)| {
            let emitted_at = target - model.m;
            vec![
                t0 + emitted_at as f64 * period,
                t0 + target as f64 * period,
                y,
                reference.get(target).copied().unwrap_or(f64::NAN),
            ]
        }),
    )?;
    let rep = out(cfg, &format!("lag_{}.json", AXES[axis]));
    write_json(&rep, &report)?;
    Ok((report, vec![csv, rep]))
}

fn write_run(cfg: &RunConfig, run: &PipelineRun, tag: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = out(cfg, &format!("pipeline{tag}.csv"));
    let t = out(cfg, &format!("trajectory{tag}.csv"));
    let header: Vec<String> = PIPELINE_HEADER.iter().map(|s| s.to_string()).collect();
    write_table(&p, &header, run.records.iter().map(|r| r.to_row()))?;
    write_trajectory_csv(&t, &run.trajectory)?;
    files.push(p);
    files.push(t);
    Ok(())
}

pub struct SimulateGoal {
    pub rot_deg: Vector3<f64>,
}

#[derive(Debug, Serialize)]
pub struct EpisodeReport {
    pub outer_steps: usize,
    pub final_error_deg: f64,
}

pub fn simulate_goal(cfg: &RunConfig, goal: SimulateGoal) -> Result<(EpisodeReport, Vec<PathBuf>)> {
    let hand = cfg.hand()?;
    let ctrl = cfg.controller_for(&hand);
    let initial = Grasp::from_profile(&hand, &hand.clamp_to_limits(&hand.grasp_q), cfg.plant.surface)?.initial_pose;
    let target: Pose = rotated_goal(&initial, &goal.rot_deg.map(f64::to_radians));
    let ep = run_episode(&hand, &cfg.plant, &ctrl, &target)?;
    let t = out(cfg, "trajectory.csv");
    let e = out(cfg, "errors.csv");
    write_trajectory_csv(&t, &ep.log)?;
    let header: Vec<String> = ["outer_step", "rotation_error_deg"].iter().map(|s| s.to_string()).collect();
    write_table(
        &e,
        &header,
        ep.errors.iter().enumerate().map(|(i, v)| vec![i as f64, v.to_degrees()]),
    )?;
    Ok((
        EpisodeReport {
            outer_steps: ep.outer_steps,
            final_error_deg: ep.final_error().to_degrees(),
        },
        vec![t, e],
    ))
}

pub fn simulate_stream(
    cfg: &RunConfig,
    trace: &Path,
    truth: Option<&Path>,
    models: &[Option<TrainedModel>; 3],
) -> Result<(LagReport, Vec<PathBuf>)> {
    let hand = cfg.hand()?;
    let glove = cfg.glove()?;
    let trace = read_glove_csv(trace)?;
    let truth: Option<Vec<IntentRecord>> = truth.map(read_intent_csv).transpose()?;
    let run = run_pipeline(&trace, truth.as_deref(), &hand, &glove, models, &cfg.pipeline(&hand))?;
    let mut files = Vec::new();
    write_run(cfg, &run, "", &mut files)?;
    Ok((run.lag, files))
}

#[derive(Debug, Serialize)]
pub struct PipelineReport {
    pub baseline: LagReport,
    pub predicted: Option<LagReport>,
    /// `(|L_base| − |L_pred|) / |L_base|`.
    pub lag_reduction: Option<f64>,
    /// Horizon of the models trained by this run, if any.
    pub trained_horizon: Option<usize>,
    pub calibration_lag: Option<LagReport>,
    pub predicted_axes: Vec<String>,
}

pub struct PipelineArgs<'a> {
    pub trace: &'a Path,
    pub truth: Option<&'a Path>,
    pub models: [Option<TrainedModel>; 3],
    /// Trains models on this trace when given.
    pub train_trace: Option<&'a Path>,
    /// `None` matches the horizon to the lag measured on the training trace.
    pub horizon: Option<usize>,
}

pub fn pipeline(cfg: &RunConfig, args: PipelineArgs) -> Result<(PipelineReport, Vec<PathBuf>)> {
    let hand = cfg.hand()?;
    let glove = cfg.glove()?;
    let pc = cfg.pipeline(&hand);
    let mut files = Vec::new();
    let mut models = args.models;
    let mut trained_horizon = None;
    let mut calibration_lag = None;
    if let Some(path) = args.train_trace {
        let train_trace = read_glove_csv(path)?;
        let horizon = match args.horizon {
            Some(m) => m,
            None => {
                let cal = run_pipeline(&train_trace, None, &hand, &glove, &[None, None, None], &pc)?;
                calibration_lag = Some(cal.lag);
                matched_horizon(&cal.lag)
            }
        };
        let series = intent_series(&train_trace, &hand, &glove, &pc)?;
        let mut tc = cfg.train.clone();
        tc.seed = cfg.seed;
        let period = series[1].t - series[0].t;
        let trained = train_axis_models(&series, horizon, period, &tc, cfg.min_axis_std_deg)?;
        for (axis, m) in trained.into_iter().enumerate() {
            if let Some(m) = m {
                write_model(cfg, axis, &m, &mut files)?;
                models[axis] = Some(m);
            }
        }
        trained_horizon = Some(horizon);
    }

    let trace = read_glove_csv(args.trace)?;
    let truth: Option<Vec<IntentRecord>> = args.truth.map(read_intent_csv).transpose()?;
    let base = run_pipeline(&trace, truth.as_deref(), &hand, &glove, &[None, None, None], &pc)?;
    write_run(cfg, &base, "_baseline", &mut files)?;
    let predicted_axes: Vec<String> = models
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_some())
        .map(|(i, _)| AXES[i].to_string())
        .collect();
    let predicted = if predicted_axes.is_empty() {
        None
    } else {
        let run = run_pipeline(&trace, truth.as_deref(), &hand, &glove, &models, &pc)?;
        write_run(cfg, &run, "", &mut files)?;
        Some(run.lag)
    };
    let report = PipelineReport {
        baseline: base.lag,
        lag_reduction: predicted.as_ref().map(|p| lag_reduction(&base.lag, p)),
        predicted,
        trained_horizon,
        calibration_lag,
        predicted_axes,
    };
    let r = out(cfg, "lag_report.json");
    write_json(&r, &report)?;
    files.push(r);
    Ok((report, files))
}
