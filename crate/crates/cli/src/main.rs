//! `teleop`: glove traces, intent, training, prediction and closed-loop runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure
//! (a `diagnostic.json` is written to the output directory).

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glove_teleop::predictor::TrainedModel;
use glove_teleop::{Error, Result};
use nalgebra::Vector3;

use commands::{axis_index, load_model, DataKind, PipelineArgs, SimulateGoal};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "teleop", version, about = "Glove-driven in-hand manipulation toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sigmoid,
    Rigid,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model_x: Option<PathBuf>,
    #[arg(long)]
    model_y: Option<PathBuf>,
    #[arg(long)]
    model_z: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<[Option<TrainedModel>; 3]> {
        let get = |p: &Option<PathBuf>| p.as_deref().map(load_model).transpose();
        Ok([get(&self.model_x)?, get(&self.model_y)?, get(&self.model_z)?])
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic glove trace plus ground-truth intent.
    GenData {
        #[arg(long, value_enum, default_value = "sigmoid")]
        kind: Kind,
        #[arg(long)]
        wavelets: Option<usize>,
    },
    /// Glove trace to cumulative intent and goal poses.
    Intent {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Principal components of one or more glove traces.
    Pca {
        #[arg(long, required = true, num_args = 1..)]
        trace: Vec<PathBuf>,
    },
    /// Train per-axis predictors on the intent of a glove trace.
    Train {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated axes.
        #[arg(long, default_value = "z", value_delimiter = ',')]
        axis: Vec<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run a trained model over a trace and report its lead.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "z")]
        axis: String,
    },
    /// Closed-loop relocation toward a fixed goal or along a glove trace.
    Simulate {
        #[arg(long, allow_negative_numbers = true)]
        goal_rot_x_deg: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        goal_rot_y_deg: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        goal_rot_z_deg: Option<f64>,
        #[arg(long, conflicts_with_all = ["goal_rot_x_deg", "goal_rot_y_deg", "goal_rot_z_deg"])]
        trace: Option<PathBuf>,
        #[arg(long, requires = "trace")]
        truth: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Glove trace → intent → (prediction) → simulation, with and without prediction.
    Pipeline {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
        /// Train predictors on this trace before the run.
        #[arg(long)]
        train_trace: Option<PathBuf>,
        /// Horizon for trained predictors; by default the lag measured on the training trace.
        #[arg(long, requires = "train_trace")]
        horizon: Option<usize>,
        #[arg(long, requires = "train_trace")]
        epochs: Option<usize>,
    },
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::GenData { .. } => "gen-data",
        Command::Intent { .. } => "intent",
        Command::Pca { .. } => "pca",
        Command::Train { .. } => "train",
        Command::Predict { .. } => "predict",
        Command::Simulate { .. } => "simulate",
        Command::Pipeline { .. } => "pipeline",
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cfg: &mut RunConfig, cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { kind, wavelets } => {
            let kind = match kind {
                Kind::Sigmoid => DataKind::Sigmoid { wavelets },
                Kind::Rigid => DataKind::Rigid,
            };
            report(&commands::gen_data(cfg, kind)?);
        }
        Command::Intent { trace } => report(&commands::intent(cfg, &trace)?),
        Command::Pca { trace } => report(&commands::pca(cfg, &trace)?),
        Command::Train {
            trace,
            axis,
            epochs,
            learning_rate,
            horizon,
        } => {
            let axes = axis.iter().map(|a| axis_index(a.trim())).collect::<Result<Vec<_>>>()?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            if let Some(m) = horizon {
                cfg.horizon = m;
            }
            report(&commands::train_cmd(cfg, &trace, &axes)?);
        }
        Command::Predict {
            model,
            trace,
            truth,
            axis,
        } => {
            let (rep, files) = commands::predict(cfg, &model, &trace, truth.as_deref(), axis_index(&axis)?)?;
            println!(
                "axis {} horizon {} best_lag_samples {} ({:.3} s) mse {:.4} deg^2",
                rep.axis, rep.horizon, rep.best_lag_samples, rep.best_lag_s, rep.mse_deg2
            );
            report(&files);
        }
        Command::Simulate {
            goal_rot_x_deg,
            goal_rot_y_deg,
            goal_rot_z_deg,
            trace,
            truth,
            models,
        } => match trace {
            Some(trace) => {
                let (lag, files) = commands::simulate_stream(cfg, &trace, truth.as_deref(), &models.load()?)?;
                println!("object lag {} samples ({:.3} s)", lag.lag_samples, lag.lag_s);
                report(&files);
            }
            None => {
                let rot = Vector3::new(
                    goal_rot_x_deg.unwrap_or(0.0),
                    goal_rot_y_deg.unwrap_or(0.0),
                    goal_rot_z_deg.unwrap_or(0.0),
                );
                let (rep, files) = commands::simulate_goal(cfg, SimulateGoal { rot_deg: rot })?;
                println!(
                    "converged in {} outer steps, final orientation error {:.4} deg",
                    rep.outer_steps, rep.final_error_deg
                );
                report(&files);
            }
        },
        Command::Pipeline {
            trace,
            truth,
            models,
            train_trace,
            horizon,
            epochs,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let args = PipelineArgs {
                trace: &trace,
                truth: truth.as_deref(),
                models: models.load()?,
                train_trace: train_trace.as_deref(),
                horizon,
            };
            let (rep, files) = commands::pipeline(cfg, args)?;
            println!("baseline lag {} samples ({:.3} s)", rep.baseline.lag_samples, rep.baseline.lag_s);
            if let (Some(p), Some(r)) = (rep.predicted, rep.lag_reduction) {
                println!("predicted lag {} samples ({:.3} s), reduction {:.0}%", p.lag_samples, p.lag_s, 100.0 * r);
            }
            report(&files);
        }
    }
    Ok(())
}

fn write_diagnostic(dir: &Path, command: &str, err: &Error) {
    let body = serde_json::json!({
        "command": command,
        "error": err.to_string(),
        "detail": format!("{err:?}"),
    });
    let path = dir.join("diagnostic.json");
    match glove_teleop::io::write_json(&path, &body) {
        Ok(()) => eprintln!("diagnostic written to {}", path.display()),
        Err(e) => eprintln!("could not write {}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mut cfg = match RunConfig::load(cli.common.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.common.out {
        cfg.out_dir = o;
    }
    let command = name(&cli.command);
    match run(&mut cfg, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_numerical() => {
            eprintln!("error: {e}");
            write_diagnostic(&cfg.out_dir, command, &e);
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
