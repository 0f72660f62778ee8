use std::path::Path;

use serde::Serialize;

use super::metrics::{compute_metrics, Metrics};
use super::run::RunLog;
use super::HarnessError;
use crate::path::{ClothoidSpline, Continuity};

/// Files written next to `run.json` and `metrics.json`.
pub const PLOT_FILES: [&str; 4] = ["truth_leader.csv", "robot.csv", "estimates.csv", "spline.json"];

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn run_json(log: &RunLog) -> String {
    serde_json::to_string_pretty(log).expect("run log serialises")
}

pub fn metrics_json(m: &Metrics) -> String {
    serde_json::to_string_pretty(m).expect("metrics serialise")
}

pub fn load_run(path: &Path) -> Result<RunLog, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Schema(format!("{}: {e}", path.display())))
}

/// `run.json`, `metrics.json` and the plot files.
pub fn write_outputs(log: &RunLog, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write(&dir.join("run.json"), &run_json(log))?;
    write(&dir.join("metrics.json"), &metrics_json(&compute_metrics(log)))?;
    write_plotdata(log, dir)
}

#[derive(Serialize)]
struct SplineFile<'a> {
    version: u64,
    total_length: f64,
    continuity: Option<ContinuityOut>,
    segments: Option<&'a ClothoidSpline>,
}

#[derive(Serialize)]
struct ContinuityOut {
    position: f64,
    heading: f64,
    curvature: f64,
}

impl From<Continuity> for ContinuityOut {
    fn from(c: Continuity) -> Self {
        Self {
            position: c.position,
            heading: c.heading,
            curvature: c.curvature,
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Schema(format!("{}: {e}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Plot-ready CSVs with one row per step, plus the final spline.
///
/// * `truth_leader.csv`: `k,t,x,y,theta`
/// * `robot.csv`: `k,t,x,y,theta,v,omega,v_target,lateral_error,gap,obstacle_distance,mode`
/// * `estimates.csv`: `k,t,meas_x,meas_y,x,y,vx,vy,cov_xx,cov_xy,cov_yy,mu_<model>...`;
///   empty cells where no value exists
pub fn write_plotdata(log: &RunLog, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;

    let p = dir.join("truth_leader.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    w.write_record(["k", "t", "x", "y", "theta"]).map_err(csv_err(&p))?;
    for r in &log.steps {
        let q = r.agents[&log.leader_id];
        w.write_record([r.k.to_string(), r.t.to_string(), q.x.to_string(), q.y.to_string(), q.theta.to_string()])
            .map_err(csv_err(&p))?;
    }
    w.flush().map_err(|e| HarnessError::io(&p, e))?;

    let p = dir.join("robot.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    w.write_record([
        "k",
        "t",
        "x",
        "y",
        "theta",
        "v",
        "omega",
        "v_target",
        "lateral_error",
        "gap",
        "obstacle_distance",
        "mode",
    ])
    .map_err(csv_err(&p))?;
    for r in &log.steps {
        w.write_record([
            r.k.to_string(),
            r.t.to_string(),
            r.robot.x.to_string(),
            r.robot.y.to_string(),
            r.robot.theta.to_string(),
            r.command.v.to_string(),
            r.command.omega.to_string(),
            r.v_target.to_string(),
            opt(r.lateral_error),
            opt(r.gap),
            opt(r.obstacle_distance),
            format!("{:?}", r.mode),
        ])
        .map_err(csv_err(&p))?;
    }
    w.flush().map_err(|e| HarnessError::io(&p, e))?;

    let models: Vec<String> = log.scenario.tracker.models.clone();
    let p = dir.join("estimates.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    let mut header: Vec<String> = ["k", "t", "meas_x", "meas_y", "x", "y", "vx", "vy", "cov_xx", "cov_xy", "cov_yy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(models.iter().map(|m| format!("mu_{m}")));
    w.write_record(&header).map_err(csv_err(&p))?;
    for r in &log.steps {
        let mut row = vec![
            r.k.to_string(),
            r.t.to_string(),
            opt(r.measurement.map(|m| m[0])),
            opt(r.measurement.map(|m| m[1])),
        ];
        match &r.estimate {
            Some(e) => {
                row.extend([e.x, e.y, e.vx, e.vy, e.cov[0], e.cov[1], e.cov[2]].map(|v| v.to_string()));
                row.extend(models.iter().map(|m| opt(e.mu.get(m).copied())));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 7 + models.len())),
        }
        w.write_record(&row).map_err(csv_err(&p))?;
    }
    w.flush().map_err(|e| HarnessError::io(&p, e))?;

    let spline = SplineFile {
        version: log.steps.last().map_or(0, |r| r.spline_version),
        total_length: log.spline.as_ref().map_or(0.0, |s| s.total_length()),
        continuity: log.spline.as_ref().map(|s| s.continuity().into()),
        segments: log.spline.as_ref(),
    };
    write(
        &dir.join("spline.json"),
        &serde_json::to_string_pretty(&spline).expect("spline serialises"),
    )
}
