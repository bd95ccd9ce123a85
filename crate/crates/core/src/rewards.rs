//! Terminal rewards: goal, expected possession value at the final ball
//! position, and conceding shortly after the possession.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PitchConfig, RewardTriple, PITCH_SLACK_M};

pub const EPV_FORMAT: &str = "qpitch-epv-v1";
/// An opponent goal within this many seconds of a possession's end counts as conceded.
pub const CONCEDE_WINDOW_S: f64 = 30.0;

/// Scoring-probability surface over ball position (attack toward +x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EpvSurface {
    /// Node values on a regular grid centred on the centre spot.
    /// `values[row][col]`, rows along y (ascending), columns along x.
    Grid { cell_m: f64, values: Vec<Vec<f64>> },
    /// `logistic(c0 + c1 * dist + c2 * angle)`, with `dist` the distance to the
    /// goal centre and `angle` the absolute bearing off the goal axis (rad).
    Parametric { c0: f64, c1: f64, c2: f64 },
}

impl Default for EpvSurface {
    fn default() -> Self {
        // Hand-set to the usual shape: ~0.4 on the goal line, ~0.2 at the
        // penalty spot, below 0.01 at the halfway line, lower on wide angles.
        EpvSurface::Parametric {
            c0: -0.4,
            c1: -0.09,
            c2: -1.0,
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl EpvSurface {
    pub fn constant_grid(value: f64, cell_m: f64, pitch: &PitchConfig) -> Self {
        let nx = (pitch.length_m / cell_m).ceil() as usize + 1;
        let ny = (pitch.width_m / cell_m).ceil() as usize + 1;
        EpvSurface::Grid {
            cell_m,
            values: vec![vec![value; nx]; ny],
        }
    }

    pub fn validate(&self, pitch: &PitchConfig) -> Result<()> {
        match self {
            EpvSurface::Grid { cell_m, values } => {
                if !(*cell_m > 0.0 && *cell_m <= 1.0) {
                    return Err(Error::Validation(format!("EPV cell size {cell_m} outside (0, 1] m")));
                }
                let nx = values.first().map_or(0, Vec::len);
                if values.len() < 2 || nx < 2 || values.iter().any(|r| r.len() != nx) {
                    return Err(Error::Structural("EPV grid must be rectangular with at least 2x2 nodes".into()));
                }
                if values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Validation("EPV grid values must lie in [0, 1]".into()));
                }
            }
            EpvSurface::Parametric { c0, c1, c2 } => {
                if ![c0, c1, c2].iter().all(|c| c.is_finite()) {
                    return Err(Error::NonFinite("EPV coefficients".into()));
                }
            }
        }
        // Non-decreasing toward goal along the centreline.
        let half = pitch.length_m / 2.0;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=200 {
            let x = -half + pitch.length_m * i as f64 / 200.0;
            let v = self.epv_at(pitch, x, 0.0)?;
            if v + 1e-12 < prev {
                return Err(Error::Validation(format!("EPV decreases toward goal near x = {x:.2}")));
            }
            prev = v;
        }
        Ok(())
    }

    pub fn epv_at(&self, pitch: &PitchConfig, x: f64, y: f64) -> Result<f64> {
        epv_at(self, pitch, x, y)
    }
}

pub fn epv_at(surface: &EpvSurface, pitch: &PitchConfig, x: f64, y: f64) -> Result<f64> {
    if !(x.is_finite() && y.is_finite()) || !pitch.contains(x, y) {
        return Err(Error::Validation(format!(
            "point ({x}, {y}) outside the pitch plus {PITCH_SLACK_M} m"
        )));
    }
    let v = match surface {
        EpvSurface::Parametric { c0, c1, c2 } => {
            let dx = pitch.goal_x() - x;
            let dist = dx.hypot(y);
            let angle = y.abs().atan2(dx).abs();
            logistic(c0 + c1 * dist + c2 * angle)
        }
        EpvSurface::Grid { cell_m, values } => {
            let ny = values.len();
            let nx = values[0].len();
            let x0 = -((nx - 1) as f64) * cell_m / 2.0;
            let y0 = -((ny - 1) as f64) * cell_m / 2.0;
            let gx = ((x - x0) / cell_m).clamp(0.0, (nx - 1) as f64);
            let gy = ((y - y0) / cell_m).clamp(0.0, (ny - 1) as f64);
            let i = (gx.floor() as usize).min(nx - 2);
            let j = (gy.floor() as usize).min(ny - 2);
            let (fx, fy) = (gx - i as f64, gy - j as f64);
            let v00 = values[j][i];
            let v10 = values[j][i + 1];
            let v01 = values[j + 1][i];
            let v11 = values[j + 1][i + 1];
            (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
        }
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Reads `#fmt=qpitch-epv-v1,cell_m=<float>` followed by comma-separated rows.
pub fn parse_epv_grid(text: &str, source: &str) -> Result<EpvSurface> {
    let mut lines = text.lines().enumerate();
    let expected = format!("#fmt={EPV_FORMAT},cell_m=<float>");
    let (_, head) = lines.next().ok_or_else(|| Error::Header(source.into(), expected.clone()))?;
    let mut cell_m = None;
    let mut fmt_ok = false;
    for part in head.trim().trim_start_matches('#').split(',') {
        match part.split_once('=') {
            Some(("fmt", v)) => fmt_ok = v == EPV_FORMAT,
            Some(("cell_m", v)) => cell_m = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let cell_m = match (head.starts_with('#'), fmt_ok, cell_m) {
        (true, true, Some(c)) => c,
        _ => return Err(Error::Header(source.into(), expected)),
    };
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|e| Error::Parse {
                    source_name: source.into(),
                    line: i + 1,
                    message: format!("bad EPV value `{v}`: {e}"),
                })
            })
            .collect();
        values.push(row?);
    }
    Ok(EpvSurface::Grid { cell_m, values })
}

pub fn load_epv_grid(path: &Path, pitch: &PitchConfig) -> Result<EpvSurface> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s = parse_epv_grid(&text, &path.display().to_string())?;
    s.validate(pitch)?;
    Ok(s)
}

pub fn write_epv_grid<W: Write>(mut out: W, cell_m: f64, values: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(out, "#fmt={EPV_FORMAT},cell_m={cell_m}")?;
    for row in values {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// What happened after the possession ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FollowingOutcome {
    /// First opponent goal after the possession, before the focus team's
    /// next possession, this many seconds after the end.
    OpponentGoalAfter(f64),
    NoOpponentGoal,
    /// No data after the possession.
    DataBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltReward {
    pub triple: RewardTriple,
    pub at_data_boundary: bool,
}

/// `ball_final` is the normalized ball position at the possession's last frame.
pub fn build_reward(
    ended_in_goal: bool,
    ball_final: (f64, f64),
    following: FollowingOutcome,
    surface: &EpvSurface,
    pitch: &PitchConfig,
) -> Result<BuiltReward> {
    let epv = if ended_in_goal {
        0.0
    } else {
        let (x, y) = ball_final;
        // Keep slightly out-of-bounds balls evaluable.
        let x = x.clamp(-pitch.length_m / 2.0 - PITCH_SLACK_M, pitch.length_m / 2.0 + PITCH_SLACK_M);
        let y = y.clamp(-pitch.width_m / 2.0 - PITCH_SLACK_M, pitch.width_m / 2.0 + PITCH_SLACK_M);
        epv_at(surface, pitch, x, y)?
    };
    let concede = matches!(following, FollowingOutcome::OpponentGoalAfter(dt) if dt <= CONCEDE_WINDOW_S);
    Ok(BuiltReward {
        triple: RewardTriple::new(ended_in_goal, epv, concede)?,
        at_data_boundary: following == FollowingOutcome::DataBoundary,
    })
}
