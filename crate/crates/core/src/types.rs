//! Shared domain types.
//!
//! Entity slot layout inside a [`Frame`] (fixed, stable across training and
//! valuation):
//!
//! | slots  | entity                                 |
//! |--------|----------------------------------------|
//! | 0..=9  | attacking outfield players (agent slots) |
//! | 10     | attacking goalkeeper                   |
//! | 11..=20| defending outfield players             |
//! | 21     | defending goalkeeper                   |
//! | 22     | ball                                   |
//!
//! Coordinates are metres with the origin at the centre spot, normalized so
//! the attacking team plays toward +x.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_AGENTS: usize = 10;
pub const N_ENTITIES: usize = 23;
pub const STATE_DIM: usize = N_ENTITIES * 4;
pub const N_ACTIONS: usize = 14;
/// State plus one-hot previous action.
pub const INPUT_DIM: usize = STATE_DIM + N_ACTIONS;

pub const ATTACKER_GK_SLOT: usize = 10;
pub const DEFENDER_SLOTS: std::ops::Range<usize> = 11..21;
pub const DEFENDER_GK_SLOT: usize = 21;
pub const BALL_SLOT: usize = 22;

pub const MIN_FRAMES: usize = 50;
pub const MAX_FRAMES: usize = 300;
pub const FRAME_DT: f64 = 0.1;
pub const MAX_SPEED: f64 = 12.0;
/// Allowed distance outside the touchlines and goal lines.
pub const PITCH_SLACK_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub length_m: f64,
    pub width_m: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            length_m: 105.0,
            width_m: 68.0,
        }
    }
}

impl PitchConfig {
    pub fn new(length_m: f64, width_m: f64) -> Result<Self> {
        if !(length_m > 0.0 && width_m > 0.0 && length_m.is_finite() && width_m.is_finite()) {
            return Err(Error::Validation(format!(
                "pitch dimensions must be positive, got {length_m} x {width_m}"
            )));
        }
        Ok(Self { length_m, width_m })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.length_m / 2.0 + PITCH_SLACK_M && y.abs() <= self.width_m / 2.0 + PITCH_SLACK_M
    }

    /// x coordinate beyond which the ball is in the attacking third.
    pub fn attacking_third_x(&self) -> f64 {
        self.length_m / 6.0
    }

    pub fn goal_x(&self) -> f64 {
        self.length_m / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EntityState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl EntityState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Result<Self> {
        let e = Self { x, y, vx, vy };
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::NonFinite(format!("entity state {e:?}")))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn distance_to(&self, other: &EntityState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time_s: f64,
    pub entities: Vec<EntityState>,
    /// Agent slot credited with the ball by an event at this frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_ball_attacker: Option<usize>,
}

impl Frame {
    pub fn new(time_s: f64, entities: Vec<EntityState>) -> Result<Self> {
        let frame = Self {
            time_s,
            entities,
            on_ball_attacker: None,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entities.len() != N_ENTITIES {
            return Err(Error::Structural(format!(
                "frame has {} entities, expected {N_ENTITIES}",
                self.entities.len()
            )));
        }
        if let Some(slot) = self.on_ball_attacker {
            if slot >= N_AGENTS {
                return Err(Error::Structural(format!("on-ball attacker slot {slot} out of range")));
            }
        }
        if let Some(bad) = self.entities.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFinite(format!("entity {bad} at t={}", self.time_s)));
        }
        Ok(())
    }

    pub fn ball(&self) -> &EntityState {
        &self.entities[BALL_SLOT]
    }

    pub fn agent(&self, slot: usize) -> &EntityState {
        &self.entities[slot]
    }
}

/// Flattens a frame into the 92-dim state vector, `(x, y, vx, vy)` per entity
/// in slot order.
pub fn flatten_state(frame: &Frame) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(STATE_DIM);
    flatten_state_into(frame, &mut out)?;
    Ok(out)
}

pub fn flatten_state_into(frame: &Frame, out: &mut Vec<f64>) -> Result<()> {
    if frame.entities.len() != N_ENTITIES {
        return Err(Error::Structural(format!(
            "frame has {} entities, expected {N_ENTITIES}",
            frame.entities.len()
        )));
    }
    for e in &frame.entities {
        out.extend_from_slice(&[e.x, e.y, e.vx, e.vy]);
    }
    Ok(())
}

/// Inverse of [`flatten_state`]. The time stamp is not part of the state.
pub fn unflatten_state(state: &[f64], time_s: f64) -> Result<Frame> {
    if state.len() != STATE_DIM {
        return Err(Error::Structural(format!(
            "state vector has {} entries, expected {STATE_DIM}",
            state.len()
        )));
    }
    let entities = state
        .chunks_exact(4)
        .map(|c| EntityState {
            x: c[0],
            y: c[1],
            vx: c[2],
            vy: c[3],
        })
        .collect();
    Ok(Frame {
        time_s,
        entities,
        on_ball_attacker: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    MoveE = 0,
    MoveNE,
    MoveN,
    MoveNW,
    MoveW,
    MoveSW,
    MoveS,
    MoveSE,
    Idle,
    SprintStart,
    SprintStop,
    ReleaseDirection,
    Pass,
    Shot,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::MoveE,
        Action::MoveNE,
        Action::MoveN,
        Action::MoveNW,
        Action::MoveW,
        Action::MoveSW,
        Action::MoveS,
        Action::MoveSE,
        Action::Idle,
        Action::SprintStart,
        Action::SprintStop,
        Action::ReleaseDirection,
        Action::Pass,
        Action::Shot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Movement action for a direction sector 0..8 (E, NE, N, ... counterclockwise).
    pub fn movement(sector: usize) -> Action {
        Action::ALL[sector % 8]
    }

    pub fn is_movement(self) -> bool {
        self.index() < 8
    }

    pub fn one_hot(self) -> [f64; N_ACTIONS] {
        let mut v = [0.0; N_ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    pub fn from_one_hot(v: &[f64]) -> Result<Action> {
        if v.len() != N_ACTIONS {
            return Err(Error::Structural(format!("one-hot of width {}", v.len())));
        }
        let ones: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect();
        let zeros = v.iter().filter(|&&x| x == 0.0).count();
        match ones.as_slice() {
            [i] if zeros == N_ACTIONS - 1 => Ok(Action::ALL[*i]),
            _ => Err(Error::Validation(format!("not a one-hot vector: {v:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveE => "move_e",
            Action::MoveNE => "move_ne",
            Action::MoveN => "move_n",
            Action::MoveNW => "move_nw",
            Action::MoveW => "move_w",
            Action::MoveSW => "move_sw",
            Action::MoveS => "move_s",
            Action::MoveSE => "move_se",
            Action::Idle => "idle",
            Action::SprintStart => "sprint_start",
            Action::SprintStop => "sprint_stop",
            Action::ReleaseDirection => "release_direction",
            Action::Pass => "pass",
            Action::Shot => "shot",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown action `{s}`")))
    }
}

/// Terminal reward components attached to the last step of a possession.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTriple {
    pub goal: bool,
    pub epv: f64,
    pub concede: bool,
}

impl RewardTriple {
    pub fn new(goal: bool, epv: f64, concede: bool) -> Result<Self> {
        let r = Self { goal, epv, concede };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epv) {
            return Err(Error::Validation(format!("epv {} outside [0, 1]", self.epv)));
        }
        Ok(())
    }

    pub fn terminal_reward(&self) -> Result<f64> {
        terminal_reward(self)
    }
}

/// `goal + (1 - goal) * epv - concede`, in [-1, 1].
pub fn terminal_reward(r: &RewardTriple) -> Result<f64> {
    r.validate()?;
    let goal = if r.goal { 1.0 } else { 0.0 };
    let concede = if r.concede { 1.0 } else { 0.0 };
    Ok(goal + (1.0 - goal) * r.epv - concede)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Possession {
    pub possession_id: String,
    pub match_id: String,
    /// First 10 Hz frame of the possession on the match timeline.
    pub start_frame: usize,
    pub team_id: String,
    pub frames: Vec<Frame>,
    /// `actions[agent][t]`.
    pub actions: Vec<Vec<Action>>,
    pub reward: RewardTriple,
    pub agent_player_map: Vec<String>,
}

impl Possession {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if !(MIN_FRAMES..=MAX_FRAMES).contains(&n) {
            return Err(Error::Validation(format!(
                "possession {} has {n} frames, expected {MIN_FRAMES}..={MAX_FRAMES}",
                self.possession_id
            )));
        }
        if self.agent_player_map.len() != N_AGENTS {
            return Err(Error::Structural(format!(
                "possession {} maps {} agents",
                self.possession_id,
                self.agent_player_map.len()
            )));
        }
        if self.actions.len() != N_AGENTS || self.actions.iter().any(|a| a.len() != n) {
            return Err(Error::Structural(format!(
                "possession {} action grid is not {N_AGENTS} x {n}",
                self.possession_id
            )));
        }
        for f in &self.frames {
            f.validate()?;
        }
        self.reward.validate()
    }

    /// `[0, ..., 0, terminal_reward]`, one entry per step.
    pub fn reward_sequence(&self) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.frames.len()];
        if let Some(last) = r.last_mut() {
            *last = self.reward.terminal_reward()?;
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerValuation {
    pub player_id: String,
    pub games_played: usize,
    pub avg_q: f64,
    pub avg_q_onball: f64,
    pub avg_q_offball: f64,
    pub frames_onball: usize,
    pub frames_offball: usize,
}
