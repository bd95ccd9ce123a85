//! Per-frame action labels for the 10 attacking agents.
//!
//! Precedence within a frame: pass/shot event, sprint start, sprint stop,
//! release of direction, idle, movement direction. The sprint regime is
//! latched with hysteresis (enter at 24 km/h, leave below 6 m/s).

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use crate::data_io::EventType;
use crate::error::{Error, Result};
use crate::types::{Action, Frame, N_AGENTS};

/// 0.1 m/s.
pub const STOP_SPEED: f64 = 0.1;
/// 24 km/h.
pub const SPRINT_SPEED: f64 = 24.0 / 3.6;
pub const SPRINT_EXIT_SPEED: f64 = 6.0;

/// An on-ball event on the possession's own frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEvent {
    pub frame: usize,
    pub player_id: String,
    pub event_type: EventType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    /// `labels[agent][t]`.
    pub labels: Vec<Vec<Action>>,
    pub warnings: Vec<String>,
}

/// Direction sector 0..8 of a velocity, counted counterclockwise from +x.
/// Angles exactly on a sector boundary go to the counterclockwise sector.
pub fn movement_sector(vx: f64, vy: f64) -> usize {
    let theta = vy.atan2(vx);
    let r = theta / FRAC_PI_4 + 0.5;
    // Snap rounding noise so that boundary angles resolve counterclockwise.
    let r = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.floor() };
    (r as i64).rem_euclid(8) as usize
}

/// Label for one agent at one frame, given its previous speed and sprint regime.
pub fn classify_motion(prev_speed: f64, speed: f64, vx: f64, vy: f64, sprinting: bool) -> Action {
    if !sprinting && speed >= SPRINT_SPEED {
        Action::SprintStart
    } else if sprinting && speed < SPRINT_EXIT_SPEED {
        Action::SprintStop
    } else if speed < STOP_SPEED && prev_speed >= STOP_SPEED {
        Action::ReleaseDirection
    } else if speed < STOP_SPEED {
        Action::Idle
    } else {
        Action::movement(movement_sector(vx, vy))
    }
}

fn next_regime(sprinting: bool, speed: f64) -> bool {
    if sprinting {
        speed >= SPRINT_EXIT_SPEED
    } else {
        speed >= SPRINT_SPEED
    }
}

/// Derives the 10 x N label grid. `agent_player_map[slot]` names the player in
/// each agent slot; events by other players are ignored with a warning.
pub fn derive_actions(frames: &[Frame], agent_player_map: &[String], events: &[FrameEvent]) -> Result<ActionGrid> {
    if agent_player_map.len() != N_AGENTS {
        return Err(Error::Structural(format!(
            "agent map has {} entries, expected {N_AGENTS}",
            agent_player_map.len()
        )));
    }
    for f in frames {
        f.validate()?;
    }
    let slot_of: HashMap<&str, usize> = agent_player_map.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut on_ball: HashMap<(usize, usize), Action> = HashMap::new();
    let mut warnings = Vec::new();
    for e in events {
        let action = match e.event_type {
            EventType::Pass => Action::Pass,
            EventType::Shot => Action::Shot,
            _ => continue,
        };
        if e.frame >= frames.len() {
            continue;
        }
        match slot_of.get(e.player_id.as_str()) {
            Some(&slot) => {
                on_ball.insert((slot, e.frame), action);
            }
            None => warnings.push(format!(
                "{} at frame {} by `{}` who holds no agent slot; ignored",
                action, e.frame, e.player_id
            )),
        }
    }

    let mut labels: Vec<Vec<Action>> = (0..N_AGENTS).map(|_| Vec::with_capacity(frames.len())).collect();
    for (slot, row) in labels.iter_mut().enumerate() {
        let mut prev_speed: Option<f64> = None;
        let mut sprinting = false;
        for (t, f) in frames.iter().enumerate() {
            let e = f.agent(slot);
            let speed = e.speed();
            let label = match (on_ball.get(&(slot, t)), prev_speed) {
                (Some(&a), _) => a,
                // Without a previous frame there is no transition to observe.
                (None, None) => {
                    if speed < STOP_SPEED {
                        Action::Idle
                    } else {
                        Action::movement(movement_sector(e.vx, e.vy))
                    }
                }
                (None, Some(p)) => classify_motion(p, speed, e.vx, e.vy, sprinting),
            };
            sprinting = match prev_speed {
                None => speed >= SPRINT_SPEED,
                Some(_) => next_regime(sprinting, speed),
            };
            prev_speed = Some(speed);
            row.push(label);
        }
    }
    Ok(ActionGrid { labels, warnings })
}

/// Writes the grid as CSV, one row per agent and one column per frame.
pub fn write_action_grid<W: Write>(mut out: W, labels: &[Vec<Action>]) -> std::io::Result<()> {
    let n = labels.first().map_or(0, Vec::len);
    write!(out, "agent")?;
    for t in 0..n {
        write!(out, ",t{t}")?;
    }
    writeln!(out)?;
    for (agent, row) in labels.iter().enumerate() {
        write!(out, "{agent}")?;
        for a in row {
            write!(out, ",{a}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EntityState, N_ENTITIES};
    use proptest::prelude::*;

    fn frames_with_agent0(velocities: &[(f64, f64)]) -> Vec<Frame> {
        velocities
            .iter()
            .enumerate()
            .map(|(t, &(vx, vy))| {
                let mut es = vec![EntityState::default(); N_ENTITIES];
                es[0] = EntityState { x: 0.0, y: 0.0, vx, vy };
                Frame::new(t as f64 * 0.1, es).unwrap()
            })
            .collect()
    }

    fn map() -> Vec<String> {
        (0..10).map(|i| format!("p{i}")).collect()
    }

    fn agent0(v: &[(f64, f64)], events: &[FrameEvent]) -> Vec<Action> {
        derive_actions(&frames_with_agent0(v), &map(), events).unwrap().labels[0].clone()
    }

    #[test]
    fn slow_is_idle() {
        assert_eq!(agent0(&[(0.05, 0.0), (0.05, 0.0)], &[])[1], Action::Idle);
    }

    #[test]
    fn eastward_is_move_e() {
        assert_eq!(agent0(&[(2.0, 0.0), (2.0, 0.0)], &[])[1], Action::MoveE);
    }

    #[test]
    fn pass_event_overrides_motion() {
        let ev = FrameEvent {
            frame: 1,
            player_id: "p3".into(),
            event_type: EventType::Pass,
        };
        let grid = derive_actions(&frames_with_agent0(&[(3.0, 0.0), (0.0, 0.0)]), &map(), &[ev]).unwrap();
        assert_eq!(grid.labels[3][1], Action::Pass);
        assert_eq!(grid.labels[0][1], Action::ReleaseDirection);
    }

    #[test]
    fn unknown_event_player_warns() {
        let ev = FrameEvent {
            frame: 0,
            player_id: "ghost".into(),
            event_type: EventType::Shot,
        };
        let grid = derive_actions(&frames_with_agent0(&[(1.0, 0.0)]), &map(), &[ev]).unwrap();
        assert_eq!(grid.warnings.len(), 1);
        assert!(grid.labels.iter().all(|r| r[0] != Action::Shot));
    }

    #[test]
    fn sprint_start_on_upward_crossing() {
        assert_eq!(agent0(&[(6.0, 0.0), (7.0, 0.0)], &[])[1], Action::SprintStart);
    }

    #[test]
    fn sprint_hysteresis() {
        let labels = agent0(&[(5.0, 0.0), (7.0, 0.0), (6.3, 0.0), (6.8, 0.0), (5.9, 0.0), (6.2, 0.0)], &[]);
        assert_eq!(
            labels[1..],
            [Action::SprintStart, Action::MoveE, Action::MoveE, Action::SprintStop, Action::MoveE]
        );
    }

    #[test]
    fn thresholds_at_both_sides() {
        let just_below = SPRINT_SPEED - 1e-9;
        assert_eq!(agent0(&[(5.0, 0.0), (just_below, 0.0)], &[])[1], Action::MoveE);
        assert_eq!(agent0(&[(5.0, 0.0), (SPRINT_SPEED, 0.0)], &[])[1], Action::SprintStart);
        assert_eq!(agent0(&[(1.0, 0.0), (STOP_SPEED, 0.0)], &[])[1], Action::MoveE);
        assert_eq!(agent0(&[(1.0, 0.0), (STOP_SPEED - 1e-9, 0.0)], &[])[1], Action::ReleaseDirection);
        assert_eq!(agent0(&[(0.0, 0.0), (0.0, 0.0)], &[])[1], Action::Idle);
    }

    #[test]
    fn sector_centres_and_boundaries() {
        for k in 0..8 {
            let a = k as f64 * FRAC_PI_4;
            assert_eq!(movement_sector(a.cos(), a.sin()), k);
        }
        // 22.5 degrees belongs to NE, -22.5 to E.
        let b = FRAC_PI_4 / 2.0;
        assert_eq!(movement_sector(b.cos(), b.sin()), 1);
        assert_eq!(movement_sector(b.cos(), -b.sin()), 0);
        assert_eq!(movement_sector(-1.0, 0.0), 4);
        assert_eq!(movement_sector(-1.0, -0.0), 4);
    }

    #[test]
    fn determinism() {
        let v: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64 * 0.7).sin() * 8.0, (i as f64).cos() * 3.0)).collect();
        assert_eq!(agent0(&v, &[]), agent0(&v, &[]));
    }

    proptest! {
        #[test]
        fn rotation_by_45_degrees_shifts_sector(angle in -std::f64::consts::PI..std::f64::consts::PI, speed in 0.2..10.0f64) {
            let offset = (angle / FRAC_PI_4 + 0.5).rem_euclid(1.0);
            prop_assume!(offset > 1e-6 && offset < 1.0 - 1e-6);
            let rotated = angle + FRAC_PI_4;
            let s0 = movement_sector(speed * angle.cos(), speed * angle.sin());
            let s1 = movement_sector(speed * rotated.cos(), speed * rotated.sin());
            prop_assert_eq!(s1, (s0 + 1) % 8);
        }
    }
}
