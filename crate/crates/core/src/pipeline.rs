//! Match-level orchestration: raw tracking and events to labelled, rewarded
//! possessions, plus corpus storage, splitting and multi-agent training.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{derive_actions, FrameEvent};
use crate::data_io::{roster, EntityKind, EventRecord, EventType, Side, TrackingRecord};
use crate::error::{Error, Result};
use crate::preprocess::{
    align_events, assign_agent_slots, filter_and_clip, normalize_orientation, order_by_position, resample_to_10hz,
    segment_possessions, AlignedEvent, EndReason, FilterStats, ResampledMatch, Span, SLOT_WINDOW_FRAMES,
};
use crate::rewards::{build_reward, EpvSurface, FollowingOutcome, CONCEDE_WINDOW_S};
use crate::rng::stream;
use crate::neural::QNetworkParams;
use crate::training::{train_agent, TrainConfig, TrainOutcome};
use crate::valuation::{value_possession, QGrid};
use crate::types::{EntityState, Frame, PitchConfig, Possession, FRAME_DT, N_AGENTS, N_ENTITIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchStats {
    pub filter: FilterStats,
    pub dropped_at_breaks: usize,
    pub dropped_missing_entities: usize,
    pub at_data_boundary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutput {
    pub match_id: String,
    pub possessions: Vec<Possession>,
    pub stats: MatchStats,
    pub warnings: Vec<String>,
}

/// Tracks covering `[start, end)` for one entity kind, as `(player_id, states)`.
fn covering(m: &ResampledMatch, kind: EntityKind, start: usize, end: usize) -> Vec<(&str, &[EntityState])> {
    let mut v: Vec<(&str, &[EntityState])> = m
        .tracks_of(kind)
        .filter(|t| t.covers(start, end))
        .map(|t| (t.player_id.as_str(), &t.states[start - t.start..end - t.start]))
        .collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v.dedup_by(|a, b| a.0 == b.0);
    v
}

fn slot_order(players: &[(&str, &[EntityState])], window: usize, outfield: bool) -> Result<Vec<String>> {
    let keyed: Vec<(String, Vec<(f64, f64)>)> = players
        .iter()
        .map(|(id, s)| (id.to_string(), s[..window.min(s.len())].iter().map(|e| (e.x, e.y)).collect()))
        .collect();
    if outfield {
        assign_agent_slots(&keyed)
    } else {
        order_by_position(&keyed)
    }
}

struct Assembled {
    frames: Vec<Frame>,
    agent_player_map: Vec<String>,
}

/// Builds the 23-entity frames of a span, or explains why it cannot.
fn assemble(m: &ResampledMatch, span: &Span) -> std::result::Result<Assembled, String> {
    let (start, end) = (span.start, span.end);
    let attackers = covering(m, EntityKind::AttackerOutfield, start, end);
    let defenders = covering(m, EntityKind::DefenderOutfield, start, end);
    let a_gk = covering(m, EntityKind::AttackerGk, start, end);
    let d_gk = covering(m, EntityKind::DefenderGk, start, end);
    let ball = covering(m, EntityKind::Ball, start, end);
    if attackers.len() != N_AGENTS || defenders.len() != N_AGENTS || a_gk.len() != 1 || d_gk.len() != 1 || ball.len() != 1 {
        return Err(format!(
            "span {start}..{end}: {} attackers, {} defenders, {} / {} goalkeepers and {} balls tracked throughout",
            attackers.len(),
            defenders.len(),
            a_gk.len(),
            d_gk.len(),
            ball.len()
        ));
    }
    let by_id = |v: &[(&str, &[EntityState])], order: &[String]| -> Vec<Vec<EntityState>> {
        order
            .iter()
            .map(|id| v.iter().find(|(p, _)| p == id).expect("ordered id present").1.to_vec())
            .collect()
    };
    let agent_player_map = slot_order(&attackers, SLOT_WINDOW_FRAMES, true).map_err(|e| e.to_string())?;
    let defender_order = slot_order(&defenders, SLOT_WINDOW_FRAMES, false).map_err(|e| e.to_string())?;
    let mut columns = by_id(&attackers, &agent_player_map);
    columns.push(a_gk[0].1.to_vec());
    columns.extend(by_id(&defenders, &defender_order));
    columns.push(d_gk[0].1.to_vec());
    columns.push(ball[0].1.to_vec());
    debug_assert_eq!(columns.len(), N_ENTITIES);
    let frames = (0..end - start)
        .map(|t| {
            let entities = columns.iter().map(|c| c[t]).collect();
            Frame::new((start + t) as f64 * FRAME_DT, entities).map_err(|e| e.to_string())
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Assembled { frames, agent_player_map })
}

/// What followed the span: the first opponent goal before the focus team's
/// next possession, or the end of the data.
fn following(span: &Span, events: &[AlignedEvent], n_frames: usize) -> FollowingOutcome {
    for e in events.iter().filter(|e| e.frame >= span.end) {
        match (e.side, e.event_type) {
            (Some(Side::Opponent), EventType::Goal) => {
                return FollowingOutcome::OpponentGoalAfter((e.frame - span.end) as f64 * FRAME_DT);
            }
            (Some(Side::Focus), EventType::BallRecovery | EventType::PeriodStart) if e.frame > span.end => {
                return FollowingOutcome::NoOpponentGoal;
            }
            _ => {}
        }
    }
    let remaining_s = n_frames.saturating_sub(span.end) as f64 * FRAME_DT;
    if remaining_s < CONCEDE_WINDOW_S {
        FollowingOutcome::DataBoundary
    } else {
        FollowingOutcome::NoOpponentGoal
    }
}

/// Runs one match through resampling, orientation, segmentation, filtering,
/// slot assignment, action labelling and reward construction.
pub fn process_match(
    tracking: &[TrackingRecord],
    tracking_hz: u32,
    events: &[EventRecord],
    events_hz: u32,
    pitch: &PitchConfig,
    epv: &EpvSurface,
) -> Result<MatchOutput> {
    let mut m = resample_to_10hz(tracking, tracking_hz)?;
    let match_id = m.match_id.clone();
    let teams: HashMap<&str, Side> = roster(tracking);
    let aligned = align_events(events, events_hz, &teams);
    let period_starts: Vec<usize> = aligned
        .iter()
        .filter(|e| e.event_type == EventType::PeriodStart)
        .map(|e| e.frame)
        .collect();
    normalize_orientation(&mut m, &period_starts);

    let seg = segment_possessions(&aligned, &m.breaks);
    let mut warnings = seg.warnings.clone();
    let focus: Vec<Span> = seg.spans.iter().filter(|s| s.side == Side::Focus).cloned().collect();
    let (kept, filter) = filter_and_clip(&focus, pitch, |f| m.ball_at(f).map(|b| b.x));
    let mut stats = MatchStats {
        filter,
        dropped_at_breaks: seg.dropped_at_breaks,
        ..Default::default()
    };

    let mut possessions = Vec::with_capacity(kept.len());
    for (k, span) in kept.iter().enumerate() {
        let Assembled {
            mut frames,
            agent_player_map,
        } = match assemble(&m, span) {
            Ok(a) => a,
            Err(why) => {
                stats.dropped_missing_entities += 1;
                warnings.push(format!("{match_id}: {why}; dropped"));
                continue;
            }
        };
        let slot_of: HashMap<&str, usize> = agent_player_map.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let mut frame_events = Vec::new();
        for e in aligned.iter().filter(|e| (span.start..span.end).contains(&e.frame)) {
            let Some(&slot) = slot_of.get(e.player_id.as_str()) else { continue };
            let t = e.frame - span.start;
            if matches!(e.event_type, EventType::Pass | EventType::Shot | EventType::BallRecovery) {
                frames[t].on_ball_attacker = Some(slot);
            }
            frame_events.push(FrameEvent {
                frame: t,
                player_id: e.player_id.clone(),
                event_type: e.event_type,
            });
        }
        let grid = derive_actions(&frames, &agent_player_map, &frame_events)?;
        warnings.extend(grid.warnings.into_iter().map(|w| format!("{match_id}: {w}")));
        let last_ball = frames.last().expect("non-empty span").ball();
        let built = build_reward(
            span.reason == EndReason::Goal,
            (last_ball.x, last_ball.y),
            following(span, &aligned, m.n_frames),
            epv,
            pitch,
        )?;
        if built.at_data_boundary {
            stats.at_data_boundary += 1;
            warnings.push(format!(
                "{match_id}: possession ending at frame {} is at the data boundary; concede term unknown",
                span.end
            ));
        }
        let p = Possession {
            possession_id: format!("{match_id}-{k:04}"),
            match_id: match_id.clone(),
            start_frame: span.start,
            team_id: Side::Focus.as_str().into(),
            frames,
            actions: grid.labels,
            reward: built.triple,
            agent_player_map,
        };
        p.validate()?;
        possessions.push(p);
    }
    Ok(MatchOutput {
        match_id,
        possessions,
        stats,
        warnings,
    })
}

/// Processes every match in the files, in match-id order, on up to `jobs` threads.
pub fn process_corpus(
    tracking: &[TrackingRecord],
    tracking_hz: u32,
    events: &[EventRecord],
    events_hz: u32,
    pitch: &PitchConfig,
    epv: &EpvSurface,
    jobs: usize,
) -> Result<Vec<MatchOutput>> {
    let mut by_match: BTreeMap<&str, (Vec<TrackingRecord>, Vec<EventRecord>)> = BTreeMap::new();
    for r in tracking {
        by_match.entry(r.match_id.as_str()).or_default().0.push(r.clone());
    }
    for e in events {
        match by_match.get_mut(e.match_id.as_str()) {
            Some(m) => m.1.push(e.clone()),
            None => log::warn!("events for match `{}` without tracking ignored", e.match_id),
        }
    }
    let work: Vec<_> = by_match.into_values().collect();
    run_jobs(jobs, || {
        work.par_iter()
            .map(|(t, e)| process_match(t, tracking_hz, e, events_hz, pitch, epv))
            .collect::<Result<Vec<_>>>()
    })?
}

fn run_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Deterministic train/test split by possession id.
pub fn split_possessions(possessions: &[Possession], seed: u64, test_fraction: f64) -> (Vec<Possession>, Vec<Possession>) {
    let mut ids: Vec<&str> = possessions.iter().map(|p| p.possession_id.as_str()).collect();
    ids.sort_unstable();
    ids.shuffle(&mut stream(seed, "split"));
    let n_test = ((possessions.len() as f64) * test_fraction).round() as usize;
    let test_ids: std::collections::HashSet<&str> = ids[..n_test.min(ids.len())].iter().copied().collect();
    let (test, train): (Vec<Possession>, Vec<Possession>) =
        possessions.iter().cloned().partition(|p| test_ids.contains(p.possession_id.as_str()));
    (train, test)
}

/// Trains the configured agent slots, each independently, on up to `jobs` threads.
pub fn train_agents(possessions: &[Possession], config: &TrainConfig, jobs: usize) -> Result<Vec<(usize, TrainOutcome)>> {
    config.validate()?;
    run_jobs(jobs, || {
        config
            .agent_ids
            .par_iter()
            .map(|&slot| train_agent(possessions, slot, config).map(|o| (slot, o)))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Q grids for every possession, in input order, on up to `jobs` threads.
pub fn value_corpus(models: &[QNetworkParams], possessions: &[Possession], jobs: usize) -> Result<Vec<QGrid>> {
    run_jobs(jobs, || {
        possessions
            .par_iter()
            .map(|p| value_possession(models, p))
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn save_possessions(path: &Path, possessions: &[Possession]) -> Result<()> {
    let text = serde_json::to_string(possessions).map_err(|e| Error::Structural(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_possessions(path: &Path) -> Result<Vec<Possession>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ps: Vec<Possession> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    for p in &ps {
        p.validate()?;
    }
    Ok(ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn run(cfg: &SynthConfig) -> (crate::synth::SynthMatch, MatchOutput) {
        let m = generate(cfg).unwrap();
        let out = process_match(&m.tracking, m.hz, &m.events, m.hz, &cfg.pitch, &EpvSurface::default()).unwrap();
        (m, out)
    }

    #[test]
    fn synthetic_match_yields_valid_possessions() {
        let (m, out) = run(&SynthConfig::new(3, 12, 0.3));
        assert!(!out.possessions.is_empty());
        assert!(out.possessions.len() <= m.focus_spans().count());
        for p in &out.possessions {
            p.validate().unwrap();
            let r = p.reward.terminal_reward().unwrap();
            assert!((-1.0..=1.0).contains(&r));
            let mut ids = p.agent_player_map.clone();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), N_AGENTS);
        }
    }

    #[test]
    fn goals_are_rewarded_with_one() {
        let mut cfg = SynthConfig::new(5, 10, 1.0);
        cfg.concede_rate = 0.0;
        let (_, out) = run(&cfg);
        assert!(!out.possessions.is_empty());
        for p in &out.possessions {
            assert!(p.reward.goal);
            assert_eq!(p.reward.terminal_reward().unwrap(), 1.0);
        }
    }

    #[test]
    fn processing_is_deterministic_and_parallel_safe() {
        let cfg = SynthConfig::new(8, 6, 0.4);
        let m = generate(&cfg).unwrap();
        let a = process_corpus(&m.tracking, m.hz, &m.events, m.hz, &cfg.pitch, &EpvSurface::default(), 1).unwrap();
        let b = process_corpus(&m.tracking, m.hz, &m.events, m.hz, &cfg.pitch, &EpvSurface::default(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let (_, out) = run(&SynthConfig::new(3, 12, 0.3));
        let (tr, te) = split_possessions(&out.possessions, 1, 0.2);
        assert_eq!(tr.len() + te.len(), out.possessions.len());
        let (tr2, te2) = split_possessions(&out.possessions, 1, 0.2);
        assert_eq!((tr, te), (tr2, te2));
    }

    #[test]
    fn possessions_round_trip_through_json() {
        let (_, out) = run(&SynthConfig::new(2, 5, 0.5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_possessions(&path, &out.possessions).unwrap();
        assert_eq!(load_possessions(&path).unwrap(), out.possessions);
    }
}
