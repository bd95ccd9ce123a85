//! Raw records to 10 Hz possession spans.
//!
//! The source clock is `frame_idx / hz`; `time_s` in the file is informational.
//! The 10 Hz timeline has frame `k` at `k / 10` seconds on that clock.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_io::{EntityKind, EventRecord, EventType, Side, TrackingRecord};
use crate::error::{Error, Result};
use crate::types::{EntityState, PitchConfig, FRAME_DT, MAX_FRAMES, MAX_SPEED, MIN_FRAMES, N_AGENTS};

pub const TARGET_HZ: u64 = 10;
/// Source gaps longer than this break the timeline instead of being bridged.
pub const MAX_BRIDGED_GAP_S: f64 = 0.5;
/// Slot ordering looks at the first 2 s of a possession.
pub const SLOT_WINDOW_FRAMES: usize = 20;

/// One contiguous 10 Hz run of an entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub kind: EntityKind,
    pub player_id: String,
    pub start: usize,
    pub states: Vec<EntityState>,
}

impl Track {
    pub fn end(&self) -> usize {
        self.start + self.states.len()
    }

    pub fn covers(&self, from: usize, to: usize) -> bool {
        self.start <= from && to <= self.end()
    }

    pub fn at(&self, frame: usize) -> Option<&EntityState> {
        frame.checked_sub(self.start).and_then(|i| self.states.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledMatch {
    pub match_id: String,
    pub n_frames: usize,
    /// Sorted by (kind, player_id, start).
    pub tracks: Vec<Track>,
    /// 10 Hz frames at which some entity's source data has a gap over 0.5 s.
    pub breaks: Vec<usize>,
}

impl ResampledMatch {
    pub fn tracks_of(&self, kind: EntityKind) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(move |t| t.kind == kind)
    }

    pub fn state_at(&self, kind: EntityKind, player_id: &str, frame: usize) -> Option<&EntityState> {
        self.tracks
            .iter()
            .filter(|t| t.kind == kind && t.player_id == player_id)
            .find_map(|t| t.at(frame))
    }

    pub fn ball_at(&self, frame: usize) -> Option<&EntityState> {
        self.tracks_of(EntityKind::Ball).find_map(|t| t.at(frame))
    }
}

/// Linear interpolation of one entity's samples onto the 10 Hz grid.
/// Returns contiguous runs of positions plus the grid frames where gaps break
/// the run.
fn resample_series(samples: &[(u64, f64, f64)], hz: u64) -> (Vec<(usize, Vec<(f64, f64)>)>, Vec<usize>) {
    let mut runs: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    let mut breaks = Vec::new();
    if samples.is_empty() {
        return (runs, breaks);
    }
    let max_gap = (MAX_BRIDGED_GAP_S * hz as f64).round() as u64;
    // Grid frame k sits at source position k * hz / 10.
    let first = samples[0].0;
    let last = samples[samples.len() - 1].0;
    let k_first = (first * TARGET_HZ).div_ceil(hz) as usize;
    let k_last = (last * TARGET_HZ / hz) as usize;
    let mut lo = 0usize;
    let mut current: Option<(usize, Vec<(f64, f64)>)> = None;
    for k in k_first..=k_last {
        let q = k as u64 * hz; // source position times 10
        while lo + 1 < samples.len() && samples[lo + 1].0 * TARGET_HZ <= q {
            lo += 1;
        }
        let (f0, x0, y0) = samples[lo];
        let value = if f0 * TARGET_HZ == q {
            Some((x0, y0))
        } else {
            let (f1, x1, y1) = samples[lo + 1];
            if f1 - f0 > max_gap {
                None
            } else {
                let w = (q - f0 * TARGET_HZ) as f64 / ((f1 - f0) * TARGET_HZ) as f64;
                Some((x0 + w * (x1 - x0), y0 + w * (y1 - y0)))
            }
        };
        match value {
            Some(p) => match current.as_mut() {
                Some((_, run)) => run.push(p),
                None => current = Some((k, vec![p])),
            },
            None => {
                if let Some(run) = current.take() {
                    breaks.push(k);
                    runs.push(run);
                }
            }
        }
    }
    runs.extend(current);
    (runs, breaks)
}

/// Central differences inside a run, one-sided at its ends, clamped to 12 m/s.
pub fn velocities(positions: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = positions.len();
    (0..n)
        .map(|i| {
            let (vx, vy) = if n < 2 {
                (0.0, 0.0)
            } else if i == 0 {
                let (a, b) = (positions[0], positions[1]);
                ((b.0 - a.0) / FRAME_DT, (b.1 - a.1) / FRAME_DT)
            } else if i == n - 1 {
                let (a, b) = (positions[n - 2], positions[n - 1]);
                ((b.0 - a.0) / FRAME_DT, (b.1 - a.1) / FRAME_DT)
            } else {
                let (a, b) = (positions[i - 1], positions[i + 1]);
                ((b.0 - a.0) / (2.0 * FRAME_DT), (b.1 - a.1) / (2.0 * FRAME_DT))
            };
            let s = vx.hypot(vy);
            if s > MAX_SPEED {
                (vx * MAX_SPEED / s, vy * MAX_SPEED / s)
            } else {
                (vx, vy)
            }
        })
        .collect()
}

/// Resamples one match's tracking records (all sharing `match_id`) to 10 Hz.
pub fn resample_to_10hz(records: &[TrackingRecord], hz: u32) -> Result<ResampledMatch> {
    if !crate::data_io::SUPPORTED_HZ.contains(&hz) {
        return Err(Error::Validation(format!("unsupported source rate {hz} Hz")));
    }
    let match_id = records.first().map(|r| r.match_id.clone()).unwrap_or_default();
    let mut per_entity: BTreeMap<(EntityKind, &str), Vec<(u64, f64, f64)>> = BTreeMap::new();
    for r in records {
        if r.match_id != match_id {
            return Err(Error::Validation(format!(
                "resample expects one match, found `{}` and `{}`",
                match_id, r.match_id
            )));
        }
        let s = per_entity.entry((r.entity_kind, r.player_id.as_str())).or_default();
        match s.last_mut() {
            Some(last) if last.0 == r.frame_idx => *last = (r.frame_idx, r.x, r.y),
            Some(last) if last.0 > r.frame_idx => {
                return Err(Error::Validation(format!(
                    "frame_idx decreases for `{}` in match {match_id}",
                    r.player_id
                )))
            }
            _ => s.push((r.frame_idx, r.x, r.y)),
        }
    }
    let mut tracks = Vec::new();
    let mut breaks = Vec::new();
    let mut n_frames = 0;
    for ((kind, id), samples) in per_entity {
        let (runs, br) = resample_series(&samples, hz as u64);
        breaks.extend(br);
        for (start, positions) in runs {
            let vel = velocities(&positions);
            let states: Vec<EntityState> = positions
                .iter()
                .zip(&vel)
                .map(|(&(x, y), &(vx, vy))| EntityState { x, y, vx, vy })
                .collect();
            n_frames = n_frames.max(start + states.len());
            tracks.push(Track {
                kind,
                player_id: id.to_string(),
                start,
                states,
            });
        }
    }
    breaks.sort_unstable();
    breaks.dedup();
    Ok(ResampledMatch {
        match_id,
        n_frames,
        tracks,
        breaks,
    })
}

/// Mirrors x and vx inside every period in which the focus team defends the
/// +x goal, so the focus team always attacks toward +x.
pub fn normalize_orientation(m: &mut ResampledMatch, period_starts: &[usize]) -> Vec<bool> {
    let mut bounds: Vec<usize> = period_starts.iter().copied().filter(|&f| f < m.n_frames).collect();
    bounds.push(0);
    bounds.sort_unstable();
    bounds.dedup();
    let mut mirrored = Vec::with_capacity(bounds.len());
    for (i, &from) in bounds.iter().enumerate() {
        let to = bounds.get(i + 1).copied().unwrap_or(m.n_frames);
        let mean_x = |kind: EntityKind| {
            let (sum, n) = m
                .tracks_of(kind)
                .flat_map(|t| (from..to).filter_map(move |f| t.at(f)))
                .fold((0.0, 0usize), |(s, n), e| (s + e.x, n + 1));
            (n > 0).then(|| sum / n as f64)
        };
        let own_half = mean_x(EntityKind::AttackerGk).or_else(|| mean_x(EntityKind::AttackerOutfield));
        let flip = own_half.is_some_and(|x| x > 0.0);
        if flip {
            for t in &mut m.tracks {
                for f in from.max(t.start)..to.min(t.end()) {
                    let e = &mut t.states[f - t.start];
                    e.x = -e.x;
                    e.vx = -e.vx;
                }
            }
        }
        mirrored.push(flip);
    }
    mirrored
}

/// Nearest 10 Hz frame to `frame_idx` on a `hz` clock, ties to the earlier frame.
pub fn align_frame(frame_idx: u64, hz: u32) -> usize {
    // ceil((20 * idx - hz) / (2 * hz)), floored at zero.
    let num = 20 * frame_idx as i128 - hz as i128;
    let den = 2 * hz as i128;
    let k = num.div_euclid(den) + i128::from(num.rem_euclid(den) != 0);
    k.max(0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedEvent {
    pub frame: usize,
    pub player_id: String,
    pub event_type: EventType,
    pub side: Option<Side>,
}

pub fn align_events(events: &[EventRecord], hz: u32, teams: &std::collections::HashMap<&str, Side>) -> Vec<AlignedEvent> {
    let mut out: Vec<AlignedEvent> = events
        .iter()
        .map(|e| AlignedEvent {
            frame: align_frame(e.frame_idx, hz),
            player_id: e.player_id.clone(),
            event_type: e.event_type,
            side: teams.get(e.player_id.as_str()).copied(),
        })
        .collect();
    out.sort_by_key(|e| e.frame);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    Goal,
    Loss,
    PeriodEnd,
}

/// A possession on the 10 Hz timeline, frames `start..end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub side: Side,
    pub start: usize,
    pub end: usize,
    pub reason: EndReason,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segmentation {
    pub spans: Vec<Span>,
    pub warnings: Vec<String>,
    pub dropped_at_breaks: usize,
}

/// Splits a match into possession spans from recovery (or a period kick-off
/// credited to a player) to loss, goal or period end.
pub fn segment_possessions(events: &[AlignedEvent], breaks: &[usize]) -> Segmentation {
    let mut seg = Segmentation::default();
    let mut open: Option<(Side, usize)> = None;
    let close = |seg: &mut Segmentation, side: Side, start: usize, end: usize, reason: EndReason| {
        if end <= start {
            return;
        }
        if breaks.iter().any(|&b| b > start && b < end) {
            seg.dropped_at_breaks += 1;
            seg.warnings.push(format!("span {start}..{end} crosses a tracking gap; dropped"));
            return;
        }
        seg.spans.push(Span {
            side,
            start,
            end,
            reason,
        });
    };
    for e in events {
        if e.event_type == EventType::PeriodEnd {
            if let Some((open_side, start)) = open.take() {
                close(&mut seg, open_side, start, e.frame, EndReason::PeriodEnd);
            }
            continue;
        }
        let Some(side) = e.side else {
            if e.event_type != EventType::PeriodStart {
                seg.warnings.push(format!(
                    "{:?} at frame {} by unknown player `{}` ignored",
                    e.event_type, e.frame, e.player_id
                ));
            }
            continue;
        };
        match e.event_type {
            EventType::BallRecovery | EventType::PeriodStart => {
                if let Some((open_side, start)) = open {
                    if open_side == side {
                        seg.warnings.push(format!(
                            "overlapping recovery at frame {} (open since {start}); later one wins",
                            e.frame
                        ));
                    } else {
                        close(&mut seg, open_side, start, e.frame, EndReason::Loss);
                    }
                }
                open = Some((side, e.frame));
            }
            EventType::BallLoss => match open {
                Some((open_side, start)) if open_side == side => {
                    close(&mut seg, side, start, e.frame, EndReason::Loss);
                    open = None;
                }
                _ => seg
                    .warnings
                    .push(format!("ball loss at frame {} outside a possession of that team", e.frame)),
            },
            EventType::Goal => {
                if let Some((open_side, start)) = open.take() {
                    let reason = if open_side == side { EndReason::Goal } else { EndReason::Loss };
                    close(&mut seg, open_side, start, e.frame, reason);
                }
            }
            EventType::Pass | EventType::Shot | EventType::PeriodEnd => {}
        }
    }
    if let Some((_, start)) = open {
        seg.warnings.push(format!("possession open since frame {start} never ends; dropped"));
    }
    seg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub dropped_short: usize,
    pub clipped_long: usize,
    pub dropped_outside_third: usize,
    pub clipped_to_third: usize,
    pub kept: usize,
}

/// Length filter first (drop < 50, keep the last 300), then the attacking
/// third rule: the ball must pass `length / 6` at some frame, and the span is
/// clipped to start there when at least 50 frames remain.
pub fn filter_and_clip<F>(spans: &[Span], pitch: &PitchConfig, ball_x: F) -> (Vec<Span>, FilterStats)
where
    F: Fn(usize) -> Option<f64>,
{
    let mut stats = FilterStats {
        input: spans.len(),
        ..Default::default()
    };
    let third = pitch.attacking_third_x();
    let mut out = Vec::new();
    for s in spans {
        if s.len() < MIN_FRAMES {
            stats.dropped_short += 1;
            continue;
        }
        let mut s = s.clone();
        if s.len() > MAX_FRAMES {
            s.start = s.end - MAX_FRAMES;
            stats.clipped_long += 1;
        }
        let Some(entry) = (s.start..s.end).find(|&f| ball_x(f).is_some_and(|x| x > third)) else {
            stats.dropped_outside_third += 1;
            continue;
        };
        if entry > s.start && s.end - entry >= MIN_FRAMES {
            s.start = entry;
            stats.clipped_to_third += 1;
        }
        out.push(s);
    }
    stats.kept = out.len();
    (out, stats)
}

/// Orders players by (mean y, mean x) over the given window, then by id.
/// Each entry is a player id with its positions over the window.
pub fn assign_agent_slots(players: &[(String, Vec<(f64, f64)>)]) -> Result<Vec<String>> {
    if players.len() != N_AGENTS {
        return Err(Error::Validation(format!(
            "need {N_AGENTS} outfield attackers, found {}",
            players.len()
        )));
    }
    order_by_position(players)
}

pub fn order_by_position(players: &[(String, Vec<(f64, f64)>)]) -> Result<Vec<String>> {
    let mut keyed = Vec::with_capacity(players.len());
    for (id, pos) in players {
        if pos.is_empty() {
            return Err(Error::Validation(format!("player `{id}` has no positions in the slot window")));
        }
        let n = pos.len() as f64;
        let my = pos.iter().map(|p| p.1).sum::<f64>() / n;
        let mx = pos.iter().map(|p| p.0).sum::<f64>() / n;
        keyed.push((my, mx, id.clone()));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    Ok(keyed.into_iter().map(|k| k.2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball_records(hz: u32, n: u64, f: impl Fn(f64) -> (f64, f64)) -> Vec<TrackingRecord> {
        (0..n)
            .map(|i| {
                let t = i as f64 / hz as f64;
                let (x, y) = f(t);
                TrackingRecord {
                    match_id: "m".into(),
                    frame_idx: i,
                    time_s: t,
                    entity_kind: EntityKind::Ball,
                    player_id: String::new(),
                    x,
                    y,
                }
            })
            .collect()
    }

    #[test]
    fn ten_hz_is_identity() {
        let recs = ball_records(10, 30, |t| ((t * 7.3).sin() * 20.0, t.cos()));
        let m = resample_to_10hz(&recs, 10).unwrap();
        assert_eq!(m.tracks.len(), 1);
        for (r, s) in recs.iter().zip(&m.tracks[0].states) {
            assert_eq!((r.x, r.y), (s.x, s.y));
        }
    }

    #[test]
    fn linear_motion_at_25hz_is_exact() {
        let recs = ball_records(25, 101, |t| (2.0 * t, 0.0));
        let m = resample_to_10hz(&recs, 25).unwrap();
        let states = &m.tracks[0].states;
        assert_eq!(states.len(), 41);
        assert!((states[1].x - 0.2).abs() < 1e-12);
        for (k, s) in states.iter().enumerate() {
            assert!((s.x - 0.2 * k as f64).abs() < 1e-12);
            assert!((s.vx - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sinusoid_at_30hz_within_a_centimetre() {
        let f = |t: f64| (3.0 * (1.3 * t).sin(), 2.0 * (0.7 * t).cos());
        let recs = ball_records(30, 301, f);
        let m = resample_to_10hz(&recs, 30).unwrap();
        let max_err = m.tracks[0]
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let (x, y) = f(k as f64 / 10.0);
                (s.x - x).hypot(s.y - y)
            })
            .fold(0.0, f64::max);
        assert!(max_err < 0.01, "{max_err}");
    }

    #[test]
    fn resampling_is_idempotent() {
        let recs = ball_records(25, 200, |t| (t * t * 0.5, (t * 2.0).sin()));
        let once = resample_to_10hz(&recs, 25).unwrap();
        let as_records: Vec<TrackingRecord> = once.tracks[0]
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| TrackingRecord {
                match_id: "m".into(),
                frame_idx: (once.tracks[0].start + k) as u64,
                time_s: k as f64 / 10.0,
                entity_kind: EntityKind::Ball,
                player_id: String::new(),
                x: s.x,
                y: s.y,
            })
            .collect();
        let twice = resample_to_10hz(&as_records, 10).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn long_gap_breaks_the_timeline() {
        let mut recs = ball_records(25, 50, |t| (t, 0.0));
        recs.extend(ball_records(25, 100, |t| (t, 0.0)).into_iter().skip(75));
        let m = resample_to_10hz(&recs, 25).unwrap();
        assert_eq!(m.tracks.len(), 2);
        assert_eq!(m.breaks.len(), 1);
    }

    #[test]
    fn velocity_is_clamped() {
        let v = velocities(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]);
        assert!(v.iter().all(|&(vx, vy)| (vx.hypot(vy) - MAX_SPEED).abs() < 1e-12));
    }

    #[test]
    fn event_alignment_rounds_to_nearest() {
        assert_eq!(align_frame(0, 25), 0);
        assert_eq!(align_frame(1, 25), 0); // 0.04 s
        assert_eq!(align_frame(2, 25), 1); // 0.08 s
        assert_eq!(align_frame(5, 25), 2);
        assert_eq!(align_frame(3, 30), 1);
        assert_eq!(align_frame(7, 10), 7);
        // 0.05 s is a tie between frames 0 and 1 on a 20-per-second clock.
        assert_eq!(align_frame(1, 20), 0);
        assert_eq!(align_frame(3, 20), 1);
    }

    fn ev(frame: usize, side: Side, t: EventType) -> AlignedEvent {
        AlignedEvent {
            frame,
            player_id: format!("{side}"),
            event_type: t,
            side: Some(side),
        }
    }

    #[test]
    fn single_possession_of_80_frames() {
        let seg = segment_possessions(
            &[ev(0, Side::Focus, EventType::BallRecovery), ev(80, Side::Focus, EventType::Goal)],
            &[],
        );
        assert_eq!(seg.spans.len(), 1);
        assert_eq!(seg.spans[0].len(), 80);
        assert_eq!(seg.spans[0].reason, EndReason::Goal);
    }

    #[test]
    fn recovery_loss_recovery_goal() {
        let seg = segment_possessions(
            &[
                ev(0, Side::Focus, EventType::BallRecovery),
                ev(60, Side::Focus, EventType::BallLoss),
                ev(100, Side::Focus, EventType::BallRecovery),
                ev(190, Side::Focus, EventType::Goal),
            ],
            &[],
        );
        let bounds: Vec<_> = seg.spans.iter().map(|s| (s.start, s.end, s.reason)).collect();
        assert_eq!(bounds, vec![(0, 60, EndReason::Loss), (100, 190, EndReason::Goal)]);
        assert!(seg.warnings.is_empty());
    }

    #[test]
    fn overlapping_recovery_later_wins() {
        let seg = segment_possessions(
            &[
                ev(0, Side::Focus, EventType::BallRecovery),
                ev(30, Side::Focus, EventType::BallRecovery),
                ev(100, Side::Focus, EventType::BallLoss),
            ],
            &[],
        );
        assert_eq!(seg.spans.len(), 1);
        assert_eq!(seg.spans[0].start, 30);
        assert_eq!(seg.warnings.len(), 1);
    }

    #[test]
    fn spans_crossing_breaks_are_dropped() {
        let seg = segment_possessions(
            &[ev(0, Side::Focus, EventType::BallRecovery), ev(90, Side::Focus, EventType::BallLoss)],
            &[40],
        );
        assert!(seg.spans.is_empty());
        assert_eq!(seg.dropped_at_breaks, 1);
    }

    fn span(start: usize, end: usize) -> Span {
        Span {
            side: Side::Focus,
            start,
            end,
            reason: EndReason::Loss,
        }
    }

    #[test]
    fn filter_contracts() {
        let pitch = PitchConfig::default();
        let in_third = |_f: usize| Some(30.0);
        let (kept, stats) = filter_and_clip(&[span(0, 40)], &pitch, in_third);
        assert!(kept.is_empty());
        assert_eq!(stats.dropped_short, 1);

        let (kept, stats) = filter_and_clip(&[span(0, 400)], &pitch, in_third);
        assert_eq!(kept[0].len(), 300);
        assert_eq!(kept[0].start, 100);
        assert_eq!(stats.clipped_long, 1);

        let (kept, stats) = filter_and_clip(&[span(0, 120)], &pitch, |_| Some(0.0));
        assert!(kept.is_empty());
        assert_eq!(stats.dropped_outside_third, 1);
    }

    #[test]
    fn clip_to_third_entry_only_when_long_enough() {
        let pitch = PitchConfig::default();
        // Entry at frame 30 of 120: 90 frames remain.
        let ball = |f: usize| Some(if f >= 30 { 20.0 } else { 0.0 });
        let (kept, _) = filter_and_clip(&[span(0, 120)], &pitch, ball);
        assert_eq!((kept[0].start, kept[0].end), (30, 120));
        // Entry at frame 80 of 120: clipping would leave 40, keep whole span.
        let late = |f: usize| Some(if f >= 80 { 20.0 } else { 0.0 });
        let (kept, _) = filter_and_clip(&[span(0, 120)], &pitch, late);
        assert_eq!((kept[0].start, kept[0].end), (0, 120));
    }

    fn players(rows: &[(&str, f64, f64)]) -> Vec<(String, Vec<(f64, f64)>)> {
        rows.iter().map(|&(id, x, y)| (id.to_string(), vec![(x, y); 3])).collect()
    }

    #[test]
    fn slot_ordering_rules() {
        let mut rows: Vec<(String, f64, f64)> = (0..8).map(|i| (format!("z{i}"), 0.0, 10.0 + i as f64)).collect();
        rows.push(("low".into(), 5.0, -20.0));
        rows.push(("high".into(), 5.0, -10.0));
        let refs: Vec<(&str, f64, f64)> = rows.iter().map(|(a, b, c)| (a.as_str(), *b, *c)).collect();
        let slots = assign_agent_slots(&players(&refs)).unwrap();
        assert_eq!(slots[0], "low");
        assert_eq!(slots[1], "high");

        let mut tie = refs.clone();
        tie[8] = ("right", 9.0, -20.0);
        tie[9] = ("left", 1.0, -20.0);
        let slots = assign_agent_slots(&players(&tie)).unwrap();
        assert_eq!(&slots[..2], &["left".to_string(), "right".to_string()]);

        assert!(assign_agent_slots(&players(&refs[..9])).is_err());
    }

    proptest! {
        #[test]
        fn slot_assignment_ignores_input_order(
            coords in prop::collection::vec((-50.0..50.0f64, -30.0..30.0f64), 10),
            perm in Just((0..10).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let base: Vec<(String, Vec<(f64, f64)>)> = coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| (format!("p{i}"), vec![(x, y), (x + 1.0, y - 0.5)]))
                .collect();
            let shuffled: Vec<_> = perm.iter().map(|&i| base[i].clone()).collect();
            prop_assert_eq!(assign_agent_slots(&base).unwrap(), assign_agent_slots(&shuffled).unwrap());
        }
    }
}
