//! Delimited-text interchange formats for tracking, events and per-player
//! indicators.
//!
//! Every file starts with a tag line (`#fmt=...`) followed by a column header
//! row. Line numbers in errors are 1-based and count the tag line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACKING_FORMAT: &str = "qpitch-tracking-v1";
pub const EVENTS_FORMAT: &str = "qpitch-events-v1";
pub const INDICATORS_FORMAT: &str = "qpitch-indicators-v1";

pub const TRACKING_COLUMNS: [&str; 7] = ["match_id", "frame_idx", "time_s", "entity_kind", "player_id", "x_m", "y_m"];
pub const EVENTS_COLUMNS: [&str; 4] = ["match_id", "frame_idx", "player_id", "event_type"];
pub const INDICATOR_COLUMNS: [&str; 4] = ["player_id", "metric_name", "value", "games_played"];

pub const SUPPORTED_HZ: [u32; 3] = [10, 25, 30];

/// Entity role as seen from the focus team: "attacker" rows belong to the team
/// whose players are valued, "defender" rows to its opponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    AttackerOutfield,
    AttackerGk,
    DefenderOutfield,
    DefenderGk,
    Ball,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::AttackerOutfield => "attacker_outfield",
            EntityKind::AttackerGk => "attacker_gk",
            EntityKind::DefenderOutfield => "defender_outfield",
            EntityKind::DefenderGk => "defender_gk",
            EntityKind::Ball => "ball",
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            EntityKind::AttackerOutfield | EntityKind::AttackerGk => Some(Side::Focus),
            EntityKind::DefenderOutfield | EntityKind::DefenderGk => Some(Side::Opponent),
            EntityKind::Ball => None,
        }
    }

    pub fn is_goalkeeper(self) -> bool {
        matches!(self, EntityKind::AttackerGk | EntityKind::DefenderGk)
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "attacker_outfield" => EntityKind::AttackerOutfield,
            "attacker_gk" => EntityKind::AttackerGk,
            "defender_outfield" => EntityKind::DefenderOutfield,
            "defender_gk" => EntityKind::DefenderGk,
            "ball" => EntityKind::Ball,
            other => return Err(format!("unknown entity_kind `{other}`")),
        })
    }
}

/// Which team a player belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Focus,
    Opponent,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Focus => "focus",
            Side::Opponent => "opponent",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Focus => Side::Opponent,
            Side::Opponent => Side::Focus,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub match_id: String,
    pub frame_idx: u64,
    pub time_s: f64,
    pub entity_kind: EntityKind,
    /// Empty for the ball.
    pub player_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Pass,
    Shot,
    BallRecovery,
    BallLoss,
    Goal,
    PeriodStart,
    PeriodEnd,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Pass => "pass",
            EventType::Shot => "shot",
            EventType::BallRecovery => "ball_recovery",
            EventType::BallLoss => "ball_loss",
            EventType::Goal => "goal",
            EventType::PeriodStart => "period_start",
            EventType::PeriodEnd => "period_end",
        }
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "pass" => EventType::Pass,
            "shot" => EventType::Shot,
            "ball_recovery" => EventType::BallRecovery,
            "ball_loss" => EventType::BallLoss,
            "goal" => EventType::Goal,
            "period_start" => EventType::PeriodStart,
            "period_end" => EventType::PeriodEnd,
            other => return Err(format!("unknown event_type `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub match_id: String,
    pub frame_idx: u64,
    pub player_id: String,
    pub event_type: EventType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub player_id: String,
    pub metric_name: String,
    pub value: f64,
    pub games_played: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingFile {
    pub hz: u32,
    pub records: Vec<TrackingRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventsFile {
    /// Clock of `frame_idx`; `None` means the tracking clock of the same match.
    pub hz: Option<u32>,
    pub records: Vec<EventRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndicatorFile {
    pub rows: Vec<IndicatorRow>,
}

impl IndicatorFile {
    pub fn metric(&self, name: &str) -> BTreeMap<&str, f64> {
        self.rows
            .iter()
            .filter(|r| r.metric_name == name)
            .map(|r| (r.player_id.as_str(), r.value))
            .collect()
    }

    pub fn metric_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.rows.iter().map(|r| r.metric_name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }
}

/// Parses the `#fmt=<tag>,key=value,...` line.
fn parse_tag_line(line: &str, source: &str, expected_fmt: &str) -> Result<HashMap<String, String>> {
    let header_err = || Error::Header(source.to_string(), format!("#fmt={expected_fmt}"));
    let body = line.trim_end_matches(['\r', '\n']).strip_prefix('#').ok_or_else(header_err)?;
    let mut fields = HashMap::new();
    for part in body.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(header_err)?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    if fields.get("fmt").map(String::as_str) != Some(expected_fmt) {
        return Err(header_err());
    }
    Ok(fields)
}

struct Body<R> {
    tags: HashMap<String, String>,
    reader: csv::Reader<R>,
}

fn open_body<R: Read>(input: R, source: &str, fmt: &str, columns: &[&str]) -> Result<Body<BufReader<R>>> {
    let mut buf = BufReader::new(input);
    let mut first = String::new();
    buf.read_line(&mut first).map_err(|e| Error::io(source, e))?;
    if first.is_empty() {
        return Err(Error::Header(source.to_string(), format!("#fmt={fmt}")));
    }
    let tags = parse_tag_line(&first, source, fmt)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(buf);
    let headers = reader.headers().map_err(|e| Error::Parse {
        source_name: source.to_string(),
        line: 2,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != columns {
        return Err(Error::Header(source.to_string(), columns.join(",")));
    }
    Ok(Body { tags, reader })
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, source: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| Error::Parse {
        source_name: source.to_string(),
        line,
        message: format!("missing column `{name}`"),
    })?;
    raw.parse::<T>().map_err(|e| Error::Parse {
        source_name: source.to_string(),
        line,
        message: format!("bad `{name}` value `{raw}`: {e}"),
    })
}

fn finite(v: f64, name: &str, source: &str, line: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse {
            source_name: source.to_string(),
            line,
            message: format!("non-finite `{name}`"),
        })
    }
}

fn rows<'a, R: Read>(
    reader: &'a mut csv::Reader<R>,
    source: &str,
    width: usize,
) -> impl Iterator<Item = Result<(usize, csv::StringRecord)>> + 'a {
    let source = source.to_string();
    reader.records().map(move |r| {
        let rec = r.map_err(|e| Error::Parse {
            source_name: source.clone(),
            line: e.position().map(|p| p.line() as usize + 1).unwrap_or(0),
            message: e.to_string(),
        })?;
        // +1 for the tag line that precedes the CSV body.
        let line = rec.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::Parse {
                source_name: source.clone(),
                line,
                message: format!("expected {width} columns, found {}", rec.len()),
            });
        }
        Ok((line, rec))
    })
}

pub fn parse_tracking<R: Read>(input: R, source: &str) -> Result<TrackingFile> {
    let mut body = open_body(input, source, TRACKING_FORMAT, &TRACKING_COLUMNS)?;
    let hz: u32 = body
        .tags
        .get("hz")
        .and_then(|h| h.parse().ok())
        .filter(|h| SUPPORTED_HZ.contains(h))
        .ok_or_else(|| Error::Header(source.to_string(), format!("#fmt={TRACKING_FORMAT},hz=<10|25|30>")))?;

    let mut records = Vec::new();
    let mut last_frame: HashMap<(String, EntityKind, String), u64> = HashMap::new();
    let mut warnings = Vec::new();
    for row in rows(&mut body.reader, source, TRACKING_COLUMNS.len()) {
        let (line, rec) = row?;
        let entity_kind: EntityKind = field(&rec, 3, "entity_kind", source, line)?;
        let player_id = rec[4].to_string();
        if entity_kind != EntityKind::Ball && player_id.is_empty() {
            return Err(Error::Parse {
                source_name: source.to_string(),
                line,
                message: "player_id is required for players".into(),
            });
        }
        let r = TrackingRecord {
            match_id: rec[0].to_string(),
            frame_idx: field(&rec, 1, "frame_idx", source, line)?,
            time_s: finite(field(&rec, 2, "time_s", source, line)?, "time_s", source, line)?,
            entity_kind,
            player_id,
            x: finite(field(&rec, 5, "x_m", source, line)?, "x_m", source, line)?,
            y: finite(field(&rec, 6, "y_m", source, line)?, "y_m", source, line)?,
        };
        let key = (r.match_id.clone(), r.entity_kind, r.player_id.clone());
        if let Some(&prev) = last_frame.get(&key) {
            if r.frame_idx < prev {
                return Err(Error::Parse {
                    source_name: source.to_string(),
                    line,
                    message: format!("frame_idx {} decreases (previous {prev}) for this entity", r.frame_idx),
                });
            }
            if r.frame_idx > prev + 1 {
                warnings.push(format!(
                    "{source}:{line}: gap of {} frames for {} `{}` in match {}",
                    r.frame_idx - prev - 1,
                    r.entity_kind.as_str(),
                    r.player_id,
                    r.match_id
                ));
            }
        }
        last_frame.insert(key, r.frame_idx);
        records.push(r);
    }
    Ok(TrackingFile { hz, records, warnings })
}

pub fn parse_tracking_file(path: &Path) -> Result<TrackingFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tracking(f, &path.display().to_string())
}

pub fn parse_events<R: Read>(input: R, source: &str) -> Result<EventsFile> {
    let mut body = open_body(input, source, EVENTS_FORMAT, &EVENTS_COLUMNS)?;
    let hz = match body.tags.get("hz") {
        None => None,
        Some(h) => Some(
            h.parse::<u32>()
                .ok()
                .filter(|h| *h > 0)
                .ok_or_else(|| Error::Header(source.to_string(), format!("#fmt={EVENTS_FORMAT}[,hz=<int>]")))?,
        ),
    };
    let mut records = Vec::new();
    for row in rows(&mut body.reader, source, EVENTS_COLUMNS.len()) {
        let (line, rec) = row?;
        records.push(EventRecord {
            match_id: rec[0].to_string(),
            frame_idx: field(&rec, 1, "frame_idx", source, line)?,
            player_id: rec[2].to_string(),
            event_type: field(&rec, 3, "event_type", source, line)?,
        });
    }

    let mut warnings = Vec::new();
    let mut match_order: Vec<&str> = Vec::new();
    let mut last: HashMap<&str, u64> = HashMap::new();
    let mut unsorted: HashSet<String> = HashSet::new();
    for r in &records {
        match last.get(r.match_id.as_str()) {
            None => match_order.push(&r.match_id),
            Some(&prev) if r.frame_idx < prev => {
                unsorted.insert(r.match_id.clone());
            }
            _ => {}
        }
        last.insert(&r.match_id, r.frame_idx);
    }
    let rank: HashMap<String, usize> = match_order.iter().enumerate().map(|(i, m)| (m.to_string(), i)).collect();
    if !unsorted.is_empty() {
        let mut ids: Vec<_> = unsorted.into_iter().collect();
        ids.sort();
        warnings.push(format!("{source}: events out of frame order in match(es) {}; re-sorted", ids.join(", ")));
        records.sort_by_key(|r| (rank[&r.match_id], r.frame_idx));
    }
    Ok(EventsFile { hz, records, warnings })
}

pub fn parse_events_file(path: &Path) -> Result<EventsFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events(f, &path.display().to_string())
}

pub fn parse_indicators<R: Read>(input: R, source: &str) -> Result<IndicatorFile> {
    let mut body = open_body(input, source, INDICATORS_FORMAT, &INDICATOR_COLUMNS)?;
    let mut rows_out = Vec::new();
    let mut seen = HashSet::new();
    for row in rows(&mut body.reader, source, INDICATOR_COLUMNS.len()) {
        let (line, rec) = row?;
        let r = IndicatorRow {
            player_id: rec[0].to_string(),
            metric_name: rec[1].to_string(),
            value: finite(field(&rec, 2, "value", source, line)?, "value", source, line)?,
            games_played: field(&rec, 3, "games_played", source, line)?,
        };
        if !seen.insert((r.player_id.clone(), r.metric_name.clone())) {
            return Err(Error::Parse {
                source_name: source.to_string(),
                line,
                message: format!("duplicate row for player `{}` metric `{}`", r.player_id, r.metric_name),
            });
        }
        rows_out.push(r);
    }
    Ok(IndicatorFile { rows: rows_out })
}

pub fn parse_indicators_file(path: &Path) -> Result<IndicatorFile> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_indicators(f, &path.display().to_string())
}

pub fn write_tracking<W: Write>(mut out: W, hz: u32, records: &[TrackingRecord]) -> std::io::Result<()> {
    writeln!(out, "#fmt={TRACKING_FORMAT},hz={hz}")?;
    writeln!(out, "{}", TRACKING_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.match_id,
            r.frame_idx,
            r.time_s,
            r.entity_kind.as_str(),
            r.player_id,
            r.x,
            r.y
        )?;
    }
    Ok(())
}

pub fn write_events<W: Write>(mut out: W, records: &[EventRecord]) -> std::io::Result<()> {
    writeln!(out, "#fmt={EVENTS_FORMAT}")?;
    writeln!(out, "{}", EVENTS_COLUMNS.join(","))?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.match_id, r.frame_idx, r.player_id, r.event_type.as_str())?;
    }
    Ok(())
}

pub fn write_indicators<W: Write>(mut out: W, rows: &[IndicatorRow]) -> std::io::Result<()> {
    writeln!(out, "#fmt={INDICATORS_FORMAT}")?;
    writeln!(out, "{}", INDICATOR_COLUMNS.join(","))?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.player_id, r.metric_name, r.value, r.games_played)?;
    }
    Ok(())
}

/// Team membership of every player seen in tracking, keyed by player id.
pub fn roster(records: &[TrackingRecord]) -> HashMap<&str, Side> {
    records
        .iter()
        .filter_map(|r| r.entity_kind.side().map(|s| (r.player_id.as_str(), s)))
        .collect()
}

/// Warns about goals that are not preceded by a shot of the same team within
/// `window_frames` (in the events' own clock).
pub fn check_goal_shots(events: &[EventRecord], teams: &HashMap<&str, Side>, window_frames: u64) -> Vec<String> {
    let mut warnings = Vec::new();
    for (i, goal) in events.iter().enumerate().filter(|(_, e)| e.event_type == EventType::Goal) {
        let team = teams.get(goal.player_id.as_str());
        let has_shot = events[..i].iter().rev().take_while(|e| e.match_id == goal.match_id).any(|e| {
            e.event_type == EventType::Shot
                && goal.frame_idx.saturating_sub(e.frame_idx) <= window_frames
                && teams.get(e.player_id.as_str()) == team
        });
        if !has_shot {
            warnings.push(format!(
                "goal by `{}` at frame {} in match {} has no preceding shot by the same team",
                goal.player_id, goal.frame_idx, goal.match_id
            ));
        }
    }
    warnings
}
