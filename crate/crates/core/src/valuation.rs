//! Player valuation from trained agent models, and rank correlation against
//! external indicators.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data_io::IndicatorFile;
use crate::error::{Error, Result};
use crate::neural::{forward_flat, QNetworkParams};
use crate::training::agent_inputs;
use crate::types::{Action, Frame, PlayerValuation, Possession, ATTACKER_GK_SLOT, N_ACTIONS, N_AGENTS};

pub const ONBALL_RADIUS_M: f64 = 1.5;
pub const ONBALL_VS_OFFBALL: &str = "onball_vs_offball";

/// Q-vectors for every agent and frame of one possession.
#[derive(Debug, Clone, PartialEq)]
pub struct QGrid {
    pub possession_id: String,
    pub n_frames: usize,
    /// `agent x frame x action`, row-major.
    pub values: Vec<f64>,
}

impl QGrid {
    pub fn q(&self, agent: usize, frame: usize) -> &[f64] {
        let at = (agent * self.n_frames + frame) * N_ACTIONS;
        &self.values[at..at + N_ACTIONS]
    }
}

pub fn value_possession(models: &[QNetworkParams], possession: &Possession) -> Result<QGrid> {
    if models.len() != N_AGENTS {
        return Err(Error::Structural(format!("{} models, expected {N_AGENTS}", models.len())));
    }
    if possession.agent_player_map.len() != N_AGENTS {
        return Err(Error::Structural(format!(
            "possession {} maps {} agents",
            possession.possession_id,
            possession.agent_player_map.len()
        )));
    }
    let n = possession.len();
    let mut values = Vec::with_capacity(N_AGENTS * n * N_ACTIONS);
    for (slot, model) in models.iter().enumerate() {
        if model.dims.output != N_ACTIONS {
            return Err(Error::Structural(format!("model {slot} outputs {} values", model.dims.output)));
        }
        let trace = forward_flat(model, agent_inputs(possession, slot)?)?;
        values.extend_from_slice(trace.q());
    }
    Ok(QGrid {
        possession_id: possession.possession_id.clone(),
        n_frames: n,
        values,
    })
}

/// Whether `agent_slot` has the ball. An event attribution on the frame wins;
/// otherwise the agent must be the attacker nearest the ball (goalkeeper
/// included, ties to the lower slot) and within `radius` metres.
pub fn classify_onball(frame: &Frame, agent_slot: usize, radius: f64) -> bool {
    if let Some(s) = frame.on_ball_attacker {
        return s == agent_slot;
    }
    let ball = frame.ball();
    let mut best = (f64::INFINITY, usize::MAX);
    for slot in 0..=ATTACKER_GK_SLOT {
        let d = frame.agent(slot).distance_to(ball);
        if d < best.0 {
            best = (d, slot);
        }
    }
    best.1 == agent_slot && best.0 <= radius
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Aggregation {
    /// Q of the action the player actually took.
    #[default]
    Executed,
    /// Largest Q over all 14 actions.
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "executed" => Ok(Self::Executed),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!("unknown aggregation `{other}` (executed or max)"))),
        }
    }
}

pub fn pick_q(q: &[f64], executed: Action, mode: Aggregation) -> f64 {
    match mode {
        Aggregation::Executed => q[executed.index()],
        Aggregation::Max => q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Default)]
struct Acc {
    games: BTreeSet<String>,
    sum_on: f64,
    sum_off: f64,
    n_on: usize,
    n_off: usize,
}

/// Averages per player over every frame they occupy an agent slot, split by
/// on-/off-ball. Possessions are reduced in (match, possession id) order so the
/// result does not depend on input order.
pub fn aggregate_valuations(
    possessions: &[Possession],
    grids: &[QGrid],
    min_games: usize,
    mode: Aggregation,
    radius: f64,
) -> Result<Vec<PlayerValuation>> {
    if possessions.is_empty() {
        return Err(Error::Validation("no valued possessions to aggregate".into()));
    }
    if possessions.len() != grids.len() {
        return Err(Error::Structural(format!(
            "{} possessions but {} Q grids",
            possessions.len(),
            grids.len()
        )));
    }
    let mut order: Vec<usize> = (0..possessions.len()).collect();
    order.sort_by(|&a, &b| {
        (&possessions[a].match_id, &possessions[a].possession_id).cmp(&(&possessions[b].match_id, &possessions[b].possession_id))
    });
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for i in order {
        let (p, g) = (&possessions[i], &grids[i]);
        if g.possession_id != p.possession_id || g.n_frames != p.len() {
            return Err(Error::Structural(format!("Q grid does not belong to possession {}", p.possession_id)));
        }
        p.validate()?;
        for (slot, player) in p.agent_player_map.iter().enumerate() {
            let a = acc.entry(player.as_str()).or_default();
            a.games.insert(p.match_id.clone());
            for (t, frame) in p.frames.iter().enumerate() {
                let q = pick_q(g.q(slot, t), p.actions[slot][t], mode);
                if classify_onball(frame, slot, radius) {
                    a.sum_on += q;
                    a.n_on += 1;
                } else {
                    a.sum_off += q;
                    a.n_off += 1;
                }
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    Ok(acc
        .into_iter()
        .filter(|(_, a)| a.games.len() >= min_games)
        .map(|(player, a)| PlayerValuation {
            player_id: player.to_string(),
            games_played: a.games.len(),
            avg_q: mean(a.sum_on + a.sum_off, a.n_on + a.n_off),
            avg_q_onball: mean(a.sum_on, a.n_on),
            avg_q_offball: mean(a.sum_off, a.n_off),
            frames_onball: a.n_on,
            frames_offball: a.n_off,
        })
        .collect())
}

/// Fractional ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Structural(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!("{} pairs, need at least 3", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("one of the inputs is constant".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub rho: f64,
    pub n_players: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

/// One row per requested metric (avg_q against the indicator), then the
/// built-in on-ball vs off-ball row when at least 3 players have both.
pub fn correlation_report(valuations: &[PlayerValuation], indicators: &[IndicatorFile], metrics: &[String]) -> Result<CorrelationReport> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let valued: BTreeMap<&str, &PlayerValuation> = valuations.iter().map(|v| (v.player_id.as_str(), v)).collect();
    for metric in metrics {
        let mut values: BTreeMap<&str, f64> = BTreeMap::new();
        for f in indicators {
            values.extend(f.metric(metric));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut unmatched = Vec::new();
        for (player, v) in &values {
            match valued.get(player) {
                Some(pv) if pv.avg_q.is_finite() => {
                    x.push(pv.avg_q);
                    y.push(*v);
                }
                _ => unmatched.push(*player),
            }
        }
        if !unmatched.is_empty() {
            warnings.push(format!(
                "{metric}: {} indicator players have no valuation ({})",
                unmatched.len(),
                unmatched.join(" ")
            ));
        }
        if x.len() < 3 {
            return Err(Error::UndefinedCorrelation(format!(
                "metric `{metric}` overlaps {} valued players, need at least 3",
                x.len()
            )));
        }
        let rho = spearman_rho(&x, &y).map_err(|e| match e {
            Error::UndefinedCorrelation(m) => Error::UndefinedCorrelation(format!("metric `{metric}`: {m}")),
            other => other,
        })?;
        rows.push(ReportRow {
            metric: metric.clone(),
            rho,
            n_players: x.len(),
        });
    }
    let both: Vec<&PlayerValuation> = valuations.iter().filter(|v| v.frames_onball > 0 && v.frames_offball > 0).collect();
    let on: Vec<f64> = both.iter().map(|v| v.avg_q_onball).collect();
    let off: Vec<f64> = both.iter().map(|v| v.avg_q_offball).collect();
    match spearman_rho(&on, &off) {
        Ok(rho) => rows.push(ReportRow {
            metric: ONBALL_VS_OFFBALL.into(),
            rho,
            n_players: both.len(),
        }),
        Err(e) => warnings.push(format!("{ONBALL_VS_OFFBALL}: {e}")),
    }
    Ok(CorrelationReport { rows, warnings })
}

pub const VALUATIONS_HEADER: &str = "player_id,games,frames_on,frames_off,avg_q,avg_q_onball,avg_q_offball";
pub const REPORT_HEADER: &str = "metric,rho,n_players";
pub const Q_DUMP_HEADER: &str = "possession_id,frame,agent,action,q";

pub fn write_valuations<W: Write>(mut out: W, rows: &[PlayerValuation]) -> std::io::Result<()> {
    writeln!(out, "{VALUATIONS_HEADER}")?;
    for v in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            v.player_id, v.games_played, v.frames_onball, v.frames_offball, v.avg_q, v.avg_q_onball, v.avg_q_offball
        )?;
    }
    Ok(())
}

pub fn parse_valuations(text: &str, source: &str) -> Result<Vec<PlayerValuation>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(VALUATIONS_HEADER) {
        return Err(Error::Header(source.into(), VALUATIONS_HEADER.into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |m: String| Error::Parse {
                source_name: source.into(),
                line: i + 2,
                message: m,
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            Ok(PlayerValuation {
                player_id: f[0].to_string(),
                games_played: int(f[1])?,
                frames_onball: int(f[2])?,
                frames_offball: int(f[3])?,
                avg_q: num(f[4])?,
                avg_q_onball: num(f[5])?,
                avg_q_offball: num(f[6])?,
            })
        })
        .collect()
}

pub fn write_report<W: Write>(mut out: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.metric, r.rho, r.n_players)?;
    }
    Ok(())
}

/// Long-format dump of every counterfactual Q-value.
pub fn write_q_dump<W: Write>(mut out: W, grids: &[QGrid]) -> std::io::Result<()> {
    writeln!(out, "{Q_DUMP_HEADER}")?;
    for g in grids {
        for agent in 0..N_AGENTS {
            for t in 0..g.n_frames {
                for (a, q) in Action::ALL.iter().zip(g.q(agent, t)) {
                    writeln!(out, "{},{},{},{},{}", g.possession_id, t, agent, a, q)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::IndicatorRow;
    use crate::neural::{Architecture, NetDims};
    use crate::rng::stream;
    use crate::types::tests_support::possession;
    use crate::types::{EntityState, BALL_SLOT, N_ENTITIES};
    use proptest::prelude::*;
    use rand::Rng;

    fn frame_with(ball: (f64, f64), agents: &[(usize, f64, f64)]) -> Frame {
        let mut es = vec![
            EntityState {
                x: 40.0,
                y: 30.0,
                vx: 0.0,
                vy: 0.0
            };
            N_ENTITIES
        ];
        es[BALL_SLOT] = EntityState {
            x: ball.0,
            y: ball.1,
            vx: 0.0,
            vy: 0.0,
        };
        for &(s, x, y) in agents {
            es[s] = EntityState { x, y, vx: 0.0, vy: 0.0 };
        }
        Frame::new(0.0, es).unwrap()
    }

    #[test]
    fn nearest_within_radius_is_onball() {
        let f = frame_with((0.0, 0.0), &[(4, 0.5, 0.0), (2, 3.5, 0.0)]);
        assert!(classify_onball(&f, 4, ONBALL_RADIUS_M));
        assert!(!classify_onball(&f, 2, ONBALL_RADIUS_M));
    }

    #[test]
    fn nobody_close_means_all_offball() {
        let f = frame_with((0.0, 0.0), &[(4, 2.0, 0.0)]);
        assert!((0..N_AGENTS).all(|s| !classify_onball(&f, s, ONBALL_RADIUS_M)));
    }

    #[test]
    fn event_attribution_overrides_distance() {
        let mut f = frame_with((0.0, 0.0), &[(4, 0.5, 0.0), (7, 20.0, 0.0)]);
        f.on_ball_attacker = Some(7);
        assert!(classify_onball(&f, 7, ONBALL_RADIUS_M));
        assert!(!classify_onball(&f, 4, ONBALL_RADIUS_M));
    }

    #[test]
    fn zero_models_give_zero_grids_of_the_right_shape() {
        let models = vec![QNetworkParams::zeros(Architecture::Gru, NetDims::default()); N_AGENTS];
        let g = value_possession(&models, &possession("p", 60)).unwrap();
        assert_eq!(g.values.len(), N_AGENTS * 60 * N_ACTIONS);
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_matches_direct_forward() {
        let models: Vec<QNetworkParams> = (0..N_AGENTS)
            .map(|k| QNetworkParams::init(Architecture::Gru, NetDims::default(), &mut stream(k as u64, "v")))
            .collect();
        let mut p = possession("p", 55);
        p.actions[3][10] = Action::Pass;
        let g = value_possession(&models, &p).unwrap();
        let tr = forward_flat(&models[3], agent_inputs(&p, 3).unwrap()).unwrap();
        for t in 0..55 {
            let a = p.actions[3][t].index();
            assert_eq!(g.q(3, t)[a].to_bits(), tr.q()[t * N_ACTIONS + a].to_bits());
        }
        assert!(value_possession(&models[..9], &p).is_err());
    }

    fn constant_grid(p: &Possession, f: impl Fn(usize, usize) -> f64) -> QGrid {
        let mut values = Vec::new();
        for agent in 0..N_AGENTS {
            for t in 0..p.len() {
                for _ in 0..N_ACTIONS {
                    values.push(f(agent, t));
                }
            }
        }
        QGrid {
            possession_id: p.possession_id.clone(),
            n_frames: p.len(),
            values,
        }
    }

    #[test]
    fn mean_of_executed_q() {
        let p = possession("p", 50);
        let g = constant_grid(&p, |_, t| if t % 2 == 0 { 0.2 } else { 0.4 });
        let v = aggregate_valuations(&[p], &[g], 1, Aggregation::Executed, ONBALL_RADIUS_M).unwrap();
        assert!((v[0].avg_q - 0.3).abs() < 1e-12);
    }

    #[test]
    fn min_games_filter() {
        let mut ps = Vec::new();
        for m in 0..9 {
            let mut p = possession(&format!("p{m}"), 50);
            p.match_id = format!("m{m}");
            ps.push(p);
        }
        let gs: Vec<QGrid> = ps.iter().map(|p| constant_grid(p, |_, _| 0.1)).collect();
        assert!(aggregate_valuations(&ps, &gs, 10, Aggregation::Executed, ONBALL_RADIUS_M).unwrap().is_empty());
        let v = aggregate_valuations(&ps, &gs, 9, Aggregation::Executed, ONBALL_RADIUS_M).unwrap();
        assert_eq!(v.len(), N_AGENTS);
        assert!(v.iter().all(|x| x.games_played == 9));
        assert!(aggregate_valuations(&[], &[], 1, Aggregation::Executed, ONBALL_RADIUS_M).is_err());
    }

    #[test]
    fn weighted_recombination_and_order_independence() {
        let mut rng = stream(4, "agg");
        let mut ps = Vec::new();
        let mut gs = Vec::new();
        for k in 0..6 {
            let mut p = possession(&format!("p{k}"), 50);
            p.match_id = format!("m{}", k % 3);
            for f in p.frames.iter_mut().step_by(3) {
                f.on_ball_attacker = Some(rng.gen_range(0..N_AGENTS));
            }
            let vals: Vec<f64> = (0..N_AGENTS * 50 * N_ACTIONS).map(|_| rng.gen_range(-1.0..1.0)).collect();
            gs.push(QGrid {
                possession_id: p.possession_id.clone(),
                n_frames: 50,
                values: vals,
            });
            ps.push(p);
        }
        let v = aggregate_valuations(&ps, &gs, 1, Aggregation::Executed, ONBALL_RADIUS_M).unwrap();
        for x in &v {
            let (n_on, n_off) = (x.frames_onball as f64, x.frames_offball as f64);
            let recombined = (n_on * x.avg_q_onball + n_off * x.avg_q_offball) / (n_on + n_off);
            assert!((recombined - x.avg_q).abs() < 1e-12);
        }
        ps.reverse();
        gs.reverse();
        assert_eq!(aggregate_valuations(&ps, &gs, 1, Aggregation::Executed, ONBALL_RADIUS_M).unwrap(), v);
        let vmax = aggregate_valuations(&ps, &gs, 1, Aggregation::Max, ONBALL_RADIUS_M).unwrap();
        assert!(vmax.iter().zip(&v).all(|(a, b)| a.avg_q >= b.avg_q));
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 90.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[9.0, 5.0, 1.0, 0.0]).unwrap(), -1.0);
        // Ranks of x = [1, 2.5, 2.5, 4], y = [1, 2, 3, 4].
        let rx = [1.0, 2.5, 2.5, 4.0];
        let ry = [1.0, 2.0, 3.0, 4.0];
        let expected = {
            let (mx, my) = (2.5, 2.5);
            let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
            let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
            sxy / (sxx * syy).sqrt()
        };
        let got = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(matches!(spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(spearman_rho(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(matches!(spearman_rho(&[1.0, f64::NAN, 2.0], &[1.0, 2.0, 3.0]), Err(Error::NonFinite(_))));
    }

    fn valuations(qs: &[f64]) -> Vec<PlayerValuation> {
        qs.iter()
            .enumerate()
            .map(|(i, &q)| PlayerValuation {
                player_id: format!("P{i:02}"),
                games_played: 10,
                avg_q: q,
                avg_q_onball: q * 2.0,
                avg_q_offball: q - 0.1 * i as f64,
                frames_onball: 5,
                frames_offball: 50,
            })
            .collect()
    }

    fn indicator(metric: &str, vals: &[(String, f64)]) -> IndicatorFile {
        IndicatorFile {
            rows: vals
                .iter()
                .map(|(p, v)| IndicatorRow {
                    player_id: p.clone(),
                    metric_name: metric.into(),
                    value: *v,
                    games_played: 10,
                })
                .collect(),
        }
    }

    #[test]
    fn report_self_and_negated_correlation() {
        let v = valuations(&[0.1, 0.5, 0.3, 0.9, 0.2]);
        let same: Vec<(String, f64)> = v.iter().map(|x| (x.player_id.clone(), x.avg_q)).collect();
        let neg: Vec<(String, f64)> = v.iter().map(|x| (x.player_id.clone(), -x.avg_q)).collect();
        let mut extra = neg.clone();
        extra.push(("ghost".into(), 1.0));
        let files = [indicator("same", &same), indicator("neg", &extra)];
        let r = correlation_report(&v, &files, &["same".into(), "neg".into()]).unwrap();
        assert_eq!(r.rows[0].rho, 1.0);
        assert_eq!(r.rows[1].rho, -1.0);
        assert_eq!(r.rows[1].n_players, 5);
        assert_eq!(r.rows[2].metric, ONBALL_VS_OFFBALL);
        assert!(r.warnings.iter().any(|w| w.contains("ghost")));
        let err = correlation_report(&v, &files, &["missing".into()]).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn csv_round_trip() {
        let v = valuations(&[0.25, -0.5, 0.125]);
        let mut buf = Vec::new();
        write_valuations(&mut buf, &v).unwrap();
        assert_eq!(parse_valuations(std::str::from_utf8(&buf).unwrap(), "v").unwrap(), v);
    }

    proptest! {
        #[test]
        fn rank_invariance(xs in prop::collection::vec(-100i32..100, 3..30), ys in prop::collection::vec(-100i32..100, 30)) {
            let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = ys[..x.len()].iter().map(|&v| v as f64).collect();
            let tx: Vec<f64> = x.iter().map(|v| (v / 50.0).exp() * 3.0 + 1.0).collect();
            match (spearman_rho(&x, &y), spearman_rho(&tx, &y)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
