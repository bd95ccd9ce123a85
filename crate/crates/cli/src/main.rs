use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use qpitch_core::actions::write_action_grid;
use qpitch_core::checkpoint::{self, Checkpoint};
use qpitch_core::data_io::{
    check_goal_shots, parse_events_file, parse_indicators_file, parse_tracking_file, roster, write_events, write_tracking,
    EventRecord, IndicatorFile, TrackingRecord,
};
use qpitch_core::gradcheck::run_standard_checks;
use qpitch_core::mdp::{oracle_config, sarsa_oracle, TinyMdp, ORACLE_EPISODES};
use qpitch_core::neural::QNetworkParams;
use qpitch_core::pipeline::{
    load_possessions, process_corpus, save_possessions, split_possessions, train_agents, value_corpus,
};
use qpitch_core::rewards::{load_epv_grid, EpvSurface};
use qpitch_core::synth::generate_corpus;
use qpitch_core::training::{evaluate_losses, parse_loss_log, write_loss_log, EpochLoss, TrainConfig};
use qpitch_core::types::{PitchConfig, Possession, N_AGENTS};
use qpitch_core::valuation::{
    aggregate_valuations, correlation_report, parse_valuations, write_q_dump, write_report, write_valuations, Aggregation,
    ReportRow, ONBALL_RADIUS_M,
};

const ORACLE_TOLERANCE: f64 = 0.05;
const ORACLE_BUDGET_S: f64 = 60.0;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "qpitch", version, about = "Action-value valuation of football players from tracking data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic tracking and events corpus
    Synth(SynthArgs),
    /// Parse and check input files, then print a summary
    Ingest(IngestArgs),
    /// Segment, label and reward possessions
    Preprocess(PreprocessArgs),
    /// Train one Q-network per agent slot
    Train(TrainArgs),
    /// Per-agent loss means and deviations on a split
    Evaluate(EvaluateArgs),
    /// Per-player average Q
    Valuate(ValuateArgs),
    /// Spearman correlation of average Q with external indicators
    Correlate(CorrelateArgs),
    /// Loss and correlation tables plus a plain-text summary
    Report(OutDir),
    /// SARSA oracle and gradient checks
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct OutDir {
    /// Working directory for all artifacts
    #[arg(long, default_value = "qpitch-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct Inputs {
    /// Tracking CSV [default: <out-dir>/tracking.csv]
    #[arg(long)]
    tracking: Option<PathBuf>,
    /// Events CSV [default: <out-dir>/events.csv]
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    dir: OutDir,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total focus-team possessions across all matches
    #[arg(long, default_value_t = 200)]
    possessions: usize,
    #[arg(long, default_value_t = 10)]
    per_match: usize,
    #[arg(long, default_value_t = 0.3)]
    goal_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    concede_rate: f64,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    dir: OutDir,
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    indicators: Vec<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    dir: OutDir,
    #[command(flatten)]
    inputs: Inputs,
    /// EPV grid file; the built-in parametric surface when absent
    #[arg(long)]
    epv_grid: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write each possession's agent-by-frame action grid as CSV
    #[arg(long)]
    dump_actions: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct TrainArgs {
    #[command(flatten)]
    dir: OutDir,
    /// TOML config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Share of possessions held out for evaluation
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SplitSel {
    All,
    Train,
    Test,
}

impl SplitSel {
    fn name(self) -> &'static str {
        match self {
            SplitSel::All => "all",
            SplitSel::Train => "train",
            SplitSel::Test => "test",
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    dir: OutDir,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitSel,
}

#[derive(Args)]
struct ValuateArgs {
    #[command(flatten)]
    dir: OutDir,
    #[arg(long, default_value_t = 10)]
    min_games: usize,
    #[arg(long, default_value = "executed", value_parser = ["executed", "max"])]
    agg: String,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitSel,
    /// Also write the long-format per-frame Q dump
    #[arg(long)]
    q_dump: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    dir: OutDir,
    #[arg(long, required = true)]
    indicators: Vec<PathBuf>,
    /// Metrics to correlate [default: every metric in the indicator files]
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write selftest.json here
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QPITCH_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<qpitch_core::Error>().map_or("error", |c| c.kind());
            eprintln!("{}", json!({ "error": kind, "message": message(&e) }));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined with `: `, skipping causes already quoted by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for link in e.chain().map(|c| c.to_string()) {
        if !out.contains(&link) {
            if !out.is_empty() {
                out += ": ";
            }
            out += &link;
        }
    }
    out
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Valuate(a) => valuate(a),
        Command::Correlate(a) => correlate(a),
        Command::Report(a) => report(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn prepare(dir: &Path, command: &str) -> Result<()> {
    fs::create_dir_all(dir.join("meta")).with_context(|| format!("creating {}", dir.display()))?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = json!({
        "command": command,
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
        "unix_time": secs,
    });
    write_file(&dir.join("meta").join(format!("{command}.json")), |w| writeln!(w, "{meta:#}"))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_file(path, |w| writeln!(w, "{value:#}"))
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "synth")?;
    let matches = generate_corpus(a.seed, a.possessions, a.per_match, a.goal_rate, a.concede_rate)?;
    let hz = matches[0].hz;
    let tracking: Vec<TrackingRecord> = matches.iter().flat_map(|m| m.tracking.iter().cloned()).collect();
    let events: Vec<EventRecord> = matches.iter().flat_map(|m| m.events.iter().cloned()).collect();
    write_file(&dir.join("tracking.csv"), |w| write_tracking(w, hz, &tracking))?;
    write_file(&dir.join("events.csv"), |w| write_events(w, &events))?;
    info!("wrote {} matches ({} tracking rows, {} events)", matches.len(), tracking.len(), events.len());
    Ok(())
}

struct Loaded {
    tracking: Vec<TrackingRecord>,
    tracking_hz: u32,
    events: Vec<EventRecord>,
    events_hz: u32,
    warnings: Vec<String>,
}

fn load_inputs(dir: &Path, inputs: &Inputs) -> Result<Loaded> {
    let tp = inputs.tracking.clone().unwrap_or_else(|| dir.join("tracking.csv"));
    let ep = inputs.events.clone().unwrap_or_else(|| dir.join("events.csv"));
    let t = parse_tracking_file(&tp)?;
    let e = parse_events_file(&ep)?;
    let mut warnings = t.warnings;
    warnings.extend(e.warnings);
    Ok(Loaded {
        tracking_hz: t.hz,
        tracking: t.records,
        events_hz: e.hz.unwrap_or(t.hz),
        events: e.records,
        warnings,
    })
}

fn ingest(a: IngestArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "ingest")?;
    let mut l = load_inputs(dir, &a.inputs)?;
    let teams = roster(&l.tracking);
    l.warnings.extend(check_goal_shots(&l.events, &teams, 10 * u64::from(l.events_hz)));
    let mut per_match: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &l.tracking {
        per_match.entry(&r.match_id).or_default().0 += 1;
    }
    for e in &l.events {
        per_match.entry(&e.match_id).or_default().1 += 1;
    }
    let mut indicators = Vec::new();
    for p in &a.indicators {
        let f = parse_indicators_file(p)?;
        indicators.push(json!({
            "path": p.display().to_string(),
            "rows": f.rows.len(),
            "metrics": f.metric_names(),
        }));
    }
    for w in &l.warnings {
        warn!("{w}");
    }
    let summary = json!({
        "tracking_hz": l.tracking_hz,
        "events_hz": l.events_hz,
        "tracking_rows": l.tracking.len(),
        "events": l.events.len(),
        "matches": per_match.iter().map(|(m, (t, e))| json!({"match_id": m, "tracking_rows": t, "events": e})).collect::<Vec<_>>(),
        "indicators": indicators,
        "warnings": l.warnings,
    });
    write_json(&dir.join("ingest_summary.json"), &summary)?;
    println!("{summary:#}");
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "preprocess")?;
    let l = load_inputs(dir, &a.inputs)?;
    let pitch = PitchConfig::default();
    let epv = match &a.epv_grid {
        Some(p) => load_epv_grid(p, &pitch)?,
        None => EpvSurface::default(),
    };
    let outputs = process_corpus(&l.tracking, l.tracking_hz, &l.events, l.events_hz, &pitch, &epv, a.jobs)?;
    let mut warnings = l.warnings;
    let mut possessions = Vec::new();
    let mut per_match = Vec::new();
    for o in outputs {
        warnings.extend(o.warnings);
        per_match.push(json!({"match_id": o.match_id, "possessions": o.possessions.len(), "stats": o.stats}));
        possessions.extend(o.possessions);
    }
    for w in &warnings {
        warn!("{w}");
    }
    if possessions.is_empty() {
        bail!(qpitch_core::Error::Validation("no possession survived preprocessing".into()));
    }
    save_possessions(&dir.join("possessions.json"), &possessions)?;
    if a.dump_actions {
        let actions_dir = dir.join("actions");
        fs::create_dir_all(&actions_dir)?;
        for p in &possessions {
            write_file(&actions_dir.join(format!("{}.csv", p.possession_id)), |w| write_action_grid(w, &p.actions))?;
        }
    }
    let goals = possessions.iter().filter(|p| p.reward.goal).count();
    let stats = json!({
        "possessions": possessions.len(),
        "goals": goals,
        "frames": possessions.iter().map(Possession::len).sum::<usize>(),
        "matches": per_match,
        "warnings": warnings,
    });
    write_json(&dir.join("preprocess_stats.json"), &stats)?;
    info!("{} possessions ({goals} goals)", possessions.len());
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_toml_str(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lambda1 {
        cfg.lambda1 = v;
    }
    if let Some(v) = a.lambda2 {
        cfg.lambda2 = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_path(dir: &Path, agent: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("agent{agent}.qpck"))
}

fn train(a: TrainArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "train")?;
    let cfg = train_config(&a)?;
    if !(0.0..1.0).contains(&a.test_fraction) {
        bail!(qpitch_core::Error::Config(format!("test fraction {} outside [0, 1)", a.test_fraction)));
    }
    let all = load_possessions(&dir.join("possessions.json"))?;
    let (train_set, test_set) = split_possessions(&all, cfg.seed, a.test_fraction);
    let ids = |v: &[Possession]| v.iter().map(|p| p.possession_id.clone()).collect::<Vec<_>>();
    write_json(
        &dir.join("split.json"),
        &json!({"seed": cfg.seed, "train": ids(&train_set), "test": ids(&test_set)}),
    )?;
    write_file(&dir.join("train_config.toml"), |w| w.write_all(cfg.to_toml_string().as_bytes()))?;
    info!("training {} agents on {} possessions", cfg.agent_ids.len(), train_set.len());

    let outcomes = train_agents(&train_set, &cfg, a.jobs)?;
    fs::create_dir_all(dir.join("checkpoints"))?;
    let hash = cfg.hash();
    let mut log: Vec<EpochLoss> = Vec::new();
    for (agent, o) in outcomes {
        checkpoint::save(
            &checkpoint_path(dir, agent),
            &Checkpoint {
                params: o.params,
                seed: cfg.seed,
                config_hash: hash,
            },
        )?;
        log.extend(o.log);
    }
    log.sort_by_key(|r| (r.epoch, r.agent));
    write_file(&dir.join("loss_log.csv"), |w| write_loss_log(w, &log))
}

fn load_models(dir: &Path) -> Result<Vec<QNetworkParams>> {
    (0..N_AGENTS)
        .map(|k| Ok(checkpoint::load(&checkpoint_path(dir, k))?.params))
        .collect()
}

fn select(dir: &Path, split: SplitSel) -> Result<Vec<Possession>> {
    let all = load_possessions(&dir.join("possessions.json"))?;
    if split == SplitSel::All {
        return Ok(all);
    }
    let s = read_json(&dir.join("split.json"))?;
    let ids: HashSet<&str> = s[split.name()]
        .as_array()
        .ok_or_else(|| anyhow!("split.json has no `{}` list", split.name()))?
        .iter()
        .filter_map(|v| v.as_str())
        .collect();
    Ok(all.into_iter().filter(|p| ids.contains(p.possession_id.as_str())).collect())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "evaluate")?;
    let models = load_models(dir)?;
    let possessions = select(dir, a.split)?;
    if possessions.is_empty() {
        bail!(qpitch_core::Error::Validation(format!("the {} split is empty", a.split.name())));
    }
    let mut rows = Vec::new();
    for (agent, m) in models.iter().enumerate() {
        rows.push((agent, evaluate_losses(m, &possessions, agent)?));
    }
    write_file(&dir.join("eval_losses.csv"), |w| {
        writeln!(w, "agent,split,n,td_mean,td_std,as_mean,as_std")?;
        for (agent, s) in &rows {
            writeln!(
                w,
                "{agent},{},{},{},{},{},{}",
                a.split.name(),
                s.n,
                s.td_mean,
                s.td_std,
                s.as_mean,
                s.as_std
            )?;
        }
        Ok(())
    })
}

fn valuate(a: ValuateArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "valuate")?;
    let mode: Aggregation = a.agg.parse()?;
    let models = load_models(dir)?;
    let possessions = select(dir, a.split)?;
    let grids = value_corpus(&models, &possessions, a.jobs)?;
    let rows = aggregate_valuations(&possessions, &grids, a.min_games, mode, ONBALL_RADIUS_M)?;
    if rows.is_empty() {
        warn!("no player reached {} games", a.min_games);
    }
    if a.q_dump {
        write_file(&dir.join("q_dump.csv"), |w| write_q_dump(w, &grids))?;
    }
    write_file(&dir.join("valuations.csv"), |w| write_valuations(w, &rows))
}

fn correlate(a: CorrelateArgs) -> Result<()> {
    let dir = &a.dir.out_dir;
    prepare(dir, "correlate")?;
    let path = dir.join("valuations.csv");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let vals = parse_valuations(&text, &path.display().to_string())?;
    let files: Vec<IndicatorFile> = a.indicators.iter().map(|p| parse_indicators_file(p)).collect::<Result<_, _>>()?;
    let metrics = if a.metrics.is_empty() {
        let mut m: Vec<String> = files.iter().flat_map(|f| f.metric_names()).map(String::from).collect();
        m.sort();
        m.dedup();
        m
    } else {
        a.metrics
    };
    let rep = correlation_report(&vals, &files, &metrics)?;
    for w in &rep.warnings {
        warn!("{w}");
    }
    write_file(&dir.join("report.csv"), |w| write_report(w, &rep.rows))
}

fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                bail!("malformed report row `{l}`");
            }
            Ok(ReportRow {
                metric: f[0].into(),
                rho: f[1].parse()?,
                n_players: f[2].parse()?,
            })
        })
        .collect()
}

fn report(a: OutDir) -> Result<()> {
    let dir = &a.out_dir;
    prepare(dir, "report")?;
    let log_path = dir.join("loss_log.csv");
    let log_text = fs::read_to_string(&log_path).with_context(|| format!("reading {}", log_path.display()))?;
    let log = parse_loss_log(&log_text, &log_path.display().to_string())?;
    let mut by_agent: BTreeMap<usize, Vec<&EpochLoss>> = BTreeMap::new();
    for r in &log {
        by_agent.entry(r.agent).or_default().push(r);
    }
    let mut summary = String::from("loss (L_total) by agent\nagent  first       last        ratio\n");
    let mut rows = Vec::new();
    for (agent, rs) in &by_agent {
        let first = rs.iter().min_by_key(|r| r.epoch).expect("non-empty");
        let last = rs.iter().max_by_key(|r| r.epoch).expect("non-empty");
        let ratio = last.l_total / first.l_total;
        summary += &format!("{agent:<6} {:<11.6} {:<11.6} {ratio:.4}\n", first.l_total, last.l_total);
        rows.push((*agent, first, last, ratio));
    }
    write_file(&dir.join("loss_summary.csv"), |w| {
        writeln!(w, "agent,first_epoch,last_epoch,first_l_total,last_l_total,last_l_td,last_l_as,last_l_l1,ratio")?;
        for (agent, f, l, ratio) in &rows {
            writeln!(
                w,
                "{agent},{},{},{},{},{},{},{},{ratio}",
                f.epoch, l.epoch, f.l_total, l.l_total, l.l_td, l.l_as, l.l_l1
            )?;
        }
        Ok(())
    })?;

    let eval = dir.join("eval_losses.csv");
    if let Ok(text) = fs::read_to_string(&eval) {
        summary += "\nevaluation (mean +- std per sequence)\nagent  split  n     L_TD                    L_AS\n";
        for l in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() == 7 {
                let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
                summary += &format!(
                    "{:<6} {:<6} {:<5} {:.6} +- {:.6}    {:.6} +- {:.6}\n",
                    f[0],
                    f[1],
                    f[2],
                    num(f[3]),
                    num(f[4]),
                    num(f[5]),
                    num(f[6])
                );
            }
        }
    }

    let rep_path = dir.join("report.csv");
    if let Ok(text) = fs::read_to_string(&rep_path) {
        summary += "\nSpearman correlation with average Q\nmetric                   rho        players\n";
        for r in parse_report(&text)? {
            summary += &format!("{:<24} {:<10.4} {}\n", r.metric, r.rho, r.n_players);
        }
    }
    write_file(&dir.join("report_summary.txt"), |w| w.write_all(summary.as_bytes()))?;
    print!("{summary}");
    Ok(())
}

fn selftest(a: SelftestArgs) -> Result<()> {
    let mdp = TinyMdp::shipped();
    let oracle = sarsa_oracle(&mdp, a.seed, ORACLE_EPISODES, &oracle_config(a.seed))?;
    let grad = run_standard_checks(a.seed)?;
    let oracle_ok = oracle.linf < ORACLE_TOLERANCE && oracle.elapsed.as_secs_f64() < ORACLE_BUDGET_S;
    let grad_ok = grad.small.max_rel_error < GRADCHECK_TOLERANCE && grad.full_sample.max_rel_error < GRADCHECK_TOLERANCE;
    let out = json!({
        "dp_oracle_linf": oracle.linf,
        "dp_oracle_visited_pairs": oracle.visited,
        "dp_oracle_seconds": oracle.elapsed.as_secs_f64(),
        "gradcheck_small_max_rel_error": grad.small.max_rel_error,
        "gradcheck_small_checked": grad.small.checked,
        "gradcheck_full_sample_max_rel_error": grad.full_sample.max_rel_error,
        "gradcheck_full_sample_checked": grad.full_sample.checked,
        "pass": oracle_ok && grad_ok,
    });
    println!("{out}");
    if let Some(dir) = &a.out_dir {
        prepare(dir, "selftest")?;
        write_json(&dir.join("selftest.json"), &out)?;
    }
    if !(oracle_ok && grad_ok) {
        bail!(qpitch_core::Error::Validation(format!(
            "selftest thresholds missed: linf {} (< {ORACLE_TOLERANCE}), gradcheck {} / {} (< {GRADCHECK_TOLERANCE})",
            oracle.linf, grad.small.max_rel_error, grad.full_sample.max_rel_error
        )));
    }
    Ok(())
}
