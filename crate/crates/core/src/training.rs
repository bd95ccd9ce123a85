//! Semi-gradient SARSA with action supervision and L1 regularization.
//!
//! Per sequence of length N with executed actions `a_t`:
//!
//! ```text
//! L_TD = sum_t (r_{t+1} + gamma * Q(s_{t+1}, a_{t+1}) - Q(s_t, a_t))^2
//! L_AS = -sum_t log softmax(Q(s_t, .))[a_t]
//! ```
//!
//! with `r` zero except after the last step, and `Q(s_{N+1}, .) = 0`. The
//! bootstrap target is held constant when differentiating. A batch of B whole
//! sequences minimizes `(1/B) sum (L_TD + lambda1 L_AS) + lambda2 * sum|theta|`.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::{
    adam_step, backward_into, forward_flat, log_softmax, softmax, AdamConfig, AdamState, Architecture, NetDims,
    QNetworkParams, HIDDEN_DIM,
};
use crate::rng::stream;
use crate::types::{flatten_state_into, Possession, INPUT_DIM, N_ACTIONS, N_AGENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub agent_ids: Vec<usize>,
    pub learning_rate: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.01,
            lambda2: 0.1,
            gamma: 1.0,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            agent_ids: (0..N_AGENTS).collect(),
            learning_rate: AdamConfig::default().lr,
            hidden: HIDDEN_DIM,
        }
    }
}

impl TrainConfig {
    /// Parses the `key = value` config file (TOML syntax); absent keys keep defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config("epochs, batch_size and hidden must be at least 1".into()));
        }
        let mut seen = [false; N_AGENTS];
        for &a in &self.agent_ids {
            if a >= N_AGENTS || seen[a] {
                return Err(Error::Config(format!("agent id {a} is out of range or repeated")));
            }
            seen[a] = true;
        }
        Ok(())
    }

    /// sha256 of the canonical TOML rendering.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml_string().as_bytes()).into()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// One training episode in the network's input convention.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSequence {
    pub id: String,
    /// Row-major `steps x width`.
    pub inputs: Vec<f64>,
    pub actions: Vec<usize>,
    pub terminal_reward: f64,
}

impl TrainSequence {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// State (92) followed by the one-hot of the agent's previous action (zero at t = 0).
pub fn agent_inputs(p: &Possession, slot: usize) -> Result<Vec<f64>> {
    let labels = p
        .actions
        .get(slot)
        .filter(|a| a.len() == p.frames.len())
        .ok_or_else(|| Error::Validation(format!("possession {} has no action labels for agent {slot}", p.possession_id)))?;
    let mut out = Vec::with_capacity(p.frames.len() * INPUT_DIM);
    for (t, f) in p.frames.iter().enumerate() {
        flatten_state_into(f, &mut out)?;
        match t.checked_sub(1) {
            Some(prev) => out.extend_from_slice(&labels[prev].one_hot()),
            None => out.extend_from_slice(&[0.0; N_ACTIONS]),
        }
    }
    Ok(out)
}

pub fn agent_sequence(p: &Possession, slot: usize) -> Result<TrainSequence> {
    let inputs = agent_inputs(p, slot)?;
    Ok(TrainSequence {
        id: p.possession_id.clone(),
        inputs,
        actions: p.actions[slot].iter().map(|a| a.index()).collect(),
        terminal_reward: p.reward.terminal_reward()?,
    })
}

fn check_lengths<R: AsRef<[f64]>>(q_seq: &[R], actions: &[usize]) -> Result<()> {
    if q_seq.len() != actions.len() {
        return Err(Error::Structural(format!(
            "{} Q-vectors for {} actions",
            q_seq.len(),
            actions.len()
        )));
    }
    if q_seq.is_empty() {
        return Err(Error::Structural("empty sequence".into()));
    }
    for (q, &a) in q_seq.iter().zip(actions) {
        if a >= q.as_ref().len() {
            return Err(Error::Structural(format!("action index {a} outside Q-vector")));
        }
    }
    Ok(())
}

/// Bootstrap targets `r_{t+1} + gamma * Q(s_{t+1}, a_{t+1})`.
pub fn td_targets<R: AsRef<[f64]>>(q_seq: &[R], actions: &[usize], terminal_reward: f64, gamma: f64) -> Result<Vec<f64>> {
    check_lengths(q_seq, actions)?;
    let n = actions.len();
    Ok((0..n)
        .map(|t| {
            if t + 1 < n {
                gamma * q_seq[t + 1].as_ref()[actions[t + 1]]
            } else {
                terminal_reward
            }
        })
        .collect())
}

/// Undiscounted TD loss.
pub fn td_loss<R: AsRef<[f64]>>(q_seq: &[R], actions: &[usize], terminal_reward: f64) -> Result<f64> {
    td_loss_gamma(q_seq, actions, terminal_reward, 1.0)
}

pub fn td_loss_gamma<R: AsRef<[f64]>>(q_seq: &[R], actions: &[usize], terminal_reward: f64, gamma: f64) -> Result<f64> {
    let targets = td_targets(q_seq, actions, terminal_reward, gamma)?;
    Ok(td_loss_with_targets(q_seq, actions, &targets))
}

/// TD loss against fixed targets; its gradient is the semi-gradient.
pub fn td_loss_with_targets<R: AsRef<[f64]>>(q_seq: &[R], actions: &[usize], targets: &[f64]) -> f64 {
    q_seq
        .iter()
        .zip(actions)
        .zip(targets)
        .map(|((q, &a), y)| (y - q.as_ref()[a]).powi(2))
        .sum()
}

pub fn action_supervision_loss<R: AsRef<[f64]>>(q_seq: &[R], actions: &[usize]) -> Result<f64> {
    check_lengths(q_seq, actions)?;
    Ok(q_seq.iter().zip(actions).map(|(q, &a)| -log_softmax(q.as_ref())[a]).sum())
}

pub fn l1_loss(params: &[f64]) -> f64 {
    params.iter().map(|p| p.abs()).sum()
}

/// Per-sequence loss terms and their gradient with respect to the Q outputs.
#[derive(Debug, Clone)]
pub struct SequenceLoss {
    pub td: f64,
    pub action_supervision: f64,
    /// `d(L_TD + lambda1 * L_AS) / dQ`, row-major `steps x actions`.
    pub dq: Vec<f64>,
}

pub fn sequence_loss(q: &[f64], width: usize, actions: &[usize], terminal_reward: f64, lambda1: f64, gamma: f64) -> Result<SequenceLoss> {
    let rows: Vec<&[f64]> = q.chunks_exact(width).collect();
    let targets = td_targets(&rows, actions, terminal_reward, gamma)?;
    let mut dq = vec![0.0; q.len()];
    let mut td = 0.0;
    let mut ls = 0.0;
    for (t, (row, &a)) in rows.iter().zip(actions).enumerate() {
        let delta = targets[t] - row[a];
        td += delta * delta;
        let g = &mut dq[t * width..(t + 1) * width];
        g[a] += -2.0 * delta;
        ls -= log_softmax(row)[a];
        if lambda1 != 0.0 {
            for (gi, p) in g.iter_mut().zip(softmax(row)) {
                *gi += lambda1 * p;
            }
            g[a] -= lambda1;
        }
    }
    Ok(SequenceLoss {
        td,
        action_supervision: ls,
        dq,
    })
}

/// Loss of one mini-batch, evaluated before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub td_sum: f64,
    pub as_sum: f64,
    pub l1: f64,
    /// `(td_sum + lambda1 * as_sum) / B + lambda2 * l1`.
    pub total: f64,
}

/// Writes the gradient of the batch objective into `grads` (resized and
/// overwritten). Sequence gradients are summed in batch order.
pub fn batch_gradient_into(
    params: &QNetworkParams,
    batch: &[&TrainSequence],
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    grads: &mut Vec<f64>,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    grads.clear();
    grads.resize(params.len(), 0.0);
    let scale = 1.0 / batch.len() as f64;
    let (mut td_sum, mut as_sum) = (0.0, 0.0);
    for s in batch {
        let trace = forward_flat(params, s.inputs.clone())?;
        let mut l = sequence_loss(trace.q(), params.dims.output, &s.actions, s.terminal_reward, lambda1, gamma)?;
        td_sum += l.td;
        as_sum += l.action_supervision;
        l.dq.iter_mut().for_each(|g| *g *= scale);
        backward_into(params, &trace, &l.dq, grads)?;
    }
    let l1 = l1_loss(&params.data);
    if lambda2 != 0.0 {
        for (g, p) in grads.iter_mut().zip(&params.data) {
            if *p != 0.0 {
                *g += lambda2 * p.signum();
            }
        }
    }
    Ok(BatchLoss {
        td_sum,
        as_sum,
        l1,
        total: (td_sum + lambda1 * as_sum) * scale + lambda2 * l1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub agent: usize,
    pub l_td: f64,
    pub l_as: f64,
    pub l_l1: f64,
    pub l_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: QNetworkParams,
    pub log: Vec<EpochLoss>,
}

/// Trains the model for one agent slot on possessions.
pub fn train_agent(possessions: &[Possession], agent_slot: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    if possessions.is_empty() {
        return Err(Error::Validation("no possessions to train on".into()));
    }
    let seqs = possessions
        .iter()
        .map(|p| agent_sequence(p, agent_slot))
        .collect::<Result<Vec<_>>>()?;
    let dims = NetDims {
        input: INPUT_DIM,
        hidden: config.hidden,
        output: N_ACTIONS,
    };
    train_sequences(&seqs, agent_slot, Architecture::Gru, dims, config)
}

/// Trains on pre-encoded sequences; the network is initialized and the data
/// shuffled from sub-streams of `config.seed` named after the agent.
pub fn train_sequences(
    seqs: &[TrainSequence],
    agent: usize,
    arch: Architecture,
    dims: NetDims,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if seqs.is_empty() {
        return Err(Error::Validation("no sequences to train on".into()));
    }
    for s in seqs {
        if s.is_empty() || s.inputs.len() != s.len() * dims.input {
            return Err(Error::Structural(format!("sequence {} does not match input width {}", s.id, dims.input)));
        }
    }
    let mut params = QNetworkParams::init(arch, dims, &mut stream(config.seed, &format!("init/agent{agent}")));
    let mut shuffle_rng = stream(config.seed, &format!("shuffle/agent{agent}"));
    let mut adam = AdamState::new(params.len());
    let adam_cfg = config.adam();
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut grads = Vec::new();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum_td, mut sum_as, mut sum_l1, mut n_batches) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let members: Vec<&TrainSequence> = batch.iter().map(|&i| &seqs[i]).collect();
            let b = batch_gradient_into(&params, &members, config.lambda1, config.lambda2, config.gamma, &mut grads)?;
            sum_td += b.td_sum;
            sum_as += b.as_sum;
            sum_l1 += b.l1;
            n_batches += 1;
            adam_step(&mut params.data, &grads, &mut adam, &adam_cfg).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("agent {agent}, epoch {epoch}: {m}")),
                other => other,
            })?;
        }
        let n = seqs.len() as f64;
        let (l_td, l_as, l_l1) = (sum_td / n, sum_as / n, sum_l1 / n_batches as f64);
        let row = EpochLoss {
            epoch,
            agent,
            l_td,
            l_as,
            l_l1,
            l_total: l_td + config.lambda1 * l_as + config.lambda2 * l_l1,
        };
        log::debug!(
            "agent {agent} epoch {epoch}: td {:.6} as {:.6} l1 {:.3} total {:.6}",
            row.l_td,
            row.l_as,
            row.l_l1,
            row.l_total
        );
        log.push(row);
    }
    Ok(TrainOutcome { params, log })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub n: usize,
    pub td_mean: f64,
    pub td_std: f64,
    pub as_mean: f64,
    pub as_std: f64,
    /// Set when fewer than two sequences were evaluated, so the std is 0 by convention.
    pub degenerate: bool,
}

/// Mean and sample standard deviation of per-sequence losses.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn evaluate_sequences(params: &QNetworkParams, seqs: &[TrainSequence], gamma: f64) -> Result<LossSummary> {
    if seqs.is_empty() {
        return Err(Error::Validation("no sequences to evaluate".into()));
    }
    let mut td = Vec::with_capacity(seqs.len());
    let mut ls = Vec::with_capacity(seqs.len());
    for s in seqs {
        let trace = forward_flat(params, s.inputs.clone())?;
        let rows = trace.q_rows();
        td.push(td_loss_gamma(&rows, &s.actions, s.terminal_reward, gamma)?);
        ls.push(action_supervision_loss(&rows, &s.actions)?);
    }
    let (td_mean, td_std) = mean_std(&td);
    let (as_mean, as_std) = mean_std(&ls);
    Ok(LossSummary {
        n: seqs.len(),
        td_mean,
        td_std,
        as_mean,
        as_std,
        degenerate: seqs.len() < 2,
    })
}

pub fn evaluate_losses(params: &QNetworkParams, possessions: &[Possession], agent_slot: usize) -> Result<LossSummary> {
    if possessions.is_empty() {
        return Err(Error::Validation("no possessions to evaluate".into()));
    }
    let seqs = possessions
        .iter()
        .map(|p| agent_sequence(p, agent_slot))
        .collect::<Result<Vec<_>>>()?;
    evaluate_sequences(params, &seqs, 1.0)
}

pub const LOSS_LOG_HEADER: &str = "epoch,agent,l_td,l_as,l_l1,l_total";

pub fn write_loss_log<W: Write>(mut out: W, rows: &[EpochLoss]) -> std::io::Result<()> {
    writeln!(out, "{LOSS_LOG_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.epoch, r.agent, r.l_td, r.l_as, r.l_l1, r.l_total)?;
    }
    Ok(())
}

pub fn parse_loss_log(text: &str, source: &str) -> Result<Vec<EpochLoss>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOSS_LOG_HEADER) {
        return Err(Error::Header(source.to_string(), LOSS_LOG_HEADER.to_string()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |m: String| Error::Parse {
                source_name: source.to_string(),
                line: i + 2,
                message: m,
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("`{s}`: {e}")));
            Ok(EpochLoss {
                epoch: int(f[0])?,
                agent: int(f[1])?,
                l_td: num(f[2])?,
                l_as: num(f[3])?,
                l_l1: num(f[4])?,
                l_total: num(f[5])?,
            })
        })
        .collect()
}
