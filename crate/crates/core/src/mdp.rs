//! Tiny episodic MDP with exact policy evaluation, the convergence oracle for
//! the SARSA trainer.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{forward_flat, Architecture, NetDims};
use crate::rng::stream;
use crate::training::{train_sequences, TrainConfig, TrainSequence};

pub const MAX_STATES: usize = 10;
pub const MAX_ACTIONS: usize = 4;
const ROW_TOL: f64 = 1e-12;
const DP_TOL: f64 = 1e-12;
const MAX_EPISODE_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TinyMdp {
    /// `transitions[s][a][s']`; rows of terminal states are ignored.
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub terminal: Vec<bool>,
    /// Reward received on entering each terminal state.
    pub terminal_reward: Vec<f64>,
    /// `policy[s][a]` for non-terminal states.
    pub policy: Vec<Vec<f64>>,
    /// Initial state distribution (non-terminal states only).
    pub start: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpEpisode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub terminal_state: usize,
    pub reward: f64,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Validation(format!("{what} sums to {sum}")));
    }
    Ok(())
}

impl TinyMdp {
    pub fn n_states(&self) -> usize {
        self.terminal.len()
    }

    pub fn n_actions(&self) -> usize {
        self.policy.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states(), self.n_actions());
        if ns == 0 || ns > MAX_STATES || na == 0 || na > MAX_ACTIONS {
            return Err(Error::Validation(format!("{ns} states / {na} actions outside the supported size")));
        }
        let shape_ok = self.transitions.len() == ns
            && self.terminal_reward.len() == ns
            && self.policy.len() == ns
            && self.start.len() == ns
            && self.transitions.iter().all(|r| r.len() == na && r.iter().all(|p| p.len() == ns))
            && self.policy.iter().all(|r| r.len() == na);
        if !shape_ok {
            return Err(Error::Structural("MDP tables have inconsistent shapes".into()));
        }
        if !self.terminal.iter().any(|&t| t) {
            return Err(Error::Validation("MDP has no terminal state".into()));
        }
        check_distribution(&self.start, "start distribution")?;
        for s in 0..ns {
            if self.terminal[s] {
                if self.start[s] > 0.0 {
                    return Err(Error::Validation(format!("episodes may start in terminal state {s}")));
                }
                if !self.terminal_reward[s].is_finite() {
                    return Err(Error::NonFinite(format!("terminal reward of state {s}")));
                }
                continue;
            }
            check_distribution(&self.policy[s], &format!("policy row {s}"))?;
            for a in 0..na {
                check_distribution(&self.transitions[s][a], &format!("transition row ({s}, {a})"))?;
            }
        }
        self.check_termination()
    }

    /// Every state reachable under the policy must be able to reach a terminal
    /// state; for a finite chain that makes termination certain.
    fn check_termination(&self) -> Result<()> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let edge = |s: usize, t: usize| (0..na).any(|a| self.policy[s][a] > 0.0 && self.transitions[s][a][t] > 0.0);
        let mut can_finish: Vec<bool> = self.terminal.clone();
        loop {
            let mut changed = false;
            for s in 0..ns {
                if !can_finish[s] && (0..ns).any(|t| can_finish[t] && edge(s, t)) {
                    can_finish[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut reachable: Vec<bool> = self.start.iter().map(|&p| p > 0.0).collect();
        let mut frontier: Vec<usize> = (0..ns).filter(|&s| reachable[s]).collect();
        while let Some(s) = frontier.pop() {
            if self.terminal[s] {
                continue;
            }
            for t in 0..ns {
                if !reachable[t] && edge(s, t) {
                    reachable[t] = true;
                    frontier.push(t);
                }
            }
        }
        match (0..ns).find(|&s| reachable[s] && !can_finish[s]) {
            Some(s) => Err(Error::Validation(format!("state {s} is reachable but can never terminate"))),
            None => Ok(()),
        }
    }

    /// The shipped 5-state oracle: states 0-2 decide between two actions,
    /// state 3 ends with reward 1 and state 4 with reward 0.
    pub fn shipped() -> Self {
        let transitions = vec![
            vec![vec![0.0, 0.7, 0.3, 0.0, 0.0], vec![0.0, 0.0, 0.6, 0.4, 0.0]],
            vec![vec![0.0, 0.0, 0.5, 0.5, 0.0], vec![0.2, 0.0, 0.0, 0.0, 0.8]],
            vec![vec![0.0, 0.0, 0.0, 0.6, 0.4], vec![0.0, 0.3, 0.0, 0.0, 0.7]],
            vec![vec![0.0; 5]; 2],
            vec![vec![0.0; 5]; 2],
        ];
        Self {
            transitions,
            terminal: vec![false, false, false, true, true],
            terminal_reward: vec![0.0, 0.0, 0.0, 1.0, 0.0],
            policy: vec![vec![0.5, 0.5], vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5], vec![0.5, 0.5]],
            start: vec![0.5, 0.3, 0.2, 0.0, 0.0],
        }
    }

    /// A random MDP whose every non-terminal transition row puts at least 0.2
    /// on the terminal states, with terminal rewards drawn from [-1, 1].
    pub fn random(seed: u64, n_states: usize, n_terminal: usize, n_actions: usize) -> Result<Self> {
        if n_terminal == 0 || n_terminal >= n_states {
            return Err(Error::Validation("need at least one terminal and one decision state".into()));
        }
        let mut rng = stream(seed, "mdp/random");
        let n_dec = n_states - n_terminal;
        let normalized = |len: usize, rng: &mut crate::rng::StreamRng| -> Vec<f64> {
            let w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = w.iter().sum();
            w.into_iter().map(|v| v / sum).collect()
        };
        let mut transitions = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        let mut policy = vec![vec![1.0 / n_actions as f64; n_actions]; n_states];
        for s in 0..n_dec {
            policy[s] = normalized(n_actions, &mut rng);
            for a in 0..n_actions {
                let stop = rng.gen_range(0.2..0.8);
                let inner = normalized(n_dec, &mut rng);
                let outer = normalized(n_terminal, &mut rng);
                let row = &mut transitions[s][a];
                for (k, v) in inner.iter().enumerate() {
                    row[k] = (1.0 - stop) * v;
                }
                for (k, v) in outer.iter().enumerate() {
                    row[n_dec + k] = stop * v;
                }
                // Absorb rounding so the row sums to 1 within the tolerance.
                let sum: f64 = row.iter().sum();
                row[n_states - 1] += 1.0 - sum;
            }
        }
        let mut terminal_reward = vec![0.0; n_states];
        for r in &mut terminal_reward[n_dec..] {
            *r = rng.gen_range(-1.0..1.0);
        }
        let mut start = vec![0.0; n_states];
        start[..n_dec].copy_from_slice(&normalized(n_dec, &mut rng));
        let sum: f64 = start.iter().sum();
        start[0] += 1.0 - sum;
        let mdp = Self {
            transitions,
            terminal: (0..n_states).map(|s| s >= n_dec).collect(),
            terminal_reward,
            policy,
            start,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Value of arriving in `s` and then following the policy.
    fn arrival_value(&self, q: &[Vec<f64>], s: usize) -> f64 {
        if self.terminal[s] {
            self.terminal_reward[s]
        } else {
            self.policy[s].iter().zip(&q[s]).map(|(p, v)| p * v).sum()
        }
    }
}

/// Exact Q^pi by iterative policy evaluation (gamma = 1). Rows of terminal
/// states are zero.
pub fn dp_q_pi(mdp: &TinyMdp) -> Result<Vec<Vec<f64>>> {
    mdp.validate()?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    for _ in 0..10_000_000 {
        let mut next = q.clone();
        let mut change: f64 = 0.0;
        for s in (0..ns).filter(|&s| !mdp.terminal[s]) {
            for a in 0..na {
                let v: f64 = (0..ns)
                    .filter(|&t| mdp.transitions[s][a][t] > 0.0)
                    .map(|t| mdp.transitions[s][a][t] * mdp.arrival_value(&q, t))
                    .sum();
                change = change.max((v - q[s][a]).abs());
                next[s][a] = v;
            }
        }
        q = next;
        if change < DP_TOL {
            return Ok(q);
        }
    }
    Err(Error::Validation("policy evaluation did not converge".into()))
}

/// Samples episodes under the behavior policy, reproducibly per seed.
pub fn rollout_corpus(mdp: &TinyMdp, seed: u64, n_episodes: usize) -> Result<Vec<MdpEpisode>> {
    mdp.validate()?;
    let sampler = Sampler::new(mdp)?;
    let mut rng = stream(seed, "mdp/rollout");
    (0..n_episodes).map(|_| sampler.episode(mdp, &mut rng)).collect()
}

struct Sampler {
    start: WeightedIndex<f64>,
    policy: Vec<Option<WeightedIndex<f64>>>,
    next: Vec<Vec<Option<WeightedIndex<f64>>>>,
}

impl Sampler {
    fn new(mdp: &TinyMdp) -> Result<Self> {
        let dist = |w: &[f64]| WeightedIndex::new(w.iter().copied()).map_err(|e| Error::Validation(e.to_string()));
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let mut policy = Vec::with_capacity(ns);
        let mut next = Vec::with_capacity(ns);
        for s in 0..ns {
            if mdp.terminal[s] {
                policy.push(None);
                next.push(vec![None; na]);
                continue;
            }
            policy.push(Some(dist(&mdp.policy[s])?));
            next.push((0..na).map(|a| dist(&mdp.transitions[s][a]).ok()).collect());
        }
        Ok(Self {
            start: dist(&mdp.start)?,
            policy,
            next,
        })
    }

    fn episode<R: Rng>(&self, mdp: &TinyMdp, rng: &mut R) -> Result<MdpEpisode> {
        let s = self.start.sample(rng);
        self.continue_from(mdp, s, None, rng)
    }

    /// Runs from `s`, optionally forcing the first action.
    fn continue_from<R: Rng>(&self, mdp: &TinyMdp, mut s: usize, mut forced: Option<usize>, rng: &mut R) -> Result<MdpEpisode> {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        while !mdp.terminal[s] {
            if states.len() >= MAX_EPISODE_STEPS {
                return Err(Error::Validation("episode exceeded the step cap".into()));
            }
            let a = match forced.take() {
                Some(a) => a,
                None => self.policy[s].as_ref().expect("decision state").sample(rng),
            };
            states.push(s);
            actions.push(a);
            s = self.next[s][a]
                .as_ref()
                .ok_or_else(|| Error::Validation(format!("no transition from ({s}, {a})")))?
                .sample(rng);
        }
        Ok(MdpEpisode {
            states,
            actions,
            terminal_state: s,
            reward: mdp.terminal_reward[s],
        })
    }
}

/// Monte-Carlo estimate of Q^pi(s, a) from `n` rollouts forced to start with `(s, a)`.
pub fn monte_carlo_q(mdp: &TinyMdp, s: usize, a: usize, n: usize, seed: u64) -> Result<f64> {
    mdp.validate()?;
    if mdp.terminal[s] {
        return Err(Error::Validation(format!("state {s} is terminal")));
    }
    let sampler = Sampler::new(mdp)?;
    let mut rng = stream(seed, &format!("mdp/mc/{s}/{a}"));
    let mut total = 0.0;
    for _ in 0..n {
        total += sampler.continue_from(mdp, s, Some(a), &mut rng)?.reward;
    }
    Ok(total / n as f64)
}

/// One-hot state inputs of width `n_states`; no previous-action channel.
pub fn episodes_to_sequences(mdp: &TinyMdp, episodes: &[MdpEpisode]) -> Vec<TrainSequence> {
    let ns = mdp.n_states();
    episodes
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.states.is_empty())
        .map(|(k, e)| {
            let mut inputs = vec![0.0; e.states.len() * ns];
            for (t, &s) in e.states.iter().enumerate() {
                inputs[t * ns + s] = 1.0;
            }
            TrainSequence {
                id: format!("episode-{k}"),
                inputs,
                actions: e.actions.clone(),
                terminal_reward: e.reward,
            }
        })
        .collect()
}

pub fn visited_pairs(episodes: &[MdpEpisode]) -> BTreeSet<(usize, usize)> {
    episodes
        .iter()
        .flat_map(|e| e.states.iter().copied().zip(e.actions.iter().copied()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub linf: f64,
    pub visited: usize,
    pub q_dp: Vec<Vec<f64>>,
    pub q_learned: Vec<Vec<f64>>,
    pub elapsed: Duration,
}

pub const ORACLE_EPISODES: usize = 20_000;

/// The settings used to train on the tiny MDP: no supervision, no L1, and a
/// smaller step size so the final Adam jitter sits well inside the tolerance.
pub fn oracle_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        epochs: 80,
        batch_size: 64,
        seed,
        hidden: 32,
        learning_rate: 3e-4,
        ..TrainConfig::default()
    }
}

/// Trains a feedforward Q-network by SARSA on rollouts of `mdp` and reports
/// the L-infinity gap to the exact Q^pi over visited pairs.
pub fn sarsa_oracle(mdp: &TinyMdp, seed: u64, n_episodes: usize, config: &TrainConfig) -> Result<OracleReport> {
    let t0 = Instant::now();
    let q_dp = dp_q_pi(mdp)?;
    let episodes = rollout_corpus(mdp, seed, n_episodes)?;
    let seqs = episodes_to_sequences(mdp, &episodes);
    let dims = NetDims {
        input: mdp.n_states(),
        hidden: config.hidden,
        output: mdp.n_actions(),
    };
    let out = train_sequences(&seqs, 0, Architecture::Feedforward, dims, config)?;
    let ns = mdp.n_states();
    let mut q_learned = vec![vec![0.0; mdp.n_actions()]; ns];
    for (s, row) in q_learned.iter_mut().enumerate() {
        let mut x = vec![0.0; ns];
        x[s] = 1.0;
        row.copy_from_slice(forward_flat(&out.params, x)?.q());
    }
    let pairs = visited_pairs(&episodes);
    let linf = pairs.iter().map(|&(s, a)| (q_learned[s][a] - q_dp[s][a]).abs()).fold(0.0, f64::max);
    Ok(OracleReport {
        linf,
        visited: pairs.len(),
        q_dp,
        q_learned,
        elapsed: t0.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> TinyMdp {
        TinyMdp {
            transitions: vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 0.0]]],
            terminal: vec![false, true],
            terminal_reward: vec![0.0, 1.0],
            policy: vec![vec![1.0], vec![1.0]],
            start: vec![1.0, 0.0],
        }
    }

    fn chain() -> TinyMdp {
        // 0 -> 1 -> 2 -> terminal 3 (reward 1), deterministic.
        let mut t = vec![vec![vec![0.0; 4]]; 4];
        t[0][0][1] = 1.0;
        t[1][0][2] = 1.0;
        t[2][0][3] = 1.0;
        TinyMdp {
            transitions: t,
            terminal: vec![false, false, false, true],
            terminal_reward: vec![0.0, 0.0, 0.0, 1.0],
            policy: vec![vec![1.0]; 4],
            start: vec![1.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn single_step_episode() {
        assert_eq!(dp_q_pi(&single()).unwrap()[0][0], 1.0);
    }

    #[test]
    fn undiscounted_chain() {
        let q = dp_q_pi(&chain()).unwrap();
        assert_eq!([q[0][0], q[1][0], q[2][0]], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn deterministic_chain_rollout_is_unique() {
        let eps = rollout_corpus(&chain(), 3, 1).unwrap();
        assert_eq!(eps[0].states, vec![0, 1, 2]);
        assert_eq!(eps[0].actions, vec![0, 0, 0]);
        assert_eq!(eps[0].reward, 1.0);
    }

    #[test]
    fn rollouts_are_reproducible() {
        let m = TinyMdp::shipped();
        assert_eq!(rollout_corpus(&m, 8, 200).unwrap(), rollout_corpus(&m, 8, 200).unwrap());
        assert_ne!(rollout_corpus(&m, 8, 200).unwrap(), rollout_corpus(&m, 9, 200).unwrap());
    }

    #[test]
    fn non_terminating_mdp_rejected() {
        let mut m = chain();
        // State 2 loops onto itself forever.
        m.transitions[2][0] = vec![0.0, 0.0, 1.0, 0.0];
        assert!(matches!(dp_q_pi(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn bad_rows_rejected() {
        let mut m = TinyMdp::shipped();
        m.transitions[0][0][1] += 1e-9;
        assert!(m.validate().is_err());
        let mut m = TinyMdp::shipped();
        m.policy[1] = vec![0.7, 0.7];
        assert!(m.validate().is_err());
    }

    #[test]
    fn shipped_mdp_is_valid_with_full_support() {
        let m = TinyMdp::shipped();
        m.validate().unwrap();
        let q = dp_q_pi(&m).unwrap();
        for row in &q[..3] {
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(m.policy[..3].iter().flatten().all(|&p| p >= 0.3));
    }

    #[test]
    fn random_mdps_validate() {
        for seed in 0..20 {
            TinyMdp::random(seed, 5, 2, 2).unwrap();
        }
    }

    #[test]
    fn sequences_are_one_hot() {
        let m = TinyMdp::shipped();
        let eps = rollout_corpus(&m, 1, 10).unwrap();
        let seqs = episodes_to_sequences(&m, &eps);
        for (e, s) in eps.iter().zip(&seqs) {
            assert_eq!(s.inputs.len(), e.states.len() * 5);
            assert_eq!(s.inputs.iter().sum::<f64>(), e.states.len() as f64);
            assert_eq!(s.terminal_reward, e.reward);
        }
    }

    #[test]
    fn sarsa_matches_dp_on_shipped_mdp() {
        let r = sarsa_oracle(&TinyMdp::shipped(), 1, ORACLE_EPISODES, &oracle_config(1)).unwrap();
        eprintln!("linf {} visited {} in {:?}\n{:?}\n{:?}", r.linf, r.visited, r.elapsed, r.q_dp, r.q_learned);
        assert_eq!(r.visited, 6);
        assert!(r.linf < 0.05, "{}", r.linf);
    }
}
