//! Central finite-difference check of the full training objective gradient.
//!
//! The TD targets are frozen at the unperturbed parameters, so the numerical
//! derivative is of the semi-gradient objective the trainer actually follows.
//! The L1 term is differenced coordinate-wise, `(|p+h| - |p-h|) / 2h`, which is
//! the same central difference without cancellation against a large sum.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{forward_flat, Architecture, NetDims, QNetworkParams};
use crate::rng::stream;
use crate::training::{action_supervision_loss, batch_gradient_into, td_loss_with_targets, td_targets, TrainSequence};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error of near-zero gradient entries.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the trainer's batch gradient with central differences at `indices`.
pub fn check_total_loss_gradient(
    params: &QNetworkParams,
    batch: &[TrainSequence],
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    indices: &[usize],
) -> Result<GradCheckReport> {
    let members: Vec<&TrainSequence> = batch.iter().collect();
    let mut analytic = Vec::new();
    batch_gradient_into(params, &members, lambda1, lambda2, gamma, &mut analytic)?;

    let width = params.dims.output;
    let mut frozen = Vec::with_capacity(batch.len());
    for s in batch {
        let tr = forward_flat(params, s.inputs.clone())?;
        frozen.push(td_targets(&tr.q_rows(), &s.actions, s.terminal_reward, gamma)?);
    }
    let smooth = |p: &QNetworkParams| -> Result<f64> {
        let mut total = 0.0;
        for (s, targets) in batch.iter().zip(&frozen) {
            let tr = forward_flat(p, s.inputs.clone())?;
            let rows: Vec<&[f64]> = tr.q().chunks_exact(width).collect();
            total += td_loss_with_targets(&rows, &s.actions, targets) + lambda1 * action_supervision_loss(&rows, &s.actions)?;
        }
        Ok(total / batch.len() as f64)
    };

    let h = FD_STEP;
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    let mut probe = params.clone();
    for &i in indices {
        if i >= params.len() {
            return Err(Error::Structural(format!("parameter index {i} out of range")));
        }
        let p0 = params.data[i];
        probe.data[i] = p0 + h;
        let up = smooth(&probe)?;
        probe.data[i] = p0 - h;
        let down = smooth(&probe)?;
        probe.data[i] = p0;
        let numeric = (up - down) / (2.0 * h) + lambda2 * ((p0 + h).abs() - (p0 - h).abs()) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Random sequences with one-hot previous-action tails where the width allows.
pub fn random_batch(dims: NetDims, n_seqs: usize, steps: usize, seed: u64) -> Vec<TrainSequence> {
    let mut rng = stream(seed, "gradcheck/batch");
    (0..n_seqs)
        .map(|k| {
            let actions: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..dims.output)).collect();
            let mut inputs = Vec::with_capacity(steps * dims.input);
            for t in 0..steps {
                let mut x: Vec<f64> = (0..dims.input).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if dims.input > dims.output {
                    let tail = dims.input - dims.output;
                    x[tail..].iter_mut().for_each(|v| *v = 0.0);
                    if t > 0 {
                        x[tail + actions[t - 1]] = 1.0;
                    }
                }
                inputs.extend(x);
            }
            TrainSequence {
                id: format!("g{k}"),
                inputs,
                actions,
                terminal_reward: rng.gen_range(-1.0..1.0),
            }
        })
        .collect()
}

/// Parameters with small random biases, so every tensor carries gradient and
/// no coordinate sits on the L1 kink.
pub fn random_params(arch: Architecture, dims: NetDims, seed: u64) -> QNetworkParams {
    let mut p = QNetworkParams::init(arch, dims, &mut stream(seed, "gradcheck/params"));
    let mut rng = stream(seed, "gradcheck/bias");
    for t in p.tensors().into_iter().filter(|t| t.is_bias) {
        for b in &mut p.data[t.range()] {
            *b = rng.gen_range(0.05..0.3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfGradCheck {
    pub small: GradCheckReport,
    pub full_sample: GradCheckReport,
}

/// The downsized network (8 -> 5 -> 3) on every parameter, then the full-size
/// network on a 1% random parameter sample; all loss terms active.
pub fn run_standard_checks(seed: u64) -> Result<SelfGradCheck> {
    let (l1, l2, gamma) = (0.01, 0.1, 1.0);
    let small_dims = NetDims {
        input: 8,
        hidden: 5,
        output: 3,
    };
    let p = random_params(Architecture::Gru, small_dims, seed);
    let all: Vec<usize> = (0..p.len()).collect();
    let small = check_total_loss_gradient(&p, &random_batch(small_dims, 2, 7, seed), l1, l2, gamma, &all)?;

    let full_dims = NetDims::default();
    let p = random_params(Architecture::Gru, full_dims, seed);
    let n = p.len().div_ceil(100);
    let mut idx = sample(&mut stream(seed, "gradcheck/sample"), p.len(), n).into_vec();
    idx.sort_unstable();
    let full_sample = check_total_loss_gradient(&p, &random_batch(full_dims, 2, 12, seed), l1, l2, gamma, &idx)?;
    Ok(SelfGradCheck { small, full_sample })
}
