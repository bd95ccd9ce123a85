//! Recurrent Q-network: GRU(input -> hidden) -> ReLU(hidden -> hidden) ->
//! linear(hidden -> actions), with exact backpropagation through time and Adam.
//!
//! GRU cell (per step, `h` starts at zero):
//!
//! ```text
//! z  = sigmoid(Wz x + Uz h + bz)
//! r  = sigmoid(Wr x + Ur h + br)
//! c  = tanh(Wc x + Uc (r * h) + bc)
//! h' = (1 - z) * h + z * c
//! ```
//!
//! Parameters live in one flat `f64` buffer; the named tensor layout is fixed
//! per architecture (see [`QNetworkParams::tensors`]). With the default sizes
//! (106 -> 64 -> 64 -> 14) the GRU network has 37 902 parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{INPUT_DIM, N_ACTIONS};

pub const HIDDEN_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    Gru,
    /// No recurrence: ReLU(W x + b) -> linear. Used to isolate the TD rule.
    Feedforward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        Self {
            input: INPUT_DIM,
            hidden: HIDDEN_DIM,
            output: N_ACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub is_bias: bool,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

fn layout(arch: Architecture, d: NetDims) -> Vec<TensorInfo> {
    let (i, h, o) = (d.input, d.hidden, d.output);
    let shapes: Vec<(&'static str, usize, usize, bool)> = match arch {
        Architecture::Gru => vec![
            ("gru.w_input", 3 * h, i, false),
            ("gru.w_hidden_gates", 2 * h, h, false),
            ("gru.w_hidden_cand", h, h, false),
            ("gru.bias", 3 * h, 1, true),
            ("ff.weight", h, h, false),
            ("ff.bias", h, 1, true),
            ("out.weight", o, h, false),
            ("out.bias", o, 1, true),
        ],
        Architecture::Feedforward => vec![
            ("ff.weight", h, i, false),
            ("ff.bias", h, 1, true),
            ("out.weight", o, h, false),
            ("out.bias", o, 1, true),
        ],
    };
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, rows, cols, is_bias)| {
            let t = TensorInfo {
                name,
                rows,
                cols,
                offset,
                is_bias,
            };
            offset += rows * cols;
            t
        })
        .collect()
}

/// Offsets into the flat buffer, resolved once per architecture.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    w_in: usize,
    u_gates: usize,
    u_cand: usize,
    b_gru: usize,
    w_ff: usize,
    b_ff: usize,
    w_out: usize,
    b_out: usize,
}

impl Offsets {
    fn of(arch: Architecture, d: NetDims) -> Self {
        let t = layout(arch, d);
        let at = |name: &str| t.iter().find(|x| x.name == name).map_or(usize::MAX, |x| x.offset);
        Self {
            w_in: at("gru.w_input"),
            u_gates: at("gru.w_hidden_gates"),
            u_cand: at("gru.w_hidden_cand"),
            b_gru: at("gru.bias"),
            w_ff: at("ff.weight"),
            b_ff: at("ff.bias"),
            w_out: at("out.weight"),
            b_out: at("out.bias"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetworkParams {
    pub arch: Architecture,
    pub dims: NetDims,
    pub data: Vec<f64>,
}

pub fn param_count(arch: Architecture, dims: NetDims) -> usize {
    layout(arch, dims).iter().map(TensorInfo::len).sum()
}

impl QNetworkParams {
    pub fn zeros(arch: Architecture, dims: NetDims) -> Self {
        Self {
            arch,
            dims,
            data: vec![0.0; param_count(arch, dims)],
        }
    }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)) per weight tensor, zero biases.
    pub fn init<R: Rng>(arch: Architecture, dims: NetDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, dims);
        for t in layout(arch, dims) {
            if t.is_bias {
                continue;
            }
            let limit = (6.0 / (t.cols + t.rows) as f64).sqrt();
            for w in &mut p.data[t.range()] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        p
    }

    pub fn tensors(&self) -> Vec<TensorInfo> {
        layout(self.arch, self.dims)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors().into_iter().find(|t| t.name == name).map(|t| &self.data[t.range()])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.data.len() as u64;
        for v in &self.data {
            h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    pub fn check(&self) -> Result<()> {
        if self.data.len() != param_count(self.arch, self.dims) {
            return Err(Error::Structural(format!(
                "parameter buffer has {} values, layout needs {}",
                self.data.len(),
                param_count(self.arch, self.dims)
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    arch: Architecture,
    dims: NetDims,
    fingerprint: u64,
    steps: usize,
    x: Vec<f64>,
    /// `steps + 1` hidden states, the first one zero.
    h: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    f: Vec<f64>,
    q: Vec<f64>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// Q-values, `steps x output`, row-major.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_rows(&self) -> Vec<&[f64]> {
        self.q.chunks_exact(self.dims.output).collect()
    }

    /// Hidden state after step `t`.
    pub fn hidden(&self, t: usize) -> &[f64] {
        let hd = self.dims.hidden;
        &self.h[(t + 1) * hd..(t + 2) * hd]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// out[i] = bias[i] + W[i,:] . x
#[inline]
fn affine(w: &[f64], bias: Option<&[f64]>, x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&w[i * cols..(i + 1) * cols], x) + bias.map_or(0.0, |b| b[i]);
    }
}

/// y += W^T d
#[inline]
fn affine_transpose(w: &[f64], d: &[f64], y: &mut [f64]) {
    let cols = y.len();
    for (i, &di) in d.iter().enumerate() {
        if di != 0.0 {
            axpy(y, di, &w[i * cols..(i + 1) * cols]);
        }
    }
}

/// dW += d x^T
#[inline]
fn outer_acc(dw: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, &di) in d.iter().enumerate() {
        if di != 0.0 {
            axpy(&mut dw[i * cols..(i + 1) * cols], di, x);
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Runs the network over a sequence of input vectors.
pub fn forward(params: &QNetworkParams, inputs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, ForwardTrace)> {
    let flat: Vec<f64> = {
        let mut v = Vec::with_capacity(inputs.len() * params.dims.input);
        for (t, x) in inputs.iter().enumerate() {
            if x.len() != params.dims.input {
                return Err(Error::Structural(format!(
                    "input {t} has width {}, expected {}",
                    x.len(),
                    params.dims.input
                )));
            }
            v.extend_from_slice(x);
        }
        v
    };
    let trace = forward_flat(params, flat)?;
    let q = trace.q_rows().into_iter().map(<[f64]>::to_vec).collect();
    Ok((q, trace))
}

/// Forward pass over a row-major `steps x input` buffer.
pub fn forward_flat(params: &QNetworkParams, x: Vec<f64>) -> Result<ForwardTrace> {
    let d = params.dims;
    if params.data.len() != param_count(params.arch, d) {
        return Err(Error::Structural("parameter buffer does not match its layout".into()));
    }
    if !x.len().is_multiple_of(d.input) {
        return Err(Error::Structural(format!(
            "input buffer of {} values is not a multiple of width {}",
            x.len(),
            d.input
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    let steps = x.len() / d.input;
    let (i_dim, h_dim, o_dim) = (d.input, d.hidden, d.output);
    let off = Offsets::of(params.arch, d);
    let p = &params.data;
    let gru = params.arch == Architecture::Gru;

    let mut tr = ForwardTrace {
        arch: params.arch,
        dims: d,
        fingerprint: params.fingerprint(),
        steps,
        h: vec![0.0; if gru { (steps + 1) * h_dim } else { 0 }],
        z: vec![0.0; if gru { steps * h_dim } else { 0 }],
        r: vec![0.0; if gru { steps * h_dim } else { 0 }],
        c: vec![0.0; if gru { steps * h_dim } else { 0 }],
        f: vec![0.0; steps * h_dim],
        q: vec![0.0; steps * o_dim],
        x,
    };
    let mut a = vec![0.0; 3 * h_dim];
    let mut uh = vec![0.0; 2 * h_dim];
    let mut rh = vec![0.0; h_dim];
    let mut uc = vec![0.0; h_dim];
    for t in 0..steps {
        let xt = &tr.x[t * i_dim..(t + 1) * i_dim];
        if gru {
            affine(
                &p[off.w_in..off.w_in + 3 * h_dim * i_dim],
                Some(&p[off.b_gru..off.b_gru + 3 * h_dim]),
                xt,
                &mut a,
            );
            let (h_prev, h_rest) = tr.h[t * h_dim..].split_at_mut(h_dim);
            affine(&p[off.u_gates..off.u_gates + 2 * h_dim * h_dim], None, h_prev, &mut uh);
            let z = &mut tr.z[t * h_dim..(t + 1) * h_dim];
            let r = &mut tr.r[t * h_dim..(t + 1) * h_dim];
            for k in 0..h_dim {
                z[k] = sigmoid(a[k] + uh[k]);
                r[k] = sigmoid(a[h_dim + k] + uh[h_dim + k]);
                rh[k] = r[k] * h_prev[k];
            }
            affine(&p[off.u_cand..off.u_cand + h_dim * h_dim], None, &rh, &mut uc);
            let c = &mut tr.c[t * h_dim..(t + 1) * h_dim];
            let h_next = &mut h_rest[..h_dim];
            for k in 0..h_dim {
                c[k] = (a[2 * h_dim + k] + uc[k]).tanh();
                h_next[k] = (1.0 - z[k]) * h_prev[k] + z[k] * c[k];
            }
            let f = &mut tr.f[t * h_dim..(t + 1) * h_dim];
            affine(
                &p[off.w_ff..off.w_ff + h_dim * h_dim],
                Some(&p[off.b_ff..off.b_ff + h_dim]),
                &tr.h[(t + 1) * h_dim..(t + 2) * h_dim],
                f,
            );
        } else {
            let f = &mut tr.f[t * h_dim..(t + 1) * h_dim];
            affine(
                &p[off.w_ff..off.w_ff + h_dim * i_dim],
                Some(&p[off.b_ff..off.b_ff + h_dim]),
                xt,
                f,
            );
        }
        let f = &mut tr.f[t * h_dim..(t + 1) * h_dim];
        for v in f.iter_mut() {
            *v = v.max(0.0);
        }
        affine(
            &p[off.w_out..off.w_out + o_dim * h_dim],
            Some(&p[off.b_out..off.b_out + o_dim]),
            &tr.f[t * h_dim..(t + 1) * h_dim],
            &mut tr.q[t * o_dim..(t + 1) * o_dim],
        );
    }
    Ok(tr)
}

/// Gradient of a scalar loss with respect to every parameter, given the loss
/// gradient with respect to each step's Q-vector (`steps x output`).
pub fn backward(params: &QNetworkParams, trace: &ForwardTrace, dq: &[f64]) -> Result<Vec<f64>> {
    let mut grads = vec![0.0; params.data.len()];
    backward_fresh(params, trace, dq, &mut grads)?;
    Ok(grads)
}

/// As [`backward`], adding this sequence's gradient to `grads`. The sequence
/// gradient is formed separately first, so summing identical sequences is exact.
pub fn backward_into(params: &QNetworkParams, trace: &ForwardTrace, dq: &[f64], grads: &mut [f64]) -> Result<()> {
    if grads.len() != params.data.len() {
        return Err(Error::Structural("gradient buffer does not match parameters".into()));
    }
    let mut own = vec![0.0; params.data.len()];
    backward_fresh(params, trace, dq, &mut own)?;
    for (g, o) in grads.iter_mut().zip(&own) {
        *g += o;
    }
    Ok(())
}

fn backward_fresh(params: &QNetworkParams, trace: &ForwardTrace, dq: &[f64], grads: &mut [f64]) -> Result<()> {
    if trace.arch != params.arch || trace.dims != params.dims || trace.fingerprint != params.fingerprint() {
        return Err(Error::Structural("trace was not produced by these parameters".into()));
    }
    let d = params.dims;
    let (i_dim, h_dim, o_dim) = (d.input, d.hidden, d.output);
    if dq.len() != trace.steps * o_dim {
        return Err(Error::Structural(format!(
            "output gradient has {} values, expected {}",
            dq.len(),
            trace.steps * o_dim
        )));
    }
    if grads.len() != params.data.len() {
        return Err(Error::Structural("gradient buffer does not match parameters".into()));
    }
    let off = Offsets::of(params.arch, d);
    let p = &params.data;
    let gru = params.arch == Architecture::Gru;

    let mut dh_next = vec![0.0; h_dim];
    let mut df = vec![0.0; h_dim];
    let mut dh = vec![0.0; h_dim];
    let mut da = vec![0.0; 3 * h_dim];
    let mut drh = vec![0.0; h_dim];
    let mut rh = vec![0.0; h_dim];
    for t in (0..trace.steps).rev() {
        let dqt = &dq[t * o_dim..(t + 1) * o_dim];
        let ft = &trace.f[t * h_dim..(t + 1) * h_dim];
        let xt = &trace.x[t * i_dim..(t + 1) * i_dim];

        outer_acc(&mut grads[off.w_out..off.w_out + o_dim * h_dim], dqt, ft);
        axpy(&mut grads[off.b_out..off.b_out + o_dim], 1.0, dqt);
        df.iter_mut().for_each(|v| *v = 0.0);
        affine_transpose(&p[off.w_out..off.w_out + o_dim * h_dim], dqt, &mut df);
        for (g, &fv) in df.iter_mut().zip(ft) {
            if fv <= 0.0 {
                *g = 0.0;
            }
        }
        axpy(&mut grads[off.b_ff..off.b_ff + h_dim], 1.0, &df);

        if !gru {
            outer_acc(&mut grads[off.w_ff..off.w_ff + h_dim * i_dim], &df, xt);
            continue;
        }

        let h_prev = &trace.h[t * h_dim..(t + 1) * h_dim];
        let h_t = &trace.h[(t + 1) * h_dim..(t + 2) * h_dim];
        outer_acc(&mut grads[off.w_ff..off.w_ff + h_dim * h_dim], &df, h_t);
        dh.copy_from_slice(&dh_next);
        affine_transpose(&p[off.w_ff..off.w_ff + h_dim * h_dim], &df, &mut dh);

        let z = &trace.z[t * h_dim..(t + 1) * h_dim];
        let r = &trace.r[t * h_dim..(t + 1) * h_dim];
        let c = &trace.c[t * h_dim..(t + 1) * h_dim];
        for k in 0..h_dim {
            let dz = dh[k] * (c[k] - h_prev[k]);
            let dc = dh[k] * z[k];
            da[k] = dz * z[k] * (1.0 - z[k]);
            da[2 * h_dim + k] = dc * (1.0 - c[k] * c[k]);
            dh_next[k] = dh[k] * (1.0 - z[k]);
            rh[k] = r[k] * h_prev[k];
        }
        drh.iter_mut().for_each(|v| *v = 0.0);
        affine_transpose(&p[off.u_cand..off.u_cand + h_dim * h_dim], &da[2 * h_dim..], &mut drh);
        for k in 0..h_dim {
            let dr = drh[k] * h_prev[k];
            dh_next[k] += drh[k] * r[k];
            da[h_dim + k] = dr * r[k] * (1.0 - r[k]);
        }
        outer_acc(&mut grads[off.w_in..off.w_in + 3 * h_dim * i_dim], &da, xt);
        axpy(&mut grads[off.b_gru..off.b_gru + 3 * h_dim], 1.0, &da);
        outer_acc(&mut grads[off.u_gates..off.u_gates + 2 * h_dim * h_dim], &da[..2 * h_dim], h_prev);
        outer_acc(&mut grads[off.u_cand..off.u_cand + h_dim * h_dim], &da[2 * h_dim..], &rh);
        affine_transpose(&p[off.u_gates..off.u_gates + 2 * h_dim * h_dim], &da[..2 * h_dim], &mut dh_next);
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(softmax(v))`, computed without forming the probabilities.
pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let Some(arg) = (0..v.len()).reduce(|a, b| if v[b] > v[a] { b } else { a }) else {
        return Vec::new();
    };
    let max = v[arg];
    // The max term contributes exactly 1 to the sum; ln_1p keeps the rest precise.
    let rest: f64 = v.iter().enumerate().filter(|&(i, _)| i != arg).map(|(_, x)| (x - max).exp()).sum();
    let log_z = rest.ln_1p();
    v.iter().map(|x| (x - max) - log_z).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Structural("Adam buffers differ in length".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small(arch: Architecture) -> QNetworkParams {
        let dims = NetDims {
            input: 8,
            hidden: 5,
            output: 3,
        };
        let mut p = QNetworkParams::init(arch, dims, &mut stream(3, "test"));
        // Non-zero biases so every parameter is exercised.
        let mut rng = stream(4, "bias");
        for t in p.tensors().into_iter().filter(|t| t.is_bias) {
            for b in &mut p.data[t.range()] {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
        p
    }

    fn inputs(n: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "inputs");
        (0..n).map(|_| (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn documented_parameter_count() {
        assert_eq!(param_count(Architecture::Gru, NetDims::default()), 37_902);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = QNetworkParams::zeros(Architecture::Gru, NetDims::default());
        let (q, tr) = forward(&p, &inputs(4, INPUT_DIM, 1)).unwrap();
        assert!(q.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(tr.len(), 4);
    }

    #[test]
    fn single_step_by_hand() {
        // input 2, hidden 1, output 1, hand-set weights.
        let dims = NetDims {
            input: 2,
            hidden: 1,
            output: 1,
        };
        let mut p = QNetworkParams::zeros(Architecture::Gru, dims);
        // gru.w_input rows: z, r, c
        p.data[..6].copy_from_slice(&[0.1, -0.2, 0.3, 0.05, -0.4, 0.25]);
        // gru.w_hidden_gates (2), gru.w_hidden_cand (1): irrelevant at h0 = 0
        p.data[6..9].copy_from_slice(&[0.7, -0.6, 0.9]);
        p.data[9..12].copy_from_slice(&[0.01, 0.02, -0.03]);
        p.data[12] = 1.5; // ff.weight
        p.data[13] = 0.1; // ff.bias
        p.data[14] = -0.8; // out.weight
        p.data[15] = 0.2; // out.bias
        let x = [0.6, -1.1];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z = sig(0.1 * x[0] - 0.2 * x[1] + 0.01);
        let c = (-0.4 * x[0] + 0.25 * x[1] - 0.03).tanh();
        let h = z * c;
        let f = (1.5 * h + 0.1).max(0.0);
        let q = -0.8 * f + 0.2;
        let (out, _) = forward(&p, &[x.to_vec()]).unwrap();
        assert!((out[0][0] - q).abs() < 1e-12, "{} vs {q}", out[0][0]);
    }

    #[test]
    fn shapes_for_a_full_length_sequence() {
        let p = QNetworkParams::init(Architecture::Gru, NetDims::default(), &mut stream(1, "p"));
        let (q, tr) = forward(&p, &inputs(300, INPUT_DIM, 2)).unwrap();
        assert_eq!(q.len(), 300);
        assert_eq!(tr.len(), 300);
        assert!(q.iter().all(|v| v.len() == N_ACTIONS));
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut p = QNetworkParams::init(Architecture::Gru, NetDims::default(), &mut stream(9, "p"));
        for v in &mut p.data {
            *v *= 20.0;
        }
        let mut xs = inputs(60, INPUT_DIM, 5);
        xs.iter_mut().flatten().for_each(|v| *v *= 30.0);
        let (_, tr) = forward(&p, &xs).unwrap();
        for t in 0..tr.len() {
            assert!(tr.hidden(t).iter().all(|h| h.abs() <= 1.0));
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let p = small(Architecture::Gru);
        assert!(matches!(forward(&p, &[vec![0.0; 7]]), Err(Error::Structural(_))));
        let mut x = vec![0.0; 8];
        x[2] = f64::NAN;
        assert!(matches!(forward(&p, &[x]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let p = small(Architecture::Gru);
        let (_, tr) = forward(&p, &inputs(6, 8, 1)).unwrap();
        let g = backward(&p, &tr, &[0.0; 18]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_from_other_params_rejected() {
        let p = small(Architecture::Gru);
        let (_, tr) = forward(&p, &inputs(3, 8, 1)).unwrap();
        let mut other = p.clone();
        other.data[0] += 1.0;
        assert!(backward(&other, &tr, &[0.0; 9]).is_err());
        assert!(backward(&p, &tr, &[0.0; 8]).is_err());
    }

    #[test]
    fn duplicated_sequence_doubles_gradient() {
        let p = small(Architecture::Gru);
        let xs = inputs(5, 8, 7);
        let (_, tr) = forward(&p, &xs).unwrap();
        let dq: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let single = backward(&p, &tr, &dq).unwrap();
        let mut batch = vec![0.0; p.len()];
        backward_into(&p, &tr, &dq, &mut batch).unwrap();
        backward_into(&p, &tr, &dq, &mut batch).unwrap();
        for (s, b) in single.iter().zip(&batch) {
            assert_eq!(2.0 * s, *b);
        }
    }

    /// Central differences of L = sum_t w_t . q_t against backward().
    fn check_gradient(p: &QNetworkParams, xs: &[Vec<f64>]) -> f64 {
        let steps = xs.len();
        let o = p.dims.output;
        let w: Vec<f64> = (0..steps * o).map(|i| ((i * 7 + 3) as f64 * 0.61).cos()).collect();
        let loss = |pp: &QNetworkParams| -> f64 {
            let (q, _) = forward(pp, xs).unwrap();
            q.iter().flatten().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, tr) = forward(p, xs).unwrap();
        let g = backward(p, &tr, &w).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.data[i] += h;
            let mut minus = p.clone();
            minus.data[i] -= h;
            let num = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = g[i].abs().max(num.abs()).max(1e-6);
            worst = worst.max((g[i] - num).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradient_check_gru() {
        let p = small(Architecture::Gru);
        let err = check_gradient(&p, &inputs(6, 8, 11));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_check_feedforward() {
        let p = small(Architecture::Feedforward);
        let err = check_gradient(&p, &inputs(4, 8, 12));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn softmax_properties() {
        let u = softmax(&[0.3; N_ACTIONS]);
        assert!(u.iter().all(|&p| (p - 1.0 / 14.0).abs() < 1e-15));
        let v: Vec<f64> = (0..N_ACTIONS).map(|i| (i as f64).sin()).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 123.0).collect();
        let (a, b) = (softmax(&v), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut big = vec![0.0; N_ACTIONS];
        big[0] = 1000.0;
        let s = softmax(&big);
        assert!(s.iter().all(|p| p.is_finite()));
        // exp(-1000) underflows to zero in any precision that matters here.
        assert_eq!(s[0], 1.0);
        assert!(log_softmax(&big)[1].is_finite());
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let g = [3.0, -0.25, 1e-3];
        let mut p = vec![0.0; 3];
        let mut st = AdamState::new(3);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps).
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi + cfg.lr * gi.signum()).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = vec![0.0; 2];
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut p, &[f64::INFINITY, 0.0], &mut st, &AdamConfig::default()).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = vec![0.1, 0.2, 0.3];
            let mut st = AdamState::new(3);
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| x * 2.0 + (k as f64).sin()).collect();
                adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
