//! Small dense feedforward networks: forward pass, analytic input Jacobian,
//! batched backpropagation, RPROP⁻ and Adam, and a text serialization that
//! round-trips bit-exactly.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT_TAG: &str = "mlp 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Logistic,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    pub fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
            Activation::Linear => "linear",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "logistic" => Ok(Activation::Logistic),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    /// Weights uniform in `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Weights normal with variance `2 / fan_in`.
    He,
}

/// Dense network. Parameters live in one flat vector: for each layer the
/// row-major `out × in` weight matrix followed by `out` biases (if enabled).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    bias: bool,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(sizes: &[usize], bias: bool) -> Vec<usize> {
    let mut offsets = vec![0];
    for w in sizes.windows(2) {
        let n = w[0] * w[1] + if bias { w[1] } else { 0 };
        offsets.push(offsets.last().expect("nonempty") + n);
    }
    offsets
}

impl MlpNet {
    /// All-zero network.
    pub fn zeros(sizes: &[usize], activations: &[Activation], bias: bool) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: sizes.len() - 1,
                got: activations.len(),
            });
        }
        let offsets = layer_offsets(sizes, bias);
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            bias,
            params: vec![0.0; *offsets.last().expect("nonempty")],
            offsets,
        })
    }

    /// Randomly initialized weights; biases start at zero.
    pub fn new(sizes: &[usize], activations: &[Activation], bias: bool, init: Init, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations, bias)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.n_layers() {
            let fan_in = net.sizes[l];
            let count = net.sizes[l] * net.sizes[l + 1];
            let start = net.offsets[l];
            let w = &mut net.params[start..start + count];
            match init {
                Init::Uniform { half_width } => {
                    for v in w {
                        *v = rng.gen_range(-half_width..=half_width);
                    }
                }
                Init::He => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    for v in w {
                        *v = normal.sample(&mut rng);
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        ArrayView2::from_shape((o, i), &self.params[start..start + o * i]).expect("layout")
    }

    /// Bias vector of layer `l`, or `None` for bias-free networks.
    pub fn biases(&self, l: usize) -> Option<ArrayView1<'_, f64>> {
        self.bias.then(|| {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offsets[l] + o * i;
            ArrayView1::from(&self.params[start..start + o])
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn layer(&self, l: usize, input: &[f64], out: &mut Vec<f64>) {
        let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        let w = &self.params[start..start + ni * no];
        let act = self.activations[l];
        out.clear();
        for r in 0..no {
            let mut z: f64 = w[r * ni..(r + 1) * ni].iter().zip(input).map(|(a, b)| a * b).sum();
            if self.bias {
                z += self.params[start + ni * no + r];
            }
            out.push(act.apply(z));
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            self.layer(l, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Output and `d(output)/d(input)` as an `n_out × n_in` row-major matrix.
    pub fn jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.check_input(x)?;
        let n_in = self.n_inputs();
        let mut a = x.to_vec();
        let mut jac: Vec<Vec<f64>> = (0..n_in)
            .map(|r| (0..n_in).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            self.layer(l, &a, &mut next);
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offsets[l];
            let w = &self.params[start..start + ni * no];
            let act = self.activations[l];
            jac = (0..no)
                .map(|r| {
                    let d = act.deriv_from_output(next[r]);
                    (0..n_in)
                        .map(|c| d * (0..ni).map(|k| w[r * ni + k] * jac[k][c]).sum::<f64>())
                        .collect()
                })
                .collect();
            std::mem::swap(&mut a, &mut next);
        }
        Ok((a, jac))
    }

    /// Row-wise forward pass over an `n × n_in` batch, keeping every layer's output.
    fn forward_layers(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut outs = Vec::with_capacity(self.n_layers());
        let mut cur = x.to_owned();
        for l in 0..self.n_layers() {
            let mut z = cur.dot(&self.weights(l).t());
            if let Some(b) = self.biases(l) {
                z += &b;
            }
            let act = self.activations[l];
            z.mapv_inplace(|v| act.apply(v));
            outs.push(z.clone());
            cur = z;
        }
        outs
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.ncols(),
            });
        }
        Ok(self.forward_layers(x).pop().expect("at least one layer"))
    }

    /// Loss `mean_i 0.5 ||f(x_i) - y_i||²` and its gradient in flat parameter layout.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
        if x.ncols() != self.n_inputs() || y.ncols() != self.n_outputs() || x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.ncols(),
            });
        }
        let n = x.nrows() as f64;
        let outs = self.forward_layers(x);
        let top = outs.last().expect("at least one layer");
        let err = top - &y;
        let loss = 0.5 * err.iter().map(|e| e * e).sum::<f64>() / n;
        let mut grad = vec![0.0; self.params.len()];
        let last = self.n_layers() - 1;
        let mut delta = err / n;
        delta.zip_mut_with(top, |d, &a| *d *= self.activations[last].deriv_from_output(a));
        for l in (0..self.n_layers()).rev() {
            let input = if l == 0 { x.to_owned() } else { outs[l - 1].clone() };
            let gw = delta.t().dot(&input);
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offsets[l];
            grad[start..start + ni * no].copy_from_slice(gw.as_slice().expect("standard layout"));
            if self.bias {
                let gb: Array1<f64> = delta.sum_axis(Axis(0));
                grad[start + ni * no..start + ni * no + no].copy_from_slice(gb.as_slice().expect("contiguous"));
            }
            if l > 0 {
                let mut next = delta.dot(&self.weights(l));
                let act = self.activations[l - 1];
                next.zip_mut_with(&outs[l - 1], |d, &a| *d *= act.deriv_from_output(a));
                delta = next;
            }
        }
        Ok((loss, grad))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "layers {}", sizes.join(" "));
        let acts: Vec<&str> = self.activations.iter().map(|a| a.name()).collect();
        let _ = writeln!(out, "activations {}", acts.join(" "));
        let _ = writeln!(out, "bias {}", u8::from(self.bias));
        for l in 0..self.n_layers() {
            let _ = writeln!(out, "layer {l}");
            for row in self.weights(l).rows() {
                let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", vals.join(" "));
            }
            if let Some(b) = self.biases(l) {
                let vals: Vec<String> = b.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", vals.join(" "));
            }
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| -> Result<&str> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("network file ends before {what}")))
        };
        let tag = next("format tag")?;
        if tag != FORMAT_TAG {
            return Err(Error::Parse(format!("expected `{FORMAT_TAG}`, found `{tag}`")));
        }
        let keyed = |line: &str, key: &str| -> Result<Vec<String>> {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse(format!("expected `{key}` line, found `{line}`")));
            }
            Ok(parts.map(String::from).collect())
        };
        let sizes = keyed(next("layers")?, "layers")?
            .iter()
            .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("layer size `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let acts = keyed(next("activations")?, "activations")?
            .iter()
            .map(|s| Activation::parse(s))
            .collect::<Result<Vec<_>>>()?;
        let bias = match keyed(next("bias")?, "bias")?.as_slice() {
            [b] if b == "0" => false,
            [b] if b == "1" => true,
            other => return Err(Error::Parse(format!("bad bias flag {other:?}"))),
        };
        let mut net = Self::zeros(&sizes, &acts, bias)?;
        let parse_row = |line: &str, n: usize| -> Result<Vec<f64>> {
            let vals = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("value `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != n {
                return Err(Error::Parse(format!("expected {n} values, found {}", vals.len())));
            }
            Ok(vals)
        };
        for l in 0..net.n_layers() {
            let header = keyed(next("layer header")?, "layer")?;
            if header.first().map(String::as_str) != Some(l.to_string().as_str()) {
                return Err(Error::Parse(format!("expected layer {l}")));
            }
            let (ni, no) = (sizes[l], sizes[l + 1]);
            let start = net.offsets[l];
            for r in 0..no {
                let row = parse_row(next("weights")?, ni)?;
                net.params[start + r * ni..start + (r + 1) * ni].copy_from_slice(&row);
            }
            if bias {
                let row = parse_row(next("biases")?, no)?;
                net.params[start + ni * no..start + ni * no + no].copy_from_slice(&row);
            }
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    /// RPROP without weight backtracking; always full batch.
    Rprop {
        eta_plus: f64,
        eta_minus: f64,
        delta0: f64,
        delta_min: f64,
        delta_max: f64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn rprop() -> Self {
        Optimizer::Rprop {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta0: 0.1,
            delta_min: 1e-6,
            delta_max: 50.0,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    /// Outer repetitions of `epochs`; optimizer state carries over.
    #[serde(default = "one")]
    pub iterations: usize,
    /// Mini-batch size for Adam; `None` means full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub shuffle_seed: u64,
}

fn one() -> usize {
    1
}

enum OptState {
    Rprop { step: Vec<f64>, prev: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

/// Optimizer state bound to one network's parameter count.
pub struct Trainer {
    cfg: TrainConfig,
    state: OptState,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, net: &MlpNet) -> Result<Self> {
        let n = net.params.len();
        let state = match cfg.optimizer {
            Optimizer::Rprop {
                eta_plus,
                eta_minus,
                delta0,
                delta_min,
                delta_max,
            } => {
                if !(eta_plus > 1.0 && eta_minus > 0.0 && eta_minus < 1.0 && 0.0 < delta_min && delta_min <= delta_max)
                    || !(delta0 > 0.0)
                {
                    return Err(Error::InvalidConfig("RPROP needs eta- < 1 < eta+ and 0 < delta_min <= delta_max".into()));
                }
                OptState::Rprop {
                    step: vec![delta0; n],
                    prev: vec![0.0; n],
                }
            }
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                eps,
            } => {
                if !(learning_rate > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                    return Err(Error::InvalidConfig("Adam needs lr > 0, betas in [0, 1), eps > 0".into()));
                }
                OptState::Adam {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                    t: 0,
                }
            }
        };
        if cfg.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(Self {
            cfg,
            state,
            rng: ChaCha8Rng::seed_from_u64(cfg.shuffle_seed),
        })
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match (&mut self.state, self.cfg.optimizer) {
            (
                OptState::Rprop { step, prev },
                Optimizer::Rprop {
                    eta_plus,
                    eta_minus,
                    delta_min,
                    delta_max,
                    ..
                },
            ) => {
                for i in 0..params.len() {
                    let s = grad[i] * prev[i];
                    if s > 0.0 {
                        step[i] = (step[i] * eta_plus).min(delta_max);
                    } else if s < 0.0 {
                        step[i] = (step[i] * eta_minus).max(delta_min);
                    }
                    if grad[i] > 0.0 {
                        params[i] -= step[i];
                    } else if grad[i] < 0.0 {
                        params[i] += step[i];
                    }
                    prev[i] = grad[i];
                }
            }
            (
                OptState::Adam { m, v, t },
                Optimizer::Adam {
                    learning_rate,
                    beta1,
                    beta2,
                    eps,
                },
            ) => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..params.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
            _ => unreachable!("optimizer state matches its config"),
        }
    }

    /// Runs `epochs` epochs and returns the per-epoch mean loss (measured
    /// before each update).
    pub fn run_epochs(
        &mut self,
        net: &mut MlpNet,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        epochs: usize,
    ) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Err(Error::InvalidParameter("training set is empty".into()));
        }
        if x.nrows() != y.nrows() || x.ncols() != net.n_inputs() || y.ncols() != net.n_outputs() {
            return Err(Error::DimensionMismatch {
                expected: net.n_inputs(),
                got: x.ncols(),
            });
        }
        let n = x.nrows();
        let batch = match (self.cfg.optimizer, self.cfg.batch_size) {
            (Optimizer::Adam { .. }, Some(b)) if b < n => Some(b),
            _ => None,
        };
        let mut trace = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..epochs {
            let loss = match batch {
                None => {
                    let (loss, grad) = net.loss_and_grad(x, y)?;
                    check_loss(loss, epoch)?;
                    self.step(&mut net.params, &grad);
                    loss
                }
                Some(b) => {
                    order.shuffle(&mut self.rng);
                    let mut total = 0.0;
                    for chunk in order.chunks(b) {
                        let xb = x.select(Axis(0), chunk);
                        let yb = y.select(Axis(0), chunk);
                        let (loss, grad) = net.loss_and_grad(xb.view(), yb.view())?;
                        check_loss(loss, epoch)?;
                        self.step(&mut net.params, &grad);
                        total += loss * chunk.len() as f64;
                    }
                    total / n as f64
                }
            };
            trace.push(loss);
        }
        Ok(trace)
    }
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("training loss became {loss} at epoch {}", epoch + 1)))
    }
}

/// Trains for `iterations × epochs` epochs; returns the concatenated loss trace.
pub fn train(net: &mut MlpNet, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut trainer = Trainer::new(*cfg, net)?;
    let mut trace = Vec::with_capacity(cfg.iterations * cfg.epochs);
    for _ in 0..cfg.iterations {
        trace.extend(trainer.run_epochs(net, x, y, cfg.epochs)?);
    }
    Ok(trace)
}
