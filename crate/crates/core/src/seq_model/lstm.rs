use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};

const CHECKPOINT_FORMAT: &str = "msgraph-lstm";
const CHECKPOINT_VERSION: u32 = 1;

/// Layer sizes derived from a config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub features: usize,
    pub units1: usize,
    pub units2: usize,
    pub steps: usize,
}

// Offsets of one recurrent layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
struct Layer {
    input: usize,
    hidden: usize,
    w: usize,
    b: usize,
}

impl Layer {
    fn width(&self) -> usize {
        self.input + self.hidden
    }
}

impl Arch {
    pub fn from_config(config: &ModelConfig) -> Arch {
        Arch { features: config.features, units1: config.input_units, units2: config.hidden_units, steps: config.lookback }
    }

    /// Tensor names and shapes in storage order. Recurrent weights are
    /// `[4 * units, inputs + units]` with gate rows ordered input, forget,
    /// candidate, output; the row multiplies `[x_t; h_{t-1}]`.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (f, u1, u2) = (self.features, self.units1, self.units2);
        vec![
            ("lstm1.weight", vec![4 * u1, f + u1]),
            ("lstm1.bias", vec![4 * u1]),
            ("lstm2.weight", vec![4 * u2, u1 + u2]),
            ("lstm2.bias", vec![4 * u2]),
            ("dense.weight", vec![1, u2]),
            ("dense.bias", vec![1]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    fn layers(&self) -> (Layer, Layer, usize) {
        let (f, u1, u2) = (self.features, self.units1, self.units2);
        let l1 = Layer { input: f, hidden: u1, w: 0, b: 4 * u1 * (f + u1) };
        let w2 = l1.b + 4 * u1;
        let l2 = Layer { input: u1, hidden: u2, w: w2, b: w2 + 4 * u2 * (u1 + u2) };
        (l1, l2, l2.b + 4 * u2)
    }
}

/// Inverted-dropout multipliers: 0 or `1 / (1 - rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Masks {
    /// One per first-layer output, timestep-major.
    pub layer1: Vec<f64>,
    /// One per unit of the final second-layer state.
    pub layer2: Vec<f64>,
}

// Per-timestep activations of one layer, all flattened timestep-major.
#[derive(Clone, Debug)]
struct Trace {
    z: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    l1: Trace,
    l2: Trace,
    dense_in: Vec<f64>,
    masks: Option<Masks>,
    logit: f64,
}

impl ForwardCache {
    pub fn logit(&self) -> f64 {
        self.logit
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.logit)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, computed
/// without forming the probability.
pub(crate) fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn layer_forward(params: &[f64], l: Layer, xs: &[f64], steps: usize) -> Trace {
    let (n_in, h, zw) = (l.input, l.hidden, l.width());
    let w = &params[l.w..l.w + 4 * h * zw];
    let b = &params[l.b..l.b + 4 * h];
    let mut tr = Trace {
        z: vec![0.0; steps * zw],
        gates: vec![0.0; steps * 4 * h],
        c: vec![0.0; steps * h],
        tc: vec![0.0; steps * h],
        h: vec![0.0; steps * h],
    };
    for t in 0..steps {
        let z = &mut tr.z[t * zw..(t + 1) * zw];
        z[..n_in].copy_from_slice(&xs[t * n_in..(t + 1) * n_in]);
        if t > 0 {
            z[n_in..].copy_from_slice(&tr.h[(t - 1) * h..t * h]);
        }
        let g = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for (r, slot) in g.iter_mut().enumerate() {
            let a = b[r] + dot(&w[r * zw..(r + 1) * zw], z);
            *slot = if (2 * h..3 * h).contains(&r) { a.tanh() } else { sigmoid(a) };
        }
        for k in 0..h {
            let c_prev = if t > 0 { tr.c[(t - 1) * h + k] } else { 0.0 };
            let (i, f, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let c = f * c_prev + i * cand;
            let tc = c.tanh();
            tr.c[t * h + k] = c;
            tr.tc[t * h + k] = tc;
            tr.h[t * h + k] = o * tc;
        }
    }
    tr
}

// Accumulates parameter gradients of one layer into `grads` and returns the
// gradient with respect to the layer's inputs.
fn layer_backward(params: &[f64], l: Layer, tr: &Trace, dh_out: &[f64], steps: usize, grads: &mut [f64]) -> Vec<f64> {
    let (n_in, h, zw) = (l.input, l.hidden, l.width());
    let w = &params[l.w..l.w + 4 * h * zw];
    let mut dx = vec![0.0; steps * n_in];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    let mut dz = vec![0.0; zw];
    for t in (0..steps).rev() {
        let g = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let (i, f, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let tc = tr.tc[t * h + k];
            let c_prev = if t > 0 { tr.c[(t - 1) * h + k] } else { 0.0 };
            let dh = dh_out[t * h + k] + dh_next[k];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            da[k] = dc * cand * i * (1.0 - i);
            da[h + k] = dc * c_prev * f * (1.0 - f);
            da[2 * h + k] = dc * i * (1.0 - cand * cand);
            da[3 * h + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let z = &tr.z[t * zw..(t + 1) * zw];
        dz.fill(0.0);
        for (r, &d) in da.iter().enumerate() {
            let row = l.w + r * zw;
            for (gw, &zv) in grads[row..row + zw].iter_mut().zip(z) {
                *gw += d * zv;
            }
            grads[l.b + r] += d;
            for (acc, &wv) in dz.iter_mut().zip(&w[r * zw..(r + 1) * zw]) {
                *acc += d * wv;
            }
        }
        dx[t * n_in..(t + 1) * n_in].copy_from_slice(&dz[..n_in]);
        dh_next.copy_from_slice(&dz[n_in..]);
    }
    dx
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel {
    config: ModelConfig,
    arch: Arch,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    tensors: Vec<Tensor>,
}

impl LstmModel {
    /// Glorot-uniform weights, zero biases except the forget gates at 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<LstmModel, ModelError> {
        let mut model = LstmModel::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l1, l2, dense) = model.arch.layers();
        for l in [l1, l2] {
            let limit = (6.0 / (l.width() + 4 * l.hidden) as f64).sqrt();
            for p in &mut model.params[l.w..l.b] {
                *p = rng.random_range(-limit..limit);
            }
            model.params[l.b + l.hidden..l.b + 2 * l.hidden].fill(1.0);
        }
        let limit = (6.0 / (l2.hidden + 1) as f64).sqrt();
        for p in &mut model.params[dense..dense + l2.hidden] {
            *p = rng.random_range(-limit..limit);
        }
        Ok(model)
    }

    pub fn zeros(config: ModelConfig) -> Result<LstmModel, ModelError> {
        config.validate()?;
        let arch = Arch::from_config(&config);
        Ok(LstmModel { params: vec![0.0; arch.param_count()], config, arch })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.arch.steps * self.arch.features
    }

    pub fn check_input(&self, sequence: &[f64]) -> Result<(), ModelError> {
        if sequence.len() != self.input_len() {
            return Err(ModelError::SequenceLength { expected: self.input_len(), got: sequence.len() });
        }
        if sequence.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        Ok(())
    }

    /// Draws fresh dropout masks at the configured rate.
    pub fn sample_masks<R: Rng + ?Sized>(&self, rng: &mut R) -> Masks {
        let keep = 1.0 - self.config.dropout_rate;
        let scale = 1.0 / keep;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 }).collect() };
        let layer1 = draw(self.arch.steps * self.arch.units1);
        let layer2 = draw(self.arch.units2);
        Masks { layer1, layer2 }
    }

    /// Probability that `sequence` comes from injected traffic. With
    /// `training` set, dropout masks are drawn from `rng`.
    pub fn forward<R: Rng + ?Sized>(&self, sequence: &[f64], training: bool, rng: &mut R) -> Result<f64, ModelError> {
        self.check_input(sequence)?;
        let masks = (training && self.config.dropout_rate > 0.0).then(|| self.sample_masks(rng));
        Ok(self.forward_cached(sequence, masks).probability())
    }

    /// Inference without dropout.
    pub fn probability(&self, sequence: &[f64]) -> Result<f64, ModelError> {
        self.check_input(sequence)?;
        Ok(self.forward_cached(sequence, None).probability())
    }

    /// Forward pass keeping activations. The input must already have passed
    /// [`check_input`](Self::check_input).
    pub fn forward_cached(&self, sequence: &[f64], masks: Option<Masks>) -> ForwardCache {
        let (l1, l2, dense) = self.arch.layers();
        let steps = self.arch.steps;
        let t1 = layer_forward(&self.params, l1, sequence, steps);
        let dropped: Vec<f64> = match &masks {
            Some(m) => t1.h.iter().zip(&m.layer1).map(|(h, k)| h * k).collect(),
            None => t1.h.clone(),
        };
        let t2 = layer_forward(&self.params, l2, &dropped, steps);
        let last = &t2.h[(steps - 1) * l2.hidden..];
        let dense_in: Vec<f64> = match &masks {
            Some(m) => last.iter().zip(&m.layer2).map(|(h, k)| h * k).collect(),
            None => last.to_vec(),
        };
        let logit = self.params[dense + l2.hidden] + dot(&self.params[dense..dense + l2.hidden], &dense_in);
        ForwardCache { l1: t1, l2: t2, dense_in, masks, logit }
    }

    /// Adds the gradient of the cross-entropy loss against `target` to
    /// `grads` and returns the loss.
    pub fn backward(&self, cache: &ForwardCache, target: f64, grads: &mut [f64]) -> f64 {
        let (l1, l2, dense) = self.arch.layers();
        let (steps, h2) = (self.arch.steps, l2.hidden);
        let dlogit = cache.probability() - target;
        for k in 0..h2 {
            grads[dense + k] += dlogit * cache.dense_in[k];
        }
        grads[dense + h2] += dlogit;

        let mut dh2 = vec![0.0; steps * h2];
        for k in 0..h2 {
            let keep = cache.masks.as_ref().map_or(1.0, |m| m.layer2[k]);
            dh2[(steps - 1) * h2 + k] = dlogit * self.params[dense + k] * keep;
        }
        let mut dh1 = layer_backward(&self.params, l2, &cache.l2, &dh2, steps, grads);
        if let Some(m) = &cache.masks {
            for (d, k) in dh1.iter_mut().zip(&m.layer1) {
                *d *= k;
            }
        }
        layer_backward(&self.params, l1, &cache.l1, &dh1, steps, grads);
        bce_with_logit(cache.logit, target)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let mut offset = 0;
        let tensors = self
            .arch
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = self.params[offset..offset + n].to_vec();
                offset += n;
                Tensor { name: name.to_string(), shape, data }
            })
            .collect();
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors,
        };
        Ok(serde_json::to_string_pretty(&cp)?)
    }

    pub fn from_json(text: &str) -> Result<LstmModel, ModelError> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        let bad = |m: String| Err(ModelError::Checkpoint(m));
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return bad(format!("unsupported format {} v{}", cp.format, cp.version));
        }
        let mut model = LstmModel::zeros(cp.config)?;
        let expected = model.arch.tensor_shapes();
        if cp.tensors.len() != expected.len() {
            return bad(format!("expected {} tensors, found {}", expected.len(), cp.tensors.len()));
        }
        let mut offset = 0;
        for (t, (name, shape)) in cp.tensors.iter().zip(expected) {
            if t.name != name || t.shape != shape {
                return bad(format!("tensor {} {:?} does not match expected {} {:?}", t.name, t.shape, name, shape));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return bad(format!("tensor {} holds {} values for shape {:?}", t.name, t.data.len(), t.shape));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return bad(format!("tensor {} has non-finite values", t.name));
            }
            model.params[offset..offset + t.data.len()].copy_from_slice(&t.data);
            offset += t.data.len();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<LstmModel, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        LstmModel::from_json(&text)
    }
}
