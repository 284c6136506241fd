//! A small feed-forward classifier head `p(y | h, θ)` over fixed feature
//! vectors, with exact analytic gradients with respect to both the
//! parameters (for training) and the input (for virtual adversarial
//! perturbations).
//!
//! Hidden layers use `tanh`; the output layer is linear into softmax. The
//! smooth activation keeps finite-difference gradient checks tight, which
//! the test suite leans on heavily.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{softmax, Matrix, ProbDist, PROB_FLOOR};

/// Architecture and regularization of the classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature dimension `d`.
    pub input_dim: usize,
    /// Hidden layer widths; empty means a plain linear head.
    pub hidden_dims: Vec<usize>,
    /// Number of classes `C`.
    pub num_classes: usize,
    /// Decoupled L2 weight decay coefficient (weights only, not biases).
    pub l2_weight_decay: f64,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: one 64-unit hidden layer, no weight decay.
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_dims: vec![64],
            num_classes,
            l2_weight_decay: 0.0,
            seed: 0,
        }
    }

    /// Linear head (no hidden layers).
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig { hidden_dims: vec![], ..ModelConfig::new(input_dim, num_classes) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer width must be >= 1".into()));
        }
        if !(self.l2_weight_decay >= 0.0 && self.l2_weight_decay.is_finite()) {
            return Err(Error::InvalidConfig("l2_weight_decay must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Optimization hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Seed for epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults; a small MLP head wants a much larger step than
    /// a fine-tuned transformer would.
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0,1)")));
            }
        }
        Ok(())
    }
}

/// One affine layer: `z = W·a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer { w: Matrix::zeros(out_dim, in_dim), b: vec![0.0; out_dim] }
    }
}

/// Classifier head parameters. Hidden layers first, output layer last.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// Width of the representation feeding the output layer (`d` for a
    /// linear head, else the last hidden width).
    pub fn last_hidden_width(&self) -> usize {
        self.cfg.hidden_dims.last().copied().unwrap_or(self.cfg.input_dim)
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("at least the output layer")
    }
}

/// Gradients with the same shapes as the parameters they correspond to.
pub type ParamGrads = Vec<Layer>;

fn layer_widths(cfg: &ModelConfig) -> Vec<(usize, usize)> {
    let mut widths = Vec::with_capacity(cfg.hidden_dims.len() + 1);
    let mut in_dim = cfg.input_dim;
    for &h in &cfg.hidden_dims {
        widths.push((h, in_dim));
        in_dim = h;
    }
    widths.push((cfg.num_classes, in_dim));
    widths
}

/// Initialize parameters: weights from a scaled-uniform fan-in scheme
/// `U(−1/√fan_in, 1/√fan_in)`, biases zero. Deterministic given `cfg.seed`.
pub fn init_params(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = layer_widths(cfg)
        .into_iter()
        .map(|(out_dim, in_dim)| {
            let bound = 1.0 / (in_dim as f64).sqrt();
            let w = Matrix::from_fn(out_dim, in_dim, |_, _| rng.gen_range(-bound..bound));
            Layer { w, b: vec![0.0; out_dim] }
        })
        .collect();
    Ok(ModelParams { cfg: cfg.clone(), layers })
}

fn zero_grads(params: &ModelParams) -> ParamGrads {
    layer_widths(&params.cfg)
        .into_iter()
        .map(|(out_dim, in_dim)| Layer::zeros(out_dim, in_dim))
        .collect()
}

/// Forward-pass trace: `acts[0]` is the input, `acts[i]` the output of
/// hidden layer `i`; `logits` feed softmax.
struct ForwardTrace {
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn forward(params: &ModelParams, h: &[f64]) -> Result<ForwardTrace> {
    if h.len() != params.cfg.input_dim {
        return Err(Error::DimensionMismatch { expected: params.cfg.input_dim, got: h.len() });
    }
    let n_hidden = params.layers.len() - 1;
    let mut acts = Vec::with_capacity(n_hidden + 1);
    acts.push(h.to_vec());
    for layer in &params.layers[..n_hidden] {
        let mut z = layer.w.matvec(acts.last().unwrap());
        for (zi, bi) in z.iter_mut().zip(&layer.b) {
            *zi = (*zi + bi).tanh();
        }
        acts.push(z);
    }
    let out = params.output_layer();
    let mut logits = out.w.matvec(acts.last().unwrap());
    for (li, bi) in logits.iter_mut().zip(&out.b) {
        *li += bi;
    }
    Ok(ForwardTrace { acts, logits })
}

/// Raw logits for `h` (pre-softmax).
pub fn logits(params: &ModelParams, h: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(params, h)?.logits)
}

/// The activation vector feeding the output layer; BADGE embeddings are
/// built against this representation.
pub fn output_layer_input(params: &ModelParams, h: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(params, h)?.acts.into_iter().last().unwrap())
}

/// `p(y | h, θ)`: softmax of the forward pass.
pub fn predict_proba(params: &ModelParams, h: &[f64]) -> Result<ProbDist> {
    softmax(&forward(params, h)?.logits)
}

/// Backpropagate `delta_logits` down to the input, without touching
/// parameter gradients. Returns `∂(delta_logitsᵀ·logits)/∂input` for the
/// linearized objective, i.e. the exact input gradient when `delta_logits`
/// is the gradient of the scalar objective with respect to the logits.
fn backprop_to_input(params: &ModelParams, trace: &ForwardTrace, delta_logits: &[f64]) -> Vec<f64> {
    let n_hidden = params.layers.len() - 1;
    let mut delta = params.output_layer().w.tr_matvec(delta_logits);
    for l in (0..n_hidden).rev() {
        let a = &trace.acts[l + 1];
        for (d, &ai) in delta.iter_mut().zip(a) {
            *d *= 1.0 - ai * ai;
        }
        delta = params.layers[l].w.tr_matvec(&delta);
    }
    delta
}

/// Accumulate parameter gradients for one example given the logit-level
/// gradient `delta_logits`, scaled by `scale`.
fn accumulate_param_grads(
    params: &ModelParams,
    trace: &ForwardTrace,
    delta_logits: &[f64],
    scale: f64,
    grads: &mut ParamGrads,
) {
    let mut delta = delta_logits.to_vec();
    for l in (0..params.layers.len()).rev() {
        grads[l].w.add_outer_scaled(&delta, &trace.acts[l], scale);
        for (gb, &d) in grads[l].b.iter_mut().zip(&delta) {
            *gb += d * scale;
        }
        if l == 0 {
            break;
        }
        let mut upstream = params.layers[l].w.tr_matvec(&delta);
        let a = &trace.acts[l];
        for (u, &ai) in upstream.iter_mut().zip(a) {
            *u *= 1.0 - ai * ai;
        }
        delta = upstream;
    }
}

/// Mean cross-entropy over the batch plus exact gradients, without the
/// weight-decay term.
fn ce_loss_and_grads(params: &ModelParams, batch: &[(&[f64], usize)]) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let classes = params.cfg.num_classes;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = zero_grads(params);
    let mut loss = 0.0;
    for &(h, y) in batch {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, num_classes: classes });
        }
        let trace = forward(params, h)?;
        let p = softmax(&trace.logits)?;
        loss += -p[y].max(PROB_FLOOR).ln() * scale;
        let mut delta: Vec<f64> = p.probs().to_vec();
        delta[y] -= 1.0;
        accumulate_param_grads(params, &trace, &delta, scale, &mut grads);
    }
    Ok((loss, grads))
}

/// Mean cross-entropy plus the L2 weight penalty `(λ/2)·Σ‖W‖²` (weights
/// only), with exact analytic gradients of that full objective.
pub fn loss_and_param_grads(
    params: &ModelParams,
    batch: &[(Vec<f64>, usize)],
) -> Result<(f64, ParamGrads)> {
    let refs: Vec<(&[f64], usize)> = batch.iter().map(|(h, y)| (h.as_slice(), *y)).collect();
    let (mut loss, mut grads) = ce_loss_and_grads(params, &refs)?;
    let lambda = params.cfg.l2_weight_decay;
    if lambda > 0.0 {
        for (layer, grad) in params.layers.iter().zip(&mut grads) {
            for (&w, g) in layer.w.as_slice().iter().zip(grad.w.as_mut_slice()) {
                loss += 0.5 * lambda * w * w;
                *g += lambda * w;
            }
        }
    }
    Ok((loss, grads))
}

/// Exact gradient of `D_KL(p_ref ‖ p(y | h + r, θ))` with respect to `r`,
/// with `p_ref` held constant (no gradient flows into it).
pub fn kl_input_grad(
    params: &ModelParams,
    h: &[f64],
    r: &[f64],
    p_ref: &ProbDist,
) -> Result<Vec<f64>> {
    if r.len() != h.len() {
        return Err(Error::DimensionMismatch { expected: h.len(), got: r.len() });
    }
    if p_ref.len() != params.cfg.num_classes {
        return Err(Error::LengthMismatch { left: p_ref.len(), right: params.cfg.num_classes });
    }
    let x: Vec<f64> = h.iter().zip(r).map(|(a, b)| a + b).collect();
    let trace = forward(params, &x)?;
    let q = softmax(&trace.logits)?;
    // d KL / d logits = q − p_ref
    let delta: Vec<f64> = q.probs().iter().zip(p_ref.probs()).map(|(&qc, &pc)| qc - pc).collect();
    Ok(backprop_to_input(params, &trace, &delta))
}

/// Full-dataset objective used for the per-epoch trace.
fn full_loss(params: &ModelParams, data: &[(&[f64], usize)]) -> Result<f64> {
    let (ce, _) = ce_loss_and_grads(params, data)?;
    let lambda = params.cfg.l2_weight_decay;
    let penalty: f64 = if lambda > 0.0 {
        params
            .layers
            .iter()
            .map(|l| l.w.as_slice().iter().map(|w| 0.5 * lambda * w * w).sum::<f64>())
            .sum()
    } else {
        0.0
    };
    Ok(ce + penalty)
}

struct AdamState {
    m: ParamGrads,
    v: ParamGrads,
    step: usize,
}

impl AdamState {
    fn new(params: &ModelParams) -> Self {
        AdamState { m: zero_grads(params), v: zero_grads(params), step: 0 }
    }

    /// One Adam step with decoupled weight decay applied to weight matrices.
    fn update(&mut self, params: &mut ModelParams, grads: &ParamGrads, tcfg: &TrainConfig) {
        const EPS: f64 = 1e-8;
        self.step += 1;
        let (b1, b2) = (tcfg.adam_beta1, tcfg.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr = tcfg.learning_rate;
        let decay = params.cfg.l2_weight_decay;
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let apply = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], wd: f64| {
                for i in 0..theta.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    theta[i] -= lr * (m_hat / (v_hat.sqrt() + EPS) + wd * theta[i]);
                }
            };
            apply(
                layer.w.as_mut_slice(),
                grads[l].w.as_slice(),
                self.m[l].w.as_mut_slice(),
                self.v[l].w.as_mut_slice(),
                decay,
            );
            apply(&mut layer.b, &grads[l].b, &mut self.m[l].b, &mut self.v[l].b, 0.0);
        }
    }
}

/// Train a fresh head on the labeled set and return the per-epoch
/// full-dataset loss trace alongside the parameters.
pub fn train_with_losses(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    labeled: &[(Vec<f64>, usize)],
) -> Result<(ModelParams, Vec<f64>)> {
    tcfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidConfig("empty labeled set".into()));
    }
    let mut params = init_params(cfg)?;
    let refs: Vec<(&[f64], usize)> = labeled.iter().map(|(h, y)| (h.as_slice(), *y)).collect();
    // Validate labels up front so a bad label fails before any update.
    for &(_, y) in &refs {
        if y >= cfg.num_classes {
            return Err(Error::LabelOutOfRange { label: y, num_classes: cfg.num_classes });
        }
    }

    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..refs.len()).collect();
    let mut losses = Vec::with_capacity(tcfg.epochs);
    for _ in 0..tcfg.epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| refs[i]).collect();
            let (_, grads) = ce_loss_and_grads(&params, &batch)?;
            adam.update(&mut params, &grads, tcfg);
        }
        losses.push(full_loss(&params, &refs)?);
    }
    Ok((params, losses))
}

/// Train a model from scratch: fresh `init_params`, then mini-batch Adam
/// with decoupled weight decay for `tcfg.epochs`. Deterministic given the
/// seeds in `cfg` and `tcfg`.
pub fn train(cfg: &ModelConfig, tcfg: &TrainConfig, labeled: &[(Vec<f64>, usize)]) -> Result<ModelParams> {
    train_with_losses(cfg, tcfg, labeled).map(|(params, _)| params)
}

/// Fisher-Yates shuffle driven by the given stream.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
