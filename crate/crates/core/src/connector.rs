//! Two-layer MLP connector between vision features and the language model
//! embedding space, with its training loop.
//!
//! The connector computes `y = GELU(x W1 + b1) W2 + b2` using the exact erf
//! form of GELU. All math is f64. Checkpoints are stored as f32 MSTF tensors.
//!
//! Training minimises a cosine alignment objective, `mean_i (1 - cos(y_i,
//! t_i))`. It stands in for the language-model caption loss, which needs the
//! frozen LLM. The stage structure (which groups move, which hyperparameters
//! apply) is the same as in the full pipeline.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::MultiScaleFeatures;
use crate::tensorio::{self, TensorError, TensorF32};

#[derive(Debug, Error)]
pub enum ConnectorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero-norm row {row} in {which}")]
    ZeroVector { row: usize, which: &'static str },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite parameter in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint io on {path}: {reason}")]
    Checkpoint { path: String, reason: String },
}

/// Connector weights. `w1` is `D x h`, `w2` is `h x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpParams {
    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            w1: Array2::zeros((d_in, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, d_out)),
            b2: Array1::zeros(d_out),
        }
    }

    /// Weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))` from a seeded
    /// ChaCha8 stream (W1 then W2, row-major); biases zero.
    pub fn init(d_in: usize, hidden: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let w1 = fill(d_in, hidden);
        let w2 = fill(hidden, d_out);
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.ncols()
    }

    pub fn validate(&self) -> Result<(), ConnectorError> {
        if self.b1.len() != self.hidden()
            || self.w2.nrows() != self.hidden()
            || self.b2.len() != self.d_out()
        {
            return Err(ConnectorError::ShapeMismatch(format!(
                "w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                self.w1.dim(),
                self.b1.len(),
                self.w2.dim(),
                self.b2.len()
            )));
        }
        for (name, finite) in [
            ("w1", self.w1.iter().all(|v| v.is_finite())),
            ("b1", self.b1.iter().all(|v| v.is_finite())),
            ("w2", self.w2.iter().all(|v| v.is_finite())),
            ("b2", self.b2.iter().all(|v| v.is_finite())),
        ] {
            if !finite {
                return Err(ConnectorError::NonFinite(name));
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        [
            d(self.w1.as_slice().unwrap(), other.w1.as_slice().unwrap()),
            d(self.b1.as_slice().unwrap(), other.b1.as_slice().unwrap()),
            d(self.w2.as_slice().unwrap(), other.w2.as_slice().unwrap()),
            d(self.b2.as_slice().unwrap(), other.b2.as_slice().unwrap()),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + libm::erf(z * FRAC_1_SQRT_2))
}

pub fn gelu_grad(z: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(z * FRAC_1_SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    cdf + z * pdf
}

fn check_input(x: &Array2<f64>, p: &MlpParams) -> Result<(), ConnectorError> {
    p.validate()?;
    if x.ncols() != p.d_in() {
        return Err(ConnectorError::ShapeMismatch(format!(
            "input has {} columns, connector expects {}",
            x.ncols(),
            p.d_in()
        )));
    }
    Ok(())
}

struct Activations {
    pre: Array2<f64>,
    hidden: Array2<f64>,
    out: Array2<f64>,
}

fn forward_cached(x: &Array2<f64>, p: &MlpParams) -> Activations {
    let pre = x.dot(&p.w1) + &p.b1;
    let hidden = pre.mapv(gelu);
    let out = hidden.dot(&p.w2) + &p.b2;
    Activations { pre, hidden, out }
}

/// `GELU(x W1 + b1) W2 + b2` for a batch of rows.
pub fn mlp_forward(x: &Array2<f64>, p: &MlpParams) -> Result<Array2<f64>, ConnectorError> {
    check_input(x, p)?;
    Ok(forward_cached(x, p).out)
}

fn check_pair(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(), ConnectorError> {
    if pred.dim() != target.dim() {
        return Err(ConnectorError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(ConnectorError::EmptyDataset);
    }
    for (which, m) in [("prediction", pred), ("target", target)] {
        if let Some(row) = m
            .outer_iter()
            .position(|r| r.iter().all(|&v| v == 0.0))
        {
            return Err(ConnectorError::ZeroVector { row, which });
        }
    }
    Ok(())
}

/// Mean over rows of `1 - cos(pred_i, target_i)`; always in [0, 2].
pub fn alignment_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64, ConnectorError> {
    Ok(alignment_loss_grad(pred, target)?.0)
}

/// Loss together with its gradient with respect to `pred`.
pub fn alignment_loss_grad(
    pred: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<(f64, Array2<f64>), ConnectorError> {
    check_pair(pred, target)?;
    let n = pred.nrows() as f64;
    let mut grad = Array2::zeros(pred.dim());
    let mut loss = 0.0;
    for ((p, t), mut g) in pred
        .outer_iter()
        .zip(target.outer_iter())
        .zip(grad.outer_iter_mut())
    {
        let pn = p.dot(&p).sqrt();
        let tn = t.dot(&t).sqrt();
        let cos = (p.dot(&t) / (pn * tn)).clamp(-1.0, 1.0);
        loss += 1.0 - cos;
        // d(1 - cos)/dp = -(t / (|p||t|) - cos * p / |p|^2) / n
        for ((gk, &pk), &tk) in g.iter_mut().zip(p).zip(t) {
            *gk = -(tk / (pn * tn) - cos * pk / (pn * pn)) / n;
        }
    }
    Ok((loss / n, grad))
}

/// Analytic gradients of `alignment_loss(mlp_forward(x), target)`.
/// Returns the loss and the gradients laid out like `MlpParams`.
pub fn mlp_backward(
    x: &Array2<f64>,
    target: &Array2<f64>,
    p: &MlpParams,
) -> Result<(f64, MlpParams), ConnectorError> {
    check_input(x, p)?;
    let acts = forward_cached(x, p);
    let (loss, d_out) = alignment_loss_grad(&acts.out, target)?;
    let w2 = acts.hidden.t().dot(&d_out);
    let b2 = d_out.sum_axis(Axis(0));
    let d_hidden = d_out.dot(&p.w2.t());
    let d_pre = d_hidden * acts.pre.mapv(gelu_grad);
    let w1 = x.t().dot(&d_pre);
    let b1 = d_pre.sum_axis(Axis(0));
    Ok((loss, MlpParams { w1, b1, w2, b2 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    ConnectorPretrain,
    InstructFinetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Schedule {
    #[default]
    WarmupCosine,
}

/// How weight decay enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DecayMode {
    /// AdamW: parameters shrink by `lr * decay` outside the adaptive step.
    #[default]
    Decoupled,
    /// Classic Adam with an L2 term folded into the gradient.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub learning_rate: f64,
    pub global_batch: usize,
    pub epochs: usize,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub decay_mode: DecayMode,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl TrainConfig {
    /// Stage 1: connector-only alignment.
    pub fn pretrain() -> Self {
        Self {
            stage: Stage::ConnectorPretrain,
            learning_rate: 1e-3,
            global_batch: 256,
            epochs: 1,
            warmup_ratio: 0.03,
            weight_decay: 0.0,
            schedule: Schedule::WarmupCosine,
            seed: 0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            decay_mode: DecayMode::Decoupled,
        }
    }

    /// Stage 2: instruction tuning.
    pub fn finetune() -> Self {
        Self {
            stage: Stage::InstructFinetune,
            learning_rate: 2e-5,
            global_batch: 128,
            ..Self::pretrain()
        }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::ConnectorPretrain => Self::pretrain(),
            Stage::InstructFinetune => Self::finetune(),
        }
    }

    pub fn validate(&self) -> Result<(), ConnectorError> {
        let bad = |m: &str| Err(ConnectorError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.global_batch == 0 {
            return bad("global_batch must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must be in [0, 1]");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("eps must be positive");
        }
        Ok(())
    }

    /// `round(warmup_ratio * total)`, at least 1 and at most `total`.
    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        ((self.warmup_ratio * total_steps as f64).round() as usize).clamp(1, total_steps.max(1))
    }
}

/// Learning rate for the update at `step` (0-based) of `total_steps`.
///
/// Linear warmup `lr * (step + 1) / warmup` followed by cosine decay
/// `lr * 0.5 * (1 + cos(pi * (step - warmup) / (total - warmup)))`, which
/// hits exactly `lr` at `step == warmup` and 0 at `step == total`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let total = total_steps.max(1);
    let step = step.min(total);
    let warmup = cfg.warmup_steps(total);
    let lr = cfg.learning_rate;
    if step < warmup {
        return lr * (step + 1) as f64 / warmup as f64;
    }
    let decay = total - warmup;
    if decay == 0 {
        return 0.0;
    }
    let progress = (step - warmup) as f64 / decay as f64;
    lr * 0.5 * (1.0 + (PI * progress).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    VisionEncoder,
    ConnectorFc1,
    ConnectorFc2,
    LanguageModel,
}

/// Which parameter groups receive updates. `true` means trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub vision_encoder: bool,
    pub connector_fc1: bool,
    pub connector_fc2: bool,
    pub language_model: bool,
}

impl FreezeMask {
    /// Stage 1 trains the connector only; stage 2 also unfreezes the
    /// language model. The vision encoder stays frozen in both.
    pub fn for_stage(stage: Stage) -> Self {
        Self {
            vision_encoder: false,
            connector_fc1: true,
            connector_fc2: true,
            language_model: stage == Stage::InstructFinetune,
        }
    }

    pub fn all_frozen() -> Self {
        Self {
            vision_encoder: false,
            connector_fc1: false,
            connector_fc2: false,
            language_model: false,
        }
    }

    pub fn is_trainable(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::VisionEncoder => self.vision_encoder,
            ParamGroup::ConnectorFc1 => self.connector_fc1,
            ParamGroup::ConnectorFc2 => self.connector_fc2,
            ParamGroup::LanguageModel => self.language_model,
        }
    }

    pub fn validate(&self) -> Result<(), ConnectorError> {
        if self.vision_encoder {
            return Err(ConnectorError::InvalidConfig(
                "the vision encoder must stay frozen".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub trace: Vec<TraceRow>,
}

impl TrainOutcome {
    pub fn steps(&self) -> usize {
        self.trace.len()
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

struct AdamState {
    t: i32,
    w1: Moments,
    b1: Moments,
    w2: Moments,
    b2: Moments,
}

// One Adam/AdamW update of a single tensor. `decay` is zero for biases.
#[allow(clippy::too_many_arguments)]
fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    st: &mut Moments,
    cfg: &TrainConfig,
    lr: f64,
    t: i32,
    decay: f64,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let step_size = lr / bc1;
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad)
        .zip(st.m.iter_mut())
        .zip(st.v.iter_mut())
    {
        let g = match cfg.decay_mode {
            DecayMode::L2 => g + decay * *p,
            DecayMode::Decoupled => {
                *p *= 1.0 - lr * decay;
                g
            }
        };
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let denom = v.sqrt() / bc2.sqrt() + cfg.eps;
        *p -= step_size * *m / denom;
    }
}

/// Number of optimizer steps one run performs: `epochs * ceil(n / batch)`.
pub fn total_steps(n: usize, cfg: &TrainConfig) -> usize {
    cfg.epochs * n.div_ceil(cfg.global_batch)
}

/// Mini-batch AdamW over seeded per-epoch shuffles. The final batch of an
/// epoch may be short. Frozen groups are never written.
pub fn train_stage(
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    cfg: &TrainConfig,
    mask: &FreezeMask,
    p0: &MlpParams,
) -> Result<TrainOutcome, ConnectorError> {
    cfg.validate()?;
    mask.validate()?;
    check_input(inputs, p0)?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(ConnectorError::EmptyDataset);
    }
    if targets.nrows() != n || targets.ncols() != p0.d_out() {
        return Err(ConnectorError::ShapeMismatch(format!(
            "targets {:?} for {} inputs and output width {}",
            targets.dim(),
            n,
            p0.d_out()
        )));
    }
    if cfg.global_batch > n {
        return Err(ConnectorError::InvalidConfig(format!(
            "global_batch {} exceeds dataset size {n}",
            cfg.global_batch
        )));
    }

    let mut params = p0.clone();
    let total = total_steps(n, cfg);
    let fc1 = mask.is_trainable(ParamGroup::ConnectorFc1);
    let fc2 = mask.is_trainable(ParamGroup::ConnectorFc2);
    let mut state = AdamState {
        t: 0,
        w1: Moments::new(params.w1.len()),
        b1: Moments::new(params.b1.len()),
        w2: Moments::new(params.w2.len()),
        b2: Moments::new(params.b2.len()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(total);
    let mut step = 0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.global_batch) {
            let xb = inputs.select(Axis(0), batch);
            let yb = targets.select(Axis(0), batch);
            let (loss, grads) = mlp_backward(&xb, &yb, &params)?;
            let lr = lr_at(step, total, cfg);
            trace.push(TraceRow { step, lr, loss });
            state.t += 1;
            let t = state.t;
            let wd = cfg.weight_decay;
            if fc1 {
                adam_update(
                    params.w1.as_slice_mut().unwrap(),
                    grads.w1.as_slice().unwrap(),
                    &mut state.w1,
                    cfg,
                    lr,
                    t,
                    wd,
                );
                adam_update(
                    params.b1.as_slice_mut().unwrap(),
                    grads.b1.as_slice().unwrap(),
                    &mut state.b1,
                    cfg,
                    lr,
                    t,
                    0.0,
                );
            }
            if fc2 {
                adam_update(
                    params.w2.as_slice_mut().unwrap(),
                    grads.w2.as_slice().unwrap(),
                    &mut state.w2,
                    cfg,
                    lr,
                    t,
                    wd,
                );
                adam_update(
                    params.b2.as_slice_mut().unwrap(),
                    grads.b2.as_slice().unwrap(),
                    &mut state.b2,
                    cfg,
                    lr,
                    t,
                    0.0,
                );
            }
            step += 1;
        }
    }
    Ok(TrainOutcome { params, trace })
}

/// Token rows of a multi-scale feature map: `g*g` rows of `dim_total`.
pub fn feature_rows(ms: &MultiScaleFeatures) -> Array2<f64> {
    Array2::from_shape_fn((ms.g * ms.g, ms.dim_total), |(r, c)| {
        ms.values[r * ms.dim_total + c] as f64
    })
}

/// Interprets an MSTF tensor as a row matrix: `[n, d]` as is, `[h, w, d]`
/// as `h*w` rows.
pub fn tensor_rows(t: &TensorF32) -> Result<Array2<f64>, ConnectorError> {
    let (rows, cols) = match *t.dims() {
        [n, d] => (n, d),
        [h, w, d] => (h * w, d),
        _ => {
            return Err(ConnectorError::ShapeMismatch(format!(
                "expected [n, d] or [h, w, d], got {:?}",
                t.dims()
            )))
        }
    };
    let data: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
}

pub fn rows_tensor(m: &Array2<f64>) -> Result<TensorF32, ConnectorError> {
    Ok(TensorF32::new(
        vec![m.nrows(), m.ncols()],
        m.iter().map(|&v| v as f32).collect(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub shapes: CheckpointShapes,
    pub seed: u64,
    pub stage: Stage,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointShapes {
    pub w1: [usize; 2],
    pub b1: [usize; 1],
    pub w2: [usize; 2],
    pub b2: [usize; 1],
}

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";

impl CheckpointShapes {
    pub fn of(p: &MlpParams) -> Self {
        Self {
            w1: [p.d_in(), p.hidden()],
            b1: [p.hidden()],
            w2: [p.hidden(), p.d_out()],
            b2: [p.d_out()],
        }
    }
}

fn ckpt_err(path: &Path, e: impl ToString) -> ConnectorError {
    ConnectorError::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Writes `w1.mstf`, `b1.mstf`, `w2.mstf`, `b2.mstf` and `manifest.json`
/// into `dir`. Values are narrowed to f32.
pub fn save_checkpoint(
    dir: &Path,
    p: &MlpParams,
    seed: u64,
    stage: Stage,
    step: usize,
) -> Result<CheckpointManifest, ConnectorError> {
    fs::create_dir_all(dir).map_err(|e| ckpt_err(dir, e))?;
    let t = |dims: Vec<usize>, data: &[f64]| {
        TensorF32::new(dims, data.iter().map(|&v| v as f32).collect())
    };
    tensorio::write_mstf(dir.join("w1.mstf"), &t(vec![p.d_in(), p.hidden()], p.w1.as_slice().unwrap())?)?;
    tensorio::write_mstf(dir.join("b1.mstf"), &t(vec![p.hidden()], p.b1.as_slice().unwrap())?)?;
    tensorio::write_mstf(dir.join("w2.mstf"), &t(vec![p.hidden(), p.d_out()], p.w2.as_slice().unwrap())?)?;
    tensorio::write_mstf(dir.join("b2.mstf"), &t(vec![p.d_out()], p.b2.as_slice().unwrap())?)?;
    let manifest = CheckpointManifest {
        shapes: CheckpointShapes::of(p),
        seed,
        stage,
        step,
    };
    let path = dir.join(CHECKPOINT_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| ckpt_err(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| ckpt_err(&path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(MlpParams, CheckpointManifest), ConnectorError> {
    let path = dir.join(CHECKPOINT_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| ckpt_err(&path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| ckpt_err(&path, e))?;
    let load = |name: &str, dims: &[usize]| -> Result<Vec<f64>, ConnectorError> {
        let t = tensorio::read_mstf(dir.join(name))?;
        if t.dims() != dims {
            return Err(ConnectorError::ShapeMismatch(format!(
                "{name}: manifest says {dims:?}, file has {:?}",
                t.dims()
            )));
        }
        Ok(t.data().iter().map(|&v| v as f64).collect())
    };
    let s = &manifest.shapes;
    let p = MlpParams {
        w1: Array2::from_shape_vec((s.w1[0], s.w1[1]), load("w1.mstf", &s.w1)?).unwrap(),
        b1: Array1::from_vec(load("b1.mstf", &s.b1)?),
        w2: Array2::from_shape_vec((s.w2[0], s.w2[1]), load("w2.mstf", &s.w2)?).unwrap(),
        b2: Array1::from_vec(load("b2.mstf", &s.b2)?),
    };
    p.validate()?;
    Ok((p, manifest))
}

/// Loss trace as CSV with header `step,lr,loss`.
pub fn write_loss_csv<W: std::io::Write>(w: W, trace: &[TraceRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in trace {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
