//! Elastic-net loss, AMSGrad and the mini-batch training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::PoseDataset;
use crate::error::{ModelError, TensorError, TrainError};
use crate::metrics;
use crate::model::{ForwardMode, MgtNet};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// How the per-joint error terms are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossReduction {
    /// Sum over joints, mean over poses.
    #[default]
    PerPose,
    /// Mean over joints and poses.
    PerJoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub reduction: LossReduction,
}

impl TrainConfig {
    /// Optimisation settings used for full-scale training.
    pub fn paper_default() -> Self {
        Self {
            alpha: 0.01,
            lr0: 0.005,
            decay: 0.9,
            decay_every: 4,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            reduction: LossReduction::PerPose,
        }
    }

    /// Desk-scale runs on a few dozen samples: small batches and a slower
    /// decay, since an epoch is only a handful of steps.
    pub fn toy() -> Self {
        Self {
            batch_size: 2,
            decay_every: 40,
            epochs: 300,
            ..Self::paper_default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} must lie in [0, 1]", self.alpha));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 = {} must be positive", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay = {} must lie in (0, 1]", self.decay));
        }
        if self.decay_every == 0 {
            return bad("decay_every must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}

/// `lr0 · decay^⌊epoch / decay_every⌋` for a zero-based epoch.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr0 * cfg.decay.powi((epoch / cfg.decay_every.max(1)) as i32)
}

fn check_alpha(alpha: f64) -> Result<(), TensorError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(TensorError::Contract(format!("loss mix alpha = {alpha} outside [0, 1]")))
    }
}

fn pose_count(shape: &[usize]) -> Result<(usize, usize), TensorError> {
    match shape {
        [b, n, 3] => Ok((*b, *n)),
        _ => Err(TensorError::Rank {
            op: "elastic_loss",
            expected: 3,
            shape: shape.to_vec(),
        }),
    }
}

/// `(1-α)·mean_b Σ_j ‖y-ŷ‖₂² + α·mean_b Σ_j ‖y-ŷ‖₁` over `B×N×3` batches.
pub fn elastic_loss(tape: &mut Tape, pred: Var, target: Var, alpha: f64) -> Result<Var, TensorError> {
    elastic_loss_with(tape, pred, target, alpha, LossReduction::PerPose)
}

pub fn elastic_loss_with(
    tape: &mut Tape,
    pred: Var,
    target: Var,
    alpha: f64,
    reduction: LossReduction,
) -> Result<Var, TensorError> {
    check_alpha(alpha)?;
    let (b, n) = pose_count(tape.shape(pred))?;
    let diff = tape.sub(pred, target)?;
    let denom = match reduction {
        LossReduction::PerPose => b as f64,
        LossReduction::PerJoint => (b * n) as f64,
    };
    let sq = tape.mul(diff, diff)?;
    let sq = tape.sum(sq);
    let sq = tape.scale(sq, (1.0 - alpha) / denom);
    let ab = tape.abs(diff);
    let ab = tape.sum(ab);
    let ab = tape.scale(ab, alpha / denom);
    tape.add(sq, ab)
}

/// Value of [`elastic_loss`] for plain tensors.
pub fn elastic_loss_value(pred: &Tensor, target: &Tensor, alpha: f64) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let t = tape.constant(target.clone());
    let l = elastic_loss(&mut tape, p, t, alpha)?;
    Ok(tape.scalar(l))
}

/// AMSGrad moment buffers in the bias-corrected form.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGradState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub v_max: Vec<Vec<f64>>,
    pub step: u64,
}

impl AmsGradState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect::<Vec<_>>();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            v_max: zeros(),
            step: 0,
        }
    }

    /// Applies one update from the gradients accumulated in `params`.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) -> Result<(), TrainError> {
        for id in params.ids() {
            let finite = params
                .get(id)
                .grad()
                .is_none_or(|g| g.iter().all(|x| x.is_finite()));
            if !finite {
                return Err(TrainError::NonFiniteGradient {
                    name: params.name(id).to_string(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let step_size = lr / bc1;
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let grad = match p.grad() {
                Some(g) => g.to_vec(),
                None => continue,
            };
            let (m, v, vm) = (&mut self.m[i], &mut self.v[i], &mut self.v_max[i]);
            for (k, (x, g)) in p.data_mut().iter_mut().zip(&grad).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                vm[k] = vm[k].max(v[k]);
                let denom = (vm[k] / bc2).sqrt() + self.eps;
                *x -= step_size * m[k] / denom;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    /// One-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub eval_mpjpe: f64,
    pub eval_pa_mpjpe: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,eval_mpjpe,eval_pa_mpjpe";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.lr, r.train_loss, r.eval_mpjpe, r.eval_pa_mpjpe
            );
        }
        out
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }
}

/// Mean MPJPE and PA-MPJPE of `net` over `ds` in evaluation mode.
pub fn evaluate(net: &MgtNet, ds: &PoseDataset) -> Result<(f64, f64), TrainError> {
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut m = 0.0;
    let mut pa = 0.0;
    for s in ds.samples() {
        let pred = net.predict(&s.input)?;
        m += metrics::mpjpe(&pred, &s.target)?;
        pa += metrics::pa_mpjpe(&pred, &s.target)?;
    }
    let n = ds.len() as f64;
    Ok((m / n, pa / n))
}

fn check_shapes(net: &MgtNet, ds: &PoseDataset) -> Result<(), TrainError> {
    let cfg = net.config();
    if ds.joints() != cfg.joints || ds.frames() != cfg.frames {
        return Err(TrainError::Config(format!(
            "dataset has N={}, T={} but the model expects N={}, T={}",
            ds.joints(),
            ds.frames(),
            cfg.joints,
            cfg.frames
        )));
    }
    Ok(())
}

/// Mini-batch training with seeded shuffling and AMSGrad. Evaluation runs on
/// `eval` after every epoch, or on the training set when `eval` is `None`.
pub fn train(
    net: &mut MgtNet,
    data: &PoseDataset,
    eval: Option<&PoseDataset>,
    cfg: &TrainConfig,
) -> Result<History, TrainError> {
    train_with(net, data, eval, cfg, |_| {})
}

/// [`train`] with a callback invoked after each epoch's history row.
pub fn train_with(
    net: &mut MgtNet,
    data: &PoseDataset,
    eval: Option<&PoseDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<History, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let eval = eval.unwrap_or(data);
    check_shapes(net, data)?;
    check_shapes(net, eval)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut opt = AmsGradState::new(net.params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |loss: f64| TrainError::Diverged {
                epoch: epoch + 1,
                batch: batch + 1,
                loss,
            };
            let mut tape = Tape::new();
            let params = net.params().bind(&mut tape);
            let mut mode = ForwardMode::Train(&mut dropout_rng);
            let mut preds = Vec::with_capacity(idx.len());
            let mut targets = Vec::with_capacity(idx.len());
            for &i in idx {
                let s = &data.samples()[i];
                match net.forward(&mut tape, &params, &s.input, &mut mode) {
                    Ok(p) => preds.push(p),
                    Err(ModelError::NonFinite { .. }) => return Err(diverged(f64::NAN)),
                    Err(e) => return Err(e.into()),
                }
                targets.push(tape.constant(s.target.clone()));
            }
            let pred = tape.stack(&preds)?;
            let target = tape.stack(&targets)?;
            let loss = elastic_loss_with(&mut tape, pred, target, cfg.alpha, cfg.reduction)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(diverged(value));
            }
            tape.backward(loss)?;
            net.params_mut().zero_grad();
            net.params_mut().collect_grads(&tape, &params);
            opt.step(net.params_mut(), lr)?;
            total += value * idx.len() as f64;
        }
        let (eval_mpjpe, eval_pa_mpjpe) = match evaluate(net, eval) {
            Err(TrainError::Model(ModelError::NonFinite { .. })) => {
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    batch: order.len().div_ceil(cfg.batch_size),
                    loss: f64::NAN,
                })
            }
            r => r?,
        };
        let row = HistoryRow {
            epoch: epoch + 1,
            lr,
            train_loss: total / data.len() as f64,
            eval_mpjpe,
            eval_pa_mpjpe,
        };
        log::info!(
            "epoch {:>3}  lr {:.6}  loss {:.6}  mpjpe {:.6}  pa-mpjpe {:.6}",
            row.epoch,
            row.lr,
            row.train_loss,
            row.eval_mpjpe,
            row.eval_pa_mpjpe
        );
        on_epoch(&row);
        history.rows.push(row);
    }
    Ok(history)
}
